use std::f64::consts::{E, PI};

use nalgebra::DMatrix;

use super::InfoEstimate;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::Model;

/// ½ log det(2πe Σ).
pub fn gaussian_entropy(cov: &DMatrix<f64>) -> Result<InfoEstimate> {
    let d = cov.nrows();
    if d == 0 || cov.ncols() != d {
        return Err(Error::Structural("covariance must be square with dimension ≥ 1".into()));
    }
    let ld = linalg::logdet_psd(cov)?;
    if ld == f64::NEG_INFINITY {
        return Err(Error::Degenerate("singular covariance: entropy is −∞".into()));
    }
    Ok(InfoEstimate::analytic("entropy", 0.5 * (d as f64 * (2.0 * PI * E).ln() + ld)))
}

/// A jointly Gaussian vector described by its covariance; blocks are index sets.
#[derive(Debug, Clone)]
pub struct JointGaussian {
    pub cov: DMatrix<f64>,
}

fn pinv_psd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = linalg::symmetrize(m).cholesky() {
        return Ok(c.inverse());
    }
    let e = linalg::sym_eigen(m)?;
    let top = e.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let inv = e.values.map(|v| if v > 1e-12 * top { 1.0 / v } else { 0.0 });
    Ok(&e.vectors * DMatrix::from_diagonal(&inv) * e.vectors.transpose())
}

impl JointGaussian {
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != cov.ncols() {
            return Err(Error::Structural("covariance must be square".into()));
        }
        let asym = (&cov - cov.transpose()).abs().max();
        if asym > 1e-8 * (1.0 + cov.abs().max()) {
            return Err(Error::Domain("covariance is not symmetric".into()));
        }
        Ok(Self { cov: linalg::symmetrize(&cov) })
    }

    /// Variables [θ, y_1, …, y_K] with y_k = X_k θ + σ ε_k.
    pub fn linear(prior_cov: &DMatrix<f64>, designs: &[DMatrix<f64>], noise_sd: f64) -> Self {
        let p = prior_cov.nrows();
        let sizes: Vec<usize> = designs.iter().map(|x| x.nrows()).collect();
        let total = p + sizes.iter().sum::<usize>();
        let mut c = DMatrix::zeros(total, total);
        c.view_mut((0, 0), (p, p)).copy_from(prior_cov);
        let mut off = Vec::with_capacity(designs.len());
        let mut o = p;
        for s in &sizes {
            off.push(o);
            o += s;
        }
        for (k, xk) in designs.iter().enumerate() {
            let sx = prior_cov * xk.transpose();
            c.view_mut((0, off[k]), (p, sizes[k])).copy_from(&sx);
            c.view_mut((off[k], 0), (sizes[k], p)).copy_from(&sx.transpose());
            for (l, xl) in designs.iter().enumerate() {
                let mut b = xk * prior_cov * xl.transpose();
                if k == l {
                    for i in 0..sizes[k] {
                        b[(i, i)] += noise_sd * noise_sd;
                    }
                }
                c.view_mut((off[k], off[l]), (sizes[k], sizes[l])).copy_from(&b);
            }
        }
        Self { cov: linalg::symmetrize(&c) }
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    /// Appends the variables A·v_idx.
    pub fn append_linear(&self, idx: &[usize], a: &DMatrix<f64>) -> Self {
        let n = self.dim();
        let k = a.nrows();
        let all: Vec<usize> = (0..n).collect();
        let cross = a * linalg::block(&self.cov, idx, &all);
        let own = a * linalg::submatrix(&self.cov, idx) * a.transpose();
        let mut c = DMatrix::zeros(n + k, n + k);
        c.view_mut((0, 0), (n, n)).copy_from(&self.cov);
        c.view_mut((n, 0), (k, n)).copy_from(&cross);
        c.view_mut((0, n), (n, k)).copy_from(&cross.transpose());
        c.view_mut((n, n), (k, k)).copy_from(&own);
        Self { cov: linalg::symmetrize(&c) }
    }

    /// Cov(v_b | v_c).
    pub fn cond_cov(&self, b: &[usize], c: &[usize]) -> Result<DMatrix<f64>> {
        let sbb = linalg::submatrix(&self.cov, b);
        if c.is_empty() {
            return Ok(sbb);
        }
        let sbc = linalg::block(&self.cov, b, c);
        let scc = linalg::submatrix(&self.cov, c);
        Ok(linalg::symmetrize(&(sbb - &sbc * pinv_psd(&scc)? * sbc.transpose())))
    }

    /// h(v_b | v_c); −∞ for a degenerate conditional.
    pub fn entropy(&self, b: &[usize], c: &[usize]) -> Result<f64> {
        let cc = self.cond_cov(b, c)?;
        let ld = linalg::logdet_psd(&cc)?;
        Ok(0.5 * (b.len() as f64 * (2.0 * PI * E).ln() + ld))
    }

    /// I(v_a; v_b | v_c).
    pub fn cmi(&self, a: &[usize], b: &[usize], c: &[usize]) -> Result<f64> {
        let ac: Vec<usize> = a.iter().chain(c).copied().collect();
        let bc: Vec<usize> = b.iter().chain(c).copied().collect();
        let v = self.entropy(b, c)? - self.entropy(b, &ac)?;
        if v.is_finite() {
            return Ok(v.max(0.0));
        }
        let w = self.entropy(a, c)? - self.entropy(a, &bc)?;
        if w.is_finite() {
            Ok(w.max(0.0))
        } else {
            Err(Error::Degenerate("both sides of the mutual information are singular".into()))
        }
    }

    pub fn mi(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        self.cmi(a, b, &[])
    }
}

/// y = Xθ + σε with θ ~ normal(0, Σ), Σ allowed to be singular.
#[derive(Debug, Clone)]
pub struct GaussianFamily {
    pub x: DMatrix<f64>,
    pub noise_sd: f64,
    pub prior_cov: DMatrix<f64>,
    pub d_shared: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianInfo {
    /// I(θ_shared; y).
    pub mi: InfoEstimate,
    /// I((θ, λ); y).
    pub mi_full: InfoEstimate,
    /// I((θ, λ); y_rep | y).
    pub cmi: InfoEstimate,
}

impl GaussianFamily {
    pub fn new(x: DMatrix<f64>, noise_sd: f64, prior_cov: DMatrix<f64>, d_shared: usize) -> Result<Self> {
        let p = x.ncols();
        if prior_cov.shape() != (p, p) || d_shared > p || d_shared == 0 {
            return Err(Error::Structural("design and prior covariance disagree".into()));
        }
        if !(noise_sd > 0.0) {
            return Err(Error::Domain("noise sd must be positive".into()));
        }
        if linalg::eigenvalues(&prior_cov)?.first().is_some_and(|&v| v < -1e-10) {
            return Err(Error::Domain("prior covariance is not PSD".into()));
        }
        Ok(Self { x, noise_sd, prior_cov, d_shared })
    }

    pub fn from_model(model: &dyn Model) -> Result<Self> {
        let lg = model
            .linear_gaussian()
            .ok_or_else(|| Error::Unsupported(format!("{} is not linear-Gaussian", model.name())))?;
        Self::new(lg.x.clone(), lg.noise_sd, lg.prior_cov.clone(), lg.d_shared)
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    fn gram(&self) -> DMatrix<f64> {
        self.x.transpose() * &self.x / (self.noise_sd * self.noise_sd)
    }

    /// Σ⁻¹ + k X'X/σ², when Σ is invertible.
    fn precision(&self, k: f64) -> Option<DMatrix<f64>> {
        let inv = linalg::inverse_spd(&self.prior_cov).ok()?;
        Some(inv + self.gram() * k)
    }

    /// [θ, y_1..y_k] as a joint Gaussian.
    pub fn joint(&self, k: usize) -> JointGaussian {
        JointGaussian::linear(&self.prior_cov, &vec![self.x.clone(); k], self.noise_sd)
    }

    fn block(&self, k: usize) -> Vec<usize> {
        let n = self.x.nrows();
        let o = self.p() + k * n;
        (o..o + n).collect()
    }

    /// I(θ; y^(k+1) | y^(1..k)): information in one more dataset after `k`.
    pub fn next_dataset_info(&self, k: usize) -> Result<f64> {
        if let (Some(a), Some(b)) = (self.precision(k as f64), self.precision(k as f64 + 1.0)) {
            return Ok(0.5 * (linalg::logdet_psd(&b)? - linalg::logdet_psd(&a)?));
        }
        let j = self.joint(k + 1);
        let all: Vec<usize> = (0..self.p()).collect();
        let cond: Vec<usize> = (0..k).flat_map(|i| self.block(i)).collect();
        j.cmi(&all, &self.block(k), &cond)
    }

    pub fn info(&self) -> Result<GaussianInfo> {
        let s: Vec<usize> = (0..self.d_shared).collect();
        let all: Vec<usize> = (0..self.p()).collect();
        let cmi = self.next_dataset_info(1)?;
        let (mi, mi_full) = match self.precision(1.0) {
            Some(p1) => {
                let post = linalg::inverse_spd(&p1)?;
                let mi = 0.5
                    * (linalg::logdet_psd(&linalg::submatrix(&self.prior_cov, &s))?
                        - linalg::logdet_psd(&linalg::submatrix(&post, &s))?);
                let full = 0.5 * (linalg::logdet_psd(&p1)? + linalg::logdet_psd(&self.prior_cov)?);
                (mi, full)
            }
            None => {
                let j = self.joint(1);
                (j.mi(&s, &self.block(0))?, j.mi(&all, &self.block(0))?)
            }
        };
        Ok(GaussianInfo {
            mi: InfoEstimate::analytic("mi", mi),
            mi_full: InfoEstimate::analytic("mi_full", mi_full),
            cmi: InfoEstimate::analytic("cmi", cmi),
        })
    }
}

/// Closed-form MI and CMI for a linear-Gaussian model.
pub fn gaussian_mi_cmi(model: &dyn Model) -> Result<GaussianInfo> {
    GaussianFamily::from_model(model)?.info()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin, parse_hp};

    fn info(name: &str, hp: &str) -> GaussianInfo {
        let b = builtin(name, &parse_hp(hp).unwrap()).unwrap();
        match b.model() {
            Some(m) => gaussian_mi_cmi(m.as_ref()).unwrap(),
            None => gaussian_mi_cmi(b.pair().unwrap().expanded.as_ref()).unwrap(),
        }
    }

    #[test]
    fn entropy_examples() {
        let c = (2.0 * PI * E).ln();
        let h1 = gaussian_entropy(&DMatrix::identity(1, 1)).unwrap().value;
        assert!((h1 - 0.5 * c).abs() < 1e-15);
        assert!((h1 - 1.4189385332).abs() < 1e-9);
        assert!((gaussian_entropy(&DMatrix::identity(2, 2)).unwrap().value - c).abs() < 1e-14);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0]));
        let want = 0.5 * (2.0 * PI * E * 4.0).ln() + 0.5 * c;
        assert!((gaussian_entropy(&d).unwrap().value - want).abs() < 1e-14);
        assert!(matches!(gaussian_entropy(&DMatrix::zeros(2, 2)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn normal_location_and_redundant() {
        let a = info("normal-location", "");
        assert!((a.cmi.value - 0.5 * 1.5f64.ln()).abs() < 1e-15);
        assert!((a.mi.value - 0.5 * 2f64.ln()).abs() < 1e-15);
        let r = info("redundant-location", "");
        assert!((r.cmi.value - 0.5 * 1.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn singular_prior_falls_back_to_joint() {
        // location-nuisance with σ_λ² = 0 collapses to the base model
        let x = DMatrix::from_element(1, 2, 1.0);
        let cov = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0]));
        let f = GaussianFamily::new(x, 1.0, cov, 1).unwrap();
        let i = f.info().unwrap();
        assert!((i.mi.value - 0.5 * 2f64.ln()).abs() < 1e-12);
        assert!((i.cmi.value - 0.5 * 1.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn precision_and_joint_paths_agree() {
        let b = builtin("location-nuisance", &parse_hp("sigma_theta2=2,sigma_lambda2=0.5,n=3").unwrap()).unwrap();
        let f = GaussianFamily::from_model(b.pair().unwrap().expanded.as_ref()).unwrap();
        let i = f.info().unwrap();
        let j = f.joint(2);
        let y0 = f.block(0);
        let y1 = f.block(1);
        assert!((j.mi(&[0], &y0).unwrap() - i.mi.value).abs() < 1e-10);
        assert!((j.mi(&[0, 1], &y0).unwrap() - i.mi_full.value).abs() < 1e-10);
        assert!((j.cmi(&[0, 1], &y1, &y0).unwrap() - i.cmi.value).abs() < 1e-10);
    }

    #[test]
    fn non_gaussian_is_unsupported() {
        let b = builtin("student-t-outlier", &parse_hp("").unwrap()).unwrap();
        assert!(matches!(gaussian_mi_cmi(b.model().unwrap().as_ref()), Err(Error::Unsupported(_))));
    }
}
