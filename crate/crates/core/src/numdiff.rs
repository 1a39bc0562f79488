//! Central finite differences with step h_j = max(1e-4, 1e-4·|x_j|).

use nalgebra::{DMatrix, DVector};

pub fn step(x: f64) -> f64 {
    1e-4f64.max(1e-4 * x.abs())
}

pub fn gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> DVector<f64> {
    let mut p = x.to_vec();
    DVector::from_fn(x.len(), |j, _| {
        let h = step(x[j]);
        p[j] = x[j] + h;
        let up = f(&p);
        p[j] = x[j] - h;
        let dn = f(&p);
        p[j] = x[j];
        (up - dn) / (2.0 * h)
    })
}

pub fn hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> DMatrix<f64> {
    hessian_scaled(f, x, 1.0)
}

/// As [`hessian`] with every step multiplied by `scale`.
pub fn hessian_scaled(f: &dyn Fn(&[f64]) -> f64, x: &[f64], scale: f64) -> DMatrix<f64> {
    let d = x.len();
    let f0 = f(x);
    let mut p = x.to_vec();
    let at = |p: &mut Vec<f64>, moves: &[(usize, f64)]| {
        for &(j, s) in moves {
            p[j] += s;
        }
        let v = f(p);
        for &(j, s) in moves {
            p[j] -= s;
        }
        v
    };
    let h: Vec<f64> = x.iter().map(|&v| scale * step(v)).collect();
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        let up = at(&mut p, &[(i, h[i])]);
        let dn = at(&mut p, &[(i, -h[i])]);
        m[(i, i)] = (up - 2.0 * f0 + dn) / (h[i] * h[i]);
        for j in 0..i {
            let pp = at(&mut p, &[(i, h[i]), (j, h[j])]);
            let pm = at(&mut p, &[(i, h[i]), (j, -h[j])]);
            let mp = at(&mut p, &[(i, -h[i]), (j, h[j])]);
            let mm = at(&mut p, &[(i, -h[i]), (j, -h[j])]);
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Damped Newton ascent on `f`; falls back to backtracked gradient steps
/// where the Hessian is not negative definite. Returns the last point.
pub fn maximize(f: &dyn Fn(&[f64]) -> f64, init: &[f64], max_iter: usize) -> Vec<f64> {
    let mut x = init.to_vec();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return x;
    }
    for _ in 0..max_iter {
        let g = gradient(f, &x);
        if !g.iter().all(|v| v.is_finite()) {
            break;
        }
        let neg_h = -hessian(f, &x);
        let dir = match neg_h.clone().cholesky() {
            Some(c) if neg_h.iter().all(|v| v.is_finite()) => c.solve(&g),
            _ => &g / (1.0 + g.norm()),
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, b)| a + t * b).collect();
            let fc = f(&cand);
            if fc.is_finite() && fc >= fx {
                let gain = fc - fx;
                x = cand;
                fx = fc;
                moved = gain > 1e-12 || t * dir.norm() > 1e-10;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_derivatives() {
        let f = |p: &[f64]| -(p[0] * p[0] + 3.0 * p[0] * p[1] + 5.0 * p[1] * p[1]) + 2.0 * p[1];
        let h = hessian(&f, &[0.3, -1.2]);
        let want = [[-2.0, -3.0], [-3.0, -10.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((h[(i, j)] - want[i][j]).abs() < 1e-5, "{h}");
            }
        }
        let g = gradient(&f, &[0.3, -1.2]);
        assert!((g[0] - (-0.6 + 3.6)).abs() < 1e-8);
        let x = maximize(&f, &[5.0, 5.0], 50);
        // stationary point of the quadratic: 2a + 3b = 0, 3a + 10b = 2
        assert!((x[0] + 6.0 / 11.0).abs() < 1e-6 && (x[1] - 4.0 / 11.0).abs() < 1e-6, "{x:?}");
    }

    #[test]
    fn step_scales_with_magnitude() {
        assert_eq!(step(0.0), 1e-4);
        assert_eq!(step(1e3), 1e-1);
    }
}
