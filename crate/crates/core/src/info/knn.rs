//! Kozachenko–Leonenko nearest-neighbour differential entropy.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use statrs::function::gamma::{digamma, ln_gamma};

use super::{mean_se, InfoEstimate, Method};
use crate::error::{Error, Result};
use crate::dist;
use crate::rng;
use crate::samplers::{PosteriorDraws, SamplerKind};

const LEAF: usize = 16;

struct KdTree<'a> {
    pts: &'a [f64],
    d: usize,
    idx: Vec<usize>,
    nodes: Vec<Node>,
}

enum Node {
    Leaf { lo: usize, hi: usize },
    Split { axis: usize, at: f64, left: usize, right: usize },
}

#[derive(PartialEq)]
struct Cand(f64);
impl Eq for Cand {}
impl PartialOrd for Cand {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Cand {
    fn cmp(&self, o: &Self) -> Ordering {
        self.0.total_cmp(&o.0)
    }
}

impl<'a> KdTree<'a> {
    fn build(pts: &'a [f64], d: usize) -> Self {
        let n = pts.len() / d;
        let mut t = KdTree { pts, d, idx: (0..n).collect(), nodes: Vec::new() };
        t.split(0, n, 0);
        t
    }

    fn coord(&self, i: usize, a: usize) -> f64 {
        self.pts[i * self.d + a]
    }

    fn split(&mut self, lo: usize, hi: usize, depth: usize) -> usize {
        if hi - lo <= LEAF {
            self.nodes.push(Node::Leaf { lo, hi });
            return self.nodes.len() - 1;
        }
        let axis = depth % self.d;
        let mid = (lo + hi) / 2;
        let (pts, d) = (self.pts, self.d);
        self.idx[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| pts[a * d + axis].total_cmp(&pts[b * d + axis]));
        let at = self.coord(self.idx[mid], axis);
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { lo: 0, hi: 0 });
        let left = self.split(lo, mid, depth + 1);
        let right = self.split(mid, hi, depth + 1);
        self.nodes[me] = Node::Split { axis, at, left, right };
        me
    }

    /// Squared distance from point `q` to its k-th nearest other point.
    fn kth_sq(&self, q: usize, k: usize) -> f64 {
        let mut heap: BinaryHeap<Cand> = BinaryHeap::with_capacity(k + 1);
        self.search(0, q, k, &mut heap);
        heap.peek().map_or(f64::INFINITY, |c| c.0)
    }

    fn search(&self, node: usize, q: usize, k: usize, heap: &mut BinaryHeap<Cand>) {
        match self.nodes[node] {
            Node::Leaf { lo, hi } => {
                for &j in &self.idx[lo..hi] {
                    if j == q {
                        continue;
                    }
                    let mut s = 0.0;
                    for a in 0..self.d {
                        let t = self.coord(j, a) - self.coord(q, a);
                        s += t * t;
                    }
                    if heap.len() < k {
                        heap.push(Cand(s));
                    } else if s < heap.peek().unwrap().0 {
                        heap.pop();
                        heap.push(Cand(s));
                    }
                }
            }
            Node::Split { axis, at, left, right } => {
                let diff = self.coord(q, axis) - at;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                if heap.len() < k || diff * diff < heap.peek().unwrap().0 {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

/// k-th neighbour distances in one dimension via a sorted sweep.
fn kth_1d(x: &[f64], k: usize) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    (0..n)
        .map(|i| {
            // merge outward from i, taking the k closest
            let (mut l, mut r) = (i, i + 1);
            let mut last = 0.0;
            for _ in 0..k {
                let dl = if l > 0 { s[i] - s[l - 1] } else { f64::INFINITY };
                let dr = if r < n { s[r] - s[i] } else { f64::INFINITY };
                if dl <= dr {
                    last = dl;
                    l -= 1;
                } else {
                    last = dr;
                    r += 1;
                }
            }
            last
        })
        .collect()
}

fn log_unit_ball(d: usize) -> f64 {
    0.5 * d as f64 * PI.ln() - ln_gamma(0.5 * d as f64 + 1.0)
}

/// Entropy estimate from equally weighted draws.
pub fn knn_entropy(draws: &PosteriorDraws, k: usize) -> Result<InfoEstimate> {
    if draws.weights.is_some() {
        return Err(Error::Domain("knn entropy needs unweighted draws; resample first".into()));
    }
    let n = draws.len();
    if n < 50 {
        return Err(Error::Domain(format!("knn entropy needs at least 50 draws, got {n}")));
    }
    if !(1..=20).contains(&k) || k >= n {
        return Err(Error::Domain(format!("k must lie in [1, 20], got {k}")));
    }
    let d = draws.d;
    let eps: Vec<f64> = if d == 1 {
        kth_1d(&draws.draws, k)
    } else {
        let t = KdTree::build(&draws.draws, d);
        (0..n).map(|i| t.kth_sq(i, k).sqrt()).collect()
    };
    let zeros = eps.iter().filter(|&&e| e <= 0.0).count();
    if zeros as f64 > 0.01 * n as f64 {
        return Err(Error::Degenerate(format!("{zeros} of {n} draws have coincident neighbours; jitter required")));
    }
    let terms: Vec<f64> = eps.iter().filter(|&&e| e > 0.0).map(|e| d as f64 * e.ln()).collect();
    let (m, se) = mean_se(&terms);
    let v = digamma(n as f64) - digamma(k as f64) + log_unit_ball(d) + m;
    Ok(InfoEstimate::mc("entropy", v, se, Method::Knn, &[("n", n as f64), ("k", k as f64)]))
}

/// Smallest positive spacing between distinct values of each coordinate.
fn grid_spacing(draws: &PosteriorDraws) -> Vec<f64> {
    (0..draws.d)
        .map(|j| {
            let mut c = draws.column(j);
            c.sort_by(f64::total_cmp);
            c.windows(2).map(|w| w[1] - w[0]).filter(|&g| g > 0.0).fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Resamples weighted draws to 10⁵ points first. Grid posteriors are read
/// as piecewise-constant densities: each resampled node is spread uniformly
/// over its cell, otherwise every point would have exact duplicates.
pub fn knn_entropy_weighted(draws: &PosteriorDraws, k: usize, seed: u64) -> Result<InfoEstimate> {
    if draws.weights.is_none() {
        return knn_entropy(draws, k);
    }
    let mut re = draws.resample(100_000, seed)?;
    if draws.sampler == SamplerKind::Grid {
        let h = grid_spacing(draws);
        let mut r = rng::stream(seed, 0x617D);
        for row in re.draws.chunks_exact_mut(draws.d) {
            for (x, hj) in row.iter_mut().zip(&h) {
                if hj.is_finite() {
                    *x += (dist::uniform(&mut r) - 0.5) * hj;
                }
            }
        }
    }
    knn_entropy(&re, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(n: usize, d: usize, f: impl Fn(&mut rng::Rng) -> f64) -> PosteriorDraws {
        let mut r = rng::seeded(1);
        let v = (0..n * d).map(|_| f(&mut r)).collect();
        PosteriorDraws::new(v, d, None, 1, SamplerKind::Exact).unwrap()
    }

    #[test]
    fn unit_normal_1d() {
        let e = knn_entropy(&draws(100_000, 1, |r| dist::std_normal(r)), 4).unwrap();
        assert!((e.value - 1.418_938_533).abs() < 0.02, "{e:?}");
    }

    #[test]
    fn uniform_1d() {
        let e = knn_entropy(&draws(100_000, 1, |r| dist::uniform(r)), 4).unwrap();
        assert!(e.value.abs() < 0.02, "{e:?}");
    }

    #[test]
    fn normal_2d() {
        let e = knn_entropy(&draws(100_000, 2, |r| dist::std_normal(r)), 4).unwrap();
        assert!((e.value - 2.837_877_066).abs() < 0.03, "{e:?}");
    }

    #[test]
    fn tree_matches_brute_force() {
        let p = draws(300, 3, |r| dist::std_normal(r));
        let t = KdTree::build(&p.draws, 3);
        for q in [0, 17, 299] {
            let mut ds: Vec<f64> = (0..300)
                .filter(|&j| j != q)
                .map(|j| (0..3).map(|a| (p.draws[j * 3 + a] - p.draws[q * 3 + a]).powi(2)).sum())
                .collect();
            ds.sort_by(f64::total_cmp);
            assert_eq!(t.kth_sq(q, 5), ds[4]);
        }
    }

    #[test]
    fn grid_draws_are_spread_over_cells() {
        // uniform(0, 1) as a 201-node grid
        let v: Vec<f64> = (0..201).map(|i| i as f64 / 200.0).collect();
        let p = PosteriorDraws::new(v, 1, Some(vec![1.0 / 201.0; 201]), 0, SamplerKind::Grid).unwrap();
        let e = knn_entropy_weighted(&p, 4, 2).unwrap();
        assert!(e.value.abs() < 0.02, "{e:?}");
    }

    #[test]
    fn duplicates_are_rejected() {
        let p = PosteriorDraws::new(vec![1.0; 100], 1, None, 0, SamplerKind::Exact).unwrap();
        assert!(matches!(knn_entropy(&p, 1), Err(Error::Degenerate(_))));
    }
}
