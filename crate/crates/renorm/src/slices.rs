//! Slices of the unit ball, certified diameter upper bounds, sampled lower
//! bounds, and margin selection.
//!
//! The certified bound comes from the convexity modulus of the norm: for
//! `y, z` in a slice of margin `delta`, `<psi, y+z> ≥ 2−2delta` forces
//! `N(y+z) ≥ 2−2delta`, and `μ |y−z|₂² ≤ 2N(y)² + 2N(z)² − N(y+z)² ≤ 8 delta`,
//! so the diameter is at most `L √(8 delta / μ)`.

use crate::linalg;
use crate::rng;
use crate::space::{pairing, BaseNorm, Functional, Point};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SliceError {
    #[error("norm has no certified convexity modulus (eps0 = 0 on a non-quadratic kind)")]
    NoCertificate,
    #[error("functional is not norming for the exposed point: <psi, x> = {value}")]
    NotNorming { value: f64 },
    #[error("margin {delta} outside (0, 1)")]
    BadMargin { delta: f64 },
}

/// An open slice `{ y : N(y) ≤ 1, sign·<psi, y> > 1 − delta }` together with
/// the exposed point it was cut at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub x: Point,
    pub psi: Functional,
    pub delta: f64,
    pub sign: i8,
}

impl Slice {
    pub fn new(x: Point, psi: Functional, delta: f64, sign: i8) -> Result<Self, SliceError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(SliceError::BadMargin { delta });
        }
        let v = pairing(&psi, &x).expect("dimension mismatch in slice");
        if (v - 1.0).abs() > 1e-8 {
            return Err(SliceError::NotNorming { value: v });
        }
        debug_assert!(sign == 1 || sign == -1);
        Ok(Slice { x, psi, delta, sign })
    }

    /// The mirrored slice `−S`.
    pub fn negated(&self) -> Slice {
        Slice { x: self.x.clone(), psi: self.psi.clone(), delta: self.delta, sign: -self.sign }
    }

    /// The point that attains `sign·<psi, ·> = 1` on the sphere.
    pub fn exposed_point(&self) -> Point {
        if self.sign >= 0 {
            self.x.clone()
        } else {
            self.x.neg()
        }
    }

    pub fn value(&self, y: &Point) -> f64 {
        self.sign as f64 * pairing(&self.psi, y).expect("dimension mismatch")
    }

    pub fn contains(&self, y: &Point, norm: &BaseNorm) -> bool {
        norm.eval_point(y) <= 1.0 && self.value(y) > 1.0 - self.delta
    }

    /// Functional slack `sign·<psi, y> − (1 − delta)`; membership in the open
    /// slice is positive slack (ball test aside).
    pub fn slack(&self, y: &Point) -> f64 {
        self.value(y) - (1.0 - self.delta)
    }
}

/// Certified upper bound on the diameter of a slice of margin `delta`.
pub fn diam_bound_at(norm: &BaseNorm, delta: f64) -> Result<f64, SliceError> {
    let mu = norm.convexity_modulus;
    if mu <= 0.0 {
        return Err(SliceError::NoCertificate);
    }
    Ok(norm.l2_upper * (8.0 * delta / mu).sqrt())
}

pub fn diam_upper_bound(slice: &Slice, norm: &BaseNorm) -> Result<f64, SliceError> {
    diam_bound_at(norm, slice.delta)
}

/// Sampled lower bound on the slice diameter.
#[derive(Debug, Clone, Serialize)]
pub struct McDiameter {
    pub lower: f64,
    pub samples: usize,
    pub seed: u64,
    pub starved: bool,
}

/// Hit-and-run sampling inside the slice; the estimate is the larger of the
/// max over `k` random sample pairs and a dual-direction width sweep over the
/// same sample cloud (both are lower bounds on the true diameter).
pub fn diam_monte_carlo(slice: &Slice, norm: &BaseNorm, k: usize, seed: u64) -> McDiameter {
    assert!(k >= 2, "need at least two pairs");
    let d = slice.x.dim();
    let mut r = rng::stream(seed, "slice-mc");
    let start = {
        let s = slice.sign as f64 * (1.0 - 0.5 * slice.delta);
        Point::new(linalg::scale(&slice.x.coords, s))
    };
    if !slice.contains(&start, norm) {
        return McDiameter { lower: 0.0, samples: 0, seed, starved: true };
    }

    let n_samples = (2 * k).min(40_000).max(64);
    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(n_samples);
    let mut y = start.coords.clone();
    let burn_in = 50usize;
    let mut produced = 0usize;
    let mut stalls = 0usize;
    while produced < n_samples + burn_in {
        let u = rng::normal_vec(&mut r, d);
        let (lo, hi) = chord(&y, &u, slice, norm);
        if hi - lo < 1e-300 {
            stalls += 1;
            if stalls > 200 {
                return McDiameter { lower: 0.0, samples: 0, seed, starved: true };
            }
            continue;
        }
        let t = r.gen_range(lo..hi);
        linalg::axpy(&mut y, t, &u);
        produced += 1;
        if produced > burn_in {
            samples.push(y.clone());
        }
    }

    // max over k random pairs
    let mut best: f64 = 0.0;
    let mut best_pair = (samples[0].clone(), samples[samples.len() - 1].clone());
    for _ in 0..k {
        let i = r.gen_range(0..samples.len());
        let j = r.gen_range(0..samples.len());
        if i != j {
            let v = norm.eval(&linalg::sub(&samples[i], &samples[j]));
            if v > best {
                best = v;
                best_pair = (samples[i].clone(), samples[j].clone());
            }
        }
    }
    // width sweep: sup over dual-unit w of (max w·y − min w·y) over samples
    let sweeps = if norm.is_quadratic() { 128 } else { 48 };
    let mut sweep_pair = None;
    for _ in 0..sweeps {
        let w = Functional::new(rng::normal_vec(&mut r, d));
        let dual = match norm.dual_norm(&w) {
            Ok(v) if v > 1e-300 => v,
            _ => continue,
        };
        let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut arg_mn, mut arg_mx) = (0usize, 0usize);
        for (i, s) in samples.iter().enumerate() {
            let v = linalg::dot(&w.coeffs, s);
            if v < mn {
                mn = v;
                arg_mn = i;
            }
            if v > mx {
                mx = v;
                arg_mx = i;
            }
        }
        if (mx - mn) / dual > best {
            best = (mx - mn) / dual;
            sweep_pair = Some((samples[arg_mx].clone(), samples[arg_mn].clone()));
        }
    }
    if let Some(p) = sweep_pair {
        best_pair = p;
    }
    // alternating chord-end pushes sharpen the best feasible pair; the result
    // stays a pair in the closure of the slice, hence a valid lower bound
    let (mut y1, mut y2) = best_pair;
    for _ in 0..60 {
        let mut improved = false;
        for end in 0..2 {
            let u = linalg::sub(&y1, &y2);
            let un = linalg::norm2(&u);
            if un < 1e-300 {
                break;
            }
            let u = linalg::scale(&u, 1.0 / un);
            if end == 0 {
                let (_, hi) = chord(&y1, &u, slice, norm);
                if hi > 1e-15 {
                    linalg::axpy(&mut y1, hi, &u);
                    improved = true;
                }
            } else {
                let (lo, _) = chord(&y2, &u, slice, norm);
                if lo < -1e-15 {
                    linalg::axpy(&mut y2, lo, &u);
                    improved = true;
                }
            }
        }
        let v = norm.eval(&linalg::sub(&y1, &y2));
        best = best.max(v);
        if !improved {
            break;
        }
    }
    McDiameter { lower: best, samples: samples.len(), seed, starved: false }
}

/// Largest `t`-interval with `y + t u` inside the slice.
fn chord(y: &[f64], u: &[f64], slice: &Slice, norm: &BaseNorm) -> (f64, f64) {
    // linear constraint: sign <psi, y + t u> > 1 − delta
    let a = slice.sign as f64 * linalg::dot(&slice.psi.coeffs, u);
    let b = slice.sign as f64 * linalg::dot(&slice.psi.coeffs, y) - (1.0 - slice.delta);
    // b + t a > 0
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    if a.abs() < 1e-300 {
        if b <= 0.0 {
            return (0.0, 0.0);
        }
    } else if a > 0.0 {
        lo = -b / a;
    } else {
        hi = -b / a;
    }
    // ball constraint: N(y + t u) ≤ 1, an interval containing t = 0
    let ball_edge = |dir: f64| -> f64 {
        let mut t_in = 0.0;
        let mut t_out = dir;
        while norm.eval(&probe(y, u, t_out)) <= 1.0 {
            t_in = t_out;
            t_out *= 2.0;
            if t_out.abs() > 1e6 {
                break;
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (t_in + t_out);
            if norm.eval(&probe(y, u, mid)) <= 1.0 {
                t_in = mid;
            } else {
                t_out = mid;
            }
        }
        t_in
    };
    let hi_ball = ball_edge(1e-3);
    let lo_ball = ball_edge(-1e-3);
    (lo.max(lo_ball), hi.min(hi_ball))
}

fn probe(y: &[f64], u: &[f64], t: f64) -> Vec<f64> {
    let mut p = y.to_vec();
    linalg::axpy(&mut p, t, u);
    p
}

/// Certified + sampled evidence for one slice.
#[derive(Debug, Clone, Serialize)]
pub struct DiameterBound {
    pub upper: f64,
    pub lower: f64,
    pub samples: usize,
    pub seed: u64,
}

pub fn diameter_bound(
    slice: &Slice,
    norm: &BaseNorm,
    k: usize,
    seed: u64,
) -> Result<DiameterBound, SliceError> {
    let upper = diam_upper_bound(slice, norm)?;
    let mc = diam_monte_carlo(slice, norm, k, seed);
    Ok(DiameterBound { upper, lower: mc.lower, samples: mc.samples, seed })
}

pub const DELTA_MAX: f64 = 0.5;

/// Largest dyadic margin `2^{-j}·DELTA_MAX` whose certified diameter bound is
/// at most `0.9 · eps_target`.
pub fn margin_for_diameter(eps_target: f64, norm: &BaseNorm) -> Result<f64, SliceError> {
    assert!(eps_target > 0.0);
    let mu = norm.convexity_modulus;
    if mu <= 0.0 {
        return Err(SliceError::NoCertificate);
    }
    let target = 0.9 * eps_target;
    let cap = mu * (target / norm.l2_upper).powi(2) / 8.0;
    let mut delta = DELTA_MAX;
    if cap < delta {
        let j = (DELTA_MAX / cap).log2().ceil().max(0.0) as i32;
        delta = DELTA_MAX * 0.5f64.powi(j);
    }
    while diam_bound_at(norm, delta)? > target && delta > f64::MIN_POSITIVE {
        delta *= 0.5;
    }
    assert!(delta > 0.0);
    Ok(delta)
}

/// A strictly positive enlargement margin keeping every slice's certified
/// diameter below `eps_f`, found on the dyadic grid.
pub fn enlarge_margin(omega: &[Slice], eps_f: f64, norm: &BaseNorm) -> Result<f64, SliceError> {
    if omega.is_empty() {
        return Ok(0.1);
    }
    let mu = norm.convexity_modulus;
    if mu <= 0.0 {
        return Err(SliceError::NoCertificate);
    }
    // total margin allowance at a 0.95 safety target
    let allowance = mu * (0.95 * eps_f / norm.l2_upper).powi(2) / 8.0;
    let room = omega
        .iter()
        .map(|s| allowance - s.delta)
        .fold(f64::INFINITY, f64::min);
    assert!(
        room > 0.0,
        "slices were not built with the diameter headroom the margin search assumes"
    );
    let mut eta = DELTA_MAX;
    while eta > room && eta > f64::MIN_POSITIVE {
        eta *= 0.5;
    }
    for s in omega {
        debug_assert!(diam_bound_at(norm, s.delta + eta)? < eps_f);
    }
    Ok(eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::NormKind;
    use proptest::prelude::*;

    fn unit_slice(d: usize, delta: f64, norm: &BaseNorm) -> Slice {
        let x = Point::new(linalg::scale(&Point::basis(d, 0).coords, 1.0 / norm.eval(&Point::basis(d, 0).coords)));
        let psi = norm.norming_functional(&x).unwrap();
        Slice::new(x, psi, delta, 1).unwrap()
    }

    #[test]
    fn membership_basics() {
        let norm = BaseNorm::euclidean(0.0, 2);
        let s = unit_slice(2, 0.1, &norm);
        assert!(s.contains(&s.x, &norm));
        assert!(!s.contains(&s.x.neg(), &norm));
        assert!(!s.contains(&Point::zeros(2), &norm));
        let neg = s.negated();
        assert!(neg.contains(&s.x.neg(), &norm));
    }

    #[test]
    fn euclidean_bound_dominates_exact_diameter() {
        // pure euclidean ball: modulus 1, L = 1
        let norm = BaseNorm::euclidean(0.0, 2);
        assert_eq!(norm.convexity_modulus, 1.0);
        let delta = 0.02;
        let bound = diam_bound_at(&norm, delta).unwrap();
        assert!((bound - 0.4).abs() < 1e-12, "bound {bound}");
        let exact = 2.0 * (2.0 * delta - delta * delta).sqrt();
        assert!(exact <= bound);
        // over-estimation factor stays below sqrt(2) for small margins
        for delta in [0.1, 0.01, 0.001] {
            let ratio = diam_bound_at(&norm, delta).unwrap() / (2.0 * (2.0 * delta - delta * delta).sqrt());
            assert!(ratio <= 2f64.sqrt() && ratio >= 1.0, "ratio {ratio} at {delta}");
        }
    }

    #[test]
    fn bound_requires_a_modulus() {
        let p = BaseNorm::new(NormKind::P { p: 4.0 }, 0.0, 2).unwrap();
        assert!(diam_bound_at(&p, 0.1).is_err());
        let p = BaseNorm::new(NormKind::P { p: 4.0 }, 0.05, 2).unwrap();
        assert!(diam_bound_at(&p, 0.1).is_ok());
    }

    #[test]
    fn monte_carlo_is_deterministic_and_below_bound() {
        let norm = BaseNorm::euclidean(0.05, 3);
        let s = unit_slice(3, 0.01, &norm);
        let a = diam_monte_carlo(&s, &norm, 500, 42);
        let b = diam_monte_carlo(&s, &norm, 500, 42);
        assert_eq!(a.lower.to_bits(), b.lower.to_bits());
        assert!(!a.starved);
        let upper = diam_upper_bound(&s, &norm).unwrap();
        assert!(a.lower <= upper + 1e-9);
    }

    #[test]
    fn monte_carlo_matches_euclidean_slice_geometry() {
        // exact euclidean cap diameter: 2 sqrt(2 delta − delta²)
        let norm = BaseNorm::euclidean(0.0, 2);
        let delta = 0.02;
        let s = unit_slice(2, delta, &norm);
        let exact = 2.0 * (2.0 * delta - delta * delta).sqrt();
        let mc = diam_monte_carlo(&s, &norm, 10_000, 7);
        assert!(mc.lower <= exact + 1e-9);
        assert!(mc.lower >= 0.98 * exact, "mc {} vs exact {exact}", mc.lower);
    }

    #[test]
    fn p_norm_bound_dominates_sampling() {
        let norm = BaseNorm::new(NormKind::P { p: 4.0 }, 0.05, 3).unwrap();
        let s = unit_slice(3, 1e-3, &norm);
        let upper = diam_upper_bound(&s, &norm).unwrap();
        let mc = diam_monte_carlo(&s, &norm, 2_000, 3);
        assert!(mc.lower <= upper + 1e-9, "mc {} vs bound {upper}", mc.lower);
    }

    #[test]
    fn margin_selection_examples() {
        let norm = BaseNorm::euclidean(0.0, 2); // L = 1, modulus 1
        // huge target caps at the dyadic maximum
        assert_eq!(margin_for_diameter(1e6, &norm).unwrap(), DELTA_MAX);
        // certified bound at the returned margin honors the 0.9 factor
        let delta = margin_for_diameter(0.4, &norm).unwrap();
        assert!(diam_bound_at(&norm, delta).unwrap() <= 0.36 + 1e-12);
        // halving the target at least quarters the margin
        let d1 = margin_for_diameter(0.2, &norm).unwrap();
        let d2 = margin_for_diameter(0.1, &norm).unwrap();
        assert!(d2 <= d1 / 4.0 + f64::EPSILON);
        assert!(d2 > 0.0);
    }

    #[test]
    fn enlargement_margin_examples() {
        let norm = BaseNorm::euclidean(0.0, 2);
        assert_eq!(enlarge_margin(&[], 0.3, &norm).unwrap(), 0.1);
        let eps = 0.3;
        let delta = margin_for_diameter(eps, &norm).unwrap();
        let s = unit_slice(2, delta, &norm);
        let eta = enlarge_margin(std::slice::from_ref(&s), eps, &norm).unwrap();
        assert!(eta > 0.0);
        assert!(diam_bound_at(&norm, delta + eta).unwrap() < eps);
        // tighter certified diameters leave less enlargement room
        let eps_small = 0.05;
        let d_small = margin_for_diameter(eps_small, &norm).unwrap();
        let s_small = unit_slice(2, d_small, &norm);
        let eta_small = enlarge_margin(std::slice::from_ref(&s_small), eps_small, &norm).unwrap();
        assert!(eta_small <= eta);
    }

    #[test]
    fn decreasing_margins_shrink_the_certified_bound() {
        // rotundity surrogate: the certified slice bound decreases to zero
        let norm = BaseNorm::euclidean(0.05, 3);
        let mut last = f64::INFINITY;
        for delta in [1e-2, 1e-3, 1e-4] {
            let b = diam_bound_at(&norm, delta).unwrap();
            assert!(b < last);
            last = b;
        }
    }

    proptest! {
        #[test]
        fn slice_symmetry(coords in proptest::collection::vec(-1.5f64..1.5, 3), delta in 0.01f64..0.5) {
            let norm = BaseNorm::euclidean(0.05, 3);
            let s = unit_slice(3, delta, &norm);
            let y = Point::new(coords);
            prop_assert_eq!(s.contains(&y, &norm), s.negated().contains(&y.neg(), &norm));
        }
    }
}
