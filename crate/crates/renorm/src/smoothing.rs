//! The smooth gauge: flat-region bump functions built from the primitive
//! `m(t) = ∫₀^{max(t,0)} exp(−1/u) du`, the bump-sum `Φ`, its locally finite
//! structure, and the Minkowski gauge of `{Φ ≤ 1 − ε}` with an analytic
//! gradient via implicit differentiation.

use crate::construction::{Scope, SliceAtlas};
use crate::index::SliceIndex;
use crate::linalg;
use crate::rng;
use crate::space::{pairing, BaseNorm, Functional, Point, SubspaceId};
use crate::tol;
use rand::Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmoothError {
    #[error("gauge bisection bracket failed at {point:?}: phi(lo) = {phi_lo}, phi(hi) = {phi_hi}")]
    BracketFailure { point: Vec<f64>, phi_lo: f64, phi_hi: f64 },
    #[error("gradient denominator degenerate (|<∇Φ(u), u>| = {value:.3e})")]
    DegenerateGradient { value: f64 },
    #[error("point lies outside the open body (Φ = {phi})")]
    OutsideBody { phi: f64 },
    #[error("point has empty support")]
    EmptySupport,
}

// --- the flat primitive m ----------------------------------------------------

fn integrand(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        (-1.0 / u).exp()
    }
}

/// 20-point Gauss-Legendre nodes/weights on [-1, 1].
const GL_NODES: [f64; 10] = [
    0.076526521133497333755,
    0.227785851141645078080,
    0.373706088715419560673,
    0.510867001950827098004,
    0.636053680726515025453,
    0.746331906460150792614,
    0.839116971822218823395,
    0.912234428251325905868,
    0.963971927277913791268,
    0.993128599185094924786,
];
const GL_WEIGHTS: [f64; 10] = [
    0.152753387130725850698,
    0.149172986472603746788,
    0.142096109318382051329,
    0.131688638449176626898,
    0.118194531961518417312,
    0.101930119817240435037,
    0.083276741576704748725,
    0.062672048334109063570,
    0.040601429800386941331,
    0.017614007139152118312,
];

fn gl20(a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for i in 0..10 {
        let x = GL_NODES[i] * half;
        acc += GL_WEIGHTS[i] * (integrand(mid + x) + integrand(mid - x));
    }
    acc * half
}

fn adaptive(a: f64, b: f64, depth: u32) -> f64 {
    let whole = gl20(a, b);
    let mid = 0.5 * (a + b);
    let split = gl20(a, mid) + gl20(mid, b);
    if (whole - split).abs() <= 1e-16_f64.max(1e-15 * split.abs()) || depth >= 40 {
        split
    } else {
        adaptive(a, mid, depth + 1) + adaptive(mid, b, depth + 1)
    }
}

const M_GRID_MAX: f64 = 4.0;
const M_GRID_N: usize = 8192;

struct MTable {
    values: Vec<f64>,
    step: f64,
}

fn m_table() -> &'static MTable {
    static TABLE: OnceLock<MTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let step = M_GRID_MAX / M_GRID_N as f64;
        let mut values = Vec::with_capacity(M_GRID_N + 1);
        values.push(0.0);
        let mut acc = 0.0;
        for k in 1..=M_GRID_N {
            acc += adaptive((k - 1) as f64 * step, k as f64 * step, 0);
            values.push(acc);
        }
        MTable { values, step }
    })
}

/// Antiderivative tail `∫ exp(−1/u) du = u − ln u + Σ_{k≥2} (−1)^k / (k! (k−1) u^{k−1})`,
/// accurate below 1e−16 for `u ≥ 20`.
fn m_series(u: f64) -> f64 {
    let mut acc = u - u.ln();
    let mut kfact = 1.0;
    let mut upow = 1.0;
    let mut sign = 1.0;
    for k in 2..=9u32 {
        kfact *= k as f64;
        upow *= u;
        acc += sign / (kfact * (k as f64 - 1.0) * upow);
        sign = -sign;
    }
    acc
}

/// `m(t) = ∫₀^{max(t,0)} exp(−1/u) du`, from a Hermite spline over a
/// quadrature table (certified error below `tol::QUADRATURE` on the grid
/// range), adaptive quadrature in a mid range, and a series tail.
pub fn m_eval(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let tab = m_table();
    if t >= 20.0 {
        static M20: OnceLock<f64> = OnceLock::new();
        let m20 = *M20.get_or_init(|| m_table().values[M_GRID_N] + adaptive(M_GRID_MAX, 20.0, 0));
        return m20 + m_series(t) - m_series(20.0);
    }
    if t >= M_GRID_MAX {
        return tab.values[M_GRID_N] + adaptive(M_GRID_MAX, t, 0);
    }
    let k = ((t / tab.step) as usize).min(M_GRID_N - 1);
    let t0 = k as f64 * tab.step;
    let h = tab.step;
    let s = (t - t0) / h;
    let (v0, v1) = (tab.values[k], tab.values[k + 1]);
    let (d0, d1) = (integrand(t0) * h, integrand(t0 + h) * h);
    // cubic Hermite basis
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * v0
        + (s3 - 2.0 * s2 + s) * d0
        + (-2.0 * s3 + 3.0 * s2) * v1
        + (s3 - s2) * d1
}

/// `m'(t) = exp(−1/t)` for `t > 0`, zero otherwise (exact).
pub fn m_deriv(t: f64) -> f64 {
    integrand(t)
}

static SIGMA_XI: OnceLock<Vec<f64>> = OnceLock::new();
const XI_GRID_N: usize = 4096;

/// Smoothstep `σ(v) = m(v) / (m(v) + m(1−v))`: zero for `v ≤ 0`, one for
/// `v ≥ 1`, and `σ(v) + σ(1−v) = 1`.
pub fn sigma(v: f64) -> f64 {
    if v <= 0.0 {
        0.0
    } else if v >= 1.0 {
        1.0
    } else {
        let a = m_eval(v);
        let b = m_eval(1.0 - v);
        a / (a + b)
    }
}

/// `Ξ(v) = ∫₀^{min(max(v,0),1)} σ`, with `Ξ(1) = 1/2` exactly by symmetry.
pub fn sigma_integral(v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    if v >= 1.0 {
        return 0.5 + (v - 1.0) * 0.0; // callers handle the linear tail themselves
    }
    let tab = SIGMA_XI.get_or_init(|| {
        let step = 1.0 / XI_GRID_N as f64;
        let mut values = Vec::with_capacity(XI_GRID_N + 1);
        values.push(0.0);
        let mut acc = 0.0;
        for k in 1..=XI_GRID_N {
            // σ is smooth; fixed-node quadrature per cell suffices at the
            // certified tolerance
            let a = (k - 1) as f64 * step;
            let b = k as f64 * step;
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            let mut cell = 0.0;
            for i in 0..10 {
                let x = GL_NODES[i] * half;
                cell += GL_WEIGHTS[i] * (sigma(mid + x) + sigma(mid - x));
            }
            acc += cell * half;
            values.push(acc);
        }
        values
    });
    let step = 1.0 / XI_GRID_N as f64;
    let k = ((v / step) as usize).min(XI_GRID_N - 1);
    let t0 = k as f64 * step;
    let s = (v - t0) / step;
    let s2 = s * s;
    let s3 = s2 * s;
    let (v0, v1) = (tab[k], tab[k + 1]);
    let (d0, d1) = (sigma(t0) * step, sigma(t0 + step) * step);
    (2.0 * s3 - 3.0 * s2 + 1.0) * v0
        + (s3 - 2.0 * s2 + s) * d0
        + (-2.0 * s3 + 3.0 * s2) * v1
        + (s3 - s2) * d1
}

// --- bump functions -----------------------------------------------------------

/// Even convex bump with an exact flat region: zero iff `|s| ≤ flat` (in
/// exact arithmetic; in f64 the transition leaves denormal range a hair past
/// the boundary), one at `|s| = 1`, strictly increasing beyond the flat
/// radius. The argument is normalized by the transition width so arbitrarily
/// thin enlargement margins stay numerically sane.
#[derive(Debug, Clone, Serialize)]
pub struct BumpSpec {
    pub flat: f64,
    width: f64,
    norm_const: f64,
}

fn m_one() -> f64 {
    static M1: OnceLock<f64> = OnceLock::new();
    *M1.get_or_init(|| m_eval(1.0))
}

impl BumpSpec {
    pub fn new(flat: f64) -> Self {
        assert!(flat > 0.0 && flat < 1.0);
        BumpSpec { flat, width: 1.0 - flat, norm_const: m_one() }
    }

    pub fn eval(&self, s: f64) -> f64 {
        m_eval((s.abs() - self.flat) / self.width) / self.norm_const
    }

    pub fn grad(&self, s: f64) -> f64 {
        s.signum() * m_deriv((s.abs() - self.flat) / self.width) / (self.width * self.norm_const)
    }
}

// --- the bump sum and its gauge ------------------------------------------------

/// The smooth body `{Φ ≤ 1 − ε}` over an atlas, with one bump profile per
/// subspace (flat radius `1 − enlargement`).
pub struct SmoothBody<'a> {
    pub atlas: &'a SliceAtlas,
    pub index: &'a SliceIndex,
    pub norm: &'a BaseNorm,
    pub eps: f64,
    bumps: BTreeMap<SubspaceId, BumpSpec>,
    /// Below this |<psi, y>| no bump in the atlas can be active.
    activation: f64,
}

impl<'a> SmoothBody<'a> {
    pub fn new(atlas: &'a SliceAtlas, index: &'a SliceIndex, norm: &'a BaseNorm) -> Self {
        let bumps: BTreeMap<SubspaceId, BumpSpec> = atlas
            .budgets
            .iter()
            .map(|(f, b)| (f.clone(), BumpSpec::new(1.0 - b.enlarge)))
            .collect();
        let activation = atlas
            .budgets
            .values()
            .map(|b| (1.0 - b.level_margin) * (1.0 - b.enlarge))
            .fold(f64::INFINITY, f64::min)
            - 1e-12;
        SmoothBody { atlas, index, norm, eps: atlas.eps_global, bumps, activation }
    }

    fn phi_scoped(&self, y: &Point, scope: Scope<'_>) -> f64 {
        let mut acc = 0.0;
        self.index.visit_candidates(self.atlas, &y.coords, self.activation.max(0.0), |g, _i, s| {
            if !scope.admits(g) {
                return;
            }
            let arg = pairing(&s.psi, y).expect("dims") / (1.0 - s.delta);
            acc += self.bumps[g].eval(arg);
        });
        acc
    }

    /// `Φ(y)`: the full bump sum (finite, exact — inactive bumps are zero).
    pub fn phi(&self, y: &Point) -> f64 {
        self.phi_scoped(y, Scope::Full)
    }

    /// `Φ(y) > target`, stopping the sum as soon as it is decided; far
    /// outside the sphere thousands of bumps are active and the gauge
    /// bisection only needs the comparison.
    pub fn phi_exceeds(&self, y: &Point, target: f64) -> bool {
        let mut acc = 0.0;
        self.index.visit_candidates_until(
            self.atlas,
            &y.coords,
            self.activation.max(0.0),
            |g, _i, s| {
                let arg = pairing(&s.psi, y).expect("dims") / (1.0 - s.delta);
                acc += self.bumps[g].eval(arg);
                acc <= target
            },
        );
        acc > target
    }

    /// The partial sum over subspaces contained in `F`.
    pub fn phi_restricted(&self, f: &SubspaceId, y: &Point) -> f64 {
        self.phi_scoped(y, Scope::Restricted(f))
    }

    pub fn phi_gradient(&self, y: &Point) -> Functional {
        let mut g = vec![0.0; self.atlas.d];
        self.index.visit_candidates(self.atlas, &y.coords, self.activation.max(0.0), |f, _i, s| {
            let scale = 1.0 / (1.0 - s.delta);
            let arg = pairing(&s.psi, y).expect("dims") * scale;
            let dr = self.bumps[f].grad(arg);
            if dr != 0.0 {
                linalg::axpy(&mut g, dr * scale, &s.psi.coeffs);
            }
        });
        Functional::new(g)
    }

    /// The Minkowski gauge of `{Φ ≤ 1 − ε}`: the unique `t > 0` with
    /// `Φ(x/t) = 1 − ε`, bracketed by the sandwich bounds.
    pub fn gauge(&self, x: &Point) -> Result<f64, SmoothError> {
        let n = self.norm.eval_point(x);
        if n < 1e-300 {
            return Ok(0.0);
        }
        let target = 1.0 - self.eps;
        let mut lo = n * (1.0 - self.eps) * 0.999;
        let mut hi = n / (1.0 - self.eps) * 1.001;
        let exceeds = |t: f64| self.phi_exceeds(&Point::new(linalg::scale(&x.coords, 1.0 / t)), target);
        if !exceeds(lo) || exceeds(hi) {
            let phi_at = |t: f64| self.phi(&Point::new(linalg::scale(&x.coords, 1.0 / t)));
            return Err(SmoothError::BracketFailure {
                point: x.coords.clone(),
                phi_lo: phi_at(lo),
                phi_hi: phi_at(hi),
            });
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if exceeds(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo) <= tol::MINKOWSKI_REL * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Analytic gradient of the gauge: with `t = gauge(x)` and `u = x/t`,
    /// `∇ = ∇Φ(u) / <∇Φ(u), u>`.
    pub fn gauge_gradient(&self, x: &Point) -> Result<Functional, SmoothError> {
        let t = self.gauge(x)?;
        if t <= 0.0 {
            return Err(SmoothError::DegenerateGradient { value: 0.0 });
        }
        let u = Point::new(linalg::scale(&x.coords, 1.0 / t));
        let g = self.phi_gradient(&u);
        let denom = pairing(&g, &u).expect("dims");
        if denom.abs() <= 1e-14 {
            return Err(SmoothError::DegenerateGradient { value: denom });
        }
        Ok(Functional::new(linalg::scale(&g.coeffs, 1.0 / denom)))
    }
}

/// The locally-finite neighborhood of a point of the open body: inside it the
/// full bump sum equals the `F`-restricted one.
#[derive(Debug, Clone)]
pub struct LocalityNeighborhood {
    pub f: SubspaceId,
    pub theta: f64,
}

impl LocalityNeighborhood {
    /// Membership in `U = T(F, θ/2) ∩ {‖z‖ < 1, |<ψ, z>| < 1 ∀ψ restricted}`.
    pub fn contains(&self, body: &SmoothBody<'_>, z: &Point) -> bool {
        if body.norm.eval_point(z) >= 1.0 {
            return false;
        }
        if body.norm.dist_to_subspace_value(z, &self.f) >= self.theta / 2.0 {
            return false;
        }
        let mut ok = true;
        for (g, omega) in &body.atlas.omegas {
            if !g.is_subset_of(&self.f) {
                continue;
            }
            for s in omega {
                if s.sign != 1 {
                    continue;
                }
                let v = pairing(&s.psi, z).expect("dims").abs() / (1.0 - s.delta);
                if v >= 1.0 {
                    ok = false;
                    break;
                }
            }
            if !ok {
                break;
            }
        }
        ok
    }
}

pub fn locality_neighborhood(
    body: &SmoothBody<'_>,
    y: &Point,
) -> Result<LocalityNeighborhood, SmoothError> {
    let phi = body.phi(y);
    if phi >= 1.0 {
        return Err(SmoothError::OutsideBody { phi });
    }
    let f = SubspaceId::support(y, 1e-12).ok_or(SmoothError::EmptySupport)?;
    let theta = body.atlas.budgets[&f].theta;
    Ok(LocalityNeighborhood { f, theta })
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalityReport {
    pub f: String,
    pub samples: usize,
    pub max_diff: f64,
    pub center_in_u: bool,
}

/// Samples the neighborhood and compares the full and restricted sums.
pub fn verify_locality(
    body: &SmoothBody<'_>,
    y: &Point,
    hood: &LocalityNeighborhood,
    samples: usize,
    seed: u64,
) -> LocalityReport {
    let mut r = rng::stream(seed, &format!("locality/{}", hood.f.label()));
    let mut max_diff = 0.0f64;
    let center_in_u = hood.contains(body, y);
    let mut tested = 0usize;
    let mut attempts = 0usize;
    while tested < samples && attempts < samples * 40 {
        attempts += 1;
        let mut z = y.clone();
        let dir = rng::normal_vec(&mut r, z.dim());
        let n = body.norm.eval(&dir);
        if n < 1e-12 {
            continue;
        }
        let rad: f64 = r.gen_range(0.0..1.0) * hood.theta;
        linalg::axpy(&mut z.coords, rad / n, &dir);
        if !hood.contains(body, &z) {
            continue;
        }
        let diff = (body.phi(&z) - body.phi_restricted(&hood.f, &z)).abs();
        max_diff = max_diff.max(diff);
        tested += 1;
    }
    LocalityReport { f: hood.f.label(), samples: tested, max_diff, center_in_u }
}

/// Per-inclusion violation counts of the membership chain
/// `(1−ε)B ⊆ {Φ=0} ⊆ {Φ≤1−ε} ⊆ {Φ<1} ⊆ P ⊆ B`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ChainReport {
    pub samples: usize,
    pub shrunken_ball_to_zero_set: usize,
    pub zero_set_to_body: usize,
    pub body_to_open_body: usize,
    pub open_body_to_excised: usize,
    pub excised_to_ball: usize,
}

pub fn verify_sandwich_chain(
    body: &SmoothBody<'_>,
    samples: usize,
    seed: u64,
) -> ChainReport {
    let mut r = rng::stream(seed, "sandwich-chain");
    let mut rep = ChainReport { samples, ..ChainReport::default() };
    let d = body.atlas.d;
    for _ in 0..samples {
        let dir = rng::normal_vec(&mut r, d);
        let n = body.norm.eval(&dir);
        if n < 1e-12 {
            continue;
        }
        let radius: f64 = r.gen_range(0.0..1.05);
        let y = Point::new(linalg::scale(&dir, radius / n));
        let ny = body.norm.eval_point(&y);
        let phi = body.phi(&y);
        let in_excised = crate::construction::body_contains(
            body.atlas,
            body.index,
            body.norm,
            &y,
            Scope::Full,
        );
        if ny <= 1.0 - body.eps && phi != 0.0 {
            rep.shrunken_ball_to_zero_set += 1;
        }
        if phi == 0.0 && !(phi <= 1.0 - body.eps) {
            rep.zero_set_to_body += 1;
        }
        if phi <= 1.0 - body.eps && !(phi < 1.0) {
            rep.body_to_open_body += 1;
        }
        if phi < 1.0 && !in_excised {
            rep.open_body_to_excised += 1;
        }
        if in_excised && ny > 1.0 + tol::LINEAR_TEST {
            rep.excised_to_ball += 1;
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{run_construction, BuildConfig};
    use crate::space::{canonical_system, NormKind};

    #[test]
    fn m_primitive_matches_direct_quadrature() {
        assert_eq!(m_eval(0.0), 0.0);
        assert_eq!(m_eval(-3.0), 0.0);
        let mut r = rng::stream(1, "m-oracle");
        for _ in 0..300 {
            let t: f64 = r.gen_range(1e-3..3.9f64);
            let direct = adaptive(0.0, t, 0);
            assert!((m_eval(t) - direct).abs() <= tol::QUADRATURE, "t = {t}");
        }
        // derivative consistency at spline scale
        for t in [0.3, 0.9, 1.7] {
            let h = 1e-6;
            let fd = (m_eval(t + h) - m_eval(t - h)) / (2.0 * h);
            assert!((fd - m_deriv(t)).abs() < 1e-9);
        }
    }

    #[test]
    fn sigma_is_a_partition_of_one() {
        let mut r = rng::stream(2, "sigma");
        for _ in 0..200 {
            let v: f64 = r.gen_range(-0.5..1.5f64);
            assert!((sigma(v) + sigma(1.0 - v) - 1.0).abs() < 1e-13);
            assert!(sigma(v) >= 0.0 && sigma(v) <= 1.0);
        }
        assert_eq!(sigma(0.0), 0.0);
        assert_eq!(sigma(1.0), 1.0);
        assert!((sigma_integral(1.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bump_has_an_exact_flat_region() {
        let b = BumpSpec::new(0.7);
        assert_eq!(b.eval(0.3), 0.0);
        assert_eq!(b.eval(-0.7), 0.0);
        assert_eq!(b.eval(0.69999), 0.0);
        assert!(b.eval(0.715) > 0.0);
        assert!((b.eval(1.0) - 1.0).abs() < 1e-13);
        assert!((b.eval(-1.0) - 1.0).abs() < 1e-13);
        let mut r = rng::stream(3, "bump");
        let mut last = 0.0;
        for k in 0..50 {
            let s = 0.7 + 0.02 * k as f64;
            let v = b.eval(s);
            assert!(v >= last);
            last = v;
            // evenness
            let t: f64 = r.gen_range(-2.0..2.0f64);
            assert_eq!(b.eval(t), b.eval(-t));
            // gradient against finite differences
            let h = 1e-7;
            let fd = (b.eval(s + h) - b.eval(s - h)) / (2.0 * h);
            assert!((fd - b.grad(s)).abs() < 1e-6);
        }
        // midpoint convexity on a grid
        for i in 0..40 {
            let a = -1.5 + 0.075 * i as f64;
            let c = a + 0.4;
            assert!(b.eval(0.5 * (a + c)) <= 0.5 * (b.eval(a) + b.eval(c)) + 1e-14);
        }
    }

    struct Fixture {
        atlas: SliceAtlas,
        norm: BaseNorm,
    }

    fn fixture(d: usize) -> Fixture {
        let (sys, norm) = canonical_system(NormKind::Euclidean, 0.05, d).unwrap();
        let cfg = BuildConfig { d, ..BuildConfig::default() };
        let atlas = run_construction(&cfg, &sys, &norm).unwrap();
        Fixture { atlas, norm }
    }

    #[test]
    fn phi_vanishes_on_the_shrunken_ball() {
        let fx = fixture(2);
        let idx = SliceIndex::build(&fx.atlas, &fx.norm);
        let body = SmoothBody::new(&fx.atlas, &idx, &fx.norm);
        assert_eq!(body.phi(&Point::zeros(2)), 0.0);
        let mut r = rng::stream(4, "phi-zero");
        for _ in 0..1000 {
            let dir = rng::normal_vec(&mut r, 2);
            let n = fx.norm.eval(&dir);
            if n < 1e-9 {
                continue;
            }
            let y = Point::new(linalg::scale(&dir, (1.0 - body.eps) * 0.9999 / n));
            assert_eq!(body.phi(&y), 0.0);
        }
    }

    #[test]
    fn phi_is_midpoint_convex_on_samples() {
        let fx = fixture(2);
        let idx = SliceIndex::build(&fx.atlas, &fx.norm);
        let body = SmoothBody::new(&fx.atlas, &idx, &fx.norm);
        let mut r = rng::stream(5, "phi-convex");
        for _ in 0..1000 {
            let y = Point::new(linalg::scale(&rng::normal_vec(&mut r, 2), 0.6));
            let z = Point::new(linalg::scale(&rng::normal_vec(&mut r, 2), 0.6));
            let mid = Point::new(linalg::scale(&linalg::add(&y.coords, &z.coords), 0.5));
            assert!(body.phi(&mid) <= 0.5 * (body.phi(&y) + body.phi(&z)) + 1e-12);
        }
    }

    #[test]
    fn gauge_sandwich_and_homogeneity() {
        let fx = fixture(2);
        let idx = SliceIndex::build(&fx.atlas, &fx.norm);
        let body = SmoothBody::new(&fx.atlas, &idx, &fx.norm);
        assert_eq!(body.gauge(&Point::zeros(2)).unwrap(), 0.0);
        let mut r = rng::stream(6, "gauge-sandwich");
        for _ in 0..1000 {
            let x = Point::new(rng::normal_vec(&mut r, 2));
            let n = fx.norm.eval_point(&x);
            if n < 1e-9 {
                continue;
            }
            let mu = body.gauge(&x).unwrap();
            assert!(n <= mu * (1.0 + 1e-11));
            assert!(mu <= n / (1.0 - body.eps) * (1.0 + 1e-11));
            let mu2 = body.gauge(&Point::new(linalg::scale(&x.coords, 2.0))).unwrap();
            assert!((mu2 - 2.0 * mu).abs() <= 1e-11 * mu.max(1.0));
        }
    }

    #[test]
    fn gauge_gradient_contracts() {
        let fx = fixture(2);
        let idx = SliceIndex::build(&fx.atlas, &fx.norm);
        let body = SmoothBody::new(&fx.atlas, &idx, &fx.norm);
        let mut r = rng::stream(7, "gauge-grad");
        let mut tested = 0;
        while tested < 120 {
            let x = Point::new(rng::normal_vec(&mut r, 2));
            if fx.norm.eval_point(&x) < 1e-6 {
                continue;
            }
            let mu = body.gauge(&x).unwrap();
            let g = body.gauge_gradient(&x).unwrap();
            // Euler identity for the degree-one gauge
            assert!((pairing(&g, &x).unwrap() - mu).abs() <= 1e-8 * mu.max(1.0));
            // degree-zero homogeneity of the gradient
            let g3 = body.gauge_gradient(&Point::new(linalg::scale(&x.coords, 3.0))).unwrap();
            for (a, b) in g.coeffs.iter().zip(&g3.coeffs) {
                assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
            // stable central differences (step-halving rides out the thin
            // transition zones of the hair slices)
            let f = |v: &[f64]| body.gauge(&Point::new(v.to_vec())).unwrap();
            let check =
                crate::verify::gradient_check(&f, &g.coeffs, &x.coords, 1e-6, tol::GRADIENT_CHECK);
            assert!(check.pass, "{check:?}");
            tested += 1;
        }
    }

    #[test]
    fn locality_identity_is_exact() {
        let fx = fixture(2);
        let idx = SliceIndex::build(&fx.atlas, &fx.norm);
        let body = SmoothBody::new(&fx.atlas, &idx, &fx.norm);
        // a point on an axis well inside the body, support {0}
        let y = Point::new(vec![0.6, 0.0]);
        let hood = locality_neighborhood(&body, &y).unwrap();
        assert_eq!(hood.f, SubspaceId::new(vec![0]));
        let rep = verify_locality(&body, &y, &hood, 300, 9);
        assert!(rep.center_in_u);
        assert!(rep.samples > 0);
        assert_eq!(rep.max_diff, 0.0, "{rep:?}");
    }

    #[test]
    fn locality_is_global_in_dimension_one() {
        let fx = fixture(1);
        let idx = SliceIndex::build(&fx.atlas, &fx.norm);
        let body = SmoothBody::new(&fx.atlas, &idx, &fx.norm);
        let f = SubspaceId::new(vec![0]);
        let mut r = rng::stream(10, "locality-d1");
        for _ in 0..200 {
            let y = Point::new(vec![rng::normal(&mut r)]);
            assert_eq!(body.phi(&y), body.phi_restricted(&f, &y));
        }
    }

    #[test]
    fn sandwich_chain_has_no_violations_at_d2() {
        let fx = fixture(2);
        let idx = SliceIndex::build(&fx.atlas, &fx.norm);
        let body = SmoothBody::new(&fx.atlas, &idx, &fx.norm);
        let rep = verify_sandwich_chain(&body, 2000, 11);
        assert_eq!(rep.shrunken_ball_to_zero_set, 0);
        assert_eq!(rep.zero_set_to_body, 0);
        assert_eq!(rep.body_to_open_body, 0);
        assert_eq!(rep.open_body_to_excised, 0);
        assert_eq!(rep.excised_to_ball, 0);
    }
}
