//! The excised bodies as norm unit balls: the polyhedral gauge, restricted
//! half-space representations, vertex enumeration, and the locality witness
//! for the finite-coordinate dependence of the gauge.

use crate::construction::{body_contains, Scope, SliceAtlas};
use crate::index::SliceIndex;
use crate::linalg;
use crate::space::{pairing, BaseNorm, Functional, Point, SubspaceId};
use crate::tol;
use crate::{mesh, rng};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolyError {
    #[error("point is not on the gauge unit sphere: mu_P = {value}")]
    NotOnSphere { value: f64 },
    #[error("point has empty support")]
    EmptySupport,
    #[error("subspace not present in the atlas")]
    UnknownSubspace,
    #[error("restricted polytope is unbounded along a sampled direction")]
    Unbounded,
}

/// A view of one excised body (the unit ball of the polyhedral gauge at the
/// chosen scope).
pub struct PolyBody<'a> {
    pub atlas: &'a SliceAtlas,
    pub index: &'a SliceIndex,
    pub norm: &'a BaseNorm,
}

impl<'a> PolyBody<'a> {
    pub fn new(atlas: &'a SliceAtlas, index: &'a SliceIndex, norm: &'a BaseNorm) -> Self {
        PolyBody { atlas, index, norm }
    }

    pub fn contains(&self, y: &Point, scope: Scope<'_>) -> bool {
        body_contains(self.atlas, self.index, self.norm, y, scope)
    }

    /// The gauge `max(N(x), max_j |<psi_j, x>| / (1 − delta_j))`, whose unit
    /// ball is the fully excised body. Homogeneity lets the query run at the
    /// norm-one rescaling of `x`, where the index windows are tight.
    pub fn gauge(&self, x: &Point) -> f64 {
        let n = self.norm.eval_point(x);
        if n < 1e-300 {
            return 0.0;
        }
        let u = Point::new(linalg::scale(&x.coords, 1.0 / n));
        let mut best = self.norm.eval_point(&u);
        let delta_max = self.atlas.max_total_margin();
        let threshold = (best * (1.0 - delta_max)).max(0.0);
        self.index.visit_candidates(self.atlas, &u.coords, threshold, |_g, _i, s| {
            let v = pairing(&s.psi, &u).expect("dims").abs() / (1.0 - s.delta);
            if v > best {
                best = v;
            }
        });
        n * best
    }
}

/// Signed half-space list `{ y : <w_j, y> ≤ c_j }` for the slices of all
/// subspaces contained in `F`.
#[derive(Debug, Clone, Serialize)]
pub struct HalfSpaceRep {
    pub f: SubspaceId,
    pub constraints: Vec<(Functional, f64)>,
}

impl HalfSpaceRep {
    pub fn satisfied_by(&self, y: &Point) -> bool {
        self.constraints
            .iter()
            .all(|(w, c)| pairing(w, y).expect("dims") <= c + tol::LINEAR_TEST)
    }
}

pub fn restricted_halfspaces(atlas: &SliceAtlas, f: &SubspaceId) -> Result<HalfSpaceRep, PolyError> {
    if !atlas.budgets.contains_key(f) {
        return Err(PolyError::UnknownSubspace);
    }
    let mut constraints = Vec::new();
    for (g, omega) in &atlas.omegas {
        if !g.is_subset_of(f) {
            continue;
        }
        for s in omega {
            let w = if s.sign == 1 { s.psi.clone() } else { s.psi.neg() };
            constraints.push((w, 1.0 - s.delta));
        }
    }
    Ok(HalfSpaceRep { f: f.clone(), constraints })
}

/// Vertex evidence for the restricted polytope `C(F)`.
#[derive(Debug, Clone, Serialize)]
pub struct VertexReport {
    pub f: String,
    pub count: usize,
    pub max_norm: f64,
    /// True when the vertex set is exact (dims 1 and 2); dimension 3 reports
    /// sampled radial extremes instead.
    pub exact: bool,
}

/// Enumerates the vertices of the restricted half-space polytope.
///
/// Dimension 1 and 2 are exact (the 2-d case via polar duality and a convex
/// hull). Dimension 3 reports boundary extremes along a dense direction mesh,
/// a certified-from-below probe of the vertex norms; exact double description
/// is not attempted at atlas-scale constraint counts.
pub fn enumerate_vertices(
    atlas: &SliceAtlas,
    index: &SliceIndex,
    norm: &BaseNorm,
    rep: &HalfSpaceRep,
) -> Result<(Vec<Point>, VertexReport), PolyError> {
    let _ = index;
    let f = &rep.f;
    let d = atlas.d;
    match f.dim() {
        1 => {
            let a = f.members()[0];
            let e = Point::basis(d, a);
            let x_hat = Point::new(linalg::scale(&e.coords, 1.0 / norm.eval_point(&e)));
            let mut t_max = f64::INFINITY;
            for (w, c) in &rep.constraints {
                let act = pairing(w, &x_hat).expect("dims");
                if act > 1e-15 {
                    t_max = t_max.min(c / act);
                }
            }
            if !t_max.is_finite() {
                return Err(PolyError::Unbounded);
            }
            let v = Point::new(linalg::scale(&x_hat.coords, t_max));
            let verts = vec![v.clone(), v.neg()];
            let max_norm = norm.eval_point(&v);
            Ok((verts, VertexReport { f: f.label(), count: 2, max_norm, exact: true }))
        }
        2 => {
            let (a, b) = (f.members()[0], f.members()[1]);
            // polar duality: the polytope is the polar of conv{ w_j / c_j }
            let duals: Vec<(f64, f64)> = rep
                .constraints
                .iter()
                .map(|(w, c)| (w.coeffs[a] / c, w.coeffs[b] / c))
                .collect();
            let hull = convex_hull_2d(&duals);
            if hull.len() < 3 {
                return Err(PolyError::Unbounded);
            }
            let mut verts = Vec::with_capacity(hull.len());
            let mut max_norm = 0.0f64;
            for k in 0..hull.len() {
                let p = duals[hull[k]];
                let q = duals[hull[(k + 1) % hull.len()]];
                let det = p.0 * q.1 - p.1 * q.0;
                if det.abs() < 1e-30 {
                    continue;
                }
                let va = (q.1 - p.1) / det;
                let vb = (p.0 - q.0) / det;
                let mut v = Point::zeros(d);
                v.coords[a] = va;
                v.coords[b] = vb;
                max_norm = max_norm.max(norm.eval_point(&v));
                verts.push(v);
            }
            let count = verts.len();
            Ok((verts, VertexReport { f: f.label(), count, max_norm, exact: true }))
        }
        3 => {
            // radial function r(u) = 1 / max_j <w_j, u>/c_j along a direction
            // mesh; the slice index retrieves the active constraints
            let sphere = mesh::mesh_sphere(f, 0.05, norm, 1 << 22, false, atlas.seed)
                .map_err(|_| PolyError::Unbounded)?;
            let mut verts = Vec::new();
            let mut max_norm = 0.0f64;
            for u in &sphere.points {
                // certified window start: every direction is within the gap
                // reach of some constraint direction
                let mut best = 0.0f64;
                let threshold = 0.98 * norm.eval_point(u);
                index.visit_candidates(atlas, &u.coords, threshold, |g, _i, s| {
                    if !g.is_subset_of(f) {
                        return;
                    }
                    let v = pairing(&s.psi, u).expect("dims").abs() / (1.0 - s.delta);
                    best = best.max(v);
                });
                if best <= 0.0 {
                    // wide-gap fallback: full scan for this direction
                    for (w, c) in &rep.constraints {
                        let act = pairing(w, u).expect("dims");
                        if act > 0.0 {
                            best = best.max(act / c);
                        }
                    }
                }
                if best <= 0.0 {
                    return Err(PolyError::Unbounded);
                }
                let v = Point::new(linalg::scale(&u.coords, 1.0 / best));
                let nv = norm.eval_point(&v);
                if nv > max_norm {
                    max_norm = nv;
                    verts.push(v);
                }
            }
            let count = verts.len();
            Ok((verts, VertexReport { f: f.label(), count, max_norm, exact: false }))
        }
        _ => Err(PolyError::Unbounded),
    }
}

/// Andrew monotone chain; returns hull member indices in ccw order.
fn convex_hull_2d(pts: &[(f64, f64)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by(|&i, &j| pts[i].0.total_cmp(&pts[j].0).then(pts[i].1.total_cmp(&pts[j].1)));
    idx.dedup_by(|&mut i, &mut j| pts[i] == pts[j]);
    if idx.len() < 3 {
        return idx;
    }
    let cross = |o: usize, p: usize, q: usize| -> f64 {
        (pts[p].0 - pts[o].0) * (pts[q].1 - pts[o].1)
            - (pts[p].1 - pts[o].1) * (pts[q].0 - pts[o].0)
    };
    let mut lower: Vec<usize> = Vec::new();
    for &i in &idx {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], i) <= 0.0 {
            lower.pop();
        }
        lower.push(i);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &i in idx.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], i) <= 0.0 {
            upper.pop();
        }
        upper.push(i);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

#[derive(Debug, Clone, Serialize)]
pub struct RestrictionReport {
    pub f: String,
    pub samples: usize,
    pub membership_mismatches: usize,
    pub vertex: VertexReport,
    pub theta: f64,
}

/// Checks that on `span F`, membership in the full body equals the restricted
/// half-space test, and that all enumerated vertices are norm-interior by the
/// tube margin.
pub fn verify_polyhedral_restriction(
    atlas: &SliceAtlas,
    index: &SliceIndex,
    norm: &BaseNorm,
    f: &SubspaceId,
    k: usize,
    seed: u64,
) -> Result<RestrictionReport, PolyError> {
    let rep = restricted_halfspaces(atlas, f)?;
    let body = PolyBody::new(atlas, index, norm);
    let mut r = rng::stream(seed, &format!("poly-restrict/{}", f.label()));
    let mut mismatches = 0usize;
    for _ in 0..k {
        let mut y = Point::zeros(atlas.d);
        for &i in f.members() {
            y.coords[i] = rng::normal(&mut r);
        }
        let n = norm.eval_point(&y);
        if n < 1e-12 {
            continue;
        }
        let radius: f64 = r.gen_range(0.0..1.2);
        let s = radius / n;
        y.coords.iter_mut().for_each(|c| *c *= s);
        let full = body.contains(&y, Scope::Full);
        let restricted = rep.satisfied_by(&y);
        if full != restricted {
            mismatches += 1;
        }
    }
    let (_, vertex) = enumerate_vertices(atlas, index, norm, &rep)?;
    Ok(RestrictionReport {
        f: f.label(),
        samples: k,
        membership_mismatches: mismatches,
        vertex,
        theta: atlas.budgets[f].theta,
    })
}

/// The locality witness at a gauge-sphere point: a ball radius and the finite
/// functional list that decides membership inside it.
#[derive(Debug, Clone)]
pub struct LfcWitness {
    pub f: SubspaceId,
    pub radius: f64,
    /// Scaled functionals `psi_j / (1 − delta_j)`; membership inside the ball
    /// is equivalent to all of them being at most one in absolute value.
    pub functionals: Vec<Functional>,
}

pub fn lfc_witness(
    atlas: &SliceAtlas,
    index: &SliceIndex,
    norm: &BaseNorm,
    x: &Point,
) -> Result<LfcWitness, PolyError> {
    let body = PolyBody::new(atlas, index, norm);
    let mu = body.gauge(x);
    if (mu - 1.0).abs() > 1e-9 {
        return Err(PolyError::NotOnSphere { value: mu });
    }
    let f = SubspaceId::support(x, 1e-12).ok_or(PolyError::EmptySupport)?;
    if !atlas.budgets.contains_key(&f) {
        return Err(PolyError::UnknownSubspace);
    }
    let theta = atlas.budgets[&f].theta;
    let mut functionals = Vec::new();
    for (g, omega) in &atlas.omegas {
        if !g.is_subset_of(&f) {
            continue;
        }
        for s in omega {
            if s.sign == 1 {
                functionals.push(s.psi.scaled(1.0 / (1.0 - s.delta)));
            }
        }
    }
    Ok(LfcWitness { f, radius: theta / 2.0, functionals })
}

#[derive(Debug, Clone, Serialize)]
pub struct LfcReport {
    pub samples: usize,
    pub violations: usize,
}

/// Samples the witness ball and checks the membership equivalence.
pub fn verify_lfc_witness(
    atlas: &SliceAtlas,
    index: &SliceIndex,
    norm: &BaseNorm,
    x: &Point,
    witness: &LfcWitness,
    samples: usize,
    seed: u64,
) -> LfcReport {
    let body = PolyBody::new(atlas, index, norm);
    let mut r = rng::stream(seed, &format!("lfc/{}", witness.f.label()));
    let mut violations = 0usize;
    for trial in 0..samples {
        let y = if trial == 0 {
            x.clone() // boundary convention: the center itself must agree
        } else {
            let dir = rng::normal_vec(&mut r, atlas.d);
            let n = norm.eval(&dir);
            if n < 1e-12 {
                continue;
            }
            let rad: f64 = r.gen_range(0.0..1.0) * 0.999 * witness.radius;
            let mut y = x.clone();
            linalg::axpy(&mut y.coords, rad / n, &dir);
            y
        };
        let in_body = body.contains(&y, Scope::Full);
        let mut max_value = 0.0f64;
        for w in &witness.functionals {
            max_value = max_value.max(pairing(w, &y).expect("dims").abs());
        }
        let by_witness = max_value <= 1.0 + tol::LINEAR_TEST;
        // samples landing within rounding of the decision boundary are
        // classified by convention on both sides; skip the dead band
        if (max_value - 1.0).abs() <= 4.0 * tol::LINEAR_TEST {
            continue;
        }
        if in_body != by_witness {
            violations += 1;
        }
    }
    LfcReport { samples, violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{run_construction, BuildConfig};
    use crate::space::{canonical_system, NormKind};

    struct Fixture {
        atlas: SliceAtlas,
        norm: BaseNorm,
    }

    fn fixture(d: usize, eps_global: f64) -> Fixture {
        let (sys, norm) = canonical_system(NormKind::Euclidean, 0.05, d).unwrap();
        let cfg = BuildConfig { d, eps_global, ..BuildConfig::default() };
        let atlas = run_construction(&cfg, &sys, &norm).unwrap();
        Fixture { atlas, norm }
    }

    #[test]
    fn membership_basics() {
        let fx = fixture(2, 0.2);
        let idx = SliceIndex::build(&fx.atlas, &fx.norm);
        let body = PolyBody::new(&fx.atlas, &idx, &fx.norm);
        assert!(body.contains(&Point::zeros(2), Scope::Full));
        // exposed points of any slice are excised
        let f = SubspaceId::new(vec![0]);
        let s = &fx.atlas.omegas[&f][1];
        assert!(!body.contains(&s.exposed_point(), Scope::Full));
        // points inside the shrunken ball stay in
        let mut r = rng::stream(3, "membership-inner");
        for _ in 0..500 {
            let v = rng::normal_vec(&mut r, 2);
            let n = fx.norm.eval(&v);
            if n < 1e-9 {
                continue;
            }
            let y = Point::new(linalg::scale(&v, (1.0 - fx.atlas.eps_global) * 0.999 / n));
            assert!(body.contains(&y, Scope::Full));
        }
    }

    #[test]
    fn gauge_on_the_one_dimensional_atlas() {
        let fx = fixture(1, 0.2);
        let idx = SliceIndex::build(&fx.atlas, &fx.norm);
        let body = PolyBody::new(&fx.atlas, &idx, &fx.norm);
        assert_eq!(body.gauge(&Point::zeros(1)), 0.0);
        let f = SubspaceId::new(vec![0]);
        let delta = fx.atlas.budgets[&f].level_margin;
        let e = Point::basis(1, 0);
        let x_hat = Point::new(linalg::scale(&e.coords, 1.0 / fx.norm.eval_point(&e)));
        let mu = body.gauge(&x_hat);
        assert!((mu - 1.0 / (1.0 - delta)).abs() < 1e-12, "mu {mu}");
    }

    #[test]
    fn gauge_is_a_symmetric_norm_between_the_sandwich_bounds() {
        let fx = fixture(2, 0.2);
        let idx = SliceIndex::build(&fx.atlas, &fx.norm);
        let body = PolyBody::new(&fx.atlas, &idx, &fx.norm);
        let mut r = rng::stream(5, "gauge-sandwich");
        for _ in 0..1000 {
            let x = Point::new(rng::normal_vec(&mut r, 2));
            let y = Point::new(rng::normal_vec(&mut r, 2));
            let (mx, my) = (body.gauge(&x), body.gauge(&y));
            // central symmetry is exact
            assert_eq!(mx.to_bits(), body.gauge(&x.neg()).to_bits());
            // norm axioms at sample scale
            let xy = Point::new(linalg::add(&x.coords, &y.coords));
            assert!(body.gauge(&xy) <= mx + my + tol::NORM_AXIOM);
            let n = fx.norm.eval_point(&x);
            assert!(n <= mx + 1e-12);
            assert!(mx <= n / (1.0 - fx.atlas.eps_global) + 1e-12);
        }
    }

    #[test]
    fn restricted_halfspace_counts() {
        let fx = fixture(2, 0.2);
        let f0 = SubspaceId::new(vec![0]);
        let rep = restricted_halfspaces(&fx.atlas, &f0).unwrap();
        assert_eq!(rep.constraints.len(), 2);
        let f01 = SubspaceId::new(vec![0, 1]);
        let rep = restricted_halfspaces(&fx.atlas, &f01).unwrap();
        let total: usize = fx.atlas.omegas.values().map(|o| o.len()).sum();
        assert_eq!(rep.constraints.len(), total);
        // constraints come in opposite-sign pairs
        for pair in rep.constraints.chunks(2) {
            assert_eq!(pair[0].1, pair[1].1);
            let sum: f64 = pair[0]
                .0
                .coeffs
                .iter()
                .zip(&pair[1].0.coeffs)
                .map(|(a, b)| (a + b).abs())
                .sum();
            assert!(sum < 1e-15);
        }
    }

    #[test]
    fn one_dimensional_restriction_is_a_segment() {
        let fx = fixture(1, 0.2);
        let idx = SliceIndex::build(&fx.atlas, &fx.norm);
        let f = SubspaceId::new(vec![0]);
        let report = verify_polyhedral_restriction(&fx.atlas, &idx, &fx.norm, &f, 1000, 7).unwrap();
        assert_eq!(report.membership_mismatches, 0);
        assert_eq!(report.vertex.count, 2);
        let delta = fx.atlas.budgets[&f].level_margin;
        assert!((report.vertex.max_norm - (1.0 - delta)).abs() < 1e-12);
        assert!(report.vertex.max_norm <= 1.0 - 2.0 * report.theta + tol::VERTEX_SLACK);
    }

    #[test]
    fn two_dimensional_restriction_matches_the_halfspace_polytope() {
        let fx = fixture(2, 0.2);
        let idx = SliceIndex::build(&fx.atlas, &fx.norm);
        for f in fx.atlas.budgets.keys() {
            let report =
                verify_polyhedral_restriction(&fx.atlas, &idx, &fx.norm, f, 1000, 11).unwrap();
            assert_eq!(report.membership_mismatches, 0, "{report:?}");
            assert!(
                report.vertex.max_norm <= 1.0 - 2.0 * report.theta + tol::VERTEX_SLACK,
                "{report:?}"
            );
            if f.dim() == 2 {
                assert!(report.vertex.exact);
                assert_eq!(report.vertex.count % 2, 0); // central symmetry
            }
        }
    }

    #[test]
    fn lfc_witness_on_the_one_dimensional_atlas() {
        let fx = fixture(1, 0.2);
        let idx = SliceIndex::build(&fx.atlas, &fx.norm);
        let f = SubspaceId::new(vec![0]);
        let delta = fx.atlas.budgets[&f].level_margin;
        let e = Point::basis(1, 0);
        let x_hat = Point::new(linalg::scale(&e.coords, 1.0 / fx.norm.eval_point(&e)));
        let x = Point::new(linalg::scale(&x_hat.coords, 1.0 - delta));
        let witness = lfc_witness(&fx.atlas, &idx, &fx.norm, &x).unwrap();
        assert_eq!(witness.functionals.len(), 1);
        assert!((witness.radius - fx.atlas.budgets[&f].theta / 2.0).abs() < 1e-15);
        let rep = verify_lfc_witness(&fx.atlas, &idx, &fx.norm, &x, &witness, 1000, 3);
        assert_eq!(rep.violations, 0);
    }

    #[test]
    fn lfc_witness_functional_count_is_bounded_by_the_restriction() {
        let fx = fixture(2, 0.2);
        let idx = SliceIndex::build(&fx.atlas, &fx.norm);
        let body = PolyBody::new(&fx.atlas, &idx, &fx.norm);
        let mut r = rng::stream(17, "lfc-count");
        let mut tested = 0;
        while tested < 20 {
            let v = rng::normal_vec(&mut r, 2);
            let n = linalg::norm2(&v);
            if n < 1e-9 {
                continue;
            }
            let mut x = Point::new(linalg::scale(&v, 1.0 / n));
            let mu = body.gauge(&x);
            x.coords.iter_mut().for_each(|c| *c /= mu);
            let witness = lfc_witness(&fx.atlas, &idx, &fx.norm, &x).unwrap();
            let rep = restricted_halfspaces(&fx.atlas, &witness.f).unwrap();
            assert!(witness.functionals.len() <= rep.constraints.len());
            let lfc = verify_lfc_witness(&fx.atlas, &idx, &fx.norm, &x, &witness, 200, tested);
            assert_eq!(lfc.violations, 0);
            tested += 1;
        }
    }
}
