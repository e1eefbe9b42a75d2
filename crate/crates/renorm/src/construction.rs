//! The inductive slice-atlas construction over the coordinate-subspace
//! lattice: per-subspace budgets, certified sphere covers by slices, tube
//! widths, and the compatibility check between scoped bodies.
//!
//! Coverage certificates use the quadratic-deficit constant `C` of the norm:
//! a slice of margin `delta` centered at `z` contains every unit `y` with
//! `N(y − z) ≤ √(2·delta/C)`. Writing `R = √(2·delta/C)`, a mesh of fineness
//! `h = 0.3 R` plus kept centers within `0.65 R − h` of every needed mesh
//! point shields all true sphere points at reach `0.95 R`, i.e. with
//! functional slack at least `(1 − 0.95²)·delta`.

use crate::index::SliceIndex;
use crate::linalg;
use crate::mesh::{self, MeshError};
use crate::rng;
use crate::slices::{self, Slice, SliceError};
use crate::space::{
    pairing, BaseNorm, BiorthogonalSystem, Functional, Point, SpaceError, SubspaceId,
};
use crate::tol;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

/// Mesh fineness as a fraction of the quadratic reach `R`.
pub const MESH_FRAC: f64 = 0.3;
/// Certified shielding reach as a fraction of `R` (squared gives the deficit).
pub const SHIELD_FRAC: f64 = 0.95;
/// Tube width cap as a fraction of the level margin.
pub const THETA_MARGIN_FRAC: f64 = 0.09;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("dimension {d} exceeds the configured cap {d_max}")]
    DimensionCap { d: usize, d_max: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Slice(#[from] SliceError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error("subspace {f}: {uncovered} mesh points uncovered at an unfloored level")]
    CoverageGap { f: String, uncovered: usize },
    #[error("subspace {f}: no budget at or below eps_global fits the mesh budget")]
    InfeasibleBudget { f: String },
    #[error("subspace {f}: tube width collapsed to zero")]
    ThetaCollapse { f: String },
    #[error("atlas serialization: {0}")]
    Serde(String),
}

#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub d: usize,
    pub eps_global: f64,
    /// Upper cap on mesh fineness; per-level fineness adapts below it.
    pub mesh_h: f64,
    pub seed: u64,
    /// Cap on mesh cardinality per subspace.
    pub mesh_budget: usize,
    /// Raise a level's budget to the smallest mesh-feasible value instead of
    /// failing; the raise is recorded and flagged.
    pub allow_budget_floor: bool,
    pub allow_random_mesh: bool,
    pub d_max: usize,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            d: 2,
            eps_global: 0.2,
            mesh_h: 0.1,
            seed: 0,
            mesh_budget: 4_000_000,
            allow_budget_floor: true,
            allow_random_mesh: false,
            d_max: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceBudget {
    pub eps: f64,
    pub theta: f64,
    /// Shared slice margin at this subspace.
    pub level_margin: f64,
    /// Enlargement margin left for the smoothing stage.
    pub enlarge: f64,
    /// Certified covering radius of the mesh this level was built on.
    pub mesh_fineness: f64,
    /// Whether eps was raised above the budget rule for mesh feasibility.
    pub floored: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AtlasFlags {
    /// Subspaces whose budget was floored (budget rule (iii) fails there).
    pub floored: Vec<String>,
    /// Mesh points left uncovered per subspace (floored levels only).
    pub coverage_gaps: BTreeMap<String, usize>,
    /// Set when any mesh was built by the uncertified random fallback.
    pub uncertified_mesh: bool,
    /// Set when the norm's quadratic-deficit constant is only sampled.
    pub uncertified_smoothness: bool,
}

/// The full output of the construction.
#[derive(Debug, Clone)]
pub struct SliceAtlas {
    pub d: usize,
    pub eps_global: f64,
    pub mesh_h: f64,
    pub seed: u64,
    pub m_bound: f64,
    pub budgets: BTreeMap<SubspaceId, SliceBudget>,
    pub omegas: BTreeMap<SubspaceId, Vec<Slice>>,
    pub flags: AtlasFlags,
}

impl SliceAtlas {
    /// Largest slice margin in the atlas, including enlargement room.
    pub fn max_total_margin(&self) -> f64 {
        self.budgets.values().map(|b| b.level_margin + b.enlarge).fold(0.0, f64::max)
    }

    pub fn subspaces(&self) -> impl Iterator<Item = &SubspaceId> {
        self.budgets.keys()
    }

    pub fn total_slices(&self) -> usize {
        self.omegas.values().map(|v| v.len()).sum()
    }
}

/// All nonempty subsets of `{0, …, d−1}` ordered by cardinality then
/// lexicographically.
pub fn enumerate_lattice(d: usize, d_max: usize) -> Result<Vec<SubspaceId>, BuildError> {
    if d == 0 || d > d_max {
        return Err(BuildError::DimensionCap { d, d_max });
    }
    let mut subs: Vec<Vec<usize>> = (1u32..(1 << d))
        .map(|mask| (0..d).filter(|i| mask >> i & 1 == 1).collect())
        .collect();
    subs.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(subs.into_iter().map(SubspaceId::new).collect())
}

/// Budget rule: `min(eps_global, 1/(4nM), min_{G ⊊ F} θ_G / (4nM))`.
pub fn choose_epsilon(
    f: &SubspaceId,
    budgets: &BTreeMap<SubspaceId, SliceBudget>,
    m_bound: f64,
    eps_global: f64,
) -> f64 {
    let n = f.dim() as f64;
    let mut eps = eps_global.min(1.0 / (4.0 * n * m_bound));
    for (g, b) in budgets {
        if g.is_proper_subset_of(f) {
            eps = eps.min(b.theta / (4.0 * n * m_bound));
        }
    }
    eps
}

/// Quadratic reach of a slice margin under the norm's deficit constant.
fn quad_reach(norm: &BaseNorm, delta: f64) -> f64 {
    (2.0 * delta / norm.quad_smoothness).sqrt()
}

fn level_fineness(norm: &BaseNorm, mesh_h: f64, delta: f64) -> f64 {
    mesh_h.min(MESH_FRAC * quad_reach(norm, delta))
}

/// Estimated mesh cardinality at fineness `h` for a subspace of dimension
/// `dim` (conservative for the icosphere).
fn mesh_cost(dim: usize, h: f64, ratio: f64) -> f64 {
    match dim {
        1 => 2.0,
        2 => (std::f64::consts::TAU * ratio / h).ceil() + 1.0,
        3 => {
            let k = (1.8 * ratio / h).log2().ceil().max(0.0);
            10.0 * 4f64.powf(k) + 2.0
        }
        _ => 0.0,
    }
}

fn floor_epsilon(
    f: &SubspaceId,
    eps_formula: f64,
    eps_global: f64,
    m_bound: f64,
    norm: &BaseNorm,
    cfg: &BuildConfig,
) -> Result<(f64, bool), BuildError> {
    let ratio = norm.l2_upper / norm.l2_lower;
    let cost_of = |eps: f64| -> Result<f64, BuildError> {
        let delta = slices::margin_for_diameter(eps, norm)?;
        Ok(mesh_cost(f.dim(), level_fineness(norm, cfg.mesh_h, delta), ratio))
    };
    let budget = cfg.mesh_budget as f64;
    if cost_of(eps_formula)? <= budget {
        return Ok((eps_formula, false));
    }
    if !cfg.allow_budget_floor {
        return Err(BuildError::InfeasibleBudget { f: f.label() });
    }
    let n = f.dim() as f64;
    let cap = eps_global.min(0.999 / (4.0 * n * m_bound));
    if cost_of(cap)? > budget {
        return Err(BuildError::InfeasibleBudget { f: f.label() });
    }
    let (mut lo, mut hi) = (eps_formula, cap);
    for _ in 0..80 {
        let mid = (lo * hi).sqrt();
        if cost_of(mid)? <= budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((hi, true))
}

/// Runs the induction over the lattice and assembles the atlas.
pub fn run_construction(
    cfg: &BuildConfig,
    sys: &BiorthogonalSystem,
    norm: &BaseNorm,
) -> Result<SliceAtlas, BuildError> {
    assert_eq!(sys.dim, cfg.d);
    let lattice = enumerate_lattice(cfg.d, cfg.d_max)?;
    let mut budgets: BTreeMap<SubspaceId, SliceBudget> = BTreeMap::new();
    let mut omegas: BTreeMap<SubspaceId, Vec<Slice>> = BTreeMap::new();
    let mut flags = AtlasFlags {
        uncertified_smoothness: !norm.smoothness_certified,
        ..AtlasFlags::default()
    };

    for f in &lattice {
        let eps_formula = choose_epsilon(f, &budgets, sys.m_bound, cfg.eps_global);
        let (eps, floored) = floor_epsilon(f, eps_formula, cfg.eps_global, sys.m_bound, norm, cfg)?;
        if floored {
            flags.floored.push(f.label());
        }
        let delta = slices::margin_for_diameter(eps, norm)?;
        let r_full = quad_reach(norm, delta);
        let h_target = level_fineness(norm, cfg.mesh_h, delta);
        let sphere = mesh::mesh_sphere(
            f,
            h_target,
            norm,
            cfg.mesh_budget,
            cfg.allow_random_mesh,
            cfg.seed,
        )?;
        if !sphere.certified {
            flags.uncertified_mesh = true;
        }
        let h = if sphere.certified { sphere.covering_radius } else { h_target };

        // classification against predecessor families
        let preds: Vec<(&SubspaceId, &SliceBudget, PredCover)> = budgets
            .iter()
            .filter(|(g, _)| g.is_proper_subset_of(f))
            .map(|(g, b)| (g, b, PredCover::build(g, omegas[g].as_slice(), norm)))
            .collect();
        let mut covered_slack: Vec<Option<f64>> = vec![None; sphere.points.len()];
        let mut blocked: Vec<bool> = vec![false; sphere.points.len()];
        let buffer_extra = if floored {
            // keep floored slices clear of every proper tube: center distance
            // at least theta_G plus the slice's own certified diameter
            slices::diam_bound_at(norm, delta + allowance_room(eps, delta, norm))?
        } else {
            0.0
        };
        for (i, x) in sphere.points.iter().enumerate() {
            for (g, b, cover) in &preds {
                let r_g = quad_reach(norm, b.level_margin);
                let cap = (SHIELD_FRAC * r_g - h).max(0.0);
                if let Some((_dist, j)) = cover.nearest(x, norm, cap) {
                    let s = &omegas[*g][j];
                    let slack = pairing(&s.psi, x).expect("dims").abs() - (1.0 - b.level_margin);
                    let entry = covered_slack[i].get_or_insert(f64::NEG_INFINITY);
                    *entry = entry.max(slack);
                }
                if covered_slack[i].is_none()
                    && norm.dist_to_subspace_value(x, g) < b.theta + buffer_extra
                {
                    blocked[i] = true;
                }
            }
        }
        drop(preds);

        // greedy symmetric cover of the remaining mesh points; circles walk
        // their first half (ascending angle, see mesh_sphere), which together
        // with the sign pairs covers the whole sphere
        let keep_radius = SHIELD_FRAC * r_full - h;
        assert!(keep_radius > 0.0, "mesh fineness leaves no cover radius");
        let mut kept: Vec<usize> = Vec::new();
        let mut kept_lookup = CoverLookup::new(f, norm, keep_radius);
        let walk: Vec<usize> = if f.dim() == 2 {
            (0..sphere.points.len() / 2).collect()
        } else {
            (0..sphere.points.len()).filter(|&i| positive_rep(&sphere.points[i])).collect()
        };
        for &i in &walk {
            let x = &sphere.points[i];
            if covered_slack[i].is_some() || blocked[i] {
                continue;
            }
            if kept_lookup.nearest(x, &sphere.points, &kept, norm, keep_radius).is_none() {
                kept.push(i);
                kept_lookup.insert(x, kept.len() - 1);
            }
        }

        // slices for the kept centers, closed under negation
        let mut omega_f: Vec<Slice> = Vec::with_capacity(2 * kept.len());
        for &i in &kept {
            let x = sphere.points[i].clone();
            let psi = norm.norming_functional(&x)?;
            let s = Slice::new(x, psi, delta, 1)?;
            omega_f.push(s.negated());
            omega_f.push(s);
        }

        // second pass: own-level coverage slack and gap accounting
        let mut gaps = 0usize;
        let mut d_mesh = f64::INFINITY;
        for (i, x) in sphere.points.iter().enumerate() {
            if covered_slack[i].is_none() && !blocked[i] {
                if let Some((_, j)) =
                    kept_lookup.nearest(x, &sphere.points, &kept, norm, keep_radius)
                {
                    let s = &omega_f[2 * j + 1];
                    let slack = pairing(&s.psi, x).expect("dims").abs() - (1.0 - delta);
                    covered_slack[i] = Some(slack);
                }
            }
            match covered_slack[i] {
                Some(slack) => d_mesh = d_mesh.min(slack),
                None => gaps += 1,
            }
        }
        if gaps > 0 {
            if !floored {
                return Err(BuildError::CoverageGap { f: f.label(), uncovered: gaps });
            }
            flags.coverage_gaps.insert(f.label(), gaps);
        }

        let enlarge = slices::enlarge_margin(&omega_f, eps, norm)?;
        let theta = if f.dim() == 1 {
            // exact escape distance from the exposed points: the margin itself
            let d_exact = delta;
            eps.min(d_exact / 2.0)
        } else {
            let d_floor = if d_mesh.is_finite() { d_mesh / 4.0 } else { THETA_MARGIN_FRAC * delta };
            eps.min(d_floor).min(THETA_MARGIN_FRAC * delta)
        };
        if !(theta > 0.0) {
            return Err(BuildError::ThetaCollapse { f: f.label() });
        }
        budgets.insert(
            f.clone(),
            SliceBudget { eps, theta, level_margin: delta, enlarge, mesh_fineness: h, floored },
        );
        omegas.insert(f.clone(), omega_f);
    }

    Ok(SliceAtlas {
        d: cfg.d,
        eps_global: cfg.eps_global,
        mesh_h: cfg.mesh_h,
        seed: cfg.seed,
        m_bound: sys.m_bound,
        budgets,
        omegas,
        flags,
    })
}

/// Margin room left by the enlargement allowance (used to size buffers).
fn allowance_room(eps: f64, delta: f64, norm: &BaseNorm) -> f64 {
    let allowance = norm.convexity_modulus * (0.95 * eps / norm.l2_upper).powi(2) / 8.0;
    (allowance - delta).max(0.0)
}

fn positive_rep(x: &Point) -> bool {
    for c in &x.coords {
        if *c > 0.0 {
            return true;
        }
        if *c < 0.0 {
            return false;
        }
    }
    false
}

fn pair_distance(x: &Point, z: &Point, norm: &BaseNorm) -> f64 {
    norm.eval_sub(&x.coords, &z.coords).min(norm.eval_add(&x.coords, &z.coords))
}

/// Accelerated nearest-exposed-point queries against one predecessor family.
enum PredCover<'a> {
    Small(&'a [Slice]),
    Circle { axes: (usize, usize), entries: Vec<(f64, usize)>, slices: &'a [Slice], scale: f64 },
}

impl<'a> PredCover<'a> {
    fn build(g: &SubspaceId, omega: &'a [Slice], norm: &BaseNorm) -> Self {
        let scale = norm.quad_matrix().and_then(|q| {
            let s = q[(0, 0)];
            for i in 0..q.n {
                for j in 0..q.n {
                    let want = if i == j { s } else { 0.0 };
                    if (q[(i, j)] - want).abs() > 1e-14 * s.max(1.0) {
                        return None;
                    }
                }
            }
            Some(s.sqrt())
        });
        match (g.dim(), scale) {
            (2, Some(s)) if omega.len() > 64 => {
                let axes = (g.members()[0], g.members()[1]);
                let mut entries: Vec<(f64, usize)> = omega
                    .iter()
                    .enumerate()
                    .filter(|(_, sl)| sl.sign == 1)
                    .map(|(j, sl)| {
                        let a = sl.x.coords[axes.1].atan2(sl.x.coords[axes.0]);
                        (a, j)
                    })
                    .collect();
                entries.sort_by(|p, q| p.0.total_cmp(&q.0));
                PredCover::Circle { axes, entries, slices: omega, scale: s }
            }
            _ => PredCover::Small(omega),
        }
    }

    /// Nearest exposed point of the family (either sign) within `cap`.
    fn nearest(&self, x: &Point, norm: &BaseNorm, cap: f64) -> Option<(f64, usize)> {
        match self {
            PredCover::Small(omega) => {
                let mut best: Option<(f64, usize)> = None;
                for (j, s) in omega.iter().enumerate() {
                    if s.sign != 1 {
                        continue;
                    }
                    let d = pair_distance(x, &s.x, norm);
                    if d <= cap + 1e-15 && best.map_or(true, |(b, _)| d < b) {
                        best = Some((d, j));
                    }
                }
                best
            }
            PredCover::Circle { axes, entries, slices, scale } => {
                // exact distance from x to the family's circle under s·|·|₂
                let mut in2 = 0.0;
                let mut out2 = 0.0;
                for (i, c) in x.coords.iter().enumerate() {
                    if i == axes.0 || i == axes.1 {
                        in2 += c * c;
                    } else {
                        out2 += c * c;
                    }
                }
                let radial = in2.sqrt() - 1.0 / scale;
                if scale * (radial * radial + out2).sqrt() > cap + 1e-12 {
                    return None;
                }
                let phi = x.coords[axes.1].atan2(x.coords[axes.0]);
                // planar chord bound: in-plane angle gap ≤ asin(cap) + slack
                let w = (cap.min(1.0)).asin() + 1e-6;
                let mut best: Option<(f64, usize)> = None;
                for center in
                    [phi, phi + std::f64::consts::PI, phi - std::f64::consts::PI]
                {
                    let lo = entries.partition_point(|e| e.0 < center - w);
                    for e in &entries[lo..] {
                        if e.0 > center + w {
                            break;
                        }
                        let d = pair_distance(x, &slices[e.1].x, norm);
                        if d <= cap + 1e-15 && best.map_or(true, |(b, _)| d < b) {
                            best = Some((d, e.1));
                        }
                    }
                }
                best
            }
        }
    }
}

/// Nearest-kept lookup for the greedy cover: sorted angles on circles, grid
/// hash on spheres, linear elsewhere.
enum CoverLookup {
    Linear,
    Circle { axes: (usize, usize), angles: Vec<f64>, window: f64 },
    Grid { cell: f64, map: std::collections::HashMap<(i64, i64, i64), Vec<usize>>, axes: [usize; 3] },
}

impl CoverLookup {
    fn new(f: &SubspaceId, norm: &BaseNorm, cap: f64) -> Self {
        let euclid_like = {
            let q = norm.quad_matrix();
            q.map_or(false, |q| {
                let s = q[(0, 0)];
                let mut ok = true;
                for i in 0..q.n {
                    for j in 0..q.n {
                        let want = if i == j { s } else { 0.0 };
                        ok &= (q[(i, j)] - want).abs() <= 1e-14 * s.max(1.0);
                    }
                }
                ok
            })
        };
        if f.dim() == 2 && euclid_like {
            // central angle between N-circle points at N-distance cap
            let chord = (cap / norm.l2_lower).min(2.0);
            let window = 2.0 * (chord / 2.0).asin() + 1e-9;
            CoverLookup::Circle {
                axes: (f.members()[0], f.members()[1]),
                angles: Vec::new(),
                window,
            }
        } else if f.dim() == 3 {
            let axes = [f.members()[0], f.members()[1], f.members()[2]];
            // cell = euclidean cap, so neighbors live one key apart per axis
            let cell = (cap / norm.l2_lower).max(1e-6);
            CoverLookup::Grid { cell, map: Default::default(), axes }
        } else {
            CoverLookup::Linear
        }
    }

    fn key(cell: f64, axes: &[usize; 3], x: &Point) -> (i64, i64, i64) {
        (
            (x.coords[axes[0]] / cell).floor() as i64,
            (x.coords[axes[1]] / cell).floor() as i64,
            (x.coords[axes[2]] / cell).floor() as i64,
        )
    }

    fn insert(&mut self, x: &Point, kept_pos: usize) {
        match self {
            CoverLookup::Grid { cell, map, axes } => {
                map.entry(Self::key(*cell, axes, x)).or_default().push(kept_pos);
                map.entry(Self::key(*cell, axes, &x.neg())).or_default().push(kept_pos);
            }
            CoverLookup::Circle { axes, angles, .. } => {
                debug_assert_eq!(kept_pos, angles.len());
                let a = x.coords[axes.1].atan2(x.coords[axes.0]).rem_euclid(std::f64::consts::PI);
                debug_assert!(angles.last().map_or(true, |p| *p <= a + 1e-12), "monotone walk");
                angles.push(a);
            }
            CoverLookup::Linear => {}
        }
    }

    /// Nearest kept center (either sign) within `cap`; returns its position
    /// in the kept list.
    fn nearest(
        &self,
        x: &Point,
        mesh: &[Point],
        kept: &[usize],
        norm: &BaseNorm,
        cap: f64,
    ) -> Option<(f64, usize)> {
        match self {
            CoverLookup::Linear => {
                let mut best: Option<(f64, usize)> = None;
                for (pos, &i) in kept.iter().enumerate() {
                    let d = pair_distance(x, &mesh[i], norm);
                    if d <= cap && best.map_or(true, |(b, _)| d < b) {
                        best = Some((d, pos));
                    }
                }
                best
            }
            CoverLookup::Circle { axes, angles, window } => {
                if angles.is_empty() {
                    return None;
                }
                // kept centers live in [0, π); sign pairs make the metric mod π
                let phi = x.coords[axes.1]
                    .atan2(x.coords[axes.0])
                    .rem_euclid(std::f64::consts::PI);
                let mut best: Option<(f64, usize)> = None;
                let check = |pos: usize, best: &mut Option<(f64, usize)>| {
                    let d = pair_distance(x, &mesh[kept[pos]], norm);
                    if d <= cap && best.map_or(true, |(b, _)| d < b) {
                        *best = Some((d, pos));
                    }
                };
                let period = std::f64::consts::PI;
                let mut ranges = vec![(phi - *window, phi + *window)];
                if phi - *window < 0.0 {
                    ranges.push((phi - *window + period, period + 1e-12));
                }
                if phi + *window > period {
                    ranges.push((-1e-12, phi + *window - period));
                }
                for (a, b) in ranges {
                    let lo = angles.partition_point(|t| *t < a);
                    for pos in lo..angles.len() {
                        if angles[pos] > b {
                            break;
                        }
                        check(pos, &mut best);
                    }
                }
                best
            }
            CoverLookup::Grid { cell, map, axes } => {
                let reach = (cap / norm.l2_lower / cell).ceil() as i64;
                let k0 = Self::key(*cell, axes, x);
                let mut best: Option<(f64, usize)> = None;
                for dx in -reach..=reach {
                    for dy in -reach..=reach {
                        for dz in -reach..=reach {
                            let Some(list) = map.get(&(k0.0 + dx, k0.1 + dy, k0.2 + dz)) else {
                                continue;
                            };
                            for &pos in list {
                                let d = pair_distance(x, &mesh[kept[pos]], norm);
                                if d <= cap && best.map_or(true, |(b, _)| d < b) {
                                    best = Some((d, pos));
                                }
                            }
                        }
                    }
                }
                best
            }
        }
    }
}

/// Tubular neighborhood `T(F, θ)` of a subspace inside the unit ball.
#[derive(Debug, Clone)]
pub struct Tube {
    pub f: SubspaceId,
    pub theta: f64,
}

pub fn tube_membership(y: &Point, tube: &Tube, norm: &BaseNorm) -> bool {
    norm.eval_point(y) <= 1.0 && norm.dist_to_subspace(y, &tube.f).0 < tube.theta
}

/// Membership scope for the excised bodies.
#[derive(Debug, Clone, Copy)]
pub enum Scope<'a> {
    /// Slices from subspaces of dimension at most `n`.
    Level(usize),
    /// Slices from subspaces contained in `F`.
    Restricted(&'a SubspaceId),
    /// Every slice in the atlas.
    Full,
}

impl Scope<'_> {
    pub fn admits(&self, g: &SubspaceId) -> bool {
        match self {
            Scope::Level(n) => g.dim() <= *n,
            Scope::Restricted(f) => g.is_subset_of(f),
            Scope::Full => true,
        }
    }
}

/// True when `y` escapes (is outside of) every in-scope open slice; the
/// linear tests carry tolerance `tol::LINEAR_TEST`.
pub fn escapes_scope(
    atlas: &SliceAtlas,
    idx: &SliceIndex,
    y: &Point,
    scope: Scope<'_>,
) -> bool {
    let threshold = 1.0 - atlas.max_total_margin() - 1e-9;
    let mut inside = false;
    idx.visit_candidates(atlas, &y.coords, threshold.max(0.0), |g, _i, s| {
        if inside || !scope.admits(g) {
            return;
        }
        let v = pairing(&s.psi, y).expect("dims").abs();
        if v > 1.0 - s.delta + tol::LINEAR_TEST {
            inside = true;
        }
    });
    !inside
}

/// Membership in the excised body of the given scope (ball test included).
pub fn body_contains(
    atlas: &SliceAtlas,
    idx: &SliceIndex,
    norm: &BaseNorm,
    y: &Point,
    scope: Scope<'_>,
) -> bool {
    norm.eval_point(y) <= 1.0 + tol::LINEAR_TEST && escapes_scope(atlas, idx, y, scope)
}

#[derive(Debug, Clone, Serialize)]
pub struct CompatReport {
    pub f: String,
    pub n: usize,
    pub samples: usize,
    pub violations: usize,
}

/// Samples the tube `T(F, θ_F/2)` and checks that level-`n` membership and
/// `F`-restricted membership agree exactly.
pub fn check_compatibility(
    atlas: &SliceAtlas,
    idx: &SliceIndex,
    norm: &BaseNorm,
    f: &SubspaceId,
    n: usize,
    k: usize,
    seed: u64,
) -> CompatReport {
    assert!(f.dim() <= n);
    let theta = atlas.budgets[f].theta;
    let mut r = rng::stream(seed, &format!("compat/{}/n={n}", f.label()));
    let d = atlas.d;
    let mut violations = 0usize;
    for _ in 0..k {
        let y = sample_tube_point(&mut r, d, f, theta / 2.0, norm);
        let in_level = body_contains(atlas, idx, norm, &y, Scope::Level(n));
        let in_restricted = body_contains(atlas, idx, norm, &y, Scope::Restricted(f));
        if in_level != in_restricted {
            violations += 1;
        }
    }
    CompatReport { f: f.label(), n, samples: k, violations }
}

/// A point of `T(F, width)`: a ball-of-F sample plus a small complement
/// perturbation.
pub fn sample_tube_point(
    r: &mut rand_chacha::ChaCha8Rng,
    d: usize,
    f: &SubspaceId,
    width: f64,
    norm: &BaseNorm,
) -> Point {
    let mut w = vec![0.0; d];
    for &i in f.members() {
        w[i] = rng::normal(r);
    }
    let nw = norm.eval(&w);
    let radius: f64 = r.gen_range(0.0..1.0f64).powf(1.0 / f.dim() as f64);
    let scale = if nw > 1e-12 { radius / nw } else { 0.0 };
    w.iter_mut().for_each(|c| *c *= scale);
    let room = (1.0 - norm.eval(&w)).max(0.0);
    let mut z = vec![0.0; d];
    let complement: Vec<usize> = (0..d).filter(|i| !f.contains(*i)).collect();
    if !complement.is_empty() {
        for &i in &complement {
            z[i] = rng::normal(r);
        }
        let nz = norm.eval(&z);
        if nz > 1e-12 {
            let amp = r.gen_range(0.0..1.0) * (0.999 * width).min(room);
            z.iter_mut().for_each(|c| *c *= amp / nz);
        }
    }
    Point::new(linalg::add(&w, &z))
}

/// Distance from `x` to `{ y : N(y) ≤ 1, <w_j, y> ≤ c_j }` in the metric of a
/// quadratic norm, by Dykstra alternating projections.
pub fn dykstra_distance(
    norm: &BaseNorm,
    halfspaces: &[(Functional, f64)],
    x: &Point,
    tolerance: f64,
    max_iter: usize,
) -> Option<f64> {
    norm.quad_matrix()?;
    let n_sets = halfspaces.len() + 1;
    let d = x.dim();
    let mut y = x.coords.clone();
    let mut corrections = vec![vec![0.0; d]; n_sets];
    // cache Q⁻¹ w and the induced dual norms
    let solves: Vec<(Vec<f64>, f64)> = halfspaces
        .iter()
        .map(|(w, _)| {
            let qi = norm.quad_solve(&w.coeffs).expect("quadratic");
            let sq = linalg::dot(&w.coeffs, &qi);
            (qi, sq)
        })
        .collect();
    let mut prev = y.clone();
    for it in 0..max_iter {
        for (set, corr) in corrections.iter_mut().enumerate() {
            let mut z = linalg::add(&y, corr);
            if set < halfspaces.len() {
                let (w, c) = &halfspaces[set];
                let (qi, sq) = &solves[set];
                let excess = linalg::dot(&w.coeffs, &z) - c;
                if excess > 0.0 && *sq > 1e-300 {
                    linalg::axpy(&mut z, -excess / sq, qi);
                }
            } else {
                let nz = norm.eval(&z);
                if nz > 1.0 {
                    z.iter_mut().for_each(|v| *v /= nz);
                }
            }
            *corr = linalg::sub(&linalg::add(&y, corr), &z);
            y = z;
        }
        if it % 8 == 7 {
            let moved = norm.eval(&linalg::sub(&y, &prev));
            if moved < tolerance {
                break;
            }
            prev = y.clone();
        }
    }
    Some(norm.eval(&linalg::sub(&x.coords, &y)))
}

// --- serialization -----------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct AtlasDoc {
    schema: u32,
    d: usize,
    eps_global: f64,
    mesh_h: f64,
    seed: u64,
    m_bound: f64,
    entries: Vec<AtlasEntry>,
    flags: AtlasFlags,
    content_hash: String,
}

#[derive(Serialize, Deserialize)]
struct AtlasEntry {
    subspace: Vec<usize>,
    budget: SliceBudget,
    slices: Vec<Slice>,
}

impl SliceAtlas {
    fn doc(&self) -> AtlasDoc {
        let mut keys: Vec<&SubspaceId> = self.budgets.keys().collect();
        keys.sort_by(|a, b| a.dim().cmp(&b.dim()).then_with(|| a.members().cmp(b.members())));
        AtlasDoc {
            schema: 1,
            d: self.d,
            eps_global: self.eps_global,
            mesh_h: self.mesh_h,
            seed: self.seed,
            m_bound: self.m_bound,
            entries: keys
                .iter()
                .map(|f| AtlasEntry {
                    subspace: f.members().to_vec(),
                    budget: self.budgets[f].clone(),
                    slices: self.omegas[f].clone(),
                })
                .collect(),
            flags: self.flags.clone(),
            content_hash: String::new(),
        }
    }

    pub fn content_hash(&self) -> String {
        let doc = self.doc();
        let bytes = serde_json::to_vec(&doc).expect("atlas serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> Result<String, BuildError> {
        let mut doc = self.doc();
        doc.content_hash = self.content_hash();
        serde_json::to_string_pretty(&doc).map_err(|e| BuildError::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<SliceAtlas, BuildError> {
        let doc: AtlasDoc = serde_json::from_str(text).map_err(|e| BuildError::Serde(e.to_string()))?;
        let mut budgets = BTreeMap::new();
        let mut omegas = BTreeMap::new();
        for e in doc.entries {
            let f = SubspaceId::new(e.subspace);
            budgets.insert(f.clone(), e.budget);
            omegas.insert(f, e.slices);
        }
        let atlas = SliceAtlas {
            d: doc.d,
            eps_global: doc.eps_global,
            mesh_h: doc.mesh_h,
            seed: doc.seed,
            m_bound: doc.m_bound,
            budgets,
            omegas,
            flags: doc.flags,
        };
        let expect = atlas.content_hash();
        if !doc.content_hash.is_empty() && doc.content_hash != expect {
            return Err(BuildError::Serde(format!(
                "content hash mismatch: stored {} recomputed {}",
                doc.content_hash, expect
            )));
        }
        Ok(atlas)
    }
}
