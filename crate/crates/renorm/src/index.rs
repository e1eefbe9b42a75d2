//! Fast retrieval of atlas slices whose functional can be large at a query
//! point.
//!
//! For the canonical euclidean working norm every slice functional satisfies
//! `<psi, y> = N(y)·cos∠(u, ŷ)` with `u` the exposed direction, so threshold
//! queries reduce to angular windows. Circle groups (2-dim subspaces) use a
//! sorted angle table, sphere groups (3-dim subspaces) a direction grid. For
//! non-euclidean working norms the index degenerates to a full scan, which is
//! what the small atlases built there need anyway.

use crate::construction::SliceAtlas;
use crate::linalg;
use crate::slices::Slice;
use crate::space::{BaseNorm, SubspaceId};

pub struct SliceIndex {
    /// (subspace position in atlas order, slice position) for the full scan.
    scan: Vec<(usize, usize)>,
    subspaces: Vec<SubspaceId>,
    /// Slice counts per subspace position, for resolving storage quickly.
    omega_lens: Vec<usize>,
    euclid_scale: Option<f64>,
    circles: Vec<CircleGroup>,
    spheres: Vec<SphereGroup>,
    singles: Vec<(usize, usize)>,
}

struct CircleGroup {
    axes: (usize, usize),
    /// Entries sorted by in-plane angle of the exposed direction.
    entries: Vec<(f64, usize, usize)>,
    /// Below this |<psi, y>| no slice of the group passes any caller's test.
    floor: f64,
}

struct SphereGroup {
    axes: (usize, usize, usize),
    /// Buckets indexed by z band then azimuth; each holds (sub, idx, dir).
    buckets: Vec<Vec<(usize, usize, [f64; 3])>>,
    bands_meta: Vec<BandMeta>,
    floor: f64,
}

/// Per-band constants so cap walks stay trigonometry-free until a band is
/// accepted.
struct BandMeta {
    /// cos / sin of the band-center polar angle.
    cos_polar: f64,
    sin_polar: f64,
    /// cos / sin of the bucket angular radius (band height + segment width).
    cos_brad: f64,
    sin_brad: f64,
    segs: usize,
    offset: usize,
}

impl SliceIndex {
    pub fn build(atlas: &SliceAtlas, norm: &BaseNorm) -> Self {
        let subspaces: Vec<SubspaceId> = atlas.omegas.keys().cloned().collect();
        let omega_lens: Vec<usize> = subspaces.iter().map(|f| atlas.omegas[f].len()).collect();
        let mut scan = Vec::new();
        for (si, f) in subspaces.iter().enumerate() {
            for idx in 0..atlas.omegas[f].len() {
                scan.push((si, idx));
            }
        }
        let euclid_scale = euclidean_scale(norm);
        let mut circles = Vec::new();
        let mut spheres = Vec::new();
        let mut singles = Vec::new();
        if let Some(_s) = euclid_scale {
            for (si, f) in subspaces.iter().enumerate() {
                let omega = &atlas.omegas[f];
                let b = &atlas.budgets[f];
                // flat-region start of this group's enlarged bumps, the lowest
                // per-slice decision threshold any caller uses
                let floor = (1.0 - b.level_margin) * (1.0 - b.enlarge) - 1e-12;
                match f.dim() {
                    2 => {
                        let axes = (f.members()[0], f.members()[1]);
                        let mut entries: Vec<(f64, usize, usize)> = omega
                            .iter()
                            .enumerate()
                            .filter(|(_, s)| s.sign == 1)
                            .map(|(idx, s)| {
                                let a = s.x.coords[axes.0];
                                let b = s.x.coords[axes.1];
                                (b.atan2(a), si, idx)
                            })
                            .collect();
                        entries.sort_by(|x, y| x.0.total_cmp(&y.0));
                        circles.push(CircleGroup { axes, entries, floor });
                    }
                    3 => {
                        let axes = (f.members()[0], f.members()[1], f.members()[2]);
                        let bands = 96usize;
                        let band_half = 2.0 / bands as f64;
                        let mut seg_per_band = Vec::with_capacity(bands);
                        let mut bands_meta = Vec::with_capacity(bands);
                        let mut total = 0usize;
                        for bz in 0..bands {
                            let zc = -1.0 + (bz as f64 + 0.5) * 2.0 / bands as f64;
                            let ring = (1.0f64 - zc * zc).max(0.0).sqrt();
                            let segs = ((ring * 192.0).ceil() as usize).max(1);
                            let brad = band_half + std::f64::consts::TAU / segs as f64;
                            bands_meta.push(BandMeta {
                                cos_polar: zc,
                                sin_polar: ring,
                                cos_brad: brad.cos(),
                                sin_brad: brad.sin(),
                                segs,
                                offset: total,
                            });
                            seg_per_band.push(segs);
                            total += segs;
                        }
                        let mut buckets = vec![Vec::new(); total];
                        for (idx, s) in omega.iter().enumerate() {
                            if s.sign != 1 {
                                continue;
                            }
                            let v = [s.x.coords[axes.0], s.x.coords[axes.1], s.x.coords[axes.2]];
                            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                            let dir = [v[0] / n, v[1] / n, v[2] / n];
                            let (bz, bp) = bucket_of(dir, bands, &seg_per_band);
                            buckets[bands_meta[bz].offset + bp].push((si, idx, dir));
                        }
                        spheres.push(SphereGroup { axes, buckets, bands_meta, floor });
                    }
                    _ => {
                        for idx in 0..omega.len() {
                            if omega[idx].sign == 1 {
                                singles.push((si, idx));
                            }
                        }
                    }
                }
            }
        }
        SliceIndex { scan, subspaces, omega_lens, euclid_scale, circles, spheres, singles }
    }

    pub fn subspaces(&self) -> &[SubspaceId] {
        &self.subspaces
    }

    /// Visits a superset of the slices with `|<psi, y>| > threshold`,
    /// passing positive-sign representatives (callers test both signs).
    pub fn visit_candidates<V>(&self, atlas: &SliceAtlas, y: &[f64], threshold: f64, mut visit: V)
    where
        V: FnMut(&SubspaceId, usize, &Slice),
    {
        self.visit_candidates_until(atlas, y, threshold, |g, i, s| {
            visit(g, i, s);
            true
        });
    }

    /// Like `visit_candidates`, but the visitor can stop the walk early by
    /// returning false (used by threshold predicates).
    pub fn visit_candidates_until<V>(&self, atlas: &SliceAtlas, y: &[f64], threshold: f64, mut visit: V)
    where
        V: FnMut(&SubspaceId, usize, &Slice) -> bool,
    {
        debug_assert!(self
            .subspaces
            .iter()
            .zip(&self.omega_lens)
            .all(|(f, n)| atlas.omegas[f].len() == *n));
        let omegas: Vec<&[Slice]> =
            self.subspaces.iter().map(|f| atlas.omegas[f].as_slice()).collect();
        let Some(scale) = self.euclid_scale else {
            for &(si, idx) in &self.scan {
                if !visit(&self.subspaces[si], idx, &omegas[si][idx]) {
                    return;
                }
            }
            return;
        };
        for &(si, idx) in &self.singles {
            if !visit(&self.subspaces[si], idx, &omegas[si][idx]) {
                return;
            }
        }
        let y2 = linalg::norm2(y);
        if scale * y2 <= threshold {
            return;
        }
        for g in &self.circles {
            let eff = threshold.max(g.floor);
            let c = (y[g.axes.0], y[g.axes.1]);
            let cn = (c.0 * c.0 + c.1 * c.1).sqrt();
            // in-plane bound: |<psi, y>| ≤ scale · |in-plane part|
            if scale * cn <= eff {
                continue;
            }
            let ang = c.1.atan2(c.0);
            let cosw = (eff / (scale * y2)).clamp(-1.0, 1.0);
            let w = cosw.acos() + 1e-12;
            for center in [ang, wrap_angle(ang + std::f64::consts::PI)] {
                let go = visit_angle_window(&g.entries, center, w, |si, idx| {
                    visit(&self.subspaces[si], idx, &omegas[si][idx])
                });
                if !go {
                    return;
                }
            }
        }
        for g in &self.spheres {
            let eff = threshold.max(g.floor);
            let v = [y[g.axes.0], y[g.axes.1], y[g.axes.2]];
            let vn = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if scale * vn <= eff {
                continue;
            }
            let dir = [v[0] / vn, v[1] / vn, v[2] / vn];
            let cosw = (eff / (scale * y2)).clamp(-1.0, 1.0);
            let sinw = (1.0 - cosw * cosw).max(0.0).sqrt();
            if !self.visit_cap(&omegas, g, dir, cosw, sinw, &mut visit) {
                return;
            }
            if !self.visit_cap(&omegas, g, [-dir[0], -dir[1], -dir[2]], cosw, sinw, &mut visit) {
                return;
            }
        }
    }

    fn visit_cap<V>(
        &self,
        omegas: &[&[Slice]],
        g: &SphereGroup,
        dir: [f64; 3],
        cos_w: f64,
        sin_w: f64,
        visit: &mut V,
    ) -> bool
    where
        V: FnMut(&SubspaceId, usize, &Slice) -> bool,
    {
        // cosine space throughout; accepted bands cost one acos each
        let dir_cos = dir[2].clamp(-1.0, 1.0);
        let dir_sin = (1.0 - dir_cos * dir_cos).max(0.0).sqrt();
        let mut dir_az = f64::NAN;
        for band in &g.bands_meta {
            // cos(w + brad) by the angle-addition identity
            let cos_reach = cos_w * band.cos_brad - sin_w * band.sin_brad;
            // reject when the polar gap alone exceeds the reach
            let cos_gap = dir_cos * band.cos_polar + dir_sin * band.sin_polar;
            if cos_gap < cos_reach {
                continue;
            }
            let segs = band.segs;
            let denom = dir_sin * band.sin_polar;
            let full_ring = denom < 1e-12 || (cos_reach - dir_cos * band.cos_polar) / denom <= -1.0;
            let visit_bp = |bp: usize, visit: &mut V| -> bool {
                for &(si, idx, _) in &g.buckets[band.offset + bp] {
                    if !visit(&self.subspaces[si], idx, &omegas[si][idx]) {
                        return false;
                    }
                }
                true
            };
            if full_ring {
                for bp in 0..segs {
                    if !visit_bp(bp, visit) {
                        return false;
                    }
                }
            } else {
                let cos_dphi = ((cos_reach - dir_cos * band.cos_polar) / denom).clamp(-1.0, 1.0);
                let dphi = cos_dphi.acos();
                if dir_az.is_nan() {
                    dir_az = dir[1].atan2(dir[0]);
                }
                let center = (dir_az.rem_euclid(std::f64::consts::TAU)) / std::f64::consts::TAU
                    * segs as f64;
                let half = dphi / std::f64::consts::TAU * segs as f64 + 1.0;
                let lo = (center - half).floor() as i64;
                let hi = (center + half).ceil() as i64;
                for raw in lo..=hi {
                    let bp = raw.rem_euclid(segs as i64) as usize;
                    if !visit_bp(bp, visit) {
                        return false;
                    }
                    if hi - lo >= segs as i64 && raw - lo >= segs as i64 - 1 {
                        // guard duplicate wraps on tiny rings
                        break;
                    }
                }
            }
        }
        true
    }
}

fn bucket_of(dir: [f64; 3], bands: usize, seg_per_band: &[usize]) -> (usize, usize) {
    let bz = (((dir[2] + 1.0) / 2.0 * bands as f64) as usize).min(bands - 1);
    let segs = seg_per_band[bz];
    let phi = dir[1].atan2(dir[0]).rem_euclid(std::f64::consts::TAU);
    let bp = ((phi / std::f64::consts::TAU * segs as f64) as usize).min(segs - 1);
    (bz, bp)
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a;
    while a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    }
    while a < -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

fn visit_angle_window<V: FnMut(usize, usize) -> bool>(
    entries: &[(f64, usize, usize)],
    center: f64,
    w: f64,
    mut visit: V,
) -> bool {
    if entries.is_empty() {
        return true;
    }
    let lo = center - w;
    let hi = center + w;
    // visit entries with angle in [lo, hi] modulo 2π
    let mut ranges = Vec::with_capacity(2);
    if lo < -std::f64::consts::PI {
        ranges.push((lo + std::f64::consts::TAU, std::f64::consts::PI));
        ranges.push((-std::f64::consts::PI, hi));
    } else if hi > std::f64::consts::PI {
        ranges.push((lo, std::f64::consts::PI));
        ranges.push((-std::f64::consts::PI, hi - std::f64::consts::TAU));
    } else {
        ranges.push((lo, hi));
    }
    for (a, b) in ranges {
        let start = entries.partition_point(|e| e.0 < a);
        for e in &entries[start..] {
            if e.0 > b {
                break;
            }
            if !visit(e.1, e.2) {
                return false;
            }
        }
    }
    true
}

/// `Some(s)` when the working norm is `s · |·|₂` (its quadratic form is a
/// multiple of the identity), which is what the canonical pipeline produces.
fn euclidean_scale(norm: &BaseNorm) -> Option<f64> {
    let q = norm.quad_matrix()?;
    let s2 = q[(0, 0)];
    for i in 0..q.n {
        for j in 0..q.n {
            let want = if i == j { s2 } else { 0.0 };
            if (q[(i, j)] - want).abs() > 1e-14 * s2.max(1.0) {
                return None;
            }
        }
    }
    Some(s2.sqrt())
}
