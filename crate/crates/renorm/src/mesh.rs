//! Sphere meshes with certified covering radii.
//!
//! A mesh of `S_F` (the unit sphere of a coordinate subspace) certifies that
//! every sphere point lies within `covering_radius` of a mesh point in the
//! working norm. Dimension 1 is the exact two-point sphere, dimension 2 an
//! angular grid, dimension 3 a subdivided icosahedron. All meshes are exactly
//! closed under negation.

use crate::linalg;
use crate::rng;
use crate::space::{BaseNorm, Point, SubspaceId};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("certified meshing supports dim ≤ 3; got {dim} (enable the random fallback)")]
    DimTooLarge { dim: usize },
    #[error("mesh at fineness {h:.3e} needs more than {budget} points")]
    BudgetExceeded { h: f64, budget: usize },
}

#[derive(Debug, Clone)]
pub struct SphereMesh {
    pub points: Vec<Point>,
    /// Certified covering radius of `S_F` in the working norm (`f64::NAN`
    /// when `certified` is false).
    pub covering_radius: f64,
    pub certified: bool,
}

/// Builds a mesh of `S_F` whose covering radius is certified `≤ h`.
pub fn mesh_sphere(
    f: &SubspaceId,
    h: f64,
    norm: &BaseNorm,
    budget: usize,
    allow_random_fallback: bool,
    seed: u64,
) -> Result<SphereMesh, MeshError> {
    assert!(h > 0.0);
    let d = norm.dim();
    let ratio = norm.l2_upper / norm.l2_lower;
    match f.dim() {
        1 => {
            let alpha = f.members()[0];
            let e = Point::basis(d, alpha);
            let n = norm.eval_point(&e);
            let p = Point::new(linalg::scale(&e.coords, 1.0 / n));
            Ok(SphereMesh { points: vec![p.clone(), p.neg()], covering_radius: 0.0, certified: true })
        }
        2 => {
            // N-distance between radial projections is at most 2L/l times the
            // euclidean gap on the unit circle.
            let m_min = (std::f64::consts::TAU * ratio / h).ceil() as usize;
            let m = if m_min % 2 == 0 { m_min } else { m_min + 1 };
            if m > budget {
                return Err(MeshError::BudgetExceeded { h, budget });
            }
            let (a, b) = (f.members()[0], f.members()[1]);
            let half: Vec<Point> = (0..m / 2)
                .map(|k| {
                    let theta = std::f64::consts::TAU * k as f64 / m as f64;
                    let mut v = vec![0.0; d];
                    v[a] = theta.cos();
                    v[b] = theta.sin();
                    let n = norm.eval(&v);
                    Point::new(linalg::scale(&v, 1.0 / n))
                })
                .collect();
            let mut points = half.clone();
            points.extend(half.iter().map(|p| p.neg()));
            // every circle point is within angle π/m of the grid; chord
            // 2 sin(π/2m) transfers through radial projection at factor 2L/l
            let gap_chord = 2.0 * (std::f64::consts::PI / (2.0 * m as f64)).sin();
            Ok(SphereMesh { points, covering_radius: 2.0 * ratio * gap_chord, certified: true })
        }
        3 => icosphere_mesh(f, h, norm, budget),
        dim => {
            if !allow_random_fallback {
                return Err(MeshError::DimTooLarge { dim });
            }
            let mut r = rng::stream(seed, &format!("random-mesh/{}", f.label()));
            let count = budget.min(20_000) / 2;
            let mut points = Vec::with_capacity(2 * count);
            for _ in 0..count {
                let mut v = vec![0.0; d];
                for &i in f.members() {
                    v[i] = rng::normal(&mut r);
                }
                let n = norm.eval(&v);
                if n < 1e-12 {
                    continue;
                }
                let p = Point::new(linalg::scale(&v, 1.0 / n));
                points.push(p.neg());
                points.push(p);
            }
            Ok(SphereMesh { points, covering_radius: f64::NAN, certified: false })
        }
    }
}

fn icosphere_mesh(
    f: &SubspaceId,
    h: f64,
    norm: &BaseNorm,
    budget: usize,
) -> Result<SphereMesh, MeshError> {
    let ratio = norm.l2_upper / norm.l2_lower;
    let mut ico = Icosphere::new();
    for _level in 0..12 {
        let cov_euclid = ico.euclidean_covering_radius();
        let cov_norm = 2.0 * ratio * cov_euclid;
        if cov_norm <= h {
            let d = norm.dim();
            let idx = f.members();
            let points: Vec<Point> = ico
                .verts
                .iter()
                .map(|v| {
                    let mut w = vec![0.0; d];
                    w[idx[0]] = v[0];
                    w[idx[1]] = v[1];
                    w[idx[2]] = v[2];
                    let n = norm.eval(&w);
                    Point::new(linalg::scale(&w, 1.0 / n))
                })
                .collect();
            return Ok(SphereMesh { points, covering_radius: cov_norm, certified: true });
        }
        if ico.verts.len() * 4 > budget {
            return Err(MeshError::BudgetExceeded { h, budget });
        }
        ico.subdivide();
    }
    Err(MeshError::BudgetExceeded { h, budget })
}

/// Icosahedron subdivision that tracks antipodes so the vertex set stays
/// exactly negation-symmetric.
struct Icosphere {
    verts: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    anti: Vec<usize>,
    midpoint: std::collections::HashMap<(usize, usize), usize>,
}

impl Icosphere {
    fn new() -> Self {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let raw: Vec<[f64; 3]> = vec![
            [-1.0, phi, 0.0],
            [1.0, -phi, 0.0],
            [1.0, phi, 0.0],
            [-1.0, -phi, 0.0],
            [0.0, -1.0, phi],
            [0.0, 1.0, -phi],
            [0.0, 1.0, phi],
            [0.0, -1.0, -phi],
            [phi, 0.0, -1.0],
            [-phi, 0.0, 1.0],
            [phi, 0.0, 1.0],
            [-phi, 0.0, -1.0],
        ];
        // antipodes are adjacent pairs (2k, 2k+1) by construction above
        let verts: Vec<[f64; 3]> = raw.iter().map(|v| normalize3(*v)).collect();
        let mut verts = verts;
        for k in 0..6 {
            let a = verts[2 * k];
            verts[2 * k + 1] = [-a[0], -a[1], -a[2]];
        }
        let anti: Vec<usize> = (0..12).map(|i| i ^ 1).collect();
        // recover the 20 faces as triples at mutual edge distance
        let mut edge = f64::INFINITY;
        for a in 0..12 {
            for b in (a + 1)..12 {
                edge = edge.min(dist3(verts[a], verts[b]));
            }
        }
        let mut faces = Vec::with_capacity(20);
        for a in 0..12 {
            for b in (a + 1)..12 {
                if (dist3(verts[a], verts[b]) - edge).abs() > 1e-9 {
                    continue;
                }
                for c in (b + 1)..12 {
                    if (dist3(verts[a], verts[c]) - edge).abs() < 1e-9
                        && (dist3(verts[b], verts[c]) - edge).abs() < 1e-9
                    {
                        faces.push([a, b, c]);
                    }
                }
            }
        }
        assert_eq!(faces.len(), 20, "icosahedron face recovery");
        Icosphere { verts, faces, anti, midpoint: Default::default() }
    }

    fn midpoint_of(&mut self, i: usize, j: usize) -> usize {
        let key = if i < j { (i, j) } else { (j, i) };
        if let Some(&k) = self.midpoint.get(&key) {
            return k;
        }
        let (ai, aj) = (self.anti[i], self.anti[j]);
        let akey = if ai < aj { (ai, aj) } else { (aj, ai) };
        let v = normalize3([
            self.verts[i][0] + self.verts[j][0],
            self.verts[i][1] + self.verts[j][1],
            self.verts[i][2] + self.verts[j][2],
        ]);
        let k = self.verts.len();
        if let Some(&ak) = self.midpoint.get(&akey) {
            // force the exact negation of the already-created antipodal midpoint
            let a = self.verts[ak];
            self.verts.push([-a[0], -a[1], -a[2]]);
            self.anti.push(ak);
            self.anti[ak] = k;
        } else {
            self.verts.push(v);
            self.anti.push(usize::MAX);
        }
        self.midpoint.insert(key, k);
        k
    }

    fn subdivide(&mut self) {
        let faces = std::mem::take(&mut self.faces);
        let mut new_faces = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = self.midpoint_of(a, b);
            let bc = self.midpoint_of(b, c);
            let ca = self.midpoint_of(c, a);
            new_faces.push([a, ab, ca]);
            new_faces.push([b, bc, ab]);
            new_faces.push([c, ca, bc]);
            new_faces.push([ab, bc, ca]);
        }
        self.faces = new_faces;
        self.midpoint.clear();
        debug_assert!(self.anti.iter().all(|&a| a != usize::MAX), "antipode map complete");
    }

    /// Max over faces of (planar covering bound + sagitta); a certified
    /// euclidean covering radius of the unit sphere by the vertex set.
    fn euclidean_covering_radius(&self) -> f64 {
        let mut worst = 0.0f64;
        for [a, b, c] in &self.faces {
            let (pa, pb, pc) = (self.verts[*a], self.verts[*b], self.verts[*c]);
            let e_ab = dist3(pa, pb);
            let e_bc = dist3(pb, pc);
            let e_ca = dist3(pc, pa);
            let longest = e_ab.max(e_bc).max(e_ca);
            // planar bound: circumradius for acute triangles, half the longest
            // edge otherwise
            let s = 0.5 * (e_ab + e_bc + e_ca);
            let area2 = (s * (s - e_ab) * (s - e_bc) * (s - e_ca)).max(0.0).sqrt();
            let planar = if area2 > 1e-30 {
                let circ = e_ab * e_bc * e_ca / (4.0 * area2);
                let acute = e_ab * e_ab + e_bc * e_bc > e_ca * e_ca
                    && e_bc * e_bc + e_ca * e_ca > e_ab * e_ab
                    && e_ca * e_ca + e_ab * e_ab > e_bc * e_bc;
                if acute {
                    circ
                } else {
                    longest / 2.0
                }
            } else {
                longest / 2.0
            };
            // sagitta: how far the spherical patch lifts off the chord plane
            let centroid = [
                (pa[0] + pb[0] + pc[0]) / 3.0,
                (pa[1] + pb[1] + pc[1]) / 3.0,
                (pa[2] + pb[2] + pc[2]) / 3.0,
            ];
            let plane_dist = (centroid[0] * centroid[0]
                + centroid[1] * centroid[1]
                + centroid[2] * centroid[2])
                .sqrt()
                .min(1.0);
            // distance from origin to the face plane is at least the distance to
            // the centroid times cos of nothing; use the min vertex-projection
            // as a conservative plane offset instead
            let n = cross3(sub3(pb, pa), sub3(pc, pa));
            let nn = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            let off = if nn > 1e-30 {
                ((n[0] * pa[0] + n[1] * pa[1] + n[2] * pa[2]) / nn).abs()
            } else {
                plane_dist
            };
            let sagitta = 1.0 - off.min(1.0);
            worst = worst.max(planar + sagitta);
        }
        worst
    }
}

fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = sub3(a, b);
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::NormKind;

    #[test]
    fn dim1_mesh_is_the_two_point_sphere() {
        let norm = BaseNorm::euclidean(0.05, 3);
        let f = SubspaceId::new(vec![1]);
        let mesh = mesh_sphere(&f, 0.1, &norm, 1 << 20, false, 0).unwrap();
        assert_eq!(mesh.points.len(), 2);
        assert_eq!(mesh.covering_radius, 0.0);
        for p in &mesh.points {
            assert!((norm.eval_point(p) - 1.0).abs() < 1e-12);
            assert_eq!(p.coords[0], 0.0);
            assert_eq!(p.coords[2], 0.0);
        }
        assert_eq!(mesh.points[0].neg(), mesh.points[1]);
    }

    #[test]
    fn dim2_mesh_has_certified_gaps() {
        let norm = BaseNorm::euclidean(0.0, 2);
        let f = SubspaceId::new(vec![0, 1]);
        let mesh = mesh_sphere(&f, 0.1, &norm, 1 << 20, false, 0).unwrap();
        assert!(mesh.points.len() >= 63, "count {}", mesh.points.len());
        assert!(mesh.certified && mesh.covering_radius <= 0.1);
        // consecutive angular gaps stay below h (arc-length arithmetic)
        let m = mesh.points.len();
        let mut angles: Vec<f64> =
            mesh.points.iter().map(|p| p.coords[1].atan2(p.coords[0])).collect();
        angles.sort_by(f64::total_cmp);
        for k in 0..m {
            let a = angles[k];
            let b = if k + 1 < m { angles[k + 1] } else { angles[0] + std::f64::consts::TAU };
            let gap_points = norm.eval(&[b.cos() - a.cos(), b.sin() - a.sin()]);
            assert!(gap_points <= 0.1 + 1e-9, "gap {gap_points}");
        }
    }

    #[test]
    fn meshes_are_negation_symmetric() {
        let norm = BaseNorm::new(NormKind::Weighted { weights: vec![1.0, 2.0, 0.7] }, 0.05, 3).unwrap();
        for f in [SubspaceId::new(vec![0, 2]), SubspaceId::new(vec![0, 1, 2])] {
            let mesh = mesh_sphere(&f, 0.4, &norm, 1 << 22, false, 0).unwrap();
            let set: std::collections::HashSet<Vec<u64>> = mesh
                .points
                .iter()
                .map(|p| p.coords.iter().map(|c| c.to_bits()).collect())
                .collect();
            for p in &mesh.points {
                let neg: Vec<u64> = p.neg().coords.iter().map(|c| c.to_bits()).collect();
                assert!(set.contains(&neg), "negation missing (exact) for {:?}", p);
            }
        }
    }

    #[test]
    fn icosphere_covering_radius_is_certified() {
        let norm = BaseNorm::euclidean(0.0, 3);
        let f = SubspaceId::new(vec![0, 1, 2]);
        let mesh = mesh_sphere(&f, 0.2, &norm, 1 << 22, false, 0).unwrap();
        assert!(mesh.certified && mesh.covering_radius <= 0.2);
        // sampled sphere points stay within the certified radius of the mesh
        let mut r = crate::rng::stream(9, "icosphere-check");
        for _ in 0..2000 {
            let v = crate::rng::normal_vec(&mut r, 3);
            let n = norm.eval(&v);
            if n < 1e-9 {
                continue;
            }
            let p = linalg::scale(&v, 1.0 / n);
            let best = mesh
                .points
                .iter()
                .map(|q| norm.eval(&linalg::sub(&p, &q.coords)))
                .fold(f64::INFINITY, f64::min);
            assert!(best <= mesh.covering_radius + 1e-9, "gap {best}");
        }
    }

    #[test]
    fn dim4_requires_fallback() {
        let norm = BaseNorm::euclidean(0.05, 4);
        let f = SubspaceId::new(vec![0, 1, 2, 3]);
        assert!(mesh_sphere(&f, 0.3, &norm, 1 << 20, false, 0).is_err());
        let mesh = mesh_sphere(&f, 0.3, &norm, 1 << 20, true, 0).unwrap();
        assert!(!mesh.certified);
        assert!(!mesh.points.is_empty());
    }
}
