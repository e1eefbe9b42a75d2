//! Cross-cutting certificate engine: gradient checks, norm-equivalence
//! audits, modulus-of-smoothness estimation, and report assembly with a
//! content hash.

use crate::linalg;
use crate::rng;
use crate::space::{BaseNorm, Point};
use crate::tol::Tolerances;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckEntry {
    pub id: String,
    pub status: bool,
    pub measured: BTreeMap<String, f64>,
    pub tolerance: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl CheckEntry {
    pub fn new(id: impl Into<String>, status: bool, tolerance: f64, seed: u64) -> Self {
        CheckEntry {
            id: id.into(),
            status,
            measured: BTreeMap::new(),
            tolerance,
            seed,
            note: String::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.measured.insert(key.to_string(), value);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub schema: u32,
    pub config_echo: serde_json::Value,
    pub atlas_hash: String,
    pub tolerance_scale: f64,
    pub authoritative: bool,
    pub sections: BTreeMap<String, Vec<CheckEntry>>,
    pub passed: bool,
    pub content_hash: String,
}

impl Certificate {
    pub fn new(config_echo: serde_json::Value, atlas_hash: String, tols: &Tolerances) -> Self {
        Certificate {
            schema: 1,
            config_echo,
            atlas_hash,
            tolerance_scale: tols.scale,
            authoritative: tols.is_authoritative(),
            sections: BTreeMap::new(),
            passed: true,
            content_hash: String::new(),
        }
    }

    pub fn push(&mut self, section: &str, entry: CheckEntry) {
        self.passed &= entry.status;
        self.sections.entry(section.to_string()).or_default().push(entry);
    }

    pub fn compute_hash(&self) -> String {
        let mut clone = self.clone();
        clone.content_hash = String::new();
        let bytes = serde_json::to_vec(&clone).expect("certificate serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn finalize(mut self) -> Self {
        self.content_hash = self.compute_hash();
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    pub fn from_json(text: &str) -> Result<Certificate, String> {
        let cert: Certificate = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let expect = cert.compute_hash();
        if !cert.content_hash.is_empty() && cert.content_hash != expect {
            return Err(format!("hash mismatch: stored {} vs {}", cert.content_hash, expect));
        }
        Ok(cert)
    }
}

/// Central difference of a scalar function along one coordinate.
pub fn central_difference<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], i: usize, h: f64) -> f64 {
    let mut hi = x.to_vec();
    let mut lo = x.to_vec();
    hi[i] += h;
    lo[i] -= h;
    (f(&hi) - f(&lo)) / (2.0 * h)
}

/// Single-step central-difference gradient.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len()).map(|i| central_difference(f, x, i, h)).collect()
}

/// Step-halving central differences: shrinks the step until two consecutive
/// estimates agree, which rides out hair-thin transition zones the base step
/// would straddle.
pub fn fd_gradient_stable<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h0: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut prev = central_difference(f, x, i, h0);
            for k in 1..=5 {
                let h = h0 / 4f64.powi(k);
                let cur = central_difference(f, x, i, h);
                if (cur - prev).abs() <= 2.5e-6 * cur.abs().max(1.0) {
                    return cur;
                }
                prev = cur;
            }
            prev
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientCheck {
    pub rel_error: f64,
    pub pass: bool,
}

/// Compares an analytic gradient against (stable) central differences at a
/// relative tolerance.
pub fn gradient_check<F: Fn(&[f64]) -> f64>(
    f: &F,
    analytic: &[f64],
    x: &[f64],
    h_scale: f64,
    rel_tol: f64,
) -> GradientCheck {
    let h = h_scale * (1.0 + linalg::norm2(x));
    let fd = fd_gradient_stable(f, x, h);
    let denom = linalg::norm2(analytic).max(1e-12);
    let rel_error = linalg::norm2(&linalg::sub(&fd, analytic)) / denom;
    GradientCheck { rel_error, pass: rel_error <= rel_tol }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceAudit {
    pub samples: usize,
    pub violations: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub witness: Option<Vec<f64>>,
}

/// Asserts `a(x) ≤ b(x) ≤ factor · a(x)` on norm-uniform sphere samples,
/// reporting the extremal ratios `b/a`.
pub fn equivalence_audit<A, B>(
    a: &A,
    b: &B,
    factor: f64,
    sampler: &BaseNorm,
    k: usize,
    seed: u64,
    label: &str,
) -> EquivalenceAudit
where
    A: Fn(&Point) -> f64,
    B: Fn(&Point) -> f64,
{
    assert!(factor > 0.0);
    let mut r = rng::stream(seed, label);
    let mut out = EquivalenceAudit {
        samples: 0,
        violations: 0,
        min_ratio: f64::INFINITY,
        max_ratio: f64::NEG_INFINITY,
        witness: None,
    };
    for _ in 0..k {
        let Some(x) = unit_sample(sampler, &mut r) else { continue };
        let (va, vb) = (a(&x), b(&x));
        if va <= 0.0 {
            continue;
        }
        let ratio = vb / va;
        out.samples += 1;
        out.min_ratio = out.min_ratio.min(ratio);
        out.max_ratio = out.max_ratio.max(ratio);
        if !(va <= vb * (1.0 + 1e-12) && vb <= factor * va * (1.0 + 1e-12)) {
            out.violations += 1;
            if out.witness.is_none() {
                out.witness = Some(x.coords.clone());
            }
        }
    }
    out
}

/// A norm-uniform sphere sample: a gaussian direction radially rescaled.
pub fn unit_sample(norm: &BaseNorm, r: &mut rand_chacha::ChaCha8Rng) -> Option<Point> {
    let v = rng::normal_vec(r, norm.dim());
    let n = norm.eval(&v);
    if n < 1e-12 {
        return None;
    }
    Some(Point::new(linalg::scale(&v, 1.0 / n)))
}

/// A sample of the closed unit ball, radius weighted for volume uniformity.
pub fn ball_sample(norm: &BaseNorm, r: &mut rand_chacha::ChaCha8Rng) -> Option<Point> {
    let x = unit_sample(norm, r)?;
    let t: f64 = r.gen_range(0.0..1.0f64);
    let radius = t.powf(1.0 / norm.dim() as f64);
    Some(Point::new(linalg::scale(&x.coords, radius)))
}

#[derive(Debug, Clone, Serialize)]
pub struct ModulusRow {
    pub tau: f64,
    pub rho_hat: f64,
    pub rho_over_tau: f64,
}

/// Sampled estimate of the modulus of smoothness
/// `ρ(τ) = sup (|x+τh| + |x−τh| − 2)/2` over unit `x, h` of the given norm.
pub fn smoothness_modulus_estimate<N>(
    norm_fn: &N,
    sampler: &BaseNorm,
    taus: &[f64],
    k: usize,
    seed: u64,
) -> Vec<ModulusRow>
where
    N: Fn(&Point) -> f64,
{
    let mut r = rng::stream(seed, "modulus");
    let mut pairs = Vec::with_capacity(k);
    while pairs.len() < k {
        let (Some(x), Some(h)) = (unit_sample(sampler, &mut r), unit_sample(sampler, &mut r))
        else {
            continue;
        };
        // renormalize in the probed norm so that |x| = |h| = 1 there
        let nx = norm_fn(&x);
        let nh = norm_fn(&h);
        if nx < 1e-12 || nh < 1e-12 {
            continue;
        }
        pairs.push((
            Point::new(linalg::scale(&x.coords, 1.0 / nx)),
            Point::new(linalg::scale(&h.coords, 1.0 / nh)),
        ));
    }
    taus.iter()
        .map(|&tau| {
            let mut sup = 0.0f64;
            for (x, h) in &pairs {
                let mut plus = x.coords.clone();
                linalg::axpy(&mut plus, tau, &h.coords);
                let mut minus = x.coords.clone();
                linalg::axpy(&mut minus, -tau, &h.coords);
                let v = (norm_fn(&Point::new(plus)) + norm_fn(&Point::new(minus)) - 2.0) / 2.0;
                sup = sup.max(v);
            }
            ModulusRow { tau, rho_hat: sup, rho_over_tau: sup / tau }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::NormKind;
    use crate::tol;

    #[test]
    fn gradient_check_on_the_euclidean_norm_is_tight() {
        let norm = BaseNorm::euclidean(0.0, 3);
        let f = |x: &[f64]| norm.eval(x);
        let x = vec![1.0, 0.0, 0.0];
        let g = norm.gradient(&x).unwrap();
        let check = gradient_check(&f, &g, &x, 1e-6, tol::GRADIENT_CHECK);
        assert!(check.pass && check.rel_error <= 1e-9, "{check:?}");
        // homogeneity cross-check: gradient at 3x equals gradient at x
        let g3 = norm.gradient(&[3.0, 0.0, 0.0]).unwrap();
        assert_eq!(g, g3);
    }

    #[test]
    fn equivalence_audit_identity_and_scaling() {
        let norm = BaseNorm::euclidean(0.05, 3);
        let a = |x: &Point| norm.eval_point(x);
        let audit = equivalence_audit(&a, &a, 1.0, &norm, 500, 3, "identity");
        assert_eq!(audit.violations, 0);
        assert!((audit.min_ratio - 1.0).abs() < 1e-12 && (audit.max_ratio - 1.0).abs() < 1e-12);
        // a genuinely larger norm fails the upper factor
        let b = |x: &Point| 1.5 * norm.eval_point(x);
        let audit = equivalence_audit(&a, &b, 1.2, &norm, 100, 3, "violation");
        assert!(audit.violations > 0 && audit.witness.is_some());
    }

    #[test]
    fn euclidean_modulus_is_dominated_by_the_closed_form() {
        let norm = BaseNorm::euclidean(0.0, 3);
        let f = |x: &Point| norm.eval_point(x);
        let rows = smoothness_modulus_estimate(&f, &norm, &[0.1, 0.01], 400, 7);
        for row in rows {
            let exact = (1.0 + row.tau * row.tau).sqrt() - 1.0;
            assert!(row.rho_hat >= 0.0);
            assert!(row.rho_hat <= exact + 1e-12, "{row:?} vs {exact}");
        }
    }

    #[test]
    fn p_norm_modulus_is_nonnegative() {
        let norm = BaseNorm::new(NormKind::P { p: 4.0 }, 0.0, 2).unwrap();
        let f = |x: &Point| norm.eval_point(x);
        let rows = smoothness_modulus_estimate(&f, &norm, &[0.1], 200, 9);
        assert!(rows[0].rho_hat >= 0.0);
    }

    #[test]
    fn certificates_hash_deterministically_and_detect_tampering() {
        let build = || {
            let mut cert = Certificate::new(
                serde_json::json!({"d": 2, "seed": 7}),
                "abc".into(),
                &Tolerances::default(),
            );
            cert.push(
                "space",
                CheckEntry::new("norm-axioms", true, 1e-10, 7).with("max_violation", 3.0e-12),
            );
            cert.push("slices", CheckEntry::new("dominance", true, 1e-9, 7));
            cert.finalize()
        };
        let a = build();
        let b = build();
        assert_eq!(a.content_hash, b.content_hash);
        assert!(a.passed);
        let roundtrip = Certificate::from_json(&a.to_json()).unwrap();
        assert_eq!(roundtrip.content_hash, a.content_hash);
        let tampered = a.to_json().replace("\"atlas_hash\": \"abc\"", "\"atlas_hash\": \"abd\"");
        assert_ne!(tampered, a.to_json());
        assert!(Certificate::from_json(&tampered).is_err());
    }

    #[test]
    fn empty_certificate_is_config_echo_only() {
        let cert = Certificate::new(serde_json::json!({"stages": []}), String::new(), &Tolerances::default())
            .finalize();
        assert!(cert.sections.is_empty() && cert.passed);
        assert!(!cert.content_hash.is_empty());
    }

    #[test]
    fn scaled_tolerances_mark_the_run_non_authoritative() {
        let cert = Certificate::new(serde_json::json!({}), String::new(), &Tolerances::scaled(10.0));
        assert!(!cert.authoritative);
    }
}
