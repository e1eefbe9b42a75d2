//! Central tolerance constants. Every check quotes the tolerance it uses so
//! certificates never contain silent passes.

/// Biorthogonality residual allowed after system normalization.
pub const BIORTHOGONALITY: f64 = 1e-10;

/// Residual allowed on the raw `Phi * E = I` input pairing.
pub const PAIRING_INPUT: f64 = 1e-10;

/// Dual-norm accuracy for norming functionals (`N*(psi) = 1`).
pub const NORMING_DUAL: f64 = 1e-7;

/// Accuracy of `<psi, x> = N(x)` for norming functionals.
pub const NORMING_VALUE: f64 = 1e-8;

/// Relative accuracy target of the dual-norm solver.
pub const DUAL_NORM_REL: f64 = 1e-8;

/// Distance-solver accuracy (gradient stopping threshold).
pub const DIST_GRAD: f64 = 1e-12;

/// Tolerance on linear membership tests of polyhedral bodies.
pub const LINEAR_TEST: f64 = 1e-12;

/// Slack allowed in the bounded-system distance inequalities.
pub const DIST_INEQ: f64 = 1e-8;

/// Homogeneity / triangle-inequality slack in norm-axiom checks.
pub const NORM_AXIOM: f64 = 1e-10;

/// Relative tolerance of Minkowski-functional bisection.
pub const MINKOWSKI_REL: f64 = 1e-15;

/// Relative error allowed between analytic and central-difference gradients.
pub const GRADIENT_CHECK: f64 = 1e-5;

/// Exactness tolerance for the locally-finite-sum identity.
pub const LOCALITY: f64 = 1e-12;

/// Perturbation invariance of the smooth norm under fixed functional values.
pub const LFC_INVARIANCE: f64 = 1e-10;

/// Slack on sampled Lipschitz quotients.
pub const LIPSCHITZ_SLACK: f64 = 1e-6;

/// Certified quadrature error of the flat-bump primitive.
pub const QUADRATURE: f64 = 1e-13;

/// Dykstra projection tolerance.
pub const DYKSTRA: f64 = 1e-10;

/// Interiority slack used by vertex checks.
pub const VERTEX_SLACK: f64 = 1e-9;

/// Scaling knob applied to all tolerances for exploratory runs.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub scale: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { scale: 1.0 }
    }
}

impl Tolerances {
    pub fn scaled(scale: f64) -> Self {
        Tolerances { scale }
    }

    pub fn of(&self, base: f64) -> f64 {
        base * self.scale
    }

    pub fn is_authoritative(&self) -> bool {
        self.scale == 1.0
    }
}
