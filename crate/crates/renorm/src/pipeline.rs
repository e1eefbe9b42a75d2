//! Pipeline orchestration: build the system and atlas, run the per-stage
//! checks into a certificate, and emit artifacts (atlas JSON, certificate
//! JSON, ball-section CSV).

use crate::config::{RunConfig, Stage};
use crate::construction::{self, BuildConfig, Scope, SliceAtlas};
use crate::index::SliceIndex;
use crate::linalg::{self, Mat};
use crate::lur::{self, LurParams, RotundNorm};
use crate::polyhedral::{self, PolyBody};
use crate::rng;
use crate::slices;
use crate::smoothing::{self, SmoothBody};
use crate::space::{self, pairing, BaseNorm, BiorthogonalSystem, Point, SubspaceId};
use crate::tol::{self, Tolerances};
use crate::verify::{self, Certificate, CheckEntry};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Build(#[from] construction::BuildError),
    #[error(transparent)]
    Space(#[from] space::SpaceError),
    #[error(transparent)]
    Poly(#[from] polyhedral::PolyError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Sample counts for the checking stages.
#[derive(Debug, Clone)]
pub struct Effort {
    pub small: usize,
    pub large: usize,
    pub lfc_points: usize,
    pub lfc_samples: usize,
    pub grad_points: usize,
    pub probe_points: usize,
    pub probe_pool: usize,
    pub mc_pairs: usize,
    pub dominance_slices: usize,
    /// Re-mesh each subspace at its stored fineness for the tube-width check.
    pub full_remesh: bool,
}

impl Effort {
    /// The counts the acceptance criteria state.
    pub fn full() -> Self {
        Effort {
            small: 1_000,
            large: 10_000,
            lfc_points: 100,
            lfc_samples: 1_000,
            grad_points: 1_000,
            probe_points: 10,
            probe_pool: 200,
            mc_pairs: 10_000,
            dominance_slices: 1_000,
            full_remesh: true,
        }
    }

    /// A fast variant for command-line exploration.
    pub fn light() -> Self {
        Effort {
            small: 200,
            large: 1_000,
            lfc_points: 20,
            lfc_samples: 200,
            grad_points: 100,
            probe_points: 4,
            probe_pool: 60,
            mc_pairs: 2_000,
            dominance_slices: 50,
            full_remesh: false,
        }
    }
}

pub struct PipelineOutput {
    pub atlas: Option<SliceAtlas>,
    pub certificate: Certificate,
    pub sections_csv: Option<String>,
}

pub fn run(cfg: &RunConfig, effort: &Effort) -> Result<PipelineOutput, PipelineError> {
    cfg.validate()?;
    let tols = Tolerances::scaled(cfg.tolerance_scale);
    let kind = cfg.base.norm_kind(cfg.d)?;
    let e = cfg.e_matrix().unwrap_or_else(|| Mat::identity(cfg.d));
    let phi = cfg.phi_matrix();
    let (sys, norm) = space::normalize_system(&e, phi.as_ref(), kind, cfg.base.eps0)?;

    let mut cert = Certificate::new(cfg.echo(), String::new(), &tols);
    let mut atlas_out: Option<SliceAtlas> = None;
    let has = |s: Stage| cfg.stages.contains(&s);

    if has(Stage::Atlas) {
        let bc = BuildConfig {
            d: cfg.d,
            eps_global: cfg.eps_global,
            mesh_h: cfg.mesh_h,
            seed: cfg.seed,
            mesh_budget: cfg.mesh_budget,
            allow_budget_floor: cfg.budget_floor,
            allow_random_mesh: cfg.allow_random_mesh,
            d_max: cfg.d_max,
        };
        let atlas = construction::run_construction(&bc, &sys, &norm)?;
        cert.atlas_hash = atlas.content_hash();
        let index = SliceIndex::build(&atlas, &norm);
        section_atlas(&mut cert, &atlas, &index, &norm, effort, cfg.seed);
        section_compat(&mut cert, &atlas, &index, &norm, effort, cfg.seed);
        if has(Stage::Polyhedral) {
            section_polyhedral(&mut cert, &atlas, &index, &norm, effort, cfg.seed);
        }
        if has(Stage::Smooth) {
            section_smooth(&mut cert, &atlas, &index, &norm, effort, cfg.seed);
        }
        if has(Stage::Lur) {
            section_lur(&mut cert, &atlas, &index, &sys, &norm, cfg, effort);
        }
        atlas_out = Some(atlas);
    } else if has(Stage::Lur) && cfg.lur.ambient == "base" {
        section_lur_base_only(&mut cert, &sys, &norm, cfg, effort);
    }

    if has(Stage::Verify) {
        section_oracles(&mut cert, &norm, effort, cfg.seed);
    }

    let sections_csv = atlas_out.as_ref().and_then(|atlas| {
        if cfg.d == 2 || cfg.d == 3 {
            Some(ball_sections_csv(cfg, atlas, &norm))
        } else {
            None
        }
    });

    Ok(PipelineOutput { atlas: atlas_out, certificate: cert.finalize(), sections_csv })
}

/// Writes atlas.json, certificate.json, and the section CSV; returns paths.
pub fn write_artifacts(
    out: &PipelineOutput,
    dir: &std::path::Path,
) -> Result<Vec<std::path::PathBuf>, PipelineError> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    if let Some(atlas) = &out.atlas {
        let p = dir.join("atlas.json");
        std::fs::write(&p, atlas.to_json().map_err(construction::BuildError::from)?)?;
        paths.push(p);
    }
    let p = dir.join("certificate.json");
    std::fs::write(&p, out.certificate.to_json())?;
    paths.push(p);
    if let Some(csv) = &out.sections_csv {
        let p = dir.join("ball_sections.csv");
        std::fs::write(&p, csv)?;
        paths.push(p);
    }
    Ok(paths)
}

// --- atlas checks -------------------------------------------------------------

fn section_atlas(
    cert: &mut Certificate,
    atlas: &SliceAtlas,
    index: &SliceIndex,
    norm: &BaseNorm,
    effort: &Effort,
    seed: u64,
) {
    let m = atlas.m_bound;
    for (f, b) in &atlas.budgets {
        let n = f.dim() as f64;
        let mut ok_i = b.theta <= b.eps && b.eps <= atlas.eps_global + 1e-15 && b.theta > 0.0;
        let ok_ii = b.eps <= 1.0 / (4.0 * n * m) + 1e-15;
        let mut ok_iii = true;
        let mut min_pred_cap = f64::INFINITY;
        for (g, bg) in &atlas.budgets {
            if g.is_proper_subset_of(f) {
                min_pred_cap = min_pred_cap.min(bg.theta / (4.0 * n * m));
                ok_iii &= b.eps <= bg.theta / (4.0 * n * m) + 1e-18;
            }
        }
        ok_i &= b.eps > 0.0;
        let mut entry = CheckEntry::new(format!("budgets/{}", f.label()), ok_i && ok_ii && ok_iii, 0.0, seed)
            .with("eps", b.eps)
            .with("theta", b.theta)
            .with("level_margin", b.level_margin)
            .with("enlarge", b.enlarge)
            .with("rule_i", ok_i as u8 as f64)
            .with("rule_ii", ok_ii as u8 as f64)
            .with("rule_iii", ok_iii as u8 as f64);
        if min_pred_cap.is_finite() {
            entry = entry.with("pred_cap", min_pred_cap);
        }
        if b.floored {
            entry = entry.with_note("budget floored for mesh feasibility; the subset rule fails here by construction");
        }
        cert.push("atlas", entry);

        // negation closure: slices are stored in exact sign pairs
        let omega = &atlas.omegas[f];
        let paired = omega.len() % 2 == 0
            && omega.chunks(2).all(|pair| pair[0] == pair[1].negated());
        cert.push("atlas", CheckEntry::new(format!("negation/{}", f.label()), paired, 0.0, seed));

        // certified slice diameters stay below the budget
        let bound = slices::diam_bound_at(norm, b.level_margin).unwrap_or(f64::INFINITY);
        let enlarged = slices::diam_bound_at(norm, b.level_margin + b.enlarge).unwrap_or(f64::INFINITY);
        cert.push(
            "atlas",
            CheckEntry::new(
                format!("diameter/{}", f.label()),
                bound < b.eps && enlarged < b.eps,
                0.0,
                seed,
            )
            .with("certified_bound", bound)
            .with("enlarged_bound", enlarged)
            .with("eps", b.eps),
        );

        // exposed points: unit, supported in F, clear of proper tubes
        let mut worst_unit = 0.0f64;
        let mut worst_clear = f64::INFINITY;
        let mut supported = true;
        for s in omega {
            worst_unit = worst_unit.max((norm.eval_point(&s.x) - 1.0).abs());
            supported &= s.x.coords.iter().enumerate().all(|(i, c)| f.contains(i) || c.abs() <= 1e-12);
            for (g, bg) in &atlas.budgets {
                if g.is_proper_subset_of(f) {
                    worst_clear = worst_clear.min(norm.dist_to_subspace_value(&s.x, g) - bg.theta);
                }
            }
        }
        let clear_ok = omega.is_empty() || worst_clear >= -1e-9 || !worst_clear.is_finite();
        cert.push(
            "atlas",
            CheckEntry::new(
                format!("exposed/{}", f.label()),
                worst_unit <= 1e-9 && supported && clear_ok,
                1e-9,
                seed,
            )
            .with("max_unit_defect", worst_unit)
            .with("min_tube_clearance", if worst_clear.is_finite() { worst_clear } else { 0.0 }),
        );

        // tube width against the re-meshed escape distance plus mesh slack
        let (d_mesh, gaps, h_used) = remeshed_escape(atlas, index, norm, f, effort, seed);
        let ok_tube = 2.0 * b.theta <= d_mesh + h_used + 1e-12;
        let mut entry = CheckEntry::new(format!("tube-width/{}", f.label()), ok_tube, 1e-12, seed)
            .with("theta", b.theta)
            .with("escape_min", d_mesh)
            .with("mesh_slack", h_used)
            .with("uncovered_mesh_points", gaps as f64);
        if gaps > 0 {
            entry = entry.with_note("uncovered points at a floored level are excluded from the minimum");
        }
        cert.push("atlas", entry);

        // sampled consequence: sphere points inside the tube stay covered
        let mut r = rng::stream(seed, &format!("tube-cover/{}", f.label()));
        let mut violations = 0usize;
        let samples = effort.small;
        for _ in 0..samples {
            let mut y = construction::sample_tube_point(&mut r, atlas.d, f, b.theta * 0.999, norm);
            let n_y = norm.eval_point(&y);
            if n_y < 1e-9 {
                continue;
            }
            y.coords.iter_mut().for_each(|c| *c /= n_y);
            if norm.dist_to_subspace_value(&y, f) >= b.theta {
                continue;
            }
            if escapes_union(atlas, index, &y, f) {
                violations += 1;
            }
        }
        let mut entry = CheckEntry::new(
            format!("tube-samples/{}", f.label()),
            violations == 0,
            0.0,
            seed,
        )
        .with("samples", samples as f64)
        .with("violations", violations as f64);
        if atlas.flags.coverage_gaps.contains_key(&f.label()) {
            entry = entry.with_note("coverage gaps near buffered tubes make escapes expected at this floored level");
        }
        cert.push("atlas", entry);
    }
}

/// True when the unit vector escapes every slice of subspaces inside `F`.
fn escapes_union(atlas: &SliceAtlas, index: &SliceIndex, y: &Point, f: &SubspaceId) -> bool {
    construction::escapes_scope(atlas, index, y, Scope::Restricted(f))
}

/// Minimum functional escape distance over a fresh mesh of `S_F`, the number
/// of uncovered points, and the certified mesh radius used as slack.
fn remeshed_escape(
    atlas: &SliceAtlas,
    index: &SliceIndex,
    norm: &BaseNorm,
    f: &SubspaceId,
    effort: &Effort,
    seed: u64,
) -> (f64, usize, f64) {
    let b = &atlas.budgets[f];
    let h = b.mesh_fineness.max(1e-12);
    let mesh = match crate::mesh::mesh_sphere(f, h, norm, usize::MAX, true, seed) {
        Ok(m) => m,
        Err(_) => return (0.0, 0, h),
    };
    let stride = if effort.full_remesh { 1 } else { (mesh.points.len() / 20_000).max(1) };
    let threshold = 1.0 - atlas.max_total_margin() - 1e-9;
    let mut d_min = f64::INFINITY;
    let mut gaps = 0usize;
    for p in mesh.points.iter().step_by(stride) {
        let mut best = f64::NEG_INFINITY;
        index.visit_candidates(atlas, &p.coords, threshold.max(0.0), |g, _i, s| {
            if !g.is_subset_of(f) {
                return;
            }
            let slack = pairing(&s.psi, p).expect("dims").abs() - (1.0 - s.delta);
            best = best.max(slack);
        });
        if best <= 0.0 {
            gaps += 1;
        } else {
            d_min = d_min.min(best);
        }
    }
    if !d_min.is_finite() {
        d_min = 0.0;
    }
    (d_min, gaps, if mesh.certified { mesh.covering_radius } else { h })
}

fn section_compat(
    cert: &mut Certificate,
    atlas: &SliceAtlas,
    index: &SliceIndex,
    norm: &BaseNorm,
    effort: &Effort,
    seed: u64,
) {
    for f in atlas.budgets.keys() {
        for n in f.dim()..=atlas.d {
            let rep = construction::check_compatibility(atlas, index, norm, f, n, effort.small, seed);
            cert.push(
                "compat",
                CheckEntry::new(
                    format!("agree/{}/n={}", f.label(), n),
                    rep.violations == 0,
                    tol::LINEAR_TEST,
                    seed,
                )
                .with("samples", rep.samples as f64)
                .with("violations", rep.violations as f64),
            );
        }
    }
}

fn section_polyhedral(
    cert: &mut Certificate,
    atlas: &SliceAtlas,
    index: &SliceIndex,
    norm: &BaseNorm,
    effort: &Effort,
    seed: u64,
) {
    let body = PolyBody::new(atlas, index, norm);
    let audit = verify::equivalence_audit(
        &|x: &Point| norm.eval_point(x),
        &|x: &Point| body.gauge(x),
        1.0 / (1.0 - atlas.eps_global),
        norm,
        effort.large,
        seed,
        "poly-sandwich",
    );
    cert.push(
        "polyhedral",
        CheckEntry::new("sandwich", audit.violations == 0, 1e-12, seed)
            .with("samples", audit.samples as f64)
            .with("violations", audit.violations as f64)
            .with("min_ratio", audit.min_ratio)
            .with("max_ratio", audit.max_ratio),
    );

    for f in atlas.budgets.keys() {
        match polyhedral::verify_polyhedral_restriction(atlas, index, norm, f, effort.small, seed) {
            Ok(rep) => {
                let vertex_ok = rep.vertex.max_norm <= 1.0 - 2.0 * rep.theta + tol::VERTEX_SLACK;
                let mut entry = CheckEntry::new(
                    format!("restriction/{}", f.label()),
                    rep.membership_mismatches == 0 && vertex_ok,
                    tol::VERTEX_SLACK,
                    seed,
                )
                .with("samples", rep.samples as f64)
                .with("mismatches", rep.membership_mismatches as f64)
                .with("vertices", rep.vertex.count as f64)
                .with("max_vertex_norm", rep.vertex.max_norm)
                .with("interior_cap", 1.0 - 2.0 * rep.theta)
                .with("exact_enumeration", rep.vertex.exact as u8 as f64);
                if !rep.vertex.exact {
                    entry = entry.with_note("dimension-3 vertex evidence is a radial extreme sweep, not full enumeration");
                }
                cert.push("polyhedral", entry);
            }
            Err(e) => {
                cert.push(
                    "polyhedral",
                    CheckEntry::new(format!("restriction/{}", f.label()), false, 0.0, seed)
                        .with_note(format!("{e}")),
                );
            }
        }
    }

    // locality witnesses at sampled gauge-sphere points
    let mut r = rng::stream(seed, "poly-lfc-points");
    let mut violations = 0usize;
    let mut points_done = 0usize;
    let mut attempts = 0usize;
    while points_done < effort.lfc_points && attempts < effort.lfc_points * 50 {
        attempts += 1;
        let Some(u) = verify::unit_sample(norm, &mut r) else { continue };
        let mu = body.gauge(&u);
        if mu <= 0.0 {
            continue;
        }
        let x = Point::new(linalg::scale(&u.coords, 1.0 / mu));
        let Ok(witness) = polyhedral::lfc_witness(atlas, index, norm, &x) else { continue };
        let rep = polyhedral::verify_lfc_witness(
            atlas,
            index,
            norm,
            &x,
            &witness,
            effort.lfc_samples,
            seed ^ points_done as u64,
        );
        violations += rep.violations;
        points_done += 1;
    }
    cert.push(
        "polyhedral",
        CheckEntry::new("lfc-witness", violations == 0 && points_done > 0, tol::LINEAR_TEST, seed)
            .with("points", points_done as f64)
            .with("samples_each", effort.lfc_samples as f64)
            .with("violations", violations as f64),
    );
}

fn section_smooth(
    cert: &mut Certificate,
    atlas: &SliceAtlas,
    index: &SliceIndex,
    norm: &BaseNorm,
    effort: &Effort,
    seed: u64,
) {
    let body = SmoothBody::new(atlas, index, norm);
    let chain = smoothing::verify_sandwich_chain(&body, effort.large, seed);
    let chain_ok = chain.shrunken_ball_to_zero_set == 0
        && chain.zero_set_to_body == 0
        && chain.body_to_open_body == 0
        && chain.open_body_to_excised == 0
        && chain.excised_to_ball == 0;
    cert.push(
        "smooth",
        CheckEntry::new("chain", chain_ok, tol::LINEAR_TEST, seed)
            .with("samples", chain.samples as f64)
            .with("shrunken_ball_to_zero_set", chain.shrunken_ball_to_zero_set as f64)
            .with("zero_set_to_body", chain.zero_set_to_body as f64)
            .with("body_to_open_body", chain.body_to_open_body as f64)
            .with("open_body_to_excised", chain.open_body_to_excised as f64)
            .with("excised_to_ball", chain.excised_to_ball as f64),
    );

    // sandwich of the smooth gauge against the working norm
    let audit = verify::equivalence_audit(
        &|x: &Point| norm.eval_point(x),
        &|x: &Point| body.gauge(x).unwrap_or(f64::NAN),
        1.0 / (1.0 - body.eps),
        norm,
        effort.large,
        seed,
        "smooth-sandwich",
    );
    cert.push(
        "smooth",
        CheckEntry::new("sandwich", audit.violations == 0, 1e-12, seed)
            .with("samples", audit.samples as f64)
            .with("violations", audit.violations as f64)
            .with("max_ratio", audit.max_ratio),
    );

    // analytic gradient against stable central differences
    let mut r = rng::stream(seed, "smooth-grad");
    let mut worst = 0.0f64;
    let mut euler_worst = 0.0f64;
    let mut graded = 0usize;
    while graded < effort.grad_points {
        let Some(x) = verify::unit_sample(norm, &mut r) else { continue };
        let Ok(mu) = body.gauge(&x) else { continue };
        let Ok(g) = body.gauge_gradient(&x) else { continue };
        euler_worst = euler_worst.max((pairing(&g, &x).expect("dims") - mu).abs() / mu.max(1e-12));
        let f = |v: &[f64]| body.gauge(&Point::new(v.to_vec())).unwrap_or(f64::NAN);
        let check = verify::gradient_check(&f, &g.coeffs, &x.coords, 1e-6, tol::GRADIENT_CHECK);
        worst = worst.max(check.rel_error);
        graded += 1;
    }
    cert.push(
        "smooth",
        CheckEntry::new("gradient", worst <= tol::GRADIENT_CHECK && euler_worst <= 1e-8, tol::GRADIENT_CHECK, seed)
            .with("points", graded as f64)
            .with("max_rel_error", worst)
            .with("max_euler_defect", euler_worst),
    );

    // locally finite sums at supported points
    for f in atlas.budgets.keys() {
        let mut r = rng::stream(seed, &format!("smooth-locality/{}", f.label()));
        let mut max_center = 0.0f64;
        let mut max_hood = 0.0f64;
        let mut centers = 0usize;
        let mut attempts = 0usize;
        let per_f = (effort.small / atlas.budgets.len()).max(20);
        while centers < per_f && attempts < per_f * 60 {
            attempts += 1;
            let mut y = Point::zeros(atlas.d);
            for &i in f.members() {
                y.coords[i] = rng::normal(&mut r);
            }
            let n = norm.eval_point(&y);
            if n < 1e-9 {
                continue;
            }
            let radius: f64 = r.gen_range(0.0..0.95);
            y.coords.iter_mut().for_each(|c| *c *= radius / n);
            if body.phi(&y) >= 1.0 {
                continue;
            }
            let Ok(hood) = smoothing::locality_neighborhood(&body, &y) else { continue };
            if !hood.f.is_subset_of(f) {
                continue;
            }
            max_center = max_center.max((body.phi(&y) - body.phi_restricted(&hood.f, &y)).abs());
            let rep = smoothing::verify_locality(&body, &y, &hood, 20, seed ^ centers as u64);
            max_hood = max_hood.max(rep.max_diff);
            centers += 1;
        }
        cert.push(
            "smooth",
            CheckEntry::new(
                format!("locality/{}", f.label()),
                max_center <= tol::LOCALITY && max_hood <= tol::LOCALITY && centers > 0,
                tol::LOCALITY,
                seed,
            )
            .with("centers", centers as f64)
            .with("max_center_diff", max_center)
            .with("max_neighborhood_diff", max_hood),
        );
    }

    // fixed functional values inside the locality neighborhood pin the gauge
    let mut r = rng::stream(seed, "smooth-lfc-invariance");
    let mut max_dev = 0.0f64;
    let mut tested = 0usize;
    let mut attempts = 0usize;
    let goal = (effort.small / 10).max(20);
    while tested < goal && attempts < goal * 200 {
        attempts += 1;
        // a point supported on a proper subspace, near the gauge sphere
        let Some(f) = atlas.budgets.keys().find(|f| f.dim() < atlas.d) else { break };
        let mut x = Point::zeros(atlas.d);
        for &i in f.members() {
            x.coords[i] = rng::normal(&mut r);
        }
        let n = norm.eval_point(&x);
        if n < 1e-9 {
            continue;
        }
        let Ok(mu) = body.gauge(&x) else { continue };
        x.coords.iter_mut().for_each(|c| *c /= mu);
        // perturb along coordinates outside the span of the restricted
        // functionals (the complement coordinates for this coordinate system)
        let Ok(hood) = smoothing::locality_neighborhood(&body, &Point::new(linalg::scale(&x.coords, 0.999))) else {
            continue;
        };
        let mut z = x.clone();
        let mut moved = false;
        for i in 0..atlas.d {
            if !f.contains(i) {
                z.coords[i] += 0.25 * hood.theta * rng::normal(&mut r);
                moved = true;
            }
        }
        if !moved {
            break;
        }
        let (Ok(mx), Ok(mz)) = (body.gauge(&x), body.gauge(&z)) else { continue };
        // restricted functionals are supported inside F, so the pairings match
        max_dev = max_dev.max((mx - mz).abs() / mx.max(1e-12));
        tested += 1;
    }
    cert.push(
        "smooth",
        CheckEntry::new("lfc-invariance", max_dev <= tol::LFC_INVARIANCE, tol::LFC_INVARIANCE, seed)
            .with("points", tested as f64)
            .with("max_rel_deviation", max_dev),
    );
}

fn section_lur(
    cert: &mut Certificate,
    atlas: &SliceAtlas,
    index: &SliceIndex,
    sys: &BiorthogonalSystem,
    norm: &BaseNorm,
    cfg: &RunConfig,
    effort: &Effort,
) {
    let body = SmoothBody::new(atlas, index, norm);
    let eps_smooth = body.eps;
    let smooth_ambient = move |y: &Point| {
        body.gauge(y).unwrap_or_else(|_| norm.eval_point(y) / (1.0 - eps_smooth))
    };
    let base_ambient = |y: &Point| norm.eval_point(y);
    if cfg.lur.ambient == "smooth" {
        run_lur_checks(cert, sys, norm, &smooth_ambient, cfg, effort);
    } else {
        run_lur_checks(cert, sys, norm, &base_ambient, cfg, effort);
    }
}

fn section_lur_base_only(
    cert: &mut Certificate,
    sys: &BiorthogonalSystem,
    norm: &BaseNorm,
    cfg: &RunConfig,
    effort: &Effort,
) {
    let base_ambient = |y: &Point| norm.eval_point(y);
    run_lur_checks(cert, sys, norm, &base_ambient, cfg, effort);
}

fn run_lur_checks(
    cert: &mut Certificate,
    sys: &BiorthogonalSystem,
    norm: &BaseNorm,
    ambient: &dyn Fn(&Point) -> f64,
    cfg: &RunConfig,
    effort: &Effort,
) {
    let seed = cfg.seed;
    let params = LurParams { eps: cfg.lur.eps, truncation: cfg.lur.truncation };
    let rn = RotundNorm::new(sys, ambient, params);
    let eps = rn.params.eps;

    let tail = rn.tail_bound();
    cert.push(
        "lur",
        CheckEntry::new("tail", tail <= 1e-6, 1e-6, seed).with("tail_bound", tail).with(
            "truncation",
            rn.params.truncation as f64,
        ),
    );

    // composed-functional sandwich on ambient ball samples
    let mut r = rng::stream(seed, "lur-j-sandwich");
    let mut violations = 0usize;
    let mut samples = 0usize;
    while samples < effort.large {
        let dir = rng::normal_vec(&mut r, sys.dim);
        let n = ambient(&Point::new(dir.clone()));
        if n < 1e-9 {
            continue;
        }
        let radius: f64 = r.gen_range(0.0..0.999);
        let y = Point::new(linalg::scale(&dir, radius / n));
        let ny = ambient(&y);
        let Ok(jv) = rn.j_eval(&y) else { continue };
        if !(ny <= jv.value + 1e-12 && jv.value <= (1.0 + 4.0 * eps).sqrt() * ny + 1e-12) {
            violations += 1;
        }
        samples += 1;
    }
    cert.push(
        "lur",
        CheckEntry::new("j-sandwich", violations == 0, 1e-12, seed)
            .with("samples", samples as f64)
            .with("violations", violations as f64),
    );

    // component Lipschitz quotients
    let mut r = rng::stream(seed, "lur-lipschitz");
    let mut max_quot = 0.0f64;
    for _ in 0..effort.small {
        let y = Point::new(linalg::scale(&rng::normal_vec(&mut r, sys.dim), 0.25));
        let z = Point::new(linalg::scale(&rng::normal_vec(&mut r, sys.dim), 0.25));
        if ambient(&y) >= 1.0 || ambient(&z) >= 1.0 {
            continue;
        }
        let dist = ambient(&Point::new(linalg::sub(&y.coords, &z.coords)));
        if dist < 1e-9 {
            continue;
        }
        for (j, n, m) in [(1usize, 1usize, 1usize), (2, 2, 1), (3, 2, 2)] {
            let q = (rn.j_component(j, n, m, &y) - rn.j_component(j, n, m, &z)).abs() / dist;
            max_quot = max_quot.max(q);
        }
    }
    cert.push(
        "lur",
        CheckEntry::new("component-lipschitz", max_quot <= 2.0 + tol::LIPSCHITZ_SLACK, tol::LIPSCHITZ_SLACK, seed)
            .with("max_quotient", max_quot),
    );

    // gauge bracket of the sup-norm glue on random component vectors
    let mut r = rng::stream(seed, "lur-z-bracket");
    let mut z_viol = 0usize;
    let eta = rn.params.eta(2, 1);
    for _ in 0..effort.small {
        let z: Vec<f64> = (0..7).map(|_| 2.0 * rng::normal(&mut r)).collect();
        let sup = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let zz = lur::z_eta_eval(eta, &z);
        if !((1.0 - eta) * zz <= sup + 1e-12 && sup <= zz + 1e-12) {
            z_viol += 1;
        }
    }
    cert.push(
        "lur",
        CheckEntry::new("z-bracket", z_viol == 0, 1e-12, seed)
            .with("samples", effort.small as f64)
            .with("violations", z_viol as f64)
            .with("eta", eta),
    );

    // rotundity probe at sampled unit vectors of the final norm
    let norm_fn = |y: &Point| rn.eval(y).unwrap_or(f64::NAN);
    let dist_fn = |a: &Point, b: &Point| norm.eval_sub(&a.coords, &b.coords);
    let mut r = rng::stream(seed, "lur-probe-points");
    let mut monotone = true;
    let mut starved_rows = 0usize;
    let mut probed = 0usize;
    while probed < effort.probe_points {
        let Some(u) = verify::unit_sample(norm, &mut r) else { continue };
        let v = norm_fn(&u);
        if !v.is_finite() || v <= 0.0 {
            continue;
        }
        let x = Point::new(linalg::scale(&u.coords, 1.0 / v));
        let rows = lur::lur_probe(
            &norm_fn,
            &dist_fn,
            norm,
            &x,
            &[1e-1, 1e-2, 1e-3],
            effort.probe_pool,
            seed ^ probed as u64,
        );
        let mut last = f64::INFINITY;
        for row in &rows {
            monotone &= row.r_max <= last + 1e-12;
            last = row.r_max;
            starved_rows += row.starved as usize;
        }
        probed += 1;
    }
    cert.push(
        "lur",
        CheckEntry::new("probe-monotone", monotone && probed > 0, 1e-12, seed)
            .with("points", probed as f64)
            .with("starved_rows", starved_rows as f64),
    );

    // continuity modulus of finite-difference gradients of the final norm
    let mut r = rng::stream(seed, "lur-c1");
    let mut moduli = Vec::new();
    for &h in &[1e-2, 1e-3, 1e-4] {
        let mut omega = 0.0f64;
        let mut arcs = 0usize;
        while arcs < 8 {
            let Some(u) = verify::unit_sample(norm, &mut r) else { continue };
            let v = norm_fn(&u);
            if !v.is_finite() || v <= 0.0 {
                continue;
            }
            let x = Point::new(linalg::scale(&u.coords, 1.0 / v));
            let mut x2 = x.clone();
            let dir = rng::normal_vec(&mut r, sys.dim);
            let nd = norm.eval(&dir);
            if nd < 1e-9 {
                continue;
            }
            linalg::axpy(&mut x2.coords, h / nd, &dir);
            let v2 = norm_fn(&x2);
            if !v2.is_finite() || v2 <= 0.0 {
                continue;
            }
            x2.coords.iter_mut().for_each(|c| *c /= v2);
            let f = |v: &[f64]| norm_fn(&Point::new(v.to_vec()));
            let g1 = verify::fd_gradient_stable(&f, &x.coords, 1e-6);
            let g2 = verify::fd_gradient_stable(&f, &x2.coords, 1e-6);
            omega = omega.max(linalg::norm2(&linalg::sub(&g1, &g2)));
            arcs += 1;
        }
        moduli.push((h, omega));
    }
    // absolute floor rides out finite-difference noise when the gradient is
    // effectively constant along the sampled arcs
    let monotone_c1 = moduli.windows(2).all(|w| w[1].1 <= w[0].1 + 3e-8);
    let mut entry = CheckEntry::new("c1-modulus", monotone_c1, 1e-9, seed);
    for (h, omega) in &moduli {
        entry = entry.with(&format!("omega_at_{h:e}"), *omega);
    }
    cert.push("lur", entry);

    // ramp-family monotonicity in the gauge parameter on a grid
    let mut mono_ok = true;
    for (e1, e2) in [(0.1, 0.15), (0.125, 0.1875), (0.2, 0.25)] {
        for k in 0..=50 {
            let t = k as f64 / 50.0;
            mono_ok &= lur::psi_eta_eval(e1, t) <= lur::psi_eta_eval(e2, t) + 1e-12;
        }
    }
    cert.push("lur", CheckEntry::new("psi-eta-monotone", mono_ok, 1e-12, seed));
}

fn section_oracles(cert: &mut Certificate, norm: &BaseNorm, effort: &Effort, seed: u64) {
    // euclidean slice diameter against the closed form, from below
    let pure = BaseNorm::euclidean(0.0, 2);
    let delta = 0.02;
    let x = Point::new(vec![1.0, 0.0]);
    let psi = pure.norming_functional(&x).unwrap();
    let slice = slices::Slice::new(x, psi, delta, 1).unwrap();
    let exact = 2.0 * (2.0 * delta - delta * delta).sqrt();
    let mc = slices::diam_monte_carlo(&slice, &pure, effort.mc_pairs, seed);
    let ok = mc.lower <= exact + 1e-9 && mc.lower >= 0.98 * exact;
    cert.push(
        "oracles",
        CheckEntry::new("slice-diameter-euclidean", ok, 0.02, seed)
            .with("exact", exact)
            .with("sampled", mc.lower)
            .with("pairs", effort.mc_pairs as f64),
    );

    // euclidean modulus of smoothness dominated by the closed form
    let f = |x: &Point| pure.eval_point(x);
    let rows = verify::smoothness_modulus_estimate(&f, &pure, &[0.1, 0.01], effort.small, seed);
    let mut ok = true;
    let mut entry = CheckEntry::new("euclidean-modulus", true, 1e-12, seed);
    for row in &rows {
        let exact = (1.0 + row.tau * row.tau).sqrt() - 1.0;
        ok &= row.rho_hat >= 0.0 && row.rho_hat <= exact + 1e-12;
        entry = entry.with(&format!("rho_hat_at_{}", row.tau), row.rho_hat);
    }
    entry.status = ok;
    cert.push("oracles", entry);
    let _ = norm;
}

/// Directional modulus of the polyhedral gauge along face-crossing arcs of a
/// coarse two-dimensional atlas; flat faces keep `ρ(τ)/τ` bounded away from
/// zero while the euclidean norm's decays.
pub fn face_modulus_report(seed: u64) -> Result<Vec<(f64, f64)>, PipelineError> {
    let (sys, norm) = space::canonical_system(crate::space::NormKind::Euclidean, 0.05, 2)?;
    let bc = BuildConfig { d: 2, eps_global: 0.75, seed, ..BuildConfig::default() };
    let atlas = construction::run_construction(&bc, &sys, &norm)?;
    let index = SliceIndex::build(&atlas, &norm);
    let body = PolyBody::new(&atlas, &index, &norm);
    let gauge = |p: &Point| body.gauge(p);
    let mut rows = Vec::new();
    for &tau in &[0.1, 0.01, 0.001] {
        let mut sup = 0.0f64;
        // sweep directions across the first axis facet and its junctions
        for k in 0..=400 {
            let angle = -0.4 + 0.8 * k as f64 / 400.0;
            let u = Point::new(vec![angle.cos(), angle.sin()]);
            let mu = gauge(&u);
            let x = Point::new(linalg::scale(&u.coords, 1.0 / mu));
            let t = Point::new(vec![-angle.sin(), angle.cos()]);
            let th = gauge(&t);
            let h = Point::new(linalg::scale(&t.coords, 1.0 / th));
            let mut plus = x.coords.clone();
            linalg::axpy(&mut plus, tau, &h.coords);
            let mut minus = x.coords.clone();
            linalg::axpy(&mut minus, -tau, &h.coords);
            let v = (gauge(&Point::new(plus)) + gauge(&Point::new(minus)) - 2.0) / 2.0;
            sup = sup.max(v);
        }
        rows.push((tau, sup / tau));
    }
    Ok(rows)
}

// --- ball sections --------------------------------------------------------------

fn ball_sections_csv(cfg: &RunConfig, atlas: &SliceAtlas, norm: &BaseNorm) -> String {
    let index = SliceIndex::build(atlas, norm);
    let poly = PolyBody::new(atlas, &index, norm);
    let smooth = SmoothBody::new(atlas, &index, norm);
    let mut norms: Vec<(&str, Box<dyn Fn(&Point) -> f64 + '_>)> = vec![
        ("base", Box::new(|p: &Point| norm.eval_point(p))),
    ];
    if cfg.stages.contains(&Stage::Polyhedral) {
        norms.push(("polyhedral", Box::new(move |p: &Point| poly.gauge(p))));
    }
    if cfg.stages.contains(&Stage::Smooth) {
        norms.push(("smooth", Box::new(move |p: &Point| smooth.gauge(p).unwrap_or(f64::NAN))));
    }
    let mut out = String::new();
    if cfg.d == 2 {
        out.push_str("norm,angle,radius\n");
        for k in 0..720 {
            let angle = std::f64::consts::TAU * k as f64 / 720.0;
            let u = Point::new(vec![angle.cos(), angle.sin()]);
            for (name, f) in &norms {
                let v = f(&u);
                out.push_str(&format!("{name},{angle},{}\n", 1.0 / v));
            }
        }
    } else {
        out.push_str("norm,theta,phi,radius\n");
        for i in 0..40 {
            let theta = std::f64::consts::PI * (i as f64 + 0.5) / 40.0;
            for jj in 0..80 {
                let phi = std::f64::consts::TAU * jj as f64 / 80.0;
                let u = Point::new(vec![
                    theta.sin() * phi.cos(),
                    theta.sin() * phi.sin(),
                    theta.cos(),
                ]);
                for (name, f) in &norms {
                    let v = f(&u);
                    out.push_str(&format!("{name},{theta},{phi},{}\n", 1.0 / v));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn light_pipeline_passes_at_d2() {
        let cfg = RunConfig::default();
        let out = run(&cfg, &Effort::light()).unwrap();
        assert!(out.certificate.passed, "{}", failing_summary(&out.certificate));
        assert!(out.atlas.is_some());
        let csv = out.sections_csv.unwrap();
        // row sandwich: polyhedral and smooth radii sit inside the base ball,
        // shrunken at most by the global budget
        let mut base = std::collections::HashMap::new();
        for line in csv.lines().skip(1) {
            let parts: Vec<&str> = line.split(',').collect();
            let (name, angle, radius) = (parts[0], parts[1], parts[2].parse::<f64>().unwrap());
            if name == "base" {
                base.insert(angle.to_string(), radius);
            } else {
                let rb = base[angle];
                assert!(radius <= rb + 1e-12);
                assert!(radius >= rb * (1.0 - cfg.eps_global) - 1e-12, "{name} at {angle}");
            }
        }
    }

    #[test]
    fn stages_subset_produces_partial_certificates() {
        let cfg = RunConfig::from_json(r#"{"d": 1, "stages": ["atlas"]}"#).unwrap();
        let out = run(&cfg, &Effort::light()).unwrap();
        assert!(out.certificate.passed);
        assert!(out.certificate.sections.contains_key("atlas"));
        assert!(!out.certificate.sections.contains_key("polyhedral"));
        assert!(out.sections_csv.is_none()); // d = 1 has no section plot
    }

    #[test]
    fn face_modulus_stays_bounded_away_from_zero() {
        let rows = face_modulus_report(3).unwrap();
        let at_01 = rows[0].1;
        let at_0001 = rows[2].1;
        assert!(at_0001 >= 0.1 * at_01, "{rows:?}");
    }

    pub(super) fn failing_summary(cert: &Certificate) -> String {
        let mut s = String::new();
        for (section, entries) in &cert.sections {
            for e in entries {
                if !e.status {
                    s.push_str(&format!("[FAIL] {section}/{} {:?} {}\n", e.id, e.measured, e.note));
                }
            }
        }
        s
    }
}
