use renorm::construction::{run_construction, BuildConfig};
use renorm::index::SliceIndex;
use renorm::space::{canonical_system, pairing, NormKind};
use std::time::Instant;

fn main() {
    let (sys, norm) = canonical_system(NormKind::Euclidean, 0.05, 3).unwrap();
    let cfg = BuildConfig { d: 3, ..BuildConfig::default() };
    let t = Instant::now();
    let atlas = run_construction(&cfg, &sys, &norm).unwrap();
    println!("build: {:?}", t.elapsed());
    let index = SliceIndex::build(&atlas, &norm);
    for (f, b) in &atlas.budgets {
        let t = Instant::now();
        let mesh =
            renorm::mesh::mesh_sphere(f, b.mesh_fineness.max(1e-12), &norm, usize::MAX, true, 0)
                .unwrap();
        let tm = t.elapsed();
        let t = Instant::now();
        let threshold: f64 = 1.0 - atlas.max_total_margin() - 1e-9;
        let mut d_min = f64::INFINITY;
        let mut gaps = 0usize;
        for p in mesh.points.iter() {
            let mut best = f64::NEG_INFINITY;
            index.visit_candidates(&atlas, &p.coords, threshold.max(0.0), |g, _i, s| {
                if !g.is_subset_of(f) {
                    return;
                }
                let slack = pairing(&s.psi, p).unwrap().abs() - (1.0 - s.delta);
                best = best.max(slack);
            });
            if best <= 0.0 {
                gaps += 1;
            } else {
                d_min = d_min.min(best);
            }
        }
        println!(
            "F={:?}: mesh {} pts in {:?}; scan {:?}; gaps {}; dmin {:.3e}",
            f.members(),
            mesh.points.len(),
            tm,
            t.elapsed(),
            gaps,
            d_min
        );
    }
}
