use renorm::construction::{run_construction, BuildConfig};
use renorm::index::SliceIndex;
use renorm::space::{canonical_system, pairing, NormKind, Point};
use std::hint::black_box;
use std::time::Instant;

fn main() {
    // raw trig
    let t = Instant::now();
    let mut acc = 0.0;
    for k in 0..1_000_000 {
        acc += black_box(0.5 + 1e-7 * k as f64).acos();
    }
    println!("1e6 acos: {:?} (acc {acc:.1})", t.elapsed());
    let t = Instant::now();
    let mut acc = 0.0;
    for k in 0..1_000_000 {
        acc += black_box(0.5 + 1e-7 * k as f64).atan2(black_box(0.3));
    }
    println!("1e6 atan2: {:?} (acc {acc:.1})", t.elapsed());

    let (sys, norm) = canonical_system(NormKind::Euclidean, 0.05, 3).unwrap();
    let cfg = BuildConfig { d: 3, ..BuildConfig::default() };
    let atlas = run_construction(&cfg, &sys, &norm).unwrap();
    println!("built");
    let index = SliceIndex::build(&atlas, &norm);
    let f01 = renorm::SubspaceId::new(vec![0, 1]);
    let mesh = renorm::mesh::mesh_sphere(&f01, atlas.budgets[&f01].mesh_fineness, &norm, usize::MAX, true, 0).unwrap();
    println!("mesh {}", mesh.points.len());
    let threshold: f64 = 1.0 - atlas.max_total_margin() - 1e-9;
    // visit cost alone (counting candidates)
    let t = Instant::now();
    let mut cnt = 0usize;
    for p in mesh.points.iter().take(20000) {
        index.visit_candidates(&atlas, &p.coords, threshold, |_g, _i, _s| cnt += 1);
    }
    println!("20k visits: {:?}, avg candidates {}", t.elapsed(), cnt as f64 / 20000.0);
    // with the slack closure
    let t = Instant::now();
    let mut d_min = f64::INFINITY;
    for p in mesh.points.iter().take(20000) {
        let mut best = f64::NEG_INFINITY;
        index.visit_candidates(&atlas, &p.coords, threshold, |g, _i, s| {
            if !g.is_subset_of(&f01) { return; }
            let slack = pairing(&s.psi, p).unwrap().abs() - (1.0 - s.delta);
            best = best.max(slack);
        });
        if best > 0.0 { d_min = d_min.min(best); }
    }
    println!("20k slack-visits: {:?} (dmin {d_min:.3e})", t.elapsed());
    let y = Point::new(vec![0.7, 0.7, 0.0]);
    let _ = y;
}
