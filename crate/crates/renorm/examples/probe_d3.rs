use renorm::construction::*;
use renorm::space::{canonical_system, NormKind};
use std::time::Instant;
fn main() {
    let (sys, norm) = canonical_system(NormKind::Euclidean, 0.05, 3).unwrap();
    let cfg = BuildConfig { d: 3, ..BuildConfig::default() };
    let t0 = Instant::now();
    match run_construction(&cfg, &sys, &norm) {
        Ok(atlas) => {
            println!("built in {:?}", t0.elapsed());
            println!("floored: {:?}", atlas.flags.floored);
            println!("gaps: {:?}", atlas.flags.coverage_gaps);
            for (f, b) in &atlas.budgets {
                println!(
                    "F={:?} dim={} eps={:.3e} theta={:.3e} delta={:.3e} |omega|={} floored={}",
                    f.members(), f.dim(), b.eps, b.theta, b.level_margin,
                    atlas.omegas[f].len(), b.floored
                );
            }
            println!("total slices: {}", atlas.total_slices());
            let t1 = Instant::now();
            let json = atlas.to_json().unwrap();
            println!("json: {} MB in {:?}", json.len() / (1 << 20), t1.elapsed());
        }
        Err(e) => println!("ERROR after {:?}: {e}", t0.elapsed()),
    }
}
