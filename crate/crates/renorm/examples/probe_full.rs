use renorm::config::RunConfig;
use renorm::pipeline::{run, Effort};
use std::time::Instant;
fn main() {
    for d in [1usize, 2, 3] {
        let cfg = RunConfig::from_json(&format!(r#"{{"d": {d}}}"#)).unwrap();
        let t = Instant::now();
        match run(&cfg, &Effort::full()) {
            Ok(out) => {
                println!("d={d}: {:?} passed={}", t.elapsed(), out.certificate.passed);
                if !out.certificate.passed {
                    for (sec, entries) in &out.certificate.sections {
                        for e in entries {
                            if !e.status {
                                println!("  [FAIL] {sec}/{} {:?} {}", e.id, e.measured, e.note);
                            }
                        }
                    }
                }
            }
            Err(e) => println!("d={d}: ERROR after {:?}: {e}", t.elapsed()),
        }
    }
}
