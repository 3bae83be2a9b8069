//! Runs the CEGIS loop on a built-in benchmark with its default settings.
//!
//! ```text
//! cargo run --release -p neural-lyapunov --example synthesize -- pendulum
//! ```

use neural_lyapunov::bench::build_named;
use neural_lyapunov::cegis::{synthesize, SynthesisConfig};

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| "pendulum".into());
    let seed = std::env::args().nth(2).map_or(0, |s| s.parse().expect("seed must be an integer"));
    let def = build_named(&name).expect("unknown benchmark");
    let cfg = SynthesisConfig { seed, ..SynthesisConfig::for_benchmark(&def) };
    match synthesize(&def.system, &cfg, None) {
        Ok(report) => {
            print!("{}", report.to_text());
            if std::env::var_os("SHOW_CEX").is_some() {
                report.counterexamples.write_csv(def.system.n_states(), std::io::stdout()).unwrap();
            }
        }
        Err(e) => eprintln!("synthesis failed: {e}"),
    }
}
