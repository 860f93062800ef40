// Prints headline metrics for the committed scenarios: zero-noise recovery,
// noisy count accuracy with and without timestamp matching, and the
// duty-cycle energy comparison.
//
//   cargo run --release -p trailsim --example probe -- [reps]

use std::path::Path;

use trailsim::engine::{compare_energy, replicate, run};
use trailsim::scenario::{AttributeSetSpec, ScenarioConfig};
use trailsim::sensing::NoiseModel;

fn main() {
    let reps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let jobs = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);

    for name in ["linear", "nonlinear"] {
        let path = format!("scenarios/{name}.toml");
        let config = ScenarioConfig::load(Path::new(&path)).expect("scenario loads");

        let mut clean = config.clone();
        clean.noise = NoiseModel::none();
        clean.population.distinct_attributes = true;
        let perfect = (0..10)
            .filter(|seed| {
                let r = run(&clean, *seed).expect("run");
                r.registry.unique_count() == clean.population.size
                    && r.accuracy.as_ref().unwrap().trail_exact_fraction == 1.0
            })
            .count();
        println!("[{name}] zero-noise perfect recovery: {perfect}/10 seeds");

        let gated = replicate(&config, reps, 1000, jobs);
        let mut ungated_cfg = config.clone();
        AttributeSetSpec::parse("no-timestamp").unwrap().apply(&mut ungated_cfg);
        let ungated = replicate(&ungated_cfg, reps, 1000, jobs);
        println!(
            "[{name}] count accuracy over {reps} seeds: {:.3} with timestamps, {:.3} without",
            gated.mean_count_accuracy, ungated.mean_count_accuracy
        );

        let cmp = compare_energy(&config, reps, 1000, jobs);
        println!(
            "[{name}] energy per sensor: duty {:.1} vs always-on {:.1} units ({:.1}% saved, std {:.2})",
            cmp.mean_units_duty,
            cmp.mean_units_on,
            cmp.saving_percent.unwrap_or(f64::NAN),
            cmp.saving_std
        );
        println!();
    }
}
