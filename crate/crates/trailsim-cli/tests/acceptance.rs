//! Acceptance suite: every release gate in one serial test.
//!
//! Each criterion prints exactly one PASS/FAIL line; the test fails at the
//! end if any criterion failed, so the full scoreboard always prints.
//!
//! Run with `cargo test -p trailsim-cli --test acceptance -- --nocapture`.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use trailsim::attrs::entropy_of;
use trailsim::engine::{compare_energy, replicate, run, run_with_population};
use trailsim::identity::{brute_force_oracle, OracleParams};
use trailsim::micro::build_micro_world;
use trailsim::protocol::Mode;
use trailsim::scenario::{AttributeSetSpec, ScenarioConfig};
use trailsim::sensing::NoiseModel;

fn scenario(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    ScenarioConfig::load(&path).expect("committed scenario loads")
}

fn jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

struct Criterion {
    number: usize,
    passed: bool,
    elapsed: Duration,
    budget: Option<Duration>,
    detail: String,
}

impl Criterion {
    fn check(number: usize, budget_secs: Option<u64>, f: impl FnOnce() -> Result<String, String>) -> Self {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let budget = budget_secs.map(Duration::from_secs);
        let in_budget = budget.is_none_or(|b| elapsed <= b);
        let (passed, detail) = match outcome {
            Ok(d) if in_budget => (true, d),
            Ok(d) => (false, format!("{d}; exceeded {budget_secs:?}s budget")),
            Err(d) => (false, d),
        };
        Criterion { number, passed, elapsed, budget, detail }
    }

    fn print(&self) {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let budget = self
            .budget
            .map(|b| format!(" (budget {}s)", b.as_secs()))
            .unwrap_or_default();
        println!(
            "criterion {} {verdict} [{:.1}s{budget}]: {}",
            self.number,
            self.elapsed.as_secs_f64(),
            self.detail
        );
    }
}

fn zero_noise_distinct(name: &str) -> ScenarioConfig {
    let mut config = scenario(name);
    config.noise = NoiseModel::none();
    config.population.distinct_attributes = true;
    config
}

fn criterion_1() -> Result<String, String> {
    let mut checked = 0;
    for name in ["linear.toml", "nonlinear.toml"] {
        let config = zero_noise_distinct(name);
        for seed in 0..50u64 {
            let result =
                run(&config, seed).map_err(|e| format!("{name} seed {seed}: {e}"))?;
            let unique = result.registry.unique_count();
            let acc = result.accuracy.as_ref().unwrap();
            if unique != config.population.size {
                return Err(format!(
                    "{name} seed {seed}: unique_count {unique} != {}",
                    config.population.size
                ));
            }
            if acc.trail_exact_fraction != 1.0 {
                return Err(format!(
                    "{name} seed {seed}: trail_exact_fraction {} != 1.0",
                    acc.trail_exact_fraction
                ));
            }
            checked += 1;
        }
    }
    Ok(format!("zero-noise perfect recovery on {checked} runs (2 scenarios x 50 seeds)"))
}

fn criterion_2() -> Result<String, String> {
    let mut worlds = 0;
    let mut seed = 0u64;
    while worlds < 200 {
        let world = build_micro_world(seed);
        seed += 1;
        if world.agents.is_empty() {
            continue;
        }
        let result = run_with_population(&world.config, world.agents.clone(), seed)
            .map_err(|e| format!("micro world {seed}: {e}"))?;
        let params = OracleParams {
            tick_seconds: world.config.tick_seconds,
            window: world.config.protocol.window,
            speed_tolerance: world.config.protocol.speed_tolerance,
        };
        let oracle = brute_force_oracle(&result.observations, &world.config.graph, &params)
            .map_err(|e| format!("micro world {seed}: oracle: {e}"))?;
        let online = result.registry.canonical_partition();
        if online != oracle {
            return Err(format!(
                "micro world {seed}: online partition {online:?} != oracle {oracle:?}"
            ));
        }
        worlds += 1;
    }
    Ok(format!("online identity partition equals the exhaustive oracle on {worlds} micro-scenarios"))
}

fn criterion_3() -> Result<String, String> {
    let n = 100;
    let mut aggregate_savings = Vec::new();
    let mut details = Vec::new();
    for name in ["linear.toml", "nonlinear.toml"] {
        let config = scenario(name);
        let cmp = compare_energy(&config, n, 0, jobs());
        for row in &cmp.per_sensor {
            let gate = config.graph.sensor(row.sensor).unwrap().always_on;
            if gate {
                if (row.mean_units_duty - row.mean_units_on).abs() > 1e-9 {
                    return Err(format!(
                        "{name} sensor {}: always-on-flagged sensor should spend \
                         identically in both modes ({} vs {})",
                        row.sensor, row.mean_units_duty, row.mean_units_on
                    ));
                }
            } else if row.mean_units_duty >= row.mean_units_on {
                return Err(format!(
                    "{name} sensor {}: mean duty units {} not below always-on {}",
                    row.sensor, row.mean_units_duty, row.mean_units_on
                ));
            }
        }
        details.push(format!(
            "{} saving {:.1}%",
            config.name,
            cmp.saving_percent.unwrap_or(f64::NAN)
        ));
        aggregate_savings.push(cmp.per_seed_saving);
    }

    let (lin, nl) = (&aggregate_savings[0], &aggregate_savings[1]);
    if lin.len() != nl.len() {
        return Err("unpaired replication counts".into());
    }
    let diffs: Vec<f64> = lin
        .iter()
        .zip(nl)
        .map(|((sa, a), (sb, b))| {
            assert_eq!(sa, sb, "replications must be seed-paired");
            a - b
        })
        .collect();
    let k = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / k;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0);
    let t = mean / (var.sqrt() / k.sqrt());
    let dist = StudentsT::new(0.0, 1.0, k - 1.0).unwrap();
    let p = 1.0 - dist.cdf(t);
    if mean <= 0.0 || p >= 0.01 {
        return Err(format!(
            "linear saving does not exceed nonlinear: mean diff {mean:.2} pts, t {t:.2}, p {p:.4}"
        ));
    }
    Ok(format!(
        "duty < always-on on every duty-cycled sensor; {}; paired diff {:.1} pts (t={:.1}, p={:.1e})",
        details.join(", "),
        mean,
        t,
        p
    ))
}

fn criterion_4() -> Result<String, String> {
    let n = 100;
    let config = scenario("nonlinear.toml");
    let gated = replicate(&config, n, 0, jobs());
    let mut ungated_cfg = config.clone();
    AttributeSetSpec::parse("no-timestamp").unwrap().apply(&mut ungated_cfg);
    let ungated = replicate(&ungated_cfg, n, 0, jobs());
    let gap = gated.mean_count_accuracy - ungated.mean_count_accuracy;
    if gap < 0.10 {
        return Err(format!(
            "accuracy gap {gap:.3} below 0.10 (with {:.3}, without {:.3})",
            gated.mean_count_accuracy, ungated.mean_count_accuracy
        ));
    }
    Ok(format!(
        "window gating lifts mean accuracy {:.3} -> {:.3} (gap {:.1} pts over {n} seeds)",
        ungated.mean_count_accuracy,
        gated.mean_count_accuracy,
        gap * 100.0
    ))
}

fn criterion_5() -> Result<String, String> {
    let n = 100;
    let linear = replicate(&scenario("linear.toml"), n, 0, jobs());
    let nonlinear = replicate(&scenario("nonlinear.toml"), n, 0, jobs());
    let (lin, nl) = (linear.mean_count_accuracy, nonlinear.mean_count_accuracy);
    if !(0.60..=0.85).contains(&lin) {
        return Err(format!("five-attribute linear accuracy {lin:.3} outside [0.60, 0.85]"));
    }
    if nl < lin - 0.05 {
        return Err(format!(
            "seven-attribute nonlinear accuracy {nl:.3} below linear {lin:.3} - 0.05"
        ));
    }
    Ok(format!("linear mean accuracy {lin:.3} in [0.60, 0.85]; nonlinear {nl:.3} >= {:.3}", lin - 0.05))
}

fn criterion_6() -> Result<String, String> {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-6;
    let constant = entropy_of(&["red", "red", "red"]).unwrap();
    let binary = entropy_of(&["red", "blue"]).unwrap();
    let quarter = entropy_of(&["red", "blue", "blue", "blue"]).unwrap();
    if !close(constant, 0.0) || !close(binary, 1.0) || !close(quarter, 0.811278) {
        return Err(format!(
            "tagged entropy examples failed: {constant}, {binary}, {quarter}"
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for case in 0..1000 {
        let distinct = rng.random_range(1..=8usize);
        let len = rng.random_range(1..=64usize);
        let values: Vec<u8> = (0..len).map(|_| rng.random_range(0..distinct as u8)).collect();
        let bits = entropy_of(&values).unwrap();
        let seen = {
            let mut v = values.clone();
            v.sort_unstable();
            v.dedup();
            v.len() as f64
        };
        if !(-1e-12..=seen.log2() + 1e-12).contains(&bits) {
            return Err(format!("case {case}: entropy {bits} outside [0, log2({seen})]"));
        }
    }
    Ok("tagged entropy examples at 1e-6 plus 1000-case bound check".into())
}

fn criterion_7() -> Result<String, String> {
    // byte-identical CSVs from the binary
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let scenario_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/nonlinear.toml");
    let mut outputs = Vec::new();
    for sub in ["a", "b"] {
        let out = dir.path().join(sub);
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_trailsim"))
            .args([
                "run",
                "--scenario",
                scenario_path.to_str().unwrap(),
                "--seed",
                "7",
                "--out",
                out.to_str().unwrap(),
                "-v",
                "--emit-truth",
            ])
            .status()
            .map_err(|e| e.to_string())?;
        if !status.success() {
            return Err(format!("run exited with {status}"));
        }
        let mut bundle = String::new();
        for name in ["observations.csv", "trails.csv", "energy.csv", "summary.csv", "messages.csv"] {
            bundle.push_str(&std::fs::read_to_string(out.join(name)).map_err(|e| e.to_string())?);
        }
        outputs.push(bundle);
    }
    if outputs[0] != outputs[1] {
        return Err("rerun with identical arguments produced different CSV bytes".into());
    }

    // worker count cannot change aggregates
    let config = scenario("nonlinear.toml");
    let serial = replicate(&config, 16, 100, 1);
    let parallel = replicate(&config, 16, 100, 8);
    if serial.mean_count_accuracy != parallel.mean_count_accuracy
        || serial.mean_energy != parallel.mean_energy
        || serial.summaries.len() != parallel.summaries.len()
    {
        return Err("--jobs 1 and --jobs 8 disagree on aggregates".into());
    }
    for (a, b) in serial.summaries.iter().zip(&parallel.summaries) {
        if a.seed != b.seed || a.unique_count != b.unique_count || a.energy_units != b.energy_units {
            return Err(format!("seed {} differs between worker counts", a.seed));
        }
    }
    Ok("byte-identical CSV reruns; aggregates independent of worker count".into())
}

fn criterion_8() -> Result<String, String> {
    let config = scenario("nonlinear.toml");
    let start = Instant::now();
    let stats = replicate(&config, 1000, 0, jobs());
    let elapsed = start.elapsed();
    if !stats.failures.is_empty() {
        return Err(format!("{} of 1000 replications failed", stats.failures.len()));
    }
    if elapsed > Duration::from_secs(300) {
        return Err(format!("1000 replications took {:.1}s (budget 300s)", elapsed.as_secs_f64()));
    }
    Ok(format!(
        "1000 replications x 100 agents in {:.1}s (mean accuracy {:.3})",
        elapsed.as_secs_f64(),
        stats.mean_count_accuracy
    ))
}

fn criterion_9() -> Result<String, String> {
    let mut reported = Vec::new();
    for name in ["linear.toml", "nonlinear.toml"] {
        let config = scenario(name);
        let mut duty_cfg = config.clone();
        duty_cfg.mode = Mode::DutyCycle;
        let mut on_cfg = config.clone();
        on_cfg.mode = Mode::AlwaysOn;
        let duty = replicate(&duty_cfg, 1000, 0, jobs());
        let on = replicate(&on_cfg, 1000, 0, jobs());

        let mut worst: (f64, u32) = (0.0, u32::MAX);
        for sensor in config.graph.sensors() {
            let mut savings = Vec::new();
            for (d, o) in duty.summaries.iter().zip(&on.summaries) {
                let du = d.energy_units[&sensor.id] as f64;
                let ou = o.energy_units[&sensor.id] as f64;
                if ou > 0.0 {
                    savings.push(100.0 * (1.0 - du / ou));
                }
            }
            let n = savings.len() as f64;
            let mean = savings.iter().sum::<f64>() / n;
            let std = (savings.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
            if !std.is_finite() {
                return Err(format!("{name} sensor {}: saving std not finite", sensor.id));
            }
            if std >= 10.0 {
                return Err(format!(
                    "{name} sensor {}: saving std {std:.2} pts is not below 10",
                    sensor.id
                ));
            }
            if std > worst.0 {
                worst = (std, sensor.id.0);
            }
        }
        reported.push(format!("{}: worst per-sensor saving std {:.2} pts (sensor {})", config.name, worst.0, worst.1));
    }
    Ok(reported.join("; "))
}

#[test]
fn acceptance() {
    let criteria = vec![
        Criterion::check(1, Some(10), criterion_1),
        Criterion::check(2, Some(60), criterion_2),
        Criterion::check(3, Some(120), criterion_3),
        Criterion::check(4, Some(120), criterion_4),
        Criterion::check(5, None, criterion_5),
        Criterion::check(6, Some(1), criterion_6),
        Criterion::check(7, Some(30), criterion_7),
        Criterion::check(8, Some(300), criterion_8),
        Criterion::check(9, None, criterion_9),
    ];
    println!();
    for c in &criteria {
        c.print();
    }
    println!();
    let failed: Vec<usize> = criteria.iter().filter(|c| !c.passed).map(|c| c.number).collect();
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
