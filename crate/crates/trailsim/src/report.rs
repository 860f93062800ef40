//! CSV emission. Every writer produces byte-stable output: fixed column
//! order, six significant digits for floats, `\n` line endings.

use crate::engine::{EnergyComparison, MessageRecord, RunResult, SweepRow};
use crate::metrics::ImportanceRow;
use crate::scenario::ScenarioConfig;

use crate::attrs::Attribute;

/// Format with six significant digits, no exponent notation.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (5 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

fn attr_columns() -> String {
    Attribute::ALL.map(|a| a.name()).join(",")
}

pub fn observations_csv(result: &RunResult, config: &ScenarioConfig, emit_truth: bool) -> String {
    let mut out = String::new();
    out.push_str("obs_id,sensor_id,a,depart_tick,");
    out.push_str(&attr_columns());
    out.push_str(",speed");
    if emit_truth {
        out.push_str(",truth_id");
    }
    out.push('\n');
    for obs in &result.observations {
        out.push_str(&format!("{},{},{},{}", obs.obs_id, obs.sensor.0, obs.a, obs.depart));
        for attr in Attribute::ALL {
            out.push(',');
            if let Some(v) = obs.perceived.get(attr) {
                out.push_str(config.catalog.value_name(attr, v));
            }
        }
        out.push(',');
        out.push_str(&fmt_sig(obs.perceived.speed));
        if emit_truth {
            out.push_str(&format!(",{}", obs.truth));
        }
        out.push('\n');
    }
    out
}

pub fn trails_csv(result: &RunResult) -> String {
    let mut out = String::from("user_id,hop_index,sensor_id,tick\n");
    for (user, trail) in result.registry.trails() {
        for (hop, (sensor, tick)) in trail.iter().enumerate() {
            out.push_str(&format!("{user},{hop},{},{tick}\n", sensor.0));
        }
    }
    out
}

pub fn energy_csv(result: &RunResult) -> String {
    let mut out = String::from("sensor_id,mode,units\n");
    for (sensor, units) in &result.energy.units {
        out.push_str(&format!("{},{},{units}\n", sensor.0, result.energy.mode.name()));
    }
    out
}

pub fn summary_csv(config: &ScenarioConfig, result: &RunResult) -> String {
    let mut out = String::from(
        "scenario,seed,mode,unique_count,true_count,count_accuracy,falsely_new,\
         wrongly_merged,trail_exact_fraction\n",
    );
    let (acc, fnew, wmerged, trail) = match &result.accuracy {
        Some(a) => (
            fmt_sig(a.count_accuracy),
            a.falsely_new.to_string(),
            a.wrongly_merged.to_string(),
            fmt_sig(a.trail_exact_fraction),
        ),
        None => ("".into(), "".into(), "".into(), "".into()),
    };
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{},{}\n",
        config.name,
        result.seed,
        result.mode.name(),
        result.registry.unique_count(),
        result.agents.len(),
        acc,
        fnew,
        wmerged,
        trail,
    ));
    out
}

pub fn messages_csv(messages: &[MessageRecord]) -> String {
    let mut out = String::from(
        "origin,target,obs_id,eta,window_start,window_end,selected\n",
    );
    for record in messages {
        let m = &record.msg;
        let names: Vec<&str> = m.selected.iter().map(|(a, _)| a.name()).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            m.origin.0,
            m.target.0,
            m.origin_obs,
            m.eta,
            m.window.0,
            m.window.1,
            names.join(";"),
        ));
    }
    out
}

pub fn importance_csv(rows: &[ImportanceRow]) -> String {
    let mut out = String::from("attribute,mean_drop,rank\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.attribute.name(), fmt_sig(r.mean_drop), r.rank));
    }
    out
}

/// Aligned plain-text table with a bar per attribute, largest drop first.
pub fn importance_table(rows: &[ImportanceRow]) -> String {
    let max_drop = rows.iter().map(|r| r.mean_drop.abs()).fold(0.0f64, f64::max);
    let mut out = String::new();
    out.push_str(&format!("{:<4} {:<14} {:>10}  {}\n", "rank", "attribute", "drop", "importance"));
    for r in rows {
        let width = if max_drop > 0.0 {
            ((r.mean_drop.abs() / max_drop) * 40.0).round() as usize
        } else {
            0
        };
        out.push_str(&format!(
            "{:<4} {:<14} {:>10}  {}\n",
            r.rank,
            r.attribute.name(),
            fmt_sig(r.mean_drop),
            "#".repeat(width),
        ));
    }
    out
}

pub fn energy_compare_csv(cmp: &EnergyComparison) -> String {
    let mut out = String::from("sensor_id,mean_units_duty,mean_units_on,saving_percent\n");
    for row in &cmp.per_sensor {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.sensor.0,
            fmt_sig(row.mean_units_duty),
            fmt_sig(row.mean_units_on),
            row.saving_percent.map(fmt_sig).unwrap_or_default(),
        ));
    }
    out.push_str(&format!(
        "mean,{},{},{}\n",
        fmt_sig(cmp.mean_units_duty),
        fmt_sig(cmp.mean_units_on),
        cmp.saving_percent.map(fmt_sig).unwrap_or_default(),
    ));
    out.push_str(&format!("saving_std,,,{}\n", fmt_sig(cmp.saving_std)));
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("attribute_set,mean_accuracy,std_accuracy\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{}\n",
            r.set_name,
            fmt_sig(r.mean_accuracy),
            fmt_sig(r.std_accuracy),
        ));
    }
    out
}
