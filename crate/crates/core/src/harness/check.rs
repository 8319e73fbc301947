//! Hard pass/fail conditions over a finished run's metrics, used by
//! `run-all --check` and by the acceptance suite. Soft targets are reported
//! but do not gate.

use std::io::Write;

use crate::error::Result;
use crate::harness::metrics::MetricsRecord;

pub struct CheckOutcome {
    pub name: &'static str,
    pub hard_pass: bool,
    pub detail: String,
}

fn metric(records: &[MetricsRecord], stage: &str, key: &str) -> Option<f64> {
    records.iter().find(|r| r.stage == stage).and_then(|r| r.metrics.get(key)).copied()
}

/// Evaluate every hard condition on a run's records.
pub fn evaluate(records: &[MetricsRecord], wall_clock_secs: f64) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let g = |stage: &str, key: &str| metric(records, stage, key).unwrap_or(f64::NAN);

    let gain_ft = g("summary", "mining_f1_gain/L1-L2");
    out.push(CheckOutcome {
        name: "mining gain on fine-tuned pair > 0 (soft >= +10 points)",
        hard_pass: gain_ft > 0.0,
        detail: format!("gain = {:+.2} points{}", gain_ft * 100.0, soft(gain_ft * 100.0 >= 10.0)),
    });

    for pair in ["L1-L3", "L2-L3"] {
        let gain = g("summary", &format!("mining_f1_gain/{}", pair));
        out.push(CheckOutcome {
            name: match pair {
                "L1-L3" => "mining gain propagates to L1-L3 (soft >= +5 points)",
                _ => "mining gain propagates to L2-L3 (soft >= +5 points)",
            },
            hard_pass: gain > 0.0,
            detail: format!("gain = {:+.2} points{}", gain * 100.0, soft(gain * 100.0 >= 5.0)),
        });
    }

    let mut psm_all = true;
    let mut detail = String::new();
    for pair in ["L1-L2", "L1-L3", "L2-L3"] {
        let gain = g("summary", &format!("psm_gain/{}", pair));
        psm_all &= gain > 0.0;
        detail.push_str(&format!("{} {:+.2} ", pair, gain * 100.0));
    }
    let mean_gain = g("summary", "psm_gain_mean");
    out.push(CheckOutcome {
        name: "PSM accuracy improves on all pairs (soft mean >= +5 points)",
        hard_pass: psm_all,
        detail: format!("{}| mean {:+.2}{}", detail, mean_gain * 100.0, soft(mean_gain * 100.0 >= 5.0)),
    });

    let wm = g("eval/wordmap/L1-L2", "mining_f1");
    let vanilla = g("eval/vanilla/L1-L2", "mining_f1");
    let ft = g("eval/finetuned/L1-L2", "mining_f1");
    out.push(CheckOutcome {
        name: "baseline ordering wordmap < vanilla < fine-tuned (mining F1)",
        hard_pass: wm < vanilla && vanilla < ft,
        detail: format!("wordmap {:.4} vs vanilla {:.4} vs fine-tuned {:.4}", wm, vanilla, ft),
    });

    let noise_delta = g("summary", "noise_ablation_f1_delta");
    out.push(CheckOutcome {
        name: "synthetic vs authentic fine-tuning differ by < 5 F1 points",
        hard_pass: noise_delta.is_finite() && noise_delta < 0.05,
        detail: format!("|delta| = {:.2} points", noise_delta * 100.0),
    });

    let layers = g("layers", "layers_reported");
    let expected_layers = records
        .iter()
        .find(|r| r.stage == "layers")
        .map(|r| {
            r.metrics.keys().filter(|k| k.starts_with("vanilla/layer")).count() as f64
        })
        .unwrap_or(f64::NAN);
    let deep = g("layers", "deep_delta_dominates");
    out.push(CheckOutcome {
        name: "layer sweep reports every layer for both checkpoints",
        hard_pass: layers.is_finite() && layers == expected_layers && layers > 0.0,
        detail: format!(
            "{} layers per system; deepest-third delta dominates: {} (soft)",
            layers,
            if deep == 1.0 { "yes" } else { "no" }
        ),
    });

    out.push(CheckOutcome {
        name: "total runtime under 30 CPU-minutes",
        hard_pass: wall_clock_secs < 1800.0,
        detail: format!("{:.1}s", wall_clock_secs),
    });

    out
}

fn soft(pass: bool) -> &'static str {
    if pass {
        " [soft target met]"
    } else {
        " [soft target missed]"
    }
}

/// Print one line per condition; true iff every hard condition passed.
pub fn report(records: &[MetricsRecord], wall_clock_secs: f64, sink: &mut dyn Write) -> Result<bool> {
    let outcomes = evaluate(records, wall_clock_secs);
    let mut all = true;
    for o in &outcomes {
        all &= o.hard_pass;
        writeln!(sink, "[{}] {} — {}", if o.hard_pass { "PASS" } else { "FAIL" }, o.name, o.detail)?;
    }
    writeln!(sink, "{}", if all { "all hard checks passed" } else { "hard check failures present" })?;
    Ok(all)
}
