//! Markdown report for `reproduce-paper`.

use std::fmt::Write;

use qndctl_core::simulate::ConvergenceSummary;
use qndctl_core::EnsembleResult;

pub struct Check {
    name: &'static str,
    expected: &'static str,
    observed: String,
    pass: bool,
}

impl Check {
    pub fn new(name: &'static str, expected: &'static str, observed: String, pass: bool) -> Self {
        Self {
            name,
            expected,
            observed,
            pass,
        }
    }
}

pub struct Report {
    case: String,
    config_hash: String,
    seed: u64,
    checks: Vec<Check>,
    ensemble: Option<String>,
}

impl Report {
    pub fn new(case: &str, config_hash: &str, seed: u64) -> Self {
        Self {
            case: case.into(),
            config_hash: config_hash.into(),
            seed,
            checks: Vec::new(),
            ensemble: None,
        }
    }

    pub fn push(&mut self, c: Check) {
        println!(
            "[{}] {}: {}",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            c.observed
        );
        self.checks.push(c);
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn verdict_line(&self) -> String {
        let failed = self.checks.iter().filter(|c| !c.pass).count();
        if failed == 0 {
            format!("all {} checks passed", self.checks.len())
        } else {
            format!("{failed} of {} checks failed", self.checks.len())
        }
    }

    pub fn set_ensemble(&mut self, result: &EnsembleResult, stats: &ConvergenceSummary) {
        let mut s = String::new();
        let curve = &result.mean_fidelity_curve;
        let lyap = &result.mean_lyapunov_curve;
        let _ = writeln!(s, "| k | mean fidelity | mean V |");
        let _ = writeln!(s, "|---|---|---|");
        for k in [0, 10, 50, 100, 200, 500, 1000] {
            if k < curve.len() {
                let _ = writeln!(s, "| {k} | {:.4} | {:.4} |", curve[k], lyap[k]);
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "Hitting time of fidelity {}: median {}, 90th percentile {}.",
            result.fidelity_threshold,
            fmt_opt(stats.median_hitting_time),
            fmt_opt(stats.p90_hitting_time)
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "Final leading level per realization:");
        let _ = writeln!(s);
        let mut leading = vec![0usize; result.hit_histogram.len()];
        for r in &result.per_realization {
            leading[r.leading_state] += 1;
        }
        let _ = writeln!(s, "| level | count |");
        let _ = writeln!(s, "|---|---|");
        for (n, c) in leading.iter().enumerate() {
            let _ = writeln!(s, "| {n} | {c} |");
        }
        self.ensemble = Some(s);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Reference example, {} case", self.case);
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "config hash `{}`, master seed {}",
            self.config_hash, self.seed
        );
        let _ = writeln!(s);
        let _ = writeln!(s, "**{}**", self.verdict_line());
        let _ = writeln!(s);
        let _ = writeln!(s, "| check | expected | observed | result |");
        let _ = writeln!(s, "|---|---|---|---|");
        for c in &self.checks {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} |",
                cell(c.name),
                cell(c.expected),
                cell(&c.observed),
                if c.pass { "pass" } else { "FAIL" }
            );
        }
        if let Some(e) = &self.ensemble {
            let _ = writeln!(s);
            let _ = writeln!(s, "## Ensemble");
            let _ = writeln!(s);
            s.push_str(e);
        }
        s
    }
}

fn fmt_opt(v: Option<usize>) -> String {
    v.map_or("none".into(), |k| k.to_string())
}

fn cell(text: &str) -> String {
    text.replace('|', "\\|")
}
