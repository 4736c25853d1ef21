use std::f64::consts::PI;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use qndctl_core::io::{
    MatrixJson, MeasurementJson, ObservableJson, PhotonBoxJson, SynthesisResultJson,
};
use qndctl_core::simulate::output::{write_summary_json, write_trajectories_csv, Provenance};
use qndctl_core::synthesis::{Assumption, AssumptionReport, LambdaCheck, Status, LAMBDA_MARGIN};
use qndctl_core::{
    assumption_report, check_distinguishability, convergence_statistics, run_ensemble,
    verify_lambda, ControllerConfig, DiagonalObservable, EnsembleResult, HermitianOperator,
    LoopMode, OperatorRole, SynthesisResult, TOL,
};
use serde::Serialize;

use crate::config::{
    self, EnsembleJson, ExperimentConfig, H1Source, LoopJson, MixJson, NamedState, Resolved,
    StateJson, SynthesisJson,
};
use crate::report::{Check, Report};
use crate::{Case, ReproduceArgs, RunArgs, SynthesizeArgs, ValidateArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Code {
    Ok = 0,
    Invalid = 1,
    Infeasible = 2,
    PartialFailure = 3,
    TargetMissed = 4,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

fn write_stamped<T: Serialize>(path: &Path, hash: &str, body: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&Stamped {
        config_hash: hash,
        body,
    })?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn print_lambda(result: &SynthesisResult, check: &LambdaCheck, n_star: usize) {
    let lt: Vec<String> = result
        .lambda_tilde
        .iter()
        .map(|v| format!("{v:.6}"))
        .collect();
    println!("lambda_tilde = R sigma = [{}]", lt.join(", "));
    println!(
        "sign condition (n* = {n_star}, margin {LAMBDA_MARGIN:e}): {}; sum = {:.3e} ({})",
        if check.ok { "satisfied" } else { "violated" },
        check.sum,
        if check.sum_ok { "ok" } else { "too large" }
    );
    for e in check.entries.iter().filter(|e| !e.ok) {
        println!("  entry {} = {:.6} has the wrong sign", e.index, e.value);
    }
}

pub fn synthesize(args: &SynthesizeArgs) -> Result<Code> {
    let obs: ObservableJson = qndctl_core::io::read_json(&args.p_diag)?;
    let p = obs.to_observable()?;
    let opts = SynthesisJson {
        sparse: args.sparse,
        gamma1: args.gamma1,
        gamma2: args.gamma2,
        alpha1: args.alpha1,
        alpha2: args.alpha2,
        norm: args.norm.map(Into::into),
        trace_bound: args.trace_bound,
        phase: args.phase.into(),
    };
    let problem = opts.problem(p.clone());
    let hash = config::hash_json::<serde_json::Value>(&[
        &serde_json::to_value(ObservableJson::from_observable(&p))?,
        &serde_json::to_value(&opts)?,
    ]);
    let result = qndctl_core::solve_synthesis(&problem)?;
    let check = verify_lambda(&result.lambda_tilde, p.n_star(), LAMBDA_MARGIN);
    print_lambda(&result, &check, p.n_star());
    println!(
        "residual {:.3e}, objective {:.6}, {} iterations",
        result.residual, result.objective, result.iterations
    );

    create_dir(&args.out_dir)?;
    write_stamped(
        &args.out_dir.join("synthesis.json"),
        &hash,
        &SynthesisResultJson::from(&result),
    )?;
    if !result.feasible {
        eprintln!(
            "infeasible: R sigma does not have the required sign pattern.\n\
             Try a larger gamma2 (weight on the lambda margin), a smaller alpha1/alpha2, \
             or the l1 residual; a constant or nearly constant P cannot be stabilized this way."
        );
        return Ok(Code::Infeasible);
    }
    let h1 = qndctl_core::hamiltonian_of_r(&result.r, opts.phase)?;
    write_h1(&args.out_dir.join("h1.json"), &hash, &h1)?;
    println!("wrote {}", args.out_dir.display());
    Ok(Code::Ok)
}

fn write_h1(path: &Path, hash: &str, h1: &HermitianOperator) -> Result<()> {
    #[derive(Serialize)]
    struct H1File<'a> {
        convention: &'a str,
        #[serde(flatten)]
        matrix: MatrixJson,
    }
    write_stamped(
        path,
        hash,
        &H1File {
            convention: qndctl_core::io::CONVENTION,
            matrix: MatrixJson::from_complex(h1.matrix()),
        },
    )
}

fn load_resolved(path: &Path, seed: Option<u64>) -> Result<Resolved> {
    let mut cfg = config::load(path)?;
    if let Some(seed) = seed {
        cfg.ensemble.master_seed = Some(seed);
    }
    let base = path.parent().unwrap_or(Path::new("."));
    config::resolve(cfg, base)
}

struct RunOutput {
    result: EnsembleResult,
    success_rate: f64,
}

fn run_and_write(res: &Resolved, out_dir: &Path, threads: Option<usize>) -> Result<RunOutput> {
    create_dir(out_dir)?;
    let master_seed = res.master_seed();
    let result = run_ensemble(
        &res.loop_cfg,
        &res.rho0,
        res.config.ensemble.realizations,
        master_seed,
        threads,
    )?;
    let prov = Provenance {
        config_hash: res.config_hash.clone(),
        master_seed,
    };
    let csv = out_dir.join("trajectories.csv");
    let mut w =
        BufWriter::new(File::create(&csv).with_context(|| format!("creating {}", csv.display()))?);
    write_trajectories_csv(&mut w, &result, &prov)?;
    w.flush()?;
    let json = out_dir.join("summary.json");
    let mut w = BufWriter::new(
        File::create(&json).with_context(|| format!("creating {}", json.display()))?,
    );
    write_summary_json(&mut w, &result, &prov)?;
    w.flush()?;
    let stats = convergence_statistics(&result);
    println!(
        "{} realizations ({} failed): {} reached fidelity {} (rate {:.3}); median hitting time {}",
        result.realizations,
        stats.failed,
        stats.successes,
        result.fidelity_threshold,
        stats.success_rate,
        stats
            .median_hitting_time
            .map_or("none".to_string(), |k| k.to_string())
    );
    Ok(RunOutput {
        success_rate: stats.success_rate,
        result,
    })
}

pub fn simulate(args: &RunArgs) -> Result<Code> {
    let res = load_resolved(&args.config, args.seed)?;
    let out_dir = args
        .out_dir
        .clone()
        .or_else(|| res.config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let threads = args.threads.or(res.config.ensemble.threads);
    let out = run_and_write(&res, &out_dir, threads)?;
    if !out.result.failures.is_empty() {
        for f in &out.result.failures {
            eprintln!("realization {} failed: {}", f.index, f.error);
        }
        return Ok(Code::PartialFailure);
    }
    if out.success_rate < res.config.success_floor {
        eprintln!(
            "success rate {:.3} is below the configured floor {}",
            out.success_rate, res.config.success_floor
        );
        return Ok(Code::TargetMissed);
    }
    Ok(Code::Ok)
}

/// Assumptions each loop needs before its convergence argument applies.
pub fn required_assumptions(mode: LoopMode) -> &'static [Assumption] {
    match mode {
        LoopMode::Deterministic => &[
            Assumption::Diagonal,
            Assumption::NondegenerateObservable,
            Assumption::DistinctDriftGaps,
            Assumption::FullConnectivity,
        ],
        LoopMode::Stochastic | LoopMode::Filtered => &[
            Assumption::NondegenerateObservable,
            Assumption::Distinguishability,
        ],
        LoopMode::OpenLoop => &[Assumption::Distinguishability],
    }
}

fn print_report(report: &AssumptionReport, required: &[Assumption]) {
    for c in &report.checks {
        let tag = match c.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Skipped => "skip",
        };
        let need = if required.contains(&c.assumption) {
            "required"
        } else {
            "optional"
        };
        println!("[{tag}] {} ({need}): {}", c.assumption.label(), c.detail);
        if !c.witnesses.is_empty() {
            let shown: Vec<String> = c
                .witnesses
                .iter()
                .take(12)
                .map(|w| format!("{w:?}"))
                .collect();
            let more = c.witnesses.len().saturating_sub(12);
            println!(
                "       witnesses: {}{}",
                shown.join(" "),
                if more > 0 {
                    format!(" (+{more} more)")
                } else {
                    String::new()
                }
            );
        }
    }
}

pub fn validate(args: &ValidateArgs) -> Result<Code> {
    let cfg = config::load(&args.config)?;
    let base = args.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    // validation should work without a seed, so fill one in if missing
    let mut cfg = cfg;
    cfg.ensemble.master_seed.get_or_insert(0);
    let res = config::resolve(cfg, &base)?;
    let mode = res.config.run.mode;
    // the deterministic loop treats a missing drift as zero
    let zero_drift;
    let h0 = match (&res.h0, mode) {
        (Some(h), _) => Some(h),
        (None, LoopMode::Deterministic) => {
            zero_drift =
                HermitianOperator::from_real_diag(&vec![0.0; res.p.dim()], OperatorRole::Drift);
            Some(&zero_drift)
        }
        (None, _) => None,
    };
    let report = assumption_report(&res.p, h0, Some(&res.h1), res.meas.as_ref());
    let required = required_assumptions(mode);
    println!(
        "mode {mode:?}, {} levels, config hash {}",
        res.p.dim(),
        res.config_hash
    );
    print_report(&report, required);
    if let Some(meas) = &res.meas {
        let pairs = check_distinguishability(meas, TOL.completeness);
        if pairs.is_empty() {
            println!("measurement distinguishes every pair of levels");
        } else {
            let shown: Vec<String> = pairs.iter().map(|(a, b)| format!("({a}, {b})")).collect();
            println!("indistinguishable pairs: {}", shown.join(" "));
        }
    }
    let failing = report.require(required);
    if failing.is_empty() {
        println!("all assumptions required by {mode:?} mode hold");
        Ok(Code::Ok)
    } else {
        let names: Vec<&str> = failing.iter().map(|a| a.label()).collect();
        println!("not satisfied: {}", names.join(", "));
        Ok(Code::Invalid)
    }
}

/// Diagonal of P for the 8-level reference example.
pub const EXAMPLE_SIGMA: [f64; 8] = [
    51.7022, 82.0324, 10.0114, 40.2333, 24.6756, 19.2339, 28.6260, 44.5561,
];

/// The reference closed-loop experiment, as a config document.
pub fn example_config(sparse: bool, seed: u64, realizations: usize) -> ExperimentConfig {
    ExperimentConfig {
        observable: ObservableJson {
            diag: EXAMPLE_SIGMA.to_vec(),
            n_star: Some(2),
        },
        h1: H1Source::Synthesize(SynthesisJson {
            sparse,
            ..Default::default()
        }),
        h0: None,
        measurement: Some(MeasurementJson::PhotonBox {
            photon_box: PhotonBoxJson {
                n: 8,
                phi0: 0.125,
                theta: PI / 4.0,
            },
        }),
        controller: ControllerConfig::quadratic(0.1),
        run: LoopJson {
            mode: LoopMode::Stochastic,
            steps: 1000,
            fidelity_threshold: 0.99,
            state_stride: 0,
            rho0: StateJson::Mix {
                mix: Box::new(MixJson {
                    weight: 0.5,
                    a: StateJson::Basis { basis: 0 },
                    b: StateJson::Named(NamedState::UniformSuperposition),
                }),
            },
            rho0_estimate: None,
        },
        ensemble: EnsembleJson {
            realizations,
            master_seed: Some(seed),
            threads: None,
        },
        success_floor: 0.95,
        output_dir: None,
    }
}

pub fn reproduce(args: &ReproduceArgs) -> Result<Code> {
    let sparse = matches!(args.case, Case::Sparse);
    let case = if sparse { "sparse" } else { "nonsparse" };
    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("reproduce-{case}")));
    create_dir(&out_dir)?;
    let cfg = example_config(sparse, args.seed, args.realizations);
    qndctl_core::io::write_json(&out_dir.join("config.json"), &cfg)?;
    let res = config::resolve(cfg, Path::new("."))?;
    let synth = res.synthesis.as_ref().expect("example synthesizes H1");
    let result = &synth.result;
    let p: &DiagonalObservable = &res.p;

    let mut report = Report::new(case, &res.config_hash, args.seed);
    let check = verify_lambda(&result.lambda_tilde, p.n_star(), LAMBDA_MARGIN);
    print_lambda(result, &check, p.n_star());
    report.push(Check::new(
        "synthesis is feasible",
        "residual <= 1e-6 and sign condition holds",
        format!(
            "residual {:.2e}, sign condition {}",
            result.residual, check.ok
        ),
        result.residual <= 1e-6 && check.ok,
    ));
    if sparse {
        let target = [-1.0, -1.0, 7.0, -1.0, -1.0, -1.0, -1.0, -1.0];
        let dev = result
            .lambda_tilde
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        report.push(Check::new(
            "lambda_tilde pattern",
            "(-1, -1, 7, -1, -1, -1, -1, -1) within 1e-3",
            format!("max deviation {dev:.2e}"),
            dev <= 1e-3,
        ));
        let star: Vec<(usize, usize)> = result
            .r
            .support(1e-4)
            .into_iter()
            .filter(|&(i, j)| i != p.n_star() && j != p.n_star())
            .collect();
        report.push(Check::new(
            "H1 couples only to the target level",
            "no R entry above 1e-4 off row/column n*",
            format!("{} such entries", star.len()),
            star.is_empty(),
        ));
    } else {
        let sum: f64 = result.lambda_tilde.iter().sum();
        report.push(Check::new(
            "lambda_tilde sums to zero",
            "|sum| <= 1e-7",
            format!("{sum:.2e}"),
            sum.abs() <= 1e-7,
        ));
    }
    let (r, h) = (result.r.matrix(), synth.h1.matrix());
    let mut worst: f64 = 0.0;
    for i in 0..p.dim() {
        for j in 0..p.dim() {
            if i != j {
                worst = worst
                    .max((h[(i, j)].norm_sqr() - r[(i, j)] / 2.0).abs() / r[(i, j)].abs().max(1.0));
            }
        }
    }
    report.push(Check::new(
        "magnitude convention |H1_ij|^2 = R_ij / 2",
        "agreement to 1e-12",
        format!("max deviation {worst:.1e}"),
        worst <= 1e-12,
    ));

    write_stamped(
        &out_dir.join("synthesis.json"),
        &res.config_hash,
        &SynthesisResultJson::from(result),
    )?;
    write_h1(&out_dir.join("h1.json"), &res.config_hash, &synth.h1)?;

    let out = run_and_write(&res, &out_dir, args.threads)?;
    let stats = convergence_statistics(&out.result);
    report.push(Check::new(
        "closed-loop convergence",
        "at least 95% of runs reach fidelity 0.99 by k = 1000",
        format!(
            "{}/{} (mean fidelity at k = 1000: {:.3})",
            stats.successes,
            out.result.realizations,
            out.result
                .mean_fidelity_curve
                .last()
                .copied()
                .unwrap_or(f64::NAN)
        ),
        stats.success_rate >= 0.95,
    ));
    report.set_ensemble(&out.result, &stats);

    let path = out_dir.join("report.md");
    fs::write(&path, report.render()).with_context(|| format!("writing {}", path.display()))?;
    println!("{}", report.verdict_line());
    println!("wrote {}", out_dir.display());
    if !out.result.failures.is_empty() {
        return Ok(Code::PartialFailure);
    }
    Ok(if report.all_passed() {
        Code::Ok
    } else {
        Code::TargetMissed
    })
}
