//! Plot-ready output: trajectory CSV and ensemble summary JSON.

use std::io::Write;

use serde::Serialize;

use super::ensemble::{convergence_statistics, ConvergenceSummary, EnsembleResult};
use crate::error::Result;

/// Identifies the run that produced a file.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
}

pub const CSV_COLUMNS: &str = "realization,k,u,outcome,fidelity,lyapunov,purity";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per record of every completed realization, ordered by realization then `k`.
pub fn write_trajectories_csv<W: Write>(
    out: &mut W,
    result: &EnsembleResult,
    prov: &Provenance,
) -> Result<()> {
    writeln!(
        out,
        "# config_hash={} master_seed={} index_base=0",
        prov.config_hash, prov.master_seed
    )?;
    writeln!(out, "{CSV_COLUMNS}")?;
    for (index, t) in &result.trajectories {
        for r in &t.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                index,
                r.k,
                opt(r.u),
                opt(r.outcome),
                r.fidelity,
                r.lyapunov,
                r.purity
            )?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    config_hash: &'a str,
    master_seed: u64,
    index_base: u8,
    statistics: ConvergenceSummary,
    ensemble: &'a EnsembleResult,
}

pub fn write_summary_json<W: Write>(
    out: &mut W,
    result: &EnsembleResult,
    prov: &Provenance,
) -> Result<()> {
    let summary = Summary {
        config_hash: &prov.config_hash,
        master_seed: prov.master_seed,
        index_base: 0,
        statistics: convergence_statistics(result),
        ensemble: result,
    };
    serde_json::to_writer_pretty(&mut *out, &summary)?;
    writeln!(out)?;
    Ok(())
}
