//! CSV emission. All floats print through Rust's shortest round-trip
//! formatting, so identical runs produce identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use adsched_core::attack::Attacker;
use adsched_core::partition::{InfluenceReport, PartitionResult};
use adsched_core::SensorId;
use nalgebra::DVector;

use crate::runner::{NetRun, OccupancyRow, WinnerRow};
use crate::SimError;

pub fn fmt_f(v: f64) -> String {
    format!("{v}")
}

pub fn write_lines(
    path: &Path,
    header: &str,
    lines: impl IntoIterator<Item = String>,
) -> Result<(), SimError> {
    let mut out = String::new();
    out.push_str(header);
    out.push('\n');
    for line in lines {
        out.push_str(&line);
        out.push('\n');
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// `k,sensor_id,dim,truth,estimate` for every node and state dimension.
pub fn write_trajectories(path: &Path, run: &NetRun) -> Result<(), SimError> {
    let mut lines = Vec::new();
    for (k, x) in run.truth.iter().enumerate() {
        for (pos, id) in run.node_ids.iter().enumerate() {
            let est: &DVector<f64> = &run.estimates[k][pos];
            for dim in 0..x.len() {
                lines.push(format!(
                    "{k},{id},{},{},{}",
                    dim + 1,
                    fmt_f(x[dim]),
                    fmt_f(est[dim])
                ));
            }
        }
    }
    write_lines(path, "k,sensor_id,dim,truth,estimate", lines)
}

/// `k,receiver,sender,dim,z` for every injected signal component.
pub fn write_attacks(
    path: &Path,
    attackers: &std::collections::BTreeMap<SensorId, Attacker<f64>>,
) -> Result<(), SimError> {
    let mut lines = Vec::new();
    for (receiver, attacker) in attackers {
        for (k, step) in attacker.trace.steps.iter().enumerate() {
            for (sender, z) in &step.signals {
                for dim in 0..z.len() {
                    if z[dim] != 0.0 {
                        lines.push(format!(
                            "{k},{receiver},{sender},{},{}",
                            dim + 1,
                            fmt_f(z[dim])
                        ));
                    }
                }
            }
        }
    }
    write_lines(path, "k,receiver,sender,dim,z", lines)
}

/// `k,l,subset,candidate,weight,p,selected`: the stage-1 winner per round and
/// subset, flagged when stage 2 picked it.
pub fn write_selection(path: &Path, rows: &[WinnerRow]) -> Result<(), SimError> {
    let lines = rows.iter().map(|r| {
        format!(
            "{},{},{},{},{},{},{}",
            r.k,
            r.l,
            r.subset,
            r.candidate,
            fmt_f(r.weight),
            fmt_f(r.p),
            u8::from(r.selected)
        )
    });
    write_lines(path, "k,l,subset,candidate,weight,p,selected", lines)
}

/// Partition membership rows across strategies: `strategy,subset,member_id`.
pub fn write_partition(
    path: &Path,
    tables: &[(PartitionResult, InfluenceReport)],
) -> Result<(), SimError> {
    let mut lines = Vec::new();
    for (part, _) in tables {
        for (g, subset) in part.subsets.iter().enumerate() {
            for id in subset {
                lines.push(format!("{},{},{id}", part.strategy.label(), g + 1));
            }
        }
    }
    write_lines(path, "strategy,subset,member_id", lines)
}

/// Off-diagonal inter-subset interaction: `strategy,g,q,inter`.
pub fn write_influence(
    path: &Path,
    tables: &[(PartitionResult, InfluenceReport)],
) -> Result<(), SimError> {
    let mut lines = Vec::new();
    for (part, report) in tables {
        let m = report.inter.len();
        for g in 0..m {
            for q in 0..m {
                if g != q {
                    lines.push(format!(
                        "{},{},{},{}",
                        part.strategy.label(),
                        g + 1,
                        q + 1,
                        report.inter[g][q]
                    ));
                }
            }
        }
    }
    write_lines(path, "strategy,g,q,inter", lines)
}

/// Intra-subset correlation: `strategy,g,intra`.
pub fn write_correlation(
    path: &Path,
    tables: &[(PartitionResult, InfluenceReport)],
) -> Result<(), SimError> {
    let mut lines = Vec::new();
    for (part, report) in tables {
        for (g, intra) in report.intra.iter().enumerate() {
            lines.push(format!(
                "{},{},{}",
                part.strategy.label(),
                g + 1,
                fmt_f(*intra)
            ));
        }
    }
    write_lines(path, "strategy,g,intra", lines)
}

/// One labeled optimization-rate row.
pub struct OptRateRow {
    pub algorithm: String,
    pub stage1: String,
    pub family: String,
    pub scope: String,
    pub rate: f64,
}

pub fn write_optrate(path: &Path, rows: &[OptRateRow]) -> Result<(), SimError> {
    let lines = rows.iter().map(|r| {
        format!(
            "{},{},{},{},{}",
            r.algorithm,
            r.stage1,
            r.family,
            r.scope,
            fmt_f(r.rate)
        )
    });
    write_lines(path, "algorithm,stage1,family,scope,rate", lines)
}

/// `k,subset,error,wrmse` ratio-error series of the paired run.
pub fn write_ratio_error(
    path: &Path,
    per_step: &[Vec<f64>],
    wrmse: &[Vec<f64>],
) -> Result<(), SimError> {
    let mut lines = Vec::new();
    for (k, errs) in per_step.iter().enumerate() {
        for (g, e) in errs.iter().enumerate() {
            lines.push(format!(
                "{k},{},{},{}",
                g + 1,
                fmt_f(*e),
                fmt_f(wrmse[g][k])
            ));
        }
    }
    write_lines(path, "k,subset,error,wrmse", lines)
}

/// `k,case,value` for the three comparison curves.
pub fn write_rmse(
    path: &Path,
    curves: &adsched_core::metrics::RmseCurves<f64>,
) -> Result<(), SimError> {
    let mut lines = Vec::new();
    for (case, series) in [
        ("no_attack", &curves.no_attack),
        ("dads", &curves.dads),
        ("no_detection", &curves.no_detection),
    ] {
        for (k, v) in series.iter().enumerate() {
            lines.push(format!("{k},{case},{}", fmt_f(*v)));
        }
    }
    write_lines(path, "k,case,value", lines)
}

/// `m,d,mean,frac,mode` over the sweep grid.
pub fn write_occupancy(path: &Path, rows: &[OccupancyRow]) -> Result<(), SimError> {
    let lines = rows.iter().map(|r| {
        format!(
            "{},{},{},{},{}",
            r.m,
            r.d,
            fmt_f(r.mean),
            fmt_f(r.fraction),
            r.mode
        )
    });
    write_lines(path, "m,d,mean,frac,mode", lines)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), SimError> {
    let mut file = fs::File::create(path)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

/// Minimal CSV reader for `report`: header plus comma-split rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), SimError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| SimError::Runtime(format!("{}: empty csv", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Ok((header, rows))
}

pub fn artifact(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
