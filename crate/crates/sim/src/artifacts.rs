//! End-to-end experiment execution and artifact-bundle emission.

use std::fs;
use std::path::{Path, PathBuf};

use adsched_core::attack::balance_stats;
use adsched_core::metrics::windowed_rmse;
use adsched_core::partition::{influence_report, InfluenceReport, PartitionResult, Signature};
use adsched_core::rng::substream;
use adsched_core::SensorId;

use crate::config::{ScenarioConfig, ScenarioKind};
use crate::csvout::{self, artifact, OptRateRow};
use crate::plot::{line_plot, Series};
use crate::runner::{
    self, focus_node, node_rates_with, run_geometric, run_network, NetRun, OccupancyRow,
};
use crate::SimError;

pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

fn push(files: &mut Vec<PathBuf>, path: PathBuf) -> PathBuf {
    files.push(path.clone());
    path
}

/// Partition tables over every strategy for one neighbor population.
pub fn partition_tables(
    sigs: &[Signature],
    m: usize,
    seed: u64,
) -> Result<Vec<(PartitionResult, InfluenceReport)>, SimError> {
    use adsched_core::partition as p;
    let ids: Vec<SensorId> = sigs.iter().map(|s| s.id).collect();
    let mut out = Vec::new();
    for part in [
        p::partition_grassmann(sigs)?,
        p::partition_grassmann_improved(sigs)?,
        p::partition_min_mutual(sigs)?,
        p::partition_random(&ids, m, &mut substream(seed, "partition/cli"))?,
        p::partition_balanced(&ids, m)?,
    ] {
        let report = influence_report(&part, sigs)?;
        out.push((part, report));
    }
    Ok(out)
}

fn neighbor_signatures(
    graph: &adsched_core::model::NetworkGraph<f64>,
    node: SensorId,
) -> Vec<Signature> {
    graph
        .node(node)
        .map(|n| {
            n.neighbors_in
                .iter()
                .map(|&j| graph.node(j).expect("neighbor").signature())
                .collect()
        })
        .unwrap_or_default()
}

fn write_partition_bundle(
    out: &Path,
    files: &mut Vec<PathBuf>,
    sigs: &[Signature],
    m: usize,
    seed: u64,
) -> Result<(), SimError> {
    let tables = partition_tables(sigs, m, seed)?;
    csvout::write_partition(&push(files, artifact(out, "partition.csv")), &tables)?;
    csvout::write_influence(&push(files, artifact(out, "influence.csv")), &tables)?;
    csvout::write_correlation(&push(files, artifact(out, "correlation.csv")), &tables)?;
    Ok(())
}

fn optrate_rows(cfg: &ScenarioConfig, run: &NetRun, node: SensorId) -> Result<Vec<OptRateRow>, SimError> {
    let kind = cfg.selection.objective.to_core();
    let rates = node_rates_with(run, node, kind)?;
    let stage1 = match cfg.selection.stage1 {
        crate::config::Stage1Key::Probability => "probability",
        crate::config::Stage1Key::Ranking => "ranking",
    };
    let family = if cfg.attack.enabled {
        cfg.attack.family.to_core().label()
    } else {
        "none"
    };
    let mut rows = Vec::new();
    for (g, r) in rates.dads_subsets.per_subset.iter().enumerate() {
        rows.push(OptRateRow {
            algorithm: "dads".into(),
            stage1: stage1.into(),
            family: family.into(),
            scope: format!("subset{}", g + 1),
            rate: r.rate,
        });
    }
    rows.push(OptRateRow {
        algorithm: "dads".into(),
        stage1: stage1.into(),
        family: family.into(),
        scope: "subset_avg".into(),
        rate: rates.dads_subsets.subset_average.rate,
    });
    rows.push(OptRateRow {
        algorithm: "dads".into(),
        stage1: stage1.into(),
        family: family.into(),
        scope: "total".into(),
        rate: rates.dads_total.rate,
    });
    if let Some(ads) = &rates.ads_subsets {
        rows.push(OptRateRow {
            algorithm: "ads".into(),
            stage1: stage1.into(),
            family: family.into(),
            scope: "subset_avg".into(),
            rate: ads.subset_average.rate,
        });
    }
    if let Some(ads) = rates.ads_total {
        rows.push(OptRateRow {
            algorithm: "ads".into(),
            stage1: stage1.into(),
            family: family.into(),
            scope: "total".into(),
            rate: ads.rate,
        });
    }
    Ok(rows)
}

fn summary_text(cfg: &ScenarioConfig, run: &NetRun, node: Option<SensorId>) -> String {
    let mut text = String::new();
    text.push_str(&format!(
        "scenario={:?} seed={} t={}\n",
        cfg.scenario.kind,
        cfg.scenario.seed,
        cfg.steps()
    ));
    if let Some(node) = node {
        if let Some(sel) = run.selections.get(&node) {
            text.push_str(&format!(
                "focus node {node}: q={} subsets={} driver_updates={}\n",
                sel.q,
                sel.partition.subset_count(),
                sel.driver.update_count
            ));
            if let Some(ads) = &sel.ads {
                let m = sel.partition.subset_count().max(1);
                text.push_str(&format!(
                    "baseline updates={} (driver vs baseline/m ratio {:.4})\n",
                    ads.update_count,
                    sel.driver.update_count as f64 / (ads.update_count as f64 / m as f64)
                ));
            }
        }
        if let Some(attacker) = run.attackers.get(&node) {
            if let Some(sel) = run.selections.get(&node) {
                let stats = balance_stats(&attacker.trace, &sel.partition);
                for (g, s) in stats.iter().enumerate() {
                    text.push_str(&format!(
                        "attack balance subset{}: mean={:.4} intensity_ratio={:.4}{}\n",
                        g + 1,
                        s.mean_attacked,
                        s.intensity_ratio,
                        if s.ratio_defined { "" } else { " (undefined)" }
                    ));
                }
                text.push_str(&format!(
                    "attack churn delta_total={}\n",
                    attacker.trace.delta_total
                ));
            }
        }
    }
    text
}

/// Cost lines comparing the partitioning passes on one neighbor population.
pub fn partition_cost_text(sigs: &[Signature]) -> Result<String, SimError> {
    use adsched_core::partition as p;
    let plain = p::partition_grassmann(sigs)?;
    let improved = p::partition_grassmann_improved(sigs)?;
    let n = sigs.len() as f64;
    let ranks: std::collections::BTreeSet<usize> = sigs.iter().map(|s| s.obs_rank).collect();
    let m_prime = ranks.len().max(1) as f64;
    let formula = (n * n * (m_prime - 1.0) + n) / (2.0 * m_prime);
    let exact = n * n * (m_prime - 1.0) / (2.0 * m_prime);
    Ok(format!(
        "distance_evals plain={} improved={} measured_reduction={}\n\
         rank_groups={} formula_reduction={} exact_reduction={}\n",
        plain.distance_evals,
        improved.distance_evals,
        plain.distance_evals - improved.distance_evals,
        m_prime as usize,
        csvout::fmt_f(formula),
        csvout::fmt_f(exact),
    ))
}

/// Run the configured scenario and write the full artifact bundle.
pub fn run_experiment(cfg: &ScenarioConfig, out: &Path) -> Result<RunArtifacts, SimError> {
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    csvout::write_text(&push(&mut files, artifact(out, "config.toml")), &cfg.to_toml())?;

    match cfg.scenario.kind {
        ScenarioKind::Star100 | ScenarioKind::Custom => {
            let graph = runner::build_graph(cfg)?;
            let opts = runner::options_from_config(cfg)?;
            let run = run_network(&graph, &opts)?;
            let focus = focus_node(&graph);

            csvout::write_trajectories(&push(&mut files, artifact(out, "trajectories.csv")), &run)?;
            if !run.attackers.is_empty() {
                csvout::write_attacks(&push(&mut files, artifact(out, "attacks.csv")), &run.attackers)?;
            }
            let winner_rows: Vec<_> = run
                .selections
                .values()
                .flat_map(|s| s.driver.winner_rows.iter().cloned())
                .collect();
            if !winner_rows.is_empty() {
                csvout::write_selection(&push(&mut files, artifact(out, "selection.csv")), &winner_rows)?;
            }

            let mut summary = summary_text(cfg, &run, focus);
            if let Some(node) = focus {
                let sigs = neighbor_signatures(&graph, node);
                write_partition_bundle(out, &mut files, &sigs, cfg.partition.m, cfg.scenario.seed)?;
                summary.push_str(&partition_cost_text(&sigs)?);

                if let Some(sel) = run.selections.get(&node) {
                    if sel.errors.is_some() {
                        let rows = optrate_rows(cfg, &run, node)?;
                        csvout::write_optrate(&push(&mut files, artifact(out, "optrate.csv")), &rows)?;
                        for row in &rows {
                            summary.push_str(&format!(
                                "optrate {} {} {} {}={}\n",
                                row.algorithm,
                                row.stage1,
                                row.family,
                                row.scope,
                                csvout::fmt_f(row.rate)
                            ));
                        }
                    }
                    if let Some(ratio) = &sel.ratio_errors {
                        let m = sel.partition.subset_count();
                        let wrmse: Vec<Vec<f64>> = (0..m)
                            .map(|g| {
                                let series: Vec<f64> = ratio.iter().map(|row| row[g]).collect();
                                windowed_rmse(&series, 10)
                            })
                            .collect();
                        csvout::write_ratio_error(
                            &push(&mut files, artifact(out, "ratio_error.csv")),
                            ratio,
                            &wrmse,
                        )?;
                        let series: Vec<Series> = (0..m)
                            .map(|g| Series {
                                label: format!("subset {}", g + 1),
                                points: wrmse[g]
                                    .iter()
                                    .enumerate()
                                    .map(|(k, v)| (k as f64, *v))
                                    .collect(),
                            })
                            .collect();
                        csvout::write_text(
                            &push(&mut files, artifact(out, "ratio_error.svg")),
                            &line_plot(
                                "Distribution-ratio error (W-RMSE, window 10)",
                                "step",
                                "W-RMSE",
                                &series,
                            ),
                        )?;
                    }
                }
            }
            csvout::write_text(&push(&mut files, artifact(out, "summary.txt")), &summary)?;
        }
        ScenarioKind::Geometric500 => {
            let geo = run_geometric(cfg)?;
            csvout::write_rmse(&push(&mut files, artifact(out, "rmse.csv")), &geo.curves)?;
            let series = [
                ("no_attack", &geo.curves.no_attack),
                ("dads", &geo.curves.dads),
                ("no_detection", &geo.curves.no_detection),
            ]
            .into_iter()
            .map(|(label, vals)| Series {
                label: label.into(),
                points: vals.iter().enumerate().map(|(k, v)| (k as f64, *v)).collect(),
            })
            .collect::<Vec<_>>();
            csvout::write_text(
                &push(&mut files, artifact(out, "rmse.svg")),
                &line_plot("Estimation RMSE under attack", "step", "RMSE", &series),
            )?;
            csvout::write_trajectories(
                &push(&mut files, artifact(out, "trajectories.csv")),
                &geo.dads,
            )?;
            let mut summary = summary_text(cfg, &geo.dads, None);
            if let Some(node) = focus_node(&geo.graph) {
                let sigs = neighbor_signatures(&geo.graph, node);
                write_partition_bundle(out, &mut files, &sigs, cfg.partition.m, cfg.scenario.seed)?;
                summary.push_str(&format!("focus node {node}\n"));
                summary.push_str(&partition_cost_text(&sigs)?);
            }
            csvout::write_text(&push(&mut files, artifact(out, "summary.txt")), &summary)?;
        }
    }
    Ok(RunArtifacts {
        out_dir: out.to_path_buf(),
        files,
    })
}

/// Partition-only bundle (the `partition` subcommand).
pub fn run_partition(cfg: &ScenarioConfig, out: &Path) -> Result<RunArtifacts, SimError> {
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let graph = runner::build_graph(cfg)?;
    let node = focus_node(&graph)
        .ok_or_else(|| SimError::Runtime("no node receives estimates in this scenario".into()))?;
    let sigs = neighbor_signatures(&graph, node);
    write_partition_bundle(out, &mut files, &sigs, cfg.partition.m, cfg.scenario.seed)?;
    let mut summary = format!("partition tables for the in-neighborhood of node {node}\n");
    summary.push_str(&partition_cost_text(&sigs)?);
    csvout::write_text(&push(&mut files, artifact(out, "summary.txt")), &summary)?;
    Ok(RunArtifacts {
        out_dir: out.to_path_buf(),
        files,
    })
}

/// Occupancy sweep bundle (the `sweep-occupancy` subcommand).
pub fn run_sweep_occupancy(
    out: &Path,
    samples: usize,
    seed: u64,
) -> Result<RunArtifacts, SimError> {
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let rows = runner::sweep_occupancy_rows(samples, seed)?;
    csvout::write_occupancy(&push(&mut files, artifact(out, "occupancy.csv")), &rows)?;
    csvout::write_text(
        &push(&mut files, artifact(out, "occupancy.svg")),
        &occupancy_plot(&rows),
    )?;
    Ok(RunArtifacts {
        out_dir: out.to_path_buf(),
        files,
    })
}

fn occupancy_plot(rows: &[OccupancyRow]) -> String {
    let ms: Vec<usize> = {
        let mut v: Vec<usize> = rows.iter().map(|r| r.m).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let series: Vec<Series> = ms
        .iter()
        .map(|&m| Series {
            label: format!("m = {m}"),
            points: rows
                .iter()
                .filter(|r| r.m == m && r.mode == "analytic")
                .map(|r| (r.d as f64, r.mean))
                .collect(),
        })
        .collect();
    line_plot(
        "Expected attacked subsets",
        "attacked sensors d",
        "subsets hit",
        &series,
    )
}

/// Regenerate plots and a text report from a written artifact directory.
pub fn run_report(dir: &Path) -> Result<RunArtifacts, SimError> {
    let mut files = Vec::new();
    let mut report = String::new();

    let rmse = dir.join("rmse.csv");
    if rmse.exists() {
        let (_, rows) = csvout::read_csv(&rmse)?;
        let mut curves: std::collections::BTreeMap<String, Vec<(f64, f64)>> = Default::default();
        for row in rows {
            if row.len() == 3 {
                let k: f64 = row[0].parse().unwrap_or(f64::NAN);
                let v: f64 = row[2].parse().unwrap_or(f64::NAN);
                curves.entry(row[1].clone()).or_default().push((k, v));
            }
        }
        let series: Vec<Series> = curves
            .into_iter()
            .map(|(label, points)| Series { label, points })
            .collect();
        csvout::write_text(
            &push(&mut files, artifact(dir, "rmse.svg")),
            &line_plot("Estimation RMSE under attack", "step", "RMSE", &series),
        )?;
        report.push_str("rmse.svg regenerated from rmse.csv\n");
    }

    let ratio = dir.join("ratio_error.csv");
    if ratio.exists() {
        let (_, rows) = csvout::read_csv(&ratio)?;
        let mut curves: std::collections::BTreeMap<usize, Vec<(f64, f64)>> = Default::default();
        for row in rows {
            if row.len() == 4 {
                let k: f64 = row[0].parse().unwrap_or(f64::NAN);
                let g: usize = row[1].parse().unwrap_or(0);
                let w: f64 = row[3].parse().unwrap_or(f64::NAN);
                curves.entry(g).or_default().push((k, w));
            }
        }
        let series: Vec<Series> = curves
            .into_iter()
            .map(|(g, points)| Series {
                label: format!("subset {g}"),
                points,
            })
            .collect();
        csvout::write_text(
            &push(&mut files, artifact(dir, "ratio_error.svg")),
            &line_plot(
                "Distribution-ratio error (W-RMSE, window 10)",
                "step",
                "W-RMSE",
                &series,
            ),
        )?;
        report.push_str("ratio_error.svg regenerated from ratio_error.csv\n");
    }

    let occupancy = dir.join("occupancy.csv");
    if occupancy.exists() {
        let (_, rows) = csvout::read_csv(&occupancy)?;
        let parsed: Vec<OccupancyRow> = rows
            .iter()
            .filter(|r| r.len() == 5)
            .map(|r| OccupancyRow {
                m: r[0].parse().unwrap_or(0),
                d: r[1].parse().unwrap_or(0),
                mean: r[2].parse().unwrap_or(f64::NAN),
                fraction: r[3].parse().unwrap_or(f64::NAN),
                mode: if r[4] == "analytic" { "analytic" } else { "montecarlo" },
            })
            .collect();
        csvout::write_text(
            &push(&mut files, artifact(dir, "occupancy.svg")),
            &occupancy_plot(&parsed),
        )?;
        report.push_str("occupancy.svg regenerated from occupancy.csv\n");
    }

    let optrate = dir.join("optrate.csv");
    if optrate.exists() {
        let (_, rows) = csvout::read_csv(&optrate)?;
        report.push_str("optimization rates:\n");
        for row in rows {
            report.push_str(&format!("  {}\n", row.join(" ")));
        }
    }

    if report.is_empty() {
        report.push_str("no recognized artifacts found\n");
    }
    csvout::write_text(&push(&mut files, artifact(dir, "report.txt")), &report)?;
    Ok(RunArtifacts {
        out_dir: dir.to_path_buf(),
        files,
    })
}
