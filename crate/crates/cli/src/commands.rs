use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use cits_core::cits::ConditioningUniverse;
use cits_core::eval::{run_cell_detailed, sort_rows, write_results_csv, GridRow};
use cits_core::ingest::{preprocess as run_pipeline, SpikeData};
use cits_core::{
    cits_sample, edge_weights_rolled, edge_weights_unrolled, gc1, gc2, pc_naive, window,
    CiTestConfig, CiTestKind, CitsConfig, ExperimentGrid, GraphJson, Method, SimModel, TimeSeries,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{
    positive, BenchConfig, InferConfig, PreprocessConfig, Resolved, SimulateConfig,
};
use crate::output::{echo_config, versioned, write_atomic, write_json, SCHEMA_VERSION};

fn resolved<'a, C>(seed: u64, jobs: usize, out: &'a Path, command: &'a C) -> Resolved<'a, C> {
    Resolved {
        schema_version: SCHEMA_VERSION,
        seed,
        jobs,
        out,
        command,
    }
}

fn csv_string(ts: &TimeSeries<f64>) -> Result<String> {
    Ok(ts.to_csv_string()?)
}

pub fn simulate(c: &SimulateConfig, seed: u64, jobs: usize, out: &Path) -> Result<()> {
    positive("eta", c.eta)?;
    ensure!(c.trials >= 1, "trials must be at least 1");
    let stem = c.stem.clone().unwrap_or_else(|| c.model.to_string());
    let models: Vec<SimModel> = (0..c.trials)
        .map(|k| SimModel {
            kind: c.model,
            eta: c.eta,
            n: c.n.unwrap_or(c.model.reference_length()),
            seed: cits_core::eval::trial_seed(seed, c.model, c.eta, k),
        })
        .collect();
    for m in &models {
        m.validate()?;
    }
    echo_config(out, "simulate", &resolved(seed, jobs, out, c))?;
    models
        .par_iter()
        .enumerate()
        .try_for_each(|(k, m)| -> Result<()> {
            let ts = cits_core::simulate::<f64>(m)?;
            let base = out.join(format!("{stem}_trial{k}"));
            write_atomic(&base.with_extension("csv"), csv_string(&ts)?.as_bytes())?;
            write_json(&base.with_extension("json"), &versioned(m)?)
        })?;
    log::info!("wrote {} trials to {}", c.trials, out.display());
    Ok(())
}

#[derive(Serialize)]
struct InferOutput<'a> {
    schema_version: u32,
    input: &'a Path,
    method: Method,
    labels: &'a [String],
    rolled: GraphJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    unrolled: Option<GraphJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ci_calls: Option<usize>,
}

fn cits_config(c: &InferConfig, seed: u64) -> CitsConfig {
    let ci = match c.test {
        CiTestKind::PartialCorrelation => CiTestConfig::gaussian(c.alpha),
        CiTestKind::HilbertSchmidt => CiTestConfig {
            permutations: c.permutations,
            ..CiTestConfig::hilbert_schmidt(c.alpha)
        },
    };
    CitsConfig {
        max_conditioning_size: c.max_conditioning_size.0,
        universe: if c.full_window {
            ConditioningUniverse::FullWindow
        } else {
            ConditioningUniverse::Lagged
        },
        seed,
        ..CitsConfig::new(c.tau, ci)
    }
}

fn infer_one(c: &InferConfig, seed: u64, input: &Path, out: &Path) -> Result<()> {
    let ts = TimeSeries::<f64>::load_csv(input)?;
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .context("input file has no usable name")?;
    let base = out.join(stem);
    let (rolled, unrolled, ci_calls) = match c.method {
        Method::Cits => {
            let cfg = cits_config(c, seed);
            let res = cits_sample(&ts, &cfg)?;
            let log: String = res
                .deleted_edges
                .iter()
                .map(|d| d.to_json_line() + "\n")
                .collect();
            write_atomic(&base.with_extension("deleted.jsonl"), log.as_bytes())?;
            if c.weights {
                let weighted = edge_weights_unrolled(&res.unrolled, &window(&ts, c.tau)?)?;
                let rolled = edge_weights_rolled(&weighted)?;
                (rolled, Some(weighted), Some(res.ci_calls))
            } else {
                (res.rolled, Some(res.unrolled), Some(res.ci_calls))
            }
        }
        Method::Gc1 => (gc1(&ts, c.tau, c.alpha)?, None, None),
        Method::Gc2 => (gc2(&ts, c.tau, c.alpha)?, None, None),
        Method::Pc => (pc_naive(&ts, c.alpha)?, None, None),
    };
    let doc = InferOutput {
        schema_version: SCHEMA_VERSION,
        input,
        method: c.method,
        labels: ts.labels(),
        rolled: rolled.to_json(),
        unrolled: unrolled.map(|u| u.to_json()),
        ci_calls,
    };
    write_json(&base.with_extension("graph.json"), &doc)
}

pub fn infer(c: &InferConfig, seed: u64, jobs: usize, out: &Path) -> Result<()> {
    ensure!(!c.inputs.is_empty(), "no input files given");
    ensure!(
        c.alpha > 0.0 && c.alpha < 1.0,
        "alpha must lie in (0, 1), got {}",
        c.alpha
    );
    if c.weights && c.method != Method::Cits {
        bail!("--weights needs the cits method");
    }
    if let Some(missing) = c.inputs.iter().find(|p| !p.is_file()) {
        bail!("input file {} not found", missing.display());
    }
    echo_config(out, "infer", &resolved(seed, jobs, out, c))?;
    let failures: Vec<String> = c
        .inputs
        .par_iter()
        .filter_map(|input| {
            infer_one(c, seed, input, out)
                .with_context(|| format!("inferring from {}", input.display()))
                .err()
                .map(|e| format!("{e:#}"))
        })
        .collect();
    for f in &failures {
        log::error!("{f}");
    }
    ensure!(
        failures.is_empty(),
        "{} of {} inputs failed",
        failures.len(),
        c.inputs.len()
    );
    Ok(())
}

/// Everything needed to decide whether a stored cell can be reused.
#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct CellKey {
    base_seed: u64,
    trials: usize,
    methods: Vec<Method>,
    alphas: Vec<f64>,
    tau: usize,
    max_conditioning_size: Option<usize>,
    n: Option<usize>,
    permutations: usize,
}

impl CellKey {
    fn new(grid: &ExperimentGrid, base_seed: u64) -> Self {
        Self {
            base_seed,
            trials: grid.trials,
            methods: grid.methods.clone(),
            alphas: grid.alphas.clone(),
            tau: grid.tau,
            max_conditioning_size: grid.max_conditioning_size,
            n: grid.n,
            permutations: grid.permutations,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CellRecord {
    schema_version: u32,
    key: CellKey,
    rows: Vec<GridRow>,
}

#[derive(Serialize)]
struct CellStatus {
    model: String,
    eta: f64,
    status: &'static str,
    failed_trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct TrialGraphLine<'a> {
    trial: usize,
    seed: u64,
    method: Method,
    alpha: f64,
    rolled: &'a GraphJson,
}

fn load_cell(path: &Path, key: &CellKey) -> Option<Vec<GridRow>> {
    let text = std::fs::read_to_string(path).ok()?;
    match serde_json::from_str::<CellRecord>(&text) {
        Ok(rec) if rec.key == *key => Some(rec.rows),
        Ok(_) => {
            log::warn!(
                "{} was produced with other settings; recomputing",
                path.display()
            );
            None
        }
        Err(e) => {
            log::warn!("ignoring unreadable {}: {e}", path.display());
            None
        }
    }
}

pub fn bench(c: &BenchConfig, seed: u64, jobs: usize, out: &Path, resume: bool) -> Result<()> {
    let grid = c.grid();
    grid.validate()?;
    for &eta in &grid.etas {
        positive("eta", eta)?;
    }
    echo_config(out, "bench", &resolved(seed, jobs, out, c))?;
    let key = CellKey::new(&grid, seed);
    let mut rows = Vec::new();
    let mut statuses = Vec::new();
    for &kind in &grid.models {
        for &eta in &grid.etas {
            let name = format!("{kind}_eta{eta}");
            let cell_path = out.join("cells").join(format!("{name}.json"));
            if resume {
                if let Some(done) = load_cell(&cell_path, &key) {
                    log::info!("{name}: reusing stored cell");
                    statuses.push(CellStatus {
                        model: kind.to_string(),
                        eta,
                        status: "resumed",
                        failed_trials: done.iter().map(|r| r.failures.len()).sum(),
                        error: None,
                    });
                    rows.extend(done);
                    continue;
                }
            }
            log::info!("{name}: running {} trials", grid.trials);
            match run_cell_detailed(&grid, kind, eta, seed) {
                Ok(cell) => {
                    if c.dump_graphs {
                        let lines: Vec<(usize, u64, Method, f64, GraphJson)> = cell
                            .graphs
                            .iter()
                            .map(|g| (g.trial, g.seed, g.method, g.alpha, g.rolled.to_json()))
                            .collect();
                        let mut text = String::new();
                        for (trial, seed, method, alpha, rolled) in &lines {
                            let line = TrialGraphLine {
                                trial: *trial,
                                seed: *seed,
                                method: *method,
                                alpha: *alpha,
                                rolled,
                            };
                            text += &serde_json::to_string(&line)?;
                            text.push('\n');
                        }
                        write_atomic(
                            &out.join("graphs").join(format!("{name}.jsonl")),
                            text.as_bytes(),
                        )?;
                    }
                    let rec = CellRecord {
                        schema_version: SCHEMA_VERSION,
                        key: CellKey::new(&grid, seed),
                        rows: cell.rows,
                    };
                    write_json(&cell_path, &rec)?;
                    statuses.push(CellStatus {
                        model: kind.to_string(),
                        eta,
                        status: "computed",
                        failed_trials: rec.rows.iter().map(|r| r.failures.len()).sum(),
                        error: None,
                    });
                    rows.extend(rec.rows);
                }
                Err(e) => {
                    log::error!("{name}: {e}");
                    statuses.push(CellStatus {
                        model: kind.to_string(),
                        eta,
                        status: "error",
                        failed_trials: 0,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
    }
    sort_rows(&mut rows, &grid);
    let mut csv = Vec::new();
    write_results_csv(&rows, &mut csv)?;
    write_atomic(&out.join("results.csv"), &csv)?;
    let mut report = BTreeMap::new();
    report.insert("schema_version", serde_json::to_value(SCHEMA_VERSION)?);
    report.insert("cells", serde_json::to_value(&statuses)?);
    write_json(&out.join("bench_status.json"), &report)?;

    let errored = statuses.iter().filter(|s| s.status == "error").count();
    let failed: usize = statuses.iter().map(|s| s.failed_trials).sum();
    ensure!(
        errored == 0 && failed == 0,
        "{errored} cells errored and {failed} method-trials failed; see bench_status.json"
    );
    log::info!(
        "wrote {} rows to {}",
        rows.len(),
        out.join("results.csv").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ActiveReport<'a> {
    schema_version: u32,
    input: &'a Path,
    neurons: usize,
    active: Vec<&'a str>,
    inactive: Vec<&'a str>,
    trials: usize,
    trial_bins: usize,
    smoothing_sd_bins: f64,
}

pub fn preprocess(c: &PreprocessConfig, seed: u64, jobs: usize, out: &Path) -> Result<()> {
    let input: &PathBuf = c.input.as_ref().context("no spike file given")?;
    c.psth.validate()?;
    let spikes = SpikeData::load(input, c.span_seconds, c.psth.bin_ms)
        .with_context(|| format!("reading spikes from {}", input.display()))?;
    echo_config(out, "preprocess", &resolved(seed, jobs, out, c))?;
    let result = run_pipeline::<f64>(&spikes, &c.psth)?;
    let stem = match &c.stem {
        Some(s) => s.clone(),
        None => input
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("spikes")
            .to_string(),
    };
    if result.active.is_empty() {
        log::warn!("no neuron reaches the activity threshold; no trials written");
    }
    result
        .trials
        .par_iter()
        .enumerate()
        .try_for_each(|(k, t)| {
            write_atomic(
                &out.join(format!("{stem}_trial{k}.csv")),
                csv_string(t)?.as_bytes(),
            )
        })?;
    let ids = spikes.ids();
    let report = ActiveReport {
        schema_version: SCHEMA_VERSION,
        input,
        neurons: ids.len(),
        active: result.active.iter().map(|&i| ids[i].as_str()).collect(),
        inactive: (0..ids.len())
            .filter(|i| !result.active.contains(i))
            .map(|i| ids[i].as_str())
            .collect(),
        trials: result.trials.len(),
        trial_bins: c.psth.trial_bins(),
        smoothing_sd_bins: c.psth.sd_bins(),
    };
    write_json(&out.join(format!("{stem}_active.json")), &report)
}
