//! Confusion counts, rates and the multi-trial experiment grid.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{gc1, gc2, pc_naive};
use crate::citest::CiTestConfig;
use crate::cits::{cits_sample, stream_seed, CitsConfig};
use crate::error::{Error, Result};
use crate::graph::RolledGraph;
use crate::scalar::Real;
use crate::simgen::{ground_truth, simulate, SimKind, SimModel};

/// Counts over all `p^2` ordered pairs, self-pairs included.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl std::ops::Add for Confusion {
    type Output = Confusion;

    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl std::iter::Sum for Confusion {
    fn sum<I: Iterator<Item = Confusion>>(iter: I) -> Confusion {
        iter.fold(Confusion::default(), |a, b| a + b)
    }
}

pub fn confusion<T: Real>(estimated: &RolledGraph<T>, truth: &RolledGraph<T>) -> Result<Confusion> {
    if estimated.p() != truth.p() {
        return Err(Error::DimensionMismatch {
            expected: truth.p(),
            found: estimated.p(),
        });
    }
    let mut c = Confusion::default();
    for u in 0..truth.p() {
        for v in 0..truth.p() {
            match (estimated.has_edge(u, v), truth.has_edge(u, v)) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
    }
    Ok(c)
}

/// Rates in percent. `cs` is Youden's index `TPR - FPR`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tpr: f64,
    pub ifpr: f64,
    pub cs: f64,
}

pub fn metrics(c: &Confusion) -> Result<Metrics> {
    if c.tp + c.fn_ == 0 {
        return Err(Error::UndefinedRate("true positive rate has no positives"));
    }
    if c.fp + c.tn == 0 {
        return Err(Error::UndefinedRate("false positive rate has no negatives"));
    }
    let tpr = 100.0 * c.tp as f64 / (c.tp + c.fn_) as f64;
    let ifpr = 100.0 * (1.0 - c.fp as f64 / (c.fp + c.tn) as f64);
    Ok(Metrics {
        tpr,
        ifpr,
        cs: tpr - (100.0 - ifpr),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cits,
    Gc1,
    Gc2,
    Pc,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Cits, Method::Gc1, Method::Gc2, Method::Pc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Cits => "cits",
            Method::Gc1 => "gc1",
            Method::Gc2 => "gc2",
            Method::Pc => "pc",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ExperimentGrid {
    pub models: Vec<SimKind>,
    pub etas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub tau: usize,
    pub max_conditioning_size: Option<usize>,
    /// Series length; each model's reference length when absent.
    pub n: Option<usize>,
    /// Permutations for the Hilbert-Schmidt threshold.
    pub permutations: usize,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        Self {
            models: SimKind::ALL.to_vec(),
            etas: vec![0.1, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5],
            alphas: vec![0.01, 0.05, 0.1],
            trials: 25,
            methods: Method::ALL.to_vec(),
            tau: 1,
            max_conditioning_size: Some(3),
            n: None,
            permutations: 200,
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty()
            || self.etas.is_empty()
            || self.alphas.is_empty()
            || self.methods.is_empty()
        {
            return Err(Error::InvalidInput("grid lists must be non-empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be at least 1".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::InvalidInput(format!("alpha {a} outside (0, 1)")));
        }
        if self.tau == 0 {
            return Err(Error::InvalidInput("tau must be positive".into()));
        }
        Ok(())
    }

    pub fn model(&self, kind: SimKind, eta: f64, seed: u64) -> SimModel {
        SimModel {
            kind,
            eta,
            n: self.n.unwrap_or(kind.reference_length()),
            seed,
        }
    }

    /// CITS settings for a model: Gaussian test for the Gaussian-noise models,
    /// permutation-calibrated Hilbert-Schmidt test otherwise.
    pub fn cits_config(&self, kind: SimKind, alpha: f64, seed: u64) -> CitsConfig {
        let ci = if kind.is_gaussian() {
            CiTestConfig::gaussian(alpha)
        } else {
            CiTestConfig {
                permutations: self.permutations,
                ..CiTestConfig::hilbert_schmidt(alpha)
            }
        };
        CitsConfig {
            max_conditioning_size: self.max_conditioning_size,
            seed,
            ..CitsConfig::new(self.tau, ci)
        }
    }
}

/// Seed of one simulated trial; stable under changes to the other grid lists.
pub fn trial_seed(base_seed: u64, kind: SimKind, eta: f64, trial: usize) -> u64 {
    let s = stream_seed(base_seed, kind as u64);
    let s = stream_seed(s, eta.to_bits());
    stream_seed(s, trial as u64)
}

/// Runs one method on one series.
pub fn run_method<T: Real>(
    method: Method,
    grid: &ExperimentGrid,
    kind: SimKind,
    alpha: f64,
    seed: u64,
    ts: &crate::series::TimeSeries<T>,
) -> Result<RolledGraph<T>> {
    match method {
        Method::Cits => Ok(cits_sample(ts, &grid.cits_config(kind, alpha, seed))?.rolled),
        Method::Gc1 => gc1(ts, grid.tau, alpha),
        Method::Gc2 => gc2(ts, grid.tau, alpha),
        Method::Pc => pc_naive(ts, alpha),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub error: String,
}

/// One `(model, method, eta, alpha)` row, aggregated over trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub model: SimKind,
    pub method: Method,
    pub eta: f64,
    pub alpha: f64,
    /// Trials that completed and were aggregated.
    pub trials: usize,
    pub confusion: Confusion,
    pub metrics: Option<Metrics>,
    pub failures: Vec<TrialFailure>,
}

impl GridRow {
    fn from_outcomes(
        model: SimKind,
        method: Method,
        eta: f64,
        alpha: f64,
        outcomes: impl Iterator<Item = (usize, std::result::Result<Confusion, String>)>,
    ) -> Self {
        let mut confusion = Confusion::default();
        let mut trials = 0;
        let mut failures = Vec::new();
        for (trial, o) in outcomes {
            match o {
                Ok(c) => {
                    confusion = confusion + c;
                    trials += 1;
                }
                Err(error) => failures.push(TrialFailure { trial, error }),
            }
        }
        Self {
            model,
            method,
            eta,
            alpha,
            trials,
            confusion,
            metrics: metrics(&confusion).ok(),
            failures,
        }
    }
}

/// One method's estimate on one trial of a cell.
#[derive(Clone, Debug)]
pub struct TrialGraph {
    pub trial: usize,
    pub seed: u64,
    pub method: Method,
    pub alpha: f64,
    pub rolled: RolledGraph<f64>,
}

/// Rows of a cell plus every successful estimate behind them.
#[derive(Clone, Debug)]
pub struct CellOutput {
    pub rows: Vec<GridRow>,
    pub graphs: Vec<TrialGraph>,
}

/// All rows for one `(model, eta)` cell. Each trial's series is simulated
/// once and shared by every method and level.
pub fn run_cell(
    grid: &ExperimentGrid,
    kind: SimKind,
    eta: f64,
    base_seed: u64,
) -> Result<Vec<GridRow>> {
    Ok(run_cell_detailed(grid, kind, eta, base_seed)?.rows)
}

pub fn run_cell_detailed(
    grid: &ExperimentGrid,
    kind: SimKind,
    eta: f64,
    base_seed: u64,
) -> Result<CellOutput> {
    grid.validate()?;
    let truth = ground_truth::<f64>(kind);
    let combos: Vec<(Method, f64)> = grid
        .methods
        .iter()
        .flat_map(|&m| grid.alphas.iter().map(move |&a| (m, a)))
        .collect();
    // per_trial[trial][combo]
    let per_trial: Vec<Vec<std::result::Result<RolledGraph<f64>, String>>> = (0..grid.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(base_seed, kind, eta, trial);
            let ts = match simulate::<f64>(&grid.model(kind, eta, seed)) {
                Ok(ts) => ts,
                Err(e) => return vec![Err(e.to_string()); combos.len()],
            };
            combos
                .iter()
                .map(|&(m, a)| {
                    run_method(m, grid, kind, a, seed, &ts).map_err(|e| {
                        log::warn!("{kind} eta={eta} trial {trial} {m} alpha={a}: {e}");
                        e.to_string()
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::with_capacity(combos.len());
    let mut graphs = Vec::new();
    for (ci, &(m, a)) in combos.iter().enumerate() {
        let outcomes: Vec<_> = per_trial
            .iter()
            .enumerate()
            .map(|(t, r)| {
                (
                    t,
                    r[ci]
                        .clone()
                        .and_then(|g| confusion(&g, &truth).map_err(|e| e.to_string())),
                )
            })
            .collect();
        rows.push(GridRow::from_outcomes(
            kind,
            m,
            eta,
            a,
            outcomes.into_iter(),
        ));
        for (trial, r) in per_trial.iter().enumerate() {
            if let Ok(g) = &r[ci] {
                graphs.push(TrialGraph {
                    trial,
                    seed: trial_seed(base_seed, kind, eta, trial),
                    method: m,
                    alpha: a,
                    rolled: g.clone(),
                });
            }
        }
    }
    Ok(CellOutput { rows, graphs })
}

/// Every cell of the grid, rows in `(model, method, eta, alpha)` order.
pub fn run_grid(grid: &ExperimentGrid, base_seed: u64) -> Result<Vec<GridRow>> {
    let mut rows = Vec::new();
    for &kind in &grid.models {
        for &eta in &grid.etas {
            rows.extend(run_cell(grid, kind, eta, base_seed)?);
        }
    }
    sort_rows(&mut rows, grid);
    Ok(rows)
}

/// Orders rows by model, method, then the grid's eta and alpha order.
pub fn sort_rows(rows: &mut [GridRow], grid: &ExperimentGrid) {
    let pos = |list: &[f64], x: f64| list.iter().position(|&y| y == x).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| {
        (
            r.model,
            r.method,
            pos(&grid.etas, r.eta),
            pos(&grid.alphas, r.alpha),
        )
    });
}

pub const RESULT_COLUMNS: [&str; 13] = [
    "model", "method", "eta", "alpha", "trials", "tp", "fp", "tn", "fn", "tpr", "ifpr", "cs",
    "failed",
];

pub fn write_results_csv<W: Write>(rows: &[GridRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RESULT_COLUMNS)?;
    for r in rows {
        let rate = |f: fn(&Metrics) -> f64| {
            r.metrics
                .as_ref()
                .map(|m| format!("{:.4}", f(m)))
                .unwrap_or_default()
        };
        w.write_record([
            r.model.to_string(),
            r.method.to_string(),
            r.eta.to_string(),
            r.alpha.to_string(),
            r.trials.to_string(),
            r.confusion.tp.to_string(),
            r.confusion.fp.to_string(),
            r.confusion.tn.to_string(),
            r.confusion.fn_.to_string(),
            rate(|m| m.tpr),
            rate(|m| m.ifpr),
            rate(|m| m.cs),
            r.failures.len().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
