//! The five benchmark generators with known rolled graphs.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Open01};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::RolledGraph;
use crate::scalar::Real;
use crate::series::TimeSeries;

/// Steps simulated and discarded before the emitted series begins.
pub const BURN_IN: usize = 100;

/// Sampling gap of the CTRNN discretization.
pub const CTRNN_GAP: f64 = std::f64::consts::E;

/// Time constant shared by all CTRNN units.
pub const CTRNN_TIME_CONSTANT: f64 = 10.0;

const CTRNN_WEIGHT: f64 = 10.0;
const CTRNN_DURATION: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimKind {
    #[serde(rename = "linear-gaussian-1")]
    LinearGaussian1,
    #[serde(rename = "linear-gaussian-2")]
    LinearGaussian2,
    #[serde(rename = "nonlinear-nongaussian-1")]
    NonlinearNongaussian1,
    #[serde(rename = "nonlinear-nongaussian-2")]
    NonlinearNongaussian2,
    Ctrnn,
}

impl SimKind {
    pub const ALL: [SimKind; 5] = [
        SimKind::LinearGaussian1,
        SimKind::LinearGaussian2,
        SimKind::NonlinearNongaussian1,
        SimKind::NonlinearNongaussian2,
        SimKind::Ctrnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SimKind::LinearGaussian1 => "linear-gaussian-1",
            SimKind::LinearGaussian2 => "linear-gaussian-2",
            SimKind::NonlinearNongaussian1 => "nonlinear-nongaussian-1",
            SimKind::NonlinearNongaussian2 => "nonlinear-nongaussian-2",
            SimKind::Ctrnn => "ctrnn",
        }
    }

    /// Whether the partial-correlation test is the natural choice for this model.
    pub fn is_gaussian(self) -> bool {
        matches!(
            self,
            SimKind::LinearGaussian1 | SimKind::LinearGaussian2 | SimKind::Ctrnn
        )
    }

    /// Series length of the reference experiments: 1000 steps, or a duration
    /// of 1000 time units sampled every `e` units for the CTRNN.
    pub fn reference_length(self) -> usize {
        match self {
            SimKind::Ctrnn => (CTRNN_DURATION / CTRNN_GAP).floor() as usize,
            _ => 1000,
        }
    }
}

impl fmt::Display for SimKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SimKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown model '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimModel {
    pub kind: SimKind,
    pub eta: f64,
    pub n: usize,
    pub seed: u64,
}

impl SimModel {
    /// A model at its reference length.
    pub fn new(kind: SimKind, eta: f64, seed: u64) -> Self {
        Self {
            kind,
            eta,
            n: kind.reference_length(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if self.n < 10 {
            return Err(Error::InvalidInput(format!(
                "n must be at least 10, got {}",
                self.n
            )));
        }
        Ok(())
    }

    pub fn metadata_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Noise {
    gaussian: Option<Normal<f64>>,
    eta: f64,
}

impl Noise {
    fn for_model(model: &SimModel) -> Self {
        let gaussian = match model.kind {
            SimKind::LinearGaussian1 | SimKind::LinearGaussian2 => {
                Some(Normal::new(0.0, model.eta).unwrap())
            }
            SimKind::Ctrnn => Some(Normal::new(1.0, model.eta).unwrap()),
            _ => None,
        };
        Self {
            gaussian,
            eta: model.eta,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match &self.gaussian {
            Some(d) => d.sample(rng),
            None => {
                let u: f64 = Open01.sample(rng);
                u * self.eta
            }
        }
    }
}

fn step(kind: SimKind, prev: &[f64; 4], e: [f64; 4]) -> [f64; 4] {
    let [x1, x2, x3, _] = *prev;
    match kind {
        SimKind::LinearGaussian1 => [
            1.0 + e[0],
            -1.0 + e[1],
            2.0 * x1 - x2 + e[2],
            2.0 * x3 + e[3],
        ],
        SimKind::LinearGaussian2 => [
            1.0 + e[0],
            -1.0 + 2.0 * x1 + e[1],
            2.0 * x1 + e[2],
            x2 + x3 + e[3],
        ],
        SimKind::NonlinearNongaussian1 => [
            e[0],
            e[1],
            4.0 * x1.sin() - 3.0 * x2.sin() + e[2],
            3.0 * x3 + e[3],
        ],
        SimKind::NonlinearNongaussian2 => [
            e[0],
            4.0 * x1 + e[1],
            3.0 * x1.sin() + e[2],
            8.0 * x2.abs().ln() + 9.0 * x3.abs().ln() + e[3],
        ],
        SimKind::Ctrnn => {
            let s = prev.map(logistic);
            let input = [0.0, 0.0, CTRNN_WEIGHT * (s[0] + s[1]), CTRNN_WEIGHT * s[2]];
            let rate = CTRNN_GAP / CTRNN_TIME_CONSTANT;
            std::array::from_fn(|j| prev[j] + rate * (-prev[j] + input[j] + e[j]))
        }
    }
}

/// Simulates `model.n` steps after a burn-in, starting from a pure-noise state.
pub fn simulate<T: Real>(model: &SimModel) -> Result<TimeSeries<T>> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let noise = Noise::for_model(model);
    let draw = |rng: &mut ChaCha8Rng| -> [f64; 4] { std::array::from_fn(|_| noise.draw(rng)) };
    let mut state = draw(&mut rng);
    let mut out: Vec<Vec<T>> = (0..4).map(|_| Vec::with_capacity(model.n)).collect();
    for t in 0..BURN_IN + model.n {
        state = step(model.kind, &state, draw(&mut rng));
        if t >= BURN_IN {
            for (col, &x) in out.iter_mut().zip(&state) {
                col.push(T::lit(x));
            }
        }
    }
    TimeSeries::from_components(out)
}

/// The rolled graph generating each model.
pub fn ground_truth<T: Real>(kind: SimKind) -> RolledGraph<T> {
    let edges: &[(usize, usize)] = match kind {
        SimKind::LinearGaussian1 | SimKind::NonlinearNongaussian1 => &[(0, 2), (1, 2), (2, 3)],
        SimKind::LinearGaussian2 | SimKind::NonlinearNongaussian2 => {
            &[(0, 1), (0, 2), (1, 3), (2, 3)]
        }
        SimKind::Ctrnn => &[(0, 2), (1, 2), (2, 3), (0, 0), (1, 1), (2, 2), (3, 3)],
    };
    RolledGraph::from_edges(4, edges.iter().copied()).expect("static edges are valid")
}
