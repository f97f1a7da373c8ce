//! Config-file layout and the resolved per-command settings.
//!
//! Every command resolves its settings as defaults, then the matching section
//! of the `--config` file, then command-line flags. The resolved value is
//! what gets echoed into the output directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use cits_core::ingest::PsthConfig;
use cits_core::{CiTestKind, ExperimentGrid, Method, SimKind};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Upper bound on conditioning-set size; `unlimited` searches every subset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SizeLimit(pub Option<usize>);

impl Default for SizeLimit {
    fn default() -> Self {
        SizeLimit(Some(3))
    }
}

impl FromStr for SizeLimit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "unlimited" {
            return Ok(SizeLimit(None));
        }
        s.parse()
            .map(|n| SizeLimit(Some(n)))
            .map_err(|_| format!("expected a non-negative integer or 'unlimited', got '{s}'"))
    }
}

impl fmt::Display for SizeLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(n) => write!(f, "{n}"),
            None => f.write_str("unlimited"),
        }
    }
}

impl Serialize for SizeLimit {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Some(n) => s.serialize_u64(n as u64),
            None => s.serialize_str("unlimited"),
        }
    }
}

impl<'de> Deserialize<'de> for SizeLimit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) => Ok(SizeLimit(Some(n))),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: SimKind,
    pub eta: f64,
    /// Each model's reference length when absent.
    pub n: Option<usize>,
    pub trials: usize,
    pub stem: Option<String>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            model: SimKind::LinearGaussian1,
            eta: 1.0,
            n: None,
            trials: 1,
            stem: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct InferConfig {
    pub inputs: Vec<PathBuf>,
    pub method: Method,
    pub tau: usize,
    pub alpha: f64,
    pub test: CiTestKind,
    pub max_conditioning_size: SizeLimit,
    pub permutations: usize,
    /// Allow concurrent-slice nodes in conditioning sets.
    pub full_window: bool,
    pub weights: bool,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            method: Method::Cits,
            tau: 1,
            alpha: 0.05,
            test: CiTestKind::PartialCorrelation,
            max_conditioning_size: SizeLimit::default(),
            permutations: 200,
            full_window: false,
            weights: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct BenchConfig {
    pub models: Vec<SimKind>,
    pub methods: Vec<Method>,
    pub etas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub trials: usize,
    pub tau: usize,
    pub max_conditioning_size: SizeLimit,
    pub n: Option<usize>,
    pub permutations: usize,
    pub dump_graphs: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let g = ExperimentGrid::default();
        Self {
            models: g.models,
            methods: g.methods,
            etas: g.etas,
            alphas: g.alphas,
            trials: g.trials,
            tau: g.tau,
            max_conditioning_size: SizeLimit(g.max_conditioning_size),
            n: g.n,
            permutations: g.permutations,
            dump_graphs: false,
        }
    }
}

impl BenchConfig {
    pub fn grid(&self) -> ExperimentGrid {
        ExperimentGrid {
            models: self.models.clone(),
            etas: self.etas.clone(),
            alphas: self.alphas.clone(),
            trials: self.trials,
            methods: self.methods.clone(),
            tau: self.tau,
            max_conditioning_size: self.max_conditioning_size.0,
            n: self.n,
            permutations: self.permutations,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct PreprocessConfig {
    pub input: Option<PathBuf>,
    /// Recording length; defaults to the bin edge after the last spike.
    pub span_seconds: Option<f64>,
    pub stem: Option<String>,
    #[serde(flatten)]
    pub psth: PsthConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub simulate: Option<SimulateConfig>,
    pub infer: Option<InferConfig>,
    pub bench: Option<BenchConfig>,
    pub preprocess: Option<PreprocessConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// What a command actually ran with.
#[derive(Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct Resolved<'a, C> {
    pub schema_version: u32,
    pub seed: u64,
    pub jobs: usize,
    pub out: &'a Path,
    pub command: &'a C,
}

pub fn positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        bail!("{name} must be positive, got {x}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let cfg: FileConfig = toml::from_str(
            r#"
            seed = 9
            [simulate]
            model = "ctrnn"
            trials = 3
            [infer]
            method = "gc2"
            max-conditioning-size = "unlimited"
            [bench]
            models = ["linear-gaussian-2"]
            max-conditioning-size = 2
            [preprocess]
            bin-ms = 5.0
            input = "spikes.txt"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(9));
        let sim = cfg.simulate.unwrap();
        assert_eq!((sim.model, sim.trials, sim.eta), (SimKind::Ctrnn, 3, 1.0));
        assert_eq!(cfg.infer.unwrap().max_conditioning_size, SizeLimit(None));
        assert_eq!(cfg.bench.unwrap().grid().max_conditioning_size, Some(2));
        let pre = cfg.preprocess.unwrap();
        assert_eq!(pre.psth.bin_ms, 5.0);
        assert_eq!(pre.psth.smooth_bandwidth_ms, 16.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<FileConfig>("[simulate]\nmodle = \"ctrnn\"\n").is_err());
    }

    #[test]
    fn size_limit_text() {
        assert_eq!("4".parse::<SizeLimit>().unwrap(), SizeLimit(Some(4)));
        assert_eq!(SizeLimit(None).to_string(), "unlimited");
        assert!("-1".parse::<SizeLimit>().is_err());
    }
}
