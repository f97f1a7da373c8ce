//! Spike trains to smoothed peri-stimulus time histograms, cut into trials.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::series::TimeSeries;

/// Spike times in seconds for each neuron, over `[0, span)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeData {
    ids: Vec<String>,
    times: Vec<Vec<f64>>,
    span: f64,
}

impl SpikeData {
    /// Sorts each train; rejects negative, non-finite or out-of-span times.
    pub fn new(ids: Vec<String>, mut times: Vec<Vec<f64>>, span: f64) -> Result<Self> {
        if ids.len() != times.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                found: times.len(),
            });
        }
        if ids.is_empty() || !(span > 0.0 && span.is_finite()) {
            return Err(Error::EmptyRecording);
        }
        let mut seen = HashSet::new();
        for (id, train) in ids.iter().zip(times.iter_mut()) {
            if !seen.insert(id) {
                return Err(Error::InvalidInput(format!("duplicate neuron id '{id}'")));
            }
            if let Some(&t) = train
                .iter()
                .find(|&&t| !(t.is_finite() && t >= 0.0 && t < span))
            {
                return Err(Error::InvalidInput(format!(
                    "neuron '{id}': spike time {t} outside [0, {span})"
                )));
            }
            train.sort_by(f64::total_cmp);
        }
        Ok(Self { ids, times, span })
    }

    /// Reads one neuron per line: an id followed by whitespace-separated spike
    /// times in seconds. Blank lines and `#` comments are skipped. Without an
    /// explicit span the recording ends at the bin boundary after the last spike.
    pub fn parse<R: Read>(reader: R, span: Option<f64>, bin_ms: f64) -> Result<Self> {
        let mut ids = Vec::new();
        let mut times = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let id = fields.next().expect("non-empty line").to_string();
            if !seen.insert(id.clone()) {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("duplicate neuron id '{id}'"),
                });
            }
            let train = fields
                .map(|f| match f.parse::<f64>() {
                    Ok(t) if t.is_finite() && t >= 0.0 => Ok(t),
                    Ok(t) => Err(format!("spike time {t} is negative or not finite")),
                    Err(_) => Err(format!("'{f}' is not a number")),
                })
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|message| Error::Parse {
                    line: lineno,
                    message,
                })?;
            ids.push(id);
            times.push(train);
        }
        if ids.is_empty() {
            return Err(Error::EmptyRecording);
        }
        let bin = bin_ms / 1000.0;
        let span = match span {
            Some(s) => s,
            None => {
                let last = times.iter().flatten().copied().fold(0.0, f64::max);
                (bin_index(last, bin) + 1) as f64 * bin
            }
        };
        Self::new(ids, times, span)
    }

    pub fn load(path: impl AsRef<Path>, span: Option<f64>, bin_ms: f64) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(file, span, bin_ms)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn train(&self, i: usize) -> &[f64] {
        &self.times[i]
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn spike_count(&self) -> usize {
        self.times.iter().map(Vec::len).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct PsthConfig {
    pub bin_ms: f64,
    pub smooth_bandwidth_ms: f64,
    /// Read the bandwidth as a full width at half maximum instead of a standard deviation.
    pub bandwidth_is_fwhm: bool,
    pub active_fraction: f64,
    pub trial_seconds: f64,
}

impl Default for PsthConfig {
    fn default() -> Self {
        Self {
            bin_ms: 10.0,
            smooth_bandwidth_ms: 16.0,
            bandwidth_is_fwhm: false,
            active_fraction: 0.25,
            trial_seconds: 7.5,
        }
    }
}

impl PsthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.bin_ms)
            || !positive(self.smooth_bandwidth_ms)
            || !positive(self.trial_seconds)
        {
            return Err(Error::InvalidInput(
                "bin, bandwidth and trial length must be positive".into(),
            ));
        }
        if !(self.active_fraction > 0.0 && self.active_fraction < 1.0) {
            return Err(Error::InvalidInput(format!(
                "active fraction {} outside (0, 1)",
                self.active_fraction
            )));
        }
        Ok(())
    }

    /// Kernel standard deviation in bins.
    pub fn sd_bins(&self) -> f64 {
        let sd_ms = if self.bandwidth_is_fwhm {
            self.smooth_bandwidth_ms / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
        } else {
            self.smooth_bandwidth_ms
        };
        sd_ms / self.bin_ms
    }

    pub fn trial_bins(&self) -> usize {
        trial_bins(self.trial_seconds, self.bin_ms)
    }
}

// The small offset keeps times on a bin edge from rounding into the previous bin.
fn bin_index(t: f64, bin: f64) -> usize {
    (t / bin + 1e-9).floor() as usize
}

fn trial_bins(trial_seconds: f64, bin_ms: f64) -> usize {
    (trial_seconds * 1000.0 / bin_ms + 1e-9).floor() as usize
}

/// Spike counts per bin for every neuron; `floor(span / bin)` bins.
pub fn bin_psth<T: Real>(spikes: &SpikeData, bin_ms: f64) -> Result<TimeSeries<T>> {
    let bin = bin_ms / 1000.0;
    let n = (spikes.span / bin + 1e-9).floor() as usize;
    if n == 0 {
        return Err(Error::EmptyRecording);
    }
    let comps: Vec<Vec<T>> = spikes
        .times
        .par_iter()
        .zip(&spikes.ids)
        .map(|(train, id)| {
            let mut counts = vec![0usize; n];
            let mut lost = 0;
            for &t in train {
                match counts.get_mut(bin_index(t, bin)) {
                    Some(c) => *c += 1,
                    None => lost += 1,
                }
            }
            if lost > 0 {
                log::debug!("neuron {id}: {lost} spikes in the trailing partial bin dropped");
            }
            counts
                .into_iter()
                .map(|c| T::from_usize(c).unwrap())
                .collect()
        })
        .collect();
    TimeSeries::new(spikes.ids.clone(), comps)
}

/// Normalized Gaussian weights on `-h..=h` with `h = ceil(4 sd)`.
pub fn gaussian_kernel(sd_bins: f64) -> Vec<f64> {
    let h = (4.0 * sd_bins).ceil() as i64;
    let raw: Vec<f64> = (-h..=h)
        .map(|k| (-0.5 * (k as f64 / sd_bins).powi(2)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

// Half-sample symmetric reflection: ... b a | a b ... y z | z y ...
fn reflect(i: i64, n: i64) -> usize {
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Gaussian smoothing of each component with standard deviation `sd_bins`.
pub fn smooth<T: Real>(ts: &TimeSeries<T>, sd_bins: f64) -> Result<TimeSeries<T>> {
    if !(sd_bins > 0.0 && sd_bins.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "smoothing width {sd_bins} must be positive"
        )));
    }
    let kernel: Vec<T> = gaussian_kernel(sd_bins).into_iter().map(T::lit).collect();
    let h = (kernel.len() / 2) as i64;
    let n = ts.len() as i64;
    let comps: Vec<Vec<T>> = (0..ts.p())
        .into_par_iter()
        .map(|v| {
            let x = ts.component(v);
            (0..n)
                .map(|t| {
                    kernel
                        .iter()
                        .enumerate()
                        .map(|(k, &w)| w * x[reflect(t + k as i64 - h, n)])
                        .sum()
                })
                .collect()
        })
        .collect();
    TimeSeries::new(ts.labels().to_vec(), comps)
}

/// Components whose fraction of nonzero bins is at least `fraction`.
pub fn select_active<T: Real>(psth: &TimeSeries<T>, fraction: f64) -> Vec<usize> {
    let n = psth.len() as f64;
    (0..psth.p())
        .filter(|&v| {
            let nonzero = psth
                .component(v)
                .iter()
                .filter(|&&x| x != T::zero())
                .count();
            nonzero as f64 >= fraction * n - 1e-9
        })
        .collect()
}

/// Consecutive non-overlapping trials of `floor(trial_seconds * 1000 / bin_ms)` bins.
pub fn segment_trials<T: Real>(
    ts: &TimeSeries<T>,
    trial_seconds: f64,
    bin_ms: f64,
) -> Result<Vec<TimeSeries<T>>> {
    let len = trial_bins(trial_seconds, bin_ms);
    if len == 0 || ts.len() < len {
        return Err(Error::TooShort {
            len: ts.len(),
            trial_bins: len,
        });
    }
    let count = ts.len() / len;
    let rest = ts.len() - count * len;
    if rest > 0 {
        log::info!("dropping {rest} bins after the last complete trial");
    }
    (0..count)
        .map(|k| ts.slice(k * len, (k + 1) * len))
        .collect()
}

/// Output of [`preprocess`].
#[derive(Clone, Debug)]
pub struct Preprocessed<T> {
    /// Indices into the spike data of the neurons kept.
    pub active: Vec<usize>,
    pub trials: Vec<TimeSeries<T>>,
}

/// Bin, select active neurons on the raw counts, cut into trials, then smooth
/// each trial separately so no kernel mass crosses a trial boundary.
pub fn preprocess<T: Real>(spikes: &SpikeData, config: &PsthConfig) -> Result<Preprocessed<T>> {
    config.validate()?;
    let counts = bin_psth::<T>(spikes, config.bin_ms)?;
    let active = select_active(&counts, config.active_fraction);
    if active.is_empty() {
        return Ok(Preprocessed {
            active,
            trials: Vec::new(),
        });
    }
    let kept = counts.select_components(&active)?;
    let trials = segment_trials(&kept, config.trial_seconds, config.bin_ms)?
        .iter()
        .map(|t| smooth(t, config.sd_bins()))
        .collect::<Result<_>>()?;
    Ok(Preprocessed { active, trials })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(times: Vec<f64>, span: f64) -> SpikeData {
        SpikeData::new(vec!["n1".into()], vec![times], span).unwrap()
    }

    #[test]
    fn single_spike_lands_in_first_bin() {
        let b: TimeSeries<f64> = bin_psth(&one(vec![0.005], 0.05), 10.0).unwrap();
        assert_eq!(b.component(0), &[1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn regular_train_one_per_bin() {
        let times = (0..100).map(|k| k as f64 * 0.01).collect();
        let b: TimeSeries<f64> = bin_psth(&one(times, 1.0), 10.0).unwrap();
        assert_eq!(b.len(), 100);
        assert!(b.component(0).iter().all(|&c| c == 1.0));
    }

    #[test]
    fn kernel_sums_to_one() {
        for sd in [0.3, 1.6, 2.5, 7.0] {
            let s: f64 = gaussian_kernel(sd).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(gaussian_kernel(1.6).len(), 2 * 7 + 1);
    }

    #[test]
    fn constant_unchanged_and_impulse_conserved() {
        let ts = TimeSeries::from_components(vec![vec![3.0f64; 40]]).unwrap();
        let s = smooth(&ts, 1.6).unwrap();
        assert!(s.component(0).iter().all(|&x| (x - 3.0).abs() < 1e-10));
        let mut imp = vec![0.0; 41];
        imp[20] = 1.0;
        let s = smooth(&TimeSeries::from_components(vec![imp]).unwrap(), 1.6).unwrap();
        assert!((s.component(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((s.component(0)[19] - s.component(0)[21]).abs() < 1e-15);
    }

    #[test]
    fn reflection_indices() {
        let idx: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(idx, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
    }

    #[test]
    fn active_boundary_inclusive() {
        let mut quarter = vec![0.0; 100];
        quarter[..25].iter_mut().for_each(|x| *x = 1.0);
        let ts =
            TimeSeries::from_components(vec![vec![0.0; 100], vec![2.0; 100], quarter]).unwrap();
        assert_eq!(select_active(&ts, 0.25), vec![1, 2]);
    }

    #[test]
    fn trial_segmentation() {
        assert_eq!(PsthConfig::default().trial_bins(), 750);
        let ts = TimeSeries::from_components(vec![vec![1.0; 1875]]).unwrap();
        let trials = segment_trials(&ts, 7.5, 10.0).unwrap();
        assert_eq!(trials.len(), 2);
        assert!(trials.iter().all(|t| t.len() == 750));
        let short = TimeSeries::from_components(vec![vec![1.0; 700]]).unwrap();
        assert!(matches!(
            segment_trials(&short, 7.5, 10.0),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = "# header\nn1 0.1 0.2\n\nn2 0.3 abc\n";
        match SpikeData::parse(text.as_bytes(), None, 10.0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let d = SpikeData::parse("a 0.5 0.1\nb\n".as_bytes(), None, 10.0).unwrap();
        assert_eq!(d.train(0), &[0.1, 0.5]);
        assert!((d.span() - 0.51).abs() < 1e-12);
        assert_eq!(d.spike_count(), 2);
        assert!(SpikeData::parse("".as_bytes(), None, 10.0).is_err());
        assert!(SpikeData::parse("a 1\na 2\n".as_bytes(), None, 10.0).is_err());
    }

    #[test]
    fn fwhm_width() {
        let cfg = PsthConfig {
            bandwidth_is_fwhm: true,
            ..PsthConfig::default()
        };
        assert!((cfg.sd_bins() - 1.6 / 2.354_820_045).abs() < 1e-6);
        assert_eq!(PsthConfig::default().sd_bins(), 1.6);
    }
}
