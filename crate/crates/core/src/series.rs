//! Multivariate time series and their non-overlapping time windows.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::Node;
use crate::linalg::Matrix;
use crate::scalar::Real;

/// A `p`-component real series of length `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries<T> {
    labels: Vec<String>,
    // component-major: values[v * n + t]
    values: Vec<T>,
    n: usize,
}

impl<T: Real> TimeSeries<T> {
    /// Builds a series from one vector per component.
    pub fn new(labels: Vec<String>, components: Vec<Vec<T>>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidInput(
                "time series needs at least one component".into(),
            ));
        }
        if labels.len() != components.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                found: labels.len(),
            });
        }
        let n = components[0].len();
        if n == 0 {
            return Err(Error::InvalidInput(
                "time series must have at least one sample".into(),
            ));
        }
        let mut values = Vec::with_capacity(n * components.len());
        for (label, comp) in labels.iter().zip(&components) {
            if comp.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: comp.len(),
                });
            }
            if let Some(t) = comp.iter().position(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "non-finite value in component '{label}' at time {}",
                    t + 1
                )));
            }
            values.extend_from_slice(comp);
        }
        Ok(Self { labels, values, n })
    }

    /// Same as [`TimeSeries::new`] with labels `X1..Xp`.
    pub fn from_components(components: Vec<Vec<T>>) -> Result<Self> {
        let labels = (1..=components.len()).map(|i| format!("X{i}")).collect();
        Self::new(labels, components)
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    #[inline]
    pub fn component(&self, v: usize) -> &[T] {
        &self.values[v * self.n..(v + 1) * self.n]
    }

    #[inline]
    pub fn value(&self, v: usize, t: usize) -> T {
        self.values[v * self.n + t]
    }

    /// Samples `start..end` of every component.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n {
            return Err(Error::InvalidInput(format!(
                "slice {start}..{end} out of range for length {}",
                self.n
            )));
        }
        let comps = (0..self.p())
            .map(|v| self.component(v)[start..end].to_vec())
            .collect();
        Self::new(self.labels.clone(), comps)
    }

    /// Keeps only the listed components, in the given order.
    pub fn select_components(&self, idx: &[usize]) -> Result<Self> {
        let labels = idx.iter().map(|&v| self.labels[v].clone()).collect();
        let comps = idx.iter().map(|&v| self.component(v).to_vec()).collect();
        Self::new(labels, comps)
    }

    /// Reads the CSV layout: header of component labels, one row per time step.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let labels: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        let mut comps: Vec<Vec<T>> = vec![Vec::new(); labels.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != labels.len() {
                return Err(Error::Parse {
                    line: row + 2,
                    message: format!("expected {} fields, found {}", labels.len(), rec.len()),
                });
            }
            for (v, field) in rec.iter().enumerate() {
                let x: f64 = field.trim().parse().map_err(|_| Error::Parse {
                    line: row + 2,
                    message: format!("cannot parse '{field}' as a number"),
                })?;
                comps[v].push(T::lit(x));
            }
        }
        Self::new(labels, comps)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(&self.labels)?;
        let mut row = Vec::with_capacity(self.p());
        for t in 0..self.n {
            row.clear();
            row.extend((0..self.p()).map(|v| self.value(v, t).to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// `N` replicates of shape `p x (2 tau + 1)` cut from one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedSamples<T> {
    p: usize,
    tau: usize,
    n_windows: usize,
    dropped: usize,
    // data[(k * p + v) * w + t]
    data: Vec<T>,
}

impl<T: Real> WindowedSamples<T> {
    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn tau(&self) -> usize {
        self.tau
    }

    #[inline]
    pub fn window_len(&self) -> usize {
        2 * self.tau + 1
    }

    /// Number of windows `N`.
    #[inline]
    pub fn len(&self) -> usize {
        self.n_windows
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n_windows == 0
    }

    /// Trailing samples discarded by windowing.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    #[inline]
    pub fn get(&self, k: usize, v: usize, t: usize) -> T {
        self.data[(k * self.p + v) * self.window_len() + t]
    }

    /// All `N` samples of node `(v, t)`.
    pub fn node_samples(&self, node: Node) -> Vec<T> {
        (0..self.n_windows)
            .map(|k| self.get(k, node.var, node.time))
            .collect()
    }

    /// `N x |nodes|` design matrix with one column per node.
    pub fn matrix(&self, nodes: &[Node]) -> Matrix<T> {
        let mut m = Matrix::zeros(self.n_windows, nodes.len());
        for k in 0..self.n_windows {
            for (j, node) in nodes.iter().enumerate() {
                m[(k, j)] = self.get(k, node.var, node.time);
            }
        }
        m
    }

    /// Every node of the window in `(time, var)` order.
    pub fn all_nodes(&self) -> Vec<Node> {
        (0..self.window_len())
            .flat_map(|t| (0..self.p).map(move |v| Node::new(v, t)))
            .collect()
    }

    /// Concatenates the windows back into a series of length `N (2 tau + 1)`.
    pub fn concatenate(&self, labels: Vec<String>) -> Result<TimeSeries<T>> {
        let w = self.window_len();
        let comps = (0..self.p)
            .map(|v| {
                (0..self.n_windows)
                    .flat_map(|k| (0..w).map(move |t| (k, t)))
                    .map(|(k, t)| self.get(k, v, t))
                    .collect()
            })
            .collect();
        TimeSeries::new(labels, comps)
    }
}

/// Cuts `floor(n / (2 tau + 1))` consecutive, non-overlapping windows.
///
/// The trailing `n mod (2 tau + 1)` samples are dropped.
pub fn window<T: Real>(ts: &TimeSeries<T>, tau: usize) -> Result<WindowedSamples<T>> {
    if tau == 0 {
        return Err(Error::InvalidInput(
            "Markov order tau must be positive".into(),
        ));
    }
    let w = 2 * tau + 1;
    let n = ts.len();
    if n < w {
        return Err(Error::LengthTooShort { n, required: w });
    }
    let n_windows = n / w;
    let dropped = n % w;
    if dropped > 0 {
        log::debug!("windowing drops {dropped} trailing samples (n = {n}, window = {w})");
    }
    let p = ts.p();
    let mut data = Vec::with_capacity(n_windows * p * w);
    for k in 0..n_windows {
        for v in 0..p {
            data.extend_from_slice(&ts.component(v)[k * w..(k + 1) * w]);
        }
    }
    Ok(WindowedSamples {
        p,
        tau,
        n_windows,
        dropped,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(p: usize, n: usize) -> TimeSeries<f64> {
        let comps = (0..p)
            .map(|v| (0..n).map(|t| (v * 10_000 + t) as f64).collect())
            .collect();
        TimeSeries::from_components(comps).unwrap()
    }

    #[test]
    fn window_counts() {
        let w = window(&ramp(2, 1000), 1).unwrap();
        assert_eq!((w.len(), w.dropped()), (333, 1));
        let w = window(&ramp(2, 1000), 2).unwrap();
        assert_eq!((w.len(), w.dropped()), (200, 0));
        let w = window(&ramp(2, 5), 2).unwrap();
        assert_eq!(w.len(), 1);
    }

    #[test]
    fn window_covers_consecutive_times() {
        let w = window(&ramp(3, 20), 1).unwrap();
        // window k = 2 (0-based) covers source times 6, 7, 8
        assert_eq!(w.get(2, 1, 0), 10_006.0);
        assert_eq!(w.get(2, 1, 2), 10_008.0);
    }

    #[test]
    fn too_short_series_is_rejected() {
        assert!(matches!(
            window(&ramp(1, 4), 2),
            Err(Error::LengthTooShort { n: 4, required: 5 })
        ));
    }

    #[test]
    fn non_finite_values_are_rejected() {
        assert!(TimeSeries::from_components(vec![vec![1.0, f64::NAN]]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ts = TimeSeries::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.1, -2.5, 3.0], vec![1e-9, 4.0, 5.5]],
        )
        .unwrap();
        let text = ts.to_csv_string().unwrap();
        assert!(text.starts_with("a,b\n"));
        let back = TimeSeries::<f64>::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, ts);
    }

    #[test]
    fn csv_bad_field_reports_line() {
        let err = TimeSeries::<f64>::read_csv("a,b\n1,2\n3,x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
    }

    proptest! {
        #[test]
        fn rewindowing_concatenation_is_identity(
            p in 1usize..4, tau in 1usize..4, windows in 1usize..12, seed in 0u64..1000
        ) {
            let w = 2 * tau + 1;
            let comps: Vec<Vec<f64>> = (0..p)
                .map(|v| (0..windows * w).map(|t| ((seed + (v * 131 + t) as u64) as f64).sin()).collect())
                .collect();
            let ts = TimeSeries::from_components(comps).unwrap();
            let ws = window(&ts, tau).unwrap();
            let back = ws.concatenate(ts.labels().to_vec()).unwrap();
            prop_assert_eq!(&back, &ts);
            prop_assert_eq!(window(&back, tau).unwrap(), ws);
        }
    }
}
