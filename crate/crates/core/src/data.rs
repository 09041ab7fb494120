//! Datasets: synthetic generators, CSV ingestion, scaling to [-1,1] and
//! train/test splitting.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column affine scaling fitted from data: `[min,max]` maps to `[-1,1]`,
/// constant columns map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaler {
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl ColumnScaler {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, |r| r.len());
        let mut mins = vec![f64::INFINITY; dim];
        let mut maxs = vec![f64::NEG_INFINITY; dim];
        for row in rows {
            for (c, &v) in row.iter().enumerate() {
                mins[c] = mins[c].min(v);
                maxs[c] = maxs[c].max(v);
            }
        }
        Self { mins, maxs }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(c, &v)| {
                let span = self.maxs[c] - self.mins[c];
                if span == 0.0 {
                    0.0
                } else {
                    -1.0 + 2.0 * (v - self.mins[c]) / span
                }
            })
            .collect()
    }

    pub fn invert(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(c, &v)| {
                let span = self.maxs[c] - self.mins[c];
                if span == 0.0 {
                    self.mins[c]
                } else {
                    self.mins[c] + (v + 1.0) * span / 2.0
                }
            })
            .collect()
    }
}

/// Feature and label scalers fitted together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub features: ColumnScaler,
    pub labels: ColumnScaler,
}

/// A feature/label matrix, optionally carrying the scaler that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<Vec<f64>>,
    pub scaler: Option<Scaler>,
    pub provenance: String,
}

impl Dataset {
    pub fn from_parts(
        features: Vec<Vec<f64>>,
        labels: Vec<Vec<f64>>,
        provenance: &str,
    ) -> Result<Self> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::EmptyInput(
                "dataset needs non-empty aligned features and labels".into(),
            ));
        }
        let d = features[0].len();
        let m = labels[0].len();
        if d == 0 || m == 0 {
            return Err(Error::EmptyInput("zero-dimensional rows".into()));
        }
        if features.iter().any(|r| r.len() != d) || labels.iter().any(|r| r.len() != m) {
            return Err(Error::Csv("ragged rows".into()));
        }
        Ok(Self {
            features,
            labels,
            scaler: None,
            provenance: provenance.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn label_dim(&self) -> usize {
        self.labels[0].len()
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    /// Fits per-column scalers on this dataset and returns the scaled copy.
    pub fn fit_apply_scaler(&self) -> Dataset {
        let scaler = Scaler {
            features: ColumnScaler::fit(&self.features),
            labels: ColumnScaler::fit(&self.labels),
        };
        self.apply_scaler(&scaler)
    }

    /// Applies an existing scaler (e.g. one fitted on the training split).
    pub fn apply_scaler(&self, scaler: &Scaler) -> Dataset {
        Dataset {
            features: self.features.iter().map(|r| scaler.features.apply(r)).collect(),
            labels: self.labels.iter().map(|r| scaler.labels.apply(r)).collect(),
            scaler: Some(scaler.clone()),
            provenance: self.provenance.clone(),
        }
    }

    /// Writes the dataset as CSV with headers `x1..xd,y1..ym` (or `x`/`y` for
    /// one-dimensional sides).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = Vec::new();
        header.extend(column_names("x", self.feature_dim()));
        header.extend(column_names("y", self.label_dim()));
        w.write_record(&header).map_err(|e| Error::Csv(e.to_string()))?;
        for (f, l) in self.features.iter().zip(&self.labels) {
            let row: Vec<String> = f.iter().chain(l).map(|v| format!("{v}")).collect();
            w.write_record(&row).map_err(|e| Error::Csv(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn column_names(prefix: &str, dim: usize) -> Vec<String> {
    if dim == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=dim).map(|i| format!("{prefix}{i}")).collect()
    }
}

/// Disjoint, covering train/test views with the scaler fitted on train only.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    pub ratio: f64,
    pub seed: u64,
}

/// Seeded shuffle split: the first `ceil(ratio * n)` shuffled points are the
/// training set. Scaling is fitted on train and applied to both sides, so
/// test columns may fall slightly outside [-1,1].
pub fn split(data: &Dataset, ratio: f64, seed: u64) -> Result<SplitPair> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!("split ratio {ratio} not in (0,1)")));
    }
    let n = data.len();
    if n < 2 {
        return Err(Error::EmptyInput("need at least 2 points to split".into()));
    }
    let n_train = ((ratio * n as f64).ceil() as usize).min(n);
    if n_train == n {
        return Err(Error::InvalidConfig(format!(
            "ratio {ratio} leaves no test points for n={n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let take = |idx: &[usize]| Dataset {
        features: idx.iter().map(|&i| data.features[i].clone()).collect(),
        labels: idx.iter().map(|&i| data.labels[i].clone()).collect(),
        scaler: None,
        provenance: data.provenance.clone(),
    };
    let train_raw = take(&order[..n_train]);
    let test_raw = take(&order[n_train..]);
    let train = train_raw.fit_apply_scaler();
    let scaler = train.scaler.clone().unwrap();
    let test = test_raw.apply_scaler(&scaler);
    Ok(SplitPair { train, test, ratio, seed })
}

/// Anomaly-crest target: a gentle ramp, a sharp spike, a broad crest and a
/// sine tail on [0,10].
pub fn anomaly_crest(x: f64) -> f64 {
    if x < 2.5 {
        0.2 * x
    } else if x < 4.0 {
        let t = (x - 3.25) / 0.15;
        0.2 * x + 2.0 * (-t * t).exp()
    } else if x < 7.0 {
        let t = (x - 5.5) / 1.5;
        0.8 * (1.0 - t * t) + 0.5
    } else {
        0.3 * (4.0 * std::f64::consts::PI * x).sin()
    }
}

/// Wave-climb target: two sinusoids with different frequency and amplitude,
/// then a u-shaped climb on [0,10].
pub fn wave_climb(x: f64) -> f64 {
    if x < 3.0 {
        0.5 * (std::f64::consts::PI * x).sin()
    } else if x < 6.0 {
        1.5 * (2.0 * std::f64::consts::PI * x).sin()
    } else {
        0.2 * (x - 6.0) * (x - 6.0)
    }
}

fn generate(
    n: usize,
    noise_sd: f64,
    seed: u64,
    name: &str,
    f: impl Fn(f64) -> f64,
) -> Result<Dataset> {
    if n < 4 {
        return Err(Error::InvalidConfig(format!("need n >= 4, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if noise_sd > 0.0 {
        Some(Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?)
    } else {
        None
    };
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.random_range(0.0..10.0);
        let mut y = f(x);
        if let Some(dist) = &noise {
            y += dist.sample(&mut rng);
        }
        features.push(vec![x]);
        labels.push(vec![y]);
    }
    Dataset::from_parts(features, labels, name)
}

pub fn gen_anomaly_crest(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    generate(n, noise_sd, seed, "anomaly-crest", anomaly_crest)
}

pub fn gen_wave_climb(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset> {
    generate(n, noise_sd, seed, "wave-climb", wave_climb)
}

/// Result of CSV ingestion: the dataset plus how many rows were dropped for
/// missing values.
#[derive(Debug)]
pub struct CsvLoad {
    pub dataset: Dataset,
    pub dropped_rows: usize,
}

/// Loads a headered CSV, selecting named feature and label columns. Rows with
/// empty cells in the selected columns are dropped (and counted); non-numeric
/// cells are an error.
pub fn load_csv(
    path: &Path,
    feature_columns: &[String],
    label_columns: &[String],
) -> Result<CsvLoad> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Csv(e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let col_index = |name: &String| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv(format!("column '{name}' not found in header")))
    };
    let f_idx: Vec<usize> = feature_columns.iter().map(col_index).collect::<Result<_>>()?;
    let l_idx: Vec<usize> = label_columns.iter().map(col_index).collect::<Result<_>>()?;
    if f_idx.is_empty() || l_idx.is_empty() {
        return Err(Error::Csv("need at least one feature and one label column".into()));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut dropped = 0usize;
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let cells: Vec<&str> = f_idx
            .iter()
            .chain(&l_idx)
            .map(|&c| record.get(c).unwrap_or("").trim())
            .collect();
        if cells.iter().any(|c| c.is_empty()) {
            dropped += 1;
            continue;
        }
        let mut parsed = Vec::with_capacity(cells.len());
        for (k, cell) in cells.iter().enumerate() {
            let col = if k < f_idx.len() {
                &feature_columns[k]
            } else {
                &label_columns[k - f_idx.len()]
            };
            let v: f64 = cell.parse().map_err(|_| {
                Error::Csv(format!(
                    "non-numeric cell '{cell}' at row {} column '{col}'",
                    row_no + 2
                ))
            })?;
            parsed.push(v);
        }
        features.push(parsed[..f_idx.len()].to_vec());
        labels.push(parsed[f_idx.len()..].to_vec());
    }
    if features.is_empty() {
        return Err(Error::EmptyInput(format!("no usable rows in {}", path.display())));
    }
    let dataset = Dataset::from_parts(features, labels, &path.display().to_string())?;
    Ok(CsvLoad { dataset, dropped_rows: dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    #[test]
    fn scaler_maps_min_max_to_unit_range() {
        let data = Dataset::from_parts(
            vec![vec![0.0], vec![5.0], vec![10.0]],
            vec![vec![1.0], vec![2.0], vec![3.0]],
            "t",
        )
        .unwrap();
        let scaled = data.fit_apply_scaler();
        let col: Vec<f64> = scaled.features.iter().map(|r| r[0]).collect();
        assert_eq!(col, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let data = Dataset::from_parts(
            vec![vec![7.0], vec![7.0]],
            vec![vec![1.0], vec![2.0]],
            "t",
        )
        .unwrap();
        let scaled = data.fit_apply_scaler();
        assert_eq!(scaled.features, vec![vec![0.0], vec![0.0]]);
    }

    #[test]
    fn scaler_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.random_range(-5.0..9.0)).collect())
            .collect();
        let scaler = ColumnScaler::fit(&rows);
        for row in &rows {
            let back = scaler.invert(&scaler.apply(row));
            for (a, b) in row.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn split_sizes_and_partition_property() {
        let data = gen_anomaly_crest(10, 0.0, 1).unwrap();
        let pair = split(&data, 0.8, 3).unwrap();
        assert_eq!(pair.train.len(), 8);
        assert_eq!(pair.test.len(), 2);
        let again = split(&data, 0.8, 3).unwrap();
        assert_eq!(pair.train.features, again.train.features);
    }

    #[test]
    fn split_rejects_degenerate_inputs() {
        let data = gen_anomaly_crest(4, 0.0, 1).unwrap();
        assert!(split(&data, 1.5, 0).is_err());
        assert!(split(&data, 0.999, 0).is_err());
    }

    #[test]
    fn anomaly_crest_pinned_values() {
        assert_eq!(anomaly_crest(0.0), 0.0);
        // crest apex: 0.8 * 1 + 0.5
        assert!((anomaly_crest(5.5) - 1.3).abs() < 1e-15);
    }

    #[test]
    fn wave_climb_pinned_values() {
        assert_eq!(wave_climb(6.0), 0.0);
        // 1.5 * sin(6.5 pi) = 1.5
        assert!((wave_climb(3.25) - 1.5).abs() < 1e-9);
    }

    #[test]
    fn generators_are_pure() {
        let a = gen_wave_climb(100, 0.01, 5).unwrap();
        let b = gen_wave_climb(100, 0.01, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_load_fixture() {
        let dir = std::env::temp_dir().join(format!("apart_csv_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("fixture.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "a,b,y").unwrap();
        writeln!(f, "1,2,3").unwrap();
        writeln!(f, "4,5,6").unwrap();
        writeln!(f, "7,8,9").unwrap();
        let load = load_csv(
            &path,
            &["a".into(), "b".into()],
            &["y".into()],
        )
        .unwrap();
        assert_eq!(load.dataset.len(), 3);
        assert_eq!(load.dataset.feature_dim(), 2);
        assert_eq!(load.dataset.label_dim(), 1);
        assert_eq!(load.dropped_rows, 0);
    }

    #[test]
    fn csv_load_drops_blank_rows_and_rejects_bad_cells() {
        let dir = std::env::temp_dir().join(format!("apart_csv2_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("blank.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "a,y").unwrap();
        writeln!(f, "1,2").unwrap();
        writeln!(f, ",3").unwrap();
        writeln!(f, "4,5").unwrap();
        let load = load_csv(&path, &["a".into()], &["y".into()]).unwrap();
        assert_eq!(load.dataset.len(), 2);
        assert_eq!(load.dropped_rows, 1);

        let bad = dir.join("bad.csv");
        let mut f = std::fs::File::create(&bad).unwrap();
        writeln!(f, "a,y").unwrap();
        writeln!(f, "1,oops").unwrap();
        let err = load_csv(&bad, &["a".into()], &["y".into()]).unwrap_err();
        assert!(err.to_string().contains("oops"));

        let err = load_csv(&path, &["missing".into()], &["y".into()]).unwrap_err();
        assert!(err.to_string().contains("missing"));
    }

    #[test]
    fn csv_round_trip() {
        let data = gen_anomaly_crest(20, 0.01, 9).unwrap();
        let dir = std::env::temp_dir().join(format!("apart_csv3_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.csv");
        data.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
        let load = load_csv(&path, &["x".into()], &["y".into()]).unwrap();
        assert_eq!(load.dataset.features, data.features);
        assert_eq!(load.dataset.labels, data.labels);
    }
}
