//! Synthetic classification data and its CSV form.
//!
//! CSV layout: no header, one sample per row, features first, the integer
//! class label in the last column.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::oracles::seeded_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    num_features: usize,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(features: Vec<f64>, num_features: usize, labels: Vec<usize>) -> Result<Self> {
        if num_features == 0 || features.len() != num_features * labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} feature values do not fill {} rows of {} features",
                features.len(),
                labels.len(),
                num_features
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            num_features,
            labels,
        })
    }

    /// `n` points split round-robin across `classes` isotropic unit-variance
    /// blobs. Class `k` is centered at `±separation · e_{k mod features}`.
    pub fn gaussian_blobs(
        n: usize,
        num_features: usize,
        classes: usize,
        separation: f64,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 || num_features == 0 || classes < 2 {
            return Err(Error::InvalidInput(
                "blobs need n >= 1, features >= 1 and classes >= 2".into(),
            ));
        }
        let mut rng = seeded_rng(seed, 3);
        let mut features = Vec::with_capacity(n * num_features);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let k = i % classes;
            let axis = k % num_features;
            let sign = if (k / num_features).is_multiple_of(2) { 1.0 } else { -1.0 };
            for j in 0..num_features {
                let z: f64 = StandardNormal.sample(&mut rng);
                let center = if j == axis { sign * separation } else { 0.0 };
                features.push(center + z);
            }
            labels.push(k);
        }
        Self::new(features, num_features, labels)
    }

    /// Replaces each label, with probability `rate`, by a uniformly chosen
    /// different class. Returns the number of flipped labels.
    pub fn flip_labels(&mut self, rate: f64, classes: usize, seed: u64) -> Result<usize> {
        if !(0.0..=1.0).contains(&rate) || classes < 2 {
            return Err(Error::InvalidInput(format!(
                "flip rate must be in [0, 1] with >= 2 classes (got {rate}, {classes})"
            )));
        }
        let mut rng = seeded_rng(seed, 4);
        let mut flipped = 0;
        for label in &mut self.labels {
            if rng.random::<f64>() < rate {
                let shift = rng.random_range(1..classes);
                *label = (*label + shift) % classes;
                flipped += 1;
            }
        }
        Ok(flipped)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(csv_err)?;
        for i in 0..self.len() {
            let mut record: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            record.push(self.label(i).to_string());
            w.write_record(&record).map_err(csv_err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_path(path)
            .map_err(csv_err)?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut width = None;
        for (row, record) in r.records().enumerate() {
            let record = record.map_err(csv_err)?;
            let bad = |what: &str| {
                Error::InvalidInput(format!("{}: row {row}: {what}", path.display()))
            };
            if record.len() < 2 {
                return Err(bad("need at least one feature and a label"));
            }
            if *width.get_or_insert(record.len()) != record.len() {
                return Err(bad("ragged row"));
            }
            let (label, feats) = record
                .iter()
                .collect::<Vec<_>>()
                .split_last()
                .map(|(l, f)| (l.to_string(), f.to_vec()))
                .expect("len >= 2");
            for f in feats {
                features.push(f.trim().parse::<f64>().map_err(|_| bad("bad feature"))?);
            }
            labels.push(label.trim().parse::<usize>().map_err(|_| bad("bad label"))?);
        }
        let width = width.ok_or_else(|| {
            Error::InvalidInput(format!("{}: dataset is empty", path.display()))
        })?;
        Self::new(features, width - 1, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_shape_and_labels() {
        let d = Dataset::gaussian_blobs(30, 4, 3, 2.0, 1).unwrap();
        assert_eq!(d.len(), 30);
        assert_eq!(d.num_features(), 4);
        assert_eq!(d.num_classes(), 3);
        assert_eq!(d.labels().iter().filter(|&&l| l == 0).count(), 10);
    }

    #[test]
    fn flipping_changes_about_rate_fraction() {
        let mut d = Dataset::gaussian_blobs(4000, 2, 2, 1.0, 2).unwrap();
        let before = d.labels().to_vec();
        let flipped = d.flip_labels(0.25, 2, 9).unwrap();
        let changed = before.iter().zip(d.labels()).filter(|(a, b)| a != b).count();
        assert_eq!(flipped, changed);
        assert!((changed as f64 / 4000.0 - 0.25).abs() < 0.03);
        assert!(d.flip_labels(1.5, 2, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blobs.csv");
        let d = Dataset::gaussian_blobs(17, 3, 2, 1.0, 5).unwrap();
        d.write_csv(&path).unwrap();
        assert_eq!(Dataset::read_csv(&path).unwrap(), d);
    }

    #[test]
    fn csv_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "1.0,2.0,x\n").unwrap();
        assert!(Dataset::read_csv(&path).is_err());
        std::fs::write(&path, "").unwrap();
        assert!(Dataset::read_csv(&path).is_err());
        assert!(Dataset::read_csv(&dir.path().join("missing.csv")).is_err());
    }
}
