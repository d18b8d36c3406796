//! Statistical features of a variance matrix.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::resample::VarianceMatrix;
use crate::scalar::Scalar;

/// Feature names, in extraction order.
pub const FEATURE_NAMES: [&str; 15] = [
    "mean",
    "std",
    "max",
    "min",
    "abs_mean",
    "abs_std",
    "diag_band_mean",
    "far_corner_mean",
    "quad_ll_mean",
    "quad_lh_mean",
    "quad_hl_mean",
    "quad_hh_mean",
    "center_mean",
    "upper_minus_lower",
    "trend_slope",
];

#[derive(Default, Clone, Copy)]
struct Acc<T> {
    sum: T,
    n: usize,
}

impl<T: Scalar> Acc<T> {
    fn add(&mut self, v: T) {
        self.sum = self.sum + v;
        self.n += 1;
    }

    fn mean(&self) -> T {
        if self.n == 0 {
            T::zero()
        } else {
            self.sum / T::of_usize(self.n)
        }
    }
}

fn mean_std<T: Scalar>(values: impl Iterator<Item = T> + Clone) -> (T, T) {
    let n = T::of_usize(values.clone().count());
    let mean = values.clone().sum::<T>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, var.sqrt())
}

/// Extracts the [`FEATURE_NAMES`] features. Standard deviations are population
/// deviations; the trend slope is the least-squares slope of value on `i + j`.
pub fn extract_features<T: Scalar>(m: &VarianceMatrix<T>) -> Vec<(&'static str, T)> {
    let r = m.r;
    let vals = m.values.iter().copied();
    let (mean, std) = mean_std(vals.clone());
    let (abs_mean, abs_std) = mean_std(vals.clone().map(|v| v.abs()));
    let max = vals.clone().fold(T::neg_infinity(), T::max);
    let min = vals.clone().fold(T::infinity(), T::min);

    let center_lo = r / 4;
    let center_hi = center_lo + (r / 2).max(1);
    let mut diag = Acc::default();
    let mut corner = Acc::default();
    let mut quads = [Acc::default(); 4];
    let mut center = Acc::default();
    let mut upper = Acc::default();
    let mut lower = Acc::default();
    for i in 0..r {
        for j in 0..r {
            let v = m.get(i, j);
            if i.abs_diff(j) * 8 <= r {
                diag.add(v);
            }
            if 4 * i >= 3 * r && 4 * j >= 3 * r {
                corner.add(v);
            }
            let q = usize::from(2 * i >= r) * 2 + usize::from(2 * j >= r);
            quads[q].add(v);
            if (center_lo..center_hi).contains(&i) && (center_lo..center_hi).contains(&j) {
                center.add(v);
            }
            if j > i {
                upper.add(v);
            } else if j < i {
                lower.add(v);
            }
        }
    }

    // x = i + j has mean r - 1 over the full grid.
    let x_mean = T::of_usize(r - 1);
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for i in 0..r {
        for j in 0..r {
            let dx = T::of_usize(i + j) - x_mean;
            sxy = sxy + dx * (m.get(i, j) - mean);
            sxx = sxx + dx * dx;
        }
    }
    let slope = sxy / sxx;

    let values = [
        mean,
        std,
        max,
        min,
        abs_mean,
        abs_std,
        diag.mean(),
        corner.mean(),
        quads[0].mean(),
        quads[1].mean(),
        quads[2].mean(),
        quads[3].mean(),
        center.mean(),
        upper.mean() - lower.mean(),
        slope,
    ];
    FEATURE_NAMES.iter().copied().zip(values).collect()
}

/// Concatenated features of one model over its positions.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub model_id: String,
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

/// Builds a model's feature vector from its matrices, ordered by position tag.
/// Names are `"<position>:<feature>"`.
pub fn feature_vector<T: Scalar>(model_id: &str, matrices: &[&VarianceMatrix<T>]) -> FeatureVector {
    let mut sorted: Vec<&VarianceMatrix<T>> = matrices.to_vec();
    sorted.sort_by(|a, b| a.position.cmp(&b.position));
    let mut names = Vec::new();
    let mut values = Vec::new();
    for m in sorted {
        for (name, v) in extract_features(m) {
            names.push(format!("{}:{name}", m.position));
            values.push(v.as_f64());
        }
    }
    FeatureVector {
        model_id: model_id.to_string(),
        names,
        values,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub model_id: String,
    pub values: Vec<f64>,
}

/// Feature vectors of a repository, sharing one name list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    /// Rows sorted by model id; every vector must carry the same names and finite values.
    pub fn from_vectors(vectors: impl IntoIterator<Item = FeatureVector>) -> Result<FeatureTable> {
        let mut table = FeatureTable::default();
        let mut first = true;
        for v in vectors {
            if first {
                table.names = v.names;
                first = false;
            } else if v.names != table.names {
                return Err(Error::Data(format!(
                    "model {} has a different feature layout",
                    v.model_id
                )));
            }
            if let Some(i) = v.values.iter().position(|x| !x.is_finite()) {
                return Err(Error::Data(format!(
                    "model {} has a non-finite {}",
                    v.model_id, table.names[i]
                )));
            }
            table.rows.push(FeatureRow {
                model_id: v.model_id,
                values: v.values,
            });
        }
        table.rows.sort_by(|a, b| a.model_id.cmp(&b.model_id));
        if table.rows.windows(2).any(|w| w[0].model_id == w[1].model_id) {
            return Err(Error::Data("duplicate model in feature table".into()));
        }
        Ok(table)
    }

    pub fn get(&self, model_id: &str) -> Option<&FeatureRow> {
        self.rows
            .binary_search_by(|r| r.model_id.as_str().cmp(model_id))
            .ok()
            .map(|i| &self.rows[i])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<FeatureTable> {
        io::read_json(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(r: usize, f: impl Fn(usize, usize) -> f64) -> VarianceMatrix<f64> {
        VarianceMatrix {
            model_id: "m".into(),
            position: "p".into(),
            r,
            d_max: 1.0,
            values: (0..r * r).map(|k| f(k / r, k % r)).collect(),
        }
    }

    fn feature(fs: &[(&str, f64)], name: &str) -> f64 {
        fs.iter().find(|(n, _)| *n == name).unwrap().1
    }

    #[test]
    fn constant_matrix() {
        let fs = extract_features(&matrix(8, |_, _| 0.7));
        assert!((feature(&fs, "mean") - 0.7).abs() < 1e-12);
        assert!(feature(&fs, "std").abs() < 1e-12);
        assert!(feature(&fs, "trend_slope").abs() < 1e-12);
        assert_eq!(fs.len(), FEATURE_NAMES.len());
    }

    #[test]
    fn antisymmetric_matrix() {
        let m = matrix(10, |i, j| (i as f64 - j as f64) * 0.3 + if i > j { 0.1 } else if i < j { -0.1 } else { 0.0 });
        let fs = extract_features(&m);
        assert!(feature(&fs, "mean").abs() < 1e-9);
        let mut upper = 0.0;
        let mut n = 0.0;
        for i in 0..10 {
            for j in i + 1..10 {
                upper += m.get(i, j);
                n += 1.0;
            }
        }
        assert!((feature(&fs, "upper_minus_lower") - 2.0 * upper / n).abs() < 1e-12);
    }

    #[test]
    fn linear_ramp_has_unit_slope() {
        for r in [2, 5, 32] {
            let fs = extract_features(&matrix(r, |i, j| (i + j) as f64));
            assert!((feature(&fs, "trend_slope") - 1.0).abs() < 1e-12, "r={r}");
        }
    }

    #[test]
    fn regions_for_r32() {
        let fs = extract_features(&matrix(32, |i, j| if i >= 24 && j >= 24 { 1.0 } else { 0.0 }));
        assert_eq!(feature(&fs, "far_corner_mean"), 1.0);
        assert_eq!(feature(&fs, "center_mean"), 0.0);
        assert_eq!(feature(&fs, "quad_hh_mean"), 64.0 / 256.0);
        let fs = extract_features(&matrix(32, |i, j| if (8..24).contains(&i) && (8..24).contains(&j) { 1.0 } else { 0.0 }));
        assert_eq!(feature(&fs, "center_mean"), 1.0);
        let fs = extract_features(&matrix(32, |i, j| if i.abs_diff(j) <= 4 { 1.0 } else { 0.0 }));
        assert_eq!(feature(&fs, "diag_band_mean"), 1.0);
    }

    #[test]
    fn f32_features() {
        let m = VarianceMatrix::<f32> {
            model_id: "m".into(),
            position: "p".into(),
            r: 4,
            d_max: 1.0,
            values: (0..16).map(|k| ((k / 4) + (k % 4)) as f32).collect(),
        };
        let fs = extract_features(&m);
        assert!((fs[14].1 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn vector_orders_positions() {
        let a = VarianceMatrix { position: "b".into(), ..matrix(4, |_, _| 1.0) };
        let b = VarianceMatrix { position: "a".into(), ..matrix(4, |_, _| 2.0) };
        let fv = feature_vector("m", &[&a, &b]);
        assert_eq!(fv.names.len(), 30);
        assert_eq!(fv.names[0], "a:mean");
        assert_eq!(fv.values[0], 2.0);
        assert_eq!(fv.names[15], "b:mean");
    }

    #[test]
    fn table_checks_layout() {
        let a = feature_vector("b", &[&matrix(4, |_, _| 1.0)]);
        let b = feature_vector("a", &[&matrix(4, |i, _| i as f64)]);
        let t = FeatureTable::from_vectors([a.clone(), b]).unwrap();
        assert_eq!(t.rows[0].model_id, "a");
        assert_eq!(t.get("b").unwrap().values, a.values);
        let other = VarianceMatrix { position: "q".into(), ..matrix(4, |_, _| 1.0) };
        assert!(FeatureTable::from_vectors([a.clone(), feature_vector("c", &[&other])]).is_err());
        assert!(FeatureTable::from_vectors([a.clone(), a]).is_err());
    }

    #[test]
    fn features_survive_matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let m = matrix(6, |i, j| (i as f64 * 0.37 - j as f64 * 0.11).sin());
        m.save(&p).unwrap();
        let back = VarianceMatrix::<f64>::load(&p).unwrap();
        assert_eq!(extract_features(&m), extract_features(&back));
    }
}
