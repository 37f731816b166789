//! Training data `y_i = f(x_i, w) + v_i`, with CSV + JSON-sidecar persistence.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, SmdError};
use crate::linalg::{Matrix, Vector};
use crate::models::Model;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub seed: Option<u64>,
    pub generator: String,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    inputs: Vec<Vector>,
    labels: Vec<f64>,
    pub w_true: Option<Vector>,
    pub noise: Option<Vec<f64>>,
    pub meta: DatasetMeta,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    n: usize,
    d: usize,
    w_true: Option<Vec<f64>>,
    noise: Option<Vec<f64>>,
    seed: Option<u64>,
    generator: String,
}

impl Dataset {
    pub fn new(inputs: Vec<Vector>, labels: Vec<f64>) -> Result<Self> {
        check_dim("dataset labels", inputs.len(), labels.len())?;
        if let Some(d) = inputs.first().map(|x| x.len()) {
            if let Some(bad) = inputs.iter().find(|x| x.len() != d) {
                return Err(SmdError::Dimension {
                    context: "dataset inputs",
                    expected: d,
                    got: bad.len(),
                });
            }
        }
        Ok(Self {
            inputs,
            labels,
            w_true: None,
            noise: None,
            meta: DatasetMeta::default(),
        })
    }

    /// Linear data `y = X w` from the rows of `x`.
    pub fn from_design(x: &Matrix, y: &Vector) -> Result<Self> {
        let inputs = (0..x.nrows()).map(|i| x.row(i).transpose()).collect();
        Self::new(inputs, y.iter().copied().collect())
    }

    pub fn with_truth(mut self, w_true: Vector, noise: Option<Vec<f64>>) -> Self {
        self.w_true = Some(w_true);
        self.noise = noise;
        self
    }

    pub fn with_meta(mut self, generator: &str, seed: Option<u64>) -> Self {
        self.meta = DatasetMeta {
            seed,
            generator: generator.to_string(),
        };
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.len())
    }

    pub fn input(&self, i: usize) -> &Vector {
        &self.inputs[i]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn inputs(&self) -> &[Vector] {
        &self.inputs
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn samples(&self) -> impl Iterator<Item = (&Vector, f64)> {
        self.inputs.iter().zip(self.labels.iter().copied())
    }

    pub fn design_matrix(&self) -> Matrix {
        crate::linalg::rows_to_matrix(&self.inputs)
    }

    pub fn label_vector(&self) -> Vector {
        Vector::from_column_slice(&self.labels)
    }

    /// Check input sizes against `model` and, when both are recorded, that
    /// `y_i = f(x_i, w_true) + v_i` to 1e-12.
    pub fn validate(&self, model: &Model) -> Result<()> {
        if !self.is_empty() {
            check_dim("dataset inputs vs model", model.input_dim(), self.input_dim())?;
        }
        if let (Some(w), Some(v)) = (&self.w_true, &self.noise) {
            check_dim("noise record", self.len(), v.len())?;
            for (i, (x, y)) in self.samples().enumerate() {
                let gap = (y - model.predict(x, w)? - v[i]).abs();
                if gap > 1e-12 {
                    return Err(SmdError::Input(format!(
                        "sample {i}: y differs from f(x, w_true) + v by {gap:e}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Write `x_0..x_{d-1},y` rows to `csv_path` and the truth record to `sidecar_path`.
    pub fn save(&self, csv_path: &Path, sidecar_path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(csv_path)?;
        let d = self.input_dim();
        let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        wtr.write_record(&header)?;
        for (x, y) in self.samples() {
            let mut row: Vec<String> = x.iter().map(|v| format!("{v:e}")).collect();
            row.push(format!("{y:e}"));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        let sidecar = Sidecar {
            n: self.len(),
            d,
            w_true: self.w_true.as_ref().map(|w| w.iter().copied().collect()),
            noise: self.noise.clone(),
            seed: self.meta.seed,
            generator: self.meta.generator.clone(),
        };
        std::fs::write(sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(csv_path: &Path, sidecar_path: Option<&Path>) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(csv_path)?;
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| SmdError::Input(format!("row {}: {e}", line + 2)))?;
            let (y, x) = vals
                .split_last()
                .ok_or_else(|| SmdError::Input(format!("row {} is empty", line + 2)))?;
            inputs.push(Vector::from_column_slice(x));
            labels.push(*y);
        }
        let mut data = Self::new(inputs, labels)?;
        if let Some(p) = sidecar_path {
            let s: Sidecar = serde_json::from_str(&std::fs::read_to_string(p)?)?;
            check_dim("sidecar n", data.len(), s.n)?;
            data.w_true = s.w_true.map(Vector::from_vec);
            data.noise = s.noise;
            data.meta = DatasetMeta {
                seed: s.seed,
                generator: s.generator,
            };
        }
        Ok(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::membership_residual;

    #[test]
    fn save_load_preserves_bits() {
        let dir = tempfile::tempdir().unwrap();
        let inputs = vec![
            Vector::from_vec(vec![0.1, -1.0 / 3.0]),
            Vector::from_vec(vec![1e-17, 2.5]),
        ];
        let w = Vector::from_vec(vec![std::f64::consts::PI, -0.5]);
        let labels: Vec<f64> = inputs.iter().map(|x| x.dot(&w) + 0.25).collect();
        let data = Dataset::new(inputs, labels)
            .unwrap()
            .with_truth(w, Some(vec![0.25, 0.25]))
            .with_meta("unit", Some(42));
        let (c, s) = (dir.path().join("d.csv"), dir.path().join("d.json"));
        data.save(&c, &s).unwrap();
        let back = Dataset::load(&c, Some(&s)).unwrap();
        assert_eq!(back.labels(), data.labels());
        assert_eq!(back.inputs(), data.inputs());
        assert_eq!(back.w_true, data.w_true);
        assert_eq!(back.meta, data.meta);
        back.validate(&Model::linear(2)).unwrap();
    }

    #[test]
    fn inconsistent_truth_is_reported() {
        let data = Dataset::new(vec![Vector::from_vec(vec![1.0])], vec![2.0])
            .unwrap()
            .with_truth(Vector::from_vec(vec![1.0]), Some(vec![0.0]));
        assert!(data.validate(&Model::linear(1)).is_err());
    }

    #[test]
    fn membership_residual_examples() {
        let x = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 1.0]);
        let w_true = Vector::from_vec(vec![1.0, -1.0, 2.0]);
        let data = Dataset::from_design(&x, &(&x * &w_true)).unwrap();
        let model = Model::linear(3);
        assert_eq!(membership_residual(&model, &data, &w_true).unwrap(), Vector::zeros(2));
        // null-space direction by elimination: x1 + 2 x2 = 0, x2 + x3 = 0 → (-2, 1, -1)
        let null = Vector::from_vec(vec![-2.0, 1.0, -1.0]);
        let r = membership_residual(&model, &data, &(&w_true + 0.7 * null)).unwrap();
        assert!(r.amax() < 1e-15);
        let empty = Dataset::new(vec![], vec![]).unwrap();
        assert_eq!(membership_residual(&model, &empty, &w_true).unwrap().len(), 0);
    }
}
