//! JSON model files and report serialization.

use crate::error::{Error, Result};
use crate::linalg::canonical_j;
use crate::scalar::{CMat, Mat, Real};
use crate::system::{assemble_closed_loop, build_controller, build_plant, ClosedLoop, ControllerParams, PlantModel};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Matrix as accepted in model files: nested rows, or an object with explicit shape.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum MatrixRepr {
    Rows(Vec<Vec<f64>>),
    Shaped { rows: usize, cols: usize, data: Vec<Value> },
}

impl MatrixRepr {
    /// Explicitly shaped, row-major nested data.
    pub fn from_mat<T: Real>(m: &Mat<T>) -> Self {
        let data = (0..m.nrows()).map(|i| json!((0..m.ncols()).map(|j| m[(i, j)].as_f64()).collect::<Vec<_>>())).collect();
        MatrixRepr::Shaped { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_mat<T: Real>(&self, name: &str) -> Result<Mat<T>> {
        match self {
            MatrixRepr::Rows(rows) => {
                let r = rows.len();
                let c = rows.first().map_or(0, |x| x.len());
                if rows.iter().any(|x| x.len() != c) {
                    return Err(Error::Parse(format!("{name}: ragged rows")));
                }
                Ok(Mat::from_fn(r, c, |i, j| T::lit(rows[i][j])))
            }
            MatrixRepr::Shaped { rows, cols, data } => {
                let flat: Vec<f64> = if data.iter().all(|v| v.is_array()) {
                    data.iter()
                        .flat_map(|row| row.as_array().cloned().unwrap_or_default())
                        .map(|v| v.as_f64().ok_or_else(|| Error::Parse(format!("{name}: non-numeric entry"))))
                        .collect::<Result<_>>()?
                } else {
                    data.iter()
                        .map(|v| v.as_f64().ok_or_else(|| Error::Parse(format!("{name}: non-numeric entry"))))
                        .collect::<Result<_>>()?
                };
                if flat.len() != rows * cols {
                    return Err(Error::Parse(format!("{name}: expected {} entries, found {}", rows * cols, flat.len())));
                }
                Ok(Mat::from_fn(*rows, *cols, |i, j| T::lit(flat[i * cols + j])))
            }
        }
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PlantConfig {
    pub R1: MatrixRepr,
    pub M1: MatrixRepr,
    pub L1: MatrixRepr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub Theta1: Option<MatrixRepr>,
    pub D: MatrixRepr,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ControllerConfig {
    pub R2: MatrixRepr,
    pub M2: MatrixRepr,
    pub L2: MatrixRepr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub Theta2: Option<MatrixRepr>,
    pub d: MatrixRepr,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WeightsConfig {
    pub N: MatrixRepr,
    pub K: MatrixRepr,
}

/// Top-level model file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    pub plant: PlantConfig,
    pub controller_init: ControllerConfig,
    pub weights: WeightsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization")
    }

    /// Validated model with realized plant.
    pub fn build<T: Real>(&self) -> Result<Model<T>> {
        let p = &self.plant;
        let r1: Mat<T> = p.R1.to_mat("R1")?;
        let n = r1.nrows();
        let theta1 = match &p.Theta1 {
            Some(t) => t.to_mat("Theta1")?,
            None => canonical_j(n)?,
        };
        let plant = build_plant(r1, p.M1.to_mat("M1")?, p.L1.to_mat("L1")?, theta1, p.D.to_mat("D")?)?;
        let c = &self.controller_init;
        let init = ControllerParams { r2: c.R2.to_mat("R2")?, m2: c.M2.to_mat("M2")?, l2: c.L2.to_mat("L2")? };
        let theta2 = match &c.Theta2 {
            Some(t) => t.to_mat("Theta2")?,
            None => canonical_j(init.r2.nrows())?,
        };
        let model = Model {
            plant,
            theta2,
            d: c.d.to_mat("d")?,
            init,
            n_w: self.weights.N.to_mat("N")?,
            k_w: self.weights.K.to_mat("K")?,
            theta: self.theta.map(T::lit),
        };
        model.closed_loop(&model.init)?;
        Ok(model)
    }

    /// Same model with a different initial controller.
    pub fn with_controller<T: Real>(&self, params: &ControllerParams<T>) -> Self {
        let mut out = self.clone();
        out.controller_init.R2 = MatrixRepr::from_mat(&params.r2);
        out.controller_init.M2 = MatrixRepr::from_mat(&params.m2);
        out.controller_init.L2 = MatrixRepr::from_mat(&params.l2);
        out
    }
}

/// Plant, fixed controller structure, weights and initial controller parameters.
#[derive(Debug, Clone)]
pub struct Model<T: Real> {
    pub plant: PlantModel<T>,
    pub theta2: Mat<T>,
    pub d: Mat<T>,
    pub init: ControllerParams<T>,
    pub n_w: Mat<T>,
    pub k_w: Mat<T>,
    pub theta: Option<T>,
}

impl<T: Real> Model<T> {
    pub fn closed_loop(&self, params: &ControllerParams<T>) -> Result<ClosedLoop<T>> {
        let ctrl = build_controller(params.clone(), self.theta2.clone(), self.d.clone())?;
        assemble_closed_loop(self.plant.clone(), ctrl, self.n_w.clone(), self.k_w.clone())
    }
}

fn rows(v: &[&[f64]]) -> MatrixRepr {
    let data = v.iter().map(|r| json!(r)).collect();
    MatrixRepr::Shaped { rows: v.len(), cols: v.first().map_or(0, |r| r.len()), data }
}

/// Single-mode plant with a single-mode coherent controller; four criterion outputs.
pub fn benchmark_config() -> ModelConfig {
    ModelConfig {
        plant: PlantConfig {
            R1: rows(&[&[1.1, 0.0], &[0.0, 0.9]]),
            M1: rows(&[&[0.6, -0.4], &[0.0, 0.7]]),
            L1: rows(&[&[0.6, 0.0], &[0.4, 0.6]]),
            Theta1: None,
            D: rows(&[&[1.0, 0.0], &[0.0, 1.0]]),
        },
        controller_init: ControllerConfig {
            R2: rows(&[&[0.2, 0.0], &[0.0, 0.2]]),
            M2: rows(&[&[0.1, 0.1], &[0.0, 0.1]]),
            L2: rows(&[&[0.4, 0.0], &[0.0, 0.1]]),
            Theta2: None,
            d: rows(&[&[1.0, 0.0], &[0.0, 1.0]]),
        },
        weights: WeightsConfig {
            N: rows(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0], &[0.0, 0.0]]),
            K: rows(&[&[0.0, 0.0], &[0.0, 0.0], &[0.5, 0.0], &[0.0, 0.5]]),
        },
        theta: Some(0.2),
    }
}

/// `{"rows", "cols", "data"}` with row-major nested data.
pub fn mat_json<T: Real>(m: &Mat<T>) -> Value {
    let data: Vec<Vec<f64>> = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].as_f64()).collect()).collect();
    json!({ "rows": m.nrows(), "cols": m.ncols(), "data": data })
}

/// Complex matrix with `[re, im]` entries.
pub fn cmat_json<T: Real>(m: &CMat<T>) -> Value {
    let data: Vec<Vec<[f64; 2]>> = (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re.as_f64(), m[(i, j)].im.as_f64()]).collect())
        .collect();
    json!({ "rows": m.nrows(), "cols": m.ncols(), "data": data })
}

/// Controller parameters as a JSON object.
pub fn params_json<T: Real>(p: &ControllerParams<T>) -> Value {
    json!({ "R2": mat_json(&p.r2), "M2": mat_json(&p.m2), "L2": mat_json(&p.l2) })
}
