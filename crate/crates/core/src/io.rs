//! JSON encodings shared with the command-line tool.
//!
//! Complex scalars serialize as two-element arrays `[re, im]`; matrices are
//! row-major lists of rows; vectors are lists of pairs.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Bindings, Measurement, QuantumMDP, SuperOperator};
use crate::numerics::{CMat, CVec, DensityOp, StateVector, Tolerances, C64};

pub type JsonMatrix = Vec<Vec<[f64; 2]>>;
pub type JsonVector = Vec<[f64; 2]>;

pub fn matrix_to_json(m: &CMat) -> JsonMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_json(rows: &JsonMatrix) -> Result<CMat> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::validation("empty matrix"));
    }
    let ncols = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::validation(format!(
                "ragged matrix: row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
    }
    let mut m = CMat::zeros(nrows, ncols);
    for (i, r) in rows.iter().enumerate() {
        for (j, [re, im]) in r.iter().enumerate() {
            if !re.is_finite() || !im.is_finite() {
                return Err(Error::validation(format!("non-finite entry at ({i},{j})")));
            }
            m[(i, j)] = C64::new(*re, *im);
        }
    }
    Ok(m)
}

pub fn vector_to_json(v: &StateVector) -> JsonVector {
    v.amplitudes().iter().map(|c| [c.re, c.im]).collect()
}

pub fn vector_from_json(entries: &JsonVector) -> Result<CVec> {
    if entries.is_empty() {
        return Err(Error::validation("empty vector"));
    }
    Ok(CVec::from_iterator(
        entries.len(),
        entries.iter().map(|[re, im]| C64::new(*re, *im)),
    ))
}

/// On-disk model file.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub dim: usize,
    pub actions: Vec<String>,
    /// action name → list of Kraus matrices
    pub kraus: HashMap<String, Vec<JsonMatrix>>,
    pub measurement: MeasurementFile,
    /// named input states (density matrices)
    #[serde(default)]
    pub states: HashMap<String, JsonMatrix>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MeasurementFile {
    pub m_true: JsonMatrix,
    pub m_false: JsonMatrix,
}

/// A loaded model plus its named states and any loader warnings.
pub struct LoadedModel {
    pub model: QuantumMDP,
    pub states: HashMap<String, DensityOp>,
    pub warnings: Vec<String>,
}

pub fn model_from_file(file: &ModelFile, tol: &Tolerances) -> Result<LoadedModel> {
    let d = file.dim;
    let mut warnings = Vec::new();
    let mut dynamics = Vec::new();
    for a in &file.actions {
        let mats = file
            .kraus
            .get(a)
            .ok_or_else(|| Error::validation(format!("action {a:?} has no Kraus family")))?;
        let kraus: Vec<CMat> = mats
            .iter()
            .map(|m| matrix_from_json(m))
            .collect::<Result<_>>()?;
        for (i, k) in kraus.iter().enumerate() {
            if k.nrows() != d {
                return Err(Error::validation(format!(
                    "Kraus operator {i} of action {a:?} is {}x{}, model dim is {d}",
                    k.nrows(),
                    k.ncols()
                )));
            }
        }
        if kraus.len() > d * d {
            warnings.push(format!(
                "action {a:?} has {} Kraus operators; {} suffice on a dim-{d} space",
                kraus.len(),
                d * d
            ));
        }
        dynamics.push(SuperOperator::trace_preserving(kraus, tol)?);
    }
    let meas = Measurement::new(
        matrix_from_json(&file.measurement.m_true)?,
        matrix_from_json(&file.measurement.m_false)?,
        tol,
    )?;
    if meas.dim() != d {
        return Err(Error::validation(format!(
            "measurement dim {} does not match model dim {d}",
            meas.dim()
        )));
    }
    let model = QuantumMDP::new(file.actions.clone(), dynamics, meas, tol)?;
    let mut states = HashMap::new();
    for (name, mat) in &file.states {
        let rho = DensityOp::new(matrix_from_json(mat)?, false, tol)
            .map_err(|e| Error::validation(format!("state {name:?}: {e}")))?;
        if rho.dim() != d {
            return Err(Error::validation(format!(
                "state {name:?} has dim {}, model dim is {d}",
                rho.dim()
            )));
        }
        states.insert(name.clone(), rho);
    }
    Ok(LoadedModel {
        model,
        states,
        warnings,
    })
}

pub fn model_to_file(m: &QuantumMDP, states: &HashMap<String, DensityOp>) -> ModelFile {
    let mut kraus = HashMap::new();
    for (a, e) in m.actions().iter().zip(m.dynamics()) {
        kraus.insert(
            a.clone(),
            e.kraus().iter().map(matrix_to_json).collect::<Vec<_>>(),
        );
    }
    ModelFile {
        dim: m.dim(),
        actions: m.actions().to_vec(),
        kraus,
        measurement: MeasurementFile {
            m_true: matrix_to_json(m.measurement().m_true()),
            m_false: matrix_to_json(m.measurement().m_false()),
        },
        states: states
            .iter()
            .map(|(n, r)| (n.clone(), matrix_to_json(r.matrix())))
            .collect(),
    }
}

pub fn load_model(path: &std::path::Path, tol: &Tolerances) -> Result<LoadedModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| Error::validation(format!("bad model JSON in {}: {e}", path.display())))?;
    model_from_file(&file, tol)
}

/// On-disk bindings file for program sources.
#[derive(Debug, Serialize, Deserialize)]
pub struct BindingsFile {
    /// ordered (variable, local dimension) pairs
    pub variables: Vec<(String, usize)>,
    #[serde(default)]
    pub unitaries: HashMap<String, JsonMatrix>,
    #[serde(default)]
    pub measurements: HashMap<String, MeasurementFile>,
}

pub fn bindings_from_file(file: &BindingsFile) -> Result<Bindings> {
    let mut unitaries = HashMap::new();
    for (name, m) in &file.unitaries {
        unitaries.insert(name.clone(), matrix_from_json(m)?);
    }
    let mut measurements = HashMap::new();
    for (name, m) in &file.measurements {
        measurements.insert(
            name.clone(),
            (matrix_from_json(&m.m_true)?, matrix_from_json(&m.m_false)?),
        );
    }
    Ok(Bindings {
        variables: file.variables.clone(),
        unitaries,
        measurements,
    })
}

pub fn load_bindings(path: &std::path::Path) -> Result<Bindings> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))?;
    let file: BindingsFile = serde_json::from_str(&text)
        .map_err(|e| Error::validation(format!("bad bindings JSON in {}: {e}", path.display())))?;
    bindings_from_file(&file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::qbf_loop;

    #[test]
    fn model_file_roundtrip() {
        let tol = Tolerances::default();
        let m = qbf_loop();
        let mut states = HashMap::new();
        states.insert("psi0".to_string(), crate::model::fixtures::qbf_rho0());
        let file = model_to_file(&m, &states);
        let text = serde_json::to_string(&file).unwrap();
        let parsed: ModelFile = serde_json::from_str(&text).unwrap();
        let loaded = model_from_file(&parsed, &tol).unwrap();
        assert_eq!(loaded.model.dim(), 4);
        assert_eq!(loaded.model.actions(), m.actions());
        assert!(loaded.states.contains_key("psi0"));
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        let rows = vec![vec![[1.0, 0.0], [0.0, 0.0]], vec![[0.0, 0.0]]];
        assert!(matrix_from_json(&rows).is_err());
    }
}
