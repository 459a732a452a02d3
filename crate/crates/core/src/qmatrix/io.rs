//! JSON state files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dims::{Party, SubsystemDims};
use super::matrix::{ComplexMatrix, C64};
use super::state::DensityOperator;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateFile {
    dims: Vec<Party>,
    #[serde(default)]
    subnormalized: bool,
    matrix_re: Vec<Vec<f64>>,
    matrix_im: Vec<Vec<f64>>,
}

fn file_err(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::StateFile {
        field: field.into(),
        message: message.into(),
    }
}

/// Parses and validates a state from its JSON text.
pub fn parse_state(text: &str) -> Result<DensityOperator> {
    let raw: StateFile = serde_json::from_str(text).map_err(|e| {
        file_err(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let dims = SubsystemDims::try_from(raw.dims).map_err(|e| file_err("dims", e.to_string()))?;
    let n = dims.total();
    let mut data = Vec::with_capacity(n * n);
    for (name, m) in [("matrix_re", &raw.matrix_re), ("matrix_im", &raw.matrix_im)] {
        if m.len() != n {
            return Err(file_err(name, format!("{} rows, expected {n}", m.len())));
        }
        for (i, row) in m.iter().enumerate() {
            if row.len() != n {
                return Err(file_err(
                    format!("{name}[{i}]"),
                    format!("{} entries, expected {n}", row.len()),
                ));
            }
            if let Some(j) = row.iter().position(|x| !x.is_finite()) {
                return Err(file_err(format!("{name}[{i}][{j}]"), "non-finite entry"));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            data.push(C64::new(raw.matrix_re[i][j], raw.matrix_im[i][j]));
        }
    }
    let op = ComplexMatrix::from_vec(n, n, data)?;
    let state = if raw.subnormalized {
        DensityOperator::new_subnormalized(op, dims)
    } else {
        DensityOperator::new(op, dims)
    };
    state.map_err(|e| file_err("matrix", e.to_string()))
}

/// Reads a state file.
pub fn read_state(path: impl AsRef<Path>) -> Result<DensityOperator> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_state(&text)
}

/// Serializes a state in the file format accepted by [`parse_state`].
pub fn state_to_json(s: &DensityOperator) -> String {
    let n = s.dim();
    let op = s.op();
    let file = StateFile {
        dims: s.dims().parties().to_vec(),
        subnormalized: s.is_subnormalized(),
        matrix_re: (0..n).map(|i| (0..n).map(|j| op[(i, j)].re).collect()).collect(),
        matrix_im: (0..n).map(|i| (0..n).map(|j| op[(i, j)].im).collect()).collect(),
    };
    serde_json::to_string_pretty(&file).expect("state serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmatrix::families::{make_state, StateFamily};

    #[test]
    fn round_trip() {
        let s = make_state(&StateFamily::Random {
            seed: 2,
            dims: vec![2, 3],
            rank: 4,
        })
        .unwrap();
        let back = parse_state(&state_to_json(&s)).unwrap();
        assert_eq!(back.op(), s.op());
        assert_eq!(back.dims(), s.dims());
    }

    #[test]
    fn diagnostics_name_the_field() {
        let bad_row = r#"{"dims":[{"label":"A","dim":2}],"matrix_re":[[1,0],[0]],"matrix_im":[[0,0],[0,0]]}"#;
        match parse_state(bad_row) {
            Err(Error::StateFile { field, .. }) => assert_eq!(field, "matrix_re[1]"),
            other => panic!("unexpected {other:?}"),
        }
        let syntax = "{\n\"dims\": [\n}";
        match parse_state(syntax) {
            Err(Error::StateFile { field, .. }) => assert!(field.starts_with("line 3")),
            other => panic!("unexpected {other:?}"),
        }
        let not_psd = r#"{"dims":[{"label":"A","dim":2}],"matrix_re":[[1.5,0],[0,-0.5]],"matrix_im":[[0,0],[0,0]]}"#;
        match parse_state(not_psd) {
            Err(Error::StateFile { field, .. }) => assert_eq!(field, "matrix"),
            other => panic!("unexpected {other:?}"),
        }
        let dup = r#"{"dims":[{"label":"A","dim":1},{"label":"A","dim":1}],"matrix_re":[[1]],"matrix_im":[[0]]}"#;
        assert!(matches!(parse_state(dup), Err(Error::StateFile { field, .. }) if field == "dims"));
    }
}
