//! JSON matrix encoding: nested row arrays, each complex entry as `[re, im]`.

use serde::{Deserialize, Serialize};

use crate::error::{QnkError, Result};
use crate::linalg::{c, ComplexMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatrixJson(pub Vec<Vec<[f64; 2]>>);

impl From<&ComplexMatrix> for MatrixJson {
    fn from(m: &ComplexMatrix) -> Self {
        MatrixJson(
            (0..m.nrows())
                .map(|r| (0..m.ncols()).map(|col| [m[(r, col)].re, m[(r, col)].im]).collect())
                .collect(),
        )
    }
}

impl TryFrom<MatrixJson> for ComplexMatrix {
    type Error = QnkError;

    fn try_from(value: MatrixJson) -> Result<Self> {
        ComplexMatrix::try_from(&value)
    }
}

impl TryFrom<&MatrixJson> for ComplexMatrix {
    type Error = QnkError;

    fn try_from(value: &MatrixJson) -> Result<Self> {
        let rows = value.0.len();
        let cols = value.0.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 {
            return Err(QnkError::DimensionMismatch("empty matrix".into()));
        }
        if let Some(bad) = value.0.iter().position(|r| r.len() != cols) {
            return Err(QnkError::DimensionMismatch(format!(
                "row {bad} has {} entries, expected {cols}",
                value.0[bad].len()
            )));
        }
        let m = ComplexMatrix::from_fn(rows, cols, |r, col| {
            let [re, im] = value.0[r][col];
            c(re, im)
        });
        crate::linalg::check_finite(&m)?;
        Ok(m)
    }
}

/// Serde adapter for `ComplexMatrix` fields.
pub mod matrix {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &ComplexMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<ComplexMatrix, D::Error> {
        let raw = MatrixJson::deserialize(d)?;
        ComplexMatrix::try_from(raw).map_err(serde::de::Error::custom)
    }
}

pub mod matrix_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ms: &[ComplexMatrix], s: S) -> std::result::Result<S::Ok, S::Error> {
        ms.iter().map(MatrixJson::from).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<ComplexMatrix>, D::Error> {
        let raw = Vec::<MatrixJson>::deserialize(d)?;
        raw.into_iter()
            .map(|m| ComplexMatrix::try_from(m).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Serde adapter for `DensityMatrix` fields; validates on read.
pub mod density {
    use super::*;
    use crate::linalg::DensityMatrix;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(rho: &DensityMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from(rho.matrix()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DensityMatrix, D::Error> {
        let raw = MatrixJson::deserialize(d)?;
        let m = ComplexMatrix::try_from(raw).map_err(serde::de::Error::custom)?;
        DensityMatrix::new(m).map_err(serde::de::Error::custom)
    }
}

pub fn write_pretty<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{ginibre, rng_from_seed};

    #[test]
    fn encodes_entries_as_pairs() {
        let m = ComplexMatrix::from_row_slice(1, 2, &[c(1.0, -2.0), c(0.5, 0.0)]);
        let text = serde_json::to_string(&MatrixJson::from(&m)).unwrap();
        assert_eq!(text, "[[[1.0,-2.0],[0.5,0.0]]]");
    }

    #[test]
    fn round_trip_is_exact() {
        let m = ginibre(3, 2, &mut rng_from_seed(1));
        let text = serde_json::to_string(&MatrixJson::from(&m)).unwrap();
        let back = ComplexMatrix::try_from(serde_json::from_str::<MatrixJson>(&text).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_ragged_rows() {
        let raw: MatrixJson = serde_json::from_str("[[[1,0],[0,0]],[[1,0]]]").unwrap();
        assert!(ComplexMatrix::try_from(raw).is_err());
    }
}
