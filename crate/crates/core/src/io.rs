//! JSON and CSV exchange formats.
//!
//! Matrices: `{"dim": d, "rows": [[…], …]}` or a CSV file of `d` rows.
//! Networks: `{"depth": N, "width": d, "layers": {"1": matrix, …, "N": matrix}}`
//! where every layer is keyed by its index `p`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GeomError, Result};
use crate::linalg::{check_finite, SquareMatrix};
use crate::manifold::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDoc {
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
}

impl MatrixDoc {
    pub fn from_matrix(m: &SquareMatrix) -> Self {
        MatrixDoc {
            dim: m.nrows(),
            rows: m.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<SquareMatrix> {
        matrix_from_rows(&self.rows, Some(self.dim))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDoc {
    pub depth: usize,
    pub width: usize,
    pub layers: BTreeMap<String, MatrixDoc>,
}

impl NetworkDoc {
    pub fn from_network(w: &Network) -> Self {
        let layers = (1..=w.depth())
            .map(|p| (p.to_string(), MatrixDoc::from_matrix(w.layer(p))))
            .collect();
        NetworkDoc {
            depth: w.depth(),
            width: w.width(),
            layers,
        }
    }

    pub fn to_network(&self) -> Result<Network> {
        if self.layers.len() != self.depth {
            return Err(GeomError::Parse(format!(
                "expected {} layers, found {}",
                self.depth,
                self.layers.len()
            )));
        }
        let mut layers = Vec::with_capacity(self.depth);
        for p in 1..=self.depth {
            let doc = self
                .layers
                .get(&p.to_string())
                .ok_or_else(|| GeomError::Parse(format!("missing layer \"{p}\"")))?;
            let m = doc.to_matrix()?;
            if m.nrows() != self.width {
                return Err(GeomError::shape(
                    format!("{0}x{0}", self.width),
                    format!("{0}x{0}", m.nrows()),
                ));
            }
            layers.push(m);
        }
        Network::new(layers)
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], dim: Option<usize>) -> Result<SquareMatrix> {
    let d = rows.len();
    if d == 0 {
        return Err(GeomError::Parse("matrix has no rows".into()));
    }
    if let Some(dim) = dim {
        if dim != d {
            return Err(GeomError::shape(format!("{dim} rows"), format!("{d} rows")));
        }
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(GeomError::shape(
                format!("{d} entries in row {i}"),
                format!("{}", r.len()),
            ));
        }
    }
    let m = SquareMatrix::from_fn(d, d, |i, j| rows[i][j]);
    check_finite(&m)?;
    Ok(m)
}

pub fn parse_matrix_json(text: &str) -> Result<SquareMatrix> {
    let doc: MatrixDoc = serde_json::from_str(text).map_err(|e| GeomError::Parse(e.to_string()))?;
    doc.to_matrix()
}

pub fn parse_matrix_csv(text: &str) -> Result<SquareMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| GeomError::Parse(e.to_string()))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| GeomError::Parse(format!("not a number: {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    matrix_from_rows(&rows, None)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| GeomError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a matrix, choosing the format from the extension (`.csv` means CSV,
/// anything else JSON).
pub fn read_matrix(path: &Path) -> Result<SquareMatrix> {
    let text = read_text(path)?;
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        parse_matrix_csv(&text)
    } else {
        parse_matrix_json(&text)
    }
}

pub fn parse_network_json(text: &str) -> Result<Network> {
    let doc: NetworkDoc =
        serde_json::from_str(text).map_err(|e| GeomError::Parse(e.to_string()))?;
    doc.to_network()
}

pub fn read_network(path: &Path) -> Result<Network> {
    parse_network_json(&read_text(path)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| GeomError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn matrix_json_roundtrip() {
        let m = dmatrix![1.0, -2.5; 0.0, 3.0];
        let text = serde_json::to_string(&MatrixDoc::from_matrix(&m)).unwrap();
        assert_eq!(text, r#"{"dim":2,"rows":[[1.0,-2.5],[0.0,3.0]]}"#);
        assert_eq!(parse_matrix_json(&text).unwrap(), m);
    }

    #[test]
    fn matrix_csv() {
        let m = parse_matrix_csv("1, 2\n3,4\n").unwrap();
        assert_eq!(m, dmatrix![1.0, 2.0; 3.0, 4.0]);
        assert!(matches!(
            parse_matrix_csv("1,2\n3\n"),
            Err(GeomError::Parse(_)) | Err(GeomError::ShapeMismatch { .. })
        ));
        assert!(matches!(parse_matrix_csv("1,x\n3,4\n"), Err(GeomError::Parse(_))));
    }

    #[test]
    fn dim_mismatch_rejected() {
        let err = parse_matrix_json(r#"{"dim":3,"rows":[[1,0],[0,1]]}"#).unwrap_err();
        assert!(matches!(err, GeomError::ShapeMismatch { .. }));
    }

    #[test]
    fn network_uses_explicit_layer_labels() {
        let text = r#"{"depth":2,"width":1,"layers":{"2":{"dim":1,"rows":[[3]]},"1":{"dim":1,"rows":[[2]]}}}"#;
        let w = parse_network_json(text).unwrap();
        assert_eq!(w.layer(1)[(0, 0)], 2.0);
        assert_eq!(w.layer(2)[(0, 0)], 3.0);
        let back = NetworkDoc::from_network(&w).to_network().unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn network_missing_layer() {
        let text = r#"{"depth":2,"width":1,"layers":{"1":{"dim":1,"rows":[[2]]},"3":{"dim":1,"rows":[[2]]}}}"#;
        assert!(matches!(parse_network_json(text), Err(GeomError::Parse(_))));
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_matrix(Path::new("/nonexistent/x.json")).unwrap_err();
        assert_eq!(err.name(), "IoError");
        assert!(err.to_string().contains("/nonexistent/x.json"));
    }
}
