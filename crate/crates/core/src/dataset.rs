//! Tabular dataset ingestion and z-score standardization.
//!
//! Files are plain comma-separated numerics with an optional header row. The
//! label column is moved to the last position on load; features are then
//! standardized with the population standard deviation so that Euclidean
//! distances (and therefore kernel widths) are commensurable across columns.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// A parsed CSV table with the class label in the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub column_names: Vec<String>,
    pub rows: Array2<f64>,
    /// File stem, used as the dataset name in reports.
    pub name: String,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.rows.ncols()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.rows
            .column(self.n_cols() - 1)
            .iter()
            .map(|&v| v as usize)
            .collect()
    }
}

/// Standardized features plus labels and the scaling used to produce them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub feature_names: Vec<String>,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub feature_means: Array1<f64>,
    pub feature_stds: Array1<f64>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Report identity: file stem plus dimensionality, e.g. `wine[p=13]`.
    pub fn display_name(&self) -> String {
        format!("{}[p={}]", self.name, self.n_features())
    }

    /// Standardized feature row `idx`.
    pub fn instance(&self, idx: usize) -> Result<ArrayView1<'_, f64>> {
        if idx >= self.n_rows() {
            return Err(Error::IndexOutOfRange {
                index: idx,
                len: self.n_rows(),
            });
        }
        Ok(self.features.row(idx))
    }

    /// Maps a standardized vector back to original feature units.
    pub fn destandardize(&self, z: ArrayView1<f64>) -> Array1<f64> {
        &z * &self.feature_stds + &self.feature_means
    }
}

pub fn load_csv(path: impl AsRef<Path>, label_column: Option<usize>) -> Result<RawTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    parse_csv(&text, path, &name, label_column)
}

/// Parses CSV text. `path` is only used for error messages.
pub fn parse_csv(
    text: &str,
    path: &Path,
    name: &str,
    label_column: Option<usize>,
) -> Result<RawTable> {
    let path_buf = || PathBuf::from(path);
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();

    let Some(&(_, first)) = lines.peek() else {
        return Err(Error::EmptyFile { path: path_buf() });
    };
    let first_cells: Vec<&str> = first.split(',').map(str::trim).collect();
    let width = first_cells.len();
    let header = if first_cells.iter().any(|c| c.parse::<f64>().is_err()) {
        lines.next();
        Some(first_cells.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    } else {
        None
    };

    let label_col = label_column.unwrap_or(width - 1);
    if label_col >= width {
        return Err(Error::InvalidInput(format!(
            "label column {label_col} out of range for {width} columns"
        )));
    }

    let mut values = Vec::new();
    let mut n_rows = 0;
    for (row, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != width {
            return Err(Error::RaggedRow {
                path: path_buf(),
                row,
                expected: width,
                found: cells.len(),
            });
        }
        let mut parsed = Vec::with_capacity(width);
        for (col, cell) in cells.iter().enumerate() {
            let parse_err = |message: String| Error::Parse {
                path: path_buf(),
                row,
                column: col + 1,
                message,
            };
            if cell.is_empty() {
                return Err(parse_err("missing value".into()));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(format!("not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value: {cell:?}")));
            }
            if col == label_col && (v < 0.0 || v.fract() != 0.0) {
                return Err(parse_err(format!(
                    "label must be a non-negative integer, found {cell:?}"
                )));
            }
            parsed.push(v);
        }
        let label = parsed.remove(label_col);
        parsed.push(label);
        values.extend(parsed);
        n_rows += 1;
    }

    if n_rows == 0 {
        return Err(Error::EmptyFile { path: path_buf() });
    }
    if n_rows < 2 {
        return Err(Error::InvalidInput(format!(
            "{}: need at least 2 data rows, found {n_rows}",
            path.display()
        )));
    }

    let mut column_names =
        header.unwrap_or_else(|| (0..width).map(|j| format!("x{j}")).collect());
    let label_name = column_names.remove(label_col);
    column_names.push(label_name);

    let rows = Array2::from_shape_vec((n_rows, width), values)
        .expect("row widths checked during parsing");
    Ok(RawTable {
        column_names,
        rows,
        name: name.to_string(),
    })
}

/// Z-scores every feature column (population std). Constant columns keep a
/// stored std of 1.0 and are only centered.
pub fn standardize(raw: &RawTable) -> Dataset {
    let p = raw.n_cols() - 1;
    let x = raw.rows.slice(ndarray::s![.., ..p]);
    let n = raw.n_rows() as f64;

    let means = x.mean_axis(Axis(0)).expect("n_rows >= 2");
    let mut stds = Array1::zeros(p);
    for (j, col) in x.axis_iter(Axis(1)).enumerate() {
        let var = col.iter().map(|v| (v - means[j]).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        // Exactly-constant columns have var == 0; near-constant ones are kept.
        stds[j] = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
    }
    let features = (&x - &means) / &stds;

    let labels = raw.labels();
    let n_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    Dataset {
        name: raw.name.clone(),
        feature_names: raw.column_names[..p].to_vec(),
        features,
        labels,
        feature_means: means,
        feature_stds: stds,
        n_classes,
    }
}

/// Builds a dataset straight from an in-memory feature matrix and labels.
pub fn from_arrays(
    name: &str,
    features: Array2<f64>,
    labels: &[usize],
) -> Result<Dataset> {
    if features.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: features.nrows(),
            found: labels.len(),
        });
    }
    if features.nrows() < 2 {
        return Err(Error::InvalidInput("need at least 2 rows".into()));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix".into()));
    }
    let p = features.ncols();
    let mut rows = Array2::zeros((features.nrows(), p + 1));
    rows.slice_mut(ndarray::s![.., ..p]).assign(&features);
    for (i, &l) in labels.iter().enumerate() {
        rows[[i, p]] = l as f64;
    }
    let mut column_names: Vec<String> = (0..p).map(|j| format!("x{j}")).collect();
    column_names.push("label".into());
    Ok(standardize(&RawTable {
        column_names,
        rows,
        name: name.to_string(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn parse(text: &str) -> Result<RawTable> {
        parse_csv(text, Path::new("t.csv"), "t", None)
    }

    #[test]
    fn parses_header_and_rows() {
        let t = parse("a,b,y\n1,2,0\n3,4,1\n5,6,0").unwrap();
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.n_cols(), 3);
        assert_eq!(t.labels(), vec![0, 1, 0]);
        assert_eq!(t.column_names, vec!["a", "b", "y"]);
    }

    #[test]
    fn headerless_and_crlf() {
        let t = parse("1,2,0\r\n3,4,1\r\n").unwrap();
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.column_names, vec!["x0", "x1", "x2"]);
    }

    #[test]
    fn label_column_moved_last() {
        let t = parse_csv("y,a\n1,10\n0,20\n", Path::new("t.csv"), "t", Some(0)).unwrap();
        assert_eq!(t.column_names, vec!["a", "y"]);
        assert_eq!(t.rows, array![[10.0, 1.0], [20.0, 0.0]]);
    }

    #[test]
    fn ragged_row_names_row_two() {
        let err = parse("1,2\n1,2,3\n").unwrap_err();
        match err {
            Error::RaggedRow { row, expected, found, .. } => {
                assert_eq!((row, expected, found), (2, 2, 3));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn bad_cells_are_located() {
        match parse("a,y\n1,0\nfoo,1\n").unwrap_err() {
            Error::Parse { row, column, .. } => assert_eq!((row, column), (3, 1)),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(parse("a,y\n1,0\n,1\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse("a,y\n1,0\n2,0.5\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse("a,y\n1,0\n2,-1\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse(""), Err(Error::EmptyFile { .. })));
        assert!(matches!(parse("a,y\n"), Err(Error::EmptyFile { .. })));
        assert!(matches!(parse("a,y\n1,0\n"), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn standardizes_population_std() {
        let t = parse("1,0\n2,1\n3,0\n").unwrap();
        let ds = standardize(&t);
        assert_abs_diff_eq!(ds.feature_means[0], 2.0);
        assert_abs_diff_eq!(ds.feature_stds[0], (2.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        let z = ds.features.column(0);
        assert_abs_diff_eq!(z[0], -1.224744871391589, epsilon = 1e-12);
        assert_abs_diff_eq!(z[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z[2], 1.224744871391589, epsilon = 1e-12);
        assert_eq!(ds.n_classes, 2);
    }

    #[test]
    fn constant_column_centered_only() {
        let t = parse("5,1,0\n5,2,1\n5,3,0\n").unwrap();
        let ds = standardize(&t);
        assert_eq!(ds.feature_stds[0], 1.0);
        assert!(ds.features.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn instance_bounds() {
        let ds = standardize(&parse("1,0\n2,1\n3,0\n").unwrap());
        assert_eq!(ds.instance(0).unwrap().to_vec(), vec![ds.features[[0, 0]]]);
        assert!(matches!(
            ds.instance(3),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_csv("/nonexistent/x.csv", None),
            Err(Error::Io { .. })
        ));
    }
}
