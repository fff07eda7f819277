//! Tabular datasets, CSV ingestion, seeded random streams and bootstrap bookkeeping.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Regression,
    #[serde(alias = "binary")]
    BinaryClassification,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Task::Regression),
            "binary" | "binary-classification" | "classification" => {
                Ok(Task::BinaryClassification)
            }
            other => Err(Error::InvalidParameter(format!("unknown task `{other}`"))),
        }
    }
}

/// Covariates (column-major, n x p), responses and column names.
///
/// Immutable once built; share by reference across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    response: Vec<f64>,
    task: Task,
    column_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        response: Vec<f64>,
        task: Task,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = features.shape();
        if n == 0 || p == 0 {
            return Err(Error::InvalidData(format!(
                "need at least one row and one feature, got {n}x{p}"
            )));
        }
        if response.len() != n {
            return Err(Error::InvalidData(format!(
                "response has {} entries for {n} rows",
                response.len()
            )));
        }
        if column_names.len() != p {
            return Err(Error::InvalidData(format!(
                "{} column names for {p} features",
                column_names.len()
            )));
        }
        for j in 0..p {
            for i in 0..n {
                if !features[(i, j)].is_finite() {
                    return Err(Error::Domain {
                        row: i + 1,
                        column: column_names[j].clone(),
                        message: "non-finite value".into(),
                    });
                }
            }
        }
        for (i, &y) in response.iter().enumerate() {
            if !y.is_finite() {
                return Err(Error::Domain {
                    row: i + 1,
                    column: "response".into(),
                    message: "non-finite response".into(),
                });
            }
            if task == Task::BinaryClassification && y != 0.0 && y != 1.0 {
                return Err(Error::Domain {
                    row: i + 1,
                    column: "response".into(),
                    message: format!("binary response must be 0 or 1, got {y}"),
                });
            }
        }
        Ok(Self {
            features,
            response,
            task,
            column_names,
        })
    }

    /// Builds a dataset with default column names `x0..x{p-1}`.
    pub fn from_matrix(features: DMatrix<f64>, response: Vec<f64>, task: Task) -> Result<Self> {
        let names = (0..features.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(features, response, task, names)
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    #[inline]
    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.features[(row, feature)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().copied().collect()
    }

    /// Rows selected by `rows` (duplicates allowed), in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let p = self.n_features();
        let features = DMatrix::from_fn(rows.len(), p, |i, j| self.features[(rows[i], j)]);
        let response = rows.iter().map(|&i| self.response[i]).collect();
        Self::new(features, response, self.task, self.column_names.clone())
    }

    /// Keeps only the listed feature columns.
    pub fn select_features(&self, cols: &[usize]) -> Result<Self> {
        let features = DMatrix::from_fn(self.n_rows(), cols.len(), |i, j| {
            self.features[(i, cols[j])]
        });
        let names = cols.iter().map(|&j| self.column_names[j].clone()).collect();
        Self::new(features, self.response.clone(), self.task, names)
    }

    /// Same covariates with a replacement response vector.
    pub fn with_response(&self, response: Vec<f64>, task: Task) -> Result<Self> {
        Self::new(self.features.clone(), response, task, self.column_names.clone())
    }

    /// Writes the dataset as CSV with the response as the last column.
    ///
    /// Floats use the shortest representation that parses back to the same bits.
    pub fn write_csv(&self, path: impl AsRef<Path>, response_column: &str) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let mut header: Vec<&str> = self.column_names.iter().map(String::as_str).collect();
        header.push(response_column);
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n_rows() {
            record.clear();
            for j in 0..self.n_features() {
                record.push(self.features[(i, j)].to_string());
            }
            record.push(self.response[i].to_string());
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Reads a headed CSV file; every cell must parse as a float.
///
/// Row numbers in errors are 1-based data rows (the header is row 0).
pub fn load_csv(path: impl AsRef<Path>, response_column: &str, task: Task) -> Result<Dataset> {
    let (header, mut columns) = read_numeric_table(path.as_ref())?;
    let response_idx = header
        .iter()
        .position(|h| h == response_column)
        .ok_or_else(|| Error::MissingColumn(response_column.to_string()))?;
    if header.len() < 2 {
        return Err(Error::InvalidData("no feature columns besides the response".into()));
    }
    let response = columns.remove(response_idx);
    if task == Task::BinaryClassification {
        if let Some((i, y)) = response.iter().enumerate().find(|(_, &y)| y != 0.0 && y != 1.0) {
            return Err(Error::Domain {
                row: i + 1,
                column: response_column.to_string(),
                message: format!("binary response must be 0 or 1, got {y}"),
            });
        }
    }
    let names = header
        .into_iter()
        .enumerate()
        .filter(|&(j, _)| j != response_idx)
        .map(|(_, h)| h)
        .collect();
    let n = response.len();
    let features = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
    Dataset::new(features, response, task, names)
}

/// Reads a headed CSV file of covariates only: every column becomes a feature.
pub fn load_features_csv(path: impl AsRef<Path>) -> Result<(DMatrix<f64>, Vec<String>)> {
    let (header, columns) = read_numeric_table(path.as_ref())?;
    let n = columns[0].len();
    Ok((DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]), header))
}

/// Header and column-major values of an all-numeric CSV with at least two rows.
fn read_numeric_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() {
        return Err(Error::InvalidData("empty header".into()));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        for (j, column) in columns.iter_mut().enumerate() {
            let raw = record.get(j).unwrap_or("");
            let cell = raw.trim();
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: header[j].clone(),
                value: raw.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::Domain {
                    row,
                    column: header[j].clone(),
                    message: format!("non-finite value {cell:?}"),
                });
            }
            column.push(v);
        }
    }
    let n = columns[0].len();
    if n < 2 {
        return Err(Error::InvalidData(format!("need at least 2 rows, found {n}")));
    }
    Ok((header, columns))
}

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Streams are values: derive a child stream per consumer instead of sharing a generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeededRng {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream_id: 0 }
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// A child stream keyed by `tag`; distinct tags give independent streams.
    pub fn derive(&self, tag: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(tag.wrapping_add(1))),
        }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// In-bag draws (with multiplicity, sorted) and the out-of-bag complement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapIndex {
    pub in_bag: Vec<usize>,
    pub oob: Vec<usize>,
}

impl BootstrapIndex {
    /// Uses every row exactly once; the out-of-bag set is empty.
    pub fn identity(n: usize) -> Self {
        Self {
            in_bag: (0..n).collect(),
            oob: Vec::new(),
        }
    }

    pub fn from_in_bag(mut in_bag: Vec<usize>, n: usize) -> Self {
        in_bag.sort_unstable();
        let mut seen = vec![false; n];
        for &i in &in_bag {
            seen[i] = true;
        }
        let oob = (0..n).filter(|&i| !seen[i]).collect();
        Self { in_bag, oob }
    }

    /// Per-row in-bag multiplicity.
    pub fn counts(&self, n: usize) -> Vec<usize> {
        let mut c = vec![0; n];
        for &i in &self.in_bag {
            c[i] += 1;
        }
        c
    }
}

/// Draws `n` rows uniformly with replacement.
pub fn bootstrap_sample(n: usize, rng: SeededRng) -> BootstrapIndex {
    let mut g = rng.generator();
    let in_bag = (0..n).map(|_| g.gen_range(0..n)).collect();
    BootstrapIndex::from_in_bag(in_bag, n)
}

/// Random disjoint partition into (train, test).
///
/// The test part has `max(1, round(n * test_fraction))` rows, clamped so that
/// the training part keeps at least one row.
pub fn train_test_split(
    data: &Dataset,
    test_fraction: f64,
    rng: SeededRng,
) -> Result<(Dataset, Dataset)> {
    let n = data.n_rows();
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidData(format!(
            "cannot split {n} row(s) into two non-empty parts"
        )));
    }
    let n_test = split_sizes(n, test_fraction).1;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng.generator());
    let mut test: Vec<usize> = order[..n_test].to_vec();
    let mut train: Vec<usize> = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((data.select_rows(&train)?, data.select_rows(&test)?))
}

/// `(train, test)` sizes used by [`train_test_split`].
pub fn split_sizes(n: usize, test_fraction: f64) -> (usize, usize) {
    let n_test = ((n as f64 * test_fraction).round() as usize).max(1).min(n - 1);
    (n - n_test, n_test)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_four_row_file() {
        let f = write_tmp("x1,y\n0,0\n1,0\n2,1\n3,1\n");
        let d = load_csv(f.path(), "y", Task::Regression).unwrap();
        assert_eq!((d.n_rows(), d.n_features()), (4, 1));
        assert_eq!(d.response(), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(d.column_names(), &["x1".to_string()]);
    }

    #[test]
    fn unparseable_cell_is_named() {
        let f = write_tmp("x1,y\n0,0\nabc,1\n");
        let err = load_csv(f.path(), "y", Task::Regression).unwrap_err();
        match err {
            Error::Parse { row, column, value } => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "x1", "abc"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn non_binary_response_names_row() {
        let f = write_tmp("x1,y\n0,0\n1,1\n2,2\n3,1\n");
        let err = load_csv(f.path(), "y", Task::BinaryClassification).unwrap_err();
        assert!(matches!(err, Error::Domain { row: 3, .. }), "{err}");
    }

    #[test]
    fn missing_column_and_missing_value() {
        let f = write_tmp("x1,y\n0,0\n1,1\n");
        assert!(matches!(
            load_csv(f.path(), "z", Task::Regression),
            Err(Error::MissingColumn(c)) if c == "z"
        ));
        let f = write_tmp("x1,y\n0,0\n,1\n");
        assert!(matches!(
            load_csv(f.path(), "y", Task::Regression),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn bootstrap_of_one_row() {
        let b = bootstrap_sample(1, SeededRng::new(3));
        assert_eq!(b.in_bag, vec![0]);
        assert!(b.oob.is_empty());
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let r = SeededRng::with_stream(11, 4);
        assert_eq!(bootstrap_sample(50, r), bootstrap_sample(50, r));
        assert_ne!(bootstrap_sample(50, r), bootstrap_sample(50, r.derive(1)));
    }

    #[test]
    fn oob_fraction_matches_expectation() {
        let n = 1000;
        let expected = (1.0 - 1.0 / n as f64).powi(n as i32);
        assert!((expected - 0.3677).abs() < 1e-3);
        for s in 0..100 {
            let b = bootstrap_sample(n, SeededRng::new(s));
            let frac = b.oob.len() as f64 / n as f64;
            assert!((frac - expected).abs() <= 0.05, "seed {s}: {frac}");
        }
    }

    #[test]
    fn split_sizes_follow_rounding_rule() {
        assert_eq!(split_sizes(10, 0.2), (8, 2));
        assert_eq!(split_sizes(5, 0.2), (4, 1));
        assert_eq!(split_sizes(2, 0.99), (1, 1));
        assert_eq!(split_sizes(2, 0.01), (1, 1));
    }

    #[test]
    fn split_partitions_rows() {
        let x = DMatrix::from_fn(10, 1, |i, _| i as f64);
        let d = Dataset::from_matrix(x, (0..10).map(|i| i as f64).collect(), Task::Regression)
            .unwrap();
        let (tr, te) = train_test_split(&d, 0.2, SeededRng::new(5)).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (8, 2));
        let mut all: Vec<f64> = tr.response().iter().chain(te.response()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(|i| i as f64).collect::<Vec<_>>());
        assert!(train_test_split(&d, 1.0, SeededRng::new(5)).is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let x = DMatrix::from_fn(6, 2, |i, j| ((i * 7 + j) as f64).sqrt() / 3.0 - 0.1);
        let y: Vec<f64> = (0..6).map(|i| (i as f64).exp() * 1e-7).collect();
        let d = Dataset::from_matrix(x, y, Task::Regression).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        d.write_csv(f.path(), "target").unwrap();
        let back = load_csv(f.path(), "target", Task::Regression).unwrap();
        assert_eq!(back, d);
    }
}
