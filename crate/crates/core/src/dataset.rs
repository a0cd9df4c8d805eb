//! Sample matrices, class-specific problem formation, CSV ingestion and
//! stratified splitting.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Samples stored one per row. At least one row and one column, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix(DMatrix<f64>);

impl SampleMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::invalid(format!(
                "sample matrix must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            // column-major storage
            let (r, c) = (pos % values.nrows(), pos / values.nrows());
            return Err(Error::invalid(format!(
                "non-finite value at row {r}, column {c}"
            )));
        }
        Ok(SampleMatrix(values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::RaggedRow {
                line: i + 1,
                expected: d,
                found: r.len(),
            });
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.0.row(i).transpose()
    }

    /// Copies the given rows, in the given order. Panics on an empty selection.
    pub fn select_rows(&self, indices: &[usize]) -> SampleMatrix {
        assert!(!indices.is_empty(), "row selection must be non-empty");
        SampleMatrix(self.0.select_rows(indices))
    }

    pub fn scaled(&self, factor: f64) -> SampleMatrix {
        SampleMatrix(&self.0 * factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        })
    }
}

/// A binary problem: one positive class against everything else.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    data: SampleMatrix,
    labels: Vec<Label>,
}

impl LabeledDataset {
    /// Requires at least two positives and one negative.
    pub fn new(data: SampleMatrix, labels: Vec<Label>) -> Result<Self> {
        let ds = Self::from_parts(data, labels)?;
        if ds.positive_count() < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 positive samples, got {}",
                ds.positive_count()
            )));
        }
        if ds.negative_count() < 1 {
            return Err(Error::invalid("need at least 1 negative sample"));
        }
        Ok(ds)
    }

    /// Only checks that labels and rows agree. Used for evaluation
    /// partitions, which may hold a single class.
    pub fn from_parts(data: SampleMatrix, labels: Vec<Label>) -> Result<Self> {
        if labels.len() != data.rows() {
            return Err(Error::DimensionMismatch {
                expected: data.rows(),
                found: labels.len(),
            });
        }
        Ok(LabeledDataset { data, labels })
    }

    pub fn data(&self) -> &SampleMatrix {
        &self.data
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_positive()).count()
    }

    pub fn negative_count(&self) -> usize {
        self.len() - self.positive_count()
    }

    pub fn positive_indices(&self) -> Vec<usize> {
        self.indices_of(Label::Positive)
    }

    pub fn negative_indices(&self) -> Vec<usize> {
        self.indices_of(Label::Negative)
    }

    fn indices_of(&self, which: Label) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == which).then_some(i))
            .collect()
    }

    pub fn positives(&self) -> SampleMatrix {
        self.data.select_rows(&self.positive_indices())
    }

    /// Negative rows in their original order. Requires at least one negative.
    pub fn negatives(&self) -> SampleMatrix {
        self.data.select_rows(&self.negative_indices())
    }

    pub fn subset(&self, indices: &[usize]) -> Result<LabeledDataset> {
        if indices.is_empty() {
            return Err(Error::invalid("empty subset"));
        }
        Ok(LabeledDataset {
            data: self.data.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        })
    }

    /// Same labels with features replaced (e.g. by kernel features).
    pub fn with_data(&self, data: SampleMatrix) -> Result<LabeledDataset> {
        Self::from_parts(data, self.labels.clone())
    }
}

/// A multiclass table as read from disk, labels kept verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassDataset {
    pub data: SampleMatrix,
    pub labels: Vec<String>,
}

impl MulticlassDataset {
    /// Distinct labels in order of first appearance.
    pub fn classes(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        for l in &self.labels {
            if !seen.contains(l) {
                seen.push(l.clone());
            }
        }
        seen
    }

    /// Relabels `target_class` as positive and every other class as
    /// negative. Features are not touched.
    pub fn make_class_specific(&self, target_class: &str) -> Result<LabeledDataset> {
        let labels: Vec<Label> = self
            .labels
            .iter()
            .map(|l| Label::from_bool(l == target_class))
            .collect();
        let positives = labels.iter().filter(|l| l.is_positive()).count();
        if positives == 0 {
            return Err(Error::UnknownClass(target_class.to_string()));
        }
        LabeledDataset::new(self.data.clone(), labels)
    }
}

/// Which CSV column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    /// 1-based column position.
    Index(usize),
    /// Header name; requires a header row.
    Name(String),
    Last,
}

impl FromStr for LabelColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::config("label-col", "empty column reference"));
        }
        if s.eq_ignore_ascii_case("last") {
            return Ok(LabelColumn::Last);
        }
        match s.parse::<usize>() {
            Ok(0) => Err(Error::config("label-col", "column indices are 1-based")),
            Ok(i) => Ok(LabelColumn::Index(i)),
            Err(_) => Ok(LabelColumn::Name(s.to_string())),
        }
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Index(i) => write!(f, "{i}"),
            LabelColumn::Name(n) => f.write_str(n),
            LabelColumn::Last => f.write_str("last"),
        }
    }
}

fn parse_cell(raw: &str, line: usize, column: usize) -> Result<f64> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            column,
            value: raw.to_string(),
        }),
    }
}

/// Reads a numeric table, optionally splitting off a label column. A header
/// row is assumed when any feature cell of the first row is not numeric.
pub fn read_table<R: Read>(
    reader: R,
    label_col: Option<&LabelColumn>,
) -> Result<(SampleMatrix, Option<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let line = rec.position().map_or(records.len() + 1, |p| p.line() as usize);
        records.push((line, rec));
    }
    let Some((_, first)) = records.first() else {
        return Err(Error::EmptyFile);
    };
    let width = first.len();

    let label_idx = match label_col {
        None => None,
        Some(LabelColumn::Last) => Some(width - 1),
        Some(LabelColumn::Index(i)) => {
            if *i > width {
                return Err(Error::UnknownColumn(i.to_string()));
            }
            Some(i - 1)
        }
        Some(LabelColumn::Name(name)) => Some(
            first
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::UnknownColumn(name.clone()))?,
        ),
    };
    let named = matches!(label_col, Some(LabelColumn::Name(_)));
    let header = named
        || first
            .iter()
            .enumerate()
            .any(|(j, c)| Some(j) != label_idx && c.trim().parse::<f64>().is_err());
    let body = if header { &records[1..] } else { &records[..] };
    if body.is_empty() {
        return Err(Error::EmptyFile);
    }

    let d = width - usize::from(label_idx.is_some());
    if d == 0 {
        return Err(Error::invalid("table has no feature columns"));
    }
    let mut values = Vec::with_capacity(body.len() * d);
    let mut labels = label_idx.map(|_| Vec::with_capacity(body.len()));
    for (line, rec) in body {
        if rec.len() != width {
            return Err(Error::RaggedRow {
                line: *line,
                expected: width,
                found: rec.len(),
            });
        }
        for (j, cell) in rec.iter().enumerate() {
            if Some(j) == label_idx {
                if let Some(l) = labels.as_mut() {
                    l.push(cell.to_string());
                }
            } else {
                values.push(parse_cell(cell, *line, j + 1)?);
            }
        }
    }
    let data = SampleMatrix::new(DMatrix::from_row_slice(body.len(), d, &values))?;
    Ok((data, labels))
}

/// Loads a labeled multiclass CSV.
pub fn load_csv(path: impl AsRef<Path>, label_col: &LabelColumn) -> Result<MulticlassDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let (data, labels) = read_table(std::io::BufReader::new(file), Some(label_col))?;
    Ok(MulticlassDataset {
        data,
        labels: labels.expect("label column requested"),
    })
}

/// Loads an unlabeled CSV, dropping `label_col` when given.
pub fn load_features_csv(
    path: impl AsRef<Path>,
    label_col: Option<&LabelColumn>,
) -> Result<(SampleMatrix, Option<Vec<String>>)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_table(std::io::BufReader::new(file), label_col)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_fraction: f64, seed: u64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::config(
                "train_fraction",
                format!("must lie in (0, 1), got {train_fraction}"),
            ));
        }
        Ok(SplitSpec {
            train_fraction,
            seed,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// `round(fraction * n)` with halves going up.
pub fn train_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) + 0.5).floor() as usize
}

/// Stratified split: each class is shuffled with the seed and its prefix
/// taken for training. Both sides keep the original row order.
pub fn split(ds: &LabeledDataset, spec: SplitSpec) -> Result<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for stratum in [ds.positive_indices(), ds.negative_indices()] {
        let mut shuffled = stratum;
        shuffled.shuffle(&mut rng);
        let take = train_count(spec.train_fraction, shuffled.len()).min(shuffled.len());
        train_idx.extend_from_slice(&shuffled[..take]);
        test_idx.extend_from_slice(&shuffled[take..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    if test_idx.is_empty() {
        return Err(Error::invalid("split leaves the test side empty"));
    }
    let train = LabeledDataset::new(
        ds.data().select_rows(&train_idx),
        train_idx.iter().map(|&i| ds.labels()[i]).collect(),
    )
    .map_err(|e| Error::invalid(format!("degenerate training stratum: {e}")))?;
    let test = ds.subset(&test_idx)?;
    Ok(Split {
        train,
        test,
        train_indices: train_idx,
        test_indices: test_idx,
    })
}

/// Assigns every row to one of `folds` folds, stratified by label. Returns
/// the row indices of each fold, ascending.
pub fn stratified_folds(labels: &[Label], folds: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(folds >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Vec::new(); folds];
    let mut offset = 0;
    for which in [Label::Positive, Label::Negative] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == which).collect();
        idx.shuffle(&mut rng);
        for (j, i) in idx.into_iter().enumerate() {
            out[(j + offset) % folds].push(i);
        }
        // keep the fold sizes balanced across strata
        offset += labels.iter().filter(|&&l| l == which).count();
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(npos: usize, nneg: usize) -> LabeledDataset {
        let n = npos + nneg;
        let data = SampleMatrix::new(DMatrix::from_fn(n, 2, |i, j| (i * 2 + j) as f64)).unwrap();
        let labels = (0..n).map(|i| Label::from_bool(i < npos)).collect();
        LabeledDataset::new(data, labels).unwrap()
    }

    #[test]
    fn parses_simple_csv() {
        let text = "1.0,2.0,a\n3.0,4.0,b\n5.0,6.0,a\n";
        let (x, labels) = read_table(text.as_bytes(), Some(&LabelColumn::Index(3))).unwrap();
        assert_eq!((x.rows(), x.cols()), (3, 2));
        assert_eq!(labels.unwrap(), vec!["a", "b", "a"]);
        assert_eq!(x.as_matrix()[(2, 1)], 6.0);
    }

    #[test]
    fn detects_header_and_named_label() {
        let text = "f1,f2,class\n1,2,x\n3,4,y\n";
        let (x, labels) =
            read_table(text.as_bytes(), Some(&LabelColumn::Name("class".into()))).unwrap();
        assert_eq!(x.rows(), 2);
        assert_eq!(labels.unwrap(), vec!["x", "y"]);
        let (x, _) = read_table(text.as_bytes(), Some(&LabelColumn::Last)).unwrap();
        assert_eq!(x.rows(), 2);
    }

    #[test]
    fn nan_cell_reports_position() {
        let text = "1.0,2.0,a\n3.0,NaN,b\n";
        match read_table(text.as_bytes(), Some(&LabelColumn::Index(3))) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_and_empty_inputs_fail() {
        let text = "1,2,a\n3,b\n";
        assert!(matches!(
            read_table(text.as_bytes(), Some(&LabelColumn::Index(3))),
            Err(Error::RaggedRow { line: 2, .. })
        ));
        assert!(matches!(read_table("".as_bytes(), None), Err(Error::EmptyFile)));
        assert!(matches!(read_table("a,b\n".as_bytes(), None), Err(Error::EmptyFile)));
    }

    #[test]
    fn label_column_parsing() {
        assert_eq!("3".parse::<LabelColumn>().unwrap(), LabelColumn::Index(3));
        assert_eq!("last".parse::<LabelColumn>().unwrap(), LabelColumn::Last);
        assert_eq!(
            "digit".parse::<LabelColumn>().unwrap(),
            LabelColumn::Name("digit".into())
        );
        assert!("0".parse::<LabelColumn>().is_err());
    }

    #[test]
    fn class_specific_relabeling() {
        let data = SampleMatrix::new(DMatrix::from_fn(4, 1, |i, _| i as f64)).unwrap();
        let mc = MulticlassDataset {
            data: data.clone(),
            labels: vec!["a".into(), "b".into(), "a".into(), "c".into()],
        };
        let ds = mc.make_class_specific("a").unwrap();
        use Label::*;
        assert_eq!(ds.labels(), &[Positive, Negative, Positive, Negative]);
        assert_eq!(ds.data(), &data);
        assert!(matches!(mc.make_class_specific("z"), Err(Error::UnknownClass(_))));
        assert!(mc.make_class_specific("b").is_err());

        let only = MulticlassDataset {
            data: SampleMatrix::new(DMatrix::zeros(2, 1)).unwrap(),
            labels: vec!["a".into(), "a".into()],
        };
        assert!(only.make_class_specific("a").is_err());
    }

    #[test]
    fn seven_balanced_classes() {
        let labels: Vec<String> = (0..210).map(|i| format!("c{}", i % 7)).collect();
        let mc = MulticlassDataset {
            data: SampleMatrix::new(DMatrix::from_fn(210, 3, |i, j| (i + j) as f64)).unwrap(),
            labels,
        };
        for class in mc.classes() {
            let ds = mc.make_class_specific(&class).unwrap();
            assert_eq!((ds.positive_count(), ds.negative_count()), (30, 180));
        }
    }

    #[test]
    fn split_counts() {
        let s = split(&toy(10, 10), SplitSpec::new(0.7, 0).unwrap()).unwrap();
        assert_eq!((s.train.positive_count(), s.train.negative_count()), (7, 7));
        assert_eq!((s.test.positive_count(), s.test.negative_count()), (3, 3));

        let s = split(&toy(30, 180), SplitSpec::new(0.7, 4).unwrap()).unwrap();
        assert_eq!((s.train.positive_count(), s.train.negative_count()), (21, 126));
    }

    #[test]
    fn split_is_deterministic() {
        let ds = toy(10, 10);
        let a = split(&ds, SplitSpec::new(0.7, 9).unwrap()).unwrap();
        let b = split(&ds, SplitSpec::new(0.7, 9).unwrap()).unwrap();
        assert_eq!(a.train_indices, b.train_indices);
        assert_eq!(a.test_indices, b.test_indices);
    }

    #[test]
    fn split_rejects_degenerate_strata() {
        let ds = toy(2, 1);
        assert!(split(&ds, SplitSpec::new(0.5, 0).unwrap()).is_err());
        assert!(SplitSpec::new(1.0, 0).is_err());
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(train_count(0.5, 3), 2);
        assert_eq!(train_count(0.7, 10), 7);
        assert_eq!(train_count(0.7, 30), 21);
        assert_eq!(train_count(0.7, 180), 126);
    }

    #[test]
    fn folds_partition_and_stratify() {
        let ds = toy(12, 30);
        let folds = stratified_folds(ds.labels(), 5, 3);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..42).collect::<Vec<_>>());
        for f in &folds {
            let pos = f.iter().filter(|&&i| i < 12).count();
            assert!((2..=3).contains(&pos));
        }
    }

    proptest! {
        #[test]
        fn split_partitions_indices(seed in 0u64..100, which in 0usize..3, npos in 4usize..30, nneg in 3usize..60) {
            let fraction = [0.5, 0.7, 0.9][which];
            let ds = toy(npos, nneg);
            if let Ok(s) = split(&ds, SplitSpec::new(fraction, seed).unwrap()) {
                let mut all = s.train_indices.clone();
                all.extend_from_slice(&s.test_indices);
                all.sort_unstable();
                prop_assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
                prop_assert_eq!(s.train.positive_count(), train_count(fraction, npos));
                prop_assert_eq!(s.train.negative_count(), train_count(fraction, nneg));
                for (k, &i) in s.train_indices.iter().enumerate() {
                    prop_assert_eq!(s.train.data().row(k), ds.data().row(i));
                }
            }
        }
    }
}
