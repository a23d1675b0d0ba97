//! Tabular loading and preprocessing.
//!
//! Raw CSV cells are kept as typed [`Cell`]s until a [`Preprocessor`] fitted
//! on the training partition maps them to numbers: categorical tokens become
//! integer codes in first-appearance order, continuous values are
//! mean-imputed and min-max scaled into `[0, 1]`.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

/// Token that stands in for a missing categorical cell.
pub const MISSING_TOKEN: &str = "‹missing›";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Categorical,
    Continuous,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    #[default]
    Feature,
    Label,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub role: ColumnRole,
}

impl ColumnSpec {
    pub fn feature(name: impl Into<String>, kind: ColumnKind) -> Self {
        ColumnSpec {
            name: name.into(),
            kind,
            role: ColumnRole::Feature,
        }
    }

    pub fn label(name: impl Into<String>) -> Self {
        ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Categorical,
            role: ColumnRole::Label,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Cat(String),
    Missing,
}

impl Cell {
    fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

fn is_missing_marker(raw: &str) -> bool {
    raw.is_empty() || raw == "NA"
}

fn validate_schema(columns: &[ColumnSpec]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for c in columns {
        if !seen.insert(c.name.as_str()) {
            return Err(Error::Schema(format!("duplicate column name '{}'", c.name)));
        }
    }
    let labels = columns.iter().filter(|c| c.role == ColumnRole::Label).count();
    if labels > 1 {
        return Err(Error::Schema(format!("{labels} label columns, expected at most one")));
    }
    Ok(())
}

/// Rows of typed cells under a fixed column schema.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    columns: Vec<ColumnSpec>,
    rows: Vec<Vec<Cell>>,
}

impl Dataset {
    pub fn new(columns: Vec<ColumnSpec>, rows: Vec<Vec<Cell>>) -> Result<Self> {
        validate_schema(&columns)?;
        for (i, r) in rows.iter().enumerate() {
            if r.len() != columns.len() {
                return Err(Error::MalformedRow {
                    row: i,
                    msg: format!("{} cells, expected {}", r.len(), columns.len()),
                });
            }
        }
        Ok(Dataset { columns, rows })
    }

    /// Builds a numeric dataset from a feature matrix and optional label codes.
    pub fn from_matrix(
        feature_columns: &[ColumnSpec],
        features: &Array2<f64>,
        labels: Option<(&str, &[usize])>,
    ) -> Result<Self> {
        if features.ncols() != feature_columns.len() {
            return Err(Error::Shape(format!(
                "{} feature columns but matrix has {}",
                feature_columns.len(),
                features.ncols()
            )));
        }
        let mut columns = feature_columns.to_vec();
        if let Some((name, y)) = labels {
            if y.len() != features.nrows() {
                return Err(Error::Shape(format!(
                    "{} labels for {} rows",
                    y.len(),
                    features.nrows()
                )));
            }
            columns.push(ColumnSpec::label(name));
        }
        let rows = features
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let mut cells: Vec<Cell> = r.iter().map(|&v| Cell::Num(v)).collect();
                if let Some((_, y)) = labels {
                    cells.push(Cell::Num(y[i] as f64));
                }
                cells
            })
            .collect();
        Dataset::new(columns, rows)
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Number of feature columns.
    pub fn d(&self) -> usize {
        self.columns.iter().filter(|c| c.role == ColumnRole::Feature).count()
    }

    pub fn label_index(&self) -> Option<usize> {
        self.columns.iter().position(|c| c.role == ColumnRole::Label)
    }

    pub fn feature_indices(&self) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&i| self.columns[i].role == ColumnRole::Feature)
            .collect()
    }

    pub fn feature_columns(&self) -> Vec<ColumnSpec> {
        self.columns
            .iter()
            .filter(|c| c.role == ColumnRole::Feature)
            .cloned()
            .collect()
    }

    pub fn feature_kinds(&self) -> Vec<ColumnKind> {
        self.feature_columns().iter().map(|c| c.kind).collect()
    }

    /// Feature cells as a dense matrix; every feature cell must be numeric.
    pub fn feature_matrix(&self) -> Result<Array2<f64>> {
        let idx = self.feature_indices();
        let mut out = Array2::zeros((self.n(), idx.len()));
        for (i, row) in self.rows.iter().enumerate() {
            for (j, &c) in idx.iter().enumerate() {
                match &row[c] {
                    Cell::Num(v) => out[[i, j]] = *v,
                    other => {
                        return Err(Error::MalformedRow {
                            row: i,
                            msg: format!("column '{}' is not numeric: {other:?}", self.columns[c].name),
                        })
                    }
                }
            }
        }
        Ok(out)
    }

    /// Integer label codes of a preprocessed dataset.
    pub fn labels(&self) -> Result<Vec<usize>> {
        let li = self
            .label_index()
            .ok_or_else(|| Error::Schema("dataset has no label column".into()))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| match &r[li] {
                Cell::Num(v) if *v >= 0.0 && v.fract() == 0.0 => Ok(*v as usize),
                Cell::Cat(t) => t.parse::<usize>().map_err(|_| Error::MalformedRow {
                    row: i,
                    msg: format!("label '{t}' is not an integer code"),
                }),
                other => Err(Error::MalformedRow {
                    row: i,
                    msg: format!("label cell {other:?} is not an integer code"),
                }),
            })
            .collect()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            columns: self.columns.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Drops the label column, if any.
    pub fn without_label(&self) -> Dataset {
        let idx = self.feature_indices();
        Dataset {
            columns: self.feature_columns(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
                .collect(),
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        for r in &self.rows {
            w.write_record(r.iter().map(|c| match c {
                Cell::Num(v) => format!("{v}"),
                Cell::Cat(t) => t.clone(),
                Cell::Missing => String::new(),
            }))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Reads a CSV file whose header names exactly the schema's columns.
///
/// Columns are reordered to schema order. `""` and `"NA"` are missing.
/// Continuous cells must parse as reals; categorical and label cells are
/// kept as raw tokens.
pub fn load_csv(path: impl AsRef<Path>, schema: &[ColumnSpec]) -> Result<Dataset> {
    let path = path.as_ref();
    validate_schema(schema)?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let header = rdr.headers()?.clone();

    let mut positions = Vec::with_capacity(schema.len());
    for h in header.iter() {
        if !schema.iter().any(|c| c.name == h) {
            return Err(Error::Schema(format!("unknown column '{h}' in {}", path.display())));
        }
    }
    for c in schema {
        let pos = header
            .iter()
            .position(|h| h == c.name)
            .ok_or_else(|| Error::Schema(format!("column '{}' missing from {}", c.name, path.display())))?;
        positions.push(pos);
    }

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::MalformedRow {
                row: i,
                msg: format!("{} fields, header has {}", rec.len(), header.len()),
            });
        }
        let mut cells = Vec::with_capacity(schema.len());
        for (spec, &pos) in schema.iter().zip(&positions) {
            let raw = rec[pos].trim();
            let cell = if is_missing_marker(raw) {
                Cell::Missing
            } else if spec.role == ColumnRole::Feature && spec.kind == ColumnKind::Continuous {
                let v: f64 = raw.parse().map_err(|_| Error::MalformedRow {
                    row: i,
                    msg: format!("'{raw}' in continuous column '{}' is not a number", spec.name),
                })?;
                Cell::Num(v)
            } else {
                Cell::Cat(raw.to_string())
            };
            cells.push(cell);
        }
        rows.push(cells);
    }
    Dataset::new(schema.to_vec(), rows)
}

/// Reads a CSV produced by [`Dataset::write_csv`] after preprocessing:
/// every feature cell and the label cell (if present) are numeric.
pub fn load_numeric_csv(path: impl AsRef<Path>, schema: &[ColumnSpec]) -> Result<Dataset> {
    let raw = load_csv(path, schema)?;
    let rows = raw
        .rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.into_iter()
                .map(|c| match c {
                    Cell::Cat(t) => t.parse::<f64>().map(Cell::Num).map_err(|_| Error::MalformedRow {
                        row: i,
                        msg: format!("'{t}' is not numeric"),
                    }),
                    Cell::Missing => Err(Error::MalformedRow {
                        row: i,
                        msg: "missing cell in preprocessed file".into(),
                    }),
                    c => Ok(c),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(raw.columns, rows)
}

/// Statistics fitted on a training partition and applied everywhere else.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub columns: Vec<ColumnSpec>,
    /// Per categorical feature: token to code, codes assigned in
    /// first-appearance order.
    pub categorical_maps: BTreeMap<String, BTreeMap<String, usize>>,
    pub minmax: BTreeMap<String, (f64, f64)>,
    pub means: BTreeMap<String, f64>,
    /// Label token to class index, first-appearance order.
    #[serde(default)]
    pub label_map: BTreeMap<String, usize>,
}

fn first_appearance_codes<'a>(tokens: impl Iterator<Item = &'a str>) -> BTreeMap<String, usize> {
    let mut map = BTreeMap::new();
    for t in tokens {
        let next = map.len();
        map.entry(t.to_string()).or_insert(next);
    }
    map
}

fn cat_token(cell: &Cell) -> &str {
    match cell {
        Cell::Cat(t) => t,
        Cell::Missing => MISSING_TOKEN,
        // Numeric tokens only occur when a caller hands us a mixed dataset.
        Cell::Num(_) => "",
    }
}

impl Preprocessor {
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.n() == 0 {
            return Err(Error::Empty("cannot fit a preprocessor on an empty dataset".into()));
        }
        let mut p = Preprocessor {
            columns: train.columns.clone(),
            categorical_maps: BTreeMap::new(),
            minmax: BTreeMap::new(),
            means: BTreeMap::new(),
            label_map: BTreeMap::new(),
        };
        for (j, col) in train.columns.iter().enumerate() {
            let cells = train.rows.iter().map(|r| &r[j]);
            match (col.role, col.kind) {
                (ColumnRole::Label, _) => {
                    if train.rows.iter().any(|r| r[j].is_missing()) {
                        return Err(Error::Schema(format!("label column '{}' has missing cells", col.name)));
                    }
                    p.label_map = first_appearance_codes(cells.map(label_token));
                }
                (ColumnRole::Feature, ColumnKind::Categorical) => {
                    p.categorical_maps
                        .insert(col.name.clone(), first_appearance_codes(cells.map(cat_token)));
                }
                (ColumnRole::Feature, ColumnKind::Continuous) => {
                    let present: Vec<f64> = cells
                        .filter_map(|c| match c {
                            Cell::Num(v) => Some(*v),
                            _ => None,
                        })
                        .collect();
                    if present.is_empty() {
                        return Err(Error::Degenerate(format!("column '{}' is entirely missing", col.name)));
                    }
                    let min = present.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if max == min {
                        return Err(Error::Degenerate(format!(
                            "continuous column '{}' is constant ({min})",
                            col.name
                        )));
                    }
                    let mean = present.iter().sum::<f64>() / present.len() as f64;
                    p.minmax.insert(col.name.clone(), (min, max));
                    p.means.insert(col.name.clone(), mean);
                }
            }
        }
        Ok(p)
    }

    pub fn n_classes(&self) -> usize {
        self.label_map.len()
    }

    /// Label tokens indexed by class code.
    pub fn class_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.label_map.len()];
        for (t, &c) in &self.label_map {
            names[c] = t.clone();
        }
        names
    }

    /// Maps every cell to a number. Unseen categorical tokens receive the
    /// code one past the fitted range.
    pub fn transform(&self, ds: &Dataset) -> Result<Dataset> {
        let names = |cs: &[ColumnSpec]| cs.iter().map(|c| c.name.clone()).collect::<Vec<_>>();
        let (mine, theirs) = (names(&self.columns), names(&ds.columns));
        let label_optional = {
            // Unlabeled data (e.g. a seed set) may omit the label column.
            let mine_features: Vec<_> = self
                .columns
                .iter()
                .filter(|c| c.role == ColumnRole::Feature)
                .map(|c| c.name.clone())
                .collect();
            theirs == mine_features
        };
        if mine != theirs && !label_optional {
            return Err(Error::Schema(format!(
                "dataset columns {theirs:?} do not match preprocessor columns {mine:?}"
            )));
        }

        let mut rows = Vec::with_capacity(ds.n());
        for (i, r) in ds.rows.iter().enumerate() {
            let mut out = Vec::with_capacity(r.len());
            for (col, cell) in ds.columns.iter().zip(r) {
                let v = match (col.role, col.kind) {
                    (ColumnRole::Label, _) => {
                        let tok = label_token(cell);
                        *self.label_map.get(tok).ok_or_else(|| Error::MalformedRow {
                            row: i,
                            msg: format!("unseen label '{tok}'"),
                        })? as f64
                    }
                    (ColumnRole::Feature, ColumnKind::Categorical) => {
                        let map = &self.categorical_maps[&col.name];
                        map.get(cat_token(cell)).copied().unwrap_or(map.len()) as f64
                    }
                    (ColumnRole::Feature, ColumnKind::Continuous) => {
                        let (min, max) = self.minmax[&col.name];
                        let x = match cell {
                            Cell::Num(v) => *v,
                            Cell::Missing => self.means[&col.name],
                            Cell::Cat(t) => {
                                return Err(Error::MalformedRow {
                                    row: i,
                                    msg: format!("'{t}' in continuous column '{}'", col.name),
                                })
                            }
                        };
                        ((x - min) / (max - min)).clamp(0.0, 1.0)
                    }
                };
                out.push(Cell::Num(v));
            }
            rows.push(out);
        }
        Ok(Dataset {
            columns: ds.columns.clone(),
            rows,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn label_token(cell: &Cell) -> &str {
    match cell {
        Cell::Cat(t) => t,
        _ => MISSING_TOKEN,
    }
}

/// Seeded disjoint train/test partition. Rows keep their original relative
/// order inside each partition.
pub fn split(ds: &Dataset, fractions: (f64, f64), seed: u64) -> Result<(Dataset, Dataset)> {
    let (tr, te) = fractions;
    if !(tr >= 0.0 && te >= 0.0) || (tr + te - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParam(format!(
            "split fractions ({tr}, {te}) must be nonnegative and sum to 1"
        )));
    }
    let n = ds.n();
    let n_train = (n as f64 * tr).round() as usize;
    if n_train == 0 {
        return Err(Error::Empty("train partition would be empty".into()));
    }
    if n_train >= n {
        return Err(Error::Empty("test partition would be empty".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut util::rng(seed));
    let (a, b) = idx.split_at_mut(n_train);
    a.sort_unstable();
    b.sort_unstable();
    Ok((ds.select(a), ds.select(b)))
}
