//! Tabular heart-disease records: parsing, imputation, redundancy removal,
//! chest-pain stratification, min-max scaling and stratified k-fold splits.
//!
//! The input format is the 14-column UCI projection (13 predictors followed
//! by the `num` diagnosis), comma separated, with `?` or an empty cell marking
//! a missing value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the 13 predictor attributes, in canonical column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Age,
    Sex,
    Cp,
    Trestbps,
    Chol,
    Fbs,
    Restecg,
    Thalach,
    Exang,
    Oldpeak,
    Slope,
    Ca,
    Thal,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AttributeKind {
    Numeric,
    Categorical(&'static [f64]),
}

impl Attribute {
    pub const ALL: [Attribute; 13] = [
        Attribute::Age,
        Attribute::Sex,
        Attribute::Cp,
        Attribute::Trestbps,
        Attribute::Chol,
        Attribute::Fbs,
        Attribute::Restecg,
        Attribute::Thalach,
        Attribute::Exang,
        Attribute::Oldpeak,
        Attribute::Slope,
        Attribute::Ca,
        Attribute::Thal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Age => "age",
            Attribute::Sex => "sex",
            Attribute::Cp => "cp",
            Attribute::Trestbps => "trestbps",
            Attribute::Chol => "chol",
            Attribute::Fbs => "fbs",
            Attribute::Restecg => "restecg",
            Attribute::Thalach => "thalach",
            Attribute::Exang => "exang",
            Attribute::Oldpeak => "oldpeak",
            Attribute::Slope => "slope",
            Attribute::Ca => "ca",
            Attribute::Thal => "thal",
        }
    }

    pub fn from_name(name: &str) -> Option<Attribute> {
        let lower = name.trim().to_ascii_lowercase();
        Attribute::ALL.into_iter().find(|a| a.name() == lower)
    }

    pub fn kind(self) -> AttributeKind {
        use AttributeKind::*;
        match self {
            Attribute::Age | Attribute::Trestbps | Attribute::Chol | Attribute::Thalach | Attribute::Oldpeak => Numeric,
            Attribute::Sex | Attribute::Fbs | Attribute::Exang => Categorical(&[0.0, 1.0]),
            Attribute::Cp => Categorical(&[1.0, 2.0, 3.0, 4.0]),
            Attribute::Restecg => Categorical(&[0.0, 1.0, 2.0]),
            Attribute::Slope => Categorical(&[1.0, 2.0, 3.0]),
            Attribute::Ca => Categorical(&[0.0, 1.0, 2.0, 3.0]),
            Attribute::Thal => Categorical(&[3.0, 6.0, 7.0]),
        }
    }

    pub fn is_categorical(self) -> bool {
        matches!(self.kind(), AttributeKind::Categorical(_))
    }

    /// Checks a present value against the attribute's domain.
    pub fn accepts(self, value: f64) -> bool {
        match self.kind() {
            AttributeKind::Numeric => value.is_finite() && value >= 0.0,
            AttributeKind::Categorical(domain) => domain.contains(&value),
        }
    }
}

impl std::fmt::Display for Attribute {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Diagnosis collapsed to absence (0) or presence (1) of disease.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinaryLabel {
    Normal,
    Abnormal,
}

impl BinaryLabel {
    pub fn value(self) -> u8 {
        match self {
            BinaryLabel::Normal => 0,
            BinaryLabel::Abnormal => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.value())
    }
}

impl From<bool> for BinaryLabel {
    fn from(abnormal: bool) -> Self {
        if abnormal {
            BinaryLabel::Abnormal
        } else {
            BinaryLabel::Normal
        }
    }
}

/// Maps the 0..=4 diagnosis to a binary label; any presence grade is abnormal.
pub fn binarize_label(num: u8) -> Result<BinaryLabel> {
    match num {
        0 => Ok(BinaryLabel::Normal),
        1..=4 => Ok(BinaryLabel::Abnormal),
        _ => Err(Error::invalid(format!("diagnosis num {num} outside 0..=4"))),
    }
}

/// One patient row. `values` is aligned with the owning dataset's schema.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub values: Vec<Option<f64>>,
    pub num: u8,
}

impl Record {
    pub fn label(&self) -> BinaryLabel {
        BinaryLabel::from(self.num >= 1)
    }

    fn same_as(&self, other: &Record) -> bool {
        self.num == other.num
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.map(f64::to_bits) == b.map(f64::to_bits))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub schema: Vec<Attribute>,
    pub records: Vec<Record>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, schema: Vec<Attribute>) -> Self {
        Dataset {
            name: name.into(),
            schema,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column(&self, attr: Attribute) -> Option<usize> {
        self.schema.iter().position(|&a| a == attr)
    }

    pub fn value(&self, row: usize, attr: Attribute) -> Option<f64> {
        let col = self.column(attr)?;
        self.records.get(row)?.values[col]
    }

    pub fn labels(&self) -> Vec<BinaryLabel> {
        self.records.iter().map(Record::label).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.values.iter().filter(|v| v.is_none()).count())
            .sum()
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            schema: self.schema.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// Appends a record after checking it against the schema.
    pub fn push(&mut self, record: Record) -> Result<()> {
        if record.values.len() != self.schema.len() {
            return Err(Error::DimensionMismatch {
                expected: self.schema.len(),
                actual: record.values.len(),
            });
        }
        for (attr, v) in self.schema.iter().zip(&record.values) {
            if let Some(v) = v {
                if !attr.accepts(*v) {
                    return Err(Error::OutOfDomain {
                        line: self.records.len() + 1,
                        attribute: attr.name().into(),
                        value: v.to_string(),
                    });
                }
            }
        }
        binarize_label(record.num)?;
        self.records.push(record);
        Ok(())
    }
}

fn is_missing_token(tok: &str) -> bool {
    tok.is_empty() || tok == "?"
}

/// Parses CSV text whose predictor columns follow `schema`, with `num` last.
pub fn parse_csv_str(text: &str, schema: &[Attribute], name: &str) -> Result<Dataset> {
    let mut ds = Dataset::new(name, schema.to_vec());
    let arity = schema.len() + 1;
    let mut first = true;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if first {
            first = false;
            let head = fields[0];
            if !is_missing_token(head) && head.parse::<f64>().is_err() {
                check_header(&fields, schema, line_no)?;
                continue;
            }
        }
        if fields.len() != arity {
            return Err(Error::Malformed {
                line: line_no,
                message: format!("expected {arity} columns, found {}", fields.len()),
            });
        }
        let mut values = Vec::with_capacity(schema.len());
        for (&attr, tok) in schema.iter().zip(&fields) {
            if is_missing_token(tok) {
                values.push(None);
                continue;
            }
            let v = parse_number(tok, line_no)?;
            if !attr.accepts(v) {
                return Err(Error::OutOfDomain {
                    line: line_no,
                    attribute: attr.name().into(),
                    value: (*tok).into(),
                });
            }
            values.push(Some(v));
        }
        let num_tok = fields[schema.len()];
        if is_missing_token(num_tok) {
            return Err(Error::Malformed {
                line: line_no,
                message: "diagnosis `num` is missing".into(),
            });
        }
        let num_val = parse_number(num_tok, line_no)?;
        if num_val.fract() != 0.0 || !(0.0..=4.0).contains(&num_val) {
            return Err(Error::OutOfDomain {
                line: line_no,
                attribute: "num".into(),
                value: num_tok.into(),
            });
        }
        ds.records.push(Record {
            values,
            num: num_val as u8,
        });
    }
    Ok(ds)
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    match tok.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Malformed {
            line,
            message: format!("non-numeric token `{tok}`"),
        }),
    }
}

fn check_header(fields: &[&str], schema: &[Attribute], line: usize) -> Result<()> {
    let expected: Vec<&str> = schema.iter().map(|a| a.name()).chain(std::iter::once("num")).collect();
    let matches =
        fields.len() == expected.len() && fields.iter().zip(&expected).all(|(f, e)| f.eq_ignore_ascii_case(e));
    if matches {
        Ok(())
    } else {
        Err(Error::Malformed {
            line,
            message: format!("header `{}` does not match `{}`", fields.join(","), expected.join(",")),
        })
    }
}

/// Reads a CSV file. A header row, when present, must name the schema columns.
pub fn parse_csv(path: impl AsRef<Path>, schema: &[Attribute]) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv_str(&text, schema, &name)
}

/// Reads a CSV whose header names the predictor columns (any subset of the
/// 13 attributes, canonical order, `num` last).
pub fn parse_csv_with_header(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let schema = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .and_then(|l| {
            let cols: Vec<&str> = l.split(',').map(str::trim).collect();
            let (last, preds) = cols.split_last()?;
            if !last.eq_ignore_ascii_case("num") {
                return None;
            }
            preds
                .iter()
                .map(|c| Attribute::from_name(c))
                .collect::<Option<Vec<_>>>()
        })
        .unwrap_or_else(|| Attribute::ALL.to_vec());
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv_str(&text, &schema, &name)
}

/// Serializes with a header row; missing cells are written as `?`.
pub fn write_csv(ds: &Dataset) -> String {
    let mut out = String::new();
    for a in &ds.schema {
        out.push_str(a.name());
        out.push(',');
    }
    out.push_str("num\n");
    for r in &ds.records {
        for v in &r.values {
            match v {
                Some(v) => write!(out, "{v},").unwrap(),
                None => out.push_str("?,"),
            }
        }
        writeln!(out, "{}", r.num).unwrap();
    }
    out
}

const IMPUTE_ANCHORS: [Attribute; 3] = [Attribute::Age, Attribute::Chol, Attribute::Trestbps];

/// Fills every missing cell from the `k` nearest rows in scaled
/// (age, chol, trestbps) space that have the attribute present: mode for
/// categorical attributes, lower median for numeric ones.
///
/// Only originally present values are used as donors, so the result does not
/// depend on the order in which cells are filled.
pub fn impute_missing(ds: &Dataset, k: usize) -> Result<Dataset> {
    if k == 0 {
        return Err(Error::invalid("imputation needs k >= 1"));
    }
    if ds.missing_count() == 0 {
        return Ok(ds.clone());
    }
    for (col, attr) in ds.schema.iter().enumerate() {
        if ds.records.iter().all(|r| r.values[col].is_none()) {
            return Err(Error::AllMissing(attr.name().into()));
        }
    }

    // Anchor columns with their observed range, for scaling distances.
    let anchors: Vec<(usize, f64, f64)> = IMPUTE_ANCHORS
        .iter()
        .filter_map(|&a| {
            let col = ds.column(a)?;
            let (lo, hi) = ds
                .records
                .iter()
                .filter_map(|r| r.values[col])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            Some((col, lo, hi))
        })
        .collect();

    let distance = |a: &Record, b: &Record| -> f64 {
        anchors
            .iter()
            .map(|&(col, lo, hi)| match (a.values[col], b.values[col]) {
                (Some(x), Some(y)) => {
                    let span = hi - lo;
                    let d = if span > 0.0 { (x - y) / span } else { 0.0 };
                    d * d
                }
                _ => 1.0,
            })
            .sum::<f64>()
            .sqrt()
    };

    let mut out = ds.clone();
    for (row, rec) in ds.records.iter().enumerate() {
        for (col, attr) in ds.schema.iter().enumerate() {
            if rec.values[col].is_some() {
                continue;
            }
            let mut donors: Vec<(f64, usize)> = ds
                .records
                .iter()
                .enumerate()
                .filter(|(i, r)| *i != row && r.values[col].is_some())
                .map(|(i, r)| (distance(rec, r), i))
                .collect();
            donors.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut picked: Vec<f64> = donors
                .iter()
                .take(k)
                .map(|&(_, i)| ds.records[i].values[col].unwrap())
                .collect();
            let fill = if attr.is_categorical() {
                mode(&picked)
            } else {
                lower_median(&mut picked)
            };
            out.records[row].values[col] = Some(fill);
        }
    }
    Ok(out)
}

fn mode(values: &[f64]) -> f64 {
    let mut counts: BTreeMap<u64, (usize, f64)> = BTreeMap::new();
    for &v in values {
        counts.entry(v.to_bits()).or_insert((0, v)).0 += 1;
    }
    counts
        .values()
        .fold(None::<(usize, f64)>, |best, &(c, v)| match best {
            Some((bc, bv)) if bc > c || (bc == c && bv <= v) => Some((bc, bv)),
            _ => Some((c, v)),
        })
        .map(|(_, v)| v)
        .unwrap_or(f64::NAN)
}

fn lower_median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

/// What [`remove_redundancy`] dropped.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RedundancyReport {
    /// Zero-based row indices (in the input) removed as exact duplicates.
    pub duplicate_rows: Vec<usize>,
    pub constant_attributes: Vec<Attribute>,
}

/// Drops exact duplicate rows (first occurrence kept) and attributes that
/// take a single value across all rows.
pub fn remove_redundancy(ds: &Dataset) -> (Dataset, RedundancyReport) {
    let mut report = RedundancyReport::default();
    let mut kept: Vec<Record> = Vec::with_capacity(ds.len());
    for (i, r) in ds.records.iter().enumerate() {
        if kept.iter().any(|k| k.same_as(r)) {
            report.duplicate_rows.push(i);
        } else {
            kept.push(r.clone());
        }
    }

    let mut keep_cols = Vec::with_capacity(ds.schema.len());
    for (col, &attr) in ds.schema.iter().enumerate() {
        let constant = kept.len() >= 2
            && kept
                .iter()
                .all(|r| r.values[col].map(f64::to_bits) == kept[0].values[col].map(f64::to_bits));
        if constant {
            report.constant_attributes.push(attr);
        } else {
            keep_cols.push(col);
        }
    }

    let out = Dataset {
        name: ds.name.clone(),
        schema: keep_cols.iter().map(|&c| ds.schema[c]).collect(),
        records: kept
            .into_iter()
            .map(|r| Record {
                values: keep_cols.iter().map(|&c| r.values[c]).collect(),
                num: r.num,
            })
            .collect(),
    };
    (out, report)
}

/// Partitions records by chest-pain type; always yields keys 1..=4.
pub fn stratify_by_chest_pain(ds: &Dataset) -> Result<BTreeMap<u8, Dataset>> {
    let mut parts: BTreeMap<u8, Dataset> = (1..=4u8)
        .map(|cp| (cp, Dataset::new(ds.name.clone(), ds.schema.clone())))
        .collect();
    if ds.is_empty() {
        return Ok(parts);
    }
    let col = ds
        .column(Attribute::Cp)
        .ok_or_else(|| Error::invalid("dataset has no `cp` column"))?;
    for (i, r) in ds.records.iter().enumerate() {
        let cp = r.values[col].ok_or_else(|| Error::invalid(format!("row {i}: `cp` is missing")))?;
        parts.get_mut(&(cp as u8)).unwrap().records.push(r.clone());
    }
    Ok(parts)
}

/// Per-attribute scaling ranges. Categorical attributes use `(0, domain max)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxTable {
    pub entries: Vec<MinMaxEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxEntry {
    pub attribute: Attribute,
    pub min: f64,
    pub max: f64,
}

impl MinMaxEntry {
    /// Scales into [0,1], clamping values outside the fitted range.
    pub fn scale(&self, x: f64) -> f64 {
        let span = self.max - self.min;
        if span > 0.0 {
            ((x - self.min) / span).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

impl MinMaxTable {
    pub fn fit(ds: &Dataset) -> Result<MinMaxTable> {
        let mut entries = Vec::with_capacity(ds.schema.len());
        for (col, &attr) in ds.schema.iter().enumerate() {
            let entry = match attr.kind() {
                AttributeKind::Categorical(domain) => MinMaxEntry {
                    attribute: attr,
                    min: 0.0,
                    max: domain.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                },
                AttributeKind::Numeric => {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for r in &ds.records {
                        let v = r.values[col]
                            .ok_or_else(|| Error::invalid(format!("cannot scale: `{attr}` has missing values")))?;
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                    if ds.is_empty() {
                        (lo, hi) = (0.0, 0.0);
                    }
                    MinMaxEntry {
                        attribute: attr,
                        min: lo,
                        max: hi,
                    }
                }
            };
            entries.push(entry);
        }
        Ok(MinMaxTable { entries })
    }

    pub fn get(&self, attr: Attribute) -> Option<&MinMaxEntry> {
        self.entries.iter().find(|e| e.attribute == attr)
    }

    /// Scales the `attrs` columns of `ds` (a subset of its schema) row by row.
    pub fn transform(&self, ds: &Dataset, attrs: &[Attribute]) -> Result<Vec<Vec<f64>>> {
        let cols: Vec<(usize, &MinMaxEntry)> = attrs
            .iter()
            .map(|&a| {
                let col = ds
                    .column(a)
                    .ok_or_else(|| Error::invalid(format!("dataset has no `{a}` column")))?;
                let entry = self
                    .get(a)
                    .ok_or_else(|| Error::invalid(format!("no scaling range for `{a}`")))?;
                Ok((col, entry))
            })
            .collect::<Result<_>>()?;
        ds.records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                cols.iter()
                    .map(|&(col, e)| {
                        r.values[col]
                            .map(|v| e.scale(v))
                            .ok_or_else(|| Error::invalid(format!("row {i}: `{}` is missing", e.attribute)))
                    })
                    .collect()
            })
            .collect()
    }
}

/// Scaled feature matrix with binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedData {
    pub attributes: Vec<Attribute>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<BinaryLabel>,
}

/// Fits a [`MinMaxTable`] on `ds` and scales every predictor into [0,1].
pub fn normalize_minmax(ds: &Dataset) -> Result<(NormalizedData, MinMaxTable)> {
    let table = MinMaxTable::fit(ds)?;
    let features = table.transform(ds, &ds.schema)?;
    Ok((
        NormalizedData {
            attributes: ds.schema.clone(),
            features,
            labels: ds.labels(),
        },
        table,
    ))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Label-stratified k-fold partition of row indices, deterministic in `seed`.
///
/// Each class is shuffled, the classes are concatenated and rows are dealt to
/// folds round-robin, so fold sizes differ by at most one and each class is
/// spread as evenly as possible.
pub fn kfold_indices(labels: &[BinaryLabel], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::invalid("k-fold needs k >= 2"));
    }
    if k > labels.len() {
        return Err(Error::invalid(format!(
            "cannot split {} records into {k} folds",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(labels.len());
    for class in [BinaryLabel::Normal, BinaryLabel::Abnormal] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        order.extend(idx);
    }
    let mut tests = vec![Vec::new(); k];
    for (pos, i) in order.into_iter().enumerate() {
        tests[pos % k].push(i);
    }
    Ok(tests
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let train = (0..labels.len()).filter(|i| test.binary_search(i).is_err()).collect();
            Fold { train, test }
        })
        .collect())
}

pub fn kfold_split(ds: &Dataset, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    Ok(kfold_indices(&ds.labels(), k, seed)?
        .into_iter()
        .map(|f| (ds.subset(&f.train), ds.subset(&f.test)))
        .collect())
}

/// Counts produced by [`preprocess`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub input_rows: usize,
    pub imputed_cells: BTreeMap<Attribute, usize>,
    pub redundancy: RedundancyReport,
    pub output_rows: usize,
}

impl PreprocessReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "input_rows={}", self.input_rows).unwrap();
        let total: usize = self.imputed_cells.values().sum();
        writeln!(out, "imputed_cells={total}").unwrap();
        for (a, n) in &self.imputed_cells {
            writeln!(out, "imputed.{a}={n}").unwrap();
        }
        writeln!(out, "dropped_duplicates={}", self.redundancy.duplicate_rows.len()).unwrap();
        let consts: Vec<&str> = self.redundancy.constant_attributes.iter().map(|a| a.name()).collect();
        writeln!(out, "dropped_constants={}", consts.len()).unwrap();
        if !consts.is_empty() {
            writeln!(out, "dropped_constant_attributes={}", consts.join(",")).unwrap();
        }
        writeln!(out, "output_rows={}", self.output_rows).unwrap();
        out
    }
}

/// Imputation followed by redundancy removal.
pub fn preprocess(ds: &Dataset, k: usize) -> Result<(Dataset, PreprocessReport)> {
    let mut report = PreprocessReport {
        input_rows: ds.len(),
        ..Default::default()
    };
    for (col, &attr) in ds.schema.iter().enumerate() {
        let n = ds.records.iter().filter(|r| r.values[col].is_none()).count();
        if n > 0 {
            report.imputed_cells.insert(attr, n);
        }
    }
    let imputed = impute_missing(ds, k)?;
    let (clean, redundancy) = remove_redundancy(&imputed);
    report.redundancy = redundancy;
    report.output_rows = clean.len();
    Ok((clean, report))
}
