//! Column-typed tabular data shared by every other module.
//!
//! A [`Dataset`] is immutable, column-major storage checked against a
//! [`Schema`]. Categorical cells are stored as level indices; the schema is
//! the level dictionary. Domain and structural-zero problems are reported by
//! [`validate`] rather than rejected at construction, so that raw generator
//! output can be audited.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Categorical { levels: u32 },
    Count,
}

impl ColumnKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, ColumnKind::Categorical { .. })
    }

    pub fn levels(&self) -> Option<u32> {
        match *self {
            ColumnKind::Categorical { levels } => Some(levels),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

impl Column {
    pub fn continuous(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: ColumnKind::Continuous,
        }
    }

    pub fn categorical(name: &str, levels: u32) -> Self {
        Self {
            name: name.to_string(),
            kind: ColumnKind::Categorical { levels },
        }
    }

    pub fn count(name: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: ColumnKind::Count,
        }
    }
}

/// Whenever `row[guard_column] == guard_level`, a valid row must have
/// `row[forced_column] == forced_level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralZeroRule {
    pub guard_column: usize,
    pub guard_level: u32,
    pub forced_column: usize,
    pub forced_level: u32,
}

impl StructuralZeroRule {
    pub fn is_violated(&self, guard: u32, forced: u32) -> bool {
        guard == self.guard_level && forced != self.forced_level
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    columns: Vec<Column>,
    zero_rules: Vec<StructuralZeroRule>,
    outcome: usize,
}

impl Schema {
    pub fn new(
        columns: Vec<Column>,
        zero_rules: Vec<StructuralZeroRule>,
        outcome: usize,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name)));
            }
            if c.name.is_empty() || c.name.contains(',') {
                return Err(Error::Schema(format!("invalid column name `{}`", c.name)));
            }
            if let ColumnKind::Categorical { levels } = c.kind {
                if levels < 2 {
                    return Err(Error::Schema(format!(
                        "categorical column `{}` needs at least 2 levels",
                        c.name
                    )));
                }
            }
        }
        if outcome >= columns.len() {
            return Err(Error::Schema(format!("outcome column {outcome} out of range")));
        }
        for (i, r) in zero_rules.iter().enumerate() {
            for (col, level) in [(r.guard_column, r.guard_level), (r.forced_column, r.forced_level)] {
                let Some(c) = columns.get(col) else {
                    return Err(Error::Schema(format!("zero rule {i} references column {col}")));
                };
                match c.kind.levels() {
                    Some(l) if level < l => {}
                    Some(_) => {
                        return Err(Error::Schema(format!(
                            "zero rule {i}: level {level} out of range for `{}`",
                            c.name
                        )))
                    }
                    None => {
                        return Err(Error::Schema(format!(
                            "zero rule {i}: column `{}` is not categorical",
                            c.name
                        )))
                    }
                }
            }
            if r.guard_column == r.forced_column {
                return Err(Error::Schema(format!("zero rule {i} guards its own column")));
            }
        }
        Ok(Self {
            columns,
            zero_rules,
            outcome,
        })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, i: usize) -> &Column {
        &self.columns[i]
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn zero_rules(&self) -> &[StructuralZeroRule] {
        &self.zero_rules
    }

    pub fn outcome(&self) -> usize {
        self.outcome
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Parses the declarative schema text format (TOML).
    pub fn from_text(text: &str) -> Result<Self> {
        let file: SchemaFile = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        file.into_schema()
    }

    pub fn to_text(&self) -> String {
        let file = SchemaFile::from_schema(self);
        toml::to_string(&file).expect("schema serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    outcome: String,
    #[serde(rename = "column")]
    columns: Vec<Column>,
    #[serde(rename = "zero_rule", default, skip_serializing_if = "Vec::is_empty")]
    zero_rules: Vec<ZeroRuleEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZeroRuleEntry {
    guard: String,
    guard_level: u32,
    forced: String,
    forced_level: u32,
}

impl SchemaFile {
    fn into_schema(self) -> Result<Schema> {
        let lookup = |name: &str| {
            self.columns
                .iter()
                .position(|c| c.name == name)
                .ok_or_else(|| Error::Schema(format!("unknown column `{name}`")))
        };
        let outcome = lookup(&self.outcome)?;
        let rules = self
            .zero_rules
            .iter()
            .map(|r| {
                Ok(StructuralZeroRule {
                    guard_column: lookup(&r.guard)?,
                    guard_level: r.guard_level,
                    forced_column: lookup(&r.forced)?,
                    forced_level: r.forced_level,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Schema::new(self.columns, rules, outcome)
    }

    fn from_schema(s: &Schema) -> Self {
        let name = |i: usize| s.columns[i].name.clone();
        Self {
            outcome: name(s.outcome),
            columns: s.columns.clone(),
            zero_rules: s
                .zero_rules
                .iter()
                .map(|r| ZeroRuleEntry {
                    guard: name(r.guard_column),
                    guard_level: r.guard_level,
                    forced: name(r.forced_column),
                    forced_level: r.forced_level,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnData {
    Real(Vec<f64>),
    Level(Vec<u32>),
    Count(Vec<u64>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Real(v) => v.len(),
            ColumnData::Level(v) => v.len(),
            ColumnData::Count(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, row: usize) -> f64 {
        match self {
            ColumnData::Real(v) => v[row],
            ColumnData::Level(v) => f64::from(v[row]),
            ColumnData::Count(v) => v[row] as f64,
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            ColumnData::Real(v) => v.clone(),
            ColumnData::Level(v) => v.iter().map(|&x| f64::from(x)).collect(),
            ColumnData::Count(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    fn matches(&self, kind: ColumnKind) -> bool {
        matches!(
            (self, kind),
            (ColumnData::Real(_), ColumnKind::Continuous)
                | (ColumnData::Level(_), ColumnKind::Categorical { .. })
                | (ColumnData::Count(_), ColumnKind::Count)
        )
    }

    fn select(&self, idx: &[usize]) -> ColumnData {
        match self {
            ColumnData::Real(v) => ColumnData::Real(idx.iter().map(|&i| v[i]).collect()),
            ColumnData::Level(v) => ColumnData::Level(idx.iter().map(|&i| v[i]).collect()),
            ColumnData::Count(v) => ColumnData::Count(idx.iter().map(|&i| v[i]).collect()),
        }
    }

    fn empty_for(kind: ColumnKind) -> ColumnData {
        match kind {
            ColumnKind::Continuous => ColumnData::Real(Vec::new()),
            ColumnKind::Categorical { .. } => ColumnData::Level(Vec::new()),
            ColumnKind::Count => ColumnData::Count(Vec::new()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Schema,
    columns: Vec<ColumnData>,
    n_rows: usize,
}

impl Dataset {
    /// Checks shape only: one column per schema entry, storage matching the
    /// column kind, equal lengths. Cell contents are checked by [`validate`].
    pub fn new(schema: Schema, columns: Vec<ColumnData>) -> Result<Self> {
        if columns.len() != schema.n_columns() {
            return Err(Error::SchemaMismatch(format!(
                "{} columns supplied for a {}-column schema",
                columns.len(),
                schema.n_columns()
            )));
        }
        let n_rows = columns.first().map_or(0, ColumnData::len);
        for (c, data) in schema.columns().iter().zip(&columns) {
            if !data.matches(c.kind) {
                return Err(Error::SchemaMismatch(format!(
                    "storage for `{}` does not match its kind",
                    c.name
                )));
            }
            if data.len() != n_rows {
                return Err(Error::SchemaMismatch(format!(
                    "column `{}` has {} rows, expected {n_rows}",
                    c.name,
                    data.len()
                )));
            }
        }
        Ok(Self {
            schema,
            columns,
            n_rows,
        })
    }

    pub fn empty(schema: Schema) -> Self {
        let columns = schema
            .columns()
            .iter()
            .map(|c| ColumnData::empty_for(c.kind))
            .collect();
        Self {
            schema,
            columns,
            n_rows: 0,
        }
    }

    /// Builds a dataset from real-valued columns, converting categorical and
    /// count columns to integers. Non-integral or negative values for those
    /// kinds are an error.
    pub fn from_f64_columns(schema: Schema, columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.len() != schema.n_columns() {
            return Err(Error::SchemaMismatch(format!(
                "{} columns supplied for a {}-column schema",
                columns.len(),
                schema.n_columns()
            )));
        }
        let mut out = Vec::with_capacity(columns.len());
        for (c, values) in schema.columns().iter().zip(columns) {
            let data = match c.kind {
                ColumnKind::Continuous => ColumnData::Real(values),
                ColumnKind::Categorical { .. } => ColumnData::Level(
                    values
                        .iter()
                        .enumerate()
                        .map(|(row, &v)| integral(v, row, &c.name).map(|x| x as u32))
                        .collect::<Result<_>>()?,
                ),
                ColumnKind::Count => ColumnData::Count(
                    values
                        .iter()
                        .enumerate()
                        .map(|(row, &v)| integral(v, row, &c.name))
                        .collect::<Result<_>>()?,
                ),
            };
            out.push(data);
        }
        Dataset::new(schema, out)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    pub fn column(&self, i: usize) -> &ColumnData {
        &self.columns[i]
    }

    pub fn columns(&self) -> &[ColumnData] {
        &self.columns
    }

    pub fn column_by_name(&self, name: &str) -> Option<&ColumnData> {
        self.schema.index_of(name).map(|i| &self.columns[i])
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col].get(row)
    }

    pub fn column_f64(&self, col: usize) -> Vec<f64> {
        self.columns[col].to_f64()
    }

    pub fn row_f64(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c.get(row)).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.select(idx)).collect(),
            n_rows: idx.len(),
        }
    }

    pub fn into_parts(self) -> (Schema, Vec<ColumnData>) {
        (self.schema, self.columns)
    }

    /// Vertically concatenates two datasets with identical schemas.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.schema != other.schema {
            return Err(Error::SchemaMismatch("cannot concatenate different schemas".into()));
        }
        let columns = self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| match (a, b) {
                (ColumnData::Real(a), ColumnData::Real(b)) => ColumnData::Real([&a[..], b].concat()),
                (ColumnData::Level(a), ColumnData::Level(b)) => {
                    ColumnData::Level([&a[..], b].concat())
                }
                (ColumnData::Count(a), ColumnData::Count(b)) => {
                    ColumnData::Count([&a[..], b].concat())
                }
                _ => unreachable!("schemas are equal"),
            })
            .collect();
        Ok(Dataset {
            schema: self.schema.clone(),
            columns,
            n_rows: self.n_rows + other.n_rows,
        })
    }
}

fn integral(v: f64, row: usize, column: &str) -> Result<u64> {
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(Error::Cell {
            row,
            column: column.to_string(),
            message: format!("expected a non-negative integer, found {v}"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationKind {
    LevelOutOfRange { column: usize },
    NonFinite { column: usize },
    StructuralZero { rule: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub row: usize,
    pub kind: ViolationKind,
}

/// Reports every domain and structural-zero violation, ordered by row.
pub fn validate(d: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    for (ci, (col, data)) in d.schema.columns().iter().zip(&d.columns).enumerate() {
        match (col.kind, data) {
            (ColumnKind::Categorical { levels }, ColumnData::Level(v)) => {
                for (row, &x) in v.iter().enumerate() {
                    if x >= levels {
                        out.push(Violation {
                            row,
                            kind: ViolationKind::LevelOutOfRange { column: ci },
                        });
                    }
                }
            }
            (ColumnKind::Continuous, ColumnData::Real(v)) => {
                for (row, x) in v.iter().enumerate() {
                    if !x.is_finite() {
                        out.push(Violation {
                            row,
                            kind: ViolationKind::NonFinite { column: ci },
                        });
                    }
                }
            }
            // u64 storage cannot go negative
            _ => {}
        }
    }
    for (ri, rule) in d.schema.zero_rules().iter().enumerate() {
        let (ColumnData::Level(guard), ColumnData::Level(forced)) =
            (&d.columns[rule.guard_column], &d.columns[rule.forced_column])
        else {
            continue;
        };
        for (row, (&g, &f)) in guard.iter().zip(forced).enumerate() {
            if rule.is_violated(g, f) {
                out.push(Violation {
                    row,
                    kind: ViolationKind::StructuralZero { rule: ri },
                });
            }
        }
    }
    out.sort();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BlockKind {
    Standardized { mean: f64, sd: f64 },
    Indicator { levels: u32 },
}

/// One schema column's slice of the encoded matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub column: usize,
    pub offset: usize,
    pub width: usize,
    pub kind: BlockKind,
}

/// Affine standardization for real-valued columns and indicator expansion
/// for categorical ones. Fit once on training data, then reused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    schema: Schema,
    blocks: Vec<Block>,
    width: usize,
}

impl Encoder {
    pub fn fit(d: &Dataset) -> Result<Self> {
        let mut blocks = Vec::with_capacity(d.schema.n_columns());
        let mut offset = 0;
        for (ci, col) in d.schema.columns().iter().enumerate() {
            let (kind, width) = match col.kind {
                ColumnKind::Categorical { levels } => (BlockKind::Indicator { levels }, levels as usize),
                ColumnKind::Continuous | ColumnKind::Count => {
                    let v = d.column_f64(ci);
                    let n = v.len() as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                    let sd = var.sqrt();
                    if !(sd > 0.0 && sd.is_finite()) {
                        return Err(Error::ZeroVariance(col.name.clone()));
                    }
                    (BlockKind::Standardized { mean, sd }, 1)
                }
            };
            blocks.push(Block {
                column: ci,
                offset,
                width,
                kind,
            });
            offset += width;
        }
        Ok(Self {
            schema: d.schema.clone(),
            blocks,
            width: offset,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn encode(&self, d: &Dataset) -> Result<Matrix> {
        if d.schema != self.schema {
            return Err(Error::SchemaMismatch("dataset schema differs from encoder".into()));
        }
        let mut m = Matrix::zeros(d.n_rows(), self.width);
        for b in &self.blocks {
            match (b.kind, &d.columns[b.column]) {
                (BlockKind::Indicator { levels }, ColumnData::Level(v)) => {
                    for (row, &x) in v.iter().enumerate() {
                        if x >= levels {
                            return Err(Error::Cell {
                                row,
                                column: self.schema.column(b.column).name.clone(),
                                message: format!("level {x} out of range 0..{levels}"),
                            });
                        }
                        m.set(row, b.offset + x as usize, 1.0);
                    }
                }
                (BlockKind::Standardized { mean, sd }, data) => {
                    for row in 0..d.n_rows() {
                        m.set(row, b.offset, (data.get(row) - mean) / sd);
                    }
                }
                _ => unreachable!("schema equality fixes the storage kind"),
            }
        }
        Ok(m)
    }

    /// Inverse of [`Encoder::encode`]. Indicator blocks decode to their
    /// argmax, so soft (probability) blocks are accepted as well. Count
    /// columns are rounded and floored at zero.
    pub fn decode(&self, m: &Matrix) -> Result<Dataset> {
        if m.cols() != self.width {
            return Err(Error::Dimension {
                expected: self.width,
                got: m.cols(),
            });
        }
        let columns = self
            .blocks
            .iter()
            .map(|b| {
                let col = &self.schema.column(b.column);
                match b.kind {
                    BlockKind::Indicator { .. } => ColumnData::Level(
                        (0..m.rows())
                            .map(|r| argmax(&m.row(r)[b.offset..b.offset + b.width]) as u32)
                            .collect(),
                    ),
                    BlockKind::Standardized { mean, sd } => {
                        let raw = (0..m.rows()).map(|r| m.get(r, b.offset) * sd + mean);
                        match col.kind {
                            ColumnKind::Count => ColumnData::Count(
                                raw.map(|x| if x.is_finite() { x.round().max(0.0) as u64 } else { 0 })
                                    .collect(),
                            ),
                            _ => ColumnData::Real(raw.collect()),
                        }
                    }
                }
            })
            .collect();
        Dataset::new(self.schema.clone(), columns)
    }
}

/// Index of the first maximal entry.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn one_hot(d: &Dataset) -> Result<(Matrix, Encoder)> {
    let enc = Encoder::fit(d)?;
    let m = enc.encode(d)?;
    Ok((m, enc))
}

pub fn read_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, schema)
}

pub fn parse_csv(text: &str, schema: &Schema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let mut position = HashMap::new();
    for (i, name) in header.iter().enumerate() {
        let Some(ci) = schema.index_of(name) else {
            return Err(Error::SchemaMismatch(format!("unknown column `{name}` in header")));
        };
        if position.insert(ci, i).is_some() {
            return Err(Error::SchemaMismatch(format!("duplicate column `{name}` in header")));
        }
    }
    for c in schema.columns() {
        if !position.contains_key(&schema.index_of(&c.name).unwrap_or(usize::MAX)) {
            return Err(Error::SchemaMismatch(format!("missing column `{}` in header", c.name)));
        }
    }
    let mut columns: Vec<ColumnData> = schema
        .columns()
        .iter()
        .map(|c| ColumnData::empty_for(c.kind))
        .collect();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for (ci, col) in schema.columns().iter().enumerate() {
            let cell = record.get(position[&ci]).unwrap_or("");
            let err = |message: String| Error::Cell {
                row: row + 1,
                column: col.name.clone(),
                message,
            };
            match &mut columns[ci] {
                ColumnData::Real(v) => {
                    let x: f64 = cell
                        .parse()
                        .map_err(|_| err(format!("non-numeric value `{cell}`")))?;
                    if !x.is_finite() {
                        return Err(err(format!("non-finite value `{cell}`")));
                    }
                    v.push(x);
                }
                ColumnData::Level(v) => {
                    let x: u32 = cell
                        .parse()
                        .map_err(|_| err(format!("expected a level index, found `{cell}`")))?;
                    let levels = col.kind.levels().unwrap_or(0);
                    if x >= levels {
                        return Err(err(format!("level {x} out of range 0..{levels}")));
                    }
                    v.push(x);
                }
                ColumnData::Count(v) => {
                    let x: u64 = cell
                        .parse()
                        .map_err(|_| err(format!("expected a non-negative integer, found `{cell}`")))?;
                    v.push(x);
                }
            }
        }
    }
    Dataset::new(schema.clone(), columns)
}

pub fn write_csv(d: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, to_csv_string(d)).map_err(|e| Error::io(path, e))
}

pub fn to_csv_string(d: &Dataset) -> String {
    let mut out = String::new();
    let names: Vec<&str> = d.schema.columns().iter().map(|c| c.name.as_str()).collect();
    out.push_str(&names.join(","));
    out.push('\n');
    for row in 0..d.n_rows {
        for (ci, c) in d.columns.iter().enumerate() {
            if ci > 0 {
                out.push(',');
            }
            match c {
                // `{}` on f64 is the shortest representation that round-trips
                ColumnData::Real(v) => out.push_str(&format!("{}", v[row])),
                ColumnData::Level(v) => out.push_str(&v[row].to_string()),
                ColumnData::Count(v) => out.push_str(&v[row].to_string()),
            }
        }
        out.push('\n');
    }
    out
}

/// Random disjoint partition into (train, test), with `fraction` of the
/// rows (rounded) going to the test part. Rows keep their original order
/// within each part.
pub fn split_holdout(d: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = d.n_rows();
    let n_test = (n as f64 * fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} of {n} rows leaves an empty part"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::seeded(seed));
    let (test, train) = idx.split_at_mut(n_test);
    test.sort_unstable();
    train.sort_unstable();
    Ok((d.select_rows(train), d.select_rows(test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_schema() -> Schema {
        Schema::new(
            vec![
                Column::continuous("a"),
                Column::categorical("w1", 2),
                Column::categorical("w2", 2),
                Column::categorical("c", 3),
                Column::count("k"),
            ],
            vec![StructuralZeroRule {
                guard_column: 1,
                guard_level: 0,
                forced_column: 2,
                forced_level: 0,
            }],
            0,
        )
        .unwrap()
    }

    fn toy(rows: &[[f64; 5]]) -> Dataset {
        let cols = (0..5).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
        Dataset::from_f64_columns(toy_schema(), cols).unwrap()
    }

    #[test]
    fn structural_zero_violation_reported_once() {
        let d = toy(&[[1.0, 0.0, 1.0, 0.0, 2.0], [2.0, 1.0, 1.0, 2.0, 0.0]]);
        let v = validate(&d);
        assert_eq!(
            v,
            vec![Violation {
                row: 0,
                kind: ViolationKind::StructuralZero { rule: 0 }
            }]
        );
    }

    #[test]
    fn empty_dataset_is_valid() {
        assert!(validate(&Dataset::empty(toy_schema())).is_empty());
    }

    #[test]
    fn out_of_range_level_is_a_domain_violation() {
        let schema = toy_schema();
        let d = Dataset::new(
            schema,
            vec![
                ColumnData::Real(vec![0.5]),
                ColumnData::Level(vec![1]),
                ColumnData::Level(vec![0]),
                ColumnData::Level(vec![3]),
                ColumnData::Count(vec![1]),
            ],
        )
        .unwrap();
        assert_eq!(
            validate(&d),
            vec![Violation {
                row: 0,
                kind: ViolationKind::LevelOutOfRange { column: 3 }
            }]
        );
    }

    #[test]
    fn indicator_block() {
        let d = toy(&[[1.0, 1.0, 0.0, 1.0, 2.0], [2.0, 0.0, 0.0, 2.0, 3.0], [3.0, 1.0, 1.0, 0.0, 5.0]]);
        let (m, enc) = one_hot(&d).unwrap();
        let b = enc.blocks()[3];
        assert_eq!(&m.row(0)[b.offset..b.offset + 3], &[0.0, 1.0, 0.0]);
        for r in 0..3 {
            let s: f64 = m.row(r)[b.offset..b.offset + 3].iter().sum();
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn standardization_of_one_two_three() {
        let d = toy(&[[1.0, 1.0, 0.0, 1.0, 2.0], [2.0, 0.0, 0.0, 2.0, 3.0], [3.0, 1.0, 1.0, 0.0, 5.0]]);
        let (m, _) = one_hot(&d).unwrap();
        let z: Vec<f64> = (0..3).map(|r| m.get(r, 0)).collect();
        let expected = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in z.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_variance_column_is_named() {
        let d = toy(&[[1.0, 1.0, 0.0, 1.0, 2.0], [1.0, 0.0, 0.0, 2.0, 3.0]]);
        match one_hot(&d) {
            Err(Error::ZeroVariance(name)) => assert_eq!(name, "a"),
            other => panic!("expected zero-variance error, got {other:?}"),
        }
    }

    #[test]
    fn decode_inverts_encode() {
        let d = toy(&[[1.5, 1.0, 0.0, 1.0, 2.0], [-2.0, 0.0, 0.0, 2.0, 3.0], [3.25, 1.0, 1.0, 0.0, 5.0]]);
        let (m, enc) = one_hot(&d).unwrap();
        let back = enc.decode(&m).unwrap();
        assert_eq!(back.columns()[1..], d.columns()[1..]);
        let (ColumnData::Real(a), ColumnData::Real(b)) = (back.column(0), d.column(0)) else {
            unreachable!()
        };
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn csv_range_error_points_at_cell() {
        let text = "a,w1,w2,c,k\n1.0,1,0,7,3\n";
        match parse_csv(text, &toy_schema()) {
            Err(Error::Cell { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "c");
            }
            other => panic!("expected range error, got {other:?}"),
        }
    }

    #[test]
    fn csv_missing_header_column() {
        let text = "a,w1,w2,k\n1.0,1,0,3\n";
        assert!(matches!(parse_csv(text, &toy_schema()), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn csv_unknown_and_non_numeric() {
        let text = "a,w1,w2,c,k,zz\n1,1,0,0,3,4\n";
        assert!(matches!(parse_csv(text, &toy_schema()), Err(Error::SchemaMismatch(_))));
        let text = "a,w1,w2,c,k\nabc,1,0,0,3\n";
        assert!(matches!(parse_csv(text, &toy_schema()), Err(Error::Cell { .. })));
    }

    #[test]
    fn csv_accepts_permuted_header() {
        let d = toy(&[[1.5, 1.0, 0.0, 1.0, 2.0]]);
        let text = "k,c,w2,w1,a\n2,1,0,1,1.5\n";
        assert_eq!(parse_csv(text, &toy_schema()).unwrap(), d);
    }

    #[test]
    fn split_is_disjoint_and_deterministic() {
        let rows: Vec<[f64; 5]> = (0..10).map(|i| [i as f64, 1.0, 0.0, 0.0, 0.0]).collect();
        let d = toy(&rows);
        let (tr, te) = split_holdout(&d, 0.5, 11).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (5, 5));
        let mut all: Vec<f64> = tr.column_f64(0).into_iter().chain(te.column_f64(0)).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(|i| i as f64).collect::<Vec<_>>());
        let (tr2, te2) = split_holdout(&d, 0.5, 11).unwrap();
        assert_eq!((tr, te), (tr2, te2));
    }

    #[test]
    fn split_rejects_empty_part() {
        let d = toy(&[[1.0, 1.0, 0.0, 0.0, 0.0], [2.0, 1.0, 0.0, 0.0, 0.0]]);
        assert!(split_holdout(&d, 0.1, 1).is_err());
        assert!(split_holdout(&d, 1.0, 1).is_err());
    }

    #[test]
    fn schema_text_round_trip() {
        let s = toy_schema();
        let text = s.to_text();
        assert_eq!(Schema::from_text(&text).unwrap(), s);
    }

    #[test]
    fn schema_rejects_bad_rules() {
        let bad = Schema::new(
            vec![Column::continuous("a"), Column::categorical("b", 2)],
            vec![StructuralZeroRule {
                guard_column: 0,
                guard_level: 0,
                forced_column: 1,
                forced_level: 0,
            }],
            0,
        );
        assert!(bad.is_err());
        assert!(Schema::new(vec![Column::categorical("b", 1)], vec![], 0).is_err());
        assert!(Schema::new(vec![Column::continuous("a"), Column::continuous("a")], vec![], 0).is_err());
    }
}
