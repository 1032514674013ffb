//! Dataset benchmarking: mean primary error with in-domain exclusion,
//! ranking, leakage-free top-N selection and finetune-scope planning.
//!
//! A [`ResultsMatrix`] holds, for each training dataset, the primary error
//! (mm) of a model trained on it and evaluated on each benchmark. The mean
//! primary error (MPE) of a row averages its cells, skipping absent cells and
//! pairs listed in an [`InDomainMask`].

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("results matrix has no rows or no columns")]
    EmptyMatrix,
    #[error("duplicate {kind} name '{name}'")]
    DuplicateName { kind: &'static str, name: String },
    #[error("row '{row}' has {found} cells, expected {expected}")]
    RowLength { row: String, expected: usize, found: usize },
    #[error("cell ({row}, {column}) must be positive and finite, got {value}")]
    InvalidCell { row: String, column: String, value: f64 },
    #[error("cell ({row}, {column}) is not a number: '{text}'")]
    UnparsableCell { row: String, column: String, text: String },
    #[error("unknown {kind} '{name}'")]
    UnknownName { kind: &'static str, name: String },
    #[error("row '{0}' has no cells left after exclusion")]
    NoCells(String),
    #[error("cannot select {n} datasets from a ranking of {rows}")]
    OutOfRange { n: usize, rows: usize },
    #[error("unknown finetune scope '{0}' (expected full, neck+head or head)")]
    UnknownScope(String),
    #[error("malformed results CSV: {0}")]
    Csv(String),
    #[error("malformed mask JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Errors (mm) of models trained on each row dataset, per benchmark column.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultsMatrix {
    rows: Vec<String>,
    columns: Vec<String>,
    cells: Vec<Vec<Option<f64>>>,
}

fn unique(kind: &'static str, names: &[String]) -> Result<(), BenchmarkError> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(BenchmarkError::DuplicateName { kind, name: n.clone() });
        }
    }
    Ok(())
}

impl ResultsMatrix {
    pub fn new(rows: Vec<String>, columns: Vec<String>, cells: Vec<Vec<Option<f64>>>) -> Result<Self, BenchmarkError> {
        if rows.is_empty() || columns.is_empty() {
            return Err(BenchmarkError::EmptyMatrix);
        }
        unique("dataset", &rows)?;
        unique("benchmark", &columns)?;
        if cells.len() != rows.len() {
            return Err(BenchmarkError::RowLength {
                row: "<matrix>".into(),
                expected: rows.len(),
                found: cells.len(),
            });
        }
        for (r, row) in cells.iter().enumerate() {
            if row.len() != columns.len() {
                return Err(BenchmarkError::RowLength {
                    row: rows[r].clone(),
                    expected: columns.len(),
                    found: row.len(),
                });
            }
            for (c, cell) in row.iter().enumerate() {
                if let Some(v) = *cell {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(BenchmarkError::InvalidCell {
                            row: rows[r].clone(),
                            column: columns[c].clone(),
                            value: v,
                        });
                    }
                }
            }
        }
        Ok(Self { rows, columns, cells })
    }

    /// Parses `dataset,<benchmark>...` CSV. Empty, `-` or `—` cells are absent.
    pub fn from_csv(text: &str) -> Result<Self, BenchmarkError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| BenchmarkError::Csv(e.to_string()))?
            .clone();
        if header.get(0) != Some("dataset") {
            return Err(BenchmarkError::Csv("first header column must be 'dataset'".into()));
        }
        let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        let mut cells = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| BenchmarkError::Csv(e.to_string()))?;
            let name = record.get(0).unwrap_or_default().to_string();
            if name.is_empty() {
                return Err(BenchmarkError::Csv("row with an empty dataset name".into()));
            }
            let row = record
                .iter()
                .skip(1)
                .enumerate()
                .map(|(c, text)| match text {
                    "" | "-" | "—" => Ok(None),
                    t => t.parse::<f64>().map(Some).map_err(|_| BenchmarkError::UnparsableCell {
                        row: name.clone(),
                        column: columns.get(c).cloned().unwrap_or_default(),
                        text: t.to_string(),
                    }),
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(name);
            cells.push(row);
        }
        Self::new(rows, columns, cells)
    }

    pub fn load_csv(path: &Path) -> Result<Self, BenchmarkError> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    pub fn rows(&self) -> &[String] {
        &self.rows
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn row_index(&self, name: &str) -> Option<usize> {
        self.rows.iter().position(|r| r == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn cell(&self, row: usize, column: usize) -> Option<f64> {
        self.cells[row][column]
    }

    pub fn row_cells(&self, row: usize) -> &[Option<f64>] {
        &self.cells[row]
    }

    /// A copy with rows and columns reordered by the given index permutations.
    pub fn permuted(&self, row_order: &[usize], column_order: &[usize]) -> Self {
        Self {
            rows: row_order.iter().map(|&r| self.rows[r].clone()).collect(),
            columns: column_order.iter().map(|&c| self.columns[c].clone()).collect(),
            cells: row_order
                .iter()
                .map(|&r| column_order.iter().map(|&c| self.cells[r][c]).collect())
                .collect(),
        }
    }

    pub fn with_cell(&self, row: usize, column: usize, value: Option<f64>) -> Result<Self, BenchmarkError> {
        let mut cells = self.cells.clone();
        cells[row][column] = value;
        Self::new(self.rows.clone(), self.columns.clone(), cells)
    }
}

/// (training dataset, benchmark) pairs left out of MPE.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InDomainMask {
    exclude: BTreeSet<(String, String)>,
}

/// Datasets whose training split shares a domain with a benchmark.
pub const DEFAULT_IN_DOMAIN_PAIRS: [(&str, &str); 4] = [
    ("AGORA", "AGORA"),
    ("UBody", "UBody"),
    ("EgoBody-EgoSet", "EgoBody"),
    ("3DPW", "3DPW"),
];

impl InDomainMask {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_pairs<S: Into<String>>(pairs: impl IntoIterator<Item = (S, S)>) -> Self {
        Self {
            exclude: pairs.into_iter().map(|(a, b)| (a.into(), b.into())).collect(),
        }
    }

    /// The default pairs that exist in `matrix`.
    pub fn default_for(matrix: &ResultsMatrix) -> Self {
        Self::from_pairs(
            DEFAULT_IN_DOMAIN_PAIRS
                .iter()
                .filter(|(r, c)| matrix.row_index(r).is_some() && matrix.column_index(c).is_some())
                .copied(),
        )
    }

    pub fn insert(&mut self, dataset: impl Into<String>, benchmark: impl Into<String>) {
        self.exclude.insert((dataset.into(), benchmark.into()));
    }

    pub fn contains(&self, dataset: &str, benchmark: &str) -> bool {
        self.exclude.contains(&(dataset.to_string(), benchmark.to_string()))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.exclude.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn len(&self) -> usize {
        self.exclude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exclude.is_empty()
    }

    /// Every pair must name an existing row and column.
    pub fn validate(&self, matrix: &ResultsMatrix) -> Result<(), BenchmarkError> {
        for (r, c) in &self.exclude {
            if matrix.row_index(r).is_none() {
                return Err(BenchmarkError::UnknownName {
                    kind: "dataset",
                    name: r.clone(),
                });
            }
            if matrix.column_index(c).is_none() {
                return Err(BenchmarkError::UnknownName {
                    kind: "benchmark",
                    name: c.clone(),
                });
            }
        }
        Ok(())
    }

    /// Parses `{"exclude": [["UBody", "UBody"], ...]}`.
    pub fn from_json(text: &str) -> Result<Self, BenchmarkError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load_json(path: &Path) -> Result<Self, BenchmarkError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mask serializes")
    }
}

/// Mean of the cells of `row` that are present and not masked.
pub fn compute_mpe(matrix: &ResultsMatrix, row: &str, mask: &InDomainMask) -> Result<f64, BenchmarkError> {
    let r = matrix.row_index(row).ok_or_else(|| BenchmarkError::UnknownName {
        kind: "dataset",
        name: row.to_string(),
    })?;
    row_mpe(matrix, r, mask)
}

fn row_mpe(matrix: &ResultsMatrix, r: usize, mask: &InDomainMask) -> Result<f64, BenchmarkError> {
    let name = &matrix.rows[r];
    let mut sum = 0.0;
    let mut count = 0usize;
    for (c, cell) in matrix.cells[r].iter().enumerate() {
        if let Some(v) = cell {
            if !mask.contains(name, &matrix.columns[c]) {
                sum += v;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(BenchmarkError::NoCells(name.clone()));
    }
    Ok(sum / count as f64)
}

/// Errors closer than this (mm) rank as ties.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Competition ranks ("1, 2, 2, 4") over `(name, value)` pairs, ascending by
/// value. Values within [`TIE_TOLERANCE`] of their neighbour form a tie group,
/// ordered by name. Returns `(original index, rank)` in ranked order.
fn competition_rank(items: &[(&str, f64)]) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        items[a]
            .1
            .total_cmp(&items[b].1)
            .then_with(|| items[a].0.cmp(items[b].0))
    });
    let mut out = Vec::with_capacity(order.len());
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && items[order[end]].1 - items[order[end - 1]].1 <= TIE_TOLERANCE {
            end += 1;
        }
        let mut group: Vec<usize> = order[start..end].to_vec();
        group.sort_by(|&a, &b| items[a].0.cmp(items[b].0));
        out.extend(group.into_iter().map(|i| (i, start + 1)));
        start = end;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedRow {
    pub dataset: String,
    pub mpe: f64,
    pub rank: usize,
    /// Cell values, in [`RankingTable::columns`] order.
    pub cells: Vec<Option<f64>>,
    /// Rank of each cell within its benchmark column (in-domain cells included).
    pub column_ranks: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingTable {
    pub columns: Vec<String>,
    pub rows: Vec<RankedRow>,
}

impl RankingTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, dataset: &str) -> Option<&RankedRow> {
        self.rows.iter().find(|r| r.dataset == dataset)
    }
}

/// Ranks training datasets by ascending MPE.
pub fn rank_datasets(matrix: &ResultsMatrix, mask: &InDomainMask) -> Result<RankingTable, BenchmarkError> {
    mask.validate(matrix)?;
    let mpes = (0..matrix.rows.len())
        .map(|r| row_mpe(matrix, r, mask))
        .collect::<Result<Vec<_>, _>>()?;

    let mut column_ranks = vec![vec![None; matrix.columns.len()]; matrix.rows.len()];
    for c in 0..matrix.columns.len() {
        let present: Vec<(usize, f64)> = (0..matrix.rows.len())
            .filter_map(|r| matrix.cells[r][c].map(|v| (r, v)))
            .collect();
        let items: Vec<(&str, f64)> = present.iter().map(|&(r, v)| (matrix.rows[r].as_str(), v)).collect();
        for (i, rank) in competition_rank(&items) {
            column_ranks[present[i].0][c] = Some(rank);
        }
    }

    let items: Vec<(&str, f64)> = matrix
        .rows
        .iter()
        .map(String::as_str)
        .zip(mpes.iter().copied())
        .collect();
    let rows = competition_rank(&items)
        .into_iter()
        .map(|(r, rank)| RankedRow {
            dataset: matrix.rows[r].clone(),
            mpe: mpes[r],
            rank,
            cells: matrix.cells[r].clone(),
            column_ranks: column_ranks[r].clone(),
        })
        .collect();
    Ok(RankingTable {
        columns: matrix.columns.clone(),
        rows,
    })
}

/// The first `n` datasets of a ranking.
///
/// Rankings should come from training-split evaluations: ranking on the test
/// benchmarks and then training on the winners leaks test information.
pub fn select_top_n(ranking: &RankingTable, n: usize) -> Result<Vec<String>, BenchmarkError> {
    if n > ranking.rows.len() {
        return Err(BenchmarkError::OutOfRange {
            n,
            rows: ranking.rows.len(),
        });
    }
    Ok(ranking.rows[..n].iter().map(|r| r.dataset.clone()).collect())
}

/// Which part of the reference network is trained when finetuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinetuneScope {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "neck+head")]
    NeckHead,
    #[serde(rename = "head")]
    Head,
}

impl FinetuneScope {
    pub fn as_str(self) -> &'static str {
        match self {
            FinetuneScope::Full => "full",
            FinetuneScope::NeckHead => "neck+head",
            FinetuneScope::Head => "head",
        }
    }

    /// Trainable parameters of the reference (largest) architecture.
    pub fn reference_parameter_count(self) -> u64 {
        match self {
            FinetuneScope::Full => 662_000_000,
            FinetuneScope::NeckHead => 31_000_000,
            FinetuneScope::Head => 5_000_000,
        }
    }
}

impl fmt::Display for FinetuneScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FinetuneScope {
    type Err = BenchmarkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(FinetuneScope::Full),
            "neck+head" | "neck_head" | "neck-head" => Ok(FinetuneScope::NeckHead),
            "head" => Ok(FinetuneScope::Head),
            _ => Err(BenchmarkError::UnknownScope(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetunePlan {
    pub scope: FinetuneScope,
    /// Informational; only known for the reference architecture.
    pub trainable_parameters: Option<u64>,
}

pub fn plan_finetune(scope: FinetuneScope, reference_architecture: bool) -> FinetunePlan {
    FinetunePlan {
        scope,
        trainable_parameters: reference_architecture.then(|| scope.reference_parameter_count()),
    }
}
