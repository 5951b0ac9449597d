//! Typed observational datasets, covariate index sets and selection results.
//!
//! All types are immutable after construction and safe to share across
//! threads without synchronization.

use crate::error::{Error, Result};
use ndarray::Array2;
use std::fmt;

/// Kind of a covariate column. Binary covariates are represented as
/// `UnorderedDiscrete` with two categories; for two categories the ordered
/// and unordered kernels coincide, so nothing is lost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariableKind {
    Continuous,
    OrderedDiscrete { categories: u32 },
    UnorderedDiscrete { categories: u32 },
}

impl VariableKind {
    pub fn is_continuous(&self) -> bool {
        matches!(self, VariableKind::Continuous)
    }

    pub fn categories(&self) -> Option<u32> {
        match self {
            VariableKind::Continuous => None,
            VariableKind::OrderedDiscrete { categories }
            | VariableKind::UnorderedDiscrete { categories } => Some(*categories),
        }
    }

    /// Shorthand for a two-level covariate.
    pub fn binary() -> Self {
        VariableKind::UnorderedDiscrete { categories: 2 }
    }
}

impl fmt::Display for VariableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VariableKind::Continuous => write!(f, "continuous"),
            VariableKind::OrderedDiscrete { categories } => write!(f, "ordered:{categories}"),
            VariableKind::UnorderedDiscrete { categories } => write!(f, "unordered:{categories}"),
        }
    }
}

/// Name and kind of one covariate column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub kind: VariableKind,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: VariableKind) -> Self {
        Column { name: name.into(), kind }
    }
}

/// A validated observational dataset: covariate matrix with per-column kind
/// metadata, a binary treatment vector and a real outcome vector. Both
/// potential outcomes may be attached in simulation mode.
#[derive(Debug, Clone)]
pub struct Dataset {
    columns: Vec<Column>,
    x: Array2<f64>,
    treated: Vec<bool>,
    y: Vec<f64>,
    potential: Option<(Vec<f64>, Vec<f64>)>,
}

/// Per-column summary reported by validation.
#[derive(Debug, Clone)]
pub struct ColumnSummary {
    pub name: String,
    pub kind: VariableKind,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Dataset {
    /// Validate raw parts into a dataset. Checks: binary treatment with both
    /// arms non-empty, no missing values, discrete values are integers inside
    /// their category range, and consistency of potential outcomes with the
    /// observed outcome when present.
    pub fn new(
        columns: Vec<Column>,
        x: Array2<f64>,
        treatment: Vec<f64>,
        outcome: Vec<f64>,
        potential: Option<(Vec<f64>, Vec<f64>)>,
    ) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        if columns.len() != p {
            return Err(Error::Schema(format!(
                "{} column descriptors for a {}-column matrix",
                columns.len(),
                p
            )));
        }
        if treatment.len() != n || outcome.len() != n {
            return Err(Error::Schema(format!(
                "treatment/outcome length ({}/{}) does not match {} rows",
                treatment.len(),
                outcome.len(),
                n
            )));
        }

        let mut treated = Vec::with_capacity(n);
        for (row, &t) in treatment.iter().enumerate() {
            if t == 0.0 {
                treated.push(false);
            } else if t == 1.0 {
                treated.push(true);
            } else {
                return Err(Error::NonBinaryTreatment { row, value: t });
            }
        }
        let n1 = treated.iter().filter(|&&t| t).count();
        if n1 == 0 {
            return Err(Error::EmptyArm { arm: 1 });
        }
        if n1 == n {
            return Err(Error::EmptyArm { arm: 0 });
        }

        for (row, &v) in outcome.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::MissingValue { column: "<outcome>".into(), row });
            }
        }
        for (j, col) in columns.iter().enumerate() {
            for row in 0..n {
                let v = x[(row, j)];
                if !v.is_finite() {
                    return Err(Error::MissingValue { column: col.name.clone(), row });
                }
                if let Some(c) = col.kind.categories() {
                    if c < 2 {
                        return Err(Error::Schema(format!(
                            "column '{}' declares {} categories; discrete kinds need at least 2",
                            col.name, c
                        )));
                    }
                    if v.fract() != 0.0 || v < 0.0 || v >= f64::from(c) {
                        return Err(Error::CategoryOutOfRange {
                            column: col.name.clone(),
                            row,
                            value: v,
                            categories: c,
                        });
                    }
                }
            }
        }

        if let Some((y0, y1)) = &potential {
            if y0.len() != n || y1.len() != n {
                return Err(Error::Schema("potential outcome length mismatch".into()));
            }
            for row in 0..n {
                let expect = if treated[row] { y1[row] } else { y0[row] };
                if outcome[row] != expect {
                    return Err(Error::InconsistentPotential { row });
                }
            }
        }

        Ok(Dataset { columns, x, treated, y: outcome, potential })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn treated(&self) -> &[bool] {
        &self.treated
    }

    pub fn n_treated(&self) -> usize {
        self.treated.iter().filter(|&&t| t).count()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn potential(&self) -> Option<(&[f64], &[f64])> {
        self.potential.as_ref().map(|(y0, y1)| (y0.as_slice(), y1.as_slice()))
    }

    /// Treatment as 0/1 floats (for regression backends).
    pub fn treatment_values(&self) -> Vec<f64> {
        self.treated.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect()
    }

    /// Resolve a covariate name to its 0-based column index.
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownCovariate(name.to_string()))
    }

    pub fn column_summaries(&self) -> Vec<ColumnSummary> {
        self.columns
            .iter()
            .enumerate()
            .map(|(j, col)| {
                let col_view = self.x.column(j);
                let mean = col_view.mean().unwrap_or(f64::NAN);
                let min = col_view.iter().copied().fold(f64::INFINITY, f64::min);
                let max = col_view.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                ColumnSummary { name: col.name.clone(), kind: col.kind, mean, min, max }
            })
            .collect()
    }

    /// Partition rows by treatment arm, preserving row order within each arm.
    /// Returns (treated arm, control arm).
    ///
    /// The arms are plain row subsets, not valid `Dataset`s (an arm has a
    /// constant treatment), so this returns the raw pieces each backend needs.
    pub fn split_by_treatment(&self) -> (ArmView, ArmView) {
        let idx1: Vec<usize> = (0..self.n()).filter(|&i| self.treated[i]).collect();
        let idx0: Vec<usize> = (0..self.n()).filter(|&i| !self.treated[i]).collect();
        (self.arm_view(idx1), self.arm_view(idx0))
    }

    fn arm_view(&self, rows: Vec<usize>) -> ArmView {
        let x = self.x.select(ndarray::Axis(0), &rows);
        let y = rows.iter().map(|&i| self.y[i]).collect();
        ArmView { rows, x, y }
    }

    /// Covariate submatrix for the given index set, columns in set order.
    pub fn select_columns(&self, set: &IndexSet) -> Array2<f64> {
        self.x.select(ndarray::Axis(1), set.members())
    }
}

/// One treatment arm: original row ids, covariate submatrix and outcomes.
#[derive(Debug, Clone)]
pub struct ArmView {
    pub rows: Vec<usize>,
    pub x: Array2<f64>,
    pub y: Vec<f64>,
}

/// A strictly increasing set of 0-based covariate column indices.
///
/// User-facing renderings are 1-based to match the usual X1..Xp naming.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    /// Build from arbitrary indices; sorts and rejects duplicates.
    pub fn new(mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        let before = members.len();
        members.dedup();
        if members.len() != before {
            return Err(Error::InvalidArgument("duplicate covariate index".into()));
        }
        Ok(IndexSet(members))
    }

    pub fn empty() -> Self {
        IndexSet(Vec::new())
    }

    /// Members as sorted 0-based indices.
    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    pub fn is_subset_of(&self, other: &IndexSet) -> bool {
        self.0.iter().all(|i| other.contains(*i))
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        let mut all = self.0.clone();
        all.extend_from_slice(&other.0);
        all.sort_unstable();
        all.dedup();
        IndexSet(all)
    }

    /// Validate that every member indexes a p-column dataset.
    pub fn check_bounds(&self, p: usize) -> Result<()> {
        match self.0.iter().find(|&&i| i >= p) {
            Some(&index) => Err(Error::IndexOutOfRange { index, p }),
            None => Ok(()),
        }
    }

    /// Render as `{X1, X2, X7}` with 1-based positions.
    pub fn display_one_based(&self) -> String {
        let inner: Vec<String> = self.0.iter().map(|i| format!("X{}", i + 1)).collect();
        format!("{{{}}}", inner.join(", "))
    }

    /// Render as `{name, name, ...}` using dataset column names.
    pub fn display_named(&self, columns: &[Column]) -> String {
        let inner: Vec<String> = self
            .0
            .iter()
            .map(|&i| columns.get(i).map_or_else(|| format!("X{}", i + 1), |c| c.name.clone()))
            .collect();
        format!("{{{}}}", inner.join(", "))
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display_one_based())
    }
}

impl FromIterator<usize> for IndexSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        let mut v: Vec<usize> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        IndexSet(v)
    }
}

/// Which selection algorithm produced a bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmChoice {
    A,
    B,
    Both,
}

impl fmt::Display for AlgorithmChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgorithmChoice::A => write!(f, "a"),
            AlgorithmChoice::B => write!(f, "b"),
            AlgorithmChoice::Both => write!(f, "both"),
        }
    }
}

/// Backend used for the conditional-independence screens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Sdr,
    Kernel,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendKind::Sdr => write!(f, "sdr"),
            BackendKind::Kernel => write!(f, "kernel"),
        }
    }
}

/// How a bundle was produced: backend, settings and master seed.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub algorithm: AlgorithmChoice,
    pub backend: BackendKind,
    pub settings: Vec<(String, String)>,
    pub master_seed: u64,
}

/// The seven estimated index sets produced by the selection algorithms.
/// Sets not produced by the algorithm that ran stay `None`.
#[derive(Debug, Clone)]
pub struct SelectionBundle {
    pub x_t: Option<IndexSet>,
    pub q0: Option<IndexSet>,
    pub q1: Option<IndexSet>,
    pub x0: Option<IndexSet>,
    pub x1: Option<IndexSet>,
    pub z0: Option<IndexSet>,
    pub z1: Option<IndexSet>,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
}

impl SelectionBundle {
    pub fn empty(provenance: Provenance) -> Self {
        SelectionBundle {
            x_t: None,
            q0: None,
            q1: None,
            x0: None,
            x1: None,
            z0: None,
            z1: None,
            provenance,
            warnings: Vec::new(),
        }
    }

    fn require(set: &Option<IndexSet>, name: &str, algorithm: char) -> Result<IndexSet> {
        set.clone().ok_or_else(|| Error::MissingBundleSet {
            missing: name.to_string(),
            algorithm,
        })
    }

    /// Union of the two per-arm outcome-side sets from algorithm A.
    pub fn union_q(&self) -> Result<IndexSet> {
        let q0 = Self::require(&self.q0, "Q_0", 'A')?;
        let q1 = Self::require(&self.q1, "Q_1", 'A')?;
        Ok(q0.union(&q1))
    }

    /// Union of the two per-arm outcome-predictor sets from algorithm B.
    pub fn union_x_y(&self) -> Result<IndexSet> {
        let x0 = Self::require(&self.x0, "X_0", 'B')?;
        let x1 = Self::require(&self.x1, "X_1", 'B')?;
        Ok(x0.union(&x1))
    }

    /// Union of the two per-arm treatment-side sets from algorithm B.
    pub fn union_z(&self) -> Result<IndexSet> {
        let z0 = Self::require(&self.z0, "Z_0", 'B')?;
        let z1 = Self::require(&self.z1, "Z_1", 'B')?;
        Ok(z0.union(&z1))
    }

    /// All three unions at once; requires both algorithms to have run.
    pub fn unions(&self) -> Result<(IndexSet, IndexSet, IndexSet)> {
        Ok((self.union_q()?, self.union_x_y()?, self.union_z()?))
    }
}

/// Free-function form of the union operation over a full bundle.
pub fn union_bundle(b: &SelectionBundle) -> Result<(IndexSet, IndexSet, IndexSet)> {
    b.unions()
}
