//! Screening backend for mixed continuous/discrete covariates: local-constant
//! regression with a generalized product kernel, leave-one-out cross-validated
//! bandwidths, and threshold-based exclusion of smoothed-out covariates.
//!
//! Weights multiply one factor per covariate: a scaled Gaussian density for
//! continuous columns, `lambda^|a-b|` for ordered discrete columns and
//! `lambda^[a != b]` for unordered ones. Cross-validation drives the
//! bandwidth of an irrelevant covariate toward the top of its admissible
//! range, which is the exclusion signal read by [`screen`].

use crate::data::{IndexSet, VariableKind};
use crate::error::{Error, Result};
use crate::optim::nelder_mead;
use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Kind and sample standard deviation of one covariate column. The standard
/// deviation scales the minimal continuous bandwidth and the continuous
/// screening threshold.
#[derive(Debug, Clone, Copy)]
pub struct ColumnMeta {
    pub kind: VariableKind,
    pub sd: f64,
}

impl ColumnMeta {
    pub fn from_matrix(x: ArrayView2<'_, f64>, kinds: &[VariableKind]) -> Vec<ColumnMeta> {
        let n = x.nrows() as f64;
        kinds
            .iter()
            .enumerate()
            .map(|(j, &kind)| {
                let col = x.column(j);
                let mean = col.mean().unwrap_or(0.0);
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
                ColumnMeta { kind, sd: var.sqrt() }
            })
            .collect()
    }

    /// Upper end of the admissible bandwidth range (infinite for continuous).
    pub fn lambda_max(&self) -> f64 {
        match self.kind {
            VariableKind::Continuous => f64::INFINITY,
            VariableKind::OrderedDiscrete { .. } => 1.0,
            VariableKind::UnorderedDiscrete { categories } => {
                (f64::from(categories) - 1.0) / f64::from(categories)
            }
        }
    }
}

/// Per-covariate smoothing parameters, aligned with the covariate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthVector {
    pub values: Vec<f64>,
}

impl BandwidthVector {
    pub fn new(values: Vec<f64>) -> Self {
        BandwidthVector { values }
    }

    /// Check every entry against its kind's admissible range.
    pub fn validate(&self, meta: &[ColumnMeta], h_min_factor: f64) -> Result<()> {
        if self.values.len() != meta.len() {
            return Err(Error::InvalidArgument(format!(
                "{} bandwidths for {} columns",
                self.values.len(),
                meta.len()
            )));
        }
        for (j, (&bw, m)) in self.values.iter().zip(meta).enumerate() {
            let ok = match m.kind {
                VariableKind::Continuous => bw >= h_min_factor * m.sd && bw > 0.0,
                _ => (0.0..=m.lambda_max() + 1e-12).contains(&bw),
            };
            if !ok {
                return Err(Error::InvalidArgument(format!(
                    "bandwidth {bw} out of range for column {} ({})",
                    j + 1,
                    m.kind
                )));
            }
        }
        Ok(())
    }
}

/// Analyst-chosen exclusion thresholds per covariate kind. The continuous
/// threshold is in units of the column standard deviation.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdPolicy {
    pub continuous: f64,
    pub ordered: f64,
    pub unordered: f64,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy { continuous: 100.0, ordered: 0.5, unordered: 0.5 }
    }
}

impl ThresholdPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.continuous > 0.0 && self.ordered > 0.0 && self.ordered <= 1.0 && self.unordered > 0.0
        {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "thresholds must be strictly positive (ordered at most 1): {self:?}"
            )))
        }
    }

    fn for_column(&self, m: &ColumnMeta) -> f64 {
        match m.kind {
            VariableKind::Continuous => self.continuous * m.sd,
            VariableKind::OrderedDiscrete { .. } => self.ordered,
            VariableKind::UnorderedDiscrete { .. } => self.unordered,
        }
    }
}

/// Product kernel weight between two rows.
pub fn kernel_weight(row_i: &[f64], row_j: &[f64], bw: &BandwidthVector, meta: &[ColumnMeta]) -> f64 {
    let mut weight = 1.0;
    for (k, m) in meta.iter().enumerate() {
        let a = row_i[k];
        let b = row_j[k];
        let lambda = bw.values[k];
        weight *= match m.kind {
            VariableKind::Continuous => {
                let z = (a - b) / lambda;
                (-0.5 * z * z).exp() / (lambda * (2.0 * std::f64::consts::PI).sqrt())
            }
            VariableKind::OrderedDiscrete { .. } => {
                let d = (a - b).abs().round() as i32;
                lambda.powi(d)
            }
            VariableKind::UnorderedDiscrete { .. } => {
                if a == b {
                    1.0
                } else {
                    lambda
                }
            }
        };
    }
    weight
}

/// Local-constant kernel regression estimate at an arbitrary query row.
/// `query_id` only labels the error when every weight vanishes.
pub fn kernel_regress(
    u: &[f64],
    x: ArrayView2<'_, f64>,
    bw: &BandwidthVector,
    meta: &[ColumnMeta],
    query: &[f64],
    query_id: usize,
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        let row: Vec<f64> = x.row(j).to_vec();
        let w = kernel_weight(query, &row, bw, meta);
        num += w * uj;
        den += w;
    }
    if den > 0.0 {
        Ok(num / den)
    } else {
        Err(Error::EmptyNeighborhood { row: query_id })
    }
}

/// Leave-one-out cross-validation objective. A row whose leave-one-out
/// neighborhood is empty contributes its squared deviation from the
/// leave-one-out response mean, keeping the objective finite.
pub fn loo_cv(
    u: &[f64],
    x: ArrayView2<'_, f64>,
    bw: &BandwidthVector,
    meta: &[ColumnMeta],
) -> f64 {
    let engine = CvEngine::build(u.to_vec(), x, meta);
    engine.cv(&bw.values)
}

/// Cross-validation engine: precomputes pair structure so that repeated
/// objective evaluations only touch the bandwidths.
enum CvEngine {
    Pairs(PairsEngine),
    Lattice(LatticeEngine),
}

impl CvEngine {
    fn build(u: Vec<f64>, x: ArrayView2<'_, f64>, meta: &[ColumnMeta]) -> CvEngine {
        if let Some(lattice) = LatticeEngine::try_build(&u, x, meta) {
            CvEngine::Lattice(lattice)
        } else {
            CvEngine::Pairs(PairsEngine::build(u, x, meta))
        }
    }

    fn cv(&self, bw: &[f64]) -> f64 {
        match self {
            CvEngine::Pairs(e) => e.cv(bw),
            CvEngine::Lattice(e) => e.cv(bw),
        }
    }
}

/// Generic engine over all row pairs.
struct PairsEngine {
    n: usize,
    u: Vec<f64>,
    sum_u: f64,
    cont_cols: Vec<usize>,
    disc_cols: Vec<usize>,
    /// Squared differences per pair (pair-major, cont_cols order).
    pair_sq: Vec<f64>,
    /// Category distance codes per pair (pair-major, disc_cols order).
    pair_code: Vec<u8>,
    /// Category count per discrete column.
    disc_levels: Vec<usize>,
    disc_ordered: Vec<bool>,
}

impl PairsEngine {
    fn build(u: Vec<f64>, x: ArrayView2<'_, f64>, meta: &[ColumnMeta]) -> Self {
        let n = x.nrows();
        let mut cont_cols = Vec::new();
        let mut disc_cols = Vec::new();
        let mut disc_levels = Vec::new();
        let mut disc_ordered = Vec::new();
        for (j, m) in meta.iter().enumerate() {
            match m.kind {
                VariableKind::Continuous => cont_cols.push(j),
                VariableKind::OrderedDiscrete { categories } => {
                    disc_cols.push(j);
                    disc_levels.push(categories as usize);
                    disc_ordered.push(true);
                }
                VariableKind::UnorderedDiscrete { categories } => {
                    disc_cols.push(j);
                    disc_levels.push(categories as usize);
                    disc_ordered.push(false);
                }
            }
        }
        let npairs = n * (n - 1) / 2;
        let q = cont_cols.len();
        let r = disc_cols.len();
        let mut pair_sq = Vec::with_capacity(npairs * q);
        let mut pair_code = Vec::with_capacity(npairs * r);
        for i in 0..n {
            for j in (i + 1)..n {
                for &c in &cont_cols {
                    let d = x[(i, c)] - x[(j, c)];
                    pair_sq.push(d * d);
                }
                for (pos, &c) in disc_cols.iter().enumerate() {
                    let code = if disc_ordered[pos] {
                        (x[(i, c)] - x[(j, c)]).abs().round() as u8
                    } else {
                        u8::from(x[(i, c)] != x[(j, c)])
                    };
                    pair_code.push(code);
                }
            }
        }
        let sum_u = u.iter().sum();
        PairsEngine {
            n,
            u,
            sum_u,
            cont_cols,
            disc_cols,
            pair_sq,
            pair_code,
            disc_levels,
            disc_ordered,
        }
    }

    fn cv(&self, bw: &[f64]) -> f64 {
        let n = self.n;
        let q = self.cont_cols.len();
        let r = self.disc_cols.len();
        // Per-evaluation constants: Gaussian scale factors and power tables.
        let mut half_inv_sq = Vec::with_capacity(q);
        let mut ln_scale = 0.0;
        for &c in &self.cont_cols {
            let h = bw[c];
            half_inv_sq.push(0.5 / (h * h));
            ln_scale -= h.ln() + LN_SQRT_2PI;
        }
        let mut tables: Vec<Vec<f64>> = Vec::with_capacity(r);
        for (pos, &c) in self.disc_cols.iter().enumerate() {
            let lambda = bw[c];
            let levels = self.disc_levels[pos];
            let table: Vec<f64> = (0..levels).map(|d| lambda.powi(d as i32)).collect();
            tables.push(table);
        }

        let mut num = vec![0.0; n];
        let mut den = vec![0.0; n];
        let mut pair = 0usize;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut w = if q > 0 {
                    let base = pair * q;
                    let mut s = ln_scale;
                    for (k, &hiq) in half_inv_sq.iter().enumerate() {
                        s -= hiq * self.pair_sq[base + k];
                    }
                    s.exp()
                } else {
                    1.0
                };
                if r > 0 {
                    let base = pair * r;
                    for (t, table) in tables.iter().enumerate() {
                        w *= table[self.pair_code[base + t] as usize];
                    }
                }
                num[i] += w * self.u[j];
                num[j] += w * self.u[i];
                den[i] += w;
                den[j] += w;
                pair += 1;
            }
        }

        let mut cv = 0.0;
        for i in 0..n {
            let err = if den[i] > 0.0 {
                self.u[i] - num[i] / den[i]
            } else {
                self.u[i] - (self.sum_u - self.u[i]) / (n as f64 - 1.0)
            };
            cv += err * err;
        }
        cv / n as f64
    }
}

/// All-discrete fast path: rows collapse to points of the category lattice
/// and the weighted sums factor into per-coordinate transforms. Exact up to
/// floating-point reassociation.
struct LatticeEngine {
    n: usize,
    u: Vec<f64>,
    sum_u: f64,
    /// Lattice point per row.
    codes: Vec<usize>,
    counts: Vec<f64>,
    usums: Vec<f64>,
    /// Per discrete column: (original column, levels, ordered, stride).
    coords: Vec<(usize, usize, bool, usize)>,
    size: usize,
}

const LATTICE_CAP: usize = 4096;

impl LatticeEngine {
    fn try_build(u: &[f64], x: ArrayView2<'_, f64>, meta: &[ColumnMeta]) -> Option<Self> {
        let mut coords = Vec::with_capacity(meta.len());
        let mut size = 1usize;
        for (j, m) in meta.iter().enumerate() {
            let (levels, ordered) = match m.kind {
                VariableKind::Continuous => return None,
                VariableKind::OrderedDiscrete { categories } => (categories as usize, true),
                VariableKind::UnorderedDiscrete { categories } => (categories as usize, false),
            };
            coords.push((j, levels, ordered, size));
            size = size.checked_mul(levels)?;
            if size > LATTICE_CAP {
                return None;
            }
        }
        let n = x.nrows();
        let mut codes = Vec::with_capacity(n);
        let mut counts = vec![0.0; size];
        let mut usums = vec![0.0; size];
        for i in 0..n {
            let mut code = 0usize;
            for &(j, _, _, stride) in &coords {
                code += (x[(i, j)] as usize) * stride;
            }
            codes.push(code);
            counts[code] += 1.0;
            usums[code] += u[i];
        }
        Some(LatticeEngine {
            n,
            u: u.to_vec(),
            sum_u: u.iter().sum(),
            codes,
            counts,
            usums,
            coords,
            size,
        })
    }

    /// Apply the per-coordinate kernel matrix along one lattice axis.
    fn apply_axis(vec: &mut [f64], stride: usize, levels: usize, m: &[f64]) {
        let block = stride * levels;
        let mut fiber = vec![0.0; levels];
        let mut base = 0;
        while base < vec.len() {
            for offset in 0..stride {
                for (a, f) in fiber.iter_mut().enumerate() {
                    *f = vec[base + offset + a * stride];
                }
                for a in 0..levels {
                    let mut acc = 0.0;
                    for (b, &f) in fiber.iter().enumerate() {
                        acc += m[a * levels + b] * f;
                    }
                    vec[base + offset + a * stride] = acc;
                }
            }
            base += block;
        }
    }

    fn cv(&self, bw: &[f64]) -> f64 {
        let mut a1 = self.counts.clone();
        let mut au = self.usums.clone();
        for &(col, levels, ordered, stride) in &self.coords {
            let lambda = bw[col];
            let mut m = vec![0.0; levels * levels];
            for a in 0..levels {
                for b in 0..levels {
                    m[a * levels + b] = if a == b {
                        1.0
                    } else if ordered {
                        lambda.powi((a as i32 - b as i32).abs())
                    } else {
                        lambda
                    };
                }
            }
            Self::apply_axis(&mut a1, stride, levels, &m);
            Self::apply_axis(&mut au, stride, levels, &m);
        }
        debug_assert_eq!(a1.len(), self.size);

        let mut cv = 0.0;
        for i in 0..self.n {
            let code = self.codes[i];
            // Self-weight is exactly 1 (every per-coordinate diagonal is 1).
            let den = a1[code] - 1.0;
            let err = if den > 0.0 {
                self.u[i] - (au[code] - self.u[i]) / den
            } else {
                self.u[i] - (self.sum_u - self.u[i]) / (self.n as f64 - 1.0)
            };
            cv += err * err;
        }
        cv / self.n as f64
    }
}

/// Settings for the cross-validated bandwidth search.
#[derive(Debug, Clone)]
pub struct CvConfig {
    /// Number of multistart points (the smoothed-out corner is always first).
    pub restarts: usize,
    /// Relative convergence tolerance on the CV value.
    pub tol_rel: f64,
    /// Iteration cap per start.
    pub max_iter: usize,
    /// Minimal continuous bandwidth as a multiple of the column sd.
    pub h_min_factor: f64,
    /// Box upper bound for continuous bandwidths (effectively infinite).
    pub h_max: f64,
    /// Smallest sample size accepted.
    pub min_n: usize,
    /// When set, the CV objective is evaluated on a seeded random subsample
    /// of this many rows.
    pub subsample: Option<usize>,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            restarts: 4,
            tol_rel: 1e-4,
            max_iter: 500,
            h_min_factor: 1e-3,
            h_max: 1e8,
            min_n: 25,
            subsample: None,
        }
    }
}

/// Per-column transform between optimizer space and bandwidth space.
struct Transform {
    kinds: Vec<TransformKind>,
}

enum TransformKind {
    /// log-bandwidth with box [h_min, h_max].
    Continuous { h_min: f64, h_max: f64 },
    /// logit-scaled position inside [0, lambda_max].
    Discrete { lambda_max: f64 },
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

impl Transform {
    fn new(meta: &[ColumnMeta], config: &CvConfig) -> Self {
        let kinds = meta
            .iter()
            .map(|m| match m.kind {
                VariableKind::Continuous => TransformKind::Continuous {
                    h_min: (config.h_min_factor * m.sd).max(1e-12),
                    h_max: config.h_max,
                },
                _ => TransformKind::Discrete { lambda_max: m.lambda_max() },
            })
            .collect();
        Transform { kinds }
    }

    fn to_bandwidths(&self, theta: &[f64]) -> Vec<f64> {
        self.kinds
            .iter()
            .zip(theta)
            .map(|(k, &t)| match k {
                TransformKind::Continuous { h_min, h_max } => t.exp().clamp(*h_min, *h_max),
                TransformKind::Discrete { lambda_max } => lambda_max * sigmoid(t),
            })
            .collect()
    }

    /// Snap values that converged against a box edge onto the edge, so the
    /// boundary semantics of the screening thresholds can fire exactly.
    fn snap(&self, bw: &mut [f64]) {
        for (k, v) in self.kinds.iter().zip(bw.iter_mut()) {
            match k {
                TransformKind::Continuous { h_max, .. } => {
                    if *v >= h_max * (1.0 - 1e-6) {
                        *v = *h_max;
                    }
                }
                TransformKind::Discrete { lambda_max } => {
                    if *v >= lambda_max * (1.0 - 1e-6) {
                        *v = *lambda_max;
                    } else if *v <= lambda_max * 1e-9 {
                        *v = 0.0;
                    }
                }
            }
        }
    }
}

/// Rule-of-thumb bandwidth for a continuous column.
fn rule_of_thumb(sd: f64, n: usize) -> f64 {
    1.06 * sd.max(1e-12) * (n as f64).powf(-0.2)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Select bandwidths by multistart simplex minimization of the leave-one-out
/// CV objective. Deterministic given the seed; the returned CV value never
/// exceeds the CV value of any multistart initial point.
pub fn select_bandwidths(
    u: &[f64],
    x: ArrayView2<'_, f64>,
    meta: &[ColumnMeta],
    config: &CvConfig,
    seed: u64,
) -> Result<BandwidthVector> {
    let n = x.nrows();
    let p = x.ncols();
    if n < config.min_n {
        return Err(Error::InvalidArgument(format!(
            "bandwidth selection needs at least {} rows, got {n}",
            config.min_n
        )));
    }
    if meta.len() != p || u.len() != n {
        return Err(Error::InvalidArgument("mismatched bandwidth-search inputs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Optional seeded subsample for the CV objective.
    let engine = match config.subsample {
        Some(cap) if cap < n => {
            let mut rows: Vec<usize> = (0..n).collect();
            rows.shuffle(&mut rng);
            rows.truncate(cap);
            rows.sort_unstable();
            let xs = x.select(ndarray::Axis(0), &rows);
            let us: Vec<f64> = rows.iter().map(|&i| u[i]).collect();
            CvEngine::build(us, xs.view(), meta)
        }
        _ => CvEngine::build(u.to_vec(), x, meta),
    };
    let transform = Transform::new(meta, config);
    let objective = |theta: &[f64]| engine.cv(&transform.to_bandwidths(theta));

    // Multistart initial points in transformed space. The smoothed-out
    // corner start is what lets irrelevant covariates reach their boundary.
    let corner_theta = 18.0;
    let n_eff = config.subsample.map_or(n, |cap| cap.min(n));
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(config.restarts.max(1));
    let corner: Vec<f64> = transform
        .kinds
        .iter()
        .map(|k| match k {
            TransformKind::Continuous { h_max, .. } => h_max.ln(),
            TransformKind::Discrete { .. } => corner_theta,
        })
        .collect();
    starts.push(corner);
    if config.restarts > 1 {
        let rot: Vec<f64> = meta
            .iter()
            .map(|m| match m.kind {
                VariableKind::Continuous => rule_of_thumb(m.sd, n_eff).ln(),
                _ => logit(0.25),
            })
            .collect();
        starts.push(rot);
    }
    if config.restarts > 2 {
        let under: Vec<f64> = meta
            .iter()
            .map(|m| match m.kind {
                VariableKind::Continuous => (0.3 * rule_of_thumb(m.sd, n_eff)).ln(),
                _ => logit(0.05),
            })
            .collect();
        starts.push(under);
    }
    while starts.len() < config.restarts {
        let point: Vec<f64> = transform
            .kinds
            .iter()
            .zip(meta)
            .map(|(k, m)| match k {
                TransformKind::Continuous { h_max, .. } => {
                    if rng.gen_bool(0.5) {
                        h_max.ln()
                    } else {
                        rule_of_thumb(m.sd, n_eff).ln() + rng.gen_range(-2.3..2.3)
                    }
                }
                TransformKind::Discrete { .. } => {
                    if rng.gen_bool(0.5) {
                        corner_theta
                    } else {
                        logit(rng.gen_range(0.05..0.95))
                    }
                }
            })
            .collect();
        starts.push(point);
    }

    // Candidates: every initial point plus every simplex result, snapped and
    // re-scored; the minimum wins, earliest candidate on ties.
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |theta: &[f64], best: &mut Option<(f64, Vec<f64>)>| {
        let mut bw = transform.to_bandwidths(theta);
        transform.snap(&mut bw);
        let value = engine.cv(&bw);
        if value.is_finite() && best.as_ref().map_or(true, |(b, _)| value < *b) {
            *best = Some((value, bw));
        }
    };
    for start in &starts {
        consider(start, &mut best);
        let result = nelder_mead(&objective, start, 0.7, config.tol_rel, config.max_iter);
        consider(&result.point, &mut best);
    }

    match best {
        Some((_, bw)) => Ok(BandwidthVector::new(bw)),
        None => Err(Error::OptimizerFailure(format!(
            "all {} starts produced non-finite CV values on {n} rows, {p} columns",
            starts.len()
        ))),
    }
}

/// Keep covariate k when its bandwidth stays strictly below the threshold
/// for its kind; a bandwidth at or above the threshold drops it.
pub fn screen(bw: &BandwidthVector, policy: &ThresholdPolicy, meta: &[ColumnMeta]) -> IndexSet {
    meta.iter()
        .enumerate()
        .filter(|(j, m)| bw.values[*j] < policy.for_column(m))
        .map(|(j, _)| j)
        .collect()
}

/// CSV audit of a fitted bandwidth vector against its thresholds.
pub fn bandwidth_report_csv(
    bw: &BandwidthVector,
    policy: &ThresholdPolicy,
    meta: &[ColumnMeta],
    names: &[String],
) -> String {
    let mut out = String::from("column,kind,bandwidth,threshold,retained\n");
    for (j, m) in meta.iter().enumerate() {
        let threshold = policy.for_column(m);
        let retained = bw.values[j] < threshold;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            names.get(j).map_or_else(|| format!("X{}", j + 1), Clone::clone),
            m.kind,
            bw.values[j],
            threshold,
            retained
        ));
    }
    out
}
