//! Screening backend for all-continuous covariates: sliced inverse
//! regression with marginal coordinate tests in a backward elimination loop.
//!
//! The test for one covariate asks whether the central subspace of the
//! response given the covariates has any component along that coordinate.
//! The statistic is n times the squared norm of the weighted slice-mean
//! vector projected on the coordinate's hypothesis direction; its null law
//! is a weighted chi-square mixture whose weights are estimated from an
//! influence-function plug-in covariance.

use crate::data::{IndexSet, VariableKind};
use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Centered and whitened covariate matrix with the transform that built it.
#[derive(Debug, Clone)]
pub struct StandardizedDesign {
    /// n x p whitened data: each column mean 0, sample covariance identity.
    pub z: Array2<f64>,
    pub center: Array1<f64>,
    /// Symmetric inverse square root of the sample covariance.
    pub whitener: Array2<f64>,
}

/// Sliced inverse regression fit on a standardized design.
#[derive(Debug, Clone)]
pub struct SirFit {
    pub slice_count: usize,
    /// Slice proportions, summing to one.
    pub slice_props: Vec<f64>,
    /// h x p within-slice means of the whitened data.
    pub slice_means: Array2<f64>,
    /// p x p weighted between-slice covariance of the whitened data.
    pub m: Array2<f64>,
    /// Eigenvalues of `m`, descending.
    pub eigenvalues: Vec<f64>,
    /// Matching eigenvectors as columns.
    pub eigenvectors: Array2<f64>,
    /// Selected dimension of the central subspace.
    pub dim: usize,
    /// Slice index per observation.
    pub slice_of: Vec<usize>,
    /// Set when the response carried no usable variation.
    pub degenerate: bool,
}

/// How the weighted chi-square mixture p-value is computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PValueMethod {
    /// Two-moment-matched scaled chi-square (default).
    MomentMatched,
    /// Monte Carlo over the mixture with the given draw count and seed.
    MonteCarloMixture { draws: usize, seed: u64 },
}

/// Result of a marginal coordinate test.
#[derive(Debug, Clone)]
pub struct CoordinateTest {
    /// 0-based index of the tested covariate (within the tested matrix).
    pub target: usize,
    pub statistic: f64,
    /// Estimated eigenvalue weights of the null mixture.
    pub weights: Vec<f64>,
    pub p_value: f64,
    pub method: PValueMethod,
    /// Set when the fit carried no signal and the test defaulted to p = 1.
    pub degenerate: bool,
}

/// Kind of response handed to the screening backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseKind {
    Binary,
    Continuous,
}

/// Settings for the SDR screen.
#[derive(Debug, Clone)]
pub struct SdrSettings {
    /// Backward elimination level.
    pub alpha: f64,
    /// Slice count for continuous responses; reduced to n/20 when that is smaller.
    pub slices: usize,
    /// Level for the sequential dimension tests.
    pub dim_level: f64,
    pub p_value: PValueMethod,
    /// Condition-number cap for the covariance inverse square root.
    pub condition_cap: f64,
}

impl Default for SdrSettings {
    fn default() -> Self {
        SdrSettings {
            alpha: 0.10,
            slices: 10,
            dim_level: 0.05,
            p_value: PValueMethod::MomentMatched,
            condition_cap: 1e10,
        }
    }
}

/// Symmetric eigen-decomposition, eigenvalues descending.
fn symmetric_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let p = a.nrows();
    let mat = nalgebra::DMatrix::from_fn(p, p, |i, j| a[(i, j)]);
    let eig = mat.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).expect("finite eigenvalues")
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Array2::zeros((p, p));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..p {
            vectors[(row, col)] = eig.eigenvectors[(row, src)];
        }
    }
    (values, vectors)
}

/// Center and whiten a continuous covariate matrix.
pub fn standardize(x: ArrayView2<'_, f64>, condition_cap: f64) -> Result<StandardizedDesign> {
    let n = x.nrows();
    let p = x.ncols();
    if n <= p {
        return Err(Error::InvalidArgument(format!(
            "need more rows than columns to whiten ({n} rows, {p} columns)"
        )));
    }
    let center = x.mean_axis(Axis(0)).expect("n > 0");
    let mut centered = x.to_owned();
    for mut row in centered.rows_mut() {
        row -= &center;
    }
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let (values, vectors) = symmetric_eigen(&cov);
    let max_ev = values[0].max(0.0);
    let min_ev = values[p - 1];
    let condition = if min_ev > 0.0 { max_ev / min_ev } else { f64::INFINITY };
    if !condition.is_finite() || condition > condition_cap {
        // Columns loading on the smallest-eigenvalue direction are the culprits.
        let v_min = vectors.column(p - 1);
        let peak = v_min.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        let columns: Vec<usize> = (0..p).filter(|&j| v_min[j].abs() >= 0.5 * peak).collect();
        return Err(Error::SingularCovariance { condition, columns });
    }
    let mut whitener = Array2::zeros((p, p));
    for a in 0..p {
        for b in 0..p {
            let mut acc = 0.0;
            for k in 0..p {
                acc += vectors[(a, k)] * vectors[(b, k)] / values[k].sqrt();
            }
            whitener[(a, b)] = acc;
        }
    }
    let z = centered.dot(&whitener);
    Ok(StandardizedDesign { z, center, whitener })
}

/// Slice assignment: per-observation slice index and number of slices.
fn assign_slices(
    response: &[f64],
    kind: ResponseKind,
    h: usize,
) -> Result<(Vec<usize>, usize)> {
    let n = response.len();
    match kind {
        ResponseKind::Binary => {
            let mut levels: Vec<f64> = response.to_vec();
            levels.sort_by(|a, b| a.partial_cmp(b).expect("finite response"));
            levels.dedup();
            if levels.len() != 2 {
                return Err(Error::InvalidArgument(format!(
                    "binary response must take exactly 2 values, found {}",
                    levels.len()
                )));
            }
            let slice_of: Vec<usize> =
                response.iter().map(|&v| usize::from(v == levels[1])).collect();
            for s in 0..2 {
                let count = slice_of.iter().filter(|&&v| v == s).count();
                if count < 2 {
                    return Err(Error::SliceTooSmall { slice: s, got: count });
                }
            }
            Ok((slice_of, 2))
        }
        ResponseKind::Continuous => {
            if h < 3 {
                return Err(Error::InvalidArgument(format!(
                    "continuous responses need at least 3 slices, got {h}"
                )));
            }
            if h > n / 2 {
                return Err(Error::TooManySlices { h, n, max: n / 2 });
            }
            // Contiguous in sorted response order, sizes differing by at most 1.
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| {
                response[i].partial_cmp(&response[j]).expect("finite response").then(i.cmp(&j))
            });
            let base = n / h;
            let extra = n % h;
            let mut slice_of = vec![0usize; n];
            let mut pos = 0;
            for s in 0..h {
                let size = base + usize::from(s < extra);
                if size < 2 {
                    return Err(Error::SliceTooSmall { slice: s, got: size });
                }
                for _ in 0..size {
                    slice_of[order[pos]] = s;
                    pos += 1;
                }
            }
            Ok((slice_of, h))
        }
    }
}

fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// Fit sliced inverse regression on a standardized design.
///
/// A constant response yields a degenerate single-slice fit with zero
/// between-slice covariance; downstream tests treat it as "no signal".
pub fn sir_fit(
    design: &StandardizedDesign,
    response: &[f64],
    kind: ResponseKind,
    h: usize,
    dim_level: f64,
) -> Result<SirFit> {
    let n = design.z.nrows();
    let p = design.z.ncols();
    if response.len() != n {
        return Err(Error::InvalidArgument(format!(
            "response length {} does not match {n} rows",
            response.len()
        )));
    }
    if is_constant(response) {
        return Ok(SirFit {
            slice_count: 1,
            slice_props: vec![1.0],
            slice_means: Array2::zeros((1, p)),
            m: Array2::zeros((p, p)),
            eigenvalues: vec![0.0; p],
            eigenvectors: Array2::eye(p),
            dim: 0,
            slice_of: vec![0; n],
            degenerate: true,
        });
    }

    let (slice_of, h) = assign_slices(response, kind, h)?;
    let mut counts = vec![0usize; h];
    let mut means = Array2::zeros((h, p));
    for i in 0..n {
        let s = slice_of[i];
        counts[s] += 1;
        for j in 0..p {
            means[(s, j)] += design.z[(i, j)];
        }
    }
    let mut props = vec![0.0; h];
    for s in 0..h {
        props[s] = counts[s] as f64 / n as f64;
        for j in 0..p {
            means[(s, j)] /= counts[s] as f64;
        }
    }

    let mut m = Array2::zeros((p, p));
    for s in 0..h {
        for a in 0..p {
            for b in 0..p {
                m[(a, b)] += props[s] * means[(s, a)] * means[(s, b)];
            }
        }
    }
    let (mut eigenvalues, eigenvectors) = symmetric_eigen(&m);
    for ev in &mut eigenvalues {
        *ev = ev.max(0.0);
    }

    let dim = select_dimension(&eigenvalues, n, p, h, dim_level);
    Ok(SirFit {
        slice_count: h,
        slice_props: props,
        slice_means: means,
        m,
        eigenvalues,
        eigenvectors,
        dim,
        slice_of,
        degenerate: false,
    })
}

/// Sequential tests on trailing eigenvalues: the smallest k whose trailing
/// mass is consistent with noise, at least 1, at most min(h-1, p).
fn select_dimension(eigenvalues: &[f64], n: usize, p: usize, h: usize, level: f64) -> usize {
    let max_dim = (h - 1).min(p);
    let mut k = 0;
    while k < max_dim {
        let trailing: f64 = eigenvalues[k..].iter().sum();
        let statistic = n as f64 * trailing;
        let df = ((p - k) * (h - 1 - k)) as f64;
        if df <= 0.0 {
            break;
        }
        let p_value = chi_square_sf(statistic, df);
        if p_value > level {
            break;
        }
        k += 1;
    }
    k.clamp(1, max_dim)
}

fn chi_square_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df).expect("positive degrees of freedom");
    (1.0 - dist.cdf(x)).clamp(0.0, 1.0)
}

/// Survival function of sum_i w_i * chi^2_1 at `t`, two-moment-matched to a
/// scaled chi-square.
pub fn mixture_sf_moment_matched(weights: &[f64], t: f64) -> f64 {
    let s1: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s1 <= 0.0 || s2 <= 0.0 {
        return 1.0;
    }
    let scale = s2 / s1;
    let df = s1 * s1 / s2;
    chi_square_sf(t / scale, df)
}

/// Survival function of the mixture estimated by Monte Carlo.
pub fn mixture_sf_monte_carlo(weights: &[f64], t: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exceed = 0usize;
    for _ in 0..draws {
        let mut sum = 0.0;
        for &w in weights {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            sum += w * z * z;
        }
        if sum >= t {
            exceed += 1;
        }
    }
    (exceed + 1) as f64 / (draws + 1) as f64
}

/// Marginal coordinate test: does covariate `target` contribute to the
/// central subspace of the response used to build `fit`?
pub fn coordinate_test(
    design: &StandardizedDesign,
    fit: &SirFit,
    target: usize,
    method: PValueMethod,
) -> Result<CoordinateTest> {
    let n = design.z.nrows();
    let p = design.z.ncols();
    if target >= p {
        return Err(Error::IndexOutOfRange { index: target, p });
    }
    if fit.slice_of.len() != n {
        return Err(Error::InvalidArgument(
            "fit was computed on a different design".into(),
        ));
    }
    let max_ev = fit.eigenvalues.first().copied().unwrap_or(0.0);
    if fit.degenerate || max_ev <= 1e-12 {
        return Ok(CoordinateTest {
            target,
            statistic: 0.0,
            weights: Vec::new(),
            p_value: 1.0,
            method,
            degenerate: true,
        });
    }

    // Hypothesis direction for the original coordinate, mapped through the
    // whitener: u = W e_target / |W e_target|.
    let w_col = design.whitener.column(target);
    let norm = w_col.dot(&w_col).sqrt();
    let u: Array1<f64> = w_col.map(|v| v / norm);

    let h = fit.slice_count;
    // Projected slice means and the statistic n * sum_s f_s (u' xi_s)^2.
    let mut proj = vec![0.0; h];
    for s in 0..h {
        proj[s] = fit.slice_means.row(s).dot(&u);
    }
    let statistic: f64 =
        n as f64 * (0..h).map(|s| fit.slice_props[s] * proj[s] * proj[s]).sum::<f64>();

    // Influence-function plug-in for the covariance of the scaled projected
    // slice-mean vector w_s = sqrt(n f_s) u' xi_s. Per observation i:
    //   phi_{s,i} = zeta_i * (1{i in s}/f_s - 1 - z_i' xi_s)
    // with zeta_i = u' z_i; Gamma_{ss'} = sqrt(f_s f_s') mean_i phi_s phi_s'.
    let zeta: Vec<f64> = design.z.rows().into_iter().map(|row| row.dot(&u)).collect();
    let mut gamma = vec![vec![0.0; h]; h];
    let mut phi = vec![0.0; h];
    for i in 0..n {
        let zi = design.z.row(i);
        for s in 0..h {
            let dot = fit.slice_means.row(s).dot(&zi);
            let indicator = if fit.slice_of[i] == s { 1.0 / fit.slice_props[s] } else { 0.0 };
            phi[s] = zeta[i] * (indicator - 1.0 - dot);
        }
        for s in 0..h {
            for t in s..h {
                gamma[s][t] += phi[s] * phi[t];
            }
        }
    }
    let mut gamma_mat = Array2::zeros((h, h));
    for s in 0..h {
        for t in s..h {
            let v = (fit.slice_props[s] * fit.slice_props[t]).sqrt() * gamma[s][t] / n as f64;
            gamma_mat[(s, t)] = v;
            gamma_mat[(t, s)] = v;
        }
    }
    let (raw_weights, _) = symmetric_eigen(&gamma_mat);
    let peak = raw_weights.first().copied().unwrap_or(0.0).max(0.0);
    let weights: Vec<f64> =
        raw_weights.into_iter().map(|w| w.max(0.0)).filter(|&w| w > 1e-12 * peak.max(1.0)).collect();

    let p_value = match method {
        PValueMethod::MomentMatched => mixture_sf_moment_matched(&weights, statistic),
        PValueMethod::MonteCarloMixture { draws, seed } => {
            mixture_sf_monte_carlo(&weights, statistic, draws, seed)
        }
    };
    Ok(CoordinateTest { target, statistic, weights, p_value, method, degenerate: false })
}

/// One removal step of the elimination trace.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub round: usize,
    /// 0-based index into the matrix handed to `backward_eliminate`.
    pub removed: usize,
    pub p_value: f64,
}

/// Elimination trace, serializable as CSV for audit.
#[derive(Debug, Clone, Default)]
pub struct EliminationTrace {
    pub steps: Vec<TraceStep>,
}

impl EliminationTrace {
    /// CSV rows `round,removed_index,p_value` with 1-based indices.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("round,removed_index,p_value\n");
        for step in &self.steps {
            out.push_str(&format!("{},{},{}\n", step.round, step.removed + 1, step.p_value));
        }
        out
    }
}

/// Effective slice count for a sample of size n.
fn effective_slices(requested: usize, n: usize) -> usize {
    requested.min((n / 20).max(3))
}

/// Backward elimination over all-continuous covariates: refit, test every
/// remaining coordinate, drop the least significant while it stays above
/// `alpha`. Ties on the maximal p-value remove the higher index.
pub fn backward_eliminate(
    response: &[f64],
    kind: ResponseKind,
    x: ArrayView2<'_, f64>,
    kinds: &[VariableKind],
    settings: &SdrSettings,
) -> Result<(IndexSet, EliminationTrace)> {
    if let Some(col) = kinds.iter().position(|k| !k.is_continuous()) {
        return Err(Error::NeedsContinuous { column: col, kind: kinds[col].to_string() });
    }
    if !(settings.alpha > 0.0 && settings.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie strictly between 0 and 1, got {}",
            settings.alpha
        )));
    }
    let n = x.nrows();
    let mut active: Vec<usize> = (0..x.ncols()).collect();
    let mut trace = EliminationTrace::default();
    let mut round = 0;
    while !active.is_empty() {
        round += 1;
        let xa = x.select(Axis(1), &active);
        let design = standardize(xa.view(), settings.condition_cap)?;
        let h = match kind {
            ResponseKind::Binary => 2,
            ResponseKind::Continuous => effective_slices(settings.slices, n),
        };
        let fit = sir_fit(&design, response, kind, h, settings.dim_level)?;
        let mut worst: Option<(usize, f64)> = None;
        for pos in 0..active.len() {
            let test = coordinate_test(&design, &fit, pos, settings.p_value)?;
            let better = match worst {
                None => true,
                // >= prefers the later position on exact ties; positions scan
                // ascending, so a tie removes the higher index.
                Some((_, best_p)) => test.p_value >= best_p,
            };
            if better {
                worst = Some((pos, test.p_value));
            }
        }
        let (pos, p_value) = worst.expect("at least one active covariate");
        if p_value > settings.alpha {
            trace.steps.push(TraceStep { round, removed: active[pos], p_value });
            active.remove(pos);
        } else {
            break;
        }
    }
    Ok((IndexSet::new(active)?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((n, p), |_| StandardNormal.sample(rng))
    }

    fn sample_cov(z: &Array2<f64>) -> Array2<f64> {
        let n = z.nrows() as f64;
        let mean = z.mean_axis(Axis(0)).unwrap();
        let mut c = z.clone();
        for mut row in c.rows_mut() {
            row -= &mean;
        }
        c.t().dot(&c) / (n - 1.0)
    }

    #[test]
    fn standardize_identity_input_stays_put() {
        // Build data whose sample covariance is exactly the identity by
        // whitening once, then re-standardize: the second whitener is ~I.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = randn(200, 3, &mut rng);
        let first = standardize(x.view(), 1e10).unwrap();
        let second = standardize(first.z.view(), 1e10).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert_relative_eq!(second.whitener[(a, b)], expect, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn standardize_invariants_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = randn(500, 4, &mut rng);
        let design = standardize(x.view(), 1e10).unwrap();
        let means = design.z.mean_axis(Axis(0)).unwrap();
        for j in 0..4 {
            assert!(means[j].abs() < 1e-8);
        }
        let cov = sample_cov(&design.z);
        let mut frob = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                let expect = if a == b { 1.0 } else { 0.0 };
                frob += (cov[(a, b)] - expect).powi(2);
            }
        }
        assert!(frob.sqrt() < 1e-6);
    }

    #[test]
    fn standardize_rejects_duplicate_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = randn(100, 2, &mut rng);
        let mut x = Array2::zeros((100, 3));
        for i in 0..100 {
            x[(i, 0)] = base[(i, 0)];
            x[(i, 1)] = base[(i, 1)];
            x[(i, 2)] = base[(i, 0)];
        }
        let err = standardize(x.view(), 1e10).unwrap_err();
        match err {
            Error::SingularCovariance { columns, .. } => {
                assert!(columns.contains(&0) || columns.contains(&2));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn standardize_correlated_normals() {
        // X ~ N(0, Sigma) with corr 0.7 between the first two columns:
        // the whitened covariance is close to the identity.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 10_000;
        let mut x = randn(n, 3, &mut rng);
        for i in 0..n {
            let a = x[(i, 0)];
            let b = x[(i, 1)];
            x[(i, 1)] = 0.7 * a + (1.0f64 - 0.49).sqrt() * b;
        }
        let design = standardize(x.view(), 1e10).unwrap();
        let cov = sample_cov(&design.z);
        for a in 0..3 {
            for b in 0..3 {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((cov[(a, b)] - expect).abs() < 0.05);
            }
        }
    }

    #[test]
    fn sir_pure_noise_has_tiny_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 2000;
        let x = randn(n, 5, &mut rng);
        let response: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let design = standardize(x.view(), 1e10).unwrap();
        let fit = sir_fit(&design, &response, ResponseKind::Continuous, 10, 0.05).unwrap();
        for &ev in &fit.eigenvalues {
            assert!(ev < 0.02, "eigenvalue {ev} too large for a null fit");
        }
    }

    #[test]
    fn sir_binary_leading_direction_is_whitened_mean_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 10_000;
        let p = 4;
        let mut x = randn(n, p, &mut rng);
        let response: Vec<f64> = (0..n).map(|i| f64::from(i % 2 == 0)).collect();
        for i in 0..n {
            if response[i] == 1.0 {
                x[(i, 0)] += 0.8;
                x[(i, 2)] -= 0.4;
            }
        }
        let design = standardize(x.view(), 1e10).unwrap();
        let fit = sir_fit(&design, &response, ResponseKind::Binary, 2, 0.05).unwrap();
        assert_eq!(fit.slice_count, 2);
        // With two slices the candidate matrix has rank one, spanned by the
        // standardized mean difference.
        let gap: Vec<f64> =
            (0..p).map(|j| fit.slice_means[(1, j)] - fit.slice_means[(0, j)]).collect();
        let lead = fit.eigenvectors.column(0);
        let dot: f64 = (0..p).map(|j| gap[j] * lead[j]).sum();
        let gap_norm: f64 = gap.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cosine = (dot / gap_norm).abs();
        assert!(cosine >= 0.99, "cosine {cosine}");
        assert!(fit.eigenvalues[1] < 1e-10);
    }

    #[test]
    fn sir_recovers_single_index_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 5000;
        let p = 3;
        let x = randn(n, p, &mut rng);
        let response: Vec<f64> = (0..n)
            .map(|i| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                x[(i, 0)] + 0.1 * noise
            })
            .collect();
        let design = standardize(x.view(), 1e10).unwrap();
        let fit = sir_fit(&design, &response, ResponseKind::Continuous, 10, 0.05).unwrap();
        // Back-transform the leading whitened direction to original
        // coordinates: beta = W eta, then compare with e_1.
        let lead = fit.eigenvectors.column(0);
        let mut beta = vec![0.0; p];
        for a in 0..p {
            for b in 0..p {
                beta[a] += design.whitener[(a, b)] * lead[b];
            }
        }
        let norm: f64 = beta.iter().map(|v| v * v).sum::<f64>().sqrt();
        let cosine = (beta[0] / norm).abs();
        assert!(cosine >= 0.99, "cosine {cosine}");
        assert_eq!(fit.dim, 1);
    }

    #[test]
    fn sir_slice_sizes_differ_by_at_most_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 103;
        let x = randn(n, 2, &mut rng);
        let response: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let design = standardize(x.view(), 1e10).unwrap();
        let fit = sir_fit(&design, &response, ResponseKind::Continuous, 10, 0.05).unwrap();
        let mut counts = vec![0usize; fit.slice_count];
        for &s in &fit.slice_of {
            counts[s] += 1;
        }
        let min = *counts.iter().min().unwrap();
        let max = *counts.iter().max().unwrap();
        assert!(max - min <= 1);
        assert_eq!(counts.iter().sum::<usize>(), n);
    }

    #[test]
    fn sir_eigenvalues_within_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..20 {
            let n = 80 + 7 * trial;
            let x = randn(n, 4, &mut rng);
            let response: Vec<f64> = (0..n)
                .map(|i| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    (x[(i, 0)] + x[(i, 1)]).sin() + noise
                })
                .collect();
            let design = standardize(x.view(), 1e10).unwrap();
            let fit = sir_fit(&design, &response, ResponseKind::Continuous, 5, 0.05).unwrap();
            for &ev in &fit.eigenvalues {
                assert!((-1e-8..=1.0 + 1e-8).contains(&ev), "eigenvalue {ev} outside [0, 1]");
            }
        }
    }

    #[test]
    fn constant_response_gives_degenerate_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = randn(50, 3, &mut rng);
        let response = vec![1.5; 50];
        let design = standardize(x.view(), 1e10).unwrap();
        let fit = sir_fit(&design, &response, ResponseKind::Continuous, 5, 0.05).unwrap();
        assert!(fit.degenerate);
        let test = coordinate_test(&design, &fit, 0, PValueMethod::MomentMatched).unwrap();
        assert_eq!(test.statistic, 0.0);
        assert_eq!(test.p_value, 1.0);
        assert!(test.degenerate);
    }

    #[test]
    fn coordinate_test_invariant_to_rescaling_others() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 400;
        let p = 4;
        let x = randn(n, p, &mut rng);
        let response: Vec<f64> = (0..n)
            .map(|i| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                2.0 * x[(i, 1)] + noise
            })
            .collect();
        let run = |x: &Array2<f64>| {
            let design = standardize(x.view(), 1e10).unwrap();
            let fit = sir_fit(&design, &response, ResponseKind::Continuous, 8, 0.05).unwrap();
            coordinate_test(&design, &fit, 0, PValueMethod::MomentMatched).unwrap().statistic
        };
        let base = run(&x);
        // Invertible affine map of the non-target covariates (columns 1..4).
        let mut x2 = x.clone();
        for i in 0..n {
            let a = x[(i, 1)];
            let b = x[(i, 2)];
            let c = x[(i, 3)];
            x2[(i, 1)] = 3.0 * a + 5.0;
            x2[(i, 2)] = 0.5 * b + 0.25 * a - 1.0;
            x2[(i, 3)] = -2.0 * c + b;
        }
        let scaled = run(&x2);
        assert_relative_eq!(base, scaled, max_relative = 1e-8);
    }

    #[test]
    fn moment_matched_single_weight_is_chi_square() {
        // One unit weight: the mixture is exactly chi^2_1.
        let sf = mixture_sf_moment_matched(&[1.0], 3.841_458_820_694_124);
        assert_relative_eq!(sf, 0.05, epsilon = 1e-9);
    }

    #[test]
    fn monte_carlo_mixture_agrees_with_moment_match() {
        let weights = [1.0, 0.6, 0.2];
        let t = 4.0;
        let exact = mixture_sf_monte_carlo(&weights, t, 200_000, 77);
        let approx_p = mixture_sf_moment_matched(&weights, t);
        assert!((exact - approx_p).abs() < 0.02, "mc {exact} vs mm {approx_p}");
    }

    #[test]
    fn elimination_keeps_single_relevant_covariate() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 300;
        let x = randn(n, 1, &mut rng);
        let response: Vec<f64> = (0..n)
            .map(|i| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                3.0 * x[(i, 0)] + 0.5 * noise
            })
            .collect();
        let kinds = vec![VariableKind::Continuous];
        let settings = SdrSettings::default();
        let (kept, trace) =
            backward_eliminate(&response, ResponseKind::Continuous, x.view(), &kinds, &settings)
                .unwrap();
        assert_eq!(kept.members(), &[0]);
        assert!(trace.steps.is_empty());
    }

    #[test]
    fn elimination_rejects_discrete_columns() {
        let x = Array2::zeros((50, 2));
        let kinds = vec![VariableKind::Continuous, VariableKind::binary()];
        let err = backward_eliminate(
            &vec![0.0; 50],
            ResponseKind::Continuous,
            x.view(),
            &kinds,
            &SdrSettings::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NeedsContinuous { column: 1, .. }));
    }

    #[test]
    fn elimination_trace_pvalues_exceed_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 500;
        let x = randn(n, 6, &mut rng);
        let response: Vec<f64> = (0..n)
            .map(|i| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                2.0 * x[(i, 0)] - 1.5 * x[(i, 3)] + noise
            })
            .collect();
        let kinds = vec![VariableKind::Continuous; 6];
        let settings = SdrSettings::default();
        let (kept, trace) =
            backward_eliminate(&response, ResponseKind::Continuous, x.view(), &kinds, &settings)
                .unwrap();
        assert!(kept.contains(0) && kept.contains(3));
        for step in &trace.steps {
            assert!(step.p_value > settings.alpha);
            assert!(step.removed != 0 && step.removed != 3);
        }
        let csv = trace.to_csv_string();
        assert!(csv.starts_with("round,removed_index,p_value\n"));
    }

    #[test]
    fn elimination_is_label_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let n = 400;
        let x = randn(n, 5, &mut rng);
        let response: Vec<f64> = (0..n)
            .map(|i| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                2.0 * x[(i, 1)] + 2.0 * x[(i, 4)] + noise
            })
            .collect();
        let kinds = vec![VariableKind::Continuous; 5];
        let settings = SdrSettings::default();
        let (kept, _) =
            backward_eliminate(&response, ResponseKind::Continuous, x.view(), &kinds, &settings)
                .unwrap();
        // Permute columns with the cycle 0->2->4->1->3->0 and rerun.
        let perm = [2usize, 3, 4, 0, 1]; // new position of old column j
        let mut xp = Array2::zeros((n, 5));
        for i in 0..n {
            for j in 0..5 {
                xp[(i, perm[j])] = x[(i, j)];
            }
        }
        let (kept_p, _) =
            backward_eliminate(&response, ResponseKind::Continuous, xp.view(), &kinds, &settings)
                .unwrap();
        let expected: IndexSet = kept.members().iter().map(|&j| perm[j]).collect();
        assert_eq!(kept_p, expected);
    }
}
