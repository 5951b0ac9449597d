//! Matching estimators for average treatment effects: single nearest
//! neighbor with replacement, on either the raw covariate vector norm or a
//! logistic propensity score, assembled into ATE and ATT estimates.

use crate::data::{Dataset, IndexSet};
use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView2};

/// Fitted logistic propensity model.
#[derive(Debug, Clone)]
pub struct PropensityModel {
    pub intercept: f64,
    /// Coefficients aligned with the matching covariate set.
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl PropensityModel {
    pub fn score(&self, row: &[f64]) -> f64 {
        let eta = self.intercept
            + self.coefficients.iter().zip(row).map(|(c, v)| c * v).sum::<f64>();
        1.0 / (1.0 + (-eta).exp())
    }
}

/// Maximum-likelihood logistic fit by iteratively reweighted least squares.
/// Stops when the score max-norm drops below 1e-8 (plus two polish steps) or
/// after 100 iterations. Diverging coefficients with a still-improving
/// likelihood are reported as separation.
pub fn fit_logistic(treated: &[bool], s: ArrayView2<'_, f64>) -> Result<PropensityModel> {
    let n = s.nrows();
    let d = s.ncols();
    if treated.len() != n {
        return Err(Error::InvalidArgument("treatment length mismatch".into()));
    }
    let n1 = treated.iter().filter(|&&t| t).count();
    if n1 == 0 || n1 == n {
        return Err(Error::EmptyArm { arm: u8::from(n1 == 0) });
    }

    let dim = d + 1;
    let mut beta = nalgebra::DVector::<f64>::zeros(dim);
    let design = {
        let mut m = nalgebra::DMatrix::<f64>::zeros(n, dim);
        for i in 0..n {
            m[(i, 0)] = 1.0;
            for j in 0..d {
                m[(i, j + 1)] = s[(i, j)];
            }
        }
        m
    };
    let target =
        nalgebra::DVector::<f64>::from_iterator(n, treated.iter().map(|&t| f64::from(t)));

    let log_likelihood = |beta: &nalgebra::DVector<f64>| -> f64 {
        let eta = &design * beta;
        let mut ll = 0.0;
        for i in 0..n {
            // log sigma(eta) and log(1 - sigma(eta)) in a stable form.
            let e = eta[i];
            let log1p_exp = if e > 30.0 { e } else { e.exp().ln_1p() };
            ll += target[i] * e - log1p_exp;
        }
        ll
    };

    let mut previous_ll = f64::NEG_INFINITY;
    let mut gradient_norm = f64::INFINITY;
    let mut iterations = 0;
    let mut polish = 0;
    while iterations < 100 {
        iterations += 1;
        let eta = &design * &beta;
        let mut prob = nalgebra::DVector::<f64>::zeros(n);
        let mut weight = nalgebra::DVector::<f64>::zeros(n);
        for i in 0..n {
            let p = 1.0 / (1.0 + (-eta[i]).exp());
            prob[i] = p;
            weight[i] = (p * (1.0 - p)).max(1e-12);
        }
        let score = design.transpose() * (&target - &prob);
        gradient_norm = score.amax();

        if gradient_norm < 1e-8 {
            polish += 1;
            if polish > 2 {
                break;
            }
        }

        let ll = log_likelihood(&beta);
        if beta.norm() > 1e3 && ll > previous_ll {
            return Err(Error::Separation);
        }
        previous_ll = ll;

        // Newton step: (X' W X) delta = X'(t - p).
        let mut hessian = nalgebra::DMatrix::<f64>::zeros(dim, dim);
        for a in 0..dim {
            for b in a..dim {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += design[(i, a)] * design[(i, b)] * weight[i];
                }
                hessian[(a, b)] = acc;
                hessian[(b, a)] = acc;
            }
        }
        let delta = hessian
            .cholesky()
            .map(|ch| ch.solve(&score))
            .or_else(|| hessian.clone().lu().solve(&score))
            .ok_or(Error::SingularDesign)?;
        beta += delta;
        if polish > 2 {
            break;
        }
    }

    Ok(PropensityModel {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        iterations,
        gradient_norm,
    })
}

/// Direction of the matching pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchDirection {
    /// Every unit is matched to its nearest opposite-arm unit (ATE).
    BothArms,
    /// Only treated units are matched, against controls (ATT).
    ControlsToTreated,
}

/// Nearest-neighbor assignment with replacement.
#[derive(Debug, Clone)]
pub struct MatchAssignment {
    /// Matched opposite-arm unit per unit; `None` where no match was sought.
    pub matched: Vec<Option<usize>>,
    /// Euclidean distance at the match.
    pub distance: Vec<f64>,
    /// How often each unit serves as somebody's match.
    pub multiplicity: Vec<usize>,
}

/// Single nearest neighbor from the opposite arm, with replacement, ties
/// broken by the lowest index. Distances compare as exact squared norms.
pub fn match_nearest(
    values: ArrayView2<'_, f64>,
    treated: &[bool],
    direction: MatchDirection,
) -> Result<MatchAssignment> {
    let n = values.nrows();
    if treated.len() != n {
        return Err(Error::InvalidArgument("treatment length mismatch".into()));
    }
    let treated_rows: Vec<usize> = (0..n).filter(|&i| treated[i]).collect();
    let control_rows: Vec<usize> = (0..n).filter(|&i| !treated[i]).collect();
    if treated_rows.is_empty() {
        return Err(Error::EmptyArm { arm: 1 });
    }
    if control_rows.is_empty() {
        return Err(Error::EmptyArm { arm: 0 });
    }

    let squared = |a: usize, b: usize| -> f64 {
        let mut acc = 0.0;
        for j in 0..values.ncols() {
            let d = values[(a, j)] - values[(b, j)];
            acc += d * d;
        }
        acc
    };

    let mut matched = vec![None; n];
    let mut distance = vec![f64::NAN; n];
    let mut multiplicity = vec![0usize; n];
    for i in 0..n {
        let pool = if treated[i] {
            &control_rows
        } else {
            if direction == MatchDirection::ControlsToTreated {
                continue;
            }
            &treated_rows
        };
        let mut best = pool[0];
        let mut best_d = squared(i, best);
        for &cand in &pool[1..] {
            let d = squared(i, cand);
            // Strict < keeps the earliest (lowest-index) minimum.
            if d < best_d {
                best = cand;
                best_d = d;
            }
        }
        matched[i] = Some(best);
        distance[i] = best_d.sqrt();
        multiplicity[best] += 1;
    }
    Ok(MatchAssignment { matched, distance, multiplicity })
}

/// Which effect is being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimand {
    Ate,
    Att,
}

impl std::fmt::Display for Estimand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimand::Ate => write!(f, "ate"),
            Estimand::Att => write!(f, "att"),
        }
    }
}

/// Matching variable: raw covariates or the fitted propensity score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    VectorNorm,
    PropensityScore,
}

impl std::fmt::Display for MatchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MatchMode::VectorNorm => write!(f, "norm"),
            MatchMode::PropensityScore => write!(f, "pscore"),
        }
    }
}

/// One estimated effect.
#[derive(Debug, Clone)]
pub struct EffectEstimate {
    pub estimand: Estimand,
    pub value: f64,
    pub mode: MatchMode,
    pub covariate_set: IndexSet,
    pub n: usize,
    pub n_treated: usize,
}

impl EffectEstimate {
    /// One CSV row: estimand, mode, covariate set, value, n, n_treated.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},\"{}\",{},{},{}\n",
            self.estimand,
            self.mode,
            self.covariate_set.display_one_based(),
            self.value,
            self.n,
            self.n_treated
        )
    }
}

/// Matching values for the requested mode: the raw covariate columns of the
/// set, or the fitted propensity score as a single column.
fn matching_values(ds: &Dataset, set: &IndexSet, mode: MatchMode) -> Result<Array2<f64>> {
    set.check_bounds(ds.p())?;
    match mode {
        MatchMode::VectorNorm => {
            if set.is_empty() {
                return Err(Error::EmptyMatchSet);
            }
            Ok(ds.select_columns(set))
        }
        MatchMode::PropensityScore => {
            let s = ds.select_columns(set);
            let model = fit_logistic(ds.treated(), s.view())?;
            let n = ds.n();
            let mut scores = Array2::zeros((n, 1));
            for i in 0..n {
                let row: Vec<f64> = s.row(i).to_vec();
                scores[(i, 0)] = model.score(&row);
            }
            Ok(scores)
        }
    }
}

/// Average treatment effect: each unit's missing potential outcome is
/// imputed from its nearest opposite-arm match, and the estimate averages
/// the imputed individual effects over all units.
pub fn estimate_ate(ds: &Dataset, set: &IndexSet, mode: MatchMode) -> Result<EffectEstimate> {
    let values = matching_values(ds, set, mode)?;
    let assignment = match_nearest(values.view(), ds.treated(), MatchDirection::BothArms)?;
    let y = ds.y();
    let n = ds.n();
    let mut total = 0.0;
    for i in 0..n {
        let m = assignment.matched[i].expect("both-arms matching covers every unit");
        let (y1, y0) = if ds.treated()[i] { (y[i], y[m]) } else { (y[m], y[i]) };
        total += y1 - y0;
    }
    Ok(EffectEstimate {
        estimand: Estimand::Ate,
        value: total / n as f64,
        mode,
        covariate_set: set.clone(),
        n,
        n_treated: ds.n_treated(),
    })
}

/// Average treatment effect on the treated: matches drawn from controls only.
pub fn estimate_att(ds: &Dataset, set: &IndexSet, mode: MatchMode) -> Result<EffectEstimate> {
    let values = matching_values(ds, set, mode)?;
    let assignment =
        match_nearest(values.view(), ds.treated(), MatchDirection::ControlsToTreated)?;
    let y = ds.y();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..ds.n() {
        if ds.treated()[i] {
            let m = assignment.matched[i].expect("treated units are matched");
            total += y[i] - y[m];
            count += 1;
        }
    }
    Ok(EffectEstimate {
        estimand: Estimand::Att,
        value: total / count as f64,
        mode,
        covariate_set: set.clone(),
        n: ds.n(),
        n_treated: count,
    })
}
