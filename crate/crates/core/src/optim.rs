//! Derivative-free simplex minimizer used by the bandwidth search.

/// Outcome of one simplex run.
#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder-Mead with standard coefficients (reflect 1, expand 2, contract
/// 0.5, shrink 0.5). Stops when the simplex value spread falls below
/// `tol_rel` relative to the best value, or after `max_iter` iterations.
pub fn nelder_mead<F>(
    objective: F,
    start: &[f64],
    initial_step: f64,
    tol_rel: f64,
    max_iter: usize,
) -> SimplexResult
where
    F: Fn(&[f64]) -> f64,
{
    let dim = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((start.to_vec(), objective(start)));
    for j in 0..dim {
        let mut v = start.to_vec();
        v[j] += initial_step;
        let f = objective(&v);
        simplex.push((v, f));
    }

    let order = |s: &mut Vec<(Vec<f64>, f64)>| {
        s.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    };
    order(&mut simplex);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        if !best.is_finite() {
            break;
        }
        if (worst - best).abs() <= tol_rel * (best.abs() + 1e-12) {
            converged = true;
            break;
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; dim];
        for vertex in simplex.iter().take(dim) {
            for j in 0..dim {
                centroid[j] += vertex.0[j];
            }
        }
        for c in &mut centroid {
            *c /= dim as f64;
        }

        let blend = |alpha: f64| -> Vec<f64> {
            (0..dim).map(|j| centroid[j] + alpha * (centroid[j] - simplex[dim].0[j])).collect()
        };

        let reflected = blend(1.0);
        let f_reflected = objective(&reflected);
        if f_reflected < simplex[0].1 {
            let expanded = blend(2.0);
            let f_expanded = objective(&expanded);
            simplex[dim] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
        } else if f_reflected < simplex[dim - 1].1 {
            simplex[dim] = (reflected, f_reflected);
        } else {
            let contracted = if f_reflected < simplex[dim].1 {
                blend(0.5)
            } else {
                blend(-0.5)
            };
            let f_contracted = objective(&contracted);
            if f_contracted < simplex[dim].1.min(f_reflected) {
                simplex[dim] = (contracted, f_contracted);
            } else {
                // Shrink toward the best vertex.
                let best_point = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    for j in 0..dim {
                        vertex.0[j] = best_point[j] + 0.5 * (vertex.0[j] - best_point[j]);
                    }
                    vertex.1 = objective(&vertex.0);
                }
            }
        }
        order(&mut simplex);
    }

    order(&mut simplex);
    SimplexResult {
        point: simplex[0].0.clone(),
        value: simplex[0].1,
        iterations,
        converged,
    }
}
