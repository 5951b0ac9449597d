//! Backward-elimination selection algorithms over a pluggable
//! conditional-independence filter.
//!
//! Algorithm A first screens the treatment on all covariates, then screens
//! the observed outcome within each treatment arm on the surviving set.
//! Algorithm B screens the outcome within each arm on all covariates first,
//! then screens the treatment on each survivor set. Nesting of the step-2
//! sets inside their step-1 sets holds by construction.

use crate::data::{
    AlgorithmChoice, BackendKind, Dataset, IndexSet, Provenance, SelectionBundle, VariableKind,
};
use crate::error::Result;
use crate::kernel::{self, ColumnMeta, CvConfig, ThresholdPolicy};
use crate::sdr::{self, ResponseKind, SdrSettings};
use crate::seed;
use ndarray::ArrayView2;

/// A relevance filter maps (response, covariate submatrix) to the subset of
/// submatrix columns the response still depends on. Returned indices are
/// relative to the submitted submatrix; the orchestrator maps them back.
pub trait RelevanceFilter: Sync {
    fn filter(
        &self,
        response: &[f64],
        kind: ResponseKind,
        x: ArrayView2<'_, f64>,
        kinds: &[VariableKind],
        seed: u64,
    ) -> Result<IndexSet>;

    fn backend(&self) -> BackendKind;

    /// Settings recorded into bundle provenance.
    fn describe(&self) -> Vec<(String, String)>;
}

/// SIR + marginal coordinate tests; demands all-continuous covariates and
/// refuses anything else with an instructive error.
#[derive(Debug, Clone, Default)]
pub struct SdrFilter {
    pub settings: SdrSettings,
}

impl RelevanceFilter for SdrFilter {
    fn filter(
        &self,
        response: &[f64],
        kind: ResponseKind,
        x: ArrayView2<'_, f64>,
        kinds: &[VariableKind],
        _seed: u64,
    ) -> Result<IndexSet> {
        let (kept, _) = sdr::backward_eliminate(response, kind, x, kinds, &self.settings)?;
        Ok(kept)
    }

    fn backend(&self) -> BackendKind {
        BackendKind::Sdr
    }

    fn describe(&self) -> Vec<(String, String)> {
        vec![
            ("alpha".into(), format!("{}", self.settings.alpha)),
            ("slices".into(), format!("{}", self.settings.slices)),
        ]
    }
}

/// Cross-validated mixed-kernel smoothing; one CV fit per step, exclusion by
/// bandwidth threshold.
#[derive(Debug, Clone, Default)]
pub struct KernelFilter {
    pub cv: CvConfig,
    pub thresholds: ThresholdPolicy,
}

impl RelevanceFilter for KernelFilter {
    fn filter(
        &self,
        response: &[f64],
        _kind: ResponseKind,
        x: ArrayView2<'_, f64>,
        kinds: &[VariableKind],
        seed: u64,
    ) -> Result<IndexSet> {
        let meta = ColumnMeta::from_matrix(x, kinds);
        let bw = kernel::select_bandwidths(response, x, &meta, &self.cv, seed)?;
        Ok(kernel::screen(&bw, &self.thresholds, &meta))
    }

    fn backend(&self) -> BackendKind {
        BackendKind::Kernel
    }

    fn describe(&self) -> Vec<(String, String)> {
        vec![
            ("threshold_continuous".into(), format!("{}", self.thresholds.continuous)),
            ("threshold_ordered".into(), format!("{}", self.thresholds.ordered)),
            ("threshold_unordered".into(), format!("{}", self.thresholds.unordered)),
            ("cv_restarts".into(), format!("{}", self.cv.restarts)),
        ]
    }
}

fn subset_kinds(ds: &Dataset, set: &IndexSet) -> Vec<VariableKind> {
    set.members().iter().map(|&j| ds.columns()[j].kind).collect()
}

/// Map filter output (relative to a submatrix built from `base`) back to
/// original dataset indices.
fn map_back(base: &IndexSet, relative: &IndexSet) -> IndexSet {
    relative.members().iter().map(|&pos| base.members()[pos]).collect()
}

fn full_set(ds: &Dataset) -> IndexSet {
    (0..ds.p()).collect()
}

/// Algorithm A: treatment-side screen, then per-arm outcome screens inside
/// the surviving set. An empty treatment-side set short-circuits step 2 to
/// empty sets with a warning rather than an error.
pub fn run_algorithm_a(
    ds: &Dataset,
    filter: &dyn RelevanceFilter,
    master_seed: u64,
) -> Result<SelectionBundle> {
    let provenance = Provenance {
        algorithm: AlgorithmChoice::A,
        backend: filter.backend(),
        settings: filter.describe(),
        master_seed,
    };
    let mut bundle = SelectionBundle::empty(provenance);

    let all = full_set(ds);
    let treatment = ds.treatment_values();
    let x_t = map_back(
        &all,
        &filter.filter(
            &treatment,
            ResponseKind::Binary,
            ds.x().view(),
            &subset_kinds(ds, &all),
            seed::derive(master_seed, "a.step1.treatment"),
        )?,
    );

    if x_t.is_empty() {
        bundle.warnings.push(
            "treatment-side screen kept no covariates; outcome-side sets are empty".into(),
        );
        bundle.x_t = Some(IndexSet::empty());
        bundle.q0 = Some(IndexSet::empty());
        bundle.q1 = Some(IndexSet::empty());
        return Ok(bundle);
    }

    let sub_kinds = subset_kinds(ds, &x_t);
    let (arm1, arm0) = ds.split_by_treatment();
    let run_arm = |arm: &crate::data::ArmView, label: &str| -> Result<IndexSet> {
        let xa = arm.x.select(ndarray::Axis(1), x_t.members());
        let kept = filter.filter(
            &arm.y,
            ResponseKind::Continuous,
            xa.view(),
            &sub_kinds,
            seed::derive(master_seed, label),
        )?;
        Ok(map_back(&x_t, &kept))
    };
    let q0 = run_arm(&arm0, "a.step2.arm0")?;
    let q1 = run_arm(&arm1, "a.step2.arm1")?;

    debug_assert!(q0.is_subset_of(&x_t) && q1.is_subset_of(&x_t));
    bundle.x_t = Some(x_t);
    bundle.q0 = Some(q0);
    bundle.q1 = Some(q1);
    Ok(bundle)
}

/// Algorithm B: per-arm outcome screens on all covariates, then a
/// treatment-side screen on each survivor set over the full sample.
pub fn run_algorithm_b(
    ds: &Dataset,
    filter: &dyn RelevanceFilter,
    master_seed: u64,
) -> Result<SelectionBundle> {
    let provenance = Provenance {
        algorithm: AlgorithmChoice::B,
        backend: filter.backend(),
        settings: filter.describe(),
        master_seed,
    };
    let mut bundle = SelectionBundle::empty(provenance);

    let all = full_set(ds);
    let all_kinds = subset_kinds(ds, &all);
    let (arm1, arm0) = ds.split_by_treatment();

    let step1 = |arm: &crate::data::ArmView, label: &str| -> Result<IndexSet> {
        let kept = filter.filter(
            &arm.y,
            ResponseKind::Continuous,
            arm.x.view(),
            &all_kinds,
            seed::derive(master_seed, label),
        )?;
        Ok(map_back(&all, &kept))
    };
    let x0 = step1(&arm0, "b.step1.arm0")?;
    let x1 = step1(&arm1, "b.step1.arm1")?;

    let treatment = ds.treatment_values();
    let mut step2 = |x_t_side: &IndexSet, label: &str| -> Result<IndexSet> {
        if x_t_side.is_empty() {
            bundle.warnings.push(format!(
                "outcome-side screen ({label}) kept no covariates; its treatment-side set is empty"
            ));
            return Ok(IndexSet::empty());
        }
        let xa = ds.x().select(ndarray::Axis(1), x_t_side.members());
        let kept = filter.filter(
            &treatment,
            ResponseKind::Binary,
            xa.view(),
            &subset_kinds(ds, x_t_side),
            seed::derive(master_seed, label),
        )?;
        Ok(map_back(x_t_side, &kept))
    };
    let z0 = step2(&x0, "b.step2.arm0")?;
    let z1 = step2(&x1, "b.step2.arm1")?;

    debug_assert!(z0.is_subset_of(&x0) && z1.is_subset_of(&x1));
    bundle.x0 = Some(x0);
    bundle.x1 = Some(x1);
    bundle.z0 = Some(z0);
    bundle.z1 = Some(z1);
    Ok(bundle)
}

/// Run the requested algorithm(s), merging into one bundle.
pub fn run_selection(
    ds: &Dataset,
    filter: &dyn RelevanceFilter,
    choice: AlgorithmChoice,
    master_seed: u64,
) -> Result<SelectionBundle> {
    match choice {
        AlgorithmChoice::A => run_algorithm_a(ds, filter, master_seed),
        AlgorithmChoice::B => run_algorithm_b(ds, filter, master_seed),
        AlgorithmChoice::Both => {
            let a = run_algorithm_a(ds, filter, master_seed)?;
            let b = run_algorithm_b(ds, filter, master_seed)?;
            let mut merged = a;
            merged.provenance.algorithm = AlgorithmChoice::Both;
            merged.x0 = b.x0;
            merged.x1 = b.x1;
            merged.z0 = b.z0;
            merged.z1 = b.z1;
            merged.warnings.extend(b.warnings);
            Ok(merged)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use crate::error::Error;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Deterministic fake filter: keeps a fixed set of submatrix positions.
    struct FixedFilter(Vec<usize>);

    impl RelevanceFilter for FixedFilter {
        fn filter(
            &self,
            _response: &[f64],
            _kind: ResponseKind,
            x: ArrayView2<'_, f64>,
            _kinds: &[VariableKind],
            _seed: u64,
        ) -> Result<IndexSet> {
            Ok(self.0.iter().copied().filter(|&j| j < x.ncols()).collect())
        }

        fn backend(&self) -> BackendKind {
            BackendKind::Sdr
        }

        fn describe(&self) -> Vec<(String, String)> {
            vec![]
        }
    }

    /// Filter that drops everything.
    struct EmptyFilter;

    impl RelevanceFilter for EmptyFilter {
        fn filter(
            &self,
            _response: &[f64],
            _kind: ResponseKind,
            _x: ArrayView2<'_, f64>,
            _kinds: &[VariableKind],
            _seed: u64,
        ) -> Result<IndexSet> {
            Ok(IndexSet::empty())
        }

        fn backend(&self) -> BackendKind {
            BackendKind::Sdr
        }

        fn describe(&self) -> Vec<(String, String)> {
            vec![]
        }
    }

    fn toy_dataset(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut rng));
        let treatment: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_bool(0.5))).collect();
        let outcome: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let columns =
            (0..p).map(|j| Column::new(format!("X{}", j + 1), VariableKind::Continuous)).collect();
        Dataset::new(columns, x, treatment, outcome, None).unwrap()
    }

    #[test]
    fn nesting_holds_by_construction() {
        let ds = toy_dataset(60, 5, 1);
        // Step-1 keeps positions {0, 2, 4}; step-2 keeps positions {0, 1} of
        // the 3-column submatrix, i.e. original columns {0, 2}.
        let filter = FixedFilter(vec![0, 1, 2, 4]);
        let bundle = run_algorithm_a(&ds, &filter, 9).unwrap();
        let x_t = bundle.x_t.clone().unwrap();
        assert_eq!(x_t.members(), &[0, 1, 2, 4]);
        let q0 = bundle.q0.unwrap();
        assert!(q0.is_subset_of(&x_t));
        assert_eq!(q0.members(), &[0, 1, 2, 4]);
    }

    #[test]
    fn index_mapping_via_names_roundtrip() {
        let ds = toy_dataset(60, 6, 2);
        let filter = FixedFilter(vec![1, 3]);
        let bundle = run_algorithm_b(&ds, &filter, 9).unwrap();
        let x0 = bundle.x0.unwrap();
        // Step 1 keeps submatrix positions {1, 3} of the full matrix: X2, X4.
        let names: Vec<&str> =
            x0.members().iter().map(|&j| ds.columns()[j].name.as_str()).collect();
        assert_eq!(names, vec!["X2", "X4"]);
        // Step 2 keeps positions {1, 3} of a 2-column input, clipped to {1}:
        // original column X4.
        let z0 = bundle.z0.unwrap();
        assert_eq!(z0.members(), &[3]);
        assert!(z0.is_subset_of(&x0));
    }

    #[test]
    fn empty_treatment_screen_warns_not_errors() {
        let ds = toy_dataset(60, 4, 3);
        let bundle = run_algorithm_a(&ds, &EmptyFilter, 9).unwrap();
        assert!(bundle.x_t.unwrap().is_empty());
        assert!(bundle.q0.unwrap().is_empty());
        assert!(bundle.q1.unwrap().is_empty());
        assert_eq!(bundle.warnings.len(), 1);
    }

    #[test]
    fn empty_outcome_screen_propagates_warning_in_b() {
        let ds = toy_dataset(60, 4, 4);
        let bundle = run_algorithm_b(&ds, &EmptyFilter, 9).unwrap();
        assert!(bundle.x0.unwrap().is_empty());
        assert!(bundle.z0.unwrap().is_empty());
        assert_eq!(bundle.warnings.len(), 2);
    }

    #[test]
    fn sdr_filter_rejects_discrete_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 60;
        let x = Array2::from_shape_fn((n, 2), |(_, j)| {
            if j == 0 {
                StandardNormal.sample(&mut rng)
            } else {
                f64::from(rng.gen_bool(0.5))
            }
        });
        let treatment: Vec<f64> = (0..n).map(|i| f64::from(i % 2 == 0)).collect();
        let outcome: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let columns = vec![
            Column::new("a", VariableKind::Continuous),
            Column::new("b", VariableKind::binary()),
        ];
        let ds = Dataset::new(columns, x, treatment, outcome, None).unwrap();
        let filter = SdrFilter::default();
        let err = run_algorithm_a(&ds, &filter, 9).unwrap_err();
        assert!(matches!(err, Error::NeedsContinuous { .. }));
    }

    #[test]
    fn arm_isolation_metamorphic() {
        // Perturbing the other arm's outcomes must not change an arm's
        // step-2 result in algorithm A, given fixed seeds.
        let n = 120;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Array2::from_shape_fn((n, 3), |_| StandardNormal.sample(&mut rng));
        let treatment: Vec<f64> = (0..n).map(|i| f64::from(i % 2 == 0)).collect();
        let outcome: Vec<f64> = (0..n)
            .map(|i| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                2.0 * x[(i, 0)] + noise
            })
            .collect();
        let columns: Vec<Column> =
            (0..3).map(|j| Column::new(format!("X{}", j + 1), VariableKind::Continuous)).collect();
        let ds =
            Dataset::new(columns.clone(), x.clone(), treatment.clone(), outcome.clone(), None)
                .unwrap();
        let filter = SdrFilter::default();
        let bundle = run_algorithm_a(&ds, &filter, 42).unwrap();

        // Scramble the treated arm's outcomes; control-arm set must agree.
        let mut outcome2 = outcome;
        for (i, y) in outcome2.iter_mut().enumerate() {
            if treatment[i] == 1.0 {
                *y = StandardNormal.sample(&mut rng);
            }
        }
        let ds2 = Dataset::new(columns, x, treatment, outcome2, None).unwrap();
        let bundle2 = run_algorithm_a(&ds2, &filter, 42).unwrap();
        assert_eq!(bundle.q0, bundle2.q0);
    }

    #[test]
    fn both_merges_all_seven_sets() {
        let ds = toy_dataset(80, 4, 7);
        let filter = FixedFilter(vec![0, 1]);
        let bundle = run_selection(&ds, &filter, AlgorithmChoice::Both, 9).unwrap();
        assert!(bundle.x_t.is_some());
        assert!(bundle.q0.is_some() && bundle.q1.is_some());
        assert!(bundle.x0.is_some() && bundle.x1.is_some());
        assert!(bundle.z0.is_some() && bundle.z1.is_some());
        assert!(bundle.unions().is_ok());
    }
}
