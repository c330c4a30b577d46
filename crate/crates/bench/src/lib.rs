//! Fixtures shared by the benchmarks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radrobust::cohort::{SiteScope, VoxelVolume};
use radrobust::robustness::{Category, FeatureRobustness, RobustnessProfile};
use radrobust::roi::{select_largest, Voi};
use radrobust::synth::{generate_cohort, SynthConfig};

/// Pre-treatment scan and largest-lesion VOI of one synthetic patient.
pub fn synthetic_lesion(seed: u64) -> (VoxelVolume, Voi) {
    // the generator needs enough patients to balance both classes
    let cohort = generate_cohort(&SynthConfig {
        n_patients: 10,
        seed,
        ..Default::default()
    })
    .expect("default synth config is valid");
    let p = cohort
        .patients
        .into_iter()
        .next()
        .expect("cohort is not empty");
    let voi =
        select_largest(&p.pre.lesions, SiteScope::All).expect("synthetic patients have lesions");
    (p.pre.volume, voi)
}

/// `n x p` Gaussian features, labels from a logistic model on the first
/// `informative` columns, and a random robustness profile.
pub fn selection_problem(
    seed: u64,
    n: usize,
    p: usize,
    informative: usize,
) -> (DMatrix<f64>, Vec<bool>, Vec<String>, RobustnessProfile) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, _| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    let y = (0..n)
        .map(|i| {
            let z: f64 = (0..informative).map(|j| x[(i, j)]).sum();
            rng.random::<f64>() < 1.0 / (1.0 + (-z).exp())
        })
        .collect();
    let names: Vec<String> = (0..p).map(|j| format!("f{j:03}")).collect();
    let prof = RobustnessProfile::new(
        names
            .iter()
            .map(|f| {
                let icc = rng.random_range(0.3..1.0);
                FeatureRobustness {
                    feature: f.clone(),
                    icc,
                    ci_lo: icc,
                    ci_hi: icc,
                    category: Category::of(icc),
                }
            })
            .collect(),
    );
    (x, y, names, prof)
}
