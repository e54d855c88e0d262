use opfree::algebra::CpMap;
use opfree::harness::{compare_density, sample_rmt_spectrum, Deterministic, EnsembleKind, EnsembleSpec};
use opfree::model::{scalar_to_model, ScalarMeasure};
use opfree::subordination::{SolverConfig, SubordinationProblem};
use opfree::transforms::{density_grid, linspace, DensityGrid, Subordinated};

fn predicted(t: f64) -> DensityGrid {
    let model = scalar_to_model(&ScalarMeasure::bernoulli()).unwrap();
    let p = SubordinationProblem::semicircular(model, CpMap::scaled_identity(1, t).unwrap())
        .unwrap()
        .with_solver(SolverConfig::default().damped(0.5))
        .unwrap();
    density_grid(&Subordinated::new(p), &linspace(-4.0, 4.0, 801), &[1e-2, 5e-3]).unwrap()
}

fn ensemble(kind: EnsembleKind, size: usize, samples: usize, seed: u64) -> EnsembleSpec {
    EnsembleSpec {
        kind,
        deterministic: Deterministic::Measure {
            measure: ScalarMeasure::bernoulli(),
        },
        t: 1.0,
        matrix_size: size,
        samples,
        seed,
    }
}

#[test]
fn ks_shrinks_with_size() {
    let grid = predicted(1.0);
    assert!(grid.failed.iter().all(|f| !f));
    assert!((grid.total_mass() - 1.0).abs() < 1e-2);
    let ks: Vec<f64> = [(200, 4), (500, 2), (1000, 1)]
        .iter()
        .map(|&(n, s)| {
            let emp = sample_rmt_spectrum(&ensemble(EnsembleKind::DeterministicPlusGue, n, s, 77)).unwrap();
            compare_density(&emp, &grid).unwrap()
        })
        .collect();
    eprintln!("KS by size 200/500/1000: {ks:?}");
    for w in ks.windows(2) {
        assert!(w[1] <= 2.0 * w[0], "{ks:?}");
    }
    assert!(ks[2] < 0.05);
}

#[test]
fn haar_rotated_semicircle_matches_same_prediction() {
    let grid = predicted(1.0);
    let emp = sample_rmt_spectrum(&ensemble(EnsembleKind::DeterministicPlusHaarRotated, 400, 2, 5)).unwrap();
    let ks = compare_density(&emp, &grid).unwrap();
    assert!(ks < 0.05, "{ks}");
}

