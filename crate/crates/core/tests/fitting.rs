use quench::fitting::*;
use quench::lattice::{Cutoff, InteractionModel, Spacing};
use quench::nlce::{nlce_correlators, NlceOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spacing() -> Spacing {
    Spacing::anisotropic(0.028).unwrap()
}

fn small_grid(order: usize) -> PredictionGrid {
    let c6: Vec<f64> = (0..5).map(|k| -7.2 + 0.6 * k as f64).collect();
    let deltas: Vec<f64> = (0..7).map(|k| -7.0 + 1.5 * k as f64).collect();
    let spec = GridSpec::new(c6, deltas, PulseSettings::quarter_period(4.05), order, spacing(), Cutoff::NextNearestNeighbor);
    build_nlce_grid(&spec).unwrap()
}

#[test]
fn single_node_grid_matches_direct_expansion() {
    let pulse = PulseSettings::quarter_period(4.05);
    let spec = GridSpec::new(vec![-6.0], vec![-1.0], pulse, 4, spacing(), Cutoff::NextNearestNeighbor);
    let grid = build_nlce_grid(&spec).unwrap();
    let inter = InteractionModel::new(-6.0, Cutoff::NextNearestNeighbor).unwrap();
    let direct = nlce_correlators(4, &spacing(), &inter, &pulse.schedule(-1.0).unwrap(), &[(1, 0), (0, 1)], &NlceOptions::default()).unwrap();
    let v = grid.value(0, 0, ModelSeries::FinalOrder);
    assert_eq!(v.c10, direct.partial_sum(0, 4, (1, 0)).unwrap());
    assert_eq!(v.c01, direct.partial_sum(0, 4, (0, 1)).unwrap());
    assert_eq!(v.occupation, direct.mean_occupation(0, Some(4)));
    let r = grid.value(0, 0, ModelSeries::Resummed);
    assert_eq!(r.c10, direct.resummed(0, (1, 0)).unwrap());
}

#[test]
fn short_time_correlator_is_monotone_in_c6() {
    let pulse = PulseSettings { omega: 4.05, hold_time: 0.02, rise_time: 0.0, fall_time: 0.0 };
    let spec = GridSpec::new(vec![-7.0, -6.0, -5.0], vec![0.0], pulse, 5, spacing(), Cutoff::NextNearestNeighbor);
    let grid = build_nlce_grid(&spec).unwrap();
    let c: Vec<f64> = (0..3).map(|k| grid.value(k, 0, ModelSeries::FinalOrder).c10).collect();
    let increasing = c.windows(2).all(|w| w[0] < w[1]);
    let decreasing = c.windows(2).all(|w| w[0] > w[1]);
    assert!(increasing || decreasing, "{c:?}");
}

#[test]
fn zero_interaction_row_has_no_correlations() {
    let spec = GridSpec::new(vec![-1.0, 0.0], vec![-2.0, 0.0, 2.0], PulseSettings::quarter_period(4.05), 4, spacing(), Cutoff::NextNearestNeighbor);
    let grid = build_nlce_grid(&spec).unwrap();
    for j in 0..3 {
        for series in [ModelSeries::FinalOrder, ModelSeries::Resummed] {
            let v = grid.value(1, j, series);
            assert!(v.c10.abs() < 1e-12 && v.c01.abs() < 1e-12, "{v:?}");
        }
    }
}

#[test]
fn grid_persists_under_its_hash() {
    let spec = GridSpec::new(vec![-6.0, -5.0], vec![0.0], PulseSettings::quarter_period(4.05), 3, spacing(), Cutoff::NextNearestNeighbor);
    let dir = std::env::temp_dir().join(format!("quench-grid-test-{}", std::process::id()));
    let (built, path) = PredictionGrid::load_or_build(&dir, &spec).unwrap();
    assert!(path.file_name().unwrap().to_str().unwrap().contains(&spec.hash()[..16]));
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(PredictionGrid::from_json(&text, &spec).unwrap(), built);
    let mut other = spec.clone();
    other.detunings = vec![1.0];
    assert!(PredictionGrid::from_json(&text, &other).is_err());
    let (loaded, _) = PredictionGrid::load_or_build(&dir, &spec).unwrap();
    assert_eq!(loaded, built);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn noiseless_closed_loop() {
    let grid = small_grid(6);
    for (c6, alpha) in [(-6.0, 0.89), (-5.75, 0.8), (-6.3, 1.0)] {
        let scan = synthetic_scan::<ChaCha8Rng>(&grid, c6, alpha, ModelSeries::FinalOrder, None).unwrap();
        let fit = fit_c6_alpha(&scan, &grid, &FitOptions::default()).unwrap();
        assert!((fit.c6 - c6).abs() < 1e-4 * c6.abs(), "{fit:?}");
        assert!((fit.alpha - alpha).abs() < 1e-4, "{fit:?}");
        assert!(fit.chi2 < 1e-12);
        assert!(fit.chi2_history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(fit.weighting, Weighting::Uniform);
        // the generating point is the best grid node
        if (c6 + 6.0f64).abs() < 1e-12 {
            let min = fit.grid_profile.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            let at_truth = fit.grid_profile.iter().find(|p| (p.0 - c6).abs() < 1e-12).unwrap().1;
            assert_eq!(at_truth, min);
        }
        assert_eq!(fit.at_boundary, alpha == 1.0);
    }
}

#[test]
fn noisy_fit_is_consistent_with_its_covariance() {
    let grid = small_grid(5);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut inside = 0;
    let reps = 40;
    for _ in 0..reps {
        let scan = synthetic_scan(&grid, -6.0, 0.89, ModelSeries::FinalOrder, Some((0.05, &mut rng))).unwrap();
        let fit = fit_c6_alpha(&scan, &grid, &FitOptions::default()).unwrap();
        assert_eq!(fit.weighting, Weighting::InverseVariance);
        assert!(fit.chi2_history.windows(2).all(|w| w[1] <= w[0]));
        let cov = fit.covariance.expect("positive curvature");
        let d = [fit.c6 + 6.0, fit.alpha - 0.89];
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        let m = (cov[1][1] * d[0] * d[0] - 2.0 * cov[0][1] * d[0] * d[1] + cov[0][0] * d[1] * d[1]) / det;
        if m <= 5.991 {
            inside += 1;
        }
    }
    assert!(inside as f64 >= 0.85 * reps as f64, "{inside}/{reps}");
}

#[test]
fn csv_scan_and_interpolated_detunings() {
    let grid = small_grid(4);
    let scan = synthetic_scan::<ChaCha8Rng>(&grid, -6.0, 0.9, ModelSeries::FinalOrder, None).unwrap();
    let back = CorrelatorScan::from_csv(&scan.to_csv(), None).unwrap();
    assert_eq!(back.points(), scan.points());
    // drop to a subset at off-grid detunings: the fit still runs and says so
    let pts: Vec<ScanPoint> = scan.points().windows(2).map(|w| ScanPoint { delta: 0.5 * (w[0].delta + w[1].delta), ..w[0] }).collect();
    let off = CorrelatorScan::new(pts, scan.pulse).unwrap();
    let fit = fit_c6_alpha(&off, &grid, &FitOptions::default()).unwrap();
    assert!(fit.interpolated_detunings);
    assert!(!fit.warnings.is_empty());
    let mut wrong = scan.clone();
    wrong.pulse.omega = 4.0;
    assert!(fit_c6_alpha(&wrong, &grid, &FitOptions::default()).is_err());
    let opts = FitOptions { weighting: Some(Weighting::InverseVariance), ..Default::default() };
    assert!(fit_c6_alpha(&scan, &grid, &opts).is_err());
}
