use pskqkd::keyrate::rate_only;
use pskqkd::optimize::{find_crossing, optimize_amplitude, sweep_eta, AmplitudeSearch};
use pskqkd::{Error, ProtocolParams, QuadratureGrid, RateMode};

fn coarse() -> QuadratureGrid {
    QuadratureGrid::new(32, 16).unwrap()
}

#[test]
fn no_rate_without_transmission() {
    let search = AmplitudeSearch::default();
    for n in [2, 5] {
        for mode in [RateMode::DIRECT_POSTSELECTED, RateMode::REVERSE] {
            let p = optimize_amplitude(0.0, n, mode, &coarse(), &search).unwrap();
            assert_eq!(p.rate, 0.0);
            assert!(p.optimal_amplitude.is_none());
        }
    }
}

#[test]
fn five_letters_optimum_near_one_point_four() {
    let search = AmplitudeSearch::default();
    for eta in [0.65, 0.7, 0.8] {
        let p = optimize_amplitude(eta, 5, RateMode::DIRECT_POSTSELECTED, &coarse(), &search).unwrap();
        let a = p.optimal_amplitude.unwrap();
        assert!((a - 1.4).abs() <= 0.5, "eta {eta}: a0 = {a}");
    }
}

#[test]
fn typical_optimal_photon_number_between_one_and_four() {
    let search = AmplitudeSearch::default();
    let etas: Vec<f64> = (0..=17).map(|i| 0.1 + 0.05 * i as f64).collect();
    for mode in [RateMode::DIRECT_POSTSELECTED, RateMode::REVERSE] {
        let mut photons: Vec<f64> = sweep_eta(5, mode, &etas, &coarse(), &search)
            .into_iter()
            .map(Result::unwrap)
            .filter(|p| p.rate >= 1e-4)
            .map(|p| p.optimal_amplitude.unwrap().powi(2))
            .collect();
        photons.sort_by(f64::total_cmp);
        let median = photons[photons.len() / 2];
        assert!((1.0..=4.0).contains(&median), "{mode:?}: {photons:?}");
    }
}

#[test]
fn sweep_is_deterministic_and_matches_pointwise() {
    let search = AmplitudeSearch::default();
    let etas = [0.35, 0.7];
    let mode = RateMode::DIRECT_POSTSELECTED;
    let first: Vec<_> = sweep_eta(2, mode, &etas, &coarse(), &search).into_iter().map(Result::unwrap).collect();
    let second: Vec<_> = sweep_eta(2, mode, &etas, &coarse(), &search).into_iter().map(Result::unwrap).collect();
    assert_eq!(first, second);
    for (eta, point) in etas.iter().zip(&first) {
        let single = optimize_amplitude(*eta, 2, mode, &coarse(), &search).unwrap();
        assert_eq!(&single, point);
    }
}

#[test]
fn optimum_never_below_coarse_scan() {
    let search = AmplitudeSearch::default();
    for (n, eta, mode) in [
        (3, 0.55, RateMode::DIRECT_POSTSELECTED),
        (5, 0.7, RateMode::DIRECT_POSTSELECTED),
        (4, 0.4, RateMode::REVERSE),
    ] {
        let best_coarse = search
            .coarse_points()
            .iter()
            .map(|&a| rate_only(&ProtocolParams::new(n, a, eta).unwrap(), &coarse(), mode).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let p = optimize_amplitude(eta, n, mode, &coarse(), &search).unwrap();
        assert!(p.rate >= best_coarse, "N={n} eta={eta}");
    }
}

#[test]
fn crossing_without_sign_change_reports_endpoints() {
    let search = AmplitudeSearch {
        step: 0.1,
        ..AmplitudeSearch::default()
    };
    match find_crossing(2, 3, RateMode::DIRECT_POSTSELECTED, (0.7, 0.9), &coarse(), &search) {
        Err(Error::Bracket { f_lo, f_hi, .. }) => assert!(f_lo < 0.0 && f_hi < 0.0),
        other => panic!("expected a bracket error, got {other:?}"),
    }
}

#[test]
fn two_three_crossing_bisects_to_width() {
    let search = AmplitudeSearch::default();
    let rec = find_crossing(2, 3, RateMode::DIRECT_POSTSELECTED, (0.4, 0.6), &coarse(), &search).unwrap();
    assert!(rec.width <= 1e-3);
    assert!(rec.delta_lo.signum() != rec.delta_hi.signum());
    assert!(rec.delta_at_star.abs() < 1e-4);
    assert!(rec.bracket.0 <= rec.eta_star && rec.eta_star <= rec.bracket.1);
}
