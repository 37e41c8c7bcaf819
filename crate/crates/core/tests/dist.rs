mod common;

use approx::assert_abs_diff_eq;
use common::oracle;
use jkraim::dist::{normal, scaled_convolve, CombinedDistribution, ErrorDistribution, GridConfig, LinearCombination, PairedBound};
use jkraim::overbound::{apply_paired, PgoConstruction, SatelliteBoundTable};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn svn63() -> ErrorDistribution {
    let t = SatelliteBoundTable::builtin();
    ErrorDistribution::Pgo(t.get("SVN63").unwrap().pgo(PgoConstruction::default()).unwrap())
}

fn grid_cfg() -> GridConfig {
    GridConfig::with_points(1 << 14)
}

#[test]
fn difference_of_unit_gaussians() {
    let n = ErrorDistribution::gaussian(1.0);
    let c = scaled_convolve(&[1.0, -1.0], &[n.clone(), n], &GridConfig::default()).unwrap();
    match &c {
        CombinedDistribution::Gaussian { sigma } => assert_abs_diff_eq!(*sigma, 2f64.sqrt(), epsilon = 1e-15),
        other => panic!("expected closed form, got {other:?}"),
    }
    assert_abs_diff_eq!(c.quantile(0.025).unwrap(), -2.7718, epsilon = 1e-3);
}

#[test]
fn zero_coefficient_drops_term() {
    let p = svn63();
    let c = scaled_convolve(&[1.0, 0.0], &[p.clone(), ErrorDistribution::gaussian(40.0)], &GridConfig::default()).unwrap();
    for x in [-8.0, -3.0, -1.0, -0.2, 0.0, 0.7, 2.5, 10.0] {
        assert_abs_diff_eq!(c.cdf(x), p.cdf(x), epsilon = 2e-6);
    }
    assert!(scaled_convolve(&[0.0], &[p], &GridConfig::default()).is_err());
}

#[test]
fn gaussian_extreme_quantile() {
    assert_abs_diff_eq!(ErrorDistribution::gaussian(1.0).quantile(1e-7).unwrap(), -5.1993, epsilon = 1e-3);
    assert_abs_diff_eq!(normal::isf(1e-9), 5.9978, epsilon = 1e-3);
}

#[test]
fn symmetric_median_is_zero() {
    let dists = [
        ErrorDistribution::gaussian(2.0),
        ErrorDistribution::Bgmm { p1: 0.9, sigma1: 1.0, sigma2: 3.0 },
        svn63(),
        ErrorDistribution::Sum { parts: vec![svn63(), ErrorDistribution::gaussian(0.5)] },
    ];
    for d in &dists {
        assert!(d.quantile(0.5).unwrap().abs() < 1e-9, "{d:?}");
    }
}

#[test]
fn pgo_extreme_quantile_is_bracketed() {
    let ErrorDistribution::Pgo(p) = svn63() else { unreachable!() };
    let q = 1e-7;
    let x = ErrorDistribution::Pgo(p).quantile(q).unwrap().abs();
    let core = p.sigma1 * normal::isf(q);
    let tail = p.sigma2 * normal::isf(q / p.tail_weight());
    assert!(x >= core && x <= tail + 1e-9, "{core} <= {x} <= {tail}");
    // Direct integration of the density at the returned point.
    let f = oracle::integrate_cdf(|t| p.pdf(t), -x, 200.0, 400_000);
    assert!((f - q).abs() < 1e-3 * q, "{f}");
}

#[test]
fn gaussian_sample_std() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let d = ErrorDistribution::gaussian(1.0);
    let n = 1_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let x = d.sample(&mut rng);
        s += x;
        s2 += x * x;
    }
    let mean = s / n as f64;
    let sd = (s2 / n as f64 - mean * mean).sqrt();
    assert!((sd - 1.0).abs() < 0.003, "{sd}");
}

#[test]
fn paired_bound_sample_mean_within_envelope() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let pb = apply_paired(ErrorDistribution::gaussian(1.0), 0.75).unwrap();
    let n = 200_000;
    let xs: Vec<f64> = (0..n).map(|_| pb.sample(&mut rng)).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    assert!(mean.abs() <= 0.75 + 3.0 * sd / (n as f64).sqrt());
}

#[test]
fn sampling_is_deterministic() {
    let d = ErrorDistribution::Sum { parts: vec![svn63(), ErrorDistribution::gaussian(0.3)] };
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..100).map(|_| d.sample(&mut rng)).collect::<Vec<_>>()
    };
    assert_eq!(draw(5), draw(5));
    assert_ne!(draw(5), draw(6));
}

#[test]
fn paired_bound_plateau() {
    let pb = PairedBound::new(ErrorDistribution::gaussian(1.0), 0.75).unwrap();
    assert_eq!(pb.cdf(-0.75), 0.5);
    assert_eq!(pb.cdf(0.0), 0.5);
    assert!(pb.quantile(0.5 - 1e-6).unwrap() <= -0.75);
    assert!(pb.quantile(0.5 + 1e-6).unwrap() >= 0.75);
    let base = ErrorDistribution::gaussian(1.0);
    let zero = PairedBound::new(base.clone(), 0.0).unwrap();
    for x in [-3.0, -0.1, 0.4, 2.0] {
        assert_eq!(zero.cdf(x), base.cdf(x));
    }
    assert!(PairedBound::new(base, -0.1).is_err());
}

#[test]
fn pgo_combination_matches_monte_carlo() {
    let p = svn63();
    let c = scaled_convolve(&[0.5, 0.5], &[p.clone(), p.clone()], &GridConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut xs: Vec<f64> = (0..1_000_000).map(|_| 0.5 * oracle::sample(&p, &mut rng) + 0.5 * oracle::sample(&p, &mut rng)).collect();
    xs.sort_by(f64::total_cmp);
    let d = oracle::kolmogorov(&xs, |x| c.cdf(x));
    assert!(d < 2e-3, "Kolmogorov distance {d}");
}

#[test]
fn combined_bgmm_matches_monte_carlo() {
    let b = ErrorDistribution::Bgmm { p1: 0.9, sigma1: 1.0, sigma2: 3.0 };
    let g = ErrorDistribution::gaussian(0.7);
    let c = scaled_convolve(&[0.8, -1.3], &[b.clone(), g.clone()], &GridConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut xs: Vec<f64> = (0..1_000_000).map(|_| 0.8 * oracle::sample(&b, &mut rng) - 1.3 * oracle::sample(&g, &mut rng)).collect();
    xs.sort_by(f64::total_cmp);
    assert!(oracle::kolmogorov(&xs, |x| c.cdf(x)) < 2e-3);
}

fn arb_dist() -> impl Strategy<Value = ErrorDistribution> {
    prop_oneof![
        (0.1f64..5.0).prop_map(ErrorDistribution::gaussian),
        (0.5f64..0.99, 0.1f64..2.0, 1.5f64..5.0).prop_map(|(p1, s1, r)| ErrorDistribution::Bgmm { p1, sigma1: s1, sigma2: s1 * r }),
        (0usize..54).prop_map(|i| {
            let t = SatelliteBoundTable::builtin();
            ErrorDistribution::Pgo(t.entries[i].pgo(PgoConstruction::default()).unwrap())
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn quantile_round_trip(d in arb_dist(), e in 1.0f64..9.0) {
        let p = 10f64.powf(-e).min(0.5);
        let x = d.quantile(p).unwrap();
        let back = d.cdf(x);
        prop_assert!((back - p).abs() <= 1e-9f64.max(1e-3 * p), "{p} -> {x} -> {back}");
        // compare at the representable complement
        let q = 1.0 - p;
        let lower = d.quantile(1.0 - q).unwrap();
        prop_assert!((d.quantile(q).unwrap() + lower).abs() <= 1e-9 * (1.0 + lower.abs()));
    }

    #[test]
    fn distributions_are_symmetric(d in arb_dist(), x in 0.0f64..30.0) {
        prop_assert!((d.cdf(x) + d.cdf(-x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_round_trip_and_mass(ds in prop::collection::vec(arb_dist(), 1..5), cs in prop::collection::vec(-2.0f64..2.0, 5), e in 1.0f64..9.0) {
        let mut lc = LinearCombination::new();
        for (d, c) in ds.iter().zip(&cs) {
            lc.push(if c.abs() < 0.05 { 0.5 } else { *c }, d);
        }
        let g = lc.build_grid(&grid_cfg()).unwrap();
        prop_assert!((g.mass() - 1.0).abs() < 1e-9);
        let p = 10f64.powf(-e);
        let x = g.quantile(p).unwrap();
        let back = g.cdf_at(x);
        prop_assert!((back - p).abs() <= 1e-9f64.max(1e-3 * p), "{p} -> {x} -> {back}");
        prop_assert!((g.cdf_at(-x) + g.cdf_at(x) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_grid_agrees_with_closed_form(sig in prop::collection::vec(0.1f64..5.0, 1..8), cs in prop::collection::vec(-2.0f64..2.0, 8)) {
        let ds: Vec<ErrorDistribution> = sig.iter().map(|s| ErrorDistribution::gaussian(*s)).collect();
        let mut lc = LinearCombination::new();
        let mut var = 0.0;
        for (d, c) in ds.iter().zip(&cs) {
            let c = if c.abs() < 0.05 { 0.5 } else { *c };
            lc.push(c, d);
            var += c * c * d.variance();
        }
        let g = lc.build_grid(&GridConfig::default()).unwrap();
        prop_assert!((g.variance() / var - 1.0).abs() < 1e-6);
        for p in [1e-2, 1e-4, 1e-7] {
            let exact = -var.sqrt() * normal::isf(p);
            prop_assert!((g.quantile(p).unwrap() / exact - 1.0).abs() < 1e-3);
        }
    }
}
