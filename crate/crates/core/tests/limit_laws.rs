//! Limit-law numerics against reference values computed separately at 40
//! digits (closed forms, and Talbot inversion for the density).

use axiswalk::limits::{
    bromwich_density, dual_route_check, invert_mu, log_grid, mu_log_laplace, s1, theorem1_tail, theorem2_tail,
    StableLawSpec,
};
use axiswalk::oracle::LimitConstants;
use axiswalk::rng::RngStreamSpec;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn s1_reference_values() {
    let cases = [
        (0.5, 1.0, 1.0, -1.0579657578292062244),
        (1.0, 1.0, 1.0, -1.4227843350984671394),
        (2.0, 1.0, 1.0, -1.45927430907704366),
        (5.0, 1.0, 1.0, 0.93326788667816617604),
        (0.001, 3.97, 0.38, -0.023260893721264748272),
        (1000.0, 3.97, 0.38, 13095.713010220183586),
        (3.0, 2.0, 0.5, -1.945032278582144688),
    ];
    for (l, kappa, c1, want) in cases {
        let got = s1(l, &LimitConstants::toy(kappa, c1)).unwrap();
        assert!(rel(got, want) < 1e-12, "s1({l}; {kappa}, {c1}) = {got}, want {want}");
    }
}

#[test]
fn mu_reference_values() {
    let cases = [
        (0.5, 1.0, 1.0, 0.0, -0.36481857726926091499),
        (2.0, 1.0, 1.0, 0.0, -2.1524214896369889694),
        (5.0, 1.0, 1.0, 0.5, -3.1761700257559341986),
        (1.5, 3.97, 0.38, 1.0, -6.6417123696462506221),
        (0.01, 1.0, 1.0, 0.0, 4.5448906407772257611),
    ];
    for (l, kappa, c1, h, want) in cases {
        let spec = StableLawSpec::new(LimitConstants::toy(kappa, c1), h).unwrap();
        let got = mu_log_laplace(l, &spec).unwrap();
        assert!(rel(got, want) < 1e-12, "mu({l}) = {got}, want {want}");
    }
}

#[test]
fn s1_is_finite_and_smooth_on_wide_grid() {
    let c = LimitConstants::toy(3.97, 0.38);
    let grid = log_grid(1e-3, 1e3, 2001);
    let v: Vec<f64> = grid.iter().map(|&l| s1(l, &c).unwrap()).collect();
    assert!(v.iter().all(|x| x.is_finite()));
    // second differences in log-lambda stay bounded relative to the values
    for w in v.windows(3) {
        let d2 = (w[2] - 2.0 * w[1] + w[0]).abs();
        assert!(d2 <= 1e-2 * (1.0 + w[1].abs()), "{w:?}");
    }
}

#[test]
fn mu_diverges_as_lambda_tends_to_zero() {
    let spec = StableLawSpec::new(LimitConstants::toy(1.0, 1.0), 0.0).unwrap();
    let mut prev = mu_log_laplace(1e-1, &spec).unwrap();
    for k in 2..15 {
        let l = 10f64.powi(-k);
        let v = mu_log_laplace(l, &spec).unwrap();
        assert!(v > prev);
        // the leading term is -log(lambda)
        assert!((v / -l.ln() - 1.0).abs() < 0.2);
        prev = v;
    }
}

#[test]
fn density_matches_talbot_inversion() {
    let spec = StableLawSpec::new(LimitConstants::toy(1.0, 1.0), 0.0).unwrap();
    let drift = spec.drift();
    let cases = [
        (-2.0, 1.4491944955017913022e-6),
        (-1.0, 0.0028292998673815398043),
        (-0.5, 0.017790503052844448679),
        (0.0, 0.057935434375546883059),
        (1.0, 0.21070193818714169405),
        (3.0, 0.52781372616124782296),
    ];
    for (s, want) in cases {
        let got = bromwich_density(s, drift);
        assert!((got - want).abs() < 1e-12 && rel(got, want) < 1e-8, "F({s}) = {got}, want {want}");
    }
}

#[test]
fn toy_inversion_round_trip_and_sampling_route() {
    let spec = StableLawSpec::new(LimitConstants::toy(1.0, 1.0), 0.0).unwrap();
    let law = invert_mu(&spec, &log_grid(0.01, 100.0, 512)).unwrap();
    assert!(law.roundtrip_residual < 1e-4, "residual {}", law.roundtrip_residual);
    assert!(!law.flagged);
    let check = dual_route_check(&law, 10_000_000, RngStreamSpec::new(21, 0)).unwrap();
    assert!(check.kolmogorov < 0.01, "ks {}", check.kolmogorov);
}

#[test]
fn tail_integrals_are_monotone() {
    let spec = StableLawSpec::new(LimitConstants::toy(3.97, 0.38), 0.0).unwrap();
    let law = invert_mu(&spec, &log_grid(0.01, 100.0, 512)).unwrap();
    let levels = [0.05, 0.25, 0.5, 1.0, 2.0, 4.0, 16.0];
    let t2: Vec<f64> = levels.iter().map(|&a| theorem2_tail(a, &law).unwrap()).collect();
    let t1: Vec<f64> = levels.iter().map(|&a| theorem1_tail(a, a, &law).unwrap()).collect();
    for w in t2.windows(2).chain(t1.windows(2)) {
        assert!(w[1] <= w[0] + 1e-12, "{w:?}");
    }
    assert_eq!(theorem2_tail(200.0, &law).unwrap(), 0.0);
    assert!(theorem2_tail(0.001, &law).is_err());
}
