use feller_ldp::simulator::{
    band_occupation, exit_probability_exact, exit_probability_mc, mollifier_doubling, modulus_exceedance, terminal_values,
    SimConfig,
};
use feller_ldp::{ScalePair, SeedSpec};

fn delay(kappa: f64) -> ScalePair {
    ScalePair::delay_corner(1.0, 3.0, kappa, 1.0, 2.0).unwrap()
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

#[test]
fn linear_pair_is_scaled_brownian_motion() {
    // ε D_v D_u = (ε / A) d²/dx², so Var X_T = 2εT/A
    let (a, eps, t, n) = (4.0, 0.5, 1.0, 20_000);
    let sp = ScalePair::linear(1.0, a).unwrap();
    let xs = terminal_values(&sp, 0.3, t, n, &SimConfig::new(eps, 1e-3, 11)).unwrap();
    let (m, v) = mean_var(&xs);
    let var = 2.0 * eps * t / a;
    assert!((m - 0.3).abs() < 4.0 * (var / n as f64).sqrt(), "mean {m}");
    assert!((v - var).abs() < 4.0 * var * (2.0 / n as f64).sqrt(), "variance {v} vs {var}");
}

#[test]
fn exit_law_ignores_the_jump() {
    let (x, a, b, n) = (1.4, 0.5, 2.5, 20_000);
    let exact = exit_probability_exact(&delay(0.0), x, a, b).unwrap();
    assert_eq!(exact, exit_probability_exact(&delay(1.0), x, a, b).unwrap());
    let cfg = SimConfig::new(0.5, 1e-3, 12);
    let p0 = exit_probability_mc(&delay(0.0), x, a, b, n, &cfg).unwrap();
    let p1 = exit_probability_mc(&delay(1.0), x, a, b, n, &cfg.with_seed(SeedSpec::new(12).family(1))).unwrap();
    assert!(p0.brackets(exact, 4.0) && p1.brackets(exact, 4.0), "{} and {} vs {exact}", p0.estimate, p1.estimate);
    let joint = (p0.std_error.powi(2) + p1.std_error.powi(2)).sqrt();
    assert!((p0.estimate - p1.estimate).abs() < 4.0 * joint);
}

#[test]
fn modulus_exceedance_shrinks_with_eps() {
    let sp = delay(0.5);
    let rates: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&eps| modulus_exceedance(&sp, 0.5, 1.0, 0.05, 0.25, 4000, &SimConfig::new(eps, 1e-3, 13)).unwrap())
        .collect();
    assert!(rates[0] > rates[1] && rates[1] > rates[2], "{rates:?}");
    assert!(rates[0] > 0.05, "{rates:?}");
}

#[test]
fn jump_point_keeps_mass_as_the_band_shrinks() {
    let occ = |kappa: f64, band: f64| {
        let v = band_occupation(&delay(kappa), 1.0, 1.0, band, 1.0, 4000, &SimConfig::new(0.1, 1e-3, 14)).unwrap();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (sticky_wide, sticky_narrow) = (occ(1.0, 0.1), occ(1.0, 0.01));
    let (plain_wide, plain_narrow) = (occ(0.0, 0.1), occ(0.0, 0.01));
    assert!(sticky_narrow > 0.5 * sticky_wide, "κ = 1: {sticky_narrow} vs {sticky_wide}");
    assert!(plain_narrow < 0.2 * plain_wide, "κ = 0: {plain_narrow} vs {plain_wide}");
    assert!(sticky_narrow > 10.0 * plain_narrow);
}

#[test]
fn mollifier_doubling_is_stable() {
    let sp = delay(1.0);
    let d = mollifier_doubling(&sp, 0.8, 1.0, 4000, &SimConfig::new(0.1, 1e-3, 15).with_mollify(2000)).unwrap();
    assert!(d.ks.passes(), "KS {} vs {}", d.ks.statistic, d.ks.critical_value);
    assert!((d.mean_n - d.mean_2n).abs() < 0.01);
    // the sticky point carries an atom of the terminal law
    assert!(d.in_ramp_n > 0.2 && (d.in_ramp_n - d.in_ramp_2n).abs() < 0.03, "{} and {}", d.in_ramp_n, d.in_ramp_2n);
}

#[test]
fn streams_are_reproducible_and_thread_count_free() {
    let sp = delay(0.5);
    let cfg = SimConfig::new(0.1, 1e-3, 16);
    let run = |threads: usize, cfg: SimConfig| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| terminal_values(&sp, 0.5, 0.5, 500, &cfg).unwrap())
    };
    let a = run(1, cfg);
    assert_eq!(a, run(3, cfg));
    assert_eq!(a, terminal_values(&sp, 0.5, 0.5, 500, &cfg).unwrap());
    let other = run(1, cfg.with_seed(SeedSpec::new(16).family(1)));
    assert!(a.iter().zip(&other).all(|(x, y)| x != y));
}
