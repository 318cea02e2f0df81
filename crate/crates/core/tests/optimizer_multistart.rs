use epec_core::optimizer::{self, DeConfig};

/// Two wells: the global one at x = 2 (f = 0), a wider local one at x = -3
/// (f = 1).
fn two_wells(x: &[f64]) -> f64 {
    ((x[0] - 2.0).powi(2)).min((x[0] + 3.0).powi(2) / 4.0 + 1.0)
}

#[test]
fn multi_start_finds_the_global_well() {
    let mut cfg = DeConfig::new(vec![(-10.0, 10.0)]).with_seed(31);
    cfg.population = 4;
    let r = optimizer::multi_start(two_wells, &cfg, 10);
    assert!((r.best_x[0] - 2.0).abs() < 1e-4, "{:?}", r.best_x);
    assert!(r.best_f < 1e-8);
}

#[test]
fn best_start_is_no_worse_than_any_single_start() {
    let mut cfg = DeConfig::new(vec![(-10.0, 10.0)]).with_seed(5);
    cfg.population = 4;
    cfg.max_generations = 30;
    let best = optimizer::multi_start(two_wells, &cfg, 6);
    for k in 0..6 {
        let mut single = cfg.clone();
        single.seed = optimizer::start_seed(cfg.seed, k);
        assert!(best.best_f <= optimizer::minimize(two_wells, &single).best_f);
    }
}

#[test]
fn multi_start_is_deterministic_for_any_worker_count() {
    let mut cfg = DeConfig::new(vec![(-10.0, 10.0); 2]).with_seed(77);
    let f = |x: &[f64]| two_wells(&x[..1]) + (x[1] - 0.5).powi(2);
    let serial = optimizer::multi_start(f, &cfg, 4);
    cfg.workers = 3;
    assert_eq!(optimizer::multi_start(f, &cfg, 4), serial);
}

#[test]
fn payout_curve_maximizer_sits_at_the_minimum_load() {
    let sc = epec_core::scenario::Scenario::from_toml_str(include_str!("../../../configs/case1.toml"))
        .unwrap();
    let payout = |x: &[f64]| {
        let b = epec_core::sampler::diagonal_buildout(&sc, x[0]);
        epec_core::dispatch::simulate(&sc, &b).unwrap().payout()
    };
    let cfg = DeConfig::new(vec![(1000.0, 1700.0)]).with_seed(3);
    let r = optimizer::maximize(payout, &cfg, 3);
    assert!((r.best_x[0] - 1421.0).abs() < 0.5, "{:?}", r.best_x);
}
