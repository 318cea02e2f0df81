//! Differential evolution (DE/rand/1/bin) over a box.
//!
//! Trial vectors for a generation are generated sequentially from one seeded
//! stream and only then evaluated, optionally in parallel. Selection happens
//! after all evaluations, so the result is identical for any worker count.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct DeConfig {
    /// Population size; values below 4 are raised to 4.
    pub population: usize,
    /// Differential weight F.
    pub weight: f64,
    /// Crossover probability CR.
    pub crossover: f64,
    pub max_generations: usize,
    /// Stop once `max f - min f` over the population falls below this.
    pub tolerance: f64,
    pub seed: u64,
    pub bounds: Vec<(f64, f64)>,
    /// Threads used for objective evaluation. 0 or 1 evaluates inline.
    pub workers: usize,
}

impl DeConfig {
    /// Defaults: NP = 10 x dimension, F = 0.8, CR = 0.9, 1000 generations,
    /// tolerance 1e-8.
    pub fn new(bounds: Vec<(f64, f64)>) -> Self {
        Self {
            population: (10 * bounds.len()).max(4),
            weight: 0.8,
            crossover: 0.9,
            max_generations: 1000,
            tolerance: 1e-8,
            seed: 0,
            bounds,
            workers: 1,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn dimension(&self) -> usize {
        self.bounds.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best_x: Vec<f64>,
    pub best_f: f64,
    pub generations_used: usize,
    /// Best objective after initialization and after every generation.
    pub history: Vec<f64>,
}

fn clip(x: f64, (lo, hi): (f64, f64)) -> f64 {
    x.max(lo).min(hi)
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::INFINITY
    } else {
        f
    }
}

struct Evaluator<'a, F> {
    objective: &'a F,
    pool: Option<rayon::ThreadPool>,
}

impl<'a, F> Evaluator<'a, F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn new(objective: &'a F, workers: usize) -> Self {
        let pool = (workers > 1).then(|| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .expect("thread pool")
        });
        Self { objective, pool }
    }

    fn eval(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        let f = self.objective;
        match &self.pool {
            Some(pool) => pool.install(|| xs.par_iter().map(|x| sanitize(f(x))).collect()),
            None => xs.iter().map(|x| sanitize(f(x))).collect(),
        }
    }
}

/// Minimize `objective` over `config.bounds`.
pub fn minimize<F>(objective: F, config: &DeConfig) -> SearchResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let evaluator = Evaluator::new(&objective, config.workers);
    run(&evaluator, config, config.seed)
}

fn run<F>(evaluator: &Evaluator<'_, F>, config: &DeConfig, seed: u64) -> SearchResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let dim = config.dimension();
    let np = config.population.max(4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut population: Vec<Vec<f64>> = (0..np)
        .map(|_| {
            config
                .bounds
                .iter()
                .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo })
                .collect()
        })
        .collect();
    let mut fitness = evaluator.eval(&population);

    let best_index = |fitness: &[f64]| {
        // First index of the minimum keeps ties deterministic.
        fitness
            .iter()
            .enumerate()
            .fold(0, |best, (i, f)| if *f < fitness[best] { i } else { best })
    };
    let mut best = best_index(&fitness);
    let mut history = vec![fitness[best]];
    let mut generations = 0;

    while generations < config.max_generations {
        if spread(&fitness) < config.tolerance {
            break;
        }
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let mut picks = sample(&mut rng, np - 1, 3).into_iter().map(|k| if k >= i { k + 1 } else { k });
                let (a, b, c) = (
                    picks.next().unwrap(),
                    picks.next().unwrap(),
                    picks.next().unwrap(),
                );
                let forced = if dim > 0 { rng.gen_range(0..dim) } else { 0 };
                (0..dim)
                    .map(|k| {
                        if k == forced || rng.gen::<f64>() < config.crossover {
                            let v = population[a][k]
                                + config.weight * (population[b][k] - population[c][k]);
                            clip(v, config.bounds[k])
                        } else {
                            population[i][k]
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_fitness = evaluator.eval(&trials);
        for (i, (trial, f)) in trials.into_iter().zip(trial_fitness).enumerate() {
            // Accept ties so the population can drift across plateaus.
            if f <= fitness[i] {
                population[i] = trial;
                fitness[i] = f;
            }
        }
        best = best_index(&fitness);
        history.push(fitness[best]);
        generations += 1;
    }

    SearchResult {
        best_x: population[best].clone(),
        best_f: fitness[best],
        generations_used: generations,
        history,
    }
}

fn spread(fitness: &[f64]) -> f64 {
    let (lo, hi) = fitness
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &f| (lo.min(f), hi.max(f)));
    hi - lo
}

/// Seed of the `k`-th start; start 0 uses the configured seed itself.
pub fn start_seed(seed: u64, k: usize) -> u64 {
    if k == 0 {
        seed
    } else {
        seed::derive(seed, k as u64)
    }
}

/// Run `n_starts` independent searches and keep the best (earliest on ties).
pub fn multi_start<F>(objective: F, config: &DeConfig, n_starts: usize) -> SearchResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let evaluator = Evaluator::new(&objective, config.workers);
    let mut best: Option<SearchResult> = None;
    for k in 0..n_starts.max(1) {
        let result = run(&evaluator, config, start_seed(config.seed, k));
        if best.as_ref().is_none_or(|b| result.best_f < b.best_f) {
            best = Some(result);
        }
    }
    best.expect("at least one start")
}

/// Maximize by minimizing the negated objective. `best_f` is reported in the
/// original (maximized) sense; `history` stays in minimization sense.
pub fn maximize<F>(objective: F, config: &DeConfig, n_starts: usize) -> SearchResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut r = multi_start(|x: &[f64]| -objective(x), config, n_starts);
    r.best_f = -r.best_f;
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn sphere_reaches_origin() {
        let mut cfg = DeConfig::new(vec![(-5.0, 5.0); 5]).with_seed(3);
        cfg.population = 50;
        cfg.max_generations = 500;
        let r = minimize(sphere, &cfg);
        assert!(r.best_f < 1e-6, "best_f = {}", r.best_f);
        assert!(r.generations_used <= 500);
    }

    #[test]
    fn rosenbrock_finds_one_one() {
        let mut cfg = DeConfig::new(vec![(-2.0, 2.0); 2]).with_seed(11);
        cfg.population = 40;
        cfg.max_generations = 2000;
        cfg.tolerance = 1e-16;
        let r = minimize(rosenbrock, &cfg);
        assert!((r.best_x[0] - 1.0).abs() < 1e-3, "{:?}", r.best_x);
        assert!((r.best_x[1] - 1.0).abs() < 1e-3, "{:?}", r.best_x);
    }

    #[test]
    fn history_is_monotone_and_points_stay_in_bounds() {
        let bounds = vec![(-1.0, 2.0), (0.5, 0.5), (3.0, 7.0)];
        let cfg = DeConfig::new(bounds.clone()).with_seed(5);
        let seen = std::sync::Mutex::new(Vec::new());
        let r = minimize(
            |x: &[f64]| {
                seen.lock().unwrap().push(x.to_vec());
                (x[0] - 1.0).abs() + (x[2] - 4.0).powi(2)
            },
            &cfg,
        );
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        for x in seen.into_inner().unwrap() {
            for (v, (lo, hi)) in x.iter().zip(&bounds) {
                assert!(lo <= v && v <= hi);
            }
        }
        assert_eq!(r.best_x[1], 0.5);
    }

    #[test]
    fn degenerate_box_returns_the_point() {
        let cfg = DeConfig::new(vec![(0.0, 0.0); 3]).with_seed(1);
        let r = minimize(sphere, &cfg);
        assert_eq!(r.best_x, vec![0.0; 3]);
        // Spread is zero right after initialization.
        assert_eq!(r.generations_used, 0);
    }

    #[test]
    fn deterministic_across_worker_counts() {
        let mut cfg = DeConfig::new(vec![(-5.0, 5.0); 4]).with_seed(9);
        cfg.max_generations = 60;
        let serial = minimize(rosenbrock_4, &cfg);
        cfg.workers = 4;
        let parallel = minimize(rosenbrock_4, &cfg);
        assert_eq!(serial, parallel);
        assert_eq!(minimize(rosenbrock_4, &cfg), parallel);
    }

    fn rosenbrock_4(x: &[f64]) -> f64 {
        x.windows(2)
            .map(|w| (1.0 - w[0]).powi(2) + 100.0 * (w[1] - w[0] * w[0]).powi(2))
            .sum()
    }

    #[test]
    fn single_start_matches_minimize() {
        let mut cfg = DeConfig::new(vec![(-3.0, 3.0); 2]).with_seed(21);
        cfg.max_generations = 50;
        assert_eq!(multi_start(sphere, &cfg, 1), minimize(sphere, &cfg));
        assert_eq!(multi_start(sphere, &cfg, 3), multi_start(sphere, &cfg, 3));
    }

    #[test]
    fn population_floor_is_four() {
        let mut cfg = DeConfig::new(vec![(-1.0, 1.0)]).with_seed(2);
        cfg.population = 1;
        let r = minimize(sphere, &cfg);
        assert!(r.best_f < 1e-6);
    }

    #[test]
    fn maximize_reports_the_maximum() {
        let cfg = DeConfig::new(vec![(0.0, 10.0)]).with_seed(4);
        let r = maximize(|x: &[f64]| -(x[0] - 3.0).powi(2) + 2.0, &cfg, 2);
        assert!((r.best_x[0] - 3.0).abs() < 1e-3);
        assert!((r.best_f - 2.0).abs() < 1e-6);
    }

    #[test]
    fn nan_objective_is_never_selected() {
        let cfg = DeConfig::new(vec![(-1.0, 1.0)]).with_seed(8);
        let r = minimize(|x: &[f64]| if x[0] < 0.0 { f64::NAN } else { x[0] }, &cfg);
        assert!(r.best_x[0] >= 0.0 && r.best_f.is_finite());
    }
}
