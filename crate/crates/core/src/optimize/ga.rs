use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{map_indexed, Candidate, Evaluator, ExecMode, GaConfig, SearchSpace};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    /// Best fitness within this generation.
    pub best_fitness: f64,
    /// Mean fitness over rollouts that completed.
    pub mean_fitness: f64,
    /// Best-so-far fitness (by rank).
    pub best_so_far: f64,
    pub feasible: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaResult {
    pub best: Candidate,
    pub history: Vec<GenerationStats>,
    /// False when no feasible candidate was ever found; `best` is then the
    /// least-violating one.
    pub feasible_found: bool,
    pub evaluations: usize,
}

fn rng_for(seed: u64, generation: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(generation as u64);
    rng
}

fn best_of(pop: &[Candidate]) -> &Candidate {
    pop.iter().max_by(|a, b| a.rank_cmp(b)).expect("population is never empty")
}

fn tournament<'a>(pop: &'a [Candidate], size: usize, rng: &mut ChaCha8Rng) -> &'a Candidate {
    let mut best = &pop[rng.random_range(0..pop.len())];
    for _ in 1..size {
        let c = &pop[rng.random_range(0..pop.len())];
        if c.rank_cmp(best).is_gt() {
            best = c;
        }
    }
    best
}

/// BLX-α: each child gene uniform on the parents' interval widened by α on both sides.
fn blend(a: &[f64], b: &[f64], alpha: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let (lo, hi) = (x.min(y), x.max(y));
            let d = hi - lo;
            let (l, h) = (lo - alpha * d, hi + alpha * d);
            if h > l {
                rng.random_range(l..=h)
            } else {
                l
            }
        })
        .collect()
}

fn mutate(x: &mut [f64], space: &SearchSpace, cfg: &GaConfig, rng: &mut ChaCha8Rng) {
    for (v, g) in x.iter_mut().zip(&space.genes) {
        if rng.random::<f64>() < cfg.mutation_rate {
            let sigma = cfg.mutation_sigma * (g.upper - g.lower);
            if sigma > 0.0 {
                *v += Normal::new(0.0, sigma).expect("finite sigma").sample(rng);
            }
        }
    }
    space.clamp(x);
}

fn stats(generation: usize, pop: &[Candidate], best_so_far: &Candidate) -> GenerationStats {
    let done: Vec<f64> = pop.iter().filter(|c| !c.failed()).map(|c| c.fitness).collect();
    let mean = if done.is_empty() { f64::MIN } else { done.iter().sum::<f64>() / done.len() as f64 };
    GenerationStats {
        generation,
        best_fitness: best_of(pop).fitness,
        mean_fitness: mean,
        best_so_far: best_so_far.fitness,
        feasible: pop.iter().filter(|c| c.feasible).count(),
    }
}

/// Real-coded GA over `evaluator`'s search space. Every random draw happens on
/// the calling thread from a per-generation stream, so `mode` never changes
/// the outcome.
pub fn ga_run(cfg: &GaConfig, evaluator: &Evaluator, mode: ExecMode) -> GaResult {
    let space = &evaluator.space;
    let mut rng = rng_for(cfg.seed, 0);
    let mut genomes = vec![space.center()];
    while genomes.len() < cfg.population {
        genomes.push(
            space
                .genes
                .iter()
                .map(|g| if g.upper > g.lower { rng.random_range(g.lower..=g.upper) } else { g.lower })
                .collect(),
        );
    }
    let mut pop = map_indexed(mode, &genomes, |_, x| evaluator.evaluate(x));
    let mut evaluations = pop.len();
    let mut best = best_of(&pop).clone();
    let mut history = vec![stats(0, &pop, &best)];

    for generation in 1..cfg.max_generations {
        let mut rng = rng_for(cfg.seed, generation);
        let mut ranked: Vec<&Candidate> = pop.iter().collect();
        ranked.sort_by(|a, b| b.rank_cmp(a));
        let elites: Vec<Candidate> = ranked.iter().take(cfg.elitism).map(|c| (*c).clone()).collect();

        let mut children = Vec::with_capacity(cfg.population - elites.len());
        while children.len() < cfg.population - elites.len() {
            let p1 = tournament(&pop, cfg.tournament_size, &mut rng);
            let p2 = tournament(&pop, cfg.tournament_size, &mut rng);
            let (mut c1, mut c2) = if rng.random::<f64>() < cfg.crossover_prob {
                (
                    blend(&p1.genes, &p2.genes, cfg.blend_alpha, &mut rng),
                    blend(&p1.genes, &p2.genes, cfg.blend_alpha, &mut rng),
                )
            } else {
                (p1.genes.clone(), p2.genes.clone())
            };
            mutate(&mut c1, space, cfg, &mut rng);
            mutate(&mut c2, space, cfg, &mut rng);
            children.push(c1);
            if children.len() < cfg.population - elites.len() {
                children.push(c2);
            }
        }
        let evaluated = map_indexed(mode, &children, |_, x| evaluator.evaluate(x));
        evaluations += evaluated.len();
        pop = elites.into_iter().chain(evaluated).collect();
        let gen_best = best_of(&pop);
        if gen_best.rank_cmp(&best).is_gt() {
            best = gen_best.clone();
        }
        history.push(stats(generation, &pop, &best));
    }

    GaResult { feasible_found: best.feasible, best, history, evaluations }
}
