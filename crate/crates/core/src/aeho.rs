//! Adaptive elephant-herd optimization over real vectors.
//!
//! Each generation: members move toward their clan's matriarch, the
//! matriarch moves to `beta` times the clan centre, consecutive members are
//! recombined by two-point crossover, every member gets a bounded number of
//! mutation attempts, and the worst members of every clan are re-drawn
//! uniformly from the search box.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{evaluate_batch, Bounds};

#[derive(Clone, Debug, PartialEq)]
pub struct Elephant {
    pub position: Vec<f64>,
    pub fitness: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clan {
    pub members: Vec<Elephant>,
}

impl Clan {
    /// Index of the fittest member (first on ties).
    pub fn matriarch(&self) -> usize {
        self.members.iter().enumerate().fold(0, |best, (i, e)| {
            if e.fitness > self.members[best].fitness {
                i
            } else {
                best
            }
        })
    }

    /// Stable sort, fittest first.
    pub fn sort(&mut self) {
        self.members.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
    }

    /// Coordinatewise mean of member positions.
    pub fn center(&self) -> Vec<f64> {
        let n = self.members.len() as f64;
        let dim = self.members[0].position.len();
        (0..dim)
            .map(|d| self.members.iter().map(|e| e.position[d]).sum::<f64>() / n)
            .collect()
    }
}

fn default_alpha() -> f64 {
    0.5
}
fn default_beta() -> f64 {
    0.1
}
fn default_clans() -> usize {
    3
}
fn default_clan_size() -> usize {
    10
}
fn default_generations() -> usize {
    50
}
fn default_bounds() -> Bounds {
    Bounds {
        lower: -5.0,
        upper: 5.0,
    }
}
fn default_worst() -> usize {
    1
}
fn default_mutation_rate() -> f64 {
    0.1
}
fn default_retries() -> usize {
    5
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AehoConfig {
    /// Pull toward the matriarch.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Scale applied to the clan centre for the matriarch's move.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_clans")]
    pub clans: usize,
    #[serde(default = "default_clan_size")]
    pub clan_size: usize,
    #[serde(default = "default_generations")]
    pub max_generations: usize,
    #[serde(default = "default_bounds")]
    pub bounds: Bounds,
    /// Members per clan re-drawn every generation.
    #[serde(default = "default_worst")]
    pub worst_count: usize,
    #[serde(default = "default_mutation_rate")]
    pub mutation_rate: f64,
    /// Mutation attempts per member and generation.
    #[serde(default = "default_retries")]
    pub mutation_retries: usize,
    #[serde(default)]
    pub seed: u64,
    /// Keep an update only if it improves the member.
    #[serde(default = "yes")]
    pub greedy: bool,
    #[serde(default = "yes")]
    pub crossover: bool,
}

impl Default for AehoConfig {
    fn default() -> Self {
        AehoConfig {
            alpha: default_alpha(),
            beta: default_beta(),
            clans: default_clans(),
            clan_size: default_clan_size(),
            max_generations: default_generations(),
            bounds: default_bounds(),
            worst_count: default_worst(),
            mutation_rate: default_mutation_rate(),
            mutation_retries: default_retries(),
            seed: 0,
            greedy: true,
            crossover: true,
        }
    }
}

impl AehoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid("aeho.alpha and aeho.beta must lie in [0, 1]"));
        }
        if self.clans == 0 || self.clan_size < 2 || self.max_generations == 0 {
            return Err(Error::invalid(
                "aeho needs clans >= 1, clan_size >= 2, max_generations >= 1",
            ));
        }
        if self.worst_count >= self.clan_size {
            return Err(Error::invalid("aeho.worst_count must be < clan_size"));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::invalid("aeho.mutation_rate must lie in [0, 1]"));
        }
        Bounds::new(self.bounds.lower, self.bounds.upper)?;
        Ok(())
    }
}

/// `old + alpha * (matriarch - old) * rd`, per coordinate, clamped.
pub fn clan_update(old: &[f64], matriarch: &[f64], alpha: f64, rd: &[f64], bounds: Bounds) -> Vec<f64> {
    old.iter()
        .zip(matriarch)
        .zip(rd)
        .map(|((&o, &m), &r)| bounds.clamp(o + alpha * (m - o) * r))
        .collect()
}

/// Matriarch candidate `beta * center`, clamped.
pub fn matriarch_update(clan: &Clan, beta: f64, bounds: Bounds) -> Vec<f64> {
    clan.center().into_iter().map(|c| bounds.clamp(beta * c)).collect()
}

/// Re-draws the `worst_count` least fit members uniformly from the box.
/// Returns the new clan and the indices replaced; replaced members carry
/// `-inf` fitness until evaluated.
pub fn separation_reinit<R: Rng + ?Sized>(
    clan: &Clan,
    worst_count: usize,
    bounds: Bounds,
    rng: &mut R,
) -> Result<(Clan, Vec<usize>)> {
    if worst_count >= clan.members.len() {
        return Err(Error::invalid(format!(
            "worst_count {worst_count} must be < clan size {}",
            clan.members.len()
        )));
    }
    let mut order: Vec<usize> = (0..clan.members.len()).collect();
    // least fit first; later index first among ties so the matriarch survives
    order.sort_by(|&a, &b| {
        clan.members[a]
            .fitness
            .total_cmp(&clan.members[b].fitness)
            .then(b.cmp(&a))
    });
    let mut worst: Vec<usize> = order.into_iter().take(worst_count).collect();
    worst.sort_unstable();
    let mut out = clan.clone();
    for &i in &worst {
        let e = &mut out.members[i];
        for x in e.position.iter_mut() {
            *x = bounds.lerp(rng.random::<f64>());
        }
        e.fitness = f64::NEG_INFINITY;
    }
    Ok((out, worst))
}

/// Cut points `x1 = n/3`, `x2 = x1 + n/2` (floored); genes in `[x1, x2)`
/// are exchanged.
pub fn crossover_points(n: usize) -> (usize, usize) {
    let x1 = n / 3;
    (x1, x1 + n / 2)
}

pub fn two_point_crossover(a: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 3 {
        return Err(Error::invalid("two-point crossover needs at least 3 genes"));
    }
    let (x1, x2) = crossover_points(a.len());
    let mut c1 = a.to_vec();
    let mut c2 = b.to_vec();
    c1[x1..x2].copy_from_slice(&b[x1..x2]);
    c2[x1..x2].copy_from_slice(&a[x1..x2]);
    Ok((c1, c2))
}

/// `ceil(rate * n)` distinct indices.
pub fn mutation_indices<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Vec<usize> {
    let m = ((rate * n as f64).ceil() as usize).min(n);
    let mut idx = sample(rng, n, m).into_vec();
    idx.sort_unstable();
    idx
}

/// Replaces `ceil(rate * n)` distinct coordinates with fresh uniform draws.
pub fn mutate<R: Rng + ?Sized>(p: &[f64], rate: f64, bounds: Bounds, rng: &mut R) -> Vec<f64> {
    let mut out = p.to_vec();
    for i in mutation_indices(p.len(), rate, rng) {
        out[i] = bounds.lerp(rng.random::<f64>());
    }
    out
}

#[derive(Clone, Debug)]
pub struct AehoOutcome {
    pub best: Elephant,
    /// Best-ever fitness after each generation; non-decreasing.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

struct Herd<'f, F> {
    clans: Vec<Clan>,
    best: Elephant,
    fitness: &'f F,
    evaluations: usize,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Herd<'_, F> {
    fn evaluate(&mut self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        let values = evaluate_batch(points, self.fitness)?;
        self.evaluations += points.len();
        for (p, &v) in points.iter().zip(&values) {
            if v > self.best.fitness {
                self.best = Elephant {
                    position: p.clone(),
                    fitness: v,
                };
            }
        }
        Ok(values)
    }

    /// Evaluates `(clan, member, position)` proposals and installs them.
    fn offer(&mut self, proposals: Vec<(usize, usize, Vec<f64>)>, greedy: bool) -> Result<Vec<bool>> {
        let points: Vec<Vec<f64>> = proposals.iter().map(|p| p.2.clone()).collect();
        let values = self.evaluate(&points)?;
        let mut accepted = Vec::with_capacity(values.len());
        for ((c, m, position), f) in proposals.into_iter().zip(values) {
            let member = &mut self.clans[c].members[m];
            let take = !greedy || f > member.fitness;
            if take {
                *member = Elephant { position, fitness: f };
            }
            accepted.push(take);
        }
        Ok(accepted)
    }
}

/// Maximizes `fitness` from uniformly drawn starting positions.
pub fn run_aeho<F>(fitness: F, dim: usize, config: &AehoConfig) -> Result<AehoOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let total = config.clans * config.clan_size;
    let initial: Vec<Vec<f64>> = (0..total)
        .map(|_| (0..dim).map(|_| config.bounds.lerp(rng.random::<f64>())).collect())
        .collect();
    run_with_rng(fitness, initial, config, rng, &mut |_, _| {})
}

/// [`run_aeho`] calling `observer(generation, clans)` after initialization
/// (generation 0) and at the end of every generation.
pub fn run_aeho_observed<F, O>(fitness: F, dim: usize, config: &AehoConfig, mut observer: O) -> Result<AehoOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
    O: FnMut(usize, &[Clan]),
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let total = config.clans * config.clan_size;
    let initial: Vec<Vec<f64>> = (0..total)
        .map(|_| (0..dim).map(|_| config.bounds.lerp(rng.random::<f64>())).collect())
        .collect();
    run_with_rng(fitness, initial, config, rng, &mut observer)
}

/// Like [`run_aeho`] but starting from `initial` positions (one per
/// elephant, clan-major).
pub fn run_aeho_from<F>(fitness: F, initial: Vec<Vec<f64>>, config: &AehoConfig) -> Result<AehoOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let rng = ChaCha8Rng::seed_from_u64(config.seed);
    run_with_rng(fitness, initial, config, rng, &mut |_, _| {})
}

fn run_with_rng<F>(
    fitness: F,
    initial: Vec<Vec<f64>>,
    config: &AehoConfig,
    mut rng: ChaCha8Rng,
    observer: &mut dyn FnMut(usize, &[Clan]),
) -> Result<AehoOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let total = config.clans * config.clan_size;
    if initial.len() != total {
        return Err(Error::DimensionMismatch {
            expected: total,
            actual: initial.len(),
        });
    }
    let dim = initial[0].len();
    if dim == 0 || initial.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("initial positions must share a non-zero dimension"));
    }
    let bounds = config.bounds;
    let initial: Vec<Vec<f64>> = initial
        .into_iter()
        .map(|p| p.into_iter().map(|x| bounds.clamp(x)).collect())
        .collect();

    let mut herd = Herd {
        clans: Vec::new(),
        best: Elephant {
            position: initial[0].clone(),
            fitness: f64::NEG_INFINITY,
        },
        fitness: &fitness,
        evaluations: 0,
    };
    let values = herd.evaluate(&initial)?;
    let mut members = initial
        .into_iter()
        .zip(values)
        .map(|(position, fitness)| Elephant { position, fitness });
    herd.clans = (0..config.clans)
        .map(|_| Clan {
            members: members.by_ref().take(config.clan_size).collect(),
        })
        .collect();
    observer(0, &herd.clans);

    let mut history = Vec::with_capacity(config.max_generations);
    for generation in 1..=config.max_generations {
        for clan in herd.clans.iter_mut() {
            clan.sort();
        }

        // Clan and matriarch moves, all proposed from the sorted snapshot.
        let mut proposals = Vec::with_capacity(total);
        for (c, clan) in herd.clans.iter().enumerate() {
            let matriarch = &clan.members[0].position;
            proposals.push((c, 0, matriarch_update(clan, config.beta, bounds)));
            for (m, e) in clan.members.iter().enumerate().skip(1) {
                let rd: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
                proposals.push((c, m, clan_update(&e.position, matriarch, config.alpha, &rd, bounds)));
            }
        }
        herd.offer(proposals, config.greedy)?;

        if config.crossover && dim >= 3 {
            for clan in herd.clans.iter_mut() {
                clan.sort();
            }
            let mut proposals = Vec::new();
            for (c, clan) in herd.clans.iter().enumerate() {
                for pair in (0..clan.members.len() - 1).step_by(2) {
                    let (c1, c2) = two_point_crossover(&clan.members[pair].position, &clan.members[pair + 1].position)?;
                    proposals.push((c, pair, c1));
                    proposals.push((c, pair + 1, c2));
                }
            }
            herd.offer(proposals, config.greedy)?;
        }

        if config.mutation_rate > 0.0 {
            let mut pending: Vec<(usize, usize)> = (0..config.clans)
                .flat_map(|c| (0..config.clan_size).map(move |m| (c, m)))
                .collect();
            for _ in 0..config.mutation_retries {
                if pending.is_empty() {
                    break;
                }
                let proposals: Vec<(usize, usize, Vec<f64>)> = pending
                    .iter()
                    .map(|&(c, m)| {
                        let p = &herd.clans[c].members[m].position;
                        (c, m, mutate(p, config.mutation_rate, bounds, &mut rng))
                    })
                    .collect();
                let accepted = herd.offer(proposals, true)?;
                pending = pending
                    .into_iter()
                    .zip(accepted)
                    .filter_map(|(slot, ok)| (!ok).then_some(slot))
                    .collect();
            }
        }

        if config.worst_count > 0 {
            let mut fresh = Vec::new();
            for c in 0..herd.clans.len() {
                let (clan, replaced) = separation_reinit(&herd.clans[c], config.worst_count, bounds, &mut rng)?;
                for &m in &replaced {
                    fresh.push((c, m, clan.members[m].position.clone()));
                }
                herd.clans[c] = clan;
            }
            herd.offer(fresh, false)?;
        }

        history.push(herd.best.fitness);
        observer(generation, &herd.clans);
    }

    Ok(AehoOutcome {
        best: herd.best,
        history,
        evaluations: herd.evaluations,
    })
}
