//! Chaotic cuttlefish search for wrapper feature selection.
//!
//! Candidate cells live in a continuous box; a feature is selected when its
//! coordinate exceeds a threshold. The population is split into four groups
//! that generate candidates differently:
//!
//! | group | reflection            | visibility                   |
//! |-------|-----------------------|------------------------------|
//! | 1     | `cr * own[j]`         | `br * (best[j] - own[j])`    |
//! | 2     | `cr * best[j]`        | `br * (best[j] - own[j])`    |
//! | 3     | `cr * own[j]`         | `br * (best[j] - avg(best))` |
//! | 4     | uniform re-draw in the box                           |
//!
//! The new coordinate is reflection plus visibility, clamped to the box.
//! `cr` and `br` are drawn from a pair of logistic maps, fresh per coordinate.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{evaluate_batch, Bounds};

/// Pair of logistic maps `x' = delta * x * (1 - x)` driving `cr` and `br`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChaosMap {
    delta: f64,
    cr: f64,
    br: f64,
}

/// One logistic-map iteration.
pub fn logistic(delta: f64, x: f64) -> f64 {
    (delta * (x * (1.0 - x))).clamp(0.0, 1.0)
}

impl ChaosMap {
    pub fn new(delta: f64, cr: f64, br: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 4.0) {
            return Err(Error::invalid(format!("chaos delta {delta} outside (0, 4]")));
        }
        for (name, v) in [("cr", cr), ("br", br)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("chaos state {name}={v} outside [0, 1]")));
            }
        }
        Ok(ChaosMap { delta, cr, br })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn state(&self) -> (f64, f64) {
        (self.cr, self.br)
    }

    /// Advances both maps and returns the new `(cr, br)`.
    pub fn step(&mut self) -> (f64, f64) {
        self.cr = logistic(self.delta, self.cr);
        self.br = logistic(self.delta, self.br);
        (self.cr, self.br)
    }

    /// Non-zero fixed point `1 - 1/delta`, when it lies in (0, 1).
    pub fn fixed_point(delta: f64) -> Option<f64> {
        (delta > 1.0).then(|| 1.0 - 1.0 / delta)
    }
}

/// Source of the `(cr, br)` coefficient pair used per coordinate.
pub trait Coefficients {
    fn next_pair(&mut self) -> (f64, f64);
}

impl Coefficients for ChaosMap {
    fn next_pair(&mut self) -> (f64, f64) {
        self.step()
    }
}

/// Logistic maps that are re-seeded from `rng` whenever an orbit lands on a
/// stationary or absorbing value (0, 1, or the fixed point). In floating
/// point a fully chaotic orbit can still collapse onto one of these.
#[derive(Clone, Debug)]
pub struct ChaoticSource {
    map: ChaosMap,
    rng: ChaCha8Rng,
}

fn degenerate(delta: f64, x: f64) -> bool {
    let y = logistic(delta, x);
    x <= 0.0 || x >= 1.0 || y <= 0.0 || y >= 1.0 || y == x
}

fn draw_state(delta: f64, rng: &mut impl Rng) -> f64 {
    const EXCLUDED: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
    loop {
        let x: f64 = rng.random();
        if !EXCLUDED.contains(&x) && !degenerate(delta, x) {
            return x;
        }
    }
}

impl ChaoticSource {
    pub fn new(delta: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cr = draw_state(delta, &mut rng);
        let br = draw_state(delta, &mut rng);
        Ok(ChaoticSource {
            map: ChaosMap::new(delta, cr, br)?,
            rng,
        })
    }
}

impl Coefficients for ChaoticSource {
    fn next_pair(&mut self) -> (f64, f64) {
        let (mut cr, mut br) = self.map.step();
        let delta = self.map.delta;
        if degenerate(delta, cr) {
            cr = draw_state(delta, &mut self.rng);
        }
        if degenerate(delta, br) {
            br = draw_state(delta, &mut self.rng);
        }
        self.map.cr = cr;
        self.map.br = br;
        (cr, br)
    }
}

/// A candidate solution; `fitness` is `-inf` until evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub points: Vec<f64>,
    pub fitness: f64,
}

impl Cell {
    fn unevaluated(points: Vec<f64>) -> Self {
        Cell {
            points,
            fitness: f64::NEG_INFINITY,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Category {
    One,
    Two,
    Three,
    Four,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::One, Category::Two, Category::Three, Category::Four];

    pub fn from_number(n: u8) -> Result<Category> {
        match n {
            1 => Ok(Category::One),
            2 => Ok(Category::Two),
            3 => Ok(Category::Three),
            4 => Ok(Category::Four),
            _ => Err(Error::invalid(format!("category {n} outside 1..=4"))),
        }
    }

    fn index(self) -> usize {
        match self {
            Category::One => 0,
            Category::Two => 1,
            Category::Three => 2,
            Category::Four => 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Population {
    pub groups: [Vec<Cell>; 4],
    pub best: Cell,
    /// Mean of the best cell's coordinates.
    pub avb: f64,
    pub bounds: Bounds,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

impl Population {
    pub fn size(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn group(&self, category: Category) -> &[Cell] {
        &self.groups[category.index()]
    }

    fn offer_best(&mut self, cell: &Cell) -> bool {
        if cell.fitness > self.best.fitness {
            self.best = cell.clone();
            self.avb = mean(&self.best.points);
            true
        } else {
            false
        }
    }
}

/// Builds `n` cells from the chaotic sequence and deals them to the four
/// groups round-robin. `evaluate` scores a batch of points.
pub fn init_population_chaotic<C, E>(
    n: usize,
    dim: usize,
    bounds: Bounds,
    coeffs: &mut C,
    evaluate: &mut E,
) -> Result<Population>
where
    C: Coefficients + ?Sized,
    E: FnMut(&[Vec<f64>]) -> Result<Vec<f64>> + ?Sized,
{
    if n < 4 {
        return Err(Error::invalid(format!(
            "population {n} < 4: every category needs a cell"
        )));
    }
    if dim == 0 {
        return Err(Error::invalid("dimension must be >= 1"));
    }
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| bounds.lerp(coeffs.next_pair().0)).collect())
        .collect();
    let fitness = evaluate(&points)?;
    let mut groups: [Vec<Cell>; 4] = Default::default();
    let mut best: Option<Cell> = None;
    for (c, (p, f)) in points.into_iter().zip(fitness).enumerate() {
        let cell = Cell { points: p, fitness: f };
        if best.as_ref().is_none_or(|b| f > b.fitness) {
            best = Some(cell.clone());
        }
        groups[c % 4].push(cell);
    }
    let best = best.expect("n >= 4");
    let avb = mean(&best.points);
    Ok(Population {
        groups,
        best,
        avb,
        bounds,
    })
}

/// Candidate coordinate for one cell, before clamping.
pub fn candidate_coordinate(category: Category, own: f64, best: f64, avb: f64, cr: f64, br: f64) -> f64 {
    let (reflection, visibility) = match category {
        Category::One => (cr * own, br * (best - own)),
        Category::Two => (cr * best, br * (best - own)),
        Category::Three => (cr * own, br * (best - avb)),
        Category::Four => unreachable!("category 4 re-draws uniformly"),
    };
    reflection + visibility
}

/// New candidate for cell `i` of `category`. Category 4 draws uniformly from
/// `rng`; the others consume one coefficient pair per coordinate.
pub fn generate_candidate<C, R>(
    pop: &Population,
    category: Category,
    i: usize,
    coeffs: &mut C,
    rng: &mut R,
) -> Result<Cell>
where
    C: Coefficients + ?Sized,
    R: Rng + ?Sized,
{
    let group = pop.group(category);
    let cell = group.get(i).ok_or_else(|| {
        Error::invalid(format!(
            "cell index {i} out of range for category {} of size {}",
            category.index() + 1,
            group.len()
        ))
    })?;
    let bounds = pop.bounds;
    let points = match category {
        Category::Four => cell.points.iter().map(|_| bounds.lerp(rng.random::<f64>())).collect(),
        _ => cell
            .points
            .iter()
            .zip(&pop.best.points)
            .map(|(&own, &best)| {
                let (cr, br) = coeffs.next_pair();
                bounds.clamp(candidate_coordinate(category, own, best, pop.avb, cr, br))
            })
            .collect(),
    };
    Ok(Cell::unevaluated(points))
}

/// Boolean feature subset; never empty.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<bool>", into = "Vec<bool>")]
pub struct FeatureMask {
    selected: Vec<bool>,
}

impl FeatureMask {
    pub fn new(selected: Vec<bool>) -> Result<Self> {
        if !selected.iter().any(|&s| s) {
            return Err(Error::invalid("feature mask selects nothing"));
        }
        Ok(FeatureMask { selected })
    }

    pub fn all(n: usize) -> Self {
        assert!(n > 0, "mask over zero features");
        FeatureMask {
            selected: vec![true; n],
        }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut selected = vec![false; n];
        for &i in indices {
            *selected
                .get_mut(i)
                .ok_or_else(|| Error::invalid(format!("feature index {i} >= {n}")))? = true;
        }
        FeatureMask::new(selected)
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn count(&self) -> usize {
        self.selected.iter().filter(|&&s| s).count()
    }

    pub fn is_selected(&self, j: usize) -> bool {
        self.selected[j]
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.selected.len()).filter(|&j| self.selected[j]).collect()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.selected
    }
}

impl TryFrom<Vec<bool>> for FeatureMask {
    type Error = Error;
    fn try_from(v: Vec<bool>) -> Result<Self> {
        FeatureMask::new(v)
    }
}

impl From<FeatureMask> for Vec<bool> {
    fn from(m: FeatureMask) -> Self {
        m.selected
    }
}

impl std::fmt::Display for FeatureMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &s in &self.selected {
            f.write_str(if s { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Selects feature `j` iff `points[j] > threshold`; falls back to the
/// (first) largest coordinate so the mask is never empty.
pub fn decode_mask(points: &[f64], threshold: f64) -> FeatureMask {
    let mut selected: Vec<bool> = points.iter().map(|&p| p > threshold).collect();
    if !selected.iter().any(|&s| s) {
        let argmax = points
            .iter()
            .enumerate()
            .fold(0, |best, (j, &p)| if p > points[best] { j } else { best });
        selected[argmax] = true;
    }
    FeatureMask { selected }
}

fn default_population() -> usize {
    20
}
fn default_generations() -> usize {
    50
}
fn default_delta() -> f64 {
    4.0
}
fn default_threshold() -> f64 {
    0.5
}
fn default_lambda() -> f64 {
    0.01
}
fn default_bounds() -> Bounds {
    Bounds::unit()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McfaConfig {
    #[serde(default = "default_population")]
    pub population: usize,
    #[serde(default = "default_generations")]
    pub generations: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Subset-size penalty weight applied by wrapper fitness functions.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bounds")]
    pub bounds: Bounds,
}

impl Default for McfaConfig {
    fn default() -> Self {
        McfaConfig {
            population: default_population(),
            generations: default_generations(),
            delta: default_delta(),
            threshold: default_threshold(),
            lambda: default_lambda(),
            seed: 0,
            bounds: default_bounds(),
        }
    }
}

impl McfaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(Error::invalid("mcfa.population must be >= 4"));
        }
        if self.generations == 0 {
            return Err(Error::invalid("mcfa.generations must be >= 1"));
        }
        if !(self.delta > 0.0 && self.delta <= 4.0) {
            return Err(Error::invalid("mcfa.delta must be in (0, 4]"));
        }
        Bounds::new(self.bounds.lower, self.bounds.upper)?;
        if !(self.threshold > self.bounds.lower && self.threshold < self.bounds.upper) {
            return Err(Error::invalid("mcfa.threshold must lie strictly inside the bounds"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("mcfa.lambda must be a finite value >= 0"));
        }
        Ok(())
    }
}

/// Result of a continuous run.
#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub best: Cell,
    /// Best fitness after each generation; non-decreasing.
    pub history: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct McfaOutcome {
    pub mask: FeatureMask,
    pub best_fitness: f64,
    pub history: Vec<f64>,
    /// Distinct masks scored during the run.
    pub evaluations: usize,
}

/// Core generation loop over a batch evaluator.
fn search<E>(dim: usize, config: &McfaConfig, evaluate: &mut E) -> Result<SearchOutcome>
where
    E: FnMut(&[Vec<f64>]) -> Result<Vec<f64>>,
{
    config.validate()?;
    let mut coeffs = ChaoticSource::new(config.delta, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut pop = init_population_chaotic(config.population, dim, config.bounds, &mut coeffs, evaluate)?;
    let mut history = Vec::with_capacity(config.generations);

    for _ in 0..config.generations {
        // All candidates are generated from the generation-start snapshot.
        let mut slots = Vec::with_capacity(pop.size());
        let mut candidates = Vec::with_capacity(pop.size());
        for category in Category::ALL {
            for i in 0..pop.group(category).len() {
                let cand = generate_candidate(&pop, category, i, &mut coeffs, &mut rng)?;
                slots.push((category.index(), i));
                candidates.push(cand.points);
            }
        }
        let fitness = evaluate(&candidates)?;
        for (((g, i), points), f) in slots.into_iter().zip(candidates).zip(fitness) {
            let cell = &mut pop.groups[g][i];
            if f > cell.fitness {
                *cell = Cell { points, fitness: f };
                let cell = cell.clone();
                pop.offer_best(&cell);
            }
        }
        history.push(pop.best.fitness);
    }
    Ok(SearchOutcome {
        best: pop.best,
        history,
    })
}

/// Maximizes a continuous objective over `dim` coordinates in `config.bounds`.
pub fn optimize_continuous<F>(f: F, dim: usize, config: &McfaConfig) -> Result<SearchOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    search(dim, config, &mut |pts: &[Vec<f64>]| evaluate_batch(pts, &f))
}

/// Wrapper feature selection: maximizes `fitness` over masks of `dim`
/// features. Each distinct mask is scored once.
pub fn run_mcfa<F>(fitness: F, dim: usize, config: &McfaConfig) -> Result<McfaOutcome>
where
    F: Fn(&FeatureMask) -> f64 + Sync,
{
    use rayon::prelude::*;
    let threshold = config.threshold;
    let mut cache: HashMap<FeatureMask, f64> = HashMap::new();
    let mut evaluate = |pts: &[Vec<f64>]| -> Result<Vec<f64>> {
        let masks: Vec<FeatureMask> = pts.iter().map(|p| decode_mask(p, threshold)).collect();
        let mut fresh: Vec<FeatureMask> = Vec::new();
        for m in &masks {
            if !cache.contains_key(m) && !fresh.contains(m) {
                fresh.push(m.clone());
            }
        }
        let scores: Vec<f64> = fresh.par_iter().map(&fitness).collect();
        for (m, s) in fresh.into_iter().zip(scores) {
            if !s.is_finite() {
                return Err(Error::NonFiniteFitness {
                    value: s,
                    candidate: format!("mask {m}"),
                });
            }
            cache.insert(m, s);
        }
        Ok(masks.iter().map(|m| cache[m]).collect())
    };
    let outcome = search(dim, config, &mut evaluate)?;
    Ok(McfaOutcome {
        mask: decode_mask(&outcome.best.points, threshold),
        best_fitness: outcome.best.fitness,
        history: outcome.history,
        evaluations: cache.len(),
    })
}
