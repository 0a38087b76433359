//! Dense feedforward classifier with Gaussian hidden units and a single
//! logistic output, trained by per-record backpropagation of `½(d - y)²`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::BinaryLabel;
use crate::error::{Error, Result};

/// `exp(-x²)`, in (0, 1].
pub fn gaussian(x: f64) -> f64 {
    (-x * x).exp()
}

pub fn gaussian_derivative(x: f64) -> f64 {
    -2.0 * x * gaussian(x)
}

// Largest double below 1.
const OUTPUT_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic squash kept strictly inside (0, 1).
pub fn logistic(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, OUTPUT_MAX)
}

/// Layer widths: input, one or more hidden layers, and a single output unit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return Err(Error::invalid("network needs input, >= 1 hidden and output layers"));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::invalid("layer sizes must be >= 1"));
        }
        if *layer_sizes.last().unwrap() != 1 {
            return Err(Error::invalid("output layer must have exactly one unit"));
        }
        Ok(NetworkSpec { layer_sizes })
    }

    pub fn with_hidden(inputs: usize, hidden: &[usize]) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(inputs);
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        NetworkSpec::new(sizes)
    }

    pub fn inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    fn shapes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.layer_sizes.windows(2).map(|w| (w[0], w[1]))
    }

    /// Total weights plus biases.
    pub fn parameter_count(&self) -> usize {
        self.shapes().map(|(i, o)| i * o + o).sum()
    }
}

/// Weights stored fan-in major: `weights[i * fan_out + o]` connects input
/// `i` to unit `o`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkWeights {
    pub layers: Vec<Layer>,
}

impl NetworkWeights {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        NetworkWeights {
            layers: spec
                .shapes()
                .map(|(i, o)| Layer {
                    fan_in: i,
                    fan_out: o,
                    weights: vec![0.0; i * o],
                    biases: vec![0.0; o],
                })
                .collect(),
        }
    }

    /// Uniform in `[-scale, scale]`.
    pub fn random(spec: &NetworkSpec, scale: f64, rng: &mut impl Rng) -> Self {
        let flat: Vec<f64> = (0..spec.parameter_count())
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        unflatten(spec, &flat).expect("length matches spec")
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    fn matches(&self, spec: &NetworkSpec) -> bool {
        self.layers.len() + 1 == spec.layer_sizes.len()
            && self
                .layers
                .iter()
                .zip(spec.shapes())
                .all(|(l, (i, o))| l.fan_in == i && l.fan_out == o)
    }
}

/// Layer-major, each layer's weights followed by its biases.
pub fn flatten(weights: &NetworkWeights) -> Vec<f64> {
    weights
        .layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
        .collect()
}

pub fn unflatten(spec: &NetworkSpec, flat: &[f64]) -> Result<NetworkWeights> {
    let expected = spec.parameter_count();
    if flat.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            actual: flat.len(),
        });
    }
    let mut rest = flat;
    let layers = spec
        .shapes()
        .map(|(i, o)| {
            let (w, tail) = rest.split_at(i * o);
            let (b, tail) = tail.split_at(o);
            rest = tail;
            Layer {
                fan_in: i,
                fan_out: o,
                weights: w.to_vec(),
                biases: b.to_vec(),
            }
        })
        .collect();
    Ok(NetworkWeights { layers })
}

/// Every intermediate of one forward pass. `pre[l]` and `act[l]` belong to
/// layer `l + 1`; `act` for the output layer holds the squashed output.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub pre: Vec<Vec<f64>>,
    pub act: Vec<Vec<f64>>,
    pub output: f64,
}

fn affine(layer: &Layer, x: &[f64]) -> Vec<f64> {
    let mut sums = layer.biases.clone();
    for (i, &xi) in x.iter().enumerate() {
        let row = &layer.weights[i * layer.fan_out..(i + 1) * layer.fan_out];
        for (s, &w) in sums.iter_mut().zip(row) {
            *s += xi * w;
        }
    }
    sums
}

fn check(spec: &NetworkSpec, weights: &NetworkWeights, input: &[f64]) -> Result<()> {
    if !weights.matches(spec) {
        return Err(Error::invalid("weights do not match network spec"));
    }
    if input.len() != spec.inputs() {
        return Err(Error::DimensionMismatch {
            expected: spec.inputs(),
            actual: input.len(),
        });
    }
    Ok(())
}

pub fn forward(spec: &NetworkSpec, weights: &NetworkWeights, input: &[f64]) -> Result<ForwardTrace> {
    check(spec, weights, input)?;
    let n = weights.layers.len();
    let mut pre = Vec::with_capacity(n);
    let mut act: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (l, layer) in weights.layers.iter().enumerate() {
        let x = if l == 0 { input } else { &act[l - 1] };
        let m = affine(layer, x);
        let a = if l + 1 == n {
            vec![logistic(m[0])]
        } else {
            m.iter().map(|&v| gaussian(v)).collect()
        };
        pre.push(m);
        act.push(a);
    }
    let output = act[n - 1][0];
    Ok(ForwardTrace {
        input: input.to_vec(),
        pre,
        act,
        output,
    })
}

/// Network output in (0, 1) without keeping the trace.
pub fn predict(spec: &NetworkSpec, weights: &NetworkWeights, input: &[f64]) -> Result<f64> {
    check(spec, weights, input)?;
    let n = weights.layers.len();
    let mut x = input.to_vec();
    for (l, layer) in weights.layers.iter().enumerate() {
        let m = affine(layer, &x);
        x = if l + 1 == n {
            vec![logistic(m[0])]
        } else {
            m.into_iter().map(gaussian).collect()
        };
    }
    Ok(x[0])
}

/// `target - output`.
pub fn error_signal(target: f64, output: f64) -> f64 {
    target - output
}

/// How the output delta is formed from the error signal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaMode {
    /// `E · σ'(z)`: the true gradient of `½E²`.
    #[default]
    Derivative,
    /// `E · σ(z)`: the activation value in place of its derivative.
    Literal,
}

/// Descent direction for one record: the negative gradient of `½E²` in
/// derivative mode, in flattened parameter order.
pub fn descent_direction(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    input: &[f64],
    target: f64,
    mode: DeltaMode,
) -> Result<Vec<f64>> {
    let trace = forward(spec, weights, input)?;
    let n = weights.layers.len();
    let err = error_signal(target, trace.output);
    let y = trace.output;
    let out_delta = match mode {
        DeltaMode::Derivative => err * y * (1.0 - y),
        DeltaMode::Literal => err * y,
    };

    let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); n];
    deltas[n - 1] = vec![out_delta];
    for l in (0..n - 1).rev() {
        let next = &weights.layers[l + 1];
        deltas[l] = trace.pre[l]
            .iter()
            .enumerate()
            .map(|(h, &m)| {
                let row = &next.weights[h * next.fan_out..(h + 1) * next.fan_out];
                let back: f64 = row.iter().zip(&deltas[l + 1]).map(|(w, d)| w * d).sum();
                back * gaussian_derivative(m)
            })
            .collect();
    }

    let mut dir = Vec::with_capacity(spec.parameter_count());
    for (l, layer) in weights.layers.iter().enumerate() {
        let upstream = if l == 0 { &trace.input } else { &trace.act[l - 1] };
        for &a in upstream.iter().take(layer.fan_in) {
            dir.extend(deltas[l].iter().map(|d| d * a));
        }
        dir.extend_from_slice(&deltas[l]);
    }
    if dir.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    Ok(dir)
}

/// One delta-rule correction: every parameter moves by
/// `learning_rate · delta · upstream activation` (bias: upstream 1).
pub fn backprop_step(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    input: &[f64],
    target: f64,
    learning_rate: f64,
    mode: DeltaMode,
) -> Result<NetworkWeights> {
    let dir = descent_direction(spec, weights, input, target, mode)?;
    let mut flat = flatten(weights);
    for (p, d) in flat.iter_mut().zip(dir) {
        *p += learning_rate * d;
    }
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    unflatten(spec, &flat)
}

/// Mean of `(target - output)²` over the rows, in the given row order.
pub fn mean_squared_error(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    inputs: &[Vec<f64>],
    targets: &[f64],
    order: &[usize],
) -> Result<f64> {
    let mut total = 0.0;
    for &i in order {
        let e = error_signal(targets[i], predict(spec, weights, &inputs[i])?);
        total += e * e;
    }
    Ok(total / order.len() as f64)
}

/// [`mean_squared_error`] evaluated straight from flattened parameters,
/// without unpacking them. Gives bit-identical results.
pub fn mean_squared_error_flat(
    spec: &NetworkSpec,
    flat: &[f64],
    inputs: &[Vec<f64>],
    targets: &[f64],
    order: &[usize],
) -> Result<f64> {
    if flat.len() != spec.parameter_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.parameter_count(),
            actual: flat.len(),
        });
    }
    let widest = spec.layer_sizes.iter().copied().max().unwrap_or(1);
    let mut x = Vec::with_capacity(widest);
    let mut sums = Vec::with_capacity(widest);
    let last = spec.layer_sizes.len() - 2;
    let mut total = 0.0;
    for &r in order {
        let input = &inputs[r];
        if input.len() != spec.inputs() {
            return Err(Error::DimensionMismatch {
                expected: spec.inputs(),
                actual: input.len(),
            });
        }
        x.clear();
        x.extend_from_slice(input);
        let mut offset = 0;
        for (l, (fan_in, fan_out)) in spec.shapes().enumerate() {
            let weights = &flat[offset..offset + fan_in * fan_out];
            let biases = &flat[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            sums.clear();
            sums.extend_from_slice(biases);
            for (i, &xi) in x.iter().enumerate() {
                let row = &weights[i * fan_out..(i + 1) * fan_out];
                for (s, &w) in sums.iter_mut().zip(row) {
                    *s += xi * w;
                }
            }
            x.clear();
            if l == last {
                x.push(logistic(sums[0]));
            } else {
                x.extend(sums.iter().map(|&v| gaussian(v)));
            }
        }
        let e = error_signal(targets[r], x[0]);
        total += e * e;
    }
    Ok(total / order.len() as f64)
}

/// Row indices sorted by (target, features); makes training independent of
/// the order in which rows were supplied.
pub fn canonical_order(inputs: &[Vec<f64>], targets: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.sort_by(|&a, &b| {
        targets[a].total_cmp(&targets[b]).then_with(|| {
            inputs[a]
                .iter()
                .zip(&inputs[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    order
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub mode: DeltaMode,
    pub seed: u64,
}

/// Per-record backpropagation over `epochs` passes. Each pass visits the rows
/// in a seeded shuffle of their canonical order. Returns the final weights
/// and the mean squared error after each epoch.
pub fn train_epochs(
    spec: &NetworkSpec,
    weights: &NetworkWeights,
    inputs: &[Vec<f64>],
    targets: &[f64],
    params: &TrainParams,
) -> Result<(NetworkWeights, Vec<f64>)> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::invalid(
            "training data must be non-empty with one target per row",
        ));
    }
    let canonical = canonical_order(inputs, targets);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut w = weights.clone();
    let mut history = Vec::with_capacity(params.epochs);
    for _ in 0..params.epochs {
        let mut order = canonical.clone();
        order.shuffle(&mut rng);
        for &i in &order {
            w = backprop_step(spec, &w, &inputs[i], targets[i], params.learning_rate, params.mode)?;
        }
        history.push(mean_squared_error(spec, &w, inputs, targets, &canonical)?);
    }
    Ok((w, history))
}

/// Abnormal iff the output reaches `threshold`.
pub fn classify(spec: &NetworkSpec, weights: &NetworkWeights, input: &[f64], threshold: f64) -> Result<BinaryLabel> {
    Ok(BinaryLabel::from(predict(spec, weights, input)? >= threshold))
}
