//! Fully connected feature network with hand-written backpropagation, and
//! the bias-free linear classifier on top of it.

mod checkpoint;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};

use rand::Rng as _;

use crate::error::{shape_check, Error, Result};
use crate::rng::seeded;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        shape_check("matrix data", rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `self · x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| dot(row, x))
            .collect()
    }

    /// `selfᵀ · y`
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, &yr) in self.data.chunks_exact(self.cols).zip(y) {
            if yr != 0.0 {
                axpy(&mut out, yr, row);
            }
        }
        out
    }

    /// `self += alpha · u vᵀ`
    pub fn add_outer(&mut self, alpha: f64, u: &[f64], v: &[f64]) {
        debug_assert_eq!((u.len(), v.len()), (self.rows, self.cols));
        for (row, &ui) in self.data.chunks_exact_mut(self.cols).zip(u) {
            let s = alpha * ui;
            if s != 0.0 {
                axpy(row, s, v);
            }
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha · x`
pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// A collection of parameter buffers that can be treated as one flat vector.
pub trait Params: Clone {
    fn buffers(&self) -> Vec<&[f64]>;
    fn buffers_mut(&mut self) -> Vec<&mut [f64]>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.buffers_mut().into_iter().for_each(|b| b.fill(0.0));
        z
    }

    fn num_params(&self) -> usize {
        self.buffers().iter().map(|b| b.len()).sum()
    }

    /// `self += alpha · other`
    fn add_scaled(&mut self, alpha: f64, other: &Self) {
        for (y, x) in self.buffers_mut().into_iter().zip(other.buffers()) {
            axpy(y, alpha, x);
        }
    }

    fn scale(&mut self, alpha: f64) {
        for b in self.buffers_mut() {
            b.iter_mut().for_each(|v| *v *= alpha);
        }
    }

    fn all_finite(&self) -> bool {
        self.buffers().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn to_flat(&self) -> Vec<f64> {
        self.buffers().concat()
    }

    fn max_abs_diff(&self, other: &Self) -> f64 {
        self.buffers()
            .iter()
            .zip(other.buffers())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

impl Params for Vec<f64> {
    fn buffers(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

/// Layer widths: input dimension, hidden widths, output dimension D.
/// Every layer but the last is followed by a ReLU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    sizes: Vec<usize>,
}

impl LayerSpec {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config(format!(
                "a network needs at least input and output widths, got {sizes:?}"
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::Config(format!("layer widths must be positive: {sizes:?}")));
        }
        Ok(LayerSpec { sizes })
    }

    /// One hidden layer, as used for the small-image experiments.
    pub fn one_hidden(input: usize, hidden: usize, output: usize) -> Self {
        LayerSpec {
            sizes: vec![input, hidden, output],
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// fan_out × fan_in
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Parameters of the feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    layers: Vec<Layer>,
}

impl NetworkParams {
    pub fn zeros(spec: &LayerSpec) -> Self {
        let layers = spec
            .sizes
            .windows(2)
            .map(|w| Layer {
                weights: Matrix::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        NetworkParams { layers }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            shape_check(&format!("layer {i} bias"), l.weights.rows(), l.bias.len())?;
            if i > 0 {
                shape_check(
                    &format!("layer {i} fan-in"),
                    layers[i - 1].weights.rows(),
                    l.weights.cols(),
                )?;
            }
        }
        Ok(NetworkParams { layers })
    }

    pub fn spec(&self) -> LayerSpec {
        let mut sizes = vec![self.layers[0].weights.cols()];
        sizes.extend(self.layers.iter().map(|l| l.weights.rows()));
        LayerSpec { sizes }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weights.rows()
    }
}

impl Params for NetworkParams {
    fn buffers(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.data(), l.bias.as_slice()])
            .collect()
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.data.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

/// C × D linear classifier without bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierWeights {
    w: Matrix,
}

impl ClassifierWeights {
    pub fn new(w: Matrix) -> Result<Self> {
        if w.rows() == 0 {
            return Err(Error::Shape("classifier needs at least one class".into()));
        }
        Ok(ClassifierWeights { w })
    }

    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        ClassifierWeights {
            w: Matrix::zeros(num_classes, dim),
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.w
    }

    pub fn matrix_mut(&mut self) -> &mut Matrix {
        &mut self.w
    }

    pub fn num_classes(&self) -> usize {
        self.w.rows()
    }

    pub fn dim(&self) -> usize {
        self.w.cols()
    }
}

impl Params for ClassifierWeights {
    fn buffers(&self) -> Vec<&[f64]> {
        vec![self.w.data()]
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.data.as_mut_slice()]
    }
}

/// The jointly trained parameter set: feature network plus classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub net: NetworkParams,
    pub classifier: ClassifierWeights,
}

impl Model {
    pub fn new(net: NetworkParams, classifier: ClassifierWeights) -> Result<Self> {
        shape_check("classifier width", net.output_dim(), classifier.dim())?;
        Ok(Model { net, classifier })
    }

    /// Glorot-initialized network and classifier from one seed.
    pub fn init(spec: &LayerSpec, num_classes: usize, seed: u64) -> Self {
        let net = init_glorot(spec, seed);
        let classifier = init_classifier(num_classes, spec.output_dim(), seed);
        Model { net, classifier }
    }
}

impl Params for Model {
    fn buffers(&self) -> Vec<&[f64]> {
        let mut b = self.net.buffers();
        b.extend(self.classifier.buffers());
        b
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut b = self.net.buffers_mut();
        b.extend(self.classifier.buffers_mut());
        b
    }
}

fn glorot_fill(m: &mut Matrix, rng: &mut crate::rng::Rng) {
    let bound = (6.0 / (m.rows + m.cols) as f64).sqrt();
    for v in &mut m.data {
        *v = rng.random_range(-bound..=bound);
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_glorot(spec: &LayerSpec, seed: u64) -> NetworkParams {
    let mut rng = seeded(seed);
    let mut params = NetworkParams::zeros(spec);
    for layer in &mut params.layers {
        glorot_fill(&mut layer.weights, &mut rng);
    }
    params
}

/// Glorot-uniform classifier weights, drawn from a stream independent of
/// the network's.
pub fn init_classifier(num_classes: usize, dim: usize, seed: u64) -> ClassifierWeights {
    let mut rng = seeded(crate::rng::derive_seed(seed, 0xC1A5));
    let mut w = Matrix::zeros(num_classes, dim);
    glorot_fill(&mut w, &mut rng);
    ClassifierWeights { w }
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTape {
    pub input: Vec<f64>,
    /// Pre-activation of each layer.
    pub pre: Vec<Vec<f64>>,
    /// Output of each layer after its nonlinearity (identity for the last).
    pub post: Vec<Vec<f64>>,
}

impl ActivationTape {
    pub fn output(&self) -> &[f64] {
        self.post.last().unwrap()
    }
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

pub fn forward(params: &NetworkParams, x: &[f64]) -> Result<(Vec<f64>, ActivationTape)> {
    shape_check("network input", params.input_dim(), x.len())?;
    let n = params.layers.len();
    let mut pre = Vec::with_capacity(n);
    let mut post: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (i, layer) in params.layers.iter().enumerate() {
        let input = if i == 0 { x } else { &post[i - 1] };
        let mut a = layer.weights.mul_vec(input);
        axpy(&mut a, 1.0, &layer.bias);
        let mut h = a.clone();
        if i + 1 < n {
            relu(&mut h);
        }
        pre.push(a);
        post.push(h);
    }
    let z = post[n - 1].clone();
    Ok((
        z,
        ActivationTape {
            input: x.to_vec(),
            pre,
            post,
        },
    ))
}

/// Forward pass without keeping intermediates.
pub fn embed(params: &NetworkParams, x: &[f64]) -> Result<Vec<f64>> {
    shape_check("network input", params.input_dim(), x.len())?;
    let n = params.layers.len();
    let mut h = x.to_vec();
    for (i, layer) in params.layers.iter().enumerate() {
        let mut a = layer.weights.mul_vec(&h);
        axpy(&mut a, 1.0, &layer.bias);
        if i + 1 < n {
            relu(&mut a);
        }
        h = a;
    }
    Ok(h)
}

/// Adds `scale · ∂(z·dz)/∂θ` into `grad` and returns `scale · ∂(z·dz)/∂x`.
pub fn backward_accumulate(
    params: &NetworkParams,
    tape: &ActivationTape,
    dz: &[f64],
    scale: f64,
    grad: &mut NetworkParams,
) -> Result<Vec<f64>> {
    let n = params.layers.len();
    if tape.pre.len() != n || grad.layers.len() != n {
        return Err(Error::Shape(format!(
            "tape/gradient has {} layers, network has {n}",
            tape.pre.len()
        )));
    }
    shape_check("output gradient", params.output_dim(), dz.len())?;
    let mut delta: Vec<f64> = dz.iter().map(|d| d * scale).collect();
    for i in (0..n).rev() {
        if i + 1 < n {
            // ReLU subgradient: zero where the pre-activation is not positive.
            for (d, &a) in delta.iter_mut().zip(&tape.pre[i]) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let input = if i == 0 { &tape.input } else { &tape.post[i - 1] };
        let g = &mut grad.layers[i];
        g.weights.add_outer(1.0, &delta, input);
        axpy(&mut g.bias, 1.0, &delta);
        delta = params.layers[i].weights.tr_mul_vec(&delta);
    }
    Ok(delta)
}

/// Gradients of `z·dz` with respect to the parameters and the input.
pub fn backward(
    params: &NetworkParams,
    tape: &ActivationTape,
    dz: &[f64],
) -> Result<(NetworkParams, Vec<f64>)> {
    let mut grad = params.zeros_like();
    let dx = backward_accumulate(params, tape, dz, 1.0, &mut grad)?;
    Ok((grad, dx))
}

/// Logits `W z` and the arg-max class (smallest index on ties).
pub fn classify(w: &ClassifierWeights, z: &[f64]) -> Result<(Vec<f64>, usize)> {
    shape_check("classifier input", w.dim(), z.len())?;
    let logits = w.w.mul_vec(z);
    let pred = argmax(&logits);
    Ok((logits, pred))
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn glorot_bound_and_zero_bias() {
        let spec = LayerSpec::one_hidden(25, 25, 25);
        let p = init_glorot(&spec, 3);
        let bound = (6.0f64 / 50.0).sqrt();
        assert!((bound - 0.34641).abs() < 1e-5);
        for l in p.layers() {
            assert!(l.weights.data().iter().all(|w| w.abs() <= bound));
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
        assert_eq!(p, init_glorot(&spec, 3));
        assert_ne!(p, init_glorot(&spec, 4));
    }

    #[test]
    fn zero_net_maps_to_zero() {
        let p = NetworkParams::zeros(&LayerSpec::one_hidden(4, 3, 2));
        let (z, _) = forward(&p, &[1.0, -2.0, 3.0, 0.5]).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_relu_chain() {
        let mut p = NetworkParams::zeros(&LayerSpec::one_hidden(1, 1, 1));
        p.layers_mut()[0].weights.data_mut()[0] = 1.0;
        p.layers_mut()[1].weights.data_mut()[0] = 1.0;
        assert_eq!(forward(&p, &[-2.0]).unwrap().0, vec![0.0]);
        assert_eq!(forward(&p, &[3.0]).unwrap().0, vec![3.0]);
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let p = NetworkParams::zeros(&LayerSpec::one_hidden(4, 3, 2));
        assert!(matches!(forward(&p, &[1.0]), Err(Error::Shape(_))));
        let (_, tape) = forward(&p, &[0.0; 4]).unwrap();
        assert!(matches!(backward(&p, &tape, &[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_upstream_gradient() {
        let p = init_glorot(&LayerSpec::one_hidden(5, 4, 3), 1);
        let (_, tape) = forward(&p, &random_vec(5, 2)).unwrap();
        let (g, dx) = backward(&p, &tape, &[0.0; 3]).unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dead_unit_passes_no_gradient() {
        let mut p = init_glorot(&LayerSpec::one_hidden(3, 2, 2), 5);
        // force hidden unit 0 dead
        p.layers_mut()[0].bias[0] = -100.0;
        let (_, tape) = forward(&p, &[0.1, 0.2, 0.3]).unwrap();
        let (g, _) = backward(&p, &tape, &[1.0, -1.0]).unwrap();
        let first = &g.layers()[0];
        assert!(first.weights.row(0).iter().all(|&v| v == 0.0));
        assert_eq!(first.bias[0], 0.0);
        // unit 0 feeds nothing into the output layer gradient either
        assert_eq!(g.layers()[1].weights.get(0, 0), 0.0);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let spec = LayerSpec::new(vec![6, 5, 4, 3]).unwrap();
        let p = init_glorot(&spec, 9);
        let x = random_vec(6, 10);
        let dz = random_vec(3, 11);
        let objective = |q: &NetworkParams, x: &[f64]| dot(&embed(q, x).unwrap(), &dz);
        let (_, tape) = forward(&p, &x).unwrap();
        let (g, dx) = backward(&p, &tape, &dz).unwrap();
        let h = 1e-5;
        let flat = g.to_flat();
        let mut idx = 0;
        let mut probe = p.clone();
        for b in 0..p.buffers().len() {
            for e in 0..p.buffers()[b].len() {
                let orig = probe.buffers()[b][e];
                probe.buffers_mut()[b][e] = orig + h;
                let up = objective(&probe, &x);
                probe.buffers_mut()[b][e] = orig - h;
                let down = objective(&probe, &x);
                probe.buffers_mut()[b][e] = orig;
                let num = (up - down) / (2.0 * h);
                assert!((flat[idx] - num).abs() / num.abs().max(1.0) < 1e-6);
                idx += 1;
            }
        }
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let num = (objective(&p, &xp) - objective(&p, &xm)) / (2.0 * h);
            assert!((dx[i] - num).abs() / num.abs().max(1.0) < 1e-6);
        }
    }

    #[test]
    fn classify_tie_and_argmax() {
        let zero = ClassifierWeights::zeros(3, 2);
        assert_eq!(classify(&zero, &[1.0, 2.0]).unwrap(), (vec![0.0; 3], 0));
        let w = ClassifierWeights::new(Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap())
            .unwrap();
        assert_eq!(classify(&w, &[0.2, 0.9]).unwrap().1, 1);
        assert_eq!(classify(&w, &[0.2 * 7.5, 0.9 * 7.5]).unwrap().1, 1);
        assert!(classify(&w, &[1.0]).is_err());
    }

    #[test]
    fn params_flatten_in_layer_order() {
        let mut p = NetworkParams::zeros(&LayerSpec::one_hidden(2, 1, 1));
        p.layers_mut()[0].weights.data_mut().copy_from_slice(&[1.0, 2.0]);
        p.layers_mut()[0].bias[0] = 3.0;
        p.layers_mut()[1].weights.data_mut()[0] = 4.0;
        p.layers_mut()[1].bias[0] = 5.0;
        assert_eq!(p.to_flat(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(p.num_params(), 5);
    }
}
