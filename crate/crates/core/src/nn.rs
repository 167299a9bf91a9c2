//! Dense feed-forward networks with explicit per-layer backward passes,
//! softmax cross-entropy, and SGD / Adam.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MeibError, Result};
use crate::linalg::DenseMatrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    #[inline]
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
            Activation::Sigmoid => out * (1.0 - out),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            activation,
        }
    }

    /// Chains `widths` starting from `in_dim`, all with the same activation.
    pub fn chain(in_dim: usize, widths: &[usize], activation: Activation) -> Vec<Self> {
        let mut prev = in_dim;
        widths
            .iter()
            .map(|&w| {
                let spec = Self::new(prev, w, activation);
                prev = w;
                spec
            })
            .collect()
    }
}

/// One dense layer, `y = act(x Wᵀ + b)` with `W` stored `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    in_dim: usize,
    layers: Vec<Layer>,
}

/// Per-layer activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `inputs[l]` feeds layer `l`; `inputs[0]` is the network input.
    inputs: Vec<DenseMatrix>,
    pre: Vec<DenseMatrix>,
    output: DenseMatrix,
}

impl ForwardTrace {
    pub fn output(&self) -> &DenseMatrix {
        &self.output
    }

    pub fn into_output(self) -> DenseMatrix {
        self.output
    }

    pub fn pre_activation(&self, layer: usize) -> &DenseMatrix {
        &self.pre[layer]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<DenseMatrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp
                .layers
                .iter()
                .map(|l| DenseMatrix::zeros(l.weight.rows(), l.weight.cols()))
                .collect(),
            biases: mlp.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, other: &Self, s: f64) -> Result<()> {
        if self.weights.len() != other.weights.len() {
            return Err(MeibError::dim("gradient sets have different layer counts"));
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.add_scaled_in_place(b, s)?;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            if a.len() != b.len() {
                return Err(MeibError::dim("bias gradient length mismatch"));
            }
            a.iter_mut().zip(b).for_each(|(x, y)| *x += s * y);
        }
        Ok(())
    }

    /// Flat views in parameter declaration order (weight, bias per layer).
    pub fn slices(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.data(), b.as_slice()])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

fn check_specs(in_dim: usize, specs: &[LayerSpec]) -> Result<()> {
    if in_dim == 0 {
        return Err(MeibError::dim("network input dimension must be at least 1"));
    }
    let mut prev = in_dim;
    for (i, s) in specs.iter().enumerate() {
        if s.in_dim == 0 || s.out_dim == 0 {
            return Err(MeibError::dim(format!("layer {i} has a zero dimension")));
        }
        if s.in_dim != prev {
            return Err(MeibError::dim(format!(
                "layer {i} expects {} inputs but receives {prev}",
                s.in_dim
            )));
        }
        prev = s.out_dim;
    }
    Ok(())
}

impl Mlp {
    /// Seeded initialization: He-uniform for ReLU layers, Xavier-uniform
    /// otherwise; zero biases.
    pub fn init(in_dim: usize, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        check_specs(in_dim, specs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .iter()
            .map(|&spec| {
                let fan_in = spec.in_dim as f64;
                let fan_out = spec.out_dim as f64;
                let limit = match spec.activation {
                    Activation::Relu => (6.0 / fan_in).sqrt(),
                    _ => (6.0 / (fan_in + fan_out)).sqrt(),
                };
                let weight = DenseMatrix::from_fn(spec.out_dim, spec.in_dim, |_, _| {
                    rng.random_range(-limit..limit)
                });
                Layer {
                    spec,
                    weight,
                    bias: vec![0.0; spec.out_dim],
                }
            })
            .collect();
        Ok(Self { in_dim, layers })
    }

    /// Builds a network from explicit parameters.
    pub fn from_layers(in_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        check_specs(in_dim, &specs)?;
        for (i, l) in layers.iter().enumerate() {
            if l.weight.shape() != (l.spec.out_dim, l.spec.in_dim) || l.bias.len() != l.spec.out_dim
            {
                return Err(MeibError::dim(format!("layer {i} parameters do not match its spec")));
            }
            if !l.weight.is_finite() || l.bias.iter().any(|b| !b.is_finite()) {
                return Err(MeibError::NonFinite(format!("layer {i} parameters")));
            }
        }
        Ok(Self { in_dim, layers })
    }

    /// A network with no layers passes its input through unchanged.
    pub fn identity(dim: usize) -> Self {
        Self {
            in_dim: dim,
            layers: Vec::new(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(self.in_dim, |l| l.spec.out_dim)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    /// Flat mutable views in declaration order, matching [`MlpGrads::slices`].
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
            .collect()
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<ForwardTrace> {
        if x.cols() != self.in_dim {
            return Err(MeibError::dim(format!(
                "network expects {} input features, got {}",
                self.in_dim,
                x.cols()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for layer in &self.layers {
            let mut z = current.matmul_t(&layer.weight)?;
            for r in 0..z.rows() {
                z.row_mut(r)
                    .iter_mut()
                    .zip(&layer.bias)
                    .for_each(|(v, b)| *v += b);
            }
            let act = layer.spec.activation;
            let out = z.map(|v| act.apply(v));
            inputs.push(current);
            pre.push(z);
            current = out;
        }
        Ok(ForwardTrace {
            inputs,
            pre,
            output: current,
        })
    }

    /// Gradients of every parameter and of the input, given `∂L/∂output`.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        upstream: &DenseMatrix,
    ) -> Result<(MlpGrads, DenseMatrix)> {
        if trace.pre.len() != self.layers.len() {
            return Err(MeibError::dim("trace was recorded by a different network"));
        }
        if upstream.shape() != trace.output.shape() {
            return Err(MeibError::dim(format!(
                "upstream gradient {:?} does not match output {:?}",
                upstream.shape(),
                trace.output.shape()
            )));
        }
        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        let mut grad = upstream.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let out = if l + 1 < self.layers.len() {
                &trace.inputs[l + 1]
            } else {
                &trace.output
            };
            let act = layer.spec.activation;
            if act != Activation::Identity {
                for ((g, &p), &o) in grad
                    .data_mut()
                    .iter_mut()
                    .zip(trace.pre[l].data())
                    .zip(out.data())
                {
                    *g *= act.derivative(p, o);
                }
            }
            weights.push(grad.t_matmul(&trace.inputs[l])?);
            biases.push(grad.column_sums());
            grad = grad.matmul(&layer.weight)?;
        }
        weights.reverse();
        biases.reverse();
        Ok((MlpGrads { weights, biases }, grad))
    }
}

/// Mean softmax cross-entropy in nats and its gradient `(softmax − onehot)/N`.
pub fn softmax_cross_entropy(logits: &DenseMatrix, labels: &[usize]) -> Result<(f64, DenseMatrix)> {
    let (n, c) = logits.shape();
    if labels.len() != n {
        return Err(MeibError::dim(format!(
            "{} labels for {n} rows of logits",
            labels.len()
        )));
    }
    if n == 0 {
        return Err(MeibError::Empty("cross-entropy batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(MeibError::param(format!("label {bad} out of range for {c} classes")));
    }
    let mut grad = DenseMatrix::zeros(n, c);
    let mut loss = 0.0;
    let inv_n = 1.0 / n as f64;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[y];
        for (g, &v) in grad.row_mut(i).iter_mut().zip(row) {
            *g = (v - log_z).exp() * inv_n;
        }
        grad.row_mut(i)[y] -= inv_n;
    }
    Ok((loss * inv_n, grad))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. Moment buffers are created on the first call and
    /// every later call must present the same parameter shapes.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(MeibError::dim(format!(
                "{} parameter tensors but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() {
                return Err(MeibError::dim(format!(
                    "parameter {i} has {} entries, gradient {}",
                    p.len(),
                    g.len()
                )));
            }
        }
        if self.kind == OptimizerKind::Adam {
            if self.first.is_empty() && self.step == 0 {
                self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
                self.second = self.first.clone();
            }
            if self.first.len() != params.len()
                || self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
            {
                return Err(MeibError::dim("parameter shapes changed between optimizer steps"));
            }
        }
        self.step += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    p.iter_mut().zip(g.iter()).for_each(|(p, g)| *p -= lr * g);
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
                let t = self.step as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.first.iter_mut())
                    .zip(self.second.iter_mut())
                {
                    for (((p, &g), m), v) in
                        p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut())
                    {
                        *m = b1 * *m + (1.0 - b1) * g;
                        *v = b2 * *v + (1.0 - b2) * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *p -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_identity(dim: usize) -> Mlp {
        Mlp::from_layers(
            dim,
            vec![Layer {
                spec: LayerSpec::new(dim, dim, Activation::Identity),
                weight: DenseMatrix::identity(dim),
                bias: vec![0.0; dim],
            }],
        )
        .unwrap()
    }

    #[test]
    fn identity_layer_passes_through() {
        let net = linear_identity(3);
        let x = DenseMatrix::from_rows(&[[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]]).unwrap();
        let trace = net.forward(&x).unwrap();
        assert_eq!(trace.output(), &x);
        let up = DenseMatrix::from_rows(&[[0.3, 0.1, -0.2], [1.0, 2.0, 3.0]]).unwrap();
        let (_, dx) = net.backward(&trace, &up).unwrap();
        assert_eq!(dx, up);
    }

    #[test]
    fn relu_clips_negatives() {
        let net = Mlp::from_layers(
            2,
            vec![Layer {
                spec: LayerSpec::new(2, 2, Activation::Relu),
                weight: DenseMatrix::identity(2),
                bias: vec![0.0; 2],
            }],
        )
        .unwrap();
        let x = DenseMatrix::from_rows(&[[-1.0, 2.0]]).unwrap();
        assert_eq!(net.forward(&x).unwrap().output().data(), &[0.0, 2.0]);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = linear_identity(3);
        assert!(net.forward(&DenseMatrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let specs = LayerSpec::chain(4, &[5, 3], Activation::Tanh);
        let net = Mlp::init(4, &specs, 1).unwrap();
        let x = DenseMatrix::filled(2, 4, 0.5);
        let trace = net.forward(&x).unwrap();
        let (g, dx) = net.backward(&trace, &DenseMatrix::zeros(2, 3)).unwrap();
        assert!(g.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_rejects_mismatched_upstream() {
        let net = linear_identity(2);
        let trace = net.forward(&DenseMatrix::zeros(3, 2)).unwrap();
        assert!(net.backward(&trace, &DenseMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let (loss, _) = softmax_cross_entropy(&DenseMatrix::zeros(3, 2), &[0, 1, 1]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_decreases_with_margin() {
        let mut prev = f64::INFINITY;
        for margin in [2.0, 5.0, 10.0] {
            let logits = DenseMatrix::from_rows(&[[margin, 0.0, 0.0]]).unwrap();
            let (loss, _) = softmax_cross_entropy(&logits, &[0]).unwrap();
            assert!(loss < prev && loss > 0.0);
            prev = loss;
        }
    }

    #[test]
    fn cross_entropy_is_stable_for_huge_logits() {
        let logits = DenseMatrix::from_rows(&[[1e4, -1e4, 0.0], [-1e4, 1e4, 1e4]]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[1, 0]).unwrap();
        assert!(loss.is_finite() && grad.is_finite());
    }

    #[test]
    fn cross_entropy_rejects_bad_labels() {
        assert!(softmax_cross_entropy(&DenseMatrix::zeros(1, 2), &[2]).is_err());
        assert!(softmax_cross_entropy(&DenseMatrix::zeros(2, 2), &[0]).is_err());
    }

    #[test]
    fn sgd_step() {
        let mut p = [1.0];
        let mut opt = OptimizerState::sgd(0.1);
        opt.step(&mut [&mut p[..]], &[&[2.0]]).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_unit() {
        let mut p = [0.5, -0.5];
        let mut opt = OptimizerState::adam(0.01);
        opt.step(&mut [&mut p[..]], &[&[3.0, 1e-3]]).unwrap();
        assert!((p[0] - 0.49).abs() < 1e-8);
        assert!((p[1] + 0.51).abs() < 1e-6);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // Scalar simulation of the same recurrences as the reference.
        let (lr, b1, b2, eps) = (0.05_f64, 0.9_f64, 0.999_f64, 1e-8_f64);
        let (mut q, mut m, mut v) = (1.0_f64, 0.0_f64, 0.0_f64);
        let mut p = [1.0];
        let mut opt = OptimizerState::adam(lr);
        for t in 1..=100 {
            let g = 2.0 * q;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            q -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            let gp = 2.0 * p[0];
            opt.step(&mut [&mut p[..]], &[&[gp]]).unwrap();
        }
        assert_eq!(p[0], q);
        // Frozen from the scalar simulation (also reproduced in Python). Adam
        // still oscillates around the minimum after 100 steps at this rate.
        assert!((p[0] - -0.004211400384638983).abs() < 1e-12, "{}", p[0]);
    }

    #[test]
    fn optimizer_shape_errors() {
        let mut opt = OptimizerState::adam(0.1);
        let mut p = [0.0; 2];
        assert!(opt.step(&mut [&mut p[..]], &[&[1.0]]).is_err());
        opt.step(&mut [&mut p[..]], &[&[1.0, 1.0]]).unwrap();
        let mut q = [0.0; 3];
        assert!(opt.step(&mut [&mut q[..]], &[&[1.0, 1.0, 1.0]]).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let specs = LayerSpec::chain(6, &[8, 2], Activation::Relu);
        let a = Mlp::init(6, &specs, 3).unwrap();
        let b = Mlp::init(6, &specs, 3).unwrap();
        let c = Mlp::init(6, &specs, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn he_init_variance() {
        let specs = [LayerSpec::new(512, 512, Activation::Relu)];
        let net = Mlp::init(512, &specs, 9).unwrap();
        let w = net.layers()[0].weight.data();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
        let target = 2.0 / 512.0;
        assert!((var - target).abs() < 0.2 * target, "{var} vs {target}");
    }

    #[test]
    fn init_rejects_broken_chain() {
        let specs = [
            LayerSpec::new(3, 4, Activation::Relu),
            LayerSpec::new(5, 2, Activation::Relu),
        ];
        assert!(Mlp::init(3, &specs, 0).is_err());
        assert!(Mlp::init(0, &[], 0).is_err());
    }
}
