//! Dense real and quaternion layers, split activations and weight initialization.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{assemble_blocks, sigmoid, Graph, Var};
use crate::error::{Error, Result};
use crate::quat::{Quaternion, QuaternionVector};
use crate::tensor::{Parameter, Tensor};

/// Polar initialization settings for a quaternion weight matrix.
///
/// Fans are counted in quaternion units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitConfig {
    pub fan_in: usize,
    pub fan_out: usize,
    pub seed: u64,
}

impl InitConfig {
    pub fn new(fan_in: usize, fan_out: usize, seed: u64) -> Self {
        Self { fan_in, fan_out, seed }
    }

    /// `1 / sqrt(2 · (fan_in + fan_out))`.
    pub fn sigma(&self) -> f64 {
        1.0 / (2.0 * (self.fan_in + self.fan_out) as f64).sqrt()
    }
}

/// Samples an `m × n` quaternion weight as four `[m, n]` component blocks
/// stacked into shape `[4, m, n]`.
///
/// Each weight is `φ · (cos θ + u sin θ)` with `φ ~ U[−σ, σ]`, `θ ~ U[−π, π]`
/// and `u` a uniformly random unit pure quaternion.
pub fn quaternion_init(cfg: &InitConfig, m: usize, n: usize) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sigma = cfg.sigma();
    let mut w = Tensor::zeros(&[4, m, n]);
    let block = m * n;
    for idx in 0..block {
        let q = sample_polar(&mut rng, sigma);
        let data = w.data_mut();
        data[idx] = q.r;
        data[block + idx] = q.x;
        data[2 * block + idx] = q.y;
        data[3 * block + idx] = q.z;
    }
    w
}

fn sample_polar(rng: &mut impl Rng, sigma: f64) -> Quaternion {
    let phi = rng.gen_range(-sigma..=sigma);
    let theta = rng.gen_range(-PI..=PI);
    // uniform direction on the unit sphere
    let uz: f64 = rng.gen_range(-1.0..=1.0);
    let azimuth = rng.gen_range(0.0..2.0 * PI);
    let ring = (1.0 - uz * uz).max(0.0).sqrt();
    let (ux, uy) = (ring * azimuth.cos(), ring * azimuth.sin());
    let s = phi * theta.sin();
    Quaternion::new(phi * theta.cos(), s * ux, s * uy, s * uz)
}

/// Glorot-uniform `[out, in]` matrix with limit `sqrt(6 / (in + out))`.
pub fn glorot_uniform(out_dim: usize, in_dim: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
    Tensor::from_fn(&[out_dim, in_dim], |_| rng.gen_range(-limit..=limit))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(v),
            Activation::Tanh => v.tanh(),
        }
    }
}

/// Applies a real activation independently to each of the `4N` components.
pub fn split_activation(v: &QuaternionVector, kind: Activation) -> QuaternionVector {
    v.map(|c| kind.apply(c))
}

/// Quaternion dense layer: `y_m = Σ_n W[m, n] ⊗ x_n (+ b_m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuaternionLinear {
    out_q: usize,
    in_q: usize,
    /// `[4, out_q, in_q]`: the r, x, y, z component blocks.
    pub weight: Parameter,
    /// `[4 · out_q]` in split layout.
    pub bias: Option<Parameter>,
}

/// Graph handles for a bound [`QuaternionLinear`].
#[derive(Clone, Copy, Debug)]
pub struct BoundQLinear {
    pub weight: Var,
    /// The assembled `4M × 4N` real matrix.
    pub matrix: Var,
    pub bias: Option<Var>,
}

impl QuaternionLinear {
    pub fn new(out_q: usize, in_q: usize, bias: bool, seed: u64) -> Self {
        let weight = quaternion_init(&InitConfig::new(in_q, out_q, seed), out_q, in_q);
        Self::from_weight(weight, bias).expect("init produces a [4, m, n] tensor")
    }

    pub fn zeros(out_q: usize, in_q: usize, bias: bool) -> Self {
        Self::from_weight(Tensor::zeros(&[4, out_q, in_q]), bias).expect("valid shape")
    }

    pub fn from_weight(weight: Tensor, bias: bool) -> Result<Self> {
        let (out_q, in_q) = match weight.shape() {
            [4, m, n] => (*m, *n),
            other => return Err(Error::shape(&[4, 0, 0], other)),
        };
        Ok(Self { out_q, in_q, weight: Parameter::new(weight), bias: bias.then(|| Parameter::zeros(&[4 * out_q])) })
    }

    pub fn out_q(&self) -> usize {
        self.out_q
    }

    pub fn in_q(&self) -> usize {
        self.in_q
    }

    pub fn weight_quat(&self, m: usize, n: usize) -> Quaternion {
        let block = self.out_q * self.in_q;
        let idx = m * self.in_q + n;
        let d = self.weight.value.data();
        Quaternion::new(d[idx], d[block + idx], d[2 * block + idx], d[3 * block + idx])
    }

    pub fn set_weight_quat(&mut self, m: usize, n: usize, q: Quaternion) {
        let block = self.out_q * self.in_q;
        let idx = m * self.in_q + n;
        let d = self.weight.value.data_mut();
        d[idx] = q.r;
        d[block + idx] = q.x;
        d[2 * block + idx] = q.y;
        d[3 * block + idx] = q.z;
    }

    pub fn param_count(&self) -> usize {
        quaternion_linear_params(self.out_q, self.in_q, self.bias.is_some())
    }

    /// Direct evaluation by Hamilton products.
    pub fn forward(&self, input: &QuaternionVector) -> Result<QuaternionVector> {
        if input.n_quats() != self.in_q {
            return Err(Error::shape(&[4 * self.in_q], &[input.len()]));
        }
        let xs: Vec<Quaternion> = input.iter().collect();
        let mut out = QuaternionVector::zeros(self.out_q);
        for m in 0..self.out_q {
            let mut acc = Quaternion::ZERO;
            for (n, x) in xs.iter().enumerate() {
                acc = acc + self.weight_quat(m, n) * *x;
            }
            if let Some(b) = &self.bias {
                let d = b.value.data();
                let q = self.out_q;
                acc = acc + Quaternion::new(d[m], d[q + m], d[2 * q + m], d[3 * q + m]);
            }
            out.set(m, acc);
        }
        Ok(out)
    }

    /// The `4M × 4N` real matrix acting on split-layout vectors.
    pub fn assemble_real_matrix(&self) -> Tensor {
        assemble_blocks(&self.weight.value).expect("weight is [4, m, n]")
    }

    pub fn bind(&self, g: &mut Graph) -> BoundQLinear {
        let weight = g.leaf(self.weight.value.clone());
        let matrix = g.quat_assemble(weight).expect("weight is [4, m, n]");
        let bias = self.bias.as_ref().map(|b| g.leaf(b.value.clone()));
        BoundQLinear { weight, matrix, bias }
    }

    /// Batched forward on the graph: `x` is `[B, 4N]`, result `[B, 4M]`.
    pub fn forward_graph(&self, g: &mut Graph, bound: &BoundQLinear, x: Var) -> Result<Var> {
        let y = g.matmul_t(x, bound.matrix)?;
        match bound.bias {
            Some(b) => g.add_row(y, b),
            None => Ok(y),
        }
    }

    pub fn absorb_grads(&mut self, g: &Graph, bound: &BoundQLinear) -> Result<()> {
        absorb(&mut self.weight, g, bound.weight)?;
        if let (Some(p), Some(v)) = (self.bias.as_mut(), bound.bias) {
            absorb(p, g, v)?;
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&Parameter> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }
}

/// Real dense layer `y = W x (+ b)`, `W: [out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealLinear {
    pub weight: Parameter,
    pub bias: Option<Parameter>,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLinear {
    pub weight: Var,
    pub bias: Option<Var>,
}

impl RealLinear {
    pub fn new(out_dim: usize, in_dim: usize, bias: bool, seed: u64) -> Self {
        Self::from_weight(glorot_uniform(out_dim, in_dim, seed), bias).expect("2-D weight")
    }

    pub fn zeros(out_dim: usize, in_dim: usize, bias: bool) -> Self {
        Self::from_weight(Tensor::zeros(&[out_dim, in_dim]), bias).expect("2-D weight")
    }

    pub fn from_weight(weight: Tensor, bias: bool) -> Result<Self> {
        let (out_dim, _) = weight.dims2()?;
        Ok(Self { weight: Parameter::new(weight), bias: bias.then(|| Parameter::zeros(&[out_dim])) })
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn param_count(&self) -> usize {
        real_linear_params(self.out_dim(), self.in_dim(), self.bias.is_some())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let (out_dim, in_dim) = (self.out_dim(), self.in_dim());
        if input.len() != in_dim {
            return Err(Error::shape(&[in_dim], &[input.len()]));
        }
        let w = self.weight.value.data();
        Ok((0..out_dim)
            .map(|o| {
                let dot: f64 = w[o * in_dim..(o + 1) * in_dim].iter().zip(input).map(|(a, b)| a * b).sum();
                dot + self.bias.as_ref().map_or(0.0, |b| b.value.data()[o])
            })
            .collect())
    }

    pub fn bind(&self, g: &mut Graph) -> BoundLinear {
        BoundLinear {
            weight: g.leaf(self.weight.value.clone()),
            bias: self.bias.as_ref().map(|b| g.leaf(b.value.clone())),
        }
    }

    pub fn forward_graph(&self, g: &mut Graph, bound: &BoundLinear, x: Var) -> Result<Var> {
        let y = g.matmul_t(x, bound.weight)?;
        match bound.bias {
            Some(b) => g.add_row(y, b),
            None => Ok(y),
        }
    }

    pub fn absorb_grads(&mut self, g: &Graph, bound: &BoundLinear) -> Result<()> {
        absorb(&mut self.weight, g, bound.weight)?;
        if let (Some(p), Some(v)) = (self.bias.as_mut(), bound.bias) {
            absorb(p, g, v)?;
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&Parameter> {
        std::iter::once(&self.weight).chain(self.bias.as_ref()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut()).collect()
    }
}

/// Adds the adjoint of `v` into `p.grad`, or zeros if `v` was unreached.
pub(crate) fn absorb(p: &mut Parameter, g: &Graph, v: Var) -> Result<()> {
    match g.grad(v) {
        Some(grad) => p.accumulate_grad(grad),
        None => p.accumulate_grad(&Tensor::zeros(p.shape())),
    }
}

/// Scalar parameters of a real dense layer.
pub fn real_linear_params(out_dim: usize, in_dim: usize, bias: bool) -> usize {
    out_dim * in_dim + if bias { out_dim } else { 0 }
}

/// Scalar parameters of a quaternion dense layer (counts in quaternion units).
pub fn quaternion_linear_params(out_q: usize, in_q: usize, bias: bool) -> usize {
    4 * out_q * in_q + if bias { 4 * out_q } else { 0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight_passes_input_through() {
        let mut layer = QuaternionLinear::zeros(1, 1, false);
        layer.set_weight_quat(0, 0, Quaternion::ONE);
        let x = crate::quat::pack_split(&[Quaternion::new(0.5, -1.0, 2.0, 3.5)]);
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn i_times_j_layer() {
        let mut layer = QuaternionLinear::zeros(1, 1, false);
        layer.set_weight_quat(0, 0, Quaternion::I);
        let x = crate::quat::pack_split(&[Quaternion::J]);
        assert_eq!(layer.forward(&x).unwrap().get(0), Quaternion::K);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let layer = QuaternionLinear::zeros(2, 3, true);
        assert!(matches!(layer.forward(&QuaternionVector::zeros(2)), Err(Error::Shape { .. })));
    }

    #[test]
    fn zero_weight_assembles_to_zero_matrix() {
        let layer = QuaternionLinear::zeros(2, 3, false);
        let m = layer.assemble_real_matrix();
        assert_eq!(m.shape(), &[8, 12]);
        assert_eq!(m.max_abs(), 0.0);
    }

    #[test]
    fn single_weight_assembles_to_left_mul_matrix() {
        let q = Quaternion::new(0.3, -0.2, 0.9, 1.4);
        let mut layer = QuaternionLinear::zeros(1, 1, false);
        layer.set_weight_quat(0, 0, q);
        let m = layer.assemble_real_matrix();
        let expected: Vec<f64> = q.left_mul_matrix().iter().flatten().copied().collect();
        assert_eq!(m.data(), &expected[..]);
    }

    #[test]
    fn split_activations() {
        let z = QuaternionVector::zeros(3);
        assert_eq!(split_activation(&z, Activation::Tanh), z);
        assert!(split_activation(&z, Activation::Sigmoid).components().iter().all(|&v| v == 0.5));
        let v = QuaternionVector::from_components(vec![-2.0, -0.5, 0.0, 0.1, 0.7, 3.0, -9.0, 1.0]).unwrap();
        let t = split_activation(&v, Activation::Tanh);
        for (a, b) in t.components().iter().zip(v.components()) {
            assert_eq!(*a, b.tanh());
        }
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = InitConfig::new(5, 7, 42);
        assert_eq!(quaternion_init(&cfg, 7, 5), quaternion_init(&cfg, 7, 5));
        let other = InitConfig::new(5, 7, 43);
        assert_ne!(quaternion_init(&cfg, 7, 5), quaternion_init(&other, 7, 5));
    }

    #[test]
    fn init_norms_are_bounded_and_mean_is_zero() {
        let cfg = InitConfig::new(3, 20, 7);
        let sigma = cfg.sigma();
        assert!(sigma > 0.0);
        let (m, n) = (400, 250);
        let w = quaternion_init(&cfg, m, n);
        let block = m * n;
        let d = w.data();
        for idx in 0..block {
            let q = Quaternion::new(d[idx], d[block + idx], d[2 * block + idx], d[3 * block + idx]);
            assert!(q.norm() <= sigma * (1.0 + 1e-12));
        }
        for c in 0..4 {
            let comp = &d[c * block..(c + 1) * block];
            let mean = comp.iter().sum::<f64>() / block as f64;
            let var = comp.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (block - 1) as f64;
            let stderr = (var / block as f64).sqrt();
            assert!(mean.abs() < 5.0 * stderr, "component {c}: mean {mean} stderr {stderr}");
        }
    }

    #[test]
    fn parameter_counts() {
        assert_eq!(real_linear_params(2048, 2048, false), 4_194_304);
        assert_eq!(quaternion_linear_params(512, 512, false), 1_048_576);
        assert_eq!(QuaternionLinear::zeros(3, 5, true).param_count(), 4 * 15 + 12);
        assert_eq!(RealLinear::zeros(9, 80, true).param_count(), 729);
    }
}
