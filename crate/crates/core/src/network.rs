//! Fully-connected classifiers over a flat parameter vector.
//!
//! Layer `l` maps `widths[l]` inputs to `widths[l + 1]` outputs. Its weight
//! block is stored row-major with shape `(out, in)` and is followed by the
//! `out` biases; layers are laid out back to back. Hidden layers share one
//! activation, the output layer is the identity (raw logits).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg;
use crate::math;
use crate::{Error, Result};

pub use crate::loss::grad_loss;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            // Subgradient at 0 is 0 (see `derivative`).
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + math::exp(-z)),
        }
    }

    /// Derivative expressed through the pre-activation `z` and the output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
        }
    }
}

/// Architecture of a dense classifier: `d → h_1 → … → C`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkSpec {
    layer_widths: Vec<usize>,
    activation: Activation,
}

impl NetworkSpec {
    /// Requires at least one hidden layer and all widths ≥ 1.
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_widths.len() < 3 {
            return Err(Error::UnsupportedArchitecture(format!(
                "need input, at least one hidden layer and output; got widths {layer_widths:?}"
            )));
        }
        if layer_widths.contains(&0) {
            return Err(Error::UnsupportedArchitecture(format!(
                "layer widths must be positive; got {layer_widths:?}"
            )));
        }
        Ok(Self {
            layer_widths,
            activation,
        })
    }

    pub fn layer_widths(&self) -> &[usize] {
        &self.layer_widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_widths.last().expect("validated non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn layout(&self) -> Vec<LayerLayout> {
        let mut offset = 0;
        self.layer_widths
            .windows(2)
            .map(|w| {
                let l = LayerLayout {
                    weight_offset: offset,
                    inputs: w[0],
                    outputs: w[1],
                    bias_offset: offset + w[0] * w[1],
                };
                offset = l.bias_offset + l.outputs;
                l
            })
            .collect()
    }
}

/// Position of one layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerLayout {
    pub weight_offset: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub bias_offset: usize,
}

impl LayerLayout {
    pub fn weight_range(&self) -> core::ops::Range<usize> {
        self.weight_offset..self.bias_offset
    }

    pub fn bias_range(&self) -> core::ops::Range<usize> {
        self.bias_offset..self.bias_offset + self.outputs
    }
}

/// Flat parameter vector θ together with its per-layer layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<LayerLayout>,
}

impl ParamVector {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            values: vec![0.0; spec.num_params()],
            layout: spec.layout(),
        }
    }

    pub fn from_values(spec: &NetworkSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.num_params() {
            return Err(Error::ShapeMismatch {
                what: "parameter vector",
                expected: spec.num_params(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        Ok(Self {
            values,
            layout: spec.layout(),
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &[LayerLayout] {
        &self.layout
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.values)
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.values[self.layout[layer].weight_range()]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.values[self.layout[layer].bias_range()]
    }

    /// Returns a copy with every entry multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * c).collect(),
            layout: self.layout.clone(),
        }
    }

    fn check(&self, spec: &NetworkSpec) -> Result<()> {
        if self.values.len() != spec.num_params() {
            return Err(Error::ShapeMismatch {
                what: "parameter vector",
                expected: spec.num_params(),
                got: self.values.len(),
            });
        }
        Ok(())
    }
}

/// Uniform `(-1/√fan_in, 1/√fan_in)` initialization of every weight and bias.
pub fn init_params(spec: &NetworkSpec, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = ParamVector::zeros(spec);
    for l in spec.layout() {
        let bound = 1.0 / math::sqrt(l.inputs as f64);
        for v in &mut theta.values[l.weight_offset..l.bias_offset + l.outputs] {
            *v = loop {
                let x = rng.random_range(-bound..bound);
                // The interval is open on both ends.
                if x != -bound {
                    break x;
                }
            };
        }
    }
    theta
}

/// Pre-activations and activations of every layer for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `pre[l]` is the affine output of layer `l`.
    pub pre: Vec<Vec<f64>>,
    /// `post[0]` is the input; `post[l + 1]` the activated output of layer
    /// `l`. The last entry equals the logits.
    pub post: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &[f64] {
        self.post.last().expect("trace has at least the input")
    }
}

/// Reusable buffers for forward and backward passes of one sample.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    layout: Vec<LayerLayout>,
    activation: Activation,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    /// Activation derivative of every hidden unit at the last forward pass.
    gate: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Workspace {
    pub(crate) fn new(spec: &NetworkSpec) -> Self {
        let widths = spec.layer_widths();
        Self {
            layout: spec.layout(),
            activation: spec.activation(),
            pre: widths[1..].iter().map(|&w| vec![0.0; w]).collect(),
            post: widths.iter().map(|&w| vec![0.0; w]).collect(),
            gate: widths[1..widths.len() - 1]
                .iter()
                .map(|&w| vec![0.0; w])
                .collect(),
            delta: widths[1..].iter().map(|&w| vec![0.0; w]).collect(),
        }
    }

    /// Runs the forward pass; logits are available from [`Self::logits`].
    pub(crate) fn forward(&mut self, theta: &[f64], x: &[f64]) {
        self.forward_impl(theta, x, None);
    }

    /// Forward pass with every ReLU replaced by a fixed 0/1 gate taken from
    /// `pattern` (hidden units of all layers, concatenated). Around the point
    /// where the pattern was recorded this is the network restricted to its
    /// current linear piece.
    pub(crate) fn forward_gated(&mut self, theta: &[f64], x: &[f64], pattern: &[bool]) {
        self.forward_impl(theta, x, Some(pattern));
    }

    fn forward_impl(&mut self, theta: &[f64], x: &[f64], pattern: Option<&[bool]>) {
        self.post[0].copy_from_slice(x);
        let last = self.layout.len() - 1;
        let mut unit = 0;
        for (l, lay) in self.layout.iter().enumerate() {
            let w = &theta[lay.weight_range()];
            let b = &theta[lay.bias_range()];
            let (inp, out) = self.post.split_at_mut(l + 1);
            let input = &inp[l];
            let pre = &mut self.pre[l];
            for (o, z) in pre.iter_mut().enumerate() {
                let row = &w[o * lay.inputs..(o + 1) * lay.inputs];
                *z = b[o] + linalg::dot(row, input);
            }
            let post = &mut out[0];
            if l == last {
                post.copy_from_slice(pre);
                continue;
            }
            let gate = &mut self.gate[l];
            match pattern {
                None => {
                    for ((a, g), &z) in post.iter_mut().zip(gate.iter_mut()).zip(pre.iter()) {
                        *a = self.activation.apply(z);
                        *g = self.activation.derivative(z, *a);
                    }
                }
                Some(mask) => {
                    let mask = &mask[unit..unit + lay.outputs];
                    for (((a, g), &z), &on) in post
                        .iter_mut()
                        .zip(gate.iter_mut())
                        .zip(pre.iter())
                        .zip(mask)
                    {
                        *g = if on { 1.0 } else { 0.0 };
                        *a = z * *g;
                    }
                }
            }
            unit += lay.outputs;
        }
    }

    /// Which hidden units were active in the last forward pass.
    pub(crate) fn pattern(&self) -> impl Iterator<Item = bool> + '_ {
        self.gate.iter().flatten().map(|&g| g > 0.0)
    }

    pub(crate) fn logits(&self) -> &[f64] {
        self.post.last().expect("non-empty")
    }

    /// Accumulates `scale * ∂(dlogitsᵀ f(x))/∂θ` into `grad`, using the
    /// activations left by the last [`Self::forward`] call.
    pub(crate) fn backward(
        &mut self,
        theta: &[f64],
        dlogits: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) {
        let last = self.layout.len() - 1;
        self.delta[last]
            .iter_mut()
            .zip(dlogits)
            .for_each(|(d, g)| *d = scale * g);
        for l in (0..=last).rev() {
            let lay = self.layout[l];
            let input = &self.post[l];
            {
                let delta = &self.delta[l];
                let gw = &mut grad[lay.weight_range()];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    linalg::axpy(d, input, &mut gw[o * lay.inputs..(o + 1) * lay.inputs]);
                }
                let gb = &mut grad[lay.bias_range()];
                for (g, &d) in gb.iter_mut().zip(delta) {
                    *g += d;
                }
            }
            if l == 0 {
                break;
            }
            let w = &theta[lay.weight_range()];
            let (lower, upper) = self.delta.split_at_mut(l);
            let delta = &upper[0];
            let prev = &mut lower[l - 1];
            prev.iter_mut().for_each(|p| *p = 0.0);
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                linalg::axpy(d, &w[o * lay.inputs..(o + 1) * lay.inputs], prev);
            }
            for (p, &g) in prev.iter_mut().zip(&self.gate[l - 1]) {
                *p *= g;
            }
        }
    }
}

fn check_input(spec: &NetworkSpec, theta: &ParamVector, x: &[f64]) -> Result<()> {
    theta.check(spec)?;
    if x.len() != spec.input_dim() {
        return Err(Error::ShapeMismatch {
            what: "input vector",
            expected: spec.input_dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Raw logits `f_θ(x)`.
pub fn forward(spec: &NetworkSpec, theta: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    check_input(spec, theta, x)?;
    let mut ws = Workspace::new(spec);
    ws.forward(theta.as_slice(), x);
    Ok(ws.logits().to_vec())
}

/// Forward pass that keeps every intermediate vector.
pub fn forward_trace(spec: &NetworkSpec, theta: &ParamVector, x: &[f64]) -> Result<ForwardTrace> {
    check_input(spec, theta, x)?;
    let mut ws = Workspace::new(spec);
    ws.forward(theta.as_slice(), x);
    Ok(ForwardTrace {
        pre: ws.pre,
        post: ws.post,
    })
}

/// Index of the largest logit; ties go to the smallest index.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

pub fn predict(spec: &NetworkSpec, theta: &ParamVector, x: &[f64]) -> Result<usize> {
    forward(spec, theta, x).map(|z| argmax(&z))
}

/// Layer-wise rescaling of a one-hidden-layer ReLU network: the first layer
/// is multiplied by `alpha`, the second layer's weights by `1/alpha`. By
/// positive homogeneity of ReLU the network function is unchanged.
pub fn alpha_scale(theta: &ParamVector, alpha: f64, spec: &NetworkSpec) -> Result<ParamVector> {
    if spec.num_layers() != 2 || spec.activation() != Activation::Relu {
        return Err(Error::UnsupportedArchitecture(format!(
            "alpha scaling needs exactly one ReLU hidden layer; got widths {:?} with {:?}",
            spec.layer_widths(),
            spec.activation()
        )));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "alpha must be positive and finite, got {alpha}"
        )));
    }
    theta.check(spec)?;
    let mut out = theta.clone();
    let layout = spec.layout();
    let first = layout[0];
    for v in &mut out.values[first.weight_offset..first.bias_offset + first.outputs] {
        *v *= alpha;
    }
    for v in &mut out.values[layout[1].weight_range()] {
        *v /= alpha;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(widths: &[usize], act: Activation) -> NetworkSpec {
        NetworkSpec::new(widths.to_vec(), act).unwrap()
    }

    #[test]
    fn param_count_and_layout() {
        let s = spec(&[2, 10, 3], Activation::Relu);
        assert_eq!(s.num_params(), 63);
        let lay = s.layout();
        assert_eq!(lay[0].weight_offset, 0);
        assert_eq!(lay[0].bias_offset, 20);
        assert_eq!(lay[1].weight_offset, 30);
        assert_eq!(lay[1].bias_offset, 60);
        assert_eq!(lay[1].bias_range().end, 63);
    }

    #[test]
    fn spec_validation() {
        assert!(NetworkSpec::new(vec![2, 3], Activation::Relu).is_err());
        assert!(NetworkSpec::new(vec![2, 0, 3], Activation::Relu).is_err());
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let s = spec(&[100, 4, 2], Activation::Relu);
        let a = init_params(&s, 7);
        let b = init_params(&s, 7);
        assert_eq!(a, b);
        assert_ne!(a, init_params(&s, 8));
        let first = s.layout()[0];
        for &w in &a.as_slice()[first.weight_offset..first.bias_offset + first.outputs] {
            assert!(w > -0.1 && w < 0.1);
        }
        let second = s.layout()[1];
        for &w in &a.as_slice()[second.weight_offset..] {
            assert!(w.abs() < 0.5);
        }
    }

    #[test]
    fn identity_layers_pass_input_through() {
        // 2 -> 2 (relu) -> 2 with identity weights on non-negative input.
        let s = spec(&[2, 2, 2], Activation::Relu);
        let theta = ParamVector::from_values(
            &s,
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        )
        .unwrap();
        assert_eq!(forward(&s, &theta, &[0.3, 1.5]).unwrap(), vec![0.3, 1.5]);
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_logits() {
        let s = spec(&[3, 5, 4, 2], Activation::Relu);
        let mut theta = init_params(&s, 1);
        for l in s.layout() {
            for v in &mut theta.as_mut_slice()[l.bias_range()] {
                *v = 0.0;
            }
        }
        assert_eq!(forward(&s, &theta, &[0.0; 3]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let s = spec(&[2, 3, 2], Activation::Relu);
        let theta = init_params(&s, 0);
        assert!(matches!(
            forward(&s, &theta, &[1.0]),
            Err(Error::ShapeMismatch { .. })
        ));
        let other = spec(&[2, 4, 2], Activation::Relu);
        assert!(forward(&other, &theta, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn argmax_tie_rule() {
        assert_eq!(argmax(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[2.0, 2.0, 2.0]), 0);
    }

    #[test]
    fn trace_matches_forward() {
        let s = spec(&[2, 6, 5, 3], Activation::Sigmoid);
        let theta = init_params(&s, 3);
        let x = [0.4, -1.2];
        let t = forward_trace(&s, &theta, &x).unwrap();
        assert_eq!(t.logits(), forward(&s, &theta, &x).unwrap().as_slice());
        assert_eq!(t.logits().len(), 3);
        assert_eq!(t.post[0], x.to_vec());
    }

    #[test]
    fn alpha_scale_rules() {
        let s = spec(&[2, 16, 3], Activation::Relu);
        let theta = init_params(&s, 2);
        assert_eq!(alpha_scale(&theta, 1.0, &s).unwrap(), theta);
        let scaled = alpha_scale(&theta, 2.0, &s).unwrap();
        assert!((scaled.norm() - theta.norm()).abs() > 1e-3);
        // Output bias untouched.
        assert_eq!(scaled.biases(1), theta.biases(1));
        let deep = spec(&[2, 4, 4, 3], Activation::Relu);
        assert!(alpha_scale(&init_params(&deep, 0), 2.0, &deep).is_err());
        let sig = spec(&[2, 4, 3], Activation::Sigmoid);
        assert!(alpha_scale(&init_params(&sig, 0), 2.0, &sig).is_err());
        assert!(alpha_scale(&theta, 0.0, &s).is_err());
    }
}
