//! Dense ReLU networks of fixed width.
//!
//! A network of width `w` and depth `d` is the composition
//!
//! ```text
//! f(x) = A_d ∘ relu ∘ A_{d-1} ∘ ... ∘ relu ∘ A_0 (x)
//! ```
//!
//! with `A_0: R^n -> R^w`, `A_1 .. A_{d-1}: R^w -> R^w` and `A_d: R^w -> R`.
//! Depth therefore counts hidden ReLU layers, so depth 1 is the classic
//! single-hidden-layer network and every network has `depth + 1` affine maps.
//!
//! Weights are stored row-major with shape `(out_dim, in_dim)`. The ReLU
//! derivative at exactly zero is taken as zero.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub width: usize,
    pub depth: usize,
}

impl NetworkSpec {
    pub fn new(input_dim: usize, width: usize, depth: usize) -> Result<Self> {
        let spec = NetworkSpec {
            input_dim,
            width,
            depth,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Two-input network, the only kind the experiments use.
    pub fn planar(width: usize, depth: usize) -> Result<Self> {
        Self::new(2, width, depth)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.width == 0 || self.depth == 0 {
            return Err(Error::InvalidSpec(format!(
                "input_dim, width and depth must all be >= 1 (got {}, {}, {})",
                self.input_dim, self.width, self.depth
            )));
        }
        Ok(())
    }

    /// `(out_dim, in_dim)` of affine map `index`.
    pub fn layer_shape(&self, index: usize) -> (usize, usize) {
        let in_dim = if index == 0 {
            self.input_dim
        } else {
            self.width
        };
        let out_dim = if index == self.depth { 1 } else { self.width };
        (out_dim, in_dim)
    }

    pub fn num_layers(&self) -> usize {
        self.depth + 1
    }

    pub fn num_params(&self) -> usize {
        (0..self.num_layers())
            .map(|i| {
                let (o, n) = self.layer_shape(i);
                o * n + o
            })
            .sum()
    }
}

/// One affine map: `out = weights * in + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Layer {
            in_dim,
            out_dim,
            weights: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Build from row-major weights.
    pub fn from_parts(out_dim: usize, in_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != out_dim * in_dim || bias.len() != out_dim {
            return Err(Error::ShapeMismatch(format!(
                "layer {out_dim}x{in_dim} given {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Layer {
            in_dim,
            out_dim,
            weights,
            bias,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.in_dim + col]
    }

    fn row(&self, row: usize) -> &[f64] {
        &self.weights[row * self.in_dim..(row + 1) * self.in_dim]
    }

    #[inline]
    fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (o, (w_row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.in_dim).zip(&self.bias))
        {
            *o = w_row.iter().zip(input).fold(*b, |acc, (w, x)| acc + w * x);
        }
    }

    fn same_shape(&self, other: &Layer) -> bool {
        self.in_dim == other.in_dim && self.out_dim == other.out_dim
    }
}

/// Anything laid out as a stack of layers congruent with a [`NetworkSpec`].
///
/// Scalars are visited layer by layer, weights (row-major) before biases.
pub trait LayerStack {
    fn layers(&self) -> &[Layer];
    fn layers_mut(&mut self) -> &mut [Layer];

    fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in self.layers() {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    fn for_each_value_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for l in self.layers_mut() {
            l.weights.iter_mut().for_each(&mut f);
            l.bias.iter_mut().for_each(&mut f);
        }
    }

    fn set_values(&mut self, values: &[f64]) -> Result<()> {
        let n: usize = self
            .layers()
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum();
        if n != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {n} values, got {}",
                values.len()
            )));
        }
        let mut it = values.iter();
        self.for_each_value_mut(|v| *v = *it.next().unwrap());
        Ok(())
    }

    fn num_values(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn all_finite(&self) -> bool {
        self.layers()
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    fn congruent_with(&self, other: &impl LayerStack) -> bool {
        self.layers().len() == other.layers().len()
            && self
                .layers()
                .iter()
                .zip(other.layers())
                .all(|(a, b)| a.same_shape(b))
    }
}

/// The affine maps of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParameters {
    spec: NetworkSpec,
    layers: Vec<Layer>,
}

/// Gradient of a scalar loss with respect to every network parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    layers: Vec<Layer>,
}

impl LayerStack for NetworkParameters {
    fn layers(&self) -> &[Layer] {
        &self.layers
    }
    fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }
}

impl LayerStack for GradientSet {
    fn layers(&self) -> &[Layer] {
        &self.layers
    }
    fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }
}

impl GradientSet {
    pub fn zeros_like(params: &NetworkParameters) -> Self {
        GradientSet {
            layers: params
                .layers
                .iter()
                .map(|l| Layer::zeros(l.out_dim, l.in_dim))
                .collect(),
        }
    }

    fn clear(&mut self) {
        self.for_each_value_mut(|v| *v = 0.0);
    }

    pub fn max_abs(&self) -> f64 {
        self.values().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Per-layer buffers reused across samples.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    // acts[l] is the input to affine map l for l >= 1; the network input is
    // borrowed separately.
    acts: Vec<Vec<f64>>,
    // Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
    out: [f64; 1],
    delta: Vec<f64>,
    delta_next: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(spec: &NetworkSpec) -> Self {
        Workspace {
            acts: (0..=spec.depth).map(|_| vec![0.0; spec.width]).collect(),
            pre: (0..spec.depth).map(|_| vec![0.0; spec.width]).collect(),
            out: [0.0],
            delta: vec![0.0; spec.width.max(1)],
            delta_next: vec![0.0; spec.width.max(1)],
        }
    }
}

impl NetworkParameters {
    /// He-normal weights (variance `2 / fan_in`), zero biases.
    pub fn init<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let layers = (0..spec.num_layers())
            .map(|i| {
                let (out_dim, in_dim) = spec.layer_shape(i);
                let normal = Normal::new(0.0, (2.0 / in_dim as f64).sqrt())
                    .expect("He standard deviation is finite and positive");
                let weights = (0..out_dim * in_dim).map(|_| normal.sample(rng)).collect();
                Layer {
                    in_dim,
                    out_dim,
                    weights,
                    bias: vec![0.0; out_dim],
                }
            })
            .collect();
        Ok(NetworkParameters { spec, layers })
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let layers = (0..spec.num_layers())
            .map(|i| {
                let (o, n) = spec.layer_shape(i);
                Layer::zeros(o, n)
            })
            .collect();
        Ok(NetworkParameters { spec, layers })
    }

    /// Assemble a network from explicit layers, checking every shape.
    pub fn from_layers(spec: NetworkSpec, layers: Vec<Layer>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.num_layers() {
            return Err(Error::ShapeMismatch(format!(
                "depth {} needs {} affine maps, got {}",
                spec.depth,
                spec.num_layers(),
                layers.len()
            )));
        }
        for (i, l) in layers.iter().enumerate() {
            let (o, n) = spec.layer_shape(i);
            if (l.out_dim, l.in_dim) != (o, n) {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} is {}x{}, expected {o}x{n}",
                    l.out_dim, l.in_dim
                )));
            }
        }
        Ok(NetworkParameters { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layer(&self, index: usize) -> &Layer {
        &self.layers[index]
    }

    pub fn layer_mut(&mut self, index: usize) -> &mut Layer {
        &mut self.layers[index]
    }

    #[inline]
    pub(crate) fn forward_ws(&self, point: &[f64], ws: &mut Workspace) -> f64 {
        let depth = self.spec.depth;
        for l in 0..depth {
            let (before, after) = ws.acts.split_at_mut(l + 1);
            let input: &[f64] = if l == 0 { point } else { &before[l] };
            let z = &mut ws.pre[l];
            self.layers[l].apply(input, z);
            for (a, &zi) in after[0].iter_mut().zip(z.iter()) {
                *a = zi.max(0.0);
            }
        }
        let input: &[f64] = if depth == 0 { point } else { &ws.acts[depth] };
        self.layers[depth].apply(input, &mut ws.out);
        ws.out[0]
    }

    /// Network output at one point.
    ///
    /// # Panics
    /// If `point.len()` differs from the network's input dimension.
    pub fn forward(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.spec.input_dim, "input dimension mismatch");
        let mut ws = Workspace::new(&self.spec);
        self.forward_ws(point, &mut ws)
    }

    /// Outputs for many points, reusing one set of buffers.
    pub fn predict<P: AsRef<[f64]>>(&self, points: &[P]) -> Vec<f64> {
        let mut ws = Workspace::new(&self.spec);
        points
            .iter()
            .map(|p| {
                let p = p.as_ref();
                assert_eq!(p.len(), self.spec.input_dim, "input dimension mismatch");
                self.forward_ws(p, &mut ws)
            })
            .collect()
    }

    /// Which hidden units are strictly positive at `point`, layer by layer.
    pub fn activation_pattern(&self, point: &[f64]) -> Vec<bool> {
        let mut ws = Workspace::new(&self.spec);
        self.forward_ws(point, &mut ws);
        ws.pre.iter().flatten().map(|&z| z > 0.0).collect()
    }

    /// Mean squared error over the batch.
    pub fn batch_loss<P: AsRef<[f64]>>(&self, inputs: &[P], targets: &[f64]) -> Result<f64> {
        self.check_batch(inputs, targets)?;
        let mut ws = Workspace::new(&self.spec);
        let sum: f64 = inputs
            .iter()
            .zip(targets)
            .map(|(x, t)| {
                let r = self.forward_ws(x.as_ref(), &mut ws) - t;
                r * r
            })
            .sum();
        Ok(sum / inputs.len() as f64)
    }

    /// Exact gradient of [`batch_loss`](Self::batch_loss).
    pub fn backward<P: AsRef<[f64]>>(&self, inputs: &[P], targets: &[f64]) -> Result<GradientSet> {
        self.check_batch(inputs, targets)?;
        let mut grads = GradientSet::zeros_like(self);
        let mut ws = Workspace::new(&self.spec);
        let refs: Vec<&[f64]> = inputs.iter().map(|p| p.as_ref()).collect();
        self.accumulate_gradients(&refs, targets, &mut grads, &mut ws);
        Ok(grads)
    }

    /// Overwrites `grads` with the mean-squared-error gradient of the batch and
    /// returns the batch loss. Shapes must already be validated.
    pub(crate) fn accumulate_gradients(
        &self,
        inputs: &[&[f64]],
        targets: &[f64],
        grads: &mut GradientSet,
        ws: &mut Workspace,
    ) -> f64 {
        grads.clear();
        let depth = self.spec.depth;
        let scale = 2.0 / inputs.len() as f64;
        let mut loss = 0.0;
        for (x, &t) in inputs.iter().zip(targets) {
            let residual = self.forward_ws(x, ws) - t;
            loss += residual * residual;

            ws.delta[0] = scale * residual;
            let mut delta_len = 1;
            for l in (0..=depth).rev() {
                let layer = &self.layers[l];
                let input: &[f64] = if l == 0 { x } else { &ws.acts[l] };
                let g = &mut grads.layers[l];
                for o in 0..delta_len {
                    let d = ws.delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (gw, &xi) in row.iter_mut().zip(input) {
                        *gw += d * xi;
                    }
                }
                if l > 0 {
                    let pre = &ws.pre[l - 1];
                    for (i, &z) in pre.iter().enumerate().take(layer.in_dim) {
                        ws.delta_next[i] = if z > 0.0 {
                            (0..delta_len).map(|o| layer.weight(o, i) * ws.delta[o]).sum()
                        } else {
                            0.0
                        };
                    }
                    std::mem::swap(&mut ws.delta, &mut ws.delta_next);
                    delta_len = layer.in_dim;
                }
            }
        }
        loss / inputs.len() as f64
    }

    /// Central-difference approximation of the loss gradient, one coordinate
    /// at a time.
    pub fn finite_diff_grad<P: AsRef<[f64]>>(
        &self,
        inputs: &[P],
        targets: &[f64],
        h: f64,
    ) -> Result<GradientSet> {
        if !(h > 0.0) {
            return Err(Error::InvalidConfig(format!("step h must be > 0, got {h}")));
        }
        self.check_batch(inputs, targets)?;
        let base = self.values();
        let mut probe = self.clone();
        let mut grad_values = Vec::with_capacity(base.len());
        let mut shifted = base.clone();
        for i in 0..base.len() {
            shifted[i] = base[i] + h;
            probe.set_values(&shifted)?;
            let up = probe.batch_loss(inputs, targets)?;
            shifted[i] = base[i] - h;
            probe.set_values(&shifted)?;
            let down = probe.batch_loss(inputs, targets)?;
            shifted[i] = base[i];
            grad_values.push((up - down) / (2.0 * h));
        }
        let mut grads = GradientSet::zeros_like(self);
        grads.set_values(&grad_values)?;
        Ok(grads)
    }

    fn check_batch<P: AsRef<[f64]>>(&self, inputs: &[P], targets: &[f64]) -> Result<()> {
        if inputs.len() != targets.len() {
            return Err(Error::LengthMismatch {
                inputs: inputs.len(),
                targets: targets.len(),
            });
        }
        if inputs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if let Some(p) = inputs
            .iter()
            .find(|p| p.as_ref().len() != self.spec.input_dim)
        {
            return Err(Error::ShapeMismatch(format!(
                "input of dimension {} for a network expecting {}",
                p.as_ref().len(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    /// Serialize to the `uat-net v1` text format.
    ///
    /// ```text
    /// uat-net v1
    /// spec <input_dim> <width> <depth>
    /// layer <index> <out_dim> <in_dim>
    /// w <in_dim values>          (out_dim lines, one per row)
    /// b <out_dim values>
    /// ...                        (depth + 1 layers)
    /// end
    /// ```
    ///
    /// Values are printed in shortest round-trip exponent form, so parsing the
    /// text recovers every parameter bit for bit.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let NetworkSpec {
            input_dim,
            width,
            depth,
        } = self.spec;
        writeln!(s, "uat-net v1").unwrap();
        writeln!(s, "spec {input_dim} {width} {depth}").unwrap();
        for (i, l) in self.layers.iter().enumerate() {
            writeln!(s, "layer {i} {} {}", l.out_dim, l.in_dim).unwrap();
            for r in 0..l.out_dim {
                s.push('w');
                for v in l.row(r) {
                    write!(s, " {v:e}").unwrap();
                }
                s.push('\n');
            }
            s.push('b');
            for v in &l.bias {
                write!(s, " {v:e}").unwrap();
            }
            s.push('\n');
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("unexpected end of input, expected {what}"),
            })
        };
        let parse_err = |line: usize, message: String| Error::Parse { line, message };

        let (n, header) = next("header")?;
        if header != "uat-net v1" {
            return Err(parse_err(n, format!("unsupported header `{header}`")));
        }
        let (n, spec_line) = next("spec")?;
        let dims = parse_tagged::<usize>(spec_line, "spec", n)?;
        if dims.len() != 3 {
            return Err(parse_err(n, "spec needs 3 integers".into()));
        }
        let spec = NetworkSpec::new(dims[0], dims[1], dims[2])
            .map_err(|e| parse_err(n, e.to_string()))?;

        let mut layers = Vec::with_capacity(spec.num_layers());
        for i in 0..spec.num_layers() {
            let (n, layer_line) = next("layer")?;
            let hdr = parse_tagged::<usize>(layer_line, "layer", n)?;
            let (o, k) = spec.layer_shape(i);
            if hdr != [i, o, k] {
                return Err(parse_err(n, format!("expected `layer {i} {o} {k}`")));
            }
            let mut weights = Vec::with_capacity(o * k);
            for _ in 0..o {
                let (n, row) = next("weight row")?;
                let vals = parse_tagged::<f64>(row, "w", n)?;
                if vals.len() != k {
                    return Err(parse_err(n, format!("expected {k} weights, got {}", vals.len())));
                }
                weights.extend(vals);
            }
            let (n, bias_line) = next("bias")?;
            let bias = parse_tagged::<f64>(bias_line, "b", n)?;
            if bias.len() != o {
                return Err(parse_err(n, format!("expected {o} biases, got {}", bias.len())));
            }
            layers.push(Layer {
                in_dim: k,
                out_dim: o,
                weights,
                bias,
            });
        }
        let (n, end) = next("end")?;
        if end != "end" {
            return Err(parse_err(n, format!("expected `end`, got `{end}`")));
        }
        NetworkParameters::from_layers(spec, layers)
    }
}

fn parse_tagged<T: std::str::FromStr>(line: &str, tag: &str, n: usize) -> Result<Vec<T>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(tag) {
        return Err(Error::Parse {
            line: n,
            message: format!("expected `{tag}` record"),
        });
    }
    parts
        .map(|p| {
            p.parse::<T>().map_err(|_| Error::Parse {
                line: n,
                message: format!("bad number `{p}`"),
            })
        })
        .collect()
}
