//! Small convolutional Q-networks with hand-written backpropagation.
//!
//! Activations use the [`Tensor3`] layout `(channel, row, position)`. A
//! convolution slides a `kernel x 1` filter along the position (interval)
//! axis of every row independently, so rows never mix until the dense
//! layers. ReLU follows every layer except the last.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{RlError, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    /// One 1-D convolution (kernel 3, 16 channels), ReLU, dense to 3 actions.
    Eam1d,
    /// conv(3x1, 8) -> conv(3x1, 16) -> dense(64) -> dense(2), ReLU between.
    Sam4Layer,
}

impl Architecture {
    pub fn tag(self) -> &'static str {
        match self {
            Architecture::Eam1d => "eam-1d",
            Architecture::Sam4Layer => "sam-4layer",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "eam-1d" => Some(Architecture::Eam1d),
            "sam-4layer" => Some(Architecture::Sam4Layer),
            _ => None,
        }
    }

    pub fn action_count(self) -> usize {
        match self {
            Architecture::Eam1d => 3,
            Architecture::Sam4Layer => 2,
        }
    }

    /// Layer stack for an `f x m x n` input.
    pub fn layers(self, f: usize, m: usize, n: usize) -> Result<Vec<LayerSpec>, RlError> {
        let bad = |msg: String| Err(RlError::Shape(msg));
        match self {
            Architecture::Eam1d => {
                if n < 3 || f == 0 || m == 0 {
                    return bad(format!("eam-1d needs n >= 3 and f, m > 0, got {f}x{m}x{n}"));
                }
                Ok(vec![
                    LayerSpec::Conv { in_ch: f, out_ch: 16, kernel: 3, rows: m, len: n },
                    LayerSpec::Dense { inputs: 16 * m * (n - 2), outputs: 3 },
                ])
            }
            Architecture::Sam4Layer => {
                if n < 5 || f == 0 || m == 0 {
                    return bad(format!("sam-4layer needs n >= 5 and f, m > 0, got {f}x{m}x{n}"));
                }
                Ok(vec![
                    LayerSpec::Conv { in_ch: f, out_ch: 8, kernel: 3, rows: m, len: n },
                    LayerSpec::Conv { in_ch: 8, out_ch: 16, kernel: 3, rows: m, len: n - 2 },
                    LayerSpec::Dense { inputs: 16 * m * (n - 4), outputs: 64 },
                    LayerSpec::Dense { inputs: 64, outputs: 2 },
                ])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv { in_ch: usize, out_ch: usize, kernel: usize, rows: usize, len: usize },
    Dense { inputs: usize, outputs: usize },
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv { in_ch, out_ch, kernel, .. } => out_ch * in_ch * kernel + out_ch,
            LayerSpec::Dense { inputs, outputs } => outputs * inputs + outputs,
        }
    }

    pub fn input_len(&self) -> usize {
        match *self {
            LayerSpec::Conv { in_ch, rows, len, .. } => in_ch * rows * len,
            LayerSpec::Dense { inputs, .. } => inputs,
        }
    }

    pub fn output_len(&self) -> usize {
        match *self {
            LayerSpec::Conv { out_ch, kernel, rows, len, .. } => out_ch * rows * (len + 1 - kernel),
            LayerSpec::Dense { outputs, .. } => outputs,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv { in_ch, kernel, .. } => in_ch * kernel,
            LayerSpec::Dense { inputs, .. } => inputs,
        }
    }

    fn weight_count(&self) -> usize {
        match *self {
            LayerSpec::Conv { in_ch, out_ch, kernel, .. } => out_ch * in_ch * kernel,
            LayerSpec::Dense { inputs, outputs } => outputs * inputs,
        }
    }

    fn forward(&self, p: &[f64], x: &[f64], out: &mut [f64]) {
        match *self {
            LayerSpec::Conv { in_ch, out_ch, kernel, rows, len } => {
                let out_len = len + 1 - kernel;
                let (w, b) = p.split_at(out_ch * in_ch * kernel);
                for o in 0..out_ch {
                    for r in 0..rows {
                        let dst = &mut out[(o * rows + r) * out_len..][..out_len];
                        dst.fill(b[o]);
                        for c in 0..in_ch {
                            let src = &x[(c * rows + r) * len..][..len];
                            let wk = &w[(o * in_ch + c) * kernel..][..kernel];
                            for (pos, d) in dst.iter_mut().enumerate() {
                                let mut acc = 0.0;
                                for k in 0..kernel {
                                    acc += wk[k] * src[pos + k];
                                }
                                *d += acc;
                            }
                        }
                    }
                }
            }
            LayerSpec::Dense { inputs, outputs } => {
                let (w, b) = p.split_at(outputs * inputs);
                for o in 0..outputs {
                    let row = &w[o * inputs..][..inputs];
                    out[o] = b[o] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
                }
            }
        }
    }

    /// Accumulates parameter gradients into `gp` and, when `gx` is given,
    /// writes the gradient with respect to the input.
    fn backward(&self, p: &[f64], x: &[f64], gy: &[f64], gp: &mut [f64], gx: Option<&mut [f64]>) {
        match *self {
            LayerSpec::Conv { in_ch, out_ch, kernel, rows, len } => {
                let out_len = len + 1 - kernel;
                let nw = out_ch * in_ch * kernel;
                let (w, _) = p.split_at(nw);
                let (gw, gb) = gp.split_at_mut(nw);
                for o in 0..out_ch {
                    for r in 0..rows {
                        let g = &gy[(o * rows + r) * out_len..][..out_len];
                        gb[o] += g.iter().sum::<f64>();
                        for c in 0..in_ch {
                            let src = &x[(c * rows + r) * len..][..len];
                            let gwk = &mut gw[(o * in_ch + c) * kernel..][..kernel];
                            for k in 0..kernel {
                                gwk[k] += g.iter().zip(&src[k..]).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                }
                if let Some(gx) = gx {
                    gx.fill(0.0);
                    for o in 0..out_ch {
                        for r in 0..rows {
                            let g = &gy[(o * rows + r) * out_len..][..out_len];
                            for c in 0..in_ch {
                                let wk = &w[(o * in_ch + c) * kernel..][..kernel];
                                let dst = &mut gx[(c * rows + r) * len..][..len];
                                for (pos, gv) in g.iter().enumerate() {
                                    for k in 0..kernel {
                                        dst[pos + k] += wk[k] * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            LayerSpec::Dense { inputs, outputs } => {
                let nw = outputs * inputs;
                let (w, _) = p.split_at(nw);
                let (gw, gb) = gp.split_at_mut(nw);
                for o in 0..outputs {
                    gb[o] += gy[o];
                    let row = &mut gw[o * inputs..][..inputs];
                    for (gwv, xv) in row.iter_mut().zip(x) {
                        *gwv += gy[o] * xv;
                    }
                }
                if let Some(gx) = gx {
                    gx.fill(0.0);
                    for o in 0..outputs {
                        let row = &w[o * inputs..][..inputs];
                        for (g, wv) in gx.iter_mut().zip(row) {
                            *g += gy[o] * wv;
                        }
                    }
                }
            }
        }
    }
}

/// Cached activations of one forward pass: `acts[0]` is the input,
/// `acts[i + 1]` the (post-ReLU) output of layer i.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    acts: Vec<Vec<f64>>,
}

impl ForwardPass {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least one layer")
    }
}

/// Action-value network.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    arch: Architecture,
    input: (usize, usize, usize),
    layers: Vec<LayerSpec>,
    params: Vec<f64>,
    seed: u64,
}

impl QNetwork {
    /// He-uniform weights for hidden layers, `1/sqrt(fan_in)`-uniform for
    /// the output layer, zero biases.
    pub fn new(arch: Architecture, input: (usize, usize, usize), seed: u64) -> Result<Self, RlError> {
        let layers = arch.layers(input.0, input.1, input.2)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(layers.iter().map(LayerSpec::param_count).sum());
        for (i, l) in layers.iter().enumerate() {
            let fan_in = l.fan_in() as f64;
            let bound = if i + 1 == layers.len() { 1.0 / fan_in.sqrt() } else { (6.0 / fan_in).sqrt() };
            params.extend((0..l.weight_count()).map(|_| rng.random_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, l.param_count() - l.weight_count()));
        }
        Ok(Self { arch, input, layers, params, seed })
    }

    /// Rebuilds a network from stored parts, checking shapes.
    pub fn from_parts(
        arch: Architecture,
        input: (usize, usize, usize),
        layers: Vec<LayerSpec>,
        params: Vec<f64>,
        seed: u64,
    ) -> Result<Self, RlError> {
        let expected = arch.layers(input.0, input.1, input.2)?;
        if expected != layers {
            return Err(RlError::Shape(format!("layer shapes do not match {}", arch.tag())));
        }
        let count: usize = layers.iter().map(LayerSpec::param_count).sum();
        if params.len() != count {
            return Err(RlError::Shape(format!("{} parameters, expected {count}", params.len())));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(RlError::NonFinite);
        }
        Ok(Self { arch, input, layers, params, seed })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn input_dims(&self) -> (usize, usize, usize) {
        self.input
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn action_count(&self) -> usize {
        self.arch.action_count()
    }

    /// Parameter index range of each layer.
    pub fn layer_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.layers
            .iter()
            .map(|l| {
                let r = start..start + l.param_count();
                start = r.end;
                r
            })
            .collect()
    }

    /// Sets every output-layer weight to zero and its bias to `bias`, making
    /// the network output `bias` for any input.
    pub fn set_constant_output(&mut self, bias: &[f64]) -> Result<(), RlError> {
        let ranges = self.layer_ranges();
        let last = self.layers.last().expect("non-empty");
        if bias.len() != last.output_len() {
            return Err(RlError::Shape(format!("{} biases for {} outputs", bias.len(), last.output_len())));
        }
        let r = ranges.last().expect("non-empty").clone();
        let slice = &mut self.params[r];
        let nw = last.weight_count();
        slice[..nw].fill(0.0);
        slice[nw..].copy_from_slice(bias);
        Ok(())
    }

    fn check_input(&self, state: &Tensor3) -> Result<(), RlError> {
        if state.dims() != self.input {
            return Err(RlError::Shape(format!("state {:?}, network expects {:?}", state.dims(), self.input)));
        }
        Ok(())
    }

    pub fn forward(&self, state: &Tensor3) -> Result<ForwardPass, RlError> {
        self.check_input(state)?;
        let ranges = self.layer_ranges();
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(state.data().to_vec());
        for (i, (l, r)) in self.layers.iter().zip(ranges).enumerate() {
            let mut out = vec![0.0; l.output_len()];
            l.forward(&self.params[r], &acts[i], &mut out);
            if i + 1 < self.layers.len() {
                for v in &mut out {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            acts.push(out);
        }
        Ok(ForwardPass { acts })
    }

    pub fn q_values(&self, state: &Tensor3) -> Result<Vec<f64>, RlError> {
        Ok(self.forward(state)?.output().to_vec())
    }

    /// Accumulates `d(sum_a g_out[a] * Q_a) / d(params)` into `grad`.
    pub fn backward(&self, pass: &ForwardPass, g_out: &[f64], grad: &mut [f64]) {
        let ranges = self.layer_ranges();
        let mut g = g_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            if i + 1 < self.layers.len() {
                for (gv, a) in g.iter_mut().zip(&pass.acts[i + 1]) {
                    if *a <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let r = ranges[i].clone();
            if i == 0 {
                l.backward(&self.params[r.clone()], &pass.acts[i], &g, &mut grad[r], None);
            } else {
                let mut gx = vec![0.0; l.input_len()];
                l.backward(&self.params[r.clone()], &pass.acts[i], &g, &mut grad[r], Some(&mut gx));
                g = gx;
            }
        }
    }

    pub fn same_shape(&self, other: &QNetwork) -> bool {
        self.arch == other.arch && self.input == other.input && self.layers == other.layers
    }
}
