//! Multilayer perceptrons over flat parameter vectors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, GroupId, NodeId};
use crate::nn::tensor::Tensor;

/// Per-unit nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => crate::nn::graph::sigmoid(x),
            Activation::Identity => x,
        }
    }

    fn apply_on(self, g: &mut Graph, x: NodeId) -> NodeId {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Tanh => g.tanh(x),
            Activation::Sigmoid => g.sigmoid(x),
            Activation::Identity => x,
        }
    }
}

/// One named contiguous span of a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSegment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
    pub shape: Vec<usize>,
}

/// Maps segments (layer weights and biases) onto a flat value array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub segments: Vec<ParamSegment>,
}

impl ParamLayout {
    pub fn total_len(&self) -> usize {
        self.segments.iter().map(|s| s.len).sum()
    }

    /// Segments must tile `[0, total)` exactly, in order, with no overlap,
    /// and each segment's shape must account for its length.
    pub fn validate(&self) -> Result<()> {
        let mut cursor = 0;
        for s in &self.segments {
            if s.offset != cursor {
                return Err(Error::Contract(format!(
                    "segment {} starts at {} but previous coverage ends at {}",
                    s.name, s.offset, cursor
                )));
            }
            let shape_len: usize = s.shape.iter().product();
            if shape_len != s.len {
                return Err(Error::Contract(format!(
                    "segment {} shape {:?} does not match len {}",
                    s.name, s.shape, s.len
                )));
            }
            cursor += s.len;
        }
        Ok(())
    }
}

/// Flattened trainable parameters plus the layout describing them.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: ParamLayout,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: ParamLayout) -> Result<ParamVector> {
        layout.validate()?;
        if layout.total_len() != values.len() {
            return Err(Error::Contract(format!(
                "layout covers {} values but {} supplied",
                layout.total_len(),
                values.len()
            )));
        }
        Ok(ParamVector { values, layout })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        let s = self.layout.segments.iter().find(|s| s.name == name)?;
        Some(&self.values[s.offset..s.offset + s.len])
    }

    /// A gradient-shaped vector (same layout, given flat values).
    pub fn with_values(&self, values: Vec<f64>) -> Result<ParamVector> {
        ParamVector::new(values, self.layout.clone())
    }

    /// Euclidean distance to another vector of the same length.
    pub fn distance(&self, other: &ParamVector) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::Contract(format!(
                "parameter length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }
}

/// Frozen copy of a parameter vector. Immutable after creation.
#[derive(Debug, Clone)]
pub struct NetSnapshot {
    params: ParamVector,
}

impl NetSnapshot {
    pub fn params(&self) -> &ParamVector {
        &self.params
    }
}

/// Value-copies the parameters at call time; later mutation of the source
/// does not touch the snapshot.
pub fn snapshot(params: &ParamVector) -> NetSnapshot {
    NetSnapshot { params: params.clone() }
}

/// Dense feed-forward network. Weights are stored row-major `[n_in, n_out]`
/// per layer, followed by the bias, so the parameter count is
/// `sum((n_in + 1) * n_out)` over layers.
#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    hidden: Activation,
    output: Activation,
    params: ParamVector,
}

fn mlp_layout(sizes: &[usize]) -> ParamLayout {
    let mut segments = Vec::new();
    let mut offset = 0;
    for l in 0..sizes.len() - 1 {
        let (n_in, n_out) = (sizes[l], sizes[l + 1]);
        segments.push(ParamSegment {
            name: format!("l{}.w", l),
            offset,
            len: n_in * n_out,
            shape: vec![n_in, n_out],
        });
        offset += n_in * n_out;
        segments.push(ParamSegment { name: format!("l{}.b", l), offset, len: n_out, shape: vec![n_out] });
        offset += n_out;
    }
    ParamLayout { segments }
}

impl Mlp {
    /// Random init: weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn new<R: Rng>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Mlp {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let layout = mlp_layout(sizes);
        let mut values = vec![0.0; layout.total_len()];
        for l in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let bound = 1.0 / (n_in as f64).sqrt();
            let seg = layout.segments.iter().find(|s| s.name == format!("l{}.w", l)).unwrap();
            for v in &mut values[seg.offset..seg.offset + n_in * n_out] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        Mlp { sizes: sizes.to_vec(), hidden, output, params: ParamVector::new(values, layout).unwrap() }
    }

    /// All-zero parameters; the output is then the output activation at 0.
    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Mlp {
        let layout = mlp_layout(sizes);
        let values = vec![0.0; layout.total_len()];
        Mlp { sizes: sizes.to_vec(), hidden, output, params: ParamVector::new(values, layout).unwrap() }
    }

    pub fn with_params(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        params: ParamVector,
    ) -> Result<Mlp> {
        let expect = mlp_layout(sizes);
        if params.layout() != &expect {
            return Err(Error::Contract(format!(
                "parameter layout does not match sizes {:?}",
                sizes
            )));
        }
        Ok(Mlp { sizes: sizes.to_vec(), hidden, output, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn in_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &ParamVector) -> Result<()> {
        if params.layout() != self.params.layout() {
            return Err(Error::Contract("parameter layout mismatch in set_params".into()));
        }
        self.params = params.clone();
        Ok(())
    }

    /// Plain evaluation without a tape. Accepts `[d_in]` or `[n, d_in]`;
    /// the output keeps the input's rank.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (n, d) = input.as_matrix()?;
        if d != self.in_dim() {
            return Err(Error::Dimension(format!(
                "input width {} does not match first layer size {}",
                d,
                self.in_dim()
            )));
        }
        let mut cur: Vec<f64> = input.data().to_vec();
        let mut cur_d = d;
        for l in 0..self.sizes.len() - 1 {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = self.params.segment(&format!("l{}.w", l)).unwrap();
            let b = self.params.segment(&format!("l{}.b", l)).unwrap();
            let act = if l + 2 == self.sizes.len() { self.output } else { self.hidden };
            // accumulation order (products first, bias after) matches the
            // graph's matmul + add_row exactly, so on-tape and plain
            // forwards agree bit for bit
            let mut next = vec![0.0; n * n_out];
            for r in 0..n {
                let xrow = &cur[r * n_in..(r + 1) * n_in];
                let orow = &mut next[r * n_out..(r + 1) * n_out];
                for (p, &x) in xrow.iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    let wrow = &w[p * n_out..(p + 1) * n_out];
                    for c in 0..n_out {
                        orow[c] += x * wrow[c];
                    }
                }
                for (c, v) in orow.iter_mut().enumerate() {
                    *v = act.apply(*v + b[c]);
                }
            }
            cur = next;
            cur_d = n_out;
        }
        if input.shape().len() == 1 {
            Ok(Tensor::from_vec(cur))
        } else {
            Ok(Tensor::new(vec![n, cur_d], cur))
        }
    }

    /// Binds the network's parameters onto a graph. `trainable` parameters
    /// join a gradient group; frozen ones enter as constants so the loss
    /// carries exactly zero gradient for them.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundMlp {
        let group = trainable.then(|| g.group(self.params.len()));
        let mut layers = Vec::new();
        for l in 0..self.sizes.len() - 1 {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let wseg = self
                .params
                .layout()
                .segments
                .iter()
                .find(|s| s.name == format!("l{}.w", l))
                .unwrap()
                .clone();
            let bseg = self
                .params
                .layout()
                .segments
                .iter()
                .find(|s| s.name == format!("l{}.b", l))
                .unwrap()
                .clone();
            let wt = Tensor::new(vec![n_in, n_out], self.params.values()[wseg.offset..wseg.offset + wseg.len].to_vec());
            let bt = Tensor::from_vec(self.params.values()[bseg.offset..bseg.offset + bseg.len].to_vec());
            let (w, b) = match group {
                Some(gid) => (g.param(gid, wseg.offset, wt), g.param(gid, bseg.offset, bt)),
                None => (g.input(wt), g.input(bt)),
            };
            layers.push((w, b));
        }
        BoundMlp { group, layers, hidden: self.hidden, output: self.output }
    }

    /// Gradient for this net out of a backward pass, shaped like its params.
    /// Zeros when the net was bound frozen.
    pub fn grad_from(&self, bound: &BoundMlp, grads: &crate::nn::graph::Gradients) -> ParamVector {
        let values = match bound.group {
            Some(gid) => grads.group(gid).to_vec(),
            None => vec![0.0; self.params.len()],
        };
        self.params.with_values(values).unwrap()
    }
}

/// A network's parameters as graph leaves, ready for on-tape forwards.
pub struct BoundMlp {
    group: Option<GroupId>,
    layers: Vec<(NodeId, NodeId)>,
    hidden: Activation,
    output: Activation,
}

impl BoundMlp {
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let mut cur = x;
        let last = self.layers.len() - 1;
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            let z = g.matmul(cur, w);
            let z = g.add_row(z, b);
            let act = if l == last { self.output } else { self.hidden };
            cur = act.apply_on(g, z);
        }
        cur
    }

    pub fn group(&self) -> Option<GroupId> {
        self.group
    }
}
