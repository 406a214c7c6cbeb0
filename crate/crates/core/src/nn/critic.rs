//! Multi-input, multi-head value network.
//!
//! Head `k` maps its own state through a tanh adapter into the shared
//! backbone width, then through the shared backbone, then a scalar linear
//! output. The flat parameter vector is laid out as
//! `[backbone | adapter_0 | head_0 | adapter_1 | head_1 | ...]`.
//! A target copy of the whole vector is kept for bootstrapping.

use super::checkpoint::Checkpoint;
use super::mlp::{Activation, MlpShape};
use super::NnError;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq)]
struct HeadLayout {
    adapter: MlpShape,
    adapter_off: usize,
    out: MlpShape,
    out_off: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub backbone: MlpShape,
    heads: Vec<HeadLayout>,
    pub params: Vec<f64>,
    pub target: Vec<f64>,
}

impl Critic {
    /// `hidden[0]` is the adapter width; later entries are backbone layers.
    pub fn new(input_dims: &[usize], hidden: &[usize], rng: &mut RngStream) -> Self {
        assert!(!input_dims.is_empty() && !hidden.is_empty());
        let width = hidden[0];
        let backbone = MlpShape::new(hidden.to_vec(), Activation::Tanh);
        let top = *hidden.last().unwrap();
        let mut offset = backbone.num_params();
        let mut heads = Vec::with_capacity(input_dims.len());
        for &dim in input_dims {
            let adapter = MlpShape::new(vec![dim, width], Activation::Tanh);
            let adapter_off = offset;
            offset += adapter.num_params();
            let out = MlpShape::new(vec![top, 1], Activation::Identity);
            let out_off = offset;
            offset += out.num_params();
            heads.push(HeadLayout {
                adapter,
                adapter_off,
                out,
                out_off,
            });
        }
        let mut params = vec![0.0; offset];
        let n_backbone = backbone.num_params();
        backbone.init(&mut params[..n_backbone], rng, 1.0);
        for h in &heads {
            let a_len = h.adapter.num_params();
            h.adapter.init(&mut params[h.adapter_off..h.adapter_off + a_len], rng, 1.0);
            let o_len = h.out.num_params();
            h.out.init(&mut params[h.out_off..h.out_off + o_len], rng, 1.0);
        }
        let target = params.clone();
        Self {
            backbone,
            heads,
            params,
            target,
        }
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn input_dim(&self, head: usize) -> Result<usize, NnError> {
        Ok(self.layout(head)?.adapter.input_dim())
    }

    fn layout(&self, head: usize) -> Result<&HeadLayout, NnError> {
        self.heads.get(head).ok_or(NnError::NoHead(head))
    }

    /// Parameter ranges `(adapter, output)` owned by `head`.
    pub fn head_ranges(&self, head: usize) -> Result<(std::ops::Range<usize>, std::ops::Range<usize>), NnError> {
        let h = self.layout(head)?;
        Ok((
            h.adapter_off..h.adapter_off + h.adapter.num_params(),
            h.out_off..h.out_off + h.out.num_params(),
        ))
    }

    pub fn backbone_range(&self) -> std::ops::Range<usize> {
        0..self.backbone.num_params()
    }

    pub fn value(&self, head: usize, state: &[f64], use_target: bool) -> Result<f64, NnError> {
        let params = if use_target { &self.target } else { &self.params };
        let h = self.layout(head)?;
        let (a_range, o_range) = self.head_ranges(head)?;
        let a = h.adapter.forward(&params[a_range], state)?;
        let b = self.backbone.forward(&params[self.backbone_range()], a.output())?;
        let o = h.out.forward(&params[o_range], b.output())?;
        Ok(o.output()[0])
    }

    /// Live value of `head` at `state`; accumulates `scale * dV/dparams`.
    pub fn value_grad(&self, head: usize, state: &[f64], scale: f64, grads: &mut [f64]) -> Result<f64, NnError> {
        self.value_grad_with(head, state, |_| scale, grads)
    }

    /// As [`Critic::value_grad`] with the scale computed from the value,
    /// using a single forward pass.
    pub fn value_grad_with(
        &self,
        head: usize,
        state: &[f64],
        scale_of: impl FnOnce(f64) -> f64,
        grads: &mut [f64],
    ) -> Result<f64, NnError> {
        if grads.len() != self.params.len() {
            return Err(NnError::Shape {
                what: "critic gradient buffer",
                expected: self.params.len(),
                got: grads.len(),
            });
        }
        let h = self.layout(head)?;
        let (a_range, o_range) = self.head_ranges(head)?;
        let bb_range = self.backbone_range();
        let a = h.adapter.forward(&self.params[a_range.clone()], state)?;
        let b = self.backbone.forward(&self.params[bb_range.clone()], a.output())?;
        let o = h.out.forward(&self.params[o_range.clone()], b.output())?;
        let value = o.output()[0];
        let scale = scale_of(value);
        if scale == 0.0 {
            return Ok(value);
        }
        let g_b = h
            .out
            .backward(&self.params[o_range.clone()], &o, &[scale], &mut grads[o_range])?;
        let g_a = self
            .backbone
            .backward(&self.params[bb_range.clone()], &b, &g_b, &mut grads[bb_range])?;
        h.adapter
            .backward(&self.params[a_range.clone()], &a, &g_a, &mut grads[a_range])?;
        Ok(value)
    }

    /// Adds per-layer tensors of the live parameters and the flat target copy.
    pub fn push_to(&self, ck: &mut Checkpoint, prefix: &str) {
        ck.push_mlp(&format!("{prefix}.backbone"), &self.backbone, &self.params[self.backbone_range()]);
        for (k, h) in self.heads.iter().enumerate() {
            let (a, o) = self.head_ranges(k).unwrap();
            ck.push_mlp(&format!("{prefix}.adapter{k}"), &h.adapter, &self.params[a]);
            ck.push_mlp(&format!("{prefix}.head{k}"), &h.out, &self.params[o]);
        }
        ck.push(format!("{prefix}.target"), vec![self.target.len()], self.target.clone());
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from_slice(&self.params);
    }

    /// Zeroes every output head, so all values become 0.
    pub fn zero_heads(&mut self) {
        for k in 0..self.heads.len() {
            let (_, o) = self.head_ranges(k).unwrap();
            self.params[o.clone()].iter_mut().for_each(|p| *p = 0.0);
            self.target[o].iter_mut().for_each(|p| *p = 0.0);
        }
    }
}
