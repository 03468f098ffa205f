//! Flat parameter storage and the two tanh MLPs (policy trunk with heads,
//! separate value network) with hand-written backward passes.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Sizes that determine the parameter layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    pub obs_dim: usize,
    pub hidden: usize,
    pub num_primitives: usize,
    pub arg_dim: usize,
}

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    w: usize,
    b: usize,
    inp: usize,
    out: usize,
}

impl Dense {
    fn forward(&self, p: &[f64], x: &[f64], y: &mut [f64]) {
        let w = &p[self.w..self.w + self.inp * self.out];
        let b = &p[self.b..self.b + self.out];
        for (i, yi) in y.iter_mut().enumerate().take(self.out) {
            let row = &w[i * self.inp..(i + 1) * self.inp];
            *yi = b[i] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Accumulate parameter gradients for `dy`; write the input gradient to
    /// `dx` when requested.
    fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], g: &mut [f64], dx: Option<&mut [f64]>) {
        {
            let gw = &mut g[self.w..self.w + self.inp * self.out];
            for (i, &d) in dy.iter().enumerate().take(self.out) {
                if d == 0.0 {
                    continue;
                }
                let row = &mut gw[i * self.inp..(i + 1) * self.inp];
                for (r, xj) in row.iter_mut().zip(x) {
                    *r += d * xj;
                }
            }
        }
        for (gb, d) in g[self.b..self.b + self.out].iter_mut().zip(dy) {
            *gb += d;
        }
        if let Some(dx) = dx {
            let w = &p[self.w..self.w + self.inp * self.out];
            dx.iter_mut().for_each(|v| *v = 0.0);
            for (i, &d) in dy.iter().enumerate().take(self.out) {
                if d == 0.0 {
                    continue;
                }
                let row = &w[i * self.inp..(i + 1) * self.inp];
                for (v, wij) in dx.iter_mut().zip(row) {
                    *v += d * wij;
                }
            }
        }
    }
}

/// One named block of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSegment {
    pub name: &'static str,
    pub range: Range<usize>,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    trunk0: Dense,
    trunk1: Dense,
    logits: Dense,
    mean: Dense,
    log_std: usize,
    value0: Dense,
    value1: Dense,
    value2: Dense,
    len: usize,
}

impl Layout {
    fn new(s: NetShape) -> Self {
        let mut at = 0;
        let mut dense = |inp: usize, out: usize| {
            let d = Dense {
                w: at,
                b: at + inp * out,
                inp,
                out,
            };
            at += inp * out + out;
            d
        };
        let trunk0 = dense(s.obs_dim, s.hidden);
        let trunk1 = dense(s.hidden, s.hidden);
        let logits = dense(s.hidden, s.num_primitives);
        let mean = dense(s.hidden, s.arg_dim);
        let log_std = at;
        at += s.arg_dim;
        let mut dense = |inp: usize, out: usize| {
            let d = Dense {
                w: at,
                b: at + inp * out,
                inp,
                out,
            };
            at += inp * out + out;
            d
        };
        let value0 = dense(s.obs_dim, s.hidden);
        let value1 = dense(s.hidden, s.hidden);
        let value2 = dense(s.hidden, 1);
        Self {
            trunk0,
            trunk1,
            logits,
            mean,
            log_std,
            value0,
            value1,
            value2,
            len: at,
        }
    }
}

/// Policy and value network weights plus the state-independent argument
/// log-scales, stored contiguously in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    shape: NetShape,
    layout: Layout,
    data: Vec<f64>,
}

/// Intermediate values of one forward pass, reused across samples.
#[derive(Debug, Clone)]
pub struct Activations {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub logits: Vec<f64>,
    pub mean: Vec<f64>,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub value: f64,
    dh1: Vec<f64>,
    dh2: Vec<f64>,
    tmp: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(shape: NetShape) -> Self {
        let layout = Layout::new(shape);
        Self {
            shape,
            layout,
            data: vec![0.0; layout.len],
        }
    }

    /// Gaussian fan-in initialization. Output heads start near zero so the
    /// initial primitive distribution is close to uniform.
    pub fn init<R: Rng + ?Sized>(shape: NetShape, rng: &mut R) -> Self {
        let mut p = Self::zeros(shape);
        let l = p.layout;
        let gains = [
            (l.trunk0, 1.0),
            (l.trunk1, 1.0),
            (l.logits, 0.01),
            (l.mean, 0.01),
            (l.value0, 1.0),
            (l.value1, 1.0),
            (l.value2, 1.0),
        ];
        for (d, gain) in gains {
            let std = gain / libm::sqrt(d.inp as f64);
            for w in &mut p.data[d.w..d.w + d.inp * d.out] {
                let z: f64 = StandardNormal.sample(rng);
                *w = z * std;
            }
        }
        p
    }

    pub fn from_raw(shape: NetShape, data: Vec<f64>) -> Option<Self> {
        let layout = Layout::new(shape);
        (data.len() == layout.len).then_some(Self { shape, layout, data })
    }

    pub fn shape(&self) -> NetShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn log_std(&self) -> &[f64] {
        &self.data[self.layout.log_std..self.layout.log_std + self.shape.arg_dim]
    }

    pub fn log_std_range(&self) -> Range<usize> {
        self.layout.log_std..self.layout.log_std + self.shape.arg_dim
    }

    pub fn clamp_log_std(&mut self) {
        let r = self.log_std_range();
        for v in &mut self.data[r] {
            *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Named blocks in declaration order.
    pub fn segments(&self) -> Vec<ParamSegment> {
        let l = &self.layout;
        let mut out = Vec::with_capacity(15);
        let mut push_dense = |w: &'static str, b: &'static str, d: Dense| {
            out.push(ParamSegment {
                name: w,
                range: d.w..d.w + d.inp * d.out,
                rows: d.out,
                cols: d.inp,
            });
            out.push(ParamSegment {
                name: b,
                range: d.b..d.b + d.out,
                rows: d.out,
                cols: 1,
            });
        };
        push_dense("trunk.0.weight", "trunk.0.bias", l.trunk0);
        push_dense("trunk.1.weight", "trunk.1.bias", l.trunk1);
        push_dense("logits.weight", "logits.bias", l.logits);
        push_dense("mean.weight", "mean.bias", l.mean);
        out.insert(
            8,
            ParamSegment {
                name: "log_std",
                range: self.log_std_range(),
                rows: self.shape.arg_dim,
                cols: 1,
            },
        );
        let mut tail = Vec::with_capacity(6);
        for (w, b, d) in [
            ("value.0.weight", "value.0.bias", l.value0),
            ("value.1.weight", "value.1.bias", l.value1),
            ("value.2.weight", "value.2.bias", l.value2),
        ] {
            tail.push(ParamSegment {
                name: w,
                range: d.w..d.w + d.inp * d.out,
                rows: d.out,
                cols: d.inp,
            });
            tail.push(ParamSegment {
                name: b,
                range: d.b..d.b + d.out,
                rows: d.out,
                cols: 1,
            });
        }
        out.extend(tail);
        out
    }

    pub fn activations(&self) -> Activations {
        let s = self.shape;
        Activations {
            h1: vec![0.0; s.hidden],
            h2: vec![0.0; s.hidden],
            logits: vec![0.0; s.num_primitives],
            mean: vec![0.0; s.arg_dim],
            g1: vec![0.0; s.hidden],
            g2: vec![0.0; s.hidden],
            value: 0.0,
            dh1: vec![0.0; s.hidden],
            dh2: vec![0.0; s.hidden],
            tmp: vec![0.0; s.hidden],
        }
    }

    /// Policy trunk and heads: fills `h1`, `h2`, `logits` and `mean`.
    pub fn forward_policy(&self, obs: &[f64], act: &mut Activations) {
        let (p, l) = (&self.data[..], &self.layout);
        l.trunk0.forward(p, obs, &mut act.h1);
        act.h1.iter_mut().for_each(|v| *v = libm::tanh(*v));
        l.trunk1.forward(p, &act.h1, &mut act.h2);
        act.h2.iter_mut().for_each(|v| *v = libm::tanh(*v));
        l.logits.forward(p, &act.h2, &mut act.logits);
        l.mean.forward(p, &act.h2, &mut act.mean);
    }

    /// Value network: fills `g1`, `g2` and `value`.
    pub fn forward_value(&self, obs: &[f64], act: &mut Activations) -> f64 {
        let (p, l) = (&self.data[..], &self.layout);
        l.value0.forward(p, obs, &mut act.g1);
        act.g1.iter_mut().for_each(|v| *v = libm::tanh(*v));
        l.value1.forward(p, &act.g1, &mut act.g2);
        act.g2.iter_mut().for_each(|v| *v = libm::tanh(*v));
        let mut out = [0.0];
        l.value2.forward(p, &act.g2, &mut out);
        act.value = out[0];
        out[0]
    }

    /// Back-propagate output gradients of one sample into `grad`.
    /// `act` must hold the forward pass of the same `obs`. Gradients for the
    /// log-scales are added by the caller directly.
    pub fn backward(
        &self,
        obs: &[f64],
        act: &mut Activations,
        d_logits: &[f64],
        d_mean: &[f64],
        d_value: f64,
        grad: &mut [f64],
    ) {
        let (p, l) = (&self.data[..], self.layout);

        // policy heads -> trunk
        l.logits.backward(p, &act.h2, d_logits, grad, Some(&mut act.dh2));
        l.mean.backward(p, &act.h2, d_mean, grad, Some(&mut act.tmp));
        for ((d, t), h) in act.dh2.iter_mut().zip(&act.tmp).zip(&act.h2) {
            *d = (*d + t) * (1.0 - h * h);
        }
        l.trunk1.backward(p, &act.h1, &act.dh2, grad, Some(&mut act.dh1));
        for (d, h) in act.dh1.iter_mut().zip(&act.h1) {
            *d *= 1.0 - h * h;
        }
        l.trunk0.backward(p, obs, &act.dh1, grad, None);

        // value network
        if d_value != 0.0 {
            l.value2.backward(p, &act.g2, &[d_value], grad, Some(&mut act.dh2));
            for (d, g) in act.dh2.iter_mut().zip(&act.g2) {
                *d *= 1.0 - g * g;
            }
            l.value1.backward(p, &act.g1, &act.dh2, grad, Some(&mut act.dh1));
            for (d, g) in act.dh1.iter_mut().zip(&act.g1) {
                *d *= 1.0 - g * g;
            }
            l.value0.backward(p, obs, &act.dh1, grad, None);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_tile_the_vector() {
        let p = PolicyParams::zeros(NetShape {
            obs_dim: 8,
            hidden: 16,
            num_primitives: 11,
            arg_dim: 17,
        });
        let segs = p.segments();
        assert_eq!(segs.len(), 15);
        let mut at = 0;
        for s in &segs {
            assert_eq!(s.range.start, at, "{}", s.name);
            assert_eq!(s.range.len(), s.rows * s.cols);
            at = s.range.end;
        }
        assert_eq!(at, p.len());
        assert_eq!(segs[8].name, "log_std");
    }
}
