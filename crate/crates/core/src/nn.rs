//! Layers with hand-written backward passes.
//!
//! Activations are `[channels, length]` row-major slices. Every learned
//! tensor lives in one flat parameter buffer and layers hold offsets into it,
//! so gradients, optimizer state and checkpoints are all plain vectors.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NORM_EPS: f64 = 1e-5;

/// A named tensor inside the flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Init {
    Uniform(f64),
    Const(f64),
}

/// Allocates tensors in declaration order.
#[derive(Debug, Default)]
pub(crate) struct ParamBuilder {
    pub tensors: Vec<TensorInfo>,
    inits: Vec<Init>,
    len: usize,
}

impl ParamBuilder {
    pub fn add(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        let offset = self.len;
        let info = TensorInfo {
            name,
            shape: shape.to_vec(),
            offset,
        };
        self.len += info.len();
        self.tensors.push(info);
        self.inits.push(init);
        offset
    }

    pub fn len(&self) -> usize {
        self.len
    }

    /// Draws every tensor from its initializer, rounded to `f32` so the
    /// values survive a 32-bit checkpoint unchanged.
    pub fn initialize(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; self.len];
        for (info, init) in self.tensors.iter().zip(&self.inits) {
            for v in &mut params[info.range()] {
                *v = match *init {
                    Init::Uniform(bound) => bound * (2.0 * rng.random::<f64>() - 1.0),
                    Init::Const(c) => c,
                };
            }
        }
        round_to_f32(&mut params);
        params
    }
}

pub(crate) fn round_to_f32(values: &mut [f64]) {
    for v in values {
        *v = *v as f32 as f64;
    }
}

/// Fully connected layer, weight `[out, in]`.
#[derive(Debug, Clone)]
pub(crate) struct Linear {
    pub input: usize,
    pub output: usize,
    w: usize,
    b: usize,
}

impl Linear {
    pub fn new(pb: &mut ParamBuilder, name: &str, input: usize, output: usize) -> Self {
        let bound = 1.0 / libm::sqrt(input as f64);
        let w = pb.add(format!("{name}.weight"), &[output, input], Init::Uniform(bound));
        let b = pb.add(format!("{name}.bias"), &[output], Init::Uniform(bound));
        Self { input, output, w, b }
    }

    pub fn forward(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        (0..self.output)
            .map(|o| {
                let row = &p[self.w + o * self.input..self.w + (o + 1) * self.input];
                p[self.b + o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    pub fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], g: &mut [f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.input];
        for o in 0..self.output {
            let d = dy[o];
            g[self.b + o] += d;
            let base = self.w + o * self.input;
            for i in 0..self.input {
                g[base + i] += d * x[i];
                dx[i] += d * p[base + i];
            }
        }
        dx
    }
}

/// `y_k = a^T W_k b + bias_k`, weight `[out, in_a, in_b]`.
#[derive(Debug, Clone)]
pub(crate) struct Bilinear {
    pub in_a: usize,
    pub in_b: usize,
    pub output: usize,
    w: usize,
    pub(crate) b: usize,
}

impl Bilinear {
    pub fn new(pb: &mut ParamBuilder, name: &str, in_a: usize, in_b: usize, output: usize) -> Self {
        let bound = 1.0 / libm::sqrt(in_a as f64);
        let w = pb.add(format!("{name}.weight"), &[output, in_a, in_b], Init::Uniform(bound));
        let b = pb.add(format!("{name}.bias"), &[output], Init::Uniform(bound));
        Self {
            in_a,
            in_b,
            output,
            w,
            b,
        }
    }

    pub fn forward(&self, p: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
        (0..self.output)
            .map(|k| {
                let mut acc = 0.0;
                for i in 0..self.in_a {
                    let row = self.w + (k * self.in_a + i) * self.in_b;
                    let inner: f64 = p[row..row + self.in_b].iter().zip(b).map(|(w, v)| w * v).sum();
                    acc += a[i] * inner;
                }
                acc + p[self.b + k]
            })
            .collect()
    }

    pub fn backward(
        &self,
        p: &[f64],
        a: &[f64],
        b: &[f64],
        dy: &[f64],
        g: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let mut da = vec![0.0; self.in_a];
        let mut db = vec![0.0; self.in_b];
        for k in 0..self.output {
            let d = dy[k];
            g[self.b + k] += d;
            for i in 0..self.in_a {
                let row = self.w + (k * self.in_a + i) * self.in_b;
                let mut inner = 0.0;
                for j in 0..self.in_b {
                    let w = p[row + j];
                    inner += w * b[j];
                    g[row + j] += d * a[i] * b[j];
                    db[j] += d * a[i] * w;
                }
                da[i] += d * inner;
            }
        }
        (da, db)
    }
}

/// 1D convolution with `k / 2` zero padding, weight `[out, in, k]`.
#[derive(Debug, Clone)]
pub(crate) struct Conv1d {
    cin: usize,
    cout: usize,
    k: usize,
    stride: usize,
    pad: usize,
    w: usize,
    b: usize,
}

impl Conv1d {
    pub fn new(
        pb: &mut ParamBuilder,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
    ) -> Self {
        let bound = 1.0 / libm::sqrt((cin * k) as f64);
        let w = pb.add(format!("{name}.weight"), &[cout, cin, k], Init::Uniform(bound));
        let b = pb.add(format!("{name}.bias"), &[cout], Init::Uniform(bound));
        Self {
            cin,
            cout,
            k,
            stride,
            pad: k / 2,
            w,
            b,
        }
    }

    pub fn out_len(&self, len: usize) -> usize {
        (len + 2 * self.pad - self.k) / self.stride + 1
    }

    // Output positions `i` whose tap `j` reads inside the input.
    fn valid(&self, j: usize, len: usize, out: usize) -> core::ops::Range<usize> {
        let lo = if j >= self.pad {
            0
        } else {
            (self.pad - j).div_ceil(self.stride)
        };
        let hi = if len + self.pad > j {
            ((len + self.pad - j - 1) / self.stride + 1).min(out)
        } else {
            0
        };
        lo..hi.max(lo)
    }

    pub fn forward(&self, p: &[f64], x: &[f64], len: usize) -> Vec<f64> {
        let out = self.out_len(len);
        let mut y = vec![0.0; self.cout * out];
        for o in 0..self.cout {
            let yo = &mut y[o * out..(o + 1) * out];
            yo.fill(p[self.b + o]);
            for c in 0..self.cin {
                let xc = &x[c * len..(c + 1) * len];
                for j in 0..self.k {
                    let w = p[self.w + (o * self.cin + c) * self.k + j];
                    let r = self.valid(j, len, out);
                    let start = r.start * self.stride + j - self.pad;
                    if self.stride == 1 {
                        let n = r.len();
                        for (yv, xv) in yo[r].iter_mut().zip(&xc[start..start + n]) {
                            *yv += w * xv;
                        }
                    } else {
                        let src = xc[start..].iter().step_by(self.stride);
                        for (yv, xv) in yo[r].iter_mut().zip(src) {
                            *yv += w * xv;
                        }
                    }
                }
            }
        }
        y
    }

    pub fn backward(&self, p: &[f64], x: &[f64], len: usize, dy: &[f64], g: &mut [f64]) -> Vec<f64> {
        let out = self.out_len(len);
        let mut dx = vec![0.0; self.cin * len];
        for o in 0..self.cout {
            let dyo = &dy[o * out..(o + 1) * out];
            g[self.b + o] += dyo.iter().sum::<f64>();
            for c in 0..self.cin {
                let xc = &x[c * len..(c + 1) * len];
                let dxc = &mut dx[c * len..(c + 1) * len];
                for j in 0..self.k {
                    let wi = self.w + (o * self.cin + c) * self.k + j;
                    let w = p[wi];
                    let mut gw = 0.0;
                    let r = self.valid(j, len, out);
                    let start = r.start * self.stride + j - self.pad;
                    if self.stride == 1 {
                        let n = r.len();
                        let xs = &xc[start..start + n];
                        let dxs = &mut dxc[start..start + n];
                        for ((d, xv), dxv) in dyo[r].iter().zip(xs).zip(dxs) {
                            gw += d * xv;
                            *dxv += w * d;
                        }
                    } else {
                        let xs = xc[start..].iter().step_by(self.stride);
                        let dxs = dxc[start..].iter_mut().step_by(self.stride);
                        for ((d, xv), dxv) in dyo[r].iter().zip(xs).zip(dxs) {
                            gw += d * xv;
                            *dxv += w * d;
                        }
                    }
                    g[wi] += gw;
                }
            }
        }
        dx
    }
}

/// Group normalization with per-channel affine parameters.
#[derive(Debug, Clone)]
pub(crate) struct GroupNorm {
    channels: usize,
    groups: usize,
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct NormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl GroupNorm {
    /// Uses `gcd(channels, 8)` groups.
    pub fn new(pb: &mut ParamBuilder, name: &str, channels: usize) -> Self {
        let gamma = pb.add(format!("{name}.weight"), &[channels], Init::Const(1.0));
        let beta = pb.add(format!("{name}.bias"), &[channels], Init::Const(0.0));
        Self {
            channels,
            groups: gcd(channels, 8),
            gamma,
            beta,
        }
    }

    pub fn forward(&self, p: &[f64], x: &[f64], len: usize) -> (Vec<f64>, NormCache) {
        let per = self.channels / self.groups;
        let span = per * len;
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = Vec::with_capacity(self.groups);
        for gi in 0..self.groups {
            let r = gi * span..(gi + 1) * span;
            let mean = x[r.clone()].iter().sum::<f64>() / span as f64;
            let var = x[r.clone()].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / span as f64;
            let s = 1.0 / libm::sqrt(var + NORM_EPS);
            inv_std.push(s);
            for i in r {
                xhat[i] = (x[i] - mean) * s;
            }
        }
        let mut y = vec![0.0; x.len()];
        for c in 0..self.channels {
            let (ga, be) = (p[self.gamma + c], p[self.beta + c]);
            for i in c * len..(c + 1) * len {
                y[i] = ga * xhat[i] + be;
            }
        }
        (y, NormCache { xhat, inv_std })
    }

    pub fn backward(
        &self,
        p: &[f64],
        cache: &NormCache,
        len: usize,
        dy: &[f64],
        g: &mut [f64],
    ) -> Vec<f64> {
        let mut dxhat = vec![0.0; dy.len()];
        for c in 0..self.channels {
            let ga = p[self.gamma + c];
            let (mut dg, mut db) = (0.0, 0.0);
            for i in c * len..(c + 1) * len {
                dg += dy[i] * cache.xhat[i];
                db += dy[i];
                dxhat[i] = dy[i] * ga;
            }
            g[self.gamma + c] += dg;
            g[self.beta + c] += db;
        }
        let per = self.channels / self.groups;
        let span = per * len;
        let mut dx = vec![0.0; dy.len()];
        for gi in 0..self.groups {
            let r = gi * span..(gi + 1) * span;
            let n = span as f64;
            let mean_d = dxhat[r.clone()].iter().sum::<f64>() / n;
            let mean_dx = r.clone().map(|i| dxhat[i] * cache.xhat[i]).sum::<f64>() / n;
            let s = cache.inv_std[gi];
            for i in r {
                dx[i] = s * (dxhat[i] - mean_d - cache.xhat[i] * mean_dx);
            }
        }
        dx
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

pub(crate) fn silu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v * sigmoid(*v)).collect()
}

pub(crate) fn silu_backward(x: &[f64], dy: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(dy)
        .map(|(v, d)| {
            let s = sigmoid(*v);
            d * s * (1.0 + v * (1.0 - s))
        })
        .collect()
}

pub(crate) fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

pub(crate) fn relu_backward(x: &[f64], dy: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(dy)
        .map(|(v, d)| if *v > 0.0 { *d } else { 0.0 })
        .collect()
}

/// Nearest-neighbour doubling along the length axis.
pub(crate) fn upsample(x: &[f64], channels: usize, len: usize) -> Vec<f64> {
    let mut y = vec![0.0; channels * len * 2];
    for c in 0..channels {
        for i in 0..len {
            let v = x[c * len + i];
            y[c * 2 * len + 2 * i] = v;
            y[c * 2 * len + 2 * i + 1] = v;
        }
    }
    y
}

pub(crate) fn upsample_backward(dy: &[f64], channels: usize, len: usize) -> Vec<f64> {
    let mut dx = vec![0.0; channels * len];
    for c in 0..channels {
        for i in 0..len {
            dx[c * len + i] = dy[c * 2 * len + 2 * i] + dy[c * 2 * len + 2 * i + 1];
        }
    }
    dx
}

/// Residual block: two norm/SiLU/conv stages, the projected context added
/// to the second stage's normalized activations, and a 1x1 shortcut when
/// the width changes.
#[derive(Debug, Clone)]
pub(crate) struct ResBlock {
    pub cout: usize,
    norm1: GroupNorm,
    conv1: Conv1d,
    proj: Linear,
    norm2: GroupNorm,
    conv2: Conv1d,
    shortcut: Option<Conv1d>,
}

#[derive(Debug, Clone)]
pub(crate) struct ResCache {
    x: Vec<f64>,
    n1: NormCache,
    a1: Vec<f64>,
    s1: Vec<f64>,
    n2: NormCache,
    a2: Vec<f64>,
    s2: Vec<f64>,
}

impl ResBlock {
    pub fn new(pb: &mut ParamBuilder, name: &str, cin: usize, cout: usize, ctx: usize) -> Self {
        let norm1 = GroupNorm::new(pb, &format!("{name}.norm1"), cin);
        let conv1 = Conv1d::new(pb, &format!("{name}.conv1"), cin, cout, 3, 1);
        let proj = Linear::new(pb, &format!("{name}.context"), ctx, cout);
        let norm2 = GroupNorm::new(pb, &format!("{name}.norm2"), cout);
        let conv2 = Conv1d::new(pb, &format!("{name}.conv2"), cout, cout, 3, 1);
        let shortcut = (cin != cout).then(|| Conv1d::new(pb, &format!("{name}.shortcut"), cin, cout, 1, 1));
        Self {
            cout,
            norm1,
            conv1,
            proj,
            norm2,
            conv2,
            shortcut,
        }
    }

    pub fn forward(&self, p: &[f64], x: &[f64], len: usize, ctx: &[f64]) -> (Vec<f64>, ResCache) {
        let (a1, n1) = self.norm1.forward(p, x, len);
        let s1 = silu(&a1);
        let h = self.conv1.forward(p, &s1, len);
        // The context goes in after the norm, which would otherwise cancel a
        // per-channel shift.
        let (mut a2, n2) = self.norm2.forward(p, &h, len);
        let bias = self.proj.forward(p, ctx);
        for (c, b) in bias.iter().enumerate() {
            for v in &mut a2[c * len..(c + 1) * len] {
                *v += b;
            }
        }
        let s2 = silu(&a2);
        let mut y = self.conv2.forward(p, &s2, len);
        match &self.shortcut {
            Some(sc) => {
                for (v, r) in y.iter_mut().zip(sc.forward(p, x, len)) {
                    *v += r;
                }
            }
            None => {
                for (v, r) in y.iter_mut().zip(x) {
                    *v += r;
                }
            }
        }
        let cache = ResCache {
            x: x.to_vec(),
            n1,
            a1,
            s1,
            n2,
            a2,
            s2,
        };
        (y, cache)
    }

    /// Returns the input gradient; the context gradient accumulates into `dctx`.
    pub fn backward(
        &self,
        p: &[f64],
        cache: &ResCache,
        len: usize,
        ctx: &[f64],
        dy: &[f64],
        g: &mut [f64],
        dctx: &mut [f64],
    ) -> Vec<f64> {
        let ds2 = self.conv2.backward(p, &cache.s2, len, dy, g);
        let da2 = silu_backward(&cache.a2, &ds2);
        let dbias: Vec<f64> = (0..self.cout)
            .map(|c| da2[c * len..(c + 1) * len].iter().sum())
            .collect();
        for (a, b) in dctx.iter_mut().zip(self.proj.backward(p, ctx, &dbias, g)) {
            *a += b;
        }
        let dh = self.norm2.backward(p, &cache.n2, len, &da2, g);
        let ds1 = self.conv1.backward(p, &cache.s1, len, &dh, g);
        let da1 = silu_backward(&cache.a1, &ds1);
        let mut dx = self.norm1.backward(p, &cache.n1, len, &da1, g);
        match &self.shortcut {
            Some(sc) => {
                for (a, b) in dx.iter_mut().zip(sc.backward(p, &cache.x, len, dy, g)) {
                    *a += b;
                }
            }
            None => {
                for (a, b) in dx.iter_mut().zip(dy) {
                    *a += b;
                }
            }
        }
        dx
    }
}
