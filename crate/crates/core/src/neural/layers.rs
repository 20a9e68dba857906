use rand::Rng;

use super::real::{gemm, Real};
use crate::rng::SimRng;

pub(crate) const BN_EPS: f64 = 1e-5;
pub(crate) const BN_MOMENTUM: f64 = 0.1;

/// Activations of a batch laid out as `n x c x h x w`, row-major. Dense
/// activations use `h = w = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Activations<T> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Activations<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![T::zero(); n * c * h * w],
        }
    }

    pub fn per_example(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn example(&self, i: usize) -> &[T] {
        let m = self.per_example();
        &self.data[i * m..(i + 1) * m]
    }
}

/// Sum with eight independent accumulators so the loop vectorizes. The
/// association order is fixed, so results stay reproducible.
pub(crate) fn lane_sum<T: Real>(v: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = v.chunks_exact(8);
    let tail = chunks.remainder();
    for c in chunks {
        for k in 0..8 {
            acc[k] = acc[k] + c[k];
        }
    }
    let mut total = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for &t in tail {
        total = total + t;
    }
    total
}

fn lane_dot<T: Real>(a: &[T], b: &[T], shift: T) -> T {
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ta, tb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + (x[k] - shift) * (y[k] - shift);
        }
    }
    let mut total = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (&x, &y) in ta.iter().zip(tb) {
        total = total + (x - shift) * (y - shift);
    }
    total
}

fn uniform_init<T: Real>(len: usize, bound: f64, rng: &mut SimRng) -> Vec<T> {
    (0..len).map(|_| T::from_f64(rng.random_range(-bound..bound))).collect()
}

/// 3x3 convolution, stride 1, zero padding 1.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub cin: usize,
    pub cout: usize,
    /// `cout x (cin * 9)`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

fn im2col<T: Real>(x: &[T], cin: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    for c in 0..cin {
        let plane = &x[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(c * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let out = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            out[0] = T::zero();
                            out[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => out.copy_from_slice(src),
                        _ => {
                            out[..w - 1].copy_from_slice(&src[1..]);
                            out[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Real>(cols: &[T], cin: usize, h: usize, w: usize, dx: &mut [T]) {
    let hw = h * w;
    for c in 0..cin {
        let plane = &mut dx[c * hw..(c + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(c * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => dst[..w - 1].iter_mut().zip(&src[1..]).for_each(|(d, s)| *d = *d + *s),
                        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d = *d + *s),
                        _ => dst[1..].iter_mut().zip(&src[..w - 1]).for_each(|(d, s)| *d = *d + *s),
                    }
                }
            }
        }
    }
}

impl<T: Real> Conv2d<T> {
    pub fn new(cin: usize, cout: usize, rng: &mut SimRng) -> Self {
        let fan_in = (cin * 9) as f64;
        Self {
            cin,
            cout,
            weight: uniform_init(cout * cin * 9, (6.0 / fan_in).sqrt(), rng),
            bias: vec![T::zero(); cout],
        }
    }

    pub fn forward(&self, x: &Activations<T>) -> Activations<T> {
        let (h, w) = (x.h, x.w);
        let hw = h * w;
        let k = self.cin * 9;
        let mut out = Activations::zeros(x.n, self.cout, h, w);
        let mut cols = vec![T::zero(); k * hw];
        for b in 0..x.n {
            im2col(x.example(b), self.cin, h, w, &mut cols);
            let ob = &mut out.data[b * self.cout * hw..(b + 1) * self.cout * hw];
            gemm(self.cout, k, hw, &self.weight, false, &cols, false, T::zero(), ob);
            for (c, chunk) in ob.chunks_exact_mut(hw).enumerate() {
                let bias = self.bias[c];
                chunk.iter_mut().for_each(|v| *v = *v + bias);
            }
        }
        out
    }

    /// Returns the input gradient when `need_dx`, and the parameter
    /// gradients when `grads` is given.
    pub fn backward(
        &self,
        x: &Activations<T>,
        dy: &Activations<T>,
        need_dx: bool,
        grads: Option<(&mut [T], &mut [T])>,
    ) -> Option<Activations<T>> {
        let (h, w) = (x.h, x.w);
        let hw = h * w;
        let k = self.cin * 9;
        let mut cols = vec![T::zero(); k * hw];
        let mut dx = need_dx.then(|| Activations::zeros(x.n, self.cin, h, w));
        let mut grads = grads;
        for b in 0..x.n {
            let dyb = dy.example(b);
            if let Some((dw, db)) = grads.as_mut() {
                im2col(x.example(b), self.cin, h, w, &mut cols);
                gemm(self.cout, hw, k, dyb, false, &cols, true, T::one(), dw);
                for (c, chunk) in dyb.chunks_exact(hw).enumerate() {
                    db[c] = db[c] + lane_sum(chunk);
                }
            }
            if let Some(dx) = dx.as_mut() {
                gemm(k, self.cout, hw, &self.weight, true, dyb, false, T::zero(), &mut cols);
                let m = self.cin * hw;
                col2im_add(&cols, self.cin, h, w, &mut dx.data[b * m..(b + 1) * m]);
            }
        }
        dx
    }
}

/// Per-channel batch normalization over `n x h x w`.
#[derive(Clone, Debug)]
pub struct BatchNorm2d<T> {
    pub channels: usize,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct BnCache<T> {
    pub x_hat: Vec<T>,
    pub inv_std: Vec<T>,
    pub batch_mean: Vec<T>,
    pub batch_var: Vec<T>,
    pub batch_stats: bool,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn forward(&self, x: &Activations<T>, batch_stats: bool) -> (Activations<T>, BnCache<T>) {
        let c = self.channels;
        let hw = x.h * x.w;
        let count = T::from_f64((x.n * hw) as f64);
        let eps = T::from_f64(BN_EPS);
        let (mean, var) = if batch_stats {
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for b in 0..x.n {
                for (ch, plane) in x.example(b).chunks_exact(hw).enumerate() {
                    mean[ch] = mean[ch] + lane_sum(plane);
                }
            }
            mean.iter_mut().for_each(|m| *m = *m / count);
            for b in 0..x.n {
                for (ch, plane) in x.example(b).chunks_exact(hw).enumerate() {
                    let m = mean[ch];
                    var[ch] = var[ch] + lane_dot(plane, plane, m);
                }
            }
            var.iter_mut().for_each(|v| *v = *v / count);
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut y = x.clone();
        let mut x_hat = x.data.clone();
        for b in 0..x.n {
            let base = b * c * hw;
            for ch in 0..c {
                let range = base + ch * hw..base + (ch + 1) * hw;
                let (m, s, g, bt) = (mean[ch], inv_std[ch], self.gamma[ch], self.beta[ch]);
                for (xh, yv) in x_hat[range.clone()].iter_mut().zip(&mut y.data[range]) {
                    *xh = (*xh - m) * s;
                    *yv = g * *xh + bt;
                }
            }
        }
        let cache = BnCache {
            x_hat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
            batch_stats,
        };
        (y, cache)
    }

    pub fn update_running(&mut self, cache: &BnCache<T>, count: usize) {
        if !cache.batch_stats {
            return;
        }
        let m = T::from_f64(BN_MOMENTUM);
        let unbias = if count > 1 {
            T::from_f64(count as f64 / (count - 1) as f64)
        } else {
            T::one()
        };
        for ch in 0..self.channels {
            self.running_mean[ch] = (T::one() - m) * self.running_mean[ch] + m * cache.batch_mean[ch];
            self.running_var[ch] = (T::one() - m) * self.running_var[ch] + m * cache.batch_var[ch] * unbias;
        }
    }

    pub fn backward(
        &self,
        cache: &BnCache<T>,
        dy: &Activations<T>,
        need_dx: bool,
        grads: Option<(&mut [T], &mut [T])>,
    ) -> Option<Activations<T>> {
        let c = self.channels;
        let hw = dy.h * dy.w;
        let mut sum_dy = vec![T::zero(); c];
        let mut sum_dy_xhat = vec![T::zero(); c];
        for b in 0..dy.n {
            let base = b * c * hw;
            for ch in 0..c {
                let r = base + ch * hw..base + (ch + 1) * hw;
                sum_dy[ch] = sum_dy[ch] + lane_sum(&dy.data[r.clone()]);
                sum_dy_xhat[ch] = sum_dy_xhat[ch] + lane_dot(&dy.data[r.clone()], &cache.x_hat[r], T::zero());
            }
        }
        if let Some((dg, dbeta)) = grads {
            for ch in 0..c {
                dg[ch] = dg[ch] + sum_dy_xhat[ch];
                dbeta[ch] = dbeta[ch] + sum_dy[ch];
            }
        }
        if !need_dx {
            return None;
        }
        let mut dx = dy.clone();
        let count = T::from_f64((dy.n * hw) as f64);
        for b in 0..dy.n {
            let base = b * c * hw;
            for ch in 0..c {
                let r = base + ch * hw..base + (ch + 1) * hw;
                let scale = self.gamma[ch] * cache.inv_std[ch];
                if cache.batch_stats {
                    let mean_dy = sum_dy[ch] / count;
                    let mean_dy_xhat = sum_dy_xhat[ch] / count;
                    for (d, &xh) in dx.data[r.clone()].iter_mut().zip(&cache.x_hat[r]) {
                        *d = scale * (*d - mean_dy - xh * mean_dy_xhat);
                    }
                } else {
                    dx.data[r].iter_mut().for_each(|d| *d = *d * scale);
                }
            }
        }
        Some(dx)
    }
}

/// Fully connected layer, `weight` is `out x in`.
#[derive(Clone, Debug)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn new(inputs: usize, outputs: usize, gain: f64, rng: &mut SimRng) -> Self {
        let bound = gain * (3.0 / inputs as f64).sqrt();
        Self {
            inputs,
            outputs,
            weight: uniform_init(outputs * inputs, bound, rng),
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn forward(&self, x: &Activations<T>) -> Activations<T> {
        let mut y = Activations::zeros(x.n, self.outputs, 1, 1);
        gemm(x.n, self.inputs, self.outputs, &x.data, false, &self.weight, true, T::zero(), &mut y.data);
        for row in y.data.chunks_exact_mut(self.outputs) {
            row.iter_mut().zip(&self.bias).for_each(|(v, &b)| *v = *v + b);
        }
        y
    }

    pub fn backward(
        &self,
        x: &Activations<T>,
        dy: &Activations<T>,
        need_dx: bool,
        grads: Option<(&mut [T], &mut [T])>,
    ) -> Option<Activations<T>> {
        if let Some((dw, db)) = grads {
            gemm(self.outputs, x.n, self.inputs, &dy.data, true, &x.data, false, T::one(), dw);
            for row in dy.data.chunks_exact(self.outputs) {
                db.iter_mut().zip(row).for_each(|(g, &d)| *g = *g + d);
            }
        }
        need_dx.then(|| {
            let mut dx = Activations::zeros(x.n, x.c, x.h, x.w);
            gemm(x.n, self.outputs, self.inputs, &dy.data, false, &self.weight, false, T::zero(), &mut dx.data);
            dx
        })
    }
}

/// 2x2 max pooling with stride 2; odd trailing rows and columns are dropped.
pub fn maxpool_forward<T: Real>(x: &Activations<T>) -> (Activations<T>, Vec<u32>) {
    let (w, oh, ow) = (x.w, x.h / 2, x.w / 2);
    let mut y = Activations::zeros(x.n, x.c, oh, ow);
    let mut argmax = vec![0u32; y.data.len()];
    let planes = x.data.chunks_exact(x.h * w);
    let outs = y.data.chunks_exact_mut(oh * ow).zip(argmax.chunks_exact_mut(oh * ow));
    for (p, (plane, (out, arg))) in planes.zip(outs).enumerate() {
        let base = p * x.h * w;
        for i in 0..oh {
            let r0 = &plane[2 * i * w..2 * i * w + w];
            let r1 = &plane[(2 * i + 1) * w..(2 * i + 1) * w + w];
            let o = &mut out[i * ow..(i + 1) * ow];
            let a = &mut arg[i * ow..(i + 1) * ow];
            for j in 0..ow {
                let cand = [r0[2 * j], r0[2 * j + 1], r1[2 * j], r1[2 * j + 1]];
                let mut best = 0;
                for (q, &v) in cand.iter().enumerate().skip(1) {
                    if v > cand[best] {
                        best = q;
                    }
                }
                o[j] = cand[best];
                a[j] = (base + (2 * i + best / 2) * w + 2 * j + best % 2) as u32;
            }
        }
    }
    (y, argmax)
}

pub fn maxpool_backward<T: Real>(dy: &Activations<T>, argmax: &[u32], input_shape: (usize, usize)) -> Activations<T> {
    let mut dx = Activations::zeros(dy.n, dy.c, input_shape.0, input_shape.1);
    for (&d, &idx) in dy.data.iter().zip(argmax) {
        let slot = &mut dx.data[idx as usize];
        *slot = *slot + d;
    }
    dx
}
