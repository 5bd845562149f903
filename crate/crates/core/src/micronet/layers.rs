//! Dense kernels for the extractor: same-padded convolution, ReLU, 2x2 max
//! pooling and block average pooling. Tensors are `c x h x w`, row-major.

use super::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<F> {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> Tensor3<F> {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![F::zero(); c * h * w],
        }
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[F] {
        let n = self.h * self.w;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize) -> &mut [F] {
        let n = self.h * self.w;
        &mut self.data[c * n..(c + 1) * n]
    }
}

/// Offsets and valid output ranges for a kernel tap `(ky, kx)` with padding `pad`.
#[inline]
fn tap_ranges(ky: usize, kx: usize, pad: usize, h: usize, w: usize) -> (isize, isize, usize, usize, usize, usize) {
    let dy = ky as isize - pad as isize;
    let dx = kx as isize - pad as isize;
    let y0 = (-dy).max(0) as usize;
    let y1 = (h as isize - dy).min(h as isize).max(0) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
    (dy, dx, y0, y1, x0, x1)
}

/// `out[o] = b[o] + sum_i w[o,i] * in[i]` with zero "same" padding.
pub fn conv_forward<F: Scalar>(
    input: &Tensor3<F>,
    weight: &[F],
    bias: &[F],
    out_c: usize,
    k: usize,
) -> Tensor3<F> {
    let (h, w, in_c) = (input.h, input.w, input.c);
    let pad = k / 2;
    let mut out = Tensor3::zeros(out_c, h, w);
    for o in 0..out_c {
        let dst = out.plane_mut(o);
        dst.iter_mut().for_each(|v| *v = bias[o]);
        for i in 0..in_c {
            let src = input.plane(i);
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weight[((o * in_c + i) * k + ky) * k + kx];
                    let (dy, dx, y0, y1, x0, x1) = tap_ranges(ky, kx, pad, h, w);
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let s = &src[sy * w + (x0 as isize + dx) as usize..sy * w + (x1 as isize + dx) as usize];
                        let d = &mut dst[y * w + x0..y * w + x1];
                        for (dv, sv) in d.iter_mut().zip(s) {
                            *dv = *dv + wv * *sv;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients; returns the input gradient when asked.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<F: Scalar>(
    input: &Tensor3<F>,
    weight: &[F],
    d_out: &Tensor3<F>,
    k: usize,
    grad_w: &mut [F],
    grad_b: &mut [F],
    want_input_grad: bool,
) -> Option<Tensor3<F>> {
    let (h, w, in_c, out_c) = (input.h, input.w, input.c, d_out.c);
    let pad = k / 2;
    let mut d_in = want_input_grad.then(|| Tensor3::zeros(in_c, h, w));
    for o in 0..out_c {
        let g = d_out.plane(o);
        grad_b[o] = grad_b[o] + g.iter().fold(F::zero(), |a, v| a + *v);
        for i in 0..in_c {
            let src = input.plane(i);
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((o * in_c + i) * k + ky) * k + kx;
                    let (dy, dx, y0, y1, x0, x1) = tap_ranges(ky, kx, pad, h, w);
                    let mut acc = F::zero();
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let s = &src[sy * w + (x0 as isize + dx) as usize..sy * w + (x1 as isize + dx) as usize];
                        let gr = &g[y * w + x0..y * w + x1];
                        for (a, b) in gr.iter().zip(s) {
                            acc = acc + *a * *b;
                        }
                    }
                    grad_w[widx] = grad_w[widx] + acc;

                    if let Some(d_in) = d_in.as_mut() {
                        let wv = weight[widx];
                        let dst = d_in.plane_mut(i);
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            let d = &mut dst[sy * w + (x0 as isize + dx) as usize..sy * w + (x1 as isize + dx) as usize];
                            let gr = &g[y * w + x0..y * w + x1];
                            for (dv, gv) in d.iter_mut().zip(gr) {
                                *dv = *dv + wv * *gv;
                            }
                        }
                    }
                }
            }
        }
    }
    d_in
}

pub fn relu_inplace<F: Scalar>(t: &mut Tensor3<F>) {
    for v in &mut t.data {
        if !(*v > F::zero()) {
            *v = F::zero();
        }
    }
}

/// Masks `grad` in place where the activation was clipped.
pub fn relu_backward<F: Scalar>(activated: &Tensor3<F>, grad: &mut Tensor3<F>) {
    for (g, a) in grad.data.iter_mut().zip(&activated.data) {
        if !(*a > F::zero()) {
            *g = F::zero();
        }
    }
}

/// 2x2 stride-2 max pooling; returns the pooled tensor and the flat in-plane
/// index of each winner (first maximum wins ties).
pub fn maxpool2_forward<F: Scalar>(input: &Tensor3<F>) -> (Tensor3<F>, Vec<u32>) {
    let (oh, ow) = (input.h / 2, input.w / 2);
    let mut out = Tensor3::zeros(input.c, oh, ow);
    let mut arg = vec![0u32; input.c * oh * ow];
    for c in 0..input.c {
        let src = input.plane(c);
        for y in 0..oh {
            for x in 0..ow {
                let mut best = (2 * y) * input.w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = (2 * y + dy) * input.w + 2 * x + dx;
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                let o = (c * oh + y) * ow + x;
                out.data[o] = src[best];
                arg[o] = best as u32;
            }
        }
    }
    (out, arg)
}

pub fn maxpool2_backward<F: Scalar>(d_out: &Tensor3<F>, arg: &[u32], in_h: usize, in_w: usize) -> Tensor3<F> {
    let mut d_in = Tensor3::zeros(d_out.c, in_h, in_w);
    let n = d_out.h * d_out.w;
    for c in 0..d_out.c {
        let g = d_out.plane(c);
        let a = &arg[c * n..(c + 1) * n];
        let dst = d_in.plane_mut(c);
        for (gv, &idx) in g.iter().zip(a) {
            dst[idx as usize] = dst[idx as usize] + *gv;
        }
    }
    d_in
}

/// Averages each of `grid x grid` equal blocks per channel; output is flat `c * grid * grid`.
pub fn block_avg_forward<F: Scalar>(input: &Tensor3<F>, grid: usize) -> Vec<F> {
    let (bh, bw) = (input.h / grid, input.w / grid);
    let scale = F::one() / F::from(bh * bw).expect("block size");
    let mut out = vec![F::zero(); input.c * grid * grid];
    for c in 0..input.c {
        let src = input.plane(c);
        for gy in 0..grid {
            for gx in 0..grid {
                let mut acc = F::zero();
                for y in gy * bh..(gy + 1) * bh {
                    for v in &src[y * input.w + gx * bw..y * input.w + (gx + 1) * bw] {
                        acc = acc + *v;
                    }
                }
                out[(c * grid + gy) * grid + gx] = acc * scale;
            }
        }
    }
    out
}

pub fn block_avg_backward<F: Scalar>(d_out: &[F], c: usize, h: usize, w: usize, grid: usize) -> Tensor3<F> {
    let (bh, bw) = (h / grid, w / grid);
    let scale = F::one() / F::from(bh * bw).expect("block size");
    let mut d_in = Tensor3::zeros(c, h, w);
    for ch in 0..c {
        let dst = d_in.plane_mut(ch);
        for gy in 0..grid {
            for gx in 0..grid {
                let g = d_out[(ch * grid + gy) * grid + gx] * scale;
                for y in gy * bh..(gy + 1) * bh {
                    for v in &mut dst[y * w + gx * bw..y * w + (gx + 1) * bw] {
                        *v = g;
                    }
                }
            }
        }
    }
    d_in
}
