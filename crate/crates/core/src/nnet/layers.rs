//! Per-sample forward and backward kernels. Activations are flat row-major
//! `[channel][row][col]` buffers; backward functions accumulate (`+=`) into
//! the gradient buffers they are handed.

/// Geometry of a 3×3 same-padded convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.c_out * self.c_in * 9
    }
    pub fn in_len(&self) -> usize {
        self.c_in * self.h * self.w
    }
    pub fn out_len(&self) -> usize {
        self.c_out * self.h * self.w
    }
}

/// Output columns `[lo, hi)` whose source column `x + dx` is in bounds.
#[inline]
fn col_span(w: usize, dx: isize) -> (usize, usize) {
    let lo = (-dx).max(0) as usize;
    let hi = (w as isize - dx).min(w as isize) as usize;
    (lo, hi)
}

/// Unfolds the zero-padded 3×3 neighbourhoods into a `[c_in·9][h·w]`
/// matrix, so the convolution becomes one matrix product.
pub fn im2col3x3(x: &[f64], s: ConvShape) -> Vec<f64> {
    let (h, w) = (s.h, s.w);
    let hw = h * w;
    let mut cols = vec![0.0; s.c_in * 9 * hw];
    for i in 0..s.c_in {
        let x_i = &x[i * hw..(i + 1) * hw];
        for ky in 0..3 {
            let dy = ky as isize - 1;
            for kx in 0..3 {
                let dx = kx as isize - 1;
                let (lo, hi) = col_span(w, dx);
                let row = &mut cols[(i * 9 + ky * 3 + kx) * hw..(i * 9 + ky * 3 + kx + 1) * hw];
                for y in 0..h {
                    let yy = y as isize + dy;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    let src = yy as usize * w;
                    let src = &x_i[(src as isize + lo as isize + dx) as usize..][..hi - lo];
                    row[y * w + lo..y * w + hi].copy_from_slice(src);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col3x3`]: scatters column gradients back onto the input.
pub fn col2im3x3(gcols: &[f64], s: ConvShape, gx: &mut [f64]) {
    let (h, w) = (s.h, s.w);
    let hw = h * w;
    for i in 0..s.c_in {
        for ky in 0..3 {
            let dy = ky as isize - 1;
            for kx in 0..3 {
                let dx = kx as isize - 1;
                let (lo, hi) = col_span(w, dx);
                let row = &gcols[(i * 9 + ky * 3 + kx) * hw..(i * 9 + ky * 3 + kx + 1) * hw];
                for y in 0..h {
                    let yy = y as isize + dy;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    let dst = i * hw + yy as usize * w;
                    let dst = &mut gx[(dst as isize + lo as isize + dx) as usize..][..hi - lo];
                    for (d, g) in dst.iter_mut().zip(&row[y * w + lo..y * w + hi]) {
                        *d += g;
                    }
                }
            }
        }
    }
}

/// 3×3 same-padded convolution from pre-unfolded columns.
pub fn conv3x3_forward_cols(cols: &[f64], s: ConvShape, weight: &[f64], bias: &[f64], out: &mut [f64]) {
    let hw = s.h * s.w;
    let k_len = s.c_in * 9;
    for o in 0..s.c_out {
        let out_o = &mut out[o * hw..(o + 1) * hw];
        out_o.fill(bias[o]);
        for (k, &wv) in weight[o * k_len..(o + 1) * k_len].iter().enumerate() {
            for (d, c) in out_o.iter_mut().zip(&cols[k * hw..(k + 1) * hw]) {
                *d += wv * c;
            }
        }
    }
}

/// `gx` is skipped for the first layer, whose input needs no gradient.
pub fn conv3x3_backward_cols(
    cols: &[f64],
    s: ConvShape,
    weight: &[f64],
    gout: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    gx: Option<&mut [f64]>,
) {
    let hw = s.h * s.w;
    let k_len = s.c_in * 9;
    let mut gcols = gx.as_ref().map(|_| vec![0.0; cols.len()]);
    for o in 0..s.c_out {
        let g_o = &gout[o * hw..(o + 1) * hw];
        gb[o] += g_o.iter().sum::<f64>();
        for k in 0..k_len {
            let c = &cols[k * hw..(k + 1) * hw];
            gw[o * k_len + k] += g_o.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            if let Some(gc) = gcols.as_mut() {
                let wv = weight[o * k_len + k];
                for (d, g) in gc[k * hw..(k + 1) * hw].iter_mut().zip(g_o) {
                    *d += wv * g;
                }
            }
        }
    }
    if let (Some(gc), Some(gx)) = (gcols, gx) {
        col2im3x3(&gc, s, gx);
    }
}

pub fn conv3x3_forward(x: &[f64], s: ConvShape, weight: &[f64], bias: &[f64], out: &mut [f64]) {
    conv3x3_forward_cols(&im2col3x3(x, s), s, weight, bias, out);
}

pub fn conv3x3_backward(
    x: &[f64],
    s: ConvShape,
    weight: &[f64],
    gout: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    gx: Option<&mut [f64]>,
) {
    conv3x3_backward_cols(&im2col3x3(x, s), s, weight, gout, gw, gb, gx);
}

pub fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes `g` wherever the ReLU output was not positive.
pub fn relu_backward(out: &[f64], g: &mut [f64]) {
    for (gv, &o) in g.iter_mut().zip(out) {
        if o <= 0.0 {
            *gv = 0.0;
        }
    }
}

/// Pooled height and width; odd trailing rows/cols are dropped.
pub fn pool_dims(h: usize, w: usize) -> (usize, usize) {
    (h / 2, w / 2)
}

/// 2×2 max pooling, stride 2. `argmax` receives the flat input index of
/// each output's winner (first one on ties).
pub fn maxpool2_forward(x: &[f64], c: usize, h: usize, w: usize, out: &mut [f64], argmax: &mut [usize]) {
    let (ph, pw) = pool_dims(h, w);
    for ch in 0..c {
        for py in 0..ph {
            for px in 0..pw {
                let mut best = usize::MAX;
                let mut best_v = f64::NEG_INFINITY;
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let idx = ch * h * w + (2 * py + dy) * w + 2 * px + dx;
                    if x[idx] > best_v || best == usize::MAX {
                        best_v = x[idx];
                        best = idx;
                    }
                }
                let o = ch * ph * pw + py * pw + px;
                out[o] = best_v;
                argmax[o] = best;
            }
        }
    }
}

pub fn maxpool2_backward(gout: &[f64], argmax: &[usize], gx: &mut [f64]) {
    for (g, &i) in gout.iter().zip(argmax) {
        gx[i] += g;
    }
}

/// `out = W x + b` with `W` stored `[n_out][n_in]`.
pub fn dense_forward(x: &[f64], weight: &[f64], bias: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (o, dst) in out.iter_mut().enumerate() {
        let row = &weight[o * n_in..(o + 1) * n_in];
        *dst = bias[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

pub fn dense_backward(
    x: &[f64],
    weight: &[f64],
    gout: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    mut gx: Option<&mut [f64]>,
) {
    let n_in = x.len();
    for (o, &g) in gout.iter().enumerate() {
        gb[o] += g;
        if g == 0.0 {
            continue;
        }
        let gw_row = &mut gw[o * n_in..(o + 1) * n_in];
        for (d, v) in gw_row.iter_mut().zip(x) {
            *d += g * v;
        }
        if let Some(gx) = gx.as_deref_mut() {
            let row = &weight[o * n_in..(o + 1) * n_in];
            for (d, wv) in gx.iter_mut().zip(row) {
                *d += g * wv;
            }
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// d sigmoid / dz expressed through the output.
pub fn sigmoid_grad(p: f64) -> f64 {
    p * (1.0 - p)
}

/// Binary cross-entropy of a logit, computed without forming the
/// probability so large |z| stays finite.
pub fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Everything one LSTM step needs for its backward pass. Gate activations
/// are stored post-nonlinearity in `i, f, g, o` order.
#[derive(Debug, Clone)]
pub struct LstmStep {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

/// Standard LSTM cell. `w_ih` is `[4H][E]`, `w_hh` is `[4H][H]`, `bias` is
/// `[4H]`, gate blocks ordered input, forget, candidate, output.
pub fn lstm_step_forward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    w_ih: &[f64],
    w_hh: &[f64],
    bias: &[f64],
) -> LstmStep {
    let hd = h_prev.len();
    let mut z = vec![0.0; 4 * hd];
    dense_forward(x, w_ih, bias, &mut z);
    let zero = vec![0.0; 4 * hd];
    let mut zh = vec![0.0; 4 * hd];
    dense_forward(h_prev, w_hh, &zero, &mut zh);
    let mut gates = vec![0.0; 4 * hd];
    for k in 0..4 * hd {
        let v = z[k] + zh[k];
        gates[k] = if (2 * hd..3 * hd).contains(&k) {
            v.tanh()
        } else {
            sigmoid(v)
        };
    }
    let mut c = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    for j in 0..hd {
        let (i, f, g, o) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
        c[j] = f * c_prev[j] + i * g;
        h[j] = o * c[j].tanh();
    }
    LstmStep {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates,
        c,
        h,
    }
}

/// Backward through one step given the gradients flowing into `h` and `c`.
/// Returns `(dx, dh_prev, dc_prev)`.
pub fn lstm_step_backward(
    step: &LstmStep,
    w_ih: &[f64],
    w_hh: &[f64],
    dh: &[f64],
    dc: &[f64],
    gw_ih: &mut [f64],
    gw_hh: &mut [f64],
    gb: &mut [f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hd = dh.len();
    let mut dz = vec![0.0; 4 * hd];
    let mut dc_prev = vec![0.0; hd];
    for j in 0..hd {
        let (i, f, g, o) = (
            step.gates[j],
            step.gates[hd + j],
            step.gates[2 * hd + j],
            step.gates[3 * hd + j],
        );
        let tc = step.c[j].tanh();
        let d_o = dh[j] * tc;
        let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
        dz[j] = dct * g * i * (1.0 - i);
        dz[hd + j] = dct * step.c_prev[j] * f * (1.0 - f);
        dz[2 * hd + j] = dct * i * (1.0 - g * g);
        dz[3 * hd + j] = d_o * o * (1.0 - o);
        dc_prev[j] = dct * f;
    }
    let mut dx = vec![0.0; step.x.len()];
    let mut dh_prev = vec![0.0; hd];
    dense_backward(&step.x, w_ih, &dz, gw_ih, gb, Some(&mut dx));
    let mut scratch_b = vec![0.0; 4 * hd];
    dense_backward(&step.h_prev, w_hh, &dz, gw_hh, &mut scratch_b, Some(&mut dh_prev));
    (dx, dh_prev, dc_prev)
}
