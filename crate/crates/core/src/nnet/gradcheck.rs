//! Central finite-difference checks of every layer's backward pass, on small
//! randomized tensors. Each check projects the layer output onto a random
//! direction `r` so a single scalar covers the whole Jacobian.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::*;

pub const EPSILON: f64 = 1e-5;

/// Gradients smaller than this are compared absolutely rather than
/// relatively; otherwise round-off in a near-zero entry dominates.
pub const REL_FLOOR: f64 = 1e-3;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Worst relative error between `analytic` and central differences of `f`
/// around `x`.
pub fn max_rel_err(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> f64 {
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        probe[k] = x[k] + EPSILON;
        let up = f(&probe);
        probe[k] = x[k] - EPSILON;
        let down = f(&probe);
        probe[k] = x[k];
        worst = worst.max(rel_err(analytic[k], (up - down) / (2.0 * EPSILON)));
    }
    worst
}

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn check_conv(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = ConvShape { c_in: 2, c_out: 3, h: 5, w: 4 };
    let x = randn(&mut rng, s.in_len());
    let wt = randn(&mut rng, s.weight_len());
    let b = randn(&mut rng, s.c_out);
    let r = randn(&mut rng, s.out_len());
    let loss = |x: &[f64], wt: &[f64], b: &[f64]| {
        let mut out = vec![0.0; s.out_len()];
        conv3x3_forward(x, s, wt, b, &mut out);
        dot(&out, &r)
    };
    let (mut gw, mut gb, mut gx) = (vec![0.0; wt.len()], vec![0.0; b.len()], vec![0.0; x.len()]);
    conv3x3_backward(&x, s, &wt, &r, &mut gw, &mut gb, Some(&mut gx));
    max_rel_err(|v| loss(v, &wt, &b), &x, &gx)
        .max(max_rel_err(|v| loss(&x, v, &b), &wt, &gw))
        .max(max_rel_err(|v| loss(&x, &wt, v), &b, &gb))
}

pub fn check_maxpool(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, h, w) = (2, 5, 6);
    let x = randn(&mut rng, c * h * w);
    let (ph, pw) = pool_dims(h, w);
    let r = randn(&mut rng, c * ph * pw);
    let loss = |x: &[f64]| {
        let (mut out, mut arg) = (vec![0.0; r.len()], vec![0; r.len()]);
        maxpool2_forward(x, c, h, w, &mut out, &mut arg);
        dot(&out, &r)
    };
    let (mut out, mut arg) = (vec![0.0; r.len()], vec![0; r.len()]);
    maxpool2_forward(&x, c, h, w, &mut out, &mut arg);
    let mut gx = vec![0.0; x.len()];
    maxpool2_backward(&r, &arg, &mut gx);
    max_rel_err(loss, &x, &gx)
}

pub fn check_dense(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_in, n_out) = (7, 5);
    let x = randn(&mut rng, n_in);
    let wt = randn(&mut rng, n_in * n_out);
    let b = randn(&mut rng, n_out);
    let r = randn(&mut rng, n_out);
    let loss = |x: &[f64], wt: &[f64], b: &[f64]| {
        let mut out = vec![0.0; n_out];
        dense_forward(x, wt, b, &mut out);
        relu_inplace(&mut out);
        dot(&out, &r)
    };
    let mut out = vec![0.0; n_out];
    dense_forward(&x, &wt, &b, &mut out);
    relu_inplace(&mut out);
    let mut g = r.clone();
    relu_backward(&out, &mut g);
    let (mut gw, mut gb, mut gx) = (vec![0.0; wt.len()], vec![0.0; n_out], vec![0.0; n_in]);
    dense_backward(&x, &wt, &g, &mut gw, &mut gb, Some(&mut gx));
    max_rel_err(|v| loss(v, &wt, &b), &x, &gx)
        .max(max_rel_err(|v| loss(&x, v, &b), &wt, &gw))
        .max(max_rel_err(|v| loss(&x, &wt, v), &b, &gb))
}

pub fn check_sigmoid(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<f64> = (0..16).map(|_| rng.random_range(-6.0..6.0)).collect();
    let r = randn(&mut rng, z.len());
    let loss = |z: &[f64]| z.iter().zip(&r).map(|(v, k)| sigmoid(*v) * k).sum::<f64>();
    let g: Vec<f64> = z.iter().zip(&r).map(|(v, k)| sigmoid_grad(sigmoid(*v)) * k).collect();
    // and the fused loss: d bce / dz = p - y
    let y: Vec<f64> = (0..z.len()).map(|i| (i % 2) as f64).collect();
    let bce = |z: &[f64]| z.iter().zip(&y).map(|(v, t)| bce_with_logit(*v, *t)).sum::<f64>();
    let gb: Vec<f64> = z.iter().zip(&y).map(|(v, t)| sigmoid(*v) - t).collect();
    max_rel_err(loss, &z, &g).max(max_rel_err(bce, &z, &gb))
}

pub fn check_lstm(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (e, hd) = (4, 3);
    let x = randn(&mut rng, e);
    let h0 = randn(&mut rng, hd);
    let c0 = randn(&mut rng, hd);
    let w_ih = randn(&mut rng, 4 * hd * e);
    let w_hh = randn(&mut rng, 4 * hd * hd);
    let b = randn(&mut rng, 4 * hd);
    let rh = randn(&mut rng, hd);
    let rc = randn(&mut rng, hd);
    let loss = |x: &[f64], h0: &[f64], c0: &[f64], w_ih: &[f64], w_hh: &[f64], b: &[f64]| {
        let s = lstm_step_forward(x, h0, c0, w_ih, w_hh, b);
        dot(&s.h, &rh) + dot(&s.c, &rc)
    };
    let step = lstm_step_forward(&x, &h0, &c0, &w_ih, &w_hh, &b);
    let (mut gih, mut ghh, mut gb) = (vec![0.0; w_ih.len()], vec![0.0; w_hh.len()], vec![0.0; b.len()]);
    let (dx, dh0, dc0) = lstm_step_backward(&step, &w_ih, &w_hh, &rh, &rc, &mut gih, &mut ghh, &mut gb);
    [
        max_rel_err(|v| loss(v, &h0, &c0, &w_ih, &w_hh, &b), &x, &dx),
        max_rel_err(|v| loss(&x, v, &c0, &w_ih, &w_hh, &b), &h0, &dh0),
        max_rel_err(|v| loss(&x, &h0, v, &w_ih, &w_hh, &b), &c0, &dc0),
        max_rel_err(|v| loss(&x, &h0, &c0, v, &w_hh, &b), &w_ih, &gih),
        max_rel_err(|v| loss(&x, &h0, &c0, &w_ih, v, &b), &w_hh, &ghh),
        max_rel_err(|v| loss(&x, &h0, &c0, &w_ih, &w_hh, v), &b, &gb),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Worst relative error per layer type.
pub fn all_layers(seed: u64) -> Vec<(&'static str, f64)> {
    vec![
        ("conv", check_conv(seed)),
        ("maxpool", check_maxpool(seed)),
        ("dense", check_dense(seed)),
        ("sigmoid", check_sigmoid(seed)),
        ("lstm_cell", check_lstm(seed)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_matches_finite_differences() {
        for seed in 0..5 {
            for (layer, err) in all_layers(seed) {
                assert!(err < 1e-4, "{layer} seed {seed}: {err:e}");
            }
        }
    }
}
