use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::*;
use super::tensor::{Params, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Cnn,
    CnnLstm,
}

impl Arch {
    pub const ALL: [Arch; 2] = [Arch::Cnn, Arch::CnnLstm];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Cnn => "cnn",
            Arch::CnnLstm => "cnn_lstm",
        }
    }

    /// Matrices per example.
    pub fn timesteps(self) -> usize {
        match self {
            Arch::Cnn => 1,
            Arch::CnnLstm => LSTM_STEPS,
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown architecture {s:?}")))
    }
}

pub const LSTM_STEPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    /// `None` picks from the input size: two blocks when the first pool still
    /// leaves at least 4 rows and 4 columns, else one.
    pub conv_blocks: Option<usize>,
    pub channels: Vec<usize>,
    pub dense_hidden: usize,
    pub lstm_hidden: usize,
    pub l2: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: Arch::Cnn,
            conv_blocks: None,
            channels: vec![8, 16],
            dense_hidden: 32,
            lstm_hidden: 32,
            l2: 0.0,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 300,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if let Some(b) = self.conv_blocks {
            if !(1..=2).contains(&b) {
                return bad("conv_blocks must be 1 or 2");
            }
        }
        if self.channels.len() < 2 || self.channels.contains(&0) {
            return bad("channels needs two positive entries");
        }
        if self.dense_hidden == 0 || self.lstm_hidden == 0 || self.batch_size == 0 {
            return bad("layer widths and batch size must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be a finite non-negative number");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }

    pub fn blocks_for(&self, rows: usize, cols: usize) -> usize {
        self.conv_blocks.unwrap_or_else(|| {
            let (ph, pw) = pool_dims(rows, cols);
            if ph.min(pw) >= 4 {
                2
            } else {
                1
            }
        })
    }
}

/// Indices into [`Params`] for each layer.
#[derive(Debug, Clone)]
struct Layout {
    convs: Vec<(ConvShape, usize, usize)>,
    flat: usize,
    fc1: (usize, usize),
    lstm: Option<(usize, usize, usize)>,
    out: (usize, usize),
}

/// CNN or CNN-LSTM over `rows × cols` matrices. Immutable during inference,
/// so one network can serve many threads.
#[derive(Debug, Clone)]
pub struct Network {
    pub config: ModelConfig,
    pub rows: usize,
    pub cols: usize,
    pub params: Params,
    layout: Layout,
}

/// Forward activations of the shared encoder for one matrix.
struct EncoderCache {
    /// Unfolded input of each conv block.
    cols: Vec<Vec<f64>>,
    /// Post-ReLU conv outputs.
    conv_out: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
    flat: Vec<f64>,
    emb: Vec<f64>,
}

fn check_finite(layer: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            layer: layer.to_string(),
        })
    }
}

impl Network {
    /// He-normal kernels and dense weights, uniform ±1/√H LSTM weights, zero
    /// biases.
    pub fn new(config: &ModelConfig, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut net = Self::zeros(config, rows, cols)?;
        for (name, t) in net.params.names.iter().zip(net.params.tensors.iter_mut()) {
            if name.ends_with("bias") {
                continue;
            }
            if name.starts_with("lstm.") {
                let k = 1.0 / (config.lstm_hidden as f64).sqrt();
                t.data.iter_mut().for_each(|v| *v = rng.random_range(-k..k));
            } else {
                let fan_in: usize = t.shape[1..].iter().product();
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                    .map_err(|e| Error::Numeric(e.to_string()))?;
                t.data.iter_mut().for_each(|v| *v = normal.sample(rng));
            }
        }
        Ok(net)
    }

    pub fn zeros(config: &ModelConfig, rows: usize, cols: usize) -> Result<Self> {
        config.validate()?;
        if rows < 2 || cols < 2 {
            return Err(Error::Shape(format!("{rows}x{cols} input is too small to pool")));
        }
        let blocks = config.blocks_for(rows, cols);
        let mut params = Params::new();
        let mut convs = Vec::new();
        let (mut h, mut w, mut c) = (rows, cols, 1);
        for b in 0..blocks {
            if h < 2 || w < 2 {
                return Err(Error::Shape(format!(
                    "{rows}x{cols} input cannot take {blocks} conv blocks"
                )));
            }
            let s = ConvShape {
                c_in: c,
                c_out: config.channels[b],
                h,
                w,
            };
            let wi = params.push(&format!("conv{}.weight", b + 1), Tensor::zeros(&[s.c_out, c, 3, 3]));
            let bi = params.push(&format!("conv{}.bias", b + 1), Tensor::zeros(&[s.c_out]));
            convs.push((s, wi, bi));
            (h, w) = pool_dims(h, w);
            c = s.c_out;
        }
        let flat = c * h * w;
        let e = config.dense_hidden;
        let fc1 = (
            params.push("fc1.weight", Tensor::zeros(&[e, flat])),
            params.push("fc1.bias", Tensor::zeros(&[e])),
        );
        let (lstm, head_in) = match config.arch {
            Arch::Cnn => (None, e),
            Arch::CnnLstm => {
                let hd = config.lstm_hidden;
                (
                    Some((
                        params.push("lstm.w_ih", Tensor::zeros(&[4 * hd, e])),
                        params.push("lstm.w_hh", Tensor::zeros(&[4 * hd, hd])),
                        params.push("lstm.bias", Tensor::zeros(&[4 * hd])),
                    )),
                    hd,
                )
            }
        };
        let out = (
            params.push("out.weight", Tensor::zeros(&[1, head_in])),
            params.push("out.bias", Tensor::zeros(&[1])),
        );
        Ok(Network {
            config: config.clone(),
            rows,
            cols,
            params,
            layout: Layout {
                convs,
                flat,
                fc1,
                lstm,
                out,
            },
        })
    }

    /// Swaps in a full parameter set with the same names and shapes.
    pub fn with_params(mut self, params: Params) -> Result<Self> {
        let same = params.names == self.params.names
            && params
                .tensors
                .iter()
                .zip(&self.params.tensors)
                .all(|(a, b)| a.shape == b.shape);
        if !same {
            return Err(Error::Shape("parameter layout does not match the architecture".into()));
        }
        self.params = params;
        Ok(self)
    }

    pub fn conv_blocks(&self) -> usize {
        self.layout.convs.len()
    }

    fn p(&self, i: usize) -> &[f64] {
        &self.params.tensors[i].data
    }

    fn encode(&self, x: &[f64]) -> Result<EncoderCache> {
        if x.len() != self.rows * self.cols {
            return Err(Error::Shape(format!(
                "expected {}x{} input, got {} values",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        let mut cols = Vec::new();
        let mut conv_out = Vec::new();
        let mut argmax = Vec::new();
        let mut cur = x.to_vec();
        for (b, &(s, wi, bi)) in self.layout.convs.iter().enumerate() {
            let unfolded = im2col3x3(&cur, s);
            let mut out = vec![0.0; s.out_len()];
            conv3x3_forward_cols(&unfolded, s, self.p(wi), self.p(bi), &mut out);
            relu_inplace(&mut out);
            check_finite(&format!("conv{}", b + 1), &out)?;
            let (ph, pw) = pool_dims(s.h, s.w);
            let mut pooled = vec![0.0; s.c_out * ph * pw];
            let mut arg = vec![0; pooled.len()];
            maxpool2_forward(&out, s.c_out, s.h, s.w, &mut pooled, &mut arg);
            cur = pooled;
            cols.push(unfolded);
            conv_out.push(out);
            argmax.push(arg);
        }
        let mut emb = vec![0.0; self.config.dense_hidden];
        dense_forward(&cur, self.p(self.layout.fc1.0), self.p(self.layout.fc1.1), &mut emb);
        relu_inplace(&mut emb);
        check_finite("fc1", &emb)?;
        Ok(EncoderCache {
            cols,
            conv_out,
            argmax,
            flat: cur,
            emb,
        })
    }

    fn encode_backward(&self, cache: &EncoderCache, g_emb: &[f64], grads: &mut Params) {
        let mut g = g_emb.to_vec();
        relu_backward(&cache.emb, &mut g);
        let (fw, fb) = self.layout.fc1;
        let mut g_flat = vec![0.0; self.layout.flat];
        {
            let (gw, gb) = two_mut(&mut grads.tensors, fw, fb);
            dense_backward(&cache.flat, self.p(fw), &g, &mut gw.data, &mut gb.data, Some(&mut g_flat));
        }
        let mut g_cur = g_flat;
        for b in (0..self.layout.convs.len()).rev() {
            let (s, wi, bi) = self.layout.convs[b];
            let mut g_conv = vec![0.0; s.out_len()];
            maxpool2_backward(&g_cur, &cache.argmax[b], &mut g_conv);
            relu_backward(&cache.conv_out[b], &mut g_conv);
            let mut g_in = if b > 0 { Some(vec![0.0; s.in_len()]) } else { None };
            let (gw, gb) = two_mut(&mut grads.tensors, wi, bi);
            conv3x3_backward_cols(
                &cache.cols[b],
                s,
                self.p(wi),
                &g_conv,
                &mut gw.data,
                &mut gb.data,
                g_in.as_deref_mut(),
            );
            if let Some(gi) = g_in {
                g_cur = gi;
            }
        }
    }

    /// Output logit. `xs` holds one matrix for the CNN, or three
    /// (oldest first) for the CNN-LSTM.
    pub fn logit(&self, xs: &[&[f64]]) -> Result<f64> {
        Ok(self.forward(xs)?.logit)
    }

    pub fn probability(&self, xs: &[&[f64]]) -> Result<f64> {
        self.logit(xs).map(sigmoid)
    }

    fn forward(&self, xs: &[&[f64]]) -> Result<ForwardCache> {
        let steps = self.config.arch.timesteps();
        if xs.len() != steps {
            return Err(Error::Shape(format!(
                "{} expects {steps} matrices, got {}",
                self.config.arch,
                xs.len()
            )));
        }
        let encs = xs.iter().map(|x| self.encode(x)).collect::<Result<Vec<_>>>()?;
        let (ow, ob) = self.layout.out;
        let (head_in, lstm_steps) = match self.layout.lstm {
            None => (encs[0].emb.clone(), Vec::new()),
            Some((wih, whh, lb)) => {
                let hd = self.config.lstm_hidden;
                let (mut h, mut c) = (vec![0.0; hd], vec![0.0; hd]);
                let mut steps = Vec::with_capacity(encs.len());
                for e in &encs {
                    let st = lstm_step_forward(&e.emb, &h, &c, self.p(wih), self.p(whh), self.p(lb));
                    check_finite("lstm", &st.h)?;
                    h.clone_from(&st.h);
                    c.clone_from(&st.c);
                    steps.push(st);
                }
                (h, steps)
            }
        };
        let mut z = [0.0];
        dense_forward(&head_in, self.p(ow), self.p(ob), &mut z);
        check_finite("out", &z)?;
        Ok(ForwardCache {
            encs,
            lstm_steps,
            head_in,
            logit: z[0],
        })
    }

    /// Mean BCE plus `l2 · Σ‖W‖²` over a batch, and its gradient.
    pub fn loss_and_grad(&self, batch: &[(Vec<&[f64]>, u8)]) -> Result<(f64, Params, Vec<f64>)> {
        let mut grads = self.params.zeros_like();
        let mut loss = 0.0;
        let mut logits = Vec::with_capacity(batch.len());
        for (xs, y) in batch {
            let fc = self.forward(xs)?;
            let y = f64::from(*y);
            loss += bce_with_logit(fc.logit, y);
            logits.push(fc.logit);
            self.backward(&fc, sigmoid(fc.logit) - y, &mut grads);
        }
        let n = batch.len().max(1) as f64;
        loss /= n;
        grads.scale(1.0 / n);
        let l2 = self.config.l2;
        if l2 > 0.0 {
            for ((name, p), g) in self.params.iter().zip(grads.tensors.iter_mut()) {
                if Params::is_decayed(name) {
                    loss += l2 * p.sum_sq();
                    for (gv, pv) in g.data.iter_mut().zip(&p.data) {
                        *gv += 2.0 * l2 * pv;
                    }
                }
            }
        }
        Ok((loss, grads, logits))
    }

    fn backward(&self, fc: &ForwardCache, dz: f64, grads: &mut Params) {
        let (ow, ob) = self.layout.out;
        let mut g_head = vec![0.0; fc.head_in.len()];
        {
            let (gw, gb) = two_mut(&mut grads.tensors, ow, ob);
            dense_backward(&fc.head_in, self.p(ow), &[dz], &mut gw.data, &mut gb.data, Some(&mut g_head));
        }
        match self.layout.lstm {
            None => self.encode_backward(&fc.encs[0], &g_head, grads),
            Some((wih, whh, lb)) => {
                let hd = self.config.lstm_hidden;
                let mut dh = g_head;
                let mut dc = vec![0.0; hd];
                for (t, st) in fc.lstm_steps.iter().enumerate().rev() {
                    let mut gih = std::mem::take(&mut grads.tensors[wih].data);
                    let mut ghh = std::mem::take(&mut grads.tensors[whh].data);
                    let mut gb = std::mem::take(&mut grads.tensors[lb].data);
                    let (dx, dh_prev, dc_prev) = lstm_step_backward(
                        st,
                        self.p(wih),
                        self.p(whh),
                        &dh,
                        &dc,
                        &mut gih,
                        &mut ghh,
                        &mut gb,
                    );
                    grads.tensors[wih].data = gih;
                    grads.tensors[whh].data = ghh;
                    grads.tensors[lb].data = gb;
                    self.encode_backward(&fc.encs[t], &dx, grads);
                    dh = dh_prev;
                    dc = dc_prev;
                }
            }
        }
    }
}

struct ForwardCache {
    encs: Vec<EncoderCache>,
    lstm_steps: Vec<LstmStep>,
    head_in: Vec<f64>,
    logit: f64,
}

fn two_mut(v: &mut [Tensor], a: usize, b: usize) -> (&mut Tensor, &mut Tensor) {
    assert!(a < b);
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}
