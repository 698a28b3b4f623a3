//! Non-stationary feature learner.
//!
//! A small transformer encoder/decoder that reconstructs sliding windows
//! of the normalized series. Attention logits are conditioned three ways
//! to recover the non-stationarity that normalization strips out:
//!
//! * profiling vectors `γ_Q, γ_K` multiply queries/keys per window,
//!   derived from raw local statistics (mean/variance/skewness/kurtosis);
//! * de-stationary factors `τ` (scale) and `Δ` (shift) learned by a
//!   convolution + MLP block from raw windows and the dataset moments,
//!   shared by every attention module;
//! * a frequency path multiplies real-FFT bins of the attention output
//!   by learned complex per-bin weights (magnitudes softmax-normalized
//!   over bins) and fuses the result back through a learned gate.
//!
//! The decoder's pre-denormalization reconstruction is the distilled
//! signal consumed by the structure learner.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{denormalize, normalize, NormStats, WindowBatch};
use crate::error::{Result, TtcdError};
use crate::numeric::tape::{BoundParams, ParamSet, Tape, TensorId};
use crate::numeric::{rfft_bins, Array};

/// Hyperparameters of the feature learner.
#[derive(Debug, Clone)]
pub struct LearnerConfig {
    /// Embedding width.
    pub d_e: usize,
    /// Attention heads (must divide `d_e`).
    pub n_heads: usize,
    pub encoder_depth: usize,
    pub decoder_depth: usize,
    /// Trailing lag steps used for the profiling statistics.
    pub stats_window: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            d_e: 16,
            n_heads: 1,
            encoder_depth: 1,
            decoder_depth: 1,
            stats_window: 8,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_e < 2 {
            return Err(TtcdError::Config(format!("d_e must be >= 2, got {}", self.d_e)));
        }
        if self.encoder_depth < 1 || self.decoder_depth < 1 {
            return Err(TtcdError::Config("encoder/decoder depth must be >= 1".into()));
        }
        if self.n_heads < 1 || self.d_e % self.n_heads != 0 {
            return Err(TtcdError::Config(format!(
                "n_heads {} must divide d_e {}",
                self.n_heads, self.d_e
            )));
        }
        if self.stats_window < 2 {
            return Err(TtcdError::Config("stats_window must be >= 2".into()));
        }
        Ok(())
    }
}

/// Which conditioning paths are active. The ablation variants toggle
/// these off; neutral-initialized heads make the remaining paths exact.
#[derive(Debug, Clone, Copy)]
pub struct AttentionMode {
    pub use_dsb: bool,
    pub use_profile: bool,
    pub use_freq: bool,
}

impl AttentionMode {
    pub const FULL: Self = Self {
        use_dsb: true,
        use_profile: true,
        use_freq: true,
    };
    pub const NO_DSB: Self = Self {
        use_dsb: false,
        use_profile: true,
        use_freq: true,
    };
    pub const NO_FREQUENCY: Self = Self {
        use_dsb: true,
        use_profile: true,
        use_freq: false,
    };
    pub const PLAIN: Self = Self {
        use_dsb: false,
        use_profile: false,
        use_freq: false,
    };
}

/// Per-window positive conditioning vectors for queries and keys.
#[derive(Debug, Clone)]
pub struct ProfileVectors {
    /// (N_w, d_e), strictly positive.
    pub gamma_q: Array,
    pub gamma_k: Array,
}

/// Learned scale/shift reinjected into attention logits.
#[derive(Debug, Clone)]
pub struct DeStationaryFactors {
    /// (N_w, 1), strictly positive.
    pub tau: Array,
    /// (N_w, l_max + 1).
    pub delta: Array,
}

/// Decoder outputs on both scales plus the encoder latent.
#[derive(Debug, Clone)]
pub struct LearnerOutput {
    /// (N_w, l_max+1, n), pre-denormalization (the distilled signal).
    pub reconstruction_raw: Array,
    /// (N_w, l_max+1, n), denormalized back to the input scale.
    pub reconstruction: Array,
    /// (N_w, l_max+1, d_e).
    pub latent: Array,
}

/// Tape handles produced by one forward pass.
pub struct LearnerForward {
    pub recon_raw: TensorId,
    pub latent: TensorId,
    pub tau: Option<TensorId>,
    pub delta: Option<TensorId>,
    pub gamma_q: Option<TensorId>,
    pub gamma_k: Option<TensorId>,
}

/// Constant inputs for one training run, precomputed from the windows.
#[derive(Debug, Clone)]
pub struct LearnerInputs {
    /// (N_w, L, n) normalized windows.
    pub norm_windows: Array,
    /// (N_w, L, n) raw windows (DSB convolution input).
    pub raw_windows: Array,
    /// (N_w, 4n) raw local statistics for the profiling network.
    pub profile_feats: Array,
    /// (N_w, 2n) per-window copy of `[mu, sigma]`.
    pub mu_sigma: Array,
}

/// Builds the constant learner inputs from raw windows and dataset stats.
pub fn make_inputs(
    windows: &WindowBatch,
    stats: &NormStats,
    config: &LearnerConfig,
) -> Result<LearnerInputs> {
    let norm_windows = normalize(&windows.windows, stats)?;
    let profile_feats = profile_stats(windows, config.stats_window);
    let nw = windows.count();
    let n = windows.n_vars();
    let mut ms = vec![0.0; nw * 2 * n];
    for w in 0..nw {
        for v in 0..n {
            ms[w * 2 * n + v] = stats.mu[v];
            ms[w * 2 * n + n + v] = stats.sigma[v];
        }
    }
    Ok(LearnerInputs {
        norm_windows,
        raw_windows: windows.windows.clone(),
        profile_feats,
        mu_sigma: Array::from_vec(vec![nw, 2 * n], ms)?,
    })
}

/// Raw local statistics over the trailing `stats_window` lag steps of
/// each window: per variable mean, population variance, skewness and
/// excess kurtosis (the last two guarded to 0 for constant windows).
/// Layout: variable-major `(mean, var, skew, kurt)` quadruples.
pub fn profile_stats(windows: &WindowBatch, stats_window: usize) -> Array {
    let (nw, l, n) = (windows.count(), windows.window_len(), windows.n_vars());
    let w = stats_window.min(l);
    let start = l - w;
    let data = windows.windows.data();
    let mut out = vec![0.0; nw * 4 * n];
    for wi in 0..nw {
        for v in 0..n {
            let mut vals = Vec::with_capacity(w);
            for r in start..l {
                vals.push(data[(wi * l + r) * n + v]);
            }
            let mean = vals.iter().sum::<f64>() / w as f64;
            let var = vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w as f64;
            let sd = var.sqrt();
            let (skew, kurt) = if sd < 1e-12 {
                (0.0, 0.0)
            } else {
                let m3 = vals.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / w as f64;
                let m4 = vals.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / w as f64;
                (m3 / sd.powi(3), m4 / (var * var) - 3.0)
            };
            let base = wi * 4 * n + v * 4;
            out[base] = mean;
            out[base + 1] = var;
            out[base + 2] = skew;
            out[base + 3] = kurt;
        }
    }
    Array::from_vec(vec![nw, 4 * n], out).expect("shape consistent")
}

/// Sinusoidal positional encoding over the lag axis, (L, d_e).
pub fn positional_encoding(l: usize, d_e: usize) -> Array {
    let mut out = vec![0.0; l * d_e];
    for pos in 0..l {
        for i in 0..d_e {
            let exponent = 2.0 * (i / 2) as f64 / d_e as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            out[pos * d_e + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Array::from_vec(vec![l, d_e], out).expect("shape consistent")
}

/// Tiny additive guard inside square roots on the tape.
const NORM_GUARD: f64 = 1e-24;

/// DSB convolution channels and kernel width.
const DSB_CONV_CHANNELS: usize = 8;
const DSB_KERNEL: usize = 3;

/// The non-stationary feature learner: parameter layout and forward pass.
#[derive(Debug, Clone)]
pub struct FeatureLearner {
    pub n_vars: usize,
    pub l_max: usize,
    pub config: LearnerConfig,
}

impl FeatureLearner {
    pub fn new(n_vars: usize, l_max: usize, config: LearnerConfig) -> Result<Self> {
        config.validate()?;
        if n_vars == 0 || l_max == 0 {
            return Err(TtcdError::Config(
                "feature learner wants n_vars >= 1 and l_max >= 1".into(),
            ));
        }
        Ok(Self {
            n_vars,
            l_max,
            config,
        })
    }

    fn window_len(&self) -> usize {
        self.l_max + 1
    }

    fn bins(&self) -> usize {
        rfft_bins(self.window_len())
    }

    /// Registers all learner parameters. Profiling output layer, DSB
    /// output heads and frequency weights start neutral: the first
    /// forward pass equals a plain transformer.
    pub fn init_params(&self, params: &mut ParamSet, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d, l) = (self.n_vars, self.config.d_e, self.window_len());
        let hidden = 2 * d;

        add_linear(params, &mut rng, "fl.embed", n, d)?;

        // profiling network: stats (4n) -> hidden -> 2*d_e, output zeroed
        add_linear(params, &mut rng, "fl.profile.fc1", 4 * n, hidden)?;
        add_zero_linear(params, "fl.profile.out", hidden, 2 * d)?;

        // DSB: conv over the lag axis, two hidden layers, zeroed heads
        params.insert(
            "fl.dsb.conv.w",
            randn(&mut rng, &[DSB_KERNEL, n, DSB_CONV_CHANNELS], 1.0 / (n as f64).sqrt()),
        )?;
        params.insert("fl.dsb.conv.b", Array::zeros(&[DSB_CONV_CHANNELS]))?;
        let dsb_in = l * DSB_CONV_CHANNELS + 2 * n;
        add_linear(params, &mut rng, "fl.dsb.fc1", dsb_in, hidden)?;
        add_linear(params, &mut rng, "fl.dsb.fc2", hidden, hidden)?;
        add_zero_linear(params, "fl.dsb.tau", hidden, 1)?;
        add_zero_linear(params, "fl.dsb.delta", hidden, l)?;

        for i in 0..self.config.encoder_depth {
            self.add_attention(params, &mut rng, &format!("fl.enc{i}.attn"))?;
            self.add_freq(params, &format!("fl.enc{i}.freq"))?;
            self.add_ffn_lns(params, &mut rng, &format!("fl.enc{i}"), 2)?;
        }
        for i in 0..self.config.decoder_depth {
            self.add_attention(params, &mut rng, &format!("fl.dec{i}.self"))?;
            self.add_freq(params, &format!("fl.dec{i}.freq"))?;
            self.add_attention(params, &mut rng, &format!("fl.dec{i}.cross"))?;
            self.add_ffn_lns(params, &mut rng, &format!("fl.dec{i}"), 3)?;
        }

        add_linear(params, &mut rng, "fl.out", d, n)?;
        Ok(())
    }

    fn add_attention(&self, params: &mut ParamSet, rng: &mut ChaCha8Rng, prefix: &str) -> Result<()> {
        let d = self.config.d_e;
        for name in ["wq", "wk", "wv", "wo"] {
            add_linear(params, rng, &format!("{prefix}.{name}"), d, d)?;
        }
        Ok(())
    }

    fn add_freq(&self, params: &mut ParamSet, prefix: &str) -> Result<()> {
        let k = self.bins();
        params.insert(&format!("{prefix}.mag"), Array::zeros(&[k]))?;
        params.insert(&format!("{prefix}.rot_re"), Array::full(&[k], 1.0))?;
        params.insert(&format!("{prefix}.rot_im"), Array::zeros(&[k]))?;
        params.insert(&format!("{prefix}.gate"), Array::scalar(0.0))?;
        Ok(())
    }

    fn add_ffn_lns(
        &self,
        params: &mut ParamSet,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        n_lns: usize,
    ) -> Result<()> {
        let d = self.config.d_e;
        add_linear(params, rng, &format!("{prefix}.ffn.fc1"), d, 2 * d)?;
        add_linear(params, rng, &format!("{prefix}.ffn.fc2"), 2 * d, d)?;
        for i in 1..=n_lns {
            params.insert(&format!("{prefix}.ln{i}.g"), Array::full(&[d], 1.0))?;
            params.insert(&format!("{prefix}.ln{i}.b"), Array::zeros(&[d]))?;
        }
        Ok(())
    }

    /// Records the full forward pass on `tape`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bp: &BoundParams,
        inputs: &LearnerInputs,
        mode: AttentionMode,
    ) -> Result<LearnerForward> {
        let l = self.window_len();
        let d = self.config.d_e;

        // embedding + positional encoding
        let x_in = tape.constant(inputs.norm_windows.clone());
        let emb = linear(tape, bp, x_in, "fl.embed")?;
        let pos = tape.constant(positional_encoding(l, d));
        let emb = tape.add(emb, pos)?;

        // conditioning factors
        let factors = self.factors(tape, bp, inputs, mode)?;

        // encoder
        let mut x = emb;
        for i in 0..self.config.encoder_depth {
            x = self.encoder_block(tape, bp, x, &factors, mode, i)?;
        }
        let latent = x;

        // decoder: self-attention over input embeddings, cross to latent
        let mut y = emb;
        for i in 0..self.config.decoder_depth {
            y = self.decoder_block(tape, bp, y, latent, &factors, mode, i)?;
        }
        let recon_raw = linear(tape, bp, y, "fl.out")?;

        Ok(LearnerForward {
            recon_raw,
            latent,
            tau: factors.tau,
            delta: factors.delta,
            gamma_q: factors.gamma_q,
            gamma_k: factors.gamma_k,
        })
    }

    fn factors(
        &self,
        tape: &mut Tape,
        bp: &BoundParams,
        inputs: &LearnerInputs,
        mode: AttentionMode,
    ) -> Result<Factors> {
        let nw = inputs.norm_windows.shape()[0];
        let l = self.window_len();
        let d = self.config.d_e;

        let (gamma_q, gamma_k) = if mode.use_profile {
            let feats = tape.constant(inputs.profile_feats.clone());
            let h = linear(tape, bp, feats, "fl.profile.fc1")?;
            let h = tape.relu(h)?;
            let raw = linear(tape, bp, h, "fl.profile.out")?; // (N_w, 2d)
            let gq = tape.slice_axis(raw, 1, 0, d)?;
            let gk = tape.slice_axis(raw, 1, d, d)?;
            let gq = tape.exp(gq)?;
            let gk = tape.exp(gk)?;
            let gq3 = tape.reshape(gq, vec![nw, 1, d])?;
            let gk3 = tape.reshape(gk, vec![nw, 1, d])?;
            (Some((gq, gq3)), Some((gk, gk3)))
        } else {
            (None, None)
        };

        let (tau, delta) = if mode.use_dsb {
            let raw = tape.constant(inputs.raw_windows.clone());
            let cw = bp.id("fl.dsb.conv.w")?;
            let cb = bp.id("fl.dsb.conv.b")?;
            let conv = tape.conv1d_same(raw, cw, cb)?;
            let conv = tape.relu(conv)?;
            let flat = tape.reshape(conv, vec![nw, l * DSB_CONV_CHANNELS])?;
            let ms = tape.constant(inputs.mu_sigma.clone());
            let joined = tape.concat_last(flat, ms)?;
            let h1 = linear(tape, bp, joined, "fl.dsb.fc1")?;
            let h1 = tape.relu(h1)?;
            let h2 = linear(tape, bp, h1, "fl.dsb.fc2")?;
            let h2 = tape.relu(h2)?;
            let tau_raw = linear(tape, bp, h2, "fl.dsb.tau")?; // (N_w, 1)
            let tau = tape.exp(tau_raw)?;
            let delta = linear(tape, bp, h2, "fl.dsb.delta")?; // (N_w, L)
            let tau3 = tape.reshape(tau, vec![nw, 1, 1])?;
            let delta3 = tape.reshape(delta, vec![nw, 1, l])?;
            (Some((tau, tau3)), Some((delta, delta3)))
        } else {
            (None, None)
        };

        Ok(Factors {
            gamma_q: gamma_q.as_ref().map(|v| v.0),
            gamma_q3: gamma_q.map(|v| v.1),
            gamma_k: gamma_k.as_ref().map(|v| v.0),
            gamma_k3: gamma_k.map(|v| v.1),
            tau: tau.as_ref().map(|v| v.0),
            tau3: tau.map(|v| v.1),
            delta: delta.as_ref().map(|v| v.0),
            delta3: delta.map(|v| v.1),
        })
    }

    fn encoder_block(
        &self,
        tape: &mut Tape,
        bp: &BoundParams,
        x: TensorId,
        factors: &Factors,
        mode: AttentionMode,
        idx: usize,
    ) -> Result<TensorId> {
        let p = format!("fl.enc{idx}");
        let attn = self.ns_attention(tape, bp, x, x, &format!("{p}.attn"), factors)?;
        let fused = if mode.use_freq {
            self.freq_fuse(tape, bp, attn, &format!("{p}.freq"))?
        } else {
            attn
        };
        let sum = tape.add(x, fused)?;
        let x1 = self.ln(tape, bp, sum, &format!("{p}.ln1"))?;
        let ff = self.ffn(tape, bp, x1, &p)?;
        let sum2 = tape.add(x1, ff)?;
        self.ln(tape, bp, sum2, &format!("{p}.ln2"))
    }

    fn decoder_block(
        &self,
        tape: &mut Tape,
        bp: &BoundParams,
        y: TensorId,
        latent: TensorId,
        factors: &Factors,
        mode: AttentionMode,
        idx: usize,
    ) -> Result<TensorId> {
        let p = format!("fl.dec{idx}");
        let attn = self.ns_attention(tape, bp, y, y, &format!("{p}.self"), factors)?;
        let fused = if mode.use_freq {
            self.freq_fuse(tape, bp, attn, &format!("{p}.freq"))?
        } else {
            attn
        };
        let sum = tape.add(y, fused)?;
        let y1 = self.ln(tape, bp, sum, &format!("{p}.ln1"))?;
        let cross = self.ns_attention(tape, bp, y1, latent, &format!("{p}.cross"), factors)?;
        let sum2 = tape.add(y1, cross)?;
        let y2 = self.ln(tape, bp, sum2, &format!("{p}.ln2"))?;
        let ff = self.ffn(tape, bp, y2, &p)?;
        let sum3 = tape.add(y2, ff)?;
        self.ln(tape, bp, sum3, &format!("{p}.ln3"))
    }

    /// Non-stationary attention:
    /// `Softmax((τ (Q⊙γ_Q)(K⊙γ_K)^T + 1 Δ^T) / sqrt(d_h)) V`.
    fn ns_attention(
        &self,
        tape: &mut Tape,
        bp: &BoundParams,
        q_src: TensorId,
        kv_src: TensorId,
        prefix: &str,
        factors: &Factors,
    ) -> Result<TensorId> {
        let d = self.config.d_e;
        let heads = self.config.n_heads;
        let dh = d / heads;

        let q = linear(tape, bp, q_src, &format!("{prefix}.wq"))?;
        let k = linear(tape, bp, kv_src, &format!("{prefix}.wk"))?;
        let v = linear(tape, bp, kv_src, &format!("{prefix}.wv"))?;

        let (q, k) = match (&factors.gamma_q3, &factors.gamma_k3) {
            (Some(gq), Some(gk)) => (tape.mul(q, *gq)?, tape.mul(k, *gk)?),
            _ => (q, k),
        };

        let mut head_outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                (
                    tape.slice_axis(q, 2, h * dh, dh)?,
                    tape.slice_axis(k, 2, h * dh, dh)?,
                    tape.slice_axis(v, 2, h * dh, dh)?,
                )
            };
            let (_, out) = ns_attention_core(tape, qh, kh, vh, factors.tau3, factors.delta3)?;
            head_outs.push(out);
        }
        let merged = if heads == 1 {
            head_outs[0]
        } else {
            let mut acc = head_outs[0];
            for out in head_outs.iter().skip(1) {
                acc = tape.concat_last(acc, *out)?;
            }
            acc
        };
        linear(tape, bp, merged, &format!("{prefix}.wo"))
    }

    /// Frequency path: per-bin complex multiplicative attention with
    /// magnitude-softmax over bins, fused back by a learned gate:
    /// `out = x + g (irfft(c ⊙ rfft(x)) - x)`.
    fn freq_fuse(
        &self,
        tape: &mut Tape,
        bp: &BoundParams,
        x: TensorId,
        prefix: &str,
    ) -> Result<TensorId> {
        let l = self.window_len();
        let k = self.bins();

        let mag = bp.id(&format!("{prefix}.mag"))?;
        let rot_re = bp.id(&format!("{prefix}.rot_re"))?;
        let rot_im = bp.id(&format!("{prefix}.rot_im"))?;
        let gate = bp.id(&format!("{prefix}.gate"))?;

        // magnitude-softmax scaled so equal logits give identity
        let s = tape.softmax_last(mag)?;
        let s = tape.mul_const(s, k as f64)?;
        // unit complex direction from the rotation pair
        let re2 = tape.mul(rot_re, rot_re)?;
        let im2 = tape.mul(rot_im, rot_im)?;
        let sumsq = tape.add(re2, im2)?;
        let guard = tape.constant(Array::full(&[k], NORM_GUARD));
        let sumsq = tape.add(sumsq, guard)?;
        let norm = tape.sqrt(sumsq)?;
        let u_re = tape.div(rot_re, norm)?;
        let u_im = tape.div(rot_im, norm)?;
        let c_re = tape.mul(s, u_re)?;
        let c_im = tape.mul(s, u_im)?;

        // spectrum over the lag axis
        let xt = tape.transpose_last2(x)?; // (B, d, L)
        let f_re = tape.rfft_re(xt)?;
        let f_im = tape.rfft_im(xt)?;
        let rr = tape.mul(f_re, c_re)?;
        let ii = tape.mul(f_im, c_im)?;
        let ri = tape.mul(f_re, c_im)?;
        let ir = tape.mul(f_im, c_re)?;
        let y_re = tape.sub(rr, ii)?;
        let y_im = tape.add(ri, ir)?;
        let yt = tape.irfft(y_re, y_im, l)?;
        let y = tape.transpose_last2(yt)?;

        // gated residual fusion
        let g = tape.sigmoid(gate)?;
        let diff = tape.sub(y, x)?;
        let scaled = tape.mul(diff, g)?;
        tape.add(x, scaled)
    }

    fn ffn(&self, tape: &mut Tape, bp: &BoundParams, x: TensorId, prefix: &str) -> Result<TensorId> {
        let h = linear(tape, bp, x, &format!("{prefix}.ffn.fc1"))?;
        let h = tape.relu(h)?;
        linear(tape, bp, h, &format!("{prefix}.ffn.fc2"))
    }

    fn ln(&self, tape: &mut Tape, bp: &BoundParams, x: TensorId, prefix: &str) -> Result<TensorId> {
        let g = bp.id(&format!("{prefix}.g"))?;
        let b = bp.id(&format!("{prefix}.b"))?;
        tape.layer_norm(x, g, b, 1e-8)
    }

    /// Convenience inference: runs one forward pass off-tape state and
    /// returns inspectable values.
    pub fn encode_decode(
        &self,
        params: &ParamSet,
        windows: &WindowBatch,
        stats: &NormStats,
        mode: AttentionMode,
    ) -> Result<(LearnerOutput, Option<ProfileVectors>, Option<DeStationaryFactors>)> {
        let inputs = make_inputs(windows, stats, &self.config)?;
        let mut tape = Tape::new();
        let bp = tape.bind_params(params);
        let fwd = self.forward(&mut tape, &bp, &inputs, mode)?;
        let reconstruction_raw = tape.value(fwd.recon_raw).clone();
        let reconstruction = denormalize(&reconstruction_raw, stats)?;
        let output = LearnerOutput {
            reconstruction_raw,
            reconstruction,
            latent: tape.value(fwd.latent).clone(),
        };
        let profile = match (fwd.gamma_q, fwd.gamma_k) {
            (Some(gq), Some(gk)) => Some(ProfileVectors {
                gamma_q: tape.value(gq).clone(),
                gamma_k: tape.value(gk).clone(),
            }),
            _ => None,
        };
        let dsb = match (fwd.tau, fwd.delta) {
            (Some(t), Some(d)) => Some(DeStationaryFactors {
                tau: tape.value(t).clone(),
                delta: tape.value(d).clone(),
            }),
            _ => None,
        };
        Ok((output, profile, dsb))
    }
}

/// Core of Eq.-style non-stationary attention on already-projected
/// (and γ-conditioned) tensors:
/// `Softmax((τ Q K^T + 1 Δ^T) / sqrt(d_h)) V`.
///
/// `tau3` is (B,1,1), `delta3` is (B,1,L); either may be absent, which
/// reduces to standard scaled dot-product attention. Returns the
/// row-stochastic attention matrix and the mixed values.
pub fn ns_attention_core(
    tape: &mut Tape,
    q: TensorId,
    k: TensorId,
    v: TensorId,
    tau3: Option<TensorId>,
    delta3: Option<TensorId>,
) -> Result<(TensorId, TensorId)> {
    let dq = *tape.value(q).shape().last().ok_or_else(|| {
        TtcdError::Shape("attention wants rank >= 1 inputs".into())
    })?;
    let dk = *tape.value(k).shape().last().unwrap_or(&0);
    if dq != dk {
        return Err(TtcdError::Shape(format!(
            "attention d_e mismatch: queries {dq}, keys {dk}"
        )));
    }
    let kt = tape.transpose_last2(k)?;
    let mut scores = tape.matmul(q, kt)?; // (B, L, L)
    if let Some(tau3) = tau3 {
        scores = tape.mul(scores, tau3)?;
    }
    if let Some(delta3) = delta3 {
        scores = tape.add(scores, delta3)?;
    }
    let scores = tape.mul_const(scores, 1.0 / (dq as f64).sqrt())?;
    let attn = tape.softmax_last(scores)?;
    let out = tape.matmul(attn, v)?;
    Ok((attn, out))
}

struct Factors {
    gamma_q: Option<TensorId>,
    gamma_q3: Option<TensorId>,
    gamma_k: Option<TensorId>,
    gamma_k3: Option<TensorId>,
    tau: Option<TensorId>,
    tau3: Option<TensorId>,
    delta: Option<TensorId>,
    delta3: Option<TensorId>,
}

/// Mean squared error over all entries; the reconstruction loss.
pub fn reconstruction_loss(x: &Array, x_hat: &Array) -> Result<f64> {
    if x.shape() != x_hat.shape() {
        return Err(TtcdError::Shape(format!(
            "reconstruction loss shape mismatch: {:?} vs {:?}",
            x.shape(),
            x_hat.shape()
        )));
    }
    if x.is_empty() {
        return Err(TtcdError::Shape("empty reconstruction".into()));
    }
    let sum: f64 = x
        .data()
        .iter()
        .zip(x_hat.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / x.len() as f64)
}

/// Convolutional feature stand-in used by the no-transformer ablation:
/// one convolution block over the lag axis, rescaled by a de-stationary
/// perceptron, no reconstruction path.
#[derive(Debug, Clone)]
pub struct ConvFeatureLearner {
    pub n_vars: usize,
    pub l_max: usize,
}

impl ConvFeatureLearner {
    pub fn new(n_vars: usize, l_max: usize) -> Self {
        Self { n_vars, l_max }
    }

    pub fn init_params(&self, params: &mut ParamSet, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5eed));
        let n = self.n_vars;
        let l = self.l_max + 1;
        params.insert(
            "cfl.conv.w",
            randn(&mut rng, &[DSB_KERNEL, n, n], 1.0 / (n as f64).sqrt()),
        )?;
        params.insert("cfl.conv.b", Array::zeros(&[n]))?;
        let hidden = 32;
        add_linear(params, &mut rng, "cfl.dsp.fc1", 6 * n, hidden)?;
        add_zero_linear(params, "cfl.dsp.tau", hidden, 1)?;
        add_zero_linear(params, "cfl.dsp.delta", hidden, l)?;
        Ok(())
    }

    /// Produces the (B, L, n) rescaled latent fed to the structure learner.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bp: &BoundParams,
        inputs: &LearnerInputs,
    ) -> Result<TensorId> {
        let nw = inputs.norm_windows.shape()[0];
        let l = self.l_max + 1;
        let x = tape.constant(inputs.norm_windows.clone());
        let cw = bp.id("cfl.conv.w")?;
        let cb = bp.id("cfl.conv.b")?;
        let latent = tape.conv1d_same(x, cw, cb)?; // (B, L, n)

        // de-stationary perceptron over raw stats + dataset moments
        let feats = tape.constant(inputs.profile_feats.clone());
        let ms = tape.constant(inputs.mu_sigma.clone());
        let joined = tape.concat_last(feats, ms)?; // (B, 6n)
        let h = linear(tape, bp, joined, "cfl.dsp.fc1")?;
        let h = tape.relu(h)?;
        let tau_raw = linear(tape, bp, h, "cfl.dsp.tau")?;
        let tau = tape.exp(tau_raw)?;
        let tau3 = tape.reshape(tau, vec![nw, 1, 1])?;
        let delta = linear(tape, bp, h, "cfl.dsp.delta")?;
        let delta3 = tape.reshape(delta, vec![nw, l, 1])?;
        let scaled = tape.mul(latent, tau3)?;
        tape.add(scaled, delta3)
    }
}

// ---- parameter helpers ----

fn randn(rng: &mut ChaCha8Rng, shape: &[usize], sd: f64) -> Array {
    let normal = Normal::new(0.0, sd).expect("valid normal");
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    Array::from_vec(shape.to_vec(), data).expect("shape consistent")
}

fn add_linear(
    params: &mut ParamSet,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
) -> Result<()> {
    params.insert(
        &format!("{prefix}.w"),
        randn(rng, &[fan_in, fan_out], 1.0 / (fan_in as f64).sqrt()),
    )?;
    params.insert(&format!("{prefix}.b"), Array::zeros(&[fan_out]))
}

fn add_zero_linear(params: &mut ParamSet, prefix: &str, fan_in: usize, fan_out: usize) -> Result<()> {
    params.insert(&format!("{prefix}.w"), Array::zeros(&[fan_in, fan_out]))?;
    params.insert(&format!("{prefix}.b"), Array::zeros(&[fan_out]))
}

/// `x W + b` where `x` is (..., fan_in).
fn linear(tape: &mut Tape, bp: &BoundParams, x: TensorId, prefix: &str) -> Result<TensorId> {
    let w = bp.id(&format!("{prefix}.w"))?;
    let b = bp.id(&format!("{prefix}.b"))?;
    let y = tape.matmul(x, w)?;
    tape.add(y, b)
}
