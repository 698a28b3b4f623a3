//! Joint optimization of the reconstruction, target-estimation,
//! acyclicity and sparsity terms with an augmented-Lagrangian schedule
//! for the acyclicity constraint, plus the ablation-variant runner.
//!
//! Outer loop: minimize the composite objective for a fixed number of
//! epochs with Adam, then dual-update the multiplier `α ← α + ρ h` and
//! grow the penalty `ρ ← 10ρ` (capped) while `h` is not shrinking fast
//! enough; stop once `h` falls below tolerance or the round budget is
//! exhausted.

pub mod adam;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{compute_norm, make_windows, normalize, TemporalAdjacency, TemporalGraph, TimeSeriesDataset};
use crate::error::{Result, TtcdError};
use crate::learner::{make_inputs, AttentionMode, ConvFeatureLearner, FeatureLearner, LearnerConfig, LearnerInputs};
use crate::numeric::tape::{BoundParams, ParamSet, Tape, TensorId};
use crate::numeric::Array;
use crate::structure::{acyclicity_value, threshold_graph, StructureKind, StructureLearner, ThresholdSpec};

use adam::Adam;

/// The thresholds shipped with the method; the CLI maps datasets onto
/// them and `--threshold` overrides.
pub const THRESHOLD_SET: [f64; 4] = [0.002, 0.004, 0.007, 0.17];

/// Training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HyperParams {
    /// Sparsity weight λ.
    pub lambda1: f64,
    /// Initial Lagrange multiplier α.
    pub alpha: f64,
    /// Initial penalty ρ.
    pub rho: f64,
    pub lr: f64,
    /// Epochs per augmented-Lagrangian round.
    pub epochs: usize,
    pub max_rounds: usize,
    /// Convergence tolerance on h(W^t).
    pub h_tol: f64,
    /// Pruning threshold ω.
    pub omega: f64,
    pub seed: u64,
    pub d_e: usize,
    /// Hidden channels of each causal layer.
    pub hidden_channels: usize,
    /// Warm-start epochs with the sparsity term disabled, run before the
    /// augmented-Lagrangian rounds. Lets the per-target layers learn the
    /// nonlinear parent map before pruning starts; the objective the
    /// rounds then minimize is the full composite.
    pub warmup_epochs: usize,
    /// Learning rate of the augmented-Lagrangian rounds; `None` reuses
    /// `lr`. A gentler rate keeps the warm-started structure while the
    /// sparsity term prunes.
    pub prune_lr: Option<f64>,
    /// Train reconstruction first, then the full objective (diagnostics).
    pub two_stage: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lambda1: 0.9,
            alpha: 1.0,
            rho: 1.0,
            lr: 1e-3,
            epochs: 100,
            max_rounds: 10,
            h_tol: 1e-8,
            omega: 0.17,
            seed: 0,
            d_e: 16,
            hidden_channels: 4,
            warmup_epochs: 300,
            prune_lr: None,
            two_stage: false,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if self.rho <= 0.0 || self.alpha < 0.0 {
            return Err(TtcdError::Config(
                "need rho > 0 and alpha >= 0".into(),
            ));
        }
        if self.lambda1 < 0.0 || self.lr <= 0.0 || self.h_tol <= 0.0 {
            return Err(TtcdError::Config(
                "need lambda1 >= 0, lr > 0, h_tol > 0".into(),
            ));
        }
        if self.epochs == 0 || self.max_rounds == 0 {
            return Err(TtcdError::Config("need epochs >= 1 and rounds >= 1".into()));
        }
        if !(self.omega >= 0.0) {
            return Err(TtcdError::Config("need omega >= 0".into()));
        }
        Ok(())
    }
}

/// Model/objective variants exercised by the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariantId {
    Full,
    NoDsb,
    NoFrequency,
    NormalTransformer,
    CausalConv1d,
    NoTransformer,
}

impl VariantId {
    pub const ALL: [VariantId; 6] = [
        VariantId::Full,
        VariantId::NoDsb,
        VariantId::NoFrequency,
        VariantId::NormalTransformer,
        VariantId::CausalConv1d,
        VariantId::NoTransformer,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(VariantId::Full),
            "no-dsb" => Ok(VariantId::NoDsb),
            "no-frequency" => Ok(VariantId::NoFrequency),
            "normal-transformer" => Ok(VariantId::NormalTransformer),
            "causal-conv1d" => Ok(VariantId::CausalConv1d),
            "no-transformer" => Ok(VariantId::NoTransformer),
            other => Err(TtcdError::Config(format!("unknown variant '{other}'"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            VariantId::Full => "full",
            VariantId::NoDsb => "no-dsb",
            VariantId::NoFrequency => "no-frequency",
            VariantId::NormalTransformer => "normal-transformer",
            VariantId::CausalConv1d => "causal-conv1d",
            VariantId::NoTransformer => "no-transformer",
        }
    }

    fn attention_mode(&self) -> AttentionMode {
        match self {
            VariantId::Full | VariantId::CausalConv1d => AttentionMode::FULL,
            VariantId::NoDsb => AttentionMode::NO_DSB,
            VariantId::NoFrequency => AttentionMode::NO_FREQUENCY,
            VariantId::NormalTransformer => AttentionMode::PLAIN,
            VariantId::NoTransformer => AttentionMode::PLAIN, // unused
        }
    }

    fn structure_kind(&self) -> StructureKind {
        match self {
            VariantId::CausalConv1d => StructureKind::Conv1d,
            _ => StructureKind::FullGrid,
        }
    }

    fn uses_transformer(&self) -> bool {
        !matches!(self, VariantId::NoTransformer)
    }
}

/// Scalar values of the objective terms.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    /// Reconstruction loss; absent for the no-transformer variant.
    pub l_r: Option<f64>,
    pub l_tve: f64,
    pub h: f64,
    /// L1 norm of the adjacency (before the λ weight).
    pub w_l1: f64,
}

/// `L_r + L_tve + (ρ/2) h^2 + α h + λ ||W||_1`, with each term checked
/// finite (the error names the offending term).
pub fn total_objective(terms: &ObjectiveTerms, alpha: f64, rho: f64, lambda1: f64) -> Result<f64> {
    if let Some(l_r) = terms.l_r {
        if !l_r.is_finite() {
            return Err(TtcdError::NonFinite("reconstruction loss".into()));
        }
    }
    if !terms.l_tve.is_finite() {
        return Err(TtcdError::NonFinite("target estimation loss".into()));
    }
    if !terms.h.is_finite() {
        return Err(TtcdError::NonFinite("acyclicity value".into()));
    }
    if !terms.w_l1.is_finite() {
        return Err(TtcdError::NonFinite("sparsity term".into()));
    }
    Ok(terms.l_r.unwrap_or(0.0)
        + terms.l_tve
        + 0.5 * rho * terms.h * terms.h
        + alpha * terms.h
        + lambda1 * terms.w_l1)
}

/// Per-epoch traces of the loss terms.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LossTraces {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_r: Option<Vec<f64>>,
    pub l_tve: Vec<f64>,
    pub h: Vec<f64>,
    pub l_s: Vec<f64>,
}

impl LossTraces {
    fn push(&mut self, terms: &ObjectiveTerms, lambda1: f64) {
        if let Some(l_r) = terms.l_r {
            self.l_r.get_or_insert_with(Vec::new).push(l_r);
        }
        self.l_tve.push(terms.l_tve);
        self.h.push(terms.h);
        self.l_s.push(lambda1 * terms.w_l1);
    }
}

/// Trainable state after a run: parameters plus augmented-Lagrangian
/// internals.
pub struct TrainState {
    pub params: ParamSet,
    pub alpha: f64,
    pub rho: f64,
}

/// Serializable summary of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub variant: String,
    pub seed: u64,
    pub hyperparams: HyperParams,
    pub rounds: usize,
    pub epochs_run: usize,
    pub final_h: f64,
    pub converged: bool,
    pub wall_clock_secs: f64,
    pub traces: LossTraces,
}

/// Everything a training run produces.
pub struct TrainOutcome {
    pub state: TrainState,
    pub report: TrainReport,
    pub adjacency: TemporalAdjacency,
    pub graph: TemporalGraph,
}

struct Models {
    feature: Option<FeatureLearner>,
    conv: Option<ConvFeatureLearner>,
    structure: StructureLearner,
    mode: AttentionMode,
}

impl Models {
    fn build(n_vars: usize, l_max: usize, hp: &HyperParams, variant: VariantId) -> Result<Self> {
        let structure = StructureLearner::new(
            n_vars,
            l_max,
            hp.hidden_channels,
            variant.structure_kind(),
        )?;
        if variant.uses_transformer() {
            let config = LearnerConfig {
                d_e: hp.d_e,
                ..LearnerConfig::default()
            };
            Ok(Models {
                feature: Some(FeatureLearner::new(n_vars, l_max, config)?),
                conv: None,
                structure,
                mode: variant.attention_mode(),
            })
        } else {
            Ok(Models {
                feature: None,
                conv: Some(ConvFeatureLearner::new(n_vars, l_max)),
                structure,
                mode: variant.attention_mode(),
            })
        }
    }

    fn init_params(&self, hp: &HyperParams) -> Result<ParamSet> {
        let mut params = ParamSet::new();
        if let Some(fl) = &self.feature {
            fl.init_params(&mut params, hp.seed)?;
        }
        if let Some(cfl) = &self.conv {
            cfl.init_params(&mut params, hp.seed)?;
        }
        self.structure.init_params(&mut params, hp.seed)?;
        Ok(params)
    }

    /// Records the full objective on a tape; returns the loss id and the
    /// scalar terms of this step.
    fn objective(
        &self,
        tape: &mut Tape,
        bp: &BoundParams,
        inputs: &LearnerInputs,
        targets: &Array,
        alpha: f64,
        rho: f64,
        lambda1: f64,
        reconstruction_only: bool,
    ) -> Result<(TensorId, ObjectiveTerms)> {
        // Loss normalization follows the source formulation: mean over
        // windows, sum within a window (L_r) / over variables (L_tve).
        // The sparsity weight is calibrated against these scales.
        let window_entries = (inputs.norm_windows.shape()[1] * inputs.norm_windows.shape()[2]) as f64;
        let n_vars = inputs.norm_windows.shape()[2] as f64;

        let (distilled, l_r_id) = if let Some(fl) = &self.feature {
            let fwd = fl.forward(tape, bp, inputs, self.mode)?;
            let x = tape.constant(inputs.norm_windows.clone());
            let diff = tape.sub(fwd.recon_raw, x)?;
            let sq = tape.mul(diff, diff)?;
            let mse = tape.mean_all(sq)?;
            let l_r = tape.mul_const(mse, window_entries)?;
            (fwd.recon_raw, Some(l_r))
        } else {
            let cfl = self.conv.as_ref().expect("one learner exists");
            (cfl.forward(tape, bp, inputs)?, None)
        };

        if reconstruction_only {
            let l_r = l_r_id.ok_or_else(|| {
                TtcdError::Config("reconstruction stage needs the transformer variant".into())
            })?;
            let l_r_val = tape.value(l_r).as_scalar()?;
            let terms = ObjectiveTerms {
                l_r: Some(l_r_val),
                l_tve: 0.0,
                h: 0.0,
                w_l1: 0.0,
            };
            total_objective(&terms, alpha, rho, lambda1)?;
            return Ok((l_r, terms));
        }

        let sfwd = self.structure.forward(tape, bp, distilled)?;
        let t_id = tape.constant(targets.clone());
        let diff = tape.sub(sfwd.predictions, t_id)?;
        let sq = tape.mul(diff, diff)?;
        let mse = tape.mean_all(sq)?;
        let l_tve = tape.mul_const(mse, n_vars)?;
        let h = tape.trace_expm_gap(sfwd.contemporaneous)?;
        let w_l1 = tape.sum_all(sfwd.adjacency)?; // entries are norms, >= 0

        // compose: L_r + L_tve + (rho/2) h^2 + alpha h + lambda ||W||_1
        let h2 = tape.mul(h, h)?;
        let pen = tape.mul_const(h2, 0.5 * rho)?;
        let dual = tape.mul_const(h, alpha)?;
        let spars = tape.mul_const(w_l1, lambda1)?;
        let mut loss = l_tve;
        if let Some(l_r) = l_r_id {
            loss = tape.add(loss, l_r)?;
        }
        let loss = tape.add(loss, pen)?;
        let loss = tape.add(loss, dual)?;
        let loss = tape.add(loss, spars)?;

        let terms = ObjectiveTerms {
            l_r: match l_r_id {
                Some(id) => Some(tape.value(id).as_scalar()?),
                None => None,
            },
            l_tve: tape.value(l_tve).as_scalar()?,
            h: tape.value(h).as_scalar()?,
            w_l1: tape.value(w_l1).as_scalar()?,
        };
        // verifies finiteness, names the offending term
        total_objective(&terms, alpha, rho, lambda1)?;
        Ok((loss, terms))
    }
}

/// Records the full training objective for a fixed dataset so external
/// checks (finite-difference gradient validation) can replay it against
/// arbitrary parameter values.
pub struct ObjectiveBuilder {
    models: Models,
    inputs: LearnerInputs,
    targets: Array,
    pub alpha: f64,
    pub rho: f64,
    pub lambda1: f64,
}

impl ObjectiveBuilder {
    /// Builds the objective context and freshly initialized parameters.
    pub fn new(
        dataset: &TimeSeriesDataset,
        l_max: usize,
        hp: &HyperParams,
        variant: VariantId,
    ) -> Result<(Self, ParamSet)> {
        let models = Models::build(dataset.n_vars(), l_max, hp, variant)?;
        let params = models.init_params(hp)?;
        let stats = compute_norm(dataset)?;
        let windows = make_windows(dataset, l_max)?;
        let learner_config = models
            .feature
            .as_ref()
            .map(|f| f.config.clone())
            .unwrap_or_default();
        let inputs = make_inputs(&windows, &stats, &learner_config)?;
        let targets = current_time_targets(&windows, &stats)?;
        Ok((
            Self {
                models,
                inputs,
                targets,
                alpha: hp.alpha,
                rho: hp.rho,
                lambda1: hp.lambda1,
            },
            params,
        ))
    }

    /// Records the composite objective on `tape` and returns the scalar id.
    pub fn record(&self, tape: &mut Tape, bp: &BoundParams) -> Result<TensorId> {
        let (loss, _) = self.models.objective(
            tape,
            bp,
            &self.inputs,
            &self.targets,
            self.alpha,
            self.rho,
            self.lambda1,
            false,
        )?;
        Ok(loss)
    }
}

/// Normalized current-time values of every window, (N_w, n).
fn current_time_targets(windows: &crate::data::WindowBatch, stats: &crate::data::NormStats) -> Result<Array> {
    let normed = normalize(&windows.windows, stats)?;
    let (nw, l, n) = (windows.count(), windows.window_len(), windows.n_vars());
    let mut out = vec![0.0; nw * n];
    for w in 0..nw {
        let src = (w * l + (l - 1)) * n;
        out[w * n..(w + 1) * n].copy_from_slice(&normed.data()[src..src + n]);
    }
    Array::from_vec(vec![nw, n], out)
}

/// Trains the selected variant on a dataset and thresholds the learned
/// adjacency into a graph.
pub fn train(
    dataset: &TimeSeriesDataset,
    l_max: usize,
    hp: &HyperParams,
    variant: VariantId,
) -> Result<TrainOutcome> {
    hp.validate()?;
    if dataset.len() < l_max + 2 {
        return Err(TtcdError::Config(format!(
            "training needs T >= l_max + 2 (T = {}, l_max = {l_max})",
            dataset.len()
        )));
    }
    let start = Instant::now();
    let n_vars = dataset.n_vars();
    let models = Models::build(n_vars, l_max, hp, variant)?;
    let mut params = models.init_params(hp)?;

    let stats = compute_norm(dataset)?;
    let windows = make_windows(dataset, l_max)?;
    let learner_config = models
        .feature
        .as_ref()
        .map(|f| f.config.clone())
        .unwrap_or_default();
    let inputs = make_inputs(&windows, &stats, &learner_config)?;
    let norm_last = current_time_targets(&windows, &stats)?;

    let mut traces = LossTraces::default();
    let mut alpha = hp.alpha;
    let mut rho = hp.rho;
    let mut h_prev = f64::INFINITY;
    let mut epochs_run = 0usize;
    let mut rounds = 0usize;
    let mut converged = false;

    if hp.two_stage && variant.uses_transformer() {
        let mut adam = Adam::new(hp.lr);
        for _ in 0..hp.epochs {
            let mut tape = Tape::new();
            let bp = tape.bind_params(&params);
            let (loss, _) = models.objective(
                &mut tape, &bp, &inputs, &norm_last, alpha, rho, hp.lambda1, true,
            )?;
            let grads = tape.backward(loss)?;
            adam.step(&mut params, &grads)?;
            epochs_run += 1;
        }
    }

    if hp.warmup_epochs > 0 {
        let mut adam = Adam::new(hp.lr);
        for _ in 0..hp.warmup_epochs {
            let mut tape = Tape::new();
            let bp = tape.bind_params(&params);
            let (loss, _) = models.objective(
                &mut tape, &bp, &inputs, &norm_last, alpha, rho, 0.0, false,
            )?;
            let grads = tape.backward(loss)?;
            adam.step(&mut params, &grads)?;
            epochs_run += 1;
        }
    }

    let round_lr = hp.prune_lr.unwrap_or(hp.lr);
    for round in 0..hp.max_rounds {
        rounds = round + 1;
        let mut adam = Adam::new(round_lr);
        for _ in 0..hp.epochs {
            let mut tape = Tape::new();
            let bp = tape.bind_params(&params);
            let (loss, terms) = models.objective(
                &mut tape, &bp, &inputs, &norm_last, alpha, rho, hp.lambda1, false,
            )?;
            traces.push(&terms, hp.lambda1);
            let grads = tape.backward(loss)?;
            adam.step(&mut params, &grads)?;
            epochs_run += 1;
        }
        // adjacency is a pure function of the weights; evaluate h fresh
        let adjacency = models.structure.extract_adjacency(&params)?;
        let h_now = acyclicity_value(&adjacency)?;
        if h_now <= hp.h_tol {
            converged = true;
            break;
        }
        alpha += rho * h_now;
        if h_now > 0.25 * h_prev {
            rho = (rho * 10.0).min(1e10);
        }
        h_prev = h_now;
    }

    let adjacency = models.structure.extract_adjacency(&params)?;
    let final_h = acyclicity_value(&adjacency)?;
    let graph = threshold_graph(&adjacency, dataset.names(), ThresholdSpec::new(hp.omega)?)?;

    let report = TrainReport {
        variant: variant.as_str().to_string(),
        seed: hp.seed,
        hyperparams: hp.clone(),
        rounds,
        epochs_run,
        final_h,
        converged,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        traces,
    };
    Ok(TrainOutcome {
        state: TrainState { params, alpha, rho },
        report,
        adjacency,
        graph,
    })
}

/// Runs a list of variants on the same dataset and seed.
pub fn run_ablation(
    dataset: &TimeSeriesDataset,
    l_max: usize,
    hp: &HyperParams,
    variants: &[VariantId],
) -> Result<Vec<(VariantId, TrainOutcome)>> {
    let mut outcomes = Vec::with_capacity(variants.len());
    for &variant in variants {
        outcomes.push((variant, train(dataset, l_max, hp, variant)?));
    }
    Ok(outcomes)
}
