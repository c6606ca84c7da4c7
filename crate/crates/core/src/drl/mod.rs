//! Actor-learner training of the DHO policy with V-trace off-policy correction.

pub mod checkpoint;
pub mod loss;
pub mod net;
pub mod optim;
pub mod train;
pub mod vtrace;

use crate::env::{ActionMatrix, MetricsRecord};
use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint};
pub use loss::{loss_and_gradient, LossTerms};
pub use net::PolicyParameters;
pub use train::{rollout, train, train_from, CurvePoint, EpisodeStats, TrainingOutcome};
pub use vtrace::{vtrace_targets, VtraceOutput};

#[derive(Debug, Clone, PartialEq)]
pub struct VtraceConfig {
    /// Discount factor γ.
    pub gamma: f64,
    /// Truncation level ρ̄ of the TD-error weights.
    pub rho_bar: f64,
    /// Truncation level c̄ of the trace-cutting weights.
    pub c_bar: f64,
    pub learning_rate: f64,
    pub entropy_coeff: f64,
    pub baseline_coeff: f64,
    /// Transitions per learner update (whole episodes are never split).
    pub batch_size: usize,
    pub actors: usize,
    /// When false, ρ = c = 1 regardless of the behavior policy and actors
    /// are refreshed before every update (the on-policy A3C-style variant).
    pub vtrace_enabled: bool,
    pub hidden: Vec<usize>,
    /// Global gradient-norm clip; `f64::INFINITY` disables it.
    pub max_grad_norm: f64,
}

impl Default for VtraceConfig {
    fn default() -> Self {
        VtraceConfig {
            gamma: 0.95,
            rho_bar: 1.0,
            c_bar: 1.0,
            learning_rate: 3e-4,
            entropy_coeff: 0.01,
            baseline_coeff: 0.5,
            batch_size: 40,
            actors: 1,
            vtrace_enabled: true,
            hidden: vec![128, 128],
            max_grad_norm: 40.0,
        }
    }
}

impl VtraceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("train.gamma", "must lie in [0, 1)"));
        }
        if !(self.c_bar >= 0.0) || !(self.rho_bar >= self.c_bar) {
            return Err(Error::config("train.rho_bar", "truncation levels need rho_bar ≥ c_bar ≥ 0"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        if !(self.entropy_coeff >= 0.0) || !(self.baseline_coeff >= 0.0) {
            return Err(Error::config("train.entropy_coeff", "loss coefficients must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        if self.actors == 0 {
            return Err(Error::config("train.actors", "need at least one actor"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("train.hidden", "need at least one positive layer width"));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(Error::config("train.max_grad_norm", "must be positive"));
        }
        Ok(())
    }
}

/// One episode collected by an actor under its behavior policy μ.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySegment {
    /// `L + 1` observations; the last one follows the final action.
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<ActionMatrix>,
    /// Per-head log μ(a_j | s), 0 for inactive heads.
    pub behavior_logprobs: Vec<Vec<f64>>,
    /// Heads that made a decision (UE not yet accessed) at each step.
    pub active_heads: Vec<Vec<bool>>,
    pub rewards: Vec<f64>,
    /// The episode ended at the last step, so the bootstrap value is 0.
    pub terminal: bool,
    pub metrics: MetricsRecord,
    pub actor: usize,
    pub policy_version: u64,
}

impl TrajectorySegment {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.rewards.len();
        if self.observations.len() != l + 1
            || self.actions.len() != l
            || self.behavior_logprobs.len() != l
            || self.active_heads.len() != l
        {
            return Err(Error::Shape(format!(
                "segment of length {l} has {} observations, {} actions, {} log-prob rows, {} mask rows",
                self.observations.len(),
                self.actions.len(),
                self.behavior_logprobs.len(),
                self.active_heads.len()
            )));
        }
        if self.behavior_logprobs.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("behavior log-probabilities".into()));
        }
        Ok(())
    }
}
