//! HO decision policies: A3-triggered conventional HO, a uniform random
//! heuristic, and the learned DHO policy.
//!
//! Every agent emits action 0 for UEs that already completed HO.

use std::sync::Arc;

use rand::Rng;

use crate::drl::net::{log_softmax, PolicyParameters};
use crate::env::{ActionMatrix, HandoverEnv};
use crate::error::{Error, Result};
use crate::link::{a3_event, MeasurementState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecisionMode {
    #[default]
    Sample,
    Greedy,
}

impl DecisionMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sample" => Some(DecisionMode::Sample),
            "greedy" => Some(DecisionMode::Greedy),
            _ => None,
        }
    }
}

/// Conventional HO: a UE requests HO once A3 has held against some target
/// for `consecutive_slots` slots in a row, picking the target with the best
/// L3 RSRP (lowest plane index on ties). It keeps requesting every slot while
/// the condition holds.
///
/// `counters` carries the per-UE count of consecutive A3 slots between calls.
pub fn conventional_decide(
    measurements: &MeasurementState,
    accessed: &[bool],
    offset_db: f64,
    counters: &mut [u32],
    consecutive_slots: u32,
) -> ActionMatrix {
    let planes = measurements.num_planes();
    let mut choices = vec![0; accessed.len()];
    for (j, &done) in accessed.iter().enumerate() {
        if done {
            counters[j] = 0;
            continue;
        }
        let serving = measurements.l3(j, 0);
        let triggered = (1..planes).any(|k| a3_event(serving, measurements.l3(j, k), offset_db));
        counters[j] = if triggered { counters[j] + 1 } else { 0 };
        if counters[j] >= consecutive_slots {
            let mut best = 1;
            for k in 2..planes {
                if measurements.l3(j, k) > measurements.l3(j, best) {
                    best = k;
                }
            }
            choices[j] = best;
        }
    }
    ActionMatrix::new(choices, planes).expect("targets are below the plane count")
}

/// Uniform choice over `0..K` for every UE that still needs HO.
pub fn random_decide<R: Rng + ?Sized>(rng: &mut R, accessed: &[bool], num_planes: usize) -> ActionMatrix {
    let choices = accessed
        .iter()
        .map(|&done| if done { 0 } else { rng.random_range(0..num_planes) })
        .collect();
    ActionMatrix::new(choices, num_planes).expect("sampled inside range")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DhoDecision {
    pub action: ActionMatrix,
    /// log π(a_j | s) per UE head; 0 for inactive heads.
    pub head_logprobs: Vec<f64>,
    /// Heads that actually decided (UE not yet accessed).
    pub active: Vec<bool>,
}

impl DhoDecision {
    /// Joint log-probability of the whole action matrix.
    pub fn logprob(&self) -> f64 {
        self.head_logprobs.iter().sum()
    }
}

/// One forward pass of the policy network followed by per-UE categorical
/// selection. Heads of accessed UEs are pinned to 0 and carry no probability
/// mass in the returned log-probabilities.
pub fn dho_decide<R: Rng + ?Sized>(
    params: &PolicyParameters,
    observation: &[f64],
    accessed: &[bool],
    rng: &mut R,
    mode: DecisionMode,
) -> Result<DhoDecision> {
    if accessed.len() != params.num_ues() {
        return Err(Error::Shape(format!(
            "{} accessed flags for a {}-UE policy",
            accessed.len(),
            params.num_ues()
        )));
    }
    let (logits, _) = params.forward(observation)?;
    let k = params.num_planes();
    let mut choices = Vec::with_capacity(accessed.len());
    let mut head_logprobs = Vec::with_capacity(accessed.len());
    for (head, &done) in logits.chunks_exact(k).zip(accessed) {
        if done {
            choices.push(0);
            head_logprobs.push(0.0);
            continue;
        }
        let lsm = log_softmax(head);
        let a = match mode {
            DecisionMode::Greedy => argmax(&lsm),
            DecisionMode::Sample => sample_categorical(&lsm, rng),
        };
        choices.push(a);
        head_logprobs.push(lsm[a]);
    }
    Ok(DhoDecision {
        action: ActionMatrix::new(choices, k)?,
        head_logprobs,
        active: accessed.iter().map(|&d| !d).collect(),
    })
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn sample_categorical<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    log_probs.len() - 1
}

#[derive(Debug, Clone)]
pub enum AgentKind {
    Conventional,
    Random,
    Dho {
        params: Arc<PolicyParameters>,
        mode: DecisionMode,
    },
}

impl AgentKind {
    pub fn name(&self) -> &'static str {
        match self {
            AgentKind::Conventional => "conventional",
            AgentKind::Random => "random",
            AgentKind::Dho { .. } => "dho",
        }
    }
}

/// An agent bound to one episode at a time.
#[derive(Debug, Clone)]
pub struct Agent {
    kind: AgentKind,
    counters: Vec<u32>,
}

impl Agent {
    pub fn new(kind: AgentKind) -> Self {
        Agent {
            kind,
            counters: Vec::new(),
        }
    }

    pub fn kind(&self) -> &AgentKind {
        &self.kind
    }

    pub fn begin_episode(&mut self, num_ues: usize) {
        self.counters = vec![0; num_ues];
    }

    pub fn decide<R: Rng + ?Sized>(&mut self, env: &HandoverEnv, observation: &[f64], rng: &mut R) -> Result<ActionMatrix> {
        let cfg = env.config();
        if self.counters.len() != cfg.num_ues {
            self.begin_episode(cfg.num_ues);
        }
        match &self.kind {
            AgentKind::Conventional => Ok(conventional_decide(
                env.measurements(),
                env.accessed(),
                cfg.measurement.a3_offset_db,
                &mut self.counters,
                cfg.measurement.consecutive_slots_to_trigger,
            )),
            AgentKind::Random => Ok(random_decide(rng, env.accessed(), cfg.num_planes)),
            AgentKind::Dho { params, mode } => {
                Ok(dho_decide(params, observation, env.accessed(), rng, *mode)?.action)
            }
        }
    }
}
