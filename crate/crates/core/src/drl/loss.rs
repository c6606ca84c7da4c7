//! The three-term actor-critic loss and its exact gradient.
//!
//! `total = policy + baseline_coeff · baseline − entropy_coeff · entropy`, with
//!
//! - `baseline = ½ Σ (v[n] − V(s[n]))²`
//! - `policy = −Σ log π(a[n]|s[n]) · pg_adv[n]`
//! - `entropy = Σ_n Σ_heads H(π_j(·|s[n]))`
//!
//! V-trace targets `v` and advantages `pg_adv` are constants of the loss:
//! they are computed from the current parameters and not differentiated.

use super::net::{log_softmax, ForwardCache, PolicyParameters};
use super::vtrace::vtrace_targets;
use super::{TrajectorySegment, VtraceConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    pub policy: f64,
    pub baseline: f64,
    pub entropy: f64,
    pub total: f64,
}

/// Frozen V-trace outputs for one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTargets {
    pub vs: Vec<f64>,
    pub pg_advantages: Vec<f64>,
}

fn forward_segment(params: &PolicyParameters, seg: &TrajectorySegment) -> Result<(Vec<ForwardCache>, f64)> {
    seg.validate()?;
    let caches = seg.observations[..seg.len()]
        .iter()
        .map(|o| params.forward_cached(o))
        .collect::<Result<Vec<_>>>()?;
    let bootstrap = if seg.terminal {
        0.0
    } else {
        params.forward(&seg.observations[seg.len()])?.1
    };
    Ok((caches, bootstrap))
}

/// log π(a|s) over the active heads of one step.
fn joint_logprob(cache: &ForwardCache, seg: &TrajectorySegment, n: usize, k: usize) -> f64 {
    let actions = seg.actions[n].choices();
    cache
        .logits
        .chunks_exact(k)
        .enumerate()
        .filter(|(j, _)| seg.active_heads[n][*j])
        .map(|(j, head)| log_softmax(head)[actions[j]])
        .sum()
}

fn targets_from(
    params: &PolicyParameters,
    seg: &TrajectorySegment,
    caches: &[ForwardCache],
    bootstrap: f64,
    cfg: &VtraceConfig,
) -> Result<SegmentTargets> {
    let k = params.num_planes();
    let values: Vec<f64> = caches.iter().map(|c| c.value).collect();
    let log_ratios: Vec<f64> = (0..seg.len())
        .map(|n| {
            if !cfg.vtrace_enabled {
                return 0.0;
            }
            let behavior: f64 = seg.behavior_logprobs[n]
                .iter()
                .zip(&seg.active_heads[n])
                .filter(|(_, &a)| a)
                .map(|(lp, _)| lp)
                .sum();
            joint_logprob(&caches[n], seg, n, k) - behavior
        })
        .collect();
    let out = vtrace_targets(&values, bootstrap, &seg.rewards, &log_ratios, cfg.gamma, cfg.rho_bar, cfg.c_bar)?;
    Ok(SegmentTargets {
        vs: out.vs,
        pg_advantages: out.pg_advantages,
    })
}

/// V-trace targets of `seg` under the current parameters.
pub fn compute_targets(params: &PolicyParameters, seg: &TrajectorySegment, cfg: &VtraceConfig) -> Result<SegmentTargets> {
    let (caches, bootstrap) = forward_segment(params, seg)?;
    targets_from(params, seg, &caches, bootstrap, cfg)
}

fn accumulate(
    params: &PolicyParameters,
    seg: &TrajectorySegment,
    caches: &[ForwardCache],
    targets: &SegmentTargets,
    cfg: &VtraceConfig,
    terms: &mut LossTerms,
    grad: Option<&mut [f64]>,
) -> Result<()> {
    if targets.vs.len() != seg.len() || targets.pg_advantages.len() != seg.len() {
        return Err(Error::Shape("targets do not match segment length".into()));
    }
    let k = params.num_planes();
    let mut grad = grad;
    let mut dlogits = vec![0.0; params.num_ues() * k];
    for (n, cache) in caches.iter().enumerate() {
        let adv = targets.pg_advantages[n];
        let err = targets.vs[n] - cache.value;
        terms.baseline += 0.5 * err * err;
        dlogits.iter_mut().for_each(|g| *g = 0.0);
        let actions = seg.actions[n].choices();
        for (j, head) in cache.logits.chunks_exact(k).enumerate() {
            if !seg.active_heads[n][j] {
                continue;
            }
            let lsm = log_softmax(head);
            let entropy: f64 = -lsm.iter().map(|l| l.exp() * l).sum::<f64>();
            terms.policy -= lsm[actions[j]] * adv;
            terms.entropy += entropy;
            let dh = &mut dlogits[j * k..(j + 1) * k];
            for (i, l) in lsm.iter().enumerate() {
                let p = l.exp();
                let indicator = if i == actions[j] { 1.0 } else { 0.0 };
                // d(−adv · log p_a)/dz_i = −adv (1[i=a] − p_i)
                // d(−c_H · H)/dz_i = c_H · p_i (log p_i + H)
                dh[i] = -adv * (indicator - p) + cfg.entropy_coeff * p * (l + entropy);
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            params.backward(cache, &dlogits, -cfg.baseline_coeff * err, g);
        }
    }
    Ok(())
}

fn finish(mut terms: LossTerms, cfg: &VtraceConfig) -> Result<LossTerms> {
    terms.total = terms.policy + cfg.baseline_coeff * terms.baseline - cfg.entropy_coeff * terms.entropy;
    if !terms.total.is_finite() {
        return Err(Error::NonFinite(format!("loss is {}", terms.total)));
    }
    Ok(terms)
}

/// Loss and gradient with externally supplied (frozen) targets.
pub fn loss_with_targets(
    params: &PolicyParameters,
    batch: &[TrajectorySegment],
    targets: &[SegmentTargets],
    cfg: &VtraceConfig,
) -> Result<(LossTerms, Vec<f64>)> {
    if batch.len() != targets.len() {
        return Err(Error::Shape(format!("{} segments but {} target sets", batch.len(), targets.len())));
    }
    let mut terms = LossTerms::default();
    let mut grad = vec![0.0; params.len()];
    for (seg, tgt) in batch.iter().zip(targets) {
        let (caches, _) = forward_segment(params, seg)?;
        accumulate(params, seg, &caches, tgt, cfg, &mut terms, Some(&mut grad))?;
    }
    Ok((finish(terms, cfg)?, grad))
}

/// Loss value only, with frozen targets.
pub fn loss_value(
    params: &PolicyParameters,
    batch: &[TrajectorySegment],
    targets: &[SegmentTargets],
    cfg: &VtraceConfig,
) -> Result<LossTerms> {
    let mut terms = LossTerms::default();
    for (seg, tgt) in batch.iter().zip(targets) {
        let (caches, _) = forward_segment(params, seg)?;
        accumulate(params, seg, &caches, tgt, cfg, &mut terms, None)?;
    }
    finish(terms, cfg)
}

/// Computes V-trace targets under `params`, then the loss and its gradient.
pub fn loss_and_gradient(
    params: &PolicyParameters,
    batch: &[TrajectorySegment],
    cfg: &VtraceConfig,
) -> Result<(LossTerms, Vec<f64>)> {
    let mut terms = LossTerms::default();
    let mut grad = vec![0.0; params.len()];
    for seg in batch {
        let (caches, bootstrap) = forward_segment(params, seg)?;
        let tgt = targets_from(params, seg, &caches, bootstrap, cfg)?;
        accumulate(params, seg, &caches, &tgt, cfg, &mut terms, Some(&mut grad))?;
    }
    let terms = finish(terms, cfg)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok((terms, grad))
}
