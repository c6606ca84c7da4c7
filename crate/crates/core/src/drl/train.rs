//! Actor-learner loop.
//!
//! Two schedules share the same rollout and update code:
//!
//! - synchronous: every update, the actors roll out the episodes of one batch
//!   with the current parameters (in parallel when `actors > 1`), results are
//!   merged in episode order and the learner updates once. Fully deterministic.
//!   Used whenever `actors == 1` or V-trace is disabled.
//! - asynchronous: actors claim episodes from a shared counter, roll them out
//!   under whichever parameter snapshot was last published and push segments
//!   into a bounded queue; the learner updates as soon as a batch is full and
//!   publishes a new immutable snapshot. V-trace corrects the resulting lag.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::loss_and_gradient;
use super::net::PolicyParameters;
use super::optim::{clip_grad_norm, Adam};
use super::{TrajectorySegment, VtraceConfig};
use crate::agents::{dho_decide, DecisionMode};
use crate::env::{episode_metrics, HandoverEnv, MetricsRecord, ScenarioConfig};
use crate::error::{Error, Result};

const ACTOR_STREAM: u64 = 0x6163_746f_7200_0000;
const INIT_STREAM: u64 = 0x696e_6974;

/// Metrics of one training episode, in the order the learner consumed them.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub episode: usize,
    pub actor: usize,
    pub policy_version: u64,
    pub metrics: MetricsRecord,
}

/// Batch averages recorded after each learner update.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    /// Episodes consumed so far.
    pub episode: usize,
    pub mean_return: f64,
    pub sum_delay: f64,
    pub sum_collision: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub params: PolicyParameters,
    pub episodes: Vec<EpisodeStats>,
    pub curve: Vec<CurvePoint>,
    pub updates: u64,
}

/// Rolls out one full episode (L = N) with `params` as behavior policy.
pub fn rollout<R: Rng + ?Sized>(
    params: &PolicyParameters,
    scenario: &ScenarioConfig,
    env_seed: u64,
    rng: &mut R,
    mode: DecisionMode,
) -> Result<TrajectorySegment> {
    let (mut env, mut obs) = HandoverEnv::reset(scenario, env_seed)?;
    let n = scenario.horizon;
    let mut seg = TrajectorySegment {
        observations: Vec::with_capacity(n + 1),
        actions: Vec::with_capacity(n),
        behavior_logprobs: Vec::with_capacity(n),
        active_heads: Vec::with_capacity(n),
        rewards: Vec::with_capacity(n),
        terminal: true,
        metrics: MetricsRecord::default(),
        actor: 0,
        policy_version: 0,
    };
    let mut outcomes = Vec::with_capacity(n);
    while !env.is_done() {
        let d = dho_decide(params, &obs, env.accessed(), rng, mode)?;
        let (next, out) = env.step(&d.action)?;
        seg.observations.push(std::mem::replace(&mut obs, next));
        seg.actions.push(d.action);
        seg.behavior_logprobs.push(d.head_logprobs);
        seg.active_heads.push(d.active);
        seg.rewards.push(out.reward);
        outcomes.push(out);
    }
    seg.observations.push(obs);
    seg.metrics = episode_metrics(&outcomes, &env)?;
    Ok(seg)
}

fn actor_rng(seed: u64, actor: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ ACTOR_STREAM ^ (actor as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

struct Learner {
    params: PolicyParameters,
    opt: Adam,
    cfg: VtraceConfig,
    version: u64,
    consumed: usize,
    episodes: Vec<EpisodeStats>,
    curve: Vec<CurvePoint>,
}

impl Learner {
    fn update(&mut self, batch: &[TrajectorySegment]) -> Result<()> {
        let (_, mut grad) = loss_and_gradient(&self.params, batch, &self.cfg)?;
        clip_grad_norm(&mut grad, self.cfg.max_grad_norm);
        self.opt.step(self.params.as_mut_slice(), &grad)?;
        if !self.params.is_finite() {
            return Err(Error::NonFinite(format!("parameters after update {}", self.version + 1)));
        }
        self.version += 1;
        let count = batch.len() as f64;
        for seg in batch {
            self.episodes.push(EpisodeStats {
                episode: self.consumed,
                actor: seg.actor,
                policy_version: seg.policy_version,
                metrics: seg.metrics,
            });
            self.consumed += 1;
        }
        self.curve.push(CurvePoint {
            episode: self.consumed,
            mean_return: batch.iter().map(|s| s.metrics.episode_return).sum::<f64>() / count,
            sum_delay: batch.iter().map(|s| s.metrics.sum_delay).sum::<f64>() / count,
            sum_collision: batch.iter().map(|s| s.metrics.sum_collision()).sum::<f64>() / count,
        });
        Ok(())
    }

    fn finish(self) -> TrainingOutcome {
        TrainingOutcome {
            params: self.params,
            episodes: self.episodes,
            curve: self.curve,
            updates: self.version,
        }
    }
}

/// Trains a DHO policy from a seeded random initialization for `episodes` episodes.
pub fn train(scenario: &ScenarioConfig, cfg: &VtraceConfig, episodes: usize, seed: u64) -> Result<TrainingOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ INIT_STREAM);
    let init = PolicyParameters::init(scenario.obs_len(), scenario.num_ues, scenario.num_planes, &cfg.hidden, &mut rng)?;
    train_from(init, scenario, cfg, episodes, seed)
}

/// Continues training from the given parameters.
pub fn train_from(
    init: PolicyParameters,
    scenario: &ScenarioConfig,
    cfg: &VtraceConfig,
    episodes: usize,
    seed: u64,
) -> Result<TrainingOutcome> {
    scenario.validate()?;
    cfg.validate()?;
    if (init.obs_dim(), init.num_ues(), init.num_planes()) != (scenario.obs_len(), scenario.num_ues, scenario.num_planes) {
        return Err(Error::Shape("initial parameters do not fit the scenario".into()));
    }
    let learner = Learner {
        opt: Adam::new(init.len(), cfg.learning_rate),
        params: init,
        cfg: cfg.clone(),
        version: 0,
        consumed: 0,
        episodes: Vec::with_capacity(episodes),
        curve: Vec::new(),
    };
    if cfg.actors > 1 && cfg.vtrace_enabled {
        train_async(learner, scenario, episodes, seed)
    } else {
        train_sync(learner, scenario, episodes, seed)
    }
}

fn episodes_per_batch(cfg: &VtraceConfig, horizon: usize) -> usize {
    cfg.batch_size.div_ceil(horizon).max(1)
}

fn actor_episode(
    params: &PolicyParameters,
    scenario: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
    actor: usize,
    version: u64,
) -> Result<TrajectorySegment> {
    let env_seed = rng.random::<u64>();
    let mut seg = rollout(params, scenario, env_seed, rng, DecisionMode::Sample)?;
    seg.actor = actor;
    seg.policy_version = version;
    Ok(seg)
}

fn train_sync(mut learner: Learner, scenario: &ScenarioConfig, episodes: usize, seed: u64) -> Result<TrainingOutcome> {
    let actors = learner.cfg.actors;
    let per_batch = episodes_per_batch(&learner.cfg, scenario.horizon);
    let mut rngs: Vec<ChaCha8Rng> = (0..actors).map(|a| actor_rng(seed, a)).collect();
    let mut done = 0;
    while done < episodes {
        let count = per_batch.min(episodes - done);
        let params = &learner.params;
        let version = learner.version;
        // episode i of the batch goes to actor i % actors
        let mut per_actor: Vec<Vec<TrajectorySegment>> = if actors == 1 {
            let mut v = Vec::with_capacity(count);
            for _ in 0..count {
                v.push(actor_episode(params, scenario, &mut rngs[0], 0, version)?);
            }
            vec![v]
        } else {
            thread::scope(|s| {
                let handles: Vec<_> = rngs
                    .iter_mut()
                    .enumerate()
                    .map(|(a, rng)| {
                        s.spawn(move || {
                            (a..count)
                                .step_by(actors)
                                .map(|_| actor_episode(params, scenario, rng, a, version))
                                .collect::<Result<Vec<_>>>()
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().map_err(|_| Error::State("actor thread panicked".into()))?)
                    .collect::<Result<Vec<_>>>()
            })?
        };
        let mut batch = Vec::with_capacity(count);
        let mut iters: Vec<_> = per_actor.iter_mut().map(|v| v.drain(..)).collect();
        for i in 0..count {
            batch.push(iters[i % actors].next().expect("actor produced its share"));
        }
        drop(iters);
        learner.update(&batch)?;
        done += count;
    }
    Ok(learner.finish())
}

fn train_async(mut learner: Learner, scenario: &ScenarioConfig, episodes: usize, seed: u64) -> Result<TrainingOutcome> {
    let actors = learner.cfg.actors;
    let batch_transitions = learner.cfg.batch_size.max(1);
    let published = RwLock::new(Arc::new((0u64, learner.params.clone())));
    let claimed = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = crossbeam_channel::bounded::<Result<TrajectorySegment>>(2 * actors);

    let result = thread::scope(|s| {
        for a in 0..actors {
            let tx = tx.clone();
            let (published, claimed, stop) = (&published, &claimed, &stop);
            s.spawn(move || {
                let mut rng = actor_rng(seed, a);
                while !stop.load(Ordering::Relaxed) && claimed.fetch_add(1, Ordering::SeqCst) < episodes {
                    let snapshot = Arc::clone(&published.read().expect("snapshot lock poisoned"));
                    let seg = actor_episode(&snapshot.1, scenario, &mut rng, a, snapshot.0);
                    let failed = seg.is_err();
                    if tx.send(seg).is_err() || failed {
                        break;
                    }
                }
            });
        }
        drop(tx);

        let mut batch = Vec::new();
        let mut transitions = 0;
        let mut received = 0;
        let run = (|| -> Result<()> {
            while received < episodes {
                let seg = rx
                    .recv()
                    .map_err(|_| Error::State("actors stopped before all episodes were produced".into()))??;
                received += 1;
                transitions += seg.len();
                batch.push(seg);
                if transitions >= batch_transitions || received == episodes {
                    learner.update(&batch)?;
                    batch.clear();
                    transitions = 0;
                    let snap = Arc::new((learner.version, learner.params.clone()));
                    *published.write().expect("snapshot lock poisoned") = snap;
                }
            }
            Ok(())
        })();
        stop.store(true, Ordering::Relaxed);
        // unblock actors waiting on a full queue
        drop(rx);
        run
    });
    result?;
    Ok(learner.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (ScenarioConfig, VtraceConfig) {
        let mut sc = ScenarioConfig::default();
        sc.num_ues = 4;
        sc.rb_total = vec![4, 4];
        sc.preambles = 20;
        sc.horizon = 8;
        let cfg = VtraceConfig {
            hidden: vec![16],
            batch_size: 16,
            ..VtraceConfig::default()
        };
        (sc, cfg)
    }

    #[test]
    fn rollout_shapes() {
        let (sc, cfg) = small();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = PolicyParameters::init(sc.obs_len(), 4, 3, &cfg.hidden, &mut rng).unwrap();
        let seg = rollout(&p, &sc, 5, &mut rng, DecisionMode::Sample).unwrap();
        seg.validate().unwrap();
        assert_eq!(seg.len(), 8);
        assert!(seg.terminal);
        let ret: f64 = seg.rewards.iter().sum();
        assert_eq!(ret, seg.metrics.episode_return);
        // inactive heads carry zero log-probability
        for (lp, act) in seg.behavior_logprobs.iter().zip(&seg.active_heads) {
            for (l, a) in lp.iter().zip(act) {
                assert!(*a || *l == 0.0);
            }
        }
    }

    #[test]
    fn single_actor_is_bit_identical() {
        let (sc, cfg) = small();
        let a = train(&sc, &cfg, 12, 9).unwrap();
        let b = train(&sc, &cfg, 12, 9).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.params, b.params);
        assert_eq!(a.episodes.len(), 12);
        assert_eq!(a.updates, 6);
        let c = train(&sc, &cfg, 12, 10).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn synchronous_multi_actor_is_deterministic() {
        let (sc, mut cfg) = small();
        cfg.actors = 3;
        cfg.vtrace_enabled = false;
        let a = train(&sc, &cfg, 10, 1).unwrap();
        let b = train(&sc, &cfg, 10, 1).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.episodes.iter().map(|e| e.actor).collect::<Vec<_>>(), [0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
    }

    #[test]
    fn asynchronous_consumes_every_episode() {
        let (sc, mut cfg) = small();
        cfg.actors = 3;
        let out = train(&sc, &cfg, 15, 2).unwrap();
        assert_eq!(out.episodes.len(), 15);
        assert_eq!(out.curve.last().unwrap().episode, 15);
        assert!(out.params.is_finite());
        let bound = -(sc.horizon as f64) * (1.0 + sc.nu * sc.num_planes as f64);
        for e in &out.episodes {
            assert!(e.metrics.episode_return <= 0.0 && e.metrics.episode_return >= bound);
        }
    }

    #[test]
    fn mismatched_initial_parameters() {
        let (sc, cfg) = small();
        let p = PolicyParameters::zeros(3, 4, 3, &[4]).unwrap();
        assert!(train_from(p, &sc, &cfg, 2, 0).is_err());
    }
}
