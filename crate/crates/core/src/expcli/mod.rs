//! Experiment orchestration: train, evaluate, sweep, behavior statistics and
//! feature ablation, each writing CSV reports into an output directory.
//!
//! Seeds fan out deterministically: evaluation episode `i` resets the
//! environment with `master_seed + i`, and training uses `master_seed`.

pub mod report;
pub mod spec;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::{dho_decide, Agent, AgentKind, DecisionMode};
use crate::drl::{load_checkpoint_for, save_checkpoint, train, CurvePoint, PolicyParameters, TrainingOutcome};
use crate::env::{episode_metrics, FeatureMask, HandoverEnv, MetricsRecord, ScenarioConfig, StepOutcome};
use crate::error::{Error, Result};

pub use report::{MeanStd, Summary, SummaryRow, TraceRow};
pub use spec::{canonical_key, AgentChoice, ExperimentSpec, SweepSpec, OUT_DIR_ENV};

const AGENT_STREAM: u64 = 0x61_6765_6e74;
const CHECKPOINT_FILE: &str = "policy.ckpt";
/// Curve points averaged when testing the return threshold.
const THRESHOLD_WINDOW: usize = 10;

/// Maps `f` over `items` on up to `available_parallelism` threads, keeping order.
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync) -> Result<Vec<U>> {
    let threads = thread::available_parallelism().map_or(1, |n| n.get()).min(items.len());
    if threads <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<U>>>> = items.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let out = f(&items[i]);
                *slots[i].lock().expect("result slot poisoned") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot poisoned").expect("every item was processed"))
        .collect()
}

/// Runs one full episode and returns its totals and per-slot outcomes.
pub fn run_episode(
    scenario: &ScenarioConfig,
    agent: &mut Agent,
    env_seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(MetricsRecord, Vec<StepOutcome>)> {
    let (mut env, mut obs) = HandoverEnv::reset(scenario, env_seed)?;
    agent.begin_episode(scenario.num_ues);
    let mut outcomes = Vec::with_capacity(scenario.horizon);
    while !env.is_done() {
        let action = agent.decide(&env, &obs, rng)?;
        let (next, out) = env.step(&action)?;
        obs = next;
        outcomes.push(out);
    }
    Ok((episode_metrics(&outcomes, &env)?, outcomes))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metrics: Vec<MetricsRecord>,
    /// Empty unless requested.
    pub trace: Vec<TraceRow>,
}

impl Evaluation {
    pub fn summary(&self) -> Summary {
        Summary::of(&self.metrics)
    }
}

fn episode_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ AGENT_STREAM)
}

/// Evaluates `kind` over `episodes` fresh episodes seeded `master_seed + i`.
pub fn evaluate(
    scenario: &ScenarioConfig,
    kind: &AgentKind,
    episodes: usize,
    master_seed: u64,
    keep_trace: bool,
) -> Result<Evaluation> {
    scenario.validate()?;
    let chunk = 50;
    let starts: Vec<usize> = (0..episodes).step_by(chunk).collect();
    let parts = par_map(&starts, |&start| {
        let mut agent = Agent::new(kind.clone());
        let mut metrics = Vec::new();
        let mut trace = Vec::new();
        for i in start..(start + chunk).min(episodes) {
            let seed = master_seed.wrapping_add(i as u64);
            let (m, outcomes) = run_episode(scenario, &mut agent, seed, &mut episode_rng(seed))?;
            metrics.push(m);
            if keep_trace {
                trace.extend(outcomes.into_iter().map(|o| TraceRow {
                    episode: i,
                    slot: o.slot,
                    delay: o.delay,
                    collision_rb: o.collision_rb,
                    collision_prach: o.collision_prach,
                    reward: o.reward,
                    accessed_count: o.accessed_count,
                }));
            }
        }
        Ok((metrics, trace))
    })?;
    let mut eval = Evaluation {
        metrics: Vec::with_capacity(episodes),
        trace: Vec::new(),
    };
    for (m, t) in parts {
        eval.metrics.extend(m);
        eval.trace.extend(t);
    }
    Ok(eval)
}

/// Builds the agent, training a DHO policy when no checkpoint is configured.
pub fn prepare_agent(
    spec: &ExperimentSpec,
    scenario: &ScenarioConfig,
    choice: AgentChoice,
) -> Result<(AgentKind, Option<TrainingOutcome>)> {
    Ok(match choice {
        AgentChoice::Conventional => (AgentKind::Conventional, None),
        AgentChoice::Random => (AgentKind::Random, None),
        AgentChoice::Dho => {
            let (params, trained) = match &spec.checkpoint {
                Some(path) => (load_checkpoint_for(path, scenario)?, None),
                None => {
                    let out = train(scenario, &spec.training, spec.train_episodes, spec.master_seed)?;
                    (out.params.clone(), Some(out))
                }
            };
            (
                AgentKind::Dho {
                    params: Arc::new(params),
                    mode: spec.decision_mode,
                },
                trained,
            )
        }
    })
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub row: SummaryRow,
    pub evaluation: Evaluation,
    pub training: Option<TrainingOutcome>,
    pub files: Vec<PathBuf>,
}

fn write_training(out_dir: &Path, stem: &str, t: &TrainingOutcome, files: &mut Vec<PathBuf>) -> Result<()> {
    let curve = out_dir.join(format!("learning_curve{stem}.csv"));
    report::write_curve(&curve, &t.curve)?;
    let ckpt = out_dir.join(if stem.is_empty() {
        CHECKPOINT_FILE.to_string()
    } else {
        format!("policy{stem}.ckpt")
    });
    save_checkpoint(&t.params, &ckpt)?;
    files.push(curve);
    files.push(ckpt);
    Ok(())
}

fn run_inner(spec: &ExperimentSpec, out_dir: &Path, allow_training: bool) -> Result<RunReport> {
    spec.validate()?;
    if !allow_training && spec.agent == AgentChoice::Dho && spec.checkpoint.is_none() {
        return Err(Error::config("agent.checkpoint", "evaluating a DHO agent needs a checkpoint"));
    }
    let scenario = spec.scenario()?;
    fs::create_dir_all(out_dir)?;
    let (kind, training) = prepare_agent(spec, &scenario, spec.agent)?;
    let evaluation = evaluate(&scenario, &kind, spec.eval_episodes, spec.master_seed, spec.write_trace)?;
    let row = SummaryRow {
        agent: kind.name().to_string(),
        parameter: None,
        value: None,
        label: String::new(),
        summary: evaluation.summary(),
        episodes_to_threshold: None,
    };
    let mut files = Vec::new();
    let summary = out_dir.join("summary.csv");
    report::write_summary(&summary, std::slice::from_ref(&row))?;
    files.push(summary);
    if spec.write_trace {
        let trace = out_dir.join("trace.csv");
        report::write_trace(&trace, scenario.num_planes - 1, &evaluation.trace)?;
        files.push(trace);
    }
    if let Some(t) = &training {
        write_training(out_dir, "", t, &mut files)?;
    }
    Ok(RunReport {
        row,
        evaluation,
        training,
        files,
    })
}

/// Trains if needed, evaluates, and writes summary, trace, learning curve and checkpoint.
pub fn run(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunReport> {
    run_inner(spec, out_dir, true)
}

/// Evaluates an existing agent; a DHO agent must come from a checkpoint.
pub fn eval(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunReport> {
    run_inner(spec, out_dir, false)
}

/// Row label for a swept value.
pub fn sweep_label(parameter: &str, value: f64) -> String {
    match parameter {
        "scenario.nu" if value > 1.0 => "delay-aware".into(),
        "scenario.nu" if value < 1.0 => "collision-averse".into(),
        "scenario.nu" => "balanced".into(),
        _ => String::new(),
    }
}

/// First episode count at which the trailing mean of `window` curve points reaches `threshold`.
pub fn episodes_to_threshold(curve: &[CurvePoint], threshold: f64, window: usize) -> Option<usize> {
    let window = window.max(1);
    (0..curve.len()).find_map(|i| {
        let lo = (i + 1).saturating_sub(window);
        let pts = &curve[lo..=i];
        let mean = pts.iter().map(|p| p.mean_return).sum::<f64>() / pts.len() as f64;
        (pts.len() == window.min(curve.len()) && mean >= threshold).then_some(curve[i].episode)
    })
}

/// One summary row per (value, agent); rows are ordered by value, then agent.
pub fn sweep(spec: &ExperimentSpec, out_dir: &Path) -> Result<Vec<SummaryRow>> {
    spec.validate()?;
    let sw = spec
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("sweep.parameter", "no sweep configured"))?;
    let agents = if sw.agents.is_empty() { vec![spec.agent] } else { sw.agents.clone() };
    let tasks: Vec<(f64, AgentChoice)> = sw
        .values
        .iter()
        .flat_map(|&v| agents.iter().map(move |&a| (v, a)))
        .collect();
    fs::create_dir_all(out_dir)?;
    let rows = par_map(&tasks, |&(value, agent)| {
        let mut point = spec.clone();
        point.sweep = None;
        point.agent = agent;
        point.set(&sw.parameter, &spec::sweep_value(&sw.parameter, value))?;
        let scenario = point.scenario()?;
        let (kind, training) = prepare_agent(&point, &scenario, agent)?;
        let evaluation = evaluate(&scenario, &kind, point.eval_episodes, point.master_seed, false)?;
        Ok(SummaryRow {
            agent: agent.name().to_string(),
            parameter: Some(sw.parameter.clone()),
            value: Some(value),
            label: sweep_label(&sw.parameter, value),
            summary: evaluation.summary(),
            episodes_to_threshold: training
                .as_ref()
                .and_then(|t| episodes_to_threshold(&t.curve, sw.return_threshold, THRESHOLD_WINDOW)),
        })
    })?;
    report::write_summary(&out_dir.join("sweep.csv"), &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehaviorStats {
    pub episodes: usize,
    /// Per-UE-per-slot decisions taken while the UE was not yet accessed.
    pub decisions: usize,
    pub requests: usize,
    pub request_fraction: f64,
    pub no_request_fraction: f64,
}

/// Fractions of HO requests (`a_j ≥ 1`) and waits among decisions for unaccessed UEs.
pub fn behavior_stats(
    params: &PolicyParameters,
    scenario: &ScenarioConfig,
    episodes: usize,
    master_seed: u64,
    mode: DecisionMode,
) -> Result<BehaviorStats> {
    scenario.validate()?;
    if (params.obs_dim(), params.num_ues(), params.num_planes()) != (scenario.obs_len(), scenario.num_ues, scenario.num_planes) {
        return Err(Error::Checkpoint("policy does not fit the scenario".into()));
    }
    let (mut decisions, mut requests) = (0usize, 0usize);
    for i in 0..episodes {
        let seed = master_seed.wrapping_add(i as u64);
        let mut rng = episode_rng(seed);
        let (mut env, mut obs) = HandoverEnv::reset(scenario, seed)?;
        while !env.is_done() {
            let d = dho_decide(params, &obs, env.accessed(), &mut rng, mode)?;
            for (&a, &active) in d.action.choices().iter().zip(&d.active) {
                if active {
                    decisions += 1;
                    requests += usize::from(a > 0);
                }
            }
            obs = env.step(&d.action)?.0;
        }
    }
    let request_fraction = if decisions == 0 { 0.0 } else { requests as f64 / decisions as f64 };
    Ok(BehaviorStats {
        episodes,
        decisions,
        requests,
        request_fraction,
        no_request_fraction: if decisions == 0 { 0.0 } else { (decisions - requests) as f64 / decisions as f64 },
    })
}

/// Behavior statistics of the spec's DHO policy (trained first if no checkpoint is set).
pub fn behavior(spec: &ExperimentSpec, out_dir: &Path) -> Result<BehaviorStats> {
    let mut spec = spec.clone();
    spec.agent = AgentChoice::Dho;
    spec.validate()?;
    let scenario = spec.scenario()?;
    fs::create_dir_all(out_dir)?;
    let (kind, training) = prepare_agent(&spec, &scenario, AgentChoice::Dho)?;
    let AgentKind::Dho { params, mode } = kind else {
        unreachable!("prepare_agent returns a DHO agent for AgentChoice::Dho")
    };
    let stats = behavior_stats(&params, &scenario, spec.eval_episodes, spec.master_seed, mode)?;
    let mut w = csv::Writer::from_path(out_dir.join("behavior.csv"))?;
    w.write_record(["episodes", "decisions", "request_fraction", "no_request_fraction"])?;
    w.write_record([
        stats.episodes.to_string(),
        stats.decisions.to_string(),
        stats.request_fraction.to_string(),
        stats.no_request_fraction.to_string(),
    ])?;
    w.flush()?;
    if let Some(t) = &training {
        write_training(out_dir, "", t, &mut Vec::new())?;
    }
    Ok(stats)
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub mask: String,
    pub curve: Vec<CurvePoint>,
    pub summary: Summary,
}

/// Trains and evaluates one DHO agent per feature mask.
pub fn ablation(spec: &ExperimentSpec, out_dir: &Path) -> Result<Vec<AblationResult>> {
    let mut spec = spec.clone();
    spec.agent = AgentChoice::Dho;
    spec.checkpoint = None;
    spec.validate()?;
    fs::create_dir_all(out_dir)?;
    let results = par_map(&spec.ablation_masks, |name| {
        let mut point = spec.clone();
        point.base.features = FeatureMask::named(name).ok_or_else(|| Error::config("ablation.masks", format!("unknown mask `{name}`")))?;
        let scenario = point.scenario()?;
        let (kind, training) = prepare_agent(&point, &scenario, AgentChoice::Dho)?;
        let training = training.expect("ablation always trains");
        let evaluation = evaluate(&scenario, &kind, point.eval_episodes, point.master_seed, false)?;
        let mut files = Vec::new();
        write_training(out_dir, &format!("_{name}"), &training, &mut files)?;
        Ok(AblationResult {
            mask: name.clone(),
            curve: training.curve,
            summary: evaluation.summary(),
        })
    })?;
    let curves: Vec<(String, Vec<CurvePoint>)> = results.iter().map(|r| (r.mask.clone(), r.curve.clone())).collect();
    report::write_curves_long(&out_dir.join("ablation_curves.csv"), &curves)?;
    let rows: Vec<SummaryRow> = results
        .iter()
        .map(|r| SummaryRow {
            agent: "dho".into(),
            parameter: Some("scenario.mask".into()),
            value: None,
            label: r.mask.clone(),
            summary: r.summary,
            episodes_to_threshold: None,
        })
        .collect();
    report::write_summary(&out_dir.join("ablation_summary.csv"), &rows)?;
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_spec() -> ExperimentSpec {
        let mut s = ExperimentSpec::from_toml_str(
            "scenario.J = 4\nscenario.N = 6\ntrain.hidden = [8]\ntrain.episodes = 6\ntrain.batch_size = 12\neval.episodes = 5\n",
        )
        .unwrap();
        s.agent = AgentChoice::Random;
        s
    }

    #[test]
    fn uniform_policy_requests_two_thirds() {
        let sc = ScenarioConfig::default();
        let p = PolicyParameters::zeros(sc.obs_len(), 10, 3, &[4]).unwrap();
        let s = behavior_stats(&p, &sc, 200, 3, DecisionMode::Sample).unwrap();
        assert!((s.request_fraction - 2.0 / 3.0).abs() < 0.02, "{s:?}");
        assert_relative_eq!(s.request_fraction + s.no_request_fraction, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn evaluation_is_seed_deterministic_and_order_stable() {
        let sc = small_spec().scenario().unwrap();
        let a = evaluate(&sc, &AgentKind::Random, 120, 5, true).unwrap();
        let b = evaluate(&sc, &AgentKind::Random, 120, 5, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace.len(), 120 * 6);
        assert!(a.trace.windows(2).all(|w| (w[0].episode, w[0].slot) < (w[1].episode, w[1].slot)));
        // episode i depends only on master_seed + i
        let shifted = evaluate(&sc, &AgentKind::Random, 1, 5 + 7, false).unwrap();
        assert_eq!(shifted.metrics[0], a.metrics[7]);
    }

    #[test]
    fn threshold_detection() {
        let pt = |e, r| CurvePoint {
            episode: e,
            mean_return: r,
            sum_delay: 0.0,
            sum_collision: 0.0,
        };
        let curve = vec![pt(2, -1.0), pt(4, -0.5), pt(6, -0.1), pt(8, -0.1), pt(10, 0.0)];
        assert_eq!(episodes_to_threshold(&curve, -0.2, 1), Some(6));
        assert_eq!(episodes_to_threshold(&curve, -0.2, 2), Some(8));
        assert_eq!(episodes_to_threshold(&curve, 0.5, 2), None);
    }

    #[test]
    fn labels() {
        assert_eq!(sweep_label("scenario.nu", 5.0), "delay-aware");
        assert_eq!(sweep_label("scenario.nu", 0.05), "collision-averse");
        assert_eq!(sweep_label("scenario.rb_ratio", 0.5), "");
    }

    #[test]
    fn run_writes_reports() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = small_spec();
        spec.agent = AgentChoice::Dho;
        let rep = run(&spec, dir.path()).unwrap();
        for f in ["summary.csv", "trace.csv", "learning_curve.csv", "policy.ckpt"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(rep.row.summary.episodes, 5);
        spec.checkpoint = Some(dir.path().join("policy.ckpt"));
        let again = eval(&spec, &dir.path().join("eval")).unwrap();
        assert_eq!(again.evaluation, rep.evaluation);
    }

    #[test]
    fn eval_requires_checkpoint_for_dho() {
        let mut spec = small_spec();
        spec.agent = AgentChoice::Dho;
        let dir = tempfile::tempdir().unwrap();
        let err = eval(&spec, dir.path()).unwrap_err();
        assert!(err.is_config());
    }
}
