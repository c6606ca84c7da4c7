//! The handover MDP.
//!
//! Each call to [`HandoverEnv::step`] is one HO opportunity and runs, in
//! order: request derivation, admission against the remaining RBs of each
//! target, two-step RACH on the commanded UEs, completion bookkeeping,
//! metrics and reward, then the constellation advances one slot and a fresh
//! round of measurements is taken.
//!
//! RBs are an episode-total budget per target: a UE that completes HO holds
//! one RB for the rest of the episode. A UE that was granted an RB but lost
//! the preamble contention releases it again.
//!
//! The access delay `D[n]` is evaluated on the accessed vector *after* the
//! completions of slot `n`.

use std::collections::HashMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::link::{rsrp_proxy, MeasurementParams, MeasurementState, TerminalProfile};
use crate::orbital::{ConstellationState, OrbitalConfig, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub enum UePlacement {
    /// Uniform over the square area centered at the origin.
    Uniform,
    /// Explicit ground positions `(x, y)` in meters.
    Explicit(Vec<[f64; 2]>),
}

/// Which parts of the state enter the observation vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureMask {
    pub time_index: bool,
    pub accessed: bool,
    pub prev_action: bool,
    pub a3_centralized: bool,
}

impl FeatureMask {
    pub const LOCAL: FeatureMask = FeatureMask {
        time_index: true,
        accessed: true,
        prev_action: true,
        a3_centralized: false,
    };

    pub const CENTRALIZED: FeatureMask = FeatureMask {
        a3_centralized: true,
        ..FeatureMask::LOCAL
    };

    /// Named masks used by the ablation study.
    pub fn named(name: &str) -> Option<FeatureMask> {
        let local = FeatureMask::LOCAL;
        Some(match name {
            "local" => local,
            "centralized" => FeatureMask::CENTRALIZED,
            "no-time" => FeatureMask { time_index: false, ..local },
            "no-accessed" => FeatureMask { accessed: false, ..local },
            "no-prev-action" => FeatureMask { prev_action: false, ..local },
            "no-time-no-accessed" => FeatureMask {
                time_index: false,
                accessed: false,
                ..local
            },
            _ => return None,
        })
    }

    pub const NAMES: [&'static str; 6] = [
        "local",
        "no-time",
        "no-accessed",
        "no-prev-action",
        "no-time-no-accessed",
        "centralized",
    ];

    pub fn obs_len(&self, num_ues: usize, num_planes: usize) -> usize {
        let mut n = 0;
        if self.time_index {
            n += 1;
        }
        if self.accessed {
            n += num_ues;
        }
        if self.prev_action {
            n += num_ues * num_planes;
        }
        if self.a3_centralized {
            n += num_ues * (num_planes - 1);
        }
        n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// J
    pub num_ues: usize,
    /// K, plane 0 is the serving plane
    pub num_planes: usize,
    /// Episode-total RBs per target plane (K − 1 entries).
    pub rb_total: Vec<u32>,
    /// Preamble signatures per target.
    pub preambles: u32,
    /// N, HO opportunities per episode
    pub horizon: usize,
    /// τ in seconds
    pub slot_s: f64,
    /// ν, weight of the collision rate in the reward
    pub nu: f64,
    pub area_m: f64,
    pub placement: UePlacement,
    pub seed: u64,
    pub features: FeatureMask,
    pub terminal: TerminalProfile,
    pub measurement: MeasurementParams,
    pub altitude_m: f64,
    pub sats_per_plane: usize,
}

impl Default for ScenarioConfig {
    /// J = 10, three planes, R_k = J, P = 5J, N = 20, τ = 0.3 s, ν = 1.
    fn default() -> Self {
        ScenarioConfig {
            num_ues: 10,
            num_planes: 3,
            rb_total: vec![10, 10],
            preambles: 50,
            horizon: 20,
            slot_s: 0.3,
            nu: 1.0,
            area_m: 1000.0,
            placement: UePlacement::Uniform,
            seed: 0,
            features: FeatureMask::LOCAL,
            terminal: TerminalProfile::vsat(),
            measurement: MeasurementParams::default(),
            altitude_m: 550e3,
            sats_per_plane: 1,
        }
    }
}

impl ScenarioConfig {
    /// Sets every target's RB budget to `round(ratio · J)`.
    pub fn set_rb_ratio(&mut self, ratio: f64) {
        let rb = (ratio * self.num_ues as f64).round().max(0.0) as u32;
        self.rb_total = vec![rb; self.num_planes.saturating_sub(1)];
    }

    /// Sets the preamble count to `max(1, round(ratio · J))`.
    pub fn set_preamble_ratio(&mut self, ratio: f64) {
        self.preambles = ((ratio * self.num_ues as f64).round() as u32).max(1);
    }

    pub fn obs_len(&self) -> usize {
        self.features.obs_len(self.num_ues, self.num_planes)
    }

    pub fn orbital_config(&self) -> Result<OrbitalConfig> {
        OrbitalConfig::desk(
            self.num_planes,
            self.horizon,
            self.slot_s,
            self.altitude_m,
            self.sats_per_plane,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_ues < 1 {
            return Err(Error::config("scenario.J", "need at least one UE"));
        }
        if self.num_planes < 2 {
            return Err(Error::config("scenario.K", "need a serving plane and at least one target"));
        }
        if self.rb_total.len() != self.num_planes - 1 {
            return Err(Error::config(
                "scenario.rb_total",
                format!("expected {} entries (one per target plane)", self.num_planes - 1),
            ));
        }
        if self.preambles < 1 {
            return Err(Error::config("scenario.P", "need at least one preamble"));
        }
        if self.horizon < 1 {
            return Err(Error::config("scenario.N", "need at least one HO opportunity"));
        }
        if !(self.slot_s > 0.0) {
            return Err(Error::config("scenario.tau_s", "must be positive"));
        }
        if !(self.nu >= 0.0) || !self.nu.is_finite() {
            return Err(Error::config("scenario.nu", "must be finite and non-negative"));
        }
        if !(self.area_m > 0.0) {
            return Err(Error::config("scenario.area_m", "must be positive"));
        }
        if let UePlacement::Explicit(pos) = &self.placement {
            if pos.len() != self.num_ues {
                return Err(Error::config(
                    "scenario.ue_positions",
                    format!("expected {} positions, got {}", self.num_ues, pos.len()),
                ));
            }
        }
        if self.obs_len() == 0 {
            return Err(Error::config("scenario.features", "observation would be empty"));
        }
        self.terminal.validate()?;
        self.measurement.validate()?;
        self.orbital_config()?;
        Ok(())
    }
}

/// One HO action per UE: 0 waits, `k ≥ 1` requests HO to target plane `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionMatrix {
    choices: Vec<usize>,
    num_planes: usize,
}

impl ActionMatrix {
    pub fn new(choices: Vec<usize>, num_planes: usize) -> Result<Self> {
        if let Some(bad) = choices.iter().find(|&&a| a >= num_planes) {
            return Err(Error::Shape(format!("action {bad} outside 0..{num_planes}")));
        }
        Ok(ActionMatrix { choices, num_planes })
    }

    pub fn zeros(num_ues: usize, num_planes: usize) -> Self {
        ActionMatrix {
            choices: vec![0; num_ues],
            num_planes,
        }
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }

    pub fn num_planes(&self) -> usize {
        self.num_planes
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    /// Row-major `J × K` one-hot encoding.
    pub fn one_hot(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.choices.len() * self.num_planes];
        for (j, &a) in self.choices.iter().enumerate() {
            out[j * self.num_planes + a] = 1.0;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Admission {
    /// h^C per UE: 0 when no HO Command was issued, else the target plane.
    pub command: Vec<usize>,
    /// c^R per UE
    pub rb_collision: Vec<bool>,
    /// C^R_k for k = 1..K (index k − 1)
    pub collision_per_target: Vec<f64>,
}

/// HO admission at every target. `requests[j]` is the requested plane (0 for
/// none); when a target has fewer RBs left than requesters, exactly that many
/// requesters are picked uniformly at random.
pub fn admission<R: Rng + ?Sized>(
    requests: &[usize],
    rb_remaining: &[u32],
    num_ues: usize,
    rng: &mut R,
) -> Admission {
    let targets = rb_remaining.len();
    let mut command = vec![0; requests.len()];
    let mut rb_collision = vec![false; requests.len()];
    let mut collision_per_target = vec![0.0; targets];
    for k in 1..=targets {
        let requesters: Vec<usize> = (0..requests.len()).filter(|&j| requests[j] == k).collect();
        let available = rb_remaining[k - 1] as usize;
        if requesters.len() <= available {
            for &j in &requesters {
                command[j] = k;
            }
            continue;
        }
        for j in &requesters {
            rb_collision[*j] = true;
        }
        for pick in index::sample(rng, requesters.len(), available) {
            let j = requesters[pick];
            command[j] = k;
            rb_collision[j] = false;
        }
        collision_per_target[k - 1] = (requesters.len() - available) as f64 / num_ues as f64;
    }
    Admission {
        command,
        rb_collision,
        collision_per_target,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RachOutcome {
    /// p_j in 1..=P for commanded UEs
    pub preamble: Vec<Option<u32>>,
    /// c^P per UE
    pub collided: Vec<bool>,
    /// C^P
    pub collision_rate: f64,
    pub success: Vec<bool>,
}

/// Two-step random access: every commanded UE draws a preamble uniformly and
/// collides iff another commanded UE picked the same (target, preamble).
pub fn rach<R: Rng + ?Sized>(commands: &[usize], preambles: u32, num_ues: usize, rng: &mut R) -> RachOutcome {
    let preamble: Vec<Option<u32>> = commands
        .iter()
        .map(|&k| (k > 0).then(|| rng.random_range(1..=preambles)))
        .collect();
    let mut counts: HashMap<(usize, u32), u32> = HashMap::new();
    for (&k, p) in commands.iter().zip(&preamble) {
        if let Some(p) = p {
            *counts.entry((k, *p)).or_default() += 1;
        }
    }
    let collided: Vec<bool> = commands
        .iter()
        .zip(&preamble)
        .map(|(&k, p)| p.is_some_and(|p| counts[&(k, p)] > 1))
        .collect();
    let success = preamble
        .iter()
        .zip(&collided)
        .map(|(p, &c)| p.is_some() && !c)
        .collect();
    let collision_rate = collided.iter().filter(|&&c| c).count() as f64 / num_ues as f64;
    RachOutcome {
        preamble,
        collided,
        collision_rate,
        success,
    }
}

/// Everything that happened during one HO opportunity.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Slot number, 1-based.
    pub slot: usize,
    /// h^R: requested target per UE (0 = none)
    pub requested: Vec<usize>,
    /// h^C
    pub command: Vec<usize>,
    pub preamble: Vec<Option<u32>>,
    pub rb_collision: Vec<bool>,
    pub prach_collision: Vec<bool>,
    pub newly_accessed: Vec<bool>,
    /// C^R_k, index k − 1
    pub collision_rb: Vec<f64>,
    /// C^P
    pub collision_prach: f64,
    /// C = Σ_k C^R_k + C^P
    pub collision_total: f64,
    /// D
    pub delay: f64,
    pub reward: f64,
    pub accessed_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsRecord {
    pub sum_delay: f64,
    pub sum_collision_rb: f64,
    pub sum_collision_prach: f64,
    /// H, fraction of UEs accessed at the end of the episode
    pub ho_success: f64,
    pub episode_return: f64,
}

impl MetricsRecord {
    pub fn sum_collision(&self) -> f64 {
        self.sum_collision_rb + self.sum_collision_prach
    }
}

/// Simulation state of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct HandoverEnv {
    cfg: ScenarioConfig,
    orbital: OrbitalConfig,
    samples_per_slot: usize,
    slot: usize,
    accessed: Vec<bool>,
    rb_remaining: Vec<u32>,
    prev_action: ActionMatrix,
    constellation: ConstellationState,
    measurements: MeasurementState,
    ue_positions: Vec<Vec3>,
    access_rng: ChaCha8Rng,
    shadow_rng: ChaCha8Rng,
}

// Stream selectors so placement, access and shadowing draw independently.
const PLACEMENT_STREAM: u64 = 0x706c_6163;
const ACCESS_STREAM: u64 = 0x6163_6365;
const SHADOW_STREAM: u64 = 0x7368_6164;

impl HandoverEnv {
    /// Starts a new episode. The same `(config, seed)` always yields the same state.
    pub fn reset(cfg: &ScenarioConfig, seed: u64) -> Result<(Self, Vec<f64>)> {
        cfg.validate()?;
        let orbital = cfg.orbital_config()?;
        let mut placement_rng = ChaCha8Rng::seed_from_u64(seed ^ PLACEMENT_STREAM);
        let half = cfg.area_m / 2.0;
        let ue_positions = match &cfg.placement {
            UePlacement::Uniform => (0..cfg.num_ues)
                .map(|_| {
                    [
                        placement_rng.random_range(-half..=half),
                        placement_rng.random_range(-half..=half),
                        0.0,
                    ]
                })
                .collect(),
            UePlacement::Explicit(p) => p.iter().map(|&[x, y]| [x, y, 0.0]).collect(),
        };
        let mut env = HandoverEnv {
            samples_per_slot: cfg.measurement.samples_per_slot(cfg.slot_s),
            slot: 0,
            accessed: vec![false; cfg.num_ues],
            rb_remaining: cfg.rb_total.clone(),
            prev_action: ActionMatrix::zeros(cfg.num_ues, cfg.num_planes),
            constellation: ConstellationState::initial(&orbital),
            measurements: MeasurementState::new(cfg.num_ues, cfg.num_planes, &cfg.measurement),
            ue_positions,
            access_rng: ChaCha8Rng::seed_from_u64(seed ^ ACCESS_STREAM),
            shadow_rng: ChaCha8Rng::seed_from_u64(seed ^ SHADOW_STREAM),
            orbital,
            cfg: cfg.clone(),
        };
        env.measure()?;
        let obs = env.observe();
        Ok((env, obs))
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn is_done(&self) -> bool {
        self.slot >= self.cfg.horizon
    }

    pub fn accessed(&self) -> &[bool] {
        &self.accessed
    }

    pub fn accessed_count(&self) -> usize {
        self.accessed.iter().filter(|&&a| a).count()
    }

    pub fn rb_remaining(&self) -> &[u32] {
        &self.rb_remaining
    }

    pub fn prev_action(&self) -> &ActionMatrix {
        &self.prev_action
    }

    pub fn constellation(&self) -> &ConstellationState {
        &self.constellation
    }

    pub fn measurements(&self) -> &MeasurementState {
        &self.measurements
    }

    pub fn ue_positions(&self) -> &[Vec3] {
        &self.ue_positions
    }

    /// Takes this slot's L1 samples (one every T_M) and folds them into L3.
    fn measure(&mut self) -> Result<()> {
        let j_count = self.cfg.num_ues;
        let k_count = self.cfg.num_planes;
        let sigma = self.cfg.measurement.shadowing_sigma_db;
        let period = self.cfg.measurement.period_s;
        let mut l1 = vec![0.0; j_count * k_count];
        for s in 0..self.samples_per_slot {
            let dt = s as f64 * period;
            let snapshot = if s == 0 {
                self.constellation.clone()
            } else {
                let mut c = self.constellation.clone();
                for (plane, vels) in c.positions.iter_mut().zip(&self.constellation.velocities) {
                    for (q, v) in plane.iter_mut().zip(vels) {
                        for c in 0..3 {
                            q[c] += dt * v[c];
                        }
                    }
                }
                c
            };
            for j in 0..j_count {
                for k in 0..k_count {
                    let (_, d) = snapshot.nearest_in_plane(k, self.ue_positions[j]);
                    let shadow = if sigma > 0.0 {
                        sigma * self.shadow_rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    };
                    l1[j * k_count + k] = rsrp_proxy(
                        self.cfg.measurement.dl_eirp_dbw,
                        d / 1e3,
                        self.cfg.terminal.carrier_ghz,
                        shadow,
                    )?;
                }
            }
            self.measurements.ingest(&l1)?;
        }
        Ok(())
    }

    /// Observation under the configured feature mask.
    pub fn observe(&self) -> Vec<f64> {
        self.observe_with(self.cfg.features)
    }

    /// Concatenation, in this order, of the enabled features: `[n / N]`, the
    /// accessed flags (J), the one-hot previous action (J·K), and the A3 flags
    /// of each UE against each target (J·(K−1)).
    pub fn observe_with(&self, mask: FeatureMask) -> Vec<f64> {
        let mut obs = Vec::with_capacity(mask.obs_len(self.cfg.num_ues, self.cfg.num_planes));
        if mask.time_index {
            obs.push(self.slot as f64 / self.cfg.horizon as f64);
        }
        if mask.accessed {
            obs.extend(self.accessed.iter().map(|&a| if a { 1.0 } else { 0.0 }));
        }
        if mask.prev_action {
            obs.extend(self.prev_action.one_hot());
        }
        if mask.a3_centralized {
            for j in 0..self.cfg.num_ues {
                obs.extend(self.measurements.a3_flags(j).map(|f| if f { 1.0 } else { 0.0 }));
            }
        }
        obs
    }

    /// Runs one HO opportunity.
    pub fn step(&mut self, action: &ActionMatrix) -> Result<(Vec<f64>, StepOutcome)> {
        if self.is_done() {
            return Err(Error::State(format!(
                "episode already finished after {} slots",
                self.cfg.horizon
            )));
        }
        let j_count = self.cfg.num_ues;
        if action.len() != j_count || action.num_planes() != self.cfg.num_planes {
            return Err(Error::Shape(format!(
                "action is {}×{}, scenario is {}×{}",
                action.len(),
                action.num_planes(),
                j_count,
                self.cfg.num_planes
            )));
        }

        let requested: Vec<usize> = action
            .choices()
            .iter()
            .zip(&self.accessed)
            .map(|(&a, &done)| if done { 0 } else { a })
            .collect();
        let adm = admission(&requested, &self.rb_remaining, j_count, &mut self.access_rng);
        let ra = rach(&adm.command, self.cfg.preambles, j_count, &mut self.access_rng);

        for j in 0..j_count {
            if ra.success[j] {
                self.accessed[j] = true;
                self.rb_remaining[adm.command[j] - 1] -= 1;
            }
        }

        let collision_total = adm.collision_per_target.iter().sum::<f64>() + ra.collision_rate;
        let accessed_count = self.accessed_count();
        let delay = (j_count - accessed_count) as f64 / j_count as f64;
        let reward = -delay - self.cfg.nu * collision_total;

        self.constellation = self.constellation.propagate(&self.orbital, 1);
        self.slot += 1;
        self.prev_action = action.clone();
        self.measure()?;

        let outcome = StepOutcome {
            slot: self.slot,
            requested,
            command: adm.command,
            preamble: ra.preamble,
            rb_collision: adm.rb_collision,
            prach_collision: ra.collided,
            newly_accessed: ra.success,
            collision_rb: adm.collision_per_target,
            collision_prach: ra.collision_rate,
            collision_total,
            delay,
            reward,
            accessed_count,
        };
        Ok((self.observe(), outcome))
    }
}

/// Episode totals from the full list of step outcomes.
pub fn episode_metrics(outcomes: &[StepOutcome], final_state: &HandoverEnv) -> Result<MetricsRecord> {
    let horizon = final_state.config().horizon;
    if outcomes.len() != horizon {
        return Err(Error::Shape(format!(
            "expected {horizon} step outcomes, got {}",
            outcomes.len()
        )));
    }
    let mut m = MetricsRecord::default();
    for o in outcomes {
        m.sum_delay += o.delay;
        m.sum_collision_rb += o.collision_rb.iter().sum::<f64>();
        m.sum_collision_prach += o.collision_prach;
        m.episode_return += o.reward;
    }
    m.ho_success = final_state.accessed_count() as f64 / final_state.config().num_ues as f64;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn det_cfg() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.measurement.shadowing_sigma_db = 0.0;
        cfg
    }

    #[test]
    fn reset_is_deterministic() {
        let cfg = ScenarioConfig::default();
        let (a, oa) = HandoverEnv::reset(&cfg, 42).unwrap();
        let (b, ob) = HandoverEnv::reset(&cfg, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(oa, ob);
        let (c, _) = HandoverEnv::reset(&cfg, 43).unwrap();
        assert_ne!(a.ue_positions(), c.ue_positions());
    }

    #[test]
    fn reset_places_ues_in_area() {
        let cfg = ScenarioConfig::default();
        for seed in 0..50 {
            let (env, _) = HandoverEnv::reset(&cfg, seed).unwrap();
            for p in env.ue_positions() {
                assert!(p[0].abs() <= 500.0 && p[1].abs() <= 500.0 && p[2] == 0.0);
            }
        }
    }

    #[test]
    fn reset_initial_observation() {
        let cfg = ScenarioConfig::default();
        let (env, obs) = HandoverEnv::reset(&cfg, 1).unwrap();
        assert_eq!(obs.len(), 1 + 10 + 10 * 3);
        assert_eq!(obs[0], 0.0);
        assert!(obs[1..11].iter().all(|&x| x == 0.0));
        for j in 0..10 {
            assert_eq!(&obs[11 + 3 * j..14 + 3 * j], &[1.0, 0.0, 0.0]);
        }
        assert_eq!(env.rb_remaining(), &[10, 10]);
        assert_eq!(env.slot(), 0);
    }

    #[test]
    fn masks_change_length() {
        let cfg = ScenarioConfig::default();
        let (env, obs) = HandoverEnv::reset(&cfg, 1).unwrap();
        let no_prev = env.observe_with(FeatureMask {
            prev_action: false,
            ..FeatureMask::LOCAL
        });
        assert_eq!(obs.len() - no_prev.len(), 30);
        let cen = env.observe_with(FeatureMask::CENTRALIZED);
        assert_eq!(cen.len() - obs.len(), 20);
        let m = env.measurements();
        for j in 0..10 {
            for k in 1..3 {
                let flag = crate::link::a3_event(m.l3(j, 0), m.l3(j, k), m.a3_offset_db);
                assert_eq!(cen[obs.len() + j * 2 + (k - 1)], if flag { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn all_wait_costs_one() {
        let cfg = det_cfg();
        let (mut env, _) = HandoverEnv::reset(&cfg, 3).unwrap();
        let (_, out) = env.step(&ActionMatrix::zeros(10, 3)).unwrap();
        assert_eq!(out.delay, 1.0);
        assert_eq!(out.collision_total, 0.0);
        assert_eq!(out.reward, -1.0);
        assert!(out.command.iter().all(|&c| c == 0));
    }

    #[test]
    fn accessed_ues_are_ignored() {
        let mut cfg = det_cfg();
        cfg.preambles = 1;
        cfg.num_ues = 1;
        cfg.rb_total = vec![1, 1];
        let (mut env, _) = HandoverEnv::reset(&cfg, 3).unwrap();
        let req = ActionMatrix::new(vec![1], 3).unwrap();
        let (_, first) = env.step(&req).unwrap();
        assert!(first.newly_accessed[0]);
        assert_eq!(first.delay, 0.0);
        let (_, second) = env.step(&ActionMatrix::new(vec![2], 3).unwrap()).unwrap();
        assert_eq!(second.requested, vec![0]);
        assert_eq!(second.command, vec![0]);
        assert_eq!((second.delay, second.collision_total, second.reward), (0.0, 0.0, 0.0));
        assert_eq!(env.rb_remaining(), &[0, 1]);
    }

    #[test]
    fn insufficient_rbs_case() {
        let mut cfg = det_cfg();
        cfg.rb_total = vec![3, 10];
        let (mut env, _) = HandoverEnv::reset(&cfg, 9).unwrap();
        let (_, out) = env.step(&ActionMatrix::new(vec![1; 10], 3).unwrap()).unwrap();
        assert_relative_eq!(out.collision_rb[0], 0.7);
        assert_eq!(out.collision_rb[1], 0.0);
        assert_eq!(out.command.iter().filter(|&&c| c == 1).count(), 3);
        assert_eq!(out.rb_collision.iter().filter(|&&c| c).count(), 7);
    }

    #[test]
    fn admission_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let none = admission(&[0; 6], &[2, 2], 6, &mut rng);
        assert!(none.command.iter().all(|&c| c == 0));
        assert_eq!(none.collision_per_target, vec![0.0, 0.0]);
        let exact = admission(&[1, 1, 1, 1, 1, 0], &[5, 0], 6, &mut rng);
        assert_eq!(exact.command, vec![1, 1, 1, 1, 1, 0]);
        assert_eq!(exact.collision_per_target, vec![0.0, 0.0]);
        let over = admission(&[1, 1, 1, 1, 1, 1, 1, 0, 0, 0], &[4, 4], 10, &mut rng);
        assert_relative_eq!(over.collision_per_target[0], 0.3);
        assert_eq!(over.command.iter().filter(|&&c| c == 1).count(), 4);
    }

    #[test]
    fn admission_is_uniform_among_requesters() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let requests = [1, 1, 1, 1, 1, 1, 1, 0, 0, 0];
        let trials = 100_000;
        let mut granted = [0u32; 7];
        for _ in 0..trials {
            let a = admission(&requests, &[4, 0], 10, &mut rng);
            for j in 0..7 {
                granted[j] += (a.command[j] == 1) as u32;
            }
        }
        let p = 4.0 / 7.0;
        let sd = (p * (1.0 - p) / trials as f64).sqrt();
        for g in granted {
            let f = g as f64 / trials as f64;
            assert!((f - p).abs() < 4.0 * sd, "frequency {f} vs {p}");
        }
    }

    #[test]
    fn rach_small_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let one = rach(&[0, 2, 0], 1, 3, &mut rng);
            assert_eq!(one.collided, vec![false; 3]);
            assert_eq!(one.success, vec![false, true, false]);
            assert_eq!(one.preamble[0], None);
            let two = rach(&[1, 1, 0, 2], 1, 4, &mut rng);
            assert_eq!(two.collided, vec![true, true, false, false]);
            assert_relative_eq!(two.collision_rate, 0.5);
        }
    }

    #[test]
    fn episode_metrics_traces() {
        let cfg = det_cfg();
        let (mut env, _) = HandoverEnv::reset(&cfg, 2).unwrap();
        let mut outs = Vec::new();
        while !env.is_done() {
            outs.push(env.step(&ActionMatrix::zeros(10, 3)).unwrap().1);
        }
        let m = episode_metrics(&outs, &env).unwrap();
        assert_eq!(m.sum_delay, 20.0);
        assert_eq!(m.ho_success, 0.0);
        assert!(episode_metrics(&outs[..5], &env).is_err());
        assert!(env.step(&ActionMatrix::zeros(10, 3)).is_err());
    }

    #[test]
    fn single_ue_accessing_first_slot_has_zero_delay() {
        let mut cfg = det_cfg();
        cfg.num_ues = 1;
        let (mut env, _) = HandoverEnv::reset(&cfg, 2).unwrap();
        let mut outs = vec![env.step(&ActionMatrix::new(vec![2], 3).unwrap()).unwrap().1];
        while !env.is_done() {
            outs.push(env.step(&ActionMatrix::zeros(1, 3)).unwrap().1);
        }
        let m = episode_metrics(&outs, &env).unwrap();
        assert_eq!(m.sum_delay, 0.0);
        assert_eq!(m.ho_success, 1.0);
    }

    #[test]
    fn config_errors_name_the_field() {
        let mut cfg = ScenarioConfig::default();
        cfg.rb_total = vec![1];
        match HandoverEnv::reset(&cfg, 0) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "scenario.rb_total"),
            other => panic!("unexpected {other:?}"),
        }
        let mut cfg = ScenarioConfig::default();
        cfg.num_ues = 0;
        assert!(HandoverEnv::reset(&cfg, 0).is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.nu = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn ratio_setters() {
        let mut cfg = ScenarioConfig::default();
        cfg.set_rb_ratio(0.3);
        assert_eq!(cfg.rb_total, vec![3, 3]);
        cfg.set_preamble_ratio(0.8);
        assert_eq!(cfg.preambles, 8);
        cfg.set_preamble_ratio(0.0);
        assert_eq!(cfg.preambles, 1);
    }

    #[test]
    fn action_one_hot() {
        let a = ActionMatrix::new(vec![0, 2, 1], 3).unwrap();
        assert_eq!(a.one_hot(), vec![1., 0., 0., 0., 0., 1., 0., 1., 0.]);
        assert!(ActionMatrix::new(vec![3], 3).is_err());
    }
}
