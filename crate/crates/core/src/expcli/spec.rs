//! Experiment spec files.
//!
//! A spec file is TOML restricted to flat `section.key = value` assignments
//! (dotted keys or `[section]` tables, both flatten to the same key). Every
//! key routes through [`ExperimentSpec::set`], so the file and the CLI flags
//! report errors with the same field names.

use std::fs;
use std::path::{Path, PathBuf};

use toml::Value;

use crate::agents::DecisionMode;
use crate::drl::VtraceConfig;
use crate::env::{FeatureMask, ScenarioConfig, UePlacement};
use crate::error::{Error, Result};
use crate::link::TerminalProfile;

const PRESETS: [(&str, &str); 4] = [
    ("case1", include_str!("../../presets/case1.toml")),
    ("case2", include_str!("../../presets/case2.toml")),
    ("case3", include_str!("../../presets/case3.toml")),
    ("case4", include_str!("../../presets/case4.toml")),
];

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "LEOHO_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentChoice {
    Conventional,
    Random,
    Dho,
}

impl AgentChoice {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "conventional" | "a3" => Some(AgentChoice::Conventional),
            "random" => Some(AgentChoice::Random),
            "dho" => Some(AgentChoice::Dho),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AgentChoice::Conventional => "conventional",
            AgentChoice::Random => "random",
            AgentChoice::Dho => "dho",
        }
    }
}

/// RB budget, either fixed or proportional to J.
#[derive(Debug, Clone, PartialEq)]
pub enum RbSetting {
    Ratio(f64),
    Each(u32),
    PerTarget(Vec<u32>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PreambleSetting {
    Ratio(f64),
    Count(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Canonical key, e.g. `scenario.rb_ratio`.
    pub parameter: String,
    pub values: Vec<f64>,
    /// Agents evaluated at every point; empty means the spec's agent.
    pub agents: Vec<AgentChoice>,
    /// Mean training return (moving average over 10 updates) counted as converged.
    pub return_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Base scenario; RB and preamble counts are filled in by [`Self::scenario`].
    pub base: ScenarioConfig,
    pub rb: RbSetting,
    pub preambles: PreambleSetting,
    pub agent: AgentChoice,
    pub decision_mode: DecisionMode,
    pub checkpoint: Option<PathBuf>,
    pub training: VtraceConfig,
    pub train_episodes: usize,
    pub eval_episodes: usize,
    pub write_trace: bool,
    pub sweep: Option<SweepSpec>,
    pub ablation_masks: Vec<String>,
    pub output_dir: Option<PathBuf>,
    pub master_seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            base: ScenarioConfig::default(),
            rb: RbSetting::Ratio(1.0),
            preambles: PreambleSetting::Ratio(5.0),
            agent: AgentChoice::Dho,
            decision_mode: DecisionMode::Sample,
            checkpoint: None,
            training: VtraceConfig::default(),
            train_episodes: 2000,
            eval_episodes: 1000,
            write_trace: true,
            sweep: None,
            ablation_masks: FeatureMask::NAMES.iter().map(|s| s.to_string()).collect(),
            output_dir: None,
            master_seed: 0,
        }
    }
}

fn bad(field: &str, reason: impl Into<String>) -> Error {
    Error::config(field, reason)
}

fn as_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(bad(key, format!("expected a number, got {}", v.type_str()))),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::Float(f) if *f >= 0.0 && f.fract() == 0.0 && *f < 2f64.powi(63) => Ok(*f as u64),
        _ => Err(bad(key, format!("expected a non-negative integer, got {v}"))),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize> {
    as_u64(key, v).map(|x| x as usize)
}

fn as_u32(key: &str, v: &Value) -> Result<u32> {
    u32::try_from(as_u64(key, v)?).map_err(|_| bad(key, "value too large"))
}

fn as_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| bad(key, format!("expected a string, got {}", v.type_str())))
}

fn as_bool(key: &str, v: &Value) -> Result<bool> {
    match v {
        Value::Boolean(b) => Ok(*b),
        Value::String(s) if s == "on" || s == "true" => Ok(true),
        Value::String(s) if s == "off" || s == "false" => Ok(false),
        _ => Err(bad(key, format!("expected a boolean (or \"on\"/\"off\"), got {v}"))),
    }
}

fn as_array<'a>(key: &str, v: &'a Value) -> Result<&'a Vec<Value>> {
    v.as_array().ok_or_else(|| bad(key, format!("expected an array, got {}", v.type_str())))
}

/// Short names accepted on the command line and in `sweep.parameter`.
pub fn canonical_key(name: &str) -> String {
    if name.contains('.') {
        return name.to_string();
    }
    match name {
        "J" | "K" | "N" | "R" | "P" | "nu" | "rb_ratio" | "preamble_ratio" | "tau_s" | "area_m" | "mask" => {
            format!("scenario.{name}")
        }
        "rb-ratio" => "scenario.rb_ratio".into(),
        "preamble-ratio" => "scenario.preamble_ratio".into(),
        other => format!("train.{other}"),
    }
}

/// Converts a sweep value to the TOML type its key expects.
pub fn sweep_value(key: &str, x: f64) -> Value {
    let integral = matches!(
        key,
        "scenario.J" | "scenario.K" | "scenario.N" | "scenario.R" | "scenario.P" | "train.batch_size" | "train.actors"
    );
    if integral && x.fract() == 0.0 && x >= 0.0 {
        Value::Integer(x as i64)
    } else {
        Value::Float(x)
    }
}

impl ExperimentSpec {
    pub fn preset(name: &str) -> Result<Self> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::Spec(format!("unknown preset `{name}` (known: case1, case2, case3, case4)")))?;
        let mut spec = ExperimentSpec::default();
        spec.apply_toml(text)?;
        Ok(spec)
    }

    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|(n, _)| *n)
    }

    /// Parses spec text. A top-level `preset = "caseN"` starts from that preset.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Spec(e.to_string()))?;
        let mut spec = match table.get("preset") {
            Some(v) => Self::preset(as_str("preset", v)?)?,
            None => ExperimentSpec::default(),
        };
        spec.apply_table(&table)?;
        Ok(spec)
    }

    /// Loads a spec file, or a preset when `source` names one and no such file exists.
    pub fn load(source: &str) -> Result<Self> {
        let path = Path::new(source);
        if !path.exists() && PRESETS.iter().any(|(n, _)| *n == source) {
            return Self::preset(source);
        }
        let text = fs::read_to_string(path).map_err(|e| Error::Spec(format!("cannot read {source}: {e}")))?;
        Self::from_toml_str(&text)
    }

    fn apply_toml(&mut self, text: &str) -> Result<()> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Spec(e.to_string()))?;
        self.apply_table(&table)
    }

    fn apply_table(&mut self, table: &toml::Table) -> Result<()> {
        let mut flat = Vec::new();
        flatten("", table, &mut flat);
        for (key, value) in flat {
            if key == "preset" {
                continue;
            }
            self.set(&key, &value)?;
        }
        Ok(())
    }

    /// Assigns one dotted key.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        let sc = &mut self.base;
        match key {
            "seed" => self.master_seed = as_u64(key, v)?,
            "output.dir" => self.output_dir = Some(PathBuf::from(as_str(key, v)?)),

            "scenario.J" => sc.num_ues = as_usize(key, v)?,
            "scenario.K" => sc.num_planes = as_usize(key, v)?,
            "scenario.N" => sc.horizon = as_usize(key, v)?,
            "scenario.R" => {
                self.rb = match v {
                    Value::Array(items) => RbSetting::PerTarget(
                        items.iter().map(|x| as_u32(key, x)).collect::<Result<Vec<_>>>()?,
                    ),
                    other => RbSetting::Each(as_u32(key, other)?),
                }
            }
            "scenario.rb_ratio" => {
                let r = as_f64(key, v)?;
                if !(r >= 0.0) || !r.is_finite() {
                    return Err(bad(key, "must be finite and non-negative"));
                }
                self.rb = RbSetting::Ratio(r);
            }
            "scenario.P" => self.preambles = PreambleSetting::Count(as_u32(key, v)?),
            "scenario.preamble_ratio" => {
                let r = as_f64(key, v)?;
                if !(r > 0.0) || !r.is_finite() {
                    return Err(bad(key, "must be positive"));
                }
                self.preambles = PreambleSetting::Ratio(r);
            }
            "scenario.tau_s" => sc.slot_s = as_f64(key, v)?,
            "scenario.nu" => sc.nu = as_f64(key, v)?,
            "scenario.area_m" => sc.area_m = as_f64(key, v)?,
            "scenario.altitude_m" => sc.altitude_m = as_f64(key, v)?,
            "scenario.sats_per_plane" => sc.sats_per_plane = as_usize(key, v)?,
            "scenario.mask" => {
                let name = as_str(key, v)?;
                sc.features = FeatureMask::named(name)
                    .ok_or_else(|| bad(key, format!("unknown mask `{name}` (known: {})", FeatureMask::NAMES.join(", "))))?;
            }
            "scenario.ue_positions" => {
                sc.placement = match v {
                    Value::String(s) if s == "uniform" => UePlacement::Uniform,
                    Value::Array(items) => UePlacement::Explicit(
                        items
                            .iter()
                            .map(|p| {
                                let xy = as_array(key, p)?;
                                if xy.len() != 2 {
                                    return Err(bad(key, "each position is [x, y] in meters"));
                                }
                                Ok([as_f64(key, &xy[0])?, as_f64(key, &xy[1])?])
                            })
                            .collect::<Result<Vec<_>>>()?,
                    ),
                    _ => return Err(bad(key, "expected \"uniform\" or a list of [x, y] pairs")),
                }
            }
            "scenario.terminal" => {
                let name = as_str(key, v)?;
                sc.terminal =
                    TerminalProfile::preset(name).ok_or_else(|| bad(key, format!("unknown terminal `{name}` (known: handheld, vsat)")))?;
            }
            "terminal.carrier_ghz" => sc.terminal.carrier_ghz = as_f64(key, v)?,
            "terminal.bandwidth_hz" => sc.terminal.bandwidth_hz = as_f64(key, v)?,
            "terminal.tx_power_dbm" => sc.terminal.tx_power_dbm = as_f64(key, v)?,
            "terminal.tx_antenna_gain_dbi" => sc.terminal.tx_antenna_gain_dbi = as_f64(key, v)?,
            "terminal.atmospheric_loss_db" => sc.terminal.atmospheric_loss_db = as_f64(key, v)?,
            "terminal.shadow_margin_db" => sc.terminal.shadow_margin_db = as_f64(key, v)?,
            "terminal.scintillation_loss_db" => sc.terminal.scintillation_loss_db = as_f64(key, v)?,
            "terminal.g_over_t_db_per_k" => sc.terminal.g_over_t_db_per_k = as_f64(key, v)?,

            "measurement.period_s" => sc.measurement.period_s = as_f64(key, v)?,
            "measurement.iir_order" => sc.measurement.iir_order = as_u32(key, v)?,
            "measurement.a3_offset_db" => sc.measurement.a3_offset_db = as_f64(key, v)?,
            "measurement.shadowing_sigma_db" => sc.measurement.shadowing_sigma_db = as_f64(key, v)?,
            "measurement.dl_eirp_dbw" => sc.measurement.dl_eirp_dbw = as_f64(key, v)?,
            "measurement.ttt_slots" => sc.measurement.consecutive_slots_to_trigger = as_u32(key, v)?,

            "agent.kind" => {
                let name = as_str(key, v)?;
                self.agent = AgentChoice::parse(name)
                    .ok_or_else(|| bad(key, format!("unknown agent `{name}` (known: conventional, random, dho)")))?;
            }
            "agent.mode" => {
                let name = as_str(key, v)?;
                self.decision_mode =
                    DecisionMode::parse(name).ok_or_else(|| bad(key, "expected \"sample\" or \"greedy\""))?;
            }
            "agent.checkpoint" => self.checkpoint = Some(PathBuf::from(as_str(key, v)?)),

            "train.episodes" => self.train_episodes = as_usize(key, v)?,
            "train.gamma" => self.training.gamma = as_f64(key, v)?,
            "train.rho_bar" => self.training.rho_bar = as_f64(key, v)?,
            "train.c_bar" => self.training.c_bar = as_f64(key, v)?,
            "train.learning_rate" => self.training.learning_rate = as_f64(key, v)?,
            "train.entropy_coeff" => self.training.entropy_coeff = as_f64(key, v)?,
            "train.baseline_coeff" => self.training.baseline_coeff = as_f64(key, v)?,
            "train.batch_size" => self.training.batch_size = as_usize(key, v)?,
            "train.actors" => self.training.actors = as_usize(key, v)?,
            "train.vtrace" => self.training.vtrace_enabled = as_bool(key, v)?,
            "train.max_grad_norm" => self.training.max_grad_norm = as_f64(key, v)?,
            "train.hidden" => {
                self.training.hidden = as_array(key, v)?
                    .iter()
                    .map(|x| as_usize(key, x))
                    .collect::<Result<Vec<_>>>()?
            }

            "eval.episodes" => self.eval_episodes = as_usize(key, v)?,
            "eval.trace" => self.write_trace = as_bool(key, v)?,

            "sweep.parameter" => self.sweep_mut().parameter = canonical_key(as_str(key, v)?),
            "sweep.values" => {
                self.sweep_mut().values = as_array(key, v)?
                    .iter()
                    .map(|x| as_f64(key, x))
                    .collect::<Result<Vec<_>>>()?
            }
            "sweep.agents" => {
                self.sweep_mut().agents = as_array(key, v)?
                    .iter()
                    .map(|x| {
                        let name = as_str(key, x)?;
                        AgentChoice::parse(name).ok_or_else(|| bad(key, format!("unknown agent `{name}`")))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            "sweep.return_threshold" => self.sweep_mut().return_threshold = as_f64(key, v)?,

            "ablation.masks" => {
                let masks = as_array(key, v)?
                    .iter()
                    .map(|x| as_str(key, x).map(str::to_string))
                    .collect::<Result<Vec<_>>>()?;
                if let Some(m) = masks.iter().find(|m| FeatureMask::named(m).is_none()) {
                    return Err(bad(key, format!("unknown mask `{m}`")));
                }
                self.ablation_masks = masks;
            }
            _ => return Err(bad(key, "unknown key")),
        }
        Ok(())
    }

    fn sweep_mut(&mut self) -> &mut SweepSpec {
        self.sweep.get_or_insert_with(|| SweepSpec {
            parameter: String::new(),
            values: Vec::new(),
            agents: Vec::new(),
            return_threshold: -0.25,
        })
    }

    /// The scenario with RB and preamble budgets resolved against J and K.
    pub fn scenario(&self) -> Result<ScenarioConfig> {
        let mut sc = self.base.clone();
        let targets = sc.num_planes.saturating_sub(1);
        match &self.rb {
            RbSetting::Ratio(r) => sc.set_rb_ratio(*r),
            RbSetting::Each(n) => sc.rb_total = vec![*n; targets],
            RbSetting::PerTarget(v) => sc.rb_total = v.clone(),
        }
        match self.preambles {
            PreambleSetting::Ratio(r) => sc.set_preamble_ratio(r),
            PreambleSetting::Count(p) => sc.preambles = p,
        }
        if let RbSetting::PerTarget(v) = &self.rb {
            if v.len() != targets {
                return Err(bad("scenario.R", format!("expected {targets} entries (one per target plane)")));
            }
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario()?;
        if self.agent == AgentChoice::Dho && self.checkpoint.is_none() {
            self.training.validate()?;
            if self.train_episodes == 0 {
                return Err(bad("train.episodes", "must be positive"));
            }
        }
        if self.eval_episodes == 0 {
            return Err(bad("eval.episodes", "must be at least 1"));
        }
        if let Some(sw) = &self.sweep {
            if sw.parameter.is_empty() {
                return Err(bad("sweep.parameter", "missing"));
            }
            if sw.values.is_empty() {
                return Err(bad("sweep.values", "need at least one value"));
            }
            for &x in &sw.values {
                let mut probe = self.clone();
                probe.set(&sw.parameter, &sweep_value(&sw.parameter, x)).map_err(|e| match e {
                    Error::Config { field, reason } if reason == "unknown key" => {
                        bad("sweep.parameter", format!("`{field}` is not a sweepable parameter"))
                    }
                    other => other,
                })?;
                probe.sweep = None;
                probe.scenario()?;
            }
        }
        Ok(())
    }

    /// `--out`, then `output.dir`, then the environment variable, then `results`.
    pub fn resolve_output_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"))
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            // `[terminal]` custom fields and `[scenario]` tables both flatten
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve_resource_budgets() {
        let expect = [("case1", 10, 50), ("case2", 3, 50), ("case3", 10, 20), ("case4", 10, 8)];
        for (name, rb, p) in expect {
            let sc = ExperimentSpec::preset(name).unwrap().scenario().unwrap();
            assert_eq!(sc.rb_total, vec![rb, rb], "{name}");
            assert_eq!(sc.preambles, p, "{name}");
            assert_eq!((sc.num_ues, sc.num_planes, sc.horizon), (10, 3, 20));
        }
    }

    #[test]
    fn dotted_keys_and_tables_agree() {
        let a = ExperimentSpec::from_toml_str("scenario.J = 20\nscenario.nu = 5\ntrain.hidden = [64]\n").unwrap();
        let b = ExperimentSpec::from_toml_str("[scenario]\nJ = 20\nnu = 5.0\n[train]\nhidden = [64]\n").unwrap();
        assert_eq!(a, b);
        let sc = a.scenario().unwrap();
        assert_eq!(sc.rb_total, vec![20, 20]);
        assert_eq!(sc.preambles, 100);
        assert_eq!(sc.nu, 5.0);
    }

    #[test]
    fn preset_base_with_overrides() {
        let s = ExperimentSpec::from_toml_str("preset = \"case2\"\nagent.kind = \"random\"\nseed = 7\n").unwrap();
        assert_eq!(s.agent, AgentChoice::Random);
        assert_eq!(s.master_seed, 7);
        assert_eq!(s.scenario().unwrap().rb_total, vec![3, 3]);
    }

    #[test]
    fn field_level_errors() {
        let err = ExperimentSpec::from_toml_str("scenario.J = \"ten\"").unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "scenario.J"), "{err}");
        let err = ExperimentSpec::from_toml_str("scenario.bogus = 1").unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "scenario.bogus"));
        let err = ExperimentSpec::from_toml_str("scenario.J = 0").unwrap().validate().unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "scenario.J"));
        assert!(matches!(ExperimentSpec::from_toml_str("scenario.J = "), Err(Error::Spec(_))));
        assert!(ExperimentSpec::from_toml_str("preset = \"case9\"").is_err());
        let err = ExperimentSpec::from_toml_str("scenario.R = [1, 2, 3]").unwrap().scenario().unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "scenario.R"));
    }

    #[test]
    fn sweep_parameter_must_exist() {
        let s = ExperimentSpec::from_toml_str("sweep.parameter = \"nu\"\nsweep.values = [5, 0.05]\n").unwrap();
        assert_eq!(s.sweep.as_ref().unwrap().parameter, "scenario.nu");
        s.validate().unwrap();
        let s = ExperimentSpec::from_toml_str("sweep.parameter = \"warp_factor\"\nsweep.values = [1]\n").unwrap();
        let err = s.validate().unwrap_err();
        assert!(matches!(&err, Error::Config { field, .. } if field == "sweep.parameter"), "{err}");
    }

    #[test]
    fn explicit_counts_survive_j_changes() {
        let mut s = ExperimentSpec::from_toml_str("scenario.R = 4\nscenario.P = 9\n").unwrap();
        s.set("scenario.J", &Value::Integer(30)).unwrap();
        let sc = s.scenario().unwrap();
        assert_eq!(sc.rb_total, vec![4, 4]);
        assert_eq!(sc.preambles, 9);
    }
}
