//! Run configuration. Frequencies are given as ordinary frequencies in MHz
//! (Ω/2π), rates in 1/μs and lengths in μm; everything is converted to
//! rad/s, 1/s and μm on resolution.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rydgate::hilbert::SystemLayout;
use rydgate::params::{GateKind, ProtocolParams};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

const MHZ: f64 = 2.0 * PI * 1e6;
const PER_US: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Trajectory,
    Sweep,
    Fidelity,
    Validate,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(Value::String(s.to_string())).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Ω_e/2π = 44 MHz, Ω_c = 2.5Ω_e, Ω_r = Ω_e, Δ = 10Ω_e, n = 94, l = 4 μm,
    /// τ_r = τ_R = 100 μs, τ_e = 26 ns.
    #[default]
    Paper,
}

/// Parameter overrides. Unset fields keep the profile value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_e_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_c_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_r_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_big_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_prime_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_c_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_c_prime_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_cc_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_e_per_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_r_per_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_big_r_per_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub principal_n: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_um: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    /// Ω_c/Ω_e.
    #[serde(rename = "omega_ratio")]
    OmegaRatio,
    /// δ in units of Ω_c.
    #[serde(rename = "delta")]
    Delta,
    /// δ′ in units of Ω_c.
    #[serde(rename = "delta_prime")]
    DeltaPrime,
    /// V in units of Ω_c²/(4Δ).
    #[serde(rename = "V")]
    V,
    /// Δ in units of Ω_e.
    #[serde(rename = "delta_big")]
    DeltaBig,
    /// γ_e in 1/μs.
    #[serde(rename = "gamma_e")]
    GammaE,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SweepScale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Target stays in |A⟩.
    Blocking,
    /// Target ends in |B⟩.
    Transfer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    #[serde(default)]
    pub scale: SweepScale,
    pub metric: Metric,
    /// Control pattern over `0`/`1`, e.g. `"10"`.
    pub branch: String,
}

impl SweepConfig {
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|k| {
                let f = k as f64 / (n - 1) as f64;
                match self.scale {
                    SweepScale::Linear => self.from + f * (self.to - self.from),
                    SweepScale::Log => (self.from.ln() + f * (self.to.ln() - self.from.ln())).exp(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

fn yes() -> bool {
    true
}

fn default_points() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub gate: GateKind,
    pub mode: Mode,
    #[serde(default)]
    pub defaults: Profile,
    #[serde(default)]
    pub params: ParamOverrides,
    /// Keep the control-control interaction at its geometric value; when
    /// false V_cc (and the antiblockade detunings derived from it) are zero.
    #[serde(default = "yes")]
    pub include_control_interaction: bool,
    /// Tie δ = V, δ′ = 2V, δ_c = V_cc, δ_c′ = 2V_cc. Explicit detuning
    /// overrides still win.
    #[serde(default = "yes")]
    pub resonance_lock: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<String>,
    #[serde(default = "yes")]
    pub decay: bool,
    #[serde(default = "yes")]
    pub phase_correct: bool,
    /// Replace the simulated channel by the ideal gate (fidelity mode).
    #[serde(default)]
    pub ideal_shortcut: bool,
    #[serde(default = "default_points")]
    pub points_per_segment: usize,
    /// Refuse to run when a mandatory regime check fails.
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub output: OutputConfig,
    /// Reserved; every run is deterministic.
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn new(gate: GateKind, mode: Mode) -> Self {
        serde_json::from_value(serde_json::json!({ "gate": gate, "mode": mode })).expect("minimal config")
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `key=value`. Dotted keys address nested fields; bare keys
    /// naming a parameter override go to `params`. Values are read as JSON,
    /// falling back to a plain string.
    pub fn apply_set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {assignment:?}")))?;
        let key = key.trim();
        let value: Value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
        let mut doc = serde_json::to_value(&*self).expect("config serializes");
        let path: Vec<&str> = if key.contains('.') {
            key.split('.').collect()
        } else if is_top_level(key) {
            vec![key]
        } else if is_param(key) {
            vec!["params", key]
        } else {
            return Err(CliError::Config(format!("unknown key {key:?}")));
        };
        let mut node = &mut doc;
        for part in &path[..path.len() - 1] {
            if node.get(*part).is_none() {
                node[*part] = Value::Object(Default::default());
            }
            node = node.get_mut(*part).expect("just inserted");
        }
        node[*path.last().expect("nonempty")] = value;
        let cfg: Self = serde_json::from_value(doc).map_err(|e| CliError::Config(format!("--set {key}: {e}")))?;
        cfg.validate()?;
        *self = cfg;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(s) = &self.sweep {
            if !(s.from.is_finite() && s.to.is_finite() && s.from < s.to) {
                return Err(CliError::Config(format!("sweep: bounds must satisfy from < to, got {} and {}", s.from, s.to)));
            }
            if s.points < 2 {
                return Err(CliError::Config(format!("sweep.points: need at least 2, got {}", s.points)));
            }
            if s.scale == SweepScale::Log && s.from <= 0.0 {
                return Err(CliError::Config("sweep.from: log scale needs a positive lower bound".into()));
            }
            let n = self.gate.n_controls();
            if s.branch.len() != n || s.branch.chars().any(|c| c != '0' && c != '1') {
                return Err(CliError::Config(format!("sweep.branch: expected {n} characters over 0/1, got {:?}", s.branch)));
            }
        }
        if let Some(label) = &self.initial_state {
            let layout = SystemLayout::with_controls(self.gate.n_controls()).map_err(|e| CliError::Config(e.to_string()))?;
            layout
                .parse_label(label)
                .map_err(|e| CliError::Config(format!("initial_state: {e}")))?;
        }
        if self.points_per_segment == 1 {
            return Err(CliError::Config("points_per_segment: use 0 or at least 2".into()));
        }
        self.resolve_params().map(|_| ())
    }

    /// Field checks plus the mode-dependent requirements; run before
    /// executing, after every override has been applied.
    pub fn check_complete(&self) -> Result<(), CliError> {
        self.validate()?;
        if self.mode == Mode::Sweep && self.sweep.is_none() {
            return Err(CliError::Config("sweep: required in sweep mode".into()));
        }
        Ok(())
    }

    /// Physical parameters after profile, geometry, switches and overrides.
    pub fn resolve_params(&self) -> Result<ProtocolParams, CliError> {
        let o = &self.params;
        let mut p = match self.defaults {
            Profile::Paper => ProtocolParams::paper_defaults(self.gate),
        };
        let mhz = |x: Option<f64>| x.map(|v| v * MHZ);
        if o.principal_n.is_some() || o.l_um.is_some() {
            p.principal_n = o.principal_n.unwrap_or(p.principal_n);
            p.l = o.l_um.unwrap_or(p.l);
            p = p.with_geometry(self.gate).map_err(|e| CliError::Config(e.to_string()))?;
        }
        p.omega_e = mhz(o.omega_e_mhz).unwrap_or(p.omega_e);
        if o.omega_e_mhz.is_some() {
            // keep the profile ratios unless they are overridden too
            p.omega_c = 2.5 * p.omega_e;
            p.omega_r = p.omega_e;
            p.delta_big = 10.0 * p.omega_e;
        }
        p.omega_c = mhz(o.omega_c_mhz).unwrap_or(p.omega_c);
        p.omega_r = mhz(o.omega_r_mhz).unwrap_or(p.omega_r);
        p.delta_big = mhz(o.delta_big_mhz).unwrap_or(p.delta_big);
        p.v = mhz(o.v_mhz).unwrap_or(p.v);
        p.v_cc = mhz(o.v_cc_mhz).unwrap_or(p.v_cc);
        if !self.include_control_interaction {
            p.v_cc = 0.0;
        }
        if self.resonance_lock {
            p = p.lock_resonances();
        }
        p.delta = mhz(o.delta_mhz).unwrap_or(p.delta);
        p.delta_prime = mhz(o.delta_prime_mhz).unwrap_or(p.delta_prime);
        p.delta_c = mhz(o.delta_c_mhz).unwrap_or(p.delta_c);
        p.delta_c_prime = mhz(o.delta_c_prime_mhz).unwrap_or(p.delta_c_prime);
        let rate = |x: Option<f64>, d: f64| x.map_or(d, |v| v * PER_US);
        p.gamma_e = rate(o.gamma_e_per_us, p.gamma_e);
        p.gamma_r = rate(o.gamma_r_per_us, p.gamma_r);
        p.gamma_rt = rate(o.gamma_big_r_per_us, p.gamma_rt);
        if !self.decay {
            p = p.without_decay();
        }
        p.check().map_err(|e| CliError::Config(format!("params: {e}")))?;
        Ok(p)
    }
}

/// Parameters at one sweep point. With the resonance lock on, sweeping δ
/// or V moves both (δ = V, δ′ = 2V).
pub fn sweep_point(base: &ProtocolParams, parameter: SweepParameter, x: f64, lock: bool) -> ProtocolParams {
    let mut p = base.clone();
    match parameter {
        SweepParameter::OmegaRatio => p.omega_c = x * p.omega_e,
        SweepParameter::Delta => {
            p.delta = x * p.omega_c;
            if lock {
                p.v = p.delta;
                p.delta_prime = 2.0 * p.v;
            }
        }
        SweepParameter::DeltaPrime => p.delta_prime = x * p.omega_c,
        SweepParameter::V => {
            p.v = x * p.stark_unit();
            if lock {
                p.delta = p.v;
                p.delta_prime = 2.0 * p.v;
            }
        }
        SweepParameter::DeltaBig => p.delta_big = x * p.omega_e,
        SweepParameter::GammaE => p.gamma_e = x * PER_US,
    }
    p
}

fn is_top_level(key: &str) -> bool {
    matches!(
        key,
        "gate"
            | "mode"
            | "defaults"
            | "params"
            | "include_control_interaction"
            | "resonance_lock"
            | "sweep"
            | "initial_state"
            | "decay"
            | "phase_correct"
            | "ideal_shortcut"
            | "points_per_segment"
            | "strict"
            | "output"
            | "seed"
    )
}

fn is_param(key: &str) -> bool {
    matches!(
        key,
        "omega_e_mhz"
            | "omega_c_mhz"
            | "omega_r_mhz"
            | "delta_big_mhz"
            | "delta_mhz"
            | "delta_prime_mhz"
            | "delta_c_mhz"
            | "delta_c_prime_mhz"
            | "v_mhz"
            | "v_cc_mhz"
            | "gamma_e_per_us"
            | "gamma_r_per_us"
            | "gamma_big_r_per_us"
            | "principal_n"
            | "l_um"
    )
}
