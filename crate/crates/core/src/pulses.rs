//! Pulse envelopes and the per-gate pulse schedules.
//!
//! A drive on transition `(a, b)` of one atom contributes
//! `env(t)/2 · e^{i(detuning·t + phase)} |a⟩⟨b| + h.c.`, with `t` measured
//! from the start of the segment. For the coupling lasers `(a, b) = (e, R)`;
//! for the control π pulses `(a, b) = (g1, r)`, so a resonant π pulse maps
//! |1⟩ → −i|r⟩.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::hilbert::{Level, SystemLayout};
use crate::params::{derive_timings, validate_regime, DerivedTimings, GateKind, ParamError, ProtocolParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Envelope {
    Constant { peak: f64 },
    /// `(peak/2)(1 − cos(2πt/duration))` on `[0, duration]`, zero outside.
    RaisedCosine { peak: f64, duration: f64 },
}

impl Envelope {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Envelope::Constant { peak } => peak,
            Envelope::RaisedCosine { peak, duration } => {
                if (0.0..=duration).contains(&t) {
                    0.5 * peak * (1.0 - (2.0 * PI * t / duration).cos())
                } else {
                    0.0
                }
            }
        }
    }

    pub fn peak(&self) -> f64 {
        match *self {
            Envelope::Constant { peak } | Envelope::RaisedCosine { peak, .. } => peak,
        }
    }

    /// `∫₀^T env(t) dt`.
    pub fn integral(&self, t: f64) -> f64 {
        match *self {
            Envelope::Constant { peak } => peak * t,
            Envelope::RaisedCosine { peak, duration } => {
                let t = t.clamp(0.0, duration);
                0.5 * peak * (t - duration / (2.0 * PI) * (2.0 * PI * t / duration).sin())
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Envelope::Constant { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drive {
    pub atom: usize,
    /// `(a, b)`: the drive term is `env/2 · e^{i(detuning·t + phase)} |a⟩⟨b|` plus its adjoint.
    pub transition: [Level; 2],
    pub envelope: Envelope,
    #[serde(rename = "detuning_rad_s")]
    pub detuning: f64,
    pub phase: f64,
}

impl Drive {
    pub fn new(atom: usize, a: Level, b: Level, envelope: Envelope, detuning: f64) -> Self {
        Self {
            atom,
            transition: [a, b],
            envelope,
            detuning,
            phase: 0.0,
        }
    }
}

/// Static energy offset of one level, e.g. `−Δ|e⟩⟨e|` on the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelShift {
    pub atom: usize,
    pub level: Level,
    #[serde(rename = "energy_rad_s")]
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub label: String,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    pub drives: Vec<Drive>,
    #[serde(default)]
    pub level_shifts: Vec<LevelShift>,
}

impl Segment {
    /// Drives active at segment-local time `t`, with their instantaneous
    /// amplitudes.
    pub fn active_drives(&self, t: f64) -> Vec<(&Drive, f64)> {
        self.drives
            .iter()
            .map(|d| (d, d.envelope.value(t)))
            .filter(|(_, a)| *a != 0.0)
            .collect()
    }

    /// Checks that every drive and shift refers to an existing atom/level.
    pub fn check_against(&self, layout: &SystemLayout) -> Result<(), String> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(format!("segment {:?} has non-positive duration", self.label));
        }
        for d in &self.drives {
            let scheme = layout.atom(d.atom).map_err(|e| e.to_string())?;
            for l in d.transition {
                if !scheme.contains(l) {
                    return Err(format!("drive on atom {} uses level {l} of the wrong role", d.atom));
                }
            }
            if d.transition[0] == d.transition[1] {
                return Err(format!("drive on atom {} couples level {} to itself", d.atom, d.transition[0]));
            }
            if !d.detuning.is_finite() || !d.phase.is_finite() {
                return Err(format!("drive on atom {} has non-finite detuning or phase", d.atom));
            }
        }
        for s in &self.level_shifts {
            let scheme = layout.atom(s.atom).map_err(|e| e.to_string())?;
            if !scheme.contains(s.level) {
                return Err(format!("level shift on atom {} uses level {}", s.atom, s.level));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub segments: Vec<Segment>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PulseSchedule {
    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Absolute start time of each segment.
    pub fn segment_starts(&self) -> Vec<f64> {
        let mut t = 0.0;
        self.segments
            .iter()
            .map(|s| {
                let start = t;
                t += s.duration;
                start
            })
            .collect()
    }

    /// Segment index and local time for an absolute time `t`.
    pub fn locate(&self, t: f64) -> Option<(usize, f64)> {
        let mut start = 0.0;
        for (k, s) in self.segments.iter().enumerate() {
            if t < start + s.duration || k + 1 == self.segments.len() && t <= start + s.duration {
                return (t >= start).then_some((k, t - start));
            }
            start += s.duration;
        }
        None
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

fn control_pulse(label: &str, atom: usize, p: &ProtocolParams, duration: f64, detuning: f64) -> Segment {
    Segment {
        label: label.to_string(),
        duration,
        drives: vec![Drive::new(
            atom,
            Level::G1,
            Level::Ryd,
            Envelope::Constant { peak: p.omega_r },
            detuning,
        )],
        level_shifts: vec![],
    }
}

/// Raman π pulse on the target with the coupling lasers at `detunings`.
fn raman_segment(target: usize, p: &ProtocolParams, t: &DerivedTimings, detunings: &[f64]) -> Segment {
    let raman = Envelope::RaisedCosine {
        peak: p.omega_e,
        duration: t.t2,
    };
    let mut drives = vec![
        Drive::new(target, Level::A, Level::E, raman, 0.0),
        Drive::new(target, Level::B, Level::E, raman, 0.0),
    ];
    for &d in detunings {
        drives.push(Drive::new(
            target,
            Level::E,
            Level::RydT,
            Envelope::Constant { peak: p.omega_c },
            d,
        ));
    }
    Segment {
        label: "raman".into(),
        duration: t.t2,
        drives,
        level_shifts: vec![LevelShift {
            atom: target,
            level: Level::E,
            energy: -p.delta_big,
        }],
    }
}

fn regime_warnings(p: &ProtocolParams, gate: GateKind) -> Vec<String> {
    validate_regime(p, gate)
        .into_iter()
        .filter(|f| !f.pass)
        .map(|f| format!("{} ({}) fails: ratio {:.4} vs threshold {}", f.name, f.description, f.ratio, f.threshold))
        .collect()
}

/// Simultaneous resonant π pulses on both controls, the Raman segment with
/// coupling lasers at {0, δ}, then the control pulses again.
pub fn schedule_toffoli_linear(p: &ProtocolParams) -> Result<PulseSchedule, ParamError> {
    let gate = GateKind::ToffoliLinear;
    let t = derive_timings(p, gate)?;
    let both = |label: &str| Segment {
        label: label.to_string(),
        duration: t.t1,
        drives: (0..2)
            .map(|c| Drive::new(c, Level::G1, Level::Ryd, Envelope::Constant { peak: p.omega_r }, 0.0))
            .collect(),
        level_shifts: vec![],
    };
    Ok(PulseSchedule {
        segments: vec![
            both("controls-open"),
            raman_segment(2, p, &t, &[0.0, p.delta]),
            both("controls-close"),
        ],
        warnings: regime_warnings(p, gate),
    })
}

/// Sequential antiblockade excitation of the controls: resonant on control 1,
/// then detuned by δ_c on control 2; Raman segment; mirror-reversed controls.
pub fn schedule_toffoli_planar(p: &ProtocolParams) -> Result<PulseSchedule, ParamError> {
    let gate = GateKind::ToffoliPlanar;
    let t = derive_timings(p, gate)?;
    let c1 = control_pulse("control-1", 0, p, t.t1, 0.0);
    let c2 = control_pulse("control-2", 1, p, t.t1, p.delta_c);
    let mut warnings = regime_warnings(p, gate);
    if (p.delta_c - p.v_cc).abs() > 1e-9 * p.v_cc.max(1.0) {
        warnings.push(format!(
            "delta_c ({:.6e}) differs from v_cc ({:.6e}); antiblockade condition not met",
            p.delta_c, p.v_cc
        ));
    }
    let mut c2_close = c2.clone();
    c2_close.duration = t.t3;
    let mut c1_close = c1.clone();
    c1_close.duration = t.t3;
    Ok(PulseSchedule {
        segments: vec![c1, c2, raman_segment(2, p, &t, &[0.0, p.delta]), c2_close, c1_close],
        warnings,
    })
}

/// Three sequential control pulses at detunings (0, δ_c, δ_c′), the Raman
/// segment with coupling lasers at {0, δ, δ′}, then the control pulses in
/// reverse order.
pub fn schedule_c3not(p: &ProtocolParams) -> Result<PulseSchedule, ParamError> {
    let gate = GateKind::C3Not;
    let t = derive_timings(p, gate)?;
    let opens = [
        control_pulse("control-1", 0, p, t.t1, 0.0),
        control_pulse("control-2", 1, p, t.t1, p.delta_c),
        control_pulse("control-3", 2, p, t.t1, p.delta_c_prime),
    ];
    let mut warnings = regime_warnings(p, gate);
    if (p.delta_c - p.v_cc).abs() > 1e-9 * p.v_cc.max(1.0) {
        warnings.push("delta_c differs from v_cc; two-atom antiblockade not met".into());
    }
    if (p.delta_c_prime - 2.0 * p.v_cc).abs() > 1e-9 * p.v_cc.max(1.0) {
        warnings.push("delta_c_prime differs from 2 v_cc; three-atom antiblockade not met".into());
    }
    let mut segments: Vec<Segment> = opens.to_vec();
    segments.push(raman_segment(3, p, &t, &[0.0, p.delta, p.delta_prime]));
    for s in opens.iter().rev() {
        let mut s = s.clone();
        s.duration = t.t3;
        segments.push(s);
    }
    Ok(PulseSchedule { segments, warnings })
}

pub fn schedule_for(gate: GateKind, p: &ProtocolParams) -> Result<PulseSchedule, ParamError> {
    match gate {
        GateKind::ToffoliLinear => schedule_toffoli_linear(p),
        GateKind::ToffoliPlanar => schedule_toffoli_planar(p),
        GateKind::C3Not => schedule_c3not(p),
    }
}

/// Numerically integrates `env(t)²/(2Δ)` over `[0, T]` with composite
/// Simpson's rule on `n` (even) intervals.
pub fn raman_area(env: &Envelope, delta_big: f64, t_end: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = t_end / n as f64;
    let f = |t: f64| env.value(t).powi(2) / (2.0 * delta_big);
    let mut s = f(0.0) + f(t_end);
    for k in 1..n {
        s += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}
