//! Protocol parameters, the C6 fit, geometry and derived timings.
//!
//! Internal units: angular frequencies in rad/s, rates in 1/s, times in s,
//! lengths in μm. Conversions to the MHz (ν = ω/2π) and 1/μs values used in
//! configuration files happen at the CLI boundary.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hartree energy over Planck's constant, in Hz.
pub const HARTREE_HZ: f64 = 6.579_683_920_502e15;
/// Bohr radius in μm.
pub const BOHR_UM: f64 = 5.291_772_109_03e-5;
/// Principal quantum numbers inside which the C6 polynomial is trusted.
pub const C6_FIT_WINDOW: (u32, u32) = (30, 100);

pub const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative and finite, got {value}")]
    Negative { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateKind {
    /// Control, target, control on a line.
    ToffoliLinear,
    /// Equilateral triangle, sequential antiblockade driving of the controls.
    ToffoliPlanar,
    /// Three controls on a triangle around a central target.
    #[serde(rename = "c3not")]
    C3Not,
}

impl GateKind {
    pub const ALL: [GateKind; 3] = [GateKind::ToffoliLinear, GateKind::ToffoliPlanar, GateKind::C3Not];

    pub fn n_controls(self) -> usize {
        match self {
            GateKind::C3Not => 3,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::ToffoliLinear => "toffoli-linear",
            GateKind::ToffoliPlanar => "toffoli-planar",
            GateKind::C3Not => "c3not",
        }
    }

    pub fn parse(s: &str) -> Option<GateKind> {
        Self::ALL.into_iter().find(|g| g.name() == s)
    }

    /// Control-control separation for control-target distance `l`.
    pub fn control_separation(self, l: f64) -> f64 {
        match self {
            GateKind::ToffoliLinear => 2.0 * l,
            GateKind::ToffoliPlanar => l,
            // target at the centre, l is the circumradius
            GateKind::C3Not => l * 3f64.sqrt(),
        }
    }

    /// Number of coupling lasers on the target's e↔R transition.
    pub fn coupling_lasers(self) -> usize {
        match self {
            GateKind::C3Not => 3,
            _ => 2,
        }
    }

    /// Whether the controls are excited one after another with antiblockade
    /// detunings rather than simultaneously.
    pub fn sequential_controls(self) -> bool {
        !matches!(self, GateKind::ToffoliLinear)
    }
}

impl std::fmt::Display for GateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Peak Raman Rabi frequency Ω_e.
    pub omega_e: f64,
    /// Coupling Rabi frequency Ω_c of every e↔R laser.
    pub omega_c: f64,
    /// Control π-pulse Rabi frequency Ω_r.
    pub omega_r: f64,
    /// Raman detuning Δ of the intermediate level.
    pub delta_big: f64,
    /// Detuning δ of the second coupling laser.
    pub delta: f64,
    /// Detuning δ′ of the third coupling laser (three-control gates).
    pub delta_prime: f64,
    /// Antiblockade detuning δ_c of the second control pulse.
    pub delta_c: f64,
    /// Antiblockade detuning δ_c′ of the third control pulse.
    pub delta_c_prime: f64,
    /// Control-target interaction V.
    pub v: f64,
    /// Control-control interaction V_cc.
    pub v_cc: f64,
    pub gamma_e: f64,
    pub gamma_r: f64,
    #[serde(rename = "gamma_big_r")]
    pub gamma_rt: f64,
    pub principal_n: u32,
    /// Control-target distance in μm.
    pub l: f64,
}

impl ProtocolParams {
    /// Ω_e/2π = 44 MHz, Ω_c = 2.5Ω_e, Ω_r = Ω_e, Δ = 10Ω_e, n = 94, l = 4 μm,
    /// Rydberg lifetimes 100 μs, |e⟩ lifetime 26 ns, detunings locked to the
    /// interaction shifts.
    pub fn paper_defaults(gate: GateKind) -> Self {
        let omega_e = TWO_PI * 44e6;
        let n = 94;
        let l = 4.0;
        let c6 = c6_au(n);
        let v = interaction_from_distance(c6, l).expect("positive distance");
        let v_cc = interaction_from_distance(c6, gate.control_separation(l)).expect("positive distance");
        Self {
            omega_e,
            omega_c: 2.5 * omega_e,
            omega_r: omega_e,
            delta_big: 10.0 * omega_e,
            delta: v,
            delta_prime: 2.0 * v,
            delta_c: v_cc,
            delta_c_prime: 2.0 * v_cc,
            v,
            v_cc,
            gamma_e: 1.0 / 26e-9,
            gamma_r: 1.0 / 100e-6,
            gamma_rt: 1.0 / 100e-6,
            principal_n: n,
            l,
        }
    }

    pub fn without_decay(&self) -> Self {
        Self {
            gamma_e: 0.0,
            gamma_r: 0.0,
            gamma_rt: 0.0,
            ..self.clone()
        }
    }

    /// Recomputes V and V_cc from `principal_n` and `l` for `gate`.
    pub fn with_geometry(&self, gate: GateKind) -> Result<Self, ParamError> {
        let c6 = c6_au(self.principal_n);
        Ok(Self {
            v: interaction_from_distance(c6, self.l)?,
            v_cc: interaction_from_distance(c6, gate.control_separation(self.l))?,
            ..self.clone()
        })
    }

    /// Sets δ = V, δ′ = 2V, δ_c = V_cc, δ_c′ = 2V_cc.
    pub fn lock_resonances(&self) -> Self {
        Self {
            delta: self.v,
            delta_prime: 2.0 * self.v,
            delta_c: self.v_cc,
            delta_c_prime: 2.0 * self.v_cc,
            ..self.clone()
        }
    }

    /// Ω_c²/(4Δ), the light shift scale used for V sweeps.
    pub fn stark_unit(&self) -> f64 {
        self.omega_c * self.omega_c / (4.0 * self.delta_big)
    }

    pub fn check(&self) -> Result<(), ParamError> {
        let positive = [
            ("omega_e", self.omega_e),
            ("omega_c", self.omega_c),
            ("omega_r", self.omega_r),
            ("delta_big", self.delta_big),
            ("l", self.l),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamError::NonPositive { name, value });
            }
        }
        let non_negative = [
            ("delta", self.delta),
            ("delta_prime", self.delta_prime),
            ("delta_c", self.delta_c),
            ("delta_c_prime", self.delta_c_prime),
            ("v", self.v),
            ("v_cc", self.v_cc),
            ("gamma_e", self.gamma_e),
            ("gamma_r", self.gamma_r),
            ("gamma_big_r", self.gamma_rt),
        ];
        for (name, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ParamError::Negative { name, value });
            }
        }
        Ok(())
    }
}

/// C6 polynomial fit in atomic units (negative over most of the window).
pub fn c6_au(n: u32) -> f64 {
    let n = n as f64;
    n.powi(11) * (11.97 - 0.8486 * n + 3.385e-3 * n * n)
}

pub fn c6_in_fit_window(n: u32) -> bool {
    (C6_FIT_WINDOW.0..=C6_FIT_WINDOW.1).contains(&n)
}

/// |C6| converted to linear frequency units, Hz·μm⁶.
pub fn c6_hz_um6(c6_au: f64) -> f64 {
    c6_au.abs() * HARTREE_HZ * BOHR_UM.powi(6)
}

/// Positive level shift |C6|/l⁶ in rad/s for a distance in μm.
pub fn interaction_from_distance(c6_au: f64, l_um: f64) -> Result<f64, ParamError> {
    if !(l_um.is_finite() && l_um > 0.0) {
        return Err(ParamError::NonPositive { name: "l", value: l_um });
    }
    Ok(TWO_PI * c6_hz_um6(c6_au) / l_um.powi(6))
}

/// Inverse of [`interaction_from_distance`]: l = (|C6|/V)^(1/6) in μm.
pub fn distance_from_interaction(c6_au: f64, v: f64) -> Result<f64, ParamError> {
    if !(v.is_finite() && v > 0.0) {
        return Err(ParamError::NonPositive { name: "v", value: v });
    }
    Ok((TWO_PI * c6_hz_um6(c6_au) / v).powf(1.0 / 6.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedTimings {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub total: f64,
}

/// T1 = T3 = π/Ω_r; T2 = 16πΔ/(3Ω_e²) so that the raised-cosine Raman pulse
/// has effective area π.
pub fn derive_timings(p: &ProtocolParams, gate: GateKind) -> Result<DerivedTimings, ParamError> {
    for (name, value) in [("omega_r", p.omega_r), ("omega_e", p.omega_e), ("delta_big", p.delta_big)] {
        if !(value.is_finite() && value > 0.0) {
            return Err(ParamError::NonPositive { name, value });
        }
    }
    let t1 = PI / p.omega_r;
    let t2 = 16.0 * PI * p.delta_big / (3.0 * p.omega_e * p.omega_e);
    let t3 = t1;
    let k = match gate {
        GateKind::ToffoliLinear => 1.0,
        GateKind::ToffoliPlanar => 2.0,
        GateKind::C3Not => 3.0,
    };
    Ok(DerivedTimings {
        t1,
        t2,
        t3,
        total: k * t1 + t2 + k * t3,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub name: String,
    pub description: String,
    pub ratio: f64,
    pub threshold: f64,
    pub pass: bool,
    pub mandatory: bool,
}

impl Finding {
    fn at_least(name: &str, description: &str, ratio: f64, threshold: f64, mandatory: bool) -> Self {
        Self {
            name: name.to_string(),
            description: description.to_string(),
            ratio,
            threshold,
            pass: ratio.is_finite() && ratio > threshold,
            mandatory,
        }
    }
}

/// "≫" is read as a ratio of at least this much.
pub const MUCH_GREATER: f64 = 3.0;
/// Coupling lasers count as far detuned above this multiple of Ω_c.
pub const FAR_DETUNED: f64 = 10.0;

/// Checks the inequalities the protocol relies on. Advisory: findings carry
/// the computed ratio and a pass flag; `mandatory` marks those a strict run
/// refuses to proceed without.
pub fn validate_regime(p: &ProtocolParams, gate: GateKind) -> Vec<Finding> {
    let mut out = Vec::new();
    let positive = p.check().is_ok();
    out.push(Finding {
        name: "positive_parameters".into(),
        description: "Rabi frequencies, Δ and l positive; rates and detunings non-negative".into(),
        ratio: if positive { 1.0 } else { 0.0 },
        threshold: 0.5,
        pass: positive,
        mandatory: true,
    });
    out.push(Finding::at_least(
        "raman_far_detuned",
        "Δ ≫ Ω_c",
        p.delta_big / p.omega_c,
        MUCH_GREATER,
        false,
    ));
    out.push(Finding::at_least(
        "coupling_exceeds_raman",
        "Ω_c > Ω_e",
        p.omega_c / p.omega_e,
        1.0,
        false,
    ));
    out.push(Finding::at_least(
        "dark_state_following",
        "Ω_c/Ω_e > 2",
        p.omega_c / p.omega_e,
        2.0,
        true,
    ));
    out.push(Finding::at_least(
        "l2_far_detuned",
        "δ ≫ Ω_c",
        p.delta / p.omega_c,
        FAR_DETUNED,
        false,
    ));
    if gate == GateKind::C3Not {
        out.push(Finding::at_least(
            "l3_far_detuned",
            "δ′ ≫ Ω_c",
            p.delta_prime / p.omega_c,
            FAR_DETUNED,
            false,
        ));
        out.push(Finding::at_least(
            "l3_shifted_far_detuned",
            "(δ′ − V) ≫ Ω_c",
            (p.delta_prime - p.v) / p.omega_c,
            FAR_DETUNED,
            false,
        ));
    }
    out.push(Finding::at_least(
        "eit_break",
        "V > Ω_c²/(4Δ)",
        p.v / p.stark_unit(),
        1.0,
        true,
    ));
    if let Ok(t) = derive_timings(p, gate) {
        let tau_r = if p.gamma_r > 0.0 { 1.0 / p.gamma_r } else { f64::INFINITY };
        out.push(Finding::at_least(
            "raman_shorter_than_rydberg_lifetime",
            "T2 ≪ τ_r",
            tau_r / t.t2,
            MUCH_GREATER,
            false,
        ));
    }
    let ratio_e = if p.gamma_e > 0.0 { p.delta_big / p.gamma_e } else { f64::INFINITY };
    out.push(Finding {
        name: "raman_detuning_exceeds_e_decay".into(),
        description: "Δ ≫ γ_e".into(),
        ratio: ratio_e,
        threshold: MUCH_GREATER,
        pass: ratio_e > MUCH_GREATER,
        mandatory: false,
    });
    if gate.sequential_controls() {
        let mismatch = (p.delta_c - p.v_cc).abs() / p.omega_r;
        out.push(Finding {
            name: "antiblockade_resonance".into(),
            description: "|δ_c − V_cc| ≪ Ω_r".into(),
            ratio: mismatch,
            threshold: 0.1,
            pass: mismatch < 0.1,
            mandatory: false,
        });
    }
    if !c6_in_fit_window(p.principal_n) {
        out.push(Finding {
            name: "c6_fit_window".into(),
            description: "principal quantum number inside the C6 fit window".into(),
            ratio: p.principal_n as f64,
            threshold: C6_FIT_WINDOW.1 as f64,
            pass: false,
            mandatory: false,
        });
    }
    out
}

pub fn mandatory_pass(findings: &[Finding]) -> bool {
    findings.iter().filter(|f| f.mandatory).all(|f| f.pass)
}
