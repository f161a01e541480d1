//! Time-dependent Hamiltonians: full composite-system assembly from a pulse
//! schedule, reduced single-branch target Hamiltonians, second-order Magnus
//! averages and dark states.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{HilbertError, Level, LevelScheme, LocalOperator, SystemLayout};
use crate::linalg::{ComplexMatrix, ComplexVector, LinalgError, I, ONE, ZERO};
use crate::params::{derive_timings, GateKind, ParamError, ProtocolParams};
use crate::pulses::{Envelope, PulseSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HamiltonianError {
    #[error("segment {segment}: {message}")]
    BadSegment { segment: usize, message: String },
    #[error("assembled Hamiltonian is not Hermitian (error {0:.3e})")]
    NotHermitian(f64),
    #[error("invalid branch {pattern:?} for {gate}")]
    InvalidBranch { gate: GateKind, pattern: String },
    #[error("Magnus window must be positive and finite, got {0}")]
    BadWindow(f64),
    #[error("coupling Rabi frequency must be positive")]
    ZeroCoupling,
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Param(#[from] ParamError),
}

pub type Result<T> = std::result::Result<T, HamiltonianError>;

/// `envelope(t) · scale · e^{i·frequency·t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub envelope: Envelope,
    pub scale: C64,
    pub frequency: f64,
}

impl Coefficient {
    pub fn value(&self, t: f64) -> C64 {
        self.scale * self.envelope.value(t) * C64::from_polar(1.0, self.frequency * t)
    }

    /// Slowly varying amplitude, without the oscillating phase.
    pub fn amplitude(&self, t: f64) -> C64 {
        self.scale * self.envelope.value(t)
    }
}

/// One drive term; contributes `c(t)·op + conj(c(t))·op†`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coefficient: Coefficient,
    pub op: ComplexMatrix,
}

/// `H(t) = static_part + Σ_k (c_k(t)·op_k + h.c.)`, with `t` local to the
/// segment the Hamiltonian belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeDepHamiltonian {
    pub static_part: ComplexMatrix,
    pub terms: Vec<Term>,
}

impl TimeDepHamiltonian {
    pub fn constant(h: ComplexMatrix) -> Self {
        Self {
            static_part: h,
            terms: vec![],
        }
    }

    pub fn dim(&self) -> usize {
        self.static_part.rows()
    }

    pub fn at(&self, t: f64) -> ComplexMatrix {
        let mut h = self.static_part.clone();
        for term in &self.terms {
            let c = term.coefficient.value(t);
            if c == ZERO {
                continue;
            }
            h.axpy(c, &term.op).expect("term shape checked at construction");
            h.axpy(c.conj(), &term.op.dagger()).expect("term shape checked at construction");
        }
        h
    }

    pub fn push_term(&mut self, coefficient: Coefficient, op: ComplexMatrix) -> Result<()> {
        if op.shape() != self.static_part.shape() {
            return Err(LinalgError::ShapeMismatch {
                op: "push_term",
                lhs: self.static_part.shape(),
                rhs: op.shape(),
            }
            .into());
        }
        self.terms.push(Term { coefficient, op });
        Ok(())
    }

    /// Largest |frequency| among the terms.
    pub fn max_frequency(&self) -> f64 {
        self.terms.iter().map(|t| t.coefficient.frequency.abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSegment {
    pub label: String,
    pub duration: f64,
    pub hamiltonian: TimeDepHamiltonian,
}

/// A sequence of Hamiltonians, each acting for its own duration with a
/// local time origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseHamiltonian {
    pub segments: Vec<HamiltonianSegment>,
}

impl PiecewiseHamiltonian {
    pub fn from_schedule(layout: &SystemLayout, schedule: &PulseSchedule, p: &ProtocolParams) -> Result<Self> {
        let hs = assemble_full(layout, schedule, p)?;
        Ok(Self {
            segments: schedule
                .segments
                .iter()
                .zip(hs)
                .map(|(s, h)| HamiltonianSegment {
                    label: s.label.clone(),
                    duration: s.duration,
                    hamiltonian: h,
                })
                .collect(),
        })
    }

    pub fn single(duration: f64, hamiltonian: TimeDepHamiltonian) -> Self {
        Self {
            segments: vec![HamiltonianSegment {
                label: "segment".into(),
                duration,
                hamiltonian,
            }],
        }
    }

    pub fn dim(&self) -> usize {
        self.segments.first().map_or(0, |s| s.hamiltonian.dim())
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

/// Number operator of `level` on `atom`.
fn number(layout: &SystemLayout, atom: usize, level: Level) -> Result<ComplexMatrix> {
    Ok(layout.embed_ket_bra(atom, level, level)?)
}

/// Static interaction part: `V·n_r⊗n_R` for every control and
/// `V_cc·n_r⊗n_r` for every control pair.
pub fn interaction_part(layout: &SystemLayout, p: &ProtocolParams) -> Result<ComplexMatrix> {
    let mut h = ComplexMatrix::zeros(layout.dim(), layout.dim());
    let target = layout.target_index();
    let controls = layout.control_indices();
    let nr = LevelScheme::CONTROL.projector(Level::Ryd)?;
    let n_rt = LevelScheme::TARGET.projector(Level::RydT)?;
    for &c in &controls {
        let op = crate::hilbert::embed(
            layout,
            &[LocalOperator::new(c, nr.clone()), LocalOperator::new(target, n_rt.clone())],
        )?;
        h.axpy(C64::new(p.v, 0.0), &op)?;
    }
    for (k, &a) in controls.iter().enumerate() {
        for &b in &controls[k + 1..] {
            let op = crate::hilbert::embed(layout, &[LocalOperator::new(a, nr.clone()), LocalOperator::new(b, nr.clone())])?;
            h.axpy(C64::new(p.v_cc, 0.0), &op)?;
        }
    }
    Ok(h)
}

/// Full composite Hamiltonian for every segment of `schedule`. Interactions
/// are present in all segments; every drive couples its transition in all
/// branches, including the off-resonant paths the branch models drop.
pub fn assemble_full(layout: &SystemLayout, schedule: &PulseSchedule, p: &ProtocolParams) -> Result<Vec<TimeDepHamiltonian>> {
    let interactions = interaction_part(layout, p)?;
    schedule
        .segments
        .iter()
        .enumerate()
        .map(|(k, seg)| {
            seg.check_against(layout)
                .map_err(|message| HamiltonianError::BadSegment { segment: k, message })?;
            let mut h = TimeDepHamiltonian::constant(interactions.clone());
            for s in &seg.level_shifts {
                h.static_part.axpy(C64::new(s.energy, 0.0), &number(layout, s.atom, s.level)?)?;
            }
            for d in &seg.drives {
                let op = layout.embed_ket_bra(d.atom, d.transition[0], d.transition[1])?;
                h.push_term(
                    Coefficient {
                        envelope: d.envelope,
                        scale: C64::from_polar(0.5, d.phase),
                        frequency: d.detuning,
                    },
                    op,
                )?;
            }
            let err = h.static_part.hermiticity_error();
            if err > 1e-12 * h.static_part.max_abs().max(1.0) {
                return Err(HamiltonianError::NotHermitian(err));
            }
            Ok(h)
        })
        .collect()
}

/// Block of a full-space operator with the controls fixed to `controls`,
/// as a 4×4 matrix on the target.
pub fn target_block(layout: &SystemLayout, m: &ComplexMatrix, controls: &[Level]) -> Result<ComplexMatrix> {
    let target = layout.target_index();
    let idx = LevelScheme::TARGET
        .levels()
        .iter()
        .map(|&t| {
            let mut levels = Vec::with_capacity(layout.n_atoms());
            let mut ci = controls.iter();
            for k in 0..layout.n_atoms() {
                if k == target {
                    levels.push(t);
                } else {
                    levels.push(*ci.next().ok_or_else(|| HilbertError::BadLabel(format!("{controls:?}")))?);
                }
            }
            layout.index_of(&levels)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(m.restrict(&idx))
}

/// Frame for [`reduced_branch`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchFrame {
    /// Target Hamiltonian with the full `k·V` shift on |R⟩.
    Lab,
    /// Rotated by `e^{−i·m·V·t·n_R}` with `m = min(k, lasers − 1)`, so the
    /// highest-detuned coupling laser becomes resonant when locked.
    Rotating,
}

/// Number of controls in |r⟩ during the Raman segment for a control pattern.
///
/// Patterns are strings over `0`, `1`, `r`, one character per control. A
/// pattern containing `r` is read literally. Otherwise the opening pulses
/// are applied: simultaneous excitation (linear layout) excites every `1`;
/// sequential antiblockade driving excites the leading run of `1`s.
pub fn excited_controls(gate: GateKind, pattern: &str) -> Result<usize> {
    let bad = || HamiltonianError::InvalidBranch {
        gate,
        pattern: pattern.to_string(),
    };
    let chars: Vec<char> = pattern.chars().collect();
    if chars.len() != gate.n_controls() || chars.iter().any(|c| !matches!(c, '0' | '1' | 'r')) {
        return Err(bad());
    }
    if chars.contains(&'r') {
        return Ok(chars.iter().filter(|&&c| c == 'r').count());
    }
    Ok(if gate.sequential_controls() {
        chars.iter().take_while(|&&c| c == '1').count()
    } else {
        chars.iter().filter(|&&c| c == '1').count()
    })
}

/// Target-only Hamiltonian of one control branch during the Raman segment.
pub fn reduced_branch(gate: GateKind, pattern: &str, p: &ProtocolParams, frame: BranchFrame) -> Result<TimeDepHamiltonian> {
    let k = excited_controls(gate, pattern)?;
    let t = derive_timings(p, gate)?;
    let raman = Envelope::RaisedCosine {
        peak: p.omega_e,
        duration: t.t2,
    };
    let detunings: Vec<f64> = match gate {
        GateKind::C3Not => vec![0.0, p.delta, p.delta_prime],
        _ => vec![0.0, p.delta],
    };
    reduced_target(raman, p, &detunings, k, frame)
}

/// Reduced target Hamiltonian for `k` excited controls and coupling lasers
/// at `detunings`.
pub fn reduced_target(raman: Envelope, p: &ProtocolParams, detunings: &[f64], k: usize, frame: BranchFrame) -> Result<TimeDepHamiltonian> {
    let s = LevelScheme::TARGET;
    let m = match frame {
        BranchFrame::Lab => 0,
        BranchFrame::Rotating => k.min(detunings.len().saturating_sub(1)),
    };
    let mut h = TimeDepHamiltonian::constant(ComplexMatrix::zeros(4, 4));
    h.static_part.axpy(C64::new(-p.delta_big, 0.0), &s.projector(Level::E)?)?;
    h.static_part
        .axpy(C64::new((k - m) as f64 * p.v, 0.0), &s.projector(Level::RydT)?)?;
    for lower in [Level::A, Level::B] {
        h.push_term(
            Coefficient {
                envelope: raman,
                scale: C64::new(0.5, 0.0),
                frequency: 0.0,
            },
            s.ket_bra(lower, Level::E)?,
        )?;
    }
    for &d in detunings {
        h.push_term(
            Coefficient {
                envelope: Envelope::Constant { peak: p.omega_c },
                scale: C64::new(0.5, 0.0),
                frequency: d - m as f64 * p.v,
            },
            s.ket_bra(Level::E, Level::RydT)?,
        )?;
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MagnusWindow {
    Finite(f64),
    /// The limit `frequency × window → ∞`: oscillating first-order terms
    /// vanish and only the secular second-order light shifts survive.
    Asymptotic,
}

struct Component {
    freq: f64,
    amp: C64,
    op: ComplexMatrix,
}

fn split_terms(h: &TimeDepHamiltonian, envelope_time: f64) -> (ComplexMatrix, Vec<(C64, f64, ComplexMatrix)>) {
    let mut slow = h.static_part.clone();
    let mut osc = Vec::new();
    for term in &h.terms {
        let a = term.coefficient.amplitude(envelope_time);
        if term.coefficient.frequency == 0.0 {
            slow.axpy(a, &term.op).expect("shape");
            slow.axpy(a.conj(), &term.op.dagger()).expect("shape");
        } else if a != ZERO {
            osc.push((a, term.coefficient.frequency, term.op.clone()));
        }
    }
    (slow, osc)
}

/// `∫₀^T e^{iνt} dt`.
fn phase_integral(nu: f64, t: f64) -> C64 {
    let x = nu * t;
    if x.abs() < 1e-8 {
        C64::new(t, 0.5 * x * t)
    } else {
        (C64::from_polar(1.0, x) - ONE) / (I * nu)
    }
}

fn same_frequency(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// Second-order Magnus average of `h` over `[0, window]`.
///
/// Envelopes are frozen at `envelope_time`. Zero-frequency terms (and the
/// static part) are kept as they are; oscillating terms contribute their
/// first-order averages and the second-order commutators among themselves,
/// integrated exactly over the window. Cross terms between the slow part and
/// the oscillating part are micromotion and are not included.
pub fn magnus_effective(h: &TimeDepHamiltonian, window: MagnusWindow, envelope_time: f64) -> Result<ComplexMatrix> {
    if let MagnusWindow::Finite(t) = window {
        if !(t.is_finite() && t > 0.0) {
            return Err(HamiltonianError::BadWindow(t));
        }
    }
    let (mut heff, osc) = split_terms(h, envelope_time);
    let mut comps = Vec::with_capacity(2 * osc.len());
    for (a, w, op) in osc {
        comps.push(Component {
            freq: -w,
            amp: a.conj(),
            op: op.dagger(),
        });
        comps.push(Component { freq: w, amp: a, op });
    }
    if let MagnusWindow::Finite(t) = window {
        for c in &comps {
            heff.axpy(c.amp * phase_integral(c.freq, t) / t, &c.op)?;
        }
    }
    let mut second = ComplexMatrix::zeros(h.dim(), h.dim());
    for p in &comps {
        for q in &comps {
            let weight = match window {
                MagnusWindow::Finite(t) => {
                    let integral = (phase_integral(p.freq + q.freq, t) - phase_integral(p.freq, t)) / (I * q.freq);
                    -I / (2.0 * t) * integral
                }
                MagnusWindow::Asymptotic => {
                    if !same_frequency(p.freq, -q.freq) {
                        continue;
                    }
                    C64::new(-0.5 / q.freq, 0.0)
                }
            };
            let c = p.op.commutator(&q.op)?;
            second.axpy(weight * p.amp * q.amp, &c)?;
        }
    }
    heff += &second;
    Ok((&heff + &heff.dagger()).scale_real(0.5))
}

/// Micromotion generator `K(t) = Σ_k a_k e^{iω_k t}/(iω_k)·op_k + h.c.` of
/// the oscillating terms. With it,
/// `U(T) ≈ e^{−iK(T)} e^{−i·H_eff·T} e^{iK(0)}` where `H_eff` is the
/// asymptotic Magnus average; the kicks remove the O(Ω/ω) endpoint error.
pub fn micromotion_kick(h: &TimeDepHamiltonian, t: f64, envelope_time: f64) -> ComplexMatrix {
    let (_, osc) = split_terms(h, envelope_time);
    let mut k = ComplexMatrix::zeros(h.dim(), h.dim());
    for (a, w, op) in osc {
        let c = a * C64::from_polar(1.0, w * t) / (I * w);
        k.axpy(c, &op).expect("shape");
        k.axpy(c.conj(), &op.dagger()).expect("shape");
    }
    k
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DarkStatePair {
    pub d1: ComplexVector,
    pub d2: ComplexVector,
    /// `y = √2·Ω_e(t)/Ω_c`.
    pub y: f64,
}

impl DarkStatePair {
    /// `(D1 + D2)/√2`, which equals |A⟩ when the Raman drive is off.
    pub fn combined(&self) -> ComplexVector {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        ComplexVector::from_vec(
            self.d1
                .as_slice()
                .iter()
                .zip(self.d2.as_slice())
                .map(|(a, b)| (a + b) * s)
                .collect(),
        )
    }

    /// Projector onto span{D1, D2}.
    pub fn manifold_projector(&self) -> ComplexMatrix {
        &self.d1.outer(&self.d1) + &self.d2.outer(&self.d2)
    }
}

/// Dark states of the drive part of the asymptotic effective Hamiltonian
/// (Raman couplings plus the resonant coupling laser), in target level
/// order (A, B, e, R).
pub fn dark_states(p: &ProtocolParams, omega_e_now: f64) -> Result<DarkStatePair> {
    if !(p.omega_c.is_finite() && p.omega_c > 0.0) {
        return Err(HamiltonianError::ZeroCoupling);
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let y = std::f64::consts::SQRT_2 * omega_e_now / p.omega_c;
    let n = 1.0 / (1.0 + y * y).sqrt();
    let d1 = ComplexVector::from_vec(vec![C64::new(s, 0.0), C64::new(-s, 0.0), ZERO, ZERO]);
    let d2 = ComplexVector::from_vec(vec![C64::new(s * n, 0.0), C64::new(s * n, 0.0), ZERO, C64::new(-y * n, 0.0)]);
    Ok(DarkStatePair { d1, d2, y })
}

/// `Ω_e/2(|A⟩⟨e| + |B⟩⟨e|) + Ω_c/2|e⟩⟨R| + h.c.` on the target.
pub fn dark_drive_part(p: &ProtocolParams, omega_e_now: f64) -> ComplexMatrix {
    let s = LevelScheme::TARGET;
    let mut h = ComplexMatrix::zeros(4, 4);
    let half_e = C64::new(0.5 * omega_e_now, 0.0);
    let half_c = C64::new(0.5 * p.omega_c, 0.0);
    for (a, b, c) in [(Level::A, Level::E, half_e), (Level::B, Level::E, half_e), (Level::E, Level::RydT, half_c)] {
        let op = s.ket_bra(a, b).expect("target levels");
        h.axpy(c, &op).expect("shape");
        h.axpy(c, &op.dagger()).expect("shape");
    }
    h
}
