//! Time-ordered propagation of vectors and operators under piecewise
//! time-dependent Hamiltonians, with optional Lindblad dissipation.
//!
//! Each segment is integrated with an adaptive DOP853 scheme on the entries
//! the input can reach (see [`plan`]). Propagations hold no shared mutable
//! state, so independent calls may run concurrently.

mod dop853;
mod dop853_tableau;
mod plan;

use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dop853::StepStats;

use crate::hamiltonian::{PiecewiseHamiltonian, TimeDepHamiltonian};
use crate::hilbert::{Level, SystemLayout};
use crate::linalg::{ComplexMatrix, ComplexVector, LinalgError, ZERO};
use crate::params::ProtocolParams;

use dop853::{Dop853, StepFailure};
use plan::SegmentPlan;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("step size underflow in segment {segment} at t = {t:.6e} s (h = {h:.3e} s); problem too stiff for the tolerances")]
    Stiffness { segment: usize, t: f64, h: f64 },
    #[error("step budget exhausted in segment {segment} at t = {t:.6e} s")]
    StepBudget { segment: usize, t: f64 },
    #[error("non-finite state in segment {segment} at t = {t:.6e} s")]
    NonFinite { segment: usize, t: f64 },
    #[error("dimension mismatch: state has dimension {state}, Hamiltonian {hamiltonian}")]
    Dimension { state: usize, hamiltonian: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Reference frame used internally by the integrator. Results are always
/// returned in the lab frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    Lab,
    /// The static diagonal of each segment (level shifts and interaction
    /// energies) is removed and restored analytically.
    Interaction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub frame: Frame,
    pub max_steps_per_segment: u64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            frame: Frame::Interaction,
            max_steps_per_segment: 20_000_000,
        }
    }
}

/// Time-dependent observable: `(segment index, segment-local time) → operator`.
pub type OperatorFn = Arc<dyn Fn(usize, f64) -> ComplexMatrix + Send + Sync>;

#[derive(Clone)]
pub enum Observable {
    /// Population of one basis state.
    Population { name: String, index: usize },
    /// `Re⟨ψ|O|ψ⟩` or `Re tr(O X)`.
    Expectation { name: String, op: ComplexMatrix },
    TimeDependent { name: String, op: OperatorFn },
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("Observable").field(&self.name()).finish()
    }
}

impl Observable {
    pub fn name(&self) -> &str {
        match self {
            Observable::Population { name, .. } | Observable::Expectation { name, .. } | Observable::TimeDependent { name, .. } => name,
        }
    }

    fn evaluate(&self, segment: usize, t_local: f64, state: &QuantumState) -> f64 {
        match self {
            Observable::Population { index, .. } => match state {
                QuantumState::Vector(v) => v[*index].norm_sqr(),
                QuantumState::Density(m) => m[(*index, *index)].re,
            },
            Observable::Expectation { op, .. } => state.expectation(op),
            Observable::TimeDependent { op, .. } => state.expectation(&op(segment, t_local)),
        }
    }
}

/// Sample grid and observables for trajectory output.
#[derive(Debug, Clone, Default)]
pub struct Sampling {
    /// Uniform samples per segment, endpoints included (0 disables sampling).
    pub points_per_segment: usize,
    pub observables: Vec<Observable>,
}

impl Sampling {
    pub fn none() -> Self {
        Self::default()
    }

    /// Populations of every basis state of `layout`, named by label.
    pub fn populations(layout: &SystemLayout, points_per_segment: usize) -> Self {
        Self {
            points_per_segment,
            observables: (0..layout.dim())
                .map(|i| Observable::Population {
                    name: layout.label(i),
                    index: i,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QuantumState {
    Vector(ComplexVector),
    Density(ComplexMatrix),
}

impl QuantumState {
    pub fn dim(&self) -> usize {
        match self {
            QuantumState::Vector(v) => v.dim(),
            QuantumState::Density(m) => m.rows(),
        }
    }

    pub fn expectation(&self, op: &ComplexMatrix) -> f64 {
        match self {
            QuantumState::Vector(v) => v.inner(&op.apply(v).expect("dimension")).re,
            QuantumState::Density(m) => op.matmul(m).expect("dimension").trace().expect("square").re,
        }
    }

    /// Density matrix (`|ψ⟩⟨ψ|` for vectors).
    pub fn density(&self) -> ComplexMatrix {
        match self {
            QuantumState::Vector(v) => v.outer(v),
            QuantumState::Density(m) => m.clone(),
        }
    }

    /// Checks the state invariants: unit norm for vectors; Hermitian, unit
    /// trace and positive semidefinite for density matrices.
    pub fn validate(&self, tol: f64) -> bool {
        match self {
            QuantumState::Vector(v) => v.is_finite() && (v.norm() - 1.0).abs() <= tol,
            QuantumState::Density(m) => {
                m.is_finite()
                    && m.is_hermitian(tol)
                    && (m.trace().map(|t| (t.re - 1.0).abs() <= tol && t.im.abs() <= tol).unwrap_or(false))
                    && m.hermitian_eigenvalues().map(|e| e[0] >= -tol).unwrap_or(false)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub segment: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub frame: Frame,
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub rhs_evaluations: u64,
    /// Number of integrated entries per segment.
    pub support_sizes: Vec<usize>,
    /// Largest |‖ψ‖ − ‖ψ₀‖| (vectors) or |tr X − tr X₀| (operators) seen at
    /// samples and segment ends.
    pub max_norm_drift: f64,
    /// Largest Hermiticity defect at samples and segment ends, for Hermitian
    /// inputs.
    pub max_hermiticity_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationResult<S> {
    pub final_state: S,
    pub columns: Vec<String>,
    pub samples: Vec<Sample>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LindbladChannel {
    pub name: String,
    pub operator: ComplexMatrix,
}

/// Decay channels with the rates folded into the operators:
/// `√(γ_r/2)|i⟩⟨r|` (i = 0, 1) on each control, `√γ_R|e⟩⟨R|` and
/// `√(γ_e/2)|j⟩⟨e|` (j = A, B) on the target.
pub fn build_lindblad_channels(layout: &SystemLayout, p: &ProtocolParams) -> Vec<LindbladChannel> {
    let mut out = Vec::new();
    let emb = |atom: usize, a: Level, b: Level, rate: f64| -> ComplexMatrix {
        layout
            .embed_ket_bra(atom, a, b)
            .expect("valid levels")
            .scale_real(rate.sqrt())
    };
    for (k, scheme) in layout.atoms().iter().enumerate() {
        match scheme.role {
            crate::hilbert::Role::Control => {
                for (i, l) in [Level::G0, Level::G1].into_iter().enumerate() {
                    out.push(LindbladChannel {
                        name: format!("sigma_{i}[{k}]"),
                        operator: emb(k, l, Level::Ryd, p.gamma_r / 2.0),
                    });
                }
            }
            crate::hilbert::Role::Target => {
                out.push(LindbladChannel {
                    name: format!("alpha[{k}]"),
                    operator: emb(k, Level::E, Level::RydT, p.gamma_rt),
                });
                for l in [Level::A, Level::B] {
                    out.push(LindbladChannel {
                        name: format!("beta_{}[{k}]", l.name()),
                        operator: emb(k, l, Level::E, p.gamma_e / 2.0),
                    });
                }
            }
        }
    }
    out
}

fn sample_times(duration: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![duration],
        n => (0..n).map(|k| duration * k as f64 / (n - 1) as f64).collect(),
    }
}

fn map_failure(segment: usize, f: StepFailure) -> DynamicsError {
    match f {
        StepFailure::Underflow { t, h } => DynamicsError::Stiffness { segment, t, h },
        StepFailure::Budget { t } => DynamicsError::StepBudget { segment, t },
        StepFailure::NonFinite { t } => DynamicsError::NonFinite { segment, t },
    }
}

struct Engine<'a> {
    h: &'a PiecewiseHamiltonian,
    channels: Vec<ComplexMatrix>,
    sampling: &'a Sampling,
    opts: &'a IntegratorOptions,
    vector: bool,
}

impl Engine<'_> {
    /// Propagates a dense state (row-major `dim × bra_dim`).
    fn run(&self, mut dense: Vec<C64>) -> Result<(Vec<C64>, Vec<Sample>, Diagnostics), DynamicsError> {
        let n = self.h.dim();
        let bra_dim = if self.vector { 1 } else { n };
        let as_state = |d: &[C64]| -> QuantumState {
            if self.vector {
                QuantumState::Vector(ComplexVector::from_vec(d.to_vec()))
            } else {
                QuantumState::Density(ComplexMatrix::from_row_major(n, n, d.to_vec()).expect("finite"))
            }
        };
        let measure = |d: &[C64]| -> C64 {
            if self.vector {
                C64::new(d.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(), 0.0)
            } else {
                (0..n).map(|i| d[i * n + i]).sum()
            }
        };
        let hermiticity = |d: &[C64]| -> f64 {
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in i..n {
                    worst = worst.max((d[i * n + j] - d[j * n + i].conj()).norm());
                }
            }
            worst
        };
        let track_herm = !self.vector && hermiticity(&dense) <= 1e-14;
        let m0 = measure(&dense);
        let mut diag = Diagnostics {
            frame: self.opts.frame,
            accepted_steps: 0,
            rejected_steps: 0,
            rhs_evaluations: 0,
            support_sizes: Vec::new(),
            max_norm_drift: 0.0,
            max_hermiticity_error: 0.0,
        };
        let mut samples = Vec::new();
        let mut t_offset = 0.0;
        let mut scratch = vec![ZERO; dense.len()];
        for (k, seg) in self.h.segments.iter().enumerate() {
            let initial: Vec<(usize, usize)> = dense
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != ZERO)
                .map(|(p, _)| (p / bra_dim, p % bra_dim))
                .collect();
            let plan = SegmentPlan::build(&seg.hamiltonian, &self.channels, self.opts.frame, self.vector, &initial);
            debug_assert_eq!(plan.dim, n);
            debug_assert_eq!(plan.bra_dim, bra_dim);
            diag.support_sizes.push(plan.support.len());
            let mut y = plan.gather(&dense);
            let mut ws = plan.workspace();
            let mut rhs = |t: f64, y: &[C64], dy: &mut [C64]| plan.rhs(&mut ws, t, y, dy);
            let times = sample_times(seg.duration, self.sampling.points_per_segment);
            let mut stepper = Dop853::new(y.len(), self.opts.rtol, self.opts.atol, self.opts.max_steps_per_segment);
            let mut observed: Vec<(f64, Vec<C64>)> = Vec::new();
            let want_samples = !self.sampling.observables.is_empty() || self.sampling.points_per_segment > 0;
            if let Some(&first) = times.first() {
                if first <= 0.0 && want_samples {
                    observed.push((0.0, y.clone()));
                }
            }
            let interior: Vec<f64> = times.iter().copied().filter(|&t| t > 0.0).collect();
            let stats = stepper
                .integrate(&mut rhs, 0.0, seg.duration, &mut y, if want_samples { &interior } else { &[] }, |t, v| {
                    observed.push((t, v.to_vec()))
                })
                .map_err(|f| map_failure(k, f))?;
            diag.accepted_steps += stats.accepted;
            diag.rejected_steps += stats.rejected;
            diag.rhs_evaluations += stats.rhs_evaluations;
            for (t, v) in observed {
                plan.scatter(&v, t, &mut scratch);
                diag.max_norm_drift = diag.max_norm_drift.max((measure(&scratch) - m0).norm());
                if track_herm {
                    diag.max_hermiticity_error = diag.max_hermiticity_error.max(hermiticity(&scratch));
                }
                let state = as_state(&scratch);
                samples.push(Sample {
                    t: t_offset + t,
                    segment: k,
                    values: self.sampling.observables.iter().map(|o| o.evaluate(k, t, &state)).collect(),
                });
            }
            plan.scatter(&y, seg.duration, &mut dense);
            if dense.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(DynamicsError::NonFinite {
                    segment: k,
                    t: seg.duration,
                });
            }
            diag.max_norm_drift = diag.max_norm_drift.max((measure(&dense) - m0).norm());
            if track_herm {
                diag.max_hermiticity_error = diag.max_hermiticity_error.max(hermiticity(&dense));
            }
            t_offset += seg.duration;
        }
        Ok((dense, samples, diag))
    }

    fn columns(&self) -> Vec<String> {
        self.sampling.observables.iter().map(|o| o.name().to_string()).collect()
    }
}

/// Solves `i d|ψ⟩/dt = H(t)|ψ⟩` segment by segment.
pub fn propagate_unitary(
    psi: &ComplexVector,
    h: &PiecewiseHamiltonian,
    sampling: &Sampling,
    opts: &IntegratorOptions,
) -> Result<PropagationResult<ComplexVector>, DynamicsError> {
    if psi.dim() != h.dim() {
        return Err(DynamicsError::Dimension {
            state: psi.dim(),
            hamiltonian: h.dim(),
        });
    }
    let engine = Engine {
        h,
        channels: vec![],
        sampling,
        opts,
        vector: true,
    };
    let (out, samples, diagnostics) = engine.run(psi.as_slice().to_vec())?;
    Ok(PropagationResult {
        final_state: ComplexVector::from_vec(out),
        columns: engine.columns(),
        samples,
        diagnostics,
    })
}

/// Solves `dX/dt = −i[H(t), X] + Σ_k (A_k X A_k† − {A_k†A_k, X}/2)` for any
/// square `X` (the generator is linear, so `X` need not be a state).
pub fn propagate_lindblad(
    x: &ComplexMatrix,
    h: &PiecewiseHamiltonian,
    channels: &[LindbladChannel],
    sampling: &Sampling,
    opts: &IntegratorOptions,
) -> Result<PropagationResult<ComplexMatrix>, DynamicsError> {
    let n = h.dim();
    if x.rows() != n || x.cols() != n {
        return Err(DynamicsError::Dimension {
            state: x.rows().max(x.cols()),
            hamiltonian: n,
        });
    }
    for c in channels {
        if c.operator.shape() != (n, n) {
            return Err(DynamicsError::Dimension {
                state: c.operator.rows(),
                hamiltonian: n,
            });
        }
    }
    let engine = Engine {
        h,
        channels: channels
            .iter()
            .filter(|c| c.operator.max_abs() > 0.0)
            .map(|c| c.operator.clone())
            .collect(),
        sampling,
        opts,
        vector: false,
    };
    let (out, samples, diagnostics) = engine.run(x.as_slice().to_vec())?;
    Ok(PropagationResult {
        final_state: ComplexMatrix::from_row_major(n, n, out)?,
        columns: engine.columns(),
        samples,
        diagnostics,
    })
}

/// Propagates a [`QuantumState`]: vectors unitarily, density matrices with
/// the given channels.
pub fn propagate_state(
    state: &QuantumState,
    h: &PiecewiseHamiltonian,
    channels: &[LindbladChannel],
    sampling: &Sampling,
    opts: &IntegratorOptions,
) -> Result<PropagationResult<QuantumState>, DynamicsError> {
    match state {
        QuantumState::Vector(v) => {
            let r = propagate_unitary(v, h, sampling, opts)?;
            Ok(PropagationResult {
                final_state: QuantumState::Vector(r.final_state),
                columns: r.columns,
                samples: r.samples,
                diagnostics: r.diagnostics,
            })
        }
        QuantumState::Density(m) => {
            let r = propagate_lindblad(m, h, channels, sampling, opts)?;
            Ok(PropagationResult {
                final_state: QuantumState::Density(r.final_state),
                columns: r.columns,
                samples: r.samples,
                diagnostics: r.diagnostics,
            })
        }
    }
}

/// Full propagator of the sequence, column by column.
pub fn unitary_propagator(h: &PiecewiseHamiltonian, opts: &IntegratorOptions) -> Result<ComplexMatrix, DynamicsError> {
    let n = h.dim();
    let mut u = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let col = propagate_unitary(&ComplexVector::basis(n, j), h, &Sampling::none(), opts)?.final_state;
        for i in 0..n {
            u[(i, j)] = col[i];
        }
    }
    Ok(u)
}

/// Fixed-step exponential midpoint propagator of one segment:
/// `Π_k exp(−i·H(t_k + dt/2)·dt)` over `steps` equal steps. A simple
/// second-order reference for testing the adaptive integrator.
pub fn midpoint_propagator(h: &TimeDepHamiltonian, duration: f64, steps: usize) -> Result<ComplexMatrix, DynamicsError> {
    let dt = duration / steps as f64;
    let mut u = ComplexMatrix::identity(h.dim());
    for k in 0..steps {
        let t = (k as f64 + 0.5) * dt;
        let step = h.at(t).scale(C64::new(0.0, -dt)).expm()?;
        u = step.matmul(&u)?;
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::HamiltonianSegment;
    use crate::linalg::I;

    fn single(h: TimeDepHamiltonian, duration: f64) -> PiecewiseHamiltonian {
        PiecewiseHamiltonian {
            segments: vec![HamiltonianSegment {
                label: "test".into(),
                duration,
                hamiltonian: h,
            }],
        }
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let h = single(TimeDepHamiltonian::constant(ComplexMatrix::zeros(3, 3)), 1.0);
        let psi = ComplexVector::from_vec(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8), ZERO]);
        for frame in [Frame::Lab, Frame::Interaction] {
            let opts = IntegratorOptions { frame, ..Default::default() };
            let r = propagate_unitary(&psi, &h, &Sampling::none(), &opts).unwrap();
            assert_eq!(r.final_state, psi);
        }
    }

    #[test]
    fn constant_hamiltonian_matches_expm() {
        let m = ComplexMatrix::from_real_rows(&[&[1.0, 0.5, 0.0], &[0.5, -2.0, 0.3], &[0.0, 0.3, 4.0]]);
        let h = single(TimeDepHamiltonian::constant(m.clone()), 2.5);
        let psi = ComplexVector::basis(3, 0);
        let exact = m.scale(-I * 2.5).expm().unwrap().apply(&psi).unwrap();
        for frame in [Frame::Lab, Frame::Interaction] {
            let opts = IntegratorOptions { frame, ..Default::default() };
            let r = propagate_unitary(&psi, &h, &Sampling::none(), &opts).unwrap();
            let err = r
                .final_state
                .as_slice()
                .iter()
                .zip(exact.as_slice())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-9, "{frame:?} {err}");
        }
    }

    #[test]
    fn amplitude_damping() {
        let gamma: f64 = 0.8;
        let h = single(TimeDepHamiltonian::constant(ComplexMatrix::zeros(2, 2)), 1.7);
        let ch = LindbladChannel {
            name: "decay".into(),
            operator: ComplexMatrix::unit(2, 0, 1).scale_real(gamma.sqrt()),
        };
        let rho = ComplexMatrix::unit(2, 1, 1);
        let sampling = Sampling {
            points_per_segment: 11,
            observables: vec![Observable::Population {
                name: "e".into(),
                index: 1,
            }],
        };
        let r = propagate_lindblad(&rho, &h, &[ch], &sampling, &IntegratorOptions::default()).unwrap();
        assert_eq!(r.samples.len(), 11);
        for s in &r.samples {
            assert!((s.values[0] - (-gamma * s.t).exp()).abs() < 1e-9);
        }
        assert!((r.final_state.trace().unwrap().re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn support_closure_keeps_unreachable_entries_zero() {
        let mut m = ComplexMatrix::zeros(4, 4);
        m[(0, 1)] = C64::new(1.0, 0.0);
        m[(1, 0)] = C64::new(1.0, 0.0);
        m[(2, 2)] = C64::new(3.0, 0.0);
        let h = single(TimeDepHamiltonian::constant(m), 1.0);
        let r = propagate_unitary(&ComplexVector::basis(4, 0), &h, &Sampling::none(), &IntegratorOptions::default()).unwrap();
        assert_eq!(r.diagnostics.support_sizes, vec![2]);
        assert_eq!(r.final_state[2], ZERO);
        assert_eq!(r.final_state[3], ZERO);
    }

    #[test]
    fn rabi_pi_pulse_phase() {
        let mut h = TimeDepHamiltonian::constant(ComplexMatrix::zeros(2, 2));
        h.push_term(
            crate::hamiltonian::Coefficient {
                envelope: crate::pulses::Envelope::Constant { peak: 2.0 },
                scale: C64::new(0.5, 0.0),
                frequency: 0.0,
            },
            ComplexMatrix::unit(2, 0, 1),
        )
        .unwrap();
        let pw = single(h, std::f64::consts::PI / 2.0);
        let r = propagate_unitary(&ComplexVector::basis(2, 0), &pw, &Sampling::none(), &IntegratorOptions::default()).unwrap();
        assert!((r.final_state[1] - C64::new(0.0, -1.0)).norm() < 1e-9);
    }
}
