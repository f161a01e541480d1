//! Process reconstruction on the computational subspace and the average gate
//! fidelity `F̄ = (Σ_j tr[U O_j† U† ε(O_j)] + d²) / (d²(d + 1))` over the
//! `4^N` Pauli products `O_j`.
//!
//! The channel is reconstructed from the images of the matrix units
//! `|a⟩⟨b|` of the qubit space. Pauli images follow by linearity, and the
//! unit images also make the fidelity a Hermitian quadratic form in any
//! diagonal phase layer applied after the ideal gate, which is what the
//! phase optimisers maximise.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{propagate_lindblad, propagate_unitary, DynamicsError, IntegratorOptions, Sampling};
use crate::hilbert::{pauli_label, qubit_pauli_basis, restrict_to_qubits};
use crate::linalg::{ComplexMatrix, ComplexVector, ONE, ZERO};
use crate::scenario::Scenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FidelityError {
    #[error("propagation of basis element {index} ({label}) failed: {source}")]
    Propagation {
        index: usize,
        label: String,
        #[source]
        source: DynamicsError,
    },
    #[error("channel dimension {channel} does not match ideal gate dimension {ideal}")]
    Dimension { channel: usize, ideal: usize },
}

/// Ideal gate as a unitary on the `2^N` qubit space (controls first, target
/// last, atom 0 the most significant bit).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealGate {
    pub name: String,
    pub n_qubits: usize,
    pub unitary: ComplexMatrix,
}

impl IdealGate {
    /// CⁿNOT: flips the last qubit iff all `n_controls` controls are 1.
    pub fn cn_not(n_controls: usize) -> Self {
        assert!(n_controls >= 1, "at least one control");
        let n = n_controls + 1;
        let d = 1usize << n;
        let all = d - 2; // controls all 1, target 0
        let mut u = ComplexMatrix::zeros(d, d);
        for x in 0..d {
            let y = if x & !1 == all { x ^ 1 } else { x };
            u[(y, x)] = ONE;
        }
        Self {
            name: format!("c{n_controls}not"),
            n_qubits: n,
            unitary: u,
        }
    }

    pub fn toffoli() -> Self {
        let mut g = Self::cn_not(2);
        g.name = "toffoli".into();
        g
    }

    pub fn dim(&self) -> usize {
        self.unitary.rows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelSource {
    /// Full pulse-sequence propagation.
    Simulated,
    /// The ideal gate's conjugation, bypassing the dynamics.
    IdealShortcut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelOptions {
    pub decay: bool,
    pub source: ChannelSource,
    pub integrator: IntegratorOptions,
}

impl Default for ChannelOptions {
    fn default() -> Self {
        Self {
            decay: true,
            source: ChannelSource::Simulated,
            integrator: IntegratorOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChannelDiagnostics {
    pub propagations: usize,
    pub rhs_evaluations: u64,
    pub accepted_steps: u64,
    pub max_support: usize,
    pub max_norm_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessChannel {
    pub gate: String,
    pub n_qubits: usize,
    pub decay: bool,
    /// `ε(|a⟩⟨b|)` restricted to the qubit space, at index `a·d + b`.
    pub unit_images: Vec<ComplexMatrix>,
    /// `ε(O_j)` restricted to the qubit space, in Pauli basis order.
    pub basis_images: Vec<ComplexMatrix>,
    pub diagnostics: ChannelDiagnostics,
}

impl ProcessChannel {
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    /// Builds the Pauli images from the unit images.
    pub fn from_unit_images(gate: &str, n_qubits: usize, decay: bool, unit_images: Vec<ComplexMatrix>, diagnostics: ChannelDiagnostics) -> Self {
        let d = 1usize << n_qubits;
        assert_eq!(unit_images.len(), d * d);
        let basis_images = qubit_pauli_basis(n_qubits)
            .par_iter()
            .map(|o| {
                let mut img = ComplexMatrix::zeros(d, d);
                for a in 0..d {
                    for b in 0..d {
                        let c = o[(a, b)];
                        if c != ZERO {
                            img.axpy(c, &unit_images[a * d + b]).expect("shape");
                        }
                    }
                }
                img
            })
            .collect();
        Self {
            gate: gate.to_string(),
            n_qubits,
            decay,
            unit_images,
            basis_images,
            diagnostics,
        }
    }

    /// The channel `X ↦ W X W†` for a (possibly sub-unitary) `W`.
    pub fn from_kraus_single(gate: &str, n_qubits: usize, w: &ComplexMatrix) -> Self {
        let d = 1usize << n_qubits;
        let cols: Vec<ComplexVector> = (0..d)
            .map(|b| ComplexVector::from_vec((0..d).map(|a| w[(a, b)]).collect()))
            .collect();
        let units = (0..d * d).map(|k| cols[k / d].outer(&cols[k % d])).collect();
        Self::from_unit_images(gate, n_qubits, false, units, ChannelDiagnostics::default())
    }

    /// Applies the channel to an arbitrary qubit-space operator.
    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        let d = self.dim();
        let mut out = ComplexMatrix::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                let c = x[(a, b)];
                if c != ZERO {
                    out.axpy(c, &self.unit_images[a * d + b]).expect("shape");
                }
            }
        }
        out
    }

    /// `1 − tr ε(I)/d`.
    pub fn leakage(&self) -> f64 {
        let d = self.dim();
        let kept: f64 = (0..d).map(|a| self.unit_images[a * d + a].trace().expect("square").re).sum();
        1.0 - kept / d as f64
    }
}

fn unit_label(layout_labels: &[String], a: usize, b: usize) -> String {
    format!("|{}><{}|", layout_labels[a], layout_labels[b])
}

/// Reconstructs the process on the computational subspace.
///
/// With decay, the `d(d+1)/2` matrix units `|a⟩⟨b|` (`a ≤ b`) are propagated
/// through the Lindblad equation and `ε(|b⟩⟨a|) = ε(|a⟩⟨b|)†`. Without decay,
/// the `d` basis vectors are propagated and `ε(X) = W X W†` with `W` the
/// qubit block of the propagator. Each image is compressed with `P·X·P`.
pub fn reconstruct_channel(s: &Scenario, ideal: &IdealGate, opts: &ChannelOptions) -> Result<ProcessChannel, FidelityError> {
    let n = s.layout.n_qubits();
    let d = 1usize << n;
    if ideal.dim() != d {
        return Err(FidelityError::Dimension {
            channel: d,
            ideal: ideal.dim(),
        });
    }
    let gate = s.gate.name();
    if opts.source == ChannelSource::IdealShortcut {
        let mut ch = ProcessChannel::from_kraus_single(gate, n, &ideal.unitary);
        ch.decay = opts.decay;
        return Ok(ch);
    }
    let comp = s.layout.computational_indices();
    let labels: Vec<String> = (0..d).map(|x| s.layout.label(comp[x])).collect();
    let dim = s.dim();
    if !opts.decay {
        let h = s.without_decay().map(|x| x.hamiltonian).unwrap_or_else(|_| s.hamiltonian.clone());
        let cols = (0..d)
            .into_par_iter()
            .map(|b| {
                propagate_unitary(&ComplexVector::basis(dim, comp[b]), &h, &Sampling::none(), &opts.integrator).map_err(|e| {
                    FidelityError::Propagation {
                        index: b,
                        label: labels[b].clone(),
                        source: e,
                    }
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut w = ComplexMatrix::zeros(d, d);
        let mut diag = ChannelDiagnostics::default();
        for (b, r) in cols.iter().enumerate() {
            for a in 0..d {
                w[(a, b)] = r.final_state[comp[a]];
            }
            diag.propagations += 1;
            diag.rhs_evaluations += r.diagnostics.rhs_evaluations;
            diag.accepted_steps += r.diagnostics.accepted_steps;
            diag.max_support = diag.max_support.max(r.diagnostics.support_sizes.iter().copied().max().unwrap_or(0));
            diag.max_norm_drift = diag.max_norm_drift.max(r.diagnostics.max_norm_drift);
        }
        let mut ch = ProcessChannel::from_kraus_single(gate, n, &w);
        ch.diagnostics = diag;
        return Ok(ch);
    }
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|a| (a..d).map(move |b| (a, b))).collect();
    let results = pairs
        .par_iter()
        .map(|&(a, b)| {
            let x = ComplexMatrix::unit(dim, comp[a], comp[b]);
            propagate_lindblad(&x, &s.hamiltonian, &s.channels, &Sampling::none(), &opts.integrator).map_err(|e| {
                FidelityError::Propagation {
                    index: a * d + b,
                    label: unit_label(&labels, a, b),
                    source: e,
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut units = vec![ComplexMatrix::zeros(d, d); d * d];
    let mut diag = ChannelDiagnostics::default();
    for (&(a, b), r) in pairs.iter().zip(&results) {
        let img = restrict_to_qubits(&s.layout, &r.final_state);
        if a != b {
            units[b * d + a] = img.dagger();
        }
        units[a * d + b] = img;
        diag.propagations += 1;
        diag.rhs_evaluations += r.diagnostics.rhs_evaluations;
        diag.accepted_steps += r.diagnostics.accepted_steps;
        diag.max_support = diag.max_support.max(r.diagnostics.support_sizes.iter().copied().max().unwrap_or(0));
    }
    Ok(ProcessChannel::from_unit_images(gate, n, true, units, diag))
}

/// The fidelity formula evaluated literally over the Pauli images, against
/// the unitary `w` on the qubit space.
pub fn fidelity_formula(channel: &ProcessChannel, w: &ComplexMatrix) -> f64 {
    let d = channel.dim() as f64;
    let basis = qubit_pauli_basis(channel.n_qubits);
    let wd = w.dagger();
    let sum: C64 = basis
        .par_iter()
        .zip(&channel.basis_images)
        .map(|(o, img)| {
            let m = w.matmul(&o.dagger()).unwrap().matmul(&wd).unwrap().matmul(img).unwrap();
            m.trace().unwrap()
        })
        .reduce(|| ZERO, |a, b| a + b);
    (sum.re + d * d) / (d * d * (d + 1.0))
}

/// Hermitian form `M` with `Σ_j tr[W O_j† W† ε(O_j)] = d·l†Ml` for
/// `W = diag(l)·U`.
pub fn phase_form(channel: &ProcessChannel, u: &ComplexMatrix) -> ComplexMatrix {
    let d = channel.dim();
    let mut m = ComplexMatrix::zeros(d, d);
    for p in 0..d {
        for q in 0..d {
            let img = &channel.unit_images[q * d + p];
            for y in 0..d {
                let uyq = u[(y, q)].conj();
                if uyq == ZERO {
                    continue;
                }
                for x in 0..d {
                    let uxp = u[(x, p)];
                    if uxp == ZERO {
                        continue;
                    }
                    m[(y, x)] += uyq * uxp * img[(y, x)];
                }
            }
        }
    }
    m
}

fn form_value(m: &ComplexMatrix, l: &[C64]) -> f64 {
    let d = l.len();
    let mut s = ZERO;
    for y in 0..d {
        let mut row = ZERO;
        for x in 0..d {
            row += m[(y, x)] * l[x];
        }
        s += l[y].conj() * row;
    }
    s.re
}

/// Optimal phase increment for the entries selected by `mask`:
/// `S(φ) = A + 2 Re(B e^{iφ})` is maximised at `φ = −arg B`.
fn best_increment(m: &ComplexMatrix, l: &[C64], mask: &dyn Fn(usize) -> bool) -> f64 {
    let d = l.len();
    let mut b = ZERO;
    for x in (0..d).filter(|&x| mask(x)) {
        for y in (0..d).filter(|&y| !mask(y)) {
            b += l[y].conj() * l[x] * m[(y, x)];
        }
    }
    if b == ZERO {
        0.0
    } else {
        -b.arg()
    }
}

fn rotate(l: &mut [C64], mask: &dyn Fn(usize) -> bool, phi: f64) {
    let z = C64::from_polar(1.0, phi);
    for (x, v) in l.iter_mut().enumerate() {
        if mask(x) {
            *v *= z;
        }
    }
}

fn wrap(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

const GRID_STEP: f64 = PI / 60.0;
const MAX_SWEEPS: usize = 2000;

/// Maximises `l†Ml` over `l_x = exp(i Σ_k bit_k(x) φ_k)`. Returns the phases
/// (qubit 0 first) and the optimum.
fn optimise_local(m: &ComplexMatrix, n: usize) -> (Vec<f64>, f64) {
    let d = 1usize << n;
    let bit = |k: usize| move |x: usize| (x >> (n - 1 - k)) & 1 == 1;
    let grid_points = (2.0 * PI / GRID_STEP).round() as usize;
    let last = n - 1;
    let mut best = (vec![0.0; n], f64::NEG_INFINITY);
    let combos = grid_points.pow(last as u32);
    for c in 0..combos {
        let mut phases = vec![0.0; n];
        let mut rest = c;
        for p in phases.iter_mut().take(last) {
            *p = (rest % grid_points) as f64 * GRID_STEP;
            rest /= grid_points;
        }
        let mut l: Vec<C64> = (0..d)
            .map(|x| {
                let a: f64 = (0..last).filter(|&k| bit(k)(x)).map(|k| phases[k]).sum();
                C64::from_polar(1.0, a)
            })
            .collect();
        let mask = bit(last);
        let inc = best_increment(m, &l, &mask);
        rotate(&mut l, &mask, inc);
        phases[last] = inc;
        let v = form_value(m, &l);
        if v > best.1 {
            best = (phases, v);
        }
    }
    let mut phases = best.0;
    let mut l: Vec<C64> = (0..d)
        .map(|x| C64::from_polar(1.0, (0..n).filter(|&k| bit(k)(x)).map(|k| phases[k]).sum()))
        .collect();
    let mut value = form_value(m, &l);
    for _ in 0..MAX_SWEEPS {
        for (k, p) in phases.iter_mut().enumerate() {
            let mask = bit(k);
            let inc = best_increment(m, &l, &mask);
            rotate(&mut l, &mask, inc);
            *p += inc;
        }
        let v = form_value(m, &l);
        let done = v - value <= 1e-15 * value.abs().max(1.0);
        value = value.max(v);
        if done {
            break;
        }
    }
    (phases.into_iter().map(wrap).collect(), value)
}

/// Maximises `l†Ml` over `l_x = e^{iθ_c} e^{iφ t}` where `c` is the control
/// register value and `t` the target bit. Returns `(θ_c for every c with θ_0 = 0, φ, optimum)`.
fn optimise_control_layer(m: &ComplexMatrix, n: usize, start: &[C64]) -> (Vec<f64>, f64, f64) {
    let d = 1usize << n;
    let nc = d / 2;
    let control = |c: usize| move |x: usize| x >> 1 == c;
    let target = |x: usize| x & 1 == 1;
    let ascend = |l: &mut Vec<C64>| -> f64 {
        let mut value = form_value(m, l);
        for _ in 0..MAX_SWEEPS {
            for c in 0..nc {
                let mask = control(c);
                let inc = best_increment(m, l, &mask);
                rotate(l, &mask, inc);
            }
            let inc = best_increment(m, l, &target);
            rotate(l, &target, inc);
            let v = form_value(m, l);
            let done = v - value <= 1e-15 * value.abs().max(1.0);
            value = value.max(v);
            if done {
                break;
            }
        }
        value
    };
    let mut candidates: Vec<Vec<C64>> = vec![start.to_vec()];
    let grid_points = (2.0 * PI / GRID_STEP).round() as usize;
    for g in 0..grid_points {
        let phi = g as f64 * GRID_STEP;
        let v = C64::from_polar(1.0, phi);
        // reduced form over the control register at this target phase
        let mut k = ComplexMatrix::zeros(nc, nc);
        for c1 in 0..nc {
            for c2 in 0..nc {
                let mut s = ZERO;
                for t1 in 0..2 {
                    for t2 in 0..2 {
                        let w = if t1 == 1 { v.conj() } else { ONE } * if t2 == 1 { v } else { ONE };
                        s += w * m[(2 * c1 + t1, 2 * c2 + t2)];
                    }
                }
                k[(c1, c2)] = s;
            }
        }
        let (_, vecs) = k.hermitian_eigh().expect("square");
        let lead = nc - 1;
        let l: Vec<C64> = (0..d)
            .map(|x| {
                let z = vecs[(x >> 1, lead)];
                let u = if z.norm() > 1e-12 { z / z.norm() } else { ONE };
                u * if x & 1 == 1 { v } else { ONE }
            })
            .collect();
        candidates.push(l);
    }
    let mut best: Option<(Vec<C64>, f64)> = None;
    for mut l in candidates {
        let v = ascend(&mut l);
        if best.as_ref().map_or(true, |b| v > b.1) {
            best = Some((l, v));
        }
    }
    let (l, value) = best.expect("at least one candidate");
    // normalise so that θ_0 = 0
    let g = l[0].conj() / l[0].norm();
    let thetas = (0..nc).map(|c| wrap((l[2 * c] * g).arg())).collect();
    let phi = wrap((l[1] * l[0].conj()).arg());
    (thetas, phi, value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub gate: String,
    pub d: usize,
    pub decay: bool,
    /// Against the bare ideal gate.
    pub f_raw: f64,
    /// Against `(⊗_k diag(1, e^{iφ_k}))·ideal`, optimised over the `N`
    /// single-qubit phases.
    pub f_local_phase_corrected: Option<f64>,
    /// Against `(D_controls ⊗ diag(1, e^{iφ_t}))·ideal` with `D_controls` an
    /// arbitrary diagonal phase on the control register.
    pub f_phase_corrected: Option<f64>,
    /// Optimal single-qubit phases, qubit 0 first.
    pub phase_layer: Vec<f64>,
    /// Optimal control-register phases, one per control value (first is 0).
    pub control_phase_layer: Vec<f64>,
    pub target_phase: Option<f64>,
    pub leakage: f64,
}

/// Evaluates the fidelity against `ideal` and, if `phase_correct`, against
/// the best phase-layered versions of it.
pub fn average_fidelity(channel: &ProcessChannel, ideal: &IdealGate, phase_correct: bool) -> Result<FidelityReport, FidelityError> {
    let d = channel.dim();
    if ideal.dim() != d {
        return Err(FidelityError::Dimension {
            channel: d,
            ideal: ideal.dim(),
        });
    }
    let n = channel.n_qubits;
    let df = d as f64;
    let to_f = |s: f64| (df * s + df * df) / (df * df * (df + 1.0));
    let f_raw = fidelity_formula(channel, &ideal.unitary);
    let mut report = FidelityReport {
        gate: channel.gate.clone(),
        d,
        decay: channel.decay,
        f_raw,
        f_local_phase_corrected: None,
        f_phase_corrected: None,
        phase_layer: vec![],
        control_phase_layer: vec![],
        target_phase: None,
        leakage: channel.leakage(),
    };
    if phase_correct {
        let m = phase_form(channel, &ideal.unitary);
        let (phases, local_value) = optimise_local(&m, n);
        let start: Vec<C64> = (0..d)
            .map(|x| {
                let a: f64 = (0..n).filter(|&k| (x >> (n - 1 - k)) & 1 == 1).map(|k| phases[k]).sum();
                C64::from_polar(1.0, a)
            })
            .collect();
        let (thetas, phi, value) = optimise_control_layer(&m, n, &start);
        report.f_local_phase_corrected = Some(to_f(local_value).max(f_raw));
        report.f_phase_corrected = Some(to_f(value.max(local_value)).max(f_raw));
        report.phase_layer = phases;
        report.control_phase_layer = thetas;
        report.target_phase = Some(phi);
    }
    Ok(report)
}

/// `diag(l)·U` for the single-qubit phase layer `phases`.
pub fn local_phase_layered(ideal: &IdealGate, phases: &[f64]) -> ComplexMatrix {
    let n = ideal.n_qubits;
    let d = ideal.dim();
    let l: Vec<C64> = (0..d)
        .map(|x| C64::from_polar(1.0, (0..n).filter(|&k| (x >> (n - 1 - k)) & 1 == 1).map(|k| phases[k]).sum()))
        .collect();
    ComplexMatrix::diagonal(&l).matmul(&ideal.unitary).expect("shape")
}

/// `diag(l)·U` for a control-register layer `thetas` and target phase `phi`.
pub fn control_phase_layered(ideal: &IdealGate, thetas: &[f64], phi: f64) -> ComplexMatrix {
    let d = ideal.dim();
    let l: Vec<C64> = (0..d)
        .map(|x| C64::from_polar(1.0, thetas[x >> 1] + if x & 1 == 1 { phi } else { 0.0 }))
        .collect();
    ComplexMatrix::diagonal(&l).matmul(&ideal.unitary).expect("shape")
}

/// Pauli label helper for reports and errors.
pub fn basis_label(n_qubits: usize, j: usize) -> String {
    pauli_label(n_qubits, j)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal_channel(g: &IdealGate) -> ProcessChannel {
        ProcessChannel::from_kraus_single(&g.name, g.n_qubits, &g.unitary)
    }

    #[test]
    fn truth_tables() {
        let t = IdealGate::toffoli();
        let apply = |x: usize| (0..8).find(|&y| t.unitary[(y, x)] == ONE).unwrap();
        assert_eq!(apply(0b110), 0b111);
        assert_eq!(apply(0b111), 0b110);
        assert_eq!(apply(0b100), 0b100);
        assert_eq!(apply(0b011), 0b011);
        let c3 = IdealGate::cn_not(3);
        assert_eq!(&c3.unitary * &c3.unitary, ComplexMatrix::identity(16));
        assert!(c3.unitary.is_unitary(1e-12));
    }

    #[test]
    fn ideal_channel_has_unit_fidelity() {
        for g in [IdealGate::toffoli(), IdealGate::cn_not(3)] {
            let ch = ideal_channel(&g);
            let r = average_fidelity(&ch, &g, false).unwrap();
            assert!((r.f_raw - 1.0).abs() < 1e-12);
            assert!(r.leakage.abs() < 1e-12);
        }
        let g = IdealGate::toffoli();
        let ch = ideal_channel(&g);
        let sum: f64 = qubit_pauli_basis(3)
            .iter()
            .zip(&ch.basis_images)
            .map(|(o, img)| (&(&(&g.unitary * &o.dagger()) * &g.unitary.dagger()) * img).trace().unwrap().re)
            .sum();
        assert!((sum - 512.0).abs() < 1e-9);
    }

    #[test]
    fn depolarizing_channel_gives_one_eighth() {
        let d = 8;
        let units = (0..d * d)
            .map(|k| {
                if k / d == k % d {
                    ComplexMatrix::identity(d).scale_real(1.0 / d as f64)
                } else {
                    ComplexMatrix::zeros(d, d)
                }
            })
            .collect();
        let ch = ProcessChannel::from_unit_images("depol", 3, false, units, ChannelDiagnostics::default());
        let r = average_fidelity(&ch, &IdealGate::toffoli(), false).unwrap();
        assert!((r.f_raw - 0.125).abs() < 1e-12);
    }

    #[test]
    fn global_phase_invariance() {
        let g = IdealGate::toffoli();
        let w = local_phase_layered(&g, &[0.3, -1.1, 0.7]);
        let ch = ProcessChannel::from_kraus_single("x", 3, &w);
        let f1 = fidelity_formula(&ch, &g.unitary);
        let f2 = fidelity_formula(&ch, &g.unitary.scale(C64::from_polar(1.0, 0.77)));
        assert!((f1 - f2).abs() < 1e-12);
    }

    #[test]
    fn phase_form_matches_formula() {
        let g = IdealGate::toffoli();
        let w = control_phase_layered(&g, &[0.0, 0.4, -0.9, 2.0], 0.3);
        let ch = ProcessChannel::from_kraus_single("x", 3, &w);
        let m = phase_form(&ch, &g.unitary);
        for phases in [[0.0, 0.0, 0.0], [0.1, -0.5, 1.3]] {
            let layered = local_phase_layered(&g, &phases);
            let l: Vec<C64> = (0..8).map(|x| layered[(x, (0..8).find(|&p| g.unitary[(x, p)] != ZERO).unwrap())]).collect();
            let direct = fidelity_formula(&ch, &layered);
            let via = (8.0 * form_value(&m, &l) + 64.0) / (64.0 * 9.0);
            assert!((direct - via).abs() < 1e-12);
        }
    }

    #[test]
    fn optimisers_recover_phase_layers() {
        let g = IdealGate::toffoli();
        let w = local_phase_layered(&g, &[0.5, -2.0, 1.2]);
        let ch = ProcessChannel::from_kraus_single("x", 3, &w);
        let r = average_fidelity(&ch, &g, true).unwrap();
        assert!(r.f_raw < 0.9);
        assert!((r.f_local_phase_corrected.unwrap() - 1.0).abs() < 1e-10);
        assert!((r.phase_layer[0] - 0.5).abs() < 1e-6);
        assert!((r.phase_layer[1] + 2.0).abs() < 1e-6);
        assert!((r.phase_layer[2] - 1.2).abs() < 1e-6);

        // a CZ-type phase is not a local layer but is a control-register layer
        let w = control_phase_layered(&g, &[0.0, 0.0, 0.0, PI], 0.4);
        let ch = ProcessChannel::from_kraus_single("x", 3, &w);
        let r = average_fidelity(&ch, &g, true).unwrap();
        assert!(r.f_local_phase_corrected.unwrap() < 0.95);
        assert!((r.f_phase_corrected.unwrap() - 1.0).abs() < 1e-10);
        let fw = fidelity_formula(&ch, &control_phase_layered(&g, &r.control_phase_layer, r.target_phase.unwrap()));
        assert!((fw - 1.0).abs() < 1e-10);
    }
}
