//! A gate scenario: layout, schedule, assembled Hamiltonians and decay
//! channels for one gate and parameter set.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{
    build_lindblad_channels, propagate_lindblad, propagate_unitary, DynamicsError, IntegratorOptions, LindbladChannel, Sampling,
};
use crate::hamiltonian::{HamiltonianError, PiecewiseHamiltonian};
use crate::hilbert::{HilbertError, Level, SystemLayout};
use crate::linalg::{ComplexMatrix, ComplexVector};
use crate::params::{GateKind, ParamError, ProtocolParams};
use crate::pulses::{schedule_for, PulseSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid control pattern {0:?}")]
    Pattern(String),
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub gate: GateKind,
    pub params: ProtocolParams,
    pub layout: SystemLayout,
    pub schedule: PulseSchedule,
    pub hamiltonian: PiecewiseHamiltonian,
    pub channels: Vec<LindbladChannel>,
}

impl Scenario {
    pub fn new(gate: GateKind, params: ProtocolParams) -> Result<Self, ScenarioError> {
        let schedule = schedule_for(gate, &params)?;
        Self::with_schedule(gate, params, schedule)
    }

    pub fn with_schedule(gate: GateKind, params: ProtocolParams, schedule: PulseSchedule) -> Result<Self, ScenarioError> {
        params.check()?;
        let layout = SystemLayout::with_controls(gate.n_controls())?;
        let hamiltonian = PiecewiseHamiltonian::from_schedule(&layout, &schedule, &params)?;
        let channels = build_lindblad_channels(&layout, &params);
        Ok(Self {
            gate,
            params,
            layout,
            schedule,
            hamiltonian,
            channels,
        })
    }

    /// Basis vector for a label such as `"11A"`.
    pub fn basis_state(&self, label: &str) -> Result<ComplexVector, ScenarioError> {
        Ok(ComplexVector::basis(self.layout.dim(), self.layout.parse_label(label)?))
    }

    /// Label of the product state with controls `pattern` (over `0`/`1`) and
    /// the target in `target`.
    pub fn branch_label(&self, pattern: &str, target: Level) -> Result<String, ScenarioError> {
        if pattern.len() != self.gate.n_controls() || pattern.chars().any(|c| c != '0' && c != '1') {
            return Err(ScenarioError::Pattern(pattern.to_string()));
        }
        Ok(format!("{pattern}{}", target.symbol()))
    }

    /// Population of target level `level`, summed over every control
    /// configuration, from a vector or a density matrix diagonal.
    pub fn target_population(&self, diagonal: &[f64], level: Level) -> f64 {
        let t = self.layout.target_index();
        (0..self.layout.dim())
            .filter(|&i| self.layout.levels_of(i)[t] == level)
            .map(|i| diagonal[i])
            .sum()
    }

    /// Final basis-state populations after the full sequence from `label`.
    pub fn final_populations(&self, label: &str, decay: bool, opts: &IntegratorOptions) -> Result<Vec<f64>, ScenarioError> {
        let psi = self.basis_state(label)?;
        if decay {
            let rho = psi.outer(&psi);
            let r = propagate_lindblad(&rho, &self.hamiltonian, &self.channels, &Sampling::none(), opts)?;
            Ok((0..self.layout.dim()).map(|i| r.final_state[(i, i)].re).collect())
        } else {
            let r = propagate_unitary(&psi, &self.hamiltonian, &Sampling::none(), opts)?;
            Ok(r.final_state.as_slice().iter().map(|z| z.norm_sqr()).collect())
        }
    }

    pub fn without_decay(&self) -> Result<Self, ScenarioError> {
        Self::with_schedule(self.gate, self.params.without_decay(), self.schedule.clone())
    }

    /// Index of the Raman segment.
    pub fn raman_segment(&self) -> usize {
        self.schedule
            .segments
            .iter()
            .position(|s| s.label == "raman")
            .unwrap_or(self.schedule.segments.len() / 2)
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn identity(&self) -> ComplexMatrix {
        ComplexMatrix::identity(self.dim())
    }
}

/// Outcome probabilities of one branch run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchOutcome {
    /// Population with the target in its initial qubit level.
    pub stay: f64,
    /// Population with the target in the other qubit level.
    pub flip: f64,
    /// Population outside both target qubit levels.
    pub target_leakage: f64,
}

/// Runs `pattern` (controls over `0`/`1`) with the target in |A⟩.
pub fn run_branch(s: &Scenario, pattern: &str, decay: bool, opts: &IntegratorOptions) -> Result<BranchOutcome, ScenarioError> {
    let label = s.branch_label(pattern, Level::A)?;
    let pops = s.final_populations(&label, decay, opts)?;
    let stay = s.target_population(&pops, Level::A);
    let flip = s.target_population(&pops, Level::B);
    let total: f64 = pops.iter().sum();
    Ok(BranchOutcome {
        stay,
        flip,
        target_leakage: total - stay - flip,
    })
}

/// Population with every control in |r⟩ after the opening control pulses
/// (the segments before the Raman pulse), starting from |1…1A⟩.
pub fn rab_ladder_population(s: &Scenario, decay: bool, opts: &IntegratorOptions) -> Result<f64, ScenarioError> {
    let opening = PiecewiseHamiltonian {
        segments: s.hamiltonian.segments[..s.raman_segment()].to_vec(),
    };
    let label = s.branch_label(&"1".repeat(s.gate.n_controls()), Level::A)?;
    let psi = s.basis_state(&label)?;
    let pops: Vec<f64> = if decay {
        let r = propagate_lindblad(&psi.outer(&psi), &opening, &s.channels, &Sampling::none(), opts)?;
        (0..s.dim()).map(|i| r.final_state[(i, i)].re).collect()
    } else {
        let r = propagate_unitary(&psi, &opening, &Sampling::none(), opts)?;
        r.final_state.as_slice().iter().map(|z| z.norm_sqr()).collect()
    };
    let controls = s.layout.control_indices();
    Ok((0..s.dim())
        .filter(|&i| {
            let levels = s.layout.levels_of(i);
            controls.iter().all(|&c| levels[c] == Level::Ryd)
        })
        .map(|i| pops[i])
        .sum())
}

/// Probability that the target stays in |A⟩ for control pattern `pattern`.
pub fn blocking_probability(s: &Scenario, pattern: &str, decay: bool, opts: &IntegratorOptions) -> Result<f64, ScenarioError> {
    Ok(run_branch(s, pattern, decay, opts)?.stay)
}

/// Probability of |1…1A⟩ → target in |B⟩.
pub fn transfer_probability(s: &Scenario, decay: bool, opts: &IntegratorOptions) -> Result<f64, ScenarioError> {
    let ones = "1".repeat(s.gate.n_controls());
    Ok(run_branch(s, &ones, decay, opts)?.flip)
}
