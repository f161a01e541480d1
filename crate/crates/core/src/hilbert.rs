//! Level schemes, composite Hilbert spaces and embedded operators.
//!
//! Tensor order follows the atom list: controls first, the target last, so a
//! label such as `"11A"` reads control 1, control 2, target. Per-atom level
//! order is fixed:
//!
//! | role    | index 0 | index 1 | index 2 | index 3 |
//! |---------|---------|---------|---------|---------|
//! | control | `g0`    | `g1`    | `r`     |         |
//! | target  | `A`     | `B`     | `e`     | `R`     |
//!
//! The computational qubit is (g0, g1) on controls and (A, B) on the target,
//! so |0⟩ ↦ g0 / A and |1⟩ ↦ g1 / B.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{pauli, ComplexMatrix, LinalgError, ONE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HilbertError {
    #[error("atom {0} listed more than once")]
    DuplicateAtom(usize),
    #[error("atom index {index} out of range for a {n_atoms}-atom layout")]
    AtomOutOfRange { index: usize, n_atoms: usize },
    #[error("operator on atom {atom} is {got}x{got}, expected {expected}x{expected}")]
    DimensionMismatch { atom: usize, expected: usize, got: usize },
    #[error("layout must contain exactly one target atom, found {0}")]
    TargetCount(usize),
    #[error("level {level} does not exist on a {role:?} atom")]
    LevelRole { level: Level, role: Role },
    #[error("invalid state label {0:?}")]
    BadLabel(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Control,
    Target,
}

/// A named atomic level. Control and target Rydberg states are distinct
/// variants (`r` versus `R`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    #[serde(rename = "g0")]
    G0,
    #[serde(rename = "g1")]
    G1,
    #[serde(rename = "r")]
    Ryd,
    A,
    B,
    #[serde(rename = "e")]
    E,
    #[serde(rename = "R")]
    RydT,
}

impl Level {
    pub fn role(self) -> Role {
        match self {
            Level::G0 | Level::G1 | Level::Ryd => Role::Control,
            _ => Role::Target,
        }
    }

    /// Position inside the owning atom's level list.
    pub fn local_index(self) -> usize {
        match self {
            Level::G0 | Level::A => 0,
            Level::G1 | Level::B => 1,
            Level::Ryd | Level::E => 2,
            Level::RydT => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Level::G0 => "g0",
            Level::G1 => "g1",
            Level::Ryd => "r",
            Level::A => "A",
            Level::B => "B",
            Level::E => "e",
            Level::RydT => "R",
        }
    }

    /// One-character symbol used inside composite labels.
    pub fn symbol(self) -> char {
        match self {
            Level::G0 => '0',
            Level::G1 => '1',
            Level::Ryd => 'r',
            Level::A => 'A',
            Level::B => 'B',
            Level::E => 'e',
            Level::RydT => 'R',
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LevelScheme {
    pub role: Role,
}

impl LevelScheme {
    pub const CONTROL: LevelScheme = LevelScheme { role: Role::Control };
    pub const TARGET: LevelScheme = LevelScheme { role: Role::Target };

    pub fn levels(&self) -> &'static [Level] {
        match self.role {
            Role::Control => &[Level::G0, Level::G1, Level::Ryd],
            Role::Target => &[Level::A, Level::B, Level::E, Level::RydT],
        }
    }

    pub fn dim(&self) -> usize {
        self.levels().len()
    }

    /// The two levels carrying qubit values 0 and 1.
    pub fn qubit_levels(&self) -> [Level; 2] {
        match self.role {
            Role::Control => [Level::G0, Level::G1],
            Role::Target => [Level::A, Level::B],
        }
    }

    pub fn rydberg(&self) -> Level {
        match self.role {
            Role::Control => Level::Ryd,
            Role::Target => Level::RydT,
        }
    }

    pub fn contains(&self, level: Level) -> bool {
        level.role() == self.role
    }

    pub fn level_from_symbol(&self, c: char) -> Option<Level> {
        self.levels().iter().copied().find(|l| l.symbol() == c)
    }

    /// `|a⟩⟨b|` on this atom.
    pub fn ket_bra(&self, a: Level, b: Level) -> Result<ComplexMatrix, HilbertError> {
        for l in [a, b] {
            if !self.contains(l) {
                return Err(HilbertError::LevelRole { level: l, role: self.role });
            }
        }
        Ok(ComplexMatrix::unit(self.dim(), a.local_index(), b.local_index()))
    }

    /// Projector `|l⟩⟨l|`.
    pub fn projector(&self, l: Level) -> Result<ComplexMatrix, HilbertError> {
        self.ket_bra(l, l)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalOperator {
    pub atom: usize,
    pub matrix: ComplexMatrix,
}

impl LocalOperator {
    pub fn new(atom: usize, matrix: ComplexMatrix) -> Self {
        Self { atom, matrix }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemLayout {
    atoms: Vec<LevelScheme>,
}

impl SystemLayout {
    pub fn new(atoms: Vec<LevelScheme>) -> Result<Self, HilbertError> {
        let targets = atoms.iter().filter(|a| a.role == Role::Target).count();
        if targets != 1 {
            return Err(HilbertError::TargetCount(targets));
        }
        let dim: usize = atoms.iter().map(LevelScheme::dim).product();
        if dim > crate::linalg::MAX_DIM {
            return Err(LinalgError::SizeCap { requested: dim }.into());
        }
        Ok(Self { atoms })
    }

    /// `n_controls` control atoms followed by the target.
    pub fn with_controls(n_controls: usize) -> Result<Self, HilbertError> {
        let mut atoms = vec![LevelScheme::CONTROL; n_controls];
        atoms.push(LevelScheme::TARGET);
        Self::new(atoms)
    }

    pub fn toffoli() -> Self {
        Self::with_controls(2).expect("static layout")
    }

    pub fn c3not() -> Self {
        Self::with_controls(3).expect("static layout")
    }

    pub fn atoms(&self) -> &[LevelScheme] {
        &self.atoms
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn n_qubits(&self) -> usize {
        self.atoms.len()
    }

    pub fn target_index(&self) -> usize {
        self.atoms.iter().position(|a| a.role == Role::Target).expect("validated")
    }

    pub fn control_indices(&self) -> Vec<usize> {
        (0..self.atoms.len()).filter(|&i| self.atoms[i].role == Role::Control).collect()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.atoms.iter().map(LevelScheme::dim).collect()
    }

    pub fn dim(&self) -> usize {
        self.dims().iter().product()
    }

    /// Composite index of a per-atom level assignment.
    pub fn index_of(&self, levels: &[Level]) -> Result<usize, HilbertError> {
        if levels.len() != self.atoms.len() {
            return Err(HilbertError::BadLabel(format!("{levels:?}")));
        }
        let mut idx = 0;
        for (scheme, &l) in self.atoms.iter().zip(levels) {
            if !scheme.contains(l) {
                return Err(HilbertError::LevelRole { level: l, role: scheme.role });
            }
            idx = idx * scheme.dim() + l.local_index();
        }
        Ok(idx)
    }

    pub fn levels_of(&self, mut index: usize) -> Vec<Level> {
        let mut out = vec![Level::G0; self.atoms.len()];
        for (k, scheme) in self.atoms.iter().enumerate().rev() {
            out[k] = scheme.levels()[index % scheme.dim()];
            index /= scheme.dim();
        }
        out
    }

    pub fn label(&self, index: usize) -> String {
        self.levels_of(index).iter().map(|l| l.symbol()).collect()
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.dim()).map(|i| self.label(i)).collect()
    }

    /// Parses labels such as `"11A"` or `"r0B"` into a composite index.
    pub fn parse_label(&self, label: &str) -> Result<usize, HilbertError> {
        let chars: Vec<char> = label.chars().collect();
        if chars.len() != self.atoms.len() {
            return Err(HilbertError::BadLabel(label.to_string()));
        }
        let levels = chars
            .iter()
            .zip(&self.atoms)
            .map(|(&c, s)| s.level_from_symbol(c).ok_or_else(|| HilbertError::BadLabel(label.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        self.index_of(&levels)
    }

    /// Composite indices of the computational basis, ordered as the binary
    /// count of qubit values with atom 0 most significant.
    pub fn computational_indices(&self) -> Vec<usize> {
        let n = self.atoms.len();
        (0..1usize << n)
            .map(|bits| {
                let levels: Vec<Level> = (0..n)
                    .map(|k| self.atoms[k].qubit_levels()[(bits >> (n - 1 - k)) & 1])
                    .collect();
                self.index_of(&levels).expect("qubit levels are valid")
            })
            .collect()
    }

    /// Qubit bit string (atom 0 first) for a computational basis position.
    pub fn qubit_label(&self, position: usize) -> String {
        let n = self.atoms.len();
        (0..n).map(|k| if (position >> (n - 1 - k)) & 1 == 1 { '1' } else { '0' }).collect()
    }

    /// Embeds a single-atom operator.
    pub fn embed_one(&self, atom: usize, m: &ComplexMatrix) -> Result<ComplexMatrix, HilbertError> {
        embed(self, &[LocalOperator::new(atom, m.clone())])
    }

    /// Embedded `|a⟩⟨b|` on one atom.
    pub fn embed_ket_bra(&self, atom: usize, a: Level, b: Level) -> Result<ComplexMatrix, HilbertError> {
        let scheme = self.atom(atom)?;
        self.embed_one(atom, &scheme.ket_bra(a, b)?)
    }

    pub fn atom(&self, atom: usize) -> Result<LevelScheme, HilbertError> {
        self.atoms.get(atom).copied().ok_or(HilbertError::AtomOutOfRange {
            index: atom,
            n_atoms: self.atoms.len(),
        })
    }
}

/// Kronecker product of the listed local operators with identities on the
/// remaining atoms, in layout order.
pub fn embed(layout: &SystemLayout, ops: &[LocalOperator]) -> Result<ComplexMatrix, HilbertError> {
    let n = layout.n_atoms();
    let mut slots: Vec<Option<&ComplexMatrix>> = vec![None; n];
    for op in ops {
        let scheme = layout.atom(op.atom)?;
        if slots[op.atom].is_some() {
            return Err(HilbertError::DuplicateAtom(op.atom));
        }
        let (r, c) = op.matrix.shape();
        if r != scheme.dim() || c != scheme.dim() {
            return Err(HilbertError::DimensionMismatch {
                atom: op.atom,
                expected: scheme.dim(),
                got: r.max(c),
            });
        }
        slots[op.atom] = Some(&op.matrix);
    }
    let mut out = ComplexMatrix::identity(1);
    for (k, slot) in slots.into_iter().enumerate() {
        let factor = match slot {
            Some(m) => m.clone(),
            None => ComplexMatrix::identity(layout.atoms[k].dim()),
        };
        out = out.kron(&factor)?;
    }
    Ok(out)
}

pub fn computational_projector(layout: &SystemLayout) -> ComplexMatrix {
    let mut p = ComplexMatrix::zeros(layout.dim(), layout.dim());
    for i in layout.computational_indices() {
        p[(i, i)] = ONE;
    }
    p
}

/// The `4^N` Pauli products on the qubit space, as `2^N`-dimensional
/// matrices. Index `j = Σ_k p_k·4^(N−1−k)` with `p_k ∈ {I, X, Y, Z}` and atom
/// 0 most significant.
pub fn qubit_pauli_basis(n_qubits: usize) -> Vec<ComplexMatrix> {
    let singles = pauli::all();
    let mut basis = vec![ComplexMatrix::identity(1)];
    for _ in 0..n_qubits {
        basis = basis
            .iter()
            .flat_map(|b| singles.iter().map(move |s| b.kron(s).expect("small")))
            .collect();
    }
    basis
}

/// Lift a `2^N × 2^N` operator into the full space, zero outside the
/// computational subspace.
pub fn lift_to_full(layout: &SystemLayout, qubit_op: &ComplexMatrix) -> ComplexMatrix {
    let idx = layout.computational_indices();
    let mut out = ComplexMatrix::zeros(layout.dim(), layout.dim());
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            out[(i, j)] = qubit_op[(a, b)];
        }
    }
    out
}

/// Restrict a full-space operator to the computational block, `P·X·P`,
/// expressed in the `2^N` qubit basis.
pub fn restrict_to_qubits(layout: &SystemLayout, full: &ComplexMatrix) -> ComplexMatrix {
    full.restrict(&layout.computational_indices())
}

pub fn embedded_pauli_basis(layout: &SystemLayout) -> Vec<ComplexMatrix> {
    qubit_pauli_basis(layout.n_qubits())
        .iter()
        .map(|p| lift_to_full(layout, p))
        .collect()
}

/// Label of Pauli basis element `j`, e.g. `"IXZ"`.
pub fn pauli_label(n_qubits: usize, j: usize) -> String {
    (0..n_qubits)
        .map(|k| ['I', 'X', 'Y', 'Z'][(j >> (2 * (n_qubits - 1 - k))) & 3])
        .collect()
}
