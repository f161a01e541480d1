//! Sparse generator for one segment, restricted to the entries an input can
//! ever reach.
//!
//! The state is either a vector (`bra_dim == 1`, left action only) or a
//! matrix evolving under `dX/dt = −i(H_eff X − X H_eff†) + Σ A X A†` with
//! `H_eff = H − (i/2)ΣA†A`. Starting from the nonzero entries of the input,
//! the support is closed under the left and right actions of `H_eff` and the
//! jump sandwiches; only entries inside the closure are integrated. In the
//! interaction frame the real static diagonal `D` is removed and every
//! entry `(i, j)` picks up the phase `e^{i(D_i − D_j)t}`.

use std::collections::{HashMap, VecDeque};

use num_complex::Complex64 as C64;

use crate::hamiltonian::TimeDepHamiltonian;
use crate::linalg::{ComplexMatrix, I, ZERO};
use crate::pulses::Envelope;

use super::Frame;

const NONE: u32 = u32::MAX;

struct Contribution {
    entry: u32,
    factor: C64,
    envelope: Option<u32>,
    freq: u32,
}

pub(crate) struct SegmentPlan {
    pub dim: usize,
    pub bra_dim: usize,
    /// Frame energies (zero in the lab frame).
    pub energies: Vec<f64>,
    /// Support pairs `(ket, bra)` in integration order.
    pub support: Vec<(u32, u32)>,
    envelopes: Vec<Envelope>,
    freqs: Vec<f64>,
    contributions: Vec<Contribution>,
    n_entries: usize,
    left: Vec<(u32, u32, u32)>,
    right: Vec<(u32, u32, u32)>,
    jumps: Vec<(u32, u32, C64, u32)>,
}

pub(crate) struct Workspace {
    env: Vec<f64>,
    phase: Vec<C64>,
    h: Vec<C64>,
    left_c: Vec<C64>,
    right_c: Vec<C64>,
}

#[derive(Default)]
struct FreqTable {
    index: HashMap<u64, u32>,
    values: Vec<f64>,
}

impl FreqTable {
    fn id(&mut self, w: f64) -> u32 {
        let w = if w == 0.0 { 0.0 } else { w };
        let next = self.values.len() as u32;
        *self.index.entry(w.to_bits()).or_insert_with(|| {
            self.values.push(w);
            next
        })
    }
}

fn nonzeros(m: &ComplexMatrix) -> Vec<(usize, usize, C64)> {
    let n = m.cols();
    m.as_slice()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != ZERO)
        .map(|(k, &v)| (k / n, k % n, v))
        .collect()
}

impl SegmentPlan {
    /// `initial` lists the nonzero entries `(ket, bra)` of the input; for a
    /// vector `bra` is always 0 and `channels` must be empty.
    pub fn build(h: &TimeDepHamiltonian, channels: &[ComplexMatrix], frame: Frame, vector: bool, initial: &[(usize, usize)]) -> Self {
        let n = h.dim();
        let energies: Vec<f64> = match frame {
            Frame::Lab => vec![0.0; n],
            Frame::Interaction => (0..n).map(|i| h.static_part[(i, i)].re).collect(),
        };
        let mut freqs = FreqTable::default();
        let mut entry_index: HashMap<(usize, usize), u32> = HashMap::new();
        let mut entry_pos: Vec<(usize, usize)> = Vec::new();
        let mut contributions = Vec::new();
        let mut envelopes = Vec::new();
        let mut add = |i: usize, j: usize, factor: C64, envelope: Option<u32>, w: f64, freqs: &mut FreqTable| {
            let next = entry_pos.len() as u32;
            let e = *entry_index.entry((i, j)).or_insert_with(|| {
                entry_pos.push((i, j));
                next
            });
            contributions.push(Contribution {
                entry: e,
                factor,
                envelope,
                freq: freqs.id(w + energies[i] - energies[j]),
            });
        };
        for (i, j, v) in nonzeros(&h.static_part) {
            if frame == Frame::Interaction && i == j {
                let rest = v - C64::new(energies[i], 0.0);
                if rest != ZERO {
                    add(i, j, rest, None, 0.0, &mut freqs);
                }
                continue;
            }
            add(i, j, v, None, 0.0, &mut freqs);
        }
        if !channels.is_empty() {
            let mut g = ComplexMatrix::zeros(n, n);
            for a in channels {
                g += &a.dagger().matmul(a).expect("square channel");
            }
            for (i, j, v) in nonzeros(&g) {
                add(i, j, -I * 0.5 * v, None, 0.0, &mut freqs);
            }
        }
        for term in &h.terms {
            let env_id = envelopes.len() as u32;
            envelopes.push(term.coefficient.envelope);
            let w = term.coefficient.frequency;
            let s = term.coefficient.scale;
            for (i, j, v) in nonzeros(&term.op) {
                add(i, j, s * v, Some(env_id), w, &mut freqs);
                add(j, i, (s * v).conj(), Some(env_id), -w, &mut freqs);
            }
        }
        let n_entries = entry_pos.len();

        // entries grouped by column: (row, entry id)
        let mut by_col: Vec<Vec<(usize, u32)>> = vec![Vec::new(); n];
        for (e, &(i, j)) in entry_pos.iter().enumerate() {
            by_col[j].push((i, e as u32));
        }
        let jump_cols: Vec<Vec<Vec<(usize, C64)>>> = channels
            .iter()
            .map(|a| {
                let mut cols = vec![Vec::new(); n];
                for (k, i, v) in nonzeros(a) {
                    cols[i].push((k, v));
                }
                cols
            })
            .collect();

        let bra_dim = if vector { 1 } else { n };
        let mut index = vec![NONE; n * bra_dim];
        let mut support: Vec<(u32, u32)> = Vec::new();
        let mut queue = VecDeque::new();
        let visit = |i: usize, j: usize, index: &mut Vec<u32>, support: &mut Vec<(u32, u32)>, queue: &mut VecDeque<(usize, usize)>| {
            let slot = &mut index[i * bra_dim + j];
            if *slot == NONE {
                *slot = support.len() as u32;
                support.push((i as u32, j as u32));
                queue.push_back((i, j));
            }
            *slot
        };
        for &(i, j) in initial {
            visit(i, j, &mut index, &mut support, &mut queue);
        }
        while let Some((i, j)) = queue.pop_front() {
            for &(k, _) in &by_col[i] {
                visit(k, j, &mut index, &mut support, &mut queue);
            }
            if !vector {
                for &(l, _) in &by_col[j] {
                    visit(i, l, &mut index, &mut support, &mut queue);
                }
                for cols in &jump_cols {
                    for &(k, _) in &cols[i] {
                        for &(l, _) in &cols[j] {
                            visit(k, l, &mut index, &mut support, &mut queue);
                        }
                    }
                }
            }
        }

        let mut left = Vec::new();
        let mut right = Vec::new();
        let mut jumps = Vec::new();
        for (p, &(i, j)) in support.iter().enumerate() {
            let (i, j) = (i as usize, j as usize);
            for &(k, e) in &by_col[i] {
                left.push((index[k * bra_dim + j], p as u32, e));
            }
            if !vector {
                for &(l, e) in &by_col[j] {
                    right.push((index[i * bra_dim + l], p as u32, e));
                }
                for cols in &jump_cols {
                    for &(k, a) in &cols[i] {
                        for &(l, b) in &cols[j] {
                            let w = energies[k] - energies[i] - energies[l] + energies[j];
                            jumps.push((index[k * bra_dim + l], p as u32, a * b.conj(), freqs.id(w)));
                        }
                    }
                }
            }
        }
        left.sort_unstable();
        right.sort_unstable();
        jumps.sort_unstable_by_key(|x| (x.0, x.1));

        Self {
            dim: n,
            bra_dim,
            energies,
            support,
            envelopes,
            freqs: freqs.values,
            contributions,
            n_entries,
            left,
            right,
            jumps,
        }
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            env: vec![0.0; self.envelopes.len()],
            phase: vec![ZERO; self.freqs.len()],
            h: vec![ZERO; self.n_entries],
            left_c: vec![ZERO; self.n_entries],
            right_c: vec![ZERO; self.n_entries],
        }
    }

    pub fn rhs(&self, ws: &mut Workspace, t: f64, y: &[C64], dy: &mut [C64]) {
        for (v, e) in ws.env.iter_mut().zip(&self.envelopes) {
            *v = e.value(t);
        }
        for (p, &w) in ws.phase.iter_mut().zip(&self.freqs) {
            *p = if w == 0.0 { C64::new(1.0, 0.0) } else { C64::from_polar(1.0, w * t) };
        }
        ws.h.iter_mut().for_each(|h| *h = ZERO);
        for c in &self.contributions {
            let mut v = c.factor * ws.phase[c.freq as usize];
            if let Some(e) = c.envelope {
                v *= ws.env[e as usize];
            }
            ws.h[c.entry as usize] += v;
        }
        for ((h, l), r) in ws.h.iter().zip(ws.left_c.iter_mut()).zip(ws.right_c.iter_mut()) {
            *l = -I * h;
            *r = I * h.conj();
        }
        dy.iter_mut().for_each(|d| *d = ZERO);
        for &(d, s, e) in &self.left {
            dy[d as usize] += ws.left_c[e as usize] * y[s as usize];
        }
        for &(d, s, e) in &self.right {
            dy[d as usize] += ws.right_c[e as usize] * y[s as usize];
        }
        for &(d, s, f, w) in &self.jumps {
            dy[d as usize] += f * ws.phase[w as usize] * y[s as usize];
        }
    }

    /// Gathers the support entries of a dense lab-frame state (frame time 0).
    pub fn gather(&self, dense: &[C64]) -> Vec<C64> {
        self.support
            .iter()
            .map(|&(i, j)| dense[i as usize * self.bra_dim + j as usize])
            .collect()
    }

    /// Writes the support entries back into a dense lab-frame state at
    /// segment-local time `t`, undoing the interaction-frame phases.
    pub fn scatter(&self, y: &[C64], t: f64, dense: &mut [C64]) {
        dense.iter_mut().for_each(|d| *d = ZERO);
        for (&(i, j), &v) in self.support.iter().zip(y) {
            let (i, j) = (i as usize, j as usize);
            let w = if self.bra_dim == 1 {
                self.energies[i]
            } else {
                self.energies[i] - self.energies[j]
            };
            let v = if w == 0.0 { v } else { v * C64::from_polar(1.0, -w * t) };
            dense[i * self.bra_dim + j] = v;
        }
    }
}
