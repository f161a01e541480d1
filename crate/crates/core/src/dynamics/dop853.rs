//! Adaptive Dormand–Prince 8(5,3) stepper for complex linear ODEs, with the
//! step controller and error norm of Hairer's dop853.

use num_complex::Complex64 as C64;

use super::dop853_tableau::{A, B, C, E3, E5, STAGES};

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const ERROR_EXPONENT: f64 = -1.0 / 8.0;
const ORDER: f64 = 7.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: u64,
    pub rejected: u64,
    pub rhs_evaluations: u64,
}

impl StepStats {
    pub fn add(&mut self, other: StepStats) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.rhs_evaluations += other.rhs_evaluations;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepFailure {
    /// Step size fell below the resolvable minimum at time `t`.
    Underflow { t: f64, h: f64 },
    /// The step budget ran out at time `t`.
    Budget { t: f64 },
    /// The right-hand side produced a non-finite value at time `t`.
    NonFinite { t: f64 },
}

pub struct Dop853 {
    n: usize,
    rtol: f64,
    atol: f64,
    max_steps: u64,
    k: Vec<Vec<C64>>,
    y_stage: Vec<C64>,
    y_new: Vec<C64>,
    y_side: Vec<C64>,
}

fn rms_scaled(x: &[C64], scale: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().zip(scale).map(|(v, s)| (v.norm() / s).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

impl Dop853 {
    pub fn new(n: usize, rtol: f64, atol: f64, max_steps: u64) -> Self {
        Self {
            n,
            rtol,
            atol,
            max_steps,
            k: vec![vec![C64::new(0.0, 0.0); n]; STAGES + 1],
            y_stage: vec![C64::new(0.0, 0.0); n],
            y_new: vec![C64::new(0.0, 0.0); n],
            y_side: vec![C64::new(0.0, 0.0); n],
        }
    }

    fn initial_step<F: FnMut(f64, &[C64], &mut [C64])>(&mut self, f: &mut F, t0: f64, y0: &[C64], stats: &mut StepStats) -> f64 {
        let scale: Vec<f64> = y0.iter().map(|y| self.atol + y.norm() * self.rtol).collect();
        let d0 = rms_scaled(y0, &scale);
        let d1 = rms_scaled(&self.k[0], &scale);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        for i in 0..self.n {
            self.y_stage[i] = y0[i] + self.k[0][i] * h0;
        }
        let mut f1 = vec![C64::new(0.0, 0.0); self.n];
        f(t0 + h0, &self.y_stage, &mut f1);
        stats.rhs_evaluations += 1;
        let diff: Vec<C64> = f1.iter().zip(&self.k[0]).map(|(a, b)| a - b).collect();
        let d2 = rms_scaled(&diff, &scale) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / (ORDER + 1.0))
        };
        (100.0 * h0).min(h1)
    }

    /// One Runge–Kutta step of size `h` from `(t, y)` with `k[0] = f(t, y)`
    /// already set. Leaves the result in `out` and the stage derivatives in
    /// `k[1..STAGES]`.
    fn rk_step<F: FnMut(f64, &[C64], &mut [C64])>(&mut self, f: &mut F, t: f64, y: &[C64], h: f64, out_side: bool) {
        for s in 1..STAGES {
            for i in 0..self.n {
                let mut acc = C64::new(0.0, 0.0);
                for (j, &a) in A[s][..s].iter().enumerate() {
                    if a != 0.0 {
                        acc += self.k[j][i] * a;
                    }
                }
                self.y_stage[i] = y[i] + acc * h;
            }
            let (head, tail) = self.k.split_at_mut(s);
            let _ = head;
            f(t + C[s] * h, &self.y_stage, &mut tail[0]);
        }
        let out = if out_side { &mut self.y_side } else { &mut self.y_new };
        for i in 0..self.n {
            let mut acc = C64::new(0.0, 0.0);
            for (j, &b) in B.iter().enumerate() {
                if b != 0.0 {
                    acc += self.k[j][i] * b;
                }
            }
            out[i] = y[i] + acc * h;
        }
    }

    fn error_norm(&self, y: &[C64], h: f64) -> f64 {
        let mut e5 = 0.0;
        let mut e3 = 0.0;
        for i in 0..self.n {
            let scale = self.atol + y[i].norm().max(self.y_new[i].norm()) * self.rtol;
            let mut a5 = C64::new(0.0, 0.0);
            let mut a3 = C64::new(0.0, 0.0);
            for j in 0..=STAGES {
                if E5[j] != 0.0 {
                    a5 += self.k[j][i] * E5[j];
                }
                if E3[j] != 0.0 {
                    a3 += self.k[j][i] * E3[j];
                }
            }
            e5 += (a5.norm() / scale).powi(2);
            e3 += (a3.norm() / scale).powi(2);
        }
        if e5 == 0.0 && e3 == 0.0 {
            return 0.0;
        }
        h.abs() * e5 / ((e5 + 0.01 * e3) * self.n as f64).sqrt()
    }

    /// Integrates `y' = f(t, y)` from `t0` to `t_end`. For every time in
    /// `samples` (ascending, inside `(t0, t_end]`) `observe` is called with the
    /// state at that time. Interior samples are produced by separate
    /// side steps from the last accepted point; they do not influence the
    /// step-size sequence.
    pub fn integrate<F, O>(
        &mut self,
        f: &mut F,
        t0: f64,
        t_end: f64,
        y: &mut [C64],
        samples: &[f64],
        mut observe: O,
    ) -> Result<StepStats, StepFailure>
    where
        F: FnMut(f64, &[C64], &mut [C64]),
        O: FnMut(f64, &[C64]),
    {
        assert_eq!(y.len(), self.n);
        let mut stats = StepStats::default();
        let mut t = t0;
        let mut next_sample = 0;
        if self.n == 0 || t_end <= t0 {
            for &ts in samples {
                observe(ts, y);
            }
            return Ok(stats);
        }
        f(t, y, &mut self.k[0]);
        stats.rhs_evaluations += 1;
        let mut h_abs = self.initial_step(f, t, y, &mut stats).min(t_end - t0);
        while t < t_end {
            let min_step = 10.0 * (next_up(t) - t).abs();
            if h_abs < min_step {
                h_abs = min_step;
            }
            let mut rejected = false;
            loop {
                if h_abs < min_step {
                    return Err(StepFailure::Underflow { t, h: h_abs });
                }
                if stats.accepted + stats.rejected >= self.max_steps {
                    return Err(StepFailure::Budget { t });
                }
                let mut t_new = t + h_abs;
                if t_new > t_end {
                    t_new = t_end;
                }
                let h = t_new - t;
                self.rk_step(f, t, y, h, false);
                {
                    let (head, tail) = self.k.split_at_mut(STAGES);
                    let _ = head;
                    f(t_new, &self.y_new, &mut tail[0]);
                }
                stats.rhs_evaluations += STAGES as u64;
                let err = self.error_norm(y, h);
                if !err.is_finite() {
                    return Err(StepFailure::NonFinite { t });
                }
                if err < 1.0 {
                    let mut factor = if err == 0.0 {
                        MAX_FACTOR
                    } else {
                        MAX_FACTOR.min(SAFETY * err.powf(ERROR_EXPONENT))
                    };
                    if rejected {
                        factor = factor.min(1.0);
                    }
                    // side steps for samples strictly inside (t, t_new)
                    while next_sample < samples.len() && samples[next_sample] <= t_new {
                        let ts = samples[next_sample];
                        if ts >= t_new {
                            observe(ts, &self.y_new);
                        } else if ts <= t {
                            observe(ts, y);
                        } else {
                            let saved = std::mem::take(&mut self.k);
                            self.k = vec![vec![C64::new(0.0, 0.0); self.n]; STAGES + 1];
                            self.k[0].copy_from_slice(&saved[0]);
                            self.rk_step(f, t, y, ts - t, true);
                            stats.rhs_evaluations += (STAGES - 1) as u64;
                            self.k = saved;
                            let side = std::mem::take(&mut self.y_side);
                            observe(ts, &side);
                            self.y_side = side;
                        }
                        next_sample += 1;
                    }
                    stats.accepted += 1;
                    y.copy_from_slice(&self.y_new);
                    let (first, rest) = self.k.split_at_mut(1);
                    first[0].copy_from_slice(&rest[STAGES - 1]);
                    t = t_new;
                    h_abs *= factor;
                    break;
                } else {
                    stats.rejected += 1;
                    h_abs *= MIN_FACTOR.max(SAFETY * err.powf(ERROR_EXPONENT));
                    rejected = true;
                }
            }
        }
        while next_sample < samples.len() {
            observe(samples[next_sample], y);
            next_sample += 1;
        }
        Ok(stats)
    }
}

fn next_up(x: f64) -> f64 {
    if x.is_nan() || x == f64::INFINITY {
        return x;
    }
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    if x > 0.0 {
        f64::from_bits(bits + 1)
    } else {
        f64::from_bits(bits - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_and_rotation() {
        // y' = (−γ + iω) y
        let rate = C64::new(-0.7, 3.0);
        let mut f = |_: f64, y: &[C64], dy: &mut [C64]| dy[0] = rate * y[0];
        let mut y = vec![C64::new(1.0, 0.0)];
        let mut seen = vec![];
        let mut stepper = Dop853::new(1, 1e-12, 1e-14, 1_000_000);
        let samples = [0.5, 1.0, 1.5, 2.0];
        stepper
            .integrate(&mut f, 0.0, 2.0, &mut y, &samples, |t, v| seen.push((t, v[0])))
            .unwrap();
        assert!((y[0] - (rate * 2.0).exp()).norm() < 1e-11);
        assert_eq!(seen.len(), 4);
        for (t, v) in seen {
            assert!((v - (rate * t).exp()).norm() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn sampling_does_not_change_steps() {
        let mut f = |t: f64, y: &[C64], dy: &mut [C64]| {
            dy[0] = C64::new(0.0, -1.0) * (5.0 * t).cos() * y[1];
            dy[1] = C64::new(0.0, -1.0) * (5.0 * t).cos() * y[0];
        };
        let run = |samples: &[f64], f: &mut dyn FnMut(f64, &[C64], &mut [C64])| {
            let mut y = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
            let mut s = Dop853::new(2, 1e-10, 1e-12, 1_000_000);
            let mut g = |t: f64, y: &[C64], dy: &mut [C64]| f(t, y, dy);
            let st = s.integrate(&mut g, 0.0, 3.0, &mut y, samples, |_, _| {}).unwrap();
            (y, st)
        };
        let grid: Vec<f64> = (1..=500).map(|k| 3.0 * k as f64 / 500.0).collect();
        let (a, sa) = run(&[], &mut f);
        let (b, sb) = run(&grid, &mut f);
        assert_eq!(a, b);
        assert_eq!(sa.accepted, sb.accepted);
        assert_eq!(sa.rejected, sb.rejected);
    }

    #[test]
    fn underflow_is_reported() {
        // finite-time blow-up forces the step to collapse
        let mut f = |_: f64, y: &[C64], dy: &mut [C64]| dy[0] = y[0] * y[0];
        let mut y = vec![C64::new(1.0, 0.0)];
        let mut s = Dop853::new(1, 1e-10, 1e-12, 10_000_000);
        let r = s.integrate(&mut f, 0.0, 2.0, &mut y, &[], |_, _| {});
        assert!(r.is_err());
    }
}
