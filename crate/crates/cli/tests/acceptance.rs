//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails. Criterion 6 (C3NOT, 136 Lindblad runs of a
//! 108-level system) takes most of an hour on one core; set
//! RYDGATE_SKIP_SLOW=1 to skip it.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64 as C64;
use rydgate::dynamics::*;
use rydgate::fidelity::*;
use rydgate::hamiltonian::*;
use rydgate::hilbert::{Level, SystemLayout};
use rydgate::linalg::{ComplexMatrix, ComplexVector};
use rydgate::params::*;
use rydgate::pulses::{schedule_for, Drive, Envelope, LevelShift, PulseSchedule, Segment};
use rydgate::scenario::*;
use rydgate_cli::config::sweep_point;
use rydgate_cli::SweepParameter;

// tolerances and thresholds
const BLOCKING_MIN: f64 = 0.99;
const BLOCKING_DELTAS: [f64; 3] = [40.0, 61.5, 100.0];
const MONOTONE_NOISE: f64 = 1e-3;
const SWEEP_POINTS: usize = 20;
const TRANSFER_HIGH: f64 = 0.95;
const TRANSFER_LOW: f64 = 0.1;
const TOFFOLI_BAND: (f64, f64) = (0.93, 0.99);
const TOFFOLI_TARGET: f64 = 0.96;
const C3NOT_TARGET: f64 = 0.94;
const FIDELITY_WINDOW: f64 = 0.02;
const T1_NS: f64 = 11.3;
const T1_TOL_NS: f64 = 0.1;
const T2_US: f64 = 0.606;
const T2_TOL_NS: f64 = 1.0;
const V_RATIO: (f64, f64) = (61.0, 1.0);
const VCC_RATIO: (f64, f64) = (0.96, 0.02);
const HERMITICITY_TOL: f64 = 1e-12;
const BRANCH_TOL: f64 = 1e-10;
const MAGNUS_COEFF: f64 = 30.0;
const MAGNUS_SLOPE: f64 = 1.8;
const LINDBLAD_TOL: f64 = 1e-8;
const ORACLE_TOL: f64 = 1e-6;
const IDEAL_TOL: f64 = 1e-10;
const RAB_HIGH: f64 = 0.97;
const RAB_LOW: f64 = 0.5;

type Outcome = (bool, String);
type Check = std::result::Result<String, String>;

fn opts() -> IntegratorOptions {
    IntegratorOptions::default()
}

/// Default parameters; the linear layout runs without the control-control
/// interaction, which otherwise blockades the transfer branch.
fn baseline(gate: GateKind) -> ProtocolParams {
    let mut p = ProtocolParams::paper_defaults(gate);
    if gate == GateKind::ToffoliLinear {
        p.v_cc = 0.0;
        p = p.lock_resonances();
    }
    p
}

fn locked_at(p: &ProtocolParams, delta_over_omega_c: f64) -> ProtocolParams {
    sweep_point(p, SweepParameter::Delta, delta_over_omega_c, true)
}

fn criterion_1() -> Outcome {
    let gate = GateKind::ToffoliLinear;
    let base = baseline(gate).without_decay();
    let mut ok = true;
    let mut detail = Vec::new();
    for d in BLOCKING_DELTAS {
        let s = Scenario::new(gate, locked_at(&base, d)).unwrap();
        for pattern in ["00", "10"] {
            let b = blocking_probability(&s, pattern, false, &opts()).unwrap();
            ok &= b > BLOCKING_MIN;
            detail.push(format!("{pattern}@{d}:{b:.4}"));
        }
    }
    (ok, format!("blocking > {BLOCKING_MIN} for delta/Omega_c in {BLOCKING_DELTAS:?}: {}", detail.join(" ")))
}

fn criterion_2() -> Outcome {
    let gate = GateKind::ToffoliLinear;
    let base = baseline(gate).without_decay();
    let xs: Vec<f64> = (0..SWEEP_POINTS).map(|k| 2.0 + 38.0 * k as f64 / (SWEEP_POINTS - 1) as f64).collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for pattern in ["00", "10"] {
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let s = Scenario::new(gate, locked_at(&base, x)).unwrap();
                blocking_probability(&s, pattern, false, &opts()).unwrap()
            })
            .collect();
        let worst_drop = ys.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
        let last = *ys.last().unwrap();
        let pass = worst_drop <= MONOTONE_NOISE && last > BLOCKING_MIN;
        ok &= pass;
        detail.push(format!("{pattern}: largest drop {worst_drop:.4}, value at 40 {last:.4}"));
    }
    (ok, format!("blocking nondecreasing in delta over [2, 40] Omega_c, saturating > {BLOCKING_MIN}: {}", detail.join("; ")))
}

fn criterion_3() -> Outcome {
    let gate = GateKind::ToffoliLinear;
    let base = baseline(gate).without_decay();
    let transfer = |units: f64| {
        let s = Scenario::new(gate, sweep_point(&base, SweepParameter::V, units, true)).unwrap();
        transfer_probability(&s, false, &opts()).unwrap()
    };
    let at_zero = transfer(0.0);
    let high: Vec<(f64, f64)> = [20.0, 40.0, 100.0, 400.0, base.v / base.stark_unit()]
        .into_iter()
        .map(|u| (u, transfer(u)))
        .collect();
    // curve shape on a uniform grid: rises, then saturates
    let grid: Vec<f64> = (0..=20).map(|k| 2.0 * k as f64).map(transfer).collect();
    let worst_drop = grid.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    let ok = at_zero < TRANSFER_LOW && high.iter().all(|(_, t)| *t > TRANSFER_HIGH) && worst_drop <= MONOTONE_NOISE;
    let hs: Vec<String> = high.iter().map(|(u, t)| format!("{u:.0}:{t:.4}")).collect();
    (
        ok,
        format!(
            "transfer at V=0 {at_zero:.4} (< {TRANSFER_LOW}); V/(Omega_c^2/4Delta) -> transfer {} (> {TRANSFER_HIGH}); largest drop on [0, 40] {worst_drop:.2e}",
            hs.join(" ")
        ),
    )
}

fn fidelity(gate: GateKind, p: ProtocolParams, decay: bool) -> FidelityReport {
    let ideal = rydgate_cli::modes::ideal_for(gate);
    let s = Scenario::new(gate, p).unwrap();
    let ch = reconstruct_channel(
        &s,
        &ideal,
        &ChannelOptions {
            decay,
            ..Default::default()
        },
    )
    .unwrap();
    average_fidelity(&ch, &ideal, true).unwrap()
}

fn in_toffoli_band(f: f64) -> bool {
    f >= TOFFOLI_BAND.0 && f <= TOFFOLI_BAND.1 && (f - TOFFOLI_TARGET).abs() <= FIDELITY_WINDOW
}

fn criterion_4() -> Outcome {
    let gate = GateKind::ToffoliLinear;
    let r = fidelity(gate, baseline(gate), true);
    let f = r.f_phase_corrected.unwrap();
    let with_vcc = fidelity(gate, ProtocolParams::paper_defaults(gate), true);
    (
        in_toffoli_band(f),
        format!(
            "linear Toffoli, decay on: phase-corrected {f:.4} (band {TOFFOLI_BAND:?}, {TOFFOLI_TARGET}±{FIDELITY_WINDOW}); raw {:.4}, single-qubit phases only {:.4}, leakage {:.4}; with V_cc = 0.96 Omega_c: {:.4}",
            r.f_raw,
            r.f_local_phase_corrected.unwrap(),
            r.leakage,
            with_vcc.f_phase_corrected.unwrap()
        ),
    )
}

fn criterion_5() -> Outcome {
    let gate = GateKind::ToffoliPlanar;
    let r = fidelity(gate, baseline(gate), true);
    let f = r.f_phase_corrected.unwrap();
    (
        in_toffoli_band(f),
        format!(
            "planar Toffoli, decay on: phase-corrected {f:.4} (band {TOFFOLI_BAND:?}, {TOFFOLI_TARGET}±{FIDELITY_WINDOW}); raw {:.4}, single-qubit phases only {:.4}, leakage {:.4}",
            r.f_raw,
            r.f_local_phase_corrected.unwrap(),
            r.leakage
        ),
    )
}

fn criterion_6() -> Outcome {
    let gate = GateKind::C3Not;
    let r = fidelity(gate, baseline(gate), true);
    let f = r.f_phase_corrected.unwrap();
    (
        (f - C3NOT_TARGET).abs() <= FIDELITY_WINDOW,
        format!(
            "C3NOT, decay on: phase-corrected {f:.4} ({C3NOT_TARGET}±{FIDELITY_WINDOW}); raw {:.4}, single-qubit phases only {:.4}, leakage {:.4}",
            r.f_raw,
            r.f_local_phase_corrected.unwrap(),
            r.leakage
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for gate in [GateKind::ToffoliLinear, GateKind::ToffoliPlanar, GateKind::C3Not] {
        let t = derive_timings(&ProtocolParams::paper_defaults(gate), gate).unwrap();
        ok &= (t.t1 * 1e9 - T1_NS).abs() <= T1_TOL_NS
            && (t.t3 * 1e9 - T1_NS).abs() <= T1_TOL_NS
            && (t.t2 * 1e9 - T2_US * 1e3).abs() <= T2_TOL_NS
            && t.total < 1e-6;
        detail.push(format!(
            "{gate}: T1 {:.3} ns, T2 {:.4} us, T3 {:.3} ns, total {:.4} us",
            t.t1 * 1e9,
            t.t2 * 1e6,
            t.t3 * 1e9,
            t.total * 1e6
        ));
    }
    (ok, detail.join("; "))
}

fn criterion_8() -> Outcome {
    let p = ProtocolParams::paper_defaults(GateKind::ToffoliLinear);
    let c6 = c6_au(94);
    let v = interaction_from_distance(c6, 4.0).unwrap() / p.omega_c;
    let vcc = interaction_from_distance(c6, 8.0).unwrap() / p.omega_c;
    (
        (v - V_RATIO.0).abs() <= V_RATIO.1 && (vcc - VCC_RATIO.0).abs() <= VCC_RATIO.1,
        format!("V/Omega_c at 4 um = {v:.3}, V_cc/Omega_c at 8 um = {vcc:.4}"),
    )
}

fn spread(k: usize) -> f64 {
    // golden-ratio sequence, deterministic and well spread on [0, 1)
    (k as f64 * 0.618_033_988_749_894_9).fract()
}

fn check_hermiticity() -> Check {
    let mut worst: f64 = 0.0;
    for gate in [GateKind::ToffoliLinear, GateKind::ToffoliPlanar, GateKind::C3Not] {
        let s = Scenario::new(gate, ProtocolParams::paper_defaults(gate)).unwrap();
        for seg in &s.hamiltonian.segments {
            for k in 0..100 {
                worst = worst.max(seg.hamiltonian.at(spread(k) * seg.duration).hermiticity_error());
            }
        }
    }
    if worst < HERMITICITY_TOL {
        Ok(format!("hermiticity {worst:.1e}"))
    } else {
        Err(format!("hermiticity error {worst:.3e}"))
    }
}

fn check_branches() -> Check {
    let mut worst: f64 = 0.0;
    for gate in [GateKind::ToffoliLinear, GateKind::ToffoliPlanar, GateKind::C3Not] {
        let p = ProtocolParams::paper_defaults(gate);
        let n = gate.n_controls();
        let layout = SystemLayout::with_controls(n).unwrap();
        let sched = schedule_for(gate, &p).unwrap();
        let hs = assemble_full(&layout, &sched, &p).unwrap();
        let seg = sched.segments.iter().position(|s| s.label == "raman").unwrap();
        let r = Level::RydT.local_index();
        for mask in 0..1usize << n {
            let pattern: String = (0..n).map(|k| if (mask >> (n - 1 - k)) & 1 == 1 { 'r' } else { '0' }).collect();
            let controls: Vec<Level> = pattern.chars().map(|c| if c == 'r' { Level::Ryd } else { Level::G0 }).collect();
            let k = excited_controls(gate, &pattern).unwrap();
            let m = k.min(gate.coupling_lasers() - 1) as f64;
            let pairs = (k * k.saturating_sub(1) / 2) as f64;
            let reduced = reduced_branch(gate, &pattern, &p, BranchFrame::Rotating).unwrap();
            for j in 0..10 {
                let t = spread(j + 1) * sched.segments[seg].duration;
                let mut block = target_block(&layout, &hs[seg].at(t), &controls).unwrap();
                block = &block - &ComplexMatrix::identity(4).scale_real(pairs * p.v_cc);
                let rot = C64::from_polar(1.0, m * p.v * t);
                for i in 0..4 {
                    if i != r {
                        block[(r, i)] *= rot;
                        block[(i, r)] *= rot.conj();
                    }
                }
                block[(r, r)] -= C64::new(m * p.v, 0.0);
                let red = reduced.at(t);
                worst = worst.max(block.max_abs_diff(&red) / red.max_abs().max(block.max_abs()));
            }
        }
    }
    if worst <= BRANCH_TOL {
        Ok(format!("branch consistency {worst:.1e}"))
    } else {
        Err(format!("branch consistency {worst:.3e}"))
    }
}

fn check_dark_states() -> Check {
    let p = ProtocolParams::paper_defaults(GateKind::ToffoliLinear);
    let mut worst: f64 = 0.0;
    for k in 0..=10 {
        let we = p.omega_e * k as f64 / 10.0;
        let ds = dark_states(&p, we).map_err(|e| e.to_string())?;
        let h = dark_drive_part(&p, we);
        worst = worst
            .max(h.apply(&ds.d1).unwrap().norm() / p.omega_c)
            .max(h.apply(&ds.d2).unwrap().norm() / p.omega_c)
            .max(ds.d1.inner(&ds.d2).norm());
    }
    if worst < 1e-12 {
        Ok(format!("dark states {worst:.1e}"))
    } else {
        Err(format!("dark-state identity defect {worst:.3e}"))
    }
}

fn magnus_error(p: &ProtocolParams, ratio: f64) -> f64 {
    let window = 6.0 / p.omega_c;
    let h = reduced_target(Envelope::Constant { peak: p.omega_e }, p, &[0.0, ratio * p.omega_c], 0, BranchFrame::Lab).unwrap();
    let lab = IntegratorOptions {
        frame: Frame::Lab,
        ..opts()
    };
    let exact = unitary_propagator(&PiecewiseHamiltonian::single(window, h.clone()), &lab).unwrap();
    let i = C64::new(0.0, 1.0);
    let heff = magnus_effective(&h, MagnusWindow::Asymptotic, 0.0).unwrap();
    let approx = micromotion_kick(&h, window, 0.0)
        .scale(-i)
        .expm()
        .unwrap()
        .matmul(&heff.scale(-i * window).expm().unwrap())
        .unwrap()
        .matmul(&micromotion_kick(&h, 0.0, 0.0).scale(i).expm().unwrap())
        .unwrap();
    exact.max_abs_diff(&approx)
}

fn check_magnus() -> Check {
    let p = ProtocolParams::paper_defaults(GateKind::ToffoliLinear);
    let (r1, r2) = (40.0, 160.0);
    let (e1, e2) = (magnus_error(&p, r1), magnus_error(&p, r2));
    let slope = (e1 / e2).ln() / (r2 / r1).ln();
    if e1 <= MAGNUS_COEFF / (r1 * r1) && e2 <= MAGNUS_COEFF / (r2 * r2) && slope >= MAGNUS_SLOPE {
        Ok(format!("Magnus error {e1:.1e}@40 {e2:.1e}@160, order {slope:.2}"))
    } else {
        Err(format!("Magnus error {e1:.3e}@40 {e2:.3e}@160, order {slope:.2}"))
    }
}

fn check_lindblad() -> Check {
    let gate = GateKind::ToffoliLinear;
    let s = Scenario::new(gate, ProtocolParams::paper_defaults(gate)).unwrap();
    let idx = |l: &str| s.layout.parse_label(l).unwrap();
    let n = s.dim();
    let x = ComplexMatrix::unit(n, idx("00A"), idx("01B"));
    let y = ComplexMatrix::unit(n, idx("10A"), idx("00B"));
    let (a, b) = (C64::new(0.7, -0.2), C64::new(-1.3, 0.4));
    let mut z = x.scale(a);
    z.axpy(b, &y).unwrap();
    let run = |m: &ComplexMatrix| propagate_lindblad(m, &s.hamiltonian, &s.channels, &Sampling::none(), &opts()).unwrap().final_state;
    let mut combo = run(&x).scale(a);
    combo.axpy(b, &run(&y)).unwrap();
    let lin = run(&z).max_abs_diff(&combo);
    let psi = s.basis_state("10A").unwrap();
    let rho = run(&psi.outer(&psi));
    let trace = (rho.trace().unwrap() - C64::new(1.0, 0.0)).norm();
    if lin <= LINDBLAD_TOL && trace <= LINDBLAD_TOL {
        Ok(format!("Lindblad linearity {lin:.1e}, trace {trace:.1e}"))
    } else {
        Err(format!("Lindblad linearity {lin:.3e}, trace drift {trace:.3e}"))
    }
}

fn check_oracle() -> Check {
    // one control and the target, dimensionless rates
    let layout = SystemLayout::with_controls(1).unwrap();
    let mut p = ProtocolParams::paper_defaults(GateKind::ToffoliLinear).without_decay();
    p.omega_e = 1.0;
    p.omega_c = 2.5;
    p.omega_r = 1.0;
    p.delta_big = 10.0;
    p.v = 12.0;
    p.v_cc = 0.0;
    p.delta = 12.0;
    let pi_pulse = Segment {
        label: "control".into(),
        duration: PI,
        drives: vec![Drive::new(0, Level::G1, Level::Ryd, Envelope::Constant { peak: 1.0 }, 0.0)],
        level_shifts: vec![],
    };
    let raman = Envelope::RaisedCosine { peak: 1.0, duration: 4.0 };
    let coupling = Envelope::Constant { peak: 2.5 };
    let mid = Segment {
        label: "raman".into(),
        duration: 4.0,
        drives: vec![
            Drive::new(1, Level::A, Level::E, raman, 0.0),
            Drive::new(1, Level::B, Level::E, raman, 0.0),
            Drive::new(1, Level::E, Level::RydT, coupling, 0.0),
            Drive::new(1, Level::E, Level::RydT, coupling, 12.0),
        ],
        level_shifts: vec![LevelShift {
            atom: 1,
            level: Level::E,
            energy: -10.0,
        }],
    };
    let sched = PulseSchedule {
        segments: vec![pi_pulse.clone(), mid, pi_pulse],
        warnings: vec![],
    };
    let h = PiecewiseHamiltonian::from_schedule(&layout, &sched, &p).map_err(|e| e.to_string())?;
    let psi = ComplexVector::from_vec((0..layout.dim()).map(|k| C64::new(spread(k + 1) - 0.5, spread(k + 7) - 0.5)).collect()).normalized();
    let lab = IntegratorOptions {
        frame: Frame::Lab,
        ..opts()
    };
    let adaptive = propagate_unitary(&psi, &h, &Sampling::none(), &lab).unwrap().final_state;
    let mut oracle = psi;
    for seg in &h.segments {
        let sh = &seg.hamiltonian;
        let fastest = sh.max_frequency().max(sh.at(0.5 * seg.duration).spectral_norm());
        let steps = (seg.duration * 200.0 * fastest).ceil() as usize;
        oracle = midpoint_propagator(sh, seg.duration, steps).unwrap().apply(&oracle).unwrap();
    }
    let infidelity = 1.0 - adaptive.inner(&oracle).norm_sqr();
    if infidelity < ORACLE_TOL {
        Ok(format!("oracle infidelity {infidelity:.1e}"))
    } else {
        Err(format!("oracle infidelity {infidelity:.3e}"))
    }
}

fn check_fidelity_identities() -> Check {
    let ideal = IdealGate::toffoli();
    let ch = ProcessChannel::from_kraus_single("ideal", 3, &ideal.unitary);
    let one = average_fidelity(&ch, &ideal, false).unwrap().f_raw;
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
    let depol = ProcessChannel::from_unit_images("depolarizing", 3, false, units, ChannelDiagnostics::default());
    let eighth = average_fidelity(&depol, &ideal, false).unwrap().f_raw;
    if (one - 1.0).abs() < IDEAL_TOL && (eighth - 0.125).abs() < IDEAL_TOL {
        Ok(format!("F(ideal) {one:.12}, F(depolarizing) {eighth:.12}"))
    } else {
        Err(format!("F(ideal) {one}, F(depolarizing) {eighth}"))
    }
}

fn criterion_9() -> Outcome {
    let checks: [fn() -> Check; 7] = [
        check_hermiticity,
        check_branches,
        check_dark_states,
        check_magnus,
        check_lindblad,
        check_oracle,
        check_fidelity_identities,
    ];
    let results: Vec<Check> = checks.iter().map(|c| c()).collect();
    let ok = results.iter().all(|r| r.is_ok());
    let detail: Vec<String> = results
        .into_iter()
        .map(|r| match r {
            Ok(s) => s,
            Err(s) => format!("FAILED {s}"),
        })
        .collect();
    (ok, detail.join("; "))
}

fn criterion_10() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for gate in [GateKind::ToffoliPlanar, GateKind::C3Not] {
        let p = ProtocolParams::paper_defaults(gate).without_decay();
        let on = rab_ladder_population(&Scenario::new(gate, p.clone()).unwrap(), false, &opts()).unwrap();
        let mut off_p = p;
        off_p.delta_c = 0.0;
        off_p.delta_c_prime = 0.0;
        let off = rab_ladder_population(&Scenario::new(gate, off_p).unwrap(), false, &opts()).unwrap();
        ok &= on > RAB_HIGH && off < RAB_LOW;
        detail.push(format!("{gate}: all-Rydberg {on:.4} with the antiblockade detunings, {off:.4} without"));
    }
    (ok, detail.join("; "))
}

fn main() -> ExitCode {
    let skip_slow = std::env::var("RYDGATE_SKIP_SLOW").is_ok_and(|v| !v.is_empty() && v != "0");
    let criteria: [(usize, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut failed = 0;
    for (n, run) in criteria {
        if n == 6 && skip_slow {
            println!("criterion {n}: SKIPPED (RYDGATE_SKIP_SLOW set)");
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = run();
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {n}: {} - {detail} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of 10 criteria failed", failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
