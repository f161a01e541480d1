use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rydgate::dynamics::*;
use rydgate::hamiltonian::PiecewiseHamiltonian;
use rydgate::hilbert::{Level, SystemLayout};
use rydgate::linalg::{ComplexMatrix, ComplexVector};
use rydgate::params::{GateKind, ProtocolParams};
use rydgate::pulses::{Drive, Envelope, LevelShift, PulseSchedule, Segment};
use rydgate::scenario::Scenario;

/// One control and one target in dimensionless units: a control π pulse,
/// then a Raman-like segment with two coupling lasers, then the closing
/// pulse.
fn toy(decay: bool) -> (SystemLayout, PiecewiseHamiltonian, Vec<LindbladChannel>) {
    let layout = SystemLayout::with_controls(1).unwrap();
    let mut p = ProtocolParams::paper_defaults(GateKind::ToffoliLinear);
    p.omega_e = 1.0;
    p.omega_c = 2.5;
    p.omega_r = 1.0;
    p.delta_big = 10.0;
    p.v = 12.0;
    p.v_cc = 0.0;
    p.delta = 12.0;
    p.gamma_e = if decay { 0.4 } else { 0.0 };
    p.gamma_r = if decay { 0.05 } else { 0.0 };
    p.gamma_rt = if decay { 0.05 } else { 0.0 };
    let pi_pulse = Segment {
        label: "control".into(),
        duration: std::f64::consts::PI,
        drives: vec![Drive::new(0, Level::G1, Level::Ryd, Envelope::Constant { peak: 1.0 }, 0.0)],
        level_shifts: vec![],
    };
    let t2 = 4.0;
    let raman = Envelope::RaisedCosine { peak: 1.0, duration: t2 };
    let coupling = Envelope::Constant { peak: 2.5 };
    let mid = Segment {
        label: "raman".into(),
        duration: t2,
        drives: vec![
            Drive::new(1, Level::A, Level::E, raman, 0.0),
            Drive::new(1, Level::B, Level::E, raman, 0.0),
            Drive::new(1, Level::E, Level::RydT, coupling, 0.0),
            Drive::new(1, Level::E, Level::RydT, coupling, p.delta),
        ],
        level_shifts: vec![LevelShift {
            atom: 1,
            level: Level::E,
            energy: -p.delta_big,
        }],
    };
    let sched = PulseSchedule {
        segments: vec![pi_pulse.clone(), mid, pi_pulse],
        warnings: vec![],
    };
    let h = PiecewiseHamiltonian::from_schedule(&layout, &sched, &p).unwrap();
    let channels = build_lindblad_channels(&layout, &p);
    (layout, h, channels)
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

fn random_density(rng: &mut ChaCha8Rng, n: usize) -> ComplexMatrix {
    let a = random_matrix(rng, n);
    let rho = a.matmul(&a.dagger()).unwrap();
    let tr = rho.trace().unwrap().re;
    rho.scale_real(1.0 / tr)
}

#[test]
fn lindblad_propagation_is_linear() {
    let (_, h, channels) = toy(true);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = IntegratorOptions::default();
    let n = h.dim();
    for _ in 0..3 {
        let x = random_matrix(&mut rng, n);
        let y = random_matrix(&mut rng, n);
        let a = C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let b = C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let mut z = x.scale(a);
        z.axpy(b, &y).unwrap();
        let run = |m: &ComplexMatrix| propagate_lindblad(m, &h, &channels, &Sampling::none(), &opts).unwrap().final_state;
        let (px, py, pz) = (run(&x), run(&y), run(&z));
        let mut combo = px.scale(a);
        combo.axpy(b, &py).unwrap();
        assert!(pz.max_abs_diff(&combo) < 1e-8, "{}", pz.max_abs_diff(&combo));
    }
}

#[test]
fn lindblad_preserves_trace_hermiticity_and_positivity() {
    let (layout, h, channels) = toy(true);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let opts = IntegratorOptions::default();
    for _ in 0..3 {
        let rho = random_density(&mut rng, layout.dim());
        let r = propagate_lindblad(&rho, &h, &channels, &Sampling::none(), &opts).unwrap();
        let out = r.final_state;
        assert!((out.trace().unwrap() - C64::new(1.0, 0.0)).norm() < 1e-8);
        assert!(r.diagnostics.max_norm_drift < 1e-8);
        assert!(out.hermiticity_error() < 1e-9);
        let eig = out.hermitian_eigenvalues().unwrap();
        assert!(eig[0] >= -1e-9, "{eig:?}");
        let purity = out.matmul(&out).unwrap().trace().unwrap().re;
        assert!(purity <= 1.0 + 1e-9);
    }
}

#[test]
fn adaptive_integrator_matches_fixed_step_oracle() {
    let (layout, h, _) = toy(false);
    let opts = IntegratorOptions {
        frame: Frame::Lab,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let psi = ComplexVector::from_vec((0..layout.dim()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
        .normalized();
    let adaptive = propagate_unitary(&psi, &h, &Sampling::none(), &opts).unwrap().final_state;
    let mut oracle = psi.clone();
    for seg in &h.segments {
        let sh = &seg.hamiltonian;
        let fastest = sh.max_frequency().max(sh.at(0.5 * seg.duration).spectral_norm());
        let dt = 1.0 / (200.0 * fastest);
        let steps = (seg.duration / dt).ceil() as usize;
        let u = midpoint_propagator(sh, seg.duration, steps).unwrap();
        oracle = u.apply(&oracle).unwrap();
    }
    let fid = adaptive.inner(&oracle).norm_sqr();
    assert!(1.0 - fid < 1e-6, "state fidelity {fid}");
}

#[test]
fn frames_agree_on_the_full_toffoli() {
    let gate = GateKind::ToffoliLinear;
    let s = Scenario::new(gate, ProtocolParams::paper_defaults(gate).without_decay()).unwrap();
    for label in ["11A", "10A", "01B"] {
        let psi = s.basis_state(label).unwrap();
        let run = |frame| {
            let opts = IntegratorOptions { frame, ..Default::default() };
            let r = propagate_unitary(&psi, &s.hamiltonian, &Sampling::none(), &opts).unwrap();
            assert_eq!(r.diagnostics.frame, frame);
            r.final_state
        };
        let a = run(Frame::Lab);
        let b = run(Frame::Interaction);
        let diff = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-7, "{label}: {diff}");
    }
}

#[test]
fn sampling_does_not_change_the_result() {
    let (layout, h, channels) = toy(true);
    let rho = ComplexVector::basis(layout.dim(), layout.parse_label("1A").unwrap());
    let rho = rho.outer(&rho);
    let opts = IntegratorOptions::default();
    let plain = propagate_lindblad(&rho, &h, &channels, &Sampling::none(), &opts).unwrap();
    let sampled = propagate_lindblad(&rho, &h, &channels, &Sampling::populations(&layout, 500), &opts).unwrap();
    assert_eq!(plain.final_state, sampled.final_state);
    assert_eq!(plain.diagnostics.accepted_steps, sampled.diagnostics.accepted_steps);
    assert_eq!(sampled.samples.len(), 3 * 500);
    let times: Vec<f64> = sampled.samples.iter().map(|s| s.t).collect();
    assert!(times.windows(2).all(|w| w[1] >= w[0]));
}
