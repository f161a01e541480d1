use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use rydgate::dynamics::{propagate_lindblad, propagate_unitary, Diagnostics, IntegratorOptions, Observable, Sampling};
use rydgate::fidelity::{average_fidelity, reconstruct_channel, ChannelDiagnostics, ChannelOptions, ChannelSource, FidelityReport, IdealGate};
use rydgate::hamiltonian::dark_states;
use rydgate::hilbert::Level;
use rydgate::linalg::ComplexMatrix;
use rydgate::params::{derive_timings, mandatory_pass, validate_regime, DerivedTimings, Finding, GateKind, ProtocolParams};
use rydgate::pulses::Envelope;
use rydgate::scenario::{run_branch, Scenario};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{sweep_point, Metric, Mode, RunConfig};
use crate::CliError;

/// Files produced by one run, as (file name, contents), plus the text shown
/// on stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
    pub stdout: String,
    /// Mandatory regime checks failed (validate mode only).
    pub regime_failed: bool,
}

impl Artifacts {
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, contents) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, contents)?;
            written.push(path);
        }
        Ok(written)
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }
}

/// Hex SHA-256 of the resolved parameters and gate.
pub fn params_hash(gate: GateKind, p: &ProtocolParams) -> String {
    let doc = serde_json::json!({ "gate": gate, "params": p });
    format!("{:x}", Sha256::digest(doc.to_string().as_bytes()))
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn json(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s
}

pub fn execute(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    cfg.check_complete()?;
    let p = cfg.resolve_params()?;
    if cfg.strict && cfg.mode != Mode::Validate {
        let findings = validate_regime(&p, cfg.gate);
        if !mandatory_pass(&findings) {
            let failed: Vec<&str> = findings.iter().filter(|f| f.mandatory && !f.pass).map(|f| f.name.as_str()).collect();
            return Err(CliError::Regime(failed.join(", ")));
        }
    }
    match cfg.mode {
        Mode::Trajectory => run_trajectory(cfg, &p),
        Mode::Sweep => run_sweep(cfg, &p),
        Mode::Fidelity => run_fidelity(cfg, &p),
        Mode::Validate => run_validate(cfg, &p),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentEnd {
    pub label: String,
    pub t_s: f64,
    /// Population with every control in |r⟩.
    pub all_controls_rydberg: f64,
    pub target: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub gate: GateKind,
    pub initial_state: String,
    pub decay: bool,
    pub params_hash: String,
    pub params: ProtocolParams,
    /// Final target level populations summed over the controls.
    pub final_target: BTreeMap<String, f64>,
    pub final_populations: BTreeMap<String, f64>,
    pub final_dark_overlap: f64,
    pub segment_ends: Vec<SegmentEnd>,
    pub findings: Vec<Finding>,
    pub diagnostics: Diagnostics,
}

fn raman_peak_envelope(s: &Scenario) -> Option<Envelope> {
    let seg = &s.schedule.segments[s.raman_segment()];
    seg.drives
        .iter()
        .find(|d| d.transition == [Level::A, Level::E])
        .map(|d| d.envelope)
}

fn run_trajectory(cfg: &RunConfig, p: &ProtocolParams) -> Result<Artifacts, CliError> {
    let s = Scenario::new(cfg.gate, p.clone())?;
    let label = cfg
        .initial_state
        .clone()
        .unwrap_or_else(|| format!("{}A", "1".repeat(cfg.gate.n_controls())));
    let psi = s.basis_state(&label)?;
    let layout = &s.layout;
    let target = layout.target_index();
    let raman = s.raman_segment();
    let env = raman_peak_envelope(&s);

    let mut sampling = Sampling::populations(layout, cfg.points_per_segment);
    let omega_at = move |segment: usize, t: f64| if segment == raman { env.map_or(0.0, |e| e.value(t)) } else { 0.0 };
    let (q1, q2, l1, l2) = (p.clone(), p.clone(), layout.clone(), layout.clone());
    let overlap: Arc<dyn Fn(usize, f64) -> ComplexMatrix + Send + Sync> = Arc::new(move |k, t| {
        let d = dark_states(&q1, omega_at(k, t)).expect("positive coupling").combined();
        l1.embed_one(target, &d.outer(&d)).expect("target operator")
    });
    let manifold: Arc<dyn Fn(usize, f64) -> ComplexMatrix + Send + Sync> = Arc::new(move |k, t| {
        let ds = dark_states(&q2, omega_at(k, t)).expect("positive coupling");
        l2.embed_one(target, &ds.manifold_projector()).expect("target operator")
    });
    sampling.observables.push(Observable::TimeDependent {
        name: "dark_overlap".into(),
        op: overlap.clone(),
    });
    sampling.observables.push(Observable::TimeDependent {
        name: "dark_manifold".into(),
        op: manifold,
    });

    let opts = IntegratorOptions::default();
    let (pops, samples, columns, diagnostics, final_overlap) = if cfg.decay {
        let rho = psi.outer(&psi);
        let r = propagate_lindblad(&rho, &s.hamiltonian, &s.channels, &sampling, &opts)?;
        let pops: Vec<f64> = (0..s.dim()).map(|i| r.final_state[(i, i)].re).collect();
        let last = s.hamiltonian.segments.len() - 1;
        let ov = (overlap(last, 0.0).matmul(&r.final_state).expect("shape")).trace().expect("square").re;
        (pops, r.samples, r.columns, r.diagnostics, ov)
    } else {
        let r = propagate_unitary(&psi, &s.hamiltonian, &sampling, &opts)?;
        let pops: Vec<f64> = r.final_state.as_slice().iter().map(|z| z.norm_sqr()).collect();
        let last = s.hamiltonian.segments.len() - 1;
        let ov = r.final_state.inner(&overlap(last, 0.0).apply(&r.final_state).expect("shape")).re;
        (pops, r.samples, r.columns, r.diagnostics, ov)
    };

    let mut csv = String::new();
    csv.push_str("t_s,segment");
    for c in &columns {
        csv.push(',');
        csv.push_str(c);
    }
    csv.push('\n');
    for sm in &samples {
        write!(csv, "{},{}", num(sm.t), sm.segment).expect("string write");
        for v in &sm.values {
            csv.push(',');
            csv.push_str(&num(*v));
        }
        csv.push('\n');
    }

    let target_pops = |pops: &[f64]| -> BTreeMap<String, f64> {
        [Level::A, Level::B, Level::E, Level::RydT]
            .into_iter()
            .map(|l| (l.symbol().to_string(), s.target_population(pops, l)))
            .collect()
    };
    let controls = layout.control_indices();
    let all_ryd = |pops: &[f64]| -> f64 {
        (0..s.dim())
            .filter(|&i| controls.iter().all(|&c| layout.levels_of(i)[c] == Level::Ryd))
            .map(|i| pops[i])
            .sum()
    };
    let n_labels = layout.dim();
    let mut segment_ends = Vec::new();
    let starts = s.schedule.segment_starts();
    for (k, seg) in s.schedule.segments.iter().enumerate() {
        // the last sample of each segment sits at its end
        if let Some(sm) = samples.iter().rev().find(|x| x.segment == k) {
            let seg_pops = &sm.values[..n_labels];
            segment_ends.push(SegmentEnd {
                label: seg.label.clone(),
                t_s: starts[k] + seg.duration,
                all_controls_rydberg: all_ryd(seg_pops),
                target: target_pops(seg_pops),
            });
        }
    }
    let summary = TrajectorySummary {
        gate: cfg.gate,
        initial_state: label,
        decay: cfg.decay,
        params_hash: params_hash(cfg.gate, p),
        params: p.clone(),
        final_target: target_pops(&pops),
        final_populations: layout.labels().into_iter().zip(pops.iter().copied()).collect(),
        final_dark_overlap: final_overlap,
        segment_ends,
        findings: validate_regime(p, cfg.gate),
        diagnostics,
    };
    let stdout = format!(
        "trajectory {} from {}: target A {:.6}, B {:.6}\n",
        cfg.gate, summary.initial_state, summary.final_target["A"], summary.final_target["B"]
    );
    Ok(Artifacts {
        files: vec![("trajectory.csv".into(), csv), ("summary.json".into(), json(&summary))],
        stdout,
        regime_failed: false,
    })
}

fn run_sweep(cfg: &RunConfig, p: &ProtocolParams) -> Result<Artifacts, CliError> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| CliError::Config("sweep: required in sweep mode".into()))?;
    let opts = IntegratorOptions::default();
    let values = sweep.values();
    let rows = values
        .par_iter()
        .map(|&x| -> Result<(f64, f64), CliError> {
            let q = sweep_point(p, sweep.parameter, x, cfg.resonance_lock);
            let s = Scenario::new(cfg.gate, q)?;
            let o = run_branch(&s, &sweep.branch, cfg.decay, &opts)?;
            Ok((
                x,
                match sweep.metric {
                    Metric::Blocking => o.stay,
                    Metric::Transfer => o.flip,
                },
            ))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let pname = serde_json::to_value(sweep.parameter).expect("serializes");
    let mname = serde_json::to_value(sweep.metric).expect("serializes");
    let mut csv = format!("{},{}\n", pname.as_str().unwrap_or("value"), mname.as_str().unwrap_or("metric"));
    for (x, m) in &rows {
        writeln!(csv, "{},{}", num(*x), num(*m)).expect("string write");
    }
    Ok(Artifacts {
        stdout: format!("sweep {} over {} points, branch {}\n", cfg.gate, rows.len(), sweep.branch),
        files: vec![("sweep.csv".into(), csv)],
        regime_failed: false,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FidelityDocument {
    #[serde(flatten)]
    pub report: FidelityReport,
    pub include_control_interaction: bool,
    pub params_hash: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub wall_time_s: f64,
    pub diagnostics: ChannelDiagnostics,
}

pub fn ideal_for(gate: GateKind) -> IdealGate {
    match gate {
        GateKind::C3Not => IdealGate::cn_not(3),
        _ => IdealGate::toffoli(),
    }
}

fn run_fidelity(cfg: &RunConfig, p: &ProtocolParams) -> Result<Artifacts, CliError> {
    let start = Instant::now();
    let s = Scenario::new(cfg.gate, p.clone())?;
    let ideal = ideal_for(cfg.gate);
    let opts = ChannelOptions {
        decay: cfg.decay,
        source: if cfg.ideal_shortcut {
            ChannelSource::IdealShortcut
        } else {
            ChannelSource::Simulated
        },
        integrator: IntegratorOptions::default(),
    };
    let channel = reconstruct_channel(&s, &ideal, &opts)?;
    let report = average_fidelity(&channel, &ideal, cfg.phase_correct)?;
    let doc = FidelityDocument {
        report,
        include_control_interaction: cfg.include_control_interaction,
        params_hash: params_hash(cfg.gate, p),
    };
    let meta = RunMeta {
        wall_time_s: start.elapsed().as_secs_f64(),
        diagnostics: channel.diagnostics.clone(),
    };
    let r = &doc.report;
    let mut stdout = format!("fidelity {}: raw {:.6}", cfg.gate, r.f_raw);
    if let (Some(local), Some(pc)) = (r.f_local_phase_corrected, r.f_phase_corrected) {
        write!(stdout, ", local phases {local:.6}, phase corrected {pc:.6}").expect("string write");
    }
    writeln!(stdout, ", leakage {:.3e}", r.leakage).expect("string write");
    Ok(Artifacts {
        files: vec![("fidelity.json".into(), json(&doc)), ("run_meta.json".into(), json(&meta))],
        stdout,
        regime_failed: false,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub gate: GateKind,
    pub v_mhz: f64,
    pub v_cc_mhz: f64,
    pub v_over_omega_c: f64,
    pub v_cc_over_omega_c: f64,
    pub timings: DerivedTimings,
    pub findings: Vec<Finding>,
    pub mandatory_pass: bool,
}

fn run_validate(cfg: &RunConfig, p: &ProtocolParams) -> Result<Artifacts, CliError> {
    let timings = derive_timings(p, cfg.gate).map_err(|e| CliError::Config(e.to_string()))?;
    let findings = validate_regime(p, cfg.gate);
    let mhz = 2.0 * std::f64::consts::PI * 1e6;
    let report = ValidationReport {
        gate: cfg.gate,
        v_mhz: p.v / mhz,
        v_cc_mhz: p.v_cc / mhz,
        v_over_omega_c: p.v / p.omega_c,
        v_cc_over_omega_c: p.v_cc / p.omega_c,
        timings,
        mandatory_pass: mandatory_pass(&findings),
        findings,
    };
    let mut out = String::new();
    writeln!(out, "gate {}", cfg.gate).expect("string write");
    writeln!(out, "V = {:.3} MHz = {:.2} Omega_c", report.v_mhz, report.v_over_omega_c).expect("string write");
    writeln!(out, "V_cc = {:.3} MHz = {:.3} Omega_c", report.v_cc_mhz, report.v_cc_over_omega_c).expect("string write");
    writeln!(
        out,
        "T1 = {:.3} ns, T2 = {:.4} us, T3 = {:.3} ns, total = {:.4} us",
        timings.t1 * 1e9,
        timings.t2 * 1e6,
        timings.t3 * 1e9,
        timings.total * 1e6
    )
    .expect("string write");
    for f in &report.findings {
        writeln!(
            out,
            "[{}] {}{}: ratio {:.3} (threshold {})",
            if f.pass { "ok" } else { "FAIL" },
            f.name,
            if f.mandatory { " (mandatory)" } else { "" },
            f.ratio,
            f.threshold
        )
        .expect("string write");
    }
    Ok(Artifacts {
        regime_failed: !report.mandatory_pass,
        files: vec![("validate.json".into(), json(&report))],
        stdout: out,
    })
}
