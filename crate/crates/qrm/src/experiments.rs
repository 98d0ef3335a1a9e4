//! One runner per subcommand. Each returns typed results plus a [`Bundle`]
//! of tables, summary, matrices and plots for the writer.

use qrm_core::dynamics::{convergence_check, NoiseParams};
use qrm_core::fock::{self, Axis, SpaceSpec, Subsystem};
use qrm_core::model::{build_hs, critical_coupling, dressed_resonance, ground_state, QrmParams};
use qrm_core::observables::{characteristic_function, wigner_from_chi, ChiGrid, ChiGridSpec, LogBase, WignerGrid, WignerSpec};
use qrm_core::protocols::{
    draw_shots, prepare_ground_adiabatic, qubit_entropy, spectrum_point, validate_rwa, validate_rwa_required,
    PrepResult, RwaReport, ScanPeak, ScanResult, EnsembleStats, PEAK_PROMINENCE,
};
use qrm_core::pulse::{self, check_validity, compile_probe, compile_tones, EffectiveCoefficients};
use serde_json::{json, Value};

use crate::config::{ConvergenceTarget, Experiment, PathConfig, RunConfig, TWO_PI};
use crate::error::CliError;
use crate::formats::{tone_json, tone_table, MatrixFile, Table};
use crate::parallel::Workers;
use crate::plot::{Heatmap, LinePlot, Plot, Series};

/// Everything a run emits.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub experiment: Experiment,
    pub tables: Vec<Table>,
    pub summary: Value,
    pub matrices: Vec<(String, MatrixFile)>,
    pub texts: Vec<(String, String)>,
    pub plots: Vec<(String, Plot)>,
    /// Set when the run completed but its own check failed.
    pub failure: Option<String>,
}

impl Bundle {
    fn new(experiment: Experiment, summary: Value) -> Self {
        Bundle {
            experiment,
            tables: Vec::new(),
            summary,
            matrices: Vec::new(),
            texts: Vec::new(),
            plots: Vec::new(),
            failure: None,
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

pub fn run(cfg: &RunConfig, exp: Experiment, workers: &Workers) -> Result<Bundle, CliError> {
    cfg.validate(exp)?;
    match exp {
        Experiment::Spectrum => Ok(spectrum_bundle(cfg, &spectrum(cfg, workers)?)),
        Experiment::Groundstate => Ok(groundstate_bundle(cfg, &groundstate(cfg, workers)?)),
        Experiment::Adiabatic => Ok(adiabatic_bundle(cfg, &adiabatic(cfg, workers)?)),
        Experiment::EntropyScan => Ok(entropy_bundle(cfg, &entropy_scan(cfg, workers)?)),
        Experiment::Wigner => {
            let (chi, w) = wigner(cfg)?;
            Ok(wigner_bundle(cfg, &chi, &w))
        }
        Experiment::Compile => compile(cfg),
        Experiment::ValidateRwa => Ok(rwa_bundle(cfg, &rwa(cfg)?)),
        Experiment::Convergence => convergence(cfg, workers),
    }
}

fn space_for(cfg: &RunConfig, exp: Experiment) -> Result<SpaceSpec, CliError> {
    Ok(SpaceSpec::new(cfg.cutoff_for(exp))?)
}

fn params_json(p: &QrmParams) -> Value {
    json!({
        "omega_sigma_hz": p.omega_sigma / TWO_PI,
        "omega_a_hz": p.omega_a / TWO_PI,
        "lambda_hz": p.lambda / TWO_PI,
        "theta_rad": p.theta,
    })
}

fn noise_json(n: &NoiseParams) -> Value {
    let finite = |v: f64| if v.is_finite() { json!(v) } else { json!("inf") };
    json!({ "tau1_s": finite(n.tau1), "tau2_s": finite(n.tau2), "gamma_heat_per_s": n.gamma_heat, "nbar_init": n.nbar_init })
}

// ---------------------------------------------------------------- spectrum

pub fn spectrum(cfg: &RunConfig, workers: &Workers) -> Result<ScanResult, CliError> {
    let p = cfg.model.expect("validated").params();
    let omega_rabi = TWO_PI * cfg.drive.expect("validated").omega_rabi;
    let plan = cfg.spectrum.as_ref().expect("validated").plan()?;
    let mut scan = spectrum_with(&p, omega_rabi, &plan, &cfg.noise_params(), space_for(cfg, Experiment::Spectrum)?, workers)?;
    scan.seed = Some(cfg.seed);
    Ok(scan)
}

pub fn spectrum_with(
    p: &QrmParams,
    omega_rabi: f64,
    plan: &[(f64, f64)],
    noise: &NoiseParams,
    space: SpaceSpec,
    workers: &Workers,
) -> Result<ScanResult, CliError> {
    p.validate()?;
    let points = workers.try_map(plan, |&(delta, t)| spectrum_point(p, omega_rabi, delta, t, noise, space))?;
    Ok(ScanResult { params: *p, omega_rabi, noise: *noise, cutoff: space.fock_cutoff(), seed: None, points })
}

/// Dressed resonances `√(j² − (Ω/ω_a)²)` for `j = 1..=3` that exist.
pub fn resonances(omega_rabi_over_omega_a: f64) -> Vec<(u32, f64)> {
    (1..=3).filter_map(|j| dressed_resonance(j, 1.0, omega_rabi_over_omega_a).ok().map(|r| (j, r))).collect()
}

/// Peaks per probe-duration segment (one segment when the scan is uniform).
pub fn scan_peaks(cfg: &RunConfig, scan: &ScanResult) -> Vec<(f64, ScanPeak)> {
    let spec = cfg.spectrum.as_ref();
    match spec.filter(|s| !s.segments.is_empty()) {
        Some(s) => s
            .segments
            .iter()
            .flat_map(|seg| scan.peaks_in(seg.lo, seg.hi, PEAK_PROMINENCE).into_iter().map(move |pk| (seg.t_probe, pk)))
            .collect(),
        None => {
            let t = scan.points.first().map_or(0.0, |p| p.t_probe);
            scan.peaks(PEAK_PROMINENCE).into_iter().map(|pk| (t, pk)).collect()
        }
    }
}

const DIST_COLUMNS: usize = 10;

pub fn spectrum_bundle(cfg: &RunConfig, scan: &ScanResult) -> Bundle {
    let mut columns = vec![
        "delta_over_omega_a [1]".to_string(),
        "omega_l [Hz]".into(),
        "t_probe [s]".into(),
        "mean_phonon [quanta]".into(),
        "excited_population [1]".into(),
    ];
    columns.extend((0..DIST_COLUMNS).map(|n| format!("p{n} [1]")));
    let mut table = Table::with_columns("spectrum", columns);
    for pt in &scan.points {
        let mut row = vec![pt.delta, pt.omega_l / TWO_PI, pt.t_probe, pt.mean_phonon, pt.excited];
        row.extend((0..DIST_COLUMNS).map(|n| pt.distribution.get(n).copied().unwrap_or(0.0)));
        table.push(row);
    }
    let ratio = scan.omega_rabi / scan.params.omega_a;
    let res = resonances(ratio);
    let peaks = scan_peaks(cfg, scan);
    let summary = json!({
        "params": params_json(&scan.params),
        "omega_rabi_hz": scan.omega_rabi / TWO_PI,
        "noise": noise_json(&scan.noise),
        "cutoff": scan.cutoff,
        "seed": scan.seed,
        "resonances": res.iter().map(|(j, r)| json!({ "j": j, "delta_over_omega_a": r })).collect::<Vec<_>>(),
        "peaks": peaks.iter().map(|(t, pk)| json!({
            "delta_over_omega_a": pk.x, "smoothed_mean_phonon": pk.value, "prominence": pk.prominence, "t_probe_s": t,
        })).collect::<Vec<_>>(),
        "clipped_distributions": scan.points.iter().filter(|p| p.warning.is_some()).count(),
    });
    let mut bundle = Bundle::new(Experiment::Spectrum, summary);
    let mut series: Vec<Series> = Vec::new();
    for pt in &scan.points {
        let label = format!("t_probe = {} s", pt.t_probe);
        match series.last_mut() {
            Some(s) if s.label == label => {
                s.xs.push(pt.delta);
                s.ys.push(pt.mean_phonon);
            }
            _ => series.push(Series { label, xs: vec![pt.delta], ys: vec![pt.mean_phonon] }),
        }
    }
    bundle.plots.push((
        "spectrum".into(),
        Plot::Line(LinePlot {
            x_label: "Delta_Lsigma / omega_a".into(),
            y_label: "<a+a>".into(),
            series,
            markers: res.iter().map(|r| r.1).collect(),
        }),
    ));
    bundle.tables.push(table);
    bundle
}

// ------------------------------------------------------------- groundstate

/// Ground-state observables in units of `ω_a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundPoint {
    pub theta: f64,
    pub lambda: f64,
    pub energy: f64,
    pub gap: f64,
    pub mean_phonon: f64,
    pub sigma_z: f64,
    pub parity: f64,
    pub entropy: f64,
    pub degeneracy: usize,
}

pub fn groundstate_point(omega_sigma: f64, lambda: f64, theta: f64, space: SpaceSpec) -> Result<GroundPoint, CliError> {
    let p = QrmParams { omega_sigma, omega_a: 1.0, lambda, theta };
    let gs = ground_state(&build_hs(&p, space)?)?;
    let number = fock::on_boson(&fock::number(space), space)?;
    let sz = fock::on_qubit(&fock::pauli(Axis::Z), space)?;
    Ok(GroundPoint {
        theta,
        lambda,
        energy: gs.energy,
        gap: gs.gap,
        mean_phonon: gs.state.expectation(&number).re,
        sigma_z: gs.state.expectation(&sz).re,
        parity: gs.parity,
        entropy: qubit_entropy(&gs.state, space, LogBase::Natural)?,
        degeneracy: gs.degeneracy,
    })
}

pub fn groundstate(cfg: &RunConfig, workers: &Workers) -> Result<Vec<GroundPoint>, CliError> {
    let g = cfg.groundstate.as_ref().expect("validated");
    let space = space_for(cfg, Experiment::Groundstate)?;
    let tasks: Vec<(f64, f64)> =
        g.thetas.iter().flat_map(|&t| g.lambda_over_omega_a.values().into_iter().map(move |l| (t, l))).collect();
    workers.try_map(&tasks, |&(theta, lambda)| groundstate_point(g.omega_sigma_over_omega_a, lambda, theta, space))
}

/// `max |d⟨n⟩/dλ| / median |d⟨n⟩/dλ|` over a λ sweep.
pub fn derivative_spike(lambdas: &[f64], values: &[f64]) -> f64 {
    let mut d: Vec<f64> = lambdas
        .windows(2)
        .zip(values.windows(2))
        .map(|(l, v)| ((v[1] - v[0]) / (l[1] - l[0])).abs())
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    let max = d.iter().copied().fold(0.0, f64::max);
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len().is_multiple_of(2) { 0.5 * (d[mid - 1] + d[mid]) } else { d[mid] };
    if median > 0.0 {
        max / median
    } else {
        f64::INFINITY
    }
}

pub fn groundstate_bundle(cfg: &RunConfig, points: &[GroundPoint]) -> Bundle {
    let g = cfg.groundstate.as_ref().expect("validated");
    let lc = critical_coupling(1.0, g.omega_sigma_over_omega_a).unwrap_or(f64::NAN);
    let mut table = Table::new(
        "groundstate",
        &[
            "theta [rad]",
            "lambda_over_omega_a [1]",
            "lambda_over_lambda_c [1]",
            "energy [omega_a]",
            "gap [omega_a]",
            "mean_phonon [quanta]",
            "sigma_z [1]",
            "parity [1]",
            "entropy [nat]",
            "degeneracy [1]",
        ],
    );
    for pt in points {
        table.push(vec![
            pt.theta,
            pt.lambda,
            pt.lambda / lc,
            pt.energy,
            pt.gap,
            pt.mean_phonon,
            pt.sigma_z,
            pt.parity,
            pt.entropy,
            pt.degeneracy as f64,
        ]);
    }
    let mut series = Vec::new();
    let mut spikes = Vec::new();
    for &theta in &g.thetas {
        let sel: Vec<&GroundPoint> = points.iter().filter(|p| p.theta == theta).collect();
        let xs: Vec<f64> = sel.iter().map(|p| p.lambda).collect();
        let ys: Vec<f64> = sel.iter().map(|p| p.mean_phonon).collect();
        spikes.push(json!({ "theta_rad": theta, "derivative_max_over_median": derivative_spike(&xs, &ys) }));
        series.push(Series { label: format!("theta = {theta}"), xs, ys });
    }
    let summary = json!({
        "omega_sigma_over_omega_a": g.omega_sigma_over_omega_a,
        "lambda_c_over_omega_a": lc,
        "cutoff": cfg.cutoff_for(Experiment::Groundstate),
        "derivative_spikes": spikes,
    });
    let mut bundle = Bundle::new(Experiment::Groundstate, summary);
    bundle.plots.push((
        "mean_phonon".into(),
        Plot::Line(LinePlot { x_label: "lambda / omega_a".into(), y_label: "<a+a>".into(), series, markers: vec![lc] }),
    ));
    if g.thetas.len() >= 3 {
        let lambdas = g.lambda_over_omega_a.values();
        let values = g
            .thetas
            .iter()
            .map(|&t| points.iter().filter(|p| p.theta == t).map(|p| p.mean_phonon).collect())
            .collect();
        bundle.plots.push((
            "phase_diagram".into(),
            Plot::Heat(Heatmap {
                x_label: "lambda / omega_a".into(),
                y_label: "theta".into(),
                value_label: "<a+a>".into(),
                xs: lambdas,
                ys: g.thetas.clone(),
                values,
                diverging: false,
            }),
        ));
    }
    bundle.tables.push(table);
    bundle
}

// --------------------------------------------------------------- adiabatic

pub fn path_params(cfg: &RunConfig, path: &PathConfig) -> QrmParams {
    let wt = TWO_PI * cfg.schedule.unwrap_or_default().omega_tar;
    QrmParams {
        omega_sigma: path.omega_sigma_over_omega_a * wt,
        omega_a: wt,
        lambda: path.lambda_over_omega_a * wt,
        theta: path.theta,
    }
}

pub fn adiabatic_path(cfg: &RunConfig, path: &PathConfig, space: SpaceSpec) -> Result<PrepResult, CliError> {
    let a = cfg.adiabatic.as_ref().expect("validated");
    let noise = a.with_noise.then(|| cfg.noise_params());
    let s = cfg.schedule_for(path)?;
    Ok(prepare_ground_adiabatic(&path_params(cfg, path), &s, noise.as_ref(), space)?)
}

pub fn adiabatic(cfg: &RunConfig, workers: &Workers) -> Result<Vec<PrepResult>, CliError> {
    let a = cfg.adiabatic.as_ref().expect("validated");
    let space = space_for(cfg, Experiment::Adiabatic)?;
    workers.try_map(&a.paths, |path| adiabatic_path(cfg, path, space))
}

pub fn adiabatic_bundle(cfg: &RunConfig, results: &[PrepResult]) -> Bundle {
    let a = cfg.adiabatic.as_ref().expect("validated");
    let mut table = Table::new(
        "adiabatic",
        &[
            "path [1]",
            "theta [rad]",
            "lambda_over_omega_a [1]",
            "omega_sigma_over_omega_a [1]",
            "tau [s]",
            "t_tot [s]",
            "fidelity [1]",
            "steps [1]",
        ],
    );
    let mut track = Table::new("fidelity_track", &["path [1]", "t [s]", "fidelity [1]"]);
    let mut series = Vec::new();
    for (k, (path, r)) in a.paths.iter().zip(results).enumerate() {
        table.push(vec![
            k as f64,
            path.theta,
            path.lambda_over_omega_a,
            path.omega_sigma_over_omega_a,
            path.tau,
            path.t_tot,
            r.fidelity,
            r.steps as f64,
        ]);
        for &(t, f) in &r.track {
            track.push(vec![k as f64, t, f]);
        }
        series.push(Series {
            label: format!("path {k}"),
            xs: r.track.iter().map(|x| x.0).collect(),
            ys: r.track.iter().map(|x| x.1).collect(),
        });
    }
    let summary = json!({
        "cutoff": cfg.cutoff_for(Experiment::Adiabatic),
        "noise": a.with_noise.then(|| noise_json(&cfg.noise_params())),
        "fidelities": results.iter().map(|r| r.fidelity).collect::<Vec<_>>(),
    });
    let mut bundle = Bundle::new(Experiment::Adiabatic, summary);
    bundle.plots.push((
        "fidelity".into(),
        Plot::Line(LinePlot { x_label: "t - t0 [s]".into(), y_label: "fidelity".into(), series, markers: vec![] }),
    ));
    bundle.tables.push(table);
    bundle.tables.push(track);
    bundle
}

// ------------------------------------------------------------ entropy-scan

#[derive(Clone, Debug, PartialEq)]
pub struct EntropyPoint {
    pub theta: f64,
    pub lambda: f64,
    pub entropy: f64,
    pub parity: f64,
    pub ensemble: Option<EnsembleStats>,
}

pub fn entropy_scan(cfg: &RunConfig, workers: &Workers) -> Result<Vec<EntropyPoint>, CliError> {
    let e = cfg.entropy_scan.as_ref().expect("validated");
    let space = space_for(cfg, Experiment::EntropyScan)?;
    let base = if e.log_base == "two" { LogBase::Two } else { LogBase::Natural };
    let wa = TWO_PI * e.omega_a;
    let shots = match &cfg.shot_noise {
        Some(s) => Some(draw_shots(&s.model(cfg.seed))?),
        None => None,
    };
    let tasks: Vec<(f64, f64)> =
        e.lambda_over_omega_a.iter().flat_map(|&l| e.theta.values().into_iter().map(move |t| (l, t))).collect();
    workers.try_map(&tasks, |&(lambda, theta)| {
        let p = QrmParams { omega_sigma: e.omega_sigma_over_omega_a * wa, omega_a: wa, lambda: lambda * wa, theta };
        let gs = ground_state(&build_hs(&p, space)?)?;
        let entropy = qubit_entropy(&gs.state, space, base)?;
        let ensemble = match &shots {
            Some(shots) => {
                let values = shots
                    .iter()
                    .map(|shot| {
                        let g = ground_state(&shot.hamiltonian(&p, space)?)?;
                        Ok(vec![qubit_entropy(&g.state, space, base)?])
                    })
                    .collect::<Result<Vec<_>, qrm_core::Error>>()?;
                Some(EnsembleStats::from_results(shots.clone(), values)?)
            }
            None => None,
        };
        Ok::<_, CliError>(EntropyPoint { theta, lambda, entropy, parity: gs.parity, ensemble })
    })
}

pub fn entropy_bundle(cfg: &RunConfig, points: &[EntropyPoint]) -> Bundle {
    let e = cfg.entropy_scan.as_ref().expect("validated");
    let unit = if e.log_base == "two" { "bit" } else { "nat" };
    let noisy = points.iter().any(|p| p.ensemble.is_some());
    let mut columns = vec![
        "theta [rad]".to_string(),
        "lambda_over_omega_a [1]".into(),
        format!("entropy [{unit}]"),
        "parity [1]".into(),
    ];
    if noisy {
        columns.push(format!("entropy_mean [{unit}]"));
        columns.push(format!("entropy_std [{unit}]"));
    }
    let mut table = Table::with_columns("entropy", columns);
    for pt in points {
        let mut row = vec![pt.theta, pt.lambda, pt.entropy, pt.parity];
        if let Some(s) = &pt.ensemble {
            row.push(s.mean[0]);
            row.push(s.std[0]);
        }
        table.push(row);
    }
    let mut series = Vec::new();
    for &l in &e.lambda_over_omega_a {
        let sel: Vec<&EntropyPoint> = points.iter().filter(|p| p.lambda == l).collect();
        let xs: Vec<f64> = sel.iter().map(|p| p.theta).collect();
        series.push(Series { label: format!("lambda = {l}"), xs: xs.clone(), ys: sel.iter().map(|p| p.entropy).collect() });
        if noisy {
            let stats: Vec<&EnsembleStats> = sel.iter().filter_map(|p| p.ensemble.as_ref()).collect();
            series.push(Series {
                label: format!("lambda = {l}, mean - std"),
                xs: xs.clone(),
                ys: stats.iter().map(|s| s.mean[0] - s.std[0]).collect(),
            });
            series.push(Series {
                label: format!("lambda = {l}, mean + std"),
                xs,
                ys: stats.iter().map(|s| s.mean[0] + s.std[0]).collect(),
            });
        }
    }
    let summary = json!({
        "omega_sigma_over_omega_a": e.omega_sigma_over_omega_a,
        "log_base": e.log_base,
        "cutoff": cfg.cutoff_for(Experiment::EntropyScan),
        "seed": cfg.seed,
        "shot_noise": cfg.shot_noise.map(|s| json!({
            "intensity_cv": s.intensity_cv, "ac_stark_max_hz": s.ac_stark_max,
            "nbar_range": s.nbar_range, "sample_count": s.sample_count,
        })),
    });
    let mut bundle = Bundle::new(Experiment::EntropyScan, summary);
    bundle.plots.push((
        "entropy".into(),
        Plot::Line(LinePlot { x_label: "theta".into(), y_label: format!("S_vn [{unit}]"), series, markers: vec![] }),
    ));
    if e.lambda_over_omega_a.len() >= 3 {
        let thetas = e.theta.values();
        let values = e
            .lambda_over_omega_a
            .iter()
            .map(|&l| points.iter().filter(|p| p.lambda == l).map(|p| p.entropy).collect())
            .collect();
        bundle.plots.push((
            "entropy_surface".into(),
            Plot::Heat(Heatmap {
                x_label: "theta".into(),
                y_label: "lambda / omega_a".into(),
                value_label: format!("S_vn [{unit}]"),
                xs: thetas,
                ys: e.lambda_over_omega_a.clone(),
                values,
                diverging: false,
            }),
        ));
    }
    bundle.tables.push(table);
    bundle
}

// ------------------------------------------------------------------ wigner

pub fn wigner(cfg: &RunConfig) -> Result<(ChiGrid, WignerGrid), CliError> {
    let w = cfg.wigner.expect("validated");
    let space = space_for(cfg, Experiment::Wigner)?;
    let p = QrmParams { omega_sigma: w.omega_sigma_over_omega_a, omega_a: 1.0, lambda: w.lambda_over_omega_a, theta: w.theta };
    let gs = ground_state(&build_hs(&p, space)?)?;
    let rho_a = fock::partial_trace(&gs.state.projector(), Subsystem::Boson, space)?;
    let chi = characteristic_function(&rho_a, &ChiGridSpec { extent: w.chi_extent, points: w.chi_points })?;
    let grid = wigner_from_chi(&chi, &WignerSpec { extent: w.wigner_extent, pad: w.pad })?;
    Ok((chi, grid))
}

/// Fraction of the maximum a Wigner local maximum must reach to count.
pub const WIGNER_PEAK_FRACTION: f64 = 0.75;

pub fn wigner_bundle(cfg: &RunConfig, chi: &ChiGrid, w: &WignerGrid) -> Bundle {
    let (nr, ni) = (chi.beta_re.len(), chi.beta_im.len());
    let mut chi_table = Table::new("chi", &["beta_re [1]", "beta_im [1]", "chi_re [1]", "chi_im [1]"]);
    let mut chi_data = Vec::with_capacity(2 * nr * ni);
    for (i, &br) in chi.beta_re.iter().enumerate() {
        for (j, &bi) in chi.beta_im.iter().enumerate() {
            let v = chi.value(i, j);
            chi_table.push(vec![br, bi, v.re, v.im]);
            chi_data.extend([v.re, v.im]);
        }
    }
    let mut w_table = Table::new("wigner", &["x [1]", "p [1]", "w [1]"]);
    for (i, &x) in w.x.iter().enumerate() {
        for (j, &p) in w.p.iter().enumerate() {
            w_table.push(vec![x, p, w.value(i, j)]);
        }
    }
    let peaks = w.local_maxima(WIGNER_PEAK_FRACTION);
    let summary = json!({
        "cutoff": cfg.cutoff_for(Experiment::Wigner),
        "normalization": w.normalization(),
        "min": w.min(),
        "max": w.max(),
        "max_abs_imag_chi": chi.max_abs_imag(),
        "peaks": peaks.iter().map(|p| json!({ "x": p.x, "p": p.p, "w": p.value })).collect::<Vec<_>>(),
        "warnings": chi.warnings.iter().map(|w| format!("{w:?}")).collect::<Vec<_>>(),
    });
    let mut bundle = Bundle::new(Experiment::Wigner, summary);
    bundle.matrices.push(("chi".into(), MatrixFile::complex(nr, ni, chi_data)));
    bundle.matrices.push(("wigner".into(), MatrixFile::real(w.x.len(), w.p.len(), w.values.clone())));
    // heatmap rows run along p
    let w_rows = (0..w.p.len()).map(|j| (0..w.x.len()).map(|i| w.value(i, j)).collect()).collect();
    bundle.plots.push((
        "wigner".into(),
        Plot::Heat(Heatmap {
            x_label: "x".into(),
            y_label: "p".into(),
            value_label: "W".into(),
            xs: w.x.clone(),
            ys: w.p.clone(),
            values: w_rows,
            diverging: true,
        }),
    ));
    let chi_rows = (0..ni).map(|j| (0..nr).map(|i| chi.value(i, j).re).collect()).collect();
    bundle.plots.push((
        "chi_real".into(),
        Plot::Heat(Heatmap {
            x_label: "Re beta".into(),
            y_label: "Im beta".into(),
            value_label: "Re chi".into(),
            xs: chi.beta_re.clone(),
            ys: chi.beta_im.clone(),
            values: chi_rows,
            diverging: true,
        }),
    ));
    bundle.tables.push(chi_table);
    bundle.tables.push(w_table);
    bundle
}

// ----------------------------------------------------------------- compile

pub fn compile(cfg: &RunConfig) -> Result<Bundle, CliError> {
    let p = cfg.model.expect("validated").params();
    let ion = cfg.ion_params();
    let mut spec = compile_tones(&p, &ion)?;
    if let Some(d) = cfg.drive_params().filter(|d| d.omega_l > 0.0) {
        spec = spec.extend(compile_probe(&d, &ion)?);
    }
    let lint = check_validity(&spec, &p, &ion, &cfg.lint.unwrap_or_default().config());
    let terms = pulse::expand_terms(&spec, &ion, p.omega_a);
    let (kept, dropped) = pulse::rwa_split(&terms, &ion, p.omega_a);
    let got = pulse::effective_coefficients(&kept, p.omega_a);
    let want = EffectiveCoefficients::target(&p);
    let summary = json!({
        "params": params_json(&p),
        "ion": { "omega_0_hz": ion.omega_0 / TWO_PI, "omega_z_hz": ion.omega_z / TWO_PI, "eta": ion.eta },
        "tones": tone_json(&spec),
        "lint": {
            "clean": lint.is_clean(),
            "warnings": lint.warnings.iter().map(|w| format!("{w:?}")).collect::<Vec<_>>(),
            "lamb_dicke_ratio": lint.lamb_dicke_ratio,
            "rwa_margin": if lint.rwa_margin.is_finite() { json!(lint.rwa_margin) } else { json!("inf") },
            "rabi_ratio": lint.rabi_ratio,
        },
        "rwa_terms": { "retained": kept.len(), "dropped": dropped.len() },
        "round_trip_max_abs_diff_hz": got.max_abs_diff(&want) / TWO_PI,
    });
    let mut bundle = Bundle::new(Experiment::Compile, summary);
    bundle.texts.push(("tones.txt".into(), tone_table(&spec)));
    bundle.texts.push((
        "tones.json".into(),
        serde_json::to_string_pretty(&tone_json(&spec)).expect("json") + "\n",
    ));
    Ok(bundle)
}

// ------------------------------------------------------------ validate-rwa

/// Acceptance threshold on the final-state infidelity.
pub const RWA_INFIDELITY_LIMIT: f64 = 1e-2;

pub fn rwa(cfg: &RunConfig) -> Result<RwaReport, CliError> {
    let p = cfg.model.expect("validated").params();
    let ion = cfg.ion_params();
    let d = cfg.drive_params().filter(|d| d.omega_l > 0.0);
    let r = cfg.rwa.unwrap_or(crate::config::RwaConfig { periods: 1.0, steps: None });
    let duration = r.periods * TWO_PI / p.omega_a;
    let space = space_for(cfg, Experiment::ValidateRwa)?;
    let steps = match r.steps {
        Some(s) => s,
        None => 2 * validate_rwa_required(&p, d.as_ref(), &ion, duration, space)?,
    };
    Ok(validate_rwa(&p, d.as_ref(), &ion, duration, steps, space)?)
}

pub fn rwa_bundle(cfg: &RunConfig, r: &RwaReport) -> Bundle {
    let summary = json!({
        "params": params_json(&cfg.model.expect("validated").params()),
        "cutoff": cfg.cutoff_for(Experiment::ValidateRwa),
        "infidelity": r.infidelity,
        "max_deviation": r.max_deviation,
        "steps": r.steps,
        "required_steps": r.required_steps,
        "infidelity_limit": RWA_INFIDELITY_LIMIT,
        "within_limit": r.infidelity < RWA_INFIDELITY_LIMIT,
    });
    let mut bundle = Bundle::new(Experiment::ValidateRwa, summary);
    let mut t = Table::new("rwa", &["infidelity [1]", "max_deviation [1]", "steps [1]", "required_steps [1]"]);
    t.push(vec![r.infidelity, r.max_deviation, r.steps as f64, r.required_steps as f64]);
    bundle.tables.push(t);
    bundle
}

// ------------------------------------------------------------- convergence

/// Default cutoff pair: the run cutoff and 1.5 times it.
pub fn default_cutoffs(n: usize) -> Vec<usize> {
    vec![n, (3 * n).div_ceil(2)]
}

pub fn convergence(cfg: &RunConfig, workers: &Workers) -> Result<Bundle, CliError> {
    let c = cfg.convergence.as_ref().expect("validated");
    let inner = c.target.experiment();
    let cutoffs = if c.cutoffs.is_empty() { default_cutoffs(cfg.cutoff_for(inner)) } else { c.cutoffs.clone() };
    let report = convergence_check(&cutoffs, c.tolerance, |space| {
        let mut at = cfg.clone();
        at.cutoff = Some(space.fock_cutoff());
        let values = match c.target {
            ConvergenceTarget::Spectrum => spectrum(&at, workers).map(|s| s.mean_phonons()),
            ConvergenceTarget::Groundstate => groundstate(&at, workers)
                .map(|pts| pts.iter().map(|p| p.mean_phonon).chain(pts.iter().map(|p| p.entropy)).collect()),
            ConvergenceTarget::Adiabatic => adiabatic(&at, workers).map(|rs| rs.iter().map(|r| r.fidelity).collect()),
        };
        values.map_err(|e| match e {
            CliError::Numerical(e) => e,
            other => qrm_core::Error::IllConditioned(other.to_string()),
        })
    })?;
    let mut table = Table::new("convergence", &["cutoff [1]", "next_cutoff [1]", "max_abs_diff [1]"]);
    for (k, d) in report.max_diffs.iter().enumerate() {
        table.push(vec![report.cutoffs[k] as f64, report.cutoffs[k + 1] as f64, *d]);
    }
    let summary = json!({
        "target": inner.name(),
        "cutoffs": report.cutoffs,
        "max_diffs": report.max_diffs,
        "tolerance": report.tolerance,
        "passed": report.passed,
    });
    let mut bundle = Bundle::new(Experiment::Convergence, summary);
    if !report.passed {
        bundle.failure = Some(format!(
            "observables drift by {:?} between cutoffs {:?} (tolerance {})",
            report.max_diffs, report.cutoffs, report.tolerance
        ));
    }
    bundle.tables.push(table);
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn spike_ratio() {
        let l = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert!((derivative_spike(&l, &[0.0, 1.0, 2.0, 3.0, 4.0]) - 1.0).abs() < 1e-12);
        assert!(derivative_spike(&l, &[0.0, 0.1, 0.2, 5.0, 5.1]) > 10.0);
    }

    #[test]
    fn resonance_list_skips_missing_orders() {
        let r = resonances(1.5);
        assert_eq!(r.iter().map(|x| x.0).collect::<Vec<_>>(), [2, 3]);
    }

    #[test]
    fn compile_bundle_contains_tone_files() {
        let cfg = parse_config(
            "[model]\nomega_sigma = 108000.0\nomega_a = 25000.0\nlambda = 6750.0\ntheta = 1.5707963267948966\n",
        )
        .unwrap();
        let b = run(&cfg, Experiment::Compile, &Workers::serial()).unwrap();
        assert!(b.texts.iter().any(|(n, t)| n == "tones.txt" && t.lines().count() == 5));
        assert_eq!(b.summary["lint"]["clean"], true);
        assert!(b.summary["round_trip_max_abs_diff_hz"].as_f64().unwrap() < 1e-9);
    }

    #[test]
    fn small_groundstate_sweep() {
        let cfg = parse_config(
            "cutoff = 20\n[groundstate]\nomega_sigma_over_omega_a = 6.0\nthetas = [0.5, 1.0, 1.5]\nlambda_over_omega_a = { start = 0.0, stop = 1.0, points = 5 }\n",
        )
        .unwrap();
        let b = run(&cfg, Experiment::Groundstate, &Workers::serial()).unwrap();
        assert_eq!(b.table("groundstate").unwrap().rows.len(), 15);
        assert_eq!(b.plots.len(), 2);
    }
}
