use std::path::Path;

use rt_spectrum::discretize::Mesh;
use rt_spectrum::eigen::EigenBackend;
use rt_spectrum::geometry::{mode_flattening, push_mode_to_physical, ExtensionCoeffs, GeometryError};
use rt_spectrum::growth::{
    dispersion_curve_opts, growth_rate_opts, sharp_rate_opts, DispersionPoint, GrowthError, GrowthOptions,
    Truncation, Verdict, STABLE_ALPHA_TOL,
};
use rt_spectrum::modes::{build_mode, sample_fields, GridSpec, ModeError};
use rt_spectrum::params::{
    classify_regime, jump_density, lattice_frequencies, sigma_critical, xi_critical, ConfigLoadError, FluidConfig,
    Frequency, RegimeLabel,
};
use serde::Serialize;
use serde_json::json;

use crate::manifest::{MeshSizes, RunManifest, Tolerances};
use crate::output::{csv_bytes, emit, fmt_f64, fmt_opt, json_bytes, sidecar, write_bytes};
use crate::{Cli, CliError, Command, Format, GlobalArgs};

const EIGEN_RESIDUAL_TOL: f64 = 1e-9;
/// Surface amplitude used for `--physical` when none is given.
const DEFAULT_PHYSICAL_AMPLITUDE: f64 = 0.01;

pub(crate) fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    let path = g
        .config
        .as_deref()
        .ok_or_else(|| CliError::Input("--config PATH is required".into()))?;
    let cfg = load_config(path)?;
    if g.mesh < 2 {
        return Err(CliError::Input(format!("--mesh must be at least 2, got {}", g.mesh)));
    }
    if !(g.tol > 0.0 && g.tol < 1.0) {
        return Err(CliError::Input(format!("--tol must lie in (0, 1), got {}", g.tol)));
    }
    match &cli.command {
        Command::Classify => cmd_classify(g, &cfg),
        Command::Dispersion { xi_max } => cmd_dispersion(g, &cfg, *xi_max),
        Command::SharpRate => cmd_sharp_rate(g, &cfg),
        Command::Mode {
            xi,
            time,
            grid,
            physical,
            normalize,
            amplitude,
        } => cmd_mode(g, &cfg, (xi[0], xi[1]), *time, *grid, *physical, *normalize, *amplitude),
        Command::Convergence { xi, meshes } => cmd_convergence(g, &cfg, (xi[0], xi[1]), meshes),
    }
}

fn load_config(path: &Path) -> Result<FluidConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    FluidConfig::from_json(&text).map_err(|e| match e {
        ConfigLoadError::Parse(p) => CliError::Input(format!("{}: {p}", path.display())),
        ConfigLoadError::Invalid(v) => CliError::Input(format!("{}: {v}", path.display())),
    })
}

fn options(g: &GlobalArgs) -> GrowthOptions {
    GrowthOptions {
        s_rel_tol: g.tol,
        backend: EigenBackend::Banded,
    }
}

fn mesh_for(cfg: &FluidConfig, n: usize) -> Result<Mesh, CliError> {
    Mesh::uniform(cfg.b, n).map_err(|e| CliError::Input(e.to_string()))
}

fn tolerances(g: &GlobalArgs) -> Tolerances {
    Tolerances {
        s_rel_tol: g.tol,
        stable_alpha_tol: STABLE_ALPHA_TOL,
        eigen_residual_tol: EIGEN_RESIDUAL_TOL,
    }
}

/// Writes the output and, for file outputs, its manifest.
fn finish(g: &GlobalArgs, cfg: &FluidConfig, command: &str, arguments: serde_json::Value, bytes: &[u8]) -> Result<(), CliError> {
    emit(g.out.as_deref(), bytes)?;
    if let Some(out) = &g.out {
        let manifest = RunManifest::new(
            command,
            arguments,
            cfg,
            MeshSizes {
                n_lower: g.mesh,
                n_upper: g.mesh,
            },
            tolerances(g),
            bytes,
        );
        write_bytes(&sidecar(out, ".manifest.json"), &json_bytes(&manifest)?)?;
    }
    Ok(())
}

fn growth_failure(e: GrowthError) -> CliError {
    match e {
        GrowthError::NotUnstable(label) => CliError::Regime(regime_explanation(label)),
        GrowthError::Config(c) => CliError::Input(c.to_string()),
        GrowthError::BadFrequency(_) | GrowthError::BadTolerance(_) => CliError::Input(e.to_string()),
        other => CliError::Numerical(other.to_string()),
    }
}

fn regime_explanation(label: RegimeLabel) -> String {
    let why = match label {
        RegimeLabel::StableAlmostExp => "the lighter fluid is on top",
        RegimeLabel::StableExp => "surface tension stabilizes every lattice frequency",
        RegimeLabel::CriticalLWP => "the configuration is critical (equal densities or sigma_- = sigma_c)",
        RegimeLabel::UnstableNoST | RegimeLabel::UnstableST => "unexpected",
    };
    format!("regime {label}: no unstable lattice frequency, {why}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifyReport {
    pub regime: RegimeLabel,
    pub jump_density: f64,
    /// `None` when the density jump is not positive.
    pub sigma_c: Option<f64>,
    /// `Some(inf)` without interfacial tension.
    pub xi_c: Option<f64>,
    /// `None` when unbounded (no interfacial tension).
    pub subcritical_frequencies: Option<usize>,
}

pub fn classify_report(cfg: &FluidConfig) -> Result<ClassifyReport, CliError> {
    let regime = classify_regime(cfg).map_err(|e| CliError::Input(e.to_string()))?;
    let jump = jump_density(cfg);
    let sigma_c = sigma_critical(cfg).ok();
    let xi_c = xi_critical(cfg).ok();
    let subcritical_frequencies = match xi_c {
        Some(x) if x.is_infinite() => None,
        Some(x) => Some(lattice_frequencies(cfg, x).iter().filter(|f| f.magnitude < x).count()),
        None => Some(0),
    };
    Ok(ClassifyReport {
        regime: regime.label,
        jump_density: jump,
        sigma_c,
        xi_c,
        subcritical_frequencies,
    })
}

fn cmd_classify(g: &GlobalArgs, cfg: &FluidConfig) -> Result<(), CliError> {
    let r = classify_report(cfg)?;
    let xi_c = match r.xi_c {
        Some(x) => fmt_f64(x),
        None => "n/a".into(),
    };
    let count = r.subcritical_frequencies.map_or("unbounded".into(), |n| n.to_string());
    let bytes = match g.format.unwrap_or(Format::Text) {
        Format::Text => format!(
            "regime {}\njump_density {}\nsigma_c {}\nxi_c {}\nsubcritical_frequencies {}\n",
            r.regime,
            fmt_f64(r.jump_density),
            r.sigma_c.map_or("n/a".into(), fmt_f64),
            xi_c,
            count
        )
        .into_bytes(),
        Format::Json => json_bytes(&json!({
            "regime": r.regime,
            "jump_density": r.jump_density,
            "sigma_c": r.sigma_c,
            "xi_c": xi_c,
            "subcritical_frequencies": count,
        }))?,
        f => return Err(CliError::Input(format!("classify does not support {f:?} output"))),
    };
    finish(g, cfg, "classify", json!({}), &bytes)
}

/// One line of a dispersion scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionRow {
    pub n1: i64,
    pub n2: i64,
    pub xi1: f64,
    pub xi2: f64,
    pub xi_abs: f64,
    /// `stable`, `unstable` or `error`.
    pub verdict: &'static str,
    pub lambda: Option<f64>,
    pub s_star: Option<f64>,
    pub alpha_at_star: Option<f64>,
    pub ceiling_bound: f64,
    pub proof_bound: Option<f64>,
    pub error: Option<String>,
}

fn row_of(cfg: &FluidConfig, p: &DispersionPoint) -> DispersionRow {
    let (verdict, lambda, s_star, alpha_at_star, error) = match &p.outcome {
        Ok(g) => match &g.verdict {
            Verdict::Unstable {
                lambda,
                s_star,
                alpha_at_star,
                ..
            } => ("unstable", Some(*lambda), Some(*s_star), Some(*alpha_at_star), None),
            Verdict::Stable { .. } => ("stable", None, None, None, None),
        },
        Err(e) => ("error", None, None, None, Some(e.to_string())),
    };
    DispersionRow {
        n1: p.xi.n1,
        n2: p.xi.n2,
        xi1: p.xi.xi1,
        xi2: p.xi.xi2,
        xi_abs: p.xi.magnitude,
        verdict,
        lambda,
        s_star,
        alpha_at_star,
        ceiling_bound: cfg.growth_ceiling(),
        proof_bound: cfg.growth_proof_bound(p.xi.magnitude),
        error,
    }
}

pub fn dispersion_rows(mesh: &Mesh, cfg: &FluidConfig, xi_max: f64, opts: &GrowthOptions) -> Result<Vec<DispersionRow>, CliError> {
    if !(xi_max > 0.0 && xi_max.is_finite()) {
        return Err(CliError::Input(format!("--xi-max must be positive and finite, got {xi_max}")));
    }
    let freqs = lattice_frequencies(cfg, xi_max);
    if freqs.is_empty() {
        return Err(CliError::Input(format!("no lattice frequency with |xi| <= {xi_max}")));
    }
    let points = dispersion_curve_opts(mesh, cfg, &freqs, opts);
    let rows: Vec<DispersionRow> = points.iter().map(|p| row_of(cfg, p)).collect();
    if rows.iter().all(|r| r.error.is_some()) {
        return Err(CliError::Numerical(format!(
            "every frequency failed; first: {}",
            rows[0].error.as_deref().unwrap_or_default()
        )));
    }
    Ok(rows)
}

const DISPERSION_HEADER: [&str; 12] = [
    "n1",
    "n2",
    "xi1",
    "xi2",
    "xi_abs",
    "verdict",
    "lambda",
    "s_star",
    "alpha_at_star",
    "ceiling_bound",
    "proof_bound",
    "error",
];

fn cmd_dispersion(g: &GlobalArgs, cfg: &FluidConfig, xi_max: f64) -> Result<(), CliError> {
    let mesh = mesh_for(cfg, g.mesh)?;
    let rows = dispersion_rows(&mesh, cfg, xi_max, &options(g))?;
    let format = g.format.unwrap_or(Format::Csv);
    let bytes = match format {
        Format::Csv => {
            let records: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.n1.to_string(),
                        r.n2.to_string(),
                        fmt_f64(r.xi1),
                        fmt_f64(r.xi2),
                        fmt_f64(r.xi_abs),
                        r.verdict.to_string(),
                        fmt_opt(r.lambda),
                        fmt_opt(r.s_star),
                        fmt_opt(r.alpha_at_star),
                        fmt_f64(r.ceiling_bound),
                        fmt_opt(r.proof_bound),
                        r.error.clone().unwrap_or_default(),
                    ]
                })
                .collect();
            csv_bytes(&DISPERSION_HEADER, &records)?
        }
        Format::Json => json_bytes(&rows)?,
        f => return Err(CliError::Input(format!("dispersion does not support {f:?} output"))),
    };
    finish(g, cfg, "dispersion", json!({ "xi_max": xi_max, "format": format!("{format:?}") }), &bytes)
}

#[derive(Debug, Serialize)]
struct SharpReport {
    regime: RegimeLabel,
    value: f64,
    lattice_max: f64,
    continuous_envelope: f64,
    envelope_xi: f64,
    mode: &'static str,
    achieved_at: Option<Frequency>,
    ceiling_bound: f64,
    truncation: Option<Truncation>,
}

fn cmd_sharp_rate(g: &GlobalArgs, cfg: &FluidConfig) -> Result<(), CliError> {
    let mesh = mesh_for(cfg, g.mesh)?;
    let r = sharp_rate_opts(&mesh, cfg, &options(g)).map_err(growth_failure)?;
    if let Some(t) = &r.truncation {
        if t.hit_cap {
            log::warn!("shell scan stopped at the cap |xi| = {}", t.cap_xi);
        }
    }
    let report = SharpReport {
        regime: classify_regime(cfg).map_err(|e| CliError::Input(e.to_string()))?.label,
        value: r.value,
        lattice_max: r.lattice_max,
        continuous_envelope: r.continuous_envelope,
        envelope_xi: r.envelope_xi,
        mode: "LatticeMax",
        achieved_at: r.achieved_at,
        ceiling_bound: cfg.growth_ceiling(),
        truncation: r.truncation,
    };
    match g.format {
        None | Some(Format::Json) => {}
        Some(f) => return Err(CliError::Input(format!("sharp-rate does not support {f:?} output"))),
    }
    finish(g, cfg, "sharp-rate", json!({}), &json_bytes(&report)?)
}

#[derive(Debug, Serialize)]
struct ArrayRef {
    name: &'static str,
    /// Offset in 8-byte words from the start of the binary file.
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize)]
struct ModeHeader {
    format: &'static str,
    grid: GridSpec,
    origin: [f64; 3],
    spacing: [f64; 3],
    time: f64,
    lambda: f64,
    xi: Frequency,
    physical: bool,
    normalized: bool,
    amplitude: Option<f64>,
    layout: &'static str,
    dtype: &'static str,
    binary_file: String,
    arrays: Vec<ArrayRef>,
}

fn mode_failure(e: ModeError) -> CliError {
    match e {
        ModeError::NotUnstable { n1, n2 } => CliError::Regime(format!("frequency ({n1}, {n2}) is not unstable")),
        ModeError::Growth(g) => growth_failure(g),
        ModeError::BadGrid(_) | ModeError::BadTime(_) => CliError::Input(e.to_string()),
        other => CliError::Numerical(other.to_string()),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_mode(
    g: &GlobalArgs,
    cfg: &FluidConfig,
    (n1, n2): (i64, i64),
    time: f64,
    grid: [usize; 3],
    physical: bool,
    normalize: bool,
    amplitude: Option<f64>,
) -> Result<(), CliError> {
    if (n1, n2) == (0, 0) {
        return Err(CliError::Input("--xi 0 0 is the mean mode, which never grows".into()));
    }
    let mesh = mesh_for(cfg, g.mesh)?;
    let xi = Frequency::from_indices(n1, n2, cfg);
    let point = DispersionPoint {
        xi,
        outcome: growth_rate_opts(&mesh, cfg, xi.magnitude, &options(g)),
    };
    let mut mode = build_mode(&point, &mesh, cfg).map_err(mode_failure)?;
    if normalize {
        mode = mode.renormalized();
    }
    let amplitude = amplitude.or(physical.then_some(DEFAULT_PHYSICAL_AMPLITUDE));
    if let Some(a) = amplitude {
        if !(a > 0.0 && a.is_finite()) {
            return Err(CliError::Input(format!("--amplitude must be positive, got {a}")));
        }
        mode = mode.scaled(a / mode.surface_amplitude());
    }
    let grid = GridSpec {
        n1: grid[0],
        n2: grid[1],
        n3: grid[2],
    };
    let sample = sample_fields(&mode, time, grid).map_err(mode_failure)?;
    let phys = if physical {
        let fl = mode_flattening(&mode, time, &ExtensionCoeffs::default());
        Some(push_mode_to_physical(&sample, &fl).map_err(|e| match e {
            GeometryError::DegenerateJacobian { x, j_jac } => CliError::Numerical(format!(
                "flattening map degenerates at t = {time}: J = {} at x = ({}, {}, {})",
                fmt_f64(j_jac),
                fmt_f64(x[0]),
                fmt_f64(x[1]),
                fmt_f64(x[2])
            )),
            other => CliError::Numerical(other.to_string()),
        })?)
    } else {
        None
    };

    // per-point arrays first, then the two surface planes
    let mut arrays: Vec<(&'static str, &[f64])> = vec![
        ("u1", &sample.u[0]),
        ("u2", &sample.u[1]),
        ("u3", &sample.u[2]),
        ("p", &sample.p_tilde),
    ];
    if let Some(p) = &phys {
        arrays.push(("y3", &p.y3));
        arrays.push(("j_jac", &p.j_jac));
    }
    let point_arrays = arrays.len();
    arrays.push(("x3", &sample.x3));
    arrays.push(("eta_plus", &sample.eta_plus));
    arrays.push(("eta_minus", &sample.eta_minus));

    let format = g.format.unwrap_or(if g.out.is_some() { Format::Bin } else { Format::Csv });
    let arguments = json!({
        "xi": [n1, n2],
        "time": time,
        "grid": [grid.n1, grid.n2, grid.n3],
        "physical": physical,
        "normalize": normalize,
        "amplitude": amplitude,
        "format": format!("{format:?}"),
    });
    match format {
        Format::Csv => {
            let mut header: Vec<&str> = vec!["x1", "x2", "x3"];
            header.extend(arrays[..point_arrays].iter().map(|a| a.0));
            header.extend(["eta_plus", "eta_minus"]);
            let mut rows = Vec::with_capacity(grid.len());
            for i3 in 0..grid.n3 {
                for i2 in 0..grid.n2 {
                    for i1 in 0..grid.n1 {
                        let idx = grid.index(i1, i2, i3);
                        let plane = i2 * grid.n1 + i1;
                        let mut r = vec![fmt_f64(sample.x1[i1]), fmt_f64(sample.x2[i2]), fmt_f64(sample.x3[i3])];
                        r.extend(arrays[..point_arrays].iter().map(|a| fmt_f64(a.1[idx])));
                        r.push(fmt_f64(sample.eta_plus[plane]));
                        r.push(fmt_f64(sample.eta_minus[plane]));
                        rows.push(r);
                    }
                }
            }
            finish(g, cfg, "mode", arguments, &csv_bytes(&header, &rows)?)
        }
        Format::Bin => {
            let out = g
                .out
                .as_deref()
                .ok_or_else(|| CliError::Input("binary mode output needs --out; use --format csv for stdout".into()))?;
            let bin_path = sidecar(out, ".bin");
            let mut refs = Vec::new();
            let mut data = Vec::new();
            let mut offset = 0;
            for (name, values) in &arrays {
                refs.push(ArrayRef {
                    name,
                    offset,
                    len: values.len(),
                });
                offset += values.len();
                for v in values.iter() {
                    data.extend_from_slice(&v.to_le_bytes());
                }
            }
            let header = ModeHeader {
                format: "rt-spectrum-field-v1",
                grid,
                origin: [0.0, 0.0, -cfg.b],
                spacing: [
                    2.0 * std::f64::consts::PI * cfg.l1 / grid.n1 as f64,
                    2.0 * std::f64::consts::PI * cfg.l2 / grid.n2 as f64,
                    (1.0 + cfg.b) / (grid.n3 - 1) as f64,
                ],
                time,
                lambda: mode.lambda,
                xi,
                physical,
                normalized: normalize,
                amplitude,
                layout: "point arrays: i1 fastest, then i2, then i3; surface arrays: i1 fastest, then i2",
                dtype: "f64-le",
                binary_file: bin_path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                arrays: refs,
            };
            write_bytes(&bin_path, &data)?;
            finish(g, cfg, "mode", arguments, &json_bytes(&header)?)
        }
        f => Err(CliError::Input(format!("mode does not support {f:?} output"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub mesh: usize,
    pub lambda: f64,
    /// Change from the previous mesh.
    pub delta: Option<f64>,
    /// Previous change over this one.
    pub ratio: Option<f64>,
    /// Observed order from the last three meshes, when their refinement
    /// ratios agree.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub xi: Frequency,
    pub rows: Vec<ConvergenceRow>,
    pub order: Option<f64>,
    pub extrapolated: Option<f64>,
    /// Growth rates never decrease under refinement (slack 1e-12).
    pub monotone: bool,
}

pub fn convergence_table(
    cfg: &FluidConfig,
    (n1, n2): (i64, i64),
    meshes: &[usize],
    opts: &GrowthOptions,
) -> Result<ConvergenceTable, CliError> {
    if meshes.len() < 3 {
        return Err(CliError::Input(format!("need at least 3 meshes, got {}", meshes.len())));
    }
    if (n1, n2) == (0, 0) {
        return Err(CliError::Input("--xi 0 0 is the mean mode".into()));
    }
    let xi = Frequency::from_indices(n1, n2, cfg);
    let mut lambdas = Vec::with_capacity(meshes.len());
    for &n in meshes {
        let mesh = mesh_for(cfg, n)?;
        let g = growth_rate_opts(&mesh, cfg, xi.magnitude, opts).map_err(growth_failure)?;
        match g.verdict {
            Verdict::Unstable { lambda, .. } => lambdas.push(lambda),
            Verdict::Stable { .. } => {
                return Err(CliError::Regime(format!("frequency ({n1}, {n2}) is stable on mesh {n}")));
            }
        }
    }
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(meshes.len());
    let mut last = (None, None);
    for i in 0..meshes.len() {
        let delta = (i >= 1).then(|| lambdas[i] - lambdas[i - 1]);
        let prev_delta = if i >= 2 { rows[i - 1].delta } else { None };
        let ratio = match (prev_delta, delta) {
            (Some(a), Some(b)) if b != 0.0 => Some(a / b),
            _ => None,
        };
        let mut order = None;
        if i >= 2 && meshes[i - 1] * meshes[i - 1] == meshes[i] * meshes[i - 2] && meshes[i] > meshes[i - 1] {
            let r = meshes[i] as f64 / meshes[i - 1] as f64;
            if let Some(q) = ratio.filter(|q| *q > 0.0) {
                let p = q.ln() / r.ln();
                order = Some(p);
                last = (Some(p), Some(lambdas[i] + delta.unwrap_or(0.0) / (r.powf(p) - 1.0)));
            }
        }
        rows.push(ConvergenceRow {
            mesh: meshes[i],
            lambda: lambdas[i],
            delta,
            ratio,
            order,
        });
    }
    let mut sorted: Vec<(usize, f64)> = meshes.iter().copied().zip(lambdas.iter().copied()).collect();
    sorted.sort_by_key(|p| p.0);
    let monotone = sorted.windows(2).all(|w| w[1].1 >= w[0].1 - 1e-12);
    Ok(ConvergenceTable {
        xi,
        rows,
        order: last.0,
        extrapolated: last.1,
        monotone,
    })
}

fn cmd_convergence(g: &GlobalArgs, cfg: &FluidConfig, xi: (i64, i64), meshes: &[usize]) -> Result<(), CliError> {
    let table = convergence_table(cfg, xi, meshes, &options(g))?;
    let format = g.format.unwrap_or(Format::Json);
    let bytes = match format {
        Format::Json => json_bytes(&table)?,
        Format::Csv => {
            let mut rows: Vec<Vec<String>> = table
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.mesh.to_string(),
                        fmt_f64(r.lambda),
                        fmt_opt(r.delta),
                        fmt_opt(r.ratio),
                        fmt_opt(r.order),
                    ]
                })
                .collect();
            rows.push(vec![
                "extrapolated".into(),
                fmt_opt(table.extrapolated),
                String::new(),
                String::new(),
                fmt_opt(table.order),
            ]);
            csv_bytes(&["mesh", "lambda", "delta", "ratio", "order"], &rows)?
        }
        f => return Err(CliError::Input(format!("convergence does not support {f:?} output"))),
    };
    finish(g, cfg, "convergence", json!({ "xi": [xi.0, xi.1], "meshes": meshes, "format": format!("{format:?}") }), &bytes)
}
