//! Physical growth rates from the modified problem family.
//!
//! For fixed `|xi|` the map `h(s) = s^2 + alpha(s)` is strictly increasing,
//! so the growth rate is its unique positive root when `alpha(0+) < 0`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretize::{Mesh, Profile};
use crate::eigen::{EigenBackend, EigenError, ModalProblem};
use crate::params::{
    classify_regime, jump_density, lattice_frequencies, xi_critical, ConfigError, FluidConfig, Frequency,
    RegimeLabel,
};

/// `alpha` values at or above this count as nonnegative.
pub const STABLE_ALPHA_TOL: f64 = -1e-12;
/// Relative width of the final `s` bracket.
pub const S_REL_TOL: f64 = 1e-10;
/// Upper bracket doublings allowed past the ceiling.
pub const MAX_DOUBLINGS: u32 = 10;

/// Shells that must decrease in a row before a zero-tension scan stops.
pub const SHELL_STOP_COUNT: usize = 3;
/// ... each of them below this fraction of the running maximum.
pub const SHELL_STOP_FRACTION: f64 = 0.5;
/// Zero-tension scans never go past this many minimal lattice spacings.
pub const SHELL_CAP_SPACINGS: f64 = 64.0;

/// Solver settings shared by every growth-rate computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthOptions {
    /// Relative width of the final `s` bracket.
    pub s_rel_tol: f64,
    pub backend: EigenBackend,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        GrowthOptions {
            s_rel_tol: S_REL_TOL,
            backend: EigenBackend::Banded,
        }
    }
}

const SHELL_BATCH: usize = 16;
const ENVELOPE_POINTS: usize = 64;
const GOLDEN_ITERS: usize = 80;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrowthError {
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error("h(s) stayed negative up to s = {s_hi:.6e}; the root lies beyond the scan cap")]
    BracketFailure { s_hi: f64 },
    #[error("frequency magnitude must be positive and finite, got {0}")]
    BadFrequency(f64),
    #[error("regime {0} is not unstable")]
    NotUnstable(RegimeLabel),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("computed rate {value:.6e} exceeds the ceiling {ceiling:.6e}")]
    CeilingViolated { value: f64, ceiling: f64 },
    #[error("relative tolerance must lie in (0, 1), got {0}")]
    BadTolerance(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Unstable {
        lambda: f64,
        s_star: f64,
        alpha_at_star: f64,
        psi: Profile,
        /// Eigenvalue cluster size at the root (1 for a simple minimum).
        multiplicity: usize,
    },
    Stable {
        /// `alpha` at the smallest probe, the minimum over all probes.
        alpha_floor: f64,
    },
}

impl Verdict {
    pub fn lambda(&self) -> Option<f64> {
        match self {
            Verdict::Unstable { lambda, .. } => Some(*lambda),
            Verdict::Stable { .. } => None,
        }
    }

    pub fn is_unstable(&self) -> bool {
        matches!(self, Verdict::Unstable { .. })
    }
}

/// One evaluation `h(s) = s^2 + alpha(s)` made while locating the root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub s: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthRate {
    pub xi_abs: f64,
    pub verdict: Verdict,
    /// Every `h` evaluation, in the order made.
    pub trace: Vec<Probe>,
}

/// Result for one frequency of a scan; failures are kept per point.
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionPoint {
    pub xi: Frequency,
    pub outcome: Result<GrowthRate, GrowthError>,
}

impl DispersionPoint {
    pub fn lambda(&self) -> Option<f64> {
        self.outcome.as_ref().ok().and_then(|g| g.verdict.lambda())
    }

    pub fn verdict(&self) -> Option<&Verdict> {
        self.outcome.as_ref().ok().map(|g| &g.verdict)
    }
}

/// Scale used to place the first `s` probe.
fn rate_scale(cfg: &FluidConfig) -> f64 {
    let ceiling = cfg.growth_ceiling();
    if ceiling > 0.0 {
        ceiling
    } else {
        cfg.b * cfg.g * cfg.rho_plus.max(cfg.rho_minus) / (4.0 * cfg.mu_minus)
    }
}

/// Growth rate at one wavenumber magnitude.
pub fn growth_rate(mesh: &Mesh, cfg: &FluidConfig, xi_abs: f64) -> Result<GrowthRate, GrowthError> {
    growth_rate_opts(mesh, cfg, xi_abs, &GrowthOptions::default())
}

pub fn growth_rate_with(
    mesh: &Mesh,
    cfg: &FluidConfig,
    xi_abs: f64,
    backend: EigenBackend,
) -> Result<GrowthRate, GrowthError> {
    let opts = GrowthOptions {
        backend,
        ..GrowthOptions::default()
    };
    growth_rate_opts(mesh, cfg, xi_abs, &opts)
}

pub fn growth_rate_opts(
    mesh: &Mesh,
    cfg: &FluidConfig,
    xi_abs: f64,
    opts: &GrowthOptions,
) -> Result<GrowthRate, GrowthError> {
    if !(xi_abs > 0.0 && xi_abs.is_finite()) {
        return Err(GrowthError::BadFrequency(xi_abs));
    }
    if !(opts.s_rel_tol > 0.0 && opts.s_rel_tol < 1.0) {
        return Err(GrowthError::BadTolerance(opts.s_rel_tol));
    }
    let problem = ModalProblem::new(mesh, cfg, xi_abs).with_backend(opts.backend);
    let mut trace = Vec::new();
    let mut eval = |s: f64| -> Result<(f64, crate::eigen::AlphaResult), GrowthError> {
        let r = problem.alpha(s)?;
        let h = s * s + r.alpha;
        trace.push(Probe { s, h });
        Ok((h, r))
    };

    let scale = rate_scale(cfg);
    let mut s_lo = 1e-8 * scale;
    let (mut h_lo, first) = eval(s_lo)?;
    if first.alpha >= STABLE_ALPHA_TOL {
        return Ok(GrowthRate {
            xi_abs,
            verdict: Verdict::Stable {
                alpha_floor: first.alpha,
            },
            trace,
        });
    }
    let mut shrink = 0;
    while h_lo >= 0.0 {
        shrink += 1;
        if shrink > 20 {
            // alpha is negative but the root is below every probe
            return Ok(GrowthRate {
                xi_abs,
                verdict: Verdict::Stable {
                    alpha_floor: first.alpha,
                },
                trace,
            });
        }
        s_lo *= 1e-2;
        h_lo = eval(s_lo)?.0;
    }

    let mut s_hi = scale.max(s_lo);
    let (mut h_hi, _) = eval(s_hi)?;
    let mut doublings = 0;
    while h_hi <= 0.0 {
        if doublings == MAX_DOUBLINGS {
            return Err(GrowthError::BracketFailure { s_hi });
        }
        s_lo = s_hi;
        h_lo = h_hi;
        s_hi *= 2.0;
        h_hi = eval(s_hi)?.0;
        doublings += 1;
    }

    while s_hi - s_lo > opts.s_rel_tol * s_hi {
        let mid = 0.5 * (s_lo + s_hi);
        if mid <= s_lo || mid >= s_hi {
            break;
        }
        let (h, _) = eval(mid)?;
        if h < 0.0 {
            s_lo = mid;
            h_lo = h;
        } else {
            s_hi = mid;
            h_hi = h;
        }
    }
    // secant point inside the final bracket
    let mut s_star = s_lo - h_lo * (s_hi - s_lo) / (h_hi - h_lo);
    if !(s_star > s_lo && s_star < s_hi) {
        s_star = 0.5 * (s_lo + s_hi);
    }
    let (_, at_star) = eval(s_star)?;
    Ok(GrowthRate {
        xi_abs,
        verdict: Verdict::Unstable {
            lambda: s_star,
            s_star,
            alpha_at_star: at_star.alpha,
            psi: at_star.psi,
            multiplicity: at_star.multiplicity,
        },
        trace,
    })
}

/// Growth rates for a list of frequencies. Frequencies sharing a bit-identical
/// magnitude are solved once. Work is spread over the current rayon pool and
/// collected in input order, so results do not depend on the thread count.
pub fn dispersion_curve(mesh: &Mesh, cfg: &FluidConfig, frequencies: &[Frequency]) -> Vec<DispersionPoint> {
    dispersion_curve_opts(mesh, cfg, frequencies, &GrowthOptions::default())
}

pub fn dispersion_curve_opts(
    mesh: &Mesh,
    cfg: &FluidConfig,
    frequencies: &[Frequency],
    opts: &GrowthOptions,
) -> Vec<DispersionPoint> {
    let mut unique: BTreeMap<u64, f64> = BTreeMap::new();
    for f in frequencies {
        unique.entry(f.magnitude.to_bits()).or_insert(f.magnitude);
    }
    let keys: Vec<(u64, f64)> = unique.into_iter().collect();
    let solved: Vec<(u64, Result<GrowthRate, GrowthError>)> = keys
        .par_iter()
        .map(|&(bits, mag)| (bits, growth_rate_opts(mesh, cfg, mag, opts)))
        .collect();
    let table: BTreeMap<u64, Result<GrowthRate, GrowthError>> = solved.into_iter().collect();
    frequencies
        .iter()
        .map(|f| DispersionPoint {
            xi: *f,
            outcome: table[&f.magnitude.to_bits()].clone(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SharpMode {
    LatticeMax,
    ContinuousEnvelope,
}

/// How a zero-tension shell scan ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub shells_scanned: usize,
    pub last_xi: f64,
    pub cap_xi: f64,
    pub stop_count: usize,
    pub stop_fraction: f64,
    /// The scan reached the cap before the stopping rule fired.
    pub hit_cap: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharpRate {
    /// The rate used downstream; equal to `lattice_max`.
    pub value: f64,
    pub lattice_max: f64,
    /// Supremum estimate over continuous `|xi|`, never below `lattice_max`.
    pub continuous_envelope: f64,
    /// Where the envelope maximum was located.
    pub envelope_xi: f64,
    pub achieved_at: Option<Frequency>,
    pub mode: SharpMode,
    pub truncation: Option<Truncation>,
}

fn rate_or_zero(mesh: &Mesh, cfg: &FluidConfig, xi: f64, opts: &GrowthOptions) -> Result<f64, GrowthError> {
    Ok(growth_rate_opts(mesh, cfg, xi, opts)?.verdict.lambda().unwrap_or(0.0))
}

/// Largest lambda among points; ties go to the smallest frequency in
/// [`Frequency::lattice_cmp`] order.
fn lattice_argmax(points: &[DispersionPoint]) -> Result<Option<(f64, Frequency)>, GrowthError> {
    let mut best: Option<(f64, Frequency)> = None;
    for p in points {
        let g = p.outcome.as_ref().map_err(Clone::clone)?;
        let Some(l) = g.verdict.lambda() else { continue };
        best = match best {
            None => Some((l, p.xi)),
            Some((bl, bf)) => {
                if l > bl || (l == bl && p.xi.lattice_cmp(&bf).is_lt()) {
                    Some((l, p.xi))
                } else {
                    Some((bl, bf))
                }
            }
        };
    }
    Ok(best)
}

/// Max of lambda over `[lo, hi]`: a log-spaced scan followed by a
/// golden-section search (in `log |xi|`) around the best sample.
fn envelope_max(mesh: &Mesh, cfg: &FluidConfig, lo: f64, hi: f64, opts: &GrowthOptions) -> Result<(f64, f64), GrowthError> {
    let (a, b) = (lo.ln(), hi.ln());
    let grid: Vec<f64> = (0..ENVELOPE_POINTS)
        .map(|i| (a + (b - a) * i as f64 / (ENVELOPE_POINTS - 1) as f64).exp())
        .collect();
    let values: Vec<f64> = grid
        .par_iter()
        .map(|&x| rate_or_zero(mesh, cfg, x, opts))
        .collect::<Result<_, _>>()?;
    let (mut ibest, mut vbest) = (0, values[0]);
    for (i, &v) in values.iter().enumerate() {
        if v > vbest {
            ibest = i;
            vbest = v;
        }
    }
    let mut xbest = grid[ibest];
    if vbest <= 0.0 {
        return Ok((0.0, xbest));
    }
    let mut l = grid[ibest.saturating_sub(1)].ln();
    let mut r = grid[(ibest + 1).min(grid.len() - 1)].ln();
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = r - inv_phi * (r - l);
    let mut x2 = l + inv_phi * (r - l);
    let mut f1 = rate_or_zero(mesh, cfg, x1.exp(), opts)?;
    let mut f2 = rate_or_zero(mesh, cfg, x2.exp(), opts)?;
    for _ in 0..GOLDEN_ITERS {
        if r - l < 1e-9 {
            break;
        }
        if f1 < f2 {
            l = x1;
            x1 = x2;
            f1 = f2;
            x2 = l + inv_phi * (r - l);
            f2 = rate_or_zero(mesh, cfg, x2.exp(), opts)?;
        } else {
            r = x2;
            x2 = x1;
            f2 = f1;
            x1 = r - inv_phi * (r - l);
            f1 = rate_or_zero(mesh, cfg, x1.exp(), opts)?;
        }
    }
    for (x, f) in [(x1, f1), (x2, f2)] {
        if f > vbest {
            vbest = f;
            xbest = x.exp();
        }
    }
    Ok((vbest, xbest))
}

/// Sharp growth rate over the sub-critical lattice, with a continuous
/// envelope estimate alongside.
pub fn sharp_rate(mesh: &Mesh, cfg: &FluidConfig) -> Result<SharpRate, GrowthError> {
    sharp_rate_opts(mesh, cfg, &GrowthOptions::default())
}

pub fn sharp_rate_opts(mesh: &Mesh, cfg: &FluidConfig, opts: &GrowthOptions) -> Result<SharpRate, GrowthError> {
    let regime = classify_regime(cfg)?;
    if !regime.label.is_unstable() {
        return Err(GrowthError::NotUnstable(regime.label));
    }
    let ceiling = cfg.growth_ceiling();
    let spacing = cfg.min_lattice_spacing();

    let (lattice_best, env_lo, env_hi, truncation) = if cfg.sigma_minus > 0.0 {
        let xi_c = xi_critical(cfg)?;
        let freqs: Vec<Frequency> = lattice_frequencies(cfg, xi_c)
            .into_iter()
            .filter(|f| f.magnitude < xi_c)
            .collect();
        let points = dispersion_curve_opts(mesh, cfg, &freqs, opts);
        (lattice_argmax(&points)?, 1e-3 * xi_c.min(spacing), xi_c * (1.0 - 1e-6), None)
    } else {
        let cap = SHELL_CAP_SPACINGS * spacing;
        let (best, trunc) = shell_scan(mesh, cfg, cap, opts)?;
        (best, 1e-3 * spacing, cap, Some(trunc))
    };

    let (lattice_max, achieved_at) = match lattice_best {
        Some((l, f)) => (l, Some(f)),
        None => (0.0, None),
    };
    let (env, env_xi) = envelope_max(mesh, cfg, env_lo, env_hi, opts)?;
    let (continuous_envelope, envelope_xi) = if env >= lattice_max {
        (env, env_xi)
    } else {
        (lattice_max, achieved_at.map_or(env_xi, |f| f.magnitude))
    };
    for value in [lattice_max, continuous_envelope] {
        if value > ceiling + 1e-8 {
            return Err(GrowthError::CeilingViolated { value, ceiling });
        }
    }
    Ok(SharpRate {
        value: lattice_max,
        lattice_max,
        continuous_envelope,
        envelope_xi,
        achieved_at,
        mode: SharpMode::LatticeMax,
        truncation,
    })
}

/// Walks lattice shells outward until the growth rate has fallen for
/// [`SHELL_STOP_COUNT`] consecutive shells, each below
/// [`SHELL_STOP_FRACTION`] of the running maximum, or the cap is reached.
fn shell_scan(
    mesh: &Mesh,
    cfg: &FluidConfig,
    cap: f64,
    opts: &GrowthOptions,
) -> Result<(Option<(f64, Frequency)>, Truncation), GrowthError> {
    let all = lattice_frequencies(cfg, cap);
    let mut shells: Vec<Vec<Frequency>> = Vec::new();
    for f in all {
        match shells.last_mut() {
            Some(shell) if shell[0].magnitude.to_bits() == f.magnitude.to_bits() => shell.push(f),
            _ => shells.push(vec![f]),
        }
    }
    let mut best: Option<(f64, Frequency)> = None;
    let mut prev = f64::NAN;
    let mut run = 0;
    let mut scanned = 0;
    let mut last_xi = 0.0;
    for batch in shells.chunks(SHELL_BATCH) {
        let rates: Vec<f64> = batch
            .par_iter()
            .map(|shell| rate_or_zero(mesh, cfg, shell[0].magnitude, opts))
            .collect::<Result<_, _>>()?;
        for (shell, &l) in batch.iter().zip(&rates) {
            scanned += 1;
            last_xi = shell[0].magnitude;
            // shells are sorted by lattice_cmp, so shell[0] wins ties
            if l > 0.0 && best.map_or(true, |(bl, _)| l > bl) {
                best = Some((l, shell[0]));
            }
            let running = best.map_or(0.0, |b| b.0);
            if l < prev && l < SHELL_STOP_FRACTION * running {
                run += 1;
            } else {
                run = 0;
            }
            prev = l;
            if run >= SHELL_STOP_COUNT {
                return Ok((
                    best,
                    Truncation {
                        shells_scanned: scanned,
                        last_xi,
                        cap_xi: cap,
                        stop_count: SHELL_STOP_COUNT,
                        stop_fraction: SHELL_STOP_FRACTION,
                        hit_cap: false,
                    },
                ));
            }
        }
    }
    log::warn!("shell scan reached the cap |xi| = {cap} before the stopping rule fired");
    Ok((
        best,
        Truncation {
            shells_scanned: scanned,
            last_xi,
            cap_xi: cap,
            stop_count: SHELL_STOP_COUNT,
            stop_fraction: SHELL_STOP_FRACTION,
            hit_cap: true,
        },
    ))
}

/// `sqrt(2|xi| g [rho] / rho_-)`, the small-wavenumber bound.
pub fn small_xi_bound(cfg: &FluidConfig, xi_abs: f64) -> f64 {
    (2.0 * cfg.g * jump_density(cfg).max(0.0) * xi_abs / cfg.rho_minus).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::build_mesh;

    fn reference() -> FluidConfig {
        FluidConfig {
            rho_plus: 2.0,
            rho_minus: 1.0,
            mu_plus: 1.0,
            mu_minus: 1.0,
            g: 1.0,
            sigma_plus: 0.0,
            sigma_minus: 0.0,
            b: 1.0,
            l1: 1.0,
            l2: 1.0,
        }
    }

    fn unstable_parts(g: &GrowthRate) -> (f64, f64, f64) {
        match &g.verdict {
            Verdict::Unstable {
                lambda,
                s_star,
                alpha_at_star,
                ..
            } => (*lambda, *s_star, *alpha_at_star),
            Verdict::Stable { .. } => panic!("expected unstable"),
        }
    }

    #[test]
    fn reference_is_unstable_below_ceiling() {
        let mesh = build_mesh(1.0, 16, 16).unwrap();
        let g = growth_rate(&mesh, &reference(), 1.0).unwrap();
        let (lambda, s_star, alpha) = unstable_parts(&g);
        assert!(lambda > 0.0 && lambda <= 0.25);
        assert_eq!(lambda, s_star);
        assert!((alpha + s_star * s_star).abs() <= 1e-9);
    }

    #[test]
    fn trace_signs_are_monotone() {
        let mesh = build_mesh(1.0, 16, 16).unwrap();
        let g = growth_rate(&mesh, &reference(), 2.0).unwrap();
        let (root, _, _) = unstable_parts(&g);
        for p in &g.trace {
            if p.s < root * (1.0 - 1e-9) {
                assert!(p.h < 0.0, "{p:?}");
            } else if p.s > root * (1.0 + 1e-9) {
                assert!(p.h > 0.0, "{p:?}");
            }
        }
        let mut sorted = g.trace.clone();
        sorted.sort_by(|a, b| a.s.total_cmp(&b.s));
        for w in sorted.windows(2) {
            if w[1].s > w[0].s {
                assert!(w[1].h >= w[0].h - 1e-14);
            }
        }
    }

    #[test]
    fn light_on_top_is_stable() {
        let mesh = build_mesh(1.0, 8, 8).unwrap();
        let cfg = FluidConfig {
            rho_plus: 1.0,
            rho_minus: 3.0,
            ..reference()
        };
        let g = growth_rate(&mesh, &cfg, 1.0).unwrap();
        assert!(matches!(g.verdict, Verdict::Stable { alpha_floor } if alpha_floor >= 0.0));
    }

    #[test]
    fn supercritical_wavenumber_is_stable() {
        let mesh = build_mesh(1.0, 8, 8).unwrap();
        let cfg = FluidConfig {
            sigma_plus: 0.5,
            sigma_minus: 0.25,
            ..reference()
        };
        // |xi|_c = sqrt(g [rho] / sigma_-) = 2
        for xi in [2.0, 2.5, 4.0] {
            assert!(!growth_rate(&mesh, &cfg, xi).unwrap().verdict.is_unstable());
        }
        assert!(growth_rate(&mesh, &cfg, 1.0).unwrap().verdict.is_unstable());
    }

    #[test]
    fn equal_magnitudes_share_results() {
        let mesh = build_mesh(1.0, 8, 8).unwrap();
        let cfg = reference();
        let freqs = vec![
            Frequency::from_indices(3, 4, &cfg),
            Frequency::from_indices(5, 0, &cfg),
            Frequency::from_indices(1, 0, &cfg),
            Frequency::from_indices(0, -5, &cfg),
        ];
        let pts = dispersion_curve(&mesh, &cfg, &freqs);
        assert_eq!(pts.len(), 4);
        assert_eq!(pts[0].lambda(), pts[1].lambda());
        assert_eq!(pts[0].lambda(), pts[3].lambda());
        assert_ne!(pts[0].lambda(), pts[2].lambda());
    }

    #[test]
    fn sharp_rate_requires_instability() {
        let mesh = build_mesh(1.0, 4, 4).unwrap();
        let cfg = FluidConfig {
            rho_plus: 0.5,
            ..reference()
        };
        assert!(matches!(sharp_rate(&mesh, &cfg), Err(GrowthError::NotUnstable(_))));
    }

    #[test]
    fn single_subcritical_shell() {
        // sigma_c = 1; with sigma_- = 0.5, |xi|_c = sqrt(2): only the |xi| = 1 shell.
        let mesh = build_mesh(1.0, 8, 8).unwrap();
        let cfg = FluidConfig {
            sigma_plus: 1.0,
            sigma_minus: 0.5,
            ..reference()
        };
        let sr = sharp_rate(&mesh, &cfg).unwrap();
        let direct = growth_rate(&mesh, &cfg, 1.0).unwrap().verdict.lambda().unwrap();
        assert_eq!(sr.lattice_max, direct);
        let at = sr.achieved_at.unwrap();
        assert_eq!((at.n1, at.n2), (-1, 0));
        assert!(sr.lattice_max <= sr.continuous_envelope + 1e-8);
        assert!(sr.truncation.is_none());
    }

    #[test]
    fn zero_tension_scan_stops_and_brackets() {
        let mesh = build_mesh(1.0, 8, 8).unwrap();
        let cfg = reference();
        let sr = sharp_rate(&mesh, &cfg).unwrap();
        let t = sr.truncation.clone().unwrap();
        assert!(!t.hit_cap);
        assert!(sr.lattice_max <= sr.continuous_envelope);
        assert!(sr.continuous_envelope / 2.0 < sr.lattice_max);
        assert!(sr.continuous_envelope <= cfg.growth_ceiling() + 1e-8);
    }
}
