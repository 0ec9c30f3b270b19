//! Growing normal modes: horizontal velocity and pressure profiles recovered
//! from `psi`, 3-D field sampling, and the linear energy identity.
//!
//! The complex mode is
//!
//! ```text
//! w = (-i phi, -i theta, psi) e^{i x'.xi},   p = pi e^{i x'.xi},   eta_± = psi(±) / lambda
//! ```
//!
//! times `e^{lambda t}`; sampled fields are its real part.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretize::{
    eval_all_in_element, form_values, DiscretizeError, FormValues, Mesh, Profile, Side, GAUSS4,
};
use crate::growth::{DispersionPoint, GrowthError, Verdict};
use crate::params::{jump_density, FluidConfig, Frequency};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModeError {
    #[error("frequency ({n1}, {n2}) is not unstable")]
    NotUnstable { n1: i64, n2: i64 },
    #[error("growth rate failed: {0}")]
    Growth(#[from] GrowthError),
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error("grid needs at least 2 points per direction, got {0:?}")]
    BadGrid([usize; 3]),
    #[error("time must be finite and nonnegative, got {0}")]
    BadTime(f64),
}

/// The rotated-frame horizontal profile `phi_|xi| = -psi' / |xi|`, kept as a
/// view on `psi` (it is only C⁰, so it has no exact Hermite representation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeProfile {
    pub psi: Profile,
    pub xi_abs: f64,
}

impl SlopeProfile {
    /// `deriv`-th derivative at `x3`, `deriv <= 2`.
    pub fn evaluate(&self, mesh: &Mesh, x3: f64, deriv: usize, side: Side) -> Result<f64, DiscretizeError> {
        if deriv > 2 {
            return Err(DiscretizeError::BadOrder(deriv));
        }
        let e = mesh.locate(x3, side)?;
        Ok(-eval_all_in_element(&self.psi, mesh, e, x3)[deriv + 1] / self.xi_abs)
    }
}

/// `(phi, theta) = R_xi^-1 (phi_|xi|, 0)` at one point, from `psi'(x3)`.
pub fn recover_horizontal(psi_prime: f64, xi: &Frequency) -> (f64, f64) {
    let phi_mag = -psi_prime / xi.magnitude;
    (xi.xi1 / xi.magnitude * phi_mag, xi.xi2 / xi.magnitude * phi_mag)
}

/// Pressure profile `pi` with its jump across `x3 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureProfile {
    /// Values at the mesh nodes; at the interface node this is `pi(0+)`.
    pub nodal: Vec<f64>,
    /// `pi(0-)`.
    pub interface_lower: f64,
    /// `pi(0+) - pi(0-)`.
    pub jump: f64,
    /// `(x3, pi)` at every quadrature point, bottom to top.
    pub samples: Vec<(f64, f64)>,
}

/// Integrates `pi' = -lambda rho psi - mu (|xi|^2 psi - psi'')` downward from
/// the free-surface value. Exact for the discrete `psi`: `psi` is integrated by
/// Gauss quadrature, `psi''` through `psi'` differences.
pub fn recover_pressure(
    psi: &Profile,
    mesh: &Mesh,
    cfg: &FluidConfig,
    xi_abs: f64,
    lambda: f64,
) -> PressureProfile {
    let k2 = xi_abs * xi_abs;
    let nodes = mesh.nodes();
    let top = nodes.len() - 1;
    let slope = |e: usize, x: f64| eval_all_in_element(psi, mesh, e, x)[1];
    let value = |e: usize, x: f64| eval_all_in_element(psi, mesh, e, x)[0];

    let mut nodal = vec![0.0; nodes.len()];
    let e_top = mesh.n_elements() - 1;
    let (psi1, dpsi1) = (value(e_top, 1.0), slope(e_top, 1.0));
    nodal[top] = 2.0 * cfg.mu_plus * dpsi1 + (cfg.g * cfg.rho_plus + cfg.sigma_plus * k2) * psi1 / lambda;

    let i0 = mesh.interface_node();
    let e0 = i0; // first upper element
    let (psi0, dpsi0) = (value(e0, 0.0), slope(e0, 0.0));
    let jump = (cfg.g * jump_density(cfg) - cfg.sigma_minus * k2) * psi0 / lambda
        + 2.0 * (cfg.mu_plus - cfg.mu_minus) * dpsi0;

    let mut interface_lower = f64::NAN;
    let mut upper_value = nodal[top];
    for e in (0..mesh.n_elements()).rev() {
        let (xa, xb) = mesh.element_bounds(e);
        let below = upper_value + element_drop(psi, mesh, cfg, e, xa, xb, k2, lambda);
        nodal[e] = below;
        upper_value = below;
        if e == e0 {
            interface_lower = below - jump;
            upper_value = interface_lower;
        }
    }

    let mut pi = PressureProfile {
        nodal,
        interface_lower,
        jump,
        samples: Vec::new(),
    };
    let mut samples = Vec::with_capacity(4 * mesh.n_elements());
    for e in 0..mesh.n_elements() {
        let (xa, xb) = mesh.element_bounds(e);
        for &(t, _) in &GAUSS4 {
            let x = xa + t * (xb - xa);
            samples.push((x, pressure_in_element(&pi, psi, mesh, cfg, e, x, k2, lambda)));
        }
    }
    pi.samples = samples;
    pi
}

/// `pi(xa) - pi(xb)` within element `e` for `[xa, xb]` inside it.
#[allow(clippy::too_many_arguments)]
fn element_drop(psi: &Profile, mesh: &Mesh, cfg: &FluidConfig, e: usize, xa: f64, xb: f64, k2: f64, lambda: f64) -> f64 {
    let upper = mesh.element_is_upper(e);
    let (rho, mu) = (cfg.rho_at(upper), cfg.mu_at(upper));
    let len = xb - xa;
    let mut int_psi = 0.0;
    for &(t, w) in &GAUSS4 {
        int_psi += w * len * eval_all_in_element(psi, mesh, e, xa + t * len)[0];
    }
    let dpsi = eval_all_in_element(psi, mesh, e, xb)[1] - eval_all_in_element(psi, mesh, e, xa)[1];
    (lambda * rho + mu * k2) * int_psi - mu * dpsi
}

#[allow(clippy::too_many_arguments)]
fn pressure_in_element(
    pi: &PressureProfile,
    psi: &Profile,
    mesh: &Mesh,
    cfg: &FluidConfig,
    e: usize,
    x3: f64,
    k2: f64,
    lambda: f64,
) -> f64 {
    let (_, xb) = mesh.element_bounds(e);
    let top_value = if e + 1 == mesh.interface_node() {
        pi.interface_lower
    } else {
        pi.nodal[e + 1]
    };
    top_value + element_drop(psi, mesh, cfg, e, x3, xb, k2, lambda)
}

/// A reconstructed growing mode at one lattice frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMode {
    pub xi: Frequency,
    pub lambda: f64,
    pub psi: Profile,
    pub phi_mag: SlopeProfile,
    pub pi: PressureProfile,
    pub eta_plus: Complex64,
    pub eta_minus: Complex64,
    pub forms: FormValues,
    /// `lambda^2 J + lambda E1 + E0`.
    pub energy_residual: f64,
    pub mesh: Mesh,
    pub cfg: FluidConfig,
}

/// Builds the mode from an unstable dispersion point.
pub fn build_mode(point: &DispersionPoint, mesh: &Mesh, cfg: &FluidConfig) -> Result<NormalMode, ModeError> {
    let growth = point.outcome.as_ref().map_err(|e| ModeError::Growth(e.clone()))?;
    let (lambda, psi) = match &growth.verdict {
        Verdict::Unstable { lambda, psi, .. } => (*lambda, psi.clone()),
        Verdict::Stable { .. } => {
            return Err(ModeError::NotUnstable {
                n1: point.xi.n1,
                n2: point.xi.n2,
            })
        }
    };
    Ok(assemble_mode(point.xi, lambda, psi, mesh, cfg))
}

fn assemble_mode(xi: Frequency, lambda: f64, psi: Profile, mesh: &Mesh, cfg: &FluidConfig) -> NormalMode {
    let k = xi.magnitude;
    let pi = recover_pressure(&psi, mesh, cfg, k, lambda);
    let last = mesh.n_elements() - 1;
    let psi1 = eval_all_in_element(&psi, mesh, last, 1.0)[0];
    let psi0 = eval_all_in_element(&psi, mesh, mesh.interface_node(), 0.0)[0];
    let forms = form_values(mesh, cfg, k, &psi);
    let energy_residual = lambda * lambda * forms.j + lambda * forms.e1 + forms.e0;
    NormalMode {
        xi,
        lambda,
        phi_mag: SlopeProfile {
            psi: psi.clone(),
            xi_abs: k,
        },
        psi,
        pi,
        eta_plus: Complex64::new(psi1 / lambda, 0.0),
        eta_minus: Complex64::new(psi0 / lambda, 0.0),
        forms,
        energy_residual,
        mesh: mesh.clone(),
        cfg: *cfg,
    }
}

/// Profile values at one height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModalValues {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub pi: f64,
}

impl NormalMode {
    /// `[psi, psi', psi'', psi''']`; orders 2 and 3 are one-sided at nodes.
    pub fn psi_derivatives(&self, x3: f64, side: Side) -> Result<[f64; 4], ModeError> {
        let e = self.mesh.locate(x3, side)?;
        Ok(eval_all_in_element(&self.psi, &self.mesh, e, x3))
    }

    pub fn pressure_at(&self, x3: f64, side: Side) -> Result<f64, ModeError> {
        let e = self.mesh.locate(x3, side)?;
        let k = self.xi.magnitude;
        Ok(pressure_in_element(&self.pi, &self.psi, &self.mesh, &self.cfg, e, x3, k * k, self.lambda))
    }

    pub fn profiles_at(&self, x3: f64, side: Side) -> Result<ModalValues, ModeError> {
        let d = self.psi_derivatives(x3, side)?;
        let (phi, theta) = recover_horizontal(d[1], &self.xi);
        Ok(ModalValues {
            phi,
            theta,
            psi: d[0],
            pi: self.pressure_at(x3, side)?,
        })
    }

    /// Real velocity `(u1, u2, u3)` at `(x1, x2, x3)` and time `t`.
    pub fn velocity_at(&self, x: [f64; 3], t: f64) -> Result<[f64; 3], ModeError> {
        let v = self.profiles_at(x[2], Side::Left)?;
        let arg = self.xi.xi1 * x[0] + self.xi.xi2 * x[1];
        let g = (self.lambda * t).exp();
        Ok([v.phi * arg.sin() * g, v.theta * arg.sin() * g, v.psi * arg.cos() * g])
    }

    /// Pressure `pi(x3) (cos x'.xi) e^{lambda t}`; lower side at the interface.
    pub fn pressure_field_at(&self, x: [f64; 3], t: f64) -> Result<f64, ModeError> {
        let arg = self.xi.xi1 * x[0] + self.xi.xi2 * x[1];
        Ok(self.pressure_at(x[2], Side::Left)? * arg.cos() * (self.lambda * t).exp())
    }

    /// `(eta_+, eta_-)` at `x'` and time `t`.
    pub fn surfaces_at(&self, x1: f64, x2: f64, t: f64) -> (f64, f64) {
        let phase = Complex64::from_polar((self.lambda * t).exp(), self.xi.xi1 * x1 + self.xi.xi2 * x2);
        ((self.eta_plus * phase).re, (self.eta_minus * phase).re)
    }

    /// Rotated-frame x-momentum residual
    /// `lambda^2 rho phi + mu lambda (|xi|^2 phi - phi'') - lambda |xi| pi`
    /// at every quadrature point, RMS, relative to the RMS of `lambda |xi| pi`.
    pub fn momentum_residual(&self) -> f64 {
        let k = self.xi.magnitude;
        let (mut num, mut den) = (0.0, 0.0);
        let mut idx = 0;
        for e in 0..self.mesh.n_elements() {
            let (xa, xb) = self.mesh.element_bounds(e);
            let upper = self.mesh.element_is_upper(e);
            let (rho, mu) = (self.cfg.rho_at(upper), self.cfg.mu_at(upper));
            for &(t, _) in &GAUSS4 {
                let x = xa + t * (xb - xa);
                let d = eval_all_in_element(&self.psi, &self.mesh, e, x);
                let (phi, phi2) = (-d[1] / k, -d[3] / k);
                let pi = self.pi.samples[idx].1;
                idx += 1;
                let r = self.lambda * self.lambda * rho * phi + mu * self.lambda * (k * k * phi - phi2)
                    - self.lambda * k * pi;
                num += r * r;
                den += (self.lambda * k * pi).powi(2);
            }
        }
        if den == 0.0 {
            0.0
        } else {
            (num / den).sqrt()
        }
    }

    /// `pi` from `lambda |xi|^2 pi = -(lambda^2 rho psi' + lambda mu (|xi|^2 psi' - psi'''))`
    /// at the stored quadrature points.
    pub fn pressure_from_slope(&self) -> Vec<(f64, f64)> {
        let k2 = self.xi.magnitude.powi(2);
        let mut out = Vec::with_capacity(self.pi.samples.len());
        for e in 0..self.mesh.n_elements() {
            let (xa, xb) = self.mesh.element_bounds(e);
            let upper = self.mesh.element_is_upper(e);
            let (rho, mu) = (self.cfg.rho_at(upper), self.cfg.mu_at(upper));
            for &(t, _) in &GAUSS4 {
                let x = xa + t * (xb - xa);
                let d = eval_all_in_element(&self.psi, &self.mesh, e, x);
                out.push((x, -(self.lambda * rho * d[1] + mu * (k2 * d[1] - d[3])) / k2));
            }
        }
        out
    }

    /// Tangential-stress residuals `(mu_+ (|xi| psi - phi')(1), [mu (|xi| psi - phi')](0))`
    /// in the rotated frame, each times `lambda`.
    pub fn tangential_stress(&self) -> (f64, f64) {
        let k = self.xi.magnitude;
        let last = self.mesh.n_elements() - 1;
        let i0 = self.mesh.interface_node();
        // phi' = -psi'' / k, so |xi| psi - phi' = (k^2 psi + psi'') / k
        let shear = |e: usize, x: f64, mu: f64| {
            let d = eval_all_in_element(&self.psi, &self.mesh, e, x);
            self.lambda * mu * (k * k * d[0] + d[2]) / k
        };
        let top = shear(last, 1.0, self.cfg.mu_plus);
        let jump = shear(i0, 0.0, self.cfg.mu_plus) - shear(i0 - 1, 0.0, self.cfg.mu_minus);
        (top, jump)
    }

    /// Scale for the tangential-stress check: `lambda mu_max |xi| max|psi|`.
    pub fn stress_scale(&self) -> f64 {
        let k = self.xi.magnitude;
        let psi_max = self
            .psi
            .coeffs
            .iter()
            .step_by(2)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        self.lambda * self.cfg.mu_plus.max(self.cfg.mu_minus) * k * psi_max
    }

    /// `(|u|_0^2 + |eta|_0^2)^(1/2)` at `t = 0` over one horizontal period
    /// cell, computed by quadrature.
    pub fn norm0(&self) -> f64 {
        let area = 4.0 * PI * PI * self.cfg.l1 * self.cfg.l2;
        let mut vel = 0.0;
        for e in 0..self.mesh.n_elements() {
            let (xa, xb) = self.mesh.element_bounds(e);
            for &(t, w) in &GAUSS4 {
                let d = eval_all_in_element(&self.psi, &self.mesh, e, xa + t * (xb - xa));
                let phi_mag = d[1] / self.xi.magnitude;
                vel += w * (xb - xa) * (phi_mag * phi_mag + d[0] * d[0]);
            }
        }
        // mean of sin^2 and cos^2 over the cell is 1/2
        let sq = 0.5 * area * (vel + self.eta_plus.norm_sqr() + self.eta_minus.norm_sqr());
        sq.sqrt()
    }

    /// Copy scaled so that `norm0() == 1`.
    pub fn renormalized(&self) -> NormalMode {
        self.scaled(1.0 / self.norm0())
    }

    /// The same mode times a real factor.
    pub fn scaled(&self, factor: f64) -> NormalMode {
        assemble_mode(self.xi, self.lambda, self.psi.scaled(factor), &self.mesh, &self.cfg)
    }

    /// Largest surface amplitude `max(|eta_+|, |eta_-|)` at `t = 0`.
    pub fn surface_amplitude(&self) -> f64 {
        self.eta_plus.norm().max(self.eta_minus.norm())
    }
}

/// Grid resolution for [`sample_fields`]: `n1 x n2` points over one period
/// cell, `n3` points on `[-b, 1]` including both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.n1 * self.n2 * self.n3
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of `(i1, i2, i3)`; `i1` varies fastest.
    pub fn index(&self, i1: usize, i2: usize, i3: usize) -> usize {
        (i3 * self.n2 + i2) * self.n1 + i1
    }

    pub fn axes(&self, cfg: &FluidConfig) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let x1 = (0..self.n1).map(|i| 2.0 * PI * cfg.l1 * i as f64 / self.n1 as f64).collect();
        let x2 = (0..self.n2).map(|i| 2.0 * PI * cfg.l2 * i as f64 / self.n2 as f64).collect();
        let x3 = (0..self.n3)
            .map(|i| {
                if i + 1 == self.n3 {
                    1.0
                } else {
                    -cfg.b + (1.0 + cfg.b) * i as f64 / (self.n3 - 1) as f64
                }
            })
            .collect();
        (x1, x2, x3)
    }
}

/// Real fields of a mode on a tensor grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub grid: GridSpec,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub x3: Vec<f64>,
    /// Velocity components, each indexed by [`GridSpec::index`].
    pub u: [Vec<f64>; 3],
    pub p_tilde: Vec<f64>,
    /// Surface samples on `n1 x n2`, index `i2 * n1 + i1`.
    pub eta_plus: Vec<f64>,
    pub eta_minus: Vec<f64>,
    pub time: f64,
}

impl FieldSample {
    /// Discrete L² norm of `(eta_+, eta_-)` (unweighted mean square).
    pub fn eta_norm(&self) -> f64 {
        let n = self.eta_plus.len() as f64;
        let s: f64 = self.eta_plus.iter().chain(&self.eta_minus).map(|v| v * v).sum();
        (s / n).sqrt()
    }

    pub fn velocity_norm(&self) -> f64 {
        let n = self.u[0].len() as f64;
        let s: f64 = self.u.iter().flatten().map(|v| v * v).sum();
        (s / n).sqrt()
    }
}

/// Samples the real mode at time `t`. At `x3 = 0` the pressure is taken from
/// the lower layer.
pub fn sample_fields(mode: &NormalMode, t: f64, grid: GridSpec) -> Result<FieldSample, ModeError> {
    if grid.n1 < 2 || grid.n2 < 2 || grid.n3 < 2 {
        return Err(ModeError::BadGrid([grid.n1, grid.n2, grid.n3]));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(ModeError::BadTime(t));
    }
    let (x1, x2, x3) = grid.axes(&mode.cfg);
    let growth = (mode.lambda * t).exp();
    let profiles: Vec<ModalValues> = x3
        .iter()
        .map(|&z| mode.profiles_at(z, Side::Left))
        .collect::<Result<_, _>>()?;
    let (mut sines, mut cosines) = (Vec::with_capacity(grid.n1 * grid.n2), Vec::with_capacity(grid.n1 * grid.n2));
    for &b in &x2 {
        for &a in &x1 {
            let arg = mode.xi.xi1 * a + mode.xi.xi2 * b;
            sines.push(arg.sin());
            cosines.push(arg.cos());
        }
    }
    let plane = grid.n1 * grid.n2;
    let slabs: Vec<[Vec<f64>; 4]> = profiles
        .par_iter()
        .map(|v| {
            let mut out: [Vec<f64>; 4] = Default::default();
            for o in out.iter_mut() {
                o.reserve(plane);
            }
            for j in 0..plane {
                out[0].push(v.phi * sines[j] * growth);
                out[1].push(v.theta * sines[j] * growth);
                out[2].push(v.psi * cosines[j] * growth);
                out[3].push(v.pi * cosines[j] * growth);
            }
            out
        })
        .collect();
    let mut u: [Vec<f64>; 3] = Default::default();
    let mut p = Vec::with_capacity(grid.len());
    for slab in slabs {
        let [a, b, c, d] = slab;
        u[0].extend(a);
        u[1].extend(b);
        u[2].extend(c);
        p.extend(d);
    }
    let eta_plus = cosines.iter().map(|c| mode.eta_plus.re * c * growth).collect();
    let eta_minus = cosines.iter().map(|c| mode.eta_minus.re * c * growth).collect();
    Ok(FieldSample {
        grid,
        x1,
        x2,
        x3,
        u,
        p_tilde: p,
        eta_plus,
        eta_minus,
        time: t,
    })
}

/// Relative residual of the linear energy identity
///
/// ```text
/// 1/2 d/dt ( ∫ rho |u_t|^2 + surface terms ) + 1/2 ∫ mu |D u_t|^2 = 0
/// ```
///
/// integrated over `[t0, t1]`. Every term is evaluated by its own quadrature
/// of the sampled profiles; the symmetric gradient is built from the complex
/// 3x3 velocity gradient in the original frame.
pub fn check_energy_identity(mode: &NormalMode, t0: f64, t1: f64) -> f64 {
    let lambda = mode.lambda;
    let k = mode.xi.magnitude;
    let cfg = &mode.cfg;
    let xi = [mode.xi.xi1, mode.xi.xi2];
    let (mut kinetic, mut dissipation) = (0.0, 0.0);
    for e in 0..mode.mesh.n_elements() {
        let (xa, xb) = mode.mesh.element_bounds(e);
        let h = xb - xa;
        let upper = mode.mesh.element_is_upper(e);
        let (rho, mu) = (cfg.rho_at(upper), cfg.mu_at(upper));
        for &(t, w) in &GAUSS4 {
            let d = eval_all_in_element(&mode.psi, &mode.mesh, e, xa + t * h);
            let (phi, theta) = recover_horizontal(d[1], &mode.xi);
            let (dphi, dtheta) = recover_horizontal(d[2], &mode.xi);
            // w = (-i phi, -i theta, psi) e^{i x'.xi}; grad[j][c] = d_j w_c
            let comps = [Complex64::new(0.0, -phi), Complex64::new(0.0, -theta), Complex64::new(d[0], 0.0)];
            let dz = [Complex64::new(0.0, -dphi), Complex64::new(0.0, -dtheta), Complex64::new(d[1], 0.0)];
            let mut grad = [[Complex64::new(0.0, 0.0); 3]; 3];
            for c in 0..3 {
                for j in 0..2 {
                    grad[j][c] = Complex64::new(0.0, xi[j]) * comps[c];
                }
                grad[2][c] = dz[c];
            }
            let mut sym = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    sym += (grad[a][b] + grad[b][a]).norm_sqr();
                }
            }
            // cell averages of sin^2, cos^2 are 1/2
            kinetic += w * h * rho * 0.5 * (phi * phi + theta * theta + d[0] * d[0]);
            dissipation += w * h * mu * 0.5 * sym;
        }
    }
    let last = mode.mesh.n_elements() - 1;
    let psi1 = eval_all_in_element(&mode.psi, &mode.mesh, last, 1.0)[0];
    let psi0 = eval_all_in_element(&mode.psi, &mode.mesh, mode.mesh.interface_node(), 0.0)[0];
    let surface = 0.5
        * ((cfg.sigma_plus * k * k + cfg.rho_plus * cfg.g) * psi1 * psi1
            + (cfg.sigma_minus * k * k - jump_density(cfg) * cfg.g) * psi0 * psi0);
    if kinetic == 0.0 && surface == 0.0 && dissipation == 0.0 {
        return 0.0;
    }
    // u_t = lambda u; all terms carry e^{2 lambda t}
    let g0 = (2.0 * lambda * t0).exp();
    let g1 = (2.0 * lambda * t1).exp();
    let energy_change = 0.5 * (lambda * lambda * kinetic + surface) * (g1 - g0);
    let dissipated = 0.5 * lambda * lambda * dissipation * (g1 - g0) / (2.0 * lambda);
    let scale = (0.5 * lambda * lambda * kinetic * (g1 - g0)).abs()
        + (0.5 * surface * (g1 - g0)).abs()
        + dissipated.abs();
    (energy_change + dissipated).abs() / scale
}
