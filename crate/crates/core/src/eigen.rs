//! Smallest eigenpair of `(s E1 + E0) psi = alpha J psi` on the clamped
//! profile space, i.e. the constrained minimum of `E(psi; s)` over `J(psi) = 1`.
//!
//! The default backend exploits the band structure: bisection on the shift
//! with band Cholesky as a definiteness test brackets the smallest
//! eigenvalue, shifted inverse iteration recovers the eigenvector, and the
//! Rayleigh quotient gives the final value. A dense backend (Cholesky
//! reduction plus symmetric QR) is kept for cross-checks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::band::{dot, norm2, BandSym};
use crate::discretize::{form_values, Mesh, ModalForms, Profile};
use crate::params::FluidConfig;

/// Eigenvalues closer than this (relative) count as one cluster.
pub const MULTIPLICITY_TOL: f64 = 1e-12;

const BRACKET_REL_WIDTH: f64 = 1e-7;
const INVERSE_ITER_MAX: usize = 200;
const RESIDUAL_TARGET: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("inertia form J is not positive definite")]
    NotDefinite,
    #[error("eigen iteration did not converge (relative residual {residual:.3e})")]
    NonConvergence { residual: f64 },
    #[error("could not bracket the smallest eigenvalue")]
    Bracket,
    #[error("invalid input: {0}")]
    Input(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EigenBackend {
    #[default]
    Banded,
    Dense,
}

/// Minimum of `E(.; |xi|, s)` over `J = 1` with its minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaResult {
    pub alpha: f64,
    /// Normalized so that `J(psi) = 1` and `psi(0) >= 0`.
    pub psi: Profile,
    /// `|(A - alpha B) psi| / ((|A| + |alpha| |B|) |psi|)` in max-row-sum norms.
    pub residual: f64,
    pub s: f64,
    pub xi_abs: f64,
    /// Number of eigenvalues within [`MULTIPLICITY_TOL`] of `alpha`.
    pub multiplicity: usize,
}

/// Assembled forms for one `(mesh, cfg, |xi|)`, reusable across `s`.
#[derive(Debug, Clone)]
pub struct ModalProblem {
    pub mesh: Mesh,
    pub cfg: FluidConfig,
    pub forms: ModalForms,
    pub backend: EigenBackend,
}

impl ModalProblem {
    pub fn new(mesh: &Mesh, cfg: &FluidConfig, xi_abs: f64) -> Self {
        ModalProblem {
            mesh: mesh.clone(),
            cfg: *cfg,
            forms: ModalForms::assemble(mesh, cfg, xi_abs),
            backend: EigenBackend::Banded,
        }
    }

    pub fn with_backend(mut self, backend: EigenBackend) -> Self {
        self.backend = backend;
        self
    }

    pub fn xi_abs(&self) -> f64 {
        self.forms.xi_abs
    }

    /// `alpha(|xi|; s)` and its minimizer.
    pub fn alpha(&self, s: f64) -> Result<AlphaResult, EigenError> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(EigenError::Input("s must be positive and finite"));
        }
        let a = self.forms.energy_matrix(s);
        let b = &self.forms.j.matrix;
        let (_, mut vec) = match self.backend {
            EigenBackend::Banded => smallest_eigenpair_banded(&a, b)?,
            EigenBackend::Dense => smallest_eigenpair_dense(&a, b)?,
        };
        apply_sign_convention(&self.mesh, &mut vec);
        // Rayleigh quotient from squared integrands: the matrix quadratic form
        // loses about eps / h^4 to cancellation, this only eps / h^2.
        let psi = Profile { coeffs: vec };
        let fv = form_values(&self.mesh, &self.cfg, self.xi_abs(), &psi);
        let alpha = fv.energy(s) / fv.j;
        let vec = psi.scaled(1.0 / fv.j.sqrt()).coeffs;
        let residual = relative_residual(&a, b, alpha, &vec);
        if !(residual <= 1e-9) {
            return Err(EigenError::NonConvergence { residual });
        }
        let multiplicity = cluster_size(&a, b, alpha);
        Ok(AlphaResult {
            alpha,
            psi: Profile { coeffs: vec },
            residual,
            s,
            xi_abs: self.xi_abs(),
            multiplicity,
        })
    }
}

/// Solves the constrained minimization at one `(|xi|, s)`.
pub fn solve_alpha(
    mesh: &Mesh,
    cfg: &FluidConfig,
    xi_abs: f64,
    s: f64,
) -> Result<AlphaResult, EigenError> {
    if !(xi_abs > 0.0) {
        return Err(EigenError::Input("|xi| must be positive"));
    }
    ModalProblem::new(mesh, cfg, xi_abs).alpha(s)
}

fn normalize_b(v: &mut [f64], b: &BandSym) {
    let n = b.quadratic(v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

/// `psi(0) >= 0`, falling back to `psi(1) >= 0` when `psi(0)` is negligible.
fn apply_sign_convention(mesh: &Mesh, v: &mut [f64]) {
    let i0 = mesh.dof(mesh.interface_node(), 0).expect("interface dof");
    let top = mesh.dof(mesh.nodes().len() - 1, 0).expect("top dof");
    let scale = norm2(v);
    let pivot = if v[i0].abs() >= 1e-14 * scale { v[i0] } else { v[top] };
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn relative_residual(a: &BandSym, b: &BandSym, alpha: f64, v: &[f64]) -> f64 {
    let av = a.mul_vec(v);
    let bv = b.mul_vec(v);
    let r: Vec<f64> = av.iter().zip(&bv).map(|(x, y)| x - alpha * y).collect();
    let scale = (a.norm_inf() + alpha.abs() * b.norm_inf()) * norm2(v);
    if scale == 0.0 {
        return 0.0;
    }
    norm2(&r) / scale
}

fn cluster_size(a: &BandSym, b: &BandSym, alpha: f64) -> usize {
    let delta = MULTIPLICITY_TOL * alpha.abs().max(1.0);
    let above = a.combine(1.0, b, -(alpha + delta)).negative_inertia();
    let below = a.combine(1.0, b, -(alpha - delta)).negative_inertia();
    above.saturating_sub(below).max(1)
}

fn is_definite(a: &BandSym, b: &BandSym, sigma: f64) -> bool {
    a.combine(1.0, b, -sigma).cholesky().is_some()
}

/// Smallest eigenpair of the band pencil `(a, b)` with `b` positive definite.
pub fn smallest_eigenpair_banded(a: &BandSym, b: &BandSym) -> Result<(f64, Vec<f64>), EigenError> {
    let n = a.dim();
    let b_chol = b.cholesky().ok_or(EigenError::NotDefinite)?;
    drop(b_chol);

    // Rayleigh quotients of the unit vectors bound alpha from above.
    let mut hi = a
        .diagonal()
        .iter()
        .zip(b.diagonal())
        .map(|(x, y)| x / y)
        .fold(f64::INFINITY, f64::min);
    if !hi.is_finite() {
        return Err(EigenError::Bracket);
    }
    let mut step = hi.abs().max(1.0);
    let mut lo = hi - step;
    let mut tries = 0;
    while !is_definite(a, b, lo) {
        hi = hi.min(lo);
        step *= 2.0;
        lo = hi - step;
        tries += 1;
        if tries > 200 {
            return Err(EigenError::Bracket);
        }
    }
    while hi - lo > BRACKET_REL_WIDTH * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if is_definite(a, b, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let shifted = a
        .combine(1.0, b, -lo)
        .cholesky()
        .ok_or(EigenError::Bracket)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) + 1.0).collect();
    normalize_b(&mut x, b);
    let scale = a.norm_inf() + hi.abs() * b.norm_inf();
    let mut best = (f64::INFINITY, 0.0, x.clone());
    for _ in 0..INVERSE_ITER_MAX {
        let rhs = b.mul_vec(&x);
        x = shifted.solve(&rhs);
        normalize_b(&mut x, b);
        let av = a.mul_vec(&x);
        let bv = b.mul_vec(&x);
        let rq = dot(&x, &av);
        let r: Vec<f64> = av.iter().zip(&bv).map(|(p, q)| p - rq * q).collect();
        let res = norm2(&r) / (scale * norm2(&x));
        if res < best.0 {
            best = (res, rq, x.clone());
        }
        if res < RESIDUAL_TARGET {
            break;
        }
    }
    let (res, rq, vec) = best;
    if !(res <= 1e-9) {
        return Err(EigenError::NonConvergence { residual: res });
    }
    Ok((rq, vec))
}

/// Dense reference: `C = L^-1 A L^-T` with `B = L L^T`, full symmetric
/// eigendecomposition, smallest eigenvalue.
pub fn smallest_eigenpair_dense(a: &BandSym, b: &BandSym) -> Result<(f64, Vec<f64>), EigenError> {
    let ad = a.to_dense();
    let bd = b.to_dense();
    let chol = bd.cholesky().ok_or(EigenError::NotDefinite)?;
    let l = chol.l();
    let linv_a = l
        .solve_lower_triangular(&ad)
        .ok_or(EigenError::NotDefinite)?;
    let c = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or(EigenError::NotDefinite)?;
    let c = 0.5 * (&c + c.transpose());
    let eig = c.symmetric_eigen();
    let (imin, &alpha) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .ok_or(EigenError::Bracket)?;
    let y = eig.eigenvectors.column(imin).into_owned();
    let psi = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or(EigenError::NotDefinite)?;
    // One Rayleigh-quotient refinement on the banded operators.
    let v: Vec<f64> = psi.iter().copied().collect();
    let rq = a.quadratic(&v) / b.quadratic(&v);
    let alpha = if rq.is_finite() { rq } else { alpha };
    Ok((alpha, v))
}

/// Dual norm of `(s E1 + E0 - alpha J) psi` against the clamped space
/// measured in the `E1 + J` inner product (an H² norm on profiles).
pub fn euler_lagrange_residual(res: &AlphaResult, mesh: &Mesh, cfg: &FluidConfig) -> f64 {
    let forms = ModalForms::assemble(mesh, cfg, res.xi_abs);
    residual_dual_norm(&forms, res.s, res.alpha, &res.psi)
}

/// Same as [`euler_lagrange_residual`] with explicit `(s, alpha, psi)`.
pub fn residual_dual_norm(forms: &ModalForms, s: f64, alpha: f64, psi: &Profile) -> f64 {
    let a = forms.energy_matrix(s);
    let av = a.mul_vec(&psi.coeffs);
    let jv = forms.j.matrix.mul_vec(&psi.coeffs);
    let r: Vec<f64> = av.iter().zip(&jv).map(|(x, y)| x - alpha * y).collect();
    dual_norm(forms, &r)
}

/// `sqrt(r^T G^-1 r)` with `G = E1 + J`.
pub fn dual_norm(forms: &ModalForms, r: &[f64]) -> f64 {
    let g = forms.e1.matrix.combine(1.0, &forms.j.matrix, 1.0);
    let chol = g.cholesky().expect("E1 + J is positive definite");
    let z = chol.solve(r);
    dot(r, &z).max(0.0).sqrt()
}

/// Options for [`oracle_alpha`].
#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub starts: usize,
    pub max_iter: usize,
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            starts: 32,
            max_iter: 10_000,
            initial_step: 1e-2,
            seed: 7,
        }
    }
}

/// Brute-force estimate of `inf { E : J = 1 }` by projected gradient descent
/// on the Rayleigh quotient from random starts. Independent of the eigen
/// solvers above: dense matrices, dense Cholesky of the metric, no
/// eigendecomposition. Returns the best value found, an upper bound on the
/// discrete infimum.
///
/// Gradients are taken in the `E1 + J` metric; each step starts from the
/// previous accepted step length (initially `initial_step`), halves until the
/// quotient decreases and doubles after success.
pub fn oracle_alpha(mesh: &Mesh, cfg: &FluidConfig, xi_abs: f64, s: f64, opts: OracleOptions) -> f64 {
    let forms = ModalForms::assemble(mesh, cfg, xi_abs);
    let a = forms.energy_matrix(s).to_dense();
    let bm = forms.j.matrix.to_dense();
    let g = forms.e1.matrix.to_dense() + &bm;
    let g_chol = g.cholesky().expect("metric is positive definite");
    let n = a.nrows();
    let quotient = |x: &nalgebra::DVector<f64>| (x.dot(&(&a * x))) / (x.dot(&(&bm * x)));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best = f64::INFINITY;
    for _ in 0..opts.starts {
        let mut x = nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let jn = x.dot(&(&bm * &x)).sqrt();
        x /= jn;
        let mut r = quotient(&x);
        let mut step = opts.initial_step;
        let mut stall = 0;
        for _ in 0..opts.max_iter {
            // gradient of E/J at J = 1 is 2 (A x - r B x); Riesz map through G
            let grad_l2 = 2.0 * (&a * &x - r * (&bm * &x));
            let grad = g_chol.solve(&grad_l2);
            let mut accepted = false;
            let mut trial_step = step;
            for _ in 0..60 {
                let mut y = &x - trial_step * &grad;
                let jn = y.dot(&(&bm * &y)).sqrt();
                y /= jn;
                let ry = quotient(&y);
                if ry < r {
                    let gain = r - ry;
                    x = y;
                    r = ry;
                    accepted = true;
                    step = (2.0 * trial_step).min(1e6);
                    if gain <= 1e-16 * r.abs().max(1.0) {
                        stall += 1;
                    } else {
                        stall = 0;
                    }
                    break;
                }
                trial_step *= 0.5;
            }
            if !accepted || stall > 20 {
                break;
            }
        }
        best = best.min(r);
    }
    best
}

/// Dense generalized eigenvalues (ascending); for diagnostics and tests.
pub fn all_eigenvalues_dense(a: &BandSym, b: &BandSym) -> Option<Vec<f64>> {
    let ad: DMatrix<f64> = a.to_dense();
    let chol = b.to_dense().cholesky()?;
    let l = chol.l();
    let x = l.solve_lower_triangular(&ad)?;
    let c = l.solve_lower_triangular(&x.transpose())?;
    let c = 0.5 * (&c + c.transpose());
    let mut ev: Vec<f64> = c.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Some(ev)
}
