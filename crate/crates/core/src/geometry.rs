//! Poisson extensions of surface functions and the flattening map that
//! carries the fixed slab `T² x (-b, 1)` onto the perturbed two-layer domain.
//!
//! ```text
//! upper:  Θ3 = x3 + x3² (η̄+ - (1 + 1/b) η̄-) + b̃ η̄-,   b̃ = 1 + x3 / b
//! lower:  Θ3 = x3 + b̃ η̄-
//! ```
//!
//! `η̄+` extends `η+` downward from `x3 = 1`; `η̄-` extends `η-` downward from
//! `x3 = 0` and upward through a combination of decaying exponentials whose
//! first `m` vertical derivatives match the downward one at the interface.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modes::{FieldSample, NormalMode};
use crate::params::FluidConfig;

/// Largest acceptable residual of the matching system.
pub const VANDERMONDE_TOL: f64 = 1e-8;
/// Default decay rates for the upward extension (`m = 4`).
pub const DEFAULT_DECAY_RATES: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("decay rates must be positive and strictly increasing")]
    BadRates,
    #[error("matching system residual {residual:.3e} exceeds {VANDERMONDE_TOL:.0e}")]
    IllConditioned { residual: f64 },
    #[error("zero-average surface function cannot carry a (0, 0) mode")]
    NonzeroMean,
    #[error("Jacobian {j_jac:.6e} is not positive at x = {x:?}")]
    DegenerateJacobian { x: [f64; 3], j_jac: f64 },
    #[error("point x3 = {0} is outside the extension's half-space")]
    OutsideHalfSpace(f64),
}

/// A finite Fourier sum `f(x') = Re Σ c_n e^{i ξ_n · x'}` with
/// `ξ_n = (n1 / L1, n2 / L2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceFunction {
    pub l1: f64,
    pub l2: f64,
    pub zero_average: bool,
    coeffs: BTreeMap<(i64, i64), Complex64>,
}

impl SurfaceFunction {
    pub fn new(l1: f64, l2: f64, zero_average: bool) -> Self {
        SurfaceFunction {
            l1,
            l2,
            zero_average,
            coeffs: BTreeMap::new(),
        }
    }

    /// Adds `c` to the amplitude of mode `(n1, n2)`.
    pub fn add_mode(&mut self, n1: i64, n2: i64, c: Complex64) -> Result<(), GeometryError> {
        if self.zero_average && n1 == 0 && n2 == 0 {
            return Err(GeometryError::NonzeroMean);
        }
        *self.coeffs.entry((n1, n2)).or_insert(Complex64::new(0.0, 0.0)) += c;
        Ok(())
    }

    pub fn with_mode(mut self, n1: i64, n2: i64, c: Complex64) -> Result<Self, GeometryError> {
        self.add_mode(n1, n2, c)?;
        Ok(self)
    }

    pub fn amplitude(&self, n1: i64, n2: i64) -> Complex64 {
        self.coeffs.get(&(n1, n2)).copied().unwrap_or_default()
    }

    pub fn modes(&self) -> impl Iterator<Item = ((i64, i64), Complex64)> + '_ {
        self.coeffs.iter().map(|(k, v)| (*k, *v))
    }

    /// Same function times a real factor.
    pub fn scaled(&self, factor: f64) -> SurfaceFunction {
        SurfaceFunction {
            l1: self.l1,
            l2: self.l2,
            zero_average: self.zero_average,
            coeffs: self.coeffs.iter().map(|(k, v)| (*k, v * factor)).collect(),
        }
    }

    fn wavevector(&self, n1: i64, n2: i64) -> (f64, f64) {
        (n1 as f64 / self.l1, n2 as f64 / self.l2)
    }

    /// `(f, ∂1 f, ∂2 f)` at `x'`.
    pub fn evaluate(&self, x1: f64, x2: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (&(n1, n2), &c) in &self.coeffs {
            let (k1, k2) = self.wavevector(n1, n2);
            let z = c * Complex64::from_polar(1.0, k1 * x1 + k2 * x2);
            let iz = Complex64::i() * z;
            out[0] += z.re;
            out[1] += k1 * iz.re;
            out[2] += k2 * iz.re;
        }
        out
    }
}

/// Coefficients of the upward extension: `Σ_j alpha_j (-lambda_j)^i = 1`
/// for `i = 0..=m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionCoeffs {
    pub decay_rates: Vec<f64>,
    pub alphas: Vec<f64>,
    pub m: usize,
    /// Max-norm residual of the matching system.
    pub residual: f64,
}

impl Default for ExtensionCoeffs {
    fn default() -> Self {
        vandermonde_coeffs(&DEFAULT_DECAY_RATES).expect("default rates are well conditioned")
    }
}

/// Solves `V(lambda_0..lambda_m) alpha = (1, .., 1)` with `V_ij = (-lambda_j)^i`.
///
/// The system says `Σ_j alpha_j p(-lambda_j) = p(1)` for every polynomial of
/// degree `<= m`, so `alpha_j` is the Lagrange basis polynomial for node
/// `-lambda_j` evaluated at 1:
/// `alpha_j = Π_{k != j} (1 + lambda_k) / (lambda_k - lambda_j)`.
pub fn vandermonde_coeffs(rates: &[f64]) -> Result<ExtensionCoeffs, GeometryError> {
    if rates.is_empty() || rates[0] <= 0.0 || rates.windows(2).any(|w| w[1] <= w[0]) || rates.iter().any(|r| !r.is_finite())
    {
        return Err(GeometryError::BadRates);
    }
    let alphas: Vec<f64> = (0..rates.len())
        .map(|j| {
            rates
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &lk)| (1.0 + lk) / (lk - rates[j]))
                .product()
        })
        .collect();
    let residual = vandermonde_residual(rates, &alphas);
    if !(residual <= VANDERMONDE_TOL) {
        return Err(GeometryError::IllConditioned { residual });
    }
    Ok(ExtensionCoeffs {
        decay_rates: rates.to_vec(),
        m: rates.len() - 1,
        alphas,
        residual,
    })
}

/// `max_i |Σ_j alpha_j (-lambda_j)^i - 1|`.
pub fn vandermonde_residual(rates: &[f64], alphas: &[f64]) -> f64 {
    (0..rates.len())
        .map(|i| {
            let row: f64 = rates
                .iter()
                .zip(alphas)
                .map(|(&l, &a)| a * (-l).powi(i as i32))
                .sum();
            (row - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extension {
    /// `e^{|ξ|(x3 - 1)}`, for `x3 <= 1`.
    MinusAt1,
    /// `e^{|ξ| x3}`, for `x3 <= 0`.
    MinusAt0,
    /// `Σ_j alpha_j e^{-|ξ| lambda_j x3}`, for `x3 >= 0`.
    PlusAt0,
}

/// `d^order/dx3^order` of the kernel at wavenumber `k`.
fn kernel(which: Extension, coeffs: &ExtensionCoeffs, k: f64, x3: f64, order: u32) -> f64 {
    let p = order as i32;
    match which {
        Extension::MinusAt1 => k.powi(p) * (k * (x3 - 1.0)).exp(),
        Extension::MinusAt0 => k.powi(p) * (k * x3).exp(),
        Extension::PlusAt0 => coeffs
            .alphas
            .iter()
            .zip(&coeffs.decay_rates)
            .map(|(&a, &l)| a * (-k * l).powi(p) * (-k * l * x3).exp())
            .sum(),
    }
}

fn check_half_space(which: Extension, x3: f64) -> Result<(), GeometryError> {
    let ok = match which {
        Extension::MinusAt1 => x3 <= 1.0,
        Extension::MinusAt0 => x3 <= 0.0,
        Extension::PlusAt0 => x3 >= 0.0,
    };
    if ok && x3.is_finite() {
        Ok(())
    } else {
        Err(GeometryError::OutsideHalfSpace(x3))
    }
}

/// Value of the extension of `f` at `x`.
pub fn poisson_extend(
    f: &SurfaceFunction,
    which: Extension,
    coeffs: &ExtensionCoeffs,
    x: [f64; 3],
) -> Result<f64, GeometryError> {
    Ok(poisson_extend_grad(f, which, coeffs, x)?[0])
}

/// `(F, ∂1 F, ∂2 F, ∂3 F)` for the extension `F` of `f`.
pub fn poisson_extend_grad(
    f: &SurfaceFunction,
    which: Extension,
    coeffs: &ExtensionCoeffs,
    x: [f64; 3],
) -> Result<[f64; 4], GeometryError> {
    check_half_space(which, x[2])?;
    let mut out = [0.0; 4];
    for ((n1, n2), c) in f.modes() {
        let (k1, k2) = f.wavevector(n1, n2);
        let k = k1.hypot(k2);
        let z = c * Complex64::from_polar(1.0, k1 * x[0] + k2 * x[1]);
        let iz = Complex64::i() * z;
        let (g0, g1) = (kernel(which, coeffs, k, x[2], 0), kernel(which, coeffs, k, x[2], 1));
        out[0] += g0 * z.re;
        out[1] += g0 * k1 * iz.re;
        out[2] += g0 * k2 * iz.re;
        out[3] += g1 * z.re;
    }
    Ok(out)
}

/// `∂3^order F(x)`.
pub fn poisson_extend_d3(
    f: &SurfaceFunction,
    which: Extension,
    coeffs: &ExtensionCoeffs,
    x: [f64; 3],
    order: u32,
) -> Result<f64, GeometryError> {
    check_half_space(which, x[2])?;
    let mut out = 0.0;
    for ((n1, n2), c) in f.modes() {
        let (k1, k2) = f.wavevector(n1, n2);
        let z = c * Complex64::from_polar(1.0, k1 * x[0] + k2 * x[1]);
        out += kernel(which, coeffs, k1.hypot(k2), x[2], order) * z.re;
    }
    Ok(out)
}

/// Which formula of the piecewise map to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Upper,
    Lower,
}

impl Branch {
    /// Upper for `x3 > 0`, lower otherwise.
    pub fn of(x3: f64) -> Branch {
        if x3 > 0.0 {
            Branch::Upper
        } else {
            Branch::Lower
        }
    }
}

/// Map data at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlattenSample {
    pub theta3: f64,
    pub a: f64,
    pub b: f64,
    pub j_jac: f64,
    pub k: f64,
    /// `∂t Θ3 K`, when time-derivative data are supplied.
    pub w: Option<f64>,
    /// `(-∂1 η, -∂2 η, 1)` on `x3 = 1` (η+) or `x3 = 0` (η-).
    pub n: Option<[f64; 3]>,
    pub t1: Option<[f64; 3]>,
    pub t2: Option<[f64; 3]>,
}

/// Both surfaces plus the data that fix their extensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Flattening {
    pub eta_plus: SurfaceFunction,
    pub eta_minus: SurfaceFunction,
    pub coeffs: ExtensionCoeffs,
    pub depth: f64,
}

/// `(Θ3 - x3, ∂1, ∂2, ∂3 of Θ3)` contributions from extended surfaces.
fn theta3_parts(x3: f64, depth: f64, branch: Branch, ep: [f64; 4], em: [f64; 4]) -> [f64; 4] {
    let bt = 1.0 + x3 / depth;
    match branch {
        Branch::Upper => {
            let c = 1.0 + 1.0 / depth;
            let mix = |i: usize| ep[i] - c * em[i];
            [
                x3 * x3 * mix(0) + bt * em[0],
                x3 * x3 * mix(1) + bt * em[1],
                x3 * x3 * mix(2) + bt * em[2],
                2.0 * x3 * mix(0) + x3 * x3 * mix(3) + em[0] / depth + bt * em[3],
            ]
        }
        Branch::Lower => [bt * em[0], bt * em[1], bt * em[2], em[0] / depth + bt * em[3]],
    }
}

impl Flattening {
    pub fn new(eta_plus: SurfaceFunction, eta_minus: SurfaceFunction, coeffs: ExtensionCoeffs, cfg: &FluidConfig) -> Self {
        Flattening {
            eta_plus,
            eta_minus,
            coeffs,
            depth: cfg.b,
        }
    }

    fn extended(&self, eta_plus: &SurfaceFunction, eta_minus: &SurfaceFunction, x: [f64; 3], branch: Branch) -> Result<([f64; 4], [f64; 4]), GeometryError> {
        let ep = poisson_extend_grad(eta_plus, Extension::MinusAt1, &self.coeffs, x)?;
        let which = match branch {
            Branch::Upper => Extension::PlusAt0,
            Branch::Lower => Extension::MinusAt0,
        };
        let em = poisson_extend_grad(eta_minus, which, &self.coeffs, x)?;
        Ok((ep, em))
    }

    /// Map data at `x`, with the branch picked from the sign of `x3`.
    pub fn sample(&self, x: [f64; 3], dt: Option<(&SurfaceFunction, &SurfaceFunction)>) -> Result<FlattenSample, GeometryError> {
        self.sample_branch(x, Branch::of(x[2]), dt)
    }

    /// Map data at `x` from an explicit branch; used for one-sided values at
    /// the interface.
    pub fn sample_branch(
        &self,
        x: [f64; 3],
        branch: Branch,
        dt: Option<(&SurfaceFunction, &SurfaceFunction)>,
    ) -> Result<FlattenSample, GeometryError> {
        let (ep, em) = self.extended(&self.eta_plus, &self.eta_minus, x, branch)?;
        let parts = theta3_parts(x[2], self.depth, branch, ep, em);
        let j_jac = 1.0 + parts[3];
        if !(j_jac > 0.0) {
            return Err(GeometryError::DegenerateJacobian { x, j_jac });
        }
        let k = 1.0 / j_jac;
        let w = match dt {
            Some((dp, dm)) => {
                let (dep, dem) = self.extended(dp, dm, x, branch)?;
                Some(theta3_parts(x[2], self.depth, branch, dep, dem)[0] * k)
            }
            None => None,
        };
        let surface = if x[2] == 1.0 {
            Some(self.eta_plus.evaluate(x[0], x[1]))
        } else if x[2] == 0.0 {
            Some(self.eta_minus.evaluate(x[0], x[1]))
        } else {
            None
        };
        Ok(FlattenSample {
            theta3: x[2] + parts[0],
            a: parts[1],
            b: parts[2],
            j_jac,
            k,
            w,
            n: surface.map(|s| [-s[1], -s[2], 1.0]),
            t1: surface.map(|s| [1.0, 0.0, s[1]]),
            t2: surface.map(|s| [0.0, 1.0, s[2]]),
        })
    }
}

/// One-shot form of [`Flattening::sample`].
pub fn flatten_map(
    eta_plus: &SurfaceFunction,
    eta_minus: &SurfaceFunction,
    coeffs: &ExtensionCoeffs,
    cfg: &FluidConfig,
    x: [f64; 3],
    dt: Option<(&SurfaceFunction, &SurfaceFunction)>,
) -> Result<FlattenSample, GeometryError> {
    Flattening::new(eta_plus.clone(), eta_minus.clone(), coeffs.clone(), cfg).sample(x, dt)
}

/// The surfaces of a mode at time `t`, as surface functions.
pub fn mode_surfaces(mode: &NormalMode, t: f64) -> (SurfaceFunction, SurfaceFunction) {
    let g = (mode.lambda * t).exp();
    let (n1, n2) = (mode.xi.n1, mode.xi.n2);
    let plus = SurfaceFunction::new(mode.cfg.l1, mode.cfg.l2, true)
        .with_mode(n1, n2, mode.eta_plus * g)
        .expect("mode frequency is nonzero");
    let minus = SurfaceFunction::new(mode.cfg.l1, mode.cfg.l2, true)
        .with_mode(n1, n2, mode.eta_minus * g)
        .expect("mode frequency is nonzero");
    (plus, minus)
}

/// Field samples placed at their physical heights `y3 = Θ3(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalSample {
    pub fields: FieldSample,
    /// Physical height of every grid point, indexed like the fields.
    pub y3: Vec<f64>,
    pub j_jac: Vec<f64>,
}

/// Re-indexes flat-domain samples to physical coordinates through the
/// flattening built from `eta_plus`, `eta_minus`.
pub fn push_mode_to_physical(
    sample: &FieldSample,
    flattening: &Flattening,
) -> Result<PhysicalSample, GeometryError> {
    let g = sample.grid;
    let mut y3 = vec![0.0; g.len()];
    let mut j_jac = vec![0.0; g.len()];
    for (i3, &z) in sample.x3.iter().enumerate() {
        for (i2, &b) in sample.x2.iter().enumerate() {
            for (i1, &a) in sample.x1.iter().enumerate() {
                let s = flattening.sample([a, b, z], None)?;
                let idx = g.index(i1, i2, i3);
                y3[idx] = s.theta3;
                j_jac[idx] = s.j_jac;
            }
        }
    }
    Ok(PhysicalSample {
        fields: sample.clone(),
        y3,
        j_jac,
    })
}

/// Convenience: flattening for a mode's own surfaces at `t`.
pub fn mode_flattening(mode: &NormalMode, t: f64, coeffs: &ExtensionCoeffs) -> Flattening {
    let (plus, minus) = mode_surfaces(mode, t);
    Flattening::new(plus, minus, coeffs.clone(), &mode.cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> FluidConfig {
        FluidConfig {
            rho_plus: 2.0,
            rho_minus: 1.0,
            mu_plus: 1.0,
            mu_minus: 1.0,
            g: 1.0,
            sigma_plus: 0.0,
            sigma_minus: 0.0,
            b: 1.5,
            l1: 1.0,
            l2: 0.7,
        }
    }

    fn random_surface(rng: &mut ChaCha8Rng, amp: f64, modes: usize) -> SurfaceFunction {
        let c = cfg();
        let mut f = SurfaceFunction::new(c.l1, c.l2, true);
        while f.modes().count() < modes {
            let (n1, n2) = (rng.gen_range(-3..=3), rng.gen_range(-3..=3));
            if (n1, n2) == (0, 0) {
                continue;
            }
            f.add_mode(n1, n2, Complex64::new(rng.gen_range(-amp..amp), rng.gen_range(-amp..amp)))
                .unwrap();
        }
        f
    }

    /// Exact solve of the matching system by Gauss-Jordan over rationals.
    fn rational_solve(rates: &[i64]) -> Vec<Ratio<i64>> {
        let n = rates.len();
        let mut m: Vec<Vec<Ratio<i64>>> = (0..n)
            .map(|i| {
                let mut row: Vec<Ratio<i64>> = rates.iter().map(|&l| Ratio::from_integer((-l).pow(i as u32))).collect();
                row.push(Ratio::from_integer(1));
                row
            })
            .collect();
        for col in 0..n {
            let piv = (col..n).find(|&r| m[r][col] != Ratio::from_integer(0)).unwrap();
            m.swap(col, piv);
            let p = m[col][col];
            for v in m[col].iter_mut() {
                *v /= p;
            }
            for r in 0..n {
                if r != col {
                    let f = m[r][col];
                    for c in 0..=n {
                        let sub = f * m[col][c];
                        m[r][c] -= sub;
                    }
                }
            }
        }
        m.into_iter().map(|row| row[n]).collect()
    }

    #[test]
    fn vandermonde_examples() {
        let one = vandermonde_coeffs(&[0.7]).unwrap();
        assert_eq!(one.alphas, vec![1.0]);
        let two = vandermonde_coeffs(&[1.0, 2.0]).unwrap();
        assert_eq!(two.alphas, vec![3.0, -2.0]);
        let three = vandermonde_coeffs(&[1.0, 2.0, 3.0]).unwrap();
        let exact = rational_solve(&[1, 2, 3]);
        for (a, e) in three.alphas.iter().zip(&exact) {
            let e = *e.numer() as f64 / *e.denom() as f64;
            assert!((a - e).abs() <= 1e-10, "{a} vs {e}");
        }
        let five = ExtensionCoeffs::default();
        let exact = rational_solve(&[1, 2, 3, 4, 5]);
        for (a, e) in five.alphas.iter().zip(&exact) {
            assert!((a - *e.numer() as f64 / *e.denom() as f64).abs() <= 1e-10);
        }
        assert!((five.alphas.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vandermonde_rejects_bad_rates() {
        assert_eq!(vandermonde_coeffs(&[2.0, 1.0]), Err(GeometryError::BadRates));
        assert_eq!(vandermonde_coeffs(&[0.0, 1.0]), Err(GeometryError::BadRates));
        assert_eq!(vandermonde_coeffs(&[]), Err(GeometryError::BadRates));
    }

    #[test]
    fn extensions_reproduce_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let f = random_surface(&mut rng, 1.0, 5);
        let co = ExtensionCoeffs::default();
        for &(x1, x2) in &[(0.3, 1.1), (2.0, -0.4)] {
            let v = f.evaluate(x1, x2)[0];
            for (which, z) in [(Extension::MinusAt1, 1.0), (Extension::MinusAt0, 0.0), (Extension::PlusAt0, 0.0)] {
                let e = poisson_extend(&f, which, &co, [x1, x2, z]).unwrap();
                assert!((e - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_mode_extends_constantly() {
        let f = SurfaceFunction::new(1.0, 1.0, false)
            .with_mode(0, 0, Complex64::new(0.25, 0.0))
            .unwrap();
        let co = ExtensionCoeffs::default();
        assert_eq!(poisson_extend(&f, Extension::MinusAt1, &co, [0.1, 0.2, -0.7]).unwrap(), 0.25);
        assert!((poisson_extend(&f, Extension::PlusAt0, &co, [0.1, 0.2, 0.7]).unwrap() - 0.25).abs() < 1e-14);
        assert!(SurfaceFunction::new(1.0, 1.0, true)
            .with_mode(0, 0, Complex64::new(1.0, 0.0))
            .is_err());
    }

    #[test]
    fn derivatives_match_at_interface() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_surface(&mut rng, 1.0, 5);
        let co = ExtensionCoeffs::default();
        for l in 0..=co.m as u32 {
            let x = [0.37, 0.81, 0.0];
            let up = poisson_extend_d3(&f, Extension::PlusAt0, &co, x, l).unwrap();
            let down = poisson_extend_d3(&f, Extension::MinusAt0, &co, x, l).unwrap();
            assert!((up - down).abs() <= 1e-9 * down.abs().max(1.0), "order {l}: {up} vs {down}");
        }
        // first unmatched order differs in general
        let up = poisson_extend_d3(&f, Extension::PlusAt0, &co, [0.37, 0.81, 0.0], 5).unwrap();
        let down = poisson_extend_d3(&f, Extension::MinusAt0, &co, [0.37, 0.81, 0.0], 5).unwrap();
        assert!((up - down).abs() > 1e-6);
    }

    #[test]
    fn extension_decays_into_half_space() {
        let f = SurfaceFunction::new(1.0, 1.0, true)
            .with_mode(2, 0, Complex64::new(1.0, 0.0))
            .unwrap();
        let co = ExtensionCoeffs::default();
        let at = |z: f64| poisson_extend(&f, Extension::MinusAt1, &co, [0.0, 0.0, z]).unwrap();
        assert!((at(0.0) / at(1.0) - (-2.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn flat_surfaces_give_identity() {
        let c = cfg();
        let zero = SurfaceFunction::new(c.l1, c.l2, true);
        let co = ExtensionCoeffs::default();
        for x3 in [-1.5, -0.3, 0.0, 0.4, 1.0] {
            let s = flatten_map(&zero, &zero, &co, &c, [0.2, 0.3, x3], Some((&zero, &zero))).unwrap();
            assert_eq!(s.theta3, x3);
            assert_eq!((s.a, s.b, s.j_jac, s.k), (0.0, 0.0, 1.0, 1.0));
            assert_eq!(s.w, Some(0.0));
            if x3 == 0.0 || x3 == 1.0 {
                assert_eq!(s.n, Some([-0.0, -0.0, 1.0]));
            }
        }
    }

    #[test]
    fn bottom_is_fixed_and_surfaces_map_to_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = cfg();
        let fl = Flattening::new(random_surface(&mut rng, 0.05, 4), random_surface(&mut rng, 0.05, 4), ExtensionCoeffs::default(), &c);
        for &(x1, x2) in &[(0.1, 0.2), (3.0, 1.7)] {
            assert_eq!(fl.sample([x1, x2, -c.b], None).unwrap().theta3, -c.b);
            let top = fl.sample([x1, x2, 1.0], None).unwrap().theta3;
            assert!((top - 1.0 - fl.eta_plus.evaluate(x1, x2)[0]).abs() < 1e-13);
            let mid = fl.sample([x1, x2, 0.0], None).unwrap().theta3;
            assert!((mid - fl.eta_minus.evaluate(x1, x2)[0]).abs() < 1e-13);
        }
    }

    #[test]
    fn jacobian_continuous_across_interface() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let c = cfg();
        for _ in 0..10 {
            let fl = Flattening::new(random_surface(&mut rng, 0.05, 5), random_surface(&mut rng, 0.05, 5), ExtensionCoeffs::default(), &c);
            let x = [rng.gen_range(0.0..6.0), rng.gen_range(0.0..4.0), 0.0];
            let up = fl.sample_branch(x, Branch::Upper, None).unwrap();
            let lo = fl.sample_branch(x, Branch::Lower, None).unwrap();
            assert!((up.a - lo.a).abs() <= 1e-9);
            assert!((up.b - lo.b).abs() <= 1e-9);
            assert!((up.j_jac - lo.j_jac).abs() <= 1e-9);
        }
    }

    #[test]
    fn entries_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = cfg();
        let fl = Flattening::new(random_surface(&mut rng, 0.1, 4), random_surface(&mut rng, 0.1, 4), ExtensionCoeffs::default(), &c);
        let h = 1e-5;
        for x in [[0.4, 0.9, 0.5], [1.3, 2.2, -0.8], [2.0, 0.1, 0.93]] {
            let s = fl.sample(x, None).unwrap();
            let th = |dx: [f64; 3]| fl.sample([x[0] + dx[0], x[1] + dx[1], x[2] + dx[2]], None).unwrap().theta3;
            let d1 = (th([h, 0.0, 0.0]) - th([-h, 0.0, 0.0])) / (2.0 * h);
            let d2 = (th([0.0, h, 0.0]) - th([0.0, -h, 0.0])) / (2.0 * h);
            let d3 = (th([0.0, 0.0, h]) - th([0.0, 0.0, -h])) / (2.0 * h);
            assert!((s.a - d1).abs() < 1e-8, "{} {}", s.a, d1);
            assert!((s.b - d2).abs() < 1e-8);
            assert!((s.j_jac - d3).abs() < 1e-8);
            assert!((s.k * s.j_jac - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn large_surfaces_are_degenerate() {
        let c = cfg();
        let big = SurfaceFunction::new(c.l1, c.l2, true)
            .with_mode(3, 0, Complex64::new(2.0, 0.0))
            .unwrap();
        let zero = SurfaceFunction::new(c.l1, c.l2, true);
        let fl = Flattening::new(zero, big, ExtensionCoeffs::default(), &c);
        let found = (0..40).any(|i| {
            let x1 = i as f64 * 0.157;
            matches!(fl.sample([x1, 0.0, -0.1], None), Err(GeometryError::DegenerateJacobian { .. }))
        });
        assert!(found);
    }

    #[test]
    fn default_residual_is_small() {
        let co = ExtensionCoeffs::default();
        assert_eq!(co.m, 4);
        assert!(co.residual <= 1e-10, "{}", co.residual);
    }

    fn mode_and_grid() -> (crate::modes::NormalMode, crate::modes::GridSpec) {
        use crate::discretize::Mesh;
        use crate::growth::dispersion_curve;
        use crate::params::Frequency;
        let c = cfg();
        let mesh = Mesh::uniform(c.b, 24).unwrap();
        let xi = Frequency::from_indices(1, 0, &c);
        let point = dispersion_curve(&mesh, &c, &[xi]).remove(0);
        let mode = crate::modes::build_mode(&point, &mesh, &c).unwrap();
        (mode, crate::modes::GridSpec { n1: 8, n2: 4, n3: 41 })
    }

    #[test]
    fn flat_push_is_identity() {
        let (mode, grid) = mode_and_grid();
        let sample = crate::modes::sample_fields(&mode, 0.0, grid).unwrap();
        let zero = SurfaceFunction::new(mode.cfg.l1, mode.cfg.l2, true);
        let fl = Flattening::new(zero.clone(), zero, ExtensionCoeffs::default(), &mode.cfg);
        let phys = push_mode_to_physical(&sample, &fl).unwrap();
        assert_eq!(phys.fields, sample);
        for i3 in 0..grid.n3 {
            assert_eq!(phys.y3[grid.index(3, 2, i3)], sample.x3[i3]);
        }
    }

    #[test]
    fn physical_heights_increase_and_conserve_volume() {
        let (mode, grid) = mode_and_grid();
        let sample = crate::modes::sample_fields(&mode, 0.0, grid).unwrap();
        let scale = 0.05 / mode.eta_plus.norm().max(mode.eta_minus.norm());
        let fl = mode_flattening(&mode, 0.0, &ExtensionCoeffs::default());
        let fl = Flattening::new(fl.eta_plus.scaled(scale), fl.eta_minus.scaled(scale), fl.coeffs, &mode.cfg);
        let phys = push_mode_to_physical(&sample, &fl).unwrap();
        for i2 in 0..grid.n2 {
            for i1 in 0..grid.n1 {
                let col: Vec<f64> = (0..grid.n3).map(|i3| phys.y3[grid.index(i1, i2, i3)]).collect();
                assert!(col.windows(2).all(|w| w[1] > w[0]));
            }
        }
        // lower layer volume per unit horizontal area: ∫_{-b}^0 J dx3 = b + η-
        let b = mode.cfg.b;

        for &(x1, x2) in &[(0.3, 0.2), (2.5, 1.9)] {
            let n = 16;
            let mut vol = 0.0;
            for e in 0..n {
                let (lo, h) = (-b + e as f64 * b / n as f64, b / n as f64);
                for &(t, wt) in &crate::discretize::GAUSS4 {
                    vol += wt * h * fl.sample([x1, x2, lo + t * h], None).unwrap().j_jac;
                }
            }
            let expected = b + fl.eta_minus.evaluate(x1, x2)[0];
            assert!((vol - expected).abs() < 1e-10, "{vol} vs {expected}");
        }
    }
}
