//! Cubic Hermite discretization of clamped vertical profiles on `[-b, 1]` and
//! assembly of the three quadratic forms of the modal variational problem:
//!
//! ```text
//! E1(psi) = 1/2 ∫ mu (4|xi|^2 |psi'|^2 + ||xi|^2 psi + psi''|^2)
//! E0(psi) = 1/2 |xi|^2 (sigma_+ |xi|^2 + g rho_+) psi(1)^2
//!         + 1/2 |xi|^2 (sigma_- |xi|^2 - g [rho]) psi(0)^2
//! J(psi)  = 1/2 ∫ rho (|xi|^2 |psi|^2 + |psi'|^2)
//! ```
//!
//! Each node carries a value and a slope; the two degrees of freedom at
//! `x3 = -b` are removed, so every coefficient vector is C¹ and clamped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::band::BandSym;
use crate::params::{jump_density, FluidConfig};

/// Elements per layer when nothing else is requested.
pub const DEFAULT_ELEMENTS_PER_LAYER: usize = 128;

/// Half-bandwidth of every assembled form: one element couples four dofs.
const HALF_BANDWIDTH: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizeError {
    #[error("each layer needs at least 2 elements (got lower = {n_lower}, upper = {n_upper})")]
    TooFewElements { n_lower: usize, n_upper: usize },
    #[error("lower depth b must be positive and finite, got {0}")]
    BadDepth(f64),
    #[error("x3 = {x3} lies outside [{lo}, 1]")]
    OutOfDomain { x3: f64, lo: f64 },
    #[error("derivative order {0} not supported (0..=3)")]
    BadOrder(usize),
    #[error("profile has {got} coefficients, mesh needs {expected}")]
    Length { got: usize, expected: usize },
}

/// 4-point Gauss-Legendre rule on `[0, 1]`.
pub(crate) const GAUSS4: [(f64, f64); 4] = {
    // nodes +-sqrt(3/7 -+ 2/7 sqrt(6/5)) on [-1, 1]
    const A: f64 = 0.339_981_043_584_856_3;
    const B: f64 = 0.861_136_311_594_052_6;
    const WA: f64 = 0.652_145_154_862_546_1;
    const WB: f64 = 0.347_854_845_137_453_9;
    [
        (0.5 * (1.0 - B), 0.5 * WB),
        (0.5 * (1.0 - A), 0.5 * WA),
        (0.5 * (1.0 + A), 0.5 * WA),
        (0.5 * (1.0 + B), 0.5 * WB),
    ]
};

/// Node layout on `[-b, 1]`; `0` is always node `n_lower`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    nodes: Vec<f64>,
    n_lower: usize,
    n_upper: usize,
}

/// Uniform mesh with `n_lower` elements on `[-b, 0]` and `n_upper` on `[0, 1]`.
pub fn build_mesh(b: f64, n_lower: usize, n_upper: usize) -> Result<Mesh, DiscretizeError> {
    if n_lower < 2 || n_upper < 2 {
        return Err(DiscretizeError::TooFewElements { n_lower, n_upper });
    }
    if !(b.is_finite() && b > 0.0) {
        return Err(DiscretizeError::BadDepth(b));
    }
    let mut nodes = Vec::with_capacity(n_lower + n_upper + 1);
    for i in 0..n_lower {
        nodes.push(-b * (n_lower - i) as f64 / n_lower as f64);
    }
    nodes.push(0.0);
    for j in 1..=n_upper {
        nodes.push(j as f64 / n_upper as f64);
    }
    Ok(Mesh {
        nodes,
        n_lower,
        n_upper,
    })
}

impl Mesh {
    /// Mesh with the same number of elements in both layers.
    pub fn uniform(b: f64, per_layer: usize) -> Result<Mesh, DiscretizeError> {
        build_mesh(b, per_layer, per_layer)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_lower(&self) -> usize {
        self.n_lower
    }

    pub fn n_upper(&self) -> usize {
        self.n_upper
    }

    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn interface_node(&self) -> usize {
        self.n_lower
    }

    pub fn depth(&self) -> f64 {
        -self.nodes[0]
    }

    /// Number of free degrees of freedom.
    pub fn n_dofs(&self) -> usize {
        2 * (self.nodes.len() - 1)
    }

    /// Global index of `(node, component)`; component 0 is the value, 1 the
    /// slope. `None` for the clamped node.
    pub fn dof(&self, node: usize, component: usize) -> Option<usize> {
        (node > 0).then(|| 2 * (node - 1) + component)
    }

    /// `true` for elements in the upper layer `(0, 1)`.
    pub fn element_is_upper(&self, e: usize) -> bool {
        e >= self.n_lower
    }

    pub fn element_bounds(&self, e: usize) -> (f64, f64) {
        (self.nodes[e], self.nodes[e + 1])
    }

    fn local_dofs(&self, e: usize) -> [Option<usize>; 4] {
        [
            self.dof(e, 0),
            self.dof(e, 1),
            self.dof(e + 1, 0),
            self.dof(e + 1, 1),
        ]
    }

    /// Element containing `x3`; at a node, `side` selects the neighbour.
    pub fn locate(&self, x3: f64, side: Side) -> Result<usize, DiscretizeError> {
        let lo = self.nodes[0];
        if !(x3 >= lo && x3 <= 1.0) {
            return Err(DiscretizeError::OutOfDomain { x3, lo });
        }
        let n_el = self.n_elements();
        // first node strictly greater than x3
        let p = self.nodes.partition_point(|&v| v <= x3);
        let mut e = p.saturating_sub(1).min(n_el - 1);
        if self.nodes[e] == x3 && side == Side::Left && e > 0 {
            e -= 1;
        }
        Ok(e)
    }
}

/// Side used for one-sided derivatives at nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Side {
    Left,
    #[default]
    Right,
}

/// Coefficients of one clamped C¹ profile on a [`Mesh`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub coeffs: Vec<f64>,
}

impl Profile {
    pub fn zeros(mesh: &Mesh) -> Self {
        Profile {
            coeffs: vec![0.0; mesh.n_dofs()],
        }
    }

    pub fn from_coeffs(mesh: &Mesh, coeffs: Vec<f64>) -> Result<Self, DiscretizeError> {
        if coeffs.len() != mesh.n_dofs() {
            return Err(DiscretizeError::Length {
                got: coeffs.len(),
                expected: mesh.n_dofs(),
            });
        }
        Ok(Profile { coeffs })
    }

    /// Hermite interpolant of `f` from values and slopes at the nodes. The
    /// clamped node is ignored regardless of `f(-b)`.
    pub fn interpolate(mesh: &Mesh, f: impl Fn(f64) -> (f64, f64)) -> Self {
        let mut coeffs = vec![0.0; mesh.n_dofs()];
        for (i, &x) in mesh.nodes.iter().enumerate().skip(1) {
            let (v, d) = f(x);
            coeffs[2 * (i - 1)] = v;
            coeffs[2 * (i - 1) + 1] = d;
        }
        Profile { coeffs }
    }

    pub fn scaled(&self, factor: f64) -> Profile {
        Profile {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    /// Local `[v_a, s_a, v_b, s_b]` for element `e`.
    fn local(&self, mesh: &Mesh, e: usize) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (slot, dof) in out.iter_mut().zip(mesh.local_dofs(e)) {
            if let Some(d) = dof {
                *slot = self.coeffs[d];
            }
        }
        out
    }
}

/// Hermite shape functions and their x-derivatives (orders 0..=3) at local
/// coordinate `t` on an element of length `h`.
pub(crate) fn hermite_basis(t: f64, h: f64) -> [[f64; 4]; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        [
            1.0 - 3.0 * t2 + 2.0 * t3,
            h * (t - 2.0 * t2 + t3),
            3.0 * t2 - 2.0 * t3,
            h * (t3 - t2),
        ],
        [
            (6.0 * t2 - 6.0 * t) / h,
            1.0 - 4.0 * t + 3.0 * t2,
            (6.0 * t - 6.0 * t2) / h,
            3.0 * t2 - 2.0 * t,
        ],
        [
            (12.0 * t - 6.0) / (h * h),
            (6.0 * t - 4.0) / h,
            (6.0 - 12.0 * t) / (h * h),
            (6.0 * t - 2.0) / h,
        ],
        [
            12.0 / (h * h * h),
            6.0 / (h * h),
            -12.0 / (h * h * h),
            6.0 / (h * h),
        ],
    ]
}

/// Value of the `deriv`-th derivative of `p` at `x3`. At nodes, orders 2 and
/// 3 are one-sided and `side` picks the element.
pub fn evaluate_profile(
    p: &Profile,
    mesh: &Mesh,
    x3: f64,
    deriv: usize,
    side: Side,
) -> Result<f64, DiscretizeError> {
    if deriv > 3 {
        return Err(DiscretizeError::BadOrder(deriv));
    }
    let e = mesh.locate(x3, side)?;
    Ok(eval_in_element(p, mesh, e, x3, deriv))
}

pub(crate) fn eval_in_element(p: &Profile, mesh: &Mesh, e: usize, x3: f64, deriv: usize) -> f64 {
    let (xa, xb) = mesh.element_bounds(e);
    let h = xb - xa;
    let t = ((x3 - xa) / h).clamp(0.0, 1.0);
    let basis = hermite_basis(t, h);
    let local = p.local(mesh, e);
    (0..4).map(|k| basis[deriv][k] * local[k]).sum()
}

/// All four derivative orders at once.
pub(crate) fn eval_all_in_element(p: &Profile, mesh: &Mesh, e: usize, x3: f64) -> [f64; 4] {
    let (xa, xb) = mesh.element_bounds(e);
    let h = xb - xa;
    let t = ((x3 - xa) / h).clamp(0.0, 1.0);
    let basis = hermite_basis(t, h);
    let local = p.local(mesh, e);
    let mut out = [0.0; 4];
    for (d, row) in basis.iter().enumerate() {
        out[d] = (0..4).map(|k| row[k] * local[k]).sum();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FormKind {
    E1,
    E0,
    J,
}

/// A symmetric bilinear form over profile coefficients; `value(p) = p^T M p`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadForm {
    pub kind: FormKind,
    pub matrix: BandSym,
}

impl QuadForm {
    pub fn value(&self, p: &Profile) -> f64 {
        self.matrix.quadratic(&p.coeffs)
    }

    pub fn bilinear(&self, p: &Profile, q: &Profile) -> f64 {
        self.matrix.bilinear(&p.coeffs, &q.coeffs)
    }

    pub fn apply(&self, p: &Profile) -> Vec<f64> {
        self.matrix.mul_vec(&p.coeffs)
    }
}

fn assemble_integral(
    mesh: &Mesh,
    kind: FormKind,
    local_integrand: impl Fn(bool, &[[f64; 4]; 4], usize, usize) -> f64,
) -> QuadForm {
    let mut m = BandSym::zeros(mesh.n_dofs(), HALF_BANDWIDTH);
    for e in 0..mesh.n_elements() {
        let (xa, xb) = mesh.element_bounds(e);
        let h = xb - xa;
        let upper = mesh.element_is_upper(e);
        let dofs = mesh.local_dofs(e);
        let mut local = [[0.0; 4]; 4];
        for &(t, w) in &GAUSS4 {
            let basis = hermite_basis(t, h);
            for i in 0..4 {
                for j in 0..=i {
                    local[i][j] += w * h * local_integrand(upper, &basis, i, j);
                }
            }
        }
        for i in 0..4 {
            let Some(gi) = dofs[i] else { continue };
            for j in 0..=i {
                let Some(gj) = dofs[j] else { continue };
                m.add(gi, gj, local[i][j]);
            }
        }
    }
    QuadForm { kind, matrix: m }
}

/// Viscous form `E1`.
pub fn assemble_e1(mesh: &Mesh, cfg: &FluidConfig, xi_abs: f64) -> QuadForm {
    let k2 = xi_abs * xi_abs;
    let k4 = k2 * k2;
    assemble_integral(mesh, FormKind::E1, |upper, n, i, j| {
        let mu = cfg.mu_at(upper);
        // ||xi|^2 u + u''|^2 expanded into uu, uu'' + u''u and u''u'' blocks
        let mixed = k4 * n[0][i] * n[0][j] + k2 * (n[0][i] * n[2][j] + n[2][i] * n[0][j]) + n[2][i] * n[2][j];
        0.5 * mu * (4.0 * k2 * n[1][i] * n[1][j] + mixed)
    })
}

/// Boundary-trace form `E0`; only the values at `x3 = 0` and `x3 = 1` enter.
pub fn assemble_e0(mesh: &Mesh, cfg: &FluidConfig, xi_abs: f64) -> QuadForm {
    let k2 = xi_abs * xi_abs;
    let mut m = BandSym::zeros(mesh.n_dofs(), HALF_BANDWIDTH);
    let top = mesh.nodes.len() - 1;
    let c_top = 0.5 * k2 * (cfg.sigma_plus * k2 + cfg.g * cfg.rho_plus);
    let c_interface = 0.5 * k2 * (cfg.sigma_minus * k2 - cfg.g * jump_density(cfg));
    m.add(mesh.dof(top, 0).expect("top node is free"), mesh.dof(top, 0).unwrap(), c_top);
    let i0 = mesh.dof(mesh.interface_node(), 0).expect("interface node is free");
    m.add(i0, i0, c_interface);
    QuadForm {
        kind: FormKind::E0,
        matrix: m,
    }
}

/// Inertia form `J`.
pub fn assemble_j(mesh: &Mesh, cfg: &FluidConfig, xi_abs: f64) -> QuadForm {
    let k2 = xi_abs * xi_abs;
    assemble_integral(mesh, FormKind::J, |upper, n, i, j| {
        0.5 * cfg.rho_at(upper) * (k2 * n[0][i] * n[0][j] + n[1][i] * n[1][j])
    })
}

/// `E1`, `E0` and `J` of one profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormValues {
    pub e1: f64,
    pub e0: f64,
    pub j: f64,
}

impl FormValues {
    pub fn energy(&self, s: f64) -> f64 {
        s * self.e1 + self.e0
    }
}

/// Form values by quadrature of the squared integrands. Agrees with the
/// assembled matrices in exact arithmetic, but avoids the cancellation in
/// `p^T M p` on fine meshes.
pub fn form_values(mesh: &Mesh, cfg: &FluidConfig, xi_abs: f64, p: &Profile) -> FormValues {
    let k2 = xi_abs * xi_abs;
    let (mut e1, mut j) = (0.0, 0.0);
    for e in 0..mesh.n_elements() {
        let (xa, xb) = mesh.element_bounds(e);
        let h = xb - xa;
        let upper = mesh.element_is_upper(e);
        let local = p.local(mesh, e);
        let (mu, rho) = (cfg.mu_at(upper), cfg.rho_at(upper));
        let (mut se1, mut sj) = (0.0, 0.0);
        for &(t, w) in &GAUSS4 {
            let basis = hermite_basis(t, h);
            let v: [f64; 3] = std::array::from_fn(|d| (0..4).map(|k| basis[d][k] * local[k]).sum());
            let bend = k2 * v[0] + v[2];
            se1 += w * (4.0 * k2 * v[1] * v[1] + bend * bend);
            sj += w * (k2 * v[0] * v[0] + v[1] * v[1]);
        }
        e1 += 0.5 * mu * h * se1;
        j += 0.5 * rho * h * sj;
    }
    let top = mesh.nodes.len() - 1;
    let v1 = p.coeffs[mesh.dof(top, 0).expect("top node is free")];
    let v0 = p.coeffs[mesh.dof(mesh.interface_node(), 0).expect("interface node is free")];
    let e0 = 0.5 * k2 * (cfg.sigma_plus * k2 + cfg.g * cfg.rho_plus) * v1 * v1
        + 0.5 * k2 * (cfg.sigma_minus * k2 - cfg.g * jump_density(cfg)) * v0 * v0;
    FormValues { e1, e0, j }
}

/// The three forms at one wavenumber.
#[derive(Debug, Clone)]
pub struct ModalForms {
    pub xi_abs: f64,
    pub e1: QuadForm,
    pub e0: QuadForm,
    pub j: QuadForm,
}

impl ModalForms {
    pub fn assemble(mesh: &Mesh, cfg: &FluidConfig, xi_abs: f64) -> Self {
        ModalForms {
            xi_abs,
            e1: assemble_e1(mesh, cfg, xi_abs),
            e0: assemble_e0(mesh, cfg, xi_abs),
            j: assemble_j(mesh, cfg, xi_abs),
        }
    }

    /// Matrix of `E(.; s) = s E1 + E0`.
    pub fn energy_matrix(&self, s: f64) -> BandSym {
        self.e1.matrix.combine(s, &self.e0.matrix, 1.0)
    }

    /// `E(p; s) = s E1(p) + E0(p)`.
    pub fn energy(&self, p: &Profile, s: f64) -> f64 {
        s * self.e1.value(p) + self.e0.value(p)
    }
}
