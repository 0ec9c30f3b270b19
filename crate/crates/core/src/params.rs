//! Physical parameters, critical quantities, the horizontal frequency lattice
//! and the stability-regime table.
//!
//! The upper layer occupies `0 < x3 < 1` and the lower layer `-b < x3 < 0`;
//! all inputs are assumed to be nondimensionalized already.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative width of the band inside which two quantities are treated as equal
/// when classifying critical cases.
pub const CRITICAL_BAND: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("field `{field}` must be {requirement}, got {value}")]
    Invalid {
        field: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error(
        "surface tensions must be paired: either sigma_plus > 0 and sigma_minus >= 0, \
         or both zero (got sigma_plus = {sigma_plus}, sigma_minus = {sigma_minus})"
    )]
    Pairing { sigma_plus: f64, sigma_minus: f64 },
    #[error("{quantity} is only defined when rho_plus > rho_minus (jump = {jump})")]
    NotApplicable { quantity: &'static str, jump: f64 },
}

/// Densities, viscosities, gravity, surface tensions, lower depth and periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidConfig {
    pub rho_plus: f64,
    pub rho_minus: f64,
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub g: f64,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub b: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
}

impl FluidConfig {
    /// Parses and validates a flat JSON object.
    pub fn from_json(text: &str) -> Result<Self, ConfigLoadError> {
        let cfg: FluidConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("rho_plus", self.rho_plus),
            ("rho_minus", self.rho_minus),
            ("mu_plus", self.mu_plus),
            ("mu_minus", self.mu_minus),
            ("g", self.g),
            ("b", self.b),
            ("L1", self.l1),
            ("L2", self.l2),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::Invalid {
                    field,
                    requirement: "finite and > 0",
                    value,
                });
            }
        }
        for (field, value) in [
            ("sigma_plus", self.sigma_plus),
            ("sigma_minus", self.sigma_minus),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ConfigError::Invalid {
                    field,
                    requirement: "finite and >= 0",
                    value,
                });
            }
        }
        let paired = self.sigma_plus > 0.0 || self.sigma_minus == 0.0;
        if !paired {
            return Err(ConfigError::Pairing {
                sigma_plus: self.sigma_plus,
                sigma_minus: self.sigma_minus,
            });
        }
        Ok(())
    }

    /// Density in the layer containing `x3` (upper layer for `x3 > 0`).
    pub fn rho_at(&self, upper: bool) -> f64 {
        if upper {
            self.rho_plus
        } else {
            self.rho_minus
        }
    }

    pub fn mu_at(&self, upper: bool) -> f64 {
        if upper {
            self.mu_plus
        } else {
            self.mu_minus
        }
    }

    /// Smallest nonzero lattice wavenumber, `min(1/L1, 1/L2)`.
    pub fn min_lattice_spacing(&self) -> f64 {
        (1.0 / self.l1).min(1.0 / self.l2)
    }

    /// `b g [rho] / (4 mu_-)`, the ceiling on every growth rate.
    pub fn growth_ceiling(&self) -> f64 {
        self.b * self.g * jump_density(self) / (4.0 * self.mu_minus)
    }

    /// `sqrt(2|xi| (g[rho] - sigma_- |xi|^2) / rho_-)`, or `None` when the
    /// radicand is negative.
    pub fn growth_proof_bound(&self, xi_abs: f64) -> Option<f64> {
        let radicand = 2.0
            * xi_abs
            * (self.g * jump_density(self) - self.sigma_minus * xi_abs * xi_abs)
            / self.rho_minus;
        (radicand >= 0.0).then(|| radicand.sqrt())
    }

    fn has_surface_tension(&self) -> bool {
        self.sigma_plus > 0.0 || self.sigma_minus > 0.0
    }
}

#[derive(Debug, Error)]
pub enum ConfigLoadError {
    #[error("malformed configuration: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

/// `rho_+ - rho_-`.
pub fn jump_density(cfg: &FluidConfig) -> f64 {
    cfg.rho_plus - cfg.rho_minus
}

/// Critical surface tension `g [rho] max(L1^2, L2^2)`.
pub fn sigma_critical(cfg: &FluidConfig) -> Result<f64, ConfigError> {
    let jump = jump_density(cfg);
    if jump <= 0.0 {
        return Err(ConfigError::NotApplicable {
            quantity: "sigma_c",
            jump,
        });
    }
    Ok(cfg.g * jump * (cfg.l1 * cfg.l1).max(cfg.l2 * cfg.l2))
}

/// Critical wavenumber `sqrt(g [rho] / sigma_-)`; `f64::INFINITY` without
/// interfacial tension.
pub fn xi_critical(cfg: &FluidConfig) -> Result<f64, ConfigError> {
    let jump = jump_density(cfg);
    if jump <= 0.0 {
        return Err(ConfigError::NotApplicable {
            quantity: "|xi|_c",
            jump,
        });
    }
    if cfg.sigma_minus == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((cfg.g * jump / cfg.sigma_minus).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeLabel {
    UnstableNoST,
    UnstableST,
    StableAlmostExp,
    StableExp,
    CriticalLWP,
}

impl RegimeLabel {
    pub fn is_unstable(self) -> bool {
        matches!(self, RegimeLabel::UnstableNoST | RegimeLabel::UnstableST)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RegimeLabel::UnstableNoST => "UnstableNoST",
            RegimeLabel::UnstableST => "UnstableST",
            RegimeLabel::StableAlmostExp => "StableAlmostExp",
            RegimeLabel::StableExp => "StableExp",
            RegimeLabel::CriticalLWP => "CriticalLWP",
        }
    }
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JumpSign {
    Negative,
    Zero,
    Positive,
}

/// How `sigma_-` compares with `sigma_c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TensionCase {
    /// `sigma_+ = sigma_- = 0`.
    None,
    /// Surface tension present but `sigma_c` undefined (`[rho] <= 0`).
    Present,
    BelowCritical,
    Critical,
    AboveCritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Regime {
    pub label: RegimeLabel,
    pub jump_sign: JumpSign,
    pub st_case: TensionCase,
}

fn within_band(a: f64, b: f64) -> bool {
    (a - b).abs() <= CRITICAL_BAND * a.abs().max(b.abs())
}

/// Classifies the equilibrium according to the stability table.
pub fn classify_regime(cfg: &FluidConfig) -> Result<Regime, ConfigError> {
    cfg.validate()?;
    let jump = jump_density(cfg);
    let jump_sign = if within_band(cfg.rho_plus, cfg.rho_minus) {
        JumpSign::Zero
    } else if jump > 0.0 {
        JumpSign::Positive
    } else {
        JumpSign::Negative
    };

    let regime = match (jump_sign, cfg.has_surface_tension()) {
        (JumpSign::Negative, false) => Regime {
            label: RegimeLabel::StableAlmostExp,
            jump_sign,
            st_case: TensionCase::None,
        },
        (JumpSign::Zero, false) => Regime {
            label: RegimeLabel::CriticalLWP,
            jump_sign,
            st_case: TensionCase::None,
        },
        (JumpSign::Negative | JumpSign::Zero, true) => Regime {
            label: RegimeLabel::StableExp,
            jump_sign,
            st_case: TensionCase::Present,
        },
        (JumpSign::Positive, false) => Regime {
            label: RegimeLabel::UnstableNoST,
            jump_sign,
            st_case: TensionCase::None,
        },
        (JumpSign::Positive, true) => {
            let sigma_c = sigma_critical(cfg)?;
            let (label, st_case) = if within_band(cfg.sigma_minus, sigma_c) {
                (RegimeLabel::CriticalLWP, TensionCase::Critical)
            } else if cfg.sigma_minus < sigma_c {
                (RegimeLabel::UnstableST, TensionCase::BelowCritical)
            } else {
                (RegimeLabel::StableExp, TensionCase::AboveCritical)
            };
            Regime {
                label,
                jump_sign,
                st_case,
            }
        }
    };
    Ok(regime)
}

/// A horizontal frequency `(n1/L1, n2/L2)` stored by its lattice indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    pub n1: i64,
    pub n2: i64,
    pub xi1: f64,
    pub xi2: f64,
    pub magnitude: f64,
}

impl Frequency {
    pub fn from_indices(n1: i64, n2: i64, cfg: &FluidConfig) -> Self {
        let xi1 = n1 as f64 / cfg.l1;
        let xi2 = n2 as f64 / cfg.l2;
        // Equal periods: use the integer norm so that all index pairs with the
        // same n1^2 + n2^2 share a bit-identical magnitude.
        let magnitude = if cfg.l1 == cfg.l2 {
            ((n1 * n1 + n2 * n2) as f64).sqrt() / cfg.l1
        } else {
            let a = (n1 * n1) as f64 / (cfg.l1 * cfg.l1);
            let b = (n2 * n2) as f64 / (cfg.l2 * cfg.l2);
            (a + b).sqrt()
        };
        Frequency {
            n1,
            n2,
            xi1,
            xi2,
            magnitude,
        }
    }

    /// A frequency with arbitrary real components (not tied to the lattice).
    /// Indices are set to zero.
    pub fn continuous(xi1: f64, xi2: f64) -> Self {
        Frequency {
            n1: 0,
            n2: 0,
            xi1,
            xi2,
            magnitude: xi1.hypot(xi2),
        }
    }

    pub fn negated(&self) -> Self {
        Frequency {
            n1: -self.n1,
            n2: -self.n2,
            xi1: -self.xi1,
            xi2: -self.xi2,
            magnitude: self.magnitude,
        }
    }

    /// Ordering by magnitude, then lexicographically by index.
    pub fn lattice_cmp(&self, other: &Self) -> Ordering {
        self.magnitude
            .total_cmp(&other.magnitude)
            .then_with(|| (self.n1, self.n2).cmp(&(other.n1, other.n2)))
    }
}

/// All nonzero lattice frequencies with `|xi| <= xi_max`, sorted ascending by
/// magnitude with ties broken on `(n1, n2)`.
pub fn lattice_frequencies(cfg: &FluidConfig, xi_max: f64) -> Vec<Frequency> {
    if !(xi_max > 0.0) {
        return Vec::new();
    }
    let n1_max = (xi_max * cfg.l1).floor() as i64;
    let n2_max = (xi_max * cfg.l2).floor() as i64;
    let mut out = Vec::new();
    for n1 in -n1_max..=n1_max {
        for n2 in -n2_max..=n2_max {
            if n1 == 0 && n2 == 0 {
                continue;
            }
            let f = Frequency::from_indices(n1, n2, cfg);
            if f.magnitude <= xi_max {
                out.push(f);
            }
        }
    }
    out.sort_by(Frequency::lattice_cmp);
    out
}
