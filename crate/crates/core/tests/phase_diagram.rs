//! Growth verdicts against the regime table, and the rate bounds.

use rt_spectrum::discretize::build_mesh;
use rt_spectrum::growth::{dispersion_curve, small_xi_bound, Verdict};
use rt_spectrum::params::{classify_regime, lattice_frequencies, sigma_critical, xi_critical, FluidConfig, RegimeLabel};

fn base() -> FluidConfig {
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

fn unstable_count(cfg: &FluidConfig, xi_max: f64) -> usize {
    let mesh = build_mesh(cfg.b, 24, 24).unwrap();
    dispersion_curve(&mesh, cfg, &lattice_frequencies(cfg, xi_max))
        .iter()
        .filter(|p| p.verdict().unwrap().is_unstable())
        .count()
}

#[test]
fn verdicts_agree_with_regime_labels() {
    let mut cases = Vec::new();
    cases.push(base());
    cases.push(FluidConfig { rho_plus: 0.5, ..base() });
    cases.push(FluidConfig { rho_plus: 1.0, ..base() });
    let sc = sigma_critical(&base()).unwrap();
    for f in [0.3, 0.9, 1.0, 1.5, 2.0] {
        cases.push(FluidConfig {
            sigma_plus: 0.2,
            sigma_minus: f * sc,
            ..base()
        });
    }
    cases.push(FluidConfig {
        rho_plus: 0.5,
        sigma_plus: 0.1,
        sigma_minus: 0.1,
        ..base()
    });
    for cfg in cases {
        let label = classify_regime(&cfg).unwrap().label;
        let n = unstable_count(&cfg, 4.0);
        if label.is_unstable() {
            assert!(n >= 1, "{label} but no unstable frequency");
        } else {
            assert_eq!(n, 0, "{label} but {n} unstable frequencies");
        }
        if label == RegimeLabel::UnstableST {
            let xi_c = xi_critical(&cfg).unwrap();
            assert_eq!(n, lattice_frequencies(&cfg, xi_c).iter().filter(|f| f.magnitude < xi_c).count());
        }
    }
}

#[test]
fn equal_magnitudes_share_verdicts() {
    let cfg = base();
    let mesh = build_mesh(1.0, 16, 16).unwrap();
    let freqs = lattice_frequencies(&cfg, 2.3);
    let pts = dispersion_curve(&mesh, &cfg, &freqs);
    for a in &pts {
        for b in &pts {
            if a.xi.magnitude == b.xi.magnitude {
                assert_eq!(a.lambda(), b.lambda());
            }
        }
    }
}

#[test]
fn rates_obey_both_bounds() {
    let sc = sigma_critical(&base()).unwrap();
    for sigma_minus in [0.0, 0.1 * sc, 0.5 * sc, 0.9 * sc] {
        let cfg = FluidConfig { sigma_minus, ..base() };
        let mesh = build_mesh(1.0, 32, 32).unwrap();
        for p in dispersion_curve(&mesh, &cfg, &lattice_frequencies(&cfg, 5.0)) {
            let Some(l) = p.lambda() else { continue };
            let k = p.xi.magnitude;
            let proof = 2.0 * k * (cfg.g - cfg.sigma_minus * k * k) / cfg.rho_minus;
            assert!(l <= cfg.growth_ceiling() + 1e-8);
            assert!(l * l <= proof + 1e-8, "{l} at {k}");
        }
    }
}

#[test]
fn rates_vanish_at_both_ends() {
    let cfg = FluidConfig {
        sigma_minus: 0.25,
        ..base()
    };
    let mesh = build_mesh(1.0, 32, 32).unwrap();
    for k in [1e-1, 1e-2, 1e-3] {
        let g = rt_spectrum::growth::growth_rate(&mesh, &cfg, k).unwrap();
        let l = g.verdict.lambda().unwrap_or(0.0);
        assert!(l <= small_xi_bound(&cfg, k) + 1e-12);
    }
    let xi_c = xi_critical(&cfg).unwrap();
    let mut prev = f64::INFINITY;
    for j in 1..=3 {
        let k = (1.0 - 10f64.powi(-j)) * xi_c;
        let g = rt_spectrum::growth::growth_rate(&mesh, &cfg, k).unwrap();
        let l = g.verdict.lambda().unwrap_or(0.0);
        let bound = 2.0 * k * (cfg.g - cfg.sigma_minus * k * k) / cfg.rho_minus;
        assert!(l * l <= bound + 1e-8);
        assert!(l < prev);
        prev = l;
    }
    assert!(matches!(
        rt_spectrum::growth::growth_rate(&mesh, &cfg, xi_c * 1.01).unwrap().verdict,
        Verdict::Stable { .. }
    ));
}
