mod common;

use common::{both_cards, bulk, fdsoi, rel_err, with_lambda};
use pcref::circuits::{
    solve_2t, solve_pcr, v_b2_closed_form, v_b2_closed_form_slope, vdd_min, CircuitOptions, Topology,
};
use pcref::devmodel::{mosfet_vgs_at, thermal_voltage};
use pcref::error::Error;
use pcref::solver::SolverOptions;
use pcref::techcard::{BodyModel, Role, TechnologyCard};

const T300: f64 = 26.85;

fn ideal_opts(card: &TechnologyCard) -> CircuitOptions {
    CircuitOptions { include_diode: false, vds_factors: false, ..CircuitOptions::for_card(card) }
}

/// fdsoi card with temperature-flat, n = 1.2 devices: M5 at 0.45 V and
/// M6 at 0.30 V with S6/S5 = 10; identical M1/M2 with γ* = 0.1.
fn textbook_card() -> TechnologyCard {
    let mut c = fdsoi();
    c.trim = None;
    for p in c.devices.values_mut() {
        p.n = 1.2;
        p.k_vt = 0.0;
        p.k_gamma = 0.0;
        p.m_mu = 1.5;
    }
    let m1 = c.device(Role::M1).unwrap().clone();
    let mut m2 = m1.clone();
    m2.name = "M2".into();
    m2.gamma_star_ref = 0.1;
    m2.body_model = BodyModel::Linearized;
    c.devices.insert("M2".into(), m2);
    let isq = c.device(Role::M5).unwrap().isq_ref;
    for (role, vt, w) in [(Role::M5, 0.45, 1.0), (Role::M6, 0.30, 10.0)] {
        let d = c.device_mut(role).unwrap();
        d.vt0_ref = vt;
        d.isq_ref = isq;
        d.w = w;
        d.l = 1.0;
        d.mult = 1;
    }
    c.resistor.alpha1 = 0.0;
    c.resistor.alpha2 = 0.0;
    c
}

#[test]
fn closed_form_identical_pair_is_zero() {
    let mut c = fdsoi();
    c.trim = None;
    let mut m6 = c.device(Role::M5).unwrap().clone();
    m6.name = "M6".into();
    c.devices.insert("M6".into(), m6);
    for t in [-40.0, 25.0, 85.0] {
        assert!(v_b2_closed_form(&c, t, None).unwrap().abs() < 1e-15);
    }
}

#[test]
fn closed_form_hand_value() {
    let c = textbook_card();
    let expected = 0.15 + 1.2 * thermal_voltage(T300) * 10f64.ln();
    let v = v_b2_closed_form(&c, T300, None).unwrap();
    assert!((v - expected).abs() < 1e-12);
    assert!((v - 0.2214).abs() < 5e-5);
}

#[test]
fn closed_form_slope_sign_flips_with_ratio() {
    let c = fdsoi();
    let slope_at = |w6: f64| {
        let c = pcref::analysis::resize_2t(&c, 10.0, w6).unwrap();
        v_b2_closed_form_slope(&c, 25.0, None).unwrap()
    };
    assert!(slope_at(12.0) < 0.0);
    assert!(slope_at(400.0) > 0.0);
}

#[test]
fn closed_form_slope_matches_finite_difference() {
    for c in both_cards() {
        let h = 1e-3;
        let fd = (v_b2_closed_form(&c, 25.0 + h, None).unwrap() - v_b2_closed_form(&c, 25.0 - h, None).unwrap())
            / (2.0 * h);
        assert!(rel_err(v_b2_closed_form_slope(&c, 25.0, None).unwrap(), fd) < 1e-6, "{}", c.name);
    }
}

#[test]
fn two_t_matches_closed_form_in_saturation() {
    let c = with_lambda(&fdsoi(), 0.0);
    let opts = CircuitOptions { include_diode: false, ..CircuitOptions::for_card(&c) };
    for t in [-40.0, 0.0, 25.0, 60.0, 85.0] {
        let tt = solve_2t(&c, 1.8, t, &opts).unwrap();
        assert!((tt.v_b2 - v_b2_closed_form(&c, t, None).unwrap()).abs() < 1e-6, "{t}");
        assert_eq!(tt.i_dio, 0.0);
    }
}

#[test]
fn replica_suppresses_diode_current() {
    let c = fdsoi();
    let base = CircuitOptions::for_card(&c);
    for t in [-40.0, 25.0, 85.0] {
        let free = solve_2t(&c, 1.8, t, &CircuitOptions { include_diode: false, ..base.clone() }).unwrap();
        let rep = solve_2t(&c, 1.8, t, &base).unwrap();
        assert!((rep.v_b2 - free.v_b2).abs() < 1e-4, "{t}");
        assert!(rep.v_dnw.is_some());
        assert!(rep.i_dio < 1e-3 * rep.i_2t, "{t}: {} vs {}", rep.i_dio, rep.i_2t);
    }
}

#[test]
fn diode_without_replica_raises_v_b2() {
    let c = fdsoi();
    let base = CircuitOptions::for_card(&c);
    let free = solve_2t(&c, 1.8, 85.0, &CircuitOptions { include_diode: false, ..base.clone() }).unwrap();
    let hot = solve_2t(&c, 1.8, 85.0, &CircuitOptions { include_replica: false, ..base }).unwrap();
    assert!(hot.v_b2 > free.v_b2 + 1e-4, "{} vs {}", hot.v_b2, free.v_b2);
    assert!(hot.v_dnw.is_none() && hot.i_dio > 0.0);
}

#[test]
fn conventional_hand_value() {
    let mut c = textbook_card();
    c.mirror_j = 2.0;
    c.mirror_k = 2.0;
    c.resistor.r_ref = 10e6;
    let opts = ideal_opts(&c).with_topology(Topology::Conventional);
    let op = solve_pcr(&c, 1.8, T300, &opts).unwrap();
    let ut = thermal_voltage(T300);
    let expected = 1.2 * ut * 4f64.ln() / (2.0 * 10e6);
    assert!(rel_err(op.i_ref, expected) < 1e-6);
    assert!((op.i_ref - 2.151e-9).abs() < 1e-12);
    assert!((op.v_gs1 - op.v_gs2 - 43.01e-3).abs() < 1e-5);
}

#[test]
fn proposed_hand_value() {
    let mut c = textbook_card();
    c.resistor.r_ref = 20e6;
    let op = solve_pcr(&c, 1.8, T300, &ideal_opts(&c)).unwrap();
    let dv = 0.1 * v_b2_closed_form(&c, T300, None).unwrap();
    assert!((dv - 22.14e-3).abs() < 1e-5);
    assert!(rel_err(op.i_ref, dv / 20e6) < 1e-6);
    assert!((op.i_ref - 1.107e-9).abs() < 1e-12);
}

#[test]
fn conventional_needs_mirror_gain() {
    let mut c = fdsoi();
    c.mirror_j = 1.0;
    c.mirror_k = 1.0;
    let opts = CircuitOptions::for_card(&c).with_topology(Topology::Conventional);
    let e = solve_pcr(&c, 1.8, 25.0, &opts).unwrap_err();
    assert!(matches!(e, Error::Precondition(_)), "{e}");
    assert_eq!(e.exit_code(), 3);
}

#[test]
fn rejects_out_of_range_inputs() {
    let c = fdsoi();
    let opts = CircuitOptions::for_card(&c);
    assert!(matches!(solve_pcr(&c, 1.8, 200.0, &opts), Err(Error::Input(_))));
    assert!(matches!(solve_pcr(&c, -1.0, 25.0, &opts), Err(Error::Input(_))));
    let bad = CircuitOptions { solver: SolverOptions { max_iter: 3, ..SolverOptions::default() }, ..opts };
    assert!(matches!(solve_pcr(&c, 1.8, 25.0, &bad), Err(Error::Input(_))));
}

#[test]
fn headroom_is_enforced() {
    for c in both_cards() {
        let opts = CircuitOptions::for_card(&c);
        let v_min = vdd_min(&c, 25.0, &opts).unwrap();
        assert!(solve_pcr(&c, v_min + 0.02, 25.0, &opts).is_ok(), "{}", c.name);
        let e = solve_pcr(&c, 0.2, 25.0, &opts).unwrap_err();
        assert!(matches!(e, Error::Headroom(_)), "{}: {e}", c.name);
    }
}

#[test]
fn bulk_vdd_min_tracks_v_sg4() {
    let c = bulk();
    let opts = CircuitOptions::for_card(&c);
    let op = solve_pcr(&c, c.v_dd_nominal, 25.0, &opts).unwrap();
    assert!(op.v_sg4 > op.v_gs1 && op.v_sg4 > op.v_b2);
    let v = vdd_min(&c, 25.0, &opts).unwrap();
    assert!((v - (op.v_sg4 + 4.0 * thermal_voltage(25.0))).abs() < 1e-12);
}

#[test]
fn newton_and_bisection_agree() {
    for c in both_cards() {
        let newton = CircuitOptions::for_card(&c);
        let bisect = CircuitOptions {
            solver: SolverOptions { bisection_only: true, max_iter: 200, ..SolverOptions::default() },
            ..newton.clone()
        };
        for t in [-40.0, 25.0, 85.0] {
            for topology in [Topology::Proposed, Topology::Conventional] {
                let a = solve_pcr(&c, c.v_dd_nominal, t, &newton.clone().with_topology(topology)).unwrap();
                let b = solve_pcr(&c, c.v_dd_nominal, t, &bisect.clone().with_topology(topology)).unwrap();
                assert!((a.i_ref - b.i_ref).abs() <= 10.0 * newton.solver.tol_i, "{} {t}", c.name);
                assert!((a.v_b2 - b.v_b2).abs() <= 10.0 * newton.solver.tol_v, "{} {t}", c.name);
            }
        }
    }
}

#[test]
fn returned_point_satisfies_loop_equation() {
    for c in both_cards() {
        let opts = CircuitOptions::for_card(&c);
        for t in [-40.0, 25.0, 85.0] {
            let op = solve_pcr(&c, c.v_dd_nominal, t, &opts).unwrap();
            assert!(op.converged && op.i_ref > 0.0 && op.saturated.all());
            let m1 = c.device(Role::M1).unwrap();
            let m2 = c.device(Role::M2).unwrap();
            let v_gs1 = mosfet_vgs_at(m1, c.t_ref, op.i1, 0.0, Some(op.v_ds1), t).unwrap();
            let v_gs2 = mosfet_vgs_at(m2, c.t_ref, op.i_ref, op.v_b2, Some(op.v_ds2), t).unwrap();
            let residual = v_gs1 - v_gs2 - op.r * op.i_ref;
            assert!(residual.abs() < 1e-7, "{} {t}: {residual:e}", c.name);
        }
    }
}

#[test]
fn proposed_without_drain_paths_ignores_supply() {
    let mut c = with_lambda(&fdsoi(), 0.0);
    c.devices.remove("M7");
    c.devices.remove("M7B");
    let opts = CircuitOptions { include_diode: false, ..CircuitOptions::for_card(&c) };
    let a = solve_pcr(&c, 1.0, 25.0, &opts).unwrap().i_ref;
    let b = solve_pcr(&c, 1.8, 25.0, &opts).unwrap().i_ref;
    assert!(rel_err(a, b) < 1e-9);
}

#[test]
fn larger_resistor_lowers_current() {
    for c in both_cards() {
        for topology in [Topology::Proposed, Topology::Conventional] {
            let opts = CircuitOptions::for_card(&c).with_topology(topology);
            let mut prev = f64::INFINITY;
            for k in [0.5, 1.0, 2.0, 4.0] {
                let mut cc = c.clone();
                cc.resistor.r_ref *= k;
                let i = solve_pcr(&cc, cc.v_dd_nominal, 25.0, &opts).unwrap().i_ref;
                assert!(i < prev, "{} {topology:?} {k}", c.name);
                prev = i;
            }
        }
    }
}
