mod common;

use common::{both_cards, bulk, fdsoi, rel_err, with_lambda};
use pcref::analysis::{
    analytic_ls, analytic_tc_conventional, analytic_tc_proposed, box_ls, box_metric, box_tc, box_tc_with, dc_psrr,
    fom1, fom2, resize_2t, size_sweep_2t, sweep_supply, sweep_temperature, FomInputs, Grid, Normalization,
};
use pcref::circuits::{solve_pcr, v_b2_closed_form, CircuitOptions, Topology};
use pcref::devmodel::kelvin;
use pcref::techcard::{Role, TechnologyCard};
use proptest::prelude::*;

fn grid() -> Grid {
    Grid::industrial(5.0)
}

/// Every temperature dependence removed, so the proposed current is flat.
fn constant_card() -> TechnologyCard {
    let mut c = with_lambda(&fdsoi(), 0.0);
    for p in c.devices.values_mut() {
        p.k_vt = 0.0;
        p.k_gamma = 0.0;
        p.m_mu = 2.0;
    }
    c.resistor.alpha1 = 0.0;
    c.resistor.alpha2 = 0.0;
    c
}

#[test]
fn constant_model_gives_flat_sweep() {
    // With V_T, γ*, I_SQ and R frozen only the U_T·ln term of V_B2 moves;
    // sizing M6 so that log vanishes leaves nothing temperature dependent.
    let mut c = constant_card();
    let (m5, mut m6) = (c.device(Role::M5).unwrap().clone(), c.device(Role::M6).unwrap().clone());
    m6.w = m5.w * m5.l / m6.l * f64::from(m5.mult) / f64::from(m6.mult) * m5.isq_ref / m6.isq_ref;
    c.devices.insert("M6".into(), m6);
    c.trim = None;
    let opts = CircuitOptions { include_diode: false, vds_factors: false, ..CircuitOptions::for_card(&c) };
    let s = sweep_temperature(&c, 1.8, &grid(), &opts).unwrap();
    assert!(box_tc(&s).unwrap() < 1e-6, "{}", box_tc(&s).unwrap());
}

#[test]
fn conventional_is_ptat_with_flat_resistor() {
    let mut c = fdsoi();
    c.resistor.alpha1 = 0.0;
    let opts = CircuitOptions::for_card(&c).with_topology(Topology::Conventional);
    let i = sweep_temperature(&c, 1.8, &grid(), &opts).unwrap().currents();
    assert!(i.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn coarse_grid_matches_fine_grid_endpoints() {
    let c = bulk();
    let opts = CircuitOptions::for_card(&c);
    let fine = sweep_temperature(&c, 1.2, &grid(), &opts).unwrap();
    let coarse = sweep_temperature(&c, 1.2, &Grid::new(-40.0, 85.0, 125.0).unwrap(), &opts).unwrap();
    assert_eq!(coarse.samples.len(), 2);
    assert_eq!(coarse.samples[0].1, fine.samples[0].1);
    assert_eq!(coarse.samples[1].1, fine.samples[25].1);
}

#[test]
fn supply_sweep_without_drain_paths_is_flat() {
    let mut c = with_lambda(&fdsoi(), 0.0);
    c.devices.remove("M7");
    c.devices.remove("M7B");
    let opts = CircuitOptions { include_diode: false, ..CircuitOptions::for_card(&c) };
    let s = sweep_supply(&c, 25.0, &Grid::new(0.8, 1.8, 0.1).unwrap(), &opts).unwrap();
    assert!(box_ls(&s).unwrap() < 1e-6);
}

#[test]
fn supply_sweep_is_non_decreasing_with_lambda() {
    for c in both_cards() {
        let opts = CircuitOptions::for_card(&c);
        let s = sweep_supply(&c, 25.0, &Grid::new(0.9, c.v_dd_nominal, 0.05).unwrap(), &opts).unwrap();
        let i = s.currents();
        assert!(i.windows(2).all(|w| w[1] >= w[0]), "{}", c.name);
        assert!(box_ls(&s).unwrap() > 0.0);
    }
}

#[test]
fn supply_sweep_below_headroom_names_point() {
    let c = fdsoi();
    let e = sweep_supply(&c, 25.0, &Grid::new(0.2, 1.0, 0.1).unwrap(), &CircuitOptions::for_card(&c)).unwrap_err();
    assert!(e.to_string().contains("v_dd = 0.2"), "{e}");
}

#[test]
fn box_tc_of_linear_series() {
    let xs: Vec<f64> = (0..=125).map(|k| -40.0 + f64::from(k)).collect();
    let ys: Vec<f64> = xs.iter().map(|t| 1e-9 + 1e-12 * (t - 25.0)).collect();
    let tc = box_metric(&xs, &ys, Normalization::Mean).unwrap() * 1e6;
    assert!((tc - 0.125e-9 / (0.9975e-9 * 125.0) * 1e6).abs() < 1e-9);
    assert!((tc - 1002.5).abs() < 0.05);
}

#[test]
fn box_ls_of_one_percent_per_volt_series() {
    let xs: Vec<f64> = (0..=10).map(|k| 0.8 + 0.1 * f64::from(k)).collect();
    let ys: Vec<f64> = xs.iter().map(|v| 1.0 + 0.01 * (v - 1.3)).collect();
    let ls = box_metric(&xs, &ys, Normalization::Mean).unwrap() * 100.0;
    assert!((ls - 1.0).abs() < 1e-9);
}

#[test]
fn box_metric_errors() {
    assert!(box_metric(&[1.0], &[1.0], Normalization::Mean).is_err());
    assert!(box_metric(&[1.0, 1.0], &[1.0, 2.0], Normalization::Mean).is_err());
    assert!(box_metric(&[0.0, 1.0], &[0.0, 0.0], Normalization::Mean).is_err());
    assert!(box_metric(&[0.0, 1.0], &[1.0, 2.0], Normalization::At(5.0)).is_err());
}

#[test]
fn box_tc_rejects_supply_series() {
    let c = fdsoi();
    let s = sweep_supply(&c, 25.0, &Grid::new(1.0, 1.8, 0.2).unwrap(), &CircuitOptions::for_card(&c)).unwrap();
    assert!(box_tc(&s).is_err());
}

#[test]
fn midpoint_normalization_close_to_mean() {
    let c = fdsoi();
    let s = sweep_temperature(&c, 1.8, &grid(), &CircuitOptions::for_card(&c)).unwrap();
    let a = box_tc(&s).unwrap();
    let b = box_tc_with(&s, Normalization::At(22.5)).unwrap();
    assert!(rel_err(b, a) < 5e-3);
}

#[test]
fn analytic_conventional_edge_cases() {
    let mut c = fdsoi();
    c.resistor.alpha1 = 0.0;
    c.resistor.alpha2 = 0.0;
    assert!((analytic_tc_conventional(&c, 26.85) - 1e6 / 300.0).abs() < 1e-9);
    c.resistor.alpha1 = 1.0 / 300.0;
    c.resistor.t_ref = 26.85;
    assert!(analytic_tc_conventional(&c, 26.85).abs() < 1e-9);
}

#[test]
fn analytic_proposed_matches_finite_difference() {
    for base in both_cards() {
        let c = with_lambda(&base, 0.0);
        let opts = CircuitOptions { include_diode: false, ..CircuitOptions::for_card(&c) };
        for t in [-20.0, 25.0, 70.0] {
            let h = 0.25;
            let i = |t| solve_pcr(&c, c.v_dd_nominal, t, &opts).unwrap().i_ref;
            let fd = (i(t + h) / i(t - h)).ln() / (2.0 * h) * 1e6;
            let an = analytic_tc_proposed(&c, t, None).unwrap();
            // Compared on the scale of 1/T so near-zero TCs do not blow up.
            assert!((an - fd).abs() < 0.01 * 1e6 / kelvin(t), "{} {t}: {an} vs {fd}", c.name);
        }
    }
}

#[test]
fn analytic_ls_vanishes_without_drain_paths() {
    for c in both_cards() {
        let c = with_lambda(&c, 0.0);
        let opts = CircuitOptions::for_card(&c);
        let op = solve_pcr(&c, c.v_dd_nominal, 25.0, &opts).unwrap();
        let ls = analytic_ls(&c, &op, &opts).unwrap();
        assert!(ls.full.abs() < 1e-6 * op.i_ref && ls.simplified.abs() < 1e-6 * op.i_ref, "{}", c.name);
    }
}

#[test]
fn psrr_values() {
    assert!(dc_psrr(1.0 / 1.8, 1e-9, 1.8).unwrap().abs() < 1e-12);
    assert!((dc_psrr(1.0 / 180.0, 1e-9, 1.8).unwrap() + 40.0).abs() < 1e-9);
    let ls = 10f64.powf(-35.9 / 20.0) / 0.75;
    assert!((dc_psrr(ls, 1.5e-9, 0.75).unwrap() + 35.9).abs() < 1e-9);
    assert!(dc_psrr(0.0, 1e-9, 1.8).is_err());
}

#[test]
fn fom_published_rows() {
    let this_work = FomInputs { tc: 89.2, t_min: -40.0, t_max: 85.0, area: 0.00214, i_vdd: 2.87 / 0.75, i_ref: 1.50 };
    assert!((fom1(&this_work).unwrap() - 0.001527).abs() < 1e-6);
    assert!((fom2(&this_work).unwrap() - 1.820).abs() < 1e-3);
    let lee = FomInputs { tc: 289.0, t_min: -20.0, t_max: 80.0, area: 0.332, i_vdd: 1.0, i_ref: 1.0 };
    assert!((fom1(&lee).unwrap() - 0.9595).abs() < 1e-4);
    let huang = FomInputs { tc: 139.0, t_min: -40.0, t_max: 85.0, area: 1.0, i_vdd: 0.0625, i_ref: 8.9 };
    assert!((fom2(&huang).unwrap() - 0.0078).abs() < 5e-5);
    let zero = FomInputs { tc: 0.0, ..lee };
    assert_eq!(fom1(&zero).unwrap(), 0.0);
    let unit = FomInputs { tc: 125.0, t_min: -40.0, t_max: 85.0, area: 1.0, i_vdd: 3.0, i_ref: 3.0 };
    assert_eq!(fom2(&unit).unwrap(), 1.0);
    assert!(fom1(&FomInputs { t_max: -40.0, ..lee }).is_err());
}

#[test]
fn single_cell_size_sweep_equals_direct_sweep() {
    let c = fdsoi();
    let opts = CircuitOptions::for_card(&c);
    let cells = size_sweep_2t(&c, &[12.0], &[40.0], 1.8, &grid(), &opts).unwrap();
    assert_eq!(cells.len(), 1);
    let direct = resize_2t(&c, 12.0, 40.0).unwrap();
    let s = sweep_temperature(&direct, 1.8, &grid(), &opts).unwrap();
    assert_eq!(cells[0].tc, Some(box_tc(&s).unwrap()));
}

#[test]
fn constant_ratio_keeps_v_b2() {
    for c in both_cards() {
        let a = v_b2_closed_form(&resize_2t(&c, 5.0, 20.0).unwrap(), 25.0, None).unwrap();
        let b = v_b2_closed_form(&resize_2t(&c, 20.0, 80.0).unwrap(), 25.0, None).unwrap();
        assert!((a - b).abs() < 1e-12, "{}", c.name);
    }
}

/// Zero-TC crossing along W6 at fixed W5, from the signed TC.
fn zero_tc_slope(card: &TechnologyCard, w5: f64, w6s: &[f64]) -> f64 {
    let opts = CircuitOptions::for_card(card);
    let cells = size_sweep_2t(card, &[w5], w6s, card.v_dd_nominal, &grid(), &opts).unwrap();
    let k = cells
        .windows(2)
        .position(|w| w[0].tc_signed.unwrap().signum() != w[1].tc_signed.unwrap().signum())
        .expect("zero-TC contour crosses the W6 grid");
    let (a, b) = (&cells[k], &cells[k + 1]);
    let (ta, tb) = (a.tc_signed.unwrap(), b.tc_signed.unwrap());
    let f = ta / (ta - tb);
    a.v_b2_slope.unwrap() + f * (b.v_b2_slope.unwrap() - a.v_b2_slope.unwrap())
}

#[test]
fn zero_tc_contour_sign_matches_technology() {
    let w6s: Vec<f64> = (0..24).map(|k| 2.0 * 1.25f64.powi(k)).collect();
    let bulk_slope = zero_tc_slope(&bulk(), 64.0, &w6s);
    assert!(bulk_slope < -100.0, "bulk zero-TC V_B2 slope {bulk_slope} µV/°C");
    let fdsoi_slope = zero_tc_slope(&fdsoi(), 10.0, &w6s);
    assert!(fdsoi_slope.abs() < 50.0, "fdsoi zero-TC V_B2 slope {fdsoi_slope} µV/°C");
}

#[test]
fn size_sweep_records_failures_per_cell() {
    let c = fdsoi();
    let cells = size_sweep_2t(&c, &[10.0, -1.0], &[40.0], 1.8, &grid(), &CircuitOptions::for_card(&c)).unwrap();
    assert!(cells[0].error.is_none() && cells[1].error.is_some());
    assert!(size_sweep_2t(&c, &[], &[1.0], 1.8, &grid(), &CircuitOptions::for_card(&c)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn box_metric_is_scale_invariant(
        ys in proptest::collection::vec(0.1f64..10.0, 2..40),
        k in -30.0f64..30.0,
    ) {
        let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
        let scaled: Vec<f64> = ys.iter().map(|y| y * k.exp()).collect();
        let a = box_metric(&xs, &ys, Normalization::Mean).unwrap();
        let b = box_metric(&xs, &scaled, Normalization::Mean).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
    }
}
