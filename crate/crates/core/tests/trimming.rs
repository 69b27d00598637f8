mod common;

use common::{bulk, fdsoi};
use pcref::analysis::{box_tc, sweep_temperature, Grid};
use pcref::circuits::{solve_pcr, CircuitOptions};
use pcref::trimming::{
    iout_trim_mirror, iref_trim_resistance, search_iref_trim, search_tc_trim, tc_trim_effective_w5, TcTrimMethod,
    TrimState,
};

fn grid() -> Grid {
    Grid::industrial(5.0)
}

fn with_codes(opts: &CircuitOptions, tc_code: u32, iref_code: u32) -> CircuitOptions {
    CircuitOptions { trim: Some(TrimState { tc_code, iref_code }), ..opts.clone() }
}

#[test]
fn nominal_codes_reproduce_untrimmed_design() {
    for card in [fdsoi(), bulk()] {
        let cfg = card.trim.clone().unwrap();
        let opts = CircuitOptions::for_card(&card);
        let v = card.v_dd_nominal;
        let plain = solve_pcr(&card, v, 25.0, &opts).unwrap();
        let nominal = solve_pcr(&card, v, 25.0, &with_codes(&opts, cfg.nominal_tc_code, cfg.nominal_iref_code)).unwrap();
        assert!((nominal.i_out / plain.i_out - 1.0).abs() < 1e-12, "{}", card.name);
    }
}

#[test]
fn config_mappings_on_shipped_cards() {
    let f = fdsoi().trim.unwrap();
    assert_eq!(tc_trim_effective_w5(&f, 0xF).unwrap(), 14.375);
    assert_eq!(iref_trim_resistance(&f, 255).unwrap(), f.r_fixed.unwrap());
    assert!(iout_trim_mirror(&f, 0, 1e-9).is_err());
    let b = bulk().trim.unwrap();
    assert_eq!(iout_trim_mirror(&b, 10, 5e-9).unwrap(), 5e-9);
    assert_eq!(iout_trim_mirror(&b, 0, 5e-9).unwrap(), 2.5e-9);
    assert!(iref_trim_resistance(&b, 0).is_err());
    assert!(tc_trim_effective_w5(&b, 32).is_err());
}

#[test]
fn full_profile_is_the_brute_force_argmin() {
    for card in [fdsoi(), bulk()] {
        let cfg = card.trim.clone().unwrap();
        let opts = CircuitOptions::for_card(&card);
        let v = card.v_dd_nominal;
        let r = search_tc_trim(&card, v, &grid(), &opts, TcTrimMethod::FullProfile).unwrap();
        let brute: Vec<f64> = (0..cfg.tc_codes())
            .map(|c| {
                let o = with_codes(&opts, c, cfg.nominal_iref_code);
                box_tc(&sweep_temperature(&card, v, &grid(), &o).unwrap()).unwrap()
            })
            .collect();
        let best = brute.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(brute[r.tc_code as usize], best, "{}", card.name);
        assert_eq!(r.box_tc, best);
        assert_eq!(r.scan.len(), brute.len());
    }
}

#[test]
fn single_effective_code_ties_to_zero() {
    let mut card = fdsoi();
    let t = card.trim.as_mut().unwrap();
    t.tc_bits = 1;
    t.tc_unit_w = 1e-300;
    t.tc_fixed_w = 10.0;
    t.nominal_tc_code = 0;
    let opts = CircuitOptions::for_card(&card);
    let r = search_tc_trim(&card, 1.8, &grid(), &opts, TcTrimMethod::FullProfile).unwrap();
    assert_eq!(r.scan[0].1, r.scan[1].1);
    assert_eq!(r.tc_code, 0);
}

#[test]
fn resistor_trim_is_monotone_and_convex() {
    let card = fdsoi();
    let opts = CircuitOptions::for_card(&card);
    let tc = card.trim.as_ref().unwrap().nominal_tc_code;
    let i: Vec<f64> = (0..=255)
        .step_by(15)
        .map(|c| solve_pcr(&card, 1.8, 25.0, &with_codes(&opts, tc, c)).unwrap().i_ref)
        .collect();
    assert!(i.windows(2).all(|w| w[1] > w[0]));
    assert!(i.windows(3).all(|w| w[2] - w[1] > w[1] - w[0]), "current vs code should curve upward");
}

#[test]
fn iref_search_hits_exact_code_values() {
    for card in [fdsoi(), bulk()] {
        let cfg = card.trim.clone().unwrap();
        let opts = with_codes(&CircuitOptions::for_card(&card), cfg.nominal_tc_code, 0);
        let v = card.v_dd_nominal;
        let probe = search_iref_trim(&card, v, 25.0, solve_pcr(&card, v, 25.0, &opts).unwrap().i_out * 1.05, &opts)
            .unwrap();
        for k in [1, cfg.iref_codes() / 2, cfg.iref_codes() - 2] {
            let target = probe.scan[k as usize].1;
            let r = search_iref_trim(&card, v, 25.0, target, &opts).unwrap();
            assert_eq!(r.iref_code, k, "{}", card.name);
            assert_eq!(r.achieved, target);
        }
    }
}

#[test]
fn iref_search_reports_span() {
    let card = bulk();
    let opts = with_codes(&CircuitOptions::for_card(&card), 12, 10);
    let e = search_iref_trim(&card, 1.2, 25.0, 1.0, &opts).unwrap_err();
    assert!(e.to_string().contains("achievable span"), "{e}");
    let untrimmed = CircuitOptions::for_card(&card);
    assert!(search_iref_trim(&card, 1.2, 25.0, 5e-9, &untrimmed).is_err());
}

/// Largest residual relative to target over targets spread across ±20%.
fn worst_residual(card: &pcref::techcard::TechnologyCard) -> f64 {
    let cfg = card.trim.clone().unwrap();
    let v = card.v_dd_nominal;
    let opts = with_codes(&CircuitOptions::for_card(card), cfg.nominal_tc_code, cfg.nominal_iref_code);
    let i0 = solve_pcr(card, v, 25.0, &opts).unwrap().i_out;
    (0..=40)
        .map(|k| i0 * (0.8 + 0.01 * f64::from(k)))
        .map(|target| {
            let r = search_iref_trim(card, v, 25.0, target, &opts).unwrap();
            let c = r.iref_code as usize;
            let lo = if c > 0 { r.scan[c].1 - r.scan[c - 1].1 } else { f64::INFINITY };
            let hi = if c + 1 < r.scan.len() { r.scan[c + 1].1 - r.scan[c].1 } else { f64::INFINITY };
            let err = (r.achieved - target).abs();
            // Nearest-code rounding: the residual never exceeds half the wider neighbouring step.
            let step = [lo, hi].into_iter().filter(|s| s.is_finite()).fold(0.0, f64::max);
            assert!(err <= 0.5 * step * (1.0 + 1e-9), "{}: {err:e} vs step {step:e}", card.name);
            err / target
        })
        .fold(0.0, f64::max)
}

#[test]
fn eight_bit_resistor_trim_is_finer_than_five_bit_mirror() {
    let resistor = worst_residual(&fdsoi());
    let mirror = worst_residual(&bulk());
    assert!(resistor * 5.0 < mirror, "resistor {resistor:e} vs mirror {mirror:e}");
}

#[test]
fn tc_trim_moves_current_and_iref_trim_restores_it() {
    let card = fdsoi();
    let cfg = card.trim.clone().unwrap();
    let opts = CircuitOptions::for_card(&card);
    let target = solve_pcr(&card, 1.8, 25.0, &opts).unwrap().i_ref;
    let best = search_tc_trim(&card, 1.8, &grid(), &opts, TcTrimMethod::FullProfile).unwrap();
    assert_ne!(best.tc_code, cfg.nominal_tc_code);
    let moved = solve_pcr(&card, 1.8, 25.0, &with_codes(&opts, best.tc_code, cfg.nominal_iref_code)).unwrap().i_ref;
    assert!((moved / target - 1.0).abs() > 1e-3);
    let fixed = with_codes(&opts, best.tc_code, 0);
    let r = search_iref_trim(&card, 1.8, 25.0, target, &fixed).unwrap();
    let c = r.iref_code as usize;
    let step = (r.scan[c + 1].1 - r.scan[c].1).max(r.scan[c].1 - r.scan[c - 1].1);
    assert!((r.achieved - target).abs() <= step);
}

#[test]
fn missing_trim_config_is_an_error() {
    let mut card = fdsoi();
    card.trim = None;
    let opts = CircuitOptions::for_card(&card);
    assert!(search_tc_trim(&card, 1.8, &grid(), &opts, TcTrimMethod::FullProfile).is_err());
    let with_state = with_codes(&opts, 1, 1);
    assert!(solve_pcr(&card, 1.8, 25.0, &with_state).is_err());
}
