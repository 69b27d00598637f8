//! Helpers shared by the integration tests.

#![allow(dead_code)]

use pcref::techcard::{builtin_card, BodyModel, CornerSpec, FlavorShift, Polarity, TechnologyCard};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fdsoi() -> TechnologyCard {
    builtin_card("fdsoi22").unwrap()
}

pub fn bulk() -> TechnologyCard {
    builtin_card("bulk110").unwrap()
}

pub fn both_cards() -> [TechnologyCard; 2] {
    [fdsoi(), bulk()]
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Set λ on every device.
pub fn with_lambda(card: &TechnologyCard, lambda: f64) -> TechnologyCard {
    let mut c = card.clone();
    for p in c.devices.values_mut() {
        p.lambda = lambda;
    }
    c
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// A valid card obtained by randomizing every device, the resistor and the
/// non-TT corners of one of the shipped cards.
pub fn random_card(seed: u64) -> TechnologyCard {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = if rng.gen_bool(0.5) { fdsoi() } else { bulk() };
    c.name = format!("random-{seed}");
    for p in c.devices.values_mut() {
        p.n = rng.gen_range(1.05..1.6);
        p.vt0_ref = rng.gen_range(0.1..0.8);
        p.k_vt = rng.gen_range(-1.5e-3..-0.2e-3);
        p.isq_ref = log_uniform(&mut rng, 1e-9, 1e-6);
        p.m_mu = rng.gen_range(1.2..2.0);
        p.lambda = rng.gen_range(0.0..0.1);
        p.w = log_uniform(&mut rng, 0.2, 20.0);
        p.l = log_uniform(&mut rng, 0.05, 40.0);
        p.mult = rng.gen_range(1..=16);
        match p.body_model {
            BodyModel::Linearized => {
                p.gamma_star_ref = rng.gen_range(0.01..0.25);
                p.k_gamma = rng.gen_range(-1e-3..1e-3);
            }
            BodyModel::BulkSqrt => {
                p.gamma_b = Some(rng.gen_range(0.05..0.5));
                p.phi_fp_ref = Some(rng.gen_range(0.3..0.5));
                p.k_phi = Some(rng.gen_range(-1e-3..0.0));
            }
        }
    }
    c.resistor.r_ref = log_uniform(&mut rng, 1e5, 1e8);
    c.resistor.alpha1 = rng.gen_range(-1e-3..1e-3);
    c.resistor.alpha2 = rng.gen_range(-1e-6..1e-6);
    let flavors: Vec<String> = {
        let mut f: Vec<String> = c.devices.values().map(|p| p.flavor.clone()).collect();
        f.sort();
        f.dedup();
        f
    };
    for (name, spec) in c.corners.iter_mut() {
        if name == "TT" {
            continue;
        }
        let mut shifted = CornerSpec { flavors: Default::default(), resistor_mult: rng.gen_range(0.7..1.3) };
        for f in &flavors {
            let skew_p = rng.gen_bool(0.5);
            shifted.flavors.insert(
                f.clone(),
                FlavorShift {
                    dvt0: rng.gen_range(-0.06..0.06),
                    mu_mult: rng.gen_range(0.7..1.3),
                    dvt0_p: skew_p.then(|| rng.gen_range(-0.06..0.06)),
                    mu_mult_p: skew_p.then(|| rng.gen_range(0.7..1.3)),
                },
            );
        }
        *spec = shifted;
    }
    c.validate().expect("generator produces valid cards");
    c
}

/// Random bias inside the model domain for a device of `card`.
pub fn random_bias(rng: &mut ChaCha8Rng) -> (f64, f64, f64, f64) {
    let v_gs = rng.gen_range(0.0..0.7);
    let v_bs = rng.gen_range(0.0..0.3);
    let v_ds = rng.gen_range(0.05..1.5);
    let temp = rng.gen_range(-40.0..85.0);
    (v_gs, v_bs, v_ds, temp)
}

pub fn is_nmos(p: &pcref::techcard::MosfetParams) -> bool {
    p.polarity == Polarity::N
}
