//! Component physics: subthreshold MOSFET, body effect, resistor and
//! junction-leakage temperature laws.
//!
//! Every function takes the card reference temperature `t_ref` explicitly,
//! since the MOSFET temperature laws are anchored to the card rather than to
//! the individual device. pMOS devices are evaluated on magnitudes.

use crate::error::{Error, Result};
use crate::techcard::{BodyModel, DiodeParams, MosfetParams, ResistorParams};

pub const BOLTZMANN: f64 = 1.380649e-23;
pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;
pub const ZERO_CELSIUS: f64 = 273.15;

/// k/q in V/K.
pub const K_OVER_Q: f64 = BOLTZMANN / ELEMENTARY_CHARGE;

pub fn kelvin(temp: f64) -> f64 {
    temp + ZERO_CELSIUS
}

pub fn thermal_voltage(temp: f64) -> f64 {
    debug_assert!(temp > -ZERO_CELSIUS);
    K_OVER_Q * kelvin(temp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasPoint {
    pub v_gs: f64,
    pub v_bs: f64,
    pub v_ds: f64,
    pub temp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallSignal {
    pub g_m: f64,
    pub g_d: f64,
    pub g_mb: f64,
}

/// Specific sheet current at `temp`.
pub fn isq(p: &MosfetParams, t_ref: f64, temp: f64) -> f64 {
    p.isq_ref * (kelvin(temp) / kelvin(t_ref)).powf(2.0 - p.m_mu)
}

/// Zero-bias threshold at `temp`.
pub fn vt0(p: &MosfetParams, t_ref: f64, temp: f64) -> f64 {
    p.vt0_ref + p.k_vt * (temp - t_ref)
}

pub fn gamma_star(p: &MosfetParams, t_ref: f64, temp: f64) -> f64 {
    p.gamma_star_ref * (1.0 + p.k_gamma * (temp - t_ref))
}

fn bulk_terms(p: &MosfetParams, t_ref: f64, v_bs: f64, temp: f64) -> Result<(f64, f64, f64)> {
    let gamma_b = p.gamma_b.unwrap_or(0.0);
    let phi = p.phi_fp_ref.unwrap_or(0.0) + p.k_phi.unwrap_or(0.0) * (temp - t_ref);
    let arg = 2.0 * phi - v_bs;
    if !(arg > 0.0) || !(phi > 0.0) {
        return Err(Error::Domain(format!(
            "body effect: 2*phi_fp - v_bs = {arg:.6} V is not positive for {}",
            p.name
        )));
    }
    Ok((gamma_b, phi, arg))
}

/// Threshold shift caused by a body-source voltage (negative under FBB).
pub fn delta_vt_body(p: &MosfetParams, t_ref: f64, v_bs: f64, temp: f64) -> Result<f64> {
    match p.body_model {
        BodyModel::Linearized => Ok(-gamma_star(p, t_ref, temp) * v_bs),
        BodyModel::BulkSqrt => {
            let (g, phi, arg) = bulk_terms(p, t_ref, v_bs, temp)?;
            Ok(g * (arg.sqrt() - (2.0 * phi).sqrt()))
        }
    }
}

/// Local body factor −∂ΔV_T/∂V_BS.
pub fn body_slope(p: &MosfetParams, t_ref: f64, v_bs: f64, temp: f64) -> Result<f64> {
    match p.body_model {
        BodyModel::Linearized => Ok(gamma_star(p, t_ref, temp)),
        BodyModel::BulkSqrt => {
            let (g, _, arg) = bulk_terms(p, t_ref, v_bs, temp)?;
            Ok(g / (2.0 * arg.sqrt()))
        }
    }
}

/// Explicit temperature partial ∂ΔV_T/∂T at fixed V_BS.
pub fn body_temp_partial(p: &MosfetParams, t_ref: f64, v_bs: f64, temp: f64) -> Result<f64> {
    match p.body_model {
        BodyModel::Linearized => Ok(-p.gamma_star_ref * p.k_gamma * v_bs),
        BodyModel::BulkSqrt => {
            let (g, phi, arg) = bulk_terms(p, t_ref, v_bs, temp)?;
            let k_phi = p.k_phi.unwrap_or(0.0);
            Ok(g * k_phi * (1.0 / arg.sqrt() - 1.0 / (2.0 * phi).sqrt()))
        }
    }
}

pub fn threshold(p: &MosfetParams, t_ref: f64, v_bs: f64, temp: f64) -> Result<f64> {
    Ok(vt0(p, t_ref, temp) + delta_vt_body(p, t_ref, v_bs, temp)?)
}

/// Saturation and channel-length-modulation factor
/// (1 − e^(−V_DS/U_T))·(1 + λ·V_DS).
pub fn drain_factor(p: &MosfetParams, v_ds: f64, temp: f64) -> f64 {
    let ut = thermal_voltage(temp);
    -(-v_ds / ut).exp_m1() * (1.0 + p.lambda * v_ds)
}

fn prefactor(p: &MosfetParams, t_ref: f64, temp: f64) -> f64 {
    isq(p, t_ref, temp) * p.s_total()
}

pub fn mosfet_ids(p: &MosfetParams, t_ref: f64, b: &BiasPoint) -> Result<f64> {
    let vt = threshold(p, t_ref, b.v_bs, b.temp)?;
    let ut = thermal_voltage(b.temp);
    Ok(prefactor(p, t_ref, b.temp)
        * ((b.v_gs - vt) / (p.n * ut)).exp()
        * drain_factor(p, b.v_ds, b.temp))
}

/// Current with the drain factors disabled (λ = 0, V_DS ≫ U_T).
pub fn mosfet_ids_ideal(p: &MosfetParams, t_ref: f64, v_gs: f64, v_bs: f64, temp: f64) -> Result<f64> {
    let vt = threshold(p, t_ref, v_bs, temp)?;
    Ok(prefactor(p, t_ref, temp) * ((v_gs - vt) / (p.n * thermal_voltage(temp))).exp())
}

/// Inverse of the ideal current law.
pub fn mosfet_vgs(p: &MosfetParams, t_ref: f64, i_ds: f64, v_bs: f64, temp: f64) -> Result<f64> {
    mosfet_vgs_at(p, t_ref, i_ds, v_bs, None, temp)
}

/// Inverse of [`mosfet_ids`] at a given V_DS, or of the ideal law when
/// `v_ds` is `None`.
pub fn mosfet_vgs_at(
    p: &MosfetParams,
    t_ref: f64,
    i_ds: f64,
    v_bs: f64,
    v_ds: Option<f64>,
    temp: f64,
) -> Result<f64> {
    if !(i_ds > 0.0) {
        return Err(Error::Domain(format!("mosfet_vgs needs i_ds > 0, got {i_ds:e}")));
    }
    let mut denom = prefactor(p, t_ref, temp);
    if let Some(v) = v_ds {
        let f = drain_factor(p, v, temp);
        if !(f > 0.0) {
            return Err(Error::Domain(format!("{}: v_ds = {v} V leaves no channel current", p.name)));
        }
        denom *= f;
    }
    let vt = threshold(p, t_ref, v_bs, temp)?;
    Ok(vt + p.n * thermal_voltage(temp) * (i_ds / denom).ln())
}

/// Small-signal conductances at a saturated bias point.
///
/// g_d is the exact derivative of the drain factor, which reduces to I·λ
/// once e^(−V_DS/U_T) is negligible; g_mb uses the local body slope.
pub fn small_signal(p: &MosfetParams, t_ref: f64, b: &BiasPoint) -> Result<SmallSignal> {
    let ut = thermal_voltage(b.temp);
    if !(b.v_ds > 4.0 * ut) {
        return Err(Error::Precondition(format!(
            "{}: small-signal model needs V_DS > 4 U_T ({:.4} V), got {:.4} V",
            p.name,
            4.0 * ut,
            b.v_ds
        )));
    }
    let i = mosfet_ids(p, t_ref, b)?;
    let g_m = i / (p.n * ut);
    let e = (-b.v_ds / ut).exp();
    let g_d = i * (p.lambda / (1.0 + p.lambda * b.v_ds) + e / (ut * -(-b.v_ds / ut).exp_m1()));
    let g_mb = g_m * body_slope(p, t_ref, b.v_bs, b.temp)?;
    Ok(SmallSignal { g_m, g_d, g_mb })
}

pub fn resistor_value(r: &ResistorParams, temp: f64) -> f64 {
    let dt = temp - r.t_ref;
    r.r_ref * (1.0 + r.alpha1 * dt + r.alpha2 * dt * dt)
}

/// Analytic TCR (1/R)·dR/dT in 1/°C.
pub fn resistor_tcr(r: &ResistorParams, temp: f64) -> f64 {
    let dt = temp - r.t_ref;
    (r.alpha1 + 2.0 * r.alpha2 * dt) / (1.0 + r.alpha1 * dt + r.alpha2 * dt * dt)
}

/// Reverse leakage of a junction at reverse voltage `v_d`.
pub fn diode_leakage(d: &DiodeParams, v_d: f64, temp: f64) -> Result<f64> {
    if v_d < 0.0 {
        return Err(Error::Domain(format!("diode forward bias {v_d} V is out of model scope")));
    }
    let ut = thermal_voltage(temp);
    Ok(d.j_ref
        * d.area
        * ((temp - d.t_ref) / d.theta).exp()
        * -(-v_d / ut).exp_m1()
        * (1.0 + d.kappa * (v_d - d.v_ref)))
}

/// θ that carries a leakage density from `j1` to `j2` over `span` °C.
pub fn fit_theta(j1: f64, j2: f64, span: f64) -> f64 {
    span / (j2 / j1).ln()
}
