//! DC operating points of the 2T body-bias generator and of the conventional
//! and proposed peaking current references.
//!
//! The PCR is reduced to its loop equation with one scalar unknown (the
//! reference current); the 2T generator to one scalar node voltage. Both are
//! solved by Newton with bisection fallback.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::devmodel::{
    diode_leakage, kelvin, mosfet_ids, mosfet_ids_ideal, mosfet_vgs, mosfet_vgs_at, resistor_value,
    thermal_voltage, vt0, isq, BiasPoint, K_OVER_Q,
};
use crate::error::{Error, Result};
use crate::solver::{find_root, Problem, SolverOptions};
use crate::techcard::{MosfetParams, ResistorParams, Role, TechnologyCard};
use crate::trimming::{iout_trim_mirror, iref_trim_resistance, tc_trim_effective_w5, IrefStyle, TrimState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Conventional,
    Proposed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitOptions {
    pub topology: Topology,
    pub include_diode: bool,
    pub include_replica: bool,
    pub include_m7: bool,
    /// Enable the saturation and channel-length-modulation factors. With
    /// this off every device follows the ideal exponential law.
    pub vds_factors: bool,
    pub trim: Option<TrimState>,
    pub solver: SolverOptions,
}

impl Default for CircuitOptions {
    fn default() -> Self {
        CircuitOptions {
            topology: Topology::Proposed,
            include_diode: true,
            include_replica: true,
            include_m7: false,
            vds_factors: true,
            trim: None,
            solver: SolverOptions::default(),
        }
    }
}

impl CircuitOptions {
    /// Defaults for a card: M7 included whenever the card defines it.
    pub fn for_card(card: &TechnologyCard) -> Self {
        CircuitOptions { include_m7: card.has(Role::M7), ..Self::default() }
    }

    pub fn with_topology(mut self, t: Topology) -> Self {
        self.topology = t;
        self
    }
}

/// Saturation (V_DS > 4 U_T) per device. M5/M6 report `true` for the
/// conventional topology, which has no 2T generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Saturation {
    pub m1: bool,
    pub m2: bool,
    pub m4: bool,
    pub m5: bool,
    pub m6: bool,
}

impl Saturation {
    pub fn all(&self) -> bool {
        self.m1 && self.m2 && self.m4 && self.m5 && self.m6
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoTPoint {
    pub v_b2: f64,
    pub v_dnw: Option<f64>,
    pub i_dio: f64,
    /// Current through the diode-connected bottom device M5.
    pub i_2t: f64,
    pub v_ds6: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub topology: Topology,
    pub v_dd: f64,
    pub temp: f64,
    pub i_ref: f64,
    /// Trimmed output current (equals `i_ref` unless an output mirror trims it).
    pub i_out: f64,
    /// Current of the M1 branch.
    pub i1: f64,
    pub r: f64,
    pub v_b2: f64,
    pub v_dnw: Option<f64>,
    pub i_dio: f64,
    pub i_2t: f64,
    pub v_ds6: f64,
    pub v_gs1: f64,
    pub v_gs2: f64,
    pub v_sg4: f64,
    pub v_ds1: f64,
    pub v_ds2: f64,
    pub v_ds4: f64,
    pub saturated: Saturation,
    pub converged: bool,
    pub iterations: usize,
}

fn check_temp(card: &TechnologyCard, temp: f64) -> Result<()> {
    if !(temp >= card.t_valid_min && temp <= card.t_valid_max) {
        return Err(Error::Input(format!(
            "temperature {temp} °C outside card validity range [{}, {}]",
            card.t_valid_min, card.t_valid_max
        )));
    }
    Ok(())
}

fn check_trim(card: &TechnologyCard, trim: Option<&TrimState>) -> Result<()> {
    if let Some(t) = trim {
        card.trim
            .as_ref()
            .ok_or_else(|| Error::Input(format!("card {} has no trim configuration", card.name)))?
            .check_state(t)?;
    }
    Ok(())
}

/// M5 with the TC-trim effective width applied.
pub fn m5_params<'a>(card: &'a TechnologyCard, trim: Option<&TrimState>) -> Result<Cow<'a, MosfetParams>> {
    let m5 = card.device(Role::M5)?;
    match (trim, card.trim.as_ref()) {
        (Some(t), Some(cfg)) => {
            let mut p = m5.clone();
            p.w = tc_trim_effective_w5(cfg, t.tc_code)?;
            p.mult = 1;
            Ok(Cow::Owned(p))
        }
        _ => Ok(Cow::Borrowed(m5)),
    }
}

/// Loop resistor, with the I_REF trim resistance replacing r_ref when a
/// series-resistor trim state is given. The TCR law is unchanged.
pub fn loop_resistor(card: &TechnologyCard, trim: Option<&TrimState>) -> Result<ResistorParams> {
    let mut r = card.resistor.clone();
    if let (Some(t), Some(cfg)) = (trim, card.trim.as_ref()) {
        if cfg.iref_style == IrefStyle::SeriesResistor {
            r.r_ref = iref_trim_resistance(cfg, t.iref_code)?;
        }
    }
    Ok(r)
}

pub fn loop_resistance(card: &TechnologyCard, temp: f64, trim: Option<&TrimState>) -> Result<f64> {
    Ok(resistor_value(&loop_resistor(card, trim)?, temp))
}

/// Closed-form 2T output for zero-V_GS M6 over diode-connected M5.
pub fn v_b2_closed_form(card: &TechnologyCard, temp: f64, trim: Option<&TrimState>) -> Result<f64> {
    let m5 = m5_params(card, trim)?;
    let m6 = card.device(Role::M6)?;
    Ok(closed_form(&m5, m6, card.t_ref, temp))
}

fn closed_form(m5: &MosfetParams, m6: &MosfetParams, t_ref: f64, temp: f64) -> f64 {
    let ratio = isq(m6, t_ref, temp) * m6.s_total() / (isq(m5, t_ref, temp) * m5.s_total());
    vt0(m5, t_ref, temp) - m5.n / m6.n * vt0(m6, t_ref, temp) + m5.n * thermal_voltage(temp) * ratio.ln()
}

/// Analytic temperature derivative of [`v_b2_closed_form`] (V/°C).
pub fn v_b2_closed_form_slope(card: &TechnologyCard, temp: f64, trim: Option<&TrimState>) -> Result<f64> {
    let m5 = m5_params(card, trim)?;
    let m6 = card.device(Role::M6)?;
    let t_ref = card.t_ref;
    let ratio = isq(m6, t_ref, temp) * m6.s_total() / (isq(&m5, t_ref, temp) * m5.s_total());
    Ok(m5.k_vt - m5.n / m6.n * m6.k_vt
        + m5.n * K_OVER_Q * ratio.ln()
        + m5.n * thermal_voltage(temp) * (m5.m_mu - m6.m_mu) / kelvin(temp))
}

fn same_physics(a: &MosfetParams, b: &MosfetParams) -> bool {
    let mut b = b.clone();
    b.name.clone_from(&a.name);
    *a == b
}

struct Stack<'a> {
    m5: &'a MosfetParams,
    m6: &'a MosfetParams,
    m7: Option<&'a MosfetParams>,
}

struct TwoTEnv<'a> {
    t_ref: f64,
    v_dd: f64,
    temp: f64,
    ideal: bool,
    solver: &'a SolverOptions,
}

fn zero_vgs(p: &MosfetParams, env: &TwoTEnv, v_ds: f64) -> Result<f64> {
    if env.ideal {
        return mosfet_ids_ideal(p, env.t_ref, 0.0, 0.0, env.temp);
    }
    if v_ds <= 0.0 {
        return Ok(0.0);
    }
    mosfet_ids(p, env.t_ref, &BiasPoint { v_gs: 0.0, v_bs: 0.0, v_ds, temp: env.temp })
}

/// Current of the zero-V_GS top stack and the resulting V_DS6.
fn top_current(st: &Stack, env: &TwoTEnv, v_b2: f64) -> Result<(f64, f64)> {
    let head = env.v_dd - v_b2;
    let Some(m7) = st.m7 else {
        return Ok((zero_vgs(st.m6, env, head)?, head));
    };
    if env.ideal || same_physics(st.m6, m7) || head <= 0.0 {
        return Ok((zero_vgs(st.m6, env, 0.5 * head)?, 0.5 * head));
    }
    // Internal node between M6 and M7 by current continuity.
    let ut = thermal_voltage(env.temp);
    let g = |v_x: f64| -> Result<f64> {
        let i6 = zero_vgs(st.m6, env, v_x - v_b2)?;
        let i7 = zero_vgs(m7, env, env.v_dd - v_x)?;
        Ok(ut * (i6.ln() - i7.ln()))
    };
    let pb = Problem {
        x0: v_b2 + 0.5 * head,
        lo: v_b2,
        hi: env.v_dd,
        x_tol: env.solver.tol_v * 1e-2,
        f_tol: env.solver.tol_v * 1e-2,
    };
    let root = find_root(g, pb, env.solver)?;
    let v_ds6 = root.x - v_b2;
    Ok((zero_vgs(st.m6, env, v_ds6)?, v_ds6))
}

fn bottom_current(m5: &MosfetParams, env: &TwoTEnv, v_b2: f64) -> Result<f64> {
    if env.ideal {
        return mosfet_ids_ideal(m5, env.t_ref, v_b2, 0.0, env.temp);
    }
    if v_b2 <= 0.0 {
        return Ok(0.0);
    }
    mosfet_ids(m5, env.t_ref, &BiasPoint { v_gs: v_b2, v_bs: 0.0, v_ds: v_b2, temp: env.temp })
}

fn solve_stack(
    st: &Stack,
    env: &TwoTEnv,
    leak: &dyn Fn(f64) -> Result<f64>,
) -> Result<(f64, f64, f64, usize)> {
    let nut = st.m5.n * thermal_voltage(env.temp);
    let f = |v: f64| -> Result<f64> {
        let i5 = bottom_current(st.m5, env, v)?;
        let (i_top, _) = top_current(st, env, v)?;
        Ok(nut * (i5.ln() - (i_top + leak(v)?).ln()))
    };
    let guess = closed_form(st.m5, st.m6, env.t_ref, env.temp);
    let (lo, hi) = if env.ideal {
        (guess - 1.0, guess + 1.0)
    } else {
        (1e-9, env.v_dd - 1e-9)
    };
    if !(hi > lo) {
        return Err(Error::Headroom(format!("v_dd = {} V leaves no 2T operating range", env.v_dd)));
    }
    let pb = Problem {
        x0: guess.clamp(lo + 1e-6 * (hi - lo), hi - 1e-6 * (hi - lo)),
        lo,
        hi,
        x_tol: env.solver.tol_v,
        f_tol: env.solver.tol_v,
    };
    let root = find_root(f, pb, env.solver)?;
    let v_b2 = root.x;
    let i5 = bottom_current(st.m5, env, v_b2)?;
    let (_, v_ds6) = top_current(st, env, v_b2)?;
    Ok((v_b2, i5, v_ds6, root.iterations))
}

fn headroom_2t(v_b2: f64, env: &TwoTEnv, stacked: bool, label: &str) -> Result<()> {
    let need = 4.0 * thermal_voltage(env.temp) * if stacked { 2.0 } else { 1.0 };
    if env.v_dd - v_b2 < need {
        return Err(Error::Headroom(format!(
            "v_dd = {} V below {label} headroom (V_B2 = {v_b2:.4} V needs {need:.4} V above it)",
            env.v_dd
        )));
    }
    Ok(())
}

/// Solve the 2T body-bias node, including diode injection and the
/// leakage-suppression replica when enabled.
pub fn solve_2t(card: &TechnologyCard, v_dd: f64, temp: f64, opts: &CircuitOptions) -> Result<TwoTPoint> {
    check_temp(card, temp)?;
    check_trim(card, opts.trim.as_ref())?;
    opts.solver.validate()?;
    if !(v_dd > 0.0) {
        return Err(Error::Input(format!("v_dd must be > 0, got {v_dd}")));
    }
    let env = TwoTEnv { t_ref: card.t_ref, v_dd, temp, ideal: !opts.vds_factors, solver: &opts.solver };
    let m7 = if opts.include_m7 { Some(card.device(Role::M7)?) } else { None };
    let no_leak = |_: f64| Ok(0.0);

    let mut v_dnw = None;
    let mut iterations = 0;
    if opts.include_diode && opts.include_replica {
        let m7b = if opts.include_m7 { Some(card.device(Role::M7B)?) } else { None };
        let replica = Stack { m5: card.device(Role::M5B)?, m6: card.device(Role::M6B)?, m7: m7b };
        let (v, _, _, it) = solve_stack(&replica, &env, &no_leak)?;
        headroom_2t(v, &env, m7b.is_some(), "replica 2T")?;
        v_dnw = Some(v);
        iterations += it;
    }

    let m5 = m5_params(card, opts.trim.as_ref())?;
    let core = Stack { m5: &m5, m6: card.device(Role::M6)?, m7 };
    let diode = &card.diode_pw_dnw;
    let well = v_dnw.unwrap_or(v_dd);
    let leak = |v: f64| -> Result<f64> {
        // Forward bias is out of model scope; the junction is clamped off.
        diode_leakage(diode, (well - v).max(0.0), temp)
    };
    let (v_b2, i_2t, v_ds6, it) = if opts.include_diode {
        solve_stack(&core, &env, &leak)?
    } else {
        solve_stack(&core, &env, &no_leak)?
    };
    headroom_2t(v_b2, &env, m7.is_some(), "2T")?;
    let i_dio = if opts.include_diode { leak(v_b2)? } else { 0.0 };
    Ok(TwoTPoint { v_b2, v_dnw, i_dio, i_2t, v_ds6, iterations: iterations + it })
}

/// Minimum supply from the three stacked drives.
pub fn vdd_min_from(v_gs1: f64, v_sg4: f64, v_b2: f64, temp: f64) -> f64 {
    4.0 * thermal_voltage(temp) + v_gs1.max(v_sg4).max(v_b2)
}

struct LoopEval {
    v_sg4: f64,
    v_ds2: f64,
    v_gs2: f64,
    v_ds1: f64,
    v_gs1: f64,
    residual: f64,
}

/// M1's drain sits on M2's gate, so V_DS1 = V_GS2 (equal to V_GS1 − J·R·I
/// at the solution). Kept in one place so the wiring can be revised.
fn v_ds1_assignment(v_gs2: f64) -> f64 {
    v_gs2
}

/// Solve the PCR loop equation for the reference current.
pub fn solve_pcr(card: &TechnologyCard, v_dd: f64, temp: f64, opts: &CircuitOptions) -> Result<OperatingPoint> {
    check_temp(card, temp)?;
    check_trim(card, opts.trim.as_ref())?;
    opts.solver.validate()?;
    if !(v_dd > 0.0) {
        return Err(Error::Input(format!("v_dd must be > 0, got {v_dd}")));
    }
    let t_ref = card.t_ref;
    let ut = thermal_voltage(temp);
    let two_t = match opts.topology {
        Topology::Proposed => Some(solve_2t(card, v_dd, temp, opts)?),
        Topology::Conventional => None,
    };
    let v_bs2 = two_t.map_or(0.0, |t| t.v_b2);
    let (j, k) = match opts.topology {
        Topology::Conventional => (card.mirror_j, card.mirror_k),
        Topology::Proposed => (1.0, 1.0),
    };
    if opts.topology == Topology::Conventional && !(j * k > 1.0) {
        return Err(Error::Precondition(format!(
            "conventional topology needs J·K > 1 (got {}), otherwise ΔV_GS = 0",
            j * k
        )));
    }
    let r = loop_resistance(card, temp, opts.trim.as_ref())?;
    let m1 = card.device(Role::M1)?;
    let m2 = card.device(Role::M2)?;
    let m4 = card.device(Role::M4)?;
    let branch1 = |i: f64| j * k * i * (1.0 + card.mirror_error);
    let drain = |v: f64| if opts.vds_factors { Some(v) } else { None };

    let eval = |i: f64| -> Result<LoopEval> {
        let v_sg4 = mosfet_vgs(m4, t_ref, i, 0.0, temp)?;
        // Clamped so the residual stays defined past the headroom edge; the
        // final headroom check rejects such points.
        let v_ds2 = (v_dd - v_sg4).max(1e-9);
        let v_gs2 = mosfet_vgs_at(m2, t_ref, i, v_bs2, drain(v_ds2), temp)?;
        let v_ds1 = v_ds1_assignment(v_gs2).max(1e-9);
        let v_gs1 = mosfet_vgs_at(m1, t_ref, branch1(i), 0.0, drain(v_ds1), temp)?;
        Ok(LoopEval { v_sg4, v_ds2, v_gs2, v_ds1, v_gs1, residual: v_gs1 - v_gs2 - j * r * i })
    };

    let probe = 1e-9;
    let dv = mosfet_vgs(m1, t_ref, branch1(probe), 0.0, temp)? - mosfet_vgs(m2, t_ref, probe, v_bs2, temp)?;
    if !(dv > 0.0) {
        return Err(Error::Precondition(format!(
            "no positive drop across R (ΔV_GS = {dv:.6} V); only the I = 0 solution exists"
        )));
    }
    let i_est = dv / (j * r);
    let pb = Problem {
        x0: i_est,
        lo: i_est / 100.0,
        hi: i_est * 100.0,
        x_tol: opts.solver.tol_i,
        f_tol: opts.solver.tol_v,
    };
    let root = find_root(|i| eval(i).map(|e| e.residual), pb, &opts.solver)?;
    let i_ref = root.x;
    let e = eval(i_ref)?;
    let v_b2 = two_t.map_or(0.0, |t| t.v_b2);
    let need = vdd_min_from(e.v_gs1, e.v_sg4, v_b2, temp);
    if v_dd < need {
        return Err(Error::Headroom(format!(
            "v_dd = {v_dd} V below PCR headroom {need:.4} V (V_GS1 = {:.4}, V_SG4 = {:.4}, V_B2 = {v_b2:.4})",
            e.v_gs1, e.v_sg4
        )));
    }
    let i_out = match (opts.trim, card.trim.as_ref()) {
        (Some(t), Some(cfg)) if cfg.iref_style == IrefStyle::OutputMirror => {
            iout_trim_mirror(cfg, t.iref_code, i_ref)?
        }
        _ => i_ref,
    };
    let sat = 4.0 * ut;
    let saturated = Saturation {
        m1: e.v_ds1 > sat,
        m2: e.v_ds2 > sat,
        m4: e.v_sg4 > sat,
        m5: two_t.is_none_or(|t| t.v_b2 > sat),
        m6: two_t.is_none_or(|t| t.v_ds6 > sat),
    };
    Ok(OperatingPoint {
        topology: opts.topology,
        v_dd,
        temp,
        i_ref,
        i_out,
        i1: branch1(i_ref),
        r,
        v_b2,
        v_dnw: two_t.and_then(|t| t.v_dnw),
        i_dio: two_t.map_or(0.0, |t| t.i_dio),
        i_2t: two_t.map_or(0.0, |t| t.i_2t),
        v_ds6: two_t.map_or(0.0, |t| t.v_ds6),
        v_gs1: e.v_gs1,
        v_gs2: e.v_gs2,
        v_sg4: e.v_sg4,
        v_ds1: e.v_ds1,
        v_ds2: e.v_ds2,
        v_ds4: e.v_sg4,
        saturated,
        converged: true,
        iterations: root.iterations + two_t.map_or(0, |t| t.iterations),
    })
}

/// Minimum supply at `temp`, from a solve at the card's nominal supply.
pub fn vdd_min(card: &TechnologyCard, temp: f64, opts: &CircuitOptions) -> Result<f64> {
    let op = solve_pcr(card, card.v_dd_nominal, temp, opts)?;
    Ok(vdd_min_from(op.v_gs1, op.v_sg4, op.v_b2, temp))
}
