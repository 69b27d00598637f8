//! Sweeps and figures of merit: box-method TC and LS, the analytic TC/LS
//! expressions, DC PSRR, FoM₁/FoM₂ and the W5×W6 sizing map.

use rayon::prelude::*;

use crate::circuits::{
    solve_pcr, v_b2_closed_form, v_b2_closed_form_slope, CircuitOptions, OperatingPoint,
    Topology,
};
use crate::devmodel::{
    body_slope, body_temp_partial, delta_vt_body, isq, kelvin, mosfet_vgs_at, resistor_tcr, small_signal,
    thermal_voltage, vt0, BiasPoint, K_OVER_Q,
};
use crate::error::{Error, Result};
use crate::techcard::{Role, TechnologyCard};

/// Inclusive uniform grid `min, min + step, …, max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

pub type TempGrid = Grid;

impl Grid {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Grid> {
        let g = Grid { min, max, step };
        g.points()?;
        Ok(g)
    }

    /// The industrial −40…85 °C range.
    pub fn industrial(step: f64) -> Grid {
        Grid { min: -40.0, max: 85.0, step }
    }

    /// Grid points; `max` is appended when `step` does not divide the span.
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.min < self.max) || !(self.step > 0.0) || !self.max.is_finite() {
            return Err(Error::Input(format!(
                "grid needs min < max and step > 0 (got {}, {}, {})",
                self.min, self.max, self.step
            )));
        }
        let span = (self.max - self.min) / self.step;
        if span > 1e7 {
            return Err(Error::Input("grid has too many points".into()));
        }
        let n = (span + 1e-9).floor() as usize;
        let mut xs: Vec<f64> = (0..=n).map(|i| self.min + i as f64 * self.step).collect();
        let last = xs[n];
        if self.max - last > 1e-9 * self.step {
            xs.push(self.max);
        } else {
            xs[n] = self.max;
        }
        Ok(xs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    Temperature,
    Supply,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSeries {
    pub variable: SweepVariable,
    /// The held quantity: v_dd for temperature sweeps, temp for supply sweeps.
    pub fixed: f64,
    pub opts: CircuitOptions,
    pub samples: Vec<(f64, OperatingPoint)>,
}

impl SweepSeries {
    pub fn xs(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.0).collect()
    }

    pub fn currents(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1.i_ref).collect()
    }

    pub fn v_b2(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1.v_b2).collect()
    }
}

fn run_sweep<F>(xs: Vec<f64>, label: &str, solve: F) -> Result<Vec<(f64, OperatingPoint)>>
where
    F: Fn(f64) -> Result<OperatingPoint> + Sync,
{
    // Collected in grid order, so the first failing x is reported
    // regardless of scheduling.
    xs.par_iter()
        .map(|&x| solve(x).map(|op| (x, op)).map_err(|e| e.at(label, x)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

pub fn sweep_temperature(
    card: &TechnologyCard,
    v_dd: f64,
    grid: &TempGrid,
    opts: &CircuitOptions,
) -> Result<SweepSeries> {
    let samples = run_sweep(grid.points()?, "temp", |t| solve_pcr(card, v_dd, t, opts))?;
    Ok(SweepSeries { variable: SweepVariable::Temperature, fixed: v_dd, opts: opts.clone(), samples })
}

pub fn sweep_supply(card: &TechnologyCard, temp: f64, grid: &Grid, opts: &CircuitOptions) -> Result<SweepSeries> {
    let samples = run_sweep(grid.points()?, "v_dd", |v| solve_pcr(card, v, temp, opts))?;
    Ok(SweepSeries { variable: SweepVariable::Supply, fixed: temp, opts: opts.clone(), samples })
}

/// Which current normalizes a box metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    Mean,
    /// Current at the given abscissa (linearly interpolated).
    At(f64),
}

/// (max − min)/(I_norm·range), dimensionless per unit x.
pub fn box_metric(xs: &[f64], ys: &[f64], norm: Normalization) -> Result<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return Err(Error::Input("box metric needs at least two paired samples".into()));
    }
    let range = xs[xs.len() - 1] - xs[0];
    if !(range > 0.0) {
        return Err(Error::Input("box metric over a degenerate range".into()));
    }
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let i_norm = match norm {
        Normalization::Mean => ys.iter().sum::<f64>() / ys.len() as f64,
        Normalization::At(x) => interpolate(xs, ys, x)?,
    };
    if !(i_norm != 0.0) {
        return Err(Error::Input("box metric normalizing current is zero".into()));
    }
    Ok((hi - lo) / (i_norm * range))
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Result<f64> {
    let k = xs
        .windows(2)
        .position(|w| x >= w[0] && x <= w[1])
        .ok_or_else(|| Error::Input(format!("normalization point {x} outside the sweep")))?;
    let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
    Ok(ys[k] + t * (ys[k + 1] - ys[k]))
}

fn expect(s: &SweepSeries, v: SweepVariable) -> Result<()> {
    if s.variable != v {
        return Err(Error::Input(format!("expected a {v:?} sweep, got {:?}", s.variable)));
    }
    Ok(())
}

/// Box-method TC in ppm/°C, mean-normalized.
pub fn box_tc(s: &SweepSeries) -> Result<f64> {
    box_tc_with(s, Normalization::Mean)
}

pub fn box_tc_with(s: &SweepSeries, norm: Normalization) -> Result<f64> {
    expect(s, SweepVariable::Temperature)?;
    Ok(box_metric(&s.xs(), &s.currents(), norm)? * 1e6)
}

/// Box-method line sensitivity in %/V.
pub fn box_ls(s: &SweepSeries) -> Result<f64> {
    expect(s, SweepVariable::Supply)?;
    Ok(box_metric(&s.xs(), &s.currents(), Normalization::Mean)? * 100.0)
}

/// Least-squares slope dy/dx.
pub fn linear_fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// TC of the conventional PTAT reference, ppm/°C: 1/T − TCR.
pub fn analytic_tc_conventional(card: &TechnologyCard, temp: f64) -> f64 {
    (1.0 / kelvin(temp) - resistor_tcr(&card.resistor, temp)) * 1e6
}

/// Loop voltage ΔV_GS of the proposed PCR from closed forms, and its
/// temperature derivative. M1 and M2 are assumed to share n.
pub fn proposed_drop(card: &TechnologyCard, temp: f64, trim: Option<&crate::trimming::TrimState>) -> Result<(f64, f64)> {
    let t_ref = card.t_ref;
    let m1 = card.device(Role::M1)?;
    let m2 = card.device(Role::M2)?;
    let v_b2 = v_b2_closed_form(card, temp, trim)?;
    let dvb = v_b2_closed_form_slope(card, temp, trim)?;
    let n = m2.n;
    let ut = thermal_voltage(temp);
    let ratio = isq(m2, t_ref, temp) * m2.s_total() / (isq(m1, t_ref, temp) * m1.s_total())
        * (1.0 + card.mirror_error);
    let dv = vt0(m1, t_ref, temp) - vt0(m2, t_ref, temp) - delta_vt_body(m2, t_ref, v_b2, temp)?
        + n * ut * ratio.ln();
    let ddv = m1.k_vt - m2.k_vt
        - (body_temp_partial(m2, t_ref, v_b2, temp)? - body_slope(m2, t_ref, v_b2, temp)? * dvb)
        + n * K_OVER_Q * ratio.ln()
        + n * ut * (m1.m_mu - m2.m_mu) / kelvin(temp);
    Ok((dv, ddv))
}

/// TC of the proposed reference, ppm/°C: dV_B2/dT/V_B2 plus the γ* drift, minus TCR.
pub fn analytic_tc_proposed(
    card: &TechnologyCard,
    temp: f64,
    trim: Option<&crate::trimming::TrimState>,
) -> Result<f64> {
    let v_b2 = v_b2_closed_form(card, temp, trim)?;
    let (dv, ddv) = proposed_drop(card, temp, trim)?;
    if v_b2 == 0.0 || dv == 0.0 {
        return Err(Error::Domain("analytic TC undefined at V_B2 = 0".into()));
    }
    Ok((ddv / dv - resistor_tcr(&card.resistor, temp)) * 1e6)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSensitivity {
    /// di_ref/dv_dd from the full conductance forms, A/V.
    pub full: f64,
    /// Simplified forms, A/V.
    pub simplified: f64,
    pub i_ref: f64,
}

impl LineSensitivity {
    pub fn full_frac(&self) -> f64 {
        self.full / self.i_ref
    }

    pub fn simplified_frac(&self) -> f64 {
        self.simplified / self.i_ref
    }

    pub fn full_pct(&self) -> f64 {
        self.full_frac() * 100.0
    }

    pub fn simplified_pct(&self) -> f64 {
        self.simplified_frac() * 100.0
    }
}

/// Conductances entering the LS expressions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsConductances {
    pub g_m1: f64,
    pub g_d2: f64,
    pub g_mb2: f64,
    pub g_d3: f64,
    pub g_m5: f64,
    pub g_d6: f64,
}

/// Small-signal line sensitivity, full and simplified (g_d-dominated) forms.
pub fn ls_from_conductances(g: &LsConductances, r: f64, j: f64, topology: Topology, i_ref: f64) -> LineSensitivity {
    let mirror = g.g_d3 / g.g_m1 * (1.0 / r - g.g_m1);
    let (full, simplified) = match topology {
        Topology::Conventional => (mirror / j + g.g_d2, g.g_d2),
        Topology::Proposed => {
            let body = g.g_mb2 * g.g_d6 / g.g_m5;
            (mirror + g.g_d2 + body, g.g_d2 + body)
        }
    };
    LineSensitivity { full, simplified, i_ref }
}

/// Small-signal conductances at a solved operating point.
pub fn ls_conductances(card: &TechnologyCard, op: &OperatingPoint, opts: &CircuitOptions) -> Result<LsConductances> {
    let t_ref = card.t_ref;
    let t = op.temp;
    let m1 = card.device(Role::M1)?;
    let m2 = card.device(Role::M2)?;
    let m3 = card.device(Role::M3)?;
    let keep_gd = |g: f64| if opts.vds_factors { g } else { 0.0 };
    let at = |p, i: f64, v_bs: f64, v_ds: f64| -> Result<crate::devmodel::SmallSignal> {
        let v_gs = mosfet_vgs_at(p, t_ref, i, v_bs, Some(v_ds), t)?;
        small_signal(p, t_ref, &BiasPoint { v_gs, v_bs, v_ds, temp: t })
    };
    let s1 = at(m1, op.i1, 0.0, op.v_ds1)?;
    let s2 = at(m2, op.i_ref, op.v_b2, op.v_ds2)?;
    let s3 = at(m3, op.i1, 0.0, op.v_dd - op.v_gs1)?;
    let (g_m5, g_d6) = match op.topology {
        Topology::Conventional => (1.0, 0.0),
        Topology::Proposed => {
            let m5 = crate::circuits::m5_params(card, opts.trim.as_ref())?;
            let b5 = BiasPoint { v_gs: op.v_b2, v_bs: 0.0, v_ds: op.v_b2, temp: t };
            let s5 = small_signal(&m5, t_ref, &b5)?;
            let b6 = BiasPoint { v_gs: 0.0, v_bs: 0.0, v_ds: op.v_ds6, temp: t };
            let mut g6 = small_signal(card.device(Role::M6)?, t_ref, &b6)?.g_d;
            if opts.include_m7 {
                let v_ds7 = op.v_dd - op.v_b2 - op.v_ds6;
                let b7 = BiasPoint { v_gs: 0.0, v_bs: 0.0, v_ds: v_ds7, temp: t };
                let g7 = small_signal(card.device(Role::M7)?, t_ref, &b7)?.g_d;
                g6 = g6 * g7 / (g6 + g7);
            }
            (s5.g_m, keep_gd(g6))
        }
    };
    Ok(LsConductances {
        g_m1: s1.g_m,
        g_d2: keep_gd(s2.g_d),
        g_mb2: if op.topology == Topology::Proposed { s2.g_mb } else { 0.0 },
        g_d3: keep_gd(s3.g_d),
        g_m5,
        g_d6,
    })
}

pub fn analytic_ls(card: &TechnologyCard, op: &OperatingPoint, opts: &CircuitOptions) -> Result<LineSensitivity> {
    let g = ls_conductances(card, op, opts)?;
    let j = match op.topology {
        Topology::Conventional => card.mirror_j,
        Topology::Proposed => 1.0,
    };
    Ok(ls_from_conductances(&g, op.r, j, op.topology, op.i_ref))
}

/// DC surrogate of the PSRR, 20·log10[(i_ref/v_dd)/(I_REF/V_DD)], from the
/// fractional line sensitivity (1/V).
pub fn dc_psrr(ls_fractional: f64, i_ref: f64, v_dd: f64) -> Result<f64> {
    if !(ls_fractional > 0.0) || !(i_ref > 0.0) || !(v_dd > 0.0) {
        return Err(Error::Input("dc_psrr needs positive ls, i_ref and v_dd".into()));
    }
    let small = ls_fractional * i_ref;
    Ok(20.0 * (small / (i_ref / v_dd)).log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FomInputs {
    pub tc: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// mm²
    pub area: f64,
    pub i_vdd: f64,
    pub i_ref: f64,
}

fn check_span(f: &FomInputs) -> Result<f64> {
    if !(f.t_max > f.t_min) || !(f.tc >= 0.0) {
        return Err(Error::Input("FoM needs t_max > t_min and tc >= 0".into()));
    }
    Ok(f.t_max - f.t_min)
}

/// FoM₁ = TC/(T_max − T_min)·Area.
pub fn fom1(f: &FomInputs) -> Result<f64> {
    let span = check_span(f)?;
    if !(f.area > 0.0) {
        return Err(Error::Input("FoM1 needs area > 0".into()));
    }
    Ok(f.tc / span * f.area)
}

/// TC/(T_max − T_min)·I_VDD/I_REF.
pub fn fom2(f: &FomInputs) -> Result<f64> {
    let span = check_span(f)?;
    if !(f.i_vdd > 0.0) || !(f.i_ref > 0.0) {
        return Err(Error::Input("FoM2 needs i_vdd > 0 and i_ref > 0".into()));
    }
    Ok(f.tc / span * f.i_vdd / f.i_ref)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeCell {
    pub w5: f64,
    pub w6: f64,
    /// Least-squares V_B2 slope, µV/°C.
    pub v_b2_slope: Option<f64>,
    /// Box TC, ppm/°C.
    pub tc: Option<f64>,
    /// Least-squares slope of I_REF over its mean, ppm/°C (sign shows PTAT/CTAT).
    pub tc_signed: Option<f64>,
    pub error: Option<String>,
}

/// Card with M5/M6 widths overridden (mult = 1). The replica and M7 track
/// the core devices so the leakage path stays suppressed across the map.
pub fn resize_2t(card: &TechnologyCard, w5: f64, w6: f64) -> Result<TechnologyCard> {
    let mut c = card.clone();
    c.trim = None;
    let m7_tracks = match (card.device(Role::M6), card.devices.get("M7")) {
        (Ok(m6), Some(m7)) => {
            let mut a = m7.clone();
            a.name.clone_from(&m6.name);
            a == *m6
        }
        _ => false,
    };
    for (role, w) in [(Role::M5, w5), (Role::M6, w6)] {
        let d = c.device_mut(role)?;
        d.w = w;
        d.mult = 1;
    }
    let copy = |c: &mut TechnologyCard, from: Role, to: Role| -> Result<()> {
        if c.has(to) {
            let mut p = c.device(from)?.clone();
            p.name = to.as_str().to_string();
            c.devices.insert(to.as_str().to_string(), p);
        }
        Ok(())
    };
    copy(&mut c, Role::M5, Role::M5B)?;
    copy(&mut c, Role::M6, Role::M6B)?;
    if m7_tracks {
        copy(&mut c, Role::M6, Role::M7)?;
        copy(&mut c, Role::M6, Role::M7B)?;
    }
    c.validate()?;
    Ok(c)
}

fn size_cell(card: &TechnologyCard, w5: f64, w6: f64, v_dd: f64, grid: &TempGrid, opts: &CircuitOptions) -> SizeCell {
    let run = || -> Result<(f64, f64, f64)> {
        let c = resize_2t(card, w5, w6)?;
        let s = sweep_temperature(&c, v_dd, grid, opts)?;
        let xs = s.xs();
        let is = s.currents();
        let mean = is.iter().sum::<f64>() / is.len() as f64;
        Ok((linear_fit_slope(&xs, &s.v_b2()) * 1e6, box_tc(&s)?, linear_fit_slope(&xs, &is) / mean * 1e6))
    };
    match run() {
        Ok((slope, tc, signed)) => SizeCell {
            w5,
            w6,
            v_b2_slope: Some(slope),
            tc: Some(tc),
            tc_signed: Some(signed),
            error: None,
        },
        Err(e) => SizeCell { w5, w6, v_b2_slope: None, tc: None, tc_signed: None, error: Some(e.to_string()) },
    }
}

/// W5×W6 map (w5-major order); per-cell failures are recorded, not raised.
pub fn size_sweep_2t(
    card: &TechnologyCard,
    w5_grid: &[f64],
    w6_grid: &[f64],
    v_dd: f64,
    grid: &TempGrid,
    opts: &CircuitOptions,
) -> Result<Vec<SizeCell>> {
    if w5_grid.is_empty() || w6_grid.is_empty() {
        return Err(Error::Input("size sweep grids must be non-empty".into()));
    }
    grid.points()?;
    let opts = CircuitOptions { trim: None, ..opts.clone() };
    let pairs: Vec<(f64, f64)> = w5_grid.iter().flat_map(|&a| w6_grid.iter().map(move |&b| (a, b))).collect();
    Ok(pairs.par_iter().map(|&(a, b)| size_cell(card, a, b, v_dd, grid, &opts)).collect())
}
