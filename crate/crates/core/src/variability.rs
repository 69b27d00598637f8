//! Monte-Carlo mismatch/process engine, the analytic variance model and the
//! skewed-corner scan.
//!
//! Every trial draws from its own ChaCha stream keyed by (seed, trial), so
//! results do not depend on thread count or scheduling.

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{box_tc, linear_fit_slope, proposed_drop, sweep_temperature, TempGrid};
use crate::circuits::{solve_pcr, v_b2_closed_form, CircuitOptions};
use crate::devmodel::{body_slope, resistor_value, thermal_voltage};
use crate::error::{Error, Result};
use crate::techcard::{scale_resistance, CornerSelection, MosfetParams, Polarity, Role, TechnologyCard};
use crate::trimming::{search_tc_trim, TcTrimMethod};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MismatchSpec {
    /// Pelgrom coefficient per flavor, V·µm.
    pub a_vt: BTreeMap<String, f64>,
    pub sigma_mirror: f64,
    #[serde(default)]
    pub seed: u64,
}

impl MismatchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.a_vt.values().any(|a| !(*a >= 0.0)) || !(self.sigma_mirror >= 0.0) {
            return Err(Error::Validation("mismatch: a_vt and sigma_mirror must be >= 0".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Scale every Pelgrom coefficient, leaving the mirror σ alone.
    pub fn scale_a_vt(mut self, k: f64) -> Self {
        for a in self.a_vt.values_mut() {
            *a *= k;
        }
        self
    }

    fn a_vt_for(&self, p: &MosfetParams) -> f64 {
        self.a_vt.get(&p.flavor).copied().unwrap_or(0.0)
    }
}

fn default_sigma_dvt0() -> f64 {
    0.015
}

fn default_sigma_ln_isq() -> f64 {
    0.1
}

fn default_sigma_ln_r() -> f64 {
    0.08
}

/// Global (die-to-die) variation σ's. Placeholders, not foundry data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    #[serde(default = "default_sigma_dvt0")]
    pub sigma_dvt0: f64,
    #[serde(default = "default_sigma_ln_isq")]
    pub sigma_ln_isq: f64,
    #[serde(default = "default_sigma_ln_r")]
    pub sigma_ln_r: f64,
}

impl Default for ProcessSpec {
    fn default() -> Self {
        ProcessSpec {
            sigma_dvt0: default_sigma_dvt0(),
            sigma_ln_isq: default_sigma_ln_isq(),
            sigma_ln_r: default_sigma_ln_r(),
        }
    }
}

impl ProcessSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_dvt0 >= 0.0) || !(self.sigma_ln_isq >= 0.0) || !(self.sigma_ln_r >= 0.0) {
            return Err(Error::Validation("process: sigmas must be >= 0".into()));
        }
        Ok(())
    }
}

/// σ(V_T0) of one device.
pub fn pelgrom_sigma(a_vt: f64, p: &MosfetParams) -> f64 {
    a_vt / p.area().sqrt()
}

fn trial_rng(seed: u64, trial_index: u64, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index.wrapping_mul(2).wrapping_add(lane));
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Local mismatch draw for one trial. nMOS devices get Pelgrom V_T0
/// offsets; the pMOS mirror is represented by a single ratio error.
pub fn sample_mismatch(spec: &MismatchSpec, card: &TechnologyCard, trial_index: u64) -> TechnologyCard {
    let mut rng = trial_rng(spec.seed, trial_index, 0);
    let mut out = card.clone();
    for p in out.devices.values_mut().filter(|p| p.polarity == Polarity::N) {
        let z = normal(&mut rng);
        p.vt0_ref += pelgrom_sigma(spec.a_vt_for(p), p) * z;
    }
    let z = normal(&mut rng);
    let x = (1.0 + spec.sigma_mirror * z).max(1e-3);
    out.mirror_error = (1.0 + out.mirror_error) * x - 1.0;
    out
}

/// Global process draw for one trial: one (dvt0, ln isq) pair per
/// (flavor, polarity) and one resistor multiplier.
pub fn sample_process(spec: &ProcessSpec, card: &TechnologyCard, seed: u64, trial_index: u64) -> TechnologyCard {
    let mut rng = trial_rng(seed, trial_index, 1);
    let groups: BTreeSet<(String, bool)> =
        card.devices.values().map(|p| (p.flavor.clone(), p.polarity == Polarity::P)).collect();
    let mut out = card.clone();
    for (flavor, is_p) in groups {
        let dvt0 = spec.sigma_dvt0 * normal(&mut rng);
        let mu = (spec.sigma_ln_isq * normal(&mut rng)).exp();
        for p in out.devices.values_mut() {
            if p.flavor == flavor && (p.polarity == Polarity::P) == is_p {
                p.vt0_ref += dvt0;
                p.isq_ref *= mu;
            }
        }
    }
    let r_mult = (spec.sigma_ln_r * normal(&mut rng)).exp();
    scale_resistance(&mut out, r_mult);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McMode {
    Mismatch,
    Process,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McMetric {
    IrefAt25C,
    BoxTc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub index: u64,
    pub i_ref: Option<f64>,
    pub box_tc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McResult {
    pub n: usize,
    pub n_failed: usize,
    pub mean: f64,
    pub sigma: f64,
    pub sigma_over_mu: f64,
    pub median_tc: Option<f64>,
    pub p99_tc: Option<f64>,
    pub trials: Vec<Trial>,
}

/// Neumaier-compensated sum in slice order.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

/// Nearest-rank percentile, `p` in (0, 100].
pub fn percentile_nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() || !(p > 0.0 && p <= 100.0) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (p / 100.0 * v.len() as f64).ceil() as usize;
    Some(v[rank.clamp(1, v.len()) - 1])
}

/// Temperature at which the I_REF metric is taken.
pub const MC_IREF_TEMP: f64 = 25.0;

#[allow(clippy::too_many_arguments)]
pub fn mc_run(
    card: &TechnologyCard,
    v_dd: f64,
    grid: &TempGrid,
    spec: &MismatchSpec,
    n: usize,
    mode: McMode,
    metric: McMetric,
    opts: &CircuitOptions,
) -> Result<McResult> {
    if n < 2 {
        return Err(Error::Input("n ≥ 2 required".into()));
    }
    spec.validate()?;
    if metric == McMetric::BoxTc {
        grid.points()?;
    }
    let process = card.process.clone().unwrap_or_default();
    let trials: Vec<Trial> = (0..n as u64)
        .into_par_iter()
        .map(|k| {
            let mut c = match mode {
                McMode::Mismatch | McMode::Both => sample_mismatch(spec, card, k),
                McMode::Process => card.clone(),
            };
            if matches!(mode, McMode::Process | McMode::Both) {
                c = sample_process(&process, &c, spec.seed, k);
            }
            let run = || -> Result<(f64, Option<f64>)> {
                let i = solve_pcr(&c, v_dd, MC_IREF_TEMP, opts)?.i_ref;
                let tc = match metric {
                    McMetric::IrefAt25C => None,
                    McMetric::BoxTc => Some(box_tc(&sweep_temperature(&c, v_dd, grid, opts)?)?),
                };
                Ok((i, tc))
            };
            match run() {
                Ok((i, tc)) => Trial { index: k, i_ref: Some(i), box_tc: tc, error: None },
                Err(e) => Trial { index: k, i_ref: None, box_tc: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    let n_failed = trials.iter().filter(|t| t.error.is_some()).count();
    if n_failed * 100 > n {
        return Err(Error::NoConvergence(format!("{n_failed} of {n} Monte-Carlo trials failed (limit 1%)")));
    }
    let is: Vec<f64> = trials.iter().filter_map(|t| t.i_ref).collect();
    let m = is.len() as f64;
    let mean = compensated_sum(is.iter().copied()) / m;
    let var = compensated_sum(is.iter().map(|i| (i - mean) * (i - mean))) / (m - 1.0);
    let sigma = var.max(0.0).sqrt();
    let tcs: Vec<f64> = trials.iter().filter_map(|t| t.box_tc).collect();
    Ok(McResult {
        n,
        n_failed,
        mean,
        sigma,
        sigma_over_mu: sigma / mean,
        median_tc: percentile_nearest_rank(&tcs, 50.0),
        p99_tc: percentile_nearest_rank(&tcs, 99.0),
        trials,
    })
}

/// Log-normal σ of ln X for a normal X with relative σ `s`, in the
/// [exp(s²) − 1]·exp(2 + s²) form; compare with the delta-method `s`.
pub fn lognormal_ln_sigma(s: f64) -> f64 {
    ((s * s).exp_m1() * (2.0 + s * s).exp()).sqrt()
}

/// Analytic variance of I_REF split into its three sources (A²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceBreakdown {
    pub mu: f64,
    pub dvt_term: f64,
    pub vb2_term: f64,
    /// Delta-method mirror term, (nU_T/R)²·σ²_ΔI/I.
    pub mirror_delta: f64,
    /// Mirror term with the log-normal expression.
    pub mirror_lognormal: f64,
}

impl VarianceBreakdown {
    pub fn variance_delta(&self) -> f64 {
        self.dvt_term + self.vb2_term + self.mirror_delta
    }

    pub fn variance_lognormal(&self) -> f64 {
        self.dvt_term + self.vb2_term + self.mirror_lognormal
    }

    pub fn sigma_delta(&self) -> f64 {
        self.variance_delta().sqrt()
    }

    pub fn sigma_lognormal(&self) -> f64 {
        self.variance_lognormal().sqrt()
    }

    pub fn sigma_over_mu_delta(&self) -> f64 {
        self.sigma_delta() / self.mu
    }

    pub fn sigma_over_mu_lognormal(&self) -> f64 {
        self.sigma_lognormal() / self.mu
    }

    /// Relative σ contributed by the (delta-method) mirror term alone.
    pub fn mirror_share(&self) -> f64 {
        self.mirror_delta.sqrt() / self.mu
    }
}

/// Three-term variance of the proposed reference at `temp`. For bulk body
/// models the local slope ∂|ΔV_T|/∂V_BS at V_B2 replaces γ*.
pub fn analytic_sigma_iref(card: &TechnologyCard, spec: &MismatchSpec, temp: f64) -> Result<VarianceBreakdown> {
    spec.validate()?;
    let t_ref = card.t_ref;
    let [m1, m2, m5, m6] = [Role::M1, Role::M2, Role::M5, Role::M6].map(|r| card.device(r));
    let (m1, m2, m5, m6) = (m1?, m2?, m5?, m6?);
    let r = resistor_value(&card.resistor, temp);
    let (dv, _) = proposed_drop(card, temp, None)?;
    let mu = dv / r;
    let s2 = |p: &MosfetParams| pelgrom_sigma(spec.a_vt_for(p), p).powi(2);
    let var_dvt = s2(m1) + s2(m2);
    let var_vb2 = s2(m5) + (m5.n / m6.n).powi(2) * s2(m6);
    let v_b2 = v_b2_closed_form(card, temp, None)?;
    let gamma = body_slope(m2, t_ref, v_b2, temp)?;
    let nut = m2.n * thermal_voltage(temp);
    let s = spec.sigma_mirror;
    Ok(VarianceBreakdown {
        mu,
        dvt_term: var_dvt / (r * r),
        vb2_term: (gamma / r).powi(2) * var_vb2,
        mirror_delta: (nut / r).powi(2) * s * s,
        mirror_lognormal: (nut / r).powi(2) * lognormal_ln_sigma(s).powi(2),
    })
}

/// Corner names of the skewed 5×5 scan, in row/column order.
pub const SKEW_CORNERS: [&str; 5] = ["TT", "FF", "SS", "FS", "SF"];

#[derive(Debug, Clone, PartialEq)]
pub struct SkewCell {
    pub corner_a: String,
    pub corner_b: String,
    pub i_ref_25: Option<f64>,
    pub box_tc: Option<f64>,
    pub v_b2_25: Option<f64>,
    /// Least-squares V_B2 slope, µV/°C.
    pub v_b2_slope: Option<f64>,
    /// Slope minus the (TT, TT) slope, µV/°C.
    pub v_b2_slope_delta: Option<f64>,
    /// Best TC code and its box TC, when trimming was requested.
    pub trim_code: Option<u32>,
    pub trimmed_box_tc: Option<f64>,
    pub error: Option<String>,
}

/// 5×5 skewed-corner scan over two flavors.
pub fn skewed_corner_scan(
    card: &TechnologyCard,
    flavor_a: &str,
    flavor_b: &str,
    v_dd: f64,
    grid: &TempGrid,
    opts: &CircuitOptions,
    with_trim: bool,
) -> Result<Vec<SkewCell>> {
    for f in [flavor_a, flavor_b] {
        if !card.devices.values().any(|p| p.flavor == f) {
            return Err(Error::Input(format!("no device of flavor {f}")));
        }
    }
    for c in SKEW_CORNERS {
        if !card.corners.contains_key(c) {
            return Err(Error::Input(format!("card lacks corner {c}")));
        }
    }
    if with_trim && card.trim.is_none() {
        return Err(Error::Input(format!("card {} has no trim configuration", card.name)));
    }
    let pairs: Vec<(&str, &str)> =
        SKEW_CORNERS.iter().flat_map(|&a| SKEW_CORNERS.iter().map(move |&b| (a, b))).collect();
    let mut cells: Vec<SkewCell> = pairs
        .par_iter()
        .map(|&(ca, cb)| {
            let run = || -> Result<SkewCell> {
                let sel = CornerSelection::Skewed {
                    flavor_a: flavor_a.into(),
                    corner_a: ca.into(),
                    flavor_b: flavor_b.into(),
                    corner_b: cb.into(),
                };
                let c = card.apply_corner(&sel)?;
                let s = sweep_temperature(&c, v_dd, grid, opts)?;
                let op25 = solve_pcr(&c, v_dd, 25.0, opts)?;
                let (trim_code, trimmed_box_tc) = if with_trim {
                    let r = search_tc_trim(&c, v_dd, grid, opts, TcTrimMethod::FullProfile)?;
                    (Some(r.tc_code), Some(r.box_tc))
                } else {
                    (None, None)
                };
                Ok(SkewCell {
                    corner_a: ca.into(),
                    corner_b: cb.into(),
                    i_ref_25: Some(op25.i_ref),
                    box_tc: Some(box_tc(&s)?),
                    v_b2_25: Some(op25.v_b2),
                    v_b2_slope: Some(linear_fit_slope(&s.xs(), &s.v_b2()) * 1e6),
                    v_b2_slope_delta: None,
                    trim_code,
                    trimmed_box_tc,
                    error: None,
                })
            };
            run().unwrap_or_else(|e| SkewCell {
                corner_a: ca.into(),
                corner_b: cb.into(),
                i_ref_25: None,
                box_tc: None,
                v_b2_25: None,
                v_b2_slope: None,
                v_b2_slope_delta: None,
                trim_code: None,
                trimmed_box_tc: None,
                error: Some(e.to_string()),
            })
        })
        .collect();
    let base = cells[0].v_b2_slope;
    for c in &mut cells {
        c.v_b2_slope_delta = c.v_b2_slope.zip(base).map(|(s, b)| s - b);
    }
    Ok(cells)
}
