//! Technology cards: every parameter that drives the models, solvers and
//! metrics, loaded from JSON and transformed by process corners.
//!
//! A card is immutable once validated. Corner application returns a new card.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trimming::{IrefStyle, TrimConfig};
use crate::variability::{MismatchSpec, ProcessSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    N,
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodyModel {
    Linearized,
    BulkSqrt,
}

/// Behavioral subthreshold MOSFET parameters.
///
/// pMOS devices use source-referenced magnitudes throughout: `vt0_ref` is
/// |V_T0| and the bias inputs are V_SG, V_SB and V_SD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MosfetParams {
    pub name: String,
    pub polarity: Polarity,
    pub flavor: String,
    pub n: f64,
    pub vt0_ref: f64,
    pub k_vt: f64,
    pub isq_ref: f64,
    pub m_mu: f64,
    pub gamma_star_ref: f64,
    pub k_gamma: f64,
    pub body_model: BodyModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_fp_ref: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_phi: Option<f64>,
    pub lambda: f64,
    pub w: f64,
    pub l: f64,
    pub mult: u32,
}

impl MosfetParams {
    /// Aspect ratio including multiplicity.
    pub fn s_total(&self) -> f64 {
        self.w * f64::from(self.mult) / self.l
    }

    /// Gate area W·L·mult in µm².
    pub fn area(&self) -> f64 {
        self.w * self.l * f64::from(self.mult)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResistorParams {
    pub r_ref: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub t_ref: f64,
    pub n_segments: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiodeParams {
    pub j_ref: f64,
    pub t_ref: f64,
    pub v_ref: f64,
    pub theta: f64,
    pub kappa: f64,
    pub area: f64,
}

/// Per-flavor corner shift. The `_p` fields override the nMOS values for
/// pMOS devices of the same flavor; `dvt0_p` acts on |V_T0|.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlavorShift {
    pub dvt0: f64,
    pub mu_mult: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dvt0_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_mult_p: Option<f64>,
}

impl FlavorShift {
    fn for_polarity(&self, pol: Polarity) -> (f64, f64) {
        match pol {
            Polarity::N => (self.dvt0, self.mu_mult),
            Polarity::P => (
                self.dvt0_p.unwrap_or(self.dvt0),
                self.mu_mult_p.unwrap_or(self.mu_mult),
            ),
        }
    }

    fn is_identity(&self) -> bool {
        let (dn, mn) = self.for_polarity(Polarity::N);
        let (dp, mp) = self.for_polarity(Polarity::P);
        dn == 0.0 && dp == 0.0 && mn == 1.0 && mp == 1.0
    }
}

/// A named process corner. Flavors not listed are left at nominal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CornerSpec {
    pub flavors: BTreeMap<String, FlavorShift>,
    pub resistor_mult: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TcrSign {
    Positive,
    Negative,
}

/// One row of the normalized resistor comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResistorRow {
    pub type_name: String,
    pub density: f64,
    pub tcr: f64,
    pub tcr_sign: TcrSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResistorObjective {
    MaxDensity,
    MinTcr,
}

/// Circuit roles a card may populate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
    M7,
    M5B,
    M6B,
    M7B,
}

impl Role {
    pub const ALL: [Role; 10] = [
        Role::M1,
        Role::M2,
        Role::M3,
        Role::M4,
        Role::M5,
        Role::M6,
        Role::M7,
        Role::M5B,
        Role::M6B,
        Role::M7B,
    ];
    pub const REQUIRED: [Role; 8] = [
        Role::M1,
        Role::M2,
        Role::M3,
        Role::M4,
        Role::M5,
        Role::M6,
        Role::M5B,
        Role::M6B,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::M1 => "M1",
            Role::M2 => "M2",
            Role::M3 => "M3",
            Role::M4 => "M4",
            Role::M5 => "M5",
            Role::M6 => "M6",
            Role::M7 => "M7",
            Role::M5B => "M5B",
            Role::M6B => "M6B",
            Role::M7B => "M7B",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        Role::ALL.iter().copied().find(|r| r.as_str() == s)
    }

    pub fn polarity(self) -> Polarity {
        match self {
            Role::M3 | Role::M4 => Polarity::P,
            _ => Polarity::N,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_t_valid_min() -> f64 {
    -55.0
}

fn default_t_valid_max() -> f64 {
    125.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechnologyCard {
    pub name: String,
    pub t_ref: f64,
    #[serde(default = "default_t_valid_min")]
    pub t_valid_min: f64,
    #[serde(default = "default_t_valid_max")]
    pub t_valid_max: f64,
    pub v_dd_nominal: f64,
    pub devices: BTreeMap<String, MosfetParams>,
    pub resistor: ResistorParams,
    pub diode_pw_dnw: DiodeParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diode_nw: Option<DiodeParams>,
    pub mirror_j: f64,
    pub mirror_k: f64,
    /// Relative error of the M3:M4 mirror ratio; zero on nominal cards,
    /// set per trial by the mismatch sampler.
    #[serde(default)]
    pub mirror_error: f64,
    pub resistor_table: Vec<ResistorRow>,
    pub corners: BTreeMap<String, CornerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trim: Option<TrimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mismatch: Option<MismatchSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<ProcessSpec>,
}

/// Corner to apply: a named card corner, or one corner per flavor.
#[derive(Debug, Clone, PartialEq)]
pub enum CornerSelection {
    Named(String),
    Skewed {
        flavor_a: String,
        corner_a: String,
        flavor_b: String,
        corner_b: String,
    },
}

impl TechnologyCard {
    pub fn device(&self, role: Role) -> Result<&MosfetParams> {
        self.devices
            .get(role.as_str())
            .ok_or_else(|| Error::Validation(format!("missing device role {role}")))
    }

    pub fn device_mut(&mut self, role: Role) -> Result<&mut MosfetParams> {
        self.devices
            .get_mut(role.as_str())
            .ok_or_else(|| Error::Validation(format!("missing device role {role}")))
    }

    pub fn has(&self, role: Role) -> bool {
        self.devices.contains_key(role.as_str())
    }

    pub fn from_json_str(text: &str) -> Result<TechnologyCard> {
        let card: TechnologyCard = serde_json::from_str(text).map_err(|e| {
            Error::Parse(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        card.validate()?;
        Ok(card)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("card serialization is infallible")
    }

    /// Check every card invariant, naming the first one violated.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if !self.t_ref.is_finite() {
            return bad("t_ref must be finite".into());
        }
        if !(self.t_valid_min < self.t_valid_max) || self.t_valid_min <= -273.15 {
            return bad("validity range requires -273.15 < t_valid_min < t_valid_max".into());
        }
        if !(self.v_dd_nominal > 0.0) {
            return bad("v_dd_nominal must be > 0".into());
        }
        for role in Role::REQUIRED {
            if !self.has(role) {
                return bad(format!("missing device role {role}"));
            }
        }
        if self.has(Role::M7B) && !self.has(Role::M7) {
            return bad("device role M7B requires M7".into());
        }
        for (key, p) in &self.devices {
            let Some(role) = Role::parse(key) else {
                return bad(format!("unknown device role {key}"));
            };
            validate_mosfet(key, p)?;
            if p.polarity != role.polarity() {
                return bad(format!("device {key} must be {:?}-type", role.polarity()));
            }
        }
        let r = &self.resistor;
        if !(r.r_ref > 0.0) || !r.alpha1.is_finite() || !r.alpha2.is_finite() {
            return bad("resistor requires r_ref > 0 and finite TCR coefficients".into());
        }
        if r.n_segments < 1 {
            return bad("resistor n_segments must be >= 1".into());
        }
        validate_diode("diode_pw_dnw", &self.diode_pw_dnw)?;
        if let Some(d) = &self.diode_nw {
            validate_diode("diode_nw", d)?;
        }
        if !(self.mirror_j >= 1.0) || !(self.mirror_k >= 1.0) {
            return bad("mirror_j and mirror_k must be >= 1".into());
        }
        if !(self.mirror_error > -1.0) {
            return bad("mirror_error must be > -1".into());
        }
        for row in &self.resistor_table {
            if !(row.density > 0.0) || !(row.tcr >= 0.0) {
                return bad(format!("resistor_table row {:?} needs density > 0, tcr >= 0", row.type_name));
            }
        }
        for (name, c) in &self.corners {
            if !(c.resistor_mult > 0.0) {
                return bad(format!("corner {name}: resistor_mult must be > 0"));
            }
            for (flavor, s) in &c.flavors {
                let (_, mn) = s.for_polarity(Polarity::N);
                let (_, mp) = s.for_polarity(Polarity::P);
                if !(mn > 0.0) || !(mp > 0.0) || !s.dvt0.is_finite() {
                    return bad(format!("corner {name} flavor {flavor}: mu_mult must be > 0"));
                }
            }
        }
        if let Some(tt) = self.corners.get("TT") {
            if tt.resistor_mult != 1.0 || !tt.flavors.values().all(FlavorShift::is_identity) {
                return bad("corner TT must be the identity".into());
            }
        }
        if let Some(t) = &self.trim {
            t.validate()?;
        }
        if let Some(m) = &self.mismatch {
            m.validate()?;
        }
        if let Some(p) = &self.process {
            p.validate()?;
        }
        Ok(())
    }

    /// Return a copy of this card with a corner applied.
    pub fn apply_corner(&self, sel: &CornerSelection) -> Result<TechnologyCard> {
        let mut out = self.clone();
        match sel {
            CornerSelection::Named(name) => {
                let c = self.corner(name)?;
                for p in out.devices.values_mut() {
                    if let Some(s) = c.flavors.get(&p.flavor) {
                        shift_device(p, s);
                    }
                }
                scale_resistance(&mut out, c.resistor_mult);
            }
            CornerSelection::Skewed {
                flavor_a,
                corner_a,
                flavor_b,
                corner_b,
            } => {
                if flavor_a == flavor_b {
                    return Err(Error::Input("skewed corner needs two distinct flavors".into()));
                }
                for (flavor, corner) in [(flavor_a, corner_a), (flavor_b, corner_b)] {
                    if !self.devices.values().any(|p| &p.flavor == flavor) {
                        return Err(Error::Input(format!("no device of flavor {flavor}")));
                    }
                    let c = self.corner(corner)?;
                    if let Some(s) = c.flavors.get(flavor) {
                        for p in out.devices.values_mut().filter(|p| &p.flavor == flavor) {
                            shift_device(p, s);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn corner(&self, name: &str) -> Result<&CornerSpec> {
        self.corners
            .get(name)
            .ok_or_else(|| Error::Input(format!("unknown corner {name}")))
    }
}

fn shift_device(p: &mut MosfetParams, s: &FlavorShift) {
    let (dvt0, mu) = s.for_polarity(p.polarity);
    p.vt0_ref += dvt0;
    p.isq_ref *= mu;
}

/// Scale every resistance of the loop, including trim segments.
pub(crate) fn scale_resistance(card: &mut TechnologyCard, mult: f64) {
    card.resistor.r_ref *= mult;
    if let Some(t) = card.trim.as_mut() {
        if t.iref_style == IrefStyle::SeriesResistor {
            t.r_unit = t.r_unit.map(|r| r * mult);
            t.r_fixed = t.r_fixed.map(|r| r * mult);
        }
    }
}

fn validate_mosfet(key: &str, p: &MosfetParams) -> Result<()> {
    let bad = |m: &str| Err(Error::Validation(format!("device {key}: {m}")));
    if !(p.n > 1.0) {
        return bad("n must be > 1");
    }
    if !(p.w > 0.0) || !(p.l > 0.0) || p.mult < 1 {
        return bad("W, L and mult must be > 0");
    }
    if !(p.isq_ref > 0.0) {
        return bad("isq_ref must be > 0");
    }
    if !(p.lambda >= 0.0) {
        return bad("lambda must be >= 0");
    }
    let finite = [p.vt0_ref, p.k_vt, p.m_mu, p.gamma_star_ref, p.k_gamma];
    if finite.iter().any(|v| !v.is_finite()) {
        return bad("parameters must be finite");
    }
    if p.body_model == BodyModel::BulkSqrt {
        if !p.gamma_b.is_some_and(|g| g > 0.0) {
            return bad("bulk_sqrt requires gamma_b > 0");
        }
        if !p.phi_fp_ref.is_some_and(|f| f > 0.0) {
            return bad("bulk_sqrt requires phi_fp_ref > 0");
        }
        if !p.k_phi.is_some_and(f64::is_finite) {
            return bad("bulk_sqrt requires k_phi");
        }
    }
    Ok(())
}

fn validate_diode(key: &str, d: &DiodeParams) -> Result<()> {
    if !(d.j_ref >= 0.0) || !(d.theta > 0.0) || !(d.area >= 0.0) {
        return Err(Error::Validation(format!(
            "{key}: requires j_ref >= 0, theta > 0, area >= 0"
        )));
    }
    if !d.kappa.is_finite() || !d.v_ref.is_finite() || !d.t_ref.is_finite() {
        return Err(Error::Validation(format!("{key}: parameters must be finite")));
    }
    Ok(())
}

pub fn load_card(path: impl AsRef<Path>) -> Result<TechnologyCard> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    TechnologyCard::from_json_str(&text)
}

pub fn save_card(card: &TechnologyCard, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, card.to_json_string()).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn apply_corner(card: &TechnologyCard, sel: &CornerSelection) -> Result<TechnologyCard> {
    card.apply_corner(sel)
}

/// Pick a resistor row; ties go to the first listed.
pub fn select_resistor(table: &[ResistorRow], objective: ResistorObjective) -> Result<&ResistorRow> {
    let mut best = table
        .first()
        .ok_or_else(|| Error::Input("resistor table is empty".into()))?;
    for row in &table[1..] {
        let better = match objective {
            ResistorObjective::MaxDensity => row.density > best.density,
            ResistorObjective::MinTcr => row.tcr < best.tcr,
        };
        if better {
            best = row;
        }
    }
    Ok(best)
}

const FDSOI22: &str = include_str!("../cards/fdsoi22.json");
const BULK110: &str = include_str!("../cards/bulk110.json");

/// Names accepted by [`builtin_card`].
pub const BUILTIN_CARDS: [&str; 2] = ["fdsoi22", "bulk110"];

/// JSON source of a shipped demo card.
pub fn builtin_card_text(name: &str) -> Result<&'static str> {
    match name {
        "fdsoi22" => Ok(FDSOI22),
        "bulk110" => Ok(BULK110),
        other => Err(Error::Input(format!("unknown builtin card {other}"))),
    }
}

/// One of the two shipped demo cards.
pub fn builtin_card(name: &str) -> Result<TechnologyCard> {
    TechnologyCard::from_json_str(builtin_card_text(name)?)
}
