//! Command-line front end. Every command writes CSV with a `#` manifest
//! header and trailing `#` summary lines.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use crate::analysis::{
    analytic_ls, analytic_tc_conventional, analytic_tc_proposed, box_ls, box_tc, fom1, fom2, size_sweep_2t,
    sweep_supply, sweep_temperature, FomInputs, Grid,
};
use crate::circuits::{solve_pcr, vdd_min, CircuitOptions, Topology};
use crate::error::{Error, Result};
use crate::techcard::{builtin_card_text, CornerSelection, TechnologyCard};
use crate::trimming::{search_iref_trim, search_tc_trim, TcTrimMethod, TrimState};
use crate::variability::{mc_run, McMetric, McMode};

/// Numbers are written with nine significant digits.
fn num(x: f64) -> String {
    format!("{x:.8e}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[derive(Debug, Parser)]
#[command(name = "pcref", version, about = "nA-range peaking current reference toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Temperature or supply sweep of one operating point per grid value.
    Sweep(SweepArgs),
    /// Monte-Carlo mismatch/process run.
    Mc(McArgs),
    /// TC-code then I_REF-code trim search.
    Trim(TrimArgs),
    /// FoM columns for a comparison table.
    Fom(FomArgs),
    /// W5 x W6 sizing map of the 2T generator.
    SizeSweep(SizeSweepArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Card JSON file, or `builtin:fdsoi22` / `builtin:bulk110`.
    #[arg(long)]
    pub card: String,
    /// Output file (standard output when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Suppress the timestamp so repeated runs are byte-identical.
    #[arg(long)]
    pub deterministic: bool,
    /// Worker threads (rayon default when absent).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CircuitArg {
    Proposed,
    Conventional,
}

#[derive(Debug, Args)]
pub struct CircuitArgs {
    #[arg(long, value_enum, default_value = "proposed")]
    pub circuit: CircuitArg,
    /// Drop the parasitic p-well/deep-n-well diode.
    #[arg(long)]
    pub no_diode: bool,
    /// Tie the deep n-well to V_DD instead of the replica output.
    #[arg(long)]
    pub no_replica: bool,
    /// Leave out the stacked M7 even if the card defines it.
    #[arg(long)]
    pub no_m7: bool,
    /// Ideal exponential law: no saturation or channel-length factors.
    #[arg(long)]
    pub ideal: bool,
    /// Named process corner from the card.
    #[arg(long)]
    pub corner: Option<String>,
    #[arg(long)]
    pub tc_code: Option<u32>,
    #[arg(long)]
    pub iref_code: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Temp,
    Vdd,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub circuit: CircuitArgs,
    #[arg(long, value_enum, default_value = "temp")]
    pub axis: Axis,
    #[arg(long, allow_negative_numbers = true)]
    pub min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub max: Option<f64>,
    #[arg(long)]
    pub step: Option<f64>,
    /// Supply for temperature sweeps (card nominal when absent).
    #[arg(long)]
    pub vdd: Option<f64>,
    /// Temperature for supply sweeps.
    #[arg(long, default_value_t = 25.0, allow_negative_numbers = true)]
    pub temp: f64,
}

#[derive(Debug, Args)]
pub struct TempGridArgs {
    #[arg(long, default_value_t = -40.0, allow_negative_numbers = true)]
    pub t_min: f64,
    #[arg(long, default_value_t = 85.0, allow_negative_numbers = true)]
    pub t_max: f64,
    #[arg(long, default_value_t = 5.0)]
    pub t_step: f64,
}

impl TempGridArgs {
    fn grid(&self) -> Result<Grid> {
        Grid::new(self.t_min, self.t_max, self.t_step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Mismatch,
    Process,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    /// I_REF at 25 °C only.
    Iref,
    /// I_REF at 25 °C and the box TC over the temperature grid.
    Tc,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub circuit: CircuitArgs,
    #[command(flatten)]
    pub grid: TempGridArgs,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Overrides the card's mismatch seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "mismatch")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "tc")]
    pub metric: MetricArg,
    /// Write one row per trial instead of the summary row.
    #[arg(long)]
    pub emit_trials: bool,
    /// Multiplier on every Pelgrom coefficient.
    #[arg(long, default_value_t = 1.0)]
    pub avt_scale: f64,
    #[arg(long)]
    pub vdd: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Full,
    TwoPoint,
    Both,
}

#[derive(Debug, Args)]
pub struct TrimArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub circuit: CircuitArgs,
    #[command(flatten)]
    pub grid: TempGridArgs,
    #[arg(long, value_enum, default_value = "full")]
    pub method: MethodArg,
    #[arg(long, default_value_t = -35.0, allow_negative_numbers = true)]
    pub t1: f64,
    #[arg(long, default_value_t = 65.0, allow_negative_numbers = true)]
    pub t2: f64,
    /// I_REF target in A (untrimmed nominal current when absent).
    #[arg(long)]
    pub target: Option<f64>,
    /// Temperature of the I_REF trim.
    #[arg(long, default_value_t = 25.0, allow_negative_numbers = true)]
    pub temp: f64,
    #[arg(long)]
    pub vdd: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FomArgs {
    /// Comparison table: name,tc,t_min,t_max,area[,power,v_dd,i_ref,...].
    #[arg(long)]
    pub table: PathBuf,
    /// Accepted for interface uniformity; FoM uses table columns only.
    #[arg(long)]
    pub card: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Args)]
pub struct SizeSweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub circuit: CircuitArgs,
    #[command(flatten)]
    pub grid: TempGridArgs,
    /// Total M5 widths, µm.
    #[arg(long, value_delimiter = ',', required = true)]
    pub w5: Vec<f64>,
    /// Total M6 widths, µm.
    #[arg(long, value_delimiter = ',', required = true)]
    pub w6: Vec<f64>,
    #[arg(long)]
    pub vdd: Option<f64>,
}

/// Loaded card with the provenance needed for the manifest.
struct LoadedCard {
    card: TechnologyCard,
    label: String,
    sha256: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn load(spec: &str) -> Result<LoadedCard> {
    let text = match spec.strip_prefix("builtin:") {
        Some(name) => builtin_card_text(name)?.to_string(),
        None => read_text(Path::new(spec))?,
    };
    let card = TechnologyCard::from_json_str(&text)?;
    Ok(LoadedCard { card, label: spec.to_string(), sha256: sha256_hex(text.as_bytes()) })
}

struct Manifest {
    lines: Vec<(String, String)>,
}

impl Manifest {
    fn new(command: &str) -> Self {
        let mut m = Manifest { lines: Vec::new() };
        m.push("tool", format!("pcref {}", env!("CARGO_PKG_VERSION")));
        m.push("command", command);
        m
    }

    fn push(&mut self, k: &str, v: impl ToString) {
        self.lines.push((k.to_string(), v.to_string()));
    }

    fn card(&mut self, c: &LoadedCard) {
        self.push("card", &c.label);
        self.push("card_name", &c.card.name);
        self.push("card_sha256", &c.sha256);
    }

    fn render(&self, deterministic: bool) -> String {
        let mut s = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(s, "# {k} = {v}");
        }
        if !deterministic {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let _ = writeln!(s, "# timestamp_unix = {secs}");
        }
        s
    }
}

fn circuit_options(card: &TechnologyCard, a: &CircuitArgs) -> Result<CircuitOptions> {
    let mut o = CircuitOptions::for_card(card);
    o.topology = match a.circuit {
        CircuitArg::Proposed => Topology::Proposed,
        CircuitArg::Conventional => Topology::Conventional,
    };
    o.include_diode = !a.no_diode;
    o.include_replica = !a.no_replica;
    o.include_m7 &= !a.no_m7;
    o.vds_factors = !a.ideal;
    if a.tc_code.is_some() || a.iref_code.is_some() {
        let cfg = card
            .trim
            .as_ref()
            .ok_or_else(|| Error::Input(format!("card {} has no trim configuration", card.name)))?;
        let nominal = cfg.nominal_state();
        let state = TrimState {
            tc_code: a.tc_code.unwrap_or(nominal.tc_code),
            iref_code: a.iref_code.unwrap_or(nominal.iref_code),
        };
        cfg.check_state(&state)?;
        o.trim = Some(state);
    }
    Ok(o)
}

fn apply_named_corner(card: TechnologyCard, a: &CircuitArgs) -> Result<TechnologyCard> {
    match &a.corner {
        Some(name) => card.apply_corner(&CornerSelection::Named(name.clone())),
        None => Ok(card),
    }
}

fn record_circuit(m: &mut Manifest, o: &CircuitOptions, a: &CircuitArgs) {
    m.push("circuit", format!("{:?}", o.topology).to_lowercase());
    m.push("corner", a.corner.as_deref().unwrap_or("nominal"));
    m.push(
        "flags",
        format!(
            "diode={} replica={} m7={} vds_factors={}",
            o.include_diode, o.include_replica, o.include_m7, o.vds_factors
        ),
    );
    match o.trim {
        Some(t) => m.push("trim", format!("tc_code={} iref_code={}", t.tc_code, t.iref_code)),
        None => m.push("trim", "untrimmed"),
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(0) => Err(Error::Input("--threads must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Input(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn supply(card: &TechnologyCard, vdd: Option<f64>) -> Result<f64> {
    let v = vdd.unwrap_or(card.v_dd_nominal);
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Input(format!("--vdd must be > 0, got {v}")));
    }
    Ok(v)
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<String> {
    let lc = load(&a.common.card)?;
    let card = apply_named_corner(lc.card.clone(), &a.circuit)?;
    let opts = circuit_options(&card, &a.circuit)?;
    let (dmin, dmax, dstep) = match a.axis {
        Axis::Temp => (-40.0, 85.0, 5.0),
        Axis::Vdd => (f64::NAN, card.v_dd_nominal, 0.05),
    };
    let step = a.step.unwrap_or(dstep);
    let min = match a.min {
        Some(v) => v,
        // Supply sweeps start at the first step-aligned supply with headroom.
        None if a.axis == Axis::Vdd => (vdd_min(&card, a.temp, &opts)? / step).ceil() * step,
        None => dmin,
    };
    let grid = Grid::new(min, a.max.unwrap_or(dmax), step)?;
    let mut m = Manifest::new("sweep");
    m.card(&lc);
    record_circuit(&mut m, &opts, &a.circuit);
    m.push("axis", format!("{:?}", a.axis).to_lowercase());
    m.push("grid", format!("min={} max={} step={}", grid.min, grid.max, grid.step));
    let mut body = String::from("x,i_ref_A,v_b2_V,v_dnw_V,i_dio_A,v_gs1_V,v_sg4_V,converged\n");
    let mut tail = String::new();
    let series = match a.axis {
        Axis::Temp => {
            let v_dd = supply(&card, a.vdd)?;
            m.push("vdd", v_dd);
            let s = with_threads(a.common.threads, || sweep_temperature(&card, v_dd, &grid, &opts))?;
            let analytic = match opts.topology {
                Topology::Conventional => Ok(analytic_tc_conventional(&card, 25.0)),
                Topology::Proposed => analytic_tc_proposed(&card, 25.0, opts.trim.as_ref()),
            };
            let _ = writeln!(tail, "# box_tc_ppmC = {}", num(box_tc(&s)?));
            let _ = writeln!(tail, "# analytic_tc_ppmC_at_25C = {}", opt_num(analytic.ok()));
            s
        }
        Axis::Vdd => {
            m.push("temp", a.temp);
            let s = with_threads(a.common.threads, || sweep_supply(&card, a.temp, &grid, &opts))?;
            let mid = 0.5 * (grid.min + grid.max);
            let ls = solve_pcr(&card, mid, a.temp, &opts)
                .and_then(|op| Ok((analytic_ls(&card, &op, &opts)?, op.i_ref)))
                .ok();
            let _ = writeln!(tail, "# ls_pctV = {}", num(box_ls(&s)?));
            let _ = writeln!(tail, "# analytic_ls_pctV_at_{mid} = {}", opt_num(ls.map(|(l, i)| l.full / i * 100.0)));
            let _ = writeln!(
                tail,
                "# analytic_ls_simplified_pctV_at_{mid} = {}",
                opt_num(ls.map(|(l, i)| l.simplified / i * 100.0))
            );
            s
        }
    };
    for (x, op) in &series.samples {
        let _ = writeln!(
            body,
            "{},{},{},{},{},{},{},{}",
            num(*x),
            num(op.i_ref),
            num(op.v_b2),
            opt_num(op.v_dnw),
            num(op.i_dio),
            num(op.v_gs1),
            num(op.v_sg4),
            op.converged
        );
    }
    Ok(m.render(a.common.deterministic) + &body + &tail)
}

pub fn cmd_mc(a: &McArgs) -> Result<String> {
    let lc = load(&a.common.card)?;
    let card = apply_named_corner(lc.card.clone(), &a.circuit)?;
    let opts = circuit_options(&card, &a.circuit)?;
    let v_dd = supply(&card, a.vdd)?;
    let grid = a.grid.grid()?;
    if !(a.avt_scale >= 0.0) {
        return Err(Error::Input("--avt-scale must be >= 0".into()));
    }
    let base = card
        .mismatch
        .clone()
        .ok_or_else(|| Error::Input(format!("card {} has no mismatch section", card.name)))?;
    let seed = a.seed.unwrap_or(base.seed);
    let spec = base.with_seed(seed).scale_a_vt(a.avt_scale);
    let mode = match a.mode {
        ModeArg::Mismatch => McMode::Mismatch,
        ModeArg::Process => McMode::Process,
        ModeArg::Both => McMode::Both,
    };
    let metric = match a.metric {
        MetricArg::Iref => McMetric::IrefAt25C,
        MetricArg::Tc => McMetric::BoxTc,
    };
    let mut m = Manifest::new("mc");
    m.card(&lc);
    record_circuit(&mut m, &opts, &a.circuit);
    m.push("vdd", v_dd);
    m.push("grid", format!("min={} max={} step={}", grid.min, grid.max, grid.step));
    m.push("n", a.n);
    m.push("mode", format!("{:?}", a.mode).to_lowercase());
    m.push("metric", format!("{:?}", a.metric).to_lowercase());
    m.push("avt_scale", a.avt_scale);
    m.push("seed", seed);
    let r = with_threads(a.common.threads, || mc_run(&card, v_dd, &grid, &spec, a.n, mode, metric, &opts))?;
    let mut body = String::new();
    if a.emit_trials {
        body.push_str("trial,i_ref_A,box_tc_ppmC,error\n");
        for t in &r.trials {
            let err = t.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            let _ = writeln!(body, "{},{},{},{}", t.index, opt_num(t.i_ref), opt_num(t.box_tc), err);
        }
    } else {
        body.push_str("n,n_failed,mean_A,sigma_A,sigma_over_mu,median_tc_ppmC,p99_tc_ppmC\n");
        let _ = writeln!(
            body,
            "{},{},{},{},{},{},{}",
            r.n,
            r.n_failed,
            num(r.mean),
            num(r.sigma),
            num(r.sigma_over_mu),
            opt_num(r.median_tc),
            opt_num(r.p99_tc)
        );
    }
    let mut tail = String::new();
    let _ = writeln!(tail, "# n = {}", r.n);
    let _ = writeln!(tail, "# n_failed = {}", r.n_failed);
    let _ = writeln!(tail, "# mean_A = {}", num(r.mean));
    let _ = writeln!(tail, "# sigma_A = {}", num(r.sigma));
    let _ = writeln!(tail, "# sigma_over_mu = {}", num(r.sigma_over_mu));
    let _ = writeln!(tail, "# median_tc_ppmC = {}", opt_num(r.median_tc));
    let _ = writeln!(tail, "# p99_tc_ppmC = {}", opt_num(r.p99_tc));
    Ok(m.render(a.common.deterministic) + &body + &tail)
}

/// Result of `cmd_trim`: the CSV and the chosen-code lines, which are also
/// echoed on standard output when the CSV goes to a file.
pub struct TrimOutput {
    pub csv: String,
    pub chosen: Vec<String>,
}

pub fn cmd_trim(a: &TrimArgs) -> Result<TrimOutput> {
    let lc = load(&a.common.card)?;
    let card = apply_named_corner(lc.card.clone(), &a.circuit)?;
    let cfg = card
        .trim
        .clone()
        .ok_or_else(|| Error::Input(format!("card {} has no trim configuration", card.name)))?;
    let opts = circuit_options(&card, &a.circuit)?;
    let v_dd = supply(&card, a.vdd)?;
    let grid = a.grid.grid()?;
    let mut m = Manifest::new("trim");
    m.card(&lc);
    record_circuit(&mut m, &opts, &a.circuit);
    m.push("vdd", v_dd);
    m.push("grid", format!("min={} max={} step={}", grid.min, grid.max, grid.step));
    m.push("method", format!("{:?}", a.method).to_lowercase());
    m.push("two_point", format!("t1={} t2={}", a.t1, a.t2));
    m.push("iref_temp", a.temp);
    let two = TcTrimMethod::TwoPoint { t1: a.t1, t2: a.t2 };
    let methods: Vec<(&str, TcTrimMethod)> = match a.method {
        MethodArg::Full => vec![("full", TcTrimMethod::FullProfile)],
        MethodArg::TwoPoint => vec![("two_point", two)],
        MethodArg::Both => vec![("full", TcTrimMethod::FullProfile), ("two_point", two)],
    };
    let (chosen, results, iref, target) = with_threads(a.common.threads, || {
        let mut results = Vec::new();
        for (label, method) in &methods {
            results.push((*label, search_tc_trim(&card, v_dd, &grid, &opts, *method)?));
        }
        // The TC is trimmed first; the I_REF search then runs at that code.
        let tc_code = results[0].1.tc_code;
        let iref_code = opts.trim.map_or(cfg.nominal_iref_code, |t| t.iref_code);
        let target = match a.target {
            Some(t) => t,
            None => {
                let o = CircuitOptions { trim: None, ..opts.clone() };
                solve_pcr(&card, v_dd, a.temp, &o)?.i_ref
            }
        };
        let o = CircuitOptions { trim: Some(TrimState { tc_code, iref_code }), ..opts.clone() };
        let iref = search_iref_trim(&card, v_dd, a.temp, target, &o)?;
        Ok((tc_code, results, iref, target))
    })?;
    m.push("target_A", num(target));
    let mut body = String::from("section,method,code,value\n");
    for (label, r) in &results {
        for (code, v) in &r.scan {
            let _ = writeln!(body, "tc_scan,{label},{code},{}", num(*v));
        }
    }
    for (code, v) in &iref.scan {
        let _ = writeln!(body, "iref_scan,{},{code},{}", methods[0].0, num(*v));
    }
    let mut lines = Vec::new();
    for (label, r) in &results {
        lines.push(format!("# chosen tc_code method={label} code={} box_tc_ppmC={}", r.tc_code, num(r.box_tc)));
    }
    lines.push(format!(
        "# chosen iref_code code={} tc_code={chosen} i_ref_A={}",
        iref.iref_code,
        num(iref.achieved)
    ));
    let mut csv = m.render(a.common.deterministic) + &body;
    for l in &lines {
        csv.push_str(l);
        csv.push('\n');
    }
    Ok(TrimOutput { csv, chosen: lines })
}

const FOM_REQUIRED: [&str; 5] = ["name", "tc", "t_min", "t_max", "area"];

fn field(rec: &csv::StringRecord, idx: Option<usize>) -> Option<&str> {
    idx.and_then(|i| rec.get(i)).map(str::trim).filter(|s| !s.is_empty())
}

fn parse_num(s: &str, col: &str, row: usize) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Input(format!("table row {row}: column {col}: cannot parse {s:?} as a number")))
}

/// FoM₁/FoM₂ for a comparison table. Units: tc ppm/°C, temperatures °C,
/// area mm², power nW, v_dd V, i_ref nA. Extra columns pass through.
pub fn fom_table(text: &str) -> Result<String> {
    let default_header = "name,tc,t_min,t_max,area,power,v_dd,i_ref";
    if text.trim().is_empty() {
        return Ok(format!("{default_header},fom1,fom2\n"));
    }
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Parse(format!("table header: {e}")))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    for c in FOM_REQUIRED {
        if col(c).is_none() {
            return Err(Error::Input(format!("table lacks required column {c}")));
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "{},fom1,fom2", headers.iter().collect::<Vec<_>>().join(","));
    for (k, rec) in rdr.records().enumerate() {
        // Row numbers count the header as row 1.
        let row = k + 2;
        let rec = rec.map_err(|e| Error::Input(format!("table row {row}: {e}")))?;
        let get = |c: &str| -> Result<Option<f64>> {
            field(&rec, col(c)).map(|s| parse_num(s, c, row)).transpose()
        };
        let need = |c: &str| -> Result<f64> {
            get(c)?.ok_or_else(|| Error::Input(format!("table row {row}: missing {c}")))
        };
        let (tc, t_min, t_max, area) = (need("tc")?, need("t_min")?, need("t_max")?, need("area")?);
        let (power, v_dd, i_ref) = (get("power")?, get("v_dd")?, get("i_ref")?);
        let base = FomInputs { tc, t_min, t_max, area, i_vdd: 1.0, i_ref: 1.0 };
        let f1 = fom1(&base).map_err(|e| Error::Input(format!("table row {row}: {e}")))?;
        let f2 = match (power, v_dd, i_ref) {
            (Some(p), Some(v), Some(i)) => Some(
                fom2(&FomInputs { i_vdd: p * 1e-9 / v, i_ref: i * 1e-9, ..base })
                    .map_err(|e| Error::Input(format!("table row {row}: {e}")))?,
            ),
            _ => None,
        };
        let cells: Vec<String> = rec
            .iter()
            .map(|c| if c.contains(',') { format!("\"{c}\"") } else { c.to_string() })
            .collect();
        let _ = writeln!(out, "{},{},{}", cells.join(","), num(f1), opt_num(f2));
    }
    Ok(out)
}

pub fn cmd_fom(a: &FomArgs) -> Result<String> {
    let text = read_text(&a.table)?;
    let mut m = Manifest::new("fom");
    m.push("table", a.table.display());
    m.push("table_sha256", sha256_hex(text.as_bytes()));
    if let Some(c) = &a.card {
        m.push("card", c);
    }
    Ok(m.render(a.deterministic) + &fom_table(&text)?)
}

/// Size-sweep CSV and whether any cell converged.
pub fn cmd_size_sweep(a: &SizeSweepArgs) -> Result<(String, bool)> {
    let lc = load(&a.common.card)?;
    let card = apply_named_corner(lc.card.clone(), &a.circuit)?;
    let opts = circuit_options(&card, &a.circuit)?;
    let v_dd = supply(&card, a.vdd)?;
    let grid = a.grid.grid()?;
    let mut m = Manifest::new("size-sweep");
    m.card(&lc);
    record_circuit(&mut m, &opts, &a.circuit);
    m.push("vdd", v_dd);
    m.push("grid", format!("min={} max={} step={}", grid.min, grid.max, grid.step));
    let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
    m.push("w5", list(&a.w5));
    m.push("w6", list(&a.w6));
    let cells = with_threads(a.common.threads, || size_sweep_2t(&card, &a.w5, &a.w6, v_dd, &grid, &opts))?;
    let mut body = String::from("w5,w6,v_b2_slope_uVC,tc_ppmC,converged,tc_signed_ppmC\n");
    let mut failed = 0;
    for c in &cells {
        let ok = c.error.is_none();
        failed += usize::from(!ok);
        let _ = writeln!(
            body,
            "{},{},{},{},{},{}",
            num(c.w5),
            num(c.w6),
            opt_num(c.v_b2_slope),
            opt_num(c.tc),
            ok,
            opt_num(c.tc_signed)
        );
    }
    let tail = format!("# cells = {}\n# failed_cells = {failed}\n", cells.len());
    Ok((m.render(a.common.deterministic) + &body + &tail, failed < cells.len()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|source| Error::Io { path: p.display().to_string(), source }),
        None => {
            use std::io::Write;
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())
                .map_err(|source| Error::Io { path: "<stdout>".into(), source })
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Sweep(a) => emit(a.common.out.as_deref(), &cmd_sweep(&a)?).map(|_| 0),
        Command::Mc(a) => emit(a.common.out.as_deref(), &cmd_mc(&a)?).map(|_| 0),
        Command::Trim(a) => {
            let t = cmd_trim(&a)?;
            emit(a.common.out.as_deref(), &t.csv)?;
            if a.common.out.is_some() {
                emit(None, &(t.chosen.join("\n") + "\n"))?;
            }
            Ok(0)
        }
        Command::Fom(a) => emit(a.out.as_deref(), &cmd_fom(&a)?).map(|_| 0),
        Command::SizeSweep(a) => {
            let (csv, any) = cmd_size_sweep(&a)?;
            emit(a.common.out.as_deref(), &csv)?;
            if any {
                Ok(0)
            } else {
                eprintln!("error: no size-sweep cell converged");
                Ok(3)
            }
        }
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
