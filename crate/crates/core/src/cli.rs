//! Command-line front end: configuration, dispatch and deterministic reports.

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::charge::{
    eval_z, eval_z_closed, in_p_plus, omega_from_bw, orientation, plane_gram, spherical_wall_hits, support_constant, wall_scan_alpha,
    BWParams, FLOAT_TOL,
};
use crate::error::{Error, Result};
use crate::lattice::{LatticeConfig, MukaiVector, NSLattice, SphericalClass, SphericalNormBasis};
use crate::lax::{
    build_lax_point, discreteness_coordinates, family_masses, irrationality_certificate, kernel_classes, separate_from_hom_functionals,
    z_alpha0, DEFAULT_SEARCH_LIMIT,
};
use crate::reconstruct::{reconstruct, ChargeOracle, MassOracle, MassTable, ReconstructedCharge};
use crate::scalar::{format_f64, parse_rational, Complex, QuadNumber, Rational, Scalar, REPORT_DIGITS};
use crate::spherical::{companion_classes, enumerate_spherical, good_basis, slope, GoodBasis, SearchBox};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Pair,
    Enum,
    Basis,
    Chamber,
    Walls,
    Reconstruct,
    Lax,
    Separate,
    Selftest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Float,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

fn parse_box(s: &str) -> std::result::Result<SearchBox, String> {
    SearchBox::parse(s).map_err(|e| e.to_string())
}

/// Mukai lattice computations for K3 surfaces.
#[derive(Clone, Debug, Parser)]
#[command(name = "k3lax", version)]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,
    /// Lattice file: {"name": ..., "gram": [[..]], "H": [..]}.
    #[arg(long)]
    pub lattice: Option<PathBuf>,
    /// Slope `p/q`; defaults to 0 where a slope is needed.
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<String>,
    #[arg(long = "box", value_parser = parse_box, default_value = "8,8,40")]
    pub search_box: SearchBox,
    #[arg(long, value_enum, default_value = "exact")]
    pub mode: Mode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "out", value_enum, default_value = "json")]
    pub output: OutputFormat,
    /// Zero tolerance in float mode.
    #[arg(long = "tol", default_value_t = FLOAT_TOL)]
    pub tolerance: f64,
    /// Worker threads; output does not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// First vector for `pair`, as `r,D_1,..,D_rho,s`.
    #[arg(long, allow_hyphen_values = true)]
    pub u: Option<String>,
    /// Second vector for `pair`.
    #[arg(long, allow_hyphen_values = true)]
    pub v: Option<String>,
    /// B-field as comma-separated rationals.
    #[arg(long = "B", allow_hyphen_values = true)]
    pub b: Option<String>,
    /// `p/q`, a decimal, or `p/q*sqrtd` for a multiple of `sqrt(H^2/2)`.
    #[arg(long)]
    pub alpha: Option<String>,
    /// Class for `walls`; defaults to the lax class of `--mu`.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<String>,
    /// Use `e^{lH}` applied to the lax class as the `walls` class.
    #[arg(long, allow_hyphen_values = true)]
    pub ell: Option<i64>,
    #[arg(long = "alpha-min")]
    pub alpha_min: Option<String>,
    /// JSON list of `{"v": {"r":..,"D":[..],"s":..}, "squared_mass": ..}`.
    #[arg(long)]
    pub masses: Option<PathBuf>,
    #[arg(long = "ell-min", default_value_t = -5, allow_hyphen_values = true)]
    pub ell_min: i64,
    #[arg(long = "ell-max", default_value_t = 5, allow_hyphen_values = true)]
    pub ell_max: i64,
    #[arg(long = "search-limit", default_value_t = DEFAULT_SEARCH_LIMIT)]
    pub search_limit: u64,
    /// Random samples per check in `selftest`.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Provenance {
    pub anchors: Vec<&'static str>,
    #[serde(rename = "box")]
    pub search_box: String,
    pub mode: Mode,
    pub seed: u64,
    pub version: &'static str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub command: Command,
    pub inputs: Value,
    pub results: Value,
    pub provenance: Provenance,
    #[serde(skip)]
    pub table: Option<Table>,
    /// Nonzero when the command ran but found failures (selftest).
    #[serde(skip)]
    pub exit_code: i32,
}

impl Report {
    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Json => Ok(serde_json::to_string_pretty(self).expect("reports serialize") + "\n"),
            OutputFormat::Csv => {
                let table = self.table.as_ref().ok_or_else(|| Error::Config("csv output is only available for enum and lax".into()))?;
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(&table.header).map_err(|e| Error::Config(e.to_string()))?;
                for row in &table.rows {
                    w.write_record(row).map_err(|e| Error::Config(e.to_string()))?;
                }
                let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
                Ok(String::from_utf8(bytes).expect("csv is utf-8"))
            }
        }
    }
}

/// Machine-readable error object.
pub fn error_json(err: &Error) -> String {
    serde_json::to_string_pretty(&json!({
        "error": { "kind": err.kind(), "message": err.to_string(), "exit_code": err.exit_code() }
    }))
    .expect("errors serialize")
        + "\n"
}

pub fn load_lattice(path: &Path) -> Result<NSLattice> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut cfg: LatticeConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column())))?;
    if cfg.name.is_empty() {
        cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    NSLattice::from_config(cfg)
}

fn parse_vector(text: &Option<String>, flag: &str, lat: &NSLattice) -> Result<MukaiVector> {
    let text = text.as_ref().ok_or_else(|| Error::Config(format!("--{flag} is required")))?;
    MukaiVector::parse(text, lat.rank())
}

fn parse_b(text: &str, lat: &NSLattice) -> Result<Vec<Rational>> {
    let b: Vec<Rational> = text.split(',').map(|p| parse_rational(p.trim())).collect::<Result<_>>()?;
    if b.len() != lat.rank() {
        return Err(Error::Dimension { expected: lat.rank(), got: b.len() });
    }
    Ok(b)
}

/// `p/q` or `p/q*sqrtd`.
pub fn parse_quad(text: &str, d: u64) -> Result<QuadNumber> {
    match text.trim().strip_suffix("*sqrtd") {
        Some(coef) => QuadNumber::new(Rational::zero(), parse_rational(coef.trim())?, d),
        None => Ok(QuadNumber::from_rational(parse_rational(text.trim())?, d)),
    }
}

fn rationals_json(v: &[Rational]) -> Value {
    Value::Array(v.iter().map(|x| Value::String(x.to_string())).collect())
}

fn quad_json(q: &QuadNumber) -> Value {
    json!({ "exact": q, "decimal": q.to_decimal_string(REPORT_DIGITS) })
}

fn vectors_json<'a>(vs: impl IntoIterator<Item = &'a MukaiVector>) -> Value {
    Value::Array(vs.into_iter().map(|v| serde_json::to_value(v).expect("vectors serialize")).collect())
}

fn classes_json(cs: &[SphericalClass]) -> Value {
    vectors_json(cs.iter().map(SphericalClass::vector))
}

impl RunConfig {
    fn mu(&self) -> Result<Rational> {
        self.mu.as_deref().map(parse_rational).unwrap_or_else(|| Ok(Rational::zero()))
    }

    fn lattice(&self) -> Result<NSLattice> {
        let path = self.lattice.as_ref().ok_or_else(|| Error::Config("--lattice is required".into()))?;
        load_lattice(path)
    }
}

struct Outcome {
    inputs: Value,
    results: Value,
    anchors: Vec<&'static str>,
    table: Option<Table>,
    exit_code: i32,
}

impl Outcome {
    fn new(inputs: Value, results: Value, anchors: Vec<&'static str>) -> Self {
        Outcome { inputs, results, anchors, table: None, exit_code: 0 }
    }
}

pub fn run(cfg: &RunConfig) -> Result<Report> {
    if cfg.output == OutputFormat::Csv && !matches!(cfg.command, Command::Enum | Command::Lax) {
        return Err(Error::Config("csv output is only available for enum and lax".into()));
    }
    if cfg.mode == Mode::Float && !(cfg.tolerance.is_finite() && cfg.tolerance > 0.0) {
        return Err(Error::Config("--tol must be positive".into()));
    }
    let outcome = match cfg.command {
        Command::Selftest => run_selftest(cfg)?,
        command => {
            let lat = cfg.lattice()?;
            let mut out = match command {
                Command::Pair => run_pair(cfg, &lat)?,
                Command::Enum => run_enum(cfg, &lat)?,
                Command::Basis => run_basis(cfg, &lat)?,
                Command::Chamber => run_chamber(cfg, &lat)?,
                Command::Walls => run_walls(cfg, &lat)?,
                Command::Reconstruct => run_reconstruct(cfg, &lat)?,
                Command::Lax => run_lax(cfg, &lat)?,
                Command::Separate => run_separate(cfg, &lat)?,
                Command::Selftest => unreachable!(),
            };
            if let Value::Object(map) = &mut out.inputs {
                map.insert("lattice".into(), serde_json::to_value(lat.config()).expect("lattice serializes"));
            }
            out
        }
    };
    Ok(Report {
        command: cfg.command,
        inputs: outcome.inputs,
        results: outcome.results,
        provenance: Provenance {
            anchors: outcome.anchors,
            search_box: cfg.search_box.to_string(),
            mode: cfg.mode,
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION"),
        },
        table: outcome.table,
        exit_code: outcome.exit_code,
    })
}

fn run_pair(cfg: &RunConfig, lat: &NSLattice) -> Result<Outcome> {
    let u = parse_vector(&cfg.u, "u", lat)?;
    let v = parse_vector(&cfg.v, "v", lat)?;
    let pairing = lat.pairing(&u, &v)?;
    let reflection = SphericalClass::new(lat, u.clone()).ok().map(|c| lat.reflect(&c, &v));
    let results = json!({
        "pairing": pairing,
        "chi": -pairing,
        "u_square": lat.square(&u),
        "v_square": lat.square(&v),
        "u_spherical": lat.is_spherical(&u),
        "v_spherical": lat.is_spherical(&v),
        "u_slope": slope(lat, &u).map(|m| m.to_string()),
        "v_slope": slope(lat, &v).map(|m| m.to_string()),
        "reflection_of_v_in_u": reflection,
    });
    Ok(Outcome::new(json!({ "u": u, "v": v }), results, vec!["mukai_pairing", "spherical_reflection"]))
}

fn run_enum(cfg: &RunConfig, lat: &NSLattice) -> Result<Outcome> {
    let (classes, r0, mu) = match &cfg.mu {
        Some(_) => {
            let mu = cfg.mu()?;
            let (classes, r0) = crate::spherical::delta_mu_plus(lat, &mu, &cfg.search_box);
            (classes, r0, Some(mu))
        }
        None => (enumerate_spherical(lat, &cfg.search_box), None, None),
    };
    let slope_text = |v: &MukaiVector| slope(lat, v).map(|m| m.to_string()).unwrap_or_default();
    let mut header = vec!["r".to_string()];
    header.extend((1..=lat.rank()).map(|i| format!("D{i}")));
    header.extend(["s".to_string(), "slope".to_string()]);
    let rows = classes
        .iter()
        .map(|c| {
            let v = c.vector();
            let mut row: Vec<String> = v.coords().iter().map(i64::to_string).collect();
            row.push(slope_text(v));
            row
        })
        .collect();
    let results = json!({
        "count": classes.len(),
        "r0": r0,
        "classes": classes.iter().map(|c| json!({ "v": c.vector(), "slope": slope(lat, c.vector()).map(|m| m.to_string()) })).collect::<Vec<_>>(),
    });
    let inputs = json!({ "mu": mu.map(|m| m.to_string()) });
    let mut out = Outcome::new(inputs, results, vec!["spherical_classes", "positive_slope_classes"]);
    out.table = Some(Table { header, rows });
    Ok(out)
}

fn run_basis(cfg: &RunConfig, lat: &NSLattice) -> Result<Outcome> {
    let gb = good_basis(lat, &cfg.search_box)?;
    let companions = companion_classes(lat, &gb)?;
    let results = json!({
        "vectors": classes_json(&gb.vectors),
        "pair_matrix": gb.pair_matrix,
        "companions": companions
            .iter()
            .map(|((i, j), w)| json!({ "i": i, "j": j, "w": w.vector() }))
            .collect::<Vec<_>>(),
    });
    Ok(Outcome::new(json!({}), results, vec!["good_basis", "companion_classes"]))
}

fn chamber_results<S: Scalar>(lat: &NSLattice, params: &BWParams<S>, norm_basis: &SphericalNormBasis, bx: &SearchBox, tol: f64) -> Result<Value> {
    let omega = omega_from_bw(lat, params);
    let gram = plane_gram(lat, &omega);
    let support = match support_constant(lat, norm_basis, &omega, bx, tol) {
        Ok(est) => json!({
            "value": format_f64(est.value),
            "ratio_squared": est.ratio_squared.to_json(),
            "witness": est.witness.vector(),
            "massive_classes": est.massive_classes,
        }),
        Err(Error::EmptySupport) => Value::Null,
        Err(e) => return Err(e),
    };
    Ok(json!({
        "omega": omega.to_json(),
        "plane_gram": gram.iter().map(|row| row.iter().map(Scalar::to_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "orientation": orientation(lat, &omega).to_json(),
        "in_p_plus": in_p_plus(lat, &omega),
        "wall_hits": classes_json(&spherical_wall_hits(lat, &omega, bx, tol)),
        "support_constant": support,
    }))
}

fn run_chamber(cfg: &RunConfig, lat: &NSLattice) -> Result<Outcome> {
    let lp = build_lax_point(lat, &cfg.mu()?, &cfg.search_box)?;
    let b = match &cfg.b {
        Some(text) => parse_b(text, lat)?,
        None => lp.b0.clone(),
    };
    let alpha_exact = match &cfg.alpha {
        Some(text) => parse_quad(text, lat.d())?,
        None => lp.alpha0.clone(),
    };
    let norm_basis = SphericalNormBasis::new(lat, lp.delta0.clone())?;
    let results = match cfg.mode {
        Mode::Exact => chamber_results(lat, &BWParams::new(lat, b.clone(), alpha_exact.clone())?, &norm_basis, &cfg.search_box, 0.0)?,
        Mode::Float => {
            chamber_results(lat, &BWParams::new(lat, b.clone(), alpha_exact.to_f64())?, &norm_basis, &cfg.search_box, cfg.tolerance)?
        }
    };
    let inputs = json!({
        "B": rationals_json(&b),
        "alpha": quad_json(&alpha_exact),
        "norm_basis": { "v1": norm_basis.v1.vector(), "complement": vectors_json(&norm_basis.complement) },
    });
    Ok(Outcome::new(inputs, results, vec!["exp_b_i_omega", "positive_component", "spherical_walls", "support_constant"]))
}

fn run_walls(cfg: &RunConfig, lat: &NSLattice) -> Result<Outcome> {
    let lp = build_lax_point(lat, &cfg.mu()?, &cfg.search_box)?;
    let delta = match (&cfg.delta, cfg.ell) {
        (Some(_), Some(_)) => return Err(Error::Config("--delta and --ell are exclusive".into())),
        (Some(_), None) => parse_vector(&cfg.delta, "delta", lat)?,
        (None, Some(ell)) => lat.tensor_line_bundle(ell, lp.delta0.vector()),
        (None, None) => lp.delta0.vector().clone(),
    };
    let b0 = match &cfg.b {
        Some(text) => parse_b(text, lat)?,
        None => lp.b0.clone(),
    };
    let alpha_min = match &cfg.alpha_min {
        Some(text) => parse_quad(text, lat.d())?,
        None => lp.alpha0.clone(),
    };
    let scan = wall_scan_alpha(lat, &b0, &delta, &alpha_min, &cfg.search_box)?;
    let walls: Vec<Value> = scan
        .walls
        .iter()
        .map(|w| {
            json!({
                "alpha_squared": w.alpha_squared.to_string(),
                "alpha": w.alpha.as_ref().map(quad_json),
                "alpha_decimal": format_f64(crate::scalar::Scalar::to_f64(&QuadNumber::from_rational(w.alpha_squared.clone(), lat.d())).sqrt()),
                "witnesses": vectors_json(&w.witnesses),
            })
        })
        .collect();
    let results = json!({
        "candidates": scan.candidates,
        "wall_count": scan.walls.len(),
        "walls": walls,
        "aligned_count": scan.aligned.len(),
        "aligned": vectors_json(&scan.aligned),
    });
    let inputs = json!({ "delta": delta, "B0": rationals_json(&b0), "alpha_min": quad_json(&alpha_min), "mu": lp.mu.to_string() });
    Ok(Outcome::new(inputs, results, vec!["alpha_line", "numerical_walls"]))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum VectorSpec {
    Object(MukaiVector),
    Text(String),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MassSpec {
    Number(f64),
    Text(String),
    Quad(QuadNumber),
}

#[derive(Deserialize)]
struct MassEntry {
    v: VectorSpec,
    squared_mass: MassSpec,
}

fn read_masses(path: &Path, lat: &NSLattice) -> Result<Vec<(MukaiVector, MassSpec)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let entries: Vec<MassEntry> = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column())))?;
    entries
        .into_iter()
        .map(|e| {
            let v = match e.v {
                VectorSpec::Object(v) => v,
                VectorSpec::Text(t) => MukaiVector::parse(&t, lat.rank())?,
            };
            lat.check_dim(&v)?;
            Ok((v, e.squared_mass))
        })
        .collect()
}

fn exact_table(entries: Vec<(MukaiVector, MassSpec)>, d: u64) -> Result<MassTable<QuadNumber>> {
    let mut table = MassTable::new();
    for (v, m) in entries {
        let m = match m {
            MassSpec::Text(t) => parse_quad(&t, d)?,
            MassSpec::Quad(q) if q.d() == d => q,
            MassSpec::Quad(q) => return Err(Error::RadicandMismatch(q.d(), d)),
            MassSpec::Number(x) if x.fract() == 0.0 && x.abs() < 9.0e15 => QuadNumber::from_int(x as i64, d),
            MassSpec::Number(x) => return Err(Error::Config(format!("inexact squared mass {x} in exact mode; give it as p/q"))),
        };
        table.insert(v, m);
    }
    Ok(table)
}

fn float_table(entries: Vec<(MukaiVector, MassSpec)>, d: u64) -> Result<MassTable<f64>> {
    let mut table = MassTable::new();
    for (v, m) in entries {
        let m = match m {
            MassSpec::Number(x) => x,
            MassSpec::Text(t) => parse_quad(&t, d)?.to_f64(),
            MassSpec::Quad(q) => q.to_f64(),
        };
        table.insert(v, m);
    }
    Ok(table)
}

fn charge_json<S: Scalar>(c: &ReconstructedCharge<S>) -> Value {
    json!({
        "coefficients": c.coefficients.iter().map(Complex::to_json).collect::<Vec<_>>(),
        "omega": c.omega.to_json(),
        "residual": c.residual.to_json(),
        "branch": c.branch,
        "pivot": c.pivot,
    })
}

/// Gauge-normalized values `Z(v_i) / Z(v_1)` of a known charge.
fn normalized_values<S: Scalar>(lat: &NSLattice, basis: &GoodBasis, params: &BWParams<S>) -> Option<Vec<Complex<S>>> {
    let omega = omega_from_bw(lat, params);
    let z1 = eval_z(lat, &omega, basis.vector(0));
    (0..basis.len()).map(|i| eval_z(lat, &omega, basis.vector(i)).checked_div(&z1)).collect()
}

fn matches_hidden<S: Scalar>(got: &[Complex<S>], expected: &[Complex<S>], tol: f64) -> bool {
    got.iter().zip(expected).all(|(g, e)| {
        let diff = g.clone() - e.clone();
        let scale = e.norm_square().to_f64().sqrt().max(1.0);
        diff.re.negligible(tol, scale) && diff.im.negligible(tol, scale)
    })
}

/// Seeded rational `(B, alpha)` with small numerators and denominators.
pub fn random_bw(rng: &mut ChaCha8Rng, rho: usize) -> (Vec<Rational>, Rational) {
    let b = (0..rho).map(|_| Rational::new(rng.gen_range(-6i64..=6).into(), rng.gen_range(1i64..=4).into())).collect();
    let alpha = Rational::new(rng.gen_range(1i64..=8).into(), rng.gen_range(1i64..=4).into());
    (b, alpha)
}

fn reconstruct_hidden(cfg: &RunConfig, lat: &NSLattice, basis: &GoodBasis, b: Vec<Rational>, alpha: &Rational) -> Result<Value> {
    let alpha_q = QuadNumber::from_rational(alpha.clone(), lat.d());
    Ok(match cfg.mode {
        Mode::Exact => {
            let params = BWParams::new(lat, b, alpha_q)?;
            let oracle = ChargeOracle::new(lat, omega_from_bw(lat, &params));
            let got = reconstruct(lat, basis, &oracle, 0.0)?;
            let expected = normalized_values(lat, basis, &params).ok_or(Error::DivisionByZero)?;
            let mut v = charge_json(&got);
            v["matches_hidden"] = json!(matches_hidden(&got.coefficients, &expected, 0.0));
            v
        }
        Mode::Float => {
            let params = BWParams::new(lat, b, alpha_q.to_f64())?;
            let oracle = ChargeOracle::new(lat, omega_from_bw(lat, &params));
            let got = reconstruct(lat, basis, &oracle, cfg.tolerance)?;
            let expected = normalized_values(lat, basis, &params).ok_or(Error::DivisionByZero)?;
            let mut v = charge_json(&got);
            v["matches_hidden"] = json!(matches_hidden(&got.coefficients, &expected, cfg.tolerance));
            v
        }
    })
}

fn run_reconstruct(cfg: &RunConfig, lat: &NSLattice) -> Result<Outcome> {
    let basis = good_basis(lat, &cfg.search_box)?;
    let basis_json = classes_json(&basis.vectors);
    if let Some(path) = &cfg.masses {
        let entries = read_masses(path, lat)?;
        let results = match cfg.mode {
            Mode::Exact => charge_json(&reconstruct(lat, &basis, &exact_table(entries, lat.d())? as &dyn MassOracle<QuadNumber>, 0.0)?),
            Mode::Float => charge_json(&reconstruct(lat, &basis, &float_table(entries, lat.d())? as &dyn MassOracle<f64>, cfg.tolerance)?),
        };
        let inputs = json!({ "masses": path.display().to_string(), "basis": basis_json });
        return Ok(Outcome::new(inputs, results, vec!["good_basis", "companion_classes", "mass_reconstruction", "positive_component"]));
    }
    let (b, alpha, results) = match (&cfg.b, &cfg.alpha) {
        (None, None) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut last = None;
            let mut found = None;
            for _ in 0..100 {
                let (b, alpha) = random_bw(&mut rng, lat.rank());
                match reconstruct_hidden(cfg, lat, &basis, b.clone(), &alpha) {
                    Ok(v) => {
                        found = Some((b, alpha, v));
                        break;
                    }
                    Err(e @ (Error::DegenerateCharge(_) | Error::DivisionByZero)) => last = Some(e),
                    Err(e) => return Err(e),
                }
            }
            found.ok_or_else(|| last.expect("at least one attempt"))?
        }
        _ => {
            let b = match &cfg.b {
                Some(text) => parse_b(text, lat)?,
                None => vec![Rational::zero(); lat.rank()],
            };
            let alpha = match &cfg.alpha {
                Some(text) => parse_rational(text)?,
                None => Rational::one(),
            };
            let results = reconstruct_hidden(cfg, lat, &basis, b.clone(), &alpha)?;
            (b, alpha, results)
        }
    };
    let inputs = json!({ "hidden": { "B": rationals_json(&b), "alpha": alpha.to_string() }, "basis": basis_json });
    Ok(Outcome::new(inputs, results, vec!["good_basis", "companion_classes", "mass_reconstruction", "positive_component"]))
}

fn run_lax(cfg: &RunConfig, lat: &NSLattice) -> Result<Outcome> {
    let lp = build_lax_point(lat, &cfg.mu()?, &cfg.search_box)?;
    let family = family_masses(lat, &lp, cfg.ell_min, cfg.ell_max)?;
    let mut header = vec!["ell".to_string(), "r".to_string()];
    header.extend((1..=lat.rank()).map(|i| format!("D{i}")));
    header.extend(["s", "re_z", "im_z", "squared_mass", "squared_mass_decimal"].map(String::from));
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for row in &family {
        let mut cells = vec![row.ell.to_string()];
        cells.extend(row.delta.coords().iter().map(i64::to_string));
        cells.extend([row.z.re.to_string(), row.z.im.to_string(), row.squared_mass.to_string(), row.squared_mass.to_decimal_string(REPORT_DIGITS)]);
        rows.push(cells);
        let (re_int, im_int) = discreteness_coordinates(&lp, &row.z).expect("checked by z_alpha0");
        entries.push(json!({
            "ell": row.ell,
            "delta": row.delta,
            "z": row.z.to_json(),
            "r0_squared_re": re_int.to_string(),
            "r0_squared_sqrt_d_im": im_int.to_string(),
            "squared_mass": quad_json(&row.squared_mass),
        }));
    }
    let results = json!({
        "lax_point": lp.to_json(),
        "family": entries,
        "kernel_classes": classes_json(&kernel_classes(lat, &lp, &cfg.search_box)),
    });
    let inputs = json!({ "mu": lp.mu.to_string(), "ell_min": cfg.ell_min, "ell_max": cfg.ell_max });
    let mut out = Outcome::new(inputs, results, vec!["lax_point", "discreteness", "mass_family", "kernel_classes"]);
    out.table = Some(Table { header, rows });
    Ok(out)
}

fn run_separate(cfg: &RunConfig, lat: &NSLattice) -> Result<Outcome> {
    let lp = build_lax_point(lat, &cfg.mu()?, &cfg.search_box)?;
    let report = separate_from_hom_functionals(lat, &lp, cfg.search_limit)?;
    report.certificate.verify()?;
    let results = json!({
        "lax_point": lp.to_json(),
        "certificate": report.certificate,
        "verified": true,
        "separation": report,
    });
    let inputs = json!({ "mu": lp.mu.to_string(), "search_limit": cfg.search_limit });
    Ok(Outcome::new(inputs, results, vec!["lax_point", "mass_family", "irrationality_certificate", "integer_functionals"]))
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckTally {
    pub check: &'static str,
    pub lattice: String,
    pub passed: u64,
    pub failed: u64,
}

fn tally(out: &mut Vec<CheckTally>, check: &'static str, lattice: &str, results: impl IntoIterator<Item = bool>) {
    let (mut passed, mut failed) = (0, 0);
    for ok in results {
        if ok {
            passed += 1;
        } else {
            failed += 1;
        }
    }
    out.push(CheckTally { check, lattice: lattice.to_string(), passed, failed });
}

pub fn random_vector(rng: &mut ChaCha8Rng, rho: usize, bound: i64) -> MukaiVector {
    let r = rng.gen_range(-bound..=bound);
    let divisor = (0..rho).map(|_| rng.gen_range(-bound..=bound)).collect();
    MukaiVector::new(r, divisor, rng.gen_range(-bound..=bound))
}

/// The three lattices every selftest covers.
pub fn standard_lattices() -> Vec<NSLattice> {
    vec![
        NSLattice::rank_one(1),
        NSLattice::rank_one(2),
        NSLattice::new("rank2-diag-2-m4", vec![vec![2, 0], vec![0, -4]], vec![1, 0]).expect("valid lattice"),
    ]
}

fn lattice_checks(lat: &NSLattice, rng: &mut ChaCha8Rng, samples: usize, out: &mut Vec<CheckTally>) {
    let name = lat.name().to_string();
    let rho = lat.rank();
    let draw = |rng: &mut ChaCha8Rng| random_vector(rng, rho, 30);

    let triples: Vec<(MukaiVector, MukaiVector, MukaiVector, i64)> =
        (0..samples).map(|_| (draw(rng), draw(rng), draw(rng), rng.gen_range(-9i64..=9))).collect();
    tally(out, "pairing_symmetry", &name, triples.iter().map(|(u, v, _, _)| lat.pair(u, v) == lat.pair(v, u)));
    tally(
        out,
        "pairing_bilinearity",
        &name,
        triples.iter().map(|(u, v, w, k)| lat.pair(&u.add(v), w) == lat.pair(u, w) + lat.pair(v, w) && lat.pair(&u.scale(*k), v) == k * lat.pair(u, v)),
    );

    let small = SearchBox::new(3, 3, 12);
    let spherical = enumerate_spherical(lat, &small);
    let brute: Vec<MukaiVector> = small.vectors(rho).into_iter().filter(|v| lat.square(v) == -2).collect();
    let listed: Vec<MukaiVector> = spherical.iter().map(|c| c.vector().clone()).collect();
    tally(out, "enumeration_matches_brute_force", &name, [listed == brute]);

    if let Some(delta) = spherical.choose(rng).cloned() {
        tally(
            out,
            "reflection_involution_isometry",
            &name,
            triples.iter().map(|(u, v, _, _)| {
                let (ru, rv) = (lat.reflect(&delta, u), lat.reflect(&delta, v));
                lat.reflect(&delta, &ru) == *u && lat.pair(&ru, &rv) == lat.pair(u, v)
            }),
        );
    }
    tally(
        out,
        "line_bundle_action_isometry",
        &name,
        triples.iter().map(|(u, v, _, k)| {
            let m = k.rem_euclid(5) - 2;
            let composed = lat.tensor_line_bundle(m, &lat.tensor_line_bundle(*k, u));
            composed == lat.tensor_line_bundle(k + m, u)
                && lat.pair(&lat.tensor_line_bundle(*k, u), &lat.tensor_line_bundle(*k, v)) == lat.pair(u, v)
        }),
    );

    let basis = good_basis(lat, &SearchBox::new(8, 8, 40));
    let basis_ok = basis.as_ref().map(|b| b.validate(lat).is_ok() && companion_classes(lat, b).is_ok()).unwrap_or(false);
    tally(out, "good_basis_and_companions", &name, [basis_ok]);

    let charges: Vec<(Vec<Rational>, Rational)> = (0..samples.min(200)).map(|_| random_bw(rng, rho)).collect();
    tally(
        out,
        "closed_form_matches_pairing",
        &name,
        charges.iter().zip(&triples).map(|((b, alpha), (u, _, _, _))| {
            let params = BWParams { b: b.clone(), alpha: QuadNumber::from_rational(alpha.clone(), lat.d()) };
            eval_z(lat, &omega_from_bw(lat, &params), u) == eval_z_closed(lat, &params, u)
        }),
    );
    if let Ok(basis) = &basis {
        tally(
            out,
            "reconstruction_round_trip",
            &name,
            charges.iter().take(20).map(|(b, alpha)| {
                let params = BWParams { b: b.clone(), alpha: QuadNumber::from_rational(alpha.clone(), lat.d()) };
                let oracle = ChargeOracle::new(lat, omega_from_bw(lat, &params));
                match reconstruct(lat, basis, &oracle, 0.0) {
                    Ok(got) => normalized_values(lat, basis, &params).is_some_and(|e| matches_hidden(&got.coefficients, &e, 0.0)) && got.residual.is_zero(),
                    // a charge vanishing on a probed class is outside the algorithm's domain
                    Err(Error::DegenerateCharge(_)) | Err(Error::DivisionByZero) => true,
                    Err(_) => false,
                }
            }),
        );
    }

    if let Ok(lp) = build_lax_point(lat, &Rational::zero(), &SearchBox::new(8, 8, 40)) {
        tally(out, "lax_discreteness", &name, triples.iter().map(|(u, _, _, _)| z_alpha0(lat, &lp, u).is_ok()));
        tally(out, "lax_family_masses", &name, [family_masses(lat, &lp, -20, 20).is_ok()]);
        tally(out, "lax_family_spherical", &name, (-20..=20).map(|l| lat.is_spherical(&lat.tensor_line_bundle(l, lp.delta0.vector()))));
    } else {
        tally(out, "lax_point_exists", &name, [false]);
    }
}

fn run_selftest(cfg: &RunConfig) -> Result<Outcome> {
    let mut lattices = standard_lattices();
    if cfg.lattice.is_some() {
        lattices.push(cfg.lattice()?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checks = Vec::new();
    for lat in &lattices {
        lattice_checks(lat, &mut rng, cfg.samples, &mut checks);
    }
    tally(&mut checks, "irrationality_certificates", "-", (1..=50u64).map(|a| irrationality_certificate(a, cfg.search_limit).is_ok_and(|c| c.verify().is_ok())));
    let passed: u64 = checks.iter().map(|c| c.passed).sum();
    let failed: u64 = checks.iter().map(|c| c.failed).sum();
    let results = json!({ "passed": passed, "failed": failed, "checks": checks });
    let inputs = json!({
        "samples": cfg.samples,
        "lattices": lattices.iter().map(|l| serde_json::to_value(l.config()).expect("lattice serializes")).collect::<Vec<_>>(),
    });
    let mut out = Outcome::new(
        inputs,
        results,
        vec!["mukai_pairing", "spherical_reflection", "spherical_classes", "mass_reconstruction", "discreteness", "mass_family", "irrationality_certificate"],
    );
    if failed > 0 {
        out.exit_code = 4;
    }
    Ok(out)
}
