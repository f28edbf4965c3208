//! Command-line front end.
//!
//! Every flag may also be given in a `--config` file of `key = value` lines
//! (keys are the flag names without leading dashes); flags on the command
//! line override file values. Reports go to stdout as JSON (default), CSV or
//! text. Exit status: 0 when every verdict holds, 1 when something is
//! violated, 2 on configuration or evaluation errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::convexity::{
    check_dominated, check_phi_h_convex, dominance_samples, lemma2_report, phi_h_samples,
    ConvexityError, FunctionPair, SampleGap, SamplePlan, Strategy, Tolerance, DEFAULT_ATOL,
    DEFAULT_RTOL, DEFAULT_T_CLAMP,
};
use crate::expr::Expr;
use crate::geometry::{AffineMap, ExprMap, Interval, Mapping, Phi};
use crate::hadamard::{
    corollary_report, hh_endpoint_report, hh_midpoint_report, Corollary, HHOptions, HHReport,
    DEFAULT_QUAD_TOL,
};
use crate::kernels::{Kernel, KernelKind};
use crate::search::search_violations;
use crate::serde_ext::format_ext;

pub const EXIT_HOLDS: i32 = 0;
pub const EXIT_VIOLATED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Bumped whenever a field of the JSON report is renamed or removed.
pub const SCHEMA_VERSION: u32 = 1;

const DEFAULT_GRID: [usize; 3] = [21, 21, 19];
const DEFAULT_S: f64 = 0.5;
const DEFAULT_MAX_RECORDS: usize = 100;

#[derive(Debug, Parser)]
#[command(name = "convdom", version, about = "Sampled certification of (g, phi_h)-convex dominance and Hermite-Hadamard-type bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check phi_h-convexity of f on the sample plan.
    CheckConvex(CommonArgs),
    /// Check that f is (g, phi_h)-convex dominated.
    CheckDominated(CommonArgs),
    /// Evaluate the three equivalent dominance statements on one sample set.
    Lemma2(CommonArgs),
    /// Compute both sides of the midpoint and/or endpoint bounds.
    VerifyHh(VerifyArgs),
    /// The bounds specialized to the built-in kernels.
    Corollary(CorollaryArgs),
    /// Search for samples violating the dominance inequality.
    Search(SearchArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Read `key = value` settings from this file; flags override it.
    #[arg(long)]
    pub config: Option<String>,
    /// Candidate function f(x).
    #[arg(long)]
    pub f: Option<String>,
    /// Dominator g(x).
    #[arg(long)]
    pub g: Option<String>,
    /// Built-in kernel: t, t^s, 1/t or 1.
    #[arg(long)]
    pub h: Option<String>,
    /// Exponent for h = t^s, in (0,1).
    #[arg(long, allow_negative_numbers = true)]
    pub s: Option<String>,
    /// Custom kernel expression in t.
    #[arg(long = "h-custom")]
    pub h_custom: Option<String>,
    /// `identity` or an expression in x.
    #[arg(long)]
    pub phi: Option<String>,
    /// Interval endpoints a b.
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true)]
    pub interval: Option<Vec<String>>,
    /// Grid sizes for x, y and t.
    #[arg(long, num_args = 3, value_names = ["NX", "NY", "NT"])]
    pub grid: Option<Vec<String>>,
    /// Use this many random samples instead of a grid.
    #[arg(long, allow_negative_numbers = true)]
    pub samples: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub seed: Option<String>,
    /// Clamp t into [eps, 1 - eps].
    #[arg(long = "t-clamp", allow_negative_numbers = true)]
    pub t_clamp: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub atol: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub rtol: Option<String>,
    #[arg(long = "quad-tol", allow_negative_numbers = true)]
    pub quad_tol: Option<String>,
    /// json, csv or text.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// midpoint, endpoint or both.
    #[arg(long)]
    pub bound: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct CorollaryArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// t, ts, recip, one or all.
    #[arg(long, alias = "corollary")]
    pub which: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Sharpen the worst samples by coordinate descent.
    #[arg(long)]
    pub refine: bool,
    /// Maximum number of records printed.
    #[arg(long = "max-records")]
    pub max_records: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    CheckConvex,
    CheckDominated,
    Lemma2,
    VerifyHh,
    Corollary,
    Search,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::CheckConvex => "check-convex",
            CommandKind::CheckDominated => "check-dominated",
            CommandKind::Lemma2 => "lemma2",
            CommandKind::VerifyHh => "verify-hh",
            CommandKind::Corollary => "corollary",
            CommandKind::Search => "search",
        }
    }

    fn needs_g(self) -> bool {
        self != CommandKind::CheckConvex
    }

    fn needs_affine(self) -> bool {
        matches!(self, CommandKind::VerifyHh | CommandKind::Corollary)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundSelection {
    Midpoint,
    Endpoint,
    Both,
}

/// A fully validated run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: CommandKind,
    pub f: Expr,
    pub g: Option<Expr>,
    pub kernel: Kernel,
    pub phi: Phi,
    pub interval: Interval,
    pub plan: SamplePlan,
    pub quad_tol: f64,
    pub format: Format,
    pub bound: BoundSelection,
    pub corollaries: Vec<Corollary>,
    pub refine: bool,
    pub max_records: usize,
}

/// Exit status plus everything written to stdout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub exit_code: i32,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorEntry {
    pub kind: &'static str,
    pub message: String,
}

impl ErrorEntry {
    fn config(message: impl Into<String>) -> ErrorEntry {
        ErrorEntry {
            kind: "config",
            message: message.into(),
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "f", "g", "h", "s", "h-custom", "phi", "interval", "grid", "samples", "seed", "t-clamp", "atol",
    "rtol", "quad-tol", "format", "bound", "which", "corollary", "refine", "max-records",
];

/// Parses a `key = value` settings file. Blank lines and `#` comments are
/// skipped; values may be wrapped in double quotes.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, Vec<ErrorEntry>> {
    let mut out = BTreeMap::new();
    let mut errors = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(ErrorEntry::config(format!("config line {}: expected key = value", n + 1)));
            continue;
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let mut value = value.trim();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        }
        if !KNOWN_KEYS.contains(&key.as_str()) {
            errors.push(ErrorEntry::config(format!("config line {}: unknown key \"{key}\"", n + 1)));
            continue;
        }
        let key = if key == "corollary" { "which".to_string() } else { key };
        out.insert(key, value.to_string());
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

fn common_settings(c: &CommonArgs, map: &mut BTreeMap<String, String>) {
    let mut put = |k: &str, v: &Option<String>| {
        if let Some(v) = v {
            map.insert(k.to_string(), v.clone());
        }
    };
    put("f", &c.f);
    put("g", &c.g);
    put("h", &c.h);
    put("s", &c.s);
    put("h-custom", &c.h_custom);
    put("phi", &c.phi);
    put("samples", &c.samples);
    put("seed", &c.seed);
    put("t-clamp", &c.t_clamp);
    put("atol", &c.atol);
    put("rtol", &c.rtol);
    put("quad-tol", &c.quad_tol);
    put("format", &c.format);
    if let Some(v) = &c.interval {
        map.insert("interval".to_string(), v.join(" "));
    }
    if let Some(v) = &c.grid {
        map.insert("grid".to_string(), v.join(" "));
    }
}

impl Command {
    fn kind(&self) -> CommandKind {
        match self {
            Command::CheckConvex(_) => CommandKind::CheckConvex,
            Command::CheckDominated(_) => CommandKind::CheckDominated,
            Command::Lemma2(_) => CommandKind::Lemma2,
            Command::VerifyHh(_) => CommandKind::VerifyHh,
            Command::Corollary(_) => CommandKind::Corollary,
            Command::Search(_) => CommandKind::Search,
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::CheckConvex(c) | Command::CheckDominated(c) | Command::Lemma2(c) => c,
            Command::VerifyHh(v) => &v.common,
            Command::Corollary(c) => &c.common,
            Command::Search(s) => &s.common,
        }
    }

    /// Flag values layered over the config file, if any.
    pub fn settings(&self) -> Result<BTreeMap<String, String>, Vec<ErrorEntry>> {
        let common = self.common();
        let mut map = match &common.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    vec![ErrorEntry::config(format!("cannot read config file {path}: {e}"))]
                })?;
                parse_config_text(&text)?
            }
            None => BTreeMap::new(),
        };
        common_settings(common, &mut map);
        match self {
            Command::VerifyHh(v) => {
                if let Some(b) = &v.bound {
                    map.insert("bound".into(), b.clone());
                }
            }
            Command::Corollary(c) => {
                if let Some(w) = &c.which {
                    map.insert("which".into(), w.clone());
                }
            }
            Command::Search(s) => {
                if s.refine {
                    map.insert("refine".into(), "true".into());
                }
                if let Some(m) = &s.max_records {
                    map.insert("max-records".into(), m.clone());
                }
            }
            _ => {}
        }
        Ok(map)
    }
}

struct Collector {
    errors: Vec<ErrorEntry>,
}

impl Collector {
    fn push(&mut self, msg: impl Into<String>) {
        self.errors.push(ErrorEntry::config(msg));
    }

    fn number<T: std::str::FromStr>(&mut self, map: &BTreeMap<String, String>, key: &str) -> Option<T> {
        let raw = map.get(key)?;
        match raw.trim().parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.push(format!("--{key}: cannot parse \"{raw}\""));
                None
            }
        }
    }

    fn numbers<T: std::str::FromStr>(
        &mut self,
        map: &BTreeMap<String, String>,
        key: &str,
        count: usize,
    ) -> Option<Vec<T>> {
        let raw = map.get(key)?;
        let parts: Vec<&str> = raw.split(|c: char| c.is_whitespace() || c == ',').filter(|p| !p.is_empty()).collect();
        let parsed: Option<Vec<T>> = parts.iter().map(|p| p.parse().ok()).collect();
        match parsed {
            Some(v) if v.len() == count => Some(v),
            _ => {
                self.push(format!("--{key}: expected {count} numbers, got \"{raw}\""));
                None
            }
        }
    }

    fn expr(&mut self, map: &BTreeMap<String, String>, key: &str) -> Option<Expr> {
        let raw = map.get(key)?;
        match Expr::parse(raw) {
            Ok(e) => Some(e),
            Err(e) => {
                self.push(format!("--{key}: {e}"));
                None
            }
        }
    }
}

fn parse_kernel(c: &mut Collector, map: &BTreeMap<String, String>) -> Option<Kernel> {
    let s: Option<f64> = c.number(map, "s");
    let kind = match (map.get("h"), map.get("h-custom")) {
        (Some(_), Some(_)) => {
            c.push("--h and --h-custom are mutually exclusive");
            return None;
        }
        (None, Some(_)) => {
            let e = c.expr(map, "h-custom")?;
            if e.variable() == Some('x') {
                c.push("--h-custom: kernel must be written in t");
                return None;
            }
            KernelKind::Custom(e)
        }
        (Some(h), None) => match h.replace(' ', "").as_str() {
            "t" => KernelKind::Linear,
            "1/t" => KernelKind::Reciprocal,
            "1" => KernelKind::One,
            "t^s" => KernelKind::Power(s.unwrap_or(DEFAULT_S)),
            other => match other.strip_prefix("t^").map(str::parse::<f64>) {
                Some(Ok(v)) => KernelKind::Power(v),
                _ => {
                    c.push(format!("--h: unknown kernel \"{h}\" (use t, t^s, 1/t, 1 or --h-custom)"));
                    return None;
                }
            },
        },
        (None, None) => KernelKind::Linear,
    };
    match Kernel::new(kind) {
        Ok(k) => Some(k),
        Err(e) => {
            c.push(format!("kernel: {e}"));
            None
        }
    }
}

fn parse_corollaries(c: &mut Collector, map: &BTreeMap<String, String>) -> Vec<Corollary> {
    let s: f64 = c.number(map, "s").unwrap_or(DEFAULT_S);
    let power = Corollary::Power(s);
    match map.get("which").map(|w| w.trim()).unwrap_or("all") {
        "t" | "linear" => vec![Corollary::Linear],
        "ts" | "t^s" | "power" => vec![power],
        "recip" | "reciprocal" | "1/t" => vec![Corollary::Reciprocal],
        "one" | "1" => vec![Corollary::One],
        "all" => vec![Corollary::Linear, power, Corollary::Reciprocal, Corollary::One],
        other => {
            c.push(format!("--which: unknown corollary \"{other}\" (use t, ts, recip, one or all)"));
            Vec::new()
        }
    }
}

impl RunConfig {
    /// Validates merged settings, reporting every problem found.
    pub fn from_settings(
        command: CommandKind,
        map: &BTreeMap<String, String>,
    ) -> Result<RunConfig, Vec<ErrorEntry>> {
        let mut c = Collector { errors: Vec::new() };

        let f = match map.get("f") {
            Some(_) => c.expr(map, "f"),
            None => {
                c.push("--f is required");
                None
            }
        };
        let g = if command.needs_g() {
            match map.get("g") {
                Some(_) => c.expr(map, "g"),
                None => {
                    c.push("--g is required");
                    None
                }
            }
        } else {
            map.get("g").and_then(|_| c.expr(map, "g"))
        };
        for (role, e) in [("f", &f), ("g", &g)] {
            if let Some(e) = e {
                if e.variable() == Some('t') {
                    c.push(format!("--{role}: functions must be written in x"));
                }
            }
        }

        let kernel = parse_kernel(&mut c, map);

        let interval = match c.numbers::<f64>(map, "interval", 2) {
            Some(v) => match Interval::new(v[0], v[1]) {
                Ok(i) => Some(i),
                Err(e) => {
                    c.push(format!("--interval: {e}"));
                    None
                }
            },
            None => {
                if !map.contains_key("interval") {
                    c.push("--interval A B is required");
                }
                None
            }
        };

        let phi = interval.and_then(|domain| {
            let raw = map.get("phi").map(|p| p.trim()).unwrap_or("identity");
            if raw == "identity" {
                return Some(Phi::Affine(AffineMap::identity(domain)));
            }
            let e = c.expr(map, "phi")?;
            if e.variable() == Some('t') {
                c.push("--phi: map must be written in x");
                return None;
            }
            match AffineMap::from_expr(&e, domain) {
                Ok(m) => Some(Phi::Affine(m)),
                Err(crate::geometry::GeometryError::NotAffine { .. }) if !command.needs_affine() => {
                    for x in [domain.a(), domain.b()] {
                        if let Err(err) = ExprMap::new(e.clone(), domain).apply(x) {
                            c.push(format!("--phi: {err}"));
                            return None;
                        }
                    }
                    Some(Phi::General(ExprMap::new(e, domain)))
                }
                Err(err) => {
                    c.push(format!("--phi: {err}"));
                    None
                }
            }
        });

        let strategy = match (map.contains_key("samples"), map.contains_key("grid")) {
            (true, true) => {
                c.push("--samples and --grid are mutually exclusive");
                None
            }
            (true, false) => {
                let count = c.number::<usize>(map, "samples");
                let seed = if map.contains_key("seed") { c.number::<u64>(map, "seed") } else { Some(0) };
                match (count, seed) {
                    (Some(count), Some(seed)) => Some(Strategy::Random { count, seed }),
                    _ => None,
                }
            }
            (false, _) => {
                let g = if map.contains_key("grid") {
                    c.numbers::<usize>(map, "grid", 3)
                } else {
                    Some(DEFAULT_GRID.to_vec())
                };
                g.map(|g| Strategy::Grid {
                    nx: g[0],
                    ny: g[1],
                    nt: g[2],
                })
            }
        };
        if map.contains_key("seed") && !map.contains_key("samples") {
            c.number::<u64>(map, "seed");
        }
        let t_clamp = c.number(map, "t-clamp").unwrap_or(DEFAULT_T_CLAMP);
        let atol = c.number(map, "atol").unwrap_or(DEFAULT_ATOL);
        let rtol = c.number(map, "rtol").unwrap_or(DEFAULT_RTOL);
        let plan = strategy.map(|strategy| SamplePlan {
            strategy,
            t_clamp,
            tolerance: Tolerance { atol, rtol },
        });
        if let Some(plan) = &plan {
            for p in plan.problems() {
                c.push(format!("sample plan: {p}"));
            }
        }

        let quad_tol: f64 = c.number(map, "quad-tol").unwrap_or(DEFAULT_QUAD_TOL);
        if !(quad_tol > 0.0 && quad_tol.is_finite()) {
            c.push(format!("--quad-tol must be positive, got {quad_tol}"));
        }

        let format = match map.get("format").map(|s| s.trim()).unwrap_or("json") {
            "json" => Format::Json,
            "csv" => Format::Csv,
            "text" => Format::Text,
            other => {
                c.push(format!("--format: unknown format \"{other}\" (use json, csv or text)"));
                Format::Json
            }
        };
        let bound = match map.get("bound").map(|s| s.trim()).unwrap_or("both") {
            "midpoint" => BoundSelection::Midpoint,
            "endpoint" => BoundSelection::Endpoint,
            "both" => BoundSelection::Both,
            other => {
                c.push(format!("--bound: unknown bound \"{other}\" (use midpoint, endpoint or both)"));
                BoundSelection::Both
            }
        };
        let corollaries = if command == CommandKind::Corollary {
            parse_corollaries(&mut c, map)
        } else {
            Vec::new()
        };
        let refine = match map.get("refine").map(|s| s.trim()) {
            None | Some("false") => false,
            Some("true") => true,
            Some(other) => {
                c.push(format!("refine: expected true or false, got \"{other}\""));
                false
            }
        };
        let max_records = c.number(map, "max-records").unwrap_or(DEFAULT_MAX_RECORDS);

        if !c.errors.is_empty() {
            return Err(c.errors);
        }
        Ok(RunConfig {
            command,
            f: f.expect("validated"),
            g,
            kernel: kernel.expect("validated"),
            phi: phi.expect("validated"),
            interval: interval.expect("validated"),
            plan: plan.expect("validated"),
            quad_tol,
            format,
            bound,
            corollaries,
            refine,
            max_records,
        })
    }

    fn pair(&self) -> FunctionPair {
        FunctionPair::new(self.f.clone(), self.g.clone().expect("validated: g present"))
    }

    fn hh_options(&self) -> HHOptions {
        HHOptions {
            quad_tol: self.quad_tol,
            tolerance: self.plan.tolerance,
        }
    }

    fn inputs(&self) -> Value {
        let h = if self.command == CommandKind::Corollary {
            Value::Null
        } else {
            Value::String(self.kernel.label())
        };
        json!({
            "f": self.f.describe(),
            "g": self.g.as_ref().map(|g| g.describe()),
            "h": h,
            "phi": self.phi.describe(),
            "interval": [self.interval.a(), self.interval.b()],
            "plan": self.plan,
            "quad_tol": self.quad_tol,
        })
    }
}

fn error_document(command: Option<CommandKind>, errors: &[ErrorEntry]) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command.map(CommandKind::name),
        "status": "error",
        "exit_code": EXIT_ERROR,
        "errors": errors,
    })
}

fn render_error(command: Option<CommandKind>, format: Format, errors: &[ErrorEntry]) -> Outcome {
    let doc = error_document(command, errors);
    let output = match format {
        Format::Json => to_json(&doc),
        Format::Text => to_text(&doc),
        Format::Csv => {
            let mut out = String::from("kind,message\n");
            for e in errors {
                let _ = writeln!(out, "{},\"{}\"", e.kind, e.message.replace('"', "\"\""));
            }
            out
        }
    };
    Outcome {
        exit_code: EXIT_ERROR,
        output,
    }
}

fn to_json(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable report");
    s.push('\n');
    s
}

/// Formats a number with 12 significant digits.
pub fn sig12(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.11e}")
    } else {
        format_ext(v)
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let p = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&p, child, out);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), child, out);
            }
        }
        Value::Number(n) => {
            let s = match n.as_f64() {
                Some(f) if n.is_f64() => sig12(f),
                _ => n.to_string(),
            };
            let _ = writeln!(out, "{prefix} = {s}");
        }
        Value::String(s) => {
            let _ = writeln!(out, "{prefix} = {s}");
        }
        Value::Bool(b) => {
            let _ = writeln!(out, "{prefix} = {b}");
        }
        Value::Null => {
            let _ = writeln!(out, "{prefix} = null");
        }
    }
}

/// One `path = value` line per leaf of the JSON document; floats use 12
/// significant digits.
pub fn to_text(doc: &Value) -> String {
    let mut out = String::new();
    flatten("", doc, &mut out);
    out
}

fn csv_f(v: f64) -> String {
    format_ext(v)
}

fn samples_csv(samples: &[SampleGap], tol: &Tolerance) -> String {
    let mut out = String::from("x,y,t,gap,lhs,rhs,scale,violation\n");
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            csv_f(s.triple.x),
            csv_f(s.triple.y),
            csv_f(s.triple.t),
            csv_f(s.gap),
            csv_f(s.lhs),
            csv_f(s.rhs),
            csv_f(s.scale),
            s.violates(tol)
        );
    }
    out
}

fn hh_csv(reports: &[HHReport]) -> String {
    let mut out = String::from("corollary,bound,coefficient,lhs,rhs,margin,holds,vacuous,quad_error\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.corollary.as_deref().unwrap_or(""),
            r.bound.as_str(),
            csv_f(r.coefficient),
            csv_f(r.lhs),
            csv_f(r.rhs),
            csv_f(r.margin),
            r.holds,
            r.vacuous,
            csv_f(r.quad_error)
        );
    }
    out
}

struct Rendered {
    status: &'static str,
    exit_code: i32,
    result: Value,
    csv: String,
}

fn verdict_status(holds: bool) -> (&'static str, i32) {
    if holds {
        ("holds", EXIT_HOLDS)
    } else {
        ("violated", EXIT_VIOLATED)
    }
}

fn convexity_error(e: ConvexityError) -> ErrorEntry {
    let kind = match &e {
        ConvexityError::Precondition(_) => "precondition",
        ConvexityError::Plan(_) => "config",
        ConvexityError::At { .. } => "evaluation",
    };
    ErrorEntry {
        kind,
        message: e.to_string(),
    }
}

fn execute(config: &RunConfig) -> Result<Rendered, ErrorEntry> {
    let h = &config.kernel;
    let phi = &config.phi;
    let interval = &config.interval;
    let plan = &config.plan;
    let tol = &plan.tolerance;
    let want_csv = config.format == Format::Csv;
    match config.command {
        CommandKind::CheckConvex => {
            let report = check_phi_h_convex(&config.f, h, phi, interval, plan).map_err(convexity_error)?;
            let csv = if want_csv {
                samples_csv(&phi_h_samples(&config.f, h, phi, interval, plan).map_err(convexity_error)?, tol)
            } else {
                String::new()
            };
            let (status, exit_code) = verdict_status(report.verdict.holds());
            Ok(Rendered {
                status,
                exit_code,
                result: json!({ "report": report }),
                csv,
            })
        }
        CommandKind::CheckDominated => {
            let pair = config.pair();
            let report = check_dominated(&pair, h, phi, interval, plan).map_err(convexity_error)?;
            let csv = if want_csv {
                samples_csv(&dominance_samples(&pair, h, phi, interval, plan).map_err(convexity_error)?, tol)
            } else {
                String::new()
            };
            let (status, exit_code) = verdict_status(report.verdict.holds());
            Ok(Rendered {
                status,
                exit_code,
                result: json!({ "report": report }),
                csv,
            })
        }
        CommandKind::Lemma2 => {
            let report = lemma2_report(&config.pair(), h, phi, interval, plan).map_err(convexity_error)?;
            let holds = report.agreement
                && report.dominated.verdict.holds()
                && report.difference_and_sum.verdict.holds()
                && report.decomposition.verdict.holds();
            let mut csv = String::from("statement,verdict,worst_gap,x,y,t\n");
            for (name, r) in [
                ("dominated", &report.dominated),
                ("g-f", &report.difference_and_sum.first),
                ("g+f", &report.difference_and_sum.second),
                ("k", &report.decomposition.first),
                ("l", &report.decomposition.second),
            ] {
                let _ = writeln!(
                    csv,
                    "{name},{},{},{},{},{}",
                    r.verdict.as_str(),
                    csv_f(r.worst_gap),
                    csv_f(r.witness.x),
                    csv_f(r.witness.y),
                    csv_f(r.witness.t)
                );
            }
            let (status, exit_code) = verdict_status(holds);
            Ok(Rendered {
                status,
                exit_code,
                result: serde_json::to_value(&report).expect("serializable"),
                csv,
            })
        }
        CommandKind::VerifyHh | CommandKind::Corollary => {
            let affine = config
                .phi
                .as_affine()
                .expect("validated: bounds require an affine phi");
            let pair = config.pair();
            let opts = config.hh_options();
            let hh_err = |e: crate::hadamard::HadamardError| ErrorEntry {
                kind: "evaluation",
                message: e.to_string(),
            };
            let mut reports = Vec::new();
            if config.command == CommandKind::VerifyHh {
                if config.bound != BoundSelection::Endpoint {
                    reports.push(hh_midpoint_report(&pair, h, affine, &opts).map_err(hh_err)?);
                }
                if config.bound != BoundSelection::Midpoint {
                    reports.push(hh_endpoint_report(&pair, h, affine, &opts).map_err(hh_err)?);
                }
            } else {
                for which in &config.corollaries {
                    reports.extend(corollary_report(&pair, affine, *which, &opts).map_err(hh_err)?);
                }
            }
            let (status, exit_code) = verdict_status(reports.iter().all(|r| r.holds));
            Ok(Rendered {
                status,
                exit_code,
                csv: hh_csv(&reports),
                result: json!({ "reports": reports }),
            })
        }
        CommandKind::Search => {
            let records = search_violations(&config.pair(), h, phi, interval, plan, config.refine)
                .map_err(convexity_error)?;
            let shown = &records[..records.len().min(config.max_records)];
            let mut csv = String::from("x,y,t,gap,lhs_abs,rhs,scale,refined\n");
            for r in shown {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{}",
                    csv_f(r.x),
                    csv_f(r.y),
                    csv_f(r.t),
                    csv_f(r.gap),
                    csv_f(r.lhs_abs),
                    csv_f(r.rhs),
                    csv_f(r.scale),
                    r.refined
                );
            }
            let note = if records.is_empty() {
                "no violation found at this sampling density"
            } else {
                "violations found"
            };
            let (status, exit_code) = verdict_status(records.is_empty());
            Ok(Rendered {
                status,
                exit_code,
                result: json!({
                    "total_violations": records.len(),
                    "shown": shown.len(),
                    "refined": config.refine,
                    "note": note,
                    "records": shown,
                }),
                csv,
            })
        }
    }
}

/// Runs a validated configuration.
pub fn run(config: &RunConfig) -> Outcome {
    let rendered = match execute(config) {
        Ok(r) => r,
        Err(e) => return render_error(Some(config.command), config.format, &[e]),
    };
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": config.command.name(),
        "status": rendered.status,
        "exit_code": rendered.exit_code,
        "inputs": config.inputs(),
        "result": rendered.result,
    });
    let output = match config.format {
        Format::Json => to_json(&doc),
        Format::Text => to_text(&doc),
        Format::Csv => rendered.csv,
    };
    Outcome {
        exit_code: rendered.exit_code,
        output,
    }
}

/// Parses process arguments (including the program name) and runs.
pub fn run_args<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                return Outcome {
                    exit_code: EXIT_HOLDS,
                    output: e.to_string(),
                };
            }
            let message = e.render().to_string();
            return render_error(None, Format::Json, &[ErrorEntry::config(message.trim_end())]);
        }
    };
    let command = cli.command.kind();
    let settings = match cli.command.settings() {
        Ok(s) => s,
        Err(errors) => return render_error(Some(command), Format::Json, &errors),
    };
    match RunConfig::from_settings(command, &settings) {
        Ok(config) => run(&config),
        Err(errors) => {
            let format = match settings.get("format").map(|s| s.trim()) {
                Some("csv") => Format::Csv,
                Some("text") => Format::Text,
                _ => Format::Json,
            };
            render_error(Some(command), format, &errors)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> Outcome {
        run_args(std::iter::once("convdom").chain(args.iter().copied()))
    }

    fn json_of(o: &Outcome) -> Value {
        serde_json::from_str(&o.output).unwrap()
    }

    #[test]
    fn check_dominated_holds() {
        let o = run_str(&[
            "check-dominated", "--f", "x^2", "--g", "2*x^2", "--h", "t", "--phi", "identity", "--interval", "0", "1",
        ]);
        assert_eq!(o.exit_code, 0, "{}", o.output);
        let v = json_of(&o);
        assert_eq!(v["result"]["report"]["verdict"], "holds-on-samples");
        assert_eq!(v["status"], "holds");
    }

    #[test]
    fn verify_hh_values() {
        let o = run_str(&[
            "verify-hh", "--f", "x^2", "--g", "2*x^2", "--h", "t", "--phi", "identity", "--interval", "0", "1",
            "--bound", "both",
        ]);
        assert_eq!(o.exit_code, 0);
        let v = json_of(&o);
        let mid = &v["result"]["reports"][0];
        assert_eq!(mid["bound"], "midpoint");
        assert!((mid["lhs"].as_f64().unwrap() - 0.083333).abs() < 1e-6);
        assert!((mid["rhs"].as_f64().unwrap() - 0.166667).abs() < 1e-6);
        assert_eq!(v["result"]["reports"][1]["bound"], "endpoint");
    }

    #[test]
    fn reciprocal_corollary_has_only_midpoint() {
        let o = run_str(&[
            "corollary", "--which", "recip", "--f", "x^2", "--g", "2*x^2", "--interval", "0", "1",
        ]);
        assert_eq!(o.exit_code, 0);
        let v = json_of(&o);
        let reports = v["result"]["reports"].as_array().unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0]["bound"], "midpoint");
        assert_eq!(reports[0]["coefficient"], 0.25);
    }

    #[test]
    fn vacuous_endpoint_serializes_infinity_as_string() {
        let o = run_str(&[
            "verify-hh", "--f", "x^2", "--g", "2*x^2", "--h", "1/t", "--interval", "0", "1", "--bound", "endpoint",
        ]);
        assert_eq!(o.exit_code, 0);
        let v = json_of(&o);
        let r = &v["result"]["reports"][0];
        assert_eq!(r["rhs"], "inf");
        assert_eq!(r["margin"], "inf");
        assert_eq!(r["vacuous"], true);
    }

    #[test]
    fn violation_exit_code() {
        let o = run_str(&["check-dominated", "--f", "2*x^2", "--g", "x^2", "--interval", "0", "1"]);
        assert_eq!(o.exit_code, 1);
        let o = run_str(&["search", "--f", "2*x^2", "--g", "x^2", "--interval", "0", "1", "--refine", "--max-records", "3"]);
        assert_eq!(o.exit_code, 1);
        let v = json_of(&o);
        assert_eq!(v["result"]["shown"], 3);
    }

    #[test]
    fn all_config_errors_are_reported() {
        let o = run_str(&[
            "check-dominated", "--f", "x^", "--h", "t^s", "--s", "2", "--interval", "1", "0", "--atol", "-1",
        ]);
        assert_eq!(o.exit_code, 2);
        let v = json_of(&o);
        assert_eq!(v["status"], "error");
        let errors = v["errors"].as_array().unwrap();
        // f parse, missing g, kernel exponent, interval order, negative atol
        assert_eq!(errors.len(), 5, "{errors:#?}");
    }

    #[test]
    fn clap_errors_are_machine_readable() {
        let o = run_str(&["frobnicate"]);
        assert_eq!(o.exit_code, 2);
        assert_eq!(json_of(&o)["errors"][0]["kind"], "config");
    }

    #[test]
    fn nonaffine_phi_only_for_checkers() {
        let base = ["--f", "x^2", "--g", "2*x^2", "--interval", "0", "1", "--phi", "x^2"];
        let o = run_str(&[&["check-dominated"], &base[..]].concat());
        assert_eq!(o.exit_code, 0, "{}", o.output);
        let o = run_str(&[&["verify-hh"], &base[..]].concat());
        assert_eq!(o.exit_code, 2);
    }

    #[test]
    fn precondition_failure_is_an_error() {
        let o = run_str(&["check-dominated", "--f", "0", "--g", "1 - x^2", "--interval", "0", "1"]);
        assert_eq!(o.exit_code, 2);
        assert_eq!(json_of(&o)["errors"][0]["kind"], "precondition");
    }

    #[test]
    fn config_file_with_override() {
        let dir = std::env::temp_dir().join(format!("convdom-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.conf");
        std::fs::write(&path, "# pair\nf = \"2*x^2\"\ng = x^2\ninterval = 0 1\ngrid = 5 5 5\n").unwrap();
        let p = path.to_str().unwrap();
        let o = run_str(&["check-dominated", "--config", p]);
        assert_eq!(o.exit_code, 1);
        let o = run_str(&["check-dominated", "--config", p, "--f", "x^2", "--g", "2*x^2"]);
        assert_eq!(o.exit_code, 0);
        let v = json_of(&o);
        assert_eq!(v["result"]["report"]["samples_checked"], 125);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn config_text_errors() {
        let err = parse_config_text("f = x\nbogus = 1\nnot a pair\n").unwrap_err();
        assert_eq!(err.len(), 2);
    }

    #[test]
    fn csv_has_header_and_one_row_per_sample() {
        let o = run_str(&[
            "check-convex", "--f", "x^2", "--interval", "0", "1", "--grid", "3", "3", "3", "--format", "csv",
        ]);
        let lines: Vec<&str> = o.output.lines().collect();
        assert_eq!(lines[0], "x,y,t,gap,lhs,rhs,scale,violation");
        assert_eq!(lines.len(), 1 + 27);
    }

    #[test]
    fn text_is_flattened_json() {
        let o = run_str(&["check-convex", "--f", "x^2", "--interval", "0", "1", "--format", "text"]);
        assert!(o.output.contains("result.report.verdict = holds-on-samples"));
        assert!(o.output.contains("command = check-convex"));
    }

    #[test]
    fn power_kernel_shorthand() {
        let o = run_str(&["check-convex", "--f", "x^2", "--interval", "0", "1", "--h", "t^0.25"]);
        assert_eq!(json_of(&o)["inputs"]["h"], "t^0.25");
    }
}
