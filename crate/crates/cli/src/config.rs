//! Run configuration: a flat `key = value` file.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! # comment
//! key = value      # trailing comment
//! ```
//!
//! Keys are case-sensitive. Unknown and repeated keys are errors, and every problem
//! in a file is reported at once.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use gedg_core::integrate::{uniform_times, Method, StepControl};
use gedg_core::kernels::{Envelope, Eta, Kernel, KernelTable, PiecewiseLinear};
use gedg_core::GedgError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Pde,
    Ssa,
    Contraction,
    TruncationSweep,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Pde => "pde",
            Mode::Ssa => "ssa",
            Mode::Contraction => "contraction",
            Mode::TruncationSweep => "truncation_sweep",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhiSpec {
    Exp(f64),
    Table(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelType {
    SeparableSum,
    SeparableProduct,
    CustomTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelType,
    pub a: f64,
    /// Growth exponent of the sum-class weight `max(1, x + y)^p`.
    pub p: f64,
    pub phi: PhiSpec,
    pub eta: Option<Eta>,
    pub table: Option<PathBuf>,
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel, GedgError> {
        let phi = match &self.phi {
            PhiSpec::Exp(rate) => Envelope::exp(*rate)?,
            PhiSpec::Table(path) => Envelope::Table(PiecewiseLinear::from_csv(path)?),
        };
        match self.kind {
            KernelType::SeparableSum => Kernel::separable_sum(self.a, self.p, phi),
            KernelType::SeparableProduct => {
                let eta = self
                    .eta
                    .ok_or_else(|| GedgError::Config("kernel.eta is required for separable_product".into()))?;
                Kernel::separable_product(self.a, eta, phi)
            }
            KernelType::CustomTable => {
                let path = self
                    .table
                    .as_ref()
                    .ok_or_else(|| GedgError::Config("kernel.table is required for custom_table".into()))?;
                Kernel::from_table(KernelTable::from_csv(path)?, self.a, phi)
            }
        }
    }
}

/// Initial number density `zeta_in`.
#[derive(Debug, Clone, PartialEq)]
pub enum IcSpec {
    /// `exp(-x)`.
    Exp,
    /// Indicator of `[a, b]`.
    Box(f64, f64),
    /// Tabulated, linearly interpolated.
    Table(PathBuf),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub kernel: KernelSpec,
    pub ic: IcSpec,
    pub n: f64,
    pub cells: usize,
    pub t_end: f64,
    pub output_times: Vec<f64>,
    pub snapshot_times: Vec<f64>,
    pub control: StepControl,
    pub seed: u64,
    pub replicas: usize,
    pub particles: usize,
    pub void_accepts: bool,
    pub output_dir: PathBuf,
    pub delta: f64,
    pub sweep_ns: Vec<f64>,
    pub validate_samples: usize,
    pub validate_derivatives: bool,
}

/// Everything wrong with a config file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors {
    pub path: PathBuf,
    pub problems: Vec<String>,
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} problem(s)", self.path.display(), self.problems.len())?;
        for p in &self.problems {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

const KEYS: &[&str] = &[
    "mode",
    "kernel.type",
    "kernel.a",
    "kernel.p",
    "kernel.phi",
    "kernel.eta",
    "kernel.table",
    "ic",
    "n",
    "cells",
    "t_end",
    "output_times",
    "snapshot_times",
    "method",
    "rtol",
    "atol",
    "dt",
    "cons_tol",
    "max_rejections",
    "seed",
    "replicas",
    "particles",
    "void_accepts",
    "output_dir",
    "contraction.delta",
    "sweep.ns",
    "validate.samples",
    "validate.derivatives",
];

const REQUIRED: &[&str] = &["mode", "kernel.type", "kernel.a", "ic", "n", "cells", "t_end"];

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigErrors {
        path: path.to_path_buf(),
        problems: vec![format!("cannot read file: {e}")],
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_str(&text, base).map_err(|problems| ConfigErrors {
        path: path.to_path_buf(),
        problems,
    })
}

/// Parses config text; relative table paths are resolved against `base`.
pub fn parse_str(text: &str, base: &Path) -> Result<RunConfig, Vec<String>> {
    let mut problems = Vec::new();
    let mut entries: BTreeMap<String, (String, usize)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            problems.push(format!("line {line_no}: expected `key = value`, got `{line}`"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            problems.push(format!("line {line_no}: missing key"));
            continue;
        }
        if !KEYS.contains(&key) {
            problems.push(format!("line {line_no}: unknown key `{key}`"));
            continue;
        }
        if let Some((_, first)) = entries.get(key) {
            problems.push(format!(
                "line {line_no}: duplicate key `{key}` (first set on line {first})"
            ));
            continue;
        }
        entries.insert(key.to_string(), (value.to_string(), line_no));
    }
    for key in REQUIRED {
        if !entries.contains_key(*key) {
            problems.push(format!("missing required key `{key}`"));
        }
    }

    let mut r = Reader {
        entries: &entries,
        problems: &mut problems,
    };
    let mode = r.parse("mode", Mode::Pde, parse_mode);
    let kind = r.parse("kernel.type", KernelType::SeparableSum, parse_kernel_type);
    let a = r.number("kernel.a", 1.0);
    let p = r.number("kernel.p", 0.0);
    let phi = r.parse("kernel.phi", PhiSpec::Exp(1.0), |v| parse_phi(v, base));
    let eta = r.optional("kernel.eta", parse_eta);
    let table = r.optional("kernel.table", |v| Ok(base.join(v)));
    let ic = r.parse("ic", IcSpec::Exp, |v| parse_ic(v, base));
    let n = r.number("n", 2.0);
    let cells = r.integer("cells", 2);
    let t_end = r.number("t_end", 0.0);
    let output_times = r.parse("output_times", TimeSpec::Uniform(10), parse_times);
    let snapshot_times = r.parse("snapshot_times", TimeSpec::List(Vec::new()), parse_times);
    let method = r.parse("method", "rk45".to_string(), |v| match v {
        "rk45" | "rk4" => Ok(v.to_string()),
        _ => Err(format!("must be rk45 or rk4, got `{v}`")),
    });
    let rtol = r.number("rtol", 1e-6);
    let atol = r.number("atol", 1e-12);
    let dt = r.optional("dt", parse_f64);
    let cons_tol = r.number("cons_tol", 1e-8);
    let max_rejections = r.integer("max_rejections", 40);
    let seed = r.parse("seed", 0u64, |v| v.parse::<u64>().map_err(|e| format!("`{v}`: {e}")));
    let replicas = r.integer("replicas", 1);
    let particles = r.integer("particles", 10_000);
    let void_accepts = r.parse("void_accepts", false, parse_bool);
    let output_dir = r.parse("output_dir", PathBuf::from("gedg-output"), |v| Ok(PathBuf::from(v)));
    let delta = r.number("contraction.delta", 1e-3);
    let sweep_ns = r.parse("sweep.ns", Vec::new(), parse_list);
    let validate_samples = r.integer("validate.samples", 10_000);
    let validate_derivatives = r.parse("validate.derivatives", false, parse_bool);

    let mut check = |ok: bool, msg: String| {
        if !ok {
            problems.push(msg);
        }
    };
    let has = |k: &str| entries.contains_key(k);
    if has("n") {
        check(n.is_finite() && n > 1.0, format!("n = {n}: the mass cutoff must satisfy n > 1"));
    }
    if has("cells") {
        check(cells >= 2, format!("cells = {cells}: need at least 2 cells"));
    }
    if has("t_end") {
        check(t_end.is_finite() && t_end >= 0.0, format!("t_end = {t_end}: must be >= 0"));
    }
    check(a.is_finite() && a >= 0.0, format!("kernel.a = {a}: must be finite and >= 0"));
    check((0.0..=1.0).contains(&p), format!("kernel.p = {p}: must lie in [0, 1]"));
    match kind {
        KernelType::SeparableProduct => check(eta.is_some(), "kernel.eta is required for separable_product".into()),
        KernelType::CustomTable => check(table.is_some(), "kernel.table is required for custom_table".into()),
        KernelType::SeparableSum => {}
    }
    if kind != KernelType::SeparableProduct && eta.is_some() {
        check(false, "kernel.eta only applies to separable_product".into());
    }
    if let IcSpec::Box(lo, hi) = ic {
        check(
            0.0 <= lo && lo < hi && (!has("n") || hi <= n),
            format!("ic = box:{lo},{hi}: need 0 <= a < b <= n"),
        );
    }
    check(rtol > 0.0 && rtol.is_finite(), format!("rtol = {rtol}: must be positive"));
    check(atol > 0.0 && atol.is_finite(), format!("atol = {atol}: must be positive"));
    check(cons_tol > 0.0 && cons_tol.is_finite(), format!("cons_tol = {cons_tol}: must be positive"));
    check(max_rejections >= 1, "max_rejections must be at least 1".into());
    if let Some(dt) = dt {
        check(dt > 0.0 && dt.is_finite(), format!("dt = {dt}: must be positive"));
    }
    if method == "rk4" {
        check(dt.is_some(), "method = rk4 needs a step size `dt`".into());
    }
    if mode == Mode::Ssa {
        check(replicas >= 1, format!("replicas = {replicas}: ssa mode needs at least 1"));
        check(particles >= 2, format!("particles = {particles}: need at least 2"));
    }
    if mode == Mode::Contraction {
        check(delta > 0.0 && delta.is_finite(), format!("contraction.delta = {delta}: must be positive"));
    }
    if mode == Mode::TruncationSweep {
        check(!sweep_ns.is_empty(), "truncation_sweep mode needs `sweep.ns`".into());
        if has("n") && has("cells") && n > 1.0 && cells >= 2 {
            let dx = n / cells as f64;
            for &m in &sweep_ns {
                let ratio = m / dx;
                check(
                    m > 1.0 && (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) && ratio.round() >= 2.0,
                    format!("sweep.ns entry {m}: must exceed 1 and be a multiple of dx = n / cells = {dx}"),
                );
            }
        }
    }
    check(validate_samples >= 1, "validate.samples must be at least 1".into());
    for (name, times) in [("output_times", &output_times), ("snapshot_times", &snapshot_times)] {
        if let TimeSpec::List(ts) = times {
            for &t in ts {
                check(
                    t.is_finite() && t >= 0.0 && t <= t_end,
                    format!("{name} entry {t}: must lie in [0, t_end]"),
                );
            }
        }
    }

    if !problems.is_empty() {
        return Err(problems);
    }
    let control = StepControl {
        method: if method == "rk4" {
            Method::Rk4 { dt: dt.unwrap_or(1e-3) }
        } else {
            Method::Rk45 { rtol, atol, dt0: dt }
        },
        cons_tol,
        max_rejections,
    };
    Ok(RunConfig {
        mode,
        kernel: KernelSpec {
            kind,
            a,
            p,
            phi,
            eta,
            table,
        },
        ic,
        n,
        cells,
        t_end,
        output_times: output_times.resolve(t_end),
        snapshot_times: snapshot_times.resolve(t_end),
        control,
        seed,
        replicas,
        particles,
        void_accepts,
        output_dir,
        delta,
        sweep_ns,
        validate_samples,
        validate_derivatives,
    })
}

struct Reader<'a> {
    entries: &'a BTreeMap<String, (String, usize)>,
    problems: &'a mut Vec<String>,
}

impl Reader<'_> {
    fn optional<T>(&mut self, key: &str, parse: impl FnOnce(&str) -> Result<T, String>) -> Option<T> {
        let (value, line) = self.entries.get(key)?;
        match parse(value) {
            Ok(v) => Some(v),
            Err(e) => {
                self.problems.push(format!("line {line}: {key}: {e}"));
                None
            }
        }
    }

    fn parse<T>(&mut self, key: &str, default: T, parse: impl FnOnce(&str) -> Result<T, String>) -> T {
        self.optional(key, parse).unwrap_or(default)
    }

    fn number(&mut self, key: &str, default: f64) -> f64 {
        self.parse(key, default, parse_f64)
    }

    fn integer(&mut self, key: &str, default: usize) -> usize {
        self.parse(key, default, |v| v.parse::<usize>().map_err(|e| format!("`{v}`: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TimeSpec {
    Uniform(usize),
    List(Vec<f64>),
}

impl TimeSpec {
    fn resolve(&self, t_end: f64) -> Vec<f64> {
        match self {
            TimeSpec::Uniform(count) => uniform_times(t_end, *count),
            TimeSpec::List(ts) => ts.clone(),
        }
    }
}

fn parse_f64(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("`{v}` is not finite"))
    }
}

fn parse_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',').map(|s| parse_f64(s.trim())).collect()
}

fn parse_times(v: &str) -> Result<TimeSpec, String> {
    if let Some(count) = v.strip_prefix("uniform:") {
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| format!("`{v}`: expected uniform:<count>"))?;
        if count == 0 {
            return Err("uniform:<count> needs count >= 1".into());
        }
        return Ok(TimeSpec::Uniform(count));
    }
    if v.is_empty() {
        return Ok(TimeSpec::List(Vec::new()));
    }
    parse_list(v).map(TimeSpec::List)
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

fn parse_mode(v: &str) -> Result<Mode, String> {
    match v {
        "pde" => Ok(Mode::Pde),
        "ssa" => Ok(Mode::Ssa),
        "contraction" => Ok(Mode::Contraction),
        "truncation_sweep" => Ok(Mode::TruncationSweep),
        _ => Err(format!(
            "unknown mode `{v}` (expected pde, ssa, contraction or truncation_sweep)"
        )),
    }
}

fn parse_kernel_type(v: &str) -> Result<KernelType, String> {
    match v {
        "separable_sum" => Ok(KernelType::SeparableSum),
        "separable_product" => Ok(KernelType::SeparableProduct),
        "custom_table" => Ok(KernelType::CustomTable),
        _ => Err(format!(
            "unknown kernel type `{v}` (expected separable_sum, separable_product or custom_table)"
        )),
    }
}

/// `exp`, `exp:<rate>` or `table:<path>`.
fn parse_phi(v: &str, base: &Path) -> Result<PhiSpec, String> {
    if v == "exp" {
        return Ok(PhiSpec::Exp(1.0));
    }
    if let Some(rate) = v.strip_prefix("exp:") {
        let rate = parse_f64(rate.trim())?;
        if rate <= 0.0 {
            return Err(format!("exponential rate must be positive, got {rate}"));
        }
        return Ok(PhiSpec::Exp(rate));
    }
    if let Some(path) = v.strip_prefix("table:") {
        return Ok(PhiSpec::Table(base.join(path.trim())));
    }
    Err(format!("expected exp, exp:<rate> or table:<path>, got `{v}`"))
}

/// `one_plus_pow:<q>` for `(1 + x)^q` or `max_pow:<q>` for `max(1, x)^q`.
fn parse_eta(v: &str) -> Result<Eta, String> {
    let (kind, q) = v
        .split_once(':')
        .ok_or_else(|| format!("expected one_plus_pow:<q> or max_pow:<q>, got `{v}`"))?;
    let q = parse_f64(q.trim())?;
    if !(0.0..1.0).contains(&q) {
        return Err(format!("exponent q = {q} must lie in [0, 1)"));
    }
    match kind {
        "one_plus_pow" => Ok(Eta::OnePlusPow(q)),
        "max_pow" => Ok(Eta::MaxPow(q)),
        _ => Err(format!("unknown eta form `{kind}`")),
    }
}

/// `exp`, `box:<a>,<b>` or `table:<path>`.
fn parse_ic(v: &str, base: &Path) -> Result<IcSpec, String> {
    if v == "exp" {
        return Ok(IcSpec::Exp);
    }
    if let Some(rest) = v.strip_prefix("box:") {
        let bounds = parse_list(rest)?;
        if bounds.len() != 2 {
            return Err(format!("expected box:<a>,<b>, got `{v}`"));
        }
        return Ok(IcSpec::Box(bounds[0], bounds[1]));
    }
    if let Some(path) = v.strip_prefix("table:") {
        return Ok(IcSpec::Table(base.join(path.trim())));
    }
    Err(format!("expected exp, box:<a>,<b> or table:<path>, got `{v}`"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
mode = pde
kernel.type = separable_sum
kernel.a = 1
ic = exp
n = 16
cells = 64
t_end = 1
";

    fn parse(text: &str) -> Result<RunConfig, Vec<String>> {
        parse_str(text, Path::new("/base"))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.mode, Mode::Pde);
        assert_eq!(
            c.control.method,
            Method::Rk45 {
                rtol: 1e-6,
                atol: 1e-12,
                dt0: None
            }
        );
        assert_eq!(c.control.cons_tol, 1e-8);
        assert_eq!(c.kernel.phi, PhiSpec::Exp(1.0));
        assert_eq!(c.output_times.len(), 11);
        assert!(!c.void_accepts);
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn n_of_one_is_rejected_with_reason() {
        let text = MINIMAL.replace("n = 16", "n = 1");
        let errs = parse(&text).unwrap_err();
        assert!(errs.iter().any(|e| e.contains("n > 1")), "{errs:?}");
    }

    #[test]
    fn duplicate_key_names_both_lines() {
        let text = format!("{MINIMAL}cells = 32\n");
        let errs = parse(&text).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].contains("line 8") && errs[0].contains("line 6"), "{errs:?}");
    }

    #[test]
    fn every_problem_is_reported() {
        let text = "mode = pde\nkernel.type = bogus\nfoo = 1\nn = 0.5\ncells = 1\nt_end = -1\nic = exp\nkernel.a = 1\nthis line is junk\n";
        let errs = parse(text).unwrap_err();
        assert!(errs.len() >= 6, "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("unknown key `foo`")));
        assert!(errs.iter().any(|e| e.contains("line 9")));
        assert!(errs.iter().any(|e| e.contains("unknown kernel type")));
    }

    #[test]
    fn missing_required_keys_are_listed() {
        let errs = parse("mode = pde\n").unwrap_err();
        for key in ["kernel.type", "ic", "n", "cells", "t_end"] {
            assert!(errs.iter().any(|e| e.contains(&format!("`{key}`"))), "{key}: {errs:?}");
        }
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = format!("# header\n\n{}", MINIMAL.replace("cells = 64", "cells = 64   # lattice"));
        assert_eq!(parse(&text).unwrap().cells, 64);
    }

    #[test]
    fn specs_parse() {
        assert_eq!(parse_ic("box:1,2.5", Path::new("/b")).unwrap(), IcSpec::Box(1.0, 2.5));
        assert_eq!(
            parse_ic("table:ic.csv", Path::new("/b")).unwrap(),
            IcSpec::Table(PathBuf::from("/b/ic.csv"))
        );
        assert_eq!(parse_phi("exp:2", Path::new("/")).unwrap(), PhiSpec::Exp(2.0));
        assert_eq!(parse_eta("one_plus_pow:0.5").unwrap(), Eta::OnePlusPow(0.5));
        assert!(parse_eta("max_pow:1").is_err());
        assert_eq!(parse_times("0.5, 1").unwrap(), TimeSpec::List(vec![0.5, 1.0]));
        assert_eq!(parse_times("uniform:4").unwrap(), TimeSpec::Uniform(4));
    }

    #[test]
    fn mode_specific_requirements() {
        let ssa = MINIMAL.replace("mode = pde", "mode = ssa") + "replicas = 0\n";
        assert!(parse(&ssa).unwrap_err().iter().any(|e| e.contains("replicas")));
        let sweep = MINIMAL.replace("mode = pde", "mode = truncation_sweep");
        assert!(parse(&sweep).unwrap_err().iter().any(|e| e.contains("sweep.ns")));
        let sweep = sweep + "sweep.ns = 4, 8, 5.1\n";
        let errs = parse(&sweep).unwrap_err();
        assert_eq!(errs.len(), 1, "{errs:?}");
        let rk4 = MINIMAL.to_string() + "method = rk4\n";
        assert!(parse(&rk4).unwrap_err().iter().any(|e| e.contains("dt")));
        let product = MINIMAL.replace("separable_sum", "separable_product");
        assert!(parse(&product).unwrap_err().iter().any(|e| e.contains("kernel.eta")));
    }
}
