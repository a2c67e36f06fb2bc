//! Line-oriented experiment configuration.
//!
//! ```text
//! # comment
//! [kernel]
//! profile = parabolic
//! radius = 1.0
//!
//! [grid]
//! boundary = dirichlet
//! lengths = 1.0
//! n_per_axis = 64
//!
//! [weight]
//! expr = sin(2*pi*t/T) + cos(2*pi*x) - 0.2
//! period = 1.0
//!
//! [task]
//! kind = lambda_p
//! ```
//!
//! Keys are unique within a section and unknown keys are rejected. Values may
//! be wrapped in double quotes. Relative paths resolve against the directory
//! holding the config file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use perispec_core::kpp::{Family, MAX_PERIODS, TOL_EXT, TOL_FIX};
use perispec_core::{Boundary, Profile};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError {
            line: Some(line),
            message: message.into(),
        }
    }

    fn general(message: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError {
                line: Some(l),
                message,
            } => write!(f, "config line {l}: {message}"),
            ConfigError {
                line: None,
                message,
            } => write!(f, "config: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Spectrum,
    LambdaP,
    UpperBound,
    KppScan,
    Validate,
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "spectrum" => Ok(Task::Spectrum),
            "lambda_p" => Ok(Task::LambdaP),
            "upper_bound" => Ok(Task::UpperBound),
            "kpp_scan" => Ok(Task::KppScan),
            "validate" => Ok(Task::Validate),
            other => Err(format!(
                "unknown task `{other}` (expected spectrum, lambda_p, upper_bound, kpp_scan or validate)"
            )),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Spectrum => "spectrum",
            Task::LambdaP => "lambda_p",
            Task::UpperBound => "upper_bound",
            Task::KppScan => "kpp_scan",
            Task::Validate => "validate",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightSource {
    Expr(String),
    /// Columns `t_index, node_index, value`.
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Numerics {
    pub n_steps: Option<usize>,
    pub n_time: usize,
    pub tol_root: f64,
    pub lambda_cap: f64,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub cross_validate: bool,
    pub lyapunov_periods: usize,
    pub s_conditions: bool,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            n_steps: None,
            n_time: 64,
            tol_root: 1e-8,
            lambda_cap: 1e6,
            max_iter: 10_000,
            rel_tol: 1e-12,
            cross_validate: false,
            lyapunov_periods: 50,
            s_conditions: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KppSpec {
    pub family: Family,
    pub c: f64,
    pub d: f64,
    pub max_periods: usize,
    pub tol_fix: f64,
    pub tol_ext: f64,
}

impl Default for KppSpec {
    fn default() -> Self {
        KppSpec {
            family: Family::Logistic,
            c: 1.0,
            d: 0.0,
            max_periods: MAX_PERIODS,
            tol_fix: TOL_FIX,
            tol_ext: TOL_EXT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub radius: f64,
    pub boundary: Boundary,
    pub lengths: Vec<f64>,
    pub n_per_axis: usize,
    pub weight: WeightSource,
    pub period: f64,
    pub task: Task,
    /// Empty when the task does not need one.
    pub lambdas: Vec<f64>,
    pub seed: u64,
    pub numerics: Numerics,
    pub kpp: KppSpec,
    pub output_dir: Option<PathBuf>,
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("kernel", &["profile", "radius"]),
    ("grid", &["boundary", "lengths", "n_per_axis"]),
    ("weight", &["expr", "csv", "period"]),
    ("task", &["kind", "lambdas", "lambda_range", "seed"]),
    (
        "numerics",
        &[
            "n_steps",
            "n_time",
            "tol_root",
            "lambda_cap",
            "max_iter",
            "rel_tol",
            "cross_validate",
            "lyapunov_periods",
            "s_conditions",
        ],
    ),
    (
        "kpp",
        &["family", "c", "d", "max_periods", "tol_fix", "tol_ext"],
    ),
    ("output", &["dir"]),
];

/// `section.key -> (line, value)`.
type Entries = BTreeMap<(String, String), (usize, String)>;

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut entries = Entries::new();
    let mut section: Option<&str> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::at(line_no, "unterminated section header"))?
                .trim();
            let known = SCHEMA
                .iter()
                .find(|(s, _)| *s == name)
                .ok_or_else(|| ConfigError::at(line_no, format!("unknown section [{name}]")))?;
            section = Some(known.0);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::at(line_no, "expected `key = value`"))?;
        let sec = section.ok_or_else(|| ConfigError::at(line_no, "key outside of a section"))?;
        let key = key.trim();
        let allowed = SCHEMA.iter().find(|(s, _)| *s == sec).unwrap().1;
        if !allowed.contains(&key) {
            return Err(ConfigError::at(
                line_no,
                format!("unknown key `{key}` in [{sec}]"),
            ));
        }
        let value = unquote(value.trim());
        if value.is_empty() {
            return Err(ConfigError::at(line_no, format!("empty value for `{key}`")));
        }
        let slot = (sec.to_string(), key.to_string());
        if let Some((first, _)) = entries.get(&slot) {
            return Err(ConfigError::at(
                line_no,
                format!("duplicate key `{key}` (first set on line {first})"),
            ));
        }
        entries.insert(slot, (line_no, value.to_string()));
    }
    Ok(entries)
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(v)
}

struct Reader {
    entries: Entries,
}

impl Reader {
    fn raw(&self, section: &str, key: &str) -> Option<&(usize, String)> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.raw(section, key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| ConfigError::at(*line, format!("bad value for `{key}`: {e}"))),
        }
    }

    fn require<T: FromStr>(&self, section: &str, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(section, key)?
            .ok_or_else(|| ConfigError::general(format!("missing `{key}` in [{section}]")))
    }

    fn list(&self, section: &str, key: &str) -> Result<Option<(usize, Vec<f64>)>, ConfigError> {
        let Some((line, v)) = self.raw(section, key) else {
            return Ok(None);
        };
        let values = v
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| ConfigError::at(*line, format!("bad number in `{key}`: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Some((*line, values)))
    }

    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        self.raw(section, key).map(|(l, _)| *l)
    }
}

fn check(cond: bool, line: Option<usize>, message: impl Into<String>) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError {
            line,
            message: message.into(),
        })
    }
}

/// Parses config text. `base_dir` anchors relative paths.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ExperimentConfig, ConfigError> {
    let r = Reader {
        entries: tokenize(text)?,
    };

    let profile: Profile = r.require("kernel", "profile")?;
    let radius: f64 = r.require("kernel", "radius")?;
    check(
        radius > 0.0 && radius.is_finite(),
        r.line_of("kernel", "radius"),
        "radius must be positive",
    )?;

    let boundary: Boundary = r.require("grid", "boundary")?;
    let lengths = r
        .list("grid", "lengths")?
        .map(|x| x.1)
        .unwrap_or_else(|| vec![1.0]);
    check(
        (1..=2).contains(&lengths.len()) && lengths.iter().all(|l| *l > 0.0 && l.is_finite()),
        r.line_of("grid", "lengths"),
        "lengths must list one or two positive extents",
    )?;
    let n_per_axis: usize = r.require("grid", "n_per_axis")?;
    check(
        n_per_axis >= 2,
        r.line_of("grid", "n_per_axis"),
        "n_per_axis must be at least 2",
    )?;

    let weight = match (r.raw("weight", "expr"), r.raw("weight", "csv")) {
        (Some((_, e)), None) => WeightSource::Expr(e.clone()),
        (None, Some((_, p))) => WeightSource::Csv(base_dir.join(p)),
        (Some((line, _)), Some(_)) => {
            return Err(ConfigError::at(
                *line,
                "give either `expr` or `csv`, not both",
            ))
        }
        (None, None) => return Err(ConfigError::general("missing `expr` or `csv` in [weight]")),
    };
    let period: f64 = r.get("weight", "period")?.unwrap_or(1.0);
    check(
        period > 0.0 && period.is_finite(),
        r.line_of("weight", "period"),
        "period must be positive",
    )?;

    let task: Task = r.require("task", "kind")?;
    let lambdas = match (r.list("task", "lambdas")?, r.list("task", "lambda_range")?) {
        (Some((_, l)), None) => l,
        (None, Some((line, range))) => {
            check(
                range.len() == 3,
                Some(line),
                "lambda_range is `start, stop, count`",
            )?;
            let count = range[2];
            check(
                count >= 2.0 && count.fract() == 0.0,
                Some(line),
                "lambda_range count must be an integer ≥ 2",
            )?;
            let n = count as usize;
            (0..n)
                .map(|k| range[0] + (range[1] - range[0]) * k as f64 / (n - 1) as f64)
                .collect()
        }
        (Some((line, _)), Some(_)) => {
            return Err(ConfigError::at(
                line,
                "give either `lambdas` or `lambda_range`, not both",
            ))
        }
        (None, None) => Vec::new(),
    };
    check(
        lambdas.iter().all(|l| l.is_finite()),
        r.line_of("task", "lambdas"),
        "λ values must be finite",
    )?;
    match task {
        Task::Spectrum | Task::KppScan => check(
            !lambdas.is_empty(),
            None,
            format!("task {task} needs `lambdas` or `lambda_range` in [task]"),
        )?,
        _ => {}
    }
    if task == Task::KppScan {
        check(
            lambdas.windows(2).all(|w| w[1] > w[0]) && lambdas.iter().all(|l| *l >= 0.0),
            r.line_of("task", "lambdas")
                .or(r.line_of("task", "lambda_range")),
            "kpp_scan λ values must be nonnegative and strictly increasing",
        )?;
    }
    let seed: u64 = r.get("task", "seed")?.unwrap_or(0);

    let d = Numerics::default();
    let numerics = Numerics {
        n_steps: r.get("numerics", "n_steps")?,
        n_time: r.get("numerics", "n_time")?.unwrap_or(d.n_time),
        tol_root: r.get("numerics", "tol_root")?.unwrap_or(d.tol_root),
        lambda_cap: r.get("numerics", "lambda_cap")?.unwrap_or(d.lambda_cap),
        max_iter: r.get("numerics", "max_iter")?.unwrap_or(d.max_iter),
        rel_tol: r.get("numerics", "rel_tol")?.unwrap_or(d.rel_tol),
        cross_validate: r
            .get("numerics", "cross_validate")?
            .unwrap_or(d.cross_validate),
        lyapunov_periods: r
            .get("numerics", "lyapunov_periods")?
            .unwrap_or(d.lyapunov_periods),
        s_conditions: r.get("numerics", "s_conditions")?.unwrap_or(d.s_conditions),
    };
    check(
        numerics.n_steps != Some(0),
        r.line_of("numerics", "n_steps"),
        "n_steps must be positive",
    )?;
    check(
        numerics.n_time >= 4,
        r.line_of("numerics", "n_time"),
        "n_time must be at least 4",
    )?;
    for (key, v) in [
        ("tol_root", numerics.tol_root),
        ("lambda_cap", numerics.lambda_cap),
        ("rel_tol", numerics.rel_tol),
    ] {
        check(
            v > 0.0 && v.is_finite(),
            r.line_of("numerics", key),
            format!("{key} must be positive"),
        )?;
    }

    let k = KppSpec::default();
    let kpp = KppSpec {
        family: r.get("kpp", "family")?.unwrap_or(k.family),
        c: r.get("kpp", "c")?.unwrap_or(k.c),
        d: r.get("kpp", "d")?.unwrap_or(k.d),
        max_periods: r.get("kpp", "max_periods")?.unwrap_or(k.max_periods),
        tol_fix: r.get("kpp", "tol_fix")?.unwrap_or(k.tol_fix),
        tol_ext: r.get("kpp", "tol_ext")?.unwrap_or(k.tol_ext),
    };

    let output_dir = r.raw("output", "dir").map(|(_, p)| base_dir.join(p));

    Ok(ExperimentConfig {
        profile,
        radius,
        boundary,
        lengths,
        n_per_axis,
        weight,
        period,
        task,
        lambdas,
        seed,
        numerics,
        kpp,
        output_dir,
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::general(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
[kernel]
profile = parabolic
radius = 1
[grid]
boundary = neumann
n_per_axis = 32
[weight]
expr = \"cos(2*pi*x) - 0.2\"
[task]
kind = spectrum
lambda_range = 0, 1, 5
";

    #[test]
    fn minimal_config_with_defaults() {
        let c = parse_config(MINIMAL, Path::new("/tmp")).unwrap();
        assert_eq!(c.profile, Profile::Parabolic);
        assert_eq!(c.boundary, Boundary::NeumannType);
        assert_eq!(c.lengths, vec![1.0]);
        assert_eq!(c.weight, WeightSource::Expr("cos(2*pi*x) - 0.2".into()));
        assert_eq!(c.lambdas, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(c.numerics, Numerics::default());
        assert_eq!(c.period, 1.0);
        assert_eq!(c.output_dir, None);
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let text = MINIMAL.replace("expr = \"cos(2*pi*x) - 0.2\"", "csv = w.csv")
            + "[output]\ndir = out\n";
        let c = parse_config(&text, Path::new("/data/run")).unwrap();
        assert_eq!(
            c.weight,
            WeightSource::Csv(PathBuf::from("/data/run/w.csv"))
        );
        assert_eq!(c.output_dir, Some(PathBuf::from("/data/run/out")));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            (MINIMAL.replace("radius = 1", "radius = -1"), Some(4)),
            (MINIMAL.replace("radius = 1", "radius = one"), Some(4)),
            (MINIMAL.replace("[grid]", "[grids]"), Some(5)),
            (
                MINIMAL.replace("n_per_axis = 32", "n_per_axis = 32\nn_per_axis = 16"),
                Some(8),
            ),
            (
                MINIMAL.replace("boundary = neumann", "colour = blue"),
                Some(6),
            ),
            (MINIMAL.replace("kind = spectrum", "kind = plot"), Some(11)),
            (
                MINIMAL.replace("lambda_range = 0, 1, 5", "lambda_range = 0, 1"),
                Some(12),
            ),
            (MINIMAL.replace("lambda_range = 0, 1, 5", ""), None),
            (
                MINIMAL.replace("profile = parabolic", "profile parabolic"),
                Some(3),
            ),
            (format!("x = 1\n{MINIMAL}"), Some(1)),
        ];
        for (text, line) in cases {
            let err = parse_config(&text, Path::new(".")).unwrap_err();
            assert_eq!(err.line, line, "{err}");
        }
    }

    #[test]
    fn kpp_scan_needs_increasing_lambdas() {
        let text = MINIMAL
            .replace("kind = spectrum", "kind = kpp_scan")
            .replace("lambda_range = 0, 1, 5", "lambdas = 1, 0.5");
        assert!(parse_config(&text, Path::new(".")).is_err());
        let ok = MINIMAL.replace("kind = spectrum", "kind = kpp_scan")
            + "[kpp]\nfamily = saturating\nc = 2\nd = 0.5\n";
        let c = parse_config(&ok, Path::new(".")).unwrap();
        assert_eq!(c.kpp.family, Family::Saturating);
        assert_eq!((c.kpp.c, c.kpp.d), (2.0, 0.5));
    }

    #[test]
    fn lambda_p_needs_no_lambdas() {
        let text = MINIMAL
            .replace("kind = spectrum", "kind = lambda_p")
            .replace("lambda_range = 0, 1, 5", "seed = 9");
        let c = parse_config(&text, Path::new(".")).unwrap();
        assert!(c.lambdas.is_empty());
        assert_eq!(c.seed, 9);
    }
}
