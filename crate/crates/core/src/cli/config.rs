//! Experiment configs: `[section]` headers and `key = value` lines.
//!
//! Lines starting with `#` are comments. Every problem in a file is
//! reported, each with its line number. [`ExperimentConfig::to_canonical`]
//! writes every key, defaults included, in a fixed order; parsing its output
//! gives back the same config.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::actions::ActionDescriptor;
use crate::bernoulli::{Cylinder, ProbabilitySequence};
use crate::equidist::{EquidistConfig, VarianceMode};
use crate::error::{ConfigIssue, Error, Result};
use crate::functions::TestFunction;
use crate::groups::{GroupElement, GroupSpec};
use crate::products::ProductOrder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Orbit,
    Equidist,
    SkewTest,
    Folner,
    MeasureApprox,
    Sensitivity,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Orbit,
        ExperimentKind::Equidist,
        ExperimentKind::SkewTest,
        ExperimentKind::Folner,
        ExperimentKind::MeasureApprox,
        ExperimentKind::Sensitivity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Orbit => "orbit",
            ExperimentKind::Equidist => "equidist",
            ExperimentKind::SkewTest => "skew-test",
            ExperimentKind::Folner => "folner",
            ExperimentKind::MeasureApprox => "measure-approx",
            ExperimentKind::Sensitivity => "sensitivity",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| {
                Error::parse(
                    "experiment kind",
                    s,
                    "expected orbit, equidist, skew-test, folner, measure-approx or sensitivity",
                )
            })
    }
}

/// Every accepted key: `(section, key, description)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("experiment", "kind", "orbit | equidist | skew-test | folner | measure-approx | sensitivity (required)"),
    ("experiment", "seed", "64-bit seed for every random quantity (required)"),
    ("experiment", "n", "orbit length N (default 100000)"),
    ("experiment", "burn_in", "steps discarded before the first recorded point (default 0)"),
    ("model", "group", "group string, checked against the action's space (optional)"),
    ("model", "action", "translation(GROUP; gens=E1,E2[; policy=strict][; dense=true]) | translation(GROUP; gens=haar:K) | rotation(A1,...) | doubling-fixture (required)"),
    ("model", "sequence", "geometric:q | uniform:K | custom:[p1,...];tail=q (default geometric:0.5)"),
    ("model", "start", "start point as an element literal (default identity)"),
    ("model", "order", "composition | right-multiplication (default composition)"),
    ("equidist", "freq_cutoff", "largest |k_i| for Weyl tests, largest j for cyclic characters (default 8)"),
    ("equidist", "max_twice_spin", "largest 2j for SU(2) characters (default 4)"),
    ("equidist", "c", "CLT multiplier in thresholds c/sqrt(N) (default 3)"),
    ("equidist", "bonferroni", "raise c over the number of character tests (default true)"),
    ("equidist", "grid", "grid resolution for discrepancy in dimensions 2 and 3 (default 32)"),
    ("equidist", "min_n", "smaller samples are inconclusive (default 1000)"),
    ("equidist", "variance", "iid | batch-means: σ in the character thresholds c·σ/sqrt(N) (default iid)"),
    ("skew", "functions", "test functions separated by ';' (const:c, cos:k1/k2, sin:k, chi:2j, mono:a/b/c/d); default depends on the group"),
    ("skew", "cylinders", "cylinders separated by ';', e.g. 1@0;1,2@0 (default 1@0)"),
    ("skew", "tolerance", "largest accepted |deviation| (default 0.005)"),
    ("folner", "generator", "1-based generator whose powers form the Følner sets (default 1)"),
    ("folner", "sizes", "comma-separated set sizes m (default 100,1000,10000)"),
    ("folner", "probes", "number of Dirac probe measures (default 100)"),
    ("folner", "truncation", "terms M of the weak* series (default 20)"),
    ("folner", "tolerance", "largest accepted distance at the last size (default 0.005)"),
    ("approx", "stages", "greedy rounds m (default 32)"),
    ("approx", "max_len", "longest candidate word L (default 32)"),
    ("approx", "truncation", "terms M of the weak* series (default 20)"),
    ("approx", "pool_cap", "largest de-duplicated candidate pool (default 2048)"),
    ("approx", "sweeps", "replacement passes per round (default 8)"),
    ("approx", "probes", "number of Dirac probe measures (default 100)"),
    ("approx", "mixtures", "number of random probe mixtures (default 10)"),
    ("approx", "reference_grid", "atoms of the Haar target grid, spread evenly over the axes (default 4096)"),
    ("approx", "tolerance", "largest accepted final distance (default 0.01)"),
    ("sensitivity", "betas", "comma-separated separation levels (default 0.25)"),
    ("sensitivity", "deltas", "comma-separated, strictly decreasing radii (default 0.1,0.01,0.001,0.0001)"),
    ("sensitivity", "words", "number of sampled words (default 256)"),
    ("sensitivity", "max_len", "longest sampled word (default 64)"),
    ("sensitivity", "base_grid", "base points per axis (default 8)"),
    ("sensitivity", "base_random", "additional random base points (default 8)"),
    ("sensitivity", "ek_k", "k of the E_k estimate (default 2)"),
    ("sensitivity", "ek_grid", "cells per axis of the E_k estimate (default 16)"),
    ("sensitivity", "eps", "comma-separated ε values for the equicontinuity modulus (default 0.1,0.05)"),
    ("output", "dir", "parent directory for run outputs (default out)"),
    ("output", "thin", "write every thin-th orbit point (default 1)"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SkewOptions {
    /// Empty means the default for the group.
    pub functions: Vec<TestFunction>,
    pub cylinders: Vec<Cylinder>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FolnerOptions {
    pub generator: u64,
    pub sizes: Vec<usize>,
    pub probes: usize,
    pub truncation: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxOptions {
    pub stages: usize,
    pub max_len: usize,
    pub truncation: usize,
    pub pool_cap: usize,
    pub sweeps: usize,
    pub probes: usize,
    pub mixtures: usize,
    pub reference_grid: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityOptions {
    pub betas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub words: usize,
    pub max_len: usize,
    pub base_grid: usize,
    pub base_random: usize,
    pub ek_k: u32,
    pub ek_grid: usize,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputOptions {
    pub dir: PathBuf,
    pub thin: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub n: usize,
    pub burn_in: usize,
    pub group: Option<GroupSpec>,
    pub action: ActionDescriptor,
    pub sequence: ProbabilitySequence,
    pub start: Option<GroupElement>,
    pub order: ProductOrder,
    pub equidist: EquidistConfig,
    pub skew: SkewOptions,
    pub folner: FolnerOptions,
    pub approx: ApproxOptions,
    pub sensitivity: SensitivityOptions,
    pub output: OutputOptions,
}

/// Values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

type Raw = BTreeMap<(String, String), (String, usize)>;

fn read_raw(text: &str) -> (Raw, Vec<ConfigIssue>) {
    let mut raw = Raw::new();
    let mut issues = Vec::new();
    let mut section: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let name = name.trim();
            if KEYS.iter().any(|(s, _, _)| *s == name) {
                section = Some(name.to_string());
            } else {
                issues.push(ConfigIssue {
                    line: line_no,
                    message: format!("unknown section [{name}]"),
                });
                section = None;
            }
            continue;
        }
        let Some((key, value)) = t.split_once('=') else {
            issues.push(ConfigIssue {
                line: line_no,
                message: format!("expected `key = value`, got `{t}`"),
            });
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(sec) = &section else {
            issues.push(ConfigIssue {
                line: line_no,
                message: format!("key `{key}` is outside a known [section]"),
            });
            continue;
        };
        if !KEYS.iter().any(|(s, k, _)| s == sec && *k == key) {
            issues.push(ConfigIssue {
                line: line_no,
                message: format!("unknown key `{key}` in [{sec}]"),
            });
            continue;
        }
        if let Some((_, first)) = raw.get(&(sec.clone(), key.to_string())) {
            issues.push(ConfigIssue {
                line: line_no,
                message: format!("duplicate key `{key}` in [{sec}] (first set on line {first})"),
            });
            continue;
        }
        raw.insert((sec.clone(), key.to_string()), (value.to_string(), line_no));
    }
    (raw, issues)
}

struct Reader {
    raw: Raw,
    issues: Vec<ConfigIssue>,
}

impl Reader {
    fn value(&self, section: &str, key: &str) -> Option<(String, usize)> {
        self.raw.get(&(section.to_string(), key.to_string())).cloned()
    }

    /// Parsed value, `None` if absent or invalid (invalid values are
    /// recorded as issues).
    fn get<T>(&mut self, section: &str, key: &str, parse: impl FnOnce(&str) -> Result<T>) -> Option<T> {
        let (v, line) = self.value(section, key)?;
        match parse(&v) {
            Ok(x) => Some(x),
            Err(e) => {
                self.issues.push(ConfigIssue {
                    line,
                    message: format!("{key}: {e}"),
                });
                None
            }
        }
    }

    fn or<T>(&mut self, section: &str, key: &str, default: T, parse: impl FnOnce(&str) -> Result<T>) -> T {
        self.get(section, key, parse).unwrap_or(default)
    }

    fn required<T>(&mut self, section: &str, key: &str, parse: impl FnOnce(&str) -> Result<T>) -> Option<T> {
        if self.value(section, key).is_none() {
            self.issues.push(ConfigIssue {
                line: 0,
                message: format!("missing required key `{key}` in [{section}]"),
            });
            return None;
        }
        self.get(section, key, parse)
    }

    fn issue(&mut self, section: &str, key: &str, message: String) {
        let line = self.value(section, key).map_or(0, |(_, l)| l);
        self.issues.push(ConfigIssue { line, message });
    }
}

fn num<T: FromStr>(s: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    s.trim().parse::<T>().map_err(|e| Error::invalid(format!("`{s}`: {e}")))
}

fn positive<T: FromStr + PartialOrd + Default>(s: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    let v: T = num(s)?;
    if v > T::default() {
        Ok(v)
    } else {
        Err(Error::invalid(format!("`{s}` must be positive")))
    }
}

fn list<T>(s: &str, sep: char, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let v = s
        .split(sep)
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(item)
        .collect::<Result<Vec<_>>>()?;
    if v.is_empty() {
        return Err(Error::invalid("list is empty"));
    }
    Ok(v)
}

fn boolean(s: &str) -> Result<bool> {
    match s.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::invalid(format!("expected true or false, got `{other}`"))),
    }
}

/// Parses a config file; every problem is reported in one error.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_with(text, &Overrides::default())
}

pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<ExperimentConfig> {
    let (raw, issues) = read_raw(text);
    let mut r = Reader { raw, issues };

    let kind = r.required("experiment", "kind", ExperimentKind::from_str);
    let seed = match overrides.seed {
        Some(s) => Some(s),
        None => r.required("experiment", "seed", num::<u64>),
    };
    let n = r.or("experiment", "n", 100_000, positive::<usize>);
    let burn_in = r.or("experiment", "burn_in", 0, num::<usize>);

    let group = r.get("model", "group", GroupSpec::from_str);
    let action = r.required("model", "action", ActionDescriptor::from_str);
    let sequence = r.or(
        "model",
        "sequence",
        ProbabilitySequence::geometric(0.5).expect("valid"),
        ProbabilitySequence::from_str,
    );
    let order = r.or("model", "order", ProductOrder::Composition, ProductOrder::from_str);
    let mut start = None;
    if let Some(a) = &action {
        let space = a.space();
        if let Some(g) = &group {
            if *g != space {
                r.issue(
                    "model",
                    "group",
                    format!("group: {g} does not match the action's space {space}"),
                );
            }
        }
        start = r.get("model", "start", |s| space.parse_element(s));
    }

    let d = EquidistConfig::default();
    let equidist = EquidistConfig {
        freq_cutoff: r.or("equidist", "freq_cutoff", d.freq_cutoff, positive::<u32>),
        max_twice_spin: r.or("equidist", "max_twice_spin", d.max_twice_spin, positive::<u32>),
        c: r.or("equidist", "c", d.c, positive::<f64>),
        bonferroni: r.or("equidist", "bonferroni", d.bonferroni, boolean),
        grid: r.or("equidist", "grid", d.grid, positive::<usize>),
        min_n: r.or("equidist", "min_n", d.min_n, num::<usize>),
        variance: r.or("equidist", "variance", d.variance, VarianceMode::from_str),
    };

    let skew = SkewOptions {
        functions: r.or("skew", "functions", Vec::new(), |s| list(s, ';', TestFunction::from_str)),
        cylinders: r.or(
            "skew",
            "cylinders",
            vec![Cylinder::new(0, vec![1]).expect("valid")],
            |s| list(s, ';', Cylinder::from_str),
        ),
        tolerance: r.or("skew", "tolerance", 5e-3, positive::<f64>),
    };

    let folner = FolnerOptions {
        generator: r.or("folner", "generator", 1, positive::<u64>),
        sizes: r.or("folner", "sizes", vec![100, 1_000, 10_000], |s| list(s, ',', positive::<usize>)),
        probes: r.or("folner", "probes", 100, positive::<usize>),
        truncation: r.or("folner", "truncation", 20, positive::<usize>),
        tolerance: r.or("folner", "tolerance", 5e-3, positive::<f64>),
    };

    let approx = ApproxOptions {
        stages: r.or("approx", "stages", 32, positive::<usize>),
        max_len: r.or("approx", "max_len", 32, positive::<usize>),
        truncation: r.or("approx", "truncation", 20, positive::<usize>),
        pool_cap: r.or("approx", "pool_cap", 2048, positive::<usize>),
        sweeps: r.or("approx", "sweeps", 8, num::<usize>),
        probes: r.or("approx", "probes", 100, positive::<usize>),
        mixtures: r.or("approx", "mixtures", 10, num::<usize>),
        reference_grid: r.or("approx", "reference_grid", 4096, positive::<usize>),
        tolerance: r.or("approx", "tolerance", 1e-2, positive::<f64>),
    };

    let sensitivity = SensitivityOptions {
        betas: r.or("sensitivity", "betas", vec![0.25], |s| list(s, ',', positive::<f64>)),
        deltas: r.or("sensitivity", "deltas", vec![0.1, 0.01, 0.001, 0.0001], |s| {
            let v = list(s, ',', positive::<f64>)?;
            if v.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::invalid("deltas must be strictly decreasing"));
            }
            Ok(v)
        }),
        words: r.or("sensitivity", "words", 256, positive::<usize>),
        max_len: r.or("sensitivity", "max_len", 64, positive::<usize>),
        base_grid: r.or("sensitivity", "base_grid", 8, positive::<usize>),
        base_random: r.or("sensitivity", "base_random", 8, num::<usize>),
        ek_k: r.or("sensitivity", "ek_k", 2, positive::<u32>),
        ek_grid: r.or("sensitivity", "ek_grid", 16, positive::<usize>),
        eps: r.or("sensitivity", "eps", vec![0.1, 0.05], |s| list(s, ',', positive::<f64>)),
    };

    let mut output = OutputOptions {
        dir: r.or("output", "dir", PathBuf::from("out"), |s| Ok(PathBuf::from(s))),
        thin: r.or("output", "thin", 1, positive::<usize>),
    };
    if let Some(dir) = &overrides.out {
        output.dir = dir.clone();
    }

    if !r.issues.is_empty() {
        r.issues.sort_by_key(|i| i.line);
        return Err(Error::Config(r.issues));
    }
    Ok(ExperimentConfig {
        kind: kind.expect("no issues"),
        seed: seed.expect("no issues"),
        n,
        burn_in,
        group,
        action: action.expect("no issues"),
        sequence,
        start,
        order,
        equidist,
        skew,
        folner,
        approx,
        sensitivity,
        output,
    })
}

fn join<T: fmt::Display>(v: &[T], sep: &str) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(sep)
}

impl ExperimentConfig {
    /// Every key in a fixed order, defaults included.
    pub fn to_canonical(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        line("[experiment]\nkind", self.kind.to_string());
        line("seed", self.seed.to_string());
        line("n", self.n.to_string());
        line("burn_in", self.burn_in.to_string());
        let space = self.action.space();
        line("\n[model]\naction", self.action.to_string());
        if let Some(g) = &self.group {
            line("group", g.to_string());
        }
        line("sequence", self.sequence.to_string());
        if let Some(x) = &self.start {
            line("start", space.format_element(x));
        }
        line("order", self.order.to_string());
        let e = &self.equidist;
        line("\n[equidist]\nfreq_cutoff", e.freq_cutoff.to_string());
        line("max_twice_spin", e.max_twice_spin.to_string());
        line("c", e.c.to_string());
        line("bonferroni", e.bonferroni.to_string());
        line("grid", e.grid.to_string());
        line("min_n", e.min_n.to_string());
        line("variance", e.variance.to_string());
        if !self.skew.functions.is_empty() {
            line("\n[skew]\nfunctions", join(&self.skew.functions, ";"));
            line("cylinders", join(&self.skew.cylinders, ";"));
        } else {
            line("\n[skew]\ncylinders", join(&self.skew.cylinders, ";"));
        }
        line("tolerance", self.skew.tolerance.to_string());
        let f = &self.folner;
        line("\n[folner]\ngenerator", f.generator.to_string());
        line("sizes", join(&f.sizes, ","));
        line("probes", f.probes.to_string());
        line("truncation", f.truncation.to_string());
        line("tolerance", f.tolerance.to_string());
        let a = &self.approx;
        line("\n[approx]\nstages", a.stages.to_string());
        line("max_len", a.max_len.to_string());
        line("truncation", a.truncation.to_string());
        line("pool_cap", a.pool_cap.to_string());
        line("sweeps", a.sweeps.to_string());
        line("probes", a.probes.to_string());
        line("mixtures", a.mixtures.to_string());
        line("reference_grid", a.reference_grid.to_string());
        line("tolerance", a.tolerance.to_string());
        let t = &self.sensitivity;
        line("\n[sensitivity]\nbetas", join(&t.betas, ","));
        line("deltas", join(&t.deltas, ","));
        line("words", t.words.to_string());
        line("max_len", t.max_len.to_string());
        line("base_grid", t.base_grid.to_string());
        line("base_random", t.base_random.to_string());
        line("ek_k", t.ek_k.to_string());
        line("ek_grid", t.ek_grid.to_string());
        line("eps", join(&t.eps, ","));
        line("\n[output]\ndir", self.output.dir.display().to_string());
        line("thin", self.output.thin.to_string());
        s
    }

    /// Help text listing every key.
    pub fn key_reference() -> String {
        let mut s = String::from("Config keys:\n");
        let mut section = "";
        for (sec, key, doc) in KEYS {
            if *sec != section {
                s.push_str(&format!("\n  [{sec}]\n"));
                section = sec;
            }
            s.push_str(&format!("    {key:<15} {doc}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[experiment]\nkind = orbit\nseed = 7\n\n[model]\naction = rotation(0.25)\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.kind, ExperimentKind::Orbit);
        assert_eq!(c.n, 100_000);
        assert_eq!(c.sequence.to_string(), "geometric:0.5");
        assert_eq!(c.output.thin, 1);
    }

    #[test]
    fn all_errors_are_reported() {
        let text = "[experiment]\nkind = orbit\nbogus = 1\n[model]\ngroup = torus:0\naction = rotation(0.1)\n[nowhere]\n";
        let Err(Error::Config(issues)) = parse_config(text) else {
            panic!("expected config errors")
        };
        let msgs: Vec<String> = issues.iter().map(|i| i.to_string()).collect();
        assert!(msgs.iter().any(|m| m.starts_with("line 3:") && m.contains("unknown key `bogus`")), "{msgs:?}");
        assert!(msgs.iter().any(|m| m.starts_with("line 5:") && m.contains("dimension must be ≥ 1")), "{msgs:?}");
        assert!(msgs.iter().any(|m| m.contains("line 7") && m.contains("unknown section")), "{msgs:?}");
        assert!(msgs.iter().any(|m| m.contains("missing required key `seed`")), "{msgs:?}");
    }

    #[test]
    fn seed_override_satisfies_requirement() {
        let text = "[experiment]\nkind = orbit\n[model]\naction = rotation(0.1)\n";
        let c = parse_config_with(text, &Overrides { seed: Some(3), out: None }).unwrap();
        assert_eq!(c.seed, 3);
    }

    #[test]
    fn canonical_form_is_a_fixed_point() {
        let c = parse_config(MINIMAL).unwrap();
        let once = c.to_canonical();
        let again = parse_config(&once).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_canonical(), once);
    }

    #[test]
    fn every_key_is_documented() {
        let help = ExperimentConfig::key_reference();
        for (_, k, _) in KEYS {
            assert!(help.contains(k));
        }
    }
}
