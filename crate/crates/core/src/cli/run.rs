//! Runs a parsed config and writes its outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::actions::ActionSpec;
use crate::equidist::{convergence_curve, equidist_report, Verdict};
use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::groups::{GroupElement, GroupSpec};
use crate::measures::{
    convex_word_approx, default_probes, folner_average, weakstar_distance_to_haar, ApproxConfig,
    DenseFunctionFamily, EmpiricalMeasure, FolnerSet,
};
use crate::products::{orbit_points, product_measure_grid, OrbitConfig, SkewRun};
use crate::sensitivity::{
    default_base_points, ek_forward_invariance, ek_hit_rate, equicontinuity_modulus, estimate_ek,
    probe_sensitivity, sample_words, ModulusConfig, SensitivityProbeConfig, WordBudget,
};

use super::config::{ExperimentConfig, ExperimentKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive,
    /// The experiment has no pass/fail criterion.
    Complete,
}

/// Everything computed by a run, before anything is written.
#[derive(Debug, Clone)]
pub struct Execution {
    pub payload: Value,
    /// `(file name, contents)` of the CSV outputs.
    pub files: Vec<(String, String)>,
    pub warnings: Vec<String>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub kind: ExperimentKind,
    /// Canonical config text.
    pub config: String,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
    pub out_dir: PathBuf,
    /// SHA-256 of every written file except this record.
    pub digests: BTreeMap<String, String>,
    pub warnings: Vec<String>,
    pub outcome: Outcome,
    pub payload: Value,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output directory: `<dir>/<kind>-<first 12 hex digits of the config hash>`.
/// The hash ignores `dir` itself, so moving the outputs keeps the name.
pub fn run_dir(cfg: &ExperimentConfig) -> PathBuf {
    let mut key = cfg.clone();
    key.output.dir = PathBuf::new();
    let hash = sha256_hex(key.to_canonical().as_bytes());
    cfg.output.dir.join(format!("{}-{}", cfg.kind, &hash[..12]))
}

/// Runs `cfg` and writes `report.json`, the CSV files and `record.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    let config = cfg.to_canonical();
    let started_at = chrono::Utc::now().to_rfc3339();
    let exec = execute(cfg).map_err(|e| Error::Experiment {
        config: config.clone(),
        source: Box::new(e),
    })?;
    let out_dir = run_dir(cfg);
    fs::create_dir_all(&out_dir)?;
    let mut digests = BTreeMap::new();
    let report = serde_json::to_string_pretty(&exec.payload)? + "\n";
    let mut files = vec![("report.json".to_string(), report)];
    files.extend(exec.files);
    for (name, body) in &files {
        fs::write(out_dir.join(name), body)?;
        digests.insert(name.clone(), sha256_hex(body.as_bytes()));
    }
    let record = RunRecord {
        kind: cfg.kind,
        config,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        out_dir: out_dir.clone(),
        digests,
        warnings: exec.warnings,
        outcome: exec.outcome,
        payload: exec.payload,
    };
    fs::write(out_dir.join("record.json"), serde_json::to_string_pretty(&record)? + "\n")?;
    Ok(record)
}

/// Computes a run without touching the file system.
pub fn execute(cfg: &ExperimentConfig) -> Result<Execution> {
    let action = cfg.action.resolve(cfg.seed)?;
    let mut warnings = Vec::new();
    if !cfg.sequence.is_conforming() {
        warnings.push(format!(
            "sequence {} gives some generator index probability zero; equidistribution is not expected in general",
            cfg.sequence
        ));
    }
    let mut exec = match cfg.kind {
        ExperimentKind::Orbit => run_orbit(cfg, &action),
        ExperimentKind::Equidist => run_equidist(cfg, &action),
        ExperimentKind::SkewTest => run_skew(cfg, &action),
        ExperimentKind::Folner => run_folner(cfg, &action),
        ExperimentKind::MeasureApprox => run_approx(cfg, &action),
        ExperimentKind::Sensitivity => run_sensitivity(cfg, &action),
    }?;
    warnings.append(&mut exec.warnings);
    exec.warnings = warnings;
    Ok(exec)
}

fn orbit(cfg: &ExperimentConfig, action: &ActionSpec) -> Result<Vec<GroupElement>> {
    let start = cfg.start.clone().unwrap_or_else(|| action.space().identity());
    let mut oc = OrbitConfig::new(action.clone(), start, cfg.sequence.clone(), cfg.n, cfg.seed);
    oc.order = cfg.order;
    oc.burn_in = cfg.burn_in;
    orbit_points(oc)
}

fn orbit_csv(cfg: &ExperimentConfig, points: &[GroupElement]) -> String {
    let dim = points.first().map_or(0, |p| p.coordinates().len());
    let mut s = String::from("step");
    for i in 0..dim {
        let _ = write!(s, ",x_{i}");
    }
    s.push('\n');
    for (j, p) in points.iter().enumerate().skip(cfg.output.thin - 1).step_by(cfg.output.thin) {
        let _ = write!(s, "{}", cfg.burn_in + j + 1);
        for c in p.coordinates() {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
    }
    s
}

fn run_orbit(cfg: &ExperimentConfig, action: &ActionSpec) -> Result<Execution> {
    let points = orbit(cfg, action)?;
    let space = action.space();
    let last = points.last().expect("orbit length ≥ 1");
    Ok(Execution {
        payload: json!({
            "n": points.len(),
            "seed": cfg.seed,
            "burn_in": cfg.burn_in,
            "thin": cfg.output.thin,
            "last": space.format_element(last),
        }),
        files: vec![("orbit.csv".into(), orbit_csv(cfg, &points))],
        warnings: Vec::new(),
        outcome: Outcome::Complete,
    })
}

fn run_equidist(cfg: &ExperimentConfig, action: &ActionSpec) -> Result<Execution> {
    let points = orbit(cfg, action)?;
    let space = action.space();
    let report = equidist_report(&space, &points, &cfg.equidist, cfg.seed)?;
    let curve = convergence_curve(&space, &points, &cfg.equidist)?;
    let mut csv = String::from("N,statistic\n");
    for (n, v) in &curve {
        let _ = writeln!(csv, "{n},{v}");
    }
    let mut warnings = Vec::new();
    if points.len() < cfg.equidist.min_n {
        warnings.push(format!(
            "N = {} is below min_n = {}; the verdict is inconclusive",
            points.len(),
            cfg.equidist.min_n
        ));
    }
    let outcome = match report.verdict {
        Verdict::Pass => Outcome::Pass,
        Verdict::Fail => Outcome::Fail,
        Verdict::Inconclusive => Outcome::Inconclusive,
    };
    Ok(Execution {
        payload: serde_json::to_value(&report)?,
        files: vec![("convergence.csv".into(), csv), ("orbit.csv".into(), orbit_csv(cfg, &points))],
        warnings,
        outcome,
    })
}

/// The constant function and one mean-zero function on the space.
pub fn default_skew_functions(space: &GroupSpec) -> Vec<TestFunction> {
    let second = match space {
        GroupSpec::Torus { dim } => {
            let mut k = vec![0i64; *dim];
            k[0] = 1;
            TestFunction::TorusCos(k)
        }
        GroupSpec::Su2 => TestFunction::Su2Character { twice_spin: 1 },
        s => TestFunction::Indicator(s.identity()),
    };
    vec![TestFunction::Constant(1.0), second]
}

fn run_skew(cfg: &ExperimentConfig, action: &ActionSpec) -> Result<Execution> {
    let space = action.space();
    let functions = if cfg.skew.functions.is_empty() {
        default_skew_functions(&space)
    } else {
        cfg.skew.functions.clone()
    };
    let mut run = SkewRun::new(action.clone(), cfg.sequence.clone(), cfg.n, cfg.seed);
    run.start = cfg.start.clone();
    run.burn_in = cfg.burn_in;
    let reports = product_measure_grid(&run, &functions, &cfg.skew.cylinders)?;
    let pass = reports.iter().all(|r| r.deviation.abs() <= cfg.skew.tolerance);
    Ok(Execution {
        payload: json!({
            "reports": reports,
            "tolerance": cfg.skew.tolerance,
            "pass": pass,
        }),
        files: Vec::new(),
        warnings: Vec::new(),
        outcome: if pass { Outcome::Pass } else { Outcome::Fail },
    })
}

fn run_folner(cfg: &ExperimentConfig, action: &ActionSpec) -> Result<Execution> {
    let f = &cfg.folner;
    let space = action.space();
    let family = DenseFunctionFamily::new(space.clone())?;
    let probes = default_probes(&space, f.probes, 0, cfg.seed)?;
    let slot = usize::try_from(f.generator - 1).map_err(|_| Error::invalid("generator out of range"))?;
    let mut rows = Vec::new();
    let mut csv = String::from("m,max_distance,mean_distance,tail_bound\n");
    for &m in &f.sizes {
        let set = FolnerSet::interval(action, slot, m)?;
        let ds = probes
            .par_iter()
            .map(|p| weakstar_distance_to_haar(&family, &folner_average(action, &set, p)?, f.truncation))
            .collect::<Result<Vec<_>>>()?;
        let max = ds.iter().map(|d| d.value).fold(0.0, f64::max);
        let mean = ds.iter().map(|d| d.value).sum::<f64>() / ds.len() as f64;
        let tail = ds[0].tail_bound;
        let _ = writeln!(csv, "{m},{max},{mean},{tail}");
        rows.push(json!({"m": m, "max_distance": max, "mean_distance": mean, "tail_bound": tail}));
    }
    let maxima: Vec<f64> = rows.iter().map(|r| r["max_distance"].as_f64().expect("number")).collect();
    let non_increasing = maxima.windows(2).all(|w| w[1] <= w[0]);
    let pass = maxima.last().is_some_and(|&d| d <= f.tolerance);
    let mut warnings = Vec::new();
    if !non_increasing {
        warnings.push("worst distance increased between consecutive set sizes".into());
    }
    Ok(Execution {
        payload: json!({
            "rows": rows,
            "probes": probes.len(),
            "tolerance": f.tolerance,
            "non_increasing": non_increasing,
            "pass": pass,
        }),
        files: vec![("folner.csv".into(), csv)],
        warnings,
        outcome: if pass { Outcome::Pass } else { Outcome::Fail },
    })
}

/// Haar stand-in for the approximation target: a midpoint grid with at most
/// `budget` atoms on a torus, every element of a finite group.
pub fn haar_target(space: &GroupSpec, budget: usize) -> Result<EmpiricalMeasure> {
    let g = match space {
        GroupSpec::Torus { dim } => {
            let mut g = (budget as f64).powf(1.0 / *dim as f64).round() as usize;
            while g > 1 && g.checked_pow(*dim as u32).is_none_or(|c| c > budget) {
                g -= 1;
            }
            g.max(1)
        }
        _ => 1,
    };
    EmpiricalMeasure::lebesgue_grid(space, g)
}

fn run_approx(cfg: &ExperimentConfig, action: &ActionSpec) -> Result<Execution> {
    let a = &cfg.approx;
    let space = action.space();
    let family = DenseFunctionFamily::new(space.clone())?;
    let target = haar_target(&space, a.reference_grid)?;
    let mut ac = ApproxConfig::new(a.stages, a.max_len, cfg.seed);
    ac.truncation = a.truncation;
    ac.pool_cap = a.pool_cap;
    ac.max_sweeps = a.sweeps;
    ac.probes = Some(default_probes(&space, a.probes, a.mixtures, cfg.seed)?);
    let result = convex_word_approx(action, &family, &target, &ac)?;
    let mut csv = String::from("m,worst_probe_distance,tail_bound,improved,words\n");
    for s in &result.stages {
        let words: Vec<String> = s.words.iter().map(|w| format!("{}:{}", w.indices, w.weight)).collect();
        let _ = writeln!(
            csv,
            "{},{},{},{},\"{}\"",
            s.m,
            s.worst_probe_distance,
            s.tail_bound,
            s.improved,
            words.join(" ")
        );
    }
    let dist: Vec<f64> = result.stages.iter().map(|s| s.worst_probe_distance).collect();
    let non_increasing = dist.windows(2).all(|w| w[1] <= w[0]);
    let last = dist.last().copied().unwrap_or(f64::INFINITY);
    let pass = non_increasing && last < a.tolerance;
    let mut warnings = Vec::new();
    if result.stalled {
        warnings.push("the last greedy round did not improve on an earlier one".into());
    }
    Ok(Execution {
        payload: json!({
            "result": result,
            "final_distance": last,
            "tolerance": a.tolerance,
            "non_increasing": non_increasing,
            "pass": pass,
        }),
        files: vec![("stages.csv".into(), csv)],
        warnings,
        outcome: if pass { Outcome::Pass } else { Outcome::Fail },
    })
}

fn run_sensitivity(cfg: &ExperimentConfig, action: &ActionSpec) -> Result<Execution> {
    let t = &cfg.sensitivity;
    let space = action.space();
    let budget = WordBudget::new(t.words, t.max_len)?;
    let mut pc = SensitivityProbeConfig::new(action.clone(), t.betas.clone(), t.deltas.clone(), budget, cfg.seed)?;
    pc.base_points = default_base_points(&space, t.base_grid, t.base_random, cfg.seed)?;
    let report = probe_sensitivity(&pc)?;

    let mut mc = ModulusConfig::new(action, t.eps.clone(), budget, cfg.seed)?;
    mc.base_points = pc.base_points.clone();
    let modulus = equicontinuity_modulus(action, &mc)?;

    let mut files = Vec::new();
    let mut warnings = Vec::new();
    let ek = if matches!(space, GroupSpec::Su2) {
        warnings.push("E_k estimation needs a cell grid and is skipped on SU(2)".into());
        Value::Null
    } else {
        let est = estimate_ek(action, t.ek_k, t.ek_grid, budget, cfg.seed)?;
        let dim = match space {
            GroupSpec::Torus { dim } => dim,
            _ => 1,
        };
        files.push(("ek.csv".to_string(), est.to_csv(dim)));
        let words = sample_words(action.generator_count(), budget, cfg.seed);
        json!({
            "k": est.k,
            "grid": est.grid,
            "total_cells": est.total_cells,
            "cells_in_ek": est.cells.len(),
            "forward_invariance": ek_forward_invariance(action, &est)?,
            "hit_rate": ek_hit_rate(action, &est, &words)?,
        })
    };
    Ok(Execution {
        payload: json!({
            "sensitivity": report,
            "ek": ek,
            "modulus": modulus,
        }),
        files,
        warnings,
        outcome: Outcome::Complete,
    })
}
