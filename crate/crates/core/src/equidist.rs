//! Finite-sample tests of uniform distribution with respect to Haar measure:
//! Weyl sums, star discrepancy, character averages and a chi-square test on
//! finite groups.
//!
//! A verdict is a calibrated statistical decision at the given `N`, not a
//! certificate of equidistribution. Each test's threshold is recorded next
//! to its value.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functions::{su2_character, torus_phase};
use crate::groups::{GroupElement, GroupSpec};

fn torus_coords(points: &[GroupElement], dim: usize) -> Result<Vec<&[f64]>> {
    points
        .iter()
        .map(|p| match p {
            GroupElement::Torus(v) if v.len() == dim => Ok(v.as_slice()),
            other => Err(Error::invalid(format!("{other:?} is not a point of torus:{dim}"))),
        })
        .collect()
}

/// `|(1/N) Σ e^{2πi k·x_n}|` for points given as coordinate slices.
pub fn weyl_sum_coords(points: &[&[f64]], k: &[i64]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::invalid("need at least one point"));
    }
    if k.iter().all(|&v| v == 0) {
        return Err(Error::invalid("frequency k = 0 is the trivial character"));
    }
    let (re, im) = points.iter().fold((0.0, 0.0), |(re, im), x| {
        let t = TAU * torus_phase(k, x);
        (re + t.cos(), im + t.sin())
    });
    let n = points.len() as f64;
    Ok((re.hypot(im) / n).min(1.0))
}

/// Weyl sum modulus of torus points at nonzero frequency `k`.
pub fn weyl_sum(points: &[GroupElement], k: &[i64]) -> Result<f64> {
    let coords = torus_coords(points, k.len())?;
    weyl_sum_coords(&coords, k)
}

/// Exact `D*_N` of points in `[0,1)`.
pub fn star_discrepancy_1d(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::invalid("need at least one point"));
    }
    if xs.iter().any(|x| !(0.0..1.0).contains(x)) {
        return Err(Error::invalid("points must lie in [0,1)"));
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    Ok(s.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let above = (i + 1) as f64 / n - x;
        let below = x - i as f64 / n;
        d.max(above).max(below)
    }))
}

/// Largest grid resolution accepted by [`star_discrepancy_grid`].
pub const MAX_GRID: usize = 64;

/// `max |#{x_n ∈ B}/N − vol(B)|` over anchored boxes `B = Π[0, a_i/G)`.
/// This is a lower bound on the star discrepancy, never the value itself.
pub fn star_discrepancy_grid(points: &[GroupElement], g: usize) -> Result<f64> {
    let dim = match points.first() {
        Some(GroupElement::Torus(v)) => v.len(),
        Some(other) => return Err(Error::invalid(format!("{other:?} is not a torus point"))),
        None => return Err(Error::invalid("need at least one point")),
    };
    match dim {
        2 | 3 => {}
        1 => return Err(Error::invalid("use the exact one-dimensional discrepancy for torus:1")),
        _ => {
            return Err(Error::Unsupported(format!(
                "grid discrepancy is implemented for dimensions 2 and 3, not {dim}"
            )))
        }
    }
    if g == 0 || g > MAX_GRID {
        return Err(Error::invalid(format!("grid resolution must be in 1..={MAX_GRID}")));
    }
    let coords = torus_coords(points, dim)?;
    let cells = g.pow(dim as u32);
    let mut hist = vec![0u64; cells];
    for x in &coords {
        let mut idx = 0;
        for &c in x.iter().rev() {
            idx = idx * g + ((c * g as f64) as usize).min(g - 1);
        }
        hist[idx] += 1;
    }
    // In-place prefix sums along each axis turn cell counts into box counts.
    let mut stride = 1;
    for _ in 0..dim {
        for i in 0..cells {
            if (i / stride) % g != 0 {
                hist[i] += hist[i - stride];
            }
        }
        stride *= g;
    }
    let n = coords.len() as f64;
    let mut worst = 0.0f64;
    for (i, &count) in hist.iter().enumerate() {
        let mut vol = 1.0;
        let mut j = i;
        for _ in 0..dim {
            vol *= ((j % g) + 1) as f64 / g as f64;
            j /= g;
        }
        worst = worst.max((count as f64 / n - vol).abs());
    }
    Ok(worst)
}

/// An irreducible character used as a test statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    /// `x ↦ e^{2πi k·x}` on a torus.
    Torus(Vec<i64>),
    /// `x ↦ e^{2πi j x / n}` on `cyclic:n`.
    Cyclic(u64),
    /// `x ↦ e^{2πi Σ j_i x_i / n_i}` on a product of cyclic groups.
    Product(Vec<u64>),
    /// Spin-`j` character of SU(2), stored as `2j`.
    Su2Spin(u32),
    /// Sign of a permutation.
    PermSign,
    /// Number of fixed points minus one.
    PermStandard,
}

impl Representation {
    fn check(&self, spec: &GroupSpec) -> Result<()> {
        let ok = match (self, spec) {
            (Representation::Torus(k), GroupSpec::Torus { dim }) => {
                if k.iter().all(|&v| v == 0) {
                    return Err(Error::invalid("k = 0 is the trivial character"));
                }
                k.len() == *dim
            }
            (Representation::Cyclic(j), GroupSpec::Cyclic { order }) => {
                if j % order == 0 {
                    return Err(Error::invalid("j ≡ 0 is the trivial character"));
                }
                true
            }
            (Representation::Product(j), GroupSpec::Product { orders }) => {
                if j.iter().zip(orders).all(|(a, n)| a % n == 0) {
                    return Err(Error::invalid("j ≡ 0 is the trivial character"));
                }
                j.len() == orders.len()
            }
            (Representation::Su2Spin(t), GroupSpec::Su2) => {
                if *t == 0 {
                    return Err(Error::invalid("spin 0 is the trivial character"));
                }
                true
            }
            (Representation::PermSign, GroupSpec::Permutation { degree }) => {
                if *degree < 2 {
                    return Err(Error::invalid("the sign of perm:1 is trivial"));
                }
                true
            }
            (Representation::PermStandard, GroupSpec::Permutation { degree }) => {
                if *degree < 2 {
                    return Err(Error::invalid("perm:1 has no standard representation"));
                }
                true
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("{self:?} is not a character of {spec}")))
        }
    }

    /// `sup |χ|`.
    pub fn sup(&self, spec: &GroupSpec) -> f64 {
        match (self, spec) {
            (Representation::Su2Spin(t), _) => f64::from(t + 1),
            (Representation::PermStandard, GroupSpec::Permutation { degree }) => *degree as f64 - 1.0,
            _ => 1.0,
        }
    }

    pub fn name(&self) -> String {
        let join = |v: &[String]| v.join("/");
        match self {
            Representation::Torus(k) => {
                format!("weyl k={}", join(&k.iter().map(i64::to_string).collect::<Vec<_>>()))
            }
            Representation::Cyclic(j) => format!("character j={j}"),
            Representation::Product(j) => {
                format!("character j={}", join(&j.iter().map(u64::to_string).collect::<Vec<_>>()))
            }
            Representation::Su2Spin(t) => {
                if t % 2 == 0 {
                    format!("spin {}", t / 2)
                } else {
                    format!("spin {t}/2")
                }
            }
            Representation::PermSign => "sign".into(),
            Representation::PermStandard => "standard".into(),
        }
    }
}

fn permutation_sign(p: &[u8]) -> f64 {
    let mut seen = vec![false; p.len()];
    let mut transpositions = 0;
    for start in 0..p.len() {
        let mut len = 0;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = p[i] as usize;
            len += 1;
        }
        if len > 0 {
            transpositions += len - 1;
        }
    }
    if transpositions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `e^{2πi t/n}` with `t` already reduced mod `n`.
fn root_of_unity(t: u128, n: u128) -> (f64, f64) {
    let a = TAU * (t as f64 / n as f64);
    (a.cos(), a.sin())
}

/// Character value as `(re, im)`; NaN for a point of another group.
fn character_value(rep: &Representation, spec: &GroupSpec, x: &GroupElement) -> (f64, f64) {
    match (rep, spec, x) {
        (Representation::Torus(k), _, GroupElement::Torus(v)) => {
            let a = TAU * torus_phase(k, v);
            (a.cos(), a.sin())
        }
        (Representation::Cyclic(j), GroupSpec::Cyclic { order }, GroupElement::Cyclic(a)) => {
            let n = u128::from(*order);
            root_of_unity(u128::from(*j) * u128::from(*a) % n, n)
        }
        (Representation::Product(j), GroupSpec::Product { orders }, GroupElement::Product(a)) => {
            // Σ j_i a_i / n_i over the common denominator lcm(n_i)
            let l = orders.iter().fold(1u128, |acc, &n| lcm(acc, u128::from(n)));
            let t = j
                .iter()
                .zip(a)
                .zip(orders)
                .fold(0u128, |acc, ((&ji, &ai), &ni)| {
                    let ni = u128::from(ni);
                    (acc + (u128::from(ji) * u128::from(ai) % ni) * (l / ni)) % l
                });
            root_of_unity(t, l)
        }
        (Representation::Su2Spin(t), _, GroupElement::Su2(q)) => (su2_character(*t, q.0[0]), 0.0),
        (Representation::PermSign, _, GroupElement::Permutation(p)) => (permutation_sign(p), 0.0),
        (Representation::PermStandard, _, GroupElement::Permutation(p)) => {
            let fixed = p.iter().enumerate().filter(|&(i, &v)| i == v as usize).count();
            (fixed as f64 - 1.0, 0.0)
        }
        _ => (f64::NAN, f64::NAN),
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm(a: u128, b: u128) -> u128 {
    a / gcd(a, b) * b
}

/// `|(1/N) Σ χ(x_n)|` for a nontrivial irreducible character `χ`.
pub fn character_average(spec: &GroupSpec, points: &[GroupElement], rep: &Representation) -> Result<f64> {
    rep.check(spec)?;
    if points.is_empty() {
        return Err(Error::invalid("need at least one point"));
    }
    let (re, im) = points.iter().try_fold((0.0, 0.0), |(re, im), x| {
        spec.check(x)?;
        let (a, b) = character_value(rep, spec, x);
        Ok::<_, Error>((re + a, im + b))
    })?;
    Ok(re.hypot(im) / points.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquidistConfig {
    /// Largest `max|k_i|` for torus Weyl tests and largest `j` for cyclic
    /// characters.
    pub freq_cutoff: u32,
    /// Largest `2j` for SU(2) characters.
    pub max_twice_spin: u32,
    /// CLT multiplier `c` in the thresholds `c/√N`.
    pub c: f64,
    /// Raise `c` to `√(c² + 2 ln T)` over the `T` character tests.
    pub bonferroni: bool,
    /// Grid resolution for the discrepancy test in dimensions 2 and 3.
    pub grid: usize,
    /// Below this sample size the verdict is inconclusive.
    pub min_n: usize,
    /// Variance used in the character thresholds `c·σ/√N`.
    pub variance: VarianceMode,
}

/// How the character thresholds account for dependence between points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMode {
    /// `σ = 1`, the Haar variance of a nontrivial irreducible character.
    /// Right for independent points.
    #[default]
    Iid,
    /// `σ²` estimated by batch means with batches of `⌊√N⌋` points, which
    /// tracks the long-run variance of a correlated orbit.
    BatchMeans,
}

impl std::fmt::Display for VarianceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VarianceMode::Iid => "iid",
            VarianceMode::BatchMeans => "batch-means",
        })
    }
}

impl std::str::FromStr for VarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "iid" => Ok(VarianceMode::Iid),
            "batch-means" => Ok(VarianceMode::BatchMeans),
            _ => Err(Error::parse("variance mode", s, "expected iid or batch-means")),
        }
    }
}

/// Batch-means estimate of the long-run variance of `χ(x_n)`:
/// `b · Σ|m_i − m̄|² / (B − 1)` over `B` batches of `b = ⌊√N⌋` points.
pub fn batch_means_variance(spec: &GroupSpec, points: &[GroupElement], rep: &Representation) -> Result<f64> {
    rep.check(spec)?;
    let b = (points.len() as f64).sqrt().floor() as usize;
    let batches = points.len().checked_div(b).unwrap_or(0);
    if batches < 2 {
        return Err(Error::invalid("batch means need at least 4 points"));
    }
    let means = points[..b * batches]
        .chunks(b)
        .map(|chunk| {
            let (re, im) = chunk.iter().try_fold((0.0, 0.0), |(re, im), x| {
                spec.check(x)?;
                let (a, c) = character_value(rep, spec, x);
                Ok::<_, Error>((re + a, im + c))
            })?;
            Ok((re / b as f64, im / b as f64))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let k = means.len() as f64;
    let (mr, mi) = means.iter().fold((0.0, 0.0), |(r, i), (a, c)| (r + a / k, i + c / k));
    let ss: f64 = means.iter().map(|(a, c)| (a - mr).powi(2) + (c - mi).powi(2)).sum();
    Ok(b as f64 * ss / (k - 1.0))
}

impl Default for EquidistConfig {
    fn default() -> Self {
        EquidistConfig {
            freq_cutoff: 8,
            max_twice_spin: 4,
            c: 3.0,
            bonferroni: true,
            grid: 32,
            min_n: 1000,
            variance: VarianceMode::Iid,
        }
    }
}

/// `D*_N ≤ c/√N` fails with probability at most `2 e^{−2c²}` for i.i.d.
/// uniform points; `c = 2.5` gives about `7·10^{−6}`.
pub const DISCREPANCY_1D_CONSTANT: f64 = 2.5;

/// Product characters tested at most.
const MAX_PRODUCT_CHARACTERS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquidistReport {
    pub n: usize,
    pub seed: u64,
    pub tests: Vec<TestRecord>,
    pub verdict: Verdict,
}

impl EquidistReport {
    /// The verdict implied by the records, `min_n` being the configured
    /// minimum sample size.
    pub fn verdict_from(tests: &[TestRecord], n: usize, min_n: usize) -> Verdict {
        if tests.iter().any(|t| !t.pass) {
            if n < min_n {
                Verdict::Inconclusive
            } else {
                Verdict::Fail
            }
        } else if n < min_n || tests.is_empty() {
            Verdict::Inconclusive
        } else {
            Verdict::Pass
        }
    }

    pub fn test(&self, name: &str) -> Option<&TestRecord> {
        self.tests.iter().find(|t| t.name == name)
    }
}

/// The characters `equidist_report` uses for `spec`.
pub fn default_representations(spec: &GroupSpec, cfg: &EquidistConfig) -> Vec<Representation> {
    let cutoff = i64::from(cfg.freq_cutoff);
    match spec {
        GroupSpec::Torus { dim } => {
            let mut out = Vec::new();
            let mut k = vec![-cutoff; *dim];
            'outer: loop {
                if k.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0) {
                    out.push(Representation::Torus(k.clone()));
                }
                let mut i = *dim;
                loop {
                    if i == 0 {
                        break 'outer;
                    }
                    i -= 1;
                    if k[i] < cutoff {
                        k[i] += 1;
                        break;
                    }
                    k[i] = -cutoff;
                }
            }
            // order by height, then lexicographically
            out.sort_by_key(|r| match r {
                Representation::Torus(k) => (k.iter().map(|v| v.abs()).max().unwrap_or(0), k.clone()),
                _ => unreachable!(),
            });
            out
        }
        GroupSpec::Cyclic { order } => {
            // χ_j and χ_{n-j} have equal modulus; keep j ≤ n/2
            (1..=(*order / 2).min(u64::from(cfg.freq_cutoff)))
                .map(Representation::Cyclic)
                .collect()
        }
        GroupSpec::Product { orders } => {
            let total: u64 = orders.iter().product();
            (1..total)
                .map(|mut i| {
                    let mut j = Vec::with_capacity(orders.len());
                    for &n in orders.iter().rev() {
                        j.push(i % n);
                        i /= n;
                    }
                    j.reverse();
                    Representation::Product(j)
                })
                .take(MAX_PRODUCT_CHARACTERS)
                .collect()
        }
        GroupSpec::Permutation { degree } => match degree {
            0 | 1 => vec![],
            2 => vec![Representation::PermSign],
            _ => vec![Representation::PermSign, Representation::PermStandard],
        },
        GroupSpec::Su2 => (1..=cfg.max_twice_spin).map(Representation::Su2Spin).collect(),
    }
}

/// Effective CLT multiplier for `tests` simultaneous character tests.
pub fn adjusted_c(cfg: &EquidistConfig, tests: usize) -> f64 {
    if cfg.bonferroni && tests > 1 {
        (cfg.c * cfg.c + 2.0 * (tests as f64).ln()).sqrt()
    } else {
        cfg.c
    }
}

/// Chi-square upper quantile by the Wilson–Hilferty cube approximation at
/// standard-normal level `z`.
pub fn chi_square_quantile(df: f64, z: f64) -> f64 {
    let a = 2.0 / (9.0 * df);
    df * (1.0 - a + z * a.sqrt()).powi(3)
}

/// Runs every applicable test and combines them.
///
/// Character tests use `|average| ≤ c'σ/√N`; a nontrivial irreducible
/// character has unit second moment under Haar measure, so `σ = 1` for
/// independent points (see [`VarianceMode`]). The torus adds
/// an exact discrepancy test in dimension 1 and a grid test in dimensions
/// 2 and 3; finite groups add a chi-square test on element counts when every
/// expected count is at least 5.
pub fn equidist_report(
    spec: &GroupSpec,
    points: &[GroupElement],
    cfg: &EquidistConfig,
    seed: u64,
) -> Result<EquidistReport> {
    if points.is_empty() {
        return Err(Error::invalid("need at least one point"));
    }
    for p in points {
        spec.check(p)?;
    }
    let n = points.len();
    let sqrt_n = (n as f64).sqrt();
    let reps = default_representations(spec, cfg);
    let c = adjusted_c(cfg, reps.len() + usize::from(spec.is_finite()));
    let mut tests: Vec<TestRecord> = reps
        .par_iter()
        .map(|r| {
            let value = character_average(spec, points, r)?;
            let sigma = match cfg.variance {
                VarianceMode::Iid => 1.0,
                VarianceMode::BatchMeans => batch_means_variance(spec, points, r)?.sqrt(),
            };
            let threshold = c * sigma / sqrt_n;
            Ok(TestRecord {
                name: r.name(),
                value,
                threshold,
                pass: value <= threshold,
            })
        })
        .collect::<Result<_>>()?;

    match spec {
        GroupSpec::Torus { dim: 1 } => {
            let xs: Vec<f64> = points.iter().map(|p| p.as_torus().expect("checked")[0]).collect();
            let value = star_discrepancy_1d(&xs)?;
            let threshold = DISCREPANCY_1D_CONSTANT / sqrt_n;
            tests.push(TestRecord {
                name: "star discrepancy".into(),
                value,
                threshold,
                pass: value <= threshold,
            });
        }
        GroupSpec::Torus { dim: 2 | 3 } => {
            let value = star_discrepancy_grid(points, cfg.grid)?;
            let threshold = cfg.c * (cfg.grid as f64).ln().sqrt() / sqrt_n;
            tests.push(TestRecord {
                name: format!("grid discrepancy G={}", cfg.grid),
                value,
                threshold,
                pass: value <= threshold,
            });
        }
        s if s.is_finite() => {
            let order = s.order().expect("finite");
            if order >= 2 && n as f64 / order as f64 >= 5.0 && order <= 1 << 20 {
                let mut counts = vec![0u64; order as usize];
                for p in points {
                    counts[s.index_of(p)? as usize] += 1;
                }
                let expected = n as f64 / order as f64;
                let value: f64 = counts
                    .iter()
                    .map(|&o| (o as f64 - expected).powi(2) / expected)
                    .sum();
                let threshold = chi_square_quantile((order - 1) as f64, c);
                tests.push(TestRecord {
                    name: "chi-square".into(),
                    value,
                    threshold,
                    pass: value <= threshold,
                });
            }
        }
        _ => {}
    }

    let verdict = EquidistReport::verdict_from(&tests, n, cfg.min_n);
    Ok(EquidistReport {
        n,
        seed,
        tests,
        verdict,
    })
}

/// Largest character-test value on prefixes of length `10^2, 10^3, ...` up to
/// `N`, as `(N, statistic)` rows for a convergence plot.
pub fn convergence_curve(
    spec: &GroupSpec,
    points: &[GroupElement],
    cfg: &EquidistConfig,
) -> Result<Vec<(usize, f64)>> {
    let reps = default_representations(spec, cfg);
    let mut out = Vec::new();
    let mut len = 100usize;
    while len <= points.len() && len <= 1_000_000 {
        let prefix = &points[..len];
        let stat = reps
            .iter()
            .map(|r| character_average(spec, prefix, r))
            .try_fold(0.0f64, |m, v| v.map(|v| m.max(v)))?;
        out.push((len, stat));
        len *= 10;
    }
    Ok(out)
}
