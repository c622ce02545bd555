//! Finite atomic probability measures on `X`, the weak* metric
//! `d(σ,ν) = Σ_n |∫f_n dσ − ∫f_n dν| / (2ⁿ‖f_n‖)`, pushforwards, Følner
//! averages over discrete Følner sets, and greedy convex combinations of word
//! maps that push every probe measure close to a target.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actions::{ActionKind, ActionSpec, GenIndex, Word};
use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::groups::{GroupElement, GroupSpec};
use crate::rng;

/// Default truncation of the weak* series.
pub const DEFAULT_TRUNCATION: usize = 20;

/// The enumerated family `f_1, f_2, ...` behind the weak* metric.
///
/// * Torus: `cos 2πk·x` then `sin 2πk·x` for each `k` in the half lattice
///   (first nonzero coordinate positive), by height `max|k_i|`, then
///   lexicographically. Separates probability measures by uniqueness of
///   Fourier coefficients.
/// * Finite groups: indicators of the elements in enumeration order. The
///   family is finite and separating.
/// * SU(2): the characters of spin ½ through 2, then the coordinate monomials
///   by degree. Polynomials are dense in `C(S³)`, so the family separates.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFunctionFamily {
    space: GroupSpec,
}

impl DenseFunctionFamily {
    pub fn new(space: GroupSpec) -> Result<Self> {
        space.validate()?;
        Ok(DenseFunctionFamily { space })
    }

    pub fn space(&self) -> &GroupSpec {
        &self.space
    }

    /// Number of functions, `None` if infinite.
    pub fn total_len(&self) -> Option<u64> {
        self.space.order()
    }

    /// `f_1, ..., f_m` (fewer if the family is finite and shorter).
    pub fn first(&self, m: usize) -> Vec<TestFunction> {
        let mut out = Vec::with_capacity(m);
        match &self.space {
            GroupSpec::Torus { dim } => {
                let mut h = 1i64;
                while out.len() < m {
                    for k in half_lattice_shell(*dim, h) {
                        out.push(TestFunction::TorusCos(k.clone()));
                        out.push(TestFunction::TorusSin(k));
                    }
                    h += 1;
                }
            }
            GroupSpec::Su2 => {
                for twice_spin in 1..=4 {
                    out.push(TestFunction::Su2Character { twice_spin });
                }
                let mut degree = 1u32;
                while out.len() < m {
                    for a in 0..=degree {
                        for b in 0..=degree - a {
                            for c in 0..=degree - a - b {
                                let d = degree - a - b - c;
                                out.push(TestFunction::Su2Monomial([a, b, c, d]));
                            }
                        }
                    }
                    degree += 1;
                }
            }
            spec => {
                let n = spec.order().unwrap_or(0).min(m as u64);
                for i in 0..n {
                    out.push(TestFunction::Indicator(
                        spec.element_at(i).expect("index below order"),
                    ));
                }
            }
        }
        out.truncate(m);
        out
    }

    /// `f_n`, 1-based.
    pub fn function(&self, n: usize) -> Option<TestFunction> {
        if n == 0 {
            return None;
        }
        self.first(n).into_iter().nth(n - 1)
    }

    /// Bound on the omitted terms `n > m`: each term is at most `2/2ⁿ`.
    pub fn tail_bound(&self, m: usize) -> f64 {
        match self.total_len() {
            Some(len) if len <= m as u64 => 0.0,
            _ => 2f64.powi(1 - m as i32),
        }
    }
}

/// Vectors `k ∈ ℤ^d` with `max|k_i| = h` and first nonzero entry positive,
/// in lexicographic order.
fn half_lattice_shell(dim: usize, h: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    let mut k = vec![-h; dim];
    loop {
        let first = k.iter().find(|&&v| v != 0);
        if k.iter().any(|v| v.abs() == h) && first.is_some_and(|&v| v > 0) {
            out.push(k.clone());
        }
        // odometer
        let mut i = dim;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if k[i] < h {
                k[i] += 1;
                break;
            }
            k[i] = -h;
        }
    }
}

/// `Σ |a_n − b_n| / (2ⁿ ‖f_n‖)` for `n = 1..`.
fn weighted_l1(scales: &[f64], a: &[f64], b: &[f64]) -> f64 {
    scales
        .iter()
        .zip(a.iter().zip(b))
        .map(|(s, (x, y))| (x - y).abs() * s)
        .sum()
}

fn scales(fns: &[TestFunction]) -> Vec<f64> {
    fns.iter()
        .enumerate()
        .map(|(i, f)| 1.0 / (2f64.powi(i as i32 + 1) * f.sup_norm()))
        .collect()
}

/// A probability measure with finitely many atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    space: GroupSpec,
    atoms: Vec<(GroupElement, f64)>,
}

const MASS_TOL: f64 = 1e-9;

impl EmpiricalMeasure {
    /// Weights must be non-negative and sum to 1 within `1e-9`; they are
    /// then rescaled to sum to 1.
    pub fn new(space: GroupSpec, atoms: Vec<(GroupElement, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("a measure needs at least one atom"));
        }
        let mut total = 0.0;
        for (x, w) in &atoms {
            space.check(x)?;
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::invalid(format!("atom weight {w} is not a finite non-negative number")));
            }
            total += w;
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        let atoms = atoms.into_iter().map(|(x, w)| (x, w / total)).collect();
        Ok(EmpiricalMeasure { space, atoms })
    }

    pub fn dirac(space: GroupSpec, x: GroupElement) -> Result<Self> {
        EmpiricalMeasure::new(space, vec![(x, 1.0)])
    }

    /// Equal weights on the given points.
    pub fn uniform(space: GroupSpec, points: Vec<GroupElement>) -> Result<Self> {
        let w = 1.0 / points.len().max(1) as f64;
        EmpiricalMeasure::new(space, points.into_iter().map(|x| (x, w)).collect())
    }

    /// Discretized Haar measure: the midpoint grid `((j+½)/g)` on a torus,
    /// all elements with equal weight on a finite group.
    pub fn lebesgue_grid(space: &GroupSpec, g: usize) -> Result<Self> {
        match space {
            GroupSpec::Torus { dim } => {
                if g == 0 {
                    return Err(Error::invalid("grid resolution must be ≥ 1"));
                }
                let count = g
                    .checked_pow(*dim as u32)
                    .filter(|&c| c <= 1 << 24)
                    .ok_or_else(|| Error::invalid("grid has too many points"))?;
                let pts = (0..count)
                    .map(|mut i| {
                        let mut v = Vec::with_capacity(*dim);
                        for _ in 0..*dim {
                            v.push(((i % g) as f64 + 0.5) / g as f64);
                            i /= g;
                        }
                        GroupElement::Torus(v)
                    })
                    .collect();
                EmpiricalMeasure::uniform(space.clone(), pts)
            }
            GroupSpec::Su2 => Err(Error::Unsupported(
                "no finite grid reference for su2; use exact Haar integrals".into(),
            )),
            spec => {
                let n = spec.order().expect("finite");
                if n > 1 << 24 {
                    return Err(Error::invalid("group too large to enumerate"));
                }
                let pts = (0..n).map(|i| spec.element_at(i)).collect::<Result<_>>()?;
                EmpiricalMeasure::uniform(spec.clone(), pts)
            }
        }
    }

    /// `Σ λ_i σ_i`; the `λ_i` must be a probability vector.
    pub fn mix(parts: &[(f64, &EmpiricalMeasure)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("empty mixture"))?
            .1;
        let mut atoms = Vec::new();
        for (lambda, m) in parts {
            if m.space != first.space {
                return Err(Error::invalid("mixture of measures on different spaces"));
            }
            atoms.extend(m.atoms.iter().map(|(x, w)| (x.clone(), lambda * w)));
        }
        EmpiricalMeasure::new(first.space.clone(), atoms)
    }

    pub fn space(&self) -> &GroupSpec {
        &self.space
    }

    pub fn atoms(&self) -> &[(GroupElement, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|(_, w)| w).sum()
    }

    pub fn integrate(&self, f: &TestFunction) -> f64 {
        self.atoms.iter().map(|(x, w)| w * f.eval(x)).sum()
    }

    /// `(∫f_1 dσ, ..., ∫f_m dσ)`.
    pub fn moments(&self, fns: &[TestFunction]) -> Vec<f64> {
        fns.iter().map(|f| self.integrate(f)).collect()
    }
}

/// Truncated weak* distance together with the bound on what was cut off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakStarDistance {
    pub value: f64,
    pub tail_bound: f64,
}

impl WeakStarDistance {
    /// Upper end of the interval containing the full series.
    pub fn upper(&self) -> f64 {
        self.value + self.tail_bound
    }
}

/// `Σ_{n ≤ m} |∫f_n dσ − ∫f_n dν| / (2ⁿ‖f_n‖)`, plus the tail bound.
pub fn weakstar_distance(
    family: &DenseFunctionFamily,
    sigma: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    m: usize,
) -> Result<WeakStarDistance> {
    if m == 0 {
        return Err(Error::invalid("truncation must be ≥ 1"));
    }
    if sigma.space != family.space || nu.space != family.space {
        return Err(Error::invalid("measures and function family live on different spaces"));
    }
    let fns = family.first(m);
    Ok(WeakStarDistance {
        value: weighted_l1(&scales(&fns), &sigma.moments(&fns), &nu.moments(&fns)),
        tail_bound: family.tail_bound(m),
    })
}

/// Distance to the Haar measure using exact integrals of the family.
pub fn weakstar_distance_to_haar(
    family: &DenseFunctionFamily,
    sigma: &EmpiricalMeasure,
    m: usize,
) -> Result<WeakStarDistance> {
    if m == 0 {
        return Err(Error::invalid("truncation must be ≥ 1"));
    }
    let fns = family.first(m);
    let haar = fns
        .iter()
        .map(|f| f.haar_integral(&family.space))
        .collect::<Result<Vec<_>>>()?;
    Ok(WeakStarDistance {
        value: weighted_l1(&scales(&fns), &sigma.moments(&fns), &haar),
        tail_bound: family.tail_bound(m),
    })
}

fn check_action_space(action: &ActionSpec, sigma: &EmpiricalMeasure) -> Result<()> {
    if action.space() != sigma.space {
        return Err(Error::invalid(format!(
            "measure lives on {}, action on {}",
            sigma.space,
            action.space()
        )));
    }
    Ok(())
}

/// Atoms move by `Φ_w`, weights are unchanged.
pub fn push_forward(action: &ActionSpec, w: &Word, sigma: &EmpiricalMeasure) -> Result<EmpiricalMeasure> {
    check_action_space(action, sigma)?;
    let atoms = sigma
        .atoms
        .iter()
        .map(|(x, wt)| Ok((action.apply_word(w, x)?, *wt)))
        .collect::<Result<_>>()?;
    Ok(EmpiricalMeasure {
        space: sigma.space.clone(),
        atoms,
    })
}

/// A finite subset of the acting semigroup.
#[derive(Debug, Clone, PartialEq)]
pub enum FolnerSet {
    Words(Vec<Word>),
    /// Elements `g` acting by `x ↦ x · g` (translations and rotations).
    Elements(Vec<GroupElement>),
}

impl FolnerSet {
    /// `{e, g, g², ..., g^{m-1}}` for the generator in zero-based `slot`,
    /// built with one group operation per element.
    pub fn interval(action: &ActionSpec, slot: usize, m: usize) -> Result<FolnerSet> {
        action.require_invertible()?;
        if slot >= action.generator_count() {
            return Err(Error::invalid(format!("no generator in slot {slot}")));
        }
        let mut out = Vec::with_capacity(m);
        let mut g = action.space().identity();
        for _ in 0..m {
            let next = action.apply_slot(slot, &g)?;
            out.push(std::mem::replace(&mut g, next));
        }
        Ok(FolnerSet::Elements(out))
    }

    pub fn len(&self) -> usize {
        match self {
            FolnerSet::Words(w) => w.len(),
            FolnerSet::Elements(e) => e.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `(1/|F|) Σ_{g ∈ F} g_* ν`.
pub fn folner_average(action: &ActionSpec, set: &FolnerSet, nu: &EmpiricalMeasure) -> Result<EmpiricalMeasure> {
    check_action_space(action, nu)?;
    if set.is_empty() {
        return Err(Error::invalid("Følner set is empty"));
    }
    let scale = 1.0 / set.len() as f64;
    let mut atoms = Vec::with_capacity(set.len() * nu.len());
    match set {
        FolnerSet::Words(words) => {
            for w in words {
                for (x, wt) in &nu.atoms {
                    atoms.push((action.apply_word(w, x)?, wt * scale));
                }
            }
        }
        FolnerSet::Elements(elems) => {
            if matches!(action.kind(), ActionKind::DoublingFixture) {
                return Err(Error::invalid("the doubling fixture has no group elements to average over"));
            }
            let space = action.space();
            for g in elems {
                space.check(g)?;
                for (x, wt) in &nu.atoms {
                    atoms.push((space.compose(x, g)?, wt * scale));
                }
            }
        }
    }
    Ok(EmpiricalMeasure {
        space: nu.space.clone(),
        atoms,
    })
}

/// Distance from the Følner average of each probe to `reference`, computed
/// in parallel; results follow probe order.
pub fn folner_uniformity(
    action: &ActionSpec,
    set: &FolnerSet,
    probes: &[EmpiricalMeasure],
    reference: &EmpiricalMeasure,
    family: &DenseFunctionFamily,
    m: usize,
) -> Result<Vec<WeakStarDistance>> {
    probes
        .par_iter()
        .map(|nu| weakstar_distance(family, &folner_average(action, set, nu)?, reference, m))
        .collect()
}

/// A convex combination `Σ λ_k Φ_{w_k}` of word maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexWordCombination {
    terms: Vec<WordWeight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordWeight {
    pub indices: Word,
    pub weight: f64,
}

impl ConvexWordCombination {
    pub fn new(terms: Vec<(Word, f64)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::invalid("a convex combination needs at least one word"));
        }
        if terms.iter().any(|(_, l)| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::invalid("weights must be positive"));
        }
        let total: f64 = terms.iter().map(|(_, l)| l).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(ConvexWordCombination {
            terms: terms
                .into_iter()
                .map(|(indices, l)| WordWeight {
                    indices,
                    weight: l / total,
                })
                .collect(),
        })
    }

    /// Equal weights; repeated words are merged.
    pub fn uniform(words: Vec<Word>) -> Result<Self> {
        let n = words.len() as f64;
        let mut terms: Vec<(Word, f64)> = Vec::new();
        for w in words {
            match terms.iter_mut().find(|(v, _)| *v == w) {
                Some((_, l)) => *l += 1.0 / n,
                None => terms.push((w, 1.0 / n)),
            }
        }
        ConvexWordCombination::new(terms)
    }

    /// `(1/m) Σ_{j=1..m} Φ_i^j`: the Birkhoff average of one generator.
    pub fn birkhoff(index: u64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("m must be ≥ 1"));
        }
        let words = (1..=m).map(|j| Word::repeat(index, j)).collect::<Result<_>>()?;
        ConvexWordCombination::uniform(words)
    }

    pub fn terms(&self) -> &[WordWeight] {
        &self.terms
    }

    /// `ρ(σ) = Σ λ_k (Φ_{w_k})_* σ`.
    pub fn apply(&self, action: &ActionSpec, sigma: &EmpiricalMeasure) -> Result<EmpiricalMeasure> {
        check_action_space(action, sigma)?;
        let mut atoms = Vec::with_capacity(self.terms.len() * sigma.len());
        for t in &self.terms {
            for (x, w) in &sigma.atoms {
                atoms.push((action.apply_word(&t.indices, x)?, t.weight * w));
            }
        }
        Ok(EmpiricalMeasure {
            space: sigma.space.clone(),
            atoms,
        })
    }

    /// `max_σ d(ρ(σ), μ)` over the probes.
    pub fn worst_distance(
        &self,
        action: &ActionSpec,
        family: &DenseFunctionFamily,
        target: &EmpiricalMeasure,
        probes: &[EmpiricalMeasure],
        m: usize,
    ) -> Result<f64> {
        let ds = probes
            .par_iter()
            .map(|p| weakstar_distance(family, &self.apply(action, p)?, target, m).map(|d| d.value))
            .collect::<Result<Vec<_>>>()?;
        Ok(ds.into_iter().fold(0.0, f64::max))
    }
}

/// Probe measures standing in for "every σ ∈ M(X)": Diracs on a
/// low-discrepancy set, plus random mixtures of three of them.
pub fn default_probes(space: &GroupSpec, diracs: usize, mixtures: usize, seed: u64) -> Result<Vec<EmpiricalMeasure>> {
    if diracs == 0 {
        return Err(Error::invalid("need at least one probe point"));
    }
    let points: Vec<GroupElement> = match space {
        GroupSpec::Torus { dim } => {
            // Additive recurrence with powers of the generalized golden ratio.
            let d = *dim as i32;
            let mut phi = 2.0f64;
            for _ in 0..64 {
                phi = (1.0 + phi).powf(1.0 / f64::from(d + 1));
            }
            let alpha: Vec<f64> = (1..=d).map(|j| phi.powi(-j)).collect();
            (0..diracs)
                .map(|i| {
                    GroupElement::Torus(
                        alpha
                            .iter()
                            .map(|a| crate::groups::wrap_unit(0.5 + i as f64 * a))
                            .collect(),
                    )
                })
                .collect()
        }
        GroupSpec::Su2 => {
            let mut r = rng::stream_rng(seed, rng::module::PROBES, 0);
            (0..diracs).map(|_| space.haar_sample(&mut r)).collect()
        }
        spec => {
            let n = spec.order().expect("finite");
            let count = (diracs as u64).min(n);
            (0..count)
                .map(|i| spec.element_at(i * n / count))
                .collect::<Result<_>>()?
        }
    };
    let mut out: Vec<EmpiricalMeasure> = points
        .iter()
        .map(|x| EmpiricalMeasure::dirac(space.clone(), x.clone()))
        .collect::<Result<_>>()?;
    let mut r = rng::stream_rng(seed, rng::module::PROBES, 1);
    let pick = points.len().min(3);
    for _ in 0..mixtures {
        let idx = sample(&mut r, points.len(), pick);
        let raw: Vec<f64> = (0..pick).map(|_| r.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let atoms = idx
            .iter()
            .zip(&raw)
            .map(|(i, w)| (points[i].clone(), w / total))
            .collect();
        out.push(EmpiricalMeasure::new(space.clone(), atoms)?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ApproxConfig {
    /// Number of greedy rounds `m`.
    pub stages: usize,
    /// Longest candidate word `L`.
    pub max_len: usize,
    /// Truncation of the weak* series.
    pub truncation: usize,
    /// Probe measures; `None` uses [`default_probes`] with 100 Diracs and
    /// 10 mixtures.
    pub probes: Option<Vec<EmpiricalMeasure>>,
    pub seed: u64,
    /// Largest candidate pool kept after de-duplication.
    pub pool_cap: usize,
    /// Passes of single-word replacement after each added word.
    pub max_sweeps: usize,
}

impl ApproxConfig {
    pub fn new(stages: usize, max_len: usize, seed: u64) -> ApproxConfig {
        ApproxConfig {
            stages,
            max_len,
            truncation: DEFAULT_TRUNCATION,
            probes: None,
            seed,
            pool_cap: 2048,
            max_sweeps: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxStage {
    pub m: usize,
    pub worst_probe_distance: f64,
    pub tail_bound: f64,
    pub words: Vec<WordWeight>,
    /// Whether this round beat every earlier round. When false the stage
    /// repeats the best earlier combination.
    pub improved: bool,
}

impl ApproxStage {
    pub fn combination(&self) -> ConvexWordCombination {
        ConvexWordCombination {
            terms: self.words.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxResult {
    pub stages: Vec<ApproxStage>,
    /// The last round did not improve on the best earlier one.
    pub stalled: bool,
    pub pool_size: usize,
    pub probe_count: usize,
}

struct Candidate {
    word: Word,
    /// Probe-major moments, `probe * M + n`.
    moments: Vec<f64>,
}

struct Objective<'a> {
    target: &'a [f64],
    scales: &'a [f64],
    m: usize,
}

impl Objective<'_> {
    /// Worst probe distance of the uniform combination with moment sums
    /// `sums` over `t` words, optionally swapping `minus` for `plus`.
    fn eval(&self, sums: &[f64], minus: Option<&[f64]>, plus: &[f64], t: f64) -> f64 {
        let mut worst = 0.0f64;
        for (p, chunk) in sums.chunks(self.m).enumerate() {
            let base = p * self.m;
            let mut d = 0.0;
            for n in 0..self.m {
                let mut s = chunk[n] + plus[base + n];
                if let Some(mi) = minus {
                    s -= mi[base + n];
                }
                d += (s / t - self.target[n]).abs() * self.scales[n];
            }
            worst = worst.max(d);
        }
        worst
    }
}

/// Index of the candidate minimizing `score`, ties to the lowest index.
fn argmin<F: Fn(usize) -> f64 + Sync>(len: usize, score: F) -> (usize, f64) {
    (0..len)
        .into_par_iter()
        .map(|i| (i, score(i)))
        .reduce(
            || (usize::MAX, f64::INFINITY),
            |a, b| if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a },
        )
}

/// Builds `ρ_1, ..., ρ_m` greedily.
///
/// Candidates are words of length `1..=L`, enumerated breadth-first and
/// de-duplicated by their moments on the probes. Each round adds the word
/// whose inclusion (all words weighted equally, repeats allowed) gives the
/// smallest worst probe distance, then tries single-word replacements until
/// none helps. Each stage records the best combination found so far, so the
/// recorded distances never increase.
pub fn convex_word_approx(
    action: &ActionSpec,
    family: &DenseFunctionFamily,
    target: &EmpiricalMeasure,
    cfg: &ApproxConfig,
) -> Result<ApproxResult> {
    if cfg.stages == 0 || cfg.max_len == 0 || cfg.truncation == 0 {
        return Err(Error::invalid("stages, word length cap and truncation must all be ≥ 1"));
    }
    check_action_space(action, target)?;
    if family.space() != target.space() {
        return Err(Error::invalid("function family and target live on different spaces"));
    }
    let space = action.space();
    let probes = match &cfg.probes {
        Some(p) if !p.is_empty() => p.clone(),
        Some(_) => return Err(Error::invalid("probe set is empty")),
        None => default_probes(&space, 100, 10, cfg.seed)?,
    };
    for p in &probes {
        check_action_space(action, p)?;
    }
    let fns = family.first(cfg.truncation);
    let m = fns.len();
    let scales = scales(&fns);
    let target_moments = target.moments(&fns);

    // Flatten probe atoms so each candidate stores one image per atom.
    let mut points = Vec::new();
    let mut layout: Vec<Vec<(usize, f64)>> = Vec::new();
    for p in &probes {
        layout.push(
            p.atoms()
                .iter()
                .map(|(x, w)| {
                    points.push(x.clone());
                    (points.len() - 1, *w)
                })
                .collect(),
        );
    }
    let moments_of = |images: &[GroupElement]| -> Vec<f64> {
        let values: Vec<Vec<f64>> = fns
            .iter()
            .map(|f| images.iter().map(|x| f.eval(x)).collect())
            .collect();
        let mut out = vec![0.0; layout.len() * m];
        for (pi, atoms) in layout.iter().enumerate() {
            for (n, vals) in values.iter().enumerate() {
                out[pi * m + n] = atoms.iter().map(|&(i, w)| w * vals[i]).sum();
            }
        }
        out
    };

    // Breadth-first candidate pool.
    let k = action.generator_count();
    let mut pool: Vec<Candidate> = Vec::new();
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut frontier: Vec<(Word, Vec<GroupElement>)> = vec![];
    'levels: for len in 1..=cfg.max_len {
        let parents: Vec<(Option<Word>, Vec<GroupElement>)> = if len == 1 {
            vec![(None, points.clone())]
        } else {
            frontier.drain(..).map(|(w, im)| (Some(w), im)).collect()
        };
        let children: Vec<(Word, Vec<GroupElement>, Vec<f64>)> = parents
            .par_iter()
            .flat_map_iter(|(w, images)| {
                (0..k).map(move |slot| {
                    let symbol = GenIndex::Finite(slot as u64 + 1);
                    let word = match w {
                        Some(w) => {
                            let mut w = w.clone();
                            w.push(symbol);
                            w
                        }
                        None => Word::new(vec![symbol]).expect("nonempty"),
                    };
                    (word, images, slot)
                })
            })
            .map(|(word, images, slot)| {
                let next = images
                    .iter()
                    .map(|x| action.apply_slot(slot, x))
                    .collect::<Result<Vec<_>>>()?;
                let mom = moments_of(&next);
                Ok((word, next, mom))
            })
            .collect::<Result<_>>()?;
        for (word, images, mom) in children {
            let signature: Vec<i64> = mom.iter().map(|v| (v * 1e9).round() as i64).collect();
            if seen.insert(signature) {
                pool.push(Candidate {
                    word: word.clone(),
                    moments: mom,
                });
                frontier.push((word, images));
                if pool.len() >= cfg.pool_cap {
                    break 'levels;
                }
            }
        }
        if frontier.is_empty() {
            break;
        }
    }

    let objective = Objective {
        target: &target_moments,
        scales: &scales,
        m,
    };
    let width = layout.len() * m;
    let mut sums = vec![0.0; width];
    let mut chosen: Vec<usize> = Vec::new();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut stages = Vec::with_capacity(cfg.stages);
    let mut last_improved = false;

    for stage in 1..=cfg.stages {
        let t = chosen.len() as f64 + 1.0;
        let (pick, _) = argmin(pool.len(), |c| objective.eval(&sums, None, &pool[c].moments, t));
        add(&mut sums, &pool[pick].moments);
        chosen.push(pick);
        let mut current = objective.eval(&sums, None, &vec![0.0; width], t);

        for _ in 0..cfg.max_sweeps {
            let mut changed = false;
            for i in 0..chosen.len() {
                let old = &pool[chosen[i]].moments;
                let (c, v) = argmin(pool.len(), |c| {
                    objective.eval(&sums, Some(old), &pool[c].moments, t)
                });
                if v < current - 1e-15 && c != chosen[i] {
                    sub(&mut sums, &pool[chosen[i]].moments);
                    add(&mut sums, &pool[c].moments);
                    chosen[i] = c;
                    current = v;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        last_improved = best.as_ref().is_none_or(|(b, _)| current < *b);
        if last_improved {
            best = Some((current, chosen.clone()));
        }
        let (value, picks) = best.as_ref().expect("set above");
        let words = picks.iter().map(|&c| pool[c].word.clone()).collect();
        stages.push(ApproxStage {
            m: stage,
            worst_probe_distance: *value,
            tail_bound: family.tail_bound(cfg.truncation),
            words: ConvexWordCombination::uniform(words)?.terms,
            improved: last_improved,
        });
    }

    Ok(ApproxResult {
        stages,
        stalled: !last_improved,
        pool_size: pool.len(),
        probe_count: probes.len(),
    })
}

fn add(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

fn sub(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x -= y);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle() -> GroupSpec {
        GroupSpec::torus(1).unwrap()
    }

    #[test]
    fn circle_family_order() {
        let fam = DenseFunctionFamily::new(circle()).unwrap();
        let f = fam.first(4);
        assert_eq!(f[0], TestFunction::TorusCos(vec![1]));
        assert_eq!(f[1], TestFunction::TorusSin(vec![1]));
        assert_eq!(f[2], TestFunction::TorusCos(vec![2]));
        assert_eq!(fam.function(4), Some(TestFunction::TorusSin(vec![2])));
    }

    #[test]
    fn torus2_shell_is_half_lattice() {
        let shell = half_lattice_shell(2, 1);
        assert_eq!(shell, vec![vec![0, 1], vec![1, -1], vec![1, 0], vec![1, 1]]);
        // (2h+1)^d - (2h-1)^d vectors per shell, half of them kept
        assert_eq!(half_lattice_shell(3, 2).len(), (125 - 27) / 2);
    }

    #[test]
    fn finite_family_has_no_tail_when_exhausted() {
        let fam = DenseFunctionFamily::new(GroupSpec::cyclic(6).unwrap()).unwrap();
        assert_eq!(fam.first(20).len(), 6);
        assert_eq!(fam.tail_bound(20), 0.0);
        assert_eq!(fam.tail_bound(3), 0.25);
    }

    #[test]
    fn dirac_distance_closed_form() {
        let fam = DenseFunctionFamily::new(circle()).unwrap();
        let a = EmpiricalMeasure::dirac(circle(), GroupElement::circle(0.0)).unwrap();
        let b = EmpiricalMeasure::dirac(circle(), GroupElement::circle(0.5)).unwrap();
        let d = weakstar_distance(&fam, &a, &b, 20).unwrap();
        // only cos 2πkx with odd k differ, by 2, at n = 2k - 1
        let expected: f64 = (1..=10).filter(|k| k % 2 == 1).map(|k| 2.0 / 2f64.powi(2 * k - 1)).sum();
        assert!((d.value - expected).abs() < 1e-14);
        assert_eq!(d.tail_bound, 2f64.powi(-19));
    }

    #[test]
    fn grid_reference_matches_haar() {
        let fam = DenseFunctionFamily::new(circle()).unwrap();
        let grid = EmpiricalMeasure::lebesgue_grid(&circle(), 4096).unwrap();
        assert!(weakstar_distance_to_haar(&fam, &grid, 20).unwrap().value < 1e-12);
        assert!((grid.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_folner_set_is_rejected() {
        let action = ActionSpec::circle_translation(&[0.1]).unwrap();
        let nu = EmpiricalMeasure::dirac(circle(), GroupElement::circle(0.0)).unwrap();
        assert!(folner_average(&action, &FolnerSet::Words(vec![]), &nu).is_err());
        let single = FolnerSet::Words(vec![Word::identity()]);
        assert_eq!(folner_average(&action, &single, &nu).unwrap(), nu);
    }

    #[test]
    fn interval_is_powers() {
        let action = ActionSpec::circle_translation(&[0.25]).unwrap();
        let FolnerSet::Elements(e) = FolnerSet::interval(&action, 0, 5).unwrap() else {
            panic!()
        };
        let xs: Vec<f64> = e.iter().map(|g| g.as_torus().unwrap()[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 0.0]);
    }

    #[test]
    fn measure_validation() {
        assert!(EmpiricalMeasure::new(circle(), vec![]).is_err());
        assert!(EmpiricalMeasure::new(circle(), vec![(GroupElement::circle(0.1), 0.5)]).is_err());
        assert!(EmpiricalMeasure::new(circle(), vec![(GroupElement::Cyclic(1), 1.0)]).is_err());
    }

    #[test]
    fn default_probes_have_requested_shape() {
        let p = default_probes(&circle(), 100, 10, 1).unwrap();
        assert_eq!(p.len(), 110);
        assert!(p[100..].iter().all(|m| m.len() == 3));
        let q = default_probes(&GroupSpec::cyclic(6).unwrap(), 100, 0, 1).unwrap();
        assert_eq!(q.len(), 6);
    }
}
