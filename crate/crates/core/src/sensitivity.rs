//! Sampling probes for sensitivity of an action, estimates of the sets
//! `E_k` of points with a neighborhood kept `1/k`-small by every sampled
//! word, and an empirical equicontinuity modulus.
//!
//! Everything here quantifies over sampled words and sampled pairs only.
//! A "non-sensitive" outcome is always qualified by the resolution and the
//! budget that produced it.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actions::{ActionSpec, Word};
use crate::error::{Error, Result};
use crate::groups::{wrap_unit, GroupElement, GroupSpec, Quaternion};
use crate::rng;

/// Fraction of `δ` used for the pair closest to the edge of the ball.
pub const EDGE_FRACTION: f64 = 1.0 - 1.0 / (1u64 << 30) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordBudget {
    pub count: usize,
    pub max_len: usize,
}

impl WordBudget {
    pub fn new(count: usize, max_len: usize) -> Result<WordBudget> {
        if count == 0 || max_len == 0 {
            return Err(Error::invalid("word budget needs count ≥ 1 and max_len ≥ 1"));
        }
        Ok(WordBudget { count, max_len })
    }
}

/// Longest exhaustively enumerated words.
pub const EXHAUSTIVE_LEN: usize = 4;

/// The first `budget.count` words of a fixed sequence: all words of length
/// `1..=4` over `1..=K` in length-then-lexicographic order, then random
/// words of length up to `max_len`. A larger budget extends a smaller one.
pub fn sample_words(generators: usize, budget: WordBudget, seed: u64) -> Vec<Word> {
    let k = generators.max(1) as u64;
    let mut out = Vec::with_capacity(budget.count);
    let mut level: Vec<Vec<u64>> = vec![vec![]];
    'exhaustive: for _ in 0..EXHAUSTIVE_LEN.min(budget.max_len) {
        let mut next = Vec::new();
        for w in &level {
            for s in 1..=k {
                let mut v = w.clone();
                v.push(s);
                out.push(Word::from_indices(&v).expect("nonempty"));
                if out.len() == budget.count {
                    break 'exhaustive;
                }
                next.push(v);
            }
        }
        level = next;
    }
    let mut r = rng::stream_rng(seed, rng::module::WORDS, 0);
    while out.len() < budget.count {
        let len = r.random_range(1..=budget.max_len);
        let v: Vec<u64> = (0..len).map(|_| r.random_range(1..=k)).collect();
        out.push(Word::from_indices(&v).expect("nonempty"));
    }
    out
}

/// A point at distance `dist` from `x` (as close as floating point allows);
/// finite groups return `x` itself because no other point is that close.
pub fn perturb(space: &GroupSpec, x: &GroupElement, dist: f64, r: &mut ChaCha8Rng) -> GroupElement {
    match (space, x) {
        (GroupSpec::Torus { .. }, GroupElement::Torus(v)) => GroupElement::Torus(
            v.iter()
                .map(|&c| {
                    let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
                    wrap_unit(c + sign * dist)
                })
                .collect(),
        ),
        (GroupSpec::Su2, GroupElement::Su2(q)) => {
            // right-multiplying by exp(θu) moves a geodesic distance θ/π
            let axis: [f64; 3] = loop {
                let a: [f64; 3] = std::array::from_fn(|_| r.random::<f64>() * 2.0 - 1.0);
                let n = a.iter().map(|c| c * c).sum::<f64>();
                if n > 1e-6 && n <= 1.0 {
                    let n = n.sqrt();
                    break a.map(|c| c / n);
                }
            };
            let step = Quaternion::from_axis_angle(axis, 2.0 * std::f64::consts::PI * dist);
            GroupElement::Su2(q.mul(&step).normalized())
        }
        _ => x.clone(),
    }
}

/// Base points: a regular grid of `grid` points per axis (torus), the first
/// elements of a finite group, or Haar draws on SU(2); then `random` Haar
/// draws.
pub fn default_base_points(space: &GroupSpec, grid: usize, random: usize, seed: u64) -> Result<Vec<GroupElement>> {
    let mut out = Vec::new();
    match space {
        GroupSpec::Torus { dim } => {
            let count = grid
                .checked_pow(*dim as u32)
                .filter(|&c| c <= 1 << 16)
                .ok_or_else(|| Error::invalid("base-point grid too large"))?;
            for mut i in 0..count {
                let mut v = Vec::with_capacity(*dim);
                for _ in 0..*dim {
                    v.push((i % grid) as f64 / grid as f64);
                    i /= grid;
                }
                out.push(GroupElement::Torus(v));
            }
        }
        GroupSpec::Su2 => {}
        spec => {
            let n = spec.order().expect("finite").min(grid as u64);
            for i in 0..n {
                out.push(spec.element_at(i)?);
            }
        }
    }
    let extra = if matches!(space, GroupSpec::Su2) { grid + random } else { random };
    let mut r = rng::stream_rng(seed, rng::module::START, 0);
    out.extend((0..extra).map(|_| space.haar_sample(&mut r)));
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SensitivityProbeConfig {
    pub action: ActionSpec,
    /// Candidate separation levels `β`.
    pub betas: Vec<f64>,
    /// Strictly decreasing ladder of radii `δ`.
    pub deltas: Vec<f64>,
    pub base_points: Vec<GroupElement>,
    pub budget: WordBudget,
    /// Pairs at random distances below `δ`, on top of `δ/2` and the edge pair.
    pub random_pairs: usize,
    pub seed: u64,
}

impl SensitivityProbeConfig {
    /// Default base points: an 8-point grid per axis plus 8 random points.
    pub fn new(action: ActionSpec, betas: Vec<f64>, deltas: Vec<f64>, budget: WordBudget, seed: u64) -> Result<Self> {
        let base_points = default_base_points(&action.space(), 8, 8, seed)?;
        let cfg = SensitivityProbeConfig {
            action,
            betas,
            deltas,
            base_points,
            budget,
            random_pairs: 2,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.deltas.is_empty() || self.deltas.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::invalid("δ ladder must be nonempty and positive"));
        }
        if self.deltas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("δ ladder must be strictly decreasing"));
        }
        if self.betas.is_empty() || self.betas.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::invalid("β levels must be nonempty and positive"));
        }
        if self.base_points.is_empty() {
            return Err(Error::invalid("need at least one base point"));
        }
        WordBudget::new(self.budget.count, self.budget.max_len)?;
        let space = self.action.space();
        for x in &self.base_points {
            space.check(x)?;
        }
        Ok(())
    }
}

/// A pair `(x, y)` and word prefix reaching a separation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub word: Word,
    pub initial_distance: f64,
    pub separation: f64,
}

impl Witness {
    /// Recomputes the separation from the stored data.
    pub fn replay(&self, action: &ActionSpec) -> Result<f64> {
        let space = action.space();
        let x = space.parse_element(&join_coords(&self.x))?;
        let y = space.parse_element(&join_coords(&self.y))?;
        space.metric(&action.apply_word(&self.word, &x)?, &action.apply_word(&self.word, &y)?)
    }
}

fn join_coords(v: &[f64]) -> String {
    v.iter().map(|c| format!("{c:?}")).collect::<Vec<_>>().join("/")
}

/// Worst separation found at one `(x, δ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub base_index: usize,
    pub delta: f64,
    pub max_separation: f64,
    pub witness: Witness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum SensitivityVerdict {
    /// Every `(x, δ)` reached separation `β`; one witness per base point at
    /// the smallest `δ`.
    SensitiveWitnessed { beta: f64, witnesses: Vec<Witness> },
    /// Largest separation found at each `δ`, over all base points.
    NonSensitiveAtResolution { max_separation: Vec<(f64, f64)> },
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub verdict: SensitivityVerdict,
    pub evidence: Vec<Evidence>,
    /// `max |separation − initial distance|` over every pair and prefix.
    pub isometry_defect: f64,
    pub words: usize,
    pub max_len: usize,
}

/// Largest separation along the prefixes of `w`, with its prefix length.
fn prefix_separation(
    action: &ActionSpec,
    space: &GroupSpec,
    w: &Word,
    x: &GroupElement,
    y: &GroupElement,
    stop_above: f64,
) -> Result<(f64, usize, f64)> {
    let d0 = space.metric(x, y)?;
    let (mut a, mut b) = (x.clone(), y.clone());
    let mut best = (f64::NEG_INFINITY, 0usize);
    let mut defect = 0.0f64;
    for (i, &s) in w.symbols().iter().enumerate() {
        a = action.apply_generator(s, &a)?;
        b = action.apply_generator(s, &b)?;
        let d = space.metric(&a, &b)?;
        defect = defect.max((d - d0).abs());
        if d > best.0 {
            best = (d, i + 1);
        }
        if d > stop_above {
            break;
        }
    }
    Ok((best.0, best.1, defect))
}

fn prefix(w: &Word, len: usize) -> Word {
    Word::new(w.symbols()[..len].to_vec()).expect("prefix of a nonempty word")
}

/// Searches sampled words and `δ`-close pairs for separation.
pub fn probe_sensitivity(cfg: &SensitivityProbeConfig) -> Result<SensitivityReport> {
    cfg.validate()?;
    let space = cfg.action.space();
    let words = sample_words(cfg.action.generator_count(), cfg.budget, cfg.seed);

    let per_base: Vec<(Vec<Evidence>, f64)> = cfg
        .base_points
        .par_iter()
        .enumerate()
        .map(|(bi, x)| {
            let mut r = rng::stream_rng(cfg.seed, rng::module::PAIRS, bi as u64);
            let mut evidence = Vec::with_capacity(cfg.deltas.len());
            let mut defect = 0.0f64;
            for &delta in &cfg.deltas {
                let mut dists = vec![0.5 * delta, EDGE_FRACTION * delta];
                dists.extend((0..cfg.random_pairs).map(|_| r.random::<f64>() * EDGE_FRACTION * delta));
                let mut best: Option<Witness> = None;
                for dist in dists {
                    let y = perturb(&space, x, dist, &mut r);
                    let d0 = space.metric(x, &y)?;
                    for w in &words {
                        let (sep, len, def) =
                            prefix_separation(&cfg.action, &space, w, x, &y, f64::INFINITY)?;
                        defect = defect.max(def);
                        if best.as_ref().is_none_or(|b| sep > b.separation) {
                            best = Some(Witness {
                                x: x.coordinates(),
                                y: y.coordinates(),
                                word: prefix(w, len),
                                initial_distance: d0,
                                separation: sep,
                            });
                        }
                    }
                }
                let witness = best.expect("at least two pairs");
                evidence.push(Evidence {
                    base_index: bi,
                    delta,
                    max_separation: witness.separation,
                    witness,
                });
            }
            Ok((evidence, defect))
        })
        .collect::<Result<_>>()?;

    let isometry_defect = per_base.iter().map(|(_, d)| *d).fold(0.0, f64::max);
    let evidence: Vec<Evidence> = per_base.into_iter().flat_map(|(e, _)| e).collect();

    let floor = evidence.iter().map(|e| e.max_separation).fold(f64::INFINITY, f64::min);
    let witnessed = cfg.betas.iter().copied().filter(|&b| floor >= b).fold(None, |m: Option<f64>, b| {
        Some(m.map_or(b, |m| m.max(b)))
    });
    let smallest_delta = *cfg.deltas.last().expect("nonempty");
    let beta_min = cfg.betas.iter().copied().fold(f64::INFINITY, f64::min);

    let verdict = if let Some(beta) = witnessed {
        SensitivityVerdict::SensitiveWitnessed {
            beta,
            witnesses: evidence
                .iter()
                .filter(|e| e.delta == smallest_delta)
                .map(|e| e.witness.clone())
                .collect(),
        }
    } else if evidence
        .iter()
        .any(|e| e.delta == smallest_delta && e.max_separation < beta_min)
    {
        SensitivityVerdict::NonSensitiveAtResolution {
            max_separation: cfg
                .deltas
                .iter()
                .map(|&d| {
                    let m = evidence
                        .iter()
                        .filter(|e| e.delta == d)
                        .map(|e| e.max_separation)
                        .fold(0.0, f64::max);
                    (d, m)
                })
                .collect(),
        }
    } else {
        SensitivityVerdict::Inconclusive
    };

    Ok(SensitivityReport {
        verdict,
        evidence,
        isometry_defect,
        words: words.len(),
        max_len: cfg.budget.max_len,
    })
}

/// Finite-resolution estimate of `E_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EkEstimate {
    pub k: u32,
    /// Cells per axis for a torus; `0` for a finite group, where cells are
    /// single elements.
    pub grid: usize,
    pub total_cells: usize,
    /// Indices of the cells kept.
    pub cells: Vec<usize>,
    pub budget: WordBudget,
}

impl EkEstimate {
    pub fn contains_cell(&self, cell: usize) -> bool {
        self.cells.binary_search(&cell).is_ok()
    }

    /// The cell holding `x`.
    pub fn cell_of(&self, space: &GroupSpec, x: &GroupElement) -> Result<usize> {
        match (space, x) {
            (GroupSpec::Torus { .. }, GroupElement::Torus(v)) => Ok(v.iter().rev().fold(0, |acc, &c| {
                acc * self.grid + ((c * self.grid as f64) as usize).min(self.grid - 1)
            })),
            (s, x) if s.is_finite() => Ok(s.index_of(x)? as usize),
            _ => Err(Error::invalid("point does not belong to the estimated space")),
        }
    }

    pub fn contains(&self, space: &GroupSpec, x: &GroupElement) -> Result<bool> {
        Ok(self.contains_cell(self.cell_of(space, x)?))
    }

    /// CSV rows `cell,in_ek` (torus cells as `i_0/i_1/...`).
    pub fn to_csv(&self, dim: usize) -> String {
        let mut s = String::from("cell,in_ek\n");
        for c in 0..self.total_cells {
            let label = if self.grid == 0 {
                c.to_string()
            } else {
                let mut v = Vec::with_capacity(dim);
                let mut i = c;
                for _ in 0..dim {
                    v.push((i % self.grid).to_string());
                    i /= self.grid;
                }
                v.join("/")
            };
            s.push_str(&format!("{label},{}\n", u8::from(self.contains_cell(c))));
        }
        s
    }
}

fn torus_cell_corner(cell: usize, grid: usize, dim: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(dim);
    let mut i = cell;
    for _ in 0..dim {
        v.push((i % grid) as f64 / grid as f64);
        i /= grid;
    }
    v
}

/// Dyadic subdivisions used for pairs inside a cell.
const EK_DYADIC_LEVELS: i32 = 6;

/// Cells none of whose sampled pairs separate to `≥ 1/k` under sampled
/// words. Pairs join the cell's corner to the dyadic points
/// `corner + width·2^{-j}` along each axis and along the diagonal.
pub fn estimate_ek(action: &ActionSpec, k: u32, grid: usize, budget: WordBudget, seed: u64) -> Result<EkEstimate> {
    if k == 0 {
        return Err(Error::invalid("k must be ≥ 1"));
    }
    let space = action.space();
    let words = sample_words(action.generator_count(), budget, seed);
    let threshold = 1.0 / f64::from(k);
    let (total, grid) = match &space {
        GroupSpec::Torus { dim } => {
            if grid == 0 {
                return Err(Error::invalid("grid must be ≥ 1"));
            }
            let t = grid
                .checked_pow(*dim as u32)
                .filter(|&t| t <= 1 << 20)
                .ok_or_else(|| Error::invalid("grid too large"))?;
            (t, grid)
        }
        GroupSpec::Su2 => {
            return Err(Error::Unsupported("E_k estimates are implemented for tori and finite groups".into()))
        }
        s => {
            let n = s.order().expect("finite");
            if n > 1 << 20 {
                return Err(Error::invalid("group too large to enumerate"));
            }
            (n as usize, 0)
        }
    };

    let keep: Vec<bool> = (0..total)
        .into_par_iter()
        .map(|cell| -> Result<bool> {
            let GroupSpec::Torus { dim } = space else {
                // singletons: the only pair is (x, x)
                return Ok(threshold > 0.0);
            };
            let corner = torus_cell_corner(cell, grid, dim);
            let width = 1.0 / grid as f64;
            let x = GroupElement::Torus(corner.clone());
            let mut partners = Vec::new();
            for j in 1..=EK_DYADIC_LEVELS {
                let h = width * 2f64.powi(-j);
                for axis in 0..=dim {
                    let v: Vec<f64> = corner
                        .iter()
                        .enumerate()
                        .map(|(i, &c)| if axis == dim || axis == i { c + h } else { c })
                        .collect();
                    partners.push(GroupElement::Torus(v));
                }
            }
            for y in &partners {
                for w in &words {
                    let (sep, _, _) = prefix_separation(action, &space, w, &x, y, threshold)?;
                    if sep >= threshold {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        })
        .collect::<Result<_>>()?;

    Ok(EkEstimate {
        k,
        grid,
        total_cells: total,
        cells: keep.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect(),
        budget,
    })
}

/// Representative point of a cell: its center (torus) or the element.
pub fn cell_point(space: &GroupSpec, est: &EkEstimate, cell: usize) -> Result<GroupElement> {
    match space {
        GroupSpec::Torus { dim } => Ok(GroupElement::Torus(
            torus_cell_corner(cell, est.grid, *dim)
                .into_iter()
                .map(|c| c + 0.5 / est.grid as f64)
                .collect(),
        )),
        s => s.element_at(cell as u64),
    }
}

/// Fraction of (kept cell, generator) pairs whose image of the cell point
/// lands in a kept cell again.
pub fn ek_forward_invariance(action: &ActionSpec, est: &EkEstimate) -> Result<f64> {
    let space = action.space();
    let mut hits = 0usize;
    let mut total = 0usize;
    for &cell in &est.cells {
        let x = cell_point(&space, est, cell)?;
        for slot in 0..action.generator_count() {
            let y = action.apply_slot(slot, &x)?;
            total += 1;
            hits += usize::from(est.contains(&space, &y)?);
        }
    }
    Ok(if total == 0 { 1.0 } else { hits as f64 / total as f64 })
}

/// For cells outside the estimate, how often some sampled word moves the
/// cell point into a kept cell. `None` when every cell is kept.
pub fn ek_hit_rate(action: &ActionSpec, est: &EkEstimate, words: &[Word]) -> Result<Option<f64>> {
    let space = action.space();
    let outside: Vec<usize> = (0..est.total_cells).filter(|c| !est.contains_cell(*c)).collect();
    if outside.is_empty() {
        return Ok(None);
    }
    let mut hits = 0usize;
    for &cell in &outside {
        let x = cell_point(&space, est, cell)?;
        for w in words {
            if est.contains(&space, &action.apply_word(w, &x)?)? {
                hits += 1;
                break;
            }
        }
    }
    Ok(Some(hits as f64 / outside.len() as f64))
}

#[derive(Debug, Clone)]
pub struct ModulusConfig {
    pub eps: Vec<f64>,
    /// Linear candidates `ε·j/grid_steps` for `j = 1..=2·grid_steps`.
    pub grid_steps: usize,
    /// Dyadic candidates `ε·2^{-i}` for `i = 1..=dyadic_depth`.
    pub dyadic_depth: i32,
    pub base_points: Vec<GroupElement>,
    pub budget: WordBudget,
    pub seed: u64,
}

impl ModulusConfig {
    pub fn new(action: &ActionSpec, eps: Vec<f64>, budget: WordBudget, seed: u64) -> Result<Self> {
        Ok(ModulusConfig {
            eps,
            grid_steps: 16,
            dyadic_depth: 30,
            base_points: default_base_points(&action.space(), 8, 8, seed)?,
            budget,
            seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusRow {
    pub eps: f64,
    /// Largest tested `δ` with no sampled pair within `δ` separating past
    /// `ε`; 0 if even the smallest candidate failed.
    pub delta: f64,
}

/// Empirical `δ(ε)`. Candidates are scanned in increasing order and the
/// scan stops at the first `δ` whose pairs at distance `δ/2` and `≈ δ`
/// separate by more than `ε`.
pub fn equicontinuity_modulus(action: &ActionSpec, cfg: &ModulusConfig) -> Result<Vec<ModulusRow>> {
    if cfg.eps.iter().any(|&e| !(e > 0.0 && e.is_finite())) || cfg.eps.is_empty() {
        return Err(Error::invalid("ε ladder must be nonempty and positive"));
    }
    if cfg.base_points.is_empty() {
        return Err(Error::invalid("need at least one base point"));
    }
    WordBudget::new(cfg.budget.count, cfg.budget.max_len)?;
    let space = action.space();
    let words = sample_words(action.generator_count(), cfg.budget, cfg.seed);
    cfg.eps
        .iter()
        .map(|&eps| {
            let mut cands: Vec<f64> = (1..=2 * cfg.grid_steps)
                .map(|j| eps * j as f64 / cfg.grid_steps as f64)
                .chain((1..=cfg.dyadic_depth).map(|i| eps * 2f64.powi(-i)))
                .collect();
            cands.sort_by(f64::total_cmp);
            cands.dedup();
            let mut delta = 0.0;
            for &d in &cands {
                let separated = cfg
                    .base_points
                    .par_iter()
                    .enumerate()
                    .map(|(bi, x)| -> Result<bool> {
                        let mut r = rng::stream_rng(cfg.seed, rng::module::PAIRS, bi as u64);
                        for dist in [0.5 * d, EDGE_FRACTION * d] {
                            let y = perturb(&space, x, dist, &mut r);
                            for w in &words {
                                let (sep, _, _) = prefix_separation(action, &space, w, x, &y, eps)?;
                                if sep > eps {
                                    return Ok(true);
                                }
                            }
                        }
                        Ok(false)
                    })
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .any(|b| b);
                if separated {
                    break;
                }
                delta = d;
            }
            Ok(ModulusRow { eps, delta })
        })
        .collect()
}
