//! Index laws on `{1, 2, ...}`, the two-sided Bernoulli shift and cylinder
//! measures.
//!
//! A point of the shift space is represented by a [`ShiftWindow`]: an offset
//! into an [`IndexSource`] whose coordinate `i` is a pure function of
//! `(seed, i)`. Shifting only moves the offset, so shifting forward and back
//! re-reads identical values.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::actions::GenIndex;
use crate::error::{Error, Result};
use crate::rng;

/// Probabilities below this are treated as zero when checking a law.
const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    /// `p_n = (1 - ratio) ratio^(n-1)`.
    Geometric { ratio: f64 },
    /// `p_n = 1/k` for `n <= k`, zero afterwards.
    FiniteUniform { k: u64 },
    /// Explicit `p_1..p_K`; the remaining mass `1 - Σ head` is spread
    /// geometrically with ratio `tail_ratio` over `K+1, K+2, ...`.
    Custom { head: Vec<f64>, tail_ratio: f64 },
}

/// The sequence `(p_n)` together with its sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilitySequence {
    law: Law,
    /// Cumulative sums of the head for `Custom`.
    cumulative: Vec<f64>,
}

impl ProbabilitySequence {
    pub fn geometric(ratio: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::invalid(format!(
                "geometric ratio must lie in (0,1), got {ratio}"
            )));
        }
        Ok(ProbabilitySequence {
            law: Law::Geometric { ratio },
            cumulative: Vec::new(),
        })
    }

    pub fn uniform(k: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("uniform law needs k ≥ 1"));
        }
        Ok(ProbabilitySequence {
            law: Law::FiniteUniform { k },
            cumulative: Vec::new(),
        })
    }

    pub fn custom(head: Vec<f64>, tail_ratio: f64) -> Result<Self> {
        if head.is_empty() {
            return Err(Error::invalid("custom law needs at least one explicit entry"));
        }
        if head.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("custom probabilities must be finite and ≥ 0"));
        }
        if !(tail_ratio > 0.0 && tail_ratio < 1.0) {
            return Err(Error::invalid(format!(
                "tail ratio must lie in (0,1), got {tail_ratio}"
            )));
        }
        let mut acc = 0.0;
        let cumulative: Vec<f64> = head
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if acc > 1.0 + NORMALIZATION_TOL {
            return Err(Error::invalid(format!(
                "custom probabilities sum to {acc} > 1"
            )));
        }
        Ok(ProbabilitySequence {
            law: Law::Custom { head, tail_ratio },
            cumulative,
        })
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    fn custom_tail_mass(&self) -> f64 {
        match &self.law {
            Law::Custom { .. } => {
                let m = 1.0 - self.cumulative.last().copied().unwrap_or(0.0);
                if m <= NORMALIZATION_TOL {
                    0.0
                } else {
                    m
                }
            }
            _ => 0.0,
        }
    }

    /// True iff `p_n > 0` for every `n`.
    pub fn is_conforming(&self) -> bool {
        match &self.law {
            Law::Geometric { .. } => true,
            Law::FiniteUniform { .. } => false,
            Law::Custom { head, .. } => head.iter().all(|&p| p > 0.0) && self.custom_tail_mass() > 0.0,
        }
    }

    /// `p_n`; `p_0` and `p_∞` are zero.
    pub fn prob(&self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        match &self.law {
            Law::Geometric { ratio } => (1.0 - ratio) * ratio.powf((n - 1) as f64),
            Law::FiniteUniform { k } => {
                if n <= *k {
                    1.0 / *k as f64
                } else {
                    0.0
                }
            }
            Law::Custom { head, tail_ratio } => {
                let k = head.len() as u64;
                if n <= k {
                    head[(n - 1) as usize]
                } else {
                    self.custom_tail_mass() * (1.0 - tail_ratio) * tail_ratio.powf((n - k - 1) as f64)
                }
            }
        }
    }

    /// `P(index = symbol)`; the `∞` symbol has probability zero.
    pub fn prob_of(&self, symbol: GenIndex) -> f64 {
        match symbol {
            GenIndex::Finite(n) => self.prob(n),
            GenIndex::Infinity => 0.0,
        }
    }

    /// Mass of `{n + 1, n + 2, ...}`.
    pub fn tail_mass(&self, n: u64) -> f64 {
        match &self.law {
            Law::Geometric { ratio } => ratio.powf(n as f64),
            Law::FiniteUniform { k } => (k.saturating_sub(n)) as f64 / *k as f64,
            Law::Custom { head, tail_ratio } => {
                let k = head.len() as u64;
                let tail = self.custom_tail_mass();
                if n >= k {
                    tail * tail_ratio.powf((n - k) as f64)
                } else {
                    let used = if n == 0 { 0.0 } else { self.cumulative[(n - 1) as usize] };
                    (self.cumulative[head.len() - 1] - used).max(0.0) + tail
                }
            }
        }
    }

    /// Inverse CDF: maps `u ∈ [0,1)` to an index `n ≥ 1`.
    pub fn index_from_uniform(&self, u: f64) -> u64 {
        let u = u.clamp(0.0, 1.0 - f64::EPSILON);
        match &self.law {
            Law::Geometric { ratio } => geometric_index(u, *ratio),
            Law::FiniteUniform { k } => ((u * *k as f64) as u64).min(k - 1) + 1,
            Law::Custom { head, tail_ratio } => {
                let pos = self.cumulative.partition_point(|&c| c <= u);
                if pos < self.cumulative.len() {
                    return pos as u64 + 1;
                }
                let tail = self.custom_tail_mass();
                let k = self.cumulative.len() as u64;
                if tail == 0.0 {
                    // u landed past a head summing to 1 by rounding.
                    return head.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u64 + 1;
                }
                let rest = ((u - self.cumulative[k as usize - 1]) / tail).clamp(0.0, 1.0 - f64::EPSILON);
                k + geometric_index(rest, *tail_ratio)
            }
        }
    }

    /// One draw from `m`. Never returns `∞` or zero.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.index_from_uniform(rng.random::<f64>())
    }
}

/// Smallest `n` with `1 - ratio^n > u`.
fn geometric_index(u: f64, ratio: f64) -> u64 {
    let x = (-u).ln_1p() / ratio.ln();
    if x >= (u64::MAX / 2) as f64 {
        u64::MAX / 2
    } else {
        x.floor() as u64 + 1
    }
}

impl fmt::Display for ProbabilitySequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.law {
            Law::Geometric { ratio } => write!(f, "geometric:{ratio}"),
            Law::FiniteUniform { k } => write!(f, "uniform:{k}"),
            Law::Custom { head, tail_ratio } => {
                let s: Vec<String> = head.iter().map(f64::to_string).collect();
                write!(f, "custom:[{}];tail={tail_ratio}", s.join(","))
            }
        }
    }
}

impl FromStr for ProbabilitySequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let bad = |reason: String| Error::parse("probability sequence", t, reason);
        let (name, arg) = t
            .split_once(':')
            .ok_or_else(|| bad("expected `kind:parameters`".into()))?;
        let rewrap = |e: Error| match e {
            Error::InvalidArgument(m) => bad(m),
            e => e,
        };
        match name.trim() {
            "geometric" => {
                let q = arg.trim().parse::<f64>().map_err(|e| bad(e.to_string()))?;
                ProbabilitySequence::geometric(q).map_err(rewrap)
            }
            "uniform" => {
                let k = arg.trim().parse::<u64>().map_err(|e| bad(e.to_string()))?;
                ProbabilitySequence::uniform(k).map_err(rewrap)
            }
            "custom" => {
                let (list, tail) = arg
                    .split_once(';')
                    .ok_or_else(|| bad("expected `[p1,...];tail=q`".into()))?;
                let list = list
                    .trim()
                    .strip_prefix('[')
                    .and_then(|l| l.strip_suffix(']'))
                    .ok_or_else(|| bad("probabilities must be in brackets".into()))?;
                let head = list
                    .split(',')
                    .map(|p| p.trim().parse::<f64>().map_err(|e| bad(e.to_string())))
                    .collect::<Result<Vec<_>>>()?;
                let q = tail
                    .trim()
                    .strip_prefix("tail=")
                    .ok_or_else(|| bad("expected `tail=q`".into()))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| bad(e.to_string()))?;
                ProbabilitySequence::custom(head, q).map_err(rewrap)
            }
            other => Err(bad(format!("unknown law `{other}`"))),
        }
    }
}

/// I.i.d. indices addressed by coordinate: the value at coordinate `i` is
/// drawn from the law using the random word derived from `(seed, i)`.
#[derive(Debug, Clone)]
pub struct IndexSource {
    law: Arc<ProbabilitySequence>,
    key: u64,
    seed: u64,
}

impl IndexSource {
    pub fn new(law: ProbabilitySequence, seed: u64) -> IndexSource {
        IndexSource::with_stream(law, seed, 0)
    }

    /// Independent index sources under one seed use distinct streams.
    pub fn with_stream(law: ProbabilitySequence, seed: u64, stream: u64) -> IndexSource {
        IndexSource {
            law: Arc::new(law),
            key: rng::stream_key(seed, rng::module::INDICES, stream),
            seed,
        }
    }

    pub fn law(&self) -> &ProbabilitySequence {
        &self.law
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn at(&self, coordinate: i64) -> u64 {
        self.law
            .index_from_uniform(rng::unit_f64(rng::coordinate_u64(self.key, coordinate)))
    }
}

/// A point `r = (..., r_{-1}, r_0, r_1, ...)` of the two-sided shift space,
/// read through a window centered at `offset`.
#[derive(Debug, Clone)]
pub struct ShiftWindow {
    source: IndexSource,
    offset: i64,
    pinned: Arc<BTreeMap<i64, GenIndex>>,
}

impl ShiftWindow {
    pub fn new(source: IndexSource) -> ShiftWindow {
        ShiftWindow {
            source,
            offset: 0,
            pinned: Arc::new(BTreeMap::new()),
        }
    }

    /// Overrides the symbol at relative coordinate `k` of the current window.
    /// Pinned symbols may be `∞` or indices the law never produces.
    pub fn pin(mut self, k: i64, symbol: GenIndex) -> Result<ShiftWindow> {
        if symbol == GenIndex::Finite(0) {
            return Err(Error::invalid("shift coordinates are ≥ 1"));
        }
        Arc::make_mut(&mut self.pinned).insert(self.offset + k, symbol);
        Ok(self)
    }

    /// Pins `r_{-k}, ..., r_k` from a slice of length `2k + 1`.
    pub fn with_entries(source: IndexSource, entries: &[GenIndex]) -> Result<ShiftWindow> {
        if entries.len().is_multiple_of(2) {
            return Err(Error::invalid("window entries must have odd length 2k+1"));
        }
        let k = (entries.len() / 2) as i64;
        entries
            .iter()
            .enumerate()
            .try_fold(ShiftWindow::new(source), |w, (i, &s)| w.pin(i as i64 - k, s))
    }

    pub fn source(&self) -> &IndexSource {
        &self.source
    }

    /// Position of the window's coordinate 0 in the underlying sequence.
    pub fn offset(&self) -> i64 {
        self.offset
    }

    /// `r_k` relative to the current window.
    #[inline]
    pub fn read(&self, k: i64) -> GenIndex {
        let abs = self.offset + k;
        if !self.pinned.is_empty() {
            if let Some(&s) = self.pinned.get(&abs) {
                return s;
            }
        }
        GenIndex::Finite(self.source.at(abs))
    }

    /// `T(r)`: afterwards `read(n)` returns what `read(n + 1)` returned.
    pub fn shift(&self) -> ShiftWindow {
        self.shifted_by(1)
    }

    pub fn shift_in_place(&mut self) {
        self.offset += 1;
    }

    /// `T^k(r)`; negative `k` shifts backwards.
    pub fn shifted_by(&self, k: i64) -> ShiftWindow {
        ShiftWindow {
            source: self.source.clone(),
            offset: self.offset + k,
            pinned: Arc::clone(&self.pinned),
        }
    }

    /// `(r_{-k}, ..., r_k)`.
    pub fn entries(&self, k: i64) -> Vec<GenIndex> {
        (-k..=k).map(|i| self.read(i)).collect()
    }
}

/// The set of sequences with `r_{start + j} = symbols[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cylinder {
    start: i64,
    symbols: Vec<u64>,
}

impl Cylinder {
    pub fn new(start: i64, symbols: Vec<u64>) -> Result<Cylinder> {
        if symbols.is_empty() {
            return Err(Error::invalid("cylinders need at least one symbol"));
        }
        if symbols.contains(&0) {
            return Err(Error::invalid("cylinder symbols are ≥ 1"));
        }
        Ok(Cylinder { start, symbols })
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn symbols(&self) -> &[u64] {
        &self.symbols
    }

    /// Same pattern anchored elsewhere.
    pub fn at(&self, start: i64) -> Cylinder {
        Cylinder {
            start,
            symbols: self.symbols.clone(),
        }
    }

    /// The sub-cylinder fixing one more coordinate after the pattern.
    pub fn extended(&self, symbol: u64) -> Result<Cylinder> {
        let mut s = self.symbols.clone();
        s.push(symbol);
        Cylinder::new(self.start, s)
    }

    pub fn matches(&self, w: &ShiftWindow) -> bool {
        self.symbols
            .iter()
            .enumerate()
            .all(|(j, &s)| w.read(self.start + j as i64) == GenIndex::Finite(s))
    }

    /// `λ(C) = Π p_{symbol}`.
    pub fn measure(&self, p: &ProbabilitySequence) -> f64 {
        cylinder_measure(p, self)
    }
}

impl fmt::Display for Cylinder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.symbols.iter().map(u64::to_string).collect();
        write!(f, "{}@{}", s.join(","), self.start)
    }
}

impl FromStr for Cylinder {
    type Err = Error;

    /// `1,2` (anchored at 0) or `1,2@3`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let bad = |reason: String| Error::parse("cylinder", t, reason);
        let (syms, start) = match t.split_once('@') {
            Some((a, b)) => (a, b.trim().parse::<i64>().map_err(|e| bad(e.to_string()))?),
            None => (t, 0),
        };
        let symbols = syms
            .split(',')
            .map(|x| x.trim().parse::<u64>().map_err(|e| bad(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Cylinder::new(start, symbols).map_err(|e| bad(e.to_string()))
    }
}

/// Product measure of a cylinder: the product of `p_s` over its symbols.
pub fn cylinder_measure(p: &ProbabilitySequence, c: &Cylinder) -> f64 {
    c.symbols.iter().map(|&s| p.prob(s)).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> ProbabilitySequence {
        ProbabilitySequence::geometric(0.5).unwrap()
    }

    #[test]
    fn geometric_probabilities() {
        let p = half();
        assert_eq!(p.prob(1), 0.5);
        assert_eq!(p.prob(2), 0.25);
        assert_eq!(p.prob(0), 0.0);
        assert_eq!(p.prob_of(GenIndex::Infinity), 0.0);
        let total: f64 = (1..200).map(|n| p.prob(n)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_inverse_cdf_boundaries() {
        let p = half();
        assert_eq!(p.index_from_uniform(0.0), 1);
        assert_eq!(p.index_from_uniform(0.4999), 1);
        assert_eq!(p.index_from_uniform(0.5), 2);
        assert_eq!(p.index_from_uniform(0.7499), 2);
        assert_eq!(p.index_from_uniform(0.75), 3);
        assert!(p.index_from_uniform(1.0 - 1e-16) >= 1);
    }

    #[test]
    fn sums_to_one_for_every_law() {
        let laws = [
            half(),
            ProbabilitySequence::geometric(0.9).unwrap(),
            ProbabilitySequence::uniform(4).unwrap(),
            ProbabilitySequence::custom(vec![0.2, 0.3], 0.25).unwrap(),
        ];
        for p in &laws {
            let mut total = 0.0;
            let mut n = 1;
            while p.tail_mass(n - 1) > 1e-15 {
                total += p.prob(n);
                n += 1;
            }
            assert!((total - 1.0).abs() < 1e-12, "{p}: {total}");
        }
    }

    #[test]
    fn conformance_flags() {
        assert!(half().is_conforming());
        assert!(!ProbabilitySequence::uniform(4).unwrap().is_conforming());
        assert!(ProbabilitySequence::custom(vec![0.5, 0.25], 0.5).unwrap().is_conforming());
        assert!(!ProbabilitySequence::custom(vec![0.5, 0.5], 0.5).unwrap().is_conforming());
        assert!(!ProbabilitySequence::custom(vec![0.5, 0.0], 0.5).unwrap().is_conforming());
        assert!(ProbabilitySequence::custom(vec![0.7, 0.7], 0.5).is_err());
        assert!(ProbabilitySequence::geometric(1.0).is_err());
        assert!(ProbabilitySequence::uniform(0).is_err());
    }

    #[test]
    fn custom_inverse_cdf() {
        let p = ProbabilitySequence::custom(vec![0.5, 0.25], 0.5).unwrap();
        assert_eq!(p.index_from_uniform(0.1), 1);
        assert_eq!(p.index_from_uniform(0.6), 2);
        // tail mass 0.25: 3 with prob 0.125, 4 with 0.0625, ...
        assert_eq!(p.index_from_uniform(0.8), 3);
        assert_eq!(p.index_from_uniform(0.9), 4);
        assert!((p.prob(3) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn near_degenerate_custom_law() {
        let eps = 1e-9;
        let p = ProbabilitySequence::custom(vec![1.0 - eps], 0.5).unwrap();
        let mut r = rng::stream_rng(3, "test", 0);
        let ones = (0..10_000).filter(|_| p.sample(&mut r) == 1).count();
        assert!(ones >= 9_999);
    }

    #[test]
    fn shift_reindexes() {
        let w = ShiftWindow::new(IndexSource::new(half(), 11));
        assert_eq!(w.shift().read(0), w.read(1));
        let mut v = w.clone();
        for _ in 0..7 {
            v.shift_in_place();
        }
        assert_eq!(v.read(0), w.read(7));
        assert_eq!(w.read(5), w.read(5));
        assert_eq!(w.shift().shifted_by(-1).read(-3), w.read(-3));
    }

    #[test]
    fn pinned_entries() {
        let src = IndexSource::new(half(), 1);
        let w = ShiftWindow::with_entries(
            src.clone(),
            &[GenIndex::Finite(3), GenIndex::Finite(1), GenIndex::Infinity],
        )
        .unwrap();
        assert_eq!(w.read(-1), GenIndex::Finite(3));
        assert_eq!(w.read(1), GenIndex::Infinity);
        assert_eq!(w.shift().read(0), GenIndex::Infinity);
        assert_eq!(w.read(2), GenIndex::Finite(src.at(2)));
        assert!(ShiftWindow::with_entries(src, &[GenIndex::Finite(1); 2]).is_err());
    }

    #[test]
    fn cylinder_examples() {
        let p = half();
        let c = Cylinder::new(0, vec![1, 1, 1]).unwrap();
        assert_eq!(cylinder_measure(&p, &c), 0.125);
        assert_eq!(cylinder_measure(&p, &Cylinder::new(0, vec![2]).unwrap()), 0.25);
        let u = ProbabilitySequence::uniform(2).unwrap();
        assert_eq!(cylinder_measure(&u, &Cylinder::new(0, vec![3]).unwrap()), 0.0);
        assert!(Cylinder::new(0, vec![]).is_err());
    }

    #[test]
    fn cylinder_measure_ignores_offset() {
        let p = ProbabilitySequence::custom(vec![0.1, 0.6], 0.3).unwrap();
        let c = Cylinder::new(0, vec![2, 1, 4]).unwrap();
        let base = c.measure(&p);
        for s in -5..=5 {
            assert_eq!(c.at(s).measure(&p), base);
        }
    }

    #[test]
    fn cylinder_additivity() {
        for p in [half(), ProbabilitySequence::custom(vec![0.1, 0.6], 0.3).unwrap()] {
            let c = Cylinder::new(-2, vec![1, 2]).unwrap();
            let mut sum = 0.0;
            let mut s = 1;
            while p.tail_mass(s - 1) >= 1e-10 {
                sum += c.extended(s).unwrap().measure(&p);
                s += 1;
            }
            assert!((sum - c.measure(&p)).abs() < 1e-10 * c.measure(&p) + 1e-12);
        }
    }

    #[test]
    fn law_strings() {
        for s in ["geometric:0.5", "uniform:4", "custom:[0.5,0.25];tail=0.5"] {
            let p: ProbabilitySequence = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert!("geometric:1.5".parse::<ProbabilitySequence>().is_err());
        assert!("poisson:1".parse::<ProbabilitySequence>().is_err());
        assert_eq!("1,2@3".parse::<Cylinder>().unwrap(), Cylinder::new(3, vec![1, 2]).unwrap());
    }
}
