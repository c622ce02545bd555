//! Measure-preserving actions on a compact metric space `X`.
//!
//! Points of `X` are [`GroupElement`]s of the action's [`space`]:
//! translation actions act on their own group, the circle fixtures act on
//! `torus:1`. The invariant measure is always the Haar measure of that space
//! (Lebesgue measure for the circle).
//!
//! [`space`]: ActionSpec::space

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::groups::{wrap_unit, GeneratorSet, GroupElement, GroupSpec};
use crate::rng;

/// A symbol of the compactified index set `{1, 2, ...} ∪ {∞}`.
///
/// `Infinity` always acts as the identity map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GenIndex {
    Finite(u64),
    Infinity,
}

impl GenIndex {
    pub fn finite(n: u64) -> Result<GenIndex> {
        if n == 0 {
            Err(Error::invalid("generator indices start at 1"))
        } else {
            Ok(GenIndex::Finite(n))
        }
    }
}

impl fmt::Display for GenIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GenIndex::Finite(n) => write!(f, "{n}"),
            GenIndex::Infinity => write!(f, "inf"),
        }
    }
}

impl FromStr for GenIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" => Ok(GenIndex::Infinity),
            t => {
                let n = t
                    .parse::<u64>()
                    .map_err(|e| Error::parse("generator index", s, e.to_string()))?;
                GenIndex::finite(n)
            }
        }
    }
}

impl Serialize for GenIndex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            GenIndex::Finite(n) => s.serialize_u64(*n),
            GenIndex::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for GenIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => GenIndex::finite(n).map_err(serde::de::Error::custom),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// A finite nonempty word `(r_1, ..., r_n)`; `r_1` is applied first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<GenIndex>", into = "Vec<GenIndex>")]
pub struct Word(Vec<GenIndex>);

impl Word {
    pub fn new(symbols: Vec<GenIndex>) -> Result<Word> {
        if symbols.is_empty() {
            return Err(Error::invalid("words must be nonempty"));
        }
        Ok(Word(symbols))
    }

    /// Word of finite indices; every index must be at least 1.
    pub fn from_indices(indices: &[u64]) -> Result<Word> {
        Word::new(
            indices
                .iter()
                .map(|&n| GenIndex::finite(n))
                .collect::<Result<_>>()?,
        )
    }

    /// The one-letter word `(∞)`, which acts as the identity.
    pub fn identity() -> Word {
        Word(vec![GenIndex::Infinity])
    }

    /// `(index, index, ..., index)` with `len` letters.
    pub fn repeat(index: u64, len: usize) -> Result<Word> {
        Word::from_indices(&vec![index; len])
    }

    pub fn symbols(&self) -> &[GenIndex] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `self` followed by `other`, so `other`'s letters act last.
    pub fn concat(&self, other: &Word) -> Word {
        Word(self.0.iter().chain(other.0.iter()).copied().collect())
    }

    pub fn push(&mut self, symbol: GenIndex) {
        self.0.push(symbol);
    }
}

impl TryFrom<Vec<GenIndex>> for Word {
    type Error = Error;
    fn try_from(v: Vec<GenIndex>) -> Result<Word> {
        Word::new(v)
    }
}

impl From<Word> for Vec<GenIndex> {
    fn from(w: Word) -> Self {
        w.0
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(GenIndex::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// What to do with an index larger than the number of listed generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndexPolicy {
    /// Index `n` uses generator `((n - 1) mod K) + 1`.
    #[default]
    Cycle,
    /// Out-of-range indices are an error.
    Strict,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionKind {
    /// `X = G`, generator `i` acts by `x ↦ x · z_i`.
    Translation(GeneratorSet),
    /// `X = torus:1`, generator `i` acts by `x ↦ x + angle_i mod 1`.
    RotationFamily(Vec<f64>),
    /// `X = torus:1`, the single non-invertible map `x ↦ 2x mod 1`.
    /// Only the sensitivity probes accept it.
    DoublingFixture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpec {
    kind: ActionKind,
    policy: IndexPolicy,
}

impl ActionSpec {
    pub fn translation(generators: GeneratorSet) -> ActionSpec {
        ActionSpec {
            kind: ActionKind::Translation(generators),
            policy: IndexPolicy::Cycle,
        }
    }

    pub fn rotations(angles: Vec<f64>) -> Result<ActionSpec> {
        if angles.is_empty() {
            return Err(Error::invalid("rotation family needs at least one angle"));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("rotation angles must be finite"));
        }
        Ok(ActionSpec {
            kind: ActionKind::RotationFamily(angles.into_iter().map(wrap_unit).collect()),
            policy: IndexPolicy::Cycle,
        })
    }

    pub fn doubling() -> ActionSpec {
        ActionSpec {
            kind: ActionKind::DoublingFixture,
            policy: IndexPolicy::Cycle,
        }
    }

    /// Translation on `torus:1` by the listed angles.
    pub fn circle_translation(angles: &[f64]) -> Result<ActionSpec> {
        let spec = GroupSpec::torus(1)?;
        let gens = angles.iter().map(|&a| GroupElement::circle(a)).collect();
        Ok(ActionSpec::translation(GeneratorSet::new(spec, gens, false)?))
    }

    pub fn with_policy(mut self, policy: IndexPolicy) -> ActionSpec {
        self.policy = policy;
        self
    }

    pub fn kind(&self) -> &ActionKind {
        &self.kind
    }

    pub fn policy(&self) -> IndexPolicy {
        self.policy
    }

    /// The space `X` acted on.
    pub fn space(&self) -> GroupSpec {
        match &self.kind {
            ActionKind::Translation(g) => g.spec().clone(),
            _ => GroupSpec::Torus { dim: 1 },
        }
    }

    /// Number of distinct listed generators `K`.
    pub fn generator_count(&self) -> usize {
        match &self.kind {
            ActionKind::Translation(g) => g.len(),
            ActionKind::RotationFamily(a) => a.len(),
            ActionKind::DoublingFixture => 1,
        }
    }

    pub fn is_invertible(&self) -> bool {
        !matches!(self.kind, ActionKind::DoublingFixture)
    }

    /// Whether every generator is an isometry of the space's metric.
    pub fn is_isometric(&self) -> bool {
        self.is_invertible()
    }

    /// Errors for the non-invertible fixture.
    pub fn require_invertible(&self) -> Result<()> {
        if self.is_invertible() {
            Ok(())
        } else {
            Err(Error::invalid(
                "the doubling fixture is not invertible; only sensitivity probes accept it",
            ))
        }
    }

    /// Zero-based slot of the generator used for `index`, `None` for `∞`.
    pub fn slot(&self, index: GenIndex) -> Result<Option<usize>> {
        let n = match index {
            GenIndex::Infinity => return Ok(None),
            GenIndex::Finite(0) => return Err(Error::invalid("generator indices start at 1")),
            GenIndex::Finite(n) => n,
        };
        let k = self.generator_count() as u64;
        match self.policy {
            IndexPolicy::Cycle => Ok(Some(((n - 1) % k) as usize)),
            IndexPolicy::Strict if n <= k => Ok(Some((n - 1) as usize)),
            IndexPolicy::Strict => Err(Error::invalid(format!(
                "index {n} exceeds the {k} listed generators (strict policy)"
            ))),
        }
    }

    /// `Φ_index(x)`.
    pub fn apply_generator(&self, index: GenIndex, x: &GroupElement) -> Result<GroupElement> {
        match self.slot(index)? {
            None => Ok(x.clone()),
            Some(slot) => self.apply_slot(slot, x),
        }
    }

    /// Applies the generator in zero-based `slot`.
    pub fn apply_slot(&self, slot: usize, x: &GroupElement) -> Result<GroupElement> {
        match &self.kind {
            ActionKind::Translation(g) => g.spec().compose(x, &g.elements()[slot]),
            ActionKind::RotationFamily(angles) => match x {
                GroupElement::Torus(v) if v.len() == 1 => {
                    Ok(GroupElement::Torus(vec![wrap_unit(v[0] + angles[slot])]))
                }
                _ => Err(Error::invalid(format!("{x:?} is not a point of the circle"))),
            },
            ActionKind::DoublingFixture => match x {
                GroupElement::Torus(v) if v.len() == 1 => {
                    Ok(GroupElement::Torus(vec![wrap_unit(2.0 * v[0])]))
                }
                _ => Err(Error::invalid(format!("{x:?} is not a point of the circle"))),
            },
        }
    }

    /// `Φ_w(x) = Φ_{r_n} ∘ ... ∘ Φ_{r_1}(x)`.
    pub fn apply_word(&self, w: &Word, x: &GroupElement) -> Result<GroupElement> {
        let mut y = x.clone();
        for &s in w.symbols() {
            y = self.apply_generator(s, &y)?;
        }
        Ok(y)
    }

    /// For translation actions, the group element `z_{r_1} ··· z_{r_n}`.
    pub fn word_element(&self, w: &Word) -> Result<GroupElement> {
        let ActionKind::Translation(g) = &self.kind else {
            return Err(Error::Unsupported(
                "word elements exist only for translation actions".into(),
            ));
        };
        let spec = g.spec();
        let mut acc = spec.identity();
        for &s in w.symbols() {
            if let Some(slot) = self.slot(s)? {
                acc = spec.compose(&acc, &g.elements()[slot])?;
            }
        }
        Ok(acc)
    }
}

/// Source of generators in an action descriptor.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorSource {
    Explicit(Vec<GroupElement>),
    /// `count` Haar-random generators derived from the run seed.
    Haar(usize),
}

/// An action as written in a config file, before seed-dependent generators
/// are drawn.
///
/// Grammar:
/// - `translation(GROUP; gens=E1,E2,...[; policy=strict][; dense=true])`
/// - `translation(GROUP; gens=haar:K)`
/// - `rotation(A1,A2,...)`
/// - `doubling-fixture`
#[derive(Debug, Clone, PartialEq)]
pub enum ActionDescriptor {
    Translation {
        group: GroupSpec,
        gens: GeneratorSource,
        policy: IndexPolicy,
        dense: Option<bool>,
    },
    Rotation(Vec<f64>),
    Doubling,
}

impl ActionDescriptor {
    pub fn space(&self) -> GroupSpec {
        match self {
            ActionDescriptor::Translation { group, .. } => group.clone(),
            _ => GroupSpec::Torus { dim: 1 },
        }
    }

    pub fn resolve(&self, seed: u64) -> Result<ActionSpec> {
        match self {
            ActionDescriptor::Translation {
                group,
                gens,
                policy,
                dense,
            } => {
                let set = match gens {
                    GeneratorSource::Explicit(v) => {
                        GeneratorSet::new(group.clone(), v.clone(), dense.unwrap_or(false))?
                    }
                    GeneratorSource::Haar(k) => {
                        let mut r = rng::stream_rng(seed, rng::module::GENERATORS, 0);
                        let s = GeneratorSet::haar(group.clone(), *k, &mut r)?;
                        match dense {
                            Some(d) => GeneratorSet::new(group.clone(), s.elements().to_vec(), *d)?,
                            None => s,
                        }
                    }
                };
                Ok(ActionSpec::translation(set).with_policy(*policy))
            }
            ActionDescriptor::Rotation(a) => ActionSpec::rotations(a.clone()),
            ActionDescriptor::Doubling => Ok(ActionSpec::doubling()),
        }
    }
}

impl fmt::Display for ActionDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionDescriptor::Translation {
                group,
                gens,
                policy,
                dense,
            } => {
                write!(f, "translation({group}; gens=")?;
                match gens {
                    GeneratorSource::Explicit(v) => {
                        let s: Vec<String> = v.iter().map(|e| group.format_element(e)).collect();
                        write!(f, "{}", s.join(","))?;
                    }
                    GeneratorSource::Haar(k) => write!(f, "haar:{k}")?,
                }
                if *policy == IndexPolicy::Strict {
                    write!(f, "; policy=strict")?;
                }
                if let Some(d) = dense {
                    write!(f, "; dense={d}")?;
                }
                write!(f, ")")
            }
            ActionDescriptor::Rotation(a) => {
                let s: Vec<String> = a.iter().map(f64::to_string).collect();
                write!(f, "rotation({})", s.join(","))
            }
            ActionDescriptor::Doubling => write!(f, "doubling-fixture"),
        }
    }
}

impl FromStr for ActionDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let bad = |reason: String| Error::parse("action", t, reason);
        if t == "doubling-fixture" {
            return Ok(ActionDescriptor::Doubling);
        }
        let (head, body) = t
            .split_once('(')
            .and_then(|(h, rest)| rest.strip_suffix(')').map(|b| (h.trim(), b)))
            .ok_or_else(|| bad("expected `name(...)` or `doubling-fixture`".into()))?;
        match head {
            "rotation" => {
                let angles = body
                    .split(',')
                    .map(|a| a.trim().parse::<f64>().map_err(|e| bad(e.to_string())))
                    .collect::<Result<Vec<_>>>()?;
                if angles.is_empty() || angles.iter().any(|a| !a.is_finite()) {
                    return Err(bad("angles must be finite".into()));
                }
                Ok(ActionDescriptor::Rotation(angles))
            }
            "translation" => {
                let mut parts = body.split(';').map(str::trim);
                let group: GroupSpec = parts
                    .next()
                    .ok_or_else(|| bad("missing group".into()))?
                    .parse()?;
                let mut gens = None;
                let mut policy = IndexPolicy::Cycle;
                let mut dense = None;
                for part in parts {
                    let (k, v) = part
                        .split_once('=')
                        .ok_or_else(|| bad(format!("expected key=value, got `{part}`")))?;
                    match k.trim() {
                        "gens" => {
                            let v = v.trim();
                            gens = Some(if let Some(count) = v.strip_prefix("haar:") {
                                let k: usize = count.parse().map_err(|e| bad(format!("{e}")))?;
                                if k == 0 {
                                    return Err(bad("need at least one generator".into()));
                                }
                                GeneratorSource::Haar(k)
                            } else {
                                GeneratorSource::Explicit(
                                    v.split(',')
                                        .map(|e| group.parse_element(e))
                                        .collect::<Result<_>>()?,
                                )
                            });
                        }
                        "policy" => {
                            policy = match v.trim() {
                                "cycle" => IndexPolicy::Cycle,
                                "strict" => IndexPolicy::Strict,
                                other => return Err(bad(format!("unknown policy `{other}`"))),
                            }
                        }
                        "dense" => {
                            dense = Some(v.trim().parse().map_err(|_| {
                                bad(format!("dense must be true or false, got `{}`", v.trim()))
                            })?)
                        }
                        other => return Err(bad(format!("unknown key `{other}`"))),
                    }
                }
                let gens = gens.ok_or_else(|| bad("missing gens=...".into()))?;
                Ok(ActionDescriptor::Translation {
                    group,
                    gens,
                    policy,
                    dense,
                })
            }
            other => Err(bad(format!("unknown action `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(v: f64) -> GroupElement {
        GroupElement::circle(v)
    }

    fn coord(p: &GroupElement) -> f64 {
        p.as_torus().unwrap()[0]
    }

    #[test]
    fn infinity_is_identity() {
        let a = ActionSpec::circle_translation(&[0.25]).unwrap();
        assert_eq!(a.apply_generator(GenIndex::Infinity, &x(0.3)).unwrap(), x(0.3));
        let d = ActionSpec::doubling();
        assert_eq!(d.apply_generator(GenIndex::Infinity, &x(0.3)).unwrap(), x(0.3));
    }

    #[test]
    fn generator_examples() {
        let a = ActionSpec::circle_translation(&[0.25]).unwrap();
        let y = a.apply_generator(GenIndex::Finite(1), &x(0.5)).unwrap();
        assert!((coord(&y) - 0.75).abs() < 1e-15);

        let d = ActionSpec::doubling();
        let y = d.apply_generator(GenIndex::Finite(1), &x(0.3)).unwrap();
        assert!((coord(&y) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn word_examples() {
        let a = ActionSpec::circle_translation(&[0.25]).unwrap();
        let w = Word::from_indices(&[1, 1, 1]).unwrap();
        assert!((coord(&a.apply_word(&w, &x(0.0)).unwrap()) - 0.75).abs() < 1e-15);
        let single = Word::from_indices(&[1]).unwrap();
        assert_eq!(
            a.apply_word(&single, &x(0.1)).unwrap(),
            a.apply_generator(GenIndex::Finite(1), &x(0.1)).unwrap()
        );
    }

    #[test]
    fn cycling_and_strict_policies() {
        let a = ActionSpec::circle_translation(&[0.1, 0.2]).unwrap();
        assert_eq!(a.slot(GenIndex::Finite(3)).unwrap(), Some(0));
        assert_eq!(a.slot(GenIndex::Finite(4)).unwrap(), Some(1));
        let strict = a.with_policy(IndexPolicy::Strict);
        assert!(strict.slot(GenIndex::Finite(2)).is_ok());
        assert!(matches!(
            strict.apply_generator(GenIndex::Finite(3), &x(0.0)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn doubling_is_quarantined() {
        assert!(ActionSpec::doubling().require_invertible().is_err());
        assert!(ActionSpec::circle_translation(&[0.1])
            .unwrap()
            .require_invertible()
            .is_ok());
    }

    #[test]
    fn words_reject_zero_and_empty() {
        assert!(Word::from_indices(&[]).is_err());
        assert!(Word::from_indices(&[1, 0]).is_err());
        assert!("0".parse::<GenIndex>().is_err());
        assert_eq!("inf".parse::<GenIndex>().unwrap(), GenIndex::Infinity);
    }

    #[test]
    fn word_json_uses_inf_token() {
        let w = Word::new(vec![GenIndex::Finite(2), GenIndex::Infinity]).unwrap();
        let s = serde_json::to_string(&w).unwrap();
        assert_eq!(s, r#"[2,"inf"]"#);
        let back: Word = serde_json::from_str(&s).unwrap();
        assert_eq!(back, w);
        assert!(serde_json::from_str::<Word>("[]").is_err());
    }

    #[test]
    fn descriptors_parse_and_print() {
        for s in [
            "translation(torus:1; gens=0.618034,0.414214)",
            "translation(su2; gens=haar:2)",
            "translation(cyclic:6; gens=1; policy=strict; dense=true)",
            "rotation(0.25,0.5)",
            "doubling-fixture",
        ] {
            let d: ActionDescriptor = s.parse().unwrap();
            assert_eq!(d.to_string(), s);
        }
        assert!("translation(torus:1)".parse::<ActionDescriptor>().is_err());
        assert!("translation(torus:0; gens=0.1)".parse::<ActionDescriptor>().is_err());
        assert!("spin(1)".parse::<ActionDescriptor>().is_err());
    }

    #[test]
    fn haar_generators_follow_seed() {
        let d: ActionDescriptor = "translation(su2; gens=haar:2)".parse().unwrap();
        assert_eq!(d.resolve(5).unwrap(), d.resolve(5).unwrap());
        assert_ne!(d.resolve(5).unwrap(), d.resolve(6).unwrap());
    }
}
