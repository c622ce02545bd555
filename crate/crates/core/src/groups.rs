//! Concrete compact metrizable groups.
//!
//! Each [`GroupSpec`] supplies an identity, composition, inversion, a
//! bi-invariant metric and a Haar sampler. Elements are plain values and all
//! operations are pure.
//!
//! Metrics:
//! - torus: max over coordinates of the circle distance `min(|x-y|, 1-|x-y|)`;
//! - finite groups: the discrete 0/1 metric;
//! - SU(2): the great-circle distance `arccos <p, q>` on the unit 3-sphere,
//!   divided by `pi` so it lies in `[0, 1]`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Largest permutation degree accepted.
pub const MAX_PERMUTATION_DEGREE: usize = 12;

/// Tolerance used when comparing continuous group elements.
pub const CONTINUOUS_EQ_TOL: f64 = 1e-10;

/// SU(2) elements must have quaternion norm within this of 1.
pub const SU2_NORM_TOL: f64 = 1e-12;

/// Descriptor of a compact group.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GroupSpec {
    /// `[0,1)^dim` under addition mod 1.
    Torus { dim: usize },
    /// `Z/nZ`.
    Cyclic { order: u64 },
    /// `Z/n1 x Z/n2 x ...`.
    Product { orders: Vec<u64> },
    /// Symmetric group on `degree` points.
    Permutation { degree: usize },
    /// Unit quaternions.
    Su2,
}

/// Unit quaternion `(w, x, y, z)` with `w` the scalar part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion(pub [f64; 4]);

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion([1.0, 0.0, 0.0, 0.0]);

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Quaternion {
        let n = self.norm();
        Quaternion(self.0.map(|c| c / n))
    }

    pub fn mul(&self, other: &Quaternion) -> Quaternion {
        let [a0, a1, a2, a3] = self.0;
        let [b0, b1, b2, b3] = other.0;
        Quaternion([
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        ])
    }

    pub fn conjugate(&self) -> Quaternion {
        let [w, x, y, z] = self.0;
        Quaternion([w, -x, -y, -z])
    }

    pub fn dot(&self, other: &Quaternion) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a * b).sum()
    }

    /// Rotation by `angle` (the full angle of the SO(3) image) about a unit axis.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Quaternion {
        let (s, c) = (0.5 * angle).sin_cos();
        Quaternion([c, s * axis[0], s * axis[1], s * axis[2]]).normalized()
    }
}

/// A value of one of the groups described by [`GroupSpec`].
#[derive(Debug, Clone, PartialEq)]
pub enum GroupElement {
    Torus(Vec<f64>),
    Cyclic(u64),
    Product(Vec<u64>),
    Permutation(Vec<u8>),
    Su2(Quaternion),
}

impl GroupElement {
    /// Convenience constructor for a point of the circle.
    pub fn circle(x: f64) -> GroupElement {
        GroupElement::Torus(vec![wrap_unit(x)])
    }

    /// Torus coordinates, if this is a torus element.
    pub fn as_torus(&self) -> Option<&[f64]> {
        match self {
            GroupElement::Torus(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_su2(&self) -> Option<&Quaternion> {
        match self {
            GroupElement::Su2(q) => Some(q),
            _ => None,
        }
    }

    /// Numeric coordinates used for CSV output.
    pub fn coordinates(&self) -> Vec<f64> {
        match self {
            GroupElement::Torus(v) => v.clone(),
            GroupElement::Cyclic(a) => vec![*a as f64],
            GroupElement::Product(v) => v.iter().map(|&a| a as f64).collect(),
            GroupElement::Permutation(p) => p.iter().map(|&a| f64::from(a)).collect(),
            GroupElement::Su2(q) => q.0.to_vec(),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            GroupElement::Torus(_) => "torus",
            GroupElement::Cyclic(_) => "cyclic",
            GroupElement::Product(_) => "product",
            GroupElement::Permutation(_) => "perm",
            GroupElement::Su2(_) => "su2",
        }
    }
}

/// Reduces a real number into `[0, 1)`.
#[inline]
pub fn wrap_unit(x: f64) -> f64 {
    let y = x - x.floor();
    // `y` can round up to exactly 1.0 for tiny negative inputs.
    y - f64::from(u8::from(y >= 1.0))
}

/// Distance on the circle `R/Z`.
#[inline]
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(1.0 - d)
}

impl GroupSpec {
    pub fn torus(dim: usize) -> Result<Self> {
        let g = GroupSpec::Torus { dim };
        g.validate()?;
        Ok(g)
    }

    pub fn cyclic(order: u64) -> Result<Self> {
        let g = GroupSpec::Cyclic { order };
        g.validate()?;
        Ok(g)
    }

    pub fn product(orders: Vec<u64>) -> Result<Self> {
        let g = GroupSpec::Product { orders };
        g.validate()?;
        Ok(g)
    }

    pub fn permutation(degree: usize) -> Result<Self> {
        let g = GroupSpec::Permutation { degree };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GroupSpec::Torus { dim } if *dim == 0 => Err(Error::invalid("dimension must be ≥ 1")),
            GroupSpec::Cyclic { order } if *order == 0 => Err(Error::invalid("order must be ≥ 1")),
            GroupSpec::Product { orders } => {
                if orders.is_empty() {
                    Err(Error::invalid("product needs at least one factor"))
                } else if orders.contains(&0) {
                    Err(Error::invalid("order must be ≥ 1"))
                } else if orders
                    .iter()
                    .try_fold(1u64, |acc, &n| acc.checked_mul(n))
                    .is_none()
                {
                    Err(Error::invalid("product order overflows u64"))
                } else {
                    Ok(())
                }
            }
            GroupSpec::Permutation { degree } if *degree == 0 => {
                Err(Error::invalid("degree must be ≥ 1"))
            }
            GroupSpec::Permutation { degree } if *degree > MAX_PERMUTATION_DEGREE => Err(
                Error::invalid(format!("degree must be ≤ {MAX_PERMUTATION_DEGREE}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.order().is_some()
    }

    /// Number of elements for finite groups.
    pub fn order(&self) -> Option<u64> {
        match self {
            GroupSpec::Cyclic { order } => Some(*order),
            GroupSpec::Product { orders } => Some(orders.iter().product()),
            GroupSpec::Permutation { degree } => Some((1..=*degree as u64).product()),
            GroupSpec::Torus { .. } | GroupSpec::Su2 => None,
        }
    }

    pub fn is_abelian(&self) -> bool {
        match self {
            GroupSpec::Permutation { degree } => *degree <= 2,
            GroupSpec::Su2 => false,
            _ => true,
        }
    }

    pub fn identity(&self) -> GroupElement {
        match self {
            GroupSpec::Torus { dim } => GroupElement::Torus(vec![0.0; *dim]),
            GroupSpec::Cyclic { .. } => GroupElement::Cyclic(0),
            GroupSpec::Product { orders } => GroupElement::Product(vec![0; orders.len()]),
            GroupSpec::Permutation { degree } => {
                GroupElement::Permutation((0..*degree as u8).collect())
            }
            GroupSpec::Su2 => GroupElement::Su2(Quaternion::IDENTITY),
        }
    }

    /// Checks that `a` is a valid element of this group.
    pub fn check(&self, a: &GroupElement) -> Result<()> {
        let ok = match (self, a) {
            (GroupSpec::Torus { dim }, GroupElement::Torus(v)) => {
                v.len() == *dim && v.iter().all(|x| x.is_finite() && (0.0..1.0).contains(x))
            }
            (GroupSpec::Cyclic { order }, GroupElement::Cyclic(x)) => x < order,
            (GroupSpec::Product { orders }, GroupElement::Product(v)) => {
                v.len() == orders.len() && v.iter().zip(orders).all(|(x, n)| x < n)
            }
            (GroupSpec::Permutation { degree }, GroupElement::Permutation(p)) => {
                let mut seen = vec![false; *degree];
                p.len() == *degree
                    && p.iter().all(|&i| {
                        let i = usize::from(i);
                        i < *degree && !std::mem::replace(&mut seen[i], true)
                    })
            }
            (GroupSpec::Su2, GroupElement::Su2(q)) => (q.norm() - 1.0).abs() <= SU2_NORM_TOL,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{} element {:?} does not belong to {self}",
                a.kind(),
                a
            )))
        }
    }

    fn mismatch(&self, a: &GroupElement, b: &GroupElement) -> Error {
        Error::invalid(format!(
            "elements {a:?} and {b:?} are not both in {self}"
        ))
    }

    /// Group product `a · b`.
    pub fn compose(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        match (self, a, b) {
            (GroupSpec::Torus { dim }, GroupElement::Torus(x), GroupElement::Torus(y))
                if x.len() == *dim && y.len() == *dim =>
            {
                Ok(GroupElement::Torus(
                    x.iter().zip(y).map(|(p, q)| wrap_unit(p + q)).collect(),
                ))
            }
            (GroupSpec::Cyclic { order }, GroupElement::Cyclic(x), GroupElement::Cyclic(y)) => {
                Ok(GroupElement::Cyclic(add_mod(*x, *y, *order)))
            }
            (GroupSpec::Product { orders }, GroupElement::Product(x), GroupElement::Product(y))
                if x.len() == orders.len() && y.len() == orders.len() =>
            {
                Ok(GroupElement::Product(
                    x.iter()
                        .zip(y)
                        .zip(orders)
                        .map(|((p, q), n)| add_mod(*p, *q, *n))
                        .collect(),
                ))
            }
            (
                GroupSpec::Permutation { degree },
                GroupElement::Permutation(p),
                GroupElement::Permutation(q),
            ) if p.len() == *degree && q.len() == *degree => {
                // (p·q)(i) = p(q(i))
                Ok(GroupElement::Permutation(
                    q.iter().map(|&i| p[usize::from(i)]).collect(),
                ))
            }
            (GroupSpec::Su2, GroupElement::Su2(p), GroupElement::Su2(q)) => {
                Ok(GroupElement::Su2(p.mul(q).normalized()))
            }
            _ => Err(self.mismatch(a, b)),
        }
    }

    pub fn inverse(&self, a: &GroupElement) -> Result<GroupElement> {
        self.check(a)?;
        Ok(match (self, a) {
            (_, GroupElement::Torus(x)) => {
                GroupElement::Torus(x.iter().map(|v| wrap_unit(-v)).collect())
            }
            (GroupSpec::Cyclic { order }, GroupElement::Cyclic(x)) => {
                GroupElement::Cyclic((order - x) % order)
            }
            (GroupSpec::Product { orders }, GroupElement::Product(x)) => GroupElement::Product(
                x.iter().zip(orders).map(|(v, n)| (n - v) % n).collect(),
            ),
            (_, GroupElement::Permutation(p)) => {
                let mut inv = vec![0u8; p.len()];
                for (i, &pi) in p.iter().enumerate() {
                    inv[usize::from(pi)] = i as u8;
                }
                GroupElement::Permutation(inv)
            }
            (_, GroupElement::Su2(q)) => GroupElement::Su2(q.conjugate()),
            _ => unreachable!("checked above"),
        })
    }

    /// Bi-invariant metric, normalized so every value lies in `[0, 1]`.
    pub fn metric(&self, a: &GroupElement, b: &GroupElement) -> Result<f64> {
        match (self, a, b) {
            (GroupSpec::Torus { dim }, GroupElement::Torus(x), GroupElement::Torus(y))
                if x.len() == *dim && y.len() == *dim =>
            {
                Ok(x.iter()
                    .zip(y)
                    .map(|(p, q)| circle_distance(*p, *q))
                    .fold(0.0, f64::max))
            }
            (GroupSpec::Su2, GroupElement::Su2(p), GroupElement::Su2(q)) => Ok(su2_distance(p, q)),
            (GroupSpec::Cyclic { .. }, GroupElement::Cyclic(_), GroupElement::Cyclic(_))
            | (GroupSpec::Product { .. }, GroupElement::Product(_), GroupElement::Product(_))
            | (
                GroupSpec::Permutation { .. },
                GroupElement::Permutation(_),
                GroupElement::Permutation(_),
            ) => Ok(if a == b { 0.0 } else { 1.0 }),
            _ => Err(self.mismatch(a, b)),
        }
    }

    /// One draw from the normalized Haar measure.
    pub fn haar_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GroupElement {
        match self {
            GroupSpec::Torus { dim } => {
                GroupElement::Torus((0..*dim).map(|_| rng.random::<f64>()).collect())
            }
            GroupSpec::Cyclic { order } => GroupElement::Cyclic(rng.random_range(0..*order)),
            GroupSpec::Product { orders } => {
                GroupElement::Product(orders.iter().map(|&n| rng.random_range(0..n)).collect())
            }
            GroupSpec::Permutation { degree } => {
                let mut p: Vec<u8> = (0..*degree as u8).collect();
                p.shuffle(rng);
                GroupElement::Permutation(p)
            }
            GroupSpec::Su2 => loop {
                let v: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
                let q = Quaternion(v);
                if q.norm() > 1e-6 {
                    break GroupElement::Su2(q.normalized());
                }
            },
        }
    }

    /// The `index`-th element in a fixed enumeration of a finite group.
    pub fn element_at(&self, index: u64) -> Result<GroupElement> {
        let order = self
            .order()
            .ok_or_else(|| Error::Unsupported(format!("{self} is not finite")))?;
        if index >= order {
            return Err(Error::invalid(format!(
                "index {index} out of range for {self} of order {order}"
            )));
        }
        Ok(match self {
            GroupSpec::Cyclic { .. } => GroupElement::Cyclic(index),
            GroupSpec::Product { orders } => {
                let mut rest = index;
                let mut v = vec![0; orders.len()];
                for (slot, &n) in v.iter_mut().zip(orders).rev() {
                    *slot = rest % n;
                    rest /= n;
                }
                GroupElement::Product(v)
            }
            GroupSpec::Permutation { degree } => {
                // Lehmer code, most significant digit first.
                let mut pool: Vec<u8> = (0..*degree as u8).collect();
                let mut rest = index;
                let mut perm = Vec::with_capacity(*degree);
                for k in (0..*degree).rev() {
                    let f: u64 = (1..=k as u64).product();
                    let digit = (rest / f) as usize;
                    rest %= f;
                    perm.push(pool.remove(digit));
                }
                GroupElement::Permutation(perm)
            }
            _ => unreachable!("infinite groups rejected above"),
        })
    }

    /// Inverse of [`GroupSpec::element_at`].
    pub fn index_of(&self, a: &GroupElement) -> Result<u64> {
        self.check(a)?;
        match (self, a) {
            (GroupSpec::Cyclic { .. }, GroupElement::Cyclic(x)) => Ok(*x),
            (GroupSpec::Product { orders }, GroupElement::Product(v)) => {
                Ok(v.iter().zip(orders).fold(0, |acc, (x, n)| acc * n + x))
            }
            (GroupSpec::Permutation { degree }, GroupElement::Permutation(p)) => {
                let mut pool: Vec<u8> = (0..*degree as u8).collect();
                let mut index = 0u64;
                for (pos, &v) in p.iter().enumerate() {
                    let k = (*degree - 1 - pos) as u64;
                    let digit = pool.iter().position(|&x| x == v).expect("valid permutation");
                    pool.remove(digit);
                    index += digit as u64 * (1..=k).product::<u64>();
                }
                Ok(index)
            }
            _ => Err(Error::Unsupported(format!("{self} is not finite"))),
        }
    }

    /// Parses an element literal. Tuple coordinates are separated by `/`.
    ///
    /// `torus:2` takes `0.1/0.25`, `cyclic:6` takes `4`, `product:2x3` takes
    /// `1/2`, `perm:3` takes `1/2/0`, and `su2` takes `w/x/y/z` (normalized).
    pub fn parse_element(&self, s: &str) -> Result<GroupElement> {
        let parts: Vec<&str> = s.split('/').map(str::trim).collect();
        let bad = |reason: String| Error::parse("group element", s, reason);
        let floats = || -> Result<Vec<f64>> {
            parts
                .iter()
                .map(|p| p.parse::<f64>().map_err(|e| bad(e.to_string())))
                .collect()
        };
        let ints = || -> Result<Vec<u64>> {
            parts
                .iter()
                .map(|p| p.parse::<u64>().map_err(|e| bad(e.to_string())))
                .collect()
        };
        let elem = match self {
            GroupSpec::Torus { .. } => {
                let v = floats()?;
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(bad("coordinates must be finite".into()));
                }
                GroupElement::Torus(v.into_iter().map(wrap_unit).collect())
            }
            GroupSpec::Cyclic { .. } => match ints()?.as_slice() {
                [x] => GroupElement::Cyclic(*x),
                _ => return Err(bad("expected one integer".into())),
            },
            GroupSpec::Product { .. } => GroupElement::Product(ints()?),
            GroupSpec::Permutation { .. } => GroupElement::Permutation(
                ints()?
                    .into_iter()
                    .map(|x| u8::try_from(x).map_err(|e| bad(e.to_string())))
                    .collect::<Result<_>>()?,
            ),
            GroupSpec::Su2 => match floats()?.as_slice() {
                [w, x, y, z] => {
                    let q = Quaternion([*w, *x, *y, *z]);
                    if q.norm() <= 0.0 || !q.norm().is_finite() {
                        return Err(bad("quaternion must be nonzero".into()));
                    }
                    // already-unit input is kept bit-for-bit so literals round-trip
                    if (q.norm() - 1.0).abs() <= 4.0 * f64::EPSILON {
                        GroupElement::Su2(q)
                    } else {
                        GroupElement::Su2(q.normalized())
                    }
                }
                _ => return Err(bad("expected four components".into())),
            },
        };
        self.check(&elem).map_err(|e| bad(e.to_string()))?;
        Ok(elem)
    }

    /// Formats an element so that [`GroupSpec::parse_element`] reads it back.
    pub fn format_element(&self, a: &GroupElement) -> String {
        let join = |v: Vec<String>| v.join("/");
        match a {
            GroupElement::Torus(v) => join(v.iter().map(f64::to_string).collect()),
            GroupElement::Cyclic(x) => x.to_string(),
            GroupElement::Product(v) => join(v.iter().map(u64::to_string).collect()),
            GroupElement::Permutation(p) => join(p.iter().map(u8::to_string).collect()),
            GroupElement::Su2(q) => join(q.0.iter().map(f64::to_string).collect()),
        }
    }
}

#[inline]
fn add_mod(a: u64, b: u64, n: u64) -> u64 {
    ((u128::from(a) + u128::from(b)) % u128::from(n)) as u64
}

/// `arccos <p,q> / pi`, computed from the chord length to keep precision
/// near zero.
fn su2_distance(p: &Quaternion, q: &Quaternion) -> f64 {
    let chord = p
        .0
        .iter()
        .zip(q.0.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let angle = 2.0 * (0.5 * chord).min(1.0).asin();
    (angle / PI).clamp(0.0, 1.0)
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupSpec::Torus { dim } => write!(f, "torus:{dim}"),
            GroupSpec::Cyclic { order } => write!(f, "cyclic:{order}"),
            GroupSpec::Product { orders } => {
                let s: Vec<String> = orders.iter().map(u64::to_string).collect();
                write!(f, "product:{}", s.join("x"))
            }
            GroupSpec::Permutation { degree } => write!(f, "perm:{degree}"),
            GroupSpec::Su2 => write!(f, "su2"),
        }
    }
}

impl FromStr for GroupSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s, None),
        };
        let bad = |reason: String| Error::parse("group", s, reason);
        let need = || arg.ok_or_else(|| bad("missing size parameter".into()));
        let spec = match name {
            "torus" => GroupSpec::Torus {
                dim: need()?.parse().map_err(|e| bad(format!("{e}")))?,
            },
            "cyclic" => GroupSpec::Cyclic {
                order: need()?.parse().map_err(|e| bad(format!("{e}")))?,
            },
            "product" => GroupSpec::Product {
                orders: need()?
                    .split('x')
                    .map(|p| p.trim().parse::<u64>().map_err(|e| bad(format!("{e}"))))
                    .collect::<Result<_>>()?,
            },
            "perm" => GroupSpec::Permutation {
                degree: need()?.parse().map_err(|e| bad(format!("{e}")))?,
            },
            "su2" if arg.is_none() => GroupSpec::Su2,
            "su2" => return Err(bad("su2 takes no parameter".into())),
            other => return Err(bad(format!("unknown group kind `{other}`"))),
        };
        spec.validate().map_err(|e| match e {
            Error::InvalidArgument(m) => bad(m),
            e => e,
        })?;
        Ok(spec)
    }
}

/// A finite list of generators together with the caller's claim about
/// whether they generate a dense subgroup.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSet {
    spec: GroupSpec,
    elements: Vec<GroupElement>,
    density_claim: bool,
}

impl GeneratorSet {
    pub fn new(spec: GroupSpec, elements: Vec<GroupElement>, density_claim: bool) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::invalid("generator set must be nonempty"));
        }
        for e in &elements {
            spec.check(e)?;
        }
        Ok(GeneratorSet {
            spec,
            elements,
            density_claim,
        })
    }

    /// `count` Haar-random generators drawn from `rng`.
    pub fn haar<R: Rng + ?Sized>(spec: GroupSpec, count: usize, rng: &mut R) -> Result<Self> {
        let elements = (0..count).map(|_| spec.haar_sample(rng)).collect();
        // Finitely many Haar draws generate a dense subgroup almost surely
        // for the connected groups here; finite groups make no such promise.
        let dense = matches!(spec, GroupSpec::Torus { .. } | GroupSpec::Su2);
        GeneratorSet::new(spec, elements, dense)
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn density_claim(&self) -> bool {
        self.density_claim
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn c(x: f64) -> GroupElement {
        GroupElement::circle(x)
    }

    #[test]
    fn torus_addition_wraps() {
        let t = GroupSpec::torus(1).unwrap();
        let r = t.compose(&c(0.25), &c(0.5)).unwrap();
        assert!((r.as_torus().unwrap()[0] - 0.75).abs() < 1e-15);
        let r = t.compose(&c(0.75), &c(0.5)).unwrap();
        assert!((r.as_torus().unwrap()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn wrap_never_returns_one() {
        assert_eq!(wrap_unit(-1e-18), 0.0);
        assert_eq!(wrap_unit(1.0), 0.0);
        assert!((wrap_unit(-0.3) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn inverses() {
        let t = GroupSpec::torus(1).unwrap();
        let inv = t.inverse(&c(0.3)).unwrap();
        assert!((inv.as_torus().unwrap()[0] - 0.7).abs() < 1e-15);

        let z6 = GroupSpec::cyclic(6).unwrap();
        assert_eq!(z6.inverse(&GroupElement::Cyclic(2)).unwrap(), GroupElement::Cyclic(4));
        assert_eq!(z6.inverse(&GroupElement::Cyclic(0)).unwrap(), GroupElement::Cyclic(0));

        let s3 = GroupSpec::permutation(3).unwrap();
        let p = GroupElement::Permutation(vec![1, 2, 0]);
        let inv = s3.inverse(&p).unwrap();
        assert_eq!(inv, GroupElement::Permutation(vec![2, 0, 1]));
    }

    #[test]
    fn permutation_inverse_by_brute_force() {
        // Search all of S_3 for the element composing with (1 2 0) to the identity.
        let s3 = GroupSpec::permutation(3).unwrap();
        let p = GroupElement::Permutation(vec![1, 2, 0]);
        let e = s3.identity();
        let found: Vec<_> = (0..6)
            .map(|i| s3.element_at(i).unwrap())
            .filter(|q| s3.compose(&p, q).unwrap() == e && s3.compose(q, &p).unwrap() == e)
            .collect();
        assert_eq!(found, vec![GroupElement::Permutation(vec![2, 0, 1])]);
    }

    #[test]
    fn su2_inverse_law() {
        let g = GroupSpec::Su2;
        let mut r = rng::stream_rng(1, rng::module::HAAR, 0);
        for _ in 0..100 {
            let q = g.haar_sample(&mut r);
            let e = g.compose(&q, &g.inverse(&q).unwrap()).unwrap();
            let e = e.as_su2().unwrap();
            assert!((e.0[0] - 1.0).abs() < 1e-12);
            assert!(e.0[1..].iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn circle_metric_wraps() {
        let t = GroupSpec::torus(1).unwrap();
        assert!((t.metric(&c(0.1), &c(0.9)).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(t.metric(&c(0.4), &c(0.4)).unwrap(), 0.0);
    }

    #[test]
    fn su2_metric_range() {
        let g = GroupSpec::Su2;
        let e = g.identity();
        let q = GroupElement::Su2(Quaternion([0.0, 1.0, 0.0, 0.0]));
        assert!((g.metric(&e, &q).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(g.metric(&e, &e).unwrap(), 0.0);
        // -1 is the antipode of the identity
        let minus = GroupElement::Su2(Quaternion([-1.0, 0.0, 0.0, 0.0]));
        assert!((g.metric(&e, &minus).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn finite_enumeration_round_trips() {
        for spec in [
            GroupSpec::cyclic(7).unwrap(),
            GroupSpec::product(vec![2, 3, 4]).unwrap(),
            GroupSpec::permutation(4).unwrap(),
        ] {
            let n = spec.order().unwrap();
            let mut seen = std::collections::HashSet::new();
            for i in 0..n {
                let a = spec.element_at(i).unwrap();
                spec.check(&a).unwrap();
                assert_eq!(spec.index_of(&a).unwrap(), i);
                assert!(seen.insert(format!("{a:?}")));
            }
        }
    }

    #[test]
    fn mismatched_elements_are_rejected() {
        let t = GroupSpec::torus(1).unwrap();
        assert!(matches!(
            t.compose(&c(0.1), &GroupElement::Cyclic(1)),
            Err(Error::InvalidArgument(_))
        ));
        let t2 = GroupSpec::torus(2).unwrap();
        assert!(t2.compose(&c(0.1), &c(0.2)).is_err());
    }

    #[test]
    fn parse_and_display() {
        for s in ["torus:3", "cyclic:6", "product:2x3x5", "perm:5", "su2"] {
            let g: GroupSpec = s.parse().unwrap();
            assert_eq!(g.to_string(), s);
        }
        let err = "torus:0".parse::<GroupSpec>().unwrap_err().to_string();
        assert!(err.contains("dimension must be ≥ 1"), "{err}");
        assert!("perm:13".parse::<GroupSpec>().is_err());
        assert!("cyclic:0".parse::<GroupSpec>().is_err());
        assert!("klein".parse::<GroupSpec>().is_err());
    }

    #[test]
    fn element_literals() {
        let su2 = GroupSpec::Su2;
        let q = su2.parse_element("2/0/0/0").unwrap();
        assert_eq!(q, su2.identity());
        let s3 = GroupSpec::permutation(3).unwrap();
        assert!(s3.parse_element("0/0/1").is_err());
        let t = GroupSpec::torus(2).unwrap();
        let x = t.parse_element("1.25/-0.25").unwrap();
        assert_eq!(x, GroupElement::Torus(vec![0.25, 0.75]));
        assert_eq!(t.parse_element(&t.format_element(&x)).unwrap(), x);
    }

    #[test]
    fn generator_sets_validate() {
        let t = GroupSpec::torus(1).unwrap();
        assert!(GeneratorSet::new(t.clone(), vec![], true).is_err());
        assert!(GeneratorSet::new(t.clone(), vec![GroupElement::Cyclic(0)], true).is_err());
        let g = GeneratorSet::new(t, vec![c(0.5)], false).unwrap();
        assert_eq!(g.len(), 1);
    }
}
