//! Bounded continuous test functions on the implemented spaces, with their
//! sup norms and exact Haar integrals.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::groups::{GroupElement, GroupSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    Constant(f64),
    /// `cos(2π k·x)` on a torus.
    TorusCos(Vec<i64>),
    /// `sin(2π k·x)` on a torus.
    TorusSin(Vec<i64>),
    /// Spin-`j` character of SU(2), stored as `2j`.
    Su2Character { twice_spin: u32 },
    /// `w^a x^b y^c z^d` in the quaternion coordinates.
    Su2Monomial([u32; 4]),
    /// Indicator of one element of a finite group.
    Indicator(GroupElement),
}

/// Fractional part of `k·x`, kept in `[0,1)` before scaling by 2π.
#[inline]
pub fn torus_phase(k: &[i64], x: &[f64]) -> f64 {
    let t: f64 = k.iter().zip(x).map(|(&ki, &xi)| ki as f64 * xi).sum();
    t - t.floor()
}

/// `χ_j` at a unit quaternion: `U_{2j}(w)`, the Chebyshev polynomial of the
/// second kind, which equals `sin((2j+1)θ)/sin θ` for `w = cos θ`.
pub fn su2_character(twice_spin: u32, w: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 2.0 * w);
    if twice_spin == 0 {
        return 1.0;
    }
    for _ in 1..twice_spin {
        let next = 2.0 * w * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

fn odd_double_factorial(b: u32) -> f64 {
    // (2b - 1)!!
    (1..=b).map(|i| f64::from(2 * i - 1)).product()
}

impl TestFunction {
    /// Whether the function is defined on `space`.
    pub fn supports(&self, space: &GroupSpec) -> bool {
        match (self, space) {
            (TestFunction::Constant(_), _) => true,
            (TestFunction::TorusCos(k) | TestFunction::TorusSin(k), GroupSpec::Torus { dim }) => {
                k.len() == *dim
            }
            (TestFunction::Su2Character { .. } | TestFunction::Su2Monomial(_), GroupSpec::Su2) => {
                true
            }
            (TestFunction::Indicator(e), s) => s.is_finite() && s.check(e).is_ok(),
            _ => false,
        }
    }

    pub fn check(&self, space: &GroupSpec) -> Result<()> {
        if self.supports(space) {
            Ok(())
        } else {
            Err(Error::invalid(format!("test function {self} is not defined on {space}")))
        }
    }

    /// Value at `x`; NaN if `x` is not a point of a supported space.
    pub fn eval(&self, x: &GroupElement) -> f64 {
        match (self, x) {
            (TestFunction::Constant(c), _) => *c,
            (TestFunction::TorusCos(k), GroupElement::Torus(v)) => (TAU * torus_phase(k, v)).cos(),
            (TestFunction::TorusSin(k), GroupElement::Torus(v)) => (TAU * torus_phase(k, v)).sin(),
            (TestFunction::Su2Character { twice_spin }, GroupElement::Su2(q)) => {
                su2_character(*twice_spin, q.0[0])
            }
            (TestFunction::Su2Monomial(a), GroupElement::Su2(q)) => q
                .0
                .iter()
                .zip(a)
                .map(|(c, &e)| c.powi(e as i32))
                .product(),
            (TestFunction::Indicator(e), y) => f64::from(u8::from(e == y)),
            _ => f64::NAN,
        }
    }

    /// `‖f‖_∞`.
    pub fn sup_norm(&self) -> f64 {
        match self {
            TestFunction::Constant(c) => c.abs(),
            TestFunction::TorusCos(_) => 1.0,
            TestFunction::TorusSin(k) => {
                if k.iter().all(|&v| v == 0) {
                    0.0
                } else {
                    1.0
                }
            }
            TestFunction::Su2Character { twice_spin } => f64::from(twice_spin + 1),
            TestFunction::Su2Monomial(a) => {
                // max of Π|q_i|^{a_i} on the sphere is at q_i² = a_i/|a|
                let total: u32 = a.iter().sum();
                if total == 0 {
                    return 1.0;
                }
                a.iter()
                    .filter(|&&e| e > 0)
                    .map(|&e| (f64::from(e) / f64::from(total)).powf(f64::from(e) / 2.0))
                    .product()
            }
            TestFunction::Indicator(_) => 1.0,
        }
    }

    /// Integral against the Haar measure of `space`.
    pub fn haar_integral(&self, space: &GroupSpec) -> Result<f64> {
        self.check(space)?;
        Ok(match self {
            TestFunction::Constant(c) => *c,
            TestFunction::TorusCos(k) => f64::from(u8::from(k.iter().all(|&v| v == 0))),
            TestFunction::TorusSin(_) => 0.0,
            TestFunction::Su2Character { twice_spin } => f64::from(u8::from(*twice_spin == 0)),
            TestFunction::Su2Monomial(a) => {
                // Uniform measure on S^3:
                // E[Π q_i^{2b_i}] = Π (2b_i - 1)!! / 2^{b_i} / (Σ b_i + 1)!
                if a.iter().any(|e| e % 2 == 1) {
                    0.0
                } else {
                    let b: Vec<u32> = a.iter().map(|e| e / 2).collect();
                    let num: f64 = b
                        .iter()
                        .map(|&bi| odd_double_factorial(bi) / 2f64.powi(bi as i32))
                        .product();
                    let s: u32 = b.iter().sum();
                    let fact: f64 = (1..=s + 1).map(f64::from).product();
                    num / fact
                }
            }
            TestFunction::Indicator(_) => 1.0 / space.order().expect("finite") as f64,
        })
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ks = |k: &[i64]| k.iter().map(i64::to_string).collect::<Vec<_>>().join("/");
        match self {
            TestFunction::Constant(c) => write!(f, "const:{c}"),
            TestFunction::TorusCos(k) => write!(f, "cos:{}", ks(k)),
            TestFunction::TorusSin(k) => write!(f, "sin:{}", ks(k)),
            TestFunction::Su2Character { twice_spin } => write!(f, "chi:{twice_spin}"),
            TestFunction::Su2Monomial(a) => {
                write!(f, "mono:{}/{}/{}/{}", a[0], a[1], a[2], a[3])
            }
            TestFunction::Indicator(e) => write!(f, "indicator:{e:?}"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    /// `const:c`, `cos:k1/k2/...`, `sin:k1/...`, `chi:2j`, `mono:a/b/c/d`.
    /// Indicators need a group and are built in code.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let bad = |reason: String| Error::parse("test function", t, reason);
        let (name, arg) = t
            .split_once(':')
            .ok_or_else(|| bad("expected `kind:argument`".into()))?;
        let ints = |a: &str| -> Result<Vec<i64>> {
            a.split('/')
                .map(|v| v.trim().parse::<i64>().map_err(|e| bad(e.to_string())))
                .collect()
        };
        match name {
            "const" => Ok(TestFunction::Constant(
                arg.trim().parse().map_err(|e| bad(format!("{e}")))?,
            )),
            "cos" => Ok(TestFunction::TorusCos(ints(arg)?)),
            "sin" => Ok(TestFunction::TorusSin(ints(arg)?)),
            "chi" => Ok(TestFunction::Su2Character {
                twice_spin: arg.trim().parse().map_err(|e| bad(format!("{e}")))?,
            }),
            "mono" => {
                let v = ints(arg)?;
                match v.as_slice() {
                    [a, b, c, d] if v.iter().all(|&e| e >= 0) => Ok(TestFunction::Su2Monomial([
                        *a as u32, *b as u32, *c as u32, *d as u32,
                    ])),
                    _ => Err(bad("expected four non-negative exponents".into())),
                }
            }
            other => Err(bad(format!("unknown function kind `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::Quaternion;
    use crate::rng;

    #[test]
    fn su2_character_closed_form() {
        for twice_spin in 0..6u32 {
            for &theta in &[0.3f64, 1.1, 2.0, 2.9] {
                let direct =
                    ((f64::from(twice_spin) + 1.0) * theta).sin() / theta.sin();
                let via = su2_character(twice_spin, theta.cos());
                assert!((direct - via).abs() < 1e-12, "{twice_spin} {theta}");
            }
        }
        assert_eq!(su2_character(1, 1.0), 2.0);
        assert_eq!(su2_character(4, 1.0), 5.0);
    }

    #[test]
    fn monomial_moments_match_monte_carlo() {
        let su2 = GroupSpec::Su2;
        let mut r = rng::stream_rng(9, rng::module::HAAR, 0);
        let pts: Vec<_> = (0..200_000).map(|_| su2.haar_sample(&mut r)).collect();
        for a in [[2, 0, 0, 0], [0, 2, 2, 0], [4, 0, 0, 0], [2, 2, 2, 0]] {
            let f = TestFunction::Su2Monomial(a);
            let exact = f.haar_integral(&su2).unwrap();
            let mc: f64 = pts.iter().map(|p| f.eval(p)).sum::<f64>() / pts.len() as f64;
            // each monomial here is bounded by 1, sd of the mean < 1/sqrt(N)
            assert!((exact - mc).abs() < 4.0 / (pts.len() as f64).sqrt(), "{a:?}");
        }
        assert!((TestFunction::Su2Monomial([2, 0, 0, 0]).haar_integral(&su2).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn monomial_sup_norm() {
        let f = TestFunction::Su2Monomial([1, 1, 0, 0]);
        assert!((f.sup_norm() - 0.5).abs() < 1e-15);
        let q = GroupElement::Su2(Quaternion([0.5f64.sqrt(), 0.5f64.sqrt(), 0.0, 0.0]));
        assert!((f.eval(&q) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn torus_functions() {
        let f = TestFunction::TorusCos(vec![1]);
        assert!((f.eval(&GroupElement::circle(0.5)) + 1.0).abs() < 1e-15);
        assert_eq!(f.haar_integral(&GroupSpec::torus(1).unwrap()).unwrap(), 0.0);
        assert!(f.check(&GroupSpec::torus(2).unwrap()).is_err());
        assert!(f.eval(&GroupElement::Cyclic(0)).is_nan());
    }

    #[test]
    fn parse_functions() {
        for s in ["const:1", "cos:1/2", "sin:3", "chi:2", "mono:1/0/2/0"] {
            let f: TestFunction = s.parse().unwrap();
            assert_eq!(f.to_string(), s);
        }
        assert!("mono:1/2".parse::<TestFunction>().is_err());
    }
}
