//! Random-product orbits and the skew product over the Bernoulli shift.
//!
//! For indices `r_1, r_2, ...` drawn i.i.d. from a probability sequence the
//! orbit is `w_n = Φ_{r_n}(... Φ_{r_1}(x))`. Index `r_n` is the value of the
//! seed's index stream at coordinate `n`, so a [`ShiftWindow`] built from the
//! same seed sees exactly the same indices: after `n` skew steps from offset
//! 0, the `X` component equals `w_n`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actions::{ActionKind, ActionSpec, GenIndex};
use crate::bernoulli::{Cylinder, IndexSource, ProbabilitySequence, ShiftWindow};
use crate::error::{Error, Result};
use crate::functions::TestFunction;
use crate::groups::GroupElement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProductOrder {
    /// `w_n = Φ_{r_n} ∘ ... ∘ Φ_{r_1}(x)`.
    #[default]
    Composition,
    /// `x · (z_{r_1} ··· z_{r_n})`, accumulated in the group. Translation
    /// actions only.
    RightMultiplication,
}

impl std::fmt::Display for ProductOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProductOrder::Composition => "composition",
            ProductOrder::RightMultiplication => "right-multiplication",
        })
    }
}

impl std::str::FromStr for ProductOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "composition" => Ok(ProductOrder::Composition),
            "right-multiplication" => Ok(ProductOrder::RightMultiplication),
            other => Err(Error::parse(
                "product order",
                other,
                "expected `composition` or `right-multiplication`",
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OrbitConfig {
    pub action: ActionSpec,
    pub start: GroupElement,
    pub law: ProbabilitySequence,
    /// Number of emitted points `N`.
    pub len: usize,
    pub seed: u64,
    pub order: ProductOrder,
    /// Steps taken before the first emitted point.
    pub burn_in: usize,
}

impl OrbitConfig {
    /// Composition order, no burn-in.
    pub fn new(
        action: ActionSpec,
        start: GroupElement,
        law: ProbabilitySequence,
        len: usize,
        seed: u64,
    ) -> OrbitConfig {
        OrbitConfig {
            action,
            start,
            law,
            len,
            seed,
            order: ProductOrder::Composition,
            burn_in: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.len == 0 {
            return Err(Error::invalid("orbit length must be ≥ 1"));
        }
        self.action.require_invertible()?;
        self.action.space().check(&self.start)?;
        if self.order == ProductOrder::RightMultiplication
            && !matches!(self.action.kind(), ActionKind::Translation(_))
        {
            return Err(Error::invalid(
                "right-multiplication order needs a translation action",
            ));
        }
        Ok(())
    }
}

/// Streaming orbit. Each `next` applies exactly one generator.
pub struct Orbit {
    cfg: OrbitConfig,
    source: IndexSource,
    /// Current point for composition order, running product for
    /// right-multiplication order.
    state: GroupElement,
    step: u64,
    emitted: usize,
    failed: bool,
}

impl Orbit {
    fn advance(&mut self) -> Result<()> {
        self.step += 1;
        let index = GenIndex::Finite(self.source.at(self.step as i64));
        match self.cfg.order {
            ProductOrder::Composition => {
                self.state = self.cfg.action.apply_generator(index, &self.state)?;
            }
            ProductOrder::RightMultiplication => {
                if let (Some(slot), ActionKind::Translation(g)) =
                    (self.cfg.action.slot(index)?, self.cfg.action.kind())
                {
                    self.state = g.spec().compose(&self.state, &g.elements()[slot])?;
                }
            }
        }
        Ok(())
    }

    fn current(&self) -> Result<GroupElement> {
        match self.cfg.order {
            ProductOrder::Composition => Ok(self.state.clone()),
            ProductOrder::RightMultiplication => {
                self.cfg.action.space().compose(&self.cfg.start, &self.state)
            }
        }
    }

    /// Number of generator applications so far.
    pub fn steps(&self) -> u64 {
        self.step
    }
}

impl Iterator for Orbit {
    type Item = Result<GroupElement>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.emitted >= self.cfg.len {
            return None;
        }
        while self.step < self.cfg.burn_in as u64 {
            if let Err(e) = self.advance() {
                self.failed = true;
                return Some(Err(e));
            }
        }
        let r = self.advance().and_then(|()| self.current());
        self.failed = r.is_err();
        self.emitted += 1;
        Some(r)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.cfg.len - self.emitted;
        (0, Some(left))
    }
}

/// Emits `w_{b+1}, ..., w_{b+N}` for burn-in `b`.
pub fn random_product_orbit(cfg: OrbitConfig) -> Result<Orbit> {
    cfg.validate()?;
    let state = match cfg.order {
        ProductOrder::Composition => cfg.start.clone(),
        ProductOrder::RightMultiplication => cfg.action.space().identity(),
    };
    Ok(Orbit {
        source: IndexSource::new(cfg.law.clone(), cfg.seed),
        cfg,
        state,
        step: 0,
        emitted: 0,
        failed: false,
    })
}

/// Collects the whole orbit.
pub fn orbit_points(cfg: OrbitConfig) -> Result<Vec<GroupElement>> {
    random_product_orbit(cfg)?.collect()
}

/// A point `(x, r)` of `X × Y`.
#[derive(Debug, Clone)]
pub struct SkewState {
    pub x: GroupElement,
    pub window: ShiftWindow,
}

impl SkewState {
    pub fn new(x: GroupElement, window: ShiftWindow) -> SkewState {
        SkewState { x, window }
    }
}

/// `Ψ(x, r) = (Φ_{r_1}(x), T(r))`.
pub fn skew_step(action: &ActionSpec, s: &SkewState) -> Result<SkewState> {
    Ok(SkewState {
        x: action.apply_generator(s.window.read(1), &s.x)?,
        window: s.window.shift(),
    })
}

/// In-place form of [`skew_step`].
pub fn skew_step_mut(action: &ActionSpec, s: &mut SkewState) -> Result<()> {
    s.x = action.apply_generator(s.window.read(1), &s.x)?;
    s.window.shift_in_place();
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductMeasureReport {
    pub time_average: f64,
    /// `(∫f dμ) · λ(c)`.
    pub target: f64,
    /// `time_average - target`.
    pub deviation: f64,
    pub n: usize,
    pub seed: u64,
    pub function: String,
    pub cylinder: String,
    /// Naive standard error assuming independent terms.
    pub std_error: f64,
}

/// Settings shared by [`product_measure_test`] and [`product_measure_grid`].
#[derive(Debug, Clone)]
pub struct SkewRun {
    pub action: ActionSpec,
    pub law: ProbabilitySequence,
    /// Start point; `None` means the identity of the space.
    pub start: Option<GroupElement>,
    pub n: usize,
    pub seed: u64,
    pub burn_in: usize,
}

impl SkewRun {
    pub fn new(action: ActionSpec, law: ProbabilitySequence, n: usize, seed: u64) -> SkewRun {
        SkewRun {
            action,
            law,
            start: None,
            n,
            seed,
            burn_in: 0,
        }
    }
}

/// Time average of `f(x_j) · 1[r^{(j)} ∈ c]` over `j = 0..N-1` along the skew
/// orbit, against `(∫f dμ) λ(c)`.
pub fn product_measure_test(
    run: &SkewRun,
    f: &TestFunction,
    c: &Cylinder,
) -> Result<ProductMeasureReport> {
    let mut v = product_measure_grid(run, std::slice::from_ref(f), std::slice::from_ref(c))?;
    Ok(v.remove(0))
}

/// All `(f, c)` pairs from one pass over the skew orbit. Reports are in
/// row-major order: functions outer, cylinders inner.
pub fn product_measure_grid(
    run: &SkewRun,
    fs: &[TestFunction],
    cs: &[Cylinder],
) -> Result<Vec<ProductMeasureReport>> {
    if run.n == 0 {
        return Err(Error::invalid("sample size must be ≥ 1"));
    }
    if fs.is_empty() || cs.is_empty() {
        return Err(Error::invalid("need at least one function and one cylinder"));
    }
    run.action.require_invertible()?;
    let space = run.action.space();
    for f in fs {
        f.check(&space)?;
    }
    let x0 = match &run.start {
        Some(x) => {
            space.check(x)?;
            x.clone()
        }
        None => space.identity(),
    };
    let window = ShiftWindow::new(IndexSource::new(run.law.clone(), run.seed));
    let mut state = SkewState::new(x0, window);
    for _ in 0..run.burn_in {
        skew_step_mut(&run.action, &mut state)?;
    }

    let pairs = fs.len() * cs.len();
    let mut sum = vec![0.0f64; pairs];
    let mut sum_sq = vec![0.0f64; pairs];
    let mut fvals = vec![0.0f64; fs.len()];
    for _ in 0..run.n {
        for (v, f) in fvals.iter_mut().zip(fs) {
            *v = f.eval(&state.x);
        }
        for (ci, c) in cs.iter().enumerate() {
            if c.matches(&state.window) {
                for (fi, &v) in fvals.iter().enumerate() {
                    sum[fi * cs.len() + ci] += v;
                    sum_sq[fi * cs.len() + ci] += v * v;
                }
            }
        }
        skew_step_mut(&run.action, &mut state)?;
    }

    let n = run.n as f64;
    let mut out = Vec::with_capacity(pairs);
    for (fi, f) in fs.iter().enumerate() {
        let integral = f.haar_integral(&space)?;
        for (ci, c) in cs.iter().enumerate() {
            let k = fi * cs.len() + ci;
            let mean = sum[k] / n;
            let var = (sum_sq[k] / n - mean * mean).max(0.0);
            let target = integral * c.measure(&run.law);
            out.push(ProductMeasureReport {
                time_average: mean,
                target,
                deviation: mean - target,
                n: run.n,
                seed: run.seed,
                function: f.to_string(),
                cylinder: c.to_string(),
                std_error: (var / n).sqrt(),
            });
        }
    }
    Ok(out)
}

/// Independent orbits for several seeds, run concurrently. Results are in
/// seed order.
pub fn orbits_for_seeds(base: &OrbitConfig, seeds: &[u64]) -> Result<Vec<Vec<GroupElement>>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut cfg = base.clone();
            cfg.seed = seed;
            orbit_points(cfg)
        })
        .collect()
}
