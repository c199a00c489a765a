//! Fixed-step explicit Euler for the inclusion, with exact event splitting
//! at discontinuity surfaces and equivalent-control sliding.
//!
//! Between events the selection is constant for quantizer-type systems, so
//! each sub-step is exact. Time samples sit on the grid `k·dt`; event times
//! inside a step are recorded as extra samples.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::inclusion::{
    nominal_from_intervals, set_valued_rhs, sliding_from_intervals, ConsensusSystem, InclusionError,
    SelectionState,
};
use crate::nonlinearity::{FilippovInterval, MonotoneFn};

pub const DEFAULT_EVENT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_CHATTER_WINDOW: usize = 4;
/// Fallback step when no quantizer fixes a natural scale.
pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegratorError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Dimension(#[from] InclusionError),
    #[error("initial state has a non-finite coordinate {coordinate}")]
    NonFiniteInitial { coordinate: usize },
    #[error("state became non-finite at t = {time}, coordinate {coordinate}")]
    NonFiniteState { time: f64, coordinate: usize },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    pub event_tolerance: f64,
    pub chatter_window: usize,
    /// One-step overshoot bound; derived from the system and the initial
    /// box when absent.
    pub snap_band: Option<f64>,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_end: f64) -> Result<Self, IntegratorError> {
        let cfg = Self {
            dt,
            t_end,
            event_tolerance: DEFAULT_EVENT_TOLERANCE,
            chatter_window: DEFAULT_CHATTER_WINDOW,
            snap_band: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), IntegratorError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(IntegratorError::InvalidConfig("dt must be positive and finite"));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(IntegratorError::InvalidConfig("t_end must be positive and finite"));
        }
        if !(self.event_tolerance > 0.0 && self.event_tolerance < self.dt) {
            return Err(IntegratorError::InvalidConfig(
                "event_tolerance must be positive and below dt",
            ));
        }
        if self.chatter_window == 0 {
            return Err(IntegratorError::InvalidConfig("chatter_window must be at least 1"));
        }
        if let Some(b) = self.snap_band {
            if !(b.is_finite() && b > 0.0) {
                return Err(IntegratorError::InvalidConfig("snap_band must be positive and finite"));
            }
        }
        Ok(())
    }

    /// Number of grid steps covering `[0, t_end]`.
    pub fn steps(&self) -> usize {
        let s = libm::ceil(self.t_end / self.dt - 1e-9);
        (s as usize).max(1)
    }

    pub fn resolved_snap_band(&self, sys: &ConsensusSystem, x0: &[f64]) -> f64 {
        self.snap_band.unwrap_or_else(|| overshoot_bound(sys, x0, self.dt))
    }
}

/// `Δ/100` for the smallest quantizer step in the system, else [`DEFAULT_DT`].
pub fn default_dt(sys: &ConsensusSystem) -> f64 {
    sys.nonlinearities()
        .iter()
        .filter_map(|f| f.descriptor().and_then(|d| d.delta()))
        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))))
        .map_or(DEFAULT_DT, |d| d / 100.0)
}

/// `sup |fᵢ|` over the box `[min x0, max x0]`, taken at the box corners by
/// monotonicity.
pub fn sup_abs_f(sys: &ConsensusSystem, x0: &[f64]) -> f64 {
    let lo = x0.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo <= hi) {
        return 0.0;
    }
    sys.nonlinearities()
        .iter()
        .map(|f| {
            let a = f.left_limit(lo).abs().max(f.right_limit(lo).abs());
            let b = f.left_limit(hi).abs().max(f.right_limit(hi).abs());
            a.max(b)
        })
        .fold(0.0, f64::max)
}

/// `dt · max in-degree · sup|f|`.
pub fn overshoot_bound(sys: &ConsensusSystem, x0: &[f64], dt: f64) -> f64 {
    dt * sys.graph().max_in_degree() * sup_abs_f(sys, x0)
}

/// Per-comparison slack for monotonicity checks: twice the snap band.
pub fn chatter_slack(sys: &ConsensusSystem, cfg: &IntegratorConfig, x0: &[f64]) -> f64 {
    2.0 * cfg.resolved_snap_band(sys, x0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum EventKind {
    Crossing,
    SlidingEngage,
    SlidingRelease,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Crossing => "crossing",
            EventKind::SlidingEngage => "sliding-engage",
            EventKind::SlidingRelease => "sliding-release",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Event {
    pub time: f64,
    pub coordinate: usize,
    pub point: f64,
    pub kind: EventKind,
    /// Engagement forced by the chatter detector rather than found by the
    /// locator.
    pub chatter: bool,
}

impl Event {
    /// `kind` column for CSV export.
    pub fn label(&self) -> &'static str {
        match (self.kind, self.chatter) {
            (EventKind::SlidingEngage, true) => "sliding-engage:chatter",
            (k, _) => k.as_str(),
        }
    }
}

/// Recorded samples. `selections[k]` is the selection that drives the
/// motion leaving `states[k]`.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub selections: Vec<SelectionState>,
    pub events: Vec<Event>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    pub fn final_time(&self) -> Option<f64> {
        self.times.last().copied()
    }
}

/// `(coordinate, discontinuity, time to reach it)`.
type Hit = (usize, f64, f64);

#[derive(Debug, Clone, Copy)]
struct Flip {
    step: usize,
    upward: bool,
}

struct Stepper<'a> {
    sys: &'a ConsensusSystem,
    cfg: &'a IntegratorConfig,
    t: f64,
    x: Vec<f64>,
    sliding: Vec<bool>,
    forced: Vec<bool>,
    flips: Vec<Option<Flip>>,
    cache: Option<(Vec<FilippovInterval>, SelectionState)>,
    events: Vec<Event>,
}

impl<'a> Stepper<'a> {
    fn select(&mut self) -> SelectionState {
        let intervals = set_valued_rhs(self.sys, &self.x);
        if let Some((key, sel)) = &self.cache {
            if *key == intervals {
                return sel.clone();
            }
        }
        let sel = if intervals.iter().all(FilippovInterval::is_degenerate) {
            nominal_from_intervals(self.sys, &intervals)
        } else {
            let active: Vec<bool> = intervals.iter().map(|iv| !iv.is_degenerate()).collect();
            sliding_from_intervals(self.sys, &intervals, &active)
        };
        self.cache = Some((intervals, sel.clone()));
        sel
    }

    /// Selection at the current state, logging mode changes.
    fn select_and_log(&mut self) -> SelectionState {
        let sel = self.select();
        for i in 0..self.x.len() {
            let now = sel.sliding_mask[i];
            let kind = if now && !self.sliding[i] {
                Some(EventKind::SlidingEngage)
            } else if !now && self.sliding[i] {
                Some(EventKind::SlidingRelease)
            } else if !now && self.on_surface(i) && sel.derivative[i] != 0.0 {
                Some(EventKind::Crossing)
            } else {
                None
            };
            if let Some(kind) = kind {
                let chatter = kind == EventKind::SlidingEngage && self.forced[i];
                self.events.push(Event {
                    time: self.t,
                    coordinate: i,
                    point: self.x[i],
                    kind,
                    chatter,
                });
            }
            self.sliding[i] = now;
            self.forced[i] = false;
        }
        sel
    }

    fn on_surface(&self, i: usize) -> bool {
        let f = self.sys.nonlinearity(i);
        f.left_limit(self.x[i]) < f.right_limit(self.x[i])
    }

    fn velocity(&self, sel: &SelectionState) -> Vec<f64> {
        sel.derivative
            .iter()
            .zip(&sel.sliding_mask)
            .map(|(&d, &s)| if s { 0.0 } else { d })
            .collect()
    }

    fn check_finite(&self) -> Result<(), IntegratorError> {
        match self.x.iter().position(|v| !v.is_finite()) {
            Some(coordinate) => Err(IntegratorError::NonFiniteState {
                time: self.t,
                coordinate,
            }),
            None => Ok(()),
        }
    }

    /// Earliest surface hit within `h` along `v`: `(τ, [(i, d, τᵢ)])`.
    fn earliest_hit(&self, v: &[f64], h: f64) -> Option<(f64, Vec<Hit>)> {
        let mut hits = Vec::new();
        let mut best = f64::INFINITY;
        for (i, (&xi, &vi)) in self.x.iter().zip(v).enumerate() {
            if vi == 0.0 || self.sliding[i] {
                continue;
            }
            let f = self.sys.nonlinearity(i);
            if !f.has_locator() {
                continue;
            }
            let limit = xi + h * vi;
            if let Some(d) = f.next_discontinuity(xi, vi > 0.0, limit) {
                let tau = ((d - xi) / vi).clamp(0.0, h);
                best = best.min(tau);
                hits.push((i, d, tau));
            }
        }
        (!hits.is_empty()).then_some((best, hits))
    }

    /// Advances to `t_target`, splitting at surfaces. Returns the selection
    /// at the end point.
    fn advance(
        &mut self,
        mut sel: SelectionState,
        t_target: f64,
        traj: &mut Trajectory,
    ) -> Result<SelectionState, IntegratorError> {
        let tol = self.cfg.event_tolerance;
        // Log quantizers passing through zero cross hundreds of cells per step.
        let mut budget = 16 * self.x.len() + 1024;
        loop {
            let h = t_target - self.t;
            if h <= 0.0 {
                self.t = t_target;
                return Ok(sel);
            }
            let v = self.velocity(&sel);
            let hit = if budget == 0 { None } else { self.earliest_hit(&v, h) };
            match hit {
                Some((tau, hits)) => {
                    budget -= 1;
                    for (x, vi) in self.x.iter_mut().zip(&v) {
                        *x += tau * vi;
                    }
                    for &(i, d, ti) in &hits {
                        if ti <= tau + tol {
                            self.x[i] = d;
                        }
                    }
                    self.t = if t_target - (self.t + tau) <= tol {
                        t_target
                    } else {
                        self.t + tau
                    };
                    self.check_finite()?;
                    sel = self.select_and_log();
                    if self.t >= t_target {
                        return Ok(sel);
                    }
                    let last = traj.times.last().copied().unwrap_or(f64::NEG_INFINITY);
                    if self.t > last {
                        traj.times.push(self.t);
                        traj.states.push(self.x.clone());
                        traj.selections.push(sel.clone());
                    }
                }
                None => {
                    for (x, vi) in self.x.iter_mut().zip(&v) {
                        *x += h * vi;
                    }
                    self.t = t_target;
                    self.check_finite()?;
                    return Ok(self.select_and_log());
                }
            }
        }
    }

    /// Chatter detection for coordinates without a locator: opposite value
    /// flips within the window pin the coordinate to the located jump.
    /// Returns true when any coordinate was pinned.
    fn detect_chatter(&mut self, step: usize, prev_x: &[f64], prev_nu: &[f64], nu: &[f64]) -> bool {
        let mut pinned = false;
        for i in 0..self.x.len() {
            let f = self.sys.nonlinearity(i);
            if f.has_locator() || self.sliding[i] || nu[i] == prev_nu[i] {
                continue;
            }
            let upward = self.x[i] > prev_x[i];
            match self.flips[i] {
                Some(flip) if flip.upward != upward && step - flip.step <= self.cfg.chatter_window => {
                    let (a, b) = if upward { (prev_x[i], self.x[i]) } else { (self.x[i], prev_x[i]) };
                    self.x[i] = locate_jump(f, a, b);
                    self.forced[i] = true;
                    self.flips[i] = None;
                    pinned = true;
                }
                _ => self.flips[i] = Some(Flip { step, upward }),
            }
        }
        pinned
    }
}

/// Bisection for the jump of a monotone `f` inside `[a, b]`.
fn locate_jump(f: &dyn MonotoneFn, mut a: f64, mut b: f64) -> f64 {
    let fa = f.evaluate(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if f.evaluate(m) == fa {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

pub fn integrate(sys: &ConsensusSystem, x0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory, IntegratorError> {
    cfg.validate()?;
    sys.check_dim(x0)?;
    if let Some(coordinate) = x0.iter().position(|v| !v.is_finite()) {
        return Err(IntegratorError::NonFiniteInitial { coordinate });
    }
    let n = x0.len();
    let mut st = Stepper {
        sys,
        cfg,
        t: 0.0,
        x: x0.to_vec(),
        sliding: vec![false; n],
        forced: vec![false; n],
        flips: vec![None; n],
        cache: None,
        events: Vec::new(),
    };
    let steps = cfg.steps();
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        selections: Vec::with_capacity(steps + 1),
        events: Vec::new(),
    };
    let mut sel = st.select_and_log();
    traj.times.push(0.0);
    traj.states.push(st.x.clone());
    traj.selections.push(sel.clone());
    let needs_chatter = sys.nonlinearities().iter().any(|f| !f.has_locator());
    for k in 0..steps {
        let t_target = (k + 1) as f64 * cfg.dt;
        let prev_x = st.x.clone();
        let prev_nu = sel.nu.clone();
        sel = st.advance(sel, t_target, &mut traj)?;
        if needs_chatter && st.detect_chatter(k, &prev_x, &prev_nu, &sel.nu.clone()) {
            sel = st.select_and_log();
        }
        traj.times.push(st.t);
        traj.states.push(st.x.clone());
        traj.selections.push(sel.clone());
    }
    traj.events = st.events;
    Ok(traj)
}

/// Error from one member of a batch.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("initial condition {index}: {source}")]
pub struct BatchError {
    pub index: usize,
    pub source: IntegratorError,
}

/// Sequential batch; order matches `initials`.
pub fn batch_integrate(
    sys: &ConsensusSystem,
    initials: &[Vec<f64>],
    cfg: &IntegratorConfig,
) -> Result<Vec<Trajectory>, BatchError> {
    initials
        .iter()
        .enumerate()
        .map(|(index, x0)| integrate(sys, x0, cfg).map_err(|source| BatchError { index, source }))
        .collect()
}
