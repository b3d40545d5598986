//! Axis-aligned boxes used for initial sets, domains and unsafe sets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::State;

/// Closed axis-aligned box `[lo_1, hi_1] x ... x [lo_n, hi_n]`.
///
/// Bounds may be infinite, which makes the box unbounded along that axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperbox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Hyperbox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::input(format!("box bounds have lengths {} and {}", lo.len(), hi.len())));
        }
        for (i, (l, h)) in lo.iter().zip(&hi).enumerate() {
            if l.is_nan() || h.is_nan() || l > h {
                return Err(Error::input(format!("box axis {i} is empty: [{l}, {h}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    /// The whole space `R^n`.
    pub fn unbounded(n: usize) -> Self {
        Self { lo: vec![f64::NEG_INFINITY; n], hi: vec![f64::INFINITY; n] }
    }

    /// A degenerate box containing exactly `x`.
    pub fn point(x: &State) -> Self {
        Self { lo: x.iter().copied().collect(), hi: x.iter().copied().collect() }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.iter().chain(&self.hi).all(|v| v.is_finite())
    }

    pub fn center(&self) -> State {
        State::from_fn(self.dim(), |i, _| {
            let (l, h) = (self.lo[i], self.hi[i]);
            match (l.is_finite(), h.is_finite()) {
                (true, true) => 0.5 * (l + h),
                (true, false) => l,
                (false, true) => h,
                (false, false) => 0.0,
            }
        })
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    /// Euclidean length of the main diagonal.
    pub fn diameter(&self) -> f64 {
        self.widths().iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &State) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(i, v)| *v >= self.lo[i] && *v <= self.hi[i])
    }

    /// Strict interior membership.
    pub fn contains_strictly(&self, x: &State) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(i, v)| *v > self.lo[i] && *v < self.hi[i])
    }

    /// Coordinate-wise clamp, which is the Euclidean projection onto the box.
    pub fn project(&self, x: &State) -> State {
        State::from_fn(x.len(), |i, _| x[i].max(self.lo[i]).min(self.hi[i]))
    }

    /// Euclidean distance from `x` to the box (zero inside).
    pub fn distance(&self, x: &State) -> f64 {
        (x - self.project(x)).norm()
    }

    /// Distance from `x` to the boundary when `x` is inside the box.
    pub fn depth(&self, x: &State) -> f64 {
        x.iter().enumerate().map(|(i, v)| (v - self.lo[i]).min(self.hi[i] - v)).fold(f64::INFINITY, f64::min)
    }

    /// Signed distance: positive outside, non-positive inside.
    pub fn signed_distance(&self, x: &State) -> f64 {
        if self.contains(x) {
            -self.depth(x)
        } else {
            self.distance(x)
        }
    }

    /// `true` when `x` lies on the boundary within `tol`.
    pub fn on_boundary(&self, x: &State, tol: f64) -> bool {
        self.distance(x) <= tol && self.depth(x).abs() <= tol
    }

    /// Uniform sample. Requires a bounded box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<State> {
        if !self.is_bounded() {
            return Err(Error::input("cannot sample uniformly from an unbounded box"));
        }
        Ok(State::from_fn(self.dim(), |i, _| {
            let (l, h) = (self.lo[i], self.hi[i]);
            if h > l {
                rng.random_range(l..=h)
            } else {
                l
            }
        }))
    }

    /// All `2^n` corners of a bounded box.
    pub fn corners(&self) -> Vec<State> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| State::from_fn(n, |i, _| if mask >> i & 1 == 1 { self.hi[i] } else { self.lo[i] }))
            .collect()
    }

    pub fn translate(&self, by: &State) -> Self {
        Self {
            lo: self.lo.iter().enumerate().map(|(i, l)| l + by[i]).collect(),
            hi: self.hi.iter().enumerate().map(|(i, h)| h + by[i]).collect(),
        }
    }
}
