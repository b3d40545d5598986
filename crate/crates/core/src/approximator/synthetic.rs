use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::InverseSensitivity;
use crate::dataset::random_unit;
use crate::error::Result;
use crate::State;

/// Wraps an inverse-sensitivity predictor with error of magnitude exactly
/// `eps_rel * ‖Φ⁻¹‖ + eps_abs` in a random direction.
///
/// This is the worst admissible magnitude for an `(eps_rel, eps_abs)`
/// approximator; it exists to exercise convergence bounds.
pub struct SyntheticErrorOracle<I> {
    pub inner: I,
    pub eps_rel: f64,
    pub eps_abs: f64,
    rng: Mutex<ChaCha8Rng>,
}

impl<I: InverseSensitivity> SyntheticErrorOracle<I> {
    pub fn new(inner: I, eps_rel: f64, eps_abs: f64, seed: u64) -> Self {
        Self { inner, eps_rel, eps_abs, rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)) }
    }
}

impl<I: InverseSensitivity> InverseSensitivity for SyntheticErrorOracle<I> {
    fn estimate(&self, x_t: &State, v: &State, t: f64) -> Result<State> {
        let exact = self.inner.estimate(x_t, v, t)?;
        let magnitude = self.eps_rel * exact.norm() + self.eps_abs;
        let dir = random_unit(exact.len(), &mut *self.rng.lock().expect("rng lock"));
        Ok(exact + dir * magnitude)
    }
}
