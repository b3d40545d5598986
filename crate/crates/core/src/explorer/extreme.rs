use nalgebra::DMatrix;

use super::{check_anchor, Guide, RDParams};
use crate::dynamics::{ClosedLoopSystem, Trajectory};
use crate::error::{Error, Result};
use crate::region::Hyperbox;
use crate::State;

/// Displacement used to probe the local inverse Jacobian through a vector guide.
const JACOBIAN_PROBE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremeResult {
    /// The state at time `t` with the largest projection on the direction.
    pub x_t: State,
    /// Its initial state.
    pub x0: State,
    /// Simulations generated.
    pub k: usize,
}

/// Local inverse Jacobian `G ≈ ∂x0/∂x_t`, up to a positive scale for directional guides.
///
/// A directional guide only gives unit columns `u_j`; one extra probe along
/// `Σ e_j` recovers the column scales because `Σ_j c_j u_j` must point the
/// same way as that probe's prediction.
fn inverse_jacobian(guide: &Guide<'_>, x_t: &State, t: f64) -> Result<DMatrix<f64>> {
    let n = x_t.len();
    let axis = |j: usize| {
        let mut e = State::zeros(n);
        e[j] = 1.0;
        e
    };
    match guide {
        Guide::Vector(g) => {
            let mut cols = Vec::with_capacity(n);
            for j in 0..n {
                cols.push(g.estimate(x_t, &(axis(j) * JACOBIAN_PROBE), t)? / JACOBIAN_PROBE);
            }
            Ok(DMatrix::from_columns(&cols))
        }
        Guide::Directional(g) => {
            let mut cols = Vec::with_capacity(n);
            for j in 0..n {
                cols.push(g.predict(x_t, &axis(j), t)?);
            }
            let u = DMatrix::from_columns(&cols);
            let diag = State::from_element(n, 1.0 / (n as f64).sqrt());
            let q = g.predict(x_t, &diag, t)?;
            let c = u
                .clone()
                .lu()
                .solve(&q)
                .ok_or_else(|| Error::input("directional predictions are linearly dependent"))?;
            let scales = State::from_fn(n, |j, _| c[j].abs().max(1e-12));
            Ok(u * DMatrix::from_diagonal(&scales))
        }
    }
}

/// Pushes the state at time `t` as far as possible along `direction`.
///
/// Each step reconstructs the local inverse Jacobian from the guide, takes
/// the vertex of `theta` that maximizes the linearized objective and moves
/// `x0` toward it by the fraction `1 - (1 - s)^p`, then simulates. Stops when
/// `x0` moves less than `delta` for `p` consecutive steps, when it does not
/// move at all, or after `bound` simulations.
pub fn reach_extreme(
    system: &ClosedLoopSystem,
    guide: Guide<'_>,
    anchor: &Trajectory,
    t: f64,
    direction: &State,
    theta: &Hyperbox,
    params: &RDParams,
) -> Result<ExtremeResult> {
    params.validate()?;
    let index = check_anchor(system, anchor, t, theta)?;
    if direction.len() != system.dim() || (direction.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::input("direction must be a unit vector of the system dimension"));
    }
    let t = index as f64 * system.step;
    let fraction = 1.0 - (1.0 - params.s).powi(params.p as i32);

    let mut x0 = anchor.initial_state().clone();
    let mut x_t = anchor.samples()[index].clone();
    let mut best = ExtremeResult { x_t: x_t.clone(), x0: x0.clone(), k: 0 };
    let mut k = 0;
    let mut still = 0;
    while k < params.bound {
        let g = inverse_jacobian(&guide, &x_t, t)?;
        let grad =
            g.transpose().lu().solve(direction).ok_or_else(|| Error::input("inverse Jacobian estimate is singular"))?;
        let vertex = State::from_fn(x0.len(), |i, _| {
            if grad[i] > 0.0 {
                theta.hi[i]
            } else if grad[i] < 0.0 {
                theta.lo[i]
            } else {
                x0[i]
            }
        });
        let step = (&vertex - &x0) * fraction;
        let moved = step.norm();
        if moved == 0.0 {
            break;
        }
        x0 = theta.project(&(&x0 + step));
        x_t = system.simulate(&x0, index)?.final_state().clone();
        k += 1;
        if direction.dot(&x_t) > direction.dot(&best.x_t) {
            best.x_t = x_t.clone();
            best.x0 = x0.clone();
        }
        still = if moved < params.delta { still + 1 } else { 0 };
        if still >= params.p {
            break;
        }
    }
    best.k = k;
    Ok(best)
}
