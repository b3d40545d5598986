use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::State;

/// Hard-coded vector fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum BuiltinField {
    /// `x' = c`, a constant velocity field.
    Constant { velocity: Vec<f64> },
    /// `x1' = x2, x2' = -x1`.
    Rotation,
    /// `x1' = x2, x2' = mu (1 - x1^2) x2 - x1 + u`.
    VanDerPol { mu: f64 },
}

/// `coeff * prod_j z_j^exponents[j]` where `z = (x, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

/// Open-loop vector field `f(x, u)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Plant {
    Builtin(BuiltinField),
    /// `x' = A x + B u`.
    Linear {
        a: DMatrix<f64>,
        b: DMatrix<f64>,
    },
    /// One monomial list per state equation.
    Polynomial {
        state_dim: usize,
        control_dim: usize,
        equations: Vec<Vec<Monomial>>,
    },
}

impl Plant {
    pub fn state_dim(&self) -> usize {
        match self {
            Plant::Builtin(BuiltinField::Constant { velocity }) => velocity.len(),
            Plant::Builtin(_) => 2,
            Plant::Linear { a, .. } => a.nrows(),
            Plant::Polynomial { state_dim, .. } => *state_dim,
        }
    }

    pub fn control_dim(&self) -> usize {
        match self {
            Plant::Builtin(BuiltinField::VanDerPol { .. }) => 1,
            Plant::Builtin(_) => 0,
            Plant::Linear { b, .. } => b.ncols(),
            Plant::Polynomial { control_dim, .. } => *control_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Plant::Linear { a, b } => {
                if !a.is_square() || a.nrows() != b.nrows() {
                    return Err(Error::input(format!(
                        "linear plant needs square A and matching B rows, got A {}x{} and B {}x{}",
                        a.nrows(),
                        a.ncols(),
                        b.nrows(),
                        b.ncols()
                    )));
                }
            }
            Plant::Polynomial { state_dim, control_dim, equations } => {
                if equations.len() != *state_dim {
                    return Err(Error::input(format!(
                        "polynomial plant has {} equations for {} states",
                        equations.len(),
                        state_dim
                    )));
                }
                let width = state_dim + control_dim;
                if equations.iter().flatten().any(|m| m.exponents.len() != width) {
                    return Err(Error::input(format!("every monomial needs {width} exponents")));
                }
            }
            Plant::Builtin(BuiltinField::Constant { velocity }) if velocity.is_empty() => {
                return Err(Error::input("constant field needs a velocity"));
            }
            Plant::Builtin(_) => {}
        }
        Ok(())
    }

    /// Evaluates `f(x, u)`; `u` is empty for autonomous plants.
    pub fn eval(&self, x: &State, u: &DVector<f64>) -> State {
        match self {
            Plant::Builtin(BuiltinField::Constant { velocity }) => State::from_column_slice(velocity),
            Plant::Builtin(BuiltinField::Rotation) => State::from_vec(vec![x[1], -x[0]]),
            Plant::Builtin(BuiltinField::VanDerPol { mu }) => {
                let u0 = if u.is_empty() { 0.0 } else { u[0] };
                State::from_vec(vec![x[1], mu * (1.0 - x[0] * x[0]) * x[1] - x[0] + u0])
            }
            Plant::Linear { a, b } => {
                let mut dx = a * x;
                if b.ncols() > 0 {
                    dx += b * u;
                }
                dx
            }
            Plant::Polynomial { state_dim, equations, .. } => State::from_fn(*state_dim, |i, _| {
                equations[i]
                    .iter()
                    .map(|m| {
                        m.exponents.iter().enumerate().fold(m.coeff, |acc, (j, &e)| {
                            let z = if j < *state_dim { x[j] } else { u[j - state_dim] };
                            acc * z.powi(e as i32)
                        })
                    })
                    .sum()
            }),
        }
    }
}
