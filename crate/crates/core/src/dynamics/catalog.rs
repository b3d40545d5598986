//! Analytically defined benchmark systems.
//!
//! | name                | dim | plant                      | controller          |
//! |---------------------|-----|----------------------------|---------------------|
//! | `constant`          | 2   | `x' = (1, 0)`              | none                |
//! | `rotation`          | 2   | harmonic rotation          | none                |
//! | `damped-oscillator` | 2   | double integrator `(A, B)` | linear state feedback |
//! | `vanderpol`         | 2   | Van der Pol, `mu = 0.5`    | 2-unit tanh network |
//! | `poly3d`            | 3   | cubic polynomial field     | 2-unit relu network |
//!
//! All entries use `h = 0.01` and `T = 200`.

use nalgebra::{DMatrix, DVector};

use super::controller::{Activation, DenseLayer, NeuralController};
use super::plant::{BuiltinField, Monomial, Plant};
use super::system::ClosedLoopSystem;
use crate::region::Hyperbox;

pub const NAMES: [&str; 5] = ["constant", "rotation", "damped-oscillator", "vanderpol", "poly3d"];

const STEP: f64 = 0.01;
const MAX_STEPS: usize = 200;

fn layer(rows: usize, cols: usize, w: &[f64], b: &[f64], act: Activation) -> DenseLayer {
    DenseLayer::new(DMatrix::from_row_slice(rows, cols, w), DVector::from_column_slice(b), act)
        .expect("catalog layer is well formed")
}

fn boxed(lo: &[f64], hi: &[f64]) -> Hyperbox {
    Hyperbox::new(lo.to_vec(), hi.to_vec()).expect("catalog box is well formed")
}

pub fn constant() -> ClosedLoopSystem {
    ClosedLoopSystem::new(
        "constant",
        Plant::Builtin(BuiltinField::Constant { velocity: vec![1.0, 0.0] }),
        None,
        STEP,
        MAX_STEPS,
    )
    .and_then(|s| s.with_initial_set(boxed(&[-1.0, -1.0], &[1.0, 1.0])))
    .expect("catalog system")
}

pub fn rotation() -> ClosedLoopSystem {
    ClosedLoopSystem::new("rotation", Plant::Builtin(BuiltinField::Rotation), None, STEP, MAX_STEPS)
        .and_then(|s| s.with_initial_set(boxed(&[0.5, -0.5], &[1.0, 0.0])))
        .expect("catalog system")
}

/// Closed loop `x' = [[0, 1], [-1, -0.5]] x`.
pub fn damped_oscillator() -> ClosedLoopSystem {
    let plant = Plant::Linear {
        a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
    };
    let controller = NeuralController::new(vec![layer(1, 2, &[-1.0, -0.5], &[0.0], Activation::Linear)])
        .expect("catalog controller");
    ClosedLoopSystem::new("damped-oscillator", plant, Some(controller), STEP, MAX_STEPS)
        .and_then(|s| s.with_initial_set(boxed(&[0.5, 0.0], &[1.0, 0.5])))
        .expect("catalog system")
}

/// The closed-loop matrix of [`damped_oscillator`].
pub fn damped_oscillator_matrix() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.5])
}

pub fn vanderpol() -> ClosedLoopSystem {
    let controller = NeuralController::new(vec![
        layer(2, 2, &[0.8, 0.6, -0.4, 0.9], &[0.0, 0.1], Activation::Tanh),
        layer(1, 2, &[-0.7, -0.9], &[0.0], Activation::Linear),
    ])
    .expect("catalog controller");
    ClosedLoopSystem::new(
        "vanderpol",
        Plant::Builtin(BuiltinField::VanDerPol { mu: 0.5 }),
        Some(controller),
        STEP,
        MAX_STEPS,
    )
    .and_then(|s| s.with_initial_set(boxed(&[0.5, 0.0], &[1.0, 0.5])))
    .expect("catalog system")
}

pub fn poly3d() -> ClosedLoopSystem {
    let m = |coeff: f64, exponents: [u32; 4]| Monomial { coeff, exponents: exponents.to_vec() };
    let plant = Plant::Polynomial {
        state_dim: 3,
        control_dim: 1,
        equations: vec![
            vec![m(-1.0, [1, 0, 0, 0]), m(0.5, [0, 1, 1, 0])],
            vec![m(1.0, [1, 0, 0, 0]), m(-0.5, [0, 1, 0, 0]), m(1.0, [0, 0, 0, 1])],
            vec![m(-1.0, [0, 0, 1, 0]), m(-0.2, [2, 0, 0, 0])],
        ],
    };
    let controller = NeuralController::new(vec![
        layer(2, 3, &[0.5, -0.3, 0.2, -0.2, 0.6, 0.1], &[0.1, 0.0], Activation::Relu),
        layer(1, 2, &[-0.8, -0.5], &[0.0], Activation::Linear),
    ])
    .expect("catalog controller");
    ClosedLoopSystem::new("poly3d", plant, Some(controller), STEP, MAX_STEPS)
        .and_then(|s| s.with_initial_set(boxed(&[0.5, 0.0, 0.5], &[1.0, 0.5, 1.0])))
        .expect("catalog system")
}

pub fn by_name(name: &str) -> Option<ClosedLoopSystem> {
    match name {
        "constant" => Some(constant()),
        "rotation" => Some(rotation()),
        "damped-oscillator" => Some(damped_oscillator()),
        "vanderpol" => Some(vanderpol()),
        "poly3d" => Some(poly3d()),
        _ => None,
    }
}

pub fn all() -> Vec<ClosedLoopSystem> {
    NAMES.iter().filter_map(|n| by_name(n)).collect()
}
