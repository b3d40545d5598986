//! Closed-loop systems and fixed-step trajectories.

pub mod catalog;
mod controller;
mod plant;
mod system;
mod trajectory;

pub use controller::{Activation, DenseLayer, LayerRecord, NeuralController};
pub use plant::{BuiltinField, Monomial, Plant};
pub use system::{BoxRecord, ClosedLoopSystem, PlantRecord, SystemFile, BLOWUP_LIMIT};
pub(crate) use trajectory::fmt_f64;
pub use trajectory::{time_to_index, Trajectory};

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_2;

    use nalgebra::DMatrix;

    use super::*;
    use crate::error::Error;
    use crate::linalg::expm;
    use crate::State;

    fn rotation_with_step(h: f64, steps: usize) -> ClosedLoopSystem {
        ClosedLoopSystem::new("rot", Plant::Builtin(BuiltinField::Rotation), None, h, steps).unwrap()
    }

    #[test]
    fn constant_field_integrates_exactly() {
        let sys = catalog::constant();
        let tr = sys.simulate(&State::from_vec(vec![0.0, 0.0]), 100).unwrap();
        assert!((tr.samples()[100][0] - 1.0).abs() < 1e-12);
        assert_eq!(tr.samples()[100][1], 0.0);
        let back = sys.simulate_backward(&State::from_vec(vec![1.0, 0.0]), 100).unwrap();
        assert!(back.samples()[100].norm() < 1e-12);
    }

    #[test]
    fn rotation_quarter_turn() {
        let sys = rotation_with_step(FRAC_PI_2 / 100.0, 100);
        let tr = sys.simulate(&State::from_vec(vec![1.0, 0.0]), 100).unwrap();
        let end = tr.final_state();
        assert!((end - State::from_vec(vec![0.0, -1.0])).norm() < 1e-6, "{end}");
        let back = sys.simulate_backward(&State::from_vec(vec![0.0, -1.0]), 100).unwrap();
        assert!((back.final_state() - State::from_vec(vec![1.0, 0.0])).norm() < 1e-6);
    }

    #[test]
    fn backward_retraces_forward_prefix() {
        let sys = catalog::vanderpol();
        let fwd = sys.simulate(&State::from_vec(vec![0.7, 0.2]), 150).unwrap();
        let back = sys.simulate_backward(fwd.final_state(), 150).unwrap();
        for i in 0..=150 {
            let d = (&back.samples()[i] - &fwd.samples()[150 - i]).norm();
            assert!(d < 1e-6, "sample {i}: {d}");
        }
    }

    #[test]
    fn forward_backward_inverse_on_catalog() {
        for sys in catalog::all() {
            let theta = sys.initial_set.clone().unwrap();
            for k in [1usize, 50, 200] {
                let x0 = theta.center();
                let fwd = sys.simulate(&x0, k).unwrap();
                let back = sys.simulate_backward(fwd.final_state(), k).unwrap();
                assert!((back.final_state() - &x0).norm() <= 1e-6, "{} k={k}", sys.name);
            }
        }
    }

    #[test]
    fn prefix_closure_and_semigroup() {
        let sys = catalog::poly3d();
        let x0 = State::from_vec(vec![0.8, 0.1, 0.6]);
        let full = sys.simulate(&x0, 120).unwrap();
        for k in [0usize, 1, 37, 120] {
            assert_eq!(full.prefix(k), sys.simulate(&x0, k).unwrap());
        }
        let j = 40;
        let tail = sys.simulate(&full.samples()[j], 120 - j).unwrap();
        for (i, x) in tail.samples().iter().enumerate() {
            assert!((x - &full.samples()[j + i]).norm() <= 1e-9);
        }
    }

    #[test]
    fn linear_matches_matrix_exponential() {
        let sys = catalog::damped_oscillator();
        let a = catalog::damped_oscillator_matrix();
        let x0 = State::from_vec(vec![0.9, 0.3]);
        let tr = sys.simulate(&x0, 200).unwrap();
        for k in [1usize, 10, 100, 200] {
            let want = expm(&(&a * (k as f64 * sys.step))) * &x0;
            assert!((&tr.samples()[k] - want).norm() < 1e-6);
        }
    }

    #[test]
    fn divergence_reported_with_last_finite_index() {
        let plant = Plant::Polynomial {
            state_dim: 1,
            control_dim: 0,
            equations: vec![vec![Monomial { coeff: 1.0, exponents: vec![2] }]],
        };
        let sys = ClosedLoopSystem::new("blowup", plant, None, 0.01, 500).unwrap();
        match sys.simulate(&State::from_vec(vec![1.0]), 500) {
            Err(Error::Divergence { last_finite }) => assert!(last_finite > 50 && last_finite < 200),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let sys = catalog::rotation();
        assert!(sys.simulate(&State::from_vec(vec![1.0]), 10).is_err());
        assert!(sys.simulate(&State::from_vec(vec![1.0, 0.0]), 201).is_err());
        assert!(ClosedLoopSystem::new("x", Plant::Builtin(BuiltinField::Rotation), None, 0.0, 10).is_err());
        let bad_ctrl =
            NeuralController::new(vec![
                DenseLayer::new(DMatrix::zeros(1, 3), State::zeros(1), Activation::Linear).unwrap()
            ])
            .unwrap();
        let plant = Plant::Linear { a: DMatrix::zeros(2, 2), b: DMatrix::zeros(2, 1) };
        assert!(ClosedLoopSystem::new("x", plant, Some(bad_ctrl), 0.01, 10).is_err());
    }

    #[test]
    fn system_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let sys = catalog::poly3d();
        std::fs::write(dir.path().join("ctrl.json"), sys.controller.as_ref().unwrap().to_json()).unwrap();
        let record = SystemFile::from_system(&sys, Some("ctrl.json".into()));
        let path = dir.path().join("sys.json");
        std::fs::write(&path, serde_json::to_string_pretty(&record).unwrap()).unwrap();
        let loaded = ClosedLoopSystem::from_file(&path).unwrap();
        let x0 = State::from_vec(vec![0.6, 0.2, 0.9]);
        assert_eq!(loaded.simulate(&x0, 50).unwrap(), sys.simulate(&x0, 50).unwrap());
        assert_eq!(loaded.initial_set, sys.initial_set);
    }

    #[test]
    fn system_file_reports_field_path() {
        let text = r#"{"name": "x", "dimension": 2, "plant": {"kind": "linear", "a": [[0, 1], [0, "zero"]]}, "h": 0.01, "T": 10}"#;
        match SystemFile::parse(text) {
            Err(Error::Parse { path, .. }) => assert!(path.starts_with("plant"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trajectory_csv_header() {
        let tr = catalog::rotation().simulate(&State::from_vec(vec![1.0, 0.0]), 2).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,t,x1,x2\n0,0.0,1.0,0.0\n"), "{text}");
        assert_eq!(text.lines().count(), 4);
    }
}
