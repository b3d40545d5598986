use std::io::Write;

use crate::error::{Error, Result};
use crate::State;

/// Fixed-step sampled solution; `samples[i]` is the state at `i * step`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    step: f64,
    samples: Vec<State>,
}

impl Trajectory {
    pub fn new(step: f64, samples: Vec<State>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::input("trajectory needs at least the initial sample"));
        }
        if !(step > 0.0) {
            return Err(Error::input(format!("step must be positive, got {step}")));
        }
        Ok(Self { step, samples })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn initial_state(&self) -> &State {
        &self.samples[0]
    }

    pub fn final_state(&self) -> &State {
        self.samples.last().expect("non-empty")
    }

    pub fn samples(&self) -> &[State] {
        &self.samples
    }

    /// Number of integration steps covered (samples minus one).
    pub fn steps(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn duration(&self) -> f64 {
        self.steps() as f64 * self.step
    }

    pub fn get(&self, index: usize) -> Option<&State> {
        self.samples.get(index)
    }

    /// Sample index nearest to time `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = time_to_index(t, self.step)?;
        if k > self.steps() {
            return Err(Error::input(format!("time {t} lies beyond the trajectory horizon {}", self.duration())));
        }
        Ok(k)
    }

    pub fn at_time(&self, t: f64) -> Result<&State> {
        Ok(&self.samples[self.index_of(t)?])
    }

    /// The first `steps + 1` samples.
    pub fn prefix(&self, steps: usize) -> Self {
        Self { step: self.step, samples: self.samples[..=steps.min(self.steps())].to_vec() }
    }

    /// CSV with header `step,t,x1,...,xn`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["step".to_string(), "t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for (i, x) in self.samples.iter().enumerate() {
            let mut row = vec![i.to_string(), fmt_f64(i as f64 * self.step)];
            row.extend(x.iter().map(|v| fmt_f64(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Snaps `t` to the nearest grid index of spacing `step`.
pub fn time_to_index(t: f64, step: f64) -> Result<usize> {
    if !t.is_finite() || t < -0.5 * step {
        return Err(Error::input(format!("time {t} is not a valid non-negative time")));
    }
    Ok((t / step).round().max(0.0) as usize)
}

/// Shortest representation that round-trips exactly.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
