//! Serializes states as plain JSON arrays of numbers.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::State;

pub fn serialize<S: Serializer>(x: &State, s: S) -> Result<S::Ok, S::Error> {
    x.as_slice().serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<State, D::Error> {
    Ok(State::from_vec(Vec::<f64>::deserialize(d)?))
}

pub mod many {
    use super::*;

    pub fn serialize<S: Serializer>(xs: &[State], s: S) -> Result<S::Ok, S::Error> {
        xs.iter().map(|x| x.as_slice()).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<State>, D::Error> {
        Ok(Vec::<Vec<f64>>::deserialize(d)?.into_iter().map(State::from_vec).collect())
    }
}
