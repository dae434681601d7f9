use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Current allocation `I[i, v]` in amps, slot-major (`horizon × n_vehicles`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation<T> {
    horizon: usize,
    n_vehicles: usize,
    data: Vec<T>,
}

impl<T: Scalar> Allocation<T> {
    pub fn zeros(horizon: usize, n_vehicles: usize) -> Self {
        Self { horizon, n_vehicles, data: vec![T::zero(); horizon * n_vehicles] }
    }

    pub fn from_vec(horizon: usize, n_vehicles: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != horizon * n_vehicles {
            return Err(Error::DimensionMismatch {
                expected: format!("{horizon}x{n_vehicles}"),
                got: format!("{} entries", data.len()),
            });
        }
        Ok(Self { horizon, n_vehicles, data })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_vehicles(&self) -> usize {
        self.n_vehicles
    }

    #[inline]
    pub fn get(&self, slot: usize, vehicle: usize) -> T {
        self.data[slot * self.n_vehicles + vehicle]
    }

    #[inline]
    pub fn set(&mut self, slot: usize, vehicle: usize, value: T) {
        self.data[slot * self.n_vehicles + vehicle] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn slot(&self, slot: usize) -> &[T] {
        &self.data[slot * self.n_vehicles..(slot + 1) * self.n_vehicles]
    }

    pub fn vehicle(&self, vehicle: usize) -> impl Iterator<Item = T> + '_ {
        (0..self.horizon).map(move |i| self.get(i, vehicle))
    }

    pub fn slot_total(&self, slot: usize) -> T {
        self.slot(slot).iter().copied().sum()
    }

    /// Charge delivered to one vehicle over the horizon, Ah.
    pub fn delivered_ah(&self, vehicle: usize, dt_hours: T) -> T {
        self.vehicle(vehicle).sum::<T>() * dt_hours
    }

    /// Charge-weighted mean slot index of one vehicle, `None` if it receives nothing.
    pub fn mean_slot(&self, vehicle: usize) -> Option<T> {
        let mut num = T::zero();
        let mut den = T::zero();
        for (i, c) in self.vehicle(vehicle).enumerate() {
            num += T::from_usize(i).unwrap() * c;
            den += c;
        }
        (den > T::zero()).then(|| num / den)
    }
}
