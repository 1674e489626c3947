//! First-order entropy expansion around the base point of an index set.
//!
//! For a vertex `t + eps H j` the entropy is `-(b + eps a j) + o(eps)` with
//! `l = log t`, `b = l t` and `a = l H`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::probkit::LogBase;
use crate::rowspace::OmegaRecord;
use crate::tol::TOL_POS;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyCoefficients {
    /// Log of each base-point entry.
    pub log_base_point: Vec<f64>,
    /// Minus the entropy of the base point.
    pub constant: f64,
    /// Linear response to the perturbation.
    pub slope: Vec<f64>,
}

impl EntropyCoefficients {
    pub fn new(rec: &OmegaRecord, base: LogBase) -> Result<Self> {
        if rec.base_point.iter().any(|&t| t <= TOL_POS) {
            return Err(Error::ZeroBasePoint {
                omega: rec.omega.indices().to_vec(),
            });
        }
        let log_base_point: Vec<f64> = rec.base_point.iter().map(|&t| base.log(t)).collect();
        let constant = log_base_point
            .iter()
            .zip(&rec.base_point)
            .map(|(l, t)| l * t)
            .sum();
        let slope = (0..rec.perturbation_map.ncols())
            .map(|c| {
                rec.perturbation_map
                    .column(c)
                    .iter()
                    .zip(&log_base_point)
                    .map(|(h, l)| h * l)
                    .sum()
            })
            .collect();
        Ok(Self {
            log_base_point,
            constant,
            slope,
        })
    }

    /// `-(b + eps a j)`
    pub fn approx_entropy(&self, j: &[f64], eps: f64) -> f64 {
        let aj: f64 = self.slope.iter().zip(j).map(|(a, v)| a * v).sum();
        -(self.constant + eps * aj)
    }
}
