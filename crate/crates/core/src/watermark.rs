//! Closed-form instance family for a binary watermark observed through two
//! binary patterns whose correlation is `alpha`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probkit::{Channel, Distribution, LogBase, ProblemInstance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WatermarkParams {
    pub alpha: f64,
}

impl WatermarkParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        Ok(Self { alpha })
    }

    /// Full four-symbol marginal of `Y`, including symbols of zero mass.
    pub fn p_y(&self) -> [f64; 4] {
        let a = self.alpha;
        [
            11.0 * a / 100.0 + 107.0 / 300.0,
            7.0 * a / 50.0 + 59.0 / 150.0,
            11.0 * (1.0 - a) / 100.0,
            7.0 * (1.0 - a) / 50.0,
        ]
    }

    /// `P(X = 1 | Y = y)` for the four symbols.
    pub fn first_row(&self) -> [f64; 4] {
        let a = self.alpha;
        [
            (9.0 * a + 51.0) / (33.0 * a + 107.0),
            (18.0 * a + 42.0) / (21.0 * a + 59.0),
            3.0 / 11.0,
            6.0 / 7.0,
        ]
    }
}

/// The instance with zero-mass symbols removed; `kept[i]` is the original
/// index of the `i`-th remaining symbol.
#[derive(Debug, Clone)]
pub struct WatermarkInstance {
    pub instance: ProblemInstance,
    pub kept: Vec<usize>,
}

impl WatermarkInstance {
    /// True when symbols were dropped and the leakage matrix became square.
    pub fn is_reduced(&self) -> bool {
        self.kept.len() < 4
    }
}

pub fn watermark_instance(params: WatermarkParams, log_base: LogBase) -> Result<WatermarkInstance> {
    let params = WatermarkParams::new(params.alpha)?;
    let p_y = params.p_y();
    let row = params.first_row();
    let kept: Vec<usize> = (0..4).filter(|&y| p_y[y] > 0.0).collect();
    let top: Vec<f64> = kept.iter().map(|&y| row[y]).collect();
    let bottom: Vec<f64> = top.iter().map(|v| 1.0 - v).collect();
    let instance = ProblemInstance::new(
        Channel::from_rows(&[top, bottom])?,
        Distribution::new(kept.iter().map(|&y| p_y[y]).collect())?,
        log_base,
    )?
    .with_values(vec![1.0, 2.0], kept.iter().map(|&y| (y + 1) as f64).collect())?;
    Ok(WatermarkInstance { instance, kept })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_zero_matches_static_numbers() {
        let w = watermark_instance(WatermarkParams::new(0.0).unwrap(), LogBase::Natural).unwrap();
        let p = w.instance.p_y().probs();
        for (a, b) in p.iter().zip([0.3567, 0.3933, 0.11, 0.14]) {
            assert_close!(*a, b, 1e-4);
        }
        let row = &w.instance.leakage().rows()[0];
        for (a, b) in row.iter().zip([0.4766, 0.7119, 0.2727, 0.8571]) {
            assert_close!(*a, b, 1e-4);
        }
        assert!(!w.is_reduced());
    }

    #[test]
    fn alpha_one_reduces_to_square() {
        let w = watermark_instance(WatermarkParams::new(1.0).unwrap(), LogBase::Natural).unwrap();
        assert!(w.is_reduced());
        assert_eq!(w.kept, vec![0, 1]);
        assert!(w.instance.is_square());
        assert_close!(w.instance.p_y()[0], 7.0 / 15.0, 1e-15);
        let rows = w.instance.leakage().rows();
        assert_close!(rows[0][0], 3.0 / 7.0, 1e-15);
        assert_close!(rows[0][1], 0.75, 1e-15);
        assert_close!(rows[1][0], 4.0 / 7.0, 1e-15);
    }

    #[test]
    fn stochastic_for_all_alpha() {
        for k in 0..=20 {
            let params = WatermarkParams::new(k as f64 / 20.0).unwrap();
            assert_close!(params.p_y().iter().sum::<f64>(), 1.0, 1e-12);
            assert!(watermark_instance(params, LogBase::Two).is_ok());
        }
        assert!(WatermarkParams::new(1.5).is_err());
    }
}
