//! Objective terms for both training stages.

mod adversarial;
pub mod contextual;
mod feature;
mod pixel;

use serde::{Deserialize, Serialize};

pub use adversarial::{adv_loss, d_loss_graph, g_loss_graph, r1_estimate_graph, Side, R1_SIGMA};
pub use contextual::contextual_loss;
pub use feature::{perceptual_loss, perceptual_loss_graph, temporal_loss, temporal_loss_graph, validate_levels};
pub use pixel::{recon_loss, recon_loss_graph, warp_loss, warp_loss_graph, warp_target, WarpOperand};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_adv: f32,
    pub lambda_recon: f32,
    pub lambda_perc: f32,
    pub lambda_warp: f32,
    pub lambda_temp: f32,
    pub r1_gamma: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_adv: 1.0,
            lambda_recon: 10.0,
            lambda_perc: 1.0,
            lambda_warp: 1.0,
            lambda_temp: 0.5,
            r1_gamma: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda_adv", self.lambda_adv),
            ("lambda_recon", self.lambda_recon),
            ("lambda_perc", self.lambda_perc),
            ("lambda_warp", self.lambda_warp),
            ("lambda_temp", self.lambda_temp),
            ("r1_gamma", self.r1_gamma),
        ];
        if let Some((name, v)) = all.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::config(format!("loss weight {name} must be finite and >= 0, got {v}")));
        }
        if self.lambda_warp + self.lambda_temp <= 0.0 {
            return Err(Error::config("at least one of lambda_warp, lambda_temp must be positive"));
        }
        Ok(())
    }
}

/// Stage-II loss terms for one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RefinerTerms {
    pub warp: f32,
    pub temp: f32,
}

/// Weighted refiner objective and its weighted contributions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinerObjective {
    pub total: f32,
    pub warp: f32,
    pub temp: f32,
}

pub fn refiner_objective(terms: RefinerTerms, weights: &LossWeights) -> RefinerObjective {
    let warp = weights.lambda_warp * terms.warp;
    let temp = weights.lambda_temp * terms.temp;
    RefinerObjective { total: warp + temp, warp, temp }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn objective_examples() {
        let w = LossWeights { lambda_warp: 1.0, lambda_temp: 0.5, ..LossWeights::default() };
        let o = refiner_objective(RefinerTerms { warp: 0.2, temp: 0.1 }, &w);
        assert!((o.total - 0.25).abs() < 1e-7);
        let ablate = LossWeights { lambda_temp: 0.0, ..w.clone() };
        let o = refiner_objective(RefinerTerms { warp: 0.2, temp: 0.1 }, &ablate);
        assert_eq!(o.total, 0.2);
        assert_eq!(refiner_objective(RefinerTerms::default(), &w).total, 0.0);
    }

    #[test]
    fn weight_validation() {
        assert!(LossWeights::default().validate().is_ok());
        let neg = LossWeights { lambda_adv: -1.0, ..LossWeights::default() };
        assert!(matches!(neg.validate(), Err(Error::Config(_))));
        let none = LossWeights { lambda_warp: 0.0, lambda_temp: 0.0, ..LossWeights::default() };
        assert!(none.validate().is_err());
    }

    proptest! {
        #[test]
        fn objective_is_linear_in_each_weight(
            warp in 0.0f32..10.0, temp in 0.0f32..10.0, lw in 0.0f32..4.0, lt in 0.0f32..4.0,
        ) {
            let terms = RefinerTerms { warp, temp };
            let w = LossWeights { lambda_warp: lw, lambda_temp: lt, ..LossWeights::default() };
            let w2 = LossWeights { lambda_warp: 2.0 * lw, ..w.clone() };
            let (a, b) = (refiner_objective(terms, &w), refiner_objective(terms, &w2));
            prop_assert_eq!(b.warp, 2.0 * a.warp);
            prop_assert_eq!(b.temp, a.temp);
        }
    }
}
