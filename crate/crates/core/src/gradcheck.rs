//! Finite-difference check of the full objective on a small seeded instance.

use serde::Serialize;

use crate::data::{synth_domain_pair, SynthSpec};
use crate::error::Result;
use crate::medoids::{kmedoids_fit, DEFAULT_MAX_SWAP_ROUNDS};
use crate::model::{init_params, MlpParams};
use crate::numerics::{Matrix, SeededRng};
use crate::objective::{
    finite_difference_check, total_loss_and_grads, GradCheckReport, ObjectiveConfig, TrainingBatch,
};
use crate::pipeline::{project_domains, HyperParams};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// Projected data and prototypes shaped by a [`HyperParams`].
#[derive(Debug, Clone)]
pub struct Instance {
    pub z_source: Matrix,
    pub labels: Vec<u8>,
    pub z_target: Matrix,
    pub proto_source: Matrix,
    pub proto_target: Matrix,
}

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    #[serde(flatten)]
    pub report: GradCheckReport,
    pub tolerance: f64,
    pub passed: bool,
}

impl Instance {
    /// A 40-row pair per domain with widths `d + 2` and `d + 1`.
    pub fn new(h: &HyperParams) -> Result<Self> {
        h.validate()?;
        let n = (3 * h.k_source.max(h.k_target)).max(40);
        let spec = SynthSpec {
            d_source: h.d + 2,
            d_target: h.d + 1,
            n_source: n,
            n_target: n,
            seed: h.seed,
            ..SynthSpec::default()
        };
        let pair = synth_domain_pair(&spec)?;
        let space = project_domains(&pair.source, &pair.target, h.d)?;
        let proto_source =
            kmedoids_fit(&space.z_source, h.k_source, DEFAULT_MAX_SWAP_ROUNDS)?.medoid_points;
        let proto_target =
            kmedoids_fit(&space.z_target, h.k_target, DEFAULT_MAX_SWAP_ROUNDS)?.medoid_points;
        Ok(Instance {
            z_source: space.z_source,
            labels: pair.source.labels.unwrap_or_default(),
            z_target: space.z_target,
            proto_source,
            proto_target,
        })
    }

    pub fn batch(&self) -> TrainingBatch<'_> {
        TrainingBatch {
            source: &self.z_source,
            source_labels: &self.labels,
            target: &self.z_target,
            source_prototypes: &self.proto_source,
            target_prototypes: &self.proto_target,
        }
    }

    /// Checks the analytic gradient at `params`. `corrupt` is added to the
    /// middle analytic coordinate before comparison.
    pub fn check(
        &self,
        params: &MlpParams,
        cfg: &ObjectiveConfig,
        corrupt: Option<f64>,
    ) -> Result<Outcome> {
        let batch = self.batch();
        let (_, mut grads) = total_loss_and_grads(params, &batch, cfg)?;
        if let Some(offset) = corrupt {
            let mid = grads.num_values() / 2;
            if let Some(g) = grads.values_mut().nth(mid) {
                *g += offset;
            }
        }
        let report = finite_difference_check(params, &grads, &batch, cfg, STEP)?;
        let passed = report.max_rel_error < TOLERANCE;
        Ok(Outcome {
            report,
            tolerance: TOLERANCE,
            passed,
        })
    }
}

/// Parameters drawn the same way training initializes them.
pub fn params_at(h: &HyperParams, seed: u64) -> Result<MlpParams> {
    init_params(h.d, &h.hidden, h.latent, &mut SeededRng::new(seed))
}

/// Builds the instance for `h` and checks at the initialization for `h.seed`.
pub fn run(h: &HyperParams, corrupt: Option<f64>) -> Result<Outcome> {
    let inst = Instance::new(h)?;
    inst.check(&params_at(h, h.seed)?, &h.objective(), corrupt)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> HyperParams {
        HyperParams {
            d: 3,
            k_source: 3,
            k_target: 3,
            hidden: vec![5],
            latent: 3,
            ..HyperParams::default()
        }
    }

    #[test]
    fn default_config_passes() {
        let o = run(&HyperParams::default(), None).unwrap();
        assert!(o.passed, "{:?}", o.report);
    }

    #[test]
    fn stiff_temperature_passes_with_stop_gradient() {
        let o = run(
            &HyperParams {
                tau: 1e-3,
                ..small()
            },
            None,
        )
        .unwrap();
        assert!(o.passed, "{:?}", o.report);
    }

    #[test]
    fn corrupted_gradient_fails() {
        let o = run(&small(), Some(1e-2)).unwrap();
        assert!(!o.passed);
        assert!(!o.report.worst_parameter.is_empty());
    }
}
