use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PerceivedElement, PerceivedKind, PerceptionError, PerceptionResult, Perceptor};
use crate::device::ElementKind;
use crate::memory::ScreenState;

/// Seeded corruption of ground-truth perception, to reproduce misperception.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Probability each element is missed.
    pub drop_rate: f64,
    /// Probability a kept element's content is replaced.
    pub substitution_rate: f64,
    pub substitution_text: String,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            drop_rate: 0.0,
            substitution_rate: 0.0,
            substitution_text: "unknown".into(),
            seed: 0,
        }
    }
}

impl NoiseModel {
    fn is_noiseless(&self) -> bool {
        self.drop_rate <= 0.0 && self.substitution_rate <= 0.0
    }
}

/// Reads perception straight from simulator ground truth.
#[derive(Debug, Clone, Default)]
pub struct SimPerceptor {
    pub noise: NoiseModel,
}

impl SimPerceptor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_noise(noise: NoiseModel) -> Self {
        Self { noise }
    }
}

impl Perceptor for SimPerceptor {
    fn perceive(&self, state: &ScreenState) -> Result<PerceptionResult, PerceptionError> {
        let truth = state.sim_truth.as_ref().ok_or(PerceptionError::NoGroundTruth)?;
        // One stream per (seed, step) keeps the result a pure function of its inputs.
        let mut rng =
            ChaCha8Rng::seed_from_u64(self.noise.seed ^ (state.step_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let noisy = !self.noise.is_noiseless();
        let mut elements = Vec::with_capacity(truth.elements.len());
        for el in &truth.elements {
            if noisy && rng.gen_bool(self.noise.drop_rate.clamp(0.0, 1.0)) {
                continue;
            }
            let kind = match el.kind {
                ElementKind::StaticText | ElementKind::TextField | ElementKind::ListItem => PerceivedKind::Text,
                ElementKind::Button | ElementKind::Icon => PerceivedKind::Icon,
            };
            let mut content = match (&el.content, el.kind) {
                (Some(text), ElementKind::TextField) if !text.is_empty() => text.clone(),
                (Some(extra), kind) if kind != ElementKind::TextField && !extra.is_empty() => {
                    format!("{} {}", el.label, extra)
                }
                _ => el.label.clone(),
            };
            if noisy && rng.gen_bool(self.noise.substitution_rate.clamp(0.0, 1.0)) {
                content = self.noise.substitution_text.clone();
            }
            elements.push(PerceivedElement {
                kind,
                content,
                center: el.bbox.center(),
                bbox: el.bbox,
                input_field: el.kind == ElementKind::TextField,
            });
        }
        Ok(PerceptionResult::from_unsorted(elements))
    }
}
