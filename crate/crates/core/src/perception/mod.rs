//! The Perceptor: turns a screenshot into a list of texts and icons with
//! coordinates.

mod remote;
mod sim;

use serde::{Deserialize, Serialize};

use crate::device::BBox;
use crate::memory::ScreenState;

pub use remote::{RemotePerceptor, RemoteStage};
pub use sim::{NoiseModel, SimPerceptor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerceivedKind {
    Text,
    Icon,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerceivedElement {
    pub kind: PerceivedKind,
    /// Recognized text, or the icon caption.
    pub content: String,
    pub center: (i32, i32),
    pub bbox: BBox,
    /// The element is an editable text field. Only the simulator can tell.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub input_field: bool,
}

/// Elements ordered top-to-bottom, then left-to-right, by box origin.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerceptionResult {
    pub elements: Vec<PerceivedElement>,
}

impl PerceptionResult {
    /// Builds a result in canonical order. The sort is stable, so entries with
    /// the same origin keep their input order.
    pub fn from_unsorted(mut elements: Vec<PerceivedElement>) -> Self {
        elements.sort_by_key(|e| (e.bbox.y0, e.bbox.x0));
        Self { elements }
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PerceptionError {
    #[error("{stage} service request failed: {message}")]
    Service { stage: &'static str, message: String },
    #[error("{stage} service returned a malformed response: {message}")]
    Malformed { stage: &'static str, message: String },
    #[error("cannot read screenshot: {0}")]
    Image(String),
    #[error("screen state carries no simulator ground truth")]
    NoGroundTruth,
}

pub trait Perceptor: Send + Sync {
    fn perceive(&self, state: &ScreenState) -> Result<PerceptionResult, PerceptionError>;
}
