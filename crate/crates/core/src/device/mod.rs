//! Phone backends. [`SimDevice`] is a deterministic simulated phone driven by
//! an [`AppGraph`]; [`BridgeDevice`] drives a real handset through the Android
//! debug bridge.

mod bridge;
mod graph;
mod render;
mod sim;

use serde::{Deserialize, Serialize};

use crate::memory::{AtomicOperation, ScreenState};

pub use bridge::{BridgeDevice, CommandOutput, CommandRunner, SystemRunner};
pub use graph::{
    AppGraph, AppSpec, Element, ElementKind, GraphError, Page, PopupRule, ScreenSize, SwipeDirection, Transition,
    Trigger, HOME_PAGE, SWITCHER_PAGE,
};
pub use sim::{SimDevice, SimState};

/// Axis-aligned pixel rectangle, `[x0, y0, x1, y1]` with `x0 < x1`, `y0 < y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[i32; 4]", into = "[i32; 4]")]
pub struct BBox {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl BBox {
    pub const fn new(x0: i32, y0: i32, x1: i32, y1: i32) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn center(&self) -> (i32, i32) {
        ((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)
    }

    pub fn is_proper(&self) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x0 >= 0 && self.y0 >= 0 && self.x1 as i64 <= width as i64 && self.y1 as i64 <= height as i64
    }
}

impl From<[i32; 4]> for BBox {
    fn from(v: [i32; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [i32; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

/// One element as it appears on the simulated screen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthElement {
    pub id: String,
    pub kind: ElementKind,
    pub label: String,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub focused: bool,
}

/// Structured ground truth of a simulated screen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTruth {
    pub page: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlay: Option<String>,
    pub elements: Vec<TruthElement>,
}

#[derive(Debug, thiserror::Error)]
pub enum DeviceError {
    #[error("`{command}` failed: {output}")]
    Transport { command: String, output: String },
    #[error("operation {0} is outside the screen bounds")]
    OutOfBounds(AtomicOperation),
    #[error("no package known for app `{0}`")]
    UnknownApp(String),
    #[error("screenshot error: {0}")]
    Screenshot(String),
}

/// A phone session. Operations on one session are strictly serialized.
pub trait Device {
    /// Performs one atomic operation and returns the resulting screen.
    fn execute(&mut self, op: &AtomicOperation) -> Result<ScreenState, DeviceError>;

    /// Captures the current screen without acting.
    fn capture(&mut self) -> Result<ScreenState, DeviceError>;

    /// Screen size in pixels.
    fn screen_size(&self) -> (u32, u32);
}
