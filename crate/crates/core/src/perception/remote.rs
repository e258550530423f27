//! Client for a four-stage perception service.
//!
//! Each stage is an HTTP `POST` with a JSON body; `image` is the screenshot
//! PNG in standard base64 and boxes are `[x0, y0, x1, y1]` pixel arrays.
//!
//! | stage           | path             | request            | response                |
//! |-----------------|------------------|--------------------|-------------------------|
//! | text detection  | `/ocr/detect`    | `{image}`          | `{"boxes": [...]}`      |
//! | text recognition| `/ocr/recognize` | `{image, boxes}`   | `{"texts": [...]}`      |
//! | icon grounding  | `/icon/ground`   | `{image}`          | `{"boxes": [...]}`      |
//! | icon captioning | `/icon/caption`  | `{image, boxes}`   | `{"captions": [...]}`   |
//!
//! Text and icon chains run concurrently; overlapping results are all kept and
//! merged in box order.

use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{PerceivedElement, PerceivedKind, PerceptionError, PerceptionResult, Perceptor};
use crate::device::BBox;
use crate::memory::ScreenState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RemoteStage {
    TextDetection,
    TextRecognition,
    IconGrounding,
    IconCaptioning,
}

impl RemoteStage {
    pub fn path(self) -> &'static str {
        match self {
            RemoteStage::TextDetection => "/ocr/detect",
            RemoteStage::TextRecognition => "/ocr/recognize",
            RemoteStage::IconGrounding => "/icon/ground",
            RemoteStage::IconCaptioning => "/icon/caption",
        }
    }

    fn label(self) -> &'static str {
        match self {
            RemoteStage::TextDetection => "text detection",
            RemoteStage::TextRecognition => "text recognition",
            RemoteStage::IconGrounding => "icon grounding",
            RemoteStage::IconCaptioning => "icon captioning",
        }
    }
}

#[derive(Deserialize)]
struct BoxesResponse {
    boxes: Vec<[i32; 4]>,
}

#[derive(Deserialize)]
struct TextsResponse {
    texts: Vec<String>,
}

#[derive(Deserialize)]
struct CaptionsResponse {
    captions: Vec<String>,
}

#[derive(Serialize)]
struct ImageBody<'a> {
    image: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    boxes: Option<&'a [[i32; 4]]>,
}

pub struct RemotePerceptor {
    base_url: String,
    agent: ureq::Agent,
}

impl RemotePerceptor {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build(),
        }
    }

    fn post<T: for<'de> Deserialize<'de>>(
        &self,
        stage: RemoteStage,
        body: &ImageBody<'_>,
    ) -> Result<T, PerceptionError> {
        let url = format!("{}{}", self.base_url, stage.path());
        let response = self
            .agent
            .post(&url)
            .send_json(json!(body))
            .map_err(|e| PerceptionError::Service {
                stage: stage.label(),
                message: e.to_string(),
            })?;
        response.into_json::<T>().map_err(|e| PerceptionError::Malformed {
            stage: stage.label(),
            message: e.to_string(),
        })
    }

    fn text_chain(&self, image: &str) -> Result<Vec<([i32; 4], String)>, PerceptionError> {
        let detected: BoxesResponse = self.post(RemoteStage::TextDetection, &ImageBody { image, boxes: None })?;
        let recognized: TextsResponse = self.post(
            RemoteStage::TextRecognition,
            &ImageBody {
                image,
                boxes: Some(&detected.boxes),
            },
        )?;
        zip_stage(RemoteStage::TextRecognition, detected.boxes, recognized.texts)
    }

    fn icon_chain(&self, image: &str) -> Result<Vec<([i32; 4], String)>, PerceptionError> {
        let grounded: BoxesResponse = self.post(RemoteStage::IconGrounding, &ImageBody { image, boxes: None })?;
        let captioned: CaptionsResponse = self.post(
            RemoteStage::IconCaptioning,
            &ImageBody {
                image,
                boxes: Some(&grounded.boxes),
            },
        )?;
        zip_stage(RemoteStage::IconCaptioning, grounded.boxes, captioned.captions)
    }
}

fn zip_stage(
    stage: RemoteStage,
    boxes: Vec<[i32; 4]>,
    labels: Vec<String>,
) -> Result<Vec<([i32; 4], String)>, PerceptionError> {
    if boxes.len() != labels.len() {
        return Err(PerceptionError::Malformed {
            stage: stage.label(),
            message: format!("{} boxes but {} labels", boxes.len(), labels.len()),
        });
    }
    Ok(boxes.into_iter().zip(labels).collect())
}

fn clamp_box(b: [i32; 4], width: u32, height: u32) -> BBox {
    let (w, h) = (width as i32, height as i32);
    let x0 = b[0].min(b[2]).clamp(0, w);
    let x1 = b[0].max(b[2]).clamp(0, w);
    let y0 = b[1].min(b[3]).clamp(0, h);
    let y1 = b[1].max(b[3]).clamp(0, h);
    BBox::new(x0, y0, x1, y1)
}

impl Perceptor for RemotePerceptor {
    fn perceive(&self, state: &ScreenState) -> Result<PerceptionResult, PerceptionError> {
        let bytes = state
            .image
            .read_bytes()
            .map_err(|e| PerceptionError::Image(e.to_string()))?;
        let image = base64::engine::general_purpose::STANDARD.encode(bytes);
        let (texts, icons) = std::thread::scope(|scope| {
            let icons = scope.spawn(|| self.icon_chain(&image));
            let texts = self.text_chain(&image);
            (texts, icons.join().expect("icon chain does not panic"))
        });
        let mut elements = Vec::new();
        for (kind, entries) in [(PerceivedKind::Text, texts?), (PerceivedKind::Icon, icons?)] {
            for (raw, content) in entries {
                let bbox = clamp_box(raw, state.width, state.height);
                elements.push(PerceivedElement {
                    kind,
                    content,
                    center: bbox.center(),
                    bbox,
                    input_field: false,
                });
            }
        }
        Ok(PerceptionResult::from_unsorted(elements))
    }
}
