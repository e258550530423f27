//! App graph: the static description a simulated phone runs.
//!
//! Graph files are JSON:
//!
//! ```text
//! {
//!   "name": "demo-phone",
//!   "screen": { "width": 1080, "height": 2400 },
//!   "apps": [ { "name": "Shop", "entry": "shop.home" } ],
//!   "pages": [
//!     { "name": "home", "elements": [
//!         { "id": "icon.shop", "kind": "icon", "label": "Shop", "bbox": [60, 400, 260, 600] } ] },
//!     { "name": "shop.home", "app": "Shop", "elements": [
//!         { "id": "shop.search", "kind": "text_field", "label": "Search Shop", "bbox": [80, 200, 1000, 320] } ] },
//!     { "name": "shop.loading", "app": "Shop", "loads_into": "shop.results", "elements": [] }
//!   ],
//!   "transitions": [
//!     { "from": "home", "on": { "tap": "icon.shop" }, "to": "shop.home" },
//!     { "from": "shop.home", "on": { "submit": "shop.search" }, "to": "shop.loading" },
//!     { "from": "feed.home", "on": { "swipe": "up" }, "to": "feed.more" },
//!     { "from": "shop.item", "on": "back", "to": "shop.home" }
//!   ],
//!   "popups": [ { "page": "feed.home", "after_step": 1, "overlay": "feed.ad", "dismiss": "feed.ad.close" } ]
//! }
//! ```
//!
//! Triggers are `{"tap": element}`, `{"submit": text_field}` (Enter while the
//! field is focused), `{"swipe": "up"|"down"|"left"|"right"}`, `"back"`,
//! `"home"`, `{"open_app": app}` and `"switch_app"`. The page `home` must
//! exist; `app_switcher` is built in and may not be declared.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BBox;

pub const HOME_PAGE: &str = "home";
pub const SWITCHER_PAGE: &str = "app_switcher";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Button,
    TextField,
    ListItem,
    Icon,
    StaticText,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Element {
    pub id: String,
    pub kind: ElementKind,
    pub label: String,
    pub bbox: BBox,
    /// Secondary text (or the initial text of a text field).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    /// Tapping this element empties the named text field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clears: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Page {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app: Option<String>,
    #[serde(default)]
    pub elements: Vec<Element>,
    /// A loading page resolves into this page on `Wait`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loads_into: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwipeDirection {
    Up,
    Down,
    Left,
    Right,
}

impl SwipeDirection {
    /// Direction of finger motion, by dominant axis. Zero-length swipes have none.
    pub fn classify(x1: i32, y1: i32, x2: i32, y2: i32) -> Option<Self> {
        let (dx, dy) = (x2 as i64 - x1 as i64, y2 as i64 - y1 as i64);
        if dx == 0 && dy == 0 {
            None
        } else if dx.abs() > dy.abs() {
            Some(if dx > 0 {
                SwipeDirection::Right
            } else {
                SwipeDirection::Left
            })
        } else if dy > 0 {
            Some(SwipeDirection::Down)
        } else {
            Some(SwipeDirection::Up)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Tap(String),
    Submit(String),
    Swipe(SwipeDirection),
    Back,
    Home,
    OpenApp(String),
    SwitchApp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub from: String,
    pub on: Trigger,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopupRule {
    pub page: String,
    /// Fires once the session step counter reaches this value on `page`.
    pub after_step: usize,
    pub overlay: String,
    pub dismiss: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppSpec {
    pub name: String,
    pub entry: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenSize {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppGraph {
    pub name: String,
    pub screen: ScreenSize,
    #[serde(default)]
    pub apps: Vec<AppSpec>,
    pub pages: Vec<Page>,
    #[serde(default)]
    pub transitions: Vec<Transition>,
    #[serde(default)]
    pub popups: Vec<PopupRule>,
}

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("cannot read graph {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed graph: {0}")]
    Decode(#[from] serde_json::Error),
    #[error("screen size must be positive")]
    EmptyScreen,
    #[error("page `{0}` is declared twice")]
    DuplicatePage(String),
    #[error("app `{0}` is declared twice")]
    DuplicateApp(String),
    #[error("graph has no `home` page")]
    MissingHome,
    #[error("page name `{0}` is reserved")]
    ReservedPage(String),
    #[error("{context} refers to unknown page `{page}`")]
    UnknownPage { context: String, page: String },
    #[error("{context} refers to unknown app `{app}`")]
    UnknownApp { context: String, app: String },
    #[error("page `{page}` declares element `{id}` twice")]
    DuplicateElement { page: String, id: String },
    #[error("element `{id}` on page `{page}` has an empty or out-of-screen box")]
    BadBox { page: String, id: String },
    #[error("{context} refers to unknown element `{id}` on page `{page}`")]
    UnknownElement { context: String, page: String, id: String },
    #[error("submit trigger on `{page}` names `{id}`, which is not a text field")]
    NotATextField { page: String, id: String },
    #[error("page `{page}` has more than one transition for {trigger:?}")]
    Nondeterministic { page: String, trigger: Trigger },
}

impl AppGraph {
    pub fn from_json_str(text: &str) -> Result<Self, GraphError> {
        let graph: AppGraph = serde_json::from_str(text)?;
        graph.validate()?;
        Ok(graph)
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn page(&self, name: &str) -> Option<&Page> {
        self.pages.iter().find(|p| p.name == name)
    }

    pub fn app(&self, name: &str) -> Option<&AppSpec> {
        self.apps.iter().find(|a| a.name == name)
    }

    pub fn transition(&self, from: &str, trigger: &Trigger) -> Option<&str> {
        self.transitions
            .iter()
            .find(|t| t.from == from && &t.on == trigger)
            .map(|t| t.to.as_str())
    }

    /// Every page a session can be on, the built-in switcher included.
    pub fn page_names(&self) -> BTreeSet<&str> {
        self.pages
            .iter()
            .map(|p| p.name.as_str())
            .chain(std::iter::once(SWITCHER_PAGE))
            .collect()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.screen.width == 0 || self.screen.height == 0 {
            return Err(GraphError::EmptyScreen);
        }
        let mut names = BTreeSet::new();
        for page in &self.pages {
            if page.name == SWITCHER_PAGE {
                return Err(GraphError::ReservedPage(page.name.clone()));
            }
            if !names.insert(page.name.as_str()) {
                return Err(GraphError::DuplicatePage(page.name.clone()));
            }
        }
        if !names.contains(HOME_PAGE) {
            return Err(GraphError::MissingHome);
        }
        let page_exists = |context: String, page: &str| -> Result<&Page, GraphError> {
            self.page(page).ok_or_else(|| GraphError::UnknownPage {
                context,
                page: page.to_string(),
            })
        };
        let app_exists = |context: String, app: &str| -> Result<(), GraphError> {
            match self.app(app) {
                Some(_) => Ok(()),
                None => Err(GraphError::UnknownApp {
                    context,
                    app: app.to_string(),
                }),
            }
        };

        let mut apps = BTreeSet::new();
        for app in &self.apps {
            if !apps.insert(app.name.as_str()) {
                return Err(GraphError::DuplicateApp(app.name.clone()));
            }
            page_exists(format!("entry of app `{}`", app.name), &app.entry)?;
        }
        for page in &self.pages {
            if let Some(app) = &page.app {
                app_exists(format!("page `{}`", page.name), app)?;
            }
            if let Some(target) = &page.loads_into {
                page_exists(format!("loads_into of `{}`", page.name), target)?;
            }
            let mut ids = BTreeSet::new();
            for el in &page.elements {
                if !ids.insert(el.id.as_str()) {
                    return Err(GraphError::DuplicateElement {
                        page: page.name.clone(),
                        id: el.id.clone(),
                    });
                }
                if !el.bbox.is_proper() || !el.bbox.within(self.screen.width, self.screen.height) {
                    return Err(GraphError::BadBox {
                        page: page.name.clone(),
                        id: el.id.clone(),
                    });
                }
            }
        }
        let element = |context: String, page: &Page, id: &str| -> Result<(), GraphError> {
            if page.elements.iter().any(|e| e.id == id) {
                Ok(())
            } else {
                Err(GraphError::UnknownElement {
                    context,
                    page: page.name.clone(),
                    id: id.to_string(),
                })
            }
        };

        let mut seen = BTreeSet::new();
        for (i, t) in self.transitions.iter().enumerate() {
            let context = format!("transition {i}");
            let from = page_exists(context.clone(), &t.from)?;
            page_exists(context.clone(), &t.to)?;
            match &t.on {
                Trigger::Tap(id) => element(context, from, id)?,
                Trigger::Submit(id) => {
                    element(context, from, id)?;
                    let is_field = from
                        .elements
                        .iter()
                        .any(|e| &e.id == id && e.kind == ElementKind::TextField);
                    if !is_field {
                        return Err(GraphError::NotATextField {
                            page: from.name.clone(),
                            id: id.clone(),
                        });
                    }
                }
                Trigger::OpenApp(app) => app_exists(context, app)?,
                _ => {}
            }
            if !seen.insert((t.from.as_str(), &t.on)) {
                return Err(GraphError::Nondeterministic {
                    page: t.from.clone(),
                    trigger: t.on.clone(),
                });
            }
        }
        for (i, rule) in self.popups.iter().enumerate() {
            let context = format!("popup rule {i}");
            page_exists(context.clone(), &rule.page)?;
            let overlay = page_exists(context.clone(), &rule.overlay)?;
            element(context, overlay, &rule.dismiss)?;
        }
        Ok(())
    }
}
