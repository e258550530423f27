use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::graph::{AppGraph, ElementKind, Page, SwipeDirection, Trigger, HOME_PAGE, SWITCHER_PAGE};
use super::render::render_png;
use super::{BBox, Device, DeviceError, SimTruth, TruthElement};
use crate::memory::{AtomicOperation, ImageRef, ScreenState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveOverlay {
    pub page: String,
    pub dismiss: String,
}

/// Complete mutable state of a simulated session. Two sessions with equal
/// state render identically and react identically to every operation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimState {
    pub page: String,
    pub overlay: Option<ActiveOverlay>,
    pub focused: Option<String>,
    /// Text field contents keyed by element id; ids shared across pages share text.
    pub fields: BTreeMap<String, String>,
    pub back_stack: Vec<String>,
    /// Opened apps, most recent first.
    pub recents: Vec<String>,
    pub last_page: BTreeMap<String, String>,
    pub fired_popups: BTreeSet<usize>,
    pub step: usize,
}

/// Deterministic simulated phone.
///
/// Taps resolve to the first declared element whose box contains the point;
/// a tap on empty space, a gesture outside the screen, or any operation with
/// no applicable transition leaves the state unchanged apart from the step
/// counter. The simulator never returns an error.
#[derive(Debug, Clone)]
pub struct SimDevice {
    graph: Arc<AppGraph>,
    state: SimState,
    render_scale: f32,
}

impl SimDevice {
    pub fn new(graph: Arc<AppGraph>) -> Self {
        Self {
            graph,
            state: SimState {
                page: HOME_PAGE.to_string(),
                overlay: None,
                focused: None,
                fields: BTreeMap::new(),
                back_stack: Vec::new(),
                recents: Vec::new(),
                last_page: BTreeMap::new(),
                fired_popups: BTreeSet::new(),
                step: 0,
            },
            render_scale: 0.25,
        }
    }

    /// Scale of rendered screenshots relative to the logical screen.
    pub fn with_render_scale(mut self, scale: f32) -> Self {
        self.render_scale = scale;
        self
    }

    pub fn graph(&self) -> &AppGraph {
        &self.graph
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    fn page(&self, name: &str) -> &Page {
        self.graph.page(name).expect("state only holds known pages")
    }

    fn field_text(&self, page: &Page, id: &str) -> String {
        self.state.fields.get(id).cloned().unwrap_or_else(|| {
            page.elements
                .iter()
                .find(|e| e.id == id)
                .and_then(|e| e.content.clone())
                .unwrap_or_default()
        })
    }

    fn page_elements(&self, page: &Page) -> Vec<TruthElement> {
        page.elements
            .iter()
            .map(|e| {
                let is_field = e.kind == ElementKind::TextField;
                TruthElement {
                    id: e.id.clone(),
                    kind: e.kind,
                    label: e.label.clone(),
                    bbox: e.bbox,
                    content: if is_field {
                        Some(self.field_text(page, &e.id))
                    } else {
                        e.content.clone()
                    },
                    focused: is_field && self.state.focused.as_deref() == Some(e.id.as_str()),
                }
            })
            .collect()
    }

    fn switcher_elements(&self) -> Vec<TruthElement> {
        let (w, h) = (self.graph.screen.width as i32, self.graph.screen.height as i32);
        let pitch = h / 5;
        self.state
            .recents
            .iter()
            .enumerate()
            .map(|(i, app)| {
                let y0 = h / 10 + i as i32 * pitch;
                TruthElement {
                    id: format!("recent:{app}"),
                    kind: ElementKind::ListItem,
                    label: app.clone(),
                    bbox: BBox::new(w / 12, y0, w - w / 12, y0 + h / 6),
                    content: None,
                    focused: false,
                }
            })
            .take_while(|e| e.bbox.y1 <= h)
            .collect()
    }

    /// Structured view of what is on screen now.
    pub fn truth(&self) -> SimTruth {
        if let Some(overlay) = &self.state.overlay {
            let page = self.page(&overlay.page);
            return SimTruth {
                page: self.state.page.clone(),
                app: self.current_app(),
                overlay: Some(overlay.page.clone()),
                elements: self.page_elements(page),
            };
        }
        let elements = if self.state.page == SWITCHER_PAGE {
            self.switcher_elements()
        } else {
            self.page_elements(self.page(&self.state.page))
        };
        SimTruth {
            page: self.state.page.clone(),
            app: self.current_app(),
            overlay: None,
            elements,
        }
    }

    fn current_app(&self) -> Option<String> {
        if self.state.page == SWITCHER_PAGE {
            None
        } else {
            self.page(&self.state.page).app.clone()
        }
    }

    fn screen(&self) -> ScreenState {
        let truth = self.truth();
        let (w, h) = (self.graph.screen.width, self.graph.screen.height);
        ScreenState {
            step_index: self.state.step,
            image: ImageRef::Png(render_png(&truth, w, h, self.render_scale)),
            width: w,
            height: h,
            sim_truth: Some(truth),
        }
    }

    fn navigate(&mut self, to: &str, push: bool) {
        if push {
            let from = std::mem::replace(&mut self.state.page, to.to_string());
            self.state.back_stack.push(from);
        } else {
            self.state.page = to.to_string();
        }
        self.state.focused = None;
        if to != SWITCHER_PAGE {
            if let Some(app) = self.page(to).app.clone() {
                self.state.recents.retain(|a| *a != app);
                self.state.recents.insert(0, app.clone());
                self.state.last_page.insert(app, to.to_string());
            }
        }
    }

    fn hit(elements: &[TruthElement], x: i32, y: i32) -> Option<&TruthElement> {
        elements.iter().find(|e| e.bbox.contains(x, y))
    }

    fn apply_overlay(&mut self, op: &AtomicOperation) {
        let overlay = self.state.overlay.clone().expect("overlay active");
        match op {
            AtomicOperation::Tap { x, y } => {
                let elements = self.page_elements(self.page(&overlay.page));
                if Self::hit(&elements, *x, *y).is_some_and(|e| e.id == overlay.dismiss) {
                    self.state.overlay = None;
                }
            }
            AtomicOperation::Back => self.state.overlay = None,
            AtomicOperation::Home | AtomicOperation::SwitchApp => {
                self.state.overlay = None;
                self.apply_page(op);
            }
            _ => {}
        }
    }

    fn apply_page(&mut self, op: &AtomicOperation) {
        let graph = Arc::clone(&self.graph);
        let current = self.state.page.clone();
        match op {
            AtomicOperation::Tap { x, y } => {
                if current == SWITCHER_PAGE {
                    let elements = self.switcher_elements();
                    if let Some(hit) = Self::hit(&elements, *x, *y) {
                        if let Some(target) = self.state.last_page.get(&hit.label).cloned() {
                            self.state.back_stack.clear();
                            self.navigate(&target, false);
                        }
                    }
                    return;
                }
                let page = graph.page(&current).expect("known page");
                let Some(hit) = page.elements.iter().find(|e| e.bbox.contains(*x, *y)) else {
                    return;
                };
                if let Some(target) = graph.transition(&current, &Trigger::Tap(hit.id.clone())) {
                    self.navigate(target, true);
                } else if let Some(field) = &hit.clears {
                    self.state.fields.insert(field.clone(), String::new());
                } else if hit.kind == ElementKind::TextField {
                    self.state.focused = Some(hit.id.clone());
                }
            }
            AtomicOperation::Swipe { x1, y1, x2, y2 } => {
                if let Some(dir) = SwipeDirection::classify(*x1, *y1, *x2, *y2) {
                    if let Some(target) = graph.transition(&current, &Trigger::Swipe(dir)) {
                        self.navigate(target, true);
                    }
                }
            }
            AtomicOperation::Type { text } => {
                if let Some(field) = self.state.focused.clone() {
                    let page = graph.page(&current).expect("focus implies a graph page");
                    let mut value = self.field_text(page, &field);
                    value.push_str(text);
                    self.state.fields.insert(field, value);
                }
            }
            AtomicOperation::Enter => {
                if let Some(field) = self.state.focused.clone() {
                    if let Some(target) = graph.transition(&current, &Trigger::Submit(field)) {
                        self.navigate(target, true);
                    }
                }
            }
            AtomicOperation::Wait => {
                if current != SWITCHER_PAGE {
                    if let Some(target) = graph.page(&current).and_then(|p| p.loads_into.clone()) {
                        self.navigate(&target, false);
                    }
                }
            }
            AtomicOperation::Back => {
                if let Some(target) = graph.transition(&current, &Trigger::Back) {
                    self.navigate(target, false);
                } else if let Some(previous) = self.state.back_stack.pop() {
                    self.navigate(&previous, false);
                }
            }
            AtomicOperation::Home => {
                self.state.back_stack.clear();
                let target = graph.transition(&current, &Trigger::Home).unwrap_or(HOME_PAGE);
                self.navigate(target, false);
            }
            AtomicOperation::SwitchApp => {
                if current != SWITCHER_PAGE {
                    match graph.transition(&current, &Trigger::SwitchApp) {
                        Some(target) => self.navigate(target, true),
                        None => self.navigate(SWITCHER_PAGE, true),
                    }
                }
            }
            AtomicOperation::OpenApp { app_name } => {
                if current != HOME_PAGE && current != SWITCHER_PAGE {
                    return;
                }
                let Some(app) = graph.app(app_name) else {
                    return;
                };
                let target = graph
                    .transition(&current, &Trigger::OpenApp(app_name.clone()))
                    .unwrap_or(&app.entry)
                    .to_string();
                self.state.back_stack.clear();
                self.navigate(&target, false);
            }
        }
    }

    fn fire_popups(&mut self) {
        if self.state.overlay.is_some() {
            return;
        }
        for (i, rule) in self.graph.popups.iter().enumerate() {
            if rule.page == self.state.page
                && self.state.step >= rule.after_step
                && !self.state.fired_popups.contains(&i)
            {
                self.state.fired_popups.insert(i);
                self.state.overlay = Some(ActiveOverlay {
                    page: rule.overlay.clone(),
                    dismiss: rule.dismiss.clone(),
                });
                break;
            }
        }
    }

    /// Applies an operation without rendering a screenshot.
    pub fn apply(&mut self, op: &AtomicOperation) {
        let (w, h) = (self.graph.screen.width, self.graph.screen.height);
        if op.within_bounds(w, h) {
            if self.state.overlay.is_some() {
                self.apply_overlay(op);
            } else {
                self.apply_page(op);
            }
        }
        self.state.step += 1;
        self.fire_popups();
    }
}

impl Device for SimDevice {
    fn execute(&mut self, op: &AtomicOperation) -> Result<ScreenState, DeviceError> {
        self.apply(op);
        Ok(self.screen())
    }

    fn capture(&mut self) -> Result<ScreenState, DeviceError> {
        Ok(self.screen())
    }

    fn screen_size(&self) -> (u32, u32) {
        (self.graph.screen.width, self.graph.screen.height)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRAPH: &str = r#"{
      "name": "unit", "screen": {"width": 1080, "height": 2400},
      "apps": [{"name": "Shop", "entry": "shop.home"}, {"name": "Notes", "entry": "notes.home"}],
      "pages": [
        {"name": "home", "elements": [
          {"id": "icon.shop", "kind": "icon", "label": "Shop", "bbox": [60, 400, 260, 600]}]},
        {"name": "shop.home", "app": "Shop", "elements": [
          {"id": "shop.search", "kind": "text_field", "label": "Search", "bbox": [80, 200, 1000, 320]},
          {"id": "shop.go", "kind": "button", "label": "Go", "bbox": [80, 400, 300, 500]},
          {"id": "shop.overlapped", "kind": "button", "label": "Under", "bbox": [80, 400, 300, 500]}]},
        {"name": "shop.loading", "app": "Shop", "loads_into": "shop.results", "elements": [
          {"id": "spinner", "kind": "static_text", "label": "Loading", "bbox": [400, 1000, 700, 1100]}]},
        {"name": "shop.results", "app": "Shop", "elements": [
          {"id": "shop.search", "kind": "text_field", "label": "Search", "bbox": [80, 200, 900, 320]},
          {"id": "shop.clear", "kind": "icon", "label": "x", "bbox": [910, 200, 1000, 320], "clears": "shop.search"},
          {"id": "item", "kind": "list_item", "label": "Ribeye", "content": "$12.99", "bbox": [80, 400, 1000, 600]}]},
        {"name": "shop.promo", "elements": [
          {"id": "promo.close", "kind": "button", "label": "X", "bbox": [900, 300, 1000, 400]}]},
        {"name": "notes.home", "app": "Notes", "elements": []}
      ],
      "transitions": [
        {"from": "home", "on": {"tap": "icon.shop"}, "to": "shop.home"},
        {"from": "shop.home", "on": {"submit": "shop.search"}, "to": "shop.loading"},
        {"from": "shop.results", "on": {"submit": "shop.search"}, "to": "shop.loading"},
        {"from": "shop.home", "on": {"tap": "shop.go"}, "to": "shop.results"},
        {"from": "shop.results", "on": {"swipe": "up"}, "to": "shop.home"}
      ],
      "popups": [{"page": "shop.results", "after_step": 6, "overlay": "shop.promo", "dismiss": "promo.close"}]
    }"#;

    fn device() -> SimDevice {
        SimDevice::new(Arc::new(AppGraph::from_json_str(GRAPH).unwrap()))
    }

    fn page(d: &mut SimDevice) -> String {
        d.capture().unwrap().sim_truth.unwrap().page
    }

    #[test]
    fn fresh_session_is_home_at_step_zero() {
        let mut d = device();
        let s = d.capture().unwrap();
        assert_eq!(s.step_index, 0);
        assert_eq!(s.sim_truth.unwrap().page, HOME_PAGE);
        let s = d.execute(&AtomicOperation::Wait).unwrap();
        assert_eq!(s.step_index, 1);
    }

    #[test]
    fn tap_follows_transition_and_empty_space_is_no_change() {
        let mut d = device();
        d.execute(&AtomicOperation::Tap { x: 100, y: 500 }).unwrap();
        assert_eq!(page(&mut d), "shop.home");
        let before = d.capture().unwrap().sim_truth;
        let after = d.execute(&AtomicOperation::Tap { x: 540, y: 2000 }).unwrap().sim_truth;
        assert_eq!(before, after);
    }

    #[test]
    fn overlapping_boxes_resolve_to_first_declared() {
        let mut d = device();
        d.execute(&AtomicOperation::OpenApp {
            app_name: "Shop".into(),
        })
        .unwrap();
        d.execute(&AtomicOperation::Tap { x: 100, y: 450 }).unwrap();
        assert_eq!(page(&mut d), "shop.results");
    }

    #[test]
    fn type_appends_without_clearing() {
        let mut d = device();
        d.execute(&AtomicOperation::OpenApp {
            app_name: "Shop".into(),
        })
        .unwrap();
        d.execute(&AtomicOperation::Tap { x: 500, y: 250 }).unwrap();
        d.execute(&AtomicOperation::Type { text: "oranges".into() }).unwrap();
        d.execute(&AtomicOperation::Tap { x: 500, y: 250 }).unwrap();
        let s = d
            .execute(&AtomicOperation::Type {
                text: "ribeye steak".into(),
            })
            .unwrap();
        let field = s
            .sim_truth
            .unwrap()
            .elements
            .into_iter()
            .find(|e| e.id == "shop.search")
            .unwrap();
        assert_eq!(field.content.as_deref(), Some("orangesribeye steak"));
        assert!(field.focused);
    }

    #[test]
    fn enter_then_wait_resolves_loading_page() {
        let mut d = device();
        for op in [
            AtomicOperation::OpenApp {
                app_name: "Shop".into(),
            },
            AtomicOperation::Tap { x: 500, y: 250 },
            AtomicOperation::Type { text: "tv".into() },
            AtomicOperation::Enter,
        ] {
            d.execute(&op).unwrap();
        }
        assert_eq!(page(&mut d), "shop.loading");
        d.execute(&AtomicOperation::Wait).unwrap();
        assert_eq!(page(&mut d), "shop.results");
        // The clear icon empties the shared field. The promo popup fires on
        // this same step, so read the field from state.
        d.execute(&AtomicOperation::Tap { x: 950, y: 250 }).unwrap();
        assert_eq!(d.state().fields.get("shop.search").map(String::as_str), Some(""));
    }

    #[test]
    fn open_app_only_from_home_or_switcher() {
        let mut d = device();
        d.execute(&AtomicOperation::OpenApp {
            app_name: "Shop".into(),
        })
        .unwrap();
        d.execute(&AtomicOperation::OpenApp {
            app_name: "Notes".into(),
        })
        .unwrap();
        assert_eq!(page(&mut d), "shop.home");
        d.execute(&AtomicOperation::Home).unwrap();
        d.execute(&AtomicOperation::OpenApp {
            app_name: "Notes".into(),
        })
        .unwrap();
        assert_eq!(page(&mut d), "notes.home");
    }

    #[test]
    fn switcher_resumes_last_page() {
        let mut d = device();
        d.execute(&AtomicOperation::OpenApp {
            app_name: "Shop".into(),
        })
        .unwrap();
        d.execute(&AtomicOperation::Tap { x: 100, y: 450 }).unwrap();
        d.execute(&AtomicOperation::Home).unwrap();
        d.execute(&AtomicOperation::OpenApp {
            app_name: "Notes".into(),
        })
        .unwrap();
        let s = d.execute(&AtomicOperation::SwitchApp).unwrap();
        let truth = s.sim_truth.unwrap();
        assert_eq!(truth.page, SWITCHER_PAGE);
        let shop = truth.elements.iter().find(|e| e.label == "Shop").unwrap();
        let (x, y) = shop.bbox.center();
        d.execute(&AtomicOperation::Tap { x, y }).unwrap();
        assert_eq!(page(&mut d), "shop.results");
    }

    #[test]
    fn back_pops_navigation() {
        let mut d = device();
        d.execute(&AtomicOperation::Tap { x: 100, y: 500 }).unwrap();
        d.execute(&AtomicOperation::Tap { x: 100, y: 450 }).unwrap();
        d.execute(&AtomicOperation::Back).unwrap();
        assert_eq!(page(&mut d), "shop.home");
        d.execute(&AtomicOperation::Back).unwrap();
        assert_eq!(page(&mut d), "home");
        d.execute(&AtomicOperation::Back).unwrap();
        assert_eq!(page(&mut d), "home");
    }

    #[test]
    fn popup_overlays_and_dismiss_restores() {
        let mut d = device();
        d.execute(&AtomicOperation::OpenApp {
            app_name: "Shop".into(),
        })
        .unwrap();
        d.execute(&AtomicOperation::Tap { x: 100, y: 450 }).unwrap();
        let underlying = d.capture().unwrap().sim_truth.unwrap();
        for _ in 0..3 {
            d.execute(&AtomicOperation::Wait).unwrap();
        }
        let before_popup = d.capture().unwrap().sim_truth.unwrap();
        assert_eq!(before_popup, underlying);
        let s = d.execute(&AtomicOperation::Wait).unwrap();
        let truth = s.sim_truth.unwrap();
        assert_eq!(truth.overlay.as_deref(), Some("shop.promo"));
        // Taps outside the dismiss button do nothing while the overlay is up.
        d.execute(&AtomicOperation::Tap { x: 100, y: 450 }).unwrap();
        assert_eq!(
            d.capture().unwrap().sim_truth.unwrap().overlay.as_deref(),
            Some("shop.promo")
        );
        let restored = d
            .execute(&AtomicOperation::Tap { x: 950, y: 350 })
            .unwrap()
            .sim_truth
            .unwrap();
        assert_eq!(restored, underlying);
    }

    #[test]
    fn out_of_bounds_is_no_change() {
        let mut d = device();
        let before = d.capture().unwrap().sim_truth;
        let after = d.execute(&AtomicOperation::Tap { x: 5000, y: 500 }).unwrap();
        assert_eq!(after.sim_truth, before);
        assert_eq!(after.step_index, 1);
    }

    #[test]
    fn identical_sequences_are_identical() {
        let ops = [
            AtomicOperation::OpenApp {
                app_name: "Shop".into(),
            },
            AtomicOperation::Tap { x: 500, y: 250 },
            AtomicOperation::Type { text: "x".into() },
            AtomicOperation::Enter,
            AtomicOperation::Wait,
            AtomicOperation::Swipe {
                x1: 540,
                y1: 1800,
                x2: 540,
                y2: 600,
            },
        ];
        let run = || {
            let mut d = device();
            ops.iter().map(|op| d.execute(op).unwrap()).collect::<Vec<_>>()
        };
        let (a, b) = (run(), run());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(
                serde_json::to_vec(&x.sim_truth).unwrap(),
                serde_json::to_vec(&y.sim_truth).unwrap()
            );
            assert_eq!(x.image, y.image);
        }
        assert_eq!(a.last().unwrap().sim_truth.as_ref().unwrap().page, "shop.home");
    }
}
