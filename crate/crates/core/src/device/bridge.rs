//! Real-device driver over the Android debug bridge.
//!
//! Every operation is a single `adb` invocation (with `-s SERIAL` inserted
//! after `adb` when a serial is configured):
//!
//! | operation            | command                                                              |
//! |----------------------|----------------------------------------------------------------------|
//! | `Tap(x, y)`          | `adb shell input tap X Y`                                            |
//! | `Swipe(x1,y1,x2,y2)` | `adb shell input swipe X1 Y1 X2 Y2 500`                              |
//! | `Type(text)`         | `adb shell input text ESCAPED` (space as `%s`, shell metachars `\`-escaped) |
//! | `Enter()`            | `adb shell input keyevent KEYCODE_ENTER`                             |
//! | `Back()`             | `adb shell input keyevent KEYCODE_BACK`                              |
//! | `Home()`             | `adb shell input keyevent KEYCODE_HOME`                              |
//! | `Switch_App()`       | `adb shell input keyevent KEYCODE_APP_SWITCH`                        |
//! | `Open_App(name)`     | `adb shell monkey -p PACKAGE -c android.intent.category.LAUNCHER 1`  |
//! | `Wait()`             | no command; sleeps 10 s                                              |
//! | capture              | `adb shell screencap -p /sdcard/phoneagent_screen.png` then `adb pull /sdcard/phoneagent_screen.png LOCAL` |
//! | screen size          | `adb shell wm size`                                                  |
//!
//! `Open_App` needs an app-name to package mapping; unmapped names fail with
//! [`DeviceError::UnknownApp`].

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;
use std::time::Duration;

use super::{Device, DeviceError};
use crate::memory::{AtomicOperation, ImageRef, ScreenState};

const REMOTE_SCREENSHOT: &str = "/sdcard/phoneagent_screen.png";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandOutput {
    pub success: bool,
    pub stdout: String,
    pub stderr: String,
}

/// Runs an external program. Swapped out in tests.
pub trait CommandRunner {
    fn run(&self, program: &str, args: &[String]) -> std::io::Result<CommandOutput>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemRunner;

impl CommandRunner for SystemRunner {
    fn run(&self, program: &str, args: &[String]) -> std::io::Result<CommandOutput> {
        let out = Command::new(program).args(args).output()?;
        Ok(CommandOutput {
            success: out.status.success(),
            stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        })
    }
}

/// Escapes text for `input text`, which runs through the device shell.
pub(crate) fn escape_input_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            ' ' => out.push_str("%s"),
            '\\' | '\'' | '"' | '(' | ')' | '<' | '>' | '|' | ';' | '&' | '*' | '~' | '$' | '`' | '#' | '?' | '!' => {
                out.push('\\');
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    out
}

fn parse_wm_size(stdout: &str) -> Option<(u32, u32)> {
    let mut physical = None;
    let mut overridden = None;
    for line in stdout.lines() {
        let Some((label, value)) = line.split_once(':') else {
            continue;
        };
        let Some((w, h)) = value.trim().split_once('x') else {
            continue;
        };
        let size = (w.trim().parse().ok()?, h.trim().parse().ok()?);
        if label.contains("Override") {
            overridden = Some(size);
        } else if label.contains("Physical") {
            physical = Some(size);
        }
    }
    overridden.or(physical)
}

pub struct BridgeDevice<R: CommandRunner = SystemRunner> {
    runner: R,
    adb: String,
    serial: Option<String>,
    packages: BTreeMap<String, String>,
    screenshot_dir: PathBuf,
    wait: Duration,
    width: u32,
    height: u32,
    step: usize,
}

impl<R: CommandRunner> BridgeDevice<R> {
    /// Opens a session and queries the screen size.
    pub fn connect(runner: R, serial: Option<String>, screenshot_dir: PathBuf) -> Result<Self, DeviceError> {
        let mut device = Self {
            runner,
            adb: "adb".into(),
            serial,
            packages: BTreeMap::new(),
            screenshot_dir,
            wait: Duration::from_secs(10),
            width: 0,
            height: 0,
            step: 0,
        };
        let out = device.adb(&["shell", "wm", "size"])?;
        let (w, h) = parse_wm_size(&out.stdout).ok_or_else(|| DeviceError::Transport {
            command: device.render_command(&["shell", "wm", "size"]),
            output: out.stdout.clone(),
        })?;
        device.width = w;
        device.height = h;
        Ok(device)
    }

    pub fn with_adb_path(mut self, adb: impl Into<String>) -> Self {
        self.adb = adb.into();
        self
    }

    pub fn with_packages(mut self, packages: BTreeMap<String, String>) -> Self {
        self.packages = packages;
        self
    }

    pub fn with_wait(mut self, wait: Duration) -> Self {
        self.wait = wait;
        self
    }

    fn full_args(&self, args: &[&str]) -> Vec<String> {
        let mut full = Vec::with_capacity(args.len() + 2);
        if let Some(serial) = &self.serial {
            full.push("-s".to_string());
            full.push(serial.clone());
        }
        full.extend(args.iter().map(|a| a.to_string()));
        full
    }

    fn render_command(&self, args: &[&str]) -> String {
        std::iter::once(self.adb.clone())
            .chain(self.full_args(args))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn adb(&self, args: &[&str]) -> Result<CommandOutput, DeviceError> {
        let command = self.render_command(args);
        let out = self
            .runner
            .run(&self.adb, &self.full_args(args))
            .map_err(|e| DeviceError::Transport {
                command: command.clone(),
                output: e.to_string(),
            })?;
        if !out.success || out.stderr.trim_start().starts_with("error:") {
            return Err(DeviceError::Transport {
                command,
                output: format!("{}{}", out.stdout, out.stderr),
            });
        }
        Ok(out)
    }

    /// `adb` arguments (after any `-s SERIAL`) for an operation; `None` for `Wait`.
    pub fn command_for(&self, op: &AtomicOperation) -> Result<Option<Vec<String>>, DeviceError> {
        let s = |v: &[&str]| Some(v.iter().map(|a| a.to_string()).collect::<Vec<_>>());
        Ok(match op {
            AtomicOperation::Tap { x, y } => s(&["shell", "input", "tap", &x.to_string(), &y.to_string()]),
            AtomicOperation::Swipe { x1, y1, x2, y2 } => s(&[
                "shell",
                "input",
                "swipe",
                &x1.to_string(),
                &y1.to_string(),
                &x2.to_string(),
                &y2.to_string(),
                "500",
            ]),
            AtomicOperation::Type { text } => s(&["shell", "input", "text", &escape_input_text(text)]),
            AtomicOperation::Enter => s(&["shell", "input", "keyevent", "KEYCODE_ENTER"]),
            AtomicOperation::Back => s(&["shell", "input", "keyevent", "KEYCODE_BACK"]),
            AtomicOperation::Home => s(&["shell", "input", "keyevent", "KEYCODE_HOME"]),
            AtomicOperation::SwitchApp => s(&["shell", "input", "keyevent", "KEYCODE_APP_SWITCH"]),
            AtomicOperation::OpenApp { app_name } => {
                let package = self
                    .packages
                    .get(app_name)
                    .ok_or_else(|| DeviceError::UnknownApp(app_name.clone()))?;
                s(&[
                    "shell",
                    "monkey",
                    "-p",
                    package,
                    "-c",
                    "android.intent.category.LAUNCHER",
                    "1",
                ])
            }
            AtomicOperation::Wait => None,
        })
    }
}

impl<R: CommandRunner> Device for BridgeDevice<R> {
    fn execute(&mut self, op: &AtomicOperation) -> Result<ScreenState, DeviceError> {
        if !op.within_bounds(self.width, self.height) {
            return Err(DeviceError::OutOfBounds(op.clone()));
        }
        match self.command_for(op)? {
            Some(args) => {
                let args: Vec<&str> = args.iter().map(String::as_str).collect();
                self.adb(&args)?;
            }
            None => std::thread::sleep(self.wait),
        }
        self.step += 1;
        self.capture()
    }

    fn capture(&mut self) -> Result<ScreenState, DeviceError> {
        self.adb(&["shell", "screencap", "-p", REMOTE_SCREENSHOT])?;
        std::fs::create_dir_all(&self.screenshot_dir).map_err(|e| DeviceError::Screenshot(e.to_string()))?;
        let local = self.screenshot_dir.join(format!("screen_{:04}.png", self.step));
        let local_str = local.display().to_string();
        self.adb(&["pull", REMOTE_SCREENSHOT, &local_str])?;
        let (w, h) = image::image_dimensions(&local).map_err(|e| DeviceError::Screenshot(e.to_string()))?;
        Ok(ScreenState {
            step_index: self.step,
            image: ImageRef::Path(local),
            width: w,
            height: h,
            sim_truth: None,
        })
    }

    fn screen_size(&self) -> (u32, u32) {
        (self.width, self.height)
    }
}
