use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound of the normalized coordinate grid. `(0,0)` is top-left.
pub const COORD_MAX: u16 = 1000;

/// The eleven GUI action kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    OpenApp,
    Tap,
    LongPress,
    Swipe,
    InputText,
    SwipeTwoPoints,
    Wait,
    CaptureScreen,
    Home,
    Back,
    Finish,
}

impl ActionKind {
    pub const ALL: [ActionKind; 11] = [
        ActionKind::OpenApp,
        ActionKind::Tap,
        ActionKind::LongPress,
        ActionKind::Swipe,
        ActionKind::InputText,
        ActionKind::SwipeTwoPoints,
        ActionKind::Wait,
        ActionKind::CaptureScreen,
        ActionKind::Home,
        ActionKind::Back,
        ActionKind::Finish,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::OpenApp => "open_app",
            ActionKind::Tap => "tap",
            ActionKind::LongPress => "long_press",
            ActionKind::Swipe => "swipe",
            ActionKind::InputText => "input_text",
            ActionKind::SwipeTwoPoints => "swipe_two_points",
            ActionKind::Wait => "wait",
            ActionKind::CaptureScreen => "capture_screen",
            ActionKind::Home => "home",
            ActionKind::Back => "back",
            ActionKind::Finish => "finish",
        }
    }

    /// Parses a kind name, accepting the aliases models emit (`text`, `FINISH`).
    pub fn parse_loose(name: &str) -> Option<ActionKind> {
        let lowered = name.trim().to_ascii_lowercase();
        let kind = match lowered.as_str() {
            "text" => ActionKind::InputText,
            other => *ActionKind::ALL.iter().find(|k| k.as_str() == other)?,
        };
        Some(kind)
    }

    fn uses_point(self) -> bool {
        matches!(self, ActionKind::Tap | ActionKind::LongPress | ActionKind::Swipe | ActionKind::SwipeTwoPoints)
    }

    fn uses_value(self) -> bool {
        matches!(self, ActionKind::InputText | ActionKind::OpenApp)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub fn reversed(self) -> Direction {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }

    pub fn parse(name: &str) -> Option<Direction> {
        match name.trim().to_ascii_lowercase().as_str() {
            "up" => Some(Direction::Up),
            "down" => Some(Direction::Down),
            "left" => Some(Direction::Left),
            "right" => Some(Direction::Right),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceHint {
    Short,
    Medium,
    Long,
}

impl DistanceHint {
    pub fn parse(name: &str) -> Option<DistanceHint> {
        match name.trim().to_ascii_lowercase().as_str() {
            "short" => Some(DistanceHint::Short),
            "medium" => Some(DistanceHint::Medium),
            "long" => Some(DistanceHint::Long),
            _ => None,
        }
    }
}

/// A single GUI action on the normalized 0..=1000 grid.
///
/// Fields a kind does not use are zero (numeric) or empty/absent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Action {
    pub kind: ActionKind,
    #[serde(default)]
    pub x: u16,
    #[serde(default)]
    pub y: u16,
    #[serde(default)]
    pub x_end: u16,
    #[serde(default)]
    pub y_end: u16,
    #[serde(default)]
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_hint: Option<DistanceHint>,
}

impl Action {
    pub fn bare(kind: ActionKind) -> Self {
        Action { kind, x: 0, y: 0, x_end: 0, y_end: 0, value: String::new(), direction: None, distance_hint: None }
    }

    pub fn tap(x: u16, y: u16) -> Self {
        Action { x, y, ..Action::bare(ActionKind::Tap) }
    }

    pub fn long_press(x: u16, y: u16) -> Self {
        Action { x, y, ..Action::bare(ActionKind::LongPress) }
    }

    pub fn swipe(x: u16, y: u16, direction: Direction, distance: Option<DistanceHint>) -> Self {
        Action { x, y, direction: Some(direction), distance_hint: distance, ..Action::bare(ActionKind::Swipe) }
    }

    pub fn swipe_two_points(x: u16, y: u16, x_end: u16, y_end: u16) -> Self {
        Action { x, y, x_end, y_end, ..Action::bare(ActionKind::SwipeTwoPoints) }
    }

    pub fn input_text(value: impl Into<String>) -> Self {
        Action { value: value.into(), ..Action::bare(ActionKind::InputText) }
    }

    pub fn open_app(name: impl Into<String>) -> Self {
        Action { value: name.into(), ..Action::bare(ActionKind::OpenApp) }
    }

    /// Zeroes or clears every field the kind does not use.
    pub fn normalized(mut self) -> Self {
        let kind = self.kind;
        if !kind.uses_point() {
            self.x = 0;
            self.y = 0;
        }
        if kind != ActionKind::SwipeTwoPoints {
            self.x_end = 0;
            self.y_end = 0;
        }
        if !kind.uses_value() {
            self.value.clear();
        }
        if kind != ActionKind::Swipe {
            self.direction = None;
            self.distance_hint = None;
        }
        self
    }

    /// Direction of travel for the two swipe kinds, `None` for anything else.
    pub fn travel_direction(&self) -> Option<Direction> {
        match self.kind {
            ActionKind::Swipe => self.direction,
            ActionKind::SwipeTwoPoints => swipe_direction(self.x, self.y, self.x_end, self.y_end).ok(),
            _ => None,
        }
    }

    /// Short human-readable rendering used in history digests.
    pub fn describe(&self) -> String {
        match self.kind {
            ActionKind::Tap | ActionKind::LongPress => format!("{}({},{})", self.kind, self.x, self.y),
            ActionKind::Swipe => {
                format!("swipe({},{} {})", self.x, self.y, self.direction.map(Direction::as_str).unwrap_or("?"))
            }
            ActionKind::SwipeTwoPoints => {
                format!("swipe_two_points({},{}->{},{})", self.x, self.y, self.x_end, self.y_end)
            }
            ActionKind::InputText | ActionKind::OpenApp => format!("{}(\"{}\")", self.kind, self.value),
            other => other.as_str().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("degenerate swipe")]
    DegenerateSwipe,
    #[error("coordinate out of range")]
    OutOfRange,
}

/// Dominant-axis direction of a two-point swipe. Screen y grows downward and
/// ties (|dx| == |dy|) resolve to the vertical axis.
pub fn swipe_direction(x: u16, y: u16, x_end: u16, y_end: u16) -> Result<Direction, GeometryError> {
    if [x, y, x_end, y_end].iter().any(|&c| c > COORD_MAX) {
        return Err(GeometryError::OutOfRange);
    }
    let dx = i32::from(x_end) - i32::from(x);
    let dy = i32::from(y_end) - i32::from(y);
    if dx == 0 && dy == 0 {
        return Err(GeometryError::DegenerateSwipe);
    }
    Ok(if dy.abs() >= dx.abs() {
        if dy < 0 {
            Direction::Up
        } else {
            Direction::Down
        }
    } else if dx < 0 {
        Direction::Left
    } else {
        Direction::Right
    })
}

/// Every invariant violation of `action`; empty when valid.
pub fn validate_action(action: &Action) -> Vec<String> {
    let mut out = Vec::new();
    for (name, value) in [("x", action.x), ("y", action.y), ("x_end", action.x_end), ("y_end", action.y_end)] {
        if value > COORD_MAX {
            out.push(format!("{name} out of range"));
        }
    }
    let kind = action.kind;
    if !kind.uses_point() && (action.x != 0 || action.y != 0) {
        out.push(format!("x,y must be 0 for {kind}"));
    }
    if kind != ActionKind::SwipeTwoPoints && (action.x_end != 0 || action.y_end != 0) {
        out.push(format!("x_end,y_end must be 0 for {kind}"));
    }
    match kind {
        ActionKind::SwipeTwoPoints => {
            if action.x == action.x_end && action.y == action.y_end {
                out.push("endpoints must differ".to_string());
            }
        }
        ActionKind::Swipe => {
            if action.direction.is_none() {
                out.push("swipe requires direction".to_string());
            }
        }
        ActionKind::InputText | ActionKind::OpenApp if action.value.trim().is_empty() => {
            out.push(format!("{kind} requires non-empty value"));
        }
        _ => {}
    }
    if kind != ActionKind::Swipe && (action.direction.is_some() || action.distance_hint.is_some()) {
        out.push(format!("direction and distance_hint only apply to swipe, not {kind}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_tap_has_no_violations() {
        assert!(validate_action(&Action::tap(500, 500)).is_empty());
    }

    #[test]
    fn tap_out_of_range() {
        assert_eq!(validate_action(&Action::tap(1200, 500)), vec!["x out of range".to_string()]);
    }

    #[test]
    fn degenerate_two_point_swipe() {
        let v = validate_action(&Action::swipe_two_points(300, 300, 300, 300));
        assert_eq!(v, vec!["endpoints must differ".to_string()]);
    }

    #[test]
    fn missing_payloads() {
        assert!(!validate_action(&Action::input_text("  ")).is_empty());
        assert!(!validate_action(&Action::open_app("")).is_empty());
        assert!(!validate_action(&Action::bare(ActionKind::Swipe)).is_empty());
        let mut wait = Action::bare(ActionKind::Wait);
        wait.x = 4;
        assert_eq!(validate_action(&wait), vec!["x,y must be 0 for wait".to_string()]);
    }

    #[test]
    fn direction_table() {
        assert_eq!(swipe_direction(500, 800, 500, 200), Ok(Direction::Up));
        assert_eq!(swipe_direction(100, 500, 900, 500), Ok(Direction::Right));
        // |dx| == |dy| == 300: vertical wins, y grows downward.
        assert_eq!(swipe_direction(100, 100, 400, 400), Ok(Direction::Down));
        assert_eq!(swipe_direction(400, 400, 100, 100), Ok(Direction::Up));
        assert_eq!(swipe_direction(600, 500, 100, 520), Ok(Direction::Left));
        assert_eq!(swipe_direction(5, 5, 5, 5), Err(GeometryError::DegenerateSwipe));
        assert_eq!(swipe_direction(5, 5, 1001, 5), Err(GeometryError::OutOfRange));
    }

    #[test]
    fn loose_kind_names() {
        assert_eq!(ActionKind::parse_loose("text"), Some(ActionKind::InputText));
        assert_eq!(ActionKind::parse_loose("FINISH"), Some(ActionKind::Finish));
        assert_eq!(ActionKind::parse_loose(" Long_Press "), Some(ActionKind::LongPress));
        assert_eq!(ActionKind::parse_loose("fly"), None);
        assert_eq!(ActionKind::parse_loose("need_feedback"), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn flipping_endpoints_reverses(x in 0u16..=1000, y in 0u16..=1000, xe in 0u16..=1000, ye in 0u16..=1000) {
                prop_assume!((x, y) != (xe, ye));
                let forward = swipe_direction(x, y, xe, ye).unwrap();
                let backward = swipe_direction(xe, ye, x, y).unwrap();
                prop_assert_eq!(forward.reversed(), backward);
            }
        }
    }
}
