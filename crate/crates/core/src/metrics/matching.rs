use crate::domain::{Action, ActionKind, UiElement};

/// Tap tolerance: 14% of the unit square, i.e. 140 grid units.
pub const TAP_RADIUS: i64 = 140;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MatchOptions {
    /// When set, text steps score 1 if ANLS reaches the threshold and 0
    /// otherwise instead of getting fractional credit.
    pub text_threshold: Option<f64>,
}

/// Character-level edit distance (two-row dynamic programming).
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// 1 − L(a,b) / max(|a|,|b|) over characters; 1 when both are empty.
pub fn anls(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

fn within_tap_radius(pred: &Action, gt: &Action) -> bool {
    let dx = i64::from(pred.x) - i64::from(gt.x);
    let dy = i64::from(pred.y) - i64::from(gt.y);
    dx * dx + dy * dy <= TAP_RADIUS * TAP_RADIUS
}

/// Per-step correctness score in [0,1].
pub fn action_match(pred: &Action, gt: &Action, gt_element: Option<&UiElement>, opts: MatchOptions) -> f64 {
    let is_swipe = |k: ActionKind| matches!(k, ActionKind::Swipe | ActionKind::SwipeTwoPoints);
    if is_swipe(pred.kind) && is_swipe(gt.kind) {
        let same = matches!((pred.travel_direction(), gt.travel_direction()), (Some(p), Some(g)) if p == g);
        return f64::from(u8::from(same));
    }
    if pred.kind != gt.kind {
        return 0.0;
    }
    let hit = match gt.kind {
        ActionKind::Tap | ActionKind::LongPress => {
            within_tap_radius(pred, gt) || gt_element.is_some_and(|e| e.bbox.contains(pred.x, pred.y))
        }
        ActionKind::InputText => {
            let score = anls(&pred.value, &gt.value);
            return match opts.text_threshold {
                Some(t) => f64::from(u8::from(score >= t)),
                None => score,
            };
        }
        ActionKind::OpenApp => pred.value.trim().to_lowercase() == gt.value.trim().to_lowercase(),
        _ => true,
    };
    f64::from(u8::from(hit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Bbox, Direction};

    fn el(b: Bbox) -> UiElement {
        UiElement { bbox: b, text: None, role: None }
    }

    const OPTS: MatchOptions = MatchOptions { text_threshold: None };

    #[test]
    fn tap_distance_rule() {
        assert_eq!(action_match(&Action::tap(590, 500), &Action::tap(500, 500), None, OPTS), 1.0);
        assert_eq!(action_match(&Action::tap(641, 500), &Action::tap(500, 500), None, OPTS), 0.0);
    }

    #[test]
    fn tap_boundary_inclusive() {
        // 0.14 exactly, axis-aligned and along a 3-4-5 diagonal (84² + 112² = 140²).
        assert_eq!(action_match(&Action::tap(640, 500), &Action::tap(500, 500), None, OPTS), 1.0);
        assert_eq!(action_match(&Action::tap(584, 612), &Action::tap(500, 500), None, OPTS), 1.0);
        assert_eq!(action_match(&Action::tap(585, 612), &Action::tap(500, 500), None, OPTS), 0.0);
    }

    #[test]
    fn containment_overrides_distance() {
        let e = el(Bbox::new(400, 400, 700, 700));
        assert_eq!(action_match(&Action::tap(690, 690), &Action::tap(500, 500), Some(&e), OPTS), 1.0);
        assert_eq!(action_match(&Action::tap(690, 690), &Action::tap(500, 500), None, OPTS), 0.0);
        assert_eq!(action_match(&Action::long_press(701, 701), &Action::long_press(500, 500), Some(&e), OPTS), 0.0);
    }

    #[test]
    fn swipe_pairs_compare_direction() {
        let gt = Action::swipe(500, 500, Direction::Up, None);
        assert_eq!(action_match(&Action::swipe_two_points(500, 800, 480, 300), &gt, None, OPTS), 1.0);
        assert_eq!(action_match(&Action::swipe_two_points(500, 300, 480, 800), &gt, None, OPTS), 0.0);
        assert_eq!(action_match(&Action::swipe(10, 10, Direction::Up, None), &gt, None, OPTS), 1.0);
        assert_eq!(action_match(&Action::tap(500, 500), &gt, None, OPTS), 0.0);
    }

    #[test]
    fn kind_mismatch_scores_zero() {
        assert_eq!(action_match(&Action::swipe(1, 1, Direction::Up, None), &Action::tap(1, 1), None, OPTS), 0.0);
        assert_eq!(action_match(&Action::bare(ActionKind::Home), &Action::bare(ActionKind::Home), None, OPTS), 1.0);
    }

    #[test]
    fn text_and_app() {
        let score = action_match(&Action::input_text("kitten"), &Action::input_text("sitting"), None, OPTS);
        assert!((score - (1.0 - 3.0 / 7.0)).abs() < 1e-12);
        let binary = MatchOptions { text_threshold: Some(0.5) };
        assert_eq!(action_match(&Action::input_text("kitten"), &Action::input_text("sitting"), None, binary), 1.0);
        assert_eq!(action_match(&Action::open_app(" maps "), &Action::open_app("Maps"), None, OPTS), 1.0);
        assert_eq!(action_match(&Action::open_app("Map"), &Action::open_app("Maps"), None, OPTS), 0.0);
    }

    #[test]
    fn anls_examples() {
        assert_eq!(anls("hello", "hello"), 1.0);
        assert_eq!(anls("", ""), 1.0);
        assert_eq!(anls("", "abc"), 0.0);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("¥42", "42"), 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn anls_symmetric_and_bounded(a in ".{0,12}", b in ".{0,12}") {
                let ab = anls(&a, &b);
                prop_assert_eq!(ab, anls(&b, &a));
                prop_assert!((0.0..=1.0).contains(&ab));
                prop_assert_eq!(anls(&a, &a), 1.0);
            }
        }
    }
}
