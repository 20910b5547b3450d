use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{
    normalize_content, Action, ActionKind, Anchor, AnchorPredicate, AnchorStatus, AnchorType, Bbox, CausalLink,
    Direction, DistanceHint, EvidenceRef, Intent, Relation, Step, StepRange, Task, UiElement, UiState,
};

use super::vocab::{Slot, APPS, BUTTONS, ENTITIES, PAGES, ROW_TEXTS, SLOTS};
use super::{mix_seed, GapSchedule, SynthConfig, SynthError};

const LAYOUT_ATTEMPTS: usize = 256;
const LAUNCHER: &str = "Launcher";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Start,
    Finish,
    Extract(usize),
    Reuse(usize),
    Switch(usize),
    Popup,
    Subgoal,
    Filler,
}

struct Dep {
    slot: &'static Slot,
    value: String,
    extract: usize,
    reuse: usize,
    carry: bool,
}

struct Layout {
    roles: Vec<Role>,
    deps: Vec<Dep>,
    /// App shown in the state of each step.
    state_app: Vec<String>,
    /// App opened by each open_app step.
    opened: Vec<Option<String>>,
}

/// Generates one task from `seed`, drawing its intent from the configured
/// mix.
pub fn generate_task(seed: u64, config: &SynthConfig) -> Result<Task, SynthError> {
    config.validate()?;
    let weights = config.weights();
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let mut pick = ChaCha8Rng::seed_from_u64(mix_seed(seed)).gen_range(0.0..total);
    let mut intent = weights[0].0;
    for (i, w) in &weights {
        if pick < *w {
            intent = *i;
            break;
        }
        pick -= w;
    }
    generate_with(format!("syn-{seed:016x}"), seed, intent, config)
}

pub(super) fn generate_with(id: String, seed: u64, intent: Intent, config: &SynthConfig) -> Result<Task, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.gen_range(config.length.min..=config.length.max);
    let pool = &APPS[..config.app_pool];
    for _ in 0..LAYOUT_ATTEMPTS {
        if let Some(layout) = try_layout(&mut rng, len, config, pool) {
            return Ok(build(id, intent, layout, config, &mut rng));
        }
    }
    Err(SynthError::Infeasible {
        task: id,
        reason: format!("no layout of {len} steps found in {LAYOUT_ATTEMPTS} attempts"),
    })
}

fn free_in(roles: &[Role], range: std::ops::RangeInclusive<usize>) -> Vec<usize> {
    range.filter(|&t| roles[t] == Role::Filler).collect()
}

fn try_layout(rng: &mut ChaCha8Rng, len: usize, config: &SynthConfig, pool: &[&str]) -> Option<Layout> {
    let gaps: Vec<usize> = match config.gap_schedule {
        GapSchedule::Fixed => {
            let k = rng.gen_range(config.dependencies.min..=config.dependencies.max);
            (0..k).map(|_| rng.gen_range(config.gap.min..=config.gap.max)).collect()
        }
        GapSchedule::LengthScaled => (0..len / 10).map(|j| 5 + 3 * j).collect(),
    };
    let mut roles = vec![Role::Filler; len];
    roles[0] = Role::Start;
    roles[len - 1] = Role::Finish;

    // Longest gaps first: they have the fewest placements.
    let mut order: Vec<usize> = (0..gaps.len()).collect();
    order.sort_by_key(|&j| std::cmp::Reverse(gaps[j]));
    let mut spans = vec![(0usize, 0usize); gaps.len()];
    for j in order {
        let g = gaps[j];
        if g + 3 > len {
            return None;
        }
        let starts: Vec<usize> = (1..=len - 2 - g)
            .filter(|&e| {
                roles[e] == Role::Filler
                    && roles[e + g] == Role::Filler
                    && !free_in(&roles, e + 1..=e + g - 1).is_empty()
            })
            .collect();
        let &e = starts.choose(rng)?;
        let &s = free_in(&roles, e + 1..=e + g - 1).choose(rng)?;
        roles[e] = Role::Extract(j);
        roles[e + g] = Role::Reuse(j);
        roles[s] = Role::Switch(j);
        spans[j] = (e, e + g);
    }

    // Each open_app step starts a segment of states showing its app; a
    // segment holding a reuse must differ from its extraction's app.
    let opens: Vec<usize> = (0..len).filter(|&t| matches!(roles[t], Role::Start | Role::Switch(_))).collect();
    let mut state_app = vec![String::new(); len];
    let mut opened = vec![None; len];
    state_app[0] = LAUNCHER.to_string();
    for (n, &o) in opens.iter().enumerate() {
        let seg_end = opens.get(n + 1).copied().unwrap_or(len - 1);
        let current = state_app[o].clone();
        let forbidden: HashSet<&str> = spans
            .iter()
            .filter(|(_, r)| (o + 1..=seg_end).contains(r))
            .map(|&(e, _)| state_app[e].as_str())
            .chain(std::iter::once(current.as_str()))
            .collect();
        let candidates: Vec<&str> = pool.iter().copied().filter(|a| !forbidden.contains(a)).collect();
        let app = candidates.choose(rng)?.to_string();
        for s in state_app.iter_mut().take(seg_end + 1).skip(o + 1) {
            *s = app.clone();
        }
        opened[o] = Some(app);
    }

    let mut slots: Vec<&'static Slot> = SLOTS.iter().collect();
    slots.shuffle(rng);
    let mut entities: Vec<&str> = ENTITIES.to_vec();
    entities.shuffle(rng);
    let mut numerals: HashSet<String> = HashSet::new();
    let mut deps = Vec::with_capacity(gaps.len());
    for (j, &(extract, reuse)) in spans.iter().enumerate() {
        let slot = slots[j];
        let value = if slot.numeric {
            loop {
                let digits = rng.gen_range(2..=4u32);
                let v = rng.gen_range(10u32.pow(digits - 1)..10u32.pow(digits)).to_string();
                if numerals.insert(v.clone()) {
                    break v;
                }
            }
        } else {
            entities.pop()?.to_string()
        };
        let carry = rng.gen_bool(config.summary_carry_probability);
        deps.push(Dep { slot, value, extract, reuse, carry });
    }

    let required = 2 + 3 * deps.len();
    let target = rng.gen_range(config.anchors.min..=config.anchors.max).max(required);
    let mut optional = target - required;
    if rng.gen_bool(config.exception_probability) {
        if let Some(&x) = free_in(&roles, 1..=len - 2).choose(rng) {
            roles[x] = Role::Popup;
            optional = optional.saturating_sub(1);
        }
    }
    let mut free = free_in(&roles, 1..=len - 2);
    free.shuffle(rng);
    for &t in free.iter().take(optional) {
        roles[t] = Role::Subgoal;
    }

    Some(Layout { roles, deps, state_app, opened })
}

fn title_case(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn row_bbox(i: usize) -> Bbox {
    let y = 120 + 140 * i as u16;
    Bbox::new(40, y, 960, y + 110)
}

fn element(bbox: Bbox, text: impl Into<String>, role: &str) -> UiElement {
    UiElement { bbox, text: Some(text.into()), role: Some(role.to_string()) }
}

/// Title bar, three to five list rows and a two-button footer.
struct Page {
    name: &'static str,
    elements: Vec<UiElement>,
    rows: Vec<usize>,
}

fn generic_page(rng: &mut ChaCha8Rng, app: &str) -> Page {
    let name = *PAGES.choose(rng).expect("pages");
    let mut elements = vec![element(Bbox::new(0, 0, 1000, 80), format!("{app} {name}"), "title")];
    let n = rng.gen_range(3..=5);
    let mut rows = Vec::with_capacity(n);
    for (i, text) in ROW_TEXTS.choose_multiple(rng, n).enumerate() {
        rows.push(elements.len());
        elements.push(element(row_bbox(i), *text, "item"));
    }
    let buttons: Vec<&str> = BUTTONS.choose_multiple(rng, 2).copied().collect();
    elements.push(element(Bbox::new(40, 900, 480, 980), buttons[0], "button"));
    elements.push(element(Bbox::new(520, 900, 960, 980), buttons[1], "button"));
    Page { name, elements, rows }
}

fn anchor(id: &str, kind: AnchorType, content: String, step: usize, predicate: AnchorPredicate) -> Anchor {
    Anchor {
        id: id.to_string(),
        kind,
        content,
        description: String::new(),
        evidence: vec![EvidenceRef { step_index: step, element_bbox: None, extracted_value: None }],
        links: Vec::new(),
        status: AnchorStatus::Active,
        predicate: Some(predicate),
    }
}

fn anchor_id(step: usize) -> String {
    format!("a{step:02}")
}

fn intent_prefix(intent: Intent) -> &'static str {
    match intent {
        Intent::Lookup => "Look up details",
        Intent::CompareDecide => "Compare the options",
        Intent::PurchaseOrder => "Place the order",
        Intent::Booking => "Complete the booking",
        Intent::Communicate => "Send the message",
        Intent::ShareRecommend => "Share the recommendation",
        Intent::CreateContent => "Create the entry",
        Intent::ConfigureAuthorize => "Update the settings",
    }
}

fn build(id: String, intent: Intent, layout: Layout, config: &SynthConfig, rng: &mut ChaCha8Rng) -> Task {
    let Layout { roles, deps, state_app, opened } = layout;
    let len = roles.len();
    let mut steps: Vec<Step> = Vec::with_capacity(len);
    let mut contents: HashSet<String> = HashSet::new();
    let mut popup_anchor: Option<String> = None;

    let mut by_extract: Vec<&Dep> = deps.iter().collect();
    by_extract.sort_by_key(|d| d.extract);
    let clauses: Vec<String> = by_extract
        .iter()
        .map(|d| {
            format!(
                "copy the {} shown in {} into the {} field in {}",
                d.slot.label, state_app[d.extract], d.slot.field, state_app[d.reuse]
            )
        })
        .collect();
    let instruction = format!("{}: {}, then finish.", intent_prefix(intent), clauses.join(", then "));

    for t in 0..len {
        let app = state_app[t].as_str();
        let aid = anchor_id(t);
        let (elements, action, summary, gt_anchor) = match roles[t] {
            Role::Start => {
                let app0 = opened[0].clone().expect("start opens an app");
                let elements: Vec<UiElement> = APPS[..config.app_pool]
                    .iter()
                    .enumerate()
                    .map(|(i, name)| {
                        let (c, r) = ((i % 4) as u16, (i / 4) as u16);
                        element(Bbox::new(40 + 240 * c, 150 + 240 * r, 240 + 240 * c, 350 + 240 * r), *name, "icon")
                    })
                    .collect();
                let mut targets: Vec<&str> = Vec::new();
                for d in &by_extract {
                    if !targets.contains(&state_app[d.reuse].as_str()) {
                        targets.push(&state_app[d.reuse]);
                    }
                }
                let labels: Vec<&str> = by_extract.iter().map(|d| d.slot.label).collect();
                let content = format!("task needs the {} for {}", labels.join(", "), targets.join(", "));
                let a = anchor(
                    &aid,
                    AnchorType::ContextInfo,
                    content,
                    t,
                    AnchorPredicate::ReachesStepWithApp { app: app0.clone(), steps: StepRange::single(t) },
                );
                (elements, Action::open_app(&app0), format!("Opened {app0} from the launcher."), Some(a))
            }
            Role::Switch(_) => {
                let page = generic_page(rng, app);
                let next = opened[t].clone().expect("switch opens an app");
                let mut content = format!("switched from {app} to {next}");
                if contents.contains(&normalize_content(&content)) {
                    content = format!("returned to {next} from {app}");
                }
                let a = (!contents.contains(&normalize_content(&content))).then(|| {
                    anchor(
                        &aid,
                        AnchorType::StateChange,
                        content,
                        t,
                        AnchorPredicate::ReachesStepWithApp { app: next.clone(), steps: StepRange::single(t) },
                    )
                });
                (page.elements, Action::open_app(&next), format!("Switched from {app} to {next}."), a)
            }
            Role::Extract(j) => {
                let d = &deps[j];
                let mut page = generic_page(rng, app);
                let row = *page.rows.choose(rng).expect("rows");
                let bbox = page.elements[row].bbox;
                page.elements[row] =
                    element(bbox, format!("{}: {}{}", title_case(d.slot.label), d.slot.prefix, d.value), "text");
                let (x, y) = bbox.center();
                let mut a = anchor(
                    &aid,
                    AnchorType::Dependency,
                    format!("{} {} from {}", d.slot.label, d.value, app),
                    t,
                    AnchorPredicate::ValueContains { value: d.value.clone(), steps: StepRange::new(t + 1, d.reuse) },
                );
                a.description = format!("Needed later in {}", state_app[d.reuse]);
                a.evidence[0].element_bbox = Some(bbox);
                a.evidence[0].extracted_value = Some(d.value.clone());
                let summary = format!("Found the {} {} on the {} page in {}.", d.slot.label, d.value, page.name, app);
                (page.elements, Action::long_press(x, y), summary, Some(a))
            }
            Role::Reuse(j) => {
                let d = &deps[j];
                let field = title_case(d.slot.field);
                let input = Bbox::new(40, 260, 960, 370);
                let elements = vec![
                    element(Bbox::new(0, 0, 1000, 80), format!("{app} Form"), "title"),
                    element(Bbox::new(40, 120, 960, 230), field, "label"),
                    element(input, format!("Enter {}", d.slot.field), "input"),
                    element(Bbox::new(520, 900, 960, 980), "Submit", "button"),
                ];
                let mut a = anchor(
                    &aid,
                    AnchorType::Dependency,
                    format!("entered {} {} into {} {}", d.slot.label, d.value, app, d.slot.field),
                    t,
                    AnchorPredicate::ValueEqualsEvidence {
                        anchor_id: anchor_id(d.extract),
                        evidence_step: d.extract,
                        steps: StepRange::single(t),
                    },
                );
                a.evidence[0].element_bbox = Some(input);
                a.links.push(CausalLink { source_anchor_id: anchor_id(d.extract), relation: Relation::ResultOf });
                let summary = format!("Entered the {} into the {} field in {}.", d.slot.label, d.slot.field, app);
                (elements, Action::input_text(d.value.clone()), summary, Some(a))
            }
            Role::Popup => {
                let mut page = generic_page(rng, app);
                let dialog = Bbox::new(150, 350, 850, 650);
                let dismiss = Bbox::new(200, 560, 480, 630);
                page.elements.push(element(dialog, "Allow notifications?", "dialog"));
                page.elements.push(element(dismiss, "Not now", "button"));
                page.elements.push(element(Bbox::new(520, 560, 800, 630), "Allow", "button"));
                let (x, y) = dismiss.center();
                let mut a = anchor(
                    &aid,
                    AnchorType::Exception,
                    format!("notification popup interrupted {app}"),
                    t,
                    AnchorPredicate::ActionKindAtStepRange { action: ActionKind::Tap, steps: StepRange::single(t) },
                );
                a.evidence[0].element_bbox = Some(dialog);
                popup_anchor = Some(aid.clone());
                (page.elements, Action::tap(x, y), format!("Dismissed a notification popup in {app}."), Some(a))
            }
            Role::Subgoal => {
                let page = generic_page(rng, app);
                let row = *page.rows.choose(rng).expect("rows");
                let target = page.elements[row].clone();
                let text = target.text.clone().unwrap_or_default();
                let content = format!("opened {} on {} {}", text, app, page.name);
                let (x, y) = target.bbox.center();
                let a = (!contents.contains(&normalize_content(&content))).then(|| {
                    anchor(
                        &aid,
                        AnchorType::Subgoal,
                        content,
                        t,
                        AnchorPredicate::ActionKindAtStepRange { action: ActionKind::Tap, steps: StepRange::single(t) },
                    )
                });
                let summary = format!("Opened {} on the {} page in {}.", text, page.name, app);
                (page.elements, Action::tap(x, y), summary, a)
            }
            Role::Filler => {
                let page = generic_page(rng, app);
                let roll: f64 = rng.gen();
                let (action, summary) = if roll < 0.5 {
                    let row = &page.elements[*page.rows.choose(rng).expect("rows")];
                    let (x, y) = row.bbox.center();
                    let text = row.text.clone().unwrap_or_default();
                    (Action::tap(x, y), format!("Opened {} on the {} page in {}.", text, page.name, app))
                } else if roll < 0.7 {
                    let dir = if rng.gen_bool(0.5) { Direction::Up } else { Direction::Down };
                    (
                        Action::swipe(500, 600, dir, Some(DistanceHint::Medium)),
                        format!("Scrolled the {} page in {}.", page.name, app),
                    )
                } else if roll < 0.8 {
                    (
                        Action::swipe_two_points(500, 750, 500, 300),
                        format!("Dragged the {} page up in {}.", page.name, app),
                    )
                } else {
                    (Action::bare(ActionKind::Back), format!("Went back from the {} page in {}.", page.name, app))
                };
                (page.elements, action, summary, None)
            }
            Role::Finish => {
                let page = generic_page(rng, app);
                let last = deps.iter().max_by_key(|d| d.reuse).expect("at least one dependency");
                let mut a = anchor(
                    &aid,
                    AnchorType::Finish,
                    format!("all {} values entered; task complete", deps.len()),
                    t,
                    AnchorPredicate::OrderedAfter {
                        anchor_id: anchor_id(last.reuse),
                        action: ActionKind::Finish,
                        steps: StepRange::new(last.reuse + 1, t),
                    },
                );
                let mut reuses: Vec<usize> = deps.iter().map(|d| d.reuse).collect();
                reuses.sort_unstable();
                a.links = reuses
                    .into_iter()
                    .map(|r| CausalLink { source_anchor_id: anchor_id(r), relation: Relation::Prerequisite })
                    .chain(
                        popup_anchor
                            .iter()
                            .map(|p| CausalLink { source_anchor_id: p.clone(), relation: Relation::Enables }),
                    )
                    .collect();
                (
                    page.elements,
                    Action::bare(ActionKind::Finish),
                    "Confirmed every entry; the task is done.".to_string(),
                    Some(a),
                )
            }
        };
        if let Some(a) = &gt_anchor {
            contents.insert(normalize_content(&a.content));
        }
        steps.push(Step {
            state: UiState {
                step_index: t,
                screenshot_ref: format!("{id}/{t:03}.png"),
                app: app.to_string(),
                elements: Some(elements),
            },
            action,
            reasoning: None,
            summary: Some(summary),
            gt_anchors: gt_anchor.into_iter().collect(),
        });
    }

    for d in deps.iter().filter(|d| d.carry) {
        if let Some(s) = steps[d.reuse - 1].summary.as_mut() {
            s.push_str(&format!(" Still need the {} {} for {}.", d.slot.label, d.value, state_app[d.reuse]));
        }
    }

    let mut apps: Vec<String> = Vec::new();
    for a in opened.into_iter().flatten() {
        if !apps.contains(&a) {
            apps.push(a);
        }
    }
    Task { id, instruction, intent, apps, steps, final_anchor_id: anchor_id(len - 1) }
}
