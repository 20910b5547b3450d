//! Word lists for synthetic pages. Nothing here contains digits, and no word
//! of one list appears in another, so planted values are the only numerals
//! and entity names a task ever shows.

pub const APPS: [&str; 12] =
    ["Shop", "Maps", "Mail", "Notes", "Calendar", "Wallet", "Travel", "Messages", "Photos", "Tickets", "Bank", "Food"];

pub const PAGES: [&str; 8] = ["Home", "Search", "Details", "List", "Settings", "Account", "Orders", "History"];

pub const ROW_TEXTS: [&str; 12] = [
    "Recent",
    "Favorites",
    "Filter",
    "Sort",
    "Categories",
    "Saved",
    "Help",
    "Shared",
    "Archive",
    "Updates",
    "Labels",
    "Drafts",
];

pub const BUTTONS: [&str; 4] = ["Open", "Next", "Menu", "More"];

/// A value that must be carried from one screen to a later one.
pub struct Slot {
    pub label: &'static str,
    /// Field of the form it is typed into.
    pub field: &'static str,
    pub numeric: bool,
    /// Prefix shown before the value on the source screen.
    pub prefix: &'static str,
}

pub const SLOTS: [Slot; 10] = [
    Slot { label: "price", field: "amount", numeric: true, prefix: "¥" },
    Slot { label: "order number", field: "reference", numeric: true, prefix: "#" },
    Slot { label: "booking code", field: "booking code", numeric: true, prefix: "" },
    Slot { label: "room number", field: "room", numeric: true, prefix: "" },
    Slot { label: "tracking number", field: "parcel", numeric: true, prefix: "" },
    Slot { label: "ticket number", field: "ticket", numeric: true, prefix: "" },
    Slot { label: "gate", field: "gate", numeric: true, prefix: "" },
    Slot { label: "pickup point", field: "pickup location", numeric: false, prefix: "" },
    Slot { label: "venue", field: "location", numeric: false, prefix: "" },
    Slot { label: "meeting place", field: "meeting place", numeric: false, prefix: "" },
];

pub const ENTITIES: [&str; 12] = [
    "Blue Harbor",
    "Maple Court",
    "Cedar Hall",
    "Lotus Garden",
    "Amber Gate",
    "Silver Lake",
    "Pine Ridge",
    "Coral Bay",
    "Jade Tower",
    "Elm Square",
    "Ivy Terrace",
    "Birch Point",
];
