//! Object affordances for household sub-goal planning.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use serde::Deserialize;

#[derive(Debug, Deserialize)]
pub struct Capabilities {
    openable: BTreeSet<String>,
    toggleable: BTreeSet<String>,
    sliceable: BTreeSet<String>,
    pickupable: BTreeSet<String>,
    receptacle: BTreeSet<String>,
    knives: BTreeSet<String>,
}

/// Lookup key for an object name: lowercase, no spaces or underscores, no
/// trailing instance number (`Apple_2` and `apple` share a class).
pub fn class_key(name: &str) -> String {
    let k: String = name.chars().filter(|c| !c.is_whitespace() && *c != '_').flat_map(char::to_lowercase).collect();
    k.trim_end_matches(|c: char| c.is_ascii_digit()).to_string()
}

impl Capabilities {
    pub fn get() -> &'static Capabilities {
        static CAPS: OnceLock<Capabilities> = OnceLock::new();
        CAPS.get_or_init(|| {
            let raw: Capabilities =
                serde_json::from_str(include_str!("../../assets/capabilities.json")).expect("capability table parses");
            let norm = |s: BTreeSet<String>| s.iter().map(|n| class_key(n)).collect();
            Capabilities {
                openable: norm(raw.openable),
                toggleable: norm(raw.toggleable),
                sliceable: norm(raw.sliceable),
                pickupable: norm(raw.pickupable),
                receptacle: norm(raw.receptacle),
                knives: norm(raw.knives),
            }
        })
    }

    pub fn openable(&self, name: &str) -> bool {
        self.openable.contains(&class_key(name))
    }

    pub fn toggleable(&self, name: &str) -> bool {
        self.toggleable.contains(&class_key(name))
    }

    pub fn sliceable(&self, name: &str) -> bool {
        self.sliceable.contains(&class_key(name))
    }

    pub fn pickupable(&self, name: &str) -> bool {
        self.pickupable.contains(&class_key(name))
    }

    pub fn receptacle(&self, name: &str) -> bool {
        self.receptacle.contains(&class_key(name))
    }

    pub fn knife(&self, name: &str) -> bool {
        self.knives.contains(&class_key(name))
    }
}
