//! Name-keyed strategy registries.
//!
//! Interchangeable algorithm families (image backbones, EMD solvers,
//! nearest-neighbor indices, metrics) are each exposed as a trait object and
//! looked up by name at runtime, which is how the CLI and config files pick
//! a variant.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Maps a strategy name to a factory of type `F`.
///
/// `F` is usually a plain `fn` pointer returning `Result<Box<dyn Trait>>`.
#[derive(Clone)]
pub struct Registry<F: Copy> {
    kind: &'static str,
    entries: BTreeMap<String, F>,
}

impl<F: Copy> Registry<F> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Registers `factory` under `name`, replacing any previous entry.
    pub fn register(&mut self, name: impl Into<String>, factory: F) -> &mut Self {
        self.entries.insert(name.into(), factory);
        self
    }

    pub fn get(&self, name: &str) -> Result<F> {
        self.entries
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn kind(&self) -> &'static str {
        self.kind
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one() -> u32 {
        1
    }
    fn two() -> u32 {
        2
    }

    #[test]
    fn lookup_and_unknown_name() {
        let mut reg: Registry<fn() -> u32> = Registry::new("widget");
        reg.register("one", one).register("two", two);
        assert_eq!(reg.get("two").unwrap()(), 2);
        assert_eq!(reg.names(), vec!["one", "two"]);
        match reg.get("three") {
            Err(Error::UnknownStrategy { kind, available, .. }) => {
                assert_eq!(kind, "widget");
                assert_eq!(available, "one, two");
            }
            _ => panic!("expected unknown strategy"),
        }
    }
}
