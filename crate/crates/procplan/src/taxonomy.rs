//! Action taxonomy: the finite action set with stable integer ids.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Ordered action set. Ids are dense: exactly `0..len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionTaxonomy {
    names: Vec<String>,
}

impl ActionTaxonomy {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidArgument("taxonomy must be non-empty".into()));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::Validation("empty action name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::Validation(format!("duplicate action name: {name}")));
            }
        }
        Ok(Self { names })
    }

    /// Taxonomy with generated names `a0..a{n-1}`.
    pub fn with_size(n: usize) -> Self {
        Self {
            names: (0..n).map(|i| format!("a{i}")).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}
