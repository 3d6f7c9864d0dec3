use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A normalized category or page title.
///
/// Normalization lowercases, turns underscores into spaces, trims, and
/// collapses runs of whitespace to a single space. Two raw titles denote the
/// same category exactly when their normalized forms are equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Title(String);

impl Title {
    pub fn normalize(raw: &str) -> Result<Self> {
        let mut out = String::with_capacity(raw.len());
        let mut pending_space = false;
        for ch in raw.chars() {
            if ch == '_' || ch.is_whitespace() {
                pending_space = !out.is_empty();
                continue;
            }
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.extend(ch.to_lowercase());
        }
        if out.is_empty() {
            return Err(Error::EmptyTitle(raw.into()));
        }
        Ok(Title(out))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    /// Whitespace-delimited token count; "moment (mathematics)" has two.
    pub fn token_count(&self) -> usize {
        self.0.split(' ').count()
    }
}

impl fmt::Display for Title {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Title {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Title {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Title::normalize(&value)
    }
}

impl TryFrom<&str> for Title {
    type Error = Error;

    fn try_from(value: &str) -> Result<Self> {
        Title::normalize(value)
    }
}

impl From<Title> for String {
    fn from(t: Title) -> String {
        t.0
    }
}
