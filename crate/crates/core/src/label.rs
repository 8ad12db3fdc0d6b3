//! Gold labels and sentence categories.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseLabelError {
    #[error("unknown label {0:?} (expected LA, LUA, 1 or 0)")]
    Label(String),
    #[error("unknown category {0:?} (expected CIA, RAA, SVA, SVO or WHE)")]
    Category(String),
}

/// Linguistically acceptable / unacceptable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    LA,
    LUA,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::LA, Label::LUA];

    /// Classifier output index: 0 = unacceptable, 1 = acceptable.
    pub fn class_index(self) -> usize {
        match self {
            Label::LUA => 0,
            Label::LA => 1,
        }
    }

    pub fn from_class_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::LUA),
            1 => Some(Label::LA),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::LA => "LA",
            Label::LUA => "LUA",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "LA" | "1" => Ok(Label::LA),
            "LUA" | "0" => Ok(Label::LUA),
            other => Err(ParseLabelError::Label(other.to_string())),
        }
    }
}

/// The five sentence categories analysed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    /// Causative-inchoative alternation.
    CIA,
    /// Reflexive-antecedent agreement.
    RAA,
    /// Subject-verb agreement.
    SVA,
    /// Subject-verb-object order.
    SVO,
    /// Wh-extraction.
    WHE,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::CIA,
        Category::RAA,
        Category::SVA,
        Category::SVO,
        Category::WHE,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::CIA => "CIA",
            Category::RAA => "RAA",
            Category::SVA => "SVA",
            Category::SVO => "SVO",
            Category::WHE => "WHE",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| ParseLabelError::Category(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_parse_both_spellings() {
        assert_eq!("LA".parse::<Label>(), Ok(Label::LA));
        assert_eq!("1".parse::<Label>(), Ok(Label::LA));
        assert_eq!("0".parse::<Label>(), Ok(Label::LUA));
        assert!("2".parse::<Label>().is_err());
        for l in Label::ALL {
            assert_eq!(Label::from_class_index(l.class_index()), Some(l));
        }
    }

    #[test]
    fn categories_round_trip() {
        for c in Category::ALL {
            assert_eq!(c.as_str().parse::<Category>(), Ok(c));
        }
        assert!("XYZ".parse::<Category>().is_err());
    }
}
