//! Component taxonomy of the task board: three categories in three sizes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Gear,
    CircularPin,
    RectangularPin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Size {
    Small,
    Medium,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentLabel {
    pub size: Size,
    pub category: Category,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown component label {0:?}")]
pub struct LabelError(pub String);

impl Category {
    pub const ALL: [Category; 3] = [
        Category::Gear,
        Category::CircularPin,
        Category::RectangularPin,
    ];

    /// Grammar token (`circular_pin`).
    pub fn token(self) -> &'static str {
        match self {
            Category::Gear => "gear",
            Category::CircularPin => "circular_pin",
            Category::RectangularPin => "rectangular_pin",
        }
    }
}

impl Size {
    pub const ALL: [Size; 3] = [Size::Small, Size::Medium, Size::Big];

    pub fn token(self) -> &'static str {
        match self {
            Size::Small => "small",
            Size::Medium => "medium",
            Size::Big => "big",
        }
    }
}

impl ComponentLabel {
    pub const fn new(size: Size, category: Category) -> Self {
        Self { size, category }
    }

    pub fn all() -> impl Iterator<Item = ComponentLabel> {
        Category::ALL.into_iter().flat_map(|c| {
            Size::ALL
                .into_iter()
                .map(move |s| ComponentLabel::new(s, c))
        })
    }

    /// Human form used in instructions: `small rectangular pin`.
    pub fn phrase(&self) -> String {
        format!(
            "{} {}",
            self.size.token(),
            self.category.token().replace('_', " ")
        )
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl fmt::Display for Size {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Canonical grammar form: `small circular_pin`.
impl fmt::Display for ComponentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.size, self.category)
    }
}

impl FromStr for Size {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "small" => Ok(Size::Small),
            "medium" => Ok(Size::Medium),
            "big" | "large" => Ok(Size::Big),
            _ => Err(LabelError(s.to_string())),
        }
    }
}

impl FromStr for Category {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join("_");
        match norm.as_str() {
            "gear" => Ok(Category::Gear),
            "circular_pin" | "round_pin" => Ok(Category::CircularPin),
            "rectangular_pin" | "square_pin" => Ok(Category::RectangularPin),
            _ => Err(LabelError(s.to_string())),
        }
    }
}

/// Accepts both `small circular_pin` and `small circular pin`, any case.
impl FromStr for ComponentLabel {
    type Err = LabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let (size, rest) = trimmed
            .split_once(char::is_whitespace)
            .ok_or_else(|| LabelError(s.to_string()))?;
        let size = size.parse().map_err(|_| LabelError(s.to_string()))?;
        let category = rest.parse().map_err(|_| LabelError(s.to_string()))?;
        Ok(ComponentLabel { size, category })
    }
}

impl Serialize for ComponentLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ComponentLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_spellings() {
        let a: ComponentLabel = "small rectangular pin".parse().unwrap();
        let b: ComponentLabel = "Small RECTANGULAR_PIN".parse().unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a,
            ComponentLabel::new(Size::Small, Category::RectangularPin)
        );
        assert_eq!(a.to_string(), "small rectangular_pin");
        assert_eq!(a.phrase(), "small rectangular pin");
    }

    #[test]
    fn rejects_unknown() {
        assert!("blue widget".parse::<ComponentLabel>().is_err());
        assert!("gear".parse::<ComponentLabel>().is_err());
    }

    #[test]
    fn nine_labels() {
        let all: std::collections::BTreeSet<_> = ComponentLabel::all().collect();
        assert_eq!(all.len(), 9);
        for l in all {
            assert_eq!(l.to_string().parse::<ComponentLabel>().unwrap(), l);
            assert_eq!(l.phrase().parse::<ComponentLabel>().unwrap(), l);
        }
    }

    #[test]
    fn serde_uses_grammar_form() {
        let l = ComponentLabel::new(Size::Big, Category::Gear);
        assert_eq!(serde_json::to_string(&l).unwrap(), "\"big gear\"");
        assert_eq!(
            serde_json::from_str::<ComponentLabel>("\"big gear\"").unwrap(),
            l
        );
    }
}
