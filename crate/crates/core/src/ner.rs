//! The nine-label BIO inventory over PER, ORG, LOC and MISC.

use alloc::format;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityType {
    Per,
    Org,
    Loc,
    Misc,
}

impl EntityType {
    pub const ALL: [EntityType; 4] = [EntityType::Per, EntityType::Org, EntityType::Loc, EntityType::Misc];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Per => "PER",
            EntityType::Org => "ORG",
            EntityType::Loc => "LOC",
            EntityType::Misc => "MISC",
        }
    }

    fn index(self) -> u32 {
        match self {
            EntityType::Per => 0,
            EntityType::Org => 1,
            EntityType::Loc => 2,
            EntityType::Misc => 3,
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PER" => Ok(EntityType::Per),
            "ORG" => Ok(EntityType::Org),
            "LOC" => Ok(EntityType::Loc),
            "MISC" => Ok(EntityType::Misc),
            _ => Err(Error::Input(format!("unknown entity type `{s}`"))),
        }
    }
}

/// One BIO label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    O,
    B(EntityType),
    I(EntityType),
}

/// Number of labels in the inventory.
pub const NUM_TAGS: usize = 9;

impl Tag {
    /// All labels in id order: `O, B-PER, I-PER, B-ORG, …, I-MISC`.
    pub fn all() -> [Tag; NUM_TAGS] {
        let mut out = [Tag::O; NUM_TAGS];
        for (i, e) in EntityType::ALL.iter().enumerate() {
            out[1 + 2 * i] = Tag::B(*e);
            out[2 + 2 * i] = Tag::I(*e);
        }
        out
    }

    pub fn id(self) -> u32 {
        match self {
            Tag::O => 0,
            Tag::B(e) => 1 + 2 * e.index(),
            Tag::I(e) => 2 + 2 * e.index(),
        }
    }

    pub fn from_id(id: u32) -> Result<Self> {
        Tag::all()
            .get(id as usize)
            .copied()
            .ok_or_else(|| Error::Input(format!("tag id {id} outside inventory")))
    }

    pub fn entity(self) -> Option<EntityType> {
        match self {
            Tag::O => None,
            Tag::B(e) | Tag::I(e) => Some(e),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => f.write_str("O"),
            Tag::B(e) => write!(f, "B-{e}"),
            Tag::I(e) => write!(f, "I-{e}"),
        }
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(Tag::O);
        }
        match s.split_once('-') {
            Some(("B", e)) => Ok(Tag::B(e.parse()?)),
            Some(("I", e)) => Ok(Tag::I(e.parse()?)),
            _ => Err(Error::Input(format!("unknown label `{s}`"))),
        }
    }
}

/// Promotes every `I-X` that does not continue an `X` span to `B-X`.
/// Returns the number of labels changed.
pub fn repair_bio(tags: &mut [Tag]) -> usize {
    let mut repairs = 0;
    let mut prev = Tag::O;
    for t in tags.iter_mut() {
        if let Tag::I(e) = *t {
            if prev.entity() != Some(e) {
                *t = Tag::B(e);
                repairs += 1;
            }
        }
        prev = *t;
    }
    repairs
}

/// Whether `tags` is valid BIO as written.
pub fn is_valid_bio(tags: &[Tag]) -> bool {
    let mut prev = Tag::O;
    for &t in tags {
        if let Tag::I(e) = t {
            if prev.entity() != Some(e) {
                return false;
            }
        }
        prev = t;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn ids_and_names_round_trip() {
        for (i, t) in Tag::all().iter().enumerate() {
            assert_eq!(t.id() as usize, i);
            assert_eq!(Tag::from_id(i as u32).unwrap(), *t);
            assert_eq!(t.to_string().parse::<Tag>().unwrap(), *t);
        }
        assert_eq!(Tag::all()[1].to_string(), "B-PER");
        assert!("B-FOO".parse::<Tag>().is_err());
        assert!("X".parse::<Tag>().is_err());
        assert!(Tag::from_id(9).is_err());
    }

    #[test]
    fn repair_rule() {
        let mut t = vec![Tag::O, Tag::I(EntityType::Per)];
        assert_eq!(repair_bio(&mut t), 1);
        assert_eq!(t, vec![Tag::O, Tag::B(EntityType::Per)]);
        let mut t = vec![Tag::B(EntityType::Org), Tag::I(EntityType::Loc), Tag::I(EntityType::Loc)];
        assert_eq!(repair_bio(&mut t), 1);
        assert!(is_valid_bio(&t));
    }
}
