use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// One input channel. The derived order (Text < Video < Audio) is the
/// canonical serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Modality {
    Text,
    Video,
    Audio,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Text, Modality::Video, Modality::Audio];

    pub fn symbol(self) -> &'static str {
        match self {
            Modality::Text => "T",
            Modality::Video => "V",
            Modality::Audio => "A",
        }
    }

    fn bit(self) -> u8 {
        match self {
            Modality::Text => 1,
            Modality::Video => 2,
            Modality::Audio => 4,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// A non-empty subset of {Text, Video, Audio}.
///
/// There are exactly seven values. [`ModalityCombo::ALL`] lists them in
/// canonical order `T, V, A, T+V, T+A, V+A, T+V+A`, which is also the order
/// used to break ties between combinations of equal cardinality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModalityCombo(u8);

impl ModalityCombo {
    pub const T: Self = Self(1);
    pub const V: Self = Self(2);
    pub const A: Self = Self(4);
    pub const TV: Self = Self(1 | 2);
    pub const TA: Self = Self(1 | 4);
    pub const VA: Self = Self(2 | 4);
    pub const TVA: Self = Self(1 | 2 | 4);

    pub const ALL: [Self; 7] = [
        Self::T,
        Self::V,
        Self::A,
        Self::TV,
        Self::TA,
        Self::VA,
        Self::TVA,
    ];

    /// Builds a combo from its members; `None` when the set is empty.
    pub fn from_modalities(members: impl IntoIterator<Item = Modality>) -> Option<Self> {
        let bits = members.into_iter().fold(0u8, |acc, m| acc | m.bit());
        (bits != 0).then_some(Self(bits))
    }

    pub fn contains(self, m: Modality) -> bool {
        self.0 & m.bit() != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Always false; present for clippy's `len_without_is_empty`.
    pub fn is_empty(self) -> bool {
        false
    }

    pub fn members(self) -> impl Iterator<Item = Modality> {
        Modality::ALL.into_iter().filter(move |&m| self.contains(m))
    }

    pub fn is_subset_of(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    /// Position in canonical order, 0..7.
    pub fn canonical_index(self) -> usize {
        Self::ALL
            .iter()
            .position(|&c| c == self)
            .expect("combo bits are always in 1..=7")
    }
}

impl fmt::Display for ModalityCombo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for m in self.members() {
            if !first {
                f.write_str("+")?;
            }
            f.write_str(m.symbol())?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for ModalityCombo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let mut members = Vec::new();
        for part in s.split('+') {
            let m = match part.trim() {
                "T" | "t" | "text" | "Text" => Modality::Text,
                "V" | "v" | "video" | "Video" => Modality::Video,
                "A" | "a" | "audio" | "Audio" => Modality::Audio,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown modality {other:?} in combo {s:?}"
                    )))
                }
            };
            if members.contains(&m) {
                return Err(Error::InvalidConfig(format!(
                    "repeated modality in combo {s:?}"
                )));
            }
            members.push(m);
        }
        Self::from_modalities(members)
            .ok_or_else(|| Error::InvalidConfig(format!("empty combo {s:?}")))
    }
}

impl Serialize for ModalityCombo {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModalityCombo {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_distinct_combos_in_table_order() {
        let names: Vec<String> = ModalityCombo::ALL.iter().map(|c| c.to_string()).collect();
        assert_eq!(names, ["T", "V", "A", "T+V", "T+A", "V+A", "T+V+A"]);
        for (i, c) in ModalityCombo::ALL.iter().enumerate() {
            assert_eq!(c.canonical_index(), i);
        }
    }

    #[test]
    fn parse_roundtrip_and_order_insensitive() {
        for c in ModalityCombo::ALL {
            assert_eq!(c.to_string().parse::<ModalityCombo>().unwrap(), c);
        }
        assert_eq!("A+T".parse::<ModalityCombo>().unwrap(), ModalityCombo::TA);
        assert!("".parse::<ModalityCombo>().is_err());
        assert!("T+T".parse::<ModalityCombo>().is_err());
        assert!("X".parse::<ModalityCombo>().is_err());
    }

    #[test]
    fn empty_set_is_not_a_combo() {
        assert_eq!(ModalityCombo::from_modalities([]), None);
    }
}
