//! The seven-dimensional difficulty calculus.
//!
//! A task carries one [`Level`] per [`Dimension`]; an overall level is only
//! admissible when the per-dimension counts satisfy the composition rules
//! checked by [`check_composition`]. The rules overlap (a vector with exactly
//! two L2 dimensions and no L3 satisfies both the L1 and L2 rule) and exclude
//! some vectors from every level, so this module never picks a level on the
//! caller's behalf.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rust_decimal::Decimal;
use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{ForgeError, Result};
use crate::pct::{self, Ratio};

/// The difficulty axes, in their canonical table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    JumpDepth,
    JumpBreadth,
    PageInteraction,
    VisualComplexity,
    InfoComplexity,
    ReasoningCalc,
    RiskFactor,
}

impl Dimension {
    pub const ALL: [Dimension; 7] = [
        Dimension::JumpDepth,
        Dimension::JumpBreadth,
        Dimension::PageInteraction,
        Dimension::VisualComplexity,
        Dimension::InfoComplexity,
        Dimension::ReasoningCalc,
        Dimension::RiskFactor,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn key(self) -> &'static str {
        match self {
            Dimension::JumpDepth => "jump_depth",
            Dimension::JumpBreadth => "jump_breadth",
            Dimension::PageInteraction => "page_interaction",
            Dimension::VisualComplexity => "visual_complexity",
            Dimension::InfoComplexity => "info_complexity",
            Dimension::ReasoningCalc => "reasoning_calc",
            Dimension::RiskFactor => "risk_factor",
        }
    }

    /// Human-readable column label used in rendered reports.
    pub fn label(self) -> &'static str {
        match self {
            Dimension::JumpDepth => "Jump Depth",
            Dimension::JumpBreadth => "Jump Breadth",
            Dimension::PageInteraction => "Page Interaction",
            Dimension::VisualComplexity => "Visual Complexity",
            Dimension::InfoComplexity => "Info Complexity",
            Dimension::ReasoningCalc => "Reasoning/Calc",
            Dimension::RiskFactor => "Risk Factor",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Dimension {
    type Err = ForgeError;

    fn from_str(s: &str) -> Result<Self> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.key() == s)
            .ok_or_else(|| ForgeError::Parse(format!("unknown dimension `{s}`")))
    }
}

/// A level in `{1, 2, 3}`. Used both per dimension and for the overall task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Level {
    L1 = 1,
    L2 = 2,
    L3 = 3,
}

pub type DimLevel = Level;
pub type OverallLevel = Level;

impl Level {
    pub const ALL: [Level; 3] = [Level::L1, Level::L2, Level::L3];

    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn index(self) -> usize {
        self as usize - 1
    }
}

impl TryFrom<u8> for Level {
    type Error = String;

    fn try_from(value: u8) -> std::result::Result<Self, Self::Error> {
        match value {
            1 => Ok(Level::L1),
            2 => Ok(Level::L2),
            3 => Ok(Level::L3),
            other => Err(format!("level must be 1, 2 or 3 (got {other})")),
        }
    }
}

impl From<Level> for u8 {
    fn from(level: Level) -> u8 {
        level.value()
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.value())
    }
}

impl FromStr for Level {
    type Err = ForgeError;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s.trim().trim_start_matches(['L', 'l']);
        let n: u8 = digits
            .parse()
            .map_err(|_| ForgeError::Parse(format!("invalid level `{s}`")))?;
        Level::try_from(n).map_err(ForgeError::Parse)
    }
}

/// A total assignment of levels to the seven dimensions, with optional
/// free-text justification per dimension (carried, never interpreted).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DifficultyVector {
    levels: [Level; 7],
    justifications: [Option<String>; 7],
}

impl DifficultyVector {
    pub fn new(levels: [Level; 7]) -> Self {
        Self {
            levels,
            justifications: Default::default(),
        }
    }

    pub fn uniform(level: Level) -> Self {
        Self::new([level; 7])
    }

    /// Builds a vector from raw integers in canonical dimension order.
    pub fn from_values(values: [u8; 7]) -> Result<Self> {
        let mut levels = [Level::L1; 7];
        for (slot, v) in levels.iter_mut().zip(values) {
            *slot = Level::try_from(v).map_err(ForgeError::Parse)?;
        }
        Ok(Self::new(levels))
    }

    pub fn level(&self, dim: Dimension) -> Level {
        self.levels[dim.index()]
    }

    pub fn set_level(&mut self, dim: Dimension, level: Level) {
        self.levels[dim.index()] = level;
    }

    pub fn justification(&self, dim: Dimension) -> Option<&str> {
        self.justifications[dim.index()].as_deref()
    }

    pub fn with_justification(mut self, dim: Dimension, text: impl Into<String>) -> Self {
        self.justifications[dim.index()] = Some(text.into());
        self
    }

    pub fn levels(&self) -> [Level; 7] {
        self.levels
    }

    pub fn count(&self, level: Level) -> usize {
        self.levels.iter().filter(|l| **l == level).count()
    }

    /// Every vector in `{1,2,3}^7`, in lexicographic order.
    pub fn enumerate_all() -> impl Iterator<Item = DifficultyVector> {
        (0..3usize.pow(7)).map(|mut code| {
            let mut levels = [Level::L1; 7];
            for slot in levels.iter_mut().rev() {
                *slot = Level::ALL[code % 3];
                code /= 3;
            }
            DifficultyVector::new(levels)
        })
    }
}

impl Serialize for DifficultyVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Entry<'a> {
            level: Level,
            #[serde(skip_serializing_if = "Option::is_none")]
            justification: Option<&'a str>,
        }
        let mut map = serializer.serialize_map(Some(7))?;
        for dim in Dimension::ALL {
            map.serialize_entry(
                dim.key(),
                &Entry {
                    level: self.level(dim),
                    justification: self.justification(dim),
                },
            )?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for DifficultyVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Entry {
            Bare(Level),
            Full {
                level: Level,
                #[serde(default)]
                justification: Option<String>,
            },
        }

        struct VectorVisitor;

        impl<'de> Visitor<'de> for VectorVisitor {
            type Value = DifficultyVector;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from the seven dimension names to levels")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut levels: [Option<Level>; 7] = [None; 7];
                let mut justifications: [Option<String>; 7] = Default::default();
                while let Some(key) = map.next_key::<String>()? {
                    let dim = Dimension::from_str(&key).map_err(de::Error::custom)?;
                    if levels[dim.index()].is_some() {
                        return Err(de::Error::custom(format!("dimension `{key}` given twice")));
                    }
                    match map.next_value::<Entry>()? {
                        Entry::Bare(level) => levels[dim.index()] = Some(level),
                        Entry::Full { level, justification } => {
                            levels[dim.index()] = Some(level);
                            justifications[dim.index()] = justification;
                        }
                    }
                }
                let mut out = [Level::L1; 7];
                for dim in Dimension::ALL {
                    out[dim.index()] = levels[dim.index()]
                        .ok_or_else(|| de::Error::custom(format!("dimension `{dim}` missing")))?;
                }
                Ok(DifficultyVector {
                    levels: out,
                    justifications,
                })
            }
        }

        deserializer.deserialize_map(VectorVisitor)
    }
}

/// The composition constraint between an overall level and a vector.
///
/// * L1: at most two dimensions at L2 and none at L3.
/// * L2: at least two dimensions at L2 and at most one at L3.
/// * L3: at least two dimensions at L3 and at least two at L2.
pub fn check_composition(level: OverallLevel, vector: &DifficultyVector) -> bool {
    let l2 = vector.count(Level::L2);
    let l3 = vector.count(Level::L3);
    match level {
        Level::L1 => l2 <= 2 && l3 == 0,
        Level::L2 => l2 >= 2 && l3 <= 1,
        Level::L3 => l3 >= 2 && l2 >= 2,
    }
}

/// All overall levels whose rule the vector satisfies (zero, one or two).
pub fn admissible_levels(vector: &DifficultyVector) -> Vec<OverallLevel> {
    Level::ALL
        .into_iter()
        .filter(|l| check_composition(*l, vector))
        .collect()
}

/// Count / percentage of tasks at each level of each dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DistributionTable {
    pub total: u64,
    counts: [[u64; 3]; 7],
}

impl DistributionTable {
    pub fn count(&self, dim: Dimension, level: Level) -> u64 {
        self.counts[dim.index()][level.index()]
    }

    pub fn cell(&self, dim: Dimension, level: Level) -> Ratio {
        Ratio::new(self.count(dim, level), self.total)
    }

    /// `"288 (30.8%)"`-style cell text.
    pub fn render_cell(&self, dim: Dimension, level: Level) -> String {
        let cell = self.cell(dim, level);
        format!("{} ({}%)", cell.hits, cell.render().unwrap_or_default())
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Dimension | L1 | L2 | L3 |\n|---|---|---|---|\n");
        for dim in Dimension::ALL {
            out.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                dim.label(),
                self.render_cell(dim, Level::L1),
                self.render_cell(dim, Level::L2),
                self.render_cell(dim, Level::L3)
            ));
        }
        out
    }
}

pub fn dimension_distribution(vectors: &[DifficultyVector]) -> Result<DistributionTable> {
    if vectors.is_empty() {
        return Err(ForgeError::Empty("dimension distribution needs at least one vector"));
    }
    let mut counts = [[0u64; 3]; 7];
    for v in vectors {
        for dim in Dimension::ALL {
            counts[dim.index()][v.level(dim).index()] += 1;
        }
    }
    Ok(DistributionTable {
        total: vectors.len() as u64,
        counts,
    })
}

/// Accuracy (in percent) per dimension level.
pub type DimensionAccuracy = BTreeMap<(Dimension, Level), Decimal>;

/// `acc(L1) - acc(L3)` per dimension, in percentage points, exact.
pub fn accuracy_drop(table: &DimensionAccuracy) -> Result<BTreeMap<Dimension, Decimal>> {
    Dimension::ALL
        .into_iter()
        .map(|dim| {
            let l1 = table.get(&(dim, Level::L1));
            let l3 = table.get(&(dim, Level::L3));
            match (l1, l3) {
                (Some(a), Some(b)) => Ok((dim, *a - *b)),
                _ => Err(ForgeError::MissingCell(dim.key().to_string())),
            }
        })
        .collect()
}

/// One-decimal rendering of a drop table.
pub fn render_drop(drop: &BTreeMap<Dimension, Decimal>) -> BTreeMap<Dimension, String> {
    drop.iter().map(|(d, v)| (*d, pct::render_pct(*v))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_of(values: [u8; 7]) -> DifficultyVector {
        DifficultyVector::from_values(values).unwrap()
    }

    #[test]
    fn walkthrough_refined_vector_is_level_three() {
        // 3 dims at L3 + 4 at L2
        let v = vec_of([3, 2, 2, 3, 2, 3, 2]);
        assert!(check_composition(Level::L3, &v));
        assert_eq!(admissible_levels(&v), vec![Level::L3]);
    }

    #[test]
    fn level_one_rules() {
        assert!(check_composition(Level::L1, &DifficultyVector::uniform(Level::L1)));
        assert!(!check_composition(Level::L1, &vec_of([1, 1, 1, 1, 1, 1, 3])));
        assert!(!check_composition(Level::L3, &vec_of([3, 2, 2, 2, 2, 2, 2])));
    }

    #[test]
    fn admissible_edge_cases() {
        assert_eq!(admissible_levels(&DifficultyVector::uniform(Level::L1)), vec![Level::L1]);
        assert_eq!(
            admissible_levels(&vec_of([2, 2, 1, 1, 1, 1, 1])),
            vec![Level::L1, Level::L2]
        );
        assert!(admissible_levels(&DifficultyVector::uniform(Level::L3)).is_empty());
    }

    #[test]
    fn enumerates_every_vector_once() {
        let all: Vec<_> = DifficultyVector::enumerate_all().collect();
        assert_eq!(all.len(), 2187);
        let unique: std::collections::HashSet<_> = all.iter().map(|v| v.levels()).collect();
        assert_eq!(unique.len(), 2187);
    }

    #[test]
    fn distribution_small_cases() {
        let t = dimension_distribution(&[DifficultyVector::uniform(Level::L1)]).unwrap();
        for dim in Dimension::ALL {
            assert_eq!(t.render_cell(dim, Level::L1), "1 (100.0%)");
        }
        let t = dimension_distribution(&[
            DifficultyVector::uniform(Level::L1),
            DifficultyVector::uniform(Level::L3),
        ])
        .unwrap();
        for dim in Dimension::ALL {
            assert_eq!(t.render_cell(dim, Level::L1), "1 (50.0%)");
            assert_eq!(t.render_cell(dim, Level::L2), "0 (0.0%)");
            assert_eq!(t.render_cell(dim, Level::L3), "1 (50.0%)");
        }
        assert!(dimension_distribution(&[]).is_err());
    }

    #[test]
    fn drop_needs_both_ends() {
        let mut t = DimensionAccuracy::new();
        for dim in Dimension::ALL {
            t.insert((dim, Level::L1), Decimal::new(500, 1));
            t.insert((dim, Level::L3), Decimal::new(500, 1));
        }
        let drop = accuracy_drop(&t).unwrap();
        assert!(drop.values().all(|d| d.is_zero()));

        t.remove(&(Dimension::RiskFactor, Level::L3));
        let err = accuracy_drop(&t).unwrap_err();
        assert!(err.to_string().contains("risk_factor"));
    }

    #[test]
    fn serde_round_trip_keeps_justifications() {
        let v = vec_of([3, 2, 2, 3, 2, 3, 2]).with_justification(Dimension::JumpDepth, "8 transitions");
        let json = serde_json::to_string(&v).unwrap();
        assert!(json.starts_with("{\"jump_depth\":{\"level\":3,\"justification\":\"8 transitions\"}"));
        let back: DifficultyVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        let bare: DifficultyVector = serde_json::from_str(
            r#"{"jump_depth":1,"jump_breadth":1,"page_interaction":1,"visual_complexity":1,"info_complexity":1,"reasoning_calc":1,"risk_factor":1}"#,
        )
        .unwrap();
        assert_eq!(bare, DifficultyVector::uniform(Level::L1));
        assert!(serde_json::from_str::<DifficultyVector>(r#"{"jump_depth":1}"#).is_err());
        assert!(serde_json::from_str::<Level>("4").is_err());
    }
}
