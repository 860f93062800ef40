//! Attribute catalog: the categorical features a sensor can perceive about a
//! user, plus the user's movement speed.
//!
//! Categorical values are stored as small indices into per-attribute value
//! lists (the "palette"), so equality checks and entropy calculations never
//! touch strings on the hot path.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// The categorical attribute kinds, in fixed catalog order.
///
/// Catalog order doubles as the tie-break order for entropy ranking and as
/// the static selection fallback when a sensor has too little history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    TopColor,
    Activity,
    AgeGroup,
    Gender,
    BottomColor,
    Accessories,
}

impl Attribute {
    pub const ALL: [Attribute; 6] = [
        Attribute::TopColor,
        Attribute::Activity,
        Attribute::AgeGroup,
        Attribute::Gender,
        Attribute::BottomColor,
        Attribute::Accessories,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::TopColor => "top_color",
            Attribute::Activity => "activity",
            Attribute::AgeGroup => "age_group",
            Attribute::Gender => "gender",
            Attribute::BottomColor => "bottom_color",
            Attribute::Accessories => "accessories",
        }
    }

    pub fn parse(name: &str) -> Option<Attribute> {
        Attribute::ALL.iter().copied().find(|a| a.name() == name)
    }

    fn index(self) -> usize {
        Attribute::ALL.iter().position(|a| *a == self).unwrap()
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Index of a categorical value within its attribute's palette.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CatValue(pub u8);

pub const ACTIVITY_WALK: CatValue = CatValue(0);
pub const ACTIVITY_JOG: CatValue = CatValue(1);
pub const ACTIVITY_BIKE: CatValue = CatValue(2);

/// Ground-truth attribute vector of one user: all six categorical values plus
/// speed in meters per second.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeVector {
    values: [CatValue; 6],
    pub speed: f64,
}

impl AttributeVector {
    pub fn new(values: [CatValue; 6], speed: f64) -> Self {
        Self { values, speed }
    }

    pub fn get(&self, attr: Attribute) -> CatValue {
        self.values[attr.index()]
    }

    pub fn set(&mut self, attr: Attribute, value: CatValue) {
        self.values[attr.index()] = value;
    }

    pub fn activity(&self) -> CatValue {
        self.get(Attribute::Activity)
    }
}

/// What one sensor actually perceived: categorical values restricted to the
/// sensor's capabilities, plus the (possibly noisy) speed reading.
///
/// Speed is a universal sensing channel; every sensor measures it because the
/// arrival-time estimate depends on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Perception {
    values: [Option<CatValue>; 6],
    pub speed: f64,
}

impl Perception {
    pub fn new(speed: f64) -> Self {
        Self { values: [None; 6], speed }
    }

    pub fn get(&self, attr: Attribute) -> Option<CatValue> {
        self.values[attr.index()]
    }

    pub fn set(&mut self, attr: Attribute, value: CatValue) {
        self.values[attr.index()] = Some(value);
    }

    pub fn present(&self) -> impl Iterator<Item = (Attribute, CatValue)> + '_ {
        Attribute::ALL
            .iter()
            .filter_map(|a| self.get(*a).map(|v| (*a, v)))
    }
}

/// Value names and sampling weights for every categorical attribute.
#[derive(Debug, Clone)]
pub struct AttributeCatalog {
    domains: [Domain; 6],
}

#[derive(Debug, Clone)]
pub struct Domain {
    pub values: Vec<String>,
    /// Normalized sampling weights, same length as `values`.
    pub weights: Vec<f64>,
}

impl Domain {
    fn uniform(values: &[&str]) -> Self {
        let n = values.len();
        Domain {
            values: values.iter().map(|v| v.to_string()).collect(),
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub const DEFAULT_TOP_COLORS: [&str; 8] =
    ["black", "navy", "white", "gray", "red", "blue", "green", "yellow"];
pub const DEFAULT_BOTTOM_COLORS: [&str; 8] =
    ["black", "blue", "gray", "khaki", "white", "red", "green", "brown"];
pub const ACTIVITY_VALUES: [&str; 3] = ["walk", "jog", "bike"];
pub const AGE_GROUP_VALUES: [&str; 3] = ["child", "adult", "senior"];
pub const GENDER_VALUES: [&str; 2] = ["female", "male"];
pub const DEFAULT_ACCESSORIES: [&str; 4] = ["none", "backpack", "hat", "headphones"];

impl Default for AttributeCatalog {
    fn default() -> Self {
        let mut domains = [
            Domain::uniform(&DEFAULT_TOP_COLORS),
            Domain::uniform(&ACTIVITY_VALUES),
            Domain::uniform(&AGE_GROUP_VALUES),
            Domain::uniform(&GENDER_VALUES),
            Domain::uniform(&DEFAULT_BOTTOM_COLORS),
            Domain::uniform(&DEFAULT_ACCESSORIES),
        ];
        // keep array order in sync with Attribute::ALL
        debug_assert_eq!(domains[Attribute::Activity.index()].values[0], "walk");
        domains[Attribute::Activity.index()].weights = vec![0.0; 3];
        AttributeCatalog { domains }
    }
}

impl AttributeCatalog {
    pub fn domain(&self, attr: Attribute) -> &Domain {
        &self.domains[attr.index()]
    }

    pub fn domain_mut(&mut self, attr: Attribute) -> &mut Domain {
        &mut self.domains[attr.index()]
    }

    pub fn value_name(&self, attr: Attribute, value: CatValue) -> &str {
        &self.domain(attr).values[value.0 as usize]
    }

    pub fn value_index(&self, attr: Attribute, name: &str) -> Option<CatValue> {
        self.domain(attr)
            .values
            .iter()
            .position(|v| v == name)
            .map(|i| CatValue(i as u8))
    }

    /// Number of distinct value combinations over `attrs`.
    pub fn combinations(&self, attrs: &[Attribute]) -> usize {
        attrs.iter().map(|a| self.domain(*a).len()).product()
    }
}

/// Empirical Shannon entropy, in bits, of a multiset of categorical values.
///
/// `0 * log2(0)` contributes zero, so a single-valued multiset has entropy 0
/// and a uniform multiset over k values has entropy log2(k).
pub fn entropy_of<T: Ord>(values: &[T]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0) += 1;
    }
    let n = values.len() as f64;
    let mut bits = 0.0;
    for &c in counts.values() {
        let p = c as f64 / n;
        if p > 0.0 {
            bits -= p * p.log2();
        }
    }
    Some(bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_order_matches_attribute_all() {
        let names: Vec<&str> = Attribute::ALL.iter().map(|a| a.name()).collect();
        assert_eq!(
            names,
            ["top_color", "activity", "age_group", "gender", "bottom_color", "accessories"]
        );
    }

    #[test]
    fn attribute_round_trips_through_name() {
        for attr in Attribute::ALL {
            assert_eq!(Attribute::parse(attr.name()), Some(attr));
        }
        assert_eq!(Attribute::parse("speed"), None);
    }

    #[test]
    fn default_catalog_has_documented_domain_sizes() {
        let cat = AttributeCatalog::default();
        assert_eq!(cat.domain(Attribute::TopColor).len(), 8);
        assert_eq!(cat.domain(Attribute::BottomColor).len(), 8);
        assert_eq!(cat.domain(Attribute::Activity).len(), 3);
        assert_eq!(cat.domain(Attribute::AgeGroup).len(), 3);
        assert_eq!(cat.domain(Attribute::Gender).len(), 2);
        assert_eq!(cat.domain(Attribute::Accessories).len(), 4);
    }

    #[test]
    fn perception_only_reports_set_attributes() {
        let mut p = Perception::new(1.2);
        p.set(Attribute::TopColor, CatValue(3));
        assert_eq!(p.get(Attribute::TopColor), Some(CatValue(3)));
        assert_eq!(p.get(Attribute::Gender), None);
        assert_eq!(p.present().count(), 1);
    }
}
