//! Binary subject and object walls.
//!
//! Every wall is a pair of fixed-width bit vectors with one bit per role
//! class. Bit 1 is the leftmost character when rendered, so the class with
//! index 1 prints as `100` in a three-class policy.
//!
//! The only mutation a wall ever sees is an OR with another vector of the
//! same width: bits go from 0 to 1 and never back.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::policy::{ObjectId, Policy, UserId};

const WORD: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WallError {
    #[error("wall widths differ: {left} vs {right}")]
    WidthMismatch { left: usize, right: usize },
    #[error("update would set class bit(s) {bits} on both sides of the wall")]
    DisjointnessBroken { bits: String },
    #[error("unknown object `{0}`")]
    UnknownObject(ObjectId),
    #[error("unknown user `{0}`")]
    UnknownUser(UserId),
    #[error("object `{object}` is owned by a class that has no bit slot")]
    UnslottedClass { object: ObjectId },
    #[error("bad bit string `{0}`")]
    Parse(String),
}

/// Fixed-width vector of class bits.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVector {
    width: usize,
    words: Vec<u64>,
}

impl BitVector {
    pub fn zeros(width: usize) -> Self {
        Self {
            width,
            words: vec![0; width.div_ceil(WORD)],
        }
    }

    pub fn ones(width: usize) -> Self {
        let mut v = Self::zeros(width);
        for i in 0..width {
            v.set(i);
        }
        v
    }

    /// Vector with only the zero-based `slot` set.
    pub fn one_hot(width: usize, slot: usize) -> Self {
        let mut v = Self::zeros(width);
        v.set(slot);
        v
    }

    pub fn from_slots(width: usize, slots: impl IntoIterator<Item = usize>) -> Self {
        let mut v = Self::zeros(width);
        for s in slots {
            v.set(s);
        }
        v
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, slot: usize) -> bool {
        assert!(slot < self.width, "slot {slot} out of range for width {}", self.width);
        self.words[slot / WORD] >> (slot % WORD) & 1 == 1
    }

    /// Flips a bit to 1. Clearing is not offered.
    pub fn set(&mut self, slot: usize) {
        assert!(slot < self.width, "slot {slot} out of range for width {}", self.width);
        self.words[slot / WORD] |= 1 << (slot % WORD);
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Zero-based slots that are set, ascending.
    pub fn slots(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.width).filter(|&i| self.get(i))
    }

    fn check_width(&self, other: &Self) -> Result<(), WallError> {
        if self.width == other.width {
            Ok(())
        } else {
            Err(WallError::WidthMismatch {
                left: self.width,
                right: other.width,
            })
        }
    }

    pub fn and(&self, other: &Self) -> Result<Self, WallError> {
        self.check_width(other)?;
        Ok(Self {
            width: self.width,
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
        })
    }

    pub fn or(&self, other: &Self) -> Result<Self, WallError> {
        self.check_width(other)?;
        Ok(Self {
            width: self.width,
            words: self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect(),
        })
    }

    /// True when no slot is set in both vectors.
    pub fn disjoint(&self, other: &Self) -> Result<bool, WallError> {
        self.check_width(other)?;
        Ok(self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0))
    }

    /// True when every bit set in `self` is set in `other`.
    pub fn is_subset(&self, other: &Self) -> bool {
        self.width == other.width && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.width {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({self})")
    }
}

impl FromStr for BitVector {
    type Err = WallError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut v = Self::zeros(s.len());
        for (i, c) in s.chars().enumerate() {
            match c {
                '1' => v.set(i),
                '0' => {}
                _ => return Err(WallError::Parse(s.to_string())),
            }
        }
        Ok(v)
    }
}

/// Renders a pair as `{100, 011}`.
pub fn render_pair(left: &BitVector, right: &BitVector) -> String {
    format!("{{{left}, {right}}}")
}

/// Parses `{100, 011}` back into its two vectors.
pub fn parse_pair(s: &str) -> Result<(BitVector, BitVector), WallError> {
    let bad = || WallError::Parse(s.to_string());
    let inner = s
        .trim()
        .strip_prefix('{')
        .and_then(|r| r.strip_suffix('}'))
        .ok_or_else(bad)?;
    let (l, r) = inner.split_once(", ").ok_or_else(bad)?;
    let (l, r): (BitVector, BitVector) = (l.parse()?, r.parse()?);
    if l.width() != r.width() {
        return Err(bad());
    }
    Ok((l, r))
}

fn disjoint_or_error(a: &BitVector, b: &BitVector) -> Result<(), WallError> {
    let overlap = a.and(b)?;
    if overlap.is_zero() {
        Ok(())
    } else {
        Err(WallError::DisjointnessBroken {
            bits: overlap.to_string(),
        })
    }
}

/// `{authorized, conflicting}` classes of an object.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryObjectWall {
    pub authorized: BitVector,
    pub conflicting: BitVector,
}

/// `{granted, denied}` classes of a subject.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinarySubjectWall {
    pub granted: BitVector,
    pub denied: BitVector,
}

impl BinaryObjectWall {
    pub fn new(authorized: BitVector, conflicting: BitVector) -> Result<Self, WallError> {
        authorized.check_width(&conflicting)?;
        Ok(Self {
            authorized,
            conflicting,
        })
    }

    pub fn width(&self) -> usize {
        self.authorized.width()
    }

    pub fn is_consistent(&self) -> bool {
        self.authorized.disjoint(&self.conflicting).unwrap_or(false)
    }

    /// True when `self` only differs from `earlier` by bits flipped to 1.
    pub fn dominates(&self, earlier: &Self) -> bool {
        earlier.authorized.is_subset(&self.authorized) && earlier.conflicting.is_subset(&self.conflicting)
    }
}

impl BinarySubjectWall {
    pub fn new(granted: BitVector, denied: BitVector) -> Result<Self, WallError> {
        granted.check_width(&denied)?;
        Ok(Self { granted, denied })
    }

    pub fn width(&self) -> usize {
        self.granted.width()
    }

    pub fn is_consistent(&self) -> bool {
        self.granted.disjoint(&self.denied).unwrap_or(false)
    }

    pub fn dominates(&self, earlier: &Self) -> bool {
        earlier.granted.is_subset(&self.granted) && earlier.denied.is_subset(&self.denied)
    }
}

impl fmt::Display for BinaryObjectWall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_pair(&self.authorized, &self.conflicting))
    }
}

impl fmt::Display for BinarySubjectWall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_pair(&self.granted, &self.denied))
    }
}

impl FromStr for BinaryObjectWall {
    type Err = WallError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, c) = parse_pair(s)?;
        Self::new(a, c)
    }
}

impl FromStr for BinarySubjectWall {
    type Err = WallError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (g, d) = parse_pair(s)?;
        Self::new(g, d)
    }
}

/// Object wall seeded from the owning class: its own bit is authorized,
/// the bits of every class in conflict with it are conflicting.
pub fn init_object_wall(policy: &Policy, object: &ObjectId) -> Result<BinaryObjectWall, WallError> {
    let desc = policy
        .object(object)
        .ok_or_else(|| WallError::UnknownObject(object.clone()))?;
    let width = policy.class_count();
    let owner = policy
        .slot_of(&desc.owning_class)
        .ok_or_else(|| WallError::UnslottedClass { object: object.clone() })?;
    let conflicting = policy
        .conflicting_classes(&desc.owning_class)
        .into_iter()
        .filter_map(|c| policy.slot_of(&c.id));
    BinaryObjectWall::new(
        BitVector::one_hot(width, owner),
        BitVector::from_slots(width, conflicting),
    )
}

/// Subject wall seeded from the user's role class. Users whose role is in no
/// class get `{0…0, 1…1}`: denied on every class.
pub fn init_subject_wall(policy: &Policy, user: &UserId) -> Result<BinarySubjectWall, WallError> {
    let u = policy.user(user).ok_or_else(|| WallError::UnknownUser(user.clone()))?;
    let width = policy.class_count();
    match policy.class_of(&u.role) {
        Some(class) => {
            let own = policy.slot_of(&class.id).expect("indexed class has a slot");
            let conflicting = policy
                .conflicting_classes(&class.id)
                .into_iter()
                .filter_map(|c| policy.slot_of(&c.id));
            BinarySubjectWall::new(
                BitVector::one_hot(width, own),
                BitVector::from_slots(width, conflicting),
            )
        }
        None => BinarySubjectWall::new(BitVector::zeros(width), BitVector::ones(width)),
    }
}

/// Access condition: `granted ∧ conflicting = 0` and `denied ∧ authorized = 0`.
pub fn check_access(sw: &BinarySubjectWall, ow: &BinaryObjectWall) -> Result<bool, WallError> {
    Ok(sw.granted.disjoint(&ow.conflicting)? && sw.denied.disjoint(&ow.authorized)?)
}

/// After a granted read the subject absorbs the object's wall.
pub fn update_on_read(sw: &BinarySubjectWall, ow: &BinaryObjectWall) -> Result<BinarySubjectWall, WallError> {
    let granted = sw.granted.or(&ow.authorized)?;
    let denied = sw.denied.or(&ow.conflicting)?;
    disjoint_or_error(&granted, &denied)?;
    Ok(BinarySubjectWall { granted, denied })
}

/// After a granted write the object absorbs the subject's wall.
pub fn update_on_write(ow: &BinaryObjectWall, sw: &BinarySubjectWall) -> Result<BinaryObjectWall, WallError> {
    let authorized = ow.authorized.or(&sw.granted)?;
    let conflicting = ow.conflicting.or(&sw.denied)?;
    disjoint_or_error(&authorized, &conflicting)?;
    Ok(BinaryObjectWall {
        authorized,
        conflicting,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    fn sw(s: &str) -> BinarySubjectWall {
        s.parse().unwrap()
    }

    fn ow(s: &str) -> BinaryObjectWall {
        s.parse().unwrap()
    }

    #[test]
    fn seeds_match_the_case_study_table() {
        let p = fixtures::case_study_policy();
        let obj = |id: &str| init_object_wall(&p, &id.into()).unwrap().to_string();
        let subj = |id: &str| init_subject_wall(&p, &id.into()).unwrap().to_string();
        assert_eq!(obj("ODW"), "{100, 011}");
        assert_eq!(obj("DDW"), "{010, 101}");
        assert_eq!(obj("ADW"), "{001, 110}");
        assert_eq!(subj("S1"), "{100, 011}");
        assert_eq!(subj("S2"), "{010, 101}");
        assert_eq!(subj("S3"), "{001, 110}");
        assert!(matches!(
            init_object_wall(&p, &"nope".into()),
            Err(WallError::UnknownObject(_))
        ));
        assert!(matches!(
            init_subject_wall(&p, &"nope".into()),
            Err(WallError::UnknownUser(_))
        ));
    }

    #[test]
    fn classless_user_is_denied_everything() {
        let p = fixtures::case_study_policy();
        let p = crate::policy::assign_user(&p, &"u".into(), &"R1".into()).unwrap();
        assert_eq!(init_subject_wall(&p, &"u".into()).unwrap().to_string(), "{000, 111}");
    }

    #[test]
    fn object_without_conflicts() {
        let mut doc = fixtures::case_study_policy().to_document();
        doc.conflicts.clear();
        let p = doc.into();
        assert_eq!(init_object_wall(&p, &"DDW".into()).unwrap().to_string(), "{010, 000}");
    }

    #[test]
    fn access_predicate_examples() {
        assert!(check_access(&sw("{100, 011}"), &ow("{100, 011}")).unwrap());
        assert!(!check_access(&sw("{001, 110}"), &ow("{010, 101}")).unwrap());
        assert!(check_access(&sw("{111, 111}"), &ow("{000, 000}")).unwrap());
        assert!(matches!(
            check_access(&sw("{10, 01}"), &ow("{100, 011}")),
            Err(WallError::WidthMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn update_examples() {
        let r = |s: &str, o: &str| update_on_read(&sw(s), &ow(o)).unwrap().to_string();
        assert_eq!(r("{010, 101}", "{010, 101}"), "{010, 101}");
        assert_eq!(r("{100, 011}", "{100, 011}"), "{100, 011}");
        assert_eq!(r("{100, 000}", "{100, 011}"), "{100, 011}");

        let w = |o: &str, s: &str| update_on_write(&ow(o), &sw(s)).unwrap().to_string();
        assert_eq!(w("{100, 011}", "{100, 011}"), "{100, 011}");
        assert_eq!(w("{101, 010}", "{000, 000}"), "{101, 010}");
        assert_eq!(w("{100, 010}", "{100, 001}"), "{100, 011}");
    }

    #[test]
    fn overlapping_update_is_an_error() {
        let err = update_on_read(&sw("{100, 000}"), &ow("{010, 100}")).unwrap_err();
        assert_eq!(err, WallError::DisjointnessBroken { bits: "100".into() });
        let err = update_on_write(&ow("{100, 000}"), &sw("{000, 100}")).unwrap_err();
        assert!(matches!(err, WallError::DisjointnessBroken { .. }));
    }

    #[test]
    fn pair_parsing_rejects_garbage() {
        for bad in ["100, 011", "{100,011}", "{10, 011}", "{1x0, 011}", "{}"] {
            assert!(parse_pair(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn wide_vectors_cross_word_boundaries() {
        let mut v = BitVector::zeros(130);
        v.set(0);
        v.set(64);
        v.set(129);
        assert_eq!(v.slots().collect::<Vec<_>>(), vec![0, 64, 129]);
        assert_eq!(v.to_string().parse::<BitVector>().unwrap(), v);
        assert_eq!(BitVector::ones(130).count_ones(), 130);
    }

    fn arb_bits(width: usize) -> impl Strategy<Value = BitVector> {
        proptest::collection::vec(any::<bool>(), width).prop_map(move |bits| {
            BitVector::from_slots(width, bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i))
        })
    }

    fn as_set(v: &BitVector) -> std::collections::BTreeSet<usize> {
        (0..v.width()).filter(|&i| v.to_string().as_bytes()[i] == b'1').collect()
    }

    proptest! {
        #[test]
        fn check_access_matches_set_form(
            (g, d, a, c) in (1usize..=6).prop_flat_map(|n| (arb_bits(n), arb_bits(n), arb_bits(n), arb_bits(n)))
        ) {
            let expected = as_set(&g).is_disjoint(&as_set(&c)) && as_set(&d).is_disjoint(&as_set(&a));
            let sw = BinarySubjectWall { granted: g, denied: d };
            let ow = BinaryObjectWall { authorized: a, conflicting: c };
            prop_assert_eq!(check_access(&sw, &ow).unwrap(), expected);
        }

        #[test]
        fn updates_are_idempotent_and_monotone(
            (g, d, a, c) in (1usize..=6).prop_flat_map(|n| (arb_bits(n), arb_bits(n), arb_bits(n), arb_bits(n)))
        ) {
            let sw = BinarySubjectWall { granted: g, denied: d };
            let ow = BinaryObjectWall { authorized: a, conflicting: c };
            if let Ok(once) = update_on_read(&sw, &ow) {
                prop_assert!(once.dominates(&sw));
                prop_assert_eq!(update_on_read(&once, &ow).unwrap(), once.clone());
                let union: std::collections::BTreeSet<_> = as_set(&sw.granted).union(&as_set(&ow.authorized)).copied().collect();
                prop_assert_eq!(as_set(&once.granted), union);
            }
            if let Ok(once) = update_on_write(&ow, &sw) {
                prop_assert!(once.dominates(&ow));
                prop_assert_eq!(update_on_write(&once, &sw).unwrap(), once);
            }
        }

        #[test]
        fn render_parse_identity(v in (0usize..200).prop_flat_map(arb_bits)) {
            prop_assert_eq!(v.to_string().parse::<BitVector>().unwrap(), v);
        }
    }
}
