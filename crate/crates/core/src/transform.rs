//! Original → de-identified → anonymised data, with a confidentiality score.
//!
//! The score α of a dataset is:
//!
//! - `1` when any identifier column still holds a value,
//! - `0` when no quasi-identifier carries information (no quasi columns, or
//!   every quasi cell is the suppression token `*`),
//! - `1 / k_eff` otherwise, where `k_eff` is the size of the smallest group
//!   of rows sharing the same quasi-identifier values.
//!
//! De-identification drops or pseudonymizes identifier columns. Anonymisation
//! is greedy full-domain generalization: while some group is smaller than `k`
//! and suppressing those rows would exceed the budget, the quasi column with
//! the most distinct values moves one level up its hierarchy. Rows left in
//! small groups are then removed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use hmac::{Hmac, Mac};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::policy::{DomainId, ObjectKind, Policy};

/// Token every hierarchy maps to at its top level.
pub const SUPPRESSED: &str = "*";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("confidentiality is undefined on an empty dataset")]
    EmptyDataset,
    #[error("identifier column `{0}` has no de-identification step")]
    MissingAction(String),
    #[error("de-identification step names non-identifier column `{0}`")]
    NotAnIdentifier(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("quasi-identifier `{0}` has no generalization hierarchy")]
    MissingHierarchy(String),
    #[error("expected a {expected:?} dataset, got {actual:?}")]
    WrongTier { expected: Tier, actual: Tier },
    #[error("invalid recipe: {0}")]
    InvalidRecipe(String),
    #[error("{k}-anonymity needs {needed} suppressed row(s), budget is {allowed}")]
    UnachievableK { k: usize, needed: usize, allowed: usize },
    #[error("column `{column}`: cannot generalize `{value}`: {reason}")]
    Generalization {
        column: String,
        value: String,
        reason: String,
    },
    #[error("column `{column}`: level {level} splits values that level {} merged", level - 1)]
    NotCoarsening { column: String, level: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sensitivity {
    Identifier,
    Quasi,
    Sensitive,
    Insensitive,
}

/// One generalization step applied to a raw value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generalizer {
    /// Keep the first `n` characters, mask the rest with `*`.
    Prefix(usize),
    /// Integer bins of this width, rendered `lo-hi`.
    Range(u64),
    /// Explicit value → group table.
    Map(BTreeMap<String, String>),
}

impl Generalizer {
    fn apply(&self, value: &str) -> Result<String, String> {
        match self {
            Generalizer::Prefix(n) => Ok(value
                .chars()
                .enumerate()
                .map(|(i, c)| if i < *n { c } else { '*' })
                .collect()),
            Generalizer::Range(width) => {
                if *width == 0 {
                    return Err("range width must be positive".into());
                }
                let v: i64 = value.trim().parse().map_err(|_| "not an integer".to_string())?;
                let w = *width as i64;
                let lo = v.div_euclid(w) * w;
                Ok(format!("{}-{}", lo, lo + w - 1))
            }
            Generalizer::Map(groups) => groups.get(value).cloned().ok_or_else(|| "value is not mapped".to_string()),
        }
    }
}

/// Levels `0` (raw) through `steps.len()`, then the top level which maps
/// everything to [`SUPPRESSED`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GeneralizationHierarchy {
    pub steps: Vec<Generalizer>,
}

impl GeneralizationHierarchy {
    pub fn new(steps: Vec<Generalizer>) -> Self {
        Self { steps }
    }

    pub fn top(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn apply(&self, value: &str, level: usize) -> Result<String, String> {
        if level == 0 {
            return Ok(value.to_string());
        }
        if level >= self.top() || value == SUPPRESSED {
            return Ok(SUPPRESSED.to_string());
        }
        self.steps[level - 1].apply(value)
    }

    /// Checks over `values` that each level only merges groups of the level
    /// below. Returns the first offending level.
    pub fn check_coarsening<'a>(&self, values: impl IntoIterator<Item = &'a str>) -> Result<(), (usize, String)> {
        let values: BTreeSet<&str> = values.into_iter().collect();
        let mut below: BTreeMap<&str, String> = values.iter().map(|v| (*v, v.to_string())).collect();
        for level in 1..=self.top() {
            let mut here = BTreeMap::new();
            for v in &values {
                here.insert(*v, self.apply(v, level).map_err(|e| (level, format!("`{v}`: {e}")))?);
            }
            // Values equal at the level below must stay equal here.
            let mut image: HashMap<&String, &String> = HashMap::new();
            for v in &values {
                let prev = image.entry(&below[v]).or_insert(&here[v]);
                if *prev != &here[v] {
                    return Err((level, format!("`{v}`")));
                }
            }
            below = here;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Column {
    pub name: String,
    pub sensitivity: Sensitivity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchy: Option<GeneralizationHierarchy>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSchema {
    #[serde(rename = "column")]
    pub columns: Vec<Column>,
}

impl AttributeSchema {
    pub fn position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    fn positions_of(&self, s: Sensitivity) -> Vec<usize> {
        (0..self.columns.len())
            .filter(|&i| self.columns[i].sensitivity == s)
            .collect()
    }

    pub fn quasi_positions(&self) -> Vec<usize> {
        self.positions_of(Sensitivity::Quasi)
    }

    pub fn parse(text: &str) -> Result<Self, TransformError> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(1, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            TransformError::Parse {
                line,
                message: e.message().to_string(),
            }
        })
    }

    pub fn render(&self) -> String {
        toml::to_string(self).expect("schemas always serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tier {
    /// Original data.
    OD,
    /// De-identified data.
    DD,
    /// Anonymised data.
    AD,
}

impl Tier {
    pub fn warehouse(self) -> ObjectKind {
        match self {
            Tier::OD => ObjectKind::Odw,
            Tier::DD => ObjectKind::Ddw,
            Tier::AD => ObjectKind::Adw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub schema: AttributeSchema,
    pub rows: Vec<Vec<String>>,
    pub tier: Tier,
}

fn populated(cell: &str) -> bool {
    !cell.is_empty() && cell != SUPPRESSED
}

impl Dataset {
    pub fn new(schema: AttributeSchema, rows: Vec<Vec<String>>, tier: Tier) -> Self {
        Self { schema, rows, tier }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.schema.position(name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }

    /// Reads a comma-separated table whose header matches the schema.
    pub fn read_csv(text: &str, schema: AttributeSchema, tier: Tier) -> Result<Self, TransformError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| csv_error(&e))?.clone();
        let names: Vec<&str> = header.iter().collect();
        if names != schema.names() {
            return Err(TransformError::Parse {
                line: 1,
                message: format!("header {:?} does not match schema {:?}", names, schema.names()),
            });
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| csv_error(&e))?;
            rows.push(record.iter().map(str::to_string).collect());
        }
        Ok(Self { schema, rows, tier })
    }

    pub fn to_csv(&self) -> String {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer.write_record(self.schema.names()).expect("in-memory write");
        for row in &self.rows {
            writer.write_record(row).expect("in-memory write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("input was UTF-8")
    }
}

fn csv_error(e: &csv::Error) -> TransformError {
    let line = e.position().map_or(1, |p| p.line() as usize);
    TransformError::Parse {
        line,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeidAction {
    Drop,
    Pseudonymize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeidStep {
    pub column: String,
    pub action: DeidAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformRecipe {
    #[serde(default)]
    pub deid: Vec<DeidStep>,
    pub k: usize,
    /// Fraction of rows that may be removed to reach k-anonymity.
    #[serde(default)]
    pub max_suppression: f64,
}

impl TransformRecipe {
    pub fn new(deid: Vec<DeidStep>, k: usize, max_suppression: f64) -> Self {
        Self {
            deid,
            k,
            max_suppression,
        }
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        if self.k == 0 {
            return Err(TransformError::InvalidRecipe("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.max_suppression) {
            return Err(TransformError::InvalidRecipe(format!(
                "suppression fraction {} is outside [0, 1]",
                self.max_suppression
            )));
        }
        Ok(())
    }
}

/// Secret for keyed pseudonyms. Never written next to the data.
#[derive(Clone)]
pub struct PseudonymKey(Vec<u8>);

impl PseudonymKey {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Self(bytes.into())
    }

    pub fn random() -> Self {
        let mut bytes = vec![0u8; 32];
        rand::thread_rng().fill_bytes(&mut bytes);
        Self(bytes)
    }

    /// `p_` followed by 16 hex digits of HMAC-SHA256(key, column ␟ value).
    pub fn pseudonym(&self, column: &str, value: &str) -> String {
        let mut mac = Hmac::<Sha256>::new_from_slice(&self.0).expect("HMAC accepts any key length");
        mac.update(column.as_bytes());
        mac.update(&[0x1f]);
        mac.update(value.as_bytes());
        let digest = mac.finalize().into_bytes();
        let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        format!("p_{hex}")
    }
}

impl fmt::Debug for PseudonymKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PseudonymKey(..)")
    }
}

pub fn measure_confidentiality(ds: &Dataset) -> Result<f64, TransformError> {
    if ds.rows.is_empty() {
        return Err(TransformError::EmptyDataset);
    }
    let identifiers = ds.schema.positions_of(Sensitivity::Identifier);
    if ds.rows.iter().any(|r| identifiers.iter().any(|&i| populated(&r[i]))) {
        return Ok(1.0);
    }
    let quasi = ds.schema.quasi_positions();
    if !ds.rows.iter().any(|r| quasi.iter().any(|&i| r[i] != SUPPRESSED)) {
        return Ok(0.0);
    }
    let mut groups: HashMap<Vec<&str>, usize> = HashMap::new();
    for row in &ds.rows {
        *groups.entry(quasi.iter().map(|&i| row[i].as_str()).collect()).or_default() += 1;
    }
    let k_eff = groups.values().copied().min().expect("non-empty dataset has a group");
    Ok(1.0 / k_eff as f64)
}

/// Drops or pseudonymizes every identifier column. Pseudonymized columns are
/// reclassified as insensitive: the tokens cannot be linked without the key.
pub fn deidentify(ds: &Dataset, recipe: &TransformRecipe, key: &PseudonymKey) -> Result<Dataset, TransformError> {
    if ds.tier != Tier::OD {
        return Err(TransformError::WrongTier {
            expected: Tier::OD,
            actual: ds.tier,
        });
    }
    let mut actions = BTreeMap::new();
    for step in &recipe.deid {
        let col = ds
            .schema
            .columns
            .iter()
            .find(|c| c.name == step.column)
            .ok_or_else(|| TransformError::UnknownColumn(step.column.clone()))?;
        if col.sensitivity != Sensitivity::Identifier {
            return Err(TransformError::NotAnIdentifier(step.column.clone()));
        }
        actions.insert(step.column.as_str(), step.action);
    }
    for col in &ds.schema.columns {
        if col.sensitivity == Sensitivity::Identifier && !actions.contains_key(col.name.as_str()) {
            return Err(TransformError::MissingAction(col.name.clone()));
        }
    }

    let mut columns = Vec::new();
    let mut keep = Vec::new();
    for (i, col) in ds.schema.columns.iter().enumerate() {
        match actions.get(col.name.as_str()) {
            Some(DeidAction::Drop) => {}
            Some(DeidAction::Pseudonymize) => {
                columns.push(Column {
                    name: col.name.clone(),
                    sensitivity: Sensitivity::Insensitive,
                    hierarchy: None,
                });
                keep.push((i, true));
            }
            None => {
                columns.push(col.clone());
                keep.push((i, false));
            }
        }
    }
    let rows = ds
        .rows
        .iter()
        .map(|row| {
            keep.iter()
                .map(|&(i, pseudo)| {
                    let cell = &row[i];
                    if pseudo && populated(cell) {
                        key.pseudonym(&ds.schema.columns[i].name, cell)
                    } else {
                        cell.clone()
                    }
                })
                .collect()
        })
        .collect();
    Ok(Dataset {
        schema: AttributeSchema { columns },
        rows,
        tier: Tier::DD,
    })
}

/// Outcome of [`anonymize_detailed`].
#[derive(Debug, Clone, PartialEq)]
pub struct Anonymization {
    pub dataset: Dataset,
    /// Final hierarchy level per quasi column, in schema order.
    pub levels: Vec<(String, usize)>,
    pub suppressed: usize,
}

pub fn anonymize(ds: &Dataset, recipe: &TransformRecipe) -> Result<Dataset, TransformError> {
    anonymize_detailed(ds, recipe).map(|a| a.dataset)
}

pub fn anonymize_detailed(ds: &Dataset, recipe: &TransformRecipe) -> Result<Anonymization, TransformError> {
    recipe.validate()?;
    if ds.tier != Tier::DD {
        return Err(TransformError::WrongTier {
            expected: Tier::DD,
            actual: ds.tier,
        });
    }
    if ds.rows.is_empty() {
        return Err(TransformError::EmptyDataset);
    }
    let quasi = ds.schema.quasi_positions();
    let mut hierarchies = Vec::with_capacity(quasi.len());
    for &q in &quasi {
        let col = &ds.schema.columns[q];
        let h = col
            .hierarchy
            .as_ref()
            .ok_or_else(|| TransformError::MissingHierarchy(col.name.clone()))?;
        h.check_coarsening(ds.rows.iter().map(|r| r[q].as_str()))
            .map_err(|(level, _)| TransformError::NotCoarsening {
                column: col.name.clone(),
                level,
            })?;
        hierarchies.push(h);
    }

    // generalized[j][row] = value of quasi column j at its current level
    let mut levels = vec![0usize; quasi.len()];
    let mut generalized: Vec<Vec<String>> = quasi
        .iter()
        .map(|&q| ds.rows.iter().map(|r| r[q].clone()).collect())
        .collect();
    let n = ds.rows.len();
    let allowed = (recipe.max_suppression * n as f64 + 1e-9).floor() as usize;

    let small_rows = loop {
        let mut groups: HashMap<Vec<&str>, Vec<usize>> = HashMap::new();
        for row in 0..n {
            let key = generalized.iter().map(|col| col[row].as_str()).collect();
            groups.entry(key).or_default().push(row);
        }
        let small: Vec<usize> = groups
            .into_values()
            .filter(|members| members.len() < recipe.k)
            .flatten()
            .collect();
        if small.len() <= allowed && small.len() < n {
            break small;
        }
        let candidate = (0..quasi.len())
            .filter(|&j| levels[j] < hierarchies[j].top())
            .max_by_key(|&j| {
                let distinct: BTreeSet<&str> = generalized[j].iter().map(String::as_str).collect();
                (distinct.len(), std::cmp::Reverse(j))
            });
        let Some(j) = candidate else {
            return Err(TransformError::UnachievableK {
                k: recipe.k,
                needed: small.len(),
                allowed,
            });
        };
        levels[j] += 1;
        let column = &ds.schema.columns[quasi[j]].name;
        generalized[j] = ds
            .rows
            .iter()
            .map(|r| {
                hierarchies[j]
                    .apply(&r[quasi[j]], levels[j])
                    .map_err(|reason| TransformError::Generalization {
                        column: column.clone(),
                        value: r[quasi[j]].clone(),
                        reason,
                    })
            })
            .collect::<Result<_, _>>()?;
    };

    let dropped: BTreeSet<usize> = small_rows.into_iter().collect();
    let rows = (0..n)
        .filter(|r| !dropped.contains(r))
        .map(|r| {
            let mut row = ds.rows[r].clone();
            for (j, &q) in quasi.iter().enumerate() {
                row[q] = generalized[j][r].clone();
            }
            row
        })
        .collect();
    Ok(Anonymization {
        dataset: Dataset {
            schema: ds.schema.clone(),
            rows,
            tier: Tier::AD,
        },
        levels: quasi
            .iter()
            .zip(&levels)
            .map(|(&q, &l)| (ds.schema.columns[q].name.clone(), l))
            .collect(),
        suppressed: dropped.len(),
    })
}

/// True iff every group of rows agreeing on all quasi columns has at least
/// `k` members.
pub fn verify_k_anonymity(ds: &Dataset, k: usize) -> bool {
    let quasi = ds.schema.quasi_positions();
    let mut keys: Vec<Vec<&str>> = ds
        .rows
        .iter()
        .map(|r| quasi.iter().map(|&i| r[i].as_str()).collect())
        .collect();
    keys.sort();
    keys.chunk_by(|a, b| a == b).all(|group| group.len() >= k)
}

/// The three warehouse tiers derived from one original dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct WarehouseChain {
    pub od: Dataset,
    pub dd: Dataset,
    pub ad: Dataset,
}

impl WarehouseChain {
    pub fn alphas(&self) -> Result<[f64; 3], TransformError> {
        Ok([
            measure_confidentiality(&self.od)?,
            measure_confidentiality(&self.dd)?,
            measure_confidentiality(&self.ad)?,
        ])
    }
}

pub fn build_warehouse_chain(
    od: &Dataset,
    recipe: &TransformRecipe,
    key: &PseudonymKey,
) -> Result<WarehouseChain, TransformError> {
    recipe.validate()?;
    let dd = deidentify(od, recipe, key)?;
    let ad = anonymize(&dd, recipe)?;
    Ok(WarehouseChain { od: od.clone(), dd, ad })
}

/// Records `entities[tier]` as the content of the domain's ODW/DDW/ADW objects.
pub fn register_warehouses(policy: &Policy, domain: &DomainId, entities: [&str; 3]) -> Policy {
    let mut doc = policy.to_document();
    for object in doc.objects.iter_mut().filter(|o| &o.domain == domain) {
        let tier = match object.kind {
            ObjectKind::Odw => 0,
            ObjectKind::Ddw => 1,
            ObjectKind::Adw => 2,
            ObjectKind::Generic => continue,
        };
        object.entities.insert(entities[tier].to_string());
    }
    doc.into()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(name: &str, s: Sensitivity, h: Option<Vec<Generalizer>>) -> Column {
        Column {
            name: name.into(),
            sensitivity: s,
            hierarchy: h.map(GeneralizationHierarchy::new),
        }
    }

    fn toy_schema() -> AttributeSchema {
        AttributeSchema {
            columns: vec![
                col("name", Sensitivity::Identifier, None),
                col("mrn", Sensitivity::Identifier, None),
                col("zip", Sensitivity::Quasi, Some(vec![Generalizer::Prefix(3), Generalizer::Prefix(1)])),
                col("age", Sensitivity::Quasi, Some(vec![Generalizer::Range(10), Generalizer::Range(20)])),
                col("diagnosis", Sensitivity::Sensitive, None),
            ],
        }
    }

    fn toy() -> Dataset {
        let rows = [
            ["Ann", "M1", "02139", "34", "flu"],
            ["Bob", "M2", "02139", "34", "asthma"],
            ["Cid", "M3", "02141", "37", "flu"],
            ["Dee", "M4", "02141", "37", "copd"],
            ["Eve", "M5", "10001", "52", "flu"],
            ["Fay", "M6", "10001", "52", "diabetes"],
        ];
        Dataset::new(
            toy_schema(),
            rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
            Tier::OD,
        )
    }

    fn recipe(k: usize) -> TransformRecipe {
        TransformRecipe::new(
            vec![
                DeidStep {
                    column: "name".into(),
                    action: DeidAction::Drop,
                },
                DeidStep {
                    column: "mrn".into(),
                    action: DeidAction::Pseudonymize,
                },
            ],
            k,
            0.0,
        )
    }

    fn key() -> PseudonymKey {
        PseudonymKey::new(b"test-key".to_vec())
    }

    #[test]
    fn hierarchy_levels() {
        let h = GeneralizationHierarchy::new(vec![Generalizer::Prefix(3), Generalizer::Prefix(1)]);
        assert_eq!(h.apply("02139", 0).unwrap(), "02139");
        assert_eq!(h.apply("02139", 1).unwrap(), "021**");
        assert_eq!(h.apply("02139", 2).unwrap(), "0****");
        assert_eq!(h.apply("02139", 3).unwrap(), "*");
        let ages = GeneralizationHierarchy::new(vec![Generalizer::Range(10)]);
        assert_eq!(ages.apply("34", 1).unwrap(), "30-39");
        assert_eq!(ages.apply("-3", 1).unwrap(), "-10--1");
        assert!(ages.apply("x", 1).is_err());
    }

    #[test]
    fn coarsening_is_checked() {
        let bad = GeneralizationHierarchy::new(vec![Generalizer::Range(10), Generalizer::Range(15)]);
        assert_eq!(bad.check_coarsening(["5", "12", "17", "29"]).unwrap_err().0, 2);
        let good = GeneralizationHierarchy::new(vec![Generalizer::Range(10), Generalizer::Range(20)]);
        assert!(good.check_coarsening(["5", "12", "14", "29"]).is_ok());
        let map = GeneralizationHierarchy::new(vec![
            Generalizer::Map([("flu", "resp"), ("copd", "resp"), ("gout", "joint")].map(|(a, b)| (a.to_string(), b.to_string())).into()),
            Generalizer::Map([("flu", "x"), ("copd", "y"), ("gout", "y")].map(|(a, b)| (a.to_string(), b.to_string())).into()),
        ]);
        assert_eq!(map.check_coarsening(["flu", "copd", "gout"]).unwrap_err().0, 2);
    }

    #[test]
    fn alpha_endpoints() {
        assert_eq!(measure_confidentiality(&toy()).unwrap(), 1.0);
        let mut all_top = toy();
        all_top.schema.columns.retain(|c| c.sensitivity != Sensitivity::Identifier);
        all_top.rows = all_top
            .rows
            .iter()
            .map(|_| vec!["*".into(), "*".into(), "flu".into()])
            .collect();
        assert_eq!(measure_confidentiality(&all_top).unwrap(), 0.0);
        let empty = Dataset::new(toy_schema(), vec![], Tier::OD);
        assert_eq!(measure_confidentiality(&empty), Err(TransformError::EmptyDataset));
    }

    #[test]
    fn alpha_is_one_over_smallest_group() {
        let schema = AttributeSchema {
            columns: vec![
                col("zip", Sensitivity::Quasi, Some(vec![])),
                col("dx", Sensitivity::Sensitive, None),
            ],
        };
        let mut rows = Vec::new();
        for _ in 0..4 {
            rows.push(vec!["A".to_string(), "x".to_string()]);
        }
        for _ in 0..6 {
            rows.push(vec!["B".to_string(), "y".to_string()]);
        }
        let ds = Dataset::new(schema, rows, Tier::DD);
        assert_eq!(measure_confidentiality(&ds).unwrap(), 0.25);
    }

    #[test]
    fn deidentify_drops_and_pseudonymizes() {
        let dd = deidentify(&toy(), &recipe(2), &key()).unwrap();
        assert_eq!(dd.tier, Tier::DD);
        assert_eq!(dd.schema.names(), vec!["mrn", "zip", "age", "diagnosis"]);
        assert!(dd.rows.iter().all(|r| r[0].starts_with("p_") && r[0].len() == 18));
        assert!(measure_confidentiality(&dd).unwrap() < 1.0);
        assert_eq!(dd.column("diagnosis"), toy().column("diagnosis"));
        assert_eq!(deidentify(&toy(), &recipe(2), &key()).unwrap().to_csv(), dd.to_csv());
        let other = deidentify(&toy(), &recipe(2), &PseudonymKey::new(b"other".to_vec())).unwrap();
        assert_ne!(other.column("mrn"), dd.column("mrn"));
    }

    #[test]
    fn deidentify_errors() {
        let mut r = recipe(2);
        r.deid.pop();
        assert_eq!(
            deidentify(&toy(), &r, &key()),
            Err(TransformError::MissingAction("mrn".into()))
        );
        let mut r = recipe(2);
        r.deid.push(DeidStep {
            column: "zip".into(),
            action: DeidAction::Drop,
        });
        assert!(matches!(deidentify(&toy(), &r, &key()), Err(TransformError::NotAnIdentifier(_))));
        let mut dd = toy();
        dd.tier = Tier::DD;
        assert!(matches!(deidentify(&dd, &recipe(2), &key()), Err(TransformError::WrongTier { .. })));
    }

    #[test]
    fn deidentify_without_identifiers_keeps_alpha() {
        let mut od = toy();
        od.schema.columns.drain(..2);
        for row in &mut od.rows {
            row.drain(..2);
        }
        let dd = deidentify(&od, &TransformRecipe::new(vec![], 2, 0.0), &key()).unwrap();
        assert_eq!(dd.rows, od.rows);
        assert_eq!(dd.tier, Tier::DD);
        assert_eq!(measure_confidentiality(&dd).unwrap(), measure_confidentiality(&od).unwrap());
    }

    #[test]
    fn anonymize_reaches_k() {
        let dd = deidentify(&toy(), &recipe(2), &key()).unwrap();
        let a = anonymize_detailed(&dd, &recipe(2)).unwrap();
        assert!(verify_k_anonymity(&a.dataset, 2));
        assert!(measure_confidentiality(&a.dataset).unwrap() <= 0.5);
        assert_eq!(a.dataset.tier, Tier::AD);
        assert_eq!(a.suppressed, 0);

        let one = anonymize(&dd, &recipe(1)).unwrap();
        assert_eq!(one.rows, dd.rows);
        assert_eq!(measure_confidentiality(&one).unwrap(), measure_confidentiality(&dd).unwrap());

        let all = anonymize(&dd, &recipe(6)).unwrap();
        assert!(all.rows.iter().all(|r| r[1] == "*" && r[2] == "*"));
        assert_eq!(measure_confidentiality(&all).unwrap(), 0.0);
    }

    #[test]
    fn full_budget_still_generalizes() {
        let dd = deidentify(&toy(), &recipe(2), &key()).unwrap();
        let mut generous = recipe(3);
        generous.max_suppression = 1.0;
        let ad = anonymize(&dd, &generous).unwrap();
        assert!(!ad.is_empty());
        assert!(verify_k_anonymity(&ad, 3));
    }

    #[test]
    fn anonymize_errors() {
        let dd = deidentify(&toy(), &recipe(2), &key()).unwrap();
        assert!(matches!(
            anonymize(&dd, &recipe(7)),
            Err(TransformError::UnachievableK { k: 7, .. })
        ));
        let mut bad = recipe(2);
        bad.max_suppression = 1.5;
        assert!(matches!(anonymize(&dd, &bad), Err(TransformError::InvalidRecipe(_))));
        assert!(matches!(anonymize(&toy(), &recipe(2)), Err(TransformError::WrongTier { .. })));
        let mut no_h = dd.clone();
        no_h.schema.columns[1].hierarchy = None;
        assert_eq!(
            anonymize(&no_h, &recipe(2)),
            Err(TransformError::MissingHierarchy("zip".into()))
        );
    }

    #[test]
    fn suppression_budget_removes_outliers() {
        let mut od = toy();
        od.rows.push(vec!["Gus".into(), "M7".into(), "99999".into(), "90".into(), "flu".into()]);
        let dd = deidentify(&od, &recipe(2), &key()).unwrap();
        let mut r = recipe(2);
        r.max_suppression = 0.2;
        let a = anonymize_detailed(&dd, &r).unwrap();
        assert!(verify_k_anonymity(&a.dataset, 2));
        assert!(a.suppressed <= 1);
        assert_eq!(a.dataset.len() + a.suppressed, dd.len());
    }

    #[test]
    fn verify_edge_cases() {
        let dd = deidentify(&toy(), &recipe(2), &key()).unwrap();
        assert!(verify_k_anonymity(&dd, 1));
        let mut single = dd.clone();
        single.rows.truncate(1);
        assert!(!verify_k_anonymity(&single, 2));
    }

    #[test]
    fn csv_and_schema_round_trip() {
        let ds = toy();
        let back = Dataset::read_csv(&ds.to_csv(), toy_schema(), Tier::OD).unwrap();
        assert_eq!(back, ds);
        assert_eq!(AttributeSchema::parse(&toy_schema().render()).unwrap(), toy_schema());
        let mut wrong = toy_schema();
        wrong.columns.swap(0, 1);
        assert!(matches!(
            Dataset::read_csv(&ds.to_csv(), wrong, Tier::OD),
            Err(TransformError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn chain_registers_warehouses() {
        let p = crate::fixtures::case_study_policy();
        let p = register_warehouses(&p, &"healthcare".into(), ["ehr_od.csv", "ehr_dd.csv", "ehr_ad.csv"]);
        assert!(p.object(&"DDW".into()).unwrap().entities.contains("ehr_dd.csv"));
        let chain = build_warehouse_chain(&toy(), &recipe(2), &key()).unwrap();
        let [a, b, c] = chain.alphas().unwrap();
        assert!(a >= b && b >= c);
    }
}
