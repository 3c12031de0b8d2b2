use std::fmt;
use std::str::FromStr;

use crate::layout::RegionRect;

/// Entity names, deduplicated case-insensitively; the first spelling wins.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EntityList {
    entities: Vec<String>,
}

impl EntityList {
    pub fn new<S: AsRef<str>>(items: impl IntoIterator<Item = S>) -> Self {
        let mut entities: Vec<String> = Vec::new();
        for item in items {
            let e = item.as_ref().trim();
            if !e.is_empty() && !entities.iter().any(|k| k.to_lowercase() == e.to_lowercase()) {
                entities.push(e.to_string());
            }
        }
        EntityList { entities }
    }

    pub fn as_slice(&self) -> &[String] {
        &self.entities
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entities.iter().any(|e| e.to_lowercase() == name.trim().to_lowercase())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiscrepancyKind {
    MissingEntity,
    RedundantEntity,
    AttributeMismatch,
    RelationshipMismatch,
}

impl FromStr for DiscrepancyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "missing" | "missing-entity" => Ok(DiscrepancyKind::MissingEntity),
            "redundant" | "redundant-entity" => Ok(DiscrepancyKind::RedundantEntity),
            "attribute" | "attribute-mismatch" => Ok(DiscrepancyKind::AttributeMismatch),
            "relationship" | "relationship-mismatch" => Ok(DiscrepancyKind::RelationshipMismatch),
            other => Err(format!("unknown discrepancy kind `{other}`")),
        }
    }
}

impl fmt::Display for DiscrepancyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiscrepancyKind::MissingEntity => "missing-entity",
            DiscrepancyKind::RedundantEntity => "redundant-entity",
            DiscrepancyKind::AttributeMismatch => "attribute-mismatch",
            DiscrepancyKind::RelationshipMismatch => "relationship-mismatch",
        })
    }
}

/// A mismatch between what the target asks for and what the image shows.
///
/// For attribute and relationship mismatches `detail` is the wanted
/// description; for the others it is free-form context such as a count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Discrepancy {
    pub kind: DiscrepancyKind,
    pub entity: String,
    pub detail: String,
    pub region: Option<RegionRect>,
}

impl Discrepancy {
    pub fn new(kind: DiscrepancyKind, entity: impl Into<String>, detail: impl Into<String>) -> Self {
        Discrepancy { kind, entity: entity.into(), detail: detail.into(), region: None }
    }

    pub fn at(mut self, region: RegionRect) -> Self {
        self.region = Some(region);
        self
    }
}

/// `kind|entity|detail[|x0,y0,w,h]`
impl fmt::Display for Discrepancy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|{}", self.kind, self.entity, self.detail)?;
        if let Some(r) = &self.region {
            write!(f, "|{r}")?;
        }
        Ok(())
    }
}

impl FromStr for Discrepancy {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = line.split('|').map(str::trim).collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(format!("discrepancy `{}` needs kind|entity|detail[|rect]", line.trim()));
        }
        let kind = fields[0].parse()?;
        if fields[1].is_empty() {
            return Err(format!("discrepancy `{}` names no entity", line.trim()));
        }
        let mut d = Discrepancy::new(kind, fields[1], fields[2]);
        if let Some(rect) = fields.get(3) {
            match super::edit_plan::parse_region(rect) {
                Some(super::EditRegion::Rect(r)) if r.w > 0 && r.h > 0 => d.region = Some(r),
                _ => return Err(format!("bad discrepancy region `{rect}`")),
            }
        }
        Ok(d)
    }
}

/// Result of comparing an image caption against the target prompt.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EntityReport {
    pub targets: EntityList,
    pub present: EntityList,
    pub discrepancies: Vec<Discrepancy>,
}
