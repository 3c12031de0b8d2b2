use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::layout::RegionRect;

use super::PlanInvalid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EditKind {
    Del,
    Add,
    Mod,
}

impl FromStr for EditKind {
    type Err = PlanInvalid;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "add" => Ok(EditKind::Add),
            "del" | "delete" => Ok(EditKind::Del),
            "mod" | "modify" => Ok(EditKind::Mod),
            _ => Err(PlanInvalid::UnknownOpKind(s.trim().to_string())),
        }
    }
}

impl fmt::Display for EditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EditKind::Add => "add",
            EditKind::Del => "del",
            EditKind::Mod => "mod",
        })
    }
}

/// Where an op applies: a rectangle, or an RPGL mask file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EditRegion {
    Rect(RegionRect),
    MaskFile(PathBuf),
}

impl fmt::Display for EditRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EditRegion::Rect(r) => write!(f, "{r}"),
            EditRegion::MaskFile(p) => write!(f, "@{}", p.display()),
        }
    }
}

/// One planned edit. `cond` names the conditioning to paint inside the
/// region; for deletions it is the background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditOp {
    pub kind: EditKind,
    pub target: String,
    pub region: EditRegion,
    pub cond: String,
}

impl EditOp {
    pub fn new(kind: EditKind, target: impl Into<String>, region: EditRegion, cond: impl Into<String>) -> Self {
        EditOp { kind, target: target.into(), region, cond: cond.into() }
    }
}

impl fmt::Display for EditOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} | {} | {} | {}", self.kind, self.target, self.region, self.cond)
    }
}

fn parse_rect(text: &str) -> Option<RegionRect> {
    let nums: Vec<u32> = text.split(',').map(|v| v.trim().parse().ok()).collect::<Option<_>>()?;
    match nums[..] {
        [x0, y0, w, h] => Some(RegionRect::new(x0, y0, w, h, 0)),
        _ => None,
    }
}

pub(crate) fn parse_region(text: &str) -> Option<EditRegion> {
    let text = text.trim();
    match text.strip_prefix('@') {
        Some(path) if !path.trim().is_empty() => Some(EditRegion::MaskFile(PathBuf::from(path.trim()))),
        Some(_) => None,
        None => parse_rect(text).map(EditRegion::Rect),
    }
}

impl FromStr for EditOp {
    type Err = PlanInvalid;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = line.split('|').map(str::trim).collect();
        let [kind, target, region, cond] = fields[..] else {
            return Err(PlanInvalid::Other(format!("edit op `{}` needs 4 `|`-separated fields", line.trim())));
        };
        let kind: EditKind = kind.parse()?;
        if target.is_empty() || cond.is_empty() {
            return Err(PlanInvalid::Other(format!("edit op `{}` has an empty target or cond", line.trim())));
        }
        let region = parse_region(region).ok_or_else(|| PlanInvalid::Other(format!("bad edit region `{region}`")))?;
        if let EditRegion::Rect(r) = &region {
            if r.w == 0 || r.h == 0 {
                return Err(PlanInvalid::Other(format!("edit region `{r}` is empty")));
            }
        }
        Ok(EditOp::new(kind, target, region, cond))
    }
}

/// Ordered list of edit ops; may be empty.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EditPlan {
    pub ops: Vec<EditOp>,
}

impl EditPlan {
    pub fn new(ops: Vec<EditOp>) -> Self {
        EditPlan { ops }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// One op per line, `kind | target | x0,y0,w,h | cond-id`; `#` starts a
/// comment and blank lines are skipped.
impl FromStr for EditPlan {
    type Err = PlanInvalid;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        text.lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map(EditPlan::new)
    }
}

impl fmt::Display for EditPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for op in &self.ops {
            writeln!(f, "{op}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let text = "del | dog | 4,0,4,8 | background\nadd | apple | 0,0,2,2 | a red apple\nmod | hat | @masks/hat.rpgl | blue hat\n";
        let plan: EditPlan = text.parse().unwrap();
        assert_eq!(plan.len(), 3);
        assert_eq!(plan.ops[0].kind, EditKind::Del);
        assert_eq!(plan.ops[2].region, EditRegion::MaskFile("masks/hat.rpgl".into()));
        assert_eq!(plan.to_string(), text);
        assert_eq!("".parse::<EditPlan>().unwrap(), EditPlan::default());
    }

    #[test]
    fn rejects_unknown_kind_and_bad_fields() {
        assert_eq!("swap | a | 0,0,1,1 | b".parse::<EditOp>(), Err(PlanInvalid::UnknownOpKind("swap".into())));
        for bad in ["add | a | 0,0,1 | b", "add | | 0,0,1,1 | b", "add | a | 0,0,0,1 | b", "add | a | @ | b", "add | a"]
        {
            assert!(bad.parse::<EditOp>().is_err(), "{bad}");
        }
    }
}
