//! Region-split layout DSL.
//!
//! A split string divides a canvas into rows separated by `;`, and each row
//! into columns whose widths are given as comma-separated ratios:
//!
//! ```text
//! split := row (";" row)*
//! row   := ratio ("," ratio)*
//! ratio := decimal > 0
//! ```
//!
//! Rows share the canvas height equally. An extended form, accepted only by
//! [`parse_split_extended`], lets a row carry its own height ratio as a
//! `h:` prefix (`"2:1,1;1"`). Ratios are held as exact decimals so that
//! resolving a layout onto pixels is reproducible bit for bit.

mod ratio;
mod resolve;

pub use ratio::SplitRatio;
pub use resolve::{allocate, resolve_regions, validate_partition, PartitionViolation};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LayoutError {
    #[error("split string is empty")]
    EmptyInput,
    #[error("row {row} is empty (at byte {position})")]
    EmptyRow { row: usize, position: usize },
    #[error("ratio `{token}` at byte {position} must be strictly positive")]
    NonPositiveRatio { token: String, position: usize },
    #[error("malformed ratio `{token}` at byte {position}")]
    MalformedNumber { token: String, position: usize },
    #[error("invalid split spec: {0}")]
    InvalidSpec(&'static str),
    #[error("canvas dimensions must be at least 1x1, got {width}x{height}")]
    InvalidCanvas { width: u32, height: u32 },
    #[error("canvas {width}x{height} too small: region {region} would be empty")]
    CanvasTooSmall { region: usize, width: u32, height: u32 },
}

/// One row of a split: a height ratio and the column width ratios.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Row {
    pub height: SplitRatio,
    pub columns: Vec<SplitRatio>,
}

impl Row {
    pub fn new(columns: Vec<SplitRatio>) -> Self {
        Row { height: SplitRatio::ONE, columns }
    }

    pub fn with_height(height: SplitRatio, columns: Vec<SplitRatio>) -> Self {
        Row { height, columns }
    }
}

/// A parsed split layout. Always has at least one row, and every row at least
/// one column.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SplitSpec {
    rows: Vec<Row>,
}

impl SplitSpec {
    pub fn new(rows: Vec<Row>) -> Result<Self, LayoutError> {
        if rows.is_empty() {
            return Err(LayoutError::InvalidSpec("a split needs at least one row"));
        }
        if rows.iter().any(|r| r.columns.is_empty()) {
            return Err(LayoutError::InvalidSpec("every row needs at least one column"));
        }
        Ok(SplitSpec { rows })
    }

    /// A single full-canvas region.
    pub fn identity() -> Self {
        SplitSpec { rows: vec![Row::new(vec![SplitRatio::ONE])] }
    }

    /// Equal-width columns in a single row.
    pub fn columns(n: usize) -> Result<Self, LayoutError> {
        Self::new(vec![Row::new(vec![SplitRatio::ONE; n])])
    }

    /// Equal-height rows, one column each.
    pub fn rows_of(n: usize) -> Result<Self, LayoutError> {
        Self::new((0..n).map(|_| Row::new(vec![SplitRatio::ONE])).collect())
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn region_count(&self) -> usize {
        self.rows.iter().map(|r| r.columns.len()).sum()
    }

    /// True when every row has the default unit height, i.e. the spec is
    /// expressible in the core grammar.
    pub fn is_core(&self) -> bool {
        self.rows.iter().all(|r| r.height == SplitRatio::ONE)
    }
}

impl fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_split(self))
    }
}

impl FromStr for SplitSpec {
    type Err = LayoutError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_split(s)
    }
}

/// Parses the core split grammar. Whitespace around tokens is ignored.
pub fn parse_split(text: &str) -> Result<SplitSpec, LayoutError> {
    parse_impl(text, false)
}

/// Parses the core grammar plus optional per-row `h:` height prefixes.
pub fn parse_split_extended(text: &str) -> Result<SplitSpec, LayoutError> {
    parse_impl(text, true)
}

/// Canonical text form. Rows with a non-unit height are written with the
/// extended `h:` prefix; everything else is core grammar with no whitespace.
pub fn serialize_split(spec: &SplitSpec) -> String {
    let mut out = String::new();
    for (i, row) in spec.rows.iter().enumerate() {
        if i > 0 {
            out.push(';');
        }
        if row.height != SplitRatio::ONE {
            out.push_str(&row.height.to_string());
            out.push(':');
        }
        for (j, col) in row.columns.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&col.to_string());
        }
    }
    out
}

fn parse_impl(text: &str, extended: bool) -> Result<SplitSpec, LayoutError> {
    if text.trim().is_empty() {
        return Err(LayoutError::EmptyInput);
    }
    let mut rows = Vec::new();
    let mut offset = 0;
    for (row_idx, segment) in text.split(';').enumerate() {
        let seg_start = offset;
        offset += segment.len() + 1;
        if segment.trim().is_empty() {
            return Err(LayoutError::EmptyRow { row: row_idx, position: seg_start });
        }
        let (height, cols_text, cols_start) = match segment.find(':') {
            Some(colon) if extended => {
                let (tok, pos) = trimmed_token(&segment[..colon], seg_start);
                let height = SplitRatio::parse_token(tok, pos)?;
                (height, &segment[colon + 1..], seg_start + colon + 1)
            }
            _ => (SplitRatio::ONE, segment, seg_start),
        };
        if cols_text.trim().is_empty() {
            return Err(LayoutError::EmptyRow { row: row_idx, position: cols_start });
        }
        let mut columns = Vec::new();
        let mut col_offset = cols_start;
        for piece in cols_text.split(',') {
            let (tok, pos) = trimmed_token(piece, col_offset);
            col_offset += piece.len() + 1;
            columns.push(SplitRatio::parse_token(tok, pos)?);
        }
        rows.push(Row { height, columns });
    }
    Ok(SplitSpec { rows })
}

fn trimmed_token(piece: &str, start: usize) -> (&str, usize) {
    let lead = piece.len() - piece.trim_start().len();
    (piece.trim(), start + lead)
}

/// Canvas size in pixels or latent cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
}

impl Canvas {
    pub fn new(width: u32, height: u32) -> Result<Self, LayoutError> {
        if width == 0 || height == 0 {
            return Err(LayoutError::InvalidCanvas { width, height });
        }
        Ok(Canvas { width, height })
    }

    pub fn area(&self) -> u64 {
        self.width as u64 * self.height as u64
    }
}

impl FromStr for Canvas {
    type Err = String;

    /// Parses `WxH`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (w, h) = s.trim().split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got `{s}`"))?;
        let width = w.trim().parse().map_err(|_| format!("bad canvas width `{w}`"))?;
        let height = h.trim().parse().map_err(|_| format!("bad canvas height `{h}`"))?;
        Canvas::new(width, height).map_err(|e| e.to_string())
    }
}

impl fmt::Display for Canvas {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// An axis-aligned region of the canvas. `index` is the region ordinal in
/// row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegionRect {
    pub x0: u32,
    pub y0: u32,
    pub w: u32,
    pub h: u32,
    pub index: usize,
}

impl RegionRect {
    pub fn new(x0: u32, y0: u32, w: u32, h: u32, index: usize) -> Self {
        RegionRect { x0, y0, w, h, index }
    }

    pub fn full(canvas: Canvas) -> Self {
        RegionRect::new(0, 0, canvas.width, canvas.height, 0)
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && y >= self.y0 && x - self.x0 < self.w && y - self.y0 < self.h
    }

    pub fn fits(&self, canvas: Canvas) -> bool {
        self.w >= 1
            && self.h >= 1
            && self.x0 as u64 + self.w as u64 <= canvas.width as u64
            && self.y0 as u64 + self.h as u64 <= canvas.height as u64
    }

    pub fn canvas(&self) -> Canvas {
        Canvas { width: self.w.max(1), height: self.h.max(1) }
    }
}

impl fmt::Display for RegionRect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x0, self.y0, self.w, self.h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(spec: &SplitSpec) -> Vec<Vec<String>> {
        spec.rows().iter().map(|r| r.columns.iter().map(|c| c.to_string()).collect()).collect()
    }

    #[test]
    fn parses_single_row_of_three() {
        let spec = parse_split("1,1,1").unwrap();
        assert_eq!(cols(&spec), vec![vec!["1", "1", "1"]]);
    }

    #[test]
    fn parses_two_rows() {
        let spec = parse_split("1;1").unwrap();
        assert_eq!(cols(&spec), vec![vec!["1"], vec!["1"]]);
    }

    #[test]
    fn parses_mixed_rows() {
        let spec = parse_split("1,2;3").unwrap();
        assert_eq!(cols(&spec), vec![vec!["1", "2"], vec!["3"]]);
        assert_eq!(serialize_split(&spec), "1,2;3");
    }

    #[test]
    fn serializes_examples() {
        let one = SplitRatio::ONE;
        let s = SplitSpec::new(vec![Row::new(vec![one, one, one])]).unwrap();
        assert_eq!(serialize_split(&s), "1,1,1");
        let s = SplitSpec::new(vec![Row::new(vec![one]), Row::new(vec![one])]).unwrap();
        assert_eq!(serialize_split(&s), "1;1");
    }

    #[test]
    fn whitespace_and_decimals_are_canonicalized() {
        let spec = parse_split("  1.50 , 2 ;  0.25 ").unwrap();
        assert_eq!(serialize_split(&spec), "1.5,2;0.25");
    }

    #[test]
    fn empty_input_is_rejected() {
        assert_eq!(parse_split("   "), Err(LayoutError::EmptyInput));
    }

    #[test]
    fn empty_row_names_position() {
        assert_eq!(parse_split("1;;1"), Err(LayoutError::EmptyRow { row: 1, position: 2 }));
        assert_eq!(parse_split("1,1;"), Err(LayoutError::EmptyRow { row: 1, position: 4 }));
    }

    #[test]
    fn non_positive_ratio_names_token() {
        assert_eq!(parse_split("1, 0"), Err(LayoutError::NonPositiveRatio { token: "0".into(), position: 3 }));
        assert!(matches!(parse_split("-1"), Err(LayoutError::NonPositiveRatio { position: 0, .. })));
    }

    #[test]
    fn malformed_number_names_token() {
        assert_eq!(parse_split("1,abc"), Err(LayoutError::MalformedNumber { token: "abc".into(), position: 2 }));
        assert!(matches!(parse_split("1,,1"), Err(LayoutError::MalformedNumber { position: 2, .. })));
        assert!(matches!(parse_split("1e3"), Err(LayoutError::MalformedNumber { .. })));
    }

    #[test]
    fn core_grammar_rejects_height_prefix() {
        assert!(matches!(parse_split("2:1,1"), Err(LayoutError::MalformedNumber { .. })));
        let spec = parse_split_extended("2:1,1;1").unwrap();
        assert_eq!(spec.rows()[0].height.to_string(), "2");
        assert_eq!(serialize_split(&spec), "2:1,1;1");
        assert!(!spec.is_core());
    }

    #[test]
    fn canvas_parses_wxh() {
        assert_eq!("8x6".parse::<Canvas>().unwrap(), Canvas { width: 8, height: 6 });
        assert!("0x6".parse::<Canvas>().is_err());
        assert!("8".parse::<Canvas>().is_err());
    }
}
