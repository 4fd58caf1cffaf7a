//! Praat TextGrid files in the long text format.
//!
//! Only interval tiers are supported. Input may be UTF-8 (with or without
//! BOM) or UTF-16 with a BOM; output is always UTF-8.

use std::fmt::Write as _;

use thiserror::Error;

/// Boundary comparisons tolerate this much disagreement (seconds).
pub const TIME_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub xmin: f64,
    pub xmax: f64,
    pub text: String,
}

impl Interval {
    pub fn new(xmin: f64, xmax: f64, text: impl Into<String>) -> Self {
        Self { xmin, xmax, text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalTier {
    pub name: String,
    pub xmin: f64,
    pub xmax: f64,
    pub intervals: Vec<Interval>,
}

impl IntervalTier {
    pub fn new(name: impl Into<String>, xmin: f64, xmax: f64, intervals: Vec<Interval>) -> Self {
        Self { name: name.into(), xmin, xmax, intervals }
    }

    /// A tier with a single empty interval covering `[xmin, xmax]`.
    pub fn empty(name: impl Into<String>, xmin: f64, xmax: f64) -> Self {
        Self::new(name, xmin, xmax, vec![Interval::new(xmin, xmax, "")])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextGrid {
    pub xmin: f64,
    pub xmax: f64,
    pub tiers: Vec<IntervalTier>,
}

impl TextGrid {
    pub fn tier(&self, name: &str) -> Option<&IntervalTier> {
        self.tiers.iter().find(|t| t.name == name)
    }

    /// Checks every structural invariant, reporting the first violation.
    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.xmin < self.xmax) {
            return Err(ValidationError::EmptySpan { xmin: self.xmin, xmax: self.xmax });
        }
        for tier in &self.tiers {
            if (tier.xmin - self.xmin).abs() > TIME_TOLERANCE
                || (tier.xmax - self.xmax).abs() > TIME_TOLERANCE
            {
                return Err(ValidationError::TierSpan { tier: tier.name.clone() });
            }
            if tier.intervals.is_empty() {
                return Err(ValidationError::NoIntervals { tier: tier.name.clone() });
            }
            check_intervals(tier).map_err(|(index, kind)| ValidationError::Interval {
                tier: tier.name.clone(),
                index,
                kind,
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalFault {
    EmptyInterval,
    Overlap,
    Gap,
    StartMismatch,
    EndMismatch,
}

impl std::fmt::Display for IntervalFault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            IntervalFault::EmptyInterval => "interval has xmin >= xmax",
            IntervalFault::Overlap => "interval starts before the previous one ends",
            IntervalFault::Gap => "interval starts after the previous one ends",
            IntervalFault::StartMismatch => "first interval does not start at the tier xmin",
            IntervalFault::EndMismatch => "last interval does not end at the tier xmax",
        };
        f.write_str(s)
    }
}

fn check_intervals(tier: &IntervalTier) -> Result<(), (usize, IntervalFault)> {
    let ivs = &tier.intervals;
    if (ivs[0].xmin - tier.xmin).abs() > TIME_TOLERANCE {
        return Err((0, IntervalFault::StartMismatch));
    }
    for (i, iv) in ivs.iter().enumerate() {
        if !(iv.xmin < iv.xmax) {
            return Err((i, IntervalFault::EmptyInterval));
        }
        if i > 0 {
            let prev = ivs[i - 1].xmax;
            if iv.xmin < prev - TIME_TOLERANCE {
                return Err((i, IntervalFault::Overlap));
            }
            if iv.xmin > prev + TIME_TOLERANCE {
                return Err((i, IntervalFault::Gap));
            }
        }
    }
    if (ivs[ivs.len() - 1].xmax - tier.xmax).abs() > TIME_TOLERANCE {
        return Err((ivs.len() - 1, IntervalFault::EndMismatch));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("TextGrid span is empty: xmin {xmin} >= xmax {xmax}")]
    EmptySpan { xmin: f64, xmax: f64 },
    #[error("tier {tier:?} does not span the TextGrid")]
    TierSpan { tier: String },
    #[error("tier {tier:?} has no intervals")]
    NoIntervals { tier: String },
    #[error("tier {tier:?}, interval {}: {kind}", index + 1)]
    Interval { tier: String, index: usize, kind: IntervalFault },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("input is not valid {0}")]
    Encoding(&'static str),
    #[error("unsupported TextGrid format: {0}")]
    UnsupportedFormat(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: declared {declared} {what} but found {found}")]
    CountMismatch { line: usize, what: &'static str, declared: usize, found: usize },
    #[error("line {line}: tier {tier:?}, interval {}: {kind}", index + 1)]
    Interval { line: usize, tier: String, index: usize, kind: IntervalFault },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: ValidationError },
}

/// Decodes raw file bytes: BOM first, otherwise strict UTF-8.
pub fn decode_text(bytes: &[u8]) -> Result<String, ParseError> {
    if let Some(rest) = bytes.strip_prefix(&[0xEF, 0xBB, 0xBF]) {
        return String::from_utf8(rest.to_vec()).map_err(|_| ParseError::Encoding("UTF-8"));
    }
    let utf16 = |rest: &[u8], big_endian: bool| -> Result<String, ParseError> {
        if rest.len() % 2 != 0 {
            return Err(ParseError::Encoding("UTF-16"));
        }
        let units: Vec<u16> = rest
            .chunks_exact(2)
            .map(|c| if big_endian { u16::from_be_bytes([c[0], c[1]]) } else { u16::from_le_bytes([c[0], c[1]]) })
            .collect();
        String::from_utf16(&units).map_err(|_| ParseError::Encoding("UTF-16"))
    };
    if let Some(rest) = bytes.strip_prefix(&[0xFE, 0xFF]) {
        return utf16(rest, true);
    }
    if let Some(rest) = bytes.strip_prefix(&[0xFF, 0xFE]) {
        return utf16(rest, false);
    }
    String::from_utf8(bytes.to_vec()).map_err(|_| ParseError::Encoding("UTF-8 (no BOM found)"))
}

/// Parses a TextGrid from raw file bytes.
pub fn parse_textgrid(bytes: &[u8]) -> Result<TextGrid, ParseError> {
    parse_textgrid_str(&decode_text(bytes)?)
}

struct Cursor<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Self { lines: text.lines().collect(), pos: 0 }
    }

    /// 1-based number of the line most recently consumed.
    fn line_no(&self) -> usize {
        self.pos.max(1)
    }

    fn malformed(&self, message: impl Into<String>) -> ParseError {
        ParseError::Malformed { line: self.line_no(), message: message.into() }
    }

    fn next_nonblank(&mut self) -> Result<&'a str, ParseError> {
        while self.pos < self.lines.len() {
            let line = self.lines[self.pos];
            self.pos += 1;
            if !line.trim().is_empty() {
                return Ok(line.trim());
            }
        }
        Err(ParseError::Malformed { line: self.lines.len(), message: "unexpected end of file".into() })
    }

    fn peek_nonblank(&self) -> Option<&'a str> {
        self.lines[self.pos..].iter().map(|l| l.trim()).find(|l| !l.is_empty())
    }

    /// Consumes `key = value` and returns the raw value text.
    fn keyed(&mut self, key: &str) -> Result<&'a str, ParseError> {
        let line = self.next_nonblank()?;
        let Some((k, v)) = line.split_once('=') else {
            return Err(self.malformed(format!("expected `{key} = ...`, found {line:?}")));
        };
        if normalize_key(k) != normalize_key(key) {
            return Err(self.malformed(format!("expected `{key} = ...`, found {line:?}")));
        }
        Ok(v.trim())
    }

    fn number(&mut self, key: &str) -> Result<f64, ParseError> {
        let raw = self.keyed(key)?;
        let x: f64 = raw
            .split_whitespace()
            .next()
            .unwrap_or("")
            .parse()
            .map_err(|_| self.malformed(format!("`{key}` is not a number: {raw:?}")))?;
        if !x.is_finite() {
            return Err(self.malformed(format!("`{key}` is not finite")));
        }
        Ok(x)
    }

    fn count(&mut self, key: &str) -> Result<usize, ParseError> {
        let raw = self.keyed(key)?;
        raw.split_whitespace()
            .next()
            .unwrap_or("")
            .parse()
            .map_err(|_| self.malformed(format!("`{key}` is not a count: {raw:?}")))
    }

    /// Reads a quoted string value which may continue over several lines.
    fn string(&mut self, key: &str) -> Result<String, ParseError> {
        let start_line = self.pos;
        let first = self.keyed(key)?;
        let first = first
            .strip_prefix('"')
            .ok_or_else(|| self.malformed(format!("`{key}` must be a quoted string")))?;
        let mut buf = String::new();
        let mut chunk = first.to_string();
        // raw (untrimmed) lines after the first, for multi-line labels
        let mut raw_idx = self.pos;
        loop {
            if let Some(value) = take_quoted(&chunk, &mut buf) {
                let rest = value.trim();
                if !rest.is_empty() {
                    return Err(self.malformed(format!("trailing characters after `{key}` string")));
                }
                return Ok(buf);
            }
            buf.push('\n');
            if raw_idx >= self.lines.len() {
                return Err(ParseError::Malformed {
                    line: start_line + 1,
                    message: format!("unterminated string for `{key}`"),
                });
            }
            chunk = self.lines[raw_idx].to_string();
            raw_idx += 1;
            self.pos = raw_idx;
        }
    }

    fn expect(&mut self, what: &str) -> Result<(), ParseError> {
        let line = self.next_nonblank()?;
        if normalize_key(line) != normalize_key(what) {
            return Err(self.malformed(format!("expected `{what}`, found {line:?}")));
        }
        Ok(())
    }
}

/// Appends the body of a quoted string (opening quote already stripped) to
/// `buf`, handling doubled quotes. Returns the text after the closing quote,
/// or `None` if the string continues past the end of `chunk`.
fn take_quoted<'s>(chunk: &'s str, buf: &mut String) -> Option<&'s str> {
    let mut chars = chunk.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c == '"' {
            if matches!(chars.peek(), Some((_, '"'))) {
                chars.next();
                buf.push('"');
            } else {
                return Some(&chunk[i + 1..]);
            }
        } else {
            buf.push(c);
        }
    }
    None
}

fn normalize_key(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Parses TextGrid text that has already been decoded.
pub fn parse_textgrid_str(text: &str) -> Result<TextGrid, ParseError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    if text.starts_with("ooBinaryFile") {
        return Err(ParseError::UnsupportedFormat("binary TextGrid files are not supported".into()));
    }
    let mut cur = Cursor::new(text);
    let file_type = cur.string("File type")?;
    if file_type != "ooTextFile" {
        return Err(cur.malformed(format!("unexpected file type {file_type:?}")));
    }
    let class = cur.string("Object class")?;
    if class != "TextGrid" {
        return Err(cur.malformed(format!("object class {class:?} is not a TextGrid")));
    }
    match cur.peek_nonblank() {
        Some(l) if l.contains('=') => {}
        Some(_) => {
            return Err(ParseError::UnsupportedFormat(
                "short text format; save as a (long) text file in Praat".into(),
            ))
        }
        None => return Err(cur.malformed("missing TextGrid body")),
    }
    let xmin = cur.number("xmin")?;
    let xmax = cur.number("xmax")?;
    if !(xmin < xmax) {
        return Err(cur.malformed(format!("TextGrid xmin {xmin} must be below xmax {xmax}")));
    }
    let tiers_flag = {
        let line = cur.next_nonblank()?;
        match line.strip_prefix("tiers?") {
            Some(rest) => rest.trim(),
            None => return Err(cur.malformed(format!("expected `tiers? <exists>`, found {line:?}"))),
        }
    };
    let declared = if tiers_flag.starts_with("<exists>") {
        cur.count("size")?
    } else if tiers_flag.starts_with("<absent>") {
        0
    } else {
        return Err(cur.malformed(format!("bad `tiers?` flag {tiers_flag:?}")));
    };
    let size_line = cur.line_no();
    let mut tiers = Vec::with_capacity(declared);
    if declared > 0 {
        cur.expect("item []:")?;
    }
    for t in 0..declared {
        let header = match cur.peek_nonblank() {
            Some(h) => h,
            None => {
                return Err(ParseError::CountMismatch {
                    line: size_line,
                    what: "tiers",
                    declared,
                    found: t,
                })
            }
        };
        if normalize_key(header) != format!("item[{}]:", t + 1) {
            if normalize_key(header).starts_with("item[") {
                cur.next_nonblank()?;
                return Err(cur.malformed(format!("expected `item [{}]:`, found {header:?}", t + 1)));
            }
            return Err(ParseError::CountMismatch { line: size_line, what: "tiers", declared, found: t });
        }
        cur.next_nonblank()?;
        tiers.push(parse_tier(&mut cur, xmin, xmax)?);
    }
    if let Some(extra) = cur.peek_nonblank() {
        cur.next_nonblank()?;
        if normalize_key(extra).starts_with("item[") {
            return Err(ParseError::CountMismatch {
                line: size_line,
                what: "tiers",
                declared,
                found: declared + 1,
            });
        }
        return Err(cur.malformed(format!("unexpected content after last tier: {extra:?}")));
    }
    let grid = TextGrid { xmin, xmax, tiers };
    grid.validate().map_err(|source| ParseError::Invalid { line: cur.line_no(), source })?;
    Ok(grid)
}

fn parse_tier(cur: &mut Cursor<'_>, grid_xmin: f64, grid_xmax: f64) -> Result<IntervalTier, ParseError> {
    let class = cur.string("class")?;
    if class != "IntervalTier" {
        return Err(ParseError::UnsupportedFormat(format!(
            "line {}: tier class {class:?} (only IntervalTier is supported)",
            cur.line_no()
        )));
    }
    let name = cur.string("name")?;
    let xmin = cur.number("xmin")?;
    let xmax = cur.number("xmax")?;
    if (xmin - grid_xmin).abs() > TIME_TOLERANCE || (xmax - grid_xmax).abs() > TIME_TOLERANCE {
        return Err(cur.malformed(format!("tier {name:?} span [{xmin}, {xmax}] differs from the TextGrid span")));
    }
    let declared = cur.count("intervals: size")?;
    let size_line = cur.line_no();
    let mut intervals: Vec<Interval> = Vec::with_capacity(declared);
    for i in 0..declared {
        match cur.peek_nonblank() {
            Some(h) if normalize_key(h) == format!("intervals[{}]:", i + 1) => {
                cur.next_nonblank()?;
            }
            _ => {
                return Err(ParseError::CountMismatch { line: size_line, what: "intervals", declared, found: i })
            }
        }
        let ixmin = cur.number("xmin")?;
        let line = cur.line_no();
        let ixmax = cur.number("xmax")?;
        let text = cur.string("text")?;
        let fault = if !(ixmin < ixmax) {
            Some(IntervalFault::EmptyInterval)
        } else if i == 0 && (ixmin - xmin).abs() > TIME_TOLERANCE {
            Some(IntervalFault::StartMismatch)
        } else if let Some(prev) = intervals.last() {
            if ixmin < prev.xmax - TIME_TOLERANCE {
                Some(IntervalFault::Overlap)
            } else if ixmin > prev.xmax + TIME_TOLERANCE {
                Some(IntervalFault::Gap)
            } else {
                None
            }
        } else {
            None
        };
        if let Some(kind) = fault {
            return Err(ParseError::Interval { line, tier: name, index: i, kind });
        }
        intervals.push(Interval { xmin: ixmin, xmax: ixmax, text });
    }
    if let Some(h) = cur.peek_nonblank() {
        if normalize_key(h).starts_with("intervals[") {
            return Err(ParseError::CountMismatch {
                line: size_line,
                what: "intervals",
                declared,
                found: declared + 1,
            });
        }
    }
    Ok(IntervalTier { name, xmin, xmax, intervals })
}

/// Renders a number the way it round-trips exactly: shortest decimal form.
fn fmt_time(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else {
        format!("{x}")
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

/// Emits the Praat long text format. The grid is validated first and
/// nothing is produced if it is malformed.
pub fn serialize_textgrid(grid: &TextGrid) -> Result<String, ValidationError> {
    grid.validate()?;
    let mut out = String::new();
    // write! into a String cannot fail
    let _ = writeln!(out, "File type = \"ooTextFile\"");
    let _ = writeln!(out, "Object class = \"TextGrid\"");
    let _ = writeln!(out);
    let _ = writeln!(out, "xmin = {} ", fmt_time(grid.xmin));
    let _ = writeln!(out, "xmax = {} ", fmt_time(grid.xmax));
    if grid.tiers.is_empty() {
        let _ = writeln!(out, "tiers? <absent> ");
        return Ok(out);
    }
    let _ = writeln!(out, "tiers? <exists> ");
    let _ = writeln!(out, "size = {} ", grid.tiers.len());
    let _ = writeln!(out, "item []: ");
    for (t, tier) in grid.tiers.iter().enumerate() {
        let _ = writeln!(out, "    item [{}]:", t + 1);
        let _ = writeln!(out, "        class = \"IntervalTier\" ");
        let _ = writeln!(out, "        name = {} ", quote(&tier.name));
        let _ = writeln!(out, "        xmin = {} ", fmt_time(tier.xmin));
        let _ = writeln!(out, "        xmax = {} ", fmt_time(tier.xmax));
        let _ = writeln!(out, "        intervals: size = {} ", tier.intervals.len());
        for (i, iv) in tier.intervals.iter().enumerate() {
            let _ = writeln!(out, "        intervals [{}]:", i + 1);
            let _ = writeln!(out, "            xmin = {} ", fmt_time(iv.xmin));
            let _ = writeln!(out, "            xmax = {} ", fmt_time(iv.xmax));
            let _ = writeln!(out, "            text = {} ", quote(&iv.text));
        }
    }
    Ok(out)
}
