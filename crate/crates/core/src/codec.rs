//! Template sentences: rendering load records as text and reading values back,
//! both from clean sentences and from noisy generated text.

use std::fmt;
use std::sync::OnceLock;

use chrono::NaiveDateTime;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{format_timestamp, parse_timestamp, LoadRecord};

pub const DEFAULT_TEMPLATE: &str = "The electric load at {Time} is {Usage}.";
pub const DEFAULT_DECIMALS: u32 = 1;

/// Upper bound on the rounding precision a template accepts.
pub const MAX_DECIMALS: u32 = 12;

const TIME: &str = "{Time}";
const USAGE: &str = "{Usage}";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("invalid sentence: {0}")]
    InvalidSentence(String),
    #[error("sentence does not match the template: {0:?}")]
    NoMatch(String),
    #[error("bad timestamp in sentence: {0}")]
    BadTimestamp(String),
    #[error("bad number in sentence: {0:?}")]
    BadNumber(String),
    #[error("no numeric token in {0:?}")]
    NoNumber(String),
    #[error("records are not chronological at index {0}")]
    NotChronological(usize),
}

/// One line of text; never empty and never containing a newline.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Sentence(String);

impl Sentence {
    pub fn new(text: impl Into<String>) -> Result<Self, CodecError> {
        let text = text.into();
        if text.is_empty() {
            return Err(CodecError::InvalidSentence("empty sentence".into()));
        }
        if text.contains('\n') {
            return Err(CodecError::InvalidSentence(format!(
                "embedded newline in {text:?}"
            )));
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Sentence {
    type Error = CodecError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<Sentence> for String {
    fn from(s: Sentence) -> Self {
        s.0
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Sentence {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Time,
    Usage,
}

/// A sentence pattern with one `{Time}` and one `{Usage}` placeholder, plus the
/// number of decimals usage values are rounded to.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pattern: String,
    decimals: u32,
    matcher: Regex,
    // Capture group order in `matcher`.
    slots: [Slot; 2],
}

impl PartialEq for PromptTemplate {
    fn eq(&self, other: &Self) -> bool {
        self.pattern == other.pattern && self.decimals == other.decimals
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::new(DEFAULT_TEMPLATE, DEFAULT_DECIMALS).expect("default template is valid")
    }
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl PromptTemplate {
    pub fn new(pattern: impl Into<String>, decimals: u32) -> Result<Self, CodecError> {
        let pattern = pattern.into();
        if pattern.contains('\n') {
            return Err(CodecError::InvalidTemplate("template spans several lines".into()));
        }
        if decimals > MAX_DECIMALS {
            return Err(CodecError::InvalidTemplate(format!(
                "decimals {decimals} exceeds {MAX_DECIMALS}"
            )));
        }
        for placeholder in [TIME, USAGE] {
            let count = pattern.matches(placeholder).count();
            if count != 1 {
                return Err(CodecError::InvalidTemplate(format!(
                    "{placeholder} must appear exactly once, found {count}"
                )));
            }
        }
        let stripped = pattern.replace(TIME, "").replace(USAGE, "");
        if stripped.contains('{') || stripped.contains('}') {
            return Err(CodecError::InvalidTemplate(format!(
                "unknown placeholder or stray brace in {pattern:?}"
            )));
        }

        let normalized = collapse_whitespace(&pattern);
        let time_at = normalized.find(TIME).expect("checked above");
        let usage_at = normalized.find(USAGE).expect("checked above");
        let (first, second, slots) = if time_at < usage_at {
            (TIME, USAGE, [Slot::Time, Slot::Usage])
        } else {
            (USAGE, TIME, [Slot::Usage, Slot::Time])
        };
        let (head, rest) = normalized.split_once(first).expect("checked above");
        let (middle, tail) = rest.split_once(second).expect("checked above");
        if middle.is_empty() {
            return Err(CodecError::InvalidTemplate(
                "placeholders must be separated by literal text".into(),
            ));
        }
        let expr = format!(
            "^{}(.+?){}(.+?){}$",
            regex::escape(head),
            regex::escape(middle),
            regex::escape(tail)
        );
        let matcher = Regex::new(&expr).map_err(|e| CodecError::InvalidTemplate(e.to_string()))?;
        Ok(Self {
            pattern,
            decimals,
            matcher,
            slots,
        })
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn decimals(&self) -> u32 {
        self.decimals
    }

    /// The usage text a value renders to under this template.
    pub fn format_usage(&self, value: f64) -> String {
        format_decimal(value, self.decimals)
    }

    /// The value a parser recovers from a rendered sentence.
    pub fn round_value(&self, value: f64) -> f64 {
        round_half_away(value, self.decimals)
    }

    pub fn render(&self, record: &LoadRecord) -> Sentence {
        self.render_at(record.timestamp(), record.consumption())
    }

    pub fn render_at(&self, timestamp: NaiveDateTime, value: f64) -> Sentence {
        let text = self
            .pattern
            .replace(TIME, &format_timestamp(&timestamp))
            .replace(USAGE, &self.format_usage(value));
        Sentence::new(text).expect("template has no newline and is non-empty")
    }

    /// One sentence per record; records must be strictly chronological.
    pub fn render_context(&self, records: &[LoadRecord]) -> Result<Vec<Sentence>, CodecError> {
        if let Some(i) = records
            .windows(2)
            .position(|w| w[1].timestamp() <= w[0].timestamp())
        {
            return Err(CodecError::NotChronological(i + 1));
        }
        Ok(records.iter().map(|r| self.render(r)).collect())
    }

    /// Matches the template's literal text exactly, treating any run of
    /// whitespace as a single space.
    pub fn parse_strict(&self, sentence: &str) -> Result<(NaiveDateTime, f64), CodecError> {
        let normalized = collapse_whitespace(sentence);
        let caps = self
            .matcher
            .captures(&normalized)
            .ok_or_else(|| CodecError::NoMatch(sentence.to_string()))?;
        let (mut time_text, mut usage_text) = ("", "");
        for (slot, group) in self.slots.iter().zip([1, 2]) {
            let text = caps.get(group).map_or("", |m| m.as_str());
            match slot {
                Slot::Time => time_text = text,
                Slot::Usage => usage_text = text,
            }
        }
        let timestamp = parse_timestamp(time_text).map_err(CodecError::BadTimestamp)?;
        let value = parse_number(usage_text).ok_or_else(|| CodecError::BadNumber(usage_text.into()))?;
        Ok((timestamp, value))
    }
}

fn number_token() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[0-9]+(?:\.[0-9]+)?").expect("valid regex"))
}

fn parse_number(text: &str) -> Option<f64> {
    let digits = text.strip_prefix('-').unwrap_or(text);
    let m = number_token().find(digits)?;
    if m.start() != 0 || m.end() != digits.len() {
        return None;
    }
    text.parse().ok()
}

/// Returns the rightmost decimal-number token of `sentence`.
///
/// A leading `-` counts as a sign only at the start of the text or after
/// whitespace, so the hyphens inside dates are never read as signs.
pub fn parse_lenient(sentence: &str) -> Result<f64, CodecError> {
    let m = number_token()
        .find_iter(sentence)
        .last()
        .ok_or_else(|| CodecError::NoNumber(sentence.to_string()))?;
    let before = &sentence[..m.start()];
    let negative = before
        .strip_suffix('-')
        .is_some_and(|b| b.chars().last().is_none_or(char::is_whitespace));
    let value: f64 = m
        .as_str()
        .parse()
        .map_err(|_| CodecError::BadNumber(m.as_str().into()))?;
    Ok(if negative { -value } else { value })
}

/// Renders `value` with exactly `decimals` fractional digits, rounding half
/// away from zero on its shortest round-trip decimal representation.
pub fn format_decimal(value: f64, decimals: u32) -> String {
    if !value.is_finite() {
        return value.to_string();
    }
    let shortest = format!("{}", value.abs());
    let (int_part, frac_part) = shortest.split_once('.').unwrap_or((&shortest, ""));
    let d = decimals as usize;

    let mut digits: Vec<u8> = int_part.bytes().collect();
    let frac = frac_part.as_bytes();
    digits.extend((0..d).map(|i| frac.get(i).copied().unwrap_or(b'0')));
    if frac.get(d).is_some_and(|&c| c >= b'5') {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, b'1');
                break;
            }
            i -= 1;
            if digits[i] == b'9' {
                digits[i] = b'0';
            } else {
                digits[i] += 1;
                break;
            }
        }
    }

    let split = digits.len() - d;
    let mut out = String::with_capacity(digits.len() + 2);
    if value.is_sign_negative() && digits.iter().any(|&c| c != b'0') {
        out.push('-');
    }
    out.push_str(std::str::from_utf8(&digits[..split]).expect("ascii digits"));
    if d > 0 {
        out.push('.');
        out.push_str(std::str::from_utf8(&digits[split..]).expect("ascii digits"));
    }
    out
}

/// The value whose canonical text is `format_decimal(value, decimals)`.
pub fn round_half_away(value: f64, decimals: u32) -> f64 {
    format_decimal(value, decimals)
        .parse()
        .expect("format_decimal produces a valid number")
}
