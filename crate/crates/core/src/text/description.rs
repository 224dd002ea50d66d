//! Five-paragraph scene descriptions: one general paragraph followed by one
//! paragraph per horizontal band.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Region;

/// Order in which the four regional paragraphs appear in a transcript.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParagraphOrder {
    #[default]
    LeftToRight,
    RightToLeft,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneDescription {
    pub general: Vec<String>,
    /// Indexed by [`Region::index`].
    pub regional: [Vec<String>; 4],
}

impl SceneDescription {
    pub fn region(&self, r: Region) -> &[String] {
        &self.regional[r.index()]
    }

    /// All five paragraphs, general first, then L, ML, MR, R.
    pub fn paragraphs(&self) -> impl Iterator<Item = &[String]> {
        std::iter::once(self.general.as_slice()).chain(self.regional.iter().map(Vec::as_slice))
    }

    /// Swaps L↔R and ML↔MR.
    pub fn mirrored(&self) -> Self {
        let mut regional = self.regional.clone();
        regional.reverse();
        SceneDescription {
            general: self.general.clone(),
            regional,
        }
    }

    /// Dash-paragraph transcript, regional paragraphs left to right.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for para in self.paragraphs() {
            out.push_str("- ");
            let sentences: Vec<String> = para.iter().map(|s| format!("{s}.")).collect();
            out.push_str(&sentences.join(" "));
            out.push('\n');
        }
        out
    }

    /// Transcript with the regional paragraphs in `order`.
    pub fn to_text_ordered(&self, order: ParagraphOrder) -> String {
        match order {
            ParagraphOrder::LeftToRight => self.to_text(),
            ParagraphOrder::RightToLeft => self.mirrored().to_text(),
        }
    }
}

/// Byte offsets of dashes that open a paragraph: the first non-blank
/// character of a line, or a dash after whitespace that follows a sentence
/// terminator. Hyphens inside words ("night-time") never qualify.
fn paragraph_starts(text: &str) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut prev_non_ws: Option<char> = None;
    let mut line_start = true;
    let mut prev_was_ws = true;
    for (i, ch) in text.char_indices() {
        if ch == '\n' {
            line_start = true;
            prev_was_ws = true;
            continue;
        }
        if ch.is_whitespace() {
            prev_was_ws = true;
            continue;
        }
        if ch == '-' && prev_was_ws && (line_start || matches!(prev_non_ws, Some('.' | '!' | '?'))) {
            starts.push(i);
        }
        line_start = false;
        prev_was_ws = false;
        prev_non_ws = Some(ch);
    }
    starts
}

fn split_sentences(paragraph: &str) -> Vec<String> {
    paragraph
        .split(['.', '!', '?'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn parse_description(text: &str, order: ParagraphOrder) -> Result<SceneDescription> {
    let starts = paragraph_starts(text);
    if starts.len() != 5 {
        return Err(Error::Parse(format!("expected 5 paragraphs, got {}", starts.len())));
    }
    let mut paragraphs = Vec::with_capacity(5);
    for (k, &s) in starts.iter().enumerate() {
        let end = starts.get(k + 1).copied().unwrap_or(text.len());
        let body = &text[s + 1..end];
        let sentences = split_sentences(body);
        if sentences.is_empty() {
            return Err(Error::Parse(format!("paragraph {} is empty", k + 1)));
        }
        paragraphs.push(sentences);
    }
    let general = paragraphs.remove(0);
    let mut regional: [Vec<String>; 4] = Default::default();
    for (k, p) in paragraphs.into_iter().enumerate() {
        let slot = match order {
            ParagraphOrder::LeftToRight => k,
            ParagraphOrder::RightToLeft => 3 - k,
        };
        regional[slot] = p;
    }
    Ok(SceneDescription { general, regional })
}
