//! Global sequence alignment between markup text and extracted page tokens,
//! producing per-cell text bounding boxes.
//!
//! Alignment runs over non-whitespace characters only: whitespace differences
//! between markup and extracted text are ubiquitous and carry no spatial
//! meaning.

use crate::ingest::{Granularity, TokenSequence};
use crate::model::{BBox, TableAnnotation};
use serde::Serialize;
use thiserror::Error;

/// Needleman-Wunsch score parameters. Requires `matching > 0 >= mismatch, gap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignScores {
    pub matching: f64,
    pub mismatch: f64,
    pub gap: f64,
}

impl Default for AlignScores {
    fn default() -> Self {
        AlignScores {
            matching: 2.0,
            mismatch: -1.0,
            gap: -1.0,
        }
    }
}

impl AlignScores {
    pub fn is_valid(&self) -> bool {
        self.matching > 0.0 && self.mismatch <= 0.0 && self.gap <= 0.0
    }
}

/// A global alignment: crossing-free index pairs (aligned positions, whether
/// the symbols agree or not) and the total score.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub pairs: Vec<(usize, usize)>,
    pub score: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlignError {
    #[error("markup has text but the token stream is empty")]
    EmptyTokenStream,
    #[error("invalid score parameters: match must be positive, mismatch and gap non-positive")]
    InvalidScores,
}

/// Global Needleman-Wunsch alignment maximizing the total score.
///
/// Tie-breaking in the traceback is deterministic: diagonal (match or
/// mismatch) is preferred over consuming from `a`, which is preferred over
/// consuming from `b`. With `band = Some(w)` only cells within `w` of the
/// diagonal are explored (widened automatically to the length difference so
/// the corner stays reachable).
pub fn needleman_wunsch<T: PartialEq>(
    a: &[T],
    b: &[T],
    scores: &AlignScores,
    band: Option<usize>,
) -> Result<Alignment, AlignError> {
    if !scores.is_valid() {
        return Err(AlignError::InvalidScores);
    }
    let (la, lb) = (a.len(), b.len());
    let band = band.map(|w| w.max(la.abs_diff(lb)));
    let in_band = |i: usize, j: usize| band.is_none_or(|w| i.abs_diff(j) <= w);

    let width = lb + 1;
    let mut dp = vec![f64::NEG_INFINITY; (la + 1) * width];
    dp[0] = 0.0;
    for i in 1..=la {
        if in_band(i, 0) {
            dp[i * width] = i as f64 * scores.gap;
        }
    }
    for (j, slot) in dp.iter_mut().enumerate().take(lb + 1).skip(1) {
        if in_band(0, j) {
            *slot = j as f64 * scores.gap;
        }
    }
    for i in 1..=la {
        for j in 1..=lb {
            if !in_band(i, j) {
                continue;
            }
            let sub = if a[i - 1] == b[j - 1] {
                scores.matching
            } else {
                scores.mismatch
            };
            let mut best = dp[(i - 1) * width + j - 1] + sub;
            let up = dp[(i - 1) * width + j] + scores.gap;
            if up > best {
                best = up;
            }
            let left = dp[i * width + j - 1] + scores.gap;
            if left > best {
                best = left;
            }
            dp[i * width + j] = best;
        }
    }

    let mut pairs = Vec::new();
    let (mut i, mut j) = (la, lb);
    while i > 0 || j > 0 {
        let here = dp[i * width + j];
        if i > 0 && j > 0 {
            let sub = if a[i - 1] == b[j - 1] {
                scores.matching
            } else {
                scores.mismatch
            };
            if dp[(i - 1) * width + j - 1] + sub == here {
                pairs.push((i - 1, j - 1));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * width + j] + scores.gap == here {
            i -= 1;
            continue;
        }
        j -= 1;
    }
    pairs.reverse();
    Ok(Alignment {
        pairs,
        score: dp[la * width + lb],
    })
}

/// Outcome details of [`align_table_text`], recorded for quality control.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignReport {
    pub score: f64,
    /// Fraction of each cell's characters matched exactly; blank cells get 1.0.
    pub cell_match_fraction: Vec<f64>,
    /// Non-blank cells that received no text box.
    pub boxless_cells: Vec<usize>,
    /// Token characters left unmatched whose box lies inside the matched
    /// region of the table.
    pub unmatched_tokens_in_table: usize,
}

/// Aligns the table's whole character stream (cells in reading order) against
/// the token stream and assigns each non-blank cell the union of the boxes of
/// its exactly-matched characters.
///
/// Word-granularity tokens are exploded into characters that inherit the
/// word's box; unions are unchanged, so boxes degrade gracefully.
pub fn align_table_text(
    table: &TableAnnotation,
    tokens: &TokenSequence,
    scores: &AlignScores,
    band: Option<usize>,
) -> Result<(TableAnnotation, AlignReport), AlignError> {
    // Markup side: (char, owning cell), reading order, whitespace dropped.
    let mut cell_order: Vec<usize> = (0..table.cells.len()).collect();
    cell_order.sort_by_key(|&i| (table.cells[i].row_start, table.cells[i].col_start));
    let mut markup_chars: Vec<char> = Vec::new();
    let mut char_cell: Vec<usize> = Vec::new();
    for &idx in &cell_order {
        for ch in table.cells[idx].text.chars().filter(|c| !c.is_whitespace()) {
            markup_chars.push(ch);
            char_cell.push(idx);
        }
    }

    // Token side: one entry per non-whitespace character.
    let mut token_chars: Vec<char> = Vec::new();
    let mut token_boxes: Vec<BBox> = Vec::new();
    for token in &tokens.tokens {
        for ch in token.text.chars() {
            if !ch.is_whitespace() {
                token_chars.push(ch);
                token_boxes.push(token.bbox);
            }
        }
    }
    debug_assert!(
        tokens.granularity == Granularity::Word
            || tokens.tokens.iter().all(|t| t.text.chars().count() == 1)
    );

    if token_chars.is_empty() && !markup_chars.is_empty() {
        return Err(AlignError::EmptyTokenStream);
    }

    let alignment = needleman_wunsch(&markup_chars, &token_chars, scores, band)?;

    let mut out = table.clone();
    for cell in &mut out.cells {
        cell.text_box = None;
    }
    let mut matched_per_cell = vec![0usize; table.cells.len()];
    let mut chars_per_cell = vec![0usize; table.cells.len()];
    for &idx in &char_cell {
        chars_per_cell[idx] += 1;
    }
    let mut token_matched = vec![false; token_chars.len()];
    for &(mi, ti) in &alignment.pairs {
        if markup_chars[mi] != token_chars[ti] {
            continue;
        }
        token_matched[ti] = true;
        let cell_idx = char_cell[mi];
        matched_per_cell[cell_idx] += 1;
        let cell = &mut out.cells[cell_idx];
        cell.text_box = Some(match cell.text_box {
            Some(existing) => existing.union(&token_boxes[ti]),
            None => token_boxes[ti],
        });
    }

    let cell_match_fraction: Vec<f64> = (0..table.cells.len())
        .map(|i| {
            if chars_per_cell[i] == 0 {
                1.0
            } else {
                matched_per_cell[i] as f64 / chars_per_cell[i] as f64
            }
        })
        .collect();
    let boxless_cells: Vec<usize> = (0..table.cells.len())
        .filter(|&i| chars_per_cell[i] > 0 && matched_per_cell[i] == 0)
        .collect();

    let matched_region = BBox::union_all(
        token_boxes
            .iter()
            .zip(&token_matched)
            .filter(|(_, &m)| m)
            .map(|(b, _)| b),
    );
    let unmatched_tokens_in_table = match matched_region {
        Some(region) => token_boxes
            .iter()
            .zip(&token_matched)
            .filter(|(b, &m)| !m && b.intersection_area(&region) > 0.0)
            .count(),
        None => 0,
    };

    let report = AlignReport {
        score: alignment.score,
        cell_match_fraction,
        boxless_cells,
        unmatched_tokens_in_table,
    };
    Ok((out, report))
}
