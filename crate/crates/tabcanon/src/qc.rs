//! Quality control: the four automated filters with measurable pass/fail
//! guarantees — row/column overlap, mean cell edit distance, mean word
//! containment, and object count.

use crate::ingest::TokenSequence;
use crate::model::TableAnnotation;
use crate::spatial::assign_tokens_to_cells;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QcError {
    #[error("completed boxes required; run completion first")]
    MissingBoxes,
    #[error(transparent)]
    Grid(#[from] crate::model::GridError),
    #[error(transparent)]
    Spatial(#[from] crate::spatial::SpatialError),
}

/// Filter thresholds; defaults are the published values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QcThresholds {
    pub max_edit_distance: f64,
    pub min_word_containment: f64,
    pub max_objects: usize,
}

impl Default for QcThresholds {
    fn default() -> Self {
        QcThresholds {
            max_edit_distance: 0.05,
            min_word_containment: 0.9,
            max_objects: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Overlap,
    EditDistance,
    WordContainment,
    ObjectCount,
}

/// The four measurements and the verdict they force.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QcReport {
    pub overlap_ok: bool,
    pub mean_cell_edit_distance: f64,
    pub mean_word_containment: f64,
    /// No word intersected the table box; containment passed vacuously.
    pub word_containment_vacuous: bool,
    pub object_count: usize,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", content = "reasons", rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject(Vec<RejectReason>),
}

impl QcReport {
    pub fn accepted(&self) -> bool {
        matches!(self.verdict, Verdict::Accept)
    }
}

/// True iff no two row boxes overlap with positive area and no two column
/// boxes do. Uses pre-dilation boxes: dilation deliberately erases the gaps
/// this filter must see.
pub fn check_overlap(table: &TableAnnotation) -> Result<bool, QcError> {
    let (rows, columns) = match (&table.rows, &table.columns) {
        (Some(r), Some(c)) => (r, c),
        _ => return Err(QcError::MissingBoxes),
    };
    let overlapping = |boxes: &[crate::model::BBox]| {
        for (i, a) in boxes.iter().enumerate() {
            for b in &boxes[i + 1..] {
                if a.intersection_area(b) > 0.0 {
                    return true;
                }
            }
        }
        false
    };
    Ok(!overlapping(rows) && !overlapping(columns))
}

/// Levenshtein distance over characters.
fn levenshtein(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut curr = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            curr[j + 1] = sub.min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

fn non_whitespace_chars(text: &str) -> Vec<char> {
    text.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Normalized edit distance between two strings' non-whitespace characters:
/// distance divided by the longer length, 0.0 when both are empty.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let a = non_whitespace_chars(a);
    let b = non_whitespace_chars(b);
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(&a, &b) as f64 / longest as f64
}

/// Mean over all cells of the normalized edit distance between the annotated
/// text and the text of the tokens assigned to the cell's grid box.
pub fn cell_edit_distance(table: &TableAnnotation, tokens: &TokenSequence) -> Result<f64, QcError> {
    if table.cells.is_empty() {
        return Ok(0.0);
    }
    let assigned = assign_tokens_to_cells(table, tokens)?;
    let mut total = 0.0;
    for (cell, token_ids) in table.cells.iter().zip(&assigned) {
        let extracted: String = token_ids
            .iter()
            .map(|&t| tokens.tokens[t].text.as_str())
            .collect();
        total += normalized_edit_distance(&cell.text, &extracted);
    }
    Ok(total / table.cells.len() as f64)
}

/// Mean over every word intersecting the table box of the overlap fraction
/// with its most-overlapping grid cell. Returns `(ratio, vacuous)`; with no
/// in-table words the ratio is 1.0 and `vacuous` is set.
pub fn word_containment(
    table: &TableAnnotation,
    words: &TokenSequence,
) -> Result<(f64, bool), QcError> {
    let table_box = table.table_box.ok_or(QcError::MissingBoxes)?;
    let grid_boxes: Vec<crate::model::BBox> = table
        .cells
        .iter()
        .map(|c| c.grid_box.ok_or(QcError::MissingBoxes))
        .collect::<Result<_, _>>()?;
    let mut total = 0.0;
    let mut count = 0usize;
    for word in &words.tokens {
        if word.bbox.intersection_area(&table_box) <= 0.0 {
            continue;
        }
        let best = grid_boxes
            .iter()
            .map(|g| word.bbox.overlap_fraction(g))
            .fold(0.0f64, f64::max);
        total += best;
        count += 1;
    }
    if count == 0 {
        Ok((1.0, true))
    } else {
        Ok((total / count as f64, false))
    }
}

/// Number of objects the table would emit: the table itself, one per row and
/// column, the column header if any, one per projected-row-header row, and
/// one per spanning cell.
pub fn count_objects(table: &TableAnnotation) -> usize {
    1 + table.n_rows
        + table.n_cols
        + usize::from(!table.header_rows().is_empty())
        + table.prh_rows().len()
        + table.spanning_cells().len()
}

/// Runs all four filters. The verdict is a pure function of the four
/// measurements against the thresholds.
pub fn run_qc(
    table: &TableAnnotation,
    words: &TokenSequence,
    thresholds: &QcThresholds,
) -> Result<QcReport, QcError> {
    let overlap_ok = check_overlap(table)?;
    let mean_cell_edit_distance = cell_edit_distance(table, words)?;
    let (mean_word_containment, word_containment_vacuous) = word_containment(table, words)?;
    let object_count = count_objects(table);

    let mut reasons = Vec::new();
    if !overlap_ok {
        reasons.push(RejectReason::Overlap);
    }
    if mean_cell_edit_distance > thresholds.max_edit_distance {
        reasons.push(RejectReason::EditDistance);
    }
    if mean_word_containment < thresholds.min_word_containment {
        reasons.push(RejectReason::WordContainment);
    }
    if object_count > thresholds.max_objects {
        reasons.push(RejectReason::ObjectCount);
    }
    let verdict = if reasons.is_empty() {
        Verdict::Accept
    } else {
        Verdict::Reject(reasons)
    };
    Ok(QcReport {
        overlap_ok,
        mean_cell_edit_distance,
        mean_word_containment,
        word_containment_vacuous,
        object_count,
        verdict,
    })
}
