//! Canonicalization: header inference, projected-row-header labeling, and
//! oversegmentation-correcting merges, plus the oversegmentation survey.
//!
//! The correction assumes header oversegmentation is vertical (a multi-row
//! cell annotated as stacked cells) while projected-row-header
//! oversegmentation is horizontal, and merges accordingly.

use crate::model::{Cell, GridError, TableAnnotation};
use serde::Serialize;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CanonError {
    #[error("survey requires at least five rows, table has {0}")]
    TooFewRows(usize),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// What canonicalization did to a table.
///
/// `changed` compares the logical structure (spans, texts, flags) of input
/// and output; counters can be non-zero with `changed == false` when a split
/// and a merge cancel out, as happens for an already-merged blank stub head.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CanonReport {
    pub merges_performed: usize,
    pub header_rows_added: usize,
    /// Rows matching the projected-row-header rule, after labeling.
    pub prh_rows: Vec<usize>,
    /// Blank spanning cells split into grid cells.
    pub blank_splits: usize,
    /// Whether the first column below the header joined the row header.
    pub row_header_added: bool,
    /// Header extension would have consumed every row; extension was rolled
    /// back and the table left header-inference-free.
    pub uncanonicalizable: bool,
    pub changed: bool,
}

/// Span, text, and flags of one cell: the parts compared to decide whether
/// canonicalization changed anything. Box fields are ignored since they are
/// recomputed downstream.
type CellSignature = (usize, usize, usize, usize, String, bool, bool, bool);

fn structure_signature(table: &TableAnnotation) -> Vec<CellSignature> {
    let mut sig: Vec<_> = table
        .cells
        .iter()
        .map(|c| {
            (
                c.row_start,
                c.row_end,
                c.col_start,
                c.col_end,
                c.text.clone(),
                c.is_column_header,
                c.is_projected_row_header,
                c.is_row_header,
            )
        })
        .collect();
    sig.sort();
    sig
}

fn join_texts<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    parts
        .into_iter()
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

struct Worker {
    n_rows: usize,
    n_cols: usize,
    cells: Vec<Cell>,
}

impl Worker {
    fn grid(&self) -> crate::model::Grid {
        crate::model::build_grid(&self.cells, self.n_rows, self.n_cols)
            .expect("canonicalization preserves tiling")
    }

    fn header_rows(&self) -> BTreeSet<usize> {
        let mut rows = BTreeSet::new();
        for cell in &self.cells {
            if cell.is_column_header {
                rows.extend(cell.row_start..=cell.row_end);
            }
        }
        rows
    }

    /// A column is anchored when some non-blank header cell spans exactly it.
    fn unanchored_column(&self) -> Option<usize> {
        (0..self.n_cols).find(|&col| {
            !self.cells.iter().any(|c| {
                c.is_column_header && !c.is_blank() && c.col_start == col && c.col_end == col
            })
        })
    }

    fn flag_row_as_header(&mut self, row: usize) {
        for cell in &mut self.cells {
            if cell.intersects_row(row) {
                cell.is_column_header = true;
            }
        }
    }

    /// Split every blank spanning cell into 1x1 blank grid cells.
    fn split_blank_spanning_cells(&mut self) -> usize {
        let mut splits = 0;
        let mut out = Vec::with_capacity(self.cells.len());
        for cell in self.cells.drain(..) {
            if cell.is_blank() && cell.is_spanning() {
                splits += 1;
                for r in cell.row_start..=cell.row_end {
                    for c in cell.col_start..=cell.col_end {
                        let mut piece = Cell::at(r, c, "");
                        piece.is_column_header = cell.is_column_header;
                        piece.is_row_header = cell.is_row_header;
                        out.push(piece);
                    }
                }
            } else {
                out.push(cell);
            }
        }
        self.cells = out;
        splits
    }

    /// Replaces the cells at `indices` (first one is the survivor's identity)
    /// with one merged cell; texts join in the given order.
    fn merge_cells(&mut self, indices: &[usize]) {
        debug_assert!(indices.len() >= 2);
        let row_start = indices
            .iter()
            .map(|&i| self.cells[i].row_start)
            .min()
            .unwrap();
        let row_end = indices
            .iter()
            .map(|&i| self.cells[i].row_end)
            .max()
            .unwrap();
        let col_start = indices
            .iter()
            .map(|&i| self.cells[i].col_start)
            .min()
            .unwrap();
        let col_end = indices
            .iter()
            .map(|&i| self.cells[i].col_end)
            .max()
            .unwrap();
        let text = join_texts(indices.iter().map(|&i| self.cells[i].text.as_str()));
        let text_box = crate::model::BBox::union_all(
            indices
                .iter()
                .filter_map(|&i| self.cells[i].text_box.as_ref()),
        );
        let mut merged = Cell::spanning(row_start, row_end, col_start, col_end, &text);
        merged.is_column_header = indices.iter().any(|&i| self.cells[i].is_column_header);
        merged.is_projected_row_header = indices
            .iter()
            .any(|&i| self.cells[i].is_projected_row_header);
        merged.is_row_header = indices.iter().any(|&i| self.cells[i].is_row_header);
        merged.text_box = if merged.is_blank() { None } else { text_box };

        let dead: BTreeSet<usize> = indices.iter().copied().collect();
        let mut out = Vec::with_capacity(self.cells.len() - indices.len() + 1);
        for (i, cell) in self.cells.drain(..).enumerate() {
            if i == *indices.first().unwrap() {
                out.push(merged.clone());
            } else if !dead.contains(&i) {
                out.push(cell);
            }
        }
        self.cells = out;
    }

    /// Cell indices sorted by grid position for deterministic scans.
    fn scan_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.cells.len()).collect();
        order.sort_by_key(|&i| {
            let c = &self.cells[i];
            (c.row_start, c.col_start, c.row_end, c.col_end)
        });
        order
    }

    /// Cells occupying the strip directly below `idx` across its column span,
    /// or `None` when the strip is absent or would not merge to a rectangle.
    fn strip_below(&self, idx: usize) -> Option<Vec<usize>> {
        let cell = &self.cells[idx];
        let next = cell.row_end + 1;
        if next >= self.n_rows {
            return None;
        }
        let grid = self.grid();
        let mut strip = Vec::new();
        for col in cell.col_start..=cell.col_end {
            let occ = grid.cell_at(next, col);
            if !strip.contains(&occ) {
                strip.push(occ);
            }
        }
        let height = self.cells[strip[0]].row_end;
        for &occ in &strip {
            let c = &self.cells[occ];
            if c.row_start != next
                || c.row_end != height
                || c.col_start < cell.col_start
                || c.col_end > cell.col_end
            {
                return None;
            }
        }
        Some(strip)
    }

    /// Symmetric to [`strip_below`], scanning the strip directly above.
    fn strip_above(&self, idx: usize) -> Option<Vec<usize>> {
        let cell = &self.cells[idx];
        if cell.row_start == 0 {
            return None;
        }
        let prev = cell.row_start - 1;
        let grid = self.grid();
        let mut strip = Vec::new();
        for col in cell.col_start..=cell.col_end {
            let occ = grid.cell_at(prev, col);
            if !strip.contains(&occ) {
                strip.push(occ);
            }
        }
        let top = self.cells[strip[0]].row_start;
        for &occ in &strip {
            let c = &self.cells[occ];
            if c.row_end != prev
                || c.row_start != top
                || c.col_start < cell.col_start
                || c.col_end > cell.col_end
            {
                return None;
            }
        }
        Some(strip)
    }
}

/// Runs the canonicalization algorithm: split blank spanning cells, infer
/// column-header rows, label projected row headers, infer the row-header
/// column start, then merge oversegmented cells. The output passes the grid
/// tiling check and the merge phase runs to a fixpoint, making the whole
/// transform idempotent.
pub fn canonicalize(table: &TableAnnotation) -> Result<(TableAnnotation, CanonReport), CanonError> {
    table.validate_grid()?;
    let mut report = CanonReport::default();
    let mut w = Worker {
        n_rows: table.n_rows,
        n_cols: table.n_cols,
        cells: table.cells.clone(),
    };

    // Split every blank spanning cell into blank grid cells.
    report.blank_splits = w.split_blank_spanning_cells();

    let header_rows_before = w.header_rows().len();

    // If the first row starts with a blank cell, add it to the column header.
    if w.n_rows > 0 && w.n_cols > 0 {
        let first = w.grid().cell_at(0, 0);
        if w.cells[first].is_blank() {
            w.flag_row_as_header(0);
        }
    }

    // Extend a non-empty header until every column is anchored by a complete
    // cell: non-blank and spanning exactly that column. Extension that would
    // consume every row is rolled back instead of producing a header-only
    // table.
    if !w.header_rows().is_empty() {
        let snapshot: Vec<bool> = w.cells.iter().map(|c| c.is_column_header).collect();
        loop {
            if w.unanchored_column().is_none() {
                break;
            }
            let next = w.header_rows().last().map_or(0, |r| r + 1);
            if next + 1 >= w.n_rows {
                for (cell, &flag) in w.cells.iter_mut().zip(&snapshot) {
                    cell.is_column_header = flag;
                }
                report.uncanonicalizable = true;
                break;
            }
            w.flag_row_as_header(next);
        }
    }
    report.header_rows_added = w.header_rows().len().saturating_sub(header_rows_before);

    // Label projected row headers: a non-header row whose only non-blank cell
    // occupies the first column. The cell must be single-row, otherwise the
    // later whole-row merge would not be grid-preserving.
    let header_rows = w.header_rows();
    let mut prh_rows = Vec::new();
    for row in 0..w.n_rows {
        if header_rows.contains(&row) {
            continue;
        }
        if let Some(cell) = prh_candidate(&w.cells, row) {
            w.cells[cell].is_projected_row_header = true;
            prh_rows.push(row);
        }
    }
    report.prh_rows = prh_rows.clone();

    // If any first-column cell below the header is a spanning cell or blank,
    // the column below the header joins the row header. Projected row headers
    // are already claimed and stay out of it.
    let first_col_below_header = |w: &Worker| -> Vec<usize> {
        let header_rows = w.header_rows();
        (0..w.cells.len())
            .filter(|&i| {
                let c = &w.cells[i];
                c.col_start == 0
                    && !c.is_column_header
                    && !c.is_projected_row_header
                    && !header_rows.contains(&c.row_start)
            })
            .collect()
    };
    let candidates = first_col_below_header(&w);
    if candidates
        .iter()
        .any(|&i| w.cells[i].is_blank() || w.cells[i].is_spanning())
    {
        for &i in &candidates {
            w.cells[i].is_row_header = true;
        }
        report.row_header_added = true;
    }

    // Merge phase. The three column-header merges feed each other (absorbing
    // a blank strip can expose a same-span stack), so they iterate together
    // until nothing applies.
    loop {
        let mut merged_any = false;

        // stacked header cells spanning the exact same columns
        'stacked: loop {
            for idx in w.scan_order() {
                let cell = &w.cells[idx];
                if !cell.is_column_header || cell.row_end + 1 >= w.n_rows {
                    continue;
                }
                let below = w.grid().cell_at(cell.row_end + 1, cell.col_start);
                let other = &w.cells[below];
                if other.is_column_header
                    && other.row_start == cell.row_end + 1
                    && other.col_start == cell.col_start
                    && other.col_end == cell.col_end
                {
                    w.merge_cells(&[idx, below]);
                    report.merges_performed += 1;
                    merged_any = true;
                    continue 'stacked;
                }
            }
            break;
        }

        // blank strips below a header cell, when fully blank and in the header
        'down: loop {
            for idx in w.scan_order() {
                if !w.cells[idx].is_column_header {
                    continue;
                }
                let Some(strip) = w.strip_below(idx) else {
                    continue;
                };
                if strip
                    .iter()
                    .all(|&i| w.cells[i].is_blank() && w.cells[i].is_column_header)
                {
                    report.merges_performed += strip.len();
                    let mut indices = vec![idx];
                    indices.extend(strip);
                    w.merge_cells(&indices);
                    merged_any = true;
                    continue 'down;
                }
            }
            break;
        }

        // blank strips above a header cell
        'up: loop {
            for idx in w.scan_order() {
                if !w.cells[idx].is_column_header {
                    continue;
                }
                let Some(strip) = w.strip_above(idx) else {
                    continue;
                };
                if strip.iter().all(|&i| w.cells[i].is_blank()) {
                    report.merges_performed += strip.len();
                    // text order is top-to-bottom; blanks contribute nothing
                    let mut indices = strip;
                    indices.push(idx);
                    w.merge_cells(&indices);
                    merged_any = true;
                    continue 'up;
                }
            }
            break;
        }

        if !merged_any {
            break;
        }
    }

    // Merge every projected-row-header row into a single cell.
    for &row in &prh_rows {
        let grid = w.grid();
        let mut indices: Vec<usize> = (0..w.n_cols).map(|c| grid.cell_at(row, c)).collect();
        indices.dedup();
        if indices.len() < 2 {
            continue;
        }
        if indices.iter().any(|&i| w.cells[i].row_span() != 1) {
            continue;
        }
        report.merges_performed += indices.len() - 1;
        w.merge_cells(&indices);
        // the merged full-width cell carries the label
        let grid = w.grid();
        let idx = grid.cell_at(row, 0);
        w.cells[idx].is_projected_row_header = true;
    }

    // Row header: recursively merge each cell with blank strips below it.
    'row_header: loop {
        for idx in w.scan_order() {
            if !w.cells[idx].is_row_header {
                continue;
            }
            let Some(strip) = w.strip_below(idx) else {
                continue;
            };
            if strip.iter().all(|&i| {
                w.cells[i].is_blank()
                    && !w.cells[i].is_column_header
                    && !w.cells[i].is_projected_row_header
            }) {
                report.merges_performed += strip.len();
                let mut indices = vec![idx];
                indices.extend(strip);
                w.merge_cells(&indices);
                continue 'row_header;
            }
        }
        break;
    }

    let mut out = table.clone();
    out.cells = w.cells;
    debug_assert!(out.validate_grid().is_ok());
    report.changed = structure_signature(table) != structure_signature(&out);
    if !report.changed {
        // structurally a no-op: hand back the input, boxes and all
        return Ok((table.clone(), report));
    }
    // Merges never change the grid dimensions, so row, column, and table
    // boxes stay valid; per-cell grid boxes of touched cells are stale and
    // a regrid pass rebuilds them from the preserved bands.
    for cell in &mut out.cells {
        cell.grid_box = None;
    }
    Ok((out, report))
}

/// The single non-blank, single-row cell occupying the first column of `row`,
/// when the rest of the row is blank.
fn prh_candidate(cells: &[Cell], row: usize) -> Option<usize> {
    let mut non_blank = None;
    for (i, cell) in cells.iter().enumerate() {
        if !cell.intersects_row(row) || cell.is_blank() {
            continue;
        }
        if non_blank.is_some() {
            return None;
        }
        non_blank = Some(i);
    }
    let idx = non_blank?;
    let cell = &cells[idx];
    (cell.col_start == 0 && cell.row_span() == 1).then_some(idx)
}

/// Detects projected-row-header rows.
///
/// Normal mode applies the labeling rule below the annotated column header.
/// Survey mode ignores header annotations entirely: it requires at least five
/// rows, skips the first four, and drops any trailing run of qualifying rows
/// (likely footers).
pub fn detect_prh(table: &TableAnnotation, survey_mode: bool) -> Result<Vec<usize>, CanonError> {
    table.validate_grid()?;
    if !survey_mode {
        let header_rows: BTreeSet<usize> = table.header_rows().into_iter().collect();
        return Ok((0..table.n_rows)
            .filter(|r| !header_rows.contains(r))
            .filter(|&r| prh_candidate(&table.cells, r).is_some())
            .collect());
    }
    if table.n_rows < 5 {
        return Err(CanonError::TooFewRows(table.n_rows));
    }
    let qualifies: Vec<bool> = (0..table.n_rows)
        .map(|r| prh_candidate(&table.cells, r).is_some())
        .collect();
    let mut first_trailing = table.n_rows;
    while first_trailing > 0 && qualifies[first_trailing - 1] {
        first_trailing -= 1;
    }
    Ok((4..first_trailing).filter(|&r| qualifies[r]).collect())
}

/// Whether a survey-detected projected row header is oversegmented: its row
/// contains a blank cell.
fn row_contains_blank(table: &TableAnnotation, row: usize) -> bool {
    table
        .cells
        .iter()
        .any(|c| c.intersects_row(row) && c.is_blank())
}

/// Aggregate oversegmentation statistics over a corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SurveyStats {
    pub investigated: usize,
    pub with_prh: usize,
    pub oversegmented: usize,
    pub pct_of_prh: f64,
    pub pct_of_investigated: f64,
}

impl SurveyStats {
    fn finalize(mut self) -> Self {
        self.pct_of_prh = if self.with_prh == 0 {
            0.0
        } else {
            100.0 * self.oversegmented as f64 / self.with_prh as f64
        };
        self.pct_of_investigated = if self.investigated == 0 {
            0.0
        } else {
            100.0 * self.oversegmented as f64 / self.investigated as f64
        };
        self
    }

    /// Associative merge of partial counts.
    pub fn combine(&self, other: &SurveyStats) -> SurveyStats {
        SurveyStats {
            investigated: self.investigated + other.investigated,
            with_prh: self.with_prh + other.with_prh,
            oversegmented: self.oversegmented + other.oversegmented,
            ..Default::default()
        }
        .finalize()
    }
}

/// Surveys a corpus for oversegmented projected row headers, following the
/// header-agnostic detection rule. Tables with fewer than five rows are
/// excluded from the investigated count.
pub fn survey_oversegmentation<'a, I>(tables: I) -> SurveyStats
where
    I: IntoIterator<Item = &'a TableAnnotation>,
{
    let mut stats = SurveyStats::default();
    for table in tables {
        let detected = match detect_prh(table, true) {
            Ok(rows) => rows,
            Err(CanonError::TooFewRows(_)) => continue,
            Err(CanonError::Grid(_)) => continue,
        };
        stats.investigated += 1;
        if detected.is_empty() {
            continue;
        }
        stats.with_prh += 1;
        if detected.iter().any(|&r| row_contains_blank(table, r)) {
            stats.oversegmented += 1;
        }
    }
    stats.finalize()
}
