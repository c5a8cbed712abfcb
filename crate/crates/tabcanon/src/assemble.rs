//! Assembly of detected objects into a logical table: same-class conflict
//! resolution (suppression plus row/column boundary snapping) followed by
//! conversion of the surviving objects into a grid-structured annotation,
//! with membership decided by majority box overlap.

use crate::ingest::{Granularity, TokenSequence};
use crate::model::{AnnotatedObject, BBox, Cell, ObjectCategory, TableAnnotation};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AssembleError {
    #[error("no table object present")]
    NoTableObject,
    #[error("degenerate structure: zero rows or zero columns after conflict resolution")]
    DegenerateStructure,
}

/// Per-category child-overlap thresholds and the rectangle-closure floor for
/// spanning cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssembleConfig {
    /// A child belongs to a parent when this fraction of its area overlaps.
    pub header_child_overlap: f64,
    pub prh_child_overlap: f64,
    pub spanning_child_overlap: f64,
    /// Same-class rows or columns with at least this mutual overlap are
    /// suppressed rather than snapped.
    pub band_suppress_overlap: f64,
    /// Every grid cell inside a rectangularized span must overlap the
    /// spanning object by at least this fraction, or the object is dropped.
    pub spanning_rect_min_overlap: f64,
}

impl Default for AssembleConfig {
    fn default() -> Self {
        AssembleConfig {
            header_child_overlap: 0.5,
            prh_child_overlap: 0.5,
            spanning_child_overlap: 0.5,
            band_suppress_overlap: 0.5,
            spanning_rect_min_overlap: 0.25,
        }
    }
}

/// Outcome of conflict resolution: surviving objects (rows and columns with
/// snapped boundaries) and everything suppressed.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub objects: Vec<AnnotatedObject>,
    pub suppressed: Vec<AnnotatedObject>,
}

/// Category, then descending confidence, then box coordinates: a total order
/// making resolution independent of input ordering.
fn object_order(a: &AnnotatedObject, b: &AnnotatedObject) -> std::cmp::Ordering {
    a.category
        .cmp(&b.category)
        .then(b.score.total_cmp(&a.score))
        .then(a.bbox.x_min.total_cmp(&b.bbox.x_min))
        .then(a.bbox.y_min.total_cmp(&b.bbox.y_min))
        .then(a.bbox.x_max.total_cmp(&b.bbox.x_max))
        .then(a.bbox.y_max.total_cmp(&b.bbox.y_max))
}

/// Suppresses same-class objects claiming the same children and snaps
/// residual row/column overlap at the overlap midline. Processing order is
/// descending confidence with a category-then-box tie-break, so the result
/// does not depend on the input ordering.
pub fn resolve_conflicts(objects: &[AnnotatedObject], config: &AssembleConfig) -> Resolution {
    let mut sorted: Vec<AnnotatedObject> = objects.to_vec();
    sorted.sort_by(object_order);

    let mut kept: Vec<AnnotatedObject> = Vec::new();
    let mut suppressed: Vec<AnnotatedObject> = Vec::new();

    // exactly one table (or table-rotated) object survives: the most confident
    let mut table_seen = false;
    for obj in sorted.iter().filter(|o| {
        matches!(
            o.category,
            ObjectCategory::Table | ObjectCategory::TableRotated
        )
    }) {
        if table_seen {
            suppressed.push(obj.clone());
        } else {
            kept.push(obj.clone());
            table_seen = true;
        }
    }

    // rows and columns: suppress near-duplicates, snap the rest
    let mut rows = resolve_bands(
        &sorted,
        ObjectCategory::TableRow,
        config.band_suppress_overlap,
        &mut suppressed,
    );
    snap_bands(
        &mut rows,
        |b| (b.y_min, b.y_max),
        |b, lo, hi| {
            b.y_min = lo;
            b.y_max = hi;
        },
    );
    let mut columns = resolve_bands(
        &sorted,
        ObjectCategory::TableColumn,
        config.band_suppress_overlap,
        &mut suppressed,
    );
    snap_bands(
        &mut columns,
        |b| (b.x_min, b.x_max),
        |b, lo, hi| {
            b.x_min = lo;
            b.x_max = hi;
        },
    );

    // headers and projected row headers: a row can have only one parent of
    // each class
    let row_boxes: Vec<BBox> = rows.iter().map(|o| o.bbox).collect();
    for (category, threshold) in [
        (
            ObjectCategory::TableColumnHeader,
            config.header_child_overlap,
        ),
        (
            ObjectCategory::TableProjectedRowHeader,
            config.prh_child_overlap,
        ),
    ] {
        let mut claimed = vec![false; row_boxes.len()];
        for obj in sorted.iter().filter(|o| o.category == category) {
            let children: Vec<usize> = row_boxes
                .iter()
                .enumerate()
                .filter(|(_, r)| r.overlap_fraction(&obj.bbox) >= threshold)
                .map(|(i, _)| i)
                .collect();
            if children.iter().any(|&i| claimed[i]) {
                suppressed.push(obj.clone());
            } else {
                for &i in &children {
                    claimed[i] = true;
                }
                kept.push(obj.clone());
            }
        }
    }

    // spanning cells: conflict when two of them claim the same grid cell
    let col_boxes: Vec<BBox> = columns.iter().map(|o| o.bbox).collect();
    let grid_cell = |i: usize, j: usize| {
        BBox::new(
            col_boxes[j].x_min,
            row_boxes[i].y_min,
            col_boxes[j].x_max,
            row_boxes[i].y_max,
        )
    };
    let mut claimed = vec![false; row_boxes.len() * col_boxes.len()];
    for obj in sorted
        .iter()
        .filter(|o| o.category == ObjectCategory::TableSpanningCell)
    {
        let mut children = Vec::new();
        for i in 0..row_boxes.len() {
            for j in 0..col_boxes.len() {
                if grid_cell(i, j).overlap_fraction(&obj.bbox) >= config.spanning_child_overlap {
                    children.push(i * col_boxes.len() + j);
                }
            }
        }
        if children.iter().any(|&c| claimed[c]) {
            suppressed.push(obj.clone());
        } else {
            for &c in &children {
                claimed[c] = true;
            }
            kept.push(obj.clone());
        }
    }

    kept.extend(rows);
    kept.extend(columns);
    kept.sort_by(object_order);
    Resolution {
        objects: kept,
        suppressed,
    }
}

/// Keeps bands in descending confidence, dropping any that mostly duplicate
/// an already-kept band; returns them sorted by position.
fn resolve_bands(
    sorted: &[AnnotatedObject],
    category: ObjectCategory,
    suppress_overlap: f64,
    suppressed: &mut Vec<AnnotatedObject>,
) -> Vec<AnnotatedObject> {
    let mut kept: Vec<AnnotatedObject> = Vec::new();
    for obj in sorted.iter().filter(|o| o.category == category) {
        let duplicate = kept
            .iter()
            .any(|k| obj.bbox.overlap_fraction(&k.bbox) >= suppress_overlap);
        if duplicate {
            suppressed.push(obj.clone());
        } else {
            kept.push(obj.clone());
        }
    }
    kept.sort_by(|a, b| {
        a.bbox
            .y_min
            .total_cmp(&b.bbox.y_min)
            .then(a.bbox.x_min.total_cmp(&b.bbox.x_min))
            .then(a.bbox.y_max.total_cmp(&b.bbox.y_max))
    });
    kept
}

/// Snaps residual overlap between adjacent bands to the overlap midline.
fn snap_bands(
    bands: &mut [AnnotatedObject],
    extent: impl Fn(&BBox) -> (f64, f64),
    set_extent: impl Fn(&mut BBox, f64, f64),
) {
    for i in 1..bands.len() {
        let (prev_lo, prev_hi) = extent(&bands[i - 1].bbox);
        let (lo, hi) = extent(&bands[i].bbox);
        if prev_hi > lo {
            let mid = (prev_hi + lo) / 2.0;
            set_extent(&mut bands[i - 1].bbox, prev_lo, mid);
            set_extent(&mut bands[i].bbox, mid, hi);
        }
    }
}

/// Diagnostics from assembly; structural oddities are reported, never
/// silently repaired.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssembleReport {
    pub suppressed: Vec<AnnotatedObject>,
    /// Spanning objects dropped during grid placement (empty coverage, weak
    /// rectangle closure, or collision with an earlier claim).
    pub spanning_rejected: usize,
    /// Projected-row-header claims on rows already inside the column header.
    pub prh_in_header: usize,
    /// Vertically adjacent same-span header cells in the output; a detector
    /// may emit oversegmented structure, and callers chain canonicalization
    /// explicitly.
    pub stacked_same_span: usize,
}

/// Converts a conflict-free bag of objects plus page tokens into a logical
/// table: rows sorted by y, columns by x, grid cells from their
/// intersections, header/projected-row-header/spanning-cell membership by
/// majority overlap, spanning cells rectangularized, and cell text filled
/// from majority-overlap token assignment.
pub fn objects_to_table(
    objects: &[AnnotatedObject],
    tokens: &TokenSequence,
    config: &AssembleConfig,
) -> Result<(TableAnnotation, AssembleReport), AssembleError> {
    let resolution = resolve_conflicts(objects, config);
    let mut report = AssembleReport {
        suppressed: resolution.suppressed,
        ..Default::default()
    };

    let table_obj = resolution
        .objects
        .iter()
        .find(|o| {
            matches!(
                o.category,
                ObjectCategory::Table | ObjectCategory::TableRotated
            )
        })
        .ok_or(AssembleError::NoTableObject)?
        .clone();
    let rows: Vec<BBox> = resolution
        .objects
        .iter()
        .filter(|o| o.category == ObjectCategory::TableRow)
        .map(|o| o.bbox)
        .collect();
    let columns: Vec<BBox> = resolution
        .objects
        .iter()
        .filter(|o| o.category == ObjectCategory::TableColumn)
        .map(|o| o.bbox)
        .collect();
    if rows.is_empty() || columns.is_empty() {
        return Err(AssembleError::DegenerateStructure);
    }
    let (n_rows, n_cols) = (rows.len(), columns.len());
    let grid_box = |i: usize, j: usize| {
        BBox::new(
            columns[j].x_min,
            rows[i].y_min,
            columns[j].x_max,
            rows[i].y_max,
        )
    };

    // row membership in the column header and the projected row headers
    let header_boxes: Vec<BBox> = resolution
        .objects
        .iter()
        .filter(|o| o.category == ObjectCategory::TableColumnHeader)
        .map(|o| o.bbox)
        .collect();
    let prh_boxes: Vec<BBox> = resolution
        .objects
        .iter()
        .filter(|o| o.category == ObjectCategory::TableProjectedRowHeader)
        .map(|o| o.bbox)
        .collect();
    let header_row: Vec<bool> = rows
        .iter()
        .map(|r| {
            header_boxes
                .iter()
                .any(|h| r.overlap_fraction(h) >= config.header_child_overlap)
        })
        .collect();
    let mut prh_row = vec![false; n_rows];
    for (i, r) in rows.iter().enumerate() {
        if prh_boxes
            .iter()
            .any(|p| r.overlap_fraction(p) >= config.prh_child_overlap)
        {
            if header_row[i] {
                report.prh_in_header += 1;
            } else {
                prh_row[i] = true;
            }
        }
    }

    // claim grid positions: projected row headers first, then spanning cells
    // in descending confidence, then everything left as 1x1 cells
    const FREE: usize = usize::MAX;
    let mut claim = vec![FREE; n_rows * n_cols];
    struct Span {
        r0: usize,
        r1: usize,
        c0: usize,
        c1: usize,
        prh: bool,
    }
    let mut spans: Vec<Span> = Vec::new();
    for (i, &is_prh) in prh_row.iter().enumerate() {
        if is_prh {
            let span_id = spans.len();
            spans.push(Span {
                r0: i,
                r1: i,
                c0: 0,
                c1: n_cols - 1,
                prh: true,
            });
            for j in 0..n_cols {
                claim[i * n_cols + j] = span_id;
            }
        }
    }
    for obj in resolution
        .objects
        .iter()
        .filter(|o| o.category == ObjectCategory::TableSpanningCell)
    {
        let mut covered = Vec::new();
        for i in 0..n_rows {
            for j in 0..n_cols {
                if grid_box(i, j).overlap_fraction(&obj.bbox) >= config.spanning_child_overlap {
                    covered.push((i, j));
                }
            }
        }
        if covered.is_empty() {
            report.spanning_rejected += 1;
            continue;
        }
        let r0 = covered.iter().map(|&(i, _)| i).min().unwrap();
        let r1 = covered.iter().map(|&(i, _)| i).max().unwrap();
        let c0 = covered.iter().map(|&(_, j)| j).min().unwrap();
        let c1 = covered.iter().map(|&(_, j)| j).max().unwrap();
        let mut ok = true;
        for i in r0..=r1 {
            for j in c0..=c1 {
                if claim[i * n_cols + j] != FREE
                    || grid_box(i, j).overlap_fraction(&obj.bbox) < config.spanning_rect_min_overlap
                {
                    ok = false;
                }
            }
        }
        if !ok {
            report.spanning_rejected += 1;
            continue;
        }
        let span_id = spans.len();
        spans.push(Span {
            r0,
            r1,
            c0,
            c1,
            prh: false,
        });
        for i in r0..=r1 {
            for j in c0..=c1 {
                claim[i * n_cols + j] = span_id;
            }
        }
    }

    // materialize cells in row-major order of their top-left position
    let mut cells: Vec<Cell> = Vec::new();
    let mut span_done = vec![false; spans.len()];
    for i in 0..n_rows {
        for j in 0..n_cols {
            let slot = claim[i * n_cols + j];
            if slot == FREE {
                let mut cell = Cell::at(i, j, "");
                cell.is_column_header = header_row[i];
                cell.grid_box = Some(grid_box(i, j));
                cells.push(cell);
            } else if !span_done[slot] {
                span_done[slot] = true;
                let span = &spans[slot];
                let mut cell = Cell::spanning(span.r0, span.r1, span.c0, span.c1, "");
                cell.is_projected_row_header = span.prh;
                cell.is_column_header = !span.prh && (span.r0..=span.r1).all(|r| header_row[r]);
                cell.grid_box = Some(grid_box(span.r0, span.c0).union(&grid_box(span.r1, span.c1)));
                cells.push(cell);
            }
        }
    }

    // fill text by majority-overlap token assignment, in stream order
    let separator = match tokens.granularity {
        Granularity::Word => " ",
        Granularity::Char => "",
    };
    let mut assigned: Vec<Vec<&str>> = vec![Vec::new(); cells.len()];
    let mut text_boxes: Vec<Option<BBox>> = vec![None; cells.len()];
    for token in &tokens.tokens {
        if token.text.chars().all(char::is_whitespace) || token.bbox.area() <= 0.0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (ci, cell) in cells.iter().enumerate() {
            let frac = token
                .bbox
                .overlap_fraction(&cell.grid_box.expect("set above"));
            if frac > 0.0 && best.is_none_or(|(_, f)| frac > f) {
                best = Some((ci, frac));
            }
        }
        if let Some((ci, _)) = best {
            assigned[ci].push(&token.text);
            text_boxes[ci] = Some(match text_boxes[ci] {
                Some(b) => b.union(&token.bbox),
                None => token.bbox,
            });
        }
    }
    for ((cell, texts), text_box) in cells.iter_mut().zip(assigned).zip(text_boxes) {
        cell.text = crate::ingest::normalize_whitespace(&texts.join(separator));
        if !cell.is_blank() {
            cell.text_box = text_box;
        }
    }

    let mut table = TableAnnotation::new(n_rows, n_cols, cells);
    table.rows = Some(rows);
    table.columns = Some(columns);
    table.table_box = Some(table_obj.bbox);
    table.rotated = table_obj.category == ObjectCategory::TableRotated;
    debug_assert!(table.validate_grid().is_ok());

    // report (not repair) stacked same-span header cells
    if let Ok(violations) = crate::model::validate_canonical(&table) {
        report.stacked_same_span = violations
            .iter()
            .filter(|v| matches!(v, crate::model::CanonViolation::StackedSameSpan { .. }))
            .count();
    }
    Ok((table, report))
}
