//! Spatial completion of table annotations: table, row, column, and grid-cell
//! boxes derived from text-cell boxes; dilation for training-style object
//! annotations; tightening for location scoring.

use crate::ingest::TokenSequence;
use crate::model::{AnnotatedObject, BBox, ObjectCategory, TableAnnotation};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpatialError {
    #[error("table has no rows or no columns")]
    EmptyTable,
    #[error("row {0} is undefined: no non-blank cell starts or ends there")]
    UndefinedRow(usize),
    #[error("column {0} is undefined: no non-blank cell starts or ends there")]
    UndefinedColumn(usize),
    #[error("row {0} has an inverted y-extent")]
    InvertedRow(usize),
    #[error("column {0} has an inverted x-extent")]
    InvertedColumn(usize),
    #[error("row and column boxes required; run completion first")]
    MissingBoxes,
    #[error("row boxes are not monotonically ordered by y-extent")]
    NonMonotonicRows,
    #[error("column boxes are not monotonically ordered by x-extent")]
    NonMonotonicColumns,
    #[error(transparent)]
    Grid(#[from] crate::model::GridError),
}

/// Derives the table box, row boxes, column boxes, and per-cell grid boxes
/// from the text-cell boxes.
///
/// The table box is the union of all text boxes. Each row takes the table's
/// x-extent; its top edge comes from the text boxes of cells starting at that
/// row and its bottom edge from cells ending there, so a spanning cell
/// shapes only the rows holding its first and last line. Columns are
/// symmetric. A cell's grid box is the union of its rows' boxes intersected
/// with the union of its columns' boxes, defined even for blank cells.
///
/// Misplaced text can still make bands overlap; that is computed faithfully
/// here and left to quality control to reject.
pub fn complete(table: &TableAnnotation) -> Result<TableAnnotation, SpatialError> {
    table.validate_grid()?;
    if table.n_rows == 0 || table.n_cols == 0 {
        return Err(SpatialError::EmptyTable);
    }
    let table_box = BBox::union_all(table.cells.iter().filter_map(|c| c.text_box.as_ref()))
        .ok_or(SpatialError::UndefinedRow(0))?;

    let lower = |boxes: &mut dyn Iterator<Item = f64>| boxes.reduce(f64::min);
    let upper = |boxes: &mut dyn Iterator<Item = f64>| boxes.reduce(f64::max);

    let mut rows = Vec::with_capacity(table.n_rows);
    for m in 0..table.n_rows {
        let starting = table.cells.iter().filter(|c| c.row_start == m);
        let ending = table.cells.iter().filter(|c| c.row_end == m);
        let y_min = lower(&mut starting.filter_map(|c| c.text_box.map(|b| b.y_min)))
            .ok_or(SpatialError::UndefinedRow(m))?;
        let y_max = upper(&mut ending.filter_map(|c| c.text_box.map(|b| b.y_max)))
            .ok_or(SpatialError::UndefinedRow(m))?;
        if y_min > y_max {
            return Err(SpatialError::InvertedRow(m));
        }
        rows.push(BBox::new(table_box.x_min, y_min, table_box.x_max, y_max));
    }
    let mut columns = Vec::with_capacity(table.n_cols);
    for n in 0..table.n_cols {
        let starting = table.cells.iter().filter(|c| c.col_start == n);
        let ending = table.cells.iter().filter(|c| c.col_end == n);
        let x_min = lower(&mut starting.filter_map(|c| c.text_box.map(|b| b.x_min)))
            .ok_or(SpatialError::UndefinedColumn(n))?;
        let x_max = upper(&mut ending.filter_map(|c| c.text_box.map(|b| b.x_max)))
            .ok_or(SpatialError::UndefinedColumn(n))?;
        if x_min > x_max {
            return Err(SpatialError::InvertedColumn(n));
        }
        columns.push(BBox::new(x_min, table_box.y_min, x_max, table_box.y_max));
    }

    let mut out = table.clone();
    assign_grid_boxes(&mut out, &rows, &columns);
    out.rows = Some(rows);
    out.columns = Some(columns);
    out.table_box = Some(table_box);
    Ok(out)
}

/// grid box = (union of the cell's row boxes) ∩ (union of its column boxes)
fn assign_grid_boxes(table: &mut TableAnnotation, rows: &[BBox], columns: &[BBox]) {
    for cell in &mut table.cells {
        let row_union =
            BBox::union_all(&rows[cell.row_start..=cell.row_end]).expect("span is non-empty");
        let col_union =
            BBox::union_all(&columns[cell.col_start..=cell.col_end]).expect("span is non-empty");
        cell.grid_box = Some(
            row_union
                .intersection(&col_union)
                .expect("rows span the table's x-extent and columns its y-extent"),
        );
    }
}

fn require_boxes(table: &TableAnnotation) -> Result<(&[BBox], &[BBox]), SpatialError> {
    match (&table.rows, &table.columns) {
        (Some(r), Some(c)) if r.len() == table.n_rows && c.len() == table.n_cols => Ok((r, c)),
        _ => Err(SpatialError::MissingBoxes),
    }
}

fn check_monotonic(
    boxes: &[BBox],
    key: impl Fn(&BBox) -> (f64, f64),
    err: SpatialError,
) -> Result<(), SpatialError> {
    for pair in boxes.windows(2) {
        if key(&pair[0]) >= key(&pair[1]) {
            return Err(err);
        }
    }
    Ok(())
}

/// Recomputes every cell's grid box from the table's existing row and column
/// boxes, leaving the boxes themselves untouched.
///
/// This is the completion pass to run after canonicalization: merges change
/// cell spans but not the grid, and the row and column boxes were derived
/// from the pre-merge text cells. Recomputing them from merged text boxes
/// would smear a full-width projected row header across every column.
pub fn regrid(table: &TableAnnotation) -> Result<TableAnnotation, SpatialError> {
    let (rows, columns) = require_boxes(table)?;
    let (rows, columns) = (rows.to_vec(), columns.to_vec());
    let mut out = table.clone();
    assign_grid_boxes(&mut out, &rows, &columns);
    Ok(out)
}

/// Replaces each pair of adjacent row boundaries (and column boundaries) by
/// their midpoint, so the rows partition the table's y-extent and the columns
/// its x-extent with no gap or overlap. Grid boxes are recomputed.
pub fn dilate_table(table: &TableAnnotation) -> Result<TableAnnotation, SpatialError> {
    let (rows, columns) = require_boxes(table)?;
    check_monotonic(rows, |b| (b.y_min, b.y_max), SpatialError::NonMonotonicRows)?;
    check_monotonic(
        columns,
        |b| (b.x_min, b.x_max),
        SpatialError::NonMonotonicColumns,
    )?;

    let mut rows = rows.to_vec();
    for i in 1..rows.len() {
        let mid = (rows[i - 1].y_max + rows[i].y_min) / 2.0;
        rows[i - 1].y_max = mid;
        rows[i].y_min = mid;
    }
    let mut columns = columns.to_vec();
    for i in 1..columns.len() {
        let mid = (columns[i - 1].x_max + columns[i].x_min) / 2.0;
        columns[i - 1].x_max = mid;
        columns[i].x_min = mid;
    }

    let mut out = table.clone();
    out.table_box = match (BBox::union_all(&rows), BBox::union_all(&columns)) {
        (Some(r), Some(c)) => Some(r.union(&c)),
        _ => out.table_box,
    };
    assign_grid_boxes(&mut out, &rows, &columns);
    out.rows = Some(rows);
    out.columns = Some(columns);
    Ok(out)
}

/// Emits the structure-and-functional-analysis object list for a completed
/// table, with dilated boxes: the table itself, one object per row and
/// column, one column-header region, one object per projected-row-header row,
/// and one per spanning cell.
pub fn dilate(table: &TableAnnotation) -> Result<Vec<AnnotatedObject>, SpatialError> {
    let dilated = dilate_table(table)?;
    let rows = dilated.rows.as_ref().expect("set by dilate_table");
    let columns = dilated.columns.as_ref().expect("set by dilate_table");
    let table_box = dilated.table_box.expect("set by dilate_table");

    let mut objects = Vec::new();
    let table_category = if dilated.rotated {
        ObjectCategory::TableRotated
    } else {
        ObjectCategory::Table
    };
    objects.push(AnnotatedObject::new(table_category, table_box, 1.0));
    for row in rows {
        objects.push(AnnotatedObject::new(ObjectCategory::TableRow, *row, 1.0));
    }
    for column in columns {
        objects.push(AnnotatedObject::new(
            ObjectCategory::TableColumn,
            *column,
            1.0,
        ));
    }
    let header_rows = dilated.header_rows();
    if let Some(bbox) = BBox::union_all(header_rows.iter().map(|&r| &rows[r])) {
        objects.push(AnnotatedObject::new(
            ObjectCategory::TableColumnHeader,
            bbox,
            1.0,
        ));
    }
    for prh_row in dilated.prh_rows() {
        objects.push(AnnotatedObject::new(
            ObjectCategory::TableProjectedRowHeader,
            rows[prh_row],
            1.0,
        ));
    }
    for idx in dilated.spanning_cells() {
        let bbox = dilated.cells[idx]
            .grid_box
            .expect("grid boxes set by dilate_table");
        objects.push(AnnotatedObject::new(
            ObjectCategory::TableSpanningCell,
            bbox,
            1.0,
        ));
    }
    Ok(objects)
}

/// Rows and columns left without any assigned token keep a zero-extent box at
/// their midline; they are listed here.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TightenReport {
    pub empty_rows: Vec<usize>,
    pub empty_columns: Vec<usize>,
}

/// Shrinks each row's y-extent (and each column's x-extent) to tightly wrap
/// the text it contains: every token is clipped against the band and the
/// positive-area pieces are unioned, so text crossing a band boundary (a
/// spanning cell's line) shapes each band only by the part inside it. Cells
/// contain the same text before and after; grid boxes are recomputed.
pub fn tighten(
    table: &TableAnnotation,
    tokens: &TokenSequence,
) -> Result<(TableAnnotation, TightenReport), SpatialError> {
    let (rows, columns) = require_boxes(table)?;
    let mut rows = rows.to_vec();
    let mut columns = columns.to_vec();

    let active_tokens: Vec<&crate::ingest::Token> = tokens
        .tokens
        .iter()
        .filter(|t| !t.text.chars().all(char::is_whitespace) && t.bbox.area() > 0.0)
        .collect();

    let mut report = TightenReport::default();
    for (i, row) in rows.iter_mut().enumerate() {
        match clipped_extent(&active_tokens, row, |b| (b.y_min, b.y_max)) {
            Some((lo, hi)) => {
                row.y_min = lo;
                row.y_max = hi;
            }
            None => {
                let mid = (row.y_min + row.y_max) / 2.0;
                row.y_min = mid;
                row.y_max = mid;
                report.empty_rows.push(i);
            }
        }
    }
    for (i, column) in columns.iter_mut().enumerate() {
        match clipped_extent(&active_tokens, column, |b| (b.x_min, b.x_max)) {
            Some((lo, hi)) => {
                column.x_min = lo;
                column.x_max = hi;
            }
            None => {
                let mid = (column.x_min + column.x_max) / 2.0;
                column.x_min = mid;
                column.x_max = mid;
                report.empty_columns.push(i);
            }
        }
    }

    let mut out = table.clone();
    assign_grid_boxes(&mut out, &rows, &columns);
    out.rows = Some(rows);
    out.columns = Some(columns);
    Ok((out, report))
}

/// Extent of the union of the token pieces inside the band, along the chosen
/// axis; `None` when no token overlaps the band with positive area.
fn clipped_extent(
    tokens: &[&crate::ingest::Token],
    band: &BBox,
    extent: impl Fn(&BBox) -> (f64, f64),
) -> Option<(f64, f64)> {
    let mut span: Option<(f64, f64)> = None;
    for token in tokens {
        let Some(piece) = token.bbox.intersection(band) else {
            continue;
        };
        if piece.area() <= 0.0 {
            continue;
        }
        let (lo, hi) = extent(&piece);
        span = Some(match span {
            Some((a, b)) => (a.min(lo), b.max(hi)),
            None => (lo, hi),
        });
    }
    span
}

/// Assigns every positive-area, non-whitespace token to the grid cell its box
/// most overlaps; returns one token-index list per cell. Unassignable tokens
/// (no overlap with any grid box) are dropped.
pub fn assign_tokens_to_cells(
    table: &TableAnnotation,
    tokens: &TokenSequence,
) -> Result<Vec<Vec<usize>>, SpatialError> {
    let grid_boxes: Vec<BBox> = table
        .cells
        .iter()
        .map(|c| c.grid_box.ok_or(SpatialError::MissingBoxes))
        .collect::<Result<_, _>>()?;
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); table.cells.len()];
    for (ti, token) in tokens.tokens.iter().enumerate() {
        if token.text.chars().all(char::is_whitespace) || token.bbox.area() <= 0.0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (ci, gb) in grid_boxes.iter().enumerate() {
            let frac = token.bbox.overlap_fraction(gb);
            if frac > 0.0 && best.is_none_or(|(_, f)| frac > f) {
                best = Some((ci, frac));
            }
        }
        if let Some((ci, _)) = best {
            assigned[ci].push(ti);
        }
    }
    Ok(assigned)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Granularity, Token};
    use crate::model::Cell;

    fn cell_with_box(row: usize, col: usize, text: &str, bbox: [f64; 4]) -> Cell {
        let mut c = Cell::at(row, col, text);
        c.text_box = Some(BBox::from(bbox));
        c
    }

    #[test]
    fn complete_single_cell() {
        let table = TableAnnotation::new(
            1,
            1,
            vec![cell_with_box(0, 0, "x", [10.0, 10.0, 20.0, 20.0])],
        );
        let done = complete(&table).unwrap();
        let expected = BBox::new(10.0, 10.0, 20.0, 20.0);
        assert_eq!(done.table_box, Some(expected));
        assert_eq!(done.rows.as_deref(), Some(&[expected][..]));
        assert_eq!(done.columns.as_deref(), Some(&[expected][..]));
        assert_eq!(done.cells[0].grid_box, Some(expected));
    }

    #[test]
    fn complete_two_rows() {
        let table = TableAnnotation::new(
            2,
            1,
            vec![
                cell_with_box(0, 0, "a", [0.0, 0.0, 10.0, 10.0]),
                cell_with_box(1, 0, "b", [0.0, 20.0, 10.0, 30.0]),
            ],
        );
        let done = complete(&table).unwrap();
        let rows = done.rows.unwrap();
        assert_eq!(rows[0], BBox::new(0.0, 0.0, 10.0, 10.0));
        assert_eq!(rows[1], BBox::new(0.0, 20.0, 10.0, 30.0));
        assert_eq!(done.table_box, Some(BBox::new(0.0, 0.0, 10.0, 30.0)));
    }

    #[test]
    fn complete_undefined_row() {
        // blank middle row: nothing starts or ends at row 1
        let table = TableAnnotation::new(
            3,
            1,
            vec![
                cell_with_box(0, 0, "a", [0.0, 0.0, 10.0, 10.0]),
                Cell::at(1, 0, ""),
                cell_with_box(2, 0, "b", [0.0, 20.0, 10.0, 30.0]),
            ],
        );
        assert_eq!(complete(&table).unwrap_err(), SpatialError::UndefinedRow(1));
    }

    fn two_by_two_with_span() -> TableAnnotation {
        // row 0: cell spanning both columns; row 1: two cells
        let mut top = Cell::spanning(0, 0, 0, 1, "wide");
        top.text_box = Some(BBox::new(2.0, 0.0, 18.0, 8.0));
        TableAnnotation::new(
            2,
            2,
            vec![
                top,
                cell_with_box(1, 0, "a", [0.0, 12.0, 9.0, 20.0]),
                cell_with_box(1, 1, "b", [11.0, 12.0, 20.0, 20.0]),
            ],
        )
    }

    #[test]
    fn complete_grid_box_of_spanning_cell() {
        let done = complete(&two_by_two_with_span()).unwrap();
        // hand application of the formulas: table = [0,0,20,20];
        // col 0 x_min from starters {top@2, a@0} -> 0, x_max from enders {a} -> 9;
        // col 1 x_min from starters {b} -> 11, x_max from enders {top@18, b@20} -> 20
        let cols = done.columns.as_ref().unwrap();
        assert_eq!(cols[0], BBox::new(0.0, 0.0, 9.0, 20.0));
        assert_eq!(cols[1], BBox::new(11.0, 0.0, 20.0, 20.0));
        // spanning cell's grid box covers both columns' union
        assert_eq!(done.cells[0].grid_box, Some(BBox::new(0.0, 0.0, 20.0, 8.0)));
    }

    #[test]
    fn complete_is_idempotent() {
        let once = complete(&two_by_two_with_span()).unwrap();
        let twice = complete(&once).unwrap();
        assert_eq!(once, twice);
    }

    fn completed_two_rows() -> TableAnnotation {
        complete(&TableAnnotation::new(
            2,
            1,
            vec![
                cell_with_box(0, 0, "a", [0.0, 0.0, 10.0, 10.0]),
                cell_with_box(1, 0, "b", [0.0, 12.0, 10.0, 20.0]),
            ],
        ))
        .unwrap()
    }

    #[test]
    fn dilate_midpoint() {
        let dilated = dilate_table(&completed_two_rows()).unwrap();
        let rows = dilated.rows.unwrap();
        assert_eq!(rows[0], BBox::new(0.0, 0.0, 10.0, 11.0));
        assert_eq!(rows[1], BBox::new(0.0, 11.0, 10.0, 20.0));
    }

    #[test]
    fn dilate_touching_rows_unchanged() {
        let table = complete(&TableAnnotation::new(
            2,
            1,
            vec![
                cell_with_box(0, 0, "a", [0.0, 0.0, 10.0, 10.0]),
                cell_with_box(1, 0, "b", [0.0, 10.0, 10.0, 20.0]),
            ],
        ))
        .unwrap();
        let dilated = dilate_table(&table).unwrap();
        assert_eq!(dilated.rows, table.rows);
    }

    #[test]
    fn dilate_spanning_cell_covers_dilated_columns() {
        let done = complete(&two_by_two_with_span()).unwrap();
        let objects = dilate(&done).unwrap();
        let spanning: Vec<&AnnotatedObject> = objects
            .iter()
            .filter(|o| o.category == ObjectCategory::TableSpanningCell)
            .collect();
        assert_eq!(spanning.len(), 1);
        // dilated columns are [0,10] and [10,20]; the spanning cell covers both
        assert_eq!(spanning[0].bbox.x_min, 0.0);
        assert_eq!(spanning[0].bbox.x_max, 20.0);
    }

    #[test]
    fn dilate_rejects_non_monotonic_rows() {
        let mut table = completed_two_rows();
        table.rows.as_mut().unwrap().swap(0, 1);
        assert_eq!(
            dilate_table(&table).unwrap_err(),
            SpatialError::NonMonotonicRows
        );
    }

    #[test]
    fn dilated_rows_partition_table_extent() {
        let dilated = dilate_table(&completed_two_rows()).unwrap();
        let table_box = dilated.table_box.unwrap();
        let rows = dilated.rows.unwrap();
        assert_eq!(rows[0].y_min, table_box.y_min);
        assert_eq!(rows.last().unwrap().y_max, table_box.y_max);
        for pair in rows.windows(2) {
            assert_eq!(pair[0].y_max, pair[1].y_min);
        }
    }

    fn tokens_for_two_rows() -> TokenSequence {
        TokenSequence::new(
            Granularity::Word,
            vec![
                Token {
                    text: "a".into(),
                    bbox: BBox::new(0.0, 0.0, 10.0, 10.0),
                },
                Token {
                    text: "b".into(),
                    bbox: BBox::new(0.0, 12.0, 10.0, 20.0),
                },
            ],
        )
    }

    #[test]
    fn tighten_recovers_text_extent() {
        let dilated = dilate_table(&completed_two_rows()).unwrap();
        let (tight, report) = tighten(&dilated, &tokens_for_two_rows()).unwrap();
        let rows = tight.rows.unwrap();
        assert_eq!(rows[0], BBox::new(0.0, 0.0, 10.0, 10.0));
        assert_eq!(rows[1], BBox::new(0.0, 12.0, 10.0, 20.0));
        assert_eq!(report, TightenReport::default());
    }

    #[test]
    fn tighten_is_idempotent() {
        let dilated = dilate_table(&completed_two_rows()).unwrap();
        let tokens = tokens_for_two_rows();
        let (once, _) = tighten(&dilated, &tokens).unwrap();
        let (twice, _) = tighten(&once, &tokens).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn tighten_flags_empty_row() {
        let dilated = dilate_table(&completed_two_rows()).unwrap();
        let tokens = TokenSequence::new(
            Granularity::Word,
            vec![Token {
                text: "a".into(),
                bbox: BBox::new(0.0, 0.0, 10.0, 10.0),
            }],
        );
        let (tight, report) = tighten(&dilated, &tokens).unwrap();
        assert_eq!(report.empty_rows, vec![1]);
        let rows = tight.rows.unwrap();
        // zero-height box at the dilated midline of row 1 ([11,20] -> 15.5)
        assert_eq!(rows[1].y_min, rows[1].y_max);
        assert_eq!(rows[1].y_min, 15.5);
    }

    #[test]
    fn token_assignment_preserved_by_dilate_then_tighten() {
        let completed = completed_two_rows();
        let tokens = tokens_for_two_rows();
        let before = assign_tokens_to_cells(&completed, &tokens).unwrap();
        let dilated = dilate_table(&completed).unwrap();
        let (tight, _) = tighten(&dilated, &tokens).unwrap();
        let after = assign_tokens_to_cells(&tight, &tokens).unwrap();
        assert_eq!(before, after);
    }
}
