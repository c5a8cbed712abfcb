//! Core domain types: bounding boxes, cells, table annotations, object
//! categories, plus grid construction and structural validation shared by
//! every other module.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Axis-aligned rectangle in page coordinates (points), y increasing downward.
///
/// Serialized as a 4-element array `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox {
            x_min: v[0],
            y_min: v[1],
            x_max: v[2],
            y_max: v[3],
        }
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    /// Both extents are non-negative and all coordinates finite.
    pub fn is_valid(&self) -> bool {
        self.x_min.is_finite()
            && self.y_min.is_finite()
            && self.x_max.is_finite()
            && self.y_max.is_finite()
            && self.x_min <= self.x_max
            && self.y_min <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Intersection of two boxes; `None` when they are disjoint.
    ///
    /// Boxes that merely touch along an edge intersect with zero area.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x_min = self.x_min.max(other.x_min);
        let y_min = self.y_min.max(other.y_min);
        let x_max = self.x_max.min(other.x_max);
        let y_max = self.y_max.min(other.y_max);
        if x_min <= x_max && y_min <= y_max {
            Some(BBox {
                x_min,
                y_min,
                x_max,
                y_max,
            })
        } else {
            None
        }
    }

    /// Area of the intersection, zero when disjoint.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        self.intersection(other).map_or(0.0, |b| b.area())
    }

    /// Bounding union (smallest box containing both).
    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    /// Bounding union of an iterator of boxes; `None` for an empty iterator.
    pub fn union_all<'a, I: IntoIterator<Item = &'a BBox>>(boxes: I) -> Option<BBox> {
        boxes.into_iter().fold(None, |acc: Option<BBox>, b| {
            Some(acc.map_or(*b, |a| a.union(b)))
        })
    }

    /// Intersection-over-union; zero when disjoint or when the union has zero area.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Fraction of this box's area covered by `other`; zero for a zero-area box.
    pub fn overlap_fraction(&self, other: &BBox) -> f64 {
        let a = self.area();
        if a <= 0.0 {
            0.0
        } else {
            self.intersection_area(other) / a
        }
    }
}

/// One logical cell of a table, addressed by 0-based inclusive grid spans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub is_column_header: bool,
    #[serde(default)]
    pub is_projected_row_header: bool,
    #[serde(default)]
    pub is_row_header: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_box: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_box: Option<BBox>,
}

impl Cell {
    /// Plain body cell covering a single grid position.
    pub fn at(row: usize, col: usize, text: &str) -> Self {
        Cell::spanning(row, row, col, col, text)
    }

    pub fn spanning(
        row_start: usize,
        row_end: usize,
        col_start: usize,
        col_end: usize,
        text: &str,
    ) -> Self {
        Cell {
            row_start,
            row_end,
            col_start,
            col_end,
            text: text.to_string(),
            is_column_header: false,
            is_projected_row_header: false,
            is_row_header: false,
            text_box: None,
            grid_box: None,
        }
    }

    /// Blank means empty after Unicode-whitespace stripping.
    pub fn is_blank(&self) -> bool {
        self.text.chars().all(char::is_whitespace)
    }

    pub fn is_spanning(&self) -> bool {
        self.row_end > self.row_start || self.col_end > self.col_start
    }

    pub fn row_span(&self) -> usize {
        self.row_end - self.row_start + 1
    }

    pub fn col_span(&self) -> usize {
        self.col_end - self.col_start + 1
    }

    /// True when the cell's span covers grid position (row, col).
    pub fn covers(&self, row: usize, col: usize) -> bool {
        self.row_start <= row && row <= self.row_end && self.col_start <= col && col <= self.col_end
    }

    pub fn intersects_row(&self, row: usize) -> bool {
        self.row_start <= row && row <= self.row_end
    }
}

/// Grid-structured table annotation; the unit every pipeline stage consumes
/// and produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableAnnotation {
    pub n_rows: usize,
    pub n_cols: usize,
    pub cells: Vec<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<BBox>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<BBox>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_box: Option<BBox>,
    #[serde(default)]
    pub rotated: bool,
}

impl TableAnnotation {
    pub fn new(n_rows: usize, n_cols: usize, cells: Vec<Cell>) -> Self {
        TableAnnotation {
            n_rows,
            n_cols,
            cells,
            rows: None,
            columns: None,
            table_box: None,
            rotated: false,
        }
    }

    /// Grid tiling check; every ingest and transform goes through this.
    pub fn validate_grid(&self) -> Result<Grid, GridError> {
        build_grid(&self.cells, self.n_rows, self.n_cols)
    }

    /// Rows intersected by at least one column-header cell, ascending.
    pub fn header_rows(&self) -> Vec<usize> {
        let mut rows = BTreeSet::new();
        for cell in &self.cells {
            if cell.is_column_header {
                for r in cell.row_start..=cell.row_end {
                    rows.insert(r);
                }
            }
        }
        rows.into_iter().collect()
    }

    /// Rows intersected by at least one projected-row-header cell, ascending.
    pub fn prh_rows(&self) -> Vec<usize> {
        let mut rows = BTreeSet::new();
        for cell in &self.cells {
            if cell.is_projected_row_header {
                for r in cell.row_start..=cell.row_end {
                    rows.insert(r);
                }
            }
        }
        rows.into_iter().collect()
    }

    /// Spanning cells that are not projected row headers; these are the cells
    /// emitted (and counted) as spanning-cell objects.
    pub fn spanning_cells(&self) -> Vec<usize> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_spanning() && !c.is_projected_row_header)
            .map(|(i, _)| i)
            .collect()
    }
}

/// The eight object categories: two for table detection and six for joint
/// structure recognition plus functional analysis. Grid cells are implicit,
/// never an explicit category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjectCategory {
    Table,
    TableRotated,
    TableColumn,
    TableRow,
    TableColumnHeader,
    TableProjectedRowHeader,
    TableSpanningCell,
}

impl ObjectCategory {
    pub const STRUCTURE: [ObjectCategory; 6] = [
        ObjectCategory::Table,
        ObjectCategory::TableColumn,
        ObjectCategory::TableRow,
        ObjectCategory::TableColumnHeader,
        ObjectCategory::TableProjectedRowHeader,
        ObjectCategory::TableSpanningCell,
    ];

    pub const DETECTION: [ObjectCategory; 2] =
        [ObjectCategory::Table, ObjectCategory::TableRotated];

    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectCategory::Table => "table",
            ObjectCategory::TableRotated => "table-rotated",
            ObjectCategory::TableColumn => "table-column",
            ObjectCategory::TableRow => "table-row",
            ObjectCategory::TableColumnHeader => "table-column-header",
            ObjectCategory::TableProjectedRowHeader => "table-projected-row-header",
            ObjectCategory::TableSpanningCell => "table-spanning-cell",
        }
    }

    /// Accepts both hyphen- and space-separated spellings so ground truth
    /// and external detector output are interchangeable.
    pub fn parse(s: &str) -> Option<ObjectCategory> {
        match s.replace(' ', "-").as_str() {
            "table" => Some(ObjectCategory::Table),
            "table-rotated" => Some(ObjectCategory::TableRotated),
            "table-column" => Some(ObjectCategory::TableColumn),
            "table-row" => Some(ObjectCategory::TableRow),
            "table-column-header" => Some(ObjectCategory::TableColumnHeader),
            "table-projected-row-header" => Some(ObjectCategory::TableProjectedRowHeader),
            "table-spanning-cell" => Some(ObjectCategory::TableSpanningCell),
            _ => None,
        }
    }
}

impl fmt::Display for ObjectCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for ObjectCategory {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ObjectCategory {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        ObjectCategory::parse(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown object category: {s:?}")))
    }
}

/// A detected or ground-truth object: category, box, confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedObject {
    pub category: ObjectCategory,
    pub bbox: BBox,
    pub score: f64,
}

impl AnnotatedObject {
    pub fn new(category: ObjectCategory, bbox: BBox, score: f64) -> Self {
        AnnotatedObject {
            category,
            bbox,
            score,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("cells overlap at grid positions {0:?}")]
    Overlap(Vec<(usize, usize)>),
    #[error("no cell covers grid positions {0:?}")]
    Gap(Vec<(usize, usize)>),
    #[error("cell {cell} spans outside the {n_rows}x{n_cols} grid")]
    SpanOutOfBounds {
        cell: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("cell {cell} has an inverted span")]
    InvertedSpan { cell: usize },
}

/// Total, single-valued occupancy map from grid position to cell index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    pub n_rows: usize,
    pub n_cols: usize,
    occupancy: Vec<usize>,
}

impl Grid {
    /// Index of the cell occupying (row, col).
    pub fn cell_at(&self, row: usize, col: usize) -> usize {
        self.occupancy[row * self.n_cols + col]
    }
}

/// Builds the occupancy map, proving the cells tile the grid exactly:
/// every position covered by exactly one cell's span.
pub fn build_grid(cells: &[Cell], n_rows: usize, n_cols: usize) -> Result<Grid, GridError> {
    const UNCLAIMED: usize = usize::MAX;
    let mut occupancy = vec![UNCLAIMED; n_rows * n_cols];
    let mut overlaps = Vec::new();
    for (idx, cell) in cells.iter().enumerate() {
        if cell.row_end < cell.row_start || cell.col_end < cell.col_start {
            return Err(GridError::InvertedSpan { cell: idx });
        }
        if cell.row_end >= n_rows || cell.col_end >= n_cols {
            return Err(GridError::SpanOutOfBounds {
                cell: idx,
                n_rows,
                n_cols,
            });
        }
        for r in cell.row_start..=cell.row_end {
            for c in cell.col_start..=cell.col_end {
                let slot = &mut occupancy[r * n_cols + c];
                if *slot == UNCLAIMED {
                    *slot = idx;
                } else {
                    overlaps.push((r, c));
                }
            }
        }
    }
    if !overlaps.is_empty() {
        return Err(GridError::Overlap(overlaps));
    }
    let gaps: Vec<(usize, usize)> = (0..n_rows * n_cols)
        .filter(|i| occupancy[*i] == UNCLAIMED)
        .map(|i| (i / n_cols, i % n_cols))
        .collect();
    if !gaps.is_empty() {
        return Err(GridError::Gap(gaps));
    }
    Ok(Grid {
        n_rows,
        n_cols,
        occupancy,
    })
}

/// Which header a [`header_tree`] is built over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeaderAxis {
    Column,
    Row,
}

/// Hierarchical header structure: one node per header cell, parents in the
/// previous header row (column axis) or previous header column (row axis).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderTree {
    pub roots: Vec<usize>,
    pub nodes: Vec<HeaderNode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderNode {
    /// Index into the table's cell list.
    pub cell: usize,
    pub children: Vec<usize>,
}

impl HeaderTree {
    /// Node indices with no children.
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].children.is_empty())
            .collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HeaderTreeError {
    #[error("header cell {cell} spans across two parents' spans")]
    NotNested { cell: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Builds the header tree for one axis. Parent of a header cell is the header
/// cell on the previous header line whose span contains the child's span;
/// crossing spans are an error. Output order is independent of the cell-list
/// order: nodes sort by (line, span start).
pub fn header_tree(
    table: &TableAnnotation,
    axis: HeaderAxis,
) -> Result<HeaderTree, HeaderTreeError> {
    let grid = table.validate_grid()?;
    let in_header = |c: &Cell| match axis {
        HeaderAxis::Column => c.is_column_header,
        HeaderAxis::Row => c.is_row_header,
    };
    // (line_start, span_start, cell index) with "line" = row for the column
    // header and column for the row header.
    let mut members: Vec<(usize, usize, usize)> = table
        .cells
        .iter()
        .enumerate()
        .filter(|(_, c)| in_header(c))
        .map(|(i, c)| match axis {
            HeaderAxis::Column => (c.row_start, c.col_start, i),
            HeaderAxis::Row => (c.col_start, c.row_start, i),
        })
        .collect();
    members.sort_unstable();

    let mut node_of_cell = vec![usize::MAX; table.cells.len()];
    let mut tree = HeaderTree {
        roots: Vec::new(),
        nodes: Vec::new(),
    };
    for &(line_start, _, cell_idx) in &members {
        let node_idx = tree.nodes.len();
        node_of_cell[cell_idx] = node_idx;
        tree.nodes.push(HeaderNode {
            cell: cell_idx,
            children: Vec::new(),
        });

        let cell = &table.cells[cell_idx];
        if line_start == 0 {
            tree.roots.push(node_idx);
            continue;
        }
        // Occupants of the previous line across this cell's span.
        let prev = line_start - 1;
        let span = match axis {
            HeaderAxis::Column => cell.col_start..=cell.col_end,
            HeaderAxis::Row => cell.row_start..=cell.row_end,
        };
        let mut parent_cell: Option<usize> = None;
        let mut parent_is_header = true;
        for pos in span {
            let occupant = match axis {
                HeaderAxis::Column => grid.cell_at(prev, pos),
                HeaderAxis::Row => grid.cell_at(pos, prev),
            };
            match parent_cell {
                None => {
                    parent_cell = Some(occupant);
                    parent_is_header = in_header(&table.cells[occupant]);
                }
                Some(p) if p != occupant => {
                    return Err(HeaderTreeError::NotNested { cell: cell_idx });
                }
                _ => {}
            }
        }
        match parent_cell {
            Some(p) if parent_is_header => {
                let parent_node = node_of_cell[p];
                // Parents sort before children, so the slot is filled.
                debug_assert_ne!(parent_node, usize::MAX);
                tree.nodes[parent_node].children.push(node_idx);
            }
            // Previous line is not part of the header: treat as a root.
            _ => tree.roots.push(node_idx),
        }
    }
    Ok(tree)
}

/// Structural departures from the assumed tabular model, reported by
/// [`validate_canonical`]. Violations are data, not failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum CanonViolation {
    /// Two vertically adjacent column-header cells span exactly the same
    /// columns; they should be one cell.
    StackedSameSpan {
        upper_cell: usize,
        lower_cell: usize,
    },
    /// A header cell has exactly one cell directly below it inside the
    /// header; an internal node must have at least two children.
    SingleChild { cell: usize },
    /// The column-header leaf above this body column spans several columns,
    /// so the column has no dedicated leaf of its own.
    NonUniqueLeaf {
        leaf_cell: usize,
        columns: Vec<usize>,
    },
    /// A projected-row-header row holds more than one cell.
    SplitPrh { row: usize, cell_count: usize },
}

/// Checks the canonical-form properties:
/// (a) no stacked same-span header cells, (b) every internal header node has
/// at least two children, (c) every body column maps to a unique header leaf,
/// (d) every projected-row-header row is a single cell.
///
/// Property (c) is reported but never repaired by canonicalization.
pub fn validate_canonical(table: &TableAnnotation) -> Result<Vec<CanonViolation>, GridError> {
    let grid = table.validate_grid()?;
    let mut violations = Vec::new();

    let header_rows = table.header_rows();
    let last_header_row = header_rows.last().copied();

    // (a) stacked same-span header cells
    for (i, cell) in table.cells.iter().enumerate() {
        if !cell.is_column_header || cell.row_end + 1 >= table.n_rows {
            continue;
        }
        let below = grid.cell_at(cell.row_end + 1, cell.col_start);
        let other = &table.cells[below];
        if other.is_column_header
            && other.row_start == cell.row_end + 1
            && other.col_start == cell.col_start
            && other.col_end == cell.col_end
        {
            violations.push(CanonViolation::StackedSameSpan {
                upper_cell: i,
                lower_cell: below,
            });
        }
    }

    // (b) internal nodes with a single child
    for (i, cell) in table.cells.iter().enumerate() {
        if !cell.is_column_header {
            continue;
        }
        let next_row = cell.row_end + 1;
        if next_row >= table.n_rows || !header_rows.contains(&next_row) {
            continue;
        }
        let mut children = BTreeSet::new();
        for c in cell.col_start..=cell.col_end {
            let child = grid.cell_at(next_row, c);
            if table.cells[child].is_column_header && table.cells[child].row_start == next_row {
                children.insert(child);
            }
        }
        if children.len() == 1 {
            violations.push(CanonViolation::SingleChild { cell: i });
        }
    }

    // (c) body columns without a unique header leaf
    if let Some(last) = last_header_row {
        if last + 1 < table.n_rows {
            let mut seen = BTreeSet::new();
            for col in 0..table.n_cols {
                let leaf = grid.cell_at(last, col);
                if table.cells[leaf].col_span() > 1 && seen.insert(leaf) {
                    let cell = &table.cells[leaf];
                    violations.push(CanonViolation::NonUniqueLeaf {
                        leaf_cell: leaf,
                        columns: (cell.col_start..=cell.col_end).collect(),
                    });
                }
            }
        }
    }

    // (d) split projected-row-header rows
    for row in table.prh_rows() {
        let mut cells_in_row = BTreeSet::new();
        for col in 0..table.n_cols {
            cells_in_row.insert(grid.cell_at(row, col));
        }
        if cells_in_row.len() > 1 {
            violations.push(CanonViolation::SplitPrh {
                row,
                cell_count: cells_in_row.len(),
            });
        }
    }

    Ok(violations)
}
