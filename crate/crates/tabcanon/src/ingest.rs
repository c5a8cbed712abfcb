//! Parsing of table markup (the HTML subset carrying structure) and of the
//! toolkit's JSON formats for tables and page tokens.
//!
//! Only the table-structure subset of HTML is understood: `table`,
//! `thead`/`tbody`, `tr`, `td`/`th` with `rowspan`/`colspan`. Entities are
//! decoded; inline tags inside a cell contribute their text content only.
//! Nested tables are rejected.

use crate::model::{BBox, Cell, GridError, TableAnnotation};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fs;
use std::path::Path;
use thiserror::Error;

/// Token granularity of an extracted text stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Char,
    Word,
}

/// One page token: its text and bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub bbox: BBox,
}

/// Ordered page characters or words in reading order. The order is produced
/// by the upstream extractor and trusted, never recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub granularity: Granularity,
    pub tokens: Vec<Token>,
}

impl TokenSequence {
    pub fn new(granularity: Granularity, tokens: Vec<Token>) -> Self {
        TokenSequence {
            granularity,
            tokens,
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{0}")]
    Markup(#[from] MarkupError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("schema violation at {json_path}: {message}")]
    Schema { json_path: String, message: String },
    #[error("grid violation: {0}")]
    Grid(#[from] GridError),
}

impl IngestError {
    fn schema(json_path: impl Into<String>, message: impl Into<String>) -> Self {
        IngestError::Schema {
            json_path: json_path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MarkupError {
    #[error("malformed markup: {0}")]
    Malformed(String),
    #[error("ragged grid: no cell covers positions {0:?}")]
    RaggedGrid(Vec<(usize, usize)>),
}

// ---------------------------------------------------------------------------
// Markup parsing
// ---------------------------------------------------------------------------

#[derive(Debug, PartialEq)]
enum MarkupEvent {
    Open {
        name: String,
        attrs: Vec<(String, String)>,
        self_closing: bool,
    },
    Close {
        name: String,
    },
    Text(String),
}

/// Spans larger than this are clamped, mirroring the HTML limit on colspan.
const MAX_SPAN: usize = 1000;

fn decode_entities(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.char_indices().peekable();
    while let Some((i, ch)) = chars.next() {
        if ch != '&' {
            out.push(ch);
            continue;
        }
        let rest = &raw[i + 1..];
        let Some(end) = rest.find(';').filter(|&e| e <= 32) else {
            out.push(ch);
            continue;
        };
        let entity = &rest[..end];
        let decoded = match entity {
            "amp" => Some('&'),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "quot" => Some('"'),
            "apos" => Some('\''),
            "nbsp" => Some('\u{a0}'),
            _ => entity
                .strip_prefix('#')
                .and_then(|num| {
                    if let Some(hex) = num.strip_prefix('x').or_else(|| num.strip_prefix('X')) {
                        u32::from_str_radix(hex, 16).ok()
                    } else {
                        num.parse::<u32>().ok()
                    }
                })
                .and_then(char::from_u32),
        };
        match decoded {
            Some(c) => {
                out.push(c);
                for _ in 0..=end {
                    chars.next();
                }
            }
            None => out.push(ch),
        }
    }
    out
}

fn tokenize_markup(markup: &str) -> Result<Vec<MarkupEvent>, MarkupError> {
    let mut events = Vec::new();
    let bytes = markup.as_bytes();
    let mut pos = 0;
    while pos < bytes.len() {
        if bytes[pos] != b'<' {
            let end = markup[pos..].find('<').map_or(bytes.len(), |o| pos + o);
            events.push(MarkupEvent::Text(decode_entities(&markup[pos..end])));
            pos = end;
            continue;
        }
        if markup[pos..].starts_with("<!--") {
            let end = markup[pos..]
                .find("-->")
                .ok_or_else(|| MarkupError::Malformed("unterminated comment".into()))?;
            pos += end + 3;
            continue;
        }
        if markup[pos..].starts_with("<!") || markup[pos..].starts_with("<?") {
            let end = markup[pos..]
                .find('>')
                .ok_or_else(|| MarkupError::Malformed("unterminated declaration".into()))?;
            pos += end + 1;
            continue;
        }
        let end = markup[pos..]
            .find('>')
            .ok_or_else(|| MarkupError::Malformed("unterminated tag".into()))?;
        let inner = &markup[pos + 1..pos + end];
        pos += end + 1;
        if let Some(name) = inner.strip_prefix('/') {
            events.push(MarkupEvent::Close {
                name: name.trim().to_ascii_lowercase(),
            });
            continue;
        }
        let (inner, self_closing) = match inner.strip_suffix('/') {
            Some(i) => (i, true),
            None => (inner, false),
        };
        let mut parts = inner.splitn(2, |c: char| c.is_whitespace());
        let name = parts
            .next()
            .filter(|n| !n.is_empty())
            .ok_or_else(|| MarkupError::Malformed("empty tag name".into()))?
            .to_ascii_lowercase();
        let attrs = parts.next().map_or_else(Vec::new, parse_attrs);
        events.push(MarkupEvent::Open {
            name,
            attrs,
            self_closing,
        });
    }
    Ok(events)
}

fn parse_attrs(raw: &str) -> Vec<(String, String)> {
    let mut attrs = Vec::new();
    let mut rest = raw.trim();
    while !rest.is_empty() {
        let name_end = rest
            .find(|c: char| c == '=' || c.is_whitespace())
            .unwrap_or(rest.len());
        let name = rest[..name_end].to_ascii_lowercase();
        rest = rest[name_end..].trim_start();
        let value = if let Some(r) = rest.strip_prefix('=') {
            let r = r.trim_start();
            if let Some(q) = r.strip_prefix('"') {
                let end = q.find('"').unwrap_or(q.len());
                rest = q.get(end + 1..).unwrap_or("");
                q[..end].to_string()
            } else if let Some(q) = r.strip_prefix('\'') {
                let end = q.find('\'').unwrap_or(q.len());
                rest = q.get(end + 1..).unwrap_or("");
                q[..end].to_string()
            } else {
                let end = r.find(char::is_whitespace).unwrap_or(r.len());
                rest = &r[end..];
                r[..end].to_string()
            }
        } else {
            String::new()
        };
        rest = rest.trim_start();
        if !name.is_empty() {
            attrs.push((name, decode_entities(&value)));
        }
    }
    attrs
}

/// Collapses whitespace runs to single spaces and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn span_attr(attrs: &[(String, String)], name: &str) -> usize {
    attrs
        .iter()
        .find(|(n, _)| n == name)
        .and_then(|(_, v)| v.trim().parse::<usize>().ok())
        .map_or(1, |v| v.clamp(1, MAX_SPAN))
}

struct PendingCell {
    cell: usize,
    text: String,
}

/// Parses table markup into a [`TableAnnotation`]. Cells are placed by the
/// standard left-to-right, top-to-bottom rule; `thead`/`th` cells get the
/// column-header flag. A `rowspan` running past the last row is clamped.
pub fn parse_markup(markup: &str) -> Result<TableAnnotation, MarkupError> {
    let events = tokenize_markup(markup)?;

    let mut cells: Vec<Cell> = Vec::new();
    // Claims per (row, col) made by spans from earlier rows.
    let mut carryover: Vec<Vec<bool>> = Vec::new();
    let mut seen_table = false;
    let mut in_table = false;
    let mut in_thead = false;
    let mut group_depth = 0usize; // open thead/tbody
    let mut row: Option<usize> = None;
    let mut next_row = 0usize;
    let mut col = 0usize;
    let mut open_cell: Option<PendingCell> = None;
    let mut n_cols = 0usize;

    let claim = |carryover: &mut Vec<Vec<bool>>, r: usize, c: usize| {
        while carryover.len() <= r {
            carryover.push(Vec::new());
        }
        let row = &mut carryover[r];
        while row.len() <= c {
            row.push(false);
        }
        row[c] = true;
    };
    let claimed = |carryover: &Vec<Vec<bool>>, r: usize, c: usize| -> bool {
        carryover
            .get(r)
            .and_then(|row| row.get(c))
            .copied()
            .unwrap_or(false)
    };

    for event in events {
        match event {
            MarkupEvent::Open {
                name,
                attrs,
                self_closing,
            } => match name.as_str() {
                "table" => {
                    if in_table {
                        return Err(MarkupError::Malformed("nested table".into()));
                    }
                    if seen_table {
                        return Err(MarkupError::Malformed("more than one table element".into()));
                    }
                    seen_table = true;
                    if !self_closing {
                        in_table = true;
                    }
                }
                "thead" | "tbody" => {
                    if !in_table || row.is_some() || group_depth > 0 {
                        return Err(MarkupError::Malformed(format!("misplaced <{name}>")));
                    }
                    if !self_closing {
                        group_depth += 1;
                        in_thead = name == "thead";
                    }
                }
                "tr" => {
                    if !in_table || row.is_some() {
                        return Err(MarkupError::Malformed("misplaced <tr>".into()));
                    }
                    if !self_closing {
                        row = Some(next_row);
                        col = 0;
                    }
                    next_row += 1;
                }
                "td" | "th" => {
                    let Some(r) = row else {
                        return Err(MarkupError::Malformed(format!("<{name}> outside a row")));
                    };
                    if open_cell.is_some() {
                        return Err(MarkupError::Malformed("cell inside cell".into()));
                    }
                    while claimed(&carryover, r, col) {
                        col += 1;
                    }
                    let colspan = span_attr(&attrs, "colspan");
                    let rowspan = span_attr(&attrs, "rowspan");
                    let mut cell = Cell::spanning(r, r + rowspan - 1, col, col + colspan - 1, "");
                    cell.is_column_header = in_thead || name == "th";
                    for rr in r..r + rowspan {
                        for cc in col..col + colspan {
                            claim(&mut carryover, rr, cc);
                        }
                    }
                    col += colspan;
                    n_cols = n_cols.max(col);
                    let index = cells.len();
                    cells.push(cell);
                    if self_closing {
                        // empty cell, nothing more to do
                    } else {
                        open_cell = Some(PendingCell {
                            cell: index,
                            text: String::new(),
                        });
                    }
                }
                // Inline tags inside a cell contribute text only; anything
                // structural outside a cell is unsupported.
                _ => {
                    if open_cell.is_none() {
                        return Err(MarkupError::Malformed(format!("unsupported tag <{name}>")));
                    }
                }
            },
            MarkupEvent::Close { name } => match name.as_str() {
                "table" => {
                    if !in_table || row.is_some() || group_depth > 0 {
                        return Err(MarkupError::Malformed("mismatched </table>".into()));
                    }
                    in_table = false;
                }
                "thead" | "tbody" => {
                    if group_depth == 0 || row.is_some() {
                        return Err(MarkupError::Malformed(format!("mismatched </{name}>")));
                    }
                    group_depth -= 1;
                    in_thead = false;
                }
                "tr" => {
                    if row.is_none() || open_cell.is_some() {
                        return Err(MarkupError::Malformed("mismatched </tr>".into()));
                    }
                    row = None;
                }
                "td" | "th" => {
                    let Some(pending) = open_cell.take() else {
                        return Err(MarkupError::Malformed(format!("mismatched </{name}>")));
                    };
                    cells[pending.cell].text = normalize_whitespace(&pending.text);
                }
                _ => {
                    if open_cell.is_none() {
                        return Err(MarkupError::Malformed(format!("unsupported tag </{name}>")));
                    }
                }
            },
            MarkupEvent::Text(text) => {
                if let Some(pending) = open_cell.as_mut() {
                    pending.text.push_str(&text);
                } else if !text.chars().all(char::is_whitespace) {
                    return Err(MarkupError::Malformed("text outside a cell".into()));
                }
            }
        }
    }

    if in_table || row.is_some() || open_cell.is_some() || group_depth > 0 {
        return Err(MarkupError::Malformed(
            "unclosed element at end of input".into(),
        ));
    }
    if !seen_table {
        return Err(MarkupError::Malformed("no table element".into()));
    }

    let n_rows = next_row;
    for cell in &mut cells {
        if cell.row_end >= n_rows {
            cell.row_end = n_rows.saturating_sub(1);
        }
    }
    let table = TableAnnotation::new(n_rows, n_cols, cells);
    match table.validate_grid() {
        Ok(_) => Ok(table),
        Err(GridError::Gap(positions)) => Err(MarkupError::RaggedGrid(positions)),
        Err(e) => Err(MarkupError::Malformed(e.to_string())),
    }
}

// ---------------------------------------------------------------------------
// JSON formats
// ---------------------------------------------------------------------------

fn read_file(path: &Path) -> Result<Value, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| IngestError::Json {
        path: path.display().to_string(),
        source,
    })
}

fn as_object<'v>(
    value: &'v Value,
    path: &str,
) -> Result<&'v serde_json::Map<String, Value>, IngestError> {
    value
        .as_object()
        .ok_or_else(|| IngestError::schema(path, "expected an object"))
}

fn field<'v>(
    obj: &'v serde_json::Map<String, Value>,
    parent: &str,
    name: &str,
) -> Result<&'v Value, IngestError> {
    obj.get(name)
        .ok_or_else(|| IngestError::schema(format!("{parent}.{name}"), "missing required field"))
}

fn as_count(value: &Value, path: &str) -> Result<usize, IngestError> {
    value
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| IngestError::schema(path, "expected a non-negative integer"))
}

fn as_bool(value: &Value, path: &str) -> Result<bool, IngestError> {
    value
        .as_bool()
        .ok_or_else(|| IngestError::schema(path, "expected a boolean"))
}

fn as_string(value: &Value, path: &str) -> Result<String, IngestError> {
    value
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| IngestError::schema(path, "expected a string"))
}

fn parse_bbox(value: &Value, path: &str) -> Result<BBox, IngestError> {
    let arr = value
        .as_array()
        .filter(|a| a.len() == 4)
        .ok_or_else(|| IngestError::schema(path, "expected [x_min, y_min, x_max, y_max]"))?;
    let mut coords = [0.0f64; 4];
    for (i, v) in arr.iter().enumerate() {
        coords[i] = v
            .as_f64()
            .ok_or_else(|| IngestError::schema(format!("{path}[{i}]"), "expected a number"))?;
    }
    let bbox = BBox::from(coords);
    if !bbox.is_valid() {
        return Err(IngestError::schema(
            path,
            format!(
                "invalid box: x_min <= x_max and y_min <= y_max required, got {:?}",
                coords
            ),
        ));
    }
    Ok(bbox)
}

fn parse_cell(value: &Value, path: &str) -> Result<Cell, IngestError> {
    let obj = as_object(value, path)?;
    let row_start = as_count(field(obj, path, "row_start")?, &format!("{path}.row_start"))?;
    let row_end = as_count(field(obj, path, "row_end")?, &format!("{path}.row_end"))?;
    let col_start = as_count(field(obj, path, "col_start")?, &format!("{path}.col_start"))?;
    let col_end = as_count(field(obj, path, "col_end")?, &format!("{path}.col_end"))?;
    if row_end < row_start {
        return Err(IngestError::schema(
            format!("{path}.row_end"),
            "row_end < row_start",
        ));
    }
    if col_end < col_start {
        return Err(IngestError::schema(
            format!("{path}.col_end"),
            "col_end < col_start",
        ));
    }
    let mut cell = Cell::spanning(row_start, row_end, col_start, col_end, "");
    if let Some(v) = obj.get("text") {
        cell.text = as_string(v, &format!("{path}.text"))?;
    }
    for (name, slot) in [
        ("is_column_header", &mut cell.is_column_header),
        ("is_projected_row_header", &mut cell.is_projected_row_header),
        ("is_row_header", &mut cell.is_row_header),
    ] {
        if let Some(v) = obj.get(name) {
            *slot = as_bool(v, &format!("{path}.{name}"))?;
        }
    }
    if let Some(v) = obj.get("text_box").filter(|v| !v.is_null()) {
        cell.text_box = Some(parse_bbox(v, &format!("{path}.text_box"))?);
    }
    if let Some(v) = obj.get("grid_box").filter(|v| !v.is_null()) {
        cell.grid_box = Some(parse_bbox(v, &format!("{path}.grid_box"))?);
    }
    if cell.is_blank() && cell.text_box.is_some() {
        return Err(IngestError::schema(
            format!("{path}.text_box"),
            "blank cell must not carry a text box",
        ));
    }
    Ok(cell)
}

fn parse_box_list(value: &Value, path: &str) -> Result<Vec<BBox>, IngestError> {
    let arr = value
        .as_array()
        .ok_or_else(|| IngestError::schema(path, "expected an array of boxes"))?;
    arr.iter()
        .enumerate()
        .map(|(i, v)| parse_bbox(v, &format!("{path}[{i}]")))
        .collect()
}

/// Parses and validates a table JSON value, reporting the JSON path of the
/// first offending field. The cells must tile the grid.
pub fn table_from_value(value: &Value) -> Result<TableAnnotation, IngestError> {
    let obj = as_object(value, "$")?;
    let n_rows = as_count(field(obj, "$", "n_rows")?, "$.n_rows")?;
    let n_cols = as_count(field(obj, "$", "n_cols")?, "$.n_cols")?;
    let cells_value = field(obj, "$", "cells")?;
    let cells_arr = cells_value
        .as_array()
        .ok_or_else(|| IngestError::schema("$.cells", "expected an array"))?;
    let mut cells = Vec::with_capacity(cells_arr.len());
    for (i, v) in cells_arr.iter().enumerate() {
        cells.push(parse_cell(v, &format!("$.cells[{i}]"))?);
    }
    let mut table = TableAnnotation::new(n_rows, n_cols, cells);
    if let Some(v) = obj.get("rows").filter(|v| !v.is_null()) {
        let rows = parse_box_list(v, "$.rows")?;
        if rows.len() != n_rows {
            return Err(IngestError::schema("$.rows", "length must equal n_rows"));
        }
        table.rows = Some(rows);
    }
    if let Some(v) = obj.get("columns").filter(|v| !v.is_null()) {
        let cols = parse_box_list(v, "$.columns")?;
        if cols.len() != n_cols {
            return Err(IngestError::schema("$.columns", "length must equal n_cols"));
        }
        table.columns = Some(cols);
    }
    if let Some(v) = obj.get("table_box").filter(|v| !v.is_null()) {
        table.table_box = Some(parse_bbox(v, "$.table_box")?);
    }
    if let Some(v) = obj.get("rotated") {
        table.rotated = as_bool(v, "$.rotated")?;
    }
    table.validate_grid()?;
    Ok(table)
}

/// Parses and validates a token-sequence JSON value.
pub fn tokens_from_value(value: &Value) -> Result<TokenSequence, IngestError> {
    let obj = as_object(value, "$")?;
    let granularity = match field(obj, "$", "granularity")?.as_str() {
        Some("char") => Granularity::Char,
        Some("word") => Granularity::Word,
        _ => {
            return Err(IngestError::schema(
                "$.granularity",
                "expected \"char\" or \"word\"",
            ));
        }
    };
    let tokens_value = field(obj, "$", "tokens")?;
    let arr = tokens_value
        .as_array()
        .ok_or_else(|| IngestError::schema("$.tokens", "expected an array"))?;
    let mut tokens = Vec::with_capacity(arr.len());
    for (i, v) in arr.iter().enumerate() {
        let path = format!("$.tokens[{i}]");
        let obj = as_object(v, &path)?;
        let text = as_string(field(obj, &path, "text")?, &format!("{path}.text"))?;
        if text.is_empty() {
            return Err(IngestError::schema(
                format!("{path}.text"),
                "token text must be non-empty",
            ));
        }
        if granularity == Granularity::Char && text.chars().count() != 1 {
            return Err(IngestError::schema(
                format!("{path}.text"),
                "char-granularity token must be a single character",
            ));
        }
        let bbox = parse_bbox(field(obj, &path, "bbox")?, &format!("{path}.bbox"))?;
        tokens.push(Token { text, bbox });
    }
    Ok(TokenSequence {
        granularity,
        tokens,
    })
}

pub fn load_table(path: &Path) -> Result<TableAnnotation, IngestError> {
    table_from_value(&read_file(path)?)
}

pub fn load_tokens(path: &Path) -> Result<TokenSequence, IngestError> {
    tokens_from_value(&read_file(path)?)
}

pub fn save_table(table: &TableAnnotation, path: &Path) -> Result<(), IngestError> {
    let body = serde_json::to_string_pretty(table).expect("table serialization cannot fail");
    fs::write(path, body + "\n").map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn save_tokens(tokens: &TokenSequence, path: &Path) -> Result<(), IngestError> {
    let body = serde_json::to_string_pretty(tokens).expect("token serialization cannot fail");
    fs::write(path, body + "\n").map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parses an objects JSON file: `[{"category", "bbox", "score"}, ...]`.
pub fn objects_from_value(
    value: &Value,
) -> Result<Vec<crate::model::AnnotatedObject>, IngestError> {
    let arr = value
        .as_array()
        .ok_or_else(|| IngestError::schema("$", "expected an array of objects"))?;
    let mut objects = Vec::with_capacity(arr.len());
    for (i, v) in arr.iter().enumerate() {
        let path = format!("$[{i}]");
        let obj = as_object(v, &path)?;
        let category_raw = as_string(field(obj, &path, "category")?, &format!("{path}.category"))?;
        let category = crate::model::ObjectCategory::parse(&category_raw).ok_or_else(|| {
            IngestError::schema(
                format!("{path}.category"),
                format!("unknown category {category_raw:?}"),
            )
        })?;
        let bbox = parse_bbox(field(obj, &path, "bbox")?, &format!("{path}.bbox"))?;
        let score = match obj.get("score") {
            Some(v) => v
                .as_f64()
                .ok_or_else(|| IngestError::schema(format!("{path}.score"), "expected a number"))?,
            None => 1.0,
        };
        objects.push(crate::model::AnnotatedObject::new(category, bbox, score));
    }
    Ok(objects)
}

pub fn load_objects(path: &Path) -> Result<Vec<crate::model::AnnotatedObject>, IngestError> {
    objects_from_value(&read_file(path)?)
}

pub fn save_objects(
    objects: &[crate::model::AnnotatedObject],
    path: &Path,
) -> Result<(), IngestError> {
    let body = serde_json::to_string_pretty(objects).expect("object serialization cannot fail");
    fs::write(path, body + "\n").map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}
