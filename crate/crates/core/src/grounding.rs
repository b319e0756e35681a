//! Grounding label markup: points, boxes, polygons, OCR spans, object references
//! and temporal clips.
//!
//! Spatial coordinates are integers normalized to `[0, 1000)`. Emitted text uses a
//! single space after every comma:
//!
//! ```text
//! <|point_start|>[[500, 250]]<|point_end|>
//! <|object_ref_start|>dog<|object_ref_end|><|box_start|>[[1, 2, 3, 4]]<|box_end|>
//! <|ocr_text_start|>EXIT<|ocr_text_end|><|polygon_start|>[[[0, 0], [9, 0], [9, 9]]]<|polygon_end|>
//! <|clip_time_start|>[22.3, 23.8]<|clip_time_end|> handbag appears
//! ```
//!
//! Polygon vertices are clockwise in image coordinates (y grows downward), i.e. the
//! shoelace sum is positive.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exclusive upper bound of normalized coordinates.
pub const COORD_LIMIT: u16 = 1000;

pub type Point = [u16; 2];
/// `[x1, y1, x2, y2]`, top-left then bottom-right.
pub type BoxCoords = [u16; 4];
pub type Polygon = Vec<Point>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroundingItem {
    Points {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        object: Option<String>,
        points: Vec<Point>,
    },
    Boxes {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        object: Option<String>,
        boxes: Vec<BoxCoords>,
    },
    Polygons {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        object: Option<String>,
        polygons: Vec<Polygon>,
    },
    OcrBoxes {
        text: String,
        boxes: Vec<BoxCoords>,
    },
    OcrPolygons {
        text: String,
        polygons: Vec<Polygon>,
    },
    ClipTime {
        start_s: f64,
        end_s: f64,
        #[serde(default)]
        caption: String,
    },
    /// An object reference not followed by geometry.
    ObjectRef {
        object: String,
    },
}

const POINT: Tag = Tag("point");
const BOX: Tag = Tag("box");
const POLYGON: Tag = Tag("polygon");
const OBJECT_REF: Tag = Tag("object_ref");
const OCR_TEXT: Tag = Tag("ocr_text");
const CLIP_TIME: Tag = Tag("clip_time");
const ALL_TAGS: [Tag; 6] = [POINT, BOX, POLYGON, OBJECT_REF, OCR_TEXT, CLIP_TIME];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Tag(&'static str);

impl Tag {
    fn start(self) -> String {
        format!("<|{}_start|>", self.0)
    }

    fn end(self) -> String {
        format!("<|{}_end|>", self.0)
    }
}

/// Twice the signed area; positive for clockwise order in y-down coordinates.
pub fn shoelace(polygon: &[Point]) -> i64 {
    let n = polygon.len();
    (0..n)
        .map(|i| {
            let [x0, y0] = polygon[i];
            let [x1, y1] = polygon[(i + 1) % n];
            x0 as i64 * y1 as i64 - x1 as i64 * y0 as i64
        })
        .sum()
}

fn check_coord(v: u16) -> std::result::Result<(), String> {
    if v >= COORD_LIMIT {
        Err(format!("coordinate {v} outside [0, 1000)"))
    } else {
        Ok(())
    }
}

fn check_box(b: &BoxCoords) -> std::result::Result<(), String> {
    b.iter().try_for_each(|&v| check_coord(v))?;
    if b[0] > b[2] || b[1] > b[3] {
        return Err(format!("inverted box {b:?}: need x1 <= x2 and y1 <= y2"));
    }
    Ok(())
}

fn check_polygon(p: &[Point]) -> std::result::Result<(), String> {
    if p.len() < 3 {
        return Err(format!("polygon has {} vertices, need at least 3", p.len()));
    }
    p.iter().flatten().try_for_each(|&v| check_coord(v))?;
    let area = shoelace(p);
    if area == 0 {
        return Err("degenerate polygon with zero area".into());
    }
    if area < 0 {
        return Err("polygon vertices are counter-clockwise".into());
    }
    Ok(())
}

fn check_text(what: &str, s: &str) -> std::result::Result<(), String> {
    if s.contains("<|") {
        return Err(format!("{what} must not contain '<|'"));
    }
    Ok(())
}

fn non_empty<T>(what: &str, v: &[T]) -> std::result::Result<(), String> {
    if v.is_empty() {
        Err(format!("{what} list is empty"))
    } else {
        Ok(())
    }
}

impl GroundingItem {
    /// Check the item's invariants, returning the violated one.
    pub fn validate(&self) -> Result<()> {
        self.check().map_err(Error::InvalidInput)
    }

    fn check(&self) -> std::result::Result<(), String> {
        match self {
            GroundingItem::Points { object, points } => {
                if let Some(o) = object {
                    check_text("object", o)?;
                }
                non_empty("point", points)?;
                points.iter().flatten().try_for_each(|&v| check_coord(v))
            }
            GroundingItem::Boxes { object, boxes } => {
                if let Some(o) = object {
                    check_text("object", o)?;
                }
                non_empty("box", boxes)?;
                boxes.iter().try_for_each(check_box)
            }
            GroundingItem::Polygons { object, polygons } => {
                if let Some(o) = object {
                    check_text("object", o)?;
                }
                non_empty("polygon", polygons)?;
                polygons.iter().try_for_each(|p| check_polygon(p))
            }
            GroundingItem::OcrBoxes { text, boxes } => {
                check_text("OCR text", text)?;
                non_empty("box", boxes)?;
                boxes.iter().try_for_each(check_box)
            }
            GroundingItem::OcrPolygons { text, polygons } => {
                check_text("OCR text", text)?;
                non_empty("polygon", polygons)?;
                polygons.iter().try_for_each(|p| check_polygon(p))
            }
            GroundingItem::ClipTime { start_s, end_s, caption } => {
                if !(start_s.is_finite() && end_s.is_finite() && *start_s >= 0.0 && start_s <= end_s) {
                    return Err(format!("clip times must satisfy 0 <= t1 <= t2, got [{start_s}, {end_s}]"));
                }
                check_text("caption", caption)?;
                if caption.contains('\n') || caption.trim() != caption {
                    return Err("caption must be a single trimmed line".into());
                }
                Ok(())
            }
            GroundingItem::ObjectRef { object } => check_text("object", object),
        }
    }
}

fn write_points(out: &mut String, points: &[Point]) {
    out.push('[');
    for (i, [x, y]) in points.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "[{x}, {y}]");
    }
    out.push(']');
}

fn write_boxes(out: &mut String, boxes: &[BoxCoords]) {
    out.push('[');
    for (i, [x1, y1, x2, y2]) in boxes.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "[{x1}, {y1}, {x2}, {y2}]");
    }
    out.push(']');
}

fn write_polygons(out: &mut String, polygons: &[Polygon]) {
    out.push('[');
    for (i, p) in polygons.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_points(out, p);
    }
    out.push(']');
}

fn wrap(out: &mut String, tag: Tag, body: impl FnOnce(&mut String)) {
    out.push_str(&tag.start());
    body(out);
    out.push_str(&tag.end());
}

/// Render one item as markup.
pub fn emit_grounding(item: &GroundingItem) -> Result<String> {
    item.validate()?;
    let mut out = String::new();
    let prefix = |out: &mut String, tag: Tag, text: &str| wrap(out, tag, |o| o.push_str(text));
    match item {
        GroundingItem::Points { object, points } => {
            if let Some(o) = object {
                prefix(&mut out, OBJECT_REF, o);
            }
            wrap(&mut out, POINT, |o| write_points(o, points));
        }
        GroundingItem::Boxes { object, boxes } => {
            if let Some(o) = object {
                prefix(&mut out, OBJECT_REF, o);
            }
            wrap(&mut out, BOX, |o| write_boxes(o, boxes));
        }
        GroundingItem::Polygons { object, polygons } => {
            if let Some(o) = object {
                prefix(&mut out, OBJECT_REF, o);
            }
            wrap(&mut out, POLYGON, |o| write_polygons(o, polygons));
        }
        GroundingItem::OcrBoxes { text, boxes } => {
            prefix(&mut out, OCR_TEXT, text);
            wrap(&mut out, BOX, |o| write_boxes(o, boxes));
        }
        GroundingItem::OcrPolygons { text, polygons } => {
            prefix(&mut out, OCR_TEXT, text);
            wrap(&mut out, POLYGON, |o| write_polygons(o, polygons));
        }
        GroundingItem::ClipTime { start_s, end_s, caption } => {
            // Debug formatting is the shortest exact round-trip form and keeps ".0".
            wrap(&mut out, CLIP_TIME, |o| {
                let _ = write!(o, "[{start_s:?}, {end_s:?}]");
            });
            if !caption.is_empty() {
                out.push(' ');
                out.push_str(caption);
            }
        }
        GroundingItem::ObjectRef { object } => prefix(&mut out, OBJECT_REF, object),
    }
    Ok(out)
}

/// How [`parse_grounding_with`] treats malformed spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    /// Fail on the first malformed span.
    #[default]
    Strict,
    /// Skip malformed spans, report them, and reverse counter-clockwise polygons.
    Lenient,
}

/// A malformed span skipped in lenient mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseIssue {
    pub offset: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParseOutcome {
    pub items: Vec<GroundingItem>,
    pub issues: Vec<ParseIssue>,
}

/// Parse every grounding span in `text`, strictly.
pub fn parse_grounding(text: &str) -> Result<Vec<GroundingItem>> {
    parse_grounding_with(text, ParseMode::Strict).map(|o| o.items)
}

pub fn parse_grounding_with(text: &str, mode: ParseMode) -> Result<ParseOutcome> {
    let mut parser = Parser { text, mode, pos: 0 };
    let mut outcome = ParseOutcome::default();
    while let Some(at) = parser.next_tag_start() {
        match parser.item_at(at) {
            Ok(Some(item)) => outcome.items.push(item),
            Ok(None) => {}
            Err(issue) => match mode {
                ParseMode::Strict => {
                    return Err(Error::Parse {
                        offset: issue.offset,
                        reason: issue.reason,
                    })
                }
                ParseMode::Lenient => outcome.issues.push(issue.issue),
            },
        }
    }
    Ok(outcome)
}

/// A failure plus where parsing resumes.
struct Failure {
    offset: usize,
    reason: String,
    resume: usize,
    issue: ParseIssue,
}

fn fail(offset: usize, reason: impl Into<String>, resume: usize) -> Failure {
    let reason = reason.into();
    Failure {
        offset,
        reason: reason.clone(),
        resume,
        issue: ParseIssue { offset, reason },
    }
}

struct Parser<'a> {
    text: &'a str,
    mode: ParseMode,
    pos: usize,
}

enum TagKind {
    Start(Tag),
    End(Tag),
    Other,
}

impl<'a> Parser<'a> {
    fn next_tag_start(&self) -> Option<usize> {
        self.text[self.pos..].find("<|").map(|i| self.pos + i)
    }

    /// Classify the tag beginning at `at`, returning its kind and byte length.
    fn tag_at(&self, at: usize) -> (TagKind, usize) {
        let rest = &self.text[at..];
        for tag in ALL_TAGS {
            let s = tag.start();
            if rest.starts_with(&s) {
                return (TagKind::Start(tag), s.len());
            }
            let e = tag.end();
            if rest.starts_with(&e) {
                return (TagKind::End(tag), e.len());
            }
        }
        match rest[2..].find("|>") {
            Some(i) => (TagKind::Other, i + 4),
            None => (TagKind::Other, 2),
        }
    }

    fn item_at(&mut self, at: usize) -> std::result::Result<Option<GroundingItem>, Failure> {
        let (kind, len) = self.tag_at(at);
        let result = match kind {
            TagKind::Other => {
                self.pos = at + len;
                return Ok(None);
            }
            TagKind::End(tag) => Err(fail(at, format!("unbalanced {} without a matching start", tag.end()), at + len)),
            TagKind::Start(tag) if tag == OBJECT_REF => self.object_ref(at),
            TagKind::Start(tag) if tag == OCR_TEXT => self.ocr(at),
            TagKind::Start(tag) if tag == CLIP_TIME => self.clip(at),
            TagKind::Start(tag) => self.geometry(at, tag, None),
        };
        match result {
            Ok((item, end)) => {
                self.pos = end;
                Ok(Some(item))
            }
            Err(f) => {
                self.pos = f.resume;
                Err(f)
            }
        }
    }

    /// Text between `tag`'s start at `at` and its end tag; returns (content start, content, end of span).
    fn span(&self, at: usize, tag: Tag) -> std::result::Result<(usize, &'a str, usize), Failure> {
        let open = tag.start();
        let close = tag.end();
        let body_start = at + open.len();
        let rest = &self.text[body_start..];
        let Some(end_rel) = rest.find(&close) else {
            return Err(fail(at, format!("unterminated {open}"), body_start));
        };
        let body = &rest[..end_rel];
        if let Some(nested) = body.find("<|") {
            return Err(fail(
                body_start + nested,
                format!("unbalanced delimiters inside {open}"),
                body_start + end_rel + close.len(),
            ));
        }
        Ok((body_start, body, body_start + end_rel + close.len()))
    }

    fn object_ref(&self, at: usize) -> std::result::Result<(GroundingItem, usize), Failure> {
        let (_, object, end) = self.span(at, OBJECT_REF)?;
        let object = object.to_string();
        for tag in [POINT, BOX, POLYGON] {
            if self.text[end..].starts_with(&tag.start()) {
                return self.geometry(end, tag, Some(object));
            }
        }
        Ok((GroundingItem::ObjectRef { object }, end))
    }

    fn ocr(&self, at: usize) -> std::result::Result<(GroundingItem, usize), Failure> {
        let (_, text, end) = self.span(at, OCR_TEXT)?;
        let (tag, is_box) = if self.text[end..].starts_with(&BOX.start()) {
            (BOX, true)
        } else if self.text[end..].starts_with(&POLYGON.start()) {
            (POLYGON, false)
        } else {
            return Err(fail(end, "OCR text must be followed by a box or polygon", end));
        };
        let (body_start, body, span_end) = self.span(end, tag)?;
        let text = text.to_string();
        let item = if is_box {
            GroundingItem::OcrBoxes {
                text,
                boxes: parse_boxes(body).map_err(|r| fail(body_start, r, span_end))?,
            }
        } else {
            GroundingItem::OcrPolygons {
                text,
                polygons: self.parse_polygons(body).map_err(|r| fail(body_start, r, span_end))?,
            }
        };
        Ok((item, span_end))
    }

    fn geometry(&self, at: usize, tag: Tag, object: Option<String>) -> std::result::Result<(GroundingItem, usize), Failure> {
        let (body_start, body, end) = self.span(at, tag)?;
        let err = |r: String| fail(body_start, r, end);
        let item = match tag {
            POINT => GroundingItem::Points {
                object,
                points: parse_points(body).map_err(err)?,
            },
            BOX => GroundingItem::Boxes {
                object,
                boxes: parse_boxes(body).map_err(err)?,
            },
            POLYGON => GroundingItem::Polygons {
                object,
                polygons: self.parse_polygons(body).map_err(err)?,
            },
            _ => unreachable!("geometry tags only"),
        };
        Ok((item, end))
    }

    fn clip(&self, at: usize) -> std::result::Result<(GroundingItem, usize), Failure> {
        let (body_start, body, end) = self.span(at, CLIP_TIME)?;
        let (start_s, end_s) = parse_clip(body).map_err(|r| fail(body_start, r, end))?;
        let rest = &self.text[end..];
        let cap_len = [rest.find("<|"), rest.find('\n')].into_iter().flatten().min().unwrap_or(rest.len());
        let caption = rest[..cap_len].trim().to_string();
        Ok((GroundingItem::ClipTime { start_s, end_s, caption }, end + cap_len))
    }

    fn parse_polygons(&self, body: &str) -> std::result::Result<Vec<Polygon>, String> {
        let value = json_list(body)?;
        let polys = value.as_array().ok_or("polygon payload must be a list")?;
        if polys.is_empty() {
            return Err("polygon list is empty".into());
        }
        polys
            .iter()
            .map(|p| {
                let mut poly = points_from(p)?;
                if poly.len() < 3 {
                    return Err(format!("polygon has {} vertices, need at least 3", poly.len()));
                }
                if self.mode == ParseMode::Lenient && shoelace(&poly) < 0 {
                    poly.reverse();
                }
                check_polygon(&poly)?;
                Ok(poly)
            })
            .collect()
    }
}

fn json_list(body: &str) -> std::result::Result<serde_json::Value, String> {
    serde_json::from_str(body).map_err(|e| format!("malformed coordinate list: {e}"))
}

fn coord(v: &serde_json::Value) -> std::result::Result<u16, String> {
    let n = v.as_number().ok_or_else(|| format!("expected an integer coordinate, got {v}"))?;
    match n.as_u64() {
        Some(x) if x < COORD_LIMIT as u64 => Ok(x as u16),
        Some(x) => Err(format!("coordinate {x} outside [0, 1000)")),
        None if n.is_i64() => Err(format!("coordinate {n} outside [0, 1000)")),
        None => Err(format!("non-integer coordinate {n}")),
    }
}

fn tuple<const N: usize>(v: &serde_json::Value) -> std::result::Result<[u16; N], String> {
    let a = v.as_array().ok_or_else(|| format!("expected a list of {N} coordinates, got {v}"))?;
    if a.len() != N {
        return Err(format!("expected {N} coordinates, got {}", a.len()));
    }
    let mut out = [0u16; N];
    for (slot, x) in out.iter_mut().zip(a) {
        *slot = coord(x)?;
    }
    Ok(out)
}

fn points_from(v: &serde_json::Value) -> std::result::Result<Vec<Point>, String> {
    v.as_array().ok_or("expected a list of points")?.iter().map(tuple::<2>).collect()
}

fn parse_points(body: &str) -> std::result::Result<Vec<Point>, String> {
    let points = points_from(&json_list(body)?)?;
    non_empty("point", &points)?;
    Ok(points)
}

fn parse_boxes(body: &str) -> std::result::Result<Vec<BoxCoords>, String> {
    let value = json_list(body)?;
    let boxes: Vec<BoxCoords> = value
        .as_array()
        .ok_or("expected a list of boxes")?
        .iter()
        .map(tuple::<4>)
        .collect::<std::result::Result<_, _>>()?;
    non_empty("box", &boxes)?;
    boxes.iter().try_for_each(check_box)?;
    Ok(boxes)
}

fn parse_clip(body: &str) -> std::result::Result<(f64, f64), String> {
    let inner = body
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| format!("clip span must be [t1, t2], got {body:?}"))?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(format!("clip span needs 2 times, got {}", parts.len()));
    }
    let parse = |s: &str| -> std::result::Result<f64, String> {
        let t: f64 = s.trim_end_matches('s').parse().map_err(|_| format!("invalid time {s:?}"))?;
        if !t.is_finite() || t < 0.0 {
            return Err(format!("invalid time {s:?}"));
        }
        Ok(t)
    };
    let (t1, t2) = (parse(parts[0])?, parse(parts[1])?);
    if t1 > t2 {
        return Err(format!("clip ends before it starts: [{t1}, {t2}]"));
    }
    Ok((t1, t2))
}
