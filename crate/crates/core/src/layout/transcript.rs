//! Line-oriented transcript format for designs.
//!
//! ```text
//! Frame 1: [{'id': 0, 'name': 'car', 'box': [400, 350, 100, 50]}]
//! Frame 2: [{'id': 0, 'name': 'car', 'box': [320, 350, 100, 50]}]
//! Background keyword: moon
//! Generation suggestion: emphasize id 0
//! New prompt: A car driving right to left on the moon.
//! ```
//!
//! The reader is lenient about what chat models wrap around that core
//! (reasoning prose, markdown bold, bullets, several frames on one line,
//! object lists broken across lines). The writer appends `Canvas:`,
//! `Total frames:` and `Guidance scales:` lines so a written design reads
//! back field-for-field.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;

use super::{
    BoundingBox, Canvas, KeyframeLayout, LayoutError, ObjectSpec, StructuredDesign, BETA_INIT,
    DEFAULT_CANVAS, DEFAULT_TOTAL_FRAMES,
};

/// Values the transcript itself does not carry (or may omit).
#[derive(Debug, Clone, Copy)]
pub struct ParseContext<'a> {
    pub canvas: Canvas,
    pub total_frames: u32,
    /// Scales for ids seen earlier in a run; unknown ids start at [`BETA_INIT`].
    pub prior_scales: Option<&'a BTreeMap<u32, f64>>,
    pub fallback_prompt: Option<&'a str>,
    pub fallback_background: Option<&'a str>,
}

impl Default for ParseContext<'_> {
    fn default() -> Self {
        Self {
            canvas: DEFAULT_CANVAS,
            total_frames: DEFAULT_TOTAL_FRAMES,
            prior_scales: None,
            fallback_prompt: None,
            fallback_background: None,
        }
    }
}

/// Parses a transcript block with the default 512x512 canvas and 65 frames.
pub fn parse_design_text(text: &str) -> Result<StructuredDesign, LayoutError> {
    parse_design_text_with(text, &ParseContext::default())
}

pub fn parse_design_text_with(
    text: &str,
    ctx: &ParseContext<'_>,
) -> Result<StructuredDesign, LayoutError> {
    let mut background = None;
    let mut prompt = None;
    let mut emphasis = Vec::new();
    let mut canvas = ctx.canvas;
    let mut total_frames = ctx.total_frames;
    let mut explicit_scales = BTreeMap::new();

    // Labelled lines are consumed first and blanked so their free text can
    // never be mistaken for frame headers.
    let mut body = String::with_capacity(text.len());
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        match labelled(line) {
            Some((Label::Background, value)) => background = Some(value),
            Some((Label::Prompt, value)) => prompt = Some(value),
            Some((Label::Suggestion, value)) => {
                for cap in emphasis_re().captures_iter(&value) {
                    let id = cap[1]
                        .parse::<u32>()
                        .map_err(|_| malformed(line_no, "emphasized id out of range"))?;
                    if !emphasis.contains(&id) {
                        emphasis.push(id);
                    }
                }
            }
            Some((Label::Canvas, value)) => canvas = parse_canvas(&value, line_no)?,
            Some((Label::TotalFrames, value)) => {
                total_frames = value
                    .parse()
                    .map_err(|_| malformed(line_no, "total frames is not an integer"))?
            }
            Some((Label::Scales, value)) => explicit_scales = parse_scales(&value, line_no)?,
            None => body.push_str(line),
        }
        body.push('\n');
    }

    let keyframes = parse_frames(&body, canvas)?;
    if keyframes.is_empty() {
        return Err(LayoutError::NoKeyframes);
    }

    let mut guidance_scales = explicit_scales.clone();
    for kf in &keyframes {
        for obj in &kf.objects {
            guidance_scales.entry(obj.id).or_insert_with(|| {
                ctx.prior_scales
                    .and_then(|p| p.get(&obj.id).copied())
                    .unwrap_or(BETA_INIT)
            });
        }
    }

    let design = StructuredDesign {
        canvas,
        total_frames,
        keyframes,
        background_keyword: background
            .or_else(|| ctx.fallback_background.map(str::to_owned))
            .unwrap_or_default(),
        prompt: prompt
            .or_else(|| ctx.fallback_prompt.map(|p| p.trim().to_owned()))
            .unwrap_or_default(),
        emphasis,
        guidance_scales,
    };
    design.validate()?;
    Ok(design)
}

impl StructuredDesign {
    /// Writes the transcript form. Reading it back with any [`ParseContext`]
    /// reproduces `self` exactly.
    pub fn to_transcript(&self) -> String {
        let mut out = String::new();
        for kf in &self.keyframes {
            let _ = write!(out, "Frame {}: [", kf.frame_index);
            for (i, obj) in kf.objects.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let b = obj.bbox;
                let _ = write!(
                    out,
                    "{{'id': {}, 'name': {}, 'box': [{}, {}, {}, {}]}}",
                    obj.id,
                    quote(&obj.name),
                    b.x,
                    b.y,
                    b.w,
                    b.h
                );
            }
            out.push_str("]\n");
        }
        let _ = writeln!(out, "Background keyword: {}", self.background_keyword);
        if self.emphasis.is_empty() {
            out.push_str("Generation suggestion: None\n");
        } else {
            let parts: Vec<String> = self
                .emphasis
                .iter()
                .map(|id| format!("emphasize id {id}"))
                .collect();
            let _ = writeln!(out, "Generation suggestion: {}", parts.join(", "));
        }
        let _ = writeln!(out, "New prompt: {}", self.prompt);
        let _ = writeln!(out, "Canvas: {}x{}", self.canvas.width, self.canvas.height);
        let _ = writeln!(out, "Total frames: {}", self.total_frames);
        let scales: Vec<String> = self
            .guidance_scales
            .iter()
            .map(|(id, beta)| format!("{id}: {beta}"))
            .collect();
        let _ = writeln!(out, "Guidance scales: {{{}}}", scales.join(", "));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Background,
    Prompt,
    Suggestion,
    Canvas,
    TotalFrames,
    Scales,
}

fn label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)^[\s\-*]*(background\s+keyword|generation\s+suggestion|new\s+prompt|canvas|total\s+frames|guidance\s+scales)\s*\**\s*:\s*\**(.*)$",
        )
        .unwrap()
    })
}

/// Any `Word words:` line, used to end a frame's object list.
fn label_like_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[\s\-*\d.()]*[A-Za-z][A-Za-z0-9 ]{0,40}\**\s*:").unwrap())
}

fn frame_header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bframe\s+(\d+)\s*\**\s*:").unwrap())
}

fn emphasis_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bemphasi[sz]e\s+(?:object\s+)?id\s*(\d+)").unwrap())
}

fn labelled(line: &str) -> Option<(Label, String)> {
    let caps = label_re().captures(line)?;
    let key = caps[1].to_ascii_lowercase();
    let key: String = key.split_whitespace().collect::<Vec<_>>().join(" ");
    let label = match key.as_str() {
        "background keyword" => Label::Background,
        "generation suggestion" => Label::Suggestion,
        "new prompt" => Label::Prompt,
        "canvas" => Label::Canvas,
        "total frames" => Label::TotalFrames,
        "guidance scales" => Label::Scales,
        _ => return None,
    };
    Some((label, clean_value(&caps[2])))
}

fn clean_value(raw: &str) -> String {
    let mut v = raw.trim();
    loop {
        let before = v;
        v = v.trim_end_matches('\\').trim_end();
        v = v.trim_start_matches("**").trim_end_matches("**").trim();
        if v == before {
            return v.to_owned();
        }
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> LayoutError {
    LayoutError::MalformedFrameLine {
        line,
        reason: reason.into(),
    }
}

fn parse_canvas(value: &str, line: usize) -> Result<Canvas, LayoutError> {
    let (w, h) = value
        .split_once(['x', 'X'])
        .ok_or_else(|| malformed(line, "canvas must be WIDTHxHEIGHT"))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<u32>()
            .map_err(|_| malformed(line, "canvas must be WIDTHxHEIGHT"))
    };
    Ok(Canvas {
        width: parse(w)?,
        height: parse(h)?,
    })
}

fn parse_scales(value: &str, line: usize) -> Result<BTreeMap<u32, f64>, LayoutError> {
    let inner = value
        .trim()
        .strip_prefix('{')
        .and_then(|v| v.strip_suffix('}'))
        .ok_or_else(|| malformed(line, "guidance scales must be {id: value, ...}"))?;
    let mut out = BTreeMap::new();
    for part in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (id, beta) = part
            .split_once(':')
            .ok_or_else(|| malformed(line, format!("bad guidance scale entry {part:?}")))?;
        let id = id
            .trim()
            .trim_matches(['\'', '"'])
            .parse::<u32>()
            .map_err(|_| malformed(line, format!("bad object id in {part:?}")))?;
        let beta = beta
            .trim()
            .parse::<f64>()
            .map_err(|_| malformed(line, format!("bad scale value in {part:?}")))?;
        out.insert(id, beta);
    }
    Ok(out)
}

fn parse_frames(body: &str, canvas: Canvas) -> Result<Vec<KeyframeLayout>, LayoutError> {
    let headers: Vec<_> = frame_header_re().captures_iter(body).collect();
    let mut keyframes = Vec::with_capacity(headers.len());
    for (i, caps) in headers.iter().enumerate() {
        let whole = caps.get(0).unwrap();
        let line = body[..whole.start()].matches('\n').count() + 1;
        let end = headers
            .get(i + 1)
            .map_or(body.len(), |next| next.get(0).unwrap().start());
        let segment = truncate_at_label(&body[whole.end()..end]);
        let frame_index = caps[1]
            .parse::<u32>()
            .map_err(|_| malformed(line, "frame number out of range"))?;
        let raw = parse_object_list(segment, line)?;
        let mut objects = Vec::with_capacity(raw.len());
        for obj in raw {
            let id = u32::try_from(obj.id)
                .map_err(|_| malformed(line, format!("object id {} out of range", obj.id)))?;
            let [x, y, w, h] = obj.bbox;
            let to_u32 = |v: i64| u32::try_from(v).ok();
            let bbox = match (to_u32(x), to_u32(y), to_u32(w), to_u32(h)) {
                (Some(x), Some(y), Some(w), Some(h)) => BoundingBox { x, y, w, h },
                _ => {
                    return Err(LayoutError::BoxOutOfCanvas {
                        frame: frame_index,
                        id,
                        bbox: obj.bbox,
                        width: canvas.width,
                        height: canvas.height,
                    })
                }
            };
            objects.push(ObjectSpec {
                id,
                name: obj.name,
                bbox,
            });
        }
        keyframes.push(KeyframeLayout {
            frame_index,
            objects,
        });
    }
    Ok(keyframes)
}

fn truncate_at_label(segment: &str) -> &str {
    let mut offset = 0;
    for (i, piece) in segment.split_inclusive('\n').enumerate() {
        if i > 0 && label_like_re().is_match(piece) {
            return &segment[..offset];
        }
        offset += piece.len();
    }
    segment
}

struct RawObject {
    id: i64,
    name: String,
    bbox: [i64; 4],
}

fn parse_object_list(segment: &str, line: usize) -> Result<Vec<RawObject>, LayoutError> {
    let open = segment
        .find('[')
        .ok_or_else(|| malformed(line, "expected a bracketed object list"))?;
    let chars: Vec<char> = segment[open..].chars().collect();
    let mut objects = Vec::new();
    let mut depth = 0usize;
    let mut i = 0;
    while i < chars.len() {
        match chars[i] {
            '[' => depth += 1,
            ']' => {
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    return Ok(objects);
                }
            }
            '{' => {
                let mut cursor = Cursor {
                    chars: &chars,
                    pos: i + 1,
                    line,
                };
                objects.push(cursor.object()?);
                i = cursor.pos;
                continue;
            }
            c if c.is_whitespace() || matches!(c, ',' | '\\' | '-' | '*' | '`') => {}
            c => return Err(malformed(line, format!("unexpected {c:?} in object list"))),
        }
        i += 1;
    }
    // Lists broken across lines sometimes carry a stray extra bracket and
    // never close; accept them as long as objects were found.
    if objects.is_empty() {
        Err(malformed(line, "unterminated object list"))
    } else {
        Ok(objects)
    }
}

enum Scalar {
    Int(i64),
    Str(String),
    List(Vec<i64>),
    Other,
}

struct Cursor<'a> {
    chars: &'a [char],
    pos: usize,
    line: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn err(&self, reason: impl Into<String>) -> LayoutError {
        malformed(self.line, reason)
    }

    fn expect(&mut self, c: char) -> Result<(), LayoutError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {c:?}")))
        }
    }

    /// Body of `{...}`; the opening brace is already consumed.
    fn object(&mut self) -> Result<RawObject, LayoutError> {
        let mut id = None;
        let mut name = None;
        let mut bbox = None;
        loop {
            self.skip_ws();
            match self.peek() {
                Some('}') => {
                    self.pos += 1;
                    break;
                }
                Some(',') => {
                    self.pos += 1;
                    continue;
                }
                None => return Err(self.err("unterminated object")),
                _ => {}
            }
            let key = self.key()?;
            self.expect(':')?;
            let value = self.value()?;
            match (key.as_str(), value) {
                ("id", Scalar::Int(v)) => id = Some(v),
                ("id", _) => return Err(self.err("id must be an integer")),
                ("name", Scalar::Str(s)) => name = Some(s.trim().to_owned()),
                ("name", _) => return Err(self.err("name must be a string")),
                ("box", Scalar::List(v)) if v.len() == 4 => bbox = Some([v[0], v[1], v[2], v[3]]),
                ("box", _) => return Err(self.err("box must be a list of four integers")),
                _ => {}
            }
        }
        Ok(RawObject {
            id: id.ok_or_else(|| self.err("object without 'id'"))?,
            name: name.ok_or_else(|| self.err("object without 'name'"))?,
            bbox: bbox.ok_or_else(|| self.err("object without 'box'"))?,
        })
    }

    fn key(&mut self) -> Result<String, LayoutError> {
        self.skip_ws();
        match self.peek() {
            Some('\'' | '"') => self.string(),
            Some(c) if c.is_alphabetic() || c == '_' => {
                let start = self.pos;
                while self
                    .peek()
                    .is_some_and(|c| c.is_alphanumeric() || c == '_')
                {
                    self.pos += 1;
                }
                Ok(self.chars[start..self.pos].iter().collect())
            }
            _ => Err(self.err("expected a key")),
        }
    }

    fn string(&mut self) -> Result<String, LayoutError> {
        let quote = self.peek().unwrap();
        self.pos += 1;
        let mut out = String::new();
        loop {
            match self.peek() {
                None => return Err(self.err("unterminated string")),
                Some('\\') => {
                    let escaped = self
                        .chars
                        .get(self.pos + 1)
                        .copied()
                        .ok_or_else(|| self.err("unterminated string"))?;
                    out.push(escaped);
                    self.pos += 2;
                }
                Some(c) if c == quote => {
                    self.pos += 1;
                    return Ok(out);
                }
                Some(c) => {
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
    }

    fn value(&mut self) -> Result<Scalar, LayoutError> {
        self.skip_ws();
        match self.peek() {
            Some('\'' | '"') => Ok(Scalar::Str(self.string()?)),
            Some('[') => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(']') => {
                            self.pos += 1;
                            return Ok(Scalar::List(items));
                        }
                        Some(',') => self.pos += 1,
                        Some(c) if c == '-' || c.is_ascii_digit() => items.push(self.integer()?),
                        _ => return Err(self.err("box list must contain only numbers")),
                    }
                }
            }
            Some(c) if c == '-' || c.is_ascii_digit() => Ok(Scalar::Int(self.integer()?)),
            Some(c) if c.is_alphabetic() => {
                while self.peek().is_some_and(char::is_alphanumeric) {
                    self.pos += 1;
                }
                Ok(Scalar::Other)
            }
            _ => Err(self.err("expected a value")),
        }
    }

    /// Integer, or a float with no fractional part.
    fn integer(&mut self) -> Result<i64, LayoutError> {
        let start = self.pos;
        if self.peek() == Some('-') {
            self.pos += 1;
        }
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E')
        {
            self.pos += 1;
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        if let Ok(v) = text.parse::<i64>() {
            return Ok(v);
        }
        match text.parse::<f64>() {
            Ok(v) if v.fract() == 0.0 && v.abs() < 1e15 => Ok(v as i64),
            Ok(_) => Err(self.err(format!("non-integer coordinate {text}"))),
            Err(_) => Err(self.err(format!("bad number {text:?}"))),
        }
    }
}

/// Python-repr style quoting, matching what chat models emit.
fn quote(s: &str) -> String {
    let q = if s.contains('\'') && !s.contains('"') {
        '"'
    } else {
        '\''
    };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(q);
    for c in s.chars() {
        if c == q || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push(q);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_object_frame() {
        let d = parse_design_text(
            "Frame 1: [{'id': 0, 'name': 'car', 'box': [400, 350, 100, 50]}]",
        )
        .unwrap();
        assert_eq!(d.keyframes.len(), 1);
        assert_eq!(
            d.keyframes[0].objects,
            vec![ObjectSpec::new(0, "car", BoundingBox::new(400, 350, 100, 50))]
        );
        assert_eq!(d.guidance_scales[&0], 1.0);
    }

    #[test]
    fn emphasis_phrase() {
        let d = parse_design_text(
            "Frame 1: [{'id': 0, 'name': 'car', 'box': [400, 350, 100, 50]}]\n\
             Generation suggestion: emphasize id 0",
        )
        .unwrap();
        assert_eq!(d.emphasis, vec![0]);
    }

    #[test]
    fn suggestion_none_and_odd_spacing() {
        let d = parse_design_text(
            "Frame 1: [{'id': 0, 'name': 'car', 'box': [400, 350, 100, 50]}]\n\
             Generation Suggestion : None",
        )
        .unwrap();
        assert!(d.emphasis.is_empty());
        let d = parse_design_text(
            "Frame 1: [{'id': 0, 'name': 'car', 'box': [400, 350, 100, 50]}]\n\
             Generation Suggestion : emphasize id 0.",
        )
        .unwrap();
        assert_eq!(d.emphasis, vec![0]);
    }

    #[test]
    fn empty_frame_list() {
        let d = parse_design_text("Frame 1: []").unwrap();
        assert_eq!(d.keyframes.len(), 1);
        assert!(d.keyframes[0].objects.is_empty());
    }

    #[test]
    fn double_quoted_and_markdown() {
        let d = parse_design_text(
            "- **Frame 1:** [{\"id\": 0, \"name\": \"car\", \"box\": [400, 350, 100, 50]}] - **Frame 2:** [{\"id\": 0, \"name\": \"car\", \"box\": [320, 350, 100, 50]}]",
        )
        .unwrap();
        assert_eq!(d.keyframes.len(), 2);
        assert_eq!(d.keyframes[1].objects[0].bbox.x, 320);
    }

    #[test]
    fn list_on_following_line() {
        let d = parse_design_text(
            "1. **Frame 1:** \\\\\n - [{'id': 0, 'name': 'rabbit police officer', 'box': [206, 256, 100, 150]}] \\\\\n**Explanation:**\nnothing to add",
        )
        .unwrap();
        assert_eq!(d.keyframes[0].objects[0].name, "rabbit police officer");
    }

    #[test]
    fn malformed_box() {
        let err = parse_design_text("Reasoning: x\nFrame 1: [{'id': 0, 'name': 'car', 'box': [400, 350]}]")
            .unwrap_err();
        assert_eq!(
            err,
            LayoutError::MalformedFrameLine {
                line: 2,
                reason: "box must be a list of four integers".into()
            }
        );
        assert!(matches!(
            parse_design_text("Frame 1: a car on the left"),
            Err(LayoutError::MalformedFrameLine { line: 1, .. })
        ));
        assert!(matches!(
            parse_design_text("Frame 1: [{'id': 0, 'name': 'car', 'box': [1.5, 2, 3, 4]}]"),
            Err(LayoutError::MalformedFrameLine { .. })
        ));
    }

    #[test]
    fn duplicate_id_located() {
        let err = parse_design_text(
            "Frame 1: [{'id': 0, 'name': 'car', 'box': [0, 0, 10, 10]}]\n\
             Frame 2: [{'id': 0, 'name': 'car', 'box': [0, 0, 10, 10]}, {'id': 0, 'name': 'car', 'box': [5, 5, 10, 10]}]",
        )
        .unwrap_err();
        assert_eq!(err, LayoutError::DuplicateId { frame: 2, id: 0 });
    }

    #[test]
    fn out_of_canvas_located() {
        let err = parse_design_text(
            "Frame 1: [{'id': 3, 'name': 'car', 'box': [480, 350, 100, 50]}]",
        )
        .unwrap_err();
        assert!(matches!(
            err,
            LayoutError::BoxOutOfCanvas { frame: 1, id: 3, .. }
        ));
        let err = parse_design_text(
            "Frame 1: [{'id': 3, 'name': 'car', 'box': [-5, 350, 100, 50]}]",
        )
        .unwrap_err();
        assert!(matches!(
            err,
            LayoutError::BoxOutOfCanvas { frame: 1, id: 3, bbox: [-5, 350, 100, 50], .. }
        ));
    }

    #[test]
    fn no_frames() {
        assert_eq!(
            parse_design_text("Reasoning: nothing here.\nBackground keyword: moon"),
            Err(LayoutError::NoKeyframes)
        );
    }

    #[test]
    fn prior_scales_and_fallbacks() {
        let prior: BTreeMap<u32, f64> = [(0, 1.15)].into();
        let ctx = ParseContext {
            prior_scales: Some(&prior),
            fallback_prompt: Some("a car"),
            fallback_background: Some("moon"),
            ..ParseContext::default()
        };
        let d = parse_design_text_with(
            "Frame 1: [{'id': 0, 'name': 'car', 'box': [0, 0, 10, 10]}, {'id': 1, 'name': 'tree', 'box': [20, 0, 10, 10]}]",
            &ctx,
        )
        .unwrap();
        assert_eq!(d.guidance_scales, [(0, 1.15), (1, 1.0)].into());
        assert_eq!(d.prompt, "a car");
        assert_eq!(d.background_keyword, "moon");
    }

    #[test]
    fn quoting_round_trips() {
        for name in ["car", "driver's car", "a \"b\" 'c'", "back\\slash"] {
            let d = StructuredDesign::new(
                Canvas::default(),
                65,
                vec![KeyframeLayout {
                    frame_index: 1,
                    objects: vec![ObjectSpec::new(0, name, BoundingBox::new(1, 2, 3, 4))],
                }],
                "moon",
                "p",
            )
            .unwrap();
            assert_eq!(parse_design_text(&d.to_transcript()).unwrap(), d);
        }
    }
}
