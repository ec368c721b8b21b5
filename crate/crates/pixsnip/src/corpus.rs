//! Interleaved-document ingestion and snippet segmentation.
//!
//! A corpus file holds one JSON document record per line. Two schemas are
//! supported: `mmc4`-style records carry a sentence list plus per-image
//! sentence assignments; `obelics`-style records carry an ordered text/image
//! stream whose text items are split into sentences by the ingester.
//!
//! Segmentation greedily merges consecutive sentences (single-space joins,
//! separator counted) into snippets of at most `max_chars` characters; a
//! single sentence longer than the budget is hard-split at `max_chars`
//! boundaries so no text is ever dropped.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_CHARS: usize = 1100;

/// Decoded RGB pixel buffer, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbBuffer {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl RgbBuffer {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimMismatch(format!(
                "image dimensions {width}x{height} must be at least 1x1"
            )));
        }
        if data.len() != (width as usize) * (height as usize) * 3 {
            return Err(Error::DimMismatch(format!(
                "pixel buffer has {} bytes, expected {}",
                data.len(),
                width as usize * height as usize * 3
            )));
        }
        Ok(RgbBuffer {
            width,
            height,
            data,
        })
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let at = ((y * self.width + x) * 3) as usize;
        [self.data[at], self.data[at + 1], self.data[at + 2]]
    }
}

/// Reference to a document image. Pixel data loads lazily via [`ImageRef::load`].
#[derive(Debug, Clone)]
pub struct ImageRef {
    pub image_id: String,
    pub source_path: PathBuf,
    pub pixels: Option<Arc<RgbBuffer>>,
}

impl ImageRef {
    pub fn new(image_id: impl Into<String>, source_path: impl Into<PathBuf>) -> Self {
        ImageRef {
            image_id: image_id.into(),
            source_path: source_path.into(),
            pixels: None,
        }
    }

    /// In-memory image that never touches the filesystem.
    pub fn from_buffer(image_id: impl Into<String>, buffer: RgbBuffer) -> Self {
        ImageRef {
            image_id: image_id.into(),
            source_path: PathBuf::new(),
            pixels: Some(Arc::new(buffer)),
        }
    }

    /// Decode the source file into an RGB buffer. Idempotent.
    pub fn load(&mut self) -> Result<()> {
        if self.pixels.is_some() {
            return Ok(());
        }
        let decoded = image::open(&self.source_path)?.to_rgb8();
        let (width, height) = decoded.dimensions();
        self.pixels = Some(Arc::new(RgbBuffer::new(
            width,
            height,
            decoded.into_raw(),
        )?));
        Ok(())
    }

    pub fn loaded(&self) -> Option<&RgbBuffer> {
        self.pixels.as_deref()
    }

    pub fn require_loaded(&self) -> Result<&RgbBuffer> {
        self.loaded().ok_or_else(|| Error::ImageNotLoaded {
            image_id: self.image_id.clone(),
            path: self.source_path.clone(),
        })
    }
}

/// A web document: ordered sentences plus its images.
#[derive(Debug, Clone)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<String>,
    pub images: Vec<ImageRef>,
    /// Per-image sentence assignment (image index -> sentence index), from
    /// mmc4-style annotations.
    pub assignment: Option<Vec<(usize, usize)>>,
    /// Per-image stream position: number of sentences appearing before the
    /// image, from obelics-style streams.
    pub image_positions: Option<Vec<usize>>,
}

/// Span of one sentence (or hard-split sentence piece) inside a snippet.
///
/// Spans partition the snippet text exactly: every span after the first
/// includes its single leading separator space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SentenceSpan {
    /// Byte offset range into the snippet text.
    pub start: usize,
    pub end: usize,
    /// Index of the originating sentence in the document.
    pub sentence_index: usize,
}

/// A contiguous document segment: the atomic unit rendered and embedded.
#[derive(Debug, Clone)]
pub struct Snippet {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    pub images: Vec<ImageRef>,
    pub sentence_spans: Vec<SentenceSpan>,
}

impl Snippet {
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn has_text(&self) -> bool {
        !self.text.is_empty()
    }

    pub fn has_image(&self) -> bool {
        !self.images.is_empty()
    }

    /// Sentence texts in span order, separator spaces stripped.
    pub fn sentences(&self) -> impl Iterator<Item = &str> {
        self.sentence_spans.iter().enumerate().map(move |(i, s)| {
            let start = if i == 0 { s.start } else { s.start + 1 };
            &self.text[start..s.end]
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusSchema {
    Mmc4,
    Obelics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignPolicy {
    /// Use the per-image sentence annotation carried by the document.
    Annotation,
    /// Assign each image to the closest preceding text snippet; images before
    /// any text go to the first snippet.
    ClosestPreceding,
}

#[derive(Deserialize)]
struct Mmc4Record {
    doc_id: String,
    sentences: Vec<String>,
    #[serde(default)]
    images: Vec<Mmc4Image>,
}

#[derive(Deserialize)]
struct Mmc4Image {
    image_id: String,
    path: String,
    assigned_sentence_idx: usize,
}

#[derive(Deserialize)]
struct ObelicsRecord {
    doc_id: String,
    stream: Vec<StreamItem>,
}

#[derive(Deserialize)]
struct StreamItem {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    image: Option<ObelicsImage>,
}

#[derive(Deserialize)]
struct ObelicsImage {
    image_id: String,
    path: String,
}

/// Load all documents from a newline-delimited corpus file. Image pixels are
/// not loaded; relative image paths resolve against the corpus directory.
pub fn load_corpus(path: &Path, schema: CorpusSchema) -> Result<Vec<Document>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut docs = Vec::new();
    let mut seen_ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = match schema {
            CorpusSchema::Mmc4 => parse_mmc4_record(&line, line_no, &base)?,
            CorpusSchema::Obelics => parse_obelics_record(&line, line_no, &base)?,
        };
        if !seen_ids.insert(doc.doc_id.clone()) {
            return Err(Error::CorpusRecord {
                line: line_no,
                msg: format!("duplicate doc_id {:?}", doc.doc_id),
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}

fn resolve_path(base: &Path, raw: &str) -> PathBuf {
    let p = Path::new(raw);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn parse_mmc4_record(line: &str, line_no: usize, base: &Path) -> Result<Document> {
    let record: Mmc4Record = serde_json::from_str(line).map_err(|e| Error::CorpusRecord {
        line: line_no,
        msg: e.to_string(),
    })?;
    if record.doc_id.is_empty() {
        return Err(Error::CorpusRecord {
            line: line_no,
            msg: "empty doc_id".into(),
        });
    }
    let mut images = Vec::with_capacity(record.images.len());
    let mut assignment = Vec::with_capacity(record.images.len());
    for (img_idx, img) in record.images.iter().enumerate() {
        if img.assigned_sentence_idx >= record.sentences.len() {
            return Err(Error::CorpusRecord {
                line: line_no,
                msg: format!(
                    "image {:?} assigned to sentence {} of a {}-sentence document",
                    img.image_id,
                    img.assigned_sentence_idx,
                    record.sentences.len()
                ),
            });
        }
        images.push(ImageRef::new(&img.image_id, resolve_path(base, &img.path)));
        assignment.push((img_idx, img.assigned_sentence_idx));
    }
    Ok(Document {
        doc_id: record.doc_id,
        sentences: record.sentences,
        images,
        assignment: Some(assignment),
        image_positions: None,
    })
}

fn parse_obelics_record(line: &str, line_no: usize, base: &Path) -> Result<Document> {
    let record: ObelicsRecord = serde_json::from_str(line).map_err(|e| Error::CorpusRecord {
        line: line_no,
        msg: e.to_string(),
    })?;
    if record.doc_id.is_empty() {
        return Err(Error::CorpusRecord {
            line: line_no,
            msg: "empty doc_id".into(),
        });
    }
    let mut sentences = Vec::new();
    let mut images = Vec::new();
    let mut positions = Vec::new();
    for (item_idx, item) in record.stream.iter().enumerate() {
        match (&item.text, &item.image) {
            (Some(text), None) => sentences.extend(split_sentences(text)),
            (None, Some(img)) => {
                images.push(ImageRef::new(&img.image_id, resolve_path(base, &img.path)));
                positions.push(sentences.len());
            }
            _ => {
                return Err(Error::CorpusRecord {
                    line: line_no,
                    msg: format!(
                        "stream item {item_idx} must have exactly one of `text` or `image`"
                    ),
                })
            }
        }
    }
    Ok(Document {
        doc_id: record.doc_id,
        sentences,
        images,
        assignment: None,
        image_positions: Some(positions),
    })
}

/// Split text into sentences on `. `, `! `, `? ` boundaries. The terminator
/// stays with its sentence; the single boundary space is dropped.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if matches!(bytes[i], b'.' | b'!' | b'?') && bytes.get(i + 1) == Some(&b' ') {
            out.push(text[start..=i].to_string());
            start = i + 2;
            i += 2;
        } else {
            i += 1;
        }
    }
    if start < bytes.len() {
        out.push(text[start..].to_string());
    }
    out
}

struct SnippetBuilder {
    doc_id: String,
    snippets: Vec<Snippet>,
    text: String,
    spans: Vec<SentenceSpan>,
    chars: usize,
}

impl SnippetBuilder {
    fn new(doc_id: &str) -> Self {
        SnippetBuilder {
            doc_id: doc_id.to_string(),
            snippets: Vec::new(),
            text: String::new(),
            spans: Vec::new(),
            chars: 0,
        }
    }

    fn push(&mut self, piece: &str, piece_chars: usize, sentence_index: usize) {
        let start = self.text.len();
        if self.chars > 0 {
            self.text.push(' ');
            self.chars += 1;
        }
        self.text.push_str(piece);
        self.chars += piece_chars;
        self.spans.push(SentenceSpan {
            start,
            end: self.text.len(),
            sentence_index,
        });
    }

    fn flush(&mut self) {
        if self.spans.is_empty() {
            return;
        }
        let index = self.snippets.len();
        self.snippets.push(Snippet {
            doc_id: self.doc_id.clone(),
            index,
            text: std::mem::take(&mut self.text),
            images: Vec::new(),
            sentence_spans: std::mem::take(&mut self.spans),
        });
        self.chars = 0;
    }
}

/// Greedy left-to-right segmentation into snippets of at most `max_chars`
/// characters. Deterministic; an empty document yields an empty list.
pub fn segment_document(doc: &Document, max_chars: usize) -> Vec<Snippet> {
    assert!(max_chars >= 1, "max_chars must be at least 1");
    let mut b = SnippetBuilder::new(&doc.doc_id);
    for (sentence_index, sentence) in doc.sentences.iter().enumerate() {
        let len = sentence.chars().count();
        if len <= max_chars {
            let fits = if b.chars == 0 {
                true
            } else {
                b.chars + 1 + len <= max_chars
            };
            if !fits {
                b.flush();
            }
            b.push(sentence, len, sentence_index);
        } else {
            // Over-long sentence: close the current snippet and hard-split.
            b.flush();
            let chars: Vec<char> = sentence.chars().collect();
            let mut at = 0;
            while at < chars.len() {
                let take = max_chars.min(chars.len() - at);
                let piece: String = chars[at..at + take].iter().collect();
                b.push(&piece, take, sentence_index);
                at += take;
                if at < chars.len() {
                    b.flush();
                }
            }
        }
    }
    b.flush();
    b.snippets
}

/// Reassemble the sentence stream from a document's snippets, inserting one
/// space between snippets except across hard-split continuations.
pub fn reconstruct_text(snippets: &[Snippet]) -> String {
    let mut out = String::new();
    let mut prev_last: Option<usize> = None;
    for snippet in snippets {
        let first = snippet.sentence_spans.first().map(|s| s.sentence_index);
        let continuation = prev_last.is_some() && first == prev_last;
        if !out.is_empty() && !continuation {
            out.push(' ');
        }
        out.push_str(&snippet.text);
        prev_last = snippet.sentence_spans.last().map(|s| s.sentence_index);
    }
    out
}

/// Map each document sentence index to the snippet where it begins.
fn sentence_snippet_map(doc: &Document, snippets: &[Snippet]) -> Vec<usize> {
    let mut map = vec![usize::MAX; doc.sentences.len()];
    for snippet in snippets {
        for span in &snippet.sentence_spans {
            if map[span.sentence_index] == usize::MAX {
                map[span.sentence_index] = snippet.index;
            }
        }
    }
    map
}

/// Attach each document image to exactly one snippet.
pub fn assign_images(
    doc: &Document,
    snippets: &[Snippet],
    policy: AssignPolicy,
) -> Result<Vec<Snippet>> {
    let mut out: Vec<Snippet> = snippets.to_vec();
    if doc.images.is_empty() {
        return Ok(out);
    }
    if out.is_empty() {
        return Err(Error::ImageAssignment {
            doc_id: doc.doc_id.clone(),
            msg: format!("{} images but no text snippets", doc.images.len()),
        });
    }
    let sentence_map = sentence_snippet_map(doc, snippets);
    match policy {
        AssignPolicy::Annotation => {
            let assignment = doc
                .assignment
                .as_ref()
                .ok_or_else(|| Error::MissingAssignment {
                    doc_id: doc.doc_id.clone(),
                })?;
            for &(img_idx, sent_idx) in assignment {
                if img_idx >= doc.images.len() || sent_idx >= doc.sentences.len() {
                    return Err(Error::ImageAssignment {
                        doc_id: doc.doc_id.clone(),
                        msg: format!("assignment ({img_idx}, {sent_idx}) out of range"),
                    });
                }
                let snippet_idx = sentence_map[sent_idx];
                out[snippet_idx].images.push(doc.images[img_idx].clone());
            }
        }
        AssignPolicy::ClosestPreceding => {
            let positions =
                doc.image_positions
                    .as_ref()
                    .ok_or_else(|| Error::MissingImagePositions {
                        doc_id: doc.doc_id.clone(),
                    })?;
            for (img_idx, &pos) in positions.iter().enumerate() {
                // `pos` sentences precede the image; pos == 0 means it appears
                // before any text and lands on the first snippet.
                let snippet_idx = if pos == 0 {
                    0
                } else {
                    sentence_map[pos.min(doc.sentences.len()) - 1]
                };
                out[snippet_idx].images.push(doc.images[img_idx].clone());
            }
        }
    }
    Ok(out)
}

/// Keep exactly one image, chosen uniformly, when a snippet has more than one.
pub fn select_one_image(snippet: &Snippet, rng: &mut ChaCha8Rng) -> Snippet {
    if snippet.images.len() <= 1 {
        return snippet.clone();
    }
    let keep = rng.gen_range(0..snippet.images.len());
    let mut out = snippet.clone();
    out.images = vec![out.images[keep].clone()];
    out
}

/// A corpus segmented, image-assigned, and ready for sampling or evaluation.
#[derive(Debug, Clone)]
pub struct PreparedCorpus {
    pub docs: Vec<PreparedDoc>,
}

#[derive(Debug, Clone)]
pub struct PreparedDoc {
    pub doc_id: String,
    pub snippets: Vec<Snippet>,
}

impl PreparedCorpus {
    pub fn doc_by_id(&self, doc_id: &str) -> Option<&PreparedDoc> {
        self.docs.iter().find(|d| d.doc_id == doc_id)
    }
}

/// Segment and image-assign every document; optionally decode image pixels.
pub fn prepare_corpus(
    docs: &[Document],
    policy: AssignPolicy,
    max_chars: usize,
    load_pixels: bool,
) -> Result<PreparedCorpus> {
    let mut prepared = Vec::with_capacity(docs.len());
    for doc in docs {
        let snippets = segment_document(doc, max_chars);
        let mut snippets = assign_images(doc, &snippets, policy)?;
        if load_pixels {
            for snippet in &mut snippets {
                for img in &mut snippet.images {
                    img.load()?;
                }
            }
        }
        prepared.push(PreparedDoc {
            doc_id: doc.doc_id.clone(),
            snippets,
        });
    }
    Ok(PreparedCorpus { docs: prepared })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn doc_with_sentences(lengths: &[usize]) -> Document {
        let sentences = lengths
            .iter()
            .enumerate()
            .map(|(i, &len)| {
                let ch = char::from(b'a' + (i % 26) as u8);
                std::iter::repeat(ch).take(len).collect()
            })
            .collect();
        Document {
            doc_id: "doc".into(),
            sentences,
            images: Vec::new(),
            assignment: None,
            image_positions: None,
        }
    }

    #[test]
    fn greedy_merge_matches_budget() {
        let doc = doc_with_sentences(&[400, 400, 400, 200, 300]);
        let snippets = segment_document(&doc, 1100);
        assert_eq!(snippets.len(), 2);
        assert_eq!(snippets[0].char_len(), 801);
        assert_eq!(snippets[1].char_len(), 902);
        assert_eq!(snippets[0].sentence_spans.len(), 2);
        assert_eq!(snippets[1].sentence_spans.len(), 3);
        assert_eq!(snippets[0].index, 0);
        assert_eq!(snippets[1].index, 1);
    }

    #[test]
    fn overlong_sentence_hard_splits() {
        let doc = doc_with_sentences(&[2000]);
        let snippets = segment_document(&doc, 1100);
        assert_eq!(snippets.len(), 2);
        assert_eq!(snippets[0].char_len(), 1100);
        assert_eq!(snippets[1].char_len(), 900);
        assert_eq!(snippets[1].sentence_spans[0].sentence_index, 0);
    }

    #[test]
    fn empty_document_yields_nothing() {
        let doc = doc_with_sentences(&[]);
        assert!(segment_document(&doc, 1100).is_empty());
    }

    #[test]
    fn reconstruction_is_exact_including_hard_splits() {
        let doc = doc_with_sentences(&[50, 2000, 30, 700, 700]);
        let snippets = segment_document(&doc, 1100);
        assert_eq!(reconstruct_text(&snippets), doc.sentences.join(" "));
    }

    #[test]
    fn annotation_assignment_lands_on_containing_snippet() {
        let mut doc = doc_with_sentences(&[400, 400, 400, 200, 300]);
        doc.images = vec![ImageRef::new("img0", "img0.png")];
        doc.assignment = Some(vec![(0, 3)]);
        let snippets = segment_document(&doc, 1100);
        let assigned = assign_images(&doc, &snippets, AssignPolicy::Annotation).unwrap();
        assert!(assigned[0].images.is_empty());
        assert_eq!(assigned[1].images.len(), 1);
    }

    #[test]
    fn image_before_any_text_goes_to_first_snippet() {
        let mut doc = doc_with_sentences(&[400, 400, 400]);
        doc.images = vec![ImageRef::new("lead", "lead.png")];
        doc.image_positions = Some(vec![0]);
        let snippets = segment_document(&doc, 500);
        let assigned = assign_images(&doc, &snippets, AssignPolicy::ClosestPreceding).unwrap();
        assert_eq!(assigned[0].images.len(), 1);
    }

    #[test]
    fn closest_preceding_uses_last_sentence_before_image() {
        let mut doc = doc_with_sentences(&[400, 400, 400]);
        doc.images = vec![ImageRef::new("mid", "mid.png")];
        doc.image_positions = Some(vec![2]);
        let snippets = segment_document(&doc, 500);
        // one sentence per snippet at this budget; image after sentence 1
        let assigned = assign_images(&doc, &snippets, AssignPolicy::ClosestPreceding).unwrap();
        assert_eq!(assigned[1].images.len(), 1);
    }

    #[test]
    fn assignment_is_total() {
        let mut doc = doc_with_sentences(&[100, 100, 100, 100]);
        doc.images = (0..5)
            .map(|i| ImageRef::new(format!("img{i}"), format!("{i}.png")))
            .collect();
        doc.assignment = Some(vec![(0, 0), (1, 1), (2, 1), (3, 3), (4, 2)]);
        let snippets = segment_document(&doc, 150);
        let assigned = assign_images(&doc, &snippets, AssignPolicy::Annotation).unwrap();
        let total: usize = assigned.iter().map(|s| s.images.len()).sum();
        assert_eq!(total, 5);
    }

    #[test]
    fn annotation_policy_requires_annotation() {
        let mut doc = doc_with_sentences(&[100]);
        doc.images = vec![ImageRef::new("x", "x.png")];
        let snippets = segment_document(&doc, 150);
        assert!(matches!(
            assign_images(&doc, &snippets, AssignPolicy::Annotation),
            Err(Error::MissingAssignment { .. })
        ));
    }

    #[test]
    fn imageless_document_is_unchanged() {
        let doc = doc_with_sentences(&[100, 100]);
        let snippets = segment_document(&doc, 150);
        let assigned = assign_images(&doc, &snippets, AssignPolicy::Annotation).unwrap();
        assert_eq!(assigned.len(), snippets.len());
        assert!(assigned.iter().all(|s| s.images.is_empty()));
    }

    #[test]
    fn select_one_image_keeps_single_and_empty_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let doc = doc_with_sentences(&[10]);
        let snippets = segment_document(&doc, 100);
        let out = select_one_image(&snippets[0], &mut rng);
        assert!(out.images.is_empty());
        assert_eq!(out.text, snippets[0].text);
    }

    #[test]
    fn select_one_image_matches_rng_draw() {
        let mut snippet = segment_document(&doc_with_sentences(&[10]), 100)[0].clone();
        snippet.images = (0..3)
            .map(|i| ImageRef::new(format!("img{i}"), format!("{i}.png")))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let expected = rng.gen_range(0..3usize);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let out = select_one_image(&snippet, &mut rng);
        assert_eq!(out.images.len(), 1);
        assert_eq!(out.images[0].image_id, format!("img{expected}"));
    }

    #[test]
    fn split_sentences_keeps_terminators() {
        let got = split_sentences("One. Two! Three? Four");
        assert_eq!(got, vec!["One.", "Two!", "Three?", "Four"]);
        assert_eq!(split_sentences("No split here"), vec!["No split here"]);
        assert!(split_sentences("").is_empty());
    }

    #[test]
    fn mmc4_round_trip_via_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let lines = [
            r#"{"doc_id":"a","sentences":["Hello there.","Second one."],"images":[{"image_id":"i0","path":"img/i0.png","assigned_sentence_idx":1}]}"#,
            r#"{"doc_id":"b","sentences":["Solo."],"images":[]}"#,
            r#"{"doc_id":"c","sentences":[]}"#,
        ];
        std::fs::write(&path, lines.join("\n")).unwrap();
        let docs = load_corpus(&path, CorpusSchema::Mmc4).unwrap();
        assert_eq!(docs.len(), 3);
        assert_eq!(docs[0].doc_id, "a");
        assert_eq!(docs[0].images.len(), 1);
        assert_eq!(docs[0].assignment.as_ref().unwrap()[0], (0, 1));
        assert!(docs[0].images[0].source_path.starts_with(dir.path()));
        assert!(docs[0].images[0].loaded().is_none());
    }

    #[test]
    fn empty_corpus_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_corpus(&path, CorpusSchema::Mmc4).unwrap().is_empty());
    }

    #[test]
    fn out_of_range_assignment_errors_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let lines = [
            r#"{"doc_id":"ok","sentences":["One."],"images":[]}"#,
            r#"{"doc_id":"bad","sentences":["a","b","c","d","e"],"images":[{"image_id":"x","path":"x.png","assigned_sentence_idx":99}]}"#,
        ];
        std::fs::write(&path, lines.join("\n")).unwrap();
        match load_corpus(&path, CorpusSchema::Mmc4) {
            Err(Error::CorpusRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected record error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_doc_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dup.jsonl");
        let line = r#"{"doc_id":"a","sentences":["One."]}"#;
        std::fs::write(&path, format!("{line}\n{line}")).unwrap();
        assert!(matches!(
            load_corpus(&path, CorpusSchema::Mmc4),
            Err(Error::CorpusRecord { line: 2, .. })
        ));
    }

    #[test]
    fn obelics_stream_parses_positions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ob.jsonl");
        let line = r#"{"doc_id":"o1","stream":[{"image":{"image_id":"lead","path":"l.png"}},{"text":"First. Second."},{"image":{"image_id":"mid","path":"m.png"}},{"text":"Third."}]}"#;
        std::fs::write(&path, line).unwrap();
        let docs = load_corpus(&path, CorpusSchema::Obelics).unwrap();
        assert_eq!(docs[0].sentences, vec!["First.", "Second.", "Third."]);
        assert_eq!(docs[0].image_positions, Some(vec![0, 2]));
        assert!(docs[0].assignment.is_none());
    }
}
