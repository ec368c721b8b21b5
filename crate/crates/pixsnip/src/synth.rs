//! Synthetic corpora with a controlled consecutive-pair signal.
//!
//! Each document is a chain of snippets where every adjacent pair shares one
//! link token and non-adjacent snippets share nothing. A snippet carries its
//! two tokens redundantly: as rendered keyword sentences and as a
//! color-patterned image (left half encodes the previous-link token, right
//! half the next-link token), so the pair signal survives modality masking.
//! Useful for end-to-end training smoke tests and demos.

use std::path::{Path, PathBuf};

use rand::{Rng, RngCore};

use crate::corpus::{Document, ImageRef, RgbBuffer};
use crate::error::Result;
use crate::retrieval::SlideDeck;
use crate::seed::rng_for_indexed;

/// Segmentation budget that makes each generated sentence triple its own
/// snippet (two 11-char keywords plus one 36-char pad fit; the next keyword
/// does not).
pub const SEGMENT_MAX_CHARS: usize = 64;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub snippets_per_doc: usize,
    /// Source image edge in pixels.
    pub image_px: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_docs: 100,
            snippets_per_doc: 4,
            image_px: 32,
            seed: 0,
        }
    }
}

const PALETTE: [[u8; 3]; 16] = [
    [0, 0, 0],
    [255, 0, 0],
    [0, 255, 0],
    [0, 0, 255],
    [255, 255, 0],
    [255, 0, 255],
    [0, 255, 255],
    [255, 128, 0],
    [128, 0, 255],
    [0, 128, 255],
    [255, 0, 128],
    [128, 255, 0],
    [0, 255, 128],
    [128, 64, 32],
    [64, 128, 240],
    [192, 0, 64],
];

fn keyword(token: u32) -> String {
    format!("KW{token:08X}.")
}

/// Horizontal color bands derived from the token's nibbles.
fn paint_half(buffer: &mut RgbBuffer, token: u32, left: bool) {
    let half = buffer.width / 2;
    let band_h = (buffer.height / 8).max(1);
    let x0 = if left { 0 } else { half };
    for y in 0..buffer.height {
        let band = (y / band_h).min(7);
        let color = PALETTE[((token >> (4 * band)) & 0xF) as usize];
        for x in x0..x0 + half {
            let at = ((y * buffer.width + x) * 3) as usize;
            buffer.data[at..at + 3].copy_from_slice(&color);
        }
    }
}

fn token_image(image_id: String, px: u32, prev: u32, next: u32) -> ImageRef {
    let mut buffer = RgbBuffer::new(px, px, vec![0; (px * px * 3) as usize]).unwrap();
    paint_half(&mut buffer, prev, true);
    paint_half(&mut buffer, next, false);
    ImageRef::from_buffer(image_id, buffer)
}

/// Generate documents with in-memory images (no filesystem involved).
pub fn generate_documents(cfg: &SynthConfig) -> Vec<Document> {
    (0..cfg.n_docs)
        .map(|d| {
            let mut rng = rng_for_indexed(cfg.seed, "synth-doc", d as u64);
            let s = cfg.snippets_per_doc;
            // link token i ties snippet i to snippet i+1
            let links: Vec<u32> = (0..s.saturating_sub(1)).map(|_| rng.next_u32()).collect();
            let lead_filler = rng.next_u32();
            let tail_filler = rng.next_u32();
            let doc_id = format!("synth{:06}", d);
            let mut sentences = Vec::with_capacity(3 * s);
            let mut images = Vec::with_capacity(s);
            let mut assignment = Vec::with_capacity(s);
            for i in 0..s {
                let prev = if i == 0 { lead_filler } else { links[i - 1] };
                let next = if i + 1 == s { tail_filler } else { links[i] };
                sentences.push(keyword(prev));
                sentences.push(keyword(next));
                let pad: String = (0..32)
                    .map(|_| char::from_digit(rng.gen_range(0..16), 16).unwrap())
                    .collect();
                sentences.push(format!("PAD{}.", pad.to_uppercase()));
                assignment.push((i, 3 * i));
                images.push(token_image(format!("{doc_id}_img{i}"), cfg.image_px, prev, next));
            }
            Document {
                doc_id,
                sentences,
                images,
                assignment: Some(assignment),
                image_positions: None,
            }
        })
        .collect()
}

/// Write a generated corpus to disk in the mmc4-style line format, returning
/// the corpus file path. Images go to `<dir>/images/` as PNGs.
pub fn write_corpus(dir: &Path, cfg: &SynthConfig) -> Result<PathBuf> {
    let images_dir = dir.join("images");
    std::fs::create_dir_all(&images_dir)?;
    let docs = generate_documents(cfg);
    let corpus_path = dir.join("corpus.jsonl");
    let mut lines = String::new();
    for doc in &docs {
        let mut images_json = Vec::with_capacity(doc.images.len());
        for (img_idx, image) in doc.images.iter().enumerate() {
            let file_name = format!("{}.png", image.image_id);
            let buffer = image.loaded().unwrap();
            let png = image::RgbImage::from_raw(buffer.width, buffer.height, buffer.data.clone())
                .expect("buffer matches dimensions");
            png.save_with_format(images_dir.join(&file_name), image::ImageFormat::Png)?;
            let sentence_idx = doc.assignment.as_ref().unwrap()[img_idx].1;
            images_json.push(serde_json::json!({
                "image_id": image.image_id,
                "path": format!("images/{file_name}"),
                "assigned_sentence_idx": sentence_idx,
            }));
        }
        let record = serde_json::json!({
            "doc_id": doc.doc_id,
            "sentences": doc.sentences,
            "images": images_json,
        });
        lines.push_str(&record.to_string());
        lines.push('\n');
    }
    std::fs::write(&corpus_path, lines)?;
    Ok(corpus_path)
}

/// Slide decks of patterned images for slide-retrieval tests; consecutive
/// slides share their boundary token the same way document snippets do.
pub fn generate_decks(n_decks: usize, slides_per_deck: usize, px: u32, seed: u64) -> Vec<SlideDeck> {
    (0..n_decks)
        .map(|d| {
            let mut rng = rng_for_indexed(seed, "synth-deck", d as u64);
            let links: Vec<u32> = (0..slides_per_deck.saturating_sub(1))
                .map(|_| rng.next_u32())
                .collect();
            let lead = rng.next_u32();
            let tail = rng.next_u32();
            let deck_id = format!("deck{:05}", d);
            let slides = (0..slides_per_deck)
                .map(|i| {
                    let prev = if i == 0 { lead } else { links[i - 1] };
                    let next = if i + 1 == slides_per_deck { tail } else { links[i] };
                    token_image(format!("{deck_id}_s{i}"), px, prev, next)
                })
                .collect();
            SlideDeck { deck_id, slides }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_corpus, prepare_corpus, AssignPolicy, CorpusSchema};

    #[test]
    fn segmentation_recovers_designed_snippets() {
        let cfg = SynthConfig {
            n_docs: 5,
            snippets_per_doc: 4,
            ..SynthConfig::default()
        };
        let docs = generate_documents(&cfg);
        let prepared =
            prepare_corpus(&docs, AssignPolicy::Annotation, SEGMENT_MAX_CHARS, true).unwrap();
        for doc in &prepared.docs {
            assert_eq!(doc.snippets.len(), 4);
            for snippet in &doc.snippets {
                assert_eq!(snippet.sentence_spans.len(), 3);
                assert_eq!(snippet.images.len(), 1);
                assert!(snippet.text.starts_with("KW"));
            }
        }
    }

    #[test]
    fn consecutive_snippets_share_exactly_one_keyword() {
        let cfg = SynthConfig {
            n_docs: 3,
            ..SynthConfig::default()
        };
        let docs = generate_documents(&cfg);
        for doc in &docs {
            let kw = |i: usize| -> Vec<String> {
                vec![doc.sentences[3 * i].clone(), doc.sentences[3 * i + 1].clone()]
            };
            for i in 0..3 {
                let a = kw(i);
                let b = kw(i + 1);
                let shared: Vec<_> = a.iter().filter(|t| b.contains(t)).collect();
                assert_eq!(shared.len(), 1, "adjacent snippets share one token");
            }
            let a = kw(0);
            let c = kw(2);
            assert!(a.iter().all(|t| !c.contains(t)), "one-hop shares nothing");
        }
    }

    #[test]
    fn corpus_file_round_trip_matches_in_memory() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            n_docs: 3,
            ..SynthConfig::default()
        };
        let path = write_corpus(dir.path(), &cfg).unwrap();
        let loaded = load_corpus(&path, CorpusSchema::Mmc4).unwrap();
        let generated = generate_documents(&cfg);
        assert_eq!(loaded.len(), generated.len());
        for (l, g) in loaded.iter().zip(&generated) {
            assert_eq!(l.doc_id, g.doc_id);
            assert_eq!(l.sentences, g.sentences);
            assert_eq!(l.images.len(), g.images.len());
        }
        // loaded pixels decode to the generated buffers
        let mut img = loaded[0].images[0].clone();
        img.load().unwrap();
        assert_eq!(img.loaded().unwrap(), generated[0].images[0].loaded().unwrap());
    }

    #[test]
    fn decks_have_shared_boundaries() {
        let decks = generate_decks(2, 8, 32, 7);
        assert_eq!(decks.len(), 2);
        for deck in &decks {
            assert_eq!(deck.slides.len(), 8);
            for slide in &deck.slides {
                assert!(slide.loaded().is_some());
            }
            // right half of slide i equals left half of slide i+1
            let half_cols = |img: &ImageRef, left: bool| -> Vec<u8> {
                let b = img.loaded().unwrap();
                let half = b.width / 2;
                let x0 = if left { 0 } else { half };
                let mut out = Vec::new();
                for y in 0..b.height {
                    for x in x0..x0 + half {
                        out.extend_from_slice(&b.pixel(x, y));
                    }
                }
                out
            };
            for i in 0..7 {
                assert_eq!(
                    half_cols(&deck.slides[i], false),
                    half_cols(&deck.slides[i + 1], true)
                );
            }
        }
    }
}
