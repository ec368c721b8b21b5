//! Training-time snippet augmentations.
//!
//! Modality masking drops one side of a dual-modality snippet with a fixed
//! probability; text masking removes a random run of sentences from one end of
//! long snippets. Both leave ineligible snippets bit-identical and never
//! produce an empty snippet. All draws come from the caller's seeded rng, so
//! replaying a seed replays the exact augmentation stream.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{SentenceSpan, Snippet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub modality_mask_rate: f64,
    pub text_mask_rate: f64,
    /// Text masking applies only to snippets with at least this many sentences
    /// ("more than four").
    pub text_mask_min_sentences: usize,
    /// ... and at least this many characters ("exceeding 250").
    pub text_mask_min_chars: usize,
    pub train_max_chars: usize,
    pub eval_max_chars: usize,
    pub pad_target_chars: Option<usize>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            modality_mask_rate: 0.40,
            text_mask_rate: 0.40,
            text_mask_min_sentences: 5,
            text_mask_min_chars: 251,
            train_max_chars: 768,
            eval_max_chars: 1100,
            pad_target_chars: None,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, rate) in [
            ("modality_mask_rate", self.modality_mask_rate),
            ("text_mask_rate", self.text_mask_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} {rate} outside [0, 1]")));
            }
        }
        if self.train_max_chars > self.eval_max_chars {
            return Err(Error::Config(format!(
                "train_max_chars {} exceeds eval_max_chars {}",
                self.train_max_chars, self.eval_max_chars
            )));
        }
        Ok(())
    }
}

/// With probability `modality_mask_rate`, drop exactly one modality from a
/// snippet that has both text and at least one image (50/50 which side).
/// Snippets with a single modality pass through untouched.
pub fn modality_mask(snippet: &Snippet, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Snippet {
    if !snippet.has_text() || !snippet.has_image() {
        return snippet.clone();
    }
    if rng.gen::<f64>() >= cfg.modality_mask_rate {
        return snippet.clone();
    }
    let mut out = snippet.clone();
    if rng.gen::<f64>() < 0.5 {
        out.images.clear();
    } else {
        out.text.clear();
        out.sentence_spans.clear();
    }
    out
}

/// With probability `text_mask_rate`, remove `r` sentences (r uniform in
/// [1, S/2]) from the beginning or end of an eligible snippet.
pub fn text_mask(snippet: &Snippet, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Snippet {
    let sentence_count = snippet.sentence_spans.len();
    let eligible = sentence_count >= cfg.text_mask_min_sentences
        && snippet.char_len() >= cfg.text_mask_min_chars;
    if !eligible {
        return snippet.clone();
    }
    if rng.gen::<f64>() >= cfg.text_mask_rate {
        return snippet.clone();
    }
    let max_remove = sentence_count / 2;
    let remove = rng.gen_range(1..=max_remove);
    let from_start = rng.gen::<f64>() < 0.5;
    let keep: Vec<(String, usize)> = {
        let sentences: Vec<&str> = snippet.sentences().collect();
        let range = if from_start {
            remove..sentence_count
        } else {
            0..sentence_count - remove
        };
        range
            .map(|i| {
                (
                    sentences[i].to_string(),
                    snippet.sentence_spans[i].sentence_index,
                )
            })
            .collect()
    };
    rebuild_with_sentences(snippet, &keep)
}

fn rebuild_with_sentences(snippet: &Snippet, sentences: &[(String, usize)]) -> Snippet {
    let mut text = String::new();
    let mut spans = Vec::with_capacity(sentences.len());
    for (piece, sentence_index) in sentences {
        let start = text.len();
        if !text.is_empty() {
            text.push(' ');
        }
        text.push_str(piece);
        spans.push(SentenceSpan {
            start,
            end: text.len(),
            sentence_index: *sentence_index,
        });
    }
    Snippet {
        doc_id: snippet.doc_id.clone(),
        index: snippet.index,
        text,
        images: snippet.images.clone(),
        sentence_spans: spans,
    }
}

/// Cut snippet text to at most `max_chars` characters, recomputing spans.
/// Never splits a character; idempotent.
pub fn truncate_text(snippet: &Snippet, max_chars: usize) -> Snippet {
    assert!(max_chars >= 1, "max_chars must be at least 1");
    if snippet.char_len() <= max_chars {
        return snippet.clone();
    }
    let cut_bytes = snippet
        .text
        .char_indices()
        .nth(max_chars)
        .map(|(at, _)| at)
        .unwrap_or(snippet.text.len());
    let mut out = snippet.clone();
    out.text.truncate(cut_bytes);
    out.sentence_spans.retain_mut(|span| {
        if span.start >= cut_bytes {
            return false;
        }
        span.end = span.end.min(cut_bytes);
        true
    });
    out
}

/// Repeat `text` (single-space joins) until it reaches `target_chars`, then
/// hard-cut at the target. Text already at or past the target is unchanged.
pub fn pad_text_by_repetition(text: &str, target_chars: usize) -> Result<String> {
    assert!(target_chars >= 1, "target_chars must be at least 1");
    if text.is_empty() {
        return Err(Error::EmptyPadInput);
    }
    let len = text.chars().count();
    if len >= target_chars {
        return Ok(text.to_string());
    }
    let mut out = String::from(text);
    let mut chars = len;
    while chars < target_chars {
        out.push(' ');
        out.push_str(text);
        chars += 1 + len;
    }
    if chars > target_chars {
        let cut = out
            .char_indices()
            .nth(target_chars)
            .map(|(at, _)| at)
            .unwrap_or(out.len());
        out.truncate(cut);
    }
    Ok(out)
}
