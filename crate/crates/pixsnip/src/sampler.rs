//! Positive-pair sampling and training batch assembly.
//!
//! Positive pairs come from the same document: consecutive snippets (k = q+1)
//! by default, with an optional fraction of one-hop pairs (k = q+2). Batches
//! draw documents without replacement so in-batch negatives are always
//! cross-document. Assembly fans out across workers, but slot seeds are drawn
//! sequentially up front, so batches are bit-identical at any thread count.

use ndarray::Array3;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{modality_mask, text_mask, truncate_text, AugmentConfig};
use crate::corpus::{select_one_image, PreparedCorpus, Snippet};
use crate::error::{Error, Result};
use crate::exec;
use crate::font::FontTable;
use crate::render::{canvas_to_tensor, render, LayoutConfig, RenderModality};

/// Fraction of positive pairs sampled at one-hop distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairPolicy {
    pub one_hop_ratio: f64,
}

impl PairPolicy {
    /// Consecutive pairs only.
    pub const OMNI: PairPolicy = PairPolicy { one_hop_ratio: 0.0 };
    /// 20% one-hop pairs.
    pub const OMNI_PLUS: PairPolicy = PairPolicy { one_hop_ratio: 0.2 };
    /// 40% one-hop pairs.
    pub const OMNI_PLUS_PLUS: PairPolicy = PairPolicy { one_hop_ratio: 0.4 };

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.one_hop_ratio) {
            return Err(Error::Config(format!(
                "one_hop_ratio {} outside [0, 1]",
                self.one_hop_ratio
            )));
        }
        Ok(())
    }
}

impl Default for PairPolicy {
    fn default() -> Self {
        PairPolicy::OMNI
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hop {
    Consecutive,
    OneHop,
}

#[derive(Debug, Clone)]
pub struct PairSample {
    pub query: Snippet,
    pub key: Snippet,
    pub hop: Hop,
}

/// Draw one positive pair from a document's snippet list.
///
/// The hop is drawn first with probability `one_hop_ratio`; documents too
/// short for one-hop (fewer than 3 snippets) fall back to consecutive.
pub fn sample_pair(
    doc_snippets: &[Snippet],
    policy: &PairPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<PairSample> {
    let n = doc_snippets.len();
    if n < 2 {
        return Err(Error::DocumentTooShort {
            required: 2,
            found: n,
        });
    }
    let want_one_hop = rng.gen::<f64>() < policy.one_hop_ratio;
    let (hop, gap) = if want_one_hop && n >= 3 {
        (Hop::OneHop, 2)
    } else {
        (Hop::Consecutive, 1)
    };
    let q = rng.gen_range(0..n - gap);
    Ok(PairSample {
        query: doc_snippets[q].clone(),
        key: doc_snippets[q + gap].clone(),
        hop,
    })
}

/// A rendered training batch: N query/key canvas tensors from N distinct docs.
pub struct PairBatch {
    pub doc_ids: Vec<String>,
    pub hops: Vec<Hop>,
    pub query: Vec<Array3<f32>>,
    pub key: Vec<Array3<f32>>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }
}

/// Indices of corpus documents usable for pair sampling (>= 2 snippets).
pub fn usable_docs(corpus: &PreparedCorpus) -> Vec<usize> {
    (0..corpus.docs.len())
        .filter(|&i| corpus.docs[i].snippets.len() >= 2)
        .collect()
}

/// Sample N documents without replacement and assemble a batch.
pub fn build_batch(
    corpus: &PreparedCorpus,
    batch_size: usize,
    policy: &PairPolicy,
    augment: &AugmentConfig,
    layout: &LayoutConfig,
    font: &FontTable,
    rng: &mut ChaCha8Rng,
) -> Result<PairBatch> {
    policy.validate()?;
    augment.validate()?;
    let mut usable = usable_docs(corpus);
    if usable.len() < batch_size {
        return Err(Error::InsufficientCorpus {
            required: batch_size,
            available: usable.len(),
        });
    }
    // partial Fisher-Yates for the first batch_size slots
    for slot in 0..batch_size {
        let pick = slot + rng.gen_range(0..usable.len() - slot);
        usable.swap(slot, pick);
    }
    usable.truncate(batch_size);
    build_batch_for_docs(corpus, &usable, policy, augment, layout, font, rng)
}

/// Assemble a batch from explicit document indices (training loop entry).
pub(crate) fn build_batch_for_docs(
    corpus: &PreparedCorpus,
    doc_indices: &[usize],
    policy: &PairPolicy,
    augment: &AugmentConfig,
    layout: &LayoutConfig,
    font: &FontTable,
    rng: &mut ChaCha8Rng,
) -> Result<PairBatch> {
    // slot seeds drawn sequentially so the parallel fan-out stays deterministic
    let slot_seeds: Vec<u64> = (0..doc_indices.len()).map(|_| rng.next_u64()).collect();
    let slots = exec::map_indexed(doc_indices.len(), |slot| {
        let doc = &corpus.docs[doc_indices[slot]];
        assemble_slot(doc.doc_id.clone(), &doc.snippets, slot_seeds[slot], policy, augment, layout, font)
    });
    let mut doc_ids = Vec::with_capacity(doc_indices.len());
    let mut hops = Vec::with_capacity(doc_indices.len());
    let mut query = Vec::with_capacity(doc_indices.len());
    let mut key = Vec::with_capacity(doc_indices.len());
    for slot in slots {
        let slot = slot?;
        doc_ids.push(slot.0);
        hops.push(slot.1);
        query.push(slot.2);
        key.push(slot.3);
    }
    Ok(PairBatch {
        doc_ids,
        hops,
        query,
        key,
    })
}

type Slot = (String, Hop, Array3<f32>, Array3<f32>);

fn assemble_slot(
    doc_id: String,
    snippets: &[Snippet],
    seed: u64,
    policy: &PairPolicy,
    augment: &AugmentConfig,
    layout: &LayoutConfig,
    font: &FontTable,
) -> Result<Slot> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pair = sample_pair(snippets, policy, &mut rng)?;
    let query = augment_side(&pair.query, augment, &mut rng, layout, font)?;
    let key = augment_side(&pair.key, augment, &mut rng, layout, font)?;
    Ok((doc_id, pair.hop, query, key))
}

fn augment_side(
    snippet: &Snippet,
    augment: &AugmentConfig,
    rng: &mut ChaCha8Rng,
    layout: &LayoutConfig,
    font: &FontTable,
) -> Result<Array3<f32>> {
    let snippet = select_one_image(snippet, rng);
    let snippet = modality_mask(&snippet, augment, rng);
    let snippet = text_mask(&snippet, augment, rng);
    let snippet = truncate_text(&snippet, augment.train_max_chars);
    let render_seed = rng.next_u64();
    let canvas = render(
        &snippet,
        RenderModality::Interleaved,
        font,
        layout,
        render_seed,
    )?;
    Ok(canvas_to_tensor::<f32>(&canvas))
}
