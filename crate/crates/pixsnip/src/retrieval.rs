//! Consecutive-information-retrieval benchmarks: AnyCIR, SeqCIR, and CSR.
//!
//! AnyCIR retrieves the latter snippet of a consecutive pair from the former,
//! across all nine query/candidate modality combinations over one shared pair
//! pool. SeqCIR retrieves successors round by round, passing only successful
//! queries forward and excluding each query's preceding same-document
//! snippets. CSR retrieves the next slide of a deck from all latter slides.
//!
//! Scoring is the dot product of unit embeddings; ties break toward the lowest
//! candidate index so rankings form a total order that an independent naive
//! loop reproduces exactly.

use std::collections::HashSet;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{select_one_image, ImageRef, PreparedCorpus, Snippet};
use crate::error::{Error, Result};
use crate::exec;
use crate::font::FontTable;
use crate::render::{render, Canvas, LayoutConfig, RenderModality};
use crate::seed::{derive_seed_indexed, rng_for, rng_for_indexed};

/// Identifies what is being embedded: the retrieval group (document or deck)
/// and the position within it. Analytic test encoders key off this; the
/// trained encoder ignores it.
#[derive(Debug, Clone, Copy)]
pub struct ItemRef<'a> {
    pub group: &'a str,
    pub position: usize,
}

/// Anything that can turn a rendered canvas into a unit-norm embedding.
pub trait SnippetEncoder: Sync {
    fn dim(&self) -> usize;
    fn embed(&self, canvas: &Canvas, item: ItemRef<'_>) -> Vec<f32>;
}

/// Query/candidate modality combination; nine valid pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskSpec {
    pub query: RenderModality,
    pub candidate: RenderModality,
}

impl TaskSpec {
    pub fn all_nine() -> Vec<TaskSpec> {
        let modalities = [
            RenderModality::Interleaved,
            RenderModality::TextOnly,
            RenderModality::ImageOnly,
        ];
        let mut out = Vec::with_capacity(9);
        for q in modalities {
            for c in modalities {
                out.push(TaskSpec {
                    query: q,
                    candidate: c,
                });
            }
        }
        out
    }

    /// Label like `IN-Tx` (query modality to candidate modality).
    pub fn label(&self) -> String {
        format!("{}-{}", self.query.label(), self.candidate.label())
    }

    pub fn parse(s: &str) -> Option<TaskSpec> {
        let (q, c) = s.split_once('-')?;
        Some(TaskSpec {
            query: RenderModality::parse(q)?,
            candidate: RenderModality::parse(c)?,
        })
    }
}

/// Per-query ranks of the true target (1-based) plus aggregates.
#[derive(Debug, Clone)]
pub struct RetrievalResult {
    pub ranks: Vec<usize>,
}

impl RetrievalResult {
    pub fn rank_at_1(&self) -> f64 {
        self.recall_at(1)
    }

    pub fn recall_at(&self, k: usize) -> f64 {
        if self.ranks.is_empty() {
            return 0.0;
        }
        let hits = self.ranks.iter().filter(|&&r| r <= k).count();
        hits as f64 / self.ranks.len() as f64
    }
}

// ---------------------------------------------------------------------------
// ranking

fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f32;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Top-k candidate indices by descending dot product, ties to the lowest
/// index. Each dot product is a plain sequential loop (evaluation layers
/// parallelize across queries), so results match the naive oracle
/// bit-for-bit.
pub fn rank_candidates(query: &[f32], candidates: &[Vec<f32>], k: usize) -> Vec<usize> {
    let scores: Vec<f32> = candidates.iter().map(|c| dot(query, c)).collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// 1-based rank of `target` among candidates under the same total order
/// that `rank_candidates` uses, without materializing the full sort.
pub fn rank_of_target(query: &[f32], candidates: &[Vec<f32>], target: usize) -> usize {
    let target_score = dot(query, &candidates[target]);
    let mut ahead = 0usize;
    for (i, c) in candidates.iter().enumerate() {
        let s = dot(query, c);
        if s > target_score || (s == target_score && i < target) {
            ahead += 1;
        }
    }
    ahead + 1
}

// ---------------------------------------------------------------------------
// AnyCIR

#[derive(Debug, Clone)]
pub struct AnyCirPair {
    pub former: Snippet,
    pub latter: Snippet,
}

#[derive(Debug, Clone)]
pub struct AnyCirPool {
    pub pairs: Vec<AnyCirPair>,
}

fn dual_modality(s: &Snippet) -> bool {
    s.has_text() && s.has_image()
}

/// Consecutive pair starts within a document where both sides carry text and
/// at least one image.
fn qualifying_starts(snippets: &[Snippet]) -> Vec<usize> {
    if snippets.len() < 2 {
        return Vec::new();
    }
    (0..snippets.len() - 1)
        .filter(|&q| dual_modality(&snippets[q]) && dual_modality(&snippets[q + 1]))
        .collect()
}

/// Sample one qualifying consecutive pair from each of `n_pairs` distinct
/// documents, uniformly without replacement.
pub fn build_anycir(
    corpus: &PreparedCorpus,
    n_pairs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<AnyCirPool> {
    let mut qualifying: Vec<(usize, Vec<usize>)> = corpus
        .docs
        .iter()
        .enumerate()
        .filter_map(|(i, doc)| {
            let starts = qualifying_starts(&doc.snippets);
            (!starts.is_empty()).then_some((i, starts))
        })
        .collect();
    if qualifying.len() < n_pairs {
        return Err(Error::InsufficientQualifying {
            required: n_pairs,
            available: qualifying.len(),
        });
    }
    for slot in 0..n_pairs {
        let pick = slot + rng.gen_range(0..qualifying.len() - slot);
        qualifying.swap(slot, pick);
    }
    qualifying.truncate(n_pairs);
    let mut pairs = Vec::with_capacity(n_pairs);
    for (doc_idx, starts) in qualifying {
        let q = starts[rng.gen_range(0..starts.len())];
        let snippets = &corpus.docs[doc_idx].snippets;
        pairs.push(AnyCirPair {
            former: snippets[q].clone(),
            latter: snippets[q + 1].clone(),
        });
    }
    Ok(AnyCirPool { pairs })
}

fn render_for_eval(
    snippet: &Snippet,
    modality: RenderModality,
    font: &FontTable,
    layout: &LayoutConfig,
    image_seed: u64,
    render_seed: u64,
) -> Result<Canvas> {
    let selected = select_one_image(snippet, &mut ChaCha8Rng::seed_from_u64(image_seed));
    render(&selected, modality, font, layout, render_seed)
}

/// Evaluate one AnyCIR task. Queries are the former snippets rendered at the
/// task's query modality; candidates are all latter snippets at the candidate
/// modality. render seeds derive deterministically from `seed` per role.
pub fn eval_anycir(
    encoder: &dyn SnippetEncoder,
    pool: &AnyCirPool,
    task: TaskSpec,
    font: &FontTable,
    layout: &LayoutConfig,
    seed: u64,
) -> Result<RetrievalResult> {
    let embed_side = |role: &'static str,
                      modality: RenderModality,
                      side: fn(&AnyCirPair) -> &Snippet|
     -> Result<Vec<Vec<f32>>> {
        let results = exec::map_indexed(pool.pairs.len(), |i| {
            let snippet = side(&pool.pairs[i]);
            let canvas = render_for_eval(
                snippet,
                modality,
                font,
                layout,
                derive_seed_indexed(seed, &format!("anycir/{role}/image"), i as u64),
                derive_seed_indexed(seed, &format!("anycir/{role}/render"), i as u64),
            )?;
            Ok(encoder.embed(
                &canvas,
                ItemRef {
                    group: &snippet.doc_id,
                    position: snippet.index,
                },
            ))
        });
        results.into_iter().collect()
    };
    let queries = embed_side("query", task.query, |p| &p.former)?;
    let candidates = embed_side("candidate", task.candidate, |p| &p.latter)?;
    let ranks = exec::map_indexed(queries.len(), |i| {
        rank_of_target(&queries[i], &candidates, i)
    });
    Ok(RetrievalResult { ranks })
}

// ---------------------------------------------------------------------------
// SeqCIR

#[derive(Debug, Clone)]
pub struct SeqEntry {
    pub snippet: Snippet,
    /// Position of the snippet inside its document (== snippet.index).
    pub position: usize,
}

#[derive(Debug, Clone)]
pub struct SeqCirPool {
    /// Every snippet of every sampled document, document-major order.
    pub entries: Vec<SeqEntry>,
    /// Entry indices of the initial queries (first snippets of qualifying docs).
    pub initial_queries: Vec<usize>,
    pub rounds: usize,
}

/// Sample `n_docs` documents; the pool is every snippet of those documents,
/// and initial queries are first snippets of documents long enough to survive
/// all rounds (at least rounds+1 snippets).
pub fn build_seqcir(
    corpus: &PreparedCorpus,
    n_docs: usize,
    rounds: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SeqCirPool> {
    if rounds == 0 {
        return Err(Error::Config("seqcir needs at least one round".into()));
    }
    let candidates: Vec<usize> = (0..corpus.docs.len())
        .filter(|&i| !corpus.docs[i].snippets.is_empty())
        .collect();
    if candidates.len() < n_docs {
        return Err(Error::InsufficientQualifying {
            required: n_docs,
            available: candidates.len(),
        });
    }
    let mut chosen = candidates;
    for slot in 0..n_docs {
        let pick = slot + rng.gen_range(0..chosen.len() - slot);
        chosen.swap(slot, pick);
    }
    chosen.truncate(n_docs);

    let mut entries = Vec::new();
    let mut initial_queries = Vec::new();
    for doc_idx in chosen {
        let doc = &corpus.docs[doc_idx];
        if doc.snippets.len() >= rounds + 1 {
            initial_queries.push(entries.len());
        }
        for snippet in &doc.snippets {
            entries.push(SeqEntry {
                position: snippet.index,
                snippet: snippet.clone(),
            });
        }
    }
    if initial_queries.is_empty() {
        return Err(Error::NoInitialQueries);
    }
    Ok(SeqCirPool {
        entries,
        initial_queries,
        rounds,
    })
}

/// Multi-round sequential retrieval; returns Pass@1..Pass@rounds.
///
/// Every entry embeds once (full text, one selected image if present,
/// interleaved). At each round a surviving query at document position p ranks
/// all entries except its own document's positions <= p; it succeeds iff the
/// top-1 hit is its document's position p+1, and advances to that snippet.
pub fn eval_seqcir(
    encoder: &dyn SnippetEncoder,
    pool: &SeqCirPool,
    font: &FontTable,
    layout: &LayoutConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let embedded = exec::map_indexed(pool.entries.len(), |i| {
        let entry = &pool.entries[i];
        let canvas = render_for_eval(
            &entry.snippet,
            RenderModality::Interleaved,
            font,
            layout,
            derive_seed_indexed(seed, "seqcir/image", i as u64),
            derive_seed_indexed(seed, "seqcir/render", i as u64),
        )?;
        Ok(encoder.embed(
            &canvas,
            ItemRef {
                group: &entry.snippet.doc_id,
                position: entry.position,
            },
        ))
    });
    let embeddings: Vec<Vec<f32>> = embedded.into_iter().collect::<Result<_>>()?;

    // entry index of (doc, position+1) for successor lookups
    let successor: Vec<Option<usize>> = (0..pool.entries.len())
        .map(|i| {
            let next = i + 1;
            (next < pool.entries.len()
                && pool.entries[next].snippet.doc_id == pool.entries[i].snippet.doc_id
                && pool.entries[next].position == pool.entries[i].position + 1)
                .then_some(next)
        })
        .collect();

    let initial = pool.initial_queries.len();
    let mut survivors: Vec<usize> = pool.initial_queries.clone();
    let mut pass = Vec::with_capacity(pool.rounds);
    for _round in 1..=pool.rounds {
        let outcomes = exec::map_ordered(&survivors, |&query_idx| {
            let query_doc = &pool.entries[query_idx].snippet.doc_id;
            let query_pos = pool.entries[query_idx].position;
            let query_emb = &embeddings[query_idx];
            let mut best: Option<(f32, usize)> = None;
            for (cand_idx, cand_emb) in embeddings.iter().enumerate() {
                let entry = &pool.entries[cand_idx];
                if entry.snippet.doc_id == *query_doc && entry.position <= query_pos {
                    continue; // ignore the query itself and its predecessors
                }
                let score = dot(query_emb, cand_emb);
                let better = match best {
                    None => true,
                    Some((bs, bi)) => score > bs || (score == bs && cand_idx < bi),
                };
                if better {
                    best = Some((score, cand_idx));
                }
            }
            match (best, successor[query_idx]) {
                (Some((_, top)), Some(next)) if top == next => Some(next),
                _ => None,
            }
        });
        survivors = outcomes.into_iter().flatten().collect();
        pass.push(survivors.len() as f64 / initial as f64);
    }
    Ok(pass)
}

// ---------------------------------------------------------------------------
// CSR

#[derive(Debug, Clone)]
pub struct SlideDeck {
    pub deck_id: String,
    /// Slides in deck order.
    pub slides: Vec<ImageRef>,
}

#[derive(Debug, Clone)]
pub struct CsrPair {
    pub deck_id: String,
    /// 0-based index of the former slide within the original deck.
    pub former_index: usize,
    pub former: ImageRef,
    pub latter: ImageRef,
}

#[derive(Debug, Clone)]
pub struct CsrPool {
    pub pairs: Vec<CsrPair>,
}

/// One uniformly chosen consecutive pair per qualifying deck (more than six
/// slides), drawn after dropping each deck's first two slides.
pub fn build_csr(decks: &[SlideDeck], rng: &mut ChaCha8Rng) -> CsrPool {
    let mut pairs = Vec::new();
    for deck in decks {
        if deck.slides.len() <= 6 {
            continue;
        }
        let eligible = &deck.slides[2..];
        let pair_idx = rng.gen_range(0..eligible.len() - 1);
        pairs.push(CsrPair {
            deck_id: deck.deck_id.clone(),
            former_index: 2 + pair_idx,
            former: eligible[pair_idx].clone(),
            latter: eligible[pair_idx + 1].clone(),
        });
    }
    CsrPool { pairs }
}

/// Recall@{1,5,10} using the former slide as query against all latter slides.
/// Slides render as full-canvas single images.
pub fn eval_csr(
    encoder: &dyn SnippetEncoder,
    pool: &CsrPool,
    layout: &LayoutConfig,
    font: &FontTable,
    seed: u64,
) -> Result<RetrievalResult> {
    let frame = layout.full_frame()?;
    let embed_side = |role: &'static str, side: fn(&CsrPair) -> &ImageRef, offset: usize| {
        let results = exec::map_indexed(pool.pairs.len(), |i| {
            let pair = &pool.pairs[i];
            let snippet = Snippet {
                doc_id: pair.deck_id.clone(),
                index: pair.former_index + offset,
                text: String::new(),
                images: vec![side(pair).clone()],
                sentence_spans: Vec::new(),
            };
            let canvas = render(
                &snippet,
                RenderModality::ImageOnly,
                font,
                &frame,
                derive_seed_indexed(seed, &format!("csr/{role}/render"), i as u64),
            )?;
            Ok(encoder.embed(
                &canvas,
                ItemRef {
                    group: &pair.deck_id,
                    position: pair.former_index + offset,
                },
            ))
        });
        results.into_iter().collect::<Result<Vec<Vec<f32>>>>()
    };
    let queries = embed_side("query", |p| &p.former, 0)?;
    let candidates = embed_side("candidate", |p| &p.latter, 1)?;
    let ranks = exec::map_indexed(queries.len(), |i| {
        rank_of_target(&queries[i], &candidates, i)
    });
    Ok(RetrievalResult { ranks })
}

// ---------------------------------------------------------------------------
// analytic test encoders

/// Maps items of the same group to nearby vectors with similarity strictly
/// decreasing in position distance, so the true consecutive target always
/// wins. Ignores pixels entirely.
pub struct OracleEncoder {
    pub dim: usize,
}

const ORACLE_GROUP_WEIGHT: f32 = 4.0;
const ORACLE_POSITION_STEP: f64 = 0.2;

impl SnippetEncoder for OracleEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, _canvas: &Canvas, item: ItemRef<'_>) -> Vec<f32> {
        assert!(self.dim >= 3, "oracle encoder needs dim >= 3");
        let mut rng = rng_for(0xC1DE, &format!("oracle-group/{}", item.group));
        let mut v: Vec<f32> = (0..self.dim - 2)
            .map(|_| crate::model::standard_normal(&mut rng) as f32)
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-12);
        for x in &mut v {
            *x = *x / norm * ORACLE_GROUP_WEIGHT;
        }
        let angle = ORACLE_POSITION_STEP * item.position as f64;
        v.push(angle.cos() as f32);
        v.push(angle.sin() as f32);
        normalize(v)
    }
}

/// Deterministic per-item random unit vector (chance baseline).
pub struct RandomEncoder {
    pub dim: usize,
    pub seed: u64,
}

impl SnippetEncoder for RandomEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, _canvas: &Canvas, item: ItemRef<'_>) -> Vec<f32> {
        let mut rng = rng_for_indexed(
            self.seed,
            &format!("random-enc/{}", item.group),
            item.position as u64,
        );
        let v: Vec<f32> = (0..self.dim)
            .map(|_| crate::model::standard_normal(&mut rng) as f32)
            .collect();
        normalize(v)
    }
}

/// Embeds everything to the same basis vector (tie-break stress case).
pub struct ConstantEncoder {
    pub dim: usize,
}

impl SnippetEncoder for ConstantEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, _canvas: &Canvas, _item: ItemRef<'_>) -> Vec<f32> {
        let mut v = vec![0.0; self.dim];
        v[0] = 1.0;
        v
    }
}

fn normalize(mut v: Vec<f32>) -> Vec<f32> {
    let norm = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    for x in &mut v {
        *x = (*x as f64 / norm) as f32;
    }
    v
}

/// Trained-model encoder: renders are embedded through the ViT.
pub struct ModelEncoder<F: crate::model::Real> {
    params: crate::model::EncoderParams<F>,
}

impl<F: crate::model::Real> ModelEncoder<F> {
    pub fn new(params: crate::model::EncoderParams<F>) -> Self {
        ModelEncoder { params }
    }

    pub fn params(&self) -> &crate::model::EncoderParams<F> {
        &self.params
    }
}

impl<F: crate::model::Real> SnippetEncoder for ModelEncoder<F> {
    fn dim(&self) -> usize {
        self.params.cfg.proj_dim
    }

    fn embed(&self, canvas: &Canvas, _item: ItemRef<'_>) -> Vec<f32> {
        let tensor = crate::render::canvas_to_tensor::<F>(canvas);
        let f = crate::model::encode(&self.params, &tensor)
            .expect("encoder produced non-finite embedding");
        f.iter().map(|v| v.to_f64().unwrap() as f32).collect()
    }
}

// ---------------------------------------------------------------------------
// manifests

#[derive(Serialize, Deserialize)]
struct ManifestHeader {
    benchmark: String,
    version: u32,
    seed: u64,
    #[serde(default)]
    rounds: usize,
}

#[derive(Serialize, Deserialize)]
struct AnyCirRecord {
    doc_id: String,
    former: usize,
}

#[derive(Serialize, Deserialize)]
struct SeqCirRecord {
    doc_id: String,
}

#[derive(Serialize, Deserialize)]
struct CsrRecord {
    deck_id: String,
    former_index: usize,
    former_path: String,
    latter_path: String,
}

fn open_manifest(path: &Path, expected: &str) -> Result<(ManifestHeader, Vec<String>)> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Manifest("empty manifest".into()))??;
    let header: ManifestHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Manifest(format!("bad header: {e}")))?;
    if header.benchmark != expected {
        return Err(Error::Manifest(format!(
            "manifest is for {:?}, expected {expected:?}",
            header.benchmark
        )));
    }
    let body: Vec<String> = lines.collect::<std::io::Result<_>>()?;
    Ok((header, body))
}

fn manifest_writer(path: &Path, header: &ManifestHeader) -> Result<BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, header).map_err(|e| Error::Manifest(e.to_string()))?;
    w.write_all(b"\n")?;
    Ok(w)
}

pub fn write_anycir_manifest(path: &Path, pool: &AnyCirPool, seed: u64) -> Result<()> {
    let mut w = manifest_writer(
        path,
        &ManifestHeader {
            benchmark: "anycir".into(),
            version: 1,
            seed,
            rounds: 0,
        },
    )?;
    for pair in &pool.pairs {
        serde_json::to_writer(
            &mut w,
            &AnyCirRecord {
                doc_id: pair.former.doc_id.clone(),
                former: pair.former.index,
            },
        )
        .map_err(|e| Error::Manifest(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_anycir_manifest(path: &Path, corpus: &PreparedCorpus) -> Result<AnyCirPool> {
    let (_, body) = open_manifest(path, "anycir")?;
    let mut pairs = Vec::with_capacity(body.len());
    let mut seen = HashSet::new();
    for line in body {
        let record: AnyCirRecord =
            serde_json::from_str(&line).map_err(|e| Error::Manifest(e.to_string()))?;
        if !seen.insert(record.doc_id.clone()) {
            return Err(Error::Manifest(format!(
                "duplicate document {} in anycir manifest",
                record.doc_id
            )));
        }
        let doc = corpus
            .doc_by_id(&record.doc_id)
            .ok_or_else(|| Error::UnknownSnippet(record.doc_id.clone()))?;
        let former = doc
            .snippets
            .get(record.former)
            .ok_or_else(|| Error::UnknownSnippet(format!("{}#{}", record.doc_id, record.former)))?;
        let latter = doc.snippets.get(record.former + 1).ok_or_else(|| {
            Error::UnknownSnippet(format!("{}#{}", record.doc_id, record.former + 1))
        })?;
        pairs.push(AnyCirPair {
            former: former.clone(),
            latter: latter.clone(),
        });
    }
    Ok(AnyCirPool { pairs })
}

pub fn write_seqcir_manifest(path: &Path, doc_ids: &[String], rounds: usize, seed: u64) -> Result<()> {
    let mut w = manifest_writer(
        path,
        &ManifestHeader {
            benchmark: "seqcir".into(),
            version: 1,
            seed,
            rounds,
        },
    )?;
    for doc_id in doc_ids {
        serde_json::to_writer(&mut w, &SeqCirRecord { doc_id: doc_id.clone() })
            .map_err(|e| Error::Manifest(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_seqcir_manifest(path: &Path, corpus: &PreparedCorpus) -> Result<SeqCirPool> {
    let (header, body) = open_manifest(path, "seqcir")?;
    let rounds = header.rounds;
    if rounds == 0 {
        return Err(Error::Manifest("seqcir manifest has zero rounds".into()));
    }
    let mut entries = Vec::new();
    let mut initial_queries = Vec::new();
    for line in body {
        let record: SeqCirRecord =
            serde_json::from_str(&line).map_err(|e| Error::Manifest(e.to_string()))?;
        let doc = corpus
            .doc_by_id(&record.doc_id)
            .ok_or_else(|| Error::UnknownSnippet(record.doc_id.clone()))?;
        if doc.snippets.len() >= rounds + 1 {
            initial_queries.push(entries.len());
        }
        for snippet in &doc.snippets {
            entries.push(SeqEntry {
                position: snippet.index,
                snippet: snippet.clone(),
            });
        }
    }
    if initial_queries.is_empty() {
        return Err(Error::NoInitialQueries);
    }
    Ok(SeqCirPool {
        entries,
        initial_queries,
        rounds,
    })
}

pub fn write_csr_manifest(path: &Path, pool: &CsrPool, seed: u64) -> Result<()> {
    let mut w = manifest_writer(
        path,
        &ManifestHeader {
            benchmark: "csr".into(),
            version: 1,
            seed,
            rounds: 0,
        },
    )?;
    for pair in &pool.pairs {
        serde_json::to_writer(
            &mut w,
            &CsrRecord {
                deck_id: pair.deck_id.clone(),
                former_index: pair.former_index,
                former_path: pair.former.source_path.to_string_lossy().into_owned(),
                latter_path: pair.latter.source_path.to_string_lossy().into_owned(),
            },
        )
        .map_err(|e| Error::Manifest(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csr_manifest(path: &Path) -> Result<CsrPool> {
    let (_, body) = open_manifest(path, "csr")?;
    let mut pairs = Vec::with_capacity(body.len());
    for line in body {
        let record: CsrRecord =
            serde_json::from_str(&line).map_err(|e| Error::Manifest(e.to_string()))?;
        pairs.push(CsrPair {
            deck_id: record.deck_id.clone(),
            former_index: record.former_index,
            former: ImageRef::new(format!("{}#{}", record.deck_id, record.former_index), record.former_path),
            latter: ImageRef::new(
                format!("{}#{}", record.deck_id, record.former_index + 1),
                record.latter_path,
            ),
        });
    }
    Ok(CsrPool { pairs })
}

/// Load slide decks from a directory of per-deck subdirectories; slides order
/// by file name.
pub fn load_decks(root: &Path) -> Result<Vec<SlideDeck>> {
    let mut decks = Vec::new();
    let mut dirs: Vec<_> = std::fs::read_dir(root)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|e| e.path().is_dir())
        .collect();
    dirs.sort_by_key(|e| e.path());
    for dir in dirs {
        let deck_id = dir.file_name().to_string_lossy().into_owned();
        let mut slides: Vec<_> = std::fs::read_dir(dir.path())?
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        slides.sort();
        decks.push(SlideDeck {
            deck_id: deck_id.clone(),
            slides: slides
                .into_iter()
                .enumerate()
                .map(|(i, p)| ImageRef::new(format!("{deck_id}#{i}"), p))
                .collect(),
        });
    }
    Ok(decks)
}

/// Load pixel data for every slide referenced by a CSR pool.
pub fn load_csr_images(pool: &mut CsrPool) -> Result<()> {
    for pair in &mut pool.pairs {
        pair.former.load()?;
        pair.latter.load()?;
    }
    Ok(())
}
