//! Parallel-vs-sequential throughput comparison for the data-parallel hot
//! paths: batch rendering, batch embedding, and brute-force ranking.
//!
//! Run with `cargo bench`. The parallel variants go through the same rayon
//! helpers the library uses (the `parallel` feature is on by default); the
//! `*_seq` variants pin the sequential fallback for comparison.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pixsnip::corpus::{prepare_corpus, AssignPolicy};
use pixsnip::exec;
use pixsnip::font::FontTable;
use pixsnip::model::{encode, EncoderParams, ModelConfig};
use pixsnip::render::{canvas_to_tensor, render, LayoutConfig, RenderModality};
use pixsnip::seed::rng_for;
use pixsnip::synth::{generate_documents, SynthConfig, SEGMENT_MAX_CHARS};

fn test_font() -> FontTable {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/testfont.hex");
    FontTable::from_hex_file(&path).unwrap()
}

fn bench_render_batch(c: &mut Criterion) {
    let font = test_font();
    let layout = LayoutConfig::desk();
    let docs = generate_documents(&SynthConfig {
        n_docs: 64,
        ..SynthConfig::default()
    });
    let corpus = prepare_corpus(&docs, AssignPolicy::Annotation, SEGMENT_MAX_CHARS, true).unwrap();
    let snippets: Vec<_> = corpus
        .docs
        .iter()
        .flat_map(|d| d.snippets.iter().cloned())
        .collect();

    let mut group = c.benchmark_group("render_batch");
    for (label, run) in [
        ("parallel", true),
        ("sequential", false),
    ] {
        group.bench_with_input(BenchmarkId::from_parameter(label), &run, |b, &par| {
            b.iter(|| {
                let render_one = |i: usize| {
                    render(
                        &snippets[i],
                        RenderModality::Interleaved,
                        &font,
                        &layout,
                        i as u64,
                    )
                    .unwrap()
                };
                if par {
                    exec::map_indexed(snippets.len(), render_one)
                } else {
                    exec::map_indexed_seq(snippets.len(), render_one)
                }
            })
        });
    }
    group.finish();
}

fn bench_encode_batch(c: &mut Criterion) {
    let font = test_font();
    let layout = LayoutConfig::desk();
    let model_cfg = ModelConfig::default();
    let params =
        EncoderParams::<f32>::init(&model_cfg, &mut rng_for(0, "bench-init")).unwrap();
    let docs = generate_documents(&SynthConfig {
        n_docs: 16,
        ..SynthConfig::default()
    });
    let corpus = prepare_corpus(&docs, AssignPolicy::Annotation, SEGMENT_MAX_CHARS, true).unwrap();
    let tensors: Vec<_> = corpus
        .docs
        .iter()
        .flat_map(|d| d.snippets.iter())
        .map(|s| {
            let canvas =
                render(s, RenderModality::Interleaved, &font, &layout, s.index as u64).unwrap();
            canvas_to_tensor::<f32>(&canvas)
        })
        .collect();

    let mut group = c.benchmark_group("encode_batch");
    for (label, par) in [("parallel", true), ("sequential", false)] {
        group.bench_with_input(BenchmarkId::from_parameter(label), &par, |b, &par| {
            b.iter(|| {
                let encode_one = |t: &ndarray::Array3<f32>| encode(&params, t).unwrap();
                if par {
                    exec::map_ordered(&tensors, encode_one)
                } else {
                    exec::map_ordered_seq(&tensors, encode_one)
                }
            })
        });
    }
    group.finish();
}

fn bench_rank(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dim = 32;
    let n_candidates = 4096;
    let unit = |rng: &mut ChaCha8Rng| {
        let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0f32)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        v.into_iter().map(|x| x / norm).collect::<Vec<f32>>()
    };
    let queries: Vec<Vec<f32>> = (0..64).map(|_| unit(&mut rng)).collect();
    let candidates: Vec<Vec<f32>> = (0..n_candidates).map(|_| unit(&mut rng)).collect();

    let mut group = c.benchmark_group("rank_top10");
    for (label, par) in [("parallel", true), ("sequential", false)] {
        group.bench_with_input(BenchmarkId::from_parameter(label), &par, |b, &par| {
            b.iter(|| {
                let rank_one =
                    |q: &Vec<f32>| pixsnip::retrieval::rank_candidates(q, &candidates, 10);
                if par {
                    exec::map_ordered(&queries, rank_one)
                } else {
                    exec::map_ordered_seq(&queries, rank_one)
                }
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_render_batch, bench_encode_batch, bench_rank);
criterion_main!(benches);
