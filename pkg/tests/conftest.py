"""Shared fixtures: tiny hand-built indexes, a generated corpus, and the
constructed ingredient-retrieval fixture used by re-ranking tests."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from f4search import (
    Caption,
    CaptionIndex,
    EmbeddingVector,
    EncoderSpec,
    QueryBundle,
    build_index,
    build_index_from_records,
    encode_text_synthetic,
    generate_corpus,
    ingest_captions,
    l2_normalize,
    load_bundles,
)
from f4search.synthetic import SyntheticCorpusConfig


def unit(values) -> EmbeddingVector:
    return l2_normalize(EmbeddingVector(np.asarray(values, dtype=np.float64)))


@pytest.fixture
def synthetic_spec() -> EncoderSpec:
    return EncoderSpec("synthetic", 32, seed=7)


@pytest.fixture
def make_index():
    """Factory: build a CaptionIndex from {id: vector} rows (unit-normalized)."""

    def build(rows: dict, kind: str = "dense") -> CaptionIndex:
        captions = [Caption(cid, f"caption {cid}", kind) for cid in rows]
        records = [(cid, unit(vec)) for cid, vec in rows.items()]
        return build_index_from_records(captions, records)

    return build


@dataclass
class Corpus:
    root: Path
    manifest: dict
    encoder: EncoderSpec
    dense_index: object
    sparse_index: object
    items_index: object
    bundles: list
    bundles_items: list


@pytest.fixture(scope="session")
def corpus42(tmp_path_factory) -> Corpus:
    """The default seed-42 synthetic corpus, generated once per session."""
    root = tmp_path_factory.mktemp("corpus42")
    manifest = generate_corpus(SyntheticCorpusConfig(), root)
    encoder = EncoderSpec.from_fingerprint(manifest["encoder_fingerprint"])
    dense_index = build_index(ingest_captions(root / "captions_dense.jsonl"), encoder)
    sparse_index = build_index(ingest_captions(root / "captions_sparse.jsonl"), encoder)
    items_index = build_index(ingest_captions(root / "captions_items.jsonl"), encoder)
    bundles = load_bundles(root / "bundles.jsonl", root / "images.f4e")
    bundles_items = load_bundles(root / "bundles_items.jsonl", root / "images.f4e")
    return Corpus(
        root, manifest, encoder, dense_index, sparse_index, items_index,
        bundles, bundles_items,
    )


@dataclass
class RerankFixture:
    index: object
    bundles: list
    encoder: EncoderSpec


@pytest.fixture(scope="session")
def rerank_fixture() -> RerankFixture:
    """200 single-ingredient captions and 100 queries whose image embeddings
    sit near token-disjoint distractors, so stage-1 fused retrieval favours
    the wrong captions and item-level re-ranking has to recover."""
    dim, seed = 64, 5
    spec = EncoderSpec("synthetic", dim, seed=seed)
    words = [f"item{j:03d}" for j in range(200)]
    captions = [Caption(f"i{j:03d}", words[j], "sparse") for j in range(200)]
    index = build_index(captions, spec)
    word_vec = {w: encode_text_synthetic(w, spec).values for w in words}

    rng = np.random.default_rng(seed)
    bundles = []
    for q in range(100):
        pick = rng.choice(200, size=10, replace=False)
        gt_words = [words[j] for j in pick[:4]]
        distractor_words = [words[j] for j in pick[4:]]
        raw = (
            sum(word_vec[w] for w in distractor_words) / len(distractor_words)
            + 0.4 * sum(word_vec[w] for w in gt_words) / len(gt_words)
            + 0.1 * rng.standard_normal(dim)
        )
        bundles.append(
            QueryBundle(
                image_id=f"q{q:03d}",
                e_img=unit(raw),
                sparse_pred_text=", ".join(gt_words),
                gt_caption_ids=tuple(f"i{j:03d}" for j in pick[:4]),
            )
        )
    return RerankFixture(index, bundles, spec)
