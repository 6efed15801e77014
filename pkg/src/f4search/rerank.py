"""Ingredient-level max-similarity re-ranking of an initial candidate set.

A predicted sparse caption ("chicken, rice, curry leaves") is parsed into
item phrases; every candidate caption is then re-scored by the maximum
cosine similarity between its stored embedding and the individually
encoded item embeddings. A candidate that strongly matches any one item
rises to the top, which is what separates "shrimp" from a visually
similar dish mentioning "chicken".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .encoders import EncoderSpec, encode_texts
from .errors import MissingPredictionTextError, NoItemsError, UnknownCandidateIdError
from .search import (
    STAGE_RERANKED,
    QueryBundle,
    RankedList,
    search_fused_topk,
)
from .vectors import DEFAULT_QUERY_WEIGHTS, FusionWeights, clamp_score

if TYPE_CHECKING:
    from .index import CaptionIndex

DEFAULT_POOL_FLOOR = 50
DEFAULT_POOL_FACTOR = 5


@dataclass(frozen=True)
class ParsedItems:
    """Ordered, deduplicated item phrases parsed from a sparse caption."""

    phrases: tuple[str, ...]
    source_text: str

    def __post_init__(self):
        if not self.phrases:
            raise NoItemsError(f"no item phrases in {self.source_text!r}")


def parse_items(sparse_text: str) -> ParsedItems:
    """Split a sparse caption on commas into trimmed, lowercased phrases.

    Empty fragments are dropped and duplicates are removed keeping the
    first occurrence. Only the comma splits: multi-word items like
    "herb oil" stay intact.
    """
    phrases = []
    seen = set()
    for fragment in sparse_text.split(","):
        phrase = fragment.strip().lower()
        if phrase and phrase not in seen:
            seen.add(phrase)
            phrases.append(phrase)
    if not phrases:
        raise NoItemsError(f"no item phrases in {sparse_text!r}")
    return ParsedItems(tuple(phrases), sparse_text)


def default_pool_size(k: int) -> int:
    """Initial candidate pool used when none is configured."""
    return max(DEFAULT_POOL_FLOOR, DEFAULT_POOL_FACTOR * k)


def rerank(
    candidates: RankedList,
    items: ParsedItems,
    index: "CaptionIndex",
    encoder: EncoderSpec,
    blend: float = 0.0,
) -> RankedList:
    """Re-order candidates by max item-level cosine similarity.

    The candidate set is preserved; scores are replaced by
    ``max_j cos(row, item_j)`` (optionally blended with the incoming score
    when ``blend`` > 0, default is pure replacement). Because max is
    commutative the item order never matters, and re-ranking an already
    re-ranked list with the same items is a no-op.
    """
    if not 0.0 <= blend < 1.0:
        raise ValueError("blend must lie in [0, 1)")
    rows = []
    for cid, _ in candidates.entries:
        if not index.has_id(cid):
            raise UnknownCandidateIdError(f"candidate id {cid!r} not in index")
        rows.append(index.row_of(cid))

    # parse_items already deduplicated, so each phrase is encoded once.
    item_vecs = encode_texts(list(items.phrases), encoder)
    item_matrix = np.stack([v.values for v in item_vecs])
    cand_matrix = index.embeddings[rows].astype(np.float64)
    # einsum keeps each (candidate, item) dot independent of matrix layout,
    # so the max is bitwise stable under item permutations.
    max_sim = np.einsum("ij,kj->ik", cand_matrix, item_matrix).max(axis=1)

    scores = max_sim
    if blend > 0.0:
        initial = np.array([score for _, score in candidates.entries])
        scores = (1.0 - blend) * max_sim + blend * initial
    scores = [clamp_score(s) for s in scores]

    ids = [cid for cid, _ in candidates.entries]
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    entries = tuple((ids[i], scores[i]) for i in order)
    return RankedList(entries, k=candidates.k, stage=STAGE_RERANKED)


def retrieve_and_rerank(
    bundle: QueryBundle,
    index: "CaptionIndex",
    w: FusionWeights = DEFAULT_QUERY_WEIGHTS,
    N: int | None = None,
    k: int = 5,
    encoder: EncoderSpec | None = None,
    workers: int = 1,
) -> RankedList:
    """Two-stage pipeline: fused top-N retrieval, item re-rank, cut to top-k.

    Stage 1 fixes the recall ceiling: anything outside the initial top-N
    can never reappear, so N defaults generously to max(50, 5k).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if N is None:
        N = default_pool_size(k)
    if N < k:
        raise ValueError(f"initial pool N={N} must be >= k={k}")
    if not bundle.sparse_pred_text:
        raise MissingPredictionTextError(
            f"bundle {bundle.image_id!r} has no sparse prediction text"
        )
    initial = search_fused_topk(
        bundle, index, w, text_source="sparse", encoder=encoder, k=N, workers=workers
    )
    items = parse_items(bundle.sparse_pred_text)
    reordered = rerank(initial, items, index, encoder)
    k_eff = min(k, len(reordered.entries))
    return RankedList(reordered.entries[:k_eff], k=k_eff, stage=STAGE_RERANKED)
