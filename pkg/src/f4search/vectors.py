"""Vector primitives: L2 normalization, cosine similarity and weighted fusion.

All similarity math runs in double precision regardless of how vectors are
stored. Fused vectors are renormalized by default so that queries and index
rows stay on the unit sphere and scores remain plain dot products; cosine is
scale-invariant, so renormalization never changes a ranking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, ZeroVectorError

ZERO_NORM_EPS = 1e-12
UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """A fixed-dimension real vector, optionally flagged as unit-norm.

    Values are coerced to an immutable float64 array. The ``normalized``
    flag is validated at construction: setting it requires the L2 norm to
    be within 1e-6 of one.
    """

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("embedding must be a non-empty 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding entries must be finite")
        if self.normalized:
            norm = float(np.linalg.norm(arr))
            if abs(norm - 1.0) > UNIT_NORM_TOL:
                raise ValueError(
                    f"normalized flag set but L2 norm is {norm!r}"
                )
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class FusionWeights:
    """Complementary image/text weights for weighted-sum fusion."""

    w_img: float
    w_text: float

    def __post_init__(self):
        if not (0.0 <= self.w_img <= 1.0 and 0.0 <= self.w_text <= 1.0):
            raise ValueError("fusion weights must lie in [0, 1]")
        if abs(self.w_img + self.w_text - 1.0) > 1e-9:
            raise ValueError(
                f"fusion weights must sum to 1, got {self.w_img} + {self.w_text}"
            )


# Default query-side weights; heavier text weighting is used when fusing
# on the index side, and a near-pure image weighting suits noisy corpora.
DEFAULT_QUERY_WEIGHTS = FusionWeights(0.7, 0.3)
DEFAULT_INDEX_WEIGHTS = FusionWeights(0.3, 0.7)


def clamp_score(x: float) -> float:
    """Pin a cosine score into [-1, 1], absorbing float round-off."""
    return min(1.0, max(-1.0, float(x)))


def l2_normalize(v: EmbeddingVector) -> EmbeddingVector:
    """Scale ``v`` to unit L2 norm, preserving direction."""
    norm = float(np.linalg.norm(v.values))
    if norm <= ZERO_NORM_EPS:
        raise ZeroVectorError("cannot normalize a zero vector")
    return EmbeddingVector(v.values / norm, normalized=True)


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine of the angle between two vectors, in [-1, 1].

    When both inputs carry the unit-norm flag this reduces to a plain dot
    product; otherwise the dot product is divided by both norms.
    """
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dim {a.dim} vs {b.dim}")
    dot = float(np.dot(a.values, b.values))
    if a.normalized and b.normalized:
        return clamp_score(dot)
    na = float(np.linalg.norm(a.values))
    nb = float(np.linalg.norm(b.values))
    if na <= ZERO_NORM_EPS or nb <= ZERO_NORM_EPS:
        raise ZeroVectorError("cosine similarity of a zero vector is undefined")
    return clamp_score(dot / (na * nb))


def fuse(
    e_img: EmbeddingVector,
    e_text: EmbeddingVector,
    w: FusionWeights = DEFAULT_QUERY_WEIGHTS,
    renormalize: bool = True,
) -> EmbeddingVector:
    """Weighted sum of a unit image embedding and a unit text embedding.

    Returns ``w.w_img * e_img + w.w_text * e_text``. A zero weight on
    either side returns the other input unchanged, so degenerate weights
    reproduce single-modality retrieval bit-for-bit. With ``renormalize``
    the result is scaled back onto the unit sphere.
    """
    if e_img.dim != e_text.dim:
        raise DimensionMismatchError(f"dim {e_img.dim} vs {e_text.dim}")
    if not (e_img.normalized and e_text.normalized):
        raise ValueError("fuse expects unit-norm inputs; normalize at ingestion")
    if w.w_text == 0.0:
        return e_img
    if w.w_img == 0.0:
        return e_text
    combined = w.w_img * e_img.values + w.w_text * e_text.values
    norm = float(np.linalg.norm(combined))
    if norm <= ZERO_NORM_EPS:
        raise ZeroVectorError("weighted sum collapsed to the zero vector")
    if renormalize:
        return EmbeddingVector(combined / norm, normalized=True)
    return EmbeddingVector(combined, normalized=False)
