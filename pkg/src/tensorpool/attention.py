"""Attention primitives: scaled-dot-product rows and a SoftMax-free RBF form.

Matrices follow the column-token convention on the way in (``Q`` is
``d x N_q`` with one query per column) and the row-token convention on the
way out (``N_q x d``), matching how attention outputs are consumed by
normalization layers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NormalizationError

SOFTMAX = "softmax"
RBF = "rbf"
DEFAULT_SIGMA = 0.5
_LN_EPS = 1e-5


@dataclass(frozen=True)
class AttentionBundle:
    """Query/key/value matrices with RBF bandwidth and head count."""

    queries: np.ndarray  # d x N_q
    keys: np.ndarray  # d x N_k
    values: np.ndarray  # d x N_k
    sigma: float = DEFAULT_SIGMA
    heads: int = 1

    def __post_init__(self):
        q = np.asarray(self.queries, dtype=np.float64)
        k = np.asarray(self.keys, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
            raise InvalidArgumentError("Q, K, V must be 2-D matrices")
        if q.shape[0] != k.shape[0] or q.shape[0] != v.shape[0]:
            raise InvalidArgumentError("Q, K, V must share the channel dimension")
        if k.shape[1] != v.shape[1]:
            raise InvalidArgumentError("K and V must have the same number of tokens")
        if q.shape[0] == 0 or q.shape[1] == 0 or k.shape[1] == 0:
            raise InvalidArgumentError("attention inputs must be non-empty")
        if self.sigma <= 0:
            raise InvalidArgumentError("sigma must be positive")
        if self.heads < 1 or q.shape[0] % self.heads != 0:
            raise InvalidArgumentError("head count must divide the channel dimension")
        object.__setattr__(self, "queries", q)
        object.__setattr__(self, "keys", k)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.queries.shape[0]


def _unit_columns(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=0)
    if np.any(norms == 0.0):
        raise NormalizationError("cannot l2-normalize a zero column")
    return m / norms


def rbf_similarity(q, k, sigma: float) -> float:
    """Gaussian similarity of l2-normalized vectors, in (0, 1]."""
    if sigma <= 0:
        raise InvalidArgumentError("sigma must be positive")
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    k = np.asarray(k, dtype=np.float64).reshape(-1)
    nq, nk = np.linalg.norm(q), np.linalg.norm(k)
    if nq == 0.0 or nk == 0.0:
        raise NormalizationError("cannot l2-normalize a zero vector")
    dist_sq = float(np.sum((q / nq - k / nk) ** 2))
    return float(np.exp(-dist_sq / (2.0 * sigma**2)))


def _similarity_matrix(bundle: AttentionBundle, kind: str) -> np.ndarray:
    if kind == SOFTMAX:
        scores = bundle.queries.T @ bundle.keys / np.sqrt(bundle.dim)
        scores -= scores.max(axis=1, keepdims=True)
        weights = np.exp(scores)
        return weights / weights.sum(axis=1, keepdims=True)
    if kind == RBF:
        qn = _unit_columns(bundle.queries)
        kn = _unit_columns(bundle.keys)
        dist_sq = np.clip(2.0 - 2.0 * (qn.T @ kn), 0.0, None)
        return np.exp(-dist_sq / (2.0 * bundle.sigma**2))
    raise InvalidArgumentError(f"unknown attention kind {kind!r}")


def attention(bundle: AttentionBundle, kind: str = SOFTMAX) -> np.ndarray:
    """Single-head attention: ``alpha(gamma(Q, K)) @ V.T``, one row per query.

    The softmax kind mixes values with rows summing to one; the RBF kind
    uses unnormalized Gaussian similarities of l2-normalized tokens, so its
    rows do not sum to one.
    """
    return _similarity_matrix(bundle, kind) @ bundle.values.T


def split_heads(m: np.ndarray, heads: int) -> list[np.ndarray]:
    """Split channels (rows) into ``heads`` equal groups."""
    if heads < 1 or m.shape[0] % heads != 0:
        raise InvalidArgumentError("head count must divide the channel dimension")
    return np.split(m, heads, axis=0)


def multi_head(bundle: AttentionBundle, kind: str = SOFTMAX) -> np.ndarray:
    """Run attention per channel group and concatenate the outputs.

    With one head this is exactly ``attention``; each head sees its own
    ``d / T`` channels of Q, K, and V.
    """
    heads = bundle.heads
    if heads == 1:
        return attention(bundle, kind)
    outputs = []
    for q, k, v in zip(
        split_heads(bundle.queries, heads),
        split_heads(bundle.keys, heads),
        split_heads(bundle.values, heads),
    ):
        sub = AttentionBundle(q, k, v, sigma=bundle.sigma, heads=1)
        outputs.append(attention(sub, kind))
    return np.hstack(outputs)


def layer_norm_residual(x: np.ndarray, sub_output: np.ndarray) -> np.ndarray:
    """Add a sublayer output to its input and normalize each token row.

    Rows are tokens (the attention output convention).  Each row of
    ``x + sub_output`` is shifted to zero mean and scaled to unit variance
    across channels, with unit gain and zero bias; an epsilon on the
    standard deviation keeps constant rows finite (they normalize to zero).
    """
    x = np.asarray(x, dtype=np.float64)
    sub = np.asarray(sub_output, dtype=np.float64)
    if x.shape != sub.shape:
        raise InvalidArgumentError("residual shapes must match")
    y = x + sub
    centered = y - y.mean(axis=-1, keepdims=True)
    std = np.sqrt(centered.var(axis=-1, keepdims=True) + _LN_EPS**2)
    return centered / std
