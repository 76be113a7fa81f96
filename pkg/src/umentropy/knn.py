"""k-nearest-neighbor cell geometry.

Every estimator in :mod:`umentropy.estimators` consumes one of three
quantities computed here:

* ``eps[i]``: twice the p-norm distance from sample ``i`` to its k-th
  nearest neighbor (the cube/ball diameter),
* ``eps_marginal[i, j]``: twice the largest coordinate-``j`` offset among
  the k max-norm neighbors of ``i`` (the rectangle side lengths),
* truncated side lengths, i.e. the cell clipped to ``[0, 1]^d``.

Neighbor search has a brute-force backend and a kd-tree backend. The tree
only proposes candidate indices; the distances themselves are always
recomputed with the same arithmetic as the brute-force path so both
backends agree bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DuplicatePoints, InvalidK, OutOfDomain
from .samples import SampleSet, as_samples

TREE_THRESHOLD = 256
_CHUNK_ELEMS = 1 << 22
_EXTRA_CANDIDATES = 3


def _norm_order(p):
    if p in (np.inf, "inf", "max", None):
        return np.inf
    p = float(p)
    if p not in (1.0, 2.0) and not np.isinf(p):
        raise ValueError(f"norm order must be 1, 2 or inf, got {p}")
    return p


def _dist(diff, p):
    # diff: (..., d). One formula shared by both backends.
    a = np.abs(diff)
    if np.isinf(p):
        return a.max(axis=-1)
    if p == 1.0:
        return a.sum(axis=-1)
    return np.sqrt((a * a).sum(axis=-1))


def _check_k(n, k):
    if int(k) != k or k < 1 or k >= n:
        raise InvalidK(f"k must satisfy 1 <= k <= N-1 = {n - 1}, got {k}")
    return int(k)


def _brute_neighbors(x, k, p):
    """Indices (N, k) of the k nearest neighbors, ties broken by index."""
    n, d = x.shape
    out = np.empty((n, k), dtype=np.intp)
    chunk = max(1, _CHUNK_ELEMS // max(1, n * d))
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        dist = _dist(x[start:stop, None, :] - x[None, :, :], p)
        rows = np.arange(stop - start)
        dist[rows, rows + start] = np.inf
        # stable sort keeps equal distances in index order
        order = np.argsort(dist, axis=1, kind="stable")
        out[start:stop] = order[:, :k]
    return out


def _tree_neighbors(x, k, p):
    n = x.shape[0]
    m = min(n, k + 1 + _EXTRA_CANDIDATES)
    tree = cKDTree(x)
    _, cand = tree.query(x, k=m, p=p)
    cand = np.atleast_2d(cand).reshape(n, m)
    dist = _dist(x[cand] - x[:, None, :], p)
    dist[cand == np.arange(n)[:, None]] = np.inf
    key = np.lexsort((cand, dist), axis=-1)
    out = np.take_along_axis(cand, key[:, :k], axis=1)
    boundary = np.take_along_axis(dist, key[:, k - 1 : k], axis=1)[:, 0]
    finite_max = np.where(np.isfinite(dist), dist, -np.inf).max(axis=1)
    # If ties at the boundary distance may continue past the candidate
    # list, the set is incomplete; recompute those rows exactly.
    fallback = np.flatnonzero(finite_max <= boundary) if m < n else []
    for i in fallback:
        dist_i = _dist(x - x[i], p)
        dist_i[i] = np.inf
        out[i] = np.argsort(dist_i, kind="stable")[:k]
    return out


def knn_indices(samples, k: int, p=np.inf, backend: str = "auto") -> np.ndarray:
    """Return the (N, k) neighbor index matrix sorted by distance.

    Among equidistant candidates the lower index wins, which makes the
    neighbor *set* deterministic as well as the distances.
    """
    s = as_samples(samples)
    k = _check_k(s.n, k)
    p = _norm_order(p)
    if backend == "auto":
        backend = "tree" if s.n > TREE_THRESHOLD else "brute"
    if backend == "brute":
        return _brute_neighbors(s.data, k, p)
    if backend == "tree":
        return _tree_neighbors(s.data, k, p)
    raise ValueError(f"unknown backend {backend!r}")


def _radii_from(x, idx, p):
    return 2.0 * _dist(x[idx[:, -1]] - x, p)


def knn_radii(samples, k: int = 1, p=np.inf, backend: str = "auto") -> np.ndarray:
    """Twice the p-norm distance from each sample to its k-th neighbor."""
    s = as_samples(samples)
    p = _norm_order(p)
    idx = knn_indices(s, k, p, backend)
    eps = _radii_from(s.data, idx, p)
    if np.any(eps == 0.0):
        bad = int(np.flatnonzero(eps == 0.0)[0])
        raise DuplicatePoints(f"sample {bad} has a zero k-NN distance (k={k})")
    return eps


def marginal_radii(samples, k: int = 1, backend: str = "auto") -> np.ndarray:
    """Per-dimension rectangle widths ``eps_marginal[i, j]``.

    The k neighbors are chosen under the max norm; along each coordinate
    the width is twice the largest offset among those k neighbors, so
    ``eps_marginal.max(axis=1)`` equals :func:`knn_radii` with ``p=inf``.
    """
    s = as_samples(samples)
    idx = knn_indices(s, k, np.inf, backend)
    x = s.data
    em = 2.0 * np.abs(x[idx] - x[:, None, :]).max(axis=1)
    if np.any(em.max(axis=1) == 0.0):
        bad = int(np.flatnonzero(em.max(axis=1) == 0.0)[0])
        raise DuplicatePoints(f"sample {bad} has a zero k-NN distance (k={k})")
    return em


def truncated_lengths(samples, half_widths, tol: float = 1e-12) -> np.ndarray:
    """Side lengths of cells ``[x - w, x + w]`` clipped to the unit cube."""
    s = as_samples(samples)
    x = s.data
    if np.any(x < -tol) or np.any(x > 1.0 + tol):
        lo, hi = float(x.min()), float(x.max())
        raise OutOfDomain(f"samples must lie in [0, 1]^d, found range [{lo}, {hi}]")
    x = np.clip(x, 0.0, 1.0)
    w = np.broadcast_to(np.asarray(half_widths, dtype=np.float64), x.shape)
    if np.any(w <= 0):
        raise ValueError("half widths must be positive")
    return np.minimum(x + w, 1.0) - np.maximum(x - w, 0.0)


@dataclass(frozen=True, eq=False)
class CellGeometry:
    eps: np.ndarray
    eps_marginal: np.ndarray
    xi: np.ndarray
    zeta: np.ndarray
    k: int


def cell_geometry(samples, k: int = 1, backend: str = "auto") -> CellGeometry:
    """All max-norm cell quantities for unit-cube samples in one search."""
    s = as_samples(samples)
    idx = knn_indices(s, k, np.inf, backend)
    x = s.data
    em = 2.0 * np.abs(x[idx] - x[:, None, :]).max(axis=1)
    eps = em.max(axis=1)
    if np.any(eps == 0.0):
        raise DuplicatePoints(f"zero k-NN distance (k={k})")
    xi = truncated_lengths(s, np.repeat(eps[:, None] / 2.0, s.d, axis=1))
    zeta = truncated_lengths(s, em / 2.0) if np.all(em > 0) else np.zeros_like(em)
    return CellGeometry(eps=eps, eps_marginal=em, xi=xi, zeta=zeta, k=int(k))
