"""Nearest-neighbor regression on the reduced time-series feature set.

Three metrics: plain Euclidean, Mahalanobis (whitened), and RReliefF-weighted
Euclidean, each combined with Dudani-style distance weighting. Features are
min-max scaled to [0, 1] before any distance computation. Exact search is the
default; an opt-in navigable-small-world graph must pass a recall gate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DataError, Dataset

RECIPROCAL = "reciprocal"
MINMAX = "minmax"
UNIFORM = "uniform"
WEIGHTING_MODES = (RECIPROCAL, MINMAX, UNIFORM)

RECALL_GATE = 0.95
_EPS = 1e-12


@dataclass
class NeighborIndex:
    points: np.ndarray            # fully transformed points used for distances
    labels: np.ndarray
    kind: str = "exact"           # "exact" | "approximate"
    mins: np.ndarray | None = None
    ranges: np.ndarray | None = None
    transform: np.ndarray | None = None        # Mahalanobis whitening
    feature_weights: np.ndarray | None = None  # RReliefF weights (clamped)
    neighbors_graph: list[np.ndarray] | None = None
    recall: float | None = None
    _tree: object = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.points)

    def search_tree(self):
        from scipy.spatial import cKDTree

        if self._tree is None:
            self._tree = cKDTree(self.points)
        return self._tree

    def transform_queries(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.points.shape[1]:
            raise DataError(f"query has {X.shape[1]} features, index has {self.points.shape[1]}")
        if self.mins is not None:
            X = (X - self.mins) / self.ranges
        if self.feature_weights is not None:
            X = X * self.feature_weights
        if self.transform is not None:
            X = X @ self.transform
        return X


def build_mahalanobis(points: np.ndarray, ridge: float = 1e-6) -> np.ndarray:
    """Whitening transform W = (cov + ridge*I)^(-1/2) by symmetric eigenvalue
    decomposition; Euclidean distance in W-space is the Mahalanobis distance."""
    points = np.atleast_2d(points)
    if len(points) < 2:
        raise DataError("Mahalanobis transform needs at least 2 points")
    cov = np.cov(points, rowvar=False)
    cov = np.atleast_2d(cov)
    if not np.isfinite(cov).all():
        raise DataError("covariance is not finite")
    vals, vecs = np.linalg.eigh(cov + ridge * np.eye(cov.shape[0]))
    return vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T


def reweight_features(points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Scale columns by non-negative importance weights (negatives clamp to 0)."""
    w = np.clip(np.asarray(weights, dtype=float), 0.0, None)
    return np.atleast_2d(points) * w


def build_index(X: np.ndarray, y: np.ndarray, *, metric: str = "euclidean",
                feature_weights: np.ndarray | None = None, scale: bool = True,
                ridge: float = 1e-6, kind: str = "exact", graph_degree: int = 12,
                beam_width: int = 48, seed: int = 0) -> NeighborIndex:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if len(X) == 0:
        raise DataError("cannot build an index on an empty set")
    mins = ranges = None
    pts = X
    if scale:
        mins = X.min(axis=0)
        ranges = X.max(axis=0) - mins
        ranges = np.where(ranges > 0, ranges, 1.0)
        pts = (X - mins) / ranges
    weights = None
    if feature_weights is not None:
        weights = np.clip(np.asarray(feature_weights, dtype=float), 0.0, None)
        pts = pts * weights
    transform = None
    if metric == "mahalanobis":
        transform = build_mahalanobis(pts, ridge)
        pts = pts @ transform
    elif metric != "euclidean":
        raise DataError(f"unknown metric: {metric!r}")
    index = NeighborIndex(points=np.ascontiguousarray(pts), labels=y, kind=kind,
                          mins=mins, ranges=ranges, transform=transform,
                          feature_weights=weights)
    if kind == "approximate":
        _build_graph(index, graph_degree, beam_width, seed)
        _check_recall(index, beam_width, seed)
    elif kind != "exact":
        raise DataError(f"unknown index kind: {kind!r}")
    return index


_CANDIDATE_PAD = 8


def _scan_row(points: np.ndarray, q: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((points - q) ** 2).sum(axis=1)
    cand = np.argpartition(d2, min(k, len(d2) - 1))[:k] if k < len(d2) else np.arange(len(d2))
    dk = d2[cand].max()
    cand = np.flatnonzero(d2 <= dk)
    chosen = cand[np.lexsort((cand, d2[cand]))[:k]]
    return np.sqrt(d2[chosen]), chosen


def _exact_topk(points: np.ndarray, Q: np.ndarray, k: int,
                tree=None) -> tuple[np.ndarray, np.ndarray]:
    """True k nearest neighbors; ties broken by insertion order.

    A kd-tree proposes k + pad candidates; distances are then recomputed in
    float64 and re-ranked by (distance, index). A strict gap between the k-th
    and last candidate distance proves the top-k set is complete; rows
    without that gap (heavy ties) fall back to a full scan.
    """
    from scipy.spatial import cKDTree

    Q = np.atleast_2d(Q)
    n = len(points)
    m = len(Q)
    c = min(k + _CANDIDATE_PAD, n)
    if tree is None:
        tree = cKDTree(points)
    _, ti = tree.query(Q, k=c, workers=1)
    ti = np.atleast_2d(ti.reshape(m, c))
    d64 = ((points[ti] - Q[:, None, :]) ** 2).sum(axis=-1)
    order = np.lexsort((ti, d64), axis=1)
    sd = np.take_along_axis(d64, order, axis=1)
    si = np.take_along_axis(ti, order, axis=1)
    D = np.sqrt(sd[:, :k])
    I = si[:, :k].astype(np.int64)
    if c < n:
        gap = sd[:, c - 1] > sd[:, k - 1] + 1e-12 * (1.0 + sd[:, k - 1])
        for i in np.flatnonzero(~gap):
            D[i], I[i] = _scan_row(points, Q[i], k)
    return D, I


def query_many(index: NeighborIndex, X: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Batch query: (distances, neighbor ids), each row sorted ascending."""
    if k > len(index):
        raise DataError(f"k={k} exceeds index size {len(index)}")
    if k < 1:
        raise DataError("k must be >= 1")
    Q = index.transform_queries(X)
    if index.kind == "approximate":
        D = np.empty((len(Q), k))
        I = np.empty((len(Q), k), dtype=np.int64)
        for i, q in enumerate(Q):
            D[i], I[i] = _graph_search(index, q, k)
        return D, I
    return _exact_topk(index.points, Q, k, tree=index.search_tree())


def query_neighbors(index: NeighborIndex, x: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """k (distance, label) pairs for one query, nearest first."""
    D, I = query_many(index, np.atleast_2d(x), k)
    return D[0], index.labels[I[0]]


def dudani_weights(distances: np.ndarray, mode: str) -> np.ndarray:
    """Turn sorted ascending distances into normalized neighbor weights."""
    d = np.asarray(distances, dtype=float)
    if len(d) == 0:
        raise DataError("no distances given")
    if np.any(np.diff(d) < 0):
        raise DataError("distances must be sorted ascending")
    if mode == UNIFORM:
        w = np.ones(len(d))
    elif mode == RECIPROCAL:
        w = 1.0 / np.maximum(d, _EPS)
    elif mode == MINMAX:
        spread = d[-1] - d[0]
        if spread <= 0:
            w = np.ones(len(d))
        else:
            w = (d[-1] - d) / spread
    else:
        raise DataError(f"unknown weighting mode: {mode!r}")
    return w / w.sum()


def predict_knn(index: NeighborIndex, x: np.ndarray, k: int, mode: str = RECIPROCAL) -> float:
    dist, labels = query_neighbors(index, x, k)
    return float(dudani_weights(dist, mode) @ labels)


def predict_knn_many(index: NeighborIndex, X: np.ndarray, k: int,
                     mode: str = RECIPROCAL) -> np.ndarray:
    D, I = query_many(index, X, k)
    out = np.empty(len(D))
    for i in range(len(D)):
        out[i] = dudani_weights(D[i], mode) @ index.labels[I[i]]
    return out


def knn_neighbor_range(index: NeighborIndex, x: np.ndarray, k: int) -> tuple[float, float]:
    _, labels = query_neighbors(index, x, k)
    return float(labels.min()), float(labels.max())


def rrelieff_weights(train: Dataset | tuple[np.ndarray, np.ndarray], m_samples: int,
                     k_neighbors: int, seed: int = 0) -> np.ndarray:
    """Regression ReliefF feature weights in [-1, 1].

    For m sampled instances, accumulates label-difference, feature-difference,
    and joint masses over the k nearest neighbors, with exponentially decaying
    rank weights exp(-(rank/sigma)^2), sigma = k/3. Differences are normalized
    to [0, 1] by per-feature and label ranges.
    """
    if isinstance(train, Dataset):
        X, y = train.X, train.y
    else:
        X, y = train
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if m_samples > n:
        raise DataError("m_samples cannot exceed the number of rows")
    y_range = y.max() - y.min()
    if y_range <= 0:
        return np.zeros(p)

    mins = X.min(axis=0)
    ranges = X.max(axis=0) - mins
    live = ranges > 0
    scaled = (X - mins) / np.where(live, ranges, 1.0)
    scaled[:, ~live] = 0.0
    y_norm = (y - y.min()) / y_range

    rng = np.random.default_rng(seed)
    sampled = rng.permutation(n)[:m_samples]
    ranks = np.arange(1, k_neighbors + 1)
    sigma = k_neighbors / 3.0
    rank_w = np.exp(-((ranks / sigma) ** 2))
    rank_w = rank_w / rank_w.sum()

    n_dy = 0.0
    n_da = np.zeros(p)
    n_dyda = np.zeros(p)
    k = min(k_neighbors, n - 1)
    D, I = _exact_topk(scaled, scaled[sampled], k + 1)
    for row, i in enumerate(sampled):
        nbr = I[row]
        nbr = nbr[nbr != i][:k]
        w = rank_w[:len(nbr)] / rank_w[:len(nbr)].sum()
        dy = np.abs(y_norm[i] - y_norm[nbr])
        da = np.abs(scaled[i] - scaled[nbr])  # (k, p)
        n_dy += float(w @ dy)
        n_da += w @ da
        n_dyda += (w * dy) @ da
    m_total = float(m_samples)
    if n_dy <= 0 or m_total - n_dy <= 0:
        return np.zeros(p)
    weights = n_dyda / n_dy - (n_da - n_dyda) / (m_total - n_dy)
    return np.clip(weights, -1.0, 1.0)


# -- opt-in navigable-small-world graph ------------------------------------

def _graph_search_pts(points, graph, q, k, beam_width, entry):
    visited = {entry}
    d0 = float(((points[entry] - q) ** 2).sum())
    frontier = [(d0, entry)]
    best = [(d0, entry)]
    while frontier:
        frontier.sort()
        d, node = frontier.pop(0)
        if d > max(b[0] for b in best) and len(best) >= beam_width:
            break
        for nxt in graph[node]:
            nxt = int(nxt)
            if nxt in visited:
                continue
            visited.add(nxt)
            dn = float(((points[nxt] - q) ** 2).sum())
            if len(best) < beam_width or dn < max(b[0] for b in best):
                best.append((dn, nxt))
                frontier.append((dn, nxt))
                if len(best) > beam_width:
                    best.sort()
                    best = best[:beam_width]
    best.sort()
    top = best[:k]
    return (np.sqrt([b[0] for b in top]), np.array([b[1] for b in top], dtype=np.int64))


def _build_graph(index: NeighborIndex, degree: int, beam_width: int, seed: int) -> None:
    pts = index.points
    n = len(pts)
    graph: list[list[int]] = [[] for _ in range(n)]
    for i in range(1, n):
        m = min(degree, i)
        _, nbrs = _graph_search_pts(pts, graph, pts[i], m, max(beam_width, m), 0)
        for j in nbrs:
            j = int(j)
            graph[i].append(j)
            graph[j].append(i)
            if len(graph[j]) > 2 * degree:
                ds = ((pts[graph[j]] - pts[j]) ** 2).sum(axis=1)
                keep = np.argsort(ds, kind="stable")[: 2 * degree]
                graph[j] = [graph[j][t] for t in keep]
    index.neighbors_graph = [np.array(adj, dtype=np.int64) for adj in graph]


def _graph_search(index: NeighborIndex, q: np.ndarray, k: int):
    return _graph_search_pts(index.points, index.neighbors_graph, q, k,
                             max(48, 4 * k), 0)


def _check_recall(index: NeighborIndex, beam_width: int, seed: int,
                  n_probes: int = 50, k: int = 10) -> None:
    rng = np.random.default_rng([seed, 11])
    n = len(index)
    k = min(k, n)
    probes = rng.permutation(n)[:min(n_probes, n)]
    exact_d, exact_i = _exact_topk(index.points, index.points[probes], k)
    hits = 0
    for row, pi in enumerate(probes):
        _, approx_i = _graph_search(index, index.points[pi], k)
        hits += len(set(exact_i[row].tolist()) & set(approx_i.tolist()))
    recall = hits / (len(probes) * k)
    index.recall = recall
    if recall < RECALL_GATE:
        raise DataError(
            f"approximate index recall {recall:.3f} is below the {RECALL_GATE} gate; "
            "use the exact index or increase graph_degree/beam_width")
