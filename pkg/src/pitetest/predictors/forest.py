"""Regression random forest with random split points.

Trees are grown in compiled code. Each tree gets its own 32-bit seed drawn up
front from the caller's generator and reseeds numba's per-thread generator
before growing, so a forest depends only on (data, params, generator state),
never on thread scheduling.

Trees are stored as flat node arrays: ``feature[i] < 0`` marks a leaf whose
prediction is ``value[i]``; otherwise rows with ``x[feature] <= threshold``
go to ``left[i]`` and the rest to ``right[i]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from ..errors import ConfigError, DimensionMismatch


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 500
    max_depth: int = 10
    n_split_points: int = 10
    min_leaf_size: int = 5
    mtry: int | str | None = None  # None -> ceil(p / 3); "all" -> p
    bootstrap: bool = True

    def __post_init__(self):
        for name in ("n_trees", "max_depth", "n_split_points", "min_leaf_size"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        m = self.mtry
        if m is not None and m != "all":
            if isinstance(m, bool) or not isinstance(m, (int, np.integer)) or m < 1:
                raise ConfigError(f"mtry must be a positive integer, 'all' or None, got {m!r}")

    def resolve_mtry(self, p):
        if self.mtry is None:
            return max(1, math.ceil(p / 3))
        if self.mtry == "all":
            return p
        return min(int(self.mtry), p)


@nb.njit(cache=True, nogil=True, fastmath=True)
def _left_stats(vals, ys, m, t):
    nl = 0
    sl = 0.0
    for i in range(m):
        c = vals[i] <= t
        nl += c
        sl += ys[i] * c
    return nl, sl


@nb.njit(cache=True, nogil=True)
def _grow_tree(x, y, seed, bootstrap, max_depth, n_split, min_leaf, mtry,
               feature, threshold, left, right, value):
    np.random.seed(seed)
    n, p = x.shape
    if bootstrap:
        idx = np.empty(n, np.int64)
        for i in range(n):
            idx[i] = np.random.randint(0, n)
    else:
        idx = np.arange(n)

    cap = feature.shape[0]
    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    vals = np.empty(n)
    ys = np.empty(n)
    feats = np.arange(p)
    n_nodes = 1
    st_node[0] = 0
    st_lo[0] = 0
    st_hi[0] = n
    st_depth[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = st_node[top]
        lo = st_lo[top]
        hi = st_hi[top]
        depth = st_depth[top]
        m = hi - lo
        s = 0.0
        for i in range(m):
            v = y[idx[lo + i]]
            ys[i] = v
            s += v
        value[node] = s / m
        feature[node] = -1
        if depth >= max_depth or m < 2 * min_leaf:
            continue
        # SSE(children) = sum(y^2) - sl^2/nl - sr^2/nr, so maximize the last two terms
        parent_gain = s * s / m
        best_gain = parent_gain
        best_f = -1
        best_t = 0.0
        # partial Fisher-Yates: the first mtry entries of feats are the sample
        for k in range(mtry):
            j = k + np.random.randint(0, p - k)
            tmp = feats[k]
            feats[k] = feats[j]
            feats[j] = tmp
        for k in range(mtry):
            f = feats[k]
            for i in range(m):
                vals[i] = x[idx[lo + i], f]
            fmin = vals[0]
            fmax = vals[0]
            for i in range(1, m):
                v = vals[i]
                if v < fmin:
                    fmin = v
                elif v > fmax:
                    fmax = v
            for _ in range(n_split):
                t = fmin + (fmax - fmin) * np.random.random()
                if fmax <= fmin:
                    continue
                nl, sl = _left_stats(vals, ys, m, t)
                nr = m - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                sr = s - sl
                gain = sl * sl / nl + sr * sr / nr
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_t = t
        if best_f < 0 or not (best_gain > parent_gain + 1e-12 * (abs(parent_gain) + 1.0)):
            continue
        # partition idx[lo:hi] so rows going left come first
        i = lo
        j = hi - 1
        while i <= j:
            if x[idx[i], best_f] <= best_t:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        mid = i
        feature[node] = best_f
        threshold[node] = best_t
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        # push right first so the left subtree is expanded first
        st_node[top] = rnode
        st_lo[top] = mid
        st_hi[top] = hi
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lnode
        st_lo[top] = lo
        st_hi[top] = mid
        st_depth[top] = depth + 1
        top += 1
    return n_nodes


@nb.njit(cache=True, nogil=True)
def _grow_forest(x, y, seeds, bootstrap, max_depth, n_split, min_leaf, mtry, cap):
    n_trees = seeds.shape[0]
    feature = np.full((n_trees, cap), -1, np.int32)
    threshold = np.zeros((n_trees, cap), np.float64)
    left = np.zeros((n_trees, cap), np.int32)
    right = np.zeros((n_trees, cap), np.int32)
    value = np.zeros((n_trees, cap), np.float64)
    sizes = np.empty(n_trees, np.int64)
    for t in range(n_trees):
        sizes[t] = _grow_tree(x, y, seeds[t], bootstrap, max_depth, n_split, min_leaf, mtry,
                              feature[t], threshold[t], left[t], right[t], value[t])
    return feature, threshold, left, right, value, sizes


@nb.njit(cache=True, nogil=True)
def _predict(x, feature, threshold, left, right, value):
    n = x.shape[0]
    n_trees = feature.shape[0]
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for t in range(n_trees):
            node = 0
            while feature[t, node] >= 0:
                if x[i, feature[t, node]] <= threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
            acc += value[t, node]
        out[i] = acc / n_trees
    return out


def _node_capacity(n, params):
    # a binary tree with leaves of >= min_leaf rows has at most n // min_leaf leaves
    by_depth = 2 ** (params.max_depth + 1) - 1
    by_size = 2 * max(1, n // params.min_leaf_size) - 1
    return int(min(by_depth, by_size))


@dataclass(frozen=True)
class ForestModel:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_nodes: np.ndarray
    n_features: int
    kind = "forest"

    @property
    def n_trees(self):
        return self.feature.shape[0]

    def tree(self, t):
        """Node arrays of tree ``t`` trimmed to its used size."""
        k = int(self.n_nodes[t])
        return {
            "feature": self.feature[t, :k],
            "threshold": self.threshold[t, :k],
            "left": self.left[t, :k],
            "right": self.right[t, :k],
            "value": self.value[t, :k],
        }

    def depth(self, t):
        tr = self.tree(t)
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if tr["feature"][node] >= 0:
                stack.append((int(tr["left"][node]), d + 1))
                stack.append((int(tr["right"][node]), d + 1))
        return best

    def predict(self, x):
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise DimensionMismatch(self.n_features, x.shape[-1] if x.ndim else 0)
        return _predict(x, self.feature, self.threshold, self.left, self.right, self.value)


def fit_trees(x, y, params: ForestParams, rng: np.random.Generator) -> ForestModel:
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, p = x.shape
    seeds = rng.integers(0, 2**32, size=params.n_trees, dtype=np.uint64).astype(np.int64)
    cap = _node_capacity(n, params)
    arrays = _grow_forest(x, y, seeds, bool(params.bootstrap), int(params.max_depth),
                          int(params.n_split_points), int(params.min_leaf_size),
                          int(params.resolve_mtry(p)), cap)
    for a in arrays:
        a.setflags(write=False)
    return ForestModel(*arrays, n_features=p)


def forest_from_trees(trees, n_features):
    """Assemble a ForestModel from hand-built node dicts (see ``ForestModel.tree``)."""
    cap = max(len(t["value"]) for t in trees)
    k = len(trees)
    feature = np.full((k, cap), -1, np.int32)
    threshold = np.zeros((k, cap))
    left = np.zeros((k, cap), np.int32)
    right = np.zeros((k, cap), np.int32)
    value = np.zeros((k, cap))
    sizes = np.empty(k, np.int64)
    for i, t in enumerate(trees):
        m = len(t["value"])
        sizes[i] = m
        feature[i, :m] = t["feature"]
        threshold[i, :m] = t.get("threshold", np.zeros(m))
        left[i, :m] = t.get("left", np.zeros(m))
        right[i, :m] = t.get("right", np.zeros(m))
        value[i, :m] = t["value"]
    return ForestModel(feature, threshold, left, right, value, sizes, n_features)
