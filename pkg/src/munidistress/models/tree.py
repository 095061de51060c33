"""Axis-aligned binary trees stored as flat node arrays.

Split search works on pre-binned features. A feature with at most
``MAX_BINS`` distinct training values gets one bin per value, which makes
the search exact (thresholds are midpoints between neighbouring values);
wider features are cut at quantile edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_BINS = 255


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray  # -1 at leaves
    threshold: np.ndarray  # go left when x[feature] <= threshold
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    depth: np.ndarray

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] >= 0
        while active.any():
            r = rows[active]
            nd = node[r]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in
                ("feature", "threshold", "left", "right", "value", "n_samples", "depth")}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        ints = ("feature", "left", "right", "n_samples", "depth")
        return cls(**{k: np.asarray(v, dtype=np.int64 if k in ints else float)
                      for k, v in d.items()})


class BinnedMatrix:
    """Integer bin codes per feature plus the value edges that define them.

    Code c of feature f means edges[f][c-1] < x <= edges[f][c]; "left of
    cut k" is code <= k, i.e. x <= edges[f][k].
    """

    def __init__(self, X: np.ndarray, max_bins: int = MAX_BINS):
        n, d = X.shape
        self.edges: list[np.ndarray] = []
        self.exact: list[bool] = []
        codes = np.empty((n, d), dtype=np.int64)
        for f in range(d):
            uniq = np.unique(X[:, f])
            if len(uniq) <= max_bins:
                edges, exact = uniq, True
            else:
                qs = np.quantile(X[:, f], np.linspace(0, 1, max_bins + 1)[1:-1])
                edges, exact = np.unique(qs), False
            codes[:, f] = np.searchsorted(edges, X[:, f], side="left")
            self.edges.append(edges)
            self.exact.append(exact)
        self.codes = codes
        self.n_bins = np.array([len(e) + 1 for e in self.edges])
        self.offsets = np.concatenate([[0], np.cumsum(self.n_bins)[:-1]])
        self.flat_codes = codes + self.offsets
        self.total_bins = int(self.n_bins.sum())
        seg = np.repeat(np.arange(d), self.n_bins)
        self.seg = seg
        self.local = np.arange(self.total_bins) - self.offsets[seg]
        self.is_cut = self.local < (self.n_bins[seg] - 1)

    def full_histogram(self, idx, stats) -> np.ndarray:
        """(len(stats) + 1, total_bins) sums over all features; last row counts rows."""
        flat = self.flat_codes[idx].ravel()
        d = self.codes.shape[1]
        out = np.empty((len(stats) + 1, self.total_bins))
        for r, s in enumerate(stats):
            out[r] = np.bincount(flat, weights=np.repeat(s, d), minlength=self.total_bins)
        out[-1] = np.bincount(flat, minlength=self.total_bins)
        return out

    def cumulative(self, hist: np.ndarray) -> np.ndarray:
        """Within-feature running sums of a full histogram (left-of-cut totals)."""
        c = np.cumsum(hist, axis=1)
        before = np.concatenate([np.zeros((hist.shape[0], 1)), c], axis=1)[:, self.offsets]
        return c - before[:, self.seg]

    def threshold(self, f: int, k: int) -> float:
        e = self.edges[f]
        if self.exact[f] and k + 1 < len(e):
            mid = (e[k] + e[k + 1]) / 2.0
            return float(mid if mid < e[k + 1] else e[k])
        return float(e[k])


def _histograms(B: BinnedMatrix, idx, feats, stats):
    """Per-(feature, bin) sums of each row statistic, flattened over ``feats``.

    Returns (cumulative sums per stat, segment ids, is-cut mask, local cut index).
    """
    nb = B.n_bins[feats]
    local_off = np.concatenate([[0], np.cumsum(nb)[:-1]])
    total = int(nb.sum())
    flat = (B.codes[np.ix_(idx, feats)] + local_off).ravel()
    seg = np.repeat(np.arange(len(feats)), nb)
    start = local_off[seg]
    cums = []
    for s in stats:
        h = np.bincount(flat, weights=np.repeat(s, len(feats)), minlength=total)
        c = np.cumsum(h)
        before = np.concatenate([[0.0], c])[start]
        cums.append(c - before)
    pos_in_seg = np.arange(total) - start
    is_cut = pos_in_seg < (nb[seg] - 1)
    return cums, seg, is_cut, pos_in_seg


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.value, self.n_samples, self.depth = [], [], []

    def add(self, value, n, depth) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        self.n_samples.append(int(n))
        self.depth.append(int(depth))
        return len(self.feature) - 1

    def split(self, node, feature, threshold, left, right):
        self.feature[node] = int(feature)
        self.threshold[node] = float(threshold)
        self.left[node] = left
        self.right[node] = right

    def build(self) -> Tree:
        i64 = np.int64
        return Tree(np.array(self.feature, i64), np.array(self.threshold, float),
                    np.array(self.left, i64), np.array(self.right, i64),
                    np.array(self.value, float), np.array(self.n_samples, i64),
                    np.array(self.depth, i64))


def _grow(B: BinnedMatrix, n_rows_idx, leaf_value, find_split, max_depth, min_samples_split):
    b = _Builder()
    root = n_rows_idx
    stack = [(b.add(leaf_value(root), len(root), 0), root, 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or len(idx) < min_samples_split:
            continue
        best = find_split(idx)
        if best is None:
            continue
        f, k = best
        mask = B.codes[idx, f] <= k
        li, ri = idx[mask], idx[~mask]
        left = b.add(leaf_value(li), len(li), depth + 1)
        right = b.add(leaf_value(ri), len(ri), depth + 1)
        b.split(node, f, B.threshold(f, k), left, right)
        stack.append((right, ri, depth + 1))
        stack.append((left, li, depth + 1))
    return b.build()


def fit_gini_tree(B: BinnedMatrix, rows, y, sample_weight, max_depth, min_samples_split,
                  rng, max_features=None) -> Tree:
    """Weighted-Gini classification tree on ``rows`` of B (repeats allowed).

    ``y`` and ``sample_weight`` are indexed like the rows of B. Leaves hold the
    weighted fraction of class 1.
    """
    d = B.codes.shape[1]
    k_feat = d if max_features is None else max(1, min(d, max_features))
    w_pos = np.where(y == 1, sample_weight, 0.0)
    w_neg = np.where(y == 1, 0.0, sample_weight)

    def leaf_value(idx):
        W1, W0 = w_pos[idx].sum(), w_neg[idx].sum()
        return W1 / (W1 + W0) if W1 + W0 > 0 else 0.0

    def find_split(idx):
        W1, W0 = w_pos[idx].sum(), w_neg[idx].sum()
        if W1 == 0 or W0 == 0:
            return None  # pure node
        feats = rng.choice(d, size=k_feat, replace=False) if k_feat < d else np.arange(d)
        (c1, c0, cn), seg, is_cut, local = _histograms(
            B, idx, feats, (w_pos[idx], w_neg[idx], np.ones(len(idx))))
        n = len(idx)
        W = W1 + W0
        wl = c1 + c0
        wr = W - wl
        r1, r0 = W1 - c1, W0 - c0
        with np.errstate(divide="ignore", invalid="ignore"):
            gl = np.where(wl > 0, wl - (c1 * c1 + c0 * c0) / wl, 0.0)
            gr = np.where(wr > 0, wr - (r1 * r1 + r0 * r0) / wr, 0.0)
        parent = W - (W1 * W1 + W0 * W0) / W
        gain = parent - (gl + gr)
        ok = is_cut & (cn > 0) & (cn < n)
        if not ok.any():
            return None
        gain = np.where(ok, gain, -np.inf)
        j = int(np.argmax(gain))
        if gain[j] <= 1e-12 * W:
            return None
        return int(feats[seg[j]]), int(local[j])

    return _grow(B, np.asarray(rows), leaf_value, find_split, max_depth, min_samples_split)


def fit_newton_tree(B: BinnedMatrix, g, h, max_depth, reg_lambda=1.0,
                    min_samples_split=2) -> Tree:
    """Regression tree on first/second-order loss statistics.

    Split gain = 0.5 * [GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)], leaf = -G/(H+l).
    Child histograms come from the smaller child plus parent subtraction.
    """
    n = B.codes.shape[0]
    b = _Builder()

    def leaf_value(idx):
        return -g[idx].sum() / (h[idx].sum() + reg_lambda)

    def find_split(idx, hist):
        G, H = g[idx].sum(), h[idx].sum()
        GL, HL, cn = B.cumulative(hist)
        GR, HR = G - GL, H - HL
        gain = 0.5 * (GL * GL / (HL + reg_lambda) + GR * GR / (HR + reg_lambda)
                      - G * G / (H + reg_lambda))
        ok = B.is_cut & (cn > 0.5) & (cn < len(idx) - 0.5)
        if not ok.any():
            return None
        gain = np.where(ok, gain, -np.inf)
        j = int(np.argmax(gain))
        if not gain[j] > 1e-12:
            return None
        return int(B.seg[j]), int(B.local[j])

    root = np.arange(n)
    stack = [(b.add(leaf_value(root), n, 0), root, 0, B.full_histogram(root, (g, h)))]
    while stack:
        node, idx, depth, hist = stack.pop()
        if depth >= max_depth or len(idx) < min_samples_split:
            continue
        best = find_split(idx, hist)
        if best is None:
            continue
        f, k = best
        mask = B.codes[idx, f] <= k
        li, ri = idx[mask], idx[~mask]
        small = li if len(li) <= len(ri) else ri
        h_small = B.full_histogram(small, (g[small], h[small]))
        h_big = hist - h_small
        hl, hr = (h_small, h_big) if small is li else (h_big, h_small)
        left = b.add(leaf_value(li), len(li), depth + 1)
        right = b.add(leaf_value(ri), len(ri), depth + 1)
        b.split(node, f, B.threshold(f, k), left, right)
        stack.append((right, ri, depth + 1, hr))
        stack.append((left, li, depth + 1, hl))
    return b.build()
