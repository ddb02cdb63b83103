"""Gradient-boosted regression trees with squared-error loss.

Features are pre-binned (at most ``max_bins`` thresholds per feature) and
trees grow level by level; the split histograms of every node on a level
come out of one ``np.bincount`` call. A split sends ``x <= threshold`` left.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Tree:
    feature: np.ndarray    # int, -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float),
        )


def _bin_edges(col: np.ndarray, max_bins: int) -> np.ndarray:
    u = np.unique(col)
    if u.size <= 1:
        return np.zeros(0)
    if u.size <= max_bins:
        return (u[:-1] + u[1:]) / 2
    qs = np.quantile(col, np.linspace(0, 1, max_bins + 1)[1:-1], method="lower")
    return np.unique(qs)


class TreeEnsembleRegressor:
    """Boosted trees; ``fit``/``predict`` like any scikit-learn regressor."""

    def __init__(self, n_trees: int = 200, learning_rate: float = 0.1, max_depth: int = 6,
                 min_samples_leaf: int = 20, max_bins: int = 255, subsample: float = 1.0,
                 seed: int = 0):
        self.n_trees = n_trees
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_bins = max_bins
        self.subsample = subsample
        self.seed = seed
        self.init_ = 0.0
        self.trees_: list[Tree] = []
        self.constant_target_ = False
        self.n_features_ = 0

    # -- training ----------------------------------------------------------

    def fit(self, X, y) -> "TreeEnsembleRegressor":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.size or y.size == 0:
            raise ValueError("need a nonempty 2-D X with one target per row")
        n, F = X.shape
        self.n_features_ = F
        self.init_ = float(np.mean(y))
        self.trees_ = []
        self.constant_target_ = bool(np.all(y == y[0]))
        if self.constant_target_:
            self.init_ = float(y[0])
            return self
        edges = [_bin_edges(X[:, f], self.max_bins) for f in range(F)]
        nb = max(1, max(e.size for e in edges) + 1)
        Xb = np.empty((n, F), dtype=np.int64)
        for f in range(F):
            Xb[:, f] = np.searchsorted(edges[f], X[:, f], side="left")
        rng = np.random.default_rng(self.seed)
        pred = np.full(n, self.init_)
        for _ in range(self.n_trees):
            resid = y - pred
            if self.subsample < 1.0:
                rows = np.sort(rng.choice(n, max(1, int(self.subsample * n)), replace=False))
            else:
                rows = np.arange(n)
            tree = self._grow(Xb[rows], resid[rows], edges, nb)
            self.trees_.append(tree)
            pred += self.learning_rate * _predict_tree_binned(tree, Xb, edges)
        return self

    def _grow(self, Xb, g, edges, nb) -> Tree:
        n, F = Xb.shape
        if nb < 2:
            return Tree(np.array([-1]), np.zeros(1), np.array([-1]), np.array([-1]), np.array([float(g.mean())]))
        feature, threshold, left, right, value = [-1], [0.0], [-1], [-1], [float(g.mean())]
        node_of = np.zeros(n, dtype=np.int64)   # slot among the current level's nodes
        level_ids = [0]
        msl = self.min_samples_leaf
        keyed = Xb + np.arange(F, dtype=np.int64) * nb
        for _depth in range(self.max_depth):
            k = len(level_ids)
            active = node_of >= 0
            if active.all():
                rows = np.arange(n)
                keys = (keyed + node_of[:, None] * (F * nb)).ravel()
                w = np.repeat(g, F)
            else:
                rows = np.nonzero(active)[0]
                if rows.size == 0:
                    break
                keys = (keyed[rows] + node_of[rows, None] * (F * nb)).ravel()
                w = np.repeat(g[rows], F)
            size = k * F * nb
            gsum = np.bincount(keys, weights=w, minlength=size).reshape(k, F, nb)
            cnt = np.bincount(keys, minlength=size).reshape(k, F, nb)
            gl = np.cumsum(gsum, axis=2)[:, :, :-1]
            cl = np.cumsum(cnt, axis=2)[:, :, :-1]
            gt = gsum[:, 0, :].sum(axis=1)[:, None, None]
            ct = cnt[:, 0, :].sum(axis=1)[:, None, None]
            gr, cr = gt - gl, ct - cl
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = gl**2 / cl + gr**2 / cr - gt**2 / ct
            ok = (cl >= msl) & (cr >= msl)
            for f in range(F):
                ok[:, f, edges[f].size:] = False
            gain = np.where(ok, gain, -np.inf)
            flat = gain.reshape(k, -1)
            best = np.argmax(flat, axis=1)
            best_gain = flat[np.arange(k), best]
            new_level = []
            remap = np.full(k, -1, dtype=np.int64)
            go_left_bin = np.zeros(k, dtype=np.int64)
            split_feat = np.zeros(k, dtype=np.int64)
            for j, nid in enumerate(level_ids):
                if not best_gain[j] > 1e-12:
                    continue
                f, b = divmod(int(best[j]), nb - 1)
                feature[nid] = f
                threshold[nid] = float(edges[f][b])
                c_left = float(cl[j, f, b])
                lv = float(gl[j, f, b]) / c_left
                rv = float(gr[j, f, b]) / float(cr[j, f, b])
                for side, v in ((left, lv), (right, rv)):
                    side[nid] = len(feature)
                    feature.append(-1)
                    threshold.append(0.0)
                    left.append(-1)
                    right.append(-1)
                    value.append(v)
                remap[j] = len(new_level)
                new_level += [left[nid], right[nid]]
                go_left_bin[j] = b
                split_feat[j] = f
            if not new_level:
                break
            slot = node_of[rows]
            keep = remap[slot] >= 0
            rows_k, slot_k = rows[keep], slot[keep]
            goes_left = Xb[rows_k, split_feat[slot_k]] <= go_left_bin[slot_k]
            node_of[:] = -1
            node_of[rows_k] = remap[slot_k] + np.where(goes_left, 0, 1)
            level_ids = new_level
        return Tree(
            np.asarray(feature, dtype=np.int64),
            np.asarray(threshold, dtype=float),
            np.asarray(left, dtype=np.int64),
            np.asarray(right, dtype=np.int64),
            np.asarray(value, dtype=float),
        )

    # -- prediction --------------------------------------------------------

    def _packed(self):
        cached = getattr(self, "_pack", None)
        if cached is not None and cached[0] == len(self.trees_):
            return cached[1]
        offsets, feats, thr, lefts, rights, vals = [], [], [], [], [], []
        base = 0
        for t in self.trees_:
            offsets.append(base)
            feats.append(t.feature)
            thr.append(t.threshold)
            lefts.append(np.where(t.left >= 0, t.left + base, -1))
            rights.append(np.where(t.right >= 0, t.right + base, -1))
            vals.append(t.value)
            base += t.feature.size
        pack = (
            np.asarray(offsets, dtype=np.int64),
            np.concatenate(feats) if feats else np.zeros(0, np.int64),
            np.concatenate(thr) if thr else np.zeros(0),
            np.concatenate(lefts) if lefts else np.zeros(0, np.int64),
            np.concatenate(rights) if rights else np.zeros(0, np.int64),
            np.concatenate(vals) if vals else np.zeros(0),
        )
        self._pack = (len(self.trees_), pack)
        return pack

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(X.shape[0], self.init_)
        if not self.trees_:
            return out
        offsets, feat, thr, lft, rgt, val = self._packed()
        leaf = feat < 0
        safe_feat = np.where(leaf, 0, feat)
        for start in range(0, X.shape[0], 2048):
            Xc = X[start:start + 2048]
            r = np.arange(Xc.shape[0])[:, None]
            node = np.broadcast_to(offsets, (Xc.shape[0], offsets.size)).copy()
            for _ in range(self.max_depth):
                go_left = Xc[r, safe_feat[node]] <= thr[node]
                nxt = np.where(go_left, lft[node], rgt[node])
                node = np.where(leaf[node], node, nxt)
            out[start:start + 2048] += self.learning_rate * val[node].sum(axis=1)
        return out

    def predict_one(self, x) -> float:
        """Single-row prediction; cost depends only on the ensemble size."""
        return float(self.predict(np.asarray(x, dtype=float)[None, :])[0])

    # -- serialization -----------------------------------------------------

    def get_params(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "max_bins": self.max_bins,
            "subsample": self.subsample,
            "seed": self.seed,
        }

    def to_dict(self) -> dict:
        return {
            "kind": "tree_ensemble",
            "params": self.get_params(),
            "init": self.init_,
            "constant_target": self.constant_target_,
            "n_features": self.n_features_,
            "trees": [t.to_dict() for t in self.trees_],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsembleRegressor":
        m = cls(**d["params"])
        m.init_ = float(d["init"])
        m.constant_target_ = bool(d["constant_target"])
        m.n_features_ = int(d["n_features"])
        m.trees_ = [Tree.from_dict(t) for t in d["trees"]]
        return m


def _predict_tree_binned(tree: Tree, Xb: np.ndarray, edges) -> np.ndarray:
    """Training-time prediction on binned data (same routing as raw thresholds)."""
    n = Xb.shape[0]
    node = np.zeros(n, dtype=np.int64)
    bin_thr = np.zeros(tree.feature.size, dtype=np.int64)
    for i, f in enumerate(tree.feature):
        if f >= 0:
            bin_thr[i] = int(np.searchsorted(edges[f], tree.threshold[i], side="left"))
    leaf = tree.feature < 0
    feat = np.where(leaf, 0, tree.feature)
    rows = np.arange(n)
    for _ in range(64):
        if leaf[node].all():
            break
        go_left = Xb[rows, feat[node]] <= bin_thr[node]
        nxt = np.where(go_left, tree.left[node], tree.right[node])
        node = np.where(leaf[node], node, nxt)
    return tree.value[node]
