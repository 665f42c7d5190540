"""Gradient-boosted regression trees with squared-error boosting.

Each stage fits a depth-limited CART tree to the current residuals and adds
it scaled by the learning rate. There is no row or column subsampling, so
fitting is fully deterministic and the training MSE is non-increasing per
stage. Split gains (sum-of-squared-error reductions) accumulate into
per-feature importances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .errors import ShapeError, ValidationError
from .validation import check_matrix, check_vector

_NO_CHILD = -1


@dataclass
class RegressionTree:
    """Flat-array binary tree; children always follow their parent.

    ``feature[k] == -1`` marks a leaf, whose prediction is ``value[k]``.
    Internal nodes route ``x[feature] <= threshold`` left, else right.
    """

    feature: np.ndarray    # int, -1 for leaves
    threshold: np.ndarray  # float, NaN for leaves
    left: np.ndarray       # int node index, -1 for leaves
    right: np.ndarray
    value: np.ndarray      # float leaf prediction, NaN for internal nodes
    gain: np.ndarray = field(default=None)  # SSE reduction per internal node

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict_one(self, x: np.ndarray) -> float:
        k = 0
        while self.feature[k] != _NO_CHILD:
            k = self.left[k] if x[self.feature[k]] <= self.threshold[k] else self.right[k]
        return float(self.value[k])

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0])
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, ids = stack.pop()
            if self.feature[node] == _NO_CHILD:
                out[ids] = self.value[node]
                continue
            mask = X[ids, self.feature[node]] <= self.threshold[node]
            stack.append((self.left[node], ids[mask]))
            stack.append((self.right[node], ids[~mask]))
        return out


class _TreeBuilder:
    def __init__(self, X: np.ndarray, residuals: np.ndarray, max_depth: int, min_samples_leaf: int):
        self.X = X
        self.r = residuals
        self.max_depth = max_depth
        self.min_leaf = min_samples_leaf
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.gain: list[float] = []

    def _new_node(self) -> int:
        self.feature.append(_NO_CHILD)
        self.threshold.append(math.nan)
        self.left.append(_NO_CHILD)
        self.right.append(_NO_CHILD)
        self.value.append(math.nan)
        self.gain.append(0.0)
        return len(self.feature) - 1

    def _best_split(self, idx: np.ndarray, sse_parent: float):
        """Least total SSE over all midpoint candidates.

        Ties go to the lowest feature index, then the lowest threshold; a
        candidate counts as better only when it wins by more than
        1e-12 * parent SSE, so the choice is stable against summation-order
        rounding and any faithful reimplementation agrees.
        """
        r = self.r[idx]
        n = idx.size
        tie_eps = 1e-12 * sse_parent
        best = None  # (total_sse, feature, threshold)
        for j in range(self.X.shape[1]):
            xj = self.X[idx, j]
            order = np.argsort(xj, kind="stable")
            xs = xj[order]
            rs = r[order]
            csum = np.cumsum(rs)
            csumsq = np.cumsum(rs * rs)
            total_sum, total_sumsq = csum[-1], csumsq[-1]
            for p in range(self.min_leaf, n - self.min_leaf + 1):
                if xs[p - 1] == xs[p]:
                    continue  # not a boundary between distinct values
                n_l = p
                n_r = n - p
                sse_l = csumsq[p - 1] - csum[p - 1] ** 2 / n_l
                sum_r = total_sum - csum[p - 1]
                sse_r = (total_sumsq - csumsq[p - 1]) - sum_r**2 / n_r
                total = sse_l + sse_r
                if best is None or total < best[0] - tie_eps:
                    thr = (xs[p - 1] + xs[p]) / 2.0
                    best = (total, j, thr)
        if best is None:
            return None
        total, j, thr = best
        mask = self.X[idx, j] <= thr
        return total, j, thr, mask

    def build(self, idx: np.ndarray, depth: int) -> int:
        node = self._new_node()
        r = self.r[idx]
        mean = float(r.mean())
        if (
            depth >= self.max_depth
            or idx.size < 2 * self.min_leaf
            or bool(np.all(r == r[0]))
        ):
            self.value[node] = mean
            return node
        sse_parent = float(np.sum((r - mean) ** 2))
        split = self._best_split(idx, sse_parent)
        if split is None:
            self.value[node] = mean
            return node
        total, j, thr, mask = split
        self.feature[node] = j
        self.threshold[node] = thr
        self.gain[node] = max(sse_parent - float(total), 0.0)
        self.left[node] = self.build(idx[mask], depth + 1)
        self.right[node] = self.build(idx[~mask], depth + 1)
        return node

    def finish(self) -> RegressionTree:
        return RegressionTree(
            feature=np.array(self.feature, dtype=int),
            threshold=np.array(self.threshold, dtype=float),
            left=np.array(self.left, dtype=int),
            right=np.array(self.right, dtype=int),
            value=np.array(self.value, dtype=float),
            gain=np.array(self.gain, dtype=float),
        )


def fit_tree(X, residuals, max_depth: int, min_samples_leaf: int = 1) -> RegressionTree:
    """Greedy least-squares regression tree over midpoint split candidates."""
    X = check_matrix(X, "X")
    if X.shape[0] == 0:
        raise ValidationError("cannot fit a tree on zero samples")
    residuals = check_vector(residuals, "residuals", length=X.shape[0])
    if max_depth < 0:
        raise ValidationError("max_depth must be >= 0")
    if min_samples_leaf < 1:
        raise ValidationError("min_samples_leaf must be >= 1")
    builder = _TreeBuilder(X, residuals, max_depth, min_samples_leaf)
    builder.build(np.arange(X.shape[0]), depth=0)
    return builder.finish()


class GradientBoostedTrees(RegressorMixin, BaseEstimator):
    """Deterministic squared-error gradient boosting over CART trees.

    Fitted attributes: ``base_prediction_``, ``trees_``,
    ``feature_importances_`` (normalized split gains; all zeros with
    ``no_splits_`` set when no tree ever split), and ``staged_train_mse_``
    with the training MSE after each stage.
    """

    def __init__(self, n_estimators=200, learning_rate=0.1, max_depth=3,
                 min_samples_leaf=2):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf

    def _check_config(self):
        if self.n_estimators < 0:
            raise ValidationError("n_estimators must be >= 0")
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValidationError(
                f"learning_rate must be in (0, 1], got {self.learning_rate}"
            )
        if self.max_depth < 0:
            raise ValidationError("max_depth must be >= 0")
        if self.min_samples_leaf < 1:
            raise ValidationError("min_samples_leaf must be >= 1")

    def fit(self, X, y):
        self._check_config()
        X = check_matrix(X, "X")
        y = check_vector(y, "y", length=X.shape[0])
        if X.shape[0] < 2:
            raise ValidationError(f"need at least 2 samples to boost, have {X.shape[0]}")
        self.n_features_in_ = X.shape[1]
        self.base_prediction_ = float(y.mean())
        lr = float(self.learning_rate)
        current = np.full(X.shape[0], self.base_prediction_)
        trees = []
        staged = []
        gains = np.zeros(X.shape[1])
        for _ in range(self.n_estimators):
            tree = fit_tree(X, y - current, self.max_depth, self.min_samples_leaf)
            current = current + lr * tree.predict(X)
            trees.append(tree)
            staged.append(float(np.mean((y - current) ** 2)))
            internal = tree.feature != _NO_CHILD
            np.add.at(gains, tree.feature[internal], tree.gain[internal])
        self.trees_ = trees
        self.staged_train_mse_ = staged
        total_gain = float(gains.sum())
        self.no_splits_ = total_gain == 0.0
        self.feature_importances_ = gains / total_gain if total_gain > 0 else gains
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "trees_"):
            raise ValidationError("model is not fitted")
        X = check_matrix(X, "X", n_features=self.n_features_in_)
        out = np.full(X.shape[0], self.base_prediction_)
        for tree in self.trees_:
            out += self.learning_rate * tree.predict(X)
        return out
