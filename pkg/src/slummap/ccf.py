"""Canonical correlation forests for binary pixel classification.

Each tree splits on oblique hyperplanes: at every node a random feature
subset is drawn, canonical correlation analysis is run on a bootstrap
resample of the node's rows (the projection bootstrap), all node rows are
projected onto the leading canonical direction, and the threshold with the
best information gain over that projection is taken. Trees train on the full
training set; randomness enters only through the per-node feature subsets
and bootstraps, drawn from per-tree PCG32 streams keyed by
``(master_seed, FOREST_STREAM, tree_index)``. RNG is consumed in depth-first
node order (left subtree first), subset before bootstrap, which makes
training a pure function of (data, seed).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import FOREST_STREAM, Pcg32, stream

MODEL_FORMAT = "ccf-model"
MODEL_VERSION = 1

DEFAULT_TREES = 10
DEFAULT_MIN_NODE_SIZE = 2
RIDGE = 1e-9


class DegenerateDataError(ValueError):
    """Data cannot support the requested fit (single class, identical rows)."""


class ModelFormatError(ValueError):
    """Persisted model file is malformed or has an unsupported version."""


@dataclass
class CcaResult:
    projections: np.ndarray  # (d, m), columns are canonical directions
    correlations: np.ndarray  # (m,), non-increasing, in [0, 1]


@dataclass
class CcTreeNode:
    """One node of a tree stored in preorder; children are node-list indices."""

    # internal nodes
    feature_subset: np.ndarray | None = None
    projection: np.ndarray | None = None
    threshold: float | None = None
    left: int = -1
    right: int = -1
    # leaves
    class_counts: tuple[int, int] | None = None
    distribution: tuple[float, float] | None = None

    @property
    def is_leaf(self) -> bool:
        return self.class_counts is not None


@dataclass
class CcTree:
    nodes: list[CcTreeNode]


@dataclass
class CcfModel:
    trees: list[CcTree]
    n_features: int
    feature_names: list[str]
    training_params: dict

    def __post_init__(self):
        if not self.trees:
            raise ValueError("a model needs at least one tree")


@dataclass
class ForestParams:
    n_trees: int = DEFAULT_TREES
    min_node_size: int = DEFAULT_MIN_NODE_SIZE
    n_candidate_features: int | None = None  # None = ceil(sqrt(d))
    master_seed: int = 0

    def resolve_lambda(self, d: int) -> int:
        if self.n_candidate_features:
            lam = self.n_candidate_features
        else:
            lam = math.isqrt(d)  # exact ceil(sqrt(d))
            if lam * lam < d:
                lam += 1
        return max(1, min(lam, d))


# ---------------------------------------------------------------------------
# CCA
# ---------------------------------------------------------------------------


def _one_hot(y: np.ndarray, k: int = 2) -> np.ndarray:
    out = np.zeros((y.shape[0], k), dtype=np.float64)
    out[np.arange(y.shape[0]), y] = 1.0
    return out


def _inv_sqrt(s: np.ndarray, floor: float) -> np.ndarray:
    w, v = np.linalg.eigh(s)
    # The ridge guarantees eigenvalues >= floor mathematically; clamp what
    # rounding pushed below it.
    w = np.maximum(w, floor)
    return (v / np.sqrt(w)) @ v.T


def cca_fit(x: np.ndarray, y: np.ndarray, ridge: float = RIDGE) -> CcaResult:
    """Leading canonical directions between features x and one-hot classes y.

    Covariance-block formulation: both auto-covariance blocks get ``ridge``
    added to their diagonals, the cross-covariance is whitened on both sides
    and decomposed by SVD. Returns m = min(d, k-1) directions for the feature
    block with their canonical correlations. The sign of each direction is
    canonicalized so its first nonzero coefficient is positive.

    Raises DegenerateDataError when all rows of x are identical or only one
    class is present in y.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("x must be (n, d) and y (n, k) with matching n")
    n, d = x.shape
    k = y.shape[1]
    if n < 2:
        raise DegenerateDataError("need at least two rows")
    if (x == x[0]).all():
        raise DegenerateDataError("all rows of x are identical")
    present = (y.sum(axis=0) > 0).sum()
    if present < 2:
        raise DegenerateDataError("only one class present in y")

    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    sxx = xc.T @ xc / (n - 1) + ridge * np.eye(d)
    syy = yc.T @ yc / (n - 1) + ridge * np.eye(k)
    sxy = xc.T @ yc / (n - 1)

    isx = _inv_sqrt(sxx, ridge)
    isy = _inv_sqrt(syy, ridge)
    u, s, _ = np.linalg.svd(isx @ sxy @ isy)
    m = min(d, k - 1)
    projections = isx @ u[:, :m]
    for col in range(m):
        column = projections[:, col]
        nonzero = np.nonzero(column)[0]
        if nonzero.size and column[nonzero[0]] < 0:
            projections[:, col] = -column
    return CcaResult(projections=projections, correlations=s[:m].copy())


# ---------------------------------------------------------------------------
# tree induction
# ---------------------------------------------------------------------------


def _entropy_terms(counts: np.ndarray) -> np.ndarray:
    c = counts.astype(np.float64)
    return np.where(c > 0, c * np.log(np.maximum(c, 1.0)), 0.0)


def _weighted_child_entropy(n0l, n1l, n0r, n1r, n: int) -> np.ndarray:
    """Sum over children of (n_child/n) * H(child), in nats, vectorized."""
    nl = n0l + n1l
    nr = n0r + n1r
    hl = np.where(nl > 0, np.log(np.maximum(nl, 1.0)), 0.0) * nl
    hl -= _entropy_terms(n0l) + _entropy_terms(n1l)
    hr = np.where(nr > 0, np.log(np.maximum(nr, 1.0)), 0.0) * nr
    hr -= _entropy_terms(n0r) + _entropy_terms(n1r)
    return (hl + hr) / n


def _node_entropy(n0: int, n1: int) -> float:
    n = n0 + n1
    h = n * math.log(n)
    for c in (n0, n1):
        if c > 0:
            h -= c * math.log(c)
    return h / n


def _best_split(z: np.ndarray, labels: np.ndarray) -> tuple[float, float] | None:
    """Best (threshold, gain) over midpoints of consecutive distinct values.

    Gain is Shannon entropy reduction in nats; ties resolve to the lowest
    threshold. The returned threshold t satisfies: (z <= t) reproduces the
    scored partition exactly. Returns None when no split has positive gain.
    """
    n = z.shape[0]
    order = np.argsort(z, kind="stable")
    zs = z[order]
    ys = labels[order].astype(np.int64)
    boundaries = np.nonzero(zs[1:] > zs[:-1])[0]
    if boundaries.size == 0:
        return None
    n1 = int(ys.sum())
    n0 = n - n1
    prefix1 = np.cumsum(ys)
    n1l = prefix1[boundaries].astype(np.float64)
    nl = (boundaries + 1).astype(np.float64)
    n0l = nl - n1l
    n1r = n1 - n1l
    n0r = (n - nl) - n1r
    gains = _node_entropy(n0, n1) - _weighted_child_entropy(n0l, n1l, n0r, n1r, n)
    best = int(np.argmax(gains))
    if gains[best] <= 0.0:
        return None
    i = int(boundaries[best])
    thr = (zs[i] + zs[i + 1]) / 2.0
    if thr >= zs[i + 1]:  # midpoint rounded up to the right value
        thr = float(zs[i])
    return float(thr), float(gains[best])


def _leaf(y_node: np.ndarray) -> CcTreeNode:
    n1 = int(y_node.sum())
    n0 = y_node.shape[0] - n1
    n = n0 + n1
    return CcTreeNode(class_counts=(n0, n1), distribution=(n0 / n, n1 / n))


def grow_tree(
    x: np.ndarray,
    y: np.ndarray,
    params: ForestParams | None = None,
    rng: Pcg32 | None = None,
) -> CcTree:
    """Induce one canonical correlation tree on (x, y).

    Stops at pure nodes, nodes below the minimum size, and nodes whose rows
    are identical across all features; every other degeneracy (single-class
    bootstrap, constant sampled subset, no positive-gain threshold) also
    resolves to a leaf. Splitting projects all node rows on the leading
    canonical direction of a bootstrap resample; rows with projection <=
    threshold go left.
    """
    if params is None:
        params = ForestParams()
    if rng is None:
        rng = stream(params.master_seed, FOREST_STREAM, 0)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y).astype(np.uint8).ravel()
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("x must be (n, d) with one label per row")
    if x.shape[0] < 1:
        raise ValueError("need at least one row")
    d = x.shape[1]
    lam = params.resolve_lambda(d)

    nodes: list[CcTreeNode] = []
    # (row indices, parent node index, attach as left child?)
    stack: list[tuple[np.ndarray, int, bool]] = [(np.arange(x.shape[0]), -1, False)]
    while stack:
        idx, parent, is_left = stack.pop()
        my_index = len(nodes)
        if parent >= 0:
            if is_left:
                nodes[parent].left = my_index
            else:
                nodes[parent].right = my_index
        x_node = x[idx]
        y_node = y[idx]
        n = idx.shape[0]
        pure = y_node.min() == y_node.max()
        if pure or n < params.min_node_size or (x_node == x_node[0]).all():
            nodes.append(_leaf(y_node))
            continue

        subset = np.array(sorted(rng.sample_without_replacement(d, lam)), dtype=np.int64)
        boot = np.array(rng.bootstrap_indices(n), dtype=np.int64)
        try:
            cca = cca_fit(x_node[boot][:, subset], _one_hot(y_node[boot]))
        except DegenerateDataError:
            try:
                cca = cca_fit(x_node[:, subset], _one_hot(y_node))
            except DegenerateDataError:
                nodes.append(_leaf(y_node))
                continue
        w = cca.projections[:, 0]
        z = x_node[:, subset] @ w
        split = _best_split(z, y_node)
        if split is None:
            nodes.append(_leaf(y_node))
            continue
        threshold, _gain = split
        mask = z <= threshold
        nodes.append(
            CcTreeNode(
                feature_subset=subset,
                projection=w.copy(),
                threshold=threshold,
            )
        )
        stack.append((idx[~mask], my_index, False))  # right, processed second
        stack.append((idx[mask], my_index, True))  # left, processed first
    return CcTree(nodes=nodes)


def tree_depth(tree: CcTree) -> int:
    depth = np.zeros(len(tree.nodes), dtype=np.int64)
    for i, node in enumerate(tree.nodes):
        if not node.is_leaf:
            depth[node.left] = depth[i] + 1
            depth[node.right] = depth[i] + 1
    return int(depth.max())


def apply_tree(tree: CcTree, x: np.ndarray) -> np.ndarray:
    """Leaf node index reached by every row of x."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape[0], dtype=np.int64)
    stack = [(0, np.arange(x.shape[0]))]
    while stack:
        node_idx, rows = stack.pop()
        if rows.size == 0:
            continue
        node = tree.nodes[node_idx]
        if node.is_leaf:
            out[rows] = node_idx
            continue
        z = x[rows][:, node.feature_subset] @ node.projection
        mask = z <= node.threshold
        stack.append((node.left, rows[mask]))
        stack.append((node.right, rows[~mask]))
    return out


def _tree_probabilities(tree: CcTree, x: np.ndarray) -> np.ndarray:
    leaves = apply_tree(tree, x)
    dist = np.array(
        [node.distribution if node.is_leaf else (0.0, 0.0) for node in tree.nodes],
        dtype=np.float64,
    )
    return dist[leaves]


# ---------------------------------------------------------------------------
# forest
# ---------------------------------------------------------------------------


def train_forest(
    x: np.ndarray,
    y: np.ndarray,
    n_trees: int = DEFAULT_TREES,
    master_seed: int = 0,
    min_node_size: int = DEFAULT_MIN_NODE_SIZE,
    n_candidate_features: int | None = None,
    feature_names: list[str] | None = None,
) -> CcfModel:
    """Train n_trees canonical correlation trees, each on the full data.

    There is no forest-level bagging; diversity comes from per-node feature
    subsampling and projection bootstraps. Tree t draws from the stream keyed
    by (master_seed, FOREST_STREAM, t), so identical inputs and seed give a
    bit-identical model.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y).astype(np.uint8).ravel()
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("x must be (n, d) with one label per row")
    if x.shape[0] < 2:
        raise DegenerateDataError("need at least two training rows")
    if y.min() == y.max():
        raise DegenerateDataError("training set holds a single class")
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    d = x.shape[1]
    params = ForestParams(
        n_trees=n_trees,
        min_node_size=min_node_size,
        n_candidate_features=n_candidate_features,
        master_seed=master_seed,
    )
    lam = params.resolve_lambda(d)
    trees = [
        grow_tree(x, y, params, stream(master_seed, FOREST_STREAM, t))
        for t in range(n_trees)
    ]
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(d)]
    if len(feature_names) != d:
        raise ValueError("feature_names length must match feature count")
    return CcfModel(
        trees=trees,
        n_features=d,
        feature_names=list(feature_names),
        training_params={
            "n_trees": n_trees,
            "n_candidate_features": lam,
            "min_node_size": min_node_size,
            "master_seed": master_seed,
        },
    )


def predict(model: CcfModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Route rows down every tree and average the leaf distributions.

    Returns (labels, probabilities); exact posterior ties go to class 0
    (non-slum).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        got = x.shape[1] if x.ndim == 2 else None
        raise ValueError(
            f"feature dimension mismatch: model expects {model.n_features}, got {got}"
        )
    probs = np.zeros((x.shape[0], 2), dtype=np.float64)
    for tree in model.trees:
        probs += _tree_probabilities(tree, x)
    probs /= len(model.trees)
    labels = (probs[:, 1] > probs[:, 0]).astype(np.uint8)
    return labels, probs


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def _node_to_dict(node: CcTreeNode) -> dict:
    if node.is_leaf:
        return {
            "class_counts": [int(c) for c in node.class_counts],
            "distribution": [float(p) for p in node.distribution],
        }
    return {
        "feature_subset": [int(i) for i in node.feature_subset],
        "projection": [float(v) for v in node.projection],
        "threshold": float(node.threshold),
        "left": int(node.left),
        "right": int(node.right),
    }


def _node_from_dict(doc: dict) -> CcTreeNode:
    if "class_counts" in doc:
        counts = doc["class_counts"]
        dist = doc["distribution"]
        if len(counts) != 2 or len(dist) != 2:
            raise ModelFormatError("leaf must carry two class counts and probabilities")
        return CcTreeNode(
            class_counts=(int(counts[0]), int(counts[1])),
            distribution=(float(dist[0]), float(dist[1])),
        )
    subset = np.array(doc["feature_subset"], dtype=np.int64)
    projection = np.array(doc["projection"], dtype=np.float64)
    if subset.shape != projection.shape:
        raise ModelFormatError("projection length must match its feature subset")
    return CcTreeNode(
        feature_subset=subset,
        projection=projection,
        threshold=float(doc["threshold"]),
        left=int(doc["left"]),
        right=int(doc["right"]),
    )


def model_to_dict(model: CcfModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n_features": model.n_features,
        "feature_names": list(model.feature_names),
        "training_params": model.training_params,
        "trees": [{"nodes": [_node_to_dict(n) for n in tree.nodes]} for tree in model.trees],
    }


def model_from_dict(doc: dict) -> CcfModel:
    try:
        if doc.get("format") != MODEL_FORMAT:
            raise ModelFormatError(f"not a {MODEL_FORMAT} document")
        if doc.get("version") != MODEL_VERSION:
            raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
        trees = [
            CcTree(nodes=[_node_from_dict(n) for n in tree["nodes"]])
            for tree in doc["trees"]
        ]
        return CcfModel(
            trees=trees,
            n_features=int(doc["n_features"]),
            feature_names=[str(n) for n in doc["feature_names"]],
            training_params=dict(doc["training_params"]),
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc


def save_model(model: CcfModel, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def load_model(path: str | Path) -> CcfModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not a valid model document: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: not a model document")
    return model_from_dict(doc)
