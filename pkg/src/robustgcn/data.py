"""Dataset loading/saving in a portable text bundle, synthetic community
graphs, and train/val/test split generation.

A bundle is a directory with four UTF-8, LF-terminated files:
  meta      JSON: format_version, name, n, d, c, features_format
  edges     one "i<TAB>j<TAB>weight" line per undirected edge (0-indexed)
  features  sparse triplets "i<TAB>j<TAB>value", or dense CSV rows when
            meta.features_format == "dense"
  labels    one class index per line
"""

import json
import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graph import Graph

FORMAT_VERSION = 1


class DataError(ValueError):
    pass


class BundleFormatError(DataError):
    pass


class DimensionMismatchError(DataError):
    pass


class LabelRangeError(DataError):
    pass


@dataclass
class Dataset:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    name: str


@dataclass(frozen=True)
class SplitSpec:
    train_per_class: int = 20
    val_size: int = 500
    test_size: int = 1000
    seed: int = 0


def _read_lines(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise BundleFormatError(f"cannot read {what} file: {exc}") from exc


def load_dataset(path):
    """Load and validate a portable bundle.

    The adjacency is symmetrized (max with its transpose) and binarized,
    matching the citation-graph convention used throughout.
    """
    meta_path = os.path.join(path, "meta")
    try:
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise BundleFormatError(f"cannot read meta: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise BundleFormatError(f"malformed meta: {exc}") from exc
    for key in ("n", "d", "c", "name"):
        if key not in meta:
            raise BundleFormatError(f"meta missing key {key!r}")
    n, d, c = int(meta["n"]), int(meta["d"]), int(meta["c"])

    rows, cols, vals = [], [], []
    for ln, line in enumerate(_read_lines(os.path.join(path, "edges"), "edges")):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise BundleFormatError(f"edges line {ln}: expected i\\tj\\tweight")
        try:
            i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError as exc:
            raise BundleFormatError(f"edges line {ln}: {exc}") from exc
        if not (0 <= i < n and 0 <= j < n):
            raise DimensionMismatchError(f"edges line {ln}: index out of range")
        rows.append(i)
        cols.append(j)
        vals.append(w)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    A = A.maximum(A.T)
    A.setdiag(0)
    A.eliminate_zeros()
    A.data[:] = 1.0
    graph = Graph.from_adjacency(A)

    fmt = meta.get("features_format", "sparse")
    feat_lines = _read_lines(os.path.join(path, "features"), "features")
    if fmt == "dense":
        rows_out = [ln for ln in feat_lines if ln.strip()]
        if len(rows_out) != n:
            raise DimensionMismatchError(
                f"dense features: expected {n} rows, got {len(rows_out)}"
            )
        try:
            H = np.array([[float(x) for x in r.split(",")] for r in rows_out])
        except ValueError as exc:
            raise BundleFormatError(f"malformed dense features: {exc}") from exc
        if H.shape[1] != d:
            raise DimensionMismatchError(
                f"dense features: expected {d} columns, got {H.shape[1]}"
            )
    else:
        H = np.zeros((n, d))
        for ln, line in enumerate(feat_lines):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise BundleFormatError(
                    f"features line {ln}: expected i\\tj\\tvalue"
                )
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise BundleFormatError(f"features line {ln}: {exc}") from exc
            if not (0 <= i < n and 0 <= j < d):
                raise DimensionMismatchError(
                    f"features line {ln}: index out of range"
                )
            H[i, j] = v
    if not np.isfinite(H).all():
        raise BundleFormatError("features contain non-finite values")

    label_lines = [
        ln for ln in _read_lines(os.path.join(path, "labels"), "labels")
        if ln.strip()
    ]
    if len(label_lines) != n:
        raise DimensionMismatchError(
            f"labels: expected {n} lines, got {len(label_lines)}"
        )
    try:
        labels = np.array([int(x) for x in label_lines])
    except ValueError as exc:
        raise BundleFormatError(f"malformed labels: {exc}") from exc
    if labels.min() < 0 or labels.max() >= c:
        raise LabelRangeError(f"labels must lie in [0, {c})")
    return Dataset(graph, H, labels, c, str(meta["name"]))


def save_dataset(ds, path, dense_features=False):
    """Write a Dataset as a portable bundle (deterministic ordering)."""
    os.makedirs(path, exist_ok=True)
    n, d = ds.features.shape
    meta = {
        "format_version": FORMAT_VERSION,
        "name": ds.name,
        "n": n,
        "d": d,
        "c": ds.class_count,
        "features_format": "dense" if dense_features else "sparse",
    }
    with open(os.path.join(path, "meta"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    with open(os.path.join(path, "edges"), "w", encoding="utf-8") as fh:
        for i, j, w in ds.graph.edge_list():
            fh.write(f"{i}\t{j}\t{w:g}\n")
    with open(os.path.join(path, "features"), "w", encoding="utf-8") as fh:
        if dense_features:
            for row in ds.features:
                fh.write(",".join(f"{x:.12g}" for x in row) + "\n")
        else:
            for i, j in zip(*np.nonzero(ds.features)):
                fh.write(f"{i}\t{j}\t{ds.features[i, j]:.12g}\n")
    with open(os.path.join(path, "labels"), "w", encoding="utf-8") as fh:
        for y in ds.labels:
            fh.write(f"{int(y)}\n")


def synth_communities(classes, nodes_per_class, p_in, p_out, signal_dims,
                      noise_std, seed=0):
    """Stochastic-block-model graph with class-prototype features.

    Each class gets a contiguous indicator block of the feature vector as
    its prototype; Gaussian noise of scale noise_std is added on top.
    """
    if classes < 2 or nodes_per_class < 1:
        raise ValueError("need >= 2 classes and >= 1 node per class")
    if not p_in > p_out:
        raise ValueError("p_in must exceed p_out")
    if signal_dims < classes:
        raise ValueError("signal_dims must be >= classes")
    rng = np.random.default_rng(seed)
    n = classes * nodes_per_class
    labels = np.repeat(np.arange(classes), nodes_per_class)

    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    prob = np.where(same, p_in, p_out)
    keep = rng.random(iu.size) < prob
    edges = [(int(i), int(j), 1.0) for i, j in zip(iu[keep], ju[keep])]
    graph = Graph(n, edges)

    block = signal_dims // classes
    proto = np.zeros((classes, signal_dims))
    for k in range(classes):
        proto[k, k * block:(k + 1) * block] = 1.0
    H = proto[labels] + noise_std * rng.standard_normal((n, signal_dims))
    return Dataset(graph, H, labels, classes, "synth")


def make_splits(ds, spec):
    """Random per-class train nodes plus disjoint val/test pools.

    Returns three boolean masks; deterministic under spec.seed.
    """
    rng = np.random.default_rng(spec.seed)
    n = ds.features.shape[0]
    train = np.zeros(n, dtype=bool)
    for k in range(ds.class_count):
        pool = np.flatnonzero(ds.labels == k)
        if pool.size < spec.train_per_class:
            raise DataError(
                f"class {k} has only {pool.size} nodes, "
                f"need {spec.train_per_class}"
            )
        train[rng.choice(pool, size=spec.train_per_class, replace=False)] = True
    rest = np.flatnonzero(~train)
    if rest.size < spec.val_size + spec.test_size:
        raise DataError("val_size + test_size exceeds remaining nodes")
    rest = rng.permutation(rest)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    val[rest[: spec.val_size]] = True
    test[rest[spec.val_size: spec.val_size + spec.test_size]] = True
    return train, val, test


def knn_graph(features, k=10, metric="cosine"):
    """k-nearest-neighbor graph over dense feature rows (symmetrized).

    Stand-in builder for continuous-feature datasets whose native graph
    construction is not distributed with them.
    """
    H = np.asarray(features, dtype=float)
    n = H.shape[0]
    if metric == "cosine":
        norms = np.linalg.norm(H, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        X = H / norms
        sim = X @ X.T
    elif metric == "euclidean":
        d2 = ((H[:, None, :] - H[None, :, :]) ** 2).sum(-1)
        sim = -d2
    else:
        raise ValueError(f"unknown metric {metric!r}")
    np.fill_diagonal(sim, -np.inf)
    edges = set()
    for i in range(n):
        for j in np.argsort(-sim[i])[:k]:
            a, b = (i, int(j)) if i < j else (int(j), i)
            edges.add((a, b))
    return Graph(n, [(i, j, 1.0) for i, j in sorted(edges)])
