"""Convert the raw citation-benchmark distribution into a portable bundle.

The raw distribution ships eight files per dataset:
  ind.<name>.x / .tx / .allx   pickled scipy CSR feature blocks
  ind.<name>.y / .ty / .ally   pickled one-hot label blocks
  ind.<name>.graph             pickled {node: [neighbors]} dict
  ind.<name>.test.index        text file of test node ids

The output bundle is the plain-text directory format consumed by the
experiment library: meta (JSON), edges, features (sparse triplets),
labels. Conversion is deterministic, so reruns are byte-identical.
"""

import hashlib
import json
import os
import pickle
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph", "test.index")
DATASETS = ("cora", "citeseer", "pubmed")
FORMAT_VERSION = 1


class ConversionError(ValueError):
    pass


@dataclass(frozen=True)
class RawPlanetoidBundle:
    """Paths to the eight per-dataset raw files."""

    raw_dir: str
    name: str

    def path(self, part):
        return os.path.join(self.raw_dir, f"ind.{self.name}.{part}")

    def check(self):
        missing = [p for p in PARTS if not os.path.isfile(self.path(p))]
        if missing:
            raise ConversionError(
                f"missing raw files for {self.name}: "
                + ", ".join(self.path(p) for p in missing)
            )
        return self


def _load_pickle(path):
    with open(path, "rb") as fh:
        # the public distribution carries python2 pickles
        return pickle.load(fh, encoding="latin1")


def _content_hash(raw):
    h = hashlib.sha256()
    for part in PARTS:
        with open(raw.path(part), "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()


def assemble(raw):
    """Reassemble full feature/label matrices and the edge set.

    Test rows live in tx/ty but in the shuffled order given by test.index;
    indices missing from test.index (isolated test nodes in citeseer) get
    zero feature rows and zero one-hot labels.
    """
    raw.check()
    x = sp.csr_matrix(_load_pickle(raw.path("x")))
    tx = sp.csr_matrix(_load_pickle(raw.path("tx")))
    allx = sp.csr_matrix(_load_pickle(raw.path("allx")))
    y = np.asarray(_load_pickle(raw.path("y")))
    ty = np.asarray(_load_pickle(raw.path("ty")))
    ally = np.asarray(_load_pickle(raw.path("ally")))
    graph = _load_pickle(raw.path("graph"))
    with open(raw.path("test.index"), encoding="utf-8") as fh:
        test_idx = np.array([int(l) for l in fh.read().split()])

    if x.shape[1] != allx.shape[1] or tx.shape[1] != allx.shape[1]:
        raise ConversionError("feature blocks disagree on dimensionality")
    if y.shape[1] != ally.shape[1] or ty.shape[1] != ally.shape[1]:
        raise ConversionError("label blocks disagree on class count")
    if tx.shape[0] != test_idx.size:
        raise ConversionError(
            f"test.index lists {test_idx.size} nodes but tx has "
            f"{tx.shape[0]} rows"
        )

    lo, hi = test_idx.min(), test_idx.max()
    if lo < allx.shape[0]:
        raise ConversionError("test.index overlaps the allx block")
    full_range = np.arange(lo, hi + 1)
    tx_ext = sp.lil_matrix((full_range.size, allx.shape[1]))
    ty_ext = np.zeros((full_range.size, ally.shape[1]))
    tx_ext[test_idx - lo, :] = tx
    ty_ext[test_idx - lo, :] = ty

    features = sp.vstack([allx, tx_ext.tocsr()]).tocsr()
    onehot = np.vstack([ally, ty_ext])
    n = features.shape[0]
    if max(graph) >= n:
        raise ConversionError(
            f"graph references node {max(graph)} but only {n} feature rows"
        )

    zero_label_rows = np.flatnonzero(onehot.sum(axis=1) == 0)
    labels = onehot.argmax(axis=1)

    edges = set()
    for i, nbrs in graph.items():
        for j in nbrs:
            if i == j:
                continue
            edges.add((min(i, j), max(i, j)))
    return features, labels, onehot.shape[1], sorted(edges), zero_label_rows


def convert(raw, out_dir):
    """Write the portable bundle; returns summary stats for cross-checking."""
    features, labels, c, edges, zero_label_rows = assemble(raw)
    n, d = features.shape
    coo = features.tocoo()
    zero_feature_nodes = np.setdiff1d(
        np.arange(n), np.unique(coo.row)
    )

    os.makedirs(out_dir, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "name": raw.name,
        "n": int(n),
        "d": int(d),
        "c": int(c),
        "features_format": "sparse",
        "source_hash": _content_hash(raw),
        "zero_feature_nodes": [int(i) for i in zero_feature_nodes],
        "zero_label_nodes": [int(i) for i in zero_label_rows],
    }
    with open(os.path.join(out_dir, "meta"), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    with open(os.path.join(out_dir, "edges"), "w", encoding="utf-8") as fh:
        for i, j in edges:
            fh.write(f"{i}\t{j}\t1\n")
    order = np.lexsort((coo.col, coo.row))
    with open(os.path.join(out_dir, "features"), "w", encoding="utf-8") as fh:
        for k in order:
            fh.write(f"{coo.row[k]}\t{coo.col[k]}\t{coo.data[k]:.12g}\n")
    with open(os.path.join(out_dir, "labels"), "w", encoding="utf-8") as fh:
        for yv in labels:
            fh.write(f"{int(yv)}\n")
    return {
        "name": raw.name,
        "nodes": int(n),
        "edges": len(edges),
        "feature_dims": int(d),
        "classes": int(c),
        "zero_feature_nodes": len(zero_feature_nodes),
    }
