#!/usr/bin/env python3
# Copyright 2026 The kegnn Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#    http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Convert raw Planetoid files (ind.<name>.x, tx, allx, y, ty, ally, graph,
test.index) into the kegnn text dataset layout.

The split is the full supervised one: 1000 test nodes from test.index, the
500 nodes following the labelled block as validation, everything else train.
"""

import argparse
import pathlib
import pickle
import sys

import numpy as np
import scipy.sparse as sp


def _load(raw, name, part):
    with open(raw / f"ind.{name}.{part}", "rb") as f:
        return pickle.load(f, encoding="latin1")


def read_planetoid(raw, name):
    x, tx, allx = (_load(raw, name, p) for p in ("x", "tx", "allx"))
    y, ty, ally = (np.asarray(_load(raw, name, p)) for p in ("y", "ty", "ally"))
    graph = _load(raw, name, "graph")
    test_index = np.loadtxt(raw / f"ind.{name}.test.index", dtype=np.int64).reshape(-1)
    test_range = np.sort(test_index)

    if name == "citeseer":
        # Some test ids have no features or labels; pad them with zero rows.
        full = np.arange(test_range.min(), test_range.max() + 1)
        tx_ext = sp.lil_matrix((len(full), tx.shape[1]))
        tx_ext[test_range - test_range.min(), :] = tx
        tx = tx_ext
        ty_ext = np.zeros((len(full), ty.shape[1]))
        ty_ext[test_range - test_range.min(), :] = ty
        ty = ty_ext

    features = sp.vstack([allx, tx]).tolil()
    features[test_index, :] = features[test_range, :]
    labels = np.vstack([ally, ty])
    labels[test_index, :] = labels[test_range, :]
    features = sp.csr_matrix(features)
    labels = labels.argmax(axis=1)

    n = features.shape[0]
    edges = set()
    for src, neighbours in graph.items():
        for dst in neighbours:
            if src != dst and src < n and dst < n:
                edges.add((int(src), int(dst)))
    edges = sorted(edges)

    split = np.full(n, "train", dtype=object)
    split[len(y):len(y) + 500] = "valid"
    split[test_range] = "test"
    return features, labels, edges, split


def write_dataset(out, features, labels, edges, split, normalize):
    out.mkdir(parents=True, exist_ok=True)
    n, d = features.shape
    classes = int(labels.max()) + 1
    (out / "meta").write_text(f"nodes={n}\nfeatures={d}\nclasses={classes}\nundirected=true\n")
    features = sp.csr_matrix(features, dtype=np.float64)
    if normalize:
        sums = np.asarray(features.sum(axis=1)).reshape(-1)
        sums[sums == 0] = 1.0
        features = sp.diags(1.0 / sums) @ features
        features = sp.csr_matrix(features)
    with open(out / "features.txt", "w") as f:
        for i in range(n):
            row = features.getrow(i)
            order = np.argsort(row.indices)
            f.write(" ".join(f"{c}:{v!r}" for c, v in zip(row.indices[order], row.data[order].tolist())) + "\n")
    (out / "labels.txt").write_text("".join(f"{int(v)}\n" for v in labels))
    (out / "edges.txt").write_text("".join(f"{s} {t}\n" for s, t in edges))
    (out / "split.txt").write_text("".join(f"{s}\n" for s in split))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("raw", type=pathlib.Path, help="directory holding the ind.<name>.* files")
    parser.add_argument("name", choices=["cora", "citeseer", "pubmed"])
    parser.add_argument("out", type=pathlib.Path)
    parser.add_argument("--normalize-features", action="store_true", help="scale feature rows to sum 1")
    args = parser.parse_args(argv)

    features, labels, edges, split = read_planetoid(args.raw, args.name)
    write_dataset(args.out, features, labels, edges, split, args.normalize_features)
    counts = {s: int((split == s).sum()) for s in ("train", "valid", "test")}
    print(f"{args.name}: {features.shape[0]} nodes, {len(edges)} directed edges, {features.shape[1]} features, "
          f"{int(labels.max()) + 1} classes, train/valid/test {counts['train']}/{counts['valid']}/{counts['test']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
