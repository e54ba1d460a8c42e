import os
import pickle
import subprocess
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np
import scipy.sparse as sp

sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "tools"))
import planetoid_to_text as conv  # noqa: E402


def write_raw(raw, name, labelled, n_all, test_ids, d=5, m=3, seed=0):
    rng = np.random.default_rng(seed)
    raw.mkdir(parents=True, exist_ok=True)
    n_test_rows = len(test_ids)
    allx = sp.csr_matrix((rng.random((n_all, d)) < 0.4).astype(np.float32))
    tx = sp.csr_matrix((rng.random((n_test_rows, d)) < 0.4).astype(np.float32))
    ally = np.eye(m)[rng.integers(0, m, n_all)]
    ty = np.eye(m)[rng.integers(0, m, n_test_rows)]
    graph = defaultdict(list)
    total = n_all + (max(test_ids) - min(test_ids) + 1)
    for _ in range(3 * total):
        a, b = (int(v) for v in rng.integers(0, total, 2))
        graph[a].append(b)
        graph[b].append(a)
    graph[0].append(0)  # self-loop
    graph[1].extend([2, 2])  # duplicate
    parts = {"x": allx[:labelled], "tx": tx, "allx": allx, "y": ally[:labelled], "ty": ty, "ally": ally, "graph": graph}
    for part, value in parts.items():
        with open(raw / f"ind.{name}.{part}", "wb") as f:
            pickle.dump(value, f)
    shuffled = list(test_ids)
    rng.shuffle(shuffled)
    (raw / f"ind.{name}.test.index").write_text("".join(f"{i}\n" for i in shuffled))
    return allx, tx, ally, ty


def test_cora_layout(tmp_path):
    test_ids = list(range(540, 570))
    allx, tx, ally, ty = write_raw(tmp_path / "raw", "cora", 20, 540, test_ids)
    features, labels, edges, split = conv.read_planetoid(tmp_path / "raw", "cora")
    assert features.shape == (570, 5)
    assert (split == "valid").sum() == 500
    assert (split == "test").sum() == 30
    assert (split == "train").sum() == 40
    assert all(s != t for s, t in edges)
    assert len(edges) == len(set(edges))
    assert labels[:540].tolist() == ally.argmax(axis=1).tolist()
    # tx row k belongs to the node named on line k of test.index
    order = np.loadtxt(tmp_path / "raw" / "ind.cora.test.index", dtype=np.int64)
    assert labels[order].tolist() == ty.argmax(axis=1).tolist()
    assert (features[order] != tx).nnz == 0

    conv.main([str(tmp_path / "raw"), "cora", str(tmp_path / "out")])
    meta = (tmp_path / "out" / "meta").read_text()
    assert "nodes=570" in meta and "classes=3" in meta and "undirected=true" in meta
    binary = os.environ.get("KEGNN_BIN")
    if binary:
        result = subprocess.run([binary, "compliance", "--dataset", str(tmp_path / "out")], capture_output=True, text=True)
        assert result.returncode == 0, result.stderr
        assert result.stdout.startswith("clause,compliance\n")


def test_citeseer_gap_is_padded(tmp_path):
    test_ids = [540, 541, 543, 546, 547]
    write_raw(tmp_path / "raw", "citeseer", 20, 540, test_ids)
    features, labels, edges, split = conv.read_planetoid(tmp_path / "raw", "citeseer")
    assert features.shape[0] == 548
    assert features[542].nnz == 0 and features[545].nnz == 0
    assert (split == "test").sum() == len(test_ids)


def test_normalized_rows_sum_to_one(tmp_path):
    write_raw(tmp_path / "raw", "pubmed", 20, 540, list(range(540, 560)))
    conv.main([str(tmp_path / "raw"), "pubmed", str(tmp_path / "out"), "--normalize-features"])
    for line in (tmp_path / "out" / "features.txt").read_text().splitlines():
        if line:
            assert abs(sum(float(t.split(":")[1]) for t in line.split()) - 1.0) < 1e-12
