"""Smoke test for the mediarank Python extension.

Build and install first:

    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/mediarank-*.whl

then run `python3 python/smoke_test.py`.
"""

import math
import os
import tempfile

import mediarank as mr


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def check_vectors():
    assert close(mr.euclidean_distance([0.0, 0.0], [3.0, 4.0]), 5.0)
    assert close(mr.cosine_similarity([1.0, 0.0], [1.0, 1.0]), 1 / math.sqrt(2))
    assert mr.cosine_similarity([1.0, 0.0], [0.0, 0.0]) == 0.0
    try:
        mr.cosine_similarity([0.0, 0.0], [1.0, 0.0])
    except mr.ZeroVectorError:
        pass
    else:
        raise AssertionError("zero query accepted")
    try:
        mr.euclidean_distance([1.0], [1.0, 2.0])
    except mr.DimensionError:
        pass
    else:
        raise AssertionError("dimension mismatch accepted")


def check_ranking():
    items = [("a", [1.0, 0.0]), ("b", [0.0, 1.0]), ("c", [-1.0, 0.0]), ("d", [2.0, 2.0])]
    eu = mr.rank([1.0, 0.5], items, 3, method="euclidean")
    assert [e[0] for e in eu] == ["a", "b", "d"], eu
    par = mr.par_rerank([1.0, 0.5], items, 3)
    assert [e[0] for e in par] == ["a", "d"], par
    assert mr.par_rerank([1.0, 0.5], items, 3, delta_t=1.0) == []


def check_temporal_and_metrics():
    assert mr.sample_frame_indices(100, 4) == [0, 25, 50, 75]
    assert mr.segment_chunks(85, 10.0, 4.0) == [(0, 40), (40, 85)]
    assert mr.aggregate([[1.0, 4.0], [3.0, 0.0]], "mean") == [2.0, 2.0]
    assert mr.aggregate([[1.0, 4.0], [3.0, 0.0]], "max") == [3.0, 4.0]
    m = mr.compute_metrics(3, 2, 1, 4)
    assert close(m["accuracy"], 0.7) and close(m["precision"], 0.6)
    assert close(m["recall"], 0.75) and close(m["f1"], 2 / 3)


def check_pca():
    data = [[float(i), 2.0 * i + (0.01 if i % 2 else -0.01), 0.5] for i in range(20)]
    model = mr.PcaModel.fit(data, 0.9)
    assert model.input_dim == 3 and model.output_dim == 1
    direction = model.components[0]
    assert close(abs(direction[1] / direction[0]), 2.0, 1e-3)
    projected = model.transform(data[0])
    assert len(projected) == 1


def check_repository(tmp):
    records, labels = mr.synth(3, 10, 8, 4, seed=1)
    assert len(records) == 30 and labels["c002-0009"] == "class002"
    path = os.path.join(tmp, "corpus.mrf1")
    mr.write_embeddings(records, path)
    again = mr.read_embeddings(path)
    assert [r[0] for r in again] == [r[0] for r in records]

    repo = mr.Repository.build(again, agg="mean", pca_variance=0.9, normalize=True)
    assert len(repo) == 30 and "c001-0004" in repo
    top = repo.query(seed_id="c001-0004", k=3, method="euclidean")
    assert top[0][0] == "c001-0004" and top[0][1] == 0.0
    raw = [sum(col) / len(col) for col in zip(*again[5][2])]
    by_vector = repo.query(seed_vector=raw, k=1, method="euclidean")
    assert by_vector[0][0] == again[5][0], by_vector

    index = os.path.join(tmp, "corpus.mrix")
    repo.save(index)
    loaded = mr.Repository.load(index)
    assert loaded.health() == repo.health()
    assert loaded.health()["pca"] is True

    with open(index, "rb") as f:
        truncated = f.read()[:-3]
    bad = os.path.join(tmp, "bad.mrix")
    with open(bad, "wb") as f:
        f.write(truncated)
    try:
        mr.Repository.load(bad)
    except mr.FormatError:
        pass
    else:
        raise AssertionError("truncated index accepted")


def main():
    check_vectors()
    check_ranking()
    check_temporal_and_metrics()
    check_pca()
    with tempfile.TemporaryDirectory() as tmp:
        check_repository(tmp)
    print("python smoke test passed")


if __name__ == "__main__":
    main()
