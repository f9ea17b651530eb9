import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build_store, integer_matrix
from corrsketch.ams import (
    RowSketchStore,
    SketchStateError,
    SketchTransform,
    SnapshotFormatError,
    accuracy_depth,
    accuracy_width,
    inner_product,
)
from corrsketch.stream import DenseMatrix, StreamUpdate, matrix_to_updates


def test_accuracy_constants():
    assert accuracy_width(0.02) == 10_000
    assert accuracy_width(0.1) == 400
    assert accuracy_depth(0.01) == 37  # smallest odd >= 8 ln 100
    assert accuracy_depth(0.05) == 25
    with pytest.raises(ValueError):
        accuracy_width(0.0)


def test_transform_determinism_and_shape():
    a = SketchTransform(64, 32, 5, seed=9)
    b = SketchTransform(64, 32, 5, seed=9)
    assert np.array_equal(a.bucket_of, b.bucket_of)
    assert np.array_equal(a.sign_of, b.sign_of)
    assert a == b
    assert set(np.unique(a.sign_of)) <= {-1.0, 1.0}
    assert a.bucket_of.min() >= 0 and a.bucket_of.max() < 32
    with pytest.raises(ValueError):
        SketchTransform(64, 32, 4, seed=9)  # even depth


def test_basis_update_touches_one_bucket_per_row():
    t = SketchTransform(16, 8, 7, seed=1)
    store = RowSketchStore(t, 2)
    store.apply(StreamUpdate(1.0, 0, 0))
    r0 = store.row_sketch(0)
    assert np.count_nonzero(r0) == 7
    assert set(np.unique(r0[r0 != 0])) <= {-1.0, 1.0}
    assert store.totals[0] == 1.0


def test_updates_cancel():
    t = SketchTransform(16, 8, 7, seed=1)
    store = RowSketchStore(t, 2)
    store.apply(StreamUpdate(2.0, 0, 5))
    store.apply(StreamUpdate(-2.0, 0, 5))
    assert not np.any(store.row_sketch(0))
    assert store.totals[0] == 0.0


def test_rps_replay_matches_dense_sketch_bit_exact(rng):
    values = rng.standard_normal((8, 16))
    t = SketchTransform(16, 8, 5, seed=3)
    store = RowSketchStore(t, 8)
    for u in matrix_to_updates(DenseMatrix(values), "rps"):
        store.apply(u)
    for i in range(8):
        assert np.array_equal(store.row_sketch(i), t.sketch_vector(values[i]))


def test_sketch_vector_zero_and_basis():
    t = SketchTransform(16, 8, 5, seed=3)
    assert not np.any(t.sketch_vector(np.zeros(16)))
    e3 = np.zeros(16)
    e3[3] = 1.0
    store = RowSketchStore(t, 1)
    store.apply(StreamUpdate(1.0, 0, 3))
    assert np.array_equal(t.sketch_vector(e3), store.row_sketch(0))
    with pytest.raises(ValueError):
        t.sketch_vector(np.zeros(15))


def test_ones_sketch_fold_equivalence():
    t = SketchTransform(64, 16, 5, seed=8)
    eager = RowSketchStore(t, 1)
    assert np.array_equal(eager.ones_sketch, t.sketch_vector(np.ones(64)))

    lazy = RowSketchStore(t, 1, eager_ones=False)
    assert lazy.ones_built == 0
    for j in range(5):  # interleaved: a few updates fold a few basis vectors
        lazy.apply(StreamUpdate(0.5, 0, j))
    assert lazy.ones_built == 5
    lazy.finalize_ones()
    assert lazy.ones_built == 64
    assert np.array_equal(lazy.ones_sketch, eager.ones_sketch)
    before = lazy.ones_sketch.copy()
    lazy.finalize_ones()  # idempotent
    assert np.array_equal(lazy.ones_sketch, before)


def test_inner_product_examples():
    t = SketchTransform(16, 8, 5, seed=3)
    zero = t.zero_sketch()
    e0 = np.zeros(16)
    e0[0] = 1.0
    s = t.sketch_vector(e0)
    assert inner_product(zero, s) == 0.0
    assert inner_product(s, s) == 1.0  # a basis vector collides with itself everywhere
    with pytest.raises(ValueError):
        inner_product(s, np.zeros((3, 3)))


def test_inner_product_monte_carlo(rng):
    # lighter sibling of the acceptance check: 200 unit-vector pairs
    p, trials = 512, 200
    t = SketchTransform(p, 400, 7, seed=123)
    hits = 0
    for _ in range(trials):
        x = rng.standard_normal(p)
        y = rng.standard_normal(p)
        x /= np.linalg.norm(x)
        y /= np.linalg.norm(y)
        est = inner_product(t.sketch_vector(x), t.sketch_vector(y))
        hits += abs(est - float(x @ y)) <= 0.1
    assert hits / trials >= 0.9


def test_standardize_identical_rows(rng):
    values = rng.standard_normal((4, 256))
    values[2] = values[0]
    store = build_store(values, epsilon=0.05, delta=0.05)
    store.standardize()
    eps = store.transform.epsilon
    assert abs(store.inner(0, 2) - 1.0) <= 4 * eps
    assert store.standardized


def test_standardize_flags_degenerate_rows(rng):
    values = rng.standard_normal((3, 64))
    values[1] = 2.5  # constant row: zero variance
    store = build_store(values)
    store.standardize()
    assert store.degenerate[1] and not store.degenerate[0]
    assert not np.any(store.row_sketch(1))
    assert store.inner(1, 0) == 0.0


def test_no_updates_after_standardize(rng):
    store = build_store(rng.standard_normal((2, 32)))
    store.standardize()
    with pytest.raises(SketchStateError):
        store.apply(StreamUpdate(1.0, 0, 0))
    with pytest.raises(SketchStateError):
        store.standardize()


def test_standardize_requires_complete_ones(rng):
    t = SketchTransform(32, 16, 5, seed=2)
    store = RowSketchStore(t, 2, eager_ones=False)
    store.apply(StreamUpdate(1.0, 0, 3))
    with pytest.raises(SketchStateError):
        store.standardize()
    store.finalize_ones()
    store.standardize()


def test_exact_rescaling_matches_true_norm(rng):
    values = rng.standard_normal((6, 128))
    store = build_store(values, track_squares=True)
    store.standardize(exact=True)
    # against the dense standardization
    centered = values - values.mean(axis=1, keepdims=True)
    unit = centered / np.linalg.norm(centered, axis=1, keepdims=True)
    truth = unit @ unit.T
    eps = store.transform.epsilon
    for i in range(6):
        for j in range(i + 1, 6):
            assert abs(store.inner(i, j) - truth[i, j]) <= 4 * eps


def test_standardized_copy_preserves_original(rng):
    store = build_store(rng.standard_normal((3, 64)))
    snap = store.rows.copy()
    std = store.standardized_copy()
    assert std.standardized and not store.standardized
    assert np.array_equal(store.rows, snap)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.randoms(use_true_random=False))
def test_store_linearity_under_permutation_and_split(seed, shuffler):
    # pre-standardization state is identical for any ordering of integer updates
    rng = np.random.default_rng(seed)
    values = integer_matrix(rng, 4, 8)
    t = SketchTransform(8, 4, 3, seed=seed)
    updates = matrix_to_updates(DenseMatrix(values), "ts")
    a = RowSketchStore(t, 4)
    for u in updates:
        a.apply(u)
    shuffled = list(updates)
    shuffler.shuffle(shuffled)
    half = len(shuffled) // 2
    b = RowSketchStore(t, 4)
    for u in shuffled[:half]:
        b.apply(u)
    for u in shuffled[half:]:
        b.apply(u)
    assert np.array_equal(a.rows, b.rows)
    assert np.array_equal(a.totals, b.totals)
    assert np.array_equal(a.ones_sketch, b.ones_sketch)


def test_snapshot_roundtrip_bit_exact(tmp_path, rng):
    values = rng.standard_normal((5, 48))
    store = build_store(values, track_squares=True)
    path = tmp_path / "plain.snap"
    store.save(path)
    back = RowSketchStore.load(path)
    assert back.transform == store.transform
    assert np.array_equal(back.rows, store.rows)
    assert np.array_equal(back.totals, store.totals)
    assert np.array_equal(back.square_totals, store.square_totals)
    assert np.array_equal(back.ones_sketch, store.ones_sketch)
    assert back.ones_built == store.ones_built and not back.standardized

    store.standardize()
    spath = tmp_path / "std.snap"
    store.save(spath)
    sback = RowSketchStore.load(spath)
    assert sback.standardized
    assert np.array_equal(sback.rows, store.rows)
    assert np.array_equal(sback.degenerate, store.degenerate)


def test_snapshot_roundtrip_identity_transform(tmp_path, rng):
    values = rng.standard_normal((3, 16))
    t = SketchTransform.identity(16)
    store = RowSketchStore.from_matrix(t, values)
    path = tmp_path / "exact.snap"
    store.save(path)
    back = RowSketchStore.load(path)
    assert back.transform.exact and back.transform == t
    assert np.array_equal(back.rows, store.rows)


def test_snapshot_rejects_malformed(tmp_path):
    path = tmp_path / "bad.snap"
    path.write_bytes(b"not a snapshot at all")
    with pytest.raises(SnapshotFormatError):
        RowSketchStore.load(path)
    good = build_store(np.zeros((2, 8)) + np.eye(2, 8))
    gpath = tmp_path / "good.snap"
    good.save(gpath)
    raw = gpath.read_bytes()
    (tmp_path / "trunc.snap").write_bytes(raw[:-16])
    with pytest.raises(SnapshotFormatError):
        RowSketchStore.load(tmp_path / "trunc.snap")


def test_identity_transform_is_exact(rng):
    t = SketchTransform.identity(32)
    assert t.epsilon == 0.0 and t.delta == 0.0
    x = rng.standard_normal(32)
    y = rng.standard_normal(32)
    est = inner_product(t.sketch_vector(x), t.sketch_vector(y))
    assert est == pytest.approx(float(x @ y), rel=1e-12)


def test_norm_estimate_zero_mean_unit_rows(rng):
    # identity-like regime (b = p): a zero-mean unit-norm row keeps its
    # sketch norm estimate within [1 - 2 eps, 1 + 2 eps]
    p = 128
    t = SketchTransform(p, p, 9, seed=31)
    eps = t.epsilon
    for _ in range(50):
        x = rng.standard_normal(p)
        x -= x.mean()
        x /= np.linalg.norm(x)
        s = t.sketch_vector(x)
        assert 1 - 2 * eps <= inner_product(s, s) <= 1 + 2 * eps


def test_norm_estimate_concentrates(rng):
    # |sketch . sketch - 1| <= eps for most random unit vectors
    p = 256
    t = SketchTransform.from_accuracy(p, epsilon=0.2, delta=0.05, seed=77)
    hits = 0
    trials = 200
    for _ in range(trials):
        x = rng.standard_normal(p)
        x /= np.linalg.norm(x)
        s = t.sketch_vector(x)
        hits += abs(inner_product(s, s) - 1.0) <= 0.2
    assert hits / trials >= 0.95
