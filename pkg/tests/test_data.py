import numpy as np
import pytest

from xfdd.data import (
    Dataset,
    TEP_FAULTS,
    TEP_VARIABLES,
    VariableCatalog,
    apply_mask,
    lag_augment,
    load_csv,
    relabel_detection,
    relabel_diagnosis,
    split_train_val,
    standardize,
    write_csv,
)
from xfdd.errors import ConfigurationError, DataError


def make_dataset(X, y=None, runs=None, catalog=None, lag=0):
    X = np.asarray(X, dtype=float)
    if catalog is None:
        catalog = VariableCatalog.from_names([f"v{i}" for i in range(X.shape[1] // (lag + 1))])
    y = np.zeros(X.shape[0], dtype=int) if y is None else np.asarray(y, dtype=int)
    return Dataset(
        X=X, y=y, catalog=catalog,
        active_mask=np.ones(len(catalog), dtype=bool), lag=lag,
        fault_ids=y.copy(),
        run_ids=None if runs is None else np.asarray(runs, dtype=int),
    )


def write_tmp_csv(path, names, rows, labels=None, runs=None):
    with open(path, "w") as fh:
        header = list(names) + (["run"] if runs is not None else []) + (["label"] if labels is not None else [])
        fh.write(",".join(header) + "\n")
        for i, row in enumerate(rows):
            cells = [format(float(v), ".12g") for v in row]
            if runs is not None:
                cells.append(str(runs[i]))
            if labels is not None:
                cells.append(str(labels[i]))
            fh.write(",".join(cells) + "\n")


def test_tep_catalogs():
    assert len(TEP_VARIABLES) == 52
    kinds = [v.kind for v in TEP_VARIABLES.variables]
    assert kinds.count("measured") == 41 and kinds.count("manipulated") == 11
    assert len(TEP_FAULTS.faults) == 20
    assert TEP_FAULTS.included_ids() == tuple(i for i in range(1, 21) if i not in (3, 9, 15))
    assert TEP_FAULTS.get(13).kind == "slow_drift"


def test_load_csv_basic(tmp_path, rng):
    names = TEP_VARIABLES.names
    rows = rng.normal(size=(3, 52))
    path = tmp_path / "d.csv"
    write_tmp_csv(path, names, rows, labels=[0, 1, 2])
    ds = load_csv(path, TEP_VARIABLES)
    assert ds.X.shape == (3, 52)
    assert list(ds.y) == [0, 1, 2]
    assert ds.standardization is None


def test_load_csv_wrong_column_count(tmp_path, rng):
    names = TEP_VARIABLES.names[:51]
    path = tmp_path / "d.csv"
    write_tmp_csv(path, names, rng.normal(size=(2, 51)), labels=[0, 0])
    with pytest.raises(DataError, match="51"):
        load_csv(path, TEP_VARIABLES)


def test_load_csv_non_numeric_cell_names_location(tmp_path):
    path = tmp_path / "d.csv"
    write_tmp_csv(path, ["a", "b"], [[1.5, 2.25]], labels=[0])
    path.write_text(path.read_text().replace("2.25", "oops"))
    with pytest.raises(DataError, match="row 2.*'b'"):
        load_csv(path)


def test_load_csv_label_sidecar(tmp_path, rng):
    path = tmp_path / "d.csv"
    write_tmp_csv(path, ["a", "b"], rng.normal(size=(4, 2)))
    side = tmp_path / "labels.txt"
    side.write_text("0\n1\n1\n0\n")
    ds = load_csv(path, labels=side)
    assert list(ds.y) == [0, 1, 1, 0]


def test_load_csv_class_counts_preserved(tmp_path, rng):
    # the standard layout: 500 normal rows then 480 rows per fault
    names = [f"x{i}" for i in range(5)]
    labels = [0] * 500 + [1] * 480 + [2] * 480
    path = tmp_path / "train.csv"
    write_tmp_csv(path, names, rng.normal(size=(len(labels), 5)), labels=labels)
    ds = load_csv(path)
    assert list(np.bincount(ds.y)) == [500, 480, 480]


def test_standardize_basic():
    X = np.array([[3.0], [7.0]])  # mean 5, std 2
    ds = make_dataset(X)
    out, _ = standardize(ds)
    assert out.standardization.mean[0] == pytest.approx(5.0)
    assert out.standardization.std[0] == pytest.approx(2.0)
    # a raw value of 9 maps to 2.0
    assert (9.0 - out.standardization.mean[0]) / out.standardization.std[0] == pytest.approx(2.0)


def test_standardize_zero_variance_column_excluded(rng):
    X = rng.normal(size=(10, 3))
    X[:, 1] = 4.2
    ds = make_dataset(X)
    with pytest.warns(UserWarning, match="zero-variance"):
        out, _ = standardize(ds)
    assert out.active_mask.tolist() == [True, False, True]
    assert out.X.shape == (10, 2)


def test_standardize_train_statistics(rng):
    ds = make_dataset(rng.normal(loc=3.0, scale=2.5, size=(200, 4)))
    out, _ = standardize(ds)
    assert np.all(np.abs(out.X.mean(axis=0)) < 1e-10)
    assert np.all(np.abs(out.X.std(axis=0) - 1.0) < 1e-10)


def test_standardize_uses_train_parameters_for_others(rng):
    train = make_dataset(rng.normal(loc=5.0, size=(50, 2)))
    other = make_dataset(rng.normal(loc=-1.0, size=(30, 2)))
    train_s, (other_s,) = standardize(train, [other])
    manual = (other.X - train.X.mean(axis=0)) / train.X.std(axis=0)
    assert np.allclose(other_s.X, manual, atol=1e-12)


def test_lag_zero_is_identity(rng):
    ds = make_dataset(rng.normal(size=(5, 2)))
    out = lag_augment(ds, 0)
    assert np.array_equal(out.X, ds.X)
    assert out.lag == 0


def test_lag_shape_and_order():
    # N=5, d=2, l=2: three rows, row 0 holds [x3 x2 x1] in 1-based terms
    X = np.arange(10.0).reshape(5, 2)
    ds = make_dataset(X, y=[0, 0, 1, 0, 1])
    out = lag_augment(ds, 2)
    assert out.X.shape == (3, 6)
    assert np.array_equal(out.X[0], np.concatenate([X[2], X[1], X[0]]))
    assert list(out.y) == [1, 0, 1]  # labels follow the current sample


def test_lag_hand_check_scalar_sequence():
    ds = make_dataset(np.array([[1.0], [2.0], [3.0]]))
    out = lag_augment(ds, 1)
    assert np.array_equal(out.X, np.array([[2.0, 1.0], [3.0, 2.0]]))


def test_lag_too_large():
    ds = make_dataset(np.zeros((4, 2)))
    with pytest.raises(DataError):
        lag_augment(ds, 4)


def test_lag_respects_run_boundaries(rng):
    X = rng.normal(size=(10, 2))
    ds = make_dataset(X, runs=[0] * 5 + [1] * 5)
    out = lag_augment(ds, 2)
    assert out.X.shape[0] == 2 * (5 - 2)
    # first row of the second run's block must use only run-1 samples
    assert np.array_equal(out.X[3], np.concatenate([X[7], X[6], X[5]]))


def test_lag_random_hand_indexed_oracle(rng):
    for _ in range(10):
        n = int(rng.integers(3, 30))
        d = int(rng.integers(1, 6))
        lag = int(rng.integers(1, n))
        X = rng.normal(size=(n, d))
        out = lag_augment(make_dataset(X), lag)
        assert out.X.shape == (n - lag, (lag + 1) * d)
        for r in range(n - lag):
            expected = np.concatenate([X[r + lag - k] for k in range(lag + 1)])
            assert np.array_equal(out.X[r], expected)


def test_apply_mask_identity(rng):
    ds = make_dataset(rng.normal(size=(4, 3)))
    out = apply_mask(ds, np.ones(3, dtype=bool))
    assert np.array_equal(out.X, ds.X)


def test_apply_mask_reduces_52_to_24(rng):
    ds = make_dataset(rng.normal(size=(6, 52)), catalog=TEP_VARIABLES)
    mask = np.zeros(52, dtype=bool)
    mask[:24] = True
    out = apply_mask(ds, mask)
    assert out.X.shape == (6, 24)
    assert out.n_active == 24


def test_apply_mask_lagged_removes_all_copies(rng):
    ds = lag_augment(make_dataset(rng.normal(size=(8, 3))), 2)
    mask = np.array([True, False, True])
    out = apply_mask(ds, mask)
    assert out.X.shape[1] == ds.X.shape[1] - 3  # three lag copies of one variable
    assert out.column_names == tuple(
        n for n in ds.column_names if not n.startswith("v1")
    )


def test_apply_mask_cannot_remove_everything(rng):
    ds = make_dataset(rng.normal(size=(3, 2)))
    with pytest.raises(ConfigurationError):
        apply_mask(ds, np.zeros(2, dtype=bool))


def test_mask_lag_commute(rng):
    X = rng.normal(size=(12, 4))
    ds = make_dataset(X)
    mask = np.array([True, False, True, True])
    a = apply_mask(lag_augment(ds, 2), mask)
    b = lag_augment(apply_mask(ds, mask), 2)
    assert np.array_equal(a.X, b.X)
    assert a.column_names == b.column_names


def test_split_counts_and_determinism(rng):
    ds = make_dataset(rng.normal(size=(100, 2)), y=[0] * 50 + [1] * 50)
    tr, va = split_train_val(ds, 0.2, seed=3)
    assert tr.n_samples == 80 and va.n_samples == 20
    assert int((va.y == 0).sum()) == 10 and int((va.y == 1).sum()) == 10
    tr2, va2 = split_train_val(ds, 0.2, seed=3)
    assert np.array_equal(va.X, va2.X) and np.array_equal(tr.X, tr2.X)


def test_split_ratio_preserved_on_unbalanced(rng):
    y = [0] * 500 + [1] * 480
    ds = make_dataset(rng.normal(size=(980, 3)), y=y)
    tr, va = split_train_val(ds, 0.2, seed=1)
    assert abs(int((va.y == 0).sum()) - 100) <= 1
    assert abs(int((va.y == 1).sum()) - 96) <= 1


def test_split_needs_two_per_class(rng):
    ds = make_dataset(rng.normal(size=(5, 2)), y=[0, 0, 0, 0, 1])
    with pytest.raises(DataError):
        split_train_val(ds, 0.2, seed=0)


def test_label_alignment_after_lag(rng):
    n = 20
    y = rng.integers(0, 2, size=n)
    ds = make_dataset(rng.normal(size=(n, 2)), y=y)
    out = lag_augment(ds, 3)
    assert np.array_equal(out.y, y[3:])


def test_relabel_detection():
    ds = make_dataset(np.zeros((6, 2)), y=[0, 0, 2, 5, 0, 1])
    out = relabel_detection(ds)
    assert list(out.y) == [0, 0, 1, 1, 0, 1]
    assert out.class_names == ("normal", "faulty")


def test_relabel_diagnosis_mapping_and_exclusion():
    ds = make_dataset(np.arange(14.0).reshape(7, 2), y=[0, 1, 3, 9, 1, 3, 9])
    out = relabel_diagnosis(ds, exclude=[9])
    assert out.class_names == ("fault_1", "fault_3")
    assert list(out.y) == [0, 1, 0, 1]
    fixed = relabel_diagnosis(ds, fault_ids=[3, 1])
    assert fixed.class_names == ("fault_3", "fault_1")
    assert list(fixed.y) == [1, 0, 1, 0]


def test_write_then_load_round_trip(tmp_path, rng):
    ds = make_dataset(rng.normal(size=(9, 3)), y=[0, 0, 0, 1, 1, 1, 2, 2, 2],
                      runs=[0, 0, 0, 1, 1, 1, 2, 2, 2])
    path = tmp_path / "round.csv"
    write_csv(ds, path)
    back = load_csv(path)
    assert np.allclose(back.X, ds.X, atol=1e-9)
    assert np.array_equal(back.y, ds.y)
    assert np.array_equal(back.run_ids, ds.run_ids)
