"""Dataset, fold assignment and CSV loading."""

import numpy as np
import pytest

from pseudolearn.data import (
    ColumnMap,
    Dataset,
    FoldAssignment,
    NuisanceEstimates,
    load_csv,
    make_folds,
)
from pseudolearn.errors import ConfigError, DomainError, ParseError, SchemaError


def toy_dataset(n=10, d=2, seed=0, treated=True):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = rng.normal(size=n)
    w = rng.integers(0, 2, size=n) if treated else None
    return Dataset(X, y, w)


class TestDataset:
    def test_basic_shapes(self):
        ds = toy_dataset(n=7, d=3)
        assert ds.n == 7 and ds.d == 3 and len(ds) == 7
        assert ds.has_treatment

    def test_arrays_are_immutable(self):
        ds = toy_dataset()
        with pytest.raises(ValueError):
            ds.X[0, 0] = 99.0
        with pytest.raises(ValueError):
            ds.y[0] = 99.0
        with pytest.raises(ValueError):
            ds.w[0] = 1

    def test_constructor_copies_input(self):
        X = np.zeros((3, 1))
        y = np.zeros(3)
        ds = Dataset(X, y)
        X[0, 0] = 5.0
        assert ds.X[0, 0] == 0.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(SchemaError):
            Dataset(np.zeros((3, 1)), np.zeros(4))
        with pytest.raises(SchemaError):
            Dataset(np.zeros((3, 1)), np.zeros(3), np.zeros(2))

    def test_empty_rejected(self):
        with pytest.raises(SchemaError):
            Dataset(np.zeros((0, 2)), np.zeros(0))

    def test_nonfinite_rejected(self):
        with pytest.raises(DomainError):
            Dataset([[np.nan], [0.0]], [0.0, 1.0])
        with pytest.raises(DomainError):
            Dataset([[0.0], [0.0]], [np.inf, 1.0])

    def test_treatment_must_be_binary(self):
        with pytest.raises(DomainError, match="row 1"):
            Dataset(np.zeros((3, 1)), np.zeros(3), [0, 2, 1])

    def test_float_encoded_treatment_accepted(self):
        ds = Dataset(np.zeros((2, 1)), np.zeros(2), [0.0, 1.0])
        assert ds.w.dtype == np.int64
        assert list(ds.w) == [0, 1]

    def test_row_and_subset(self):
        ds = toy_dataset(n=5)
        ob = ds.row(2)
        assert ob.y == ds.y[2]
        assert ob.w == ds.w[2]
        sub = ds.subset([4, 0])
        assert sub.n == 2
        assert np.array_equal(sub.X[0], ds.X[4])
        assert sub.y[1] == ds.y[0]


class TestMakeFolds:
    def test_two_folds_of_four_balanced(self):
        fa = make_folds(4, 2, seed=0)
        counts = np.bincount(fa.fold_of, minlength=2)
        assert sorted(counts) == [2, 2]

    def test_five_rows_two_folds_sizes(self):
        fa = make_folds(5, 2, seed=0)
        counts = np.bincount(fa.fold_of, minlength=2)
        assert sorted(counts) == [2, 3]

    def test_partition_property(self):
        # every row in exactly one fold, for assorted (n, K, seed)
        for seed in range(20):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(2, 200))
            k = int(rng.integers(2, n + 1))
            fa = make_folds(n, k, seed=seed)
            assert fa.fold_of.shape == (n,)
            counts = np.bincount(fa.fold_of, minlength=k)
            assert counts.sum() == n
            assert counts.max() - counts.min() <= 1
            assert np.all(counts >= 1)

    def test_deterministic_in_seed(self):
        a = make_folds(100, 5, seed=7)
        b = make_folds(100, 5, seed=7)
        c = make_folds(100, 5, seed=8)
        assert np.array_equal(a.fold_of, b.fold_of)
        assert not np.array_equal(a.fold_of, c.fold_of)

    def test_bad_k_rejected(self):
        with pytest.raises(ConfigError):
            make_folds(10, 1, seed=0)
        with pytest.raises(ConfigError):
            make_folds(10, 11, seed=0)

    def test_train_rows_complement(self):
        fa = make_folds(23, 4, seed=3)
        for k in range(4):
            test = fa.rows_in_fold(k)
            train = fa.train_rows(k)
            assert len(set(test) & set(train)) == 0
            assert len(test) + len(train) == 23


class TestFoldAssignment:
    def test_unbalanced_rejected(self):
        with pytest.raises(ConfigError):
            FoldAssignment(fold_of=np.array([0, 0, 0, 1]), n_folds=2)

    def test_empty_fold_rejected(self):
        with pytest.raises(ConfigError):
            FoldAssignment(fold_of=np.array([0, 0]), n_folds=2)


class TestNuisanceEstimates:
    def test_propensity_bounds_enforced(self):
        ok = NuisanceEstimates(
            mu0_hat=np.zeros(3), mu1_hat=np.ones(3), pi_hat=np.full(3, 0.5)
        )
        assert ok.n == 3
        with pytest.raises(DomainError):
            NuisanceEstimates(
                mu0_hat=np.zeros(2), mu1_hat=np.zeros(2), pi_hat=np.array([0.5, 1.0])
            )
        with pytest.raises(DomainError):
            NuisanceEstimates(
                mu0_hat=np.zeros(2), mu1_hat=np.zeros(2), pi_hat=np.array([0.0, 0.5])
            )

    def test_shape_mismatch_rejected(self):
        with pytest.raises(SchemaError):
            NuisanceEstimates(
                mu0_hat=np.zeros(2), mu1_hat=np.zeros(3), pi_hat=np.full(2, 0.5)
            )

    def test_nonfinite_rejected(self):
        with pytest.raises(DomainError, match="mu1_hat"):
            NuisanceEstimates(
                mu0_hat=np.zeros(2),
                mu1_hat=np.array([np.nan, 0.0]),
                pi_hat=np.full(2, 0.5),
            )


class TestLoadCsv:
    CMAP = ColumnMap(covariates=("x1", "x2"), outcome="y", treatment="w")

    def write(self, tmp_path, text):
        p = tmp_path / "data.csv"
        p.write_text(text)
        return p

    def test_round_trip(self, tmp_path):
        p = self.write(
            tmp_path,
            "x1,x2,y,w\n0.5,-1.0,2.25,1\n-0.5,3.0,0.0,0\n",
        )
        ds = load_csv(p, self.CMAP)
        assert ds.n == 2 and ds.d == 2
        assert ds.X[0, 1] == -1.0
        assert ds.y[0] == 2.25
        assert list(ds.w) == [1, 0]

    def test_column_order_follows_map_not_file(self, tmp_path):
        p = self.write(tmp_path, "y,w,x2,x1\n9.0,0,2.0,1.0\n")
        ds = load_csv(p, self.CMAP)
        assert ds.X[0, 0] == 1.0 and ds.X[0, 1] == 2.0

    def test_no_treatment_column(self, tmp_path):
        p = self.write(tmp_path, "x1,y\n1.0,2.0\n")
        ds = load_csv(p, ColumnMap(covariates=("x1",), outcome="y"))
        assert ds.w is None

    def test_header_only_rejected(self, tmp_path):
        p = self.write(tmp_path, "x1,x2,y,w\n")
        with pytest.raises(SchemaError, match="header only"):
            load_csv(p, self.CMAP)

    def test_empty_file_rejected(self, tmp_path):
        p = self.write(tmp_path, "")
        with pytest.raises(SchemaError, match="empty"):
            load_csv(p, self.CMAP)

    def test_missing_column_named(self, tmp_path):
        p = self.write(tmp_path, "x1,y,w\n1.0,2.0,0\n")
        with pytest.raises(SchemaError, match="'x2'"):
            load_csv(p, self.CMAP)

    def test_bad_cell_located(self, tmp_path):
        p = self.write(
            tmp_path, "x1,x2,y,w\n1.0,2.0,3.0,1\n1.0,oops,3.0,0\n"
        )
        with pytest.raises(ParseError, match=r"row 1, column 'x2'"):
            load_csv(p, self.CMAP)

    def test_nonfinite_cell_rejected(self, tmp_path):
        p = self.write(tmp_path, "x1,x2,y,w\n1.0,nan,3.0,1\n")
        with pytest.raises(DomainError, match="row 0"):
            load_csv(p, self.CMAP)

    def test_treatment_out_of_range_located(self, tmp_path):
        p = self.write(
            tmp_path, "x1,x2,y,w\n1.0,2.0,3.0,1\n1.0,2.0,3.0,2\n"
        )
        with pytest.raises(DomainError, match="row 1"):
            load_csv(p, self.CMAP)

    def test_short_row_rejected(self, tmp_path):
        p = self.write(tmp_path, "x1,x2,y,w\n1.0,2.0\n")
        with pytest.raises(ParseError, match="row 0"):
            load_csv(p, self.CMAP)

    def test_column_map_from_dict(self):
        cm = ColumnMap.from_dict(
            {"covariates": ["a", "b"], "outcome": "y", "treatment": "t"}
        )
        assert cm.covariates == ("a", "b")
        assert cm.treatment == "t"
        with pytest.raises(ConfigError):
            ColumnMap.from_dict({"covariates": ["a"]})
        with pytest.raises(ConfigError):
            ColumnMap.from_dict({"covariates": [], "outcome": "y"})
