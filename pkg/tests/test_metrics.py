import csv
import importlib
import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metric_oracles import (
    coverage_oracle,
    dcr_oracle,
    fidelity_oracle,
    ks_oracle,
    make_table,
    random_table,
    tvd_oracle,
)
from tabfed.errors import ConfigurationError
from tabfed.metrics import (
    ColumnFidelity,
    RowFidelity,
    column_fidelity,
    coverage,
    evaluate,
    fidelity,
    heatmap_eval,
    kss,
    privacy_dcr,
    range_coverage,
    row_fidelity,
    tvd,
    utility,
    write_heatmap_csv,
)

fidelity_module = importlib.import_module("tabfed.metrics.fidelity")

NUM = "numeric"
CAT = "categorical"

# (kinds, real, synth) triples of at most 6 rows and 3 columns
HAND_CORPUS = [
    ({"a": NUM}, {"a": [1, 2, 3, 4]}, {"a": [3, 4, 5, 6]}),
    ({"a": NUM, "b": NUM}, {"a": [0, 1, 2, 3, 4], "b": [0, 2, 1, 4, 3]},
     {"a": [0, 1, 1, 5, 4], "b": [3, 2, 1, 0, -1]}),
    ({"a": NUM, "b": NUM, "c": NUM}, {"a": [1, 2, 3], "b": [3, 1, 2], "c": [0.5, 0.1, 0.9]},
     {"a": [2, 2, 3, 9], "b": [1, 1, 0, 0.5], "c": [0.2, 0.3, 0.4, 0.5]}),
    ({"k": CAT}, {"k": ["A", "A", "B", "B"]}, {"k": ["A", "A", "A", "B"]}),
    ({"k": CAT, "m": CAT}, {"k": ["a", "a", "b", "b"], "m": ["x", "x", "y", "y"]},
     {"k": ["a", "b", "a", "b"], "m": ["x", "y", "y", "x"]}),
    ({"a": NUM, "k": CAT}, {"a": [0.0, 10.0, 5.0, 2.0], "k": ["A", "B", "C", "D"]},
     {"a": [2.5, 7.5, 5.0], "k": ["A", "B", "A"]}),
    ({"a": NUM, "b": NUM, "k": CAT}, {"a": [1, 4, 2, 8, 5, 7], "b": [1, 2, 3, 4, 5, 6], "k": list("xyzxyz")},
     {"a": [0, 3, 6, 9, 12, 15], "b": [6, 5, 4, 3, 2, 1], "k": list("xxxxyw")}),
    ({"a": NUM, "k": CAT, "m": CAT}, {"a": [0.3, -1.2, 4.4, 2.0, 0.0], "k": list("ppqqp"), "m": list("uvuvu")},
     {"a": [-5.0, 0.5, 1.5], "k": list("pqq"), "m": list("vvu")}),
    ({"a": NUM}, {"a": [0.0]}, {"a": [3.0, 4.0, 5.0]}),
]


def corpus_tables(entry):
    kinds, real, synth = entry
    return make_table(kinds, real), make_table(kinds, synth).with_vocab_of(make_table(kinds, real))


# kss and tvd

def test_kss_examples():
    assert kss([1, 2, 3], [1, 2, 3]) == 0.0
    assert kss([0, 0], [1, 1]) == 1.0
    assert kss([1, 2, 3, 4], [3, 4, 5, 6]) == 0.5


def test_tvd_examples():
    assert tvd(["A", "B"], ["B", "A"]) == 0.0
    assert tvd(["A"] * 3, ["B"] * 5) == 2.0
    assert tvd(["A", "B"], ["A", "A", "A", "B"]) == 0.5


@pytest.mark.parametrize("fn", [kss, tvd])
def test_empty_inputs_rejected(fn):
    with pytest.raises(ConfigurationError):
        fn([], [1])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=12), st.lists(st.integers(-5, 5), min_size=1, max_size=12))
def test_kss_symmetric_bounded_and_matches_oracle(a, b):
    assert kss(a, b) == kss(b, a)
    assert 0.0 <= kss(a, b) <= 1.0
    assert abs(kss(a, b) - ks_oracle(a, b)) < 1e-12


cat_lists = st.lists(st.sampled_from("ABCD"), min_size=1, max_size=12)


@settings(max_examples=60, deadline=None)
@given(cat_lists, cat_lists, cat_lists)
def test_tvd_is_a_distance(a, b, c):
    assert abs(tvd(a, b) - tvd(b, a)) < 1e-15
    assert 0.0 <= tvd(a, b) <= 2.0 + 1e-15
    assert tvd(a, c) <= tvd(a, b) + tvd(b, c) + 1e-12
    assert abs(tvd(a, b) - tvd_oracle(a, b)) < 1e-12


# fidelity

def test_column_fidelity_examples():
    kinds = {"k": CAT}
    real = make_table(kinds, {"k": ["A", "B"]})
    synth = make_table(kinds, {"k": ["A", "A", "A", "B"]}).with_vocab_of(real)
    assert column_fidelity(real, synth).mean == 0.75
    kinds = {"a": NUM, "k": CAT}
    real = make_table(kinds, {"a": [1, 2, 3, 4], "k": ["A"] * 4})
    synth = make_table(kinds, {"a": [3, 4, 5, 6], "k": ["B"] * 4}).with_vocab_of(real)
    col = column_fidelity(real, synth)
    assert col.scores == {"a": 0.5, "k": 0.0}
    assert col.mean == 0.25


def test_row_fidelity_opposite_correlations_score_zero():
    kinds = {"a": NUM, "b": NUM}
    real = make_table(kinds, {"a": [1, 2, 3], "b": [2, 4, 6]})
    synth = make_table(kinds, {"a": [1, 2, 3], "b": [6, 4, 2]})
    assert row_fidelity(real, synth).mean == pytest.approx(0.0, abs=1e-15)


def test_row_fidelity_binary_joint_example():
    kinds = {"k": CAT, "m": CAT}
    real = make_table(kinds, {"k": ["0", "1"] * 2, "m": ["0", "1"] * 2})
    synth = make_table(kinds, {"k": ["0", "0", "1", "1"], "m": ["0", "1", "0", "1"]}).with_vocab_of(real)
    assert row_fidelity(real, synth).mean == 0.5


def test_row_fidelity_excludes_mixed_and_skips_constant_pairs():
    kinds = {"a": NUM, "b": NUM, "k": CAT}
    real = make_table(kinds, {"a": [1, 2, 3], "b": [5, 5, 5], "k": list("xyx")})
    with pytest.warns(RuntimeWarning, match="undefined"):
        row = row_fidelity(real, real)
    assert row.excluded_pairs == 2
    assert row.skipped_pairs == [("a", "b")]
    assert math.isnan(row.mean)
    with pytest.warns(RuntimeWarning):
        assert fidelity(real, real).score == 1.0


def test_fidelity_combines_column_and_row_means(monkeypatch):
    monkeypatch.setattr(fidelity_module, "column_fidelity", lambda r, s: ColumnFidelity({}, 0.8))
    monkeypatch.setattr(fidelity_module, "row_fidelity", lambda r, s: RowFidelity({}, 0.6))
    assert fidelity_module.fidelity(None, None).score == pytest.approx(0.7, abs=1e-15)


def test_schema_mismatch_rejected():
    a = make_table({"a": NUM}, {"a": [1.0]})
    b = make_table({"b": NUM}, {"b": [1.0]})
    for fn in (fidelity, coverage, privacy_dcr):
        with pytest.raises(ConfigurationError):
            fn(a, b)


@pytest.mark.parametrize("entry", HAND_CORPUS, ids=range(len(HAND_CORPUS)))
def test_fidelity_and_coverage_match_oracles(entry):
    kinds, real_cols, synth_cols = entry
    real, synth = corpus_tables(entry)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        score = fidelity(real, synth).score
    assert abs(score - fidelity_oracle(real_cols, synth_cols, kinds)) < 1e-12
    assert abs(coverage(real, synth).score - coverage_oracle(real_cols, synth_cols, kinds)) < 1e-12


@pytest.mark.parametrize("entry", HAND_CORPUS, ids=range(len(HAND_CORPUS)))
def test_dcr_matches_oracle(entry):
    kinds, real_cols, synth_cols = entry
    real, synth = corpus_tables(entry)
    assert abs(privacy_dcr(real, synth).median - dcr_oracle(real_cols, synth_cols, kinds)) < 1e-12


# coverage

def test_coverage_examples():
    assert range_coverage([0, 10], [-1, 11]) == (1.0, False)
    assert range_coverage([0, 10], [2.5, 7.5]) == (0.5, False)
    assert range_coverage([0, 10], [20, 30]) == (0.0, False)
    kinds = {"k": CAT}
    real = make_table(kinds, {"k": list("ABCD")})
    synth = make_table(kinds, {"k": list("AB")}).with_vocab_of(real)
    assert coverage(real, synth).score == 0.5


def test_coverage_degenerate_range_flagged():
    kinds = {"a": NUM}
    real = make_table(kinds, {"a": [2.0, 2.0]})
    hit = coverage(real, make_table(kinds, {"a": [1.0, 2.0]}))
    miss = coverage(real, make_table(kinds, {"a": [1.0, 3.0]}))
    assert hit.score == 1.0 and miss.score == 0.0
    assert hit.degenerate_columns == ["a"]


# privacy

def test_dcr_examples():
    kinds = {"a": NUM}
    assert privacy_dcr(make_table(kinds, {"a": [0.0]}), make_table(kinds, {"a": [3.0, 4.0, 5.0]})).median == 4.0
    kinds = {"k": CAT}
    real = make_table(kinds, {"k": ["A"]})
    synth = make_table(kinds, {"k": ["B"]}).with_vocab_of(real)
    assert privacy_dcr(real, synth).median == pytest.approx(math.sqrt(2), abs=1e-15)
    table = make_table({"a": NUM, "k": CAT}, {"a": [0.1, 0.5, 0.2], "k": list("xyz")})
    assert privacy_dcr(table, table).median == 0.0


def test_dcr_subsampling_is_seeded_and_reported():
    rng = np.random.default_rng(0)
    kinds, cols = random_table(rng, 50, 2, 1)
    real = make_table(kinds, cols)
    kinds, cols = random_table(rng, 40, 2, 1)
    synth = make_table(kinds, cols).with_vocab_of(real)
    full = privacy_dcr(real, synth)
    assert not full.subsampled and full.n_synthetic_used == 40
    small = privacy_dcr(real, synth, max_pairs=1000, seed=3)
    assert small.subsampled and small.n_synthetic_used == 20
    assert small.median == privacy_dcr(real, synth, max_pairs=1000, seed=3).median


# self-comparison identities and bounds

@pytest.mark.parametrize("seed", range(50))
def test_table_against_itself(seed):
    rng = np.random.default_rng(seed)
    kinds, cols = random_table(rng, int(rng.integers(3, 40)), int(rng.integers(1, 4)), int(rng.integers(0, 3)))
    table = make_table(kinds, cols)
    assert fidelity(table, table).score == 1.0
    assert coverage(table, table).score == 1.0
    assert privacy_dcr(table, table).median == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 30), st.integers(1, 30), st.integers(0, 3), st.integers(0, 2))
def test_metrics_stay_in_range(seed, n_real, n_synth, n_num, n_cat):
    if n_num + n_cat == 0:
        n_num = 1
    rng = np.random.default_rng(seed)
    kinds, rc = random_table(rng, n_real, n_num, n_cat)
    _, sc = random_table(rng, n_synth, n_num, n_cat, n_levels=4)
    real = make_table(kinds, rc)
    synth = make_table(kinds, sc).with_vocab_of(real)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        f = fidelity(real, synth)
    assert 0.0 <= f.score <= 1.0
    assert 0.0 <= coverage(real, synth).score <= 1.0
    assert privacy_dcr(real, synth).median >= 0.0


# utility

def separable_table(n, rng):
    x = rng.uniform(-1, 1, n)
    labels = np.where(x > 0, "pos", "neg")
    return make_table({"x": NUM, "noise": NUM, "y": CAT},
                      {"x": x, "noise": rng.normal(size=n), "y": labels.tolist()})


def test_utility_on_separable_leakage_case():
    table = separable_table(400, np.random.default_rng(0))
    report = utility(table, table, "y", seed=0)
    assert report.score >= 0.95
    assert set(report.accuracies) == {"logistic_regression", "decision_tree", "random_forest",
                                      "adaboost_stumps", "naive_bayes"}


def test_utility_constant_test_label():
    rng = np.random.default_rng(1)
    kinds = {"x": NUM, "k": CAT, "y": CAT}
    train = make_table(kinds, {"x": rng.normal(size=30), "k": list("ab" * 15), "y": ["one"] * 30})
    test = make_table(kinds, {"x": rng.normal(size=10), "k": list("ab" * 5), "y": ["one"] * 10})
    with pytest.warns(RuntimeWarning, match="single class"):
        report = utility(train, test, "y")
    assert report.score == 1.0 and report.warnings


def test_utility_random_labels_near_chance():
    rng = np.random.default_rng(2)
    n = 1000
    kinds = {"x": NUM, "z": NUM, "y": CAT}
    test = make_table(kinds, {"x": rng.normal(size=n), "z": rng.normal(size=n), "y": ["a", "b"] * (n // 2)})
    train = make_table(kinds, {"x": rng.normal(size=n), "z": rng.normal(size=n),
                               "y": rng.choice(["a", "b"], n).tolist()}).with_vocab_of(test)
    assert abs(utility(train, test, "y", seed=0).score - 0.5) < 0.1


def test_utility_invariant_to_row_order():
    rng = np.random.default_rng(3)
    kinds = {"x": NUM, "k": CAT, "y": CAT}
    n = 120
    cols = {"x": rng.normal(size=n), "k": rng.choice(list("pqr"), n).tolist(),
            "y": rng.choice(["u", "v", "w"], n).tolist()}
    train = make_table(kinds, cols)
    test = make_table(kinds, {k: (v[:60] if k != "x" else v[:60] + 0.1) for k, v in cols.items()})
    base = utility(train, test, "y", seed=4).accuracies
    p, q = rng.permutation(n), rng.permutation(60)
    shuffled = utility(train.subset(p), test.subset(q), "y", seed=4).accuracies
    assert shuffled == base


def test_utility_rejects_numeric_label():
    table = separable_table(10, np.random.default_rng(0))
    with pytest.raises(ConfigurationError):
        utility(table, table, "x")


# report and heatmap

def toy_pair(seed=0):
    rng = np.random.default_rng(seed)
    kinds = {"a": NUM, "b": NUM, "y": CAT}
    real = make_table(kinds, {"a": rng.normal(size=40), "b": rng.normal(size=40), "y": rng.choice(list("st"), 40).tolist()})
    synth = make_table(kinds, {"a": rng.normal(size=30), "b": rng.normal(size=30), "y": rng.choice(list("st"), 30).tolist()})
    return real, synth


def test_evaluate_self_and_utility_toggle():
    real, _ = toy_pair()
    report = evaluate(real, real, label_column="y")
    assert (report.fidelity, report.coverage, report.privacy_dcr) == (1.0, 1.0, 0.0)
    assert "utility" in json.loads(report.to_json())
    off = json.loads(evaluate(real, real, with_utility=False).to_json())
    assert "utility" not in off
    assert {"fidelity", "column_fidelity", "row_fidelity", "coverage", "privacy_dcr"} <= set(off)


def test_evaluate_matches_individual_metrics():
    real, synth = toy_pair(1)
    report = evaluate(real, synth, label_column="y", seed=2)
    synth = synth.with_vocab_of(real)
    assert report.fidelity == fidelity(real, synth).score
    assert report.coverage == coverage(real, synth).score
    assert report.privacy_dcr == privacy_dcr(real, synth).median
    assert report.utility == utility(synth, real, "y", seed=2).score
    assert "fidelity" in report.table_row()


def test_heatmap_identical_models_give_constant_columns(tmp_path):
    real, synth = toy_pair(2)
    subsets = [real.subset(np.arange(0, 20)), real.subset(np.arange(20, 40))]
    grid = heatmap_eval([synth, synth, synth], subsets)
    for name, matrix in grid.items():
        assert matrix.shape == (3, 2)
        assert np.all(matrix == matrix[0]), name
    path = tmp_path / "fid.csv"
    write_heatmap_csv(path, grid["fidelity"], ["m1", "m2", "m3"], ["D1", "D2"])
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["model", "D1", "D2"] and len(rows) == 4
    assert float(rows[1][1]) == grid["fidelity"][0, 0]


def test_heatmap_single_cell():
    real, synth = toy_pair(3)
    grid = heatmap_eval([synth], [real], metrics=("fidelity",))
    assert grid["fidelity"].shape == (1, 1)
