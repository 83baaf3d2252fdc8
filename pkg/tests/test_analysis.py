import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from explinfo import analysis
from explinfo.analysis import (
    ScoreRow,
    ScoreTable,
    emit_report,
    explained_variance,
    paired_ttest_bonferroni,
    silhouette,
    spearman,
    student_t_two_sided_p,
)


# --- spearman -------------------------------------------------------------


def test_spearman_textbook_case():
    res = spearman([1, 2, 3, 4], [1, 3, 2, 4])
    assert res.rho == pytest.approx(0.8, abs=1e-12)
    ref = scipy.stats.spearmanr([1, 2, 3, 4], [1, 3, 2, 4])
    assert res.rho == pytest.approx(ref.statistic, abs=1e-9)
    assert res.p == pytest.approx(ref.pvalue, abs=1e-9)


def test_spearman_perfect_monotone():
    up = spearman([1, 2, 3, 4, 5], [10, 20, 30, 40, 50])
    assert up.rho == 1.0
    assert up.p == 0.0
    down = spearman([1, 2, 3, 4, 5], [5, 4, 3, 2, 1])
    assert down.rho == -1.0
    assert down.p == 0.0


def test_spearman_matches_scipy_with_and_without_ties():
    rng = np.random.default_rng(0)
    for trial in range(40):
        n = int(rng.integers(5, 200))
        xs = rng.normal(size=n)
        ys = 0.5 * xs + rng.normal(size=n)
        if trial % 2 == 0:  # force ties
            xs = np.round(xs, 1)
            ys = np.round(ys, 1)
        if min(xs) == max(xs) or min(ys) == max(ys):
            continue
        res = spearman(xs, ys)
        ref = scipy.stats.spearmanr(xs, ys)
        assert res.rho == pytest.approx(ref.statistic, abs=1e-9)
        assert res.p == pytest.approx(ref.pvalue, abs=1e-9)


def test_spearman_constant_input_is_flagged_not_raised():
    res = spearman([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    assert not res.defined
    assert math.isnan(res.rho)
    assert math.isnan(res.p)


def test_spearman_argument_errors():
    with pytest.raises(analysis.AnalysisError):
        spearman([1, 2], [1, 2])
    with pytest.raises(analysis.AnalysisError):
        spearman([1, 2, 3], [1, 2])


@settings(max_examples=60, deadline=None)
@given(
    pairs=st.lists(
        st.tuples(st.integers(-50, 50), st.integers(-50, 50)),
        min_size=3,
        max_size=30,
    )
)
def test_spearman_symmetry_and_monotone_invariance(pairs):
    xs = [float(a) for a, _ in pairs]
    ys = [float(b) for _, b in pairs]
    if min(xs) == max(xs) or min(ys) == max(ys):
        return
    res = spearman(xs, ys)
    swapped = spearman(ys, xs)
    assert res.rho == pytest.approx(swapped.rho, abs=1e-12)
    assert res.p == pytest.approx(swapped.p, abs=1e-12)
    # strictly increasing transforms preserve ranks exactly
    transformed = spearman([math.exp(0.1 * x) for x in xs], ys)
    assert transformed.rho == pytest.approx(res.rho, abs=1e-9)


# --- t distribution -------------------------------------------------------


def test_t_tail_probability_matches_scipy():
    for dof in (1, 2, 5, 30, 199, 1999):
        for t in (0.0, 0.17, 0.5, 1.0, 2.0, 5.0, 10.0):
            ref = 2.0 * scipy.stats.t.sf(abs(t), dof)
            assert student_t_two_sided_p(t, dof) == pytest.approx(ref, abs=1e-9)
            assert student_t_two_sided_p(-t, dof) == pytest.approx(ref, abs=1e-9)


def test_t_tail_probability_edge_cases():
    assert student_t_two_sided_p(0.0, 10) == pytest.approx(1.0, abs=1e-12)
    assert student_t_two_sided_p(float("inf"), 10) == 0.0
    with pytest.raises(analysis.AnalysisError):
        student_t_two_sided_p(1.0, 0)


# --- explained variance ---------------------------------------------------


def test_explained_variance_exact_fit():
    x1 = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    x2 = np.array([0.0, 1.0, 0.0, 1.0, 0.0])
    y = 2.0 + 3.0 * x1 - 1.5 * x2
    ev = explained_variance(y, {"x1": x1, "x2": x2})
    assert ev.r_squared_pct == pytest.approx(100.0, abs=1e-9)
    assert not ev.rank_deficient
    assert ev.n == 5


def test_explained_variance_constant_feature_is_rank_deficient():
    y = np.array([1.0, 2.0, 3.0, 4.0])
    ev = explained_variance(y, {"flat": np.ones(4)})
    assert ev.rank_deficient
    assert ev.r_squared_pct == pytest.approx(0.0, abs=1e-9)


def test_explained_variance_saturated_fit():
    # n = k + 1 is allowed and fits exactly through every point
    y = np.array([3.0, -1.0, 7.0])
    ev = explained_variance(y, {"a": np.array([1.0, 2.0, 4.0]), "b": np.array([0.0, 5.0, 1.0])})
    assert ev.r_squared_pct == pytest.approx(100.0, abs=1e-6)


def test_explained_variance_matches_statsmodels():
    import pandas as pd
    import statsmodels.formula.api as smf
    from statsmodels.stats.anova import anova_lm

    rng = np.random.default_rng(12)
    n = 80
    f1 = rng.normal(size=n)
    f2 = rng.normal(size=n)
    f3 = rng.integers(-2, 3, size=n).astype(float)
    y = 1.0 + 0.8 * f1 - 0.3 * f2 + 0.1 * f3 + rng.normal(scale=0.5, size=n)

    ev = explained_variance(y, {"f1": f1, "f2": f2, "f3": f3})
    df = pd.DataFrame({"y": y, "f1": f1, "f2": f2, "f3": f3})
    fit = smf.ols("y ~ f1 + f2 + f3", data=df).fit()
    assert ev.r_squared_pct == pytest.approx(100.0 * fit.rsquared, abs=1e-9)
    table = anova_lm(fit, typ=2)
    for name in ("f1", "f2", "f3"):
        assert ev.type2_ss[name] == pytest.approx(table.loc[name, "sum_sq"], abs=1e-9)


def test_explained_variance_is_invariant_to_affine_features():
    rng = np.random.default_rng(3)
    f1 = rng.normal(size=30)
    y = 2.0 * f1 + rng.normal(size=30)
    base = explained_variance(y, {"f1": f1})
    scaled = explained_variance(y, {"f1": 100.0 * f1 - 7.0})
    assert scaled.r_squared_pct == pytest.approx(base.r_squared_pct, abs=1e-9)


def test_explained_variance_argument_errors():
    with pytest.raises(analysis.AnalysisError):
        explained_variance(np.ones(3), {})
    with pytest.raises(analysis.AnalysisError):
        explained_variance(np.ones(3), {"a": np.ones(4)})
    with pytest.raises(analysis.AnalysisError):
        explained_variance(np.ones(2), {"a": np.ones(2), "b": np.ones(2)})


# --- paired t-tests -------------------------------------------------------


def test_paired_ttest_identical_samples():
    a = np.array([1.0, 2.0, 3.0])
    res = paired_ttest_bonferroni(a, a.copy(), m=5)
    assert res.t == 0.0
    assert res.raw_p == 1.0
    assert res.adj_p == 1.0
    assert res.dof == 2.0


def test_paired_ttest_matches_scipy_at_survey_scale():
    rng = np.random.default_rng(7)
    n = 2000
    a = rng.normal(size=n)
    b = a + 0.03 + rng.normal(scale=0.5, size=n)
    res = paired_ttest_bonferroni(a, b, m=4)
    ref = scipy.stats.ttest_rel(a, b)
    assert res.dof == 1999.0
    assert res.t == pytest.approx(ref.statistic, abs=1e-9)
    assert res.raw_p == pytest.approx(ref.pvalue, abs=1e-9)
    assert res.adj_p == pytest.approx(min(1.0, 4 * ref.pvalue), abs=1e-9)


def test_paired_ttest_bonferroni_caps_at_one():
    rng = np.random.default_rng(1)
    a = rng.normal(size=50)
    b = a + rng.normal(scale=1.0, size=50)
    res = paired_ttest_bonferroni(a, b, m=1000)
    assert res.adj_p == 1.0


def test_paired_ttest_zero_variance_shift_is_flagged():
    a = np.array([1.0, 2.0, 3.0])
    res = paired_ttest_bonferroni(a, a + 0.5, m=1)
    assert not res.defined
    assert math.isnan(res.t)


def test_welch_variant_matches_scipy():
    rng = np.random.default_rng(9)
    a = rng.normal(loc=0.0, scale=1.0, size=40)
    b = rng.normal(loc=0.4, scale=2.0, size=55)
    res = paired_ttest_bonferroni(a, b, m=2, welch=True)
    ref = scipy.stats.ttest_ind(a, b, equal_var=False)
    assert res.t == pytest.approx(ref.statistic, abs=1e-9)
    assert res.raw_p == pytest.approx(ref.pvalue, abs=1e-9)
    assert res.dof == pytest.approx(ref.df, abs=1e-9)


def test_ttest_argument_errors():
    with pytest.raises(analysis.AnalysisError):
        paired_ttest_bonferroni([1.0, 2.0], [1.0, 2.0, 3.0], m=1)
    with pytest.raises(analysis.AnalysisError):
        paired_ttest_bonferroni([1.0], [1.0], m=1)
    with pytest.raises(analysis.AnalysisError):
        paired_ttest_bonferroni([1.0, 2.0], [1.0, 2.0], m=0)
    with pytest.raises(analysis.AnalysisError):
        paired_ttest_bonferroni([1.0], [1.0, 2.0], m=1, welch=True)


# --- silhouette -----------------------------------------------------------


def test_silhouette_well_separated_clusters():
    rng = np.random.default_rng(0)
    a = rng.normal(loc=0.0, scale=0.1, size=(20, 2))
    b = rng.normal(loc=10.0, scale=0.1, size=(20, 2))
    points = np.vstack([a, b])
    labels = ["a"] * 20 + ["b"] * 20
    assert silhouette(points, labels) > 0.9


def test_silhouette_matches_sklearn():
    from sklearn.metrics import silhouette_score

    rng = np.random.default_rng(5)
    points = np.vstack(
        [
            rng.normal(loc=0.0, size=(15, 3)),
            rng.normal(loc=2.0, size=(12, 3)),
            rng.normal(loc=-1.5, size=(18, 3)),
        ]
    )
    labels = [0] * 15 + [1] * 12 + [2] * 18
    assert silhouette(points, labels) == pytest.approx(
        silhouette_score(points, labels), abs=1e-9
    )


def test_silhouette_singleton_cluster_contributes_zero():
    points = np.array([[0.0], [0.1], [5.0]])
    labels = ["a", "a", "b"]
    s0 = (5.0 - 0.1) / 5.0
    s1 = (4.9 - 0.1) / 4.9
    expected = (s0 + s1 + 0.0) / 3.0
    assert silhouette(points, labels) == pytest.approx(expected, abs=1e-12)


def test_silhouette_argument_errors():
    with pytest.raises(analysis.AnalysisError):
        silhouette(np.zeros((2, 2)), ["a", "b"])
    with pytest.raises(analysis.AnalysisError):
        silhouette(np.zeros((3, 2)), ["a", "a", "a"])
    with pytest.raises(analysis.AnalysisError):
        silhouette(np.zeros((3, 2)), ["a", "b"])
    with pytest.raises(analysis.AnalysisError):
        silhouette(np.zeros(3), ["a", "b", "c"])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(4, 20))
def test_silhouette_stays_in_range(seed, n):
    rng = np.random.default_rng(seed)
    points = rng.normal(size=(n, 2))
    labels = list(rng.integers(0, 3, size=n))
    if len(set(labels)) < 2:
        return
    assert -1.0 <= silhouette(points, labels) <= 1.0


# --- score table ----------------------------------------------------------


def _row(rid, embedding="hash-d64-s0", kind="nle", **kwargs):
    gpt = kwargs.pop("gpt_scores", {})
    return ScoreRow(id=rid, embedding=embedding, kind=kind, label="entailment", gpt_scores=gpt, **kwargs)


def test_score_table_rejects_duplicates_and_unknown_columns():
    table = ScoreTable([_row("a")])
    with pytest.raises(analysis.AnalysisError):
        table.add(_row("a"))
    table.add(_row("a", kind="rationale"))  # different key is fine
    with pytest.raises(analysis.AnalysisError):
        table.rows[0].value("nonexistent_column")


def test_score_table_subsets_and_pairing():
    rows = [
        _row("a", relevance_nats=1.0, informativeness_nats=0.5),
        _row("b", relevance_nats=2.0),  # informativeness missing
        _row("c", kind="rationale", relevance_nats=3.0, informativeness_nats=0.25),
    ]
    table = ScoreTable(rows)
    assert table.kinds() == ["nle", "rationale"]
    assert table.embeddings() == ["hash-d64-s0"]
    assert len(table.subset(kind="nle")) == 2
    paired = table.paired_columns(("relevance_nats", "informativeness_nats"))
    assert [r.id for r, _ in paired] == ["a", "c"]


def test_score_table_roundtrip(tmp_path):
    rows = [
        _row(
            "a",
            relevance_nats=1.2345678901234567,
            informativeness_nats=-0.5,
            type_overlap_ratio=0.25,
            edit_distance_ratio=1.5,
            cosine_similarity=0.125,
            gpt_scores={"coherence": 2, "importance": -1},
        ),
        _row("b", kind="rationale"),
    ]
    path = tmp_path / "score_table.csv"
    analysis.write_score_table(ScoreTable(rows), path)
    loaded = analysis.read_score_table(path)
    assert len(loaded) == 2
    first = loaded.rows[0]
    assert first.relevance_nats == 1.2345678901234567
    assert first.gpt_scores == {"coherence": 2, "importance": -1}
    second = loaded.rows[1]
    assert second.relevance_nats is None
    assert second.gpt_scores == {}


def test_read_score_table_requires_all_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,embedding,kind\n", encoding="utf-8")
    with pytest.raises(analysis.AnalysisError, match="missing columns"):
        analysis.read_score_table(path)


# --- report ---------------------------------------------------------------


def _full_table(n_per_kind=12):
    rng = np.random.default_rng(42)
    table = ScoreTable()
    for kind in ("nle", "rationale"):
        for i in range(n_per_kind):
            gpt = {
                name: int(rng.choice([-2, -1, 1, 2]))
                for name in analysis.GPT_ITEM_NAMES
            }
            table.add(
                ScoreRow(
                    id=f"fx{i:04d}",
                    embedding="hash-d64-s0",
                    kind=kind,
                    label=["entailment", "neutral", "contradiction"][i % 3],
                    relevance_nats=float(rng.normal(loc=1.0, scale=0.4)),
                    informativeness_nats=float(rng.normal(loc=0.3, scale=0.2)),
                    type_overlap_ratio=float(rng.uniform()),
                    edit_distance_ratio=float(rng.uniform(0, 1.5)),
                    cosine_similarity=float(rng.uniform(-1, 1)),
                    gpt_scores=gpt,
                )
            )
    return table


def test_emit_report_writes_the_expected_files(tmp_path):
    table = _full_table()
    report = emit_report(table, tmp_path / "report", run_info={"seed": 1}, k_extremes=3)

    out = tmp_path / "report"
    for name in (
        "summary.csv",
        "correlations_nle.csv",
        "correlations_rationale.csv",
        "scatter_hash-d64-s0_nle.csv",
        "scatter_hash-d64-s0_nle.svg",
        "scatter_hash-d64-s0_rationale.csv",
        "scatter_hash-d64-s0_rationale.svg",
        "tests.csv",
        "anova.csv",
        "extremes.csv",
        "manifest.json",
    ):
        assert (out / name).exists(), name

    first_line = (out / "summary.csv").read_text(encoding="utf-8").splitlines()[0]
    assert first_line == analysis.SUMMARY_CAPTION

    # the summary mean agrees with a direct computation
    nle = [r.relevance_nats for r in table.subset(kind="nle").rows]
    entry = next(e for e in report.summary if e["kind"] == "nle")
    assert entry["relevance_nats_mean"] == pytest.approx(np.mean(nle), abs=1e-9)
    assert entry["n"] == 12

    # one embedding, two kinds, two columns -> two paired comparisons
    assert len(report.tests) == 2
    for _, _, kind_a, kind_b, res in report.tests:
        assert {kind_a, kind_b} == {"nle", "rationale"}
        assert res.n == 12
        assert res.dof == 11.0

    # extremes: top and bottom 3 for each of the two scores
    assert len(report.extremes) == 12
    lines = (out / "extremes.csv").read_text(encoding="utf-8").strip().splitlines()
    assert len(lines) == 13

    # every category appears in the anova output
    categories = {cat for _, cat, _ in report.anova}
    assert categories == set(analysis.ANOVA_CATEGORIES)


def test_emit_report_is_deterministic(tmp_path):
    import hashlib

    table = _full_table()
    emit_report(table, tmp_path / "one", run_info={"seed": 1})
    emit_report(table, tmp_path / "two", run_info={"seed": 1})
    names = sorted(p.name for p in (tmp_path / "one").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "two").iterdir())
    for name in names:
        d1 = hashlib.sha256((tmp_path / "one" / name).read_bytes()).hexdigest()
        d2 = hashlib.sha256((tmp_path / "two" / name).read_bytes()).hexdigest()
        assert d1 == d2, name


def test_emit_report_rejects_empty_tables(tmp_path):
    with pytest.raises(analysis.AnalysisError):
        emit_report(ScoreTable(), tmp_path / "report")


def test_anova_category_feature_map():
    assert analysis.ANOVA_CATEGORIES["lexical_semantic"] == ("edit_distance_ratio", "cosine_similarity")
    assert analysis.ANOVA_CATEGORIES["discourse"] == ("clarity4student", "clarity4graduate")
    assert analysis.ANOVA_TARGETS == ("relevance_nats", "informativeness_nats")
    flat = [f for feats in analysis.ANOVA_CATEGORIES.values() for f in feats]
    assert set(flat) <= set(analysis.NUMERIC_COLUMNS)
