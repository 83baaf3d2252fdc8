"""Statistical machinery over the joined score table.

Everything downstream of estimation lives here: Spearman correlations
with t-approximated p-values, per-category explained variance (type-2
ANOVA on OLS fits), paired two-tailed t-tests with Bonferroni
correction, Silhouette coefficients on the relevance-informativeness
plane, and the report files. All computations are deterministic given
the table; p-values use a continued-fraction incomplete beta accurate to
about 1e-10 for the dof ranges involved.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from explinfo.gptscore import EVALUATION_ITEMS

GPT_ITEM_NAMES = tuple(item.name for item in EVALUATION_ITEMS)

CORE_NUMERIC_COLUMNS = (
    "relevance_nats",
    "informativeness_nats",
    "type_overlap_ratio",
    "edit_distance_ratio",
    "cosine_similarity",
)

NUMERIC_COLUMNS = CORE_NUMERIC_COLUMNS + GPT_ITEM_NAMES

# The per-category explained-variance models: each target column is
# regressed on one category's features (plus intercept). The two-feature
# lexical-semantic model is the headline one; the three-feature variant
# adding type overlap is emitted alongside under its own label.
ANOVA_CATEGORIES = {
    "lexical_semantic": ("edit_distance_ratio", "cosine_similarity"),
    "lexical_semantic_with_overlap": ("type_overlap_ratio", "edit_distance_ratio", "cosine_similarity"),
    "reasoning": ("informativeness", "causal_support", "convincingness", "coherence"),
    "discourse": ("clarity4student", "clarity4graduate"),
    "relevance": ("label_relevance", "input_relevance", "importance"),
}

ANOVA_TARGETS = ("relevance_nats", "informativeness_nats")


class AnalysisError(ValueError):
    pass


@dataclass
class ScoreRow:
    id: str
    embedding: str
    kind: str
    label: str
    relevance_nats: float | None = None
    informativeness_nats: float | None = None
    type_overlap_ratio: float | None = None
    edit_distance_ratio: float | None = None
    cosine_similarity: float | None = None
    gpt_scores: dict = field(default_factory=dict)

    def value(self, column: str):
        if column in CORE_NUMERIC_COLUMNS:
            return getattr(self, column)
        if column in GPT_ITEM_NAMES:
            return self.gpt_scores.get(column)
        raise AnalysisError(f"unknown column {column!r}")


class ScoreTable:
    """Rows keyed by (id, embedding, kind); missing values are explicit
    Nones, never silently absent columns."""

    def __init__(self, rows=()):
        self.rows: list = []
        self._keys: set = set()
        for row in rows:
            self.add(row)

    def add(self, row: ScoreRow):
        key = (row.id, row.embedding, row.kind)
        if key in self._keys:
            raise AnalysisError(f"duplicate row for {key}")
        self._keys.add(key)
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def subset(self, embedding=None, kind=None) -> "ScoreTable":
        picked = [
            r
            for r in self.rows
            if (embedding is None or r.embedding == embedding) and (kind is None or r.kind == kind)
        ]
        return ScoreTable(picked)

    def embeddings(self) -> list:
        return sorted({r.embedding for r in self.rows})

    def kinds(self) -> list:
        return sorted({r.kind for r in self.rows})

    def paired_columns(self, columns) -> list:
        """Rows where every requested column is present, in table order."""
        out = []
        for r in self.rows:
            values = [r.value(c) for c in columns]
            if all(v is not None for v in values):
                out.append((r, values))
        return out


_CSV_FIELDS = ("id", "embedding", "kind", "label") + NUMERIC_COLUMNS


def write_score_table(table: ScoreTable, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_FIELDS)
        for r in table.rows:
            cells = [r.id, r.embedding, r.kind, r.label]
            for col in NUMERIC_COLUMNS:
                v = r.value(col)
                if v is None:
                    cells.append("")
                elif col in GPT_ITEM_NAMES:
                    cells.append(str(int(v)))
                else:
                    cells.append(repr(float(v)))
            writer.writerow(cells)


def read_score_table(path) -> ScoreTable:
    table = ScoreTable()
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(_CSV_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise AnalysisError(f"{path}: missing columns {sorted(missing)}")
        for rec in reader:
            row = ScoreRow(id=rec["id"], embedding=rec["embedding"], kind=rec["kind"], label=rec["label"])
            for col in CORE_NUMERIC_COLUMNS:
                if rec[col] != "":
                    setattr(row, col, float(rec[col]))
            for col in GPT_ITEM_NAMES:
                if rec[col] != "":
                    row.gpt_scores[col] = int(rec[col])
            table.add(row)
    return table


# --- rank statistics ------------------------------------------------------


def _ranks(values) -> list:
    """1-based ranks with ties sharing their average rank."""
    n = len(values)
    order = sorted(range(n), key=lambda i: values[i])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    return ranks


def _pearson(xs, ys) -> float:
    n = len(xs)
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    syy = math.fsum((y - my) ** 2 for y in ys)
    return sxy / math.sqrt(sxx * syy)


@dataclass(frozen=True)
class SpearmanResult:
    rho: float
    p: float
    n: int
    defined: bool = True


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    max_iter, eps, tiny = 300, 3e-16, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def _betai(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, dof: float) -> float:
    """P(|T| >= |t|) for Student's t with the given degrees of freedom."""
    if dof <= 0:
        raise AnalysisError("degrees of freedom must be positive")
    if not math.isfinite(t):
        return 0.0
    return _betai(dof / 2.0, 0.5, dof / (dof + t * t))


def spearman(xs, ys) -> SpearmanResult:
    """Rank correlation with average ranks for ties; the p-value comes
    from the t-approximation with n - 2 degrees of freedom. Constant
    input leaves rho undefined, flagged rather than raised."""
    xs = list(xs)
    ys = list(ys)
    if len(xs) != len(ys):
        raise AnalysisError(f"length mismatch: {len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 3:
        raise AnalysisError("need at least 3 pairs")
    if min(xs) == max(xs) or min(ys) == max(ys):
        return SpearmanResult(rho=float("nan"), p=float("nan"), n=n, defined=False)
    rho = _pearson(_ranks(xs), _ranks(ys))
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) == 1.0:
        return SpearmanResult(rho=rho, p=0.0, n=n)
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return SpearmanResult(rho=rho, p=student_t_two_sided_p(t, n - 2), n=n)


# --- explained variance ---------------------------------------------------


@dataclass
class ExplainedVariance:
    r_squared_pct: float
    type2_ss: dict
    n: int
    rank_deficient: bool = False


def _residual_ss(design: np.ndarray, target: np.ndarray) -> float:
    coef, _, _, _ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ coef
    return float(resid @ resid)


def explained_variance(target, features: dict) -> ExplainedVariance:
    """OLS of the target on the features plus intercept, reported as
    100*R-squared, with per-term type-2 sums of squares (the residual-SS
    increase when the term is dropped).

    Rank deficiency is flagged, and the percentage still comes from the
    least-squares pseudo-solution.
    """
    names = list(features)
    if not names:
        raise AnalysisError("at least one feature required")
    y = np.asarray(target, dtype=np.float64)
    cols = [np.asarray(features[name], dtype=np.float64) for name in names]
    n = y.shape[0]
    if any(c.shape[0] != n for c in cols):
        raise AnalysisError("feature columns must match the target length")
    if n < len(names) + 1:
        raise AnalysisError(f"{n} rows cannot support {len(names)} features plus intercept")
    design = np.column_stack([np.ones(n)] + cols)
    rank_deficient = np.linalg.matrix_rank(design) < design.shape[1]
    ss_full = _residual_ss(design, y)
    mean = y.mean()
    ss_total = float((y - mean) @ (y - mean))
    if ss_total == 0.0:
        pct = 100.0 if ss_full <= 1e-24 else 0.0
    else:
        pct = 100.0 * (1.0 - ss_full / ss_total)
    type2 = {}
    for i, name in enumerate(names):
        reduced = np.delete(design, i + 1, axis=1)
        type2[name] = _residual_ss(reduced, y) - ss_full
    return ExplainedVariance(r_squared_pct=pct, type2_ss=type2, n=n, rank_deficient=rank_deficient)


# --- paired tests ---------------------------------------------------------


@dataclass(frozen=True)
class TTestResult:
    t: float
    dof: float
    raw_p: float
    adj_p: float
    n: int
    defined: bool = True


def paired_ttest_bonferroni(a, b, m: int, welch: bool = False) -> TTestResult:
    """Two-tailed t-test on paired samples with Bonferroni adjustment.

    The paired test uses the differences with dof = n - 1 (2000 pairs
    give the dof of 1999 seen in practice); ``welch`` switches to the
    unpaired unequal-variance form. Identical samples give t = 0, p = 1;
    zero-variance differences with a nonzero mean leave t undefined,
    which is flagged.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if m < 1:
        raise AnalysisError("comparison count must be at least 1")
    if welch:
        if a.size < 2 or b.size < 2:
            raise AnalysisError("need at least 2 samples per group")
        va, vb = a.var(ddof=1), b.var(ddof=1)
        na, nb = a.size, b.size
        denom = math.sqrt(va / na + vb / nb)
        if denom == 0.0:
            if a.mean() == b.mean():
                return TTestResult(t=0.0, dof=float(na + nb - 2), raw_p=1.0, adj_p=1.0, n=min(na, nb))
            return TTestResult(
                t=float("nan"), dof=float("nan"), raw_p=float("nan"), adj_p=float("nan"), n=min(na, nb), defined=False
            )
        t = (a.mean() - b.mean()) / denom
        dof = (va / na + vb / nb) ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
        n = min(na, nb)
    else:
        if a.size != b.size:
            raise AnalysisError(f"paired samples differ in length: {a.size} vs {b.size}")
        if a.size < 2:
            raise AnalysisError("need at least 2 pairs")
        d = a - b
        n = d.size
        sd = d.std(ddof=1)
        dof = float(n - 1)
        if sd == 0.0:
            if d.mean() == 0.0:
                return TTestResult(t=0.0, dof=dof, raw_p=1.0, adj_p=1.0, n=n)
            return TTestResult(t=float("nan"), dof=dof, raw_p=float("nan"), adj_p=float("nan"), n=n, defined=False)
        t = d.mean() / (sd / math.sqrt(n))
    raw_p = student_t_two_sided_p(float(t), dof)
    return TTestResult(t=float(t), dof=dof, raw_p=raw_p, adj_p=min(1.0, m * raw_p), n=int(n))


# --- silhouette -----------------------------------------------------------


def silhouette(points, labels) -> float:
    """Mean silhouette with Euclidean distance; points whose cluster is a
    singleton contribute 0."""
    pts = np.asarray(points, dtype=np.float64)
    labels = list(labels)
    if pts.ndim != 2:
        raise AnalysisError("points must be a 2-d array")
    n = pts.shape[0]
    if n != len(labels):
        raise AnalysisError("one label per point required")
    if n < 3:
        raise AnalysisError("need at least 3 points")
    clusters: dict = {}
    for i, lab in enumerate(labels):
        clusters.setdefault(lab, []).append(i)
    if len(clusters) < 2:
        raise AnalysisError("need at least 2 clusters")
    diffs = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diffs**2).sum(axis=2))
    scores = []
    for i, lab in enumerate(labels):
        own = clusters[lab]
        if len(own) == 1:
            scores.append(0.0)
            continue
        a = dist[i, own].sum() / (len(own) - 1)
        b = min(dist[i, members].mean() for other, members in clusters.items() if other != lab)
        denom = max(a, b)
        scores.append(0.0 if denom == 0.0 else (b - a) / denom)
    return float(np.mean(scores))


# --- report ---------------------------------------------------------------

SUMMARY_CAPTION = "Estimated relevance and informativeness (in nats)"


@dataclass
class AnalysisReport:
    summary: list = field(default_factory=list)
    correlations: dict = field(default_factory=dict)
    anova: list = field(default_factory=list)
    tests: list = field(default_factory=list)
    silhouettes: dict = field(default_factory=dict)
    extremes: list = field(default_factory=list)


def _mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return None, None
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _svg_scatter(rows, title: str) -> str:
    """Minimal self-contained scatter of the two information scores,
    colored by label class. Text output is deterministic."""
    width, height, margin = 640, 480, 60
    xs = [r.relevance_nats for r in rows]
    ys = [r.informativeness_nats for r in rows]
    labels = sorted({r.label for r in rows})
    palette = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"]
    color = {lab: palette[i % len(palette)] for i, lab in enumerate(labels)}

    def span(values):
        lo, hi = min(values), max(values)
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        pad = 0.05 * (hi - lo)
        return lo - pad, hi + pad

    x0, x1 = span(xs)
    y0, y1 = span(ys)

    def sx(v):
        return margin + (v - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(v):
        return height - margin - (v - y0) / (y1 - y0) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 16}" text-anchor="middle" font-size="12">relevance (nats)</text>',
        f'<text x="18" y="{height / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 18 {height / 2:.1f})">informativeness (nats)</text>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = x0 + frac * (x1 - x0)
        yv = y0 + frac * (y1 - y0)
        parts.append(
            f'<text x="{sx(xv):.1f}" y="{height - margin + 16}" text-anchor="middle" font-size="10">{xv:.3g}</text>'
        )
        parts.append(
            f'<text x="{margin - 6}" y="{sy(yv):.1f}" text-anchor="end" font-size="10">{yv:.3g}</text>'
        )
    for r in rows:
        parts.append(
            f'<circle cx="{sx(r.relevance_nats):.2f}" cy="{sy(r.informativeness_nats):.2f}" r="3" '
            f'fill="{color[r.label]}" fill-opacity="0.7"/>'
        )
    for i, lab in enumerate(labels):
        y = margin + 14 * i
        parts.append(f'<circle cx="{width - margin - 90}" cy="{y}" r="4" fill="{color[lab]}"/>')
        parts.append(f'<text x="{width - margin - 80}" y="{y + 4}" font-size="11">{lab}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_report(table: ScoreTable, out_dir, run_info: dict | None = None, k_extremes: int = 5) -> AnalysisReport:
    """Write the report directory and return the assembled results.

    Files: summary.csv (means/stdevs per embedding x kind, captioned),
    correlations_<kind>.csv (all column pairs with rho and p),
    scatter_<embedding>_<kind>.csv/.svg, tests.csv (paired comparisons
    across kinds), anova.csv (per-category explained variance with
    type-2 sums of squares), extremes.csv (top/bottom instances per
    score), and manifest.json digesting every file written.
    """
    if not table.rows:
        raise AnalysisError("empty score table")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = AnalysisReport()
    written: list = []

    # summary.csv — Table-2/Table-8 shaped rows plus a silhouette column.
    summary_path = out_dir / "summary.csv"
    with summary_path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(SUMMARY_CAPTION + "\n")
        writer = csv.writer(fh)
        header = ["embedding", "kind", "n"]
        for col in NUMERIC_COLUMNS:
            header += [f"{col}_mean", f"{col}_std"]
        header.append("silhouette")
        writer.writerow(header)
        for embedding in table.embeddings():
            for kind in table.kinds():
                sub = table.subset(embedding=embedding, kind=kind)
                if not sub.rows:
                    continue
                cells = [embedding, kind, len(sub)]
                entry = {"embedding": embedding, "kind": kind, "n": len(sub)}
                for col in NUMERIC_COLUMNS:
                    values = [r.value(col) for r in sub.rows if r.value(col) is not None]
                    mean, std = _mean_std(values)
                    entry[f"{col}_mean"], entry[f"{col}_std"] = mean, std
                    cells += [_fmt(mean), _fmt(std)]
                sil = None
                paired = sub.paired_columns(("relevance_nats", "informativeness_nats"))
                pts = [(v[0], v[1]) for _, v in paired]
                labs = [r.label for r, _ in paired]
                if len(pts) >= 3 and len(set(labs)) >= 2:
                    sil = silhouette(pts, labs)
                report.silhouettes[(embedding, kind)] = sil
                entry["silhouette"] = sil
                cells.append(_fmt(sil))
                writer.writerow(cells)
                report.summary.append(entry)
    written.append(summary_path)

    # correlations_<kind>.csv — every ordered column pair with rho and p.
    for kind in table.kinds():
        sub = table.subset(kind=kind)
        path = out_dir / f"correlations_{kind}.csv"
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["column_a", "column_b", "n", "rho", "p", "defined"])
            for col_a in NUMERIC_COLUMNS:
                for col_b in NUMERIC_COLUMNS:
                    paired = sub.paired_columns((col_a, col_b))
                    if len(paired) < 3:
                        writer.writerow([col_a, col_b, len(paired), "", "", "false"])
                        continue
                    xs = [v[0] for _, v in paired]
                    ys = [v[1] for _, v in paired]
                    res = spearman(xs, ys)
                    report.correlations[(kind, col_a, col_b)] = res
                    writer.writerow(
                        [col_a, col_b, res.n, _fmt(res.rho) if res.defined else "", _fmt(res.p) if res.defined else "", _fmt(res.defined)]
                    )
        written.append(path)

    # scatter_<embedding>_<kind>.csv/.svg
    for embedding in table.embeddings():
        for kind in table.kinds():
            sub = table.subset(embedding=embedding, kind=kind)
            paired = [r for r, _ in sub.paired_columns(("relevance_nats", "informativeness_nats"))]
            if not paired:
                continue
            base = f"scatter_{embedding}_{kind}"
            csv_path = out_dir / f"{base}.csv"
            with csv_path.open("w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["id", "relevance_nats", "informativeness_nats", "label"])
                for r in paired:
                    writer.writerow([r.id, repr(r.relevance_nats), repr(r.informativeness_nats), r.label])
            svg_path = out_dir / f"{base}.svg"
            svg_path.write_text(_svg_scatter(paired, f"{embedding} / {kind}"), encoding="utf-8")
            written += [csv_path, svg_path]

    # tests.csv — paired comparisons of each score column across kinds.
    tests_path = out_dir / "tests.csv"
    kinds = table.kinds()
    comparisons = []
    for embedding in table.embeddings():
        for col in ("relevance_nats", "informativeness_nats"):
            for i, kind_a in enumerate(kinds):
                for kind_b in kinds[i + 1 :]:
                    sub_a = {r.id: r.value(col) for r in table.subset(embedding=embedding, kind=kind_a).rows}
                    sub_b = {r.id: r.value(col) for r in table.subset(embedding=embedding, kind=kind_b).rows}
                    shared = sorted(
                        rid for rid in sub_a if rid in sub_b and sub_a[rid] is not None and sub_b[rid] is not None
                    )
                    if len(shared) >= 2:
                        comparisons.append((embedding, col, kind_a, kind_b, shared, sub_a, sub_b))
    m = max(1, len(comparisons))
    with tests_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["embedding", "column", "kind_a", "kind_b", "n", "dof", "t", "raw_p", "adj_p", "defined"])
        for embedding, col, kind_a, kind_b, shared, sub_a, sub_b in comparisons:
            a = [sub_a[rid] for rid in shared]
            b = [sub_b[rid] for rid in shared]
            res = paired_ttest_bonferroni(a, b, m)
            report.tests.append((embedding, col, kind_a, kind_b, res))
            writer.writerow(
                [
                    embedding,
                    col,
                    kind_a,
                    kind_b,
                    res.n,
                    _fmt(res.dof),
                    _fmt(res.t) if res.defined else "",
                    _fmt(res.raw_p) if res.defined else "",
                    _fmt(res.adj_p) if res.defined else "",
                    _fmt(res.defined),
                ]
            )
    written.append(tests_path)

    # anova.csv — explained variance per target and category.
    anova_path = out_dir / "anova.csv"
    with anova_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target", "category", "term", "n", "r_squared_pct", "type2_ss", "rank_deficient"])
        for target in ANOVA_TARGETS:
            for category, feature_names in ANOVA_CATEGORIES.items():
                paired = table.paired_columns((target,) + feature_names)
                if len(paired) < len(feature_names) + 1:
                    writer.writerow([target, category, "", len(paired), "", "", "false"])
                    continue
                y = [v[0] for _, v in paired]
                feats = {name: [v[i + 1] for _, v in paired] for i, name in enumerate(feature_names)}
                try:
                    ev = explained_variance(y, feats)
                except AnalysisError:
                    writer.writerow([target, category, "", len(paired), "", "", "false"])
                    continue
                report.anova.append((target, category, ev))
                for term in feature_names:
                    writer.writerow(
                        [target, category, term, ev.n, _fmt(ev.r_squared_pct), _fmt(ev.type2_ss[term]), _fmt(ev.rank_deficient)]
                    )
    written.append(anova_path)

    # extremes.csv — top/bottom k rows per score column.
    extremes_path = out_dir / "extremes.csv"
    with extremes_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["score", "end", "rank", "id", "embedding", "kind", "value"])
        for col in ("relevance_nats", "informativeness_nats"):
            scored = [(r.value(col), r) for r in table.rows if r.value(col) is not None]
            scored.sort(key=lambda pair: (pair[0], pair[1].id))
            for rank, (value, r) in enumerate(reversed(scored[-k_extremes:]), start=1):
                report.extremes.append((col, "top", rank, r.id))
                writer.writerow([col, "top", rank, r.id, r.embedding, r.kind, repr(value)])
            for rank, (value, r) in enumerate(scored[:k_extremes], start=1):
                report.extremes.append((col, "bottom", rank, r.id))
                writer.writerow([col, "bottom", rank, r.id, r.embedding, r.kind, repr(value)])
    written.append(extremes_path)

    digests = {}
    for path in written:
        digests[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()
    manifest = {"run": run_info or {}, "artifacts": digests}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report
