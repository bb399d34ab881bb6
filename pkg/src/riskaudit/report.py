"""Performance, comparison and calibration tables.

Tables keep raw numbers (``to_json``) and render them as Markdown or CSV
cells: AUROC, differences and p-values to 3 decimals, rates as whole
percentages, CIs as ``diff (lo, hi)``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .data import SubgroupFilter
from .errors import AuditError, DegenerateLabels, TooFewPerClass
from .roc import (
    CORRELATED,
    UNCORRELATED,
    auroc,
    confusion_at,
    delong_correlated,
    delong_uncorrelated,
    operating_threshold,
    significance_band,
)

NA = "N/A"


def fmt_num(x, digits=3):
    if x is None:
        return NA
    text = f"{x:.{digits}f}"
    if text.startswith("-") and float(text) == 0.0:
        text = text[1:]
    return text


def fmt_pct(x):
    return NA if x is None else f"{100.0 * x:.0f}%"


def fmt_diff_ci(diff, ci):
    return f"{fmt_num(diff)} ({fmt_num(ci[0])}, {fmt_num(ci[1])})"


def _to_csv(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _to_md(header, rows):
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(str(c) for c in row) + " |" for row in rows]
    return "\n".join(lines) + "\n"


def render(header, rows, fmt):
    if fmt == "csv":
        return _to_csv(header, rows)
    if fmt == "md":
        return _to_md(header, rows)
    raise ValueError(f"unknown format {fmt!r}")


@dataclass(frozen=True)
class Subgroup:
    label: str
    filter: SubgroupFilter = SubgroupFilter()

    def to_json(self):
        return {"label": self.label, "filter": self.filter.to_json()}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["label"], SubgroupFilter.from_json(obj.get("filter", [])))


# ----------------------------------------------------------------------------
# Performance table


@dataclass
class PerformanceCell:
    fp: int
    tp: int
    tn: int
    fn: int
    sensitivity: float | None
    specificity: float | None
    auroc: float | None


@dataclass
class PerformanceRow:
    subgroup: str
    total: int
    positives: int
    cells: dict


@dataclass
class PerformanceTable:
    models: list
    thresholds: dict
    target_sens: float
    rows: list

    def to_json(self):
        return {
            "target_sensitivity": self.target_sens,
            "thresholds": self.thresholds,
            "rows": [{"subgroup": r.subgroup, "total": r.total, "positives": r.positives,
                      "models": {m: vars(c) for m, c in r.cells.items()}} for r in self.rows],
        }

    def header(self):
        h = ["Characteristic", "Total", "Total Positives"]
        for title in ("False Positives", "Sensitivity", "Specificity"):
            h += [f"{title} at {self.target_sens:.0%} Threshold ({m})" for m in self.models]
        h += [f"AUROC ({m})" for m in self.models]
        return h

    def cells(self):
        out = []
        for r in self.rows:
            c = [r.cells[m] for m in self.models]
            out.append([r.subgroup, r.total, r.positives]
                       + [x.fp for x in c]
                       + [fmt_pct(x.sensitivity) for x in c]
                       + [fmt_pct(x.specificity) for x in c]
                       + [fmt_num(x.auroc) for x in c])
        return out

    def render(self, fmt="md"):
        return render(self.header(), self.cells(), fmt)


def _safe_auroc(scores, labels):
    try:
        return auroc(scores, labels)
    except DegenerateLabels:
        return None


def build_performance_table(ds, models=None, subgroups=None, target_sens=0.95):
    """Per-subgroup FP / sensitivity / specificity / AUROC at a global threshold.

    Each model's threshold is chosen on the whole dataset, then applied to
    every subgroup unchanged.
    """
    models = list(models or ds.model_names())
    subgroups = list(subgroups or [Subgroup("Overall")])
    thresholds = {m: operating_threshold(ds.model_column(m), ds.outcomes, target_sens).threshold
                  for m in models}
    rows = []
    for sg in subgroups:
        mask = sg.filter.mask(ds)
        y = ds.outcomes[mask]
        cells = {}
        for m in models:
            s = ds.model_column(m)[mask]
            cs = confusion_at(s, y, thresholds[m])
            cells[m] = PerformanceCell(fp=cs.fp, tp=cs.tp, tn=cs.tn, fn=cs.fn,
                                       sensitivity=cs.sensitivity, specificity=cs.specificity,
                                       auroc=_safe_auroc(s, y))
        rows.append(PerformanceRow(sg.label, int(mask.sum()), int(y.sum()), cells))
    return PerformanceTable(models=models, thresholds=thresholds, target_sens=target_sens, rows=rows)


# ----------------------------------------------------------------------------
# Comparison tables


@dataclass
class ComparisonRow:
    subgroup: str
    label_a: str
    label_b: str
    model: str | None = None
    result: object = None
    skipped: str | None = None

    @property
    def band(self):
        return None if self.result is None else significance_band(self.result.p_value)

    def to_json(self):
        out = {"subgroup": self.subgroup, "a": self.label_a, "b": self.label_b}
        if self.model is not None:
            out["model"] = self.model
        if self.result is not None:
            out.update(self.result.to_json())
            out["band"] = self.band
        else:
            out["skipped"] = self.skipped
        return out


@dataclass
class ComparisonSpec:
    """One table: model pairs on shared subjects (correlated) or stratum A vs B per model (uncorrelated)."""

    title: str
    mode: str
    subgroups: list
    pairs: list = field(default_factory=list)
    models: list = field(default_factory=list)
    stratum_a: Subgroup | None = None
    stratum_b: Subgroup | None = None

    @classmethod
    def from_json(cls, obj):
        mode = obj.get("mode")
        if mode not in (CORRELATED, UNCORRELATED):
            raise AuditError("comparison tables need an explicit mode: correlated or uncorrelated")
        subgroups = [Subgroup.from_json(s) for s in obj.get("subgroups", [{"label": "Everyone"}])]
        return cls(title=obj.get("title", mode), mode=mode, subgroups=subgroups,
                   pairs=[tuple(p) for p in obj.get("pairs", [])], models=list(obj.get("models", [])),
                   stratum_a=Subgroup.from_json(obj["a"]) if "a" in obj else None,
                   stratum_b=Subgroup.from_json(obj["b"]) if "b" in obj else None)


@dataclass
class ComparisonTable:
    title: str
    mode: str
    rows: list

    def to_json(self):
        return {"title": self.title, "mode": self.mode, "rows": [r.to_json() for r in self.rows]}

    def header(self):
        if self.mode == CORRELATED:
            return ["Subgroup", "Comparison", "Difference in AUROC (95% CI)", "P-value", "Band"]
        return ["Model", "Subgroup", "A", "B", "A AUROC", "B AUROC",
                "Difference in AUROC (95% CI)", "P-value", "Band"]

    def cells(self):
        out = []
        for r in self.rows:
            res = r.result
            if res is None:
                body = [f"skipped: {r.skipped}", NA, ""]
            else:
                body = [fmt_diff_ci(res.diff, res.ci95), fmt_num(res.p_value), r.band or ""]
            if self.mode == CORRELATED:
                out.append([r.subgroup, f"{r.label_a} vs {r.label_b}"] + body)
            else:
                aucs = [NA, NA] if res is None else [fmt_num(res.auc_a), fmt_num(res.auc_b)]
                out.append([r.model, r.subgroup, r.label_a, r.label_b] + aucs + body)
        return out

    def render(self, fmt="md"):
        return render(self.header(), self.cells(), fmt)


def _guarded(fn, *args):
    try:
        return fn(*args), None
    except (DegenerateLabels, TooFewPerClass) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def build_comparison_tables(ds, specs):
    tables = []
    for spec in specs:
        rows = []
        if spec.mode == CORRELATED:
            for sg in spec.subgroups:
                mask = sg.filter.mask(ds)
                y = ds.outcomes[mask]
                for a, b in spec.pairs:
                    res, why = _guarded(delong_correlated, ds.model_column(a)[mask],
                                        ds.model_column(b)[mask], y)
                    rows.append(ComparisonRow(sg.label, a, b, result=res, skipped=why))
        elif spec.mode == UNCORRELATED:
            if spec.stratum_a is None or spec.stratum_b is None:
                raise AuditError(f"table {spec.title!r}: uncorrelated mode needs strata a and b")
            for m in spec.models or ds.model_names():
                scores = ds.model_column(m)
                for sg in spec.subgroups:
                    base = sg.filter.mask(ds)
                    ma = base & spec.stratum_a.filter.mask(ds)
                    mb = base & spec.stratum_b.filter.mask(ds)
                    res, why = _guarded(delong_uncorrelated, scores[ma], ds.outcomes[ma],
                                        scores[mb], ds.outcomes[mb])
                    rows.append(ComparisonRow(sg.label, spec.stratum_a.label, spec.stratum_b.label,
                                              model=m, result=res, skipped=why))
        else:
            raise AuditError(f"unknown comparison mode {spec.mode!r}")
        tables.append(ComparisonTable(spec.title, spec.mode, rows))
    return tables


# ----------------------------------------------------------------------------
# Calibration report


def vi_string(ranking, top=3):
    """``"Prediction (1), age (2), sex (3)"`` from a ranked importance list."""
    return ", ".join(f"{name} ({i})" for i, (name, _) in enumerate(ranking[:top], start=1))


@dataclass
class CalibrationRow:
    model: str
    dataset: str
    direction: str
    statistic: float
    p_value: float
    vi: str


@dataclass
class CalibrationReport:
    rows: list = field(default_factory=list)

    def add(self, model, dataset, verdict, top=3):
        self.rows.append(CalibrationRow(model, dataset, verdict.direction.value, verdict.max_stat,
                                        verdict.p_value, vi_string(verdict.vi_ranking, top)))

    def to_json(self):
        return {"rows": [vars(r) for r in self.rows]}

    def render(self, fmt="md"):
        header = ["Model", "Dataset", "Direction", "Test Statistic", "P-value", "VI Ranking"]
        cells = [[r.model, r.dataset, r.direction, f"{r.statistic:.6g}", fmt_num(r.p_value), r.vi]
                 for r in self.rows]
        return render(header, cells, fmt)


def default_subgroups(ds):
    """Everyone plus one row per level of every categorical attribute."""
    out = [Subgroup("Overall")]
    for name, spec in ds.schema.items():
        if spec.kind == "categorical":
            out += [Subgroup(f"{name}={lvl}", SubgroupFilter.where(**{name: lvl}))
                    for lvl in spec.levels]
    return out


def model_pairs(models):
    models = list(models)
    return [(a, b) for i, a in enumerate(models) for b in models[i + 1:]]


__all__ = [n for n in dir() if not n.startswith("_") and n not in ("np", "csv", "io")]
