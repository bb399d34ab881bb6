"""Seeded synthetic populations with plantable miscalibration, and brute-force oracles.

A population has attributes drawn independently, a true event rate given by
an additive logit over those attributes, outcomes ``Y ~ Bernoulli(p0)`` and a
model score produced by one of four laws:

``true_risk``     score = p0
``biased``        logit(score) = logit(p0) + shift inside a subgroup
``noisy``         logit(score) = logit(p0) + N(0, sd)
``degraded_auc``  the noisy law applied inside a subgroup only

Every random draw comes from a Philox stream keyed by (seed, purpose), so
a spec and seed pin the dataset exactly.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .calibration import Direction
from .data import CATEGORICAL, NUMERIC, AttributeSpec, AuditDataset, SubgroupFilter, save_dataset
from .errors import DegenerateLabels, InvalidSpec, NoPlantedBias, TooLarge
from .rng import stream

LAWS = ("true_risk", "biased", "noisy", "degraded_auc")


@dataclass(frozen=True)
class AttributeGen:
    """How one attribute is drawn.

    Categorical: ``levels`` with ``probs``.  Numeric: ``dist`` is ``normal``
    (mean, sd, optional lo/hi clipping and rounding to ``decimals``),
    ``uniform`` (lo, hi) or ``discrete`` (``values`` with ``probs``).
    """

    name: str
    kind: str
    levels: tuple = ()
    probs: tuple = ()
    dist: str = "normal"
    mean: float = 0.0
    sd: float = 1.0
    lo: float | None = None
    hi: float | None = None
    values: tuple = ()
    decimals: int | None = None

    def to_json(self):
        if self.kind == CATEGORICAL:
            return {"name": self.name, "type": CATEGORICAL,
                    "levels": dict(zip(self.levels, self.probs))}
        out = {"name": self.name, "type": NUMERIC, "dist": self.dist}
        if self.dist == "normal":
            out.update(mean=self.mean, sd=self.sd)
        if self.dist == "discrete":
            out.update(values=list(self.values), probs=list(self.probs))
        if self.lo is not None:
            out["lo"] = self.lo
        if self.hi is not None:
            out["hi"] = self.hi
        if self.decimals is not None:
            out["decimals"] = self.decimals
        return out

    @classmethod
    def from_json(cls, obj):
        if obj.get("type", obj.get("kind", CATEGORICAL)) == CATEGORICAL:
            levels = obj["levels"]
            return cls(obj["name"], CATEGORICAL, levels=tuple(str(k) for k in levels),
                       probs=tuple(float(v) for v in levels.values()))
        return cls(obj["name"], NUMERIC, dist=obj.get("dist", "normal"),
                   mean=float(obj.get("mean", 0.0)), sd=float(obj.get("sd", 1.0)),
                   lo=obj.get("lo"), hi=obj.get("hi"),
                   values=tuple(float(v) for v in obj.get("values", ())),
                   probs=tuple(float(v) for v in obj.get("probs", ())),
                   decimals=obj.get("decimals"))


@dataclass(frozen=True)
class RiskTerm:
    """``coef * (x - center)`` for numeric attributes, ``coef * [x == level]`` otherwise."""

    attr: str
    coef: float
    level: str | None = None
    center: float = 0.0

    def to_json(self):
        out = {"attr": self.attr, "coef": self.coef}
        if self.level is not None:
            out["level"] = self.level
        else:
            out["center"] = self.center
        return out

    @classmethod
    def from_json(cls, obj):
        level = obj.get("level")
        return cls(obj["attr"], float(obj["coef"]), None if level is None else str(level),
                   float(obj.get("center", 0.0)))


@dataclass(frozen=True)
class ScoreLaw:
    law: str = "true_risk"
    filter: SubgroupFilter = SubgroupFilter()
    logit_shift: float = 0.0
    sd: float = 0.0

    def to_json(self):
        out = {"law": self.law}
        if self.law in ("biased", "degraded_auc"):
            out["filter"] = self.filter.to_json()
        if self.law == "biased":
            out["logit_shift"] = self.logit_shift
        if self.law in ("noisy", "degraded_auc"):
            out["sd"] = self.sd
        return out

    @classmethod
    def from_json(cls, obj):
        return cls(law=obj.get("law", "true_risk"),
                   filter=SubgroupFilter.from_json(obj.get("filter", [])),
                   logit_shift=float(obj.get("logit_shift", 0.0)),
                   sd=float(obj.get("sd", obj.get("noise_sd", 0.0))))


@dataclass
class PopulationSpec:
    n: int
    attributes: list
    intercept: float
    terms: list
    model_score_law: ScoreLaw = field(default_factory=ScoreLaw)
    seed: int = 0
    extra_models: dict = field(default_factory=dict)
    embedding_dim: int = 0
    embedding_signal: float = 0.5

    def with_seed(self, seed):
        return PopulationSpec(self.n, self.attributes, self.intercept, self.terms,
                              self.model_score_law, seed, self.extra_models,
                              self.embedding_dim, self.embedding_signal)

    def with_law(self, law):
        return PopulationSpec(self.n, self.attributes, self.intercept, self.terms, law,
                              self.seed, self.extra_models, self.embedding_dim,
                              self.embedding_signal)

    def to_json(self):
        return {
            "n": self.n,
            "seed": self.seed,
            "attributes": [a.to_json() for a in self.attributes],
            "true_risk": {"intercept": self.intercept, "terms": [t.to_json() for t in self.terms]},
            "model_score_law": self.model_score_law.to_json(),
            "extra_models": {k: v.to_json() for k, v in self.extra_models.items()},
            "embedding_dim": self.embedding_dim,
            "embedding_signal": self.embedding_signal,
        }

    @classmethod
    def from_json(cls, obj):
        risk = obj.get("true_risk", {})
        return cls(
            n=int(obj["n"]),
            attributes=[AttributeGen.from_json(a) for a in obj["attributes"]],
            intercept=float(risk.get("intercept", 0.0)),
            terms=[RiskTerm.from_json(t) for t in risk.get("terms", [])],
            model_score_law=ScoreLaw.from_json(obj.get("model_score_law", {})),
            seed=int(obj.get("seed", 0)),
            extra_models={k: ScoreLaw.from_json(v) for k, v in obj.get("extra_models", {}).items()},
            embedding_dim=int(obj.get("embedding_dim", 0)),
            embedding_signal=float(obj.get("embedding_signal", 0.5)),
        )

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def default_template(n=4000, seed=0, law=None):
    """Sex (F/M), integer age and Fitzpatrick skin type 1-6 with a mild risk gradient."""
    return PopulationSpec(
        n=n,
        attributes=[
            AttributeGen("sex", CATEGORICAL, levels=("F", "M"), probs=(0.5, 0.5)),
            AttributeGen("age", NUMERIC, dist="normal", mean=52.0, sd=16.0, lo=18.0, hi=90.0,
                         decimals=0),
            AttributeGen("fst", NUMERIC, dist="discrete", values=(1, 2, 3, 4, 5, 6),
                         probs=(0.15, 0.30, 0.25, 0.15, 0.10, 0.05)),
        ],
        intercept=-2.2,
        terms=[RiskTerm("age", 0.03, center=50.0), RiskTerm("sex", 0.25, level="M"),
               RiskTerm("fst", -0.10, center=3.0)],
        model_score_law=law or ScoreLaw(),
        seed=seed,
    )


@dataclass
class GeneratedDataset:
    dataset: AuditDataset
    true_risks: np.ndarray

    def write(self, csv_path, schema_path, truth_path):
        schema = save_dataset(self.dataset, csv_path, schema_path)
        with open(truth_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", "true_risk"])
            for rid, p in zip(self.dataset.ids, self.true_risks):
                writer.writerow([rid, repr(float(p))])
        return schema


def _validate(spec):
    if spec.n < 2:
        raise InvalidSpec("n must be >= 2")
    names = [a.name for a in spec.attributes]
    if len(set(names)) != len(names):
        raise InvalidSpec("duplicate attribute names")
    for a in spec.attributes:
        if a.kind == CATEGORICAL or a.dist == "discrete":
            if not a.probs or abs(sum(a.probs) - 1.0) > 1e-12 or min(a.probs) < 0:
                raise InvalidSpec(f"{a.name}: probabilities must be non-negative and sum to 1")
            if len(a.probs) != len(a.levels if a.kind == CATEGORICAL else a.values):
                raise InvalidSpec(f"{a.name}: probabilities and levels differ in length")
        elif a.dist not in ("normal", "uniform"):
            raise InvalidSpec(f"{a.name}: unknown distribution {a.dist!r}")
        elif a.dist == "uniform" and (a.lo is None or a.hi is None or a.lo >= a.hi):
            raise InvalidSpec(f"{a.name}: uniform needs lo < hi")
    for t in spec.terms:
        if t.attr not in names:
            raise InvalidSpec(f"risk term references unknown attribute {t.attr!r}")
    for law in [spec.model_score_law, *spec.extra_models.values()]:
        if law.law not in LAWS:
            raise InvalidSpec(f"unknown score law {law.law!r}")
        if law.law in ("noisy", "degraded_auc") and law.sd < 0:
            raise InvalidSpec("noise sd must be non-negative")
        for attr in law.filter.attributes():
            if attr not in names:
                raise InvalidSpec(f"score-law filter references unknown attribute {attr!r}")


def _draw_attribute(a, gen, n):
    if a.kind == CATEGORICAL:
        idx = gen.choice(len(a.levels), size=n, p=np.asarray(a.probs))
        return np.asarray(a.levels, dtype=object)[idx]
    if a.dist == "discrete":
        return np.asarray(a.values, dtype=float)[gen.choice(len(a.values), size=n, p=np.asarray(a.probs))]
    if a.dist == "uniform":
        x = gen.uniform(a.lo, a.hi, size=n)
    else:
        x = gen.normal(a.mean, a.sd, size=n)
    if a.lo is not None or a.hi is not None:
        x = np.clip(x, a.lo if a.lo is not None else -np.inf, a.hi if a.hi is not None else np.inf)
    if a.decimals is not None:
        x = np.round(x, a.decimals)
    return x


def _score(law, logit0, p0, ds, gen):
    if law.law == "true_risk":
        return p0.copy()
    inside = law.filter.mask(ds) if law.law in ("biased", "degraded_auc") else np.ones(len(p0), bool)
    if law.law == "biased":
        return expit(logit0 + law.logit_shift * inside)
    noise = gen.normal(0.0, 1.0, size=len(p0)) * law.sd
    return expit(logit0 + noise * inside)


def generate(spec):
    """Draw a dataset; identical for identical spec and seed."""
    _validate(spec)
    n = spec.n
    attrs, schema = {}, {}
    for i, a in enumerate(spec.attributes):
        attrs[a.name] = _draw_attribute(a, stream(spec.seed, "attribute", i), n)
        schema[a.name] = (AttributeSpec(CATEGORICAL, tuple(a.levels)) if a.kind == CATEGORICAL
                          else AttributeSpec(NUMERIC))
    logit0 = np.full(n, float(spec.intercept))
    for t in spec.terms:
        col = attrs[t.attr]
        if t.level is not None:
            logit0 += t.coef * (col == t.level)
        else:
            logit0 += t.coef * (col.astype(float) - t.center)
    p0 = expit(logit0)
    if not (np.all(p0 > 0.0) and np.all(p0 < 1.0)):
        raise InvalidSpec("true risk saturates at 0 or 1")
    outcomes = (stream(spec.seed, "outcome").random(n) < p0).astype(np.int8)
    ids = np.array([f"s{i:06d}" for i in range(n)], dtype=object)
    embeddings = None
    if spec.embedding_dim:
        gen = stream(spec.seed, "embedding")
        embeddings = gen.normal(size=(n, spec.embedding_dim))
        embeddings[:, 0] += spec.embedding_signal * logit0

    ds = AuditDataset(ids=ids, outcomes=outcomes, scores=np.zeros(n), attributes=attrs,
                      schema=schema, embeddings=embeddings,
                      provenance={"source": "synthetic", "seed": spec.seed})
    ds.scores = _score(spec.model_score_law, logit0, p0, ds, stream(spec.seed, "score", 0))
    ds.model_scores = {name: _score(law, logit0, p0, ds, stream(spec.seed, "score", k))
                       for k, (name, law) in enumerate(spec.extra_models.items(), start=1)}
    return GeneratedDataset(dataset=ds, true_risks=p0)


def planted_miscalibration_truth(spec):
    """The subgroup a biased score law targets and the direction of the error."""
    law = spec.model_score_law
    if law.law != "biased" or law.logit_shift == 0:
        raise NoPlantedBias(f"score law {law.law!r} plants no miscalibration")
    return law.filter, Direction.OVER if law.logit_shift > 0 else Direction.UNDER


# ----------------------------------------------------------------------------
# Oracles


def brute_force_auc(scores, labels):
    """AUROC by explicit comparison of every positive-negative pair."""
    pos = [float(s) for s, y in zip(scores, labels) if y == 1]
    neg = [float(s) for s, y in zip(scores, labels) if y != 1]
    if not pos or not neg:
        raise DegenerateLabels("need at least one positive and one negative")
    total = 0.0
    for x in pos:
        for y in neg:
            if x > y:
                total += 1.0
            elif x == y:
                total += 0.5
    return total / (len(pos) * len(neg))


@dataclass
class NullDistribution:
    values: np.ndarray
    probs: np.ndarray

    def mean(self):
        return float(self.values @ self.probs)

    def var(self):
        mu = self.mean()
        return float(((self.values - mu) ** 2) @ self.probs)

    def central_moment(self, k):
        mu = self.mean()
        return float(((self.values - mu) ** k) @ self.probs)


def exhaustive_null_statistic(shifted, ghat, direction, max_rows=12):
    """Exact null law of the max statistic by enumerating every outcome vector."""
    direction = Direction.parse(direction)
    shifted = [float(s) for s in shifted]
    ghat = [[float(v) for v in row] for row in np.atleast_2d(ghat)]
    n = len(shifted)
    if n > max_rows:
        raise TooLarge(f"{n} rows exceeds the enumeration limit of {max_rows}")
    table = {}
    for ys in itertools.product((0, 1), repeat=n):
        prob = 1.0
        for y, s in zip(ys, shifted):
            prob *= s if y else 1.0 - s
        best = -math.inf
        for g in ghat:
            total = 0.0
            for y, s, gi in zip(ys, shifted, g):
                if direction is Direction.UNDER and gi > 0:
                    total += (y - s) * gi
                elif direction is Direction.OVER and gi < 0:
                    total += (s - y) * (-gi)
            best = max(best, total / n)
        table[best] = table.get(best, 0.0) + prob
    values = np.array(sorted(table))
    return NullDistribution(values=values, probs=np.array([table[v] for v in values]))
