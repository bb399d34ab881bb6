"""Audit datasets: loading, validation, stratification and design matrices.

A dataset is held column-wise (numpy arrays) for speed; :attr:`AuditDataset.records`
gives the row view when one is needed.  CSV is the canonical on-disk format,
with column roles described by a JSON schema sidecar::

    {"id": "id", "outcome": "y", "score": "p",
     "attributes": {"sex": "categorical", "age": "numeric"},
     "embedding_prefix": "emb",
     "scores": {"model_b": "p_b"}}

``scores`` is optional and names additional model score columns that the
discrimination reports compare against the primary ``score`` column.
"""
from __future__ import annotations

import csv
import json
import math
import os
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import (
    DuplicateId,
    MissingBlock,
    MissingColumn,
    MissingValue,
    NonBinaryOutcome,
    RaggedEmbedding,
    ScoreOutOfRange,
    SchemaMismatch,
    UnknownAttribute,
    AuditError,
)

CATEGORICAL = "categorical"
NUMERIC = "numeric"


@dataclass(frozen=True)
class AttributeSpec:
    kind: str
    levels: tuple = ()

    def to_json(self):
        if self.kind == CATEGORICAL:
            return {"type": CATEGORICAL, "levels": list(self.levels)}
        return NUMERIC


@dataclass(frozen=True)
class AuditRecord:
    id: str
    outcome: int
    score: float
    attributes: dict
    embedding: tuple | None = None


@dataclass
class AuditDataset:
    ids: np.ndarray
    outcomes: np.ndarray
    scores: np.ndarray
    attributes: dict
    schema: dict
    embeddings: np.ndarray | None = None
    model_scores: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    primary_model: str = "score"

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=object)
        self.outcomes = np.asarray(self.outcomes, dtype=np.int8)
        self.scores = np.asarray(self.scores, dtype=float)
        n = len(self.ids)
        if len(self.outcomes) != n or len(self.scores) != n:
            raise SchemaMismatch("column lengths differ")
        for name, spec in self.schema.items():
            col = self.attributes[name]
            self.attributes[name] = (np.asarray(col, dtype=object) if spec.kind == CATEGORICAL
                                     else np.asarray(col, dtype=float))
        if self.embeddings is not None:
            self.embeddings = np.asarray(self.embeddings, dtype=float).reshape(n, -1)

    def __len__(self):
        return len(self.ids)

    @property
    def n_positive(self):
        return int(self.outcomes.sum())

    @property
    def embedding_dim(self):
        return 0 if self.embeddings is None else self.embeddings.shape[1]

    @property
    def records(self):
        out = []
        for i in range(len(self)):
            emb = None if self.embeddings is None else tuple(self.embeddings[i].tolist())
            out.append(AuditRecord(
                id=self.ids[i],
                outcome=int(self.outcomes[i]),
                score=float(self.scores[i]),
                attributes={k: _py(v[i]) for k, v in self.attributes.items()},
                embedding=emb,
            ))
        return out

    def model_names(self):
        return [self.primary_model] + list(self.model_scores)

    def model_column(self, name):
        if name == self.primary_model:
            return self.scores
        try:
            return self.model_scores[name]
        except KeyError:
            raise MissingColumn(f"no model score column {name!r}") from None

    def with_score(self, name):
        """The same dataset with ``name`` promoted to the audited score column."""
        sub = self.subset(np.arange(len(self)))
        sub.scores = self.model_column(name).copy()
        return sub

    def subset(self, index):
        index = np.asarray(index)
        return AuditDataset(
            ids=self.ids[index],
            outcomes=self.outcomes[index],
            scores=self.scores[index],
            attributes={k: v[index] for k, v in self.attributes.items()},
            schema=self.schema,
            embeddings=None if self.embeddings is None else self.embeddings[index],
            model_scores={k: v[index] for k, v in self.model_scores.items()},
            provenance=self.provenance,
            primary_model=self.primary_model,
        )


def _py(value):
    return value.item() if isinstance(value, np.generic) else value


# ----------------------------------------------------------------------------
# Subgroup filters


@dataclass(frozen=True)
class Equals:
    label: object

    def mask(self, column, kind):
        if kind == CATEGORICAL:
            return column == str(self.label)
        return column == float(self.label)


@dataclass(frozen=True)
class InSet:
    labels: tuple

    def mask(self, column, kind):
        if kind == CATEGORICAL:
            return np.isin(column, [str(v) for v in self.labels])
        return np.isin(column, [float(v) for v in self.labels])


@dataclass(frozen=True)
class Range:
    lo: float | None = None
    hi: float | None = None
    lo_closed: bool = True
    hi_closed: bool = False

    def mask(self, column, kind):
        if kind == CATEGORICAL:
            raise AuditError("range predicate on a categorical attribute")
        keep = np.ones(len(column), dtype=bool)
        if self.lo is not None:
            keep &= column >= self.lo if self.lo_closed else column > self.lo
        if self.hi is not None:
            keep &= column <= self.hi if self.hi_closed else column < self.hi
        return keep


@dataclass(frozen=True)
class SubgroupFilter:
    """Conjunction of ``(attribute, predicate)`` pairs; empty means everyone."""

    conjuncts: tuple = ()

    @classmethod
    def where(cls, **predicates):
        return cls(tuple((k, v if hasattr(v, "mask") else Equals(v))
                         for k, v in predicates.items()))

    def attributes(self):
        return [name for name, _ in self.conjuncts]

    def mask(self, ds):
        keep = np.ones(len(ds), dtype=bool)
        for name, predicate in self.conjuncts:
            if name not in ds.schema:
                raise UnknownAttribute(name)
            keep &= predicate.mask(ds.attributes[name], ds.schema[name].kind)
        return keep

    def to_json(self):
        out = []
        for name, p in self.conjuncts:
            if isinstance(p, Equals):
                out.append({"attr": name, "eq": p.label})
            elif isinstance(p, InSet):
                out.append({"attr": name, "in": list(p.labels)})
            else:
                item = {"attr": name}
                if p.lo is not None:
                    item["ge" if p.lo_closed else "gt"] = p.lo
                if p.hi is not None:
                    item["le" if p.hi_closed else "lt"] = p.hi
                out.append(item)
        return out

    @classmethod
    def from_json(cls, items):
        conjuncts = []
        for item in items or ():
            name = item["attr"]
            if "eq" in item:
                conjuncts.append((name, Equals(item["eq"])))
            elif "in" in item:
                conjuncts.append((name, InSet(tuple(item["in"]))))
            else:
                lo, lo_closed = (item["ge"], True) if "ge" in item else (item.get("gt"), False)
                hi, hi_closed = (item["le"], True) if "le" in item else (item.get("lt"), False)
                if lo is None and hi is None:
                    raise AuditError(f"filter on {name!r} has no predicate")
                conjuncts.append((name, Range(lo, hi, lo_closed, hi_closed)))
        return cls(tuple(conjuncts))


def stratify(ds, f):
    """Rows of ``ds`` satisfying every conjunct of ``f``, in original order."""
    return ds.subset(np.flatnonzero(f.mask(ds)))


# ----------------------------------------------------------------------------
# CSV / schema IO


def read_schema(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _parse_attribute_types(raw):
    types = {}
    for name, spec in raw.items():
        if isinstance(spec, dict):
            kind = spec.get("type", CATEGORICAL)
            levels = tuple(str(v) for v in spec.get("levels", ()))
        else:
            kind, levels = spec, ()
        if kind not in (CATEGORICAL, NUMERIC):
            raise AuditError(f"attribute {name!r}: unknown type {kind!r}")
        types[name] = (kind, levels)
    return types


def load_dataset(path, schema):
    """Load a prediction CSV, validating it against ``schema`` (dict or path)."""
    if not isinstance(schema, dict):
        schema = read_schema(schema)
    for role in ("id", "outcome", "score"):
        if role not in schema:
            raise MissingColumn(f"schema lacks the {role!r} role")
    attr_types = _parse_attribute_types(schema.get("attributes", {}))
    extra = dict(schema.get("scores", {}))
    prefix = schema.get("embedding_prefix")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn("empty file") from None
        rows = list(reader)

    position = {name: i for i, name in enumerate(header)}
    needed = [schema["id"], schema["outcome"], schema["score"], *attr_types, *extra.values()]
    for name in needed:
        if name not in position:
            raise MissingColumn(f"missing column {name!r}")

    emb_cols = []
    if prefix:
        pattern = re.compile(re.escape(prefix) + r"_(\d+)$")
        found = {int(m.group(1)): i for name, i in position.items() if (m := pattern.match(name))}
        if found and sorted(found) != list(range(len(found))):
            raise RaggedEmbedding(0, "embedding columns are not contiguous from 0")
        emb_cols = [found[k] for k in range(len(found))]

    ids, outcomes, scores = [], [], []
    attrs = {name: [] for name in attr_types}
    extras = {name: [] for name in extra}
    embeddings = []
    seen = set()
    has_emb = None
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise MissingValue(r, f"row {r}: expected {len(header)} fields, got {len(row)}")
        rid = row[position[schema["id"]]]
        if rid in seen:
            raise DuplicateId(r, f"row {r}: duplicate id {rid!r}")
        seen.add(rid)
        ids.append(rid)
        y = row[position[schema["outcome"]]].strip()
        if y not in ("0", "1", "0.0", "1.0"):
            raise NonBinaryOutcome(r, f"row {r}: outcome {y!r}")
        outcomes.append(int(float(y)))
        scores.append(_score(row[position[schema["score"]]], r))
        for name, col in extra.items():
            extras[name].append(_score(row[position[col]], r))
        for name, (kind, _) in attr_types.items():
            raw = row[position[name]]
            if raw.strip() == "":
                raise MissingValue(r, f"row {r}: missing value for {name!r}")
            if kind == NUMERIC:
                value = _float(raw, r, name)
                if not math.isfinite(value):
                    raise MissingValue(r, f"row {r}: non-finite {name!r}")
                attrs[name].append(value)
            else:
                attrs[name].append(raw)
        if emb_cols:
            cells = [row[i].strip() for i in emb_cols]
            present = [c != "" for c in cells]
            if any(present) and not all(present):
                raise RaggedEmbedding(r, f"row {r}: partial embedding")
            if has_emb is None:
                has_emb = all(present)
            elif has_emb != all(present):
                raise RaggedEmbedding(r, f"row {r}: embedding presence differs from earlier rows")
            if has_emb:
                embeddings.append([_float(c, r, "embedding") for c in cells])

    attr_schema = {}
    for name, (kind, levels) in attr_types.items():
        if kind == CATEGORICAL:
            observed = sorted(set(attrs[name]))
            if levels:
                unknown = [v for v in observed if v not in levels]
                if unknown:
                    raise AuditError(f"attribute {name!r}: undeclared levels {unknown}")
            attr_schema[name] = AttributeSpec(CATEGORICAL, levels or tuple(observed))
        else:
            attr_schema[name] = AttributeSpec(NUMERIC)

    return AuditDataset(
        ids=np.array(ids, dtype=object),
        outcomes=np.array(outcomes, dtype=np.int8),
        scores=np.array(scores, dtype=float),
        attributes={k: np.array(v, dtype=object if attr_schema[k].kind == CATEGORICAL else float)
                    for k, v in attrs.items()},
        schema=attr_schema,
        embeddings=np.array(embeddings, dtype=float) if has_emb else None,
        model_scores={k: np.array(v, dtype=float) for k, v in extras.items()},
        provenance={"source": os.path.abspath(path),
                    "loaded_at": datetime.now(timezone.utc).isoformat()},
        primary_model=schema.get("score_name", "score"),
    )


def _float(raw, row, what):
    try:
        return float(raw)
    except ValueError:
        raise MissingValue(row, f"row {row}: {what} value {raw!r} is not a number") from None


def _score(raw, row):
    value = _float(raw, row, "score")
    if not 0.0 <= value <= 1.0:
        raise ScoreOutOfRange(row, f"row {row}: score {value} outside [0, 1]")
    return value


def _cell(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def save_dataset(ds, csv_path, schema_path=None, embedding_prefix="emb"):
    """Write ``ds`` as CSV (+ schema JSON); :func:`load_dataset` round-trips it."""
    extra_cols = {name: f"score_{name}" for name in ds.model_scores}
    header = ["id", "outcome", "score", *ds.schema, *extra_cols.values()]
    header += [f"{embedding_prefix}_{k}" for k in range(ds.embedding_dim)]
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(ds)):
            row = [ds.ids[i], int(ds.outcomes[i]), repr(float(ds.scores[i]))]
            row += [_cell(_py(ds.attributes[k][i])) for k in ds.schema]
            row += [repr(float(ds.model_scores[k][i])) for k in ds.model_scores]
            if ds.embeddings is not None:
                row += [repr(float(v)) for v in ds.embeddings[i]]
            writer.writerow(row)
    schema = {
        "id": "id",
        "outcome": "outcome",
        "score": "score",
        "attributes": {k: v.to_json() for k, v in ds.schema.items()},
    }
    if ds.primary_model != "score":
        schema["score_name"] = ds.primary_model
    if ds.embedding_dim:
        schema["embedding_prefix"] = embedding_prefix
    if extra_cols:
        schema["scores"] = extra_cols
    if schema_path is not None:
        with open(schema_path, "w", encoding="utf-8") as fh:
            json.dump(schema, fh, indent=2)
            fh.write("\n")
    return schema


# ----------------------------------------------------------------------------
# Design matrices


@dataclass(frozen=True)
class ColumnMeta:
    """Where a feature column came from.

    ``origin`` is one of ``onehot``, ``numeric``, ``embedding``, ``score`` or
    ``monomial``; ``group`` names the variable-importance group the column
    belongs to (one-hot levels of an attribute share a group).
    """

    origin: str
    source: str
    group: str
    level: str | None = None
    constant: bool = False
    exponents: tuple = ()


@dataclass
class FitStats:
    blocks: tuple
    levels: dict
    numeric: dict
    embedding: list

    def to_json(self):
        return {"blocks": list(self.blocks), "levels": {k: list(v) for k, v in self.levels.items()},
                "numeric": {k: list(v) for k, v in self.numeric.items()},
                "embedding": [list(v) for v in self.embedding]}

    @classmethod
    def from_json(cls, obj):
        return cls(blocks=tuple(obj["blocks"]),
                   levels={k: tuple(v) for k, v in obj["levels"].items()},
                   numeric={k: tuple(v) for k, v in obj["numeric"].items()},
                   embedding=[tuple(v) for v in obj["embedding"]])


@dataclass
class FeatureMatrix:
    values: np.ndarray
    names: list
    meta: list
    fit_stats: FitStats | None = None

    @property
    def shape(self):
        return self.values.shape

    def groups(self):
        """Ordered mapping group name -> column indices."""
        out = {}
        for j, m in enumerate(self.meta):
            out.setdefault(m.group, []).append(j)
        return out


SCORE_GROUP = "Prediction"
# The score enters centred, so relabelling (Y, s) -> (1 - Y, 1 - s) only flips signs.
SCORE_CENTER = 0.5


def _zscore(col, stats):
    mean, sd = stats
    if sd == 0.0:
        return np.zeros_like(col), True
    return (col - mean) / sd, False


def _moments(col):
    mean = float(np.mean(col)) if len(col) else 0.0
    sd = float(np.std(col, ddof=1)) if len(col) > 1 else 0.0
    if not sd > 1e-12 * max(1.0, abs(mean)):
        sd = 0.0
    return mean, sd


def design_matrix(ds, attributes=True, score=True, embeddings=False, fit_stats=None):
    """Numeric feature matrix for residual modelling.

    Categorical attributes are one-hot encoded over every level; numeric
    attributes and embedding dimensions are z-scored (n-1 variance) with
    ``fit_stats`` when given, otherwise with statistics of ``ds`` itself.
    Constant columns become zeros.  The score column is appended minus 0.5.
    """
    if embeddings and ds.embeddings is None:
        raise MissingBlock("dataset has no embeddings")
    if attributes and not ds.schema:
        raise MissingBlock("dataset has no attributes")
    blocks = tuple(b for b, on in (("attributes", attributes), ("score", score),
                                   ("embeddings", embeddings)) if on)
    if not blocks:
        raise MissingBlock("no feature blocks requested")
    fitting = fit_stats is None
    if fitting:
        fit_stats = FitStats(blocks=blocks, levels={}, numeric={}, embedding=[])
    elif fit_stats.blocks != blocks:
        raise SchemaMismatch(f"fit statistics cover {fit_stats.blocks}, requested {blocks}")

    cols, names, meta = [], [], []
    if attributes:
        for name, spec in ds.schema.items():
            column = ds.attributes[name]
            if spec.kind == CATEGORICAL:
                if fitting:
                    fit_stats.levels[name] = tuple(spec.levels)
                elif name not in fit_stats.levels:
                    raise SchemaMismatch(f"attribute {name!r} unseen at fit time")
                for level in fit_stats.levels[name]:
                    cols.append((column == level).astype(float))
                    names.append(f"{name}={level}")
                    meta.append(ColumnMeta("onehot", name, name, level=level))
            else:
                if fitting:
                    fit_stats.numeric[name] = _moments(column)
                elif name not in fit_stats.numeric:
                    raise SchemaMismatch(f"attribute {name!r} unseen at fit time")
                z, constant = _zscore(column, fit_stats.numeric[name])
                cols.append(z)
                names.append(name)
                meta.append(ColumnMeta("numeric", name, name, constant=constant))
    if score:
        cols.append(ds.scores.astype(float) - SCORE_CENTER)
        names.append("score")
        meta.append(ColumnMeta("score", "score", SCORE_GROUP))
    if embeddings:
        if fitting:
            fit_stats.embedding = [_moments(ds.embeddings[:, k]) for k in range(ds.embedding_dim)]
        elif len(fit_stats.embedding) != ds.embedding_dim:
            raise SchemaMismatch("embedding length differs from fit time")
        for k, stats in enumerate(fit_stats.embedding):
            z, constant = _zscore(ds.embeddings[:, k], stats)
            cols.append(z)
            label = f"Feature Embedding {k}"
            names.append(label)
            meta.append(ColumnMeta("embedding", f"emb_{k}", label, constant=constant))

    values = np.column_stack(cols) if cols else np.zeros((len(ds), 0))
    return FeatureMatrix(values=values, names=names, meta=meta, fit_stats=fit_stats)
