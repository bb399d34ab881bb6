"""Residual models: polynomial-feature logistic regressions estimating the event rate.

Each member expands the standardized base features into all monomials up to
its degree (graded lexicographic order, so a lower-degree expansion is a
column prefix of a higher one) and fits an L2-penalized logistic regression
with an unpenalized intercept.  The solver is a damped Newton method; very
wide expansions fall back to L-BFGS.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from itertools import combinations_with_replacement

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.special import expit

from .data import SCORE_CENTER, ColumnMeta, FeatureMatrix, FitStats, design_matrix
from .errors import (
    DimensionBlowup,
    InvalidConfig,
    NonFiniteFeature,
    SchemaMismatch,
    SingleClassTarget,
)
from .parallel import pmap

MAX_EXPANDED_COLUMNS = 20_000
NEWTON_MAX_WIDTH = 3_000


@dataclass(frozen=True)
class ResidualModelConfig:
    degree: int = 2
    l2_strength: float = 1e-3
    max_iter: int = 2000
    tol: float = 1e-6
    zero_label_weight: float = 1.0

    def __post_init__(self):
        if not 1 <= int(self.degree) <= 8:
            raise InvalidConfig(f"degree must be in [1, 8], got {self.degree}")
        if not self.l2_strength > 0:
            raise InvalidConfig("l2_strength must be positive")
        if self.max_iter < 1 or self.tol <= 0:
            raise InvalidConfig("max_iter must be >= 1 and tol > 0")


def default_configs():
    """The eight-member grid: lambda in {1e-3, 1e-2} x degree in {2, 3, 4, 5}."""
    return [ResidualModelConfig(degree=d, l2_strength=lam)
            for lam in (1e-3, 1e-2) for d in (2, 3, 4, 5)]


# ----------------------------------------------------------------------------
# Expansion


def monomials(p, degree):
    """Index tuples of every monomial of total degree 1..degree over p columns."""
    out = []
    for d in range(1, degree + 1):
        out.extend(combinations_with_replacement(range(p), d))
    return out


def expanded_width(p, degree):
    return math.comb(p + degree, degree) - 1


def _expand_values(x, terms):
    n = x.shape[0]
    out = np.empty((n, len(terms)))
    where = {}
    for j, term in enumerate(terms):
        if len(term) == 1:
            out[:, j] = x[:, term[0]]
        else:
            np.multiply(out[:, where[term[:-1]]], x[:, term[-1]], out=out[:, j])
        where[term] = j
    return out


def _term_name(names, term):
    parts = []
    for idx in sorted(set(term)):
        power = term.count(idx)
        parts.append(names[idx] if power == 1 else f"{names[idx]}^{power}")
    return "*".join(parts)


def polynomial_expand(fm, degree, max_columns=MAX_EXPANDED_COLUMNS):
    """All monomials of total degree <= ``degree`` over the columns of ``fm``."""
    if degree < 1:
        raise InvalidConfig("degree must be >= 1")
    p = fm.values.shape[1]
    width = expanded_width(p, degree)
    if width > max_columns:
        raise DimensionBlowup(f"{p} columns at degree {degree} expand to {width} > {max_columns}")
    terms = monomials(p, degree)
    values = _expand_values(fm.values, terms)
    names = [_term_name(fm.names, t) for t in terms]
    meta = []
    for t in terms:
        if len(t) == 1:
            meta.append(fm.meta[t[0]])
        else:
            meta.append(ColumnMeta("monomial", names[len(meta)], group="",
                                   exponents=tuple(t)))
    return FeatureMatrix(values=values, names=names, meta=meta, fit_stats=fm.fit_stats)


# ----------------------------------------------------------------------------
# Logistic regression


def objective(w, b, x, y, lam):
    """Mean logistic loss + lam * |w|^2 / 2 (intercept ``b`` unpenalized)."""
    z = x @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * lam * (w @ w))


def gradient(w, b, x, y, lam):
    r = expit(x @ w + b) - y
    n = len(y)
    return x.T @ r / n + lam * w, float(r.sum() / n)


def _newton(x, y, lam, max_iter, tol, offset=0.0):
    n, p = x.shape
    xt = np.hstack([np.ones((n, 1)), x])
    theta = np.zeros(p + 1)
    penalty = np.full(p + 1, lam)
    penalty[0] = 0.0

    def f(th):
        z = xt @ th + offset
        return np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * lam * (th[1:] @ th[1:])

    fval = f(theta)
    for it in range(1, max_iter + 1):
        mu = expit(xt @ theta + offset)
        grad = xt.T @ (mu - y) / n + penalty * theta
        gnorm = float(np.linalg.norm(grad))
        if gnorm < tol:
            return theta, True, it - 1, gnorm
        w = mu * (1.0 - mu)
        hess = (xt.T * w) @ xt / n
        hess[np.diag_indices_from(hess)] += penalty
        try:
            step = cho_solve(cho_factor(hess, check_finite=False), grad, check_finite=False)
        except LinAlgError:
            hess[np.diag_indices_from(hess)] += 1e-8 * max(1.0, float(np.max(np.diag(hess))))
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        decrease = float(grad @ step)
        t = 1.0
        while True:
            cand = theta - t * step
            fc = f(cand)
            if fc <= fval - 1e-4 * t * decrease or t < 1e-10:
                break
            t *= 0.5
        if fc > fval:
            mu = expit(xt @ theta + offset)
            grad = xt.T @ (mu - y) / n + penalty * theta
            return theta, False, it, float(np.linalg.norm(grad))
        theta, fval = cand, fc
    mu = expit(xt @ theta + offset)
    grad = xt.T @ (mu - y) / n + penalty * theta
    gnorm = float(np.linalg.norm(grad))
    return theta, gnorm < tol, max_iter, gnorm


def _lbfgs(x, y, lam, max_iter, tol, offset=0.0):
    n, p = x.shape

    def fun(th):
        z = x @ th[1:] + th[0] + offset
        r = expit(z) - y
        f = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * lam * (th[1:] @ th[1:])
        g = np.concatenate([[r.sum() / n], x.T @ r / n + lam * th[1:]])
        return f, g

    res = minimize(fun, np.zeros(p + 1), jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "gtol": tol / math.sqrt(p + 1), "ftol": 0.0})
    gnorm = float(np.linalg.norm(fun(res.x)[1]))
    return res.x, gnorm < tol, int(res.nit), gnorm


@dataclass
class ResidualModel:
    config: ResidualModelConfig
    weights: np.ndarray
    intercept: float
    base_names: list
    fit_stats: FitStats | None = None
    converged: bool = True
    n_iter: int = 0
    grad_norm: float = 0.0
    feature_names: list = field(default_factory=list)
    score_offset: bool = False

    @property
    def coef(self):
        """Full parameter vector, intercept first."""
        return np.concatenate([[self.intercept], self.weights])

    def to_json(self):
        return {
            "config": asdict(self.config),
            "fit_stats": None if self.fit_stats is None else self.fit_stats.to_json(),
            "feature_meta": {"base": list(self.base_names),
                             "expanded": list(self.feature_names)},
            "weights": [float(self.intercept)] + [float(v) for v in self.weights],
            "converged": self.converged,
            "n_iter": self.n_iter,
            "score_offset": self.score_offset,
        }

    @classmethod
    def from_json(cls, obj):
        weights = np.asarray(obj["weights"], dtype=float)
        stats = obj.get("fit_stats")
        return cls(config=ResidualModelConfig(**obj["config"]), weights=weights[1:],
                   intercept=float(weights[0]), base_names=list(obj["feature_meta"]["base"]),
                   fit_stats=None if stats is None else FitStats.from_json(stats),
                   converged=obj.get("converged", True), n_iter=obj.get("n_iter", 0),
                   feature_names=list(obj["feature_meta"]["expanded"]),
                   score_offset=obj.get("score_offset", False))

    def dumps(self):
        return json.dumps(self.to_json(), indent=2)


def _check_xy(x, y):
    y = np.asarray(y, dtype=float)
    if x.shape[0] != len(y) or len(y) < 2:
        raise SingleClassTarget("need at least two rows aligned with outcomes")
    if not np.all(np.isfinite(x)):
        raise NonFiniteFeature("feature matrix contains NaN or inf")
    if y.min() == y.max():
        raise SingleClassTarget("outcomes contain a single class")
    return y


def _fit_expanded(expanded, y, cfg, offset=0.0):
    if expanded.shape[1] + 1 <= NEWTON_MAX_WIDTH:
        return _newton(expanded, y, cfg.l2_strength, cfg.max_iter, cfg.tol, offset)
    return _lbfgs(expanded, y, cfg.l2_strength, cfg.max_iter, cfg.tol, offset)


SCORE_CLIP = 1e-6


def score_logit(scores):
    """Logit of the audited score, clipped away from 0 and 1."""
    s = np.clip(np.asarray(scores, dtype=float), SCORE_CLIP, 1.0 - SCORE_CLIP)
    return np.log(s) - np.log1p(-s)


def fit_klr(features, outcomes, cfg):
    """Fit one residual model on base features (expanded to ``cfg.degree``)."""
    y = _check_xy(features.values, outcomes)
    expanded = polynomial_expand(features, cfg.degree)
    theta, converged, n_iter, gnorm = _fit_expanded(expanded.values, y, cfg)
    return ResidualModel(config=cfg, weights=theta[1:].copy(), intercept=float(theta[0]),
                         base_names=list(features.names), fit_stats=features.fit_stats,
                         converged=converged, n_iter=n_iter, grad_norm=gnorm,
                         feature_names=expanded.names)


def predict_event_rate(model, fm):
    """Sigmoid of the linear predictor on the expanded base features ``fm``."""
    if list(fm.names) != list(model.base_names):
        raise SchemaMismatch("feature columns differ from those the model was fitted on")
    expanded = _expand_values(fm.values, monomials(len(fm.names), model.config.degree))
    offset = score_logit(fm.values[:, fm.names.index("score")] + SCORE_CENTER) if model.score_offset else 0.0
    return expit(expanded @ model.weights + model.intercept + offset)


@dataclass
class ResidualEnsemble:
    members: list
    base_names: list
    fit_stats: FitStats
    include_embeddings: bool = False
    score_offset: bool = False

    def __len__(self):
        return len(self.members)

    def design(self, ds):
        """Base feature matrix for ``ds`` using the fit-split statistics."""
        return design_matrix(ds, attributes=bool(ds.schema), score=True,
                             embeddings=self.include_embeddings, fit_stats=self.fit_stats)

    def predict_values(self, x):
        """Event rates, shape (K, n), from a raw base-feature array."""
        p = x.shape[1]
        if p != len(self.base_names):
            raise SchemaMismatch("feature width differs from fit time")
        top = max(m.config.degree for m in self.members)
        expanded = _expand_values(x, monomials(p, top))
        offset = score_logit(x[:, self.base_names.index("score")] + SCORE_CENTER) if self.score_offset else 0.0
        out = np.empty((len(self.members), x.shape[0]))
        for k, m in enumerate(self.members):
            width = len(m.weights)
            out[k] = expit(expanded[:, :width] @ m.weights + m.intercept + offset)
        return out

    def predict(self, fm):
        if list(fm.names) != list(self.base_names):
            raise SchemaMismatch("feature columns differ from those the ensemble was fitted on")
        return self.predict_values(fm.values)

    def to_json(self):
        return {"include_embeddings": self.include_embeddings,
                "score_offset": self.score_offset,
                "members": [m.to_json() for m in self.members]}


def fit_ensemble(ds, include_embeddings=False, configs=None, threads=None, score_offset=False):
    """Fit every config on the same design matrix (attributes + score [+ embeddings]).

    With ``score_offset`` each member models a correction on top of the
    audited score: ``rate = sigmoid(logit(score) + b + w . phi(x))``.  The
    score stays a feature as well.
    """
    configs = list(configs) if configs is not None else default_configs()
    if not configs:
        raise InvalidConfig("empty residual-model grid")
    fm = design_matrix(ds, attributes=bool(ds.schema), score=True,
                       embeddings=include_embeddings)
    y = _check_xy(fm.values, ds.outcomes)
    top = max(c.degree for c in configs)
    expanded = polynomial_expand(fm, top)
    offset = score_logit(fm.values[:, fm.names.index("score")] + SCORE_CENTER) if score_offset else 0.0

    def fit(cfg):
        width = expanded_width(fm.values.shape[1], cfg.degree)
        theta, converged, n_iter, gnorm = _fit_expanded(expanded.values[:, :width], y, cfg, offset)
        return ResidualModel(config=cfg, weights=theta[1:].copy(), intercept=float(theta[0]),
                             base_names=list(fm.names), fit_stats=fm.fit_stats,
                             converged=converged, n_iter=n_iter, grad_norm=gnorm,
                             feature_names=expanded.names[:width], score_offset=score_offset)

    members = pmap(fit, configs, threads)
    return ResidualEnsemble(members=members, base_names=list(fm.names), fit_stats=fm.fit_stats,
                            include_embeddings=include_embeddings, score_offset=score_offset)
