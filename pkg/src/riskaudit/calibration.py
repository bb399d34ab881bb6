"""Score-based CUSUM test for strong calibration.

For an audited score ``p`` shifted by the tolerance ``delta`` and a residual
ensemble estimating the true event rate, each member k gets predicted
residuals ``g_k = rate_k - shifted``.  The underestimation statistic is

    T_under = max_k (1/n) * sum_i (Y_i - shifted_i) * g_k(x_i) * [g_k(x_i) > 0]

and the overestimation statistic mirrors it over rows with ``g_k < 0``:

    T_over  = max_k (1/n) * sum_i (shifted_i - Y_i) * (-g_k(x_i)) * [g_k(x_i) < 0]

Residual models are fitted on rows disjoint from the ones scored, either a
single train/evaluation split or K-fold cross-fitting.  P-values come from
resampling outcomes as Bernoulli(shifted) with the fitted residuals held
fixed.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyEvaluationSet,
    FoldDegenerate,
    InvalidConfig,
    SingleClassTarget,
    SplitTooSmall,
)
from .parallel import pmap
from .residual import default_configs, fit_ensemble
from .rng import stream

ALPHA = 0.05
NULL_CHUNK = 64


class Direction(str, enum.Enum):
    OVER = "overestimation"
    UNDER = "underestimation"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        for d in cls:
            if key in (d.value, d.name.lower()):
                return d
        raise InvalidConfig(f"unknown direction {value!r}")

    @property
    def code(self):
        return 0 if self is Direction.OVER else 1


@dataclass(frozen=True)
class CalibrationConfig:
    delta: float = 0.0
    direction: Direction = Direction.OVER
    variant: str = "cv"
    folds: int = 5
    n1_fraction: float = 0.5
    mc_replicates: int = 1000
    vi_permutations: int = 50
    seed: int = 0
    configs: tuple | None = None
    include_embeddings: bool = False
    score_offset: bool = True
    compute_vi: bool = True
    alpha: float = ALPHA

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction.parse(self.direction))
        if not 0.0 <= self.delta < 1.0:
            raise InvalidConfig("delta must lie in [0, 1)")
        if self.variant not in ("split", "cv"):
            raise InvalidConfig(f"variant must be 'split' or 'cv', got {self.variant!r}")
        if self.folds < 2:
            raise InvalidConfig("folds must be >= 2")
        if not 0.0 < self.n1_fraction < 1.0:
            raise InvalidConfig("n1_fraction must lie in (0, 1)")
        if self.mc_replicates < 100:
            raise InvalidConfig("mc_replicates must be >= 100")
        if self.compute_vi and self.vi_permutations < 10:
            raise InvalidConfig("vi_permutations must be >= 10")

    def residual_configs(self):
        return list(self.configs) if self.configs is not None else default_configs()

    def to_json(self):
        return {
            "delta": self.delta,
            "direction": self.direction.value,
            "variant": self.variant,
            "folds": self.folds,
            "n1_fraction": self.n1_fraction,
            "mc_replicates": self.mc_replicates,
            "vi_permutations": self.vi_permutations,
            "seed": self.seed,
            "residual_grid": [[c.degree, c.l2_strength] for c in self.residual_configs()],
            "include_embeddings": self.include_embeddings,
            "score_offset": self.score_offset,
            "alpha": self.alpha,
        }


@dataclass
class CusumTrajectory:
    member_id: int
    partial_sums: np.ndarray
    final_stat: float


@dataclass
class CalibrationVerdict:
    direction: Direction
    max_stat: float
    trajectories: list
    p_value: float
    reject: bool
    vi_ranking: list = field(default_factory=list)
    variant: str = "cv"
    n_eval: int = 0
    mc_replicates: int = 0

    @property
    def member_stats(self):
        return [t.final_stat for t in self.trajectories]

    def to_json(self):
        return {
            "direction": self.direction.value,
            "variant": self.variant,
            "max_stat": self.max_stat,
            "p_value": self.p_value,
            "reject": self.reject,
            "n_eval": self.n_eval,
            "mc_replicates": self.mc_replicates,
            "member_stats": self.member_stats,
            "vi_ranking": [[name, imp] for name, imp in self.vi_ranking],
        }


# ----------------------------------------------------------------------------
# Elementary pieces


def shifted_prediction(score, delta, direction):
    """Score moved by ``delta`` toward the tested direction, clipped to [0, 1]."""
    direction = Direction.parse(direction)
    signed = delta if direction is Direction.UNDER else -delta
    out = np.clip(np.asarray(score, dtype=float) + signed, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def residual_scores(ens, rows, shifted):
    """Predicted residuals ``rate_k - shifted`` for every member, shape (K, n)."""
    shifted = np.asarray(shifted, dtype=float)
    if rows.values.shape[0] != len(shifted):
        raise EmptyEvaluationSet("rows and shifted scores are not aligned")
    return ens.predict(rows) - shifted


def _signed_terms(outcomes, shifted, ghat, direction):
    """Residual factor and indicator-filtered residual-model factor per member."""
    if direction is Direction.UNDER:
        return outcomes - shifted, np.where(ghat > 0, ghat, 0.0)
    return shifted - outcomes, np.where(ghat < 0, -ghat, 0.0)


def member_statistics(outcomes, shifted, ghat, direction):
    """Per-member statistics for one or many outcome vectors.

    ``outcomes`` may be (n,) or (B, n); the result is (K,) or (B, K).
    """
    resid, g = _signed_terms(np.asarray(outcomes, dtype=float), shifted, ghat, direction)
    n = ghat.shape[-1]
    return np.sum(resid[..., None, :] * g, axis=-1) / n


def cusum_statistic(outcomes, shifted, ghat, direction):
    """CUSUM trajectories per member and the maximum final statistic."""
    direction = Direction.parse(direction)
    outcomes = np.asarray(outcomes, dtype=float)
    shifted = np.asarray(shifted, dtype=float)
    ghat = np.atleast_2d(np.asarray(ghat, dtype=float))
    n = len(outcomes)
    if n == 0:
        raise EmptyEvaluationSet("no evaluation rows")
    if len(shifted) != n or ghat.shape[1] != n:
        raise EmptyEvaluationSet("outcomes, shifted scores and residuals are not aligned")
    resid, g = _signed_terms(outcomes, shifted, ghat, direction)
    stats = member_statistics(outcomes, shifted, ghat, direction)
    trajectories = [
        CusumTrajectory(member_id=k + 1, partial_sums=np.cumsum(resid * g[k]),
                        final_stat=float(stats[k]))
        for k in range(ghat.shape[0])
    ]
    return trajectories, float(stats.max())


def monte_carlo_pvalue(observed, null_statistics):
    """Add-one Monte Carlo p-value: (#{T_b >= observed} + 1) / (B + 1)."""
    null = np.asarray(null_statistics, dtype=float)
    return float((np.sum(null >= observed) + 1) / (len(null) + 1))


# ----------------------------------------------------------------------------
# Fitted audit state


@dataclass
class Segment:
    """Evaluation rows scored by one fitted ensemble."""

    ensemble: object
    positions: np.ndarray
    features: np.ndarray
    rates: np.ndarray


@dataclass
class AuditContext:
    direction: Direction
    outcomes: np.ndarray
    shifted: np.ndarray
    ghat: np.ndarray
    segments: list
    rows: np.ndarray
    groups: dict
    seed: int = 0

    @property
    def n_eval(self):
        return len(self.outcomes)

    def max_stat(self, ghat=None):
        ghat = self.ghat if ghat is None else ghat
        return float(member_statistics(self.outcomes, self.shifted, ghat, self.direction).max())


def split_layout(ds, cfg):
    n = len(ds)
    n1 = int(round(cfg.n1_fraction * n))
    if n1 < 2 or n - n1 < 1:
        raise SplitTooSmall(f"n={n} cannot be split with n1_fraction={cfg.n1_fraction}")
    perm = stream(cfg.seed, "split").permutation(n)
    train = perm[:n1]
    if len(np.unique(ds.outcomes[train])) < 2:
        raise SplitTooSmall("the residual-model split holds a single outcome class")
    return [(train, perm[n1:])]


def cv_layout(ds, cfg):
    n = len(ds)
    if cfg.folds > n:
        raise FoldDegenerate(f"{cfg.folds} folds for {n} rows")
    perm = stream(cfg.seed, "folds").permutation(n)
    chunks = np.array_split(perm, cfg.folds)
    layout = []
    for f, held in enumerate(chunks):
        train = np.concatenate([c for g, c in enumerate(chunks) if g != f])
        if len(np.unique(ds.outcomes[train])) < 2:
            raise FoldDegenerate(f"fold {f} training complement holds a single outcome class")
        layout.append((train, held))
    return layout


def fit_layout(ds, cfg, layout, threads=None):
    """Fit one ensemble per (train, eval) pair; returns direction-free segments."""
    segments, rows, offset = [], [], 0
    groups = None
    configs = cfg.residual_configs()
    for train, held in layout:
        try:
            ens = fit_ensemble(ds.subset(train), cfg.include_embeddings, configs, threads,
                               score_offset=cfg.score_offset)
        except SingleClassTarget as exc:
            raise SplitTooSmall(str(exc)) from exc
        fm = ens.design(ds.subset(held))
        if groups is None:
            groups = fm.groups()
        positions = np.arange(offset, offset + len(held))
        offset += len(held)
        segments.append(Segment(ens, positions, fm.values, ens.predict(fm)))
        rows.append(held)
    if offset == 0:
        raise EmptyEvaluationSet("no evaluation rows")
    return segments, np.concatenate(rows), groups


def build_context(ds, cfg, segments, rows, groups, direction):
    direction = Direction.parse(direction)
    scores = ds.scores[rows]
    shifted = shifted_prediction(scores, cfg.delta, direction)
    shifted = np.atleast_1d(shifted)
    k = len(segments[0].ensemble)
    ghat = np.empty((k, len(rows)))
    for seg in segments:
        ghat[:, seg.positions] = seg.rates - shifted[seg.positions]
    return AuditContext(direction=direction, outcomes=ds.outcomes[rows].astype(float),
                        shifted=shifted, ghat=ghat, segments=segments, rows=rows,
                        groups=groups, seed=cfg.seed)


# ----------------------------------------------------------------------------
# Monte Carlo null and variable importance


def _null_chunk(args):
    ctx, seed, start, stop = args
    n = ctx.n_eval
    ystar = np.empty((stop - start, n))
    for i, b in enumerate(range(start, stop)):
        gen = stream(seed, "null", ctx.direction.code, b)
        ystar[i] = gen.random(n) < ctx.shifted
    return member_statistics(ystar, ctx.shifted, ctx.ghat, ctx.direction).max(axis=1)


def simulate_null(ctx, replicates, seed=None, threads=None):
    """Max statistics under perfect calibration, outcomes ~ Bernoulli(shifted).

    Residual predictions stay fixed; replicate ``b`` always uses its own
    stream, and chunk boundaries are fixed, so the worker count never
    changes the result.
    """
    if replicates < 1:
        raise InvalidConfig("need at least one replicate")
    seed = ctx.seed if seed is None else seed
    bounds = [(ctx, seed, s, min(s + NULL_CHUNK, replicates))
              for s in range(0, replicates, NULL_CHUNK)]
    return np.concatenate(pmap(_null_chunk, bounds, threads))


def _permuted_stat(args):
    ctx, seed, gi, cols, r = args
    gen = stream(seed, "vi", ctx.direction.code, gi, r)
    ghat = np.empty_like(ctx.ghat)
    for seg in ctx.segments:
        x = seg.features.copy()
        perm = gen.permutation(x.shape[0])
        x[:, cols] = seg.features[perm][:, cols]
        rates = seg.ensemble.predict_values(x)
        ghat[:, seg.positions] = rates - ctx.shifted[seg.positions]
    return ctx.max_stat(ghat)


def variable_importance(ctx, permutations=50, seed=None, threads=None):
    """Drop in the max statistic when each feature group is permuted.

    One-hot columns of an attribute move together.  Within cross-fitting,
    rows are permuted inside their own held-out fold.  Returns
    ``[(group, importance), ...]`` sorted by importance, ties by name.
    """
    seed = ctx.seed if seed is None else seed
    observed = ctx.max_stat()
    jobs = [(ctx, seed, gi, cols, r)
            for gi, cols in enumerate(ctx.groups.values())
            for r in range(permutations)]
    stats = np.asarray(pmap(_permuted_stat, jobs, threads)).reshape(len(ctx.groups), permutations)
    ranking = [(name, float(observed - stats[gi].mean()))
               for gi, name in enumerate(ctx.groups)]
    return sorted(ranking, key=lambda item: (-item[1], item[0]))


# ----------------------------------------------------------------------------
# Drivers


def verdict_from_context(ctx, cfg, variant, threads=None):
    trajectories, max_stat = cusum_statistic(ctx.outcomes, ctx.shifted, ctx.ghat, ctx.direction)
    null = simulate_null(ctx, cfg.mc_replicates, cfg.seed, threads)
    p = monte_carlo_pvalue(max_stat, null)
    ranking = variable_importance(ctx, cfg.vi_permutations, cfg.seed, threads) if cfg.compute_vi else []
    return CalibrationVerdict(direction=ctx.direction, max_stat=max_stat, trajectories=trajectories,
                              p_value=p, reject=p < cfg.alpha, vi_ranking=ranking, variant=variant,
                              n_eval=ctx.n_eval, mc_replicates=cfg.mc_replicates)


def run_layout_audit(ds, cfg, layout, directions=None, variant=None, threads=None):
    """Audit with an explicit list of ``(train_rows, eval_rows)`` pairs."""
    directions = [cfg.direction] if directions is None else [Direction.parse(d) for d in directions]
    segments, rows, groups = fit_layout(ds, cfg, layout, threads)
    variant = variant or cfg.variant
    return {d: verdict_from_context(build_context(ds, cfg, segments, rows, groups, d), cfg,
                                    variant, threads)
            for d in directions}


def run_audit(ds, cfg, directions=None, threads=None):
    """Verdicts for each direction, sharing one set of fitted residual models."""
    layout = split_layout(ds, cfg) if cfg.variant == "split" else cv_layout(ds, cfg)
    return run_layout_audit(ds, cfg, layout, directions, cfg.variant, threads)


def run_split_audit(ds, cfg, threads=None):
    layout = split_layout(ds, cfg)
    return run_layout_audit(ds, cfg, layout, None, "split", threads)[cfg.direction]


def run_cv_audit(ds, cfg, threads=None):
    layout = cv_layout(ds, cfg)
    return run_layout_audit(ds, cfg, layout, None, "cv", threads)[cfg.direction]
