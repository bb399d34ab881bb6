"""Seeded simulation studies: rejection rates of the audits on synthetic populations.

Trial ``t`` of a study with root seed ``s`` draws its population from
``derive_seed(s, "population", t)`` and runs the audit with
``derive_seed(s, "audit", t)``, so trials are independent of each other
and of how they are scheduled.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .calibration import CalibrationConfig, Direction, run_audit
from .data import SubgroupFilter
from .errors import AuditError, InvalidConfig
from .parallel import pmap
from .residual import ResidualModelConfig
from .roc import delong_uncorrelated
from .rng import derive_seed
from .synth import PopulationSpec, generate, planted_miscalibration_truth


@dataclass
class StudySummary:
    kind: str
    trials: int
    alpha: float
    rejections: int
    p_values: list
    direction: str | None = None
    vi_hits: int | None = None
    top_k: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def rejection_rate(self):
        return self.rejections / self.trials if self.trials else 0.0

    def to_json(self):
        out = {"kind": self.kind, "trials": self.trials, "alpha": self.alpha,
               "rejections": self.rejections, "rejection_rate": self.rejection_rate}
        if self.direction is not None:
            out["direction"] = self.direction
        if self.vi_hits is not None:
            out["top_k"] = self.top_k
            out["vi_hits"] = self.vi_hits
            out["vi_hit_rate"] = self.vi_hits / self.trials if self.trials else 0.0
        out.update(self.extra)
        out["p_values"] = self.p_values
        return out


def calibration_trial(spec, cfg, trial, seed, top_k=3):
    """One trial: returns ``(p_value, reject, planted_attribute_in_top_k)``."""
    pop = spec.with_seed(derive_seed(seed, "population", trial))
    data = generate(pop).dataset
    trial_cfg = replace(cfg, seed=derive_seed(seed, "audit", trial))
    verdict = run_audit(data, trial_cfg, threads=1)[cfg.direction]
    hit = None
    if cfg.compute_vi and spec.model_score_law.law == "biased":
        planted, _ = planted_miscalibration_truth(spec)
        top = [name for name, _ in verdict.vi_ranking[:top_k]]
        hit = any(attr in top for attr in planted.attributes())
    return verdict.p_value, verdict.reject, hit


def calibration_study(spec, cfg, trials=100, seed=0, top_k=3, threads=None):
    results = pmap(lambda t: calibration_trial(spec, cfg, t, seed, top_k), range(trials), threads)
    hits = [h for _, _, h in results]
    return StudySummary(
        kind="calibration", trials=trials, alpha=cfg.alpha,
        rejections=int(sum(r for _, r, _ in results)),
        p_values=[p for p, _, _ in results], direction=cfg.direction.value,
        vi_hits=None if hits[0] is None else int(sum(hits)),
        top_k=None if hits[0] is None else top_k,
    )


def discrimination_trial(spec, filter_a, filter_b, trial, seed, model=None):
    """DeLong uncorrelated p-value for stratum A vs stratum B of one population."""
    data = generate(spec.with_seed(derive_seed(seed, "population", trial))).dataset
    scores = data.model_column(model or data.primary_model)
    in_a = filter_a.mask(data)
    in_b = ~in_a if filter_b is None else filter_b.mask(data)
    res = delong_uncorrelated(scores[in_a], data.outcomes[in_a], scores[in_b], data.outcomes[in_b])
    return res.p_value, res.diff


def discrimination_study(spec, filter_a, filter_b=None, trials=100, seed=0, alpha=0.05,
                         model=None, threads=None):
    results = pmap(lambda t: discrimination_trial(spec, filter_a, filter_b, t, seed, model),
                   range(trials), threads)
    return StudySummary(kind="discrimination", trials=trials, alpha=alpha,
                        rejections=int(sum(p < alpha for p, _ in results)),
                        p_values=[p for p, _ in results],
                        extra={"mean_auc_diff": float(np.mean([d for _, d in results]))})


def calibration_config_from_json(obj, seed=0):
    obj = dict(obj or {})
    grid = obj.pop("residual_grid", None)
    configs = None if grid is None else tuple(ResidualModelConfig(degree=int(d), l2_strength=float(l))
                                              for d, l in grid)
    known = {"delta", "direction", "variant", "folds", "n1_fraction", "mc_replicates",
             "vi_permutations", "include_embeddings", "score_offset", "compute_vi", "alpha"}
    unknown = set(obj) - known
    if unknown:
        raise InvalidConfig(f"unknown calibration settings: {sorted(unknown)}")
    return CalibrationConfig(seed=seed, configs=configs, **obj)


def run_study(study, seed=0, trials=None, threads=None):
    """Run a study described by a JSON-like dict (see the README for the format)."""
    kind = study.get("kind", "calibration")
    spec = PopulationSpec.from_json(study["population"])
    trials = int(trials if trials is not None else study.get("trials", 100))
    if trials < 1:
        raise InvalidConfig("trials must be >= 1")
    if kind == "calibration":
        cfg = calibration_config_from_json(study.get("calibration"), seed)
        return calibration_study(spec, cfg, trials, seed, int(study.get("top_k", 3)), threads)
    if kind == "discrimination":
        strata = study.get("strata", {})
        if "a" not in strata:
            raise InvalidConfig("discrimination study needs strata.a")
        fa = SubgroupFilter.from_json(strata["a"])
        fb = SubgroupFilter.from_json(strata["b"]) if "b" in strata else None
        return discrimination_study(spec, fa, fb, trials, seed, float(study.get("alpha", 0.05)),
                                    study.get("model"), threads)
    raise AuditError(f"unknown study kind {kind!r}")


__all__ = ["StudySummary", "calibration_study", "calibration_trial", "discrimination_study",
           "discrimination_trial", "run_study", "calibration_config_from_json", "Direction"]
