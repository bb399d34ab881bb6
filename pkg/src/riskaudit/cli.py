"""Command-line entry point: ``riskaudit {gen,discrim,calib,power}``.

Every run writes its artifacts under ``--out-dir`` together with a
``manifest.json`` listing them and the resolved configuration. Exit
status is 0 on success, 1 on invalid input or usage, 2 on anything else.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import traceback

from . import charts
from .calibration import CalibrationConfig, Direction, run_audit
from .data import load_dataset, read_schema
from .errors import AuditError
from .report import (
    CalibrationReport,
    ComparisonSpec,
    Subgroup,
    build_comparison_tables,
    build_performance_table,
    default_subgroups,
    model_pairs,
)
from .residual import ResidualModelConfig
from .roc import CORRELATED
from .studies import run_study
from .synth import PopulationSpec, default_template, generate

FORMATS = ("csv", "md", "json")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


class Output:
    """Writes files under one directory and remembers them for the manifest."""

    def __init__(self, root):
        self.root = root
        self.artifacts = []

    def path(self, name):
        os.makedirs(self.root, exist_ok=True)
        self.artifacts.append(name)
        return os.path.join(self.root, name)

    def text(self, name, content):
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(content)

    def json(self, name, obj):
        self.text(name, _dump_json(obj))

    def manifest(self, command, config):
        self.json("manifest.json", {"command": command, "config": config,
                                    "artifacts": sorted(self.artifacts + ["manifest.json"])})


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="root seed for all randomness")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $AUDIT_THREADS or 1)")
    p.add_argument("--format", choices=FORMATS, default="md", help="table format")
    p.add_argument("--out-dir", default="out", help="output directory")


def _add_dataset(p):
    p.add_argument("--data", required=True, help="prediction CSV")
    p.add_argument("--schema", required=True, help="schema JSON")
    p.add_argument("--config", help="JSON file with subgroups and table or audit settings")


def build_parser():
    parser = _Parser(prog="riskaudit", description="Subgroup discrimination and calibration audits.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="draw a synthetic population")
    _add_common(g)
    g.add_argument("--spec", help="population spec JSON (default: built-in template)")
    g.add_argument("--n", type=int, help="override the population size")

    d = sub.add_parser("discrim", help="performance and AUROC comparison tables")
    _add_common(d)
    _add_dataset(d)
    d.add_argument("--target-sens", type=float, default=0.95)
    d.add_argument("--models", help="comma-separated score columns (default: all)")

    c = sub.add_parser("calib", help="strong-calibration audit")
    _add_common(c)
    _add_dataset(c)
    c.add_argument("--delta", type=float, default=0.0)
    c.add_argument("--variant", choices=("split", "cv"), default="cv")
    c.add_argument("--folds", type=int, default=5)
    c.add_argument("--n1-fraction", type=float, default=0.5)
    c.add_argument("--direction", choices=("over", "under", "both"), default="both")
    c.add_argument("--mc", type=int, default=1000, help="Monte Carlo null replicates")
    c.add_argument("--vi-perms", type=int, default=50, help="permutations per feature group")
    c.add_argument("--no-vi", action="store_true", help="skip variable importance")
    c.add_argument("--embeddings", action="store_true", help="feed embeddings to residual models")
    c.add_argument("--no-offset", action="store_true",
                   help="fit residual models without the score logit offset")
    c.add_argument("--model", help="score column to audit (default: primary)")

    w = sub.add_parser("power", help="seeded rejection-rate studies")
    _add_common(w)
    w.add_argument("studies", nargs="+", help="study config JSON files")
    w.add_argument("--trials", type=int, help="override the number of trials")
    return parser


# ----------------------------------------------------------------------------
# Subcommands


def cmd_gen(args, out):
    spec = PopulationSpec.load(args.spec) if args.spec else default_template()
    if args.n is not None:
        spec = PopulationSpec.from_json({**spec.to_json(), "n": args.n})
    spec = spec.with_seed(args.seed)
    generate(spec).write(out.path("data.csv"), out.path("schema.json"), out.path("truth.csv"))
    out.json("population.json", spec.to_json())
    return {"population": spec.to_json()}


def _models(args, ds):
    if not args.models:
        return ds.model_names()
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    for m in models:
        ds.model_column(m)
    return models


def _emit_tables(out, stem, tables, fmt):
    if fmt == "json":
        return
    ext = fmt
    if fmt == "md":
        parts = [f"## {t.title}\n\n{t.render('md')}" for t in tables]
        out.text(f"{stem}.md", "\n".join(parts))
    else:
        for i, t in enumerate(tables, start=1):
            out.text(f"{stem}_{i}.{ext}", t.render("csv"))


def cmd_discrim(args, out):
    ds = load_dataset(args.data, read_schema(args.schema))
    cfg = _load_json(args.config) if args.config else {}
    models = _models(args, ds)
    subgroups = ([Subgroup.from_json(s) for s in cfg["subgroups"]] if "subgroups" in cfg
                 else default_subgroups(ds))
    if "tables" in cfg:
        specs = [ComparisonSpec.from_json(t) for t in cfg["tables"]]
    elif len(models) > 1:
        specs = [ComparisonSpec("Model comparison", CORRELATED, subgroups, pairs=model_pairs(models))]
    else:
        specs = []
    perf = build_performance_table(ds, models, subgroups, args.target_sens)
    tables = build_comparison_tables(ds, specs)

    out.json("performance.json", perf.to_json())
    out.json("comparisons.json", [t.to_json() for t in tables])
    if args.format != "json":
        out.text(f"performance.{args.format}", perf.render(args.format))
        _emit_tables(out, "comparisons", tables, args.format)
    return {"models": models, "target_sens": args.target_sens,
            "subgroups": [s.to_json() for s in subgroups],
            "tables": [{"title": s.title, "mode": s.mode, "pairs": [list(p) for p in s.pairs],
                        "models": s.models} for s in specs]}


def _calibration_config(args, file_cfg):
    grid = file_cfg.get("residual_grid")
    configs = None if grid is None else tuple(ResidualModelConfig(degree=int(d), l2_strength=float(l))
                                              for d, l in grid)
    return CalibrationConfig(
        delta=args.delta, variant=args.variant, folds=args.folds, n1_fraction=args.n1_fraction,
        mc_replicates=args.mc, vi_permutations=args.vi_perms, seed=args.seed, configs=configs,
        include_embeddings=args.embeddings, score_offset=not args.no_offset,
        compute_vi=not args.no_vi)


def cmd_calib(args, out):
    ds = load_dataset(args.data, read_schema(args.schema))
    file_cfg = _load_json(args.config) if args.config else {}
    if args.model:
        ds = ds.with_score(args.model)
    cfg = _calibration_config(args, file_cfg)
    directions = list(Direction) if args.direction == "both" else [Direction.parse(args.direction)]
    verdicts = run_audit(ds, cfg, directions, threads=args.threads)

    dataset_name = os.path.splitext(os.path.basename(args.data))[0]
    report = CalibrationReport()
    for d in directions:
        v = verdicts[d]
        report.add(ds.primary_model, dataset_name, v)
        tag = d.value
        charts.emit_control_chart(v.trajectories, out.path(f"control_chart_{tag}.svg"),
                                  out.path(f"control_chart_{tag}.csv"),
                                  title=f"Control chart ({tag})")
        if v.vi_ranking:
            charts.emit_vi_plot(v.vi_ranking, out.path(f"vi_{tag}.svg"), out.path(f"vi_{tag}.csv"),
                                title=f"Variable importance ({tag})")
    out.json("verdicts.json", {"model": ds.primary_model, "dataset": dataset_name,
                               "verdicts": [verdicts[d].to_json() for d in directions]})
    if args.format != "json":
        out.text(f"calibration.{args.format}", report.render(args.format))
    return {"model": ds.primary_model, "directions": [d.value for d in directions],
            "calibration": cfg.to_json()}


def cmd_power(args, out):
    results = []
    for path in args.studies:
        study = _load_json(path)
        name = study.get("name") or os.path.splitext(os.path.basename(path))[0]
        summary = run_study(study, seed=args.seed, trials=args.trials, threads=args.threads)
        results.append({"name": name, **summary.to_json()})
    out.json("power.json", results)
    if args.format != "json":
        from .report import fmt_num, render
        header = ["Study", "Kind", "Trials", "Rejections", "Rejection Rate", "VI Hits"]
        rows = [[r["name"], r["kind"], r["trials"], r["rejections"], fmt_num(r["rejection_rate"]),
                 r.get("vi_hits", "")] for r in results]
        out.text(f"power.{args.format}", render(header, rows, args.format))
    return {"studies": [os.path.basename(p) for p in args.studies], "trials": args.trials}


COMMANDS = {"gen": cmd_gen, "discrim": cmd_discrim, "calib": cmd_calib, "power": cmd_power}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        out = Output(args.out_dir)
        resolved = COMMANDS[args.command](args, out)
        resolved.update({"seed": args.seed, "format": args.format})
        out.manifest(args.command, resolved)
        return 0
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (AuditError, OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"riskaudit: error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
