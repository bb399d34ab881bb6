"""Discrimination audit on a synthetic population.

Two score columns are audited: a clean one and a copy whose ranking is
blurred for men only.  The performance table fixes each model's threshold
on everyone at 95% sensitivity, then reads off per-subgroup metrics; the
comparison tables test model against model (same subjects, correlated
DeLong) and men against women (disjoint strata, uncorrelated DeLong).

Run:  python3 walkthroughs/01_discrimination_audit.py
"""
from riskaudit.data import SubgroupFilter
from riskaudit.report import (
    ComparisonSpec,
    Subgroup,
    build_comparison_tables,
    build_performance_table,
    default_subgroups,
)
from riskaudit.roc import CORRELATED, UNCORRELATED
from riskaudit.synth import ScoreLaw, default_template, generate

men = SubgroupFilter.where(sex="M")
women = SubgroupFilter.where(sex="F")

spec = default_template(n=6000, seed=1)
spec.extra_models["blurred"] = ScoreLaw("degraded_auc", men, sd=2.0)
ds = generate(spec).dataset
print(f"{len(ds)} subjects, {ds.n_positive} positives, models: {ds.model_names()}\n")

subgroups = default_subgroups(ds) + [
    Subgroup("age>=60", SubgroupFilter.from_json([{"attr": "age", "ge": 60}])),
    Subgroup("FST 5-6", SubgroupFilter.from_json([{"attr": "fst", "in": [5, 6]}])),
]
perf = build_performance_table(ds, ["score", "blurred"], subgroups, target_sens=0.95)
print(perf.render("md"))

tables = build_comparison_tables(ds, [
    ComparisonSpec("score vs blurred", CORRELATED, subgroups, pairs=[("score", "blurred")]),
    ComparisonSpec("men vs women", UNCORRELATED, [Subgroup("Everyone")],
                   models=["score", "blurred"],
                   stratum_a=Subgroup("M", men), stratum_b=Subgroup("F", women)),
])
for t in tables:
    print(f"### {t.title} ({t.mode})\n")
    print(t.render("md"))

# The blurred model should lose AUROC among men but not among women, and the
# men-vs-women table should flag it while leaving the clean score alone.
