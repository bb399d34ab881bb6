"""The ten acceptance criteria, each at its stated size and tolerance.

Every test records a ``PASS``/``FAIL`` line (printed in the terminal
summary and to stdout) before asserting.
"""
import hashlib
import math
import time

import numpy as np
import pytest
from scipy.stats import norm

from conftest import ACCEPTANCE_LINES
from riskaudit.calibration import (
    AuditContext,
    CalibrationConfig,
    Direction,
    cusum_statistic,
    simulate_null,
)
from riskaudit.cli import main as cli_main
from riskaudit.data import AuditDataset, AttributeSpec, SubgroupFilter
from riskaudit.report import (
    ComparisonRow,
    ComparisonSpec,
    ComparisonTable,
    Subgroup,
    build_comparison_tables,
    build_performance_table,
)
from riskaudit.roc import CORRELATED, RocComparison, auroc, delong_correlated, structural_components
from riskaudit.studies import calibration_study
from riskaudit.synth import ScoreLaw, brute_force_auc, default_template, exhaustive_null_statistic


def record(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


def test_criterion_01_auroc_oracle():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 201))
        scores = rng.integers(0, int(rng.integers(2, 30)), size=n) / 10.0  # coarse grid forces ties
        labels = (rng.random(n) < rng.uniform(0.1, 0.9)).astype(int)
        labels[0], labels[1] = 1, 0
        worst = max(worst, abs(auroc(scores, labels) - brute_force_auc(scores, labels)))
    elapsed = time.perf_counter() - start
    record(1, worst <= 1e-12 and elapsed < 10,
           f"max |auroc - pair count| = {worst:.1e} over 1000 instances in {elapsed:.1f}s")


def test_criterion_02_delong_self_test():
    rng = np.random.default_rng(2)
    bad = 0
    for _ in range(100):
        n = int(rng.integers(4, 300))
        s = np.round(rng.random(n), int(rng.integers(1, 4)))
        y = (rng.random(n) < 0.4).astype(int)
        y[:2], y[2:4] = 1, 0
        res = delong_correlated(s, s, y)
        bad += not (res.diff == 0.0 and res.p_value == 1.0)
    # six-point instance: positives .9 .6 .4 / negatives .7 .4 .2 and a second model
    y = np.array([1, 1, 1, 0, 0, 0])
    a = np.array([0.9, 0.6, 0.4, 0.7, 0.4, 0.2])
    b = np.array([0.8, 0.3, 0.5, 0.1, 0.6, 0.2])
    a10, a01 = structural_components(a, y)
    b10, b01 = structural_components(b, y)
    res = delong_correlated(a, b, y)
    errs = [
        np.max(np.abs(a10 - [1, 2 / 3, 1 / 2])), np.max(np.abs(a01 - [1 / 3, 5 / 6, 1])),
        np.max(np.abs(b10 - [1, 2 / 3, 2 / 3])), np.max(np.abs(b01 - [1, 1 / 3, 1])),
        abs(res.diff + 1 / 18), abs(res.variance - 19 / 162),
        abs(res.z - (-1 / 18) / math.sqrt(19 / 162)),
    ]
    record(2, bad == 0 and max(errs) <= 1e-12,
           f"self-comparisons off-null: {bad}/100; hand instance max error {max(errs):.1e}")


def test_criterion_03_ci_coverage():
    rng = np.random.default_rng(3)
    mu_a, mu_b, rho = 1.2, 0.8, 0.5
    true_diff = norm.cdf(mu_a / math.sqrt(2)) - norm.cdf(mu_b / math.sqrt(2))
    cov = [[1.0, rho], [rho, 1.0]]
    y = np.r_[np.ones(300), np.zeros(300)]
    start = time.perf_counter()
    hits = 0
    for _ in range(1000):
        pos = rng.multivariate_normal([mu_a, mu_b], cov, size=300)
        neg = rng.multivariate_normal([0.0, 0.0], cov, size=300)
        both = np.vstack([pos, neg])
        lo, hi = delong_correlated(both[:, 0], both[:, 1], y).ci95
        hits += lo <= true_diff <= hi
    elapsed = time.perf_counter() - start
    coverage = hits / 1000
    record(3, 0.93 <= coverage <= 0.97 and elapsed < 60,
           f"95% CI coverage {coverage:.3f} over 1000 bi-normal replicates in {elapsed:.1f}s")


def test_criterion_04_cusum_micro_oracle():
    cases = [
        # (y, s, ghat rows, direction, per-member sums written out by hand)
        ([1, 0, 1], [0.2, 0.6, 0.5], [[0.3, -0.2, 0.1], [-0.4, 0.5, -0.1]], "under",
         [0.8 * 0.3 + 0.5 * 0.1, -0.6 * 0.5]),
        ([1, 0, 1], [0.2, 0.6, 0.5], [[0.3, -0.2, 0.1], [-0.4, 0.5, -0.1]], "over",
         [0.6 * 0.2, -0.8 * 0.4 - 0.5 * 0.1]),
        ([0, 0, 1, 1], [0.1, 0.9, 0.3, 0.7], [[-0.05, -0.3, 0.2, 0.0]], "over",
         [0.1 * 0.05 + 0.9 * 0.3]),
        ([0, 0, 1, 1], [0.1, 0.9, 0.3, 0.7], [[-0.05, -0.3, 0.2, 0.0]], "under",
         [0.7 * 0.2]),
        ([1], [0.25], [[-1.0], [2.0]], "under", [0.0, 0.75 * 2.0]),
        ([0, 1], [0.5, 0.5], [[0.0, 0.0]], "over", [0.0]),
    ]
    worst = 0.0
    for y, s, g, d, sums in cases:
        traj, stat = cusum_statistic(np.array(y, float), np.array(s), np.array(g), d)
        expected = [v / len(y) for v in sums]
        worst = max(worst, max(abs(t.final_stat - e) for t, e in zip(traj, expected)),
                    abs(stat - max(expected)))
    record(4, worst <= 1e-12, f"{len(cases)} hand instances, max error {worst:.1e}")


def test_criterion_05_null_distribution():
    rng = np.random.default_rng(5)
    n, b = 10, 2000
    shifted = rng.uniform(0.15, 0.85, n)
    ghat = rng.normal(scale=0.2, size=(3, n))
    ok, details = True, []
    for direction in Direction:
        ctx = AuditContext(direction=direction, outcomes=np.zeros(n), shifted=shifted, ghat=ghat,
                           segments=[], rows=np.arange(n), groups={}, seed=5)
        exact = exhaustive_null_statistic(shifted, ghat, direction)
        draws = simulate_null(ctx, b)
        se_mean = math.sqrt(exact.var() / b)
        se_var = math.sqrt((exact.central_moment(4) - exact.var() ** 2) / b)
        z_mean = abs(draws.mean() - exact.mean()) / se_mean
        z_var = abs(draws.var() - exact.var()) / se_var
        ok &= z_mean < 3 and z_var < 3
        details.append(f"{direction.value}: mean {z_mean:.2f} SE, var {z_var:.2f} SE")
    record(5, ok, f"n2={n}, B={b}; " + "; ".join(details))


def test_criterion_06_type_one_error():
    spec = default_template(n=4000)
    cfg = CalibrationConfig(delta=0.0, variant="split", mc_replicates=500)
    start = time.perf_counter()
    summary = calibration_study(spec, cfg, trials=100, seed=6)
    elapsed = time.perf_counter() - start
    record(6, summary.rejections <= 7 and elapsed < 600,
           f"true-risk generator, split, n=4000, B=500: {summary.rejections}/100 rejections "
           f"at alpha 0.05 in {elapsed:.0f}s")


def test_criterion_07_detection_power():
    law = ScoreLaw("biased", SubgroupFilter.from_json([{"attr": "age", "ge": 60}]), logit_shift=0.8)
    spec = default_template(n=5000, law=law)
    cfg = CalibrationConfig(delta=0.0, variant="cv", folds=5, mc_replicates=500)
    summary = calibration_study(spec, cfg, trials=100, seed=7, top_k=3)
    record(7, summary.rejections >= 90 and summary.vi_hits >= 90,
           f"biased age>=60 (+0.8 logit), n=5000, CV: p<0.05 in {summary.rejections}/100, "
           f"age in VI top 3 in {summary.vi_hits}/100")


def test_criterion_08_mirror_symmetry():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(100):
        n, k = int(rng.integers(1, 60)), int(rng.integers(1, 9))
        y = (rng.random(n) < 0.5).astype(float)
        s = rng.random(n)
        g = rng.normal(scale=0.3, size=(k, n))
        for d, mirrored in ((Direction.UNDER, Direction.OVER), (Direction.OVER, Direction.UNDER)):
            t1, m1 = cusum_statistic(y, s, g, d)
            t2, m2 = cusum_statistic(1 - y, 1 - s, -g, mirrored)
            worst = max(worst, abs(m1 - m2),
                        max(np.max(np.abs(a.partial_sums - b.partial_sums)) for a, b in zip(t1, t2)))
    record(8, worst <= 1e-12, f"100 random instances, max mirror gap {worst:.1e}")


def _digest(directory):
    h = hashlib.sha256()
    for path in sorted(p for p in directory.rglob("*") if p.is_file()):
        h.update(path.relative_to(directory).as_posix().encode())
        h.update(path.read_bytes())
    return h.hexdigest()


def test_criterion_09_cli_determinism(tmp_path):
    import json

    gen = tmp_path / "gen"
    assert cli_main(["gen", "--seed", "9", "--n", "1500", "--out-dir", str(gen)]) == 0
    pop = json.loads((gen / "population.json").read_text())
    pop["model_score_law"] = {"law": "biased", "filter": [{"attr": "age", "ge": 60}],
                              "logit_shift": 0.8}
    pop["extra_models"] = {"noisy": {"law": "noisy", "sd": 1.0}}
    (tmp_path / "pop.json").write_text(json.dumps(pop))
    (tmp_path / "study.json").write_text(json.dumps({
        "kind": "calibration", "population": {**pop, "n": 800}, "trials": 4,
        "calibration": {"variant": "split", "mc_replicates": 200, "vi_permutations": 10}}))
    data = ["--data", str(tmp_path / "g" / "data.csv"), "--schema", str(tmp_path / "g" / "schema.json")]
    commands = {
        "gen": ["gen", "--spec", str(tmp_path / "pop.json")],
        "discrim": ["discrim", *data],
        "calib": ["calib", *data, "--variant", "cv", "--mc", "300", "--vi-perms", "10"],
        "power": ["power", str(tmp_path / "study.json")],
    }
    assert cli_main(["gen", "--spec", str(tmp_path / "pop.json"), "--seed", "9",
                     "--out-dir", str(tmp_path / "g")]) == 0
    mismatched = []
    for name, argv in commands.items():
        digests = set()
        for run, threads in enumerate(("1", "1", "8")):
            out = tmp_path / f"{name}-{run}"
            assert cli_main([*argv, "--seed", "9", "--threads", threads, "--out-dir", str(out)]) == 0
            digests.add(_digest(out))
        if len(digests) != 1:
            mismatched.append(name)
    record(9, not mismatched,
           "gen, discrim, calib, power byte-identical across reruns and 1 vs 8 threads"
           if not mismatched else f"outputs differ for {mismatched}")


def test_criterion_10_rendering_fidelity():
    # 4 positives (.9 .8 .7 .35) and 6 negatives (.6 .5 .4 .3 .2 .1), split over two sexes
    scores = np.array([0.9, 0.8, 0.7, 0.35, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1])
    labels = np.array([1, 1, 1, 1, 0, 0, 0, 0, 0, 0], dtype=np.int8)
    sex = np.array(list("FMFMFMFMFM"), dtype=object)
    ds = AuditDataset(ids=np.array([f"r{i}" for i in range(10)], dtype=object), outcomes=labels,
                      scores=scores, attributes={"sex": sex},
                      schema={"sex": AttributeSpec("categorical", ("F", "M"))})
    perf = build_performance_table(ds, ["score"], [Subgroup("Overall"),
                                                   Subgroup("Men", SubgroupFilter.where(sex="M"))])
    cells = perf.cells()
    # threshold .35 (4th largest positive): FP .6 .5 .4 ; men: positives .8 .35, negatives .5 .3 .1
    expected_perf = [["Overall", 10, 4, 3, "100%", "50%", "0.875"],
                     ["Men", 5, 2, 1, "100%", "67%", "0.833"]]
    fixture_rows = [
        RocComparison(0.9, 0.869, 0.0312, 1.24e-4, 2.8, 0.0061, (0.00912, 0.0531), CORRELATED),
        RocComparison(0.9, 0.789, 0.1110, 3.4e-3, 1.9, 0.0581, (-0.0031, 0.2249), CORRELATED),
        RocComparison(0.8, 0.831, -0.0311, 1.5e-3, -0.8, 0.4251, (-0.1071, 0.0449), CORRELATED),
        RocComparison(0.8, 0.700, 0.1000, 2.6e-3, 1.96, 0.1000, (0.0001, 0.1999), CORRELATED),
    ]
    table = ComparisonTable("fixture", CORRELATED,
                            [ComparisonRow("Everyone", "A", "B", result=r) for r in fixture_rows])
    expected_cmp = [
        ["0.031 (0.009, 0.053)", "0.006", "significant"],
        ["0.111 (-0.003, 0.225)", "0.058", "marginal"],
        ["-0.031 (-0.107, 0.045)", "0.425", ""],
        ["0.100 (0.000, 0.200)", "0.100", "marginal"],
    ]
    self_pair = build_comparison_tables(
        ds, [ComparisonSpec("self", CORRELATED, [Subgroup("Everyone")], pairs=[("score", "score")])])
    got_cmp = [row[2:] for row in table.cells()]
    ok = (cells == expected_perf and got_cmp == expected_cmp
          and self_pair[0].cells()[0][2:] == ["0.000 (0.000, 0.000)", "1.000", ""])
    record(10, ok, "performance cells, 'diff (lo, hi)' CIs, 3-decimal p-values and 0.05/0.1 bands"
           if ok else f"perf {cells} cmp {got_cmp}")
