"""How often does the audit reject?  A small type-I / power study.

Each trial redraws the population and reruns the audit from seeds derived
from one root seed, so the study is reproducible and does not depend on
how many threads run it.  The acceptance suite runs the full-size
versions (100 trials); twenty keep this script quick.

Run:  python3 walkthroughs/03_error_rates.py
"""
from riskaudit.calibration import CalibrationConfig
from riskaudit.data import SubgroupFilter
from riskaudit.studies import calibration_study, discrimination_study
from riskaudit.synth import ScoreLaw, default_template

TRIALS = 20
older = SubgroupFilter.from_json([{"attr": "age", "ge": 60}])
men = SubgroupFilter.where(sex="M")

cfg = CalibrationConfig(variant="split", mc_replicates=500, compute_vi=False)
null = calibration_study(default_template(n=4000), cfg, trials=TRIALS, seed=11)
print(f"calibrated score:      {null.rejections}/{TRIALS} rejections (expect about 5%)")

cfg = CalibrationConfig(variant="split", mc_replicates=500)
biased = default_template(n=5000, law=ScoreLaw("biased", older, 0.8))
power = calibration_study(biased, cfg, trials=TRIALS, seed=12)
print(f"biased for age >= 60:  {power.rejections}/{TRIALS} rejections, "
      f"age in VI top 3 in {power.vi_hits}/{TRIALS}")

gap = default_template(n=4000, law=ScoreLaw("degraded_auc", men, sd=2.0))
disc = discrimination_study(gap, men, trials=TRIALS, seed=13)
print(f"blurred for men:       men vs women AUROC gap significant in "
      f"{disc.rejections}/{TRIALS} (mean gap {disc.extra['mean_auc_diff']:+.3f})")
