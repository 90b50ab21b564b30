import json
import os
import subprocess
import sys

from megabike import _kernels

SCRIPT = """
import json
from megabike import BACKEND, SimConfig, radius_rule, run_game
m = run_game(SimConfig(max_iterations=2, max_rounds=30, agent_count=24, lootbox_ratio=1.5,
                       rules=[radius_rule(600)], seed=9))
print(json.dumps({"backend": BACKEND, "decisions": m.decisions,
                  "survival": sorted(m.survival.values()), "loot": m.total_loot,
                  "rules": m.rules_evaluated}))
"""


def _run(disable):
    env = dict(os.environ, MEGABIKE_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, check=True,
                         capture_output=True, text=True).stdout
    return json.loads(out)


def test_env_flag_selects_numpy_and_results_match():
    fallback = _run(disable=True)
    assert fallback["backend"] == "numpy"
    compiled = _run(disable=False)
    if _kernels.NUMBA_AVAILABLE:
        assert compiled["backend"] == "numba"
    assert {k: v for k, v in fallback.items() if k != "backend"} == \
        {k: v for k, v in compiled.items() if k != "backend"}
