# %% [markdown]
# # Config-driven runs
#
# The `lagrangian-games` command reads a YAML config, trains, shrinks and
# writes `report.json`, `timings.json`, `trace.npz`, `iterates.csv` and
# `mixture.npz`. The same entry point is callable from Python.

# %%
import json
import tempfile
from pathlib import Path

from lagrangian_games.cli import main

configs = Path(__file__).resolve().parent.parent / "configs" if "__file__" in globals() else Path("../configs")
out = Path(tempfile.mkdtemp())

# %%
assert main(["run", "--config", str(configs / "figure1.yaml"), "--out", str(out / "run")]) == 0
report = json.loads((out / "run" / "report.json").read_text())
print(json.dumps(report["bounds"]["satisfied"]), report["shrink"])

# %% [markdown]
# A saved trace can be shrunk again at another tolerance, and a saved
# mixture can be re-evaluated. An unattainable tolerance exits with code 1
# and reports the smallest attainable one.

# %%
trace = out / "run" / "trace.npz"
code = main(["shrink", "--config", str(configs / "figure1.yaml"), "--trace", str(trace),
             "--epsilon", "-1", "--out", str(out / "tight")])
print("exit code", code, json.loads((out / "tight" / "report.json").read_text())["shrink"])
main(["shrink", "--config", str(configs / "figure1.yaml"), "--trace", str(trace),
      "--epsilon", "bisect", "--out", str(out / "bisect")])
main(["eval", "--config", str(configs / "figure1.yaml"), "--mixture", str(out / "bisect" / "mixture.npz"),
      "--out", str(out / "eval")])
