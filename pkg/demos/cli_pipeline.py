"""Drive the full command-line pipeline at miniature scale:
synth -> train -> infer -> baseline -> eval -> report, plus the
duality check. Everything lands in ./demo-runs (wiped on each run).

Run: python3 demos/cli_pipeline.py
"""

import json
import shutil
import subprocess
import sys
from pathlib import Path

root = Path("demo-runs")
shutil.rmtree(root, ignore_errors=True)
root.mkdir()

config = {
    "seed": 11,
    "geometry": {"image_size": 32, "num_views": 48},
    "dataset": {"train_artifact": 4, "train_clean": 3, "test_cases": 3, "test_clean": 2},
    "training": {
        "epochs": 2,
        "generator_base": 8,
        "attention_reduction": 4,
        "discriminator_base": 8,
        "discriminator_layers": 2,
    },
}
cfg = root / "config.json"
cfg.write_text(json.dumps(config, indent=2))

def run(*argv):
    cmd = [sys.executable, "-m", "ctmar", *argv]
    print("$", " ".join(argv))
    subprocess.run(cmd, check=True)

run("synth", "--config", str(cfg), "--out", str(root / "data"))

config["dataset"]["root"] = str(root / "data")
cfg.write_text(json.dumps(config, indent=2))

run("train", "--config", str(cfg), "--out", str(root / "run"))
ckpt = root / "run" / "generator_artifact_to_clean.bin"
run("infer", "--config", str(cfg), "--checkpoint", str(ckpt), "--out", str(root / "corrected"))
run("baseline", "--config", str(cfg), "--out", str(root / "baseline"))
run("eval", "--config", str(cfg), "--checkpoint", str(ckpt), "--out", str(root / "scores"))
run("duality-check", "--trials", "10", "--seed", "2", "--out", str(root / "duality"))
run("report", str(root / "scores" / "metrics.csv"),
    str(root / "scores" / "identity_metrics.csv"), "--out", str(root / "report"))

print("\nartifacts:")
for path in sorted(root.rglob("*.csv")) + sorted(root.rglob("*.md")):
    print(f"  {path}")
print("\nreport head:")
print("\n".join((root / "report" / "report.md").read_text().splitlines()[:8]))
