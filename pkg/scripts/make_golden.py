"""Refresh tests/golden from the bundled scenarios.

Run only after an intentional change to numerical output.
"""
import shutil
import tempfile
from pathlib import Path

from optisense.cli import main

GOLDEN = Path(__file__).resolve().parents[1] / "tests" / "golden"
CASES = {
    "tone_sweep": ("sweep", ["sweep.csv"]),
    "multitone_sweep": ("sweep", ["sweep.csv"]),
    "train_sweep": ("sweep", ["sweep.csv"]),
    "phase_map": ("map", ["map.csv"]),
    "tone_optimize": ("optimize", ["optimum.csv", "sequence.csv", "restarts.csv"]),
    "tone_noiseless": ("optimize", ["optimum.csv", "sequence.csv", "restarts.csv"]),
    "mc_validate": ("mc-validate", ["validation.csv"]),
    "spectrum_estimate": ("spectrum-estimate", ["spectrum.csv", "points.csv"]),
    "calibrate": ("calibrate", ["calibration.csv", "prediction.csv"]),
}

if __name__ == "__main__":
    for name, (cmd, files) in CASES.items():
        with tempfile.TemporaryDirectory() as tmp:
            if main([cmd, "--config", name, "--out", tmp]) != 0:
                raise SystemExit(f"{name} failed")
            dest = GOLDEN / name
            dest.mkdir(parents=True, exist_ok=True)
            for f in files:
                shutil.copy(Path(tmp) / f, dest / f)
        print("wrote", name)
