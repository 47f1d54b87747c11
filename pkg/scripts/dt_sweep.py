"""Trajectory error and averaged variance against the time step.

Prints one row per (dt, scheme, observable) with the median over repeats.
Defaults reproduce the two-level decay comparison; ``--model cavity_qed``
switches to the cavity model and its four observables.
"""

import argparse
import tempfile
from dataclasses import replace
from pathlib import Path

from unravel.cli import run_experiment
from unravel.config import load_config

p = argparse.ArgumentParser()
p.add_argument("--model", default="decay2d", choices=["decay2d", "cavity_qed"])
p.add_argument("--dts", default="0.002,0.001,0.0005")
p.add_argument("--samples", type=int)
p.add_argument("--repeats", type=int)
p.add_argument("--threads", type=int, default=1)
args = p.parse_args()

base = load_config(Path(__file__).resolve().parent.parent / "configs" / f"{args.model}.json")
print(f"{'dt':>8s} {'scheme':>12s} {'observable':>12s} {'error':>11s} {'averaged_var':>13s}")
for dt in (float(x) for x in args.dts.split(",")):
    with tempfile.TemporaryDirectory() as tmp:
        cfg = replace(
            base,
            dt=dt,
            n_samples=args.samples or base.n_samples,
            n_repeats=args.repeats or base.n_repeats,
            threads=args.threads,
            output_dir=Path(tmp) / "out",
        )
        summary = run_experiment(cfg)
    for scheme, per_obs in summary["results"].items():
        for obs, r in per_obs.items():
            print(f"{dt:8.4g} {scheme:>12s} {obs:>12s} {r['trajectory_error']:11.4e} {r['averaged_var']:13.4e}")
