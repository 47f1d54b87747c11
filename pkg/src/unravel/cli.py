"""Command-line experiment runner.

    unravel run CONFIG        simulate, write per-repeat CSVs and summary.json
    unravel validate CONFIG   unraveling residuals of each configured scheme
    unravel oracle CONFIG     exact reference series only

Exit status: 0 success, 2 configuration error, 3 numerical failure (or a
scheme failing validation).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from .core import ConfigurationError, NumericalError, ParameterError, pure_density, random_state
from .config import PER_OBSERVABLE, ExperimentConfig, build_scheme, load_config
from .diffusion import DiffusionScheme, check_unraveling
from .jump import check_jump
from .oracle import exact_expectations
from .rng import derive_seed
from .sim import run_ensemble
from .stats import RunSummary, estimate_series, metrics

log = logging.getLogger("unravel")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
VALIDATION_TOL = 1e-8
VALIDATION_STATES = 100
CSV_COLUMNS = ("t", "mean", "est_var", "exact", "abs_error")


def _safe(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.+-]", "_", label)


def csv_name(scheme_label: str, obs_label: str, repeat: int) -> str:
    return f"{_safe(scheme_label)}__{_safe(obs_label)}__r{repeat:02d}.csv"


def _write_series_csv(path: Path, series) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in zip(series.grid.times, series.mc_mean, series.estimator_variance, series.exact, np.abs(series.mc_mean - series.exact)):
            w.writerow([repr(float(x)) for x in row])


def _staged(output_dir: Path):
    output_dir.parent.mkdir(parents=True, exist_ok=True)
    return Path(tempfile.mkdtemp(prefix=f".{output_dir.name}.partial-", dir=output_dir.parent))


def _commit(stage: Path, output_dir: Path) -> None:
    output_dir.mkdir(parents=True, exist_ok=True)
    for f in sorted(stage.iterdir()):
        f.replace(output_dir / f.name)
    stage.rmdir()


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run all repeats, write outputs atomically and return the summary dict.

    Repeat ``r`` uses seed ``derive_seed(seed, r)`` for every scheme, so the
    schemes are compared on common random numbers. On failure nothing is
    left in the output directory.
    """
    grid = cfg.grid
    obs = cfg.observables
    exact = exact_expectations(cfg.model, pure_density(cfg.initial_state), grid, [o.matrix for o in obs])
    summaries = {s.label: {o.label: RunSummary() for o in obs} for s in cfg.schemes}
    stage = _staged(cfg.output_dir)
    try:
        for rep in range(cfg.n_repeats):
            seed = derive_seed(cfg.seed, rep)
            for spec in cfg.schemes:
                if spec.name in PER_OBSERVABLE:
                    jobs = [(build_scheme(spec, cfg.model, o), [i]) for i, o in enumerate(obs)]
                else:
                    jobs = [(build_scheme(spec, cfg.model, None, obs), list(range(len(obs))))]
                for scheme, idx in jobs:
                    log.info("repeat %d scheme %s observables %s", rep, spec.label, [obs[i].label for i in idx])
                    res = run_ensemble(
                        cfg.model, scheme, cfg.initial_state, grid, cfg.n_samples, seed,
                        observables=[obs[i].matrix for i in idx], threads=cfg.threads,
                    )
                    for pos, i in enumerate(idx):
                        series = estimate_series(res, pos, exact[i])
                        summaries[spec.label][obs[i].label].add(*metrics(series))
                        _write_series_csv(stage / csv_name(spec.label, obs[i].label, rep), series)
        summary = {
            "schema": 1,
            "model": cfg.model.name,
            "dt": cfg.dt,
            "t_final": cfg.t_final,
            "n_samples": cfg.n_samples,
            "n_repeats": cfg.n_repeats,
            "seed": cfg.seed,
            "averaged_var_convention": "sample variance / n_samples, averaged over the grid",
            "headline_statistic": "median over repeats",
            "results": {s: {o: r.to_dict() for o, r in d.items()} for s, d in summaries.items()},
        }
        (stage / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        _commit(stage, cfg.output_dir)
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    return summary


def oracle_series(cfg: ExperimentConfig) -> list[Path]:
    grid = cfg.grid
    exact = exact_expectations(cfg.model, pure_density(cfg.initial_state), grid, [o.matrix for o in cfg.observables])
    stage = _staged(cfg.output_dir)
    names = []
    try:
        for o, series in zip(cfg.observables, exact):
            name = f"exact__{_safe(o.label)}.csv"
            with (stage / name).open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("t", "exact"))
                for t, x in zip(grid.times, series):
                    w.writerow((repr(float(t)), repr(float(x))))
            names.append(name)
        _commit(stage, cfg.output_dir)
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    return [cfg.output_dir / n for n in names]


def validate_schemes(cfg: ExperimentConfig, n_states: int = VALIDATION_STATES) -> dict[str, float]:
    """Maximum unraveling residual per scheme (and observable, where relevant)."""
    rng = np.random.default_rng(cfg.seed)
    states = random_state(cfg.model.dim, rng, size=n_states)
    report = {}
    for spec in cfg.schemes:
        if spec.name in PER_OBSERVABLE:
            built = [(f"{spec.label}[{o.label}]", build_scheme(spec, cfg.model, o)) for o in cfg.observables]
        else:
            built = [(spec.label, build_scheme(spec, cfg.model, None, cfg.observables))]
        for label, scheme in built:
            check = check_unraveling if isinstance(scheme, DiffusionScheme) else check_jump
            report[label] = max(check(cfg.model, scheme, psi) for psi in states)
    return report


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="unravel", description="Stochastic unraveling experiments for Lindblad equations.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "simulate and export CSV tables plus summary.json"),
        ("validate", "check the unraveling identity for each scheme"),
        ("oracle", "write exact reference series only"),
    ):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("config", help="JSON experiment config")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--threads", type=int, help="worker threads for trajectory chunks")
        s.add_argument("--output-dir", help="override the output directory")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.threads, args.output_dir)
        if args.command == "run":
            summary = run_experiment(cfg)
            for s, per_obs in summary["results"].items():
                for o, r in per_obs.items():
                    print(f"{s:>14s} {o:>12s}  error {r['trajectory_error']:.4e}  averaged_var {r['averaged_var']:.4e}")
            print(f"wrote {cfg.output_dir}")
        elif args.command == "oracle":
            for path in oracle_series(cfg):
                print(path)
        else:
            report = validate_schemes(cfg)
            failed = False
            for label, residual in report.items():
                ok = residual <= VALIDATION_TOL
                failed |= not ok
                print(f"{'PASS' if ok else 'FAIL'} {label:>20s}  max residual {residual:.3e}")
            return EXIT_NUMERIC if failed else EXIT_OK
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ParameterError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
