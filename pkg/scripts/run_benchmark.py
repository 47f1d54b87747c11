"""Run one of the benchmark configs through the CLI runner.

    python3 scripts/run_benchmark.py decay2d [--threads 4]
    python3 scripts/run_benchmark.py cavity_qed --seed 7
"""

import sys
from pathlib import Path

from unravel.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

if __name__ == "__main__":
    if len(sys.argv) < 2:
        sys.exit(f"usage: {sys.argv[0]} {{decay2d,cavity_qed}} [cli flags]")
    name, rest = sys.argv[1], sys.argv[2:]
    cfg = CONFIGS / f"{name}.json"
    if not cfg.exists():
        sys.exit(f"no config {cfg}")
    sys.exit(main(["-v", "run", str(cfg), *rest]))
