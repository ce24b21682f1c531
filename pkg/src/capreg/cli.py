"""Command-line scenario runner.

Run one scenario (or a batch manifest) and write its output files, or build
the comparison report over a directory of finished runs:

    capreg --scenario M-SB-DVC --out out
    capreg --config scenario.cfg --out out --paths 2000 --seed 7
    capreg --config manifest.cfg --out out
    capreg --report --out out [--figures]

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
4 missing scenario outputs in report mode.  The environment variable
CAPREG_THREADS caps the number of concurrently running batch scenarios.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .config import build_scenario_config, is_manifest, manifest_entries, read_pairs
from .errors import ConfigError, ConvergenceError, DegenerateModelError, DomainError
from .output import write_report, write_scenario
from .scenarios import ScenarioConfig, solve_scenario


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capreg",
        description="Solve, simulate and compare regulated capacity-investment scenarios.",
    )
    parser.add_argument("--config", metavar="FILE", help="scenario or manifest configuration file")
    parser.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    parser.add_argument("--paths", metavar="N", type=int, default=None,
                        help="Monte Carlo paths (default 1000)")
    parser.add_argument("--seed", metavar="S", type=int, default=None,
                        help="base random seed (default 42)")
    parser.add_argument("--scenario", metavar="NAME",
                        help="scenario name like M-SB-DVC; overrides the config file")
    parser.add_argument("--report", action="store_true",
                        help="build the comparison report over DIR instead of running")
    parser.add_argument("--figures", action="store_true",
                        help="also render matplotlib figures as PNG files")
    return parser


def _thread_count(n_jobs: int) -> int:
    raw = os.environ.get("CAPREG_THREADS", "1")
    try:
        workers = max(1, int(raw))
    except ValueError:
        workers = 1
    return min(workers, n_jobs)


def _run_one(config: ScenarioConfig, out_dir: Path, figures: bool) -> str:
    art = solve_scenario(config)
    scenario_dir = write_scenario(art, out_dir)
    if figures:
        from .figures import scenario_figures

        scenario_figures(scenario_dir)
    return config.name


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    out_dir = Path(args.out)

    if args.report:
        try:
            text = write_report(out_dir)
        except DomainError as exc:
            print(f"capreg: {exc}", file=sys.stderr)
            return 4
        sys.stdout.write(text)
        if args.figures:
            from .figures import report_figures

            report_figures(out_dir)
        return 0

    try:
        configs = _collect_configs(args)
    except ConfigError as exc:
        print(f"capreg: configuration error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, DegenerateModelError) as exc:
        print(f"capreg: invalid configuration: {exc}", file=sys.stderr)
        return 2

    try:
        workers = _thread_count(len(configs))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                names = list(pool.map(lambda c: _run_one(c, out_dir, args.figures), configs))
        else:
            names = [_run_one(c, out_dir, args.figures) for c in configs]
    except ConvergenceError as exc:
        print(f"capreg: solver failed: {exc}", file=sys.stderr)
        return 3
    except (DomainError, DegenerateModelError) as exc:
        print(f"capreg: {exc}", file=sys.stderr)
        return 2

    for name in names:
        print(f"wrote {out_dir / name}")
    return 0


def _collect_configs(args: argparse.Namespace) -> list[ScenarioConfig]:
    if args.config is None:
        if args.scenario is None:
            raise ConfigError("provide --config FILE or --scenario NAME", field="scenario")
        return [
            build_scenario_config(
                [], scenario_override=args.scenario,
                n_paths_override=args.paths, seed_override=args.seed,
            )
        ]

    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"no such file: {path}", field="config")
    pairs = read_pairs(path)
    if is_manifest(pairs):
        configs = []
        for entry in manifest_entries(pairs, path.parent):
            if not entry.exists():
                raise ConfigError(f"no such file: {entry}", field="run")
            configs.append(
                build_scenario_config(
                    read_pairs(entry), scenario_override=args.scenario,
                    n_paths_override=args.paths, seed_override=args.seed,
                )
            )
        return configs
    return [
        build_scenario_config(
            pairs, scenario_override=args.scenario,
            n_paths_override=args.paths, seed_override=args.seed,
        )
    ]


if __name__ == "__main__":
    sys.exit(main())
