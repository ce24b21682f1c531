"""Optional matplotlib rendering of scenario outputs.

Figures are rebuilt from the CSV files, never from in-memory state, so a
report directory is self-contained.  Conventional quantities plot in black,
renewable ones in green, matching the customary colour coding.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_COLORS = ("black", "seagreen")
_TECH = ("conventional", "renewable")


def _read_csv(path: Path) -> dict[str, list[float]]:
    with path.open() as handle:
        rows = [r for r in csv.reader(handle) if r and not r[0].startswith("#")]
    header, data = rows[0], rows[1:]
    return {name: [float(r[i]) for r in data] for i, name in enumerate(header)}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def scenario_figures(scenario_dir: str | Path) -> list[Path]:
    """Render controls, payments and capacity figures next to the CSVs."""
    base = Path(scenario_dir)
    written = []

    controls = _read_csv(base / "controls.csv")
    fig, (ax_a, ax_b) = plt.subplots(1, 2, figsize=(9, 3.6))
    for j in range(2):
        ax_a.plot(controls["t"], controls[f"a{j + 1}"], color=_COLORS[j], label=_TECH[j])
        ax_b.plot(controls["t"], controls[f"b{j + 1}"], color=_COLORS[j], label=_TECH[j])
    ax_a.set_xlabel("time (years)")
    ax_a.set_ylabel("investment effort (MW/yr)")
    ax_b.set_xlabel("time (years)")
    ax_b.set_ylabel("volatility (MW/$\\sqrt{\\mathrm{yr}}$)")
    ax_a.legend()
    written.append(_save(fig, base / "controls.png"))

    payments = _read_csv(base / "payments.csv")
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for name, series in payments.items():
        if name == "t":
            continue
        ax.plot(payments["t"], series, label=name)
    ax.set_xlabel("time (years)")
    ax.set_ylabel("payment rate (EUR/MW-unit)")
    ax.legend(fontsize=8)
    written.append(_save(fig, base / "payments.png"))

    paths = _read_csv(base / "paths.csv")
    fig, (ax_x, ax_s) = plt.subplots(1, 2, figsize=(9, 3.6))
    for j in range(2):
        key = f"X{j + 1}"
        ax_x.plot(paths["t"], paths[f"{key}_mean"], color=_COLORS[j], label=_TECH[j])
        ax_x.fill_between(paths["t"], paths[f"{key}_q05"], paths[f"{key}_q95"],
                          color=_COLORS[j], alpha=0.15)
    ax_x.set_xlabel("time (years)")
    ax_x.set_ylabel("capacity (MW)")
    ax_x.legend()
    ax_s.plot(paths["t"], paths["share_mean"], color=_COLORS[1])
    ax_s.set_xlabel("time (years)")
    ax_s.set_ylabel("renewable share")
    written.append(_save(fig, base / "capacity.png"))
    return written


def report_figures(out_dir: str | Path) -> list[Path]:
    """Cross-scenario comparison figures from every scenario subdirectory."""
    base = Path(out_dir)
    dirs = sorted(p.parent for p in base.glob("*/paths.csv"))
    if not dirs:
        return []
    written = []

    fig, (ax_t, ax_s) = plt.subplots(1, 2, figsize=(10, 3.8))
    for directory in dirs:
        paths = _read_csv(directory / "paths.csv")
        ax_t.plot(paths["t"], paths["total_mean"], label=directory.name)
        ax_s.plot(paths["t"], paths["share_mean"], label=directory.name)
    ax_t.set_xlabel("time (years)")
    ax_t.set_ylabel("total capacity (MW)")
    ax_s.set_xlabel("time (years)")
    ax_s.set_ylabel("renewable share")
    ax_s.legend(fontsize=7)
    written.append(_save(fig, base / "comparison_capacity.png"))

    import json

    names, values = [], []
    for directory in dirs:
        summary = json.loads((directory / "summary.json").read_text())
        if summary.get("contract_value_mean") is not None:
            names.append(directory.name)
            values.append(summary["contract_value_mean"])
    if names:
        fig, ax = plt.subplots(figsize=(6, 3.8))
        ax.bar(range(len(names)), values, color="steelblue")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
        ax.set_ylabel("mean contract value (EUR)")
        written.append(_save(fig, base / "comparison_contracts.png"))
    return written
