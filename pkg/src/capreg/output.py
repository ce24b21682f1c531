"""Scenario output files and the cross-scenario comparison report.

Every scenario writes five files into its own directory: payments.csv,
controls.csv, prices.csv, paths.csv and summary.json.  Floats are rendered
with ``repr`` (shortest round-trip form) so reruns are byte-identical; the
comparison report is built exclusively from the summary.json files so that
re-rendering reproduces it exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import DomainError
from .scenarios import REFERENCE_CONTRACT_VALUES, ScenarioArtifacts

ORDERING_SCENARIOS = ("M-SB-DC", "C-SB-DC", "M-SB-DVC", "C-SB-DVC")


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list[str], columns: list[np.ndarray], preamble: list[str] | None = None) -> None:
    lines = list(preamble or [])
    lines.append(",".join(header))
    rows = len(columns[0]) if columns else 0
    for i in range(rows):
        lines.append(",".join(_fmt(col[i]) for col in columns))
    path.write_text("\n".join(lines) + "\n")


def write_scenario(art: ScenarioArtifacts, out_dir: str | Path) -> Path:
    """Write one scenario's five output files; returns its directory."""
    base = Path(out_dir) / art.config.name
    base.mkdir(parents=True, exist_ok=True)
    t = art.config.grid.times

    # payments.csv: second-best / first-best schedules carry (z, gamma);
    # business-as-usual runs have no contract and list the firm shadow
    # prices that drive behaviour instead.
    if art.payments is not None:
        header = ["t", *art.payments.z_columns, *art.payments.gamma_columns]
        cols = [t] + [art.payments.z[:, j] for j in range(art.payments.z.shape[1])] + [
            art.payments.gamma[:, j] for j in range(2)
        ]
        _write_csv(base / "payments.csv", header, cols)
    else:
        _write_csv(
            base / "payments.csv",
            ["t", "wA1", "wA2"],
            [t, art.shadow_agent[:, 0], art.shadow_agent[:, 1]],
        )

    _write_csv(
        base / "controls.csv",
        ["t", "a1", "a2", "b1", "b2"],
        [t, art.controls.a[:, 0], art.controls.a[:, 1], art.controls.b[:, 0], art.controls.b[:, 1]],
    )

    if art.prices is not None:
        preamble = []
        header = ["t"]
        cols: list[np.ndarray] = [t]
        for idx, firm in enumerate(art.prices.firms, start=1):
            preamble.append(f"# xi_F_{idx} = {_fmt(firm.fixed)}")
            preamble.append(
                f"# terminal_bonus_{idx} = {_fmt(firm.terminal_bonus[0])},{_fmt(firm.terminal_bonus[1])}"
            )
            for ch in range(2):
                header.append(f"piD_{idx}_{ch + 1}")
                cols.append(firm.pi_drift[:, ch])
            for ch in range(2):
                header.append(f"piV_{idx}_{ch + 1}")
                cols.append(firm.pi_vol[:, ch])
        _write_csv(base / "prices.csv", header, cols, preamble)
    else:
        (base / "prices.csv").write_text("# no contract under business-as-usual\n")

    r = art.result
    _write_csv(
        base / "paths.csv",
        ["t", "X1_mean", "X1_q05", "X1_q95", "X2_mean", "X2_q05", "X2_q95",
         "total_mean", "total_q05", "total_q95", "share_mean", "share_q05", "share_q95"],
        [t, r.mean[:, 0], r.q05[:, 0], r.q95[:, 0], r.mean[:, 1], r.q05[:, 1], r.q95[:, 1],
         r.total_mean, r.total_q05, r.total_q95, r.share_mean, r.share_q05, r.share_q95],
    )

    (base / "summary.json").write_text(json.dumps(art.summary, indent=2, sort_keys=True) + "\n")
    return base


def load_summaries(out_dir: str | Path) -> dict[str, dict]:
    """All summary.json files below ``out_dir``, keyed by scenario name."""
    out = {}
    for path in sorted(Path(out_dir).glob("*/summary.json")):
        data = json.loads(path.read_text())
        out[data["scenario"]] = data
    return out


def comparison_table(summaries: dict[str, dict]) -> tuple[list[str], list[list[str]], bool | None]:
    """Rows of the comparison report plus the contract-value ordering flag.

    The flag is the chained comparison over the four second-best scenarios
    (DC before DVC, monopoly before competition); it is None when any of the
    four is absent.
    """
    header = ["scenario", "contract_value_mean", "terminal_total_capacity_mean",
              "terminal_renewable_share_mean", "ratio_to_reference"]
    rows = []
    for name in sorted(summaries):
        s = summaries[name]
        value = s.get("contract_value_mean")
        ref = REFERENCE_CONTRACT_VALUES.get(name)
        ratio = "" if value is None or ref is None else _fmt(value / ref)
        rows.append([
            name,
            "" if value is None else _fmt(value),
            _fmt(s["terminal_total_capacity_mean"]),
            _fmt(s["terminal_renewable_share_mean"]),
            ratio,
        ])
    ordering = None
    if all(name in summaries for name in ORDERING_SCENARIOS):
        vals = [summaries[name]["contract_value_mean"] for name in ORDERING_SCENARIOS]
        ordering = all(v is not None for v in vals) and vals[0] > vals[1] > vals[2] > vals[3]
    return header, rows, ordering


def render_report(summaries: dict[str, dict]) -> str:
    """Human-readable comparison over all scenario summaries."""
    if len(summaries) < 2:
        missing = [n for n in ORDERING_SCENARIOS if n not in summaries]
        raise DomainError(
            "comparison needs at least two scenario outputs; missing e.g. " + ", ".join(missing)
        )
    header, rows, ordering = comparison_table(summaries)
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) for i in range(len(header))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
    for r in rows:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(r)))
    kappas = sorted({s["kappa"] for s in summaries.values()})
    lines.append("")
    lines.append(f"kappa (energy scale per unit time): {', '.join(_fmt(k) for k in kappas)}")
    if ordering is not None:
        lines.append(
            "contract-value ordering M-SB-DC > C-SB-DC > M-SB-DVC > C-SB-DVC: "
            + ("TRUE" if ordering else "FALSE")
        )
    else:
        absent = [n for n in ORDERING_SCENARIOS if n not in summaries]
        lines.append("contract-value ordering check skipped; missing: " + ", ".join(absent))
    return "\n".join(lines) + "\n"


def write_report(out_dir: str | Path) -> str:
    """Build the comparison from summaries under ``out_dir``; also writes comparison.csv."""
    summaries = load_summaries(out_dir)
    text = render_report(summaries)
    header, rows, _ = comparison_table(summaries)
    csv_lines = [",".join(header)] + [",".join(r) for r in rows]
    (Path(out_dir) / "comparison.csv").write_text("\n".join(csv_lines) + "\n")
    return text
