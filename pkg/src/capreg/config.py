"""Flat key-value scenario configuration files.

One scenario per file, ``key = value`` lines, ``#`` comments.  A batch
manifest instead holds one or more ``run = path/to/scenario.cfg`` lines.
Numeric values accept plain floats and simple fractions like ``1/52``.
Omitted keys fall back to the reference calibration; every supplied value
must parse and be finite, and unknown keys are rejected with the offending
line number.
"""

from __future__ import annotations

import dataclasses
import math
from pathlib import Path

from .core import MarketSpec, reference_market
from .errors import ConfigError
from .scenarios import ScenarioConfig, parse_scenario_name

_FLOAT_KEYS = {
    "T", "dt", "kappa",
    "p", "k1", "k2", "h", "eta_p",
    "l1", "l2", "q1", "q2", "eps",
    "phi1", "phi2", "sigma1", "sigma2", "delta1", "delta2",
    "eta_a", "eta1", "eta2",
    "x0_1", "x0_2", "e0", "e0_1", "e0_2",
}
_INT_KEYS = {"n_paths", "seed"}
_STR_KEYS = {"scenario", "out"}
_MANIFEST_KEY = "run"
KNOWN_KEYS = _FLOAT_KEYS | _INT_KEYS | _STR_KEYS | {_MANIFEST_KEY}


def _parse_float(text: str, key: str, line: int) -> float:
    text = text.strip()
    try:
        if "/" in text:
            num, den = text.split("/", 1)
            value = float(num) / float(den)
        else:
            value = float(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"cannot parse numeric value {text!r}", field=key, line=line) from exc
    if not math.isfinite(value):
        raise ConfigError("value must be finite", field=key, line=line)
    return value


def read_pairs(path: str | Path) -> list[tuple[str, str, int]]:
    """(key, raw value, line number) triples from a flat config file."""
    pairs = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError("unknown configuration key", field=key, line=lineno)
        if not value:
            raise ConfigError("missing value", field=key, line=lineno)
        pairs.append((key, value, lineno))
    return pairs


def is_manifest(pairs: list[tuple[str, str, int]]) -> bool:
    return any(key == _MANIFEST_KEY for key, _, _ in pairs)


def manifest_entries(pairs: list[tuple[str, str, int]], base: Path) -> list[Path]:
    entries = [base / value for key, value, _ in pairs if key == _MANIFEST_KEY]
    bad = [key for key, _, _ in pairs if key != _MANIFEST_KEY]
    if bad:
        raise ConfigError("a manifest may only contain 'run' lines", field=bad[0])
    return entries


def build_scenario_config(
    pairs: list[tuple[str, str, int]],
    scenario_override: str | None = None,
    n_paths_override: int | None = None,
    seed_override: int | None = None,
) -> ScenarioConfig:
    """Turn parsed pairs into a runnable scenario configuration."""
    values: dict[str, float] = {}
    ints: dict[str, int] = {}
    name = None
    for key, raw, lineno in pairs:
        if key == _MANIFEST_KEY:
            raise ConfigError("manifest entry in a scenario file", field=key, line=lineno)
        if key == "out":
            continue
        if key == "scenario":
            name = raw
        elif key in _INT_KEYS:
            try:
                ints[key] = int(raw)
            except ValueError as exc:
                raise ConfigError(f"cannot parse integer {raw!r}", field=key, line=lineno) from exc
        else:
            if key in values:
                raise ConfigError("duplicate key", field=key, line=lineno)
            values[key] = _parse_float(raw, key, lineno)

    if scenario_override is not None:
        name = scenario_override
    if name is None:
        raise ConfigError("no scenario given (config key 'scenario' or --scenario)", field="scenario")
    try:
        market, _, _ = parse_scenario_name(name)
    except Exception as exc:
        raise ConfigError(str(exc), field="scenario") from exc

    spec = _build_spec(market, values)
    kwargs = {}
    if "T" in values:
        kwargs["horizon"] = values["T"]
    if "dt" in values:
        kwargs["dt"] = values["dt"]
    if "kappa" in values:
        kwargs["kappa"] = values["kappa"]
    kwargs["n_paths"] = n_paths_override if n_paths_override is not None else ints.get("n_paths", 1000)
    kwargs["seed"] = seed_override if seed_override is not None else ints.get("seed", 42)
    return ScenarioConfig.from_name(name, spec=spec, **kwargs)


def _build_spec(market: str, values: dict[str, float]) -> MarketSpec:
    spec = reference_market(market)
    agents = list(spec.agents)
    principal = spec.principal

    eta = list(spec.eta_agents)
    if "eta_a" in values:
        eta = [values["eta_a"], values["eta_a"]]
    if "eta1" in values:
        eta[0] = values["eta1"]
    if "eta2" in values:
        eta[1] = values["eta2"]
    if market == "M" and eta[0] != eta[1]:
        raise ConfigError("monopoly requires equal risk aversions (use eta_a)", field="eta1")

    per_tech = {
        "l": ("linear_cost", ("l1", "l2")),
        "q": ("quadratic_cost", ("q1", "q2")),
        "phi": ("vol_cost_scale", ("phi1", "phi2")),
        "sigma": ("uncontrolled_vol", ("sigma1", "sigma2")),
        "delta": ("depreciation", ("delta1", "delta2")),
    }
    for j in range(2):
        changes: dict[str, float] = {"risk_aversion": eta[j]}
        for attr, keys in per_tech.values():
            if keys[j] in values:
                changes[attr] = values[keys[j]]
        res_key = f"e0_{j + 1}"
        if res_key in values:
            changes["reservation"] = values[res_key]
        agents[j] = dataclasses.replace(agents[j], **changes)

    principal = dataclasses.replace(
        principal,
        power_price=values.get("p", principal.power_price),
        externality=(
            values.get("k1", principal.externality[0]),
            values.get("k2", principal.externality[1]),
        ),
        vol_penalty=values.get("h", principal.vol_penalty),
        risk_aversion=values.get("eta_p", principal.risk_aversion),
    )
    return dataclasses.replace(
        spec,
        agents=tuple(agents),
        congestion=values.get("eps", spec.congestion),
        principal=principal,
        x0=(values.get("x0_1", spec.x0[0]), values.get("x0_2", spec.x0[1])),
        reservation=values.get("e0", spec.reservation),
    )
