"""Grid-sampled payments, controls and rebate-contract prices.

A ``PaymentSchedule`` stores the drift payments z and volatility payments
gamma on the scenario grid.  Monopoly schedules carry one z column per
technology; competitive schedules carry four, ordered (z11, z12, z21, z22)
where ``zNJ`` is the payment inside firm N's contract attached to state
channel J.  Gamma columns always hold one own-channel payment per technology.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TimeGrid
from .errors import DomainError

Z_COLUMNS = {"M": ("z1", "z2"), "C": ("z11", "z12", "z21", "z22")}
GAMMA_COLUMNS = {"M": ("gamma1", "gamma2"), "C": ("gamma11", "gamma22")}


@dataclass(frozen=True, eq=False)
class PaymentSchedule:
    """Second-best payments on a grid, plus solver diagnostics."""

    grid: TimeGrid
    structure: str                # "M" | "C"
    z: np.ndarray                 # (n, 2) or (n, 4)
    gamma: np.ndarray             # (n, 2)
    wp: np.ndarray                # (n, 2) regulator shadow prices
    vol_control: bool
    residual: float = 0.0
    iterations: int = 0

    def __post_init__(self):
        n = self.grid.n
        want_z = len(Z_COLUMNS[self.structure])
        if self.z.shape != (n, want_z) or self.gamma.shape != (n, 2) or self.wp.shape != (n, 2):
            raise DomainError("payment arrays do not match the grid")

    @property
    def z_columns(self) -> tuple[str, ...]:
        return Z_COLUMNS[self.structure]

    @property
    def gamma_columns(self) -> tuple[str, ...]:
        return GAMMA_COLUMNS[self.structure]

    def own_z(self) -> np.ndarray:
        """Per-technology own payments: (z1, z2) or (z11, z22); shape (n, 2)."""
        if self.structure == "M":
            return self.z
        return self.z[:, [0, 3]]

    def firm_z(self, firm: int) -> np.ndarray:
        """Both channels of one firm's contract; shape (n, 2)."""
        if self.structure == "M":
            if firm != 0:
                raise DomainError("monopoly schedule has a single firm")
            return self.z
        return self.z[:, [0, 1]] if firm == 0 else self.z[:, [2, 3]]

    def total_z(self) -> np.ndarray:
        """Per-channel sum over firms; shape (n, 2)."""
        if self.structure == "M":
            return self.z
        return self.z[:, [0, 1]] + self.z[:, [2, 3]]


@dataclass(frozen=True, eq=False)
class ControlSchedule:
    """Drift and volatility controls per technology on a grid."""

    grid: TimeGrid
    a: np.ndarray                 # (n, 2) MW per year
    b: np.ndarray                 # (n, 2) MW per sqrt(year)
    label: str = ""

    def __post_init__(self):
        n = self.grid.n
        if self.a.shape != (n, 2) or self.b.shape != (n, 2):
            raise DomainError("control arrays do not match the grid")


@dataclass(frozen=True, eq=False)
class FirmContract:
    """Rebate prices of one firm's contract.

    The contract pays ``fixed`` plus, per channel j, the running price
    ``pi_drift[:, j]`` on the deviation X^j - X0^j, half of ``pi_vol[:, j]``
    on realised quadratic variation, and ``terminal_bonus[j]`` on the final
    deviation X^j_T - X0^j.
    """

    pi_drift: np.ndarray          # (n, 2)
    pi_vol: np.ndarray            # (n, 2)
    fixed: float
    terminal_bonus: np.ndarray    # (2,)


@dataclass(frozen=True, eq=False)
class ContractPrices:
    """All firms' rebate prices on a common grid."""

    grid: TimeGrid
    structure: str
    firms: tuple[FirmContract, ...]

    def __post_init__(self):
        want = 1 if self.structure == "M" else 2
        if len(self.firms) != want:
            raise DomainError("firm count does not match the market structure")


def zdot_central(z: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Time derivative by central differences, one-sided at the endpoints."""
    if grid.steps < 4:
        raise DomainError("grid too coarse for price differentiation (need >= 4 steps)")
    return np.gradient(z, grid.dt, axis=0)
