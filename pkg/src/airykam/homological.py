"""Constant-coefficient and diagonal homological equations by Fourier division.

Divisors are never regularized: a divisor under its floor is an error with a
witness, matching the Cantor-set philosophy (solve only for admissible
frequencies).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic import AnalyticFunction, om_dphi_inv
from .errors import SmallDivisorError
from .lattice import divisor_weight

__all__ = ["DiagonalModel", "solve_airy", "solve_diagonal", "solve_scalar_phi"]


@dataclass
class DiagonalModel:
    """Diagonal frequencies Omega(j) over 1 <= |j| <= jmax plus the vector omega."""

    Omega: dict
    omega: np.ndarray

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.Omega = {int(j): float(v) for j, v in self.Omega.items()}
        if any(j == 0 for j in self.Omega):
            raise ValueError("Omega is defined for j != 0")

    def reality_defect(self) -> float:
        """Max |Omega(-j) + Omega(j)|; zero for the spectrum of a real operator."""
        worst = 0.0
        for j, v in self.Omega.items():
            worst = max(worst, abs(v + self.Omega.get(-j, -v)))
        return worst


def solve_airy(f: AnalyticFunction, omega, gamma0: float,
               lambda3: float = 1.0) -> AnalyticFunction:
    """h with (omega.d_phi + lambda3 dx^3) h = -f, exactly on the truncation.

    Requires zero x-average f; each divisor omega.l - lambda3 j^3 must clear
    the floor gamma0 / d(l).
    """
    if not f.zero_x_average:
        raise ValueError("forcing must have zero x-average")
    om = np.asarray(omega, dtype=float)
    out = {}
    for (l, j), c in f.coeffs.items():
        div = float(np.dot(l.dense(len(om)), om)) - lambda3 * j**3
        floor = gamma0 / divisor_weight(l)
        if abs(div) < floor:
            raise SmallDivisorError(
                f"divisor {abs(div):.3e} under floor {floor:.3e} at (l={l!r}, j={j})",
                l=l, j=j, divisor=div, floor=floor,
            )
        out[(l, j)] = -c / (1j * div)
    return AnalyticFunction(f.lattice, f.jmax, out, real=f.real)


def solve_diagonal(model: DiagonalModel, f: AnalyticFunction, gamma: float) -> AnalyticFunction:
    """h with (omega.d_phi + D) h = -f for D = diag i Omega(j).

    Divisors omega.l + Omega(j) carry the first-order Melnikov floor
    gamma |j|^3 / d(l).
    """
    if not f.zero_x_average:
        raise ValueError("forcing must have zero x-average")
    om = model.omega
    out = {}
    for (l, j), c in f.coeffs.items():
        if j not in model.Omega:
            raise ValueError(f"mode j={j} outside the frequency table")
        div = float(np.dot(l.dense(len(om)), om)) + model.Omega[j]
        floor = gamma * abs(j) ** 3 / divisor_weight(l)
        if abs(div) < floor:
            raise SmallDivisorError(
                f"divisor {abs(div):.3e} under Melnikov floor {floor:.3e} at (l={l!r}, j={j})",
                l=l, j=j, divisor=div, floor=floor,
            )
        out[(l, j)] = -c / (1j * div)
    return AnalyticFunction(f.lattice, f.jmax, out, real=f.real)


def solve_scalar_phi(rhs: AnalyticFunction, omega, gamma: float) -> AnalyticFunction:
    """Solve omega.d_phi b = rhs for zero-phi-average rhs of phi alone.

    Delegates to om_dphi_inv with the Diophantine floor gamma * prod
    1/(1 + l_i^2 i^2).
    """
    if not rhs.phi_only:
        raise ValueError("right-hand side must depend on phi only")
    return om_dphi_inv(rhs, omega, gamma)
