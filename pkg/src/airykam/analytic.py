"""Truncated analytic functions on the product torus (phi, x).

A function is a sparse Fourier series sum c(l, j) e^{i l.phi + i j x} with l
on the truncated frequency lattice and |j| <= jmax.  The weighted norm
sum e^{sigma(|l|_eta + |j|)} |c(l, j)| measures analyticity in a strip of
width sigma, shared between the phi and x directions.

Real-on-real functions satisfy c(l, j) = conj(c(-l, -j)); the flag is
enforced by exact symmetrization so the residual of that identity is zero.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from ._accel import convolve_into
from .errors import SmallDivisorError
from .lattice import (
    LatticeParams,
    MultiIndex,
    diophantine_weight,
    eta_norm,
    get_enumeration,
)

__all__ = [
    "AnalyticFunction",
    "ScalarSeries",
    "norm",
    "multiply",
    "linear_combination",
    "dx",
    "dx_inv",
    "om_dphi",
    "om_dphi_inv",
    "pi0",
    "pi0_perp",
    "project_N",
    "project_N_perp",
    "phi_average",
    "mean_phi_x",
    "lipschitz_norm",
    "compose_x_diffeo",
    "compose_phi_shift",
    "compose_x_translation",
    "invert_x_diffeo",
    "invert_phi_shift",
    "moser_compose",
    "to_payload",
    "from_payload",
]


def _sort_key(lattice):
    eta = lattice.eta

    def key(item):
        (l, j), _ = item
        return (eta_norm(l, eta) if l else 0.0, l.entries, j)

    return key


class AnalyticFunction:
    """Sparse truncated Fourier series; immutable by convention."""

    __slots__ = ("lattice", "jmax", "coeffs", "real")

    def __init__(self, lattice: LatticeParams, jmax: int, coeffs=None, real=True):
        if jmax < 0:
            raise ValueError("jmax must be >= 0")
        self.lattice = lattice
        self.jmax = int(jmax)
        self.real = bool(real)
        self.coeffs = self._finalize(coeffs or {})

    def _finalize(self, raw):
        enum = get_enumeration(self.lattice)
        kept = {}
        for (l, j), c in raw.items():
            if c == 0 or abs(j) > self.jmax or l not in enum.index_of:
                continue
            kept[(l, j)] = complex(c)
        if self.real:
            keys = set(kept) | {(-l, -j) for (l, j) in kept if abs(j) <= self.jmax}
            half = {}
            for (l, j) in keys:
                c = kept.get((l, j), 0.0)
                mirror = kept.get((-l, -j), 0.0)
                val = 0.5 * (complex(c) + np.conj(complex(mirror)))
                if val != 0:
                    half[(l, j)] = val
            kept = half
        return dict(sorted(kept.items(), key=_sort_key(self.lattice)))

    # -- constructors -----------------------------------------------------

    @classmethod
    def zeros(cls, lattice, jmax, real=True):
        return cls(lattice, jmax, {}, real=real)

    @classmethod
    def constant(cls, lattice, jmax, value, real=None):
        real = (abs(complex(value).imag) == 0.0) if real is None else real
        return cls(lattice, jmax, {(MultiIndex.zero(), 0): complex(value)}, real=real)

    @classmethod
    def from_modes(cls, lattice, jmax, modes, real=True):
        """Build from an iterable of (MultiIndex, j, amplitude).

        With ``real=True`` the conjugate modes are filled in automatically,
        so ``[(l, j, a)]`` yields a e^{i(l.phi+jx)} + conj(a) e^{-i(l.phi+jx)}.
        """
        coeffs = {}
        for l, j, a in modes:
            coeffs[(l, j)] = coeffs.get((l, j), 0.0) + complex(a)
            if real and (l, j) != (-l, -j):
                key = (-l, -j)
                coeffs[key] = coeffs.get(key, 0.0) + np.conj(complex(a))
        return cls(lattice, jmax, coeffs, real=real)

    # -- basic accessors ---------------------------------------------------

    def get(self, l, j):
        return self.coeffs.get((l, j), 0j)

    @property
    def zero_x_average(self) -> bool:
        return all(j != 0 for (_, j) in self.coeffs)

    @property
    def phi_only(self) -> bool:
        return all(j == 0 for (_, j) in self.coeffs)

    def norm(self, sigma: float) -> float:
        """Strip norm sum e^{sigma(|l|_eta + |j|)} |c(l, j)|."""
        if sigma < 0:
            raise ValueError("sigma must be >= 0")
        eta = self.lattice.eta
        total = 0.0
        for (l, j), c in self.coeffs.items():
            total += math.exp(sigma * (eta_norm(l, eta) if l else 0.0) + sigma * abs(j)) * abs(c)
        return total

    def prune(self, tol: float) -> "AnalyticFunction":
        if tol <= 0:
            return self
        kept = {k: c for k, c in self.coeffs.items() if abs(c) > tol}
        return AnalyticFunction(self.lattice, self.jmax, kept, real=self.real)

    def arrays(self, enum=None):
        """Canonical parallel arrays (lattice index, j, value)."""
        enum = enum or get_enumeration(self.lattice)
        n = len(self.coeffs)
        il = np.empty(n, dtype=np.int64)
        jj = np.empty(n, dtype=np.int64)
        vv = np.empty(n, dtype=complex)
        for k, ((l, j), c) in enumerate(self.coeffs.items()):
            il[k] = enum.index_of[l]
            jj[k] = j
            vv[k] = c
        return il, jj, vv

    def conjugate_symmetry_residual(self) -> float:
        """Max |c(l,j) - conj(c(-l,-j))|; zero for enforced real functions."""
        worst = 0.0
        for (l, j), c in self.coeffs.items():
            worst = max(worst, abs(c - np.conj(self.coeffs.get((-l, -j), 0j))))
        return worst

    # -- linear structure ---------------------------------------------------

    def _check_compat(self, other):
        if self.lattice != other.lattice or self.jmax != other.jmax:
            raise ValueError("incompatible truncations")

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = AnalyticFunction.constant(self.lattice, self.jmax, other)
        self._check_compat(other)
        out = dict(self.coeffs)
        for k, c in other.coeffs.items():
            out[k] = out.get(k, 0.0) + c
        return AnalyticFunction(self.lattice, self.jmax, out, real=self.real and other.real)

    __radd__ = __add__

    def __neg__(self):
        return AnalyticFunction(
            self.lattice, self.jmax, {k: -c for k, c in self.coeffs.items()}, real=self.real
        )

    def __sub__(self, other):
        if isinstance(other, (int, float, complex)):
            other = AnalyticFunction.constant(self.lattice, self.jmax, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        if isinstance(scalar, AnalyticFunction):
            return multiply(self, scalar)
        s = complex(scalar)
        real = self.real and s.imag == 0.0
        return AnalyticFunction(
            self.lattice, self.jmax, {k: c * s for k, c in self.coeffs.items()}, real=real
        )

    __rmul__ = __mul__

    def __repr__(self):
        return (
            f"AnalyticFunction(M={self.lattice.M}, K={self.lattice.K}, "
            f"jmax={self.jmax}, modes={len(self.coeffs)})"
        )


def norm(u: AnalyticFunction, sigma: float) -> float:
    return u.norm(sigma)


def multiply(u: AnalyticFunction, v: AnalyticFunction, prune_rel: float = 1e-18) -> AnalyticFunction:
    """Spectral product, truncated back to the common lattice and jmax.

    Direct sparse convolution over nonzero coefficient pairs; entries below
    ``prune_rel * |u|_0 |v|_0`` are dropped (that floor keeps supports sparse
    and perturbs the product by far less than any verification tolerance).
    """
    u._check_compat(v)
    if not u.coeffs or not v.coeffs:
        return AnalyticFunction.zeros(u.lattice, u.jmax, real=u.real and v.real)
    enum = get_enumeration(u.lattice)
    conv = enum.conv_table()
    ia, ja, va = u.arrays(enum)
    ib, jb, vb = v.arrays(enum)
    nj = 2 * u.jmax + 1
    out = np.zeros((enum.size, nj), dtype=complex)
    convolve_into(ia, ja, va, ib, jb, vb, conv, u.jmax, out)
    tol = prune_rel * u.norm(0.0) * v.norm(0.0)
    coeffs = {}
    rows, cols = np.nonzero(out)
    for r, cidx in zip(rows, cols):
        c = out[r, cidx]
        if abs(c) > tol:
            coeffs[(enum.indices[r], int(cidx) - u.jmax)] = c
    return AnalyticFunction(u.lattice, u.jmax, coeffs, real=u.real and v.real)


def linear_combination(funcs, weights, real=False) -> AnalyticFunction:
    """sum_k weights[k] * funcs[k]; the result is flagged real only on request."""
    funcs = list(funcs)
    if not funcs:
        raise ValueError("need at least one function")
    out = {}
    for f, w in zip(funcs, weights):
        funcs[0]._check_compat(f)
        w = complex(w)
        for k, c in f.coeffs.items():
            out[k] = out.get(k, 0.0) + w * c
    return AnalyticFunction(funcs[0].lattice, funcs[0].jmax, out, real=real)


def dx(u: AnalyticFunction, order: int = 1) -> AnalyticFunction:
    """Spatial derivative: c(l, j) -> (i j)^order c(l, j)."""
    if order < 1:
        raise ValueError("order must be >= 1")
    out = {}
    for (l, j), c in u.coeffs.items():
        if j != 0:
            out[(l, j)] = (1j * j) ** order * c
    return AnalyticFunction(u.lattice, u.jmax, out, real=u.real)


def dx_inv(u: AnalyticFunction) -> AnalyticFunction:
    """Zero-average spatial antiderivative; rejects nonzero x-average input."""
    if not u.zero_x_average:
        raise ValueError("dx_inv requires zero x-average")
    out = {(l, j): c / (1j * j) for (l, j), c in u.coeffs.items()}
    return AnalyticFunction(u.lattice, u.jmax, out, real=u.real)


def om_dphi(u: AnalyticFunction, omega) -> AnalyticFunction:
    """Directional derivative along the frequency vector: c -> i (omega.l) c."""
    om = np.asarray(omega, dtype=float)
    out = {}
    for (l, j), c in u.coeffs.items():
        if l:
            out[(l, j)] = 1j * float(np.dot(l.dense(len(om)), om)) * c
    return AnalyticFunction(u.lattice, u.jmax, out, real=u.real)


def om_dphi_inv(u: AnalyticFunction, omega, gamma: float) -> AnalyticFunction:
    """Solve omega.d_phi h = u for zero-phi-average u.

    Divisors |omega.l| are required to clear the Diophantine floor
    gamma * prod 1/(1 + l_i^2 i^2); a breach raises SmallDivisorError naming
    the offending index.  Divisors are never regularized.
    """
    om = np.asarray(omega, dtype=float)
    dust = 1e-13 * u.norm(0.0)
    out = {}
    for (l, j), c in u.coeffs.items():
        if not l:
            if abs(c) > dust:
                raise ValueError("om_dphi_inv requires zero phi-average")
            continue
        div = float(np.dot(l.dense(len(om)), om))
        floor = gamma * diophantine_weight(l)
        if abs(div) <= floor:
            raise SmallDivisorError(
                f"divisor |omega.l| = {abs(div):.3e} under floor {floor:.3e} at l={l!r}",
                l=l, divisor=div, floor=floor,
            )
        out[(l, j)] = c / (1j * div)
    return AnalyticFunction(u.lattice, u.jmax, out, real=u.real)


def pi0(u: AnalyticFunction) -> AnalyticFunction:
    """x-average: keep only the j = 0 column (a function of phi)."""
    out = {k: c for k, c in u.coeffs.items() if k[1] == 0}
    return AnalyticFunction(u.lattice, u.jmax, out, real=u.real)


def pi0_perp(u: AnalyticFunction) -> AnalyticFunction:
    out = {k: c for k, c in u.coeffs.items() if k[1] != 0}
    return AnalyticFunction(u.lattice, u.jmax, out, real=u.real)


def project_N(u: AnalyticFunction, N: float) -> AnalyticFunction:
    """Keep modes with |l|_eta <= N."""
    eta = u.lattice.eta
    out = {(l, j): c for (l, j), c in u.coeffs.items() if eta_norm(l, eta) <= N + 1e-12 or not l}
    return AnalyticFunction(u.lattice, u.jmax, out, real=u.real)


def project_N_perp(u: AnalyticFunction, N: float) -> AnalyticFunction:
    eta = u.lattice.eta
    out = {(l, j): c for (l, j), c in u.coeffs.items() if l and eta_norm(l, eta) > N + 1e-12}
    return AnalyticFunction(u.lattice, u.jmax, out, real=u.real)


def phi_average(u: AnalyticFunction) -> AnalyticFunction:
    """phi-average: keep only the l = 0 row (equals the coeff(0, .) column)."""
    out = {k: c for k, c in u.coeffs.items() if not k[0]}
    return AnalyticFunction(u.lattice, u.jmax, out, real=u.real)


def mean_phi_x(u: AnalyticFunction) -> complex:
    """Joint average over phi and x, i.e. the (0, 0) coefficient."""
    return u.get(MultiIndex.zero(), 0)


def lipschitz_norm(samples, gamma: float, sigma: float) -> float:
    """Finite-sample Lipschitz norm sup + gamma * max pairwise quotient.

    ``samples`` is a list of (omega, AnalyticFunction) at distinct frequency
    vectors; the quotient uses the sup-distance between the omegas.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise ValueError("need at least two samples")
    sup = max(f.norm(sigma) for _, f in samples)
    lip = 0.0
    for a in range(len(samples)):
        for b in range(a + 1, len(samples)):
            om_a, f_a = samples[a]
            om_b, f_b = samples[b]
            h = float(np.max(np.abs(np.asarray(om_a, float) - np.asarray(om_b, float))))
            if h == 0.0:
                raise ValueError("duplicate omega in Lipschitz samples")
            lip = max(lip, (f_a - f_b).norm(sigma) / h)
    return sup + gamma * lip


# -- serialization ----------------------------------------------------------


def to_payload(u: AnalyticFunction) -> dict:
    """JSON-ready document; floats round-trip exactly through json."""
    entries = [
        [[list(p) for p in l.pairs()], j, c.real, c.imag]
        for (l, j), c in u.coeffs.items()
    ]
    return {
        "lattice": {"eta": u.lattice.eta, "M": u.lattice.M, "K": u.lattice.K},
        "jmax": u.jmax,
        "real": u.real,
        "zero_x_average": u.zero_x_average,
        "entries": entries,
    }


def from_payload(doc: dict) -> AnalyticFunction:
    lat = LatticeParams(doc["lattice"]["eta"], doc["lattice"]["M"], doc["lattice"]["K"])
    coeffs = {}
    for pairs, j, re, im in doc["entries"]:
        l = MultiIndex.from_pairs([(int(s), int(v)) for s, v in pairs])
        coeffs[(l, int(j))] = complex(re, im)
    return AnalyticFunction(lat, int(doc["jmax"]), coeffs, real=bool(doc["real"]))


def dumps(u: AnalyticFunction) -> str:
    return json.dumps(to_payload(u), sort_keys=True, separators=(",", ":"))


def loads(text: str) -> AnalyticFunction:
    return from_payload(json.loads(text))


# -- grid-based operations (implemented in _grid) ----------------------------


@dataclass(frozen=True)
class ScalarSeries:
    """Descriptor of an analytic scalar map z -> fn(z) valid for |z| < radius."""

    fn: object
    radius: float
    label: str = ""


def compose_x_diffeo(u, alpha, **kw):
    """u(phi, x + alpha(phi, x)) re-expanded on an oversampled grid."""
    from . import _grid

    return _grid.compose_x_diffeo(u, alpha, **kw)


def compose_phi_shift(u, beta, omega, **kw):
    """u(phi + omega beta(phi), x)."""
    from . import _grid

    return _grid.compose_phi_shift(u, beta, omega, **kw)


def compose_x_translation(u, p, **kw):
    """u(phi, x + p(phi))."""
    from . import _grid

    return _grid.compose_x_translation(u, p, **kw)


def invert_x_diffeo(alpha, **kw):
    """Fixed-point inverse of x -> x + alpha(phi, x)."""
    from . import _grid

    return _grid.invert_x_diffeo(alpha, **kw)


def invert_phi_shift(beta, omega, **kw):
    """Fixed-point inverse of phi -> phi + omega beta(phi)."""
    from . import _grid

    return _grid.invert_phi_shift(beta, omega, **kw)


def moser_compose(series, u, **kw):
    """Composition fn(u) via grid evaluation and re-expansion."""
    from . import _grid

    return _grid.moser_compose(series, u, **kw)
