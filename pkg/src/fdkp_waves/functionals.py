"""Energies, Nehari parts, steady residuals and their L2 gradients.

Every functional here has the shape

    F(u) = 1/2 <L u, u> + 1/(p+1) * integral(u^(p+1))

for a non-negative Fourier multiplier L, so a single kernel (:class:`QuadraticCubic`)
serves the full-dispersion energy, the speed-shifted functional I_eps and the KP
functional T_0. Gradients are taken with respect to the L2 inner product, so the
gradient coincides with the steady residual ``L u + P(u^p)``, where ``P`` removes the
k1 = 0 modes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid_spectral import Field, Grid2D, check_zero_xmean, fwd, inv, norm_weight, NormKind, weighted_sum
from .symbols import SymbolTable

ALLOWED_POWERS = (2, 3, 4)


@dataclass
class FunctionalValue:
    value: float
    Q: float = math.nan
    S: float = math.nan
    remainder: float = 0.0
    gradient: Field | None = None
    aux: dict = field(default_factory=dict)

    @property
    def grad_norm(self) -> float:
        if self.gradient is None:
            return math.nan
        return math.sqrt(weighted_sum(self.gradient.grid, 1.0, self.gradient.hat))

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "Q": self.Q,
            "S": self.S,
            "remainder": self.remainder,
            "grad_norm": self.grad_norm,
        }


def _padded_size(n: int, factor: float) -> int:
    m = int(math.ceil(n * factor))
    return m + (m % 2)


def power_hat(grid: Grid2D, hat: np.ndarray, values: np.ndarray, p: int, dealias: bool) -> np.ndarray:
    """Coefficients of ``u**p`` with the k1 = 0 row removed.

    With ``dealias`` the product is formed on a grid zero-padded by (p+1)/2 per axis so
    that every retained mode is free of aliasing.
    """
    if not dealias:
        out = fwd(grid, values**p)
    else:
        factor = 0.5 * (p + 1)
        mx, my = _padded_size(grid.nx, factor), _padded_size(grid.ny, factor)
        big = Grid2D(mx, my, grid.lx, grid.ly)
        hx, hy = grid.nx // 2, grid.ny // 2
        padded = np.zeros(big.spectral_shape, dtype=np.complex128)
        # positive and negative k1 halves; original Nyquist modes are dropped
        padded[:hx, :hy] = hat[:hx, :hy]
        padded[mx - hx + 1:, :hy] = hat[hx + 1:, :hy]
        wide = fwd(big, inv(big, padded) ** p)
        out = np.zeros(grid.spectral_shape, dtype=np.complex128)
        out[:hx, :hy] = wide[:hx, :hy]
        out[hx + 1:, :hy] = wide[mx - hx + 1:, :hy]
    out[0, :] = 0.0
    return out


class QuadraticCubic:
    """Evaluator for ``1/2 <L u, u> + 1/(p+1) integral u^(p+1)`` on raw coefficient arrays."""

    def __init__(self, grid: Grid2D, symbol: np.ndarray, p: int = 2, dealias: bool = False):
        if p not in ALLOWED_POWERS:
            raise ValueError(f"nonlinearity exponent must be one of {ALLOWED_POWERS}, got {p}")
        self.grid = grid
        self.symbol = np.asarray(symbol)
        self.p = p
        self.dealias = dealias

    def parts(self, hat: np.ndarray) -> tuple[float, float, np.ndarray]:
        """(Q, S, coefficients of P(u^p))."""
        vals = inv(self.grid, hat)
        pw = power_hat(self.grid, hat, vals, self.p, self.dealias)
        Q = 0.5 * weighted_sum(self.grid, self.symbol, hat)
        S = weighted_sum(self.grid, 1.0, pw, hat) / (self.p + 1)
        return Q, S, pw

    def evaluate(self, hat: np.ndarray) -> tuple[float, float, np.ndarray]:
        """(Q, S, L2-gradient coefficients)."""
        Q, S, pw = self.parts(hat)
        return Q, S, self.symbol * hat + pw

    def value(self, hat: np.ndarray) -> float:
        Q, S, _ = self.parts(hat)
        return Q + S

    def functional_value(self, f: Field, with_gradient: bool = True) -> FunctionalValue:
        self.grid.require_same(f.grid)
        check_zero_xmean(f)
        hat = np.array(f.hat)
        hat[0, :] = 0.0
        Q, S, grad = self.evaluate(hat)
        g = Field.from_hat(self.grid, grad) if with_gradient else None
        return FunctionalValue(value=Q + S, Q=Q, S=S, gradient=g)


def _require_table(f: Field, table: SymbolTable) -> None:
    f.grid.require_same(table.grid)


def energy_fdkp(u: Field, table: SymbolTable, p: int = 2, dealias: bool = False) -> FunctionalValue:
    """Hamiltonian ``1/2 integral |m(D)^(1/2) u|^2 + 1/3 integral u^3``."""
    _require_table(u, table)
    return QuadraticCubic(table.grid, table.m, p, dealias).functional_value(u)


def momentum(u: Field) -> float:
    return 0.5 * weighted_sum(u.grid, 1.0, u.hat)


def i_eps_symbol(table: SymbolTable, eps: float) -> np.ndarray:
    """Multiplier ``eps^2 + n`` on the live modes."""
    live = table.grid.k1 != 0
    return np.where(live, eps * eps + table.n, 0.0)


def i_eps(u: Field, eps: float, table: SymbolTable, p: int = 2, dealias: bool = False) -> FunctionalValue:
    """Speed-shifted functional ``1/2 integral (eps^2 u^2 + (n(D)^(1/2) u)^2) + 1/3 integral u^3``."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    _require_table(u, table)
    return QuadraticCubic(table.grid, i_eps_symbol(table, eps), p, dealias).functional_value(u)


def t0(zeta: Field, table: SymbolTable, p: int = 2, dealias: bool = False) -> FunctionalValue:
    """KP functional ``Q + S`` with ``Q = 1/2 |zeta|_Ytilde^2`` and ``S = 1/3 integral zeta^3``."""
    _require_table(zeta, table)
    return QuadraticCubic(table.grid, table.mt, p, dealias).functional_value(zeta)


def _dual_norm(grid: Grid2D, hat: np.ndarray, weight: np.ndarray) -> float:
    live = weight > 0
    return math.sqrt(weighted_sum(grid, np.where(live, 1.0 / np.where(live, weight, 1.0), 0.0), hat))


def residual_steady_kp(zeta: Field, table: SymbolTable, p: int = 2, dealias: bool = False) -> tuple[Field, dict]:
    """Residual ``m~(D) zeta + P(zeta^2)`` of the normalised steady KP equation.

    The Ytilde size of the residual is measured in the dual pairing, i.e. as the Ytilde
    norm of ``m~(D)^(-1)`` applied to the residual; it is reported relative to
    ``|zeta|_Ytilde``. The plain L2 size is reported relative to ``|m~(D) zeta|_L2``.
    """
    _require_table(zeta, table)
    check_zero_xmean(zeta)
    kern = QuadraticCubic(table.grid, table.mt, p, dealias)
    _, _, res = kern.evaluate(np.array(zeta.hat))
    grid = table.grid
    lin = table.mt * zeta.hat
    ynorm = math.sqrt(weighted_sum(grid, table.mt, zeta.hat))
    l2 = math.sqrt(weighted_sum(grid, 1.0, res))
    ydual = _dual_norm(grid, res, table.mt)
    lin_l2 = math.sqrt(weighted_sum(grid, 1.0, lin))
    norms = {
        "l2": l2,
        "ytilde": ydual,
        "rel_l2": l2 / lin_l2 if lin_l2 else (0.0 if l2 == 0 else math.inf),
        "rel_ytilde": ydual / ynorm if ynorm else (0.0 if ydual == 0 else math.inf),
    }
    return Field.from_hat(grid, res), norms


def residual_steady_fdkp(u: Field, eps: float, table: SymbolTable, p: int = 2, dealias: bool = False,
                         s: float = 2.0) -> tuple[Field, dict]:
    """Residual ``eps^2 u + n(D) u + P(u^2)`` of the steady full-dispersion equation.

    Reported in L2 and Z, each relative to the same norm of the linear part.
    """
    _require_table(u, table)
    check_zero_xmean(u)
    sym = i_eps_symbol(table, eps)
    kern = QuadraticCubic(table.grid, sym, p, dealias)
    _, _, res = kern.evaluate(np.array(u.hat))
    grid = table.grid
    lin = sym * u.hat
    wz = norm_weight(grid, NormKind.Z(s))
    l2 = math.sqrt(weighted_sum(grid, 1.0, res))
    z = math.sqrt(weighted_sum(grid, wz, res))
    lin_l2 = math.sqrt(weighted_sum(grid, 1.0, lin))
    lin_z = math.sqrt(weighted_sum(grid, wz, lin))
    norms = {
        "l2": l2,
        "z": z,
        "rel_l2": l2 / lin_l2 if lin_l2 else (0.0 if l2 == 0 else math.inf),
        "rel_z": z / lin_z if lin_z else (0.0 if z == 0 else math.inf),
    }
    return Field.from_hat(grid, res), norms
