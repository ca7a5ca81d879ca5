"""Fourier multipliers of the full-dispersion and KP problems on a lattice.

The full-dispersion symbol is

    m(k) = ((1 + beta |k|^2) tanh|k| / |k|)^(1/2) * (1 + 2 k2^2 / k1^2)^(1/2)

and its long-wave model is m~(k) = 1 + k2^2/k1^2 + a k1^2 with a = (beta - 1/3)/2.
Both agree up to fourth order in (k1, k2/k1). ``n = m - 1`` and ``n~ = m~ - 1`` are
evaluated without cancellation so that they stay accurate at tiny wavenumbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid_spectral import Grid2D

# Series of tanh(t)/t - 1 in powers of t^2, used below SERIES_CUTOFF.
_TANH_SERIES = (
    -1.0 / 3.0,
    2.0 / 15.0,
    -17.0 / 315.0,
    62.0 / 2835.0,
    -1382.0 / 155925.0,
    21844.0 / 6081075.0,
)
SERIES_CUTOFF = 0.05


class SymbolError(ValueError):
    """A symbol is undefined at the requested point or an invariant fails."""


def kp_coefficient(beta: float) -> float:
    """Coefficient a = (beta - 1/3)/2 of k1^2 in the KP symbol."""
    return 0.5 * (beta - 1.0 / 3.0)


def _tanhc_minus_one(k: np.ndarray) -> np.ndarray:
    """tanh(k)/k - 1, accurate for all k >= 0."""
    k = np.asarray(k, dtype=np.float64)
    t2 = k * k
    series = np.zeros_like(k)
    for c in reversed(_TANH_SERIES):
        series = series * t2 + c
    series *= t2
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.tanh(k) / np.where(k == 0, 1.0, k) - 1.0
    return np.where(k < SERIES_CUTOFF, series, direct)


def _n_and_m(k1: np.ndarray, k2: np.ndarray, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """(n, m) at points with k1 != 0 or k = 0; other points give garbage and are masked later."""
    k1 = np.asarray(k1, dtype=np.float64)
    k2 = np.asarray(k2, dtype=np.float64)
    kk2 = k1 * k1 + k2 * k2
    th_m1 = _tanhc_minus_one(np.sqrt(kk2))
    # g = (1 + beta|k|^2) tanh|k|/|k| - 1
    g = beta * kk2 * (1.0 + th_m1) + th_m1
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(k1 == 0, 0.0, k2 * k2 / np.where(k1 == 0, 1.0, k1 * k1))
    m2_minus_1 = g + 2.0 * r2 * (1.0 + g)
    m = np.sqrt(1.0 + m2_minus_1)
    n = m2_minus_1 / (m + 1.0)
    return n, m


def _check_point(k1: float, k2: float) -> None:
    if k1 == 0 and k2 != 0:
        raise SymbolError(f"symbol undefined on the k1 = 0 axis at (k1, k2) = ({k1}, {k2})")


def eval_m(k1: float, k2: float, beta: float) -> float:
    """Full-dispersion symbol at one point; equals 1 at the origin."""
    _check_point(k1, k2)
    return float(_n_and_m(k1, k2, beta)[1])


def eval_n(k1: float, k2: float, beta: float) -> float:
    _check_point(k1, k2)
    return float(_n_and_m(k1, k2, beta)[0])


def eval_mtilde(k1: float, k2: float, beta: float) -> float:
    """Long-wave symbol 1 + k2^2/k1^2 + a k1^2 (needs k1 != 0)."""
    if k1 == 0:
        raise SymbolError(f"KP symbol undefined at k1 = 0 (k2 = {k2})")
    return 1.0 + (k2 / k1) ** 2 + kp_coefficient(beta) * k1 * k1


def cone_indicator(k1, k2, delta: float):
    """1 inside the cone |k| <= delta, |k2| <= delta |k1|; vectorised."""
    k1 = np.asarray(k1, dtype=np.float64)
    k2 = np.asarray(k2, dtype=np.float64)
    inside = (k1 * k1 + k2 * k2 <= delta * delta) & (np.abs(k2) <= delta * np.abs(k1))
    inside = inside | ((k1 == 0) & (k2 == 0))
    out = inside.astype(np.float64)
    return float(out) if out.ndim == 0 else out


def approximation_slope(beta: float, deltas=(0.4, 0.2, 0.1), samples: int = 401) -> tuple[float, list[float]]:
    """Log-log slope of max_{cone(delta)} |m - m~| against delta.

    The cone is sampled densely in polar-like coordinates (k1, r = k2/k1) rather than on a
    lattice so that the maximum is resolved at every delta.
    """
    a = kp_coefficient(beta)
    maxima = []
    for d in deltas:
        k1 = np.linspace(-d, d, samples)
        k1 = k1[k1 != 0][:, None]
        r = np.linspace(-d, d, samples)[None, :]
        k2 = r * k1
        keep = k1**2 + k2**2 <= d * d
        n, _ = _n_and_m(k1, k2, beta)
        nt = r**2 + a * k1**2
        maxima.append(float(np.max(np.abs(n - nt)[keep])))
    slope = float(np.polyfit(np.log(deltas), np.log(maxima), 1)[0])
    return slope, maxima


@dataclass(frozen=True, eq=False)
class SymbolTable:
    """Multiplier arrays on ``grid`` for given beta, delta and (optionally) eps.

    All arrays have the grid's spectral shape and vanish on the k1 = 0 row.
    ``chi_scaled`` is chi(eps k1, eps^2 k2), the cone as seen from the KP-scaled variables.
    """

    grid: Grid2D
    beta: float
    delta: float
    eps: float | None
    m: np.ndarray
    mt: np.ndarray
    n: np.ndarray
    nt: np.ndarray
    chi: np.ndarray
    off_inv_n: np.ndarray
    ratio_sqrt: np.ndarray
    ratio_sqrt_inv: np.ndarray
    chi_scaled: np.ndarray | None
    n_min_offcone: float
    ratio_range: tuple[float, float]
    ratio_constant: float

    @property
    def a(self) -> float:
        return kp_coefficient(self.beta)

    def diagnostics(self) -> dict:
        return {
            "beta": self.beta,
            "delta": self.delta,
            "eps": self.eps,
            "n_min_offcone": self.n_min_offcone,
            "ratio_min": self.ratio_range[0],
            "ratio_max": self.ratio_range[1],
            "ratio_constant": self.ratio_constant,
            "cone_modes": int(np.count_nonzero(self.chi)),
        }


def _fail(grid: Grid2D, mask: np.ndarray, what: str) -> None:
    i, j = np.argwhere(mask)[0]
    k1 = float(grid.k1[i, 0])
    k2 = float(grid.k2[0, j])
    raise SymbolError(f"{what} at lattice point (i, j) = ({i}, {j}), (k1, k2) = ({k1:.6g}, {k2:.6g})")


def build_table(grid: Grid2D, beta: float, delta: float, eps: float | None = None) -> SymbolTable:
    """Assemble every multiplier and run the positivity and range checks."""
    if not beta > 1.0 / 3.0:
        raise SymbolError(f"Bond number must exceed 1/3, got {beta}")
    if not 0.0 < delta <= 0.5:
        raise SymbolError(f"cone width must lie in (0, 0.5], got {delta}")
    if eps is not None and not 0.0 < eps < 1.0:
        raise SymbolError(f"eps must lie in (0, 1), got {eps}")

    shape = grid.spectral_shape
    k1 = np.broadcast_to(grid.k1, shape)
    k2 = np.broadcast_to(grid.k2, shape)
    live = k1 != 0

    n, m = _n_and_m(k1, k2, beta)
    safe = np.where(live, k1, 1.0)
    nt = (k2 / safe) ** 2 + kp_coefficient(beta) * k1 * k1
    n = np.where(live, n, 0.0)
    m = np.where(live, m, 0.0)
    nt = np.where(live, nt, 0.0)
    mt = np.where(live, 1.0 + nt, 0.0)
    chi = np.where(live, cone_indicator(k1, k2, delta), 0.0)

    if np.any(live & ~(m >= 1.0 - 1e-14)):
        _fail(grid, live & ~(m >= 1.0 - 1e-14), "m < 1")
    if np.any(live & ~(nt > 0)):
        _fail(grid, live & ~(nt > 0), "KP symbol not positive")
    off = live & (chi == 0)
    if np.any(off & ~(n > 1e-12)):
        _fail(grid, off & ~(n > 1e-12), "n not positive outside the cone")
    n_min_off = float(n[off].min()) if off.any() else math.inf

    on = chi > 0
    ratio = np.where(on, np.sqrt(np.where(on, n, 1.0) / np.where(on, nt, 1.0)), 0.0)
    if on.any():
        rmin, rmax = float(ratio[on].min()), float(ratio[on].max())
        rconst = max(abs(rmin - 1.0), abs(rmax - 1.0)) / delta**2
    else:
        rmin = rmax = 1.0
        rconst = 0.0
    ratio_inv = np.where(on, 1.0 / np.where(on, ratio, 1.0), 0.0)
    off_inv_n = np.where(off, 1.0 / np.where(off, n, 1.0), 0.0)

    chi_scaled = None
    if eps is not None:
        chi_scaled = np.where(live, cone_indicator(eps * k1, eps * eps * k2, delta), 0.0)

    arrays = dict(m=m, mt=mt, n=n, nt=nt, chi=chi, off_inv_n=off_inv_n,
                  ratio_sqrt=ratio, ratio_sqrt_inv=ratio_inv, chi_scaled=chi_scaled)
    for arr in arrays.values():
        if arr is not None:
            arr.flags.writeable = False
    return SymbolTable(
        grid=grid, beta=float(beta), delta=float(delta), eps=eps, **arrays,
        n_min_offcone=n_min_off, ratio_range=(rmin, rmax), ratio_constant=rconst,
    )
