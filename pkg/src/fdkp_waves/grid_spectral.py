"""Periodic grids, spectral transforms, the zero x-mean constraint and weighted norms.

Conventions (fixed once for the whole package):

* Samples are stored in arrays of shape ``(nx, ny)``; axis 0 is ``x`` and axis 1 is ``y``.
  Physical coordinates are ``x_i = -lx/2 + i*dx`` so the box centre sits at index ``nx//2``.
* Spectral arrays come from a real 2-D FFT along both axes and have shape
  ``(nx, ny//2 + 1)``. Axis 0 holds ``k1`` in FFT order and axis 1 holds ``k2 >= 0``.
* Coefficients are scaled by ``sqrt(lx*ly)/(nx*ny)``, which makes the discrete transform
  unitary: ``integral(u**2) = sum(mult * |c|**2)``, where ``mult`` counts each stored
  ``k2 > 0`` column twice to stand in for its conjugate partner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft as sfft

FFT_WORKERS = -1  # all cores; each 1-D transform is independent, so results are bitwise stable

# Coefficients on the k1 = 0 row below this fraction of the largest coefficient are treated
# as round-off when checking the zero x-mean invariant.
XMEAN_TOL = 1e-10


class InvariantViolation(ValueError):
    """A field breaks a structural invariant, such as zero x-mean or spectral support."""


class GridMismatch(ValueError):
    """Two operands live on different grids."""


@dataclass(frozen=True)
class Grid2D:
    """Periodic rectangle ``[-lx/2, lx/2) x [-ly/2, ly/2)`` with ``nx x ny`` samples."""

    nx: int
    ny: int
    lx: float
    ly: float

    def __post_init__(self):
        for name in ("nx", "ny"):
            val = getattr(self, name)
            if int(val) != val or val < 8 or val % 2:
                raise ValueError(f"{name} must be an even integer >= 8, got {val!r}")
            object.__setattr__(self, name, int(val))
        for name in ("lx", "ly"):
            val = float(getattr(self, name))
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive and finite, got {val!r}")
            object.__setattr__(self, name, val)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.nx, self.ny // 2 + 1)

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def coef_scale(self) -> float:
        return math.sqrt(self.lx * self.ly) / (self.nx * self.ny)

    @cached_property
    def x(self) -> np.ndarray:
        return -0.5 * self.lx + self.dx * np.arange(self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return -0.5 * self.ly + self.dy * np.arange(self.ny)

    @cached_property
    def k1(self) -> np.ndarray:
        """Column vector ``(nx, 1)`` of x-wavenumbers in FFT order."""
        return (2 * np.pi * sfft.fftfreq(self.nx, d=self.dx))[:, None]

    @cached_property
    def k2(self) -> np.ndarray:
        """Row vector ``(1, ny//2+1)`` of non-negative y-wavenumbers."""
        return (2 * np.pi * sfft.rfftfreq(self.ny, d=self.dy))[None, :]

    @cached_property
    def mult(self) -> np.ndarray:
        """Multiplicity of each stored k2 column in full-spectrum sums."""
        w = np.full((1, self.ny // 2 + 1), 2.0)
        w[0, 0] = 1.0
        w[0, -1] = 1.0  # Nyquist column (ny is even)
        return w

    def scaled(self, eps: float) -> "Grid2D":
        """Grid for ``u(x, y) = eps**2 * zeta(eps*x, eps**2*y)`` when ``self`` carries zeta."""
        return Grid2D(self.nx, self.ny, self.lx / eps, self.ly / eps**2)

    def unscaled(self, eps: float) -> "Grid2D":
        """Inverse of :meth:`scaled`."""
        return Grid2D(self.nx, self.ny, self.lx * eps, self.ly * eps**2)

    def same_lattice(self, other: "Grid2D", rtol: float = 1e-13) -> bool:
        return (
            self.nx == other.nx
            and self.ny == other.ny
            and math.isclose(self.lx, other.lx, rel_tol=rtol)
            and math.isclose(self.ly, other.ly, rel_tol=rtol)
        )

    def require_same(self, other: "Grid2D") -> None:
        if not self.same_lattice(other):
            raise GridMismatch(f"grid mismatch: {self} vs {other}")


def fwd(grid: Grid2D, values: np.ndarray) -> np.ndarray:
    """Unitary forward transform of a raw sample array."""
    return sfft.rfft2(values, workers=FFT_WORKERS) * grid.coef_scale


def inv(grid: Grid2D, hat: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fwd`."""
    return sfft.irfft2(hat, s=grid.shape, workers=FFT_WORKERS) / grid.coef_scale


@dataclass(frozen=True, eq=False)
class Field:
    """Real samples on a grid, with a lazily computed (or supplied) spectral companion.

    Fields are immutable: the sample and coefficient arrays are marked read-only.
    """

    grid: Grid2D
    values: np.ndarray
    _hat: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values have shape {vals.shape}, grid expects {self.grid.shape}")
        if vals is self.values:
            vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        if self._hat is not None:
            h = np.array(self._hat, dtype=np.complex128)
            h.flags.writeable = False
            object.__setattr__(self, "_hat", h)

    @classmethod
    def from_hat(cls, grid: Grid2D, hat: np.ndarray) -> "Field":
        hat = np.asarray(hat, dtype=np.complex128)
        if hat.shape != grid.spectral_shape:
            raise ValueError(f"coefficients have shape {hat.shape}, expected {grid.spectral_shape}")
        hat = hermitian_fix(hat)
        return cls(grid, inv(grid, hat), hat)

    @classmethod
    def zeros(cls, grid: Grid2D) -> "Field":
        return cls.from_hat(grid, np.zeros(grid.spectral_shape, dtype=np.complex128))

    @property
    def hat(self) -> np.ndarray:
        if self._hat is None:
            object.__setattr__(self, "_hat", forward_transform(self))
            self._hat.flags.writeable = False
        return self._hat

    def xmean_defect(self) -> float:
        """Largest k1 = 0 coefficient relative to the largest coefficient overall."""
        h = np.abs(self.hat)
        top = h.max()
        return 0.0 if top == 0 else float(h[0].max() / top)

    def __add__(self, other: "Field") -> "Field":
        self.grid.require_same(other.grid)
        return Field.from_hat(self.grid, self.hat + other.hat)

    def __sub__(self, other: "Field") -> "Field":
        self.grid.require_same(other.grid)
        return Field.from_hat(self.grid, self.hat - other.hat)

    def __neg__(self) -> "Field":
        return Field.from_hat(self.grid, -self.hat)

    def __mul__(self, scalar: float) -> "Field":
        return Field.from_hat(self.grid, float(scalar) * self.hat)

    __rmul__ = __mul__


def hermitian_fix(hat: np.ndarray) -> np.ndarray:
    """Enforce conjugate symmetry on the self-paired k2 columns (k2 = 0 and Nyquist).

    The inverse real transform silently drops the anti-symmetric part of these columns;
    applying the same projection here keeps a supplied coefficient cache equal to the
    transform of the samples it produces.
    """
    out = np.array(hat, dtype=np.complex128)
    rev = (-np.arange(out.shape[0])) % out.shape[0]
    for col in (0, -1):
        c = out[:, col]
        out[:, col] = 0.5 * (c + np.conj(c[rev]))
    return out


def forward_transform(f: Field) -> np.ndarray:
    """Unitary discrete Fourier coefficients of ``f`` (shape ``grid.spectral_shape``)."""
    if not np.all(np.isfinite(f.values)):
        raise ValueError("field contains non-finite samples")
    return fwd(f.grid, f.values)


def inverse_transform(grid: Grid2D, hat: np.ndarray) -> Field:
    return Field.from_hat(grid, hat)


def zero_xmean_hat(hat: np.ndarray) -> np.ndarray:
    """Copy of ``hat`` with the k1 = 0 row cleared."""
    out = np.array(hat, dtype=np.complex128)
    out[0, :] = 0.0
    return out


def project_zero_xmean(f: Field) -> Field:
    """Remove every k1 = 0 mode, i.e. subtract the x-average of each row."""
    return Field.from_hat(f.grid, zero_xmean_hat(f.hat))


def shift_hat(grid: Grid2D, hat: np.ndarray, sx: float, sy: float) -> np.ndarray:
    """Coefficients of ``u(x - sx, y - sy)``; exact for band-limited fields."""
    phase = np.exp(-1j * (grid.k1 * sx)) * np.exp(-1j * (grid.k2 * sy))
    out = hat * phase
    # a fractional shift of a Nyquist mode is not a real field; drop those modes
    out[grid.nx // 2, :] = 0.0
    out[:, -1] = 0.0
    return out


def roll_hat(grid: Grid2D, hat: np.ndarray, di: int, dj: int) -> np.ndarray:
    """Coefficients of the cyclic index shift ``np.roll(u, (di, dj), axis=(0, 1))``."""
    phase = np.exp(-2j * np.pi * sfft.fftfreq(grid.nx)[:, None] * di) * np.exp(
        -2j * np.pi * sfft.rfftfreq(grid.ny)[None, :] * dj
    )
    return hat * phase


# ---------------------------------------------------------------------------------------
# norms


NORM_TAGS = ("L2", "X", "Y", "Ytilde", "Z", "Eps")


@dataclass(frozen=True)
class NormKind:
    """Which weighted norm to evaluate, with its parameters."""

    tag: str
    s: float = 2.0
    beta: float = 7.0 / 3.0
    include_beta_weight: bool = True
    eps: float | None = None

    def __post_init__(self):
        if self.tag not in NORM_TAGS:
            raise ValueError(f"unknown norm tag {self.tag!r}; choose from {NORM_TAGS}")
        if not self.s > 1.5:
            raise ValueError(f"Sobolev index must exceed 3/2, got {self.s}")
        if not self.beta > 1.0 / 3.0:
            raise ValueError(f"Bond number must exceed 1/3, got {self.beta}")
        if self.tag == "Eps" and (self.eps is None or not 0.0 < self.eps < 1.0):
            raise ValueError(f"Eps norm needs 0 < eps < 1, got {self.eps}")

    @property
    def k1_coefficient(self) -> float:
        """Coefficient of k1**2 in the Ytilde and Eps weights."""
        return 0.5 * (self.beta - 1.0 / 3.0) if self.include_beta_weight else 1.0

    @classmethod
    def L2(cls) -> "NormKind":
        return cls("L2")

    @classmethod
    def X(cls, s: float = 2.0) -> "NormKind":
        return cls("X", s=s)

    @classmethod
    def Y(cls) -> "NormKind":
        return cls("Y")

    @classmethod
    def Ytilde(cls, beta: float = 7.0 / 3.0, include_beta_weight: bool = True) -> "NormKind":
        return cls("Ytilde", beta=beta, include_beta_weight=include_beta_weight)

    @classmethod
    def Z(cls, s: float = 2.0) -> "NormKind":
        return cls("Z", s=s)

    @classmethod
    def Eps(cls, eps: float, beta: float = 7.0 / 3.0, include_beta_weight: bool = True) -> "NormKind":
        return cls("Eps", beta=beta, include_beta_weight=include_beta_weight, eps=eps)


@lru_cache(maxsize=64)
def norm_weight(grid: Grid2D, kind: NormKind) -> np.ndarray:
    """Fourier weight of ``kind`` on the lattice; zero on the k1 = 0 row except for L2.

    Results are cached per (grid, kind) and returned read-only.
    """
    k1, k2 = grid.k1, grid.k2
    if kind.tag == "L2":
        w = np.ones(grid.spectral_shape)
        w.flags.writeable = False
        return w
    safe = np.where(k1 == 0, 1.0, k1)
    ratio2 = (k2 / safe) ** 2
    kk = np.sqrt(k1**2 + k2**2)
    if kind.tag == "X":
        w = 1 + ratio2 + k2**4 / safe**2 + kk ** (2 * kind.s)
    elif kind.tag == "Y":
        w = 1 + np.sqrt(ratio2) + kk**1.5 / np.abs(safe)
    elif kind.tag == "Ytilde":
        w = 1 + ratio2 + kind.k1_coefficient * k1**2
    elif kind.tag == "Z":
        w = 1 + kk + k1**2 * kk ** (2 * kind.s - 3)
    else:  # Eps
        w = 1 + kind.eps**-2 * (ratio2 + kind.k1_coefficient * k1**2)
    w = np.broadcast_to(w, grid.spectral_shape).copy()
    w[0, :] = 0.0
    w.flags.writeable = False
    return w


def check_zero_xmean(f: Field, what: str = "field") -> None:
    defect = f.xmean_defect()
    if defect > XMEAN_TOL:
        raise InvariantViolation(
            f"{what} has nonzero k1 = 0 coefficients (relative size {defect:.3e}); "
            "apply project_zero_xmean first"
        )


def weighted_sum(grid: Grid2D, weight: np.ndarray | float, a: np.ndarray, b: np.ndarray | None = None) -> float:
    """``sum(mult * weight * Re(conj(a) b))`` over the stored half spectrum."""
    if b is None:
        prod = a.real**2 + a.imag**2
    else:
        prod = (np.conj(a) * b).real
    return float(np.sum(grid.mult * weight * prod))


def norm(f: Field, kind: NormKind) -> float:
    """Weighted spectral norm ``(sum w(k) |c(k)|^2)^(1/2)``."""
    if kind.tag != "L2":
        check_zero_xmean(f)
    return math.sqrt(weighted_sum(f.grid, norm_weight(f.grid, kind), f.hat))


def inner_ytilde(f: Field, g: Field, beta: float = 7.0 / 3.0, include_beta_weight: bool = True) -> float:
    """Inner product whose diagonal is ``norm(., Ytilde)**2``."""
    f.grid.require_same(g.grid)
    check_zero_xmean(f)
    check_zero_xmean(g)
    w = norm_weight(f.grid, NormKind.Ytilde(beta, include_beta_weight))
    return weighted_sum(f.grid, w, f.hat, g.hat)


def l2_inner(f: Field, g: Field) -> float:
    f.grid.require_same(g.grid)
    return weighted_sum(f.grid, 1.0, f.hat, g.hat)
