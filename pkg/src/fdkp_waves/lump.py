"""The explicit KP-I lump, its speed rescalings, and real-space oracle scalars."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import integrate

from .grid_spectral import Field, Grid2D, project_zero_xmean
from .symbols import kp_coefficient

FIXTURE = Path(__file__).with_name("data") / "lump_oracle.json"


@dataclass(frozen=True)
class LumpParams:
    beta: float = 7.0 / 3.0
    eps: float = 1.0
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        if not self.beta > 1.0 / 3.0:
            raise ValueError(f"Bond number must exceed 1/3, got {self.beta}")
        if not 0.0 < self.eps <= 1.0:
            raise ValueError(f"eps must lie in (0, 1], got {self.eps}")

    @property
    def length_scale(self) -> float:
        """sqrt(a): the lump is a function of (x, y)/sqrt(a)."""
        return math.sqrt(kp_coefficient(self.beta))


def _profile(X, Y):
    d = 3.0 + X * X + Y * Y
    return -12.0 * (3.0 - X * X + Y * Y) / (d * d)


def lump_values(params: LumpParams, x, y) -> np.ndarray:
    """Pointwise lump ``eps^2 f(eps (x - x0) / sqrt(a), eps^2 (y - y0) / sqrt(a))``."""
    s = params.length_scale
    e = params.eps
    X = e * (np.asarray(x, dtype=np.float64) - params.x0) / s
    Y = e * e * (np.asarray(y, dtype=np.float64) - params.y0) / s
    return e * e * _profile(X, Y)


def lump_sample(params: LumpParams, grid: Grid2D) -> Field:
    """Sample the lump on ``grid`` and remove the row means (a truncation artefact)."""
    vals = lump_values(params, grid.x[:, None], grid.y[None, :])
    centre = abs(float(lump_values(params, params.x0, params.y0)))
    edge = max(np.abs(vals[0, :]).max(), np.abs(vals[:, 0]).max())
    if edge > 1e-2 * centre:
        warnings.warn(
            f"lump boundary amplitude {edge:.3e} exceeds 1% of the centre value; enlarge the box",
            RuntimeWarning, stacklevel=2,
        )
    return project_zero_xmean(Field(grid, vals))


# ---------------------------------------------------------------------------------------
# real-space oracle


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested accuracy."""


@dataclass(frozen=True)
class QuadratureConfig:
    radius: float = 400.0
    epsabs: float = 1e-11
    epsrel: float = 1e-10
    limit: int = 400


def _pieces(a: float):
    s = 1.0 / math.sqrt(a)

    def u(x, y):
        return _profile(s * x, s * y)

    def u_x(x, y):
        X, Y = s * x, s * y
        d = 3.0 + X * X + Y * Y
        return s * 24.0 * X * (9.0 - X * X + 3.0 * Y * Y) / d**3

    def u_y(x, y):
        X, Y = s * x, s * y
        d = 3.0 + X * X + Y * Y
        return -s * 24.0 * Y * (3.0 * X * X - Y * Y - 3.0) / d**3

    return u, u_x, u_y


def _quad(f, lo, hi, cfg: QuadratureConfig, what: str) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, _ = integrate.quad(f, lo, hi, epsabs=cfg.epsabs, epsrel=cfg.epsrel, limit=cfg.limit)
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"{what}: {exc}") from exc
    return val


def _quadrant_integrals(a: float, R: float, cfg: QuadratureConfig) -> dict:
    """Integrals over [0, R]^2 of u^2, u^3, u_x^2 and (d_x^{-1} d_y u)^2.

    The lump is even in x and y, so these are a quarter of the integrals over [-R, R]^2.
    The x-antiderivative of u_y is taken from x = 0: the row integral of u vanishes, so
    the antiderivative from -infinity is odd in x and its value at 0 is zero.
    """
    u, u_x, u_y = _pieces(a)

    def anti(x, y):
        return _quad(lambda t: u_y(t, y), 0.0, x, cfg, "x-antiderivative")

    def outer(g, what):
        return _quad(lambda y: _quad(lambda x: g(x, y), 0.0, R, cfg, what), 0.0, R, cfg, what)

    return {
        "mass": outer(lambda x, y: u(x, y) ** 2, "mass"),
        "cube": outer(lambda x, y: u(x, y) ** 3, "cube"),
        "dx2": outer(lambda x, y: u_x(x, y) ** 2, "dx"),
        "anti2": outer(lambda x, y: anti(x, y) ** 2, "antiderivative"),
    }


def _assemble(a: float, parts: dict) -> dict:
    mass = 4.0 * parts["mass"]
    Q = 0.5 * (mass + 4.0 * parts["anti2"] + a * 4.0 * parts["dx2"])
    S = 4.0 * parts["cube"] / 3.0
    return {"Q": Q, "S": S, "T0": Q + S, "mass": mass}


def lump_oracle_scalars(params: LumpParams = LumpParams(), cfg: QuadratureConfig = QuadratureConfig()) -> dict:
    """Reference values of Q, S, T0 and the L2 mass for the unit-speed lump on the plane.

    Integrals are computed on [-R, R]^2 and [-2R, 2R]^2; every integrand decays like
    r^-4 or faster, so the truncation error is proportional to 1/R^2 and one Richardson
    step removes it. ``doubling_change`` records how much the extrapolated mass moves
    between the two radii (before extrapolation).
    """
    if params.eps != 1.0:
        raise ValueError("oracle scalars are tabulated for the unit-speed lump only")
    a = kp_coefficient(params.beta)
    R = cfg.radius
    near = _assemble(a, _quadrant_integrals(a, R, cfg))
    far = _assemble(a, _quadrant_integrals(a, 2 * R, cfg))
    out = {key: far[key] + (far[key] - near[key]) / 3.0 for key in near}
    out["doubling_change"] = abs(far["mass"] - near["mass"]) / abs(far["mass"])
    out["meta"] = {
        "beta": params.beta,
        "method": "scipy.integrate.quad nested adaptive quadrature, quadrant symmetry, "
                  "radii R and 2R with 1/R^2 Richardson extrapolation",
        "quadrature": asdict(cfg),
        "near": near,
        "far": far,
    }
    return out


def write_oracle_fixture(path: str | Path = FIXTURE, params: LumpParams = LumpParams(),
                         cfg: QuadratureConfig = QuadratureConfig()) -> Path:
    path = Path(path)
    path.write_text(json.dumps(lump_oracle_scalars(params, cfg), indent=2, sort_keys=True) + "\n")
    return path


def load_oracle_fixture(path: str | Path = FIXTURE) -> dict:
    return json.loads(Path(path).read_text())
