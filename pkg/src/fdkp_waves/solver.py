"""Ground states by projected descent on the Nehari set and by Petviashvili iteration.

Three targets share one loop:

``kp0``
    KP functional ``T_0`` for the profile ``zeta`` on the coarse grid.
``fdkp_direct``
    ``I_eps`` for the physical field ``u`` on the fine grid; reported values are
    ``eps^-3 I_eps`` so they are comparable with the KP value.
``fdkp_reduced``
    the reduced functional ``T_eps`` of a cone-supported profile ``zeta``; each
    evaluation solves for the off-cone part of the field.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from .functionals import QuadraticCubic, i_eps_symbol, power_hat
from .grid_spectral import (
    Field,
    Grid2D,
    fwd,
    inv,
    roll_hat,
    shift_hat,
    weighted_sum,
)
from .lump import LumpParams, lump_values
from .reduction import (
    BallViolation,
    ReductionContext,
    reduction_context,
    t_eps_hat,
    zeta_to_u1_hat,
)
from .symbols import SymbolTable, build_table

log = logging.getLogger(__name__)

METHODS = ("nehari_pg", "petviashvili")
TARGETS = ("kp0", "fdkp_direct", "fdkp_reduced")
GUESSES = ("lump", "gaussian", "file")


class SolverError(RuntimeError):
    pass


class NotProjectable(SolverError):
    """The cubic part is not negative, so the ray never meets the Nehari set."""


class GeometryViolation(SolverError):
    """No Nehari point on the ray within the bracket around the closed-form seed."""


class StallError(SolverError):
    """Projected descent made no progress for too many iterations."""


class WrongBranch(SolverError):
    """The Petviashvili stabilising factor changed sign."""


class Diverged(SolverError):
    """Iteration residual kept growing."""


@dataclass(frozen=True)
class SolverConfig:
    method: str = "nehari_pg"
    target: str = "kp0"
    eps: float = 0.1
    beta: float = 7.0 / 3.0
    delta: float = 0.3
    p: int = 2
    tau: float = 1.0
    grad_tol: float = 1e-10
    res_tol: float = 1e-10
    max_iter: int = 2000
    seed: int = 0
    initial_guess: str = "lump"
    initial_file: str = ""
    noise: float = 0.0
    M: float = 20.0
    dealias: bool = False
    precondition: bool = True
    picard_tol: float = 1e-13
    picard_max_iter: int = 200
    stall_window: int = 50
    s: float = 2.0
    force: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}, got {self.target!r}")
        if self.initial_guess not in GUESSES:
            raise ValueError(f"initial_guess must be one of {GUESSES}, got {self.initial_guess!r}")
        if self.initial_guess == "file" and not self.initial_file:
            raise ValueError("initial_guess = file needs initial_file")
        if not self.beta > 1.0 / 3.0:
            raise ValueError(f"beta must exceed 1/3, got {self.beta}")
        if not 0.0 < self.delta <= 0.5:
            raise ValueError(f"delta must lie in (0, 0.5], got {self.delta}")
        if self.target != "kp0" and not 0.0 < self.eps < 1.0:
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if int(self.p) != self.p or not 2 <= self.p < 5:
            raise ValueError(f"p must be an integer in [2, 5), got {self.p}")
        if self.p > 4:
            raise ValueError("p = 5 is outside the admissible range")
        for name in ("tau", "grad_tol", "res_tol", "picard_tol", "M"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.max_iter < 1 or self.stall_window < 1 or self.picard_max_iter < 1:
            raise ValueError("iteration limits must be positive")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        if self.method == "petviashvili" and self.target == "fdkp_reduced":
            raise ValueError("Petviashvili iteration needs a quadratic-plus-power functional; "
                             "use target fdkp_direct or kp0")


# ---------------------------------------------------------------------------------------
# problems


@dataclass
class Evaluation:
    value: float
    Q: float
    S: float
    grad: np.ndarray
    extra: dict = field(default_factory=dict)


class _QuadCubicProblem:
    """Targets whose functional is exactly quadratic plus a single power."""

    closed_form = True

    def __init__(self, grid: Grid2D, symbol: np.ndarray, p: int, dealias: bool, scale: float = 1.0):
        self.grid = grid
        self.kern = QuadraticCubic(grid, symbol, p, dealias)
        self.symbol = self.kern.symbol
        self.p = p
        self.scale = scale  # reported value = scale * functional
        self.support = (grid.k1 != 0) & np.ones(grid.spectral_shape, dtype=bool)

    def evaluate(self, hat: np.ndarray) -> Evaluation:
        Q, S, grad = self.kern.evaluate(hat)
        s = self.scale
        return Evaluation(s * (Q + S), s * Q, s * S, s * grad)

    def project(self, hat: np.ndarray) -> tuple[float, np.ndarray, Evaluation]:
        Q, S, pw = self.kern.parts(hat)
        lam = nehari_lambda(Q, S, self.p)
        p = self.p
        s = self.scale
        ev = Evaluation(s * (lam**2 * Q + lam ** (p + 1) * S), s * lam**2 * Q, s * lam ** (p + 1) * S,
                        s * (lam * self.symbol * hat + lam**p * pw))
        return lam, lam * hat, ev

    def value(self, hat: np.ndarray) -> float:
        return self.scale * self.kern.value(hat)

    def shift(self, di: int, dj: int) -> None:
        pass

    def residual(self, hat: np.ndarray, ev: Evaluation) -> float:
        lin = math.sqrt(weighted_sum(self.grid, 1.0, self.symbol * hat))
        return math.sqrt(weighted_sum(self.grid, 1.0, ev.grad)) / (self.scale * lin)


class _ReducedProblem:
    """Reduced functional on cone-supported profiles; values come from a nested solve."""

    closed_form = False
    scale = 1.0

    def __init__(self, ctx: ReductionContext):
        self.ctx = ctx
        self.grid = ctx.coarse.grid
        self.symbol = ctx.coarse.mt
        self.p = ctx.p
        self.support = ctx.cone != 0
        self._warm = None  # (|u1|^2 in L2, off-cone coefficients) of the last solve
        self.kp = QuadraticCubic(self.grid, self.symbol, ctx.p, ctx.dealias)

    def _h2_guess(self, h1: np.ndarray):
        if self._warm is None:
            return None
        size, h2 = self._warm
        new = weighted_sum(self.ctx.fine.grid, 1.0, h1)
        return h2 * (new / size) if size > 0 else None

    def evaluate(self, hat: np.ndarray, check_ball: bool = True) -> Evaluation:
        ynorm = math.sqrt(weighted_sum(self.grid, self.symbol, hat))
        if check_ball and ynorm >= self.ctx.M:
            raise BallViolation(f"|zeta|_Ytilde = {ynorm:.4g} reached M = {self.ctx.M}")
        h1 = zeta_to_u1_hat(self.ctx, hat)
        value, Qf, Sf, grad, h1, h2, worst = t_eps_hat(self.ctx, hat, self._h2_guess(h1))
        self._warm = (weighted_sum(self.ctx.fine.grid, 1.0, h1), h2)
        return Evaluation(value, Qf, Sf, grad, {"h1": h1, "h2": h2, "contraction": worst})

    def value(self, hat: np.ndarray) -> float:
        # ray samples are diagnostics and may leave the ball
        return self.evaluate(hat, check_ball=False).value

    def ray_slope(self, hat: np.ndarray, lam: float) -> tuple[float, Evaluation]:
        ev = self.evaluate(lam * hat)
        return weighted_sum(self.grid, 1.0, ev.grad, hat), ev

    def project(self, hat: np.ndarray) -> tuple[float, np.ndarray, Evaluation]:
        Q, S, _ = self.kp.parts(hat)
        seed = nehari_lambda(Q, S, self.p)
        return _root_on_ray(self, hat, seed)

    def shift(self, di: int, dj: int) -> None:
        if self._warm is not None:
            size, h2 = self._warm
            self._warm = (size, roll_hat(self.ctx.fine.grid, h2, di, dj))

    def residual(self, hat: np.ndarray, ev: Evaluation) -> float:
        fine = self.ctx.fine
        eps = self.ctx.eps
        sym = i_eps_symbol(fine, eps)
        total = ev.extra["h1"] + ev.extra["h2"]
        pw = power_hat(fine.grid, total, inv(fine.grid, total), self.p, self.ctx.dealias)
        res = sym * total + pw
        return math.sqrt(weighted_sum(fine.grid, 1.0, res) / weighted_sum(fine.grid, 1.0, sym * total))


def _root_on_ray(prob: _ReducedProblem, hat: np.ndarray, seed: float):
    """Safeguarded secant/bisection for d/dlam T(lam zeta) = 0 bracketed around ``seed``."""
    lo_lim, hi_lim = seed / 4.0, 4.0 * seed
    g_seed, ev_seed = prob.ray_slope(hat, seed)
    cache = {seed: (g_seed, ev_seed)}
    if g_seed == 0:
        return seed, seed * hat, ev_seed
    # expand geometrically from the seed until the slope changes sign
    step = 1.02
    a, ga = seed, g_seed
    b = None
    while True:
        cand = a * step if ga > 0 else a / step
        if not lo_lim <= cand <= hi_lim:
            raise GeometryViolation(
                f"no Nehari point on the ray within [{lo_lim:.4g}, {hi_lim:.4g}] (eps may be too large)"
            )
        gc, evc = prob.ray_slope(hat, cand)
        cache[cand] = (gc, evc)
        if (gc > 0) != (ga > 0) or gc == 0:
            b, gb = cand, gc
            break
        a, ga = cand, gc
        step = step**2
    lo, glo, hi, ghi = (a, ga, b, gb) if ga > 0 else (b, gb, a, ga)
    target_tol = None
    for _ in range(100):
        # secant on the bracket, falling back to bisection when it strays
        lam = lo - glo * (hi - lo) / (ghi - glo) if ghi != glo else 0.5 * (lo + hi)
        if not lo < lam < hi:
            lam = 0.5 * (lo + hi)
        g, ev = prob.ray_slope(hat, lam)
        if target_tol is None:
            target_tol = 1e-11 * abs(ev.value)
        if abs(g * lam) <= target_tol:
            return lam, lam * hat, ev
        if g > 0:
            lo, glo = lam, g
        else:
            hi, ghi = lam, g
        if hi - lo <= 1e-15 * hi:
            return lam, lam * hat, ev
    raise GeometryViolation("ray root search did not converge")


def nehari_lambda(Q: float, S: float, p: int = 2) -> float:
    """Scale putting the ray through a profile with parts (Q, S) on the Nehari set."""
    if not S < 0:
        raise NotProjectable(f"cubic part must be negative to project onto the Nehari set, got S = {S}")
    if not Q > 0:
        raise NotProjectable(f"quadratic part must be positive, got Q = {Q}")
    return (-2.0 * Q / ((p + 1) * S)) ** (1.0 / (p - 1))


# ---------------------------------------------------------------------------------------
# setup


@dataclass
class Setup:
    """Everything a solve needs: the problem, its grids, and maps between representations."""

    config: SolverConfig
    coarse_grid: Grid2D
    grid: Grid2D
    problem: object
    coarse_table: SymbolTable
    fine_table: SymbolTable | None = None
    ctx: ReductionContext | None = None

    @property
    def eps(self) -> float | None:
        return None if self.config.target == "kp0" else self.config.eps

    def zeta_hat(self, hat: np.ndarray) -> np.ndarray:
        """Profile representation of the unknown's coefficients."""
        if self.config.target == "fdkp_direct":
            ft = self.fine_table
            return ft.ratio_sqrt * hat / math.sqrt(self.config.eps)
        return hat

    def u_hat(self, hat: np.ndarray, ev: Evaluation | None = None) -> np.ndarray | None:
        """Physical field on the fine grid (None for the KP target)."""
        t = self.config.target
        if t == "fdkp_direct":
            return hat
        if t == "fdkp_reduced":
            return ev.extra["h1"] + ev.extra["h2"]
        return None


def make_setup(config: SolverConfig, coarse_grid: Grid2D) -> Setup:
    t = config.target
    coarse = build_table(coarse_grid, config.beta, config.delta, None if t == "kp0" else config.eps)
    if t == "kp0":
        prob = _QuadCubicProblem(coarse_grid, coarse.mt, config.p, config.dealias)
        return Setup(config, coarse_grid, coarse_grid, prob, coarse)
    if t == "fdkp_direct":
        fine = build_table(coarse_grid.scaled(config.eps), config.beta, config.delta)
        prob = _QuadCubicProblem(fine.grid, i_eps_symbol(fine, config.eps), config.p, config.dealias,
                                 scale=config.eps**-3)
        return Setup(config, coarse_grid, fine.grid, prob, coarse, fine)
    ctx = reduction_context(coarse_grid, config.beta, config.delta, config.eps, p=config.p,
                            dealias=config.dealias, s=config.s, M=config.M, tol=config.picard_tol,
                            max_iter=config.picard_max_iter, force=config.force)
    return Setup(config, coarse_grid, coarse_grid, _ReducedProblem(ctx), ctx.coarse, ctx.fine, ctx)


def initial_field(config: SolverConfig, setup: Setup) -> Field:
    """Initial guess on the unknown's grid (support-masked)."""
    grid = setup.grid
    direct = config.target == "fdkp_direct"
    if config.initial_guess == "file":
        from .fieldfile import read_field

        f = read_field(config.initial_file)
        if not f.grid.same_lattice(grid):
            raise ValueError(f"initial field grid {f.grid} does not match the solve grid {grid}")
        hat = np.array(f.hat)
    else:
        x, y = grid.x[:, None], grid.y[None, :]
        if config.initial_guess == "lump":
            params = LumpParams(config.beta, config.eps if direct else 1.0)
            vals = lump_values(params, x, y)
        else:
            e = config.eps if direct else 1.0
            X, Y = e * x, e * e * y
            vals = -4.0 * e * e * np.exp(-(X * X + Y * Y) / 4.0)
        hat = fwd(grid, vals)
    if config.noise > 0:
        if not config.dealias:
            # aliasing in the cubic term pins profiles to the lattice; a noisy start then
            # drifts toward a lattice-symmetric position along an almost flat direction
            log.warning("noisy initial guess without dealiasing: expect slow final convergence")
        rng = np.random.default_rng(config.seed)
        pert = rng.standard_normal(grid.spectral_shape) + 1j * rng.standard_normal(grid.spectral_shape)
        kk = np.sqrt(grid.k1**2 + grid.k2**2) / (setup.eps if direct else 1.0)
        pert *= np.exp(-kk)
        scale = math.sqrt(weighted_sum(grid, 1.0, hat) / max(weighted_sum(grid, 1.0, pert), 1e-300))
        hat = hat + config.noise * scale * pert
    hat = hat * setup.problem.support
    return Field.from_hat(grid, hat)


# ---------------------------------------------------------------------------------------
# diagnostics


def tile_l2_norms(f: Field) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Local L2 norms over unit squares centred at integer points.

    The square of a band-limited field is again band-limited (with twice the band), so it
    is formed exactly on a doubled grid and its tile integrals are evaluated in closed form
    from the Fourier series. Returns (norms, x-centres, y-centres).
    """
    grid = f.grid
    big = Grid2D(2 * grid.nx, 2 * grid.ny, grid.lx, grid.ly)
    hx, hy = grid.nx // 2, grid.ny // 2
    pad = np.zeros(big.spectral_shape, dtype=np.complex128)
    h = f.hat
    pad[:hx, :hy] = h[:hx, :hy]
    pad[big.nx - hx + 1:, :hy] = h[hx + 1:, :hy]
    sq = fwd(big, inv(big, pad) ** 2)
    sq[big.nx // 2, :] = 0.0
    sq[:, -1] = 0.0

    def centres(length):
        start = math.ceil(-0.5 * length)
        return np.arange(start, start + int(math.floor(length)), dtype=np.float64)

    cx, cy = centres(grid.lx), centres(grid.ly)

    def factors(k, c, length):
        half = 0.5 * k
        sinc = np.where(k == 0, 1.0, np.sin(half) / np.where(k == 0, 1.0, half))
        return np.exp(1j * np.outer(c + 0.5 * length, k)) * sinc

    e1 = factors(big.k1[:, 0], cx, grid.lx)
    e2 = factors(big.k2[0, :], cy, grid.ly)
    tiles = (e1 @ (big.mult * sq) @ e2.T).real / math.sqrt(grid.lx * grid.ly)
    return np.sqrt(np.maximum(tiles, 0.0)), cx, cy


def nonvanishing_diagnostic(f: Field) -> float:
    """Largest L2 norm of the field over a unit square centred at an integer point."""
    if not np.any(f.hat):
        return 0.0
    return float(tile_l2_norms(f)[0].max())


def align(f: Field, ref: Field) -> tuple[Field, tuple[float, float]]:
    """Translate ``f`` to best match ``ref`` in L2: integer search, then sub-grid refinement."""
    f.grid.require_same(ref.grid)
    grid = f.grid
    corr = inv(grid, np.conj(f.hat) * ref.hat)  # corr[i, j] ~ <f shifted by (i, j), ref>
    i, j = np.unravel_index(int(np.argmax(corr)), corr.shape)
    i = i - grid.nx if i > grid.nx // 2 else i
    j = j - grid.ny if j > grid.ny // 2 else j
    base = roll_hat(grid, f.hat, int(i), int(j))

    def cost(s):
        d = shift_hat(grid, base, s[0] * grid.dx, s[1] * grid.dy) - ref.hat
        return weighted_sum(grid, 1.0, d)

    best = optimize.minimize(cost, np.zeros(2), method="Nelder-Mead",
                             options={"xatol": 1e-8, "fatol": 1e-30, "maxiter": 400})
    sx, sy = best.x
    if cost(best.x) >= cost(np.zeros(2)):
        sx = sy = 0.0
        out = base
    else:
        out = shift_hat(grid, base, sx * grid.dx, sy * grid.dy)
    return Field.from_hat(grid, out), ((i + sx) * grid.dx, (j + sy) * grid.dy)


def relative_l2_gap(f: Field, ref: Field, aligned: bool = True) -> float:
    g = align(f, ref)[0] if aligned else f
    d = weighted_sum(ref.grid, 1.0, g.hat - ref.hat)
    return math.sqrt(d / weighted_sum(ref.grid, 1.0, ref.hat))


# ---------------------------------------------------------------------------------------
# results


@dataclass
class GroundState:
    config: SolverConfig
    method: str
    target: str
    field: Field
    zeta: Field
    u: Field | None
    value: float
    Q: float
    S: float
    kp_Q: float
    kp_S: float
    grad_norm: float
    residual: float
    lambda_history: list
    iterations: int
    wall_time: float
    converged: bool
    history: list
    certificates: dict
    ytilde_norm: float
    nonvanishing: float

    @property
    def passed(self) -> bool:
        return self.converged and all(c["passed"] for c in self.certificates.values())

    def to_json(self, timing: bool = False) -> dict:
        return {
            "method": self.method,
            "target": self.target,
            "config": asdict(self.config),
            "grid": asdict(self.field.grid),
            "value": self.value,
            "Q": self.Q,
            "S": self.S,
            "kp_Q": self.kp_Q,
            "kp_S": self.kp_S,
            "grad_norm": self.grad_norm,
            "residual": self.residual,
            "lambda_history": self.lambda_history,
            "iterations": self.iterations,
            "wall_time": self.wall_time if timing else None,
            "converged": self.converged,
            "passed": self.passed,
            "certificates": self.certificates,
            "ytilde_norm": self.ytilde_norm,
            "nonvanishing": self.nonvanishing,
        }


HISTORY_COLUMNS = ("iter", "T", "Q", "S", "lambda", "grad_norm", "residual", "nonvanishing")


def _cert(value, threshold, passed) -> dict:
    return {"value": float(value), "threshold": float(threshold), "passed": bool(passed)}


def _preconditioned_norm(grid: Grid2D, grad: np.ndarray, symbol: np.ndarray) -> float:
    live = symbol > 0
    return math.sqrt(weighted_sum(grid, np.where(live, 1.0 / np.where(live, symbol, 1.0), 0.0), grad))


def _recentre(setup: Setup, hat: np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    grid = setup.grid
    vals = inv(grid, hat)
    i, j = np.unravel_index(int(np.argmin(vals)), vals.shape)
    di, dj = grid.nx // 2 - int(i), grid.ny // 2 - int(j)
    if di == 0 and dj == 0:
        return hat, (0, 0)
    setup.problem.shift(di, dj)
    return roll_hat(grid, hat, di, dj), (di, dj)


def _finish(setup: Setup, hat: np.ndarray, ev: Evaluation, *, method: str, iterations: int, t_start: float,
            converged: bool, history: list, lambdas: list) -> GroundState:
    cfg = setup.config
    prob = setup.problem
    grid = setup.grid
    coarse = setup.coarse_grid
    value = ev.value
    res = prob.residual(hat, ev)
    gnorm = _preconditioned_norm(grid, ev.grad, prob.symbol)

    zh = setup.zeta_hat(hat)
    zeta = Field.from_hat(coarse, zh)
    uh = setup.u_hat(hat, ev)
    u = None if uh is None else Field.from_hat(setup.fine_table.grid, uh)
    kpk = QuadraticCubic(coarse, setup.coarse_table.mt, cfg.p, cfg.dealias)
    kQ, kS, _ = kpk.parts(zh)
    ynorm = math.sqrt(2 * kQ)

    certs = {}
    slope = weighted_sum(grid, 1.0, ev.grad, hat)
    certs["nehari_membership"] = _cert(abs(slope), cfg.grad_tol * max(1.0, abs(value)),
                                       abs(slope) <= cfg.grad_tol * max(1.0, abs(value)))
    certs["positive_value"] = _cert(value, 0.0, value > 0)
    certs["negative_cubic"] = _cert(ev.S, 0.0, ev.S < 0)
    ident = abs(value - ev.Q / 3.0) / abs(value) if value else math.inf
    certs["nehari_identity"] = _cert(ident, 1e-6, ident <= 1e-6)
    ray = [0.5, 0.9, 1.0, 1.1, 2.0]
    try:
        ray_vals = [prob.value(r * hat) for r in ray]
        ok = all(v < ray_vals[2] for k, v in enumerate(ray_vals) if k != 2)
        certs["ray_maximum"] = _cert(max(v for k, v in enumerate(ray_vals) if k != 2) - ray_vals[2], 0.0, ok)
        h = 1e-3
        fp, f0, fm = prob.value((1 + h) * hat), value, prob.value((1 - h) * hat)
        d2 = (fp - 2 * f0 + fm) / h**2
        certs["ray_second_variation"] = _cert(d2, 0.0, d2 < 0)
    except Exception as exc:  # the nested solve can fail far out on the ray
        certs["ray_maximum"] = _cert(math.nan, 0.0, False)
        certs["ray_second_variation"] = _cert(math.nan, 0.0, False)
        log.warning("ray certificate failed: %s", exc)
    bound = ynorm**2 / 12.0
    certs["apriori_lower_bound"] = _cert(value - bound, 0.0, value >= bound * (1 - 1e-6))
    certs["steady_residual"] = _cert(res, cfg.res_tol, res <= cfg.res_tol)
    nv = nonvanishing_diagnostic(zeta)
    certs["nonvanishing"] = _cert(nv, 0.0, nv > 0)

    return GroundState(
        config=cfg, method=method, target=cfg.target, field=Field.from_hat(grid, hat), zeta=zeta, u=u,
        value=value, Q=ev.Q, S=ev.S, kp_Q=kQ, kp_S=kS, grad_norm=gnorm, residual=res,
        lambda_history=lambdas, iterations=iterations, wall_time=time.perf_counter() - t_start,
        converged=converged, history=history, certificates=certs, ytilde_norm=ynorm, nonvanishing=nv,
    )


def _prepare(config: SolverConfig, coarse_grid: Grid2D, initial: Field | None):
    setup = make_setup(config, coarse_grid)
    if initial is None:
        initial = initial_field(config, setup)
    initial.grid.require_same(setup.grid)
    hat = np.array(initial.hat) * setup.problem.support
    if not np.any(hat):
        raise NotProjectable("initial guess vanishes after projection onto the admissible modes")
    return setup, hat


def nehari_project(zeta: Field, problem) -> tuple[float, Field]:
    """Scale ``zeta`` onto the Nehari set of ``problem`` (a setup's problem object)."""
    zeta.grid.require_same(problem.grid)
    lam, hat, _ = problem.project(np.array(zeta.hat) * problem.support)
    return lam, Field.from_hat(problem.grid, hat)


def minimize_nehari(config: SolverConfig, coarse_grid: Grid2D, initial: Field | None = None,
                    callback=None) -> GroundState:
    """Preconditioned gradient descent on the Nehari set with backtracking and recentring."""
    t_start = time.perf_counter()
    setup, hat = _prepare(config, coarse_grid, initial)
    prob = setup.problem
    grid = setup.grid
    Q0, S0, _ = QuadraticCubic(grid, prob.symbol, config.p, config.dealias).parts(hat)
    if S0 >= 0:
        hat = -hat  # depression branch
    lam, hat, ev = prob.project(hat)
    hat, _ = _recentre(setup, hat)
    ev = prob.evaluate(hat)
    lambdas = [lam]
    history = []
    precond = np.where(prob.symbol > 0, 1.0 / np.where(prob.symbol > 0, prob.symbol, 1.0), 0.0)
    if not config.precondition:
        precond = prob.support.astype(float)
    best = ev.value
    since_best = 0
    converged = False
    it = 0
    for it in range(config.max_iter + 1):
        res = prob.residual(hat, ev)
        gnorm = _preconditioned_norm(grid, ev.grad, prob.symbol)
        rel_g = gnorm / prob.scale / math.sqrt(max(weighted_sum(grid, prob.symbol, hat), 1e-300))
        nv = nonvanishing_diagnostic(Field.from_hat(setup.coarse_grid, setup.zeta_hat(hat)))
        history.append({"iter": it, "T": ev.value, "Q": ev.Q, "S": ev.S, "lambda": lambdas[-1],
                        "grad_norm": gnorm, "residual": res, "nonvanishing": nv})
        if callback is not None:
            callback(history[-1])
        if res <= config.res_tol and rel_g <= config.grad_tol:
            converged = True
            break
        if it == config.max_iter:
            break
        direction = precond * ev.grad / prob.scale
        tau = config.tau
        accepted = False
        while tau >= 1e-12:
            trial = (hat - tau * direction) * prob.support
            try:
                lam_t, trial, ev_t = prob.project(trial)
            except (NotProjectable, GeometryViolation):
                tau *= 0.5
                continue
            if ev_t.value <= ev.value + 1e-13 * abs(ev.value):
                accepted = True
                break
            tau *= 0.5
        if accepted:
            hat, shift = _recentre(setup, trial)
            ev = ev_t if shift == (0, 0) else prob.evaluate(hat)
            lambdas.append(lam_t)
        if ev.value < best - 1e-15 * abs(best):
            best = ev.value
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.stall_window:
                raise StallError(
                    f"no decrease for {config.stall_window} iterations at T = {ev.value:.12g}, "
                    f"residual {res:.3e}, tau reached {tau:.1e}"
                )
    gs = _finish(setup, hat, ev, method="nehari_pg", iterations=it, t_start=t_start, converged=converged,
                 history=history, lambdas=lambdas)
    return gs


def petviashvili(config: SolverConfig, coarse_grid: Grid2D, initial: Field | None = None,
                 callback=None) -> GroundState:
    """Stabilised fixed-point iteration ``u <- M^gamma L^{-1}(-u^p)``."""
    if config.target == "fdkp_reduced":
        raise ValueError("Petviashvili iteration is not available for the reduced target")
    t_start = time.perf_counter()
    setup, hat = _prepare(config, coarse_grid, initial)
    prob = setup.problem
    grid = setup.grid
    p = config.p
    gamma = p / (p - 1.0)
    sym = prob.symbol
    inv_sym = np.where(sym > 0, 1.0 / np.where(sym > 0, sym, 1.0), 0.0)
    kern = prob.kern
    _, S0, _ = kern.parts(hat)
    if S0 >= 0:
        hat = -hat
    history = []
    factors = []
    prev_res = None
    climbing = 0
    converged = False
    it = 0
    for it in range(config.max_iter + 1):
        Q, S, pw = kern.parts(hat)
        N = -pw
        num = weighted_sum(grid, sym, hat)
        den = weighted_sum(grid, 1.0, N, hat)
        if not den > 0:
            raise WrongBranch(
                f"stabilising factor denominator {den:.3e} is not positive; negate the initial guess"
            )
        Mf = num / den
        res = math.sqrt(weighted_sum(grid, 1.0, sym * hat - N) / num) if num > 0 else math.inf
        s = prob.scale
        history.append({"iter": it, "T": s * (Q + S), "Q": s * Q, "S": s * S, "lambda": Mf,
                        "grad_norm": math.sqrt(weighted_sum(grid, inv_sym, sym * hat - N)) * s,
                        "residual": res,
                        "nonvanishing": nonvanishing_diagnostic(Field.from_hat(setup.coarse_grid,
                                                                               setup.zeta_hat(hat)))})
        factors.append(Mf)
        if callback is not None:
            callback(history[-1])
        if abs(Mf - 1.0) <= config.res_tol and res <= config.res_tol:
            converged = True
            break
        if not math.isfinite(res):
            raise Diverged("Petviashvili residual is not finite")
        if prev_res is not None and res >= prev_res and res > 100 * config.res_tol:
            climbing += 1
            if climbing >= 3:
                raise Diverged(f"Petviashvili residual grew for 3 consecutive steps (now {res:.3e})")
        else:
            climbing = 0
        prev_res = res
        if it == config.max_iter:
            break
        hat = Mf**gamma * inv_sym * N
        hat, _ = _recentre(setup, hat)
    ev = prob.evaluate(hat)
    return _finish(setup, hat, ev, method="petviashvili", iterations=it, t_start=t_start, converged=converged,
                   history=history, lambdas=factors)


def solve(config: SolverConfig, coarse_grid: Grid2D, initial: Field | None = None, callback=None) -> GroundState:
    if config.method == "petviashvili":
        return petviashvili(config, coarse_grid, initial, callback)
    return minimize_nehari(config, coarse_grid, initial, callback)
