"""Splitting a full-dispersion field into cone and off-cone parts and reducing to the cone.

A field ``u`` on the fine (physical) grid is written ``u = u1 + u2`` with ``u1 = chi(D) u``
supported in the low-frequency cone and ``u2`` supported outside it. The off-cone part of
the steady equation is solved for ``u2`` by successive substitution; what remains is a
functional of ``u1`` alone, which two changes of variables turn into a perturbation of the
KP functional acting on a profile ``zeta`` on the coarse (KP-scaled) grid.

The coarse grid is ``(nx, ny, lx, ly)`` and the fine grid ``(nx, ny, lx/eps, ly/eps^2)``.
Array index ``(i, j)`` denotes the same mode on both, so the scaling
``u(x, y) = eps^2 zeta(eps x, eps^2 y)`` is a pure relabelling with coefficient factor
``eps^(1/2)``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .functionals import FunctionalValue, QuadraticCubic, i_eps_symbol, power_hat
from .grid_spectral import (
    Field,
    Grid2D,
    GridMismatch,
    InvariantViolation,
    NormKind,
    inv,
    norm_weight,
    weighted_sum,
)
from .symbols import SymbolTable, build_table

log = logging.getLogger(__name__)

SUPPORT_TOL = 1e-12
EPS_GUARD = 0.25
LOG_COLUMNS = ("step", "dX", "ratio")


class ReductionError(RuntimeError):
    pass


class ReductionDiverged(ReductionError):
    """Successive substitution stopped contracting."""


class ReductionNotConverged(ReductionError):
    """Iteration budget exhausted before reaching the tolerance."""


class BallViolation(ReductionError):
    """Profile left the ball |zeta|_Ytilde < M where the reduction is set up."""


def _masked(hat: np.ndarray, mask: np.ndarray, what: str) -> np.ndarray:
    """Return ``hat * mask`` after checking that nothing substantial lies outside ``mask``."""
    mag = np.abs(hat)
    top = mag.max()
    outside = (mag * (mask == 0)).max()
    if top > 0 and outside > SUPPORT_TOL * top:
        raise InvariantViolation(f"{what} has coefficients outside its declared support "
                                 f"(relative size {outside / top:.3e})")
    return hat * (mask != 0)


@dataclass
class ReductionState:
    u1: Field
    u2: Field
    eps: float
    delta: float
    log: list = field(default_factory=list)
    converged: bool = False
    contraction: float = math.nan
    residual_z: float = math.nan
    fixed_point_gap: float = math.nan
    u2_x_norm: float = math.nan
    u1_eps_norm: float = math.nan
    sigma: float = math.nan

    @property
    def in_unit_ball(self) -> bool:
        """Whether u1 lies in the set |u1|_eps <= 1 the fixed-point lemma is stated on."""
        return self.u1_eps_norm <= 1.0

    def log_rows(self) -> list[tuple[int, float, float]]:
        return [(r["step"], r["dX"], r["ratio"]) for r in self.log]

    def log_csv(self) -> str:
        """Iteration log as CSV text with columns step, dX, ratio."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        w.writerows((step, repr(dx), "" if math.isnan(ratio) else repr(ratio)) for step, dx, ratio in self.log_rows())
        return buf.getvalue()


def _g_hat(table: SymbolTable, eps: float, h1, h2, p: int, dealias: bool) -> np.ndarray:
    total = h1 + h2
    pw = power_hat(table.grid, total, inv(table.grid, total), p, dealias)
    return -table.off_inv_n * (eps * eps * h2 + pw)


def g_map(u1: Field, u2: Field, eps: float, table: SymbolTable, p: int = 2, dealias: bool = False) -> Field:
    """``-n(D)^{-1} (1 - chi(D)) (eps^2 u2 + (u1 + u2)^p)``; always supported off the cone."""
    u1.grid.require_same(table.grid)
    u2.grid.require_same(table.grid)
    h1 = _masked(u1.hat, table.chi, "u1")
    h2 = _masked(u2.hat, (table.grid.k1 != 0) & (table.chi == 0), "u2")
    return Field.from_hat(table.grid, _g_hat(table, eps, h1, h2, p, dealias))


def solve_u2_hat(table: SymbolTable, eps: float, h1: np.ndarray, *, tol: float = 1e-13, max_iter: int = 200,
                 h2_init: np.ndarray | None = None, s: float = 2.0, p: int = 2, dealias: bool = False):
    """Array-level successive substitution; returns (h2, log, contraction)."""
    wx = norm_weight(table.grid, NormKind.X(s))
    h2 = np.zeros_like(h1) if h2_init is None else h2_init * ((table.grid.k1 != 0) & (table.chi == 0))
    rows = []
    prev = None
    climbing = 0
    worst = 0.0
    for step in range(1, max_iter + 1):
        new = _g_hat(table, eps, h1, h2, p, dealias)
        dX = math.sqrt(weighted_sum(table.grid, wx, new - h2))
        h2 = new
        ratio = dX / prev if prev else math.nan
        rows.append({"step": step, "dX": dX, "ratio": ratio})
        if prev is not None and prev > 100 * tol:
            worst = max(worst, ratio)
        if not math.isfinite(dX):
            raise ReductionDiverged(f"off-cone iteration overflowed at eps={eps}, delta={table.delta}")
        climbing = climbing + 1 if (prev is not None and ratio >= 1.0) else 0
        if climbing >= 3:
            raise ReductionDiverged(
                f"off-cone iteration is not contracting at eps={eps}, delta={table.delta} "
                f"(ratio {ratio:.3f} for 3 consecutive steps)"
            )
        if dX <= tol:
            return h2, rows, worst
        prev = dX
    raise ReductionNotConverged(
        f"off-cone iteration did not reach tol={tol:g} in {max_iter} steps at eps={eps}, delta={table.delta}"
    )


def solve_u2(u1: Field, eps: float, table: SymbolTable, tol: float = 1e-13, max_iter: int = 200, *,
             u2_init: Field | None = None, s: float = 2.0, p: int = 2, dealias: bool = False,
             beta_weight: bool = True) -> ReductionState:
    """Solve ``u2 = G(u1, u2)`` by successive substitution from ``u2 = 0`` (or a warm start)."""
    u1.grid.require_same(table.grid)
    h1 = _masked(u1.hat, table.chi, "u1")
    grid = table.grid
    eps_norm = math.sqrt(weighted_sum(grid, norm_weight(grid, NormKind.Eps(eps, table.beta, beta_weight)), h1))
    if eps_norm > 1.0:
        log.debug("u1 lies outside the unit eps-ball (|u1|_eps = %.3g)", eps_norm)
    h2_init = None if u2_init is None else u2_init.hat
    h2, rows, worst = solve_u2_hat(table, eps, h1, tol=tol, max_iter=max_iter, h2_init=h2_init, s=s, p=p,
                                   dealias=dealias)
    wx = norm_weight(grid, NormKind.X(s))
    wz = norm_weight(grid, NormKind.Z(s))
    gap = math.sqrt(weighted_sum(grid, wx, _g_hat(table, eps, h1, h2, p, dealias) - h2))
    total = h1 + h2
    pw = power_hat(grid, total, inv(grid, total), p, dealias)
    off = (grid.k1 != 0) & (table.chi == 0)
    res = eps * eps * h2 + table.n * h2 + off * pw
    u2x = math.sqrt(weighted_sum(grid, wx, h2))
    state = ReductionState(
        u1=Field.from_hat(grid, h1), u2=Field.from_hat(grid, h2), eps=eps, delta=table.delta, log=rows,
        converged=True, contraction=worst, residual_z=math.sqrt(weighted_sum(grid, wz, res)),
        fixed_point_gap=gap, u2_x_norm=u2x, u1_eps_norm=eps_norm,
        sigma=u2x / (eps * eps_norm**2) if eps_norm > 0 else 0.0,
    )
    return state


def j_eps(u1: Field, eps: float, table: SymbolTable, tol: float = 1e-13, max_iter: int = 200, *,
          p: int = 2, dealias: bool = False, s: float = 2.0, u2_init: Field | None = None) -> FunctionalValue:
    """Reduced functional ``I_eps(u1 + u2(u1))`` with its u1-only part split off.

    ``Q`` and ``S`` are the quadratic and cubic parts of ``I_eps`` evaluated at ``u1``;
    ``remainder`` is everything contributed by ``u2``. The gradient (with respect to u1)
    is the cone part of the full steady residual.
    """
    state = solve_u2(u1, eps, table, tol, max_iter, u2_init=u2_init, s=s, p=p, dealias=dealias)
    grid = table.grid
    kern = QuadraticCubic(grid, i_eps_symbol(table, eps), p, dealias)
    h1, h2 = state.u1.hat, state.u2.hat
    Q1, S1, _ = kern.parts(np.array(h1))
    Q, S, grad = kern.evaluate(h1 + h2)
    value = Q + S
    overlap = weighted_sum(grid, 1.0, h1, h2)
    scale = math.sqrt(weighted_sum(grid, 1.0, h1) * weighted_sum(grid, 1.0, h2))
    if abs(overlap) > 1e-12 * max(scale, 1e-300):
        raise InvariantViolation(f"cone and off-cone parts are not orthogonal (overlap {overlap:.3e})")
    return FunctionalValue(
        value=value, Q=Q1, S=S1, remainder=value - Q1 - S1,
        gradient=Field.from_hat(grid, table.chi * grad),
        aux={"state": state, "full_Q": Q, "full_S": S, "full_gradient": Field.from_hat(grid, grad)},
    )


def change_vars_i1(u1: Field, table: SymbolTable, inverse: bool = False) -> Field:
    """Multiply by ``(n/n~)^(1/2)`` on the cone (or its reciprocal with ``inverse``)."""
    u1.grid.require_same(table.grid)
    h = _masked(u1.hat, table.chi, "cone field")
    mult = table.ratio_sqrt_inv if inverse else table.ratio_sqrt
    return Field.from_hat(table.grid, mult * h)


def change_vars_i2(f: Field, eps: float, inverse: bool = False, target_grid: Grid2D | None = None) -> Field:
    """KP rescaling between the fine field and the coarse profile.

    Forward maps ``u~1`` on the fine grid to ``zeta`` on the coarse grid (``zeta = u~1 / eps^2``
    at matching indices); ``inverse`` goes back. The optional ``target_grid`` must be the
    one implied by ``eps``.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    grid = f.grid.scaled(eps) if inverse else f.grid.unscaled(eps)
    if target_grid is not None:
        if not target_grid.same_lattice(grid):
            raise GridMismatch(f"target grid {target_grid} does not match the rescaled lattice {grid}")
        grid = target_grid
    factor = math.sqrt(eps) if inverse else 1.0 / math.sqrt(eps)
    return Field.from_hat(grid, factor * f.hat)


@dataclass(frozen=True, eq=False)
class ReductionContext:
    """Symbol tables and settings shared by every evaluation of the reduced functional."""

    eps: float
    coarse: SymbolTable
    fine: SymbolTable
    p: int = 2
    dealias: bool = False
    s: float = 2.0
    M: float = 20.0
    tol: float = 1e-13
    max_iter: int = 200

    @property
    def cone(self) -> np.ndarray:
        """Cone mask on the shared index set (fine-grid cone = scaled cone of the coarse grid)."""
        return self.fine.chi


def reduction_context(coarse_grid: Grid2D, beta: float, delta: float, eps: float, *, p: int = 2,
                      dealias: bool = False, s: float = 2.0, M: float = 20.0, tol: float = 1e-13,
                      max_iter: int = 200, force: bool = False) -> ReductionContext:
    if eps > EPS_GUARD and not force:
        raise ValueError(f"eps = {eps} exceeds the validated range (<= {EPS_GUARD}); pass force to override")
    coarse = build_table(coarse_grid, beta, delta, eps)
    fine = build_table(coarse_grid.scaled(eps), beta, delta)
    return ReductionContext(eps, coarse, fine, p, dealias, s, M, tol, max_iter)


def zeta_to_u1_hat(ctx: ReductionContext, zeta_hat: np.ndarray) -> np.ndarray:
    return ctx.fine.ratio_sqrt_inv * (math.sqrt(ctx.eps) * zeta_hat)


def t_eps_hat(ctx: ReductionContext, zeta_hat: np.ndarray, h2_init: np.ndarray | None = None):
    """Array-level reduced functional; returns (value, Q, S, gradient, h1, h2, contraction)."""
    eps = ctx.eps
    fine = ctx.fine
    h1 = zeta_to_u1_hat(ctx, zeta_hat)
    h2, _, worst = solve_u2_hat(fine, eps, h1, tol=ctx.tol, max_iter=ctx.max_iter, h2_init=h2_init, s=ctx.s,
                                p=ctx.p, dealias=ctx.dealias)
    kern = QuadraticCubic(fine.grid, i_eps_symbol(fine, eps), ctx.p, ctx.dealias)
    Qf, Sf, res = kern.evaluate(h1 + h2)
    scale = eps**-3
    grad = eps**-2.5 * fine.ratio_sqrt_inv * res
    return scale * (Qf + Sf), scale * Qf, scale * Sf, grad, h1, h2, worst


def t_eps(zeta: Field, ctx: ReductionContext, u2_init: Field | None = None) -> FunctionalValue:
    """Reduced KP-scaled functional ``eps^-3 I_eps(u1(zeta) + u2(u1(zeta)))``.

    The breakdown reports the KP parts ``Q(zeta) = |zeta|_Ytilde^2 / 2`` and
    ``S(zeta) = integral(zeta^3) / 3``; ``remainder`` is the rest, i.e. ``eps^(1/2) R_eps``.
    ``aux`` also carries the quadratic and cubic parts of the underlying full field, which
    satisfy the Nehari identity exactly at critical points.
    """
    zeta.grid.require_same(ctx.coarse.grid)
    zh = _masked(zeta.hat, ctx.cone, "profile")
    grid = ctx.coarse.grid
    ynorm = math.sqrt(weighted_sum(grid, ctx.coarse.mt, zh))
    if ynorm >= ctx.M:
        raise BallViolation(f"|zeta|_Ytilde = {ynorm:.4g} is not below M = {ctx.M}")
    value, Qf, Sf, grad, h1, h2, worst = t_eps_hat(ctx, zh, None if u2_init is None else u2_init.hat)
    kp = QuadraticCubic(grid, ctx.coarse.mt, ctx.p, ctx.dealias)
    Q, S, _ = kp.parts(zh)
    return FunctionalValue(
        value=value, Q=Q, S=S, remainder=value - Q - S,
        gradient=Field.from_hat(grid, grad),
        aux={"full_Q": Qf, "full_S": Sf, "u1": Field.from_hat(ctx.fine.grid, h1),
             "u2": Field.from_hat(ctx.fine.grid, h2), "contraction": worst, "ytilde_norm": ynorm},
    )
