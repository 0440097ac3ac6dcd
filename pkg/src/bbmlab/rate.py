"""Deterministic rate-function calculus on discretised paths.

The expected exponential growth rate of the particle count along a path f up
to rescaled time theta is ``rm*theta - (1/2) int_0^theta f'^2`` as long as the
expression stays nonnegative on every prefix; the first time it would go
negative is the extinction time, beyond which the rate is minus infinity.
This module computes those quantities exactly on grid paths and maximises the
rate over sup-norm balls by projected gradient descent on the convex energy.

Plus/minus infinity are returned as genuine float infinities and treated as
sentinels by the reporting layer; they never enter arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .paths import GridPath, Path, SmoothPath

__all__ = [
    "energy",
    "extinction_theta",
    "raw_rate",
    "rate_function",
    "BallQuery",
    "RateReport",
    "ConvergenceError",
    "min_energy_over_ball",
    "max_rate_over_ball",
    "ball_report",
    "path_report",
]

GRAD_TOL = 1e-10
MAX_ITER = 100_000
FEAS_TOL = 1e-9


class ConvergenceError(RuntimeError):
    """Optimizer failed to reach the target residual; carries the residual."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(f"projected gradient {residual:.3e} after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations


def energy(path: Path, phi: float) -> float:
    """(1/2) int_0^phi f'(s)^2 ds, in closed form for either path kind."""
    return path.energy(phi)


def extinction_theta(path: Path, rm: float) -> float:
    """First rescaled time at which rm*theta - energy(theta) goes negative.

    Returns +inf when the expression stays nonnegative on all of [0, 1]
    (the infimum over the empty set).
    """
    if isinstance(path, GridPath):
        return _extinction_grid(path, rm)
    return _extinction_smooth(path, rm)


def _extinction_grid(path: GridPath, rm: float) -> float:
    n = path.n
    h = 1.0 / n
    prof = path.energy_profile()
    slopes = path._slopes
    for k in range(n):
        g_k = rm * (k * h) - prof[k]
        slope = rm - 0.5 * slopes[k] ** 2
        if slope < 0.0:
            # g is linear on the segment; a down-crossing pins the infimum.
            root = k * h - g_k / slope
            if root < (k + 1) * h or math.isclose(root, (k + 1) * h):
                if g_k + slope * h < 0.0:
                    return float(root)
                # touches zero exactly at the right knot: not yet negative
    return math.inf


def _extinction_smooth(path: SmoothPath, rm: float) -> float:
    nseg = path.n
    w = 1.0 / nseg
    b = path._energy_anti  # antiderivative of f'^2 per segment (u^5..u^1)
    for k in range(nseg):
        g_k = rm * (k * w) - path._energy_cum[k]
        # g(u) = g_k + rm*u - (1/2)(b0 u^5 + ... + b4 u)
        coeffs = np.array(
            [-0.5 * b[0, k], -0.5 * b[1, k], -0.5 * b[2, k], -0.5 * b[3, k], rm - 0.5 * b[4, k], g_k]
        )
        roots = np.roots(coeffs)
        real = sorted(
            float(r.real) for r in roots if abs(r.imag) < 1e-10 and -1e-12 <= r.real <= w + 1e-12
        )
        breaks = [0.0] + [min(max(r, 0.0), w) for r in real] + [w]
        for lo, hi in zip(breaks[:-1], breaks[1:]):
            if hi - lo < 1e-15:
                continue
            mid = 0.5 * (lo + hi)
            g_mid = np.polyval(coeffs, mid)
            if g_mid < -1e-13 * max(1.0, abs(rm)):
                return float(k * w + lo)
    return math.inf


def raw_rate(path: Path, theta: float, rm: float) -> float:
    """Growth rate without the extinction truncation."""
    return rm * theta - path.energy(theta)


def rate_function(path: Path, theta: float, rm: float) -> float:
    """Truncated growth rate: raw rate while theta <= extinction time, else -inf.

    Representable paths are absolutely continuous with square-integrable
    derivative by construction, so the non-Cameron-Martin branch is
    unreachable here.
    """
    if theta > extinction_theta(path, rm):
        return -math.inf
    return raw_rate(path, theta, rm)


@dataclass(frozen=True)
class BallQuery:
    """Sup-norm ball of radius epsilon around a centre path, discretised at
    ``resolution`` grid points, queried up to rescaled time theta."""

    center: Path
    epsilon: float
    theta: float
    resolution: int = 64

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ValueError("ball radius must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.resolution < 1:
            raise ValueError("resolution must be >= 1")


@dataclass(frozen=True)
class RateReport:
    """Rate-function summary for a path, optionally with a ball-query result."""

    raw_rate: float
    rate: float
    extinction_theta: float
    energy_profile: tuple[float, ...]
    ball_value: Optional[float] = None
    argmax: Optional[tuple[float, ...]] = None
    active_lower: tuple[int, ...] = field(default=())
    active_upper: tuple[int, ...] = field(default=())
    iterations: int = 0
    residual: float = 0.0


class _BoxEnergy:
    """Energy quadratic over grid values with box constraints and f(0)=0.

    Variables are the values at s_1..s_n; segment k carries weight w_k equal
    to its overlap with [0, theta], so partial last segments are exact.
    """

    def __init__(self, query: BallQuery):
        n = query.resolution
        self.n = n
        s = np.arange(n + 1) / n
        center = np.asarray(query.center.value(s))
        self.lo = center[1:] - query.epsilon
        self.hi = center[1:] + query.epsilon
        self.center = center
        self.theta = query.theta
        w = np.clip(query.theta - s[:-1], 0.0, 1.0 / n)
        self.w = w  # segment overlap with [0, theta]
        self.scale = float(n * n)
        # indices of grid constraint points s_j in (0, theta]
        self.j_grid = np.arange(1, n + 1)[s[1:] <= query.theta + 1e-12]

    def full(self, x: np.ndarray) -> np.ndarray:
        return np.concatenate([[0.0], x])

    def value(self, x: np.ndarray) -> float:
        d = np.diff(self.full(x))
        return float(0.5 * self.scale * np.dot(self.w, d * d))

    def grad(self, x: np.ndarray) -> np.ndarray:
        d = np.diff(self.full(x))
        gw = self.scale * self.w * d
        g = np.empty(self.n)
        g[:-1] = gw[:-1] - gw[1:]
        g[-1] = gw[-1]
        return g

    def hess_vec(self, v: np.ndarray) -> np.ndarray:
        d = np.diff(np.concatenate([[0.0], v]))
        gw = self.scale * self.w * d
        out = np.empty(self.n)
        out[:-1] = gw[:-1] - gw[1:]
        out[-1] = gw[-1]
        return out

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)

    def prefix_energies(self, x: np.ndarray) -> np.ndarray:
        """Cumulative energies at the grid points s_1..s_n (full segments)."""
        d = np.diff(self.full(x))
        return np.cumsum(0.5 * self.scale * d * d / self.n)

    def start(self) -> np.ndarray:
        return self.project(self.center[1:].copy())


def _grad_tol(g: np.ndarray) -> float:
    # The absolute stop target is float64-infeasible once gradients scale
    # like n^2; make it relative to the gradient magnitude instead.
    return GRAD_TOL * (1.0 + float(np.max(np.abs(g), initial=0.0)))


def _pgd_quadratic(prob: _BoxEnergy, x0: np.ndarray) -> tuple[np.ndarray, int, float]:
    """Projected gradient with the exact quadratic line step and a monotone
    backtracking guard (projection can spoil the unconstrained step)."""
    x = x0.copy()
    fx = prob.value(x)
    lipschitz = 4.0 * prob.scale * max(np.max(prob.w), 1e-30)
    stall = 0
    for it in range(MAX_ITER):
        g = prob.grad(x)
        residual = float(np.max(np.abs(x - prob.project(x - g))))
        if residual < _grad_tol(g):
            return x, it, residual
        qg = prob.hess_vec(g)
        denom = float(np.dot(g, qg))
        alpha = float(np.dot(g, g)) / denom if denom > 0.0 else 1.0 / lipschitz
        while True:
            cand = prob.project(x - alpha * g)
            fc = prob.value(cand)
            if fc <= fx or alpha < 1e-18:
                break
            alpha *= 0.5
        # float floor: once energy differences underflow, the iterate only
        # zigzags in the last ulps; stop honestly with the achieved residual.
        if np.array_equal(cand, x) or fc >= fx - 1e-15 * (1.0 + abs(fx)):
            stall += 1
            if np.array_equal(cand, x) or stall >= 50:
                return cand, it, residual
        else:
            stall = 0
        x, fx = cand, fc
    g = prob.grad(x)
    residual = float(np.max(np.abs(x - prob.project(x - g))))
    if residual < _grad_tol(g):
        return x, MAX_ITER, residual
    raise ConvergenceError(residual, MAX_ITER)


def _pgd_general(prob: _BoxEnergy, x0, fun, grad, tol=GRAD_TOL, max_iter=MAX_ITER):
    """Projected gradient with Barzilai-Borwein steps and Armijo backtracking,
    for the non-quadratic penalty objectives."""
    x = x0.copy()
    fx = fun(x)
    g = grad(x)
    alpha = 1.0 / (4.0 * prob.scale + 1.0)
    for it in range(max_iter):
        residual = float(np.max(np.abs(x - prob.project(x - g))))
        if residual < tol * (1.0 + float(np.max(np.abs(g), initial=0.0))) or fx < 1e-24:
            return x, it, residual
        step = alpha
        while True:
            cand = prob.project(x - step * g)
            fc = fun(cand)
            if fc <= fx - 1e-4 * np.dot(g, x - cand) or step < 1e-18:
                break
            step *= 0.5
        if np.array_equal(cand, x):
            return x, it, residual
        g_new = grad(cand)
        dx = cand - x
        dg = g_new - g
        denom = float(np.dot(dx, dg))
        alpha = float(np.dot(dx, dx)) / denom if denom > 1e-30 else step * 2.0
        alpha = min(max(alpha, 1e-12), 1e6)
        x, fx, g = cand, fc, g_new
    return x, max_iter, float(np.max(np.abs(x - prob.project(x - g))))


def _constraint_terms(prob: _BoxEnergy, x: np.ndarray, rm: float) -> np.ndarray:
    """Violations (E(phi) - rm*phi)+ at the grid points in (0, theta] and at
    theta itself. Prefix energies are piecewise linear in phi, so these
    points are sufficient for the whole interval."""
    pref = prob.prefix_energies(x)
    s = np.arange(1, prob.n + 1) / prob.n
    c_grid = pref[prob.j_grid - 1] - rm * s[prob.j_grid - 1]
    c_theta = prob.value(x) - rm * prob.theta
    return np.maximum(np.append(c_grid, c_theta), 0.0)


def _penalty_grad(prob: _BoxEnergy, x: np.ndarray, rm: float) -> np.ndarray:
    d = np.diff(prob.full(x))
    pref = np.cumsum(0.5 * prob.scale * d * d / prob.n)
    s = np.arange(1, prob.n + 1) / prob.n
    cpos = np.zeros(prob.n)
    cg = pref[prob.j_grid - 1] - rm * s[prob.j_grid - 1]
    cpos[prob.j_grid - 1] = np.maximum(cg, 0.0)
    # sum_j 2 c_j^+ grad E_j via suffix sums of c^+ over segments
    suffix = np.concatenate([np.cumsum(cpos[::-1])[::-1], [0.0]])
    gw = 2.0 * prob.scale / prob.n * d * suffix[: prob.n]
    g = np.empty(prob.n)
    g[:-1] = gw[:-1] - gw[1:]
    g[-1] = gw[-1]
    c_theta = max(prob.value(x) - rm * prob.theta, 0.0)
    if c_theta > 0.0:
        g += 2.0 * c_theta * prob.grad(x)
    return g


def min_energy_over_ball(query: BallQuery) -> RateReport:
    """Minimal path energy over the discretised ball (the single-particle
    large-deviation cost of reaching the ball)."""
    prob = _BoxEnergy(query)
    x, iters, residual = _pgd_quadratic(prob, prob.start())
    argmax = prob.full(x)
    path = GridPath(argmax)
    lo_active = tuple(int(i + 1) for i in np.flatnonzero(np.abs(x - prob.lo) < 1e-12))
    hi_active = tuple(int(i + 1) for i in np.flatnonzero(np.abs(x - prob.hi) < 1e-12))
    return RateReport(
        raw_rate=math.nan,
        rate=math.nan,
        extinction_theta=math.nan,
        energy_profile=tuple(path.energy_profile()),
        ball_value=prob.value(x),
        argmax=tuple(argmax),
        active_lower=lo_active,
        active_upper=hi_active,
        iterations=iters,
        residual=residual,
    )


def max_rate_over_ball(query: BallQuery, rm: float) -> RateReport:
    """Maximise the truncated growth rate over the discretised ball.

    Over non-extinct paths the rate orders inversely to the energy, so the
    maximiser is the energy minimiser subject to the prefix constraints
    E(phi) <= rm*phi on (0, theta]. Three phases:

    1. plain box-constrained energy minimisation; accept if the minimiser
       already satisfies the prefix constraints;
    2. otherwise minimise the squared prefix violation to decide feasibility
       (no feasible path at all means the value is -inf);
    3. otherwise re-minimise the energy under a penalty continuation on the
       prefix constraints (the energy minimiser can genuinely violate a
       prefix that other feasible paths satisfy).
    """
    prob = _BoxEnergy(query)
    x, iters, residual = _pgd_quadratic(prob, prob.start())
    feas_scale = FEAS_TOL * max(1.0, abs(rm))
    if float(np.max(_constraint_terms(prob, x, rm), initial=0.0)) <= feas_scale:
        return _rate_report(prob, x, rm, iters, residual)

    def viol(v):
        return float(np.sum(_constraint_terms(prob, v, rm) ** 2))

    x2, it2, res2 = _pgd_general(prob, x, viol, lambda v: _penalty_grad(prob, v, rm))
    iters += it2
    if viol(x2) > feas_scale**2:
        # no feasible path anywhere in the ball: extinct before theta
        argmax = prob.full(x2)
        return RateReport(
            raw_rate=-math.inf,
            rate=-math.inf,
            extinction_theta=math.nan,
            energy_profile=tuple(GridPath(prob.full(x2)).energy_profile()),
            ball_value=-math.inf,
            argmax=tuple(argmax),
            iterations=iters,
            residual=res2,
        )
    x3 = x2
    for mu in (1e2, 1e4, 1e6, 1e8, 1e10, 1e12):

        def fun(v, mu=mu):
            return prob.value(v) + mu * float(np.sum(_constraint_terms(prob, v, rm) ** 2))

        def grad(v, mu=mu):
            return prob.grad(v) + mu * _penalty_grad(prob, v, rm)

        x3, it3, res3 = _pgd_general(prob, x3, fun, grad, tol=GRAD_TOL * 10, max_iter=20_000)
        iters += it3
    return _rate_report(prob, x3, rm, iters, res3)


def _rate_report(prob: _BoxEnergy, x: np.ndarray, rm: float, iters: int, residual: float) -> RateReport:
    argmax_vals = prob.full(x)
    path = GridPath(argmax_vals)
    value = rm * prob.theta - prob.value(x)
    theta0 = extinction_theta(path, rm)
    lo_active = tuple(int(i + 1) for i in np.flatnonzero(np.abs(x - prob.lo) < 1e-12))
    hi_active = tuple(int(i + 1) for i in np.flatnonzero(np.abs(x - prob.hi) < 1e-12))
    return RateReport(
        raw_rate=raw_rate(path, prob.theta, rm),
        rate=value,
        extinction_theta=theta0,
        energy_profile=tuple(path.energy_profile()),
        ball_value=value,
        argmax=tuple(argmax_vals),
        active_lower=lo_active,
        active_upper=hi_active,
        iterations=iters,
        residual=residual,
    )


def ball_report(query: BallQuery, rm: float) -> RateReport:
    """Full report for a ball query: optimiser value plus the rate calculus
    of the argmax path."""
    return max_rate_over_ball(query, rm)


def path_report(path: Path, theta: float, rm: float) -> RateReport:
    return RateReport(
        raw_rate=raw_rate(path, theta, rm),
        rate=rate_function(path, theta, rm),
        extinction_theta=extinction_theta(path, rm),
        energy_profile=tuple(
            path.energy_profile() if isinstance(path, GridPath) else path.energy_profile()
        ),
    )
