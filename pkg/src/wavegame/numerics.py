"""Shared low-level numerical kernels.

Fixed-step classical 4th-order Runge-Kutta integration of planar vector
fields with cubic-Hermite dense output and event detection, bracketed root
finding, and quadrature of discounted integrals with an explicit
truncation-tail bound.  State is a pair of floats (u, p); the package never
needs higher-dimensional phase spaces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import EventNotBracketed, MaxStepsExceeded, NoBracket, QuadratureFailed

Rhs = Callable[[float, float], tuple[float, float]]
Guard = Callable[[float, float], float]

EVENT_ABSCISSA_TOL = 1e-10


@dataclass(frozen=True)
class IntegratorOptions:
    """Step size, localisation tolerance and step budget for `integrate`."""

    step: float = 1e-2
    tol: float = EVENT_ABSCISSA_TOL
    max_steps: int = 2_000_000

    def __post_init__(self) -> None:
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


@dataclass(frozen=True)
class Event:
    """Guard function of the state whose sign change marks a hit.

    The guard must be continuous along trajectories (caller contract).
    `direction` restricts which sign changes count; a `terminal` event stops
    the integration at the localised hit.
    """

    guard: Guard
    direction: str = "any"  # "rising" | "falling" | "any"
    terminal: bool = False
    name: str = ""

    def matches(self, g_old: float, g_new: float) -> bool:
        if g_old == g_new or g_old * g_new > 0:
            return False
        if self.direction == "rising":
            return g_old < g_new
        if self.direction == "falling":
            return g_old > g_new
        return True


@dataclass(frozen=True)
class EventHit:
    index: int
    name: str
    s: float
    u: float
    p: float


@dataclass(frozen=True)
class IntegrationResult:
    """Sampled trajectory with node derivatives and localised event hits."""

    s: np.ndarray
    u: np.ndarray
    p: np.ndarray
    du: np.ndarray
    dp: np.ndarray
    hits: list[EventHit]
    terminated: EventHit | None


def _hermite_pair(
    s0: float,
    y0: tuple[float, float],
    d0: tuple[float, float],
    s1: float,
    y1: tuple[float, float],
    d1: tuple[float, float],
    s: float,
) -> tuple[float, float]:
    """Cubic Hermite interpolation of both state components on one step."""
    h = s1 - s0
    t = (s - s0) / h
    t2 = t * t
    h00 = (1.0 + 2.0 * t) * (1.0 - t) ** 2
    h10 = t * (1.0 - t) ** 2
    h01 = t2 * (3.0 - 2.0 * t)
    h11 = t2 * (t - 1.0)
    u = h00 * y0[0] + h10 * h * d0[0] + h01 * y1[0] + h11 * h * d1[0]
    p = h00 * y0[1] + h10 * h * d0[1] + h01 * y1[1] + h11 * h * d1[1]
    return u, p


def _localize(
    event: Event,
    s0: float,
    y0: tuple[float, float],
    d0: tuple[float, float],
    s1: float,
    y1: tuple[float, float],
    d1: tuple[float, float],
    g0: float,
    tol: float,
) -> tuple[float, float, float]:
    """Bisect the dense output until the hit abscissa is within `tol`."""
    a, b = s0, s1
    ga = g0
    while b - a > tol:
        mid = 0.5 * (a + b)
        ym = _hermite_pair(s0, y0, d0, s1, y1, d1, mid)
        gm = event.guard(*ym)
        if gm == 0.0:
            a = b = mid
            break
        if (ga > 0) == (gm > 0):
            a, ga = mid, gm
        else:
            b = mid
    s_hit = 0.5 * (a + b)
    u_hit, p_hit = _hermite_pair(s0, y0, d0, s1, y1, d1, s_hit)
    return s_hit, u_hit, p_hit


def integrate(
    rhs: Rhs,
    y0: tuple[float, float],
    s_span: tuple[float, float],
    events: Sequence[Event] = (),
    opts: IntegratorOptions | None = None,
    strict_terminal: bool = True,
) -> IntegrationResult:
    """Integrate y' = rhs(y) over `s_span` with classical RK4.

    Samples satisfy the local error of the fixed step; event hits are
    localised by bisection on the cubic-Hermite dense output to within
    ``opts.tol`` in the abscissa.  A terminal event truncates the trajectory
    at the hit.  With `strict_terminal`, a terminal event that never fires
    raises :class:`EventNotBracketed`.
    """
    opts = opts or IntegratorOptions()
    s0, s_end = s_span
    if not s_end > s0:
        raise ValueError("s_span must be nondegenerate and increasing")

    u, p = float(y0[0]), float(y0[1])
    du, dp = rhs(u, p)
    ss = [s0]
    us = [u]
    ps = [p]
    dus = [du]
    dps = [dp]
    guards = [ev.guard(u, p) for ev in events]
    hits: list[EventHit] = []
    terminated: EventHit | None = None

    s = s0
    steps = 0
    h0 = opts.step
    while s < s_end - 1e-15 * max(1.0, abs(s_end)):
        if steps >= opts.max_steps:
            raise MaxStepsExceeded(f"max_steps={opts.max_steps} reached at s={s:.6g}")
        steps += 1
        h = min(h0, s_end - s)

        k1u, k1p = du, dp
        k2u, k2p = rhs(u + 0.5 * h * k1u, p + 0.5 * h * k1p)
        k3u, k3p = rhs(u + 0.5 * h * k2u, p + 0.5 * h * k2p)
        k4u, k4p = rhs(u + h * k3u, p + h * k3p)
        u_new = u + (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        p_new = p + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        s_new = s + h
        du_new, dp_new = rhs(u_new, p_new)

        # event detection on this step, earliest hit first
        step_hits: list[tuple[float, float, float, int]] = []
        for i, ev in enumerate(events):
            g_new = ev.guard(u_new, p_new)
            if ev.matches(guards[i], g_new):
                s_hit, u_hit, p_hit = _localize(
                    ev, s, (u, p), (du, dp), s_new, (u_new, p_new),
                    (du_new, dp_new), guards[i], opts.tol,
                )
                step_hits.append((s_hit, u_hit, p_hit, i))
            guards[i] = g_new
        step_hits.sort(key=lambda t: t[0])

        stop_here = None
        for s_hit, u_hit, p_hit, i in step_hits:
            hit = EventHit(i, events[i].name, s_hit, u_hit, p_hit)
            hits.append(hit)
            if events[i].terminal:
                stop_here = hit
                break

        if stop_here is not None:
            d_hit = rhs(stop_here.u, stop_here.p)
            ss.append(stop_here.s)
            us.append(stop_here.u)
            ps.append(stop_here.p)
            dus.append(d_hit[0])
            dps.append(d_hit[1])
            terminated = stop_here
            break

        s, u, p, du, dp = s_new, u_new, p_new, du_new, dp_new
        ss.append(s)
        us.append(u)
        ps.append(p)
        dus.append(du)
        dps.append(dp)

    if terminated is None and strict_terminal and any(ev.terminal for ev in events):
        raise EventNotBracketed("no terminal event fired within s_span")

    return IntegrationResult(
        s=np.asarray(ss),
        u=np.asarray(us),
        p=np.asarray(ps),
        du=np.asarray(dus),
        dp=np.asarray(dps),
        hits=hits,
        terminated=terminated,
    )


def hermite_interp(
    s_query: np.ndarray | float,
    s: np.ndarray,
    y: np.ndarray,
    dy: np.ndarray,
) -> np.ndarray | float:
    """Vectorised cubic Hermite interpolation on a strictly increasing grid.

    Queries outside the grid are clamped to the boundary values.
    """
    sq = np.asarray(s_query, dtype=float)
    scalar = sq.ndim == 0
    sq = np.atleast_1d(sq)
    i = np.clip(np.searchsorted(s, sq, side="right") - 1, 0, len(s) - 2)
    h = s[i + 1] - s[i]
    t = np.clip((sq - s[i]) / h, 0.0, 1.0)
    t2 = t * t
    omt = 1.0 - t
    h00 = (1.0 + 2.0 * t) * omt * omt
    h10 = t * omt * omt
    h01 = t2 * (3.0 - 2.0 * t)
    h11 = t2 * (t - 1.0)
    out = h00 * y[i] + h10 * h * dy[i] + h01 * y[i + 1] + h11 * h * dy[i + 1]
    return float(out[0]) if scalar else out


def find_root(g: Callable[[float], float], bracket: tuple[float, float], tol: float = 1e-12) -> float:
    """Root of a continuous scalar function on a sign-changing bracket."""
    from scipy.optimize import brentq

    a, b = bracket
    ga, gb = g(a), g(b)
    if ga == 0.0:
        return float(a)
    if gb == 0.0:
        return float(b)
    if ga * gb > 0:
        raise NoBracket(f"g({a:.6g})={ga:.3g} and g({b:.6g})={gb:.3g} have the same sign")
    return float(brentq(g, a, b, xtol=tol, maxiter=200))


@dataclass(frozen=True)
class DiscountedIntegral:
    """Value of a truncated discounted integral and its tail bound.

    `value` includes a frozen-tail correction g(T) e^{-lam T} / lam, i.e. the
    integrand is extended by its last value beyond the truncation horizon.
    `tail_bound` = sup|g| e^{-lam T} / lam bounds the truncation error.
    """

    value: float
    tail_bound: float
    t_trunc: float


def default_horizon(lam: float, rel: float = 1e-8) -> float:
    """Smallest T with e^{-lam T} / lam below `rel` (relative to sup|g|)."""
    return math.log(1.0 / (lam * rel)) / lam


def _adaptive_simpson(
    h: Callable[[float], float],
    a: float,
    b: float,
    tol: float,
    max_depth: int = 48,
    fa: float | None = None,
    fb: float | None = None,
) -> float:
    fa = h(a) if fa is None else fa
    fb = h(b) if fb is None else fb
    fm = h(0.5 * (a + b))
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    eps = np.finfo(float).eps

    def rec(a, m, b, fa, fm, fb, whole, tol, depth):
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = h(lm), h(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        err = left + right - whole
        # the floor keeps the refinement from chasing rounding noise
        if abs(err) <= max(15.0 * tol, 50.0 * eps * (abs(left) + abs(right))):
            return left + right + err / 15.0
        if depth >= max_depth:
            raise QuadratureFailed(f"adaptive Simpson depth cap at [{a:.6g}, {b:.6g}]")
        return rec(a, lm, m, fa, flm, fm, left, 0.5 * tol, depth + 1) + rec(
            m, rm, b, fm, frm, fb, right, 0.5 * tol, depth + 1
        )

    return rec(a, 0.5 * (a + b), b, fa, fm, fb, whole, tol, 0)


def discounted_integral(
    g: Callable[[float], float],
    lam: float,
    t_trunc: float,
    tol: float = 1e-10,
    breakpoints: Sequence[float] = (),
) -> DiscountedIntegral:
    """Approximate the integral of e^{-lam t} g(t) over [0, infinity).

    Adaptive Simpson quadrature on [0, t_trunc] (split at the optional
    `breakpoints`, meant for known kinks of g) plus the frozen-tail
    correction.  `g` must be bounded on [0, t_trunc].
    """
    if lam <= 0 or t_trunc <= 0:
        raise ValueError("lam and t_trunc must be positive")

    g_sup = 0.0

    def weighted(t: float) -> float:
        nonlocal g_sup
        gt = g(t)
        ag = abs(gt)
        if ag > g_sup:
            g_sup = ag
        return math.exp(-lam * t) * gt

    knots = sorted({0.0, float(t_trunc), *(float(b) for b in breakpoints if 0.0 < b < t_trunc)})
    total = 0.0
    for j, (a, b) in enumerate(zip(knots[:-1], knots[1:])):
        # a breakpoint marks a possible jump of g: close each segment with its
        # left limit so the quadrature never straddles the discontinuity
        fb = None
        if j < len(knots) - 2:
            fb = weighted(b - 1e-10 * max(1.0, abs(b)))
        total += _adaptive_simpson(weighted, a, b, tol * (b - a) / t_trunc, fb=fb)

    decay = math.exp(-lam * t_trunc) / lam
    value = total + g(t_trunc) * decay
    return DiscountedIntegral(value=value, tail_bound=g_sup * decay, t_trunc=t_trunc)
