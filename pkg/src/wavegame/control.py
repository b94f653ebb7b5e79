"""Movement costs, payoffs, the stationary dynamic-programming solver, and
the best-response check that certifies a constructed wave as an equilibrium.

In the co-moving frame an agent at abscissa s moving with control a drifts at
a - c and collects theta(s) - L(a) discounted at rate lam.  The value function
solves lam V + c V' - H(V') = theta with H the convex conjugate of L, and the
wave is an equilibrium when the constant control a = c is optimal from every
point of the harvesting support.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from . import numerics
from .errors import (
    BlowUp,
    NoConvergence,
    NoCrossing,
    NonConvexLagrangian,
    UnboundedCurvature,
)
from .numerics import DiscountedIntegral, default_horizon, discounted_integral, find_root

if TYPE_CHECKING:
    from .wave_builder import FishermanDensity, WaveProfile

GAP_TOL = 1e-6  # perturbation gaps above -GAP_TOL count as "no improvement found"


# --- costs and their conjugates ----------------------------------------------


@dataclass(frozen=True)
class Lagrangian:
    """Strictly convex movement cost with L(0) = 0 and superlinear growth.

    `power` marks the closed-form family L(a) = kappa |a|^exponent, for which
    the Legendre transform is available analytically.
    """

    L: Callable[[float], float]
    dL: Callable[[float], float]
    power: tuple[float, float] | None = None  # (kappa, exponent)


def power_lagrangian(kappa: float, exponent: float) -> Lagrangian:
    if kappa <= 0 or exponent <= 1:
        raise ValueError("power cost needs kappa > 0 and exponent > 1")
    k, m = float(kappa), float(exponent)

    def L(a):
        return k * np.abs(a) ** m

    def dL(a):
        return k * m * np.sign(a) * np.abs(a) ** (m - 1.0)

    return Lagrangian(L=L, dL=dL, power=(k, m))


def quadratic_lagrangian() -> Lagrangian:
    """L(a) = a^2 / 2, the self-dual workhorse."""
    return power_lagrangian(0.5, 2.0)


@dataclass(frozen=True)
class CostModel:
    """A Lagrangian together with the discount and the candidate wave speed."""

    lagrangian: Lagrangian
    lam: float
    c: float

    def __post_init__(self) -> None:
        if self.lam <= 0:
            raise ValueError("discount lam must be positive")

    @property
    def L(self):
        return self.lagrangian.L

    @property
    def dL(self):
        return self.lagrangian.dL

    @property
    def power(self):
        return self.lagrangian.power


@dataclass(frozen=True)
class Hamiltonian:
    """Legendre transform H(p) = sup_a (p a - L(a)) and its argmax map dH."""

    H: Callable[[float], float]
    dH: Callable[[float], float]


def legendre(cost: CostModel | Lagrangian, check_grid: int = 101) -> Hamiltonian:
    """Convex conjugate of the movement cost.

    Closed form for the power family; otherwise the supremum is found by a
    bracketed solve of dL(a) = p.  Raises :class:`NonConvexLagrangian` when dL
    is not increasing on the test grid.
    """
    lag = cost.lagrangian if isinstance(cost, CostModel) else cost
    a_grid = np.linspace(-5.0, 5.0, check_grid)
    dvals = np.asarray(lag.dL(a_grid))
    if np.any(np.diff(dvals) < -1e-12):
        raise NonConvexLagrangian("dL is not monotone on the test grid")

    if lag.power is not None:
        k, m = lag.power
        mstar = m / (m - 1.0)

        def H(p):
            return (m - 1.0) * k ** (-1.0 / (m - 1.0)) * (np.abs(p) / m) ** mstar

        def dH(p):
            return np.sign(p) * (np.abs(p) / (k * m)) ** (1.0 / (m - 1.0))

        return Hamiltonian(H=H, dH=dH)

    def dH_scalar(p: float) -> float:
        lo, hi = -1.0, 1.0
        while lag.dL(lo) > p:
            lo *= 2.0
        while lag.dL(hi) < p:
            hi *= 2.0
        return find_root(lambda a: lag.dL(a) - p, (lo, hi), tol=1e-13)

    def H_scalar(p: float) -> float:
        a = dH_scalar(p)
        return p * a - lag.L(a)

    return Hamiltonian(H=np.vectorize(H_scalar), dH=np.vectorize(dH_scalar))


# --- payoff of a control along the drifting frame -----------------------------


@dataclass(frozen=True)
class Payoff:
    value: float
    tail_bound: float


def payoff(
    theta: Callable[[float], float],
    cost: CostModel,
    s0: float,
    alpha: Callable[[float, float], float],
    t_trunc: float | None = None,
    breakpoints: Sequence[float] = (),
    dt: float = 5e-3,
) -> Payoff:
    """Discounted harvest of the feedback/time control `alpha` started at s0.

    Integrates s' = alpha(t, s) - c with RK4 (split at the declared
    `breakpoints` where alpha switches), then applies discounted quadrature to
    theta(s(t)) - L(alpha(t, s(t))).  `theta` must be defined on all of R
    (profiles extend by their limits).
    """
    lam, c = cost.lam, cost.c
    T = t_trunc if t_trunc is not None else default_horizon(lam)
    knots = sorted({0.0, float(T), *(float(b) for b in breakpoints if 0.0 < b < T)})

    ts = [0.0]
    ss = [float(s0)]
    ds = [alpha(0.0, float(s0)) - c]
    s_cur = float(s0)
    for a_t, b_t in zip(knots[:-1], knots[1:]):
        n = max(2, int(math.ceil((b_t - a_t) / dt)))
        h = (b_t - a_t) / n
        t = a_t
        for _ in range(n):
            k1 = alpha(t, s_cur) - c
            k2 = alpha(t + 0.5 * h, s_cur + 0.5 * h * k1) - c
            k3 = alpha(t + 0.5 * h, s_cur + 0.5 * h * k2) - c
            k4 = alpha(t + h, s_cur + h * k3) - c
            s_cur = s_cur + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += h
            if abs(s_cur) > 1e6:
                raise BlowUp(f"trajectory escaped to s={s_cur:.3g}")
            ts.append(t)
            ss.append(s_cur)
            ds.append(alpha(t, s_cur) - c)
    t_arr = np.asarray(ts)
    s_arr = np.asarray(ss)
    d_arr = np.asarray(ds)

    L = cost.L

    def g(t: float) -> float:
        s_t = numerics.hermite_interp(t, t_arr, s_arr, d_arr)
        return float(theta(s_t)) - float(L(alpha(t, s_t)))

    res = discounted_integral(g, lam, T, tol=1e-10, breakpoints=knots[1:-1])
    return Payoff(value=res.value, tail_bound=res.tail_bound)


# --- stationary dynamic programming -------------------------------------------


@dataclass(frozen=True)
class HJBGrid:
    s_lo: float
    s_hi: float
    ds: float = 0.02
    n_controls: int = 401
    control_halfwidth: float = 3.0


@dataclass(frozen=True)
class ValueGrid:
    """Discretised value function with derivative and feedback diagnostics."""

    s: np.ndarray
    V: np.ndarray
    dV: np.ndarray
    feedback: np.ndarray
    lipschitz_est: float
    sup_update: float
    iterations: int
    ds: float
    dt: float
    control_cell: float
    controls: np.ndarray

    def write_csv(self, path) -> None:
        data = np.column_stack([self.s, self.V, self.dV, self.feedback])
        np.savetxt(
            path, data, delimiter=",", header="s,V,dV,feedback", comments="", fmt="%.17g"
        )


def _interp_weights(n: int, shift: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Index pair and weight for shifting a grid function by a sub-cell offset."""
    base = math.floor(shift)
    w = shift - base
    idx0 = np.clip(np.arange(n) + base, 0, n - 1)
    idx1 = np.clip(np.arange(n) + base + 1, 0, n - 1)
    return idx0, idx1, w


def hjb_solve(
    theta: Callable[[np.ndarray], np.ndarray],
    cost: CostModel,
    grid: HJBGrid,
    method: str = "howard",
    tol: float = 1e-10,
    max_iter: int = 2_000_000,
    ham: Hamiltonian | None = None,
) -> ValueGrid:
    """Fixed point of the one-step dynamic-programming operator.

    V(s) = max_a { dt (theta(s) - L(a)) + e^{-lam dt} V~(s + dt (a - c)) }
    with linear interpolation V~ and the profile extended by constants beyond
    the grid.  `method="howard"` accelerates with policy iteration; the
    returned solution always certifies a plain sweep update below `tol`.
    """
    lam, c = cost.lam, cost.c
    ham = ham or legendre(cost)
    s = np.arange(grid.s_lo, grid.s_hi + 0.5 * grid.ds, grid.ds)
    n = len(s)
    th = np.asarray(theta(s), dtype=float)

    lip_theta = float(np.max(np.abs(np.diff(th))) / grid.ds) if n > 1 else 0.0
    a_pri = abs(float(ham.dH(lip_theta / lam + 1.0))) + abs(c) + 1.0
    lo = max(c - grid.control_halfwidth, -a_pri)
    hi = min(c + grid.control_halfwidth, a_pri)
    lo = min(lo, 0.0, c)  # probes alpha=0 and the candidate c must be feasible
    hi = max(hi, c + 0.1)
    A = np.linspace(lo, hi, grid.n_controls)
    cell = (hi - lo) / (grid.n_controls - 1)

    dt = 0.5 * grid.ds / max(abs(lo - c), abs(hi - c))
    beta = math.exp(-lam * dt)
    reward = dt * (th[:, None] - np.asarray(cost.L(A))[None, :])
    shifts = dt * (A - c) / grid.ds
    weights = [_interp_weights(n, float(sh)) for sh in shifts]

    def sweep(V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        best = np.full(n, -np.inf)
        argbest = np.zeros(n, dtype=np.int64)
        for j, (i0, i1, w) in enumerate(weights):
            cand = reward[:, j] + beta * ((1.0 - w) * V[i0] + w * V[i1])
            better = cand > best
            best[better] = cand[better]
            argbest[better] = j
        return best, argbest

    def evaluate_policy(policy: np.ndarray, V0: np.ndarray) -> np.ndarray:
        from scipy.sparse import csr_matrix, identity
        from scipy.sparse.linalg import spsolve

        rows = np.arange(n)
        i0 = np.empty(n, dtype=np.int64)
        i1 = np.empty(n, dtype=np.int64)
        w = np.empty(n)
        for j in range(grid.n_controls):
            mask = policy == j
            if not np.any(mask):
                continue
            jj0, jj1, jw = weights[j]
            i0[mask] = jj0[mask]
            i1[mask] = jj1[mask]
            w[mask] = jw
        P = csr_matrix(
            (
                np.concatenate([beta * (1.0 - w), beta * w]),
                (np.concatenate([rows, rows]), np.concatenate([i0, i1])),
            ),
            shape=(n, n),
        )
        r = reward[rows, policy]
        return spsolve(identity(n, format="csr") - P, r)

    V = th / lam  # value of standing still on a frozen landscape
    iters = 0
    if method == "howard":
        policy = np.zeros(n, dtype=np.int64)
        for _ in range(80):
            iters += 1
            V_new, policy_new = sweep(V)
            if np.array_equal(policy_new, policy) and np.max(np.abs(V_new - V)) < tol:
                V = V_new
                break
            policy = policy_new
            V = evaluate_policy(policy, V_new)
        else:
            raise NoConvergence("policy iteration did not stabilise")
        V_next, _ = sweep(V)
        sup_update = float(np.max(np.abs(V_next - V)))
        V = V_next
        if sup_update > tol:
            # polish with plain sweeps; contraction factor is e^{-lam dt}
            budget = int(math.log(tol / max(sup_update, tol)) / math.log(beta)) + 10
            for _ in range(min(budget, 200_000)):
                iters += 1
                V_next, _ = sweep(V)
                sup_update = float(np.max(np.abs(V_next - V)))
                V = V_next
                if sup_update < tol:
                    break
            else:
                raise NoConvergence(f"sweep update stalled at {sup_update:.3g}")
    elif method == "value":
        sup_update = math.inf
        while sup_update >= tol:
            iters += 1
            if iters > max_iter:
                raise NoConvergence(f"value iteration exceeded {max_iter} sweeps")
            V_next, _ = sweep(V)
            sup_update = float(np.max(np.abs(V_next - V)))
            V = V_next
    else:
        raise ValueError(f"unknown method {method!r}")

    dV = np.gradient(V, grid.ds)
    feedback = np.asarray(ham.dH(dV))
    lipschitz = float(np.max(np.abs(np.diff(V))) / grid.ds)
    return ValueGrid(
        s=s,
        V=V,
        dV=dV,
        feedback=feedback,
        lipschitz_est=lipschitz,
        sup_update=sup_update,
        iterations=iters,
        ds=grid.ds,
        dt=dt,
        control_cell=cell,
        controls=A,
    )


def value_iteration_updates(
    theta: Callable[[np.ndarray], np.ndarray],
    cost: CostModel,
    grid: HJBGrid,
    n_sweeps: int,
) -> np.ndarray:
    """Sup-update sizes of successive plain sweeps, for contraction checks."""
    lam = cost.lam
    ham = legendre(cost)
    s = np.arange(grid.s_lo, grid.s_hi + 0.5 * grid.ds, grid.ds)
    th = np.asarray(theta(s), dtype=float)
    n = len(s)
    A = np.linspace(cost.c - grid.control_halfwidth, cost.c + grid.control_halfwidth, grid.n_controls)
    dt = 0.5 * grid.ds / grid.control_halfwidth
    beta = math.exp(-lam * dt)
    reward = dt * (th[:, None] - np.asarray(cost.L(A))[None, :])
    weights = [_interp_weights(n, float(dt * (a - cost.c) / grid.ds)) for a in A]
    V = th / lam
    out = []
    for _ in range(n_sweeps):
        best = np.full(n, -np.inf)
        for j, (i0, i1, w) in enumerate(weights):
            cand = reward[:, j] + beta * ((1.0 - w) * V[i0] + w * V[i1])
            np.maximum(best, cand, out=best)
        out.append(float(np.max(np.abs(best - V))))
        V = best
    return np.asarray(out)


# --- wave diagnostics ----------------------------------------------------------


def s_minus(wave: "WaveProfile") -> float:
    """Crossing of the affine extension of the bridge with the left tail.

    Returns sup{s <= 0 : slope*s + theta(0) < theta(s)}, the abscissa below
    which the true profile beats its affine extension; it is negative because
    the profile is strictly concave just left of the support.
    """
    slope, theta0 = wave.slope, wave.theta0
    if slope <= 0:
        raise NoCrossing("bridge slope must be positive")
    left = wave.left

    def gap(s: float) -> float:
        return slope * s + theta0 - float(left.interp_u(s))

    s_nodes = left.s
    idx = len(s_nodes) - 1
    bracket = None
    while idx > 0:
        if gap(float(s_nodes[idx - 1])) < 0.0:
            bracket = (float(s_nodes[idx - 1]), float(s_nodes[idx]))
            break
        idx -= 1
    if bracket is None:
        # crossing sits in the exponential tail below the sampled window;
        # the constant extension localises it to the truncation level
        tail_u = float(left.u[0])
        return (tail_u - theta0) / slope
    return find_root(gap, bracket, tol=1e-12)


@dataclass(frozen=True)
class ConcavityThreshold:
    lambda0: float
    m_k: float
    d_under: float


def concavity_threshold(
    wave: "WaveProfile",
    density: "FishermanDensity",
    d_under: float,
) -> ConcavityThreshold:
    """Discount level above which the payoff functional is strictly concave.

    The curvature bound M_k = sup |theta''| is evaluated from the profile
    identity theta'' = -c theta' - f(theta) + M theta on the smooth pieces
    (exactly zero on the bridge), so junction jumps never pollute it.
    """
    m_k = wave.max_curvature()
    if not np.isfinite(m_k):
        raise UnboundedCurvature("curvature estimate is not finite")
    if d_under <= 0:
        return ConcavityThreshold(lambda0=math.inf, m_k=m_k, d_under=d_under)
    return ConcavityThreshold(lambda0=2.0 * math.sqrt(m_k / d_under), m_k=m_k, d_under=d_under)


def critical_point_check(wave: "WaveProfile", cost: CostModel, s0: float) -> float:
    """|theta'(s0) - lam L'(c)|, zero on the support by construction."""
    return abs(float(wave.theta_prime(s0)) - cost.lam * float(cost.dL(cost.c)))


# --- equilibrium verification ---------------------------------------------------


@dataclass(frozen=True)
class VerifyOptions:
    ds: float = 0.02
    n_controls: int = 401
    domain_pad: float = 20.0
    s0_fractions: tuple[float, ...] = (0.25, 0.5, 0.75)
    delta_fractions: tuple[float, ...] = (0.1, 0.5, 1.0)
    horizon_multipliers: tuple[float, ...] = (1.0, 5.0, 20.0)
    gap_tol: float = GAP_TOL
    d_under: float | None = None  # inferred from the cost when None


@dataclass(frozen=True)
class EquilibriumReport:
    feedback_residual: float
    value_identity_residual: float
    probes: list[tuple[str, float]]
    lambda0: float | None
    s_minus: float
    certified: bool
    m_k: float
    value_grid: ValueGrid

    def to_json_dict(self) -> dict:
        lam0 = self.lambda0
        return {
            "feedback_residual": self.feedback_residual,
            "value_identity_residual": self.value_identity_residual,
            "probes": [{"name": n, "gap": g} for n, g in self.probes],
            "lambda0": None if lam0 is None or not math.isfinite(lam0) else lam0,
            "s_minus": self.s_minus,
            "certified": self.certified,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _infer_d_under(cost: CostModel) -> float:
    if cost.power is not None:
        k, m = cost.power
        if m == 2.0:
            return 2.0 * k
        if m > 2.0:
            return 0.0  # L'' vanishes at 0
    a = np.linspace(-3.0, 3.0, 601)
    d2 = np.diff(np.asarray(cost.dL(a))) / np.diff(a)
    return max(float(np.min(d2)), 0.0)


def verify_equilibrium(
    wave: "WaveProfile",
    density: "FishermanDensity",
    cost: CostModel,
    options: VerifyOptions | None = None,
) -> EquilibriumReport:
    """Best-response check of the constant control a = c against probe deviations.

    Solves the stationary dynamic program on a window around the wave, then
    plays a family of finite deviations (sided pulses, a bang-bang excursion
    toward the affine crossing, and the greedy feedback extracted from the
    solved value function) from sample points of the support.  A negative gap
    beyond tolerance means an improving deviation was found; certification is
    only ever "no improvement within the probe family".
    """
    opt = options or VerifyOptions()
    lam, c = cost.lam, cost.c
    ham = legendre(cost)
    sm = s_minus(wave)
    grid = HJBGrid(
        s_lo=sm - opt.domain_pad,
        s_hi=wave.s1 + opt.domain_pad,
        ds=opt.ds,
        n_controls=opt.n_controls,
    )
    vg = hjb_solve(wave.theta, cost, grid, ham=ham)

    support = (vg.s >= 0.0) & (vg.s <= wave.s1)
    feedback_residual = float(np.max(np.abs(vg.feedback[support] - c)))
    identity = (np.asarray(wave.theta(vg.s[support])) - float(cost.L(c))) / lam
    value_identity_residual = float(np.max(np.abs(vg.V[support] - identity)))

    L_c = float(cost.L(c))
    t_trunc = default_horizon(lam)
    s0_list = [f * wave.s1 for f in opt.s0_fractions]

    probes: list[tuple[str, float]] = []

    def add_probe(name: str, alpha, breakpoints=()):
        worst = math.inf
        for s0 in s0_list:
            j_const = (float(wave.theta(s0)) - L_c) / lam
            j_probe = payoff(
                wave.theta, cost, s0, alpha, t_trunc=t_trunc, breakpoints=breakpoints
            ).value
            worst = min(worst, j_const - j_probe)
        probes.append((name, worst))

    for df in opt.delta_fractions:
        delta = df * c
        if delta <= 0:
            continue
        for hm in opt.horizon_multipliers:
            t_p = hm / lam
            add_probe(
                f"pulse_up d={df:g}c T={hm:g}/lam",
                lambda t, s, d=delta, tp=t_p: c + d if t < tp else c,
                breakpoints=(t_p,),
            )
            add_probe(
                f"pulse_down d={df:g}c T={hm:g}/lam",
                lambda t, s, d=delta, tp=t_p: c - d if t < tp else c,
                breakpoints=(t_p,),
            )

    for df in opt.delta_fractions:
        delta = df * c
        if delta <= 0:
            continue
        # leftward excursion that parks at the affine crossing
        worst = math.inf
        for s0 in s0_list:
            t_hit = (s0 - sm) / delta
            j_const = (float(wave.theta(s0)) - L_c) / lam
            j_probe = payoff(
                wave.theta,
                cost,
                s0,
                lambda t, s, d=delta: c - d if s > sm else c,
                t_trunc=t_trunc,
                breakpoints=(t_hit,),
            ).value
            worst = min(worst, j_const - j_probe)
        probes.append((f"bang_toward_s_minus d={df:g}c", worst))

    s_v, dV_v = vg.s, vg.dV

    def greedy(t: float, s: float) -> float:
        return float(ham.dH(np.interp(s, s_v, dV_v)))

    add_probe("greedy_feedback", greedy)

    d_under = opt.d_under if opt.d_under is not None else _infer_d_under(cost)
    thr = concavity_threshold(wave, density, d_under)

    certified = all(g >= -opt.gap_tol for _, g in probes)
    return EquilibriumReport(
        feedback_residual=feedback_residual,
        value_identity_residual=value_identity_residual,
        probes=probes,
        lambda0=thr.lambda0,
        s_minus=sm,
        certified=certified,
        m_k=thr.m_k,
        value_grid=vg,
    )


def certified_speed_range(
    nl,
    lagrangian: Lagrangian,
    lam: float,
    c0: float,
    n_bisect: int = 7,
    options: VerifyOptions | None = None,
    k: int = 0,
) -> tuple[float, float, list[tuple[float, bool]]]:
    """Empirical certified speed interval at fixed discount.

    Bisects on the certification predicate between a small speed (which must
    certify) and the construction ceiling `c0`.  Returns (c_lo, c_hi) of the
    certified range found and the (c, certified) trial log.  The upper
    endpoint is a probe-family boundary, not a proven threshold.
    """
    from .wave_builder import construct_wave

    trials: list[tuple[float, bool]] = []

    def is_certified(c: float) -> bool:
        cost = CostModel(lagrangian, lam, c)
        wave, density = construct_wave(nl, lagrangian, lam, c, k=k)
        rep = verify_equilibrium(wave, density, cost, options)
        trials.append((c, rep.certified))
        return rep.certified

    c_lo = 0.05 * c0
    if not is_certified(c_lo):
        raise NoConvergence(f"small-speed probe c={c_lo:g} failed to certify")
    lo, hi = c_lo, 0.99 * c0
    if is_certified(hi):
        return c_lo, hi, trials
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        if is_certified(mid):
            lo = mid
        else:
            hi = mid
    return c_lo, lo, trials
