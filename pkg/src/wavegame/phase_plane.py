"""Phase-plane machinery for the harvested bistable wave equation.

In the co-moving frame a free (unharvested) profile solves -u'' - c u' = f(u),
i.e. the planar system u' = p, p' = -f(u) - c p with equilibria (0,0),
(eta,0) and (1,0).  The energy E(u,p) = p^2/2 + F(u), F = antiderivative of f,
dissipates at rate -c p^2 along trajectories.  That pins the unstable
manifold of the origin inside the region {E <= 0} and the stable manifold of
(1,0) outside it, which is what makes the wave construction work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ComplexEigenvalues, InvalidEta, SeedBranchWrong, SeedTooLarge
from .numerics import (
    Event,
    EventHit,
    IntegrationResult,
    IntegratorOptions,
    hermite_interp,
    integrate,
)

SEED_OFFSET = 1e-7  # offset of manifold seeds along the exact eigenvector
ETA_BALL_RADIUS = 1e-6  # spiral termination ball around (eta, 0)
SEED_ENERGY_TOL = 1e-12


@dataclass(frozen=True)
class BistableNonlinearity:
    """Reaction term with stable zeros at 0 and 1 and an unstable zero at eta.

    `eta_under` is the unique critical point of f in (0, eta); it bounds the
    population value at which harvesting may start without the constructed
    density going negative.
    """

    eta: float
    f: Callable[[np.ndarray | float], np.ndarray | float]
    df: Callable[[np.ndarray | float], np.ndarray | float]
    F: Callable[[np.ndarray | float], np.ndarray | float]
    eta_under: float
    label: str = "custom"

    def sup_abs_f(self, n: int = 2001) -> float:
        u = np.linspace(0.0, 1.0, n)
        return float(np.max(np.abs(self.f(u))))

    def is_invasive(self) -> bool:
        """Whether the populated state wins without harvesting (F(1) > 0)."""
        return float(self.F(1.0)) > 0.0


def cubic(eta: float) -> BistableNonlinearity:
    """The standard cubic reaction u (u - eta) (1 - u)."""
    if not 0.0 < eta < 1.0:
        raise InvalidEta(f"eta={eta} outside (0, 1)")
    e = float(eta)

    def f(u):
        return u * (u - e) * (1.0 - u)

    def df(u):
        return -3.0 * u * u + 2.0 * (1.0 + e) * u - e

    def F(u):
        return u * u * (-0.25 * u * u + (1.0 + e) * u / 3.0 - 0.5 * e)

    eta_under = ((1.0 + e) - math.sqrt((1.0 + e) ** 2 - 3.0 * e)) / 3.0
    return BistableNonlinearity(eta=e, f=f, df=df, F=F, eta_under=eta_under, label=f"cubic(eta={e:g})")


@dataclass(frozen=True)
class PhasePoint:
    u: float
    p: float


def energy(nl: BistableNonlinearity, u, p):
    """E(u, p) = p^2/2 + F(u); conserved when c = 0, dissipated when c > 0."""
    return 0.5 * np.asarray(p) ** 2 + nl.F(np.asarray(u))


@dataclass(frozen=True)
class EigenData:
    lam_plus: float
    lam_minus: float
    v_plus: np.ndarray
    v_minus: np.ndarray


def linearize(nl: BistableNonlinearity, u_star: float, c: float) -> EigenData:
    """Eigenvalues/vectors of the linearised flow at an equilibrium (u*, 0).

    Raises :class:`ComplexEigenvalues` when c^2 < 4 f'(u*), which can only
    happen at u* = eta.
    """
    slope = float(nl.df(u_star))
    disc = c * c - 4.0 * slope
    if disc < 0.0:
        raise ComplexEigenvalues(
            f"c^2 - 4 f'(u*) = {disc:.3g} < 0 at u*={u_star:g}: spiral, no real eigenbasis"
        )
    root = math.sqrt(disc)
    lam_plus = 0.5 * (-c + root)
    lam_minus = 0.5 * (-c - root)
    return EigenData(
        lam_plus=lam_plus,
        lam_minus=lam_minus,
        v_plus=np.array([1.0, lam_plus]),
        v_minus=np.array([1.0, lam_minus]),
    )


@dataclass(frozen=True)
class EtaClassification:
    kind: str  # "spiral_sink" | "stable_node"
    degenerate: bool
    threshold: float  # 2 sqrt(f'(eta))


def classify_eta(nl: BistableNonlinearity, c: float) -> EtaClassification:
    """Spiral sink below c = 2 sqrt(f'(eta)), stable node at or above it."""
    slope = float(nl.df(nl.eta))
    if slope <= 0.0:
        raise InvalidEta("f'(eta) must be positive for a bistable reaction")
    threshold = 2.0 * math.sqrt(slope)
    if c < threshold:
        return EtaClassification("spiral_sink", False, threshold)
    return EtaClassification("stable_node", abs(c - threshold) <= 1e-14, threshold)


def wave_rhs(nl: BistableNonlinearity, c: float):
    """Right-hand side of the free phase-plane flow: (p, -f(u) - c p)."""
    f = nl.f

    def rhs(u: float, p: float) -> tuple[float, float]:
        return p, -f(u) - c * p

    return rhs


@dataclass(frozen=True)
class Trajectory:
    """Sampled phase-plane curve (s, u, p) with node slopes for dense output.

    `dp` holds p' = -f(u) - c p at the samples, so both u and p interpolate
    with cubic Hermite accuracy.
    """

    s: np.ndarray
    u: np.ndarray
    p: np.ndarray
    dp: np.ndarray
    c: float

    def __post_init__(self) -> None:
        if len(self.s) < 2:
            raise ValueError("trajectory needs at least two samples")
        if not np.all(np.diff(self.s) > 0):
            raise ValueError("trajectory abscissae must be strictly increasing")

    def interp_u(self, s):
        return hermite_interp(s, self.s, self.u, self.p)

    def interp_p(self, s):
        return hermite_interp(s, self.s, self.p, self.dp)

    def shifted(self, delta: float) -> "Trajectory":
        return replace(self, s=self.s + delta)

    def write_csv(self, path) -> None:
        data = np.column_stack([self.s, self.u, self.p])
        np.savetxt(path, data, delimiter=",", header="s,u,p", comments="", fmt="%.17g")


def _result_to_trajectory(res: IntegrationResult, c: float) -> Trajectory:
    s, u, p, dp = res.s, res.u, res.p, res.dp
    keep = np.concatenate([[True], np.diff(s) > 1e-13])
    return Trajectory(s=s[keep], u=u[keep], p=p[keep], dp=dp[keep], c=c)


def _default_gamma0_events(nl: BistableNonlinearity) -> list[Event]:
    eta = nl.eta

    def ball(u: float, p: float) -> float:
        return (u - eta) ** 2 + p * p - ETA_BALL_RADIUS**2

    return [
        Event(ball, direction="falling", terminal=True, name="eta_ball"),
        Event(lambda u, p: u - 1.0, direction="rising", terminal=True, name="u_exceeds_one"),
    ]


def _gamma0_seed(nl: BistableNonlinearity, c: float, eps: float) -> tuple[float, float, float]:
    eig = linearize(nl, 0.0, c)
    u0, p0 = eps, eps * eig.lam_plus
    e0 = float(energy(nl, u0, p0))
    if e0 > SEED_ENERGY_TOL:
        raise SeedTooLarge(f"seed energy {e0:.3g} > 0: offset {eps:g} too large")
    s_seed = math.log(eps) / eig.lam_plus
    return u0, p0, s_seed


def _default_span(nl: BistableNonlinearity, c: float) -> float:
    # two competing slow regimes: deep spirals contract like exp(-c s / 2),
    # and for large c the departure from the origin creeps at rate
    # lam_plus ~ |f'(0)| / c
    lam_plus = linearize(nl, 0.0, c).lam_plus
    escape = 60.0 / lam_plus
    if c <= 1e-12:
        return max(150.0, escape)
    return max(150.0, 45.0 / c, escape)


def unstable_manifold(
    nl: BistableNonlinearity,
    c: float,
    stop: Event | None = None,
    opts: IntegratorOptions | None = None,
    span: float | None = None,
) -> Trajectory:
    """Trajectory leaving (0, 0) along the expanding eigendirection.

    Seeded at SEED_OFFSET along the exact eigenvector and integrated forward
    until the stop event (by default: entry into the ETA_BALL_RADIUS ball
    around (eta, 0), or u exceeding 1).  Its samples stay in {E <= 0} and the
    energy is non-increasing.  For c = 0 the default events never fire and the
    full span is returned.
    """
    if c < 0:
        raise ValueError("c must be nonnegative")
    opts = opts or IntegratorOptions()
    u0, p0, s_seed = _gamma0_seed(nl, c, SEED_OFFSET)
    events = [stop] if stop is not None else _default_gamma0_events(nl)
    span = span if span is not None else _default_span(nl, c)
    res = integrate(
        wave_rhs(nl, c),
        (u0, p0),
        (s_seed, s_seed + span),
        events=events,
        opts=opts,
        strict_terminal=False,
    )
    return _result_to_trajectory(res, c)


def stable_manifold(
    nl: BistableNonlinearity,
    c: float,
    u_min: float | None = None,
    opts: IntegratorOptions | None = None,
) -> Trajectory:
    """Trajectory converging to (1, 0), computed backwards and returned forward.

    Seeded at (1, 0) - SEED_OFFSET * v_minus (the branch with u < 1, p > 0)
    and continued until u drops to `u_min` (default: eta_under / 2).  Along it
    p > 0 and E > 0 hold throughout.
    """
    if c < 0:
        raise ValueError("c must be nonnegative")
    opts = opts or IntegratorOptions()
    u_min = u_min if u_min is not None else 0.5 * nl.eta_under
    if not 0.0 < u_min < nl.eta:
        raise ValueError("u_min must lie in (0, eta)")

    eig = linearize(nl, 1.0, c)
    eps = SEED_OFFSET
    u0 = 1.0 - eps
    p0 = -eps * eig.lam_minus
    if p0 <= 0.0:
        raise SeedBranchWrong("stable-manifold seed has nonpositive slope")
    s_seed = math.log(eps) / eig.lam_minus  # positive: 1 - u ~ e^{lam_minus s}

    f = nl.f

    def rhs_backward(u: float, p: float) -> tuple[float, float]:
        # sigma = -s; du/dsigma = -p, dp/dsigma = f(u) + c p
        return -p, f(u) + c * p

    stop = Event(lambda u, p: u - u_min, direction="falling", terminal=True, name="u_min")
    span = 10.0 * (1.0 + abs(s_seed)) + 200.0
    res = integrate(rhs_backward, (u0, p0), (0.0, span), events=[stop], opts=opts)

    # flip to forward orientation; dp in forward time is -f(u) - c p
    s_fwd = s_seed - res.s[::-1]
    u_fwd = res.u[::-1]
    p_fwd = res.p[::-1]
    dp_fwd = -(np.asarray(nl.f(u_fwd)) + c * p_fwd)
    keep = np.concatenate([[True], np.diff(s_fwd) > 1e-13])
    return Trajectory(s=s_fwd[keep], u=u_fwd[keep], p=p_fwd[keep], dp=dp_fwd[keep], c=c)


@dataclass(frozen=True)
class Gamma0Extrema:
    """Slope and amplitude extrema of the unstable manifold at one speed."""

    gamma0_max: float
    gamma0_prime_max: float
    s_star: float
    local_maxima: list[tuple[float, float]]  # (s_k, p(s_k)), one per spiral turn
    trajectory: Trajectory


def integrate_gamma0_until(
    nl: BistableNonlinearity,
    c: float,
    done: Callable[[list[EventHit], bool], bool],
    extra_events: Sequence[Event] = (),
    opts: IntegratorOptions | None = None,
    chunk: float = 60.0,
    max_span: float | None = None,
) -> tuple[Trajectory, list[EventHit], bool]:
    """Integrate the unstable manifold in chunks until `done` or termination.

    `done(hits, terminated)` inspects the accumulated non-terminal hits after
    each chunk.  Returns the accumulated trajectory, all hits, and whether a
    terminal event fired.  Used by slope-extrema and departure searches that
    cannot know the needed span in advance.
    """
    opts = opts or IntegratorOptions()
    u0, p0, s_seed = _gamma0_seed(nl, c, SEED_OFFSET)
    events = list(_default_gamma0_events(nl)) + list(extra_events)
    max_span = max_span if max_span is not None else max(600.0, _default_span(nl, c))

    all_s: list[np.ndarray] = []
    all_u: list[np.ndarray] = []
    all_p: list[np.ndarray] = []
    all_dp: list[np.ndarray] = []
    hits: list[EventHit] = []
    s_cur, u_cur, p_cur = s_seed, u0, p0
    terminated = False

    while True:
        res = integrate(
            wave_rhs(nl, c),
            (u_cur, p_cur),
            (s_cur, s_cur + chunk),
            events=events,
            opts=opts,
            strict_terminal=False,
        )
        start = 1 if all_s else 0  # drop the duplicated chunk-start node
        all_s.append(res.s[start:])
        all_u.append(res.u[start:])
        all_p.append(res.p[start:])
        all_dp.append(res.dp[start:])
        hits.extend(h for h in res.hits if h.name not in ("eta_ball", "u_exceeds_one"))
        terminated = res.terminated is not None
        if done(hits, terminated) or terminated:
            break
        s_cur = float(res.s[-1])
        u_cur = float(res.u[-1])
        p_cur = float(res.p[-1])
        if s_cur - s_seed > max_span:
            break

    traj = Trajectory(
        s=np.concatenate(all_s),
        u=np.concatenate(all_u),
        p=np.concatenate(all_p),
        dp=np.concatenate(all_dp),
        c=c,
    )
    return traj, hits, terminated


def gamma0_extrema(
    nl: BistableNonlinearity,
    c: float,
    n_max: int = 1,
    opts: IntegratorOptions | None = None,
) -> Gamma0Extrema:
    """Amplitude sup, global slope maximum and successive slope maxima of Gamma_0,c.

    Local maxima of p are detected as falling zeros of p' = -f(u) - c p along
    the dense output and refined by bisection; when (eta, 0) is a spiral sink
    there is one per turn with strictly decreasing values.  `n_max` bounds how
    many are collected (the spiral has infinitely many).
    """
    if c < 0:
        raise ValueError("c must be nonnegative")
    if opts is None and c >= 5.0:
        # slow creeping dynamics at large c: a coarser step loses no accuracy
        opts = IntegratorOptions(step=5e-2)
    f, eta = nl.f, nl.eta

    pprime = Event(lambda u, p: -f(u) - c * p, direction="falling", name="p_local_max")
    pzero = Event(lambda u, p: p, direction="falling", name="u_local_max")

    def done(hits: list[EventHit], terminated: bool) -> bool:
        n_pmax = sum(1 for h in hits if h.name == "p_local_max")
        n_umax = sum(1 for h in hits if h.name == "u_local_max")
        return n_pmax >= n_max and n_umax >= 1

    traj, hits, terminated = integrate_gamma0_until(
        nl, c, done, extra_events=[pprime, pzero], opts=opts
    )

    maxima = [(h.s, h.p) for h in hits if h.name == "p_local_max"]
    if not maxima:
        raise ValueError(f"no slope maximum found for c={c:g} (span too short?)")
    gamma0_max = float(np.max(traj.u))
    s_star, gamma0_prime_max = maxima[0]
    return Gamma0Extrema(
        gamma0_max=gamma0_max,
        gamma0_prime_max=float(gamma0_prime_max),
        s_star=float(s_star),
        local_maxima=[(float(s), float(v)) for s, v in maxima[:n_max]],
        trajectory=traj,
    )


def invariant_region_boundary(nl: BistableNonlinearity, n: int = 512) -> np.ndarray:
    """Sampled boundary of {E <= 0}: (u, +sqrt(-2F(u)), -sqrt(-2F(u))) where F <= 0."""
    u = np.linspace(0.0, 1.0, n)
    Fu = np.asarray(nl.F(u))
    mask = Fu <= 0.0
    u = u[mask]
    rad = np.sqrt(-2.0 * Fu[mask])
    return np.column_stack([u, rad, -rad])
