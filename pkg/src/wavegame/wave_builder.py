"""Assembly of reversed travelling waves and their speed maps.

A wave is glued from three pieces: the unstable manifold of (0,0) up to a
departure point where its slope has fallen to lam L'(c), an affine bridge of
that slope carrying the harvesting density M = (f(theta) + c theta') / theta,
and the stable manifold of (1,0) entered where its slope equals the bridge's.
Departing at the k-th local slope maximum of the manifold yields a profile
with exactly k bumps; gluing a spiral arc to a bridge instead yields a
periodic profile.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .control import Lagrangian
from .errors import (
    NegativeDensity,
    NoExtinctionSpeed,
    NoLanding,
    NoPeriodicOrbit,
    SpeedTooLarge,
)
from .numerics import Event, EventHit, IntegratorOptions, find_root, hermite_interp
from .phase_plane import (
    BistableNonlinearity,
    Trajectory,
    classify_eta,
    gamma0_extrema,
    integrate_gamma0_until,
    stable_manifold,
)

DENSITY_GRID_POINTS = 2048
DENSITY_DUST_TOL = 1e-10  # negative values below this magnitude are clamped to 0


# --- profile containers -------------------------------------------------------


@dataclass(frozen=True)
class FishermanDensity:
    """Harvesting density sampled on its compact support [0, s1]."""

    s: np.ndarray
    m: np.ndarray
    mass: float
    s1: float

    def m_of(self, s):
        return np.interp(np.asarray(s, dtype=float), self.s, self.m, left=0.0, right=0.0)

    def sup(self) -> float:
        return float(np.max(self.m))

    def write_csv(self, path) -> None:
        np.savetxt(
            path,
            np.column_stack([self.s, self.m]),
            delimiter=",",
            header="s,m",
            comments="",
            fmt="%.17g",
        )


@dataclass(frozen=True)
class WaveProfile:
    """Piecewise wave: manifold tail (s <= 0), affine bridge, manifold head.

    The left trajectory ends exactly at (0, theta0, slope) and the right one
    starts exactly at (s1, theta0 + slope*s1, slope), so continuity of value
    and slope at the junctions is built in.  Evaluation extends the profile by
    its computed tail values (within SEED_OFFSET of the limits 0 and 1).
    """

    nl: BistableNonlinearity
    left: Trajectory
    right: Trajectory
    theta0: float
    slope: float
    s1: float
    c: float
    lam: float
    k: int

    @property
    def window(self) -> tuple[float, float]:
        return float(self.left.s[0]), float(self.right.s[-1])

    def theta(self, s):
        sq = np.asarray(s, dtype=float)
        scalar = sq.ndim == 0
        sq = np.atleast_1d(sq)
        out = np.empty_like(sq)
        lo, hi = self.window
        m_left = sq <= 0.0
        m_bridge = (sq > 0.0) & (sq < self.s1)
        m_right = sq >= self.s1
        if np.any(m_left):
            out[m_left] = np.where(
                sq[m_left] < lo, self.left.u[0], self.left.interp_u(sq[m_left])
            )
        if np.any(m_bridge):
            out[m_bridge] = self.theta0 + self.slope * sq[m_bridge]
        if np.any(m_right):
            out[m_right] = np.where(
                sq[m_right] > hi, self.right.u[-1], self.right.interp_u(sq[m_right])
            )
        return float(out[0]) if scalar else out

    def theta_prime(self, s):
        sq = np.asarray(s, dtype=float)
        scalar = sq.ndim == 0
        sq = np.atleast_1d(sq)
        out = np.empty_like(sq)
        lo, hi = self.window
        m_left = sq <= 0.0
        m_bridge = (sq > 0.0) & (sq < self.s1)
        m_right = sq >= self.s1
        if np.any(m_left):
            out[m_left] = np.where(sq[m_left] < lo, 0.0, self.left.interp_p(sq[m_left]))
        if np.any(m_bridge):
            out[m_bridge] = self.slope
        if np.any(m_right):
            out[m_right] = np.where(sq[m_right] > hi, 0.0, self.right.interp_p(sq[m_right]))
        return float(out[0]) if scalar else out

    def sup_theta_prime(self) -> float:
        return float(max(np.max(self.left.p), np.max(self.right.p), self.slope))

    def max_curvature(self) -> float:
        """sup |theta''| via theta'' = -c theta' - f(theta) on the free pieces."""
        vals = []
        for piece in (self.left, self.right):
            vals.append(np.max(np.abs(-self.c * piece.p - np.asarray(self.nl.f(piece.u)))))
        return float(max(vals))  # the bridge contributes exactly zero

    def write_csv(self, path, density: FishermanDensity, s_lo: float, s_hi: float, n: int = 2001) -> None:
        s = np.linspace(s_lo, s_hi, n)
        data = np.column_stack([s, self.theta(s), self.theta_prime(s), density.m_of(s)])
        np.savetxt(
            path, data, delimiter=",", header="s,theta,theta_prime,m", comments="", fmt="%.17g"
        )


# --- departure, bridge, landing -------------------------------------------------


def _crossing_after(
    traj: Trajectory,
    hits: Sequence[EventHit],
    s_k: float,
    p_k: float,
    q: float,
) -> float | None:
    """First falling crossing of p = q at or after the slope maximum s_k."""
    for h in hits:
        if h.name == "slope_crossing" and h.s >= s_k - 1e-9:
            return float(h.s)
    if abs(p_k - q) <= 1e-12:
        return float(s_k)
    return None


def departure_point(
    nl: BistableNonlinearity,
    lagrangian: Lagrangian,
    lam: float,
    c: float,
    k: int = 0,
    opts: IntegratorOptions | None = None,
) -> tuple[Trajectory, float, float]:
    """Locate the abscissa where harvesting starts on the unstable manifold.

    Returns (gamma0, s0, theta0): the manifold trajectory, the first abscissa
    at or after its (k+1)-th slope maximum where the slope equals lam L'(c),
    and the profile value there.  Raises :class:`SpeedTooLarge` when the
    requested slope exceeds the manifold slope at that maximum, which is the
    regime where no wave with k bumps exists.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    if c <= 0:
        raise ValueError("c must be positive")
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k >= 1:
        cls = classify_eta(nl, c)
        if cls.kind != "spiral_sink":
            raise SpeedTooLarge(
                f"k={k} needs a spiral (c < {cls.threshold:.6g}); got c={c:g}"
            )
    q = lam * float(lagrangian.dL(c))
    if q <= 0:
        raise ValueError("lam L'(c) must be positive")

    f = nl.f
    pprime = Event(lambda u, p: -f(u) - c * p, direction="falling", name="p_local_max")
    crossing = Event(lambda u, p: p - q, direction="falling", name="slope_crossing")

    def done(hits: list[EventHit], terminated: bool) -> bool:
        maxima = [h for h in hits if h.name == "p_local_max"]
        if len(maxima) <= k:
            return False
        target = maxima[k]
        if target.p < q - 1e-12:
            return True  # hopeless: slope never reaches q after s_k
        return any(
            h.name == "slope_crossing" and h.s >= target.s - 1e-9 for h in hits
        )

    traj, hits, _terminated = integrate_gamma0_until(
        nl, c, done, extra_events=[pprime, crossing], opts=opts
    )
    maxima = [h for h in hits if h.name == "p_local_max"]
    if len(maxima) <= k:
        raise SpeedTooLarge(
            f"manifold at c={c:g} exposes only {len(maxima)} slope maxima; need {k + 1}"
        )
    s_k, p_k = maxima[k].s, maxima[k].p
    if p_k < q - 1e-12:
        raise SpeedTooLarge(
            f"lam L'(c) = {q:.6g} exceeds the manifold slope {p_k:.6g} at maximum {k}"
        )
    s0 = _crossing_after(traj, hits, s_k, p_k, q)
    if s0 is None:
        raise SpeedTooLarge(f"no slope crossing found after s_k={s_k:.6g}")
    theta0 = float(traj.interp_u(s0))
    return traj, s0, theta0


def linear_bridge(
    nl: BistableNonlinearity,
    c: float,
    theta0: float,
    slope: float,
    s1: float,
    n: int = DENSITY_GRID_POINTS,
) -> tuple[np.ndarray, np.ndarray, FishermanDensity]:
    """Affine profile segment and the density that holds the slope constant.

    On [0, s1] the profile is theta0 + slope*s and M = (f(theta) + c*slope)/theta.
    The construction guarantees M >= 0 once theta0 >= eta_under; values below
    -DENSITY_DUST_TOL raise :class:`NegativeDensity`, smaller dust is clamped.
    """
    if slope <= 0:
        raise ValueError("bridge slope must be positive")
    s = np.linspace(0.0, s1, n)
    theta = theta0 + slope * s
    m = (np.asarray(nl.f(theta)) + c * slope) / theta
    m_min = float(np.min(m))
    if m_min < -DENSITY_DUST_TOL:
        raise NegativeDensity(f"min M = {m_min:.3g} below -{DENSITY_DUST_TOL:g}")
    m = np.maximum(m, 0.0)
    mass = float(np.trapz(m, s))
    return s, theta, FishermanDensity(s=s, m=m, mass=mass, s1=float(s1))


def landing_point(gamma1: Trajectory, slope: float) -> tuple[float, float]:
    """Point of the stable manifold whose slope equals the bridge slope.

    Returns (gamma1_value, r1): the profile value and abscissa of the first
    crossing of p = slope met when walking backwards from (1, 0).
    """
    if slope <= 0:
        raise ValueError("slope must be positive")
    p = gamma1.p
    if slope > float(np.max(p)):
        raise NoLanding(f"slope {slope:.6g} exceeds sup Gamma_1' = {np.max(p):.6g}")
    idx = None
    for i in range(len(p) - 2, -1, -1):
        if (p[i] - slope) * (p[i + 1] - slope) <= 0.0:
            idx = i
            break
    if idx is None:
        raise NoLanding("no slope crossing on the computed stable manifold")
    r1 = find_root(
        lambda s: float(gamma1.interp_p(s)) - slope,
        (float(gamma1.s[idx]), float(gamma1.s[idx + 1])),
        tol=1e-12,
    )
    return float(gamma1.interp_u(r1)), float(r1)


def construct_wave(
    nl: BistableNonlinearity,
    lagrangian: Lagrangian,
    lam: float,
    c: float,
    k: int = 0,
    opts: IntegratorOptions | None = None,
    density_points: int = DENSITY_GRID_POINTS,
) -> tuple[WaveProfile, FishermanDensity]:
    """Assemble the reversed travelling wave with k bumps at speed c.

    The profile is increasing for k = 0 and has exactly k interior maxima for
    k >= 1; its slope equals lam L'(c) on the support of the density, and the
    density is nonnegative with compact support [0, s1].
    """
    gamma0, s0, theta0 = departure_point(nl, lagrangian, lam, c, k=k, opts=opts)
    slope = lam * float(lagrangian.dL(c))

    gamma1 = stable_manifold(nl, c, opts=opts)
    gamma_1_value, r1 = landing_point(gamma1, slope)
    s1 = (gamma_1_value - theta0) / slope
    if s1 <= 0:
        raise NoLanding(
            f"landing value {gamma_1_value:.6g} does not lie above the departure {theta0:.6g}"
        )

    _, _, density = linear_bridge(nl, c, theta0, slope, s1, n=density_points)

    keep_l = gamma0.s < s0 - 1e-12
    left = Trajectory(
        s=np.append(gamma0.s[keep_l], s0) - s0,
        u=np.append(gamma0.u[keep_l], theta0),
        p=np.append(gamma0.p[keep_l], slope),
        dp=np.append(gamma0.dp[keep_l], -float(nl.f(theta0)) - c * slope),
        c=c,
    )
    shift = s1 - r1
    keep_r = gamma1.s > r1 + 1e-12
    right = Trajectory(
        s=np.concatenate([[s1], gamma1.s[keep_r] + shift]),
        u=np.concatenate([[gamma_1_value], gamma1.u[keep_r]]),
        p=np.concatenate([[slope], gamma1.p[keep_r]]),
        dp=np.concatenate([[-float(nl.f(gamma_1_value)) - c * slope], gamma1.dp[keep_r]]),
        c=c,
    )
    wave = WaveProfile(
        nl=nl,
        left=left,
        right=right,
        theta0=theta0,
        slope=slope,
        s1=float(s1),
        c=c,
        lam=lam,
        k=k,
    )
    return wave, density


# --- periodic waves --------------------------------------------------------------


@dataclass(frozen=True)
class PeriodicWave:
    """One period of a spiral arc (free flow) closed by a harvested bridge.

    The arc occupies [0, s_arc] and the bridge [s_arc, period]; theta and its
    slope repeat with the stated period, and the density is supported on the
    bridge of every period.
    """

    nl: BistableNonlinearity
    arc: Trajectory  # renormalised to start at s = 0
    s_arc: float
    period: float
    theta_a: float  # profile value at the arc start (= bridge end)
    theta_b: float  # profile value at the arc end (= bridge start)
    q: float  # bridge slope lam L'(c)
    c: float
    lam: float
    density: FishermanDensity  # bridge density on [0, period - s_arc], shifted

    def _fold(self, s):
        return np.mod(np.asarray(s, dtype=float), self.period)

    def theta(self, s):
        sf = self._fold(s)
        scalar = sf.ndim == 0
        sf = np.atleast_1d(sf)
        out = np.empty_like(sf)
        on_arc = sf <= self.s_arc
        out[on_arc] = self.arc.interp_u(sf[on_arc])
        out[~on_arc] = self.theta_b + self.q * (sf[~on_arc] - self.s_arc)
        return float(out[0]) if scalar else out

    def theta_prime(self, s):
        sf = self._fold(s)
        scalar = sf.ndim == 0
        sf = np.atleast_1d(sf)
        out = np.empty_like(sf)
        on_arc = sf <= self.s_arc
        out[on_arc] = self.arc.interp_p(sf[on_arc])
        out[~on_arc] = self.q
        return float(out[0]) if scalar else out

    def m(self, s):
        sf = self._fold(s)
        return self.density.m_of(np.asarray(sf) - self.s_arc)

    def write_csv(self, path, n_per_period: int = 1024, n_periods: int = 2) -> None:
        s = np.linspace(0.0, n_periods * self.period, n_per_period * n_periods + 1)
        data = np.column_stack([s, self.theta(s), self.theta_prime(s), self.m(s)])
        np.savetxt(
            path, data, delimiter=",", header="s,theta,theta_prime,m", comments="", fmt="%.17g"
        )


def construct_periodic(
    nl: BistableNonlinearity,
    lagrangian: Lagrangian,
    lam: float,
    c: float,
    opts: IntegratorOptions | None = None,
    min_amplitude: float = 1e-3,
    max_crossings: int = 12,
) -> PeriodicWave:
    """Periodic profile from consecutive falling slope crossings of the spiral.

    Among the spiral arcs whose endpoints sit at slope q = lam L'(c), the one
    with the smallest period (the innermost with amplitude above
    `min_amplitude`) is closed by an affine bridge carrying the density.
    """
    cls = classify_eta(nl, c)
    if cls.kind != "spiral_sink":
        raise NoPeriodicOrbit(f"(eta, 0) is not a spiral sink at c={c:g}")
    q = lam * float(lagrangian.dL(c))
    if q <= 0:
        raise ValueError("lam L'(c) must be positive")

    crossing = Event(lambda u, p: p - q, direction="falling", name="slope_crossing")

    def done(hits, terminated):
        xs = [h for h in hits if h.name == "slope_crossing"]
        if len(xs) >= max_crossings:
            return True
        if len(xs) >= 2 and xs[-2].u - xs[-1].u < min_amplitude:
            return True
        return False

    traj, hits, _ = integrate_gamma0_until(nl, c, done, extra_events=[crossing], opts=opts)
    xs = [h for h in hits if h.name == "slope_crossing"]
    if len(xs) < 2:
        raise NoPeriodicOrbit(
            f"need two falling slope crossings at q={q:.6g}; found {len(xs)}"
        )

    best = None
    for a, b in zip(xs[:-1], xs[1:]):
        theta_a, theta_b = float(a.u), float(b.u)
        if theta_a - theta_b < min_amplitude:
            continue
        s_arc = float(b.s - a.s)
        bridge_len = (theta_a - theta_b) / q
        period = s_arc + bridge_len
        try:
            _, _, density = linear_bridge(nl, c, theta_b, q, bridge_len)
        except NegativeDensity:
            continue
        if best is None or period < best[0]:
            best = (period, a, b, theta_a, theta_b, s_arc, density)
    if best is None:
        raise NoPeriodicOrbit("no arc/bridge pair with nonnegative density found")

    period, a, b, theta_a, theta_b, s_arc, density = best
    keep = (traj.s > a.s + 1e-12) & (traj.s < b.s - 1e-12)
    arc = Trajectory(
        s=np.concatenate([[a.s], traj.s[keep], [b.s]]) - a.s,
        u=np.concatenate([[theta_a], traj.u[keep], [theta_b]]),
        p=np.concatenate([[q], traj.p[keep], [q]]),
        dp=np.concatenate(
            [
                [-float(nl.f(theta_a)) - c * q],
                traj.dp[keep],
                [-float(nl.f(theta_b)) - c * q],
            ]
        ),
        c=c,
    )
    return PeriodicWave(
        nl=nl,
        arc=arc,
        s_arc=s_arc,
        period=float(period),
        theta_a=theta_a,
        theta_b=theta_b,
        q=q,
        c=c,
        lam=lam,
        density=density,
    )


# --- speed maps -------------------------------------------------------------------


def _slope_at_kth_max(nl: BistableNonlinearity, c: float, k: int) -> float:
    """Manifold slope at its (k+1)-th local maximum, or -inf when absent."""
    if k >= 1 and classify_eta(nl, c).kind != "spiral_sink":
        return -math.inf
    try:
        ex = gamma0_extrema(nl, c, n_max=k + 1)
    except Exception:
        return -math.inf
    if len(ex.local_maxima) <= k:
        return -math.inf
    return ex.local_maxima[k][1]


def ck_of_lambda(
    nl: BistableNonlinearity,
    lagrangian: Lagrangian,
    lam: float,
    k: int = 0,
    c_min: float = 1e-4,
    c_cap: float = 64.0,
) -> float:
    """Largest speed at which the departure condition holds at the k-th maximum.

    Root of Gamma'(s_k)(c) - lam L'(c) by geometric scan plus bisection;
    returns +inf (with the scan exhausted) when the condition holds on the
    whole box, which cannot happen for superlinear costs.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")

    def phi(c: float) -> float:
        return _slope_at_kth_max(nl, c, k) - lam * float(lagrangian.dL(c))

    if k >= 1:
        c_cap = min(c_cap, 0.999 * classify_eta(nl, c_min).threshold)

    grid = np.geomspace(c_min, c_cap, 40)
    prev_c, prev_v = None, None
    for cg in grid:
        v = phi(float(cg))
        if prev_v is not None and prev_v > 0.0 >= v:
            return find_root(phi, (prev_c, float(cg)), tol=1e-10)
        if v > 0.0:
            prev_c, prev_v = float(cg), v
    if prev_v is not None and prev_c == float(grid[-1]):
        return math.inf  # departure holds on the whole scan box
    raise SpeedTooLarge(
        f"departure condition fails on the whole scan box for lam={lam:g}, k={k}"
    )


def c0_of_lambda(nl: BistableNonlinearity, lagrangian: Lagrangian, lam: float) -> float:
    return ck_of_lambda(nl, lagrangian, lam, k=0)


def c_max_of_lagrangian(
    nl: BistableNonlinearity,
    lagrangian: Lagrangian,
    c_min: float = 1e-3,
    c_cap: float = 64.0,
    n_scan: int = 80,
) -> float:
    """Largest speed with movement cost below the manifold amplitude.

    Last sign change of |Gamma_0,c|_sup - L(c) on a dense scan, refined by
    bisection.
    """

    def h(c: float) -> float:
        ex = gamma0_extrema(nl, c, n_max=1)
        return ex.gamma0_max - float(lagrangian.L(c))

    hi = 4.0
    while True:
        grid = np.geomspace(c_min, hi, n_scan)
        vals = [h(float(c)) for c in grid]
        last = None
        for i in range(len(grid) - 1):
            if vals[i] > 0.0 >= vals[i + 1]:
                last = (float(grid[i]), float(grid[i + 1]))
        if last is not None:
            return find_root(h, last, tol=1e-10)
        if all(v <= 0 for v in vals):
            raise NoExtinctionSpeed("movement cost exceeds the amplitude on the scan box")
        if hi >= c_cap:
            return math.inf  # superlinear costs cannot reach here
        hi = min(2.0 * hi, c_cap)


@dataclass(frozen=True)
class SpeedMaps:
    lambdas: np.ndarray
    c0: np.ndarray
    ck: dict[int, np.ndarray]
    c_max: float

    def write_csv(self, path) -> None:
        cols = [self.lambdas, self.c0] + [self.ck[k] for k in sorted(self.ck)]
        header = ",".join(["lambda", "c0"] + [f"c{k}" for k in sorted(self.ck)])
        np.savetxt(
            path, np.column_stack(cols), delimiter=",", header=header, comments="", fmt="%.17g"
        )


def compute_speed_maps(
    nl: BistableNonlinearity,
    lagrangian: Lagrangian,
    lambdas: Sequence[float],
    k_max: int = 0,
) -> SpeedMaps:
    lam_arr = np.asarray(list(lambdas), dtype=float)
    if lam_arr.size == 0:
        raise ValueError("lambda grid must be nonempty")
    c0 = np.array([c0_of_lambda(nl, lagrangian, lam) for lam in lam_arr])
    ck = {
        k: np.array([ck_of_lambda(nl, lagrangian, lam, k=k) for lam in lam_arr])
        for k in range(1, k_max + 1)
    }
    cmax = c_max_of_lagrangian(nl, lagrangian)
    return SpeedMaps(lambdas=lam_arr, c0=c0, ck=ck, c_max=cmax)


# --- validity reporting --------------------------------------------------------------


@dataclass(frozen=True)
class ValidityReport:
    checks: dict[str, dict]

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_json_dict(self) -> dict:
        return {"passed": self.passed, "checks": self.checks}

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _ode_residual(wave: WaveProfile, density: FishermanDensity) -> tuple[float, float]:
    """Max centred-difference residual of -u'' - c u' - f(u) + M u on the pieces."""
    worst = 0.0
    step = 0.0
    for piece, with_m in ((wave.left, False), (wave.right, False)):
        s, u = piece.s, piece.u
        if len(s) < 5:
            continue
        h = np.diff(s)
        interior = np.where(np.abs(h[:-1] - h[1:]) < 1e-13)[0] + 1
        if len(interior) == 0:
            continue
        i = interior
        hh = h[i - 1]
        upp = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / hh**2
        up = (u[i + 1] - u[i - 1]) / (2.0 * hh)
        res = -upp - wave.c * up - np.asarray(wave.nl.f(u[i]))
        worst = max(worst, float(np.max(np.abs(res))))
        step = max(step, float(np.max(hh)))
    # bridge: residual of the affine piece against the density definition
    sb = density.s[1:-1]
    theta_b = wave.theta0 + wave.slope * sb
    res_b = -wave.c * wave.slope - np.asarray(wave.nl.f(theta_b)) + density.m_of(sb) * theta_b
    worst_bridge = float(np.max(np.abs(res_b)))
    return max(worst, worst_bridge), step


def count_bumps(wave: WaveProfile, n: int = 8001, slope_floor: float = 1e-12) -> int:
    """Number of interior local maxima, from strict sign changes of the slope."""
    lo, hi = wave.window
    s = np.linspace(lo, hi, n)
    d = np.asarray(wave.theta_prime(s))
    signs = np.sign(d[np.abs(d) > slope_floor])
    changes = int(np.sum(signs[1:] != signs[:-1]))
    return changes // 2


def validity_report(
    wave: WaveProfile,
    density: FishermanDensity,
    lagrangian: Lagrangian,
    affine_tol: float = 1e-8,
    junction_tol: float = 1e-8,
) -> ValidityReport:
    """A posteriori checks of the assembled wave against its defining relations."""
    checks: dict[str, dict] = {}
    lam, c = wave.lam, wave.c

    L_c = float(lagrangian.L(c))
    checks["max_speed"] = {
        "passed": bool(L_c <= wave.theta0 + 1e-12),
        "L_of_c": L_c,
        "theta_at_0": wave.theta0,
    }

    q = lam * float(lagrangian.dL(c))
    sb = np.linspace(0.0, wave.s1, 512)
    affine_dev = float(np.max(np.abs(np.asarray(wave.theta(sb)) - (wave.theta0 + q * sb))))
    slope_dev = abs(wave.slope - q)
    checks["affine_on_support"] = {
        "passed": bool(affine_dev <= affine_tol and slope_dev <= affine_tol),
        "max_deviation": affine_dev,
        "slope_deviation": slope_dev,
    }

    checks["support_compact"] = {
        "passed": bool(np.isfinite(wave.s1) and wave.s1 > 0 and float(density.m_of(wave.s1 + 1.0)) == 0.0),
        "s1": wave.s1,
    }

    checks["density_nonnegative"] = {
        "passed": bool(float(np.min(density.m)) >= 0.0),
        "min_m": float(np.min(density.m)),
    }

    jump_u0 = abs(float(wave.left.u[-1]) - wave.theta0)
    jump_p0 = abs(float(wave.left.p[-1]) - wave.slope)
    jump_u1 = abs(float(wave.right.u[0]) - (wave.theta0 + wave.slope * wave.s1))
    jump_p1 = abs(float(wave.right.p[0]) - wave.slope)
    checks["junction_continuity"] = {
        "passed": bool(max(jump_u0, jump_p0, jump_u1, jump_p1) <= junction_tol),
        "theta_jump_at_0": jump_u0,
        "slope_jump_at_0": jump_p0,
        "theta_jump_at_s1": jump_u1,
        "slope_jump_at_s1": jump_p1,
    }

    residual, h = _ode_residual(wave, density)
    scale = 1.0 + wave.max_curvature()
    checks["ode_residual"] = {
        "passed": bool(residual <= 10.0 * h * h * scale) if h > 0 else True,
        "residual": residual,
        "bound": 10.0 * h * h * scale if h > 0 else None,
    }

    bumps = count_bumps(wave)
    if wave.k == 0:
        s_grid = np.linspace(wave.window[0], wave.window[1], 4001)
        th = np.asarray(wave.theta(s_grid))
        checks["monotone"] = {
            "passed": bool(np.all(np.diff(th) > -1e-12) and bumps == 0),
            "bumps": bumps,
        }
    else:
        checks["bump_count"] = {"passed": bool(bumps == wave.k), "bumps": bumps, "expected": wave.k}

    return ValidityReport(checks=checks)
