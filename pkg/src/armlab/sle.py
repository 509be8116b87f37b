"""Radial SLE numerics and the driving diffusion Y on [0, 2*pi].

The Loewner chain is built from exact radial slit maps, one per time step with a
constant driving point.  For driving point 1 and duration s the slit map g solves

    (g + 1)^2 / g = exp(-s) (z + 1)^2 / z,

so both g and its inverse are roots of a quadratic (the root inside the disk).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .arms import ExponentFit, fit_exponent
from .rng import generator, hash_normal, hash_uniform, key_for

TWO_PI = 2.0 * np.pi
TICK_BITS = 40  # Brownian times are integers in units of 2**-40
UNIT = 1 << TICK_BITS
NOISE_RATIO = 0.3  # noise per step relative to the distance to the boundary
LAYER = np.pi  # distance below which the boundary is handled by the exact Bessel step


@dataclass(frozen=True)
class DrivingPath:
    kappa: float
    dt: float
    samples: np.ndarray  # B_0 = 0, B_1, ...
    seed: int

    @property
    def angles(self) -> np.ndarray:
        return np.sqrt(self.kappa) * self.samples

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.samples))

    def points(self) -> np.ndarray:
        return np.exp(1j * self.angles)


@dataclass(frozen=True)
class LoewnerState:
    elapsed: float
    slitParams: np.ndarray  # rows (driving angle, duration)
    derivAtZero: float
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TracePath:
    points: np.ndarray
    times: np.ndarray


@dataclass(frozen=True)
class DiffusionPath:
    theta0: float
    boundaryAt2pi: str
    killTime: float  # math.inf when the path survived the horizon
    path: np.ndarray
    times: np.ndarray

    @property
    def survived(self) -> bool:
        return math.isinf(self.killTime)


def sample_driving(kappa: float, dt: float, horizon: float, seed: int) -> DrivingPath:
    if dt <= 0 or horizon <= 0:
        raise ValueError("dt and horizon must be positive")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    n = int(math.ceil(horizon / dt - 1e-12))
    key = np.uint64(key_for(seed, 0xD21))
    inc = _normals(key, n) * math.sqrt(dt)
    return DrivingPath(float(kappa), float(dt), np.concatenate([[0.0], np.cumsum(inc)]), seed)


@njit(cache=True)
def _normals(key, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = hash_normal(key, i)
    return out


# ---------------------------------------------------------------- slit maps

@njit(cache=True)
def _small_root(K):
    # roots of z^2 + (2-K) z + 1 = 0 multiply to 1; return the one inside the disk
    bq = K - 2.0
    sq = np.sqrt(bq * bq - 4.0 + 0j)
    big = 0.5 * (bq + sq) if abs(bq + sq) >= abs(bq - sq) else 0.5 * (bq - sq)
    return 1.0 / big


@njit(cache=True)
def slit_forward(z, angle, s):
    """Image of z under the slit map with driving point exp(i*angle) and duration s."""
    w = np.exp(1j * angle)
    u = z / w
    if u == 0:
        return 0j
    K = np.exp(-s) * (u + 1.0) ** 2 / u
    return w * _small_root(K)


@njit(cache=True)
def slit_inverse(g, angle, s):
    w = np.exp(1j * angle)
    u = g / w
    if u == 0:
        return 0j
    K = np.exp(s) * (u + 1.0) ** 2 / u
    return w * _small_root(K)


@njit(cache=True)
def _trace(angles, durations, stop_radius):
    n = len(durations)
    pts = np.empty(n + 1, dtype=np.complex128)
    pts[0] = 1.0 + 0j
    worst = 0.0
    m = n
    for k in range(1, n + 1):
        z = np.exp(1j * angles[k - 1])
        for j in range(k - 1, -1, -1):
            z = slit_inverse(z, angles[j], durations[j])
        pts[k] = z
        a = abs(z)
        if a > 1.0 and a - 1.0 > worst:
            worst = a - 1.0
        if a <= stop_radius:
            m = k
            break
    return pts[: m + 1], worst


def evolve_radial(driving: DrivingPath, stop_radius: float = 0.0, precision: float = 1e-9):
    """Compose exact slit maps for the piecewise constant driving function.

    Step k uses the driving point exp(i sqrt(kappa) B_{k-1}) on [t_{k-1}, t_k];
    the trace point at t_k is the preimage of that driving point.  Evolution stops
    early once the trace enters the disk of radius stop_radius.
    """
    angles = driving.angles[:-1]
    durations = np.full(len(angles), driving.dt)
    pts, worst = _trace(angles, durations, float(stop_radius))
    if worst > precision:
        raise FloatingPointError(f"trace left the unit disk by {worst:.3e}; precision lost")
    pts = np.where(np.abs(pts) > 1.0, pts / np.abs(pts), pts)
    n = len(pts) - 1
    times = driving.dt * np.arange(n + 1)
    deriv = float(np.prod(np.exp(durations[:n]))) if n else 1.0
    state = LoewnerState(float(times[-1]), np.column_stack([angles[:n], durations[:n]]), deriv,
                         {"kappa": driving.kappa, "kappa8Unproven": driving.kappa == 8})
    return state, TracePath(pts, times)


def loewner_map(state: LoewnerState, z):
    """Apply the accumulated map g_t to interior points z."""
    z = np.asarray(z, dtype=complex)
    out = z.copy().ravel()
    for i in range(out.size):
        w = out[i]
        for ang, s in state.slitParams:
            w = slit_forward(w, ang, s)
        out[i] = w
    return out.reshape(z.shape)


def koebe_check(state: LoewnerState, trace: TracePath) -> float:
    """dist(0, hull) * e^t; the hull distance is the closest trace point."""
    if len(trace.points) == 0:
        raise ValueError("empty trace")
    return float(np.min(np.abs(trace.points)) * np.exp(state.elapsed))


@njit(cache=True)
def _first_loop(pts, n, tol, factor):
    """Index at which the trace first closes a counterclockwise loop around 0 (n if never).

    A loop closes at j when pts[j] is within the closing distance of an earlier
    pts[i] and the sub-path i..j winds once counterclockwise around 0 (its
    accumulated argument is 2*pi up to the angle the gap subtends).  The closing
    distance is max(tol, factor * local spacing of the sampled trace).
    """
    arg = np.zeros(n)
    gap = np.zeros(n)
    for i in range(1, n):
        d = np.angle(pts[i]) - np.angle(pts[i - 1])
        d -= 2 * np.pi * np.floor((d + np.pi) / (2 * np.pi))
        arg[i] = arg[i - 1] + d
        gap[i] = abs(pts[i] - pts[i - 1])
    if n > 1:
        gap[0] = gap[1]
    for j in range(2, n):
        for i in range(j - 1):
            close = max(tol, factor * max(gap[i], gap[j]))
            dist = abs(pts[j] - pts[i])
            r = min(abs(pts[i]), abs(pts[j]))
            if dist <= close and r > close:
                # the gap subtends at most asin(dist / r) radians
                if abs(arg[j] - arg[i] - 2 * np.pi) <= np.arcsin(min(1.0, dist / r)) + 1e-12:
                    return j
    return n


def detect_ccw_loop(trace: TracePath, upTo: float, tol: float, factor: float = 0.0) -> bool:
    """True if the trace up to time upTo has a closed sub-path winding +1 around 0.

    Two samples within tol (or factor times the local sample spacing) close the
    sub-path between them.
    """
    if tol <= 0 and factor <= 0:
        raise ValueError("tol must be positive")
    n = int(np.searchsorted(trace.times, upTo, side="right"))
    pts = np.asarray(trace.points[:n], dtype=np.complex128)
    if n < 3:
        return False
    return bool(_first_loop(pts, n, float(tol), float(factor)) < n)


# ---------------------------------------------------------------- the Y diffusion

def dyadic_step(dt: float) -> int:
    """Largest dyadic step 2**-j (in ticks) not exceeding dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    j = max(0, int(math.ceil(-math.log2(dt) - 1e-12)))
    if j > TICK_BITS - 8:
        raise ValueError("dt too small")
    return UNIT >> j


@njit(cache=True)
def _gamma(key, ctr, a):
    """Gamma(a, 1) from hashed draws at counters ctr, ctr+1, ... (Marsaglia-Tsang)."""
    boost = 1.0
    if a < 1.0:
        boost = hash_uniform(key ^ np.uint64(0x9A3), ctr) ** (1.0 / a)
        a += 1.0
    d = a - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    for k in range(1, 200):
        x = hash_normal(key, ctr + k)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = hash_uniform(key ^ np.uint64(0x9A3), ctr + k)
        if np.log(u) < 0.5 * x * x + d - d * v + d * np.log(v):
            return d * v * boost
    return d * boost


@njit(cache=True)
def _bessel_i(mu, w):
    """Modified Bessel function I_mu(w) by its power series (w > 0, mu > -1)."""
    term = np.exp(mu * np.log(0.5 * w) - math.lgamma(mu + 1.0))
    total = term
    q = 0.25 * w * w
    k = 0
    while term > 1e-17 * total:
        k += 1
        term *= q / (k * (k + mu))
        total += term
    return total


@njit(cache=True)
def bridge_survival(nu, w):
    """P(no visit to 0 | endpoints) for a Bessel process of index nu in (-1, 0).

    w = x y / t for unit diffusion; the killed and reflected transition densities
    differ only through I_{-nu} versus I_{nu}.
    """
    if w > 40.0:
        return 1.0
    return _bessel_i(-nu, w) / _bessel_i(nu, w)


@njit(cache=True)
def _y_path(key, kappa, theta0, max_ticks, horizon_ticks, reflect, record, out_t, out_y, rho, layer):
    """One path of dY = cot(Y/2) dt - sqrt(kappa) dB driven by a hash-indexed Brownian path.

    The Brownian path is built by dyadic midpoint refinement, so smaller steps refine
    the same realization.  Steps are refined until sqrt(kappa h) <= rho * max(d, layer)
    with d the distance to the nearer boundary.  Within distance layer of a boundary
    the distance is locally a Bessel process of dimension delta = 1 + 4/kappa plus the
    smooth drift cot(d/2) - 2/d: the Bessel part is stepped exactly (noncentral
    chi-square, Gaussian part taken from the Brownian increment) and absorption is
    decided by the exact Bessel bridge probability.  Elsewhere plain Euler-Maruyama
    steps with |drift| h <= 0.1.  Returns (kill time or inf, number of recorded points).
    """
    sk = np.sqrt(kappa)
    tick = 1.0 / (1 << 40)
    delta = 1.0 + 4.0 / kappa if kappa > 0 else 1e300
    nu = 0.5 * delta - 1.0
    aux = key ^ np.uint64(0x5EED5EED5EED)
    st_t = np.empty(64, dtype=np.int64)
    st_w = np.empty(64)
    top = 0
    s = 0
    w = 0.0
    y = theta0
    nrec = 0
    if record:
        out_t[0] = 0.0
        out_y[0] = y
        nrec = 1
    while s < horizon_ticks:
        if top == 0:
            e = s + (1 << 40)
            st_t[0] = e
            st_w[0] = w + hash_normal(key, e)
            top = 1
        e = st_t[top - 1]
        we = st_w[top - 1]
        step = e - s
        h = step * tick
        near0 = y <= np.pi
        d = y if near0 else 2 * np.pi - y
        bessel = kappa > 0 and d < layer
        drift = 0.0 if bessel else 1.0 / np.tan(0.5 * y)
        if step > 16 and (step > max_ticks or kappa * h > rho * rho * max(d, layer) ** 2 or abs(drift) * h > 0.1):
            m = s + step // 2
            st_t[top] = m
            st_w[top] = 0.5 * (w + we) + np.sqrt(0.25 * h) * hash_normal(key, m)
            top += 1
            continue
        top -= 1
        dw = we - w
        kill = False
        if bessel:
            # half of the smooth drift cot(d/2) - 2/d before and half after the exact
            # Bessel step; z = d / sqrt(kappa) has unit diffusion
            if d > 0:
                d = d + 0.5 * h * (1.0 / np.tan(0.5 * d) - 2.0 / d)
            z0 = d / sk
            g = -dw if near0 else dw
            zsq = (z0 + g) ** 2 + h * 2.0 * _gamma(aux, np.uint64(s) * np.uint64(512), 0.5 * (delta - 1.0))
            z1 = np.sqrt(zsq)
            if delta < 2.0 and (near0 or not reflect):
                u = hash_uniform(aux ^ np.uint64(0xB41D6E), s)
                kill = u >= bridge_survival(nu, z0 * z1 / h) if z0 > 0 else True
            d1 = sk * z1
            if d1 > 0:
                d1 = abs(d1 + 0.5 * h * (1.0 / np.tan(0.5 * d1) - 2.0 / d1))
            d1 = min(d1, 2 * np.pi)
            yn = d1 if near0 else 2 * np.pi - d1
            if kill:
                tk = (s + 0.5 * step) * tick
                if record and nrec < out_t.shape[0]:
                    out_t[nrec] = tk
                    out_y[nrec] = 0.0 if near0 else 2 * np.pi
                    nrec += 1
                return tk, nrec
        else:
            dr = drift * h
            if dr > 0.1:
                dr = 0.1
            elif dr < -0.1:
                dr = -0.1
            yn = y + dr - sk * dw
            if yn <= 0.0:
                tk = (s + step * y / (y - yn)) * tick
                if record and nrec < out_t.shape[0]:
                    out_t[nrec] = tk
                    out_y[nrec] = 0.0
                    nrec += 1
                return tk, nrec
            if yn >= 2 * np.pi:
                if not reflect:
                    tk = (s + step * (2 * np.pi - y) / (yn - y)) * tick
                    if record and nrec < out_t.shape[0]:
                        out_t[nrec] = tk
                        out_y[nrec] = 2 * np.pi
                        nrec += 1
                    return tk, nrec
                yn = 4 * np.pi - yn
        y = yn
        s = e
        w = we
        if record and nrec < out_t.shape[0]:
            out_t[nrec] = s * tick
            out_y[nrec] = y
            nrec += 1
    return np.inf, nrec


@njit(cache=True)
def _kill_times(key0, kappa, theta0, max_ticks, horizon_ticks, reflect, first, n, rho, layer):
    out = np.empty(n)
    dummy = np.empty(1)
    for i in range(n):
        key = hash_key(key0, first + i)
        out[i], _ = _y_path(key, kappa, theta0, max_ticks, horizon_ticks, reflect, False, dummy, dummy, rho, layer)
    return out


@njit(cache=True, inline="always")
def hash_key(key0, i):
    x = np.uint64(key0) ^ (np.uint64(i) * np.uint64(0x9E3779B97F4A7C15))
    x = (x ^ (x >> np.uint64(31))) * np.uint64(0xBF58476D1CE4E5B9)
    return x ^ (x >> np.uint64(29))


def _mode(boundaryAt2pi: str) -> bool:
    if boundaryAt2pi not in ("reflect", "absorb"):
        raise ValueError("boundaryAt2pi must be 'reflect' or 'absorb'")
    return boundaryAt2pi == "reflect"


def simulate_Y(kappa: float, theta0: float, dt: float, horizon: float, boundaryAt2pi: str = "reflect",
               seed: int = 0, path_index: int = 0, rho: float = NOISE_RATIO, layer: float = LAYER) -> DiffusionPath:
    """One path of the Y diffusion started at theta0, absorbed at 0.

    Steps are dyadic and at most dt.  Within distance layer of a boundary the
    singular part of the drift is integrated exactly (Bessel step with bridge
    absorption) and the smooth remainder by Strang-split Euler; with layer=0 the
    whole path is plain Euler-Maruyama with |drift| * step <= 0.1, absorption
    located by linear interpolation inside the crossing step.  In reflect mode
    overshoots above 2*pi are folded back to 4*pi - Y.
    """
    if not 0.0 < theta0 <= TWO_PI:
        raise ValueError("theta0 must lie in (0, 2*pi]")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    reflect = _mode(boundaryAt2pi)
    cap = int(4 * horizon / dt) + 4096
    out_t = np.empty(cap)
    out_y = np.empty(cap)
    key = np.uint64(hash_key(np.uint64(key_for(seed, 0xA11)), path_index))
    kt, n = _y_path(key, float(kappa), float(theta0), dyadic_step(dt), int(horizon * UNIT), reflect, True, out_t, out_y, rho, layer)
    return DiffusionPath(float(theta0), boundaryAt2pi, float(kt), out_y[:n].copy(), out_t[:n].copy())


def kill_times(kappa: float, theta0: float, dt: float, horizon: float, paths: int, seed: int = 0,
               boundaryAt2pi: str = "reflect", first_path: int = 0, rho: float = NOISE_RATIO, layer: float = LAYER) -> np.ndarray:
    """Kill times (inf for survivors) of independent paths (seed, first_path + i)."""
    reflect = _mode(boundaryAt2pi)
    key0 = np.uint64(key_for(seed, 0xA11))
    return _kill_times(key0, float(kappa), float(theta0), dyadic_step(dt), int(horizon * UNIT), reflect, first_path, paths, rho, layer)


def coupled_Y(kappa: float, thetas, dt: float, horizon: float, seed: int = 0,
              boundaryAt2pi: str = "reflect") -> tuple[np.ndarray, np.ndarray]:
    """Several starts of Y driven by one Brownian path, with an order-preserving scheme.

    Each step translates every path by the same noise increment, applies absorption
    at 0 and reflection at 2*pi as the projection y -> min(y, 2*pi), then runs the
    drift flow y' = cot(y/2) exactly (cos(y/2) is multiplied by exp(-dt/2)).  All
    three maps are monotone, so ordered starts stay ordered and paths that meet
    stay together.  Returns (times, Y) with Y of shape (len(thetas), steps + 1),
    NaN after absorption.  A cross-check for comparison arguments, not the
    production estimator.
    """
    reflect = _mode(boundaryAt2pi)
    y = np.array(thetas, dtype=float)
    if np.any((y <= 0) | (y > TWO_PI)):
        raise ValueError("starts must lie in (0, 2*pi]")
    n = int(math.ceil(horizon / dt - 1e-12))
    noise = generator(seed, 0xC0C).standard_normal(n) * math.sqrt(kappa * dt)
    out = np.full((len(y), n + 1), np.nan)
    out[:, 0] = y
    shrink = math.exp(-0.5 * dt)
    for k in range(n):
        y = y - noise[k]
        y[y <= 0] = np.nan
        if reflect:
            y = np.minimum(y, TWO_PI)
        else:
            y[y >= TWO_PI] = np.nan
        y = 2 * np.arccos(np.cos(0.5 * y) * shrink)
        out[:, k + 1] = y
    return dt * np.arange(n + 1), out


def survival_fit(kill: np.ndarray, t_fit) -> ExponentFit:
    """Fit P[kill > t] ~ exp(-lambda t) on the times t_fit (scale e^t, so exponent = lambda)."""
    n = len(kill)
    surv = np.array([(kill > t).sum() / n for t in t_fit])
    if np.any(surv <= 0):
        raise ValueError("no surviving paths at the end of the fit window")
    return fit_exponent([(np.exp(t), q) for t, q in zip(t_fit, surv)])


def _batch_error(values) -> float:
    v = np.asarray(values)
    return float(v.std(ddof=1) / np.sqrt(len(v)))


def estimate_loop_free_exponent(kappa: float, method: str = "diffusion", paths: int = 100_000, dt: float = 1 / 32,
                                t_fit=None, seed: int = 0, batches: int = 10, radii=None, trace_dt: float = 2e-3,
                                tol: float | None = None, tol_factor: float = 1.0) -> ExponentFit:
    """Decay exponent of the probability of no counterclockwise loop around 0.

    diffusion: Y started at 2*pi, reflected there and absorbed at 0; the survival
    rate in conformal time equals the exponent in the radius.
    trace: Monte Carlo over radial SLE traces; the loop-free probability before the
    trace first enters the disk of radius r is regressed against r.
    The reported slopeStdErr is the spread of independent batch estimates.
    """
    if kappa <= 4:
        fit = ExponentFit([], 0.0, 0.0, 0.0, {"noDecay": True, "kappa": kappa})
        return fit
    if method == "diffusion":
        lam_guess = (kappa * kappa - 16) / (32 * kappa)
        if t_fit is None:
            t_end = min(40.0, 4.0 / lam_guess)
            t_fit = np.linspace(min(4.0, 0.25 * t_end), t_end, 25)
        t_fit = np.asarray(t_fit, dtype=float)
        kill = kill_times(kappa, TWO_PI, dt, float(t_fit[-1]) + dt, paths, seed)
        fit = survival_fit(kill, t_fit)
        parts = [survival_fit(b, t_fit).slope for b in np.array_split(kill, batches)]
        return ExponentFit(fit.points, fit.slope, fit.intercept, _batch_error(parts),
                           {"method": "diffusion", "paths": paths, "dt": dyadic_step(dt) / UNIT, "slopeRegressionStdErr": fit.slopeStdErr})
    if method == "trace":
        radii = np.asarray(radii if radii is not None else [0.5, 0.35, 0.25, 0.18, 0.12, 0.08], dtype=float)
        free = trace_loop_free(kappa, radii, paths, trace_dt, seed, tol, tol_factor)
        hits = free.mean(axis=0)
        fit = fit_exponent([(1 / r, q) for r, q in zip(radii, hits)])
        parts = [fit_exponent([(1 / r, q) for r, q in zip(radii, b.mean(axis=0))]).slope
                 for b in np.array_split(free, batches)]
        return ExponentFit(fit.points, fit.slope, fit.intercept, _batch_error(parts),
                           {"method": "trace", "paths": paths, "dt": trace_dt, "tolFactor": tol_factor})
    raise ValueError("method must be 'diffusion' or 'trace'")


@dataclass(frozen=True)
class TraceSample:
    loopFree: np.ndarray  # per radius
    derivError: float
    koebe: float


def trace_sample(kappa: float, radii, dt: float, seed: int, index: int, tol: float | None = None,
                 horizon: float | None = None, tol_factor: float = 1.0) -> TraceSample:
    """One trace run until it first enters the smallest radius, with per-path invariants."""
    radii = np.asarray(radii, dtype=float)
    rmin = float(radii.min())
    # the hull is within e^-t of 0, so the trace has entered radius rmin by t = -log(rmin)
    horizon = horizon if horizon is not None else -math.log(rmin) + 0.05
    drv = sample_driving(kappa, dt, horizon, key_for(seed, index))
    state, tr = evolve_radial(drv, stop_radius=rmin)
    # closing distance: tol if given, else twice the local sample spacing
    n = len(tr.points)
    if tol is None:
        loop_at = _first_loop(tr.points.astype(np.complex128), n, 0.0, 2.0 * tol_factor)
    else:
        loop_at = _first_loop(tr.points.astype(np.complex128), n, float(tol), 0.0)
    r_abs = np.abs(tr.points)
    out = np.zeros(len(radii), dtype=bool)
    for i, r in enumerate(radii):
        hit = np.flatnonzero(r_abs <= r)
        first = hit[0] if len(hit) else n - 1
        out[i] = loop_at > first
    err = abs(state.derivAtZero / math.exp(state.elapsed) - 1.0)
    return TraceSample(out, err, koebe_check(state, tr))


def trace_loop_free(kappa: float, radii, paths: int, dt: float, seed: int, tol: float | None = None,
                    tol_factor: float = 1.0) -> np.ndarray:
    return np.array([trace_sample(kappa, radii, dt, seed, i, tol, tol_factor=tol_factor).loopFree for i in range(paths)])
