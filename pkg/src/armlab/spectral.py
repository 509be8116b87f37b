"""Loop exponent: closed form, 1D eigenproblem and parabolic evolution; Cardy's formula.

The operator L = (kappa/2) d^2 + cot(theta/2) d on (0, 2 pi) is written in
divergence form L u = (1/m) (p u')' with p = sin(theta/2)^(4/kappa) and speed
density m = (2/kappa) p.  Fluxes are exact on each cell when the scale density
1/p is integrated exactly, which keeps second order up to the degenerate end.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eigh_tridiagonal, solve_banded
from scipy.special import beta as beta_fn
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import betainc, gamma, hyp2f1

TWO_PI = 2.0 * np.pi


class ConvergenceError(RuntimeError):
    """Numerical failure: no convergence, unstable evolution or inconsistent mesh trace."""


# ---------------------------------------------------------------- closed forms

def lambda_closed_form(kappa):
    """(kappa^2 - 16) / (32 kappa); exact Fraction for rational input."""
    if isinstance(kappa, bool):
        raise TypeError("kappa must be a number")
    if isinstance(kappa, Rational):
        k = Fraction(kappa)
        if k <= 0:
            raise ValueError("kappa must be positive")
        return (k * k - 16) / (32 * k)
    k = float(kappa)
    if not k > 0:
        raise ValueError("kappa must be positive")
    return (k * k - 16.0) / (32.0 * k)


def eigen_exponent_q(kappa: float) -> float:
    return (kappa - 4.0) / kappa


def analytic_eigenfunction(kappa: float, theta):
    """sin(theta/4)^q with q = (kappa - 4)/kappa."""
    if kappa <= 4:
        raise ValueError("kappa must exceed 4 (q <= 0 is a different regime)")
    theta = np.asarray(theta, dtype=float)
    if np.any((theta < 0) | (theta > TWO_PI + 1e-12)):
        raise ValueError("theta must lie in [0, 2*pi]")
    return np.sin(theta / 4.0) ** eigen_exponent_q(kappa)


def cardy_formula(m):
    """Gamma(2/3)/(Gamma(1/3)Gamma(4/3)) m^(1/3) 2F1(1/3, 2/3; 4/3; m)."""
    m_arr = np.asarray(m, dtype=float)
    if np.any((m_arr < 0) | (m_arr > 1)) or np.any(np.isnan(m_arr)):
        raise ValueError("m must lie in [0, 1]")
    c = gamma(2.0 / 3.0) / (gamma(1.0 / 3.0) * gamma(4.0 / 3.0))
    # the series is singular at m = 1; use C(m) = 1 - C(1 - m) on the upper half
    low = np.minimum(m_arr, 1.0 - m_arr)
    val = c * np.cbrt(low) * hyp2f1(1.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0, low)
    out = np.where(m_arr <= 0.5, val, 1.0 - val)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def _parallelogram_sides(k: float):
    """Side lengths (a-side, b-side) of the 60 degree parallelogram image of H.

    Schwarz-Christoffel with prevertices -1/k, -1, 1, 1/k and interior angles
    pi/3, 2pi/3, pi/3, 2pi/3; the point symmetry of the parallelogram is the
    involution z -> -1/(k z) of the upper half-plane.
    """
    a = 1.0 / k
    opts = dict(weight="alg", epsabs=0.0, epsrel=1e-11, limit=200)
    side_a = quad(lambda x: abs(x - 1) ** (-2 / 3) * abs(x - a) ** (-1 / 3), -a, -1, wvar=(-2 / 3, -1 / 3), **opts)[0]
    side_b = quad(lambda x: abs(x + a) ** (-2 / 3) * abs(x - a) ** (-1 / 3), -1, 1, wvar=(-1 / 3, -2 / 3), **opts)[0]
    return side_a, side_b


def parallelogram_cross_ratio(aspect: float) -> float:
    """Cross-ratio for crossing a 60 degree parallelogram along its side of length aspect (other side 1)."""
    if not 0.25 <= aspect <= 4.0:
        raise ValueError("aspect must lie in [1/4, 4]")

    def f(k):
        side_a, side_b = _parallelogram_sides(k)
        return math.log(side_a / side_b) - math.log(aspect)

    k = brentq(f, 1e-9, 1.0 - 1e-6, xtol=1e-15, rtol=1e-14)
    return 4.0 * k / (1.0 + k) ** 2


def cardy_parallelogram(aspect: float) -> float:
    """Scaling limit of the crossing probability of a 60 degree parallelogram.

    The crossing runs along the side of relative length aspect (a square rhombus is aspect 1).
    """
    return cardy_formula(parallelogram_cross_ratio(aspect))


# ---------------------------------------------------------------- exact cell integrals

def sine_power_integral(lo, hi, e):
    """Integral of sin(t/2)^e over [lo, hi] within [0, 2 pi] (e > -1)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    a = 0.5 * (e + 1.0)
    full = beta_fn(a, 0.5)

    def G(x):  # integral from 0 to x <= pi
        return full * betainc(a, 0.5, np.sin(0.5 * np.minimum(x, np.pi)) ** 2)

    left = G(hi) - G(lo)
    right = G(TWO_PI - lo) - G(TWO_PI - hi)
    mid = 2.0 * full - G(lo) - G(TWO_PI - hi)
    return np.where(hi <= np.pi, left, np.where(lo >= np.pi, right, mid))


@dataclass(frozen=True)
class Grid1D:
    n: int  # interior node count; the node at 2*pi carries the Neumann condition

    @property
    def h(self) -> float:
        return TWO_PI / (self.n + 1)

    @property
    def nodes(self) -> np.ndarray:
        """Unknown nodes theta_i = i h, i = 1..n+1 (the last one is 2*pi)."""
        return self.h * np.arange(1, self.n + 2)


def operator_1d(kappa: float, n: int):
    """Symmetric pieces of -L on Grid1D(n): stiffness (diag, offdiag) and lumped masses.

    -L_h = M^-1 A with A tridiagonal; Dirichlet at 0, reflecting half cell at 2 pi.
    """
    if kappa <= 4:
        raise ValueError("kappa must exceed 4 for an absorbing boundary at 0")
    N = n + 1
    edges = TWO_PI * np.arange(N + 1) / N
    ds = sine_power_integral(edges[:-1], edges[1:], -4.0 / kappa)  # scale increments
    mid = np.concatenate([[0.0], 0.5 * (edges[1:] + edges[:-1]), [TWO_PI]])
    mass = (2.0 / kappa) * sine_power_integral(mid[1:-1], mid[2:], 4.0 / kappa)  # nodes 1..N
    c = 1.0 / ds  # conductances, c[i] joins nodes i and i+1
    diag = c + np.concatenate([c[1:], [0.0]])
    off = -c[1:]
    return diag, off, mass


def apply_operator_1d(kappa: float, n: int, u: np.ndarray) -> np.ndarray:
    """L_h u for node values u on Grid1D(n)."""
    diag, off, mass = operator_1d(kappa, n)
    Au = diag * u
    Au[:-1] += off * u[1:]
    Au[1:] += off * u[:-1]
    return -Au / mass


@dataclass
class EigenResult:
    lam: float
    eigenfunction: np.ndarray
    nodes: np.ndarray
    meshTrace: list
    method: str
    meta: dict = field(default_factory=dict)


def _leading_1d(kappa: float, n: int):
    diag, off, mass = operator_1d(kappa, n)
    s = 1.0 / np.sqrt(mass)
    d = diag * s * s
    e = off * s[:-1] * s[1:]
    w, v = eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
    u = v[:, 0] * s
    u = u / u[-1]
    return float(w[0]), u


def richardson(values, order: float, tol: float = 0.5, floor: float = 0.0):
    """Extrapolate a sequence on meshes halved each time.

    Returns (extrapolated, observed order); refuses when the observed order
    differs from the assumed one by more than tol.  Differences below floor are
    treated as converged: the finest value is returned unchanged.
    """
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        raise ValueError("at least two meshes are required")
    observed = float("nan")
    if abs(v[-2] - v[-1]) <= floor:
        return float(v[-1]), observed
    if len(v) >= 3:
        d1 = v[-3] - v[-2]
        d2 = v[-2] - v[-1]
        if d1 == 0 or d2 == 0 or d1 * d2 < 0:
            raise ConvergenceError(f"mesh trace {v.tolist()} is not monotone; no extrapolation")
        observed = math.log2(abs(d1 / d2))
        if abs(observed - order) > tol:
            raise ConvergenceError(f"observed order {observed:.3f} differs from assumed order {order}")
    f = 2.0**order
    return float((f * v[-1] - v[-2]) / (f - 1.0)), observed


def solve_eigen_1d(kappa: float, n: int, method: str = "directEigen", levels: int = 3,
                   extrapolate: bool = True) -> EigenResult:
    """Smallest eigenvalue of -L with Dirichlet at 0 and Neumann at 2 pi.

    The mesh trace uses n+1 intervals and its halvings; the extrapolated value
    assumes second order and is refused if the observed order disagrees.
    """
    if n < 16:
        raise ValueError("n must be at least 16")
    if method not in ("directEigen", "timeDecay"):
        raise ValueError("method must be directEigen or timeDecay")
    N = n + 1
    sizes = [N // 2**k for k in range(levels - 1, -1, -1) if N // 2**k >= 8]
    trace = []
    for Nk in sizes:
        if method == "directEigen":
            lam_k, u = _leading_1d(kappa, Nk - 1)
        else:
            lam_k, u = _decay_eigen(kappa, Nk - 1)
        trace.append((TWO_PI / Nk, lam_k))
    lam = trace[-1][1]
    meta = {"kappa": kappa, "raw": lam}
    if extrapolate and len(trace) >= 2:
        # eigenvalues of the tridiagonal matrix carry round-off near eps * |A| ~ 1e-9
        lam, observed = richardson([t[1] for t in trace], 2.0, floor=1e-8)
        meta["observedOrder"] = observed
    if not np.all(u >= -1e-12):
        raise ConvergenceError("leading eigenfunction is not of one sign")
    return EigenResult(lam, u, Grid1D(N - 1).nodes, trace, method, meta)


def _decay_eigen(kappa: float, n: int, tol: float = 1e-13, maxit: int = 2000):
    """Inverse iteration (implicit steps with infinite time step) as the time-decay method."""
    diag, off, mass = operator_1d(kappa, n)
    ab = np.zeros((3, n + 1))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    u = np.ones(n + 1)
    lam = 0.0
    for it in range(maxit):
        v = solve_banded((1, 1), ab, mass * u)
        new = float(np.dot(u, mass * u) / np.dot(u, mass * v))
        u = v / v[-1]
        if abs(new - lam) < tol * abs(new):
            return new, u
        lam = new
    raise ConvergenceError(f"inverse iteration did not converge (last change {abs(new - lam):.2e})")


def residual_1d(kappa: float, n: int, margin: float = np.pi / 4) -> float:
    """Max norm of L_h H + lambda H over nodes in [margin, 2 pi - margin].

    H is the analytic eigenfunction.  Both ends are singular points of the
    operator, so the pointwise residual is measured on a fixed compact interior.
    """
    nodes = Grid1D(n).nodes
    H = analytic_eigenfunction(kappa, nodes)
    r = apply_operator_1d(kappa, n, H) + float(lambda_closed_form(kappa)) * H
    inside = (nodes >= margin) & (nodes <= TWO_PI - margin)
    return float(np.max(np.abs(r[inside])))


@dataclass
class ParabolicResult:
    values: np.ndarray
    decayRate: float
    times: np.ndarray
    norms: np.ndarray
    sandwich: tuple


def evolve_parabolic_1d(kappa: float, initial, tEnd: float, n: int, dtStep: float,
                        window: float | None = None, t_sandwich: float = 1.0) -> ParabolicResult:
    """Backward Euler for u_t = L u on Grid1D(n).

    decayRate is the mean log-derivative of the mass-weighted L2 norm over the final
    window; sandwich is (min, max) over nodes and t >= t_sandwich of u / (H e^{-lambda t}).
    """
    diag, off, mass = operator_1d(kappa, n)
    u = np.array(initial, dtype=float)
    if u.shape != (n + 1,):
        raise ValueError("initial must give one value per node of Grid1D(n)")
    if np.any(u < 0):
        raise ValueError("initial data must be nonnegative")
    steps = int(round(tEnd / dtStep))
    ab = np.zeros((3, n + 1))
    ab[0, 1:] = dtStep * off
    ab[1] = mass + dtStep * diag
    ab[2, :-1] = dtStep * off
    H = analytic_eigenfunction(kappa, Grid1D(n).nodes)
    lam = float(lambda_closed_form(kappa))
    times = dtStep * np.arange(steps + 1)
    norms = np.empty(steps + 1)
    norms[0] = math.sqrt(np.dot(u, mass * u))
    lo, hi = math.inf, 0.0
    for k in range(1, steps + 1):
        u = solve_banded((1, 1), ab, mass * u)
        norms[k] = math.sqrt(np.dot(u, mass * u))
        if norms[k] > norms[k - 1] * (1 + 1e-12) and norms[k - 1] > 0:
            raise ConvergenceError(f"norm grew at t={times[k]:.4g}; unstable evolution")
        if times[k] >= t_sandwich and norms[k] > 0:
            ratio = u / (H * math.exp(-lam * times[k]))
            lo = min(lo, float(ratio.min()))
            hi = max(hi, float(ratio.max()))
    if norms[-1] == 0:
        return ParabolicResult(u, 0.0, times, norms, (0.0, 0.0))
    window = window if window is not None else 0.25 * tEnd
    i0 = int(np.searchsorted(times, tEnd - window))
    rate = -(math.log(norms[-1]) - math.log(norms[i0])) / (times[-1] - times[i0])
    return ParabolicResult(u, float(rate), times, norms, (lo, hi))


# ---------------------------------------------------------------------------
# Backbone (monochromatic two-arm) eigenproblem
#
# In (alpha, gamma) the generator is 3 d_aa + cot(alpha/2) d_a + v d_g with
# v = cot((alpha+gamma)/2) - cot(alpha/2) < 0, on alpha, gamma > 0, alpha+gamma <= 2 pi.
# It is discretized as a Markov chain: alpha moves by the exact scale/speed
# rates of the kappa=6 chain, gamma moves down by upwinded transport, the alpha=0
# edge is one shared unknown that restarts at the corner (0, 2 pi), and on the
# hypotenuse an alpha step slides along it (d_g G = 0).  Transport never reaches
# gamma=0 away from the corner; G vanishes there like gamma^(1/3), the half-plane
# one-arm rate that also governs Cardy's profile near the corner, and the last
# transport step uses that rate instead of a plain kill.

BACKBONE_KAPPA = 6.0
EDGE_EXPONENT = 1.0 / 3.0


def _cot(x):
    return 1.0 / np.tan(x)


def _chain_rates(left: np.ndarray, kappa: float = BACKBONE_KAPPA):
    """Up/down rates of the 1D chain on the symmetric node set built from its left half."""
    h = len(left) - 1
    ds_left = sine_power_integral(left[:-1], left[1:], -4.0 / kappa)
    ds = np.concatenate([ds_left, ds_left[::-1]])
    mid = np.concatenate([[0.0], 0.5 * (left[1:] + left[:-1])])
    m_left = (2.0 / kappa) * sine_power_integral(mid[:-1], mid[1:], 4.0 / kappa)
    m_mid = 2.0 * (2.0 / kappa) * sine_power_integral(mid[h:], np.array([np.pi]), 4.0 / kappa)
    mass = np.concatenate([m_left, m_mid, m_left[::-1]])
    M = 2 * h
    up = np.zeros(M + 1)
    down = np.zeros(M + 1)
    up[:M] = 1.0 / (ds * mass[:M])
    down[1:] = 1.0 / (ds * mass[1:])
    return up, down


def backbone_grid(M: int, eps: float = 1e-3, c: float = 0.5) -> np.ndarray:
    """Nodes P_0..P_M on [0, 2 pi] with P_i + P_{M-i} = 2 pi.

    Uniform in P/c + log P - log(2 pi - P) between P_1 = eps and P_{M-1} = 2 pi - eps,
    hence geometric near both ends and roughly uniform in the middle.
    """
    if M < 16 or M % 2:
        raise ValueError("M must be an even integer >= 16")
    if not 0.0 < eps < 0.1:
        raise ValueError("eps must lie in (0, 0.1)")
    h = M // 2

    def xi(p):
        return p / c + np.log(p) - np.log(TWO_PI - p)

    target = xi(eps) + (xi(np.pi) - xi(eps)) * np.arange(h) / (h - 1)
    lo = np.full(h, 0.5 * eps)
    hi = np.full(h, np.pi)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        above = xi(mid) > target
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    left = np.concatenate([[0.0], 0.5 * (lo + hi)])
    left[1], left[h] = eps, np.pi
    return np.concatenate([left, TWO_PI - left[:h][::-1]])


def _assemble(n, parts):
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    vals = np.concatenate([p[2] for p in parts])
    keep = cols >= 0
    return sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n))


def _move(src, dst, rate, diag=None):
    """Generator entries for a jump src -> dst (dst < 0 means killed)."""
    d = -rate if diag is None else diag
    return [(src, src, d), (src, dst, rate)]


def backbone_generator_2d(M: int, eps: float = 1e-3, edge: str = "shared",
                          edge_exponent: float = EDGE_EXPONENT):
    """Sub-generator Q on the (alpha, gamma) mesh; unknown 0 is the alpha=0 edge.

    Returns (Q, I, J, P): node k >= 1 sits at (P[I[k-1]], P[J[k-1]]).
    edge='shared' lets the alpha=0 value equal the corner (0, 2 pi) value reached by
    the chain; edge='extrapolated' instead sets it to the linear extrapolation of
    the alpha=0 limit along the edge nearest the corner (a comparison variant).
    """
    if edge not in ("shared", "extrapolated"):
        raise ValueError("edge must be 'shared' or 'extrapolated'")
    P = backbone_grid(M, eps)
    up, down = _chain_rates(P[: M // 2 + 1])
    I, J = np.nonzero(np.add.outer(np.arange(M + 1), np.arange(M + 1)) <= M)
    keep = (I >= 1) & (J >= 1)
    I, J = I[keep], J[keep]
    n = len(I) + 1
    index = -np.ones((M + 2, M + 2), dtype=np.int64)
    index[I, J] = np.arange(1, n)
    index[0, :] = 0
    src = np.arange(1, n)
    hyp = I + J == M
    parts = []
    parts += _move(src, index[I - 1, J], down[I])
    jt = np.where(hyp, J - 1, J)
    parts += _move(src, np.where(jt >= 1, index[I + 1, np.maximum(jt, 0)], -1), up[I])
    # gamma transport; below P_1 the mesh continues geometrically and G ~ gamma^edge_exponent
    q = P[1] / P[2]
    lower = np.where(J > 1, P[J - 1], P[1] * q)
    width = P[J] - lower
    gam = np.where(hyp, P[J] - 0.5 * width, P[J])
    rate = -(_cot(0.5 * (P[I] + gam)) - _cot(0.5 * P[I])) / width
    bottom = J == 1
    stay = np.where(bottom, q**edge_exponent, 0.0)
    parts += _move(src, np.where(bottom, -1, index[I, np.maximum(J - 1, 0)]), rate,
                   diag=-rate * (1.0 - stay))
    zero = np.array([0])
    if edge == "shared":
        parts += _move(zero, np.array([index[1, M - 1]]), np.array([up[0]]))
    else:
        # G(0) = 2 G(alpha_1, 2 pi - alpha_1) - G(alpha_2, 2 pi - alpha_2), written as a fast relaxation
        r = np.array([up[0]])
        parts += [(zero, zero, -r), (zero, np.array([index[1, M - 1]]), 2 * r),
                  (zero, np.array([index[2, M - 2]]), -r)]
    return _assemble(n, parts), I, J, P


def backbone_generator_symmetric(M: int, edge_exponent: float = EDGE_EXPONENT):
    """Sub-generator on the uniform (alpha, beta) mesh, beta = 2 pi - alpha - gamma.

    The second-order part 3 (d_a - d_b)^2 acts along the diagonal (gamma fixed); the
    drift cot(alpha/2) d_a + cot(beta/2) d_b splits into that diagonal motion plus
    beta transport at speed cot(alpha/2) + cot(beta/2) > 0, upwinded with exact
    cell transit times.  Returns (Q, I, K, h); unknown 0 is the alpha=0 edge.
    """
    if M < 16 or M % 2:
        raise ValueError("M must be an even integer >= 16")
    h = TWO_PI / M
    up, down = _chain_rates(np.arange(M // 2 + 1) * h)
    I, K = np.nonzero(np.add.outer(np.arange(M + 1), np.arange(M + 1)) <= M - 1)
    keep = I >= 1
    I, K = I[keep], K[keep]
    n = len(I) + 1
    index = -np.ones((M + 2, M + 2), dtype=np.int64)
    index[I, K] = np.arange(1, n)
    index[0, :] = 0
    src = np.arange(1, n)
    parts = []
    parts += _move(src, index[I - 1, K + 1], down[I])
    parts += _move(src, index[I + 1, np.maximum(K - 1, 0)], up[I])  # beta=0 reflects
    alpha = I * h
    last = I + K == M - 1
    x, w = np.polynomial.legendre.leggauss(12)
    b = K[:, None] * h + 0.5 * h * (x[None, :] + 1.0)
    with np.errstate(divide="ignore"):
        transit = 0.5 * h * np.sum(w / (_cot(0.5 * alpha[:, None]) + _cot(0.5 * b)), axis=1)
        speed = (_cot(0.5 * alpha) + _cot(0.5 * K * h)) / h
    rate = np.where(last, speed, 1.0 / np.where(last, 1.0, transit))
    # next to gamma=0: G ~ gamma^edge_exponent, so d_g G = edge_exponent G / gamma
    parts += _move(src, np.where(last, -1, index[I, K + 1]), rate,
                   diag=np.where(last, -edge_exponent * rate, -rate))
    parts += _move(np.array([0]), np.array([index[1, 0]]), np.array([up[0]]))
    return _assemble(n, parts), I, K, h


def _leading_generator(Q, method: str, dt: float = 10.0, tol: float = 1e-13, maxit: int = 500):
    """Leading decay rate lam (smallest eigenvalue of -Q) and its eigenvector."""
    if method == "directEigen":
        w, v = spla.eigs(-Q.tocsc(), k=1, sigma=0.0)
        lam, u = float(w[0].real), v[:, 0].real
    elif method == "timeDecay":
        # implicit Euler steps (I - dt Q) u_{k+1} = u_k; growth ratio gives 1/(1 + dt lam)
        lu = spla.splu((sp.identity(Q.shape[0], format="csc") - dt * Q.tocsc()))
        u = np.ones(Q.shape[0])
        lam = np.inf
        for _ in range(maxit):
            v = lu.solve(u)
            ratio = np.max(np.abs(v)) / np.max(np.abs(u))
            new = (1.0 / ratio - 1.0) / dt
            u = v / np.max(np.abs(v))
            if abs(new - lam) < tol:
                break
            lam = new
        else:
            raise ConvergenceError(f"time decay did not settle (last change {abs(new - lam):.2e})")
        lam = new
    else:
        raise ValueError("method must be directEigen or timeDecay")
    u = u / u[0]
    if np.min(u) < -1e-8:
        raise ConvergenceError("leading eigenfunction is not of one sign")
    return lam, np.maximum(u, 0.0)


def _mesh_trace_limit(trace, meta):
    """First-order extrapolation of a halving sequence after a Cauchy check."""
    values = [t[1] for t in trace]
    diffs = np.abs(np.diff(values))
    meta["increments"] = diffs.tolist()
    if len(diffs) >= 2 and not np.all(diffs[1:] < diffs[:-1]):
        raise ConvergenceError(f"mesh trace {values} is not Cauchy under halving")
    lam, observed = richardson(values, 1.0)
    meta["observedOrder"] = observed
    meta["meshError"] = float(abs(values[-1] - values[-2])) if len(values) >= 2 else float("nan")
    return lam


def _check_halving(meshSizes):
    sizes = [int(m) for m in meshSizes]
    if len(sizes) < 2:
        raise ValueError("at least two mesh sizes are required")
    if any(b != 2 * a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("mesh sizes must double at each step")
    return sizes


def solve_backbone_2d(meshSizes, method: str = "timeDecay", edge: str = "shared",
                      eps: float = 1e-3, edge_exponent: float = EDGE_EXPONENT) -> EigenResult:
    """Backbone decay rate from the (alpha, gamma) form on a sequence of doubling meshes.

    The eigenfunction of the finest mesh is returned as an (M+1, M+1) array G[i, j]
    at (nodes[i], nodes[j]), NaN outside the triangle, G = 1 on alpha = 0 and
    G = 0 on gamma = 0.
    """
    sizes = _check_halving(meshSizes)
    trace = []
    for M in sizes:
        Q, I, J, P = backbone_generator_2d(M, eps, edge, edge_exponent)
        lam_M, u = _leading_generator(Q, method)
        trace.append((M, float(lam_M)))
    G = np.full((M + 1, M + 1), np.nan)
    G[I, J] = u[1:]
    G[0, 1:] = 1.0
    G[:, 0] = 0.0
    meta = {"raw": trace[-1][1], "eps": eps, "edge": edge, "edgeExponent": edge_exponent}
    lam = _mesh_trace_limit(trace, meta)
    return EigenResult(lam, G, P, trace, method, meta)


def solve_backbone_symmetric(meshSizes, method: str = "directEigen",
                             edge_exponent: float = EDGE_EXPONENT) -> EigenResult:
    """Backbone decay rate from the (alpha, beta) form on uniform doubling meshes.

    The eigenfunction is an (M+1, M+1) array G2[i, k] at alpha = i h, beta = k h with
    G2 = 1 on alpha = 0 and G2 = 0 on the hypotenuse alpha + beta = 2 pi.
    """
    sizes = _check_halving(meshSizes)
    trace = []
    for M in sizes:
        Q, I, K, h = backbone_generator_symmetric(M, edge_exponent)
        lam_M, u = _leading_generator(Q, method)
        trace.append((M, float(lam_M)))
    G = np.full((M + 1, M + 1), np.nan)
    G[I, K] = u[1:]
    G[0, :M] = 1.0
    k = np.arange(M + 1)
    G[M - k, k] = 0.0
    meta = {"raw": trace[-1][1], "edgeExponent": edge_exponent}
    lam = _mesh_trace_limit(trace, meta)
    return EigenResult(lam, G, np.arange(M + 1) * h, trace, method, meta)


def cardy_profile_error(result: EigenResult, s_max: float = 0.05, s_min: float = 0.0) -> float:
    """Max relative deviation of G/G(0, .) from 1 - cardy(alpha/(alpha+gamma)).

    Taken over interior nodes of an (alpha, gamma) result with s_min < alpha + gamma <= s_max,
    where the profile is compared only where it exceeds 0.05.
    """
    P = result.nodes
    G = result.eigenfunction
    A, Gm = np.meshgrid(P, P, indexing="ij")
    s = A + Gm
    sel = (A > 0) & (Gm > 0) & (s <= s_max) & (s > s_min) & np.isfinite(G)
    target = 1.0 - cardy_formula(A[sel] / s[sel])
    ok = target > 0.05
    return float(np.max(np.abs(G[sel][ok] / target[ok] - 1.0)))
