"""Contraction-rate curvature estimates and closed-form Bakry-Emery quantities.

``theta_plus`` measures how fast heat flows started at two points fail to
contract in W2; ``theta_star`` localises it around a point.  On a weighted
model manifold these are compared with ``Ric + Hess v`` via
:func:`rho_gamma`, :func:`sigma_gamma` and :func:`sturm_bounds`.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .heat import WittenOperator, contraction_curve, entropy
from .mms import FiniteMMS, GeodesicPath, GeometryError, ModelManifold, check_prob, geodesic, label_point
from .transport import displacement_interpolate, w2_exact


class CoalescedMeasures(ArithmeticError):
    """Two heat-flowed Diracs reached zero Wasserstein distance."""


@dataclass(frozen=True)
class ThetaEstimate:
    """Extrapolated contraction rate of one pair.

    ``raw[k] = -log(W(t_k) / d) / t_k``; ``value`` is the intercept at
    ``t = 0`` of the least-squares polynomial of degree ``order`` through
    ``(t_grid, raw)`` and ``fit_residual`` the RMS misfit.
    """

    value: float
    t_grid: tuple[float, ...]
    raw: tuple[float, ...]
    fit_residual: float
    order: int
    pair: tuple[int, int] = (-1, -1)
    d: float = float("nan")
    W: tuple[float, ...] = ()

    @property
    def low_confidence(self) -> bool:
        return self.fit_residual > 0.1 * abs(self.value)

    def refit(self) -> tuple[float, float]:
        return _fit(np.array(self.t_grid), np.array(self.raw), self.order)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["low_confidence"] = self.low_confidence
        return out


def _fit(ts, raw, order):
    if len(ts) < order + 1:
        raise ValueError(f"need at least {order + 1} times for an order-{order} fit")
    coef = np.polynomial.polynomial.polyfit(ts, raw, order)
    resid = raw - np.polynomial.polynomial.polyval(ts, coef)
    return float(coef[0]), float(math.sqrt(np.mean(resid**2)))


def time_window(space: FiniteMMS, x: int, y: int) -> tuple[float, float]:
    """Admissible times ``[2 h**2, d(x, y)**2]`` for a pair."""
    return 2 * space.mesh_h**2, float(space.dist[x, y]) ** 2


def default_t_grid(space: FiniteMMS, x: int, y: int, points: int = 6) -> np.ndarray:
    lo, hi = time_window(space, x, y)
    if hi <= lo:
        raise ValueError(
            f"pair ({x}, {y}) at distance {math.sqrt(hi):.4g} is too short for the mesh: "
            f"need d**2 > 2 h**2 = {lo:.4g}"
        )
    return np.geomspace(lo, hi, points)


def theta_plus(space: FiniteMMS, op: WittenOperator, x: int, y: int, t_grid=None, order: int = 1) -> ThetaEstimate:
    """Estimate the contraction rate of ``W(H_t delta_x, H_t delta_y)`` at ``t = 0``.

    ``t_grid`` must lie in ``[2 h**2, d(x, y)**2]``; by default six
    geometrically spaced times spanning that window are used.
    """
    if x == y:
        raise ValueError("theta_plus needs two distinct points")
    a, b = min(x, y), max(x, y)
    d = float(space.dist[a, b])
    if t_grid is None:
        ts = default_t_grid(space, a, b)
    else:
        ts = np.sort(np.asarray(t_grid, dtype=float))
        lo, hi = time_window(space, a, b)
        if ts[0] < lo * (1 - 1e-12) or ts[-1] > hi * (1 + 1e-12):
            raise ValueError(f"t_grid must lie in [{lo:.4g}, {hi:.4g}] for pair ({a}, {b})")
    curve = contraction_curve(space, op, a, b, ts)
    Ws = np.array([w for _, w in curve])
    if np.any(Ws <= 0):
        raise CoalescedMeasures(f"measures coalesced for pair ({a}, {b})")
    raw = -np.log(Ws / d) / ts
    value, resid = _fit(ts, raw, order)
    return ThetaEstimate(
        value=value,
        t_grid=tuple(ts.tolist()),
        raw=tuple(raw.tolist()),
        fit_residual=resid,
        order=order,
        pair=(a, b),
        d=d,
        W=tuple(Ws.tolist()),
    )


@dataclass(frozen=True)
class ThetaStar:
    """Localised sup of ``theta_plus`` over shrinking balls around ``center``.

    ``per_radius[k]`` is the max over eligible pairs in ``B(center, radii[k])``
    and ``value`` the entry for the smallest radius.
    """

    center: int
    value: float
    radii: tuple[float, ...]
    per_radius: tuple[float, ...]
    argmax: tuple[tuple[int, int], ...]
    estimates: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "center": self.center,
            "value": self.value,
            "radii": list(self.radii),
            "per_radius": list(self.per_radius),
            "argmax": [list(p) for p in self.argmax],
        }


_WORKER_STATE = {}


def _init_worker(space, op, points, order):
    _WORKER_STATE.update(space=space, op=op, points=points, order=order)


def _pair_task(pair):
    s = _WORKER_STATE
    ts = default_t_grid(s["space"], *pair, points=s["points"])
    return pair, theta_plus(s["space"], s["op"], *pair, t_grid=ts, order=s["order"])


def theta_star(
    space: FiniteMMS,
    op: WittenOperator,
    x: int,
    radii,
    points: int = 4,
    order: int = 1,
    min_pair: float | None = None,
    workers: int = 1,
) -> ThetaStar:
    """Max of ``theta_plus`` over pairs inside each ball ``B(x, r)``.

    Pairs closer than ``min_pair`` (default ``2 * mesh_h``, the shortest
    distance with a nondegenerate time window) are skipped.
    """
    radii = [float(r) for r in radii]
    if not radii:
        raise ValueError("need at least one radius")
    if sorted(radii, reverse=True) != radii:
        raise ValueError("radii must be given in descending order")
    h = space.mesh_h
    if radii[-1] < 3 * h * (1 - 1e-12):
        raise ValueError(f"smallest radius {radii[-1]:.4g} is below 3 * mesh_h = {3 * h:.4g}")
    min_pair = 2 * h if min_pair is None else float(min_pair)
    balls = [space.ball(x, r) for r in radii]
    for r, ball in zip(radii, balls):
        if len(ball) < 2:
            raise ValueError(f"ball of radius {r:.4g} around point {x} holds fewer than 2 points")
    outer = balls[0]
    pairs = [
        (int(a), int(b))
        for k, a in enumerate(outer)
        for b in outer[k + 1 :]
        if space.dist[a, b] >= min_pair * (1 - 1e-12)
    ]
    _init_worker(space, op, points, order)
    if workers > 1 and len(pairs) > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(space, op, points, order)) as pool:
            results = dict(pool.map(_pair_task, pairs, chunksize=max(1, len(pairs) // (4 * workers))))
    else:
        results = dict(map(_pair_task, pairs))
    per_radius, argmax = [], []
    for r, ball in zip(radii, balls):
        members = set(ball.tolist())
        inside = [p for p in pairs if p[0] in members and p[1] in members]
        if not inside:
            raise ValueError(f"ball of radius {r:.4g} has no pair at distance >= {min_pair:.4g}")
        best = max(inside, key=lambda p: (results[p].value, -p[0], -p[1]))
        per_radius.append(results[best].value)
        argmax.append(best)
    return ThetaStar(
        center=x,
        value=per_radius[-1],
        radii=tuple(radii),
        per_radius=tuple(per_radius),
        argmax=tuple(argmax),
        estimates=results,
    )


# ---------------------------------------------------------------------------
# closed-form tensors on model manifolds


def _unit(model: ModelManifold, direction) -> np.ndarray:
    xi = np.atleast_1d(np.asarray(direction, dtype=float))
    if xi.shape != (model.dim,):
        raise ValueError(f"direction must have {model.dim} frame components")
    norm = float(np.linalg.norm(xi))
    if norm == 0:
        raise ValueError("direction must be nonzero")
    return xi / norm


def ricci_infty(model: ModelManifold, point, direction) -> float:
    """``(Ric + Hess v)(xi, xi) / |xi|**2``."""
    xi = _unit(model, direction)
    return float(xi @ (model.ricci(point) + model.hess_potential(point)) @ xi)


def ricci_N(model: ModelManifold, point, direction, N: float) -> float:
    """N-Bakry-Emery Ricci ``Ric + Hess v - dv (x) dv / (N - n)`` in direction ``xi``.

    ``N = n`` is allowed only for a constant potential; ``N = inf`` gives
    :func:`ricci_infty`.
    """
    n = model.dim
    if N < n:
        raise ValueError(f"N={N} is below the dimension {n}")
    if N == n and not model.is_unweighted:
        raise ValueError("N equal to the dimension requires a constant potential")
    base = ricci_infty(model, point, direction)
    if N == n or math.isinf(N):
        return base
    xi = _unit(model, direction)
    dv = float(model.grad_potential(point) @ xi)
    return base - dv * dv / (N - n)


def rho_gamma(model: ModelManifold, path: GeodesicPath) -> float:
    """Average of ``Ric_{inf,m}(gamma', gamma')`` along ``path`` (trapezoid rule)."""
    vals = np.array([ricci_infty(model, _point(model, p), u) for p, u in zip(path.points, path.tangents)])
    return float(trapezoid(vals, path.s) / path.length)


def _point(model, row):
    row = np.atleast_1d(row)
    return float(row[0]) if model.kind == "circle" else (float(row[0]), float(row[1]))


def sigma_gamma(model: ModelManifold, path: GeodesicPath | None = None) -> float:
    """``max_t (sum_ij R(e_i, g', e_j, g')**2)**0.5`` along a geodesic.

    On a constant-curvature model ``R(e_i, g', e_j, g') = K delta_ij`` for
    ``i, j >= 2``, so the value is ``K sqrt(n - 1)`` everywhere.
    """
    K = model.sectional_curvature
    return abs(K) * math.sqrt(model.dim - 1)


@dataclass(frozen=True)
class SturmBounds:
    lower: float
    upper: float
    sigma: float
    d: float

    @property
    def finite(self) -> bool:
        return math.isfinite(self.upper)

    def contains(self, value: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= value <= self.upper + tol

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper if self.finite else "inf", "sigma": self.sigma, "d": self.d}


def sturm_bounds(model: ModelManifold, x, y, samples: int = 1001) -> SturmBounds:
    """Two-sided bracket ``[rho, rho + sigma tan**2(sqrt(sigma) d / 2)]`` for a pair."""
    path = geodesic(model, x, y, samples)
    rho = rho_gamma(model, path)
    sigma = sigma_gamma(model, path)
    d = path.length
    arg = math.sqrt(sigma) * d / 2
    if sigma == 0:
        upper = rho
    elif arg >= math.pi / 2:
        upper = math.inf
    else:
        upper = rho + sigma * math.tan(arg) ** 2
    return SturmBounds(lower=rho, upper=upper, sigma=sigma, d=d)


def sturm_bounds_for_pair(model: ModelManifold, space: FiniteMMS, x: int, y: int, samples: int = 1001) -> SturmBounds:
    return sturm_bounds(model, label_point(model, space.labels[x]), label_point(model, space.labels[y]), samples)


def _sinc(x: float) -> float:
    if abs(x) < 1e-4:
        x2 = x * x
        return 1 - x2 / 6 + x2 * x2 / 120
    return math.sin(x) / x


def _sinhc(x: float) -> float:
    if abs(x) < 1e-4:
        x2 = x * x
        return 1 + x2 / 6 + x2 * x2 / 120
    return math.sinh(x) / x


def beta_distortion(K: float, N: float, t: float, d: float) -> float:
    """Volume distortion coefficient of the (K, N) model space.

    With ``alpha = sqrt(|K| / (N - 1)) d``: ``+inf`` for ``K > 0`` and
    ``alpha > pi``; ``(sin(t a) / (t sin a))**(N - 1)`` for ``K > 0``; ``1``
    for ``K = 0``; the ``sinh`` analogue for ``K < 0``.  The removable
    singularities at ``t = 0`` and ``d = 0`` are evaluated by series.
    """
    if not N > 1:
        raise ValueError("N must exceed 1")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if d < 0:
        raise ValueError("d must be nonnegative")
    if K == 0:
        return 1.0
    alpha = math.sqrt(abs(K) / (N - 1)) * d
    if K > 0:
        if alpha > math.pi:
            return math.inf
        den = _sinc(alpha)
        if den <= 0:
            return 1.0 if t == 1.0 else math.inf
        ratio = _sinc(t * alpha) / den
    else:
        ratio = _sinhc(t * alpha) / _sinhc(alpha)
    return ratio ** (N - 1)


# ---------------------------------------------------------------------------
# entropy convexity along transport


@dataclass(frozen=True)
class ConvexityRow:
    t: float
    entropy: float
    bound: float
    slack: float
    passed: bool


@dataclass(frozen=True)
class ConvexityReport:
    K: float
    W2: float
    tolerance: float
    rows: tuple[ConvexityRow, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def worst_slack(self) -> float:
        return min(r.slack for r in self.rows)

    def failing_interior(self) -> list[float]:
        return [r.t for r in self.rows if 0 < r.t < 1 and not r.passed]

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "W2": self.W2,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "worst_slack": self.worst_slack,
            "rows": [asdict(r) for r in self.rows],
        }


def barycentric_interpolate(space: FiniteMMS, plan, t: float, model: ModelManifold) -> np.ndarray:
    """Plan-based interpolant that splits each moved atom between grid neighbours.

    On a circle the mass is shared linearly between the two samples bracketing
    the geodesic point; other models fall back to nearest-sample placement.
    """
    if t in (0.0, 1.0) or model.kind != "circle" or space.labels is None:
        return displacement_interpolate(space, plan, t, model)
    theta = space.labels[:, 0]
    n = space.n
    order = np.argsort(theta)
    grid = theta[order]
    step = 2 * math.pi / n
    if not np.allclose(np.diff(grid), step, rtol=0, atol=1e-9):
        return displacement_interpolate(space, plan, t, model)
    out = np.zeros(n)
    rows, cols = np.nonzero(plan.pi)
    mass = plan.pi[rows, cols]
    dt = (theta[cols] - theta[rows] + math.pi) % (2 * math.pi) - math.pi
    if np.any(np.abs(np.abs(dt) - math.pi) < 1e-12):
        raise GeometryError("transport pair on the cut locus")
    pos = ((theta[rows] + t * dt - grid[0]) % (2 * math.pi)) / step
    lo = np.floor(pos).astype(int) % n
    frac = pos - np.floor(pos)
    np.add.at(out, order[lo], mass * (1 - frac))
    np.add.at(out, order[(lo + 1) % n], mass * frac)
    return out


def cd_convexity_check(
    space: FiniteMMS,
    model: ModelManifold | None,
    mu0,
    mu1,
    K: float,
    ts,
    allowance: float | None = None,
) -> ConvexityReport:
    """Test ``Ent(mu_t) <= (1-t) Ent(mu_0) + t Ent(mu_1) - K/2 t(1-t) W**2``.

    ``mu_t`` is built from the optimal plan.  Each time passes when the
    violation is at most ``0.05 |K| W**2 + allowance``; the default allowance
    ``mesh_h / diam`` absorbs the grid placement error.
    """
    mu0 = check_prob(mu0, space.n, tol=1e-9)
    mu1 = check_prob(mu1, space.n, tol=1e-9)
    W, plan = w2_exact(space, mu0, mu1)
    W2 = W * W
    e0, e1 = entropy(space, mu0), entropy(space, mu1)
    if allowance is None:
        allowance = space.mesh_h / max(space.diameter, space.mesh_h)
    tol = 0.05 * abs(K) * W2 + allowance
    rows = []
    for t in ts:
        t = float(t)
        if model is None:
            mut = displacement_interpolate(space, plan, t)
        else:
            mut = barycentric_interpolate(space, plan, t, model)
        ent = entropy(space, mut)
        bound = (1 - t) * e0 + t * e1 - 0.5 * K * t * (1 - t) * W2
        slack = bound - ent
        rows.append(ConvexityRow(t=t, entropy=ent, bound=bound, slack=slack, passed=slack >= -tol))
    return ConvexityReport(K=K, W2=W2, tolerance=tol, rows=tuple(rows))
