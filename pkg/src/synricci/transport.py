"""Quadratic-cost optimal transport on finite metric measure spaces."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .mms import FiniteMMS, ModelManifold, check_prob, geodesic_point, label_point, nearest_label

# POT probes every installed array backend at import; only numpy is needed here.
for _backend in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")

import ot  # noqa: E402


@dataclass(frozen=True, eq=False)
class Coupling:
    """Transport plan ``pi`` between ``mu`` (rows) and ``nu`` (columns).

    ``cost`` is the integral of squared distance against ``pi``; ``dist`` is
    the ground distance matrix it was computed with.
    """

    pi: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    cost: float
    dist: np.ndarray


def plan_cost(dist: np.ndarray, pi: np.ndarray) -> float:
    """Sum of ``dist**2 * pi`` with compensated summation over the support."""
    nz = np.nonzero(pi)
    return math.fsum((dist[nz] ** 2 * pi[nz]).tolist())


def _support(p, floor):
    return np.flatnonzero(p > floor)


def w2_exact(space: FiniteMMS, mu, nu) -> tuple[float, Coupling]:
    """Exact 2-Wasserstein distance by network simplex on the supports.

    Returns ``(W, plan)`` with ``W = sqrt(min cost)``.
    """
    mu = check_prob(mu, space.n, tol=1e-9)
    nu = check_prob(nu, space.n, tol=1e-9)
    rows, cols = _support(mu, 0.0), _support(nu, 0.0)
    a, b = mu[rows], nu[cols]
    # renormalise so both marginals carry identical total mass for the solver
    a, b = a / math.fsum(a), b / math.fsum(b)
    cost_matrix = np.ascontiguousarray(space.dist[np.ix_(rows, cols)] ** 2)
    sub, log = ot.emd(a, b, cost_matrix, numItermax=max(100_000, 50 * len(a) * len(b)), log=True)
    if log["result_code"] != 1:
        raise RuntimeError(f"exact transport solver failed: {log['warning']}")
    pi = np.zeros((space.n, space.n))
    pi[np.ix_(rows, cols)] = sub
    cost = plan_cost(space.dist, pi)
    return math.sqrt(cost), Coupling(pi=pi, mu=mu, nu=nu, cost=cost, dist=space.dist)


class EpsilonTooSmall(ValueError):
    """The entropic kernel cannot be represented at this regularisation."""


def _eps_floor(cost_matrix):
    scale = float(cost_matrix.max()) if cost_matrix.size else 0.0
    return 1e-14 * max(scale, np.finfo(float).tiny)


def _sinkhorn_log(a, b, cost_matrix, eps, max_iter, tol):
    """Log-domain Sinkhorn; returns (dual value, plan, converged)."""
    la, lb = np.log(a), np.log(b)
    f = np.zeros(len(a))
    g = np.zeros(len(b))
    err = np.inf
    for it in range(max_iter):
        f = -eps * logsumexp((g[None, :] - cost_matrix) / eps + lb[None, :], axis=1)
        g = -eps * logsumexp((f[:, None] - cost_matrix) / eps + la[:, None], axis=0)
        if it % 10 == 9 or it == max_iter - 1:
            logpi = (f[:, None] + g[None, :] - cost_matrix) / eps + la[:, None] + lb[None, :]
            err = np.abs(np.exp(logsumexp(logpi, axis=1)) - a).sum()
            if err <= tol:
                break
    logpi = (f[:, None] + g[None, :] - cost_matrix) / eps + la[:, None] + lb[None, :]
    pi = np.exp(logpi)
    err = np.abs(pi.sum(axis=1) - a).sum() + np.abs(pi.sum(axis=0) - b).sum()
    value = math.fsum((f * a).tolist()) + math.fsum((g * b).tolist())
    return value, pi, err <= tol


def _sinkhorn_sym(a, cost_matrix, eps, max_iter, tol):
    """Averaged symmetric Sinkhorn for ``OT_eps(a, a)``; returns (value, converged)."""
    la = np.log(a)
    f = np.zeros(len(a))
    for _ in range(max_iter):
        t = -eps * logsumexp((f[None, :] - cost_matrix) / eps + la[None, :], axis=1)
        f_new = 0.5 * (f + t)
        logpi = (f_new[:, None] + f_new[None, :] - cost_matrix) / eps + la[:, None] + la[None, :]
        err = np.abs(np.exp(logsumexp(logpi, axis=1)) - a).sum()
        f = f_new
        if err <= tol:
            break
    return 2 * math.fsum((f * a).tolist()), err <= tol


def w2_entropic(space: FiniteMMS, mu, nu, epsilon: float, max_iter: int = 10_000, tol: float = 1e-8):
    """Debiased entropic approximation of W2.

    Runs log-domain Sinkhorn on the Gibbs kernel ``exp(-d**2 / epsilon)``
    and returns ``(W_eps, plan, converged)`` where ``W_eps**2`` is the
    Sinkhorn divergence ``OT_eps(mu, nu) - (OT_eps(mu, mu) + OT_eps(nu, nu)) / 2``.
    ``converged`` is false when the marginal error exceeds ``tol``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    mu = check_prob(mu, space.n, tol=1e-9)
    nu = check_prob(nu, space.n, tol=1e-9)
    C = space.dist**2
    floor = _eps_floor(C)
    if epsilon < floor:
        raise EpsilonTooSmall(
            f"epsilon={epsilon:.3g} is below the representable floor; use epsilon >= {floor:.3g}"
        )
    rows, cols = _support(mu, 0.0), _support(nu, 0.0)
    cross, sub, ok = _sinkhorn_log(mu[rows], nu[cols], C[np.ix_(rows, cols)], epsilon, max_iter, tol)
    self_mu, ok_mu = _sinkhorn_sym(mu[rows], C[np.ix_(rows, rows)], epsilon, max_iter, tol)
    self_nu, ok_nu = _sinkhorn_sym(nu[cols], C[np.ix_(cols, cols)], epsilon, max_iter, tol)
    div = cross - 0.5 * (self_mu + self_nu)
    pi = np.zeros((space.n, space.n))
    pi[np.ix_(rows, cols)] = sub
    plan = Coupling(pi=pi, mu=mu, nu=nu, cost=plan_cost(space.dist, pi), dist=space.dist)
    return math.sqrt(max(div, 0.0)), plan, bool(ok and ok_mu and ok_nu)


def displacement_interpolate(space: FiniteMMS, plan: Coupling, t: float, model: ModelManifold | None = None):
    """Approximate McCann interpolant at time ``t`` from a transport plan.

    With a model, each atom ``pi[i, j]`` moves to the grid point nearest the
    model geodesic point ``gamma_ij(t)``.  Without one, the atom sits at ``i``
    for ``t < 0.5`` and at ``j`` otherwise.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    if t == 0.0:
        return plan.mu.copy()
    if t == 1.0:
        return plan.nu.copy()
    out = np.zeros(space.n)
    rows, cols = np.nonzero(plan.pi)
    mass = plan.pi[rows, cols]
    if model is None:
        np.add.at(out, rows if t < 0.5 else cols, mass)
        return out
    if space.labels is None:
        raise ValueError("model interpolation needs point labels on the space")
    for i, j, m in zip(rows.tolist(), cols.tolist(), mass.tolist()):
        if i == j:
            out[i] += m
            continue
        p = geodesic_point(model, label_point(model, space.labels[i]), label_point(model, space.labels[j]), t)
        out[nearest_label(model, space.labels, p)] += m
    return out


def check_coupling(plan: Coupling, tol: float = 1e-9) -> list[str]:
    """Report marginal and cost mismatches of ``plan`` (empty when consistent)."""
    problems = []
    pi = plan.pi
    if np.any(pi < -tol):
        problems.append("plan has negative entries")
    row_err = float(np.abs(pi.sum(axis=1) - plan.mu).max())
    col_err = float(np.abs(pi.sum(axis=0) - plan.nu).max())
    if row_err > tol:
        problems.append(f"row sums differ from mu by {row_err:.3g}")
    if col_err > tol:
        problems.append(f"column sums differ from nu by {col_err:.3g}")
    cost = plan_cost(plan.dist, pi)
    if abs(cost - plan.cost) > tol:
        problems.append(f"stored cost {plan.cost!r} differs from recomputed {cost!r}")
    return problems
