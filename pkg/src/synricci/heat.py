"""Witten-Laplacian heat semigroup on finite metric measure spaces.

The generator acts on functions as ``(L f)_i = sum_j L_ij (f_j - f_i)`` with
``L_ij = sqrt(w_j / w_i) * g_ij`` for a mesh edge ``(i, j)`` of geometric
conductance ``g_ij``.  It is self-adjoint in ``l^2(w)``, has zero row sums and
nonnegative off-diagonal rates, and on a uniform circle it is the
``(1, -2, 1) / h**2`` stencil.  Measures evolve by the adjoint, so
``H_t delta_x`` is row ``x`` of ``exp(t L)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply, splu

from .mms import FiniteMMS, check_prob, dirac
from .transport import w2_exact

DENSE_LIMIT = 2500


@dataclass(frozen=True)
class HeatState:
    t: float
    density: np.ndarray


class WittenOperator:
    """Discrete ``Delta_m`` built on the mesh of a :class:`FiniteMMS`."""

    def __init__(self, L: sp.csr_matrix, mass: np.ndarray, mesh_h: float, sym: sp.csr_matrix):
        self.L = L
        self.mass = mass
        self.mesh_h = mesh_h
        self._sym = sym

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @cached_property
    def _spectrum(self):
        lam, Q = np.linalg.eigh(self._sym.toarray())
        # the generator is negative semidefinite; clip roundoff above zero
        return np.minimum(lam, 0.0), Q

    @cached_property
    def _sqrt_mass(self):
        return np.sqrt(self.mass)

    def measure_propagate(self, mu: np.ndarray, ts) -> np.ndarray:
        """Rows ``mu exp(t L)`` for each ``t`` in ``ts`` (shape ``(len(ts), n)``)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        if self.n <= DENSE_LIMIT:
            lam, Q = self._spectrum
            s = self._sqrt_mass
            coef = Q.T @ (mu / s)
            out = (np.exp(np.outer(ts, lam)) * coef[None, :]) @ Q.T
            return out * s[None, :]
        return np.array([self._sparse_expm(mu, t, adjoint=True) for t in ts])

    def function_propagate(self, f: np.ndarray, t: float) -> np.ndarray:
        """``exp(t L) f``: the semigroup acting on functions."""
        if self.n <= DENSE_LIMIT:
            lam, Q = self._spectrum
            s = self._sqrt_mass
            return (Q @ (np.exp(t * lam) * (Q.T @ (s * f)))) / s
        return self._sparse_expm(f, t, adjoint=False)

    def _sparse_expm(self, u0, t, adjoint):
        if t == 0:
            return np.array(u0, dtype=float)
        A = self.L.T.tocsr() if adjoint else self.L
        return expm_multiply(t * A, np.asarray(u0, dtype=float))

    def _crank_nicolson(self, u0, t, adjoint, max_step=None):
        """Crank-Nicolson time stepping with step at most ``max_step`` (default ``h**2 / 4``)."""
        if t == 0:
            return np.array(u0, dtype=float)
        max_step = max_step or self.mesh_h**2 / 4
        steps = max(1, math.ceil(t / max_step))
        dt = t / steps
        A = self.L.T.tocsc() if adjoint else self.L.tocsc()
        eye = sp.identity(self.n, format="csc")
        lhs = splu((eye - 0.5 * dt * A).tocsc())
        rhs = (eye + 0.5 * dt * A).tocsr()
        u = np.array(u0, dtype=float)
        for _ in range(steps):
            u = lhs.solve(rhs @ u)
        return u


def build_witten(space: FiniteMMS) -> WittenOperator:
    """Assemble the weighted graph Laplacian of ``space``'s mesh."""
    if not space.has_mesh:
        raise ValueError("space has no adjacency; the Witten operator needs mesh edges")
    n = space.n
    i, j = space.edges[:, 0], space.edges[:, 1]
    g = space.edge_conductance()
    w = space.weight
    rows = np.concatenate([i, j])
    cols = np.concatenate([j, i])
    rate = np.concatenate([np.sqrt(w[j] / w[i]) * g, np.sqrt(w[i] / w[j]) * g])
    off = sp.coo_matrix((rate, (rows, cols)), shape=(n, n)).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    L = (off + sp.diags(diag)).tocsr()
    sym_off = sp.coo_matrix((np.concatenate([g, g]), (rows, cols)), shape=(n, n)).tocsr()
    sym = (sym_off + sp.diags(diag)).tocsr()
    return WittenOperator(L=L, mass=w.copy(), mesh_h=float(space.mesh_h), sym=sym)


def _clean(p: np.ndarray) -> np.ndarray:
    p = np.where(p < 0, 0.0, p)
    return p / math.fsum(p.tolist())


def heat_flow(op: WittenOperator, initial, t: float) -> HeatState:
    """Evolve the probability measure ``initial`` for time ``t``."""
    if t < 0:
        raise ValueError("heat flow time must be nonnegative")
    mu = check_prob(initial, op.n, tol=1e-9)
    if t == 0:
        return HeatState(0.0, mu.copy())
    return HeatState(float(t), _clean(op.measure_propagate(mu, [t])[0]))


def heat_flow_many(op: WittenOperator, initial, ts) -> list[HeatState]:
    mu = check_prob(initial, op.n, tol=1e-9)
    ts = [float(t) for t in ts]
    if any(t < 0 for t in ts):
        raise ValueError("heat flow time must be nonnegative")
    rows = op.measure_propagate(mu, ts)
    return [HeatState(t, mu.copy() if t == 0 else _clean(r)) for t, r in zip(ts, rows)]


def entropy(space: FiniteMMS, mu) -> float:
    """Relative entropy ``sum mu_i log(mu_i / w_i)`` with ``0 log 0 = 0``."""
    mu = np.asarray(mu, dtype=float)
    nz = mu > 0
    return math.fsum((mu[nz] * np.log(mu[nz] / space.weight[nz])).tolist())


def contraction_curve(space: FiniteMMS, op: WittenOperator, x: int, y: int, ts, floor: float = 1e-12):
    """``[(t, W(H_t delta_x, H_t delta_y)) for t in ts]``.

    Heat-kernel masses below ``floor`` are dropped before the transport
    solve; their contribution to ``W**2`` is below ``floor * diam**2``.
    """
    ts = [float(t) for t in ts]
    if x == y:
        dirac(space, x)
        return [(t, 0.0) for t in ts]
    x, y = min(x, y), max(x, y)
    hx = heat_flow_many(op, dirac(space, x), ts)
    hy = heat_flow_many(op, dirac(space, y), ts)
    out = []
    for t, a, b in zip(ts, hx, hy):
        mu, nu = a.density, b.density
        if floor > 0:
            mu = _clean(np.where(mu < floor, 0.0, mu))
            nu = _clean(np.where(nu < floor, 0.0, nu))
        W, _ = w2_exact(space, mu, nu)
        out.append((t, W))
    return out
