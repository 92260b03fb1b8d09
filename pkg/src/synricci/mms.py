"""Finite metric measure spaces and analytic weighted model manifolds.

A :class:`FiniteMMS` is a distance matrix with positive point masses and an
optional mesh graph.  A :class:`ModelManifold` is a circle, round sphere or
flat torus carrying a smooth potential ``v``; its reference measure is
``exp(-v) vol``.  :func:`discretize` samples a model into a finite space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

KINDS = ("circle", "sphere", "torus")


class GeometryError(ValueError):
    """Raised for degenerate geometric input (cut locus, bad resolution, ...)."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FiniteMMS:
    """A finite metric measure space.

    Parameters
    ----------
    dist : (n, n) array
        Pairwise distances.
    weight : (n,) array
        Mass of each point.
    edges : (E, 2) int array, optional
        Mesh edges ``(i, j)`` with ``i < j``.  Needed by the heat module.
    edge_length : (E,) array, optional
        Length of each edge; must agree with ``dist``.
    conductance : (E,) array, optional
        Geometric coupling of each edge (face measure over edge length and
        cell size).  Defaults to ``1 / edge_length**2``, the regular-grid value.
    labels : (n, k) array, optional
        Coordinates of each point, used for reporting and interpolation.
    mesh_h : float, optional
        Characteristic cell size.  Defaults to the longest edge, or the
        smallest nonzero distance when there is no mesh.
    """

    dist: np.ndarray
    weight: np.ndarray
    edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    edge_length: np.ndarray = field(default_factory=lambda: np.zeros(0))
    conductance: np.ndarray | None = None
    labels: np.ndarray | None = None
    mesh_h: float | None = None

    def __post_init__(self):
        dist = _frozen(self.dist)
        weight = _frozen(self.weight).ravel()
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
            raise ValueError(f"dist must be square, got shape {dist.shape}")
        if weight.shape[0] != dist.shape[0]:
            raise ValueError("weight length does not match dist")
        edges = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        edges = np.sort(edges, axis=1)
        edge_length = np.asarray(self.edge_length, dtype=float).ravel()
        if edge_length.size == 0 and edges.shape[0]:
            edge_length = dist[edges[:, 0], edges[:, 1]]
        if edge_length.shape[0] != edges.shape[0]:
            raise ValueError("edge_length must have one entry per edge")
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "edges", _frozen(edges, int))
        object.__setattr__(self, "edge_length", _frozen(edge_length))
        if self.conductance is not None:
            cond = np.asarray(self.conductance, dtype=float).ravel()
            if cond.shape[0] != edges.shape[0]:
                raise ValueError("conductance must have one entry per edge")
            object.__setattr__(self, "conductance", _frozen(cond))
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=float)
            object.__setattr__(self, "labels", _frozen(labels.reshape(len(weight), -1)))
        if self.mesh_h is None:
            if edges.shape[0]:
                h = float(edge_length.max())
            else:
                off = dist[~np.eye(len(weight), dtype=bool)]
                h = float(off[off > 0].min()) if off.size and np.any(off > 0) else 0.0
            object.__setattr__(self, "mesh_h", h)

    @property
    def n(self) -> int:
        return self.weight.shape[0]

    @property
    def has_mesh(self) -> bool:
        return self.edges.shape[0] > 0

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weight)

    @property
    def diameter(self) -> float:
        return float(self.dist.max()) if self.n else 0.0

    def edge_conductance(self) -> np.ndarray:
        if self.conductance is not None:
            return self.conductance
        return 1.0 / self.edge_length**2

    def ball(self, i: int, radius: float) -> np.ndarray:
        """Indices within ``radius`` of point ``i`` (closed ball)."""
        return np.flatnonzero(self.dist[i] <= radius * (1 + 1e-12))


def validate(space: FiniteMMS, tol: float = 1e-9) -> list[str]:
    """Return the list of violated invariants of ``space`` (empty when valid).

    The triangle inequality is checked up to ``tol * max(dist)``.
    """
    problems = []
    d, w, n = space.dist, space.weight, space.n
    scale = float(np.abs(d).max()) if d.size else 0.0
    atol = tol * max(scale, 1.0)
    if not np.all(np.isfinite(d)):
        problems.append("dist contains non-finite entries")
        return problems
    if np.any(np.abs(np.diag(d)) > 0):
        problems.append("nonzero diagonal: dist[i][i] != 0")
    asym = np.abs(d - d.T)
    if np.any(asym > atol):
        i, j = np.unravel_index(np.argmax(asym), asym.shape)
        problems.append(f"symmetry violated: dist[{i}][{j}]={d[i, j]!r} != dist[{j}][{i}]={d[j, i]!r}")
    off = ~np.eye(n, dtype=bool)
    if np.any(d[off] <= 0):
        problems.append("distinct points at nonpositive distance")
    # d[i,k] <= d[i,j] + d[j,k] for all triples, vectorised over j
    if n >= 3:
        worst, where = 0.0, None
        for j in range(n):
            excess = d - (d[:, j][:, None] + d[j, :][None, :])
            k = int(np.argmax(excess))
            if excess.flat[k] > worst:
                worst, where = float(excess.flat[k]), (k // n, j, k % n)
        if worst > tol * scale:
            i, j, k = where
            problems.append(
                f"triangle inequality violated: d({i},{k})={d[i, k]!r} > d({i},{j})+d({j},{k}) by {worst:.3g}"
            )
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        problems.append("weights must be positive and finite")
    if space.has_mesh:
        e = space.edges
        if e.min() < 0 or e.max() >= n:
            problems.append("edge index out of range")
        else:
            mismatch = np.abs(space.edge_length - d[e[:, 0], e[:, 1]])
            if np.any(mismatch > atol):
                problems.append("edge lengths disagree with dist")
            if np.any(e[:, 0] == e[:, 1]):
                problems.append("self-loop edge")
    return problems


def dirac(space: FiniteMMS, i: int) -> np.ndarray:
    """Unit point mass at index ``i``."""
    if not 0 <= i < space.n:
        raise IndexError(f"point index {i} out of range for n={space.n}")
    p = np.zeros(space.n)
    p[i] = 1.0
    return p


def check_prob(p, n: int | None = None, tol: float = 1e-12) -> np.ndarray:
    """Validate a probability vector and return it as a float array."""
    p = np.asarray(p, dtype=float).ravel()
    if n is not None and p.shape[0] != n:
        raise ValueError(f"probability vector has length {p.shape[0]}, expected {n}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("probability vector has negative or non-finite entries")
    if abs(math.fsum(p) - 1.0) > tol:
        raise ValueError(f"probability vector sums to {math.fsum(p)!r}, not 1")
    return p


# ---------------------------------------------------------------------------
# model manifolds


@dataclass(frozen=True)
class ModelManifold:
    """Constant-curvature model with an analytic potential.

    ``kind`` is ``"circle"`` (radius ``radius``), ``"sphere"`` (radius
    ``radius``) or ``"torus"`` (sides ``sides = (a, b)``).

    Potential terms, keyed by tuples:

    * circle: ``("cos", k)`` / ``("sin", k)`` give ``c * cos(k theta)``;
    * sphere: ``("poly", k)`` gives ``c * cos(theta)**k`` (theta = polar angle);
    * torus: ``("cos", p, q)`` / ``("sin", p, q)`` give
      ``c * cos(2 pi (p x / a + q y / b))``.

    ``("const",)`` adds a constant.  Points are angle ``theta`` (circle),
    ``(theta, phi)`` (sphere) or ``(x, y)`` (torus).  Tangent vectors are
    given by their components in the orthonormal coordinate frame.
    """

    kind: str
    radius: float = 1.0
    sides: tuple[float, float] = (1.0, 1.0)
    terms: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in ("circle", "sphere") and not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.kind == "torus" and not (self.sides[0] > 0 and self.sides[1] > 0):
            raise ValueError("torus sides must be positive")
        terms = self.terms.items() if isinstance(self.terms, dict) else self.terms
        norm = []
        for key, coef in terms:
            key = tuple(key)
            ok = {
                "circle": key[0] in ("cos", "sin") and len(key) == 2,
                "sphere": key[0] == "poly" and len(key) == 2 and key[1] >= 0,
                "torus": key[0] in ("cos", "sin") and len(key) == 3,
            }[self.kind]
            if not (ok or key == ("const",)):
                raise ValueError(f"potential term {key} is not valid for a {self.kind}")
            norm.append((key, float(coef)))
        object.__setattr__(self, "terms", tuple(sorted(norm)))
        object.__setattr__(self, "sides", tuple(float(s) for s in self.sides))

    # constructors -----------------------------------------------------

    @classmethod
    def circle(cls, radius=1.0, cos=None, sin=None, const=0.0):
        """Circle of ``radius`` with ``v = const + sum cos[k] cos(k t) + sin[k] sin(k t)``."""
        terms = [(("cos", int(k)), c) for k, c in (cos or {}).items()]
        terms += [(("sin", int(k)), c) for k, c in (sin or {}).items()]
        if const:
            terms.append((("const",), const))
        return cls("circle", radius=radius, terms=tuple(terms))

    @classmethod
    def sphere(cls, radius=1.0, poly=None, const=0.0):
        """Round 2-sphere with axially symmetric ``v = sum poly[k] cos(theta)**k``."""
        terms = [(("poly", int(k)), c) for k, c in (poly or {}).items()]
        if const:
            terms.append((("const",), const))
        return cls("sphere", radius=radius, terms=tuple(terms))

    @classmethod
    def torus(cls, a=1.0, b=1.0, cos=None, sin=None, const=0.0):
        terms = [(("cos", int(p), int(q)), c) for (p, q), c in (cos or {}).items()]
        terms += [(("sin", int(p), int(q)), c) for (p, q), c in (sin or {}).items()]
        if const:
            terms.append((("const",), const))
        return cls("torus", sides=(a, b), terms=tuple(terms))

    # geometry ---------------------------------------------------------

    @property
    def dim(self) -> int:
        return 1 if self.kind == "circle" else 2

    @property
    def injectivity_radius(self) -> float:
        if self.kind == "torus":
            return min(self.sides) / 2
        return math.pi * self.radius

    @property
    def sectional_curvature(self) -> float:
        return 1.0 / self.radius**2 if self.kind == "sphere" else 0.0

    @property
    def volume(self) -> float:
        if self.kind == "circle":
            return 2 * math.pi * self.radius
        if self.kind == "sphere":
            return 4 * math.pi * self.radius**2
        return self.sides[0] * self.sides[1]

    @property
    def is_unweighted(self) -> bool:
        return all(key == ("const",) for key, _ in self.terms)

    def distance(self, p, q) -> float:
        if self.kind == "circle":
            dt = abs(float(p) - float(q)) % (2 * math.pi)
            return self.radius * min(dt, 2 * math.pi - dt)
        if self.kind == "sphere":
            return self.radius * _angle(_sph_to_xyz(p), _sph_to_xyz(q))
        delta = _torus_delta(p, q, self.sides)
        return float(math.hypot(*delta))

    def ricci(self, p) -> np.ndarray:
        """Ricci tensor in the orthonormal frame at ``p``."""
        if self.kind == "sphere":
            return np.eye(2) / self.radius**2
        return np.zeros((self.dim, self.dim))

    # potential ----------------------------------------------------------

    def potential(self, p) -> float:
        return self._jet(p)[0]

    def grad_potential(self, p) -> np.ndarray:
        """Gradient of ``v`` in the orthonormal frame."""
        return self._jet(p)[1]

    def hess_potential(self, p) -> np.ndarray:
        """Hessian of ``v`` in the orthonormal frame."""
        return self._jet(p)[2]

    def _jet(self, p):
        if self.kind == "circle":
            t = float(p)
            v = d1 = d2 = 0.0
            for key, c in self.terms:
                if key[0] == "const":
                    v += c
                    continue
                k = key[1]
                cs, sn = math.cos(k * t), math.sin(k * t)
                if key[0] == "cos":
                    v, d1, d2 = v + c * cs, d1 - c * k * sn, d2 - c * k * k * cs
                else:
                    v, d1, d2 = v + c * sn, d1 + c * k * cs, d2 - c * k * k * sn
            r = self.radius
            return v, np.array([d1 / r]), np.array([[d2 / r**2]])
        if self.kind == "sphere":
            th = float(p[0])
            ct, st = math.cos(th), math.sin(th)
            v = vt = vtt = vphi = 0.0  # vphi = v_theta * cot(theta), regular at the poles
            for key, c in self.terms:
                if key[0] == "const":
                    v += c
                    continue
                k = key[1]
                v += c * ct**k
                if k >= 1:
                    vt -= c * k * ct ** (k - 1) * st
                    vtt -= c * k * ct**k
                    vphi -= c * k * ct**k
                if k >= 2:
                    vtt += c * k * (k - 1) * ct ** (k - 2) * st * st
            r = self.radius
            return v, np.array([vt / r, 0.0]), np.array([[vtt, 0.0], [0.0, vphi]]) / r**2
        a, b = self.sides
        x, y = float(p[0]), float(p[1])
        v = 0.0
        g = np.zeros(2)
        hss = np.zeros((2, 2))
        for key, c in self.terms:
            if key[0] == "const":
                v += c
                continue
            kvec = np.array([2 * math.pi * key[1] / a, 2 * math.pi * key[2] / b])
            ph = kvec[0] * x + kvec[1] * y
            if key[0] == "cos":
                v += c * math.cos(ph)
                g -= c * math.sin(ph) * kvec
                hss -= c * math.cos(ph) * np.outer(kvec, kvec)
            else:
                v += c * math.sin(ph)
                g += c * math.cos(ph) * kvec
                hss -= c * math.sin(ph) * np.outer(kvec, kvec)
        return v, g, hss


def _angle(u, w) -> float:
    """Angle between unit vectors, accurate near 0 and pi."""
    return math.atan2(float(np.linalg.norm(np.cross(u, w))), float(u @ w))


def _sph_to_xyz(p) -> np.ndarray:
    th, ph = float(p[0]), float(p[1])
    return np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])


def _xyz_to_sph(u) -> tuple[float, float]:
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u)
    th = math.acos(max(-1.0, min(1.0, u[2])))
    ph = math.atan2(u[1], u[0]) % (2 * math.pi)
    return th, ph


def _sph_frame(p) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors (e_theta, e_phi) at ``p``; at a pole phi is taken from ``p``."""
    th, ph = float(p[0]), float(p[1])
    e_th = np.array([math.cos(th) * math.cos(ph), math.cos(th) * math.sin(ph), -math.sin(th)])
    e_ph = np.array([-math.sin(ph), math.cos(ph), 0.0])
    return e_th, e_ph


def _torus_delta(p, q, sides) -> np.ndarray:
    """Shortest displacement from ``p`` to ``q`` on the flat torus (3x3 translates)."""
    a, b = sides
    base = np.array([float(q[0]) - float(p[0]), float(q[1]) - float(p[1])])
    base = base - np.round(base / np.array([a, b])) * np.array([a, b])
    best = None
    for i in (-1, 0, 1):
        for j in (-1, 0, 1):
            cand = base + np.array([i * a, j * b])
            if best is None or cand @ cand < best @ best:
                best = cand
    return best


# ---------------------------------------------------------------------------
# geodesics


@dataclass(frozen=True)
class GeodesicPath:
    """Unit-speed minimizing geodesic sampled at equal arclength steps."""

    model: ModelManifold
    length: float
    s: np.ndarray
    points: np.ndarray
    tangents: np.ndarray

    def __len__(self):
        return len(self.s)


def geodesic(model: ModelManifold, x, y, samples: int = 101) -> GeodesicPath:
    """Sample the unique minimizing geodesic from ``x`` to ``y``.

    Raises :class:`GeometryError` when ``x == y`` or when the pair lies on
    the cut locus (no unique minimizer).
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    T = model.distance(x, y)
    if T <= 1e-14 * max(model.injectivity_radius, 1.0):
        raise GeometryError("geodesic endpoints coincide")
    s = np.linspace(0.0, T, samples)
    if model.kind == "circle":
        t0 = float(x)
        dt = (float(y) - t0 + math.pi) % (2 * math.pi) - math.pi
        if abs(abs(dt) - math.pi) < 1e-12:
            raise GeometryError("no unique minimizing geodesic (antipodal points)")
        sign = 1.0 if dt > 0 else -1.0
        pts = t0 + sign * s / model.radius
        tang = np.full((samples, 1), sign)
        return GeodesicPath(model, T, s, pts[:, None], tang)
    if model.kind == "sphere":
        u, w = _sph_to_xyz(x), _sph_to_xyz(y)
        alpha = T / model.radius
        if math.pi - alpha < 1e-9:
            raise GeometryError("no unique minimizing geodesic (antipodal points)")
        perp = w - math.cos(alpha) * u
        perp /= np.linalg.norm(perp)
        pts, tang = [], []
        for sk in s / model.radius:
            pos = math.cos(sk) * u + math.sin(sk) * perp
            vel = -math.sin(sk) * u + math.cos(sk) * perp
            th, ph = _xyz_to_sph(pos)
            if math.sin(th) < 1e-12:
                ph = 0.0
            e_th, e_ph = _sph_frame((th, ph))
            pts.append((th, ph))
            tang.append((vel @ e_th, vel @ e_ph))
        return GeodesicPath(model, T, s, np.array(pts), np.array(tang))
    a, b = model.sides
    delta = _torus_delta(x, y, model.sides)
    for comp, side in zip(delta, (a, b)):
        if abs(abs(comp) - side / 2) < 1e-12 * side:
            raise GeometryError("no unique minimizing geodesic (half-period displacement)")
    # a competing translate at equal length also means a cut-locus pair
    base = np.array([float(x[0]), float(x[1])])
    u = delta / T
    pts = base[None, :] + s[:, None] * u[None, :]
    pts = np.mod(pts, np.array([a, b]))
    return GeodesicPath(model, T, s, pts, np.tile(u, (samples, 1)))


def geodesic_point(model: ModelManifold, x, y, t: float):
    """Point at fraction ``t`` of the minimizing geodesic from ``x`` to ``y``."""
    if model.kind == "circle":
        dt = (float(y) - float(x) + math.pi) % (2 * math.pi) - math.pi
        if abs(abs(dt) - math.pi) < 1e-12:
            raise GeometryError("no unique minimizing geodesic (antipodal points)")
        return (float(x) + t * dt) % (2 * math.pi)
    if model.kind == "sphere":
        u, w = _sph_to_xyz(x), _sph_to_xyz(y)
        alpha = _angle(u, w)
        if alpha < 1e-15:
            return (float(x[0]), float(x[1]))
        if math.pi - alpha < 1e-9:
            raise GeometryError("no unique minimizing geodesic (antipodal points)")
        pos = (math.sin((1 - t) * alpha) * u + math.sin(t * alpha) * w) / math.sin(alpha)
        return _xyz_to_sph(pos)
    delta = _torus_delta(x, y, model.sides)
    for comp, side in zip(delta, model.sides):
        if abs(abs(comp) - side / 2) < 1e-12 * side:
            raise GeometryError("no unique minimizing geodesic (half-period displacement)")
    p = np.array([float(x[0]), float(x[1])]) + t * delta
    return tuple(np.mod(p, np.array(model.sides)).tolist())


def nearest_label(model: ModelManifold, labels: np.ndarray, p) -> int:
    """Index of the sample point (given by ``labels``) closest to ``p``."""
    if model.kind == "circle":
        dt = np.abs(labels[:, 0] - float(p)) % (2 * math.pi)
        return int(np.argmin(np.minimum(dt, 2 * math.pi - dt)))
    if model.kind == "sphere":
        th, ph = labels[:, 0], labels[:, 1]
        xyz = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=1)
        return int(np.argmax(xyz @ _sph_to_xyz(p)))
    a, b = model.sides
    dx = np.abs(labels[:, 0] - p[0]) % a
    dy = np.abs(labels[:, 1] - p[1]) % b
    return int(np.argmin(np.minimum(dx, a - dx) ** 2 + np.minimum(dy, b - dy) ** 2))


# ---------------------------------------------------------------------------
# discretization


def discretize(model: ModelManifold, resolution: int | tuple[int, int]) -> FiniteMMS:
    """Sample ``model`` on a regular parameter grid.

    * circle: ``resolution`` equally spaced angles;
    * sphere: ``resolution`` polar rings at cell midpoints times
      ``2 * resolution`` meridians (a ``24`` gives the 24x48 grid);
    * torus: ``resolution x resolution`` (or a ``(nx, ny)`` tuple) grid.

    Distances are exact model geodesic distances.  Each weight is
    ``exp(-v)`` at the sample point times the exact cell volume.
    """
    kind = model.kind
    if kind == "torus":
        nx, ny = (resolution, resolution) if np.isscalar(resolution) else tuple(resolution)
        nx, ny = int(nx), int(ny)
        a, b = model.sides
        if nx < 2 or ny < 2 or a / nx > model.injectivity_radius + 1e-12 or b / ny > model.injectivity_radius + 1e-12:
            raise GeometryError(f"torus resolution {(nx, ny)} does not resolve the injectivity radius")
        return _discretize_torus(model, nx, ny)
    N = int(resolution)
    if N < 3:
        raise GeometryError(f"resolution {N} does not resolve the injectivity radius of the {kind}")
    if kind == "circle":
        return _discretize_circle(model, N)
    return _discretize_sphere(model, N)


def _discretize_circle(model, N):
    r = model.radius
    theta = 2 * math.pi * np.arange(N) / N
    dtheta = np.abs(theta[:, None] - theta[None, :])
    dist = r * np.minimum(dtheta, 2 * math.pi - dtheta)
    np.fill_diagonal(dist, 0.0)
    h = 2 * math.pi * r / N
    v = np.array([model.potential(t) for t in theta])
    weight = np.exp(-v) * h
    i = np.arange(N)
    edges = np.stack([i, (i + 1) % N], axis=1)
    edges = np.unique(np.sort(edges, axis=1), axis=0)
    return FiniteMMS(
        dist=dist,
        weight=weight,
        edges=edges,
        edge_length=dist[edges[:, 0], edges[:, 1]],
        labels=theta[:, None],
        mesh_h=h,
    )


def _discretize_sphere(model, R):
    r = model.radius
    P = 2 * R
    dth, dph = math.pi / R, 2 * math.pi / P
    th = (np.arange(R) + 0.5) * dth
    ph = np.arange(P) * dph
    T, PH = np.meshgrid(th, ph, indexing="ij")
    T, PH = T.ravel(), PH.ravel()
    xyz = np.stack([np.sin(T) * np.cos(PH), np.sin(T) * np.sin(PH), np.cos(T)], axis=1)
    dist = r * np.arccos(np.clip(xyz @ xyz.T, -1.0, 1.0))
    dist = 0.5 * (dist + dist.T)
    np.fill_diagonal(dist, 0.0)
    area = r * r * (np.cos(T - dth / 2) - np.cos(T + dth / 2)) * dph
    v = np.array([model.potential((t, p)) for t, p in zip(T, PH)])
    weight = np.exp(-v) * area

    def idx(k, l):
        return k * P + (l % P)

    edges, cond = [], []
    for k in range(R):
        for l in range(P):
            i, j = idx(k, l), idx(k, l + 1)
            # along a ring: face = meridian segment, spacing = parallel arc
            face, gap = r * dth, r * math.sin(th[k]) * dph
            edges.append((i, j))
            cond.append(face / (gap * math.sqrt(area[i] * area[j])))
            if k + 1 < R:
                j = idx(k + 1, l)
                face, gap = r * math.sin((k + 1) * dth) * dph, r * dth
                edges.append((i, j))
                cond.append(face / (gap * math.sqrt(area[i] * area[j])))
    edges = np.array(edges)
    order = np.lexsort((np.sort(edges, 1)[:, 1], np.sort(edges, 1)[:, 0]))
    edges = np.sort(edges, axis=1)[order]
    cond = np.array(cond)[order]
    return FiniteMMS(
        dist=dist,
        weight=weight,
        edges=edges,
        edge_length=dist[edges[:, 0], edges[:, 1]],
        conductance=cond,
        labels=np.stack([T, PH], axis=1),
        mesh_h=r * dth,
    )


def _discretize_torus(model, nx, ny):
    a, b = model.sides
    xs = a * np.arange(nx) / nx
    ys = b * np.arange(ny) / ny
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    X, Y = X.ravel(), Y.ravel()
    dx = np.abs(X[:, None] - X[None, :])
    dy = np.abs(Y[:, None] - Y[None, :])
    best = np.full(dx.shape, np.inf)
    for i in (-1, 0, 1):
        for j in (-1, 0, 1):
            best = np.minimum(best, np.hypot(dx + i * a, dy + j * b))
    dist = best
    np.fill_diagonal(dist, 0.0)
    hx, hy = a / nx, b / ny
    v = np.array([model.potential((x, y)) for x, y in zip(X, Y)])
    weight = np.exp(-v) * hx * hy

    def idx(i, j):
        return (i % nx) * ny + (j % ny)

    pairs = {}
    for i in range(nx):
        for j in range(ny):
            for (p, q), face, gap in (((idx(i, j), idx(i + 1, j)), hy, hx), ((idx(i, j), idx(i, j + 1)), hx, hy)):
                if p == q:
                    continue
                key = (min(p, q), max(p, q))
                # with two cells along an axis both neighbours coincide: faces add up
                pairs[key] = pairs.get(key, 0.0) + face / (gap * hx * hy)
    keys = sorted(pairs)
    edges = np.array(keys)
    return FiniteMMS(
        dist=dist,
        weight=weight,
        edges=edges,
        edge_length=dist[edges[:, 0], edges[:, 1]],
        conductance=np.array([pairs[k] for k in keys]),
        labels=np.stack([X, Y], axis=1),
        mesh_h=max(hx, hy),
    )


def label_point(model: ModelManifold, label: Sequence[float]):
    """Convert a stored label row back into a model point."""
    if model.kind == "circle":
        return float(label[0])
    return (float(label[0]), float(label[1]))


# ---------------------------------------------------------------------------
# file formats


def write_space(space: FiniteMMS, path, edges_path=None) -> None:
    """Write the CSV distance/weight format (and optional ``i,j,length`` edge list)."""
    path = Path(path)
    rows = [f"# mms n={space.n}"]
    rows += [",".join(repr(float(x)) for x in row) for row in space.dist]
    rows.append(",".join(repr(float(x)) for x in space.weight))
    path.write_text("\n".join(rows) + "\n")
    if edges_path is not None:
        cond = space.edge_conductance()
        lines = [
            f"{i},{j},{length!r},{c!r}"
            for (i, j), length, c in zip(space.edges.tolist(), space.edge_length.tolist(), cond.tolist())
        ]
        Path(edges_path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_space(path, edges_path=None) -> FiniteMMS:
    """Read a space written by :func:`write_space`.

    Raises ``ValueError`` with the offending line number on malformed input.
    """
    path = Path(path)
    lines = [(k + 1, ln.strip()) for k, ln in enumerate(path.read_text().splitlines())]
    lines = [(k, ln) for k, ln in lines if ln]
    if not lines or not lines[0][1].startswith("#"):
        raise ValueError(f"{path}:1: expected header '# mms n=<n>'")
    header = lines[0][1].lstrip("#").split()
    n = None
    for tok in header:
        if tok.startswith("n="):
            try:
                n = int(tok[2:])
            except ValueError:
                raise ValueError(f"{path}:{lines[0][0]}: bad point count {tok!r}") from None
    if n is None or header[0] != "mms":
        raise ValueError(f"{path}:{lines[0][0]}: expected header '# mms n=<n>'")
    body = lines[1:]
    if len(body) != n + 1:
        raise ValueError(f"{path}: expected {n} distance rows and one weight row, found {len(body)} rows")
    rows = []
    for lineno, ln in body:
        try:
            row = [float(x) for x in ln.split(",")]
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric entry") from None
        if len(row) != n:
            raise ValueError(f"{path}:{lineno}: expected {n} entries, found {len(row)}")
        rows.append(row)
    dist = np.array(rows[:n])
    weight = np.array(rows[n])
    edges, lengths, cond = [], [], []
    if edges_path is not None:
        for lineno, ln in enumerate(Path(edges_path).read_text().splitlines(), start=1):
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            parts = ln.split(",")
            if len(parts) not in (3, 4):
                raise ValueError(f"{edges_path}:{lineno}: expected 'i,j,length[,conductance]'")
            try:
                edges.append((int(parts[0]), int(parts[1])))
                lengths.append(float(parts[2]))
                if len(parts) == 4:
                    cond.append(float(parts[3]))
            except ValueError:
                raise ValueError(f"{edges_path}:{lineno}: malformed edge entry") from None
        if cond and len(cond) != len(edges):
            raise ValueError(f"{edges_path}: conductance column must be given on every line or none")
    return FiniteMMS(
        dist=dist,
        weight=weight,
        edges=np.array(edges, dtype=int).reshape(-1, 2),
        edge_length=np.array(lengths),
        conductance=np.array(cond) if cond else None,
    )


class ConfigDict(dict):
    """Parsed ``key=value`` config remembering where each key was set."""

    def __init__(self, source: str = "<config>"):
        super().__init__()
        self.source = source
        self.lines: dict[str, int] = {}

    def where(self, key: str) -> str:
        line = self.lines.get(key)
        return f"{self.source}:{line}" if line else self.source


def parse_config(text: str, source: str = "<config>") -> ConfigDict:
    """Parse ``key=value`` lines; ``#`` starts a comment, quotes are stripped."""
    out = ConfigDict(source)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        ln = raw.split("#", 1)[0].strip()
        if not ln or (ln.startswith("[") and ln.endswith("]")):
            continue
        if "=" not in ln:
            raise ValueError(f"{source}:{lineno}: expected 'key=value', got {raw.strip()!r}")
        key, value = (s.strip() for s in ln.split("=", 1))
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        if not key:
            raise ValueError(f"{source}:{lineno}: empty key")
        out[key] = value
        out.lines[key] = lineno
    return out


def _where(cfg, key, source):
    return cfg.where(key) if isinstance(cfg, ConfigDict) else source


def model_from_config(cfg: dict[str, str], source: str = "<config>") -> tuple[ModelManifold, int | tuple[int, int] | None]:
    """Build a model (and the optional ``resolution``) from parsed config keys."""

    def num(key, default=None):
        if key not in cfg:
            return default
        try:
            val = float(cfg[key])
        except ValueError:
            raise ValueError(f"{_where(cfg, key, source)}: {key} must be a number, got {cfg[key]!r}") from None
        if not (math.isfinite(val) and val > 0):
            raise ValueError(f"{_where(cfg, key, source)}: {key} must be a positive number, got {cfg[key]!r}")
        return val

    kind = cfg.get("kind")
    if kind not in KINDS:
        raise ValueError(f"{_where(cfg, 'kind', source)}: kind must be one of {KINDS}, got {kind!r}")
    terms = []
    for key, value in cfg.items():
        if not key.startswith("v."):
            continue
        parts = key.split(".")[1:]
        try:
            coef = float(value)
            if parts == ["const"]:
                terms.append((("const",), coef))
            else:
                terms.append(((parts[0], *(int(p) for p in parts[1:])), coef))
        except (ValueError, IndexError):
            raise ValueError(f"{_where(cfg, key, source)}: malformed potential term {key}={value}") from None
    res = cfg.get("resolution")
    resolution = None
    if res is not None:
        try:
            parts = [int(p) for p in res.lower().split("x")]
        except ValueError:
            parts = []
        if len(parts) not in (1, 2):
            raise ValueError(
                f"{_where(cfg, 'resolution', source)}: resolution must be an integer or NxM, got {res!r}"
            )
        resolution = parts[0] if len(parts) == 1 else tuple(parts)
    try:
        model = ModelManifold(
            kind,
            radius=num("radius", 1.0),
            sides=(num("a", 1.0), num("b", 1.0)),
            terms=tuple(terms),
        )
    except ValueError as exc:
        raise ValueError(f"{source}: {exc}") from None
    return model, resolution


def read_model(path) -> tuple[ModelManifold, int | tuple[int, int] | None]:
    path = Path(path)
    return model_from_config(parse_config(path.read_text(), str(path)), str(path))
