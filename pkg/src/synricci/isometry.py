"""Measure-preserving isometry groups of finite metric measure spaces.

Isometries are permutations that preserve distances and point masses up
to a tolerance.  They are enumerated by backtracking over partial
assignments; candidates for each point are restricted by its sorted
distance profile and mass.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .mms import FiniteMMS

log = logging.getLogger(__name__)


class BudgetExceeded(RuntimeError):
    """Backtracking hit its node budget; ``partial`` holds what was found."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class IsometryPermutation:
    perm: tuple[int, ...]
    tol: float

    def __call__(self, i: int) -> int:
        return self.perm[i]

    @property
    def is_identity(self) -> bool:
        return all(i == p for i, p in enumerate(self.perm))

    def compose(self, other: "IsometryPermutation") -> "IsometryPermutation":
        """``self o other`` (apply ``other`` first)."""
        return IsometryPermutation(tuple(self.perm[j] for j in other.perm), self.tol)

    def inverse(self) -> "IsometryPermutation":
        inv = [0] * len(self.perm)
        for i, p in enumerate(self.perm):
            inv[p] = i
        return IsometryPermutation(tuple(inv), self.tol)


@dataclass(frozen=True)
class IsometryGroup:
    elements: tuple[IsometryPermutation, ...]
    generators: tuple[IsometryPermutation, ...]
    tol: float
    nodes: int = 0

    @property
    def order(self) -> int:
        return len(self.elements)

    def perms(self) -> set[tuple[int, ...]]:
        return {g.perm for g in self.elements}

    def to_dict(self, rigidity_lambda: float | None = None, max_elements: int = 10_000) -> dict:
        out = {
            "order": self.order,
            "tol": self.tol,
            "generators": [list(g.perm) for g in self.generators],
        }
        if self.order <= max_elements:
            out["elements"] = [list(g.perm) for g in self.elements]
        if rigidity_lambda is not None:
            out["rigidity_lambda"] = rigidity_lambda if math.isfinite(rigidity_lambda) else "inf"
        return out


def default_tol(space: FiniteMMS) -> float:
    return 1e-9 * space.diameter


def is_isometry(space: FiniteMMS, perm, tol: float) -> bool:
    """Check both distance and mass preservation of ``perm``."""
    p = np.asarray(perm)
    if sorted(p.tolist()) != list(range(space.n)):
        return False
    if np.any(np.abs(space.dist[np.ix_(p, p)] - space.dist) > tol):
        return False
    wmax = float(space.weight.max())
    return bool(np.all(np.abs(space.weight[p] - space.weight) <= tol * wmax))


def _check_tol(space: FiniteMMS, tol: float):
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    vals = np.unique(space.dist)
    gaps = np.diff(vals)
    ambiguous = gaps[(gaps > tol) & (gaps <= 2 * tol)]
    if ambiguous.size:
        raise ValueError(
            f"tol={tol:.3g} is not below half the distance gap {ambiguous.min():.3g}; "
            "distinct distances cannot be told apart"
        )


def enumerate_isometries(space: FiniteMMS, tol: float | None = None, node_budget: int = 2_000_000) -> IsometryGroup:
    """All measure-preserving isometries of ``space`` within ``tol``.

    ``tol`` defaults to ``1e-9 * diameter``.  Raises :class:`BudgetExceeded`
    when more than ``node_budget`` search nodes are visited.
    """
    tol = default_tol(space) if tol is None else float(tol)
    _check_tol(space, tol)
    n = space.n
    D, w = space.dist, space.weight
    wtol = tol * float(w.max()) if n else 0.0
    if tol != 0:
        log.info("isometry tolerance tol=%.3g (mass tolerance %.3g)", tol, wtol)
    profiles = np.sort(D, axis=1)
    cand = []
    for i in range(n):
        ok = (np.abs(w - w[i]) <= wtol) & np.all(np.abs(profiles - profiles[i]) <= tol, axis=1)
        cand.append(np.flatnonzero(ok))
    # most constrained points first; afterwards prefer points close to assigned ones
    order = []
    remaining = set(range(n))
    while remaining:
        if not order:
            nxt = min(remaining, key=lambda i: (len(cand[i]), i))
        else:
            nxt = min(remaining, key=lambda i: (len(cand[i]), float(D[i, order].min()), i))
        order.append(nxt)
        remaining.remove(nxt)

    found: list[tuple[int, ...]] = []
    image = [-1] * n
    used = np.zeros(n, dtype=bool)
    nodes = 0

    def extend(depth):
        nonlocal nodes
        if depth == n:
            found.append(tuple(image))
            return
        i = order[depth]
        done = order[:depth]
        imgs = [image[k] for k in done]
        for c in cand[i]:
            if used[c]:
                continue
            nodes += 1
            if nodes > node_budget:
                partial = [IsometryPermutation(p, tol) for p in found]
                raise BudgetExceeded(
                    f"isometry search exceeded {node_budget} nodes after {len(found)} elements", partial
                )
            if done and np.any(np.abs(D[c, imgs] - D[i, done]) > tol):
                continue
            image[i] = int(c)
            used[c] = True
            extend(depth + 1)
            used[c] = False
            image[i] = -1

    if n:
        extend(0)
    else:
        found.append(())
    found.sort()
    elements = tuple(IsometryPermutation(p, tol) for p in found)
    group = IsometryGroup(elements=elements, generators=_generators(elements, tol), tol=tol, nodes=nodes)
    problems = check_group(group)
    if problems:
        raise RuntimeError("enumerated isometries do not form a group: " + "; ".join(problems))
    return group


def brute_force_isometries(space: FiniteMMS, tol: float | None = None) -> set[tuple[int, ...]]:
    """Every permutation of the points that passes :func:`is_isometry` (small ``n`` only)."""
    tol = default_tol(space) if tol is None else float(tol)
    return {p for p in permutations(range(space.n)) if is_isometry(space, p, tol)}


def _closure(gens, n):
    ident = tuple(range(n))
    seen = {ident}
    frontier = [ident]
    while frontier:
        nxt = []
        for g in frontier:
            for s in gens:
                h = tuple(g[j] for j in s)
                if h not in seen:
                    seen.add(h)
                    nxt.append(h)
        frontier = nxt
    return seen


def _generators(elements, tol):
    if not elements:
        return ()
    n = len(elements[0].perm)
    gens, span = [], {tuple(range(n))}
    for g in elements:
        if g.perm not in span:
            gens.append(g.perm)
            span = _closure(gens, n)
    return tuple(IsometryPermutation(g, tol) for g in gens)


def check_group(group: IsometryGroup, full_limit: int = 2000) -> list[str]:
    """Verify identity, inverses and closure of ``group``."""
    problems = []
    perms = group.perms()
    if not group.elements:
        return ["empty group"]
    n = len(group.elements[0].perm)
    if tuple(range(n)) not in perms:
        problems.append("identity missing")
    for g in group.elements:
        if g.inverse().perm not in perms:
            problems.append(f"inverse of {g.perm} missing")
            break
    others = group.elements if group.order <= full_limit else group.generators
    for g in group.elements:
        if any(g.compose(h).perm not in perms for h in others):
            problems.append(f"not closed under composition at {g.perm}")
            break
    return problems


@dataclass(frozen=True)
class DisplacementProfile:
    d_phi: np.ndarray
    delta_phi: float


def displacement(space: FiniteMMS, phi: IsometryPermutation) -> DisplacementProfile:
    """Pointwise displacement ``d(x, phi(x))`` and its maximum."""
    idx = np.arange(space.n)
    d_phi = space.dist[idx, np.asarray(phi.perm, dtype=int)].copy()
    return DisplacementProfile(d_phi=d_phi, delta_phi=float(d_phi.max()) if d_phi.size else 0.0)


def covering_number(space: FiniteMMS, a: float) -> tuple[int, list[int]]:
    """Greedy farthest-point ``a``-cover: returns ``(N, centers)``.

    Starts at point 0 and keeps adding the point farthest from the current
    centers (lowest index on ties) until every point is within ``a``.
    """
    if not a > 0:
        raise ValueError("cover radius must be positive")
    centers = [0]
    gap = space.dist[0].copy()
    while gap.max() > a:
        nxt = int(np.argmax(gap))
        centers.append(nxt)
        gap = np.minimum(gap, space.dist[nxt])
    return len(centers), centers


def minimal_cover_size(space: FiniteMMS, a: float) -> int:
    """Exact minimal number of closed ``a``-balls centred at points (exhaustive)."""
    from itertools import combinations

    close = space.dist <= a
    for k in range(1, space.n + 1):
        for combo in combinations(range(space.n), k):
            if np.all(close[list(combo)].any(axis=0)):
                return k
    return space.n


def pigeonhole_bound(N: int) -> int:
    """``N!`` as an exact integer."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    return math.factorial(N)


@dataclass(frozen=True)
class InjectionCertificate:
    images: dict = field(repr=False)
    injective: bool
    collisions: tuple[tuple[tuple[int, ...], tuple[int, ...], float], ...]
    all_permutations: bool

    def to_dict(self) -> dict:
        return {
            "injective": self.injective,
            "all_images_are_permutations": self.all_permutations,
            "collisions": [
                {"phi": list(p), "psi": list(q), "max_discrepancy": m} for p, q, m in self.collisions
            ],
        }


def injection_map(
    space: FiniteMMS,
    group: IsometryGroup,
    centers,
    a: float,
    rigidity_scale: float | None = None,
    max_collisions: int = 50,
) -> InjectionCertificate:
    """Map each isometry to ``i -> j(i)``, the first center whose ``a``-ball holds ``phi(x_i)``.

    Injectivity is certified by comparing images pairwise; each collision is
    reported with ``max_x d(phi(x), psi(x))``.
    """
    centers = [int(c) for c in centers]
    if not centers:
        raise ValueError("need at least one center")
    covered = (space.dist[centers] <= a).any(axis=0)
    if not covered.all():
        raise ValueError(f"centers do not form an {a:.4g}-cover ({int((~covered).sum())} points uncovered)")
    if rigidity_scale is not None and 4 * a > rigidity_scale:
        raise ValueError(f"4a = {4 * a:.4g} exceeds the rigidity scale {rigidity_scale:.4g}")
    near = space.dist[:, centers] <= a  # near[p, j]: point p within a of center j
    images = {}
    buckets: dict[tuple[int, ...], list[IsometryPermutation]] = {}
    for g in group.elements:
        img = tuple(int(np.argmax(near[g.perm[c]])) for c in centers)
        images[g.perm] = img
        buckets.setdefault(img, []).append(g)
    collisions = []
    for members in buckets.values():
        for k, g in enumerate(members):
            for h in members[k + 1 :]:
                if len(collisions) < max_collisions:
                    gap = float(space.dist[np.asarray(g.perm), np.asarray(h.perm)].max())
                    collisions.append((g.perm, h.perm, gap))
    injective = len(buckets) == group.order
    all_perm = all(len(set(img)) == len(img) for img in images)
    return InjectionCertificate(
        images=images, injective=injective, collisions=tuple(collisions), all_permutations=all_perm
    )


@dataclass(frozen=True)
class RigidityScan:
    lam: float
    trivial: bool
    witness: tuple[int, ...] | None

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam if math.isfinite(self.lam) else "inf",
            "trivial_group": self.trivial,
            "witness": list(self.witness) if self.witness else None,
        }


def rigidity_scan(space: FiniteMMS, op=None, group: IsometryGroup | None = None) -> RigidityScan:
    """Largest ``lam`` such that no non-identity element moves every point by ``<= lam``.

    ``op`` is accepted for interface symmetry with the curvature tools and
    is not used: on a finite space the scale is read off the group directly.
    """
    if group is None:
        group = enumerate_isometries(space)
    best, witness = math.inf, None
    for g in group.elements:
        if g.is_identity:
            continue
        delta = displacement(space, g).delta_phi
        if delta < best:
            best, witness = delta, g.perm
    if witness is None:
        return RigidityScan(lam=math.inf, trivial=True, witness=None)
    return RigidityScan(lam=float(np.nextafter(best, -np.inf)), trivial=False, witness=witness)


def cycle_space(n: int, edge: float = 1.0, weight=None) -> FiniteMMS:
    """``n`` points on a cycle with the path metric (``edge`` per step)."""
    i = np.arange(n)
    k = np.abs(i[:, None] - i[None, :])
    dist = edge * np.minimum(k, n - k)
    w = np.ones(n) if weight is None else np.asarray(weight, dtype=float)
    edges = np.stack([i, (i + 1) % n], axis=1) if n > 2 else np.zeros((0, 2), dtype=int)
    if n > 2:
        edges = np.unique(np.sort(edges, axis=1), axis=0)
    return FiniteMMS(dist=dist, weight=w, edges=edges)
