"""Explicit constants of the quantitative isometry-group bounds.

Every threshold is a minimum over several branches.  Reports keep each
branch value so the binding constraint can be audited.
"""

from __future__ import annotations

import math
from dataclasses import MISSING, asdict, dataclass, field, fields

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn

# ratios this close to an integer are treated as that integer before ceil
SNAP_RTOL = 1e-9
# largest L whose factorial is formed exactly
MAX_FACTORIAL = 200_000


@dataclass(frozen=True)
class GeometryBudget:
    """Geometric budget of a weighted manifold.

    Parameters
    ----------
    n : int
        Dimension, at least 2.
    N : float
        Bakry-Emery parameter, at least ``n``.
    i0 : float
        Lower bound on the injectivity radius.
    Lambda1 : float
        Curvature bound.
    Lambda2 : float
        Bound on the gradient of the weighted Ricci tensor.
    Lambda3 : float
        Lower Ricci budget used by the packing count.
    V, D, E : float
        Measure, diameter and weight-supremum bounds.
    w, A, B : float
        Smallness offset and Sobolev constants.
    """

    n: int
    N: float
    i0: float
    Lambda1: float
    Lambda2: float
    Lambda3: float
    V: float
    D: float
    E: float = 1.0
    w: float = 1.0
    A: float = 1.0
    B: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n}")
        for f in fields(self):
            val = getattr(self, f.name)
            if not (isinstance(val, (int, float)) and val > 0):
                raise ValueError(f"{f.name} must be a positive number, got {val!r}")
        if self.N < self.n:
            raise ValueError(f"N={self.N} must be at least n={self.n}")

    @classmethod
    def from_mapping(cls, cfg, source: str = "<budget>") -> "GeometryBudget":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(cfg) - set(known))
        if unknown:
            raise ValueError(f"{source}: unknown budget keys {unknown}")
        missing = [k for k, f in known.items() if f.default is MISSING and k not in cfg]
        if missing:
            raise ValueError(f"{source}: missing budget keys {missing}")
        vals = {}
        for k, v in cfg.items():
            try:
                vals[k] = int(v) if k == "n" else float(v)
            except (TypeError, ValueError):
                raise ValueError(f"{source}: {k}={v!r} is not a number") from None
        return cls(**vals)


@dataclass(frozen=True)
class ConstantsReport:
    C1: float
    C2: float
    delta0: float
    delta: float
    L: int
    L1: int
    branches: dict = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    @property
    def binding(self) -> str:
        return min(self.branches["delta"], key=lambda k: self.branches["delta"][k])

    def to_dict(self) -> dict:
        out = asdict(self)
        out["L1_digits"] = len(str(self.L1))
        out["binding"] = self.binding
        out["notes"] = list(self.notes)
        return out


def lemma41_constants(n: int, Lambda: float, i0: float) -> tuple[float, float, float]:
    """``(C1, C2, delta0)`` with ``C1 = 4(n-1)Lambda``, ``C2 = sqrt((n-1)Lambda/2)``.

    ``delta0 = min(i0/2, pi/(2 C2))``.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if not (Lambda > 0 and i0 > 0):
        raise ValueError("Lambda and i0 must be positive")
    C1 = 4 * (n - 1) * Lambda
    C2 = math.sqrt((n - 1) * Lambda / 2)
    return C1, C2, min(i0 / 2, math.pi / (2 * C2))


def _delta_branches(b: GeometryBudget) -> dict:
    C1, C2, delta0 = lemma41_constants(b.n, b.Lambda1, b.i0)
    scale = b.Lambda2 * b.V ** (2 / b.n)
    return {
        "delta0": delta0,
        "arctan": math.atan(math.sqrt(b.w / (2 * C1))) / C2,
        "sobolev_A": 1 / (4 * b.A * scale),
        "sobolev_B": b.w / (2 * b.B * scale),
    }


def lemma42_delta(budget: GeometryBudget) -> float:
    """Displacement threshold below which an isometry must be the identity."""
    return min(_delta_branches(budget).values())


@dataclass(frozen=True)
class SmallnessResult:
    norm: float
    threshold: float
    factor: int

    @property
    def passed(self) -> bool:
        return self.norm < self.threshold

    @property
    def margin(self) -> float:
        return self.threshold - self.norm

    def to_dict(self) -> dict:
        return {"norm": self.norm, "threshold": self.threshold, "factor": self.factor,
                "passed": self.passed, "margin": self.margin}


def positive_part_norm(theta_field, weight, w: float, n: int) -> float:
    """Discrete ``L^{n/2}(m)`` norm of ``max(theta + w, 0)``."""
    theta = np.asarray(theta_field, dtype=float)
    weight = np.asarray(weight, dtype=float)
    if theta.shape != weight.shape:
        raise ValueError(f"theta field has {theta.size} entries for {weight.size} points")
    p = n / 2
    pos = np.maximum(theta + w, 0.0)
    return math.fsum((weight * pos**p).tolist()) ** (1 / p)


def smallness_check(theta_field, space, w: float, A: float, B: float, n: int, factor: int = 4) -> SmallnessResult:
    """Compare the norm of ``(theta + w)_+`` with ``min(1/(factor A), w/(factor B))``."""
    if factor not in (2, 4):
        raise ValueError("factor must be 2 or 4")
    norm = positive_part_norm(theta_field, space.weight, w, n)
    return SmallnessResult(norm=norm, threshold=min(1 / (factor * A), w / (factor * B)), factor=factor)


def _scaled_volume(r, Lambda3, N):
    """Model volume as ``(value, log_scale)``: volume = value * exp(log_scale)."""
    k = math.sqrt(Lambda3 / (N - 1))
    # factor out the growth at the upper end to avoid overflow
    top = math.log(math.sinh(k * r) / k) if k * r < 700 else k * r - math.log(2 * k)

    def integrand(s):
        if s == 0:
            return 0.0
        ks = k * s
        val = math.log(math.sinh(ks) / k) if ks < 700 else ks - math.log(2 * k)
        return math.exp((N - 1) * (val - top))

    val, _ = quad(integrand, 0.0, r, epsabs=0.0, epsrel=1e-13, limit=200)
    return val, (N - 1) * top


def model_volume(r: float, Lambda3: float, N: float) -> float:
    """``int_0^r (sinh(k s)/k)^(N-1) ds`` with ``k = sqrt(Lambda3/(N-1))``.

    Dividing by ``k`` keeps the integrand finite as ``Lambda3 -> 0`` and
    leaves volume ratios unchanged.
    """
    if r <= 0:
        return 0.0
    val, log_scale = _scaled_volume(r, Lambda3, N)
    return val * math.exp(log_scale)


def _log_volume(r, Lambda3, N):
    val, log_scale = _scaled_volume(r, Lambda3, N)
    return math.log(val) + log_scale


def log_volume_ratio(D: float, delta: float, Lambda3: float, N: float) -> float:
    return _log_volume(D + delta / 2, Lambda3, N) - _log_volume(delta / 2, Lambda3, N)


def volume_ratio(D: float, delta: float, Lambda3: float, N: float) -> float:
    log_ratio = log_volume_ratio(D, delta, Lambda3, N)
    if log_ratio > 700:
        raise OverflowError(f"volume ratio exp({log_ratio:.6g}) exceeds floating point range")
    return math.exp(log_ratio)


def sinh2_volume(r: float, k: float) -> float:
    """Closed form of ``int_0^r (sinh(k s)/k)^2 ds``."""
    x = k * r
    return (math.sinh(2 * x) / 4 - x / 2) / k**3


def bishop_gromov_packing(D: float, delta: float, Lambda3: float, N: float) -> int:
    """Upper bound on the number of disjoint ``delta/2``-balls in a diameter-``D`` space.

    Returns ``ceil(V(D + delta/2) / V(delta/2))`` for the model volume of
    :func:`model_volume`.
    """
    if not (D > 0 and delta > 0 and Lambda3 > 0 and N > 1):
        raise ValueError("D, delta, Lambda3 must be positive and N > 1")
    if delta > D:
        raise ValueError(f"delta={delta} exceeds the diameter bound D={D}")
    ratio = volume_ratio(D, delta, Lambda3, N)
    nearest = round(ratio)
    if abs(ratio - nearest) <= SNAP_RTOL * ratio:
        return max(1, int(nearest))
    return max(1, math.ceil(ratio))


def theorem15_bound(budget: GeometryBudget) -> ConstantsReport:
    """Chain the displacement threshold, packing count and factorial."""
    C1, C2, delta0 = lemma41_constants(budget.n, budget.Lambda1, budget.i0)
    branches = _delta_branches(budget)
    delta = min(branches.values())
    notes = ["packing uses disjoint balls of radius delta/2 centred in M"]
    if delta >= budget.D:
        # every isometry moves points by at most D <= delta, so only the identity remains
        L = 1
        notes.append("delta >= D: every isometry is within the rigidity threshold")
    else:
        L = bishop_gromov_packing(budget.D, delta, budget.Lambda3, budget.N)
        if L > MAX_FACTORIAL:
            raise OverflowError(f"packing count L={L} is too large to form L! exactly")
    return ConstantsReport(
        C1=C1, C2=C2, delta0=delta0, delta=delta, L=L, L1=math.factorial(L),
        branches={"delta": branches}, notes=tuple(notes),
    )


def space_form_volume(n: int, Lambda1: float, D: float) -> float:
    """Volume of a radius-``D`` ball in the ``n``-dimensional space form with ``Ric = -Lambda1``."""
    omega = 2 * math.pi ** (n / 2) / gamma_fn(n / 2)
    if n == 1:
        return 2 * D
    kappa = Lambda1 / (n - 1)
    k = math.sqrt(kappa)
    val, _ = quad(lambda s: (math.sinh(k * s) / k) ** (n - 1), 0.0, D, epsrel=1e-12, limit=200)
    return omega * val


def theorem17_delta(budget: GeometryBudget, delta1: float | None = None, C_G: float | None = None) -> dict:
    """``delta`` and ``epsilon`` for the weighted variant; ``delta1`` and ``C_G`` are user inputs."""
    if delta1 is None or C_G is None:
        raise ValueError("delta1 and C_G have no closed form and must be supplied explicitly")
    if not (delta1 > 0 and C_G > 0):
        raise ValueError("delta1 and C_G must be positive")
    vol = space_form_volume(budget.n, budget.Lambda1, budget.D)
    V = vol * budget.E
    scale = budget.Lambda2 * V ** (2 / budget.n)
    branches = {
        "delta1": float(delta1),
        "sobolev_A": 1 / (4 * budget.A * scale),
        "sobolev_B": budget.w / (4 * budget.B * scale),
    }
    return {
        "delta": min(branches.values()),
        "epsilon": C_G / 4 * min(1 / budget.A, budget.w / budget.B),
        "V": V,
        "branches": branches,
        "notes": [
            "delta1 and C_G are user-supplied and not computed",
            "V is the comparison volume for Ric >= -Lambda1 times the weight bound E",
        ],
    }
