"""Acceptance criteria 1 to 10, one PASS/FAIL line each.

Lines are printed as they are decided and repeated in the pytest terminal
summary.  Run ``python tests/test_acceptance.py`` for the lines alone.
"""

import math
import sys
import time
from itertools import permutations
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE, angle_index, model_corpus, random_space  # noqa: E402
from synricci import (  # noqa: E402
    FiniteMMS,
    GeometryBudget,
    ModelManifold,
    beta_distortion,
    bishop_gromov_packing,
    build_witten,
    cd_convexity_check,
    covering_number,
    dirac,
    discretize,
    enumerate_isometries,
    entropy,
    heat_flow,
    injection_map,
    lemma41_constants,
    lemma42_delta,
    pigeonhole_bound,
    theorem15_bound,
    theta_plus,
    theta_star,
    w2_exact,
)
from synricci.bochner import model_volume, sinh2_volume, volume_ratio  # noqa: E402
from synricci.curvature import sturm_bounds_for_pair  # noqa: E402
from synricci.heat import heat_flow_many  # noqa: E402
from synricci.isometry import brute_force_isometries, cycle_space, default_tol  # noqa: E402
from synricci.mms import read_model  # noqa: E402
from synricci.transport import plan_cost  # noqa: E402

DATA = Path(__file__).parent / "data"


def report(k: int, passed: bool, detail: str) -> None:
    line = f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[k] = line
    print(line, flush=True)


@pytest.fixture(scope="module")
def weighted_circle():
    return ModelManifold.circle(1.0, cos={1: 0.5})


# ---------------------------------------------------------------------------
# 1. weighted circle: theta matches the closed-form rate


def test_criterion_01_weighted_circle_identity(weighted_circle):
    t0 = time.perf_counter()
    space = discretize(weighted_circle, 256)
    op = build_witten(space)
    worst = 0.0
    for k in range(10):
        x = round(k * 25.6)
        y = (x + 9 + k) % space.n
        est = theta_plus(space, op, x, y)
        th_x, th_y = space.labels[x, 0], space.labels[y, 0]
        rho = (weighted_circle.grad_potential(th_y)[0] - weighted_circle.grad_potential(th_x)[0]) / est.d
        bounds = sturm_bounds_for_pair(weighted_circle, space, x, y)
        # the bracket integrates v'' by trapezoid rule, so agreement is to quadrature accuracy
        assert bounds.lower == pytest.approx(rho, abs=1e-7) and bounds.upper == bounds.lower
        assert 0.2 <= est.d <= 0.5
        err = abs(est.value - rho) / abs(rho)
        worst = max(worst, err)
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.10 and elapsed <= 300
    report(1, ok, f"10 pairs, worst relative error {worst:.3f} (limit 0.10), {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------------------
# 2. unit sphere: theta lies inside the two-sided bracket


def sphere_pairs(space, center):
    """Five pairs from the centre, evenly spread by distance over d in [0.6, 0.8] on one half."""
    d = space.dist[center]
    phi = space.labels[:, 1]
    cand = [j for j in range(space.n) if 0.6 <= d[j] <= 0.8 and phi[j] <= math.pi]
    cand.sort(key=lambda j: (d[j], j))
    return [cand[i] for i in np.linspace(0, len(cand) - 1, 5).round().astype(int)]


def test_criterion_02_sphere_sandwich():
    t0 = time.perf_counter()
    model, res = read_model(DATA / "sphere.toml")
    space = discretize(model, res)
    op = build_witten(space)
    center = 11 * 48
    tol = 0.15
    inside, detail = 0, []
    for y in sphere_pairs(space, center):
        est = theta_plus(space, op, center, y)
        b = sturm_bounds_for_pair(model, space, center, y)
        assert b.lower == pytest.approx(1.0, abs=1e-9)
        upper = 1.0 + math.tan(est.d / 2) ** 2
        assert b.upper == pytest.approx(upper, rel=1e-9)
        ok = b.lower - tol <= est.value <= b.upper + tol
        inside += ok
        detail.append(f"d={est.d:.3f}:{est.value:.3f}")
    elapsed = time.perf_counter() - t0
    ok = inside == 5 and elapsed <= 600
    report(2, ok, f"{inside}/5 inside [1 - 0.15, 1 + tan^2(d/2) + 0.15] ({', '.join(detail)}), {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------------------
# 3. localised max converges at first order under refinement


def test_criterion_03_refinement(weighted_circle):
    errors = []
    for res in (128, 256, 512):
        space = discretize(weighted_circle, res)
        x = angle_index(space, math.pi)
        star = theta_star(space, build_witten(space), x, [0.15])
        errors.append(abs(star.value - weighted_circle.hess_potential(math.pi)[0, 0]))
    ratios = [errors[1] / errors[0], errors[2] / errors[1]]
    ok = all(0.375 <= r <= 0.625 for r in ratios)
    report(3, ok, f"gaps {', '.join(f'{e:.4f}' for e in errors)}; ratios {ratios[0]:.3f}, {ratios[1]:.3f} "
                  "(target 0.5 +/- 25%)")
    assert ok


# ---------------------------------------------------------------------------
# 4. exact transport against enumeration


def random_admissible_plans(rng, mu, nu, count):
    """Mixtures of north-west-corner vertices under random row and column orders."""
    n = len(mu)
    verts = []
    for _ in range(64):
        r, c = rng.permutation(n), rng.permutation(n)
        a, b = mu[r].copy(), nu[c].copy()
        pi = np.zeros((n, n))
        i = j = 0
        while i < n and j < n:
            m = min(a[i], b[j])
            pi[r[i], c[j]] = m
            a[i] -= m
            b[j] -= m
            if a[i] <= b[j]:
                i += 1
            else:
                j += 1
        verts.append(pi)
    verts = np.array(verts)
    plans = []
    while len(plans) < count:
        k = rng.integers(1, 5)
        lam = rng.dirichlet(np.ones(k))
        pi = np.tensordot(lam, verts[rng.choice(len(verts), k, replace=False)], axes=1)
        # reject mixtures whose marginals drift past round-off
        if np.abs(pi.sum(1) - mu).max() <= 1e-12 and np.abs(pi.sum(0) - nu).max() <= 1e-12:
            plans.append(pi)
    return plans


def test_criterion_04_transport_oracle():
    rng = np.random.default_rng(2024)
    worst_uniform = 0.0
    for _ in range(50):
        k = int(rng.integers(1, 7))
        pts = rng.normal(size=(2 * k, 2))
        d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
        space = FiniteMMS(dist=d, weight=np.ones(2 * k))
        mu = np.r_[np.full(k, 1 / k), np.zeros(k)]
        nu = np.r_[np.zeros(k), np.full(k, 1 / k)]
        W, _ = w2_exact(space, mu, nu)
        best = min(math.fsum(d[i, k + p[i]] ** 2 for i in range(k)) / k for p in permutations(range(k)))
        worst_uniform = max(worst_uniform, abs(W**2 - best))
    beaten = 0
    for _ in range(20):
        n = int(rng.integers(2, 6))
        pts = rng.normal(size=(n, 2))
        d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
        space = FiniteMMS(dist=d, weight=np.ones(n))
        mu, nu = rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(n))
        W, _ = w2_exact(space, mu, nu)
        costs = np.array([plan_cost(d, pi) for pi in random_admissible_plans(rng, mu, nu, 10_000)])
        beaten += int((costs < W**2 - 1e-12).sum())
    ok = worst_uniform <= 1e-12 and beaten == 0
    report(4, ok, f"uniform: max |W^2 - brute force| = {worst_uniform:.2e} over 50 spaces; "
                  f"non-uniform: {beaten} of 200000 sampled plans cheaper than the optimum")
    assert ok


# ---------------------------------------------------------------------------
# 5. heat semigroup invariants on the model corpus


def test_criterion_05_heat_invariants():
    rng = np.random.default_rng(5)
    mass = semi = dual = 0.0
    monotone = True
    for model, res in model_corpus():
        space = discretize(model, res)
        op = build_witten(space)
        mu = rng.uniform(size=space.n)
        mu /= mu.sum()
        for st_ in heat_flow_many(op, mu, [1e-4, 0.01, 0.3, 1.0, 10.0]):
            mass = max(mass, abs(math.fsum(st_.density) - 1))
        ents = [entropy(space, s.density) for s in heat_flow_many(op, dirac(space, 1), [0, 1e-3, 0.01, 0.1, 1.0])]
        monotone &= all(b <= a + 1e-10 for a, b in zip(ents, ents[1:]))
        for s_, t in [(0.01, 0.02), (0.5, 1.0)]:
            direct = heat_flow(op, mu, s_ + t).density
            twice = heat_flow(op, heat_flow(op, mu, s_).density, t).density
            semi = max(semi, np.abs(direct - twice).max())
        f = rng.normal(size=space.n)
        for x in (0, space.n // 2):
            for t in (0.003, 0.1, 1.0):
                lhs = op.function_propagate(f, t)[x]
                rhs = float(f @ op.measure_propagate(dirac(space, x), [t])[0])
                dual = max(dual, abs(lhs - rhs) / max(1.0, np.abs(f).max()))
    ok = mass <= 1e-12 and monotone and semi <= 1e-9 and dual <= 1e-10
    report(5, ok, f"{len(model_corpus())} models: mass {mass:.1e}, entropy monotone {monotone}, "
                  f"semigroup {semi:.1e}, duality {dual:.1e}")
    assert ok


# ---------------------------------------------------------------------------
# 6. isometry enumeration against brute force


def small_corpus():
    c6 = cycle_space(6)
    w = np.ones(6)
    w[0] += 10 * default_tol(c6)
    return {
        "C6": (cycle_space(6), 12),
        "perturbed C6": (cycle_space(6, weight=w), None),
        "torus 2x3": (discretize(ModelManifold.torus(1.0, 1.0), (2, 3)), None),
        "circle 8": (discretize(ModelManifold.circle(1.0), 8), 16),
        "weighted circle 8": (discretize(ModelManifold.circle(1.0, cos={1: 0.5}), 8), None),
        "random 7": (random_space(np.random.default_rng(6), 7), None),
    }


def test_criterion_06_isometry_oracle():
    orders, ok = {}, True
    for name, (space, expected) in small_corpus().items():
        group = enumerate_isometries(space)
        ok &= group.perms() == brute_force_isometries(space)
        if expected is not None:
            ok &= group.order == expected
        orders[name] = group.order
    ok &= orders["perturbed C6"] < orders["C6"]
    report(6, bool(ok), "enumeration equals brute force: " + ", ".join(f"{k}={v}" for k, v in orders.items()))
    assert ok


# ---------------------------------------------------------------------------
# 7. pigeonhole certificate at a quarter of the diameter


@pytest.mark.xfail(
    strict=True,
    reason="a quarter-diameter cover of C12 (a = 1.5) exceeds the rigidity scale 1, so rotations collide",
)
def test_criterion_07_pigeonhole():
    space = cycle_space(12)
    group = enumerate_isometries(space)
    a = space.diameter / 4
    N, centers = covering_number(space, a)
    cert = injection_map(space, group, centers, a)
    bound = pigeonhole_bound(N)
    order_ok = group.order == 24 and group.order <= bound
    report(7, cert.injective and order_ok,
           f"a={a}, N={N}, #Iso={group.order} <= N!={bound}: {order_ok}; injective: {cert.injective} "
           f"({len(cert.collisions)} collisions reported)")
    assert cert.injective and order_ok


# ---------------------------------------------------------------------------
# 8. constants pipeline


def test_criterion_08_constants():
    checks = {}
    checks["C1, C2, delta0 = (8, 1, pi/2)"] = lemma41_constants(3, 1, 10) == (8, 1, math.pi / 2)
    budget = GeometryBudget(n=3, N=3, i0=10, Lambda1=1, Lambda2=1, Lambda3=1, V=1, D=1)
    checks["delta = arctan(1/4)"] = abs(lemma42_delta(budget) - math.atan(0.25)) <= 1e-12
    k = math.sqrt(0.5)
    quad_err = max(
        abs(model_volume(r, 1.0, 3) - sinh2_volume(r, k)) / sinh2_volume(r, k) for r in (0.05, 0.5, 1.0, 3.0, 10.0)
    )
    delta = lemma42_delta(budget)
    closed = sinh2_volume(1 + delta / 2, k) / sinh2_volume(delta / 2, k)
    ratio_err = abs(volume_ratio(1, delta, 1.0, 3) - closed) / closed
    checks["quadrature vs sinh^2 closed form"] = quad_err <= 1e-9 and ratio_err <= 1e-9
    rep = theorem15_bound(budget)
    checks["L1 = L!"] = rep.L == bishop_gromov_packing(1, delta, 1.0, 3) == math.ceil(closed)
    checks["L1 = L!"] &= rep.L1 == math.factorial(rep.L)
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    report(8, ok, f"L={rep.L}, L1 has {len(str(rep.L1))} digits, quadrature rel err {max(quad_err, ratio_err):.1e}"
                  + (f"; failed: {failed}" if failed else ""))
    assert ok


# ---------------------------------------------------------------------------
# 9. distortion coefficients


def test_criterion_09_beta():
    flat = all(
        beta_distortion(0.0, N, t, d) == 1.0
        for N in (1.5, 2, 3, 10) for t in (0, 0.25, 0.5, 1) for d in (0, 0.1, 1, 5, 100)
    )
    blowup = all(beta_distortion(1.0, 2, t, d) == math.inf for t in (0.1, 0.5, 0.9) for d in (3.2, 4.0, 10.0))
    val = beta_distortion(-1.0, 2, 0.5, 1.0)
    target = math.sinh(0.5) / (0.5 * math.sinh(1.0))
    ok = flat and blowup and abs(val - target) <= 1e-12
    report(9, ok, f"K=0 grid all 1: {flat}; K=1 d>pi all inf: {blowup}; K=-1 error {abs(val - target):.1e}")
    assert ok


# ---------------------------------------------------------------------------
# 10. convexity check direction


def test_criterion_10_cd_direction(weighted_circle):
    space = discretize(weighted_circle, 128)
    op = build_witten(space)
    ts = np.linspace(0, 1, 9)
    found = None
    for center in (0.0, math.pi / 2, math.pi):
        x = angle_index(space, (center - 0.4) % (2 * math.pi))
        y = angle_index(space, center + 0.4)
        mu0 = heat_flow(op, dirac(space, x), 0.01).density
        mu1 = heat_flow(op, dirac(space, y), 0.01).density
        good = cd_convexity_check(space, weighted_circle, mu0, mu1, -0.5, ts)
        bad = cd_convexity_check(space, weighted_circle, mu0, mu1, 0.6, ts)
        if good.passed and bad.failing_interior():
            found = (center, bad.worst_slack, bad.tolerance, bad.failing_interior())
            break
    ok = found is not None
    detail = (f"pair centred at {found[0]:.3f}: K=-0.5 passes, K=0.6 worst slack {found[1]:.4f} "
              f"beyond tolerance {found[2]:.4f} at t={found[3]}" if ok else "no separating pair")
    report(10, ok, detail)
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
