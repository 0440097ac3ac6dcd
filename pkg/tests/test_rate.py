import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bbmlab import rate
from bbmlab.paths import GridPath, SmoothPath

# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------


def oracle_energy(values, phi):
    """Prefix energy from raw slope arithmetic (no library path code)."""
    n = len(values) - 1
    total = 0.0
    for k in range(n):
        lo, hi = k / n, (k + 1) / n
        if phi <= lo:
            break
        c = (values[k + 1] - values[k]) * n
        total += 0.5 * c * c * (min(phi, hi) - lo)
    return total


def scan_theta0(values, rm, points=100_000, tol=1e-12):
    """Dense scan for the first sign change of rm*phi - E(phi), refined by
    bisection; independent of the closed-form segment root."""
    phis = np.linspace(0.0, 1.0, points + 1)
    g = lambda p: rm * p - oracle_energy(values, p)
    gv = np.array([g(p) for p in phis])
    neg = np.flatnonzero(gv < 0.0)
    if len(neg) == 0:
        return math.inf
    j = neg[0]
    lo, hi = phis[j - 1], phis[j]
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol:
            break
    return hi


def lattice_search(query, rm, points=9):
    """Exhaustive lattice maximiser of the truncated rate (theta must be
    grid-aligned). Returns (max_rate, min_energy)."""
    n = query.resolution
    s = np.arange(n + 1) / n
    center = np.asarray(query.center.value(s))
    j_theta = int(round(query.theta * n))
    assert abs(j_theta / n - query.theta) < 1e-12, "oracle needs grid-aligned theta"
    axes = [np.linspace(center[k] - query.epsilon, center[k] + query.epsilon, points) for k in range(1, n + 1)]
    mesh = np.array(np.meshgrid(*axes, indexing="ij"), dtype=float).reshape(n, -1).T
    f = np.concatenate([np.zeros((len(mesh), 1)), mesh], axis=1)
    d = np.diff(f, axis=1)
    pref = np.cumsum(0.5 * n * d * d, axis=1)  # energies at s_1..s_n
    e_theta = pref[:, j_theta - 1] if j_theta >= 1 else np.zeros(len(mesh))
    feasible = np.ones(len(mesh), dtype=bool)
    for j in range(1, j_theta + 1):
        feasible &= pref[:, j - 1] <= rm * (j / n) + 1e-12
    max_rate = float(rm * query.theta - e_theta[feasible].min()) if feasible.any() else -math.inf
    return max_rate, float(e_theta.min())


def rounding_bound(argmax_values, n, spacing):
    """Energy increase from snapping every coordinate by at most spacing/2."""
    d = np.abs(np.diff(np.asarray(argmax_values)))
    return float(np.sum(0.5 * n * spacing * (2.0 * d + spacing)))


# ---------------------------------------------------------------------------
# closed-form values
# ---------------------------------------------------------------------------


def test_energy_examples():
    assert rate.energy(GridPath.zero(6), 1.0) == 0.0
    assert rate.energy(GridPath.line(3.0, 7), 1.0) == pytest.approx(4.5)
    assert rate.energy(GridPath((0.0, 0.0, 1.5)), 1.0) == pytest.approx(2.25)


def test_extinction_theta_examples():
    assert rate.extinction_theta(GridPath.zero(4), 1.0) == math.inf
    # slope c with c^2 > 2 rm goes extinct immediately
    assert rate.extinction_theta(GridPath.line(2.0, 4), 1.0) == 0.0
    # hand-computed piecewise-linear root 2.25/3.5
    got = rate.extinction_theta(GridPath((0.0, 0.0, 1.5)), 1.0)
    assert got == pytest.approx(2.25 / 3.5, abs=1e-12)


def test_extinction_theta_smooth():
    sp = SmoothPath.from_function(lambda s: 2.0 * s, 8, boundary="natural")
    assert rate.extinction_theta(sp, 1.0) == pytest.approx(0.0, abs=1e-9)
    flat = SmoothPath.zero(8)
    assert rate.extinction_theta(flat, 1.0) == math.inf


grid_paths = st.lists(st.floats(min_value=-2.0, max_value=2.0), min_size=1, max_size=11).map(
    lambda vals: GridPath([0.0] + vals)
)


@given(grid_paths, st.floats(min_value=0.1, max_value=3.0))
@settings(max_examples=40, deadline=None)
def test_extinction_theta_against_scan(path, rm):
    exact = rate.extinction_theta(path, rm)
    scanned = scan_theta0(path.values, rm)
    if math.isinf(exact):
        assert math.isinf(scanned)
    else:
        assert abs(exact - scanned) <= 1e-6  # scan bracket resolution


def test_rate_function_examples():
    assert rate.rate_function(GridPath.zero(4), 1.0, 1.0) == pytest.approx(1.0)
    assert rate.rate_function(GridPath.line(2.0, 4), 1.0, 1.0) == -math.inf
    assert rate.rate_function(GridPath.line(1.0, 4), 1.0, 1.0) == pytest.approx(0.5)
    assert rate.extinction_theta(GridPath.line(1.0, 4), 1.0) == math.inf


@given(grid_paths, st.floats(min_value=0.1, max_value=3.0), st.floats(min_value=0.05, max_value=1.0))
@settings(max_examples=60)
def test_raw_rate_dominates_rate(path, rm, theta):
    raw = rate.raw_rate(path, theta, rm)
    k = rate.rate_function(path, theta, rm)
    assert raw >= k
    if theta <= rate.extinction_theta(path, rm):
        assert raw == k
    else:
        assert k == -math.inf


# ---------------------------------------------------------------------------
# ball optimisation
# ---------------------------------------------------------------------------


def test_ball_zero_center():
    rep = rate.max_rate_over_ball(rate.BallQuery(GridPath.zero(32), 0.5, 1.0, 32), 1.0)
    assert rep.ball_value == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(rep.argmax, 0.0, atol=1e-10)


def test_ball_line_inside_band():
    # |0 - c s| <= eps for eps >= |c|: the flat path is feasible and optimal
    rep = rate.max_rate_over_ball(rate.BallQuery(GridPath.line(0.4, 16), 0.5, 1.0, 16), 1.0)
    assert rep.ball_value == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(rep.argmax, 0.0, atol=1e-6)


def test_ball_extinct_line():
    q = rate.BallQuery(GridPath.line(2.0, 16), 0.5, 1.0, 16)
    rep = rate.max_rate_over_ball(q, 1.0)
    assert rep.ball_value == -math.inf
    # brute force confirms: no feasible path anywhere in the ball
    q6 = rate.BallQuery(GridPath.line(2.0, 6), 0.5, 1.0, 6)
    lattice_rate, lattice_energy = lattice_search(q6, 1.0)
    assert lattice_rate == -math.inf
    # taut line at slope 1.5 is the minimal-energy feasible path
    srep = rate.min_energy_over_ball(q)
    assert srep.ball_value == pytest.approx(1.125, abs=1e-8)
    srep6 = rate.min_energy_over_ball(q6)
    assert srep6.ball_value == pytest.approx(1.125, abs=1e-8)
    bound = rounding_bound(srep6.argmax, 6, 2.0 * 0.5 / 8.0)
    assert srep6.ball_value <= lattice_energy + 1e-9 <= srep6.ball_value + bound + 2e-9


def test_schilder_examples():
    assert rate.min_energy_over_ball(rate.BallQuery(GridPath.zero(16), 0.3, 1.0, 16)).ball_value == pytest.approx(0.0, abs=1e-12)
    big = rate.min_energy_over_ball(rate.BallQuery(GridPath.line(2.0, 16), 50.0, 1.0, 16))
    assert big.ball_value == pytest.approx(0.0, abs=1e-10)


def test_ball_monotone_in_epsilon():
    center = GridPath((0.0, 0.4, 1.1, 1.3, 0.9, 1.6, 1.2, 0.8, 1.0))
    prev = -math.inf
    for eps in (0.15, 0.3, 0.6, 1.2):
        val = rate.max_rate_over_ball(rate.BallQuery(center, eps, 1.0, 8), 1.0).ball_value
        assert val >= prev - 1e-9
        prev = val


def test_ball_dominates_center_rate():
    center = GridPath((0.0, 0.3, 0.9, 0.8, 1.4))
    q = rate.BallQuery(center, 0.25, 1.0, 4)
    rep = rate.max_rate_over_ball(q, 1.2)
    assert rep.ball_value >= rate.rate_function(center, 1.0, 1.2) - 1e-9


def test_active_set_reported():
    rep = rate.min_energy_over_ball(rate.BallQuery(GridPath.line(2.0, 8), 0.5, 1.0, 8))
    # the taut line from the origin only touches the band at the far end
    assert rep.active_lower == (8,)
    assert rep.active_upper == ()


centers = st.lists(st.floats(min_value=-1.5, max_value=1.5), min_size=4, max_size=4).map(
    lambda vals: GridPath([0.0] + vals)
)


@given(centers, st.floats(min_value=0.2, max_value=1.0), st.floats(min_value=0.3, max_value=2.5))
@settings(max_examples=25, deadline=None)
def test_optimizer_matches_lattice(center, eps, rm):
    q = rate.BallQuery(center, eps, 1.0, 4)
    rep = rate.max_rate_over_ball(q, rm)
    lattice_rate, lattice_energy = lattice_search(q, rm)
    srep = rate.min_energy_over_ball(q)
    bound = rounding_bound(srep.argmax, 4, 2.0 * eps / 8.0)
    # energy: two-sided within the rounding bound
    assert srep.ball_value <= lattice_energy + 1e-9
    assert lattice_energy <= srep.ball_value + bound + 1e-9
    # truncated rate: the lattice is a subset of the ball
    assert lattice_rate <= rep.ball_value + 1e-9
    if rep.ball_value == -math.inf:
        assert lattice_rate == -math.inf


def test_phase3_feasible_but_minimizer_violates():
    # centre found by random search: the unconstrained energy minimiser
    # breaks an early prefix constraint that other feasible paths satisfy
    center = GridPath((0.0, -0.19113457, -0.97312417, -0.53002325, 0.38354279))
    q = rate.BallQuery(center, 0.3286981786619302, 1.0, 4)
    rm = 0.9811459644261078
    rep = rate.max_rate_over_ball(q, rm)
    lattice_rate, _ = lattice_search(q, rm, points=17)
    assert rep.ball_value > -math.inf
    assert rep.ball_value >= lattice_rate - 1e-6
    # argmax must satisfy every prefix constraint
    path = GridPath(rep.argmax)
    prof = path.energy_profile()
    s = np.arange(5) / 4
    assert np.all(prof <= rm * s + 1e-6)
