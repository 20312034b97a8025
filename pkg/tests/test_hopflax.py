import numpy as np
import pytest

from multispin.functionals import constant_slope_chi, psi_derivative
from multispin.hopflax import (
    check_cone_convexity,
    chi_conjugate,
    integrate_s_t_chi,
    lipschitz_report,
    s_t_chi,
    s_t_chi_values,
    xi_sup_on_unit_ball,
)
from multispin.measures import DiscreteMeasure, dirac
from multispin.parisi_pde import GridSpec


def random_chi(rng, weights, n_knots=4, horizon=4.0):
    """Random separable member of the admissible class."""
    curves = []
    for _ in weights:
        knots = np.concatenate([[0.0], np.sort(rng.uniform(0.1, horizon, n_knots - 1))])
        slopes = np.sort(rng.uniform(0.0, 1.0, n_knots - 1))
        values = np.concatenate([[0.0], np.cumsum(slopes * np.diff(knots))])
        curves.append((tuple(knots), tuple(values)))
    from multispin.functionals import ChiFunction

    return ChiFunction(weights=tuple(weights), curves=tuple(curves))


def test_identity_chi_closed_form(two_species):
    # chi_d(x) = x, lambda = (1/2, 1/2): S_1 chi(x) = (x1+x2)/2 + 3/4
    chi = constant_slope_chi((0.5, 0.5), (1.0, 1.0))
    for x in ([0.0, 0.0], [1.0, 2.0], [0.3, 0.7]):
        val = float(s_t_chi_values(two_species, chi, 1.0, np.array([x]))[0])
        assert val == pytest.approx(0.5 * (x[0] + x[1]) + 0.75, abs=1e-10)


def test_s0_is_identity(sk):
    rng = np.random.Generator(np.random.Philox(key=30))
    chi = random_chi(rng, (1.0,))
    xs = rng.uniform(0.0, 3.0, size=(50, 1))
    vals = s_t_chi_values(sk, chi, 0.0, xs)
    for x, v in zip(xs, vals):
        assert v == pytest.approx(chi.value(x), abs=1e-10)


def test_chi_conjugate_linear():
    chi = constant_slope_chi((1.0,), (0.5,))
    # chi(x) = x/2: conjugate is 0 for p <= 1/2 and +inf above
    assert chi_conjugate(chi, [0.3]) == pytest.approx(0.0, abs=1e-12)
    assert chi_conjugate(chi, [0.5]) == pytest.approx(0.0, abs=1e-12)
    assert chi_conjugate(chi, [0.7]) == np.inf


def test_chi_conjugate_fenchel_young(sk):
    rng = np.random.Generator(np.random.Philox(key=31))
    chi = random_chi(rng, (1.0,))
    for _ in range(30):
        x = rng.uniform(0.0, 4.0)
        p = rng.uniform(0.0, 1.0)
        star = chi_conjugate(chi, [p])
        if np.isfinite(star):
            assert p * x - chi.value([x]) <= star + 1e-10


def test_st1_st2_agree(sk, two_species):
    rng = np.random.Generator(np.random.Philox(key=32))
    for model, d in ((sk, 1), (two_species, 2)):
        for _ in range(10):
            chi = random_chi(rng, (1.0,) if d == 1 else (0.5, 0.5))
            t = rng.uniform(0.1, 2.0)
            x = rng.uniform(0.0, 2.0, size=d)
            _, report = s_t_chi(model, chi, t, x)
            assert report["ok"], report


def test_cone_convexity(sk):
    rng = np.random.Generator(np.random.Philox(key=33))
    chi = random_chi(rng, (1.0,))
    report = check_cone_convexity(sk, chi, 1.0, samples=2000, seed=0)
    assert report["ok"], report


def test_semigroup_monotone_in_t(sk):
    rng = np.random.Generator(np.random.Philox(key=34))
    chi = random_chi(rng, (1.0,))
    x = np.array([[0.5]])
    vals = [float(s_t_chi_values(sk, chi, t, x)[0]) for t in (0.0, 0.5, 1.0, 2.0)]
    assert np.all(np.diff(vals) >= -1e-12)


def test_xi_sup_on_unit_ball(sk, two_species):
    assert xi_sup_on_unit_ball(sk) == pytest.approx(1.0, abs=1e-10)
    # sup of x1^2 + x1 x2 + x2^2 on the unit sphere is 3/2 at x1 = x2
    assert xi_sup_on_unit_ball(two_species) == pytest.approx(1.5, abs=1e-8)


def test_lipschitz_report(sk):
    rng = np.random.Generator(np.random.Philox(key=35))
    chi = random_chi(rng, (1.0,))
    t_pairs = [(rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0)) for _ in range(20)]
    x_pairs = [([rng.uniform(0.0, 2.0)], [rng.uniform(0.0, 2.0)]) for _ in range(20)]
    report = lipschitz_report(sk, chi, t_pairs, x_pairs)
    assert report["ok"], report


def test_integrate_s_t_chi_matches_relaxed_sup(sk, coarse_grid):
    # int S_t chi dmu = sup_nu { int chi dnu - T_t(mu, nu) } on a fine grid
    from multispin.functionals import integrate_chi
    from multispin.transport import ot_cost

    mu = dirac([0.0])
    chi = constant_slope_chi((1.0,), (0.4,))
    t = 1.0
    lhs = integrate_s_t_chi(sk, chi, t, mu)
    best = -np.inf
    for y in np.linspace(0.0, 2.5, 101):
        nu = dirac([y])
        cost, _ = ot_cost(sk, t, mu, nu)
        best = max(best, integrate_chi(chi, nu) - cost)
    assert lhs == pytest.approx(best, abs=1e-6)


def test_emitted_chi_cone_convexity(sk, coarse_grid):
    nu = DiscreteMeasure(atoms=((0.2,), (0.8,)), probs=(0.5, 0.5))
    chi = psi_derivative(sk, nu, coarse_grid, horizon=1.5)
    report = check_cone_convexity(sk, chi, 0.5, samples=1000, seed=1)
    assert report["ok"], report
