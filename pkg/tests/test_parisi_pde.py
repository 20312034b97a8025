import numpy as np
import pytest

from multispin.measures import DiscreteMeasure, dirac
from multispin.model import bernoulli_spins
from multispin.parisi_pde import (
    GridError,
    GridSpec,
    _isotonic_increasing,
    chi_d,
    psi_d,
    solve_density,
    solve_phi,
)

from conftest import three_atom_spins


def free_field_value(q, gh_order=80):
    """E log cosh(sqrt(2q) Z) by Gauss-Hermite quadrature."""
    nodes, weights = np.polynomial.hermite.hermgauss(gh_order)
    weights = weights / np.sqrt(np.pi)
    return float(weights @ np.logaddexp(np.sqrt(2.0) * np.sqrt(2.0 * q) * nodes,
                                        -np.sqrt(2.0) * np.sqrt(2.0 * q) * nodes)) - np.log(2.0)


def test_psi_dirac_zero_at_origin():
    assert psi_d(dirac([0.0]), bernoulli_spins()) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("q", [0.25, 0.5, 1.0])
def test_heat_kernel_oracle(q):
    # nu = delta_q: zeta = 0 on [0, q), so Phi(0,0) is a plain Gaussian
    # average of the terminal condition and psi has a closed form
    expected = q - free_field_value(q)
    got = psi_d(dirac([q]), bernoulli_spins(), GridSpec(x_step=0.02))
    assert got == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("q", [0.5, 1.0, 2.0])
def test_full_replica_symmetry_zero(q):
    # zeta = 1 on [0, q]: each semigroup step preserves log cosh exactly,
    # so the value at the origin vanishes
    sol = solve_phi(dirac([0.0]), bernoulli_spins(), GridSpec(x_step=0.02), t_end=q)
    assert sol.psi == pytest.approx(0.0, abs=1e-6)


def test_derivative_consistent_with_value():
    sol = solve_phi(dirac([0.5]), bernoulli_spins(), GridSpec(x_step=0.02))
    num = np.gradient(sol.phi[0], sol.x)
    interior = slice(5, -5)
    assert np.max(np.abs(num[interior] - sol.dphi[0][interior])) <= 5e-4


def test_dphi_bounded():
    sol = solve_phi(dirac([1.0]), three_atom_spins(), GridSpec())
    assert np.max(np.abs(sol.dphi)) <= 1.0 + 1e-12


def test_density_mass_and_positivity():
    nu = DiscreteMeasure(atoms=((0.2,), (0.7,)), probs=(0.5, 0.5))
    sol = solve_phi(nu, bernoulli_spins(), GridSpec())
    dens = solve_density(nu, sol)
    assert np.max(np.abs(dens.mass() - 1.0)) <= 1e-6
    assert dens.u.min() >= -1e-12


def test_driftless_second_moment():
    # zeta = 0 up to the atom: u is the heat kernel with Var = 2t
    q = 1.0
    sol = solve_phi(dirac([q]), bernoulli_spins(), GridSpec(x_step=0.05))
    dens = solve_density(dirac([q]), sol)
    k = int(np.searchsorted(dens.times, 0.5))
    assert dens.second_moment(k) == pytest.approx(2.0 * dens.times[k], abs=2e-2)


def test_chi_curve_class_membership():
    nu = DiscreteMeasure(atoms=((0.1,), (0.8,)), probs=(0.3, 0.7))
    curve = chi_d(nu, bernoulli_spins(), GridSpec())
    assert curve.values[0] == 0.0
    slopes = curve.slopes()
    assert slopes.min() >= -1e-12
    assert slopes.max() <= 1.0 + 1e-12
    assert np.diff(slopes).min() >= -1e-8


def test_psi_concavity():
    rng = np.random.Generator(np.random.Philox(key=9))
    grid = GridSpec()
    for _ in range(5):
        a = np.sort(rng.uniform(0.0, 1.5, size=2))
        b = np.sort(rng.uniform(0.0, 1.5, size=2))
        nu1 = DiscreteMeasure(atoms=((a[0],), (a[1],)), probs=(0.5, 0.5))
        nu2 = DiscreteMeasure(atoms=((b[0],), (b[1],)), probs=(0.5, 0.5))
        mid = DiscreteMeasure(
            atoms=tuple((x,) for x in np.concatenate([a, b])),
            probs=(0.25, 0.25, 0.25, 0.25),
        )
        lhs = psi_d(mid, bernoulli_spins(), grid)
        rhs = 0.5 * psi_d(nu1, bernoulli_spins(), grid) + 0.5 * psi_d(nu2, bernoulli_spins(), grid)
        assert lhs >= rhs - 1e-8


def test_grid_convergence():
    nu = DiscreteMeasure(atoms=((0.3,), (1.1,)), probs=(0.4, 0.6))
    coarse = psi_d(nu, bernoulli_spins(), GridSpec(x_step=0.04, gh_order=40))
    fine = psi_d(nu, bernoulli_spins(), GridSpec(x_step=0.02, gh_order=80))
    assert abs(coarse - fine) < 1e-5


def test_grid_error_on_small_domain():
    with pytest.raises(GridError):
        solve_phi(dirac([2.0]), bernoulli_spins(), GridSpec(x_max_override=0.8))


def test_isotonic_projection():
    rng = np.random.Generator(np.random.Philox(key=10))
    for _ in range(20):
        y = rng.normal(size=6)
        w = rng.uniform(0.5, 2.0, size=6)
        out = _isotonic_increasing(y, w)
        assert np.all(np.diff(out) >= -1e-12)
        # projection optimality: no lower weighted squared error among a
        # sample of monotone candidates
        err = float(w @ (out - y) ** 2)
        for _ in range(50):
            cand = np.sort(rng.normal(size=6))
            assert err <= float(w @ (cand - y) ** 2) + 1e-9


def test_solution_dx_extends_past_horizon():
    sol = solve_phi(dirac([0.5]), bernoulli_spins(), GridSpec())
    v = sol.dx(2.0, np.array([0.0, 1.0]))
    assert np.all(np.abs(v) <= 1.0)
