import numpy as np
import pytest

from multispin.functionals import (
    ChiClassError,
    ChiFunction,
    constant_slope_chi,
    integrate_chi,
    psi,
    psi_derivative,
    psi_star,
)
from multispin.measures import DiscreteMeasure, dirac, marginals, monotone_rearrange, w1
from multispin.parisi_pde import GridSpec

from conftest import random_monotone_measure


def test_psi_is_weighted_sum_of_marginal_values(two_species, coarse_grid):
    from multispin.parisi_pde import psi_d

    mu = DiscreteMeasure(atoms=((0.0, 0.1), (0.5, 0.8)), probs=(0.4, 0.6))
    total = psi(two_species, mu, coarse_grid)
    parts = [
        psi_d(marg, two_species.spins[d], coarse_grid)
        for d, marg in enumerate(marginals(mu))
    ]
    assert total == pytest.approx(0.5 * parts[0] + 0.5 * parts[1], abs=1e-12)


def test_psi_rearrangement_invariance(two_species, coarse_grid):
    mu = DiscreteMeasure(atoms=((0.0, 1.0), (1.0, 0.0)), probs=(0.5, 0.5))
    assert psi(two_species, mu, coarse_grid) == pytest.approx(
        psi(two_species, monotone_rearrange(mu), coarse_grid), abs=1e-12
    )


def test_psi_lipschitz_w1(sk, coarse_grid):
    rng = np.random.Generator(np.random.Philox(key=21))
    for _ in range(5):
        nu1 = random_monotone_measure(rng, 1, n_atoms=2, scale=1.5)
        nu2 = random_monotone_measure(rng, 1, n_atoms=2, scale=1.5)
        gap = abs(psi(sk, nu1, coarse_grid) - psi(sk, nu2, coarse_grid))
        assert gap <= w1(nu1, nu2) + 1e-6


def test_chi_function_validation():
    good = constant_slope_chi((0.5, 0.5), (0.3, 0.9))
    good.validate()
    with pytest.raises(ChiClassError):
        ChiFunction(weights=(1.0,), curves=(((0.0, 1.0), (0.5, 1.0)),)).validate()  # chi(0) != 0
    with pytest.raises(ChiClassError):
        ChiFunction(weights=(1.0,), curves=(((0.0, 1.0), (0.0, 1.5)),)).validate()  # slope > 1
    with pytest.raises(ChiClassError):
        ChiFunction(
            weights=(1.0,), curves=(((0.0, 1.0, 2.0), (0.0, 0.9, 1.0)),)
        ).validate()  # concave kink


def test_chi_membership_report():
    chi = constant_slope_chi((1.0,), (0.7,))
    report = chi.membership_report()
    assert report["origin"] == 0.0
    assert report["slope_low"] >= 0.0
    assert report["slope_high"] >= 0.0


def test_chi_serialization_roundtrip():
    chi = constant_slope_chi((0.25, 0.75), (0.2, 0.8))
    assert ChiFunction.from_dict(chi.to_dict()) == chi


def test_psi_derivative_membership(sk, coarse_grid):
    nu = DiscreteMeasure(atoms=((0.2,), (0.9,)), probs=(0.5, 0.5))
    chi = psi_derivative(sk, nu, coarse_grid, horizon=2.0)
    chi.validate()
    assert chi.curve(0).knots[-1] >= 2.0


def test_derivative_first_order_expansion(sk):
    # psi(nu + eps (nu' - nu)) - psi(nu) = eps int chi_nu d(nu' - nu) + O(eps^2)
    grid = GridSpec(x_step=0.02, time_substeps=100)
    nu = DiscreteMeasure(atoms=((0.2,), (0.7,)), probs=(0.5, 0.5))
    nup = DiscreteMeasure(atoms=((0.4,), (1.0,)), probs=(0.5, 0.5))
    chi = psi_derivative(sk, nu, grid, horizon=1.5)
    linear = integrate_chi(chi, nup) - integrate_chi(chi, nu)
    base = psi(sk, nu, grid)

    def mix(eps):
        return DiscreteMeasure(
            atoms=nu.atoms + nup.atoms,
            probs=tuple((1 - eps) * p for p in nu.probs) + tuple(eps * p for p in nup.probs),
        )

    res_cal = abs(psi(sk, mix(0.1), grid) - base - 0.1 * linear)
    res = abs(psi(sk, mix(0.01), grid) - base - 0.01 * linear)
    assert res <= 5 * 0.01**2 * (res_cal / 0.01) + 1e-10


def test_psi_star_upper_bound(sk, coarse_grid):
    # psi_*(chi_nu) <= int chi_nu dnu - psi(nu) for any nu on the atom list
    nu = DiscreteMeasure(atoms=((0.3,), (0.8,)), probs=(0.5, 0.5))
    chi = psi_derivative(sk, nu, coarse_grid, horizon=1.0)
    atoms = np.linspace(0.0, 1.0, 9).reshape(-1, 1)
    atoms = np.concatenate([atoms, nu.arrays()[0]])
    value, nu_min = psi_star(sk, chi, atoms, coarse_grid, warm_starts=(nu,))
    assert value <= integrate_chi(chi, nu) - psi(sk, nu, coarse_grid) + 1e-10
    assert abs(sum(nu_min.probs) - 1.0) <= 1e-9


def test_psi_star_linear_chi_at_t0(sk, coarse_grid):
    # with chi = 0 the infimum of -psi over a grid is attained at the
    # largest atoms (psi increasing); value equals -psi at that point
    chi = constant_slope_chi((1.0,), (0.0,))
    atoms = np.array([[0.0], [0.5]])
    value, nu_min = psi_star(sk, chi, atoms, coarse_grid)
    assert value == pytest.approx(-psi(sk, dirac([0.5]), coarse_grid), abs=1e-8)


def test_integrate_chi():
    chi = constant_slope_chi((1.0,), (0.5,))
    mu = DiscreteMeasure(atoms=((0.0,), (2.0,)), probs=(0.5, 0.5))
    assert integrate_chi(chi, mu) == pytest.approx(0.5, abs=1e-12)
