import numpy as np
import pytest

from multispin.model import (
    AdmissibilityError,
    MixtureModel,
    SpinDistribution,
    bernoulli_spins,
    check_admissible,
    eval_xi,
    grad_xi,
    hessian_xi,
    model_from_dict,
    model_to_dict,
    perturb,
    strong_convexity_lower_bound,
    theta,
)


def test_eval_xi_quadratic_oracle(two_species):
    x = np.array([0.7, 1.3])
    assert eval_xi(two_species, x) == pytest.approx(0.49 + 0.91 + 1.69)


def test_grad_and_hessian_match_finite_differences(quartic):
    rng = np.random.Generator(np.random.Philox(key=7))
    h = 1e-6
    for _ in range(20):
        x = rng.uniform(0.1, 2.0, size=2)
        g = grad_xi(quartic, x)
        hess = hessian_xi(quartic, x)
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (eval_xi(quartic, x + e) - eval_xi(quartic, x - e)) / (2 * h)
            assert g[i] == pytest.approx(fd, abs=1e-5)
            fd_row = (grad_xi(quartic, x + e) - grad_xi(quartic, x - e)) / (2 * h)
            assert np.allclose(hess[i], fd_row, atol=1e-4)


def test_theta_quadratic_identity(two_species):
    # for xi = x.Ax/2, theta(x) = x.Ax/2 = xi(x)
    rng = np.random.Generator(np.random.Philox(key=1))
    for _ in range(10):
        x = rng.uniform(0.0, 2.0, size=2)
        assert theta(two_species, x) == pytest.approx(eval_xi(two_species, x), abs=1e-12)


def test_theta_nonnegative(quartic):
    rng = np.random.Generator(np.random.Philox(key=2))
    for _ in range(50):
        x = rng.uniform(0.0, 2.0, size=2)
        assert theta(quartic, x) >= -1e-12


def test_quadratic_parts_roundtrip(two_species):
    b, a = two_species.quadratic_parts()
    assert np.allclose(b, 0.0)
    assert np.allclose(a, [[2.0, 1.0], [1.0, 2.0]])
    x = np.array([0.4, 1.1])
    assert eval_xi(two_species, x) == pytest.approx(b @ x + 0.5 * x @ a @ x)


def test_constant_term_rejected():
    with pytest.raises(AdmissibilityError):
        MixtureModel(weights=(1.0,), coefficients=(((0,), 1.0),), spins=(bernoulli_spins(),))


def test_negative_coefficient_rejected():
    with pytest.raises(AdmissibilityError):
        MixtureModel(weights=(1.0,), coefficients=(((2,), -1.0),), spins=(bernoulli_spins(),))


def test_dirac_spins_rejected():
    with pytest.raises(ValueError):
        SpinDistribution(atoms=(1.0,), probs=(1.0,))
    with pytest.raises(ValueError):
        SpinDistribution(atoms=(1.0, 1.0), probs=(0.5, 0.5))


def test_bad_weights_rejected():
    with pytest.raises(ValueError):
        MixtureModel(weights=(0.5, 0.4), coefficients=(((2, 0), 1.0),), spins=(bernoulli_spins(),) * 2)


def test_negative_domain_rejected(sk):
    with pytest.raises(ValueError):
        eval_xi(sk, [-0.5])


def test_perturb_raises_convexity_floor(sk):
    before = strong_convexity_lower_bound(sk)
    after = strong_convexity_lower_bound(perturb(sk, 0.3))
    assert after == pytest.approx(before + 0.3, abs=1e-10)


def test_check_admissible(two_species, quartic):
    assert check_admissible(two_species, grid_resolution=5)["ok"]
    assert check_admissible(quartic, grid_resolution=5)["ok"]


def test_model_serialization_roundtrip(quartic):
    again = model_from_dict(model_to_dict(quartic))
    assert again == quartic


def test_degree_and_quadratic_flags(sk, quartic):
    assert sk.degree == 2 and sk.is_quadratic
    assert quartic.degree == 4 and not quartic.is_quadratic
