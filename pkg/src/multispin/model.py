"""Mixture polynomial, species weights and spin distributions.

A model instance bundles the mixture function

    xi(x) = sum_k c_k prod_d x_d^{k_d},   c_k >= 0, xi(0) = 0,

the species weights lambda in (0,1)^D summing to one, and one spin
distribution per species supported in [-1, 1].
"""

import json
from dataclasses import dataclass, field

import numpy as np

MAX_SPECIES = 4


class AdmissibilityError(ValueError):
    pass


@dataclass(frozen=True)
class SpinDistribution:
    """Finite spin distribution on [-1, 1]; must not be a Dirac mass."""

    atoms: tuple
    probs: tuple

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if atoms.ndim != 1 or atoms.shape != probs.shape:
            raise ValueError("atoms and probs must be 1-D arrays of equal length")
        if np.any(np.abs(atoms) > 1.0 + 1e-12):
            raise ValueError("spin support must lie in [-1, 1]")
        if np.any(probs < 0):
            raise ValueError("negative spin probability")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("spin probabilities must sum to 1")
        support = atoms[probs > 0]
        if np.unique(support).size < 2:
            raise ValueError("spin distribution must not be a Dirac mass")
        object.__setattr__(self, "atoms", tuple(float(a) for a in atoms))
        object.__setattr__(self, "probs", tuple(float(p) for p in probs))

    def arrays(self):
        return np.asarray(self.atoms), np.asarray(self.probs)


def bernoulli_spins():
    """Symmetric two-point spins at +-1."""
    return SpinDistribution(atoms=(-1.0, 1.0), probs=(0.5, 0.5))


@dataclass(frozen=True)
class MixtureModel:
    """Mixture polynomial xi with weights and per-species spins.

    ``coefficients`` maps each multi-index (a tuple of D nonnegative
    integers with at least one positive entry) to a nonnegative
    coefficient.
    """

    weights: tuple
    coefficients: tuple  # tuple of (powers tuple, coeff), sorted for determinism
    spins: tuple
    _powers: np.ndarray = field(init=False, repr=False, compare=False)
    _coeffs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        d = weights.size
        if d < 1 or d > MAX_SPECIES:
            raise ValueError(f"species count must be in [1, {MAX_SPECIES}]")
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        terms = []
        for powers, coeff in self.coefficients:
            powers = tuple(int(k) for k in powers)
            if len(powers) != d or any(k < 0 for k in powers):
                raise ValueError(f"bad multi-index {powers}")
            if sum(powers) == 0:
                raise AdmissibilityError("constant term not allowed: xi(0) must be 0")
            if coeff < 0:
                raise AdmissibilityError(f"negative coefficient for {powers}")
            if coeff > 0:
                terms.append((powers, float(coeff)))
        terms.sort()
        if len(self.spins) != d:
            raise ValueError("need one spin distribution per species")
        object.__setattr__(self, "weights", tuple(float(w) for w in weights))
        object.__setattr__(self, "coefficients", tuple(terms))
        object.__setattr__(self, "spins", tuple(self.spins))
        object.__setattr__(
            self, "_powers", np.array([t[0] for t in terms], dtype=float).reshape(len(terms), d)
        )
        object.__setattr__(self, "_coeffs", np.array([t[1] for t in terms], dtype=float))

    @property
    def species_count(self):
        return len(self.weights)

    @property
    def degree(self):
        if self._powers.size == 0:
            return 0
        return int(self._powers.sum(axis=1).max())

    @property
    def is_quadratic(self):
        return self.degree <= 2

    def quadratic_parts(self):
        """Return (b, A) with xi(x) = b.x + x.Ax/2 for quadratic models."""
        if not self.is_quadratic:
            raise ValueError("model is not quadratic")
        d = self.species_count
        b = np.zeros(d)
        a = np.zeros((d, d))
        for powers, coeff in self.coefficients:
            deg = sum(powers)
            idx = [i for i, k in enumerate(powers) for _ in range(k)]
            if deg == 1:
                b[idx[0]] += coeff
            else:
                i, j = idx
                if i == j:
                    a[i, i] += 2.0 * coeff
                else:
                    a[i, j] += coeff
                    a[j, i] += coeff
        return b, a


def _check_domain(x, d):
    x = np.asarray(x, dtype=float).reshape(d)
    if np.any(x < -1e-14):
        raise ValueError(f"point {x} has a negative coordinate")
    return np.maximum(x, 0.0)


def eval_xi(model, x):
    """Evaluate xi(x) for x in the closed positive orthant."""
    x = _check_domain(x, model.species_count)
    if model._coeffs.size == 0:
        return 0.0
    with np.errstate(divide="ignore"):
        monomials = np.prod(np.power(x[None, :], model._powers), axis=1)
    return float(model._coeffs @ monomials)


def grad_xi(model, x):
    """Analytic gradient of xi; componentwise nonnegative on R_+^D."""
    x = _check_domain(x, model.species_count)
    d = model.species_count
    out = np.zeros(d)
    if model._coeffs.size == 0:
        return out
    for powers, coeff in model.coefficients:
        for i, k in enumerate(powers):
            if k == 0:
                continue
            term = coeff * k
            for j, kj in enumerate(powers):
                e = kj - 1 if j == i else kj
                if e > 0:
                    term *= x[j] ** e
                elif e < 0:
                    term = 0.0  # unreachable: e < 0 only when kj = 0 and j = i
            out[i] += term
    return out


def hessian_xi(model, x):
    """Analytic Hessian of xi at x in R_+^D."""
    x = _check_domain(x, model.species_count)
    d = model.species_count
    h = np.zeros((d, d))
    for powers, coeff in model.coefficients:
        for i in range(d):
            for j in range(d):
                p = list(powers)
                factor = coeff * p[i]
                if factor == 0:
                    continue
                p[i] -= 1
                factor *= p[j]
                if factor == 0:
                    continue
                p[j] -= 1
                term = factor
                for m, km in enumerate(p):
                    if km > 0:
                        term *= x[m] ** km
                    elif km < 0:
                        term = 0.0
                h[i, j] += term
    return h


def theta(model, x):
    """theta(x) = x . grad xi(x) - xi(x); nonnegative on R_+^D."""
    x = _check_domain(x, model.species_count)
    return float(x @ grad_xi(model, x) - eval_xi(model, x))


def perturb(model, lambda_reg):
    """Add lambda_reg/2 * |x|^2 to xi, giving strong convexity modulus >= lambda_reg."""
    if lambda_reg < 0:
        raise ValueError("perturbation strength must be nonnegative")
    if lambda_reg == 0:
        return model
    d = model.species_count
    coeffs = {powers: c for powers, c in model.coefficients}
    for i in range(d):
        key = tuple(2 if j == i else 0 for j in range(d))
        coeffs[key] = coeffs.get(key, 0.0) + lambda_reg / 2.0
    return MixtureModel(
        weights=model.weights,
        coefficients=tuple(sorted(coeffs.items())),
        spins=model.spins,
    )


def strong_convexity_lower_bound(model, grid_resolution=9):
    """Smallest Hessian eigenvalue of xi over a grid in [0,1]^D."""
    d = model.species_count
    pts = np.linspace(0.0, 1.0, grid_resolution)
    worst = np.inf
    for idx in np.ndindex(*([grid_resolution] * d)):
        x = pts[list(idx)]
        eigs = np.linalg.eigvalsh(hessian_xi(model, x))
        worst = min(worst, float(eigs[0]))
    return worst


def check_admissible(model, grid_resolution=21, tol=1e-10):
    """Verify nonnegative coefficients and sampled-Hessian convexity on [0,1]^D.

    Returns a report dict; ``ok`` is False when a sampled Hessian has an
    eigenvalue below -tol (the witnessing point is recorded).
    """
    report = {
        "coefficients_nonnegative": all(c >= 0 for _, c in model.coefficients),
        "xi_zero_at_origin": True,  # enforced at construction
        "convex": True,
        "witness": None,
        "min_eigenvalue": None,
    }
    d = model.species_count
    pts = np.linspace(0.0, 1.0, grid_resolution)
    worst = np.inf
    witness = None
    for idx in np.ndindex(*([grid_resolution] * d)):
        x = pts[list(idx)]
        eig = float(np.linalg.eigvalsh(hessian_xi(model, x))[0])
        if eig < worst:
            worst = eig
            witness = x.tolist()
    report["min_eigenvalue"] = worst
    if worst < -tol:
        report["convex"] = False
        report["witness"] = witness
    report["ok"] = report["coefficients_nonnegative"] and report["convex"]
    return report


def model_to_dict(model):
    return {
        "D": model.species_count,
        "weights": list(model.weights),
        "xi": [{"powers": list(p), "coeff": c} for p, c in model.coefficients],
        "spins": [{"atoms": list(s.atoms), "probs": list(s.probs)} for s in model.spins],
    }


def model_from_dict(data):
    d = int(data["D"])
    coeffs = tuple((tuple(term["powers"]), float(term["coeff"])) for term in data["xi"])
    spins = tuple(
        SpinDistribution(atoms=tuple(s["atoms"]), probs=tuple(s["probs"]))
        for s in data["spins"]
    )
    weights = tuple(float(w) for w in data["weights"])
    if len(weights) != d:
        raise ValueError("weights length disagrees with D")
    return MixtureModel(weights=weights, coefficients=coeffs, spins=spins)


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")
