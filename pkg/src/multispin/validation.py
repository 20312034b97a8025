"""Structural inequality suite for the conjugate cost.

Covers the two-species rectangle (supermodularity) inequality, the
monotone-rearrangement transport inequality, its failure for three
species on an explicit quadratic model, and the conjugate-pair identity
checks used throughout.
"""

import numpy as np

from .measures import monotone_rearrange
from .model import MixtureModel, bernoulli_spins, eval_xi, grad_xi
from .transport import ensure_strongly_convex, grad_xi_star, t_xi_star, xi_star


def _require_grad0_zero(model):
    g0 = grad_xi(model, np.zeros(model.species_count))
    if np.max(np.abs(g0)) > 1e-12:
        raise ValueError("grad_xi(0) must vanish for the inequality suite")


def rectangle_inequality_scan(model, samples=10000, seed=0, box=(-1.0, 4.0), tol=1e-8):
    """xi*(a,b) + xi*(a',b') <= xi*(a',b) + xi*(a,b') on random rectangles.

    Requires two species and grad_xi(0) = 0; reports the worst slack
    (nonnegative means pass) and its witness rectangle.
    """
    if model.species_count != 2:
        raise ValueError("rectangle inequality is a two-species statement")
    _require_grad0_zero(model)
    rng = np.random.Generator(np.random.Philox(key=seed))
    lo, hi = box
    pts = rng.uniform(lo, hi, size=(samples, 4))
    a = np.minimum(pts[:, 0], pts[:, 1])
    a2 = np.maximum(pts[:, 0], pts[:, 1])
    b = np.minimum(pts[:, 2], pts[:, 3])
    b2 = np.maximum(pts[:, 2], pts[:, 3])
    worst = np.inf
    witness = None
    for i in range(samples):
        slack = (
            xi_star(model, [a2[i], b[i]])
            + xi_star(model, [a[i], b2[i]])
            - xi_star(model, [a[i], b[i]])
            - xi_star(model, [a2[i], b2[i]])
        )
        if slack < worst:
            worst = slack
            witness = {"a": float(a[i]), "a2": float(a2[i]), "b": float(b[i]), "b2": float(b2[i])}
    return {
        "samples": samples,
        "min_slack": float(worst),
        "witness": witness,
        "ok": bool(worst >= -tol),
    }


def rearrangement_inequality_check(model, mu, t=1.0, tol=1e-8):
    """int (t xi)* dmu_rearranged <= int (t xi)* dmu for two species."""
    if model.species_count != 2:
        raise ValueError("rearrangement inequality is a two-species statement")
    _require_grad0_zero(model)

    def integral(measure):
        atoms, probs = measure.arrays()
        return float(sum(p * t_xi_star(model, t, a) for a, p in zip(atoms, probs)))

    lhs = integral(monotone_rearrange(mu))
    rhs = integral(mu)
    return {
        "rearranged": lhs,
        "original": rhs,
        "slack": rhs - lhs,
        "ok": bool(lhs <= rhs + tol),
    }


def counterexample_model():
    """Quadratic three-species model xi(x) = x.Ax/2 with the coupling
    matrix whose inverse has a positive (1,3) entry."""
    a = np.array([[6.0, 2.0, 1.0], [2.0, 5.0, 3.0], [1.0, 3.0, 4.0]])
    coeffs = []
    for i in range(3):
        for j in range(i, 3):
            powers = [0, 0, 0]
            powers[i] += 1
            powers[j] += 1
            c = a[i, j] if i != j else a[i, i] / 2.0
            coeffs.append((tuple(powers), float(c)))
    spins = tuple(bernoulli_spins() for _ in range(3))
    return MixtureModel(weights=(1 / 3, 1 / 3, 1 / 3), coefficients=tuple(coeffs), spins=spins), a


def counterexample_d3(epsilons=(0.1, 0.2, 0.3), tol=1e-8):
    """Rearrangement inequality failure for three species.

    mu is uniform on {y0, y0 + eps e1, y0 + eps e3} with y0 = A(1,1,1);
    the rearranged integral exceeds the original by
    eps^2 (A^{-1})_{13} / 3 exactly while all points stay in the
    interior image of the gradient.
    """
    from .measures import DiscreteMeasure

    model, a = counterexample_model()
    y0 = a @ np.ones(3)
    a_inv_13 = float(np.linalg.inv(a)[0, 2])
    rows = []
    for eps in epsilons:
        points = [y0, y0 + eps * np.eye(3)[0], y0 + eps * np.eye(3)[2]]
        for p in points:
            x = grad_xi_star(model, p)
            if np.max(np.abs(grad_xi(model, x) - p)) > 1e-7:
                raise ValueError(f"eps={eps}: point {p} left the interior image region")
        mu = DiscreteMeasure(atoms=tuple(map(tuple, points)), probs=(1 / 3, 1 / 3, 1 / 3))

        def integral(measure):
            atoms, probs = measure.arrays()
            return float(sum(q * xi_star(model, y) for y, q in zip(atoms, probs)))

        gap = integral(monotone_rearrange(mu)) - integral(mu)
        predicted = eps**2 * a_inv_13 / 3.0
        rows.append(
            {
                "eps": float(eps),
                "gap": gap,
                "predicted": predicted,
                "residual": abs(gap - predicted),
                "ok": bool(gap > 0 and abs(gap - predicted) <= max(tol, 0.01 * predicted)),
            }
        )
    gaps = np.array([r["gap"] for r in rows])
    eps_arr = np.array([r["eps"] for r in rows])
    slope = float(np.polyfit(np.log(eps_arr), np.log(gaps), 1)[0])
    return {
        "matrix_inverse_13": a_inv_13,
        "xi_star_y0": xi_star(counterexample_model()[0], y0),
        "rows": rows,
        "loglog_slope": slope,
        "ok": bool(all(r["ok"] for r in rows) and abs(slope - 2.0) <= 0.01),
    }


def legendre_identity_suite(model, samples=1000, seed=0, tol=1e-6):
    """Five conjugate-pair identities on sampled x in [0,2]^D, y in [-1,4]^D.

    1. xi*(grad_xi(x)) = x . grad_xi(x) - xi(x)
    2. grad_xi_star(grad_xi(x)) = x
    3. grad_xi(grad_xi_star(y)) >= y  (KKT stationarity, componentwise)
    4. grad_xi_star(y) . (grad_xi(grad_xi_star(y)) - y) = 0  (complementarity)
    5. xi*(grad_xi(grad_xi_star(y))) = xi*(y)
    """
    model, applied_reg = ensure_strongly_convex(model)
    d = model.species_count
    rng = np.random.Generator(np.random.Philox(key=seed))
    xs = rng.uniform(0.0, 2.0, size=(samples, d))
    ys = rng.uniform(-1.0, 4.0, size=(samples, d))
    res = np.zeros(5)
    witness = [None] * 5
    for x, y in zip(xs, ys):
        g = grad_xi(model, x)
        r1 = abs(xi_star(model, g) - (x @ g - eval_xi(model, x)))
        r2 = float(np.max(np.abs(grad_xi_star(model, g) - x)))
        xs_y = grad_xi_star(model, y)
        gy = grad_xi(model, xs_y)
        r3 = float(max(np.max(y - gy), 0.0))
        r4 = abs(float(xs_y @ (gy - y)))
        r5 = abs(xi_star(model, gy) - xi_star(model, y))
        for i, r in enumerate((r1, r2, r3, r4, r5)):
            if r > res[i]:
                res[i] = r
                witness[i] = {"x": x.tolist(), "y": y.tolist()}
    return {
        "samples": samples,
        "max_residuals": res.tolist(),
        "witnesses": witness,
        "perturbation": applied_reg,
        "ok": bool(res.max() <= tol),
    }
