"""Hopf-Lax semigroup S_t chi and its structural properties.

Two equivalent formulas are implemented:

    St1:  S_t chi(x) = sup_p { p.x + t xi(p) - chi*(p) }
    St2:  S_t chi(x) = sup_y { chi(y) - (t xi)*(y - x) },  y >= x - R_+^D

For separable piecewise-linear chi the conjugate chi* is piecewise
linear on a product of slope-breakpoint cells, and p.x + t xi(p) is
convex on each cell, so the supremum in St1 is attained at a cell
corner.  St1 is therefore evaluated exactly (up to rounding) by
enumerating corners; St2 serves as a cross-check via a grid scan with
local polish over y = x + t grad_xi(p), p in [0,1]^D.
"""

import numpy as np
from scipy.optimize import minimize

from .model import eval_xi, grad_xi, theta

_CORNER_CHUNK = 4000


def _xi_on_points(model, pts):
    pts = np.asarray(pts, dtype=float)
    if model._coeffs.size == 0:
        return np.zeros(pts.shape[0])
    mono = np.prod(pts[:, None, :] ** model._powers[None, :, :], axis=2)
    return mono @ model._coeffs


def _curve_conjugate_data(knots, values):
    """Breakpoint slopes and the conjugate's (point, value) samples.

    For a convex piecewise-linear curve the 1-D conjugate at slope level
    s equals t_i s - v_i at the knot i where the slope crosses s.
    """
    knots = np.asarray(knots, dtype=float)
    values = np.asarray(values, dtype=float)
    if knots.size < 2:
        return np.array([0.0]), np.array([0.0])
    slopes = np.diff(values) / np.diff(knots)
    levels = np.unique(np.concatenate([[0.0], np.round(slopes, 14)]))
    conj = np.empty_like(levels)
    for i, s in enumerate(levels):
        cand = knots * s - values
        conj[i] = cand.max()
    return levels, conj


def chi_conjugate(chi, p):
    """chi*(p) = sup_{x >= 0} { p.x - chi(x) }; +inf past the tail slopes.

    Separability gives chi*(p) = sum_d lambda_d chi_d*(p_d / lambda_d)
    with each term an exact piecewise-linear conjugate.
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    total = 0.0
    for d, lam in enumerate(chi.weights):
        knots, values = map(np.asarray, chi.curves[d])
        y = p[d] / lam
        if knots.size < 2:
            tail = 0.0
        else:
            slopes = np.diff(values) / np.diff(knots)
            tail = slopes[-1]
        if y > tail + 1e-12:
            return np.inf
        cand = knots * y - values
        total += lam * float(cand.max())
    return total


def _corner_grid(model, chi, t):
    """All cell corners p with the precomputed offset G(p) = t xi(p) - chi*(p)."""
    d = chi.dim
    axes = []
    axis_conj = []
    for i, lam in enumerate(chi.weights):
        levels, conj = _curve_conjugate_data(*chi.curves[i])
        axes.append(lam * levels)
        axis_conj.append(lam * conj)
    mesh = np.meshgrid(*axes, indexing="ij")
    corners = np.stack([m.ravel() for m in mesh], axis=1)
    conj_mesh = np.meshgrid(*axis_conj, indexing="ij")
    conj_total = sum(c.ravel() for c in conj_mesh)
    offsets = t * _xi_on_points(model, corners) - conj_total
    return corners, offsets


def s_t_chi_values(model, chi, t, points):
    """Exact St1 values at an (n, D) array of points."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(1, -1)
    if t == 0:
        return np.array([chi.value(x) for x in points])
    corners, offsets = _corner_grid(model, chi, t)
    out = np.empty(points.shape[0])
    for lo in range(0, points.shape[0], _CORNER_CHUNK):
        hi = min(lo + _CORNER_CHUNK, points.shape[0])
        out[lo:hi] = (points[lo:hi] @ corners.T + offsets[None, :]).max(axis=1)
    return out


def _st2_value(model, chi, t, x, grid_points=33):
    """Cross-check value via St2 restricted to y = x + t grad_xi([0,1]^D)."""
    if t == 0:
        return chi.value(x)
    d = chi.dim
    n = grid_points if d <= 3 else 17
    axes = [np.linspace(0.0, 1.0, n)] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    ps = np.stack([m.ravel() for m in mesh], axis=1)

    def objective(p):
        p = np.clip(p, 0.0, 1.0)
        y = x + t * grad_xi(model, p)
        return chi.value(y) - t * theta(model, p)

    vals = np.array([objective(p) for p in ps])
    best = int(np.argmax(vals))
    res = minimize(
        lambda p: -objective(p),
        ps[best],
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 2000},
    )
    return max(float(vals[best]), -float(res.fun))


def s_t_chi(model, chi, t, x, cross_check=True, tol=1e-4):
    """Evaluate S_t chi at x; returns (value, report).

    The report carries the St2 cross-check value and the discrepancy;
    a discrepancy above ``tol`` marks a resolution failure.
    """
    chi.validate()
    x = np.atleast_1d(np.asarray(x, dtype=float))
    st1 = float(s_t_chi_values(model, chi, t, x.reshape(1, -1))[0])
    report = {"st1": st1, "st2": None, "discrepancy": None, "ok": True}
    if cross_check:
        st2 = _st2_value(model, chi, t, x)
        report["st2"] = st2
        report["discrepancy"] = abs(st1 - st2)
        report["ok"] = report["discrepancy"] <= tol
    return st1, report


def integrate_s_t_chi(model, chi, t, mu):
    """int S_t chi dmu for an atomic measure."""
    atoms, probs = mu.arrays()
    return float(probs @ s_t_chi_values(model, chi, t, atoms))


def check_cone_convexity(model, chi, t, samples=10000, seed=0, box=2.0):
    """Second-difference inequality along the positive cone:

        S(x+y+z) - S(x+z) >= S(x+y) - S(x)

    on random triples; reports the worst slack and its witness.
    """
    chi.validate()
    d = chi.dim
    rng = np.random.Generator(np.random.Philox(key=seed))
    x = rng.uniform(0.0, box, size=(samples, d))
    y = rng.uniform(0.0, box, size=(samples, d))
    z = rng.uniform(0.0, box, size=(samples, d))
    stacked = np.concatenate([x + y + z, x + z, x + y, x], axis=0)
    vals = s_t_chi_values(model, chi, t, stacked)
    s_xyz, s_xz, s_xy, s_x = np.split(vals, 4)
    slack = (s_xyz - s_xz) - (s_xy - s_x)
    worst = int(np.argmin(slack))
    return {
        "samples": samples,
        "min_slack": float(slack[worst]),
        "witness": {"x": x[worst].tolist(), "y": y[worst].tolist(), "z": z[worst].tolist()},
        "ok": bool(slack[worst] >= -1e-8),
    }


def xi_sup_on_unit_ball(model, grid_points=65):
    """C = sup { xi(z) : |z| <= 1, z in R_+^D }; attained on the sphere
    since xi is increasing along rays."""
    d = model.species_count
    if d == 1:
        return eval_xi(model, [1.0])
    n = grid_points if d <= 3 else 17
    axes = [np.linspace(0.0, 1.0, n)] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    norms = np.linalg.norm(pts, axis=1)
    pts = pts[norms > 1e-12] / norms[norms > 1e-12, None]
    vals = _xi_on_points(model, pts)
    best = int(np.argmax(vals))

    def objective(w):
        w = np.abs(w)
        nrm = np.linalg.norm(w)
        if nrm < 1e-12:
            return 0.0
        return -eval_xi(model, w / nrm)

    res = minimize(objective, pts[best], method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14})
    return max(float(vals[best]), -float(res.fun))


def lipschitz_report(model, chi, t_pairs, x_pairs, tol=1e-8):
    """Check |S_t chi(x) - S_t' chi(x')| <= C |t-t'| + |x-x'| + tol."""
    c = xi_sup_on_unit_ball(model)
    worst = np.inf
    witness = None
    for (t0, t1), (x0, x1) in zip(t_pairs, x_pairs):
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        v0 = float(s_t_chi_values(model, chi, t0, x0.reshape(1, -1))[0])
        v1 = float(s_t_chi_values(model, chi, t1, x1.reshape(1, -1))[0])
        bound = c * abs(t1 - t0) + float(np.linalg.norm(x1 - x0))
        slack = bound + tol - abs(v1 - v0)
        if slack < worst:
            worst = slack
            witness = {"t": [t0, t1], "x": [x0.tolist(), x1.tolist()], "lhs": abs(v1 - v0), "bound": bound}
    return {"constant": c, "min_slack": float(worst), "witness": witness, "ok": bool(worst >= 0.0)}
