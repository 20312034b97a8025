"""Multi-species functionals assembled from per-species PDE solves.

psi(nu) = sum_d lambda_d psi_d(nu_d) depends on nu only through its
marginals; its derivative at nu is the separable function
chi(x) = sum_d lambda_d chi_d(x_d) with each chi_d increasing, convex,
1-Lipschitz and vanishing at 0.
"""

from dataclasses import dataclass

import numpy as np

from .measures import DiscreteMeasure, marginals, path_to_measure
from .model import grad_xi, theta
from .parisi_pde import ChiCurve, GridSpec, chi_d, psi_d


class ChiClassError(ValueError):
    pass


@dataclass(frozen=True)
class ChiFunction:
    """Separable member of the derivative class: piecewise-linear
    per-species curves weighted by lambda."""

    weights: tuple
    curves: tuple  # per species: (knots tuple, values tuple)

    @property
    def dim(self):
        return len(self.weights)

    def curve(self, d):
        knots, values = self.curves[d]
        return ChiCurve(knots=np.asarray(knots), values=np.asarray(values))

    def value_d(self, d, x):
        return self.curve(d)(x)

    def value(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return float(sum(w * self.value_d(d, x[d]) for d, w in enumerate(self.weights)))

    def slope_d(self, d, x):
        """Right slope of chi_d at x (tail slope past the last knot)."""
        knots, values = self.curves[d]
        knots = np.asarray(knots)
        values = np.asarray(values)
        if knots.size < 2:
            return 0.0
        k = int(np.searchsorted(knots, x, side="right")) - 1
        k = max(0, min(k, knots.size - 2))
        return float((values[k + 1] - values[k]) / (knots[k + 1] - knots[k]))

    def validate(self, tol=1e-8):
        for d in range(self.dim):
            knots, values = map(np.asarray, self.curves[d])
            if abs(values[0]) > tol or knots[0] != 0.0:
                raise ChiClassError(f"chi_{d}(0) != 0")
            if knots.size < 2:
                continue
            slopes = np.diff(values) / np.diff(knots)
            if slopes.min() < -tol or slopes.max() > 1.0 + tol:
                raise ChiClassError(f"chi_{d} slopes outside [0, 1]")
            if np.diff(slopes).size and np.diff(slopes).min() < -tol:
                raise ChiClassError(f"chi_{d} not convex")
        return True

    def membership_report(self):
        """Slack summary for the class constraints (nonnegative = pass)."""
        worst = {"origin": 0.0, "slope_low": np.inf, "slope_high": np.inf, "convexity": np.inf}
        for d in range(self.dim):
            knots, values = map(np.asarray, self.curves[d])
            worst["origin"] = max(worst["origin"], abs(float(values[0])))
            if knots.size < 2:
                continue
            slopes = np.diff(values) / np.diff(knots)
            worst["slope_low"] = min(worst["slope_low"], float(slopes.min()))
            worst["slope_high"] = min(worst["slope_high"], float(1.0 - slopes.max()))
            if slopes.size > 1:
                worst["convexity"] = min(worst["convexity"], float(np.diff(slopes).min()))
        return worst

    def to_dict(self):
        return {
            "weights": list(self.weights),
            "curves": [{"knots": list(k), "values": list(v)} for k, v in self.curves],
        }

    @staticmethod
    def from_dict(data):
        return ChiFunction(
            weights=tuple(data["weights"]),
            curves=tuple((tuple(c["knots"]), tuple(c["values"])) for c in data["curves"]),
        )


def constant_slope_chi(weights, slopes, horizon=10.0):
    """Linear curves chi_d(x) = s_d x, mostly for tests and synthetic inputs."""
    curves = tuple(((0.0, horizon), (0.0, s * horizon)) for s in slopes)
    return ChiFunction(weights=tuple(weights), curves=curves)


def psi(model, nu, grid=GridSpec()):
    """psi(nu) = sum_d lambda_d psi_d(nu_d) over the marginals of nu."""
    vals = [psi_d(nu_marg, model.spins[d], grid) for d, nu_marg in enumerate(marginals(nu))]
    return float(np.dot(model.weights, vals))


def psi_derivative(model, nu, grid=GridSpec(), horizon=None):
    """Derivative of psi at nu as a ChiFunction.

    ``horizon`` (scalar or per-species) extends the curves past the
    marginal supports; beyond its knots each curve continues with its
    last slope.
    """
    d = model.species_count
    if horizon is None:
        horizons = [None] * d
    else:
        horizons = list(np.broadcast_to(np.asarray(horizon, dtype=float), (d,)))
    curves = []
    for i, nu_marg in enumerate(marginals(nu)):
        curve = chi_d(nu_marg, model.spins[i], grid, t_end=horizons[i])
        curves.append((tuple(curve.knots), tuple(curve.values)))
    chi = ChiFunction(weights=model.weights, curves=tuple(curves))
    chi.validate()
    return chi


def integrate_chi(chi, nu):
    atoms, probs = nu.arrays()
    return float(sum(p * chi.value(a) for a, p in zip(atoms, probs)))


def psi_star(model, chi, search_atoms, grid=GridSpec(), warm_starts=(), max_iter=200, tol=1e-7, curve_substeps=100):
    """psi_*(chi) = inf_nu { int chi dnu - psi(nu) }.

    Minimized over weights on the fixed atom list ``search_atoms`` by
    Frank-Wolfe (the objective is convex in the weights).  Measures in
    ``warm_starts`` whose atoms lie in the list seed the iteration.

    Returns (value, argmin DiscreteMeasure).
    """
    chi.validate()
    atoms = np.asarray(search_atoms, dtype=float)
    if atoms.ndim == 1:
        atoms = atoms.reshape(-1, 1)
    n = atoms.shape[0]
    chi_vals = np.array([chi.value(a) for a in atoms])
    horizon = atoms.max(axis=0)  # gradient curves must cover every candidate atom
    from dataclasses import replace

    # fine knots keep the gradient curves consistent with the psi values
    cgrid = replace(grid, time_substeps=max(grid.time_substeps, curve_substeps))

    def measure_from(w):
        keep = w > 1e-13
        return DiscreteMeasure(atoms=tuple(map(tuple, atoms[keep])), probs=tuple(w[keep]))

    def objective_and_grad(w):
        nu = measure_from(w)
        dchi = psi_derivative(model, nu, cgrid, horizon=horizon)
        f = float(w @ chi_vals) - psi(model, nu, grid)
        # d/dw_j of -psi is -chi_nu(y_j) by the derivative formula
        g = chi_vals - np.array([dchi.value(a) for a in atoms])
        return f, g

    starts = []
    for nu0 in warm_starts:
        w0 = np.zeros(n)
        a0, p0 = nu0.arrays()
        ok = True
        for a, p in zip(a0, p0):
            dist = np.max(np.abs(atoms - a[None, :]), axis=1)
            j = int(np.argmin(dist))
            if dist[j] > 1e-9:
                ok = False
                break
            w0[j] += p
        if ok:
            starts.append(w0)
    if not starts:
        # convex objective: a single start suffices for convergence
        starts.append(np.full(n, 1.0 / n))
    best_val, best_w = np.inf, None
    for w in starts:
        upper = np.inf
        for k in range(max_iter):
            f, g = objective_and_grad(w)
            j = int(np.argmin(g))
            gap = float(w @ g - g[j])
            upper = min(upper, f)
            if gap <= tol:
                break
            step = min(1.0, 2.0 / (k + 2.0))
            # backtracking on the actual objective
            direction = -w.copy()
            direction[j] += 1.0
            accepted = False
            while step > 1e-11:
                wn = w + step * direction
                fn = float(wn @ chi_vals) - psi(model, measure_from(wn), grid)
                if fn <= f - 0.1 * step * gap:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break
            w = wn
        f_final = float(w @ chi_vals) - psi(model, measure_from(w), grid)
        if f_final < best_val:
            best_val, best_w = f_final, w
    return best_val, measure_from(best_w)


def primal_integrand(model, t, q_path, p_path, grid=GridSpec()):
    """psi(L_{q + t grad_xi(p)}) - t sum_k w_k theta(p_k) on a common level grid."""
    levels_q, values_q = q_path.arrays()
    levels_p, values_p = p_path.arrays()
    levels = np.unique(np.concatenate([levels_q, levels_p]))

    def resample(src_levels, src_values):
        idx = np.searchsorted(src_levels, levels[:-1], side="right") - 1
        return src_values[np.clip(idx, 0, src_values.shape[0] - 1)]

    q_vals = resample(levels_q, values_q)
    p_vals = resample(levels_p, values_p)
    weights = np.diff(levels)
    shifted = q_vals + t * np.array([grad_xi(model, p) for p in p_vals])
    nu = DiscreteMeasure(atoms=tuple(map(tuple, shifted)), probs=tuple(weights))
    theta_term = t * float(sum(w * theta(model, p) for w, p in zip(weights, p_vals)))
    return psi(model, nu, grid) - theta_term
