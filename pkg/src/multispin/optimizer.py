"""Maximization of the Parisi functionals and duality reports.

Two complementary parameterizations are optimized:

* monotone route: atom positions of an increasing step path move under
  projected gradient ascent (weights fixed by the level grid);
* relaxed route: weights on a fixed support grid move under Frank-Wolfe
  (the objective is concave in the weights).

A duality report combines both with the Hopf-dual value
g = int S_t chibar dmu - psi_*(chibar) evaluated at the derivative
chibar of psi at the relaxed optimizer.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .functionals import integrate_chi, psi, psi_derivative, psi_star
from .hopflax import integrate_s_t_chi, s_t_chi_values
from .measures import (
    DiscreteMeasure,
    MonotonePath,
    monotone_rearrange,
    path_to_measure,
    w1,
)
from .model import grad_xi
from .parisi_pde import GridSpec, _isotonic_increasing
from .transport import (
    BIG_COST,
    ensure_strongly_convex,
    grad_t_xi_star,
    t_xi_star,
    transportation_simplex,
)


def _subseed(seed, *indices):
    """Deterministic sub-stream key for a counter-based generator."""
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(indices)).generate_state(1)[0]


def support_grid(model, t, mu, per_coord=17):
    """Product grid covering supp(mu) + t grad_xi([0,1]^D)."""
    atoms, _ = mu.arrays()
    lo = atoms.min(axis=0) + t * grad_xi(model, np.zeros(model.species_count))
    hi = atoms.max(axis=0) + t * grad_xi(model, np.ones(model.species_count))
    hi = np.maximum(hi, lo + 1e-9)
    axes = [np.linspace(lo[d], hi[d], per_coord) for d in range(model.species_count)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _cost_matrix(model, t, mu_atoms, grid_atoms):
    m, n = mu_atoms.shape[0], grid_atoms.shape[0]
    cost = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            c = t_xi_star(model, t, grid_atoms[j] - mu_atoms[i])
            cost[i, j] = BIG_COST if np.isinf(c) else c
    return cost


def maximize_relaxed(
    model,
    t,
    mu,
    grid=GridSpec(),
    seed=0,
    support=None,
    per_coord=17,
    max_iter=250,
    fw_tol=1e-4,
    warm_start=None,
    curve_substeps=100,
):
    """Maximize psi(nu) - T_t(mu, nu) over weights on a fixed support grid.

    Frank-Wolfe with backtracking line search; the supergradient
    combines the psi-derivative values with the LP column potentials of
    the transport cost.  Returns (value, nu_hat, info).
    """
    if t == 0:
        # T_0(mu, nu) >= 0 with equality at nu = mu, and moving mass
        # downward can only decrease psi (nonnegative chi slopes)
        return psi(model, mu, grid), mu, {"iterations": 0, "fw_gap": 0.0}
    atoms_mu, probs_mu = mu.arrays()
    grid_atoms = np.asarray(support, dtype=float) if support is not None else support_grid(model, t, mu, per_coord)
    n = grid_atoms.shape[0]
    cost = _cost_matrix(model, t, atoms_mu, grid_atoms)
    horizon = grid_atoms.max(axis=0)
    # fine time knots keep the piecewise-linear chi curves (the gradient)
    # consistent with the psi values (the objective); chord overshoot of
    # the convex curves otherwise inflates the gradient systematically
    cgrid = replace(grid, time_substeps=max(grid.time_substeps, curve_substeps))

    def measure_from(w):
        keep = w > 1e-13
        return DiscreteMeasure(atoms=tuple(map(tuple, grid_atoms[keep])), probs=tuple(w[keep]))

    def transport_value(w):
        value, _, _, v = transportation_simplex(probs_mu, w, cost)
        return value, v

    def objective(w):
        tv, _ = transport_value(w)
        return psi(model, measure_from(w), grid) - tv

    # start from the warm-start measure snapped to the grid, else from mu
    # pushed forward by the mid-box shift
    w = np.zeros(n)
    if warm_start is not None:
        a0, p0 = warm_start.arrays()
    else:
        shift = t * grad_xi(model, 0.5 * np.ones(model.species_count))
        a0 = atoms_mu + shift[None, :]
        p0 = probs_mu
    for a, p in zip(a0, p0):
        j = int(np.argmin(np.max(np.abs(grid_atoms - a[None, :]), axis=1)))
        w[j] += p
    f = objective(w)
    gap = np.inf
    iterations = 0
    for k in range(max_iter):
        iterations = k + 1
        nu = measure_from(w)
        chi = psi_derivative(model, nu, cgrid, horizon=horizon)
        tv, potentials = transport_value(w)
        g = np.array([chi.value(y) for y in grid_atoms]) - potentials
        j = int(np.argmax(g))
        gap = float(g[j] - w @ g)
        if gap <= fw_tol:
            break
        # pairwise step: shift weight from the worst active atom to the
        # best atom; avoids the zigzag stall of plain vertex steps
        active = np.where(w > 1e-13)[0]
        worst = int(active[np.argmin(g[active])])
        pair_gap = float(g[j] - g[worst])
        direction = np.zeros(n)
        direction[j] += 1.0
        direction[worst] -= 1.0
        step_max = float(w[worst])
        step = step_max
        accepted = False
        while step > 1e-13 * max(step_max, 1.0):
            fn = objective(w + step * direction)
            if fn >= f + 0.1 * step * pair_gap:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        w = np.maximum(w + step * direction, 0.0)
        w /= w.sum()
        f = fn
    return f, measure_from(w), {"iterations": iterations, "fw_gap": float(gap)}


def _monotone_objective(model, t, base_values, delta, level_weights, grid):
    shifted = base_values + delta
    nu = DiscreteMeasure(atoms=tuple(map(tuple, shifted)), probs=tuple(level_weights))
    cost = sum(
        wk * t_xi_star(model, t, qk) for wk, qk in zip(level_weights, delta)
    )
    return psi(model, nu, grid) - float(cost), nu


def maximize_monotone(
    model,
    t,
    mu_path,
    k_atoms=2,
    grid=GridSpec(),
    seed=0,
    restarts=1,
    max_iter=200,
    gtol=1e-7,
    curve_substeps=100,
):
    """Maximize psi(L_{q+q'}) - sum_k w_k (t xi)*(q'_k) over increasing q' >= 0.

    The level grid of mu_path is refined to at least ``k_atoms`` pieces
    and kept fixed; projected gradient ascent moves the increments q',
    with per-coordinate isotonic projection onto the monotone cone.
    Returns (value, MonotonePath of q + q', info).
    """
    d = model.species_count
    path = mu_path.refine(k_atoms)
    levels, base_values = path.arrays()
    level_weights = np.diff(levels)
    n_rows = base_values.shape[0]
    mu = path_to_measure(mu_path)
    if t == 0:
        # (0 xi)* forces q' = 0: the only nonnegative increasing feasible point
        return psi(model, mu, grid), path, {"restarts": restarts, "converged": True}
    work_model, applied_reg = ensure_strongly_convex(model)
    cgrid = replace(grid, time_substeps=max(grid.time_substeps, curve_substeps))

    def project(delta):
        out = np.empty_like(delta)
        for j in range(d):
            out[:, j] = np.maximum(_isotonic_increasing(delta[:, j], level_weights), 0.0)
        return out

    def gradient(delta, nu):
        shifted = base_values + delta
        # the centered slopes below only probe the curves just past the
        # current atoms, so a short horizon keeps the solve cheap
        chi = psi_derivative(model, nu, cgrid, horizon=shifted.max(axis=0) + 0.01)
        g = np.empty_like(delta)
        h = 1e-4
        for k in range(n_rows):
            for j in range(d):
                x = shifted[k, j]
                c = chi.curve(j)
                dpsi = (c(x + h) - c(max(x - h, 0.0))) / (h + min(x, h))
                g[k, j] = level_weights[k] * model.weights[j] * dpsi
            g[k] -= level_weights[k] * grad_t_xi_star(work_model, t, np.maximum(delta[k], 1e-12))
        return g

    rng = np.random.Generator(np.random.Philox(key=_subseed(seed, 0)))
    box = t * grad_xi(model, np.ones(d))
    starts = [np.zeros((n_rows, d))]
    starts.append(np.tile(t * grad_xi(model, 0.5 * np.ones(d)), (n_rows, 1)))
    for r in range(max(restarts - 2, 0)):
        raw = rng.uniform(0.0, 1.0, size=(n_rows, d)) * box[None, :]
        starts.append(project(np.sort(raw, axis=0)))
    best_val, best_delta, converged = -np.inf, None, False
    for delta0 in starts[:max(restarts, 1)]:
        delta = project(delta0)
        f, nu = _monotone_objective(model, t, base_values, delta, level_weights, grid)
        step = 0.5
        ok = False
        for _ in range(max_iter):
            g = gradient(delta, nu)
            pg_norm = np.linalg.norm(project(delta + 1e-3 * g) - delta) / 1e-3
            if pg_norm <= gtol:
                ok = True
                break
            step = min(step * 2.0, 10.0)
            improved = False
            while step > 1e-13:
                cand = project(delta + step * g)
                fc, nuc = _monotone_objective(model, t, base_values, cand, level_weights, grid)
                drop = float(np.sum(g * (cand - delta)))
                if fc >= f + 0.1 * drop - 1e-15:
                    improved = True
                    break
                step *= 0.5
            if not improved or np.linalg.norm(cand - delta) < 1e-12:
                # step-size collapse: no ascent direction left in the cone
                ok = True
                break
            delta, f, nu = cand, fc, nuc
        if f > best_val:
            best_val, best_delta, converged = f, delta, ok
    final_values = base_values + best_delta
    final_path = MonotonePath(levels=tuple(levels), values=tuple(map(tuple, final_values)))
    info = {"restarts": len(starts[:max(restarts, 1)]), "converged": bool(converged), "perturbation": applied_reg}
    return best_val, final_path, info


def uniqueness_probe(model, t, mu_path, k_atoms=2, grid=GridSpec(), restarts=5, seed=0, max_iter=200):
    """Multi-start consistency probe for uniqueness of the maximizer."""
    values, measures = [], []
    for r in range(restarts):
        val, path, _ = maximize_monotone(
            model,
            t,
            mu_path,
            k_atoms=k_atoms,
            grid=grid,
            seed=_subseed(seed, r + 1),
            restarts=3,
            max_iter=max_iter,
        )
        values.append(val)
        measures.append(monotone_rearrange(path_to_measure(path)))
    dists = []
    for i in range(restarts):
        for j in range(i + 1, restarts):
            dists.append(w1(measures[i], measures[j]))
    return {
        "values": values,
        "value_spread": float(max(values) - min(values)),
        "max_pairwise_w1": float(max(dists)) if dists else 0.0,
        "restarts": restarts,
    }


@dataclass
class DualityReport:
    """Four route values with optimizers and gap diagnostics for one (t, mu)."""

    instance: str
    t: float
    mu: object
    seed: int
    primal_monotone: float = np.nan
    primal_relaxed: float = np.nan
    dual_hopf: float = np.nan
    martingale: float = None
    martingale_stderr: float = None
    nu_bar_path: object = None
    nu_hat: object = None
    chi_bar: object = None
    gaps: dict = field(default_factory=dict)
    kantorovich_residual: float = np.nan
    errors: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)  # not serialized: wall clock

    def to_dict(self):
        from .measures import measure_to_dict, path_to_dict

        out = {
            "instance": self.instance,
            "t": self.t,
            "mu": measure_to_dict(self.mu),
            "seed": self.seed,
            "values": {
                "primal_monotone": self.primal_monotone,
                "primal_relaxed": self.primal_relaxed,
                "dual_hopf": self.dual_hopf,
                "martingale": self.martingale,
                "martingale_stderr": self.martingale_stderr,
            },
            "gaps": self.gaps,
            "kantorovich_residual": self.kantorovich_residual,
            "errors": self.errors,
        }
        if self.nu_bar_path is not None:
            out["nu_bar_path"] = path_to_dict(self.nu_bar_path)
        if self.nu_hat is not None:
            out["nu_hat"] = measure_to_dict(self.nu_hat)
        if self.chi_bar is not None:
            out["chi_bar"] = self.chi_bar.to_dict()
        return out

    def check_invariants(self, tol=1e-8):
        rel = max(abs(self.primal_relaxed), 1.0)
        assert self.primal_relaxed >= self.primal_monotone - 1e-2 * rel, "relaxation violated"
        assert self.dual_hopf >= self.primal_relaxed - tol, "weak duality violated"


def duality_report(
    model,
    t,
    mu_path,
    grid=GridSpec(),
    seed=0,
    k_atoms=8,
    restarts=4,
    per_coord=17,
    instance="instance",
    with_martingale=False,
    mc_paths=20000,
    mc_steps=600,
    max_iter=200,
    fw_max_iter=300,
    dual_substeps=100,
):
    """Run the deterministic routes (and optionally the martingale route)
    on one (t, mu) instance and assemble the report."""
    mu = path_to_measure(mu_path)
    report = DualityReport(instance=instance, t=float(t), mu=mu, seed=int(seed))
    t0 = time.perf_counter()
    val_m, path_m, info_m = maximize_monotone(
        model, t, mu_path, k_atoms=k_atoms, grid=grid, seed=_subseed(seed, 10), restarts=restarts, max_iter=max_iter
    )
    report.primal_monotone = float(val_m)
    report.nu_bar_path = path_m
    report.timings["monotone"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    nu_bar = monotone_rearrange(path_to_measure(path_m))
    if t > 0:
        # the exact maximizer is monotone, so seeding the support grid with
        # the monotone optimizer's atoms lets the relaxed route land on it
        grid_atoms = np.unique(
            np.concatenate([support_grid(model, t, mu, per_coord), nu_bar.arrays()[0]]), axis=0
        )
    else:
        grid_atoms = None
    val_r, nu_hat, info_r = maximize_relaxed(
        model,
        t,
        mu,
        grid=grid,
        seed=_subseed(seed, 11),
        support=grid_atoms,
        max_iter=fw_max_iter,
        warm_start=nu_bar,
    )
    report.primal_relaxed = float(val_r)
    report.nu_hat = nu_hat
    report.timings["relaxed"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    # finer time knots tighten the piecewise-linear hull of chi_bar,
    # which enters the Hopf value through an exact supremum
    from dataclasses import replace

    fine_grid = replace(grid, time_substeps=max(grid.time_substeps, dual_substeps))
    if t > 0:
        horizon = grid_atoms.max(axis=0)
        chi_bar = psi_derivative(model, nu_hat, fine_grid, horizon=horizon)
        search_atoms = np.unique(
            np.concatenate([grid_atoms, nu_hat.arrays()[0], mu.arrays()[0]]), axis=0
        )
        star, nu_star = psi_star(model, chi_bar, search_atoms, grid, warm_starts=(nu_hat,))
        s_term = integrate_s_t_chi(model, chi_bar, t, mu)
        report.dual_hopf = float(s_term - star)
        # Kantorovich relation at the optimum pair
        from .transport import ot_cost

        cost_val, _ = ot_cost(model, t, mu, nu_hat)
        report.kantorovich_residual = float(
            abs(integrate_chi(chi_bar, nu_hat) - s_term - cost_val)
        )
    else:
        horizon = mu.arrays()[0].max(axis=0) + 1.0
        chi_bar = psi_derivative(model, mu, grid, horizon=horizon)
        star = integrate_chi(chi_bar, mu) - psi(model, mu, grid)
        report.dual_hopf = float(integrate_chi(chi_bar, mu) - star)
        report.kantorovich_residual = 0.0
    report.chi_bar = chi_bar
    report.timings["dual"] = time.perf_counter() - t0

    report.gaps = {
        "monotone_vs_relaxed": float(abs(report.primal_monotone - report.primal_relaxed)),
        "relaxed_vs_dual": float(abs(report.primal_relaxed - report.dual_hopf)),
        "fw_gap": float(info_r.get("fw_gap", np.nan)),
    }

    if with_martingale:
        from .martingale import martingale_route

        t0 = time.perf_counter()
        value, stderr, _ = martingale_route(
            model,
            t,
            mu,
            nu_hat if t > 0 else mu,
            grid=grid,
            seed=_subseed(seed, 12),
            paths=mc_paths,
            steps=mc_steps,
        )
        report.martingale = float(value)
        report.martingale_stderr = float(stderr)
        report.timings["martingale"] = time.perf_counter() - t0
    return report
