"""Convex conjugates of the mixture function and discrete optimal transport.

The conjugate is taken over the positive orthant,

    xi*(y) = sup_{x in R_+^D} { x.y - xi(x) },

and satisfies xi*(y) = xi*(y_+).  The transport cost T_t(mu, nu) uses
the ground cost (t xi)*(y - x).
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .model import eval_xi, grad_xi, perturb, strong_convexity_lower_bound

BIG_COST = 1e12  # sentinel for forbidden t=0 moves
_PG_TOL = 1e-10


class ConjugateError(RuntimeError):
    pass


def _conjugate_quadratic(model, y):
    """Exact conjugate of xi(x) = b.x + x.Ax/2 by active-set enumeration.

    Each candidate active set S solves A_SS x_S = (y - b)_S; the KKT
    conditions select the maximizer.
    """
    b, a = model.quadratic_parts()
    d = model.species_count
    best_val, best_x = 0.0, np.zeros(d)
    found = False
    for size in range(d + 1):
        for s in combinations(range(d), size):
            x = np.zeros(d)
            if s:
                s = list(s)
                sub = a[np.ix_(s, s)]
                rhs = y[s] - b[s]
                try:
                    xs = np.linalg.solve(sub, rhs)
                except np.linalg.LinAlgError:
                    continue
                if np.any(xs < -1e-11):
                    continue
                x[s] = np.maximum(xs, 0.0)
            slack = b + a @ x - y
            off = [i for i in range(d) if i not in (s or [])]
            if off and np.any(slack[off] < -1e-9):
                continue
            val = float(x @ y - (b @ x + 0.5 * x @ a @ x))
            if not found or val > best_val + 1e-15:
                best_val, best_x, found = val, x, True
    if not found:
        raise ConjugateError(f"no KKT point found for y={y}")
    return best_val, best_x


def _conjugate_iterative(model, y, seed=0):
    """Bound-constrained maximization of the concave x.y - xi(x).

    Convexity of xi makes the maximizer unique, so a single quasi-Newton
    run from each of two starts suffices; a projected-gradient stationarity
    check guards the result.
    """
    from scipy.optimize import minimize

    d = model.species_count

    def neg(x):
        return eval_xi(model, x) - float(x @ y), grad_xi(model, x) - y

    best_val, best_x = 0.0, np.zeros(d)
    for x0 in (np.maximum(y, 0.0) * 0.5 + 0.1, np.full(d, 1.0)):
        res = minimize(
            neg,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=[(0.0, None)] * d,
            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 500},
        )
        val = -float(res.fun)
        if val > best_val:
            best_val, best_x = val, np.maximum(res.x, 0.0)
    g = y - grad_xi(model, best_x)
    pg = g.copy()
    pg[(best_x <= 1e-12) & (g < 0)] = 0.0
    if np.linalg.norm(pg) > 1e-6:
        raise ConjugateError(f"conjugate solve failed to converge at y={y}")
    return best_val, best_x


def xi_star(model, y, seed=0):
    """Conjugate value xi*(y); negative coordinates of y are clipped first."""
    y = np.maximum(np.asarray(y, dtype=float).reshape(model.species_count), 0.0)
    if model.is_quadratic:
        val, _ = _conjugate_quadratic(model, y)
    else:
        val, _ = _conjugate_iterative(model, y, seed=seed)
    return val


def grad_xi_star(model, y, seed=0):
    """The maximizer x_opt(y) of x.y - xi(x), unique for strongly convex xi."""
    y = np.maximum(np.asarray(y, dtype=float).reshape(model.species_count), 0.0)
    if model.is_quadratic:
        _, x = _conjugate_quadratic(model, y)
    else:
        _, x = _conjugate_iterative(model, y, seed=seed)
    return x


def t_xi_star(model, t, y):
    """(t xi)*(y) = t xi*(y/t) for t > 0; indicator of -R_+^D at t = 0."""
    y = np.asarray(y, dtype=float).reshape(model.species_count)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0.0 if np.all(y <= 1e-12) else np.inf
    return t * xi_star(model, y / t)


def grad_t_xi_star(model, t, y):
    """Gradient of (t xi)* at y, i.e. the maximizer of p.y - t xi(p)."""
    if t <= 0:
        raise ValueError("t must be positive")
    y = np.asarray(y, dtype=float).reshape(model.species_count)
    return grad_xi_star(model, y / t)


def ensure_strongly_convex(model, floor=1e-8, reg=1e-4):
    """Return (model, applied_reg); perturbs when xi is not strongly convex."""
    if strong_convexity_lower_bound(model, grid_resolution=5) > floor:
        return model, 0.0
    return perturb(model, reg), reg


@dataclass(frozen=True)
class Coupling:
    """Transport plan between two atomic measures."""

    row_measure: object
    col_measure: object
    plan: tuple  # nested tuples, shape (m, n)

    def matrix(self):
        return np.asarray(self.plan, dtype=float)

    def marginal_residuals(self):
        pi = self.matrix()
        _, mu_p = self.row_measure.arrays()
        _, nu_p = self.col_measure.arrays()
        return (
            float(np.max(np.abs(pi.sum(axis=1) - mu_p))),
            float(np.max(np.abs(pi.sum(axis=0) - nu_p))),
        )


def _northwest_corner(supply, demand):
    m, n = supply.size, demand.size
    plan = np.zeros((m, n))
    basis = []
    s = supply.copy()
    d = demand.copy()
    i = j = 0
    while i < m and j < n:
        q = min(s[i], d[j])
        plan[i, j] = q
        basis.append((i, j))
        s[i] -= q
        d[j] -= q
        if i == m - 1 and j == n - 1:
            break
        # on ties advance the row, keeping a degenerate basic cell
        if s[i] <= d[j] and i < m - 1:
            i += 1
        else:
            j += 1
    return plan, basis


def _potentials(basis, cost, m, n):
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    u[0] = 0.0
    by_row = {}
    by_col = {}
    for i, j in basis:
        by_row.setdefault(i, []).append(j)
        by_col.setdefault(j, []).append(i)
    stack = [("r", 0)]
    while stack:
        kind, k = stack.pop()
        if kind == "r":
            for j in by_row.get(k, []):
                if np.isnan(v[j]):
                    v[j] = cost[k, j] - u[k]
                    stack.append(("c", j))
        else:
            for i in by_col.get(k, []):
                if np.isnan(u[i]):
                    u[i] = cost[i, k] - v[k]
                    stack.append(("r", i))
    return u, v


def _find_cycle(basis, enter):
    """Alternating cycle created by adding ``enter`` to the basis tree."""
    i0, j0 = enter
    adj_row = {}
    adj_col = {}
    for i, j in basis:
        adj_row.setdefault(i, []).append(j)
        adj_col.setdefault(j, []).append(i)
    # path from column j0 back to row i0 through basis edges
    stack = [(("c", j0), [])]
    seen = set()
    while stack:
        (kind, k), path = stack.pop()
        if (kind, k) in seen:
            continue
        seen.add((kind, k))
        if kind == "c":
            for i in sorted(adj_col.get(k, [])):
                edge = (i, k)
                if i == i0:
                    return [enter] + path + [edge]
                stack.append((("r", i), path + [edge]))
        else:
            for j in sorted(adj_row.get(k, [])):
                edge = (k, j)
                if edge in path:
                    continue
                stack.append((("c", j), path + [edge]))
    raise RuntimeError("basis graph is not a spanning tree")


def transportation_simplex(supply, demand, cost, max_iter=100000):
    """Exact transportation LP by the MODI method with Bland's rule.

    Returns (value, plan, row_potentials, col_potentials).
    """
    supply = np.asarray(supply, dtype=float)
    demand = np.asarray(demand, dtype=float)
    cost = np.asarray(cost, dtype=float)
    m, n = cost.shape
    plan, basis = _northwest_corner(supply, demand)
    for _ in range(max_iter):
        u, v = _potentials(basis, cost, m, n)
        reduced = cost - u[:, None] - v[None, :]
        basis_set = set(basis)
        enter = None
        for i in range(m):  # Bland: lowest (i, j) with negative reduced cost
            for j in range(n):
                if (i, j) not in basis_set and reduced[i, j] < -1e-11:
                    enter = (i, j)
                    break
            if enter:
                break
        if enter is None:
            value = float(np.sum(plan * cost))
            return value, plan, u, v
        cycle = _find_cycle(basis, enter)
        minus = cycle[1::2]  # odd positions lose flow
        theta = min(plan[c] for c in minus)
        leave = min(c for c in minus if plan[c] <= theta + 0.0)
        for k, c in enumerate(cycle):
            plan[c] += theta if k % 2 == 0 else -theta
        plan[leave] = 0.0
        basis.remove(leave)
        basis.append(enter)
        basis.sort()
    raise RuntimeError("transportation simplex did not converge")


def ot_cost(model, t, mu, nu):
    """Optimal transport cost T_t(mu, nu) with ground cost (t xi)*(y - x).

    Returns (value, Coupling); value is +inf when t = 0 and no coupling
    moves mass only downward.
    """
    xm, pm = mu.arrays()
    xn, pn = nu.arrays()
    m, n = xm.shape[0], xn.shape[0]
    cost = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            c = t_xi_star(model, t, xn[j] - xm[i])
            cost[i, j] = BIG_COST if np.isinf(c) else c
    value, plan, _, _ = transportation_simplex(pm, pn, cost)
    coupling = Coupling(row_measure=mu, col_measure=nu, plan=tuple(map(tuple, plan)))
    if value >= BIG_COST * 1e-8:
        return np.inf, coupling
    return value, coupling


def ot_dual_potentials(model, t, mu, nu):
    """Optimal value plus LP potentials (u on mu-atoms, v on nu-atoms)."""
    xm, pm = mu.arrays()
    xn, pn = nu.arrays()
    cost = np.zeros((xm.shape[0], xn.shape[0]))
    for i in range(xm.shape[0]):
        for j in range(xn.shape[0]):
            c = t_xi_star(model, t, xn[j] - xm[i])
            cost[i, j] = BIG_COST if np.isinf(c) else c
    value, plan, u, v = transportation_simplex(pm, pn, cost)
    return value, plan, u, v


def euclidean_ot(mu, nu):
    """Wasserstein-1 via the transport LP with cost |y - x|."""
    xm, pm = mu.arrays()
    xn, pn = nu.arrays()
    cost = np.linalg.norm(xm[:, None, :] - xn[None, :, :], axis=2)
    value, _, _, _ = transportation_simplex(pm, pn, cost)
    return float(value)


def kantorovich_check(model, chi, mu, nu, t, tol=1e-8):
    """Diagnostics for the Kantorovich potential relation.

    Reports the duality gap T_t(mu,nu) - (int chi dnu - int S_t chi dmu)
    and the pointwise slacks (t xi)*(y-x) - (chi(y) - S_t chi(x)) on the
    support of an optimal coupling; both are nonnegative for any chi in
    the admissible class and vanish at an optimal pair.
    """
    from .hopflax import integrate_s_t_chi, s_t_chi_values

    value, coupling = ot_cost(model, t, mu, nu)
    xm, _ = mu.arrays()
    xn, pn = nu.arrays()
    chi_nu = float(pn @ np.array([chi.value(y) for y in xn]))
    s_mu = integrate_s_t_chi(model, chi, t, mu)
    gap = value - (chi_nu - s_mu)
    s_vals = s_t_chi_values(model, chi, t, xm)
    pi = coupling.matrix()
    slacks = []
    for i in range(xm.shape[0]):
        for j in range(xn.shape[0]):
            if pi[i, j] <= 1e-14:
                continue
            c = t_xi_star(model, t, xn[j] - xm[i])
            slacks.append(
                {
                    "x": list(xm[i]),
                    "y": list(xn[j]),
                    "slack": float(c - (chi.value(xn[j]) - s_vals[i])),
                }
            )
    worst = min((s["slack"] for s in slacks), default=0.0)
    return {
        "cost": float(value),
        "gap": float(gap),
        "worst_pair_slack": float(worst),
        "pair_slacks": slacks,
        "ok": gap >= -tol and worst >= -tol,
    }
