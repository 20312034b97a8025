"""Backward Parisi PDE for one species and its adjoint density.

For an atomic measure nu on R_+ with cumulative function zeta(t) =
nu[0, t], the equation

    -dPhi/dt = d^2Phi/dx^2 + zeta(t) (dPhi/dx)^2

is solved backward from the terminal slice
Phi(T, x) = log sum_sigma exp(x sigma - T sigma^2) p(sigma) at
T = nu^{-1}(1).  On each interval where zeta is constant the Cole-Hopf
semigroup step is exact and is evaluated by Gauss-Hermite quadrature;
for t >= nu^{-1}(1) the terminal formula itself solves the equation, so
the grid may extend past the support when a longer horizon is needed.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline


class GridError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Discretization knobs shared by the PDE and density solvers.

    time_substeps is a per-unit-time refinement: a constant-zeta
    interval of length L is split into ceil(L * time_substeps) steps.
    """

    x_step: float = 0.05
    x_max_override: float = None
    gh_order: int = 40
    time_substeps: int = 20

    def to_dict(self):
        return {
            "x_step": self.x_step,
            "x_max_override": self.x_max_override,
            "gh_order": self.gh_order,
            "time_substeps": self.time_substeps,
        }

    @staticmethod
    def from_dict(data):
        return GridSpec(
            x_step=float(data.get("x_step", 0.05)),
            x_max_override=data.get("x_max_override"),
            gh_order=int(data.get("gh_order", 40)),
            time_substeps=int(data.get("time_substeps", 20)),
        )


def terminal_slices(spins, t, x):
    """Terminal data log sum_sigma exp(x sigma - t sigma^2) p(sigma) and its x-derivative."""
    sig, p = spins.arrays()
    expo = np.outer(x, sig) - t * sig**2 + np.log(p)
    m = expo.max(axis=1, keepdims=True)
    weights = np.exp(expo - m)
    z = weights.sum(axis=1)
    phi = m[:, 0] + np.log(z)
    dphi = (weights @ sig) / z
    return phi, np.clip(dphi, -1.0, 1.0)


def _spatial_grid(t_end, grid):
    q = max(t_end, 0.0)
    x_max = grid.x_max_override
    if x_max is None:
        # the floor keeps the edge inside the saturated tail of the
        # terminal condition even when the horizon is close to zero
        x_max = 1.0 + q + max(8.0 * np.sqrt(2.0 * q), 3.0)
    n_half = max(int(np.ceil(x_max / grid.x_step)), 4)
    return np.linspace(-n_half * grid.x_step, n_half * grid.x_step, 2 * n_half + 1)


def _time_knots(atoms, t_end, substeps):
    base = np.unique(np.concatenate([[0.0], atoms, [t_end]]))
    base = base[base <= t_end + 1e-15]
    knots = [base[0]]
    for a, b in zip(base[:-1], base[1:]):
        pieces = max(int(np.ceil((b - a) * substeps)), 1)
        knots.extend(np.linspace(a, b, pieces + 1)[1:])
    return np.asarray(knots)


def _interp_linear_tails(x, phi, dphi, pts):
    """Cubic interpolation inside the grid, linear continuation outside.

    |dPhi/dx| <= 1 makes the exact solution asymptotically linear, so
    the tails are continued with the edge slopes.
    """
    phi_s = CubicSpline(x, phi)
    dphi_s = CubicSpline(x, dphi)
    pv = phi_s(pts)
    dv = dphi_s(pts)
    left = pts < x[0]
    right = pts > x[-1]
    if np.any(left):
        pv[left] = phi[0] + dphi[0] * (pts[left] - x[0])
        dv[left] = dphi[0]
    if np.any(right):
        pv[right] = phi[-1] + dphi[-1] * (pts[right] - x[-1])
        dv[right] = dphi[-1]
    return pv, dv


def cole_hopf_step(x, phi, dphi, zeta, dt, gh_nodes, gh_weights):
    """One exact-in-time semigroup step backward over an interval of
    constant zeta; the x-derivative is propagated alongside."""
    if dt <= 0:
        return phi.copy(), dphi.copy()
    pts = x[:, None] + 2.0 * np.sqrt(dt) * gh_nodes[None, :]
    pv, dv = _interp_linear_tails(x, phi, dphi, pts)
    if zeta > 0:
        expo = zeta * pv
        m = expo.max(axis=1, keepdims=True)
        w = gh_weights[None, :] * np.exp(expo - m)
        z = w.sum(axis=1)
        phi_new = (m[:, 0] + np.log(z)) / zeta
        dphi_new = (w * dv).sum(axis=1) / z
    else:
        phi_new = pv @ gh_weights
        dphi_new = dv @ gh_weights
    return phi_new, np.clip(dphi_new, -1.0, 1.0)


@dataclass(frozen=True)
class ParisiSolution:
    """Gridded Phi_nu with spatial derivative, per species."""

    times: np.ndarray
    x: np.ndarray
    phi: np.ndarray  # (len(times), len(x))
    dphi: np.ndarray
    cdf: np.ndarray  # zeta on [t_k, t_{k+1})
    t_top: float  # nu^{-1}(1)
    spins: object
    boundary_flux: float

    @property
    def psi(self):
        center = self.x.size // 2
        return -float(self.phi[0, center])

    def _bracket(self, t):
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return max(0, min(k, self.times.size - 2))

    def dx(self, t, pts):
        """Interpolated dPhi/dx at time t, clamped to [-1, 1].

        Beyond the last knot the terminal formula extends the solution
        exactly; outside the x-grid the edge value is continued.
        """
        pts = np.asarray(pts, dtype=float)
        if t >= self.times[-1] - 1e-14:
            _, dv = terminal_slices(self.spins, t, np.atleast_1d(pts))
            return dv if pts.ndim else float(dv[0])
        k = self._bracket(t)
        t0, t1 = self.times[k], self.times[k + 1]
        w = 0.0 if t1 <= t0 else (t - t0) / (t1 - t0)
        flat = np.atleast_1d(pts)
        v0 = np.interp(flat, self.x, self.dphi[k])
        v1 = np.interp(flat, self.x, self.dphi[k + 1])
        out = np.clip((1 - w) * v0 + w * v1, -1.0, 1.0)
        return out if pts.ndim else float(out[0])

    def value(self, t, pts):
        """Interpolated Phi at time t with linear tails."""
        pts = np.asarray(pts, dtype=float)
        if t >= self.times[-1] - 1e-14:
            pv, _ = terminal_slices(self.spins, t, np.atleast_1d(pts))
            return pv if pts.ndim else float(pv[0])
        k = self._bracket(t)
        t0, t1 = self.times[k], self.times[k + 1]
        w = 0.0 if t1 <= t0 else (t - t0) / (t1 - t0)
        flat = np.atleast_1d(pts)
        vals = []
        for idx in (k, k + 1):
            pv, _ = _interp_linear_tails(self.x, self.phi[idx], self.dphi[idx], flat)
            vals.append(pv)
        out = (1 - w) * vals[0] + w * vals[1]
        return out if pts.ndim else float(out[0])


def _cdf_values(nu_d, knots):
    atoms, probs = nu_d.arrays()
    atoms = atoms[:, 0]
    return np.array([probs[atoms <= t + 1e-14].sum() for t in knots])


def solve_phi(nu_d, spins, grid=GridSpec(), t_end=None):
    """Solve the backward equation for a 1-D atomic measure.

    The time grid is refined at the atoms of nu_d and extends to
    max(nu^{-1}(1), t_end) when a longer horizon is requested.
    """
    atoms, _ = nu_d.arrays()
    atoms = atoms[:, 0]
    t_top = float(atoms.max())
    horizon = t_top if t_end is None else max(t_top, float(t_end))
    x = _spatial_grid(horizon, grid)
    knots = _time_knots(atoms, horizon, grid.time_substeps)
    cdf = _cdf_values(nu_d, knots)
    nodes, weights = np.polynomial.hermite.hermgauss(grid.gh_order)
    weights = weights / np.sqrt(np.pi)
    n_t = knots.size
    phi = np.empty((n_t, x.size))
    dphi = np.empty((n_t, x.size))
    phi[-1], dphi[-1] = terminal_slices(spins, knots[-1], x)
    flux = 0.0
    for k in range(n_t - 2, -1, -1):
        dt = knots[k + 1] - knots[k]
        zeta = cdf[k]
        phi[k], dphi[k] = cole_hopf_step(x, phi[k + 1], dphi[k + 1], zeta, dt, nodes, weights)
        flux = max(flux, abs(dphi[k][1] - dphi[k][0]), abs(dphi[k][-1] - dphi[k][-2]))
    if flux > 1e-2:
        raise GridError(
            f"boundary curvature {flux:.2e} indicates x_max too small; widen the grid"
        )
    return ParisiSolution(
        times=knots,
        x=x,
        phi=phi,
        dphi=dphi,
        cdf=cdf,
        t_top=t_top,
        spins=spins,
        boundary_flux=float(flux),
    )


@dataclass(frozen=True)
class AdjointDensity:
    """Forward density u_nu on the PDE grids, one slice per time knot."""

    times: np.ndarray
    x: np.ndarray
    u: np.ndarray

    def mass(self):
        dx = self.x[1] - self.x[0]
        return self.u.sum(axis=1) * dx

    def second_moment(self, k):
        dx = self.x[1] - self.x[0]
        return float(np.sum(self.x**2 * self.u[k]) * dx)


def _minmod(a, b):
    out = np.where(np.abs(a) < np.abs(b), a, b)
    return np.where(a * b > 0, out, 0.0)


def _upwind_face_values(u, vel):
    """Second-order upwind-biased face reconstruction with minmod limiting.

    Keeps the scheme positivity-preserving while removing the O(dx)
    advection bias of plain upwinding.
    """
    d = np.diff(u)
    slope = np.zeros_like(u)
    slope[1:-1] = _minmod(d[:-1], d[1:])
    from_left = u[:-1] + 0.5 * slope[:-1]
    from_right = u[1:] - 0.5 * slope[1:]
    return np.where(vel > 0, from_left, from_right)


def solve_density(nu_d, solution, grid=GridSpec()):
    """Mass-conservative upwind finite-volume solve of

        du/dt = d^2u/dx^2 - 2 zeta(t) d/dx(u dPhi/dx),  u(0,.) = delta_0,

    with delta_0 mollified to a one-cell Gaussian.  Explicit stepping
    with automatic CFL sub-stepping; zero flux at the boundary.
    """
    x = solution.x
    dx = x[1] - x[0]
    u = np.exp(-0.5 * (x / dx) ** 2)
    u /= u.sum() * dx
    knots = solution.times
    slices = np.empty((knots.size, x.size))
    slices[0] = u
    dt_cfl = 0.4 / (2.0 / dx**2 + 2.0 * 2.0 / dx)
    for k in range(knots.size - 1):
        t0, t1 = knots[k], knots[k + 1]
        zeta = solution.cdf[k]
        span = t1 - t0
        n_sub = max(int(np.ceil(span / dt_cfl)), 1)
        dt = span / n_sub
        a0 = solution.dphi[k]
        a1 = solution.dphi[k + 1]
        for s in range(n_sub):
            frac = (s + 0.5) / n_sub
            a = (1 - frac) * a0 + frac * a1
            vel = 2.0 * zeta * 0.5 * (a[:-1] + a[1:])
            flux = vel * _upwind_face_values(u, vel) - (u[1:] - u[:-1]) / dx
            u = u.copy()
            u[:-1] -= dt / dx * flux
            u[1:] += dt / dx * flux
        slices[k + 1] = u
    return AdjointDensity(times=knots, x=x, u=slices)


@dataclass(frozen=True)
class ChiCurve:
    """Sampled chi_d(t) = int_0^t int (dPhi/dx)^2 u dx ds, piecewise linear."""

    knots: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, self.knots, self.values)
        over = t > self.knots[-1]
        if np.any(over):
            out = np.where(over, self.values[-1] + self.tail_slope * (t - self.knots[-1]), out)
        return out if out.ndim else float(out)

    @property
    def tail_slope(self):
        if self.knots.size < 2:
            return 0.0
        return float(
            (self.values[-1] - self.values[-2]) / (self.knots[-1] - self.knots[-2])
        )

    def slopes(self):
        return np.diff(self.values) / np.diff(self.knots)


def chi_from_solution(solution, density):
    """Integrate the squared derivative against the density in time."""
    integrand = np.sum(solution.dphi**2 * density.u, axis=1) * (solution.x[1] - solution.x[0])
    integrand = np.clip(integrand, 0.0, 1.0)
    knots = solution.times
    vals = np.concatenate([[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(knots))])
    # chi is increasing, 1-Lipschitz and convex; repair grid-level wiggle
    slopes = np.diff(vals) / np.maximum(np.diff(knots), 1e-300)
    slopes = np.clip(slopes, 0.0, 1.0)
    slopes = _isotonic_increasing(slopes, np.diff(knots))
    vals = np.concatenate([[0.0], np.cumsum(slopes * np.diff(knots))])
    return ChiCurve(knots=knots, values=vals)


def _isotonic_increasing(y, w):
    """Weighted pool-adjacent-violators projection onto nondecreasing sequences."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    level, weight, count = [], [], []
    for yi, wi in zip(y, w):
        level.append(yi)
        weight.append(wi)
        count.append(1)
        while len(level) > 1 and level[-2] > level[-1] + 1e-300:
            lw = weight[-2] + weight[-1]
            lv = (level[-2] * weight[-2] + level[-1] * weight[-1]) / lw
            level[-2:] = [lv]
            weight[-2:] = [lw]
            count[-2:] = [count[-2] + count[-1]]
    out = np.empty_like(y)
    pos = 0
    for lv, ct in zip(level, count):
        out[pos : pos + ct] = lv
        pos += ct
    return out


def chi_d(nu_d, spins, grid=GridSpec(), t_end=None):
    """Derivative curve chi_d of psi_d at nu_d, sampled on the time knots."""
    sol = solve_phi(nu_d, spins, grid=grid, t_end=t_end)
    dens = solve_density(nu_d, sol, grid=grid)
    return chi_from_solution(sol, dens)


def psi_d(nu_d, spins, grid=GridSpec()):
    """psi_d(nu) = -Phi_nu(0, 0)."""
    return solve_phi(nu_d, spins, grid=grid).psi
