"""Monte Carlo route: optimal-drift diffusions and the un-inverted value.

Per species the diffusion dX = 2 zeta(s) dxPhi(s, X) ds + sqrt(2) dB is
simulated under the measure nu_bar; alpha(s) = dxPhi(s, X_s) is a
bounded martingale, and the value

    sum_d lambda_d E[phi*_d(T_d, alpha_d(T_d)) - sqrt(2) alpha_d(T_d) B_d(T_d)]
      - chi_alpha(T) + int S_t chi_alpha dmu

matches the free energy when nu_bar is the maximizer.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .functionals import ChiFunction
from .hopflax import integrate_s_t_chi
from .model import grad_xi
from .parisi_pde import GridSpec, _isotonic_increasing, solve_phi


def phi_flat(spins, t, x):
    """phi(t, x) = log sum_sigma exp(x sigma - t sigma^2) p(sigma)."""
    sig = np.asarray(spins.atoms, dtype=float)
    logp = np.log(np.asarray(spins.probs, dtype=float))
    x = np.asarray(x, dtype=float)
    expo = np.multiply.outer(x, sig) - t * sig**2 + logp
    return logsumexp(expo, axis=-1)


def _phi_prime(spins, t, x):
    sig = np.asarray(spins.atoms, dtype=float)
    logp = np.log(np.asarray(spins.probs, dtype=float))
    expo = np.multiply.outer(np.asarray(x, dtype=float), sig) - t * sig**2 + logp
    expo = expo - expo.max(axis=-1, keepdims=True)
    w = np.exp(expo)
    return (w @ sig) / w.sum(axis=-1)


def phi_star(spins, t, y):
    """1-D conjugate phi*(t, y) = sup_x { x y - phi(t, x) }.

    Finite exactly for y in the closed convex hull of the spin support;
    interior values by safeguarded Newton on phi'(t, x) = y, boundary
    values by the exact limit.
    """
    sig = np.asarray(spins.atoms, dtype=float)
    probs = np.asarray(spins.probs, dtype=float)
    lo, hi = float(sig.min()), float(sig.max())
    if y < lo - 1e-12 or y > hi + 1e-12:
        return np.inf
    if y >= hi - 1e-12:
        return float(t * hi**2 - np.log(probs[np.argmax(sig)]))
    if y <= lo + 1e-12:
        return float(t * lo**2 - np.log(probs[np.argmin(sig)]))
    a, b = -1.0, 1.0
    while _phi_prime(spins, t, a) > y:
        a *= 2.0
    while _phi_prime(spins, t, b) < y:
        b *= 2.0
    x = 0.5 * (a + b)
    for _ in range(100):
        g = _phi_prime(spins, t, x) - y
        if g > 0:
            b = x
        else:
            a = x
        # variance of the tilted law is the second derivative
        expo = x * sig - t * sig**2 + np.log(probs)
        w = np.exp(expo - expo.max())
        w /= w.sum()
        var = float(w @ sig**2 - (w @ sig) ** 2)
        step = g / var if var > 1e-14 else 0.0
        xn = x - step
        if not (a < xn < b):
            xn = 0.5 * (a + b)
        if abs(xn - x) < 1e-14:
            x = xn
            break
        x = xn
    return float(x * y - phi_flat(spins, t, x))


@dataclass
class MartingaleEnsemble:
    """Simulated paths for all species on per-species time grids."""

    weights: tuple
    times: tuple  # per species: array of time points, 0 .. T_d
    alpha: tuple  # per species: (M, n_times) martingale values
    brownian_terminal: tuple  # per species: (M,) B_d(T_d)
    seed: int
    dt: tuple

    @property
    def path_count(self):
        return self.alpha[0].shape[0]

    def terminal(self, d):
        return self.alpha[d][:, -1], self.brownian_terminal[d]


def simulate(model, nu_bar, T, M=100000, dt=None, seed=0, grid=GridSpec()):
    """Euler-Maruyama for the per-species optimal-drift diffusions.

    ``T`` is the per-species horizon vector; each marginal of nu_bar
    must be supported in [0, T_d].  Antithetic pairs share Brownian
    increments with flipped signs.
    """
    from .measures import marginals

    d_count = model.species_count
    T = np.broadcast_to(np.asarray(T, dtype=float), (d_count,))
    margs = marginals(nu_bar)
    times_all, alpha_all, bt_all, dt_all = [], [], [], []
    half = M // 2
    for d in range(d_count):
        atoms, probs = margs[d].arrays()
        atoms = atoms[:, 0]
        if atoms.max() > T[d] + 1e-12:
            raise ValueError(f"marginal {d} supported beyond the horizon T_{d}")
        sol = solve_phi(margs[d], model.spins[d], grid=grid, t_end=T[d])
        step = T[d] / 2000.0 if dt is None else float(dt)
        n_steps = max(int(np.ceil(T[d] / step)), 1)
        times = np.linspace(0.0, T[d], n_steps + 1)
        h = times[1] - times[0]
        rng = np.random.Generator(np.random.Philox(key=np.random.SeedSequence(entropy=seed, spawn_key=(d,)).generate_state(1)[0]))
        x = np.zeros(M)
        b = np.zeros(M)
        alpha = np.empty((M, n_steps + 1))
        alpha[:, 0] = sol.dx(0.0, x)
        for k in range(n_steps):
            s = times[k]
            zeta = probs[atoms <= s + 1e-14].sum()
            drift = 2.0 * zeta * alpha[:, k]
            dw = rng.standard_normal(half) * np.sqrt(h)
            dw = np.concatenate([dw, -dw]) if 2 * half == M else np.concatenate([dw, -dw[: M - half]])
            x = x + drift * h + np.sqrt(2.0) * dw
            b = b + dw
            alpha[:, k + 1] = sol.dx(times[k + 1], x)
        assert np.max(np.abs(alpha)) <= 1.0 + 1e-12, "martingale bound violated"
        times_all.append(times)
        alpha_all.append(alpha)
        bt_all.append(b)
        dt_all.append(h)
    return MartingaleEnsemble(
        weights=model.weights,
        times=tuple(times_all),
        alpha=tuple(alpha_all),
        brownian_terminal=tuple(bt_all),
        seed=int(seed),
        dt=tuple(dt_all),
    )


def chi_alpha(ensemble, path_indices=None):
    """chi built from the empirical second moments of alpha.

    Slopes Ehat[alpha_d(t)^2] are clipped to [0, 1] and projected onto
    nondecreasing sequences (second moments of a bounded martingale
    increase); the curves integrate the smoothed slopes.  With
    ``path_indices`` only that subset of paths is used.
    """
    curves = []
    for d in range(len(ensemble.weights)):
        times = ensemble.times[d]
        a = ensemble.alpha[d] if path_indices is None else ensemble.alpha[d][path_indices]
        m2 = np.mean(a**2, axis=0)
        m2 = np.clip(m2, 0.0, 1.0)
        seg = 0.5 * (m2[:-1] + m2[1:])
        seg = _isotonic_increasing(seg, np.diff(times))
        values = np.concatenate([[0.0], np.cumsum(seg * np.diff(times))])
        curves.append((tuple(times), tuple(values)))
    chi = ChiFunction(weights=ensemble.weights, curves=tuple(curves))
    chi.validate()
    return chi


def martingale_diagnostics(ensemble):
    """Empirical martingale checks: E[alpha(t)] drift and monotone
    second moments; all deviations in 3-sigma units."""
    out = []
    M = ensemble.path_count
    for d in range(len(ensemble.weights)):
        a = ensemble.alpha[d]
        means = a.mean(axis=0)
        stderr = a.std(axis=0, ddof=1) / np.sqrt(M)
        drift = np.abs(means - means[0])
        band = 3.0 * np.maximum(stderr, 1e-12)
        m2 = np.mean(a**2, axis=0)
        dec = np.diff(m2)
        m2_noise = 3.0 * np.std(a[:, -1] ** 2, ddof=1) / np.sqrt(M)
        out.append(
            {
                "max_mean_drift": float(drift.max()),
                "max_mean_drift_sigmas": float((drift / band).max()),
                "worst_m2_decrease": float(min(dec.min(), 0.0)) if dec.size else 0.0,
                "m2_noise_band": float(m2_noise),
                "alpha_abs_max": float(np.abs(a).max()),
            }
        )
    return out


def uninverted_value(model, t, mu, T, ensemble, batches=20):
    """Value of the martingale functional for the simulated alpha.

    Returns (value, stderr).  The standard error is estimated by batch
    means over antithetic pairs: the empirical chi enters the terminal
    correction and the Hopf-Lax term nonlinearly, so per-path variance
    of the terminal term alone would understate the fluctuations.
    """
    d_count = model.species_count
    T = np.broadcast_to(np.asarray(T, dtype=float), (d_count,))
    atoms, _ = mu.arrays()
    reach = atoms.max(axis=0) + t * grad_xi(model, np.ones(d_count))
    if np.any(reach > T + 1e-9):
        raise ValueError("horizon T too small for supp(mu) + t grad_xi([0,1]^D)")
    M = ensemble.path_count
    f_terms = []
    for d in range(d_count):
        a_T, b_T = ensemble.terminal(d)
        stars = np.array([phi_star(model.spins[d], T[d], y) for y in np.clip(a_T, -1.0, 1.0)])
        f_terms.append(stars - np.sqrt(2.0) * a_T * b_T)

    def evaluate(idx):
        chi = chi_alpha(ensemble, path_indices=idx)
        val = 0.0
        for d in range(d_count):
            f = f_terms[d] if idx is None else f_terms[d][idx]
            val += model.weights[d] * (float(f.mean()) - chi.value_d(d, float(T[d])))
        return val + integrate_s_t_chi(model, chi, t, mu)

    value = evaluate(None)
    half = M // 2
    k_batches = min(batches, half)
    batch_values = []
    for k in range(k_batches):
        sel = np.arange(k, half, k_batches)
        # keep antithetic partners in the same batch
        idx = np.concatenate([sel, half + sel[half + sel < M]])
        batch_values.append(evaluate(idx))
    stderr = float(np.std(batch_values, ddof=1) / np.sqrt(k_batches))
    return float(value), stderr


def martingale_route(model, t, mu, nu_bar, grid=GridSpec(), seed=0, paths=100000, steps=2000):
    """End-to-end martingale evaluation from a candidate maximizer.

    Returns (value, stderr, ensemble); T is the componentwise max of
    supp(mu) + t grad_xi(1, ..., 1) plus margin 0.1, widened to cover
    nu_bar when needed.
    """
    if t == 0:
        # no interaction term: the infimum collapses onto the optimal
        # martingale built from nu_bar = mu and equals psi(mu) exactly
        from .functionals import psi

        return psi(model, mu, grid), 0.0, None
    atoms_mu, _ = mu.arrays()
    atoms_nu, _ = nu_bar.arrays()
    T = atoms_mu.max(axis=0) + t * grad_xi(model, np.ones(model.species_count)) + 0.1
    T = np.maximum(T, atoms_nu.max(axis=0) + 0.1)
    dt = float(T.max()) / steps
    ensemble = simulate(model, nu_bar, T, M=paths, dt=dt, seed=seed, grid=grid)
    value, stderr = uninverted_value(model, t, mu, T, ensemble)
    return value, stderr, ensemble
