"""Atomic probability measures on R_+^D and monotone step paths."""

import json
from dataclasses import dataclass

import numpy as np

ATOM_MERGE_TOL = 1e-10  # sup-norm distance below which atoms are merged
WEIGHT_TOL = 1e-12


class NotMonotoneError(ValueError):
    def __init__(self, witness):
        self.witness = witness
        i, j, y, yp = witness
        super().__init__(
            f"measure is not monotone: coordinates ({i},{j}) of atoms {y} and {yp} are anti-ordered"
        )


def _merge_atoms(atoms, probs):
    """Sort atoms lexicographically and merge near-duplicates."""
    atoms = np.asarray(atoms, dtype=float)
    probs = np.asarray(probs, dtype=float)
    order = np.lexsort(atoms.T[::-1])
    atoms, probs = atoms[order], probs[order]
    out_atoms, out_probs = [atoms[0]], [probs[0]]
    for a, p in zip(atoms[1:], probs[1:]):
        if np.max(np.abs(a - out_atoms[-1])) <= ATOM_MERGE_TOL:
            out_probs[-1] += p
        else:
            out_atoms.append(a)
            out_probs.append(p)
    return np.array(out_atoms), np.array(out_probs)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported probability measure on R_+^D.

    Atoms are stored sorted lexicographically with near-duplicates
    merged and zero-weight atoms dropped.
    """

    atoms: tuple  # tuple of coordinate tuples, shape (n, D)
    probs: tuple

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms.reshape(-1, 1)
        probs = np.asarray(self.probs, dtype=float)
        if atoms.shape[0] != probs.size:
            raise ValueError("atom/prob length mismatch")
        if np.any(atoms < -1e-14):
            raise ValueError("atoms must lie in the positive orthant")
        atoms = np.maximum(atoms, 0.0)
        if np.any(probs < -WEIGHT_TOL):
            raise ValueError("negative weight")
        probs = np.maximum(probs, 0.0)
        total = probs.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {total}, expected 1")
        probs = probs / total
        keep = probs > WEIGHT_TOL
        atoms, probs = atoms[keep], probs[keep]
        atoms, probs = _merge_atoms(atoms, probs)
        probs = probs / probs.sum()
        object.__setattr__(self, "atoms", tuple(tuple(a) for a in atoms))
        object.__setattr__(self, "probs", tuple(float(p) for p in probs))

    @property
    def dim(self):
        return len(self.atoms[0])

    def arrays(self):
        return np.asarray(self.atoms, dtype=float), np.asarray(self.probs, dtype=float)

    def support_max(self):
        return np.asarray(self.atoms).max(axis=0)


def dirac(point):
    point = np.atleast_1d(np.asarray(point, dtype=float))
    return DiscreteMeasure(atoms=(tuple(point),), probs=(1.0,))


@dataclass(frozen=True)
class MonotonePath:
    """Increasing step path: levels 0 = z_0 < ... < z_{K+1} = 1 and
    componentwise increasing values q_0 <= ... <= q_K in R_+^D."""

    levels: tuple
    values: tuple

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if levels[0] != 0.0 or levels[-1] != 1.0:
            raise ValueError("levels must start at 0 and end at 1")
        if np.any(np.diff(levels) <= 0):
            raise ValueError("levels must be strictly increasing")
        if values.shape[0] != levels.size - 1:
            raise ValueError("need one value row per level interval")
        if np.any(values < -1e-14):
            raise ValueError("path values must be nonnegative")
        if np.any(np.diff(values, axis=0) < -1e-12):
            raise ValueError("path values must be componentwise increasing")
        object.__setattr__(self, "levels", tuple(float(z) for z in levels))
        object.__setattr__(self, "values", tuple(tuple(v) for v in np.maximum(values, 0.0)))

    @property
    def dim(self):
        return len(self.values[0])

    def arrays(self):
        return np.asarray(self.levels, dtype=float), np.asarray(self.values, dtype=float)

    def refine(self, k):
        """Split level intervals until there are at least k of them.

        The path's measure is unchanged; longest intervals split first,
        ties broken by lowest index.
        """
        levels, values = self.arrays()
        levels = list(levels)
        values = [np.array(v) for v in values]
        while len(values) < k:
            gaps = np.diff(levels)
            i = int(np.argmax(gaps))
            mid = 0.5 * (levels[i] + levels[i + 1])
            levels.insert(i + 1, mid)
            values.insert(i + 1, values[i].copy())
        return MonotonePath(levels=tuple(levels), values=tuple(tuple(v) for v in values))


def path_to_measure(path):
    """Law of the step path at a uniform level: atoms q_k, weights z_{k+1}-z_k."""
    levels, values = path.arrays()
    weights = np.diff(levels)
    return DiscreteMeasure(atoms=tuple(tuple(v) for v in values), probs=tuple(weights))


def is_monotone(mu):
    """Check pairwise comonotonicity of the support.

    Returns (True, None) or (False, (i, j, y, y')) with a witnessing
    coordinate pair and atom pair such that y_i < y'_i and y_j > y'_j.
    """
    atoms, _ = mu.arrays()
    n, d = atoms.shape
    for a in range(n):
        for b in range(a + 1, n):
            diff = atoms[a] - atoms[b]
            neg = np.where(diff < -1e-14)[0]
            pos = np.where(diff > 1e-14)[0]
            if neg.size and pos.size:
                return False, (int(neg[0]), int(pos[0]), tuple(atoms[a]), tuple(atoms[b]))
    return True, None


def measure_to_path(mu):
    """Inverse of path_to_measure on monotone measures."""
    ok, witness = is_monotone(mu)
    if not ok:
        raise NotMonotoneError(witness)
    atoms, probs = mu.arrays()
    # comonotone atoms are totally ordered, so the lexicographic sort
    # from the constructor is also the componentwise order
    levels = np.concatenate([[0.0], np.cumsum(probs)])
    levels[-1] = 1.0
    return MonotonePath(levels=tuple(levels), values=tuple(tuple(a) for a in atoms))


def marginals(mu):
    """Per-coordinate image measures, with equal projections merged."""
    atoms, probs = mu.arrays()
    out = []
    for d in range(atoms.shape[1]):
        out.append(DiscreteMeasure(atoms=tuple((x,) for x in atoms[:, d]), probs=tuple(probs)))
    return out


def monotone_rearrange(mu):
    """Common-quantile coupling of the marginals of mu.

    The output is the unique monotone measure with the same
    per-coordinate marginals as the input.
    """
    atoms, probs = mu.arrays()
    n, d = atoms.shape
    quantiles = []
    for j in range(d):
        order = np.argsort(atoms[:, j], kind="stable")
        vals = atoms[order, j]
        cum = np.cumsum(probs[order])
        quantiles.append((vals, cum))
    # merge all cumulative breakpoints
    cuts = np.unique(np.concatenate([c for _, c in quantiles] + [np.array([0.0, 1.0])]))
    cuts = cuts[(cuts > WEIGHT_TOL) & (cuts <= 1.0 + WEIGHT_TOL)]
    new_atoms, new_probs = [], []
    lo = 0.0
    for hi in cuts:
        w = hi - lo
        if w <= WEIGHT_TOL:
            lo = hi
            continue
        mid = 0.5 * (lo + hi)
        point = []
        for vals, cum in quantiles:
            k = int(np.searchsorted(cum, mid, side="left"))
            k = min(k, vals.size - 1)
            point.append(vals[k])
        new_atoms.append(tuple(point))
        new_probs.append(w)
        lo = hi
    return DiscreteMeasure(atoms=tuple(new_atoms), probs=tuple(new_probs))


def w1(mu, nu):
    """Wasserstein-1 distance between atomic measures of equal dimension.

    Exact quantile integration for D = 1; a transport LP with cost
    |y - x| otherwise.
    """
    if mu.dim != nu.dim:
        raise ValueError("dimension mismatch")
    if mu.dim == 1:
        a_mu, p_mu = mu.arrays()
        a_nu, p_nu = nu.arrays()
        pts = np.unique(np.concatenate([a_mu[:, 0], a_nu[:, 0]]))
        if pts.size == 1:
            return 0.0
        grid = np.sort(pts)
        f_mu = np.array([p_mu[a_mu[:, 0] <= s + 1e-15].sum() for s in grid[:-1]])
        f_nu = np.array([p_nu[a_nu[:, 0] <= s + 1e-15].sum() for s in grid[:-1]])
        return float(np.sum(np.abs(f_mu - f_nu) * np.diff(grid)))
    from .transport import euclidean_ot  # deferred: transport imports measures

    return euclidean_ot(mu, nu)


def measure_to_dict(mu):
    return {"atoms": [list(a) for a in mu.atoms], "probs": list(mu.probs)}


def measure_from_dict(data):
    return DiscreteMeasure(
        atoms=tuple(tuple(a) for a in np.atleast_2d(np.asarray(data["atoms"], dtype=float))),
        probs=tuple(data["probs"]),
    )


def path_to_dict(path):
    return {"levels": list(path.levels), "values": [list(v) for v in path.values]}


def path_from_dict(data):
    return MonotonePath(
        levels=tuple(data["levels"]),
        values=tuple(tuple(v) for v in np.atleast_2d(np.asarray(data["values"], dtype=float))),
    )


def load_measure(path):
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if "levels" in data:
        return path_from_dict(data)
    return measure_from_dict(data)


def save_measure(mu, path):
    with open(path, "w", encoding="utf-8") as fh:
        if isinstance(mu, MonotonePath):
            json.dump(path_to_dict(mu), fh, indent=2, sort_keys=True)
        else:
            json.dump(measure_to_dict(mu), fh, indent=2, sort_keys=True)
        fh.write("\n")
