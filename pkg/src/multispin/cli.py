"""Batch front-end: named computations over JSON model/measure files.

Commands: free-energy, validate, pde, transport, hopflax, martingale.
Exit codes: 0 pass, 1 numerical-property failure, 2 usage/config error.
All randomness flows from --seed; reports are byte-identical across
repeated runs and thread counts.
"""

import argparse
import csv
import json
import os
import sys
from importlib import resources

import numpy as np


def _load_schema(name):
    with resources.files("multispin.schemas").joinpath(name + ".json").open("r") as fh:
        return json.load(fh)


def _validate_schema(payload, schema_name):
    import jsonschema

    jsonschema.validate(payload, _load_schema(schema_name))


def _write_json(payload, path, schema_name=None):
    if schema_name is not None:
        _validate_schema(payload, schema_name)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(rows, header, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _load_inputs(args, need_measure=True):
    from .measures import MonotonePath, load_measure, measure_to_path, path_to_measure
    from .model import load_model

    model = load_model(args.model)
    mu_path = None
    mu = None
    if need_measure:
        loaded = load_measure(args.measure)
        if isinstance(loaded, MonotonePath):
            mu_path = loaded
            mu = path_to_measure(loaded)
        else:
            mu = loaded
            mu_path = measure_to_path(loaded)
    return model, mu, mu_path


def _grid_from_args(args):
    from .parisi_pde import GridSpec

    if getattr(args, "grid", None):
        with open(args.grid, "r", encoding="utf-8") as fh:
            return GridSpec.from_dict(json.load(fh))
    return GridSpec()


def cmd_free_energy(args):
    from .optimizer import duality_report

    model, mu, mu_path = _load_inputs(args)
    grid = _grid_from_args(args)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    failed = False
    for t in args.t:
        rep = duality_report(
            model,
            t,
            mu_path,
            grid=grid,
            seed=args.seed,
            k_atoms=args.k_atoms,
            instance=f"t={t:g}",
            with_martingale=args.martingale,
            mc_paths=args.paths,
        )
        payload = rep.to_dict()
        _write_json(payload, os.path.join(args.out, f"free_energy_t{t:g}.json"), "duality_report")
        try:
            rep.check_invariants(tol=args.tol)
        except AssertionError as exc:
            print(f"invariant violation at t={t:g}: {exc}", file=sys.stderr)
            failed = True
        rows.append(
            [
                t,
                rep.primal_monotone,
                rep.primal_relaxed,
                rep.dual_hopf,
                "" if rep.martingale is None else rep.martingale,
                rep.gaps["monotone_vs_relaxed"],
                rep.gaps["relaxed_vs_dual"],
            ]
        )
    _write_csv(
        rows,
        ["t", "primal_monotone", "primal_relaxed", "dual_hopf", "martingale", "gap_monotone_relaxed", "gap_relaxed_dual"],
        os.path.join(args.out, "free_energy.csv"),
    )
    return 1 if failed else 0


def cmd_validate(args):
    from .measures import DiscreteMeasure
    from .validation import (
        counterexample_d3,
        legendre_identity_suite,
        rearrangement_inequality_check,
        rectangle_inequality_scan,
    )

    model, _, _ = _load_inputs(args, need_measure=False)
    report = {"legendre": legendre_identity_suite(model, samples=args.samples, seed=args.seed, tol=args.tol)}
    if model.species_count == 2:
        report["rectangle"] = rectangle_inequality_scan(model, samples=args.samples, seed=args.seed)
        rng = np.random.Generator(np.random.Philox(key=args.seed))
        worst = None
        for _ in range(100):
            atoms = rng.uniform(0.0, 2.0, size=(2, 2))
            r = rearrangement_inequality_check(
                model, DiscreteMeasure(atoms=tuple(map(tuple, atoms)), probs=(0.5, 0.5)), t=1.0
            )
            if worst is None or r["slack"] < worst["slack"]:
                worst = r
        report["rearrangement"] = worst
    report["counterexample_d3"] = counterexample_d3()
    report["ok"] = all(section["ok"] for key, section in report.items() if key != "ok")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(report, os.path.join(args.out, "validation.json"), "validation_report")
    else:
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        print()
    return 0 if report["ok"] else 1


def cmd_pde(args):
    from .measures import marginals
    from .parisi_pde import chi_d, solve_phi

    model, mu, _ = _load_inputs(args)
    grid = _grid_from_args(args)
    os.makedirs(args.out, exist_ok=True)
    species = []
    psi_total = 0.0
    for d, marg in enumerate(marginals(mu)):
        sol = solve_phi(marg, model.spins[d], grid=grid)
        curve = chi_d(marg, model.spins[d], grid=grid)
        assert np.max(np.abs(sol.dphi)) <= 1.0 + 1e-12
        _write_csv(
            [[t, v] for t, v in zip(curve.knots, curve.values)],
            ["t", "chi"],
            os.path.join(args.out, f"chi_species{d}.csv"),
        )
        species.append({"psi_d": sol.psi, "chi_end": float(curve.values[-1]), "knots": len(curve.knots)})
        psi_total += model.weights[d] * sol.psi
    payload = {"psi": psi_total, "species": species, "grid": grid.to_dict()}
    _write_json(payload, os.path.join(args.out, "pde.json"), "pde_report")
    return 0


def cmd_transport(args):
    from .measures import load_measure
    from .transport import BIG_COST, ot_cost

    model, mu, _ = _load_inputs(args)
    nu = load_measure(args.target)
    value, coupling = ot_cost(model, args.t[0], mu, nu)
    feasible = bool(np.isfinite(value))
    payload = {
        "value": value if feasible else BIG_COST,
        "feasible": feasible,
        "plan": [list(row) for row in coupling.plan] if coupling is not None else [],
        "marginal_residual": float(max(coupling.marginal_residuals())) if coupling is not None else 0.0,
    }
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(payload, os.path.join(args.out, "transport.json"), "transport_report")
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        print()
    return 0


def cmd_hopflax(args):
    from .functionals import ChiFunction
    from .hopflax import check_cone_convexity, s_t_chi_values

    model, mu, _ = _load_inputs(args)
    with open(args.chi, "r", encoding="utf-8") as fh:
        chi = ChiFunction.from_dict(json.load(fh))
    chi.validate()
    t = args.t[0]
    atoms, _ = mu.arrays()
    values = s_t_chi_values(model, chi, t, atoms)
    payload = {
        "t": t,
        "points": [list(a) for a in atoms],
        "values": [float(v) for v in values],
        "cone_convexity": check_cone_convexity(model, chi, t, samples=args.samples, seed=args.seed),
    }
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(payload, os.path.join(args.out, "hopflax.json"), "hopflax_report")
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        print()
    return 0 if payload["cone_convexity"]["ok"] else 1


def cmd_martingale(args):
    from .martingale import martingale_diagnostics, martingale_route
    from .measures import load_measure

    model, mu, _ = _load_inputs(args)
    nu = load_measure(args.target)
    grid = _grid_from_args(args)
    value, stderr, ensemble = martingale_route(
        model, args.t[0], mu, nu, grid=grid, seed=args.seed, paths=args.paths, steps=args.steps
    )
    payload = {
        "value": value,
        "stderr": stderr,
        "paths": ensemble.path_count if ensemble is not None else 0,
        "seed": args.seed,
        "diagnostics": martingale_diagnostics(ensemble) if ensemble is not None else [],
    }
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(payload, os.path.join(args.out, "martingale.json"), "martingale_report")
    else:
        json.dump(payload, sys.stdout, indent=2, sort_keys=True)
        print()
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="multispin",
        description="Free-energy functionals of multi-species spin glasses: "
        "primal, relaxed, dual and Monte Carlo evaluations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, measure=True):
        p.add_argument("--model", required=True, help="model JSON file")
        if measure:
            p.add_argument("--measure", required=True, help="measure or path JSON file")
        p.add_argument("--t", type=float, action="append", default=None, help="time parameter (repeatable)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", type=float, default=1e-6)
        p.add_argument("--threads", type=int, default=1, help="accepted for interface stability; execution is sequential")
        p.add_argument("--grid", default=None, help="grid spec JSON file")

    p = sub.add_parser("free-energy", help="duality report per t value")
    common(p)
    p.add_argument("--k-atoms", type=int, default=8)
    p.add_argument("--martingale", action="store_true")
    p.add_argument("--paths", type=int, default=20000)
    p.set_defaults(func=cmd_free_energy, need_out=True)

    p = sub.add_parser("validate", help="conjugate inequality suite")
    common(p, measure=False)
    p.add_argument("--samples", type=int, default=10000)
    p.set_defaults(func=cmd_validate, need_out=False)

    p = sub.add_parser("pde", help="solve the backward equation and chi per species")
    common(p)
    p.set_defaults(func=cmd_pde, need_out=True)

    p = sub.add_parser("transport", help="optimal transport cost between two measures")
    common(p)
    p.add_argument("--target", required=True, help="target measure JSON file")
    p.set_defaults(func=cmd_transport, need_out=False)

    p = sub.add_parser("hopflax", help="evaluate S_t chi at the atoms of a measure")
    common(p)
    p.add_argument("--chi", required=True, help="chi function JSON file")
    p.add_argument("--samples", type=int, default=1000)
    p.set_defaults(func=cmd_hopflax, need_out=False)

    p = sub.add_parser("martingale", help="Monte Carlo route for one instance")
    common(p)
    p.add_argument("--target", required=True, help="candidate maximizer measure JSON file")
    p.add_argument("--paths", type=int, default=20000)
    p.add_argument("--steps", type=int, default=500)
    p.set_defaults(func=cmd_martingale, need_out=False)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.t is None:
        args.t = [1.0]
    if getattr(args, "need_out", False) and not args.out:
        parser.error(f"{args.command} requires --out")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
