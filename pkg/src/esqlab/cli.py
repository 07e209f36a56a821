"""Command-line entry point: ``esqlab <subcommand> [options]``.

Every subcommand writes ``summary.json`` plus CSV tables into its output
directory. With ``--verify`` the exit status is 1 when the run's acceptance
check fails. Configuration and usage errors exit with 2, runtime failures
with 3.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .fields import apply_fractional_inverse, sample_white_noise, replica_seed, save_field
from .harness.config import ConfigError, ExperimentConfig, dump_config, load_config
from .harness.io import staged_output, write_csv, write_json

log = logging.getLogger("esqlab")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return ExperimentConfig()


def _outdir(args, cfg: ExperimentConfig | None, default: str) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is not None and getattr(args, "config", None):
        return Path(cfg.output.directory)
    return Path(default)


# ---------------------------------------------------------------------------
# subcommands; each returns (passed, kind, payload, {csv name: rows})
# ---------------------------------------------------------------------------


def cmd_reduce(args, cfg):
    from .harness.experiments import run_reduction_experiment

    rep = run_reduction_experiment(cfg)
    tables = {"estimates": rep.rows + rep.lattice_rows, "histogram": rep.bins}
    return rep.passed(), "reduction", rep.to_dict(), tables


def cmd_trend(args, cfg):
    from .harness.experiments import run_cutoff_removal_trend

    rep = run_cutoff_removal_trend(cfg, args.b)
    return rep.monotone, "trend", rep.to_dict(), {"trend": rep.rows}


def cmd_decorrelate(args, cfg):
    from .harness.experiments import run_decorrelation_probe

    rep = run_decorrelation_probe(cfg, args.radii)
    ok = all(abs(r.z) <= 4.0 for r in rep.rows if np.isfinite(r.z))
    return ok, "decorrelation", rep.to_dict(), {"decorrelation": rep.rows}


def cmd_girsanov_check(args, cfg):
    from .girsanov import det2, det2_eig, finite_dim_change_of_variables_check, tanh_shift

    rng = np.random.Generator(np.random.PCG64(args.seed))
    det_rows = []
    for i in range(args.matrices):
        A = rng.standard_normal((10, 10))
        # spectra stay well away from -1, where det(I + K) itself is ill-conditioned
        K = 0.1 * (A + A.T) / 2.0
        lu, ev = det2(K), det2_eig(K, symmetric=True)
        det_rows.append({"matrix": i, "lu": lu, "eig": ev, "rel_err": abs(lu - ev) / abs(ev)})
    det_ok = max(r["rel_err"] for r in det_rows) < 1e-12 and det2(np.zeros((4, 4))) == 1.0
    g = lambda y: np.tanh(y[0]) ** 2  # noqa: E731
    cov_rows, cov_ok = [], True
    for c in (1.0, -3.0):
        U, jac = tanh_shift(c)
        r = finite_dim_change_of_variables_check(1, U, jac, g, trials=args.trials, seed=args.seed)
        s = r.summary()
        cov_rows.append({"c": c, **s})
        cov_ok &= r.z(r.abs_weighted, r.preimage_weighted) <= 4 and r.z(r.signed_weighted, r.plain) <= 4
        if r.max_preimages == 1:
            cov_ok &= r.z(r.abs_weighted, r.plain) <= 4
    payload = {"det2": {"passed": det_ok, "max_rel_err": max(r["rel_err"] for r in det_rows)}, "change_of_variables": cov_rows}
    ok = det_ok and cov_ok
    tables = {"det2": det_rows, "change_of_variables": cov_rows}
    if args.config:
        from .harness.experiments import run_density_route_check

        dr = run_density_route_check(cfg)
        payload["density_route"] = dr.to_dict()
        tables["density_route"] = dr.rows
        ok &= dr.passed()
    return ok, "girsanov-check", payload, tables


def cmd_susy_check(args, cfg):
    from .kernels import green_gradient_identity_residual, make_cutoff
    from .superspace import SuperCovariance, SuperFunction, reduction_formula_check, susy_check

    radii = np.geomspace(0.05, 8.0, 20)
    kern_rows = [
        {"chi": chi, "r": float(r), "residual": green_gradient_identity_residual(chi, float(r))}
        for chi in args.chi
        for r in radii
    ]
    kern_ok = all(r["residual"] < 1e-5 for r in kern_rows)
    cov = SuperCovariance(0.5)
    cutoffs = [make_cutoff("exp-sqrt", 1.0, 1.0), make_cutoff("flat-top", 1.0, 1.0, radius=2.0)]
    red = [reduction_formula_check(cov, f) for f in cutoffs]
    red_ok = all(r.rel_gap < 1e-4 for r in red)
    sus = {
        "C_Phi": susy_check(cov.as_superfunction()),
        "f(|x|^2+4 theta thetabar)": susy_check(SuperFunction.from_radial(cutoffs[0].ftilde, cutoffs[0].ftilde_prime)),
    }
    sus_ok = all(s.passed for s in sus.values())
    payload = {"kernel_identity_passed": kern_ok, "reduction_formula": red, "susy": sus}
    return kern_ok and red_ok and sus_ok, "susy-check", payload, {"kernel_identity": kern_rows, "reduction_formula": red}


def cmd_pol_eq(args, cfg):
    from .kernels import make_cutoff
    from .superspace import ACCEPTANCE_MATRIX, verify_pol_eq

    f = make_cutoff("exp-sqrt", args.cutoff_b, 1.0)
    rows = [verify_pol_eq(p, P, n, chi=args.chi, f=f) for p, P, n in ACCEPTANCE_MATRIX]
    ok = all(r.gap < 1e-3 for r in rows)
    return ok, "pol-eq", {"rows": rows, "max_gap": max(r.gap for r in rows)}, {"pol_eq": rows}


def cmd_fermion_det(args, cfg):
    from .fermion_det import amplitude_sweep
    from .kernels import make_cutoff

    rows = amplitude_sweep(make_cutoff("exp-sqrt", args.cutoff_b, 1.0), np.linspace(0.0, 1.0, args.points), args.order, args.chi)
    ok = all(r.within for r in rows)
    return ok, "fermion-det", {"rows": rows, "all_within": ok}, {"sweep": rows}


def cmd_kernels_dump(args, cfg):
    from .kernels import KernelTable

    table = KernelTable.build(args.alpha, args.m2, args.r_min, args.r_max, args.nodes)
    rows = [{"r": float(r), "G": float(v)} for r, v in zip(table.radii, table.values)]
    payload = {"alpha": args.alpha, "m2": args.m2, "nodes": args.nodes, "tail_slope": table.tail_slope()}
    return True, "kernels-dump", payload, {"kernel": rows}


COMMANDS = {
    "reduce": (cmd_reduce, "weighted phi(0) statistics against the Gibbs measure"),
    "trend": (cmd_trend, "unweighted statistics along a decreasing cut-off sequence"),
    "decorrelate": (cmd_decorrelate, "origin/boundary covariance for flat-top cut-offs"),
    "girsanov-check": (cmd_girsanov_check, "det2 identities, change of variables, density route"),
    "susy-check": (cmd_susy_check, "kernel identity, supersymmetry and reduction formula"),
    "pol-eq": (cmd_pol_eq, "polynomial identity on the default matrix"),
    "fermion-det": (cmd_fermion_det, "Fredholm series versus determinant sweep"),
    "kernels-dump": (cmd_kernels_dump, "tabulate G_alpha to CSV"),
}
NEEDS_CONFIG = {"reduce", "trend", "decorrelate"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="esqlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"esqlab {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=name in NEEDS_CONFIG, help="YAML experiment configuration")
        p.add_argument("--out", help="output directory (default: from config or ./esqlab-<command>)")
        p.add_argument("--verify", action="store_true", help="exit 1 when the acceptance check fails")
        if name == "reduce":
            p.add_argument("--dump-field", action="store_true", help="also save phi of replica 0")
        if name == "trend":
            p.add_argument("--b", type=float, nargs="+", help="decreasing cut-off rates")
        if name == "decorrelate":
            p.add_argument("--radii", type=float, nargs="+")
        if name == "girsanov-check":
            p.add_argument("--matrices", type=int, default=100)
            p.add_argument("--trials", type=int, default=20000)
            p.add_argument("--seed", type=int, default=0)
        if name == "susy-check":
            p.add_argument("--chi", type=float, nargs="+", default=[0.25, 0.5, 1.0])
        if name in ("pol-eq", "fermion-det"):
            p.add_argument("--chi", type=float, default=0.5)
            p.add_argument("--cutoff-b", type=float, default=1.0)
        if name == "fermion-det":
            p.add_argument("--order", type=int, default=5)
            p.add_argument("--points", type=int, default=11)
        if name == "kernels-dump":
            p.add_argument("--alpha", type=float, default=2.0)
            p.add_argument("--m2", type=float, default=1.0)
            p.add_argument("--r-min", type=float, default=1e-3)
            p.add_argument("--r-max", type=float, default=40.0)
            p.add_argument("--nodes", type=int, default=256)
    return parser


def _dump_replica_zero(cfg: ExperimentConfig, out: Path) -> None:
    from .harness.experiments import _Setup
    from .solver import solve

    setup = _Setup.from_config(cfg)
    noise = sample_white_noise(setup.grid, replica_seed(cfg.seed, 0))
    phi = apply_fractional_inverse(noise.field, 1.0)
    if not setup.potential.is_zero():
        phi = phi + solve(noise, setup.potential, setup.cutoff, cfg.solver.build(cfg.seed)).solution
    save_field(phi, out / "phi_replica0.esqf")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    func, _ = COMMANDS[args.command]
    try:
        cfg = _config(args)
    except ConfigError as exc:
        print(f"esqlab: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _outdir(args, cfg, f"esqlab-{args.command}")
    try:
        with staged_output(out) as stage:
            passed, kind, payload, tables = func(args, cfg)
            write_json(stage / "summary.json", kind, {"passed": bool(passed), **payload})
            for name, rows in tables.items():
                write_csv(stage / f"{name}.csv", rows)
            if getattr(args, "config", None):
                (stage / "config.yaml").write_text(dump_config(cfg))
            if getattr(args, "dump_field", False) or (args.command == "reduce" and cfg.output.dump_fields):
                _dump_replica_zero(cfg, stage)
    except ConfigError as exc:
        print(f"esqlab: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report and clean up
        log.debug("failure", exc_info=True)
        print(f"esqlab {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    status = "PASS" if passed else "FAIL"
    print(f"{args.command}: {status} -> {out}")
    return EXIT_VERIFY if (args.verify and not passed) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
