"""Command-line entry point: every analytic and Monte Carlo operation, CSV out.

Exit codes: 0 success, 1 usage error, 2 numerical-accuracy failure,
3 model-validation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import re
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .density import DEFAULT_GRID_POINTS, FOURIER_TOL, density, density_grid
from .errors import AccuracyError, HorizonExhaustedError, ModelValidationError, NoDensityError, NonConvergenceError
from .fluctuation import (
    big_phi,
    fpt_density,
    inf_joint_density,
    inf_laplace,
    inf_moment,
    inf_tail,
    inf_tail_alt,
    phi_identity_residual,
    phi_lambda_z,
    phi_ode_residual,
    sup_atom_density,
    sup_atom_total,
    sup_joint_density,
    sup_laplace,
    sup_moment,
    sup_tail,
)
from .models import SpectrallyPositiveModel, SubordinatorModel, load_model, model_hash
from .quadrature import EPSABS, EPSREL, MAX_ABSERR
from .rng import DEFAULT_SEED
from .simulation import GAMMA_EPS, ballot_mc, kendall_mc
from .subordinator import TimeChangeSpec, laplace_mc, simulate_time_change, solve_phi_Y, time_changed_density

EXIT_OK, EXIT_USAGE, EXIT_ACCURACY, EXIT_VALIDATION = 0, 1, 2, 3

TOLERANCES = {"quad_epsabs": EPSABS, "quad_epsrel": EPSREL, "max_abserr": MAX_ABSERR, "fourier_tol": FOURIER_TOL}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Exits with the usage code and accepts negative value lists such as ``-1,-0.5`` or ``-2:0:5``."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._negative_number_matcher = re.compile(r"^-(\d|\.\d)[\d.eE+\-,:]*$")

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_values(text: str) -> list[float]:
    """``"a,b,c"`` or an inclusive linear grid ``"lo:hi:n"``."""
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            return [float(v) for v in np.linspace(float(lo), float(hi), int(n))]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"cannot parse value list {text!r}") from exc


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


@dataclass(frozen=True)
class Table:
    header: list
    rows: list
    errors: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([fmt(v) for v in row])
        return buf.getvalue()


@dataclass(frozen=True)
class RunConfig:
    command: str
    model_path: str | None = None
    params: dict = field(default_factory=dict)
    seed: int = DEFAULT_SEED
    output_path: str | None = None


# ---------------------------------------------------------------------------
# command handlers; each returns a Table


def _spm(model):
    if not isinstance(model, SpectrallyPositiveModel):
        raise ModelValidationError("this command needs a spectrally positive model, not a subordinator")
    return model


def _err(v):
    return getattr(v, "abserr", 0.0)


def cmd_density(model, p, seed):
    model = _spm(model)
    t = p["t1"]
    if p.get("x"):
        xs = np.asarray(p["x"], dtype=float)
        return Table(["x", "p"], list(zip(xs, np.atleast_1d(density(model, t, xs)))))
    grid = density_grid(model, t, p["n"], p["xmin"], p["xmax"])
    meta = {"method": grid.method_tag, "trapezoid_integral": grid.integral(), "x_range": [float(grid.x_values[0]), float(grid.x_values[-1])]}
    return Table(["x", "p"], list(zip(grid.x_values, grid.p_values)), [grid.abserr], meta)


def cmd_fpt(model, p, seed):
    model = _spm(model)
    rows = [(x, t, fpt_density(model, x, t)) for x in p["x"] for t in p["t"]]
    return Table(["x", "t", "fpt_density"], rows)


def cmd_sup(model, p, seed):
    model = _spm(model)
    if p.get("z"):
        rows = [(x, z, t, v := sup_joint_density(model, x, z, t), _err(v)) for x in p["x"] for z in p["z"] for t in p["t"]]
        return Table(["x", "z", "t", "sup_joint_density", "abserr"], rows, [r[-1] for r in rows])
    rows = [(x, t, v := sup_tail(model, x, t), _err(v)) for x in p["x"] for t in p["t"]]
    return Table(["x", "t", "sup_tail", "abserr"], rows, [r[-1] for r in rows])


def cmd_inf(model, p, seed):
    model = _spm(model)
    if p.get("z"):
        rows = [(x, z, t, v := inf_joint_density(model, x, z, t), _err(v)) for x in p["x"] for z in p["z"] for t in p["t"]]
        return Table(["x", "z", "t", "inf_joint_density", "abserr"], rows, [r[-1] for r in rows])
    rows = []
    for x in p["x"]:
        for t in p["t"]:
            a, b = inf_tail(model, x, t), inf_tail_alt(model, x, t)
            rows.append((x, t, a, _err(a), b, _err(b)))
    return Table(["x", "t", "inf_tail", "abserr", "inf_tail_alt", "alt_abserr"], rows, [e for r in rows for e in (r[3], r[5])])


def cmd_atoms(model, p, seed):
    model = _spm(model)
    if p.get("z"):
        rows = [(t, z, v := sup_atom_density(model, t, z), v.applicable) for t in p["t"] for z in p["z"]]
        return Table(["t", "z", "atom_density", "applicable"], rows)
    rows = [(t, v := sup_atom_total(model, t), _err(v), v.applicable) for t in p["t"]]
    return Table(["t", "atom_total", "abserr", "applicable"], rows, [r[2] for r in rows])


def cmd_laplace(model, p, seed):
    model = _spm(model)
    rows = []
    for lam in p["lam"]:
        for t in p["t"]:
            a, b = sup_laplace(model, lam, t), inf_laplace(model, lam, t)
            rows.append((lam, t, a, _err(a), b, _err(b)))
    return Table(["lam", "t", "sup_laplace", "sup_abserr", "inf_laplace", "inf_abserr"], rows, [e for r in rows for e in (r[3], r[5])])


def cmd_moments(model, p, seed):
    model = _spm(model)
    rows = []
    for n in p["n"]:
        for t in p["t"]:
            a, b = sup_moment(model, n, t), inf_moment(model, n, t)
            rows.append((n, t, a, _err(a), b, _err(b)))
    return Table(["n", "t", "sup_moment", "sup_abserr", "inf_moment", "inf_abserr"], rows, [e for r in rows for e in (r[3], r[5])])


def cmd_phi_identity(model, p, seed):
    model = _spm(model)
    rows = []
    for lam in p["lam"]:
        Phi = big_phi(model, lam)
        for z in p["z"]:
            phi = phi_lambda_z(model, lam, z)
            ode = phi_ode_residual(model, lam, z) if lam > 0 else math.nan
            rows.append((lam, z, Phi, phi, phi_identity_residual(model, lam, z), ode, _err(Phi) + _err(phi)))
    return Table(["lam", "z", "big_phi", "phi_lambda_z", "identity_residual", "ode_residual", "abserr"], rows, [r[-1] for r in rows])


def cmd_ballot_mc(model, p, seed):
    rec = ballot_mc(p["n_jumps"], c=p["c"], t=p["t1"], x=p["x1"], n_samples=p["samples"], seed=seed, workers=p["workers"])
    meta = {
        "mean_lebesgue_over_t": rec.mean_lebesgue_over_t,
        "general_form_diff": rec.general_form_diff,
        "general_form_stderr": rec.general_form_stderr,
        "n_samples": rec.n_samples,
    }
    return Table(["cell_t", "cell_x", "empirical", "analytic", "stderr"], [(p["t1"], p["x1"], rec.estimate, rec.target, rec.stderr)], meta=meta)


def cmd_kendall_mc(model, p, seed):
    model = _spm(model)
    rec = kendall_mc(model, p["x"], p["t_max"], p["samples"], seed, t_bins=p["t_bins"], workers=p["workers"], eps=p["eps"])
    meta = {
        "t_edges": [float(v) for v in rec.t_edges],
        "never_crossed": [float(v) for v in rec.never_crossed],
        "truncation_bias": rec.truncation_bias,
        "n_samples": rec.n_samples,
    }
    return Table(["cell_t", "cell_x", "empirical", "analytic", "stderr"], list(rec.rows()), meta=meta)


def _axis_names(name, d):
    return [name] if d == 1 else [f"{name}{i + 1}" for i in range(d)]


def cmd_subord(model, p, seed):
    if not isinstance(model, SubordinatorModel):
        raise ModelValidationError("subord needs a subordinator model ({\"coords\": [...]})")
    d = model.dim
    r = p["r"] if p["r"] is not None else [0.0] * d
    spec = TimeChangeSpec(model, tuple(r))
    if p.get("y"):
        ys = _vectors(p["y"], d, "--y")
        rows = [(*y, time_changed_density(spec, p["t1"], y)) for y in ys]
        return Table(_axis_names("y", d) + ["p_Y"], rows)
    zs = _vectors(p["z"] or ["0.5,1,2"], d, "--z")
    t = p["t1"]
    sample = simulate_time_change(spec, t, p["samples"], seed, eps=p["eps"], workers=p["workers"])
    rows = []
    for z in zs:
        est, se = laplace_mc(sample, z)
        # delta method for -(1/t) log of the empirical transform
        rows.append((*z, solve_phi_Y(spec, z), -math.log(est) / t, se / (est * t)))
    header = _axis_names("z", d) + ["phi_Y_analytic", "phi_Y_mc", "stderr"]
    meta = {
        "truncation_bias": sample.truncation_bias,
        "horizon": sample.horizon,
        "exceed_prob_bound": sample.exceed_prob_bound,
        "max_support_gap": float(np.abs(sample.support_gap(spec.r)).max()),
    }
    return Table(header, rows, meta=meta)


def _vectors(texts, d, flag):
    """d = 1: every listed value is a point.  d > 1: each occurrence of the flag is one vector."""
    if d == 1:
        return [np.array([v]) for text in texts for v in parse_values(text)]
    out = []
    for text in texts:
        v = parse_values(text)
        if len(v) != d:
            raise UsageError(f"{flag} {text!r} has {len(v)} entries, model dimension is {d}")
        out.append(np.array(v))
    return out


COMMANDS = {
    "density": cmd_density,
    "fpt": cmd_fpt,
    "sup": cmd_sup,
    "inf": cmd_inf,
    "atoms": cmd_atoms,
    "laplace": cmd_laplace,
    "moments": cmd_moments,
    "phi-identity": cmd_phi_identity,
    "ballot-mc": cmd_ballot_mc,
    "kendall-mc": cmd_kendall_mc,
    "subord": cmd_subord,
}


def run(config: RunConfig) -> int:
    """Execute one command and write its CSV (and sidecar when writing to a file)."""
    if config.command == "selftest":
        return _selftest(config)
    try:
        model = load_model(config.model_path) if config.model_path else None
        if model is None and config.command != "ballot-mc":
            raise UsageError(f"{config.command} needs --model")
        table = COMMANDS[config.command](model, config.params, config.seed)
    except (ModelValidationError, NoDensityError) as exc:
        print(f"levyflux: invalid model: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (AccuracyError, NonConvergenceError, HorizonExhaustedError) as exc:
        print(f"levyflux: accuracy failure: {exc}", file=sys.stderr)
        return EXIT_ACCURACY
    except (UsageError, ValueError, OSError) as exc:
        print(f"levyflux: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = table.to_csv()
    if config.output_path in (None, "-"):
        sys.stdout.write(text)
        return EXIT_OK
    with open(config.output_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    meta = {
        "command": config.command,
        "version": __version__,
        "params": {k: v for k, v in config.params.items() if k != "workers"},
        "model_hash": model_hash(model) if model is not None else None,
        "seed": config.seed,
        "tolerances": TOLERANCES,
        "abserr": [float(e) for e in table.errors],
        "max_abserr": max((float(e) for e in table.errors), default=0.0),
        **table.meta,
    }
    with open(config.output_path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def _selftest(config: RunConfig) -> int:
    from .acceptance import run_all

    results = []
    for res in run_all(config.params.get("only"), seed=config.seed, workers=config.params.get("workers", 1)):
        print(res.line(), flush=True)
        results.append(res)
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    return EXIT_OK if passed == len(results) else EXIT_ACCURACY


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="levyflux", description="Fluctuation identities for spectrally positive Lévy processes.")
    parser.add_argument("--version", action="version", version=f"levyflux {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, model=True, seed=False):
        if model:
            p.add_argument("--model", required=True, help="JSON model file")
        p.add_argument("-o", "--out", default=None, help="CSV output path (default stdout); a .meta.json sidecar is written next to it")
        if seed:
            p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"RNG seed (default {DEFAULT_SEED})")
            p.add_argument("--samples", type=int, default=100_000)
            p.add_argument("--workers", type=int, default=1, help="processes; results do not depend on this")

    values = dict(type=parse_values, metavar="LIST")

    p = sub.add_parser("density", help="marginal density p_t(x) on a grid or at given points")
    common(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--x", **values, help="points, 'a,b' or 'lo:hi:n' (overrides the grid flags)")
    p.add_argument("--xmin", type=float, default=None, help="grid start (default: mass-based bound)")
    p.add_argument("--xmax", type=float, default=None)
    p.add_argument("--n", type=int, default=DEFAULT_GRID_POINTS, help="grid points")

    p = sub.add_parser("fpt", help="first-passage density of T_x")
    common(p)
    p.add_argument("--x", required=True, **values)
    p.add_argument("--t", required=True, **values)

    for name, what in (("sup", "P(sup_t > x), or the joint density with --z"), ("inf", "P(inf_t < -x) by two formulas, or the joint density with --z")):
        p = sub.add_parser(name, help=what)
        common(p)
        p.add_argument("--x", required=True, **values)
        p.add_argument("--t", required=True, **values)
        p.add_argument("--z", **values)

    p = sub.add_parser("atoms", help="atom of the supremum at 0 (bounded variation)")
    common(p)
    p.add_argument("--t", required=True, **values)
    p.add_argument("--z", **values, help="give the atom density at these z < 0 instead")

    p = sub.add_parser("laplace", help="Laplace transforms of sup_t and inf_t")
    common(p)
    p.add_argument("--lam", required=True, **values)
    p.add_argument("--t", required=True, **values)

    p = sub.add_parser("moments", help="moments of sup_t and -inf_t")
    common(p)
    p.add_argument("--n", required=True, **values)
    p.add_argument("--t", required=True, **values)

    p = sub.add_parser("phi-identity", help="Φ(λ), φ(λ,z) and the identity residuals")
    common(p)
    p.add_argument("--lam", required=True, **values)
    p.add_argument("--z", **values)
    p.add_argument("--grid", **values, help="alias for --z")

    p = sub.add_parser("ballot-mc", help="Monte Carlo check of P(T_x = t | X_t = -x) = x/(ct)")
    common(p, model=False, seed=True)
    p.add_argument("--model", default=None, help=argparse.SUPPRESS)
    p.add_argument("--jumps", "--n-jumps", dest="n_jumps", type=int, default=5, help="jumps per pinned path")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--x", type=float, default=0.5)

    p = sub.add_parser("kendall-mc", help="Monte Carlo first-passage histogram against (x/t) p_t(-x)")
    common(p, seed=True)
    p.add_argument("--x", required=True, **values)
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--t-bins", type=int, default=5)
    p.add_argument("--eps", type=float, default=GAMMA_EPS, help="gamma jumps below this are dropped")

    p = sub.add_parser("subord", help="time-changed subordinator: exponent and Laplace transform, or density with --y")
    common(p, seed=True)
    p.add_argument("--r", type=parse_values, default=None, metavar="LIST")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--z", action="append", help="d = 1: list of z; d > 1: one vector per flag")
    p.add_argument("--y", action="append", help="density points, same convention as --z")
    p.add_argument("--eps", type=float, default=GAMMA_EPS)

    p = sub.add_parser("selftest", help="run the acceptance suite and print pass/fail per criterion")
    p.add_argument("--only", type=parse_values, default=None, metavar="LIST", help="criterion numbers")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--workers", type=int, default=1)
    return parser


def _config_from_args(args) -> RunConfig:
    cmd = args.command
    raw = {k: v for k, v in vars(args).items() if k not in ("command", "model", "out", "seed", "verbose")}
    params = dict(raw)
    if cmd == "phi-identity":
        params["z"] = args.z or args.grid
        if not params["z"]:
            raise UsageError("phi-identity needs --z or --grid")
    if cmd == "moments":
        if any(n != int(n) or n < 1 for n in args.n):
            raise UsageError("--n must list positive integers")
        params["n"] = [int(n) for n in args.n]
    if cmd in ("ballot-mc", "subord", "density"):
        params["t1"] = params.pop("t")
    if cmd == "ballot-mc":
        params["x1"] = params.pop("x")
    if cmd == "selftest" and args.only is not None:
        params["only"] = [int(v) for v in args.only]
    params.pop("grid", None)
    return RunConfig(cmd, getattr(args, "model", None), params, getattr(args, "seed", DEFAULT_SEED), getattr(args, "out", None))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = _config_from_args(args)
    except UsageError as exc:
        print(f"levyflux: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
