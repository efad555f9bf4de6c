"""Command-line driver: ``prqc {decay,gap,tv,chain-export}``.

Every run writes a CSV whose leading ``#`` lines form the run manifest
(subcommand, flags, seed, version). The wall-clock timestamp lives in a
``<out>.manifest.json`` sidecar instead, so that repeating a run with the same
flags reproduces the CSV byte for byte.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from datetime import datetime, timezone
from fractions import Fraction

import numpy as np

from . import __version__
from .errors import CapacityError, ConvergenceError
from .markov import (
    averaged_rotation,
    build_chain,
    gap_scan,
    read_triplets,
    reduced_rotation,
    stationary_distribution,
    tv_trajectory,
    write_triplets,
)
from .mbqc import run_cluster_ensemble
from .metrics import (
    HistogramSpec,
    component_counts,
    detect_cutoff,
    distance_from_counts,
    fit_exponential_decay,
    haar_control_distance,
    meyer_wallach_q,
    post_plateau_fit,
    q_random_expectation,
)
from .pauli import Topology
from .statevector import CircuitConfig, GateEnsemble, pauli_sq_coefficients, run_ensemble

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_CAPACITY, EXIT_CONVERGENCE = 0, 1, 2, 3, 4
JACKKNIFE_GROUPS = 10


class UsageError(ValueError):
    pass


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.12g}"


def parse_fraction(text: str) -> float:
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def parse_grid(text: str):
    """``start:stop:step`` with ``stop`` included when the grid lands on it."""
    try:
        start, stop, step = (float(Fraction(p)) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError("grid needs step > 0 and stop >= start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 12) for k in range(count)]


# -- output ------------------------------------------------------------------


class Table:
    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.args = args
        self.notes = []
        self.header = []
        self.rows = []
        self.footer = []

    def flags(self) -> dict:
        skip = {"func", "out", "command"}
        out = {}
        for key, value in sorted(vars(self.args).items()):
            if key in skip or value is None:
                continue
            if isinstance(value, list):
                value = ",".join(fmt(v) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, float):
                value = fmt(value)
            out[key.replace("_", "-")] = str(value)
        return out

    def render(self) -> str:
        lines = [f"# prqc {__version__}", f"# command: {self.command}"]
        lines.append("# flags: " + " ".join(f"--{k} {v}" for k, v in self.flags().items()))
        if getattr(self.args, "seed", None) is not None:
            lines.append(f"# seed: {self.args.seed}")
        lines += [f"# {note}" for note in self.notes]
        lines.append(",".join(self.header))
        lines += [",".join(fmt(v) for v in row) for row in self.rows]
        lines += [f"# {line}" for line in self.footer]
        return "\n".join(lines) + "\n"


def atomic_write(path: str, text: str):
    """Write via a temporary file in the target directory, so failures leave nothing behind."""
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".prqc-", suffix=".tmp")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(path: str, table: Table, outputs):
    manifest = {
        "subcommand": table.command,
        "flags": table.flags(),
        "seed": getattr(table.args, "seed", None),
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "outputs": list(outputs),
    }
    atomic_write(path + ".manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def emit(table: Table, out):
    text = table.render()
    if out is None:
        sys.stdout.write(text)
        return
    atomic_write(out, text)
    write_manifest(out, table, [out])


def fit_lines(name: str, report, fit) -> list:
    line = f"cutoff metric={name} tau={report.tau} plateau={fmt(report.plateau)} threshold={fmt(report.threshold)}"
    if fit is None:
        return [line, f"fit metric={name} status=insufficient-points"]
    return [
        line,
        f"fit metric={name} rate={fmt(fit.rate)} intercept={fmt(fit.intercept)} "
        f"residual={fmt(fit.residual)} rms={fmt(fit.rms)} points={fit.points}",
    ]


def mean_se(values):
    values = np.asarray(values, dtype=float)
    mean = values.mean(axis=0)
    if values.shape[0] < 2:
        return mean, np.full_like(mean, np.nan)
    return mean, values.std(axis=0, ddof=1) / math.sqrt(values.shape[0])


def jackknife_distance(counts, spec: HistogramSpec):
    """Pooled histogram distance per step and its delete-a-group jackknife error.

    ``counts`` has shape ``(realizations, steps, bins)``.
    """
    total = counts.sum(axis=0)
    dist = np.array([distance_from_counts(t, spec) for t in total])
    groups = min(JACKKNIFE_GROUPS, counts.shape[0])
    if groups < 2:
        return dist, np.full_like(dist, np.nan)
    labels = np.arange(counts.shape[0]) % groups
    partial = np.stack([total - counts[labels == g].sum(axis=0) for g in range(groups)])
    loo = np.array([[distance_from_counts(t, spec) for t in p] for p in partial])
    se = np.sqrt((groups - 1) / groups * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
    return dist, se


# -- subcommands -------------------------------------------------------------


def _ensemble(args) -> GateEnsemble:
    kind = args.ensemble or "haar"
    if kind == "mixture":
        if args.c is None:
            raise UsageError("--ensemble mixture needs --c")
        return GateEnsemble.mixture(args.c)
    if args.c is not None:
        raise UsageError("--c only applies to --ensemble mixture")
    return getattr(GateEnsemble, kind)()


def _pauli_sq(psi):
    return pauli_sq_coefficients(psi)


def _pt_counts(psi):
    return component_counts(psi).astype(np.int32)


def cmd_decay(args) -> Table:
    metrics = args.metric or ["q", "pt"]
    if len(set(metrics)) != len(metrics):
        raise UsageError("repeated --metric")
    if args.ensemble_size < 1:
        raise UsageError("--ensemble-size must be positive")
    table = Table("decay", args)
    funcs = {}
    if "q" in metrics:
        funcs["q"] = meyer_wallach_q
    if "pt" in metrics:
        funcs["pt"] = _pt_counts
    if args.mode == "circuit":
        if args.columns is not None:
            raise UsageError("--columns applies to cluster modes; use --iters for circuits")
        if args.iters is None:
            raise UsageError("circuit mode needs --iters")
        if "tv" in metrics:
            funcs["tv"] = _pauli_sq
        cfg = CircuitConfig(
            args.n, args.iters, _ensemble(args), Topology.from_name(args.topology, args.n), args.seed
        )
        data = run_ensemble(cfg, args.ensemble_size, funcs)
        table.notes.append(f"time_axis: iterations; ensemble={cfg.ensemble.label()}")
    else:
        if args.ensemble is not None or args.c is not None:
            raise UsageError("--ensemble/--c apply to circuit mode only")
        if "tv" in metrics:
            raise UsageError("--metric tv needs circuit mode")
        mode = args.mode.split("-", 1)[1]
        per = 3 if mode == "standard" else 1
        if (args.iters is None) == (args.columns is None):
            raise UsageError("cluster modes need exactly one of --iters and --columns")
        iters = args.iters
        if args.columns is not None:
            iters, rest = divmod(args.columns - 1, per)
            if args.columns < 1 or rest:
                raise UsageError(f"{args.mode} needs {per}*l+1 columns")
        data = run_cluster_ensemble(args.n, iters, mode, args.ensemble_size, funcs, seed=args.seed, topology=args.topology)
        table.notes.append("time_axis: lattice columns, counting the unmeasured output column")
    steps = next(iter(data.values())).shape[1]
    offset = 0 if args.mode == "circuit" else 1
    columns = {"step": np.arange(steps) + offset}
    if "q" in metrics:
        q_r = float(q_random_expectation(args.n))
        q_mean, q_se = mean_se(data["q"])
        columns.update(q_mean=q_mean, q_se=q_se, q_dev=np.abs(q_mean - q_r))
        table.notes.append(f"q_random: {fmt(q_r)}")
        report, fit = post_plateau_fit(np.abs(q_mean - q_r), se=q_se)
        table.footer += fit_lines("q_dev", report, fit)
    if "pt" in metrics:
        spec = HistogramSpec()
        pt, pt_se = jackknife_distance(data["pt"], spec)
        control = np.random.default_rng([args.seed, args.ensemble_size, 1])
        floor = haar_control_distance(args.n, args.ensemble_size, control, spec)
        columns.update(pt_mean=pt, pt_se=pt_se)
        table.notes.append(f"pt_floor: {fmt(floor)} (Haar states, same ensemble size)")
        report, fit = post_plateau_fit(pt, floor=floor)
        table.footer += fit_lines("pt", report, fit)
    if "tv" in metrics:
        pi = stationary_distribution(args.n, "full")
        mean, _ = mean_se(data["tv"])
        tv = 0.5 * np.abs(mean - pi).sum(axis=1)
        columns.update(tv_mean=tv, tv_se=np.full_like(tv, np.nan))
        report, fit = post_plateau_fit(tv)
        table.footer += fit_lines("tv", report, fit)
    table.header = list(columns)
    table.rows = [tuple(col[i] for col in columns.values()) for i in range(steps)]
    return table


def cmd_gap(args) -> Table:
    grid = args.c_grid or [0.0, 1 / 3]
    topology = args.topology
    table = Table("gap", args)
    table.header = ["n", "c", "gap", "rate"]
    for n in args.n:
        kw = {} if args.max_iter is None else {"max_iter": args.max_iter}
        scan = gap_scan(n, grid, Topology.from_name(topology, n), args.method, **kw)
        table.rows += [(n, c, gap, rate) for c, gap, rate in scan.rows]
        c_best, gap_best = scan.argmax
        ratio = "nan" if scan.gamma_ratio is None else fmt(scan.gamma_ratio)
        table.footer.append(f"summary n={n} argmax_c={fmt(c_best)} max_gap={fmt(gap_best)} gamma_ratio={ratio}")
    return table


def cmd_tv(args) -> Table:
    c = 1 / 3 if args.c is None else args.c
    if args.iters < 0:
        raise UsageError("--iters must be non-negative")
    topology = Topology.from_name(args.topology, args.n)
    chain = build_chain(args.n, reduced_rotation(c), topology)
    tv = tv_trajectory(chain, args.iters)
    table = Table("tv", args)
    columns = {"step": np.arange(args.iters + 1), "tv": tv}
    threshold = args.threshold_factor * tv[0]
    report = detect_cutoff(tv, threshold)
    try:
        fit = fit_exponential_decay(tv, burn_in=args.burn_in)
    except ValueError:
        fit = None
    table.footer += fit_lines("tv", report, fit)
    if args.metric and args.metric != ["q"]:
        raise UsageError("tv accepts only --metric q (companion Monte-Carlo)")
    if args.metric:
        ensemble = GateEnsemble.hz() if c == 0 else GateEnsemble.mixture(c)
        if args.ensemble is not None:
            ensemble = getattr(GateEnsemble, args.ensemble)() if args.ensemble != "mixture" else ensemble
        cfg = CircuitConfig(args.n, args.iters, ensemble, topology, args.seed)
        data = run_ensemble(cfg, args.ensemble_size, {"q": meyer_wallach_q})
        q_mean, q_se = mean_se(data["q"])
        columns.update(q_mean=q_mean, q_se=q_se, one_minus_q=1.0 - q_mean)
        table.notes.append(f"companion ensemble: {ensemble.label()}")
        # Q sits at its maximum 1 while the plateau lasts
        if args.iters:
            q_report = detect_cutoff(1.0 - q_mean, 1e-9, start=1)
            table.footer.append(
                f"cutoff metric=1-q tau={q_report.tau} plateau={fmt(q_report.plateau)} threshold={fmt(q_report.threshold)}"
            )
    table.header = list(columns)
    table.rows = [tuple(col[i] for col in columns.values()) for i in range(args.iters + 1)]
    return table


def cmd_chain_export(args) -> Table:
    c = 0.5 if args.c is None else args.c
    topology = Topology.from_name(args.topology, args.n)
    if args.space == "reduced":
        rotation = reduced_rotation(c)
    else:
        rotation = averaged_rotation(GateEnsemble.mixture(c))
    chain = build_chain(args.n, rotation, topology, remove_identity=args.remove_identity)
    directory = os.path.dirname(os.path.abspath(args.out))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".prqc-", suffix=".tmp")
    except OSError as exc:
        raise OSError(f"cannot write {args.out}: {exc.strerror}") from None
    os.close(fd)
    try:
        write_triplets(chain, tmp, c)
        _, back = read_triplets(tmp)
        if (abs(back - chain.sparse())).max() != 0:
            raise RuntimeError(f"{args.out}: read-back does not reproduce the matrix")
        os.replace(tmp, args.out)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    table = Table("chain-export", args)
    write_manifest(args.out, table, [args.out])
    return table


# -- argument parsing --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prqc", description="Pseudo-random quantum state experiments.")
    parser.add_argument("--version", action="version", version=f"prqc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seeded=True):
        p.add_argument("--topology", choices=["open", "closed"], default="open")
        p.add_argument("--out", help="output path (stdout when omitted)")
        if seeded:
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--ensemble-size", type=int, default=200)

    p = sub.add_parser("decay", help="ensemble decay of Q and Porter-Thomas distance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--mode", choices=["circuit", "cluster-standard", "cluster-enhanced"], default="circuit")
    p.add_argument("--ensemble", choices=["haar", "hz", "zrot", "mixture"])
    p.add_argument("--c", type=parse_fraction)
    p.add_argument("--iters", type=int)
    p.add_argument("--columns", type=int)
    p.add_argument("--metric", action="append", choices=["pt", "q", "tv"])
    common(p)
    p.set_defaults(func=cmd_decay)

    p = sub.add_parser("gap", help="spectral gap of the reduced chain over a c grid")
    p.add_argument("--n", type=int, nargs="+", required=True)
    p.add_argument("--c-grid", type=parse_grid)
    p.add_argument("--method", choices=["dense", "iterative"], default="dense")
    p.add_argument("--max-iter", type=int, help="Arnoldi step limit for --method iterative")
    common(p, seeded=False)
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("tv", help="total-variation distance along the reduced chain")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--c", type=parse_fraction)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--burn-in", type=int, default=3)
    p.add_argument("--threshold-factor", type=float, default=0.01)
    p.add_argument("--metric", action="append", choices=["q"])
    p.add_argument("--ensemble", choices=["haar", "hz", "zrot", "mixture"])
    common(p)
    p.set_defaults(func=cmd_tv)

    p = sub.add_parser("chain-export", help="write a transition matrix as sparse triplets")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--c", type=parse_fraction)
    p.add_argument("--space", choices=["full", "reduced"], default="reduced")
    p.add_argument("--remove-identity", action="store_true")
    p.add_argument("--topology", choices=["open", "closed"], default="open")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_chain_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        table = args.func(args)
        if args.command != "chain-export":
            emit(table, args.out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"prqc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapacityError as exc:
        print(f"prqc: capacity: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except ConvergenceError as exc:
        print(f"prqc: not converged: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except OSError as exc:
        print(f"prqc: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"prqc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
