"""Command line driver for steady-state experiments on bundled or user networks.

Subcommands::

    nlpc-bench solve    --network net.crn --starts 50 --seed 1 --out solve.csv
    nlpc-bench compare  --network net.crn --horizon 1e4
    nlpc-bench ablation --network net.crn --starts 20
    nlpc-bench dynamics --network net.crn --state x0.txt --samples 11

Every start ``i`` draws its points from a sampler seeded with
``SeedSequence([seed, i])``, so methods and projector variants run on the same
starts.  A ``--config`` file holds ``key = value`` lines using the flag names
(with underscores) and any solver or integrator setting; flags take precedence.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import itertools
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .crn import (NetworkParseError, NotWeaklyElementedError, SamplingError, SccSampler,
                  conservation_basis, load_network, make_target, parse_directives,
                  state_vector, steady_state_problem)
from .dynamics import IntegrationError, IntegratorConfig, integrate, write_trajectory_csv
from .solver import PROJECTORS, SolverConfig, fmt_float, nlpc_solve_with_restarts

log = logging.getLogger("nlpc.cli")

SOLVE_COLUMNS = ("start_index", "seed", "status", "iterations", "restarts", "wall_time_s",
                 "residual_norm", "zero_component_fraction")
COMPARE_COLUMNS = ("start_index", "seed", "method", "wall_time_s", "residual_norm")
ABLATION_COLUMNS = ("start_index", "variant", "restarts", "max_zero_component_pct",
                    "max_cond_estimate_log10", "converged")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad input: unreadable files, malformed data, inconsistent options."""


@dataclass(frozen=True)
class ExperimentSpec:
    network: Path
    moieties: Optional[Path] = None
    state: Optional[Path] = None
    starts: int = 50
    seed: int = 0
    variant: str = "nonlinear"
    out: Optional[Path] = None
    workers: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def __post_init__(self):
        if self.starts < 1:
            raise UsageError("--starts must be at least 1")
        if self.workers < 1:
            raise UsageError("--workers must be at least 1")
        if self.variant not in PROJECTORS:
            raise UsageError(f"--variant must be one of {', '.join(PROJECTORS)}")


def start_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([master, index]).generate_state(1)[0])


# --- configuration -----------------------------------------------------------

_PATH_KEYS = ("network", "moieties", "state", "out")
_SPEC_KEYS = {"starts": int, "seed": int, "variant": str, "workers": int}
_SOLVER_FIELDS = {f.name: f for f in dataclasses.fields(SolverConfig)}
_INTEGRATOR_FIELDS = {f.name: f for f in dataclasses.fields(IntegratorConfig)}


def _convert(key, raw, default):
    raw = raw.strip()
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean for {key}, got {raw!r}")
    if default is None:
        return None if raw.lower() == "none" else float(raw)
    if isinstance(default, int):
        v = float(raw)
        if v != int(v):
            raise ValueError(f"expected an integer for {key}, got {raw!r}")
        return int(v)
    if isinstance(default, float):
        return float(raw)
    return raw


def read_config(path: Path) -> dict:
    """Parse ``key = value`` lines; relative paths resolve against the file's folder."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not eq or not key:
            raise UsageError(f"{path}: line {lineno}: expected 'key = value'")
        try:
            if key in _PATH_KEYS:
                v = Path(value.strip())
                out[key] = v if v.is_absolute() else path.parent / v
            elif key in _SPEC_KEYS:
                out[key] = _convert(key, value, _SPEC_KEYS[key]())
            elif key in _SOLVER_FIELDS:
                out[key] = _convert(key, value, _SOLVER_FIELDS[key].default)
            elif key in _INTEGRATOR_FIELDS:
                out[key] = _convert(key, value, _INTEGRATOR_FIELDS[key].default)
            else:
                raise UsageError(f"{path}: line {lineno}: unknown setting {key!r}")
        except ValueError as exc:
            raise UsageError(f"{path}: line {lineno}: {exc}") from exc
    return out


def build_spec(args: argparse.Namespace) -> ExperimentSpec:
    settings = read_config(args.config) if args.config is not None else {}
    for key in ("network", "moieties", "state", "out", "starts", "seed", "variant",
                "workers", "horizon", "early_exit_residual", "samples"):
        v = getattr(args, key, None)
        if v is not None:
            settings[key] = v
    if "network" not in settings:
        raise UsageError("a network file is required (--network or 'network' in the config)")
    solver_kw = {k: settings.pop(k) for k in list(settings) if k in _SOLVER_FIELDS}
    if "variant" in settings:
        solver_kw["projector"] = settings["variant"]
    integ_kw = {k: settings.pop(k) for k in list(settings) if k in _INTEGRATOR_FIELDS}
    try:
        solver = SolverConfig(**solver_kw)
        integrator = IntegratorConfig(**integ_kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid setting: {exc}") from exc
    return ExperimentSpec(solver=solver, integrator=integrator, **settings)


# --- inputs ------------------------------------------------------------------

def _read_text(path: Path, what: str) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {what} file {path}: {exc.strerror or exc}") from exc


def _side_file(path: Path, what: str, directive: str):
    try:
        declared, reactions, conc, moieties = parse_directives(_read_text(path, what))
    except NetworkParseError as exc:
        raise UsageError(f"{path}: {exc}") from exc
    if declared or reactions or (conc and directive != "conc") or (moieties and directive != "moiety"):
        raise UsageError(f"{path}: a {what} file may only contain '{directive}' lines")
    return conc, moieties


def load_inputs(spec: ExperimentSpec, need_target: bool = True):
    """Network, optional explicit initial state, and (if requested) the target."""
    if not spec.network.is_file():
        raise UsageError(f"network file not found: {spec.network}")
    try:
        net = load_network(spec.network)
    except NetworkParseError as exc:
        raise UsageError(f"{spec.network}: {exc}") from exc
    except OSError as exc:
        raise UsageError(f"cannot read network file {spec.network}: {exc.strerror or exc}") from exc
    state = None
    if spec.state is not None:
        conc, _ = _side_file(spec.state, "state", "conc")
        try:
            state = state_vector(net, {name: v for name, v, _ in conc})
        except ValueError as exc:
            raise UsageError(f"{spec.state}: {exc}") from exc
    moieties = None
    if spec.moieties is not None:
        _, moieties = _side_file(spec.moieties, "moiety", "moiety")
    target = None
    if need_target or (state is None and net.initial is None):
        try:
            target = make_target(net, conservation_basis(net), moieties=moieties, state=state)
        except NotWeaklyElementedError as exc:
            raise UsageError(f"{spec.network}: {exc}") from exc
        except ValueError as exc:
            raise UsageError(f"{spec.network}: {exc}") from exc
    return net, state, target


# --- per-start work ------------------------------------------------------------

def _starts(spec, target, state=None):
    """Point stream per start; an explicit state is used as the first point."""
    def factory(i):
        sampler = SccSampler(target, start_seed(spec.seed, i))
        draws = (sampler() for _ in itertools.count())
        if state is None:
            return draws
        return itertools.chain([np.asarray(state, dtype=float)], draws)
    return factory


def _trace_stats(outcome, n):
    records = list(outcome.all_records())
    zeros = max((r.zero_components for r in records), default=0)
    conds = [r.cond_estimate for r in records if not math.isnan(r.cond_estimate)]
    cond = max(conds) if conds else math.nan
    cond_log = math.log10(cond) if cond > 0 else math.nan
    return zeros / n, cond_log


def _timed_solve(problem, sampler, cfg):
    t0 = time.perf_counter()
    out = nlpc_solve_with_restarts(problem, sampler, cfg)
    return out, time.perf_counter() - t0


def _map(spec, fn, n):
    if spec.workers == 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=spec.workers) as pool:
        return list(pool.map(fn, range(n)))


def run_solve(spec: ExperimentSpec, writer) -> int:
    net, state, target = load_inputs(spec)
    problem = steady_state_problem(target)
    factory = _starts(spec, target, state)

    def one(i):
        out, dt = _timed_solve(problem, factory(i), spec.solver)
        zero_frac, _ = _trace_stats(out, net.n_species)
        return out.converged, [i, start_seed(spec.seed, i), out.status.value, out.total_iterations,
                               out.restarts, fmt_float(dt), fmt_float(problem.residual_norm(out.x)),
                               fmt_float(zero_frac)]

    writer.writerow(SOLVE_COLUMNS)
    results = _map(spec, one, spec.starts)
    for _, row in results:
        writer.writerow(row)
    ok = sum(c for c, _ in results)
    log.info("%d of %d starts converged", ok, spec.starts)
    return EXIT_OK if ok == spec.starts else EXIT_FAILED


def run_compare(spec: ExperimentSpec, writer) -> int:
    net, state, target = load_inputs(spec)
    problem = steady_state_problem(target)
    factory = _starts(spec, target, state)
    integ = dataclasses.replace(spec.integrator, samples=1)

    def one(i):
        draws = factory(i)
        x0 = next(draws)
        out, dt_n = _timed_solve(problem, itertools.chain([x0], draws), spec.solver)
        t0 = time.perf_counter()
        x_dyn = integrate(net, x0, integ).final
        dt_d = time.perf_counter() - t0
        seed = start_seed(spec.seed, i)
        # one evaluator for both methods
        return out.converged, [
            [i, seed, "nlpc", fmt_float(dt_n), fmt_float(problem.residual_norm(out.x))],
            [i, seed, "dynamic", fmt_float(dt_d), fmt_float(problem.residual_norm(x_dyn))],
        ]

    writer.writerow(COMPARE_COLUMNS)
    results = _map(spec, one, spec.starts)
    for _, rows in results:
        writer.writerows(rows)
    return EXIT_OK if all(c for c, _ in results) else EXIT_FAILED


def run_ablation(spec: ExperimentSpec, writer) -> int:
    net, state, target = load_inputs(spec)
    problem = steady_state_problem(target)
    factory = _starts(spec, target, state)

    def one(i):
        rows, ok = [], True
        for variant in PROJECTORS:
            cfg = dataclasses.replace(spec.solver, projector=variant)
            out = nlpc_solve_with_restarts(problem, factory(i), cfg)
            zero_frac, cond_log = _trace_stats(out, net.n_species)
            ok &= out.converged or variant != "nonlinear"
            rows.append([i, variant, out.restarts, fmt_float(100.0 * zero_frac),
                         fmt_float(cond_log), int(out.converged)])
        return ok, rows

    writer.writerow(ABLATION_COLUMNS)
    results = _map(spec, one, spec.starts)
    for _, rows in results:
        writer.writerows(rows)
    return EXIT_OK if all(c for c, _ in results) else EXIT_FAILED


def run_dynamics(spec: ExperimentSpec, out_stream) -> int:
    net, state, target = load_inputs(spec, need_target=False)
    if state is None:
        state = net.initial_state()
    if state is None:
        state = SccSampler(target, start_seed(spec.seed, 0))()
    try:
        traj = integrate(net, state, spec.integrator)
    except ValueError as exc:
        raise UsageError(f"invalid initial state: {exc}") from exc
    write_trajectory_csv(net, traj, out_stream)
    return EXIT_OK


COMMANDS = {"solve": run_solve, "compare": run_compare, "ablation": run_ablation,
            "dynamics": run_dynamics}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlpc-bench", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"solve": "solve for the steady state from sampled starts",
             "compare": "pair each solve with a long-horizon integration",
             "ablation": "run every start with both projectors",
             "dynamics": "integrate from one initial state and write the trajectory"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--network", type=Path)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--moieties", type=Path, help="file of 'moiety <index> <value>' lines")
        src.add_argument("--state", type=Path, help="file of 'conc <species> <value>' lines")
        p.add_argument("--starts", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--config", type=Path)
        p.add_argument("--out", type=Path, help="output CSV (default: stdout)")
        p.add_argument("--variant", choices=PROJECTORS)
        p.add_argument("--horizon", type=float)
        p.add_argument("--early-exit-residual", type=float)
        p.add_argument("--samples", type=int, help="trajectory rows for 'dynamics'")
        p.add_argument("--workers", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = build_spec(args)
        if spec.out is not None:
            try:
                stream = open(spec.out, "w", encoding="utf-8", newline="")
            except OSError as exc:
                raise UsageError(f"cannot write {spec.out}: {exc.strerror or exc}") from exc
        else:
            stream = sys.stdout
        try:
            run = COMMANDS[args.command]
            target = stream if args.command == "dynamics" else csv.writer(stream, lineterminator="\n")
            code = run(spec, target)
        finally:
            if stream is not sys.stdout:
                stream.close()
    except UsageError as exc:
        print(f"nlpc-bench: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrationError, SamplingError) as exc:
        print(f"nlpc-bench: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    if code == EXIT_FAILED:
        print(f"nlpc-bench: {args.command}: some starts did not converge", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
