"""Command-line front end.

Commands
--------
analyze-symbol     eigenstructure of the first-order symbol at one state
solve-linear       frozen-coefficient linear solve with the energy trace
solve-quasilinear  horizon choice and fixed-point iteration
demo-1d            coupled versus uncoupled solve-map gains
fib-check          Fibonacci-contraction certificate for a CSV column

Exit status: 0 success, 2 validation error, 3 solver or numeric error,
4 contraction failure.  Every run writes ``manifest.json`` next to its
CSV outputs; passing a manifest back as ``--config`` reproduces them.
"""

from __future__ import annotations

import os

# Thread pools read these at load time, so they must be set before numpy.
_THREADS = os.environ.get("CHRISTOV_LAB_THREADS")
if _THREADS:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(_var, _THREADS)

import argparse  # noqa: E402
import copy  # noqa: E402
import csv  # noqa: E402
import io  # noqa: E402
import json  # noqa: E402
import logging  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402
import tempfile  # noqa: E402
import time  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__, grid, linsolve, model, quasisolve, seqlib  # noqa: E402

log = logging.getLogger("christov_lab")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_CONTRACTION = 4

MANIFEST_VERSION = 1
COMMANDS = ("analyze-symbol", "solve-linear", "solve-quasilinear", "demo-1d", "fib-check")

# Named random streams; each gets its own child of the run seed.
STREAMS = {"phases": 0}


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


class ContractionCheckFailed(ArithmeticError):
    """A Fibonacci certificate did not pass."""


# -- configuration -------------------------------------------------------------

DEFAULTS: dict = {
    "seed": 0,
    "grid": {"dim": 1, "n": 128},
    "thermo": {"R": 1.0, "c_v": 1.0, "mu": 1.0, "lambda": 0.0, "kappa": 1.0, "tau": 1.0, "viscosity_exponent": 0.0},
    "initial": {
        "rho": 1.0,
        "v": None,
        "theta": 1.0,
        "q": None,
        "modes": [{"field": "rho", "component": 0, "k": None, "amplitude": 1e-3, "phase": 0.0}],
    },
    "solver": {"dt": 2e-4, "T": 0.2, "delta": 0.0, "m": 2, "save_stride": 1, "scheme": "ssprk3", "c_stab": 0.2},
    "iteration": {
        "s": None,
        "T0": 0.1,
        "dt": 2e-4,
        "tol": 1e-11,
        "k_max": 40,
        "alpha_cap": 0.45,
        "g2": None,
        "norm_mode": "perturbation",
        "window": 2,
        "scheme": "ssprk3",
        "c_stab": 0.2,
    },
    "demo": {"T0_list": [0.02, 0.04, 0.08], "n": 128, "s": 2, "dt": None, "count": 24, "scheme": "ssprk3"},
    "symbol": {
        "rho": 1.0,
        "v": [0.0, 0.0, 0.0],
        "theta": 1.0,
        "q": [1.0, 0.0, 0.0],
        "xi": [1.0, 0.0, 0.0],
        "cluster_tol": 1e-6,
        "rank_tol": 1e-8,
    },
    "fib": {"input": None, "column": "a_k", "alpha0": None},
}

MODE_KEYS = {"field", "component", "k", "amplitude", "phase"}
FIELDS = ("rho", "v", "theta", "q")


def _merge(base: dict, user: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in user.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"cli: unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"cli: config key {where!r} must be an object")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def load_config(path: str | None) -> dict:
    """Read a JSON config (or a run manifest) and fill in defaults."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"cli: config file not found: {path}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cli: config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"cli: config file {path} must hold a JSON object")
    if "manifest_version" in raw:
        raw = raw.get("config", {})
    return _merge(DEFAULTS, raw)


def _as_vector(val, d: int, name: str) -> list[float]:
    if val is None:
        return [0.0] * d
    if isinstance(val, (int, float)):
        val = [val]
    vec = [float(x) for x in val]
    if len(vec) != d:
        raise ConfigError(f"cli: {name} needs {d} components, got {len(vec)}")
    return vec


def thermo_from(cfg: dict) -> model.Thermodynamics:
    t = cfg["thermo"]
    return model.Thermodynamics(
        R=float(t["R"]),
        c_v=float(t["c_v"]),
        mu=float(t["mu"]),
        lam=float(t["lambda"]),
        kappa=float(t["kappa"]),
        tau=float(t["tau"]),
        viscosity_exponent=float(t["viscosity_exponent"]),
    )


def grid_from(cfg: dict) -> grid.PeriodicGrid:
    g = cfg["grid"]
    return grid.PeriodicGrid(int(g["dim"]), int(g["n"]))


def named_rng(seed: int, stream: str) -> np.random.Generator:
    """PCG64 generator for a named stream split off the run seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(STREAMS[stream],))
    return np.random.Generator(np.random.PCG64(ss))


def build_initial(cfg: dict, g: grid.PeriodicGrid) -> np.ndarray:
    """Equilibrium plus sine modes ``amplitude * sin(k . x + phase)``.

    Missing phases are drawn from the seeded ``phases`` stream and written
    back into ``cfg`` so the manifest records them.
    """
    d = g.dim
    L = model.layout(d)
    init = cfg["initial"]
    v = _as_vector(init["v"], d, "initial.v")
    q = _as_vector(init["q"], d, "initial.q")
    U = np.zeros((L["N"],) + g.shape)
    U[0] = float(init["rho"])
    U[L["v"]] = np.array(v).reshape((d,) + (1,) * d)
    U[L["theta"]] = float(init["theta"])
    U[L["q"]] = np.array(q).reshape((d,) + (1,) * d)
    rng = named_rng(cfg["seed"], "phases")
    for i, mode in enumerate(init["modes"]):
        extra = set(mode) - MODE_KEYS
        if extra:
            raise ConfigError(f"cli: unknown keys {sorted(extra)} in initial.modes[{i}]")
        name = mode.get("field", "rho")
        if name not in FIELDS:
            raise ConfigError(f"cli: initial.modes[{i}].field must be one of {FIELDS}, got {name!r}")
        comp = int(mode.get("component", 0))
        width = 1 if name in ("rho", "theta") else d
        if not 0 <= comp < width:
            raise ConfigError(f"cli: initial.modes[{i}].component {comp} out of range for {name}")
        k = mode.get("k")
        k = [1] + [0] * (d - 1) if k is None else [int(x) for x in k]
        if len(k) != d:
            raise ConfigError(f"cli: initial.modes[{i}].k needs {d} entries, got {len(k)}")
        phase = mode.get("phase")
        if phase is None:
            phase = float(rng.uniform(0.0, 2.0 * math.pi))
            mode["phase"] = phase
        mode["k"] = k
        idx = {"rho": 0, "theta": L["theta"]}.get(name)
        if idx is None:
            idx = L[name].start + comp
        arg = sum(kj * xj for kj, xj in zip(k, g.coords))
        U[idx] = U[idx] + float(mode.get("amplitude", 0.0)) * np.sin(arg + float(phase))
    return U


def iteration_config(cfg: dict, thermo: model.Thermodynamics, d: int) -> quasisolve.IterationConfig:
    it = cfg["iteration"]
    s = it["s"] if it["s"] is not None else d // 2 + 2
    it["s"] = int(s)
    return quasisolve.IterationConfig(
        thermo=thermo,
        s=int(s),
        T0=float(it["T0"]),
        dt=float(it["dt"]),
        tol=float(it["tol"]),
        k_max=int(it["k_max"]),
        alpha_cap=float(it["alpha_cap"]),
        g2=None if it["g2"] is None else float(it["g2"]),
        norm_mode=str(it["norm_mode"]),
        window=int(it["window"]),
        scheme=str(it["scheme"]),
        c_stab=float(it["c_stab"]),
    )


# -- output --------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def atomic_write(path: Path, data: bytes | str) -> None:
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(out: Path, name: str, columns, rows) -> str:
    atomic_write(out / name, csv_text(columns, rows))
    return name


def write_state_snapshot(out: Path, name: str, g: grid.PeriodicGrid, U: np.ndarray) -> str:
    atomic_write(out / name, grid.snapshot_bytes(grid.Field(g, U)))
    return name


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def write_manifest(out: Path, command: str, cfg: dict, results: dict, outputs: list, started: float) -> None:
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "tool": "christov_lab",
        "version": __version__,
        "command": command,
        "seed": cfg["seed"],
        "config": cfg,
        "results": results,
        "outputs": sorted(outputs),
        "wall_clock_seconds": time.perf_counter() - started,
    }
    atomic_write(out / "manifest.json", json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")


# -- commands ------------------------------------------------------------------


def _vec3(text: str | None):
    if text is None:
        return None
    try:
        return [float(x) for x in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"cli: expected a comma-separated list of numbers, got {text!r}") from exc


def cmd_analyze_symbol(args, cfg: dict, out: Path) -> tuple[dict, list]:
    sym = cfg["symbol"]
    for key in ("rho", "theta"):
        if getattr(args, key) is not None:
            sym[key] = getattr(args, key)
    for key in ("v", "q", "xi"):
        val = _vec3(getattr(args, key))
        if val is not None:
            sym[key] = val
    if len(sym["v"]) != len(sym["q"]) or len(sym["v"]) != len(sym["xi"]):
        raise ConfigError("cli: symbol.v, symbol.q and symbol.xi must have the same length")
    state = model.PointState(float(sym["rho"]), sym["v"], float(sym["theta"]), sym["q"])
    thermo = thermo_from(cfg)
    rep = model.eigen_analysis(state, sym["xi"], thermo, float(sym["cluster_tol"]), float(sym["rank_tol"]))
    text = rep.text() + "\n"
    atomic_write(out / "report.txt", text)
    rows = [(c.value.real, c.value.imag, c.algebraic, c.geometric) for c in rep.clusters]
    write_csv(out, "spectrum.csv", ("re", "im", "alg_mult", "geom_mult"), rows)
    if not args.quiet:
        sys.stdout.write(text)
    results = {"verdict": rep.verdict, "max_imag": rep.max_imag, "matrix_norm": rep.matrix_norm}
    return results, ["report.txt", "spectrum.csv"]


def cmd_solve_linear(args, cfg: dict, out: Path) -> tuple[dict, list]:
    g = grid_from(cfg)
    thermo = thermo_from(cfg)
    U0 = build_initial(cfg, g)
    sol = cfg["solver"]
    C = linsolve.freeze_state(U0, thermo, g)
    delta = float(sol["delta"])
    traj = linsolve.solve(
        U0, C, float(sol["T"]), float(sol["dt"]), delta=delta, scheme=str(sol["scheme"]),
        save_stride=int(sol["save_stride"]), c_stab=float(sol["c_stab"]),
    )
    tr = linsolve.energy_trace(traj, C, int(sol["m"]), reference=linsolve.reference_state(U0), delta=delta)
    outputs = [
        write_csv(out, "energy_trace.csv", tr.columns, tr.rows()),
        write_state_snapshot(out, "initial_state.bin", g, U0),
        write_state_snapshot(out, "final_state.bin", g, traj.states[-1]),
    ]
    if g.dim == 1:
        cols = ("x",) + tuple(f"u{i}" for i in range(U0.shape[0]))
        rows = zip(g.coords[0], *traj.states[-1])
        outputs.append(write_csv(out, "final_state.csv", cols, rows))
    results = {
        "C1": tr.C1,
        "holds": tr.holds,
        "m": tr.m,
        "s": tr.s,
        "mu_integral": float(tr.mu_integral[-1]),
        "pde_residual": linsolve.pde_residual(traj, C, m=int(sol["m"]), delta=delta),
    }
    if not args.quiet:
        print(f"C1 = {tr.C1:.6g}  bound holds: {tr.holds}  final E_m2 = {tr.E_m2[-1]:.6g}")
    return results, outputs


def cmd_solve_quasilinear(args, cfg: dict, out: Path) -> tuple[dict, list]:
    g = grid_from(cfg)
    thermo = thermo_from(cfg)
    U0 = build_initial(cfg, g)
    icfg = iteration_config(cfg, thermo, g.dim)
    log.info("choosing horizon from T0 = %g", icfg.T0)
    horizon = quasisolve.choose_horizon(U0, g, icfg)
    results = {
        "norm_mode": icfg.norm_mode,
        "T0": horizon.T0,
        "M": horizon.M,
        "g1": horizon.g1,
        "g2": horizon.g2,
        "C1": horizon.C1,
        "C2": horizon.C2,
        "K1": horizon.K1,
        "K2": horizon.K2,
        "kappa": horizon.kappa,
        "u0_norm": horizon.u0_norm,
        "lipschitz_probe": horizon.lipschitz_probe,
        "halvings": horizon.halvings,
    }
    outputs: list = []
    log.info("iterating on [0, %g]", horizon.T0)
    try:
        V, trace = quasisolve.iterate(U0, g, icfg, horizon)
    except (quasisolve.ContractionFailure, quasisolve.NonConvergence) as exc:
        if exc.trace is not None:
            outputs.append(write_csv(out, "contraction_trace.csv", exc.trace.columns, exc.trace.rows()))
            results["alpha_hat"] = exc.trace.alpha_hat
        write_manifest(out, "solve-quasilinear", cfg, results, outputs, args._started)
        raise
    member = quasisolve.xset_monitor(V, horizon, icfg.s)
    outputs += [
        write_csv(out, "contraction_trace.csv", trace.columns, trace.rows()),
        write_csv(out, "membership.csv", member.columns, member.rows()),
        write_state_snapshot(out, "final_state.bin", g, V.states[-1]),
    ]
    results.update(
        alpha_hat=trace.alpha_hat,
        iterations=trace.iterations,
        certified=trace.certified,
        partial_sum_bound=trace.partial_sum_bound,
        residual_norm=trace.residual_norm,
        membership_passed=member.passed,
    )
    if not args.quiet:
        print(
            f"T0 = {horizon.T0:.6g}  iterations = {trace.iterations}  alpha_hat = {trace.alpha_hat:.3e}  "
            f"residual = {trace.residual_norm:.3e}  membership: {'pass' if member.passed else 'FAIL'}"
        )
    return results, outputs


def cmd_demo_1d(args, cfg: dict, out: Path) -> tuple[dict, list]:
    dm = cfg["demo"]
    rows = linsolve.demo_coupling_1d(
        dm["T0_list"], n=int(dm["n"]), s=int(dm["s"]), dt=None if dm["dt"] is None else float(dm["dt"]),
        seed=int(cfg["seed"]), count=int(dm["count"]), scheme=str(dm["scheme"]),
    )
    table = [(r.T0, r.gain_uncoupled, r.gain_coupled) for r in rows]
    name = write_csv(out, "coupling_gains.csv", ("T0", "gain_uncoupled", "gain_coupled"), table)
    if not args.quiet:
        for r in table:
            print(f"T0 = {r[0]:g}  uncoupled = {r[1]:.6g}  coupled = {r[2]:.6g}")
    return {"inputs": rows[0].inputs if rows else 0}, [name]


def read_column(path: str, column: str) -> list[float]:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"cli: input file not found: {path}")
    with p.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise ConfigError(f"cli: column {column!r} not found in {path}")
        try:
            return [float(row[column]) for row in reader]
        except ValueError as exc:
            raise ConfigError(f"cli: non-numeric entry in column {column!r} of {path}: {exc}") from exc


def cmd_fib_check(args, cfg: dict, out: Path) -> tuple[dict, list]:
    fib = cfg["fib"]
    if args.input is not None:
        fib["input"] = args.input
    if args.column is not None:
        fib["column"] = args.column
    if args.alpha0 is not None:
        fib["alpha0"] = args.alpha0
    if fib["input"] is None:
        raise ConfigError("cli: fib-check needs an input CSV (--input or fib.input)")
    a = read_column(fib["input"], fib["column"])
    if len(a) < 3:
        raise seqlib.SequenceLengthError(f"seqlib: condition check needs at least 3 entries, got {len(a)}")
    alpha0 = fib["alpha0"]
    if alpha0 is None:
        ratios = [a[k] / (a[k - 1] + a[k - 2]) for k in range(2, len(a)) if a[k - 1] + a[k - 2] > 0]
        alpha0 = max(ratios) if ratios else 0.0
        alpha0 = max(alpha0 * (1 + 1e-12), np.finfo(float).tiny)
    seq = seqlib.FibSequence(a, float(alpha0))
    cert = seqlib.check_fibonacci_condition(seq)
    rows = [(c.index, c.lhs, c.rhs, int(c.passed)) for c in cert]
    outputs = [write_csv(out, "fib_certificate.csv", ("l", "a_l", "rhs", "pass"), rows)]
    bad = seqlib.first_failure(cert)
    results: dict = {"alpha0": seq.alpha0, "length": len(a), "passed": bad is None, "first_failure": bad}
    lines = [f"alpha0 = {_fmt(seq.alpha0)}", f"entries = {len(a)}"]
    if bad is None:
        tb = seqlib.tail_bound(seq)
        total = float(np.sum(a))
        results.update(partial_sum_bound=tb.partial_sum_bound, tail_sum_bound=tb.tail_sum_bound, sum=total)
        lines += [
            f"certificate: all {len(cert)} checks pass",
            f"sum a_l = {_fmt(total)}",
            f"partial-sum bound = {_fmt(tb.partial_sum_bound)}",
        ]
        if tb.decay_rate is not None:
            results["decay_rate"] = tb.decay_rate
            lines.append(f"geometric decay: a_2k, a_2k+1 <= beta0 / 2^k with beta0 = {_fmt(seq.beta0)}")
    else:
        c = cert[bad - 2]
        lines.append(f"certificate: FAILS at l = {bad} (a_l = {_fmt(c.lhs)} > {_fmt(c.rhs)})")
    text = "\n".join(lines) + "\n"
    atomic_write(out / "fib_report.txt", text)
    outputs.append("fib_report.txt")
    if not args.quiet:
        sys.stdout.write(text)
    if bad is not None:
        args._failure = f"seqlib: contraction condition fails at l = {bad}"
    return results, outputs


HANDLERS = {
    "analyze-symbol": cmd_analyze_symbol,
    "solve-linear": cmd_solve_linear,
    "solve-quasilinear": cmd_solve_quasilinear,
    "demo-1d": cmd_demo_1d,
    "fib-check": cmd_fib_check,
}


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config or a previous run manifest")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="64-bit seed; overrides the config")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    parser = argparse.ArgumentParser(prog="christov-lab", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("analyze-symbol", parents=[common], help="eigenstructure of the symbol at one state")
    p.add_argument("--rho", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--v", help="velocity, comma-separated")
    p.add_argument("--q", help="heat flux, comma-separated")
    p.add_argument("--xi", help="direction, comma-separated")
    sub.add_parser("solve-linear", parents=[common], help="frozen-coefficient linear solve")
    sub.add_parser("solve-quasilinear", parents=[common], help="fixed-point iteration")
    sub.add_parser("demo-1d", parents=[common], help="coupled versus uncoupled gains")
    p = sub.add_parser("fib-check", parents=[common], help="Fibonacci certificate for a CSV column")
    p.add_argument("--input", help="CSV file with a header row")
    p.add_argument("--column", help="column holding a_0, a_1, ... (default: a_k)")
    p.add_argument("--alpha0", type=float, help="contraction ratio (default: largest measured ratio)")
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (quasisolve.ContractionFailure, ContractionCheckFailed)):
        return EXIT_CONTRACTION
    if isinstance(exc, (ArithmeticError, np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    if isinstance(exc, (ValueError, TypeError, KeyError)):
        return EXIT_VALIDATION
    raise exc


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args._started = time.perf_counter()
    args._failure = None
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if not (isinstance(cfg["seed"], int) and 0 <= cfg["seed"] < 2**64):
            raise ConfigError(f"cli: seed must be an unsigned 64-bit integer, got {cfg['seed']!r}")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        results, outputs = HANDLERS[args.command](args, cfg, out)
        write_manifest(out, args.command, cfg, results, outputs, args._started)
        if args._failure:
            raise ContractionCheckFailed(args._failure)
    except Exception as exc:
        code = _exit_code(exc)
        print(f"christov-lab {args.command}: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
