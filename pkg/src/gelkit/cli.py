"""Command-line front end.

Every experiment is reachable two ways: direct flags (``gelkit tg --preset
multiplicative``) or a JSON experiment config (``gelkit run cfg.json``).
Both paths funnel into the same executor, so a config is just a saved set
of flags.  Outputs are deterministic byte-for-byte given the same config
and seed; a manifest (config digest, library versions, wall time) is
written next to each output and is the only file allowed to differ between
reruns.

Exit codes: 0 success, 2 malformed input (schema), 3 numerical failure,
4 resource budget exceeded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys as _sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from .errors import BudgetExceeded, NumericError, SchemaError
from .graphs import coupling_test, duality_experiment, graph_from_measure, trajectory
from .moments import moments_at
from .particles import child_seed, init_poisson, load_state
from .presets import PRESETS, from_name
from .restricted import TruncatedFlory
from .spectral import gelation
from .survival import gel_curve, gel_data
from .system import load_system, system_measure_from_json, system_measure_to_json

_STOCHASTIC = {"simulate", "graph", "graph-duality", "convergence", "coupling"}
_DEFAULT_OUT = {
    "tg": "tg.json",
    "gel-curve": "gel_curve.csv",
    "moments": "moments.csv",
    "simulate": "simulate.csv",
    "graph": "graph.csv",
    "graph-duality": "duality.json",
    "restricted": "restricted.csv",
    "convergence": "convergence.csv",
    "coupling": "coupling.json",
}


def _fmt(x) -> str:
    # adding +0.0 turns IEEE negative zero into plain zero
    return format(float(x) + 0.0, ".17g")


def _json_text(obj, indent: int = 0) -> str:
    """JSON with floats rendered at full precision (.17g)."""
    pad = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        inner = ",\n".join(
            f'{pad}  "{k}": {_json_text(v, indent + 1)}' for k, v in obj.items()
        )
        return "{\n" + inner + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        return "[" + ", ".join(_json_text(v, indent) for v in seq) + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(obj)
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, str):
                cells.append(v)
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            else:
                cells.append(_fmt(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def _out_path(explicit, kind: str) -> Path:
    if explicit:
        path = Path(explicit)
    else:
        path = Path(os.environ.get("GELKIT_OUT", ".")) / _DEFAULT_OUT[kind]
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(out: Path, kind: str, resolved: dict, wall: float) -> None:
    canon = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    manifest = {
        "kind": kind,
        "config_sha256": hashlib.sha256(canon.encode()).hexdigest(),
        "gelkit_version": _package_version(),
        "numpy_version": np.__version__,
        "scipy_version": scipy.__version__,
        "python_version": platform.python_version(),
        "wall_time_s": round(wall, 3),
        "output": out.name,
    }
    side = out.parent / (out.stem + ".manifest.json")
    side.write_text(json.dumps(manifest, indent=2) + "\n")


def _package_version() -> str:
    from . import __version__

    return __version__


# -- parameter extraction with JSON-pointer diagnostics ---------------------


_REQUIRED = object()


def _param(params: dict, key: str, kind, default=_REQUIRED):
    if key not in params:
        if default is _REQUIRED:
            raise SchemaError(f"/params/{key}", "missing required parameter")
        return default
    val = params[key]
    if kind is float:
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise SchemaError(f"/params/{key}", "expected a number")
        return float(val)
    if kind is int:
        if not isinstance(val, int) or isinstance(val, bool):
            raise SchemaError(f"/params/{key}", "expected an integer")
        return val
    if kind is str:
        if not isinstance(val, str):
            raise SchemaError(f"/params/{key}", "expected a string")
        return val
    raise AssertionError(kind)


def _param_times(params: dict, key: str = "times") -> list[float]:
    if key not in params:
        raise SchemaError(f"/params/{key}", "missing required parameter")
    val = params[key]
    if not isinstance(val, list) or not val:
        raise SchemaError(f"/params/{key}", "expected a nonempty array of times")
    out = []
    for i, v in enumerate(val):
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise SchemaError(f"/params/{key}/{i}", "expected a number")
        if v < 0:
            raise SchemaError(f"/params/{key}/{i}", "times must be nonnegative")
        out.append(float(v))
    if sorted(out) != out:
        raise SchemaError(f"/params/{key}", "times must be ascending")
    return out


def _param_numlist(params: dict, key: str) -> list[float]:
    if key not in params:
        raise SchemaError(f"/params/{key}", "missing required parameter")
    val = params[key]
    if not isinstance(val, list) or not val:
        raise SchemaError(f"/params/{key}", "expected a nonempty array")
    out = []
    for i, v in enumerate(val):
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise SchemaError(f"/params/{key}/{i}", "expected a number")
        out.append(float(v))
    return out


# -- executors ---------------------------------------------------------------


def _exec_tg(model, measure, rate_scale, seed, params, out: Path) -> None:
    spec = gelation(model, measure, rate_scale)
    doc = {
        "t_g": spec.t_g,
        "spectral_radius": spec.radius,
        "psi": list(spec.psi),
        "lambda_matrix": [list(row) for row in spec.lambda_matrix],
        "rate_scale": rate_scale,
    }
    out.write_text(_json_text(doc) + "\n")
    print(f"t_g = {_fmt(spec.t_g)}")


def _exec_gel_curve(model, measure, rate_scale, seed, params, out: Path) -> None:
    if "times" in params:
        times = _param_times(params)
    else:
        t_max = _param(params, "t_max", float)
        points = _param(params, "points", int, 100)
        times = np.linspace(0.0, t_max, points).tolist()
    rows = gel_curve(model, measure, times, rate_scale)
    n = model.n
    header = (
        ["t"]
        + [f"c_{i + 1}" for i in range(n)]
        + ["M"]
        + [f"E_{i + 1}" for i in range(n)]
    )
    _write_csv(out, header, rows)


def _exec_moments(model, measure, rate_scale, seed, params, out: Path) -> None:
    times = _param_times(params)
    n = model.n
    header = (
        ["t"]
        + [f"Q_{i + 1}{j + 1}" for i in range(n) for j in range(n)]
        + [f"z_{i}" for i in range(n + 1)]
        + ["E", "phase"]
    )
    rows = []
    for t in times:
        state, phase = moments_at(model, measure, t, rate_scale)
        rows.append(
            [t]
            + state.q.ravel().tolist()
            + state.z.tolist()
            + [state.total_second_moment, phase]
        )
    _write_csv(out, header, rows)


def _snapshot_row(snap, n: int, m: int) -> list:
    return (
        [snap.t]
        + snap.gel_largest.g.tolist()
        + snap.gel_threshold.g.tolist()
        + [snap.n_particles]
    )


def _exec_simulate(model, measure, rate_scale, seed, params, out: Path) -> None:
    times = _param_times(params)
    replicas = _param(params, "replicas", int, 1)
    xi = _param(params, "xi", int, 0) or None
    load_path = _param(params, "load_state", str, "")
    dump_path = _param(params, "dump_state", str, "")
    if load_path and replicas != 1:
        raise SchemaError("/params/replicas", "load_state implies one replica")

    def one(rep: int):
        if load_path:
            ps = load_state(model, load_path, child_seed(seed, rep))
        else:
            n_scale = _param(params, "n", int)
            ps = init_poisson(
                model, measure, n_scale, child_seed(seed, rep), rate_scale
            )
        snaps = ps.run(times, xi)
        if dump_path and rep == 0:
            ps.dump_state(dump_path)
        return snaps

    n, m = model.n, model.m
    header = (
        ["t", "M_N"]
        + [f"E_N_{i + 1}" for i in range(n)]
        + [f"P_N_{j + 1}" for j in range(m)]
        + ["M_thr"]
        + [f"E_thr_{i + 1}" for i in range(n)]
        + [f"P_thr_{j + 1}" for j in range(m)]
        + ["n_particles"]
    )
    if replicas == 1:
        rows = [_snapshot_row(s, n, m) for s in one(0)]
    else:
        with ThreadPoolExecutor(
            max_workers=min(replicas, os.cpu_count() or 1)
        ) as pool:
            all_snaps = list(pool.map(one, range(replicas)))
        rows = []
        for k in range(len(times)):
            block = np.array(
                [_snapshot_row(snaps[k], n, m) for snaps in all_snaps]
            )
            rows.append(block.mean(axis=0).tolist())
    _write_csv(out, header, rows)


def _exec_graph(model, measure, rate_scale, seed, params, out: Path) -> None:
    times = _param_times(params)
    n_vertices = _param(params, "n", int)
    xi = _param(params, "xi", int, 0) or None
    graph = graph_from_measure(
        model, measure, n_vertices, max(times), child_seed(seed, 0), rate_scale
    )
    tracks = trajectory(graph, times, xi)
    n, m = model.n, model.m
    header = (
        ["t", "C1_over_N", "pi0_C1"]
        + [f"E_C1_{i + 1}" for i in range(n)]
        + [f"P_C1_{j + 1}" for j in range(m)]
        + ["meso_sum"]
    )
    rows = [
        [tr.t, tr.c1_over_n] + tr.pi_c1.tolist() + [tr.meso_fraction]
        for tr in tracks
    ]
    _write_csv(out, header, rows)


def _exec_duality(model, measure, rate_scale, seed, params, out: Path) -> None:
    rep = duality_experiment(
        model,
        measure,
        _param(params, "n", int),
        _param(params, "t_minus", float),
        _param(params, "t_plus", float),
        seed,
        rate_scale,
    )
    doc = {
        "n": rep.n,
        "t_minus": rep.t_minus,
        "t_plus": rep.t_plus,
        "t_gel": rep.t_gel,
        "t_gel_tilted": rep.t_gel_tilted,
        "survivor_fraction": rep.survivor_fraction,
        "expected_sol_fraction": rep.expected_sol_fraction,
        "dual_c1_over_n": rep.dual_c1_over_n,
        "fresh_c1_over_n": rep.fresh_c1_over_n,
        "histogram_distance": rep.histogram_distance,
    }
    out.write_text(_json_text(doc) + "\n")


def _exec_restricted(model, measure, rate_scale, seed, params, out: Path) -> None:
    times = _param_times(params)
    xi = _param(params, "xi", float)
    flory = TruncatedFlory(model, measure, xi, rate_scale)
    states = flory.integrate(max(times), outputs=times)
    n, m = model.n, model.m
    header = (
        ["t", "phi_sol", "M_xi"]
        + [f"E_xi_{i + 1}" for i in range(n)]
        + [f"P_xi_{j + 1}" for j in range(m)]
    )
    rows = [
        [st.t, st.phi_sol] + st.gel.g.tolist() for st in states
    ]
    _write_csv(out, header, rows)
    dens_name = _param(params, "densities", str, "")
    dens_path = (
        Path(dens_name) if dens_name else out.parent / (out.stem + "_densities.csv")
    )
    k = len(measure.atoms)
    dheader = ["t"] + [f"n_species_{i + 1}" for i in range(k)] + ["density"]
    drows = []
    for st in states:
        for comp, dens in zip(flory.types, st.densities):
            drows.append([st.t] + [int(c) for c in comp] + [dens])
    _write_csv(dens_path, dheader, drows)


def _exec_convergence(model, measure, rate_scale, seed, params, out: Path) -> None:
    times = _param_times(params)
    n_list = [int(v) for v in _param_numlist(params, "n_list")]
    replicas = _param(params, "replicas", int)
    n = model.n
    limits = {
        t: gel_data(model, measure, t, rate_scale).g[: 1 + n] for t in times
    }

    def one(job: tuple[int, int]) -> float:
        size_idx, rep = job
        ps = init_poisson(
            model,
            measure,
            n_list[size_idx],
            child_seed(seed, size_idx, rep),
            rate_scale,
        )
        snaps = ps.run(times)
        err = 0.0
        for t, snap in zip(times, snaps):
            diff = np.abs(snap.gel_largest.g[: 1 + n] - limits[t])
            err = max(err, float(diff.max()))
        return err

    jobs = [(si, r) for si in range(len(n_list)) for r in range(replicas)]
    with ThreadPoolExecutor(max_workers=os.cpu_count() or 1) as pool:
        errors = list(pool.map(one, jobs))
    rows = [
        [n_list[si], r, e] for (si, r), e in zip(jobs, errors)
    ]
    _write_csv(out, ["N", "replica", "max_abs_error"], rows)
    for si, size in enumerate(n_list):
        med = float(
            np.median([e for (sj, _), e in zip(jobs, errors) if sj == si])
        )
        print(f"N={size}: median max|g_N - g| = {_fmt(med)}")


def _exec_coupling(model, measure, rate_scale, seed, params, out: Path) -> None:
    rep = coupling_test(
        model,
        measure,
        _param(params, "n", int),
        _param(params, "t", float),
        _param(params, "replicas", int),
        seed,
        rate_scale,
        graph_rate_factor=_param(params, "bug_factor", float, 1.0),
    )
    doc = {
        "n": rep.n,
        "t": rep.t,
        "n_replicas": rep.n_replicas,
        "p_largest": rep.p_largest,
        "p_count": rep.p_count,
        "passed": rep.passed,
    }
    out.write_text(_json_text(doc) + "\n")
    print("coupling " + ("PASS" if rep.passed else "FAIL"))


_EXECUTORS = {
    "tg": _exec_tg,
    "gel-curve": _exec_gel_curve,
    "moments": _exec_moments,
    "simulate": _exec_simulate,
    "graph": _exec_graph,
    "graph-duality": _exec_duality,
    "restricted": _exec_restricted,
    "convergence": _exec_convergence,
    "coupling": _exec_coupling,
}


def _execute(kind, model, measure, rate_scale, seed, params, out_arg) -> Path:
    out = _out_path(out_arg, kind)
    resolved = {
        "kind": kind,
        "system": system_measure_to_json(model, measure),
        "rate_scale": rate_scale,
        "seed": seed,
        "params": params,
    }
    start = time.perf_counter()
    _EXECUTORS[kind](model, measure, rate_scale, seed, params, out)
    _write_manifest(out, kind, resolved, time.perf_counter() - start)
    print(f"wrote {out}")
    return out


# -- entry points --------------------------------------------------------------


def _load_model(system_arg, preset_arg):
    if system_arg and preset_arg:
        raise SchemaError("/system", "give either --system or --preset, not both")
    if system_arg:
        return load_system(system_arg)
    if preset_arg:
        try:
            return from_name(preset_arg)
        except ValueError as exc:
            raise SchemaError("/system", str(exc)) from None
    raise SchemaError("/system", "a system is required (--system or --preset)")


def _times_from_flag(raw: str) -> list[float]:
    try:
        times = [float(v) for v in raw.split(",") if v.strip()]
    except ValueError as exc:
        raise SchemaError("/params/times", f"bad time list: {exc}") from None
    return times


def _run_config(path: str) -> Path:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise SchemaError("", f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError("", f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise SchemaError("", "config must be a JSON object")
    kind = raw.get("kind")
    if kind not in _EXECUTORS:
        raise SchemaError(
            "/kind", f"unknown kind {kind!r}; one of {sorted(_EXECUTORS)}"
        )
    if "system" not in raw:
        raise SchemaError("/system", "missing required key")
    spec = raw["system"]
    if isinstance(spec, str):
        base = Path(path).parent
        model, measure = load_system(
            spec if os.path.isabs(spec) else base / spec
        )
    elif isinstance(spec, dict):
        model, measure = system_measure_from_json(spec)
    else:
        raise SchemaError("/system", "expected an object or a file path")
    rate_scale = raw.get("rate_scale", 2.0 if raw.get("doubled_rates") else 1.0)
    if not isinstance(rate_scale, (int, float)) or isinstance(rate_scale, bool):
        raise SchemaError("/rate_scale", "expected a number")
    if rate_scale <= 0:
        raise SchemaError("/rate_scale", "must be positive")
    seed = raw.get("seed")
    if kind in _STOCHASTIC:
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise SchemaError(
                "/seed", "an integer seed is required for stochastic experiments"
            )
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise SchemaError("/params", "expected an object")
    out = raw.get("output")
    if out is not None and not isinstance(out, str):
        raise SchemaError("/output", "expected a file path")
    return _execute(kind, model, measure, float(rate_scale), seed, params, out)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gelkit",
        description="Bilinear merge systems: limit solvers and finite-N checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--system", help="system JSON file")
    common.add_argument(
        "--preset", help=f"bundled system, one of {sorted(PRESETS)}"
    )
    common.add_argument(
        "--doubled-rates",
        action="store_true",
        help="use the convention in which all merge rates carry a factor 2",
    )
    common.add_argument("--out", help="output file (default: per-command name)")

    def cmd(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    cmd("tg", help="gelation time and critical direction")

    p = cmd("gel-curve", help="gel mass and extracted coordinates over time")
    p.add_argument("--times", help="comma-separated checkpoint times")
    p.add_argument("--t-max", type=float, help="end of a uniform grid")
    p.add_argument("--points", type=int, default=100)

    p = cmd("moments", help="second-moment matrix and mixed moments over time")
    p.add_argument("--times", required=True)

    p = cmd("simulate", help="finite-N particle simulation")
    p.add_argument("--times", required=True)
    p.add_argument("--n", type=int, help="population scale N")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--xi", type=int, help="large-particle threshold")
    p.add_argument("--dump-state", help="write final particle table here")
    p.add_argument("--load-state", help="resume from a particle table dump")

    p = cmd("graph", help="random-graph component trajectory")
    p.add_argument("--times", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--xi", type=int)

    p = cmd("graph-duality", help="giant-removal versus tilted fresh graph")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t-minus", type=float, required=True)
    p.add_argument("--t-plus", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)

    p = cmd("restricted", help="size-truncated kinetic equations")
    p.add_argument("--times", required=True)
    p.add_argument("--xi", type=float, required=True)
    p.add_argument("--densities", help="per-type density CSV path")

    p = cmd("convergence", help="finite-N gel error against the limit curve")
    p.add_argument("--times", required=True)
    p.add_argument("--n-list", required=True, help="comma-separated sizes")
    p.add_argument("--replicas", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)

    p = cmd("coupling", help="graph components versus merge clusters, two-sample")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--replicas", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--bug-factor", type=float, default=1.0)

    p = sub.add_parser("run", help="execute a JSON experiment config")
    p.add_argument("config")
    return parser


def _params_from_args(kind: str, args) -> dict:
    params: dict = {}
    if kind == "gel-curve":
        if args.times:
            params["times"] = _times_from_flag(args.times)
        elif args.t_max is not None:
            params["t_max"] = args.t_max
            params["points"] = args.points
        else:
            raise SchemaError("/params/times", "need --times or --t-max")
        return params
    if kind in {"moments", "simulate", "graph", "restricted", "convergence"}:
        params["times"] = _times_from_flag(args.times)
    if kind == "simulate":
        if args.n is not None:
            params["n"] = args.n
        params["replicas"] = args.replicas
        if args.xi:
            params["xi"] = args.xi
        if args.dump_state:
            params["dump_state"] = args.dump_state
        if args.load_state:
            params["load_state"] = args.load_state
        if args.n is None and not args.load_state:
            raise SchemaError("/params/n", "need --n (or --load-state)")
    elif kind == "graph":
        params["n"] = args.n
        if args.xi:
            params["xi"] = args.xi
    elif kind == "graph-duality":
        params["n"] = args.n
        params["t_minus"] = args.t_minus
        params["t_plus"] = args.t_plus
    elif kind == "restricted":
        params["xi"] = args.xi
        if args.densities:
            params["densities"] = args.densities
    elif kind == "convergence":
        params["n_list"] = [
            float(v) for v in args.n_list.split(",") if v.strip()
        ]
        params["replicas"] = args.replicas
    elif kind == "coupling":
        params["n"] = args.n
        params["t"] = args.t
        params["replicas"] = args.replicas
        params["bug_factor"] = args.bug_factor
    return params


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            _run_config(args.config)
            return 0
        model, measure = _load_model(args.system, args.preset)
        rate_scale = 2.0 if args.doubled_rates else 1.0
        params = _params_from_args(args.command, args)
        seed = getattr(args, "seed", None)
        _execute(
            args.command, model, measure, rate_scale, seed, params, args.out
        )
        return 0
    except SchemaError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 4
    except NumericError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 3


if __name__ == "__main__":
    _sys.exit(main())
