"""Command line entry point: ``dynbasis generate|reduce|baseline|compare``.

Every subcommand reads a JSON config, validates it before any computation,
writes its outputs under ``--out`` together with the resolved config, and
reports failures as one JSON line on stderr with a distinctive exit code.
"""

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .baselines.dmd import dmd_fit, dmd_reconstruct
from .baselines.pcm import pcm_variance_trace
from .baselines.pod import pod_error, pod_fit
from .core import rank_modes, run_reduction
from .exceptions import ConfigError, DynBasisError, NumericalError, SnapshotFormatError
from .snapshots import read_series, subtract_mean, write_matrix, write_series
from .testbeds.advection import AdvectionConfig, exact_total_variance, generate_advection_series
from .testbeds.ks import KsConfig, generate_ks_series, nearest_sample

OUTPUT_FORMAT_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

_POS = {"type": "number", "exclusiveMinimum": 0}
_INT1 = {"type": "integer", "minimum": 1}

ADVECTION_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "v_bar": {"type": "number"},
        "sigma": _POS,
        "n": {"type": "integer", "minimum": 2},
        "s": {"type": "integer", "minimum": 2},
        "dt": _POS,
        "t_final": _POS,
        "mode": {"enum": ["analytic", "spectral"]},
    },
}

KS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "eps": _POS,
        "n": {"type": "integer", "minimum": 8},
        "l_c": _POS,
        "sigma": {"type": "number", "minimum": 0},
        "energy_threshold": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "sampling": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {"kind": {"const": "collocation"}, "Q": _INT1, "cap": _INT1},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "s"],
                    "properties": {
                        "kind": {"const": "monte_carlo"},
                        "s": _INT1,
                        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                    },
                },
            ]
        },
        "dt": _POS,
        "t_final": _POS,
        "burn_in": {"type": "number", "minimum": 0},
        "substeps": _INT1,
        "kernel": {"enum": ["periodic", "squared_exponential"]},
    },
}

REDUCE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["r"],
    "properties": {
        "r": _INT1,
        "derivative_scheme": {"enum": ["FD4", "EE1"]},
        "integrator": {"enum": ["RK4", "EE1"]},
        "rel_threshold": _POS,
        "dump_every": {"type": "integer", "minimum": 0},
        "track_samples": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "track_point": {"type": "array", "items": {"type": "number"}},
    },
}

POD_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["r"],
    "properties": {"r": {"type": "integer", "minimum": 0}, "stride": _INT1, "memory_budget": _INT1},
}

DMD_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "sample": {"type": "integer", "minimum": 0},
        "point": {"type": "array", "items": {"type": "number"}},
        "energy_threshold": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "rank": _INT1,
        "min_rank": _INT1,
        "r_values": {"type": "array", "items": _INT1, "minItems": 1},
    },
}

PCM_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["r"],
    "properties": {"r": {"type": "integer", "minimum": 0}, "stride": _INT1},
}

COMPARE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "runs"],
    "properties": {
        "kind": {"enum": ["table", "traces"]},
        "column": {"type": "string"},
        "runs": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["label", "path"],
                "properties": {
                    "label": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
                    "path": {"type": "string"},
                    "file": {"type": "string"},
                    "column": {"type": "string"},
                },
            },
        },
    },
}

DEFAULTS = {
    "reduce": {"derivative_scheme": "FD4", "integrator": "RK4", "rel_threshold": 1e-10, "dump_every": 0, "track_samples": []},
    "pod": {"stride": 1, "memory_budget": 1 << 30},
    "dmd": {"energy_threshold": 0.99, "min_rank": 1, "r_values": [2, 4, 6, 8]},
    "pcm": {"stride": 1},
}


class CliError(Exception):
    def __init__(self, code, message):
        self.code = code
        super().__init__(message)


# --------------------------------------------------------------------------
# helpers


def load_config(path, schema, defaults=None):
    """Read and schema-validate a JSON config; return it with defaults filled in."""
    if path is None:
        cfg = {}
    else:
        try:
            with open(path) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_CONFIG, f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise CliError(EXIT_CONFIG, f"invalid config at {where}: {exc.message}") from exc
    return {**(defaults or {}), **cfg}


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def archive_config(out, command, config, **extra):
    write_json(out / "config.json", {"command": command, "format_version": OUTPUT_FORMAT_VERSION, "dynbasis_version": __version__, "config": config, **extra})


def write_csv(path, header, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow(["%.17g" % v for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CliError(EXIT_DATA, f"{path} is empty")
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in row] for row in body]) if body else np.zeros((0, len(header)))
    return header, data.reshape(len(body), len(header))


def prepare_out(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def epsilon(errors):
    """Root-mean-square over the snapshots after the first: ``sqrt(sum_k e_k^2 / K)``."""
    e = np.asarray(errors, dtype=float)[1:]
    return float(np.sqrt(np.mean(e * e))) if e.size else 0.0


def _load_series(path):
    p = Path(path)
    if not p.exists():
        raise CliError(EXIT_DATA, f"series {path} does not exist")
    return read_series(p)


def _resolve_sample(series, index=None, point=None):
    if index is not None:
        if index >= series.s:
            raise CliError(EXIT_CONFIG, f"sample index {index} out of range (s = {series.s})")
        return int(index)
    if point is not None:
        xi = series.meta.get("xi")
        if xi is None:
            raise CliError(EXIT_DATA, "series has no xi coordinates to match a point against")
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        if xi.shape[0] != series.s:
            xi = xi.T
        if xi.shape[1] != len(point):
            raise CliError(EXIT_CONFIG, f"point has {len(point)} coordinates, samples have {xi.shape[1]}")
        return nearest_sample(xi, point)
    return 0


# --------------------------------------------------------------------------
# subcommands


def cmd_generate(args):
    if args.kind == "advection":
        raw = load_config(args.config, ADVECTION_SCHEMA)
        cfg = AdvectionConfig(**raw)
        series = generate_advection_series(cfg)
    else:
        raw = load_config(args.config, KS_SCHEMA)
        cfg = KsConfig(**raw)
        series = generate_ks_series(cfg)
    out = prepare_out(args.out)
    extra = {k: v for k, v in series.meta.items()}
    write_series(series, out, extra=extra)
    archive_config(out, "generate", cfg.to_dict(), kind=args.kind)
    return {"snapshots": series.K + 1, "n": series.n, "s": series.s}


def cmd_reduce(args):
    cfg = load_config(args.config, REDUCE_SCHEMA, DEFAULTS["reduce"])
    series = _load_series(args.series)
    if cfg["r"] > min(series.n, series.s):
        raise CliError(EXIT_CONFIG, f"r = {cfg['r']} exceeds min(n, s) = {min(series.n, series.s)}")
    tracked = list(cfg["track_samples"])
    if "track_point" in cfg:
        tracked.append(_resolve_sample(series, point=cfg["track_point"]))
    for i in tracked:
        if i >= series.s:
            raise CliError(EXIT_CONFIG, f"tracked sample {i} out of range (s = {series.s})")
    out = prepare_out(args.out)
    archive_config(out, "reduce", cfg, series=str(Path(args.series).resolve()))
    sample_err = np.zeros((series.K + 1, len(tracked)))
    wx = series.wx

    def callback(k, state, T_k):
        for j, i in enumerate(tracked):
            d = state.U @ state.Y[i] - T_k[:, i]
            sample_err[k, j] = np.sqrt(wx @ (d * d))

    stats = {}
    trace, state = run_reduction(
        series,
        cfg["r"],
        cfg["derivative_scheme"],
        cfg["integrator"],
        cfg["rel_threshold"],
        callback=callback,
        dump_dir=out / "dumps" if cfg["dump_every"] else None,
        dump_every=cfg["dump_every"],
        stats=stats,
    )
    trace.to_csv(out / "metrics.csv")

    Uh, Yh, lam = rank_modes(state, series.wxi)
    write_matrix(out / "U_final.dbsn", Uh)
    write_matrix(out / "Y_final.dbsn", Yh)
    summary = {
        "method": "db",
        "r": cfg["r"],
        "K": series.K,
        "final_eigenvalues": lam.tolist(),
        "time_integrated_error": float(np.trapezoid(trace.error, trace.t)),
        "max_ortho_defect": float(trace.ortho_defect.max()),
        "peak_resident": stats.get("peak_resident"),
    }
    if tracked:
        write_csv(out / "sample_error.csv", ["t"] + [f"sample_{i}" for i in tracked], [trace.t] + [sample_err[:, j] for j in range(len(tracked))])
        summary["sample_error"] = {str(i): epsilon(sample_err[:, j]) for j, i in enumerate(tracked)}
        summary["epsilon"] = summary["sample_error"][str(tracked[0])]
    write_json(out / "summary.json", summary)
    return summary


def _baseline_pod(series, cfg, out):
    basis = pod_fit(series, cfg["r"], cfg["stride"], cfg["memory_budget"])
    err = pod_error(basis, series)
    write_matrix(out / "pod_basis.dbsn", basis.U)
    write_csv(out / "pod_error.csv", ["t", "error"], [series.times, err])
    return {"method": "pod", "r": cfg["r"], "singular_values": basis.singular_values[: max(cfg["r"], 1)].tolist(), "time_integrated_error": float(np.trapezoid(err, series.times))}


def _baseline_dmd(series, cfg, out):
    i0 = _resolve_sample(series, cfg.get("sample"), cfg.get("point"))
    X = np.empty((series.n, series.K + 1))
    for k in range(series.K + 1):
        T, _ = subtract_mean(series.snapshot(k), series.wxi)
        X[:, k] = T[:, i0]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = dmd_fit(X, series.dt, cfg["energy_threshold"], cfg.get("rank"), t0=float(series.times[0]), min_rank=cfg["min_rank"])
    rs = [r for r in cfg["r_values"]]
    bad = [r for r in rs if r > model.n_modes]
    if bad:
        raise CliError(EXIT_CONFIG, f"r_values {bad} exceed the {model.n_modes} available DMD modes; raise min_rank")
    errs = []
    for r in rs:
        d = dmd_reconstruct(model, series.times, r) - X
        errs.append(epsilon(np.sqrt(series.wx @ (d * d))))
    write_csv(out / "errors.csv", ["r", "error"], [rs, errs])
    write_csv(
        out / "dmd_eigenvalues.csv",
        ["omega_real", "omega_imag", "mu_abs"],
        [model.omega.real, model.omega.imag, np.abs(model.mu)],
    )
    return {
        "method": "dmd",
        "sample": i0,
        "rank": model.rank,
        "n_modes": model.n_modes,
        "r_values": rs,
        "errors": errs,
        "warnings": [str(w.message) for w in caught],
    }


def _baseline_pcm(series, cfg, out):
    xi = series.meta.get("xi")
    if xi is None or np.ndim(xi) != 1:
        raise CliError(EXIT_DATA, "pcm needs a series with one-dimensional xi nodes (advection testbed)")
    t, var = pcm_variance_trace(series, np.asarray(xi, dtype=float), cfg["r"], cfg["stride"])
    cols, header = [t, var], ["t", "variance"]
    sigma = series.meta.get("config", {}).get("sigma") if series.meta.get("testbed") == "advection" else None
    if sigma is not None:
        cols.append(exact_total_variance(t, sigma))
        header.append("exact")
    write_csv(out / "variance.csv", header, cols)
    return {"method": "pcm", "r": cfg["r"]}


def cmd_baseline(args):
    schema = {"pod": POD_SCHEMA, "dmd": DMD_SCHEMA, "pcm": PCM_SCHEMA}[args.kind]
    cfg = load_config(args.config, schema, DEFAULTS[args.kind])
    series = _load_series(args.series)
    out = prepare_out(args.out)
    archive_config(out, "baseline", cfg, kind=args.kind, series=str(Path(args.series).resolve()))
    fn = {"pod": _baseline_pod, "dmd": _baseline_dmd, "pcm": _baseline_pcm}[args.kind]
    summary = fn(series, cfg, out)
    write_json(out / "summary.json", summary)
    return summary


def _table_rows(run):
    p = Path(run["path"])
    try:
        with open(p / "summary.json") as fh:
            summary = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_DATA, f"cannot read run summary in {p}: {exc}") from exc
    if summary.get("method") == "dmd":
        return [(run["label"], "dmd", r, e) for r, e in zip(summary["r_values"], summary["errors"])]
    if "epsilon" not in summary:
        raise CliError(EXIT_DATA, f"run {p} has no tracked-sample error (set track_samples or track_point)")
    return [(run["label"], summary.get("method", "db"), summary["r"], summary["epsilon"])]


def cmd_compare(args):
    cfg = load_config(args.config, COMPARE_SCHEMA)
    out = prepare_out(args.out)
    archive_config(out, "compare", cfg)
    if cfg["kind"] == "table":
        rows = []
        for run in cfg["runs"]:
            rows.extend(_table_rows(run))
        rows.sort(key=lambda row: (row[1], row[2], row[0]))
        with open(out / "comparison.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["label", "method", "r", "error"])
            for label, method, r, e in rows:
                writer.writerow([label, method, r, "%.17g" % e])
        return {"rows": len(rows)}
    t_ref, cols, labels = None, [], []
    for run in cfg["runs"]:
        fname = run.get("file", "metrics.csv")
        column = run.get("column", cfg.get("column", "sigma_total"))
        path = Path(run["path"]) / fname
        if not path.exists():
            raise CliError(EXIT_DATA, f"missing run output {path}")
        header, data = read_csv(path)
        if column not in header or "t" not in header:
            raise CliError(EXIT_DATA, f"{path} has no columns t and {column}")
        t = data[:, header.index("t")]
        if t_ref is None:
            t_ref = t
        elif t.shape != t_ref.shape or not np.array_equal(t, t_ref):
            raise CliError(EXIT_DATA, f"time axis of {path} does not match the first run")
        cols.append(data[:, header.index(column)])
        labels.append(run["label"])
    header = ["t"] + labels + [f"diff_{lab}_{labels[0]}" for lab in labels[1:]]
    columns = [t_ref] + cols + [c - cols[0] for c in cols[1:]]
    write_csv(out / "comparison.csv", header, columns)
    return {"columns": header}


# --------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="dynbasis", description="Dynamic-basis reduction of ensemble time series.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a testbed snapshot series")
    g.add_argument("kind", choices=["advection", "ks"])
    g.add_argument("--config", help="JSON testbed config (defaults if omitted)")
    g.add_argument("--out", required=True, help="output series directory")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("reduce", help="run the dynamic-basis reduction on a series")
    r.add_argument("series", help="series directory or manifest")
    r.add_argument("--config", required=True, help="JSON reduction config")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_reduce)

    b = sub.add_parser("baseline", help="run a static-basis baseline")
    b.add_argument("kind", choices=["pod", "dmd", "pcm"])
    b.add_argument("series")
    b.add_argument("--config", help="JSON baseline config")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_baseline)

    c = sub.add_parser("compare", help="merge run outputs into a comparison table")
    c.add_argument("--config", required=True, help="JSON comparison spec")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)
    return parser


def _exit_code(exc):
    if isinstance(exc, CliError):
        return exc.code
    if isinstance(exc, (NumericalError, ArithmeticError, np.linalg.LinAlgError)):
        return EXIT_NUMERICAL
    if isinstance(exc, (SnapshotFormatError, OSError)):
        return EXIT_DATA
    if isinstance(exc, (ConfigError, ValueError, TypeError)):
        return EXIT_CONFIG
    if isinstance(exc, DynBasisError):
        return EXIT_DATA
    raise exc


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        code = _exit_code(exc)
        line = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        print(json.dumps(line, sort_keys=True), file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
