"""Command-line front end.

    python3 -m cdweak <command> --config run.json [--seed S] [--out PATH]
                      [--threads N] [--strict]

Commands: cdobs, qmatrix, extract, tomo, check-ginv. Every command reads one
JSON config (validated against ``CONFIG_SCHEMA``; unknown keys are rejected)
and emits a JSON envelope {version, config, timestamp, payload}. Complex
numbers travel as [re, im] pairs and matrices as row-major nested lists of
such pairs. Exit status: 0 ok, 2 config/validation error, 3 mathematical
precondition failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
import tempfile
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np

from .cdsolver import (
    cd_observable,
    check_g_invariance,
    extract_numerator,
    q_matrix,
    q_matrix_weak_limit,
    swapped_postselection,
)
from .coupling import (
    PAULI,
    CouplingSetup,
    GridPointer,
    QubitPointer,
    SystemObservable,
    joint_expectation,
    relevant_family,
    weak_limit_estimate,
    weak_value,
    weak_value_numerator,
)
from .errors import CDWeakError, OrthogonalPostselection
from .qcore import KET_PLUS
from . import tomo

EXIT_OK, EXIT_CONFIG, EXIT_PRECONDITION = 0, 2, 3

try:
    VERSION = metadata.version("artifact")
except metadata.PackageNotFoundError:  # running from a source checkout
    VERSION = "0.1.0"

# -- wire format --------------------------------------------------------------

_number = {"type": "number"}
_complex = {"oneOf": [_number, {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}]}
_vector = {"type": "array", "items": _complex, "minItems": 1}
_matrix = {"type": "array", "items": _vector, "minItems": 1}
_g_value = {"type": "number"}
_observable = {"oneOf": [
    {"enum": ["q", "p", "position", "momentum", "sigma_x", "sigma_y", "sigma_z"]},
    _matrix,
]}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "g": {"oneOf": [_g_value, {"type": "array", "items": _g_value, "minItems": 1}]},
        "channel": {"enum": ["re", "im", "both"]},
        "eta": {"oneOf": [{"const": "auto"}, _number]},
        "observable": _observable,
        "g_grid": {"type": "array", "items": _g_value, "minItems": 1},
        "swapped": {"type": "boolean"},
        "emit_matrix": {"type": "boolean"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "out": {"type": "string"},
        "threads": {"type": "integer", "minimum": 1},
        "setup": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "A": _matrix,
                "rho_in": _matrix,
                "psi_in": _vector,
                "psi_f": _vector,
                "pointer": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["qubit", "gaussian"]},
                        "phi0": _vector,
                        "delta": {"type": "number", "exclusiveMinimum": 0},
                        "grid_points": {"type": "integer", "minimum": 8},
                        "extent": {"type": "number", "exclusiveMinimum": 0},
                    },
                    "required": ["kind"],
                },
            },
        },
        "plan": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "true_state": _matrix,
                "true_ket": _vector,
                "methods": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "kind": {"enum": ["weak", "cd", "standard"]},
                            "g": {"type": "number"},
                        },
                        "required": ["kind"],
                    },
                },
                "sample_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1},
                                 "minItems": 1},
                "trials": {"type": "integer", "minimum": 1},
            },
        },
    },
}


class ConfigError(Exception):
    pass


def encode_complex(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def encode_matrix(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(x.real), float(x.imag)] for x in row] for row in m]


def decode_complex(x) -> complex:
    return complex(x[0], x[1]) if isinstance(x, (list, tuple)) else complex(x)


def decode_vector(data) -> np.ndarray:
    return np.array([decode_complex(x) for x in data], dtype=complex)


def decode_matrix(data) -> np.ndarray:
    rows = [[decode_complex(x) for x in row] for row in data]
    if any(len(r) != len(rows) for r in rows):
        raise ConfigError("matrices must be square lists of rows")
    return np.array(rows, dtype=complex)


# -- config -> objects ---------------------------------------------------------


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
        config = json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    validate_config(config)
    return config


def validate_config(config) -> None:
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc


def _g_list(config, allow_zero=False) -> list[float]:
    if "g" not in config:
        raise ConfigError("config needs a coupling strength 'g'")
    gs = config["g"] if isinstance(config["g"], list) else [config["g"]]
    gs = [float(g) for g in gs]
    if not allow_zero and any(g == 0 for g in gs):
        raise ConfigError("g = 0 is not a valid strength here; the weak limit is reported "
                          "by the qmatrix command")
    if not all(np.isfinite(gs)):
        raise ConfigError("g must be finite")
    return gs


def build_setup(config, g_max: float) -> CouplingSetup:
    """CouplingSetup from the 'setup' block; omitted fields fall back to the
    qubit projector fixture (A = |0><0|, post-selection on |+>, qubit pointer)."""
    block = config.get("setup", {})
    if "rho_in" in block and "psi_in" in block:
        raise ConfigError("give either rho_in or psi_in, not both")
    A = decode_matrix(block["A"]) if "A" in block else np.diag([1.0, 0.0]).astype(complex)
    A = SystemObservable(A)
    d = A.dim
    if "rho_in" in block:
        rho = decode_matrix(block["rho_in"])
    elif "psi_in" in block:
        rho = decode_vector(block["psi_in"])
    elif d == 2:
        rho = np.array([[0.62, 0.21 - 0.17j], [0.21 + 0.17j, 0.38]], dtype=complex)
    else:
        rho = np.eye(d, dtype=complex) / d
    if "psi_f" in block:
        psi_f = decode_vector(block["psi_f"])
    elif d == 2:
        psi_f = KET_PLUS
    else:
        psi_f = np.ones(d, dtype=complex) / np.sqrt(d)
    pointer = build_pointer(block.get("pointer", {"kind": "qubit"}), g_max, A.max_abs)
    return CouplingSetup(g_max, A, pointer, rho, psi_f)


def build_pointer(block, g_max: float, max_abs_a: float):
    if block["kind"] == "qubit":
        extra = set(block) - {"kind", "phi0"}
        if extra:
            raise ConfigError(f"qubit pointer does not take {sorted(extra)}")
        phi0 = block.get("phi0")
        return QubitPointer() if phi0 is None else QubitPointer(decode_vector(phi0))
    delta = float(block.get("delta", 1.0))
    points = int(block.get("grid_points", 1024))
    phi0 = block.get("phi0")
    phi0 = None if phi0 is None else decode_vector(phi0)
    if "extent" in block:
        return GridPointer(delta, points, float(block["extent"]), phi0)
    return GridPointer.for_strength(delta, g_max, max_abs_a, points, phi0)


def resolve_observable(name, pointer):
    if isinstance(name, list):
        return decode_matrix(name)
    if name in ("q", "position"):
        return pointer.position
    if name in ("p", "momentum"):
        return pointer.momentum
    if pointer.dim != 2:
        raise ConfigError(f"{name} needs a qubit pointer")
    return PAULI[name]


def build_plan(config, seed) -> tomo.ExperimentPlan:
    block = config.get("plan", {})
    methods = []
    for m in block.get("methods", [{"kind": "weak", "g": 0.1}, {"kind": "cd", "g": float(np.pi / 2)},
                                   {"kind": "standard"}]):
        if m["kind"] == "standard":
            if "g" in m:
                raise ConfigError("the standard method takes no strength")
            methods.append(tomo.StandardProjective())
            continue
        if "g" not in m:
            raise ConfigError(f"method {m['kind']!r} needs a strength g")
        cls = tomo.WeakApprox if m["kind"] == "weak" else tomo.CDExact
        methods.append(cls(float(m["g"])))
    kwargs = {"methods": tuple(methods), "base_seed": seed}
    if "true_state" in block and "true_ket" in block:
        raise ConfigError("give either true_state or true_ket, not both")
    if "true_state" in block:
        kwargs["true_state"] = decode_matrix(block["true_state"])
    elif "true_ket" in block:
        kwargs["true_state"] = decode_vector(block["true_ket"])
    if "sample_sizes" in block:
        kwargs["sample_sizes"] = tuple(block["sample_sizes"])
    if "trials" in block:
        kwargs["trials"] = block["trials"]
    return tomo.ExperimentPlan(**kwargs)


# -- commands -------------------------------------------------------------


def cmd_cdobs(config, args) -> dict:
    gs = _g_list(config)
    setup = build_setup(config, max(abs(g) for g in gs))
    channels = ("re", "im") if config.get("channel", "both") == "both" else (config["channel"],)
    eta = config.get("eta", "auto")
    emit = config.get("emit_matrix", True)
    results = []
    for g in gs:
        entry = {"g": g, "channels": {}}
        for ch in channels:
            cd = cd_observable(g, ch, setup.with_g(g), eta=eta)
            item = {
                "eta": cd.eta,
                "prefactor": cd.prefactor,
                "proportionality_residual": cd.proportionality_residual,
                "condition_number": cd.condition_number,
            }
            if emit:
                item["matrix"] = encode_matrix(cd.matrix)
            entry["channels"][ch] = item
        results.append(entry)
    return {"results": results}


def cmd_qmatrix(config, args) -> dict:
    gs = _g_list(config, allow_zero=True)
    setup = build_setup(config, max(abs(g) for g in gs))
    s = resolve_observable(config.get("observable", "p"), setup.pointer)
    results = []
    for g in gs:
        fam = relevant_family(setup.with_g(g)) if g != 0 else relevant_family(setup.with_g(1.0))
        q0 = q_matrix_weak_limit(s, fam.values, setup.pointer).entries
        entry = {"g": g, "values": [float(v) for v in fam.values],
                 "Q(0)": encode_matrix(q0)}
        if g != 0:
            qg = q_matrix(g, s, fam).entries
            entry["Q(g)"] = encode_matrix(qg)
            norm = float(np.sum(np.abs(q0) ** 2))
            if norm > 0:
                eta = float(np.sum(np.conj(q0) * qg).real / norm)
                entry["eta"] = eta
                entry["residual"] = float(np.max(np.abs(qg - eta * q0)))
            if isinstance(setup.pointer, GridPointer):
                entry["gaussian_factor"] = float(np.exp(-g * g / (8 * setup.pointer.delta ** 2)))
        results.append(entry)
    return {"results": results}


def cmd_extract(config, args) -> dict:
    gs = _g_list(config)
    setup = build_setup(config, max(abs(g) for g in gs))
    pointer = setup.pointer
    direct = weak_value_numerator(setup.A, setup.rho_in, setup.psi_f)
    payload = {"direct_numerator": encode_complex(direct)}
    try:
        payload["weak_value"] = encode_complex(weak_value(setup.A, setup.rho_in, setup.psi_f))
    except OrthogonalPostselection as exc:
        if args.strict:
            raise
        payload["weak_value"] = None
        payload["warning"] = f"OrthogonalPostselection: {exc}"
    results = []
    for g in gs:
        st = setup.with_g(g)
        exact = extract_numerator(st)
        q_obs, p_obs = pointer.reference("re"), pointer.reference("im")
        weak = weak_limit_estimate(
            st, joint_expectation(st, q_obs), joint_expectation(st, p_obs), q=q_obs, p=p_obs)
        entry = {
            "g": g,
            "numerator": encode_complex(exact),
            "weak_limit_estimate": encode_complex(weak),
            "difference": abs(exact - direct),
            "weak_limit_difference": abs(weak - direct),
        }
        if config.get("swapped", False):
            swapped = swapped_postselection(setup.A, setup.rho_in, setup.psi_f, g=g)
            entry["swapped_numerator"] = encode_complex(swapped)
            entry["swapped_difference"] = abs(swapped - direct)
        results.append(entry)
    payload["results"] = results
    return payload


def cmd_check_ginv(config, args) -> dict:
    grid = config.get("g_grid")
    if grid is None:
        grid = _g_list(config, allow_zero=True)
    grid = [float(g) for g in grid]
    setup = build_setup(config, max(abs(g) for g in grid) or 1.0)
    s = resolve_observable(config.get("observable", "p"), setup.pointer)
    res = check_g_invariance(s, setup, grid)
    return {"invariant": res.invariant, "g": list(res.g), "eta": list(res.eta),
            "residual": list(res.residual)}


def cmd_tomo(config, args) -> dict:
    plan = build_plan(config, config.get("seed", 0))
    threads = config.get("threads", 1)
    result = tomo.run_experiment(plan, threads=threads)
    summary = [
        {"method": r.method, "g": r.g, "N": r.N, "median": r.median, "iqr": r.iqr}
        for r in result.summary
    ]
    payload = {"summary": summary, "rows": len(result.rows)}
    out = config.get("out")
    if out:
        out = Path(out)
        summary_path = out.with_name(out.stem + ".summary" + (out.suffix or ".csv"))
        write_atomic(out, tomo.rows_to_csv(result.rows))
        write_atomic(summary_path, tomo.summary_to_csv(result.summary))
        payload["csv"] = str(out)
        payload["summary_csv"] = str(summary_path)
    else:
        payload["csv_text"] = tomo.rows_to_csv(result.rows)
    return payload


COMMANDS = {
    "cdobs": cmd_cdobs,
    "qmatrix": cmd_qmatrix,
    "extract": cmd_extract,
    "tomo": cmd_tomo,
    "check-ginv": cmd_check_ginv,
}


# -- plumbing ------------------------------------------------------------------


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def envelope(config, payload) -> dict:
    return {
        "version": VERSION,
        "config": config,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "payload": payload,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdweak", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON run configuration")
        p.add_argument("--seed", type=int, help="64-bit base seed (overrides the config)")
        p.add_argument("--out", help="output path (overrides the config)")
        p.add_argument("--threads", type=int, help="worker threads (default $CDWEAK_THREADS or 1)")
        p.add_argument("--strict", action="store_true",
                       help="treat orthogonal post-selection as an error")
    return parser


def _apply_overrides(config: dict, args) -> dict:
    config = dict(config)
    if args.seed is not None:
        config["seed"] = args.seed
    if args.out is not None:
        config["out"] = args.out
    threads = args.threads
    if threads is None and "threads" not in config and os.environ.get("CDWEAK_THREADS"):
        try:
            threads = int(os.environ["CDWEAK_THREADS"])
        except ValueError as exc:
            raise ConfigError("CDWEAK_THREADS must be an integer") from exc
    if threads is not None:
        config["threads"] = threads
    validate_config(config)
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else {}
        config = _apply_overrides(config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        payload = COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CDWeakError as exc:
        if isinstance(exc, ValueError):  # malformed matrices and states
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = json.dumps(envelope(config, payload), indent=1) + "\n"
    if config.get("out") and args.command != "tomo":
        write_atomic(config["out"], text)
    else:
        sys.stdout.write(text)
    return EXIT_OK
