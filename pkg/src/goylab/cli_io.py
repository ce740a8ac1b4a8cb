"""Configuration, command-line surface, persistence, and run manifests.

Configs are flat, diff-friendly ``key = value`` text with ``[section]``
headers and ``#`` comments.  The schema is closed: every key must appear in
the table below, and every error carries the offending line number.

======== =================  ========================== =====================
section  key                type                       default
======== =================  ========================== =====================
(top)    seed               integer                    0
model    N                  integer >= 1               16
model    k0                 positive real              1
model    nu                 positive real              1
model    a                  real                       -1
model    b                  real                       0.5
model    c                  real                       0.5
model    variant            goy | sabra                goy
noise    covariance         geometric | explicit       geometric
noise    lam0               positive real              1
noise    gamma              real                       1
noise    lambda             comma reals (explicit)     (empty)
noise    sigma              additive | multiplicative  additive
noise    s                  comma reals (1 or N)       1
noise    coeff              comma reals (1 or N)       1
grid     t0                 real                       0
grid     T                  real > t0                  1
grid     steps              integer >= 1               256
expt     epsilon            real >= 0                  0.05
expt     paths              integer >= 1               200
expt     delta_weight       positive real              1
expt     radius             real >= 0                  0.5
expt     eps_list           comma reals, decreasing    0.1,0.01,0.001,0.0001
expt     naive_paths        integer >= 0 (0 = paths)   0
expt     importance_paths   integer >= 0 (0 = paths)   0
expt     samples            integer >= 1               1000
expt     u0_shell           integer >= 0 (0 = zero)    1
expt     u0_bands           integer >= 1               1
expt     u0_scale           real                       1
expt     target_shell       integer >= 1               1
expt     target_value       real                       1
expt     target_kind        point | sphere             point
expt     penalty_rho        positive real              1000
expt     stages             integer >= 1               5
expt     grad_tol           positive real              1e-8
expt     max_iters          integer >= 1               500
expt     v_amp              real                       0.3
output   directory          path string                out
output   formats            subset of ndjson,csv,binary  ndjson
======== =================  ========================== =====================

(``expt`` abbreviates the ``[experiment]`` section header.)

The canonical form — sections and keys in fixed order, every default made
explicit, floats rendered with 17 significant digits, covariance and
coefficient lists expanded — is what gets hashed into the run manifest, so
the hash is stable under reordering, comments, and equivalent spellings.

Exit codes: 0 success, 1 violated invariant (an assertion or a blown-up
integration), 2 configuration error.  Errors are emitted to stderr as one
NDJSON object.  Timestamps appear only in the manifest; every other output
byte is a pure function of (config, seed, workers-independent reduction).
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import re
import struct
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .action import ActionProblem, PointTarget, SphereTarget, minimize_action, rate_function
from .experiments import (
    EnsembleSpec,
    LdpTable,
    TerminalSphereEvent,
    _noiseless_terminal,
    ldp_check,
    verify_energy_estimates,
    weak_convergence_study,
)
from .integrate import (
    BlowupError,
    ControlPath,
    Forcing,
    TimeGrid,
    Trajectory,
    integrate_sde,
    integrate_skeleton,
)
from .noise import (
    AdditiveNoise,
    CovarianceSpec,
    DiagonalMultiplicativeNoise,
    check_noise_hypotheses,
    member_stream,
)
from .operators import apply_b, apply_b_general, estimate_operator_constants
from .space import ModelParams, Variant, basis_state, inner_h, norm, wavenumbers, zero_state

__all__ = [
    "ConfigError",
    "RunConfig",
    "RunManifest",
    "parse_config",
    "serialize_config",
    "config_hash",
    "export",
    "read_binary",
    "run",
    "main",
    "SUBCOMMANDS",
]

SUBCOMMANDS = (
    "simulate",
    "skeleton",
    "minimize-action",
    "rate",
    "verify-energy",
    "weak-convergence",
    "ldp-check",
    "check-identities",
    "constants",
)

BINARY_MAGIC = b"SHLD1"
BINARY_VERSION = 1
KIND_TRAJECTORY = 0  # complex128 node states, (steps+1, N)
KIND_CONTROL = 1  # float64 cell values, (steps, N)

_FORMATS = ("ndjson", "csv", "binary")


class ConfigError(ValueError):
    """A configuration problem, carrying the offending line number."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        super().__init__(message)
        self.line = line


def _fmt(x: float) -> str:
    """Render a float with 17 significant digits (64-bit round-trip exact)."""
    return f"{float(x):.17g}"


# --------------------------------------------------------------------------
# schema
# --------------------------------------------------------------------------

# type tags: int, float, str, floats (comma list), strs (comma list)
_SCHEMA: Dict[str, Dict[str, Tuple[str, object]]] = {
    "": {"seed": ("int", 0)},
    "model": {
        "N": ("int", 16),
        "k0": ("float", 1.0),
        "nu": ("float", 1.0),
        "a": ("float", -1.0),
        "b": ("float", 0.5),
        "c": ("float", 0.5),
        "variant": ("str", "goy"),
    },
    "noise": {
        "covariance": ("str", "geometric"),
        "lam0": ("float", 1.0),
        "gamma": ("float", 1.0),
        "lambda": ("floats", ()),
        "sigma": ("str", "additive"),
        "s": ("floats", (1.0,)),
        "coeff": ("floats", (1.0,)),
    },
    "grid": {
        "t0": ("float", 0.0),
        "T": ("float", 1.0),
        "steps": ("int", 256),
    },
    "experiment": {
        "epsilon": ("float", 0.05),
        "paths": ("int", 200),
        "delta_weight": ("float", 1.0),
        "radius": ("float", 0.5),
        "eps_list": ("floats", (0.1, 0.01, 0.001, 0.0001)),
        "naive_paths": ("int", 0),
        "importance_paths": ("int", 0),
        "samples": ("int", 1000),
        "u0_shell": ("int", 1),
        "u0_bands": ("int", 1),
        "u0_scale": ("float", 1.0),
        "target_shell": ("int", 1),
        "target_value": ("float", 1.0),
        "target_kind": ("str", "point"),
        "penalty_rho": ("float", 1000.0),
        "stages": ("int", 5),
        "grad_tol": ("float", 1e-8),
        "max_iters": ("int", 500),
        "v_amp": ("float", 0.3),
    },
    "output": {
        "directory": ("str", "out"),
        "formats": ("strs", ("ndjson",)),
    },
}

_CHOICES = {
    ("model", "variant"): ("goy", "sabra"),
    ("noise", "covariance"): ("geometric", "explicit"),
    ("noise", "sigma"): ("additive", "multiplicative"),
    ("experiment", "target_kind"): ("point", "sphere"),
}

_INT_RE = re.compile(r"^[+-]?\d+$")


def _convert(section: str, key: str, raw: str, line: int):
    tag, _ = _SCHEMA[section][key]
    name = f"{section}.{key}" if section else key
    raw = raw.strip()
    if tag == "int":
        if not _INT_RE.match(raw):
            raise ConfigError(f"{name} must be an integer, got {raw!r}", line)
        return int(raw)
    if tag == "float":
        try:
            val = float(raw)
        except ValueError:
            raise ConfigError(f"{name} must be a real number, got {raw!r}", line)
        if math.isnan(val):
            raise ConfigError(f"{name} must not be NaN", line)
        return val
    if tag == "floats":
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        try:
            vals = tuple(float(p) for p in parts)
        except ValueError:
            raise ConfigError(f"{name} must be comma-separated reals, got {raw!r}", line)
        if any(math.isnan(v) for v in vals):
            raise ConfigError(f"{name} must not contain NaN", line)
        return vals
    if tag == "strs":
        return tuple(p.strip() for p in raw.split(",") if p.strip())
    # plain string
    val = raw.strip()
    choices = _CHOICES.get((section, key))
    if choices and val not in choices:
        raise ConfigError(
            f"{name} must be one of {', '.join(choices)}; got {val!r}", line
        )
    return val


# --------------------------------------------------------------------------
# config objects
# --------------------------------------------------------------------------


@dataclass
class RunConfig:
    """A fully validated run configuration."""

    params: ModelParams
    q: CovarianceSpec
    sigma: object
    grid: TimeGrid
    experiment: dict
    seed: int
    output_dir: str
    formats: Tuple[str, ...]


@dataclass
class RunManifest:
    """Reproducibility record written next to every run's artifacts.

    Only the manifest carries wall-clock timestamps; artifact contents are
    pure functions of (config, seed).
    """

    config_hash: str
    artifact_version: str
    subcommand: str
    seed: int
    started: str
    finished: str
    outputs: Dict[str, str]


def parse_config(text: str) -> RunConfig:
    """Parse and validate flat sectioned ``key = value`` text.

    Missing keys take the documented defaults; unknown sections or keys,
    type mismatches, duplicate keys, and cross-field violations (for
    example a + b + c != 0) are rejected with their line numbers.
    """
    values: Dict[Tuple[str, str], object] = {}
    lines_of: Dict[Tuple[str, str], int] = {}
    section = ""
    section_lines = {"": 0}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        stripped = rawline.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError(f"malformed section header {stripped!r}", lineno)
            section = stripped[1:-1].strip()
            if section not in _SCHEMA or section == "":
                raise ConfigError(f"unknown section [{section}]", lineno)
            section_lines[section] = lineno
            continue
        if "=" not in stripped:
            raise ConfigError(f"expected 'key = value', got {stripped!r}", lineno)
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _SCHEMA[section]:
            where = f"section [{section}]" if section else "top level"
            raise ConfigError(f"unknown key {key!r} in {where}", lineno)
        if (section, key) in values:
            raise ConfigError(
                f"duplicate key {key!r} (first set on line {lines_of[(section, key)]})",
                lineno,
            )
        values[(section, key)] = _convert(section, key, raw, lineno)
        lines_of[(section, key)] = lineno

    def get(section: str, key: str):
        if (section, key) in values:
            return values[(section, key)]
        return _SCHEMA[section][key][1]

    def line_of(section: str, key: str) -> int:
        return lines_of.get((section, key), section_lines.get(section, 0))

    # model
    variant = Variant.GOY if get("model", "variant") == "goy" else Variant.SABRA
    try:
        params = ModelParams(
            num_shells=get("model", "N"),
            k0=get("model", "k0"),
            nu=get("model", "nu"),
            a=get("model", "a"),
            b=get("model", "b"),
            c=get("model", "c"),
            variant=variant,
        )
    except (ValueError, TypeError) as err:
        raise ConfigError(f"invalid [model] section: {err}", line_of("model", "a"))
    n = params.num_shells

    # noise covariance
    lam_explicit = get("noise", "lambda")
    if get("noise", "covariance") == "explicit":
        if len(lam_explicit) == 0:
            raise ConfigError(
                "covariance = explicit requires a nonempty noise.lambda list",
                line_of("noise", "covariance"),
            )
        if len(lam_explicit) != n:
            raise ConfigError(
                f"noise.lambda has {len(lam_explicit)} entries, model has {n} shells",
                line_of("noise", "lambda"),
            )
        try:
            q = CovarianceSpec.explicit(lam_explicit)
        except (ValueError, TypeError) as err:
            raise ConfigError(f"invalid noise.lambda: {err}", line_of("noise", "lambda"))
    else:
        if len(lam_explicit) != 0:
            raise ConfigError(
                "noise.lambda is only allowed with covariance = explicit",
                line_of("noise", "lambda"),
            )
        try:
            q = CovarianceSpec.geometric(
                n, lam0=get("noise", "lam0"), gamma=get("noise", "gamma")
            )
        except (ValueError, TypeError) as err:
            raise ConfigError(
                f"invalid geometric covariance: {err}", line_of("noise", "lam0")
            )

    # noise coefficient
    def broadcast(name: str, vals: tuple) -> tuple:
        if len(vals) == 1:
            return vals * n
        if len(vals) != n:
            raise ConfigError(
                f"noise.{name} needs 1 or {n} entries, got {len(vals)}",
                line_of("noise", name),
            )
        return vals

    try:
        if get("noise", "sigma") == "additive":
            sigma = AdditiveNoise(s=broadcast("s", get("noise", "s")))
        else:
            sigma = DiagonalMultiplicativeNoise(c=broadcast("coeff", get("noise", "coeff")))
    except ConfigError:
        raise
    except (ValueError, TypeError) as err:
        raise ConfigError(f"invalid noise coefficient: {err}", line_of("noise", "sigma"))

    # grid
    try:
        grid = TimeGrid(
            t0=get("grid", "t0"), T=get("grid", "T"), steps=get("grid", "steps")
        )
    except (ValueError, TypeError) as err:
        raise ConfigError(f"invalid [grid] section: {err}", line_of("grid", "steps"))

    # experiment (typed union; subcommands read what they need)
    experiment = {key: get("experiment", key) for key in _SCHEMA["experiment"]}
    for key in ("paths", "samples", "stages", "max_iters", "target_shell", "u0_bands"):
        if experiment[key] < 1:
            raise ConfigError(
                f"experiment.{key} must be >= 1, got {experiment[key]}",
                line_of("experiment", key),
            )
    for key in ("naive_paths", "importance_paths", "u0_shell"):
        if experiment[key] < 0:
            raise ConfigError(
                f"experiment.{key} must be >= 0, got {experiment[key]}",
                line_of("experiment", key),
            )
    for key in ("delta_weight", "penalty_rho", "grad_tol"):
        if not experiment[key] > 0:
            raise ConfigError(
                f"experiment.{key} must be > 0, got {experiment[key]}",
                line_of("experiment", key),
            )
    if experiment["epsilon"] < 0 or not math.isfinite(experiment["epsilon"]):
        raise ConfigError(
            f"experiment.epsilon must be finite and >= 0, got {experiment['epsilon']}",
            line_of("experiment", "epsilon"),
        )
    if experiment["radius"] < 0:
        raise ConfigError(
            f"experiment.radius must be >= 0, got {experiment['radius']}",
            line_of("experiment", "radius"),
        )
    eps_list = experiment["eps_list"]
    if len(eps_list) == 0 or any(not (e > 0 and math.isfinite(e)) for e in eps_list):
        raise ConfigError(
            "experiment.eps_list must be a nonempty list of positive reals",
            line_of("experiment", "eps_list"),
        )
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError(
            "experiment.eps_list must be strictly decreasing",
            line_of("experiment", "eps_list"),
        )

    # output
    formats = get("output", "formats")
    if len(formats) == 0:
        raise ConfigError("output.formats must name at least one format",
                          line_of("output", "formats"))
    for fmt in formats:
        if fmt not in _FORMATS:
            raise ConfigError(
                f"unknown output format {fmt!r}; choose from {', '.join(_FORMATS)}",
                line_of("output", "formats"),
            )

    seed = get("", "seed")
    return RunConfig(
        params=params,
        q=q,
        sigma=sigma,
        grid=grid,
        experiment=experiment,
        seed=seed,
        output_dir=get("output", "directory"),
        formats=tuple(formats),
    )


def serialize_config(config: RunConfig) -> str:
    """Canonical text form: fixed order, every default explicit.

    The result parses back to an equal configuration, and two inputs that
    differ only in key order, comments, or spacing canonicalize to the
    same bytes.
    """
    p = config.params

    def reals(vals, what):
        out = []
        for v in vals:
            z = complex(v)
            if z.imag != 0.0:
                raise ValueError(
                    f"cannot serialize complex noise.{what}; config files carry real coefficients"
                )
            out.append(z.real)
        # a uniform ladder collapses to its broadcast form, so the canonical
        # text stays valid when an override changes the shell count
        if len(set(out)) == 1:
            return out[:1]
        return out

    if isinstance(config.sigma, AdditiveNoise):
        sigma_kind, s_vals, coeff_vals = "additive", reals(config.sigma.s, "s"), (1.0,)
    else:
        sigma_kind, s_vals, coeff_vals = (
            "multiplicative", (1.0,), reals(config.sigma.c, "coeff"),
        )
    if config.q.kind == "geometric":
        cov_kind, lam0, gamma = "geometric", config.q.lam0, config.q.gamma
        lam_line = "lambda ="
    else:
        cov_kind, lam0, gamma = "explicit", 1.0, 1.0
        lam_line = f"lambda = {', '.join(_fmt(v) for v in config.q.eigenvalues)}"
    lines = [f"seed = {config.seed}", ""]
    lines += [
        "[model]",
        f"N = {p.num_shells}",
        f"a = {_fmt(p.a)}",
        f"b = {_fmt(p.b)}",
        f"c = {_fmt(p.c)}",
        f"k0 = {_fmt(p.k0)}",
        f"nu = {_fmt(p.nu)}",
        f"variant = {'goy' if p.variant is Variant.GOY else 'sabra'}",
        "",
        "[noise]",
        f"coeff = {', '.join(_fmt(v) for v in coeff_vals)}",
        f"covariance = {cov_kind}",
        f"gamma = {_fmt(gamma)}",
        f"lam0 = {_fmt(lam0)}",
        lam_line,
        f"s = {', '.join(_fmt(v) for v in s_vals)}",
        f"sigma = {sigma_kind}",
        "",
        "[grid]",
        f"T = {_fmt(config.grid.T)}",
        f"steps = {config.grid.steps}",
        f"t0 = {_fmt(config.grid.t0)}",
        "",
        "[experiment]",
    ]
    for key in sorted(_SCHEMA["experiment"]):
        val = config.experiment[key]
        tag = _SCHEMA["experiment"][key][0]
        if tag == "floats":
            rendered = ", ".join(_fmt(v) for v in val)
        elif tag == "float":
            rendered = _fmt(val)
        else:
            rendered = str(val)
        lines.append(f"{key} = {rendered}")
    lines += [
        "",
        "[output]",
        f"directory = {config.output_dir}",
        f"formats = {', '.join(config.formats)}",
        "",
    ]
    return "\n".join(lines)


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical form (stable under reordering and comments)."""
    return hashlib.sha256(serialize_config(config).encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# export formats
# --------------------------------------------------------------------------


def _traj_ndjson(traj: Trajectory) -> str:
    times = traj.grid.nodes()
    lines = []
    for t, row in zip(times, traj.states):
        shells = ", ".join(f"[{_fmt(z.real)}, {_fmt(z.imag)}]" for z in row)
        lines.append(f'{{"t": {_fmt(t)}, "shells": [{shells}]}}')
    return "\n".join(lines) + "\n"


def _traj_csv(traj: Trajectory) -> str:
    n = traj.num_shells
    header = "t," + ",".join(f"re{j},im{j}" for j in range(1, n + 1))
    times = traj.grid.nodes()
    rows = [header]
    for t, row in zip(times, traj.states):
        cells = ",".join(f"{_fmt(z.real)},{_fmt(z.imag)}" for z in row)
        rows.append(f"{_fmt(t)},{cells}")
    return "\n".join(rows) + "\n"


_HEADER_STRUCT = struct.Struct("<5sBBIQdd")


def _binary_blob(kind: int, t0: float, dt: float, values: np.ndarray) -> bytes:
    rows, n = values.shape
    if kind == KIND_TRAJECTORY:
        payload = np.ascontiguousarray(values, dtype="<c16").tobytes()
    else:
        payload = np.ascontiguousarray(values, dtype="<f8").tobytes()
    header = _HEADER_STRUCT.pack(
        BINARY_MAGIC, BINARY_VERSION, kind, n, rows, float(t0), float(dt)
    )
    return header + payload


def read_binary(path: str) -> dict:
    """Read a versioned little-endian binary artifact.

    Returns {"kind", "t0", "dt", "values"}; trajectory payloads come back
    complex128 with shape (rows, N), control payloads float64.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER_STRUCT.size or blob[:5] != BINARY_MAGIC:
        raise ValueError(f"{path} is not a {BINARY_MAGIC.decode()} binary artifact")
    magic, version, kind, n, rows, t0, dt = _HEADER_STRUCT.unpack_from(blob)
    if version != BINARY_VERSION:
        raise ValueError(f"unsupported binary version {version}")
    payload = blob[_HEADER_STRUCT.size:]
    if kind == KIND_TRAJECTORY:
        values = np.frombuffer(payload, dtype="<c16").reshape(rows, n).astype(complex)
    elif kind == KIND_CONTROL:
        values = np.frombuffer(payload, dtype="<f8").reshape(rows, n).astype(float)
    else:
        raise ValueError(f"unknown binary kind {kind}")
    return {"kind": kind, "t0": t0, "dt": dt, "values": values}


def _table_rows(table: LdpTable) -> list:
    rows = []
    for r in table.rows:
        rows.append({
            "epsilon": r.epsilon,
            "estimator": r.estimator,
            "p_hat": r.p_hat,
            "ci_low": r.ci_low,
            "ci_high": r.ci_high,
            "neg_eps_log_p": r.neg_eps_log_p,
            "i_ref": r.i_ref,
            "zero_hits": r.zero_hits,
        })
    return rows


def _json_scalar(value) -> str:
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return '"inf"' if value > 0 else '"-inf"'
        return _fmt(value)
    if isinstance(value, int):
        return str(value)
    return json.dumps(value)


def _json_line(obj: dict) -> str:
    # deterministic float rendering (%.17g), insertion order preserved
    parts = []
    for key, value in obj.items():
        if isinstance(value, dict):
            parts.append(f"{json.dumps(key)}: {_json_object(value)}")
        elif isinstance(value, (list, tuple)):
            inner = ", ".join(_json_scalar(v) for v in value)
            parts.append(f"{json.dumps(key)}: [{inner}]")
        else:
            parts.append(f"{json.dumps(key)}: {_json_scalar(value)}")
    return "{" + ", ".join(parts) + "}"


def _json_object(obj: dict) -> str:
    return _json_line(obj)


def _table_csv(table: LdpTable) -> str:
    cols = ("epsilon", "estimator", "p_hat", "ci_low", "ci_high",
            "neg_eps_log_p", "i_ref", "zero_hits")
    out = [",".join(cols)]
    for row in _table_rows(table):
        cells = []
        for col in cols:
            val = row[col]
            if isinstance(val, bool):
                cells.append("true" if val else "false")
            elif isinstance(val, float):
                cells.append("inf" if math.isinf(val) else _fmt(val))
            else:
                cells.append(str(val))
        out.append(",".join(cells))
    return "\n".join(out) + "\n"


def export(obj, fmt: str, path: str) -> str:
    """Write a trajectory, control path, or LDP table in the given format.

    Text formats render every float with 17 significant digits; the binary
    format is little-endian with magic "SHLD1" and a version byte, and
    round-trips bit-identically through :func:`read_binary`.
    """
    if fmt not in _FORMATS:
        raise ValueError(f"unknown format {fmt!r}; choose from {', '.join(_FORMATS)}")
    if isinstance(obj, Trajectory):
        if fmt == "ndjson":
            data = _traj_ndjson(obj).encode("utf-8")
        elif fmt == "csv":
            data = _traj_csv(obj).encode("utf-8")
        else:
            data = _binary_blob(
                KIND_TRAJECTORY, obj.grid.t0, obj.grid.dt, obj.states
            )
    elif isinstance(obj, ControlPath):
        if fmt == "binary":
            data = _binary_blob(KIND_CONTROL, obj.grid.t0, obj.grid.dt, obj.values)
        elif fmt == "csv":
            n = obj.num_shells
            header = "t," + ",".join(f"v{j}" for j in range(1, n + 1))
            mids = obj.grid.nodes()[:-1]
            rows = [header] + [
                f"{_fmt(t)}," + ",".join(_fmt(c) for c in row)
                for t, row in zip(mids, obj.values)
            ]
            data = ("\n".join(rows) + "\n").encode("utf-8")
        else:
            lines = [
                _json_line({"t": float(t), "cells": [float(c) for c in row]})
                for t, row in zip(obj.grid.nodes()[:-1], obj.values)
            ]
            data = ("\n".join(lines) + "\n").encode("utf-8")
    elif isinstance(obj, LdpTable):
        if fmt == "csv":
            data = _table_csv(obj).encode("utf-8")
        elif fmt == "ndjson":
            lines = [_json_line(r) for r in _table_rows(obj)]
            data = ("\n".join(lines) + "\n").encode("utf-8")
        else:
            raise ValueError("tables export as ndjson or csv, not binary")
    else:
        raise TypeError(f"cannot export object of type {type(obj).__name__}")
    with open(path, "wb") as fh:
        fh.write(data)
    return path


def _write_ndjson(path: str, rows: Sequence[dict]) -> str:
    text = "\n".join(_json_line(r) for r in rows) + "\n"
    with open(path, "wb") as fh:
        fh.write(text.encode("utf-8"))
    return path


# --------------------------------------------------------------------------
# subcommand execution
# --------------------------------------------------------------------------


def _initial_state(config: RunConfig) -> np.ndarray:
    n = config.params.num_shells
    shell = config.experiment["u0_shell"]
    if shell == 0:
        return zero_state(n)
    bands = config.experiment["u0_bands"]
    if shell + bands - 1 > n:
        raise ConfigError(
            f"experiment.u0_shell = {shell} with u0_bands = {bands} "
            f"exceeds the {n}-shell model"
        )
    u0 = zero_state(n)
    for j in range(bands):
        u0 += config.experiment["u0_scale"] * 2.0 ** (-j) * basis_state(n, shell + j)
    return u0


def _ensemble_spec(config: RunConfig, paths: Optional[int] = None) -> EnsembleSpec:
    return EnsembleSpec(
        params=config.params,
        sigma=config.sigma,
        q=config.q,
        f=Forcing.zero(),
        u0=_initial_state(config),
        grid=config.grid,
        epsilon=config.experiment["epsilon"],
        paths=config.experiment["paths"] if paths is None else paths,
        master_seed=config.seed,
    )


def _traj_artifacts(traj: Trajectory, config: RunConfig, out_dir: str) -> Dict[str, str]:
    ext = {"ndjson": "ndjson", "csv": "csv", "binary": "bin"}
    artifacts = {}
    for fmt in config.formats:
        name = f"trajectory.{ext[fmt]}"
        export(traj, fmt, os.path.join(out_dir, name))
        artifacts[name] = fmt
    return artifacts


def _cmd_simulate(config: RunConfig, out_dir: str, workers: int) -> Tuple[int, Dict[str, str]]:
    eps = config.experiment["epsilon"]
    stream = member_stream(config.seed, "simulate", 0) if eps > 0 else None
    traj = integrate_sde(
        config.params, config.sigma, config.q, Forcing.zero(),
        eps, _initial_state(config), config.grid, stream,
    )
    return 0, _traj_artifacts(traj, config, out_dir)


def _cmd_skeleton(config: RunConfig, out_dir: str, workers: int) -> Tuple[int, Dict[str, str]]:
    traj = integrate_skeleton(
        config.params, config.sigma, config.q, Forcing.zero(),
        None, _initial_state(config), config.grid,
    )
    return 0, _traj_artifacts(traj, config, out_dir)


def _action_problem(config: RunConfig) -> ActionProblem:
    exp = config.experiment
    n = config.params.num_shells
    if exp["target_kind"] == "point":
        if exp["target_shell"] > n:
            raise ConfigError(
                f"experiment.target_shell = {exp['target_shell']} exceeds the {n}-shell model"
            )
        target = PointTarget(exp["target_value"] * basis_state(n, exp["target_shell"]))
    else:
        center = _noiseless_terminal(_ensemble_spec(config, paths=1))
        target = SphereTarget(center=tuple(center.tolist()), radius=exp["radius"])
    return ActionProblem(
        params=config.params, sigma=config.sigma, q=config.q, f=Forcing.zero(),
        u0=_initial_state(config), grid=config.grid, target=target,
        penalty_rho=exp["penalty_rho"], continuation_stages=exp["stages"],
        grad_tol=exp["grad_tol"], max_iters=exp["max_iters"],
    )


def _cmd_minimize_action(config: RunConfig, out_dir: str, workers: int) -> Tuple[int, Dict[str, str]]:
    result = minimize_action(_action_problem(config))
    artifacts: Dict[str, str] = {}
    export(result.v_star, "binary", os.path.join(out_dir, "control.bin"))
    artifacts["control.bin"] = "binary"
    _write_ndjson(os.path.join(out_dir, "trace.ndjson"), result.trace)
    artifacts["trace.ndjson"] = "ndjson"
    _write_ndjson(os.path.join(out_dir, "result.ndjson"), [{
        "action": result.action_value,
        "terminal_gap": result.terminal_gap,
        "iterations": result.iterations,
        "converged": result.converged,
        "rho_final": result.rho_final,
        "stage_gaps": list(result.stage_gaps),
    }])
    artifacts["result.ndjson"] = "ndjson"
    return 0, artifacts


def _cmd_rate(config: RunConfig, out_dir: str, workers: int) -> Tuple[int, Dict[str, str]]:
    prob = _action_problem(config)
    rows = rate_function([prob.target], prob)
    payload = [{
        "rate": row.rate,
        "converged": row.result.converged,
        "terminal_gap": row.result.terminal_gap,
        "iterations": row.result.iterations,
    } for row in rows]
    _write_ndjson(os.path.join(out_dir, "rate.ndjson"), payload)
    return 0, {"rate.ndjson": "ndjson"}


def _cmd_verify_energy(config: RunConfig, out_dir: str, workers: int) -> Tuple[int, Dict[str, str]]:
    report = verify_energy_estimates(
        _ensemble_spec(config), config.experiment["delta_weight"], workers=workers
    )
    rows = [{
        "inequality": name,
        "margin": report.margins[name],
        "pass": report.margins[name] >= 0.0,
        **report.worst[name],
    } for name in report.margins]
    rows.append({
        "summary": "energy-estimates",
        "branch": report.branch,
        "growth_constant": report.growth_constant,
        "epsilon": report.epsilon,
        "delta_weight": report.delta_weight,
        "paths": report.paths,
        "guards": report.guards,
        "measured": report.measured,
    })
    _write_ndjson(os.path.join(out_dir, "energy.ndjson"), rows)
    status = 0 if report.all_nonnegative() else 1
    return status, {"energy.ndjson": "ndjson"}


def _cmd_weak_convergence(config: RunConfig, out_dir: str, workers: int) -> Tuple[int, Dict[str, str]]:
    exp = config.experiment
    v = ControlPath(
        grid=config.grid,
        values=exp["v_amp"] * np.ones((config.grid.steps, config.params.num_shells)),
    )
    report = weak_convergence_study(v, exp["eps_list"], _ensemble_spec(config), workers=workers)
    rows = [{
        "epsilon": e, "gap": d, "sup_term": s, "int_term": i,
    } for e, d, s, i in zip(
        report.eps_list, report.d_values, report.sup_terms, report.int_terms
    )]
    rows.append({
        "summary": "weak-convergence",
        "slope": report.slope,
        "c_envelope": report.c_envelope,
        "monotone": report.monotone,
        "envelope_ok": report.envelope_ok,
        "paths": report.paths,
    })
    _write_ndjson(os.path.join(out_dir, "weak.ndjson"), rows)
    return 0, {"weak.ndjson": "ndjson"}


def _cmd_ldp_check(config: RunConfig, out_dir: str, workers: int) -> Tuple[int, Dict[str, str]]:
    exp = config.experiment
    spec = _ensemble_spec(config)
    center = _noiseless_terminal(spec)
    prob = ActionProblem(
        params=config.params, sigma=config.sigma, q=config.q, f=Forcing.zero(),
        u0=spec.u0, grid=config.grid,
        target=SphereTarget(center=tuple(center.tolist()), radius=exp["radius"]),
        penalty_rho=exp["penalty_rho"], continuation_stages=max(6, exp["stages"]),
        grad_tol=exp["grad_tol"], max_iters=exp["max_iters"],
    )
    result = minimize_action(prob)
    table = ldp_check(
        TerminalSphereEvent(exp["radius"]), exp["eps_list"], spec,
        i_ref=result.action_value, tilt=result.v_star,
        naive_paths=exp["naive_paths"] or None,
        importance_paths=exp["importance_paths"] or None,
        workers=workers,
    )
    export(table, "ndjson", os.path.join(out_dir, "ldp.ndjson"))
    export(table, "csv", os.path.join(out_dir, "ldp.csv"))
    return 0, {"ldp.ndjson": "ndjson", "ldp.csv": "csv"}


def _cmd_check_identities(config: RunConfig, out_dir: str, workers: int) -> Tuple[int, Dict[str, str]]:
    params = config.params
    n = params.num_shells
    k = wavenumbers(params)
    rng = member_stream(config.seed, "hypothesis-check", 0)
    count = config.experiment["samples"]
    standard = ModelParams(num_shells=n, k0=params.k0, nu=params.nu, variant=Variant.GOY)

    worst_tri = 0.0
    worst_dec = 0.0
    worst_gen = 0.0
    for _ in range(count):
        u = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        tri = abs(inner_h(apply_b(u, v, params), v))
        scale = k[-1] * norm(u, "l4", params) * norm(v, "l4", params) ** 2
        worst_tri = max(worst_tri, tri / scale)

        w = u - v
        lhs = apply_b(u, u, params) - apply_b(v, v, params)
        parts = (apply_b(v, w, params), apply_b(w, v, params), apply_b(w, w, params))
        dscale = (sum(np.abs(t) for t in parts)
                  + np.abs(apply_b(u, u, params)) + np.abs(apply_b(v, v, params)))
        resid = np.abs(lhs - (parts[0] + parts[1] + parts[2]))
        worst_dec = max(worst_dec, float(np.max(resid / (dscale + 1e-300))))

        b1 = apply_b(u, u, standard)
        b2 = apply_b_general(u, standard)
        gscale = float(np.max(np.abs(b1))) + 1e-300
        worst_gen = max(worst_gen, float(np.max(np.abs(b2 - b1))) / gscale)

    checks = [
        ("trilinear_cancellation", worst_tri, 1e-12),
        ("bilinear_decomposition", worst_dec, 1e-13),
        ("general_matches_standard", worst_gen, 1e-15),
    ]
    rows = [{
        "check": name, "worst_ratio": float(value), "bound": bound,
        "pass": bool(value <= bound),
    } for name, value, bound in checks]
    rows.append({"summary": "identity-suite", "samples": count, "shells": n})
    _write_ndjson(os.path.join(out_dir, "identities.ndjson"), rows)
    status = 0 if all(value <= bound for _, value, bound in checks) else 1
    return status, {"identities.ndjson": "ndjson"}


def _cmd_constants(config: RunConfig, out_dir: str, workers: int) -> Tuple[int, Dict[str, str]]:
    samples = config.experiment["samples"]
    hyp = check_noise_hypotheses(
        config.sigma, config.q, config.params, samples=samples, seed=config.seed
    )
    ops = estimate_operator_constants(config.params, samples, config.seed)
    rows = [
        {
            "report": "noise-hypotheses",
            "K": hyp.K, "L": hyp.L, "K1": hyp.K1, "K2": hyp.K2,
            "a1_applicable": hyp.a1_applicable,
            "epsilon_guards": hyp.epsilon_guards,
        },
        {
            "report": "operator-constants",
            "c1": ops.c1, "c2": ops.c2, "c3": ops.c3, "c4": ops.c4,
            "monotonicity_margin": ops.monotonicity_margin,
            "samples": ops.samples,
        },
    ]
    _write_ndjson(os.path.join(out_dir, "constants.ndjson"), rows)
    return 0, {"constants.ndjson": "ndjson"}


_COMMANDS = {
    "simulate": _cmd_simulate,
    "skeleton": _cmd_skeleton,
    "minimize-action": _cmd_minimize_action,
    "rate": _cmd_rate,
    "verify-energy": _cmd_verify_energy,
    "weak-convergence": _cmd_weak_convergence,
    "ldp-check": _cmd_ldp_check,
    "check-identities": _cmd_check_identities,
    "constants": _cmd_constants,
}


def _apply_overrides(config: RunConfig, overrides: Dict[str, str]) -> RunConfig:
    """Apply ``section.key=value`` overrides through the closed schema."""
    text = serialize_config(config)
    lines = text.splitlines()
    for dotted, raw in overrides.items():
        if dotted == "seed":
            section, key = "", "seed"
        elif "." in dotted:
            section, _, key = dotted.partition(".")
        else:
            raise ConfigError(f"override {dotted!r} must look like section.key=value")
        if section not in _SCHEMA or key not in _SCHEMA.get(section, {}):
            raise ConfigError(f"unknown override target {dotted!r}")
        # replace the canonical line in place (every key appears exactly once)
        current = ""
        replaced = False
        for i, line in enumerate(lines):
            stripped = line.strip()
            if stripped.startswith("[") and stripped.endswith("]"):
                current = stripped[1:-1]
            elif stripped.startswith(f"{key} =") or stripped.startswith(f"{key}="):
                if current == section:
                    lines[i] = f"{key} = {raw}"
                    replaced = True
                    break
        if not replaced:
            raise ConfigError(f"override target {dotted!r} not found in canonical form")
    return parse_config("\n".join(lines))


def run(
    subcommand: str,
    config: RunConfig,
    overrides: Optional[Dict[str, str]] = None,
    out_dir: Optional[str] = None,
    workers: int = 1,
) -> Tuple[int, Dict[str, str]]:
    """Execute one subcommand: artifacts plus manifest into the output directory.

    Returns (exit_status, artifact name -> format).  Exit 0 on success, 1
    when a checked invariant fails (negative margin, violated monotonicity,
    blow-up), 2 on configuration errors.  Machine-readable error objects go
    to stderr as NDJSON.
    """
    started = datetime.now(timezone.utc).isoformat()
    try:
        if subcommand not in _COMMANDS:
            raise ConfigError(
                f"unknown subcommand {subcommand!r}; choose from {', '.join(SUBCOMMANDS)}"
            )
        if overrides:
            config = _apply_overrides(config, overrides)
        target_dir = out_dir if out_dir is not None else config.output_dir
        os.makedirs(target_dir, exist_ok=True)
        status, artifacts = _COMMANDS[subcommand](config, target_dir, workers)
    except ConfigError as err:
        payload = {"error": "config", "message": str(err)}
        if err.line is not None:
            payload["line"] = err.line
        print(_json_line(payload), file=sys.stderr)
        return 2, {}
    except (ValueError, TypeError) as err:
        print(_json_line({"error": "config", "message": str(err)}), file=sys.stderr)
        return 2, {}
    except (AssertionError, BlowupError) as err:
        print(_json_line({"error": "assertion", "message": str(err)}), file=sys.stderr)
        return 1, {}

    digests = {}
    for name in sorted(artifacts):
        with open(os.path.join(target_dir, name), "rb") as fh:
            digests[name] = hashlib.sha256(fh.read()).hexdigest()
    manifest = RunManifest(
        config_hash=config_hash(config),
        artifact_version=__version__,
        subcommand=subcommand,
        seed=config.seed,
        started=started,
        finished=datetime.now(timezone.utc).isoformat(),
        outputs=digests,
    )
    with open(os.path.join(target_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return status, artifacts


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Console entry point."""
    parser = argparse.ArgumentParser(
        prog="goylab",
        description="Numerical laboratory for stochastic dyadic shell models.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", metavar="PATH", default=None,
                        help="config file (defaults apply when omitted)")
    parser.add_argument("--seed", metavar="U64", type=int, default=None)
    parser.add_argument("--out", metavar="DIR", default=None)
    parser.add_argument("--format", metavar="FMT", choices=_FORMATS, default=None,
                        help="override output.formats with a single format")
    parser.add_argument("--workers", metavar="K", type=int, default=1)
    parser.add_argument("--set", metavar="SECTION.KEY=VALUE", action="append",
                        default=[], dest="overrides")
    args = parser.parse_args(argv)

    try:
        if args.config is not None:
            with open(args.config, "r", encoding="utf-8") as fh:
                text = fh.read()
        else:
            text = ""
        config = parse_config(text)
    except OSError as err:
        print(_json_line({"error": "config", "message": str(err)}), file=sys.stderr)
        return 2
    except ConfigError as err:
        payload = {"error": "config", "message": str(err)}
        if err.line is not None:
            payload["line"] = err.line
        print(_json_line(payload), file=sys.stderr)
        return 2

    overrides: Dict[str, str] = {}
    for item in args.overrides:
        if "=" not in item:
            print(_json_line({
                "error": "config",
                "message": f"--set needs SECTION.KEY=VALUE, got {item!r}",
            }), file=sys.stderr)
            return 2
        dotted, _, raw = item.partition("=")
        overrides[dotted.strip()] = raw.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.format is not None:
        overrides["output.formats"] = args.format

    status, artifacts = run(
        args.subcommand, config, overrides=overrides or None,
        out_dir=args.out, workers=args.workers,
    )
    if status == 0:
        target = args.out if args.out is not None else config.output_dir
        for name in sorted(artifacts):
            print(os.path.join(target, name))
    return status


if __name__ == "__main__":
    sys.exit(main())
