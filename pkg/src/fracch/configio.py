"""Flat ``key = value`` run configuration and run persistence."""
from __future__ import annotations

import configparser
import csv
import io
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .potentials import PotentialError, PotentialSpec, make_potential
from .solver import (
    DIAGNOSTIC_KEYS,
    LIMIT,
    VISCOUS,
    ConfigError,
    SolverConfig,
    Trajectory,
    check_initial_data,
)
from .spectral import Field, SpectralOperator, build_cosine_operator

CSV_FLOAT = "%.17g"
CSV_COLUMNS = ("step", "time", *DIAGNOSTIC_KEYS)

DEFAULTS = {
    "domain_length": "3.141592653589793",
    "n_modes": "32",
    "r": "0.5",
    "sigma": "0.25",
    "sigma0": "0.5",
    "lambda": "0.01",
    "mode": VISCOUS,
    "potential.type": "regular",
    "phi0.kind": "constant",
    "forcing.kind": "zero",
    "newton_tol": "1e-10",
    "newton_max_iter": "50",
    "seed": "0",
}
REQUIRED = ("tau", "dt", "t_final")

KNOWN = set(DEFAULTS) | set(REQUIRED) | {
    "potential.c1",
    "potential.c2",
    "phi0.value",
    "phi0.mean",
    "phi0.amplitudes",
    "phi0.path",
    "phi0.noise",
    "forcing.value",
    "forcing.path",
}


@dataclass
class Scenario:
    config: SolverConfig
    phi0: Field
    forcing: object
    seed: int
    values: dict
    """Resolved key/value strings (defaults filled in)."""


def read_kv(text: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return dict(cp["run"])


def serialize_config(values: dict) -> str:
    return "".join(f"{k} = {values[k]}\n" for k in sorted(values))


def _get(values, key, kind):
    raw = values.get(key)
    if raw is None:
        raise ConfigError(f"missing key {key!r}")
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"key {key!r}: cannot read {raw!r} as {kind.__name__}") from None


def _floats(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.replace(",", " ").split()])
    except ValueError:
        raise ConfigError(f"cannot parse number list {text!r}") from None


def _resolve(path: str, base_dir) -> Path:
    p = Path(path)
    return p if p.is_absolute() or base_dir is None else Path(base_dir) / p


def _load_table(path: Path) -> np.ndarray:
    try:
        return np.atleast_2d(np.loadtxt(path, delimiter=None, ndmin=2))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def build_potential(values: dict) -> PotentialSpec:
    kind = values["potential.type"]
    params = {}
    for key in ("c1", "c2"):
        if f"potential.{key}" in values:
            params[key] = _get(values, f"potential.{key}", float)
    if kind not in ("regular", "logarithmic", "double_obstacle"):
        raise ConfigError(f"unknown potential.type {kind!r}", "convex-part")
    try:
        return make_potential(kind, **params)
    except PotentialError as exc:
        raise ConfigError(str(exc)) from None


def build_phi0(values: dict, op: SpectralOperator, seed: int, base_dir=None) -> Field:
    kind = values["phi0.kind"]
    x = op.nodes()
    if kind == "constant":
        v = np.full(op.n_nodes, _get({"phi0.value": "0", **values}, "phi0.value", float))
    elif kind == "mode_mix":
        # phi0 = mean + sum_k a_k cos(k pi x / L), k = 1, 2, ...
        v = np.full(op.n_nodes, float(values.get("phi0.mean", "0")))
        amps = _floats(values.get("phi0.amplitudes", ""))
        for k, a in enumerate(amps, start=1):
            v = v + a * np.cos(k * np.pi * x / op.domain_length)
    elif kind == "file":
        tab = _load_table(_resolve(_get(values, "phi0.path", str), base_dir)).ravel()
        if tab.size != op.n_nodes:
            raise ConfigError(f"phi0 file must hold {op.n_nodes} nodal values, found {tab.size}")
        v = tab
    else:
        raise ConfigError(f"unknown phi0.kind {kind!r}")
    noise = float(values.get("phi0.noise", "0"))
    if noise:
        v = v + noise * np.random.default_rng(seed).uniform(-1, 1, op.n_nodes)
    return Field(op.weight * (op.basis_matrix().T @ v), op)


def build_forcing(values: dict, op: SpectralOperator, base_dir=None):
    kind = values["forcing.kind"]
    if kind == "zero":
        return None
    if kind == "constant":
        return np.full(op.n_nodes, _get(values, "forcing.value", float))
    if kind == "file":
        tab = _load_table(_resolve(_get(values, "forcing.path", str), base_dir))
        if tab.shape[1] != op.n_nodes + 1:
            raise ConfigError(f"forcing file rows must be 'time v_1 .. v_{op.n_nodes}'")
        ts, vals = tab[:, 0], tab[:, 1:]
        if ts.size == 1:
            return vals[0]
        if np.any(np.diff(ts) <= 0):
            raise ConfigError("forcing file times must increase")

        def forcing(t):
            return np.array([np.interp(t, ts, vals[:, j]) for j in range(vals.shape[1])])

        return forcing
    raise ConfigError(f"unknown forcing.kind {kind!r}")


def parse_config(text: str, base_dir=None) -> Scenario:
    """Parse and validate; constraint violations raise :class:`ConfigError` with a tag."""
    raw = read_kv(text)
    unknown = set(raw) - KNOWN
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    values = {**DEFAULTS, **raw}
    mode = values["mode"]
    if mode not in (VISCOUS, LIMIT):
        raise ConfigError(f"mode must be {VISCOUS} or {LIMIT}, got {mode!r}")
    n_modes = _get(values, "n_modes", int)
    length = _get(values, "domain_length", float)
    if n_modes < 2 or not length > 0:
        raise ConfigError("need n_modes >= 2 and domain_length > 0")
    op = build_cosine_operator(n_modes, length)
    pot = build_potential(values)
    seed = _get(values, "seed", int)
    cfg = SolverConfig(
        op_a=op,
        op_b=op,
        potential=pot,
        tau=_get(values, "tau", float),
        lam=_get(values, "lambda", float),
        dt=_get(values, "dt", float),
        t_final=_get(values, "t_final", float),
        r=_get(values, "r", float),
        sigma=_get(values, "sigma", float),
        sigma0=_get(values, "sigma0", float),
        mode=mode,
        newton_tol=_get(values, "newton_tol", float),
        newton_max_iter=_get(values, "newton_max_iter", int),
    )
    cfg.n_steps
    phi0 = build_phi0(values, op, seed, base_dir)
    check_initial_data(cfg, phi0.coeffs)
    forcing = build_forcing(values, op, base_dir)
    return Scenario(cfg, phi0, forcing, seed, values)


def load_config(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent)


# -- manifest and persistence ------------------------------------------------------

def _operator_descriptor(op: SpectralOperator) -> dict:
    return {
        "basis_kind": op.basis_kind,
        "n_modes": op.n_modes,
        "domain_length": op.domain_length,
        "kernel_dim": op.kernel_dim,
    }


@dataclass
class RunManifest:
    config: dict
    potential: dict
    operators: dict
    version: str = __version__
    runtime_s: float = 0.0
    outputs: list = field(default_factory=list)

    @classmethod
    def from_config(cls, cfg: SolverConfig, runtime_s: float = 0.0) -> RunManifest:
        scalars = {
            k: getattr(cfg, k)
            for k in ("r", "sigma", "sigma0", "tau", "lam", "dt", "t_final", "mode", "newton_tol", "newton_max_iter")
        }
        pot = {"variant": cfg.potential.variant, "L_pi": cfg.potential.L_pi, **cfg.potential.params}
        ops = {"A": _operator_descriptor(cfg.op_a), "B": _operator_descriptor(cfg.op_b)}
        return cls(scalars, pot, ops, runtime_s=runtime_s)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> RunManifest:
        return cls(**json.loads(text))


def trajectory_csv(traj: Trajectory) -> str:
    d = traj.diagnostics
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for i, t in enumerate(traj.times):
        row = [str(i), CSV_FLOAT % t]
        for k in DIAGNOSTIC_KEYS:
            row.append(str(int(d[k][i])) if k == "newton_iters" else CSV_FLOAT % d[k][i])
        w.writerow(row)
    return buf.getvalue()


def coefficient_csv(coeffs: np.ndarray, times: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", *(f"c{j}" for j in range(coeffs.shape[1]))])
    for t, row in zip(times, coeffs):
        w.writerow([CSV_FLOAT % t, *(CSV_FLOAT % c for c in row)])
    return buf.getvalue()


def terminal_metrics(traj: Trajectory) -> dict:
    d = traj.diagnostics
    return {
        "time": float(traj.times[-1]),
        **{k: float(d[k][-1]) for k in DIAGNOSTIC_KEYS},
        "max_mean_drift": float(np.max(np.abs(d["mean_phi"] - traj.m0))),
        "m0": float(traj.m0),
    }


def _write(path: Path, text: str):
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def persist_run(traj: Trajectory, manifest: RunManifest, out_dir, dump_fields: bool = False, stem: str = "run") -> dict:
    """Write ``<stem>.csv``, ``<stem>.json`` and optional coefficient tables."""
    out = Path(out_dir)
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = {"trajectory": out / f"{stem}.csv", "summary": out / f"{stem}.json"}
    if dump_fields:
        paths["phi"] = out / f"{stem}_phi.csv"
        paths["mu"] = out / f"{stem}_mu.csv"
    manifest.outputs = sorted(str(p) for p in paths.values())
    _write(paths["trajectory"], trajectory_csv(traj))
    if dump_fields:
        _write(paths["phi"], coefficient_csv(traj.phi, traj.times))
        _write(paths["mu"], coefficient_csv(traj.mu, traj.times))
    summary = {
        "config": asdict(manifest),
        "terminal_metrics": terminal_metrics(traj),
        "runtime_s": manifest.runtime_s,
        "version": manifest.version,
    }
    _write(paths["summary"], json.dumps(summary, indent=2, sort_keys=True))
    return paths
