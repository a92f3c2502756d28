"""Parameter sweeps and space-time error metrics."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .solver import LIMIT, VISCOUS, SolverConfig, StepFailure, Trajectory, extract_xi, run
from .spectral import Field, SpectralOperator, kernel_mask

CSV_FLOAT = "%.17g"


@dataclass(frozen=True)
class MetricRecord:
    l2q: float
    linf_h: float
    weighted_l2q: float
    kappa: float


def _check_mesh(a: Trajectory, b: Trajectory):
    if a.phi.shape != b.phi.shape:
        raise ValueError(f"grid mismatch: {a.phi.shape} vs {b.phi.shape}")
    if not np.allclose(a.times, b.times, rtol=0, atol=1e-12 * max(1.0, a.times[-1])):
        raise ValueError("time meshes differ")


def l2_time(sq_norms: np.ndarray, times: np.ndarray, kappa: float = 0.0) -> float:
    """``sqrt(int_0^T exp(-2 kappa t) |w(t)|^2 dt)`` by the trapezoid rule."""
    weight = np.exp(-2 * kappa * times) if kappa else 1.0
    return float(math.sqrt(max(trapezoid(weight * sq_norms, times), 0.0)))


def time_integral(values, times) -> np.ndarray:
    """Running integral ``(1 * w)(t) = int_0^t w``, trapezoidal, starting at 0."""
    return cumulative_trapezoid(np.asarray(values, dtype=float), np.asarray(times, dtype=float), initial=0.0)


def series_metrics(diff: np.ndarray, times: np.ndarray, kappa: float = 0.0) -> MetricRecord:
    sq = np.sum(diff ** 2, axis=1)
    return MetricRecord(
        l2q=l2_time(sq, times),
        linf_h=float(math.sqrt(sq.max())) if sq.size else 0.0,
        weighted_l2q=l2_time(sq, times, kappa),
        kappa=kappa,
    )


def trajectory_metrics(traj_a: Trajectory, traj_b: Trajectory, kappa: float = 0.0) -> MetricRecord:
    """Norms of ``phi_a - phi_b``: L^2(Q), L^inf(0,T;H) and the exp-weighted L^2(Q)."""
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    _check_mesh(traj_a, traj_b)
    return series_metrics(traj_a.phi - traj_b.phi, traj_a.times, kappa)


def _strictly_decreasing(x) -> bool:
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    return bool(np.all(np.diff(x) < 0))


def _nonincreasing(x) -> bool:
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    return bool(np.all(np.diff(x) <= 0))


@dataclass
class ConvergenceReport:
    parameter: str
    values: list
    metrics: dict = field(default_factory=dict)
    """Column name -> list aligned with ``values``."""
    flags: dict = field(default_factory=dict)
    runtimes: list = field(default_factory=list)
    complete: bool = True
    error: str | None = None

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.metrics[name], dtype=float)

    def to_csv(self) -> str:
        names = list(self.metrics)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.parameter, *names])
        for i, v in enumerate(self.values):
            w.writerow([CSV_FLOAT % v, *(CSV_FLOAT % self.metrics[n][i] for n in names)])
        return buf.getvalue()

    def summary(self) -> dict:
        def clean(x):
            x = float(x)
            return x if math.isfinite(x) else None

        return {
            "parameter": self.parameter,
            "values": [float(v) for v in self.values],
            "metrics": {k: [clean(x) for x in v] for k, v in self.metrics.items()},
            "flags": dict(self.flags),
            "runtimes_s": list(self.runtimes),
            "complete": self.complete,
            "error": self.error,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


# -- operator limit -------------------------------------------------------------

def operator_limit_check(v: Field, sigma_list: Sequence[float], op_b: SpectralOperator | None = None) -> ConvergenceReport:
    """``|B^sigma v - (v - P v)|`` for each sigma; per-mode errors in ``report.per_mode``."""
    op = op_b or v.op
    if v.op is not op and v.op.n_modes != op.n_modes:
        raise ValueError("field and operator disagree")
    c = v.coeffs
    target = np.where(kernel_mask(op), 0.0, c)
    errs, per_mode, times = [], [], []
    for s in sigma_list:
        if not s > 0:
            raise ValueError(f"sigma must be positive, got {s}")
        t0 = time.perf_counter()
        d = op.powers(s) * c - target
        per_mode.append(np.abs(d))
        errs.append(float(np.linalg.norm(d)))
        times.append(time.perf_counter() - t0)
    rep = ConvergenceReport("sigma", list(sigma_list), {"operator_error": errs}, runtimes=times)
    rep.flags["strictly_decreasing"] = _strictly_decreasing(errs)
    rep.per_mode = np.array(per_mode)
    return rep


# -- sweeps ---------------------------------------------------------------------

ForcingFamily = Callable[[float], object]


def _timed_run(cfg, phi0, forcing):
    t0 = time.perf_counter()
    traj = run(cfg, phi0, forcing)
    return traj, time.perf_counter() - t0


def sweep_sigma(
    base_config: SolverConfig,
    phi0,
    forcing_family: ForcingFamily | None,
    sigma_list: Sequence[float],
    kappa: float | None = None,
) -> ConvergenceReport:
    """Viscous runs for each sigma against the limit run with the same ``lambda``.

    ``forcing_family(sigma)`` returns the forcing for a given sigma;
    ``forcing_family(0.0)`` is used for the limit run.
    """
    fam = forcing_family or (lambda s: None)
    kappa = base_config.potential.L_pi / base_config.tau if kappa is None else kappa
    ref_cfg = base_config.replace(mode=LIMIT)
    ref, t_ref = _timed_run(ref_cfg, phi0, fam(0.0))
    cols = {"l2q": [], "linf_h": [], "zeta_l2q": [], "weighted_l2q": []}
    rep = ConvergenceReport("sigma", [], cols)
    for s in sigma_list:
        try:
            traj, dt = _timed_run(base_config.replace(mode=VISCOUS, sigma=s), phi0, fam(s))
        except StepFailure as exc:
            rep.complete, rep.error = False, f"sigma={s}: {exc}"
            break
        m = trajectory_metrics(traj, ref, kappa)
        z = series_metrics(traj.zeta - ref.zeta, traj.times)
        rep.values.append(s)
        cols["l2q"].append(m.l2q)
        cols["linf_h"].append(m.linf_h)
        cols["zeta_l2q"].append(z.l2q)
        cols["weighted_l2q"].append(m.weighted_l2q)
        rep.runtimes.append(dt)
    rep.flags["l2q_decreasing"] = _strictly_decreasing(cols["l2q"])
    rep.flags["zeta_decreasing"] = _strictly_decreasing(cols["zeta_l2q"])
    rep.flags["kappa"] = kappa
    rep.reference_runtime = t_ref
    return rep


def constraint_violation(traj: Trajectory) -> float:
    """``max (dist(phi, D(beta)))`` over nodes and times."""
    lo, hi = traj.config.potential.domain
    v = traj.nodal_phi()
    return float(np.max(np.maximum(np.maximum(v - hi, lo - v), 0.0)))


def sweep_lambda(base_config: SolverConfig, phi0, forcing, lambda_list: Sequence[float]) -> ConvergenceReport:
    """Runs over decreasing ``lambda``; successive L^2(Q) differences (first entry NaN)."""
    lams = list(lambda_list)
    if any(not l > 0 for l in lams) or any(b >= a for a, b in zip(lams, lams[1:])):
        raise ValueError("lambda values must be positive and strictly decreasing")
    cols = {"cauchy_l2q": [], "violation": [], "xi_residual": []}
    rep = ConvergenceReport("lambda", [], cols)
    prev = None
    for lam in lams:
        try:
            traj, dt = _timed_run(base_config.replace(lam=lam), phi0, forcing)
        except StepFailure as exc:
            rep.complete, rep.error = False, f"lambda={lam}: {exc}"
            break
        rep.values.append(lam)
        cols["cauchy_l2q"].append(np.nan if prev is None else trajectory_metrics(traj, prev).l2q)
        cols["violation"].append(constraint_violation(traj))
        cols["xi_residual"].append(extract_xi(traj).residual_L2Q if traj.kind == LIMIT else np.nan)
        rep.runtimes.append(dt)
        prev = traj
    rep.flags["cauchy_decreasing"] = _strictly_decreasing(cols["cauchy_l2q"])
    rep.flags["violation_nonincreasing"] = _nonincreasing(cols["violation"])
    if base_config.mode == LIMIT:
        rep.flags["xi_residual_decreasing"] = _strictly_decreasing(cols["xi_residual"])
    return rep


# -- continuous dependence ------------------------------------------------------

CONTDEP_SLACK = 0.05


def cd_constant(tau: float, L_pi: float, T: float) -> float:
    """Gronwall constant ``(2 tau)^(-1/2) exp((1 + L_pi) T / tau)``."""
    return (2 * tau) ** -0.5 * math.exp((1 + L_pi) * T / tau)


@dataclass(frozen=True)
class ContDepRecord:
    ratio: float
    bound: float
    diff_linf_h: float
    forcing_l2: float
    degenerate: bool

    @property
    def passed(self) -> bool:
        return self.ratio <= self.bound * (1 + CONTDEP_SLACK)


def continuous_dependence_experiment(config: SolverConfig, phi0, f1, f2) -> ContDepRecord:
    """Two limit runs from the same ``phi0``; ratio of solution to forcing distance.

    The forcing norm is ``(dt sum_{n>=1} |f1^n - f2^n|^2)^(1/2)``, i.e. over the
    values the implicit scheme consumes.
    """
    if config.mode != LIMIT:
        raise ValueError("continuous dependence is measured on the limit problem")
    a = run(config, phi0, f1)
    b = run(config, phi0, f2)
    dphi = float(np.sqrt(np.max(np.sum((a.phi - b.phi) ** 2, axis=1))))
    df = float(np.sqrt(config.dt * np.sum((a.f[1:] - b.f[1:]) ** 2)))
    bound = cd_constant(config.tau, config.potential.L_pi, config.t_final)
    if df == 0.0:
        return ContDepRecord(0.0, bound, dphi, 0.0, True)
    return ContDepRecord(dphi / df, bound, dphi, df, False)
