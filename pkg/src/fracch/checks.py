"""Property suites run by ``fracch verify``.

Each check returns ``(name, ok, detail)``; suites are deterministic.
"""
from __future__ import annotations

import tempfile
from typing import Callable

import numpy as np

from .asymptotics import cd_constant, operator_limit_check, trajectory_metrics
from .configio import RunManifest, parse_config, persist_run
from .convex_vi import check_vi_equivalence, density_report, density_sequence, random_vi
from .potentials import make_potential
from .solver import LIMIT, SolverConfig, energy_ledger, run
from .spectral import (
    Field,
    apply_power,
    build_cosine_operator,
    frac_norm,
    poincare_constant,
    project_kernel,
    to_modal,
    to_nodal,
)

Check = tuple[str, bool, str]


def _spectral() -> list[Check]:
    rng = np.random.default_rng(0)
    op = build_cosine_operator(64, np.pi)
    out = []
    v = Field(rng.normal(size=64) / (1 + np.arange(64)), op)
    back = to_modal(to_nodal(v), op)
    err = (back - v).norm() / v.norm()
    out.append(("round trip", err <= 1e-10, f"rel err {err:.2e}"))
    lhs = apply_power(op, 0.3, apply_power(op, 0.45, v))
    rhs = apply_power(op, 0.75, v)
    err = (lhs - rhs).norm() / rhs.norm()
    out.append(("power semigroup", err <= 1e-12, f"rel err {err:.2e}"))
    w = Field(rng.normal(size=64), op)
    sym = abs(project_kernel(op, v).inner(w) - v.inner(project_kernel(op, w)))
    out.append(("projection symmetric", sym <= 1e-12, f"{sym:.2e}"))
    z = v - project_kernel(op, v)
    cp = poincare_constant(op, 0.5)
    gap = z.norm() - cp * frac_norm(op, 0.5, z)
    out.append(("poincare", gap <= 1e-12, f"margin {gap:.2e}"))
    return out


def _potentials() -> list[Check]:
    rng = np.random.default_rng(1)
    out = []
    for kind in ("regular", "logarithmic", "double_obstacle"):
        p = make_potential(kind)
        s, t = rng.uniform(-3, 3, (2, 10_000))
        lam = 10 ** rng.uniform(-2, 0, 10_000)
        ys, yt = p.yosida(lam, s), p.yosida(lam, t)
        mono = np.min((ys - yt) * (s - t))
        lip = np.max(np.abs(ys - yt) - np.abs(s - t) / lam)
        out.append((f"{kind} monotone", mono >= -1e-12, f"min {mono:.2e}"))
        out.append((f"{kind} lipschitz", lip <= 1e-9, f"max excess {lip:.2e}"))
        env = np.max(p.moreau(lam, s) - p.beta_hat(s))
        out.append((f"{kind} envelope below", env <= 1e-12, f"max {env:.2e}"))
        if kind != "double_obstacle":
            h = 1e-5
            fd = (p.moreau(lam, s + h) - p.moreau(lam, s - h)) / (2 * h)
            err = np.max(np.abs(fd - ys))
            out.append((f"{kind} envelope derivative", err <= 1e-6, f"max err {err:.2e}"))
    return out


def _small_config(mode: str, **kw) -> tuple[SolverConfig, Field]:
    op = build_cosine_operator(16, np.pi)
    pot = make_potential("regular")
    cfg = SolverConfig(op, op, pot, tau=1.0, lam=1e-2, dt=1e-2, t_final=0.5, mode=mode, **kw)
    phi0 = Field(np.r_[0.2 * np.sqrt(np.pi), 0.3 * np.sqrt(np.pi / 2), np.zeros(14)], op)
    return cfg, phi0


def _solver() -> list[Check]:
    out = []
    for mode in ("viscous_fractional", LIMIT):
        cfg, phi0 = _small_config(mode)
        traj = run(cfg, phi0)
        drift = np.max(np.abs(traj.diagnostics["mean_phi"] - traj.m0))
        out.append((f"{mode} mass", drift <= 1e-12, f"drift {drift:.2e}"))
        inc = np.max(np.diff(energy_ledger(traj)))
        out.append((f"{mode} ledger", inc <= 10 * cfg.newton_tol, f"max increment {inc:.2e}"))
    return out


def _convex_vi() -> list[Check]:
    rng = np.random.default_rng(2)
    out = []
    bad = [i for i in range(10) if not check_vi_equivalence(random_vi(rng)).agree]
    out.append(("vi equivalence", not bad, f"failing instances {bad}"))
    op = build_cosine_operator(64, np.pi)
    v = to_modal(rng.uniform(-0.99, 0.99, 64), op)
    rep = density_report(v, [1, 10, 100, 1000], [make_potential(k) for k in ("regular", "logarithmic", "double_obstacle")])
    out.append(("density norms", bool(np.all(rep.norms <= v.norm())), ""))
    out.append(("density convergence", bool(np.all(np.diff(rep.errors) < 0)), f"{rep.errors}"))
    worst = max(float(np.max(g)) for g in rep.beta_gaps.values())
    out.append(("density energy", worst <= 1e-8, f"max gap {worst:.2e}"))
    const = Field(np.r_[1.0, np.zeros(63)], op)
    out.append(("density constant", (density_sequence(const, 3) - const).norm() == 0.0, ""))
    return out


def _asymptotics() -> list[Check]:
    op = build_cosine_operator(16, np.pi)
    v = Field(np.r_[0.5, np.ones(7), np.zeros(8)], op)
    rep = operator_limit_check(v, [0.4, 0.2, 0.1, 0.05, 0.01])
    out = [("operator limit decreasing", rep.flags["strictly_decreasing"], "")]
    c = cd_constant(1.0, 1.0, 1.0)
    out.append(("gronwall constant", abs(c - np.exp(2) / np.sqrt(2)) <= 1e-12, f"{c:.6f}"))
    cfg, phi0 = _small_config(LIMIT)
    a = run(cfg, phi0)
    m = trajectory_metrics(a, a)
    out.append(("metrics vanish", m.l2q == 0 and m.linf_h == 0, ""))
    return out


def _cli_io() -> list[Check]:
    text = "tau = 1\ndt = 0.01\nt_final = 0.03\nphi0.kind = constant\nphi0.value = 0\n"
    sc = parse_config(text)
    traj = run(sc.config, sc.phi0, sc.forcing)
    out = []
    with tempfile.TemporaryDirectory() as d1, tempfile.TemporaryDirectory() as d2:
        p1 = persist_run(traj, RunManifest.from_config(sc.config), d1)
        p2 = persist_run(run(sc.config, sc.phi0, sc.forcing), RunManifest.from_config(sc.config), d2)
        b1, b2 = p1["trajectory"].read_bytes(), p2["trajectory"].read_bytes()
        out.append(("csv byte stable", b1 == b2, ""))
        out.append(("csv rows", len(b1.decode().splitlines()) == 5, ""))
    m = RunManifest.from_config(sc.config, 1.5)
    out.append(("manifest round trip", RunManifest.from_json(m.to_json()) == m, ""))
    return out


SUITES: dict[str, Callable[[], list[Check]]] = {
    "spectral": _spectral,
    "potentials": _potentials,
    "solver": _solver,
    "convex_vi": _convex_vi,
    "asymptotics": _asymptotics,
    "cli_io": _cli_io,
}


def run_suite(name: str) -> list[Check]:
    if name == "all":
        return [(f"{s}: {n}", ok, d) for s in SUITES for n, ok, d in SUITES[s]()]
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name]()
