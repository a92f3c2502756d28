"""Acceptance criteria, each at its stated tolerance and runtime budget.

Run under pytest, or directly with ``python tests/test_acceptance.py`` for the
one-line-per-criterion summary alone.
"""
import sys
import time

import numpy as np
import pytest

from fracch.asymptotics import (
    cd_constant,
    continuous_dependence_experiment,
    operator_limit_check,
    sweep_lambda,
    sweep_sigma,
)
from fracch.convex_vi import check_vi_equivalence, density_sequence, random_vi
from fracch.potentials import make_potential
from fracch.solver import SolverConfig, energy_ledger, run
from fracch.spectral import Field, build_cosine_operator, field_from_function, to_modal

VARIANTS = ("regular", "logarithmic", "double_obstacle")


def cos_field(op, mean, amp):
    return field_from_function(lambda x: mean + amp * np.cos(np.pi * x / op.domain_length), op)


def mean_conservation():
    op = build_cosine_operator(64, np.pi)
    phi0 = cos_field(op, 0.2, 0.3)
    drift = []
    for mode in ("viscous_fractional", "limit"):
        cfg = SolverConfig(op, op, make_potential("regular"), tau=1.0, lam=1e-2, dt=1e-3, t_final=1.0, mode=mode)
        traj = run(cfg, phi0)
        assert len(traj) == 1001
        drift.append(float(np.max(np.abs(traj.diagnostics["mean_phi"] - traj.m0))))
    return max(drift) <= 1e-12, f"max |mean - m0| = {max(drift):.2e}", 10.0


def operator_limit():
    op = build_cosine_operator(16, np.pi)
    c = np.zeros(16)
    c[:8] = np.random.default_rng(20).normal(size=8)
    sig = [0.4, 0.2, 0.1, 0.05, 0.01]
    rep = operator_limit_check(Field(c, op), sig)
    lam = (np.arange(16) * np.pi / op.domain_length) ** 2
    # both operators annihilate the constant mode
    expect = [np.where(lam > 0, np.abs(lam ** s - 1), 0.0) * np.abs(c) for s in sig]
    per_mode = max(np.max(np.abs(rep.per_mode[i] - expect[i])) for i in range(len(sig)))
    err = rep.column("operator_error")
    ok = bool(np.all(np.diff(err) < 0)) and per_mode <= 1e-13
    return ok, f"errors {np.array2string(err, precision=3)}; per-mode dev {per_mode:.1e}", 1.0


def sigma_sweep():
    op = build_cosine_operator(32, np.pi)
    cfg = SolverConfig(op, op, make_potential("regular"), tau=1.0, lam=1e-2, dt=1e-3, t_final=0.5)
    rep = sweep_sigma(cfg, cos_field(op, 0.2, 0.3), None, [0.4, 0.2, 0.1, 0.05])
    e, z = rep.column("l2q"), rep.column("zeta_l2q")
    ok = rep.complete and bool(np.all(np.diff(e) < 0) and np.all(np.diff(z) < 0)) and e[-1] <= e[0] / 4
    return ok, f"L2(Q) errors {np.array2string(e, precision=3)}, final/initial {e[-1] / e[0]:.3f}", 60.0


def lambda_sweep():
    op = build_cosine_operator(32, np.pi)
    lams = [1e-1, 1e-2, 1e-3]
    parts, ok = [], True
    for kind in VARIANTS:
        cfg = SolverConfig(op, op, make_potential(kind), tau=1.0, lam=lams[0], dt=1e-3, t_final=0.5)
        phi0 = cos_field(op, 0.3, 0.6) if kind == "double_obstacle" else cos_field(op, 0.2, 0.3)
        rep = sweep_lambda(cfg, phi0, None, lams)
        if kind == "double_obstacle":
            v = rep.column("violation")
            ok &= bool(np.all(np.diff(v) < 0)) and v[-1] <= 1e-2
            parts.append(f"obstacle violation {np.array2string(v, precision=2)}")
        else:
            d = rep.column("cauchy_l2q")[1:]
            ok &= bool(np.all(np.diff(d) < 0))
            parts.append(f"{kind} diffs {np.array2string(d, precision=2)}")
    return ok, "; ".join(parts), 60.0


def continuous_dependence():
    op = build_cosine_operator(32, np.pi)
    rng = np.random.default_rng(5)
    phi0 = cos_field(op, 0.1, 0.4)
    worst, ok = 0.0, True
    for _ in range(10):
        tau = float(rng.choice([0.5, 1.0, 2.0]))
        cfg = SolverConfig(op, op, make_potential("regular"), tau=tau, lam=1e-2, dt=1e-2, t_final=1.0, mode="limit")
        amp = rng.normal(size=(2, 3, 32)) / (1 + np.arange(32))
        freq = rng.uniform(0, 2 * np.pi, (2, 3))
        f1 = lambda t, a=amp[0], w=freq[0]: Field(np.cos(w * t) @ a, op)
        f2 = lambda t, a=amp[1], w=freq[1]: Field(np.cos(w * t) @ a, op)
        rec = continuous_dependence_experiment(cfg, phi0, f1, f2)
        assert rec.bound == pytest.approx(cd_constant(tau, 1.0, 1.0))
        ok &= rec.ratio <= 1.05 * rec.bound
        worst = max(worst, rec.ratio / rec.bound)
    return ok, f"max ratio / C_cd = {worst:.3f}", 60.0


def yosida_suite():
    rng = np.random.default_rng(6)
    parts, ok = [], True
    for kind in VARIANTS:
        pot = make_potential(kind)
        s, t = rng.uniform(-3, 3, (2, 10_000))
        lam = 10 ** rng.uniform(-2, 0, 10_000)
        ys, yt = pot.yosida(lam, s), pot.yosida(lam, t)
        checks = [
            np.min((ys - yt) * (s - t)) >= -1e-12,
            np.max(np.abs(ys - yt) - np.abs(s - t) / lam) <= 1e-9,
            np.all(pot.yosida(lam, np.zeros_like(s)) == 0),
            np.max(pot.moreau(lam, s) - pot.beta_hat(s)) <= 1e-12,
        ]
        fd_err = 0.0
        if kind != "double_obstacle":
            h = 1e-5
            fd_err = float(np.max(np.abs((pot.moreau(lam, s + h) - pot.moreau(lam, s - h)) / (2 * h) - ys)))
            checks.append(fd_err <= 1e-6)
        ok &= all(bool(c) for c in checks)
        parts.append(f"{kind} fd {fd_err:.1e}")
    return ok, "; ".join(parts), 5.0


def vi_equivalence():
    rng = np.random.default_rng(7)
    bad, dims = [], []
    for i in range(50):
        vi = random_vi(rng, h=1e-2)
        dims.append(vi.n)
        if not check_vi_equivalence(vi).agree:
            bad.append(i)
    return not bad, f"50 instances (n=1/2/3: {dims.count(1)}/{dims.count(2)}/{dims.count(3)}), failures {bad}", 30.0


def density():
    op = build_cosine_operator(64, np.pi)
    rng = np.random.default_rng(8)
    pots = [make_potential(k) for k in VARIANTS]
    ns = [1, 10, 100, 1000]
    ok, worst = True, -np.inf
    for _ in range(20):
        v = to_modal(rng.uniform(-0.999, 0.999, 64), op)
        seq = [density_sequence(v, n) for n in ns]
        ok &= all(s.norm() <= v.norm() for s in seq)
        errs = [(s - v).norm() for s in seq]
        ok &= all(a > b for a, b in zip(errs, errs[1:]))
        for p in pots:
            ref = op.weight * np.sum(p.beta_hat(v.nodal()))
            for s in seq:
                gap = op.weight * np.sum(p.beta_hat(s.nodal())) - ref
                worst = max(worst, gap)
                ok &= gap <= 1e-8
    return ok, f"max int beta_hat(v_n) - int beta_hat(v) = {worst:.2e}", 5.0


def energy_ledger_check():
    op = build_cosine_operator(32, np.pi)
    pot = make_potential("regular")
    tau = 1.0
    dt = 0.01
    assert dt <= tau / (2 * pot.L_pi)
    worst = -np.inf
    for mode in ("viscous_fractional", "limit"):
        cfg = SolverConfig(op, op, pot, tau=tau, lam=1e-2, dt=dt, t_final=5.0, mode=mode)
        traj = run(cfg, cos_field(op, 0.0, 0.8))
        assert cfg.n_steps == 500
        worst = max(worst, float(np.max(np.diff(energy_ledger(traj)))))
    return worst <= 10 * 1e-10, f"max ledger increment {worst:.2e}", 10.0


def xi_inclusion():
    op = build_cosine_operator(32, np.pi)
    parts, ok = [], True
    for kind, phi0 in (("double_obstacle", cos_field(op, 0.3, 0.6)), ("regular", cos_field(op, 0.2, 0.3))):
        cfg = SolverConfig(op, op, make_potential(kind), tau=1.0, lam=1e-1, dt=1e-3, t_final=0.5, mode="limit")
        res = sweep_lambda(cfg, phi0, None, [1e-1, 1e-2, 1e-3]).column("xi_residual")
        ok &= bool(np.all(np.diff(res) < 0))
        parts.append(f"{kind} {np.array2string(res, precision=2)}")
    return ok, "; ".join(parts), 30.0


CRITERIA = [
    (1, "mean conservation", mean_conservation),
    (2, "operator limit", operator_limit),
    (3, "sigma sweep", sigma_sweep),
    (4, "lambda sweep", lambda_sweep),
    (5, "continuous dependence", continuous_dependence),
    (6, "Yosida/Moreau properties", yosida_suite),
    (7, "VI equivalence", vi_equivalence),
    (8, "density construction", density),
    (9, "energy ledger", energy_ledger_check),
    (10, "xi inclusion", xi_inclusion),
]


def evaluate(fn):
    t0 = time.perf_counter()
    ok, detail, budget = fn()
    elapsed = time.perf_counter() - t0
    in_time = elapsed <= budget
    return bool(ok) and in_time, f"{detail} [{elapsed:.2f}s / {budget:.0f}s]"


@pytest.mark.parametrize("num,name,fn", CRITERIA, ids=[f"criterion_{n:02d}" for n, _, _ in CRITERIA])
def test_criterion(num, name, fn, capsys):
    ok, detail = evaluate(fn)
    with capsys.disabled():
        print(f"\ncriterion {num:2d} {name}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for num, name, fn in CRITERIA:
        ok, detail = evaluate(fn)
        failed += not ok
        print(f"criterion {num:2d} {name}: {'PASS' if ok else 'FAIL'}  {detail}")
    sys.exit(1 if failed else 0)
