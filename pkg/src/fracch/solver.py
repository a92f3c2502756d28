"""Backward-Euler integration of the Yosida-regularized system.

Per step, in the eigenbasis of ``A``::

    (phi - phi_old)/dt + A^{2r} mu = 0
    tau (phi - phi_old)/dt + K phi + beta_lam(phi) + pi(phi) = mu + f

with ``K = B^{2 sigma}`` (viscous mode) or ``K = I - P`` (limit mode, ``P``
the projection onto ``ker B``). The first equation is diagonal, so ``mu`` is
eliminated mode by mode; on the kernel mode of ``A`` the coefficient of
``phi`` is frozen (mass conservation) and ``mu_1`` absorbs the remaining
component of the second equation. Newton then runs on ``phi`` alone.
Nonlinear terms are evaluated at the grid nodes and projected back.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .potentials import PotentialSpec, natural_residual
from .spectral import (
    Field,
    SpectralOperator,
    change_of_basis,
    kernel_mask,
    operator_matrix,
)

log = logging.getLogger(__name__)

VISCOUS = "viscous_fractional"
LIMIT = "limit"
AUX = "aux"

DIAGNOSTIC_KEYS = (
    "mean_phi",
    "energy",
    "norm_phi_H",
    "norm_mu_H",
    "norm_Ar_mu",
    "dtphi_H",
    "K_phi_norm",
    "newton_iters",
    "vi_residual",
)


class ConfigError(ValueError):
    """Invalid configuration; ``assumption`` names the violated structural condition."""

    def __init__(self, message: str, assumption: str | None = None):
        if assumption:
            message = f"[{assumption}] {message}"
        super().__init__(message)
        self.assumption = assumption


class StepFailure(RuntimeError):
    def __init__(self, message: str, residual: float, trajectory=None):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual
        self.trajectory = trajectory


@dataclass(frozen=True)
class SolverConfig:
    op_a: SpectralOperator
    op_b: SpectralOperator
    potential: PotentialSpec
    tau: float
    lam: float
    dt: float
    t_final: float
    r: float = 0.5
    sigma: float = 0.25
    sigma0: float = 0.5
    mode: str = VISCOUS
    newton_tol: float = 1e-10
    newton_max_iter: int = 50

    def __post_init__(self):
        if self.mode not in (VISCOUS, LIMIT):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not self.r > 0:
            raise ConfigError(f"r must be positive, got {self.r}", "sigma-range")
        if not self.sigma0 > 0:
            raise ConfigError(f"sigma0 must be positive, got {self.sigma0}", "sigma-range")
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}", "sigma-range")
        if self.mode == VISCOUS and not 0 < self.sigma < self.sigma0:
            raise ConfigError(
                f"sigma must lie in (0, sigma0) = (0, {self.sigma0}), got {self.sigma}", "sigma-range"
            )
        if not self.lam > 0:
            raise ConfigError(f"Yosida parameter lambda must be positive, got {self.lam}")
        if not self.dt > 0 or not self.t_final > 0:
            raise ConfigError("dt and t_final must be positive")
        if self.dt > self.t_final * (1 + 1e-12):
            raise ConfigError(f"dt = {self.dt} exceeds t_final = {self.t_final}")
        if self.newton_max_iter < 1 or not self.newton_tol > 0:
            raise ConfigError("newton_tol must be positive and newton_max_iter >= 1")
        a = self.op_a
        if a.eigenvalues[0] == 0.0:
            if a.kernel_dim != 1 or not a.has_constant_mode:
                raise ConfigError(
                    "when lambda_1(A) = 0 the kernel of A must be spanned by the constants",
                    "operator-kernel",
                )
        change_of_basis(self.op_b, self.op_a)

    @property
    def n_steps(self) -> int:
        n = self.t_final / self.dt
        steps = int(round(n))
        if abs(n - steps) > 1e-9 * max(1.0, n):
            raise ConfigError(f"t_final / dt = {n} is not an integer")
        return steps

    def replace(self, **changes) -> SolverConfig:
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class EvolutionState:
    time: float
    phi: Field
    mu: Field
    f: Field


@dataclass
class Trajectory:
    """Time series of coefficient arrays in the eigenbasis of ``A``.

    ``zeta`` holds ``B^sigma phi`` (viscous) or ``phi - P phi`` (limit).
    For auxiliary runs ``mu`` is ``None``, ``f`` stores the datum ``g`` and
    ``xi`` the nodal values of ``beta_lam(phi)``.
    """

    config: SolverConfig
    kind: str
    times: np.ndarray
    phi: np.ndarray
    mu: np.ndarray | None
    f: np.ndarray
    zeta: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    xi: np.ndarray | None = None
    m0: float = float("nan")

    @property
    def op(self) -> SpectralOperator:
        return self.config.op_a

    def __len__(self) -> int:
        return self.times.size

    @property
    def states(self) -> list[EvolutionState]:
        op = self.op
        mu = self.mu if self.mu is not None else np.zeros_like(self.phi)
        return [
            EvolutionState(float(t), Field(p, op), Field(m, op), Field(g, op))
            for t, p, m, g in zip(self.times, self.phi, mu, self.f)
        ]

    def state(self, i: int) -> EvolutionState:
        op = self.op
        mu = self.mu[i] if self.mu is not None else np.zeros(op.n_modes)
        return EvolutionState(float(self.times[i]), Field(self.phi[i], op), Field(mu, op), Field(self.f[i], op))

    def nodal_phi(self) -> np.ndarray:
        return self.phi @ _Discretization.basis(self.op).T

    def truncated(self, n: int) -> Trajectory:
        cut = {k: v[:n] for k, v in self.diagnostics.items()}
        return dataclasses.replace(
            self,
            times=self.times[:n],
            phi=self.phi[:n],
            mu=None if self.mu is None else self.mu[:n],
            f=self.f[:n],
            zeta=self.zeta[:n],
            xi=None if self.xi is None else self.xi[:n],
            diagnostics=cut,
        )


Forcing = Callable[[float], np.ndarray]


class _Discretization:
    """Matrices of the linear operators in the ``A`` eigenbasis."""

    _basis_cache: dict = {}

    @staticmethod
    def basis(op: SpectralOperator) -> np.ndarray:
        key = id(op)
        hit = _Discretization._basis_cache.get(key)
        if hit is None or hit[0] is not op:
            hit = (op, op.basis_matrix())
            _Discretization._basis_cache[key] = hit
        return hit[1]

    def __init__(self, cfg: SolverConfig, mode: str):
        a, b = cfg.op_a, cfg.op_b
        self.cfg = cfg
        self.mode = mode
        self.n = a.n_modes
        self.w = a.weight
        self.E = self.basis(a)
        self.a2r = a.powers(2 * cfg.r)
        self.ar = a.powers(cfg.r)
        self.free = a.eigenvalues > 0
        self.P = operator_matrix(b, kernel_mask(b).astype(float), a)
        if mode == VISCOUS:
            self.K = operator_matrix(b, b.powers(2 * cfg.sigma), a)
            self.Z = operator_matrix(b, b.powers(cfg.sigma), a)
        else:
            self.K = np.eye(self.n) - self.P
            self.Z = self.K
        self.inv_dt_a2r = np.zeros(self.n)
        self.inv_dt_a2r[self.free] = 1.0 / (cfg.dt * self.a2r[self.free])

    def to_nodal(self, c):
        return self.E @ c

    def to_modal(self, v):
        return self.w * (self.E.T @ v)

    def nonlinear(self, c, pi_shift=0.0):
        pot, lam = self.cfg.potential, self.cfg.lam
        v = self.to_nodal(c)
        nod = pot.yosida(lam, v) + pot.pi(v) - pi_shift
        dnod = pot.yosida_prime(lam, v) + pot.pi_prime(v)
        return self.to_modal(nod), dnod, v

    def jac_nonlinear(self, dnod):
        return self.w * (self.E.T * dnod) @ self.E


def _newton(residual, jacobian, y0, free, tol, max_iter):
    """Damped Newton on the ``free`` components; returns ``(y, aux, iters, res)``."""
    y = y0.copy()
    R, aux = residual(y)
    res = np.linalg.norm(R)
    iters = 0
    while res > tol:
        if iters >= max_iter:
            raise StepFailure(f"Newton did not converge in {max_iter} iterations", res)
        J = jacobian(y, aux)
        d = np.zeros_like(y)
        d[free] = np.linalg.solve(J[np.ix_(free, free)], -R[free])
        t = 1.0
        while True:
            yt = y + t * d
            Rt, auxt = residual(yt)
            rt = np.linalg.norm(Rt)
            if rt <= (1 - 1e-4 * t) * res or t < 1e-10:
                break
            t *= 0.5
        y, R, aux, res = yt, Rt, auxt, rt
        iters += 1
    return y, aux, iters, res


class Stepper:
    """Builds the discrete operators once and advances states."""

    def __init__(self, config: SolverConfig):
        self.cfg = config
        self.disc = _Discretization(config, config.mode)

    def initial_mu(self, phi0: np.ndarray, f0: np.ndarray) -> np.ndarray:
        # second equation at t = 0 with dphi/dt = -A^{2r} mu
        d = self.disc
        nl, _, _ = d.nonlinear(phi0)
        g = d.K @ phi0 + nl - f0
        return g / (1 + self.cfg.tau * d.a2r)

    def step(self, phi_old: np.ndarray, f_next: np.ndarray):
        """Return ``(phi, mu, newton_iters, residual)``."""
        cfg, d = self.cfg, self.disc
        c_tau = cfg.tau / cfg.dt
        free = d.free

        def residual(y):
            nl, dnod, _ = d.nonlinear(y)
            dy = y - phi_old
            G = c_tau * dy + d.K @ y + nl - f_next
            mu = np.where(free, -dy * d.inv_dt_a2r, G)
            return G - mu, (mu, dnod)

        def jacobian(y, aux):
            J = d.jac_nonlinear(aux[1]) + d.K
            J[np.diag_indices_from(J)] += c_tau + d.inv_dt_a2r
            return J

        y, (mu, _), iters, res = _newton(residual, jacobian, phi_old, free, cfg.newton_tol, cfg.newton_max_iter)
        if not free.all():
            # exact mass conservation: the kernel coefficient never moves
            y[~free] = phi_old[~free]
        return y, mu, iters, res


def _as_forcing(forcing, op: SpectralOperator) -> Forcing:
    if forcing is None:
        zero = np.zeros(op.n_modes)
        return lambda t: zero
    if isinstance(forcing, Field):
        c = _coeffs_in(forcing, op)
        return lambda t: c
    if callable(forcing):
        def f(t):
            val = forcing(t)
            if isinstance(val, Field):
                return _coeffs_in(val, op)
            return _nodal_to_coeffs(np.asarray(val, dtype=float), op)
        return f
    c = _nodal_to_coeffs(np.asarray(forcing, dtype=float), op)
    return lambda t: c


def _coeffs_in(f: Field, op: SpectralOperator) -> np.ndarray:
    if f.op is op:
        return f.coeffs
    return change_of_basis(f.op, op) @ f.coeffs


def _nodal_to_coeffs(v: np.ndarray, op: SpectralOperator) -> np.ndarray:
    if v.shape != (op.n_nodes,):
        raise ValueError(f"forcing must have {op.n_nodes} nodal values, got shape {v.shape}")
    return op.weight * (_Discretization.basis(op).T @ v)


def mean_of(coeffs: np.ndarray, op: SpectralOperator) -> float:
    if op.has_constant_mode:
        return float(coeffs[0] * _Discretization.basis(op)[0, 0])
    return float(np.mean(_Discretization.basis(op) @ coeffs))


def _energy(disc: _Discretization, c: np.ndarray) -> float:
    pot, lam = disc.cfg.potential, disc.cfg.lam
    v = disc.to_nodal(c)
    quad = 0.5 * float(c @ (disc.K @ c))
    return quad + disc.w * float(np.sum(pot.moreau(lam, v) + pot.pi_hat(v)))


def compute_energy(state: EvolutionState, config: SolverConfig, mode: str | None = None) -> float:
    """``1/2 (K phi, phi) + int (Moreau_lam(phi) + pi_hat(phi))``."""
    disc = _Discretization(config, mode or config.mode)
    return _energy(disc, _coeffs_in(state.phi, config.op_a))


def check_initial_data(config: SolverConfig, phi0: np.ndarray) -> float:
    """Validate finiteness of the convex energy and the mean condition; return ``m0``."""
    pot, op = config.potential, config.op_a
    nod = _Discretization.basis(op) @ phi0
    m0 = mean_of(phi0, op)
    if op.eigenvalues[0] == 0.0:
        lo, hi = pot.domain
        if not lo < m0 < hi:
            raise ConfigError(
                f"initial mean m0 = {m0} must belong to the interior of D(beta) = [{lo}, {hi}]",
                "interior-mean",
            )
    if not np.all(np.isfinite(pot.beta_hat(nod))):
        raise ConfigError("beta_hat(phi0) is not integrable: phi0 leaves D(beta_hat)", "finite-energy")
    return m0


def _diag_row(disc: _Discretization, c, mu, dphi, iters) -> dict:
    cfg = disc.cfg
    pot = cfg.potential
    v = disc.to_nodal(c)
    xi = pot.yosida(cfg.lam, v)
    nat = natural_residual(pot, v, xi)
    return {
        "mean_phi": mean_of(c, cfg.op_a),
        "energy": _energy(disc, c),
        "norm_phi_H": float(np.linalg.norm(c)),
        "norm_mu_H": float(np.linalg.norm(mu)),
        "norm_Ar_mu": float(np.linalg.norm(disc.ar * mu)),
        "dtphi_H": float(np.linalg.norm(dphi)),
        "K_phi_norm": float(np.linalg.norm(disc.Z @ c)),
        "newton_iters": int(iters),
        "vi_residual": float(np.sqrt(disc.w * np.sum(nat ** 2))),
    }


def run(config: SolverConfig, phi0, forcing=None, check=True) -> Trajectory:
    """Integrate from ``phi0`` over ``[0, t_final]``.

    ``phi0`` is a :class:`Field` or nodal array; ``forcing`` is ``None``,
    a constant :class:`Field`/nodal array, or a callable ``t -> Field``.
    On a step failure the partial trajectory is attached to the raised
    :class:`StepFailure`.
    """
    op = config.op_a
    c0 = _coeffs_in(phi0, op) if isinstance(phi0, Field) else _nodal_to_coeffs(np.asarray(phi0, float), op)
    m0 = check_initial_data(config, c0) if check else mean_of(c0, op)
    fsrc = _as_forcing(forcing, op)
    stepper = Stepper(config)
    disc = stepper.disc
    n = config.n_steps
    times = np.arange(n + 1) * config.dt
    phi = np.empty((n + 1, op.n_modes))
    mu = np.empty_like(phi)
    fs = np.empty_like(phi)
    diags = {k: np.zeros(n + 1) for k in DIAGNOSTIC_KEYS}
    diags["newton_residual"] = np.zeros(n + 1)

    phi[0] = c0
    fs[0] = fsrc(0.0)
    mu[0] = stepper.initial_mu(c0, fs[0])
    row = _diag_row(disc, c0, mu[0], np.zeros_like(c0), 0)
    for k, val in row.items():
        diags[k][0] = val

    def build(upto):
        traj = Trajectory(
            config=config, kind=config.mode, times=times[:upto], phi=phi[:upto], mu=mu[:upto],
            f=fs[:upto], zeta=phi[:upto] @ disc.Z.T, diagnostics={k: v[:upto] for k, v in diags.items()},
            m0=m0,
        )
        return traj

    for i in range(1, n + 1):
        fs[i] = fsrc(times[i])
        try:
            phi[i], mu[i], iters, res = stepper.step(phi[i - 1], fs[i])
        except StepFailure as exc:
            exc.trajectory = build(i)
            log.warning("step %d failed at t=%.6g: %s", i, times[i], exc)
            raise
        row = _diag_row(disc, phi[i], mu[i], (phi[i] - phi[i - 1]) / config.dt, iters)
        for k, val in row.items():
            diags[k][i] = val
        diags["newton_residual"][i] = res
    return build(n + 1)


def step(state: EvolutionState, config: SolverConfig, f_next) -> EvolutionState:
    """One implicit step from ``state`` to ``state.time + dt``."""
    op = config.op_a
    stepper = Stepper(config)
    c = _coeffs_in(state.phi, op)
    fn = _as_forcing(f_next, op)(state.time + config.dt)
    phi, mu, _, _ = stepper.step(c, fn)
    return EvolutionState(state.time + config.dt, Field(phi, op), Field(mu, op), Field(fn, op))


def energy_ledger(traj: Trajectory, concavity_correction: bool = False) -> np.ndarray:
    """Energy plus accumulated dissipation.

    ``E_n + sum_k dt (|A^r mu_k|^2 + c |dphi_k/dt|^2)`` with ``c = tau``, or
    ``c = tau - L_pi dt / 2`` when ``concavity_correction`` is set. For
    ``f = 0`` the corrected ledger is provably nonincreasing up to the Newton
    residual; the extra term bounds the concavity defect of ``pi_hat`` over
    one step.
    """
    cfg = traj.config
    d = traj.diagnostics
    coef = cfg.tau - (cfg.potential.L_pi * cfg.dt / 2 if concavity_correction else 0.0)
    diss = cfg.dt * (d["norm_Ar_mu"] ** 2 + coef * d["dtphi_H"] ** 2)
    diss[0] = 0.0
    return d["energy"] + np.cumsum(diss)


# -- auxiliary nonlocal problem ------------------------------------------------

def solve_aux(g, phibar0, config: SolverConfig, check=True) -> Trajectory:
    """Integrate ``tau u' + u - P u + beta_lam(u) + pi(u) - pi(0) = g``.

    Same backward-Euler/Newton scheme as :func:`run`, without the ``mu``
    equation. ``trajectory.xi`` holds the nodal values of ``beta_lam(u)``.
    """
    op = config.op_a
    c0 = _coeffs_in(phibar0, op) if isinstance(phibar0, Field) else _nodal_to_coeffs(np.asarray(phibar0, float), op)
    if check and not np.all(np.isfinite(config.potential.beta_hat(_Discretization.basis(op) @ c0))):
        raise ConfigError("beta_hat(phibar0) is not integrable", "finite-energy")
    gsrc = _as_forcing(g, op)
    disc = _Discretization(config, LIMIT)
    pot = config.potential
    pi0 = float(pot.pi(0.0))
    c_tau = config.tau / config.dt
    n = config.n_steps
    times = np.arange(n + 1) * config.dt
    phi = np.empty((n + 1, op.n_modes))
    gs = np.empty_like(phi)
    xi = np.empty((n + 1, op.n_nodes))
    iters_log = np.zeros(n + 1)
    phi[0] = c0
    gs[0] = gsrc(0.0)
    xi[0] = pot.yosida(config.lam, disc.to_nodal(c0))
    free = np.ones(op.n_modes, dtype=bool)
    for i in range(1, n + 1):
        gs[i] = gsrc(times[i])
        old, gi = phi[i - 1], gs[i]

        def residual(y):
            nl, dnod, _ = disc.nonlinear(y, pi_shift=pi0)
            return c_tau * (y - old) + disc.K @ y + nl - gi, dnod

        def jacobian(y, dnod):
            J = disc.jac_nonlinear(dnod) + disc.K
            J[np.diag_indices_from(J)] += c_tau
            return J

        phi[i], _, it, _ = _newton(residual, jacobian, old, free, config.newton_tol, config.newton_max_iter)
        xi[i] = pot.yosida(config.lam, disc.to_nodal(phi[i]))
        iters_log[i] = it
    return Trajectory(
        config=config, kind=AUX, times=times, phi=phi, mu=None, f=gs, zeta=phi @ disc.K.T,
        diagnostics={"newton_iters": iters_log}, xi=xi, m0=mean_of(c0, op),
    )


# -- multiplier extraction -----------------------------------------------------

@dataclass
class XiReport:
    times: np.ndarray
    xi: np.ndarray
    """Nodal values of the extracted multiplier, one row per step ``1..n``."""
    residual: np.ndarray
    """L^2(Omega) norm of the natural residual ``|phi - J_1(phi + xi)|`` per step."""
    residual_L2Q: float
    xi_L2Q: float
    yosida_gap: float
    """Max L^2(Omega) distance between ``xi`` and ``beta_lam(phi)``."""


def extract_xi(traj: Trajectory, forcing=None, config: SolverConfig | None = None) -> XiReport:
    """Recover ``xi = mu - tau dphi/dt - phi + P phi - pi(phi) + f`` from a limit run."""
    if traj.kind != LIMIT:
        raise ValueError(f"extract_xi needs a limit-mode trajectory, got {traj.kind!r}")
    cfg = config or traj.config
    op = cfg.op_a
    disc = _Discretization(cfg, LIMIT)
    pot = cfg.potential
    times = traj.times[1:]
    if forcing is None:
        fc = traj.f[1:]
    else:
        fsrc = _as_forcing(forcing, op)
        fc = np.array([fsrc(t) for t in times])
    phi, phi_prev, mu = traj.phi[1:], traj.phi[:-1], traj.mu[1:]
    lin = mu - cfg.tau * (phi - phi_prev) / cfg.dt - phi @ disc.K.T + fc
    v = phi @ disc.E.T
    xi = lin @ disc.E.T - pot.pi(v)
    nat = natural_residual(pot, v, xi)
    res = np.sqrt(disc.w * np.sum(nat ** 2, axis=1))
    gap = np.sqrt(disc.w * np.sum((xi - pot.yosida(cfg.lam, v)) ** 2, axis=1))
    return XiReport(
        times=times,
        xi=xi,
        residual=res,
        residual_L2Q=float(np.sqrt(cfg.dt * np.sum(res ** 2))),
        xi_L2Q=float(np.sqrt(cfg.dt * disc.w * np.sum(xi ** 2))),
        yosida_gap=float(gap.max()) if gap.size else 0.0,
    )
