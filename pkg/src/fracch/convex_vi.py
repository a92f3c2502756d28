"""Finite-dimensional checks of convex-analytic identities.

* brute-force comparison of the two variational-inequality formulations
  for ``a(u, .) + d gamma_1(u) + gamma_2(u) = g``;
* the inequality residual of computed trajectories against test fields;
* the Neumann resolvent smoothing ``v_n = (I - Delta/n)^{-1} v``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .potentials import PotentialSpec
from .solver import SolverConfig, Trajectory, _coeffs_in, _Discretization
from .spectral import COSINE, Field, SpectralError, SpectralOperator

Convex = Callable[[np.ndarray], np.ndarray]
"""Vectorised function: ``(..., n) -> (...)``."""


@dataclass
class FiniteVI:
    """``a(u, v) = u @ a @ v`` plus convex terms, searched on a lattice.

    The lattice is ``center + h * k`` with integer ``|k_i| <= half_width``.
    Testing only against lattice points makes the window act as a box
    constraint, so it should contain the solution in its interior.
    """

    a: np.ndarray
    gamma1: Convex
    gamma2: Convex
    grad_gamma2: Convex
    g: np.ndarray
    h: float
    center: np.ndarray | None = None
    half_width: int = 10
    tol: float = 1e-9

    def __post_init__(self):
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        self.g = np.atleast_1d(np.asarray(self.g, dtype=float))
        n = self.g.size
        if self.a.shape != (n, n):
            raise ValueError(f"bilinear form must be {n}x{n}, got {self.a.shape}")
        if not self.h > 0 or self.half_width < 1:
            raise ValueError("grid spacing must be positive and half_width >= 1")
        self.center = np.zeros(n) if self.center is None else np.asarray(self.center, dtype=float)

    @property
    def n(self) -> int:
        return self.g.size

    def grid(self) -> np.ndarray:
        k = np.arange(-self.half_width, self.half_width + 1) * self.h
        axes = np.meshgrid(*([k] * self.n), indexing="ij")
        return self.center + np.stack([ax.ravel() for ax in axes], axis=1)

    def spot_check_convexity(self, rng: np.random.Generator, samples: int = 200) -> bool:
        pts = self.grid()
        i, j = rng.integers(len(pts), size=(2, samples))
        t = rng.uniform(size=(samples, 1))
        mid = t * pts[i] + (1 - t) * pts[j]
        for fn in (self.gamma1, self.gamma2):
            lhs = fn(mid)
            rhs = t[:, 0] * fn(pts[i]) + (1 - t[:, 0]) * fn(pts[j])
            ok = ~np.isfinite(rhs) | (lhs <= rhs + 1e-10 * (1 + np.abs(rhs)))
            if not ok.all():
                return False
        return True


@dataclass
class VIReport:
    grid_size: int
    set_gradient: np.ndarray
    """Grid points satisfying the form with the gradient of ``gamma_2``."""
    set_potential: np.ndarray
    """Grid points satisfying the form with ``gamma_2`` itself."""
    distance: float
    """Chebyshev Hausdorff distance between the two sets."""
    agree: bool
    inconclusive: bool


def _min_over_grid(values_v: np.ndarray, v: np.ndarray, w: np.ndarray, chunk: int) -> np.ndarray:
    # min_v [values_v + w . v] for each row of w
    out = np.empty(len(w))
    for s in range(0, len(w), chunk):
        lin = w[s : s + chunk] @ v.T
        out[s : s + chunk] = np.min(values_v[None, :] + lin, axis=1)
    return out


def vi_violations(vi: FiniteVI, chunk: int = 512) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(grid, viol_gradient, viol_potential)``.

    Each violation is ``sup_v`` of left minus right over the grid; a point
    solves the inequality on the grid iff its violation is ``<= 0``.
    """
    u = vi.grid()
    g1 = vi.gamma1(u)
    g2 = vi.gamma2(u)
    au = u @ vi.a.T  # (a u)_i
    uau = np.einsum("ki,ki->k", u, au)
    atu = u @ vi.a  # a(u, v) = atu . v
    d2 = vi.grad_gamma2(u)
    gu = u @ vi.g
    finite = np.isfinite(g1)
    g1f = np.where(finite, g1, np.inf)
    with np.errstate(invalid="ignore"):
        base1 = uau + g1 + np.einsum("ki,ki->k", d2, u) - gu
        viol1 = base1 - _min_over_grid(g1f, u, atu + d2 - vi.g, chunk)
        base2 = uau + g1 + g2 - gu
        viol2 = base2 - _min_over_grid(g1f + g2, u, atu - vi.g, chunk)
    viol1 = np.where(finite, viol1, np.inf)
    viol2 = np.where(finite, viol2, np.inf)
    return u, viol1, viol2


def _hausdorff_cheb(x: np.ndarray, y: np.ndarray) -> float:
    if len(x) == 0 or len(y) == 0:
        return np.inf
    d = np.max(np.abs(x[:, None, :] - y[None, :, :]), axis=2)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def check_vi_equivalence(vi: FiniteVI) -> VIReport:
    u, v1, v2 = vi_violations(vi)
    s1 = u[v1 <= vi.tol]
    s2 = u[v2 <= vi.tol]
    inconclusive = len(s1) == 0 or len(s2) == 0
    dist = _hausdorff_cheb(s1, s2)
    return VIReport(
        grid_size=len(u),
        set_gradient=s1,
        set_potential=s2,
        distance=dist,
        agree=not inconclusive and dist <= vi.h * (1 + 1e-9),
        inconclusive=inconclusive,
    )


# -- randomized instances -------------------------------------------------------

def _l1(x):
    return np.sum(np.abs(x), axis=-1)


def _box(x):
    return np.where(np.all(np.abs(x) <= 1 + 1e-12, axis=-1), 0.0, np.inf)


def _zero(x):
    return np.zeros(x.shape[:-1])


def random_vi(rng: np.random.Generator, n: int | None = None, h: float = 1e-2) -> FiniteVI:
    """Random strongly monotone instance whose solution sits on the lattice.

    ``g`` is assembled from a chosen lattice point ``u*`` and an element of
    ``d gamma_1(u*)`` so that the exact solution is representable.
    """
    n = int(rng.integers(1, 4)) if n is None else n
    m = rng.normal(size=(n, n))
    skew = rng.normal(size=(n, n)) * 0.3
    a = m @ m.T / n + 0.5 * np.eye(n) + (skew - skew.T)
    kind1 = rng.choice(["l1", "box", "zero"])
    kind2 = rng.choice(["quad", "quartic", "zero"])
    half = 10 if n <= 2 else 7
    if kind1 == "box":
        # put u* on or near the face of the box so the constraint is active
        center = np.round(rng.uniform(-1, 1, n) / h) * h
        center = np.clip(center, -1 + 2 * h, 1 - 2 * h)
        face = rng.integers(n)
        center[face] = np.sign(rng.normal()) * (1 - 3 * h)
    else:
        center = np.round(rng.uniform(-0.5, 0.5, n) / h) * h
        if kind1 == "l1":
            center[rng.integers(n)] = 0.0
    offset = rng.integers(-half // 2, half // 2 + 1, size=n) * h
    ustar = center + offset
    if kind1 == "box":
        ustar = np.clip(ustar, -1.0, 1.0)
        face = np.argmax(np.abs(ustar))
        ustar[face] = np.sign(ustar[face])
    if kind2 == "quad":
        q = rng.normal(size=(n, n))
        q = q @ q.T / n
        gamma2 = lambda x, q=q: 0.5 * np.einsum("...i,ij,...j->...", x, q, x)
        grad2 = lambda x, q=q: x @ q
    elif kind2 == "quartic":
        gamma2 = lambda x: np.sum(x ** 4, axis=-1) / 4
        grad2 = lambda x: x ** 3
    else:
        gamma2, grad2 = _zero, np.zeros_like
    if kind1 == "l1":
        gamma1 = _l1
        xi = np.where(np.abs(ustar) > h / 2, np.sign(ustar), rng.uniform(-1, 1, n))
    elif kind1 == "box":
        gamma1 = _box
        xi = np.where(np.abs(ustar) >= 1, np.sign(ustar) * rng.uniform(0, 2, n), 0.0)
    else:
        gamma1 = _zero
        xi = np.zeros(n)
    g = ustar @ a + grad2(ustar[None, :])[0] + xi
    return FiniteVI(a, gamma1, gamma2, grad2, g, h, center=center, half_width=half)


# -- inequality residual of trajectories ---------------------------------------

def _beta_hat_gap(pot: PotentialSpec, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    bu = pot.beta_hat(u)
    bv = pot.beta_hat(v)
    with np.errstate(invalid="ignore"):
        d = bu - bv
    return np.where(u == v, 0.0, d)


def vi_residual(
    traj: Trajectory,
    potential: PotentialSpec | None = None,
    config: SolverConfig | None = None,
    test_fields: Sequence[Field | np.ndarray] = (),
) -> np.ndarray:
    """Left minus right of the evolution inequality, maximised over tests.

    For each step ``n >= 1`` and test ``v``::

        (tau dphi + K phi + pi(phi) - mu - f, phi - v) + int beta_hat(phi) - int beta_hat(v)

    with ``dphi`` the backward difference quotient. Exact solutions give
    values ``<= 0``.
    """
    cfg = config or traj.config
    pot = potential or cfg.potential
    if traj.mu is None:
        raise ValueError("trajectory has no chemical potential (auxiliary run)")
    op = cfg.op_a
    disc = _Discretization(cfg, traj.kind)
    tests = np.array([_coeffs_in(v, op) if isinstance(v, Field) else disc.to_modal(np.asarray(v, float)) for v in test_fields])
    if tests.size == 0:
        return np.zeros(len(traj) - 1)
    phi = traj.phi[1:]
    dphi = (phi - traj.phi[:-1]) / cfg.dt
    nod = phi @ disc.E.T
    lin = cfg.tau * dphi + phi @ disc.K.T + disc.to_modal(pot.pi(nod).T).T - traj.mu[1:] - traj.f[1:]
    tnod = tests @ disc.E.T
    out = np.empty(len(phi))
    for k in range(len(phi)):
        diff = phi[k][None, :] - tests
        lhs = diff @ lin[k]
        gap = disc.w * np.sum(_beta_hat_gap(pot, nod[k][None, :], tnod), axis=1)
        gap[np.all(diff == 0, axis=1)] = 0.0
        out[k] = np.max(lhs + gap)
    return out


# -- density construction -------------------------------------------------------

def density_sequence(v: Field, n: float, laplace_op: SpectralOperator | None = None) -> Field:
    """Solve ``v_n - Delta v_n / n = v`` with Neumann conditions, spectrally."""
    op = laplace_op or v.op
    if op.basis_kind != COSINE:
        raise SpectralError("density_sequence needs the cosine Neumann operator")
    if not n > 0:
        raise ValueError(f"n must be positive, got {n}")
    c = _coeffs_in(v, op)
    return Field(c / (1 + op.eigenvalues / n), op)


@dataclass
class DensityReport:
    ns: list
    norms: np.ndarray
    errors: np.ndarray
    beta_gaps: dict = field(default_factory=dict)
    """Per potential: ``int beta_hat(v_n) - int beta_hat(v)`` for each ``n``."""


def density_report(v: Field, ns: Sequence[float], potentials: Sequence[PotentialSpec] = ()) -> DensityReport:
    op = v.op
    base = v.nodal()
    seq = [density_sequence(v, n) for n in ns]
    gaps = {}
    for pot in potentials:
        ref = op.weight * np.sum(pot.beta_hat(base))
        gaps[pot.variant] = np.array([op.weight * np.sum(pot.beta_hat(s.nodal())) - ref for s in seq])
    return DensityReport(
        ns=list(ns),
        norms=np.array([s.norm() for s in seq]),
        errors=np.array([(s - v).norm() for s in seq]),
        beta_gaps=gaps,
    )
