"""Double-well potentials split as ``F = beta_hat + pi_hat``.

``beta_hat`` is convex, proper, l.s.c. with ``beta_hat(0) = 0`` and
``pi_hat`` has a Lipschitz derivative ``pi``. The convex part is accessed
through its resolvent ``J_lam = (I + lam * beta)^{-1}`` (the proximal map),
from which the Yosida approximation ``beta_lam = (I - J_lam) / lam`` and the
Moreau envelope follow.

All scalar routines are vectorized over numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import xlogy

REGULAR = "regular"
LOGARITHMIC = "logarithmic"
DOUBLE_OBSTACLE = "double_obstacle"
CUSTOM = "custom"

PROX_TOL = 1e-12
_LOG2 = np.log(2.0)


class PotentialError(ValueError):
    pass


class ProxConvergenceError(RuntimeError):
    def __init__(self, residual: float):
        super().__init__(f"resolvent solve did not converge (residual {residual:.3e})")
        self.residual = residual


def _arr(s):
    return np.asarray(s, dtype=float)


def _scalar_out(x, like):
    return float(x) if np.ndim(like) == 0 else x


@dataclass(frozen=True)
class PotentialSpec:
    """Split potential with vectorized access to its pieces.

    Subclasses implement the resolvent for the canonical variants; the
    ``custom`` variant takes callables (see :func:`make_potential`).
    """

    variant: str
    L_pi: float
    domain: tuple[float, float] = (-np.inf, np.inf)
    params: dict = field(default_factory=dict)

    # -- convex part
    def beta_hat(self, s):
        raise NotImplementedError

    def beta_min(self, s):
        """Minimal section ``beta°``; ``nan`` outside ``D(beta)``."""
        raise NotImplementedError

    def _prox(self, lam, s):
        raise NotImplementedError

    def _yosida(self, lam, s):
        return (s - self._prox(lam, s)) / lam

    def _yosida_prime(self, lam, s):
        h = 1e-6 * np.maximum(1.0, np.abs(s))
        return (self._yosida(lam, s + h) - self._yosida(lam, s - h)) / (2 * h)

    def _moreau(self, lam, s):
        p = self._prox(lam, s)
        return self.beta_hat(p) + (s - p) ** 2 / (2 * lam)

    # -- smooth part
    def pi_hat(self, s):
        raise NotImplementedError

    def pi(self, s):
        raise NotImplementedError

    def pi_prime(self, s):
        raise NotImplementedError

    # -- derived
    def F(self, s):
        return self.beta_hat(s) + self.pi_hat(s)

    def in_domain(self, s):
        s = _arr(s)
        lo, hi = self.domain
        return (s >= lo) & (s <= hi)

    def prox(self, lam, s):
        return _scalar_out(self._prox(_check_lam(lam), _arr(s)), s)

    def yosida(self, lam, s):
        return _scalar_out(self._yosida(_check_lam(lam), _arr(s)), s)

    def yosida_prime(self, lam, s):
        return _scalar_out(self._yosida_prime(_check_lam(lam), _arr(s)), s)

    def moreau(self, lam, s):
        return _scalar_out(self._moreau(_check_lam(lam), _arr(s)), s)


def _check_lam(lam):
    lam = _arr(lam)
    if not np.all(lam > 0):
        raise PotentialError(f"Yosida parameter must be positive, got {lam}")
    return lam


class RegularPotential(PotentialSpec):
    """``F(s) = (s^2 - 1)^2 / 4`` with ``beta_hat = s^4/4``, ``pi_hat = 1/4 - s^2/2``."""

    def beta_hat(self, s):
        return _arr(s) ** 4 / 4

    def beta_min(self, s):
        return _arr(s) ** 3

    def _prox(self, lam, s):
        # real root of lam p^3 + p - s = 0 (Cardano on |s|), then Newton polish
        a = np.abs(s)
        d = np.sqrt(a * a / (4 * lam * lam) + 1.0 / (27 * lam ** 3))
        u = np.cbrt(a / (2 * lam) + d)
        p = u - 1.0 / (3 * lam * u)
        for _ in range(3):
            p = p - (lam * p ** 3 + p - a) / (3 * lam * p * p + 1)
        return np.sign(s) * p

    def _yosida(self, lam, s):
        return self._prox(lam, s) ** 3

    def _yosida_prime(self, lam, s):
        p2 = self._prox(lam, s) ** 2
        return 3 * p2 / (1 + 3 * lam * p2)

    def _moreau(self, lam, s):
        p = self._prox(lam, s)
        return p ** 4 / 4 + lam * p ** 6 / 2

    def pi_hat(self, s):
        return 0.25 - _arr(s) ** 2 / 2

    def pi(self, s):
        return -_arr(s)

    def pi_prime(self, s):
        return -np.ones_like(_arr(s))


def _log_cosh(q):
    aq = np.abs(q)
    return aq + np.log1p(np.exp(-2 * aq)) - _LOG2


class LogarithmicPotential(PotentialSpec):
    """``beta_hat(s) = (1+s)ln(1+s) + (1-s)ln(1-s)`` on ``[-1, 1]``, ``pi_hat = -c1 s^2``.

    The resolvent is solved in the variable ``q = artanh(p)``, i.e.
    ``tanh(q) + 2 lam q = s``, which stays regular as ``p -> +-1``.
    """

    @property
    def c1(self) -> float:
        return self.params["c1"]

    def beta_hat(self, s):
        s = _arr(s)
        inside = np.abs(s) <= 1
        sc = np.clip(s, -1, 1)
        val = xlogy(1 + sc, 1 + sc) + xlogy(1 - sc, 1 - sc)
        return np.where(inside, val, np.inf)

    def beta_min(self, s):
        s = _arr(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(np.abs(s) < 1, 2 * np.arctanh(s), np.nan)

    def _solve_q(self, lam, s):
        lo = (s - 1) / (2 * lam)
        hi = (s + 1) / (2 * lam)
        q = np.clip(np.arctanh(np.clip(s, -0.999999, 0.999999)) / (1 + 2 * lam), lo, hi)
        for _ in range(200):
            g = np.tanh(q) + 2 * lam * q - s
            done = np.abs(g) <= PROX_TOL
            if np.all(done):
                return q
            lo = np.where(g < 0, q, lo)
            hi = np.where(g > 0, q, hi)
            dg = 1.0 / np.cosh(np.minimum(np.abs(q), 350.0)) ** 2 + 2 * lam
            qn = q - g / dg
            bad = (qn <= lo) | (qn >= hi)
            qn = np.where(bad, 0.5 * (lo + hi), qn)
            stalled = np.abs(qn - q) <= 4e-16 * np.maximum(1.0, np.abs(q))
            q = np.where(done, q, qn)
            if np.all(done | stalled):
                return q
        res = float(np.max(np.abs(np.tanh(q) + 2 * lam * q - s)))
        raise ProxConvergenceError(res)

    def _prox(self, lam, s):
        return np.tanh(self._solve_q(lam, s))

    def _yosida(self, lam, s):
        return 2 * self._solve_q(lam, s)

    def _yosida_prime(self, lam, s):
        q = self._solve_q(lam, s)
        sech2 = 1.0 / np.cosh(np.minimum(np.abs(q), 350.0)) ** 2
        return 2.0 / (sech2 + 2 * lam)

    def _moreau(self, lam, s):
        q = self._solve_q(lam, s)
        return 2 * np.tanh(q) * q - 2 * _log_cosh(q) + 2 * lam * q * q

    def pi_hat(self, s):
        return -self.c1 * _arr(s) ** 2

    def pi(self, s):
        return -2 * self.c1 * _arr(s)

    def pi_prime(self, s):
        return np.full_like(_arr(s), -2 * self.c1)


class DoubleObstaclePotential(PotentialSpec):
    """Indicator of ``[-1, 1]`` plus ``pi_hat = -c2 s^2``."""

    @property
    def c2(self) -> float:
        return self.params["c2"]

    def beta_hat(self, s):
        s = _arr(s)
        return np.where(np.abs(s) <= 1, 0.0, np.inf)

    def beta_min(self, s):
        s = _arr(s)
        return np.where(np.abs(s) <= 1, 0.0, np.nan)

    def _prox(self, lam, s):
        return np.clip(s, -1.0, 1.0)

    def _yosida_prime(self, lam, s):
        return np.where(np.abs(s) > 1, 1.0 / lam, 0.0)

    def _moreau(self, lam, s):
        return (s - np.clip(s, -1.0, 1.0)) ** 2 / (2 * lam)

    def pi_hat(self, s):
        return -self.c2 * _arr(s) ** 2

    def pi(self, s):
        return -2 * self.c2 * _arr(s)

    def pi_prime(self, s):
        return np.full_like(_arr(s), -2 * self.c2)


@dataclass(frozen=True)
class CustomPotential(PotentialSpec):
    """User-supplied split.

    ``prox(lam, s)`` may be given directly; otherwise it is computed by
    bisection on ``p + lam * beta(p) = s`` over ``domain`` (``beta`` must be
    a continuous single-valued selection there).
    """

    beta_hat_fn: Callable = field(default=lambda s: np.zeros_like(s), compare=False)
    beta_fn: Callable | None = field(default=None, compare=False)
    prox_fn: Callable | None = field(default=None, compare=False)
    pi_hat_fn: Callable = field(default=lambda s: np.zeros_like(s), compare=False)
    pi_fn: Callable = field(default=lambda s: np.zeros_like(s), compare=False)
    pi_prime_fn: Callable | None = field(default=None, compare=False)

    def beta_hat(self, s):
        s = _arr(s)
        return np.where(self.in_domain(s), self.beta_hat_fn(s), np.inf)

    def beta_min(self, s):
        s = _arr(s)
        if self.beta_fn is None:
            return np.where(self.in_domain(s), 0.0, np.nan)
        return np.where(self.in_domain(s), self.beta_fn(s), np.nan)

    def _prox(self, lam, s):
        if self.prox_fn is not None:
            return _arr(self.prox_fn(lam, s))
        if self.beta_fn is None:
            return np.clip(s, *self.domain)
        lo = np.full_like(s, max(self.domain[0], -1e6))
        hi = np.full_like(s, min(self.domain[1], 1e6))
        lo = np.minimum(lo, np.where(np.isfinite(self.domain[0]), lo, s))
        hi = np.maximum(hi, np.where(np.isfinite(self.domain[1]), hi, s))
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            g = mid + lam * self.beta_fn(mid) - s
            lo = np.where(g < 0, mid, lo)
            hi = np.where(g >= 0, mid, hi)
            if np.all(hi - lo <= PROX_TOL * np.maximum(1.0, np.abs(mid))):
                break
        return 0.5 * (lo + hi)

    def pi_hat(self, s):
        return _arr(self.pi_hat_fn(_arr(s)))

    def pi(self, s):
        return _arr(self.pi_fn(_arr(s)))

    def pi_prime(self, s):
        s = _arr(s)
        if self.pi_prime_fn is not None:
            return _arr(self.pi_prime_fn(s))
        h = 1e-6 * np.maximum(1.0, np.abs(s))
        return (self.pi(s + h) - self.pi(s - h)) / (2 * h)


def make_potential(variant: str, **params) -> PotentialSpec:
    """Build one of the canonical potentials or a custom split.

    ``regular``; ``logarithmic`` needs ``c1 > 1``; ``double_obstacle`` needs
    ``c2 > 0``. ``custom`` accepts ``beta_hat``, ``beta``, ``prox``,
    ``pi_hat``, ``pi``, ``pi_prime``, ``L_pi`` and ``domain``; every piece
    defaults to zero, so ``make_potential("custom")`` is ``F = 0``.
    """
    if variant == REGULAR:
        return RegularPotential(REGULAR, L_pi=1.0)
    if variant == LOGARITHMIC:
        c1 = params.get("c1", 2.0)
        if not c1 > 1:
            raise PotentialError(f"logarithmic potential needs c1 > 1, got {c1}")
        return LogarithmicPotential(LOGARITHMIC, L_pi=2.0 * c1, domain=(-1.0, 1.0), params={"c1": float(c1)})
    if variant == DOUBLE_OBSTACLE:
        c2 = params.get("c2", 1.0)
        if not c2 > 0:
            raise PotentialError(f"double obstacle potential needs c2 > 0, got {c2}")
        return DoubleObstaclePotential(DOUBLE_OBSTACLE, L_pi=2.0 * c2, domain=(-1.0, 1.0), params={"c2": float(c2)})
    if variant == CUSTOM:
        kw = {}
        for src, dst in (("beta_hat", "beta_hat_fn"), ("beta", "beta_fn"), ("prox", "prox_fn"),
                         ("pi_hat", "pi_hat_fn"), ("pi", "pi_fn"), ("pi_prime", "pi_prime_fn")):
            if src in params:
                kw[dst] = params[src]
        dom = tuple(float(x) for x in params.get("domain", (-np.inf, np.inf)))
        if not dom[0] <= 0 <= dom[1]:
            raise PotentialError("custom potential must have 0 in the domain of beta_hat")
        return CustomPotential(CUSTOM, L_pi=float(params.get("L_pi", 0.0)), domain=dom, **kw)
    raise PotentialError(f"unknown potential variant {variant!r}")


# -- module-level API ---------------------------------------------------------

def prox(spec: PotentialSpec, lam: float, s):
    """Minimizer of ``beta_hat(p) + (p - s)^2 / (2 lam)``."""
    return spec.prox(lam, s)


def yosida(spec: PotentialSpec, lam: float, s):
    return spec.yosida(lam, s)


def moreau(spec: PotentialSpec, lam: float, s):
    return spec.moreau(lam, s)


def pi_eval(spec: PotentialSpec, s):
    """``(pi_hat(s), pi(s))``."""
    return _scalar_out(spec.pi_hat(s), s), _scalar_out(spec.pi(s), s)


def nodal_integral(values: np.ndarray, weight: float) -> float:
    """Midpoint quadrature; any infinite node makes the integral infinite."""
    if np.any(np.isinf(values)):
        return float("inf")
    return float(weight * np.sum(values))


def beta_hat_integral(spec: PotentialSpec, f) -> float:
    """``int_Omega beta_hat(v)`` for a :class:`~fracch.spectral.Field` ``f``."""
    return nodal_integral(spec.beta_hat(f.nodal()), f.op.weight)


def natural_residual(spec: PotentialSpec, phi, xi):
    """Pointwise ``|phi - J_1(phi + xi)|``.

    Vanishes exactly when ``xi`` is in ``beta(phi)``, is bounded by
    ``dist(xi, beta(phi))`` when ``phi`` is in ``D(beta)``, and stays finite
    when ``phi`` leaves the domain, which Yosida solutions may do.
    """
    phi = _arr(phi)
    return np.abs(phi - spec.prox(1.0, phi + _arr(xi)))
