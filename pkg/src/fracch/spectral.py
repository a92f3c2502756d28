"""Spectral representation of selfadjoint nonnegative operators.

An operator is stored through its eigenvalues and an orthonormal basis of
nodal eigenvectors on a fixed quadrature grid. Functions live as coefficient
vectors in that basis (:class:`Field`); fractional powers, norms and the
kernel projection are diagonal operations on the coefficients.

Two bases are supported:

* ``cosine_neumann_1d``: the Neumann Laplacian on ``(0, L)`` sampled at the
  midpoint grid ``x_k = (k + 1/2) L / N``. The transform is an orthonormal
  DCT-II, so it is exact and fast.
* ``custom``: any square matrix of nodal eigenvectors, orthonormal for the
  discrete inner product ``(u, v) = w * sum(u * v)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct, idct

ORTHO_TOL = 1e-10

COSINE = "cosine_neumann_1d"
CUSTOM = "custom"


class SpectralError(ValueError):
    """Raised for invalid operator data or mismatched fields."""


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    eigenvalues: np.ndarray
    kernel_dim: int
    basis_kind: str
    domain_length: float | None = None
    eigenvectors: np.ndarray | None = field(default=None, repr=False)
    weight: float = 1.0

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def n_nodes(self) -> int:
        return self.n_modes

    @property
    def measure(self) -> float:
        """Measure of the domain, ``|Omega|``."""
        return self.weight * self.n_nodes

    @property
    def has_constant_mode(self) -> bool:
        if self.basis_kind == COSINE:
            return True
        e1 = self.eigenvectors[:, 0]
        return bool(np.allclose(e1, e1[0], rtol=0.0, atol=1e-12) and e1[0] != 0.0)

    def nodes(self) -> np.ndarray:
        if self.basis_kind == COSINE:
            n = self.n_nodes
            return (np.arange(n) + 0.5) * self.domain_length / n
        return np.arange(self.n_nodes) * self.weight

    def basis_matrix(self) -> np.ndarray:
        """Nodal eigenvectors as columns, ``E[k, j] = e_j(x_k)``."""
        if self.basis_kind == COSINE:
            return to_nodal_array(np.eye(self.n_modes), self, axis=0)
        return self.eigenvectors

    def powers(self, exponent: float) -> np.ndarray:
        """``lambda_j ** exponent`` with the convention ``0 ** exponent = 0``."""
        if exponent <= 0:
            raise SpectralError(f"exponent must be positive, got {exponent}")
        out = np.zeros_like(self.eigenvalues)
        pos = self.eigenvalues > 0
        out[pos] = self.eigenvalues[pos] ** exponent
        return out

    def field(self, coeffs) -> Field:
        return Field(np.asarray(coeffs, dtype=float), self)

    def zeros(self) -> Field:
        return Field(np.zeros(self.n_modes), self)


def _validate_eigenvalues(eigenvalues) -> np.ndarray:
    ev = np.asarray(eigenvalues, dtype=float)
    if ev.ndim != 1 or ev.size == 0:
        raise SpectralError("eigenvalues must be a nonempty 1-d sequence")
    if np.any(ev < 0):
        raise SpectralError("eigenvalues must be nonnegative")
    if np.any(np.diff(ev) < 0):
        raise SpectralError("eigenvalues must be nondecreasing")
    return ev


def build_cosine_operator(n_modes: int, domain_length: float) -> SpectralOperator:
    """Neumann Laplacian on ``(0, domain_length)`` truncated to ``n_modes``."""
    if int(n_modes) != n_modes or n_modes < 2:
        raise SpectralError(f"n_modes must be an integer >= 2, got {n_modes}")
    if not domain_length > 0:
        raise SpectralError(f"domain_length must be positive, got {domain_length}")
    n_modes = int(n_modes)
    j = np.arange(n_modes)
    ev = (j * np.pi / domain_length) ** 2
    ev.setflags(write=False)
    return SpectralOperator(
        eigenvalues=ev,
        kernel_dim=1,
        basis_kind=COSINE,
        domain_length=float(domain_length),
        weight=domain_length / n_modes,
    )


def build_custom_operator(eigenvalues, eigenvectors=None, weight: float = 1.0) -> SpectralOperator:
    """Operator from explicit eigenpairs.

    ``eigenvectors`` is a square nodal matrix with one eigenvector per column;
    when omitted the identity basis is used.
    """
    ev = _validate_eigenvalues(eigenvalues)
    n = ev.size
    if eigenvectors is None:
        vecs = np.eye(n) / np.sqrt(weight)
    else:
        vecs = np.array(eigenvectors, dtype=float)
    if vecs.shape != (n, n):
        raise SpectralError(f"eigenvector matrix must have shape {(n, n)}, got {vecs.shape}")
    if not weight > 0:
        raise SpectralError("quadrature weight must be positive")
    gram = weight * vecs.T @ vecs
    resid = np.abs(gram - np.eye(n)).max()
    if resid > ORTHO_TOL:
        raise SpectralError(f"eigenvectors are not orthonormal (residual {resid:.3e})")
    ev = ev.copy()
    ev.setflags(write=False)
    vecs.setflags(write=False)
    return SpectralOperator(
        eigenvalues=ev,
        kernel_dim=int(np.count_nonzero(ev == 0.0)),
        basis_kind=CUSTOM,
        eigenvectors=vecs,
        weight=float(weight),
    )


def orthonormality_residual(op: SpectralOperator) -> float:
    """Max deviation of the discrete Gram matrix from the identity."""
    e = op.basis_matrix()
    return float(np.abs(op.weight * e.T @ e - np.eye(op.n_modes)).max())


# -- transforms ---------------------------------------------------------------

def to_modal_array(values: np.ndarray, op: SpectralOperator, axis: int = -1) -> np.ndarray:
    if op.basis_kind == COSINE:
        return np.sqrt(op.weight) * dct(values, type=2, norm="ortho", axis=axis)
    v = np.moveaxis(values, axis, -1)
    return np.moveaxis(op.weight * v @ op.eigenvectors, -1, axis)


def to_nodal_array(coeffs: np.ndarray, op: SpectralOperator, axis: int = -1) -> np.ndarray:
    if op.basis_kind == COSINE:
        return idct(coeffs, type=2, norm="ortho", axis=axis) / np.sqrt(op.weight)
    c = np.moveaxis(coeffs, axis, -1)
    return np.moveaxis(c @ op.eigenvectors.T, -1, axis)


def to_modal(nodal_values, op: SpectralOperator) -> Field:
    v = np.asarray(nodal_values, dtype=float)
    if v.shape != (op.n_nodes,):
        raise SpectralError(f"expected {op.n_nodes} nodal values, got shape {v.shape}")
    return Field(to_modal_array(v, op), op)


def to_nodal(f: Field) -> np.ndarray:
    return to_nodal_array(f.coeffs, f.op)


@dataclass(frozen=True, eq=False)
class Field:
    """A function given by its coefficients ``(v, e_j)`` in ``op``'s basis."""

    coeffs: np.ndarray
    op: SpectralOperator = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (self.op.n_modes,):
            raise SpectralError(f"expected {self.op.n_modes} coefficients, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def _check(self, other: Field):
        if other.op is not self.op:
            raise SpectralError("fields live in different bases")

    def __add__(self, other: Field) -> Field:
        self._check(other)
        return Field(self.coeffs + other.coeffs, self.op)

    def __sub__(self, other: Field) -> Field:
        self._check(other)
        return Field(self.coeffs - other.coeffs, self.op)

    def __mul__(self, scalar: float) -> Field:
        return Field(scalar * self.coeffs, self.op)

    __rmul__ = __mul__

    def __neg__(self) -> Field:
        return Field(-self.coeffs, self.op)

    def inner(self, other: Field) -> float:
        self._check(other)
        return float(self.coeffs @ other.coeffs)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def nodal(self) -> np.ndarray:
        return to_nodal(self)


def field_from_function(func, op: SpectralOperator) -> Field:
    """Sample ``func`` at the operator's nodes and transform."""
    return to_modal(func(op.nodes()), op)


# -- operator calculus --------------------------------------------------------

def apply_power(op: SpectralOperator, exponent: float, f: Field) -> Field:
    """``A^exponent f`` by scaling each coefficient with ``lambda_j^exponent``."""
    if f.op is not op:
        raise SpectralError("field is not expressed in this operator's basis")
    return Field(op.powers(exponent) * f.coeffs, op)


def frac_norm(op: SpectralOperator, exponent: float, f: Field) -> float:
    """Graph-equivalent norm of ``V^r``; the kernel mode enters through ``|c_1|``."""
    scaled = apply_power(op, exponent, f).coeffs
    if op.eigenvalues[0] == 0.0:
        return float(np.sqrt(f.coeffs[0] ** 2 + np.sum(scaled[1:] ** 2)))
    return float(np.linalg.norm(scaled))


def dual_norm(op: SpectralOperator, exponent: float, f: Field, strict: bool = False) -> float:
    """Dual norm of ``V^{-r}``.

    When ``lambda_1 = 0`` the first coefficient is paired with the ``|c_1|``
    part of :func:`frac_norm`. With ``strict=True`` a nonzero mean part is
    rejected, i.e. ``f`` must lie in the zero-mean subspace.
    """
    if f.op is not op:
        raise SpectralError("field is not expressed in this operator's basis")
    if exponent <= 0:
        raise SpectralError(f"exponent must be positive, got {exponent}")
    ev = op.eigenvalues
    pos = ev > 0
    total = np.sum((ev[pos] ** (-exponent) * f.coeffs[pos]) ** 2)
    if ev[0] == 0.0:
        if strict and f.coeffs[0] != 0.0:
            raise SpectralError("dual norm on the zero-mean subspace needs a zero first coefficient")
        total += f.coeffs[0] ** 2
    return float(np.sqrt(total))


def kernel_mask(op: SpectralOperator) -> np.ndarray:
    mask = np.zeros(op.n_modes, dtype=bool)
    mask[: op.kernel_dim] = True
    return mask


def project_kernel(op: SpectralOperator, f: Field) -> Field:
    """Orthogonal projection onto ``ker op``."""
    if f.op is not op:
        raise SpectralError("field is not expressed in this operator's basis")
    return Field(np.where(kernel_mask(op), f.coeffs, 0.0), op)


def mean_value(f: Field) -> float:
    op = f.op
    if not op.has_constant_mode:
        raise SpectralError("mean value needs a basis whose first eigenvector is constant")
    e1 = 1.0 / np.sqrt(op.measure) if op.basis_kind == COSINE else op.eigenvectors[0, 0]
    # e1 is the constant +-|Omega|^{-1/2}, so c1 / (e1 |Omega|) = c1 * e1
    return float(f.coeffs[0] * e1)


def poincare_constant(op: SpectralOperator, exponent: float) -> float:
    """``C_P = lambda_2^{-r}`` for operators with a simple zero eigenvalue."""
    if op.eigenvalues[0] != 0.0 or op.n_modes < 2 or op.eigenvalues[1] <= 0:
        raise SpectralError("Poincare constant needs 0 = lambda_1 < lambda_2")
    return float(op.eigenvalues[1] ** (-exponent))


def change_of_basis(src: SpectralOperator, dst: SpectralOperator) -> np.ndarray:
    """Matrix mapping ``src`` coefficients to ``dst`` coefficients on a shared grid."""
    if src.n_nodes != dst.n_nodes or not np.isclose(src.weight, dst.weight):
        raise SpectralError("operators do not share a quadrature grid")
    if src is dst:
        return np.eye(src.n_modes)
    return to_modal_array(src.basis_matrix(), dst, axis=0)


def operator_matrix(op: SpectralOperator, diag: np.ndarray, basis: SpectralOperator) -> np.ndarray:
    """Matrix of ``sum_j diag_j (., e_j) e_j`` expressed in ``basis`` coefficients."""
    t = change_of_basis(basis, op)
    return t.T @ (diag[:, None] * t)
