"""Dense complex linear algebra on small Hilbert spaces.

States are 1-d complex128 arrays, operators square complex128 matrices.
Everything here is dense double precision: the systems this package targets
live in dimension 2..16, where sparse structure buys nothing.

Two-level conventions are ground-first: ``|g> = (1, 0)``, ``|e> = (0, 1)``,
so ``SIGMA_MINUS = |g><e|`` lowers and ``SIGMA_PLUS`` raises.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

__all__ = [
    "EPS_ZERO",
    "NearZeroNorm",
    "apply",
    "norm_sq",
    "normalize",
    "expectation",
    "adjoint",
    "matrix_exp",
    "as_state",
    "as_operator",
    "basis_state",
    "projector",
    "is_hermitian",
    "SIGMA_X",
    "SIGMA_MINUS",
    "SIGMA_PLUS",
    "PROJ_G",
    "PROJ_E",
    "GROUND",
    "EXCITED",
]

# Squared-norm floor below which a jump/drift branch is treated as impossible.
EPS_ZERO = 1e-14


class NearZeroNorm(ValueError):
    """The (transformed) state has vanishing norm; the branch is impossible."""


def as_state(values) -> np.ndarray:
    """Coerce to a 1-d complex128 state vector."""
    psi = np.asarray(values, dtype=np.complex128)
    if psi.ndim != 1 or psi.shape[0] < 2:
        raise ValueError(f"state must be a 1-d vector of dim >= 2, got shape {psi.shape}")
    return psi


def as_operator(values) -> np.ndarray:
    """Coerce to a square complex128 matrix."""
    op = np.asarray(values, dtype=np.complex128)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError(f"operator must be square, got shape {op.shape}")
    return op


def _check_dims(op: np.ndarray, psi: np.ndarray) -> None:
    if op.shape[1] != psi.shape[0]:
        raise ValueError(f"dimension mismatch: operator {op.shape} on state {psi.shape}")


def apply(op: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """op @ psi, without normalization."""
    _check_dims(op, psi)
    return op @ psi


def norm_sq(psi: np.ndarray) -> float:
    """Squared 2-norm sum |c_i|^2."""
    return float(np.real(np.vdot(psi, psi)))


def normalize(psi: np.ndarray) -> np.ndarray:
    """psi / ||psi||; raises NearZeroNorm when the norm is numerically zero."""
    n2 = norm_sq(psi)
    if n2 <= EPS_ZERO:
        raise NearZeroNorm(f"cannot normalize state with squared norm {n2:.3e}")
    return psi / np.sqrt(n2)


def expectation(op: np.ndarray, psi: np.ndarray) -> complex:
    """<psi| op |psi> for a normalized psi."""
    _check_dims(op, psi)
    return complex(np.vdot(psi, op @ psi))


def adjoint(op: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return op.conj().T.copy()


def matrix_exp(op: np.ndarray) -> np.ndarray:
    """Matrix exponential (scaling-and-squaring with a Pade core)."""
    return scipy.linalg.expm(as_operator(op))


def is_hermitian(op: np.ndarray, tol: float = 1e-12) -> bool:
    op = np.asarray(op)
    scale = 1.0 + float(np.max(np.abs(op))) if op.size else 1.0
    return bool(np.max(np.abs(op - op.conj().T)) <= tol * scale)


def basis_state(dim: int, index: int) -> np.ndarray:
    psi = np.zeros(dim, dtype=np.complex128)
    psi[index] = 1.0
    return psi


def projector(psi: np.ndarray) -> np.ndarray:
    """|psi><psi|."""
    return np.outer(psi, psi.conj())


# Two-level constants, ground-first basis ordering.
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=np.complex128)  # |g><e|
SIGMA_PLUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=np.complex128)   # |e><g|
PROJ_G = np.diag([1.0, 0.0]).astype(np.complex128)
PROJ_E = np.diag([0.0, 1.0]).astype(np.complex128)
GROUND = basis_state(2, 0)
EXCITED = basis_state(2, 1)

for _arr in (SIGMA_X, SIGMA_MINUS, SIGMA_PLUS, PROJ_G, PROJ_E, GROUND, EXCITED):
    _arr.flags.writeable = False
del _arr
