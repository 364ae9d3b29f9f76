"""Strongly convex quadratic objectives and their eigenstructure.

The objective is ``f(x) = 1/2 (x - x*)^T A (x - x*)``. Writing ``A = P D P^T``
and ``x~ = P^T (x - x*)`` turns ``f`` into ``1/2 sum_i D_i x~_i^2``, so every
linear scheme in this package decouples into independent scalar modes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    NonSymmetric,
    NotPositiveDefinite,
    ValidationError,
)

SYMMETRY_TOL = 1e-12
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


@dataclass(frozen=True)
class EigenDecomposition:
    """``A = basis @ diag(eigenvalues) @ basis.T`` with eigenvalues ascending."""

    eigenvalues: np.ndarray
    basis: np.ndarray


def _normalize_signs(vectors):
    # first entry of non-negligible size made positive, so output is deterministic
    out = vectors.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        big = np.nonzero(np.abs(col) > 1e-12)[0]
        if big.size and col[big[0]] < 0:
            out[:, j] = -col
    return out


def eigendecompose(A, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps over all off-diagonal pairs, annihilating each with a plane
    rotation, until the off-diagonal Frobenius norm falls below
    ``tol * max(1, ||A||_F)``.

    Raises
    ------
    ConvergenceFailure
        If the tolerance is not reached within ``max_sweeps`` sweeps.
    """
    a = np.array(A, dtype=np.float64, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    n = a.shape[0]
    v = np.eye(n)
    target = tol * max(1.0, float(np.linalg.norm(a)))
    off_mask = ~np.eye(n, dtype=bool)

    def off_norm(m):
        # summed directly; subtracting the diagonal from the total cancels badly
        return float(np.linalg.norm(m[off_mask]))

    sweeps = 0
    while off_norm(a) > target:
        if sweeps >= max_sweeps:
            raise ConvergenceFailure(
                f"Jacobi did not converge in {max_sweeps} sweeps "
                f"(off-diagonal norm {off_norm(a):.3e})"
            )
        for i in range(n - 1):
            for j in range(i + 1, n):
                aij = a[i, j]
                if aij == 0.0:
                    continue
                # rotation angle zeroing a[i, j], the stable small-angle form
                theta = (a[j, j] - a[i, i]) / (2.0 * aij)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ai = a[:, i].copy()
                aj = a[:, j].copy()
                a[:, i] = c * ai - s * aj
                a[:, j] = s * ai + c * aj
                ai = a[i, :].copy()
                aj = a[j, :].copy()
                a[i, :] = c * ai - s * aj
                a[j, :] = s * ai + c * aj
                a[i, j] = a[j, i] = 0.0
                vi = v[:, i].copy()
                vj = v[:, j].copy()
                v[:, i] = c * vi - s * vj
                v[:, j] = s * vi + c * vj
        sweeps += 1

    eigenvalues = np.diag(a).copy()
    order = np.argsort(eigenvalues, kind="stable")
    return EigenDecomposition(eigenvalues[order], _normalize_signs(v[:, order]))


@dataclass(frozen=True)
class QuadraticObjective:
    A: np.ndarray
    x_star: np.ndarray
    eig: EigenDecomposition = field(repr=False)

    @property
    def dim(self) -> int:
        return self.x_star.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eig.eigenvalues

    @property
    def L(self) -> float:
        return smoothness_constant(self)


def _frozen(arr):
    arr.setflags(write=False)
    return arr


def build_objective(A, x_star) -> QuadraticObjective:
    """Validate ``A`` (symmetric positive definite) and ``x_star`` and cache
    the eigendecomposition."""
    a = np.array(A, dtype=np.float64, ndmin=2)
    xs = np.array(x_star, dtype=np.float64).reshape(-1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"A must be square, got shape {a.shape}")
    if a.shape[0] != xs.shape[0]:
        raise DimensionMismatch(
            f"A is {a.shape[0]}x{a.shape[0]} but x_star has length {xs.shape[0]}"
        )
    if not np.all(np.isfinite(a)) or not np.all(np.isfinite(xs)):
        raise ValidationError("A and x_star must be finite")
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > SYMMETRY_TOL:
        raise NonSymmetric(f"A is not symmetric (max |A - A^T| = {asym:.3e})")
    a = 0.5 * (a + a.T)
    eig = eigendecompose(a)
    if eig.eigenvalues[0] <= 0.0:
        raise NotPositiveDefinite(
            f"A has non-positive eigenvalue {eig.eigenvalues[0]:.6g}"
        )
    eig = EigenDecomposition(_frozen(eig.eigenvalues), _frozen(eig.basis))
    return QuadraticObjective(_frozen(a), _frozen(xs), eig)


def log_spaced_objective(dim: int = 5, L: float = 10.0, mu: float = 1.0, x_star=None):
    """Diagonal objective with eigenvalues log-spaced in ``[mu, L]``.

    ``dim == 1`` gives ``A = [[L]]`` so the single mode is the stiffest one.
    """
    if dim < 1:
        raise ValidationError("dim must be positive")
    if not (L > 0 and mu > 0):
        raise ValidationError("L and mu must be positive")
    if dim == 1:
        eigs = np.array([float(L)])
    else:
        eigs = np.logspace(math.log10(mu), math.log10(L), dim)
        eigs[-1] = float(L)
    if x_star is None:
        x_star = np.zeros(dim)
    return build_objective(np.diag(eigs), x_star)


def _check_dim(obj, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (obj.dim,):
        raise DimensionMismatch(f"expected vector of length {obj.dim}, got shape {x.shape}")
    return x


def gradient(obj: QuadraticObjective, x) -> np.ndarray:
    x = _check_dim(obj, x)
    return obj.A @ (x - obj.x_star)


def value(obj: QuadraticObjective, x) -> float:
    r = _check_dim(obj, x) - obj.x_star
    return max(0.0, 0.5 * float(r @ (obj.A @ r)))


def suboptimality(obj: QuadraticObjective, x) -> float:
    # f(x*) = 0 by construction
    return value(obj, x)


def smoothness_constant(obj: QuadraticObjective) -> float:
    return float(obj.eig.eigenvalues[-1])


def to_eigenbasis(obj: QuadraticObjective, x) -> np.ndarray:
    return obj.eig.basis.T @ (_check_dim(obj, x) - obj.x_star)


def from_eigenbasis(obj: QuadraticObjective, xt) -> np.ndarray:
    return obj.eig.basis @ _check_dim(obj, xt) + obj.x_star


def read_matrix_file(path) -> QuadraticObjective:
    """Read ``dim``, then ``dim`` rows of ``A``, then one row for ``x*``."""
    text = Path(path).read_text()
    rows = [line.split() for line in text.splitlines() if line.strip()]
    try:
        if not rows or len(rows[0]) != 1:
            raise ValueError("first line must hold the dimension")
        dim = int(rows[0][0])
        if dim < 1 or len(rows) != dim + 2:
            raise ValueError(f"expected {dim + 2} non-empty lines, got {len(rows)}")
        body = [[float(tok) for tok in row] for row in rows[1:]]
    except ValueError as exc:
        raise ValidationError(f"malformed matrix file {path}: {exc}") from None
    if any(len(row) != dim for row in body):
        raise DimensionMismatch(f"every row of {path} must have {dim} entries")
    return build_objective(np.array(body[:dim]), np.array(body[dim]))


def write_matrix_file(path, obj: QuadraticObjective) -> None:
    lines = [str(obj.dim)]
    lines += [" ".join(format(v, ".17g") for v in row) for row in obj.A]
    lines.append(" ".join(format(v, ".17g") for v in obj.x_star))
    Path(path).write_text("\n".join(lines) + "\n")
