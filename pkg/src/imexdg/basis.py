"""Nodal Lagrange bases and tensor-product (Kronecker) kernels.

The 1D basis lives on Gauss-Lobatto points; multidimensional operations are
never assembled as dense Kronecker matrices but applied one direction at a
time.  Coefficients and quadrature values use lexicographic ordering with the
first coordinate direction fastest, matching ``quadrature.tensor_points``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import InvalidArgumentError, SingularGeometryError
from .quadrature import QuadratureRule, gauss_legendre, gauss_lobatto


def lagrange_values(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate the Lagrange cardinal functions of ``nodes`` at points ``x``.

    Returns V with V[q, i] = l_i(x_q), computed with the barycentric formula.
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    bary = 1.0 / diff.prod(axis=1)
    dx = x[:, None] - nodes[None, :]
    exact = np.isclose(dx, 0.0, atol=1e-14)
    safe = np.where(exact, 1.0, dx)
    terms = bary[None, :] / safe
    vals = terms / terms.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    vals[hit] = exact[hit].astype(float)
    return vals


def lagrange_derivatives(nodes: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate d/dx of the Lagrange cardinal functions at points ``x``."""
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = nodes.size
    out = np.zeros((x.size, n))
    for i in range(n):
        others = np.delete(nodes, i)
        denom = np.prod(nodes[i] - others)
        for j in range(n - 1):
            rest = np.delete(others, j)
            out[:, i] += np.prod(x[:, None] - rest[None, :], axis=1) / denom
    return out


@dataclass(frozen=True)
class Basis1D:
    """Degree-r nodal Lagrange basis with evaluation data on a quadrature rule.

    ``interp_to_quad[q, i]`` holds basis function i at quadrature point q and
    ``diff_at_quad`` its derivative, for the rule the basis was built on.
    """

    degree: int
    nodes: np.ndarray
    rule: QuadratureRule
    interp_to_quad: np.ndarray
    diff_at_quad: np.ndarray

    @classmethod
    def on_rule(cls, degree: int, rule: QuadratureRule) -> "Basis1D":
        if degree < 1:
            raise InvalidArgumentError(f"basis degree must be >= 1, got {degree}")
        nodes = gauss_lobatto(degree + 1).points
        return cls(
            degree=degree,
            nodes=nodes,
            rule=rule,
            interp_to_quad=lagrange_values(nodes, rule.points),
            diff_at_quad=lagrange_derivatives(nodes, rule.points),
        )

    @classmethod
    def collocated(cls, degree: int) -> "Basis1D":
        """Basis evaluated on the (r+1)-point Gauss-Legendre rule (square S)."""
        return cls.on_rule(degree, gauss_legendre(degree + 1))

    @classmethod
    def consistent(cls, degree: int) -> "Basis1D":
        """Basis evaluated on the (2r+1)-point Gauss-Legendre rule."""
        return cls.on_rule(degree, gauss_legendre(2 * degree + 1))

    @property
    def nfuncs(self) -> int:
        return self.degree + 1

    @cached_property
    def _interp_lu(self):
        if self.interp_to_quad.shape[0] != self.nfuncs:
            raise InvalidArgumentError(
                "tensor block inversion needs a square interpolation matrix; "
                "build the basis on the (r+1)-point Gauss-Legendre rule"
            )
        return lu_factor(self.interp_to_quad)

    @cached_property
    def interp_inverse(self) -> np.ndarray:
        """Inverse of the square collocated interpolation matrix."""
        return lu_solve(self._interp_lu, np.eye(self.nfuncs))


def apply_axis(mat: np.ndarray, arr: np.ndarray, axis: int) -> np.ndarray:
    """Contract ``mat`` (m x n) with ``arr`` along ``axis`` (length n)."""
    moved = np.moveaxis(arr, axis, -1)
    out = moved @ mat.T
    return np.moveaxis(out, -1, axis)


def tensor_apply(mats, arr: np.ndarray, ndim: int) -> np.ndarray:
    """Apply one small matrix per direction to the trailing tensor axes.

    ``arr`` has shape (..., n_{d-1}, ..., n_1, n_0): the last axis is
    direction 0 (lexicographic-fastest).  ``mats`` is a matrix or a list of
    matrices, one per direction, indexed by direction.
    """
    if not isinstance(mats, (list, tuple)):
        mats = [mats] * ndim
    out = arr
    for direction in range(ndim):
        out = apply_axis(mats[direction], out, axis=-1 - direction)
    return out


def _split_tensor(vec: np.ndarray, n1d: int, ndim: int) -> np.ndarray:
    lead = vec.shape[:-1]
    if vec.shape[-1] != n1d**ndim:
        raise InvalidArgumentError(
            f"expected trailing length {n1d**ndim} = {n1d}^{ndim}, got {vec.shape[-1]}"
        )
    return vec.reshape(*lead, *([n1d] * ndim))


def _flatten_tensor(arr: np.ndarray, ndim: int) -> np.ndarray:
    lead = arr.shape[:-ndim]
    return arr.reshape(*lead, -1)


def sum_factorized_interpolate(basis: Basis1D, cell_coeffs: np.ndarray, direction_count: int) -> np.ndarray:
    """Evaluate nodal coefficients at the tensor-product quadrature points.

    Equivalent to the dense Kronecker product S x ... x S acting on the
    coefficient vector, but applied one direction at a time.  Accepts leading
    batch axes on ``cell_coeffs``.
    """
    if direction_count not in (2, 3):
        raise InvalidArgumentError("direction_count must be 2 or 3")
    coeffs = _split_tensor(np.asarray(cell_coeffs, dtype=float), basis.nfuncs, direction_count)
    vals = tensor_apply(basis.interp_to_quad, coeffs, direction_count)
    return _flatten_tensor(vals, direction_count)


def tensor_block_inverse_apply(basis: Basis1D, jacobian_diag: np.ndarray, rhs: np.ndarray, ndim: int | None = None) -> np.ndarray:
    """Solve M x = rhs for the collocated cell mass matrix M = S^T J S.

    ``jacobian_diag`` holds positive per-quadrature-point weights (Jacobian
    determinant times quadrature weight, possibly density-weighted).  The
    inverse is applied through one-dimensional factors; the d-dimensional
    dense inverse is never formed.  Leading batch axes are supported.
    """
    jacobian_diag = np.asarray(jacobian_diag, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if np.any(jacobian_diag <= 0):
        raise SingularGeometryError("jacobian_diag must be strictly positive")
    n1 = basis.nfuncs
    if ndim is None:
        ndim = round(np.log(rhs.shape[-1]) / np.log(n1))
    if n1**ndim != rhs.shape[-1] or jacobian_diag.shape[-1] != rhs.shape[-1]:
        raise InvalidArgumentError("rhs/jacobian size does not match (r+1)^d")
    sinv = basis.interp_inverse
    t = tensor_apply(sinv.T, _split_tensor(rhs, n1, ndim), ndim)
    t = _flatten_tensor(t, ndim) / jacobian_diag
    out = tensor_apply(sinv, _split_tensor(t, n1, ndim), ndim)
    return _flatten_tensor(out, ndim)


def tensor_mass_apply(basis: Basis1D, jacobian_diag: np.ndarray, coeffs: np.ndarray, ndim: int) -> np.ndarray:
    """Forward collocated mass product (S^T J S) c, the inverse's counterpart."""
    n1 = basis.nfuncs
    vals = _flatten_tensor(tensor_apply(basis.interp_to_quad, _split_tensor(coeffs, n1, ndim), ndim), ndim)
    vals = vals * jacobian_diag
    nq = basis.rule.npoints
    out = tensor_apply(basis.interp_to_quad.T, _split_tensor(vals, nq, ndim), ndim)
    return _flatten_tensor(out, ndim)
