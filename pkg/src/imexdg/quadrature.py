"""One-dimensional Gauss quadrature rules on the reference interval [-1, 1].

Nodes are found by Newton iteration on the relevant Legendre polynomial
(or its derivative), so the module is self-contained; correctness is
established through monomial-exactness tests rather than tabulated values.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

_NEWTON_TOL = 1e-15
_NEWTON_MAX_ITER = 100


def legendre_and_derivative(n: int, x):
    """Evaluate P_n and P_n' at x via the three-term recurrence.

    Works on scalars or arrays; returns (P_n(x), P_n'(x)).
    """
    x = np.asarray(x, dtype=float)
    p_prev = np.ones_like(x)
    if n == 0:
        return p_prev, np.zeros_like(x)
    p = x.copy()
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    # P_n'(x) = n (x P_n - P_{n-1}) / (x^2 - 1), regularized at the endpoints
    dp = np.where(
        np.isclose(np.abs(x), 1.0),
        0.5 * n * (n + 1) * np.sign(x) ** (n + 1),
        n * (x * p - p_prev) / np.where(np.abs(x) == 1.0, 1.0, x * x - 1.0),
    )
    return p, dp


@dataclass(frozen=True)
class QuadratureRule:
    """Abscissae and weights of a symmetric rule on [-1, 1]."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        pts, wts = self.points, self.weights
        if pts.ndim != 1 or pts.shape != wts.shape:
            raise InvalidArgumentError("points and weights must be equal-length 1-d arrays")
        if np.any(np.diff(pts) <= 0):
            raise InvalidArgumentError("quadrature points must be strictly increasing")
        if np.any(wts <= 0):
            raise InvalidArgumentError("quadrature weights must be positive")
        if abs(wts.sum() - 2.0) > 1e-13:
            raise InvalidArgumentError("weights must sum to the measure of [-1, 1]")
        if np.max(np.abs(pts + pts[::-1])) > 1e-13:
            raise InvalidArgumentError("rule must be symmetric about the origin")

    @property
    def npoints(self) -> int:
        return self.points.size

    def integrate(self, values) -> float:
        """Apply the rule to function values sampled at the points."""
        return float(np.dot(self.weights, values))


def gauss_legendre(n: int) -> QuadratureRule:
    """n-point Gauss-Legendre rule, exact for polynomials up to degree 2n-1."""
    if n < 1:
        raise InvalidArgumentError(f"gauss_legendre requires n >= 1, got {n}")
    if n == 1:
        return QuadratureRule(np.zeros(1), np.full(1, 2.0))
    # Chebyshev-style initial guesses for the roots of P_n, then Newton.
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (4 * k - 1) / (4 * n + 2))
    for _ in range(_NEWTON_MAX_ITER):
        p, dp = legendre_and_derivative(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < _NEWTON_TOL:
            break
    x = np.sort(x)
    # enforce exact symmetry so downstream invariants hold to round-off
    x = 0.5 * (x - x[::-1])
    _, dp = legendre_and_derivative(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    w = 0.5 * (w + w[::-1])
    return QuadratureRule(x, w)


def gauss_lobatto(n: int) -> QuadratureRule:
    """n-point Gauss-Lobatto rule including both endpoints; exact to degree 2n-3."""
    if n < 2:
        raise InvalidArgumentError(f"gauss_lobatto requires n >= 2, got {n}")
    if n == 2:
        return QuadratureRule(np.array([-1.0, 1.0]), np.array([1.0, 1.0]))
    m = n - 1
    # interior nodes are the roots of P_{n-1}'; Newton with d/dx P' from the
    # Legendre ODE: (1-x^2) P_m'' = 2x P_m' - m(m+1) P_m
    k = np.arange(1, m)
    x = np.cos(np.pi * k / m)
    for _ in range(_NEWTON_MAX_ITER):
        p, dp = legendre_and_derivative(m, x)
        ddp = (2.0 * x * dp - m * (m + 1) * p) / (1.0 - x * x)
        dx = dp / ddp
        x = x - dx
        if np.max(np.abs(dx)) < _NEWTON_TOL:
            break
    x = np.concatenate(([-1.0], np.sort(x), [1.0]))
    x = 0.5 * (x - x[::-1])
    p, _ = legendre_and_derivative(m, x)
    w = 2.0 / (m * (m + 1) * p * p)
    w = 0.5 * (w + w[::-1])
    return QuadratureRule(x, w)


def tensor_points(rule: QuadratureRule, ndim: int) -> np.ndarray:
    """Tensor-product points, lexicographic with the first direction fastest.

    Returns an array of shape (npoints**ndim, ndim).
    """
    grids = np.meshgrid(*([rule.points] * ndim), indexing="ij")
    # meshgrid 'ij' makes axis 0 vary slowest; flatten so direction 0 is fastest
    rev = tuple(reversed(range(ndim)))
    cols = [g.transpose(rev).ravel() for g in grids]
    return np.stack(cols, axis=-1)


def tensor_weights(rule: QuadratureRule, ndim: int) -> np.ndarray:
    """Tensor-product weights matching the ordering of :func:`tensor_points`."""
    w = rule.weights
    out = w
    for _ in range(ndim - 1):
        out = np.multiply.outer(w, out)
    return out.ravel()
