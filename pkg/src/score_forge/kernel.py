"""Compactly supported high-order smoothing kernels built from Legendre polynomials.

A kernel ``K`` on ``[-1, 1]`` is represented through its derivative
``K'(x) = sum_i a_i P_i(x)`` with nonzero coefficients only at odd Legendre
indices ``i <= order + 1``. Oddness of ``K'`` makes ``K`` even with
``K(-1) = K(1) = 0`` automatically, and the coefficients are pinned down by
the moment conditions

    int K'(x) x dx   = -1          (equivalently  int K = 1)
    int K'(x) x^k dx = 0           for k = 2 .. order+1,

of which the even-``k`` ones hold identically, leaving a square linear
system in the odd moments. The system is solved exactly in rational
arithmetic; correctness is certified a posteriori by Gauss-Legendre
quadrature of the moment conditions (see ``moment_report``).

Orders above ``MAX_ORDER`` are rejected: beyond that the float64 expansion
coefficients lose enough precision that the certification tolerances are
no longer met.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

MAX_ORDER = 64


def legendre_eval(degree: int, x):
    """Evaluate the Legendre polynomial P_degree(x).

    Uses the three-term recurrence (n+1) P_{n+1} = (2n+1) x P_n - n P_{n-1}
    with P_0 = 1, P_1 = x. Accepts scalars or arrays.
    """
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    p_prev = np.ones_like(x)
    if degree == 0:
        return p_prev if p_prev.ndim else float(p_prev)
    p_cur = x.copy()
    for n in range(1, degree):
        p_next = ((2 * n + 1) * x * p_cur - n * p_prev) / (n + 1)
        p_prev, p_cur = p_cur, p_next
    return p_cur if p_cur.ndim else float(p_cur)


def _legendre_table(max_degree: int, x: np.ndarray) -> np.ndarray:
    """P_0..P_max_degree at x, stacked along axis 0."""
    out = np.empty((max_degree + 1,) + x.shape, dtype=np.float64)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = x
    for n in range(1, max_degree):
        out[n + 1] = ((2 * n + 1) * x * out[n] - n * out[n - 1]) / (n + 1)
    return out


def legendre_moment(k: int, i: int) -> Fraction:
    """Exact value of the integral of x^k P_i(x) over [-1, 1]."""
    if k < 0 or i < 0:
        raise ValueError("indices must be nonnegative")
    if k < i or (k - i) % 2 == 1:
        return Fraction(0)
    num = Fraction(2) ** (i + 1) * math.factorial(k) * math.factorial((k + i) // 2)
    den = math.factorial((k - i) // 2) * math.factorial(k + i + 1)
    return num / den


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """An order-``order`` kernel, stored as Legendre coefficients of K'.

    ``dcoeffs[i]`` is the coefficient of P_i in K'; only odd i are nonzero.
    ``icoeffs`` is the induced expansion of K itself (even indices only),
    obtained from the antiderivative identity
    int P_i = (P_{i+1} - P_{i-1}) / (2i + 1), whose lower limit vanishes
    term by term at x = -1.
    """

    order: int
    dcoeffs: np.ndarray
    icoeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.dcoeffs.setflags(write=False)
        self.icoeffs.setflags(write=False)


def build_kernel(order: int) -> KernelSpec:
    """Construct the kernel of the given order.

    Solves the odd-moment linear system exactly (Fraction arithmetic with
    partial pivoting), then converts the coefficients to float64.

    Raises ValueError for order < 1, order > MAX_ORDER, or a singular
    moment system.
    """
    if order < 1:
        raise ValueError("kernel order must be >= 1")
    if order > MAX_ORDER:
        raise ValueError(
            f"kernel order {order} exceeds the supported maximum {MAX_ORDER} "
            "(float64 coefficients degrade beyond it)"
        )
    odd = list(range(1, order + 2, 2))
    m = len(odd)
    A = [[legendre_moment(k, i) for i in odd] for k in odd]
    b = [Fraction(-1)] + [Fraction(0)] * (m - 1)

    for col in range(m):
        piv = max(range(col, m), key=lambda r: abs(A[r][col]))
        if A[piv][col] == 0:
            raise ValueError(f"moment system is singular at order {order}")
        if piv != col:
            A[col], A[piv] = A[piv], A[col]
            b[col], b[piv] = b[piv], b[col]
        for r in range(col + 1, m):
            f = A[r][col] / A[col][col]
            if f:
                for c in range(col, m):
                    A[r][c] -= f * A[col][c]
                b[r] -= f * b[col]
    sol = [Fraction(0)] * m
    for r in range(m - 1, -1, -1):
        s = b[r] - sum(A[r][c] * sol[c] for c in range(r + 1, m))
        sol[r] = s / A[r][r]

    dco = np.zeros(order + 2)
    ico = np.zeros(order + 3)
    for i, ai in zip(odd, sol):
        a = float(ai)
        dco[i] = a
        ico[i + 1] += a / (2 * i + 1)
        ico[i - 1] -= a / (2 * i + 1)
    return KernelSpec(order=order, dcoeffs=dco, icoeffs=ico)


def kernel_eval(spec: KernelSpec, x):
    """K(x); exactly 0 for |x| >= 1."""
    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    if inside.any():
        table = _legendre_table(len(spec.icoeffs) - 1, x[inside])
        out[inside] = np.tensordot(spec.icoeffs, table, axes=(0, 0))
    return float(out[0]) if scalar else out


def kernel_deriv_eval(spec: KernelSpec, x):
    """K'(x); exactly 0 for |x| >= 1 (one-sided limits at the edges are not taken)."""
    x = np.asarray(x, dtype=np.float64)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    if inside.any():
        table = _legendre_table(len(spec.dcoeffs) - 1, x[inside])
        out[inside] = np.tensordot(spec.dcoeffs, table, axes=(0, 0))
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class ProductKernel:
    """Tensor-product kernel K_d(x) = prod_j K(x_j) on [-1, 1]^d."""

    base: KernelSpec
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")


def product_eval(pk: ProductKernel, x):
    """Value and gradient of the product kernel at a point (or batch).

    For a batch of shape (m, d) returns (values (m,), gradients (m, d)).
    Gradient component j is K'(x_j) * prod_{i != j} K(x_i); both outputs
    are zero whenever any coordinate leaves [-1, 1].
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    if pts.shape[1] != pk.dim:
        raise ValueError(f"expected points of dimension {pk.dim}, got {pts.shape[1]}")
    kv = kernel_eval(pk.base, pts.ravel()).reshape(pts.shape)
    kp = kernel_deriv_eval(pk.base, pts.ravel()).reshape(pts.shape)
    value = np.prod(kv, axis=1)
    grad = np.empty_like(pts)
    for j in range(pk.dim):
        others = np.prod(kv[:, [i for i in range(pk.dim) if i != j]], axis=1)
        grad[:, j] = kp[:, j] * others
    if single:
        return float(value[0]), grad[0]
    return value, grad


def gauss_legendre_rule(n_nodes: int):
    """Nodes and weights on [-1, 1]."""
    return np.polynomial.legendre.leggauss(n_nodes)


def moment_report(spec: KernelSpec, n_nodes: int | None = None):
    """Quadrature check of the defining moment conditions.

    Returns (|int K - 1|, max over 1 <= j <= order-1 of |int x^j K|),
    computed with Gauss-Legendre quadrature (4 * order nodes by default,
    which integrates every x^j K exactly up to rounding).
    """
    if n_nodes is None:
        n_nodes = max(4 * spec.order, 8)
    nodes, weights = gauss_legendre_rule(n_nodes)
    kv = kernel_eval(spec, nodes)
    unit_defect = abs(float(weights @ kv) - 1.0)
    worst = 0.0
    for j in range(1, spec.order):
        worst = max(worst, abs(float(weights @ (nodes**j * kv))))
    return unit_defect, worst


def certify(order: int, unit_tol: float = 1e-9, moment_tol: float = 1e-8) -> bool:
    """True when the order's kernel meets the moment tolerances."""
    unit_defect, worst = moment_report(build_kernel(order))
    return unit_defect < unit_tol and worst < moment_tol
