"""so(N) utilities: skew basis, gauge-output decoding, and curvature diagnostics.

The basis of so(N) is fixed once and for all: index pairs (a, b) with a < b
in lexicographic order, where basis element B_(a,b) carries +1 at (a, b) and
-1 at (b, a). Decoded matrices are built from their upper triangle and
mirrored with negation, so skew-symmetry holds bitwise, not just up to
rounding.

The gauge-transformation and field-strength routines differentiate field
evaluators by central differences. They are verification tools; nothing in
the training path calls them.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class SkewBasis:
    """Canonical ordered basis of so(n), n >= 2."""

    def __init__(self, n: int):
        if n < 2:
            raise ValueError(f"so(n) basis needs n >= 2, got {n}")
        self.n = n
        self.dim_g = n * (n - 1) // 2
        # triu_indices enumerates (a, b), a < b, in lexicographic order
        self.rows, self.cols = np.triu_indices(n, k=1)

    def __len__(self) -> int:
        return self.dim_g

    def element(self, i: int) -> np.ndarray:
        m = np.zeros((self.n, self.n))
        m[self.rows[i], self.cols[i]] = 1.0
        m[self.cols[i], self.rows[i]] = -1.0
        return m

    @cached_property
    def elements(self) -> list[np.ndarray]:
        return [self.element(i) for i in range(self.dim_g)]

    def from_coefficients(self, coeffs: np.ndarray) -> np.ndarray:
        """Skew matrix (or batch of them) from basis coefficients.

        coeffs has shape (..., dim_g); the result has shape (..., n, n) and
        is exactly skew because the lower triangle is the negated mirror of
        the upper.
        """
        c = np.asarray(coeffs, dtype=np.float64)
        if c.shape[-1] != self.dim_g:
            raise ValueError(f"expected {self.dim_g} coefficients, got {c.shape[-1]}")
        m = np.zeros(c.shape[:-1] + (self.n, self.n))
        m[..., self.rows, self.cols] = c
        m[..., self.cols, self.rows] = -c
        return m

    def to_coefficients(self, skew: np.ndarray) -> np.ndarray:
        """Upper-triangle read-off, inverse of from_coefficients."""
        return np.asarray(skew, dtype=np.float64)[..., self.rows, self.cols]


def skew_basis(n: int) -> SkewBasis:
    return SkewBasis(n)


@dataclass
class GaugeFieldValue:
    """One evaluation of the gauge field: a skew matrix per base direction.

    a_mu is an (n, n, n) array; a_mu[mu] is the so(n) value attached to base
    direction mu, acting on the fiber R^n in the fundamental representation.
    """

    n: int
    a_mu: np.ndarray

    def __post_init__(self):
        self.a_mu = np.asarray(self.a_mu, dtype=np.float64)
        if self.a_mu.shape != (self.n, self.n, self.n):
            raise ValueError(f"gauge value must have shape ({self.n},{self.n},{self.n}), "
                             f"got {self.a_mu.shape}")

    def skew_residual(self) -> float:
        """max |A + A^T| across directions; 0.0 for decoded values."""
        return float(np.abs(self.a_mu + np.swapaxes(self.a_mu, -1, -2)).max())


def bracket(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Matrix commutator [x, y] = xy - yx."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ValueError(f"bracket needs two square matrices of equal shape, got {x.shape} and {y.shape}")
    return x @ y - y @ x


def decode_gauge_output(basis, raw: np.ndarray) -> GaugeFieldValue:
    """Decode a flat gauge-network output into N skew matrices.

    The layout is direction-major: block mu (length n(n-1)/2) holds the basis
    coefficients of the matrix for base direction mu. This layout is frozen;
    checkpoints depend on it.
    """
    if isinstance(basis, int):
        basis = SkewBasis(basis)
    raw = np.asarray(raw, dtype=np.float64)
    expected = basis.n * basis.dim_g
    if raw.shape != (expected,):
        raise ValueError(f"gauge output must be a flat vector of length {expected}, got shape {raw.shape}")
    coeffs = raw.reshape(basis.n, basis.dim_g)
    return GaugeFieldValue(basis.n, basis.from_coefficients(coeffs))


def contract_direction(a: GaugeFieldValue, d: np.ndarray) -> np.ndarray:
    """Einstein contraction sum_mu d^mu A_mu; the result is exactly skew.

    Contraction happens on upper-triangle coefficients, and the skew matrix
    is rebuilt from them, so the bitwise skewness guarantee survives.
    """
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (a.n,):
        raise ValueError(f"direction must have length {a.n}, got shape {d.shape}")
    basis = SkewBasis(a.n)
    upper = a.a_mu[:, basis.rows, basis.cols]   # (n, dim_g)
    return basis.from_coefficients(d @ upper)


def apply_fiber(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Act on a fiber vector: m @ v."""
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] != v.shape[-1]:
        raise ValueError(f"cannot apply {m.shape} matrix to vector of shape {v.shape}")
    return m @ v


def _field_matrices(a_field, x: np.ndarray) -> np.ndarray:
    out = a_field(x)
    if isinstance(out, GaugeFieldValue):
        return out.a_mu
    return np.asarray(out, dtype=np.float64)


def gauge_transform_at(a_field, g_field, x: np.ndarray, h: float = 1e-4) -> GaugeFieldValue:
    """Transformed field g^-1 A g + g^-1 dg at x, with dg by central differences.

    g_field must return special-orthogonal matrices; the inverse is taken as
    the transpose. Diagnostic only: results are skew up to the O(h^2)
    truncation of the derivative term.
    """
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    g = np.asarray(g_field(x), dtype=np.float64)
    ortho_err = np.abs(g.T @ g - np.eye(n)).max()
    if ortho_err > 1e-8:
        raise ValueError(f"gauge function is not orthogonal at x (|g^T g - I| = {ortho_err:.3g})")
    a = _field_matrices(a_field, x)
    out = np.empty_like(a)
    for mu in range(n):
        step = np.zeros(n)
        step[mu] = h
        dg = (np.asarray(g_field(x + step), dtype=np.float64)
              - np.asarray(g_field(x - step), dtype=np.float64)) / (2.0 * h)
        out[mu] = g.T @ a[mu] @ g + g.T @ dg
    return GaugeFieldValue(n, out)


def field_strength_at(a_field, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Curvature F_munu = d_mu A_nu - d_nu A_mu + [A_mu, A_nu] at x.

    Derivatives by central differences of the field evaluator. Returns an
    (n, n, n, n) array antisymmetric in its first two indices. Diagnostic
    only.
    """
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    a = _field_matrices(a_field, x)
    deriv = np.empty((n, n, n, n))  # deriv[mu, nu] = d_mu A_nu
    for mu in range(n):
        step = np.zeros(n)
        step[mu] = h
        deriv[mu] = (_field_matrices(a_field, x + step)
                     - _field_matrices(a_field, x - step)) / (2.0 * h)
    f = np.zeros((n, n, n, n))
    for mu in range(n):
        for nu in range(mu + 1, n):
            f[mu, nu] = deriv[mu, nu] - deriv[nu, mu] + bracket(a[mu], a[nu])
            f[nu, mu] = -f[mu, nu]
    return f
