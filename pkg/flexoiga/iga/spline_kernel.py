"""
Univariate B-spline and bivariate NURBS basis evaluation.

Provides open knot vectors, Cox-de Boor evaluation with first and second
derivatives, the rational (NURBS) quotient rule, Gauss-Legendre rules,
Bezier extraction operators and Boehm knot insertion.
"""

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from scipy.special import comb

from ..errors import InvalidArgumentError, OutOfDomainError

KNOT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Open (clamped) knot vector with its polynomial degree."""

    degree: int
    knots: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=np.float64)
        object.__setattr__(self, "knots", knots)
        p = self.degree
        if p < 1:
            raise InvalidArgumentError(f"degree must be >= 1, got {p}")
        if knots.ndim != 1 or np.any(np.diff(knots) < 0.0):
            raise InvalidArgumentError("knots must be a non-decreasing sequence")
        if len(knots) - p - 1 < p + 1:
            raise InvalidArgumentError(
                f"{len(knots)} knots give fewer than degree+1 basis functions"
            )
        if np.any(knots[:p + 1] != knots[0]) or np.any(knots[-p - 1:] != knots[-1]):
            raise InvalidArgumentError("knot vector is not open (clamped)")

    @property
    def n_basis(self) -> int:
        return len(self.knots) - self.degree - 1

    @property
    def domain(self) -> Tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    def find_span(self, xi: float) -> int:
        """Index s with knots[s] <= xi < knots[s+1]; the last span at the right end."""
        lo, hi = self.domain
        if xi < lo - KNOT_TOL or xi > hi + KNOT_TOL:
            raise OutOfDomainError(f"xi={xi} outside knot range [{lo}, {hi}]")
        n = self.n_basis
        if xi >= self.knots[n]:
            return n - 1
        span = int(np.searchsorted(self.knots, xi, side="right")) - 1
        return max(span, self.degree)

    def element_spans(self) -> List[int]:
        """Span indices of all nonzero knot intervals, left to right."""
        p = self.degree
        return [s for s in range(p, self.n_basis) if self.knots[s + 1] > self.knots[s]]

    def breaks(self) -> np.ndarray:
        return np.unique(self.knots)


@dataclass(frozen=True, eq=False)
class PatchBasisSpec:
    """Tensor-product basis definition: one knot vector per parametric direction."""

    kv_xi: KnotVector
    kv_eta: KnotVector

    @property
    def shape(self) -> Tuple[int, int]:
        return self.kv_xi.n_basis, self.kv_eta.n_basis

    @property
    def degrees(self) -> Tuple[int, int]:
        return self.kv_xi.degree, self.kv_eta.degree


@dataclass
class BasisEval:
    span_index: int
    values: np.ndarray
    d1: np.ndarray
    d2: np.ndarray


@dataclass
class NurbsBasis2D:
    """Rational basis on the local support of one parametric point.

    `indices` are flat control-point indices (xi fastest) of the
    (p+1)(q+1) functions that are nonzero at the point.
    """

    R: np.ndarray
    dR: np.ndarray
    d2R: np.ndarray
    weights: np.ndarray
    indices: np.ndarray


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class BezierExtraction:
    """Per-element operators C_e with N_e(xi) = C_e @ B(t), t in [0, 1]."""

    degree: int
    operators: np.ndarray
    spans: np.ndarray
    intervals: np.ndarray = field(repr=False)

    @property
    def n_elements(self) -> int:
        return len(self.operators)

    def first_function(self, element: int) -> int:
        return int(self.spans[element]) - self.degree

    def element_basis(self, element: int, t: np.ndarray, n_derivs: int = 2) -> np.ndarray:
        """Basis values and xi-derivatives on one element at local t in [0, 1].

        Returns an array (n_derivs+1, len(t), degree+1).
        """
        a, b = self.intervals[element]
        bern = bernstein_basis(t, self.degree, n_derivs)
        out = np.einsum("ij,knj->kni", self.operators[element], bern)
        for k in range(1, n_derivs + 1):
            out[k] /= (b - a) ** k
        return out


def make_open_knot_vector(degree: int, n_ctrl: int) -> KnotVector:
    """Open uniform knot vector on [0, 1] with n_ctrl basis functions."""
    if degree < 1:
        raise InvalidArgumentError(f"degree must be >= 1, got {degree}")
    if n_ctrl < degree + 1:
        raise InvalidArgumentError(
            f"n_ctrl={n_ctrl} is too small for degree {degree} (need >= {degree + 1})"
        )
    n_intervals = n_ctrl - degree
    interior = np.arange(1, n_intervals) / n_intervals
    knots = np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])
    return KnotVector(degree, knots)


def _ders_basis_funs(knots: np.ndarray, degree: int, span: int, xi: float, n: int) -> np.ndarray:
    """Nonzero basis functions and derivatives up to order n (Cox-de Boor)."""
    p = degree
    ndu = np.zeros((p + 1, p + 1))
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = xi - knots[span + 1 - j]
        right[j] = knots[span + j] - xi
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((n + 1, p + 1))
    ders[0] = ndu[:, p]
    n_eff = min(n, p)
    a = np.zeros((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, n_eff + 1):
            d = 0.0
            rk = r - k
            pk = p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1

    factor = p
    for k in range(1, n_eff + 1):
        ders[k] *= factor
        factor *= p - k
    return ders


def bspline_basis(kv: KnotVector, xi: float, n_derivs: int = 2) -> BasisEval:
    """Nonzero B-spline values and parametric derivatives at xi."""
    if not 0 <= n_derivs <= 2:
        raise InvalidArgumentError(f"n_derivs must be 0, 1 or 2, got {n_derivs}")
    span = kv.find_span(xi)
    lo, hi = kv.domain
    xi = min(max(xi, lo), hi)
    ders = _ders_basis_funs(kv.knots, kv.degree, span, xi, 2)
    zeros = np.zeros(kv.degree + 1)
    return BasisEval(
        span_index=span,
        values=ders[0],
        d1=ders[1] if n_derivs >= 1 else zeros,
        d2=ders[2] if n_derivs >= 2 else zeros,
    )


def rationalize(Nx: np.ndarray, Ny: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Apply the NURBS quotient rule to tensor-product univariate data.

    Nx: (3, npts, p+1) values/d1/d2 in xi; Ny: (3, npts, q+1) in eta;
    w: (q+1, p+1) local weights. Returns R (npts, n), dR (npts, n, 2) and
    d2R (npts, n, 3) ordered (xi xi, xi eta, eta eta), n = (p+1)(q+1) with
    xi fastest.
    """
    npts = Nx.shape[1]

    def prod(i, j):
        return (np.einsum("nb,na->nba", Ny[j], Nx[i]) * w).reshape(npts, -1)

    A = prod(0, 0)
    A_x, A_y = prod(1, 0), prod(0, 1)
    A_xx, A_xy, A_yy = prod(2, 0), prod(1, 1), prod(0, 2)

    W = A.sum(axis=1, keepdims=True)
    W_x, W_y = A_x.sum(axis=1, keepdims=True), A_y.sum(axis=1, keepdims=True)
    W_xx = A_xx.sum(axis=1, keepdims=True)
    W_xy = A_xy.sum(axis=1, keepdims=True)
    W_yy = A_yy.sum(axis=1, keepdims=True)

    R = A / W
    R_x = (A_x - R * W_x) / W
    R_y = (A_y - R * W_y) / W
    R_xx = (A_xx - 2.0 * R_x * W_x - R * W_xx) / W
    R_xy = (A_xy - R_x * W_y - R_y * W_x - R * W_xy) / W
    R_yy = (A_yy - 2.0 * R_y * W_y - R * W_yy) / W

    return R, np.stack([R_x, R_y], axis=-1), np.stack([R_xx, R_xy, R_yy], axis=-1)


def local_indices(spec: PatchBasisSpec, span_xi: int, span_eta: int) -> np.ndarray:
    """Flat control-point indices of the functions supported on a span pair."""
    p, q = spec.degrees
    n_xi = spec.kv_xi.n_basis
    ii = np.arange(span_xi - p, span_xi + 1)
    jj = np.arange(span_eta - q, span_eta + 1)
    return (jj[:, None] * n_xi + ii[None, :]).ravel()


def nurbs_basis_2d(spec: PatchBasisSpec, weights: np.ndarray, xi: float, eta: float,
                   n_derivs: int = 2) -> NurbsBasis2D:
    """Rational tensor-product basis with quotient-rule derivatives at (xi, eta).

    `weights` is the (n_eta, n_xi) grid of control weights.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if np.any(weights <= 0.0):
        raise InvalidArgumentError("NURBS weights must be strictly positive")
    bx = bspline_basis(spec.kv_xi, xi, n_derivs)
    by = bspline_basis(spec.kv_eta, eta, n_derivs)
    p, q = spec.degrees
    w_loc = weights[by.span_index - q:by.span_index + 1, bx.span_index - p:bx.span_index + 1]
    Nx = np.stack([bx.values, bx.d1, bx.d2])[:, None, :]
    Ny = np.stack([by.values, by.d1, by.d2])[:, None, :]
    R, dR, d2R = rationalize(Nx, Ny, w_loc)
    return NurbsBasis2D(
        R=R[0],
        dR=dR[0],
        d2R=d2R[0],
        weights=w_loc.ravel(),
        indices=local_indices(spec, bx.span_index, by.span_index),
    )


def gauss_rule(n: int) -> QuadratureRule:
    """Gauss-Legendre rule with n points on [-1, 1]."""
    if not 1 <= n <= 16:
        raise InvalidArgumentError(f"quadrature order must be in [1, 16], got {n}")
    points, weights = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(points=points, weights=weights)


def bernstein_basis(t, degree: int, n_derivs: int = 0) -> np.ndarray:
    """Bernstein polynomials on [0, 1] and their t-derivatives.

    Returns (n_derivs+1, len(t), degree+1).
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    out = np.zeros((n_derivs + 1, len(t), degree + 1))

    def plain(p):
        i = np.arange(p + 1)
        return comb(p, i)[None, :] * t[:, None] ** i * (1.0 - t[:, None]) ** (p - i)

    out[0] = plain(degree)
    if n_derivs >= 1 and degree >= 1:
        lower = np.pad(plain(degree - 1), ((0, 0), (1, 1)))
        out[1] = degree * (lower[:, :-1] - lower[:, 1:])
    if n_derivs >= 2 and degree >= 2:
        lower = np.pad(plain(degree - 2), ((0, 0), (2, 2)))
        out[2] = degree * (degree - 1) * (lower[:, :-2] - 2.0 * lower[:, 1:-1] + lower[:, 2:])
    return out


def bezier_extract(kv: KnotVector) -> BezierExtraction:
    """Element extraction operators mapping Bernstein to B-spline values."""
    knots = kv.knots
    p = kv.degree
    n_knots = len(knots)
    a, b = p, p + 1
    ops = [np.eye(p + 1)]
    while b + 1 < n_knots:
        cc = ops[-1]
        b0 = b
        while b + 1 < n_knots and knots[b] == knots[b + 1]:
            b += 1
        mult = b - b0 + 1
        if b + 1 < n_knots:
            cn = np.eye(p + 1)
            ops.append(cn)
        if mult < p:
            numer = knots[b] - knots[a]
            alphas = np.zeros(p - mult)
            for j in range(p, mult, -1):
                alphas[j - mult - 1] = numer / (knots[a + j] - knots[a])
            r = p - mult
            for j in range(r):
                save = r - j - 1
                s = mult + j
                for k in range(p, s, -1):
                    alpha = alphas[k - s - 1]
                    cc[:, k] = alpha * cc[:, k] + (1.0 - alpha) * cc[:, k - 1]
                if b + 1 < n_knots:
                    cn[save:j + save + 2, save] = cc[p - j - 1:p + 1, p]
        if b + 1 < n_knots:
            a = b
            b += 1

    spans = np.array(kv.element_spans(), dtype=int)
    intervals = np.stack([knots[spans], knots[spans + 1]], axis=1)
    return BezierExtraction(degree=p, operators=np.asarray(ops), spans=spans, intervals=intervals)


def insert_knot(kv: KnotVector, ctrl: np.ndarray, u: float) -> Tuple[KnotVector, np.ndarray]:
    """Insert one knot u (Boehm). `ctrl` is indexed by basis function on axis 0."""
    p = kv.degree
    knots = kv.knots
    lo, hi = kv.domain
    if not lo < u < hi:
        raise OutOfDomainError(f"cannot insert knot {u} outside ({lo}, {hi})")
    k = kv.find_span(u)
    s = int(np.sum(np.abs(knots - u) < KNOT_TOL))
    if s >= p:
        raise InvalidArgumentError(f"knot {u} already has multiplicity {s}")
    ctrl = np.asarray(ctrl, dtype=np.float64)
    n = kv.n_basis
    new = np.empty((n + 1,) + ctrl.shape[1:])
    new[:k - p + 1] = ctrl[:k - p + 1]
    for i in range(k - p + 1, k - s + 1):
        alpha = (u - knots[i]) / (knots[i + p] - knots[i])
        new[i] = alpha * ctrl[i] + (1.0 - alpha) * ctrl[i - 1]
    new[k - s + 1:] = ctrl[k - s:]
    return KnotVector(p, np.insert(knots, k + 1, u)), new


def midpoint_knots(kv: KnotVector) -> List[float]:
    """Midpoints of every nonzero knot span, used for uniform refinement."""
    br = kv.breaks()
    return list(0.5 * (br[:-1] + br[1:]))


def refine_knot_vector(kv: KnotVector, ctrl: np.ndarray, levels: int) -> Tuple[KnotVector, np.ndarray]:
    """Uniform h-refinement: each level halves every span."""
    for _ in range(levels):
        for u in midpoint_knots(kv):
            kv, ctrl = insert_knot(kv, ctrl, u)
    return kv, ctrl
