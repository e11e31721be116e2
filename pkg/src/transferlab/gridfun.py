"""Grid functions on model intervals and the norms used by the operator theory.

Functions are sampled on the per-interval uniform grids (grid_size cells,
endpoints included) and stored as one stacked array of shape
(n_intervals, grid_size + 1).  The Hoelder seminorm estimator restricts to
pairs at dyadic separations, which keeps it O(N log N) and monotone under
dyadic grid refinement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .markov import MarkovModel, ModelError


@dataclass
class GridFunction:
    """Samples of a scalar (real or complex) function on all interval grids."""

    model: MarkovModel
    values: np.ndarray  # shape (n_intervals, grid_size + 1)

    def __post_init__(self):
        k = len(self.model.intervals)
        n = self.model.grid_size + 1
        self.values = np.asarray(self.values)
        if self.values.shape != (k, n):
            raise ModelError(f"expected shape {(k, n)}, got {self.values.shape}")

    # construction ---------------------------------------------------------

    @staticmethod
    def from_callable(model: MarkovModel, fn) -> "GridFunction":
        rows = [np.asarray(fn(model.grid(iv.id))) for iv in model.intervals]
        return GridFunction(model, np.stack(rows))

    @staticmethod
    def constant(model: MarkovModel, c) -> "GridFunction":
        shape = (len(model.intervals), model.grid_size + 1)
        return GridFunction(model, np.full(shape, c))

    def copy(self) -> "GridFunction":
        return GridFunction(self.model, self.values.copy())

    def row(self, iid: str) -> np.ndarray:
        return self.values[self.model.interval(iid).index]

    # pointwise algebra ----------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, GridFunction):
            return other.values
        return other

    def __add__(self, other):
        return GridFunction(self.model, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.model, self.values - self._coerce(other))

    def __mul__(self, other):
        return GridFunction(self.model, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GridFunction(self.model, self.values / self._coerce(other))

    def __abs__(self):
        return GridFunction(self.model, np.abs(self.values))

    def conj(self):
        return GridFunction(self.model, np.conj(self.values))

    # evaluation -----------------------------------------------------------

    def at(self, x):
        """Linear interpolation at arbitrary leaf coordinates (vectorized)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n = self.model.grid_size
        idx = np.clip(np.floor(x).astype(int), 0, len(self.model.intervals) - 1)
        local = np.clip((x - idx) * n, 0.0, float(n))
        j = np.minimum(local.astype(int), n - 1)
        frac = local - j
        v = self.values
        return v[idx, j] * (1.0 - frac) + v[idx, j + 1] * frac


def c0_norm(u: GridFunction) -> float:
    return float(np.max(np.abs(u.values)))


def holder_seminorm(u: GridFunction, theta: float | None = None) -> float:
    """sup |u(x)-u(y)| / |x-y|^theta over dyadic-separation pairs per interval."""
    theta = u.model.theta if theta is None else theta
    n = u.model.grid_size
    best = 0.0
    for row in u.values:
        lag = n
        while lag >= 1:
            h = lag / n
            diff = np.max(np.abs(row[lag:] - row[:-lag]))
            best = max(best, diff / h ** theta)
            lag //= 2
    return float(best)


def norm_theta_b(u: GridFunction, b: float, theta: float | None = None) -> float:
    """max(C0 norm, |b|^{-1} theta-seminorm); b-weighted Hoelder norm."""
    if b == 0:
        raise ModelError("norm_theta_b requires b != 0")
    return max(c0_norm(u), holder_seminorm(u, theta) / abs(b))


def oscillation(u: GridFunction, iid: str, a: float, b: float) -> float:
    """max - min of (real) u over the sample points inside [a, b] of U_iid."""
    xs = u.model.grid(iid)
    mask = (xs >= a - 1e-12) & (xs <= b + 1e-12)
    if not mask.any():
        raise ModelError("oscillation window contains no sample points")
    vals = u.row(iid)[mask]
    if np.iscomplexobj(vals):
        raise ModelError("oscillation is defined for real grid functions")
    return float(vals.max() - vals.min())


# ---------------------------------------------------------------------------
# discrete minimax polynomial approximation (exchange algorithm)
# ---------------------------------------------------------------------------

@dataclass
class PolyDistanceReport:
    degree: int
    error: float
    coeffs: np.ndarray            # ascending powers
    reference: np.ndarray         # K+2 equioscillation abscissae
    residuals: np.ndarray         # residual values at the reference
    equioscillation_gap: float    # max|r| - |levelled h| at convergence


def minimax_poly(xs: np.ndarray, ys: np.ndarray, degree: int,
                 tol: float = 1e-12, max_iter: int = 200) -> PolyDistanceReport:
    """Best uniform polynomial approximation on a finite point set.

    Single-point exchange on the discrete set; returns the levelled reference
    of degree+2 points with alternating residual signs as the optimality
    certificate.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    m = degree + 2
    if xs.ndim != 1 or xs.size < m:
        raise ModelError(f"need at least {m} sample points, got {xs.size}")
    if np.any(np.diff(xs) <= 0):
        order = np.argsort(xs)
        xs, ys = xs[order], ys[order]
    scale = max(1.0, float(np.max(np.abs(ys))))

    # start from Chebyshev-like spread of indices
    t = (np.cos(np.pi * np.arange(m)[::-1] / (m - 1)) + 1) / 2
    ref = np.unique(np.round(t * (xs.size - 1)).astype(int))
    while ref.size < m:  # degenerate rounding on tiny grids
        pool = np.setdiff1d(np.arange(xs.size), ref)
        ref = np.sort(np.append(ref, pool[0]))

    coeffs = np.zeros(degree + 1)
    h = 0.0
    for _ in range(max_iter):
        # solve p(x_i) + (-1)^i h = y_i on the reference
        vand = np.vander(xs[ref], degree + 1, increasing=True)
        signs = (-1.0) ** np.arange(m)
        sys_mat = np.column_stack([vand, signs])
        sol = np.linalg.solve(sys_mat, ys[ref])
        coeffs, h = sol[:-1], sol[-1]
        resid = ys - np.polynomial.polynomial.polyval(xs, coeffs)
        worst = int(np.argmax(np.abs(resid)))
        if np.abs(resid[worst]) - abs(h) <= tol * scale:
            break
        # exchange: insert the worst point, keep alternation
        pos = int(np.searchsorted(ref, worst))
        if pos > 0 and ref[pos - 1] == worst:
            break
        if pos < m and pos < ref.size and ref[pos] == worst:
            break
        same_sign = np.sign(resid[worst])
        if pos == 0:
            if np.sign(resid[ref[0]]) == same_sign:
                ref[0] = worst
            else:
                ref = np.sort(np.append(ref[:-1], worst))
        elif pos >= m:
            if np.sign(resid[ref[-1]]) == same_sign:
                ref[-1] = worst
            else:
                ref = np.sort(np.append(ref[1:], worst))
        else:
            left = ref[pos - 1]
            if np.sign(resid[left]) == same_sign:
                ref[pos - 1] = worst
            else:
                ref[pos] = worst
        ref = np.sort(ref)

    resid = ys - np.polynomial.polynomial.polyval(xs, coeffs)
    err = float(np.max(np.abs(resid)))
    return PolyDistanceReport(
        degree=degree,
        error=err,
        coeffs=coeffs,
        reference=xs[ref],
        residuals=resid[ref],
        equioscillation_gap=float(err - abs(h)),
    )


def poly_distance(u: GridFunction, degree: int, iid: str,
                  a: float | None = None, b: float | None = None) -> PolyDistanceReport:
    """Minimax distance of real u to polynomials of degree <= K on a window."""
    xs = u.model.grid(iid)
    ys = u.row(iid)
    if np.iscomplexobj(ys):
        raise ModelError("poly_distance is defined for real grid functions")
    iv = u.model.interval(iid)
    a = iv.left if a is None else a
    b = iv.right if b is None else b
    mask = (xs >= a - 1e-12) & (xs <= b + 1e-12)
    return minimax_poly(xs[mask], ys[mask], degree)


# ---------------------------------------------------------------------------
# quadrature against measure weights
# ---------------------------------------------------------------------------

def check_weights(model: MarkovModel, weights: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    shape = (len(model.intervals), model.grid_size + 1)
    if weights.shape != shape:
        raise ModelError(f"weights must have shape {shape}")
    if weights.min() < -1e-14:
        raise ModelError("weights must be nonnegative")
    total = float(weights.sum())
    if abs(total - 1.0) > tol:
        raise ModelError(f"weights must sum to 1, got {total!r}")
    return weights


def integrate(u: GridFunction, weights: np.ndarray):
    """sum of u against normalized sample weights."""
    w = check_weights(u.model, weights)
    return complex(np.sum(u.values * w)) if np.iscomplexobj(u.values) \
        else float(np.sum(u.values * w))


def l2_norm(u: GridFunction, weights: np.ndarray) -> float:
    w = check_weights(u.model, weights)
    return float(np.sqrt(np.sum(np.abs(u.values) ** 2 * w)))


def lebesgue_weights(model: MarkovModel) -> np.ndarray:
    """Trapezoid weights, uniform across intervals; sums to exactly 1."""
    k, n = len(model.intervals), model.grid_size
    w = np.full((k, n + 1), 1.0, dtype=float)
    w[:, 0] = 0.5
    w[:, -1] = 0.5
    return w / (k * n)


def interval_mass(model: MarkovModel, weights: np.ndarray, iid: str,
                  a: float, b: float) -> float:
    """Measure of [a, b] inside U_iid; boundary samples count half,
    straddled cells pro-rate linearly."""
    w = np.asarray(weights, dtype=float)[model.interval(iid).index]
    xs = model.grid(iid)
    n = model.grid_size
    iv = model.interval(iid)
    a = max(a, iv.left)
    b = min(b, iv.right)
    if b <= a:
        return 0.0
    # each cell j (samples j..j+1) carries half of each endpoint weight;
    # end samples have a single adjacent cell and contribute fully to it;
    # partial coverage pro-rates linearly inside the cell
    cell_mass = 0.5 * (w[:-1] + w[1:])
    cell_mass[0] += 0.5 * w[0]
    cell_mass[-1] += 0.5 * w[-1]
    prefix = np.concatenate(([0.0], np.cumsum(cell_mass)))

    def cum(t: float) -> float:
        t = min(max(t, 0.0), float(n))
        j = min(int(t), n - 1)
        return float(prefix[j] + (t - j) * cell_mass[j])

    lo = (a - iv.left) * n
    hi = (b - iv.left) * n
    return cum(hi) - cum(lo)
