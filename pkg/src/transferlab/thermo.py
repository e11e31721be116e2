"""Thermodynamic formalism: weighted transfer operators and equilibrium data.

The operator with weight w acts on grid functions by

    (L_w u)(z) = sum over inverse branches v of  exp(w(v z)) u(v z),

with u read off by linear interpolation at the branch preimages.  Weights are
*recipes*, not bare samples: a closed-form part evaluated exactly at the
preimages, grid parts interpolated there, a constant, and an optional part
evaluated at the output point z itself.  Normalized potentials keep their
log-eigenfunction corrections in recipe form, so identities like L 1 = 1 and
the unit fiber sums hold to the eigensolver residual rather than to
interpolation accuracy.

Eigendata comes from power iteration with a projective (ratio-oscillation)
stopping rule; left eigen-weights from iterating the adjoint push-forward of
weighted point masses on grid cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gridfun import GridFunction, check_weights, interval_mass
from .markov import MarkovModel, ModelError

RATIO_TOL = 1e-12
POWER_CAP = 10_000
ADJOINT_TOL = 1e-14
A_MAX_DEFAULT = 0.05


# ---------------------------------------------------------------------------
# stencils: fixed interpolation data for every branch instance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Stencil:
    sym: str
    domain_idx: int   # interval row of the operator output (arguments z)
    target_idx: int   # interval row holding the preimages v(z)
    y: np.ndarray     # preimage coordinates, length N+1
    j: np.ndarray     # lower sample index of y in the target row
    frac: np.ndarray  # interpolation fraction in [0, 1)


def build_stencils(model: MarkovModel) -> tuple[Stencil, ...]:
    n = model.grid_size
    out = []
    for br in model.branches:
        dom = model.interval(br.domain)
        tgt = model.interval(br.target)
        y = br(model.grid(br.domain))
        local = np.clip((y - tgt.left) * n, 0.0, float(n))
        j = np.minimum(local.astype(int), n - 1)
        frac = local - j
        out.append(Stencil(br.sym, dom.index, tgt.index, y, j, frac))
    return tuple(out)


def gather(values: np.ndarray, st: Stencil) -> np.ndarray:
    """Linear interpolation of stacked grid values at the stencil preimages."""
    row = values[st.target_idx]
    return row[st.j] * (1.0 - st.frac) + row[st.j + 1] * st.frac


def forward_index(model: MarkovModel) -> tuple[np.ndarray, np.ndarray]:
    """(rows, cols) such that g(sigma x) = values[rows, cols] on the grid.

    Exact for the built-in integer-slope families; raises if an orbit point
    falls off the grid.
    """
    n = model.grid_size
    rows = np.empty((len(model.intervals), n + 1), dtype=int)
    cols = np.empty_like(rows)
    for iv in model.intervals:
        img = model.forward(model.grid(iv.id))
        r = np.clip(np.floor(img).astype(int), 0, len(model.intervals) - 1)
        ongrid = (img - np.array([model.intervals[k].left for k in r])) * n
        c = np.round(ongrid).astype(int)
        if np.max(np.abs(ongrid - c)) > 1e-9:
            raise ModelError("forward orbit of a grid point left the grid")
        rows[iv.index], cols[iv.index] = r, c
    return rows, cols


# ---------------------------------------------------------------------------
# weight recipes and operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightRecipe:
    """weight = exp(closed parts at y + grid parts at y + const + out parts
    at z) * prod(factor parts at y) * prod(out_factor parts at z).

    Factor parts are positive grid arrays interpolated in linear space and
    raised to an integer power.  Eigenfunction corrections ride here: the
    correction then cancels against the eigensolver's own interpolation
    sample-for-sample, so normalized fiber sums inherit the solver residual
    instead of an interpolation bias.
    """

    closed: tuple = ()            # callables on leaf coordinates
    grids: tuple = ()             # stacked log arrays (K, N+1), interp at y
    const: float = 0.0
    out: tuple = ()               # stacked log arrays (K, N+1), added at z
    factors: tuple = ()           # (array, power) pairs, interpolated at y
    out_factors: tuple = ()       # (array, power) pairs, evaluated at z

    def plus(self, *, closed=(), grids=(), const=0.0, out=(),
             factors=(), out_factors=()) -> "WeightRecipe":
        return WeightRecipe(self.closed + tuple(closed),
                            self.grids + tuple(grids),
                            self.const + const,
                            self.out + tuple(out),
                            self.factors + tuple(factors),
                            self.out_factors + tuple(out_factors))

    def log_at_stencil(self, st: Stencil) -> np.ndarray:
        acc = np.full(st.y.shape, self.const)
        for fn in self.closed:
            acc = acc + np.asarray(fn(st.y))
        for g in self.grids:
            acc = acc + gather(np.asarray(g), st)
        for g, p in self.factors:
            acc = acc + p * np.log(gather(np.asarray(g), st))
        return acc

    def coef_at_stencil(self, st: Stencil) -> np.ndarray:
        acc = np.full(st.y.shape, self.const)
        for fn in self.closed:
            acc = acc + np.asarray(fn(st.y))
        for g in self.grids:
            acc = acc + gather(np.asarray(g), st)
        coef = np.exp(acc)
        for g, p in self.factors:
            coef = coef * gather(np.asarray(g), st) ** p
        return coef

    def out_factor(self, shape) -> np.ndarray | None:
        if not self.out and not self.out_factors:
            return None
        acc = np.zeros(shape)
        for g in self.out:
            acc = acc + np.asarray(g)
        fac = np.exp(acc)
        for g, p in self.out_factors:
            fac = fac * np.asarray(g) ** p
        return fac

    def sample(self, model: MarkovModel) -> np.ndarray:
        """Total log-weight sampled on the grid, with the output parts read
        at the exact forward image of each sample.  Used for reporting and
        smoothing."""
        vals = np.zeros((len(model.intervals), model.grid_size + 1))
        for iv in model.intervals:
            xs = model.grid(iv.id)
            acc = np.full(xs.shape, self.const)
            for fn in self.closed:
                acc = acc + np.asarray(fn(xs))
            for g in self.grids:
                acc = acc + np.asarray(g)[iv.index]
            for g, p in self.factors:
                acc = acc + p * np.log(np.asarray(g)[iv.index])
            vals[iv.index] = acc
        if self.out or self.out_factors:
            rows, cols = forward_index(model)
            extra = np.zeros_like(vals)
            for g in self.out:
                extra = extra + np.asarray(g)
            for g, p in self.out_factors:
                extra = extra + p * np.log(np.asarray(g))
            vals = vals + extra[rows, cols]
        return vals


@dataclass
class TransferOperator:
    """Concrete weighted operator with precomputed stencil coefficients."""

    model: MarkovModel
    stencils: tuple[Stencil, ...]
    coefs: tuple[np.ndarray, ...]      # exp(log-weight at y), real or complex
    out_factor: np.ndarray | None      # exp(out part at z), real positive

    def __call__(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values)
        dtype = np.result_type(values.dtype, *(c.dtype for c in self.coefs))
        out = np.zeros(values.shape, dtype=dtype)
        for st, coef in zip(self.stencils, self.coefs):
            out[st.domain_idx] += coef * gather(values, st)
        if self.out_factor is not None:
            out = out * self.out_factor
        return out

    def apply_gf(self, u: GridFunction) -> GridFunction:
        return GridFunction(self.model, self(u.values))

    def adjoint(self, w: np.ndarray) -> np.ndarray:
        """Push-forward of weighted point masses at grid cells (no transpose
        materialized): mass at z scatters to the interpolation cells of each
        of its preimages."""
        w = np.asarray(w, dtype=float)
        n = self.model.grid_size
        out = np.zeros_like(w)
        src = w if self.out_factor is None else w * self.out_factor
        for st, coef in zip(self.stencils, self.coefs):
            mass = src[st.domain_idx] * coef
            out[st.target_idx] += np.bincount(st.j, mass * (1.0 - st.frac),
                                              minlength=n + 1)
            out[st.target_idx] += np.bincount(st.j + 1, mass * st.frac,
                                              minlength=n + 1)
        return out


def make_operator(model: MarkovModel, recipe: WeightRecipe,
                  phase: float = 0.0) -> TransferOperator:
    """Build L with the recipe's real weight and optional phase exp(i b tau),
    the roof entering the phase unsmoothed and in closed form."""
    stencils = _stencils_of(model)
    coefs = []
    for st in stencils:
        coef = recipe.coef_at_stencil(st)
        if phase != 0.0:
            coef = coef * np.exp(1j * phase * np.asarray(model.roof(st.y)))
        coefs.append(coef)
    shape = (len(model.intervals), model.grid_size + 1)
    return TransferOperator(model, stencils, tuple(coefs),
                            recipe.out_factor(shape))


def make_operator_grid_phase(model: MarkovModel, recipe: WeightRecipe,
                             b: float, tau_grid: np.ndarray) -> TransferOperator:
    """Like make_operator but with phase b * (grid roof), interpolated;
    used for checks that need a smoothed roof in the phase."""
    stencils = _stencils_of(model)
    coefs = []
    for st in stencils:
        coef = recipe.coef_at_stencil(st)
        coefs.append(coef * np.exp(1j * b * gather(np.asarray(tau_grid), st)))
    shape = (len(model.intervals), model.grid_size + 1)
    return TransferOperator(model, stencils, tuple(coefs),
                            recipe.out_factor(shape))


_stencil_cache: dict = {}


def _stencils_of(model: MarkovModel) -> tuple[Stencil, ...]:
    key = model.config
    if key not in _stencil_cache:
        _stencil_cache[key] = build_stencils(model)
    return _stencil_cache[key]


# ---------------------------------------------------------------------------
# eigendata
# ---------------------------------------------------------------------------

@dataclass
class EigenData:
    a: float
    value: float               # leading eigenvalue E_a
    rho: np.ndarray            # right eigenfunction, positive
    weights: np.ndarray | None # left eigen-weights (sum 1), when computed
    residual: float            # sup |L rho - E rho| / sup rho
    iterations: int


class ConvergenceError(RuntimeError):
    pass


def power_iteration(op: TransferOperator, tol: float = RATIO_TOL,
                    cap: int = POWER_CAP) -> tuple[float, np.ndarray, int]:
    """Leading (simple, positive) eigen-pair by projective iteration.

    Stops when the pointwise ratio field L u / u has relative oscillation
    below tol; the projective metric contracts geometrically for the
    positive weights used here.
    """
    u = np.ones((len(op.model.intervals), op.model.grid_size + 1))
    its = 0
    for its in range(1, cap + 1):
        v = op(u)
        if np.iscomplexobj(v):
            raise ModelError("power iteration needs a positive operator")
        ratio = v / u
        rmin, rmax = float(ratio.min()), float(ratio.max())
        if rmin <= 0:
            raise ConvergenceError("operator lost positivity")
        u = v / rmax
        if (rmax - rmin) / rmin < tol:
            break
    else:
        raise ConvergenceError(f"no convergence after {cap} iterations")
    v = op(u)
    value = float(v.sum() / u.sum())
    return value, u / u.max(), its


def adjoint_weights(op: TransferOperator, value: float,
                    tol: float = ADJOINT_TOL, cap: int = POWER_CAP) -> np.ndarray:
    """Fixed point of the adjoint action scaled by the eigenvalue; sums to 1."""
    shape = (len(op.model.intervals), op.model.grid_size + 1)
    w = np.full(shape, 1.0 / (shape[0] * shape[1]))
    for _ in range(cap):
        nxt = op.adjoint(w) / value
        nxt /= nxt.sum()
        delta = float(np.abs(nxt - w).sum())
        w = nxt
        if delta < tol:
            return w
    raise ConvergenceError(f"adjoint iteration stalled above tol={tol}")


# ---------------------------------------------------------------------------
# normalized potentials, Gibbs measure
# ---------------------------------------------------------------------------

@dataclass
class BaseSystem:
    """Zero-pressure normalization of the model potential."""

    model: MarkovModel
    value: float                 # eigenvalue of the raw weighted operator
    rho: np.ndarray              # its right eigenfunction
    fhat: WeightRecipe           # normalized potential recipe
    fhat_grid: np.ndarray        # f-hat sampled on the grid (has slice jumps)
    nu: np.ndarray               # Gibbs weights: adjoint fixed point of M
    fiber_defect: float          # sup |M 1 - 1|
    iterations: int


@dataclass
class NormalizedPotential:
    a: float
    value: float                 # E_a
    rho: np.ndarray              # rho_a, normalized to unit nu-integral
    recipe: WeightRecipe         # f^(a)
    residual: float


_system_cache: dict = {}


def base_system(model: MarkovModel) -> BaseSystem:
    key = model.config
    if key in _system_cache:
        return _system_cache[key]
    raw = WeightRecipe(closed=(model.potential,))
    op0 = make_operator(model, raw)
    value, rho, its = power_iteration(op0)
    fhat = raw.plus(const=-math.log(value), factors=((rho, 1),),
                    out_factors=((rho, -1),))
    m_op = make_operator(model, fhat)
    ones = np.ones_like(rho)
    fiber_defect = float(np.max(np.abs(m_op(ones) - 1.0)))
    nu = adjoint_weights(m_op, 1.0)
    sys = BaseSystem(model, value, rho, fhat, fhat.sample(model), nu,
                     fiber_defect, its)
    _system_cache[key] = sys
    return sys


def gibbs_measure(model: MarkovModel) -> np.ndarray:
    """Equilibrium weights nu_U for the model potential (sum to 1)."""
    return base_system(model).nu


def leading_eigendata(model: MarkovModel, a: float,
                      a_max: float = A_MAX_DEFAULT,
                      with_weights: bool = False) -> EigenData:
    """Eigendata of the operator weighted by f-hat + a tau."""
    if abs(a) > a_max:
        raise ModelError(f"|a| = {abs(a)} exceeds a_max = {a_max}")
    sys = base_system(model)
    recipe = sys.fhat.plus(closed=((lambda x, _a=a: _a * np.asarray(model.roof(x))),)) \
        if a != 0.0 else sys.fhat
    op = make_operator(model, recipe)
    value, rho, its = power_iteration(op)
    scale = float(np.sum(rho * sys.nu))
    rho = rho / scale
    resid = float(np.max(np.abs(op(rho) - value * rho)) / np.max(rho))
    weights = adjoint_weights(op, value) if with_weights else None
    return EigenData(a, value, rho, weights, resid, its)


def normalize_potential(model: MarkovModel, a: float,
                        a_max: float = A_MAX_DEFAULT) -> NormalizedPotential:
    """f^(a): the a-tilted potential normalized so its operator fixes 1."""
    key = (model.config, "norm", a)
    if key in _system_cache:
        return _system_cache[key]
    sys = base_system(model)
    eig = leading_eigendata(model, a, a_max)
    recipe = sys.fhat.plus(
        closed=((lambda x, _a=a: _a * np.asarray(model.roof(x))),) if a else (),
        const=-math.log(eig.value),
        factors=((eig.rho, 1),),
        out_factors=((eig.rho, -1),),
    )
    out = NormalizedPotential(a, eig.value, eig.rho, recipe, eig.residual)
    _system_cache[key] = out
    return out


def transfer_real(model: MarkovModel, a: float) -> TransferOperator:
    """L_{a,0}: normalized real operator, fixes the constant function 1."""
    return make_operator(model, normalize_potential(model, a).recipe)


def transfer_complex(model: MarkovModel, a: float, b: float) -> TransferOperator:
    """L_{a,b}: weight f^(a), phase exp(i b tau) with the exact roof."""
    return make_operator(model, normalize_potential(model, a).recipe, phase=b)


def pressure(model: MarkovModel, weight=None) -> float:
    """Topological pressure of the given raw weight (default: the model
    potential): log of the leading eigenvalue."""
    if weight is None:
        return float(math.log(base_system(model).value))
    if isinstance(weight, WeightRecipe):
        recipe = weight
    elif isinstance(weight, GridFunction):
        recipe = WeightRecipe(grids=(weight.values,))
    elif isinstance(weight, np.ndarray):
        recipe = WeightRecipe(grids=(weight,))
    elif callable(weight):
        recipe = WeightRecipe(closed=(weight,))
    else:
        raise ModelError(f"unsupported weight type {type(weight)!r}")
    value, _, _ = power_iteration(make_operator(model, recipe))
    return float(math.log(value))


# ---------------------------------------------------------------------------
# Gibbs-measure diagnostics
# ---------------------------------------------------------------------------

def invariance_defect(model: MarkovModel, fn) -> float:
    """|integral fn(sigma x) - integral fn| under the Gibbs weights, with fn
    composed through the exact forward map."""
    nu = gibbs_measure(model)
    direct = 0.0
    pushed = 0.0
    for iv in model.intervals:
        xs = model.grid(iv.id)
        w = nu[iv.index]
        direct += float(np.sum(w * np.asarray(fn(xs))))
        pushed += float(np.sum(w * np.asarray(fn(model.forward(xs)))))
    return abs(pushed - direct)


def fractional_moment(model: MarkovModel, gamma0: float, n: int) -> float:
    """integral of (det cocycle over n steps)^gamma0 against the Gibbs weights."""
    if not 0.0 < gamma0 <= 1.0:
        raise ModelError("gamma0 must lie in (0, 1]")
    nu = gibbs_measure(model)
    total = 0.0
    for iv in model.intervals:
        xs = model.grid(iv.id)
        dets = model.det_cocycle(xs, n)
        total += float(np.sum(nu[iv.index] * dets ** gamma0))
    return total


def moment_submultiplicativity(model: MarkovModel, gamma0: float,
                               n: int) -> tuple[float, float, float]:
    """(M_n, M_2n, C) with the smallest C achieving M_2n <= (C M_n)^2."""
    m_n = fractional_moment(model, gamma0, n)
    m_2n = fractional_moment(model, gamma0, 2 * n)
    return m_n, m_2n, math.sqrt(m_2n) / m_n


def is_non_expanding(model: MarkovModel) -> tuple[bool, float]:
    """Whether integral log det <= 0 under the Gibbs weights."""
    nu = gibbs_measure(model)
    total = 0.0
    for iv in model.intervals:
        xs = model.grid(iv.id)
        total += float(np.sum(nu[iv.index] * np.log(model.det_step(xs))))
    return total <= 1e-10, total


def doubling_constant(model: MarkovModel, weights: np.ndarray,
                      radii=(1 / 8, 1 / 16, 1 / 32), samples: int = 64) -> float:
    """min over interior balls of mass(B(x, r/2)) / mass(B(x, r))."""
    check_weights(model, weights)
    worst = 1.0
    for iv in model.intervals:
        for r in radii:
            centers = np.linspace(iv.left + r, iv.right - r, samples)
            for x in centers:
                big = interval_mass(model, weights, iv.id, x - r, x + r)
                small = interval_mass(model, weights, iv.id, x - r / 2, x + r / 2)
                if big > 0:
                    worst = min(worst, small / big)
    return worst


def induce_potential(model: MarkovModel, flow_fn, subsamples: int = 16) -> np.ndarray:
    """Pull a flow-space potential to the section: x -> integral of
    flow_fn(x, t) over t in [0, roof(x)], trapezoid rule per fiber."""
    out = np.zeros((len(model.intervals), model.grid_size + 1))
    for iv in model.intervals:
        xs = model.grid(iv.id)
        tau = np.asarray(model.roof(xs))
        ts = np.linspace(0.0, 1.0, subsamples + 1)
        vals = np.stack([np.asarray(flow_fn(xs, t * tau)) for t in ts])
        wts = np.full(subsamples + 1, 1.0 / subsamples)
        wts[0] = wts[-1] = 0.5 / subsamples
        out[iv.index] = tau * np.einsum("s,sn->n", wts, vals)
    return out
