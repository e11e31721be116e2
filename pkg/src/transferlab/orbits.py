"""Periodic orbits of the section map and suspension-flow statistics.

Closed orbits of the flow correspond to cyclic branch words: a word of
length n admissible under the transition structure, including the wrap
transition from its last symbol back to its first, pins exactly one fixed
point of the n-fold section map, and the roof summed along that finite
orbit is the flow period.  The module enumerates primitive orbits up to a
word length, counts them independently through the symbol transfer matrix
(necklace counting), locates the entropy as the zero of the pressure of
-s*roof, compares the orbit count pi(T) against li(e^{hT}), and estimates
flow correlation functions by seeded Monte Carlo on the suspension.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import bisect

from .markov import MarkovModel, ModelError
from .thermo import gibbs_measure, pressure

WORD_CAP_DEFAULT = 2 ** 21
FIXED_POINT_ITERATIONS = 200
ENTROPY_TOL = 1e-10


# ---------------------------------------------------------------------------
# symbol transfer matrix and necklace counting
# ---------------------------------------------------------------------------

def transfer_matrix(model: MarkovModel) -> tuple[tuple[int, ...], ...]:
    """0/1 matrix over the alphabet: entry (i, j) = 1 when symbol j may
    follow symbol i in a word."""
    alpha = model.alphabet
    rows = []
    for a in alpha:
        row = tuple(
            1 if (a, model.sym_target(b)) in model._by_sym_domain else 0
            for b in alpha)
        rows.append(row)
    return tuple(rows)


def _mat_mul(a, b):
    k = len(a)
    return tuple(
        tuple(sum(a[i][m] * b[m][j] for m in range(k)) for j in range(k))
        for i in range(k))


def fixed_word_count(model: MarkovModel, n: int) -> int:
    """Number of cyclic words of length n: trace of the n-th matrix power.

    Exact integer arithmetic; each cyclic word owns one fixed point of the
    n-fold section map.
    """
    if n < 1:
        raise ModelError("word length must be >= 1")
    mat = transfer_matrix(model)
    power = mat
    for _ in range(n - 1):
        power = _mat_mul(power, mat)
    return sum(power[i][i] for i in range(len(mat)))


def _divisors(n: int) -> list[int]:
    out = [d for d in range(1, n + 1) if n % d == 0]
    return out


def _mobius(n: int) -> int:
    if n == 1:
        return 1
    sign = 1
    d = 2
    while d * d <= n:
        if n % d == 0:
            n //= d
            if n % d == 0:
                return 0
            sign = -sign
        else:
            d += 1
    if n > 1:
        sign = -sign
    return sign


def necklace_counts(model: MarkovModel, n_max: int) -> tuple[int, ...]:
    """Primitive cyclic word classes per length 1..n_max, by Moebius
    inversion of the trace counts."""
    traces = {n: fixed_word_count(model, n) for n in range(1, n_max + 1)}
    out = []
    for n in range(1, n_max + 1):
        total = sum(_mobius(n // d) * traces[d] for d in _divisors(n))
        q, r = divmod(total, n)
        if r:
            raise ModelError(f"necklace count for n={n} not divisible by n")
        out.append(q)
    return tuple(out)


# ---------------------------------------------------------------------------
# orbit enumeration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeriodicOrbit:
    """Primitive closed orbit: lexicographically least rotation of its
    coding word, word length, and flow period (roof summed along the
    section orbit)."""

    word: str
    n: int
    period: float


def _admissible_words(model: MarkovModel, n: int) -> np.ndarray:
    """All admissible words of length n as rows of alphabet indices."""
    k = len(model.alphabet)
    trans = np.array(transfer_matrix(model), dtype=bool)
    rows = np.arange(k, dtype=np.int64)[:, None]
    for _ in range(n - 1):
        parts = []
        for j in range(k):
            ok = trans[rows[:, -1], j]
            if ok.any():
                block = rows[ok]
                col = np.full((block.shape[0], 1), j, dtype=np.int64)
                parts.append(np.hstack([block, col]))
        if not parts:
            return np.empty((0, n), dtype=np.int64)
        rows = np.vstack(parts)
    return rows


def _word_codes(words: np.ndarray, base: int) -> np.ndarray:
    n = words.shape[1]
    weights = base ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return words @ weights


def _canonical_codes(codes: np.ndarray, n: int, base: int):
    """Minimal rotation of each word code plus the rotation multiplicity
    structure (canonical code per word)."""
    canon = codes.copy()
    for k in range(1, n):
        split = base ** (n - k)
        rot = (codes % split) * (base ** k) + codes // split
        np.minimum(canon, rot, out=canon)
    return canon


def _decode(code: int, n: int, base: int, alphabet) -> str:
    digits = []
    for _ in range(n):
        code, d = divmod(code, base)
        digits.append(alphabet[d])
    return "".join(reversed(digits))


def _cyclic_affine(model: MarkovModel, words: np.ndarray):
    """Composite inverse-branch coefficients (contraction, offset) per
    cyclic word, and the left endpoint of the interval holding its fixed
    point."""
    k = len(model.alphabet)
    slope = np.full((k, k), np.nan)
    offset = np.full((k, k), np.nan)
    for i, a in enumerate(model.alphabet):
        for j, b in enumerate(model.alphabet):
            inst = model._by_sym_domain.get((a, model.sym_target(b)))
            if inst is not None:
                slope[i, j] = inst.slope
                offset[i, j] = inst.offset
    n = words.shape[1]
    contr = np.ones(words.shape[0])
    off = np.zeros(words.shape[0])
    # innermost branch instance first: position i pairs with the symbol at
    # position i+1 (cyclically) as its domain
    for i in range(n - 1, -1, -1):
        s = slope[words[:, i], words[:, (i + 1) % n]]
        t = offset[words[:, i], words[:, (i + 1) % n]]
        contr /= s
        off = off / s + t
    lefts = np.array([model.interval(model.sym_target(a)).left
                      for a in model.alphabet])
    return contr, off, lefts[words[:, 0]]


def orbit_fixed_point(model: MarkovModel, word: str) -> float:
    """Fixed point of the cyclic word by contraction iteration."""
    if not model.word_admissible(word + word[0]):
        raise ModelError(f"word {word!r} is not cyclically admissible")
    iv = model.interval(model.sym_target(word[0]))
    y = iv.left + 0.5
    for _ in range(FIXED_POINT_ITERATIONS):
        y = model.apply_word(word, y)
    return float(y)


def enumerate_periodic_orbits(model: MarkovModel, n_max: int,
                              cap: int = WORD_CAP_DEFAULT) -> list[PeriodicOrbit]:
    """All primitive closed orbits of word length <= n_max.

    One representative per rotation class; the flow period is obtained by
    summing the roof at the fixed points of all rotations of the word,
    which are exactly the points of the section orbit.
    """
    base = len(model.alphabet)
    if n_max >= 1 and base ** n_max > cap:
        raise ModelError(
            f"alphabet^{n_max} exceeds the enumeration cap {cap}")
    orbits: list[PeriodicOrbit] = []
    for n in range(1, n_max + 1):
        words = _admissible_words(model, n)
        if words.size == 0:
            continue
        wrap_ok = np.array(transfer_matrix(model), dtype=bool)[
            words[:, -1], words[:, 0]]
        words = words[wrap_ok]
        if words.size == 0:
            continue
        contr, off, lefts = _cyclic_affine(model, words)
        y = lefts + 0.5
        for _ in range(FIXED_POINT_ITERATIONS):
            y = contr * y + off
        tau = np.asarray(model.roof(y), dtype=float)
        codes = _word_codes(words, base)
        canon = _canonical_codes(codes, n, base)
        uniq, inverse, counts = np.unique(canon, return_inverse=True,
                                          return_counts=True)
        periods = np.bincount(inverse, weights=tau, minlength=uniq.size)
        # a primitive class has n distinct rotations; fewer means the word
        # is a power of a shorter one already listed
        for code, mult, period in zip(uniq, counts, periods):
            if int(mult) == n:
                orbits.append(PeriodicOrbit(
                    _decode(int(code), n, base, model.alphabet), n,
                    float(period)))
    return orbits


# ---------------------------------------------------------------------------
# entropy and the orbit-count comparison
# ---------------------------------------------------------------------------

_entropy_cache: dict = {}


def entropy(model: MarkovModel, tol: float = ENTROPY_TOL) -> float:
    """Unique s with pressure(-s * roof) = 0, by bisection."""
    key = (model.config, tol)
    if key in _entropy_cache:
        return _entropy_cache[key]
    roof = model.roof

    def pr(s: float) -> float:
        return pressure(model, lambda x, _s=s: -_s * np.asarray(roof(x)))

    p0 = pr(0.0)
    if p0 <= 0:
        raise ModelError("pressure at s=0 is nonpositive; no entropy root")
    hi = p0 / model.tau_0 + 1.0
    for _ in range(60):
        if pr(hi) < 0:
            break
        hi *= 2.0
    else:
        raise ModelError("failed to bracket the entropy root")
    h = float(bisect(pr, 0.0, hi, xtol=tol))
    _entropy_cache[key] = h
    return h


def li(y: float) -> float:
    """Offset logarithmic integral int_2^y du/log u; zero at or below 2."""
    if y <= 2.0:
        return 0.0
    val, _ = quad(lambda t: math.exp(t) / t, math.log(2.0), math.log(y),
                  limit=200)
    return float(val)


@dataclass(frozen=True)
class CountingReport:
    """pi(T) against li(e^{hT}) on a grid of periods."""

    t_grid: np.ndarray
    pi: np.ndarray
    li_values: np.ndarray
    c_hat: float | None          # slope of log|pi - li| where |diff| >= 1
    h: float
    complete: np.ndarray         # rows with T inside the enumeration window
    n_max: int

    @property
    def diff(self) -> np.ndarray:
        return self.pi - self.li_values


def prime_orbit_report(model: MarkovModel, n_max: int,
                       t_grid) -> CountingReport:
    """Count closed orbits by period and compare with li(e^{hT}).

    Rows with T > n_max * tau_0 may miss orbits of longer words and are
    flagged incomplete; the error-exponent fit uses complete rows with
    |pi - li| >= 1 (an integer count closer than one to its target is
    indistinguishable from rounding).
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ModelError("t_grid must be a nonempty 1-d array")
    orbits = enumerate_periodic_orbits(model, n_max)
    periods = np.sort(np.array([o.period for o in orbits]))
    h = entropy(model)
    pi = np.searchsorted(periods, t, side="right").astype(np.int64)
    li_vals = np.array([li(math.exp(h * ti)) for ti in t])
    complete = t <= n_max * model.tau_0 + 1e-12
    diff = pi - li_vals
    sel = complete & (np.abs(diff) >= 1.0)
    c_hat = None
    if sel.sum() >= 2 and np.ptp(t[sel]) > 0:
        c_hat = float(np.polyfit(t[sel], np.log(np.abs(diff[sel])), 1)[0])
    return CountingReport(t, pi, li_vals, c_hat, h, complete, n_max)


# ---------------------------------------------------------------------------
# Monte Carlo correlation on the suspension
# ---------------------------------------------------------------------------

def _as_observable(obs):
    """Accept a plain section function or a (section, fiber profile) pair."""
    if callable(obs):
        return obs, None
    sec, fib = obs
    if not callable(sec) or (fib is not None and not callable(fib)):
        raise ModelError("observable must be callable or a pair of callables")
    return sec, fib


def _eval_observable(sec, fib, x, u):
    vals = np.asarray(sec(x), dtype=float)
    if vals.shape != np.shape(x):
        vals = np.broadcast_to(vals, np.shape(x)).astype(float)
    if fib is not None:
        vals = vals * np.asarray(fib(u), dtype=float)
    return vals


def flow_average(model: MarkovModel, obs, fiber_order: int = 64) -> float:
    """Integral of the observable against the flow-invariant measure:
    section weights times the fiber average, normalized by the mean roof."""
    sec, fib = _as_observable(obs)
    nu = gibbs_measure(model)
    total = 0.0
    tau_bar = 0.0
    for iv in model.intervals:
        xs = model.grid(iv.id)
        w = nu[iv.index]
        tau = np.asarray(model.roof(xs), dtype=float)
        tau_bar += float(np.sum(w * tau))
        base = np.asarray(sec(xs), dtype=float)
        if fib is None:
            fiber = tau
        else:
            # midpoint rule along each fiber [0, tau(x))
            mids = (np.arange(fiber_order) + 0.5) / fiber_order
            uu = tau[:, None] * mids[None, :]
            fiber = np.asarray(fib(uu), dtype=float).mean(axis=1) * tau
        total += float(np.sum(w * base * fiber))
    return total / tau_bar


def covariance_at_zero(model: MarkovModel, a, b,
                       fiber_order: int = 64) -> float:
    """E[A B] - E[A] E[B] for same-point observables, by quadrature."""
    sa, fa = _as_observable(a)
    sb, fb = _as_observable(b)

    def sec_ab(x):
        return np.asarray(sa(x), dtype=float) * np.asarray(sb(x), dtype=float)

    if fa is None and fb is None:
        fib_ab = None
    else:
        def fib_ab(u):
            out = np.ones_like(np.asarray(u, dtype=float))
            if fa is not None:
                out = out * np.asarray(fa(u), dtype=float)
            if fb is not None:
                out = out * np.asarray(fb(u), dtype=float)
            return out

    mean_ab = flow_average(model, (sec_ab, fib_ab), fiber_order)
    return mean_ab - flow_average(model, a, fiber_order) * \
        flow_average(model, b, fiber_order)


def _section_sampler(model: MarkovModel):
    """Cumulative cell weights for drawing x from the size-biased section
    measure nu * tau / mean(tau)."""
    nu = gibbs_measure(model)
    lefts = []
    cells = []
    for iv in model.intervals:
        xs = model.grid(iv.id)
        p = nu[iv.index] * np.asarray(model.roof(xs), dtype=float)
        cells.append(0.5 * (p[:-1] + p[1:]))
        lefts.append(iv.left)
    flat = np.concatenate(cells)
    cum = np.cumsum(flat)
    lefts = np.asarray(lefts)
    return cum, lefts, model.grid_size


def _draw_section(cum, lefts, grid_size, rng, m):
    r = rng.random(m) * cum[-1]
    idx = np.searchsorted(cum, r, side="right")
    iv, cell = np.divmod(idx, grid_size)
    return lefts[iv] + (cell + rng.random(m)) / grid_size


def _advance(model: MarkovModel, x, u, dt):
    """Flow forward by dt, unwinding the roof crossings in place."""
    u = u + dt
    tau = np.asarray(model.roof(x), dtype=float)
    while True:
        over = u >= tau
        if not over.any():
            break
        u[over] -= tau[over]
        x[over] = model.forward(x[over])
        tau[over] = np.asarray(model.roof(x[over]), dtype=float)
    return x, u


@dataclass(frozen=True)
class DecayReport:
    """Monte Carlo flow correlations with an exponential-decay fit."""

    t_grid: np.ndarray
    corr: np.ndarray
    stderr: np.ndarray
    rate: float | None           # decay exponent; None when undefined
    rate_err: float | None
    r_squared: float | None
    used: np.ndarray             # rows entering the fit
    samples: int
    blocks: int
    seed: int


def _mc_block(model, sec_a, fib_a, sec_b, fib_b, t_sorted, m, child,
              sampler):
    rng = np.random.Generator(np.random.PCG64(child))
    cum, lefts, grid_size = sampler
    x = _draw_section(cum, lefts, grid_size, rng, m)
    u = rng.random(m) * np.asarray(model.roof(x), dtype=float)
    b0 = _eval_observable(sec_b, fib_b, x, u)
    b0 = b0 - b0.mean()
    out = np.empty(t_sorted.size)
    t_prev = 0.0
    for k, t in enumerate(t_sorted):
        x, u = _advance(model, x, u, t - t_prev)
        t_prev = t
        a_t = _eval_observable(sec_a, fib_a, x, u)
        out[k] = float(((a_t - a_t.mean()) * b0).mean())
    return out


def correlation_decay(model: MarkovModel, a, b, t_grid, samples: int,
                      seed: int = 0, blocks: int = 32,
                      threads: int = 1) -> DecayReport:
    """Correlation of two suspension observables along the flow.

    Initial points are drawn from the flow-invariant measure; the flow is
    advanced by unwinding the roof.  Per-block covariances with per-block
    centering are merged in block order, so the result depends only on the
    seed and block count, not on the thread schedule.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ModelError("t_grid must be a nonempty 1-d array")
    if (t < 0).any():
        raise ModelError("correlation times must be nonnegative")
    if samples < blocks:
        raise ModelError(f"need at least {blocks} samples (one per block)")
    order = np.argsort(t, kind="stable")
    t_sorted = t[order]
    sec_a, fib_a = _as_observable(a)
    sec_b, fib_b = _as_observable(b)
    sampler = _section_sampler(model)
    m = samples // blocks
    children = np.random.SeedSequence(seed).spawn(blocks)

    def run(child):
        return _mc_block(model, sec_a, fib_a, sec_b, fib_b, t_sorted, m,
                         child, sampler)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, children))
    else:
        rows = [run(c) for c in children]
    table = np.vstack(rows)
    corr_sorted = table.mean(axis=0)
    err_sorted = table.std(axis=0, ddof=1) / math.sqrt(blocks)
    corr = np.empty_like(corr_sorted)
    stderr = np.empty_like(err_sorted)
    corr[order] = corr_sorted
    stderr[order] = err_sorted

    used = np.abs(corr) > 2.0 * stderr
    rate = rate_err = r2 = None
    if used.sum() >= 3 and np.ptp(t[used]) > 0:
        logs = np.log(np.abs(corr[used]))
        coef, cov = np.polyfit(t[used], logs, 1, cov=True)
        rate = float(-coef[0])
        rate_err = float(math.sqrt(max(cov[0, 0], 0.0)))
        resid = logs - np.polyval(coef, t[used])
        ss_tot = float(np.sum((logs - logs.mean()) ** 2))
        r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 0.0
    return DecayReport(t, corr, stderr, rate, rate_err, r2, used,
                       m * blocks, blocks, seed)
