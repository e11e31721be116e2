"""Variable-scale expansion structure and oscillation scans.

Everything here is driven by one object: the matching scale of a model at
resolution eps.  At each point the stable cocycle is run forward until it
drops below eps; the number of steps taken is the stopping index and the
unstable expansion accumulated over those steps is the scale value.  The
checks in this module then measure, on the grid, the constants that the
scale is supposed to satisfy: a lower bound on the value in terms of eps,
a branch comparison along preimages, comparability on unstable
neighbourhoods, a Hoelder budget for normalized temporal-distance
profiles, and the oscillation certificate produced by `uni_scan`.

The scan is deliberately a measurement, not a proof: it samples base
points, builds pairs of extreme branch words, reads the temporal contrast
along a unit chart window, and reports the largest margin kappa for which
every sampled point admits, for every phase on a reference grid, a
subwindow of length kappa staying kappa away from that phase.  A model
with an affine roof fails with margin exactly zero and the certificate
says so instead of raising.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import minimum_filter1d

from .markov import MarkovModel, ModelError
from .thermo import base_system, forward_index

EPS_MAX = 0.5
THETA_CAP = 4096          # stopping-index iterations before giving up
HORIZON_CAP = 10000

TWO_PI = 2.0 * math.pi


class ScaleError(ModelError):
    pass


# ---------------------------------------------------------------------------
# matching scale


@dataclass(frozen=True)
class ScaleFunction:
    """Stopping index and expansion value of a model at resolution eps.

    steps[r, j] is the first k >= 1 with stable_cocycle(x, k) < eps at the
    grid node x = grid(interval r)[j]; values[r, j] is the unstable
    expansion over those k steps.  kappa_lower is the measured exponent in
    values > eps**(-kappa_lower), taken as a min over the grid.
    """

    model: MarkovModel
    eps: float
    steps: np.ndarray
    values: np.ndarray
    kappa_lower: float

    def _locate(self, x):
        xv = np.atleast_1d(np.asarray(x, dtype=float))
        out_t = np.empty(xv.shape, dtype=int)
        out_v = np.empty(xv.shape, dtype=float)
        for i, xi in enumerate(xv):
            t, v = _stop_and_value(self.model, float(xi), self.eps)
            out_t[i], out_v[i] = t, v
        return out_t, out_v

    def theta_at(self, x):
        """Stopping index at arbitrary leaf coordinates (recomputed)."""
        t, _ = self._locate(x)
        return int(t[0]) if np.isscalar(x) else t

    def value_at(self, x):
        """Expansion value at arbitrary leaf coordinates (recomputed)."""
        _, v = self._locate(x)
        return float(v[0]) if np.isscalar(x) else v

    def rows(self, iid: str) -> tuple[np.ndarray, np.ndarray]:
        idx = self.model.interval(iid).index
        return self.steps[idx], self.values[idx]

    @property
    def min_value(self) -> float:
        return float(self.values.min())

    @property
    def max_value(self) -> float:
        return float(self.values.max())


def _stop_and_value(model: MarkovModel, x: float, eps: float) -> tuple[int, float]:
    contr = 1.0
    expf = 1.0
    cur = x
    for k in range(1, THETA_CAP + 1):
        contr *= float(model.mu(cur))
        expf *= float(model.slope_at(cur))
        if contr < eps:
            return k, expf
        cur = model.forward(cur)
    raise ScaleError(f"stable cocycle did not reach {eps!r} in {THETA_CAP} steps")


def matching_scale(model: MarkovModel, eps: float) -> ScaleFunction:
    """Run the stable cocycle to resolution eps at every grid node.

    eps must lie in (0, 1/2]; coarser resolutions make the stopping index
    degenerate and are rejected.
    """
    if not 0.0 < eps <= EPS_MAX:
        raise ScaleError(f"eps must lie in (0, {EPS_MAX}], got {eps!r}")
    n = model.grid_size
    k = len(model.intervals)
    flat = np.concatenate([model.grid(iv.id) for iv in model.intervals])
    contr = np.ones_like(flat)
    expf = np.ones_like(flat)
    steps = np.zeros(flat.shape, dtype=int)
    values = np.zeros_like(flat)
    cur = flat.copy()
    undone = np.ones(flat.shape, dtype=bool)
    for i in range(1, THETA_CAP + 1):
        contr[undone] *= np.asarray(model.mu(cur[undone]), dtype=float)
        expf[undone] *= model.slope_at(cur[undone])
        hit = undone & (contr < eps)
        steps[hit] = i
        values[hit] = expf[hit]
        undone &= ~hit
        if not undone.any():
            break
        cur[undone] = model.forward(cur[undone])
    else:
        raise ScaleError(f"stable cocycle did not reach {eps!r} in {THETA_CAP} steps")
    steps = steps.reshape(k, n + 1)
    values = values.reshape(k, n + 1)
    kappa_lower = float(np.log(values).min() / math.log(1.0 / eps))
    return ScaleFunction(model, eps, steps, values, kappa_lower)


# ---------------------------------------------------------------------------
# stability and comparability checks


@dataclass(frozen=True)
class StableReport:
    eps: float
    kappa_lower: float
    kappa_branch: float
    rows: tuple    # (m, worst margin per backward step)

    @property
    def kappa_hat(self) -> float:
        return min(self.kappa_lower, self.kappa_branch)

    @property
    def ok(self) -> bool:
        return self.kappa_hat > 0.0


def check_stable(model: MarkovModel, scale: ScaleFunction,
                 m_max: int = 8) -> StableReport:
    """Measure the backward comparison exponent of a matching scale.

    For every grid node z and every 1 <= m <= m_max the margin is
    (log Lambda_m(z) + log value(sigma^m z) - log value(z)) / m; the
    branch exponent is the min.  Constant cocycles give log(slope).
    """
    rows_i, cols_i = forward_index(model)
    logv = np.log(scale.values)
    logslope = np.log(np.stack([
        model.slope_at(model.grid(iv.id)) for iv in model.intervals]))
    r = np.arange(len(model.intervals))[:, None] * np.ones_like(rows_i)
    c = np.arange(model.grid_size + 1)[None, :] * np.ones_like(rows_i)
    cum = np.zeros_like(logv)
    rows = []
    kappa_branch = math.inf
    for m in range(1, m_max + 1):
        cum = cum + logslope[r, c]
        r, c = rows_i[r, c], cols_i[r, c]
        margin = float(((cum + logv[r, c] - logv) / m).min())
        rows.append((m, margin))
        kappa_branch = min(kappa_branch, margin)
    return StableReport(scale.eps, scale.kappa_lower, kappa_branch, tuple(rows))


@dataclass(frozen=True)
class AdaptedReport:
    n: int
    c_measured: float
    pairs_checked: int

    @property
    def ok(self) -> bool:
        return math.isfinite(self.c_measured)


def check_adapted(model: MarkovModel, scale: ScaleFunction,
                  omega_mask: np.ndarray | None = None,
                  n: int = 1, radius_factor: float = 4.0) -> AdaptedReport:
    """Comparability of the scale on unstable neighbourhoods of preimages.

    For grid nodes z whose n-step image lands in the marked set, and grid
    neighbours y with |y - z| * value(y) < radius_factor, the report takes
    the largest ratio value(sigma^n z) / value(y).  A constant scale gives
    exactly 1.
    """
    rows_i, cols_i = forward_index(model)
    k = len(model.intervals)
    npts = model.grid_size + 1
    r = np.tile(np.arange(k)[:, None], (1, npts))
    c = np.tile(np.arange(npts)[None, :], (k, 1))
    for _ in range(n):
        r, c = rows_i[r, c], cols_i[r, c]
    lam_x = scale.values[r, c]
    sel = np.ones((k, npts), dtype=bool) if omega_mask is None \
        else omega_mask[r, c]
    h = 1.0 / model.grid_size
    max_cells = int(math.ceil(radius_factor / (scale.min_value * h))) + 1
    max_cells = min(max_cells, model.grid_size)
    worst = 1.0
    checked = 0
    for d in range(-max_cells, max_cells + 1):
        if d == 0:
            lo_z, hi_z, lo_y = 0, npts, 0
        elif d > 0:
            lo_z, hi_z, lo_y = 0, npts - d, d
        else:
            lo_z, hi_z, lo_y = -d, npts, 0
        lam_y = scale.values[:, lo_y:lo_y + hi_z - lo_z]
        near = (abs(d) * h) * lam_y < radius_factor
        use = sel[:, lo_z:hi_z] & near
        if not use.any():
            continue
        ratio = lam_x[:, lo_z:hi_z] / lam_y
        worst = max(worst, float(ratio[use].max()))
        checked += int(use.sum())
    return AdaptedReport(n, worst, checked)


# ---------------------------------------------------------------------------
# temporal distance


def _check_word(model: MarkovModel, word: str, domain: str) -> None:
    dom = domain
    for sym in reversed(word):
        br = model._by_sym_domain.get((sym, dom))
        if br is None:
            raise ModelError(
                f"word {word!r} not applicable at interval {domain!r}")
        dom = br.target


def temporal_distance(model: MarkovModel, x, w1: str, w2: str, z):
    """Second difference of roof sums along two branch words.

    (tau_k(v_w1 z) - tau_k(v_w1 x)) - (tau_k(v_w2 z) - tau_k(v_w2 x)) for
    words of equal length applicable at the interval of x; z must live in
    the same interval.  Affine roofs on equal-slope families cancel to
    zero; the value is antisymmetric in (w1, w2) and in (x, z).
    """
    if len(w1) != len(w2):
        raise ModelError("temporal distance needs words of equal length")
    if not w1 or w1 == w2:
        raise ModelError("temporal distance needs two distinct nonempty words")
    dom = model.interval_of(float(x))
    _check_word(model, w1, dom)
    _check_word(model, w2, dom)
    zv = np.atleast_1d(np.asarray(z, dtype=float))
    iv = model.interval(dom)
    if (zv < iv.left - 1e-12).any() or (zv > iv.right + 1e-12).any():
        raise ModelError("probe points must stay in the interval of x")
    t1z = model.roof_sum_on_word(w1, zv)
    t2z = model.roof_sum_on_word(w2, zv)
    t1x = model.roof_sum_on_word(w1, float(x))
    t2x = model.roof_sum_on_word(w2, float(x))
    out = (t1z - t1x) - (t2z - t2x)
    return float(out[0]) if np.isscalar(z) else out


def extreme_word(model: MarkovModel, domain: str, k: int,
                 flavor: str = "low") -> str:
    """Length-k admissible word at U_domain by greedy symbol choice.

    flavor 'low' always takes the smallest available symbol, 'high' the
    largest, 'alt' alternates high/low.  Built innermost first.
    """
    syms: list[str] = []
    dom = domain
    for i in range(k):
        avail = sorted(b.sym for b in model.fiber_branches(dom))
        if flavor == "low":
            pick = avail[0]
        elif flavor == "high":
            pick = avail[-1]
        else:
            pick = avail[-1] if i % 2 == 0 else avail[0]
        syms.append(pick)
        dom = model.branch(pick, dom).target
    return "".join(reversed(syms))


def word_pairs(model: MarkovModel, domain: str, k: int,
               pairs: int = 2) -> list[tuple[str, str]]:
    """Distinct equal-length word pairs used as contrast probes."""
    lo = extreme_word(model, domain, k, "low")
    hi = extreme_word(model, domain, k, "high")
    out = [(lo, hi)]
    if pairs >= 2:
        alt = extreme_word(model, domain, k, "alt")
        if alt not in (lo, hi):
            out.append((lo, alt))
    return out


def pair_offset(model: MarkovModel, x: float, w1: str, w2: str) -> float:
    """Stable size of a word pair: mu-product over the shared prefix.

    Words sharing a longer prefix sit deeper in the same cylinder and
    produce smaller contrasts; the empty prefix has size one.
    """
    j = 0
    for a, b in zip(w1, w2):
        if a != b:
            break
        j += 1
    if j == 0:
        return 1.0
    z0 = model.apply_word(w1, float(x))
    return float(model.stable_cocycle(z0, j))


# ---------------------------------------------------------------------------
# tameness of normalized contrast profiles


@dataclass(frozen=True)
class TameReport:
    kappa: float
    c_measured: float
    defect: float
    rows: tuple   # (x, prefix_len, offset, theta-norm, ratio)

    @property
    def ok(self) -> bool:
        return math.isfinite(self.c_measured)


def _profile_theta_norm(vals: np.ndarray, theta: float) -> float:
    """sup plus Hoelder-theta seminorm of a sampled profile on [0, 1)."""
    n = len(vals)
    c0 = float(np.abs(vals).max())
    sem = 0.0
    lag = 1
    while lag < n:
        d = float(np.abs(vals[lag:] - vals[:-lag]).max())
        sem = max(sem, d / (lag / n) ** theta)
        lag *= 2
    return c0 + sem


def check_tame(model: MarkovModel, scale: ScaleFunction,
               samples: int = 6, s_points: int = 128,
               kappa: float = 0.5) -> TameReport:
    """Hoelder budget of normalized contrast profiles vs pair size.

    The approximant is the profile itself, so the approximation defect is
    exactly zero and the content of the report is the measured constant
    c = max ||psi||_theta / offset**kappa over sampled points and pair
    depths.  Locally constant roofs give c = 0.
    """
    rows = []
    worst = 0.0
    for x, iid in _sample_points(model, samples):
        k = scale.theta_at(x)
        lam = scale.value_at(x)
        s = np.arange(s_points) / s_points
        iv = model.interval(iid)
        side = 1.0 if x + 1.0 / lam <= iv.right else -1.0
        zs = x + side * s / lam
        lo = extreme_word(model, iid, k, "low")
        hi = extreme_word(model, iid, k, "high")
        for j in range(k):
            w2 = lo[:j] + hi[j:]
            if w2 == lo:
                continue
            psi = temporal_distance(model, x, lo, w2, zs) / scale.eps
            nrm = _profile_theta_norm(psi, model.theta)
            off = pair_offset(model, x, lo, w2)
            ratio = nrm / off ** kappa
            rows.append((x, j, off, nrm, ratio))
            worst = max(worst, ratio)
    return TameReport(kappa, worst, 0.0, tuple(rows))


def _sample_points(model: MarkovModel, samples: int) -> list[tuple[float, str]]:
    """Deterministic spread of interior grid nodes across intervals."""
    n = model.grid_size
    ivs = model.intervals
    out = []
    for t in range(samples):
        iv = ivs[t % len(ivs)]
        j = (n * (2 * t + 3)) // (2 * samples + 4)
        j = min(max(j, 1), n - 1)
        out.append((float(iv.left + j / n), iv.id))
    return out


# ---------------------------------------------------------------------------
# oscillation certificate


@dataclass(frozen=True)
class UniWitness:
    x: float
    theta: int
    value: float
    kappa_x: float
    pair: tuple[str, str]
    side: int
    omega: float
    window_frac: float
    window: tuple[float, float]
    inf_dist: float


@dataclass(frozen=True)
class UniCertificate:
    eps: float
    kappa_hat: float
    witnesses: tuple[UniWitness, ...]
    skipped: int
    notes: str = ""

    @property
    def ok(self) -> bool:
        return self.kappa_hat > 0.0


def _torus_dist(a: np.ndarray) -> np.ndarray:
    return np.abs((a + math.pi) % TWO_PI - math.pi)


def _best_margin(dist: np.ndarray, n_windows: int) -> tuple[float, dict]:
    """Largest min(window length, worst-phase window margin) over sizes.

    dist has shape (phases, s points); for each phase the best window of
    each tested length is found with a sliding minimum, then the weakest
    phase decides.  Returns the margin and witness data for that phase.
    """
    n_om, n_s = dist.shape
    best = np.zeros(n_om)
    info = [(0.0, 0, 0, 0.0)] * n_om   # (frac, lo, hi, dist) per phase
    for j in range(1, n_windows + 1):
        frac = j / n_windows
        size = max(1, int(round(frac * n_s)))
        lo = size // 2
        hi = n_s - (size - 1 - size // 2)
        if hi <= lo:
            continue
        filt = minimum_filter1d(dist, size=size, axis=1, mode="nearest")
        seg = filt[:, lo:hi]
        pos = np.argmax(seg, axis=1)
        m = seg[np.arange(n_om), pos]
        cand = np.minimum(frac, m)
        better = cand > best
        for i in np.nonzero(better)[0]:
            start = lo + pos[i] - size // 2
            info[i] = (frac, start, start + size, float(m[i]))
        best = np.where(better, cand, best)
    i_worst = int(np.argmin(best))
    frac, w_lo, w_hi, d = info[i_worst]
    return float(best[i_worst]), {
        "omega_idx": i_worst, "frac": frac, "lo": w_lo, "hi": w_hi, "dist": d}


def uni_scan(model: MarkovModel, scale: ScaleFunction,
             omega_mask: np.ndarray | None = None,
             c1: float = 2.0, samples: int = 12, s_points: int = 256,
             omega_points: int = 64, n_windows: int = 32,
             pairs: int = 2, x_list=None) -> UniCertificate:
    """Measure the oscillation margin of normalized contrast profiles.

    For each sampled base point the profile of each word pair is read on a
    unit chart window on either admissible side, and the margin against a
    reference phase grid is the largest kappa such that every phase admits
    a subwindow of length >= kappa staying >= kappa away from it.  The
    certificate takes the best pair and side per point and the worst point
    overall.  kappa_hat == 0 is a failure report, not an exception.
    """
    if x_list is not None:
        pts = [(float(x), model.interval_of(float(x))) for x in x_list]
    else:
        pts = _sample_points(model, samples)
    omegas = TWO_PI * np.arange(omega_points) / omega_points
    s = np.arange(s_points) / s_points
    wits = []
    skipped = 0
    for x, iid in pts:
        k = scale.theta_at(x)
        lam = scale.value_at(x)
        if omega_mask is not None and not _near_marked(
                model, scale, x, iid, c1, omega_mask):
            skipped += 1
            continue
        iv = model.interval(iid)
        sides = []
        if x + 1.0 / lam <= iv.right + 1e-12:
            sides.append(1)
        if x - 1.0 / lam >= iv.left - 1e-12:
            sides.append(-1)
        if not sides:
            skipped += 1
            continue
        best_x = -1.0
        wit = None
        for w1, w2 in word_pairs(model, iid, k, pairs):
            for side in sides:
                zs = x + side * s / lam
                psi = temporal_distance(model, x, w1, w2, zs) / scale.eps
                dist = _torus_dist(psi[None, :] - omegas[:, None])
                margin, d = _best_margin(dist, n_windows)
                if margin > best_x or wit is None:
                    best_x = margin
                    wit = UniWitness(
                        x, int(k), float(lam), margin, (w1, w2), side,
                        float(omegas[d["omega_idx"]]), d["frac"],
                        (d["lo"] / s_points, d["hi"] / s_points), d["dist"])
        wits.append(wit)
    if not wits:
        raise ScaleError("no sample point met the window condition")
    kappa_hat = min(w.kappa_x for w in wits)
    return UniCertificate(scale.eps, float(kappa_hat), tuple(wits), skipped)


def _near_marked(model, scale, x, iid, c1, mask) -> bool:
    """Is any marked grid node within c1 / value(x) of x (same interval)?"""
    lam = scale.value_at(x)
    n = model.grid_size
    iv = model.interval(iid)
    j = int(round((x - iv.left) * n))
    r = int(math.ceil(c1 / lam * n))
    lo, hi = max(0, j - r), min(n, j + r)
    return bool(mask[iv.index, lo:hi + 1].any())


# ---------------------------------------------------------------------------
# uniform sets and recurrence


@dataclass(frozen=True)
class UniformSetReport:
    n: int
    kappa: float
    horizon: int
    mask: np.ndarray
    fraction: float
    nu_mass: float


def uniform_set(model: MarkovModel, n: int, kappa: float, horizon: int,
                eps: float | None = None) -> UniformSetReport:
    """Grid nodes whose determinant partial sums stay below the kappa line.

    A node x passes when sum_{j<i} log det(sigma^j x) < i * kappa for all
    n < i <= horizon; with eps given, the horizon at x is truncated to the
    stopping index of the matching scale there.  Monotone in kappa and n.
    """
    if kappa <= 0.0:
        raise ScaleError("kappa must be positive")
    if not 0 <= n < horizon:
        raise ScaleError("need 0 <= n < horizon")
    if horizon > HORIZON_CAP:
        raise ScaleError(f"horizon capped at {HORIZON_CAP}")
    rows_i, cols_i = forward_index(model)
    k = len(model.intervals)
    npts = model.grid_size + 1
    logdet = np.log(np.stack([
        np.asarray(model.det_step(model.grid(iv.id)), dtype=float)
        for iv in model.intervals]))
    if eps is not None:
        cutoff = matching_scale(model, eps).steps
        cutoff = np.minimum(cutoff, horizon)
    else:
        cutoff = np.full((k, npts), horizon, dtype=int)
    r = np.tile(np.arange(k)[:, None], (1, npts))
    c = np.tile(np.arange(npts)[None, :], (k, 1))
    cum = np.zeros((k, npts))
    ok = np.ones((k, npts), dtype=bool)
    for i in range(1, int(cutoff.max()) + 1):
        cum = cum + logdet[r, c]
        r, c = rows_i[r, c], cols_i[r, c]
        if i <= n:
            continue
        active = cutoff >= i
        ok &= (cum < i * kappa) | ~active
    nu = base_system(model).nu
    frac = float(ok.mean())
    return UniformSetReport(n, kappa, horizon, ok, frac, float(nu[ok].sum()))


@dataclass(frozen=True)
class RecurrenceReport:
    n1: int
    m: int
    trials: int
    rows: tuple   # (kappa, bad fraction, exp(-m kappa), within bound)

    def best_kappa(self) -> float:
        """Largest tested kappa whose empirical bad mass beats the bound."""
        good = [k for (k, bad, bound, ok) in self.rows if ok]
        return max(good) if good else 0.0


def recurrence_rate(model: MarkovModel, omega_mask: np.ndarray,
                    n1: int, m: int, trials: int = 2048, seed: int = 0,
                    kappas=(0.05, 0.1, 0.2, 0.3, 0.5)) -> RecurrenceReport:
    """Empirical visit statistics of the marked set along n1-step hops.

    Start points are drawn from the Gibbs weights; a trial is bad for a
    given kappa when fewer than kappa * m of its m hops land in the marked
    set.  Bad fractions are compared with exp(-m * kappa).
    """
    if n1 < 1 or m < 1:
        raise ScaleError("need n1 >= 1 and m >= 1")
    if n1 * m > HORIZON_CAP:
        raise ScaleError(f"orbit length capped at {HORIZON_CAP}")
    rows_i, cols_i = forward_index(model)
    nu = base_system(model).nu
    p = nu.ravel() / nu.sum()
    rng = np.random.default_rng(seed)
    flat = rng.choice(p.size, size=trials, p=p)
    npts = model.grid_size + 1
    r, c = flat // npts, flat % npts
    counts = np.zeros(trials, dtype=int)
    for j in range(1, m + 1):
        for _ in range(n1):
            r, c = rows_i[r, c], cols_i[r, c]
        counts += omega_mask[r, c]
    rows = []
    for kap in kappas:
        bad = float((counts < kap * m).mean())
        bound = math.exp(-m * kap)
        rows.append((float(kap), bad, bound, bad < bound))
    return RecurrenceReport(n1, m, trials, tuple(rows))
