"""Majorant cancellation engine for oscillatory transfer iterations.

The engine tracks a complex iterate u together with a real majorant H and
certifies, step by step, that |u| stays below H while H itself contracts
in L2.  Contraction is extracted from phase cancellation: a scale-adapted
cylinder partition supplies windows, on each window every backward branch
is classified as either carrying a small load (modulus comfortably below
the majorant) or an aligned phase, and in both cases a smooth cutoff P
below one can be multiplied into the majorant without breaking pointwise
domination.  The domination check after every step is the correctness
oracle; any violation raises with a witness instead of being absorbed.

Cutoffs are built from a fixed trapezoid bump: equal to one near the
window edges, 1 - kappa5 on the middle half, linear ramps between.  Bumps
are only placed where the dichotomy certifies room, so with kappa5 below
1/4 the small-branch case is sound by construction and the aligned case
is verified against the explicit two-term sum before the bump is kept.
A model whose oscillation certificate is zero (constant or affine roof)
makes the engine refuse cancellation and run with P identically one.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import minimum_filter1d

from .gridfun import GridFunction, norm_theta_b
from .markov import MarkovModel, ModelError
from .rpf import ComplexRPF, build_rpf, slice_holder_norm
from .scales import (ScaleFunction, UniCertificate, matching_scale,
                     recurrence_rate, uni_scan)
from .thermo import base_system

KAPPA5_DEFAULT = 0.05
C9_DEFAULT = 4.0
SMALL_FACTOR = 0.75          # load threshold of the branch dichotomy
ALIGN_SPREAD = 0.01          # phase spread allowed for alignment: kappa6/100
DEPTH_CAP = 40
DOMINATION_TOL = 1e-12
CONE_TOL = 1e-4     # headroom for the central-difference curvature bias


class EngineError(ModelError):
    pass


# ---------------------------------------------------------------------------
# scale-adapted cylinder partitions


@dataclass(frozen=True)
class Atom:
    """One cylinder of the partition: v_word(U_domain) inside U_iid."""

    word: str
    domain: str          # innermost domain of the word
    iid: str             # interval containing the atom
    left: float
    right: float
    contr: float         # |v_word'|
    depth: int
    rep: float           # grid point of smallest scale value in the atom
    lam_lo: float
    lam_hi: float
    j_lo: int            # inclusive grid-node range inside U_iid
    j_hi: int

    @property
    def length(self) -> float:
        return self.right - self.left


@dataclass(frozen=True)
class CylinderPartition:
    model: MarkovModel
    scale: ScaleFunction
    c1: float
    atoms: tuple[Atom, ...]
    by_interval: dict = field(repr=False, compare=False)
    condition_margin: float = 0.0     # max length * inf(scale) / c1, <= 1
    half_scale: float = 0.0           # min length * inf(scale) over atoms

    def locate(self, x: float) -> int:
        """Index of the atom containing x (right-continuous at seams)."""
        iid = self.model.interval_of(x)
        ids = self.by_interval[iid]
        lefts = [self.atoms[i].left for i in ids]
        k = int(np.searchsorted(lefts, x, side="right")) - 1
        k = min(max(k, 0), len(ids) - 1)
        return ids[k]


def _atom_scale_range(model: MarkovModel, scale: ScaleFunction,
                      iid: str, left: float, right: float):
    """(min, max, argmin point) of the scale value over an atom."""
    n = model.grid_size
    iv = model.interval(iid)
    j_lo = max(int(math.ceil((left - iv.left) * n - 1e-9)), 0)
    j_hi = min(int(math.floor((right - iv.left) * n + 1e-9)), n)
    pts = [left, 0.5 * (left + right), right - 1e-12]
    vals = [scale.value_at(p) for p in pts]
    if j_hi >= j_lo:
        row = scale.values[iv.index, j_lo:j_hi + 1]
        k = int(np.argmin(row))
        pts.append(iv.left + (j_lo + k) / n)
        vals.append(float(row[k]))
        vals.append(float(row.max()))
    lo = min(vals)
    hi = max(vals)
    rep = pts[int(np.argmin(vals[:len(pts)]))]
    return lo, hi, rep, j_lo, j_hi


def build_partition(model: MarkovModel, scale: ScaleFunction,
                    c1: float = 1.0) -> CylinderPartition:
    """Refine cylinders until each is shorter than c1 over its scale.

    Splitting stops as soon as length <= c1 / inf(atom scale); the scale
    must resolve below whole intervals or the request is rejected.
    """
    if c1 <= 0.0:
        raise EngineError("c1 must be positive")
    by_target: dict[str, list] = {}
    for b in model.branches:
        by_target.setdefault(b.target, []).append(b)
    for lst in by_target.values():
        lst.sort(key=lambda b: b.offset)
    done: list[Atom] = []
    # stack entries: word, inner domain, containing interval, affine (contr, off), depth
    stack = [("", iv.id, iv.id, 1.0, 0.0, 0) for iv in model.intervals]
    while stack:
        word, dom, iid, contr, off, depth = stack.pop()
        d_iv = model.interval(dom)
        left = contr * d_iv.left + off
        right = contr * d_iv.right + off
        lo, hi, rep, j_lo, j_hi = _atom_scale_range(model, scale, iid, left, right)
        if (right - left) * lo <= c1:
            if depth == 0:
                raise EngineError(
                    "scale too coarse: a whole interval already satisfies "
                    "the refinement condition")
            done.append(Atom(word, dom, iid, left, right, contr, depth,
                             rep, lo, hi, j_lo, j_hi))
            continue
        if depth >= DEPTH_CAP:
            raise EngineError("partition refinement did not terminate")
        for b in by_target[dom]:
            stack.append((word + b.sym, b.domain, iid,
                          contr / b.slope, contr * b.offset + off, depth + 1))
    done.sort(key=lambda a: a.left)
    by_interval: dict[str, list[int]] = {}
    for i, a in enumerate(done):
        by_interval.setdefault(a.iid, []).append(i)
    part = CylinderPartition(
        model, scale, c1, tuple(done), by_interval,
        condition_margin=max(a.length * a.lam_lo / c1 for a in done),
        half_scale=min(a.length * a.lam_lo for a in done))
    _verify_partition(part)
    return part


def _verify_partition(part: CylinderPartition) -> None:
    model = part.model
    for iid, ids in part.by_interval.items():
        iv = model.interval(iid)
        edge = iv.left
        for i in ids:
            a = part.atoms[i]
            if abs(a.left - edge) > 1e-9:
                raise EngineError(f"partition gap at {edge!r} in U_{iid}")
            edge = a.right
        if abs(edge - iv.right) > 1e-9:
            raise EngineError(f"partition does not reach the end of U_{iid}")
    if part.condition_margin > 1.0 + 1e-9:
        raise EngineError("refinement condition violated")


def all_words(model: MarkovModel, domain: str, k: int):
    """All admissible length-k words applicable on U_domain.

    Returns (word, contraction, offset, outer target) tuples; the affine
    data reproduces v_word(x) = contraction * x + offset.
    """
    items = [("", 1.0, 0.0, domain)]
    for _ in range(k):
        nxt = []
        for word, contr, off, dom in items:
            for b in model.fiber_branches(dom):
                # prepend: b is applied after the current composite
                nxt.append((b.sym + word, contr / b.slope,
                            off / b.slope + b.offset, b.target))
        items = nxt
    return items


def check_refining(model: MarkovModel, part: CylinderPartition,
                   n: int) -> tuple[bool, tuple | None]:
    """Does every n-step backward branch map each atom inside one atom?"""
    for a in part.atoms:
        for word, contr, off, tgt in all_words(model, a.iid, n):
            lo = contr * a.left + off
            hi = contr * a.right + off
            holder = part.atoms[part.locate(0.5 * (lo + hi))]
            if lo < holder.left - 1e-9 or hi > holder.right + 1e-9:
                return False, (a.word, word)
    return True, None


def choose_n1(model: MarkovModel, part: CylinderPartition,
              cap: int = 12) -> int:
    """Smallest n making the partition refine under n-step preimages."""
    depths = [a.depth for a in part.atoms]
    start = max(1, max(depths) - min(depths))
    for n in range(start, cap + 1):
        ok, _ = check_refining(model, part, n)
        if ok:
            return n
    raise EngineError(f"no refining step length up to {cap}")


# ---------------------------------------------------------------------------
# cones


@dataclass(frozen=True)
class ConeElement:
    """Positive grid function with chart-rescaled log-slope at most one."""

    values: np.ndarray
    scale: ScaleFunction
    ratio: float     # max |h'/h| / scale value over the grid

    @property
    def margin(self) -> float:
        return 1.0 - self.ratio


def cone_ratio(model: MarkovModel, scale: ScaleFunction,
               values: np.ndarray) -> float:
    """max over grid nodes of |d log h| along unit charts of the scale.

    Central differences inside each interval row, one-sided at row ends.
    """
    if (values <= 0.0).any():
        raise EngineError("cone membership needs a positive function")
    h = 1.0 / model.grid_size
    worst = 0.0
    for iv in model.intervals:
        row = values[iv.index]
        d = np.empty_like(row)
        d[1:-1] = (row[2:] - row[:-2]) / (2 * h)
        # second-order one-sided ends, same accuracy as the interior
        d[0] = (-3 * row[0] + 4 * row[1] - row[2]) / (2 * h)
        d[-1] = (3 * row[-1] - 4 * row[-2] + row[-3]) / (2 * h)
        ratio = np.abs(d) / (row * scale.values[iv.index])
        worst = max(worst, float(ratio.max()))
    return worst


def cone_membership(model: MarkovModel, scale: ScaleFunction,
                    values: np.ndarray) -> tuple[bool, float]:
    """(member, margin): margin is 1 minus the worst rescaled log-slope."""
    ratio = cone_ratio(model, scale, values)
    return ratio <= 1.0 + CONE_TOL, 1.0 - ratio


def cone_element(model: MarkovModel, scale: ScaleFunction,
                 values: np.ndarray) -> ConeElement:
    ratio = cone_ratio(model, scale, values)
    if ratio > 1.0 + CONE_TOL:
        raise EngineError(f"cone condition violated: log-slope ratio {ratio:.3g}")
    return ConeElement(values, scale, ratio)


def random_cone_element(model: MarkovModel, scale: ScaleFunction,
                        rng: np.random.Generator,
                        fill: float = 0.5) -> np.ndarray:
    """Positive function with rescaled log-slope about fill times the bound."""
    h = 1.0 / model.grid_size
    out = np.empty((len(model.intervals), model.grid_size + 1))
    for iv in model.intervals:
        cap = fill * scale.values[iv.index] * h
        steps = rng.uniform(-1.0, 1.0, model.grid_size) * cap[:-1]
        # repeated edge increments keep the one-sided stencils on budget
        steps[0] = steps[1]
        steps[-1] = steps[-2]
        logh = np.concatenate([[0.0], np.cumsum(steps)])
        out[iv.index] = np.exp(logh - logh.max())
    return out


@dataclass(frozen=True)
class ConeImageReport:
    m: int
    trials: int
    min_margin: float
    margins: tuple[float, ...]

    @property
    def ok(self) -> bool:
        return self.min_margin > 0.0


def cone_image_trials(model: MarkovModel, rpf: ComplexRPF,
                      scale: ScaleFunction, m: int, trials: int = 100,
                      seed: int = 0, fill: float = 0.9) -> ConeImageReport:
    """Push products of random cone pairs through M^m; collect margins.

    The product of two cone elements can leave the cone (log-slopes add);
    m positive-operator steps must bring it back with room to spare.
    """
    rng = np.random.default_rng(seed)
    pos = rpf.m_op()
    margins = []
    for _ in range(trials):
        h = random_cone_element(model, scale, rng, fill)
        psi = random_cone_element(model, scale, rng, fill)
        cur = h * psi
        for _ in range(m):
            cur = pos(cur)
        margins.append(cone_membership(model, scale, cur)[1])
    return ConeImageReport(m, trials, float(min(margins)), tuple(margins))


def choose_n4(model: MarkovModel, rpf: ComplexRPF, scale: ScaleFunction,
              trials: int = 16, seed: int = 0, cap: int = 12) -> int:
    """Smallest step count after which random cone products land inside."""
    for m in range(1, cap + 1):
        if cone_image_trials(model, rpf, scale, m, trials, seed).ok:
            return m
    raise EngineError(f"cone images still outside after {cap} steps")


# ---------------------------------------------------------------------------
# cutoff bumps


def zeta_bump(s, kappa5: float):
    """Trapezoid cutoff on [0, 1]: one near the edges, 1 - kappa5 inside.

    Equal to 1 on [0, 1/8] and [7/8, 1], equal to 1 - kappa5 on
    [1/4, 3/4], linear on the two ramps; |zeta'| <= 8 kappa5.
    """
    s = np.asarray(s, dtype=float)
    out = np.ones_like(s)
    mid = (s >= 0.25) & (s <= 0.75)
    out[mid] = 1.0 - kappa5
    up = (s > 0.125) & (s < 0.25)
    out[up] = 1.0 - kappa5 * (s[up] - 0.125) / 0.125
    down = (s > 0.75) & (s < 0.875)
    out[down] = 1.0 - kappa5 * (0.875 - s[down]) / 0.125
    return out


def bump_c1_norm(kappa5: float, window: float = 1.0) -> float:
    """sup |1 - zeta| plus sup |zeta'| for the bump squeezed to a window."""
    return kappa5 + 8.0 * kappa5 / window


# ---------------------------------------------------------------------------
# dichotomy


@dataclass(frozen=True)
class Dichotomy:
    kind: str                 # "small" | "aligned" | "indeterminate"
    word: str
    max_ratio: float
    min_ratio: float
    omega: float | None       # aligned phase representative
    spread: float             # worst torus distance to omega
    weight: float             # mean normalized branch weight on the window


def _interp_row(model: MarkovModel, values: np.ndarray, iid: str, pts):
    iv = model.interval(iid)
    xs = np.arange(model.grid_size + 1) / model.grid_size
    loc = np.asarray(pts, dtype=float) - iv.left
    row = values[iv.index]
    if np.iscomplexobj(row):
        return (np.interp(loc, xs, row.real)
                + 1j * np.interp(loc, xs, row.imag))
    return np.interp(loc, xs, row)


def _orbit_weight(model: MarkovModel, f_hat: np.ndarray, z: np.ndarray,
                  n: int) -> np.ndarray:
    """exp of the normalized log-weight summed along the n-step orbit of z.

    f_hat is the fully normalized per-step sample (eigenvalue constant and
    eigenfunction telescope included), so the sum is the n-step weight.
    """
    total = np.zeros(np.shape(z))
    cur = np.asarray(z, dtype=float)
    for _ in range(n):
        iid = model.interval_of(float(cur.flat[0]))
        total += _interp_row(model, f_hat, iid, cur)
        cur = model.forward(cur)
    return np.exp(total)


def _circular_stats(phases: np.ndarray) -> tuple[float, float]:
    """(mean direction, max torus distance to it)."""
    z = np.exp(1j * phases).mean()
    if abs(z) < 1e-12:
        return 0.0, math.pi
    omega = cmath.phase(z)
    d = np.abs((phases - omega + math.pi) % (2 * math.pi) - math.pi)
    return omega % (2 * math.pi), float(d.max())


def dichotomy_test(model: MarkovModel, rpf: ComplexRPF, u: np.ndarray,
                   big_h: np.ndarray, atom: Atom, word_item,
                   kappa6: float, c9: float = C9_DEFAULT,
                   f_hat: np.ndarray | None = None) -> Dichotomy:
    """Classify one backward branch of an atom window.

    Small when |u|/H <= 3/4 at every grid node of the branch image
    (including the interpolation fringe); aligned when |u|/H >= 1/c9
    everywhere and the summand phase stays within kappa6/100 of one
    direction; indeterminate otherwise, and treated as aligned with no
    usable phase, so no cancellation is claimed on it.
    """
    word, contr, off, tgt = word_item
    n = model.grid_size
    iv = model.interval(tgt)
    g_lo = max(0, int(math.floor((contr * atom.left + off - iv.left) * n)))
    g_hi = min(n, int(math.ceil((contr * atom.right + off - iv.left) * n)))
    js = np.arange(g_lo, g_hi + 1)
    uz = u[iv.index, js]
    hz = big_h[iv.index, js]
    ratios = np.abs(uz) / hz
    max_ratio = float(ratios.max())
    min_ratio = float(ratios.min())
    z = iv.left + js / n
    if f_hat is None:
        f_hat = rpf.f_ab_grid
    w_mean = float(_orbit_weight(model, f_hat, z, len(word)).mean())
    if max_ratio <= SMALL_FACTOR:
        return Dichotomy("small", word, max_ratio, min_ratio, None,
                         0.0, w_mean)
    if min_ratio >= 1.0 / c9:
        tau_n = model.birkhoff_sum(model.roof, z, len(word))
        phases = rpf.b * np.asarray(tau_n) + np.angle(uz)
        omega, spread = _circular_stats(phases)
        if spread <= ALIGN_SPREAD * kappa6:
            return Dichotomy("aligned", word, max_ratio, min_ratio,
                             omega, spread, w_mean)
        return Dichotomy("indeterminate", word, max_ratio, min_ratio,
                         omega, spread, w_mean)
    return Dichotomy("indeterminate", word, max_ratio, min_ratio, None,
                     math.pi, w_mean)


# ---------------------------------------------------------------------------
# cutoff construction


@dataclass(frozen=True)
class BumpRecord:
    atom_index: int
    case: str                 # "small" | "paired"
    word: str
    window: tuple[float, float]   # s-range carrying the bump (atom chart)
    kappa5: float


@dataclass(frozen=True)
class Cancellation:
    p_values: np.ndarray
    core_mask: np.ndarray          # grid nodes of the flat bump cores
    bumped_atoms: frozenset
    records: tuple[BumpRecord, ...]
    kappa5: float
    kappa6: float
    skipped: int                   # atoms with no certified option
    cone_ratio_p: float


def _pair_window(delta_phase: np.ndarray, kappa6: float) -> tuple | None:
    """Longest s-window keeping the phase difference kappa6/2 off zero."""
    n = delta_phase.size
    dist = np.abs((delta_phase + math.pi) % (2 * math.pi) - math.pi)
    best = None
    for size in range(n, 0, -1):
        if size / n <= kappa6:
            break
        filt = minimum_filter1d(dist, size=size, mode="nearest")
        lo = size // 2
        hi = n - (size - 1 - size // 2)
        if hi <= lo:
            continue
        seg = filt[lo:hi]
        k = int(np.argmax(seg))
        if seg[k] > 0.5 * kappa6:
            start = lo + k - size // 2
            best = (start / n, (start + size) / n)
            break
    return best


def build_cancellation(model: MarkovModel, rpf: ComplexRPF,
                       part: CylinderPartition, u: np.ndarray,
                       big_h: np.ndarray, omega_atoms, n1: int,
                       kappa5: float = KAPPA5_DEFAULT,
                       kappa6: float = 0.05,
                       c9: float = C9_DEFAULT) -> Cancellation:
    """Place one verified cutoff bump per marked atom where possible.

    Requires a positive oscillation margin; kappa6 at or below zero means
    no cancellation is available and the construction refuses.  Small
    branches take the bump outright (sound for kappa5 < 1/4); aligned
    pairs are accepted only after the two-term sum inequality is checked
    on the window, shrinking kappa5 locally when needed.  Atoms with no
    certified option keep P = 1.
    """
    if kappa6 <= 0.0:
        raise EngineError("no cancellation available: oscillation margin is zero")
    if not 0.0 < kappa5 < 0.25:
        raise EngineError("kappa5 must lie in (0, 1/4)")
    scale = part.scale
    p_vals = np.ones_like(big_h)
    core = np.zeros(big_h.shape, dtype=bool)
    records = []
    bumped = set()
    skipped = 0
    n = model.grid_size
    f_hat = rpf.f_ab_grid
    for ai in omega_atoms:
        atom = part.atoms[ai]
        words = all_words(model, atom.iid, n1)
        tests = [dichotomy_test(model, rpf, u, big_h, atom, w, kappa6, c9,
                                f_hat) for w in words]
        smalls = [(t, w) for t, w in zip(tests, words) if t.kind == "small"]
        rec = None
        if smalls:
            t, w = min(smalls, key=lambda tw: tw[0].max_ratio)
            rec = _place_bump(model, p_vals, core, atom, w, (0.0, 1.0),
                              kappa5, n)
            if rec is not None:
                records.append(BumpRecord(ai, "small", t.word, (0.0, 1.0),
                                          kappa5))
        else:
            rec = _try_pair(model, rpf, f_hat, p_vals, core, atom, words,
                            tests, u, big_h, kappa5, kappa6, n1)
            if rec is not None:
                records.append(BumpRecord(ai, "paired", rec[0], rec[1], rec[2]))
        if rec is not None:
            bumped.add(ai)
        else:
            skipped += 1
    ratio = cone_ratio(model, scale, p_vals)
    if ratio > 1.0:
        # the cutoff slope scales linearly in kappa5 near one
        shrink = kappa5 / (ratio * 1.05)
        return build_cancellation(model, rpf, part, u, big_h, omega_atoms,
                                  n1, shrink, kappa6, c9)
    return Cancellation(p_vals, core, frozenset(bumped), tuple(records),
                        kappa5, kappa6, skipped, ratio)


def _place_bump(model, p_vals, core, atom: Atom, word_item, j1, kappa5, n):
    """Write the cutoff onto one branch image; mark the flat core."""
    word, contr, off, tgt = word_item
    iv = model.interval(tgt)
    img_left = contr * atom.left + off
    img_len = contr * atom.length
    g_lo = int(math.ceil((img_left - iv.left) * n - 1e-9))
    g_hi = int(math.floor((img_left + img_len - iv.left) * n + 1e-9))
    if g_hi < g_lo:
        return None
    js = np.arange(g_lo, g_hi + 1)
    s = ((iv.left + js / n) - img_left) / img_len
    a, b = j1
    width = b - a
    inside = (s >= a) & (s <= b)
    local = np.ones_like(s)
    local[inside] = zeta_bump((s[inside] - a) / width, kappa5)
    p_vals[iv.index, js] = np.minimum(p_vals[iv.index, js], local)
    # flat core, read back in the atom chart: sigma^{n1} of the bump core
    c_lo, c_hi = a + 0.25 * width, a + 0.75 * width
    own = model.interval(atom.iid)
    a_lo = int(math.ceil((atom.left + c_lo * atom.length - own.left) * n))
    a_hi = int(math.floor((atom.left + c_hi * atom.length - own.left) * n))
    if a_hi >= a_lo:
        core[own.index, a_lo:a_hi + 1] = True
    return True


def _try_pair(model, rpf, f_hat, p_vals, core, atom, words, tests, u, big_h,
              kappa5, kappa6, n1):
    aligned = [(t, w) for t, w in zip(tests, words) if t.kind == "aligned"]
    if len(aligned) < 2:
        return None
    best, gap = None, 0.0
    for i in range(len(aligned)):
        for j in range(i + 1, len(aligned)):
            g = abs((aligned[i][0].omega - aligned[j][0].omega + math.pi)
                    % (2 * math.pi) - math.pi)
            if g > gap:
                gap, best = g, (aligned[i], aligned[j])
    if best is None or gap <= 0.5 * kappa6:
        return None
    (t1, w1), (t2, w2) = best
    if t1.weight > t2.weight:       # bump the smaller-weight branch
        (t1, w1), (t2, w2) = (t2, w2), (t1, w1)
    n = model.grid_size
    y = model.interval(atom.iid).left + np.arange(atom.j_lo, atom.j_hi + 1) / n
    z1 = w1[1] * y + w1[2]
    z2 = w2[1] * y + w2[2]
    ph1 = rpf.b * np.asarray(model.birkhoff_sum(model.roof, z1, n1)) \
        + np.angle(_interp_row(model, u, w1[3], z1))
    ph2 = rpf.b * np.asarray(model.birkhoff_sum(model.roof, z2, n1)) \
        + np.angle(_interp_row(model, u, w2[3], z2))
    j1 = _pair_window(ph1 - ph2, kappa6)
    if j1 is None:
        return None
    # verify the two-term inequality on the window before keeping the bump
    lo = int(round(j1[0] * (len(y) - 1)))
    hi = max(lo + 1, int(round(j1[1] * (len(y) - 1))))
    sel = slice(lo, hi + 1)
    g1 = _orbit_weight(model, f_hat, z1[sel], n1) * np.abs(
        _interp_row(model, big_h, w1[3], z1[sel]))
    g2 = _orbit_weight(model, f_hat, z2[sel], n1) * np.abs(
        _interp_row(model, big_h, w2[3], z2[sel]))
    two = np.abs(g1 * np.exp(1j * ph1[sel]) + g2 * np.exp(1j * ph2[sel]))
    room = (g1 + g2 - two) / np.maximum(g1, 1e-300)
    allowed = float(room.min())
    if allowed < 1e-4:
        return None
    kap = min(kappa5, 0.5 * allowed, 0.2499)
    if _place_bump(model, p_vals, core, atom, w1, j1, kap, n) is None:
        return None
    return (w1[0], j1, kap)


# ---------------------------------------------------------------------------
# majorant recursion


@dataclass(frozen=True)
class MajorantState:
    n: int
    u: np.ndarray
    big_h: ConeElement
    p_vals: np.ndarray | None
    omega_atoms: frozenset
    h0: float                       # the constant initial majorant


def majorant_step(model: MarkovModel, rpf: ComplexRPF,
                  state: MajorantState, canc: Cancellation,
                  n1: int) -> MajorantState:
    """One block step: u through the oscillatory operator, H through the
    positive one with the cutoff multiplied in first.

    Pointwise domination |u| <= H afterwards is mandatory; a violation
    raises with the witness node.  The new majorant must stay in the cone
    and below the initial constant.
    """
    tilde = rpf.tilde_op()
    pos = rpf.m_op()
    u = state.u
    for _ in range(n1):
        u = tilde(u)
    h_vals = canc.p_values * state.big_h.values
    for _ in range(n1):
        h_vals = pos(h_vals)
    bad = np.abs(u) > h_vals * (1.0 + DOMINATION_TOL) + 1e-15 * state.h0
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise EngineError(
            "majorant domination failed at interval "
            f"{model.intervals[r].id!r} node {c}: |u|={abs(u[r, c]):.6e} "
            f"H={h_vals[r, c]:.6e}")
    if h_vals.max() > state.h0 * (1.0 + 1e-9):
        raise EngineError("majorant exceeded its initial constant")
    next_h = cone_element(model, state.big_h.scale, h_vals)
    omega_next = canc.bumped_atoms if canc.bumped_atoms else state.omega_atoms
    return MajorantState(state.n + 1, u, next_h, canc.p_values,
                         omega_next, state.h0)


@dataclass(frozen=True)
class CauchySchwarzReport:
    max_violation: float     # of (M(PH))^2 <= MP^2 * MH^2, relative
    kappa4: float            # worst contraction factor on the bump cores
    core_nodes: int

    @property
    def ok(self) -> bool:
        return self.max_violation <= 1e-12


def cauchy_schwarz_check(model: MarkovModel, rpf: ComplexRPF,
                         p_vals: np.ndarray, h_vals: np.ndarray,
                         core_mask: np.ndarray, n1: int) -> CauchySchwarzReport:
    """Pointwise square comparison of the cutoff step.

    (M^n1 (P H))^2 <= M^n1(P^2) M^n1(H^2) everywhere; kappa4 is the worst
    value of 1 - M^n1(P^2) over the flat bump cores, the factor the square
    comparison then guarantees against M^n1(H^2).
    """
    pos = rpf.m_op()
    a = p_vals * h_vals
    b2 = p_vals * p_vals
    c2 = h_vals * h_vals
    for _ in range(n1):
        a, b2, c2 = pos(a), pos(b2), pos(c2)
    lhs = a * a
    rhs = b2 * c2
    scale = np.maximum(rhs, 1e-300)
    violation = float(((lhs - rhs) / scale).max())
    if core_mask.any():
        kappa4 = float((1.0 - b2[core_mask]).min())
        nodes = int(core_mask.sum())
    else:
        kappa4, nodes = 0.0, 0
    return CauchySchwarzReport(violation, kappa4, nodes)


# ---------------------------------------------------------------------------
# the L2 iteration


@dataclass(frozen=True)
class EngineParams:
    kappa5: float = KAPPA5_DEFAULT
    c9: float = C9_DEFAULT
    c8: float = 4.0
    c1: float = 1.0
    eta1: float = 0.5
    eps: float | None = None          # default: dyadic 1/|b|
    n1: int | None = None
    steps: int | None = None          # default: floor(ln |b|)
    delta1: float | None = None


@dataclass(frozen=True)
class StepRow:
    n: int
    c0_u: float
    l2_u: float
    l2_h: float
    omega_fraction: float
    bumps: int
    kappa4: float
    cs_violation: float


@dataclass(frozen=True)
class IterationCertificate:
    a: float
    b: float
    eps: float
    n1: int
    burn_in: int
    kappa_uni: float
    kappa6: float
    kappa5: float
    kappa4_min: float
    rows: tuple[StepRow, ...]
    final_l2: float
    kappa_fit: float | None
    refused: bool
    holder_ratio: float
    atoms: int
    truncated_at: int | None = None   # step where the majorant floor failed
    visits: tuple | None = None       # recurrence rows into the bump cores

    @property
    def contracted(self) -> bool:
        return (not self.refused) and self.kappa4_min > 0.0


def _dyadic_eps(b: float) -> float:
    q = max(1, int(round(math.log2(abs(b)))))
    return 2.0 ** -q


def run_l2_iteration(model: MarkovModel, a: float, b: float,
                     u0: np.ndarray | None = None,
                     params: EngineParams = EngineParams(),
                     scale: ScaleFunction | None = None,
                     uni: UniCertificate | None = None) -> IterationCertificate:
    """Burn in, then iterate the majorant recursion and certify decay.

    The oscillation certificate gates cancellation: a zero margin makes
    every step run with P = 1 (refused, no contraction claimed), which is
    the honest outcome for constant and affine roofs.  Each step re-runs
    the domination, cone, and Cauchy-Schwarz checks; rows record the
    norms, the marked-atom fraction, and the measured contraction.
    """
    delta1 = params.delta1
    rpf = build_rpf(model, a, b) if delta1 is None else build_rpf(
        model, a, b, delta1=delta1)
    eps = params.eps if params.eps is not None else _dyadic_eps(b)
    if scale is None:
        scale = matching_scale(model, eps)
    if uni is None:
        uni = uni_scan(model, scale)
    part = build_partition(model, scale, params.c1)
    n1 = params.n1 if params.n1 is not None else choose_n1(model, part)
    kappa6 = min(uni.kappa_hat, 0.099)
    refused = kappa6 <= 0.0
    nu = base_system(model).nu

    def l2(vals):
        return float(np.sqrt((nu * np.abs(vals) ** 2).sum()))

    if u0 is None:
        u0 = np.ones((len(model.intervals), model.grid_size + 1), dtype=complex)
    tilde = rpf.tilde_op()
    burn = int(math.floor(params.c8 * math.log(abs(b))))
    u = np.asarray(u0, dtype=complex)
    for _ in range(burn):
        u = tilde(u)
    h0 = norm_theta_b(GridFunction(model, np.abs(u) + 0j), b)
    if h0 == 0.0:
        h0 = 1.0    # u identically zero: any constant majorant works
    state = MajorantState(
        0, u, cone_element(model, scale, np.full_like(np.abs(u), h0)),
        None, frozenset(range(len(part.atoms))), h0)
    steps = params.steps if params.steps is not None else max(
        4, int(math.floor(math.log(abs(b)))))
    rows = [StepRow(0, float(np.abs(u).max()), l2(u),
                    l2(state.big_h.values), 1.0, 0, 0.0, 0.0)]
    kappa4_min = math.inf
    kappa5_eff = math.inf
    holder_ratio = 0.0
    truncated_at = None
    core_union = np.zeros(state.big_h.values.shape, dtype=bool)
    ones = np.ones_like(state.big_h.values)
    for n in range(steps):
        if refused:
            canc = Cancellation(ones, np.zeros(ones.shape, dtype=bool),
                                frozenset(), (), 0.0, 0.0,
                                len(part.atoms), 0.0)
        else:
            canc = build_cancellation(model, rpf, part, state.u,
                                      state.big_h.values, state.omega_atoms,
                                      n1, params.kappa5, kappa6, params.c9)
        cs = cauchy_schwarz_check(model, rpf, canc.p_values,
                                  state.big_h.values, canc.core_mask, n1)
        if not cs.ok:
            raise EngineError(
                f"square comparison violated by {cs.max_violation:.3e}")
        state = majorant_step(model, rpf, state, canc, n1)
        if canc.records:
            kappa4_min = min(kappa4_min, cs.kappa4)
        sem = slice_holder_norm(model, np.abs(state.u), model.theta)[1]
        holder_ratio = max(holder_ratio,
                           sem / ((state.n + 1) * eps ** params.eta1 * h0))
        rows.append(StepRow(
            state.n, float(np.abs(state.u).max()), l2(state.u),
            l2(state.big_h.values),
            len(state.omega_atoms) / len(part.atoms),
            len(canc.records), cs.kappa4, cs.max_violation))
        if canc.records:
            kappa5_eff = min(kappa5_eff, canc.kappa5)
            core_union |= canc.core_mask
        # cancellation may only keep iterating above the majorant floor
        floor = (state.n + 1) * eps ** (0.5 * params.eta1) * h0
        if not refused and float(state.big_h.values.min()) < floor:
            truncated_at = state.n
            break
    if not math.isfinite(kappa4_min):
        kappa4_min = 0.0
    if not math.isfinite(kappa5_eff):
        kappa5_eff = 0.0
    tail = [r for r in rows if r.l2_u > 0.0]
    kappa_fit = None
    if len(tail) >= 3:
        xs = np.array([r.n * n1 for r in tail], dtype=float)
        ys = np.log([r.l2_u for r in tail])
        kappa_fit = float(-np.polyfit(xs, ys, 1)[0])
    visits = None
    if core_union.any():
        rec = recurrence_rate(model, core_union, n1, max(2, len(rows) - 1),
                              trials=1024, seed=0)
        visits = tuple(rec.rows)
    return IterationCertificate(
        a, b, eps, n1, burn, uni.kappa_hat, kappa6, kappa5_eff,
        kappa4_min, tuple(rows), rows[-1].l2_u, kappa_fit, refused,
        holder_ratio, len(part.atoms), truncated_at, visits)
