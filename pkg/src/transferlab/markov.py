"""Piecewise-affine expanding Markov maps on disjoint unions of intervals.

A model is a finite family of unit intervals laid out on the real line, a
forward map sigma that expands each interval slice affinely onto another
interval, and three scalar fields on the union: a roof function tau > 0
(return time), a potential F, and a stable factor mu with values in (0,1).
The derived per-step determinant is expansion * mu.

Inverse branches are the primary objects.  Each symbol names the interval a
branch lands in; a word is a string of symbols, applied right to left, and is
admissible when consecutive transitions are allowed by the adjacency
structure.  Branch slopes are constant, so all cocycle products over words of
integer-slope models are exact in double precision, and forward orbits of
dyadic grid points stay on the grid.

Two families are built in:

* ``doubling``: one interval [0,1), two full branches of slope 2.
* ``markov3``: three intervals, full 3-shift by default, slope equal to the
  out-degree of each interval; an optional forbidden transition removes one
  edge (out-degree 2 rows then have slope 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * math.pi

# Dense sampling used for field extrema and positivity validation.
_VALIDATION_SAMPLES = 1 << 14


@dataclass(frozen=True)
class CoefFn:
    """Closed-form scalar field c0 + c1*x + c2*sin(2 pi x) + c3*cos(2 pi x)."""

    const: float = 0.0
    linear: float = 0.0
    sin: float = 0.0
    cos: float = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, self.const)
        if self.linear:
            out = out + self.linear * x
        if self.sin:
            out = out + self.sin * np.sin(TWO_PI * x)
        if self.cos:
            out = out + self.cos * np.cos(TWO_PI * x)
        return out if out.ndim else float(out)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, self.linear)
        if self.sin:
            out = out + self.sin * TWO_PI * np.cos(TWO_PI * x)
        if self.cos:
            out = out - self.cos * TWO_PI * np.sin(TWO_PI * x)
        return out if out.ndim else float(out)

    def coeffs(self) -> tuple[float, float, float, float]:
        return (self.const, self.linear, self.sin, self.cos)

    def is_constant(self) -> bool:
        return self.linear == 0.0 and self.sin == 0.0 and self.cos == 0.0


@dataclass(frozen=True)
class Interval:
    """One component of the phase space, [left, left+1) in leaf coordinate."""

    id: str
    index: int
    left: float

    @property
    def right(self) -> float:
        return self.left + 1.0


@dataclass(frozen=True)
class Branch:
    """One inverse-branch instance v: U_domain -> U_target, v(y) = y/slope + offset.

    ``sym`` is the symbol of the target interval slice; several instances may
    share a symbol (one per admissible domain).  ``slope`` is the forward
    expansion factor on the image slice, an integer >= 2 for built-ins.
    """

    sym: str
    domain: str
    target: str
    slope: float
    offset: float

    def __call__(self, y):
        return np.asarray(y, dtype=float) / self.slope + self.offset

    @property
    def contraction(self) -> float:
        return 1.0 / self.slope


class ModelError(ValueError):
    pass


_CONFIG_KEYS = ("family", "slopes", "forbidden", "roof", "potential", "mu",
                "grid_size", "theta")


@dataclass(frozen=True)
class ModelConfig:
    """Plain key=value model description; round-trips exactly through text."""

    family: str = "doubling"
    roof: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    potential: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    mu: tuple[float, float, float, float] = (0.5, 0.0, 0.0, 0.0)
    grid_size: int = 4096
    theta: float = 0.5
    forbidden: tuple[str, ...] = ()
    slopes: tuple[float, ...] = ()

    def to_text(self) -> str:
        lines = [f"family = {self.family}"]
        if self.slopes:
            lines.append("slopes = " + ", ".join(repr(s) for s in self.slopes))
        if self.forbidden:
            lines.append("forbidden = " + ", ".join(self.forbidden))
        for key in ("roof", "potential", "mu"):
            vals = getattr(self, key)
            lines.append(f"{key} = " + ", ".join(repr(v) for v in vals))
        lines.append(f"grid_size = {self.grid_size}")
        lines.append(f"theta = {self.theta!r}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "ModelConfig":
        fields: dict = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ModelError(f"line {lineno}: expected key = value, got {raw!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _CONFIG_KEYS:
                raise ModelError(f"line {lineno}: unknown key {key!r}")
            if key in fields:
                raise ModelError(f"line {lineno}: duplicate key {key!r}")
            fields[key] = val
        if "family" not in fields:
            raise ModelError("missing key 'family'")
        kwargs: dict = {"family": fields.pop("family")}
        if "slopes" in fields:
            kwargs["slopes"] = tuple(float(v) for v in fields.pop("slopes").split(","))
        if "forbidden" in fields:
            kwargs["forbidden"] = tuple(
                v.strip() for v in fields.pop("forbidden").split(",") if v.strip())
        for key in ("roof", "potential", "mu"):
            if key in fields:
                vals = tuple(float(v) for v in fields.pop(key).split(","))
                if len(vals) != 4:
                    raise ModelError(f"{key}: expected 4 coefficients, got {len(vals)}")
                kwargs[key] = vals
        if "grid_size" in fields:
            kwargs["grid_size"] = int(fields.pop("grid_size"))
        if "theta" in fields:
            kwargs["theta"] = float(fields.pop("theta"))
        return ModelConfig(**kwargs)


@dataclass(frozen=True)
class MarkovModel:
    config: ModelConfig
    intervals: tuple[Interval, ...]
    branches: tuple[Branch, ...]
    alphabet: tuple[str, ...]
    roof: CoefFn
    potential: CoefFn
    mu: CoefFn
    grid_size: int
    theta: float
    # hyperbolicity data, from branch slope and mu extrema
    chi_u: float
    chi_u_bar: float
    chi_s: float
    chi_s_bar: float
    chi_0: float
    chi_star: float
    tau_0: float
    tau_star: float
    # lookup tables
    _by_sym_domain: dict = field(repr=False, compare=False, default_factory=dict)
    _by_domain: dict = field(repr=False, compare=False, default_factory=dict)
    _intervals_by_id: dict = field(repr=False, compare=False, default_factory=dict)
    _forward_table: dict = field(repr=False, compare=False, default_factory=dict)

    # -- geometry --------------------------------------------------------

    def interval(self, iid: str) -> Interval:
        return self._intervals_by_id[iid]

    def interval_of(self, x) -> str:
        """Interval containing leaf coordinate x (right endpoints excluded)."""
        idx = int(math.floor(x))
        if not 0 <= idx < len(self.intervals):
            if x == self.intervals[-1].right:
                idx = len(self.intervals) - 1
            else:
                raise ModelError(f"coordinate {x!r} outside the phase space")
        return self.intervals[idx].id

    def grid(self, iid: str) -> np.ndarray:
        """Sample points of U_iid: grid_size cells, both endpoints included."""
        iv = self.interval(iid)
        return iv.left + np.arange(self.grid_size + 1) / self.grid_size

    def branch(self, sym: str, domain: str) -> Branch:
        try:
            return self._by_sym_domain[(sym, domain)]
        except KeyError:
            raise ModelError(f"no branch {sym!r} with domain {domain!r}") from None

    def fiber_branches(self, domain: str) -> tuple[Branch, ...]:
        """All branch instances applicable to points of U_domain."""
        return self._by_domain[domain]

    # -- forward dynamics -------------------------------------------------

    def forward(self, x):
        """sigma(x); exact on dyadic grid points for integer-slope families.

        Slice boundaries resolve to the right-continuous branch.
        """
        scalar = np.isscalar(x)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        idx = np.floor(x).astype(int)
        idx = np.clip(idx, 0, len(self.intervals) - 1)
        for k, iv in enumerate(self.intervals):
            mask = idx == k
            if not mask.any():
                continue
            d, targets = self._forward_table[iv.id]
            s = d * (x[mask] - iv.left)
            j = np.clip(np.floor(s).astype(int), 0, d - 1)
            lefts = np.array([self._intervals_by_id[targets[jj]].left for jj in j])
            out[mask] = lefts + (s - j)
        return float(out[0]) if scalar else out

    def orbit(self, x, n: int) -> np.ndarray:
        """[x, sigma x, ..., sigma^(n-1) x]; vectorized over x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        pts = np.empty((n, x.size))
        cur = x
        for i in range(n):
            pts[i] = cur
            if i + 1 < n:
                cur = self.forward(cur)
        return pts

    def slope_at(self, x):
        """Forward expansion |sigma'(x)|."""
        scalar = np.isscalar(x)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        idx = np.clip(np.floor(x).astype(int), 0, len(self.intervals) - 1)
        for k, iv in enumerate(self.intervals):
            mask = idx == k
            if mask.any():
                out[mask] = self._forward_table[iv.id][0]
        return float(out[0]) if scalar else out

    def det_step(self, x):
        """Per-step Jacobian surrogate: expansion times mu, both at x."""
        return self.slope_at(x) * self.mu(x)

    # -- words ------------------------------------------------------------

    def sym_target(self, sym: str) -> str:
        return self._sym_target_map[sym]

    @property
    def _sym_target_map(self) -> dict:
        tbl = self.__dict__.get("_sym_target_cache")
        if tbl is None:
            tbl = {b.sym: b.target for b in self.branches}
            object.__setattr__(self, "_sym_target_cache", tbl)
        return tbl

    def word_admissible(self, word: str) -> bool:
        if not word:
            return False
        tbl = self._sym_target_map
        if any(sym not in tbl for sym in word):
            return False
        return all((a, tbl[b]) in self._by_sym_domain for a, b in zip(word, word[1:]))

    def enumerate_words(self, n: int) -> list[str]:
        """All admissible branch words of length n, lexicographic order."""
        if n < 1:
            raise ModelError("word length must be >= 1")
        tbl = self._sym_target_map
        words = [s for s in self.alphabet]
        for _ in range(n - 1):
            nxt = []
            for w in words:
                for s in self.alphabet:
                    # w extends on the right: transition w[-1] -> target(s)
                    if (w[-1], tbl[s]) in self._by_sym_domain:
                        nxt.append(w + s)
            words = nxt
        return words

    def apply_word(self, word: str, x):
        """v_word(x): compose branch instances right to left.

        Requires the word to be admissible and the final transition
        word[-1] -> interval(x) to be allowed.
        """
        scalar = np.isscalar(x)
        xv = np.atleast_1d(np.asarray(x, dtype=float))
        dom = self.interval_of(float(xv.flat[0]))
        cur = xv
        for sym in reversed(word):
            br = self.branch(sym, dom)
            cur = br(cur)
            dom = br.target
        return float(cur[0]) if scalar else cur

    def word_contraction(self, word: str, domain: str | None = None) -> float:
        """|v_word'| for the instance applied on U_domain (affine: constant).

        When domain is omitted, any admissible one for word[-1] is used; the
        value can depend on it for mixed out-degree adjacency.
        """
        if domain is None:
            for b in self.branches:
                if b.sym == word[-1]:
                    domain = b.domain
                    break
        prod = 1.0
        dom = domain
        for sym in reversed(word):
            br = self.branch(sym, dom)
            prod *= br.contraction
            dom = br.target
        return prod

    # -- cocycles and Birkhoff sums ---------------------------------------

    def expansion_cocycle(self, x, n: int):
        """Lambda_n(x) = product of |sigma'| along the n-step forward orbit."""
        pts = self.orbit(x, n) if n > 0 else None
        if n == 0:
            return 1.0 if np.isscalar(x) else np.ones(np.size(x))
        vals = self.slope_at(pts.ravel()).reshape(pts.shape)
        out = vals.prod(axis=0)
        return float(out[0]) if np.isscalar(x) else out

    def stable_cocycle(self, x, n: int):
        """Product of mu along the n-step forward orbit (in (0,1) per step)."""
        if n == 0:
            return 1.0 if np.isscalar(x) else np.ones(np.size(x))
        pts = self.orbit(x, n)
        vals = np.asarray(self.mu(pts.ravel())).reshape(pts.shape)
        out = vals.prod(axis=0)
        return float(out[0]) if np.isscalar(x) else out

    def det_cocycle(self, x, n: int):
        """Product of det_step along the n-step forward orbit."""
        if n == 0:
            return 1.0 if np.isscalar(x) else np.ones(np.size(x))
        pts = self.orbit(x, n)
        vals = (self.slope_at(pts.ravel()) * np.asarray(self.mu(pts.ravel())))
        out = vals.reshape(pts.shape).prod(axis=0)
        return float(out[0]) if np.isscalar(x) else out

    def birkhoff_sum(self, fn, x, n: int):
        """sum_{i<n} fn(sigma^i x) for a callable fn on leaf coordinates."""
        if n == 0:
            return 0.0 if np.isscalar(x) else np.zeros(np.size(x))
        pts = self.orbit(x, n)
        vals = np.asarray(fn(pts.ravel())).reshape(pts.shape)
        out = vals.sum(axis=0)
        return float(out[0]) if np.isscalar(x) else out

    def roof_sum_on_word(self, word: str, x):
        """tau_n(v_word(x)): Birkhoff roof sum along the branch preimage."""
        scalar = np.isscalar(x)
        xv = np.atleast_1d(np.asarray(x, dtype=float))
        dom = self.interval_of(float(xv.flat[0]))
        total = np.zeros_like(xv)
        cur = xv
        for sym in reversed(word):
            br = self.branch(sym, dom)
            cur = br(cur)
            dom = br.target
            total = total + np.asarray(self.roof(cur))
        return float(total[0]) if scalar else total


def _parse_forbidden(entries: tuple[str, ...]) -> set[tuple[str, str]]:
    out = set()
    for item in entries:
        if ">" not in item:
            raise ModelError(f"forbidden transition {item!r} must look like 'a>b'")
        a, _, b = item.partition(">")
        out.add((a.strip(), b.strip()))
    return out


def build_model(config: ModelConfig) -> MarkovModel:
    """Construct and validate a model from its configuration.

    Raises ModelError when the roof is not positive, mu leaves (0,1), the
    adjacency loses transitivity, grid_size is not a power of two, or the
    declared slopes disagree with the family.
    """
    if config.grid_size < 64 or config.grid_size & (config.grid_size - 1):
        raise ModelError("grid_size must be a power of two, at least 64")
    if not 0.0 < config.theta <= 1.0:
        raise ModelError("theta must lie in (0, 1]")

    roof = CoefFn(*config.roof)
    potential = CoefFn(*config.potential)
    mu = CoefFn(*config.mu)

    if config.family == "doubling":
        if config.forbidden:
            raise ModelError("doubling family has no transition structure to forbid")
        intervals = (Interval("u", 0, 0.0),)
        alphabet = ("0", "1")
        branches = (
            Branch("0", "u", "u", 2.0, 0.0),
            Branch("1", "u", "u", 2.0, 0.5),
        )
        derived_slopes = (2.0, 2.0)
        forward_table = {"u": (2, ("u", "u"))}
    elif config.family == "markov3":
        names = ("0", "1", "2")
        forb = _parse_forbidden(config.forbidden)
        for a, b in forb:
            if a not in names or b not in names:
                raise ModelError(f"forbidden transition {a}>{b} uses unknown symbols")
        if len(forb) > 1:
            raise ModelError("markov3 supports at most one forbidden transition")
        adj = {a: tuple(b for b in names if (a, b) not in forb) for a in names}
        if any(len(v) == 0 for v in adj.values()):
            raise ModelError("adjacency has a dead row")
        intervals = tuple(Interval(n, i, float(i)) for i, n in enumerate(names))
        branch_list = []
        forward_table = {}
        for a in names:
            outs = adj[a]
            d = len(outs)
            la = intervals[names.index(a)].left
            forward_table[a] = (d, outs)
            for j, b in enumerate(outs):
                lb = intervals[names.index(b)].left
                # slice j of U_a maps onto U_b with slope d, so the inverse
                # branch labeled a carries U_b into that slice
                offset = la + j / d - lb / d
                branch_list.append(Branch(a, b, a, float(d), offset))
        # group instances by symbol for stable ordering
        branches = tuple(sorted(branch_list, key=lambda br: (br.sym, br.domain)))
        derived_slopes = tuple(float(len(adj[a])) for a in names)
        alphabet = names
    else:
        raise ModelError(f"unknown family {config.family!r}")

    if config.slopes and tuple(config.slopes) != derived_slopes:
        raise ModelError(
            f"declared slopes {config.slopes} disagree with derived {derived_slopes}")
    config = replace(config, slopes=derived_slopes)

    # validate fields on a dense grid
    xs = np.concatenate([
        iv.left + np.arange(_VALIDATION_SAMPLES + 1) / _VALIDATION_SAMPLES
        for iv in intervals
    ])
    roof_vals = np.asarray(roof(xs))
    if roof_vals.min() <= 0:
        raise ModelError("roof function must be strictly positive")
    mu_vals = np.asarray(mu(xs))
    if mu_vals.min() <= 0 or mu_vals.max() >= 1:
        raise ModelError("mu must take values strictly inside (0, 1)")

    slopes_all = np.array([b.slope for b in branches])
    chi_u = float(np.log(slopes_all.min()))
    chi_u_bar = float(np.log(slopes_all.max()))
    chi_s = float(-np.log(mu_vals.max()))
    chi_s_bar = float(-np.log(mu_vals.min()))

    by_sym_domain = {}
    by_domain: dict = {iv.id: [] for iv in intervals}
    for b in branches:
        # branch instances map U_domain into the slice of U_target labeled sym
        if b.domain not in by_domain:
            raise ModelError(f"branch {b} has unknown domain")
        by_sym_domain[(b.sym, b.domain)] = b
        by_domain[b.domain].append(b)
    by_domain = {k: tuple(sorted(v, key=lambda br: br.offset)) for k, v in by_domain.items()}
    if any(len(v) == 0 for v in by_domain.values()):
        raise ModelError("some interval has an empty preimage fiber")

    model = MarkovModel(
        config=config,
        intervals=intervals,
        branches=branches,
        alphabet=alphabet,
        roof=roof,
        potential=potential,
        mu=mu,
        grid_size=config.grid_size,
        theta=config.theta,
        chi_u=chi_u,
        chi_u_bar=chi_u_bar,
        chi_s=chi_s,
        chi_s_bar=chi_s_bar,
        chi_0=min(chi_u, chi_s),
        chi_star=max(chi_u_bar, chi_s_bar),
        tau_0=float(roof_vals.min()),
        tau_star=float(roof_vals.max()),
        _by_sym_domain=by_sym_domain,
        _by_domain=by_domain,
        _intervals_by_id={iv.id: iv for iv in intervals},
        _forward_table=forward_table,
    )
    return model


def _as_coeffs(v) -> tuple[float, float, float, float]:
    if isinstance(v, CoefFn):
        return v.coeffs()
    return tuple(float(c) for c in v)


def doubling_model(roof=(1.0, 0.0, 0.0, 0.0), potential=(0.0, 0.0, 0.0, 0.0),
                   mu=(0.5, 0.0, 0.0, 0.0), grid_size=4096, theta=0.5) -> MarkovModel:
    return build_model(ModelConfig("doubling", _as_coeffs(roof), _as_coeffs(potential),
                                   _as_coeffs(mu), grid_size, theta))


def markov3_model(roof=(1.0, 0.0, 0.0, 0.0), potential=(0.0, 0.0, 0.0, 0.0),
                  mu=(0.5, 0.0, 0.0, 0.0), grid_size=4096, theta=0.5,
                  forbidden=()) -> MarkovModel:
    return build_model(ModelConfig("markov3", _as_coeffs(roof), _as_coeffs(potential),
                                   _as_coeffs(mu), grid_size, theta,
                                   forbidden=tuple(forbidden)))
