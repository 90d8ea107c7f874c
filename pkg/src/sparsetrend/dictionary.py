"""Implicit over-complete dictionary with O(1) closed-form inner products.

The dictionary stacks five column blocks over the sample grid t = 0..n-1:

    slope j  : max(t - j, 0)        j in [0, n-2]   (j = 0 is the global ramp,
                                                     j >= 1 bends the trend at t = j)
    step j   : 1 if t >= j + 1      j in [0, n-2]   (level shift after sample j)
    spike j  : 1 if t == j          j in [0, n-1]
    sine k   : sin(omega_k * t)     k indexes the frequency grid
    cosine k : cos(omega_k * t)

for a total of p = 3n - 2 + 2*len(omega) columns.  The matrix is never
formed: inner products between any two columns reduce to polynomial sum
identities (sum of t, sum of t**2 over index ranges) and geometric sums of
e^{i*delta*t}, all evaluated in a bounded number of operations regardless
of n.  ``materialize_column`` exists so tests can check every formula
against a brute-force dot product.

Two numerical hazards in the geometric sums are handled explicitly:
the angle is folded into (-pi, pi] with a two-term representation of 2*pi
(plain folding destroys the tiny residual that matters when omega_a +
omega_b lands on 2*pi), and for |delta|*(m-1) < 1 the sums switch to a
Taylor series with exact integer power sums, where the closed form would
cancel catastrophically.
"""

from __future__ import annotations

import enum
import math
import threading
import weakref
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

__all__ = [
    "Kind",
    "ColumnId",
    "DictionarySpec",
    "column_value",
    "gram_entry",
    "gram_column",
    "gram_diagonal",
    "column_dot_signal",
    "signal_correlations",
    "materialize_column",
    "materialize",
    "synthesize",
]


class Kind(enum.Enum):
    """Column block of the dictionary."""

    SLOPE = "slope"
    STEP = "step"
    SPIKE = "spike"
    SINE = "sine"
    COSINE = "cosine"


#: Fixed block order; also the coordinate cycling order used by the solver.
KIND_ORDER = (Kind.SLOPE, Kind.STEP, Kind.SPIKE, Kind.SINE, Kind.COSINE)


@dataclass(frozen=True)
class ColumnId:
    """A single dictionary column, identified by block and index."""

    kind: Kind
    index: int

    def __post_init__(self):
        if not isinstance(self.kind, Kind):
            raise ValueError(f"kind must be a Kind, got {self.kind!r}")
        if self.index < 0:
            raise ValueError(f"column index must be nonnegative, got {self.index}")


class DictionarySpec:
    """Implicit description of the dictionary: length, frequencies, bounds.

    Parameters
    ----------
    n : int
        Signal length; at least 3.
    omega : sequence of float
        Angular frequencies (radians per sample), strictly increasing,
        each in (0, pi].
    enabled : iterable of Kind, optional
        Blocks present in the dictionary (all five by default).  Disabled
        blocks contribute no columns.
    bounds : mapping Kind -> (lower, upper), optional
        Box constraints applied to every coefficient of a block.  Bounds
        must satisfy lower <= 0 <= upper so the zero solution stays
        feasible.  Use ``-math.inf`` / ``math.inf`` for one-sided bounds.

    Instances are immutable after construction and safe for concurrent
    readers; internal caches are initialised at most once under a lock.
    """

    __slots__ = ("n", "omega", "enabled", "bounds", "_lock", "_cache", "__weakref__")

    def __init__(self, n, omega=(), enabled=KIND_ORDER, bounds=None):
        if n < 3:
            raise ValueError(f"signal length must be at least 3, got {n}")
        omega = tuple(float(w) for w in omega)
        for w in omega:
            if not (0.0 < w <= math.pi) or not math.isfinite(w):
                raise ValueError(f"frequencies must lie in (0, pi], got {w}")
        if any(b <= a for a, b in zip(omega, omega[1:])):
            raise ValueError("frequencies must be strictly increasing")
        enabled = frozenset(enabled)
        for k in enabled:
            if not isinstance(k, Kind):
                raise ValueError(f"enabled entries must be Kind, got {k!r}")
        norm_bounds = {}
        for k, (lo, hi) in (bounds or {}).items():
            k = Kind(k) if not isinstance(k, Kind) else k
            lo, hi = float(lo), float(hi)
            if not (lo <= 0.0 <= hi):
                raise ValueError(f"bounds for {k} must satisfy lower <= 0 <= upper")
            norm_bounds[k] = (lo, hi)
        self.n = int(n)
        self.omega = omega
        self.enabled = enabled
        self.bounds = norm_bounds
        self._lock = threading.RLock()  # cache builds may nest (column -> suffix sums)
        self._cache = {}

    # -- layout -------------------------------------------------------------

    def block_size(self, kind):
        """Number of columns in a block (0 when the block is disabled)."""
        if kind not in self.enabled:
            return 0
        if kind in (Kind.SLOPE, Kind.STEP):
            return self.n - 1
        if kind is Kind.SPIKE:
            return self.n
        return len(self.omega)

    @property
    def p(self):
        """Total number of columns."""
        return sum(self.block_size(k) for k in KIND_ORDER)

    def offset(self, kind):
        """Flat index of a block's first column."""
        off = 0
        for k in KIND_ORDER:
            if k is kind:
                return off
            off += self.block_size(k)
        raise ValueError(f"unknown kind {kind!r}")

    def kind_slices(self):
        """Mapping Kind -> slice of flat indices (empty slice when disabled)."""
        out, off = {}, 0
        for k in KIND_ORDER:
            size = self.block_size(k)
            out[k] = slice(off, off + size)
            off += size
        return out

    def validate_column(self, c):
        """Raise ValueError unless ``c`` is a valid column of this dictionary."""
        if not isinstance(c, ColumnId):
            raise ValueError(f"expected a ColumnId, got {c!r}")
        size = self.block_size(c.kind)
        if size == 0:
            raise ValueError(f"block {c.kind} is not present in this dictionary")
        if not 0 <= c.index < size:
            raise ValueError(
                f"{c.kind.value} index {c.index} out of range [0, {size - 1}]"
            )
        return c

    def column(self, kind, index):
        """Construct and validate a ColumnId for this dictionary."""
        return self.validate_column(ColumnId(kind, index))

    def columns(self):
        """All columns in flat order."""
        for k in KIND_ORDER:
            for j in range(self.block_size(k)):
                yield ColumnId(k, j)

    def flat_index(self, c):
        self.validate_column(c)
        return self.offset(c.kind) + c.index

    def column_at(self, flat):
        if not 0 <= flat < self.p:
            raise ValueError(f"flat index {flat} out of range [0, {self.p - 1}]")
        for k in KIND_ORDER:
            size = self.block_size(k)
            if flat < size:
                return ColumnId(k, flat)
            flat -= size
        raise AssertionError("unreachable")

    def bound_arrays(self):
        """Per-column (lower, upper) arrays with +-inf defaults."""
        lo = np.full(self.p, -np.inf)
        hi = np.full(self.p, np.inf)
        for k, sl in self.kind_slices().items():
            if k in self.bounds:
                lo[sl], hi[sl] = self.bounds[k]
        return lo, hi

    # -- caches -------------------------------------------------------------

    def _cached(self, key, build):
        try:
            return self._cache[key]
        except KeyError:
            pass
        with self._lock:
            if key not in self._cache:
                self._cache[key] = build()
            return self._cache[key]

    def _suffix_trig(self):
        """Suffix sums U[k, a] = sum_{t>=a} e^{i w_k t}, V: same with a t factor.

        O(n * len(omega)) to build, then every slope/step-vs-trig inner
        product is a lookup.  Only the vectorised bulk helpers use this;
        scalar ``gram_entry`` stays allocation-free.
        """

        def build():
            n, K = self.n, len(self.omega)
            U = np.zeros((K, n + 1), dtype=complex)
            V = np.zeros((K, n + 1), dtype=complex)
            t = np.arange(n)
            for k, w in enumerate(self.omega):
                e = np.exp(1j * w * t)
                U[k, :n] = e[::-1].cumsum()[::-1]
                V[k, :n] = (t * e)[::-1].cumsum()[::-1]
            return U, V

        return self._cached("suffix_trig", build)

    def _trig_gram(self):
        """Dense (2K x 2K) sine/cosine Gram block, built once."""

        def build():
            K = len(self.omega)
            cols = [ColumnId(Kind.SINE, k) for k in range(K)] + [
                ColumnId(Kind.COSINE, k) for k in range(K)
            ]
            G = np.empty((2 * K, 2 * K))
            for a, ca in enumerate(cols):
                for b in range(a, 2 * K):
                    G[a, b] = G[b, a] = gram_entry(self, ca, cols[b])
            return G

        return self._cached("trig_gram", build)


# ---------------------------------------------------------------------------
# geometric / polynomial sum primitives
# ---------------------------------------------------------------------------

_TWO_PI_HI = 6.283185307179586  # float(2*pi)
_TWO_PI_LO = 2.4492935982947064e-16  # 2*pi - _TWO_PI_HI, exactly
_SERIES_TERMS = 14


def _fold_angle(delta):
    """Reduce delta by multiples of 2*pi, keeping the sub-ulp residual."""
    k = round(delta / _TWO_PI_HI)
    if k == 0:
        return delta
    return (delta - k * _TWO_PI_HI) - k * _TWO_PI_LO


@lru_cache(maxsize=1024)
def _power_sums(m):
    """Exact P_j = sum_{t=0}^{m-1} t**j for j = 0..2*_SERIES_TERMS+2."""
    jmax = 2 * _SERIES_TERMS + 2
    P = [m]
    for j in range(1, jmax + 1):
        acc = m**(j + 1)
        for i in range(j):
            acc -= comb(j + 1, i) * P[i]
        P.append(acc // (j + 1))
    return tuple(P)


def _geom_sums(delta, m):
    """(sum_{t<m} e^{i d t}, sum_{t<m} t e^{i d t}) in O(1) arithmetic.

    Valid for any real delta; accurate to ~1e-13 absolute relative to the
    natural scale of each sum, including near delta = 0 mod 2*pi.
    """
    if m <= 0:
        return 0j, 0j
    eps = _fold_angle(delta)
    if eps == 0.0:
        return complex(m, 0.0), complex(0.5 * m * (m - 1), 0.0)
    if abs(eps) * (m - 1) < 1.0:
        P = _power_sums(m)
        re0 = im0 = re1 = im1 = 0.0
        even = 1.0  # eps**(2k) / (2k)!
        for k in range(_SERIES_TERMS):
            odd = even * eps / (2 * k + 1)  # eps**(2k+1) / (2k+1)!
            re0 += even * P[2 * k]
            re1 += even * P[2 * k + 1]
            im0 += odd * P[2 * k + 1]
            im1 += odd * P[2 * k + 2]
            even *= -(eps * eps) / ((2 * k + 1) * (2 * k + 2))
        return complex(re0, im0), complex(re1, im1)
    z = complex(math.cos(eps), math.sin(eps))
    zm = complex(math.cos(eps * m), math.sin(eps * m))
    denom = z - 1.0
    g0 = (zm - 1.0) / denom
    g1 = (z - m * zm + (m - 1) * z * zm) / (denom * denom)
    return g0, g1


def _trig_range_sums(w, a, n):
    """(sum_{t=a}^{n-1} e^{iwt}, sum_{t=a}^{n-1} t e^{iwt})."""
    m = n - a
    if m <= 0:
        return 0j, 0j
    g0, g1 = _geom_sums(w, m)
    phase = complex(math.cos(w * a), math.sin(w * a))
    return phase * g0, phase * (g1 + a * g0)


def _sum_range(a, b):
    """sum of t for t = a..b (0 when empty)."""
    if b < a:
        return 0
    return (a + b) * (b - a + 1) // 2


# ---------------------------------------------------------------------------
# element access and materialization
# ---------------------------------------------------------------------------


def column_value(spec, c, t):
    """Entry A[t, c] of the implicit dictionary."""
    spec.validate_column(c)
    if not 0 <= t < spec.n:
        raise ValueError(f"sample index {t} out of range [0, {spec.n - 1}]")
    j = c.index
    if c.kind is Kind.SLOPE:
        return float(max(t - j, 0))
    if c.kind is Kind.STEP:
        return 1.0 if t >= j + 1 else 0.0
    if c.kind is Kind.SPIKE:
        return 1.0 if t == j else 0.0
    if c.kind is Kind.SINE:
        return math.sin(spec.omega[j] * t)
    return math.cos(spec.omega[j] * t)


def materialize_column(spec, c):
    """Dense column vector; the brute-force oracle for the closed forms."""
    spec.validate_column(c)
    t = np.arange(spec.n)
    j = c.index
    if c.kind is Kind.SLOPE:
        return np.maximum(t - j, 0).astype(float)
    if c.kind is Kind.STEP:
        return (t >= j + 1).astype(float)
    if c.kind is Kind.SPIKE:
        col = np.zeros(spec.n)
        col[j] = 1.0
        return col
    if c.kind is Kind.SINE:
        return np.sin(spec.omega[j] * t)
    return np.cos(spec.omega[j] * t)


def materialize(spec):
    """Dense (n, p) dictionary matrix.  Test and oracle use only."""
    return np.column_stack([materialize_column(spec, c) for c in spec.columns()])


def synthesize(spec, theta):
    """Matrix-free A @ theta for a dense coefficient vector (O(n * nnz))."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (spec.p,):
        raise ValueError(f"expected a coefficient vector of length {spec.p}")
    out = np.zeros(spec.n)
    t = np.arange(spec.n)
    for flat in np.flatnonzero(theta):
        c = spec.column_at(int(flat))
        v = theta[flat]
        j = c.index
        if c.kind is Kind.SLOPE:
            out[j + 1 :] += v * (t[j + 1 :] - j)
        elif c.kind is Kind.STEP:
            out[j + 1 :] += v
        elif c.kind is Kind.SPIKE:
            out[j] += v
        elif c.kind is Kind.SINE:
            out += v * np.sin(spec.omega[j] * t)
        else:
            out += v * np.cos(spec.omega[j] * t)
    return out


# ---------------------------------------------------------------------------
# scalar Gram entries
# ---------------------------------------------------------------------------

_KIND_RANK = {k: i for i, k in enumerate(KIND_ORDER)}


def gram_entry(spec, a, b):
    """<A_a, A_b> in a bounded number of operations, independent of n."""
    spec.validate_column(a)
    spec.validate_column(b)
    if _KIND_RANK[a.kind] > _KIND_RANK[b.kind]:
        a, b = b, a
    n, i, j = spec.n, a.index, b.index

    if a.kind is Kind.SLOPE:
        if b.kind is Kind.SLOPE:
            lo, hi = (i, j) if i <= j else (j, i)
            m, d = n - 1 - hi, hi - lo
            return float(m * (m + 1) * (2 * m + 1) // 6 + d * m * (m + 1) // 2)
        if b.kind is Kind.STEP:
            start = max(i, j) + 1
            return float(_sum_range(start, n - 1) - i * (n - start))
        if b.kind is Kind.SPIKE:
            return float(max(j - i, 0))
        u, v = _trig_range_sums(spec.omega[j], i + 1, n)
        return (v.imag - i * u.imag) if b.kind is Kind.SINE else (v.real - i * u.real)

    if a.kind is Kind.STEP:
        if b.kind is Kind.STEP:
            return float(n - 1 - max(i, j))
        if b.kind is Kind.SPIKE:
            return 1.0 if j >= i + 1 else 0.0
        u, _ = _trig_range_sums(spec.omega[j], i + 1, n)
        return u.imag if b.kind is Kind.SINE else u.real

    if a.kind is Kind.SPIKE:
        if b.kind is Kind.SPIKE:
            return 1.0 if i == j else 0.0
        w = spec.omega[j]
        return math.sin(w * i) if b.kind is Kind.SINE else math.cos(w * i)

    wa, wb = spec.omega[i], spec.omega[j]
    gm, _ = _geom_sums(wa - wb, n)
    gp, _ = _geom_sums(wa + wb, n)
    if a.kind is Kind.SINE and b.kind is Kind.SINE:
        return 0.5 * (gm.real - gp.real)
    if a.kind is Kind.COSINE:  # both cosine (canonical order puts sine first)
        return 0.5 * (gm.real + gp.real)
    # sine(i) x cosine(j): sin A cos B = (sin(A+B) + sin(A-B)) / 2
    return 0.5 * (gp.imag + gm.imag)


# ---------------------------------------------------------------------------
# vectorised bulk queries (used by the solver's hot path)
# ---------------------------------------------------------------------------


def gram_diagonal(spec):
    """All <A_c, A_c> as a flat (p,) vector."""

    def build():
        n = spec.n
        parts = []
        if spec.block_size(Kind.SLOPE):
            m = n - 1 - np.arange(n - 1, dtype=float)
            parts.append(m * (m + 1) * (2 * m + 1) / 6.0)
        if spec.block_size(Kind.STEP):
            parts.append(n - 1 - np.arange(n - 1, dtype=float))
        if spec.block_size(Kind.SPIKE):
            parts.append(np.ones(n))
        K = spec.block_size(Kind.SINE)
        if K:
            g2 = np.array([_geom_sums(2 * w, n)[0].real for w in spec.omega])
            parts.append(0.5 * (n - g2))
            parts.append(0.5 * (n + g2))
        return np.concatenate(parts) if parts else np.zeros(0)

    return spec._cached("diag", build)


def _slope_cross(spec, i_arr, j, n):
    """<slope_i, slope_j> vectorised over i."""
    hi = np.maximum(i_arr, j)
    m = (n - 1 - hi).astype(float)
    d = np.abs(i_arr - j).astype(float)
    return m * (m + 1) * (2 * m + 1) / 6.0 + d * m * (m + 1) / 2.0


def _slope_step_cross(spec, slope_idx, step_idx, n):
    """<slope_i, step_j>, vectorised over either argument."""
    start = np.maximum(slope_idx, step_idx) + 1
    cnt = (n - start).astype(float)
    total = (start + n - 1) * cnt / 2.0
    return total - slope_idx * cnt


def gram_column(spec, flat):
    """Full Gram column <A_flat, A_i> for all i, as a (p,) vector.

    Uses cached suffix trig sums, so the first call pays O(n * len(omega));
    afterwards each column costs O(p).  Columns are cached per spec since
    the solver re-touches active columns constantly.
    """

    def build():
        c = spec.column_at(flat)
        n = spec.n
        j = c.index
        slices = spec.kind_slices()
        out = np.zeros(spec.p)
        K = len(spec.omega)
        if K and (spec.block_size(Kind.SINE) or spec.block_size(Kind.COSINE)):
            U, V = spec._suffix_trig()

        slope_idx = np.arange(spec.block_size(Kind.SLOPE))
        step_idx = np.arange(spec.block_size(Kind.STEP))
        spike_idx = np.arange(spec.block_size(Kind.SPIKE))

        if c.kind is Kind.SLOPE:
            if slope_idx.size:
                out[slices[Kind.SLOPE]] = _slope_cross(spec, slope_idx, j, n)
            if step_idx.size:
                out[slices[Kind.STEP]] = _slope_step_cross(spec, j, step_idx, n)
            if spike_idx.size:
                out[slices[Kind.SPIKE]] = np.maximum(spike_idx - j, 0.0)
            if K:
                u, v = U[:, j + 1], V[:, j + 1]
                out[slices[Kind.SINE]] = v.imag - j * u.imag
                out[slices[Kind.COSINE]] = v.real - j * u.real
        elif c.kind is Kind.STEP:
            if slope_idx.size:
                out[slices[Kind.SLOPE]] = _slope_step_cross(spec, slope_idx, j, n)
            if step_idx.size:
                out[slices[Kind.STEP]] = n - 1 - np.maximum(step_idx, j).astype(float)
            if spike_idx.size:
                out[slices[Kind.SPIKE]] = (spike_idx >= j + 1).astype(float)
            if K:
                u = U[:, j + 1]
                out[slices[Kind.SINE]] = u.imag
                out[slices[Kind.COSINE]] = u.real
        elif c.kind is Kind.SPIKE:
            if slope_idx.size:
                out[slices[Kind.SLOPE]] = np.maximum(j - slope_idx, 0.0)
            if step_idx.size:
                out[slices[Kind.STEP]] = (j >= step_idx + 1).astype(float)
            if spike_idx.size:
                out[spec.offset(Kind.SPIKE) + j] = 1.0
            if K:
                w = np.asarray(spec.omega)
                out[slices[Kind.SINE]] = np.sin(w * j)
                out[slices[Kind.COSINE]] = np.cos(w * j)
        else:  # SINE / COSINE
            trig_pos = (0 if c.kind is Kind.SINE else K) + j
            u, v = U[j][1:n], V[j][1:n]
            part = u.imag if c.kind is Kind.SINE else u.real
            tpart = v.imag if c.kind is Kind.SINE else v.real
            if slope_idx.size:
                out[slices[Kind.SLOPE]] = tpart - slope_idx * part
            if step_idx.size:
                out[slices[Kind.STEP]] = part
            if spike_idx.size:
                w = spec.omega[j]
                f = np.sin if c.kind is Kind.SINE else np.cos
                out[slices[Kind.SPIKE]] = f(w * spike_idx)
            if K:
                G = spec._trig_gram()
                out[slices[Kind.SINE]] = G[trig_pos, :K]
                out[slices[Kind.COSINE]] = G[trig_pos, K:]
        return out

    if not 0 <= flat < spec.p:
        raise ValueError(f"flat index {flat} out of range [0, {spec.p - 1}]")
    return spec._cached(("gram_col", flat), build)


# ---------------------------------------------------------------------------
# signal correlations
# ---------------------------------------------------------------------------

# cache: spec -> WeakKeyDictionary(signal-like object -> correlation vector)
_SIGNAL_CORR = weakref.WeakKeyDictionary()
_SIGNAL_CORR_LOCK = threading.Lock()


def _correlation_vector(spec, values):
    """<A_i, y> for every column, O(n + n*len(omega))."""
    y = np.asarray(values, dtype=float)
    if y.shape != (spec.n,):
        raise ValueError(f"signal length {y.shape} does not match n={spec.n}")
    n = spec.n
    t = np.arange(n)
    suf_y = np.zeros(n + 1)
    suf_ty = np.zeros(n + 1)
    suf_y[:n] = y[::-1].cumsum()[::-1]
    suf_ty[:n] = (t * y)[::-1].cumsum()[::-1]
    parts = []
    if spec.block_size(Kind.SLOPE):
        j = np.arange(n - 1)
        parts.append(suf_ty[j + 1] - j * suf_y[j + 1])
    if spec.block_size(Kind.STEP):
        j = np.arange(n - 1)
        parts.append(suf_y[j + 1])
    if spec.block_size(Kind.SPIKE):
        parts.append(y.copy())
    if spec.block_size(Kind.SINE):
        parts.append(np.array([np.sin(w * t) @ y for w in spec.omega]))
    if spec.block_size(Kind.COSINE):
        parts.append(np.array([np.cos(w * t) @ y for w in spec.omega]))
    return np.concatenate(parts) if parts else np.zeros(0)


def signal_correlations(spec, signal):
    """Cached <A_i, y> vector; ``signal`` may be a Signal or a plain array.

    The cache is keyed by (spec identity, signal object identity), so
    repeated queries against the same Signal are free after the first.
    Plain arrays are computed uncached.
    """
    values = getattr(signal, "values", signal)
    try:
        key_ok = True
        hash(signal)
    except TypeError:
        key_ok = False
    if not key_ok or isinstance(signal, np.ndarray):
        return _correlation_vector(spec, values)
    with _SIGNAL_CORR_LOCK:
        per_spec = _SIGNAL_CORR.setdefault(spec, weakref.WeakKeyDictionary())
        cached = per_spec.get(signal)
    if cached is None:
        cached = _correlation_vector(spec, values)
        with _SIGNAL_CORR_LOCK:
            per_spec[signal] = cached
    return cached


def column_dot_signal(spec, c, signal):
    """<A_c, y>; O(1) after the per-signal precomputation."""
    spec.validate_column(c)
    corr = signal_correlations(spec, signal)
    return float(corr[spec.flat_index(c)])
