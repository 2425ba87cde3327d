"""Real-zero counting for one sample: adaptive sign-change detection and the
finite-delta Kac-Rice functional, with the endpoint/margin validity guard.

Counting is half-open on [a, b): a crossing exactly at b belongs to the next
interval, which makes interval additivity an exact integer identity.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix

from .basis import TAU_DEFAULT, WeylSample, evaluate_at, window_bounds, _lgamma
from .errors import ConfigError

DEFAULT_H0 = 0.02
DEFAULT_THETA = 5.0
REFINE_FLOOR = 1e-4
BISECT_XTOL = 1e-10

# same-sign cells whose endpoint |p| exceeds 4 (cell width)^2 cannot dip to
# zero unless |p''| > 32, far above bulk scale; used to prune pair hunting
_DIP_CURVATURE = 4.0

# |p|+|p'| grid values above this never hide a sub-delta continuum minimum
# at default deltas (delta <= 1e-5 in every supported configuration)
_METRIC_REFINE_CUTOFF = 5e-3


@dataclass(frozen=True)
class IntervalSpec:
    """Interval [a, b] in the soft-edge-guarded bulk, in [c1*M, c2*M] form.

    The guard requires b <= sqrt(n) - n^(guard_exponent/2) at validation time
    unless edge_mode is set.
    """

    a: float
    b: float
    guard_exponent: float = 0.2
    edge_mode: bool = False

    def __post_init__(self):
        if not (0 <= self.a < self.b):
            raise ConfigError(f"need 0 <= a < b, got [{self.a}, {self.b}]")
        if not 0 < self.guard_exponent < 1:
            raise ConfigError("guard_exponent must be in (0, 1)")

    @property
    def M(self):
        return self.b

    @property
    def c1(self):
        return self.a / self.b

    @property
    def c2(self):
        return 1.0

    def validate_for_degree(self, n):
        if self.edge_mode:
            return
        guard = n ** (self.guard_exponent / 2.0)
        if self.b > math.sqrt(n) - guard:
            raise ConfigError(
                f"b={self.b} violates soft-edge guard sqrt({n}) - {guard:.3g}; "
                "set edge_mode to override"
            )

    def delta(self, theta=DEFAULT_THETA):
        if theta <= 0:
            raise ConfigError("theta must be > 0")
        return self.M**-theta


@dataclass
class RootCountResult:
    count: int
    roots: np.ndarray
    validity: bool
    delta_used: float
    kac_rice_value: float = field(default=math.nan)


class GridKernel:
    """Precomputed banded basis matrices on a fixed scan grid.

    Row j holds the window weights at grid[j]; value and derivative matrices
    give (P, P') for one coefficient vector, or for a whole batch at once, as
    sparse-dense products.  Construction is done once per configuration and
    shared read-only across trials.
    """

    def __init__(self, n, a, b, h0=DEFAULT_H0, tau=TAU_DEFAULT):
        if h0 <= 0:
            raise ConfigError("scan step must be > 0")
        self.n = int(n)
        m = max(1, int(math.ceil((b - a) / h0 - 1e-9)))
        self.grid = np.linspace(a, b, m + 1)
        self.h0 = float(h0)
        self.tau = float(tau)
        self._build()

    def _build(self):
        n = self.n
        los, his = [], []
        for x in self.grid:
            lo, hi, _ = window_bounds(x, n, self.tau)
            los.append(lo)
            his.append(hi)
        counts = np.array(his) - np.array(los) + 1
        indptr = np.concatenate([[0], np.cumsum(counts)])
        idx = np.concatenate([np.arange(lo, hi + 1) for lo, hi in zip(los, his)])
        xr = np.repeat(self.grid, counts)
        lgam = _lgamma(idx)
        with np.errstate(divide="ignore", invalid="ignore"):
            logw = -0.5 * xr * xr + idx * np.log(xr) - 0.5 * lgam
            data = np.where(logw > -700.0, np.exp(np.maximum(logw, -700.0)), 0.0)
            ddata = np.where(xr > 0, data * (idx - xr * xr) / np.where(xr > 0, xr, 1.0), 0.0)
        if self.grid[0] == 0.0:  # P(0) = xi_0, P'(0) = xi_1
            data[indptr[0] : indptr[1]] = 0.0
            ddata[indptr[0] : indptr[1]] = 0.0
            data[indptr[0]] = 1.0
            if n >= 1:
                ddata[indptr[0] + 1] = 1.0
        shape = (self.grid.size, n + 1)
        self.value_matrix = csr_matrix((data, idx, indptr), shape=shape)
        self.deriv_matrix = csr_matrix((ddata, idx, indptr), shape=shape)

    def values(self, coeffs):
        """(P, P') on the grid; `coeffs` is (n+1,) or (n+1, batch)."""
        return self.value_matrix @ coeffs, self.deriv_matrix @ coeffs


def _bisect_root(f, lo, hi, flo, xtol=BISECT_XTOL):
    neg_lo = flo < 0
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if (f(mid) < 0) == neg_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _hunt_same_sign_cell(f, lo, hi, flo, fhi, delta, floor=REFINE_FLOOR):
    """Search a same-sign cell for a hidden even number of crossings.

    Recursive halving down to `floor`; returns (roots, ambiguous).  ambiguous
    is set when the floor is hit with |p| still below 10*delta, i.e. the cell
    cannot be certified either way.  Cells whose endpoint values exceed the
    curvature dip bound cannot reach zero inside and resolve immediately.
    """
    if flo == 0.0 or fhi == 0.0:
        return [], False  # root exactly on the boundary; owned by the flip scan
    if min(abs(flo), abs(fhi)) > _DIP_CURVATURE * (hi - lo) ** 2:
        return [], False
    if hi - lo <= floor:
        return [], min(abs(flo), abs(fhi)) < 10.0 * delta
    mid = 0.5 * (lo + hi)
    fmid = f(mid)
    if (fmid < 0) != (flo < 0):
        return [
            _bisect_root(f, lo, mid, flo),
            _bisect_root(f, mid, hi, fmid),
        ], False
    r1, a1 = _hunt_same_sign_cell(f, lo, mid, flo, fmid, delta, floor)
    r2, a2 = _hunt_same_sign_cell(f, mid, hi, fmid, fhi, delta, floor)
    return r1 + r2, a1 or a2


def _value_fn(sample):
    return lambda x: evaluate_at(sample, x)[0]


def count_sign_changes(sample: WeylSample, iv: IntervalSpec, h0=DEFAULT_H0,
                       kernel: GridKernel | None = None, theta=DEFAULT_THETA):
    """Roots of the sample in [a, b) by grid scan plus bisection refinement.

    Bracketing cells are bisected to abscissa tolerance 1e-10; same-sign cells
    that could hide a near-double pair (both endpoint values below 10*delta,
    or an interior extremum with a small endpoint value) are recursively
    halved down to step 1e-4.
    """
    if kernel is None:
        kernel = GridKernel(sample.n, iv.a, iv.b, h0)
    delta = iv.delta(theta)
    p, dp = kernel.values(sample.coeffs)
    f = _value_fn(sample)
    grid = kernel.grid
    neg = p < 0
    flips = np.nonzero(neg[1:] != neg[:-1])[0]
    roots = [_bisect_root(f, grid[j], grid[j + 1], p[j]) for j in flips]
    ambiguous = False
    for j in _suspicious_cells(p, dp, neg, grid, delta):
        found, amb = _hunt_same_sign_cell(f, grid[j], grid[j + 1], p[j], p[j + 1], delta)
        roots.extend(found)
        ambiguous = ambiguous or amb
    roots = np.array(sorted(r for r in roots if iv.a <= r < iv.b))
    return RootCountResult(
        count=roots.size, roots=roots, validity=not ambiguous, delta_used=delta
    )


def _suspicious_cells(p, dp, neg, grid, delta):
    """Same-sign cells worth hunting: tiny endpoint values, or an interior
    extremum whose endpoint value is within dip range of zero."""
    h = grid[1] - grid[0] if grid.size > 1 else 0.0
    same = neg[1:] == neg[:-1]
    end_min = np.minimum(np.abs(p[1:]), np.abs(p[:-1]))
    tiny_both = np.maximum(np.abs(p[1:]), np.abs(p[:-1])) < 10.0 * delta
    dneg = dp < 0
    extremum = dneg[1:] != dneg[:-1]
    dip_possible = end_min < _DIP_CURVATURE * h * h
    return np.nonzero(same & (tiny_both | (extremum & dip_possible)))[0]


def validity_check(sample: WeylSample, iv: IntervalSpec, delta,
                   h0=DEFAULT_H0, kernel: GridKernel | None = None):
    """True iff |P(a)|, |P(b)| > delta and the refined grid minimum of
    |P| + |P'| exceeds delta."""
    if kernel is None:
        kernel = GridKernel(sample.n, iv.a, iv.b, h0)
    p, dp = kernel.values(sample.coeffs)
    if abs(p[0]) <= delta or abs(p[-1]) <= delta:
        return False
    metric = np.abs(p) + np.abs(dp)
    if metric.min() <= delta:
        return False
    grid = kernel.grid
    cells = np.nonzero(np.minimum(metric[1:], metric[:-1]) < _METRIC_REFINE_CUTOFF)[0]
    for j in cells:
        if _refined_metric_min(sample, grid[j], grid[j + 1]) <= delta:
            return False
    return True


def _refined_metric_min(sample, lo, hi, step=REFINE_FLOOR):
    xs = np.arange(lo, hi + step, step)
    vals = [sum(map(abs, evaluate_at(sample, x))) for x in xs]
    return min(vals)


def kac_rice_count(sample: WeylSample, iv: IntervalSpec, delta,
                   h0=DEFAULT_H0, kernel: GridKernel | None = None,
                   roots: np.ndarray | None = None):
    """(1/2 delta) * integral of |P'| over the |P| < delta excursions.

    Each detected root's excursion boundaries are located by bisection on
    |P| - delta, then |P'| is integrated over the excursion with adaptive
    Gauss-Legendre panels to 1e-6 relative.
    """
    if delta <= 0:
        raise ConfigError("delta must be > 0")
    if roots is None:
        roots = count_sign_changes(sample, iv, h0, kernel=kernel).roots
    f = _value_fn(sample)
    total = 0.0
    for r in roots:
        xl = _excursion_boundary(sample, f, r, delta, -1, iv.a)
        xr = _excursion_boundary(sample, f, r, delta, +1, iv.b)
        total += _integrate_abs_deriv(sample, xl, xr)
    return total / (2.0 * delta)


def _excursion_boundary(sample, f, root, delta, direction, limit):
    """Abscissa where |P| grows back to delta on one side of a root."""
    dp = abs(evaluate_at(sample, root)[1])
    step = delta / max(dp, 1e-12)
    x = root
    for _ in range(200):
        x_next = root + direction * step
        if (direction < 0 and x_next <= limit) or (direction > 0 and x_next >= limit):
            x_next = limit
        if abs(f(x_next)) >= delta or x_next == limit:
            break
        x = x_next
        step *= 2.0
    else:
        return limit
    if x_next == limit and abs(f(limit)) < delta:
        return limit
    lo, hi = (x_next, x) if direction < 0 else (x, x_next)
    # bisect |P| - delta; inside end is < 0 by construction
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        inside = abs(f(mid)) < delta
        if direction < 0:
            if inside:
                hi = mid
            else:
                lo = mid
        else:
            if inside:
                lo = mid
            else:
                hi = mid
    return 0.5 * (lo + hi)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _abs_deriv_panel(sample, lo, hi):
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    vals = [abs(evaluate_at(sample, mid + half * t)[1]) for t in _GL_NODES]
    return half * float(_GL_WEIGHTS @ vals)


def _integrate_abs_deriv(sample, lo, hi, rel=1e-6, max_depth=12):
    if hi <= lo:
        return 0.0
    whole = _abs_deriv_panel(sample, lo, hi)
    stack = [(lo, hi, whole, 0)]
    total = 0.0
    while stack:
        a, b, coarse, depth = stack.pop()
        m = 0.5 * (a + b)
        left = _abs_deriv_panel(sample, a, m)
        right = _abs_deriv_panel(sample, m, b)
        fine = left + right
        if abs(fine - coarse) <= rel * max(abs(fine), 1e-300) or depth >= max_depth:
            total += fine
        else:
            stack.append((a, m, left, depth + 1))
            stack.append((m, b, right, depth + 1))
    return total


def analyze(sample: WeylSample, iv: IntervalSpec, h0=DEFAULT_H0,
            theta=DEFAULT_THETA, kernel: GridKernel | None = None):
    """Full per-sample result: count, roots, Kac-Rice value, validity."""
    if kernel is None:
        kernel = GridKernel(sample.n, iv.a, iv.b, h0)
    delta = iv.delta(theta)
    res = count_sign_changes(sample, iv, h0, kernel=kernel, theta=theta)
    valid = res.validity and validity_check(sample, iv, delta, h0, kernel=kernel)
    kr = kac_rice_count(sample, iv, delta, h0, kernel=kernel, roots=res.roots)
    return RootCountResult(
        count=res.count,
        roots=res.roots,
        validity=valid,
        delta_used=delta,
        kac_rice_value=kr,
    )
