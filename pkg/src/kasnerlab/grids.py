"""Numerical substrate: periodic spatial grids, log-uniform time grids, tensor
fields with enforced index symmetries, finite-difference derivatives, product
quadrature against power-law singular integrands, and Sobolev/sup norms.

Conventions used throughout the package:
  - spatial fields store their three grid axes LAST, so a frame field has
    shape (3, 3, n, n, n) and a scalar (n, n, n);
  - time-sampled series store the time-node axis FIRST;
  - all finite differences are centered in the interior; periodic mode wraps,
    localized mode switches to one-sided stencils of the same order at faces.

Non-periodic data sampled on a periodic grid (e.g. f = x1) is NOT rejected:
the wrap-around stencil sees the sawtooth jump and produces large derivatives
near the seam. Callers own the periodicity of their data; the asymptotic-data
generator reports seam mismatch explicitly.
"""

import math

import numpy as np

from .errors import GridError, NonIntegrableError, SymmetryError

PERIODIC = "periodic"
LOCALIZED = "localized"

SYM_NONE = "none"
SYM_SYMMETRIC = "symmetric_2"
SYM_ANTISYM_LAST2 = "antisymmetric_last_2"

_SYMMETRIES = (SYM_NONE, SYM_SYMMETRIC, SYM_ANTISYM_LAST2)


class SpatialGrid:
    """Uniform cubic grid on [0, delta]^3 with n_pts points per axis.

    In periodic mode the point x = delta is identified with x = 0 and is not
    stored, so the spacing is h = delta / n_pts.
    """

    def __init__(self, delta, n_pts, mode=PERIODIC):
        if not (delta > 0):
            raise GridError(f"delta must be positive, got {delta}")
        n_pts = int(n_pts)
        if n_pts < 8:
            raise GridError(f"n_pts must be >= 8 per axis, got {n_pts}")
        if mode not in (PERIODIC, LOCALIZED):
            raise GridError(f"unknown grid mode {mode!r}")
        self.delta = float(delta)
        self.n_pts = n_pts
        self.mode = mode
        self.h = self.delta / n_pts
        self.shape = (n_pts, n_pts, n_pts)

    @property
    def cell_volume(self):
        return self.h**3

    def axis_coords(self):
        """1-d coordinate array shared by the three axes."""
        return self.h * np.arange(self.n_pts)

    def mesh(self, axis):
        """Coordinate array of x^axis (axis in 1..3) broadcastable to shape."""
        if axis not in (1, 2, 3):
            raise GridError(f"axis must be 1..3, got {axis}")
        shape = [1, 1, 1]
        shape[axis - 1] = self.n_pts
        return self.axis_coords().reshape(shape)

    def __eq__(self, other):
        return (
            isinstance(other, SpatialGrid)
            and self.delta == other.delta
            and self.n_pts == other.n_pts
            and self.mode == other.mode
        )

    def __repr__(self):
        return f"SpatialGrid(delta={self.delta}, n_pts={self.n_pts}, mode={self.mode!r})"


class LogTimeGrid:
    """n_steps nodes uniform in log t on [t_min, t_max], endpoints included."""

    def __init__(self, t_min, t_max, n_steps):
        if not (0 < t_min < t_max):
            raise GridError(f"need 0 < t_min < t_max, got ({t_min}, {t_max})")
        n_steps = int(n_steps)
        if n_steps < 2:
            raise GridError(f"n_steps must be >= 2, got {n_steps}")
        self.t_min = float(t_min)
        self.t_max = float(t_max)
        self.n_steps = n_steps
        self.s = np.linspace(math.log(t_min), math.log(t_max), n_steps)
        self.times = np.exp(self.s)
        # pin the endpoints exactly despite exp/log rounding
        self.times[0] = self.t_min
        self.times[-1] = self.t_max
        self.h_s = (self.s[-1] - self.s[0]) / (n_steps - 1)

    def index_of(self, t):
        """Node index of t; error if t is not a node (within rounding)."""
        s = math.log(t)
        j = int(round((s - self.s[0]) / self.h_s))
        if j < 0 or j >= self.n_steps or abs(self.s[j] - s) > 1e-9 * (1 + abs(s)):
            raise GridError(f"t={t} is not a node of {self!r}")
        return j

    def nearest_index(self, t):
        j = int(round((math.log(t) - self.s[0]) / self.h_s))
        return min(max(j, 0), self.n_steps - 1)

    def __eq__(self, other):
        return (
            isinstance(other, LogTimeGrid)
            and self.t_min == other.t_min
            and self.t_max == other.t_max
            and self.n_steps == other.n_steps
        )

    def __repr__(self):
        return f"LogTimeGrid({self.t_min!r}, {self.t_max!r}, {self.n_steps})"


def _check_finite(values, what):
    if not np.all(np.isfinite(values)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(values))[0])
        raise GridError(f"{what} has non-finite value at index {bad}")


def _check_symmetry(values, symmetry, rank):
    scale = float(np.max(np.abs(values))) if values.size else 0.0
    tol = 1e-12 * scale + 1e-300
    if symmetry == SYM_SYMMETRIC:
        if rank != 2:
            raise SymmetryError("symmetric_2 tag requires rank 2")
        dev = float(np.max(np.abs(values - values.swapaxes(0, 1))))
        if dev > tol:
            raise SymmetryError(f"symmetric_2 violated by {dev:.3e} (scale {scale:.3e})")
    elif symmetry == SYM_ANTISYM_LAST2:
        if rank != 3:
            raise SymmetryError("antisymmetric_last_2 tag requires rank 3")
        dev = float(np.max(np.abs(values + values.swapaxes(1, 2))))
        if dev > tol:
            raise SymmetryError(f"antisymmetric_last_2 violated by {dev:.3e} (scale {scale:.3e})")


class ScalarField:
    """Real scalar field sampled on a SpatialGrid."""

    rank = 0
    symmetry = SYM_NONE

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise GridError(f"scalar values shape {values.shape} != grid shape {grid.shape}")
        _check_finite(values, "ScalarField")
        self.grid = grid
        self.values = values


class TensorField:
    """Tensor field with 1..3 frame/coordinate indices ahead of the grid axes.

    The symmetry tag is enforced on construction (to rounding); hot loops work
    on raw arrays and wrap results at module boundaries.
    """

    def __init__(self, grid, values, symmetry=SYM_NONE):
        values = np.asarray(values, dtype=float)
        rank = values.ndim - 3
        if rank not in (1, 2, 3) or values.shape[rank:] != grid.shape:
            raise GridError(
                f"tensor values shape {values.shape} incompatible with grid shape {grid.shape}"
            )
        if values.shape[:rank] != (3,) * rank:
            raise GridError(f"tensor index dimensions must be 3, got {values.shape[:rank]}")
        if symmetry not in _SYMMETRIES:
            raise GridError(f"unknown symmetry tag {symmetry!r}")
        _check_finite(values, "TensorField")
        _check_symmetry(values, symmetry, rank)
        self.grid = grid
        self.values = values
        self.rank = rank
        self.symmetry = symmetry


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

# one-sided first-derivative rows (order 4 -> 5-point, order 2 -> 3-point),
# row i = stencil for node i counted from the boundary
_ONESIDED = {
    4: np.array(
        [
            [-25.0, 48.0, -36.0, 16.0, -3.0],
            [-3.0, -10.0, 18.0, -6.0, 1.0],
        ]
    )
    / 12.0,
    2: np.array([[-3.0, 4.0, -1.0]]) / 2.0,
}


def _fd_periodic(values, axis, order, h):
    if order == 4:
        # difference grouping keeps the stencil exactly zero on fields that
        # are constant along the axis (rolls are then bitwise equal)
        return (
            8.0 * (np.roll(values, -1, axis) - np.roll(values, 1, axis))
            - (np.roll(values, -2, axis) - np.roll(values, 2, axis))
        ) / (12.0 * h)
    return (np.roll(values, -1, axis) - np.roll(values, 1, axis)) / (2.0 * h)


def _fd_onesided_patch(df, values, axis, order, h):
    """Overwrite the face slabs of a centered derivative with one-sided rows."""
    rows = _ONESIDED[order]
    width = rows.shape[1]
    n = values.shape[axis]
    for i, row in enumerate(rows):
        # leading face, node i
        lead = sum(row[m] * np.take(values, m, axis=axis) for m in range(width)) / h
        # trailing face, node n-1-i (mirrored, sign flipped)
        trail = -sum(row[m] * np.take(values, n - 1 - m, axis=axis) for m in range(width)) / h
        idx_lead = [slice(None)] * values.ndim
        idx_lead[axis] = i
        idx_trail = [slice(None)] * values.ndim
        idx_trail[axis] = n - 1 - i
        df[tuple(idx_lead)] = lead
        df[tuple(idx_trail)] = trail
    return df


def fd_diff(values, axis, order, h, mode=PERIODIC):
    """First derivative along a spatial axis of a raw array.

    axis counts from the END: axis=1..3 addresses the three trailing grid
    axes, so the same call works for scalars, tensors, and time series.
    """
    if order not in (2, 4):
        raise GridError(f"stencil order must be 2 or 4, got {order}")
    ax = values.ndim - 3 + (axis - 1)
    if values.shape[ax] < order + 1:
        raise GridError("grid too small for requested stencil order")
    df = _fd_periodic(values, ax, order, h)
    if mode == LOCALIZED:
        _fd_onesided_patch(df, values, ax, order, h)
    return df


def fd_derivative(f, axis, order=4):
    """Spec-facing wrapper: derivative of a Scalar/TensorField along x^axis."""
    if axis not in (1, 2, 3):
        raise GridError(f"axis must be 1..3, got {axis}")
    grid = f.grid
    df = fd_diff(f.values, axis, order, grid.h, grid.mode)
    if isinstance(f, ScalarField):
        return ScalarField(grid, df)
    return TensorField(grid, df, symmetry=SYM_NONE)


def fd_time_diff(series, h_s, order=4):
    """d/ds along the leading (time-node) axis; one-sided rows at the ends.

    Series are sampled uniformly in s = log t, so d/dt = (1/t) d/ds.
    """
    if order not in (2, 4):
        raise GridError(f"stencil order must be 2 or 4, got {order}")
    n = series.shape[0]
    if n < (5 if order == 4 else 3):
        raise GridError(f"need at least {5 if order == 4 else 3} time nodes for order {order}")
    ds = np.empty_like(series)
    if order == 4:
        ds[2:-2] = (series[:-4] - 8.0 * series[1:-3] + 8.0 * series[3:-1] - series[4:]) / 12.0
    else:
        ds[1:-1] = (series[2:] - series[:-2]) / 2.0
    rows = _ONESIDED[order]
    width = rows.shape[1]
    for i, row in enumerate(rows):
        ds[i] = sum(row[m] * series[m] for m in range(width))
        ds[n - 1 - i] = -sum(row[m] * series[n - 1 - m] for m in range(width))
    return ds / h_s


# ---------------------------------------------------------------------------
# singular product quadrature in log time
# ---------------------------------------------------------------------------


def _tail_below_first_node(m, h_s):
    """Power-law closure of int_0^{t_min} g dtau from the first two samples.

    m holds tau*g at the nodes. Fitting m ~ A exp(q s) from nodes 0 and 1
    gives tail = m_0/q, valid when q > 0 (g integrable). The validity tests
    are per component (scale = max of |m| along the time axis): a head at
    its own rounding floor, a sign flip between the first two nodes, or a
    non-growing head all mean no resolvable integrable power law, and the
    component contributes zero tail. Non-integrable growth is flagged only
    when the head is itself the series maximum and fails to grow along s;
    a decreasing head buried far below the series scale is cancellation
    noise, not divergence.
    """
    m0, m1 = m[0], m[1]
    a0, a1 = np.abs(m0), np.abs(m1)
    comp_scale = np.max(np.abs(m), axis=0)
    negligible = (a0 <= 1e-8 * comp_scale) | (a1 <= 1e-8 * comp_scale)
    signflip = (m0 * m1) < 0
    ok = ~(negligible | signflip)
    q = np.zeros_like(a0)
    np.divide(np.log(np.where(a1 > 0, a1, 1.0)) - np.log(np.where(a0 > 0, a0, 1.0)), h_s, out=q, where=ok)
    bad = ok & (q <= 1e-12) & (a0 >= 0.5 * comp_scale)
    if np.any(bad):
        comp = tuple(int(i) for i in np.argwhere(bad)[0])
        raise NonIntegrableError(
            f"non-integrable growth toward t=0 in component {comp}: "
            f"integrand head dominates the series and does not decay "
            f"(|m0|={a0[comp]:.3e}, |m1|={a1[comp]:.3e})"
        )
    ok &= q > 1e-12
    tail = np.zeros_like(m0)
    np.divide(m0, np.where(ok, q, 1.0), out=tail, where=ok)
    return tail


def log_time_cumint(samples, tgrid, with_tail=True):
    """Cumulative integral F_j = int_0^{t_j} g dtau for g sampled at the nodes.

    Trapezoid in s = log tau applied to m = tau*g, plus the fitted power-law
    tail below t_min. Works on any trailing shape; time axis leads.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] != tgrid.n_steps:
        raise GridError("sample count does not match time grid")
    m = samples * tgrid.times.reshape((-1,) + (1,) * (samples.ndim - 1))
    if not np.all(np.isfinite(m)):
        raise NonIntegrableError("non-finite samples passed to the log-time quadrature")
    out = np.empty_like(m)
    if with_tail:
        out[0] = _tail_below_first_node(m, tgrid.h_s)
    else:
        out[0] = 0.0
    np.cumsum(0.5 * tgrid.h_s * (m[1:] + m[:-1]), axis=0, out=out[1:])
    out[1:] += out[0]
    return out


def log_time_integral(samples, tgrid, t_target=None):
    """int_0^{t_target} g dtau; t_target must be a node (default t_max)."""
    j = tgrid.n_steps - 1 if t_target is None else tgrid.index_of(t_target)
    return log_time_cumint(samples, tgrid)[j]


def interp_log_time(series, tgrid, t):
    """Cubic (4-point Lagrange in s = log t) interpolation of a node series."""
    s = math.log(t)
    if not (tgrid.s[0] - 1e-12 <= s <= tgrid.s[-1] + 1e-12):
        raise GridError(f"t={t} outside time grid [{tgrid.t_min}, {tgrid.t_max}]")
    n = tgrid.n_steps
    if n < 4:
        raise GridError("cubic interpolation needs at least 4 nodes")
    j = int(np.floor((s - tgrid.s[0]) / tgrid.h_s)) - 1
    j = min(max(j, 0), n - 4)
    sn = tgrid.s[j : j + 4]
    w = np.ones(4)
    for i in range(4):
        for k in range(4):
            if k != i:
                w[i] *= (s - sn[k]) / (sn[i] - sn[k])
    return np.tensordot(w, series[j : j + 4], axes=(0, 0))


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


def _derivative_pyramid(values, grid, s, order):
    """All FD derivatives d^alpha (|alpha| <= s) of a raw component array.

    Built level by level so each multi-index costs one derivative call.
    Returns a dict alpha-tuple -> array.
    """
    pyramid = {(0, 0, 0): values}
    frontier = [(0, 0, 0)]
    for _ in range(s):
        nxt = []
        for alpha in frontier:
            for axis in range(3):
                beta = list(alpha)
                beta[axis] += 1
                beta = tuple(beta)
                if beta in pyramid:
                    continue
                # extend along the lowest incremented axis for determinism
                pyramid[beta] = fd_diff(pyramid[alpha], axis + 1, order, grid.h, grid.mode)
                nxt.append(beta)
        frontier = nxt
    return pyramid


def _component_iter(fields):
    if not isinstance(fields, (list, tuple)):
        fields = [fields]
    for f in fields:
        v = f.values
        rank = getattr(f, "rank", v.ndim - 3)
        grid = f.grid
        if rank == 0:
            yield grid, v
        else:
            flat = v.reshape((-1,) + grid.shape)
            for comp in flat:
                yield grid, comp


def hs_norm(fields, s, volume_weight=None, order=4):
    """Volume-weighted Sobolev norm ( sum_{|alpha|<=s} int (d^alpha f)^2 vol )^{1/2}.

    fields: a Scalar/TensorField or list of them (component squares add).
    volume_weight: strictly positive scalar weight (defaults to 1).
    """
    if not 0 <= s <= 4:
        raise GridError(f"s must be in 0..4, got {s}")
    if volume_weight is not None:
        w = volume_weight.values if isinstance(volume_weight, ScalarField) else np.asarray(volume_weight)
        if np.any(w <= 0):
            raise GridError("volume weight must be strictly positive")
    else:
        w = 1.0
    total = 0.0
    grid_seen = None
    for grid, comp in _component_iter(fields):
        grid_seen = grid
        pyramid = _derivative_pyramid(comp, grid, s, order)
        for alpha, arr in pyramid.items():
            if sum(alpha) <= s:
                total += float(np.sum(arr * arr * w))
    if grid_seen is None:
        return 0.0
    return math.sqrt(total * grid_seen.cell_volume)


def ws_norm(fields, s, order=4):
    """Sup-norm counterpart: max_{|alpha|<=s} sup |d^alpha f|."""
    if not 0 <= s <= 4:
        raise GridError(f"s must be in 0..4, got {s}")
    best = 0.0
    for grid, comp in _component_iter(fields):
        pyramid = _derivative_pyramid(comp, grid, s, order)
        for alpha, arr in pyramid.items():
            if sum(alpha) <= s:
                best = max(best, float(np.max(np.abs(arr))))
    return best
