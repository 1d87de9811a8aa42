"""Chordal Loewner evolution: forward flow, capacity, zipper extraction.

The driving process steers d(g_t(z))/dt = 2 / (g_t(z) - W_t) with g_0 = id;
time is half-plane capacity.  Discrete paths are encoded and decoded with
vertical-slit elementary maps: the map removing the slit of capacity d based
at x is z -> x + sqrt((z-x)^2 + 4d), whose inverse regrows it.  Composing
tip-based slit maps makes trace and extraction exact inverses of each other
on matching step grids, so roundtrip error measures only resampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (GridMismatchError, InvalidPathError, PreconditionError,
                     SwallowedError)


def sqrt_upper(w):
    """Square root branch with nonnegative imaginary part."""
    s = np.sqrt(np.asarray(w, dtype=complex))
    return np.where(s.imag < 0, -s, s)


@dataclass(eq=False)
class DrivingFunction:
    """Sampled driving process in half-plane-capacity time.

    Values between samples are interpolated piecewise-linearly.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if len(self.times) != len(self.values):
            raise PreconditionError("times and values must have equal length")
        if len(self.times) == 0 or self.times[0] != 0.0:
            raise PreconditionError("driving time grid must start at 0")
        if np.any(np.diff(self.times) <= 0):
            raise PreconditionError("driving times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise PreconditionError("driving values must be finite")

    def __call__(self, t):
        return np.interp(t, self.times, self.values)

    @property
    def horizon(self):
        return float(self.times[-1])

    def to_csv_rows(self):
        for t, w in zip(self.times, self.values):
            yield t, w


@dataclass(eq=False)
class HalfPlanePath:
    """Planar path in the closed upper half plane, sampled at points."""

    points: np.ndarray
    capacity_times: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=complex)
        if self.capacity_times is not None:
            self.capacity_times = np.asarray(self.capacity_times, dtype=float)

    def __len__(self):
        return len(self.points)


def sample_sle4_driving(horizon, step, seed):
    """Driving equal to twice a standard Brownian motion, sampled on a grid."""
    if horizon <= 0 or step <= 0:
        raise PreconditionError("horizon and step must be positive")
    n = int(np.ceil(horizon / step))
    rng = np.random.default_rng(seed)
    incr = 2.0 * np.sqrt(step) * rng.standard_normal(n)
    values = np.concatenate([[0.0], np.cumsum(incr)])
    times = step * np.arange(n + 1)
    return DrivingFunction(times=times, values=values)


def sample_sle4_driving_batch(horizon, step, seed, size):
    """Matrix of independent driving samples, rows indexed by replicate."""
    n = int(np.ceil(horizon / step))
    rng = np.random.default_rng(seed)
    incr = 2.0 * np.sqrt(step) * rng.standard_normal((size, n))
    values = np.concatenate([np.zeros((size, 1)), np.cumsum(incr, axis=1)], axis=1)
    times = step * np.arange(n + 1)
    return times, values


def solve_forward(W, z, t, swallow_cutoff=1e-6, rtol=1e-11, atol=1e-13):
    """Flow a single point to time t with adaptive error control.

    Integrates u = (g - W)^2, whose equation du/dt = 4 - 2*W'(t)*sqrt(u) is
    regular where the direct flow is singular; a point brushing the tip
    transversally (e.g. a point on the trace of a straight slit) is carried
    through analytically.  A point whose u ends captured at 0 is reported
    with SwallowedError at the first capture time.  Driving samples are
    extended constantly beyond their horizon.
    """
    if t < 0:
        raise PreconditionError("time must be nonnegative")
    if t == 0:
        return complex(z)

    times, vals = W.times, W.values

    def rhs(s, y, slope):
        u = complex(y[0], y[1])
        v = np.sqrt(u)
        if v.imag < 0:
            v = -v
        du = 4.0 - 2.0 * slope * v
        return [du.real, du.imag]

    knots = times[(times > 0) & (times < t)]
    segments = np.concatenate([[0.0], knots, [t]])
    u0 = (complex(z) - vals[0]) ** 2
    y = [u0.real, u0.imag]
    first_touch = None
    for a, b in zip(segments[:-1], segments[1:]):
        wa, wb = np.interp(a, times, vals), np.interp(b, times, vals)
        slope = (wb - wa) / (b - a)
        sol = solve_ivp(rhs, (a, b), y, args=(slope,), rtol=rtol, atol=atol)
        if not sol.success:
            raise SwallowedError(b, point=z)
        if first_touch is None:
            mags = np.hypot(sol.y[0], sol.y[1])
            hits = np.flatnonzero(mags < swallow_cutoff ** 2)
            if hits.size:
                first_touch = sol.t[hits[0]]
        y = sol.y[:, -1]
    u_end = complex(y[0], y[1])
    if abs(u_end) < swallow_cutoff ** 2:
        raise SwallowedError(first_touch if first_touch is not None else t, point=z)
    v = np.sqrt(u_end)
    if v.imag < 0:
        v = -v
    return complex(v + np.interp(t, times, vals))


def slit_step(g, x, cap, deriv=None):
    """Exact one-step flow growing the vertical slit of capacity ``cap`` at x.

    Maps points off the new slit by z -> x + sqrt((z-x)^2 + 4*cap); the
    derivative multiplies by (z-x)/(image-x).  Unconditionally stable: the
    upper half plane maps into itself.
    """
    f_old = g - x
    f_new = sqrt_upper(f_old * f_old + 4.0 * cap)
    if deriv is not None:
        deriv = deriv * (f_old / f_new)
    return x + f_new, deriv


def evolve_ensemble(times, w_matrix, z, with_deriv=False, callback=None):
    """Flow point(s) ``z`` under every driving row simultaneously.

    Uses the same vertical-slit discretization as trace_from_driving, so the
    evolved configuration is exactly the map of the discrete hull grown from
    the sampled driving.  ``z`` may be a scalar or an array of shape (p,);
    states have shape (p, n_rows) (or (n_rows,) for scalar z).  Returns
    (g_hist, deriv_hist) with a trailing time axis, or calls
    callback(k, g_k, deriv_k) per grid time and returns None, which avoids
    storing the history.
    """
    w = np.asarray(w_matrix, dtype=float)
    n_rows, n_t = w.shape
    dts = np.diff(times)
    zs = np.asarray(z, dtype=complex)
    shape = zs.shape + (n_rows,)
    g = np.broadcast_to(zs[..., None], shape).copy()
    d = np.ones(shape, dtype=complex) if with_deriv else None
    if callback is None:
        gs = np.empty(shape + (n_t,), dtype=complex)
        ds = np.empty(shape + (n_t,), dtype=complex) if with_deriv else None
        gs[..., 0] = g
        if with_deriv:
            ds[..., 0] = d
    else:
        callback(0, g, d)
    for k in range(1, n_t):
        g, d = slit_step(g, w[:, k], dts[k - 1], deriv=d)
        if callback is None:
            gs[..., k] = g
            if with_deriv:
                ds[..., k] = d
        else:
            callback(k, g, d)
    if callback is None:
        return gs, ds
    return None


def slit_flow_map(times, values, z):
    """Image under g_T of points off the hull, via the slit-map composition.

    Matches the discretization of trace_from_driving: the hull is the one
    grown by the vertical-slit steps of the sampled driving.  ``values`` may
    be one row or a matrix of rows; ``z`` is broadcast against rows.
    """
    w = np.atleast_2d(np.asarray(values, dtype=float))
    dts = np.diff(times)
    g = np.broadcast_to(np.asarray(z, dtype=complex), w.shape[:1] + np.shape(z)).copy()
    for k in range(1, w.shape[1]):
        x = w[:, k].reshape((-1,) + (1,) * (g.ndim - 1))
        g = x + sqrt_upper((g - x) ** 2 + 4.0 * dts[k - 1])
    return g if np.ndim(values) > 1 else g[0]


def trace_from_driving_batch(times, w_matrix):
    """Trace tips gamma(t_k) for every driving row via slit-map composition.

    Row-wise inverse of driving extraction on the same grid.
    """
    w = np.asarray(w_matrix, dtype=float)
    n_rows, n_t = w.shape
    dts = np.diff(times)
    tips = np.empty((n_rows, n_t), dtype=complex)
    tips[:, 0] = w[:, 0]
    tips[:, 1:] = w[:, 1:] + 2j * np.sqrt(dts)[None, :]
    for i in range(n_t - 2, 0, -1):
        x = w[:, i][:, None]
        tips[:, i + 1:] = x + sqrt_upper((tips[:, i + 1:] - x) ** 2 - 4.0 * dts[i - 1])
    return tips


def trace_from_driving(W):
    """Approximate Loewner trace of a sampled driving function."""
    tips = trace_from_driving_batch(W.times, W.values[None, :])[0]
    return HalfPlanePath(points=tips, capacity_times=W.times.copy())


def extract_driving(path, delta=1e-3, t_max=None):
    """Recover the driving function of a simple half-plane path.

    Composes vertical-slit maps whose capacity increments are ~``delta``: a
    contiguous run of path points each within ``delta`` of the current hull
    is absorbed through its farthest member (chord jump), while a single
    segment carrying more than ``delta`` is approached through chord
    subdivisions.  The last path point is always matched exactly.  Stops once
    cumulative capacity reaches ``t_max`` when given.
    """
    pts = np.asarray(path.points, dtype=complex)
    if len(pts) < 2:
        raise InvalidPathError("path needs at least two points")
    if abs(pts[0].imag) > 1e-6 * max(1.0, abs(pts[0])):
        raise InvalidPathError("path must start on the real axis")
    if np.any(pts[1:].imag <= 0):
        k = 1 + int(np.argmax(pts[1:].imag <= 0))
        raise InvalidPathError(f"path point {k} touches the real axis (hull collapse)")

    tol = 1.0 + 1e-9
    live = pts[1:].copy()
    n = len(live)
    times = [0.0]
    values = [float(pts[0].real)]
    t = 0.0
    k = 0
    guard = 0
    cap_floor = 1e-9 * delta
    max_ops = 200 * n + int(20 * (t_max or 10.0) / delta) + 10000
    while k < n:
        guard += 1
        if guard > max_ops:
            raise InvalidPathError("zipper did not converge; refine the path")
        # farthest point of the contiguous run absorbable within delta, kept
        # inside a horizontal window of the slit scale so chord jumps never
        # silently erase sideways driving motion
        j = k
        window = np.sqrt(delta)
        while (j + 1 < n and 0.25 * live[j + 1].imag ** 2 <= delta * tol
               and abs(live[j + 1].real - values[-1]) <= window):
            j += 1
        target = live[j]
        y = target.imag
        cap = 0.25 * y * y
        if cap <= cap_floor:
            # on (or numerically indistinguishable from) the current hull
            if y < -1e-9:
                raise InvalidPathError(f"image of path point {j + 1} collapsed onto R")
            k = j + 1
            continue
        if cap > delta * tol:
            s = 2.0 * np.sqrt(delta) / y
            q = values[-1] + s * (target - values[-1])
        else:
            q = target
            k = j + 1
        x, yy = q.real, q.imag
        live[k:] = x + sqrt_upper((live[k:] - x) ** 2 + yy * yy)
        t += 0.25 * yy * yy
        times.append(t)
        values.append(x)
        if t_max is not None and t >= t_max:
            break
    return DrivingFunction(times=np.array(times), values=np.array(values))


def halfplane_capacity(path, delta=1e-3, validate=True):
    """Half-plane capacity of the hull of a simple path from R."""
    pts = np.asarray(path.points, dtype=complex)
    if len(pts) <= 1:
        return 0.0
    if validate and _self_crossing(pts):
        raise InvalidPathError("path crosses itself")
    drv = extract_driving(path, delta=delta)
    return drv.horizon


def _self_crossing(pts):
    """Quadratic-time proper-intersection test between path segments."""
    a, b = pts[:-1], pts[1:]
    n = len(a)
    for i in range(n - 2):
        p, r = a[i], b[i] - a[i]
        q = a[i + 2:]
        s = b[i + 2:] - q
        denom = (r.real * s.imag - r.imag * s.real)
        dq = q - p
        with np.errstate(divide="ignore", invalid="ignore"):
            ti = (dq.real * s.imag - dq.imag * s.real) / denom
            ui = (dq.real * r.imag - dq.imag * r.real) / denom
        hit = (np.abs(denom) > 0) & (ti > 1e-12) & (ti < 1 - 1e-12) \
            & (ui > 1e-12) & (ui < 1 - 1e-12)
        if np.any(hit):
            return True
    return False


def resample_driving(W, times):
    """Driving values interpolated onto a fixed capacity grid."""
    if times[0] != 0.0:
        raise GridMismatchError("capacity grid must start at 0")
    if W.horizon < times[-1] - 1e-12:
        raise GridMismatchError("driving horizon shorter than requested grid")
    return DrivingFunction(times=np.asarray(times, float), values=W(times))


PSI_POLE = -1j


def d_star(z, w):
    """Metric on closure(H) + {infinity} pulled back from the unit disc."""
    return float(np.abs(_psi(z) - _psi(w)))


def _psi(z):
    if z is None or (np.isscalar(z) and np.isinf(z)):
        return 1.0 + 0j
    z = complex(z)
    if np.isinf(z.real) or np.isinf(z.imag):
        return 1.0 + 0j
    return (z - 1j) / (z + 1j)


def d_strong(path1, path2):
    """Sup over a common capacity grid of pointwise d_star distances."""
    t1, t2 = path1.capacity_times, path2.capacity_times
    if t1 is None or t2 is None or len(t1) != len(t2) or not np.allclose(t1, t2):
        raise GridMismatchError("paths must share a capacity grid; resample first")
    p1 = np.asarray(path1.points, complex)
    p2 = np.asarray(path2.points, complex)
    v1 = (p1 - 1j) / (p1 + 1j)
    v2 = (p2 - 1j) / (p2 + 1j)
    return float(np.max(np.abs(v1 - v2)))
