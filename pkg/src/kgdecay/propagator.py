"""Fundamental-solution propagation and 2x2 complex linear algebra.

The frequency-space system d/dt E = i A(t, xi) E, E(s, s) = I is integrated
with an embedded Dormand-Prince 5(4) scheme on the complex 2x2 state,
vectorized over a batch of frequencies.  A truncated Peano-Baker series on a
fixed fine grid serves as an independent oracle for short intervals.

All 2x2 operations (determinant, eigenvalues, spectral norm, inverse) are
closed-form and broadcast over leading batch dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coefficients import ConstantMass, ModelSpec
from .errors import IntegrationFailureError, PreconditionError

DEFAULT_TOL = 1e-10
TOL_MIN, TOL_MAX = 1e-14, 1e-4

# Per-step tolerances are tightened by this factor so that the accumulated
# global error stays within the requested tolerance over multi-period spans.
_STEP_SAFETY = 0.02

# Dormand-Prince 5(4) tableau.
_C = (0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0)
_A = (
    (),
    (0.2,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0),
    (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0),
)
_B5 = (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0)
_E = tuple(
    b5 - b4
    for b5, b4 in zip(
        _B5,
        (5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0),
    )
)


# -- closed-form 2x2 helpers (batched over leading dimensions) ---------------


def det2(M):
    """Determinant of 2x2 matrices."""
    return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]


def trace2(M):
    return M[..., 0, 0] + M[..., 1, 1]


def inv2(M):
    """Inverse of 2x2 matrices via the adjugate."""
    out = np.empty_like(M)
    d = det2(M)
    out[..., 0, 0] = M[..., 1, 1]
    out[..., 1, 1] = M[..., 0, 0]
    out[..., 0, 1] = -M[..., 0, 1]
    out[..., 1, 0] = -M[..., 1, 0]
    return out / d[..., None, None]


def eigenvalues_2x2(M):
    """Both roots of lambda^2 - tr(M) lambda + det(M).

    The larger-magnitude root is computed first from the stable branch of the
    quadratic formula; the other follows as det / root.  Returns a pair of
    complex scalars for a single matrix, or an array of shape (..., 2).
    """
    M = np.asarray(M)
    tr = trace2(M).astype(complex)
    dt = det2(M).astype(complex)
    sq = np.sqrt(tr * tr - 4.0 * dt)
    # pick the sign that avoids cancellation in tr +/- sq
    flip = np.real(np.conj(tr) * sq) < 0.0
    sq = np.where(flip, -sq, sq)
    l1 = 0.5 * (tr + sq)
    small = np.abs(l1) == 0.0
    l2 = np.where(small, 0.5 * (tr - sq), dt / np.where(small, 1.0, l1))
    if M.ndim == 2:
        return complex(l1), complex(l2)
    return np.stack([l1, l2], axis=-1)


def spectral_norm_2x2(M):
    """Largest singular value, closed form on the 2x2 Hermitian M^H M."""
    M = np.asarray(M)
    a = M[..., 0, 0]
    b = M[..., 0, 1]
    c = M[..., 1, 0]
    d = M[..., 1, 1]
    g11 = (a * np.conj(a)).real + (c * np.conj(c)).real
    g22 = (b * np.conj(b)).real + (d * np.conj(d)).real
    g12 = np.conj(a) * b + np.conj(c) * d
    mid = 0.5 * (g11 + g22)
    rad = np.hypot(0.5 * (g11 - g22), np.abs(g12))
    out = np.sqrt(mid + rad)
    if M.ndim == 2:
        return float(out)
    return out


def spectral_radius_2x2(M):
    """Largest eigenvalue modulus."""
    ev = eigenvalues_2x2(np.asarray(M))
    if np.asarray(M).ndim == 2:
        return max(abs(ev[0]), abs(ev[1]))
    return np.max(np.abs(ev), axis=-1)


def identity_batch(n):
    Y = np.zeros((n, 2, 2), dtype=complex)
    Y[:, 0, 0] = 1.0
    Y[:, 1, 1] = 1.0
    return Y


# -- system matrix ------------------------------------------------------------


def system_matrix(spec: ModelSpec, t: float, xi: float) -> np.ndarray:
    """The coefficient matrix [[0, h], [h, 2ib(t)]] with h = sqrt(xi^2 + m(t)^2)."""
    h = float(spec.symbol(t, abs(xi)))
    b = spec.b.eval_scalar(t)
    return np.array([[0.0, h], [h, 2.0j * b]], dtype=complex)


def _system_matrices(spec, ts, xi):
    """A(t, xi) stacked over a time grid (len(ts), 2, 2)."""
    ts = np.asarray(ts, dtype=float)
    h = spec.symbol(ts, abs(xi))
    b = spec.b.eval(ts)
    out = np.zeros((ts.size, 2, 2), dtype=complex)
    out[:, 0, 1] = h
    out[:, 1, 0] = h
    out[:, 1, 1] = 2.0j * b
    return out


# -- adaptive propagation ------------------------------------------------------


@dataclass
class PropagationResult:
    """Propagator matrix plus integration statistics."""

    matrix: np.ndarray
    local_error_estimate: float
    steps_taken: int
    rhs_evaluations: int


class _Stats:
    __slots__ = ("steps", "evals", "max_err")

    def __init__(self):
        self.steps = 0
        self.evals = 0
        self.max_err = 0.0


def _make_rhs(spec: ModelSpec, xi2: np.ndarray):
    bf = spec.b.eval_scalar
    if isinstance(spec.mass, ConstantMass):
        m2 = spec.m0 * spec.m0

        def rhs(t, Y):
            ih = 1j * np.sqrt(xi2 + m2)
            out = np.empty_like(Y)
            out[:, 0, :] = ih[:, None] * Y[:, 1, :]
            out[:, 1, :] = ih[:, None] * Y[:, 0, :] - (2.0 * bf(t)) * Y[:, 1, :]
            return out

    else:
        msq = spec.m_squared_scalar

        def rhs(t, Y):
            ih = 1j * np.sqrt(xi2 + msq(t))
            out = np.empty_like(Y)
            out[:, 0, :] = ih[:, None] * Y[:, 1, :]
            out[:, 1, :] = ih[:, None] * Y[:, 0, :] - (2.0 * bf(t)) * Y[:, 1, :]
            return out

    return rhs


def _advance(rhs, t0, t1, Y, step_tol, dt_hint, span, stats):
    """Adaptive DP5(4) from t0 to t1 (either direction); mutates nothing.

    Returns (Y_end, dt_hint).  ``dt_hint`` carries the controller state across
    segment boundaries.
    """
    if t1 == t0:
        return Y, dt_hint
    direction = 1.0 if t1 > t0 else -1.0
    dt_floor = 1e-13 * max(1.0, span)
    t = t0
    dt = direction * min(abs(dt_hint), abs(t1 - t0))
    ks = [None] * 7
    while (t1 - t) * direction > 0.0:
        if abs(dt) > abs(t1 - t):
            dt = t1 - t
        if abs(dt) < dt_floor:
            raise IntegrationFailureError(
                f"step size underflow at t = {t} (coefficient structure denser than resolvable)",
                t_fail=t,
            )
        ks[0] = rhs(t, Y)
        for i in range(1, 7):
            yi = Y.copy()
            for j, a in enumerate(_A[i]):
                if a != 0.0:
                    yi += (dt * a) * ks[j]
            ks[i] = rhs(t + _C[i] * dt, yi)
        stats.evals += 7
        y5 = Y.copy()
        for j in range(7):
            if _B5[j] != 0.0:
                y5 += (dt * _B5[j]) * ks[j]
        err = np.zeros_like(Y)
        for j in range(7):
            if _E[j] != 0.0:
                err += (dt * _E[j]) * ks[j]
        scale = step_tol * (1.0 + np.maximum(np.abs(Y), np.abs(y5)))
        ratio = float(np.max(np.abs(err) / scale))
        if ratio <= 1.0:
            t = t + dt
            Y = y5
            stats.steps += 1
            if ratio > stats.max_err:
                stats.max_err = ratio
            grow = 5.0 if ratio == 0.0 else min(5.0, max(0.2, 0.9 * ratio ** -0.2))
            dt = dt * grow
        else:
            dt = dt * max(0.2, 0.9 * ratio ** -0.2)
    return Y, dt


def propagate_grid(spec: ModelSpec, s: float, t: float, xi, tol: float = DEFAULT_TOL, checkpoints=None):
    """Propagate E(., s, xi) for a batch of frequencies at once.

    Parameters
    ----------
    spec : ModelSpec
    s, t : float
        Start and end times (t < s integrates backwards).
    xi : array_like
        Non-negative frequencies; the state is batched over them.
    tol : float
        Requested accuracy; the integrator's per-step tolerance is tightened
        internally so the realized global error stays below roughly
        ``tol * max(1, |t - s|)``.
    checkpoints : array_like, optional
        Times between s and t (inclusive) at which to record the state.  The
        integrator lands on them exactly, no interpolation.

    Returns
    -------
    (Y_end, chk, result) : final states (n, 2, 2), recorded states
        (len(checkpoints), n, 2, 2) and a :class:`PropagationResult` whose
        ``matrix`` field is None (batch form).
    """
    if not (TOL_MIN <= tol <= TOL_MAX):
        raise ValueError(f"tol must lie in [{TOL_MIN}, {TOL_MAX}], got {tol}")
    if not (math.isfinite(s) and math.isfinite(t)):
        raise ValueError("s and t must be finite")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if np.any(xi < 0.0):
        raise ValueError("xi must be non-negative")
    rhs = _make_rhs(spec, xi * xi)
    Y = identity_batch(xi.size)

    chk_times = np.asarray([] if checkpoints is None else checkpoints, dtype=float)
    chk = np.empty((chk_times.size, xi.size, 2, 2), dtype=complex)
    stats = _Stats()
    span = abs(t - s)
    if span == 0.0:
        for i in range(chk_times.size):
            chk[i] = Y
        return Y, chk, PropagationResult(None, 0.0, 0, 0)

    direction = 1.0 if t > s else -1.0
    breaks = spec.breakpoints_in(s, t)
    forced = np.unique(np.concatenate([breaks, chk_times, [s, t]]))
    if direction < 0:
        forced = forced[::-1]
    # only times strictly inside the travel direction
    forced = [x for x in forced if (x - s) * direction > 0.0 and (t - x) * direction >= 0.0]
    if not forced or forced[-1] != t:
        forced.append(t)

    # map checkpoint time -> output slots (tolerate duplicates)
    slots = {}
    for i, ct in enumerate(chk_times):
        slots.setdefault(float(ct), []).append(i)
    for i in slots.get(float(s), []):
        chk[i] = Y

    step_tol = tol * _STEP_SAFETY
    dt_hint = span / 100.0
    cur = s
    for nxt in forced:
        Y, dt_hint = _advance(rhs, cur, nxt, Y, step_tol, dt_hint, span, stats)
        cur = nxt
        for i in slots.get(float(nxt), []):
            chk[i] = Y
    result = PropagationResult(None, stats.max_err * tol, stats.steps, stats.evals)
    return Y, chk, result


def propagate(spec: ModelSpec, s: float, t: float, xi: float, tol: float = DEFAULT_TOL) -> PropagationResult:
    """Fundamental solution E(t, s, xi) with adaptive error control.

    Satisfies the flow property E(t, s) = E(t, r) E(r, s) and the inverse
    relation E(t, s) E(s, t) = I to within a small multiple of ``tol``.
    """
    Y, _, res = propagate_grid(spec, s, t, [abs(xi)], tol)
    res.matrix = Y[0]
    return res


# -- Peano-Baker series oracle -------------------------------------------------


def _cumulative_simpson_uniform(y, h):
    """Cumulative integral of samples ``y`` on a uniform grid of spacing ``h``.

    Composite Simpson at even indices; odd half-cells use cubic four-point
    stencils, so polynomials up to degree three integrate exactly.  ``y`` has
    shape (n, ...) with n odd; ``h`` may be negative (descending grids
    integrate with sign).
    """
    n = y.shape[0]
    if n < 3 or n % 2 == 0:
        raise ValueError("need an odd number of samples >= 3")
    out = np.zeros_like(y)
    out[2::2] = np.cumsum((h / 3.0) * (y[0:-2:2] + 4.0 * y[1:-1:2] + y[2::2]), axis=0)
    if n == 3:
        out[1] = (h / 12.0) * (5.0 * y[0] + 8.0 * y[1] - y[2])
        return out
    out[1 : n - 2 : 2] = out[0 : n - 3 : 2] + (h / 24.0) * (
        9.0 * y[0 : n - 3 : 2] + 19.0 * y[1 : n - 2 : 2] - 5.0 * y[2 : n - 1 : 2] + y[3:n:2]
    )
    out[n - 2] = out[n - 3] + (h / 24.0) * (
        -y[n - 4] + 13.0 * y[n - 3] + 13.0 * y[n - 2] - y[n - 1]
    )
    return out


def peano_baker_truncated(
    spec: ModelSpec, s: float, t: float, xi: float, terms: int, npoints: int = 4097
) -> np.ndarray:
    """Truncated iterated-integral series for E(t, s, xi).  ORACLE ONLY.

    Evaluates I + sum_{l=1}^{terms} i^l (nested integrals of A) on a fixed
    fine grid with cumulative Simpson quadrature.  Truncation error scales
    like (||A|| |t-s|)^(terms+1) / (terms+1)!, so the practical window is
    ``|t-s| * sup||A|| <= 5``; outside it a PreconditionError is raised.
    """
    if terms < 0 or terms > 30:
        raise PreconditionError(f"terms must lie in [0, 30], got {terms}")
    if npoints % 2 == 0:
        npoints += 1
    if t == s or terms == 0:
        return np.eye(2, dtype=complex)
    grid = np.linspace(s, t, npoints)
    Avals = _system_matrices(spec, grid, xi)
    supA = float(np.max(spectral_norm_2x2(Avals)))
    if abs(t - s) * supA > 5.0 + 1e-12:
        raise PreconditionError(
            f"|t-s|*sup||A|| = {abs(t - s) * supA:.3g} exceeds the convergence window 5"
        )
    h = (t - s) / (npoints - 1)
    P = np.broadcast_to(np.eye(2, dtype=complex), Avals.shape).copy()
    E = np.eye(2, dtype=complex)
    for _ in range(terms):
        P = 1j * _cumulative_simpson_uniform(Avals @ P, h)
        E = E + P[-1]
    return E
