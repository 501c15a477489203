"""Monodromy family construction, spectrum classification and contraction search.

The monodromy matrix at base time t is the fundamental solution advanced by
one period, M(t, xi) = E(t + T, t, xi).  Its determinant equals
exp(-2 beta T) independently of (t, xi); its spectrum is independent of t;
and for non-negative dissipation its operator norm never exceeds one.  The
contraction search looks for the smallest power k whose grid supremum of
||M^k|| falls below one by a safety margin, which yields the certified
small-frequency decay rate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .coefficients import ConstantMass, ModelSpec
from .errors import ModelAssumptionError, NoContractionError
from .propagator import (
    DEFAULT_TOL,
    eigenvalues_2x2,
    inv2,
    propagate_grid,
    spectral_norm_2x2,
)

# Degenerate-discriminant band: |tr^2 - 4 det| below this is a double root.
DEGENERATE_DISC_TOL = 1e-10

# Spectral-radius values above 1 - RHO_BLOCKER_TOL block certification.
RHO_BLOCKER_TOL = 1e-9

# Contraction margin: the grid supremum of ||M^k|| must fall below 1 - margin.
DEFAULT_CONTRACTION_MARGIN = 1e-3

# Frequencies are scanned in fixed-size chunks so that results do not depend
# on how many workers process them.
SCAN_CHUNK = 64

CLASS_COMPLEX_PAIR = "ComplexConjugatePair"
CLASS_REAL_PAIR = "RealPair"


@dataclass(frozen=True)
class MonodromySample:
    """One evaluated monodromy matrix with its spectral data."""

    t: float
    xi: float
    matrix: np.ndarray
    eigenvalues: tuple
    spectral_radius: float
    norm: float
    kind: str  # CLASS_COMPLEX_PAIR or CLASS_REAL_PAIR


@dataclass(frozen=True)
class ContractionCertificate:
    """Certified contraction constants together with the grids that produced them.

    delta1 and C are arithmetically tied to (k, T, c1):
    delta1 = log(1/c1) / (k T) and C = exp(delta1 k T).
    """

    N: float
    k: int
    c1: float
    delta0: float
    delta1: float
    C: float
    beta: float
    T: float
    grids: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "N": self.N,
            "k": self.k,
            "c1": self.c1,
            "delta0": self.delta0,
            "delta1": self.delta1,
            "C": self.C,
            "beta": self.beta,
            "T": self.T,
            "grids": dict(self.grids),
            "tolerances": dict(self.tolerances),
        }


def classify_pair(matrix) -> str:
    """Eigenvalue-pair class from the characteristic-polynomial discriminant.

    The monodromy matrix is similar to a real matrix, so the discriminant is
    real up to numerical noise: positive real part means two real eigenvalues,
    negative means a complex-conjugate pair.  A degenerate band around zero is
    classified as a real (double) root.
    """
    tr = complex(matrix[0, 0] + matrix[1, 1])
    dt = complex(matrix[0, 0] * matrix[1, 1] - matrix[0, 1] * matrix[1, 0])
    disc = tr * tr - 4.0 * dt
    if abs(disc) <= DEGENERATE_DISC_TOL or disc.real > 0.0:
        return CLASS_REAL_PAIR
    return CLASS_COMPLEX_PAIR


def _sample_from_matrix(t, xi, M) -> MonodromySample:
    ev = eigenvalues_2x2(M)
    return MonodromySample(
        t=float(t),
        xi=float(xi),
        matrix=M,
        eigenvalues=(ev[0], ev[1]),
        spectral_radius=max(abs(ev[0]), abs(ev[1])),
        norm=spectral_norm_2x2(M),
        kind=classify_pair(M),
    )


def monodromy_at(
    spec: ModelSpec, t: float, xi: float, tol: float = DEFAULT_TOL, base: np.ndarray | None = None
) -> MonodromySample:
    """Monodromy matrix M(t, xi) = E(t + T, t, xi) with spectral data.

    With ``base`` = M(0, xi) given, uses the similarity
    M(t, xi) = E(t, 0, xi) M(0, xi) E(t, 0, xi)^{-1} (one integration over
    [0, t] instead of [t, t + T]); otherwise propagates directly.
    """
    if not (0.0 <= t <= spec.T + 1e-12):
        raise ValueError(f"base time t must lie in [0, T], got {t}")
    if base is not None:
        if t == 0.0:
            M = np.array(base, dtype=complex)
        else:
            Et0 = propagate_grid(spec, 0.0, t, [abs(xi)], tol)[0][0]
            M = Et0 @ np.asarray(base, dtype=complex) @ inv2(Et0)
    else:
        res = propagate_grid(spec, t, t + spec.T, [abs(xi)], tol)[0]
        M = res[0]
    return _sample_from_matrix(t, xi, M)


def _chunks(values, size):
    for i in range(0, len(values), size):
        yield values[i : i + size]


def monodromy_grid(
    spec: ModelSpec,
    t_grid,
    xi_grid,
    tol: float = DEFAULT_TOL,
    map_fn=map,
) -> np.ndarray:
    """Monodromy matrices on a (t, xi) grid, shape (nt, nxi, 2, 2).

    One checkpointed sweep of E(., 0, xi) over [0, max(t) + T] per frequency
    chunk supplies every base time at once:
    M(t, xi) = E(t + T, 0, xi) E(t, 0, xi)^{-1}.

    ``map_fn`` may be a parallel map; chunks are fixed-size so results are
    identical no matter how they are scheduled.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    xi_grid = np.asarray(xi_grid, dtype=float)
    if t_grid.size == 0 or xi_grid.size == 0:
        return np.empty((t_grid.size, xi_grid.size, 2, 2), dtype=complex)
    if np.any(t_grid < 0.0) or np.any(t_grid > spec.T + 1e-12):
        raise ValueError("t_grid must lie within [0, T]")
    T = spec.T
    checkpoints = np.concatenate([t_grid, t_grid + T])

    def work(xis):
        _, chk, _ = propagate_grid(spec, 0.0, float(t_grid.max()) + T, xis, tol, checkpoints)
        nt = t_grid.size
        E_t = chk[:nt]
        E_tT = chk[nt:]
        return E_tT @ inv2(E_t)

    parts = list(map_fn(work, list(_chunks(xi_grid, SCAN_CHUNK))))
    return np.concatenate(parts, axis=1)


def spectral_radius_scan(
    spec: ModelSpec, xi_grid, tol: float = DEFAULT_TOL, map_fn=map
) -> np.ndarray:
    """Spectral radius of M(0, xi) along a frequency grid (constant mass only).

    Any entry at or above ``1 - RHO_BLOCKER_TOL`` blocks certification.
    """
    if not isinstance(spec.mass, ConstantMass):
        raise ModelAssumptionError("spectral_radius_scan requires a constant-mass model")
    if spec.m0 <= 0.0:
        raise ModelAssumptionError("spectral_radius_scan requires m0 > 0")
    M = monodromy_grid(spec, [0.0], xi_grid, tol, map_fn)[0]
    ev = eigenvalues_2x2(M)
    return np.max(np.abs(ev), axis=-1)


def power_norms(M_grid: np.ndarray, k: int) -> np.ndarray:
    """Spectral norms of the k-th matrix powers over a grid (iterative product)."""
    P = M_grid.copy()
    for _ in range(k - 1):
        P = P @ M_grid
    return spectral_norm_2x2(P)


def contraction_search(M_grid: np.ndarray, k_max: int = 64, margin: float = DEFAULT_CONTRACTION_MARGIN, t_grid=None, xi_grid=None):
    """Smallest k with sup ||M^k|| <= 1 - margin over a precomputed grid.

    Checks the spectral radii first (all must sit below 1 - RHO_BLOCKER_TOL),
    then powers the whole grid iteratively.  Returns (k, c1).
    """
    t_grid = np.asarray(t_grid if t_grid is not None else np.arange(M_grid.shape[0]), dtype=float)
    xi_grid = np.asarray(xi_grid if xi_grid is not None else np.arange(M_grid.shape[1]), dtype=float)

    rho = np.max(np.abs(eigenvalues_2x2(M_grid)), axis=-1)
    if np.max(rho) >= 1.0 - RHO_BLOCKER_TOL:
        it, ix = np.unravel_index(int(np.argmax(rho)), rho.shape)
        raise NoContractionError(
            f"spectral radius {rho[it, ix]:.12g} at (t={t_grid[it]:.6g}, xi={xi_grid[ix]:.6g}) "
            "blocks the contraction certificate",
            worst=(float(t_grid[it]), float(xi_grid[ix]), float(rho[it, ix])),
        )

    P = M_grid.copy()
    for k in range(1, k_max + 1):
        norms = spectral_norm_2x2(P)
        worst = float(np.max(norms))
        if worst <= 1.0 - margin:
            return k, worst
        P = P @ M_grid
    it, ix = np.unravel_index(int(np.argmax(norms)), norms.shape)
    raise NoContractionError(
        f"no k <= {k_max} achieves grid-sup ||M^k|| <= {1.0 - margin}; "
        f"worst ||M^{k_max}|| = {worst:.6g} at (t={t_grid[it]:.6g}, xi={xi_grid[ix]:.6g})",
        worst=(float(t_grid[it]), float(xi_grid[ix]), worst),
    )


def find_contraction_k(
    spec: ModelSpec,
    N: float,
    k_max: int = 64,
    nt: int = 64,
    nxi: int = 256,
    margin: float = DEFAULT_CONTRACTION_MARGIN,
    tol: float = DEFAULT_TOL,
    map_fn=map,
):
    """Smallest power k with grid-sup ||M(t, xi)^k|| <= 1 - margin.

    Scans t uniformly on [0, T] (nt points) and xi uniformly on [0, N]
    (nxi points).  Requires a constant-mass model whose spectral radii are
    all below one on the scan grid.

    Returns
    -------
    (k, c1) : the power and the attained grid supremum of ||M^k||.
    """
    if not isinstance(spec.mass, ConstantMass):
        raise ModelAssumptionError("contraction search requires a constant-mass model")
    if spec.m0 <= 0.0:
        raise ModelAssumptionError("contraction search requires m0 > 0")
    t_grid = np.linspace(0.0, spec.T, nt)
    xi_grid = np.linspace(0.0, N, nxi)
    M = monodromy_grid(spec, t_grid, xi_grid, tol, map_fn)
    return contraction_search(M, k_max, margin, t_grid, xi_grid)


def assemble_certificate(
    spec: ModelSpec,
    N: float,
    k: int,
    c1: float,
    grids: dict | None = None,
    tolerances: dict | None = None,
) -> ContractionCertificate:
    """Fill in the decay constants implied by (N, k, c1).

    delta0 = beta / 2 covers frequencies above N; delta1 = log(1/c1)/(kT)
    covers [0, N]; C = exp(delta1 k T) is the small-frequency prefactor.
    """
    if not (0.0 < c1 < 1.0):
        raise ValueError(f"c1 must lie in (0, 1), got {c1}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    beta = spec.beta
    T = spec.T
    delta1 = math.log(1.0 / c1) / (k * T)
    return ContractionCertificate(
        N=float(N),
        k=int(k),
        c1=float(c1),
        delta0=beta / 2.0,
        delta1=delta1,
        C=math.exp(delta1 * k * T),
        beta=beta,
        T=T,
        grids=dict(grids or {}),
        tolerances=dict(tolerances or {}),
    )


def samples_from_grid(t_grid, xi_grid, M_grid) -> list:
    """MonodromySample list from a precomputed grid (row-major in t)."""
    out = []
    for i, t in enumerate(np.asarray(t_grid, dtype=float)):
        for j, xi in enumerate(np.asarray(xi_grid, dtype=float)):
            out.append(_sample_from_matrix(t, xi, M_grid[i, j]))
    return out


def scan_samples(
    spec: ModelSpec, t_grid, xi_grid, tol: float = DEFAULT_TOL, map_fn=map
) -> list:
    """MonodromySample list over the full (t, xi) grid (row-major in t)."""
    M = monodromy_grid(spec, t_grid, xi_grid, tol, map_fn)
    return samples_from_grid(t_grid, xi_grid, M)


def scan_to_csv(path, samples) -> None:
    """Write scan samples as CSV: t, xi, eigenvalue parts, rho, norm, class."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "xi", "re_eig1", "im_eig1", "re_eig2", "im_eig2", "rho", "norm", "class"])
        for s in samples:
            e1, e2 = s.eigenvalues
            w.writerow(
                [f"{v:.17g}" for v in (s.t, s.xi, e1.real, e1.imag, e2.real, e2.imag, s.spectral_radius, s.norm)]
                + [s.kind]
            )
