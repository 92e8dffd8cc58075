"""Partial-element assembly and the full-order A-EFIE system.

The system solved at angular frequency ``w`` is::

    [ R + i w L    S^T    ] [ j   ]   [ e ]
    [ P S          -i w 1 ] [ phi ] = [ 0 ]

with segment currents ``j`` and node potentials ``phi``. ``R``, ``L`` and ``P``
are stored in SI units. When the block matrix is formed, time is measured in
units of ``FomMatrices.time_unit`` seconds, so the second block row is that of
the SI system multiplied by ``time_unit``. The solution vector is unchanged by
this; only the weighting of the charge rows in residual norms changes. With
``time_unit = 1`` the SI system is recovered exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.constants import epsilon_0, mu_0

from .geometry import WireModel, incidence_matrix
from .numerics import SingularMatrixError, lu_solve

log = logging.getLogger(__name__)

QUAD_ORDER = 8
DEFAULT_TIME_UNIT = 1e-9
MIN_DISTANCE = 1e-15
SOLVE_RTOL = 1e-10


class DegenerateGeometryError(ValueError):
    """Two distinct integration domains coincide or overlap."""


class FomSolveError(RuntimeError):
    """The full-order system could not be solved at a frequency."""

    def __init__(self, omega: float, cause: Exception):
        self.omega = omega
        super().__init__(f"full-order solve failed at omega = {omega!r} rad/s: {cause}")


# -- kernel integrals ---------------------------------------------------------

def self_inductance(length, radius):
    """Thin-wire partial self inductance of a straight segment, in henries."""
    length = np.asarray(length, dtype=float)
    return mu_0 * length / (2 * np.pi) * (np.log(2 * length / radius) - 1)


def self_potential(length, radius):
    """Leading-order self potential coefficient of a uniformly charged cell, in 1/F."""
    length = np.asarray(length, dtype=float)
    return np.log(length / radius) / (2 * np.pi * epsilon_0 * length)


def collinear_integral(a1, b1, a2, b2, order=QUAD_ORDER):
    """Double integral of ``1/|s - t|`` over ``s in [a1, b1]``, ``t in [a2, b2]``.

    The intervals lie on a common line and may touch but not overlap.
    Substituting ``u = t - s`` turns the double integral into a single one of
    ``w(u)/|u|``, where ``w`` is the piecewise-linear overlap length. Gauss
    rules are applied on each linear piece of ``w``, so the integrand stays
    smooth even for touching intervals. Arguments broadcast.
    """
    a1, b1, a2, b2 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a1, b1, a2, b2)))
    overlap = (np.minimum(b1, b2) - np.maximum(a1, a2))
    if np.any(overlap > 0):
        raise DegenerateGeometryError("collinear integration intervals overlap")
    x, wg = np.polynomial.legendre.leggauss(order)
    brk = np.sort(np.stack((a2 - b1, a2 - a1, b2 - b1, b2 - a1), axis=-1), axis=-1)
    total = np.zeros(a1.shape)
    for k in range(3):
        lo = brk[..., k, None]
        hi = brk[..., k + 1, None]
        half = 0.5 * (hi - lo)
        u = 0.5 * (hi + lo) + half * x
        w = np.clip(np.minimum(b1[..., None], b2[..., None] - u)
                    - np.maximum(a1[..., None], a2[..., None] - u), 0.0, None)
        total += (half * wg * w / np.abs(u)).sum(axis=-1)
    return total


def _tensor_integral(p0, p1, q0, q1, order):
    x, wg = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (x + 1)
    lp = np.linalg.norm(p1 - p0)
    lq = np.linalg.norm(q1 - q0)
    rp = p0 + t[:, None] * (p1 - p0)
    rq = q0 + t[:, None] * (q1 - q0)
    d = np.linalg.norm(rp[:, None, :] - rq[None, :, :], axis=-1)
    return 0.25 * lp * lq * (wg[:, None] * wg[None, :] / d).sum()


def segment_pair_integral(p0, p1, q0, q1, order=QUAD_ORDER) -> float:
    """``iint 1/|r - r'| dl dl'`` over straight segments ``p0->p1`` and ``q0->q1``."""
    p0, p1, q0, q1 = (np.asarray(v, dtype=float) for v in (p0, p1, q0, q1))
    if np.linalg.norm(0.5 * (p0 + p1) - 0.5 * (q0 + q1)) < MIN_DISTANCE:
        raise DegenerateGeometryError("segment centres coincide")
    tp = p1 - p0
    lp = np.linalg.norm(tp)
    tp = tp / lp
    # collinear if both ends of q lie on the line through p
    off = [np.linalg.norm(np.cross(q - p0, tp)) for q in (q0, q1)]
    if max(off) <= 1e-12 * max(lp, np.linalg.norm(q1 - q0)):
        s = [float(np.dot(q - p0, tp)) for q in (q0, q1)]
        return float(collinear_integral(0.0, lp, min(s), max(s), order))
    return float(_tensor_integral(p0, p1, q0, q1, order))


def mutual_inductance(seg_a, seg_b, order=QUAD_ORDER) -> float:
    """Partial mutual inductance of two segments given as ``(start, end)`` pairs."""
    (p0, p1), (q0, q1) = (np.asarray(s, dtype=float) for s in (seg_a, seg_b))
    ta = (p1 - p0) / np.linalg.norm(p1 - p0)
    tb = (q1 - q0) / np.linalg.norm(q1 - q0)
    dot = float(np.dot(ta, tb))
    if dot == 0.0:
        return 0.0
    return mu_0 / (4 * np.pi) * dot * segment_pair_integral(p0, p1, q0, q1, order)


def mutual_potential(cell_a, cell_b, order=QUAD_ORDER) -> float:
    """Potential coefficient between two uniformly charged straight cells."""
    (p0, p1), (q0, q1) = (np.asarray(s, dtype=float) for s in (cell_a, cell_b))
    la = np.linalg.norm(p1 - p0)
    lb = np.linalg.norm(q1 - q0)
    return segment_pair_integral(p0, p1, q0, q1, order) / (4 * np.pi * epsilon_0 * la * lb)


def _axial_pair_matrix(lo, hi, order, symmetrize=True):
    """Off-diagonal ``iint 1/|s - t|`` for all pairs of axial intervals."""
    n = lo.size
    M = np.zeros((n, n))
    if symmetrize:
        i, j = np.triu_indices(n, 1)
    else:
        i, j = np.nonzero(~np.eye(n, dtype=bool))
    centre = 0.5 * (lo + hi)
    if np.any(np.abs(centre[i] - centre[j]) < MIN_DISTANCE):
        raise DegenerateGeometryError("two integration domains share a centre")
    M[i, j] = collinear_integral(lo[i], hi[i], lo[j], hi[j], order)
    if symmetrize:
        M[j, i] = M[i, j]
    return M


# -- assembly -------------------------------------------------------------------

def assemble_resistance(model: WireModel) -> np.ndarray:
    """Diagonal DC resistance of each segment, in ohms."""
    ell = model.segment_lengths
    return np.diag(model.resistivity * ell / (np.pi * model.radius ** 2))


def assemble_inductance(model: WireModel, order: int = QUAD_ORDER,
                        symmetrize: bool = True) -> np.ndarray:
    """Partial inductance matrix in henries.

    Mutual terms use the on-axis static kernel; self terms the thin-wire
    closed form. With ``symmetrize=False`` every ordered pair is integrated
    separately, which is only useful for checking reciprocity.
    """
    z = model.axis_nodes
    L = mu_0 / (4 * np.pi) * _axial_pair_matrix(z[:-1], z[1:], order, symmetrize)
    np.fill_diagonal(L, self_inductance(model.segment_lengths, model.radius))
    return L


def assemble_potential(model: WireModel, order: int = QUAD_ORDER,
                       symmetrize: bool = True) -> np.ndarray:
    """Potential coefficient matrix of the node charge cells, in 1/F."""
    cells = model.charge_cells
    lo, hi = cells[:, 0], cells[:, 1]
    ell = hi - lo
    P = _axial_pair_matrix(lo, hi, order, symmetrize)
    P /= 4 * np.pi * epsilon_0 * np.outer(ell, ell)
    np.fill_diagonal(P, self_potential(ell, model.radius))
    return P


@dataclass(frozen=True)
class FomMatrices:
    """Frequency-independent partial elements of one wire model."""

    R: np.ndarray
    L: np.ndarray
    P: np.ndarray
    S: np.ndarray
    time_unit: float = DEFAULT_TIME_UNIT

    @property
    def n_currents(self) -> int:
        return self.R.shape[0]

    @property
    def n_potentials(self) -> int:
        return self.P.shape[0]

    @property
    def size(self) -> int:
        return self.n_currents + self.n_potentials

    @cached_property
    def PS(self) -> np.ndarray:
        """``P @ S`` in SI units."""
        return self.P @ self.S

    @cached_property
    def L_scaled(self) -> np.ndarray:
        return self.L / self.time_unit

    @cached_property
    def PS_scaled(self) -> np.ndarray:
        return self.time_unit * self.PS

    @cached_property
    def ST(self) -> np.ndarray:
        return self.S.T.astype(float)

    def scaled_omega(self, omega):
        return np.asarray(omega, dtype=float) * self.time_unit

    def excitation(self, feed: int, v_gap: complex = 1.0) -> np.ndarray:
        b = np.zeros(self.size, dtype=complex)
        b[feed] = v_gap
        return b

    def apply(self, X: np.ndarray, omegas) -> np.ndarray:
        """``A(omega_k) @ X[:, k]`` for every column, without forming ``A``."""
        X = np.asarray(X)
        ws = self.scaled_omega(omegas)
        ns = self.n_currents
        J, Phi = X[:ns], X[ns:]
        top = self.R @ J + 1j * ws * (self.L_scaled @ J) + self.ST @ Phi
        bottom = self.PS_scaled @ J - 1j * ws * Phi
        return np.concatenate((top, bottom), axis=0)


@dataclass(frozen=True)
class SystemInstance:
    A: np.ndarray
    b: np.ndarray
    omega: float


def assemble_fom(model: WireModel, order: int = QUAD_ORDER,
                 time_unit: float = DEFAULT_TIME_UNIT) -> FomMatrices:
    if not time_unit > 0:
        raise ValueError(f"time_unit must be positive, got {time_unit!r}")
    if model.resistivity == 0:
        log.warning("perfect conductor: the system is singular at omega = 0")
    return FomMatrices(
        R=assemble_resistance(model),
        L=assemble_inductance(model, order),
        P=assemble_potential(model, order),
        S=incidence_matrix(model),
        time_unit=float(time_unit),
    )


def system_matrix(fom: FomMatrices, omega: float) -> np.ndarray:
    w = float(fom.scaled_omega(omega))
    ns, nn = fom.n_currents, fom.n_potentials
    A = np.empty((ns + nn, ns + nn), dtype=complex)
    A[:ns, :ns] = fom.R + 1j * w * fom.L_scaled
    A[:ns, ns:] = fom.ST
    A[ns:, :ns] = fom.PS_scaled
    A[ns:, ns:] = -1j * w * np.eye(nn)
    return A


def assemble_system(fom: FomMatrices, omega: float, feed: int,
                    v_gap: complex = 1.0) -> SystemInstance:
    """Block system and delta-gap right-hand side at one angular frequency."""
    if not omega >= 0:
        raise ValueError(f"omega must be non-negative, got {omega!r}")
    if not 0 <= feed < fom.n_currents:
        raise ValueError(f"feed segment {feed} out of range")
    return SystemInstance(system_matrix(fom, omega), fom.excitation(feed, v_gap), float(omega))


def relative_residual(A: np.ndarray, x: np.ndarray, b: np.ndarray) -> float:
    bn = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return float(r / bn) if bn > 0 else float(r)


def solve_fom(instance: SystemInstance) -> np.ndarray:
    """Direct solve of one full-order system.

    Raises
    ------
    FomSolveError
        If the matrix is numerically singular at this frequency.
    """
    if not np.any(instance.b):
        return np.zeros_like(instance.b)
    try:
        x = lu_solve(instance.A, instance.b)
    except SingularMatrixError as exc:
        raise FomSolveError(instance.omega, exc) from exc
    res = relative_residual(instance.A, x, instance.b)
    if not np.isfinite(res):
        raise FomSolveError(instance.omega, ValueError("non-finite solution"))
    if res > SOLVE_RTOL:
        log.warning("FOM residual %.3e above %.0e at omega=%.6e", res, SOLVE_RTOL, instance.omega)
    return x


# -- Matrix Market export -------------------------------------------------------

def _mtx_bytes(M, comment: str = "") -> bytes:
    import io

    import scipy.io

    buf = io.BytesIO()
    scipy.io.mmwrite(buf, M, comment=comment, precision=17)
    return buf.getvalue()


def export_matrix_market(fom: FomMatrices, directory, frequencies_hz=(), feed: int | None = None,
                         v_gap: complex = 1.0) -> list:
    """Write R, L, P, S (SI units) and optionally ``A(omega)`` as ``.mtx`` files.

    ``R`` and ``S`` go out in coordinate format, the dense blocks in array
    format. ``A`` is written in the scaled time unit of ``fom``.
    """
    from pathlib import Path

    import scipy.sparse as sp

    from ._io import atomic_write_bytes

    directory = Path(directory)
    paths = []
    items = [
        ("R", sp.coo_matrix(fom.R), "segment resistance, ohm"),
        ("L", fom.L, "partial inductance, H"),
        ("P", fom.P, "potential coefficients, 1/F"),
        ("S", sp.coo_matrix(fom.S), "node-segment incidence"),
    ]
    for name, M, comment in items:
        p = directory / f"{name}.mtx"
        atomic_write_bytes(p, _mtx_bytes(M, comment))
        paths.append(p)
    for k, f in enumerate(frequencies_hz):
        A = system_matrix(fom, 2 * np.pi * f)
        p = directory / f"A_{k}.mtx"
        atomic_write_bytes(p, _mtx_bytes(
            A, f"A(omega) at f = {f:.16e} Hz, time unit {fom.time_unit:g} s"))
        paths.append(p)
        if feed is not None:
            p = directory / f"b_{k}.mtx"
            atomic_write_bytes(p, _mtx_bytes(fom.excitation(feed, v_gap)[:, None], "delta-gap excitation"))
            paths.append(p)
    return paths
