"""Greedy reduced-basis sweeps with monolithic or block-wise projection.

Monolithic projection uses one orthonormal basis ``V`` for the stacked state
``[j; phi]``. Block projection keeps separate bases ``V1`` (currents) and
``V2`` (potentials), so the reduced matrix keeps the 2x2 block layout of the
full system. All projections use the conjugate transpose.
"""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .fom import FomMatrices, assemble_system, solve_fom
from .numerics import DROP_TOL, OrthoBasis, lu_solve, mgs_extend

log = logging.getLogger(__name__)


class Strategy(str, enum.Enum):
    MONOLITHIC = "monolithic"
    BLOCK = "block"


@dataclass(frozen=True)
class GreedyConfig:
    tolerance: float = 1e-3
    max_snapshots: int = 100
    strategy: Strategy = Strategy.BLOCK
    initial_index: int = 0
    drop_tol: float = DROP_TOL

    def __post_init__(self):
        if not 0 < self.tolerance < 1:
            raise ValueError(f"tolerance must lie in (0, 1), got {self.tolerance!r}")
        if self.max_snapshots < 1:
            raise ValueError(f"max_snapshots must be >= 1, got {self.max_snapshots!r}")
        if self.initial_index < 0:
            raise ValueError("initial_index must be non-negative")
        object.__setattr__(self, "strategy", Strategy(self.strategy))


def split_snapshot(x: np.ndarray, n_currents: int):
    """Split a full state into its current and potential parts."""
    x = np.asarray(x)
    if not 0 < n_currents < x.shape[0]:
        raise ValueError(f"cannot split a state of length {x.shape[0]} after {n_currents} currents")
    return x[:n_currents], x[n_currents:]


@dataclass(frozen=True)
class ProjectionBasis:
    strategy: Strategy
    n_currents: int
    n_potentials: int
    V: OrthoBasis | None = None
    V1: OrthoBasis | None = None
    V2: OrthoBasis | None = None
    snapshot_indices: tuple = ()

    @classmethod
    def empty(cls, strategy, n_currents: int, n_potentials: int) -> "ProjectionBasis":
        strategy = Strategy(strategy)
        if strategy is Strategy.MONOLITHIC:
            return cls(strategy, n_currents, n_potentials,
                       V=OrthoBasis.empty(n_currents + n_potentials))
        return cls(strategy, n_currents, n_potentials,
                   V1=OrthoBasis.empty(n_currents), V2=OrthoBasis.empty(n_potentials))

    @classmethod
    def from_snapshots(cls, strategy, snapshots, n_currents: int, indices=None,
                       drop_tol: float = DROP_TOL) -> "ProjectionBasis":
        snapshots = [np.asarray(x) for x in snapshots]
        basis = cls.empty(strategy, n_currents, snapshots[0].shape[0] - n_currents)
        if indices is None:
            indices = range(len(snapshots))
        for x, i in zip(snapshots, indices):
            basis = basis.extend(x, i, drop_tol)
        return basis

    def extend(self, x: np.ndarray, index=None, drop_tol: float = DROP_TOL) -> "ProjectionBasis":
        """New basis with one more snapshot folded in."""
        indices = self.snapshot_indices if index is None else self.snapshot_indices + (index,)
        if self.strategy is Strategy.MONOLITHIC:
            return replace(self, V=mgs_extend(self.V, [x], drop_tol), snapshot_indices=indices)
        j, phi = split_snapshot(x, self.n_currents)
        return replace(self, V1=mgs_extend(self.V1, [j], drop_tol),
                       V2=mgs_extend(self.V2, [phi], drop_tol), snapshot_indices=indices)

    @property
    def sizes(self) -> tuple:
        if self.strategy is Strategy.MONOLITHIC:
            return (self.V.size,)
        return (self.V1.size, self.V2.size)

    @property
    def size_total(self) -> int:
        return sum(self.sizes)

    @property
    def drop_count(self) -> int:
        if self.strategy is Strategy.MONOLITHIC:
            return self.V.drop_count
        return self.V1.drop_count + self.V2.drop_count


def reconstruct(basis: ProjectionBasis, x_tilde: np.ndarray) -> np.ndarray:
    """Lift reduced coordinates back to the full state. Accepts one vector or
    one column per frequency."""
    x_tilde = np.asarray(x_tilde)
    if x_tilde.shape[0] != basis.size_total:
        raise ValueError(f"reduced vector has {x_tilde.shape[0]} entries, basis has {basis.size_total}")
    if basis.strategy is Strategy.MONOLITHIC:
        return basis.V.columns @ x_tilde
    k1 = basis.V1.size
    j = basis.V1.columns @ x_tilde[:k1]
    phi = basis.V2.columns @ x_tilde[k1:]
    return np.concatenate((j, phi), axis=0)


@dataclass(frozen=True)
class ReducedSystem:
    A_tilde: np.ndarray
    b_tilde: np.ndarray
    omega: float
    strategy: Strategy
    partition: tuple = ()

    def solve(self) -> np.ndarray:
        if self.b_tilde.size == 0:
            return np.zeros(0, dtype=complex)
        return lu_solve(self.A_tilde, self.b_tilde)


class ReducedOperator:
    """Frequency-independent reduced blocks of one basis.

    ``A_tilde(w)`` is affine in ``w``, so the projected pieces are formed once
    and combined per frequency.
    """

    def __init__(self, fom: FomMatrices, basis: ProjectionBasis, feed: int, v_gap: complex = 1.0):
        self.fom = fom
        self.basis = basis
        self.strategy = basis.strategy
        b = fom.excitation(feed, v_gap)
        ns = fom.n_currents
        if self.strategy is Strategy.MONOLITHIC:
            V = basis.V.columns
            Vj, Vp = V[:ns], V[ns:]
            A0V = np.concatenate((fom.R @ Vj + fom.ST @ Vp, fom.PS_scaled @ Vj))
            DV = np.concatenate((fom.L_scaled @ Vj, -Vp))
            self.A0 = V.conj().T @ A0V
            self.A1 = V.conj().T @ DV
            self.b = V.conj().T @ b
            self.partition = ()
        else:
            V1 = basis.V1.columns
            V2 = basis.V2.columns
            H1, H2 = V1.conj().T, V2.conj().T
            self.RR = H1 @ fom.R @ V1
            self.LL = H1 @ fom.L_scaled @ V1
            self.ST = H1 @ fom.ST @ V2
            self.PS = H2 @ fom.PS_scaled @ V1
            self.G = H2 @ V2
            self.b = np.concatenate((H1 @ b[:ns], np.zeros(V2.shape[1], dtype=complex)))
            self.partition = (V1.shape[1], V2.shape[1])

    def matrix(self, omega: float) -> np.ndarray:
        w = float(self.fom.scaled_omega(omega))
        if self.strategy is Strategy.MONOLITHIC:
            return self.A0 + 1j * w * self.A1
        return np.block([[self.RR + 1j * w * self.LL, self.ST],
                         [self.PS, -1j * w * self.G]])

    def system(self, omega: float) -> ReducedSystem:
        return ReducedSystem(self.matrix(omega), self.b.copy(), float(omega),
                             self.strategy, self.partition)

    def solve_all(self, omegas) -> np.ndarray:
        """Reduced solutions, one column per frequency."""
        omegas = np.atleast_1d(omegas)
        X = np.zeros((self.b.size, omegas.size), dtype=complex)
        for k, w in enumerate(omegas):
            X[:, k] = self.system(w).solve()
        return X


def _check_mode(basis, strategy):
    if basis.strategy is not strategy:
        raise ValueError(f"expected a {strategy.value} basis, got {basis.strategy.value}")


def project_monolithic(fom, basis, omega, feed, v_gap=1.0) -> ReducedSystem:
    _check_mode(basis, Strategy.MONOLITHIC)
    if basis.V.size < 1:
        raise ValueError("monolithic projection needs at least one basis vector")
    return ReducedOperator(fom, basis, feed, v_gap).system(omega)


def project_block(fom, basis, omega, feed, v_gap=1.0) -> ReducedSystem:
    _check_mode(basis, Strategy.BLOCK)
    if basis.V1.size < 1 or basis.V2.size < 1:
        raise ValueError("block projection needs at least one vector per field")
    return ReducedOperator(fom, basis, feed, v_gap).system(omega)


def collect_snapshot(fom: FomMatrices, omega: float, feed: int, v_gap: complex = 1.0) -> np.ndarray:
    return solve_fom(assemble_system(fom, omega, feed, v_gap))


def residuals(fom: FomMatrices, X: np.ndarray, omegas, feed: int, v_gap: complex = 1.0) -> np.ndarray:
    """Relative residuals ``|A(w_k) x_k - b| / |b|`` for each column of ``X``."""
    X = np.asarray(X).reshape(fom.size, -1)
    R = fom.apply(X, np.atleast_1d(omegas))
    R[feed] -= v_gap
    scale = abs(v_gap) if v_gap != 0 else 1.0
    return np.linalg.norm(R, axis=0) / scale


def residual(fom: FomMatrices, x_rec: np.ndarray, omega: float, feed: int,
             v_gap: complex = 1.0) -> float:
    return float(residuals(fom, x_rec, [omega], feed, v_gap)[0])


@dataclass
class GreedyStep:
    iteration: int
    grid_index: int
    frequency_hz: float
    basis_sizes: tuple
    max_residual: float
    worst_index: int

    @property
    def basis_size_total(self) -> int:
        return sum(self.basis_sizes)


@dataclass
class GreedyTrace:
    strategy: Strategy
    tolerance: float
    steps: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    converged: bool = False

    @property
    def n_snapshots(self) -> int:
        return len(self.steps)

    @property
    def sampled_indices(self) -> list:
        return [s.grid_index for s in self.steps]

    @property
    def final_residual(self) -> float:
        return self.steps[-1].max_residual if self.steps else float("nan")

    CSV_HEADER = ("iteration", "sampled_frequency_hz", "basis_size_total", "max_residual")

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.CSV_HEADER)
        for s in self.steps:
            w.writerow((s.iteration, f"{s.frequency_hz:.16e}", s.basis_size_total,
                        f"{s.max_residual:.16e}"))


def greedy_build(fom: FomMatrices, grid, config: GreedyConfig, feed: int,
                 v_gap: complex = 1.0):
    """Grow a projection basis until every grid frequency is certified.

    ``grid`` is a :class:`~aefie_mor.analysis.FrequencyGrid` or an array of
    angular frequencies. Frequencies already sampled are never re-sampled;
    if the ROM still fails there the loop keeps going elsewhere and ends
    non-converged once the cap or the grid is exhausted.

    Returns
    -------
    basis : ProjectionBasis
    trace : GreedyTrace
    """
    omegas = np.asarray(getattr(grid, "omegas", grid), dtype=float)
    if omegas.size == 0:
        raise ValueError("empty frequency grid")
    if config.initial_index >= omegas.size:
        raise ValueError("initial_index outside the grid")

    basis = ProjectionBasis.empty(config.strategy, fom.n_currents, fom.n_potentials)
    trace = GreedyTrace(config.strategy, config.tolerance)
    sampled = np.zeros(omegas.size, dtype=bool)
    idx = config.initial_index
    while True:
        x = collect_snapshot(fom, omegas[idx], feed, v_gap)
        basis = basis.extend(x, idx, config.drop_tol)
        sampled[idx] = True

        rom = ReducedOperator(fom, basis, feed, v_gap)
        X = reconstruct(basis, rom.solve_all(omegas))
        r = residuals(fom, X, omegas, feed, v_gap)
        worst = int(np.argmax(r))
        step = GreedyStep(trace.n_snapshots + 1, idx, omegas[idx] / (2 * np.pi),
                          basis.sizes, float(r[worst]), worst)
        trace.steps.append(step)
        trace.residuals.append(r)
        log.info("%s greedy it %d: f=%.4e Hz, basis %s, max residual %.3e",
                 config.strategy.value, step.iteration, step.frequency_hz,
                 step.basis_sizes, step.max_residual)

        if step.max_residual <= config.tolerance:
            trace.converged = True
            break
        if trace.n_snapshots >= config.max_snapshots or sampled.all():
            log.warning("%s greedy stopped without reaching %.1e after %d snapshots "
                        "(max residual %.3e)", config.strategy.value, config.tolerance,
                        trace.n_snapshots, step.max_residual)
            break
        # argmax picks the lowest index among ties
        idx = int(np.argmax(np.where(sampled, -np.inf, r)))
    return basis, trace
