"""Impedance and structure metrics, and the FOM / ROM comparison sweep."""

from __future__ import annotations

import enum
import io
import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import _io
from .fom import FomMatrices, assemble_fom, assemble_system, solve_fom, DEFAULT_TIME_UNIT
from .geometry import WireModel
from .mor import (
    GreedyConfig,
    ProjectionBasis,
    ReducedOperator,
    Strategy,
    greedy_build,
    reconstruct,
    residuals,
)

log = logging.getLogger(__name__)

THREADS_ENV = "AEFIE_MOR_THREADS"


class OpenCircuitError(ZeroDivisionError):
    """The feed current vanished, so no impedance exists."""


class Source(str, enum.Enum):
    FOM = "fom"
    MONOLITHIC_ROM = "mono"
    BLOCK_ROM = "block"


ROM_SOURCE = {Strategy.MONOLITHIC: Source.MONOLITHIC_ROM, Strategy.BLOCK: Source.BLOCK_ROM}


@dataclass(frozen=True)
class FrequencyGrid:
    frequencies: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float).reshape(-1)
        if f.size == 0:
            raise ValueError("frequency grid is empty")
        if not np.all(f > 0):
            raise ValueError("grid frequencies must be positive")
        if np.any(np.diff(f) <= 0):
            raise ValueError("grid frequencies must be strictly increasing")
        object.__setattr__(self, "frequencies", f)

    @classmethod
    def logspace(cls, f_min: float, f_max: float, n: int) -> "FrequencyGrid":
        return cls(np.logspace(np.log10(f_min), np.log10(f_max), n))

    @classmethod
    def linspace(cls, f_min: float, f_max: float, n: int) -> "FrequencyGrid":
        return cls(np.linspace(f_min, f_max, n))

    @property
    def omegas(self) -> np.ndarray:
        return 2 * np.pi * self.frequencies

    def __len__(self):
        return self.frequencies.size


@dataclass
class SweepResult:
    source: Source
    frequencies: np.ndarray
    Z: np.ndarray
    solutions: np.ndarray  # one state per column
    residuals: np.ndarray
    snapshots_used: int = 0
    converged: bool = True

    def __len__(self):
        return self.frequencies.size


def impedance(solution: np.ndarray, feed: int, v_gap: complex = 1.0):
    """Input impedance ``v_gap / j_feed``; works column-wise on a matrix."""
    j_feed = np.asarray(solution)[feed]
    if np.any(j_feed == 0):
        raise OpenCircuitError(f"zero current on feed segment {feed}")
    return v_gap / j_feed


def err_z(z_rom, z_fom):
    """``|Z_rom - Z_fom| / |Z_fom|``."""
    z_fom = np.asarray(z_fom)
    if np.any(z_fom == 0):
        raise ValueError("reference impedance is zero")
    out = np.abs(np.asarray(z_rom) - z_fom) / np.abs(z_fom)
    return float(out) if out.ndim == 0 else out


def solenoidality_deviation(fom: FomMatrices, solution: np.ndarray, omega) -> np.ndarray:
    """``d = P S j - i w phi`` in SI units, column-wise for a matrix of states."""
    solution = np.asarray(solution)
    ns = fom.n_currents
    return fom.PS @ solution[:ns] - 1j * np.asarray(omega) * solution[ns:]


def err_d(d_rom: np.ndarray, d_fom: np.ndarray) -> float:
    """``|d_rom - d_fom| / |d_fom|``; falls back to ``|d_rom|`` when
    ``d_fom`` is exactly zero, with a warning."""
    den = np.linalg.norm(d_fom)
    num = np.linalg.norm(np.asarray(d_rom) - np.asarray(d_fom))
    if den == 0:
        warnings.warn("d_fom is zero; reporting absolute |d_rom|", RuntimeWarning, stacklevel=2)
        return float(np.linalg.norm(d_rom))
    return float(num / den)


def err_d_columns(d_rom: np.ndarray, d_fom: np.ndarray) -> np.ndarray:
    return np.array([err_d(d_rom[:, k], d_fom[:, k]) for k in range(d_fom.shape[1])])


def default_workers() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be >= 1")
        return n
    return os.cpu_count() or 1


def fom_sweep(fom: FomMatrices, grid: FrequencyGrid, feed: int, v_gap: complex = 1.0,
              workers: int | None = None) -> SweepResult:
    """Direct solves at every grid frequency.

    Solves run in a thread pool with single-threaded BLAS inside each task,
    so the numbers do not depend on the worker count.
    """
    omegas = grid.omegas
    workers = workers or default_workers()

    def one(w):
        return solve_fom(assemble_system(fom, w, feed, v_gap))

    with threadpool_limits(limits=1):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                xs = list(pool.map(one, omegas))
        else:
            xs = [one(w) for w in omegas]
    X = np.column_stack(xs)
    return SweepResult(Source.FOM, grid.frequencies.copy(), impedance(X, feed, v_gap), X,
                       residuals(fom, X, omegas, feed, v_gap))


def rom_sweep(fom: FomMatrices, basis: ProjectionBasis, grid: FrequencyGrid, feed: int,
              v_gap: complex = 1.0, converged: bool = True) -> SweepResult:
    omegas = grid.omegas
    X = reconstruct(basis, ReducedOperator(fom, basis, feed, v_gap).solve_all(omegas))
    return SweepResult(ROM_SOURCE[basis.strategy], grid.frequencies.copy(),
                       impedance(X, feed, v_gap), X, residuals(fom, X, omegas, feed, v_gap),
                       snapshots_used=len(basis.snapshot_indices), converged=converged)


@dataclass
class Comparison:
    model: WireModel
    fom_matrices: FomMatrices
    grid: FrequencyGrid
    fom: SweepResult
    roms: dict = field(default_factory=dict)
    bases: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)

    def err_z(self, strategy) -> np.ndarray:
        return err_z(self.roms[Strategy(strategy)].Z, self.fom.Z)

    def d(self, result: SweepResult) -> np.ndarray:
        return solenoidality_deviation(self.fom_matrices, result.solutions, self.grid.omegas)

    def err_d(self, strategy) -> np.ndarray:
        return err_d_columns(self.d(self.roms[Strategy(strategy)]), self.d(self.fom))

    def summary(self, strategy) -> str:
        s = Strategy(strategy)
        tr = self.traces[s]
        return (f"{s.value}: converged={'yes' if tr.converged else 'no'} "
                f"snapshots={tr.n_snapshots} max_err_Z={self.err_z(s).max():.3e}")

    def write_csvs(self, directory) -> list:
        """Write the metric tables and greedy traces; returns the paths."""
        return write_outputs(directory, self.fom, self.roms, self.traces, self)


def write_outputs(directory, fom: SweepResult, roms: dict, traces: dict,
                  comparison: Comparison | None = None) -> list:
    directory = Path(directory)
    order = [s for s in (Strategy.MONOLITHIC, Strategy.BLOCK) if s in roms]
    tag = {Strategy.MONOLITHIC: "mono", Strategy.BLOCK: "block"}
    f = fom.frequencies
    paths = []

    p = directory / "impedance.csv"
    _io.write_table(p, ["f_hz", "abs_Z_fom"] + [f"abs_Z_{tag[s]}" for s in order],
                    [f, np.abs(fom.Z)] + [np.abs(roms[s].Z) for s in order])
    paths.append(p)
    if order and comparison is not None:
        p = directory / "err_z.csv"
        _io.write_table(p, ["f_hz"] + [f"err_{tag[s]}" for s in order],
                        [f] + [comparison.err_z(s) for s in order])
        paths.append(p)
        p = directory / "err_d.csv"
        _io.write_table(p, ["f_hz"] + [f"err_{tag[s]}" for s in order],
                        [f] + [comparison.err_d(s) for s in order])
        paths.append(p)
    for s in order:
        if s in traces:
            buf = io.StringIO()
            traces[s].write_csv(buf)
            p = directory / f"greedy_trace_{tag[s]}.csv"
            _io.atomic_write_text(p, buf.getvalue())
            paths.append(p)
    return paths


def run_comparison(model: WireModel, grid: FrequencyGrid, tolerance: float = 1e-3,
                   max_snapshots: int = 100, strategies=(Strategy.MONOLITHIC, Strategy.BLOCK),
                   time_unit: float = DEFAULT_TIME_UNIT, v_gap: complex = 1.0,
                   fom_matrices: FomMatrices | None = None,
                   workers: int | None = None) -> Comparison:
    """FOM sweep plus one greedy ROM per strategy over the same grid.

    A greedy that misses the tolerance still produces a sweep; it is marked
    ``converged=False``.
    """
    fm = fom_matrices if fom_matrices is not None else assemble_fom(model, time_unit=time_unit)
    feed = model.feed_segment
    log.info("FOM sweep: %d unknowns, %d frequencies", fm.size, len(grid))
    comp = Comparison(model, fm, grid, fom_sweep(fm, grid, feed, v_gap, workers))
    for s in strategies:
        s = Strategy(s)
        cfg = GreedyConfig(tolerance=tolerance, max_snapshots=max_snapshots, strategy=s)
        basis, trace = greedy_build(fm, grid, cfg, feed, v_gap)
        comp.bases[s] = basis
        comp.traces[s] = trace
        comp.roms[s] = rom_sweep(fm, basis, grid, feed, v_gap, converged=trace.converged)
    return comp
