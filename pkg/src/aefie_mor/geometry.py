"""Straight thin-wire dipole discretization."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

# Thin-wire validity: radius must stay below this fraction of the shortest segment.
THIN_WIRE_RATIO = 0.1


class ThinWireWarning(UserWarning):
    """The wire radius is too large for the thin-wire kernel to be trusted."""


@dataclass(frozen=True)
class WireModel:
    """A straight wire along the z-axis, centred on the origin.

    Segment ``s`` runs from node ``s`` to node ``s + 1`` (in the +z direction),
    which fixes the reference direction of the segment current.
    """

    length: float
    radius: float
    resistivity: float
    n_segments: int
    segment_endpoints: np.ndarray  # (N_s, 2, 3)
    node_positions: np.ndarray  # (N_n, 3)
    feed_segment: int

    @property
    def n_nodes(self) -> int:
        return self.node_positions.shape[0]

    @property
    def segment_lengths(self) -> np.ndarray:
        d = self.segment_endpoints[:, 1] - self.segment_endpoints[:, 0]
        return np.linalg.norm(d, axis=1)

    @property
    def axis_nodes(self) -> np.ndarray:
        """Node coordinates along the wire axis."""
        return self.node_positions[:, 2]

    @property
    def charge_cells(self) -> np.ndarray:
        """(N_n, 2) axial extents of the node charge cells.

        A node owns the half of every segment that touches it, so interior
        cells span one full segment length and the two end cells half of one.
        """
        z = self.axis_nodes
        mid = 0.5 * (z[:-1] + z[1:])
        lo = np.concatenate(([z[0]], mid))
        hi = np.concatenate((mid, [z[-1]]))
        return np.column_stack((lo, hi))

    @property
    def is_thin(self) -> bool:
        return self.radius < THIN_WIRE_RATIO * self.segment_lengths.min()


def discretize_dipole(length: float, radius: float, resistivity: float,
                      n_segments: int) -> WireModel:
    """Split a centre-fed dipole of total ``length`` into uniform segments.

    The feed is the centre segment; for an even segment count the two
    segments touching the midpoint are equally close and the lower index is
    used.

    Raises
    ------
    ValueError
        For non-positive dimensions, negative resistivity or fewer than three
        segments.
    """
    if not length > 0:
        raise ValueError(f"length must be positive, got {length!r}")
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius!r}")
    if not resistivity >= 0:
        raise ValueError(f"resistivity must be non-negative, got {resistivity!r}")
    if int(n_segments) != n_segments or n_segments < 3:
        raise ValueError(f"need at least 3 segments, got {n_segments!r}")
    n_segments = int(n_segments)

    z = np.linspace(-0.5 * length, 0.5 * length, n_segments + 1)
    nodes = np.zeros((n_segments + 1, 3))
    nodes[:, 2] = z
    endpoints = np.stack((nodes[:-1], nodes[1:]), axis=1)

    model = WireModel(
        length=float(length),
        radius=float(radius),
        resistivity=float(resistivity),
        n_segments=n_segments,
        segment_endpoints=endpoints,
        node_positions=nodes,
        feed_segment=(n_segments - 1) // 2,
    )
    if not model.is_thin:
        warnings.warn(
            f"radius {radius:g} m is not below {THIN_WIRE_RATIO} x segment "
            f"length {length / n_segments:g} m; partial elements may lose "
            "positive definiteness",
            ThinWireWarning,
            stacklevel=2,
        )
    return model


def incidence_matrix(model: WireModel) -> np.ndarray:
    """Node-by-segment incidence matrix, the discrete divergence.

    Entry ``(n, s)`` is +1 when segment ``s`` carries current into node ``n``
    and -1 when it carries current out of it.
    """
    ns = model.n_segments
    S = np.zeros((model.n_nodes, ns), dtype=np.int64)
    cols = np.arange(ns)
    S[cols, cols] = -1
    S[cols + 1, cols] = 1
    return S
