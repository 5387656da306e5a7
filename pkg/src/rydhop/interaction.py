"""Dipole-dipole hopping and van der Waals couplings.

Units throughout: lengths in um, energies in h*MHz.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CoincidentPositionError, UsageError

MIN_DISTANCE = 1e-6


@dataclass(frozen=True)
class InteractionCoefficients:
    """Coupling constants for one S/P Rydberg pair.

    ``c3_radial`` multiplies ``(1 - 3 cos^2 theta) / R^3``; ``c6_down`` and
    ``c6_up`` are the S-S and P-P van der Waals coefficients. ``c6_down_table``
    optionally makes the S-S coefficient angle dependent: a pair of arrays
    ``(cos2_grid, factor)`` interpolated piecewise-linearly in ``cos^2 theta``
    and multiplied onto ``c6_down``.
    """

    c3_radial: float
    c6_down: float = 0.0
    c6_up: float = 0.0
    quantization_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    c6_down_table: tuple[tuple[float, ...], tuple[float, ...]] | None = field(default=None)

    def __post_init__(self):
        axis = np.asarray(self.quantization_axis, dtype=float)
        if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise UsageError(f"quantization_axis must be a unit 3-vector, got {self.quantization_axis}")
        object.__setattr__(self, "quantization_axis", tuple(float(a) for a in axis))
        if self.c6_down_table is not None:
            grid, factor = (tuple(float(v) for v in part) for part in self.c6_down_table)
            if len(grid) != len(factor) or len(grid) < 2 or np.any(np.diff(grid) <= 0):
                raise UsageError("c6_down_table needs matching ascending cos^2 grid and factors")
            object.__setattr__(self, "c6_down_table", (grid, factor))

    @property
    def axis(self) -> np.ndarray:
        return np.asarray(self.quantization_axis)


def _separation(a, b, min_distance):
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    r = float(np.linalg.norm(d))
    if r < min_distance:
        raise CoincidentPositionError(f"positions {a} and {b} closer than {min_distance} um")
    return d, r


def coupling_j(a, b, coeff: InteractionCoefficients, min_distance: float = MIN_DISTANCE) -> float:
    """Hopping amplitude ``c3_radial * (1 - 3 cos^2 theta) / R^3``."""
    d, r = _separation(a, b, min_distance)
    cos = float(np.dot(d, coeff.axis)) / r
    return coeff.c3_radial * (1.0 - 3.0 * cos * cos) / r**3


def coupling_vdw(a, b, c6: float, table=None, axis=(0.0, 0.0, 1.0),
                 min_distance: float = MIN_DISTANCE) -> float:
    """Van der Waals energy ``c6 / R^6`` (times the angular table, if given)."""
    d, r = _separation(a, b, min_distance)
    if table is not None:
        cos = float(np.dot(d, axis)) / r
        c6 = c6 * float(np.interp(cos * cos, table[0], table[1]))
    return c6 / r**6


def pair_geometry(positions: np.ndarray, axis: np.ndarray, min_distance: float = MIN_DISTANCE):
    """Distances and ``cos^2 theta`` for all pairs in a batch of geometries.

    ``positions`` has shape ``(..., m, 3)``. The diagonal of both outputs is
    set to 1 so that downstream divisions stay finite; callers mask it.
    """
    d = positions[..., :, None, :] - positions[..., None, :, :]
    r = np.sqrt(np.einsum("...k,...k->...", d, d))
    m = positions.shape[-2]
    diag = np.eye(m, dtype=bool)
    r = np.where(diag, 1.0, r)
    if m > 1 and r.min() < min_distance:
        raise CoincidentPositionError(f"two positions closer than {min_distance} um")
    cos2 = (np.einsum("...k,k->...", d, axis) / r) ** 2
    cos2 = np.where(diag, 1.0, cos2)
    return r, cos2


def hopping_matrix(positions: np.ndarray, coeff: InteractionCoefficients,
                   min_distance: float = MIN_DISTANCE) -> np.ndarray:
    """``J_ij`` for every pair, zero on the diagonal. Shape ``(..., m, m)``."""
    r, cos2 = pair_geometry(positions, coeff.axis, min_distance)
    J = coeff.c3_radial * (1.0 - 3.0 * cos2) / r**3
    m = positions.shape[-2]
    return np.where(np.eye(m, dtype=bool), 0.0, J)


def vdw_matrix(positions: np.ndarray, c6: float, table=None, axis=(0.0, 0.0, 1.0),
               min_distance: float = MIN_DISTANCE) -> np.ndarray:
    """``c6 / R_ij^6`` for every pair, zero on the diagonal."""
    r, cos2 = pair_geometry(positions, np.asarray(axis, dtype=float), min_distance)
    c = c6 if table is None else c6 * np.interp(cos2, table[0], table[1])
    V = c / r**6
    m = positions.shape[-2]
    return np.where(np.eye(m, dtype=bool), 0.0, V)
