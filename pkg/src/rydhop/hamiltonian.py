"""Single-excitation Hamiltonian of one seed/probe geometry and its eigenpairs.

Basis state ``|i>`` carries the P excitation on atom ``i`` with every other
atom in S. The probe is the last atom, so ``|n+1>`` is index ``n``.

Diagonal (van der Waals) entries are the S-S pair energies of all pairs that
do not involve ``i``. Three offset conventions are available; they differ by a
realization-wide constant only:

``"raw"``
    the bare pair sum.
``"initial_state"`` (default)
    subtract the S-S energy of the seeds alone, i.e. the energy before the
    probe photon is absorbed. ``H[probe, probe] = 0`` and detunings are
    measured from the isolated probe line.
``"all_pairs"``
    subtract the sum over every pair, leaving ``-sum_k V(r_i, r_k)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, UsageError
from .ensemble import ExcitationSet
from .interaction import MIN_DISTANCE, InteractionCoefficients, hopping_matrix, vdw_matrix

OFFSETS = ("raw", "initial_state", "all_pairs")


@dataclass
class SingleExcitationHamiltonian:
    matrix: np.ndarray
    probe_index: int
    offset: str = "initial_state"

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass
class EigenDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns


def _diagonal_field(V: np.ndarray, offset: str) -> np.ndarray:
    """Diagonal entries from a batch of pair-energy matrices ``(..., m, m)``."""
    total = V.sum(axis=(-2, -1)) / 2.0
    involving = V.sum(axis=-1)
    if offset == "raw":
        return total[..., None] - involving
    if offset == "all_pairs":
        return -involving
    if offset == "initial_state":
        # probe is the last atom; seeds are the rest
        seed_pairs = total - involving[..., -1]
        return (total - seed_pairs)[..., None] - involving
    raise UsageError(f"unknown offset convention {offset!r}; expected one of {OFFSETS}")


def hamiltonian_matrices(positions: np.ndarray, coeff: InteractionCoefficients,
                         offset: str = "initial_state",
                         min_distance: float = MIN_DISTANCE) -> np.ndarray:
    """Batched single-excitation matrices for positions ``(..., n + 1, 3)``."""
    positions = np.asarray(positions, dtype=float)
    J = np.triu(hopping_matrix(positions, coeff, min_distance), 1)
    H = J + np.swapaxes(J, -1, -2)
    m = positions.shape[-2]
    if coeff.c6_down != 0.0 and m > 1:
        V = vdw_matrix(positions, coeff.c6_down, coeff.c6_down_table, coeff.axis, min_distance)
        V = np.triu(V, 1)
        V = V + np.swapaxes(V, -1, -2)
        diag = _diagonal_field(V, offset)
        idx = np.arange(m)
        H[..., idx, idx] = diag
    elif offset not in OFFSETS:
        raise UsageError(f"unknown offset convention {offset!r}; expected one of {OFFSETS}")
    return H


def build_hamiltonian(exc: ExcitationSet, coeff: InteractionCoefficients,
                      offset: str = "initial_state",
                      min_distance: float = MIN_DISTANCE) -> SingleExcitationHamiltonian:
    pos = exc.positions
    return SingleExcitationHamiltonian(hamiltonian_matrices(pos, coeff, offset, min_distance),
                                       probe_index=len(pos) - 1, offset=offset)


def fix_signs(vectors: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Flip eigenvector columns so their largest-magnitude component is positive.

    Ties within ``tol`` go to the lowest index, which keeps e.g. the dimer
    vectors ``(1, -1)/sqrt(2)`` stable against rounding.
    """
    mag = np.abs(vectors)
    peak = mag.max(axis=-2, keepdims=True)
    lead = np.argmax(mag >= peak - tol, axis=-2)
    lead_val = np.take_along_axis(vectors, lead[..., None, :], axis=-2)
    return vectors * np.where(lead_val < 0, -1.0, 1.0)


def diagonalize_matrices(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a batch ``(..., m, m)`` of real symmetric matrices.

    Eigenvalues come back ascending; eigenvector columns follow
    :func:`fix_signs`.
    """
    H = np.asarray(H, dtype=float)
    if not np.all(np.isfinite(H)):
        raise UsageError("Hamiltonian has non-finite entries")
    try:
        E, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"eigensolver did not converge: {exc}") from exc
    return E, fix_signs(V)


def diagonalize(h: SingleExcitationHamiltonian | np.ndarray) -> EigenDecomposition:
    matrix = h.matrix if isinstance(h, SingleExcitationHamiltonian) else np.asarray(h, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise UsageError(f"expected a square matrix, got shape {matrix.shape}")
    if not np.array_equal(matrix, matrix.T):
        raise UsageError("Hamiltonian is not symmetric")
    E, V = diagonalize_matrices(matrix)
    return EigenDecomposition(E, V)
