"""Brute-force many-body Hamiltonian built from explicit spin operators.

Basis states are bitmasks: bit ``i`` set means atom ``i`` is in the P (up)
state. Used to cross-check the single-excitation construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import SizeCapError, UsageError
from .interaction import InteractionCoefficients, coupling_j, coupling_vdw

MAX_ATOMS = 14

SIGMA_PLUS = np.array([[0.0, 0.0], [1.0, 0.0]])   # |down> -> |up>, up = bit value 1
SIGMA_MINUS = SIGMA_PLUS.T.copy()
N_UP = np.diag([0.0, 1.0])
N_DOWN = np.diag([1.0, 0.0])


@dataclass
class FullSpinHamiltonian:
    matrix: np.ndarray
    n_atoms: int

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def site_operator(op: np.ndarray, site: int, n_atoms: int) -> np.ndarray:
    """``op`` acting on ``site``; site 0 is the least significant bit."""
    factors = [np.eye(2)] * n_atoms
    factors[n_atoms - 1 - site] = op
    return reduce(np.kron, factors)


def build_full(positions, coeff: InteractionCoefficients) -> FullSpinHamiltonian:
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    m = len(positions)
    if m > MAX_ATOMS:
        raise SizeCapError(f"full Hilbert space capped at {MAX_ATOMS} atoms, got {m}")
    dim = 2 ** m
    H = np.zeros((dim, dim))
    plus = [site_operator(SIGMA_PLUS, i, m) for i in range(m)]
    minus = [site_operator(SIGMA_MINUS, i, m) for i in range(m)]
    up = [site_operator(N_UP, i, m) for i in range(m)]
    down = [site_operator(N_DOWN, i, m) for i in range(m)]
    for i in range(m):
        for j in range(i + 1, m):
            J = coupling_j(positions[i], positions[j], coeff)
            H += J * (plus[i] @ minus[j] + minus[i] @ plus[j])
            if coeff.c6_down:
                H += coupling_vdw(positions[i], positions[j], coeff.c6_down, coeff.c6_down_table,
                                  coeff.axis) * (down[i] @ down[j])
            if coeff.c6_up:
                H += coupling_vdw(positions[i], positions[j], coeff.c6_up) * (up[i] @ up[j])
    return FullSpinHamiltonian(H, m)


def sector_states(n_atoms: int, excitation_count: int) -> np.ndarray:
    """Bitmasks with ``excitation_count`` set bits, ascending."""
    masks = np.arange(2 ** n_atoms)
    pop = np.array([bin(k).count("1") for k in masks])
    return masks[pop == excitation_count]


def extract_sector(full: FullSpinHamiltonian, excitation_count: int) -> np.ndarray:
    if not 0 <= excitation_count <= full.n_atoms:
        raise UsageError(f"excitation count must be within 0..{full.n_atoms}")
    idx = sector_states(full.n_atoms, excitation_count)
    return full.matrix[np.ix_(idx, idx)].copy()


def off_sector_max(full: FullSpinHamiltonian) -> float:
    """Largest ``|H|`` entry coupling different excitation numbers (0 by construction)."""
    pop = np.array([bin(k).count("1") for k in range(full.dim)])
    cross = pop[:, None] != pop[None, :]
    return float(np.abs(full.matrix[cross]).max()) if cross.any() else 0.0
