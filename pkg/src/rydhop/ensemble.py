"""Atom positions in a Thomas-Fermi cloud and blockade-constrained excitations.

Positions are plain float arrays in micrometers, shape ``(3,)`` for a single
point and ``(N, 3)`` for a list. Excitation batches are ``(B, n + 1, 3)`` with
the seeds first and the probe in the last slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PlacementError, SamplerError, UsageError

TF_MAX_ATTEMPTS = 1_000_000
SEED_MAX_ATTEMPTS = 10_000
# a realization that jams (budget spent on one seed) is redrawn from scratch
SEED_MAX_RESTARTS = 10

# volume fraction of the [-1, 1]^3 box accepted by the parabolic density
_TF_ACCEPTANCE = np.pi / 15.0


@dataclass(frozen=True)
class CloudConfig:
    atom_number: int = 90_000
    tf_radii: tuple[float, float, float] = (4.6, 8.2, 4.6)

    def __post_init__(self):
        if int(self.atom_number) != self.atom_number or self.atom_number < 1:
            raise UsageError(f"atom_number must be a positive integer, got {self.atom_number}")
        radii = tuple(float(r) for r in self.tf_radii)
        if len(radii) != 3 or not all(np.isfinite(r) and r > 0 for r in radii):
            raise UsageError(f"tf_radii must be three positive lengths, got {self.tf_radii}")
        object.__setattr__(self, "tf_radii", radii)


@dataclass(frozen=True)
class ExcitationSet:
    seed_positions: np.ndarray
    probe_position: np.ndarray
    blockade_radius: float

    @property
    def n(self) -> int:
        return len(self.seed_positions)

    @property
    def positions(self) -> np.ndarray:
        """All ``n + 1`` positions, probe last."""
        return np.vstack([np.reshape(self.seed_positions, (-1, 3)), self.probe_position[None, :]])

    def min_seed_distance(self) -> float:
        return float(min_pair_distance(self.seed_positions))


def min_pair_distance(points: np.ndarray) -> float:
    points = np.reshape(points, (-1, 3))
    if len(points) < 2:
        return np.inf
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    return float(d[np.triu_indices(len(points), 1)].min())


def sample_unit_parabola(count: int, rng: np.random.Generator,
                         max_attempts: int = TF_MAX_ATTEMPTS) -> np.ndarray:
    """Draw ``count`` points with density proportional to ``max(0, 1 - |u|^2)``."""
    out = np.empty((count, 3))
    filled = 0
    rounds = 0
    while filled < count:
        # ``rounds`` bounds the attempts any single point can have consumed
        if rounds >= max_attempts:
            raise SamplerError(f"Thomas-Fermi sampler exceeded {max_attempts} attempts per point")
        need = count - filled
        draw = int(need / _TF_ACCEPTANCE * 1.2) + 16
        u = rng.uniform(-1.0, 1.0, size=(draw, 3))
        keep = rng.uniform(size=draw) < 1.0 - np.einsum("ij,ij->i", u, u)
        acc = u[keep][:need]
        out[filled:filled + len(acc)] = acc
        filled += len(acc)
        rounds += 1
    return out


def sample_thomas_fermi(config: CloudConfig, rng: np.random.Generator,
                        max_attempts: int = TF_MAX_ATTEMPTS) -> np.ndarray:
    """Sample ``config.atom_number`` positions from the Thomas-Fermi profile.

    The density is the inverted parabola ``max(0, 1 - sum_k (x_k / R_k)^2)``
    with semi-axes ``R_k = config.tf_radii``.
    """
    u = sample_unit_parabola(config.atom_number, rng, max_attempts)
    return u * np.asarray(config.tf_radii)


def select_seeds(positions: np.ndarray, n: int, blockade_radius: float,
                 rng: np.random.Generator, max_attempts: int = SEED_MAX_ATTEMPTS,
                 max_restarts: int = SEED_MAX_RESTARTS) -> list[int]:
    """Pick ``n`` atom indices with pairwise separation >= ``blockade_radius``.

    Candidates are drawn uniformly from the atom list one at a time and
    rejected when they are already chosen or sit inside the blockade sphere
    of an accepted seed. If one seed exhausts ``max_attempts`` the whole
    selection starts over, at most ``max_restarts`` times.
    """
    if n < 0 or blockade_radius < 0:
        raise UsageError("n and blockade_radius must be non-negative")
    if n == 0:
        return []
    positions = np.asarray(positions, dtype=float)
    if len(positions) == 0:
        raise UsageError("cannot select seeds from an empty cloud")
    rb2 = blockade_radius * blockade_radius
    for _ in range(max_restarts + 1):
        chosen: list[int] = []
        chosen_pos = np.empty((n, 3))
        for k in range(n):
            for _ in range(max_attempts):
                idx = int(rng.integers(len(positions)))
                if idx in chosen:
                    continue
                d = chosen_pos[:k] - positions[idx]
                if k == 0 or np.einsum("ij,ij->i", d, d).min() >= rb2:
                    chosen.append(idx)
                    chosen_pos[k] = positions[idx]
                    break
            else:
                break
        if len(chosen) == n:
            return chosen
    raise PlacementError(
        f"could not place {n} seeds at r_B={blockade_radius} um: a seed exhausted "
        f"{max_attempts} attempts in each of {max_restarts + 1} tries")


def place_probe(positions: np.ndarray, seed_indices, rng: np.random.Generator) -> int:
    """Uniformly random non-seed atom index; no distance constraint."""
    n_atoms = len(positions)
    seeds = sorted(set(int(i) for i in seed_indices))
    free = n_atoms - len(seeds)
    if free <= 0:
        raise UsageError("no non-seed atom left for the probe")
    k = int(rng.integers(free))
    # map k onto the k-th index not in seeds
    for s in seeds:
        if s <= k:
            k += 1
        else:
            break
    return k


def draw_excitation_set(positions: np.ndarray, n: int, blockade_radius: float,
                        rng: np.random.Generator,
                        max_attempts: int = SEED_MAX_ATTEMPTS,
                        max_restarts: int = SEED_MAX_RESTARTS) -> ExcitationSet:
    seeds = select_seeds(positions, n, blockade_radius, rng, max_attempts, max_restarts)
    probe = place_probe(positions, seeds, rng)
    return ExcitationSet(np.asarray(positions)[seeds].reshape(-1, 3),
                         np.asarray(positions)[probe].copy(), float(blockade_radius))


def sample_excitations(config: CloudConfig, n: int, blockade_radius: float, batch: int,
                       rng: np.random.Generator, max_attempts: int = SEED_MAX_ATTEMPTS,
                       max_restarts: int = SEED_MAX_RESTARTS) -> np.ndarray:
    """Excitation geometries for ``batch`` independent realizations.

    Equivalent in law to sampling a fresh cloud per realization and running
    :func:`select_seeds` and :func:`place_probe` on it, with candidates drawn
    straight from the Thomas-Fermi density instead of from a materialized
    atom list (the two agree up to O(n / atom_number) re-draw corrections).

    Returns an array of shape ``(batch, n + 1, 3)``; the probe is last.
    """
    if n < 0 or blockade_radius < 0:
        raise UsageError("n and blockade_radius must be non-negative")
    radii = np.asarray(config.tf_radii)
    out = np.zeros((batch, n + 1, 3))
    rb2 = blockade_radius * blockade_radius
    placed = np.zeros(batch, dtype=int)
    spent = np.zeros(batch, dtype=int)  # attempts on the current seed
    restarts = np.zeros(batch, dtype=int)
    slots = np.arange(n)
    pending = np.arange(batch) if n else np.arange(0)
    while len(pending):
        # several candidates per jammed realization keep the loop short; the
        # first valid one in draw order is taken, as in one-at-a-time darts
        m = int(min(max_attempts, max(1, batch // len(pending))))
        cand = sample_unit_parabola(len(pending) * m, rng).reshape(len(pending), m, 3) * radii
        d = out[pending, None, :n] - cand[:, :, None, :]
        d2 = np.einsum("bmkj,bmkj->bmk", d, d)
        active = slots[None, None, :] < placed[pending, None, None]
        ok = ~np.any(active & (d2 < rb2), axis=2)
        ok &= np.arange(m)[None, :] < (max_attempts - spent[pending])[:, None]
        hit = ok.any(axis=1)
        first = ok.argmax(axis=1)
        rows = pending[hit]
        out[rows, placed[rows]] = cand[hit, first[hit]]
        placed[rows] += 1
        spent[rows] = 0
        spent[pending[~hit]] += m
        jammed = pending[~hit][spent[pending[~hit]] >= max_attempts]
        if len(jammed):
            restarts[jammed] += 1
            if restarts[jammed].max() > max_restarts:
                raise PlacementError(
                    f"could not place {n} seeds at r_B={blockade_radius} um: a seed exhausted "
                    f"{max_attempts} attempts in each of {max_restarts + 1} tries")
            placed[jammed] = 0
            spent[jammed] = 0
        pending = pending[placed[pending] < n]
    out[:, n] = sample_unit_parabola(batch, rng) * radii
    return out
