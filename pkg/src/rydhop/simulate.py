"""Monte Carlo driver: sample geometries, diagonalize, accumulate.

Realizations are processed in fixed-size chunks. Chunk ``k`` draws from its
own stream ``SeedSequence(master_seed, spawn_key=(n, rb_key, k))``, and chunk
partials are merged in chunk order, so output does not depend on how many
workers ran the chunks.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ensemble import SEED_MAX_ATTEMPTS, SEED_MAX_RESTARTS, CloudConfig, sample_excitations, sample_thomas_fermi, \
    select_seeds, place_probe
from .errors import NormalizationError
from .hamiltonian import diagonalize_matrices, hamiltonian_matrices
from .interaction import InteractionCoefficients
from .localization import ProfileAccumulator
from .spectra import SpectrumAccumulator, completeness_defect

log = logging.getLogger(__name__)

CHUNK_SIZE = 4096
COMPLETENESS_TOL = 1e-10


@dataclass(frozen=True)
class CellTask:
    cloud: CloudConfig
    coeff: InteractionCoefficients
    n: int
    blockade_radius: float
    bin_edges: tuple
    master_seed: int
    offset: str = "initial_state"
    check_fraction: float = 0.01
    cloud_mode: str = "lazy"
    profile_edges: tuple | None = None
    pair_threshold: float = 0.9
    dump_dir: str | None = None
    max_seed_attempts: int = SEED_MAX_ATTEMPTS
    max_seed_restarts: int = SEED_MAX_RESTARTS

    @property
    def rb_key(self) -> int:
        return int(round(self.blockade_radius * 1e6))


@dataclass
class CellResult:
    spectrum: SpectrumAccumulator
    profile: ProfileAccumulator | None = None
    completeness_checked: int = 0
    max_completeness_defect: float = 0.0
    partial: bool = False
    chunks: int = 0
    dump_files: list = field(default_factory=list)


def chunk_rng(task: CellTask, chunk_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(task.master_seed, spawn_key=(task.n, task.rb_key, chunk_index))
    return np.random.default_rng(ss)


def chunk_geometries(task: CellTask, count: int, rng: np.random.Generator) -> np.ndarray:
    if task.cloud_mode == "lazy":
        return sample_excitations(task.cloud, task.n, task.blockade_radius, count, rng,
                                  task.max_seed_attempts, task.max_seed_restarts)
    out = np.empty((count, task.n + 1, 3))
    for b in range(count):
        pos = sample_thomas_fermi(task.cloud, rng)
        seeds = select_seeds(pos, task.n, task.blockade_radius, rng, task.max_seed_attempts,
                             task.max_seed_restarts)
        out[b, :task.n] = pos[seeds]
        out[b, task.n] = pos[place_probe(pos, seeds, rng)]
    return out


def run_chunk(task: CellTask, chunk_index: int, count: int) -> CellResult:
    rng = chunk_rng(task, chunk_index)
    geom = chunk_geometries(task, count, rng)
    H = hamiltonian_matrices(geom, task.coeff, task.offset)
    E, V = diagonalize_matrices(H)
    w = V[:, -1, :] ** 2

    result = CellResult(SpectrumAccumulator(task.bin_edges).add(E, w), chunks=1)
    if task.check_fraction > 0:
        stride = max(1, int(round(1.0 / task.check_fraction)))
        defect = completeness_defect(w[::stride])
        result.completeness_checked = len(defect)
        result.max_completeness_defect = float(defect.max()) if len(defect) else 0.0
        if result.max_completeness_defect > COMPLETENESS_TOL:
            raise NormalizationError(
                f"probe weights sum off by {result.max_completeness_defect:.3e} (n={task.n})")
    if task.profile_edges is not None:
        result.profile = ProfileAccumulator(task.profile_edges, task.pair_threshold).add(E, V)
    if task.dump_dir is not None:
        base = Path(task.dump_dir) / f"n{task.n}_rb{task.blockade_radius:.3f}_chunk{chunk_index:05d}"
        np.save(f"{base}_energies.npy", E)
        np.save(f"{base}_vectors.npy", V)
        result.dump_files.append(str(base))
    return result


def _merge(into: CellResult | None, part: CellResult) -> CellResult:
    if into is None:
        return part
    into.spectrum.merge(part.spectrum)
    if into.profile is not None and part.profile is not None:
        into.profile.merge(part.profile)
    into.completeness_checked += part.completeness_checked
    into.max_completeness_defect = max(into.max_completeness_defect, part.max_completeness_defect)
    into.chunks += part.chunks
    into.dump_files.extend(part.dump_files)
    return into


def _chunk_plan(realizations: int, chunk_size: int):
    full, rest = divmod(realizations, chunk_size)
    sizes = [chunk_size] * full + ([rest] if rest else [])
    return list(enumerate(sizes))


def run_cell(task: CellTask, realizations: int, workers: int = 1,
             chunk_size: int = CHUNK_SIZE) -> CellResult:
    """Run ``realizations`` samples of one ``(n, r_B)`` cell.

    A KeyboardInterrupt stops the run and returns the chunks finished so far
    with ``partial=True``.
    """
    plan = _chunk_plan(realizations, chunk_size)
    if task.dump_dir is not None:
        Path(task.dump_dir).mkdir(parents=True, exist_ok=True)
    result = None
    try:
        if workers <= 1 or len(plan) <= 1:
            for idx, size in plan:
                result = _merge(result, run_chunk(task, idx, size))
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(run_chunk, task, idx, size) for idx, size in plan]
                try:
                    for fut in futures:
                        result = _merge(result, fut.result())
                except KeyboardInterrupt:
                    for fut in futures:
                        fut.cancel()
                    raise
    except KeyboardInterrupt:
        log.warning("interrupted; keeping %d finished chunks", 0 if result is None else result.chunks)
        if result is None:
            result = CellResult(SpectrumAccumulator(task.bin_edges),
                                ProfileAccumulator(task.profile_edges, task.pair_threshold)
                                if task.profile_edges is not None else None)
        result.partial = True
    if result is None:
        result = CellResult(SpectrumAccumulator(task.bin_edges))
    return result


def cell_metadata(task: CellTask, result: CellResult) -> dict:
    return {
        "n": task.n,
        "blockade_radius_um": task.blockade_radius,
        "master_seed": task.master_seed,
        "offset_convention": task.offset,
        "cloud_mode": task.cloud_mode,
        "completeness_checked": result.completeness_checked,
        "max_completeness_defect": result.max_completeness_defect,
        "partial": result.partial,
    }


def simulate_spectrum(cloud: CloudConfig, coeff: InteractionCoefficients, n: int,
                      blockade_radius: float, realizations: int, bin_edges, master_seed: int,
                      workers: int = 1, chunk_size: int = CHUNK_SIZE, **task_options):
    """Simulated fixed-n spectrum; returns ``(Spectrum, CellResult)``."""
    task = CellTask(cloud, coeff, int(n), float(blockade_radius), tuple(float(e) for e in bin_edges),
                    int(master_seed), **task_options)
    result = run_cell(task, realizations, workers, chunk_size)
    return result.spectrum.to_spectrum(cell_metadata(task, result)), result
