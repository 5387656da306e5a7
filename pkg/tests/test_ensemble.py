import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from rydhop.ensemble import (CloudConfig, ExcitationSet, draw_excitation_set, min_pair_distance,
                             place_probe, sample_excitations, sample_thomas_fermi,
                             sample_unit_parabola, select_seeds)
from rydhop.errors import PlacementError, SamplerError, UsageError


def radial_cdf(u):
    # density of the scaled radius: u^2 (1 - u^2) on [0, 1], normalized
    u = np.clip(u, 0.0, 1.0)
    return (5.0 * u**3 - 3.0 * u**5) / 2.0


def test_cloud_config_validation():
    with pytest.raises(UsageError):
        CloudConfig(atom_number=0)
    with pytest.raises(UsageError):
        CloudConfig(tf_radii=(1.0, -1.0, 1.0))
    with pytest.raises(UsageError):
        CloudConfig(tf_radii=(1.0, 1.0))


def test_single_atom_inside_unit_ball(rng):
    pos = sample_thomas_fermi(CloudConfig(1, (1, 1, 1)), rng)
    assert pos.shape == (1, 3)
    assert np.sum(pos**2) < 1.0


def test_all_points_inside_ellipsoid(rng, cloud):
    pos = sample_thomas_fermi(cloud, rng)
    assert pos.shape == (90_000, 3)
    u2 = np.sum((pos / np.array(cloud.tf_radii)) ** 2, axis=1)
    assert np.all(u2 < 1.0)


def test_second_moment_matches_quadrature(rng):
    num = integrate.quad(lambda r: r**4 * (1 - r**2), 0, 1)[0]
    den = integrate.quad(lambda r: r**2 * (1 - r**2), 0, 1)[0]
    per_axis = num / den / 3.0
    assert per_axis == pytest.approx(1.0 / 7.0, rel=1e-12)
    pos = sample_thomas_fermi(CloudConfig(1_000_000, (1, 1, 1)), rng)
    assert np.allclose(np.mean(pos**2, axis=0), per_axis, atol=0.003)


def test_radial_ks_against_analytic_cdf(rng):
    u = np.linalg.norm(sample_unit_parabola(200_000, rng), axis=1)
    assert stats.kstest(u, radial_cdf).statistic < 0.01


def test_sampler_deterministic():
    a = sample_thomas_fermi(CloudConfig(1000), np.random.default_rng(7))
    b = sample_thomas_fermi(CloudConfig(1000), np.random.default_rng(7))
    assert np.array_equal(a, b)


def test_sampler_attempt_cap(rng):
    with pytest.raises(SamplerError):
        sample_unit_parabola(10, rng, max_attempts=0)


def test_select_zero_seeds(rng):
    assert select_seeds(np.zeros((3, 3)), 0, 3.4, rng) == []


def test_two_seeds_respect_blockade(rng, cloud):
    pos = sample_thomas_fermi(cloud, rng)
    for _ in range(20):
        i, j = select_seeds(pos, 2, 3.4, rng)
        assert i != j
        assert np.linalg.norm(pos[i] - pos[j]) >= 3.4


def test_pigeonhole_placement_failure(rng):
    pos = sample_thomas_fermi(CloudConfig(500, (1, 1, 1)), rng)
    with pytest.raises(PlacementError):
        select_seeds(pos, 5, 3.4, rng, max_attempts=200, max_restarts=2)
    with pytest.raises(PlacementError):
        sample_excitations(CloudConfig(500, (1, 1, 1)), 5, 3.4, 8, rng, max_attempts=200,
                           max_restarts=2)


def test_select_seeds_usage_errors(rng):
    with pytest.raises(UsageError):
        select_seeds(np.zeros((0, 3)), 1, 1.0, rng)
    with pytest.raises(UsageError):
        select_seeds(np.zeros((2, 3)), -1, 1.0, rng)


def test_probe_single_atom(rng):
    assert place_probe(np.zeros((1, 3)), [], rng) == 0


def test_probe_avoids_seeds(rng):
    pos = np.zeros((3, 3))
    assert all(place_probe(pos, [0, 1], rng) == 2 for _ in range(50))
    with pytest.raises(UsageError):
        place_probe(pos, [0, 1, 2], rng)


def test_probe_uniform_chi_squared(rng):
    pos = np.zeros((10, 3))
    draws = np.array([place_probe(pos, [], rng) for _ in range(100_000)])
    counts = np.bincount(draws, minlength=10)
    chi2, p = stats.chisquare(counts)
    assert p > 1e-4
    # 4 sigma multinomial bounds per cell
    sigma = np.sqrt(100_000 * 0.1 * 0.9)
    assert np.all(np.abs(counts - 10_000) < 4 * sigma)


def test_probe_uniform_over_free_indices(rng):
    pos = np.zeros((6, 3))
    draws = np.array([place_probe(pos, [1, 4], rng) for _ in range(20_000)])
    counts = np.bincount(draws, minlength=6)
    assert counts[1] == counts[4] == 0
    assert stats.chisquare(counts[[0, 2, 3, 5]]).pvalue > 1e-4


def test_excitation_set_layout(rng, cloud):
    pos = sample_thomas_fermi(cloud, rng)
    exc = draw_excitation_set(pos, 4, 3.4, rng)
    assert isinstance(exc, ExcitationSet)
    assert exc.n == 4
    assert exc.positions.shape == (5, 3)
    assert np.array_equal(exc.positions[-1], exc.probe_position)
    assert exc.min_seed_distance() >= 3.4


def test_lazy_batches_respect_blockade(rng, cloud):
    g = sample_excitations(cloud, 6, 3.4, 2000, rng)
    assert g.shape == (2000, 7, 3)
    s = g[:, :6]
    d = np.linalg.norm(s[:, :, None] - s[:, None], axis=-1) + np.eye(6) * 1e9
    assert d.min() >= 3.4
    u2 = np.sum((g / np.array(cloud.tf_radii)) ** 2, axis=-1)
    assert np.all(u2 < 1.0)


def test_lazy_matches_materialized_in_law(cloud):
    """Seed-pair distances agree between the lazy and the atom-list samplers."""
    rng = np.random.default_rng(3)
    lazy = sample_excitations(cloud, 2, 3.4, 3000, rng)
    d_lazy = np.linalg.norm(lazy[:, 0] - lazy[:, 1], axis=1)
    small = CloudConfig(20_000, cloud.tf_radii)
    d_mat = []
    for _ in range(30):
        pos = sample_thomas_fermi(small, rng)
        for _ in range(100):
            i, j = select_seeds(pos, 2, 3.4, rng)
            d_mat.append(np.linalg.norm(pos[i] - pos[j]))
    assert stats.ks_2samp(d_lazy, d_mat).pvalue > 1e-3


def test_lazy_probe_is_unconstrained(rng, cloud):
    g = sample_excitations(cloud, 3, 3.4, 5000, rng)
    d = np.linalg.norm(g[:, :3] - g[:, 3:4], axis=-1).min(axis=1)
    assert np.any(d < 3.4)


def test_min_pair_distance():
    pts = np.array([[0, 0, 0], [3, 0, 0], [0, 4, 0.0]])
    assert min_pair_distance(pts) == 3.0


@settings(max_examples=25, deadline=None)
@given(n=st.integers(0, 6), rb=st.floats(0.0, 3.0), seed=st.integers(0, 2**32 - 1))
def test_blockade_invariant_property(n, rb, seed):
    rng = np.random.default_rng(seed)
    pos = sample_thomas_fermi(CloudConfig(3000), rng)
    idx = select_seeds(pos, n, rb, rng)
    assert len(set(idx)) == n
    if n > 1:
        assert min_pair_distance(pos[idx]) >= rb
