import numpy as np
import pytest
from scipy import stats

from conftest import random_state
from fvdsim.errors import ArgumentError, DegenerateReferenceError, DimensionError
from fvdsim.model import BitConfig, HamiltonianSpec, landscape, neel_bits, neel_prime_bits
from fvdsim.observables import (
    SpamModel,
    TimeSeries,
    as_configs,
    bubble_counts,
    bubble_density,
    filling_factor,
    filling_factor_by_counting,
    landscape_projection,
    m_afm,
    read_csv,
    rescale,
    rescale_series,
    sample_bitstrings,
    sampled_m_afm,
    site_sz,
    sx_total,
)
from fvdsim.state import StateVector


def basis(n, bits):
    return StateVector.basis(n, bits)


def flipped_from_neel(n, sites):
    return neel_bits(n) ^ sum(1 << s for s in sites)


def test_staggered_order_on_reference_states():
    assert m_afm(basis(8, neel_bits(8))) == pytest.approx(1.0)
    assert m_afm(basis(8, neel_prime_bits(8))) == pytest.approx(-1.0)
    assert m_afm(basis(8, 0)) == pytest.approx(0.0)
    assert m_afm(basis(8, flipped_from_neel(8, [3]))) == pytest.approx(0.75)


def test_density_matrix_and_vector_agree():
    psi = random_state(6, seed=4)
    rho = np.outer(psi.amplitudes, psi.amplitudes.conj())
    assert m_afm(rho) == pytest.approx(m_afm(psi))
    assert sx_total(rho) == pytest.approx(sx_total(psi))
    assert np.allclose(site_sz(rho), site_sz(psi))
    with pytest.raises(DimensionError):
        m_afm(np.eye(3))


def test_site_magnetization_and_transverse_field():
    sz = site_sz(basis(4, 0b0101))
    assert np.array_equal(sz, [1, -1, 1, -1])
    plus = StateVector(4, np.full(16, 0.25))
    assert sx_total(plus) == pytest.approx(4.0)


def test_rescaling():
    assert np.allclose(rescale([0.8, 0.4, 0.0, -0.8]), [1.0, 0.75, 0.5, 0.0])
    assert np.allclose(rescale([0.5, 0.5], reference=1.0), [0.75, 0.75])
    out = rescale_series([(0.0, 0.9), (1.0, -0.9)])
    assert out.shape == (2, 2) and np.allclose(out[:, 1], [1.0, 0.0])
    with pytest.raises(DegenerateReferenceError):
        rescale([0.0, 0.1])
    with pytest.raises(ArgumentError):
        rescale([])


def test_bubbles_on_reference_states():
    n = 10
    fv = basis(n, neel_bits(n))
    tv = basis(n, neel_prime_bits(n))
    for length in range(1, n):
        assert bubble_density(fv, length) == 0.0
        assert bubble_density(tv, length) == 0.0
    assert filling_factor(fv) == 0.0 and filling_factor(tv) == 0.0


def test_single_flip_and_pair():
    n = 12
    one = basis(n, flipped_from_neel(n, [5]))
    assert bubble_density(one, 1) == pytest.approx(1 / n)
    assert bubble_density(one, 2) == 0.0
    assert filling_factor(one) == pytest.approx(2 / n)
    pair = basis(n, flipped_from_neel(n, [4, 5]))
    assert bubble_density(pair, 2) == pytest.approx(1 / n)
    assert bubble_density(pair, 1) == 0.0
    assert filling_factor(pair) == pytest.approx(3 / n)


def test_bubble_wrapping_around_the_ring():
    n = 8
    wrap = basis(n, flipped_from_neel(n, [7, 0, 1]))
    assert bubble_density(wrap, 3) == pytest.approx(1 / n)
    assert bubble_density(wrap, 1) == 0.0


def run_lengths(flips):
    """Exact-length runs of True on a ring, by walking the ring once."""
    n = len(flips)
    if all(flips):
        return []
    start = flips.index(False)
    runs, current = [], 0
    for k in range(1, n + 1):
        if flips[(start + k) % n]:
            current += 1
        elif current:
            runs.append(current)
            current = 0
    return runs


@pytest.mark.parametrize("n", [4, 6, 8, 10])
def test_bubble_counts_match_enumeration(n):
    counts = bubble_counts(n)
    ref = neel_bits(n)
    for bits in range(1 << n):
        flips = [bool(((bits ^ ref) >> s) & 1) for s in range(n)]
        runs = run_lengths(flips)
        expected = np.bincount(runs, minlength=n)[1:n] if runs else np.zeros(n - 1)
        assert np.array_equal(counts[:, bits], expected), (bits, runs)
        assert filling_factor(basis(n, bits)) == pytest.approx(filling_factor_by_counting(n, bits))
        assert filling_factor_by_counting(n, bits) == pytest.approx((sum(flips) + len(runs)) / n if runs else 0.0)


def test_long_bubbles_by_hand_at_n10():
    n = 10
    four = basis(n, flipped_from_neel(n, [2, 3, 4, 5]))
    assert bubble_density(four, 4) == pytest.approx(0.1)
    mixed = basis(n, flipped_from_neel(n, [0, 1, 2, 3, 4, 6]))
    assert bubble_density(mixed, 5) == pytest.approx(0.1)
    assert bubble_density(mixed, 1) == pytest.approx(0.1)
    nine = basis(n, flipped_from_neel(n, range(1, 10)))
    assert bubble_density(nine, 9) == pytest.approx(0.1)
    assert filling_factor(nine) == pytest.approx(1.0)


def test_bubble_density_is_rotation_invariant_by_two():
    n = 10
    psi = random_state(n, seed=11)
    idx = np.arange(1 << n)
    mask = (1 << n) - 1
    rotated = ((idx << 2) | (idx >> (n - 2))) & mask
    amps = np.zeros_like(psi.amplitudes)
    amps[rotated] = psi.amplitudes
    moved = StateVector(n, amps)
    for length in (1, 2, 3, 4):
        assert bubble_density(moved, length) == pytest.approx(bubble_density(psi, length))


def test_bubble_length_range():
    with pytest.raises(ArgumentError):
        bubble_density(basis(6, 0), 0)
    with pytest.raises(ArgumentError):
        bubble_density(basis(6, 0), 6)


def test_sampling_matches_born_rule():
    n = 4
    psi = random_state(n, seed=21)
    words = sample_bitstrings(psi, 20000, rng_seed=5)
    observed = np.bincount(words, minlength=16)
    expected = psi.probabilities() * words.size
    _, p = stats.chisquare(observed, expected)
    assert p > 1e-3
    configs = as_configs(words[:3], n)
    assert all(isinstance(c, BitConfig) for c in configs)


def test_sampling_is_seeded():
    psi = random_state(6, seed=1)
    a = sample_bitstrings(psi, 100, SpamModel(), rng_seed=3)
    b = sample_bitstrings(psi, 100, SpamModel(), rng_seed=3)
    assert np.array_equal(a, b)


def test_spam_flip_rates_on_basis_states():
    shots = 100_000
    spam = SpamModel(0.04, 0.015)
    up = sample_bitstrings(basis(4, 0b1111), shots, spam, rng_seed=1)
    down = sample_bitstrings(basis(4, 0), shots, spam, rng_seed=2)
    read_down = 1 - ((up[:, None] >> np.arange(4)) & 1).mean()
    read_up = ((down[:, None] >> np.arange(4)) & 1).mean()
    assert read_down == pytest.approx(0.04, abs=5 * np.sqrt(0.04 * 0.96 / (4 * shots)))
    assert read_up == pytest.approx(0.015, abs=5 * np.sqrt(0.015 * 0.985 / (4 * shots)))


def test_spam_contrast_on_neel():
    spam = SpamModel()
    assert spam.contrast == pytest.approx(0.945)
    assert spam.m_afm_offset(8) == 0.0
    words = sample_bitstrings(basis(8, neel_bits(8)), 50_000, spam, rng_seed=4)
    mean, err = sampled_m_afm(words, 8)
    assert abs(mean - spam.expected_m_afm(1.0, 8)) < 5 * err
    with pytest.raises(ArgumentError):
        SpamModel(p1=0.6)


def test_landscape_projection_sums_to_one():
    spec = HamiltonianSpec(8, 1.0, 10.0, 5.0, 10.0, "nearest_neighbor")
    psi = random_state(8, seed=3)
    proj = landscape_projection(psi, landscape(spec))
    assert sum(proj.values()) == pytest.approx(1.0)
    fv = landscape_projection(basis(8, neel_bits(8)), landscape(spec))
    assert fv[(0, 0.0)] == 1.0
    pair = landscape_projection(basis(8, flipped_from_neel(8, [2, 3])), landscape(spec))
    assert pair[(2, 0.0)] == 1.0


def test_time_series_csv_round_trip(tmp_path):
    times = np.array([0.0, 0.5, 1.0])
    values = {"m_afm": np.array([0.9, 0.3, -0.1]), "sigma_1": np.array([0.0, 0.1, 0.2]),
              "rho": np.array([0.0, 0.2, 0.4]), "sx_total": np.zeros(3)}
    stderr = {k: np.full(3, 0.01) for k in values}
    series = TimeSeries(times, values, stderr, trajectories=10)
    assert np.allclose(series.m_afm_res, [1.0, 2 / 3, 4 / 9])
    path = tmp_path / "ts.csv"
    series.write_csv(path)
    data = read_csv(path)
    assert np.array_equal(data["t_us"], times)
    assert np.array_equal(data["m_afm"], values["m_afm"])
    assert np.allclose(data["m_afm_res"], series.m_afm_res, rtol=1e-15)
    assert "m_afm_stderr" in data and "m_afm_res_stderr" in data
    sample = series.sample(1)
    assert sample.time == 0.5 and sample.sigma_l[1] == 0.1
