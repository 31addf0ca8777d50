import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chlsim.exceptions import InvariantError, UndefinedRatioError
from chlsim.spectral import SpectralDataset
from chlsim.synthetic import (
    ABSORPTION_CENTER,
    ABSORPTION_WIDTH,
    PEAK_CENTER,
    PEAK_WIDTH,
    SynthConfig,
    band_ratio_oracle,
    baseline,
    generate,
    rank_correlation,
    reflectance_model,
)


def closed_form(wl, c):
    # written out independently of reflectance_model
    base = np.interp(wl, [400, 560, 700, 900], [0.02, 0.05, 0.03, 0.01])
    g1 = np.exp(-((wl - 675) ** 2) / (2 * 15**2))
    g2 = np.exp(-((wl - 705) ** 2) / (2 * 12**2))
    return base * np.exp(-0.015 * c * g1) + 4e-4 * c * g2


def test_zero_chl_gives_baseline():
    d = generate(SynthConfig(n_samples=3, chl_range=(0, 0), noise_sd=0))
    wl = d.shared_grid.wavelengths
    assert np.array_equal(d.reflectance, np.tile(baseline(wl), (3, 1)))


def test_noise_free_matches_closed_form():
    d = generate(SynthConfig(n_samples=20, noise_sd=0, seed=3))
    wl = d.shared_grid.wavelengths
    for s in d.samples:
        assert np.max(np.abs(s.spectrum.values - closed_form(wl, s.chl_a))) < 1e-12


def test_monotone_in_chl():
    c = np.linspace(0, 100, 51)
    r675 = reflectance_model([675.0], c)[:, 0]
    r705 = reflectance_model([705.0], c)[:, 0] - baseline([705.0])[0]
    assert np.all(np.diff(r675) < 0) and np.all(np.diff(r705) > 0)


def test_signal_is_spectrally_confined():
    wl = np.arange(400.0, 900.0, 0.5)
    far = (np.abs(wl - ABSORPTION_CENTER) > 6 * ABSORPTION_WIDTH) & (np.abs(wl - PEAK_CENTER) > 6 * PEAK_WIDTH)
    r = reflectance_model(wl, np.array([0.0, 50.0, 100.0]))
    assert np.max(np.abs(r[:, far] - r[0, far])) < 1e-9


def test_same_seed_same_data():
    a = generate(SynthConfig(n_samples=30, seed=5))
    b = generate(SynthConfig(n_samples=30, seed=5))
    c = generate(SynthConfig(n_samples=30, seed=6))
    assert np.array_equal(a.reflectance, b.reflectance) and np.array_equal(a.chl_a, b.chl_a)
    assert not np.array_equal(a.chl_a, c.chl_a)


def test_per_sample_values_independent_of_n():
    small = generate(SynthConfig(n_samples=10, seed=8))
    big = generate(SynthConfig(n_samples=25, seed=8))
    assert np.array_equal(small.reflectance, big.reflectance[:10])
    assert np.array_equal(small.chl_a, big.chl_a[:10])


def test_chl_range_respected():
    d = generate(SynthConfig(n_samples=200, chl_range=(5, 20), seed=1))
    assert d.chl_a.min() >= 5 and d.chl_a.max() <= 20


def test_config_validation():
    with pytest.raises(InvariantError):
        SynthConfig(chl_range=(-1, 5))
    with pytest.raises(InvariantError):
        SynthConfig(chl_range=(10, 5))
    with pytest.raises(InvariantError):
        SynthConfig(noise_sd=-0.1)


def test_ratio_oracle_monotone_and_rank():
    d = generate(SynthConfig(n_samples=100, noise_sd=0, seed=2))
    ratio = band_ratio_oracle(d)
    order = np.argsort(d.chl_a)
    assert np.all(np.diff(ratio[order]) > 0)
    assert rank_correlation(ratio, d.chl_a) == pytest.approx(1.0, abs=1e-12)


def test_ratio_of_constant_spectrum():
    wl = np.arange(400.0, 901.0)
    d = SpectralDataset.from_arrays(wl, np.full((2, wl.size), 0.3), [1.0, 2.0])
    assert np.array_equal(band_ratio_oracle(d), [1.0, 1.0])


def test_ratio_zero_denominator():
    wl = np.arange(400.0, 901.0)
    d = SpectralDataset.from_arrays(wl, np.zeros((1, wl.size)), [1.0])
    with pytest.raises(UndefinedRatioError):
        band_ratio_oracle(d)


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 200), st.floats(0, 200))
def test_model_is_pointwise_monotone_property(c1, c2):
    lo, hi = sorted((c1, c2))
    if hi - lo < 1e-6:
        return
    r = reflectance_model([675.0, 705.0], np.array([lo, hi]))
    assert r[1, 0] < r[0, 0]
    assert r[1, 1] - r[0, 1] > -1e-15
