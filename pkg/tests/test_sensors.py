import warnings

import numpy as np
import pytest

from chlsim.exceptions import InvariantError, SensorFileError
from chlsim.sensors import (
    BandDefinition,
    SensorModel,
    SensorWarning,
    SRFTable,
    builtin_catalog,
    format_sensor,
    get_sensor,
    load_sensor_file,
    parse_sensor_text,
    save_sensor_file,
    trapezoid_srf,
    uniform_band_grid,
)
from chlsim.spectral import WavelengthGrid

TWO_BANDS = """\
# minimal sensor
sensor Demo approach=gaussian
band A center=500 fwhm=10
band B center=600 fwhm=20
"""


def test_catalog_names_and_counts():
    counts = {s.name: len(s) for s in builtin_catalog()}
    assert counts == {
        "Sentinel-2": 9, "Sentinel-3": 19, "Landsat-8": 5,
        "Landsat-5": 4, "Hyperion": 54, "EnMAP": 77,
    }


def test_enmap_and_hyperion_layout():
    enmap = get_sensor("EnMAP")
    assert np.all(enmap.fwhms == 6.5)
    assert enmap.centers[0] == 423 and enmap.centers[-1] == pytest.approx(895)
    hyperion = get_sensor("hyperion")
    assert np.all(hyperion.fwhms == 10)
    assert hyperion.centers[0] == 406 and hyperion.centers[-1] == pytest.approx(895)
    assert enmap.hyperspectral and hyperion.hyperspectral


def test_sentinel3_has_red_bands():
    centers = get_sensor("Sentinel-3").centers
    assert 665.0 in centers and 708.75 in centers


def test_multispectral_flags():
    for name in ("Sentinel-2", "Sentinel-3", "Landsat-8", "Landsat-5"):
        assert not get_sensor(name).hyperspectral


def test_unknown_sensor_lists_catalog():
    with pytest.raises(KeyError, match="EnMAP"):
        get_sensor("Nope")


def test_uniform_band_grid_spacing():
    bands = uniform_band_grid(423, 895, 77, 6.5)
    step = np.diff([b.center for b in bands])
    assert np.allclose(step, (895 - 423) / 76)
    assert step[0] == pytest.approx(6.2105, abs=1e-4)
    assert bands[0].center == 423 and bands[-1].center == pytest.approx(895)
    bands = uniform_band_grid(406, 895, 54, 10)
    assert bands[1].center - bands[0].center == pytest.approx(9.2264, abs=1e-4)


def test_uniform_band_grid_endpoints_only():
    bands = uniform_band_grid(0, 1, 2, 0.5)
    assert [b.center for b in bands] == [0.0, 1.0]


def test_band_definition_invariants():
    with pytest.raises(InvariantError):
        BandDefinition("x", 500, 0)
    with pytest.raises(InvariantError):
        BandDefinition("x", float("nan"), 10)


def test_sensor_model_invariants():
    a, b = BandDefinition("a", 500, 10), BandDefinition("b", 600, 10)
    with pytest.raises(InvariantError):
        SensorModel("s", (b, a), "gaussian")
    with pytest.raises(InvariantError):
        SensorModel("s", (a, BandDefinition("a", 600, 10)), "gaussian")
    with pytest.raises(InvariantError):
        SensorModel("s", (), "gaussian")
    with pytest.raises(InvariantError):
        SensorModel("s", (a,), "boxcar")
    with pytest.raises(InvariantError):
        SensorModel("s", (BandDefinition("z", 950, 10),), "gaussian")


def test_srf_table_invariants():
    with pytest.raises(InvariantError):
        SRFTable(WavelengthGrid([500, 510]), [0.0, 0.0])
    with pytest.raises(InvariantError):
        SRFTable(WavelengthGrid([500, 510]), [1.0])


def test_trapezoid_shape():
    srf = trapezoid_srf(665, 30)
    assert srf(665) == 1.0 and srf(650) == 1.0 and srf(680) == 1.0
    assert srf(642.5) == 0.0 and srf(687.5) == 0.0
    assert srf(646.25) == pytest.approx(0.5)


def test_load_two_band_file(tmp_path):
    path = tmp_path / "demo.sensor"
    path.write_text(TWO_BANDS)
    s = load_sensor_file(path)
    assert s.name == "Demo" and len(s) == 2 and s.approach == "gaussian"


def test_unsorted_file_is_sorted_with_warning(tmp_path):
    lines = TWO_BANDS.splitlines()
    shuffled = "\n".join(lines[:2] + [lines[3], lines[2]]) + "\n"
    path = tmp_path / "shuffled.sensor"
    path.write_text(shuffled)
    with pytest.warns(SensorWarning):
        s = load_sensor_file(path)
    assert s.band_ids == ["A", "B"]


def test_zero_fwhm_in_file(tmp_path):
    path = tmp_path / "bad.sensor"
    path.write_text(TWO_BANDS.replace("fwhm=20", "fwhm=0"))
    with pytest.raises(InvariantError):
        load_sensor_file(path)


@pytest.mark.parametrize(
    "text, line",
    [
        ("band A center=500 fwhm=10\n", None),
        ("sensor X approach=gaussian\nband A center=abc fwhm=10\n", 2),
        ("sensor X approach=foo\nband A center=500 fwhm=10\n", 1),
        ("sensor X approach=srf\nband A center=500 fwhm=10\nsrf A\n495 0\n505 1\n", 3),
        ("sensor X approach=gaussian\nwidget\n", 2),
    ],
)
def test_syntax_errors_carry_line(text, line):
    with pytest.raises(SensorFileError) as info:
        parse_sensor_text(text)
    assert info.value.line == line


@pytest.mark.parametrize("name", [s.name for s in builtin_catalog()])
def test_catalog_round_trips_through_file(tmp_path, name):
    sensor = get_sensor(name)
    path = tmp_path / f"{name}.sensor"
    save_sensor_file(sensor, path)
    again = load_sensor_file(path)
    assert again == sensor
    assert format_sensor(again) == format_sensor(sensor)


def test_srf_block_is_attached():
    text = TWO_BANDS + "srf A\n490 0\n500 1\n510 0\nend\n"
    s = parse_sensor_text(text)
    assert s.bands[0].srf is not None and s.bands[1].srf is None
    assert s.bands[0].srf(495) == pytest.approx(0.5)


def test_no_warning_on_sorted_file():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        parse_sensor_text(TWO_BANDS)
