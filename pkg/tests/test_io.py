import json

import numpy as np
import pytest

from fpcavity import io as fio
from fpcavity.errors import DatasetParseError
from fpcavity.loss_budget import synthetic_thermal_dataset
from fpcavity.resonator_modes import REFERENCE_GEOMETRY
from fpcavity.ringdown import SimulationDesign


def test_packaged_geometry():
    assert fio.load_geometry() == REFERENCE_GEOMETRY


def test_packaged_design_is_replica():
    assert fio.load_design() == SimulationDesign.reference(seed=1)


def test_design_round_trip():
    d = SimulationDesign.reference(seed=9)
    assert fio.design_from_dict(json.loads(fio.dumps_json(fio.design_to_dict(d)))) == d


def test_geometry_missing_field(tmp_path):
    path = tmp_path / "g.json"
    path.write_text(json.dumps({"length_m": 0.02, "radius_y_m": 0.04, "mirror_diameter_m": 0.05,
                                "roughness_rms_m": 0.0}))
    with pytest.raises(DatasetParseError, match="radius_x_m"):
        fio.load_geometry(path)


def test_geometry_bad_type(tmp_path):
    path = tmp_path / "g.json"
    path.write_text(json.dumps({"length_m": "0.02", "radius_x_m": 0.04, "radius_y_m": 0.04,
                                "mirror_diameter_m": 0.05, "roughness_rms_m": 0.0}))
    with pytest.raises(DatasetParseError, match="length_m"):
        fio.load_geometry(path)


def test_ringdown_csv_round_trip(tmp_path):
    data = SimulationDesign.reference(seed=4).simulate()
    path = tmp_path / "r.csv"
    fio.write_ringdown_csv(data, path)
    back = fio.read_ringdown_csv(path)
    assert back == data
    assert fio.format_ringdown_csv(back) == path.read_text()


@pytest.mark.parametrize("row, line, what", [
    ("0.1,0.0,5", 3, "columns"),
    ("abc,0.0,5,10", 3, "time_s"),
    ("0.1,0.0,11,10", 3, "detected"),
    ("0.0,0.0,3,10", 3, "duplicate"),
])
def test_ringdown_csv_malformed(row, line, what):
    text = f"time_s,attenuation_db,detected,total\n0.0,0.0,5,10\n{row}\n"
    with pytest.raises(DatasetParseError, match=what) as info:
        fio.parse_ringdown_csv(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


def test_ringdown_csv_bad_header():
    with pytest.raises(DatasetParseError, match="header"):
        fio.parse_ringdown_csv("t,a,d,n\n0,0,1,2\n")


def test_thermal_csv_round_trip_with_errors():
    data = synthetic_thermal_dataset([0.8, 1.2, 2.0, 3.0], rel_noise=0.05, seed=1)
    text = fio.format_thermal_csv(data)
    assert text.splitlines()[0] == "temperature_k,tc_s,tc_err_s"
    assert fio.parse_thermal_csv(text) == data


def test_thermal_csv_round_trip_without_errors():
    data = synthetic_thermal_dataset([0.8, 1.2, 2.0, 3.0])
    text = fio.format_thermal_csv(data)
    assert text.splitlines()[0] == "temperature_k,tc_s"
    assert fio.parse_thermal_csv(text) == data


def test_thermal_csv_blank_error_column():
    data = fio.parse_thermal_csv("temperature_k,tc_s,tc_err_s\n1.0,0.1,\n2.0,0.05,0.001\n")
    assert data.points[0].tc_err_s is None
    assert data.points[1].tc_err_s == 0.001


def test_thermal_csv_malformed():
    with pytest.raises(DatasetParseError) as info:
        fio.parse_thermal_csv("temperature_k,tc_s\n1.0,0.1\n-2.0,0.1\n")
    assert info.value.line == 3


def test_dumps_json_canonical():
    text = fio.dumps_json({"b": 1.0, "a": [1, 2]})
    assert text.endswith("\n")
    assert fio.dumps_json(json.loads(text)) == text
    with pytest.raises(ValueError):
        fio.dumps_json({"x": float("nan")})


def test_samples_csv():
    text = fio.format_samples_csv(["x", "y"], [np.array([0.0, 1.5]), np.array([1.0, 0.25])])
    assert text == "x,y\n0.0,1.0\n1.5,0.25\n"
