import json
import math

import numpy as np
import pytest

from pulselab import reporting


def test_dumps_is_valid_json_with_full_precision():
    payload = {"a": 0.1, "b": [1, 2.5, np.float64(1 / 3)], "c": None, "d": True, "e": "x", "f": np.int64(4)}
    back = json.loads(reporting.dumps(payload))
    assert back["b"][2] == 1 / 3
    assert back["a"] == 0.1 and back["f"] == 4 and back["d"] is True


def test_non_finite_becomes_null():
    assert json.loads(reporting.dumps({"x": math.nan, "y": math.inf})) == {"x": None, "y": None}


def test_dumps_rejects_unknown_types():
    with pytest.raises(TypeError):
        reporting.dumps({"x": object()})


def test_hash_depends_on_content_and_order_of_keys():
    a = reporting.config_hash({"p": 1.0, "q": [1, 2]})
    assert a == reporting.config_hash({"p": 1.0, "q": [1, 2]})
    assert a != reporting.config_hash({"p": 1.0000000000000002, "q": [1, 2]})
    assert len(a) == 16


def test_written_files_carry_hash(tmp_path):
    j = reporting.write_json(tmp_path / "a.json", {"v": 1.5}, "abc")
    assert json.loads(j.read_text())["config_hash"] == "abc"
    c = reporting.write_csv(tmp_path / "sub" / "b.csv", ["t", "x"], [[0.0, 1.0], [0.5, 2.0]], "abc")
    lines = c.read_text().splitlines()
    assert lines[0] == "# config_hash=abc" and lines[1] == "t,x" and lines[2] == "0,1"


def test_profile_and_trajectory(tmp_path):
    from pulselab.waves import Grid, Profile, Trajectory

    grid = Grid("half", 1.0, 100)
    prof = Profile(grid, np.ones((8, 101)))
    p = reporting.write_profile(tmp_path / "p.csv", grid.x, prof.values, "h")
    assert Profile.from_csv(p, grid).values.shape == (8, 101)
    traj = Trajectory([0.0, 1.0], [prof, prof])
    paths = reporting.write_trajectory(tmp_path / "traj", traj, "h")
    assert len(paths) == 2 and "t=1" in paths[1].read_text().splitlines()[0]
