import json
import os

import numpy as np
import pytest

import phasectl as pc
from phasectl import fields
from phasectl.errors import ShapeMismatch, ValidationError


def test_as_field_broadcast_and_shape():
    g = pc.make_grid(1, 5, 1.0)
    np.testing.assert_array_equal(fields.as_field(g, 0.3), np.full(5, 0.3))
    v = np.arange(5.0)
    assert fields.as_field(g, v) is not v  # defensive copy
    with pytest.raises(ShapeMismatch):
        fields.as_field(g, np.zeros(4))


def test_as_trajectory_broadcast():
    g = pc.make_grid(1, 4, 1.0)
    tg = pc.make_time_grid(1.0, 3)
    t = fields.as_trajectory(tg, g, 2.0)
    assert t.shape == (4, 4) and np.all(t == 2.0)
    field = np.array([1.0, 2.0, 3.0, 4.0])
    t = fields.as_trajectory(tg, g, field)
    assert np.all(t == field)
    full = np.random.default_rng(0).random((4, 4))
    np.testing.assert_array_equal(fields.as_trajectory(tg, g, full), full)
    with pytest.raises(ShapeMismatch):
        fields.as_trajectory(tg, g, np.zeros((3, 4)))


def test_field_csv_roundtrip_bit_exact(tmp_path):
    """Seventeen significant digits reproduce doubles exactly."""
    g = pc.make_grid(1, 32, 1.0)
    v = np.random.default_rng(7).standard_normal(32) * 1e3
    path = str(tmp_path / "f.csv")
    fields.write_field_csv(path, g, v)
    back = fields.read_field_csv(path, g)
    assert np.array_equal(back, v)


def test_field_csv_roundtrip_2d(tmp_path):
    g = pc.make_grid(2, (4, 3), (1.0, 2.0))
    v = np.random.default_rng(8).random(12)
    path = str(tmp_path / "f2.csv")
    fields.write_field_csv(path, g, v)
    assert np.array_equal(fields.read_field_csv(path, g), v)
    header = open(path).readline().strip()
    assert header == "x,y,value"


def test_field_csv_coordinate_check(tmp_path):
    g = pc.make_grid(1, 4, 1.0)
    path = str(tmp_path / "f.csv")
    fields.write_field_csv(path, g, np.zeros(4))
    lines = open(path).read().splitlines()
    parts = lines[1].split(",")
    parts[0] = "0.9"  # not a cell center
    lines[1] = ",".join(parts)
    open(path, "w").write("\n".join(lines) + "\n")
    with pytest.raises(ShapeMismatch):
        fields.read_field_csv(path, g)


def test_snapshot_roundtrip(tmp_path):
    g = pc.make_grid(1, 6, 1.0)
    tg = pc.make_time_grid(0.5, 5)
    traj = np.random.default_rng(1).random((6, 6))
    out = str(tmp_path / "snaps")
    written = fields.write_snapshots(out, "rho", tg, g, traj, stride=1)
    assert len(written) == 6
    back = fields.read_snapshot_dir(out, "rho", tg, g)
    assert np.array_equal(back, traj)


def test_snapshot_stride_keeps_final(tmp_path):
    tg = pc.make_time_grid(1.0, 7)
    levels = fields.snapshot_levels(tg, 3)
    assert levels == [0, 3, 6, 7]
    g = pc.make_grid(1, 3, 1.0)
    out = str(tmp_path / "s")
    fields.write_snapshots(out, "mu", tg, g, np.zeros((8, 3)), stride=3)
    names = sorted(os.listdir(out))
    assert names == [fields.snapshot_name("mu", k) for k in levels]


def test_snapshot_dir_requires_all_levels(tmp_path):
    g = pc.make_grid(1, 3, 1.0)
    tg = pc.make_time_grid(1.0, 4)
    out = str(tmp_path / "s")
    fields.write_snapshots(out, "u", tg, g, np.zeros((5, 3)), stride=1)
    os.remove(os.path.join(out, fields.snapshot_name("u", 2)))
    with pytest.raises(ShapeMismatch):
        fields.read_snapshot_dir(out, "u", tg, g)


def test_atomic_write_leaves_no_temp(tmp_path):
    path = tmp_path / "out.json"
    fields.write_json(str(path), {"a": 1})
    assert json.loads(path.read_text()) == {"a": 1}
    assert os.listdir(tmp_path) == ["out.json"]
