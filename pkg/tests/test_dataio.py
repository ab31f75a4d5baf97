import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from inekformer.dataio import (
    COLUMNS,
    FORMAT_TAG,
    TrajectoryFormatError,
    butterworth3_lowpass,
    load_config,
    load_trajectory,
    merge_config,
    parse_overrides,
    preprocess,
    resample,
    save_trajectory,
)
from inekformer.simgait import GaitParams, noise_preset, simulate

FIELDS = ("t", "gyro", "accel", "h_l", "h_r", "fz_l", "fz_r", "quat", "vel", "pos", "c_l", "c_r")


@pytest.fixture(scope="module")
def traj():
    return simulate(GaitParams(n_steps=1, stand_time=0.3), noise_preset("default", 2))


def write_rows(path, rows, header=COLUMNS):
    with open(path, "w") as fh:
        fh.write(FORMAT_TAG + "\n" + ",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(repr(float(v)) for v in r) + "\n")


def plain_rows(n=10):
    rows = np.zeros((n, len(COLUMNS)))
    rows[:, 0] = np.arange(n) / 150.0
    rows[:, COLUMNS.index("gt_qw")] = 1.0
    return rows


# files -----------------------------------------------------------------------

def test_round_trip_is_bit_exact(traj, tmp_path):
    save_trajectory(traj, tmp_path / "a.csv")
    back = load_trajectory(tmp_path / "a.csv")
    for name in FIELDS + ("stance",):
        assert np.array_equal(getattr(traj, name), getattr(back, name)), name


@given(st.lists(st.floats(-1e300, 1e300, allow_nan=False, allow_infinity=False), min_size=3, max_size=3))
@settings(max_examples=40)
def test_round_trip_arbitrary_doubles(tmp_path_factory, vals):
    path = tmp_path_factory.mktemp("rt") / "r.csv"
    rows = plain_rows(3)
    rows[:, COLUMNS.index("gyro_x")] = vals
    write_rows(path, rows)
    assert np.array_equal(load_trajectory(path).gyro[:, 0], vals)


def test_decreasing_time_names_row_seven(tmp_path):
    rows = plain_rows()
    rows[6, 0] = rows[5, 0] - 1e-3
    write_rows(tmp_path / "bad.csv", rows)
    with pytest.raises(TrajectoryFormatError, match="row 7") as e:
        load_trajectory(tmp_path / "bad.csv")
    assert e.value.row == 7


def test_non_unit_quaternion_rejected(tmp_path):
    rows = plain_rows()
    rows[3, COLUMNS.index("gt_qw")] = 1.001
    write_rows(tmp_path / "q.csv", rows)
    with pytest.raises(TrajectoryFormatError, match="row 4"):
        load_trajectory(tmp_path / "q.csv")


def test_malformed_header_and_tag(tmp_path):
    write_rows(tmp_path / "h.csv", plain_rows(), header=("t", "gyro_y") + COLUMNS[2:])
    with pytest.raises(TrajectoryFormatError, match="header"):
        load_trajectory(tmp_path / "h.csv")
    (tmp_path / "n.csv").write_text(",".join(COLUMNS) + "\n")
    with pytest.raises(TrajectoryFormatError, match="format tag"):
        load_trajectory(tmp_path / "n.csv")


def test_short_row_and_bad_number(tmp_path):
    p = tmp_path / "s.csv"
    write_rows(p, plain_rows(3))
    p.write_text(p.read_text() + "1.0,2.0\n")
    with pytest.raises(TrajectoryFormatError, match="row 4"):
        load_trajectory(p)
    lines = (tmp_path / "s.csv").read_text().splitlines()[:4]
    lines[3] = lines[3].replace("0.0", "abc", 1)
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(TrajectoryFormatError, match="row 2"):
        load_trajectory(p)


def test_simulator_output_revalidates(traj, tmp_path):
    save_trajectory(traj, tmp_path / "s.csv")
    load_trajectory(tmp_path / "s.csv")


# Butterworth ------------------------------------------------------------------

def test_dc_gain_is_one():
    x = np.full(2000, 3.25)
    np.testing.assert_allclose(butterworth3_lowpass(x, 15.0, 150.0), 3.25, atol=1e-9)
    np.testing.assert_allclose(butterworth3_lowpass(x, 15.0, 150.0, zero_phase=False)[500:], 3.25, atol=1e-9)


def sine_amplitude(y, f, fs):
    t = np.arange(len(y)) / fs
    a = np.column_stack([np.sin(2 * np.pi * f * t), np.cos(2 * np.pi * f * t)])
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    return float(np.hypot(*coef))


def test_minus_three_db_at_cutoff():
    fs, fc = 150.0, 15.0
    t = np.arange(30_000) / fs
    y = butterworth3_lowpass(np.sin(2 * np.pi * fc * t), fc, fs, zero_phase=False)
    gain = sine_amplitude(y[2000:], fc, fs)
    assert gain == pytest.approx(1 / np.sqrt(2), rel=0.02)


def test_stopband_attenuation_forward_backward():
    fs, fc = 1500.0, 15.0
    t = np.arange(60_000) / fs
    y = butterworth3_lowpass(np.sin(2 * np.pi * 10 * fc * t), fc, fs)
    assert 20 * np.log10(sine_amplitude(y[5000:-5000], 10 * fc, fs)) <= -60.0


def test_cutoff_range_checked():
    for fc in (0.0, 75.0, 100.0):
        with pytest.raises(ValueError):
            butterworth3_lowpass(np.zeros(50), fc, 150.0)


def test_smoothing_leaves_ground_truth(traj):
    out = preprocess(traj, 15.0)
    assert np.array_equal(out.pos, traj.pos) and np.array_equal(out.quat, traj.quat)
    assert not np.array_equal(out.gyro, traj.gyro)


# resampling -------------------------------------------------------------------

def test_resample_same_rate_is_identity(traj):
    out = resample(traj, 150.0)
    assert len(out) == len(traj)
    for name in FIELDS:
        np.testing.assert_allclose(getattr(out, name), getattr(traj, name), atol=1e-12, rtol=0)
    assert np.array_equal(out.stance, traj.stance)


def test_resample_linear_ramp_exact(traj):
    ramp = traj.copy(fz_l=3.0 * traj.t - 1.0)
    out = resample(ramp, 75.0)
    np.testing.assert_allclose(out.fz_l, 3.0 * out.t - 1.0, atol=1e-12)


def test_resample_300_to_150_grid_alignment():
    src = simulate(GaitParams(n_steps=1, stand_time=0.3, dt=1 / 300), noise_preset("default", 1))
    out = resample(src, 150.0)
    for name in FIELDS:
        np.testing.assert_allclose(getattr(out, name), getattr(src, name)[::2][: len(out)], atol=1e-12, rtol=0)


def test_resample_renormalizes_quaternions(traj):
    out = resample(traj, 47.0)
    np.testing.assert_allclose(np.linalg.norm(out.quat, axis=1), 1.0, atol=1e-12)
    assert np.all(np.diff(out.t) > 0)


def test_resample_rejects_bad_rate(traj):
    with pytest.raises(ValueError):
        resample(traj, 0.0)


# config -----------------------------------------------------------------------

def test_config_and_overrides(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('[train]\nlr_max = 1e-3\nmode = "tf"\n[model]\nd_model = 32\n')
    cfg = load_config(p)
    over = parse_overrides(["train.lr_max=5e-4", "model.activation=relu", "noise.gyro=0.1"])
    merged = merge_config(cfg, over)
    assert merged == {"train": {"lr_max": 5e-4, "mode": "tf"}, "model": {"d_model": 32, "activation": "relu"},
                      "noise": {"gyro": 0.1}}
    with pytest.raises(ValueError):
        parse_overrides(["novalue"])
