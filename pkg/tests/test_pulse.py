from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np
import pytest

from circulon import pulse, units
from circulon.error import AliasingWarning, ConfigError, GridMismatchError

if TYPE_CHECKING:
    from pathlib import Path


@pytest.fixture
def flat_top() -> pulse.Waveform:
    return pulse.make_flat_top(0.3, 1.0, 200.0, 50.0, 0.05)


def test_waveform_checks() -> None:
    with pytest.raises(GridMismatchError):
        pulse.Waveform(0.1, np.zeros(4), np.zeros(5))
    with pytest.raises(GridMismatchError):
        pulse.Waveform(0.0, np.zeros(4), np.zeros(4))
    with pytest.raises(GridMismatchError):
        pulse.Waveform(0.1, np.zeros(1), np.zeros(1))
    with pytest.raises(GridMismatchError):
        pulse.Waveform(0.1, np.array([0.0, np.nan]), np.zeros(2))


def test_waveform_complex_and_reverse() -> None:
    values = np.array([1.0 + 2.0j, -0.5j, 3.0])
    w = pulse.Waveform.from_complex(0.5, values)
    assert np.array_equal(w.complex_field, values)
    assert w.t_stop == 1.0
    assert np.array_equal(w.reversed().ex, [3.0, 0.0, 1.0])


def test_flat_top_shape(flat_top: pulse.Waveform) -> None:
    assert flat_top.t_stop == pytest.approx(200.0)
    assert flat_top.magnitude[0] == pytest.approx(0.0, abs=1e-15)
    assert flat_top.magnitude[-1] == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(flat_top.magnitude[1100:2900], 0.3)
    assert pulse.peak_amplitude(flat_top) == pytest.approx(0.3)


def test_flat_top_grid_ends_at_duration() -> None:
    w = pulse.make_flat_top(1.0, 1.0, 10.0, 0.0, 0.3)
    assert w.t_stop == pytest.approx(10.0)
    assert w.dt == pytest.approx(10.0 / 33)
    assert np.allclose(w.magnitude, 1.0)


def test_flat_top_polarizations() -> None:
    minus = pulse.make_flat_top(1.0, 2.0, 5.0, 0.0, 0.01, "sigma-")
    assert np.allclose(minus.ey, -np.sin(2.0 * minus.times))
    lin = pulse.make_flat_top(1.0, 2.0, 5.0, 0.0, 0.01, "x")
    assert np.array_equal(lin.ey, np.zeros(lin.size))
    with pytest.raises(ConfigError):
        pulse.make_flat_top(1.0, 2.0, 5.0, 0.0, 0.01, "sigma0")
    with pytest.raises(ValueError):
        pulse.make_flat_top(1.0, 2.0, 5.0, 3.0, 0.01)


def test_two_step_energy() -> None:
    args = (1.0, 2.0, 20.0, 10.0)
    w = pulse.make_two_step(*args, 1.0, 100.0, 10.0, 0.01)
    expected = pulse.two_step_energy(*args, 100.0, 10.0)
    assert pulse.pulse_energy(w) == pytest.approx(expected, rel=1e-4)
    assert pulse.peak_amplitude(w) == pytest.approx(2.0)


def test_two_step_errors() -> None:
    with pytest.raises(ValueError):
        pulse.make_two_step(2.0, 1.0, 20.0, 10.0, 1.0, 100.0, 10.0, 0.01)
    with pytest.raises(ValueError):
        pulse.two_step_energy(1.0, 2.0, 5.0, 10.0, 100.0, 10.0)


def test_demodulate_flat_top(flat_top: pulse.Waveform) -> None:
    env = pulse.demodulate(flat_top, 1.0)
    assert env.omega == 1.0
    re_s, im_s = env.quadratures
    shape = pulse.shape_function(flat_top.times, 200.0, 50.0)
    assert np.max(np.abs(im_s)) < 1e-10
    assert np.allclose(re_s, 0.3 * shape, atol=1e-3)


def test_remodulate(flat_top: pulse.Waveform) -> None:
    back = pulse.remodulate(pulse.demodulate(flat_top, 1.0))
    assert back.dt == flat_top.dt
    assert np.allclose(back.ex, flat_top.ex, atol=1e-3)
    assert np.allclose(back.ey, flat_top.ey, atol=1e-3)


def test_demodulate_warns_on_fast_envelope() -> None:
    size, dt = 2000, 0.05
    omega = 2 * np.pi * 100 / (size * dt)
    times = np.arange(size) * dt
    w = pulse.Waveform.from_complex(dt, np.exp(1.7j * omega * times))
    with pytest.warns(AliasingWarning):
        pulse.demodulate(w, omega)
    with pytest.raises(ValueError):
        pulse.demodulate(w, 0.0)


def test_coarse_grain_identity(flat_top: pulse.Waveform) -> None:
    assert pulse.coarse_grain(flat_top, flat_top.dt) is flat_top
    with pytest.raises(ValueError):
        pulse.coarse_grain(flat_top, flat_top.dt / 2)


def test_coarse_grain_modes() -> None:
    w = pulse.Waveform(1.0, np.arange(10.0), np.zeros(10))
    held = pulse.coarse_grain(w, 4.0, "hold")
    assert np.array_equal(held.ex, [0, 0, 0, 0, 4, 4, 4, 4, 8, 8])
    lin = pulse.coarse_grain(w, 4.0)
    assert np.allclose(lin.ex, [0, 1, 2, 3, 4, 5, 6, 7, 8, 8])
    with pytest.raises(ConfigError):
        pulse.coarse_grain(w, 4.0, "cubic")


def test_coarse_grain_envelope() -> None:
    env = pulse.Envelope(1.0, np.arange(10.0) * (1 + 1j), 0.5)
    held = pulse.coarse_grain(env, 4.0, "hold")
    assert isinstance(held, pulse.Envelope)
    assert held.omega == 0.5
    assert held.samples[5] == 4 + 4j


def test_clip_amplitude() -> None:
    w = pulse.make_flat_top(50.0, 1.0, 20.0, 5.0, 0.01)
    clipped = pulse.clip_amplitude(w, 46.0)
    assert pulse.peak_amplitude(clipped) == pytest.approx(46.0)
    low = w.magnitude < 46.0
    assert np.array_equal(clipped.ex[low], w.ex[low])
    over = ~low
    assert np.allclose(
        np.arctan2(clipped.ey[over], clipped.ex[over]),
        np.arctan2(w.ey[over], w.ex[over]),
    )
    assert pulse.clip_amplitude(w, 60.0) is w
    with pytest.raises(ValueError):
        pulse.clip_amplitude(w, 0.0)


def test_filter_spectrum() -> None:
    size, dt = 1000, 0.1
    base = 2 * np.pi / (size * dt)
    times = np.arange(size) * dt
    slow = np.exp(1j * 100 * base * times)
    fast = 0.5 * np.exp(1j * 300 * base * times)
    mirror = 0.2 * np.exp(-1j * 150 * base * times)
    w = pulse.Waveform.from_complex(dt, slow + fast + mirror)
    out = pulse.filter_spectrum(w, 200 * base)
    assert np.allclose(out.complex_field, slow + mirror, atol=1e-12)
    again = pulse.filter_spectrum(out, 200 * base)
    assert np.allclose(again.complex_field, out.complex_field, atol=1e-12)
    with pytest.raises(ValueError):
        pulse.filter_spectrum(w, -1.0)


def test_bandwidth(flat_top: pulse.Waveform) -> None:
    widths = pulse.bandwidth(flat_top, 1.0)
    assert widths["sigma-"] == 0.0
    assert 0.0 < widths["sigma+"] < 0.5


def test_pi_pulse() -> None:
    assert pulse.rabi_frequency(51, 2e-8) == pytest.approx(3.06e-6)
    assert pulse.pi_pulse_duration(51, 2e-8) * pulse.rabi_frequency(
        51, 2e-8
    ) == pytest.approx(math.pi)


def test_scan_duration() -> None:
    durations = [2.0, 4.0, 3.0]
    scan = pulse.scan_duration(
        lambda t_stop: pulse.make_flat_top(1.0, 1.0, t_stop, 0.0, 0.1),
        durations,
        pulse.pulse_energy,
    )
    assert [t for t, _ in scan] == durations
    assert [s for _, s in scan] == pytest.approx(durations)
    assert pulse.best_duration(scan) == (4.0, pytest.approx(4.0))


def test_waveform_file(flat_top: pulse.Waveform, tmp_path: Path) -> None:
    path = tmp_path / "pulse.txt"
    pulse.write_waveform(path, flat_top, meta=dict(n=51))
    back = pulse.read_waveform(path)
    assert back.dt == flat_top.dt
    assert np.array_equal(back.ex, flat_top.ex)
    assert np.array_equal(back.ey, flat_top.ey)


def test_waveform_file_lab_units(tmp_path: Path) -> None:
    w = pulse.make_flat_top(
        units.mv_per_cm_to_au(46.0),
        units.mhz_to_au(230.0),
        units.ns_to_au(100.0),
        units.ns_to_au(10.0),
        units.ns_to_au(0.1),
    )
    path = tmp_path / "pulse.txt"
    pulse.write_waveform(path, w, lab_units=True)
    back = pulse.read_waveform(path)
    assert back.dt == pytest.approx(w.dt, rel=1e-12)
    assert np.allclose(back.ex, w.ex, rtol=1e-12, atol=1e-24)


def test_envelope_file(tmp_path: Path) -> None:
    env = pulse.Envelope(0.2, np.linspace(0, 1, 7) * (1 - 0.5j), 0.75)
    path = tmp_path / "envelope.txt"
    pulse.write_envelope(path, env)
    back = pulse.read_envelope(path)
    assert back.omega == 0.75
    assert np.array_equal(back.samples, env.samples)
    pulse.write_envelope(path, env, lab_units=True)
    assert pulse.read_envelope(path).omega == pytest.approx(0.75)


def test_read_wrong_kind(flat_top: pulse.Waveform, tmp_path: Path) -> None:
    path = tmp_path / "pulse.txt"
    pulse.write_waveform(path, flat_top)
    with pytest.raises(ConfigError):
        pulse.read_envelope(path)
    with pytest.raises(ConfigError):
        pulse.read_waveform(tmp_path / "missing.txt")
