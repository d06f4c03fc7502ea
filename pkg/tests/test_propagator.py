from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np
import pytest
from scipy.linalg import expm

from circulon import propagator, pulse, tables
from circulon.error import GridMismatchError, PropagationError

if TYPE_CHECKING:
    from pathlib import Path

    from circulon.stark import BasisModel


def random_state(dim: int, seed: int = 3) -> np.ndarray:
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


def test_interval_fields() -> None:
    w = pulse.Waveform(0.5, np.array([0.0, 2.0, 4.0]), np.array([1.0, 1.0, -1.0]))
    ex, ey = propagator.interval_fields(w)
    assert np.array_equal(ex, [1.0, 3.0])
    assert np.array_equal(ey, [1.0, 0.0])


def test_chebychev_coefficients() -> None:
    coefs = propagator.chebychev_coefficients(3.0)
    assert coefs[0] == pytest.approx(-0.2600519549)
    assert np.abs(coefs[-1]) < 1e-13
    back = propagator.chebychev_coefficients(3.0, backward=True)
    assert np.allclose(back, coefs.conj())


def test_chebychev_order_limit(random_model: BasisModel) -> None:
    with pytest.raises(PropagationError):
        propagator.chebychev_coefficients(10 * propagator.MAX_RADIUS_DT)
    with pytest.raises(PropagationError):
        propagator.chebychev_coefficients(math.nan)
    psi0 = random_state(random_model.dim)
    strong = np.full(3, 1e7)
    with pytest.raises(PropagationError):
        propagator.evolve(random_model, psi0, strong, strong, 0.7)


def test_single_step_matches_expm(random_model: BasisModel) -> None:
    psi0 = random_state(random_model.dim)
    ex, ey, dt = 0.4, -0.25, 0.7
    psi = propagator.evolve(random_model, psi0, np.array([ex]), np.array([ey]), dt)
    exact = expm(-1j * random_model.hamiltonian(ex, ey) * dt) @ psi0
    assert np.allclose(psi, exact, atol=1e-12)


def test_norm_conservation(random_model: BasisModel) -> None:
    rng = np.random.default_rng(7)
    ex = rng.uniform(-0.5, 0.5, 2000)
    ey = rng.uniform(-0.5, 0.5, 2000)
    psi = propagator.evolve(random_model, random_state(random_model.dim), ex, ey, 0.05)
    assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-10)


def test_backward_inverts_forward(random_model: BasisModel) -> None:
    rng = np.random.default_rng(8)
    ex = rng.uniform(-0.5, 0.5, 300)
    ey = rng.uniform(-0.5, 0.5, 300)
    psi0 = random_state(random_model.dim)
    psi = propagator.evolve(random_model, psi0, ex, ey, 0.05)
    back = propagator.evolve(random_model, psi, ex, ey, 0.05, backward=True)
    assert np.allclose(back, psi0, atol=1e-10)


def test_propagate_states(random_model: BasisModel) -> None:
    w = pulse.make_flat_top(0.3, 1.2, 10.0, 2.0, 0.05)
    psi0 = random_state(random_model.dim)
    states = propagator.propagate_states(random_model, psi0, w)
    assert states.shape == (w.size, random_model.dim)
    assert np.array_equal(states[0], psi0)
    ex, ey = propagator.interval_fields(w)
    final = propagator.evolve(random_model, psi0, ex, ey, w.dt)
    assert np.allclose(states[-1], final, atol=1e-12)
    back = propagator.propagate_states(random_model, final, w, backward=True)
    assert np.array_equal(back[-1], final)
    assert np.allclose(back[0], psi0, atol=1e-10)


def test_input_checks(random_model: BasisModel) -> None:
    with pytest.raises(GridMismatchError):
        propagator.evolve(
            random_model, np.ones(3, complex), np.zeros(4), np.zeros(4), 0.1
        )
    with pytest.raises(GridMismatchError):
        propagator.evolve(
            random_model, random_model.state(0), np.zeros(4), np.zeros(5), 0.1
        )
    with pytest.raises(GridMismatchError):
        propagator.fidelity(np.ones(2), np.ones(3))


def test_fidelity() -> None:
    psi = np.array([1.0, 1.0j]) / math.sqrt(2)
    assert propagator.fidelity(psi, psi) == pytest.approx(1.0)
    assert propagator.fidelity(psi, np.array([1.0, 0.0])) == pytest.approx(0.5)


def test_rabi_oscillation(two_level: BasisModel) -> None:
    w = pulse.make_flat_top(0.5, 1.0, math.pi, 0.0, 1e-3)
    psi, record = propagator.propagate(
        two_level, two_level.state(0), w, record_every=500
    )
    expected = np.sin(0.5 * record.times) ** 2
    assert np.allclose(record.populations[:, 1], expected, atol=2e-6)
    assert propagator.fidelity(psi, two_level.state(1)) == pytest.approx(1.0, abs=1e-8)
    assert record.times[-1] == pytest.approx(math.pi)
    assert np.allclose(record.leakage, 0.0, atol=1e-12)


def test_spin_rotation_lab_frame(spin_five: BasisModel) -> None:
    amp = 0.2
    w = pulse.make_flat_top(amp, 1.0, math.pi / amp, 0.0, 1e-3)
    psi, record = propagator.propagate(
        spin_five, spin_five.state(0), w, record_every=500
    )
    assert np.allclose(record.bloch[:, 2], -np.cos(amp * record.times), atol=1e-5)
    assert np.allclose(record.scs_overlap, 1.0, atol=1e-6)
    assert record.mean_m[0] == 0.0
    assert record.mean_m[-1] == pytest.approx(10.0, abs=1e-4)
    assert propagator.fidelity(psi, spin_five.state(10)) == pytest.approx(1.0, abs=1e-6)


def test_spin_rotation_rotating_frame(spin_five: BasisModel) -> None:
    amp = 0.2
    w = pulse.make_flat_top(amp, 1.0, 0.5 * math.pi / amp, 0.0, 1e-3)
    _, record = propagator.propagate(
        spin_five, spin_five.state(0), w, record_every=500, omega_frame=1.0
    )
    angle = amp * record.times
    assert np.allclose(record.bloch[:, 0], 0.0, atol=1e-5)
    assert np.allclose(record.bloch[:, 1], -np.sin(angle), atol=1e-5)
    assert np.allclose(record.bloch[:, 2], -np.cos(angle), atol=1e-5)
    assert record.frame_omega == 1.0


def test_write_trajectory(two_level: BasisModel, tmp_path: Path) -> None:
    w = pulse.make_flat_top(0.5, 1.0, math.pi, 0.0, 1e-2)
    _, record = propagator.propagate(two_level, two_level.state(0), w, record_every=50)
    path = tmp_path / "trajectory.txt"
    propagator.write_trajectory(path, record, meta=dict(n=2))
    header = tables.read_comment_header(path)
    assert header["kind"] == "trajectory"
    assert header["n"] == 2
    assert header["columns"][-2:] == ["p0", "p1"]
    rows = np.loadtxt(path, comments="#", ndmin=2)
    assert rows.shape == (record.times.size, 12)
    assert np.allclose(rows[:, -1], record.populations[:, 1], atol=1e-9)
