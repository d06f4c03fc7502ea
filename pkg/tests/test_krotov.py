from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np
import pytest

from circulon import krotov, pulse, tables
from circulon.error import GridMismatchError, OptimizationError, StagnationWarning
from circulon.propagator import evolve, interval_fields

if TYPE_CHECKING:
    from pathlib import Path

    from circulon.stark import BasisModel


@pytest.fixture
def guess() -> pulse.Waveform:
    """Flat-top rotating the two-level system by 0.8 pi."""
    return pulse.make_flat_top(0.4 * math.pi / 4.5, 1.0, 5.0, 0.5, 0.01)


def settings(**kwargs: object) -> krotov.OptimizationConfig:
    opts: dict = dict(lambda_a=10.0, domain="quadrature", omega=1.0, threshold=1e-9)
    opts.update(kwargs)
    return krotov.OptimizationConfig(**opts)


def final_cost(
    model: BasisModel,
    ctrl: krotov._Controls,
    values: np.ndarray,
) -> float:
    ctrl.values = values
    ex, ey = ctrl.lab()
    psi = evolve(model, model.state(0), ex, ey, ctrl.dt)
    return 1.0 - abs(np.vdot(model.state(1), psi)) ** 2


def test_config_checks() -> None:
    with pytest.raises(ValueError):
        krotov.OptimizationConfig(domain="polar")
    with pytest.raises(ValueError):
        krotov.OptimizationConfig(domain="quadrature", omega=0.0)
    with pytest.raises(ValueError):
        krotov.OptimizationConfig(lambda_a=0.0, domain="lab")


def test_controls_round_trip(guess: pulse.Waveform) -> None:
    ex, ey = krotov.interval_fields(guess)
    ctrl = krotov.controls_from_waveform(guess, "quadrature", 1.0)
    assert ctrl.values.shape == (2, guess.size - 1)
    lab_x, lab_y = ctrl.lab()
    assert np.allclose(lab_x, ex, atol=1e-14)
    assert np.allclose(lab_y, ey, atol=1e-14)
    assert np.allclose(ctrl.values[1], 0.0, atol=1e-4)
    mid = ctrl.values.shape[1] // 2
    assert ctrl.values[0, mid] == pytest.approx(0.4 * math.pi / 4.5, rel=1e-4)


def test_update_shape() -> None:
    assert np.array_equal(krotov.update_shape(10, 0.1, 0.0), np.ones(10))
    shape = krotov.update_shape(100, 0.1, 2.0)
    assert np.all((shape > 0) & (shape <= 1))
    assert np.allclose(shape, shape[::-1])
    assert shape[50] == 1.0


def test_evaluate_functional() -> None:
    psi = np.array([0.0, 1.0], dtype=complex)
    shape = np.array([1.0, 1.0, 0.5, 0.0])
    j_t, g_int, total = krotov.evaluate_functional(
        psi, psi, np.ones((2, 4)), np.zeros((2, 4)), shape, 2.0, 0.1
    )
    assert j_t == pytest.approx(0.0)
    assert g_int == pytest.approx(1.6)
    assert total == pytest.approx(1.6)
    with pytest.raises(GridMismatchError):
        krotov.evaluate_functional(
            psi, psi, np.ones((2, 4)), np.zeros((2, 3)), shape, 2.0, 0.1
        )


@pytest.mark.parametrize("domain", ["lab", "quadrature"])
def test_gradient_finite_differences(two_level: BasisModel, domain: str) -> None:
    w = pulse.make_flat_top(0.3, 1.0, 3.0, 0.5, 0.01)
    grad = krotov.gradient(
        two_level, two_level.state(0), two_level.state(1), w, domain, 1.0
    )
    ctrl = krotov.controls_from_waveform(w, domain, 1.0)
    assert grad.shape == ctrl.values.shape
    base = ctrl.values.copy()
    step = 1e-6
    floor = 1e-4 * float(np.abs(grad).max())
    for k in (0, 1):
        for i in (50, 150, 250):
            plus = base.copy()
            plus[k, i] += step
            minus = base.copy()
            minus[k, i] -= step
            diff = (
                final_cost(two_level, ctrl, plus) - final_cost(two_level, ctrl, minus)
            ) / (2 * step)
            assert diff == pytest.approx(grad[k, i], rel=1e-3, abs=floor)


def test_optimize_converges(two_level: BasisModel, guess: pulse.Waveform) -> None:
    records: list = []
    run = krotov.optimize(
        two_level,
        two_level.state(0),
        two_level.state(1),
        guess,
        settings(threshold=1e-6, max_iter=100),
        on_iteration=records.append,
    )
    assert run.converged
    initial = 1 - math.sin(0.4 * math.pi) ** 2
    assert run.iterations[0].j_t == pytest.approx(initial, rel=1e-3)
    assert run.j_t <= 1e-6
    assert run.n_iter < 30
    assert len(records) == run.n_iter
    costs = [rec.j_t for rec in run.iterations]
    assert all(b <= a + 1e-12 for a, b in zip(costs, costs[1:]))
    assert run.waveform.size == guess.size
    assert run.waveform.dt == guess.dt


def test_optimize_lab_domain(two_level: BasisModel, guess: pulse.Waveform) -> None:
    run = krotov.optimize(
        two_level,
        two_level.state(0),
        two_level.state(1),
        guess,
        settings(domain="lab", max_iter=3),
    )
    assert run.status == "max_iter"
    assert run.n_iter == 3
    assert run.j_t < run.iterations[0].j_t


def test_optimize_without_iterations(
    two_level: BasisModel, guess: pulse.Waveform
) -> None:
    run = krotov.optimize(
        two_level, two_level.state(0), two_level.state(1), guess, settings(max_iter=0)
    )
    assert run.status == "max_iter"
    assert run.waveform is guess
    assert len(run.iterations) == 1
    done = krotov.optimize(
        two_level,
        two_level.state(0),
        two_level.state(1),
        guess,
        settings(threshold=0.5),
    )
    assert done.converged
    assert done.n_iter == 0


def test_optimize_stopped(two_level: BasisModel, guess: pulse.Waveform) -> None:
    run = krotov.optimize(
        two_level,
        two_level.state(0),
        two_level.state(1),
        guess,
        settings(),
        on_iteration=lambda rec: True,
    )
    assert run.status == "stopped"
    assert run.n_iter == 1


def test_optimize_stagnation(two_level: BasisModel, guess: pulse.Waveform) -> None:
    cfg = settings(constrain=True, e_max=1e-3, stagnation_limit=1)
    with pytest.warns(StagnationWarning):
        run = krotov.optimize(
            two_level, two_level.state(0), two_level.state(1), guess, cfg
        )
    assert run.status == "stagnated"
    assert pulse.peak_amplitude(run.waveform) <= 1e-3 * (1 + 1e-9)


def test_optimize_state_mismatch(two_level: BasisModel, guess: pulse.Waveform) -> None:
    with pytest.raises(GridMismatchError):
        krotov.optimize(
            two_level, np.ones(3, complex), two_level.state(1), guess, settings()
        )


def test_backward_stride(two_level: BasisModel, guess: pulse.Waveform) -> None:
    args = (two_level, two_level.state(0), two_level.state(1), guess)
    full = krotov.optimize(*args, settings(max_iter=2))
    strided = krotov.optimize(*args, settings(max_iter=2, checkpoint_every=37))
    assert strided.j_t == pytest.approx(full.j_t, rel=1e-10)
    assert np.allclose(strided.waveform.ex, full.waveform.ex, atol=1e-12)


def test_resume(two_level: BasisModel, guess: pulse.Waveform, tmp_path: Path) -> None:
    args = (two_level, two_level.state(0), two_level.state(1), guess)
    ckpt = tmp_path / "krotov.npz"
    first = krotov.optimize(*args, settings(max_iter=3, checkpoint_file=ckpt))
    assert ckpt.is_file()
    resumed = krotov.optimize(
        *args, settings(max_iter=5, checkpoint_file=ckpt, resume=True)
    )
    straight = krotov.optimize(*args, settings(max_iter=5))
    assert first.n_iter == 3
    assert resumed.n_iter == 5
    for rec_a, rec_b in zip(first.iterations, resumed.iterations):
        assert rec_a == rec_b
    assert resumed.j_t == pytest.approx(straight.j_t, rel=1e-9)
    assert np.allclose(resumed.waveform.ex, straight.waveform.ex, atol=1e-12)


def test_resume_mismatch(
    two_level: BasisModel, guess: pulse.Waveform, tmp_path: Path
) -> None:
    ckpt = tmp_path / "krotov.npz"
    krotov.save_checkpoint(ckpt, [], np.zeros((2, 7)), 10.0, "quadrature", guess.dt)
    with pytest.raises(GridMismatchError):
        krotov.optimize(
            two_level,
            two_level.state(0),
            two_level.state(1),
            guess,
            settings(checkpoint_file=ckpt, resume=True),
        )


def test_checkpoint_round_trip(tmp_path: Path) -> None:
    recs = [krotov.IterationRecord(0, 0.5, 0.0, 1.0, 0.1)]
    values = np.arange(6.0).reshape(2, 3)
    path = tmp_path / "ckpt.npz"
    krotov.save_checkpoint(path, recs, values, 3.0, "lab", 0.25)
    loaded = krotov.load_checkpoint(path)
    assert loaded[0] == recs
    assert np.array_equal(loaded[1], values)
    assert loaded[2:] == (3.0, "lab", 0.25)


def test_auto_lambda(two_level: BasisModel, guess: pulse.Waveform) -> None:
    cfg = settings(lambda_a=None)
    states = (two_level.state(0), two_level.state(1))
    lam = krotov.auto_lambda(two_level, *states, guess, cfg)
    assert math.isfinite(lam) and lam > 0
    run = krotov.optimize(
        two_level, *states, guess, settings(lambda_a=None, max_iter=1)
    )
    assert run.lambda_a == pytest.approx(lam)
    zero = pulse.Waveform(guess.dt, np.zeros(guess.size), np.zeros(guess.size))
    with pytest.raises(ValueError):
        krotov.auto_lambda(two_level, *states, zero, cfg)


def test_iteration_log(
    two_level: BasisModel, guess: pulse.Waveform, tmp_path: Path
) -> None:
    run = krotov.optimize(
        two_level, two_level.state(0), two_level.state(1), guess, settings(max_iter=2)
    )
    path = tmp_path / "iterations.txt"
    krotov.write_iteration_log(path, run, meta=dict(n=2))
    header = tables.read_comment_header(path)
    assert header["status"] == "max_iter"
    assert header["lambda_a"] == 10.0
    rows = np.loadtxt(path, comments="#", ndmin=2)
    assert rows.shape == (3, 6)
    assert list(rows[:, 0]) == [0, 1, 2]
    assert header["columns"][-2:] == [
        "bandwidth_sigma_plus",
        "bandwidth_sigma_minus",
    ]
    assert np.all(rows[:, 4:] >= 0)


def test_auto_lambda_floor(
    spin_five: BasisModel, two_level: BasisModel, guess: pulse.Waveform
) -> None:
    weak = pulse.make_flat_top(1e-4, 1.0, 5.0, 0.5, 0.01)
    lam = krotov.auto_lambda(
        spin_five, spin_five.state(0), spin_five.state(10), weak, settings()
    )
    assert lam == pytest.approx(krotov.coupling_norm(spin_five) / 1e-4, rel=1e-6)
    floor = krotov.coupling_norm(two_level) / pulse.peak_amplitude(guess)
    run = krotov.optimize(
        two_level,
        two_level.state(0),
        two_level.state(1),
        guess,
        settings(lambda_a=floor, max_iter=1),
    )
    assert pulse.peak_amplitude(run.waveform) <= 3 * pulse.peak_amplitude(guess)


def test_optimize_runaway_update(
    two_level: BasisModel, guess: pulse.Waveform, tmp_path: Path
) -> None:
    ckpt = tmp_path / "krotov.npz"
    with pytest.raises(OptimizationError) as err:
        krotov.optimize(
            two_level,
            two_level.state(0),
            two_level.state(1),
            guess,
            settings(lambda_a=1e-12, checkpoint_file=ckpt),
        )
    assert err.value.iteration == 1
    assert err.value.dump is not None
    records, values, lam, domain, _ = krotov.load_checkpoint(err.value.dump)
    assert [rec.iteration for rec in records] == [0]
    assert np.all(np.isfinite(values))
    assert (lam, domain) == (1e-12, "quadrature")


def test_onto_grid_interval_means() -> None:
    rng = np.random.default_rng(7)
    values = rng.normal(size=41)
    grid = krotov._onto_grid(values)
    assert grid.size == values.size + 1
    assert np.allclose(0.5 * (grid[1:] + grid[:-1]), values, atol=1e-12)
    assert np.allclose(krotov._onto_grid(np.full(10, 0.3)), 0.3, atol=1e-15)


@pytest.mark.parametrize("domain", ["lab", "quadrature"])
def test_exported_waveform_replays(
    two_level: BasisModel, guess: pulse.Waveform, domain: str
) -> None:
    run = krotov.optimize(
        two_level,
        two_level.state(0),
        two_level.state(1),
        guess,
        settings(domain=domain, max_iter=3),
    )
    ex, ey = interval_fields(run.waveform)
    psi = evolve(two_level, two_level.state(0), ex, ey, run.waveform.dt)
    j_t = 1.0 - abs(np.vdot(two_level.state(1), psi)) ** 2
    assert j_t == pytest.approx(run.j_t, abs=1e-9)
