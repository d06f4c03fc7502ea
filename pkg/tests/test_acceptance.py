"""Runs on the rubidium n = 51 manifold, deselected by default."""

from __future__ import annotations

import math
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pytest

from circulon import (
    commands,
    krotov,
    propagator,
    pulse,
    qsl,
    robustness,
    stark,
    units,
)
from circulon.config import Config

if TYPE_CHECKING:
    from circulon.atom import QuantumDefectTable
    from circulon.stark import BasisModel

pytestmark = pytest.mark.slow

E_DC = units.v_per_cm_to_au(2.346)
OMEGA = units.mhz_to_au(230.0)
CONFIGS = Path(__file__).parents[1] / "docs" / "configs"


@pytest.fixture(scope="module")
def rydberg(rubidium: QuantumDefectTable) -> BasisModel:
    return stark.assemble_model(rubidium, 51, E_DC)


def test_ladder_frequencies(rydberg: BasisModel) -> None:
    freqs = stark.transition_frequencies(rydberg)
    assert units.au_to_mhz(freqs[(0, 1)]) == pytest.approx(70.36, abs=0.5)
    assert units.au_to_mhz(freqs[(1, 2)]) == pytest.approx(182.95, abs=0.5)
    assert units.au_to_mhz(freqs[(2, 3)]) == pytest.approx(227.46, abs=0.5)
    omega_0 = stark.ladder_frequency(51, E_DC)
    assert units.au_to_mhz(omega_0) == pytest.approx(229.6, abs=0.2)


def test_pi_pulse_baseline(rydberg: BasisModel) -> None:
    omega = units.mhz_to_au(230.0)
    wave = pulse.make_flat_top(
        units.mv_per_cm_to_au(18.0),
        omega,
        units.ns_to_au(138.0),
        units.ns_to_au(10.0),
        units.ns_to_au(0.02),
    )
    psi, record = propagator.propagate(
        rydberg, rydberg.state(2), wave, record_every=500, omega_frame=omega
    )
    assert propagator.fidelity(psi, rydberg.state(50)) == pytest.approx(0.81, abs=0.02)
    assert record.mean_m[-1] == pytest.approx(46.0, abs=1.0)
    assert record.populations[-1, 1] == pytest.approx(0.06, abs=0.01)


def test_validity_bounds() -> None:
    e_c = qsl.critical_rf_field(51, E_DC)
    assert units.au_to_v_per_cm(e_c) == pytest.approx(2.5, rel=0.1)
    threshold = units.au_to_v_per_cm(qsl.ionization_threshold(51))
    assert threshold == pytest.approx(84.5, rel=0.01)


def transfer(model: BasisModel, wave: pulse.Waveform) -> float:
    return robustness.final_fidelity(model, model.state(2), model.state(50), wave)


def test_amplified_pi_pulse(rydberg: BasisModel) -> None:
    def make(t_stop: float) -> pulse.Waveform:
        return pulse.make_flat_top(
            units.mv_per_cm_to_au(45.0),
            OMEGA,
            t_stop,
            units.ns_to_au(10.0),
            units.ns_to_au(0.02),
        )

    durations = [units.ns_to_au(t) for t in np.arange(57.0, 66.01, 0.4)]
    scan = pulse.scan_duration(make, durations, lambda w: transfer(rydberg, w))
    t_best, fid = pulse.best_duration(scan)
    assert units.au_to_ns(t_best) == pytest.approx(61.2, abs=1.5)
    assert fid == pytest.approx(0.63, abs=0.03)


@pytest.fixture(scope="module")
def constrained_conf(tmp_path_factory: pytest.TempPathFactory) -> Config:
    conf = Config.default_()
    conf.update_from_file_(CONFIGS / "optimize_constrained.toml")
    conf.check_()
    conf.output.out = tmp_path_factory.mktemp("constrained")
    return conf


def test_two_step_guess(rydberg: BasisModel, constrained_conf: Config) -> None:
    guess = commands.load_pulse(constrained_conf)
    assert units.au_to_ns(guess.times[-1]) == pytest.approx(65.0)
    psi, record = propagator.propagate(rydberg, rydberg.state(2), guess)
    assert propagator.fidelity(psi, rydberg.state(50)) == pytest.approx(0.74, abs=0.03)
    assert record.populations[-1, 1] < 1e-4


@pytest.fixture(scope="module")
def optimized(rydberg: BasisModel, constrained_conf: Config) -> krotov.OptimizationRun:
    cfg = commands.optimization_config(constrained_conf)
    guess = commands.load_pulse(constrained_conf)
    return krotov.optimize(rydberg, rydberg.state(2), rydberg.state(50), guess, cfg)


def test_constrained_optimization(
    optimized: krotov.OptimizationRun, constrained_conf: Config
) -> None:
    assert optimized.converged
    assert optimized.j_t <= 1e-2
    assert optimized.n_iter <= 3000
    costs = [rec.j_t for rec in optimized.iterations]
    assert all(b <= a + 1e-10 for a, b in zip(costs, costs[1:]))
    e_max = units.mv_per_cm_to_au(constrained_conf.optimize.e_max)
    assert pulse.peak_amplitude(optimized.waveform) <= e_max * (1 + 1e-9)


def test_scs_diagnostics(
    rydberg: BasisModel, optimized: krotov.OptimizationRun
) -> None:
    wave = optimized.waveform
    every = round(units.ns_to_au(0.2) / wave.dt)
    _, record = propagator.propagate(
        rydberg, rydberg.state(2), wave, record_every=every, omega_frame=OMEGA
    )
    times = units.au_to_ns(record.times)
    window = (times > 15.0) & (times < 35.0)
    best = np.nanargmax(np.where(window, record.scs_overlap, -1.0))
    assert record.scs_overlap[best] >= 0.98
    assert times[best] == pytest.approx(25.0, abs=5.0)
    assert record.scs_theta[best] == pytest.approx(0.75 * math.pi, abs=0.05 * math.pi)


def test_coarse_graining(
    rydberg: BasisModel, optimized: krotov.OptimizationRun
) -> None:
    wave = optimized.waveform
    period = units.ns_to_au(0.83)
    states = (rydberg.state(2), rydberg.state(50))
    nominal = transfer(rydberg, wave)
    lab = robustness.coarse_grain_test(rydberg, *states, wave, period, "lab")
    quad = robustness.coarse_grain_test(
        rydberg, *states, wave, period, "quadrature", OMEGA
    )
    assert lab <= 0.5
    assert nominal - quad <= 2e-3


def test_dc_offsets(
    rubidium: QuantumDefectTable, optimized: krotov.OptimizationRun
) -> None:
    offsets = [units.uv_per_cm_to_au(off) for off in (50.0, 150.0)]
    results = robustness.dc_offset_test(
        lambda e_dc: stark.assemble_model(rubidium, 51, e_dc),
        E_DC,
        2,
        50,
        optimized.waveform,
        offsets,
        n_jobs=-1,
    )
    assert [res.loss <= 1e-3 for res in results] == [True, True]


def test_rf_noise(
    rydberg: BasisModel, optimized: krotov.OptimizationRun, constrained_conf: Config
) -> None:
    levels = constrained_conf.noise.noise_levels
    results = robustness.rf_noise_sweep(
        rydberg,
        rydberg.state(2),
        rydberg.state(50),
        optimized.waveform,
        OMEGA,
        levels,
        realizations=1000,
        seed=constrained_conf.output.seed,
        n_jobs=-1,
    )
    by_level = dict(zip(levels, results))
    assert by_level[0.1].mean == pytest.approx(0.959, abs=0.015)
    means = [res.mean for res in results]
    stds = [res.std for res in results]
    assert all(b <= a + 1e-4 for a, b in zip(means, means[1:]))
    assert all(b >= a - 1e-4 for a, b in zip(stds, stds[1:]))
