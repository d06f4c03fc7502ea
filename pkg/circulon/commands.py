"""Pipelines run by the subcommands.

Each command reads the configuration, runs the corresponding library
pipeline, writes its tables in the output directory and a `summary.toml`,
and returns the exit code of the process.
"""

from __future__ import annotations

import logging
import typing
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import atom, krotov, pulse, qsl, robustness, stark, units
from .error import GridMismatchError
from .propagator import fidelity, propagate, write_trajectory
from .tables import provenance, write_summary

if typing.TYPE_CHECKING:
    from typing import Any, Callable, Dict, Mapping, Optional, Tuple

    from numpy.typing import NDArray

    from .config import Config
    from .pulse import Waveform
    from .stark import BasisModel

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNCONVERGED = 4


def _meta(conf: Config) -> Dict[str, Any]:
    return provenance(conf.digest_())


def _finish(conf: Config, command: str, summary: Mapping[str, Any]) -> None:
    content: Dict[str, Any] = dict(command=command, **_meta(conf))
    content.update(summary)
    write_summary(conf.output.out / "summary.toml", content)
    logger.info("summary written to %s", conf.output.out / "summary.toml")


def carrier(conf: Config) -> float:
    """Carrier angular frequency in atomic units."""
    return units.mhz_to_au(conf.pulse.frequency)


def build_model(conf: Config, e_dc: Optional[float] = None) -> BasisModel:
    """Basis model from the bundle file or assembled from the species.

    Args:
        conf: configuration.
        e_dc: static field in atomic units overriding the configured one.
    """
    if e_dc is None and conf.atom.model_file is not None:
        model = stark.BasisModel.load(conf.atom.model_file)
        logger.info(
            "loaded a basis of %d states from %s", model.dim, conf.atom.model_file
        )
        return model
    table = atom.load_table(conf.atom.species)
    return stark.assemble_model(
        table,
        conf.atom.n,
        units.v_per_cm_to_au(conf.atom.e_dc) if e_dc is None else e_dc,
        truncation=conf.atom.truncation,
        n_window=conf.atom.n_window or None,
        coupling_threshold=conf.atom.coupling_threshold,
        memory_cap=conf.atom.memory_cap,
        step=conf.atom.numerov_step,
        n_jobs=conf.output.n_jobs,
    )


def states(
    conf: Config, model: BasisModel
) -> Tuple[NDArray[np.complex128], NDArray[np.complex128]]:
    """Initial and target states."""
    target = conf.states.target
    if target is None:
        target = model.n - 1
    for label in (conf.states.initial, target):
        if label not in model.pivots:
            raise GridMismatchError(f"no pivotal state |{label}> in the basis")
    return model.state(conf.states.initial), model.state(target)


def load_pulse(conf: Config) -> Waveform:
    """Pulse read from `pulse_file` or built from the analytic shape."""
    pconf = conf.pulse
    if pconf.pulse_file is not None:
        return pulse.read_waveform(pconf.pulse_file)
    dt = units.ns_to_au(pconf.dt)
    t_stop = units.ns_to_au(pconf.t_stop)
    edge = units.ns_to_au(pconf.edge)
    if pconf.shape == "two-step":
        return pulse.make_two_step(
            units.mv_per_cm_to_au(pconf.amplitude),
            units.mv_per_cm_to_au(pconf.amplitude_high),
            units.ns_to_au(pconf.t_step),
            units.ns_to_au(pconf.ramp),
            carrier(conf),
            t_stop,
            edge,
            dt,
            pconf.polarization,
        )
    return pulse.make_flat_top(
        units.mv_per_cm_to_au(pconf.amplitude),
        carrier(conf),
        t_stop,
        edge,
        dt,
        pconf.polarization,
    )


def build_model_cmd(conf: Config) -> int:
    """Assemble the basis, save the bundle and print the ladder frequencies."""
    model = build_model(replace(conf, atom=replace(conf.atom, model_file=None)))
    out = conf.output.out
    model.save(out / "model.npz", conf.digest_())
    freqs = {
        f"{lo}-{hi}": units.au_to_mhz(freq)
        for (lo, hi), freq in stark.transition_frequencies(model).items()
    }
    omega_0 = units.au_to_mhz(stark.ladder_frequency(model.n, model.e_dc))
    print(
        f"basis of {model.dim} states ({model.truncation}),",
        f"{len(model.pivots)} pivotal",
    )
    for key in ("0-1", "1-2", "2-3"):
        if key in freqs:
            print(f"omega_{key.replace('-', ',')} = {freqs[key]:.2f} MHz")
    print(f"omega_0 = {omega_0:.2f} MHz")
    _finish(
        conf,
        "build-model",
        dict(
            dim=model.dim,
            pivots=len(model.pivots),
            memory_mb=stark.estimate_memory(model.dim),
            ladder_frequency_mhz=omega_0,
            transition_frequencies_mhz=freqs,
            model_file=str(out / "model.npz"),
        ),
    )
    return EXIT_OK


def propagate_cmd(conf: Config) -> int:
    """Propagate the initial state and record the ladder dynamics."""
    model = build_model(conf)
    psi0, target = states(conf, model)
    wave = load_pulse(conf)
    psi, record = propagate(
        model, psi0, wave, conf.output.record_every, omega_frame=carrier(conf)
    )
    out = conf.output.out
    meta = _meta(conf)
    write_trajectory(out / "trajectory.txt", record, meta)
    pulse.write_waveform(out / "pulse.txt", wave, lab_units=True, meta=meta)
    pops = record.populations[-1]
    fid = fidelity(psi, target)
    logger.info("final fidelity %.5f", fid)
    _finish(
        conf,
        "propagate",
        dict(
            fidelity=fid,
            mean_m=float(record.mean_m[-1]),
            sigma_m=float(record.sigma_m[-1]),
            leakage=float(record.leakage[-1]),
            population_1=float(pops[1]) if pops.size > 1 else 0.0,
            pulse_energy=pulse.pulse_energy(wave),
            peak_mv_per_cm=units.au_to_mv_per_cm(pulse.peak_amplitude(wave)),
        ),
    )
    return EXIT_OK


def optimization_config(conf: Config) -> krotov.OptimizationConfig:
    """Krotov settings in atomic units."""
    oconf = conf.optimize
    ckpt = oconf.checkpoint_file
    if ckpt is None:
        ckpt = conf.output.out / "optimize.npz"
    return krotov.OptimizationConfig(
        lambda_a=oconf.lambda_a,
        update_edge=units.ns_to_au(oconf.update_edge),
        constrain=oconf.constrain,
        e_max=units.mv_per_cm_to_au(oconf.e_max),
        cutoff=units.mhz_to_au(oconf.cutoff),
        threshold=oconf.threshold,
        max_iter=oconf.max_iter,
        domain=oconf.domain,
        omega=carrier(conf),
        checkpoint_every=oconf.checkpoint_every,
        checkpoint_file=Path(ckpt),
        resume=oconf.resume,
    )


def optimize_cmd(conf: Config) -> int:
    """Optimize the configured pulse."""
    model = build_model(conf)
    psi0, target = states(conf, model)
    guess = load_pulse(conf)
    cfg = optimization_config(conf)
    run = krotov.optimize(model, psi0, target, guess, cfg)
    out = conf.output.out
    meta = _meta(conf)
    krotov.write_iteration_log(out / "iterations.txt", run, meta)
    pulse.write_waveform(out / "optimized.txt", run.waveform, meta=meta)
    pulse.write_waveform(
        out / "optimized_lab.txt", run.waveform, lab_units=True, meta=meta
    )
    peak = pulse.peak_amplitude(run.waveform)
    widths = pulse.bandwidth(run.waveform, cfg.omega)
    within = peak <= cfg.e_max * (1 + 1e-9) if cfg.e_max else True
    _finish(
        conf,
        "optimize",
        dict(
            status=run.status,
            converged=run.converged,
            iterations=run.n_iter,
            j_t=run.j_t,
            fidelity=1.0 - run.j_t,
            lambda_a=run.lambda_a,
            constrained=cfg.constrain,
            within_amplitude_limit=bool(within),
            peak_mv_per_cm=units.au_to_mv_per_cm(peak),
            bandwidth_mhz={k: units.au_to_mhz(v) for k, v in widths.items()},
        ),
    )
    if conf.optimize.require_converged and not run.converged:
        logger.warning("optimization did not reach J_T <= %g", cfg.threshold)
        return EXIT_UNCONVERGED
    return EXIT_OK


def noise_sweep_cmd(conf: Config) -> int:
    """Fidelity of a pulse under RF noise, DC offsets and coarse graining."""
    model = build_model(conf)
    psi0, target = states(conf, model)
    wave = load_pulse(conf)
    omega = carrier(conf)
    nconf = conf.noise
    n_jobs = conf.output.n_jobs
    meta = _meta(conf)
    out = conf.output.out

    nominal = robustness.final_fidelity(model, psi0, target, wave)
    results = robustness.rf_noise_sweep(
        model,
        psi0,
        target,
        wave,
        omega,
        nconf.noise_levels,
        nconf.realizations,
        conf.output.seed,
        n_jobs,
    )
    robustness.write_noise_table(out / "noise.txt", results, meta)

    target_m = conf.states.target if conf.states.target is not None else model.n - 1

    def builder(e_dc: float) -> BasisModel:
        return build_model(conf, e_dc)

    dc_results = robustness.dc_offset_test(
        builder,
        model.e_dc,
        conf.states.initial,
        target_m,
        wave,
        [units.uv_per_cm_to_au(off) for off in nconf.dc_offsets],
        n_jobs,
    )
    period = units.ns_to_au(nconf.awg_period)
    coarse = {
        domain: robustness.coarse_grain_test(
            model, psi0, target, wave, period, domain, omega, nconf.coarse_mode
        )
        for domain in ("lab", "quadrature")
    }
    _finish(
        conf,
        "noise-sweep",
        dict(
            fidelity=nominal,
            seed=conf.output.seed,
            realizations=nconf.realizations,
            rf_noise=[
                dict(f_noise=res.spec.level, mean=res.mean, std=res.std)
                for res in results
            ],
            dc_offsets=[
                dict(
                    offset_uv_per_cm=off,
                    lower=res.lower,
                    upper=res.upper,
                    loss=res.loss,
                )
                for off, res in zip(nconf.dc_offsets, dc_results)
            ],
            coarse_grain=dict(
                period_ns=nconf.awg_period,
                mode=nconf.coarse_mode,
                lab=coarse["lab"],
                quadrature=coarse["quadrature"],
            ),
        ),
    )
    return EXIT_OK


def qsl_sweep_cmd(conf: Config) -> int:
    """Unconstrained optimizations over the configured durations."""
    model = build_model(conf)
    psi0, target = states(conf, model)
    qconf = conf.qsl
    cfg = replace(
        optimization_config(conf),
        max_iter=qconf.qsl_max_iter,
        checkpoint_file=None,
        resume=False,
    )
    points = qsl.qsl_sweep(
        model,
        psi0,
        target,
        [units.ns_to_au(t) for t in qconf.durations],
        [units.ns_to_au(e) for e in qconf.guess_edges],
        [units.mv_per_cm_to_au(a) for a in qconf.guess_amplitudes],
        carrier(conf),
        units.ns_to_au(conf.pulse.dt),
        cfg,
        units.ns_to_au(qconf.min_valid_duration),
        conf.output.n_jobs,
    )
    qsl.write_sweep_table(conf.output.out / "qsl.txt", points, _meta(conf))
    valid = [pt for pt in points if pt.valid and pt.converged]
    _finish(
        conf,
        "qsl-sweep",
        dict(
            points=len(points),
            converged=sum(pt.converged for pt in points),
            shortest_valid_ns=min(units.au_to_ns(pt.t_stop) for pt in valid)
            if valid
            else -1.0,
            critical_rf_field_v_per_cm=units.au_to_v_per_cm(
                qsl.critical_rf_field(model.n, model.e_dc)
            ),
            ionization_threshold_v_per_cm=units.au_to_v_per_cm(
                qsl.ionization_threshold(model.n)
            ),
        ),
    )
    return EXIT_OK


def demodulate_cmd(conf: Config) -> int:
    """Write the complex envelope of the pulse relative to the carrier."""
    wave = load_pulse(conf)
    env = pulse.demodulate(wave, carrier(conf))
    pulse.write_envelope(
        conf.output.out / "envelope.txt", env, lab_units=True, meta=_meta(conf)
    )
    re_s, im_s = env.quadratures
    _finish(
        conf,
        "demodulate",
        dict(
            samples=env.size,
            carrier_mhz=conf.pulse.frequency,
            peak_in_phase_mv_per_cm=units.au_to_mv_per_cm(float(np.abs(re_s).max())),
            peak_quadrature_mv_per_cm=units.au_to_mv_per_cm(float(np.abs(im_s).max())),
        ),
    )
    return EXIT_OK


def config_cmd(conf: Config) -> int:
    """Write the effective configuration."""
    path = conf.output.out / "config.toml"
    conf.to_file_(path)
    print(path)
    return EXIT_OK


COMMANDS: Dict[str, Callable[[Config], int]] = {
    "build-model": build_model_cmd,
    "propagate": propagate_cmd,
    "optimize": optimize_cmd,
    "noise-sweep": noise_sweep_cmd,
    "qsl-sweep": qsl_sweep_cmd,
    "demodulate": demodulate_cmd,
    "config": config_cmd,
}
