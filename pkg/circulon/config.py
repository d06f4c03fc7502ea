"""Configuration of circulon runs.

Options are expressed in laboratory units (V/cm, mV/cm, ns, MHz), which
the pipelines convert to atomic units. Quantities given as strings may
carry any unit of the right dimension, e.g. `amplitude = "0.018 V/cm"`.
TOML arrays hold a single type, so arrays with units are arrays of strings
such as `durations = ["65 ns", "0.01 us"]`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

from . import krotov, pulse, stark
from .base import ConfigBase, Section, entry
from .collections import MaybeEntry, TupleEntry
from .error import ConfigError
from .parsers import QuantityParser, non_negative_int, positive_int, seed_parser
from .tools import choice_entry, path_entry, switch_opt

V_PER_CM = QuantityParser("V/cm")
MV_PER_CM = QuantityParser("mV/cm")
UV_PER_CM = QuantityParser("uV/cm")
NS = QuantityParser("ns")
MHZ = QuantityParser("MHz")

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def _positive(value: float) -> bool:
    return value > 0


def _non_negative(value: float) -> bool:
    return value >= 0


@dataclass
class Atom(Section):
    """Atomic species, static field and basis truncation."""

    species: str = entry(
        val="rubidium85", doc="shipped species name or path to a species TOML file"
    )
    n: int = entry(
        val=51,
        doc="principal quantum number of the working manifold",
        from_toml=positive_int,
        check=lambda n: n >= 2,
    )
    e_dc: float = entry(
        val=2.346,
        doc="static field",
        unit="V/cm",
        from_toml=V_PER_CM,
        check=_positive,
    )
    truncation: str = choice_entry("two-diagonal", stark.TRUNCATIONS, "basis preset")
    n_window: Tuple[int, ...] = TupleEntry(positive_int).entry(
        doc="principal quantum numbers of the diagonalization, chosen from the "
        "quantum defects if empty"
    )
    coupling_threshold: float = entry(
        val=1e-3,
        doc="relative coupling threshold of the coupled preset",
        check=_positive,
    )
    memory_cap: float = entry(
        val=4096.0, doc="memory cap of the couplings", unit="MB", check=_positive
    )
    numerov_step: float = entry(
        val=0.005, doc="Numerov step in sqrt(r)", check=_positive
    )
    model_file: Optional[Path] = MaybeEntry(Path, str).entry(
        doc="model bundle to load instead of assembling the basis"
    )


@dataclass
class States(Section):
    """Initial and target pivotal states."""

    initial: int = entry(
        val=2, doc="pivotal label m of the initial state", from_toml=non_negative_int
    )
    target: Optional[int] = MaybeEntry(non_negative_int).entry(
        doc="pivotal label m of the target state, the circular state n-1 if empty"
    )


@dataclass
class PulseSection(Section):
    """Guess or test pulse."""

    shape: str = choice_entry("flat-top", ("flat-top", "two-step"), "pulse shape")
    polarization: str = choice_entry("sigma+", pulse.POLARIZATIONS, "polarization")
    amplitude: float = entry(
        val=18.0,
        doc="plateau amplitude (first step of a two-step pulse)",
        unit="mV/cm",
        from_toml=MV_PER_CM,
        check=_non_negative,
    )
    amplitude_high: float = entry(
        val=45.0,
        doc="second step amplitude of a two-step pulse",
        unit="mV/cm",
        from_toml=MV_PER_CM,
        check=_non_negative,
    )
    t_step: float = entry(
        val=10.0, doc="start of the step", unit="ns", from_toml=NS, check=_non_negative
    )
    ramp: float = entry(
        val=10.0,
        doc="duration of the step ramp",
        unit="ns",
        from_toml=NS,
        check=_non_negative,
    )
    t_stop: float = entry(
        val=138.0, doc="pulse duration", unit="ns", from_toml=NS, check=_positive
    )
    edge: float = entry(
        val=10.0,
        doc="duration of each edge",
        unit="ns",
        from_toml=NS,
        check=_non_negative,
    )
    dt: float = entry(
        val=0.02, doc="time step", unit="ns", from_toml=NS, check=_positive
    )
    frequency: float = entry(
        val=230.0, doc="carrier frequency", unit="MHz", from_toml=MHZ, check=_positive
    )
    pulse_file: Optional[Path] = MaybeEntry(Path, str).entry(
        doc="waveform table to use instead of the analytic shape"
    )


@dataclass
class Optimize(Section):
    """Krotov optimization."""

    lambda_a: Optional[float] = MaybeEntry(float).entry(
        doc="inverse step size, chosen from the first update if empty",
        check=lambda lam: lam is None or lam > 0,
    )
    update_edge: float = entry(
        val=0.0,
        doc="edge of the update shape",
        unit="ns",
        from_toml=NS,
        check=_non_negative,
    )
    constrain: bool = switch_opt(False, None, "clip and filter after each iteration")
    e_max: float = entry(
        val=46.0,
        doc="amplitude limit",
        unit="mV/cm",
        from_toml=MV_PER_CM,
        check=_positive,
    )
    cutoff: float = entry(
        val=460.0,
        doc="spectral cutoff of the sigma components",
        unit="MHz",
        from_toml=MHZ,
        check=_positive,
    )
    threshold: float = entry(val=1e-2, doc="target J_T", check=_positive)
    max_iter: int = entry(val=10000, doc="iteration cap", from_toml=non_negative_int)
    domain: str = choice_entry("quadrature", krotov.DOMAINS, "control parametrization")
    checkpoint_every: int = entry(
        val=0,
        doc="stride of the stored backward states, 0 stores them all",
        from_toml=non_negative_int,
    )
    checkpoint_file: Optional[Path] = MaybeEntry(Path, str).entry(
        doc="checkpoint written after each iteration, optimize.npz in out if empty"
    )
    resume: bool = switch_opt(False, None, "resume from the checkpoint if present")
    require_converged: bool = switch_opt(
        False, None, "exit with status 4 when the threshold is not reached"
    )


@dataclass
class Noise(Section):
    """Robustness tests."""

    noise_levels: Tuple[float, ...] = TupleEntry(float).entry(
        default=(0.005, 0.01, 0.02, 0.05, 0.1, 0.15, 0.2),
        doc="relative RF amplitude noise levels",
        check=lambda levels: all(0 <= f <= 1 for f in levels),
    )
    realizations: int = entry(
        val=1000, doc="noise realizations per level", from_toml=positive_int
    )
    dc_offsets: Tuple[float, ...] = TupleEntry(UV_PER_CM).entry(
        default=(50.0, 150.0), doc="static field offsets", unit="uV/cm"
    )
    awg_period: float = entry(
        val=0.83,
        doc="generator sampling period",
        unit="ns",
        from_toml=NS,
        check=_positive,
    )
    coarse_mode: str = choice_entry("linear", ("linear", "hold"), "resampling mode")


@dataclass
class Qsl(Section):
    """Duration sweep of unconstrained optimizations."""

    durations: Tuple[float, ...] = TupleEntry(NS).entry(
        default=(65.0, 55.0, 45.0, 35.0, 25.0, 20.0, 15.0, 10.0),
        doc="pulse durations",
        unit="ns",
    )
    guess_edges: Tuple[float, ...] = TupleEntry(NS).entry(
        default=(2.0, 5.0), doc="edges of the flat-top guesses", unit="ns"
    )
    guess_amplitudes: Tuple[float, ...] = TupleEntry(MV_PER_CM).entry(
        default=(30.0, 45.0), doc="amplitudes of the flat-top guesses", unit="mV/cm"
    )
    qsl_max_iter: int = entry(
        val=20000, doc="iteration cap per optimization", from_toml=positive_int
    )
    min_valid_duration: float = entry(
        val=7.0,
        doc="shortest duration the model is trusted for",
        unit="ns",
        from_toml=NS,
        check=_non_negative,
    )


@dataclass
class Output(Section):
    """Output and execution settings."""

    config: Optional[Path] = MaybeEntry(Path, str).entry(
        doc="config file", in_file=False, cli_short="c"
    )
    out: Path = path_entry("circulon_out", "output directory")
    seed: int = entry(val=0, doc="root seed of the noise draws", from_toml=seed_parser)
    threads: int = entry(
        val=0, doc="parallel workers, 0 uses every core", from_toml=non_negative_int
    )
    log_level: str = choice_entry("INFO", LOG_LEVELS, "logging level")
    record_every: int = entry(
        val=50,
        doc="record stride of trajectories in time steps",
        from_toml=positive_int,
    )

    @property
    def n_jobs(self) -> int:
        return self.threads or os.cpu_count() or 1


@dataclass
class Config(ConfigBase):
    """Full configuration of a circulon run."""

    atom: Atom
    states: States
    pulse: PulseSection
    optimize: Optimize
    noise: Noise
    qsl: Qsl
    output: Output

    def check_(self) -> None:
        """Check options that constrain each other.

        Raises:
            ConfigError: with the offending values in laboratory units.
        """
        pconf = self.pulse
        if pconf.pulse_file is None:
            if pconf.dt > pconf.t_stop:
                raise ConfigError(
                    f"pulse: time step {pconf.dt} ns exceeds the duration "
                    f"{pconf.t_stop} ns"
                )
            if 2 * pconf.edge > pconf.t_stop:
                raise ConfigError(
                    f"pulse: edges of {pconf.edge} ns do not fit in a pulse of "
                    f"{pconf.t_stop} ns"
                )
            if pconf.shape == "two-step":
                if 2 * pconf.edge + pconf.ramp > pconf.t_stop:
                    raise ConfigError(
                        f"pulse: edges of {pconf.edge} ns and ramp of {pconf.ramp} "
                        f"ns do not fit in a pulse of {pconf.t_stop} ns"
                    )
                if pconf.amplitude > pconf.amplitude_high:
                    raise ConfigError(
                        f"pulse: first step {pconf.amplitude} mV/cm exceeds the "
                        f"second one {pconf.amplitude_high} mV/cm"
                    )
        if pconf.pulse_file is None and self.noise.awg_period < pconf.dt:
            raise ConfigError(
                f"noise: generator period {self.noise.awg_period} ns is shorter "
                f"than the time step {pconf.dt} ns"
            )
        labels = (self.states.initial, self.states.target)
        for label in labels if self.atom.model_file is None else ():
            if label is not None and label >= self.atom.n:
                raise ConfigError(
                    f"states: no pivotal state |{label}> in the n={self.atom.n} "
                    "manifold"
                )

