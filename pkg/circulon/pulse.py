"""Sampled RF control fields.

Fields are stored in atomic units on a uniform grid starting at t = 0. A
sigma+ field E_x = A cos(w t), E_y = A sin(w t) raises m by one unit.
"""

from __future__ import annotations

import logging
import math
import typing
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from scipy import fft
from scipy.integrate import trapezoid

from . import units
from .error import AliasingWarning, ConfigError, GridMismatchError
from .tables import comment_header, read_comment_header

if typing.TYPE_CHECKING:
    from os import PathLike
    from typing import (
        Any,
        Callable,
        Dict,
        List,
        Mapping,
        Optional,
        Sequence,
        Tuple,
        Union,
    )

    from numpy.typing import NDArray

logger = logging.getLogger(__name__)

POLARIZATIONS = ("sigma+", "sigma-", "x", "y")


def _check_samples(dt: float, *arrays: NDArray[Any]) -> None:
    if not dt > 0:
        raise GridMismatchError(f"time step should be positive, got {dt}")
    sizes = {arr.size for arr in arrays}
    if len(sizes) != 1:
        raise GridMismatchError(f"sample arrays of different sizes {sorted(sizes)}")
    if min(sizes) < 2:
        raise GridMismatchError("a pulse needs at least two samples")
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise GridMismatchError("non-finite pulse samples")


@dataclass(frozen=True, eq=False)
class Waveform:
    """Lab-frame field components on a uniform grid.

    Attributes:
        dt: time step.
        ex: samples of E_x.
        ey: samples of E_y.
    """

    dt: float
    ex: NDArray[np.float64] = field(repr=False)
    ey: NDArray[np.float64] = field(repr=False)

    def __post_init__(self) -> None:
        _check_samples(self.dt, self.ex, self.ey)

    @property
    def size(self) -> int:
        return self.ex.size

    @property
    def t_stop(self) -> float:
        return (self.size - 1) * self.dt

    @property
    def times(self) -> NDArray[np.float64]:
        return np.arange(self.size) * self.dt

    @property
    def magnitude(self) -> NDArray[np.float64]:
        return np.hypot(self.ex, self.ey)

    @property
    def complex_field(self) -> NDArray[np.complex128]:
        """E_x + i E_y."""
        return self.ex + 1j * self.ey

    @staticmethod
    def from_complex(dt: float, values: NDArray[np.complex128]) -> Waveform:
        return Waveform(
            dt, np.ascontiguousarray(values.real), np.ascontiguousarray(values.imag)
        )

    def reversed(self) -> Waveform:
        """Time-mirrored field."""
        return Waveform(self.dt, self.ex[::-1].copy(), self.ey[::-1].copy())

    def scaled(self, factor: Union[float, NDArray[np.float64]]) -> Waveform:
        return Waveform(self.dt, self.ex * factor, self.ey * factor)


@dataclass(frozen=True, eq=False)
class Envelope:
    """Complex envelope S(t) of a field relative to a carrier.

    The field is Re and Im of S(t) exp(i omega t) for its x and y parts.

    Attributes:
        dt: time step.
        samples: complex envelope samples.
        omega: carrier angular frequency.
    """

    dt: float
    samples: NDArray[np.complex128] = field(repr=False)
    omega: float = 0.0

    def __post_init__(self) -> None:
        _check_samples(self.dt, self.samples)

    @property
    def size(self) -> int:
        return self.samples.size

    @property
    def t_stop(self) -> float:
        return (self.size - 1) * self.dt

    @property
    def times(self) -> NDArray[np.float64]:
        return np.arange(self.size) * self.dt

    @property
    def quadratures(self) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        """First and second quadratures, Re S and Im S."""
        return self.samples.real, self.samples.imag


def _grid(t_stop: float, dt: float) -> Tuple[float, NDArray[np.float64]]:
    """Uniform grid ending exactly at t_stop, with a step close to dt."""
    if not t_stop > 0:
        raise ValueError(f"pulse duration should be positive, got {t_stop}")
    steps = max(1, int(round(t_stop / dt)))
    step = t_stop / steps
    return step, np.arange(steps + 1) * step


def shape_function(
    times: NDArray[np.float64], t_stop: float, edge: float
) -> NDArray[np.float64]:
    """Flat-top shape with sine-squared edges, zero at both ends."""
    shape = np.ones_like(times)
    if edge <= 0:
        return shape
    rise = times < edge
    shape[rise] = np.sin(np.pi * times[rise] / (2 * edge)) ** 2
    fall = times > t_stop - edge
    shape[fall] = np.sin(np.pi * (t_stop - times[fall]) / (2 * edge)) ** 2
    return shape


def _carrier(
    envelope: NDArray[np.float64],
    times: NDArray[np.float64],
    omega: float,
    polarization: str,
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    phase = omega * times
    if polarization == "sigma+":
        return envelope * np.cos(phase), envelope * np.sin(phase)
    if polarization == "sigma-":
        return envelope * np.cos(phase), -envelope * np.sin(phase)
    if polarization == "x":
        return envelope * np.cos(phase), np.zeros_like(times)
    if polarization == "y":
        return np.zeros_like(times), envelope * np.cos(phase)
    raise ConfigError(f"unknown polarization {polarization!r}")


def make_flat_top(
    amplitude: float,
    omega: float,
    t_stop: float,
    edge: float,
    dt: float,
    polarization: str = "sigma+",
) -> Waveform:
    """Flat-top pulse with sine-squared edges.

    Args:
        amplitude: plateau amplitude.
        omega: carrier angular frequency.
        t_stop: pulse duration.
        edge: duration of each edge.
        dt: target time step, adjusted so that the grid ends at t_stop.
        polarization: `sigma+`, `sigma-`, `x` or `y`.
    """
    if 2 * edge > t_stop * (1 + 1e-12):
        raise ValueError(f"edges of {edge} do not fit in a pulse of {t_stop}")
    step, times = _grid(t_stop, dt)
    env = amplitude * shape_function(times, t_stop, edge)
    ex, ey = _carrier(env, times, omega, polarization)
    return Waveform(step, ex, ey)


def two_step_profile(
    times: NDArray[np.float64],
    amp_low: float,
    amp_high: float,
    t_step: float,
    ramp: float,
) -> NDArray[np.float64]:
    """Amplitude stepping from amp_low to amp_high with a sine-squared ramp."""
    profile = np.full_like(times, amp_high)
    profile[times < t_step] = amp_low
    if ramp > 0:
        on_ramp = (times >= t_step) & (times < t_step + ramp)
        profile[on_ramp] = amp_low + (amp_high - amp_low) * np.sin(
            np.pi * (times[on_ramp] - t_step) / (2 * ramp)
        ) ** 2
    return profile


def make_two_step(
    amp_low: float,
    amp_high: float,
    t_step: float,
    ramp: float,
    omega: float,
    t_stop: float,
    edge: float,
    dt: float,
    polarization: str = "sigma+",
) -> Waveform:
    """Flat-top pulse whose plateau steps up from amp_low to amp_high."""
    if 2 * edge + ramp > t_stop * (1 + 1e-12):
        raise ValueError("edges and ramp do not fit in the pulse")
    if amp_low > amp_high:
        raise ValueError("first step should not exceed the second one")
    step, times = _grid(t_stop, dt)
    env = two_step_profile(times, amp_low, amp_high, t_step, ramp)
    env *= shape_function(times, t_stop, edge)
    ex, ey = _carrier(env, times, omega, polarization)
    return Waveform(step, ex, ey)


def two_step_energy(
    amp_low: float,
    amp_high: float,
    t_step: float,
    ramp: float,
    t_stop: float,
    edge: float,
) -> float:
    """Closed-form integral of |E|^2 for a two-step pulse.

    The step has to start after the rising edge and the ramp has to end
    before the falling one.
    """
    if t_step < edge or t_step + ramp > t_stop - edge:
        raise ValueError("step overlaps an edge")
    delta = amp_high - amp_low
    return (
        amp_low**2 * 3 * edge / 8
        + amp_low**2 * (t_step - edge)
        + amp_low**2 * ramp
        + amp_low * delta * ramp
        + delta**2 * 3 * ramp / 8
        + amp_high**2 * (t_stop - edge - t_step - ramp)
        + amp_high**2 * 3 * edge / 8
    )


def _angular_freqs(size: int, dt: float) -> NDArray[np.float64]:
    return 2 * np.pi * fft.fftfreq(size, dt)


def demodulate(w: Waveform, omega: float) -> Envelope:
    """Complex envelope of a field relative to a carrier.

    The 2 omega image is removed by a zero-phase spectral mask at omega.

    Warns:
        AliasingWarning: when more than 1e-3 of the envelope energy lies
            above omega / 2.
    """
    if not omega > 0:
        raise ValueError("carrier frequency should be positive")
    raw = w.complex_field * np.exp(-1j * omega * w.times)
    spec = fft.fft(raw)
    freqs = np.abs(_angular_freqs(w.size, w.dt))
    spec[freqs >= omega] = 0.0
    power = np.abs(spec) ** 2
    total = power.sum()
    if total > 0:
        high = power[freqs > omega / 2].sum() / total
        if high > 1e-3:
            warnings.warn(
                f"{high:.2e} of the envelope energy lies above half the carrier",
                AliasingWarning,
            )
    return Envelope(w.dt, fft.ifft(spec), omega)


def remodulate(env: Envelope) -> Waveform:
    """Lab-frame field of an envelope."""
    carrier = np.exp(1j * env.omega * env.times)
    return Waveform.from_complex(env.dt, env.samples * carrier)


def _resample(
    values: NDArray[Any], dt: float, period: float, mode: str
) -> NDArray[Any]:
    times = np.arange(values.size) * dt
    count = int(math.floor(times[-1] / period + 1e-9)) + 1
    coarse_t = np.arange(count) * period
    if mode == "linear":
        if np.iscomplexobj(values):
            coarse = np.interp(coarse_t, times, values.real) + 1j * np.interp(
                coarse_t, times, values.imag
            )
            return np.interp(times, coarse_t, coarse.real) + 1j * np.interp(
                times, coarse_t, coarse.imag
            )
        return np.interp(times, coarse_t, np.interp(coarse_t, times, values))
    if mode == "hold":
        fine_idx = np.minimum(np.rint(coarse_t / dt).astype(int), values.size - 1)
        coarse = values[fine_idx]
        held = np.minimum(np.floor(times / period + 1e-9).astype(int), count - 1)
        return coarse[held]
    raise ConfigError(f"unknown coarse-graining mode {mode!r}")


def coarse_grain(
    pulse: Union[Waveform, Envelope], period: float, mode: str = "linear"
) -> Union[Waveform, Envelope]:
    """Sample a pulse at a coarser period and bring it back to its grid.

    Args:
        pulse: lab-frame waveform or complex envelope.
        period: sampling period of the generator.
        mode: `linear` interpolation or piecewise-constant `hold`.
    """
    if period < pulse.dt * (1 - 1e-9):
        raise ValueError("coarse period shorter than the pulse step")
    if abs(period - pulse.dt) <= 1e-9 * pulse.dt:
        return pulse
    if isinstance(pulse, Envelope):
        samples = _resample(pulse.samples, pulse.dt, period, mode)
        return Envelope(pulse.dt, samples, pulse.omega)
    return Waveform(
        pulse.dt,
        _resample(pulse.ex, pulse.dt, period, mode),
        _resample(pulse.ey, pulse.dt, period, mode),
    )


def clip_amplitude(w: Waveform, e_max: float) -> Waveform:
    """Rescale |E(t)| to at most e_max, keeping the field direction."""
    if not e_max > 0:
        raise ValueError("amplitude limit should be positive")
    mag = w.magnitude
    over = mag > e_max
    if not over.any():
        return w
    scale = np.ones_like(mag)
    scale[over] = e_max / mag[over]
    return w.scaled(scale)


def filter_spectrum(w: Waveform, cutoff: float) -> Waveform:
    """Remove sigma+ and sigma- components beyond an angular cutoff.

    Positive frequencies of E_x + i E_y are sigma+ components and negative
    ones sigma- components.
    """
    if not cutoff > 0:
        raise ValueError("cutoff should be positive")
    spec = fft.fft(w.complex_field)
    spec[np.abs(_angular_freqs(w.size, w.dt)) > cutoff] = 0.0
    return Waveform.from_complex(w.dt, fft.ifft(spec))


def pulse_energy(w: Waveform) -> float:
    """Integral of |E|^2 over the pulse."""
    return float(trapezoid(w.ex**2 + w.ey**2, dx=w.dt))


def peak_amplitude(w: Waveform) -> float:
    return float(w.magnitude.max())


def bandwidth(w: Waveform, omega: float, fraction: float = 0.99) -> Dict[str, float]:
    """Full width of the band around +-omega holding `fraction` of each component.

    sigma+ components are centred on +omega and sigma- ones on -omega.
    Components carrying less than 1% of the pulse energy get a zero width.
    """
    spec = np.abs(fft.fft(w.complex_field)) ** 2
    freqs = _angular_freqs(w.size, w.dt)
    total = spec.sum()
    widths = {}
    for name, sel, center in (
        ("sigma+", freqs >= 0, omega),
        ("sigma-", freqs < 0, -omega),
    ):
        power = spec[sel]
        if total == 0 or power.sum() < 1e-2 * total:
            widths[name] = 0.0
            continue
        dist = np.abs(freqs[sel] - center)
        order = np.argsort(dist, kind="stable")
        cumul = np.cumsum(power[order])
        pos = int(np.searchsorted(cumul, fraction * cumul[-1]))
        widths[name] = 2 * float(dist[order][min(pos, order.size - 1)])
    return widths


def rabi_frequency(n: int, amplitude: float) -> float:
    """Spin rotation frequency 3 n E on the lowest diagonal."""
    return 3 * n * amplitude


def pi_pulse_duration(n: int, amplitude: float) -> float:
    """Plateau duration for a rotation by pi of the effective spin."""
    return math.pi / rabi_frequency(n, amplitude)


def scan_duration(
    make: Callable[[float], Waveform],
    durations: Sequence[float],
    score: Callable[[Waveform], float],
    n_jobs: int = 1,
) -> List[Tuple[float, float]]:
    """Score a family of pulses over a set of durations.

    Args:
        make: builds the pulse of a given duration.
        durations: durations to scan.
        score: figure of merit of a pulse, typically a fidelity.
        n_jobs: joblib workers.

    Returns:
        (duration, score) pairs in the order of `durations`.
    """
    scores = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(score)(make(t_stop)) for t_stop in durations
    )
    return list(zip(durations, scores))


def best_duration(scan: Sequence[Tuple[float, float]]) -> Tuple[float, float]:
    """Entry of a duration scan with the highest score."""
    return max(scan, key=lambda item: item[1])


def _write_table(
    path: Union[str, PathLike],
    header: Mapping[str, Any],
    columns: Sequence[NDArray[np.float64]],
) -> None:
    head = comment_header(header)
    rows = np.column_stack(columns)
    with Path(path).open("w") as fid:
        print(head, file=fid)
        np.savetxt(fid, rows, fmt="%.17g")


def _read_table(
    path: Union[str, PathLike], kind: str
) -> Tuple[Dict[str, Any], NDArray[np.float64]]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"pulse file {path} not found")
    header = read_comment_header(path)
    if header.get("kind") != kind:
        raise ConfigError(f"{path} holds a {header.get('kind')!r}, expected {kind!r}")
    rows = np.loadtxt(path, comments="#", ndmin=2)
    return header, rows


def write_waveform(
    path: Union[str, PathLike],
    w: Waveform,
    lab_units: bool = False,
    meta: Optional[Mapping[str, Any]] = None,
) -> None:
    """Write a waveform as a header plus (t, E_x, E_y) rows.

    Atomic units round-trip bit for bit; `lab_units` writes ns and mV/cm.
    """
    header: Dict[str, Any] = dict(meta or {})
    header.update(kind="waveform", samples=w.size)
    if lab_units:
        header.update(units="ns mV/cm", dt=units.au_to_ns(w.dt))
        cols = [
            units.au_to_ns(w.times),
            units.au_to_mv_per_cm(w.ex),
            units.au_to_mv_per_cm(w.ey),
        ]
    else:
        header.update(units="au", dt=w.dt)
        cols = [w.times, w.ex, w.ey]
    _write_table(path, header, cols)


def read_waveform(path: Union[str, PathLike]) -> Waveform:
    header, rows = _read_table(path, "waveform")
    if rows.shape[1] != 3 or rows.shape[0] != header.get("samples", rows.shape[0]):
        raise GridMismatchError(f"{path}: malformed waveform table")
    if header.get("units") == "au":
        return Waveform(float(header["dt"]), rows[:, 1].copy(), rows[:, 2].copy())
    return Waveform(
        units.ns_to_au(float(header["dt"])),
        units.mv_per_cm_to_au(rows[:, 1]),
        units.mv_per_cm_to_au(rows[:, 2]),
    )


def write_envelope(
    path: Union[str, PathLike],
    env: Envelope,
    lab_units: bool = False,
    meta: Optional[Mapping[str, Any]] = None,
) -> None:
    """Write an envelope as a header plus (t, Re S, Im S) rows."""
    header: Dict[str, Any] = dict(meta or {})
    header.update(kind="envelope", samples=env.size)
    re_s, im_s = env.quadratures
    if lab_units:
        header.update(
            units="ns mV/cm MHz",
            dt=units.au_to_ns(env.dt),
            carrier=units.au_to_mhz(env.omega),
        )
        cols = [
            units.au_to_ns(env.times),
            units.au_to_mv_per_cm(re_s),
            units.au_to_mv_per_cm(im_s),
        ]
    else:
        header.update(units="au", dt=env.dt, carrier=env.omega)
        cols = [env.times, re_s, im_s]
    _write_table(path, header, cols)


def read_envelope(path: Union[str, PathLike]) -> Envelope:
    header, rows = _read_table(path, "envelope")
    if rows.shape[1] != 3 or rows.shape[0] != header.get("samples", rows.shape[0]):
        raise GridMismatchError(f"{path}: malformed envelope table")
    samples = rows[:, 1] + 1j * rows[:, 2]
    if header.get("units") == "au":
        return Envelope(float(header["dt"]), samples, float(header["carrier"]))
    return Envelope(
        units.ns_to_au(float(header["dt"])),
        units.mv_per_cm_to_au(samples),
        units.mhz_to_au(float(header["carrier"])),
    )
