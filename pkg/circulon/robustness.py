"""Fidelity of a fixed pulse under experimental imperfections."""

from __future__ import annotations

import logging
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from numpy.random import Generator, Philox, SeedSequence

from . import pulse as pulse_mod
from .propagator import evolve, fidelity, interval_fields
from .tables import comment_header

if typing.TYPE_CHECKING:
    from os import PathLike
    from typing import Any, Callable, List, Mapping, Optional, Sequence, Tuple, Union

    from numpy.typing import NDArray

    from .pulse import Waveform
    from .stark import BasisModel

logger = logging.getLogger(__name__)

NOISE_KINDS = ("rf-amplitude", "dc-offset", "coarse-grain")


@dataclass(frozen=True)
class NoiseSpec:
    """Description of a perturbation.

    Attributes:
        kind: `rf-amplitude`, `dc-offset` or `coarse-grain`.
        level: relative noise level f in [0, 1], DC offset, or sampling
            period, depending on the kind.
        realizations: number of random draws.
        seed: root seed of the draws.
    """

    kind: str
    level: float
    realizations: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "rf-amplitude" and not 0.0 <= self.level <= 1.0:
            raise ValueError(f"noise level {self.level} outside [0, 1]")
        if self.realizations < 1:
            raise ValueError("at least one realization is needed")


def noise_statistics(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and sample standard deviation with compensated sums."""
    count = len(values)
    mean = math.fsum(values) / count
    if count < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (count - 1)
    return mean, math.sqrt(var)


@dataclass(frozen=True, eq=False)
class NoiseResult:
    """Fidelities of all realizations of a perturbation.

    Attributes:
        spec: the perturbation.
        fidelities: fidelity of each realization.
    """

    spec: NoiseSpec
    fidelities: NDArray[np.float64] = field(repr=False)

    @property
    def mean(self) -> float:
        return noise_statistics(list(self.fidelities))[0]

    @property
    def std(self) -> float:
        return noise_statistics(list(self.fidelities))[1]


def half_period_segments(
    times: NDArray[np.float64], omega: float
) -> Tuple[NDArray[np.int_], NDArray[np.int_]]:
    """Half-period index of each time for the x and y carriers.

    Segments of x are delimited by the zeros of cos(omega t), those of y by
    the zeros of sin(omega t).
    """
    phase = omega * times
    seg_x = np.floor((phase + np.pi / 2) / np.pi).astype(int)
    seg_y = np.floor(phase / np.pi).astype(int)
    return seg_x, seg_y


def noise_generator(seed: int, level_index: int, realization: int) -> Generator:
    """Independent counter-based stream of one realization."""
    return Generator(Philox(SeedSequence(seed, spawn_key=(level_index, realization))))


def draw_noise_factors(
    rng: Generator, segments: NDArray[np.int_]
) -> NDArray[np.float64]:
    """Uniform draw in [-1, 1] per segment, spread over the segment times."""
    first = segments.min()
    draws = rng.uniform(-1.0, 1.0, segments.max() - first + 1)
    return draws[segments - first]


def noisy_waveform(w: Waveform, omega: float, level: float, rng: Generator) -> Waveform:
    """Field with each component scaled by 1 + R f, R redrawn every half period."""
    seg_x, seg_y = half_period_segments(w.times, omega)
    rx = draw_noise_factors(rng, seg_x)
    ry = draw_noise_factors(rng, seg_y)
    return pulse_mod.Waveform(w.dt, w.ex * (1 + level * rx), w.ey * (1 + level * ry))


def final_fidelity(
    model: BasisModel,
    psi0: NDArray[np.complex128],
    target: NDArray[np.complex128],
    w: Waveform,
) -> float:
    ex, ey = interval_fields(w)
    return fidelity(evolve(model, psi0, ex, ey, w.dt), target)


def _realization(
    model: BasisModel,
    psi0: NDArray[np.complex128],
    target: NDArray[np.complex128],
    w: Waveform,
    omega: float,
    level: float,
    rng: Generator,
) -> float:
    return final_fidelity(model, psi0, target, noisy_waveform(w, omega, level, rng))


def rf_noise_sweep(
    model: BasisModel,
    psi0: NDArray[np.complex128],
    target: NDArray[np.complex128],
    w: Waveform,
    omega: float,
    levels: Sequence[float],
    realizations: int = 1000,
    seed: int = 0,
    n_jobs: int = 1,
) -> List[NoiseResult]:
    """Fidelity statistics under RF amplitude noise, one result per level.

    Args:
        model: basis and couplings.
        psi0: initial state.
        target: target state.
        w: field to perturb.
        omega: carrier angular frequency setting the half periods.
        levels: relative noise levels f.
        realizations: draws per level.
        seed: root seed.
        n_jobs: joblib workers.
    """
    results = []
    for index, level in enumerate(levels):
        spec = NoiseSpec("rf-amplitude", level, realizations, seed)
        fids = Parallel(n_jobs=n_jobs)(
            delayed(_realization)(
                model, psi0, target, w, omega, level, noise_generator(seed, index, r)
            )
            for r in range(realizations)
        )
        result = NoiseResult(spec, np.array(fids))
        logger.info(
            "noise level %.4f: mean fidelity %.5f, std %.5f",
            level,
            result.mean,
            result.std,
        )
        results.append(result)
    return results


@dataclass(frozen=True)
class DcOffsetResult:
    """Fidelities at E_DC - offset/2 and E_DC + offset/2.

    Attributes:
        offset: total field offset.
        nominal: fidelity at the nominal field.
        lower: fidelity at the lower field.
        upper: fidelity at the upper field.
    """

    offset: float
    nominal: float
    lower: float
    upper: float

    @property
    def loss(self) -> float:
        return max(abs(self.nominal - self.lower), abs(self.nominal - self.upper))


def dc_offset_test(
    builder: Callable[[float], BasisModel],
    e_dc: float,
    initial_m: int,
    target_m: int,
    w: Waveform,
    offsets: Sequence[float],
    n_jobs: int = 1,
) -> List[DcOffsetResult]:
    """Fidelity of a fixed pulse for shifted static fields.

    The carrier of the pulse is kept, so the ladder goes off resonance.

    Args:
        builder: builds the model at a given static field.
        e_dc: nominal static field.
        initial_m: pivotal label of the initial state.
        target_m: pivotal label of the target state.
        w: field to test.
        offsets: total field offsets, each tested at +-offset/2.
        n_jobs: joblib workers.
    """

    def run(field_dc: float) -> float:
        model = builder(field_dc)
        return final_fidelity(model, model.state(initial_m), model.state(target_m), w)

    fields = [e_dc] + [e_dc + sign * off / 2 for off in offsets for sign in (-1, 1)]
    fids = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(run)(f) for f in fields)
    nominal = fids[0]
    results = [
        DcOffsetResult(off, nominal, fids[1 + 2 * k], fids[2 + 2 * k])
        for k, off in enumerate(offsets)
    ]
    for res in results:
        logger.info("DC offset %.3e: fidelity loss %.3e", res.offset, res.loss)
    return results


def coarse_grain_test(
    model: BasisModel,
    psi0: NDArray[np.complex128],
    target: NDArray[np.complex128],
    w: Waveform,
    period: float,
    domain: str = "quadrature",
    omega: Optional[float] = None,
    mode: str = "linear",
) -> float:
    """Fidelity of a pulse after sampling at the generator period.

    In the `lab` domain the field components are sampled directly. In the
    `quadrature` domain the envelope relative to the carrier is sampled and
    then modulated back.
    """
    if domain == "lab":
        coarse = pulse_mod.coarse_grain(w, period, mode)
    elif domain == "quadrature":
        if omega is None:
            raise ValueError("quadrature coarse graining needs the carrier")
        env = pulse_mod.demodulate(w, omega)
        coarse = pulse_mod.remodulate(pulse_mod.coarse_grain(env, period, mode))
    else:
        raise ValueError(f"unknown domain {domain!r}")
    return final_fidelity(model, psi0, target, coarse)


def write_noise_table(
    path: Union[str, PathLike],
    results: Sequence[NoiseResult],
    meta: Optional[Mapping[str, Any]] = None,
) -> None:
    """Write (f, mean, std, N, seed) rows."""
    header = dict(meta or {})
    header.update(
        kind="noise", columns=["f_noise", "mean", "std", "realizations", "seed"]
    )
    head = comment_header(header)
    with Path(path).open("w") as fid:
        print(head, file=fid)
        for res in results:
            print(
                f"{res.spec.level:.6g} {res.mean:.10f} {res.std:.10f} "
                f"{res.spec.realizations:d} {res.spec.seed:d}",
                file=fid,
            )
