"""Duration sweeps towards the speed limit and the validity bounds of the model."""

from __future__ import annotations

import logging
import typing
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import atom, krotov, pulse, units
from .stark import build_stark_block
from .tables import comment_header

if typing.TYPE_CHECKING:
    from os import PathLike
    from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

    from numpy.typing import NDArray

    from .atom import QuantumDefectTable
    from .stark import BasisModel

logger = logging.getLogger(__name__)


def manifold_edges(n: int, e_dc: float, e_rf: float = 0.0) -> Tuple[float, float]:
    """Lowest and highest energies of the n manifold in the linear Stark regime."""
    spread = 1.5 * n * (n - 1) * (e_dc + e_rf)
    center = -0.5 / n**2
    return center - spread, center + spread


def critical_rf_field(n: int, e_dc: float) -> float:
    """RF amplitude at which the n and n+1 manifolds touch.

    Solves E_n^+ = E_(n+1)^- for the field added to e_dc.
    """
    if n < 2:
        raise ValueError("n should be at least 2")
    gap = 0.5 / n**2 - 0.5 / (n + 1) ** 2
    return gap / (3 * n**2) - e_dc


def ionization_threshold(n: int) -> float:
    """Classical static-field ionization threshold 1/(9 n^4)."""
    if n < 1:
        raise ValueError("n should be at least 1")
    return 1 / (9 * n**4)


def crossing_check(
    n: int,
    e_field: float,
    table: Optional[QuantumDefectTable] = None,
    step: float = atom.NUMEROV_STEP,
) -> Tuple[float, bool]:
    """Separation of the n and n+1 manifolds in the m = 0 block.

    Args:
        n: lower manifold.
        e_field: total field along z.
        table: species, hydrogen by default.
        step: Numerov step.

    Returns:
        the energy gap between the n-th and (n+1)-th lowest levels and
        whether it has shrunk below the diagonal-ladder spacing 3 n E.
    """
    table = table or atom.hydrogen()
    block = build_stark_block([n, n + 1], 0, e_field, table, step)
    gap = float(block.energies[n] - block.energies[n - 1])
    return gap, gap < 3 * n * e_field


@dataclass(frozen=True)
class SweepPoint:
    """Best optimization at one pulse duration.

    Attributes:
        t_stop: pulse duration.
        edge: edge duration of the best guess.
        amplitude: amplitude of the best guess.
        n_iter: iterations of the best optimization.
        j_t: final J_T.
        peak: largest field amplitude of the optimized pulse.
        bandwidth: sigma+ bandwidth of the optimized pulse.
        converged: whether J_T reached the threshold.
        n: working manifold.
        e_dc: static field.
        min_valid_duration: shortest duration the model is trusted for.
    """

    t_stop: float
    edge: float
    amplitude: float
    n_iter: int
    j_t: float
    peak: float
    bandwidth: float
    converged: bool
    n: int
    e_dc: float
    min_valid_duration: float = 0.0

    @property
    def below_crossing(self) -> bool:
        return self.peak <= critical_rf_field(self.n, self.e_dc)

    @property
    def below_ionization(self) -> bool:
        return self.e_dc + self.peak < ionization_threshold(self.n)

    @property
    def valid(self) -> bool:
        return (
            self.below_crossing
            and self.below_ionization
            and self.t_stop >= self.min_valid_duration
        )


def validity_flags(point: SweepPoint) -> Dict[str, bool]:
    return dict(
        below_crossing=point.below_crossing,
        below_ionization=point.below_ionization,
        valid=point.valid,
    )


def _run_guess(
    model: BasisModel,
    psi0: NDArray[np.complex128],
    target: NDArray[np.complex128],
    t_stop: float,
    edge: float,
    amplitude: float,
    omega: float,
    dt: float,
    cfg: krotov.OptimizationConfig,
) -> Tuple[float, float, krotov.OptimizationRun]:
    guess = pulse.make_flat_top(amplitude, omega, t_stop, edge, dt)
    run = krotov.optimize(model, psi0, target, guess, replace(cfg, update_edge=edge))
    return edge, amplitude, run


def qsl_sweep(
    model: BasisModel,
    psi0: NDArray[np.complex128],
    target: NDArray[np.complex128],
    durations: Sequence[float],
    guess_edges: Sequence[float],
    guess_amplitudes: Sequence[float],
    omega: float,
    dt: float,
    cfg: krotov.OptimizationConfig,
    min_valid_duration: float = 0.0,
    n_jobs: int = 1,
) -> List[SweepPoint]:
    """Unconstrained optimizations over a range of pulse durations.

    Every duration is optimized from each flat-top guess whose edges fit in
    the pulse, and the converged run with the fewest iterations is kept,
    ties going to the lower peak field. When no guess converges the run
    with the lowest J_T is kept and the point is marked unconverged.
    """
    cfg = replace(cfg, constrain=False)
    jobs = [
        (t_stop, edge, amp)
        for t_stop in durations
        for edge in guess_edges
        if 2 * edge <= t_stop
        for amp in guess_amplitudes
    ]
    outcomes = Parallel(n_jobs=n_jobs)(
        delayed(_run_guess)(model, psi0, target, t_stop, edge, amp, omega, dt, cfg)
        for t_stop, edge, amp in jobs
    )
    points = []
    for t_stop in durations:
        runs = [
            out for (t, _, _), out in zip(jobs, outcomes) if t == t_stop
        ]
        if not runs:
            logger.warning("no guess fits in a %.4e pulse", t_stop)
            continue
        converged = [r for r in runs if r[2].converged]
        if converged:
            edge, amp, best = min(
                converged, key=lambda r: (r[2].n_iter, r[2].iterations[-1].peak)
            )
        else:
            edge, amp, best = min(runs, key=lambda r: r[2].j_t)
        last = best.iterations[-1]
        point = SweepPoint(
            t_stop=t_stop,
            edge=edge,
            amplitude=amp,
            n_iter=best.n_iter,
            j_t=best.j_t,
            peak=last.peak,
            bandwidth=last.bandwidth,
            converged=best.converged,
            n=model.n,
            e_dc=model.e_dc,
            min_valid_duration=min_valid_duration,
        )
        logger.info(
            "t_stop %.2f ns: %d iterations, peak %.3f V/cm, valid %s",
            units.au_to_ns(t_stop),
            point.n_iter,
            units.au_to_v_per_cm(point.peak),
            point.valid,
        )
        points.append(point)
    return points


def write_sweep_table(
    path: Union[str, PathLike],
    points: Sequence[SweepPoint],
    meta: Optional[Mapping[str, Any]] = None,
) -> None:
    """Write one row per duration in laboratory units.

    Columns are t_stop (ns), iterations, J_T, peak (V/cm), bandwidth (MHz),
    converged, below_crossing, below_ionization, valid.
    """
    header: Dict[str, Any] = dict(meta or {})
    header.update(
        kind="qsl",
        columns=[
            "t_stop_ns",
            "n_iter",
            "j_t",
            "peak_v_per_cm",
            "bandwidth_mhz",
            "converged",
            "below_crossing",
            "below_ionization",
            "valid",
        ],
    )
    head = comment_header(header)
    with Path(path).open("w") as fid:
        print(head, file=fid)
        for pt in points:
            flags = validity_flags(pt)
            print(
                f"{units.au_to_ns(pt.t_stop):.6g} {pt.n_iter:d} {pt.j_t:.6e} "
                f"{units.au_to_v_per_cm(pt.peak):.6g} "
                f"{units.au_to_mhz(pt.bandwidth):.6g} "
                f"{int(pt.converged)} {int(flags['below_crossing'])} "
                f"{int(flags['below_ionization'])} {int(flags['valid'])}",
                file=fid,
            )
