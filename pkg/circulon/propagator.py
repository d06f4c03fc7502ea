"""Time-dependent Schrödinger equation in the Stark eigenbasis.

Each interval [t_i, t_i+1] of a waveform grid uses the field averaged over
its two end samples, and exp(-i H dt) is applied through a Chebychev
expansion.
"""

from __future__ import annotations

import logging
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import jv

from . import units
from .error import GridMismatchError, PropagationError, ScsDirectionError
from .spin import fit_scs, spin_projection
from .tables import comment_header

if typing.TYPE_CHECKING:
    from os import PathLike
    from typing import Any, Mapping, Optional, Tuple, Union

    from numpy.typing import NDArray

    from .pulse import Waveform
    from .stark import BasisModel

logger = logging.getLogger(__name__)

CHEBY_TAIL = 1e-15
NORM_DRIFT_LIMIT = 1e-6
MAX_RADIUS_DT = 1e4
"""Largest spectral half-width times time step a single step may span."""


def interval_fields(w: Waveform) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Field of each grid interval, the mean of its end samples."""
    return 0.5 * (w.ex[1:] + w.ex[:-1]), 0.5 * (w.ey[1:] + w.ey[:-1])


def chebychev_coefficients(
    radius_dt: float, backward: bool = False
) -> NDArray[np.complex128]:
    """Expansion coefficients of exp(-+i x radius_dt) on [-1, 1].

    Raises:
        PropagationError: when radius_dt is not finite or exceeds
            MAX_RADIUS_DT.
    """
    if not radius_dt <= MAX_RADIUS_DT:
        raise PropagationError(
            "field too strong for the time step",
            dict(radius_dt=radius_dt, limit=MAX_RADIUS_DT),
        )
    kmax = int(radius_dt + 10 * radius_dt ** (1 / 3) + 30)
    bessel = jv(np.arange(kmax), radius_dt)
    keep = np.nonzero(np.abs(bessel) > CHEBY_TAIL)[0]
    order = int(keep[-1]) + 1 if keep.size else 1
    unit = 1j if backward else -1j
    coefs = 2 * unit ** np.arange(order) * bessel[:order]
    coefs[0] /= 2
    return coefs.astype(np.complex128)


class ChebychevPropagator:
    """Short-time propagator of a model under bounded fields.

    Spectral bounds come from Gershgorin discs of H0 - E_x D_x - E_y D_y for
    |E_x| and |E_y| up to the current peak values, and are widened when a
    larger field shows up.

    Args:
        model: basis and couplings.
        dt: time step.
        peak_x: largest |E_x| expected.
        peak_y: largest |E_y| expected.
    """

    def __init__(
        self, model: BasisModel, dt: float, peak_x: float = 0.0, peak_y: float = 0.0
    ):
        self.model = model
        self.dt = dt
        self._rows_x = np.sum(np.abs(model.dx), axis=1)
        self._rows_y = np.sum(np.abs(model.dy), axis=1)
        self.peak_x = -1.0
        self.peak_y = -1.0
        self.ensure(peak_x, peak_y)

    def ensure(self, peak_x: float, peak_y: float) -> None:
        """Refresh the spectral bounds if the fields exceed the current ones."""
        if peak_x <= self.peak_x and peak_y <= self.peak_y:
            return
        self.peak_x = max(peak_x, self.peak_x, 0.0)
        self.peak_y = max(peak_y, self.peak_y, 0.0)
        radius = self.peak_x * self._rows_x + self.peak_y * self._rows_y
        e_min = float(np.min(self.model.h0 - radius))
        e_max = float(np.max(self.model.h0 + radius))
        self.center = 0.5 * (e_max + e_min)
        self.half_width = max(0.5 * (e_max - e_min), 1e-300)
        self._forward = chebychev_coefficients(self.half_width * self.dt)
        self._backward = chebychev_coefficients(
            self.half_width * self.dt, backward=True
        )
        logger.debug(
            "Chebychev bounds [%.6e, %.6e], order %d", e_min, e_max, self._forward.size
        )

    @property
    def order(self) -> int:
        return self._forward.size

    def step(
        self,
        psi: NDArray[np.complex128],
        ex: float,
        ey: float,
        backward: bool = False,
    ) -> NDArray[np.complex128]:
        """Apply exp(-i H dt), or exp(+i H dt) if backward."""
        self.ensure(abs(ex), abs(ey))
        ham = self.model.hamiltonian(ex, ey)
        ham[np.diag_indices(self.model.dim)] -= self.center
        ham /= self.half_width
        coefs = self._backward if backward else self._forward
        prev = psi
        result = coefs[0] * prev
        if coefs.size > 1:
            cur = ham @ psi
            result = result + coefs[1] * cur
            for coef in coefs[2:]:
                prev, cur = cur, 2 * (ham @ cur) - prev
                result += coef * cur
        sign = 1 if backward else -1
        return np.exp(sign * 1j * self.center * self.dt) * result


def _check_inputs(model: BasisModel, psi0: NDArray[np.complex128]) -> None:
    if psi0.shape != (model.dim,):
        raise GridMismatchError(
            f"state of shape {psi0.shape} for a basis of {model.dim}"
        )


def evolve(
    model: BasisModel,
    psi0: NDArray[np.complex128],
    ex: NDArray[np.float64],
    ey: NDArray[np.float64],
    dt: float,
    backward: bool = False,
    propagator: Optional[ChebychevPropagator] = None,
    keep: bool = False,
) -> NDArray[np.complex128]:
    """Propagate through interval fields.

    Forward evolution goes from the first interval to the last one. Backward
    evolution applies exp(+i H dt) from the last interval to the first one.

    Returns:
        the final state, or all states on the grid (first axis is the grid
        index, in time order) when `keep` is set.
    """
    _check_inputs(model, psi0)
    if ex.size != ey.size:
        raise GridMismatchError("field components of different lengths")
    prop = propagator or ChebychevPropagator(
        model,
        dt,
        float(np.max(np.abs(ex), initial=0.0)),
        float(np.max(np.abs(ey), initial=0.0)),
    )
    steps = ex.size
    order = range(steps - 1, -1, -1) if backward else range(steps)
    psi = psi0.astype(np.complex128)
    norm0 = float(np.vdot(psi, psi).real)
    states = np.empty((steps + 1, model.dim), dtype=np.complex128) if keep else None
    if states is not None:
        states[steps if backward else 0] = psi
    for i in order:
        psi = prop.step(psi, ex[i], ey[i], backward)
        drift = abs(float(np.vdot(psi, psi).real) - norm0)
        if not drift <= NORM_DRIFT_LIMIT:
            raise PropagationError(
                "norm not conserved",
                dict(step=i, drift=drift, order=prop.order, half_width=prop.half_width),
            )
        if states is not None:
            states[i if backward else i + 1] = psi
    return states if states is not None else psi


def propagate_states(
    model: BasisModel,
    psi0: NDArray[np.complex128],
    w: Waveform,
    backward: bool = False,
) -> NDArray[np.complex128]:
    """States at every grid point of a waveform.

    In backward mode psi0 is the state at the end of the pulse.
    """
    ex, ey = interval_fields(w)
    return evolve(model, psi0, ex, ey, w.dt, backward=backward, keep=True)


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Time series recorded along a propagation.

    Attributes:
        times: record times.
        populations: populations of the pivotal states |m>, m = 0 ... n-1.
        mean_m: mean m over the pivotal states.
        sigma_m: standard deviation of m over the pivotal states.
        bloch: normalized mean spin (X, Y, Z).
        scs_overlap: overlap with the closest spin coherent state.
        scs_theta: polar angle of the closest spin coherent state.
        scs_phi: azimuth of the closest spin coherent state.
        leakage: population outside the pivotal states.
        frame_omega: frequency of the frame of the spin quantities.
    """

    times: NDArray[np.float64]
    populations: NDArray[np.float64] = field(repr=False)
    mean_m: NDArray[np.float64] = field(repr=False)
    sigma_m: NDArray[np.float64] = field(repr=False)
    bloch: NDArray[np.float64] = field(repr=False)
    scs_overlap: NDArray[np.float64] = field(repr=False)
    scs_theta: NDArray[np.float64] = field(repr=False)
    scs_phi: NDArray[np.float64] = field(repr=False)
    leakage: NDArray[np.float64] = field(repr=False)
    frame_omega: float = 0.0


def _record_row(
    psi: NDArray[np.complex128], model: BasisModel, t: float, omega: float
) -> Tuple[Any, ...]:
    proj = spin_projection(psi, model)
    pops = np.abs(proj.amplitudes) ** 2
    weight = pops.sum()
    mvals = np.arange(pops.size)
    if weight > 0:
        mean = float(np.sum(mvals * pops) / weight)
        sigma = math.sqrt(max(0.0, float(np.sum(mvals**2 * pops) / weight) - mean**2))
    else:
        mean = sigma = math.nan
    proj = proj.rotated(omega, t)
    bloch = proj.expectation()
    try:
        fit = fit_scs(proj)
        scs = (fit.overlap, fit.theta, fit.phi)
    except ScsDirectionError:
        scs = (math.nan, math.nan, math.nan)
    return pops, mean, sigma, bloch, scs, proj.leakage


def propagate(
    model: BasisModel,
    psi0: NDArray[np.complex128],
    w: Waveform,
    record_every: Optional[int] = None,
    omega_frame: float = 0.0,
) -> Tuple[NDArray[np.complex128], TrajectoryRecord]:
    """Propagate a state under a waveform and record the ladder dynamics.

    Args:
        model: basis and couplings.
        psi0: initial state.
        w: control field.
        record_every: record stride in grid steps, only the ends by default.
        omega_frame: frequency of the rotating frame of the spin quantities,
            zero for the lab frame.

    Returns:
        the final state and the records.
    """
    _check_inputs(model, psi0)
    ex, ey = interval_fields(w)
    steps = ex.size
    stride = record_every or steps
    prop = ChebychevPropagator(
        model, w.dt, float(np.max(np.abs(ex))), float(np.max(np.abs(ey)))
    )
    psi = psi0.astype(np.complex128)
    rows = [(0.0, _record_row(psi, model, 0.0, omega_frame))]
    for start in range(0, steps, stride):
        stop = min(start + stride, steps)
        psi = evolve(model, psi, ex[start:stop], ey[start:stop], w.dt, propagator=prop)
        t = stop * w.dt
        rows.append((t, _record_row(psi, model, t, omega_frame)))
    times = np.array([t for t, _ in rows])
    record = TrajectoryRecord(
        times=times,
        populations=np.array([r[0] for _, r in rows]),
        mean_m=np.array([r[1] for _, r in rows]),
        sigma_m=np.array([r[2] for _, r in rows]),
        bloch=np.array([r[3] for _, r in rows]),
        scs_overlap=np.array([r[4][0] for _, r in rows]),
        scs_theta=np.array([r[4][1] for _, r in rows]),
        scs_phi=np.array([r[4][2] for _, r in rows]),
        leakage=np.array([r[5] for _, r in rows]),
        frame_omega=omega_frame,
    )
    logger.info(
        "propagated %d steps (Chebychev order %d), final <m> = %.3f",
        steps,
        prop.order,
        record.mean_m[-1],
    )
    return psi, record


def fidelity(psi: NDArray[np.complex128], target: NDArray[np.complex128]) -> float:
    """Squared overlap |<psi|target>|^2."""
    if psi.shape != target.shape:
        raise GridMismatchError(f"states of shapes {psi.shape} and {target.shape}")
    return float(abs(np.vdot(psi, target)) ** 2)


def write_trajectory(
    path: Union[str, PathLike],
    record: TrajectoryRecord,
    meta: Optional[Mapping[str, Any]] = None,
) -> None:
    """Write the records as a text table.

    Columns are t (ns), <m>, sigma[m], X, Y, Z, SCS overlap, SCS theta,
    SCS phi, leakage, then the population of each pivotal state.
    """
    npiv = record.populations.shape[1]
    header = dict(meta or {})
    header.update(
        kind="trajectory",
        frame_omega_mhz=units.au_to_mhz(record.frame_omega),
        columns=[
            "t_ns",
            "mean_m",
            "sigma_m",
            "X",
            "Y",
            "Z",
            "scs_overlap",
            "scs_theta",
            "scs_phi",
            "leakage",
        ]
        + [f"p{m}" for m in range(npiv)],
    )
    table = np.column_stack(
        [
            units.au_to_ns(record.times),
            record.mean_m,
            record.sigma_m,
            record.bloch,
            record.scs_overlap,
            record.scs_theta,
            record.scs_phi,
            record.leakage,
            record.populations,
        ]
    )
    head = comment_header(header)
    with Path(path).open("w") as fid:
        print(head, file=fid)
        np.savetxt(fid, table, fmt="%.10g")
