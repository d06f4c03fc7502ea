"""First-order Krotov optimization of the RF field.

Controls live on the intervals of the propagation grid. In the `lab` domain
they are E_x and E_y; in the `quadrature` domain they are the real and
imaginary parts of the complex envelope S relative to the carrier, with
E_x + i E_y = S exp(i omega t) at the interval midpoint.

The functional is J = J_T + int g dt with J_T = 1 - |<target|psi(T)>|^2
and g = (lambda / S(t)) Delta E(t)^2, the reference field being the
previous iterate.
"""

from __future__ import annotations

import logging
import math
import typing
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pulse as pulse_mod
from .error import (
    GridMismatchError,
    OptimizationError,
    PropagationError,
    StagnationWarning,
)
from .propagator import ChebychevPropagator, evolve, interval_fields
from .tables import comment_header

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

    from .pulse import Waveform
    from .stark import BasisModel

logger = logging.getLogger(__name__)

DOMAINS = ("lab", "quadrature")


@dataclass(frozen=True)
class OptimizationConfig:
    """Settings of a Krotov optimization.

    Attributes:
        lambda_a: inverse step size, chosen from the guess if None.
        update_edge: edge duration of the update shape S(t).
        constrain: whether to clip and filter the field after each
            iteration.
        e_max: amplitude limit of the clipping.
        cutoff: angular frequency limit of the spectral filter.
        threshold: J_T below which the optimization stops.
        max_iter: iteration cap.
        domain: `lab` or `quadrature`.
        omega: carrier angular frequency.
        checkpoint_every: stride of the stored backward states, 0 to keep
            all of them.
        checkpoint_file: npz file saved after each iteration, if any.
        resume: restart from `checkpoint_file` if it exists.
        stagnation_limit: consecutive increases of J_T under the
            constraints before giving up.
        auto_lambda_fraction: peak of the first update relative to the
            guess peak when lambda_a is chosen automatically.
        max_growth: largest factor by which one iteration may multiply the
            peak field before the optimization is aborted.
    """

    lambda_a: Optional[float] = None
    update_edge: float = 0.0
    constrain: bool = False
    e_max: Optional[float] = None
    cutoff: Optional[float] = None
    threshold: float = 1e-2
    max_iter: int = 10000
    domain: str = "quadrature"
    omega: float = 0.0
    checkpoint_every: int = 0
    checkpoint_file: Optional[Path] = None
    resume: bool = False
    stagnation_limit: int = 50
    auto_lambda_fraction: float = 0.05
    max_growth: float = 1e3

    def __post_init__(self) -> None:
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown optimization domain {self.domain!r}")
        if self.lambda_a is not None and not self.lambda_a > 0:
            raise ValueError("lambda_a should be positive")
        if self.domain == "quadrature" and not self.omega > 0:
            raise ValueError("quadrature domain needs a positive carrier")


@dataclass(frozen=True)
class IterationRecord:
    """Figures of one iteration.

    Attributes:
        iteration: iteration index, 0 for the guess.
        j_t: final-time cost.
        g_int: running cost int g dt.
        peak: largest |E| of the field.
        bandwidth: width of the sigma+ band holding 99% of its energy.
        bandwidth_minus: same for the sigma- band.
    """

    iteration: int
    j_t: float
    g_int: float
    peak: float
    bandwidth: float
    bandwidth_minus: float = 0.0

    @property
    def j_total(self) -> float:
        return self.j_t + self.g_int


@dataclass(eq=False)
class OptimizationRun:
    """Outcome of an optimization.

    Attributes:
        iterations: records in iteration order, the guess first.
        waveform: optimized field.
        status: `converged`, `max_iter`, `stagnated` or `stopped`.
        lambda_a: inverse step size used.
    """

    iterations: List[IterationRecord]
    waveform: Waveform
    status: str
    lambda_a: float

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def n_iter(self) -> int:
        return self.iterations[-1].iteration

    @property
    def j_t(self) -> float:
        return self.iterations[-1].j_t


@dataclass(eq=False)
class _Controls:
    """Interval controls and their mapping onto lab-frame fields."""

    values: NDArray[np.float64]
    dt: float
    domain: str
    omega: float

    @property
    def t_mid(self) -> NDArray[np.float64]:
        return (np.arange(self.values.shape[1]) + 0.5) * self.dt

    def lab(self) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        if self.domain == "lab":
            return self.values[0], self.values[1]
        carrier = np.exp(1j * self.omega * self.t_mid)
        lab = (self.values[0] + 1j * self.values[1]) * carrier
        return lab.real, lab.imag

    def set_lab(self, ex: NDArray[np.float64], ey: NDArray[np.float64]) -> None:
        if self.domain == "lab":
            self.values = np.array([ex, ey])
            return
        env = (ex + 1j * ey) * np.exp(-1j * self.omega * self.t_mid)
        self.values = np.array([env.real, env.imag])

    def lab_at(self, i: int, u0: float, u1: float) -> Tuple[float, float]:
        if self.domain == "lab":
            return u0, u1
        phase = self.omega * (i + 0.5) * self.dt
        cos, sin = math.cos(phase), math.sin(phase)
        return u0 * cos - u1 * sin, u0 * sin + u1 * cos

    def mu(self, model: BasisModel, i: int) -> Tuple[NDArray[Any], NDArray[Any]]:
        """Derivatives of H with respect to both controls on interval i."""
        if self.domain == "lab":
            return -model.dx, -model.dy
        phase = self.omega * (i + 0.5) * self.dt
        cos, sin = math.cos(phase), math.sin(phase)
        return (
            -(cos * model.dx + sin * model.dy),
            -(-sin * model.dx + cos * model.dy),
        )

    def waveform(self) -> Waveform:
        """Field sampled on the grid points."""
        ex, ey = self.lab()
        return pulse_mod.Waveform(self.dt, _onto_grid(ex), _onto_grid(ey))


def _onto_grid(values: NDArray[np.float64]) -> NDArray[np.float64]:
    """Grid samples whose interval averages are exactly the interval values.

    The samples g solve (g[i] + g[i+1]) / 2 = values[i], which leaves the
    alternating component (-1)^i free; it is set to minimize the sum of the
    squared differences of consecutive samples.
    """
    sign = np.ones(values.size)
    sign[1::2] = -1.0
    offsets = np.zeros(values.size + 1)
    offsets[1:] = -2 * np.cumsum(sign * values)
    alternating = offsets - 0.5 * np.mean(offsets[1:] + offsets[:-1])
    grid_sign = np.ones(values.size + 1)
    grid_sign[1::2] = -1.0
    return grid_sign * alternating


def controls_from_waveform(w: Waveform, domain: str, omega: float) -> _Controls:
    ex, ey = interval_fields(w)
    ctrl = _Controls(np.zeros((2, ex.size)), w.dt, domain, omega)
    ctrl.set_lab(ex, ey)
    return ctrl


def update_shape(n_intervals: int, dt: float, edge: float) -> NDArray[np.float64]:
    """Update shape S(t) at the interval midpoints."""
    t_stop = n_intervals * dt
    return pulse_mod.shape_function((np.arange(n_intervals) + 0.5) * dt, t_stop, edge)


def evaluate_functional(
    psi_t: NDArray[np.complex128],
    target: NDArray[np.complex128],
    controls: NDArray[np.float64],
    reference: NDArray[np.float64],
    shape: NDArray[np.float64],
    lambda_a: float,
    dt: float,
) -> Tuple[float, float, float]:
    """Final-time cost, running cost and their sum.

    Args:
        psi_t: propagated final state.
        target: target state.
        controls: interval controls, shape (2, N-1).
        reference: reference controls, the previous iterate.
        shape: update shape on the intervals.
        lambda_a: inverse step size.
        dt: time step.
    """
    if controls.shape != reference.shape or controls.shape[1] != shape.size:
        raise GridMismatchError("controls, reference and shape grids differ")
    j_t = 1.0 - abs(np.vdot(target, psi_t)) ** 2
    active = shape > 0
    delta = controls[:, active] - reference[:, active]
    g_int = float(lambda_a * np.sum(delta**2 / shape[active]) * dt)
    return j_t, g_int, j_t + g_int


def _backward_checkpoints(
    model: BasisModel,
    prop: ChebychevPropagator,
    chi_t: NDArray[np.complex128],
    ex: NDArray[np.float64],
    ey: NDArray[np.float64],
    stride: int,
) -> Dict[int, NDArray[np.complex128]]:
    """Backward states at the block ends of the forward sweep."""
    steps = ex.size
    marks = {steps: chi_t}
    chi = chi_t
    for lo in reversed(range(stride, steps, stride)):
        hi = min(lo + stride, steps)
        chi = evolve(
            model, chi, ex[lo:hi], ey[lo:hi], prop.dt, backward=True, propagator=prop
        )
        marks[lo] = chi
    return marks


def _chi_block(
    model: BasisModel,
    prop: ChebychevPropagator,
    marks: Mapping[int, NDArray[np.complex128]],
    ex: NDArray[np.float64],
    ey: NDArray[np.float64],
    lo: int,
    hi: int,
) -> NDArray[np.complex128]:
    """Backward states on grid points lo ... hi, from the one stored at hi."""
    return evolve(
        model,
        marks[hi],
        ex[lo:hi],
        ey[lo:hi],
        prop.dt,
        backward=True,
        propagator=prop,
        keep=True,
    )


def _final_state(
    model: BasisModel,
    prop: ChebychevPropagator,
    psi0: NDArray[np.complex128],
    ctrl: _Controls,
) -> NDArray[np.complex128]:
    ex, ey = ctrl.lab()
    return evolve(model, psi0, ex, ey, ctrl.dt, propagator=prop)


def _krotov_pass(
    model: BasisModel,
    prop: ChebychevPropagator,
    psi0: NDArray[np.complex128],
    target: NDArray[np.complex128],
    psi_t: NDArray[np.complex128],
    ctrl: _Controls,
    shape: NDArray[np.float64],
    lambda_a: float,
    stride: int,
) -> Tuple[NDArray[np.float64], NDArray[np.complex128]]:
    """One sequential update of the controls.

    Returns:
        the updated controls and the final state they produce.
    """
    tau = complex(np.vdot(target, psi_t))
    scale = abs(tau)
    chi_t = target * (tau / scale) if scale > 0 else target.astype(np.complex128)
    ex_old, ey_old = ctrl.lab()
    steps = ex_old.size
    stride = stride if 0 < stride < steps else steps
    marks = _backward_checkpoints(model, prop, chi_t, ex_old, ey_old, stride)

    new = ctrl.values.copy()
    psi = psi0.astype(np.complex128)
    for lo in range(0, steps, stride):
        hi = min(lo + stride, steps)
        chis = _chi_block(model, prop, marks, ex_old, ey_old, lo, hi)
        for i in range(lo, hi):
            if shape[i] > 0:
                chi = chis[i - lo]
                mu0, mu1 = ctrl.mu(model, i)
                factor = scale * shape[i] / lambda_a
                new[0, i] += factor * np.vdot(chi, mu0 @ psi).imag
                new[1, i] += factor * np.vdot(chi, mu1 @ psi).imag
            ex_i, ey_i = ctrl.lab_at(i, new[0, i], new[1, i])
            psi = prop.step(psi, ex_i, ey_i)
    return new, psi


def gradient(
    model: BasisModel,
    psi0: NDArray[np.complex128],
    target: NDArray[np.complex128],
    guess: Waveform,
    domain: str = "lab",
    omega: float = 0.0,
) -> NDArray[np.float64]:
    """Gradient of J_T with respect to the interval controls.

    The derivative of each short-time propagator is evaluated with the
    trapezoidal rule over its interval.
    """
    ctrl = controls_from_waveform(guess, domain, omega)
    ex, ey = ctrl.lab()
    prop = ChebychevPropagator(
        model, guess.dt, float(np.abs(ex).max()), float(np.abs(ey).max())
    )
    psis = evolve(model, psi0, ex, ey, guess.dt, propagator=prop, keep=True)
    tau = complex(np.vdot(target, psis[-1]))
    chis = evolve(
        model,
        target * tau,
        ex,
        ey,
        guess.dt,
        backward=True,
        propagator=prop,
        keep=True,
    )
    grad = np.empty_like(ctrl.values)
    for i in range(ex.size):
        for k, mu in enumerate(ctrl.mu(model, i)):
            before = np.vdot(chis[i], mu @ psis[i])
            after = np.vdot(chis[i + 1], mu @ psis[i + 1])
            grad[k, i] = -guess.dt * (before + after).imag
    return grad


def auto_lambda(
    model: BasisModel,
    psi0: NDArray[np.complex128],
    target: NDArray[np.complex128],
    guess: Waveform,
    cfg: OptimizationConfig,
) -> float:
    """Inverse step size giving a first update peak at a fraction of the guess peak.

    When the guess barely couples the initial state to the target, the
    gradient vanishes and this scaling would give an arbitrarily small
    lambda_a. The result is therefore bounded below by the value at which no
    update can exceed the guess peak, whatever the states.
    """
    guess_peak = pulse_mod.peak_amplitude(guess)
    if guess_peak == 0:
        raise ValueError("cannot scale lambda_a on a zero guess")
    floor = coupling_norm(model) / guess_peak
    grad = gradient(model, psi0, target, guess, cfg.domain, cfg.omega)
    ctrl = controls_from_waveform(guess, cfg.domain, cfg.omega)
    shape = update_shape(ctrl.values.shape[1], guess.dt, cfg.update_edge)
    # the Krotov update is -grad / (2 dt) to first order
    raw = np.hypot(grad[0], grad[1]) * shape / (2 * guess.dt)
    lambda_a = float(raw.max()) / (cfg.auto_lambda_fraction * guess_peak)
    if lambda_a < floor:
        logger.warning(
            "guess barely reaches the target, lambda_a raised from %.3e to %.3e",
            lambda_a,
            floor,
        )
        return floor
    return lambda_a


def coupling_norm(model: BasisModel) -> float:
    """Bound on the norm of the derivative of H with respect to any control."""
    rows = np.sum(np.abs(model.dx), axis=1) + np.sum(np.abs(model.dy), axis=1)
    return float(rows.max())


def _project(ctrl: _Controls, cfg: OptimizationConfig) -> None:
    ex, ey = ctrl.lab()
    wave = pulse_mod.Waveform(ctrl.dt, ex, ey)
    if cfg.e_max is not None:
        wave = pulse_mod.clip_amplitude(wave, cfg.e_max)
    if cfg.cutoff is not None:
        wave = pulse_mod.filter_spectrum(wave, cfg.cutoff)
    ctrl.set_lab(wave.ex, wave.ey)


def _record(
    iteration: int,
    j_t: float,
    g_int: float,
    ctrl: _Controls,
    omega: float,
) -> IterationRecord:
    ex, ey = ctrl.lab()
    wave = pulse_mod.Waveform(ctrl.dt, ex, ey)
    widths = pulse_mod.bandwidth(wave, omega) if omega > 0 else {}
    peak = pulse_mod.peak_amplitude(wave)
    return IterationRecord(
        iteration,
        float(j_t),
        g_int,
        peak,
        widths.get("sigma+", 0.0),
        widths.get("sigma-", 0.0),
    )


def save_checkpoint(
    path: Union[str, PathLike],
    iterations: Sequence[IterationRecord],
    controls: NDArray[np.float64],
    lambda_a: float,
    domain: str,
    dt: float,
) -> None:
    """Store the optimization state so that it can be resumed."""
    log = np.array(
        [
            (r.iteration, r.j_t, r.g_int, r.peak, r.bandwidth, r.bandwidth_minus)
            for r in iterations
        ]
    )
    np.savez(
        Path(path),
        log=log,
        controls=controls,
        lambda_a=lambda_a,
        domain=np.array(domain),
        dt=dt,
    )


def load_checkpoint(
    path: Union[str, PathLike],
) -> Tuple[List[IterationRecord], NDArray[np.float64], float, str, float]:
    with np.load(Path(path), allow_pickle=False) as data:
        iterations = [
            IterationRecord(int(row[0]), *map(float, row[1:])) for row in data["log"]
        ]
        return (
            iterations,
            data["controls"].copy(),
            float(data["lambda_a"]),
            str(data["domain"]),
            float(data["dt"]),
        )


def _peak(values: NDArray[np.float64], ctrl: _Controls) -> float:
    ex, ey = _Controls(values, ctrl.dt, ctrl.domain, ctrl.omega).lab()
    return float(np.hypot(ex, ey).max())


def _abort(
    iteration: int,
    reason: str,
    iterations: Sequence[IterationRecord],
    ctrl: _Controls,
    lambda_a: float,
    ckpt: Optional[Path],
) -> OptimizationError:
    """Dump the last sound state next to the checkpoint and build the error."""
    dump = None
    if ckpt is not None:
        dump = str(Path(ckpt).with_suffix(".dump.npz"))
        save_checkpoint(dump, iterations, ctrl.values, lambda_a, ctrl.domain, ctrl.dt)
    return OptimizationError(iteration, dump, reason)


def optimize(
    model: BasisModel,
    psi0: NDArray[np.complex128],
    target: NDArray[np.complex128],
    guess: Waveform,
    cfg: OptimizationConfig,
    on_iteration: Optional[Callable[[IterationRecord], Optional[bool]]] = None,
) -> OptimizationRun:
    """Optimize a field to bring psi0 onto target.

    Args:
        model: basis and couplings.
        psi0: initial state.
        target: target state.
        guess: initial field.
        cfg: optimization settings.
        on_iteration: called with each new record; returning True stops the
            optimization.

    Returns:
        the iteration log and the optimized field.
    """
    if psi0.shape != (model.dim,) or target.shape != (model.dim,):
        raise GridMismatchError("states do not match the basis")
    ctrl = controls_from_waveform(guess, cfg.domain, cfg.omega)
    steps = ctrl.values.shape[1]
    shape = update_shape(steps, guess.dt, cfg.update_edge)
    iterations: List[IterationRecord] = []
    lambda_a = cfg.lambda_a

    ckpt = cfg.checkpoint_file
    if cfg.resume and ckpt is not None and Path(ckpt).is_file():
        iterations, values, lambda_a, domain, dt = load_checkpoint(ckpt)
        if domain != cfg.domain or values.shape != ctrl.values.shape or dt != guess.dt:
            raise GridMismatchError(f"checkpoint {ckpt} does not match the guess")
        ctrl.values = values
        logger.info("resuming from iteration %d", iterations[-1].iteration)
    if lambda_a is None:
        lambda_a = auto_lambda(model, psi0, target, guess, cfg)
        logger.info("lambda_a set to %.6e", lambda_a)

    ex, ey = ctrl.lab()
    peak = float(np.hypot(ex, ey).max())
    prop = ChebychevPropagator(model, guess.dt, peak, peak)
    psi_t = _final_state(model, prop, psi0, ctrl)
    j_t = 1.0 - abs(np.vdot(target, psi_t)) ** 2
    if not iterations:
        iterations.append(_record(0, j_t, 0.0, ctrl, cfg.omega))
    logger.info("iteration %d: J_T = %.6e", iterations[-1].iteration, j_t)

    status = "converged" if j_t <= cfg.threshold else "max_iter"
    increases = 0
    while status != "converged" and iterations[-1].iteration < cfg.max_iter:
        iteration = iterations[-1].iteration + 1
        reference = ctrl.values
        try:
            values, psi_new = _krotov_pass(
                model,
                prop,
                psi0,
                target,
                psi_t,
                ctrl,
                shape,
                lambda_a,
                cfg.checkpoint_every,
            )
        except PropagationError as err:
            raise _abort(
                iteration,
                f"propagation failed, {err}",
                iterations,
                ctrl,
                lambda_a,
                ckpt,
            ) from err
        if not np.all(np.isfinite(values)):
            raise _abort(
                iteration, "non-finite pulse update", iterations, ctrl, lambda_a, ckpt
            )
        old_peak = _peak(reference, ctrl)
        growth = _peak(values, ctrl) / old_peak if old_peak > 0 else 0.0
        if growth > cfg.max_growth:
            raise _abort(
                iteration,
                f"update multiplied the peak field by {growth:.3g}",
                iterations,
                ctrl,
                lambda_a,
                ckpt,
            )
        _, g_int, _ = evaluate_functional(
            psi_new, target, values, reference, shape, lambda_a, guess.dt
        )
        ctrl.values = values
        if cfg.constrain:
            _project(ctrl, cfg)
            psi_new = _final_state(model, prop, psi0, ctrl)
        new_j_t = 1.0 - abs(np.vdot(target, psi_new)) ** 2
        increases = increases + 1 if new_j_t > j_t else 0
        j_t, psi_t = new_j_t, psi_new
        record = _record(iteration, j_t, g_int, ctrl, cfg.omega)
        iterations.append(record)
        logger.info(
            "iteration %d: J_T = %.6e, g = %.3e, peak = %.4e",
            iteration,
            j_t,
            g_int,
            record.peak,
        )
        if ckpt is not None:
            save_checkpoint(
                ckpt, iterations, ctrl.values, lambda_a, cfg.domain, guess.dt
            )
        if j_t <= cfg.threshold:
            status = "converged"
        elif cfg.constrain and increases >= cfg.stagnation_limit:
            warnings.warn(
                f"J_T increased {increases} iterations in a row under the constraints",
                StagnationWarning,
            )
            status = "stagnated"
            break
        if on_iteration is not None and on_iteration(record):
            status = "stopped" if status != "converged" else status
            break

    logger.info("optimization %s after %d iterations", status, iterations[-1].iteration)
    waveform = ctrl.waveform() if iterations[-1].iteration > 0 else guess
    return OptimizationRun(iterations, waveform, status, lambda_a)


def write_iteration_log(
    path: Union[str, PathLike],
    run: OptimizationRun,
    meta: Optional[Mapping[str, Any]] = None,
) -> None:
    """Write (iteration, J_T, int g, peak, bandwidths) rows in atomic units."""
    header: Dict[str, Any] = dict(meta or {})
    header.update(
        kind="iterations",
        status=run.status,
        lambda_a=run.lambda_a,
        columns=[
            "iteration",
            "j_t",
            "g_int",
            "peak",
            "bandwidth_sigma_plus",
            "bandwidth_sigma_minus",
        ],
    )
    head = comment_header(header)
    rows = np.array(
        [
            (r.iteration, r.j_t, r.g_int, r.peak, r.bandwidth, r.bandwidth_minus)
            for r in run.iterations
        ]
    )
    with Path(path).open("w") as fid:
        print(head, file=fid)
        np.savetxt(fid, rows, fmt=["%d"] + 5 * ["%.10e"])
