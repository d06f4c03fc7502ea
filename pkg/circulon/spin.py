"""Spin-J picture of the lowest diagonal ladder.

The pivotal states |m>, m = 0 ... n-1, map onto spin states |J, M> with
J = (n - 1)/2 and M = m - J. The circular state is the north pole.
"""

from __future__ import annotations

import math
import typing
from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from .error import ScsDirectionError

if typing.TYPE_CHECKING:
    from typing import Optional, Tuple

    from numpy.typing import NDArray

    from .stark import BasisModel

LEAKAGE_FLAG = 0.5


def spin_matrices(
    j: float,
) -> Tuple[NDArray[np.complex128], NDArray[np.complex128], NDArray[np.complex128]]:
    """J_x, J_y and J_z in the basis M = -J ... J."""
    dim = int(round(2 * j)) + 1
    mvals = np.arange(dim) - j
    raising = np.zeros((dim, dim), dtype=np.complex128)
    for k in range(dim - 1):
        raising[k + 1, k] = math.sqrt((j - mvals[k]) * (j + mvals[k] + 1))
    jx = (raising + raising.T) / 2
    jy = (raising - raising.T) / 2j
    jz = np.diag(mvals).astype(np.complex128)
    return jx, jy, jz


@dataclass(frozen=True, eq=False)
class SpinProjection:
    """Amplitudes of a state on the spin states |J, M>.

    Attributes:
        j: spin J.
        amplitudes: c_M for M = -J ... J.
        leakage: population outside the pivotal states.
    """

    j: float
    amplitudes: NDArray[np.complex128]
    leakage: float = 0.0

    @property
    def weight(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    @property
    def m_values(self) -> NDArray[np.float64]:
        return np.arange(self.amplitudes.size) - self.j

    def rotated(self, omega: float, t: float) -> SpinProjection:
        """Projection seen in the frame rotating at omega about z."""
        phase = np.exp(1j * omega * t * self.m_values)
        return SpinProjection(self.j, self.amplitudes * phase, self.leakage)

    def renormalized(self) -> SpinProjection:
        weight = self.weight
        if weight == 0.0:
            raise ScsDirectionError("no population on the pivotal states")
        return SpinProjection(self.j, self.amplitudes / math.sqrt(weight), 0.0)

    def expectation(self) -> Tuple[float, float, float]:
        """(<J_x>, <J_y>, <J_z>) / J on the amplitudes as given."""
        j = self.j
        if j == 0:
            return 0.0, 0.0, 0.0
        amps = self.amplitudes
        mvals = self.m_values
        ladder = np.sqrt((j - mvals[:-1]) * (j + mvals[:-1] + 1))
        jplus = complex(np.sum(np.conj(amps[1:]) * amps[:-1] * ladder))
        jz = float(np.sum(mvals * np.abs(amps) ** 2))
        return jplus.real / j, jplus.imag / j, jz / j


@dataclass(frozen=True)
class BlochVector:
    """Normalized mean spin.

    Attributes:
        x: <J_x>/J.
        y: <J_y>/J.
        z: <J_z>/J.
        frame: "lab" or "rotating".
        leakage: population outside the pivotal states.
    """

    x: float
    y: float
    z: float
    frame: str = "lab"
    leakage: float = 0.0

    @property
    def length(self) -> float:
        return math.sqrt(self.x**2 + self.y**2 + self.z**2)

    @property
    def flagged(self) -> bool:
        """Whether leakage is too large for the spin picture to hold."""
        return self.leakage > LEAKAGE_FLAG


def spin_projection(psi: NDArray[np.complex128], model: BasisModel) -> SpinProjection:
    """Pivotal amplitudes in the standard spin phase convention.

    Missing pivotal states contribute a zero amplitude.
    """
    idx = model.pivot_indices()
    amps = np.where(idx >= 0, psi[np.maximum(idx, 0)], 0.0) * model.pivot_signs()
    norm = float(np.vdot(psi, psi).real)
    weight = float(np.sum(np.abs(amps) ** 2))
    leakage = max(0.0, norm - weight)
    return SpinProjection(model.spin_j, amps.astype(np.complex128), leakage)


def embed_spin_state(proj: SpinProjection, model: BasisModel) -> NDArray[np.complex128]:
    """State of the basis carrying the spin amplitudes on the pivotal states."""
    idx = model.pivot_indices()
    signs = model.pivot_signs()
    psi = np.zeros(model.dim, dtype=np.complex128)
    for m, k in enumerate(idx):
        if k >= 0:
            psi[k] = proj.amplitudes[m] * signs[m]
    return psi


def bloch_coordinates(
    psi: NDArray[np.complex128],
    model: BasisModel,
    frame: str = "lab",
    t: float = 0.0,
    omega: Optional[float] = None,
) -> BlochVector:
    """Bloch vector of a state, optionally in the frame rotating at omega.

    Args:
        psi: state in the model basis.
        model: basis with its pivotal states.
        frame: "lab" or "rotating".
        t: time in atomic units, for the rotating frame.
        omega: frame frequency, the ladder frequency 3/2 n E_DC by default.
    """
    proj = spin_projection(psi, model)
    if frame == "rotating":
        if omega is None:
            omega = 1.5 * model.n * model.e_dc
        proj = proj.rotated(omega, t)
    elif frame != "lab":
        raise ValueError(f"unknown frame {frame!r}")
    x, y, z = proj.expectation()
    return BlochVector(x, y, z, frame, proj.leakage)


def scs_state(theta: float, phi: float, j: float) -> SpinProjection:
    """Spin coherent state pointing at polar angle theta, azimuth phi.

    Amplitudes are sqrt(binom(2J, J+M)) cos^(J+M)(theta/2) sin^(J-M)(theta/2)
    exp(i (J-M) phi), so that the mean spin is along
    (sin theta cos phi, sin theta sin phi, cos theta).
    """
    if not 0.0 <= theta <= math.pi:
        raise ValueError(f"polar angle {theta} outside [0, pi]")
    dim = int(round(2 * j)) + 1
    mvals = np.arange(dim) - j
    up = j + mvals
    down = j - mvals
    amps = (
        np.sqrt(comb(2 * j, up))
        * np.cos(theta / 2) ** up
        * np.sin(theta / 2) ** down
        * np.exp(1j * down * phi)
    )
    return SpinProjection(j, amps.astype(np.complex128))


@dataclass(frozen=True)
class ScsFit:
    """Closest spin coherent state to a ladder state.

    Attributes:
        theta: polar angle of the mean spin.
        phi: azimuth of the mean spin.
        overlap: squared overlap with the full state.
        leakage: population outside the pivotal states.
    """

    theta: float
    phi: float
    overlap: float
    leakage: float

    @property
    def flagged(self) -> bool:
        return self.leakage > LEAKAGE_FLAG


def fit_scs(proj: SpinProjection) -> ScsFit:
    """Closest spin coherent state of a spin projection."""
    x, y, z = proj.renormalized().expectation()
    length = math.sqrt(x**2 + y**2 + z**2)
    if length < 1e-12:
        raise ScsDirectionError("mean spin vanishes")
    theta = math.acos(max(-1.0, min(1.0, z / length)))
    phi = math.atan2(y, x) % (2 * math.pi)
    ref = scs_state(theta, phi, proj.j)
    overlap = abs(np.vdot(ref.amplitudes, proj.amplitudes)) ** 2
    return ScsFit(theta, phi, float(overlap), proj.leakage)


def closest_scs(
    psi: NDArray[np.complex128],
    model: BasisModel,
    frame: str = "lab",
    t: float = 0.0,
    omega: Optional[float] = None,
) -> ScsFit:
    """Spin coherent state along the mean spin of a state.

    The direction comes from the renormalized spin projection and the
    overlap is taken against the full state.
    """
    proj = spin_projection(psi, model)
    if frame == "rotating":
        proj = proj.rotated(1.5 * model.n * model.e_dc if omega is None else omega, t)
    return fit_scs(proj)


def scs_overlap_exact(j: float, angle: float) -> float:
    """Squared overlap of two coherent states separated by an angle."""
    return math.cos(angle / 2) ** (4 * j)


def sphere_angle(theta_a: float, phi_a: float, theta_b: float, phi_b: float) -> float:
    """Angle between two directions on the unit sphere."""
    cos_angle = math.cos(theta_a) * math.cos(theta_b) + math.sin(theta_a) * math.sin(
        theta_b
    ) * math.cos(phi_a - phi_b)
    return math.acos(max(-1.0, min(1.0, cos_angle)))


def rotation_axis(
    rabi: float, phase: float, detuning: float
) -> Tuple[float, float, float]:
    """Rotation vector of the spin in the frame rotating with the carrier.

    A sigma+ field whose complex envelope E_x + i E_y relative to the
    carrier has argument `phase`, with Rabi frequency `rabi` and the ladder
    `detuning` above the carrier, turns the Bloch vector about this vector.
    The real quadrature rotates about -x, the imaginary one about -y.
    """
    return -rabi * math.cos(phase), -rabi * math.sin(phase), detuning
