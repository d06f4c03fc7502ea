"""Field-free Rydberg structure.

Energies follow the Rydberg formula with a Rydberg-Ritz quantum defect,
radial functions come from an inward Numerov integration of the Coulomb
problem at the defect-shifted energy, and angular factors are built from
Wigner 3j symbols. All quantities are in atomic units.
"""

from __future__ import annotations

import logging
import math
import typing
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
import toml
from scipy.integrate import simpson
from sympy.physics.wigner import wigner_3j

from .error import ConfigError, DomainError, MissingDefectError, NumerovError

if typing.TYPE_CHECKING:
    from os import PathLike
    from typing import Mapping, Optional, Tuple, Union

    from numpy.typing import NDArray

logger = logging.getLogger(__name__)

MAX_DEFECT_L = 7
"""Series with a larger orbital quantum number have no quantum defect."""

NUMEROV_STEP = 0.005
"""Default step of the uniform grid in x = sqrt(r)."""

POLARIZATIONS = ("x", "y", "z", "sigma+", "sigma-", "pi")


@dataclass(frozen=True)
class DefectSeries:
    """Rydberg-Ritz expansion of the quantum defect of one (l, j) series.

    Attributes:
        l: orbital quantum number.
        j: total angular momentum.
        delta: expansion coefficients (delta_0, delta_2, delta_4, ...).
        n_min: smallest principal quantum number the fit is valid for.
    """

    l: int
    j: float
    delta: Tuple[float, ...]
    n_min: int = 1

    def at(self, n: int) -> float:
        """Quantum defect for principal quantum number n."""
        d0 = self.delta[0]
        total = d0
        for k, coef in enumerate(self.delta[1:], start=1):
            total += coef / (n - d0) ** (2 * k)
        return total


@dataclass(frozen=True)
class QuantumDefectTable:
    """Quantum defects of an alkali species.

    Attributes:
        species: species label.
        series: one entry per tabulated (l, j) series.
        n_min: validity floor of the table as a whole.
        core_polarizability: dipole polarizability of the ionic core, sets
            the inner cutoff of radial integrations.
    """

    species: str
    series: Tuple[DefectSeries, ...]
    n_min: int = 1
    core_polarizability: float = 0.0

    def __post_init__(self) -> None:
        if self.n_min < 1:
            raise ConfigError(f"{self.species}: n_min should be at least 1")
        for ser in self.series:
            if not all(math.isfinite(d) for d in ser.delta):
                raise ConfigError(f"{self.species}: non-finite defect for l={ser.l}")
            if ser.n_min < 1:
                raise ConfigError(f"{self.species}: n_min should be at least 1")

    @staticmethod
    def from_dict(content: Mapping[str, object]) -> QuantumDefectTable:
        """Build a table from the content of a species file."""
        try:
            species = str(content["species"])
            n_min = int(content.get("n_min", 1))  # type: ignore
            alpha = float(content.get("core_polarizability", 0.0))  # type: ignore
            rows = content.get("defect", [])
            series = tuple(
                DefectSeries(
                    l=int(row["l"]),
                    j=float(row["j"]),
                    delta=tuple(float(d) for d in row["delta"]),
                    n_min=int(row.get("n_min", n_min)),
                )
                for row in rows  # type: ignore
            )
        except (KeyError, TypeError, ValueError) as err:
            raise ConfigError(f"invalid species data: {err!r}")
        return QuantumDefectTable(species, series, n_min, alpha)

    @staticmethod
    def from_file(path: Union[str, PathLike]) -> QuantumDefectTable:
        """Read a species file."""
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"species file {path} not found")
        try:
            content = toml.load(path)
        except toml.TomlDecodeError as err:
            raise ConfigError(f"{path}: {err.msg}", line=err.lineno)
        return QuantumDefectTable.from_dict(content)

    @staticmethod
    def builtin(name: str) -> QuantumDefectTable:
        """Species table shipped with circulon."""
        data = resources.files("circulon") / "data" / f"{name}.toml"
        if not data.is_file():
            raise ConfigError(f"no shipped species named {name!r}")
        return QuantumDefectTable.from_dict(toml.loads(data.read_text()))

    def defect(self, n: int, l: int, j: float) -> float:
        """Quantum defect of the (n, l, j) level."""
        if n < self.n_min:
            raise DomainError(
                f"{self.species}: n={n} below validity floor {self.n_min}"
            )
        if l > MAX_DEFECT_L:
            return 0.0
        for ser in self.series:
            if ser.l == l and ser.j == j:
                if n < ser.n_min:
                    raise DomainError(
                        f"{self.species}: n={n} below validity floor "
                        f"{ser.n_min} of the l={l} series"
                    )
                return ser.at(n)
        raise MissingDefectError(self.species, l, j)


def load_table(species: str) -> QuantumDefectTable:
    """Species table from a shipped name or a file path."""
    path = Path(species)
    if path.suffix == ".toml" or path.is_file():
        return QuantumDefectTable.from_file(path)
    return QuantumDefectTable.builtin(species)


def rubidium85() -> QuantumDefectTable:
    """Shipped rubidium-85 table."""
    return QuantumDefectTable.builtin("rubidium85")


def hydrogen() -> QuantumDefectTable:
    """Defect-free table."""
    return QuantumDefectTable.builtin("hydrogen")


@dataclass(frozen=True)
class SphericalState:
    """Field-free state |n, l, m> with j = l + 1/2."""

    n: int
    l: int
    m: int = 0

    def __post_init__(self) -> None:
        if self.n < 1 or not 0 <= self.l < self.n or abs(self.m) > self.l:
            raise DomainError(f"invalid quantum numbers {self}")

    @property
    def j(self) -> float:
        return self.l + 0.5


def energy(state: SphericalState, table: QuantumDefectTable) -> float:
    """Field-free energy -1/(2 (n - delta)^2)."""
    delta = table.defect(state.n, state.l, state.j)
    return -0.5 / (state.n - delta) ** 2


@dataclass(frozen=True, eq=False)
class RadialSolution:
    """Normalized radial function u(r) = r R(r) on the grid x_k = k * step.

    Attributes:
        step: grid step in x = sqrt(r).
        k_start: index of the first stored point.
        u: samples of u at x_k for k >= k_start.
        energy: energy used for the integration.
        r_inner: inner bound of the integration.
        r_outer: outer bound of the integration.
    """

    step: float
    k_start: int
    u: NDArray[np.float64] = field(repr=False)
    energy: float
    r_inner: float
    r_outer: float

    @property
    def k_stop(self) -> int:
        return self.k_start + self.u.size

    @property
    def x(self) -> NDArray[np.float64]:
        return self.step * np.arange(self.k_start, self.k_stop)

    @property
    def r(self) -> NDArray[np.float64]:
        return self.x**2

    def norm(self) -> float:
        """Integral of u^2 over r."""
        return float(simpson(2 * self.x * self.u**2, dx=self.step))

    def expectation(self, power: int = 1) -> float:
        """Expectation value of r**power."""
        x = self.x
        return float(simpson(2 * x ** (2 * power + 1) * self.u**2, dx=self.step))


def _inner_turning_point(a_cent: float, en: float) -> float:
    """Inner zero of g(x) = a/x^2 - 8 - 8 E x^2."""
    disc = 64 + 32 * en * a_cent
    if disc < 0:
        return 0.0
    return math.sqrt((8 - math.sqrt(disc)) / (-16 * en))


def radial_wavefunction(
    state: SphericalState,
    energy: float,
    inner_radius: float = 0.0,
    step: float = NUMEROV_STEP,
) -> RadialSolution:
    """Integrate the radial equation inward with Numerov's method.

    With x = sqrt(r) and u = sqrt(x) w, the radial equation becomes
    w'' = g(x) w with g = (2l + 1/2)(2l + 3/2)/x^2 - 8 - 8 E x^2, which is
    integrated from r_out = 2n(n + 15) down to the first of the inner radius
    and the point where the solution starts growing again inside the inner
    forbidden region.

    Args:
        state: quantum numbers, m is irrelevant.
        energy: bound-state energy in atomic units.
        inner_radius: hard inner cutoff, typically the core radius.
        step: grid step in x.

    Returns:
        the solution normalized to unit norm, positive in its outermost lobe.
    """
    if energy >= 0:
        raise DomainError(f"energy {energy} is not a bound-state energy")
    n, l = state.n, state.l
    r_out = 2.0 * n * (n + 15)
    k_out = int(math.ceil(math.sqrt(r_out) / step))
    k_core = max(1, int(math.floor(math.sqrt(inner_radius) / step)))
    diag = dict(n=n, l=l, energy=energy, step=step, k_core=k_core, k_out=k_out)
    if k_out - k_core < 4:
        raise NumerovError("grid too short", diag)

    x = step * np.arange(k_out + 1, dtype=np.float64)
    a_cent = (2 * l + 0.5) * (2 * l + 1.5)
    gfun = np.empty_like(x)
    gfun[0] = np.inf
    gfun[1:] = a_cent / x[1:] ** 2 - 8.0 - 8.0 * energy * x[1:] ** 2
    fac = 1.0 - step**2 * gfun / 12.0
    x_turn = _inner_turning_point(a_cent, energy)

    w = np.zeros_like(x)
    w[k_out - 1] = 1e-10
    k_cut = k_core
    for k in range(k_out - 1, k_core, -1):
        w[k - 1] = ((12.0 - 10.0 * fac[k]) * w[k] - fac[k + 1] * w[k + 1]) / fac[
            k - 1
        ]
        if not math.isfinite(w[k - 1]):
            raise NumerovError("integration overflow", dict(diag, k=k))
        if x[k - 1] < x_turn and abs(w[k - 1]) > abs(w[k]):
            k_cut = k
            break
    w[:k_cut] = 0.0
    logger.debug("Numerov n=%d l=%d cut at r=%.4g", n, l, x[k_cut] ** 2)

    xs = x[k_cut:]
    u = np.sqrt(xs) * w[k_cut:]
    norm = simpson(2 * xs * u**2, dx=step)
    if not (math.isfinite(norm) and norm > 0):
        raise NumerovError("normalization failed", dict(diag, k_cut=k_cut, norm=norm))
    u /= math.sqrt(norm)
    return RadialSolution(
        step=step,
        k_start=k_cut,
        u=u,
        energy=energy,
        r_inner=float(xs[0] ** 2),
        r_outer=r_out,
    )


@lru_cache(maxsize=None)
def radial_solution(
    table: QuantumDefectTable, n: int, l: int, step: float = NUMEROV_STEP
) -> RadialSolution:
    """Cached radial function of the (n, l) level of a species."""
    state = SphericalState(n, l)
    r_core = table.core_polarizability ** (1 / 3)
    return radial_wavefunction(state, energy(state, table), r_core, step)


def overlap_integral(
    sol_a: RadialSolution, sol_b: RadialSolution, power: int = 1
) -> float:
    """Integral of u_a r**power u_b over r on the shared grid."""
    if sol_a.step != sol_b.step:
        raise NumerovError(
            "radial grids differ", dict(step_a=sol_a.step, step_b=sol_b.step)
        )
    k0 = max(sol_a.k_start, sol_b.k_start)
    k1 = min(sol_a.k_stop, sol_b.k_stop)
    if k1 - k0 < 3:
        return 0.0
    ua = sol_a.u[k0 - sol_a.k_start : k1 - sol_a.k_start]
    ub = sol_b.u[k0 - sol_b.k_start : k1 - sol_b.k_start]
    x = sol_a.step * np.arange(k0, k1)
    return float(simpson(2 * x ** (2 * power + 1) * ua * ub, dx=sol_a.step))


@lru_cache(maxsize=None)
def radial_integral(
    table: QuantumDefectTable,
    n_a: int,
    l_a: int,
    n_b: int,
    l_b: int,
    power: int = 1,
    step: float = NUMEROV_STEP,
) -> float:
    """Cached radial matrix element <n_a l_a| r**power |n_b l_b>."""
    if (n_b, l_b) < (n_a, l_a):
        return radial_integral(table, n_b, l_b, n_a, l_a, power, step)
    return overlap_integral(
        radial_solution(table, n_a, l_a, step),
        radial_solution(table, n_b, l_b, step),
        power,
    )


@lru_cache(maxsize=None)
def angular_factor(l_a: int, m_a: int, l_b: int, m_b: int, q: int) -> float:
    """Matrix element <l_a m_a| C^1_q |l_b m_b> of the rank-1 spherical tensor."""
    if m_a != m_b + q or abs(l_a - l_b) != 1:
        return 0.0
    three_j = float(wigner_3j(l_a, 1, l_b, -m_a, q, m_b))
    if three_j == 0.0:
        return 0.0
    parity = float(wigner_3j(l_a, 1, l_b, 0, 0, 0))
    sign = -1.0 if m_a % 2 else 1.0
    return sign * math.sqrt((2 * l_a + 1) * (2 * l_b + 1)) * three_j * parity


def dipole_matrix_element(
    state_a: SphericalState,
    state_b: SphericalState,
    polarization: str,
    table: QuantumDefectTable,
    step: float = NUMEROV_STEP,
) -> complex:
    """Position matrix element <a| r_pol |b> in units of the Bohr radius.

    Cartesian components follow x = r (C_-1 - C_+1)/sqrt(2) and
    y = i r (C_-1 + C_+1)/sqrt(2), so that x and z are real symmetric and y
    is imaginary antisymmetric in the complex spherical basis. The electron
    dipole is minus this value.

    Args:
        state_a: bra state.
        state_b: ket state.
        polarization: one of x, y, z, sigma+, sigma- or pi.
        table: species providing the energies of both states.
        step: Numerov grid step.
    """
    if polarization not in POLARIZATIONS:
        raise ValueError(f"unknown polarization {polarization!r}")
    if abs(state_a.l - state_b.l) != 1:
        return 0j
    dm = state_a.m - state_b.m
    allowed = {
        "z": (0,),
        "pi": (0,),
        "x": (-1, 1),
        "y": (-1, 1),
        "sigma+": (1,),
        "sigma-": (-1,),
    }[polarization]
    if dm not in allowed:
        return 0j
    angular = angular_factor(state_a.l, state_a.m, state_b.l, state_b.m, dm)
    if angular == 0.0:
        return 0j
    coef: complex = angular
    if polarization == "x":
        coef = -dm * angular / math.sqrt(2)
    elif polarization == "y":
        coef = 1j * angular / math.sqrt(2)
    radial = radial_integral(
        table, state_a.n, state_a.l, state_b.n, state_b.l, 1, step
    )
    return complex(radial * coef)
