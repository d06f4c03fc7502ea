"""Stark manifolds in a static field and the truncated working basis.

The static field along z keeps m a good quantum number, so the Hamiltonian
is diagonalized block by block. Eigenstates are labelled with hydrogenic
eccentricity numbers mu by fitting them to the perturbative hydrogen ladder,
and the lowest state of each m >= 0 block of the working manifold is a
pivotal state |m>.
"""

from __future__ import annotations

import logging
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import toml
from joblib import Parallel, delayed
from scipy.linalg import eigh

from . import atom
from .error import ConfigError, GridMismatchError, ModelSizeError, TruncationError
from .spin import spin_matrices
from .tables import provenance

if typing.TYPE_CHECKING:
    from os import PathLike
    from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

    from numpy.typing import NDArray

    from .atom import QuantumDefectTable

logger = logging.getLogger(__name__)

TRUNCATIONS = ("two-diagonal", "coupled", "full-manifold", "extended-n")

_NO_LABEL = -(10**6)

RF_COUPLING = 2.0
"""Ratio of the RF couplings D_x, D_y to the electron dipole.

RF amplitudes are E_RF amplitudes: a sigma+ field E_x = E_RF cos(wt),
E_y = E_RF sin(wt) drives the lowest diagonal ladder at the Rabi frequency
3 n E_RF.
"""


def stark_shift_first_order(n: int, mu: int, e_dc: float) -> float:
    """Linear Stark shift 3/2 n mu E of a hydrogenic level."""
    return 1.5 * n * mu * e_dc


def stark_shift_second_order(n: int, m: int, mu: int, e_dc: float) -> float:
    """Quadratic Stark shift of a hydrogenic level."""
    return -(e_dc**2) * n**4 * (17 * n**2 - 3 * mu**2 - 9 * m**2 + 19) / 16


def hydrogen_stark_energy(n: int, m: int, mu: int, e_dc: float) -> float:
    """Hydrogenic level energy up to second order in the field."""
    return (
        -0.5 / n**2
        + stark_shift_first_order(n, mu, e_dc)
        + stark_shift_second_order(n, m, mu, e_dc)
    )


def ladder_frequency(n: int, e_dc: float) -> float:
    """Quasi-resonant frequency of the diagonal ladders, 3/2 n E."""
    return 1.5 * n * e_dc


def mu_ladder(n: int, m: int) -> List[int]:
    """Hydrogenic eccentricity labels of the (n, m) vertical ladder."""
    top = n - abs(m) - 1
    return list(range(-top, top + 1, 2))


def manifold_half_width(n: int, e_dc: float) -> float:
    """Energy half-range around -1/(2n^2) hosting the n manifold."""
    return (
        1.5 * n * (n - 1) * e_dc
        + 3 * ladder_frequency(n, e_dc)
        + e_dc**2 * n**4 * (17 * n**2 + 19) / 16
        + 1e-6 / n**3
    )


def default_window(
    table: QuantumDefectTable, n: int, reach: int = 1
) -> List[int]:
    """Manifolds with states between the n - reach and n + reach levels.

    Besides the hydrogenic manifolds n - reach ... n + reach, the window holds
    the higher manifolds whose low-l states the quantum defect pushes down
    into that energy range.
    """
    window = set(range(max(1, n - reach), n + reach + 1))
    for ser in table.series:
        if ser.j != ser.l + 0.5:
            continue
        top = n + reach + math.ceil(ser.at(n)) + 1
        for n_up in range(n + 1, top + 1):
            if ser.l >= n_up:
                continue
            n_star = n_up - table.defect(n_up, ser.l, ser.j)
            if abs(n_star - n) <= reach + 0.5:
                window.add(n_up)
    return sorted(window)


@dataclass(frozen=True, eq=False)
class StarkBlock:
    """Eigenpairs of one fixed-m block.

    Attributes:
        m: magnetic quantum number of the block.
        basis: (n, l) labels of the spherical basis states.
        energies: eigenvalues in ascending order.
        vectors: eigenvectors as columns, in the spherical basis.
    """

    m: int
    basis: Tuple[Tuple[int, int], ...]
    energies: NDArray[np.float64] = field(repr=False)
    vectors: NDArray[np.float64] = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.basis)

    def dominant_n(self, col: int) -> int:
        """Principal quantum number carrying most weight in an eigenvector."""
        weights: Dict[int, float] = {}
        for (n, _), amp in zip(self.basis, self.vectors[:, col]):
            weights[n] = weights.get(n, 0.0) + amp**2
        return max(weights, key=weights.__getitem__)


@dataclass(frozen=True)
class LadderAssignment:
    """Ladder labels of the eigenstates of a block.

    Attributes:
        n_label: manifold of each eigenstate.
        mu: eccentricity label of each eigenstate, None if displaced.
        rank: energy order within its vertical ladder, 0 on the lowest
            diagonal, None if displaced.
        gaps: hydrogenic mu labels left without a state, per manifold.
    """

    n_label: Tuple[int, ...]
    mu: Tuple[Optional[int], ...]
    rank: Tuple[Optional[int], ...]
    gaps: Mapping[int, Tuple[int, ...]]


def _z_matrix(
    table: QuantumDefectTable,
    basis: Sequence[Tuple[int, int]],
    m: int,
    step: float,
) -> NDArray[np.float64]:
    size = len(basis)
    zmat = np.zeros((size, size))
    for i, (n_a, l_a) in enumerate(basis):
        for j in range(i + 1, size):
            n_b, l_b = basis[j]
            if abs(l_a - l_b) != 1:
                continue
            ang = atom.angular_factor(l_a, m, l_b, m, 0)
            if ang == 0.0:
                continue
            val = ang * atom.radial_integral(table, n_a, l_a, n_b, l_b, 1, step)
            zmat[i, j] = zmat[j, i] = val
    return zmat


def build_stark_block(
    n_window: Sequence[int],
    m: int,
    e_dc: float,
    table: QuantumDefectTable,
    step: float = atom.NUMEROV_STEP,
) -> StarkBlock:
    """Diagonalize H_atom + E_DC z in the fixed-m block of the n window.

    Args:
        n_window: principal quantum numbers spanning the block.
        m: magnetic quantum number.
        e_dc: static field in atomic units.
        table: quantum defects of the species.
        step: Numerov grid step for the radial integrals.

    Returns:
        eigenpairs sorted by energy, each eigenvector with its largest
        component real positive.
    """
    if e_dc < 0:
        raise ValueError("static field should be non-negative")
    if not n_window:
        raise TruncationError("empty n window")
    basis = tuple(
        (n, l) for n in sorted(set(n_window)) for l in range(abs(m), n)
    )
    if not basis:
        raise TruncationError(f"n window {sorted(n_window)} holds no state with m={m}")
    diag = np.array(
        [atom.energy(atom.SphericalState(n, l, m), table) for n, l in basis]
    )
    ham = np.diag(diag) + e_dc * _z_matrix(table, basis, m, step)
    energies, vectors = eigh(ham)
    peak = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[peak, np.arange(vectors.shape[1])])
    vectors *= signs
    logger.debug("block m=%d: %d states", m, len(basis))
    return StarkBlock(m=m, basis=basis, energies=energies, vectors=vectors)


def classify_diagonal_ladders(block: StarkBlock, e_dc: float) -> LadderAssignment:
    """Assign manifold, eccentricity and diagonal-ladder rank to eigenstates.

    States further from the hydrogenic centroid of every manifold than the
    Stark fan allows are displaced by their quantum defect and get no label.
    The remaining states of a manifold take consecutive labels of the
    hydrogenic mu ladder, with the offset that best matches the perturbative
    energies; unmatched labels are recorded as gaps.
    """
    manifolds = sorted({n for n, _ in block.basis})
    size = block.energies.size
    n_label = [block.dominant_n(col) for col in range(size)]
    members: Dict[int, List[int]] = {n: [] for n in manifolds}
    for col, en in enumerate(block.energies):
        for n in manifolds:
            if abs(block.m) >= n:
                continue
            if abs(en + 0.5 / n**2) <= manifold_half_width(n, e_dc):
                members[n].append(col)
                n_label[col] = n
                break

    mu: List[Optional[int]] = [None] * size
    rank: List[Optional[int]] = [None] * size
    gaps: Dict[int, Tuple[int, ...]] = {}
    for n, cols in members.items():
        if abs(block.m) >= n:
            continue
        labels = mu_ladder(n, block.m)
        ref = np.array([hydrogen_stark_energy(n, block.m, mu_, e_dc) for mu_ in labels])
        cols = list(cols)
        while len(cols) > len(labels):
            dist = [np.min(np.abs(ref - block.energies[c])) for c in cols]
            cols.pop(int(np.argmax(dist)))
        ens = block.energies[cols]
        best_offset, best_err = 0, math.inf
        for offset in range(len(labels) - len(cols) + 1):
            err = float(np.sum((ens - ref[offset : offset + len(cols)]) ** 2))
            if err < best_err:
                best_offset, best_err = offset, err
        used = set()
        for order, col in enumerate(cols):
            mu[col] = labels[best_offset + order]
            rank[col] = order
            used.add(best_offset + order)
        missing = tuple(lbl for k, lbl in enumerate(labels) if k not in used)
        if missing:
            gaps[n] = missing
    return LadderAssignment(tuple(n_label), tuple(mu), tuple(rank), gaps)


@dataclass(frozen=True, eq=False)
class StarkLevel:
    """One eigenstate of the static-field Hamiltonian.

    Attributes:
        index: position in the basis.
        n: manifold label.
        m: magnetic quantum number.
        mu: eccentricity label, None for defect-displaced states.
        energy: energy in atomic units.
        rank: diagonal-ladder rank, 0 on the lowest diagonal.
        vector: eigenvector in the spherical basis of its block.
    """

    index: int
    n: int
    m: int
    mu: Optional[int]
    energy: float
    rank: Optional[int]
    vector: Optional[NDArray[np.float64]] = field(default=None, repr=False)

    @property
    def displaced(self) -> bool:
        return self.mu is None


@dataclass(frozen=True, eq=False)
class BasisModel:
    """Drift Hamiltonian and dipole couplings in the Stark eigenbasis.

    The Hamiltonian under a field (E_x, E_y) is H0 - E_x D_x - E_y D_y,
    with D the electron dipole (minus the position) scaled by RF_COUPLING.

    Attributes:
        n: working manifold.
        e_dc: static field in atomic units.
        levels: basis states, ordered by m then ladder rank.
        h0: diagonal of the drift Hamiltonian.
        dx: dipole coupling to the x field component.
        dy: dipole coupling to the y field component.
        truncation: truncation preset used to build the basis.
        pivots: index of the pivotal state |m> for each m.
        species: species label.
        gaps: missing mu labels per (manifold, m) of the working manifold.
    """

    n: int
    e_dc: float
    levels: Tuple[StarkLevel, ...]
    h0: NDArray[np.float64] = field(repr=False)
    dx: NDArray[np.complex128] = field(repr=False)
    dy: NDArray[np.complex128] = field(repr=False)
    truncation: str = "two-diagonal"
    pivots: Mapping[int, int] = field(default_factory=dict)
    species: str = ""
    gaps: Mapping[int, Tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        dim = self.h0.size
        if self.dx.shape != (dim, dim) or self.dy.shape != (dim, dim):
            raise GridMismatchError(
                f"couplings {self.dx.shape}, {self.dy.shape} vs {dim} levels"
            )
        if len(self.levels) != dim:
            raise GridMismatchError(f"{len(self.levels)} levels vs {dim} energies")

    @property
    def dim(self) -> int:
        return self.h0.size

    @property
    def spin_j(self) -> float:
        """Effective spin J = (n - 1)/2 of the lowest diagonal."""
        return (self.n - 1) / 2

    def state(self, m: int) -> NDArray[np.complex128]:
        """Basis vector of the pivotal state |m>."""
        if m not in self.pivots:
            raise KeyError(f"no pivotal state with m={m}")
        psi = np.zeros(self.dim, dtype=np.complex128)
        psi[self.pivots[m]] = 1.0
        return psi

    def pivot_indices(self) -> NDArray[np.int_]:
        """Basis index of |m> for m = 0 ... n-1, -1 where missing."""
        return np.array([self.pivots.get(m, -1) for m in range(self.n)])

    def pivot_signs(self) -> NDArray[np.float64]:
        """Signs making every coupling <m+1| D_x |m> positive.

        Multiplying pivot amplitudes by these signs maps the lowest diagonal
        onto spin states with the standard phase convention.
        """
        idx = self.pivot_indices()
        signs = np.ones(self.n)
        for m in range(self.n - 1):
            a, b = idx[m], idx[m + 1]
            if a < 0 or b < 0:
                signs[m + 1] = signs[m]
                continue
            coupling = self.dx[b, a].real
            signs[m + 1] = signs[m] * (-1.0 if coupling < 0 else 1.0)
        return signs

    def hamiltonian(self, ex: float, ey: float) -> NDArray[np.complex128]:
        """Dense Hamiltonian for a field (E_x, E_y)."""
        ham = -ex * self.dx - ey * self.dy
        ham[np.diag_indices(self.dim)] += self.h0
        return ham

    @staticmethod
    def from_matrices(
        h0: NDArray[np.float64],
        dx: NDArray[np.complex128],
        dy: NDArray[np.complex128],
        n: Optional[int] = None,
        pivots: Optional[Mapping[int, int]] = None,
        e_dc: float = 0.0,
        truncation: str = "custom",
    ) -> BasisModel:
        """Wrap explicit matrices, level k being the pivotal state |k>."""
        h0 = np.asarray(h0, dtype=np.float64)
        dim = h0.size
        n = dim if n is None else n
        if pivots is None:
            pivots = {k: k for k in range(min(dim, n))}
        m_of = {idx: m for m, idx in pivots.items()}
        levels = tuple(
            StarkLevel(
                index=k,
                n=n,
                m=m_of.get(k, k),
                mu=m_of.get(k, k) - n + 1,
                energy=float(h0[k]),
                rank=0 if k in m_of else None,
            )
            for k in range(dim)
        )
        return BasisModel(
            n=n,
            e_dc=e_dc,
            levels=levels,
            h0=h0,
            dx=np.asarray(dx, dtype=np.complex128),
            dy=np.asarray(dy, dtype=np.complex128),
            truncation=truncation,
            pivots=dict(pivots),
        )

    def save(self, path: Union[str, PathLike], digest: Optional[str] = None) -> None:
        """Write the model as an npz bundle (levels table plus matrices).

        The bundle records the software version and, when given, the digest of
        the configuration that built it.
        """
        meta = toml.dumps(
            dict(
                provenance=provenance(digest),
                n=self.n,
                e_dc=self.e_dc,
                truncation=self.truncation,
                species=self.species,
                pivots={str(m): int(i) for m, i in self.pivots.items()},
                gaps={str(m): list(g) for m, g in self.gaps.items()},
            )
        )
        np.savez(
            Path(path),
            meta=np.array(meta),
            h0=self.h0,
            dx=self.dx,
            dy=self.dy,
            lvl_n=np.array([lvl.n for lvl in self.levels]),
            lvl_m=np.array([lvl.m for lvl in self.levels]),
            lvl_mu=np.array(
                [_NO_LABEL if lvl.mu is None else lvl.mu for lvl in self.levels]
            ),
            lvl_rank=np.array(
                [_NO_LABEL if lvl.rank is None else lvl.rank for lvl in self.levels]
            ),
        )

    @staticmethod
    def load(path: Union[str, PathLike]) -> BasisModel:
        """Read a bundle written by `save`."""
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"model file {path} not found")
        with np.load(path, allow_pickle=False) as bundle:
            meta = toml.loads(str(bundle["meta"]))
            h0 = bundle["h0"]
            levels = tuple(
                StarkLevel(
                    index=k,
                    n=int(n),
                    m=int(m),
                    mu=None if mu == _NO_LABEL else int(mu),
                    energy=float(h0[k]),
                    rank=None if rank == _NO_LABEL else int(rank),
                )
                for k, (n, m, mu, rank) in enumerate(
                    zip(
                        bundle["lvl_n"],
                        bundle["lvl_m"],
                        bundle["lvl_mu"],
                        bundle["lvl_rank"],
                    )
                )
            )
            return BasisModel(
                n=int(meta["n"]),
                e_dc=float(meta["e_dc"]),
                levels=levels,
                h0=h0,
                dx=bundle["dx"],
                dy=bundle["dy"],
                truncation=str(meta["truncation"]),
                pivots={int(m): int(i) for m, i in meta["pivots"].items()},
                species=str(meta["species"]),
                gaps={int(m): tuple(g) for m, g in meta["gaps"].items()},
            )


def bundle_provenance(path: Union[str, PathLike]) -> Dict[str, Any]:
    """Provenance block of a bundle, empty for bundles written without one."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"model file {path} not found")
    with np.load(path, allow_pickle=False) as bundle:
        return dict(toml.loads(str(bundle["meta"])).get("provenance", {}))


def ideal_spin_model(n: int, omega: float, kappa: float) -> BasisModel:
    """Exact spin-J ladder with J = (n - 1)/2.

    H0 = omega J_z, D_x = 2 kappa J_x and D_y = 2 kappa J_y, so that a
    resonant sigma+ field of amplitude A rotates the spin at 2 kappa A.
    kappa = 3 n / 2 matches the Rabi frequency of a Rydberg ladder.
    """
    jx, jy, jz = spin_matrices((n - 1) / 2)
    return BasisModel.from_matrices(
        h0=omega * np.diag(jz).real,
        dx=2 * kappa * jx,
        dy=2 * kappa * jy,
        n=n,
    )


def estimate_memory(dim: int) -> float:
    """Memory in MB held by the dense couplings of a basis."""
    return 2 * dim**2 * 16 / 2**20


def transition_frequencies(model: BasisModel) -> Dict[Tuple[int, int], float]:
    """Energy differences E(|m+1>) - E(|m>) between adjacent pivotal states."""
    freqs = {}
    for m in sorted(model.pivots):
        if m + 1 in model.pivots:
            freqs[(m, m + 1)] = float(
                model.h0[model.pivots[m + 1]] - model.h0[model.pivots[m]]
            )
    return freqs


def _x_matrix(
    table: QuantumDefectTable,
    lower: StarkBlock,
    upper: StarkBlock,
    step: float,
) -> NDArray[np.float64]:
    """Position x between blocks m and m+1, rotated into the eigenbases."""
    m = lower.m
    xmat = np.zeros((lower.size, upper.size))
    for i, (n_a, l_a) in enumerate(lower.basis):
        for j, (n_b, l_b) in enumerate(upper.basis):
            if abs(l_a - l_b) != 1:
                continue
            ang = atom.angular_factor(l_a, m, l_b, m + 1, -1)
            if ang == 0.0:
                continue
            rad = atom.radial_integral(table, n_a, l_a, n_b, l_b, 1, step)
            xmat[i, j] = rad * ang / math.sqrt(2)
    return lower.vectors.T @ xmat @ upper.vectors


def assemble_model(
    table: QuantumDefectTable,
    n: int,
    e_dc: float,
    truncation: str = "two-diagonal",
    n_window: Optional[Sequence[int]] = None,
    coupling_threshold: float = 1e-3,
    memory_cap: float = 4096.0,
    step: float = atom.NUMEROV_STEP,
    n_jobs: int = 1,
) -> BasisModel:
    """Build the working basis and its couplings.

    Args:
        table: quantum defects of the species.
        n: working manifold.
        e_dc: static field in atomic units.
        truncation: `two-diagonal` keeps the two lowest diagonal ladders with
            m >= 0, `coupled` keeps every m >= 0 state whose coupling to a
            pivotal state exceeds `coupling_threshold` times the largest one,
            `full-manifold` keeps every state of the working manifold, and
            `extended-n` also keeps the n-1 and n+1 manifolds.
        n_window: principal quantum numbers of the diagonalization,
            `default_window` by default.
        coupling_threshold: relative threshold of the `coupled` preset.
        memory_cap: largest allowed size of the couplings in MB.
        step: Numerov grid step.
        n_jobs: joblib workers for the block diagonalizations.
    """
    if truncation not in TRUNCATIONS:
        raise ConfigError(f"unknown truncation {truncation!r}")
    window = sorted(set(n_window)) if n_window else default_window(table, n)
    manifolds = {n}
    if truncation == "extended-n":
        manifolds = {n - 1, n, n + 1}
        window = sorted(set(window) | manifolds)
    if n not in window:
        raise TruncationError(f"working manifold {n} not in window {window}")
    if truncation in ("two-diagonal", "coupled"):
        m_values = list(range(0, n))
        dim_estimate = 2 * n - 1 if truncation == "two-diagonal" else n * (n + 1) // 2
    else:
        n_max = max(manifolds)
        m_values = list(range(-(n_max - 1), n_max))
        dim_estimate = sum(k**2 for k in manifolds)
    mem = estimate_memory(dim_estimate)
    if mem > memory_cap:
        raise ModelSizeError(dict(dim=dim_estimate, mem_mb=mem, cap_mb=memory_cap))

    logger.info(
        "diagonalizing %d blocks of %s (n=%d, window %s)",
        len(m_values),
        table.species,
        n,
        window,
    )
    blocks: List[StarkBlock] = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(build_stark_block)(window, m, e_dc, table, step) for m in m_values
    )
    labels = [classify_diagonal_ladders(blk, e_dc) for blk in blocks]

    kept: List[List[int]] = []
    for blk, lab in zip(blocks, labels):
        cols = [c for c in range(blk.size) if lab.n_label[c] in manifolds]
        if truncation == "two-diagonal":
            cols = [c for c in cols if lab.rank[c] in (0, 1)]
        cols.sort(
            key=lambda c: (
                lab.rank[c] is None,
                lab.rank[c] if lab.rank[c] is not None else 0,
                blk.energies[c],
            )
        )
        kept.append(cols)

    xblocks = {}
    for k in range(len(blocks) - 1):
        xblocks[k] = _x_matrix(table, blocks[k], blocks[k + 1], step)

    if truncation == "coupled":
        kept = _select_coupled(blocks, labels, kept, xblocks, n, coupling_threshold)

    offsets = np.cumsum([0] + [len(c) for c in kept])
    dim = int(offsets[-1])
    h0 = np.empty(dim)
    levels: List[StarkLevel] = []
    pivots: Dict[int, int] = {}
    gaps: Dict[int, Tuple[int, ...]] = {}
    for k, (blk, lab, cols) in enumerate(zip(blocks, labels, kept)):
        for pos, col in enumerate(cols):
            idx = int(offsets[k]) + pos
            h0[idx] = blk.energies[col]
            levels.append(
                StarkLevel(
                    index=idx,
                    n=lab.n_label[col],
                    m=blk.m,
                    mu=lab.mu[col],
                    energy=float(blk.energies[col]),
                    rank=lab.rank[col],
                    vector=blk.vectors[:, col],
                )
            )
            if blk.m >= 0 and lab.n_label[col] == n and lab.rank[col] == 0:
                pivots[blk.m] = idx
        if n in lab.gaps and blk.m >= 0:
            gaps[blk.m] = lab.gaps[n]

    dx = np.zeros((dim, dim), dtype=np.complex128)
    dy = np.zeros((dim, dim), dtype=np.complex128)
    for k, xrot in xblocks.items():
        rows, cols = kept[k], kept[k + 1]
        if not rows or not cols:
            continue
        sub = RF_COUPLING * xrot[np.ix_(rows, cols)]
        r0, r1 = int(offsets[k]), int(offsets[k + 1])
        c1 = int(offsets[k + 2])
        dx[r0:r1, r1:c1] = -sub
        dx[r1:c1, r0:r1] = -sub.T
        dy[r0:r1, r1:c1] = -1j * sub
        dy[r1:c1, r0:r1] = 1j * sub.T

    model = BasisModel(
        n=n,
        e_dc=e_dc,
        levels=tuple(levels),
        h0=h0,
        dx=dx,
        dy=dy,
        truncation=truncation,
        pivots=pivots,
        species=table.species,
        gaps=gaps,
    )
    logger.info("basis of %d states, %d pivotal states", dim, len(pivots))
    return model


def _select_coupled(
    blocks: Sequence[StarkBlock],
    labels: Sequence[LadderAssignment],
    kept: Sequence[List[int]],
    xblocks: Mapping[int, NDArray[np.float64]],
    n: int,
    threshold: float,
) -> List[List[int]]:
    """Keep the states strongly coupled to at least one pivotal state."""
    piv = []
    for lab in labels:
        cols = [
            c for c, (nl, rk) in enumerate(zip(lab.n_label, lab.rank))
            if nl == n and rk == 0
        ]
        piv.append(cols[0] if cols else None)
    strength = [np.zeros(blk.size) for blk in blocks]
    for k, xrot in xblocks.items():
        if piv[k + 1] is not None:
            strength[k] = np.maximum(strength[k], np.abs(xrot[:, piv[k + 1]]))
        if piv[k] is not None:
            strength[k + 1] = np.maximum(strength[k + 1], np.abs(xrot[piv[k], :]))
    peak = max(float(s.max()) for s in strength if s.size)
    selected = []
    for k, cols in enumerate(kept):
        selected.append(
            [
                c
                for c in cols
                if c == piv[k] or strength[k][c] > threshold * peak
            ]
        )
    return selected
