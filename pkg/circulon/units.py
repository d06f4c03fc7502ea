"""Conversions between atomic units and laboratory units.

All library computations use atomic units (hbar = e = m_e = 1). Frequencies
quoted in MHz are ordinary frequencies (E/h); an energy in atomic units is
also the corresponding angular frequency in atomic units.
"""

from __future__ import annotations

from scipy.constants import physical_constants

FIELD_AU_V_PER_CM: float = physical_constants["atomic unit of electric field"][0] / 100
TIME_AU_S: float = physical_constants["atomic unit of time"][0]
HARTREE_HZ: float = physical_constants["hartree-hertz relationship"][0]


def v_per_cm_to_au(field: float) -> float:
    """Electric field from V/cm to atomic units."""
    return field / FIELD_AU_V_PER_CM


def au_to_v_per_cm(field: float) -> float:
    """Electric field from atomic units to V/cm."""
    return field * FIELD_AU_V_PER_CM


def mv_per_cm_to_au(field: float) -> float:
    """Electric field from mV/cm to atomic units."""
    return v_per_cm_to_au(field * 1e-3)


def au_to_mv_per_cm(field: float) -> float:
    """Electric field from atomic units to mV/cm."""
    return au_to_v_per_cm(field) * 1e3


def uv_per_cm_to_au(field: float) -> float:
    """Electric field from μV/cm to atomic units."""
    return v_per_cm_to_au(field * 1e-6)


def ns_to_au(time: float) -> float:
    """Time from ns to atomic units."""
    return time * 1e-9 / TIME_AU_S


def au_to_ns(time: float) -> float:
    """Time from atomic units to ns."""
    return time * TIME_AU_S * 1e9


def mhz_to_au(freq: float) -> float:
    """Ordinary frequency in MHz to angular frequency (or energy) in a.u."""
    return freq * 1e6 / HARTREE_HZ


def au_to_mhz(omega: float) -> float:
    """Angular frequency (or energy) in a.u. to ordinary frequency in MHz."""
    return omega * HARTREE_HZ * 1e-6
