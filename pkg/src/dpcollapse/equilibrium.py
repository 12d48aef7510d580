"""Closed-form balance between kinetic spreading and collapse.

A free body of mass M localized to width dx spreads at the rate
hbar / (M dx^2) and collapses at M omega^2 dx^2 / hbar.  Their geometric
mean is omega, so at balance both rates equal the Newton frequency
omega = sqrt(4 pi G rho / 3) and the width is sqrt(hbar / (M omega)).
"""

import math
from dataclasses import dataclass

from .constants import CONDENSED_DENSITY, DEFAULT_CONSTANTS, NUCLEAR_DENSITY
from .errors import NonPositiveDensity

__all__ = ["EquilibriumReport", "newton_frequency", "balance_check",
           "equilibrium_report"]


def newton_frequency(rho, constants=DEFAULT_CONSTANTS):
    """Oscillation frequency [1/s] of a probe inside a homogeneous ball."""
    if not rho > 0:
        raise NonPositiveDensity(f"density must be positive, got {rho!r}")
    return math.sqrt(4 * math.pi * constants.G * rho / 3)


def balance_check(mass, width, omega, constants=DEFAULT_CONSTANTS):
    """Return (kinetic rate, collapse rate, their geometric mean)."""
    hbar = constants.hbar
    kinetic = hbar / (mass * width ** 2)
    collapse = mass * omega ** 2 * width ** 2 / hbar
    return kinetic, collapse, math.sqrt(kinetic * collapse)


@dataclass(frozen=True)
class EquilibriumReport:
    omega_G: float
    omega_G_nucl: float
    equilibrium_rate: float
    equilibrium_time: float
    localization_width: float
    cutoff_mode: str
    mass: float
    density: float
    nuclear_density: float
    hbar: float

    @property
    def mode_omega(self):
        return self.omega_G_nucl if self.cutoff_mode == "nuclear" else self.omega_G

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def equilibrium_report(mass, rho=CONDENSED_DENSITY, rho_nucl=NUCLEAR_DENSITY,
                       mode="nuclear", constants=DEFAULT_CONSTANTS):
    """Equilibrium collapse rate, time and width for the chosen cutoff.

    ``mode`` is "atomic" (density coarse-grained over atoms, omega_G) or
    "nuclear" (mass resolved down to nuclei, omega_G of nuclear matter).
    """
    if mode not in ("atomic", "nuclear"):
        raise ValueError(f"mode must be 'atomic' or 'nuclear', not {mode!r}")
    if not mass > 0:
        raise ValueError("mass must be positive")
    w = newton_frequency(rho, constants)
    wn = newton_frequency(rho_nucl, constants)
    omega = wn if mode == "nuclear" else w
    width = math.sqrt(constants.hbar / (mass * omega))
    return EquilibriumReport(w, wn, omega, 1.0 / omega, width, mode, mass, rho,
                             rho_nucl, constants.hbar)
