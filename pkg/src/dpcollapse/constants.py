"""Physical constants and default microstructure parameters."""

from dataclasses import dataclass, asdict

from .errors import ConfigParse

#: Double integral of 1/|r - s| over a unit cube (both points in the cube).
#: Obtained by reducing to the difference vector,
#: 8 * int_[0,1]^3 (1-x)(1-y)(1-z) / |u| du, with adaptive cubature to 1e-12;
#: cross-checked against a Monte-Carlo estimate in the test-suite.
#: A uniform cube of mass m and side h has  U(f, f) = -G m^2 CUBE_SELF_COEFF / h.
CUBE_SELF_COEFF = 1.88231264438966

#: Nucleus radius (1e-12 cm) and nuclear density (1e12 times 1 g/cm^3).
NUCLEUS_RADIUS = 1e-14
NUCLEAR_DENSITY = 1e15
#: Typical condensed-matter density used for the "atomic" cutoff.
CONDENSED_DENSITY = 1e3
#: Atomic coarse-graining scale (1e-8 cm).
ATOMIC_RESOLUTION = 1e-10


@dataclass(frozen=True)
class PhysicalConstants:
    """Newton constant and reduced Planck constant, SI units.

    Override only for scaled test universes.
    """

    G: float = 6.67430e-11
    hbar: float = 1.054571817e-34

    def __post_init__(self):
        if not (self.G > 0 and self.hbar > 0):
            raise ConfigParse("G and hbar must be strictly positive")

    def scaled(self, G_factor=1.0, hbar_factor=1.0):
        return PhysicalConstants(self.G * G_factor, self.hbar * hbar_factor)

    def as_dict(self):
        return asdict(self)


DEFAULT_CONSTANTS = PhysicalConstants()
