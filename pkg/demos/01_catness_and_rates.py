# 01_catness_and_rates.py
# collapse rate of a displaced ball, from tiny shifts up to saturation

import math

import numpy as np

from dpcollapse import GranularBall, UniformBall, full_rate_curve, rate_displaced
from dpcollapse.collapse import newton_omega_squared

RHO = 1000.0                                     # water-like density, kg/m^3
M = 1.0                                          # 1 kg
R = (3 * M / (4 * math.pi * RHO)) ** (1 / 3)     # ~6.2 cm

ball = UniformBall.from_mass(M, R)

# a single displacement: rate = catness / hbar
res = rate_displaced(ball, 1e-10)
print(f"1 kg ball shifted by 1 angstrom: rate {res.rate:.3e} 1/s, lifetime {res.lifetime:.3e} s")
print(f"  compare M omega_G^2 dx^2 / hbar = {M * newton_omega_squared(RHO) * 1e-20 / 1.054571817e-34:.3e}")

# the whole curve: quadratic for dx << R, flat once the two copies stop overlapping
dx = np.concatenate([np.geomspace(R / 1000, R / 100, 6), R * np.array([0.5, 1, 2, 5, 100])])
curve = full_rate_curve(ball, dx)
print(f"\nquadratic fit: const = {curve.const:.4f} (1 means 'M omega_G^2 dx^2 / hbar'), "
      f"residual {curve.fit_residual:.1e}")
for x, r in zip(curve.x, curve.rate):
    print(f"  dx/R = {x / R:9.3e}   rate = {r:.4e} 1/s")
print(f"saturation (twice the self-energy over hbar): {curve.saturation_rate:.4e} 1/s")

# granularity: the same mass packed into dense nuclei collapses much faster
g = GranularBall.desk_scale()
d = g.nucleus_radius / 20
gran = rate_displaced(g, d).rate
homo = rate_displaced(g.homogenized(), d).rate
print(f"\ndesk-scale lattice with nuclear/bulk density 1e4: granular/homogeneous = {gran / homo:.3e}")
