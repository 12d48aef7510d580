# 02_equilibrium.py
# where spreading and collapse balance: rates, times and widths

from dpcollapse import equilibrium_report, newton_frequency

print(f"omega_G of ordinary matter (1000 kg/m^3): {newton_frequency(1000.0):.3e} 1/s")
print(f"omega_G of nuclear matter  (1e15 kg/m^3): {newton_frequency(1e15):.3e} 1/s")

print(f"\n{'mass [kg]':>10} {'mode':>8} {'tau_eq [s]':>12} {'width [m]':>12}")
for M in (1e-6, 1e-3, 1.0):
    for mode in ("atomic", "nuclear"):
        rep = equilibrium_report(M, mode=mode)
        print(f"{M:10.0e} {mode:>8} {rep.equilibrium_time:12.3e} {rep.localization_width:12.3e}")

# the rate depends only on the density chosen as cutoff, never on M
a = equilibrium_report(1.0, mode="atomic")
n = equilibrium_report(1.0, mode="nuclear")
print(f"\nnuclear/atomic equilibrium rate: {n.equilibrium_rate / a.equilibrium_rate:.3e}")
