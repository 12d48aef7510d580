# 04_delayed_cavendish.py
# if a field took time tau to follow its source, would a pendulum notice?

import math

from dpcollapse import UniformBall
from dpcollapse.cavendish import (CavendishScenario, IntegrationControls, Pendulum,
                                  StepRemoval, detectability_report)

SOURCE = UniformBall.from_mass(100.0, 0.1)              # 100 kg lead-ish sphere
PEND = Pendulum(0.01, 0.05, 0.5, (0.3, 0.0, 0.0))       # 10 g probe 30 cm away
T0 = 10.0                                               # source removed at t = 10 s
FLOOR = 1e-2                                            # timing resolution, s

scenarios = []
for tau in (1e-3, 1.0, 30.0):
    slow = max(tau, 1 / (PEND.zeta * PEND.omega))
    dt = min(2 * math.pi / PEND.omega / 100, slow / 100, 1.0)
    ctl = IntegrationControls(T0 + 20 * slow, dt)
    scenarios.append(CavendishScenario(PEND, SOURCE, StepRemoval((0, 0, 0), T0), ctl,
                                       emergence_time=tau))

print(f"{'tau [s]':>8} {'recovered lag [s]':>18} {'max |x - x_newton| [m]':>24}  detectable")
for row in detectability_report(scenarios, time_floor=FLOOR):
    print(f"{row.tau:8.0e} {row.lag:18.4f} {row.max_difference:24.3e}  {row.detectable}")
