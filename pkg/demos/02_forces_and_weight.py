"""How strongly does the design squeeze, and how is that scored?

Virtual work gives the two fingertip normal forces from the actuator pull.
The transmission ratio compares their difference to the input, the safety
factor compares it to what the robot needs, and the weight turns the safety
factor into a multiplier on coverage that peaks at the target SF.
"""
import numpy as np

from goat_opt.linkage import REFERENCE_LENGTHS, ContactSpec, load_topology, solve_ik
from goat_opt.objective import WeightParams, weight
from goat_opt.statics import StaticsParams, equilibrium_oracle, force_state

topo = load_topology()
params = StaticsParams()  # 80 N actuator, friction 1, 13.3 N required pull
wp = WeightParams()
print(f"gamma_tilde = {wp.gamma_tilde}, weight at the target SF: {weight(wp.gamma, wp):.6f}")

print("\n omega    f_M     f_N    R_F     SF   weight")
for omega in np.linspace(38.02, 128.5, 6):
    cfg, _, _ = solve_ik(topo, REFERENCE_LENGTHS, ContactSpec(omega, 12.0))
    s = force_state(topo, REFERENCE_LENGTHS, cfg, params)
    print(f"{omega:6.1f} {s.f_m[1]:6.2f} {s.f_n[1]:6.2f}  {s.r_f:5.3f}  {s.sf:5.2f}  {weight(s.sf, wp):6.3f}")

# The same forces from a per-body force and moment balance.
cfg, _, _ = solve_ik(topo, REFERENCE_LENGTHS, ContactSpec(80.0, 12.0))
f_m, f_n = equilibrium_oracle(topo, REFERENCE_LENGTHS, cfg, params)
print(f"\nrigid-body balance at 80 mm: f_M = {f_m[1]:.6f} N, f_N = {f_n[1]:.6f} N")

# Weak actuators fall under the SF floor and the weight sends the design to -inf.
print("SF floor check at 20 N:", force_state(topo, REFERENCE_LENGTHS, cfg, StaticsParams(f_actuator=20.0)).sf)
