"""Walk the gripper through its stroke and through the inverse problem.

The bundled topology carries the reference link lengths. We first push the
input pin D along its stroke and watch the fingertips close, then ask the
inverse question: which pose grasps an object of width omega held 12 mm off
centre?
"""
from pathlib import Path

import numpy as np

from goat_opt.linkage import REFERENCE_LENGTHS, ContactSpec, forward_configuration, hold_height, load_topology, solve_ik
from goat_opt.render import linkage_svg

topo = load_topology()
print(f"mobility {topo.mobility}, branches {topo.branches}")

# Forward: D moves toward -x as the actuator pulls.
print("\n   D_x     M_x     M_y   residual")
guess = None
for dx in np.linspace(0.0, -30.0, 7):
    cfg = forward_configuration(topo, REFERENCE_LENGTHS, (dx, 0.0), guess=guess)
    guess = cfg  # warm start keeps us on the same branch
    print(f"{dx:6.1f}  {cfg.M[0]:6.2f}  {cfg.M[1]:6.2f}  {cfg.residual:.1e}")

# Inverse: fingertip heights are fixed by the contact spec, x is solved for.
print("\n omega     M_x     N_x       H")
for omega in (38.02, 60.0, 80.0, 100.0, 128.5):
    cfg, M, N = solve_ik(topo, REFERENCE_LENGTHS, ContactSpec(omega, 12.0))
    print(f"{omega:6.2f}  {M[0]:6.2f}  {N[0]:6.2f}  {hold_height(M, N):6.2f}")

out = Path("demo-out")
out.mkdir(exist_ok=True)
cfg, _, _ = solve_ik(topo, REFERENCE_LENGTHS, ContactSpec(80.0, 12.0))
(out / "pose_80mm.svg").write_text(linkage_svg(topo, cfg, title="omega = 80 mm"))
print(f"\nwrote {out / 'pose_80mm.svg'}")
