"""Model the hold sizes a climbing robot will meet.

Bounding boxes of holds are summarised by a bivariate log-normal over
(width, height). Here the survey is synthetic; the fitted model is then
used to measure probability mass of rectangles two ways.
"""
import numpy as np

from goat_opt.environment import (
    RectRegion,
    cdf_rect_montecarlo,
    cdf_rect_riemann,
    fit_lognormal,
    qq_points,
    synthetic_holds,
)

holds = synthetic_holds(2000, seed=0)
model = fit_lognormal(holds)  # lengths count as widths too (rotated grasp)
print("fitted", model)
print(f"modal (width, height) = ({model.mode[0]:.1f}, {model.mode[1]:.1f}) mm")

# A straight QQ line in log space is what justifies the log-normal choice.
qq = qq_points([h.height for h in holds])
print(f"QQ R^2 (heights): {np.corrcoef(qq.T)[0, 1] ** 2:.4f}")

print("\n region                       riemann   monte-carlo")
for reg in (RectRegion(38, 128.5, 20, 200), RectRegion(40, 60, 10, 40), RectRegion(90, 150, 50, 120)):
    r = cdf_rect_riemann(model, reg)
    m = cdf_rect_montecarlo(model, reg, 1_000_000, seed=1)
    print(f" {reg.omega_lo:5.1f}-{reg.omega_hi:5.1f} x {reg.h_lo:3.0f}-{reg.h_hi:3.0f}      {r:.4f}    {m:.4f}")
