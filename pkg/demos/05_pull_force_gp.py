"""From hold slope to a safe pulling force.

A Gaussian process with a linear kernel maps the width-to-height ratio eta
to the pull-out force. The robot should only trust holds where the lower
95% bound still exceeds the force it needs.
"""
from goat_opt.graspgp import crossing_dataset, fit_gp, max_safe_eta, predict, synthetic_pull_tests

# Noisy synthetic pull tests: hyperparameters by marginal likelihood.
data = synthetic_pull_tests(60, seed=0)
model = fit_gp(data)
print(f"kernel {model.kernel}, noise variance {model.noise_var:.3g}")
for eta in (1.0, 2.0, 4.0):
    mean, lo, hi = predict(model, eta)
    print(f"eta {eta:.1f}: {mean:5.2f} N  [{lo:5.2f}, {hi:5.2f}]")

# A dataset whose lower bound is 20 - 2 eta crosses 13.3 N at eta = 3.35.
crossing = fit_gp(crossing_dataset(), (1e4, 1e4, 1.0))
print(f"\neta* for 13.3 N: {max_safe_eta(crossing, 13.3):.4f}")
for f_min in (10.0, 13.3, 16.0):
    print(f"  f_min {f_min:5.1f} N -> eta* {max_safe_eta(crossing, f_min):.3f}")
print("f_min 0 N -> eta*", max_safe_eta(crossing, 0.0, (0.5, 6.0)))  # never crossed
