"""A short multi-start design run.

The full study uses 3 base designs x 10 scales x 10 seeds; this demo uses
one base and a handful of scales so it finishes in well under a minute.
"""
from goat_opt.environment import SYNTHETIC_DEFAULT
from goat_opt.linkage import load_topology
from goat_opt.objective import evaluate
from goat_opt.optimizer import ProblemSpec, base_designs, cluster_count, multi_start

problem = ProblemSpec(load_topology(), SYNTHETIC_DEFAULT)
bases = base_designs()[:1]


def show(start, sol):
    print(f"start {start.start_id}: scale {start.scale:.2f} -> {sol.status:9s} objective {sol.objective:.5f}")


best, sols = multi_start(problem, bases, scales=[0.8, 1.0, 1.3], seeds=[0, 1], progress=show)
obj, samples = evaluate(best.decision, problem.topo, problem.env, problem.task, problem.statics, problem.weights)
coverage = sum(s.cdf_delta_i for s in samples)

d = best.decision
print("\nbest lengths:", {k: round(d.lengths[k], 2) for k in ("L2", "L3", "L4", "L8", "L9", "L10", "L14")})
print(f"width range [{d.omega_lo:.2f}, {d.omega_hi:.2f}] mm")
print(f"theoretical graspable range CDF = {100 * coverage:.1f}%")
print(f"{cluster_count(sols, best)} run(s) share the best objective")
print("SF along the range:", " ".join(f"{s.sf_i:.2f}" for s in samples[::4]))
