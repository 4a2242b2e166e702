"""Constrained design optimization.

The nonlinear program is solved in reduced space: the optimizer moves the
eight independent link lengths and the width range ``[omega_lo, omega_hi]``,
while the fingertip x coordinates follow from inverse kinematics at every
evaluation (so loop closure holds by construction). Inequalities are handled
by a Powell-Hestenes-Rockafellar augmented Lagrangian whose subproblems are
solved with a projected BFGS method on box bounds. Gradients are forward
differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .environment import BivariateLogNormal
from .errors import AllStartsFailed, InfeasibleProblem, NumericalBreakdown
from .linkage import INDEPENDENT_LINKS, REFERENCE_LENGTHS, ContactSpec, LinkageTopology, LinkLengths, Mechanism, ik_from
from .objective import DecisionVector, Evaluator, TaskConfig, WeightParams
from .statics import StaticsParams

FEAS_TOL = 1e-6


@dataclass(frozen=True)
class OptimizerConfig:
    max_outer: int = 50
    max_inner: int = 500  # objective evaluations per subproblem
    max_evals: int = 160  # evaluation budget for a whole run
    fd_step: float = 1e-6  # relative forward-difference step
    feas_tol: float = FEAS_TOL
    mu0: float = 100.0
    mu_growth: float = 10.0
    gtol: float = 1e-8
    ftol: float = 1e-10
    margin: float = 0.05  # internal tightening (mm) of inequality constraints
    n_bases: int = 3
    scales: tuple = tuple(np.round(np.linspace(0.05, 2.0, 10), 10))
    seeds: tuple = tuple(range(10))
    perturbation: float = 0.05  # log-normal relative noise of seeded starts

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["scales"] = list(self.scales)
        d["seeds"] = list(self.seeds)
        return d


@dataclass
class ProblemSpec:
    topo: LinkageTopology
    env: BivariateLogNormal
    task: TaskConfig = field(default_factory=TaskConfig)
    statics: StaticsParams = field(default_factory=StaticsParams)
    weights: WeightParams = field(default_factory=WeightParams)
    config: OptimizerConfig = field(default_factory=OptimizerConfig)

    @property
    def n_vars(self) -> int:
        return len(INDEPENDENT_LINKS) + 2

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        t = self.task
        lb = np.array([0.0] + [t.link_lo] * (len(INDEPENDENT_LINKS) - 1) + [1.0, 1.0])
        ub = np.array([t.link_hi] * len(INDEPENDENT_LINKS) + [10.0 * t.link_hi, 10.0 * t.link_hi])
        return lb, ub

    def check(self) -> None:
        t = self.task
        if not t.link_lo < t.link_hi:
            raise InfeasibleProblem(f"link bounds inverted: {t.link_lo} >= {t.link_hi}")
        if not t.theta_lo < t.theta_hi:
            raise InfeasibleProblem(f"angle bounds inverted: {t.theta_lo} >= {t.theta_hi}")


@dataclass
class Solution:
    decision: DecisionVector
    objective: float
    max_violation: float
    start_id: int
    seed: int
    iterations: int
    status: str  # converged | max-iter | infeasible
    initial_objective: float = math.inf
    initial_violation: float = math.inf
    evaluations: int = 0

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.objective) and self.max_violation <= FEAS_TOL

    def to_dict(self) -> dict:
        return {
            "decision": self.decision.to_dict(),
            "objective": _json_float(self.objective),
            "max_violation": _json_float(self.max_violation),
            "start_id": self.start_id,
            "seed": self.seed,
            "iterations": self.iterations,
            "status": self.status,
            "initial_objective": _json_float(self.initial_objective),
            "initial_violation": _json_float(self.initial_violation),
            "evaluations": self.evaluations,
        }


def _json_float(v: float):
    return float(v) if math.isfinite(v) else None


# -- generic augmented Lagrangian -------------------------------------------


@dataclass
class _Point:
    x: np.ndarray
    f: float
    c: np.ndarray  # internal (scaled, tightened) inequalities, <= 0 feasible
    viol: float  # problem-defined raw violation
    state: object = None
    gf: np.ndarray | None = None  # forward-difference gradient of f
    jc: np.ndarray | None = None  # forward-difference Jacobian of c


class _Counter:
    def __init__(self, fun, budget):
        self.fun = fun
        self.budget = budget
        self.used = 0

    @property
    def exhausted(self) -> bool:
        return self.used >= self.budget

    def __call__(self, x, warm=None) -> _Point:
        self.used += 1
        f, c, viol, state = self.fun(x, warm)
        if isinstance(f, float) and math.isnan(f) or np.any(np.isnan(c)):
            raise NumericalBreakdown(f"NaN at x={x}")
        return _Point(np.array(x, float), float(f), np.asarray(c, float), float(viol), state)


def _phr(p: _Point, lam: np.ndarray, mu: float) -> float:
    if not math.isfinite(p.f) or not np.all(np.isfinite(p.c)):
        return math.inf
    t = np.maximum(0.0, lam + mu * p.c)
    return p.f + (t @ t - lam @ lam) / (2.0 * mu)


def _fd_derivatives(ev: _Counter, p: _Point, lb, ub, rel) -> None:
    """Fill ``p.gf`` and ``p.jc``; probes that fail on both sides give zeros."""
    n = p.x.size
    gf = np.zeros(n)
    jc = np.zeros((p.c.size, n))
    for j in range(n):
        h = rel * max(abs(p.x[j]), 1.0)
        if p.x[j] + h > ub[j]:
            h = -h
        xp = p.x.copy()
        xp[j] += h
        q = ev(xp, p.state)
        if not math.isfinite(q.f) and lb[j] <= p.x[j] - h <= ub[j]:
            h = -h
            xp[j] = p.x[j] + h
            q = ev(xp, p.state)
        if math.isfinite(q.f) and np.all(np.isfinite(q.c)):
            gf[j] = (q.f - p.f) / h
            jc[:, j] = (q.c - p.c) / h
    p.gf, p.jc = gf, jc


def _grad(ev: _Counter, p: _Point, lam, mu, lb, ub, rel) -> np.ndarray:
    if p.gf is None:
        _fd_derivatives(ev, p, lb, ub, rel)
    return p.gf + p.jc.T @ np.maximum(0.0, lam + mu * p.c)


def _projected_gradient_norm(x, g, lb, ub) -> float:
    pg = np.clip(x - g, lb, ub) - x
    return float(np.max(np.abs(pg)))


def _bfgs(ev: _Counter, p: _Point, lam, mu, lb, ub, cfg: OptimizerConfig, step0: float, on_accept=None):
    """Projected BFGS on the augmented Lagrangian; returns the final point and iteration count."""
    start_used = ev.used
    L = _phr(p, lam, mu)
    g = _grad(ev, p, lam, mu, lb, ub, cfg.fd_step)
    n = p.x.size
    H = np.eye(n) * (step0 / max(np.max(np.abs(g)), 1e-12))
    it = 0
    while ev.used - start_used < cfg.max_inner and not ev.exhausted:
        if _projected_gradient_norm(p.x, g, lb, ub) <= cfg.gtol:
            break
        free = ~(((p.x <= lb) & (g > 0)) | ((p.x >= ub) & (g < 0)))
        d = np.zeros(n)
        d[free] = -(H[np.ix_(free, free)] @ g[free])
        if g @ d >= 0:  # not a descent direction: restart on steepest descent
            H = np.eye(n) * (step0 / max(np.max(np.abs(g)), 1e-12))
            d = np.where(free, -H.diagonal() * g, 0.0)
        t, accepted = 1.0, None
        for _ in range(30):
            xt = np.clip(p.x + t * d, lb, ub)
            if np.array_equal(xt, p.x):
                break
            q = ev(xt, p.state)
            Lq = _phr(q, lam, mu)
            if math.isfinite(Lq) and Lq <= L + 1e-4 * (g @ (xt - p.x)):
                accepted = (q, Lq)
                break
            if ev.exhausted:
                break
            t *= 0.5
        if accepted is None:
            break
        q, Lq = accepted
        if on_accept is not None:
            on_accept(q)
        gq = _grad(ev, q, lam, mu, lb, ub, cfg.fd_step)
        s, y = q.x - p.x, gq - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if it == 0:
                H = np.eye(n) * (sy / (y @ y))
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        dL = L - Lq
        p, g, L = q, gq, Lq
        it += 1
        if dL <= cfg.ftol * (1.0 + abs(L)):
            break
    return p, it


def minimize_al(fun, x0, lb, ub, cfg: OptimizerConfig, warm=None, step0: float | None = None):
    """Augmented-Lagrangian minimization of ``f`` subject to ``c <= 0`` and box bounds.

    ``fun(x, warm) -> (f, c, violation, state)``; ``state`` is handed back as
    the warm start of nearby evaluations. Returns a dict with the best point
    whose ``violation <= feas_tol`` (or the last point if none) and counters.
    """
    lb = np.asarray(lb, float)
    ub = np.asarray(ub, float)
    ev = _Counter(fun, cfg.max_evals)
    p = ev(np.clip(np.asarray(x0, float), lb, ub), warm)
    if not math.isfinite(p.f):
        return {"point": p, "best": None, "iterations": 0, "status": "infeasible", "evaluations": ev.used}
    if step0 is None:
        step0 = 0.05 * max(1.0, float(np.max(np.abs(p.x))))
    lam = np.zeros(p.c.size)
    mu = cfg.mu0
    start = p
    feasible: list[_Point] = [p] if p.viol <= cfg.feas_tol else []

    def keep(q: _Point):
        if q.viol <= cfg.feas_tol:
            feasible.append(q)

    prev_v = math.inf
    f_prev = p.f
    total_it = 0
    status = "max-iter"
    for _ in range(cfg.max_outer):
        p, it = _bfgs(ev, p, lam, mu, lb, ub, cfg, step0, keep)
        total_it += it
        v = float(np.max(p.c, initial=0.0))
        lam = np.maximum(0.0, lam + mu * p.c)
        if v <= 0.0 and abs(p.f - f_prev) <= 1e-9 * (1.0 + abs(p.f)):
            status = "converged"
            break
        if v > 0.25 * prev_v:
            mu *= cfg.mu_growth
        prev_v, f_prev = v, p.f
        if ev.exhausted:
            break
    # The final iterate is the multiplier-consistent answer; fall back to the
    # best feasible accepted iterate when it is infeasible or worse than x0.
    best = None
    if p.viol <= cfg.feas_tol and (start.viol > cfg.feas_tol or p.f <= start.f):
        best = p
    elif feasible:
        best = min(feasible, key=lambda q: q.f)
    return {"point": p, "best": best, "iterations": total_it, "status": status, "evaluations": ev.used}


# -- design problem ------------------------------------------------------------


class DesignProblem:
    """Maps the 10-vector ``(independent lengths, omega_lo, omega_hi)`` to objective and constraints."""

    def __init__(self, problem: ProblemSpec):
        problem.check()
        self.problem = problem
        p = problem
        self.evaluator = Evaluator(p.topo, p.env, p.task, p.statics, p.weights)
        t = p.task
        n = t.n_samples
        m = p.config.margin
        # tip (2n), stroke, angle (4n) rows of the residual vector, plus width ordering
        self._rows = np.r_[np.arange(1, 2 * n + 2), np.arange(2 * n + 2 + 30, 2 * n + 2 + 30 + 4 * n)]
        self._scale = np.r_[np.full(2 * n + 1, 10.0), np.full(4 * n, 0.1), 10.0]
        self._margin = np.r_[np.full(2 * n + 1, m), np.full(4 * n, m * 0.01), m]  # angles: 0.01 rad per mm

    def lengths(self, x) -> LinkLengths:
        return LinkLengths.from_independent(x[: len(INDEPENDENT_LINKS)])

    def residuals(self, x, samples) -> np.ndarray:
        return self.evaluator.constraints(self.lengths(x), x[-2], x[-1], samples)

    def __call__(self, x, warm=None):
        lengths = self.lengths(x)
        run = self.evaluator.run(lengths, float(x[-2]), float(x[-1]), warm=warm, quick=True)
        if not math.isfinite(run.objective):
            n = self._scale.size
            return math.inf, np.full(n, math.inf), math.inf, warm
        raw = self.evaluator.constraints(lengths, x[-2], x[-1], run.samples)
        order = x[-2] + 1.0 - x[-1]
        c = np.r_[raw[self._rows], order]
        viol = max(float(np.max(raw)), order)
        c_int = (c + self._margin) / self._scale
        return run.objective, c_int, viol, [s.q for s in run.samples]


def _decision_from(dp: DesignProblem, x, samples=None) -> DecisionVector:
    lengths = dp.lengths(x)
    if samples is None:
        run = dp.evaluator.run(lengths, float(x[-2]), float(x[-1]))
        samples = run.samples
    m_x = np.array([s.m_i[0] for s in samples]) if samples else None
    n_x = np.array([s.n_i[0] for s in samples]) if samples else None
    return DecisionVector(lengths, float(x[-2]), float(x[-1]), m_x, n_x)


def _decision_x(d: DecisionVector) -> np.ndarray:
    return np.concatenate([d.lengths.independent(INDEPENDENT_LINKS), [d.omega_lo, d.omega_hi]])


def reachable_widths(topo: LinkageTopology, lengths: LinkLengths, psi: float, widths) -> np.ndarray:
    """Boolean mask of widths reachable by continuation from the assembled reference pose."""
    mech = Mechanism(topo, lengths)
    ok = np.zeros(len(widths), bool)
    try:
        q0 = mech.assemble(mech.reference_guess())
    except Exception:
        return ok
    # seed at the reachable width closest to the natural pose, then sweep
    # outward by continuation
    natural = mech.world(q0, "M")[1] - mech.world(q0, "N")[1]
    widths = np.asarray(widths, float)
    seed_q, k0 = None, None
    for k in np.argsort(np.abs(widths - natural), kind="stable")[:40]:
        try:
            seed_q = ik_from(mech, q0, ContactSpec(float(widths[k]), psi), steps=(1, 8), max_iter=30)
            k0 = int(k)
            break
        except Exception:
            continue
    if seed_q is None:
        return ok
    for order in (range(k0, len(widths)), range(k0, -1, -1)):
        q = seed_q
        for k in order:
            try:
                q = ik_from(mech, q, ContactSpec(float(widths[k]), psi), steps=(1, 8), max_iter=30)
                ok[k] = True
            except Exception:
                break
    return ok


def phase_one(dp: DesignProblem, x) -> np.ndarray | None:
    """Restore a start to a finite, preferably feasible point.

    Clips to the bounds, fits the width range inside the design's reachable
    band when needed, then shrinks the whole design uniformly while the
    fingertip reach or the actuator stroke exceed their limits. Returns
    ``None`` when no finite objective can be found.
    """
    x = _finite_start(dp, x)
    if x is None:
        return None
    task = dp.problem.task
    lb, ub = dp.problem.bounds()
    for _ in range(6):
        if dp(x)[2] <= dp.problem.config.feas_tol:
            break
        run = dp.evaluator.run(dp.lengths(x), float(x[-2]), float(x[-1]))
        tip = max(max(s.m_i[0], s.n_i[0]) for s in run.samples)
        d = np.array([s.d_i for s in run.samples])
        span = float(np.max(np.linalg.norm(d[:, None] - d[None], axis=-1)))
        k = min(1.0, (task.tip_upper - 1.0) / tip if tip > 0 else 1.0, (task.stroke - 1.0) / span if span > 0 else 1.0)
        if k >= 1.0:
            break
        y = x.copy()
        y[:-2] *= k
        y[-2:] *= k
        y = _finite_start(dp, np.clip(y, lb, ub))
        if y is None:
            break
        x = y
    return x


def _finite_start(dp: DesignProblem, x) -> np.ndarray | None:
    lb, ub = dp.problem.bounds()
    x = np.clip(np.asarray(x, float), lb, ub)
    if math.isfinite(dp(x)[0]):
        return x
    lengths = dp.lengths(x)
    widths = np.linspace(2.0, 400.0, 200)
    ok = reachable_widths(dp.problem.topo, lengths, dp.problem.task.psi, widths)
    if not ok.any():
        return None
    # longest contiguous reachable band
    best, run_start = (0, 0), None
    for k, flag in enumerate(np.r_[ok, False]):
        if flag and run_start is None:
            run_start = k
        elif not flag and run_start is not None:
            if k - run_start > best[1] - best[0]:
                best = (run_start, k)
            run_start = None
    lo, hi = widths[best[0]], widths[best[1] - 1]
    centre, half = 0.5 * (lo + hi), 0.4 * (hi - lo)
    for _ in range(6):
        if half < 1.0:
            break
        x[-2], x[-1] = centre - half, centre + half
        if math.isfinite(dp(x)[0]):
            return x
        half *= 0.5
    return None


def solve(problem: ProblemSpec, x0: DecisionVector, seed: int = 0, start_id: int = 0, warm=None) -> Solution:
    """Augmented-Lagrangian run from ``x0``; returns the best feasible iterate.

    Deterministic in ``(problem, x0)``; ``seed`` and ``start_id`` are recorded
    as provenance.
    """
    dp = DesignProblem(problem)
    cfg = problem.config
    lb, ub = problem.bounds()
    x_init = _decision_x(x0)
    f0, _, v0, _ = dp(x_init, warm)
    x = phase_one(dp, x_init)
    if x is None:
        return Solution(x0, math.inf, math.inf, start_id, seed, 0, "infeasible", f0, v0, 0)
    res = minimize_al(dp, x, lb, ub, cfg, warm=None, step0=2.0)
    best = res["best"]
    if best is None:
        p = res["point"]
        dec = _decision_from(dp, p.x)
        return Solution(dec, p.f, p.viol, start_id, seed, res["iterations"], "infeasible", f0, v0, res["evaluations"])
    dec = _decision_from(dp, best.x)
    status = res["status"] if best is res["point"] else "max-iter"
    return Solution(dec, best.f, best.viol, start_id, seed, res["iterations"], status, f0, v0, res["evaluations"])


# -- multi-start -----------------------------------------------------------------


def base_designs(topo: LinkageTopology | None = None) -> list[DecisionVector]:
    """Three assemblable starting designs.

    The first is the published optimum; the other two are hand-made variants
    with a shorter finger and a longer coupler respectively.
    """
    ref = REFERENCE_LENGTHS
    alt1 = LinkLengths.from_independent([0.0, 36.0, 24.0, 50.0, 43.0, 22.0, 10.0, 19.0])
    alt2 = LinkLengths.from_independent([0.0, 39.0, 25.0, 53.0, 45.0, 25.0, 11.0, 16.0])
    return [
        DecisionVector(ref, 38.02, 128.5),
        DecisionVector(alt1, 45.0, 115.0),
        DecisionVector(alt2, 45.0, 115.0),
    ]


@dataclass
class Start:
    start_id: int
    base: int
    scale: float
    seed: int
    decision: DecisionVector


def with_contacts(problem: ProblemSpec, d: DecisionVector) -> DecisionVector:
    """Attach inverse-kinematics contact coordinates to a design."""
    ev = Evaluator(problem.topo, problem.env, problem.task, problem.statics, problem.weights)
    run = ev.run(d.lengths, d.omega_lo, d.omega_hi)
    if not run.samples:
        raise InfeasibleProblem(f"base design is not assemblable: {run.diagnostic}")
    return replace(d, m_x=np.array([s.m_i[0] for s in run.samples]), n_x=np.array([s.n_i[0] for s in run.samples]))


def make_start(base: DecisionVector, scale: float, seed: int, perturbation: float) -> DecisionVector:
    """Scale a base design (lengths, width range and contact coordinates) by
    ``scale`` and apply seeded multiplicative noise to the free variables."""
    d = base.scaled(scale)
    rng = np.random.default_rng(seed)
    noise = np.exp(perturbation * rng.standard_normal(len(INDEPENDENT_LINKS) + 2))
    vals = d.lengths.independent(INDEPENDENT_LINKS) * noise[:-2]
    return DecisionVector(LinkLengths.from_independent(vals), d.omega_lo * noise[-2], d.omega_hi * noise[-1], d.m_x, d.n_x)


def build_starts(problem: ProblemSpec, bases, scales, seeds) -> list[Start]:
    cfg = problem.config
    bases = [with_contacts(problem, b) if b.m_x is None else b for b in bases]
    starts = []
    for b, base in enumerate(bases):
        for scale in scales:
            for seed in seeds:
                starts.append(Start(len(starts), b, float(scale), int(seed), make_start(base, scale, seed, cfg.perturbation)))
    return starts


def pick_best(solutions: list[Solution]) -> Solution | None:
    feasible = [s for s in solutions if s.feasible]
    if not feasible:
        return None
    return min(feasible, key=lambda s: (s.objective, s.start_id))


def multi_start(problem: ProblemSpec, base_designs: list[DecisionVector], scales, seeds, jobs: int = 1, progress=None):
    """Run ``solve`` from every (base, scale, seed) start.

    Returns ``(best, solutions)`` where ``solutions`` is ordered by start id;
    raises ``AllStartsFailed`` when no run ends feasible.
    """
    if not base_designs:
        raise ValueError("at least one base design is required")
    problem.check()
    starts = build_starts(problem, base_designs, scales, seeds)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(solve, problem, s.decision, s.seed, s.start_id) for s in starts]
            solutions = [f.result() for f in futures]
    else:
        solutions = []
        for s in starts:
            solutions.append(solve(problem, s.decision, s.seed, s.start_id))
            if progress is not None:
                progress(s, solutions[-1])
    best = pick_best(solutions)
    if best is None:
        raise AllStartsFailed(f"none of {len(solutions)} starts reached feasibility")
    return best, solutions


def cluster_count(solutions: list[Solution], best: Solution, tol: float = 1e-6) -> int:
    """Number of feasible solutions whose objective is within ``tol`` of the best."""
    return sum(1 for s in solutions if s.feasible and abs(s.objective - best.objective) <= tol)
