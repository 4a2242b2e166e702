"""Environment-weighted coverage objective and design constraints.

For a candidate design the graspable width range ``[omega_lo, omega_hi]`` is
sampled at ``n`` widths. At every width the fingertip heights are fixed by
the contact specification, inverse kinematics gives the fingertip x
coordinates and thus the minimum graspable hold height ``H``, and statics
gives a safety factor that is turned into a weight. The objective is one
minus the weighted probability mass of the graspable region under the hold
distribution, so smaller is better.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .environment import DEFAULT_GRID_POINTS, BivariateLogNormal
from .errors import BranchViolation, NoAssembly, SingularJacobian, SingularTransmission, Unreachable
from .linkage import (
    INDEPENDENT_LINKS,
    LINK_IDS,
    ContactSpec,
    LinkageTopology,
    LinkLengths,
    Mechanism,
    hold_height,
    ik_from,
)
from .statics import StaticsParams, actuator_force, contact_magnitudes, required_ratio


def derive_gamma_tilde(alpha: float, phi: float, gamma: float) -> float:
    """SF target that puts the peak of the weighting function at ``gamma``.

    Setting ``d(omega)/d(SF) = 0`` at ``SF = gamma`` gives
    ``gamma_tilde = gamma - 1 / (2 alpha (gamma - phi)^2)``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not gamma > phi:
        raise ValueError("gamma must exceed phi")
    return gamma - 1.0 / (2.0 * alpha * (gamma - phi) ** 2)


@dataclass(frozen=True)
class WeightParams:
    alpha: float = 0.1
    phi: float = 1.5
    gamma: float = 3.5
    gamma_tilde: float | None = None  # derived from the other three when omitted

    def __post_init__(self):
        if not self.phi > 0:
            raise ValueError("phi must be positive")
        gt = derive_gamma_tilde(self.alpha, self.phi, self.gamma)
        if self.gamma_tilde is None:
            object.__setattr__(self, "gamma_tilde", gt)
        elif not self.gamma_tilde < self.gamma:
            raise ValueError("gamma_tilde must be below gamma")


def weight(sf, params: WeightParams):
    """Auto-tuning weight; ``-inf`` at or below the SF lower bound ``phi``."""
    sf_arr = np.asarray(sf, dtype=float)
    a, phi, gt = params.alpha, params.phi, params.gamma_tilde
    with np.errstate(divide="ignore", invalid="ignore"):
        w = -a / (sf_arr - phi) - (a * (sf_arr - gt)) ** 2 + 1.0
    w = np.where(sf_arr > phi, w, -np.inf)
    return w if w.ndim else float(w)


@dataclass(frozen=True)
class TaskConfig:
    psi: float = 12.0
    h_upper: float = 200.0
    tip_upper: float = 50.0
    stroke: float = 30.0
    link_lo: float = 10.0
    link_hi: float = 200.0
    theta_lo: float = -math.pi / 2
    theta_hi: float = math.pi / 2
    eps_loop: float = 1e-6
    n_samples: int = 20
    grid_points: int = DEFAULT_GRID_POINTS

    def __post_init__(self):
        for name in ("h_upper", "tip_upper", "stroke", "link_lo", "link_hi", "eps_loop"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.psi < 0:
            raise ValueError("psi must be non-negative")
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")
        if self.grid_points < 4:
            raise ValueError("grid_points must be at least 4")

    @property
    def consistent(self) -> bool:
        return self.link_lo < self.link_hi and self.theta_lo < self.theta_hi


@dataclass
class WorkspaceSample:
    omega_i: float
    m_i: np.ndarray
    n_i: np.ndarray
    theta_i: dict
    h_i: float
    sf_i: float
    weight_i: float
    cdf_delta_i: float
    d_i: np.ndarray = field(repr=False, default=None)
    q: np.ndarray = field(repr=False, default=None)


@dataclass
class DecisionVector:
    """Design variables: symmetric lengths, contact x-coordinates and width range.

    ``m_x`` and ``n_x`` are determined by inverse kinematics once the other
    variables are fixed; they may be ``None`` before the first evaluation.
    """

    lengths: LinkLengths
    omega_lo: float
    omega_hi: float
    m_x: np.ndarray | None = None
    n_x: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "lengths": self.lengths.to_dict(),
            "omega_lo": self.omega_lo,
            "omega_hi": self.omega_hi,
            "m_x": None if self.m_x is None else [float(v) for v in self.m_x],
            "n_x": None if self.n_x is None else [float(v) for v in self.n_x],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionVector":
        return cls(
            LinkLengths({k: float(v) for k, v in d["lengths"].items()}),
            float(d["omega_lo"]),
            float(d["omega_hi"]),
            None if d.get("m_x") is None else np.asarray(d["m_x"], float),
            None if d.get("n_x") is None else np.asarray(d["n_x"], float),
        )

    def scaled(self, k: float) -> "DecisionVector":
        return DecisionVector(
            self.lengths.scaled(k),
            k * self.omega_lo,
            k * self.omega_hi,
            None if self.m_x is None else k * np.asarray(self.m_x),
            None if self.n_x is None else k * np.asarray(self.n_x),
        )


def sample_workspace(omega_lo: float, omega_hi: float, n: int) -> np.ndarray:
    """``n`` evenly spaced widths including both ends."""
    if not omega_lo < omega_hi:
        raise ValueError(f"degenerate width range [{omega_lo}, {omega_hi}]")
    if n < 2:
        raise ValueError("n must be at least 2")
    return np.linspace(omega_lo, omega_hi, n)


class Evaluation(tuple):
    """``(objective, samples)`` pair carrying a ``diagnostic`` string when infinite."""

    def __new__(cls, objective, samples, diagnostic=None):
        self = super().__new__(cls, (objective, samples))
        self.diagnostic = diagnostic
        return self

    @property
    def objective(self) -> float:
        return self[0]

    @property
    def samples(self) -> list[WorkspaceSample]:
        return self[1]


def _cell_shape(grid_points: int) -> tuple[int, int]:
    # Rectangles are narrow in width and tall in height; a fixed split keeps
    # the quadrature smooth in the design variables.
    nx = max(2, int(round(math.sqrt(grid_points / 10.0))))
    return nx, max(2, grid_points // nx)


def rectangle_masses(env: BivariateLogNormal, omegas, heights, h_upper: float, grid_points: int) -> np.ndarray:
    """Midpoint-rule mass of ``[omega_i, omega_i+1] x [H_i, h_upper]`` for each i."""
    omegas = np.asarray(omegas, float)
    lo_h = np.minimum(np.asarray(heights, float)[:-1], h_upper)
    nx, ny = _cell_shape(grid_points)
    dw = np.diff(omegas)
    dh = h_upper - lo_h
    xs = omegas[:-1, None] + (np.arange(nx) + 0.5)[None, :] * (dw / nx)[:, None]
    ys = lo_h[:, None] + (np.arange(ny) + 0.5)[None, :] * (dh / ny)[:, None]
    # separable evaluation of the log-normal density on each tensor grid
    (m1, m2), (s1, s2), r = env.mu, env.sigma, env.rho
    k = 1.0 - r * r
    with np.errstate(divide="ignore"):
        z1 = (np.log(xs) - m1) / s1
        z2 = (np.log(ys) - m2) / s2
    g1 = np.exp(-0.5 * z1 * z1 / k) / xs
    g2 = np.exp(-0.5 * z2 * z2 / k) / ys
    g1 = np.where(xs > 0, g1, 0.0)
    g2 = np.where(ys > 0, g2, 0.0)
    cross = np.exp((r / k) * z1[:, :, None] * z2[:, None, :])
    total = np.einsum("ij,ijk,ik->i", g1, cross, g2)
    norm = 2.0 * math.pi * s1 * s2 * math.sqrt(k)
    return total / norm * (dw / nx) * (dh / ny)


def weighted_objective(weights, masses) -> float:
    """``1 - sum(w_i * CDF_i)`` over the ``n - 1`` rectangles (left-edge weights)."""
    w = np.asarray(weights, float)
    m = np.asarray(masses, float)
    return float(1.0 - np.dot(w[: m.size], m))


@dataclass
class _Run:
    objective: float
    samples: list[WorkspaceSample]
    diagnostic: str | None = None


class Evaluator:
    """Objective and constraint evaluation for a fixed problem setup.

    ``run`` accepts per-sample warm starts (body poses from a nearby design)
    so finite-difference probes need only a couple of Newton steps each.
    """

    def __init__(self, topo: LinkageTopology, env: BivariateLogNormal, task: TaskConfig, statics: StaticsParams, wp: WeightParams):
        self.topo = topo
        self.env = env
        self.task = task
        self.statics = statics
        self.wp = wp
        self.fa = actuator_force(topo, statics)
        self.rf_min = required_ratio(statics)

    def _solve_poses(self, mech: Mechanism, omegas, warm, quick: bool):
        steps, max_iter = ((1, 8), 30) if quick else ((1, 4, 16, 64), 100)
        qs, prev = [], None
        for i, om in enumerate(omegas):
            contact = ContactSpec(float(om), self.task.psi)
            starts = []
            if warm is not None:
                starts.append(warm[i])
            if prev is not None:
                starts.append(prev)
            if not starts:
                starts.append(mech.assemble(mech.reference_guess()))
            last = None
            for q0 in starts:
                try:
                    q = ik_from(mech, q0, contact, steps, max_iter)
                    break
                except (Unreachable, BranchViolation) as exc:
                    last = exc
            else:
                raise last
            qs.append(q)
            prev = q
        return qs

    def run(self, lengths: LinkLengths, omega_lo: float, omega_hi: float, warm=None, quick: bool = False) -> _Run:
        task = self.task
        if not (np.isfinite(omega_lo) and np.isfinite(omega_hi)) or not 0 < omega_lo < omega_hi:
            return _Run(math.inf, [], "DegenerateRange")
        omegas = sample_workspace(omega_lo, omega_hi, task.n_samples)
        mech = Mechanism(self.topo, lengths)
        try:
            qs = self._solve_poses(mech, omegas, warm, quick)
        except (Unreachable, NoAssembly, SingularJacobian) as exc:
            return _Run(math.inf, [], f"Unreachable: {exc}")
        except BranchViolation as exc:
            return _Run(math.inf, [], f"BranchViolation: {exc}")
        samples = []
        for om, q in zip(omegas, qs):
            M, N, D = mech.world(q, "M"), mech.world(q, "N"), mech.world(q, "D")
            try:
                s = contact_magnitudes(mech, q, self.fa)
                r_f = abs(s[1] - s[0]) / self.statics.f_actuator
            except SingularTransmission:
                r_f = math.inf
            sf = r_f / self.rf_min if self.rf_min > 0 else math.inf
            samples.append(
                WorkspaceSample(
                    float(om), M, N, mech.crank_angles(q), hold_height(M, N), sf, float(weight(sf, self.wp)), 0.0, D, q
                )
            )
        h = np.array([s.h_i for s in samples])
        masses = rectangle_masses(self.env, omegas, h, task.h_upper, task.grid_points)
        for s, m in zip(samples, masses):
            s.cdf_delta_i = float(m)
        w = np.array([s.weight_i for s in samples])
        if not np.all(np.isfinite(w)):
            return _Run(math.inf, samples, "SafetyFactorBelowBound")
        return _Run(weighted_objective(w, masses), samples)

    def constraints(self, lengths: LinkLengths, omega_lo, omega_hi, samples, m_x=None, n_x=None) -> np.ndarray:
        """Signed residuals, feasible when ``<= 0``; see ``constraint_names``."""
        task = self.task
        n = task.n_samples
        out = []
        if len(samples) == n:
            mech = Mechanism(self.topo, lengths)
            a, b = mech.cut_points
            closure = max(float(np.hypot(*(mech.world(s.q, a) - mech.world(s.q, b)))) for s in samples)
            if m_x is not None and n_x is not None:
                closure = max(
                    closure,
                    float(np.max(np.abs(np.asarray(m_x) - [s.m_i[0] for s in samples]))),
                    float(np.max(np.abs(np.asarray(n_x) - [s.n_i[0] for s in samples]))),
                )
            out.append(closure - task.eps_loop)
            out.extend(s.m_i[0] - task.tip_upper for s in samples)
            out.extend(s.n_i[0] - task.tip_upper for s in samples)
            d = np.array([s.d_i for s in samples])
            span = np.max(np.hypot(*(d[:, None, :] - d[None, :, :]).transpose(2, 0, 1)))
            out.append(float(span) - task.stroke)
        else:
            out.extend([math.inf] * (2 + 2 * n))
        for link in LINK_IDS[1:]:
            out.append(task.link_lo - lengths[link])
            out.append(lengths[link] - task.link_hi)
        out.append(-lengths["L1"])
        out.append(lengths["L1"] - task.link_hi)
        if len(samples) == n:
            for s in samples:
                for name in ("theta3", "theta6"):
                    out.append(task.theta_lo - s.theta_i[name])
                    out.append(s.theta_i[name] - task.theta_hi)
        else:
            out.extend([math.inf] * (4 * n))
        return np.asarray(out, dtype=float)


def constraint_names(task: TaskConfig) -> list[str]:
    n = task.n_samples
    names = ["loop_closure"]
    names += [f"tip_M[{i}]" for i in range(n)] + [f"tip_N[{i}]" for i in range(n)]
    names.append("stroke")
    for link in LINK_IDS[1:]:
        names += [f"{link}>=lo", f"{link}<=hi"]
    names += ["L1>=0", "L1<=hi"]
    for i in range(n):
        for a in ("theta3", "theta6"):
            names += [f"{a}[{i}]>=lo", f"{a}[{i}]<=hi"]
    return names


def evaluate(
    decision: DecisionVector,
    topo: LinkageTopology,
    env: BivariateLogNormal,
    task: TaskConfig,
    statics: StaticsParams,
    wp: WeightParams,
) -> Evaluation:
    """Objective ``1 - sum(omega_i * CDF_i)`` and the per-sample records.

    Infeasible designs (degenerate range, unreachable widths, safety factor at
    or below ``phi``) give ``+inf`` with a diagnostic instead of raising.
    """
    run = Evaluator(topo, env, task, statics, wp).run(decision.lengths, decision.omega_lo, decision.omega_hi)
    return Evaluation(run.objective, run.samples, run.diagnostic)


def constraint_residuals(decision: DecisionVector, topo: LinkageTopology, task: TaskConfig) -> np.ndarray:
    """Constraint residual vector (``<= 0`` feasible) in ``constraint_names`` order."""
    ev = Evaluator(topo, _UNIT_ENV, task, StaticsParams(), WeightParams())
    run = ev.run(decision.lengths, decision.omega_lo, decision.omega_hi)
    samples = run.samples if not (run.diagnostic or "").startswith(("Unreachable", "BranchViolation", "Degenerate")) else []
    return ev.constraints(decision.lengths, decision.omega_lo, decision.omega_hi, samples, decision.m_x, decision.n_x)


_UNIT_ENV = BivariateLogNormal((0.0, 0.0), (1.0, 1.0), 0.0)


def independent_vector(decision: DecisionVector) -> np.ndarray:
    return np.concatenate([decision.lengths.independent(INDEPENDENT_LINKS), [decision.omega_lo, decision.omega_hi]])
