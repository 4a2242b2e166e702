"""Static force transmission from the actuator to the fingertips.

With both fingertips in contact the two-DoF mechanism is locked, and the
actuator force pulling on pin D is balanced by the two contact normal
forces. ``static_equilibrium`` solves this by virtual work on the reduced
coordinates (the position of D); ``equilibrium_oracle`` assembles the full
per-body force and moment balance instead and is used as a cross-check.

Contact forces are reported as the forces the gripper applies to the held
object; contacts are frictionless and act along the grasp direction (y).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoContact, SingularTransmission
from .linkage import Configuration, ContactSpec, LinkageTopology, LinkLengths, Mechanism

COND_LIMIT = 1e12


@dataclass(frozen=True)
class StaticsParams:
    """Force-analysis parameters.

    ``f_actuator`` and ``friction_mu`` are design assumptions; ``required_pull``
    is the load (N) each gripper has to hold.
    """

    f_actuator: float = 80.0
    friction_mu: float = 1.0
    required_pull: float = 13.3

    def __post_init__(self):
        if not self.f_actuator > 0:
            raise ValueError("f_actuator must be positive")
        if not self.friction_mu > 0:
            raise ValueError("friction_mu must be positive")
        if self.required_pull < 0:
            raise ValueError("required_pull must be non-negative")


@dataclass(frozen=True)
class ForceState:
    f_m: np.ndarray
    f_n: np.ndarray
    r_f: float
    sf: float


def actuator_force(topo: LinkageTopology, params: StaticsParams) -> np.ndarray:
    d = np.asarray(topo.actuator.get("direction", (-1.0, 0.0)), dtype=float)
    return params.f_actuator * d / np.linalg.norm(d)


def _check_contact(config: Configuration, contact: ContactSpec | None, tol: float = 1e-6):
    if config.M[1] <= config.N[1]:
        raise NoContact("fingertip M must lie above N")
    if contact is not None and (abs(config.M[1] - contact.m_y) > tol or abs(config.N[1] - contact.n_y) > tol):
        raise NoContact("configuration does not match the contact heights")


def contact_jacobian(topo: LinkageTopology, lengths: LinkLengths, config: Configuration) -> np.ndarray:
    """``d(M_y, N_y)/d(D)`` at a converged configuration, shape ``(2, 2)``."""
    mech = Mechanism(topo, lengths)
    _, J = mech.evaluate(config.q, mech.drive_point("D", config.D))
    if np.linalg.cond(J) > COND_LIMIT:
        raise SingularTransmission("kinematic Jacobian is singular at this pose")
    return _contact_jacobian(mech, config.q, J)


def _contact_jacobian(mech: Mechanism, q: np.ndarray, J: np.ndarray | None = None) -> np.ndarray:
    if J is None:
        _, J = mech.evaluate(q, mech.drive_point("D", mech.world(q, "D")))
    rhs = np.zeros((J.shape[0], 2))
    rhs[-2:] = np.eye(2)
    try:
        dq_dd = np.linalg.solve(J, rhs)
    except np.linalg.LinAlgError:
        raise SingularTransmission("kinematic Jacobian is singular at this pose") from None
    jm = mech.point_jacobian(q, "M")[1] @ dq_dd
    jn = mech.point_jacobian(q, "N")[1] @ dq_dd
    return np.vstack([jm, jn])


def contact_magnitudes(mech: Mechanism, q: np.ndarray, fa: np.ndarray) -> np.ndarray:
    """Signed y-components of the forces on the object at M and N."""
    A = _contact_jacobian(mech, q)
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    scale = np.abs(A).max()
    if not np.isfinite(det) or abs(det) <= 1e-12 * scale * scale:
        raise SingularTransmission("contact Jacobian is rank deficient")
    return np.linalg.solve(A.T, fa)


def static_equilibrium(
    topo: LinkageTopology,
    lengths: LinkLengths,
    config: Configuration,
    params: StaticsParams,
    contact: ContactSpec | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Contact forces ``(f_m, f_n)`` applied by the fingertips to the object.

    Virtual work on the mechanism gives ``f_act . dD = f_m . dM + f_n . dN``
    for every admissible ``dD``; with normal forces along y this is a 2x2
    system in the two force magnitudes.
    """
    _check_contact(config, contact)
    A = contact_jacobian(topo, lengths, config)
    if np.linalg.cond(A) > COND_LIMIT:
        raise SingularTransmission("contact Jacobian is rank deficient")
    fa = actuator_force(topo, params)
    s = np.linalg.solve(A.T, fa)
    return np.array([0.0, s[0]]), np.array([0.0, s[1]])


def equilibrium_oracle(
    topo: LinkageTopology,
    lengths: LinkLengths,
    config: Configuration,
    params: StaticsParams,
) -> tuple[np.ndarray, np.ndarray]:
    """Same forces from force and moment balance of every moving body.

    Unknowns are two pin-force components per joint plus the two contact
    normal magnitudes; there is one force and one moment balance per body.
    """
    mech = Mechanism(topo, lengths)
    nb = mech.nb
    pts = config.points
    P = mech.poses(config.q)
    nj = len(topo.joints)
    A = np.zeros((3 * nb, 2 * nj + 2))
    b = np.zeros(3 * nb)

    def add_force(body: str, point: np.ndarray, col: int | None, vec: np.ndarray, const: bool = False):
        i = mech.body_index[body]
        if i == nb:
            return
        r = point - P[i, :2]
        rows = slice(3 * i, 3 * i + 3)
        w = np.array([vec[0], vec[1], r[0] * vec[1] - r[1] * vec[0]])
        if const:
            b[rows] -= w
        else:
            A[rows, col] += w

    for k, j in enumerate(topo.joints):
        pa = pts[f"{j['a'][0]}.{j['a'][1]}"]
        for c, e in enumerate(np.eye(2)):
            add_force(j["a"][0], pa, 2 * k + c, e)
            add_force(j["b"][0], pa, 2 * k + c, -e)
    # reactions from the object on the fingers point along +y per unit
    for col, name in ((2 * nj, "M"), (2 * nj + 1, "N")):
        body, _ = topo.named_points[name]
        add_force(body, pts[name], col, np.array([0.0, 1.0]))
    act_body = topo.actuator.get("body", topo.named_points["D"][0])
    add_force(act_body, pts[topo.actuator.get("point", "D")], None, actuator_force(topo, params), const=True)
    if np.linalg.cond(A) > COND_LIMIT:
        raise SingularTransmission("equilibrium matrix is singular")
    x = np.linalg.solve(A, b)
    return np.array([0.0, -x[-2]]), np.array([0.0, -x[-1]])


def transmission_ratio(f_m, f_n, params: StaticsParams) -> float:
    """``|f_n - f_m| / f_actuator``."""
    return float(np.linalg.norm(np.asarray(f_n, float) - np.asarray(f_m, float)) / params.f_actuator)


def required_ratio(params: StaticsParams) -> float:
    return params.required_pull / (params.friction_mu * params.f_actuator)


def safety_factor(r_f: float, rf_min: float) -> float:
    if rf_min == 0:
        raise ZeroDivisionError("required ratio is zero")
    return r_f / rf_min


def force_state(topo, lengths, config, params: StaticsParams, contact: ContactSpec | None = None) -> ForceState:
    f_m, f_n = static_equilibrium(topo, lengths, config, params, contact)
    r_f = transmission_ratio(f_m, f_n, params)
    return ForceState(f_m, f_n, r_f, safety_factor(r_f, required_ratio(params)))
