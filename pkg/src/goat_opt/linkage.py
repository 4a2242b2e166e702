"""Planar linkage kinematics for the whippletree gripper.

The mechanism is described by data (a JSON topology file) rather than code:
rigid bodies carry named points laid out from link lengths, and revolute or
welded joints pin points of two bodies together. Every moving body gets a
planar pose ``(x, y, phi)`` and all kinematic problems are solved by Newton
iteration on the stacked joint equations plus two driving equations:

* forward: the input pin D is placed at a given point;
* inverse: the fingertip heights ``M_y`` and ``N_y`` are prescribed.

Lengths are in millimetres and angles in radians.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property, partial
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (
    BranchViolation,
    DisconnectedFingertip,
    MalformedSpec,
    NoAssembly,
    SingularJacobian,
    Unreachable,
    WrongMobility,
)

EPS_LOOP = 1e-6  # loop-closure tolerance (mm)
NEWTON_TOL = 1e-10
MAX_NEWTON = 100

LINK_IDS = tuple(f"L{i}" for i in range(1, 16))
SYMMETRY = (("L2", "L7"), ("L3", "L6"), ("L4", "L5"), ("L8", "L11"), ("L9", "L12"), ("L10", "L13"), ("L14", "L15"))
INDEPENDENT_LINKS = ("L1", "L2", "L3", "L4", "L8", "L9", "L10", "L14")


@dataclass(frozen=True)
class LinkLengths:
    """Link lengths in mm keyed ``L1`` .. ``L15``."""

    lengths: Mapping[str, float]

    def __getitem__(self, link: str) -> float:
        return self.lengths[link]

    @classmethod
    def from_independent(cls, values, symmetry=SYMMETRY, order=INDEPENDENT_LINKS) -> "LinkLengths":
        vals = dict(zip(order, map(float, values)))
        if len(vals) != len(order):
            raise ValueError(f"expected {len(order)} values")
        for a, b in symmetry:
            if a in vals:
                vals[b] = vals[a]
            elif b in vals:
                vals[a] = vals[b]
        return cls(dict(sorted(vals.items(), key=lambda kv: int(kv[0][1:]))))

    def independent(self, order=INDEPENDENT_LINKS) -> np.ndarray:
        return np.array([self.lengths[k] for k in order], dtype=float)

    def scaled(self, k: float) -> "LinkLengths":
        return LinkLengths({name: k * v for name, v in self.lengths.items()})

    def is_symmetric(self, symmetry=SYMMETRY, tol: float = 1e-9) -> bool:
        return all(abs(self.lengths[a] - self.lengths[b]) <= tol for a, b in symmetry)

    def to_dict(self) -> dict:
        return dict(self.lengths)


# Optimal lengths published for the physical gripper, used as the reference
# design and as a regression fixture.
REFERENCE_LENGTHS = LinkLengths.from_independent([0.0, 37.52, 24.52, 50.07, 43.26, 24.26, 10.0, 17.2])


@dataclass(frozen=True)
class ContactSpec:
    omega: float  # fingertip separation along y
    psi: float = 0.0  # lateral offset of the grasp centre

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")

    @property
    def m_y(self) -> float:
        return self.omega / 2.0 + self.psi

    @property
    def n_y(self) -> float:
        return -self.omega / 2.0 + self.psi


@dataclass
class Configuration:
    q: np.ndarray  # stacked (x, y, phi) per moving body
    points: dict[str, np.ndarray]
    joint_angles: dict[str, float]
    angles: dict[str, float]
    residual: float

    def point(self, name: str) -> np.ndarray:
        return self.points[name]

    @property
    def D(self) -> np.ndarray:
        return self.points["D"]

    @property
    def M(self) -> np.ndarray:
        return self.points["M"]

    @property
    def N(self) -> np.ndarray:
        return self.points["N"]


@dataclass
class _PointDef:
    name: str
    base: str | None
    link: str | None
    scale: float
    angle: float


@dataclass
class LinkageTopology:
    bodies: list[str]
    ground: str
    body_links: dict[str, list[str]]
    body_points: dict[str, list[_PointDef]]
    joints: list[dict]
    named_points: dict[str, tuple[str, str]]
    symmetry: list[tuple[str, str]]
    cut_joint: str
    branches: dict[str, list[str]]
    angles: dict[str, dict]
    knees: list[tuple[tuple[str, str], ...]]
    actuator: dict
    reference: dict
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def moving(self) -> list[str]:
        return [b for b in self.bodies if b != self.ground]

    @property
    def mobility(self) -> int:
        dof = 3 * len(self.moving)
        for j in self.joints:
            dof -= 3 if j["type"] == "weld" else 2
        return dof

    @property
    def reference_lengths(self) -> LinkLengths:
        return LinkLengths(dict(self.reference["lengths"]))

    def branch_bodies(self) -> dict[str, list[str]]:
        """Shortest body chains from ground to each side of the cut joint."""
        cut = next(j for j in self.joints if j["id"] == self.cut_joint)
        adj: dict[str, set[str]] = {b: set() for b in self.bodies}
        for j in self.joints:
            if j["id"] == self.cut_joint:
                continue
            adj[j["a"][0]].add(j["b"][0])
            adj[j["b"][0]].add(j["a"][0])
        out = {}
        for end in (cut["a"][0], cut["b"][0]):
            prev = {self.ground: None}
            queue = deque([self.ground])
            while queue:
                node = queue.popleft()
                for nb in sorted(adj[node]):
                    if nb not in prev:
                        prev[nb] = node
                        queue.append(nb)
            if end not in prev:
                raise MalformedSpec(f"cut joint body {end!r} unreachable from ground")
            path = [end]
            while prev[path[-1]] is not None:
                path.append(prev[path[-1]])
            out[end] = path[::-1]
        return out

    @cached_property
    def reference_configuration(self) -> Configuration:
        mech = Mechanism(self, self.reference_lengths)
        q = mech.assemble(mech.reference_guess())
        q = mech.newton(q, mech.drive_point("D", self.reference["d_point"]))
        return mech.configuration(q)

    @cached_property
    def knee_signs(self) -> np.ndarray:
        return knee_signs(self, self.reference_configuration)


def _split_ref(ref: str, where: str) -> tuple[str, str]:
    if not isinstance(ref, str) or ref.count(".") != 1:
        raise MalformedSpec(f"{where}: point reference {ref!r} must look like 'body.point'")
    body, pt = ref.split(".")
    return body, pt


def load_topology(spec=None) -> LinkageTopology:
    """Parse and validate a topology description.

    ``spec`` may be a mapping, a path to a JSON file, or ``None`` for the
    bundled gripper topology.
    """
    if spec is None:
        spec = json.loads(resources.files("goat_opt").joinpath("data/goat.topology.json").read_text())
    elif isinstance(spec, (str, Path)):
        try:
            spec = json.loads(Path(spec).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise MalformedSpec(f"cannot read topology: {exc}") from None
    if not isinstance(spec, Mapping):
        raise MalformedSpec("topology must be a JSON object")
    bodies_raw = spec.get("bodies") or []
    joints_raw = spec.get("joints") or []
    if not bodies_raw:
        raise MalformedSpec("no bodies declared")
    if not joints_raw:
        raise MalformedSpec("no joints declared")

    links = set(spec.get("links", LINK_IDS))
    bodies, body_links, body_points = [], {}, {}
    grounds = []
    for b in bodies_raw:
        name = b.get("name")
        if not name or name in body_points:
            raise MalformedSpec(f"missing or duplicate body name {name!r}")
        bodies.append(name)
        if b.get("ground"):
            grounds.append(name)
        body_links[name] = list(b.get("links", []))
        pts: list[_PointDef] = []
        seen = set()
        for i, p in enumerate(b.get("points", [])):
            base = p.get("from")
            link = p.get("link")
            if i == 0 and (base or link):
                raise MalformedSpec(f"body {name}: first point is the body origin")
            if i > 0 and (base not in seen or link is None):
                raise MalformedSpec(f"body {name}: point {p.get('name')!r} needs an earlier 'from' point and a 'link'")
            if link is not None and link not in links:
                raise MalformedSpec(f"body {name}: unknown link {link!r}")
            pts.append(_PointDef(p["name"], base, link, float(p.get("scale", 1.0)), math.radians(p.get("angle_deg", 0.0))))
            seen.add(p["name"])
        if not pts:
            raise MalformedSpec(f"body {name} has no points")
        body_points[name] = pts
    if len(grounds) != 1:
        raise MalformedSpec(f"exactly one ground body required, got {grounds}")

    def check_ref(ref, where):
        body, pt = _split_ref(ref, where)
        if body not in body_points or pt not in {p.name for p in body_points[body]}:
            raise MalformedSpec(f"{where}: unknown point {ref!r}")
        return body, pt

    joints = []
    for j in joints_raw:
        jid = j.get("id")
        jtype = j.get("type", "revolute")
        if jtype not in ("revolute", "weld"):
            raise MalformedSpec(f"joint {jid}: unsupported type {jtype!r}")
        a = check_ref(j.get("a"), f"joint {jid}")
        b = check_ref(j.get("b"), f"joint {jid}")
        if a[0] == b[0]:
            raise MalformedSpec(f"joint {jid} connects body {a[0]} to itself")
        joints.append({"id": jid, "type": jtype, "a": a, "b": b, "angle": math.radians(j.get("angle_deg", 0.0))})

    named = {k: check_ref(v, f"named point {k}") for k, v in spec.get("named_points", {}).items()}
    for required in ("D", "M", "N"):
        if required not in named:
            raise MalformedSpec(f"named point {required} missing")

    topo = LinkageTopology(
        bodies=bodies,
        ground=grounds[0],
        body_links=body_links,
        body_points=body_points,
        joints=joints,
        named_points=named,
        symmetry=[tuple(p) for p in spec.get("symmetry", [])],
        cut_joint=spec.get("cut_joint", "D"),
        branches={k: list(v) for k, v in spec.get("branches", {}).items()},
        angles=dict(spec.get("angles", {})),
        knees=[tuple(check_ref(r, "knee") for r in k) for k in spec.get("knees", [])],
        actuator=dict(spec.get("actuator", {"point": "D", "direction": [-1.0, 0.0]})),
        reference=dict(spec.get("reference", {})),
        raw=dict(spec),
    )

    # connectivity of the fingertips
    adj: dict[str, set[str]] = {b: set() for b in bodies}
    for j in joints:
        adj[j["a"][0]].add(j["b"][0])
        adj[j["b"][0]].add(j["a"][0])
    reach, queue = {topo.ground}, deque([topo.ground])
    while queue:
        for nb in adj[queue.popleft()]:
            if nb not in reach:
                reach.add(nb)
                queue.append(nb)
    for tip in ("M", "N"):
        if named[tip][0] not in reach:
            raise DisconnectedFingertip(f"fingertip {tip} is not connected to ground")

    if topo.mobility != 2:
        raise WrongMobility(f"mobility is {topo.mobility}, expected 2")

    if topo.cut_joint not in {j["id"] for j in joints}:
        raise MalformedSpec(f"cut joint {topo.cut_joint!r} not declared")
    chains = topo.branch_bodies()
    if topo.branches:
        if len(topo.branches) != 2:
            raise MalformedSpec("exactly two branches expected at the cut joint")
        available = [[l for b in chain for l in body_links[b]] for chain in chains.values()]
        for name, declared in topo.branches.items():
            if not any(all(l in links_on for l in declared) for links_on in available):
                raise MalformedSpec(f"branch {name} {declared} does not match a serial chain to the cut joint")
    return topo


class Mechanism:
    """A topology bound to concrete link lengths.

    Holds the local point coordinates and vectorized index tables used to
    evaluate joint equations and their Jacobian.
    """

    def __init__(self, topo: LinkageTopology, lengths: LinkLengths):
        self.topo = topo
        self.lengths = lengths
        self.body_index = {b: i for i, b in enumerate(topo.moving)}
        self.body_index[topo.ground] = len(topo.moving)  # fixed pose row
        self.nb = len(topo.moving)
        self.local: dict[tuple[str, str], np.ndarray] = {}
        for body, pts in topo.body_points.items():
            for p in pts:
                if p.base is None:
                    xy = np.zeros(2)
                else:
                    ell = p.scale * float(lengths[p.link])
                    xy = self.local[(body, p.base)] + ell * np.array([math.cos(p.angle), math.sin(p.angle)])
                self.local[(body, p.name)] = xy
        rev = [j for j in topo.joints]
        self._ja = np.array([self.body_index[j["a"][0]] for j in rev])
        self._jb = np.array([self.body_index[j["b"][0]] for j in rev])
        self._pa = np.array([self.local[j["a"]] for j in rev])
        self._pb = np.array([self.local[j["b"]] for j in rev])
        welds = [(k, j) for k, j in enumerate(rev) if j["type"] == "weld"]
        self._wa = np.array([self._ja[k] for k, _ in welds], dtype=int)
        self._wb = np.array([self._jb[k] for k, _ in welds], dtype=int)
        self._woff = np.array([j["angle"] for _, j in welds])
        self.n_joint_rows = 2 * len(rev) + len(welds)
        # constant part of the joint Jacobian and index tables for the rest
        nj = len(rev)
        self._rx = np.arange(0, 2 * nj, 2)
        self._ry = self._rx + 1
        self._ca = 3 * self._ja + 2
        self._cb = 3 * self._jb + 2
        T = np.zeros((self.n_joint_rows, 3 * (self.nb + 1)))
        T[self._rx, 3 * self._ja] += 1.0
        T[self._ry, 3 * self._ja + 1] += 1.0
        T[self._rx, 3 * self._jb] -= 1.0
        T[self._ry, 3 * self._jb + 1] -= 1.0
        for k in range(len(welds)):
            T[2 * nj + k, 3 * self._wa[k] + 2] += 1.0
            T[2 * nj + k, 3 * self._wb[k] + 2] -= 1.0
        self._jtemplate = T
        self._refs: dict[str, tuple[int, np.ndarray]] = {}
        self._knee_names = [tuple(f"{b}.{p}" for b, p in triple) for triple in topo.knees]
        cut = next(j for j in topo.joints if j["id"] == topo.cut_joint)
        self.cut_points = ("{}.{}".format(*cut["a"]), "{}.{}".format(*cut["b"]))

    # -- drives ---------------------------------------------------------
    def _ref(self, name: str) -> tuple[int, np.ndarray]:
        hit = self._refs.get(name)
        if hit is None:
            body, pt = self.topo.named_points[name] if name in self.topo.named_points else _split_ref(name, "point")
            hit = self._refs[name] = (self.body_index[body], self.local[(body, pt)])
        return hit

    def drive_point(self, name: str, xy) -> list:
        idx, loc = self._ref(name)
        return [(idx, loc, 0, float(xy[0])), (idx, loc, 1, float(xy[1]))]

    def drive_heights(self, m_y: float, n_y: float) -> list:
        im, lm = self._ref("M")
        in_, ln = self._ref("N")
        return [(im, lm, 1, float(m_y)), (in_, ln, 1, float(n_y))]

    # -- evaluation -----------------------------------------------------
    def poses(self, q: np.ndarray) -> np.ndarray:
        P = np.zeros((self.nb + 1, 3))
        P[: self.nb] = np.reshape(q, (-1, 3))
        return P

    def world(self, q: np.ndarray, name: str) -> np.ndarray:
        idx, loc = self._ref(name)
        if idx == self.nb:
            return loc.copy()
        x, y, phi = q[3 * idx : 3 * idx + 3]
        c, s = math.cos(phi), math.sin(phi)
        return np.array([x + c * loc[0] - s * loc[1], y + s * loc[0] + c * loc[1]])

    def evaluate(self, q: np.ndarray, drives=()) -> tuple[np.ndarray, np.ndarray]:
        """Stacked residual and Jacobian of joint equations plus ``drives``."""
        P = self.poses(q)
        nj = len(self._ja)
        nrows = self.n_joint_rows + len(drives)
        F = np.empty(nrows)
        J = np.zeros((nrows, 3 * (self.nb + 1)))
        J[: self.n_joint_rows] = self._jtemplate
        c = np.cos(P[:, 2])
        s = np.sin(P[:, 2])
        ca, sa = c[self._ja], s[self._ja]
        cb, sb = c[self._jb], s[self._jb]
        ax = ca * self._pa[:, 0] - sa * self._pa[:, 1]
        ay = sa * self._pa[:, 0] + ca * self._pa[:, 1]
        bx = cb * self._pb[:, 0] - sb * self._pb[:, 1]
        by = sb * self._pb[:, 0] + cb * self._pb[:, 1]
        F[0 : 2 * nj : 2] = P[self._ja, 0] + ax - P[self._jb, 0] - bx
        F[1 : 2 * nj : 2] = P[self._ja, 1] + ay - P[self._jb, 1] - by
        J[self._rx, self._ca] = -ay
        J[self._ry, self._ca] = ax
        J[self._rx, self._cb] = by
        J[self._ry, self._cb] = -bx
        r = 2 * nj
        for k in range(len(self._wa)):
            F[r] = P[self._wa[k], 2] - P[self._wb[k], 2] - self._woff[k]
            r += 1
        for idx, loc, comp, target in drives:
            px = c[idx] * loc[0] - s[idx] * loc[1]
            py = s[idx] * loc[0] + c[idx] * loc[1]
            F[r] = P[idx, comp] + (px, py)[comp] - target
            J[r, 3 * idx + comp] = 1.0
            J[r, 3 * idx + 2] = -py if comp == 0 else px
            r += 1
        return F, J[:, : 3 * self.nb]

    def point_jacobian(self, q: np.ndarray, name: str) -> np.ndarray:
        """d(world point)/dq as a ``(2, 3 * nb)`` array."""
        idx, loc = self._ref(name)
        out = np.zeros((2, 3 * self.nb))
        if idx == self.nb:
            return out
        phi = q[3 * idx + 2]
        c, s = math.cos(phi), math.sin(phi)
        out[0, 3 * idx] = 1.0
        out[1, 3 * idx + 1] = 1.0
        out[0, 3 * idx + 2] = -(s * loc[0] + c * loc[1])
        out[1, 3 * idx + 2] = c * loc[0] - s * loc[1]
        return out

    def knee_signs(self, q: np.ndarray) -> np.ndarray:
        """Orientation sign of every knee triple declared by the topology."""
        out = np.empty(len(self.topo.knees))
        for k, triple in enumerate(self._knee_names):
            pa, pb, pc = (self.world(q, name) for name in triple)
            u, v = pb - pa, pc - pb
            out[k] = np.sign(u[0] * v[1] - u[1] * v[0])
        return out

    def crank_angles(self, q: np.ndarray) -> dict[str, float]:
        return {
            name: math.remainder(a.get("sign", 1) * q[3 * self.body_index[a["body"]] + 2], 2 * math.pi)
            for name, a in self.topo.angles.items()
        }

    # -- solvers ----------------------------------------------------------
    def newton(self, q0: np.ndarray, drives, tol: float = NEWTON_TOL, max_iter: int = MAX_NEWTON) -> np.ndarray:
        """Damped Newton on the square system; raises NoAssembly on failure."""
        q = np.array(q0, dtype=float)
        F, J = self.evaluate(q, drives)
        nF = float(np.linalg.norm(F))
        for _ in range(max_iter):
            if np.max(np.abs(F)) <= tol:
                return q
            try:
                dq = np.linalg.solve(J, -F)
            except np.linalg.LinAlgError:
                raise SingularJacobian("singular kinematic Jacobian") from None
            if not np.all(np.isfinite(dq)):
                raise SingularJacobian("non-finite Newton step")
            step = 1.0
            while True:
                qn = q + step * dq
                Fn, Jn = self.evaluate(qn, drives)
                nFn = float(np.linalg.norm(Fn))
                if nFn < nF or step < 1e-4:
                    break
                step *= 0.5
            if nFn >= nF and step < 1e-4:
                break
            q, F, J, nF = qn, Fn, Jn, nFn
        if np.max(np.abs(F)) <= tol:
            return q
        raise NoAssembly(f"Newton did not converge (|F|={np.max(np.abs(F)):.3e})")

    def assemble(self, q0: np.ndarray, tol: float = NEWTON_TOL, max_iter: int = MAX_NEWTON) -> np.ndarray:
        """Minimum-norm Gauss-Newton onto the joint constraints only."""
        q = np.array(q0, dtype=float)
        for _ in range(max_iter):
            F, J = self.evaluate(q)
            if np.max(np.abs(F)) <= tol:
                return q
            dq = np.linalg.lstsq(J, -F, rcond=None)[0]
            q = q + dq
        F, _ = self.evaluate(q)
        if np.max(np.abs(F)) <= tol:
            return q
        raise NoAssembly("links cannot be assembled")

    def reference_guess(self) -> np.ndarray:
        """Body poses with the reference angles, placed joint by joint from ground."""
        angles = {b: math.radians(a) for b, a in self.topo.reference.get("body_angles_deg", {}).items()}
        P = np.zeros((self.nb + 1, 3))
        placed = {self.topo.ground}
        pending = list(self.topo.joints)
        while pending:
            progress = False
            for j in list(pending):
                for fixed, free in ((j["a"], j["b"]), (j["b"], j["a"])):
                    if fixed[0] in placed and free[0] not in placed:
                        fi = self.body_index[fixed[0]]
                        c, s = math.cos(P[fi, 2]), math.sin(P[fi, 2])
                        lf = self.local[fixed]
                        anchor = P[fi, :2] + np.array([c * lf[0] - s * lf[1], s * lf[0] + c * lf[1]])
                        phi = angles.get(free[0], 0.0)
                        c, s = math.cos(phi), math.sin(phi)
                        lb = self.local[free]
                        i = self.body_index[free[0]]
                        P[i, :2] = anchor - np.array([c * lb[0] - s * lb[1], s * lb[0] + c * lb[1]])
                        P[i, 2] = phi
                        placed.add(free[0])
                        progress = True
                if j["a"][0] in placed and j["b"][0] in placed:
                    pending.remove(j)
            if not progress:
                break
        return P[: self.nb].ravel()

    # -- outputs -----------------------------------------------------------
    def all_points(self, q: np.ndarray) -> dict[str, np.ndarray]:
        P = self.poses(q)
        out = {}
        for (body, pt), loc in self.local.items():
            i = self.body_index[body]
            c, s = math.cos(P[i, 2]), math.sin(P[i, 2])
            out[f"{body}.{pt}"] = np.array([P[i, 0] + c * loc[0] - s * loc[1], P[i, 1] + s * loc[0] + c * loc[1]])
        for name, (body, pt) in self.topo.named_points.items():
            out[name] = out[f"{body}.{pt}"]
        return out

    def configuration(self, q: np.ndarray) -> Configuration:
        pts = self.all_points(q)
        P = self.poses(q)
        jangles = {}
        for j in self.topo.joints:
            d = P[self.body_index[j["b"][0]], 2] - P[self.body_index[j["a"][0]], 2]
            jangles[j["id"]] = math.remainder(d, 2 * math.pi)
        angles = self.crank_angles(q)
        cut = next(j for j in self.topo.joints if j["id"] == self.topo.cut_joint)
        da = pts[f"{cut['a'][0]}.{cut['a'][1]}"]
        db = pts[f"{cut['b'][0]}.{cut['b'][1]}"]
        return Configuration(q=np.array(q), points=pts, joint_angles=jangles, angles=angles, residual=float(np.hypot(*(da - db))))


def knee_signs(topo: LinkageTopology, config: Configuration) -> np.ndarray:
    out = []
    for (a, b, c) in topo.knees:
        pa, pb, pc = (config.points[f"{x[0]}.{x[1]}"] for x in (a, b, c))
        u, v = pb - pa, pc - pb
        out.append(np.sign(u[0] * v[1] - u[1] * v[0]))
    return np.array(out)


def branch_ok(topo: LinkageTopology, config: Configuration) -> bool:
    return bool(np.all(knee_signs(topo, config) == topo.knee_signs))


def _branch_ok_q(mech: "Mechanism", q: np.ndarray) -> bool:
    return bool(np.all(mech.knee_signs(q) == mech.topo.knee_signs))


def branch_points(config: Configuration, topo: LinkageTopology) -> dict[str, np.ndarray]:
    """Position of D as reached through each branch chain (before the cut)."""
    cut = next(j for j in topo.joints if j["id"] == topo.cut_joint)
    return {
        name: config.points[f"{side[0]}.{side[1]}"]
        for name, side in zip(topo.branches or ("a", "b"), (cut["a"], cut["b"]))
    }


def forward_configuration(topo: LinkageTopology, lengths: LinkLengths, d_point, guess: Configuration | None = None) -> Configuration:
    """Assemble the mechanism with the input pin at ``d_point``.

    Tries the warm-start ``guess`` first, then the reference pose marched
    toward ``d_point`` in increments.
    """
    mech = Mechanism(topo, lengths)
    d_point = np.asarray(d_point, dtype=float)
    attempts = []
    if guess is not None:
        attempts.append(("guess", guess.q))
    attempts.append(("reference", None))
    last: Exception | None = None
    for label, q0 in attempts:
        try:
            if q0 is None:
                q0 = mech.assemble(mech.reference_guess())
                q = _march(mech, q0, mech.world(q0, "D"), d_point, partial(mech.drive_point, "D"))
            else:
                q = mech.newton(q0, mech.drive_point("D", d_point))
        except (NoAssembly, SingularJacobian) as exc:
            last = exc
            continue
        cfg = mech.configuration(q)
        if branch_ok(topo, cfg):
            return cfg
        last = NoAssembly(f"{label} start converged onto a different assembly branch")
    raise NoAssembly(f"no assembly with D at {tuple(d_point)}: {last}")


def _march(mech: Mechanism, q0, start, target, make_drive, steps=(1, 4, 16, 64), max_iter: int = MAX_NEWTON) -> np.ndarray:
    """Newton with continuation: retry with finer increments until the
    result converges on the reference assembly branch."""
    start = np.asarray(start, dtype=float)
    target = np.asarray(target, dtype=float)
    last: Exception | None = None
    for n in steps:
        q = np.array(q0, dtype=float)
        try:
            for t in np.linspace(0.0, 1.0, n + 1)[1:]:
                q = mech.newton(q, make_drive(start + t * (target - start)), max_iter=max_iter)
        except (NoAssembly, SingularJacobian) as exc:
            last = exc
            continue
        if _branch_ok_q(mech, q):
            return q
        last = BranchViolation(f"converged on another branch with {n} increments")
    if isinstance(last, BranchViolation):
        raise last
    raise NoAssembly(str(last))


def ik_from(mech: Mechanism, q0: np.ndarray, contact: ContactSpec, steps=(1, 4, 16, 64), max_iter: int = MAX_NEWTON) -> np.ndarray:
    """Inverse kinematics warm-started at ``q0``, with continuation fallback."""
    start = np.array([mech.world(q0, "M")[1], mech.world(q0, "N")[1]])
    target = np.array([contact.m_y, contact.n_y])
    try:
        return _march(mech, q0, start, target, lambda h: mech.drive_heights(h[0], h[1]), steps, max_iter)
    except (NoAssembly, SingularJacobian) as exc:
        raise Unreachable(f"no assembly reaches omega={contact.omega:.4g}, psi={contact.psi:.4g}: {exc}") from None


def solve_ik(topo: LinkageTopology, lengths: LinkLengths, contact: ContactSpec, guess: Configuration | None = None):
    """Configuration placing the fingertips at the prescribed heights.

    Returns ``(configuration, M, N)``; ``M_y`` and ``N_y`` equal the contact
    heights to solver precision and ``M_x``, ``N_x`` are solved for.
    """
    mech = Mechanism(topo, lengths)
    if guess is not None:
        q0 = guess.q
    else:
        try:
            q0 = mech.assemble(mech.reference_guess())
        except NoAssembly as exc:
            raise Unreachable(f"design does not assemble: {exc}") from None
    q = ik_from(mech, q0, contact)
    cfg = mech.configuration(q)
    if not branch_ok(topo, cfg):
        raise BranchViolation("inverse kinematics landed on a different assembly branch")
    return cfg, cfg.M.copy(), cfg.N.copy()


def hold_height(M, N) -> float:
    """Shortest graspable hold height ``|M_x - N_x|``."""
    return abs(float(M[0]) - float(N[0]))
