import copy
import json
import math

import numpy as np
import pytest

from goat_opt.errors import DisconnectedFingertip, MalformedSpec, NoAssembly, Unreachable, WrongMobility
from goat_opt.linkage import (
    INDEPENDENT_LINKS,
    REFERENCE_LENGTHS,
    ContactSpec,
    LinkLengths,
    Mechanism,
    branch_points,
    forward_configuration,
    hold_height,
    load_topology,
    solve_ik,
)

# Regression fixtures from the bundled topology with the reference lengths.
CLOSED_THETA = {
    "P7": -0.8459497732490501,
    "K6": -1.902871597459224,
    "D": -0.7855425657630377,
    "R8": -2.4191626652419487,
    "F10": -1.4406235738358606,
}
IK_FIXTURES = {
    38.02: ((49.70044235658704, 31.01), (37.06419639263957, -7.01)),
    80.0: ((47.0640322717992, 52.0), (48.84859767196279, -28.0)),
    128.5: ((26.972206102037347, 76.25), (46.84157129942819, -52.25)),
}
H_128_5 = 19.86936519739084


@pytest.fixture(scope="module")
def raw():
    from importlib import resources

    return json.loads(resources.files("goat_opt").joinpath("data/goat.topology.json").read_text())


def test_bundled_topology(topo):
    assert topo.mobility == 2
    assert len(topo.branches) == 2
    links = sorted(sorted(v) for v in topo.branches.values())
    assert links == [["L2", "L3", "L4"], ["L5", "L6", "L7"]]


def test_zero_joints_malformed(raw):
    spec = copy.deepcopy(raw)
    spec["joints"] = []
    with pytest.raises(MalformedSpec):
        load_topology(spec)


def test_unknown_point_reference_malformed(raw):
    spec = copy.deepcopy(raw)
    spec["joints"][0]["b"] = "crank_u.nowhere"
    with pytest.raises(MalformedSpec):
        load_topology(spec)


def test_welded_tip_link_wrong_mobility(raw):
    spec = copy.deepcopy(raw)
    spec["bodies"].append({"name": "bar", "links": ["L1"], "points": [{"name": "a"}, {"name": "b", "from": "a", "link": "L1"}]})
    spec["joints"] += [
        {"id": "W1", "type": "weld", "a": "finger_u.tip", "b": "bar.a"},
        {"id": "W2", "type": "revolute", "a": "finger_l.tip", "b": "bar.b"},
    ]
    with pytest.raises(WrongMobility):
        load_topology(spec)


def test_disconnected_fingertip(raw):
    spec = copy.deepcopy(raw)
    finger = spec["named_points"]["M"].split(".")[0]
    spec["joints"] = [j for j in spec["joints"] if finger not in (j["a"].split(".")[0], j["b"].split(".")[0])]
    with pytest.raises(DisconnectedFingertip):
        load_topology(spec)


def test_link_lengths_symmetry():
    assert REFERENCE_LENGTHS.is_symmetric()
    assert REFERENCE_LENGTHS["L7"] == REFERENCE_LENGTHS["L2"]
    assert not LinkLengths({**REFERENCE_LENGTHS.lengths, "L5": 1.0}).is_symmetric()


def test_contact_spec_heights():
    c = ContactSpec(40.0, 12.0)
    assert c.m_y == 32.0 and c.n_y == -8.0
    with pytest.raises(ValueError):
        ContactSpec(0.0, 1.0)


@pytest.mark.parametrize("dx", [0.0, -10.0, -30.0])
def test_symmetric_input_symmetric_output(topo, dx):
    c = forward_configuration(topo, REFERENCE_LENGTHS, (dx, 0.0))
    assert abs(c.M[1] + c.N[1]) < 1e-9
    assert abs(c.M[0] - c.N[0]) < 1e-9


def test_closed_stroke_end_fixture(topo):
    c = forward_configuration(topo, REFERENCE_LENGTHS, (-30.0, 0.0))
    assert c.residual < 1e-9
    assert all(math.isfinite(v) for v in c.joint_angles.values())
    for k, v in CLOSED_THETA.items():
        assert c.joint_angles[k] == pytest.approx(v, abs=1e-9)


def test_both_branches_reach_d(topo):
    c = forward_configuration(topo, REFERENCE_LENGTHS, (-12.0, 3.0))
    for p in branch_points(c, topo).values():
        assert np.allclose(p, (-12.0, 3.0), atol=1e-9)


def test_tiny_links_no_assembly(topo):
    small = LinkLengths({**REFERENCE_LENGTHS.lengths, "L4": 1.0, "L5": 1.0})
    with pytest.raises(NoAssembly):
        forward_configuration(topo, small, (100.0, 0.0))


def test_reported_points_match_poses(topo):
    c = forward_configuration(topo, REFERENCE_LENGTHS, (-5.0, 1.0))
    mech = Mechanism(topo, REFERENCE_LENGTHS)
    assert np.allclose(mech.world(c.q, "M"), c.M, atol=1e-9)
    assert np.allclose(mech.world(c.q, "N"), c.N, atol=1e-9)


@pytest.mark.parametrize("omega", sorted(IK_FIXTURES))
def test_ik_fixtures(topo, omega):
    cfg, M, N = solve_ik(topo, REFERENCE_LENGTHS, ContactSpec(omega, 12.0))
    m_ref, n_ref = IK_FIXTURES[omega]
    assert M[1] == pytest.approx(omega / 2 + 12.0, abs=1e-9)
    assert N[1] == pytest.approx(-omega / 2 + 12.0, abs=1e-9)
    assert np.allclose(M, m_ref, atol=1e-7) and np.allclose(N, n_ref, atol=1e-7)
    assert abs(M[1] - N[1]) == pytest.approx(omega, abs=1e-9)
    assert cfg.residual <= 1e-6


def test_ik_symmetric_zero_offset(topo):
    _, M, N = solve_ik(topo, REFERENCE_LENGTHS, ContactSpec(60.0, 0.0))
    assert hold_height(M, N) < 1e-9


def test_ik_unreachable(topo):
    with pytest.raises(Unreachable):
        solve_ik(topo, REFERENCE_LENGTHS, ContactSpec(10_000.0, 12.0))


def test_hold_height():
    assert hold_height((1.0, 0.0), (1.0, 5.0)) == 0.0
    assert hold_height((5.0, 0.0), (-3.0, 0.0)) == 8.0


def test_hold_height_fixture(topo):
    _, M, N = solve_ik(topo, REFERENCE_LENGTHS, ContactSpec(128.5, 12.0))
    assert hold_height(M, N) == pytest.approx(H_128_5, abs=1e-7)


def test_length_perturbation_is_continuous(topo):
    c0, M0, _ = solve_ik(topo, REFERENCE_LENGTHS, ContactSpec(80.0, 12.0))
    for link in ("L3", "L9"):
        for delta in (1e-3, 1e-4):
            step = delta * np.eye(len(INDEPENDENT_LINKS))[INDEPENDENT_LINKS.index(link)]
            L = LinkLengths.from_independent(REFERENCE_LENGTHS.independent() + step)
            _, M1, _ = solve_ik(topo, L, ContactSpec(80.0, 12.0), guess=c0)
            assert np.linalg.norm(M1 - M0) <= 100 * delta
