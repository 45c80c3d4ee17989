import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brokenflow import (
    AmbiguousLocation,
    DimensionMismatch,
    InvalidSubspace,
    close_under_intersection,
    cluster_rank,
    lattice_from_json,
    lattice_report,
    locate,
    n_body_rank,
)
from oracles import all_chains_max_len


def members_as_set(lattice):
    return {m.name: m.projector for m in lattice.members}


def test_closure_adds_intersection():
    lat = close_under_intersection([
        ("xy", [[1, 0, 0], [0, 1, 0]]),
        ("yz", [[0, 1, 0], [0, 0, 1]]),
    ])
    names = {m.name for m in lattice_members(lat)}
    assert "xy&yz" in names
    axis = lat.member("xy&yz")
    assert axis.dim == 1
    assert np.allclose(np.abs(axis.basis[:, 0]), [0, 1, 0])


def lattice_members(lat):
    return lat.members


def test_closure_idempotent():
    lat = close_under_intersection([
        ("xy", [[1, 0, 0], [0, 1, 0]]),
        ("yz", [[0, 1, 0], [0, 0, 1]]),
    ])
    again = close_under_intersection(
        [(m.name, m.basis.T.tolist()) for m in lat.members if 0 < m.dim < 3]
    )
    assert len(again) == len(lat)
    for m in lat.members:
        # every member matched by projector distance
        dists = [np.linalg.norm(m.projector - m2.projector)
                 for m2 in again.members]
        assert min(dists) <= 1e-10


def test_trivial_lattice_two_body():
    lat = close_under_intersection([], ambient_dim=5)
    assert len(lat) == 2
    assert n_body_rank(lat) == 2


def test_two_lines_three_body():
    lat = close_under_intersection([
        ("L1", [[1, 0, 0]]),
        ("L2", [[0, 1, 0]]),
    ])
    assert len(lat) == 4  # zero, L1, L2, full: intersection is {0}, no gain
    assert n_body_rank(lat) == 3


def test_cluster_rank_examples():
    # chain {0} < L < P < R^3: the face of P is a 3-cluster
    lat = close_under_intersection([
        ("L", [[1, 0, 0]]),
        ("P", [[1, 0, 0], [0, 1, 0]]),
    ])
    assert cluster_rank(lat, "L") == 2       # minimal face: 2-cluster
    assert cluster_rank(lat, "P") == 3
    assert cluster_rank(lat, "full") == 4
    assert cluster_rank(lat, "zero") == 1


def test_cluster_rank_against_chain_enumeration():
    lat = close_under_intersection([
        ("xy", [[1, 0, 0], [0, 1, 0]]),
        ("yz", [[0, 1, 0], [0, 0, 1]]),
        ("x", [[1, 0, 0]]),
    ])
    projectors = [m.projector for m in lat.members]
    dims = [m.dim for m in lat.members]
    for i, m in enumerate(lat.members):
        if m.dim == 0:
            continue
        expected = all_chains_max_len(projectors, dims, i) + 1
        assert cluster_rank(lat, i) == expected


def test_rank_monotone_along_inclusion():
    lat = close_under_intersection([
        ("xy", [[1, 0, 0], [0, 1, 0]]),
        ("yz", [[0, 1, 0], [0, 0, 1]]),
    ])
    for i in lat.face_indices():
        for j in lat.face_indices():
            if i != j and lat.inclusion[i, j]:
                assert cluster_rank(lat, i) < cluster_rank(lat, j)


def test_locate_examples():
    lat = close_under_intersection([
        ("xy", [[1, 0, 0], [0, 1, 0]]),
        ("x", [[1, 0, 0]]),
    ])
    face, regular = locate(lat, np.array([1.0, 0, 0]))
    assert face.name == "x" and regular

    p = np.array([2.0, -1.0, 0.7])
    p = p / np.linalg.norm(p)
    face, regular = locate(lat, p)
    assert face.name == "full" and regular

    # on the xy-plane but off its line
    q = np.array([0.6, 0.8, 0.0])
    face, regular = locate(lat, q)
    assert face.name == "xy" and regular
    # exhaustive distance check: xy is the only proper member containing q
    for m in lat.members:
        if 1 <= m.dim < 3 and m.name != "xy":
            assert m.distance(q) > 1e-3


def test_locate_ambiguous_band():
    lat = close_under_intersection([("xy", [[1, 0, 0], [0, 1, 0]])])
    p = np.array([1.0, 0.0, 5e-9])
    p = p / np.linalg.norm(p)
    with pytest.raises(AmbiguousLocation):
        locate(lat, p)


def test_locate_meet_consistency():
    lat = close_under_intersection([
        ("xy", [[1, 0, 0], [0, 1, 0]]),
        ("xz", [[1, 0, 0], [0, 0, 1]]),
    ])
    # sampled points of C_xy & C_xz = {+-e1} locate inside both
    for sign in (1.0, -1.0):
        face, _ = locate(lat, np.array([sign, 0.0, 0.0]))
        assert lat.leq(face.name, "xy") and lat.leq(face.name, "xz")


def test_regular_parts_partition_sphere():
    lat = close_under_intersection([
        ("xy", [[1, 0, 0], [0, 1, 0]]),
        ("xz", [[1, 0, 0], [0, 0, 1]]),
    ])
    rng = np.random.default_rng(0)
    hits = {}
    for _ in range(300):
        p = rng.normal(size=3)
        p /= np.linalg.norm(p)
        try:
            face, regular = locate(lat, p)
        except AmbiguousLocation:
            continue
        assert regular
        hits[face.name] = hits.get(face.name, 0) + 1
    assert hits.get("full", 0) >= 290  # generic points on the open part

    # forced on-face samples land in that face's regular part
    for _ in range(100):
        w = rng.normal(size=3)
        w[2] = 0.0
        w /= np.linalg.norm(w)
        face, regular = locate(lat, w)
        assert regular
        assert face.name in ("xy", "xy&xz")


def test_invalid_inputs():
    with pytest.raises(InvalidSubspace):
        close_under_intersection([("bad", [[1, 0, 0], [2, 0, 0]])])
    with pytest.raises(DimensionMismatch):
        close_under_intersection([("a", [[1, 0, 0]]), ("b", [[1, 0]])])


def test_json_ingestion(tmp_path):
    doc = {
        "dimension": 3,
        "subspaces": [
            {"name": "xy", "basis": [[1, 0, 0], [0, 1, 0]]},
            {"name": "yz", "basis": [[0, 1, 0], [0, 0, 1]]},
        ],
    }
    path = tmp_path / "arr.json"
    path.write_text(json.dumps(doc))
    lat = lattice_from_json(str(path))
    assert n_body_rank(lat) == 4
    report = lattice_report(lat)
    assert report["auto_added"] == ["xy&yz"]
    assert ["zero", "xy&yz"] in report["hasse"]


def test_json_rejects_implicit_members():
    with pytest.raises(InvalidSubspace):
        lattice_from_json({"dimension": 2, "subspaces": [
            {"name": "everything", "basis": [[1, 0], [0, 1]]}]})
    with pytest.raises(InvalidSubspace):
        lattice_from_json({"dimension": 2, "subspaces": [
            {"name": "nothing", "basis": []}]})
    with pytest.raises(DimensionMismatch):
        lattice_from_json({"dimension": 3, "subspaces": [
            {"name": "short", "basis": [[1, 0]]}]})


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 30))
def test_closure_idempotence_random(seed):
    rng = np.random.default_rng(seed)
    n = 4
    spans = []
    for i in range(rng.integers(1, 4)):
        d = int(rng.integers(1, n))
        spans.append((f"s{i}", rng.normal(size=(d, n)).tolist()))
    try:
        lat = close_under_intersection(spans, ambient_dim=n)
    except InvalidSubspace:
        return
    again = close_under_intersection(
        [(m.name, m.basis.T.tolist()) for m in lat.members if 0 < m.dim < n],
        ambient_dim=n,
    )
    assert len(again) == len(lat)


def test_unknown_member_raises():
    from brokenflow import NotInLattice
    lat = close_under_intersection([("xy", [[1, 0, 0], [0, 1, 0]])])
    with pytest.raises(NotInLattice):
        cluster_rank(lat, "nope")
    with pytest.raises(NotInLattice):
        lat.face("nonsense")
