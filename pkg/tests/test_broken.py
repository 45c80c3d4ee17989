import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brokenflow import (
    AmbiguousHit,
    BreakEvent,
    BreakPolicy,
    BrokenPath,
    GeodesicArc,
    InsufficientResolution,
    NoUniformLimit,
    chart_at,
    close_under_intersection,
    first_hit,
    holder_check,
    limit_closure_check,
    reflect,
    time_pi_relation,
    trace_broken,
)
from conftest import random_tangent, random_unit
from oracles import brute_force_relation, _dense_first_hit, OracleArrangement


def test_first_hit_meridian(equator_lattice):
    p = np.array([0.0, 0, 1.0])
    u = np.array([1.0, 0, 0])
    hit = first_hit(p, u, equator_lattice, np.pi)
    assert abs(hit.s - np.pi / 2) < 1e-12
    assert hit.face.name == "xy"
    assert np.allclose(hit.point, [1, 0, 0], atol=1e-12)


def test_first_hit_containment(equator_lattice):
    # path inside the face: no transversal hit reported
    p = np.array([1.0, 0, 0])
    u = np.array([0.0, 1.0, 0])
    assert first_hit(p, u, equator_lattice, np.pi) is None


def test_first_hit_codim2_generic_miss(plane_lattice_4):
    # a random arc misses a codimension-2 face; dense sampling confirms
    rng = np.random.default_rng(0)
    member = plane_lattice_4.member("P")
    for _ in range(10):
        p = random_unit(rng, 4)
        u = random_tangent(rng, p)
        assert first_hit(p, u, plane_lattice_4, np.pi) is None
        s = np.linspace(1e-3, np.pi, 3000)
        gam = np.cos(s)[:, None] * p + np.sin(s)[:, None] * u
        dist = np.linalg.norm(gam - gam @ member.projector.T, axis=1)
        assert np.min(dist) > 1e-6


def test_first_hit_ambiguous_band():
    lat = close_under_intersection([("x", [[1.0, 0, 0]])])
    # arc whose normal projections are almost, but not quite, dependent
    eps = 3e-10
    p = np.array([np.cos(0.5), np.sin(0.5), 0.0])
    u0 = np.array([-np.sin(0.5), np.cos(0.5), eps])
    u0 = u0 - (p @ u0) * p
    u0 /= np.linalg.norm(u0)
    with pytest.raises(AmbiguousHit):
        first_hit(p, u0, lat, np.pi)


def test_reflect_codim1_examples(equator_lattice):
    face = equator_lattice.face("xy")
    p = np.array([1.0, 0, 0])
    outs = reflect(p, np.array([0.0, 0.6, 0.8]), face)
    assert len(outs) == 2
    assert np.allclose(outs[0], [0, 0.6, 0.8])
    assert np.allclose(outs[1], [0, 0.6, -0.8])
    outs = reflect(p, np.array([0.0, 0, 1.0]), face)
    assert np.allclose(outs[0], [0, 0, 1]) and np.allclose(outs[1], [0, 0, -1])
    # tangential: single output
    outs = reflect(p, np.array([0.0, 1.0, 0]), face)
    assert len(outs) == 1


def test_reflect_corner_full_circle(figure1_lattice):
    face = figure1_lattice.face("xy&xz")
    p = np.array([1.0, 0, 0])
    u_in = np.array([0.0, 0.6, 0.8])
    m_samples = 12
    outs = reflect(p, u_in, face, normal_samples=m_samples)
    assert len(outs) == m_samples
    assert np.allclose(outs[0], u_in)  # straight branch first
    for w in outs:
        assert abs(np.linalg.norm(w) - 1) < 1e-12
        assert abs(w @ p) < 1e-12  # directions fill the normal circle


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 30))
def test_reflection_conservation(seed):
    lat = close_under_intersection([
        ("hyper", [[1, 0, 0, 0, 0], [0, 1, 0, 0, 0], [0, 0, 1, 0, 0],
                   [0, 0, 0, 1, 0]]),   # codim 1 in R^5
        ("plane", [[1, 0, 0, 0, 0], [0, 1, 0, 0, 0]]),  # codim 3
    ])
    rng = np.random.default_rng(seed)
    for name in ("hyper", "plane"):
        face = lat.face(name)
        basis = lat.member(name).basis
        coef = rng.normal(size=basis.shape[1])
        p = basis @ coef
        p /= np.linalg.norm(p)
        u_in = random_tangent(rng, p)
        outs = reflect(p, u_in, face, normal_samples=6)
        t_in = face.tangential_component(u_in)
        n_in = np.linalg.norm(face.normal_component(u_in))
        for u_out in outs:
            assert np.linalg.norm(
                face.tangential_component(u_out) - t_in) <= 1e-10
            assert abs(np.linalg.norm(face.normal_component(u_out))
                       - n_in) <= 1e-10
            assert abs(np.linalg.norm(u_out) - 1) <= 1e-10


def test_trace_antipodal_no_faces(trivial_lattice_3):
    p = np.array([0.0, 0, 1.0])
    u = np.array([1.0, 0, 0])
    paths = trace_broken(p, u, np.pi, trivial_lattice_3)
    assert len(paths) == 1
    q, w = paths[0].endpoint()
    assert np.linalg.norm(q + p) < 1e-12
    assert np.linalg.norm(w + u) < 1e-12
    assert paths[0].signature == ()


def test_trace_single_break_branch_count(equator_lattice):
    p = np.array([0.2, -0.1, 1.0])
    p /= np.linalg.norm(p)
    u = np.array([0.7, 0.6, 0.0])
    u -= (p @ u) * p
    u /= np.linalg.norm(u)
    paths = trace_broken(p, u, np.pi, equator_lattice,
                         BreakPolicy(max_breaks=4))
    # brute-force count: the reflected branch re-enters the north cap and
    # cannot re-cross within total length pi unless it flips again at the
    # second crossing of the straight branch; enumerate by oracle instead
    oracle = brute_force_relation(equator_lattice, p, u, 4, 8)
    assert len(paths) == len(oracle)
    assert all(e.s_hit >= 1e-12 for path in paths for e in path.events)
    for path in paths:
        assert abs(sum(seg.length for seg in path.segments) - np.pi) <= 1e-9


def test_trace_k0_truncated(equator_lattice):
    p = np.array([0.0, 0, 1.0])
    u = np.array([1.0, 0, 0])
    paths = trace_broken(p, u, np.pi, equator_lattice,
                         BreakPolicy(max_breaks=0))
    assert len(paths) == 1
    assert paths[0].truncated
    assert paths[0].signature == ()
    q, w = paths[0].endpoint()
    assert np.linalg.norm(q + p) < 1e-12  # straight continuation


def test_time_pi_relation_matches_oracle_generic(figure1_lattice):
    p = np.array([0.3, 0.5, 0.81])
    p /= np.linalg.norm(p)
    u = np.array([1.0, -0.2, 0.1])
    u -= (p @ u) * p
    u /= np.linalg.norm(u)
    rel = time_pi_relation(p, u, figure1_lattice, BreakPolicy(max_breaks=3))
    oracle = brute_force_relation(figure1_lattice, p, u, 3, 8)
    assert len(rel.targets) == len(oracle)
    for tgt, (sig, q, w, trunc) in zip(rel.targets, oracle):
        assert tgt.signature == sig
        assert np.linalg.norm(tgt.point - q) <= 1e-9
        assert np.linalg.norm(tgt.direction - w) <= 1e-9
        assert tgt.truncated == trunc


def test_time_pi_relation_in_face_source(figure1_lattice):
    # source on the xy circle with tangent direction: the whole flow stays
    # in the sub-sphere except for branches created at corner collisions
    theta = 0.4
    p = np.array([np.cos(theta), np.sin(theta), 0.0])
    u = np.array([-np.sin(theta), np.cos(theta), 0.0])
    policy = BreakPolicy(max_breaks=1, normal_samples=6)
    rel = time_pi_relation(p, u, figure1_lattice, policy)
    # all signatures are corner events
    for tgt in rel.targets:
        assert all(f == "xy&xz" for f in tgt.signature)
    oracle = brute_force_relation(figure1_lattice, p, u, 1, 6)
    assert len(rel.targets) == len(oracle)
    for tgt, (sig, q, w, trunc) in zip(rel.targets, oracle):
        assert tgt.signature == sig
        assert np.linalg.norm(tgt.point - q) <= 1e-9
        assert np.linalg.norm(tgt.direction - w) <= 1e-9


def test_relation_time_reversal_symmetry(figure1_lattice):
    p = np.array([0.3, 0.5, 0.81])
    p /= np.linalg.norm(p)
    u = np.array([1.0, -0.2, 0.1])
    u -= (p @ u) * p
    u /= np.linalg.norm(u)
    policy = BreakPolicy(max_breaks=2)
    rel = time_pi_relation(p, u, figure1_lattice, policy)
    for tgt in rel.targets:
        back = time_pi_relation(tgt.point, -tgt.direction, figure1_lattice,
                                policy)
        found = any(
            np.linalg.norm(b.point - p) <= 1e-8
            and np.linalg.norm(b.direction + u) <= 1e-8
            for b in back.targets
        )
        assert found


def test_finite_isolated_breaks(figure1_lattice):
    p = np.array([0.3, 0.5, 0.81])
    p /= np.linalg.norm(p)
    u = np.array([1.0, -0.2, 0.1])
    u -= (p @ u) * p
    u /= np.linalg.norm(u)
    paths = trace_broken(p, u, np.pi, figure1_lattice,
                         BreakPolicy(max_breaks=3))
    for path in paths:
        assert len(path.events) <= 3
        s_hits = [e.s_hit for e in path.events]
        assert all(b - a >= 1e-10 for a, b in zip(s_hits, s_hits[1:]))


def test_eta_monotone_in_normal_region(equator_lattice):
    # along a traced path, eta = y . mu increases while the compressed data
    # stays in the normal set of the break face
    p = np.array([0.2, -0.1, 1.0])
    p /= np.linalg.norm(p)
    u = np.array([0.7, 0.6, 0.0])
    u -= (p @ u) * p
    u /= np.linalg.norm(u)
    lam = 1.0
    paths = trace_broken(p, u, np.pi, equator_lattice,
                         BreakPolicy(max_breaks=1))
    path = [pp for pp in paths if pp.events and pp.events[0].turned][0]
    ev = path.events[0]
    chart = chart_at(equator_lattice, equator_lattice.face("xy"), ev.point)
    s_hit = ev.s_hit
    etas = []
    for ds in np.linspace(-0.2, 0.2, 41):
        xi = path.covector_at_s(s_hit + ds, lam)
        st = chart.covector_coords(xi)
        htil = float(chart.htilde(st.z, st.nu))
        if st.tau ** 2 + htil < lam - 1e-9:  # normal-set condition
            etas.append(float(st.eta))
    assert len(etas) > 10
    assert all(b > a for a, b in zip(etas, etas[1:]))


def test_ambiguous_hit_carries_prefix():
    lat = close_under_intersection([("x", [[1.0, 0, 0]])])
    eps = 3e-10
    p = np.array([np.cos(0.5), np.sin(0.5), 0.0])
    u0 = np.array([-np.sin(0.5), np.cos(0.5), eps])
    u0 = u0 - (p @ u0) * p
    u0 /= np.linalg.norm(u0)
    with pytest.raises(AmbiguousHit) as info:
        trace_broken(p, u0, np.pi, lat)
    assert info.value.path_prefix is not None


# ---------------------------------------------------------------------------
# Limit closure
# ---------------------------------------------------------------------------

def _reflected_path(lat, p, u):
    paths = trace_broken(p, u, np.pi, lat, BreakPolicy(max_breaks=1))
    return [pp for pp in paths if pp.events and pp.events[0].turned][0]


def test_closure_constant_family(equator_lattice):
    p = np.array([0.0, 0, 1.0])
    u = np.array([np.cos(0.35), np.sin(0.35), 0.0])
    fam = [_reflected_path(equator_lattice, p, u)] * 4
    verdict = limit_closure_check(fam, equator_lattice)
    assert verdict.passed
    assert verdict.break_points and verdict.break_points[0][1] == "xy"


def test_closure_converging_family(equator_lattice):
    u0 = np.array([np.cos(0.35), np.sin(0.35), 0.0])
    fam = []
    for k in range(6):
        eps = 2.0 ** -(k + 2)
        pk = np.array([np.sin(eps), 0.0, np.cos(eps)])
        uk = u0 - (pk @ u0) * pk
        uk /= np.linalg.norm(uk)
        fam.append(_reflected_path(equator_lattice, pk, uk))
    fam.append(_reflected_path(equator_lattice, np.array([0.0, 0, 1.0]), u0))
    verdict = limit_closure_check(fam, equator_lattice)
    assert verdict.passed
    assert verdict.margins["reflection"] <= 1e-9


def test_closure_corner_family(figure1_lattice):
    # breaks converging onto the corner +e1: the limit breaks at the corner
    def two_arc_path(q, w_in, face_name):
        face = figure1_lattice.face("xy")
        tang = face.tangential_component(w_in)
        w_out = tang - (w_in - tang)
        start = np.cos(1.0) * q - np.sin(1.0) * w_in
        sdir = np.sin(1.0) * q + np.cos(1.0) * w_in
        return BrokenPath(
            (GeodesicArc(start, sdir, 1.0),
             GeodesicArc(q, w_out, np.pi - 1.0)),
            (BreakEvent(1.0, q, face_name, w_in, w_out, "transversal"),),
            np.pi)

    fam = []
    for k in range(6):
        epsk = 2.0 ** -(k + 1)
        qk = np.array([np.cos(epsk), np.sin(epsk), 0.0])
        w = np.array([0.0, 0.3, 0.8])
        w -= (qk @ w) * qk
        w /= np.linalg.norm(w)
        fam.append(two_arc_path(qk, w, "xy"))
    q0 = np.array([1.0, 0, 0])
    w0 = np.array([0.0, 0.3, 0.8])
    w0 -= (q0 @ w0) * q0
    w0 /= np.linalg.norm(w0)
    fam.append(two_arc_path(q0, w0, "xy&xz"))
    verdict = limit_closure_check(fam, figure1_lattice)
    assert verdict.passed
    assert verdict.break_points[0][1] == "xy&xz"


def test_closure_adversarial_fails(equator_lattice):
    s_grid = np.linspace(0, np.pi, 801)
    p = np.array([0.0, 0, 1.0])
    u = np.array([1.0, 0, 0])
    seg1 = GeodesicArc(p, u, np.pi / 2)
    q = seg1.at(np.pi / 2)
    q /= np.linalg.norm(q)
    w_bad = np.array([0.0, 0.9, np.sqrt(1 - 0.81)])
    w_bad -= (q @ w_bad) * q
    w_bad /= np.linalg.norm(w_bad)
    seg2 = GeodesicArc(q, w_bad, np.pi / 2)
    pos = np.concatenate([
        seg1.at(s_grid[s_grid <= np.pi / 2]),
        seg2.at(s_grid[s_grid > np.pi / 2] - np.pi / 2),
    ])
    fam = [pos] * 4
    verdict = limit_closure_check(fam, equator_lattice, s_grid=s_grid)
    assert not verdict.passed
    assert verdict.margins["reflection"] > 0.1


def test_closure_no_uniform_limit(equator_lattice):
    s_grid = np.linspace(0, np.pi, 801)
    fam = []
    for k in range(5):
        pk = np.array([np.sin(0.3 * ((-1) ** k)), 0,
                       np.cos(0.3 * ((-1) ** k))])
        uk = np.array([1.0, 0, 0])
        uk -= (pk @ uk) * pk
        uk /= np.linalg.norm(uk)
        fam.append(GeodesicArc(pk, uk, np.pi).at(s_grid))
    with pytest.raises(NoUniformLimit):
        limit_closure_check(fam, equator_lattice, s_grid=s_grid)


# ---------------------------------------------------------------------------
# Hoelder / differentiability checks
# ---------------------------------------------------------------------------

def _oblique_break_path(lat):
    p = np.array([0.2, -0.1, 1.0])
    p /= np.linalg.norm(p)
    u = np.array([0.7, 0.6, 0.0])
    u -= (p @ u) * p
    u /= np.linalg.norm(u)
    return _reflected_path(lat, p, u)


def test_holder_exponents_and_one_sided(equator_lattice):
    lam = 1.0
    path = _oblique_break_path(equator_lattice).with_bichar_time(lam)
    ev = path.events[0]
    chart = chart_at(equator_lattice, equator_lattice.face("xy"), ev.point)
    rep = holder_check(path, chart)
    # exact piecewise-geodesic data: the remainder is quadratic, beating
    # the generic 3/2 bound
    assert rep.exponents["eta"] >= 1.9
    assert rep.exponents["r"] >= 1.9
    assert rep.exponents["y"] >= 1.9
    assert abs(rep.one_sided["dtau_minus"]
               - rep.one_sided["expected_dtau"]) <= 1e-6
    assert abs(rep.one_sided["dtau_plus"]
               - rep.one_sided["expected_dtau"]) <= 1e-6
    assert abs(rep.one_sided["deta_minus"]
               - rep.one_sided["expected_deta"]) <= 1e-6
    assert abs(rep.one_sided["deta_plus"]
               - rep.one_sided["expected_deta"]) <= 1e-6
    assert abs(rep.one_sided["mu_minus_sq"]
               - rep.one_sided["mu_plus_sq"]) <= 1e-6


def test_holder_requires_bichar_form(equator_lattice):
    path = _oblique_break_path(equator_lattice)
    ev = path.events[0]
    chart = chart_at(equator_lattice, equator_lattice.face("xy"), ev.point)
    with pytest.raises(ValueError):
        holder_check(path, chart)


def test_holder_insufficient_resolution(equator_lattice):
    lam = 1.0
    path = _oblique_break_path(equator_lattice).with_bichar_time(lam)
    ev = path.events[0]
    chart = chart_at(equator_lattice, equator_lattice.face("xy"), ev.point)
    with pytest.raises(InsufficientResolution):
        holder_check(path, chart, offsets=np.geomspace(10.0, 100.0, 10))


def test_path_json_round_trip_holder(equator_lattice):
    # serialize arcs and events with repr-exact floats, rebuild, re-fit
    lam = 1.0
    path = _oblique_break_path(equator_lattice).with_bichar_time(lam)
    ev = path.events[0]
    chart = chart_at(equator_lattice, equator_lattice.face("xy"), ev.point)
    rep1 = holder_check(path, chart)

    doc = json.dumps({
        "segments": [
            {"point": seg.point.tolist(), "direction": seg.direction.tolist(),
             "length": seg.length}
            for seg in path.segments
        ],
        "events": [
            {"s_hit": e.s_hit, "point": e.point.tolist(),
             "face": e.face_name, "u_in": e.u_in.tolist(),
             "u_out": e.u_out.tolist(), "kind": e.kind}
            for e in path.events
        ],
        "total_length": path.total_length,
    })
    loaded = json.loads(doc)
    path2 = BrokenPath(
        tuple(GeodesicArc(np.array(s["point"]), np.array(s["direction"]),
                          s["length"]) for s in loaded["segments"]),
        tuple(BreakEvent(e["s_hit"], np.array(e["point"]), e["face"],
                         np.array(e["u_in"]), np.array(e["u_out"]),
                         e["kind"]) for e in loaded["events"]),
        loaded["total_length"],
    ).with_bichar_time(lam)
    rep2 = holder_check(path2, chart)
    assert rep1.exponents == rep2.exponents
    assert rep1.one_sided == rep2.one_sided
