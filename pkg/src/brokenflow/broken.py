"""Broken geodesics on the sphere and the time-pi wave-front relation.

A great-circle arc from (p, u) is gamma(s) = p cos s + u sin s.  It meets a
face's subspace exactly when the normal-component vector
cos(s) P_perp(p) + sin(s) P_perp(u) vanishes, which requires P_perp(p) and
P_perp(u) to be linearly dependent; the hit parameter is then an atan2 root.
At a regular point of a face the law of reflection preserves the tangential
momentum and the magnitude of the normal momentum while leaving the normal
direction free: one sign choice in codimension one, a whole sphere of
directions in higher codimension, which a deterministic grid discretizes.
Broken paths are enumerated depth first over these branches; the targets of
all broken paths of total arc length pi form the time-pi relation, which
degenerates to the antipodal map when no proper face is ever hit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .arrangement import CollisionFace, SubspaceLattice, locate
from .errors import (
    AmbiguousHit,
    AmbiguousLocation,
    InsufficientResolution,
    NoUniformLimit,
    RadialDegeneracy,
    SingularBasePoint,
)
from .phasespace import FaceChart, ScCovector

ENDPOINT_TOL = 1e-12


@dataclass(frozen=True)
class BreakPolicy:
    """Enumeration policy: break budget, normal-sphere grid size, tolerances."""

    max_breaks: int = 8
    normal_samples: int = 8
    tol: float = 1e-10
    ambiguity_band: float = 10.0
    s_floor: float = 1e-12


@dataclass(frozen=True)
class GeodesicArc:
    """gamma(s) = p cos s + u sin s for s in [0, length]."""

    point: np.ndarray
    direction: np.ndarray
    length: float

    def at(self, s):
        s = np.asarray(s, dtype=float)
        return (np.cos(s)[..., None] * self.point
                + np.sin(s)[..., None] * self.direction)

    def direction_at(self, s):
        s = np.asarray(s, dtype=float)
        return (-np.sin(s)[..., None] * self.point
                + np.cos(s)[..., None] * self.direction)


@dataclass(frozen=True)
class BreakEvent:
    s_hit: float              # global arc length along the path
    point: np.ndarray
    face_name: str
    u_in: np.ndarray
    u_out: np.ndarray
    kind: str                 # "transversal" | "tangential"

    @property
    def turned(self) -> bool:
        return bool(np.linalg.norm(self.u_out - self.u_in) > 1e-12)


@dataclass(frozen=True)
class BrokenPath:
    """A finite sequence of unit-speed arcs joined by reflection events.

    `truncated` marks paths whose enumeration ran out of break budget at a
    further transversal hit: the straight continuation is kept but the hit
    is not recorded, so the signature is incomplete.
    """

    segments: tuple[GeodesicArc, ...]
    events: tuple[BreakEvent, ...]
    total_length: float
    truncated: bool = False
    parametrization: str = "arclength"
    lam: float | None = None

    @property
    def signature(self) -> tuple[str, ...]:
        return tuple(ev.face_name for ev in self.events)

    def endpoint(self) -> tuple[np.ndarray, np.ndarray]:
        last = self.segments[-1]
        return last.at(last.length), last.direction_at(last.length)

    def startpoint(self) -> tuple[np.ndarray, np.ndarray]:
        first = self.segments[0]
        return first.point, first.direction

    def segment_offsets(self) -> np.ndarray:
        lengths = [seg.length for seg in self.segments]
        return np.concatenate([[0.0], np.cumsum(lengths)])

    def position(self, s):
        """Position at global arc length s (piecewise; batched)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        offs = self.segment_offsets()
        idx = np.clip(np.searchsorted(offs, s, side="right") - 1, 0,
                      len(self.segments) - 1)
        out = np.empty(s.shape + self.segments[0].point.shape)
        for j, seg in enumerate(self.segments):
            mask = idx == j
            if np.any(mask):
                out[mask] = seg.at(s[mask] - offs[j])
        return out

    def direction(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        offs = self.segment_offsets()
        idx = np.clip(np.searchsorted(offs, s, side="right") - 1, 0,
                      len(self.segments) - 1)
        out = np.empty(s.shape + self.segments[0].point.shape)
        for j, seg in enumerate(self.segments):
            mask = idx == j
            if np.any(mask):
                out[mask] = seg.direction_at(s[mask] - offs[j])
        return out

    def with_bichar_time(self, lam: float) -> "BrokenPath":
        return replace(self, parametrization="bichar", lam=lam)

    def covector_at_s(self, s: float, lam: float) -> ScCovector:
        """Bicharacteristic covector at global arc length s, with the birth
        convention s1 = 0 (full paths of length pi span the whole shell)."""
        root = np.sqrt(lam)
        pos = self.position(s)[0]
        direc = self.direction(s)[0]
        return ScCovector(pos, root * np.cos(s),
                          root * np.sin(s) * direc)

    def time_of_s(self, s, lam: float):
        """Bicharacteristic time of arc length (s1 = 0 convention, t = 0 at
        the path midpoint s = pi/2)."""
        root = np.sqrt(lam)
        cosv = np.clip(np.cos(np.asarray(s, dtype=float)), -1.0, 1.0)
        with np.errstate(divide="ignore"):
            return -np.arctanh(cosv) / (2.0 * root)

    def s_of_time(self, t, lam: float):
        root = np.sqrt(lam)
        return np.arccos(-np.tanh(2.0 * root * np.asarray(t, dtype=float)))

    def to_json_dict(self) -> dict:
        q, w = self.endpoint()
        return {
            "point": [float(x) for x in q],
            "direction": [float(x) for x in w],
            "signature": list(self.signature),
            "length": float(self.total_length),
            "truncated": bool(self.truncated),
        }


@dataclass(frozen=True)
class RelationTarget:
    point: np.ndarray
    direction: np.ndarray
    signature: tuple[str, ...]
    length: float
    truncated: bool
    multiplicity: int = 1


@dataclass(frozen=True)
class TimePiRelation:
    source_point: np.ndarray
    source_direction: np.ndarray
    targets: tuple[RelationTarget, ...]
    paths: tuple[BrokenPath, ...] = field(default=(), repr=False)

    def to_json_dict(self) -> dict:
        return {
            "source": {
                "point": [float(x) for x in self.source_point],
                "direction": [float(x) for x in self.source_direction],
            },
            "targets": [
                {
                    "point": [float(x) for x in t.point],
                    "direction": [float(x) for x in t.direction],
                    "signature": list(t.signature),
                    "length": float(t.length),
                    "truncated": bool(t.truncated),
                }
                for t in self.targets
            ],
        }


@dataclass(frozen=True)
class Hit:
    s: float
    face: CollisionFace
    point: np.ndarray


def _dependence_roots(a_vec, b_vec, tol, band):
    """Roots of cos(s) a + sin(s) b = 0 for dependent a, b.

    Returns (kind, base_root): kind is "contained" (both vanish), "roots"
    with the principal atan2 root, "independent", or "ambiguous".
    """
    na = float(np.linalg.norm(a_vec))
    nb = float(np.linalg.norm(b_vec))
    ztol = 1e-12
    if na <= ztol and nb <= ztol:
        return "contained", None
    if na <= ztol:
        return "roots", np.pi            # sin s = 0, s in (0, pi]
    if nb <= ztol:
        return "roots", np.pi / 2        # cos s = 0
    # Normalized Gram-determinant measure sqrt(det G)/(|a||b|) = sin(angle),
    # evaluated through the orthogonal residual to avoid the catastrophic
    # cancellation of |a|^2|b|^2 - (a.b)^2 near dependence.
    bhat = b_vec / nb
    kappa = float(a_vec @ bhat)
    sin_angle = float(np.linalg.norm(a_vec - kappa * bhat)) / na
    if sin_angle <= tol:
        return "roots", float(np.arctan2(-kappa, nb))
    if sin_angle <= band * tol:
        return "ambiguous", None
    return "independent", None


def first_hit(p: np.ndarray, u: np.ndarray, lattice: SubspaceLattice,
              s_max: float, *,
              policy: BreakPolicy = BreakPolicy()) -> Hit | None:
    """Smallest s in (s_floor, s_max] at which the arc meets a proper face.

    A face whose subspace contains both p and u is never reported: the arc
    runs inside it (tangential containment).  The minimal face at the hit
    point is returned.
    """
    p = np.asarray(p, dtype=float)
    u = np.asarray(u, dtype=float)
    best_s = None
    for i in lattice.proper_face_indices():
        member = lattice.members[i]
        a_vec = p - member.project(p)
        b_vec = u - member.project(u)
        kind, base = _dependence_roots(a_vec, b_vec, policy.tol,
                                       policy.ambiguity_band)
        if kind == "contained" or kind == "independent":
            continue
        if kind == "ambiguous":
            raise AmbiguousHit(
                f"near-rank-threshold hit test against face "
                f"{member.name!r}"
            )
        # Roots repeat with period pi; find the smallest in range.
        s_root = base % np.pi
        while s_root <= policy.s_floor:
            s_root += np.pi
        if s_root <= s_max and (best_s is None or s_root < best_s - 1e-14):
            best_s = s_root
    if best_s is None:
        return None
    point = np.cos(best_s) * p + np.sin(best_s) * u
    point = point / np.linalg.norm(point)
    try:
        face, _ = locate(lattice, point)
    except AmbiguousLocation as exc:
        raise AmbiguousHit(
            f"hit point cannot be located unambiguously: {exc}"
        ) from exc
    return Hit(float(best_s), face, point)


def _base_direction_grid(k: int, m_samples: int) -> np.ndarray:
    """Deterministic grid of m_samples unit vectors in R^k, first one = e1.

    k = 2 uses equally spaced angles; k >= 3 uses a Halton sequence pushed
    through the normal quantile and normalized.
    """
    if k == 1:
        return np.array([[1.0], [-1.0]])[:m_samples]
    if k == 2:
        angles = 2.0 * np.pi * np.arange(m_samples) / m_samples
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    from statistics import NormalDist

    nd = NormalDist()
    primes = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29][:k]
    rows = [np.eye(k)[0]]
    for j in range(1, m_samples):
        coords = []
        for base in primes:
            f, r, x = 1.0, j, 0.0
            while r > 0:
                f /= base
                x += f * (r % base)
                r //= base
            coords.append(nd.inv_cdf(min(max(x, 1e-9), 1 - 1e-9)))
        vec = np.array(coords)
        rows.append(vec / np.linalg.norm(vec))
    return np.stack(rows)


def _anchored_grid(anchor: np.ndarray, m_samples: int) -> np.ndarray:
    """Rotate the base grid so its first point lands exactly on `anchor`."""
    k = anchor.shape[0]
    base = _base_direction_grid(k, m_samples)
    e1 = np.eye(k)[0]
    w = e1 - anchor
    norm = np.linalg.norm(w)
    if norm < 1e-14:
        return base
    w = w / norm
    return base - 2.0 * np.outer(base @ w, w)


def reflect(p: np.ndarray, u_in: np.ndarray, face: CollisionFace, *,
            lattice: SubspaceLattice | None = None,
            normal_samples: int = 8, tol: float = 1e-10) -> list[np.ndarray]:
    """All sampled outgoing directions of the reflection law at p on a face.

    The tangential component is preserved and the normal magnitude is
    preserved; codimension one yields the two sign choices, higher
    codimension a deterministic grid on the normal sphere anchored at the
    straight continuation (always the first entry).
    """
    p = np.asarray(p, dtype=float)
    u_in = np.asarray(u_in, dtype=float)
    if lattice is not None:
        minimal, _ = locate(lattice, p)
        if minimal.name != face.name:
            raise SingularBasePoint(
                f"{face.name!r} is not the minimal face at the break point "
                f"(found {minimal.name!r})"
            )
    elif face.member.distance(p) > 1e-9:
        raise SingularBasePoint(f"point is not on face {face.name!r}")
    tang = face.tangential_component(u_in)
    normal = u_in - tang
    magnitude = float(np.linalg.norm(normal))
    if magnitude <= tol:
        return [u_in]
    k = face.codim
    if k == 1:
        return [u_in, tang - normal]
    frame = face.normal_frame
    anchor = (frame.T @ normal) / magnitude
    dirs = _anchored_grid(anchor, normal_samples)
    return [tang + magnitude * (frame @ d) for d in dirs]


@dataclass
class _Node:
    point: np.ndarray
    direction: np.ndarray
    used: float
    segments: list
    events: list
    breaks: int
    truncated: bool


def trace_broken(p: np.ndarray, u: np.ndarray, total_length: float,
                 lattice: SubspaceLattice,
                 policy: BreakPolicy = BreakPolicy()) -> list[BrokenPath]:
    """Depth-first enumeration of broken paths of a given total arc length.

    Every transversal hit within the break budget branches over the full
    reflection output (straight continuation first); beyond the budget only
    the straight continuation survives, flagged truncated.  Tangential
    touches (normal momentum below tolerance) continue inside the face
    without consuming budget.
    """
    p = np.asarray(p, dtype=float)
    u = np.asarray(u, dtype=float)
    if abs(np.linalg.norm(p) - 1.0) > 1e-9 or abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ValueError("p and u must be unit vectors")
    if abs(float(p @ u)) > 1e-9:
        raise ValueError("u must be tangent to the sphere at p")

    done: list[BrokenPath] = []
    stack = [_Node(p, u, 0.0, [], [], 0, False)]
    while stack:
        node = stack.pop()
        remaining = total_length - node.used
        try:
            hit = first_hit(node.point, node.direction, lattice, remaining,
                            policy=policy)
        except AmbiguousHit as exc:
            prefix = BrokenPath(tuple(node.segments), tuple(node.events),
                                node.used, truncated=True)
            raise AmbiguousHit(str(exc), path_prefix=prefix) from exc
        if hit is None or hit.s >= remaining - ENDPOINT_TOL:
            # Breaks at the very endpoint belong to the open side: close.
            segments = node.segments + [
                GeodesicArc(node.point, node.direction, remaining)
            ]
            done.append(BrokenPath(tuple(segments), tuple(node.events),
                                   total_length, node.truncated))
            continue
        arc = GeodesicArc(node.point, node.direction, hit.s)
        u_minus = arc.direction_at(hit.s)
        u_minus = u_minus - float(u_minus @ hit.point) * hit.point
        u_minus = u_minus / np.linalg.norm(u_minus)
        normal_mag = float(
            np.linalg.norm(hit.face.normal_component(u_minus))
        )
        s_here = node.used + hit.s
        if normal_mag <= policy.tol:
            event = BreakEvent(s_here, hit.point, hit.face.name,
                               u_minus, u_minus, "tangential")
            stack.append(_Node(hit.point, u_minus, s_here,
                               node.segments + [arc],
                               node.events + [event],
                               node.breaks, node.truncated))
            continue
        if node.breaks >= policy.max_breaks:
            stack.append(_Node(hit.point, u_minus, s_here,
                               node.segments + [arc],
                               list(node.events),
                               node.breaks, True))
            continue
        outs = reflect(hit.point, u_minus, hit.face,
                       normal_samples=policy.normal_samples,
                       tol=policy.tol)
        for u_out in reversed(outs):
            event = BreakEvent(s_here, hit.point, hit.face.name,
                               u_minus, u_out, "transversal")
            stack.append(_Node(hit.point, u_out, s_here,
                               node.segments + [arc],
                               node.events + [event],
                               node.breaks + 1, node.truncated))

    done.sort(key=_path_sort_key)
    return done


def _path_sort_key(path: BrokenPath):
    q, w = path.endpoint()
    return (path.signature, tuple(np.round(q, 12)), tuple(np.round(w, 12)))


def time_pi_relation(p: np.ndarray, u: np.ndarray,
                     lattice: SubspaceLattice,
                     policy: BreakPolicy = BreakPolicy(), *,
                     dedup_tol: float = 1e-8) -> TimePiRelation:
    """Endpoints of all broken paths of total arc length pi from (p, u).

    With no proper face hit the relation is exactly the antipodal map.
    Targets are deduplicated within tolerance and ordered by signature,
    then lexicographically by endpoint.
    """
    paths = trace_broken(p, u, np.pi, lattice, policy)
    merged: list[list] = []
    for path in paths:
        q, w = path.endpoint()
        sig = path.signature
        found = False
        for entry in merged:
            if (entry[0] == sig
                    and np.linalg.norm(entry[1] - q) <= dedup_tol
                    and np.linalg.norm(entry[2] - w) <= dedup_tol
                    and entry[4] == path.truncated):
                entry[3] += 1
                found = True
                break
        if not found:
            merged.append([sig, q, w, 1, path.truncated])
    targets = tuple(
        RelationTarget(q, w, sig, np.pi, trunc, mult)
        for sig, q, w, mult, trunc in merged
    )
    return TimePiRelation(np.asarray(p, dtype=float),
                          np.asarray(u, dtype=float), targets, tuple(paths))


# ---------------------------------------------------------------------------
# Uniform limits of path families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClosureVerdict:
    passed: bool
    margins: dict
    break_points: list
    messages: list


def limit_closure_check(family, lattice: SubspaceLattice, *,
                        s_grid: np.ndarray | None = None,
                        geodesy_tol: float = 1e-10,
                        reflection_tol: float = 1e-6,
                        face_tol: float | None = None) -> ClosureVerdict:
    """Verify that the uniform limit of a path family is itself a broken path.

    The family is either a list of BrokenPath (sampled on a common grid) or
    a list of position arrays on `s_grid`.  Once the gap sequence has
    contracted, the final member stands in for the limit; it is checked for
    segmentwise geodesy, for every detected break lying on a face, and for
    the reflection law there.  Break data are recovered by intersecting the
    incoming and outgoing great circles, which is exact for exact
    piecewise-geodesic samples.
    """
    if s_grid is None:
        if not isinstance(family[0], BrokenPath):
            raise ValueError("s_grid is required for raw sample families")
        length = family[0].total_length
        s_grid = np.linspace(0.0, length, 801)
    s_grid = np.asarray(s_grid, dtype=float)
    sampled = []
    for member in family:
        if isinstance(member, BrokenPath):
            sampled.append(member.position(s_grid))
        else:
            sampled.append(np.asarray(member, dtype=float))
    gaps = [
        float(np.max(np.linalg.norm(sampled[i + 1] - sampled[i], axis=-1)))
        for i in range(len(sampled) - 1)
    ]
    if gaps:
        first_real = max(gaps[0], 1e-15)
        if gaps[-1] > 0.5 * first_real and gaps[-1] > 1e-12:
            raise NoUniformLimit(f"gap sequence does not contract: {gaps}")
    limit = sampled[-1]
    ds = float(s_grid[1] - s_grid[0])
    if face_tol is None:
        face_tol = 3.0 * ds

    margins = {"unit_norm": float(np.max(np.abs(
        np.linalg.norm(limit, axis=-1) - 1.0)))}
    messages = []
    passed = True
    if margins["unit_norm"] > 1e-9:
        messages.append("limit points leave the sphere")
        passed = False

    # Discrete geodesy residual: gamma(s+d) + gamma(s-d) = 2 cos(d) gamma(s)
    # vanishes identically on great-circle arcs.
    resid = np.linalg.norm(
        limit[2:] + limit[:-2] - 2.0 * np.cos(ds) * limit[1:-1], axis=-1
    )
    kink = resid > geodesy_tol
    groups = []
    for i in np.nonzero(kink)[0]:
        if groups and i - groups[-1][-1] <= 2:
            groups[-1].append(int(i))
        else:
            groups.append([int(i)])
    clean = resid[~kink]
    margins["geodesy"] = float(np.max(clean)) if clean.size else 0.0

    break_points = []
    reflect_margin = 0.0
    offface_margin = 0.0
    for grp in groups:
        lo = grp[0]          # resid index i corresponds to limit index i+1
        hi = grp[-1] + 2
        if lo < 1 or hi > len(limit) - 2:
            messages.append("break too close to a path endpoint to resolve")
            passed = False
            continue
        refined = _refine_break(limit, lo, hi, ds)
        if refined is None:
            messages.append(
                f"could not isolate a break near s = {s_grid[grp[0] + 1]:.4f}"
            )
            passed = False
            continue
        pt, u_in, u_out = refined
        face = _nearest_containing_face(lattice, pt, face_tol)
        if face is None:
            dists = [
                lattice.members[j].distance(pt)
                for j in lattice.proper_face_indices()
            ]
            offface_margin = max(offface_margin,
                                 min(dists) if dists else np.inf)
            messages.append(
                f"break near s = {s_grid[grp[0] + 1]:.4f} does not lie on "
                "any face"
            )
            passed = False
            break_points.append((float(s_grid[grp[0] + 1]), None))
            continue
        tang_jump = float(np.linalg.norm(
            face.tangential_component(u_out - u_in)))
        norm_jump = abs(
            float(np.linalg.norm(face.normal_component(u_out)))
            - float(np.linalg.norm(face.normal_component(u_in))))
        reflect_margin = max(reflect_margin, tang_jump, norm_jump)
        break_points.append((float(s_grid[grp[0] + 1]), face.name))
        if tang_jump > reflection_tol or norm_jump > reflection_tol:
            messages.append(
                f"reflection law violated near s = {s_grid[grp[0] + 1]:.4f} "
                f"(tangential jump {tang_jump:.3e}, "
                f"normal magnitude jump {norm_jump:.3e})"
            )
            passed = False
    margins["reflection"] = reflect_margin
    margins["off_face"] = offface_margin
    if margins["geodesy"] > geodesy_tol:
        messages.append("geodesy residual above tolerance between breaks")
        passed = False
    return ClosureVerdict(passed, margins, break_points, messages)


def _nearest_containing_face(lattice, pt, face_tol):
    """Smallest-dimension proper face within face_tol of pt, if any."""
    candidates = [
        j for j in lattice.proper_face_indices()
        if lattice.members[j].distance(pt) <= face_tol
    ]
    if not candidates:
        return None
    best = min(candidates, key=lambda j: lattice.members[j].dim)
    return lattice.face(best)


def _plane_basis(a, b):
    mat = np.stack([a, b])
    u, s, _ = np.linalg.svd(mat.T, full_matrices=False)
    return u[:, s > 1e-12]


def _refine_break(limit, lo, hi, ds):
    """Break point and one-sided directions from the two adjoining circles.

    Uses samples strictly before index `lo` and strictly after `hi`, so the
    estimates ignore the grid cells that straddle the kink.  Exact for
    exact piecewise-geodesic samples.  Coincident circles (pure
    backscatter) are resolved through the turning point of the doubled-back
    parametrization.
    """
    a, b = limit[lo - 1], limit[lo]
    c, d = limit[hi], limit[hi + 1]
    plane_in = _plane_basis(a, b)
    plane_out = _plane_basis(c, d)
    if plane_in.shape[1] < 2 or plane_out.shape[1] < 2:
        return None
    p_in = plane_in @ plane_in.T
    p_out = plane_out @ plane_out.T
    w, vecs = np.linalg.eigh(p_in + p_out)
    common = vecs[:, w >= 2.0 - 1e-9]
    if common.shape[1] == 2:
        # Both arcs run on one circle: the path doubles back.  The turning
        # point sits at arc distance d1 past b with d1 + d2 = L and
        # d1 - d2 = signed angle from b to c.
        b_unit = b / np.linalg.norm(b)
        c_unit = c / np.linalg.norm(c)
        t_b = -(a - float(a @ b_unit) * b_unit)
        t_b = t_b / np.linalg.norm(t_b)
        span = float(np.arccos(np.clip(b_unit @ c_unit, -1.0, 1.0)))
        sign = 1.0 if float((c_unit - b_unit) @ t_b) >= 0 else -1.0
        length = (hi - lo) * ds
        d1 = 0.5 * (length + sign * span)
        q = np.cos(d1) * b_unit + np.sin(d1) * t_b
        u_in = -np.sin(d1) * b_unit + np.cos(d1) * t_b
        return q, u_in, -u_in
    if common.shape[1] != 1:
        return None
    q = common[:, 0]
    q = q / np.linalg.norm(q)
    anchor = 0.5 * (b + c)
    if float(q @ anchor) < 0:
        q = -q
    u_in = _circle_tangent_at(plane_in, q, toward=b, away=a)
    u_out = _circle_tangent_at(plane_out, q, toward=d, away=c)
    if u_in is None or u_out is None:
        return None
    return q, u_in, u_out


def _circle_tangent_at(plane, q, toward, away):
    """Unit tangent at q of the great circle in `plane`, oriented so motion
    goes from `away` toward `toward`."""
    t = plane @ (plane.T @ toward)
    t = t - float(t @ q) * q
    norm = np.linalg.norm(t)
    if norm < 1e-13:
        t = -(plane @ (plane.T @ away))
        t = t - float(t @ q) * q
        norm = np.linalg.norm(t)
        if norm < 1e-13:
            return None
    t = t / norm
    if float(t @ (toward - away)) < 0:
        t = -t
    return t


# ---------------------------------------------------------------------------
# Differentiability and Hoelder remainder checks at a break
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HolderReport:
    exponents: dict
    one_sided: dict
    mu0: float
    w0_eta: float


def holder_check(path: BrokenPath, chart: FaceChart, *,
                 break_index: int = 0,
                 offsets: np.ndarray | None = None) -> HolderReport:
    """Fit the remainder exponents of the invariant coordinates at a break.

    The path must be in bicharacteristic-time form (total length pi, birth
    convention s1 = 0) with the chart centered at the break point.  Log-log
    slopes are fitted for |eta(t) - W0eta (t - t0)|, |y_j(t) + 2 mu0
    theta_j (t - t0)| and |r(t) + 2 mu0 (t - t0)| as t -> t0 from the left;
    one-sided derivatives of tau and eta at the break are also estimated.
    """
    if path.parametrization != "bichar" or path.lam is None:
        raise ValueError("holder_check requires a path in bichar-time form")
    lam = path.lam
    if not path.events:
        raise InsufficientResolution("path has no break events")
    event = path.events[break_index]
    s0 = event.s_hit
    t0 = float(path.time_of_s(s0, lam))
    if offsets is None:
        offsets = np.geomspace(1e-5, 1e-2, 25)
    offsets = np.sort(np.asarray(offsets, dtype=float))
    s_minus = path.s_of_time(t0 - offsets, lam)
    s_plus = path.s_of_time(t0 + offsets, lam)
    ok = ((s_minus > 1e-9) & (s_plus < np.pi - 1e-9)
          & (np.abs(s_minus - s0) < 0.9 * chart.max_radius)
          & (np.abs(s_plus - s0) < 0.9 * chart.max_radius))
    usable = offsets[ok]
    if len(usable) < 8:
        raise InsufficientResolution(
            f"only {len(usable)} usable sample offsets around the break"
        )
    offsets = usable

    def coords_at(t_vals):
        states = []
        for t in np.atleast_1d(t_vals):
            s = float(path.s_of_time(t, lam))
            xi = path.covector_at_s(s, lam)
            states.append(chart.covector_coords(xi))
        return states

    left = coords_at(t0 - offsets)
    right = coords_at(t0 + offsets)
    st_break_l = coords_at(t0 - 1e-9)[0]
    st_break_r = coords_at(t0 + 1e-9)[0]

    tau_break = float(np.sqrt(lam) * np.cos(s0))
    nu_break = st_break_l.nu
    htil = float(chart.htilde(st_break_l.z, nu_break))
    mu0_sq = lam - tau_break ** 2 - htil
    if mu0_sq <= 1e-12:
        raise RadialDegeneracy(
            "break point is tangential: the normal momentum scale vanishes"
        )
    mu0 = float(np.sqrt(mu0_sq))
    w0_eta = 2.0 * mu0_sq

    eta_l = np.array([float(st.eta) for st in left])
    resid_eta = np.abs(eta_l - w0_eta * (-offsets))
    y_l = np.stack([st.y for st in left])
    r_l = np.linalg.norm(y_l, axis=1)
    resid_r = np.abs(r_l - 2.0 * mu0 * offsets)
    theta0 = y_l[0] / max(r_l[0], 1e-300)
    resid_y = np.max(np.abs(y_l - np.outer(2.0 * mu0 * offsets, theta0)),
                     axis=1)

    exponents = {
        "eta": _fit_slope(offsets, resid_eta),
        "r": _fit_slope(offsets, resid_r),
        "y": _fit_slope(offsets, resid_y),
    }

    tau_l = np.array([float(st.tau) for st in left])
    tau_r = np.array([float(st.tau) for st in right])
    eta_r = np.array([float(st.eta) for st in right])
    one_sided = {
        "dtau_minus": _one_sided_slope(offsets, tau_break - tau_l),
        "dtau_plus": _one_sided_slope(offsets, tau_r - tau_break),
        "deta_minus": _one_sided_slope(offsets, 0.0 - eta_l),
        "deta_plus": _one_sided_slope(offsets, eta_r - 0.0),
        "expected_dtau": 2.0 * (tau_break ** 2 - lam),
        "expected_deta": w0_eta,
        "mu_minus_sq": float(np.sum(st_break_l.mu ** 2)),
        "mu_plus_sq": float(np.sum(st_break_r.mu ** 2)),
    }
    return HolderReport(exponents, one_sided, mu0, w0_eta)


def _fit_slope(offsets, residuals):
    mask = residuals > 1e-13
    if np.sum(mask) < 4:
        # Residuals at machine precision: the remainder is better than any
        # finite exponent over this window.
        return np.inf
    logx = np.log(offsets[mask])
    logy = np.log(residuals[mask])
    slope = np.polyfit(logx, logy, 1)[0]
    return float(slope)


def _one_sided_slope(offsets, deltas):
    """Extrapolated one-sided derivative lim delta/offset as offset -> 0.

    Linear-intercept extrapolation from the two smallest offsets kills the
    leading O(offset) error of the difference quotients.
    """
    r = deltas / offsets
    o = offsets
    return float((r[0] * o[1] - r[1] * o[0]) / (o[1] - o[0]))
