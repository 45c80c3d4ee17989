"""Intersection lattices of linear subspaces and collision faces on the sphere.

A finite family of linear subspaces of R^n, closed under pairwise
intersection and containing {0} and R^n, induces a family of great
subspheres ("collision faces") of the unit sphere S^{n-1}: each member X_a
with dim X_a >= 1 contributes its unit sphere C_a.  The inclusion partial
order on the members classifies them into k-clusters by maximal chain
length, and the regular part C'_a of a face is what remains after deleting
every strictly smaller face.

All subspaces are represented by orthonormal basis matrices (columns);
subspace equality and membership are decided through orthogonal projectors,
which are basis independent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AmbiguousLocation,
    DimensionMismatch,
    InvalidSubspace,
    NotInLattice,
)

# Projector Frobenius distance below which two subspaces are the same.
EQUALITY_TOL = 1e-10

# Angular distance below which a unit vector is considered to lie on a face,
# and the width multiplier of the ambiguity band above it.
MEMBERSHIP_TOL = 1e-9
AMBIGUITY_BAND = 10.0


def _orthonormalize(vectors: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Return an orthonormal basis (columns) for the row span of `vectors`.

    Raises InvalidSubspace if the rows are linearly dependent.
    """
    mat = np.atleast_2d(np.asarray(vectors, dtype=float))
    n_vec = mat.shape[0]
    u, s, _ = np.linalg.svd(mat.T, full_matrices=False)
    rank = int(np.sum(s > tol * max(s[0], 1.0))) if s.size else 0
    if rank != n_vec:
        raise InvalidSubspace(
            f"basis has rank {rank} but {n_vec} vectors were given"
        )
    return u[:, :rank]


@dataclass(frozen=True)
class Subspace:
    """A linear subspace of R^n with an orthonormal basis and its projector."""

    name: str
    basis: np.ndarray       # (n, d), orthonormal columns; d == 0 for {0}
    projector: np.ndarray   # (n, n)
    origin: str = "input"   # "input" | "closure" | "implicit"

    def __post_init__(self):
        self.basis.setflags(write=False)
        self.projector.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    def project(self, w: np.ndarray) -> np.ndarray:
        return self.projector @ w

    def distance(self, w: np.ndarray) -> float:
        """Euclidean distance from w to the subspace."""
        return float(np.linalg.norm(w - self.projector @ w))

    @staticmethod
    def from_vectors(name: str, vectors, ambient_dim: int | None = None,
                     origin: str = "input") -> "Subspace":
        mat = np.atleast_2d(np.asarray(vectors, dtype=float))
        if ambient_dim is not None and mat.shape[1] != ambient_dim:
            raise DimensionMismatch(
                f"subspace {name!r} lives in R^{mat.shape[1]}, "
                f"expected R^{ambient_dim}"
            )
        basis = _orthonormalize(mat)
        proj = basis @ basis.T
        return Subspace(name, basis, proj, origin)


def _zero_subspace(n: int) -> Subspace:
    return Subspace("zero", np.zeros((n, 0)), np.zeros((n, n)), "implicit")


def _full_subspace(n: int) -> Subspace:
    return Subspace("full", np.eye(n), np.eye(n), "implicit")


def _intersect(a: Subspace, b: Subspace, tol: float) -> np.ndarray:
    """Orthonormal basis of span(a) & span(b).

    Eigenvectors of P_a + P_b with eigenvalue 2 span the intersection;
    the cutoff 2 - 1e-12 merges directions whose principal angle is below
    ~1.4e-6, consistent with the projector equality tolerance.
    """
    w, vecs = np.linalg.eigh(a.projector + b.projector)
    keep = w >= 2.0 - 1e-12
    if not np.any(keep):
        return np.zeros((a.ambient_dim, 0))
    return _orthonormalize(vecs[:, keep].T, tol)


@dataclass(frozen=True)
class CollisionFace:
    """One face C_a = unit sphere of a lattice member X_a with dim >= 1.

    The normal space of C_a inside the sphere's tangent space at p is the
    orthocomplement of X_a; the tangent space is X_a intersected with the
    orthocomplement of p.
    """

    member: Subspace
    codim: int
    sub_faces: tuple[str, ...]   # names of members strictly contained in X_a
    normal_frame: np.ndarray     # (n, codim), orthonormal basis of X_a^perp

    def __post_init__(self):
        self.normal_frame.setflags(write=False)

    @property
    def name(self) -> str:
        return self.member.name

    @property
    def sphere_dim(self) -> int:
        return self.member.dim - 1

    def contains(self, p: np.ndarray, tol: float = MEMBERSHIP_TOL) -> bool:
        return self.member.distance(p) <= tol

    def tangent_frame_at(self, p: np.ndarray) -> np.ndarray:
        """Orthonormal basis of X_a & p^perp, shape (n, dim X_a - 1)."""
        basis = self.member.basis
        rows = (basis - np.outer(p, p @ basis)).T
        u, s, _ = np.linalg.svd(rows.T, full_matrices=False)
        keep = s > 1e-12
        return u[:, keep]

    def normal_component(self, w: np.ndarray) -> np.ndarray:
        return w - self.member.project(w)

    def tangential_component(self, w: np.ndarray) -> np.ndarray:
        return self.member.project(w)


@dataclass(frozen=True)
class SubspaceLattice:
    """Intersection-closed family of subspaces with its inclusion order."""

    ambient_dim: int
    members: tuple[Subspace, ...]
    inclusion: np.ndarray         # (M, M) bool, inclusion[i, j] <=> X_i <= X_j
    tol: float = EQUALITY_TOL
    _faces: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.inclusion.setflags(write=False)

    def __len__(self) -> int:
        return len(self.members)

    def index_of(self, a) -> int:
        if isinstance(a, int):
            if not 0 <= a < len(self.members):
                raise NotInLattice(f"index {a} out of range")
            return a
        if isinstance(a, str):
            for i, m in enumerate(self.members):
                if m.name == a:
                    return i
            raise NotInLattice(f"no member named {a!r}")
        if isinstance(a, Subspace):
            for i, m in enumerate(self.members):
                if np.linalg.norm(m.projector - a.projector) <= self.tol:
                    return i
            raise NotInLattice(f"subspace {a.name!r} is not a member")
        raise NotInLattice(f"cannot interpret member key {a!r}")

    def member(self, a) -> Subspace:
        return self.members[self.index_of(a)]

    @property
    def zero_index(self) -> int:
        return next(i for i, m in enumerate(self.members) if m.dim == 0)

    @property
    def full_index(self) -> int:
        return next(
            i for i, m in enumerate(self.members) if m.dim == self.ambient_dim
        )

    def leq(self, a, b) -> bool:
        return bool(self.inclusion[self.index_of(a), self.index_of(b)])

    def proper_face_indices(self) -> list[int]:
        """Members with a nonempty face that is not the whole sphere."""
        return [
            i for i, m in enumerate(self.members)
            if 1 <= m.dim < self.ambient_dim
        ]

    def face_indices(self) -> list[int]:
        return [i for i, m in enumerate(self.members) if m.dim >= 1]

    def face(self, a) -> CollisionFace:
        i = self.index_of(a)
        if i in self._faces:
            return self._faces[i]
        m = self.members[i]
        if m.dim < 1:
            raise NotInLattice("the zero subspace has no collision face")
        subs = tuple(
            self.members[j].name
            for j in range(len(self.members))
            if j != i and self.members[j].dim >= 1 and self.inclusion[j, i]
        )
        # Orthocomplement basis via the full SVD of the member basis.
        u, _, _ = np.linalg.svd(m.basis, full_matrices=True)
        normal = u[:, m.dim:]
        face = CollisionFace(m, self.ambient_dim - m.dim, subs, normal)
        self._faces[i] = face
        return face

    def covering_pairs(self) -> list[tuple[str, str]]:
        """Hasse diagram edges (a covered-by b) of the inclusion order."""
        idx = range(len(self.members))
        edges = []
        for i in idx:
            for j in idx:
                if i == j or not self.inclusion[i, j]:
                    continue
                covered = not any(
                    k != i and k != j
                    and self.inclusion[i, k] and self.inclusion[k, j]
                    for k in idx
                )
                if covered:
                    edges.append((self.members[i].name, self.members[j].name))
        return edges


def _includes(a: Subspace, b: Subspace, tol: float) -> bool:
    """True iff span(a) is contained in span(b)."""
    if a.dim > b.dim:
        return False
    if a.dim == 0:
        return True
    residual = a.basis - b.projector @ a.basis
    return float(np.linalg.norm(residual)) <= tol


def close_under_intersection(subspaces, *, ambient_dim: int | None = None,
                             tol: float = EQUALITY_TOL) -> SubspaceLattice:
    """Build the lattice generated by `subspaces` under pairwise intersection.

    Accepts Subspace objects or (name, vectors) pairs; {0} and R^n are added
    implicitly.  Idempotent: running the closure on an already closed family
    adds nothing.
    """
    items: list[Subspace] = []
    for k, sp in enumerate(subspaces):
        if isinstance(sp, Subspace):
            items.append(sp)
        else:
            name, vecs = sp
            items.append(Subspace.from_vectors(name, vecs, origin="input"))
    if ambient_dim is None:
        if not items:
            raise DimensionMismatch(
                "ambient_dim is required for an empty subspace list"
            )
        ambient_dim = items[0].ambient_dim
    for sp in items:
        if sp.ambient_dim != ambient_dim:
            raise DimensionMismatch(
                f"member {sp.name!r} lives in R^{sp.ambient_dim}, "
                f"expected R^{ambient_dim}"
            )

    members: list[Subspace] = [_zero_subspace(ambient_dim),
                               _full_subspace(ambient_dim)]

    def find(proj: np.ndarray) -> int | None:
        for i, m in enumerate(members):
            if np.linalg.norm(m.projector - proj) <= tol:
                return i
        return None

    for sp in items:
        if sp.dim == 0 or sp.dim == ambient_dim:
            raise InvalidSubspace(
                f"{sp.name!r}: the zero subspace and R^n are implicit "
                "members and must not be listed"
            )
        if find(sp.projector) is None:
            members.append(sp)

    # Fixed-point iteration over pairwise intersections.
    frontier = list(range(len(members)))
    while frontier:
        new_frontier = []
        snapshot = len(members)
        for i in frontier:
            for j in range(snapshot):
                if i == j:
                    continue
                a, b = members[i], members[j]
                if min(a.dim, b.dim) == 0:
                    continue
                if _includes(a, b, tol) or _includes(b, a, tol):
                    continue
                basis = _intersect(a, b, tol)
                if basis.shape[1] == 0:
                    continue
                proj = basis @ basis.T
                if find(proj) is None:
                    name = "&".join(sorted((a.name, b.name)))
                    members.append(Subspace(name, basis, proj, "closure"))
                    new_frontier.append(len(members) - 1)
        frontier = new_frontier

    members.sort(key=lambda m: (m.dim, m.name))
    m_count = len(members)
    incl = np.zeros((m_count, m_count), dtype=bool)
    for i in range(m_count):
        for j in range(m_count):
            incl[i, j] = _includes(members[i], members[j], tol)
    return SubspaceLattice(ambient_dim, tuple(members), incl, tol)


def cluster_rank(lattice: SubspaceLattice, a) -> int:
    """k such that C_a is a k-cluster: one plus the maximal number of
    nonzero members in a chain whose maximal element is X_a.

    The zero subspace reports 1; minimal nonzero members report 2; the full
    space of an N-body lattice reports N.
    """
    target = lattice.index_of(a)
    if lattice.members[target].dim == 0:
        return 1
    order = sorted(lattice.face_indices(),
                   key=lambda i: lattice.members[i].dim)
    chain_len = {}
    for i in order:
        below = [
            chain_len[j] for j in order
            if j != i and lattice.inclusion[j, i] and j in chain_len
        ]
        chain_len[i] = 1 + (max(below) if below else 0)
    return chain_len[target] + 1


def n_body_rank(lattice: SubspaceLattice) -> int:
    """N such that the lattice has N-body geometry."""
    return cluster_rank(lattice, lattice.full_index)


def locate(lattice: SubspaceLattice, p: np.ndarray, *,
           tol: float = MEMBERSHIP_TOL,
           band: float = AMBIGUITY_BAND) -> tuple[CollisionFace, bool]:
    """Minimal face whose subspace contains the unit vector p.

    Membership is decided by the distance from p to the subspace; any face
    at distance inside (tol, band*tol] puts p in the ambiguity band and
    raises AmbiguousLocation instead of guessing.  On success the returned
    point is a regular point of the returned face by minimality.
    """
    p = np.asarray(p, dtype=float)
    norm = np.linalg.norm(p)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"locate expects a unit vector, |p| = {norm}")
    p = p / norm

    containing: list[int] = []
    ambiguous: list[str] = []
    for i in lattice.face_indices():
        m = lattice.members[i]
        if m.dim == lattice.ambient_dim:
            containing.append(i)
            continue
        d = m.distance(p)
        if d <= tol:
            containing.append(i)
        elif d <= band * tol:
            ambiguous.append(m.name)
    if ambiguous:
        raise AmbiguousLocation(
            f"point is inside the tolerance band of face(s) {ambiguous}"
        )
    best = min(containing, key=lambda i: lattice.members[i].dim)
    for i in containing:
        if not lattice.inclusion[best, i]:
            raise AmbiguousLocation(
                "incomparable faces "
                f"{lattice.members[best].name!r}, {lattice.members[i].name!r} "
                "both contain the point within tolerance"
            )
    return lattice.face(best), True


def lattice_from_json(doc) -> SubspaceLattice:
    """Ingest an arrangement from a JSON document or file path.

    Schema: { "dimension": n, "subspaces": [ { "name": str,
    "basis": [[float; n], ...] }, ... ] }.  {0} and R^n are implicit and
    must not be listed.
    """
    if isinstance(doc, (str, bytes)):
        with open(doc) as handle:
            doc = json.load(handle)
    if not isinstance(doc, dict) or "dimension" not in doc:
        raise InvalidSubspace("arrangement document must carry 'dimension'")
    n = int(doc["dimension"])
    if n < 1:
        raise DimensionMismatch(f"dimension must be >= 1, got {n}")
    entries = doc.get("subspaces", [])
    seen = set()
    pairs = []
    for entry in entries:
        name = entry["name"]
        if name in ("zero", "full"):
            raise InvalidSubspace(
                f"{name!r} is reserved for an implicit member"
            )
        if name in seen:
            raise InvalidSubspace(f"duplicate subspace name {name!r}")
        seen.add(name)
        basis = entry["basis"]
        if len(basis) == 0:
            raise InvalidSubspace(
                f"{name!r}: empty basis denotes the zero subspace, "
                "which is implicit and must not be listed"
            )
        for row in basis:
            if len(row) != n:
                raise DimensionMismatch(
                    f"{name!r}: basis vector of length {len(row)}, "
                    f"expected {n}"
                )
        if len(basis) >= n:
            raise InvalidSubspace(
                f"{name!r}: a basis of {len(basis)} vectors in R^{n} spans "
                "the full space, which is implicit and must not be listed"
            )
        pairs.append((name, basis))
    return close_under_intersection(pairs, ambient_dim=n)


def lattice_report(lattice: SubspaceLattice) -> dict:
    """Closure members, Hasse edges, cluster ranks, and the N-body rank."""
    members = [
        {
            "name": m.name,
            "dim": m.dim,
            "origin": m.origin,
            "cluster_rank": cluster_rank(lattice, i),
        }
        for i, m in enumerate(lattice.members)
    ]
    return {
        "dimension": lattice.ambient_dim,
        "n_body_rank": n_body_rank(lattice),
        "members": members,
        "hasse": [list(e) for e in lattice.covering_pairs()],
        "auto_added": [
            m.name for m in lattice.members if m.origin == "closure"
        ],
    }
