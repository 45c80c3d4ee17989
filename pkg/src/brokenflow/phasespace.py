"""Boundary scattering phase space over the sphere.

A covector is a triple (omega, tau, v): a base point on the unit sphere,
the dual of the boundary defining coordinate, and a momentum tangent to the
sphere.  At a collision face the momentum splits orthogonally into a normal
part mu (in the orthocomplement of the face's subspace) and a tangential
part nu (inside the subspace); compression drops mu.  The classification of
a compressed point against an energy lambda reads off the sign of
tau^2 + |nu|^2 - lambda, with the radial fixed points singled out inside
the tangential set.

Face charts realize the local coordinates (y, z, tau, mu, nu): geodesic
normal coordinates at a center p on the face, with the y block spanning the
face's orthocomplement and the z block spanning the face directions.  For
the round sphere the pulled-back dual metric is exactly

    h(u, xi) = A(r) |xi|^2 + B(r) (u . xi)^2,   r = |u|,
    A(r) = r^2 / sin(r)^2,   B(r) = (1 - A(r)) / r^2,

so the chart's block coefficients satisfy h_nn(0,0) = Id and h_nt(0,z) = 0
by construction, and faces are the linear slices {y in a subspace}.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .arrangement import CollisionFace, SubspaceLattice, locate
from .errors import (
    ChartDomain,
    InvalidEnergy,
    NotOnFace,
    SingularBasePoint,
)

ORTHOGONALITY_TOL = 1e-12
CLASSIFY_TOL = 1e-9


@dataclass(frozen=True)
class ScCovector:
    """A point (omega, tau, v) of the boundary phase space; v is tangent."""

    omega: np.ndarray
    tau: float
    v: np.ndarray

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        v = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "tau", float(self.tau))
        if abs(np.linalg.norm(omega) - 1.0) > 1e-9:
            raise ValueError("omega must be a unit vector")
        if abs(float(omega @ v)) > 1e-9:
            raise ValueError("v must be tangent to the sphere at omega")
        omega.setflags(write=False)
        v.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.omega.shape[0]

    @property
    def metric_value(self) -> float:
        """g = tau^2 + |v|^2 (round metric)."""
        return self.tau ** 2 + float(self.v @ self.v)

    @staticmethod
    def build(omega, tau, v, project: bool = True) -> "ScCovector":
        """Construct, optionally re-projecting v onto the tangent space."""
        omega = np.asarray(omega, dtype=float)
        omega = omega / np.linalg.norm(omega)
        v = np.asarray(v, dtype=float)
        if project:
            v = v - (omega @ v) * omega
        return ScCovector(omega, float(tau), v)

    def to_json_dict(self) -> dict:
        return {
            "omega": [float(x) for x in self.omega],
            "tau": float(self.tau),
            "v": [float(x) for x in self.v],
        }

    @staticmethod
    def from_json_dict(doc: dict) -> "ScCovector":
        return ScCovector(
            np.asarray(doc["omega"], dtype=float),
            float(doc["tau"]),
            np.asarray(doc["v"], dtype=float),
        )


@dataclass(frozen=True)
class MomentumSplit:
    """Orthogonal splitting v = mu + nu at a face: mu normal, nu tangential."""

    face: CollisionFace
    mu: np.ndarray
    nu: np.ndarray

    @property
    def htilde(self) -> float:
        return float(self.nu @ self.nu)

    @property
    def normal_energy(self) -> float:
        return float(self.mu @ self.mu)


@dataclass(frozen=True)
class CompressedCovector:
    """A point (omega, tau, nu) of the compressed bundle over a face."""

    omega: np.ndarray
    face: CollisionFace
    tau: float
    nu: np.ndarray

    @property
    def htilde(self) -> float:
        return float(self.nu @ self.nu)


class ClassLabel(Enum):
    ELLIPTIC = "elliptic"
    NORMAL = "normal"
    TANGENTIAL = "tangential"
    RADIAL_PLUS = "radial_plus"
    RADIAL_MINUS = "radial_minus"

    @property
    def is_tangential(self) -> bool:
        return self in (ClassLabel.TANGENTIAL, ClassLabel.RADIAL_PLUS,
                        ClassLabel.RADIAL_MINUS)

    @property
    def is_radial(self) -> bool:
        return self in (ClassLabel.RADIAL_PLUS, ClassLabel.RADIAL_MINUS)


@dataclass(frozen=True)
class Classification:
    label: ClassLabel
    margin: float  # tau^2 + htilde - lambda, signed


def split_momentum(xi: ScCovector, face: CollisionFace, *,
                   tol: float = 1e-9) -> MomentumSplit:
    """Split xi.v at the face into normal and tangential components."""
    if face.member.distance(xi.omega) > tol:
        raise NotOnFace(
            f"omega is not on face {face.name!r} "
            f"(distance {face.member.distance(xi.omega):.3e})"
        )
    nu = face.tangential_component(xi.v)
    mu = xi.v - nu
    return MomentumSplit(face, mu, nu)


def compress(xi: ScCovector, lattice: SubspaceLattice,
             face: CollisionFace | None = None, *,
             tol: float = 1e-9) -> CompressedCovector:
    """Drop the normal momentum over the face of xi's base point.

    Without an explicit face the minimal face located at omega is used
    (always a regular point).  With an explicit face, a base point lying in
    a strictly smaller face is singular for it and is rejected.
    """
    if face is None:
        face, _ = locate(lattice, xi.omega, tol=tol)
    else:
        if face.member.distance(xi.omega) > tol:
            raise NotOnFace(f"omega is not on face {face.name!r}")
        minimal, _ = locate(lattice, xi.omega, tol=tol)
        if minimal.name != face.name:
            raise SingularBasePoint(
                f"omega lies in {minimal.name!r}, a proper sub-face of "
                f"{face.name!r}: singular base point"
            )
    sp = split_momentum(xi, face, tol=tol)
    return CompressedCovector(xi.omega, face, xi.tau, sp.nu)


def classify(zeta: CompressedCovector, lam: float, *,
             tol: float = CLASSIFY_TOL) -> Classification:
    """Classify a compressed point against the characteristic set at lam."""
    if lam <= 0:
        raise InvalidEnergy(f"lambda must be positive, got {lam}")
    htil = zeta.htilde
    margin = zeta.tau ** 2 + htil - lam
    if margin < -tol:
        return Classification(ClassLabel.NORMAL, margin)
    if margin > tol:
        return Classification(ClassLabel.ELLIPTIC, margin)
    if htil <= tol:
        label = (ClassLabel.RADIAL_PLUS if zeta.tau > 0
                 else ClassLabel.RADIAL_MINUS)
        return Classification(label, margin)
    return Classification(ClassLabel.TANGENTIAL, margin)


# ---------------------------------------------------------------------------
# Round-sphere metric scalars in geodesic normal coordinates.
# ---------------------------------------------------------------------------

_SERIES_CUT = 1e-3


def metric_scale(r):
    """A(r) = r^2 / sin(r)^2, the isotropic dual-metric factor."""
    r = np.asarray(r, dtype=float)
    small = np.abs(r) < _SERIES_CUT
    rs = np.where(small, 1.0, r)
    exact = (rs / np.sin(rs)) ** 2
    r2 = r * r
    series = 1.0 + r2 / 3.0 + r2 * r2 / 15.0 + 2.0 * r2 ** 3 / 189.0
    return np.where(small, series, exact)


def metric_skew(r):
    """B(r) = (1 - A(r)) / r^2, the radial correction factor."""
    r = np.asarray(r, dtype=float)
    small = np.abs(r) < _SERIES_CUT
    rs = np.where(small, 1.0, r)
    exact = (1.0 - (rs / np.sin(rs)) ** 2) / rs ** 2
    r2 = r * r
    series = -(1.0 / 3.0) - r2 / 15.0 - 2.0 * r2 * r2 / 189.0
    return np.where(small, series, exact)


def metric_scale_slope(r):
    """A'(r) / r, smooth through r = 0."""
    r = np.asarray(r, dtype=float)
    small = np.abs(r) < _SERIES_CUT
    rs = np.where(small, 1.0, r)
    sin = np.sin(rs)
    exact = (2.0 / sin ** 3) * (sin - rs * np.cos(rs))
    r2 = r * r
    series = 2.0 / 3.0 + 4.0 * r2 / 15.0 + 4.0 * r2 * r2 / 63.0
    return np.where(small, series, exact)


def metric_skew_slope(r):
    """B'(r) / r, smooth through r = 0."""
    r = np.asarray(r, dtype=float)
    small = np.abs(r) < _SERIES_CUT
    rs = np.where(small, 1.0, r)
    a = (rs / np.sin(rs)) ** 2
    aslope = metric_scale_slope(rs)
    exact = (-aslope + 2.0 * (a - 1.0) / rs ** 2) / rs ** 2
    r2 = r * r
    series = -2.0 / 15.0 - 8.0 * r2 / 189.0
    return np.where(small, series, exact)


@dataclass
class ChartState:
    """Chart-coordinate phase point(s): arrays broadcast over a batch axis."""

    y: np.ndarray    # (..., k)
    z: np.ndarray    # (..., m)
    tau: np.ndarray  # (...,)
    mu: np.ndarray   # (..., k)
    nu: np.ndarray   # (..., m)

    @property
    def eta(self) -> np.ndarray:
        """The invariant pairing y . mu."""
        return np.sum(self.y * self.mu, axis=-1)

    def copy(self) -> "ChartState":
        return ChartState(self.y.copy(), self.z.copy(),
                          np.array(self.tau, dtype=float, copy=True),
                          self.mu.copy(), self.nu.copy())


class FaceChart:
    """Geodesic normal coordinates at a regular point of a collision face.

    Coordinates (y, z) parametrize the sphere through the exponential map at
    the center; y runs over the face's orthocomplement frame, z over the
    face-tangent frame.  The face itself is the slice {y = 0}, and every
    larger face through the center is a linear slice in y.
    """

    def __init__(self, center: np.ndarray, face: CollisionFace, *,
                 lattice: SubspaceLattice | None = None,
                 max_radius: float = np.pi / 2):
        center = np.asarray(center, dtype=float)
        center = center / np.linalg.norm(center)
        if face.member.distance(center) > 1e-9:
            raise NotOnFace(
                f"chart center is not on face {face.name!r}"
            )
        if lattice is not None:
            minimal, _ = locate(lattice, center)
            if minimal.name != face.name:
                raise SingularBasePoint(
                    f"chart center lies in sub-face {minimal.name!r}: "
                    "singular point of the requested face"
                )
        self.center = center
        self.face = face
        self.max_radius = float(max_radius)
        self.normal_frame = face.normal_frame                 # (n, k)
        self.tangent_frame = face.tangent_frame_at(center)    # (n, m)
        self.k = self.normal_frame.shape[1]
        self.m = self.tangent_frame.shape[1]
        # Combined frame of T_center S^{n-1}; columns [normal | tangent].
        self.frame = np.concatenate(
            [self.normal_frame, self.tangent_frame], axis=1
        )

    # -- base point maps ---------------------------------------------------

    def coords(self, omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Inverse exponential map, split into (y, z).  Batched over
        leading axes."""
        omega = np.asarray(omega, dtype=float)
        c = np.clip(omega @ self.center, -1.0, 1.0)
        r = np.arccos(c)
        if np.any(r > self.max_radius):
            raise ChartDomain(
                f"point at geodesic distance {float(np.max(r)):.4f} exceeds "
                f"the chart radius {self.max_radius:.4f}"
            )
        sin = np.sin(r)
        safe_sin = np.where(sin > 1e-12, sin, 1.0)
        scale = np.where(sin > 1e-12, r / safe_sin, 1.0)
        u = (omega - c[..., None] * self.center) * scale[..., None]
        comps = u @ self.frame
        return comps[..., :self.k], comps[..., self.k:]

    def point(self, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Exponential map of the tangent vector with components (y, z)."""
        y = np.asarray(y, dtype=float)
        z = np.asarray(z, dtype=float)
        comps = np.concatenate([y, z], axis=-1)
        u = comps @ self.frame.T
        r = np.linalg.norm(comps, axis=-1)
        if np.any(r > self.max_radius):
            raise ChartDomain(
                f"coordinates at radius {float(np.max(r)):.4f} exceed the "
                f"chart radius {self.max_radius:.4f}"
            )
        safe = np.where(r > 1e-12, r, 1.0)
        sinc = np.where(r > 1e-12, np.sin(safe) / safe, 1.0)
        return np.cos(r)[..., None] * self.center + sinc[..., None] * u

    # -- covector maps ------------------------------------------------------

    def covector_coords(self, xi: ScCovector) -> ChartState:
        """Chart coordinates (y, z, tau, mu, nu) of a global covector."""
        y, z = self.coords(xi.omega)
        comps = np.concatenate([y, z])
        r = float(np.linalg.norm(comps))
        if r < 1e-12:
            vec = xi.v @ self.frame
        else:
            uhat_amb = (comps / r) @ self.frame.T
            that = -np.sin(r) * self.center + np.cos(r) * uhat_amb
            alpha = float(xi.v @ that)
            v_perp = xi.v - alpha * that
            cov_amb = alpha * uhat_amb + (np.sin(r) / r) * v_perp
            vec = cov_amb @ self.frame
        return ChartState(y, z, np.asarray(xi.tau, dtype=float),
                          vec[: self.k], vec[self.k:])

    def covector(self, st: ChartState) -> ScCovector:
        """Global covector from (unbatched) chart coordinates."""
        omega = self.point(st.y, st.z)
        comps = np.concatenate([np.atleast_1d(st.y), np.atleast_1d(st.z)])
        covec = np.concatenate([np.atleast_1d(st.mu), np.atleast_1d(st.nu)])
        r = float(np.linalg.norm(comps))
        cov_amb = covec @ self.frame.T
        if r < 1e-12:
            v = cov_amb
        else:
            uhat = comps / r
            that = (-np.sin(r) * self.center
                    + np.cos(r) * (uhat @ self.frame.T))
            radial = float(covec @ uhat)
            perp_amb = cov_amb - radial * (uhat @ self.frame.T)
            v = radial * that + (r / np.sin(r)) * perp_amb
        return ScCovector(omega, float(st.tau), v)

    # -- metric coefficients -------------------------------------------------

    def h_nn(self, y, z) -> np.ndarray:
        """Normal block of the dual metric; identity at the center."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        z = np.atleast_1d(np.asarray(z, dtype=float))
        r = np.sqrt(y @ y + z @ z)
        return metric_scale(r) * np.eye(self.k) + metric_skew(r) * np.outer(y, y)

    def h_nt(self, y, z) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        z = np.atleast_1d(np.asarray(z, dtype=float))
        r = np.sqrt(y @ y + z @ z)
        return metric_skew(r) * np.outer(y, z)

    def h_tt(self, y, z) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        z = np.atleast_1d(np.asarray(z, dtype=float))
        r = np.sqrt(y @ y + z @ z)
        return metric_scale(r) * np.eye(self.m) + metric_skew(r) * np.outer(z, z)

    def metric_h(self, st: ChartState) -> np.ndarray:
        """Dual metric value h(y, z, mu, nu); batched."""
        r = np.sqrt(np.sum(st.y ** 2, axis=-1) + np.sum(st.z ** 2, axis=-1))
        quad = np.sum(st.mu ** 2, axis=-1) + np.sum(st.nu ** 2, axis=-1)
        mix = st.eta + np.sum(st.z * st.nu, axis=-1)
        return metric_scale(r) * quad + metric_skew(r) * mix ** 2

    def htilde(self, z, nu) -> np.ndarray:
        """Tangential metric restricted to the face (y = mu = 0); batched."""
        z = np.asarray(z, dtype=float)
        nu = np.asarray(nu, dtype=float)
        r = np.linalg.norm(z, axis=-1)
        quad = np.sum(nu ** 2, axis=-1)
        mix = np.sum(z * nu, axis=-1)
        return metric_scale(r) * quad + metric_skew(r) * mix ** 2

    def metric_g(self, st: ChartState) -> np.ndarray:
        return st.tau ** 2 + self.metric_h(st)

    # -- Hamilton field in chart coordinates ---------------------------------

    def hamilton_chart(self, st: ChartState) -> ChartState:
        """The rescaled Hamilton field in chart coordinates; batched.

        dy = dh/dmu, dz = dh/dnu, dtau = -2h,
        dmu = 2 tau mu - dh/dy, dnu = 2 tau nu - dh/dz.
        """
        r = np.sqrt(np.sum(st.y ** 2, axis=-1) + np.sum(st.z ** 2, axis=-1))
        a = metric_scale(r)
        b = metric_skew(r)
        da_r = metric_scale_slope(r)   # A'(r)/r
        db_r = metric_skew_slope(r)    # B'(r)/r
        quad = np.sum(st.mu ** 2, axis=-1) + np.sum(st.nu ** 2, axis=-1)
        mix = st.eta + np.sum(st.z * st.nu, axis=-1)
        h = a * quad + b * mix ** 2

        dy = 2.0 * a[..., None] * st.mu + 2.0 * (b * mix)[..., None] * st.y
        dz = 2.0 * a[..., None] * st.nu + 2.0 * (b * mix)[..., None] * st.z
        grad_scale = (da_r * quad + db_r * mix ** 2)[..., None]
        dh_dy = grad_scale * st.y + 2.0 * (b * mix)[..., None] * st.mu
        dh_dz = grad_scale * st.z + 2.0 * (b * mix)[..., None] * st.nu
        dmu = 2.0 * st.tau[..., None] * st.mu - dh_dy
        dnu = 2.0 * st.tau[..., None] * st.nu - dh_dz
        return ChartState(dy, dz, -2.0 * h, dmu, dnu)

    def flow_rk4(self, st: ChartState, dt: float, steps: int) -> ChartState:
        """Fixed-step RK4 integration of the chart Hamilton field; batched."""
        cur = st.copy()
        for _ in range(steps):
            k1 = self.hamilton_chart(cur)
            k2 = self.hamilton_chart(_advance(cur, k1, dt / 2))
            k3 = self.hamilton_chart(_advance(cur, k2, dt / 2))
            k4 = self.hamilton_chart(_advance(cur, k3, dt))
            cur = ChartState(
                cur.y + dt / 6 * (k1.y + 2 * k2.y + 2 * k3.y + k4.y),
                cur.z + dt / 6 * (k1.z + 2 * k2.z + 2 * k3.z + k4.z),
                cur.tau + dt / 6 * (k1.tau + 2 * k2.tau + 2 * k3.tau + k4.tau),
                cur.mu + dt / 6 * (k1.mu + 2 * k2.mu + 2 * k3.mu + k4.mu),
                cur.nu + dt / 6 * (k1.nu + 2 * k2.nu + 2 * k3.nu + k4.nu),
            )
        return cur


def _advance(st: ChartState, d: ChartState, dt: float) -> ChartState:
    return ChartState(st.y + dt * d.y, st.z + dt * d.z, st.tau + dt * d.tau,
                      st.mu + dt * d.mu, st.nu + dt * d.nu)


def chart_at(lattice: SubspaceLattice, face, center,
             max_radius: float = np.pi / 2) -> FaceChart:
    """Chart at a regular point of a face of the lattice."""
    face_obj = face if isinstance(face, CollisionFace) else lattice.face(face)
    return FaceChart(np.asarray(center, dtype=float), face_obj,
                     lattice=lattice, max_radius=max_radius)


def pi_invariant_eval(name: str, xi: ScCovector, chart: FaceChart):
    """Evaluate one of the invariant chart functions y, z, tau, nu, eta.

    All five depend only on the compressed data whenever the base point sits
    on the relevant sub-face (eta = y . mu vanishes at y = 0 regardless of
    the normal momentum).
    """
    st = chart.covector_coords(xi)
    if name == "y":
        return st.y
    if name == "z":
        return st.z
    if name == "tau":
        return float(st.tau)
    if name == "nu":
        return st.nu
    if name == "eta":
        return float(st.eta)
    raise ValueError(f"unknown invariant {name!r}; expected y/z/tau/nu/eta")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def covectors_to_csv(covectors: list[ScCovector]) -> str:
    """CSV with columns omega_1..omega_n, tau, v_1..v_n (17 significant
    digits, lossless round trip)."""
    if not covectors:
        return ""
    n = covectors[0].dim
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ([f"omega_{i + 1}" for i in range(n)] + ["tau"]
              + [f"v_{i + 1}" for i in range(n)])
    writer.writerow(header)
    for xi in covectors:
        row = ([format(x, ".17g") for x in xi.omega]
               + [format(xi.tau, ".17g")]
               + [format(x, ".17g") for x in xi.v])
        writer.writerow(row)
    return buf.getvalue()


def covectors_from_csv(text: str) -> list[ScCovector]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return []
    header = rows[0]
    n = sum(1 for h in header if h.startswith("omega_"))
    out = []
    for row in rows[1:]:
        if not row:
            continue
        vals = [float(x) for x in row]
        out.append(ScCovector(np.array(vals[:n]), vals[n],
                              np.array(vals[n + 1:2 * n + 1])))
    return out


def covectors_to_json(covectors: list[ScCovector]) -> str:
    return json.dumps([xi.to_json_dict() for xi in covectors],
                      sort_keys=True)


def covectors_from_json(text: str) -> list[ScCovector]:
    return [ScCovector.from_json_dict(doc) for doc in json.loads(text)]
