"""Bicharacteristic flow on the boundary phase space.

In the global representation (omega, tau, v) the rescaled Hamilton field is

    d omega / dt = 2 v
    d tau   / dt = -2 |v|^2
    d v     / dt = 2 tau v - 2 |v|^2 omega,

the round-sphere geodesic spray with the fiber-radial rescaling.  On the
energy shell tau^2 + |v|^2 = lambda the tau component obeys the autonomous
ODE dT/dt = 2 (T^2 - lambda), whose non-constant solutions are

    T(t) = -sqrt(lambda) * tanh(2 sqrt(lambda) (t - c)),

and the base point travels a great circle of total arc length pi as t runs
over the whole line.  Arc length s and flow time t are linked by
ds/dt = 2 sqrt(lambda - tau^2), with tau = sqrt(lambda) cos(s - s1) and
|v| = sqrt(lambda) sin(s - s1); s1 marks the incoming radial limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    IntegrationDiverged,
    InvalidEnergy,
    OffShell,
    RadialDegeneracy,
)
from .phasespace import ChartState, FaceChart, ScCovector

ON_SHELL_TOL = 1e-8
RADIAL_STAGNATION = 1e-12


@dataclass(frozen=True)
class FlowConfig:
    lam: float
    integrator: str = "analytic"   # "analytic" | "rk4"
    step: float = 1e-3             # rk4 only
    max_time: float = 2.0
    n_samples: int = 401

    def __post_init__(self):
        if self.lam <= 0:
            raise InvalidEnergy(f"lambda must be positive, got {self.lam}")
        if self.integrator not in ("analytic", "rk4"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.integrator == "rk4" and self.step <= 0:
            raise ValueError("rk4 step must be positive")


def hamilton_field(xi, lam: float | None = None):
    """Tangent data (d omega, d tau, d v) of the rescaled Hamilton field.

    Accepts an ScCovector or raw batched arrays (omega, tau, v); lam is
    accepted for interface symmetry but the field does not depend on it.
    """
    if isinstance(xi, ScCovector):
        domega, dtau, dv = _field(xi.omega, xi.tau, xi.v)
        return domega, float(dtau), dv
    omega, tau, v = xi
    return _field(np.asarray(omega, dtype=float),
                  np.asarray(tau, dtype=float),
                  np.asarray(v, dtype=float))


def _field(omega, tau, v):
    h = np.sum(v * v, axis=-1)
    domega = 2.0 * v
    dtau = -2.0 * h
    dv = 2.0 * np.asarray(tau)[..., None] * v - 2.0 * h[..., None] * omega
    return domega, dtau, dv


def tau_closed_form(tau0: float, lam: float, t):
    """Solution of dT/dt = 2 (T^2 - lambda) with T(0) = tau0.

    Constant at the fixed points T = +-sqrt(lambda); otherwise
    T(t) = -sqrt(lambda) tanh(2 sqrt(lambda) (t - c)) with c fixed by tau0.
    """
    if lam <= 0:
        raise InvalidEnergy(f"lambda must be positive, got {lam}")
    root = np.sqrt(lam)
    if abs(tau0) > root + ON_SHELL_TOL:
        raise OffShell(f"|tau0| = {abs(tau0)} exceeds sqrt(lambda) = {root}")
    t = np.asarray(t, dtype=float)
    if root - abs(tau0) <= RADIAL_STAGNATION:
        return np.full_like(t, np.sign(tau0) * root) if t.ndim else float(np.sign(tau0) * root)
    c = np.arctanh(np.clip(tau0 / root, -1 + 1e-15, 1 - 1e-15)) / (2.0 * root)
    out = -root * np.tanh(2.0 * root * (t - c))
    return out if t.ndim else float(out)


def _time_from_s_rel(s_rel, lam: float):
    """t at birth-relative arc length s_rel, with t = 0 at s_rel = pi/2.

    Inverse of tau = sqrt(lambda) cos(s_rel) composed with the tau solution
    whose constant c vanishes.
    """
    root = np.sqrt(lam)
    cosv = np.clip(np.cos(s_rel), -1.0, 1.0)
    with np.errstate(divide="ignore"):
        return -np.arctanh(cosv) / (2.0 * root)


@dataclass(frozen=True)
class BicharSegment:
    """A sampled stretch of a single (unbroken) bicharacteristic."""

    lam: float
    t: np.ndarray        # (G,)
    s: np.ndarray        # (G,), arc length, 0 at the first sample
    omega: np.ndarray    # (G, n)
    tau: np.ndarray      # (G,)
    v: np.ndarray        # (G, n)
    s_birth: float       # s1 in segment coordinates (tau(s1) = sqrt(lam))
    analytic: bool
    radial: bool = False
    stopped: bool = False
    # analytic great-circle data: (omega0, udir0, s_rel0, c)
    _closed_form: tuple = field(default=None, repr=False, compare=False)

    @property
    def start(self) -> ScCovector:
        return ScCovector(self.omega[0], float(self.tau[0]), self.v[0])

    @property
    def end(self) -> ScCovector:
        return ScCovector(self.omega[-1], float(self.tau[-1]), self.v[-1])

    @property
    def arc_length(self) -> float:
        return float(self.s[-1] - self.s[0])

    def energy_drift(self) -> float:
        g = self.tau ** 2 + np.sum(self.v ** 2, axis=-1)
        return float(np.max(np.abs(g - self.lam)))

    def eval_at_t(self, t):
        """Exact state at arbitrary times (analytic segments only)."""
        if not self.analytic:
            raise ValueError("eval_at_t requires an analytic segment")
        if self.radial:
            t = np.atleast_1d(np.asarray(t, dtype=float))
            g = len(t)
            return (np.repeat(self.omega[:1], g, 0), np.repeat(self.tau[:1], g),
                    np.repeat(self.v[:1], g, 0), np.zeros(g))
        omega0, udir0, s_rel0, c = self._closed_form
        root = np.sqrt(self.lam)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        tau = -root * np.tanh(2.0 * root * (t - c))
        s_rel = np.arccos(np.clip(tau / root, -1.0, 1.0))
        ds = s_rel - s_rel0
        omega = (np.cos(ds)[:, None] * omega0[None, :]
                 + np.sin(ds)[:, None] * udir0[None, :])
        udir = (-np.sin(ds)[:, None] * omega0[None, :]
                + np.cos(ds)[:, None] * udir0[None, :])
        v = (root * np.sin(s_rel))[:, None] * udir
        return omega, tau, v, ds


def integrate_bichar(start: ScCovector, config: FlowConfig,
                     stop=None) -> BicharSegment:
    """Integrate the bicharacteristic through `start` forward in time.

    Analytic mode evaluates the exact great-circle solution on a uniform
    arc-length grid; RK4 mode steps the Hamilton field with per-step
    renormalization of |omega| = 1 and <omega, v> = 0.  Integration ends at
    `stop` (a predicate on (t, ScCovector), located by bisection), at
    config.max_time, or immediately for radial initial data.
    """
    lam = config.lam
    defect = abs(start.metric_value - lam)
    if defect > ON_SHELL_TOL:
        raise OffShell(
            f"start is off the energy shell: |g - lambda| = {defect:.3e}"
        )
    root = np.sqrt(lam)
    speed = np.linalg.norm(start.v)
    if root - abs(start.tau) < RADIAL_STAGNATION or speed < RADIAL_STAGNATION:
        # Radial stagnation: the trajectory is constant.
        g = 2
        t = np.array([0.0, config.max_time])
        return BicharSegment(
            lam, t, np.zeros(g),
            np.repeat(start.omega[None, :], g, 0),
            np.full(g, start.tau),
            np.repeat(start.v[None, :], g, 0),
            0.0, True, radial=True,
        )
    if config.integrator == "analytic":
        return _integrate_analytic(start, config, stop)
    return _integrate_rk4(start, config, stop)


def _integrate_analytic(start, config, stop):
    lam = config.lam
    root = np.sqrt(lam)
    omega0 = start.omega
    udir0 = start.v / np.linalg.norm(start.v)
    s_rel0 = float(np.arccos(np.clip(start.tau / root, -1.0, 1.0)))
    c = float(np.arctanh(np.clip(start.tau / root, -1 + 1e-15, 1 - 1e-15))
              / (2.0 * root))
    seg = BicharSegment(lam, None, None, None, None, None,
                        -s_rel0, True, _closed_form=(omega0, udir0, s_rel0, c))

    tau_end = tau_closed_form(start.tau, lam, config.max_time)
    s_rel_end = float(np.arccos(np.clip(tau_end / root, -1.0, 1.0)))
    s_grid = np.linspace(0.0, s_rel_end - s_rel0, config.n_samples)
    t_grid = _time_from_s_rel(s_grid + s_rel0, lam) - _time_from_s_rel(s_rel0, lam)
    # tanh saturation at long horizons maps the final sample to t = inf;
    # its time is max_time by construction.
    t_grid = np.minimum(np.nan_to_num(t_grid, posinf=config.max_time),
                        config.max_time)
    t_grid[0] = 0.0

    stopped = False
    if stop is not None:
        hit = None
        for i, ti in enumerate(t_grid):
            omega, tau, v, _ = seg.eval_at_t(ti)
            if stop(float(ti), ScCovector(omega[0], float(tau[0]), v[0])):
                hit = i
                break
        if hit is not None and hit > 0:
            lo, hi = t_grid[hit - 1], t_grid[hit]
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                omega, tau, v, _ = seg.eval_at_t(mid)
                if stop(float(mid), ScCovector(omega[0], float(tau[0]), v[0])):
                    hi = mid
                else:
                    lo = mid
                if hi - lo < 1e-15:
                    break
            t_stop = hi
            tau_stop = tau_closed_form(start.tau, lam, t_stop)
            s_stop = float(np.arccos(np.clip(tau_stop / root, -1, 1))) - s_rel0
            s_grid = np.linspace(0.0, s_stop, config.n_samples)
            t_grid = (_time_from_s_rel(s_grid + s_rel0, lam)
                      - _time_from_s_rel(s_rel0, lam))
            t_grid[0] = 0.0
            t_grid[-1] = t_stop
            stopped = True
        elif hit == 0:
            s_grid = np.zeros(1)
            t_grid = np.zeros(1)
            stopped = True

    omega, tau, v, _ = seg.eval_at_t(t_grid)
    return BicharSegment(lam, t_grid, s_grid, omega, tau, v, -s_rel0,
                         True, stopped=stopped,
                         _closed_form=(omega0, udir0, s_rel0, c))


def _rk4_step(state, dt):
    """One RK4 step of (omega, tau, v, s) with tangency renormalization."""
    def deriv(st):
        omega, tau, v, _ = st
        domega, dtau, dv = _field(omega, tau, v)
        ds = 2.0 * np.sqrt(np.sum(v * v, axis=-1))
        return domega, dtau, dv, ds

    def add(st, d, w):
        return tuple(a + w * b for a, b in zip(st, d))

    k1 = deriv(state)
    k2 = deriv(add(state, k1, dt / 2))
    k3 = deriv(add(state, k2, dt / 2))
    k4 = deriv(add(state, k3, dt))
    new = tuple(
        a + dt / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(state, k1, k2, k3, k4)
    )
    omega, tau, v, s = new
    norm = np.linalg.norm(omega, axis=-1, keepdims=True)
    omega = omega / norm
    v = v - np.sum(omega * v, axis=-1, keepdims=True) * omega
    return omega, tau, v, s


def _integrate_rk4(start, config, stop):
    lam = config.lam
    root = np.sqrt(lam)
    dt = config.step
    n_steps = int(np.ceil(config.max_time / dt))
    state = (start.omega.copy(), np.asarray(float(start.tau)),
             start.v.copy(), np.asarray(0.0))
    ts = [0.0]
    samples = [state]
    stopped = False
    for i in range(n_steps):
        step = min(dt, config.max_time - i * dt)
        if step <= 0:
            break
        state = _rk4_step(state, step)
        t_now = min((i + 1) * dt, config.max_time)
        ts.append(t_now)
        samples.append(state)
        g = float(state[1] ** 2 + state[2] @ state[2])
        if abs(g - lam) > 1e-5:
            raise IntegrationDiverged(
                f"energy drift {abs(g - lam):.3e} at t = {t_now:.4f}"
            )
        if stop is not None and stop(
            t_now, ScCovector(state[0], float(state[1]), state[2])
        ):
            stopped = True
            break
        if root - abs(float(state[1])) < RADIAL_STAGNATION:
            stopped = True
            break
    omega = np.stack([s[0] for s in samples])
    tau = np.array([float(s[1]) for s in samples])
    v = np.stack([s[2] for s in samples])
    s_arr = np.array([float(s[3]) for s in samples])
    s_birth = -float(np.arccos(np.clip(start.tau / root, -1.0, 1.0)))
    return BicharSegment(lam, np.array(ts), s_arr, omega, tau, v, s_birth,
                         False, stopped=stopped)


def rk4_batch(omega0: np.ndarray, tau0: np.ndarray, v0: np.ndarray,
              dt: float, n_steps: int, sample_every: int = 100):
    """Batched RK4 march of many bicharacteristics at once.

    Returns (times, omegas, taus, vs) sampled every `sample_every` steps
    (the initial state included); arrays are stacked over a leading sample
    axis, then the batch axis.
    """
    state = (np.array(omega0, dtype=float), np.array(tau0, dtype=float),
             np.array(v0, dtype=float), np.zeros(np.shape(tau0)))
    times = [0.0]
    oms, taus, vs = [state[0].copy()], [state[1].copy()], [state[2].copy()]
    for i in range(n_steps):
        state = _rk4_step(state, dt)
        if (i + 1) % sample_every == 0 or i == n_steps - 1:
            times.append((i + 1) * dt)
            oms.append(state[0].copy())
            taus.append(state[1].copy())
            vs.append(state[2].copy())
    return (np.array(times), np.stack(oms), np.stack(taus), np.stack(vs))


def full_free_trajectory(start: ScCovector, config: FlowConfig,
                         horizon: float = 25.0) -> BicharSegment:
    """The full bicharacteristic through `start` over t in [-horizon,
    horizon]; both radial limits are reached to machine precision."""
    forward = integrate_bichar(
        start, FlowConfig(config.lam, "analytic", max_time=horizon,
                          n_samples=config.n_samples))
    back_start = ScCovector(start.omega, -start.tau, -start.v)
    backward = integrate_bichar(
        back_start, FlowConfig(config.lam, "analytic", max_time=horizon,
                               n_samples=config.n_samples))
    # Reverse the backward half: (omega, -tau, -v) at time -t.
    t = np.concatenate([-backward.t[::-1], forward.t[1:]])
    s = np.concatenate([-backward.s[::-1], forward.s[1:]])
    omega = np.concatenate([backward.omega[::-1], forward.omega[1:]])
    tau = np.concatenate([-backward.tau[::-1], forward.tau[1:]])
    v = np.concatenate([-backward.v[::-1], forward.v[1:]])
    s = s - s[0]
    root = np.sqrt(config.lam)
    s_birth = -float(np.arccos(np.clip(tau[0] / root, -1.0, 1.0)))
    return BicharSegment(config.lam, t, s, omega, tau, v, s_birth, True)


@dataclass(frozen=True)
class SphericalGeodesic:
    """Unit-speed geodesic record (s -> position, direction) with the birth
    offset s1 at which tau would equal sqrt(lambda)."""

    s: np.ndarray
    position: np.ndarray
    direction: np.ndarray
    s1: float


def reparametrize(segment: BicharSegment) -> SphericalGeodesic:
    """Arc-length reparametrization of a bicharacteristic into a unit-speed
    sphere geodesic; requires the segment to stay away from the radial sets.
    """
    root = np.sqrt(segment.lam)
    sin_vals = np.sin(segment.s - segment.s_birth)
    if np.any(root - np.abs(segment.tau) < 1e-10) or np.any(sin_vals < 1e-9):
        raise RadialDegeneracy(
            "segment touches a radial set; arc-length parametrization "
            "degenerates"
        )
    speeds = np.linalg.norm(segment.v, axis=-1, keepdims=True)
    direction = segment.v / speeds
    return SphericalGeodesic(segment.s.copy(), segment.omega.copy(),
                             direction, segment.s_birth)


def rebuild_bichar(geo: SphericalGeodesic, lam: float,
                   t_offset: float = 0.0) -> BicharSegment:
    """Rebuild the bicharacteristic from a unit-speed geodesic record."""
    root = np.sqrt(lam)
    s_rel = geo.s - geo.s1
    tau = root * np.cos(s_rel)
    v = (root * np.sin(s_rel))[:, None] * geo.direction
    t = _time_from_s_rel(s_rel, lam)
    t = t - t[0] + t_offset
    return BicharSegment(lam, t, geo.s - geo.s[0], geo.position.copy(),
                         tau, v, geo.s1 - geo.s[0], True)


def model_field_Wflat(xi: ScCovector, chart: FaceChart) -> ChartState:
    """The flat model field in chart coordinates:

    dy = 2 mu, dz = 2 nu, dtau = -2 (|mu|^2 + |nu|^2),
    dmu = 2 tau mu, dnu = 2 tau nu.

    Agrees with the chart Hamilton field exactly at the chart center.
    """
    st = chart.covector_coords(xi)
    return wflat_chart(st)


def wflat_chart(st: ChartState) -> ChartState:
    quad = np.sum(st.mu ** 2, axis=-1) + np.sum(st.nu ** 2, axis=-1)
    return ChartState(
        2.0 * st.mu,
        2.0 * st.nu,
        -2.0 * quad,
        2.0 * np.asarray(st.tau)[..., None] * st.mu,
        2.0 * np.asarray(st.tau)[..., None] * st.nu,
    )


def segment_records(segment: BicharSegment, lattice=None) -> list[dict]:
    """Flat per-sample records for export (t, s, omega, tau, v, face)."""
    from .arrangement import locate as _locate
    from .errors import AmbiguousLocation

    records = []
    for i in range(len(segment.t)):
        face_name = ""
        if lattice is not None:
            try:
                face, _ = _locate(lattice, segment.omega[i])
                face_name = face.name
            except AmbiguousLocation:
                face_name = "ambiguous"
        records.append({
            "t": float(segment.t[i]),
            "s": float(segment.s[i]),
            "omega": segment.omega[i].tolist(),
            "tau": float(segment.tau[i]),
            "v": segment.v[i].tolist(),
            "face": face_name,
        })
    return records
