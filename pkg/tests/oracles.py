"""Independent oracles for the test suite.

Deliberately naive implementations that share no algebra with the library:
hits are found by dense arc-length scanning with ternary refinement, chains
are enumerated exhaustively, and the scalar ODE is integrated by a plain
RK4 loop.
"""

import numpy as np


def rk4_scalar(f, y0, t_end, steps):
    """Plain fixed-step RK4 for dy/dt = f(y) from t = 0 to t_end."""
    h = t_end / steps
    y = y0
    for _ in range(steps):
        k1 = f(y)
        k2 = f(y + h / 2 * k1)
        k3 = f(y + h / 2 * k2)
        k4 = f(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def all_chains_max_len(projectors, dims, target):
    """Longest strictly increasing inclusion chain of nonzero members ending
    at `target`, by exhaustive depth-first enumeration."""
    n_members = len(projectors)

    def leq(i, j):
        return np.linalg.norm(projectors[j] @ projectors[i]
                              - projectors[i]) <= 1e-9

    best = [0]

    def extend(chain):
        best[0] = max(best[0], len(chain))
        head = chain[-1]
        for i in range(n_members):
            if dims[i] == 0 or i == head:
                continue
            if dims[i] < dims[head] and leq(i, head) and i not in chain:
                extend(chain + [i])

    extend([target])
    return best[0]


# ---------------------------------------------------------------------------
# Brute-force broken-path enumerator (dense sampling + independent reflect)
# ---------------------------------------------------------------------------

class OracleArrangement:
    """Raw subspace data: list of (name, projector) for the proper members,
    plus the ambient dimension."""

    def __init__(self, members, ambient_dim):
        self.members = members          # [(name, projector, dim)]
        self.ambient_dim = ambient_dim

    @staticmethod
    def from_lattice(lattice):
        members = []
        for i in lattice.proper_face_indices():
            m = lattice.members[i]
            members.append((m.name, m.projector.copy(), m.dim))
        return OracleArrangement(members, lattice.ambient_dim)


def _dense_first_hit(arr, p, u, s_max, grid=4001, seed_offset=0.0,
                     floor=1e-12):
    """Smallest s in (floor, s_max] with gamma(s) on some proper member,
    found by dense scanning of the distance functions and ternary
    refinement of each local minimum."""
    ss = np.linspace(0.0, s_max, grid) + seed_offset * (s_max / grid)
    ss = ss[(ss > 0) & (ss <= s_max)]
    gam = np.cos(ss)[:, None] * p + np.sin(ss)[:, None] * u
    best = None
    for name, proj, dim in arr.members:
        d = np.linalg.norm(gam - gam @ proj.T, axis=1)
        if np.max(d) < 1e-9:
            continue  # whole path inside the member
        is_min = np.zeros(len(ss), dtype=bool)
        is_min[1:-1] = (d[1:-1] <= d[:-2]) & (d[1:-1] <= d[2:])
        is_min[0] = d[0] < d[1]
        is_min[-1] = d[-1] < d[-2]
        for i in np.nonzero(is_min & (d < 5e-3))[0]:
            lo = ss[max(i - 1, 0)]
            hi = ss[min(i + 1, len(ss) - 1)]

            def dist(s):
                g = np.cos(s) * p + np.sin(s) * u
                return float(np.linalg.norm(g - proj @ g))

            for _ in range(200):
                m1 = lo + (hi - lo) / 3
                m2 = hi - (hi - lo) / 3
                if dist(m1) < dist(m2):
                    hi = m2
                else:
                    lo = m1
                if hi - lo < 1e-15:
                    break
            s_star = 0.5 * (lo + hi)
            if dist(s_star) < 1e-9 and floor < s_star <= s_max:
                if best is None or s_star < best - 1e-12:
                    best = s_star
    if best is None:
        return None
    point = np.cos(best) * p + np.sin(best) * u
    point = point / np.linalg.norm(point)
    # minimal containing member
    containing = [(name, proj, dim) for name, proj, dim in arr.members
                  if np.linalg.norm(point - proj @ point) < 1e-8]
    name, proj, dim = min(containing, key=lambda t: t[2])
    return best, name, proj, dim, point


def _oracle_reflect(point, u_in, proj, m_samples):
    """Independent reflection: preserve the member-tangential part, spin the
    normal part over an equal-angle grid anchored at the straight direction
    (codimension <= 2 only)."""
    tang = proj @ u_in
    tang = tang - (point @ tang) * point
    normal = u_in - tang
    mag = np.linalg.norm(normal)
    if mag <= 1e-10:
        return [u_in]
    n = len(point)
    codim = n - int(round(np.trace(proj)))
    if codim == 1:
        return [u_in, tang - normal]
    if codim != 2:
        raise NotImplementedError("oracle supports codim <= 2")
    # orthonormal basis of the normal space: complement of proj's range
    w, vecs = np.linalg.eigh(proj)
    frame = vecs[:, w < 0.5]
    e1 = frame.T @ (normal / mag)
    e2 = np.array([-e1[1], e1[0]])
    outs = []
    for j in range(m_samples):
        th = 2 * np.pi * j / m_samples
        d = np.cos(th) * e1 + np.sin(th) * e2
        outs.append(tang + mag * (frame @ d))
    return outs


def brute_force_relation(lattice, p, u, max_breaks, m_samples,
                         total=np.pi, seed_offset=0.0):
    """Recursive brute-force enumeration of broken-path endpoints.

    Mirrors the policy semantics: every transversal hit is an event and
    consumes budget; beyond the budget only the straight continuation
    survives, flagged truncated and unrecorded.  Returns a sorted list of
    (signature, endpoint, direction, truncated).
    """
    arr = OracleArrangement.from_lattice(lattice)
    results = []

    def advance(p0, u0, remaining, sig, used, truncated):
        hit = _dense_first_hit(arr, p0, u0, remaining,
                               seed_offset=seed_offset)
        if hit is None or hit[0] >= remaining - 1e-12:
            q = np.cos(remaining) * p0 + np.sin(remaining) * u0
            w = -np.sin(remaining) * p0 + np.cos(remaining) * u0
            results.append((tuple(sig), q, w, truncated))
            return
        s_star, name, proj, dim, point = hit
        u_minus = -np.sin(s_star) * p0 + np.cos(s_star) * u0
        u_minus = u_minus - (point @ u_minus) * point
        u_minus = u_minus / np.linalg.norm(u_minus)
        normal = u_minus - (proj @ u_minus
                            - (point @ (proj @ u_minus)) * point)
        if np.linalg.norm(normal) <= 1e-10:
            advance(point, u_minus, remaining - s_star, sig, used, truncated)
            return
        if used >= max_breaks:
            advance(point, u_minus, remaining - s_star, sig, used, True)
            return
        for u_out in _oracle_reflect(point, u_minus, proj, m_samples):
            advance(point, u_out, remaining - s_star, sig + [name],
                    used + 1, truncated)

    advance(np.asarray(p, dtype=float), np.asarray(u, dtype=float),
            total, [], 0, False)
    merged = []
    for sig, q, w, trunc in results:
        for entry in merged:
            if (entry[0] == sig and np.linalg.norm(entry[1] - q) <= 1e-8
                    and np.linalg.norm(entry[2] - w) <= 1e-8
                    and entry[3] == trunc):
                break
        else:
            merged.append((sig, q, w, trunc))
    merged.sort(key=lambda t: (t[0], tuple(np.round(t[1], 9)),
                               tuple(np.round(t[2], 9))))
    return merged
