"""Spin-preimage loops in the Brillouin zone and their linking numbers.

The preimage of a target Bloch orientation s is the closed curve where the
ground-state spin field equals s.  It is extracted as the intersection of
the two level sets {S_e1(k) = s_e1} and {S_e2(k) = s_e2} (e1, e2 the two
coordinate axes other than the dominant component of s), marching over a
tetrahedral decomposition of an auxiliary fine grid, with the dominant
component's sign disambiguating the antipodal solution.  Loops are embedded
in R3 through the S3 map and a stereographic chart, where pairwise Gauss
linking numbers are evaluated segment-pair exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations
from typing import NamedTuple

import numpy as np

from . import model
from .errors import (
    ChartExhausted,
    CurvesTooClose,
    NotClosed,
    ResolutionTooCoarse,
)

TOL_SEP = 1e-3
CURVE_TOL = 0.05
_LEVEL_NUDGE = (1.0e-9, 1.37e-9)  # dodges exact-zero grid values on symmetry planes

TWO_PI = 2.0 * np.pi


@dataclass
class Polyline:
    """Oriented curve; closed polylines do not repeat the first vertex."""

    vertices: np.ndarray
    coords: str = "T3"  # one of T3, S3, R3
    closed: bool = True
    target: tuple | None = None
    h: float | None = None
    chart: str | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError(f"vertices must be (m, 3), got {self.vertices.shape}")
        if self.coords not in ("T3", "S3", "R3"):
            raise ValueError(f"unknown coordinate system {self.coords!r}")
        if self.closed and len(self.vertices) < 3:
            raise ValueError("closed polylines need at least 3 vertices")
        if self.coords == "T3":
            self.vertices = np.mod(self.vertices, TWO_PI)
        d = np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)
        if len(d) and d.min() == 0.0:
            raise ValueError("consecutive vertices must be distinct")

    def __len__(self):
        return len(self.vertices)

    def reversed(self):
        return Polyline(
            self.vertices[::-1].copy(), self.coords, self.closed,
            self.target, self.h, self.chart,
        )

    def subdivided(self):
        """Insert the midpoint of every edge (wrap-aware on the torus)."""
        v = self.vertices
        nxt = np.roll(v, -1, axis=0) if self.closed else v[1:]
        cur = v if self.closed else v[:-1]
        delta = nxt - cur
        if self.coords == "T3":
            delta = (delta + np.pi) % TWO_PI - np.pi
        mids = cur + 0.5 * delta
        out = np.empty((len(cur) + len(v), 3))
        out[0::2] = v
        out[1::2] = mids
        return Polyline(out, self.coords, self.closed, self.target, self.h, self.chart)


def polyline_to_dict(c):
    d = {
        "coords": c.coords,
        "closed": c.closed,
        "vertices": c.vertices.tolist(),
    }
    if c.target is not None:
        d["target"] = list(c.target)
    if c.h is not None:
        d["h"] = c.h
    if c.chart is not None:
        d["chart"] = c.chart
    return d


def polyline_from_dict(d):
    return Polyline(
        np.asarray(d["vertices"], dtype=float),
        coords=d["coords"],
        closed=bool(d["closed"]),
        target=tuple(d["target"]) if "target" in d else None,
        h=d.get("h"),
        chart=d.get("chart"),
    )


def _unit_target(s):
    s = np.asarray(s, dtype=float)
    norm = np.linalg.norm(s)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"spin target must be a unit vector, |s|={norm}")
    return s / norm


# ---------------------------------------------------------------------------
# contour extraction

def _kuhn_tets():
    # six tetrahedra around the cube's main diagonal; the induced face
    # diagonals match between neighboring cells, which keeps chained curve
    # segments consistent across cell boundaries
    eye = np.eye(3, dtype=int)
    tets = []
    for p in permutations(range(3)):
        corners = [(0, 0, 0),
                   tuple(int(x) for x in eye[p[0]]),
                   tuple(int(x) for x in eye[p[0]] + eye[p[1]]),
                   (1, 1, 1)]
        tets.append(corners)
    return tets


_KUHN_TETS = _kuhn_tets()


def preimage_contours(params, target, res=64, refine=1):
    """Closed preimage loops of a spin target, as T3 polylines.

    Parameters
    ----------
    params : model.HopfParams
    target : unit 3-vector
    res : int
        Cells per axis of the auxiliary marching grid (>= 16).
    refine : int
        Newton projection passes pulling the vertices onto the exact curve.

    Returns
    -------
    list of Polyline (possibly empty)

    Raises
    ------
    ResolutionTooCoarse
        If extracted curve segments cannot be chained into closed loops.
    """
    if res < 16:
        raise ValueError(f"res must be >= 16, got {res}")
    s = _unit_target(target)
    axis = int(np.argmax(np.abs(s)))
    e1, e2 = (axis + 1) % 3, (axis + 2) % 3

    grid = TWO_PI * np.arange(res) / res
    kx, ky, kz = np.meshgrid(grid, grid, grid, indexing="ij")
    bloch = model.bloch_ground(np.stack([kx, ky, kz], axis=-1), params)
    phi1 = bloch[..., e1] - (s[e1] + _LEVEL_NUDGE[0])
    phi2 = bloch[..., e2] - (s[e2] + _LEVEL_NUDGE[1])

    segments = _march_segments(phi1, phi2, res)
    loops = _chain_segments(segments)

    out = []
    for loop in loops:
        kverts = np.mod(loop * (TWO_PI / res), TWO_PI)
        n_here = model.bloch_ground(kverts, params)
        # keep the hemisphere that agrees with the target's dominant component
        if np.median(n_here[:, axis]) * s[axis] <= 0:
            continue
        for _ in range(max(0, refine)):
            kverts = _project_to_curve(kverts, s, params)
        kverts = _dedupe(np.mod(kverts, TWO_PI))
        if len(kverts) < 3:
            continue
        out.append(
            _orient(Polyline(kverts, "T3", True, tuple(s), params.h), s, params)
        )
    out.sort(key=lambda c: c.vertices[:, 0].min())
    return out


def _march_segments(phi1, phi2, res):
    """Per-tetrahedron intersection segments of the two level sets.

    Returns a list of (point1, face1, point2, face2) with points in grid
    units and faces keyed by the sorted global ids of the three grid
    vertices spanning the tetrahedron face holding that endpoint.
    """

    def corner(f, dx, dy, dz):
        arr = f
        if dx:
            arr = np.roll(arr, -1, axis=0)
        if dy:
            arr = np.roll(arr, -1, axis=1)
        if dz:
            arr = np.roll(arr, -1, axis=2)
        return arr

    offsets = [(dx, dy, dz) for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)]
    c1 = np.stack([corner(phi1, *o) for o in offsets])
    c2 = np.stack([corner(phi2, *o) for o in offsets])
    straddle = (
        (c1.min(axis=0) < 0) & (c1.max(axis=0) > 0)
        & (c2.min(axis=0) < 0) & (c2.max(axis=0) > 0)
    )
    cells = np.argwhere(straddle)

    tet_corner_idx = [[offsets.index(o) for o in tet] for tet in _KUHN_TETS]

    def gid(ix, iy, iz):
        return ((ix % res) * res + (iy % res)) * res + (iz % res)

    segments = []
    for cx, cy, cz in cells:
        for tet, cidx in zip(_KUHN_TETS, tet_corner_idx):
            pos = np.array([(cx + o[0], cy + o[1], cz + o[2]) for o in tet], float)
            ids = [gid(cx + o[0], cy + o[1], cz + o[2]) for o in tet]
            f = np.array([c1[i, cx, cy, cz] for i in cidx])
            g = np.array([c2[i, cx, cy, cz] for i in cidx])
            seg = _tet_segment(pos, ids, f, g)
            if seg is not None:
                segments.append(seg)
    return segments


def _tet_segment(pos, ids, f, g):
    pos_mask = f > 0
    npos = int(pos_mask.sum())
    if npos in (0, 4):
        return None
    if npos in (1, 3):
        lone = int(np.argmax(pos_mask)) if npos == 1 else int(np.argmin(pos_mask))
        others = [i for i in range(4) if i != lone]
        order = [(lone, others[0]), (lone, others[1]), (lone, others[2])]
    else:
        a, b = [int(i) for i in np.nonzero(pos_mask)[0]]
        c, d = [int(i) for i in np.nonzero(~pos_mask)[0]]
        order = [(a, c), (a, d), (b, d), (b, c)]

    pts, gvals, edges = [], [], []
    for i, j in order:
        t = f[i] / (f[i] - f[j])
        pts.append(pos[i] + t * (pos[j] - pos[i]))
        gvals.append(g[i] + t * (g[j] - g[i]))
        edges.append((ids[i], ids[j]))

    crossings = []
    m = len(pts)
    for i in range(m):
        j = (i + 1) % m
        gi, gj = gvals[i], gvals[j]
        if (gi > 0) == (gj > 0):
            continue
        t = gi / (gi - gj)
        point = pts[i] + t * (np.asarray(pts[j]) - np.asarray(pts[i]))
        fkey = tuple(sorted(set(edges[i]) | set(edges[j])))
        if len(fkey) != 3:
            return None  # degenerate: crossing pinned to a tet edge
        crossings.append((point, fkey))
    if len(crossings) != 2:
        return None
    (p1, f1), (p2, f2) = crossings
    if np.linalg.norm(p1 - p2) < 1e-12 or f1 == f2:
        return None
    return (p1, f1, p2, f2)


def _chain_segments(segments):
    """Walk face-to-face adjacency into closed vertex loops (grid units)."""
    if not segments:
        return []
    face_map = {}
    for i, (_, f1, _, f2) in enumerate(segments):
        face_map.setdefault(f1, []).append((i, 0))
        face_map.setdefault(f2, []).append((i, 1))
    for face, ends in face_map.items():
        if len(ends) != 2:
            raise ResolutionTooCoarse(
                f"face {face} bounds {len(ends)} curve segments; "
                "increase the marching resolution"
            )

    visited = set()
    loops = []
    for start in range(len(segments)):
        if start in visited:
            continue
        verts = []
        seg, end = start, 1
        while True:
            visited.add(seg)
            p1, f1, p2, f2 = segments[seg]
            if end == 1:
                verts.append(p1)
                exit_face = f2
            else:
                verts.append(p2)
                exit_face = f1
            nxt = [(i, e) for (i, e) in face_map[exit_face] if i != seg]
            if not nxt:
                raise ResolutionTooCoarse("open curve segment chain")
            seg, entered = nxt[0]
            end = 1 - entered  # leave through the other face next
            if seg == start:
                break
            if seg in visited:
                raise ResolutionTooCoarse("segment chain re-entered mid-loop")
        if len(verts) >= 3:
            loops.append(np.asarray(verts))
    return loops


def _dedupe(verts, tol=1e-9):
    keep = [verts[0]]
    for v in verts[1:]:
        if np.linalg.norm(v - keep[-1]) > tol:
            keep.append(v)
    while len(keep) > 1 and np.linalg.norm(keep[-1] - keep[0]) <= tol:
        keep.pop()
    return np.asarray(keep)


def _spin_jacobian(k, params, step=1e-6):
    """d(bloch)/dk by central differences, batched over vertices: (m, 3, 3)."""
    m = len(k)
    jac = np.empty((m, 3, 3))
    for ax in range(3):
        dk = np.zeros(3)
        dk[ax] = step
        jac[:, :, ax] = (
            model.bloch_ground(k + dk, params) - model.bloch_ground(k - dk, params)
        ) / (2 * step)
    return jac


def _project_to_curve(k, s, params):
    jac = _spin_jacobian(k, params)
    resid = s[None, :] - model.bloch_ground(k, params)
    dk = np.einsum("mij,mj->mi", np.linalg.pinv(jac, rcond=1e-8), resid)
    return k + dk


def _orient(c, s, params):
    """Fix loop orientation from the pullback of a tangent frame at the target.

    e1', e2' span the tangent plane at s (azimuthal rotation from e1' toward
    e2'); the curve tangent is aligned with grad(S.e1') x grad(S.e2')."""
    w = np.zeros(3)
    w[int(np.argmin(np.abs(s)))] = 1.0
    e1p = w - np.dot(w, s) * s
    e1p /= np.linalg.norm(e1p)
    e2p = np.cross(s, e1p)

    jac = _spin_jacobian(c.vertices, params)
    g1 = np.einsum("mij,i->mj", jac, e1p)
    g2 = np.einsum("mij,i->mj", jac, e2p)
    t_ref = np.cross(g1, g2)
    delta = np.roll(c.vertices, -1, axis=0) - c.vertices
    delta = (delta + np.pi) % TWO_PI - np.pi
    if np.sum(delta * t_ref) < 0:
        return c.reversed()
    return c


# ---------------------------------------------------------------------------
# epsilon-neighborhood of a spin orientation on a sampled field

def epsilon_neighborhood(f, target, epsilon):
    """Mesh sites whose Bloch vector lies within epsilon of the target.

    Returns [(site, bloch_vector), ...] in row-major site order; an empty
    list is a valid result.
    """
    if not 0 < epsilon <= 2:
        raise ValueError(f"epsilon must be in (0, 2], got {epsilon}")
    s = _unit_target(target)
    bloch = f.bloch_vectors()
    dist = np.linalg.norm(bloch - s, axis=-1)
    sites = np.argwhere(dist <= epsilon)
    return [(tuple(int(x) for x in j), bloch[tuple(j)]) for j in sites]


# ---------------------------------------------------------------------------
# embedding T3 -> S3 -> R3

def embed_r3(c, params, chart="auto", delta_pole=model.POLE_DELTA):
    """Embed a closed T3 polyline in R3 via the S3 map and a stereographic chart.

    The chart is chosen to keep every vertex clear of the projection pole;
    vertex count, closure and orientation are preserved.  The S3 map is
    2*pi-periodic, so curves crossing the zone boundary need no unwrapping.

    Raises
    ------
    ChartExhausted
        If the curve passes within delta_pole of both chart poles even after
        one subdivision pass.
    """
    if c.coords != "T3":
        raise ValueError(f"embed_r3 expects a T3 polyline, got {c.coords}")
    if not c.closed:
        raise NotClosed("embed_r3 requires a closed polyline")

    for attempt in (c, c.subdivided()):
        eta = model.map_g(attempt.vertices, params)
        clear_plus = 1.0 + eta[:, 3].min()
        clear_minus = 1.0 - eta[:, 3].max()
        if chart == "auto":
            use = "plus" if clear_plus >= clear_minus else "minus"
        else:
            use = chart
        clearance = clear_plus if use == "plus" else clear_minus
        if clearance > delta_pole:
            verts = model.stereographic_embed(eta, chart=use, delta_pole=delta_pole)
            return Polyline(verts, "R3", True, attempt.target, attempt.h, chart=use)
    raise ChartExhausted(
        f"curve passes within {delta_pole:g} of both stereographic poles"
    )


# ---------------------------------------------------------------------------
# Gauss linking number

class LinkingNumber(NamedTuple):
    value: int
    residual: float


def _closed_r3(c, name):
    if c.coords != "R3":
        raise ValueError(
            f"{name} must be in R3 coordinates (embed T3 curves first), got {c.coords}"
        )
    if not c.closed:
        raise NotClosed(f"{name} is not closed")


def _spherical_quad_area(c1, c2, c3, c4):
    """Signed solid angle of the geodesic quadrilateral c1 c2 c3 c4."""

    def tri(a, b, c):
        num = np.einsum("...i,...i->...", a, np.cross(b, c))
        den = (
            1.0
            + np.einsum("...i,...i->...", a, b)
            + np.einsum("...i,...i->...", b, c)
            + np.einsum("...i,...i->...", c, a)
        )
        return 2.0 * np.arctan2(num, den)

    return tri(c1, c2, c3) + tri(c1, c3, c4)


def gauss_linking_sum(a, b):
    """Raw Gauss double sum over segment pairs (the pre-rounding real value).

    Each segment pair contributes the exact signed area its chord-direction
    map sweeps on the unit sphere; the total divided by 4*pi is the linking
    number for disjoint closed curves.
    """
    p1 = a.vertices
    p2 = np.roll(p1, -1, axis=0)
    q1 = b.vertices
    q2 = np.roll(q1, -1, axis=0)

    def unit(v):
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    c1 = unit(q1[None, :, :] - p1[:, None, :])
    c2 = unit(q1[None, :, :] - p2[:, None, :])
    c3 = unit(q2[None, :, :] - p2[:, None, :])
    c4 = unit(q2[None, :, :] - p1[:, None, :])
    omega = _spherical_quad_area(c1, c2, c3, c4)
    return float(omega.sum()) / (4.0 * np.pi)


def gauss_linking_number(a, b, tol_sep=TOL_SEP):
    """Integer Gauss linking number of two disjoint closed R3 polylines.

    Returns a (value, residual) pair, residual being the distance of the raw
    Gauss sum from the returned integer.

    Raises
    ------
    CurvesTooClose
        If the minimum inter-curve vertex distance is below tol_sep.
    NotClosed
        If either polyline is open.
    """
    _closed_r3(a, "first curve")
    _closed_r3(b, "second curve")
    dmin = np.sqrt(
        ((a.vertices[:, None, :] - b.vertices[None, :, :]) ** 2).sum(-1)
    ).min()
    if dmin < tol_sep:
        raise CurvesTooClose(
            f"curves approach to {dmin:.2e} < tol_sep={tol_sep:g}"
        )
    raw = gauss_linking_sum(a, b)
    value = int(np.rint(raw))
    return LinkingNumber(value, raw - value)


def linking_number(a, b, tol_sep=TOL_SEP):
    """Integer Gauss linking number (see gauss_linking_number)."""
    return gauss_linking_number(a, b, tol_sep).value


def unwrap_t3(c):
    """Lift a closed T3 polyline to the universal cover R3.

    Returns (vertices, winding); winding is the integer vector of times the
    loop wraps each axis.  Only zero-winding loops lift to closed curves.
    """
    if c.coords != "T3":
        raise ValueError("unwrap_t3 expects a T3 polyline")
    v = c.vertices
    delta = np.diff(np.vstack([v, v[:1]]), axis=0)
    delta = (delta + np.pi) % TWO_PI - np.pi
    lifted = v[0] + np.vstack([np.zeros(3), np.cumsum(delta[:-1], axis=0)])
    winding = np.rint(np.sum(delta, axis=0) / TWO_PI).astype(int)
    return lifted, winding


def linking_number_t3(a, b, tol_sep=TOL_SEP):
    """Intrinsic linking number of two zero-winding closed loops on the torus.

    Both loops are lifted to the universal cover and the Gauss sum is taken
    against every periodic image of the second loop that is not separated
    from the first by a coordinate plane (separated images contribute an
    exact zero).  This is the linking number that stays meaningful when the
    S3 map is not injective (|h| < 1, where it is a double cover and the
    stereographic route overcounts by the covering degree squared).
    """
    va, wa = unwrap_t3(a)
    vb, wb = unwrap_t3(b)
    if wa.any() or wb.any():
        raise ValueError(
            f"loops wind the torus (windings {wa.tolist()}, {wb.tolist()}); "
            "intrinsic linking needs zero-winding loops"
        )
    la = Polyline(va, "R3", True)
    lo_a, hi_a = va.min(axis=0), va.max(axis=0)
    lo_b, hi_b = vb.min(axis=0), vb.max(axis=0)
    # translates beyond the combined bounding extents are separated by a
    # coordinate plane and cannot link
    reach = np.ceil(((hi_a - lo_a) + (hi_b - lo_b)) / TWO_PI).astype(int) + 1
    raw = 0.0
    for tx in range(-reach[0], reach[0] + 1):
        for ty in range(-reach[1], reach[1] + 1):
            for tz in range(-reach[2], reach[2] + 1):
                shift = TWO_PI * np.array([tx, ty, tz], float)
                if np.any(hi_b + shift < lo_a) or np.any(lo_b + shift > hi_a):
                    continue  # a separating plane exists: exactly unlinked
                img = Polyline(vb + shift, "R3", True)
                dmin = np.sqrt(
                    ((la.vertices[:, None, :] - img.vertices[None, :, :]) ** 2).sum(-1)
                ).min()
                if dmin < tol_sep:
                    raise CurvesTooClose(
                        f"curves approach to {dmin:.2e} < tol_sep={tol_sep:g}"
                    )
                raw += gauss_linking_sum(la, img)
    value = int(np.rint(raw))
    return LinkingNumber(value, raw - value)


# ---------------------------------------------------------------------------
# pairwise link matrix across spin targets

@dataclass
class LinkMatrix:
    """Pairwise linking numbers between the preimages of several targets.

    values[i][j] is None on the diagonal and wherever a preimage is empty
    (absent targets listed in ``absent``).  A preimage may consist of more
    than one loop (it does in the |h| < 1 phase); the matrix entry is then
    the total linking between the two loop families and ``loops`` keeps the
    per-target breakdown."""

    targets: list
    values: list
    absent: list = field(default_factory=list)
    loops: list = field(default_factory=list)

    @property
    def loop_counts(self):
        return [len(l) for l in self.loops]

    def to_dict(self):
        return {
            "targets": [list(t) for t in self.targets],
            "linking": self.values,
            "absent": self.absent,
            "loop_counts": self.loop_counts,
        }


def link_matrix(params, targets, res=64):
    """Extract the preimage of every target and link them pairwise.

    Entries are intrinsic torus linking numbers (see linking_number_t3),
    summed over loop pairs when a preimage has several components; empty
    preimages are marked absent rather than silently skipped."""
    targets = [tuple(_unit_target(t)) for t in targets]
    loops_t3 = [preimage_contours(params, t, res=res) for t in targets]
    absent = [i for i, loops in enumerate(loops_t3) if not loops]

    m = len(targets)
    values = [[None] * m for _ in range(m)]
    for i in range(m):
        for j in range(i + 1, m):
            if not loops_t3[i] or not loops_t3[j]:
                continue
            total = sum(
                linking_number_t3(a, b).value
                for a in loops_t3[i]
                for b in loops_t3[j]
            )
            values[i][j] = values[j][i] = total
    return LinkMatrix(targets=targets, values=values, absent=absent, loops=loops_t3)
