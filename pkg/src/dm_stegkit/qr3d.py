"""Bit matrices hidden as depth-jittered sphere clouds.

A true module (i, j) becomes a sphere on a square lattice spanned by a
deterministic basis perpendicular to a secret viewing direction, pushed a
random distance along that direction. Orthographic projection along the
secret direction collapses the jitter and restores the matrix; any other
view smears it. Recovery without the secret searches directions by how
well the projected centers fit a square lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProjection, TooFewSpheres
from .meshcore import TriMesh, parse_xyz, write_xyz

_U64 = (1 << 64) - 1


class SplitMix64:
    """Deterministic 64-bit generator (SplitMix64), identical on any host."""

    def __init__(self, seed: int):
        self.state = seed & _U64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _U64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
        return z ^ (z >> 31)

    def uniform(self, lo: float, hi: float) -> float:
        u = (self.next_u64() >> 11) * 2.0 ** -53
        return lo + (hi - lo) * u


def unit_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(3)
    n = float(np.linalg.norm(v))
    if n == 0:
        raise ValueError("zero direction vector")
    return v / n


@dataclass
class BitGrid:
    """Square boolean module matrix; row 0 is the top, column 0 the left."""

    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 2 or self.bits.shape[0] != self.bits.shape[1]:
            raise ValueError("bit grid must be square")
        if self.bits.shape[0] < 2:
            raise ValueError("bit grid needs at least 2 modules per side")
        if not self.bits.any():
            raise ValueError("bit grid needs at least one true module")

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, BitGrid) and np.array_equal(self.bits, other.bits)


def grid_to_pbm(grid: BitGrid) -> str:
    rows = [" ".join("1" if b else "0" for b in row) for row in grid.bits]
    return f"P1\n{grid.n} {grid.n}\n" + "\n".join(rows) + "\n"


def grid_from_pbm(text: str) -> BitGrid:
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens or tokens[0] != "P1":
        raise ValueError("expected plain PBM (P1)")
    if len(tokens) < 3:
        raise ValueError("PBM header truncated")
    w, h = int(tokens[1]), int(tokens[2])
    digits = "".join(tokens[3:])
    if len(digits) != w * h or set(digits) - {"0", "1"}:
        raise ValueError("PBM pixel data does not match declared size")
    bits = np.array([c == "1" for c in digits], dtype=bool).reshape(h, w)
    return BitGrid(bits)


@dataclass
class EmbedParams:
    """Sphere-cloud layout: module pitch, sphere radius, depth jitter."""

    pitch: float
    direction: np.ndarray
    radius: float | None = None             # default 0.35 * pitch
    depth_jitter: float | None = None       # default 5 * pitch
    seed: int = 0

    def __post_init__(self):
        if self.pitch <= 0:
            raise ValueError("pitch must be positive")
        if self.radius is None:
            self.radius = 0.35 * self.pitch
        if self.depth_jitter is None:
            self.depth_jitter = 5.0 * self.pitch
        if not 0 < self.radius < self.pitch / 2:
            raise ValueError("radius must satisfy 0 < r < pitch/2")
        if self.depth_jitter < 0:
            raise ValueError("depth jitter must be >= 0")
        self.direction = np.asarray(self.direction, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            raise ValueError("direction must be a unit vector (use unit_vector)")
        if not 0 <= int(self.seed) <= _U64:
            raise ValueError("seed must fit in 64 bits")


@dataclass
class SphereCloud:
    centers: np.ndarray                     # (n, 3) float64
    radius: float = 0.0

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.float64).reshape(-1, 3)
        if not len(self.centers):
            raise ValueError("sphere cloud is empty")


@dataclass
class DirectionSearchResult:
    direction: np.ndarray                   # unit, canonical hemisphere
    score: float
    estimated_pitch: float
    grid: BitGrid
    candidates_evaluated: int


# --- basis ---------------------------------------------------------------------

def _basis_many(dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Right-handed (u, w, v) frames for unit rows of ``dirs``.

    The reference axis is the standard axis least aligned with v (ties
    resolved x, then y, then z); u = normalize(a x v), w = v x u.
    """
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    a = np.eye(3)[np.argmin(np.abs(dirs), axis=1)]
    u = np.cross(a, dirs)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    w = np.cross(dirs, u)
    return u, w


def basis_for(v) -> tuple[np.ndarray, np.ndarray]:
    """In-plane orthonormal pair (u, w) for a unit viewing direction."""
    v = np.asarray(v, dtype=np.float64).reshape(3)
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    u, w = _basis_many(v[None, :])
    return u[0], w[0]


# --- embedding -------------------------------------------------------------------

def grid_to_spheres(grid: BitGrid, params: EmbedParams) -> SphereCloud:
    """Place one sphere per true module, depth-jittered along the direction.

    Jitter values come from SplitMix64(seed), uniform in [-D, D], consumed
    in row-major true-module order, so clouds are reproducible bit-for-bit.
    """
    u, w = basis_for(params.direction)
    n = grid.n
    half = (n - 1) / 2.0
    rng = SplitMix64(params.seed)
    rows, cols = np.nonzero(grid.bits)
    offsets = np.array([rng.uniform(-params.depth_jitter, params.depth_jitter)
                        for _ in range(len(rows))])
    centers = ((cols - half)[:, None] * params.pitch * u
               + (half - rows)[:, None] * params.pitch * w
               + offsets[:, None] * params.direction)
    return SphereCloud(centers, params.radius)


_ICO_T = (1.0 + math.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array([
    (-1, _ICO_T, 0), (1, _ICO_T, 0), (-1, -_ICO_T, 0), (1, -_ICO_T, 0),
    (0, -1, _ICO_T), (0, 1, _ICO_T), (0, -1, -_ICO_T), (0, 1, -_ICO_T),
    (_ICO_T, 0, -1), (_ICO_T, 0, 1), (-_ICO_T, 0, -1), (-_ICO_T, 0, 1),
], dtype=np.float64)
_ICO_FACES = np.array([
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
], dtype=np.int64)


def _unit_icosphere(subdivisions: int) -> tuple[np.ndarray, np.ndarray]:
    verts = _ICO_VERTS / np.linalg.norm(_ICO_VERTS, axis=1, keepdims=True)
    faces = _ICO_FACES
    verts = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            idx = cache.get(key)
            if idx is None:
                a, b = verts[i], verts[j]
                m = (a[0] + b[0], a[1] + b[1], a[2] + b[2])
                norm = math.sqrt(m[0] ** 2 + m[1] ** 2 + m[2] ** 2)
                verts.append((m[0] / norm, m[1] / norm, m[2] / norm))
                idx = len(verts) - 1
                cache[key] = idx
            return idx

        new_faces = []
        for i, j, k in faces:
            ij, jk, ki = midpoint(i, j), midpoint(j, k), midpoint(k, i)
            new_faces += [(i, ij, ki), (j, jk, ij), (k, ki, jk), (ij, jk, ki)]
        faces = np.array(new_faces, dtype=np.int64)
    return np.array(verts), faces


def spheres_to_mesh(cloud: SphereCloud, subdivisions: int = 2) -> TriMesh:
    """Tessellate every sphere as an icosphere; one watertight component each."""
    if not 0 <= subdivisions <= 4:
        raise ValueError("subdivisions must be in [0, 4]")
    if cloud.radius <= 0:
        raise ValueError("sphere cloud has no positive radius")
    uverts, ufaces = _unit_icosphere(subdivisions)
    nv = len(uverts)
    all_verts = (uverts[None, :, :] * cloud.radius
                 + cloud.centers[:, None, :]).reshape(-1, 3)
    all_faces = (ufaces[None, :, :]
                 + (np.arange(len(cloud.centers)) * nv)[:, None, None]).reshape(-1, 3)
    return TriMesh(all_verts, all_faces)


# --- recovery --------------------------------------------------------------------

def project_to_grid(cloud: SphereCloud | np.ndarray, v, pitch: float) -> BitGrid:
    """Snap centers projected along v onto a module grid of the given pitch.

    The tight bounding box of occupied cells defines the grid; a
    rectangular result is padded with empty modules to stay square.
    """
    centers = cloud.centers if isinstance(cloud, SphereCloud) else np.asarray(cloud)
    if pitch <= 0:
        raise ValueError("pitch must be positive")
    u, w = basis_for(unit_vector(v))
    cu = centers @ u
    cw = centers @ w
    cols = np.rint((cu - cu.min()) / pitch).astype(int)
    rows = np.rint((cw.max() - cw) / pitch).astype(int)
    n = max(rows.max(), cols.max()) + 1
    if n < 2:
        raise DegenerateProjection("projection collapses below a 2x2 grid")
    bits = np.zeros((n, n), dtype=bool)
    bits[rows, cols] = True
    return BitGrid(bits)


def _score_directions(points: np.ndarray, dirs: np.ndarray,
                      dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
    score, pitch, _, _, _ = _score_frames(points, dirs, dtype)
    return score, pitch


def _score_frames(points: np.ndarray, dirs: np.ndarray, dtype=np.float64):
    """Lattice residual score and fitted frame for each direction row.

    Projected centers are compared against the best-fitting square lattice:
    pitch from the median nearest-neighbor distance, in-plane rotation from
    the fourth-harmonic circular mean of nearest-neighbor headings, anchor
    at the projected point nearest the centroid. Scores are RMS distance to
    the nearest lattice site in pitch units (lower is better; inf marks a
    degenerate collapsed projection). Returns (score, pitch, phi,
    anchor_u, anchor_w); the anchors live in the phi-rotated frame.
    """
    u, w = _basis_many(dirs)
    pts = points.astype(dtype)
    cu = np.ascontiguousarray((pts @ u.T.astype(dtype)).T)   # (M, N)
    cw = np.ascontiguousarray((pts @ w.T.astype(dtype)).T)
    m, n = cu.shape

    # pairwise |p_i - p_j|^2 per direction via one batched matmul
    proj = np.stack([cu, cw], axis=2)                        # (M, N, 2)
    gram = proj @ proj.transpose(0, 2, 1)
    sq = (proj ** 2).sum(axis=2)
    d2 = gram
    d2 *= -2.0
    d2 += sq[:, :, None]
    d2 += sq[:, None, :]
    idx = np.arange(n)
    d2[:, idx, idx] = np.inf
    nn_idx = np.argmin(d2, axis=2)
    nn_d2 = np.take_along_axis(d2, nn_idx[:, :, None], axis=2)[:, :, 0]
    pitch = np.sqrt(np.maximum(np.median(nn_d2, axis=1), 0.0))

    dx = np.take_along_axis(cu, nn_idx, axis=1) - cu
    dy = np.take_along_axis(cw, nn_idx, axis=1) - cw
    ang4 = 4.0 * np.arctan2(dy, dx)
    # in-plane angle from pitch-length pairs only: axis-aligned neighbors
    # fold to 0 mod 90 exactly, while sqrt(2)/sqrt(5)-length pairs between
    # isolated modules would bias the circular mean
    nn_d = np.sqrt(np.maximum(nn_d2, 0.0))
    near = np.abs(nn_d - pitch[:, None]) <= 0.2 * pitch[:, None]
    count = near.sum(axis=1)
    cos_sum = np.where(near, np.cos(ang4), 0.0).sum(axis=1)
    sin_sum = np.where(near, np.sin(ang4), 0.0).sum(axis=1)
    fallback = count == 0
    if fallback.any():
        cos_sum = np.where(fallback, np.cos(ang4).sum(axis=1), cos_sum)
        sin_sum = np.where(fallback, np.sin(ang4).sum(axis=1), sin_sum)
    phi = np.arctan2(sin_sum, cos_sum) / 4.0
    c = np.cos(-phi)[:, None]
    s = np.sin(-phi)[:, None]
    ru = c * cu - s * cw
    rw = s * cu + c * cw

    centroid_u = ru.mean(axis=1, keepdims=True)
    centroid_w = rw.mean(axis=1, keepdims=True)
    anchor = np.argmin((ru - centroid_u) ** 2 + (rw - centroid_w) ** 2, axis=1)
    rows = np.arange(m)
    au = ru[rows, anchor][:, None]
    aw = rw[rows, anchor][:, None]

    scale = np.where(pitch > 0, pitch, 1.0)[:, None]
    fu = (ru - au) / scale
    fw = (rw - aw) / scale
    fu -= np.rint(fu)
    fw -= np.rint(fw)
    score = np.sqrt((fu ** 2 + fw ** 2).mean(axis=1))

    extent = max(np.ptp(pts, axis=0).max(), 1.0)
    score = np.where(pitch > 1e-9 * extent, score, np.inf)
    return (score.astype(np.float64), pitch.astype(np.float64),
            phi.astype(np.float64), au[:, 0].astype(np.float64),
            aw[:, 0].astype(np.float64))


def lattice_score(cloud: SphereCloud | np.ndarray, v) -> tuple[float, float]:
    """Score one direction: (lattice residual, estimated pitch)."""
    centers = cloud.centers if isinstance(cloud, SphereCloud) else np.asarray(cloud)
    if len(centers) < 2:
        raise ValueError("lattice_score needs at least 2 centers")
    score, pitch = _score_directions(centers, unit_vector(v)[None, :])
    return float(score[0]), float(pitch[0])


def _polish_direction(points: np.ndarray, v: np.ndarray,
                      iterations: int = 3) -> np.ndarray:
    """Newton-style alignment once a direction is inside the true basin.

    With the direction off by a small in-plane error e, each center's
    snapped lattice residual is -(e.u, e.w) times its depth along v (plus
    a constant), so regressing residuals against depth recovers e
    directly. This sidesteps the compass search's stall on the V-shaped
    score valley. Directions outside the basin (score >= 0.25, where
    snapping is ambiguous) are returned unchanged.
    """
    for _ in range(iterations):
        score, pitch, phi, au, aw = _score_frames(points, v[None, :])
        if not np.isfinite(score[0]) or score[0] >= 0.25:
            return v
        u, w = _basis_many(v[None, :])
        u, w = u[0], w[0]
        cu = points @ u
        cw = points @ w
        depth = points @ v
        if np.ptp(depth) < 1e-9 * max(np.ptp(points), 1.0):
            return v     # coplanar cloud: no depth leverage, nothing to fit
        c, s = math.cos(-phi[0]), math.sin(-phi[0])
        ru = c * cu - s * cw
        rw = s * cu + c * cw
        fu = (ru - au[0]) / pitch[0]
        fw = (rw - aw[0]) / pitch[0]
        res_u = (fu - np.rint(fu)) * pitch[0]
        res_w = (fw - np.rint(fw)) * pitch[0]
        design = np.column_stack([depth, np.ones_like(depth)])
        slope_u = np.linalg.lstsq(design, res_u, rcond=None)[0][0]
        slope_w = np.linalg.lstsq(design, res_w, rcond=None)[0][0]
        # slopes live in the phi-rotated frame; rotate back before applying
        cb, sb = math.cos(phi[0]), math.sin(phi[0])
        du = cb * slope_u - sb * slope_w
        dw = sb * slope_u + cb * slope_w
        v = unit_vector(v + du * u + dw * w)
    return v


def _canonical_direction(v: np.ndarray) -> np.ndarray:
    """Resolve the v/-v ambiguity: nonnegative z, then y, then x."""
    tol = 1e-12
    if v[2] < -tol:
        return -v
    if abs(v[2]) <= tol:
        if v[1] < -tol:
            return -v
        if abs(v[1]) <= tol and v[0] < 0:
            return -v
    return v


def _sph_dir(theta_deg: float, phi_deg: float) -> np.ndarray:
    t = math.radians(theta_deg)
    p = math.radians(phi_deg)
    return np.array([math.sin(t) * math.cos(p), math.sin(t) * math.sin(p), math.cos(t)])


_COARSE_SUBSAMPLE = 128


def search_direction(cloud: SphereCloud | np.ndarray,
                     coarse_step_deg: float = 2.0,
                     refine_to_deg: float = 0.05) -> DirectionSearchResult:
    """Find the viewing direction by hemisphere scan plus local refinement.

    A coarse polar grid is scored (clouds beyond 128 centers are scored on
    a seeded-shuffle subsample for speed), the 5 best candidates descend
    3x3 step-halving pattern grids until the step drops below
    ``refine_to_deg``, and the winner gets a regression polish before its
    projection is returned. Ties break on the canonicalized direction, so
    results do not depend on evaluation order. Pitch estimation relies on
    adjacent occupied modules, so matrices missing much more than half
    their modules may defeat it.
    """
    centers = cloud.centers if isinstance(cloud, SphereCloud) else np.asarray(cloud)
    centers = centers.reshape(-1, 3)
    if len(centers) < 4:
        raise TooFewSpheres(f"need at least 4 centers, got {len(centers)}")

    if len(centers) > _COARSE_SUBSAMPLE:
        # seeded shuffle, not a strided pick: regular subsets of a regular
        # lattice alias into false low-score directions
        order = list(range(len(centers)))
        rng = SplitMix64(0x5EEDED5C0FFEE)
        for i in range(len(order) - 1, 0, -1):
            j = rng.next_u64() % (i + 1)
            order[i], order[j] = order[j], order[i]
        coarse_pts = centers[np.sort(order[:_COARSE_SUBSAMPLE])]
    else:
        coarse_pts = centers

    angles = []
    thetas = np.arange(0.0, 90.0 + 1e-9, coarse_step_deg)
    phis = np.arange(0.0, 360.0, coarse_step_deg)
    for t in thetas:
        if t == 0.0:
            angles.append((0.0, 0.0))
            continue
        for p in phis:
            angles.append((float(t), float(p)))
    dirs = np.array([_sph_dir(t, p) for t, p in angles])
    evaluated = len(dirs)

    scores = np.empty(len(dirs))
    chunk = max(1, int(2e7 / max(len(coarse_pts) ** 2, 1)))
    for lo in range(0, len(dirs), chunk):
        hi = min(lo + chunk, len(dirs))
        scores[lo:hi], _ = _score_directions(coarse_pts, dirs[lo:hi], dtype=np.float32)

    def sort_key(i):
        return (scores[i], tuple(_canonical_direction(dirs[i])))

    top = sorted(range(len(dirs)), key=sort_key)[:5]

    best_dir = None
    best_key = None
    best_pitch = None
    for i in top:
        theta, phi = angles[i]
        step = coarse_step_deg / 2.0
        cur = (theta, phi)
        while True:
            # pattern search: walk the 3x3 ring at this step until the
            # center is the local argmin, then halve the step
            for _ in range(16):
                grid_angles = [(cur[0] + dt * step, cur[1] + dp * step)
                               for dt in (-1, 0, 1) for dp in (-1, 0, 1)]
                gdirs = np.array([_sph_dir(t, p) for t, p in grid_angles])
                gscores, gpitches = _score_directions(centers, gdirs)
                evaluated += len(gdirs)
                order = sorted(range(len(gdirs)),
                               key=lambda k: (gscores[k],
                                              tuple(_canonical_direction(gdirs[k]))))
                kbest = order[0]
                moved = grid_angles[kbest] != cur
                cur = grid_angles[kbest]
                cand_key = (gscores[kbest], tuple(_canonical_direction(gdirs[kbest])))
                if best_key is None or cand_key < best_key:
                    best_key = cand_key
                    best_dir = gdirs[kbest]
                    best_pitch = float(gpitches[kbest])
                if not moved:
                    break
            if step < refine_to_deg:
                break
            step /= 2.0

    polished = _polish_direction(centers, unit_vector(best_dir))
    pscore, ppitch = _score_directions(centers, polished[None, :])
    evaluated += 1
    pkey = (float(pscore[0]), tuple(_canonical_direction(polished)))
    if pkey < best_key:
        best_key = pkey
        best_dir = polished
        best_pitch = float(ppitch[0])

    direction = _canonical_direction(unit_vector(best_dir))
    grid = project_to_grid(centers, direction, best_pitch)
    return DirectionSearchResult(
        direction=direction,
        score=float(best_key[0]),
        estimated_pitch=best_pitch,
        grid=grid,
        candidates_evaluated=evaluated,
    )


def cloud_to_xyz(cloud: SphereCloud) -> str:
    return write_xyz(cloud.centers, comments=[f"radius={cloud.radius:.9g}"])


def cloud_from_xyz(text: str) -> SphereCloud:
    radius = 0.0
    for line in text.splitlines():
        s = line.strip()
        if s.startswith("#") and "radius=" in s:
            radius = float(s.split("radius=", 1)[1].split()[0])
            break
    return SphereCloud(parse_xyz(text).points, radius)
