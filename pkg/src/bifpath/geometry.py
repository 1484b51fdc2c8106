"""Plane-geometry primitives shared by the chain and continua machinery.

Everything here is elementary and deterministic: open disks, segment
intersection predicates, polyline utilities (arclength parametrization,
corner rounding, normal offsets) and a seedless low-discrepancy sampler
used wherever "random" evaluation points are called for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# golden-ratio constants for the Kronecker lattice
_PHI1 = 0.6180339887498949
_PHI2x = 0.7548776662466927
_PHI2y = 0.5698402909980532


@dataclass(frozen=True)
class Disk:
    """Open disk; the link primitive of all chains."""

    cx: float
    cy: float
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"disk radius must be positive, got {self.r}")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy])

    def contains_point(self, x: float, y: float, closed: bool = True) -> bool:
        d2 = (x - self.cx) ** 2 + (y - self.cy) ** 2
        return d2 <= self.r**2 if closed else d2 < self.r**2


def disks_intersect(a: Disk, b: Disk) -> bool:
    """Open disks intersect iff the center distance is strictly below r_a + r_b."""
    return math.hypot(a.cx - b.cx, a.cy - b.cy) < a.r + b.r


def disk_contains_disk(outer: Disk, inner: Disk) -> bool:
    """Closure of ``inner`` inside the closed disk of ``outer``:
    distance(centers) + r_inner <= r_outer (tiny slack for rounding)."""
    d = math.hypot(outer.cx - inner.cx, outer.cy - inner.cy)
    return d + inner.r <= outer.r + 1e-12 * max(1.0, outer.r)


def sample_lattice(n: int, box: tuple[float, float, float, float]) -> np.ndarray:
    """n quasi-uniform points in [x0,x1]x[y0,y1] from the 2-d Kronecker
    (plastic-number) lattice.  Deterministic and seed-free."""
    x0, x1, y0, y1 = box
    i = np.arange(1, n + 1, dtype=float)
    u = (i * _PHI2x) % 1.0
    v = (i * _PHI2y) % 1.0
    pts = np.empty((n, 2))
    pts[:, 0] = x0 + u * (x1 - x0)
    pts[:, 1] = y0 + v * (y1 - y0)
    return pts


def sample_lattice_1d(n: int, lo: float, hi: float) -> np.ndarray:
    i = np.arange(1, n + 1, dtype=float)
    return lo + ((i * _PHI1) % 1.0) * (hi - lo)


def rotate(points: np.ndarray, angle: float) -> np.ndarray:
    """Rotate points (N,2) about the origin, counter-clockwise."""
    c, s = math.cos(angle), math.sin(angle)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty_like(pts)
    out[:, 0] = c * pts[:, 0] - s * pts[:, 1]
    out[:, 1] = s * pts[:, 0] + c * pts[:, 1]
    return out


# ---------------------------------------------------------------------------
# segment predicates (used by the polyline non-self-intersection checks)
# ---------------------------------------------------------------------------

def _orient(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _on_segment(p, q, r) -> bool:
    # r collinear with pq assumed; is r within the bounding box of pq?
    return (
        min(p[0], q[0]) - 1e-15 <= r[0] <= max(p[0], q[0]) + 1e-15
        and min(p[1], q[1]) - 1e-15 <= r[1] <= max(p[1], q[1]) + 1e-15
    )


def segments_intersect(p1, p2, q1, q2) -> bool:
    """Do closed segments [p1,p2] and [q1,q2] share any point?"""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True
    if d1 == 0 and _on_segment(q1, q2, p1):
        return True
    if d2 == 0 and _on_segment(q1, q2, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, q1):
        return True
    if d4 == 0 and _on_segment(p1, p2, q2):
        return True
    return False


def segments_share_only_endpoint(p1, p2, q1, q2, joint) -> bool:
    """True when the two segments intersect exactly in the single point
    ``joint`` (the shared endpoint of consecutive polyline segments)."""
    if not segments_intersect(p1, p2, q1, q2):
        return False
    # a proper crossing or collinear overlap both contradict single-point contact
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return False
    if d1 == 0 and d2 == 0:  # collinear: overlap must reduce to the joint
        pts = sorted([tuple(p1), tuple(p2), tuple(q1), tuple(q2)])
        # overlap is a single point iff the middle two sorted points coincide
        if pts[1] != pts[2]:
            return False
    # remaining touch point must be the joint
    for a, b, c in ((q1, q2, p1), (q1, q2, p2), (p1, p2, q1), (p1, p2, q2)):
        if _orient(a, b, c) == 0 and _on_segment(a, b, c):
            if not np.allclose(c, joint, atol=1e-12):
                return False
    return True


# ---------------------------------------------------------------------------
# polyline utilities
# ---------------------------------------------------------------------------

class ArcPath:
    """Arclength-parametrized polyline with smooth normal offsets.

    The offset normal's angle is interpolated continuously along the
    arclength (vertex angles average the adjacent segments), so offset
    images of smooth curves stay smooth instead of inheriting a notch of
    size offset*angle at every polyline vertex.  Evaluation beyond both
    ends extends the end segments linearly, which the chain refiner uses
    to reach the tube tips.
    """

    def __init__(self, points: np.ndarray):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or len(pts) < 2:
            raise ValueError("ArcPath needs at least two points")
        seg = np.diff(pts, axis=0)
        lens = np.hypot(seg[:, 0], seg[:, 1])
        keep = lens > 1e-14
        if not keep.all():
            pts = np.concatenate([pts[:1], pts[1:][keep]])
            seg = np.diff(pts, axis=0)
            lens = np.hypot(seg[:, 0], seg[:, 1])
        if len(pts) < 2:
            raise ValueError("degenerate polyline")
        self.points = pts
        self._tangents = seg / lens[:, None]
        self._cum = np.concatenate([[0.0], np.cumsum(lens)])
        self.length = float(self._cum[-1])
        seg_ang = np.unwrap(np.arctan2(seg[:, 1], seg[:, 0]))
        vert_ang = np.empty(len(pts))
        vert_ang[0] = seg_ang[0]
        vert_ang[-1] = seg_ang[-1]
        if len(pts) > 2:
            vert_ang[1:-1] = 0.5 * (seg_ang[:-1] + seg_ang[1:])
        self._vert_ang = vert_ang

    def _segment_index(self, u: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self._cum, u, side="right") - 1
        return np.clip(idx, 0, len(self._tangents) - 1)

    def at(self, u, v=0.0) -> np.ndarray:
        """Point at arclength u, offset v along the (smoothed) left normal."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        v = np.broadcast_to(np.asarray(v, dtype=float), u.shape)
        uc = np.clip(u, 0.0, self.length)
        idx = self._segment_index(uc)
        t = self._tangents[idx]
        base = self.points[idx] + (uc - self._cum[idx])[:, None] * t
        seg_len = self._cum[idx + 1] - self._cum[idx]
        frac = (uc - self._cum[idx]) / np.where(seg_len > 0, seg_len, 1.0)
        ang = self._vert_ang[idx] * (1.0 - frac) + self._vert_ang[idx + 1] * frac
        normal = np.stack([-np.sin(ang), np.cos(ang)], axis=1)
        return base + v[:, None] * normal

    def tangent_at(self, u) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return self._tangents[self._segment_index(np.clip(u, 0.0, self.length))]


def round_corners(points: np.ndarray, radius: float, max_turn: float = 0.12) -> np.ndarray:
    """Replace polyline corners by sampled circular arcs of the given radius.

    The setback at each vertex is clipped to 45% of the adjacent segment
    lengths, so sharp corners on short segments are only partially rounded.
    Arc sampling keeps per-step turning below ``max_turn`` radians.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3 or radius <= 0:
        return pts.copy()
    out = [pts[0]]
    for i in range(1, len(pts) - 1):
        p_prev, p, p_next = out[-1], pts[i], pts[i + 1]
        v_in = p - p_prev
        v_out = p_next - p
        l_in = np.hypot(*v_in)
        l_out = np.hypot(*v_out)
        if l_in < 1e-14 or l_out < 1e-14:
            continue
        t_in = v_in / l_in
        t_out = v_out / l_out
        cosang = float(np.clip(np.dot(t_in, t_out), -1.0, 1.0))
        theta = math.acos(cosang)
        if theta < 0.05:
            out.append(p)
            continue
        setback = min(radius * math.tan(theta / 2.0), 0.45 * l_in, 0.45 * l_out)
        r_eff = setback / math.tan(theta / 2.0)
        a = p - setback * t_in
        b = p + setback * t_out
        # arc center lies along the inner bisector at distance r_eff from both tangents
        n_in = np.array([-t_in[1], t_in[0]])
        side = 1.0 if np.dot(n_in, t_out) > 0 else -1.0
        center = a + side * r_eff * n_in
        ang_a = math.atan2(a[1] - center[1], a[0] - center[0])
        ang_b = math.atan2(b[1] - center[1], b[0] - center[0])
        sweep = (ang_b - ang_a) % (2 * math.pi)
        if side < 0:
            sweep = sweep - 2 * math.pi
        n_samp = max(2, int(abs(sweep) / max_turn) + 1)
        angs = ang_a + sweep * np.arange(n_samp + 1) / n_samp
        arc = center[None, :] + r_eff * np.stack([np.cos(angs), np.sin(angs)], axis=1)
        out.extend(arc)
    out.append(pts[-1])
    arr = np.array(out)
    seg = np.diff(arr, axis=0)
    keep = np.hypot(seg[:, 0], seg[:, 1]) > 1e-14
    return np.concatenate([arr[:1], arr[1:][keep]])
