"""Membership oracles for the target solution continua.

All oracles answer point queries by *inverse* transform (pull the query
back through the pinch / shift / rotation and ask the stage chain),
which is exact at query points; forward images of disks under the pinch
are not disks, so rasterizing them would lose exactness.  Each oracle
also produces a dense forward point sample of its set, used for distance
queries (Whitney covers, Hausdorff comparisons, obstacle masks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .chains import Chain
from .geometry import rotate, sample_lattice_1d

PI = math.pi

INSIDE = "INSIDE"
OUTSIDE = "OUTSIDE"
BOUNDARY_BAND = "BOUNDARY_BAND"

_PINCH_TOL = 1e-12


def sin_pinch(point) -> tuple[float, float]:
    """(lam, x) -> (lam, x sin lam); the map squeezing the strip onto a
    lens pinched at multiples of pi."""
    lam, x = float(point[0]), float(point[1])
    return lam, x * math.sin(lam)


def sin_pinch_many(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    out = pts.copy()
    out[:, 1] = pts[:, 1] * np.sin(pts[:, 0])
    return out


# ---------------------------------------------------------------------------
# the tiled pinched continuum and its rotation
# ---------------------------------------------------------------------------

class PTildeOracle:
    """Union over tiles k in [-K, K] of the pinched stage-chain image
    shifted by (k pi, 0).

    Membership pulls the query back: (lam, x) is a member when for the
    tile containing lam the unpinched point (lam', x / sin lam') lies in
    the closed link union, or lam' hits a pinch point and x = 0.
    """

    tag = "P_TILDE"

    def __init__(self, chain: Chain, K: int = 3):
        if K < 1:
            raise ValueError("tile range K must be >= 1")
        c, r = chain.centers, chain.radii
        if (
            c[:, 0].min() - r.max() < -1e-9
            or c[:, 0].max() + r.max() > PI + 1e-9
            or np.abs(c[:, 1]).max() + r.max() > 0.25 + 1e-9
        ):
            raise ValueError("stage chain must lie in [0, pi] x [-1/4, 1/4]")
        self.chain = chain
        self.K = int(K)
        self._tree = cKDTree(chain.centers)
        self._uniform_r = float(chain.radii.max()) if np.allclose(
            chain.radii, chain.radii[0]
        ) else None

    # -- membership ---------------------------------------------------------

    def _chain_member_many(self, pts: np.ndarray) -> np.ndarray:
        d, idx = self._tree.query(pts)
        if self._uniform_r is not None:
            return d <= self._uniform_r + 1e-12
        ok = d <= self.chain.radii[idx] + 1e-12
        # nearest center is not always the covering link for mixed radii
        r_max = float(self.chain.radii.max())
        for k in np.nonzero(~ok & (d <= r_max))[0]:
            for j in self._tree.query_ball_point(pts[k], r_max + 1e-12):
                dd = math.hypot(
                    pts[k, 0] - self.chain.centers[j, 0],
                    pts[k, 1] - self.chain.centers[j, 1],
                )
                if dd <= self.chain.radii[j] + 1e-12:
                    ok[k] = True
                    break
        return ok

    def member_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lam, x = pts[:, 0], pts[:, 1]
        k = np.floor(lam / PI).astype(np.int64)
        lam_p = lam - k * PI
        out = np.zeros(len(pts), dtype=bool)
        in_range = np.abs(k) <= self.K
        s = np.sin(lam_p)
        pinch = np.abs(s) < _PINCH_TOL
        out[in_range & pinch & (np.abs(x) < _PINCH_TOL)] = True
        q = in_range & ~pinch
        if q.any():
            pulled = np.stack([lam_p[q], x[q] / s[q]], axis=1)
            inside_band = np.abs(pulled[:, 1]) <= 0.25 + 1e-9
            res = np.zeros(q.sum(), dtype=bool)
            if inside_band.any():
                res[inside_band] = self._chain_member_many(pulled[inside_band])
            out[q] = res
        return out

    def member(self, lam: float, x: float) -> bool:
        return bool(self.member_many(np.array([[lam, x]]))[0])

    # -- forward sampling ----------------------------------------------------

    def _chain_surface_points(self, target: float) -> np.ndarray:
        """Centers plus boundary rings when links are fat relative to target."""
        pts = [self.chain.centers]
        gaps = np.hypot(*np.diff(self.chain.centers, axis=0).T)
        res = max(float(gaps.max(initial=0.0)) / 2.0, 0.0)
        for cx, cy, r in zip(
            self.chain.centers[:, 0], self.chain.centers[:, 1], self.chain.radii
        ):
            if r > 0.5 * target:
                n_ring = max(8, int(math.ceil(2 * PI * r / min(target, r / 2.0))))
                ang = 2 * PI * np.arange(n_ring) / n_ring
                ring = np.stack([cx + r * np.cos(ang), cy + r * np.sin(ang)], axis=1)
                # interior fill rings keep the sample Hausdorff-close to the disk
                n_fill = int(math.ceil(r / target))
                for m in range(1, n_fill):
                    rr = r * m / n_fill
                    fill = np.stack(
                        [cx + rr * np.cos(ang), cy + rr * np.sin(ang)], axis=1
                    )
                    pts.append(fill)
                pts.append(ring)
                res = max(res, min(target, r / 2.0))
            else:
                res = max(res, r)
        self._source_resolution = res
        return np.concatenate(pts)

    def samples(self, window, target_spacing: float = 0.02) -> np.ndarray:
        """Forward point sample of the tiled set clipped to the window."""
        xmin, xmax, ymin, ymax = window
        base = self._chain_surface_points(target_spacing)
        fwd = sin_pinch_many(base)
        out = []
        for k in range(-self.K, self.K + 1):
            tile = fwd + np.array([k * PI, 0.0])
            keep = (
                (tile[:, 0] >= xmin - 0.5)
                & (tile[:, 0] <= xmax + 0.5)
                & (tile[:, 1] >= ymin - 0.5)
                & (tile[:, 1] <= ymax + 0.5)
            )
            out.append(tile[keep])
            pinch_pt = np.array([[k * PI, 0.0]])
            if xmin - 0.5 <= k * PI <= xmax + 0.5:
                out.append(pinch_pt)
        if xmin - 0.5 <= (self.K + 1) * PI <= xmax + 0.5:
            out.append(np.array([[(self.K + 1) * PI, 0.0]]))
        pts = np.concatenate(out)
        # pinch map has bounded stretch; carry the worst-case sample spacing
        self.sample_resolution = 1.3 * getattr(self, "_source_resolution", target_spacing)
        return pts


@dataclass
class RotatedOracle:
    """The tiled set rotated counter-clockwise by a quarter turn about the
    origin; membership via inverse rotation of the query point."""

    base: PTildeOracle
    angle: float = PI / 4.0
    tag: str = "G_ROT"
    sample_resolution: float = field(default=0.0)

    def member_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.base.member_many(rotate(pts, -self.angle))

    def member(self, lam: float, x: float) -> bool:
        return bool(self.member_many(np.array([[lam, x]]))[0])

    def samples(self, window, target_spacing: float = 0.02) -> np.ndarray:
        xmin, xmax, ymin, ymax = window
        m = max(abs(xmin), abs(xmax), abs(ymin), abs(ymax)) * math.sqrt(2.0)
        base_pts = self.base.samples((-m, m, -m, m), target_spacing)
        pts = rotate(base_pts, self.angle)
        keep = (
            (pts[:, 0] >= xmin)
            & (pts[:, 0] <= xmax)
            & (pts[:, 1] >= ymin)
            & (pts[:, 1] <= ymax)
        )
        self.sample_resolution = self.base.sample_resolution
        return pts[keep]


def rotate_quarter(oracle: PTildeOracle) -> RotatedOracle:
    if oracle.tag != "P_TILDE":
        raise ValueError("rotate_quarter expects the tiled pinched oracle")
    return RotatedOracle(base=oracle)


def tile_range_for_window(window, rotated: bool) -> int:
    """Smallest K whose tiles cover all pullbacks of window points."""
    xmin, xmax, ymin, ymax = window
    if rotated:
        m = math.hypot(max(abs(xmin), abs(xmax)), max(abs(ymin), abs(ymax)))
    else:
        m = max(abs(xmin), abs(xmax))
    return int(math.ceil(m / PI)) + 1


# ---------------------------------------------------------------------------
# Example B's three-piece set
# ---------------------------------------------------------------------------

class ExampleBOracle:
    """L U C+ U C-: the open vertical segment {0} x (-1/2, 1/2) together
    with the halves of the tiled set shifted to start at (0, +-1/2)."""

    tag = "B_SET"

    def __init__(self, chain: Chain, K: int = 4):
        self.p_tilde = PTildeOracle(chain, K=K)
        self.K = K
        self.sample_resolution = 0.0

    def classify_many(self, points: np.ndarray) -> np.ndarray:
        """0 none, 1 L, 2 C+, 3 C-.  The pieces are mutually exclusive."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lam, x = pts[:, 0], pts[:, 1]
        out = np.zeros(len(pts), dtype=np.int64)
        in_L = (lam == 0.0) & (np.abs(x) < 0.5)
        out[in_L] = 1
        up = np.stack([lam, x - 0.5], axis=1)
        c_plus = (lam >= 0.0) & self.p_tilde.member_many(up)
        out[c_plus & (out == 0)] = 2
        dn = np.stack([lam, x + 0.5], axis=1)
        c_minus = (lam <= 0.0) & self.p_tilde.member_many(dn)
        out[c_minus & (out == 0)] = 3
        return out

    def member_many(self, points: np.ndarray) -> np.ndarray:
        return self.classify_many(points) > 0

    def member(self, lam: float, x: float) -> bool:
        return bool(self.member_many(np.array([[lam, x]]))[0])

    def piece_samples(self, window, target_spacing: float = 0.02):
        """Dense forward samples per piece: dict with keys 'L', 'C+', 'C-'."""
        xmin, xmax, ymin, ymax = window
        base = self.p_tilde.samples((xmin, xmax, ymin - 1.0, ymax + 1.0), target_spacing)
        res = self.p_tilde.sample_resolution
        up = base[base[:, 0] >= 0.0] + np.array([0.0, 0.5])
        dn = base[base[:, 0] <= 0.0] + np.array([0.0, -0.5])
        n_L = max(64, int(math.ceil(1.0 / min(target_spacing, 0.01))))
        xs = np.linspace(-0.5, 0.5, n_L + 2)[1:-1]
        L = np.stack([np.zeros_like(xs), xs], axis=1)
        self.sample_resolution = res

        def clip(p):
            keep = (
                (p[:, 0] >= xmin) & (p[:, 0] <= xmax)
                & (p[:, 1] >= ymin) & (p[:, 1] <= ymax)
            )
            return p[keep]

        return {"L": clip(L), "C+": clip(up), "C-": clip(dn)}

    def samples(self, window, target_spacing: float = 0.02) -> np.ndarray:
        pieces = self.piece_samples(window, target_spacing)
        return np.concatenate([pieces["L"], pieces["C+"], pieces["C-"]])


# ---------------------------------------------------------------------------
# the periodic two-column arrangement for the gradient example
# ---------------------------------------------------------------------------

STADIUM = "STADIUM"
CHAIN_POLYGON = "CHAIN_POLYGON"


@dataclass(frozen=True)
class OmegaSpec:
    """One bounded open cell: a vertical stadium (capsule) or a thickened
    crooked-polyline polygon, half-height a, arranged with half-period p."""

    shape: str = STADIUM
    a: float = 1.0
    p: float = 1.5
    width: float = PI / 8.0
    polygon: tuple | None = None
    _checked: bool = True

    def __post_init__(self):
        if self.shape not in (STADIUM, CHAIN_POLYGON):
            raise ValueError(f"unknown cell shape {self.shape!r}")
        if self._checked:
            if not (0 < self.a < self.p < 2 * self.a):
                raise ValueError("arrangement needs a < p < 2a")
            if not (0 < self.width <= PI / 4.0):
                raise ValueError("cell must fit the quarter-pi width bound")

    @classmethod
    def unchecked(cls, **kw) -> "OmegaSpec":
        kw.setdefault("_checked", False)
        return cls(**kw)


def _capsule_signed_dist(ds: np.ndarray, dt: np.ndarray, a: float, w: float):
    """Signed distance to the vertical capsule of half-height a, radius w,
    centered at the origin (negative inside).  Exact."""
    h = a - w
    tt = np.clip(dt, -h, h)
    return np.hypot(ds, dt - tt) - w


def chain_polygon_vertices(a: float = 1.0, width: float = PI / 8.0) -> tuple:
    """A simple polygon thickening a small crooked-chain walk, spanning
    tau in [-a, a].  Used by the CHAIN_POLYGON cell option; its boundary
    topology is deliberately not certified."""
    from .chains import initial_row_chain, refine_chain

    # reuse the refiner on a short horizontal row, then rotate to vertical
    row = initial_row_chain(5, half_height=0.24)
    fine = refine_chain(row, shrink=0.45, max_blocks=3)
    spine = fine.centers[:: max(1, len(fine.links) // 60)]
    if not np.array_equal(spine[-1], fine.centers[-1]):
        spine = np.vstack([spine, fine.centers[-1]])
    # map [0, pi] x strip onto height 2a, stand it upright, squeeze width
    t = spine.copy()
    t[:, 0] = (t[:, 0] / PI) * 2 * a - a
    t[:, 1] = t[:, 1] / 0.24 * 0.5 * width
    spine_v = np.stack([t[:, 1], t[:, 0]], axis=1)
    wp = 0.18 * width
    left, right = _offset_both(spine_v, wp)
    tip0 = spine_v[0] - np.array([0.0, max(a - abs(spine_v[0, 1]), wp)])
    tip1 = spine_v[-1] + np.array([0.0, max(a - abs(spine_v[-1, 1]), wp)])
    poly = np.vstack([tip0, right, tip1, left[::-1]])
    return tuple(map(tuple, poly))


def _offset_both(spine: np.ndarray, w: float):
    seg = np.diff(spine, axis=0)
    t = seg / np.hypot(seg[:, 0], seg[:, 1])[:, None]
    n = np.stack([-t[:, 1], t[:, 0]], axis=1)
    n_v = np.vstack([n[:1], n[:-1] + n[1:], n[-1:]])
    norm = np.hypot(n_v[:, 0], n_v[:, 1])[:, None]
    n_v = n_v / np.where(norm < 1e-12, 1.0, norm)
    # miter scale, clamped so sharp corners do not spike
    scale = np.ones(len(spine))
    dots = np.einsum("ij,ij->i", n_v[1:-1], n[:-1])
    scale[1:-1] = 1.0 / np.clip(dots, 0.5, 1.0)
    off = n_v * (w * scale)[:, None]
    return spine + off, spine - off


def _point_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    xs, ys = poly[:, 0], poly[:, 1]
    n = len(poly)
    j = n - 1
    for i in range(n):
        cond = (ys[i] > y) != (ys[j] > y)
        denom = ys[j] - ys[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = xs[i] + (y - ys[i]) * (xs[j] - xs[i]) / np.where(denom == 0, 1, denom)
        inside ^= cond & (x < xint)
        j = i
    return inside


def _dist_to_polygon_edges(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    closed = np.vstack([poly, poly[:1]])
    a = closed[:-1]
    seg = np.diff(closed, axis=0)
    len2 = np.maximum((seg**2).sum(axis=1), 1e-30)
    d = np.full(len(pts), np.inf)
    for k in range(len(a)):
        ap = pts - a[k]
        t = np.clip((ap @ seg[k]) / len2[k], 0.0, 1.0)
        proj = a[k] + t[:, None] * seg[k]
        d = np.minimum(d, np.hypot(*(pts - proj).T))
    return d


class OmegaHatArrangement:
    """Two parallel columns of copies of the cell, 2p-periodic in tau,
    centered on sigma = -pi/2 (levels 2pk) and sigma = +pi/2 (levels
    (2k+1)p); the right column is the left translated by (pi, p)."""

    tag = "OMEGA_HAT_BOUNDARY"

    def __init__(self, spec: OmegaSpec):
        self.spec = spec
        if spec.shape == CHAIN_POLYGON:
            verts = spec.polygon or chain_polygon_vertices(spec.a, spec.width)
            self._poly = np.asarray(verts, dtype=float)
            if np.abs(self._poly[:, 0]).max() > PI / 4 + 1e-9:
                raise ValueError("polygon exceeds the quarter-pi width bound")
        else:
            self._poly = None

    # signed distance to the union of copies, negative inside
    def signed_dist(self, sigma, tau) -> np.ndarray:
        s = np.atleast_1d(np.asarray(sigma, dtype=float))
        t = np.atleast_1d(np.asarray(tau, dtype=float))
        p = self.spec.p
        twop = 2.0 * p
        vals = []
        for s_off, t_off in ((-PI / 2.0, 0.0), (PI / 2.0, p)):
            ds = s - s_off
            dt = ((t - t_off + p) % twop) - p
            vals.append(self._cell_signed_dist(ds, dt))
        return np.minimum(vals[0], vals[1])

    def _cell_signed_dist(self, ds, dt):
        if self.spec.shape == STADIUM:
            return _capsule_signed_dist(ds, dt, self.spec.a, self.spec.width)
        pts = np.stack([ds, dt], axis=-1).reshape(-1, 2)
        inside = _point_in_polygon(pts, self._poly)
        d = _dist_to_polygon_edges(pts, self._poly)
        return np.where(inside, -d, d).reshape(np.shape(ds))

    def classify_many(self, sigma, tau, band: float = 1e-9) -> np.ndarray:
        sd = self.signed_dist(sigma, tau)
        out = np.where(sd < -band, 0, np.where(sd > band, 1, 2))
        return out  # 0 INSIDE, 1 OUTSIDE, 2 BOUNDARY_BAND

    def classify(self, sigma: float, tau: float, band: float = 1e-9) -> str:
        code = int(self.classify_many(np.array([sigma]), np.array([tau]), band)[0])
        return (INSIDE, OUTSIDE, BOUNDARY_BAND)[code]

    def boundary_dist(self, sigma, tau) -> np.ndarray:
        return np.abs(self.signed_dist(sigma, tau))

    def slice_measure(self, tau: float, quad_n: int = 256) -> float:
        """Midpoint-rule measure of {sigma in [-pi, pi] : inside} at height tau."""
        if quad_n < 64:
            raise ValueError("quad_n must be at least 64")
        ds = 2 * PI / quad_n
        s = -PI + (np.arange(quad_n) + 0.5) * ds
        inside = self.signed_dist(s, np.full(quad_n, float(tau))) < 0
        return float(inside.sum() * ds)

    def boundary_samples(self, n_per_copy: int = 100, levels=((0, 0), (1, 0))) -> np.ndarray:
        """Exact boundary points of selected copies, in strip coordinates.

        ``levels`` lists (column, k) pairs: column 0 is the left column at
        tau = 2pk, column 1 the right at tau = (2k+1)p.
        """
        base = self._cell_boundary(n_per_copy)
        out = []
        for col, k in levels:
            s_off = -PI / 2.0 if col == 0 else PI / 2.0
            t_off = 2 * self.spec.p * k + (self.spec.p if col == 1 else 0.0)
            out.append(base + np.array([s_off, t_off]))
        return np.concatenate(out)

    def _cell_boundary(self, n: int) -> np.ndarray:
        if self.spec.shape == STADIUM:
            a, w = self.spec.a, self.spec.width
            h = a - w
            # two straight sides + two semicircular caps, by arclength
            side = 2 * h
            cap = PI * w
            total = 2 * side + 2 * cap
            s_arc = sample_lattice_1d(n, 0.0, total)
            pts = np.empty((n, 2))
            for i, u in enumerate(s_arc):
                if u < side:
                    pts[i] = (w, -h + u)
                elif u < side + cap:
                    ang = (u - side) / w
                    pts[i] = (w * math.cos(ang), h + w * math.sin(ang))
                elif u < 2 * side + cap:
                    pts[i] = (-w, h - (u - side - cap))
                else:
                    ang = (u - 2 * side - cap) / w
                    pts[i] = (-w * math.cos(ang), -h - w * math.sin(ang))
            return pts
        closed = np.vstack([self._poly, self._poly[:1]])
        seg = np.diff(closed, axis=0)
        lens = np.hypot(seg[:, 0], seg[:, 1])
        cum = np.concatenate([[0.0], np.cumsum(lens)])
        u = sample_lattice_1d(n, 0.0, cum[-1])
        idx = np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(lens) - 1)
        frac = (u - cum[idx]) / np.where(lens[idx] > 0, lens[idx], 1.0)
        return closed[idx] + frac[:, None] * seg[idx]


def omega_hat_classify(q, spec: OmegaSpec, band: float = 1e-9) -> str:
    """Classify a strip point against the periodic arrangement."""
    sigma, tau = float(q[0]), float(q[1])
    if not (-PI - 1e-9 <= sigma <= PI + 1e-9):
        raise ValueError("sigma must lie in [-pi, pi]")
    return OmegaHatArrangement(spec).classify(sigma, tau, band=band)


def slice_measure(tau: float, spec: OmegaSpec, quad_n: int = 256) -> float:
    return OmegaHatArrangement(spec).slice_measure(tau, quad_n)
