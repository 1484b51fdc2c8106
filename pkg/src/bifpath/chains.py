"""Linear chains of open disks and crooked refinement.

A chain is an ordered list of open disks in which links intersect exactly
when adjacent.  Refining a chain lays a much thinner chain inside it whose
walk through the coarse links folds back on itself ("nearly there, nearly
back").  Iterating the refinement produces the finite stages used as the
desk-scale stand-in for a chainable hereditarily indecomposable continuum.

Crookedness bookkeeping is done at *block* resolution: the coarse chain is
amalgamated into at most ``max_blocks`` runs of consecutive links and the
folding condition is checked over block indices.  Full-span per-link
crookedness is unattainable beyond toy sizes -- the minimal folded walk
over a span-m chain has ~(1+sqrt(2))^m entries, so three nested full-span
refinements would need more links than float64 can index.  The block
certificate is the honest finite proxy and is what `crookedness_audit`
verifies.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from .geometry import ArcPath, Disk, disk_contains_disk, round_corners

DEFAULT_MAX_BLOCKS = 4

__all__ = [
    "Chain",
    "CrookedPattern",
    "NotConnectedAtScale",
    "ChainConditionViolated",
    "GeometryFailure",
    "ContainmentFailure",
    "crooked_pattern",
    "is_crooked_sequence",
    "epsilon_chain",
    "polyline_of_chain",
    "refine_chain",
    "crookedness_audit",
    "containment_index_map",
    "chain_union_mask",
    "initial_row_chain",
    "build_tower",
    "straight_inner_chain",
    "chain_to_json",
    "chain_from_json",
]


class NotConnectedAtScale(Exception):
    """The proximity graph does not join the requested endpoints at this eps."""


class ChainConditionViolated(Exception):
    """Input points fail the epsilon-chain iff-condition."""


class GeometryFailure(Exception):
    """Refinement could not place links satisfying all constraints."""


class ContainmentFailure(Exception):
    """A fine link is not contained in any coarse link."""


# ---------------------------------------------------------------------------
# Chain
# ---------------------------------------------------------------------------

class Chain:
    """Ordered nonempty list of open disks with the consecutive-intersection
    property: links i and j intersect iff |i-j| <= 1.  Validated on
    construction (KD-tree based; see `exhaustive_pair_check` for the O(n^2)
    audit used by the acceptance suite)."""

    def __init__(self, links: list[Disk], stage: int = 0, _validate: bool = True):
        if not links:
            raise ValueError("chain must have at least one link")
        if stage < 0:
            raise ValueError("stage must be nonnegative")
        self.walk_points: np.ndarray | None = None  # smooth walk, when built by refinement
        self.links = list(links)
        self.stage = int(stage)
        self._centers = np.array([[d.cx, d.cy] for d in self.links])
        self._radii = np.array([d.r for d in self.links])
        self._tree = cKDTree(self._centers) if len(self.links) > 1 else None
        if _validate:
            self.validate()

    def __len__(self) -> int:
        return len(self.links)

    @property
    def centers(self) -> np.ndarray:
        return self._centers

    @property
    def radii(self) -> np.ndarray:
        return self._radii

    def max_diameter(self) -> float:
        return float(2.0 * self._radii.max())

    def validate(self) -> None:
        """Raise ValueError unless links intersect exactly when adjacent."""
        n = len(self.links)
        if n == 1:
            return
        c, r = self._centers, self._radii
        gaps = np.hypot(*(c[1:] - c[:-1]).T)
        bad = np.nonzero(gaps >= r[1:] + r[:-1])[0]
        if bad.size:
            i = int(bad[0])
            raise ValueError(f"adjacent links {i},{i + 1} do not intersect")
        # any non-adjacent pair closer than the largest possible radius sum
        # is found by a KD pair query at that radius
        pairs = self._tree.query_pairs(2.0 * float(r.max()), output_type="ndarray")
        if pairs.size:
            i, j = pairs.T
            close = np.hypot(*(c[i] - c[j]).T) < r[i] + r[j]
            nonadj = (np.abs(i - j) >= 2) & close
            if nonadj.any():
                k = int(np.argmax(nonadj))
                raise ValueError(
                    f"non-adjacent links {int(i[k])},{int(j[k])} intersect"
                )

    def exhaustive_pair_check(self, chunk: int = 2048) -> bool:
        """Full O(n^2) confirmation of the chain axiom, chunked for memory."""
        n = len(self.links)
        c, r = self._centers, self._radii
        for lo in range(0, n, chunk):
            hi = min(lo + chunk, n)
            d = np.hypot(
                c[lo:hi, None, 0] - c[None, :, 0], c[lo:hi, None, 1] - c[None, :, 1]
            )
            inter = d < (r[lo:hi, None] + r[None, :])
            idx = np.abs(np.arange(lo, hi)[:, None] - np.arange(n)[None, :])
            if not np.array_equal(inter, idx <= 1):
                return False
        return True


def chain_to_json(chain: Chain) -> str:
    obj = {
        "stage": chain.stage,
        "links": [{"cx": d.cx, "cy": d.cy, "r": d.r} for d in chain.links],
    }
    return json.dumps(obj, separators=(",", ":"))


def chain_from_json(text: str) -> Chain:
    obj = json.loads(text)
    links = [Disk(e["cx"], e["cy"], e["r"]) for e in obj["links"]]
    return Chain(links, stage=obj["stage"])


# ---------------------------------------------------------------------------
# crooked patterns
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrookedPattern:
    """Index walk over a coarse chain: consecutive entries differ by one."""

    indices: tuple[int, ...]
    coarse_n: int

    def __post_init__(self):
        ind = self.indices
        if not ind:
            raise ValueError("empty pattern")
        if any(not (1 <= k <= self.coarse_n) for k in ind):
            raise ValueError("pattern index out of range")
        if any(abs(a - b) != 1 for a, b in zip(ind, ind[1:])):
            raise ValueError("consecutive pattern entries must differ by one")

    def __len__(self) -> int:
        return len(self.indices)


@lru_cache(maxsize=None)
def _pattern(a: int, b: int) -> tuple[int, ...]:
    d = 1 if b > a else -1
    if abs(b - a) <= 2:
        return tuple(range(a, b + d, d))
    left = _pattern(a, b - d)
    mid = _pattern(b - d, a + d)
    right = _pattern(a + d, b)
    # junction entries are shared; drop the duplicates
    return left + mid[1:] + right[1:]


def crooked_pattern(a: int, b: int) -> CrookedPattern:
    """There-and-almost-back walk from link a to link b.

    Base case |b-a| <= 2 is the straight run; otherwise the walk goes
    nearly to b, folds nearly back to a, then finishes, which yields the
    folding property checked by `is_crooked_sequence`.
    """
    if a == b:
        raise ValueError("pattern endpoints must differ")
    if a < 1 or b < 1:
        raise ValueError("pattern indices start at 1")
    return CrookedPattern(_pattern(a, b), max(a, b))


def is_crooked_sequence(seq, span: int = 3) -> bool:
    """Folding condition: for positions p<q with |seq[p]-seq[q]| >= span
    there are p<s<t<q with seq[s] within 1 of seq[q] and seq[t] within 1
    of seq[p].  Linear-time via next-occurrence tables (values are small
    block indices)."""
    w = np.asarray(seq, dtype=np.int64)
    n = len(w)
    if n == 0:
        raise ValueError("empty sequence")
    vals = np.unique(w)
    nxt_near = {}  # value -> array: first position > p with |w - value| <= 1
    nxt_exact = {}
    for v in vals:
        near = np.full(n + 1, n, dtype=np.int64)
        exact = np.full(n + 1, n, dtype=np.int64)
        for p in range(n - 1, -1, -1):
            near[p] = p if abs(w[p] - v) <= 1 else near[p + 1]
            exact[p] = p if w[p] == v else exact[p + 1]
        nxt_near[int(v)] = near
        nxt_exact[int(v)] = exact
    for p in range(n):
        for v in vals:
            v = int(v)
            if abs(v - w[p]) < span:
                continue
            q0 = nxt_exact[v][p + 1]
            if q0 >= n:
                continue
            s = nxt_near[v][p + 1]
            if s >= q0:
                return False
            t = nxt_near[int(w[p])][s + 1]
            if t >= q0:
                return False
    return True


def is_crooked_sequence_brute(seq, span: int = 3) -> bool:
    """Quadratic reference implementation of the folding condition."""
    w = list(seq)
    n = len(w)
    for p in range(n):
        for q in range(p + 1, n):
            if abs(w[p] - w[q]) < span:
                continue
            ok = False
            for s in range(p + 1, q):
                if abs(w[s] - w[q]) <= 1:
                    for t in range(s + 1, q):
                        if abs(w[t] - w[p]) <= 1:
                            ok = True
                            break
                if ok:
                    break
            if not ok:
                return False
    return True


# ---------------------------------------------------------------------------
# epsilon chains and polylines (finite chain cover of a connected sample)
# ---------------------------------------------------------------------------

def epsilon_chain(samples, x, y, eps: float) -> np.ndarray:
    """Shortest path in the proximity graph on ``samples`` with edges
    ||p-q|| < 2 eps, from x to y.

    A shortest path is induced, which gives the two-sided condition
    ||x_i - x_j|| < 2 eps iff |i-j| <= 1 for free.  Ties break toward the
    lowest sample index.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    pts = np.asarray(samples, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def locate(p):
        hits = np.nonzero((pts[:, 0] == p[0]) & (pts[:, 1] == p[1]))[0]
        if not hits.size:
            raise ValueError("endpoint is not one of the samples")
        return int(hits[0])

    si, ti = locate(x), locate(y)
    if si == ti:
        return pts[[si]]

    tree = cKDTree(pts)
    n = len(pts)
    # BFS with sorted adjacency: deterministic lowest-index parents
    parent = np.full(n, -1, dtype=np.int64)
    parent[si] = si
    frontier = [si]
    found = False
    while frontier and not found:
        nxt = []
        for u in frontier:
            nbrs = sorted(tree.query_ball_point(pts[u], 2.0 * eps))
            for v in nbrs:
                if v == u or parent[v] >= 0:
                    continue
                d = math.hypot(*(pts[v] - pts[u]))
                if d >= 2.0 * eps:
                    continue  # query ball is closed; edge needs strict <
                parent[v] = u
                if v == ti:
                    found = True
                nxt.append(v)
        frontier = nxt
    if parent[ti] < 0:
        raise NotConnectedAtScale(
            f"no proximity path at eps={eps}; sample set too sparse at this scale"
        )
    path = [ti]
    while path[-1] != si:
        path.append(int(parent[path[-1]]))
    return pts[path[::-1]]


def check_epsilon_chain(points, eps: float) -> bool:
    """Exhaustive pair check of the iff condition on an ordered point list."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    d = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1])
    idx = np.abs(np.arange(n)[:, None] - np.arange(n)[None, :])
    return bool(np.array_equal(d < 2.0 * eps, idx <= 1))


def polyline_of_chain(points, eps: float) -> list[tuple[np.ndarray, np.ndarray]]:
    """Segments joining consecutive chain points.

    Under the epsilon-chain condition the resulting piecewise-linear curve
    is non-self-intersecting: consecutive segments share exactly their
    joint and distant segments are disjoint.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return []
    if not check_epsilon_chain(pts, eps):
        raise ChainConditionViolated("points do not satisfy the eps-chain condition")
    return [(pts[i].copy(), pts[i + 1].copy()) for i in range(len(pts) - 1)]


# ---------------------------------------------------------------------------
# block amalgamation and containment maps
# ---------------------------------------------------------------------------

def _block_partition(n: int, max_blocks: int) -> np.ndarray:
    """block index in [1..b] for each of n links; contiguous, near-equal runs."""
    b = min(n, max_blocks)
    sizes = [n // b + (1 if i < n % b else 0) for i in range(b)]
    out = np.empty(n, dtype=np.int64)
    pos = 0
    for i, s in enumerate(sizes):
        out[pos : pos + s] = i + 1
        pos += s
    return out


def containment_index_map(fine: Chain, coarse: Chain) -> np.ndarray:
    """Lowest coarse index (1-based) containing each fine link's closure."""
    cc, cr = coarse.centers, coarse.radii
    fc, fr = fine.centers, fine.radii
    r_max = float(cr.max())
    tree = cKDTree(cc)
    slack = 1e-12 * max(1.0, r_max)
    # a fine link in a lens is contained in both adjacent links; the map
    # takes the lowest index, so inspect the few nearest coarse centers
    k = min(len(coarse.links), 4)
    d_k, idx_k = tree.query(fc, k=k)
    d_k = d_k.reshape(len(fc), k)
    idx_k = idx_k.reshape(len(fc), k)
    contained = d_k + fr[:, None] <= cr[idx_k] + slack
    masked = np.where(contained, idx_k, len(coarse.links) + 1)
    best = masked.min(axis=1)
    bad = best > len(coarse.links)
    if bad.any():
        # fall back to a full-radius scan before declaring failure
        for i in np.nonzero(bad)[0]:
            found = -1
            for j in sorted(tree.query_ball_point(fc[i], r_max + slack)):
                d = math.hypot(fc[i, 0] - cc[j, 0], fc[i, 1] - cc[j, 1])
                if d + fr[i] <= cr[j] + slack:
                    found = j
                    break
            if found < 0:
                raise ContainmentFailure(
                    f"fine link {int(i)} not contained in any coarse link"
                )
            best[i] = found
    return best.astype(np.int64) + 1


def crookedness_audit(fine: Chain, coarse: Chain, max_blocks: int = DEFAULT_MAX_BLOCKS) -> bool:
    """Is ``fine`` crooked in ``coarse`` at block resolution?

    Maps every fine link to its containing coarse link (lowest index), then
    amalgamates the coarse indices into at most ``max_blocks`` contiguous
    blocks and checks the folding condition on the block sequence.  With
    ``max_blocks >= len(coarse)`` this is the raw per-link condition.
    Raises ContainmentFailure when the refinement precondition fails.
    """
    idx = containment_index_map(fine, coarse)
    blocks = _block_partition(len(coarse.links), max_blocks)
    seq = blocks[idx - 1]
    return is_crooked_sequence(seq, span=3)


# ---------------------------------------------------------------------------
# refinement
# ---------------------------------------------------------------------------

_MAX_VERTEX_TURN = 0.02  # radians; walks feed the next stage's offset map


def _cos_ramp(p0, p1, step: float) -> np.ndarray:
    """Smooth lane change: v follows a half-cosine in u (zero end slopes)."""
    u0, v0 = p0
    u1, v1 = p1
    n = max(96, int(math.ceil(abs(u1 - u0) / step)))
    t = np.arange(n + 1) / n
    u = u0 + (u1 - u0) * t
    v = v0 + (v1 - v0) * (1.0 - np.cos(math.pi * t)) / 2.0
    return np.stack([u, v], axis=1)


def _u_turn(u_apex: float, v_from: float, v_to: float, direction: float,
            step: float) -> np.ndarray:
    """Semicircle joining two lanes at the same anchor, bulging onward."""
    R = abs(v_to - v_from) / 2.0
    cu, cv = u_apex, (v_from + v_to) / 2.0
    n = max(int(math.ceil(math.pi / _MAX_VERTEX_TURN)),
            int(math.ceil(math.pi * R / step)))
    sgn = 1.0 if v_to < v_from else -1.0
    ang = sgn * (math.pi / 2.0 - math.pi * np.arange(n + 1) / n)
    return np.stack(
        [cu + direction * R * np.cos(ang), cv + R * np.sin(ang)], axis=1
    )


def _template_path(
    anchors_u: np.ndarray,
    pattern: tuple[int, ...],
    v_top: float,
    dv: float,
    u_tip0: float,
    u_tip1: float,
    step: float,
) -> np.ndarray:
    """Smooth walk realizing the pattern inside the tube strip.

    Every pattern entry k owns the lane v_k = v_top - k*dv (strictly
    decreasing, so passes never cross); direction reversals turn on
    semicircles of radius dv/2 -- the intrinsic curvature bound for a
    walk that comes back one lane over -- and pass-throughs descend on
    stretched cosine jogs.  The tips taper to the tube axis so the first
    and last links stay tangent to the tube ends.
    """
    L = len(pattern)
    v = [v_top - k * dv for k in range(L)]
    a = [float(anchors_u[p - 1]) for p in pattern]
    gaps = np.abs(np.diff(anchors_u)) if len(anchors_u) > 1 else np.array([abs(u_tip1 - u_tip0)])
    W = min(2.0 * dv, 0.25 * float(gaps.min()))
    pieces = [_cos_ramp((u_tip0, 0.0), (a[0], v[0]), step)]
    direction = 1.0
    for k in range(L - 1):
        d_next = 1.0 if a[k + 1] >= a[k] else -1.0
        last_u = pieces[-1][-1, 0]
        if k + 2 <= L - 1:
            d_after = 1.0 if a[k + 2] >= a[k + 1] else -1.0
        else:
            d_after = 1.0  # tail ramp exits rightward
        if d_after != d_next:
            # run on lane k+... to the apex, then U-turn onto the next lane
            run_end = a[k + 1]
            pieces.append(np.array([[last_u, v[k]], [run_end, v[k]]]))
            pieces.append(_u_turn(run_end, v[k], v[k + 1], d_next, step))
        else:
            # pass through the anchor while descending on an S-jog
            jog0 = a[k + 1] - d_next * W
            pieces.append(np.array([[last_u, v[k]], [jog0, v[k]]]))
            pieces.append(_cos_ramp((jog0, v[k]), (a[k + 1] + d_next * W, v[k + 1]), step))
        direction = d_next
    last_u = pieces[-1][-1, 0]
    pieces.append(np.array([[last_u, v[L - 1]], [max(u_tip1 - 4 * W, last_u), v[L - 1]]]))
    pieces.append(_cos_ramp((pieces[-1][-1, 0], v[L - 1]), (u_tip1, 0.0), step))
    pts = np.concatenate(pieces)
    seg = np.diff(pts, axis=0)
    keep = np.hypot(seg[:, 0], seg[:, 1]) > 1e-15
    return np.concatenate([pts[:1], pts[1:][keep]])


def _bead_path(path_pts: np.ndarray, spacing: float, max_beads: int = 4_000_000) -> np.ndarray:
    """Evenly spaced points along a polyline, endpoints included."""
    seg = np.diff(path_pts, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    total = cum[-1]
    n = max(1, int(math.ceil(total / spacing)))
    if n > max_beads:
        raise GeometryFailure(f"bead spacing {spacing:.3g} would need {n} links")
    s = np.linspace(0.0, total, n + 1)
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(lens) - 1)
    safe = np.where(lens[idx] > 0, lens[idx], 1.0)
    frac = (s - cum[idx]) / safe
    return path_pts[idx] + frac[:, None] * seg[idx]


def _densify(path_pts: np.ndarray, step: float) -> np.ndarray:
    """Insert points so no segment exceeds ``step`` (traces curved images)."""
    out = [path_pts[:1]]
    for a, b in zip(path_pts[:-1], path_pts[1:]):
        d = math.hypot(b[0] - a[0], b[1] - a[1])
        k = max(1, int(math.ceil(d / step)))
        t = np.arange(1, k + 1)[:, None] / k
        out.append(a[None, :] * (1 - t) + b[None, :] * t)
    return np.concatenate(out)


def _min_turn_radius(path: ArcPath) -> float:
    """Smallest curvature radius of a polyline, estimated per vertex."""
    seg = np.diff(path.points, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    if len(lens) < 2:
        return math.inf
    ang = np.arctan2(seg[:, 1], seg[:, 0])
    dang = np.abs(np.diff(np.unwrap(ang)))
    turning = dang > 1e-9
    if not turning.any():
        return math.inf
    rad = 0.5 * (lens[:-1] + lens[1:])[turning] / dang[turning]
    return float(rad.min())


def _feasible_radius(beads: np.ndarray, coarse: Chain, r_cap: float, r_scale: float):
    """Largest usable fine radius for the bead cloud, with diagnostics.

    Constraints: consecutive beads must overlap (r > max adjacent gap / 2),
    non-adjacent beads must not (r <= min skip gap / 2), every bead disk
    must fit in a coarse link (r <= containment slack).  Non-adjacent gaps
    are only searched out to ~the candidate scale, which caps the radius
    at r_query/2 but keeps the pair query near-linear."""
    gaps = np.hypot(*np.diff(beads, axis=0).T)
    d_adj = float(gaps.max()) if gaps.size else 0.0
    r_query = min(2.0 * r_cap, 3.0 * r_scale)
    tree = cKDTree(beads)
    pairs = tree.query_pairs(r_query, output_type="ndarray")
    d_skip = r_query
    if pairs.size:
        i, j = pairs.T
        mask = np.abs(i - j) >= 2
        if mask.any():
            d_skip = float(np.hypot(*(beads[i[mask]] - beads[j[mask]]).T).min())
    ctree = cKDTree(coarse.centers)
    k = min(len(coarse.links), 4)
    d_k, idx_k = ctree.query(beads, k=k)
    d_k = d_k.reshape(len(beads), k)
    idx_k = idx_k.reshape(len(beads), k)
    slack = (coarse.radii[idx_k] - d_k).max(axis=1)
    s_min = float(slack.min())
    r = min(0.98 * d_skip / 2.0, s_min, r_cap)
    return r, d_adj, s_min


def refine_chain(
    coarse: Chain,
    shrink: float = 1.0 / 3.0,
    max_blocks: int = DEFAULT_MAX_BLOCKS,
    spine: ArcPath | None = None,
    max_links: int = 2_000_000,
) -> Chain:
    """Place a crooked chain of much smaller disks inside ``coarse``.

    The coarse chain is amalgamated into at most ``max_blocks`` blocks,
    the there-and-almost-back pattern is walked over block anchors along
    the coarse spine, with one lateral lane per pattern entry, and beads
    are laid along that walk.  The bead radius is computed a posteriori
    from the actual bead cloud so the result provably satisfies the chain
    axiom, containment (closure of each fine link inside a coarse link),
    and the block crookedness certificate.

    ``spine`` optionally supplies the smooth tube centerline (the tower
    builder threads each stage's walk through as the next spine); without
    it the centerline is rebuilt from coarse centers with rounded corners.
    """
    if not (0.0 < shrink <= 0.5):
        raise ValueError("shrink must lie in (0, 1/2]")
    n = len(coarse.links)
    r_min_c = float(coarse.radii.min())
    if n == 1:
        d = coarse.links[0]
        return Chain([Disk(d.cx, d.cy, shrink * d.r)], stage=coarse.stage + 1)

    from_walk = spine is None and coarse.walk_points is not None
    if spine is None:
        try:
            spine = _spine_from_chain(coarse)
        except ValueError as exc:
            raise GeometryFailure(f"degenerate coarse spine: {exc}") from exc

    blocks = _block_partition(n, max_blocks)
    b = int(blocks.max())
    if b == 1:
        pattern = (1,)
    else:
        pattern = crooked_pattern(1, b).indices
    L = len(pattern)

    # anchor of a block: spine arclength of its middle link's center
    link_u = _project_links(spine, coarse.centers, from_walk=from_walk)
    anchors_u = np.array(
        [link_u[blocks == k].mean() for k in range(1, b + 1)], dtype=float
    )

    # lateral room: the lens half-height bounds containment and the spine's
    # tightest turn bounds how wide a lane pack can ride through it (the
    # normal-offset map folds once offsets reach the curvature radius)
    gaps = np.hypot(*np.diff(coarse.centers, axis=0).T)
    rr = np.minimum(coarse.radii[:-1], coarse.radii[1:])
    lens_hh = np.sqrt(np.maximum(rr**2 - (gaps / 2.0) ** 2, 0.0))
    v_room = 0.75 * float(min(lens_hh.min(), r_min_c)) if lens_hh.size else 0.5 * r_min_c
    v_max = min(v_room, 0.30 * _min_turn_radius(spine))
    if v_max <= 0:
        raise GeometryFailure("coarse links barely overlap; no room for a lateral walk")
    dv = 2.0 * v_max / max(L - 1, 1)

    r_cap = shrink * r_min_c
    r_goal = min(0.33 * dv, r_cap)
    for _attempt in range(4):
        delta = 1.45 * r_goal
        r_first = coarse.radii[0]
        r_last = coarse.radii[-1]
        u0 = link_u[0] - (r_first - r_goal)
        u1 = link_u[-1] + (r_last - r_goal)
        template = _template_path(
            anchors_u, pattern, v_top=+v_max, dv=dv, u_tip0=u0, u_tip1=u1,
            step=max(delta / 2.0, 1e-12),
        )
        dense = _densify(template, max(delta / 2.0, 1e-12))
        if len(dense) > max_links * 4:
            raise GeometryFailure("template densification exploded")
        walk = _strip_to_plane(spine, dense)
        beads = _bead_path(walk, delta, max_beads=max_links)
        r_f, d_adj, s_min = _feasible_radius(beads, coarse, r_cap, r_goal)
        if r_f > d_adj / 2.0 * (1.0 + 1e-9) and r_f > 0 and s_min > 0:
            links = [Disk(p[0], p[1], r_f) for p in beads]
            fine = Chain(links, stage=coarse.stage + 1)
            containment_index_map(fine, coarse)  # raises if a bead escaped
            fine.walk_points = walk
            return fine
        # the lane geometry fixes the usable gap; rebead at the radius the
        # cloud actually supports
        nxt = 0.8 * min(r_goal, max(r_f, 1e-30))
        if not (0 < nxt < r_goal) or not math.isfinite(nxt):
            break
        r_goal = nxt
    raise GeometryFailure(
        "no feasible fine radius at this shrink; links too tight or overlap too thin"
    )


def _chaikin(points: np.ndarray, rounds: int = 2) -> np.ndarray:
    """Corner-cutting smoothing; halves turn angles per round, endpoints kept."""
    pts = np.asarray(points, dtype=float)
    for _ in range(rounds):
        if len(pts) < 3:
            return pts
        a, b = pts[:-1], pts[1:]
        mid = np.empty((2 * len(a), 2))
        mid[0::2] = 0.75 * a + 0.25 * b
        mid[1::2] = 0.25 * a + 0.75 * b
        pts = np.vstack([pts[:1], mid, pts[-1:]])
    return pts


def _spine_from_chain(coarse: Chain) -> ArcPath:
    """Smooth tube centerline for a chain that arrived without one.

    Bead centers of a previous refinement sample its walk too sparsely to
    round directly, so the polyline is corner-cut first; rounding then
    reaches the curvature the next lateral walk needs.
    """
    if coarse.walk_points is not None:
        return ArcPath(coarse.walk_points)
    r_min_c = float(coarse.radii.min())
    pts = coarse.centers
    if len(pts) > 4:
        pts = _chaikin(pts, rounds=2)
    return ArcPath(round_corners(pts, 1.2 * r_min_c))


def _project_links(spine: ArcPath, centers: np.ndarray, from_walk: bool = False) -> np.ndarray:
    """Arclength coordinate of each coarse center along the spine.

    The spine generally folds back on itself, so projection must respect
    the link order: each center is matched against a window of spine
    vertices advancing monotonically (global nearest-vertex queries would
    jump between passes).  Links beaded at uniform arclength short-cut to
    the exact formula.
    """
    n = len(centers)
    if from_walk or n == 1:
        return np.linspace(0.0, spine.length, n)
    verts = spine.points
    cum = spine._cum
    n_px = max(1, math.ceil(4 * len(verts) / n) + 32)
    u = np.empty(n)
    ptr = 0
    for i in range(n):
        hi = min(len(verts), ptr + n_px)
        d = np.hypot(verts[ptr:hi, 0] - centers[i, 0], verts[ptr:hi, 1] - centers[i, 1])
        k = ptr + int(np.argmin(d))
        u[i] = cum[min(k, len(cum) - 1)]
        ptr = k
    return np.maximum.accumulate(u)


def _strip_to_plane(spine: ArcPath, strip_pts: np.ndarray) -> np.ndarray:
    u = strip_pts[:, 0]
    v = strip_pts[:, 1]
    inside = np.clip(u, 0.0, spine.length)
    base = spine.at(inside, v)
    # linear extension beyond the tube ends for the tip beads
    under = u < 0.0
    over = u > spine.length
    if under.any():
        t0 = spine.tangent_at(np.zeros(under.sum()))
        base[under] += u[under, None] * t0
    if over.any():
        t1 = spine.tangent_at(np.full(over.sum(), spine.length))
        base[over] += (u[over] - spine.length)[:, None] * t1
    return base


# ---------------------------------------------------------------------------
# towers and masks
# ---------------------------------------------------------------------------

def initial_row_chain(n_links: int = 11, half_height: float = 0.24) -> Chain:
    """Horizontal row of equal disks spanning [0, pi] inside the strip
    |x| <= 1/4, tangent to the vertical edges at (0,0) and (pi,0)."""
    if n_links < 2:
        raise ValueError("row needs at least two links")
    if not (0 < half_height <= 0.25):
        raise ValueError("half_height must lie in (0, 1/4]")
    r = half_height
    xs = np.linspace(r, math.pi - r, n_links)
    spacing = xs[1] - xs[0]
    if not (r <= spacing < 2 * r):
        raise ValueError(
            f"{n_links} links of radius {r} cannot tile [0,pi] as a valid chain"
        )
    return Chain([Disk(float(x), 0.0, r) for x in xs], stage=0)


def build_tower(
    stages: int = 3,
    shrink: float = 1.0 / 3.0,
    n_links: int = 11,
    max_blocks: int = DEFAULT_MAX_BLOCKS,
) -> list[Chain]:
    """Stage-0 row plus ``stages`` successive crooked refinements.

    Each refinement threads its walk curve through to the next call as the
    spine, so lateral offsets at stage s+1 are measured against the smooth
    stage-s walk rather than a re-derived polyline.
    """
    chains = [initial_row_chain(n_links)]
    for _ in range(stages):
        coarse = chains[-1]
        fine = refine_chain(coarse, shrink=shrink, max_blocks=max_blocks)
        chains.append(fine)
    return chains


def straight_inner_chain(coarse: Chain, radius_scale: float = 0.2) -> Chain:
    """Deliberately non-crooked refinement: a straight run of small disks
    along the coarse spine.  Negative control for the audit."""
    spine = ArcPath(round_corners(coarse.centers, 1.2 * float(coarse.radii.min())))
    r = radius_scale * float(coarse.radii.min())
    n = max(2, int(math.ceil(spine.length / (1.4 * r))))
    u = np.linspace(0.0, spine.length, n + 1)
    beads = spine.at(u, 0.0)
    return Chain([Disk(p[0], p[1], r) for p in beads], stage=coarse.stage + 1)


def chain_union_mask(chain: Chain, window, spacing: float):
    """Boolean occupancy of the closed link union on a regular node grid.

    Node (i, j) sits at (xmin + i*spacing, ymin + j*spacing); it is set
    exactly when it lies in the closed union of the link closures.
    """
    from .masks import RegionMask

    if spacing <= 0:
        raise ValueError("spacing must be positive")
    xmin, xmax, ymin, ymax = window
    nx = int(math.floor((xmax - xmin) / spacing + 1e-9)) + 1
    ny = int(math.floor((ymax - ymin) / spacing + 1e-9)) + 1
    xs = xmin + spacing * np.arange(nx)
    ys = ymin + spacing * np.arange(ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    tree = cKDTree(chain.centers)
    r_max = float(chain.radii.max())
    d, idx = tree.query(pts)
    inside = d <= chain.radii[idx] + 1e-12
    # variable radii: a farther link with a larger radius may still cover
    if not np.all(chain.radii == chain.radii[0]):
        maybe = (~inside) & (d <= r_max)
        for k in np.nonzero(maybe)[0]:
            for j in tree.query_ball_point(pts[k], r_max + 1e-12):
                dd = math.hypot(pts[k, 0] - chain.centers[j, 0], pts[k, 1] - chain.centers[j, 1])
                if dd <= chain.radii[j] + 1e-12:
                    inside[k] = True
                    break
    grid = inside.reshape(nx, ny)
    return RegionMask(grid=grid, origin=(xmin, ymin), spacing=spacing)
