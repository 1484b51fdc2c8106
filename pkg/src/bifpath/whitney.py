"""Constructive smooth functions vanishing exactly on a prescribed closed set.

The complement of the target set is covered by open balls found on a
dyadic quadtree; the function is the weighted sum of radial bumps

    h(q) = sum_j u(|q - a_j| / r_j) / (gamma_j 2^j)

with u a smooth step that is 1 on [0, 1/2] and 0 on [1, infinity), and
gamma_j normalizing the first few derivative sup-norms so the term series
and its derivative series are dominated by 2^-j.  h is zero exactly on
the target (structurally: no ball meets it) and positive wherever some
ball reaches.

Floating point caveat, relied on by the verification layer: the 2^-j
weights span the whole double-precision exponent range, so h underflows
to exact zero in a thin shell around the target and the flat composition
exp(-1/h) underflows much sooner.  The log-squared flat profile
`log_flat` stays representable for every representable positive h and is
what the gradient-structure pipeline composes with.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

_EDGE_GUARD = 1e-9          # plateau guard for the step's derivative formulas
_SUBDIV_FACTOR = 0.45       # leaf edge threshold as a fraction of r_min
_RADIUS_FRACTION = 0.9      # emitted ball radius = 0.9 * distance-to-target
_RADIUS_CAP = 0.99          # paper-style radii stay below one
_DERIV_CAP = 4              # gamma caps derivative orders at four


class DegenerateWindow(Exception):
    """Cover window has no area."""


class UnlabeledCell(Exception):
    """Query point falls in the unresolved shell of the component labeling."""


# ---------------------------------------------------------------------------
# the smooth step u and flat profiles
# ---------------------------------------------------------------------------

class SmoothStep:
    """u(t) = 1 on [0,1/2], 0 on [1,inf), exp-rational blend between.

    Closed-form derivative evaluators up to order four are generated
    symbolically once per process; `sup_norms` caches C_k = sup |u^(k)|.
    """

    def __init__(self):
        self._funcs = None
        self._sups = None

    def _build(self):
        if self._funcs is not None:
            return
        import sympy as sp

        t = sp.symbols("t")
        A = sp.exp(-1 / (2 - 2 * t))
        B = sp.exp(-1 / (2 * t - 1))
        u = A / (A + B)
        exprs = [u]
        for k in range(1, _DERIV_CAP + 1):
            exprs.append(sp.diff(exprs[-1], t))
        self._funcs = [sp.lambdify(t, e, modules="numpy") for e in exprs]

    def __call__(self, t, order: int = 0):
        if order == 0:
            return self.value(t)
        return self.deriv(t, order)

    def value(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        out[t <= 0.5 + _EDGE_GUARD] = 1.0
        mid = (t > 0.5 + _EDGE_GUARD) & (t < 1.0 - _EDGE_GUARD)
        if mid.any():
            self._build()
            with np.errstate(all="ignore"):
                v = self._funcs[0](t[mid])
            out[mid] = np.nan_to_num(v, nan=0.0, posinf=0.0, neginf=0.0)
        return out

    def deriv(self, t, order: int) -> np.ndarray:
        if not 1 <= order <= _DERIV_CAP:
            raise ValueError(f"derivative order {order} unsupported")
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        mid = (t > 0.5 + _EDGE_GUARD) & (t < 1.0 - _EDGE_GUARD)
        if mid.any():
            self._build()
            with np.errstate(all="ignore"):
                v = self._funcs[order](t[mid])
            out[mid] = np.nan_to_num(v, nan=0.0, posinf=0.0, neginf=0.0)
        return out

    def sup_norms(self) -> np.ndarray:
        """C_k = sup |u^(k)| for k = 1..4, with a 5% safety margin."""
        if self._sups is None:
            tt = np.linspace(0.5 + 1e-6, 1.0 - 1e-6, 50001)
            self._sups = np.array(
                [1.05 * float(np.abs(self.deriv(tt, k)).max()) for k in range(1, _DERIV_CAP + 1)]
            )
        return self._sups


smooth_step = SmoothStep()


def flatten(t) -> np.ndarray:
    """exp(-1/t) for t > 0, 0 at 0: smooth, flat at zero, strictly increasing."""
    t = np.asarray(t, dtype=float)
    if (t < 0).any():
        raise ValueError("flatten takes nonnegative input")
    out = np.zeros_like(t)
    pos = t > 0
    with np.errstate(over="ignore"):
        out[pos] = np.exp(-1.0 / t[pos])
    return out


def log_flat(t, scale: float = 2000.0) -> np.ndarray:
    """exp(-(ln t)^2 / scale): flat at 0, strictly increasing on (0, 1],
    and representable for every representable positive input (the exponent
    grows only like log^2), unlike exp(-1/t)."""
    t = np.asarray(t, dtype=float)
    if (t < 0).any():
        raise ValueError("log_flat takes nonnegative input")
    out = np.zeros_like(t)
    pos = t > 0
    lt = np.log(t[pos])
    out[pos] = np.exp(-lt * lt / scale)
    return out


# ---------------------------------------------------------------------------
# covers
# ---------------------------------------------------------------------------

@dataclass
class WhitneyCover:
    """Finite ball system covering the window off the target set.

    Balls are listed in quadtree breadth-first emission order; ball j
    (1-based) carries weight 1 / (gamma_j 2^j).
    """

    centers: np.ndarray
    radii: np.ndarray
    gammas: np.ndarray
    r_min: float
    window: tuple[float, float, float, float]
    resolution_guard: float = 0.0
    tree: cKDTree | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.tree is None and len(self.centers):
            self.tree = cKDTree(self.centers)

    def __len__(self) -> int:
        return len(self.centers)

    @property
    def weights(self) -> np.ndarray:
        """1/(gamma_j 2^j); underflows to zero beyond j ~ 1074 by design."""
        j = np.arange(1, len(self.centers) + 1)
        return np.ldexp(1.0 / self.gammas, -j)

    def to_json(self) -> str:
        balls = [
            {"ax": float(a), "ay": float(b), "r": float(r), "gamma": float(g)}
            for (a, b), r, g in zip(self.centers, self.radii, self.gammas)
        ]
        return json.dumps({"balls": balls, "r_min": self.r_min}, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str, window=(0.0, 1.0, 0.0, 1.0)) -> "WhitneyCover":
        obj = json.loads(text)
        balls = obj["balls"]
        centers = np.array([[b["ax"], b["ay"]] for b in balls]) if balls else np.zeros((0, 2))
        radii = np.array([b["r"] for b in balls])
        gammas = np.array([b["gamma"] for b in balls])
        return cls(centers=centers, radii=radii, gammas=gammas, r_min=obj["r_min"], window=window)


def build_cover(
    dist_to_target,
    window,
    r_min: float,
    resolution_guard: float = 0.0,
) -> WhitneyCover:
    """Greedy dyadic cover of the window off the target set.

    ``dist_to_target`` maps an (N,2) array to distances.  When the target
    is known only through a point sample, pass its sampling resolution as
    ``resolution_guard``: distances are reduced by the guard so that the
    emitted balls stay disjoint from the true set, not just the sample.

    A cell of half-diagonal hd whose center is at (guarded) distance
    d >= 2 hd emits the ball (center, min(0.9 d, 0.99)) and stops, provided
    the capped radius still covers the cell; cells stop unconditionally
    once their edge drops below 0.45 r_min, which keeps every window point
    farther than r_min from the target inside some ball.
    """
    xmin, xmax, ymin, ymax = window
    if not (xmax > xmin and ymax > ymin):
        raise DegenerateWindow("window must have positive area")
    if r_min <= 0:
        raise ValueError("r_min must be positive")

    side = max(xmax - xmin, ymax - ymin)
    centers_out: list[np.ndarray] = []
    radii_out: list[np.ndarray] = []

    cells = np.array([[xmin + side / 2.0, ymin + side / 2.0]])
    half = side / 2.0
    min_edge = _SUBDIV_FACTOR * r_min
    while len(cells):
        hd = half * math.sqrt(2.0)
        d = np.maximum(np.asarray(dist_to_target(cells), dtype=float) - resolution_guard, 0.0)
        ball_r = np.minimum(_RADIUS_FRACTION * d, _RADIUS_CAP)
        emit = (d >= 2.0 * hd) & (ball_r >= hd)
        if 2.0 * half < min_edge:
            # leaf level: small balls still help positivity near the shell
            leaf_emit = (~emit) & (d >= 2.0 * hd)
            if leaf_emit.any():
                centers_out.append(cells[leaf_emit])
                radii_out.append(ball_r[leaf_emit])
            if emit.any():
                centers_out.append(cells[emit])
                radii_out.append(ball_r[emit])
            break
        if emit.any():
            centers_out.append(cells[emit])
            radii_out.append(ball_r[emit])
        rest = cells[~emit]
        if not len(rest):
            break
        q = half / 2.0
        offsets = np.array([[-q, -q], [q, -q], [-q, q], [q, q]])
        children = (rest[:, None, :] + offsets[None, :, :]).reshape(-1, 2)
        keep = (
            (children[:, 0] + q >= xmin)
            & (children[:, 0] - q <= xmax)
            & (children[:, 1] + q >= ymin)
            & (children[:, 1] - q <= ymax)
        )
        cells = children[keep]
        half = q

    if centers_out:
        centers = np.concatenate(centers_out)
        radii = np.concatenate(radii_out)
    else:
        centers = np.zeros((0, 2))
        radii = np.zeros(0)

    pos = radii > 0
    centers, radii = centers[pos], radii[pos]
    gammas = _gammas_for(radii)
    return WhitneyCover(
        centers=centers,
        radii=radii,
        gammas=gammas,
        r_min=r_min,
        window=tuple(window),
        resolution_guard=resolution_guard,
    )


def _gammas_for(radii: np.ndarray) -> np.ndarray:
    """gamma_j = max(1, max_{k <= min(j,4)} C_k / r_j^k)."""
    if not len(radii):
        return np.zeros(0)
    C = smooth_step.sup_norms()
    j = np.arange(1, len(radii) + 1)
    g = np.ones(len(radii))
    for k in range(1, _DERIV_CAP + 1):
        active = j >= k
        g[active] = np.maximum(g[active], C[k - 1] / radii[active] ** k)
    return g


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def h_eval(cover: WhitneyCover, points, order: int = 0, max_balls: int | None = None):
    """Weighted bump sum at the given points.

    order 0 returns values (N,); order 1 additionally the gradient (N,2);
    order 2 additionally the second partials (N,3) as (xx, xy, yy).
    ``max_balls`` truncates the series to its first m terms (used by the
    uniform-convergence checks).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    val = np.zeros(n)
    grad = np.zeros((n, 2)) if order >= 1 else None
    hess = np.zeros((n, 3)) if order >= 2 else None
    if not len(cover.centers):
        return _pack(val, grad, hess, order)

    m = len(cover.centers) if max_balls is None else min(max_balls, len(cover.centers))
    r_query = float(cover.radii[:m].max())
    idx_lists = cover.tree.query_ball_point(pts, r_query)
    for i, cand in enumerate(idx_lists):
        cand = np.asarray([c for c in cand if c < m], dtype=np.int64)
        if not cand.size:
            continue
        dx = pts[i, 0] - cover.centers[cand, 0]
        dy = pts[i, 1] - cover.centers[cand, 1]
        dist = np.hypot(dx, dy)
        r = cover.radii[cand]
        inside = dist < r
        if not inside.any():
            continue
        cand, dx, dy, dist, r = (a[inside] for a in (cand, dx, dy, dist, r))
        w = np.ldexp(1.0 / cover.gammas[cand], -(cand + 1))
        t = dist / r
        val[i] = float(np.sum(w * smooth_step.value(t)))
        if order >= 1:
            du = smooth_step.deriv(t, 1)
            safe = np.where(dist > 0, dist, 1.0)
            gx = w * du * dx / (r * safe)
            gy = w * du * dy / (r * safe)
            grad[i, 0] = float(gx.sum())
            grad[i, 1] = float(gy.sum())
        if order >= 2:
            du = smooth_step.deriv(t, 1)
            d2u = smooth_step.deriv(t, 2)
            safe = np.where(dist > 0, dist, 1.0)
            # radial composition second partials
            a_xx = d2u * (dx / safe) ** 2 / r**2 + du * (dy**2) / (r * safe**3)
            a_yy = d2u * (dy / safe) ** 2 / r**2 + du * (dx**2) / (r * safe**3)
            a_xy = d2u * dx * dy / (safe**2 * r**2) - du * dx * dy / (r * safe**3)
            hess[i, 0] = float((w * a_xx).sum())
            hess[i, 1] = float((w * a_xy).sum())
            hess[i, 2] = float((w * a_yy).sum())
    return _pack(val, grad, hess, order)


def _pack(val, grad, hess, order):
    if order == 0:
        return val
    if order == 1:
        return val, grad
    return val, grad, hess


def eval_h_grid(cover: WhitneyCover, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """h on a tensor grid, accumulated ball by ball (fast path for big grids)."""
    nx, ny = len(xs), len(ys)
    H = np.zeros((nx, ny))
    if not len(cover.centers):
        return H
    dx_step = xs[1] - xs[0] if nx > 1 else 1.0
    dy_step = ys[1] - ys[0] if ny > 1 else 1.0
    weights = cover.weights
    for j in range(len(cover.centers)):
        w = weights[j]
        if w == 0.0:
            continue
        ax, ay = cover.centers[j]
        r = cover.radii[j]
        i0 = max(0, int(math.floor((ax - r - xs[0]) / dx_step)))
        i1 = min(nx, int(math.ceil((ax + r - xs[0]) / dx_step)) + 1)
        j0 = max(0, int(math.floor((ay - r - ys[0]) / dy_step)))
        j1 = min(ny, int(math.ceil((ay + r - ys[0]) / dy_step)) + 1)
        if i0 >= i1 or j0 >= j1:
            continue
        gx = xs[i0:i1, None] - ax
        gy = ys[None, j0:j1] - ay
        t = np.hypot(gx, gy) / r
        close = t < 1.0
        if close.any():
            block = np.zeros_like(t)
            block[close] = smooth_step.value(t[close])
            H[i0:i1, j0:j1] += w * block
    return H


def signed_h(cover: WhitneyCover, labeling, minus_label: int, q) -> float:
    """-h on the selected complement component, +h elsewhere; the zero set
    is untouched.  Raises UnlabeledCell on the unresolved near-target shell."""
    lab = labeling.label_at(q[0], q[1])
    if lab == 0:
        raise UnlabeledCell(f"point {tuple(q)} lies in the unresolved shell")
    v = float(h_eval(cover, np.array([q]))[0])
    return -v if lab == minus_label else v
