"""Nonlinearities whose nontrivial solution sets are the target continua.

The scalar problems read lam*x = r(lam, x) with r(lam, x) = x*(lam - g)
and g built so that g vanishes exactly on the target set and nowhere
else: g = x^2 * (signed Whitney function) + cone cutoff.  The sign
discipline (negative on the complement component containing the negative
axis, cutoff nonnegative where the sign is positive) is what forces the
two summands to cancel only on the target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from .chains import Chain, build_tower
from .continua import (
    ExampleBOracle,
    PTildeOracle,
    RotatedOracle,
    rotate_quarter,
    tile_range_for_window,
)
from .masks import ComponentLabeling, mask_from_points
from .whitney import WhitneyCover, build_cover, eval_h_grid, h_eval

PI = math.pi


class ConeViolation(Exception):
    """A target sample escapes the strict double cone."""


class ComponentMergeFailure(Exception):
    """The two half-plane seeds landed in one component: the obstacle mask
    does not separate at this resolution."""


@dataclass(frozen=True)
class ConeParams:
    """Double cone C = {0 < alpha lam < x < beta lam or mirrored} U {0}."""

    alpha: float = math.tan(PI / 6.0)
    beta: float = math.tan(PI / 3.0)

    def __post_init__(self):
        if not (0 < self.alpha < self.beta):
            raise ValueError("cone needs 0 < alpha < beta")

    def contains_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lam, x = pts[:, 0], pts[:, 1]
        up = (0 < self.alpha * lam) & (self.alpha * lam < x) & (x < self.beta * lam)
        dn = (0 > self.alpha * lam) & (self.alpha * lam > x) & (x > self.beta * lam)
        origin = (lam == 0) & (x == 0)
        return up | dn | origin


# ---------------------------------------------------------------------------
# the cone cutoff omega(lam, x) = lam * bump(x / lam)
# ---------------------------------------------------------------------------

def _bump(t: np.ndarray, s: float, order: int = 0) -> np.ndarray:
    """Even compactly supported bump exp(1 - s^2/(s^2 - t^2)) on |t| < s.

    order 0/1/2 returns value / first / second derivative in t; the
    exponent arithmetic keeps tiny-denominator products from overflowing.
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = np.abs(t) < s * (1.0 - 1e-14)
    if not m.any():
        return out
    tm = t[m]
    D = s * s - tm * tm
    lnw = 1.0 - s * s / D
    if order == 0:
        out[m] = np.exp(lnw)
    elif order == 1:
        out[m] = -2.0 * s * s * tm * np.exp(lnw - 2.0 * np.log(D))
    elif order == 2:
        out[m] = 4.0 * s**4 * tm**2 * np.exp(lnw - 4.0 * np.log(D)) - 2.0 * s * s * (
            s * s + 3.0 * tm**2
        ) * np.exp(lnw - 3.0 * np.log(D))
    else:
        raise ValueError("bump derivatives available up to order 2")
    return out


def omega_eval(cone: ConeParams, lam, x, order: int = 0):
    """Cutoff field and first partials.

    omega(lam, x) = lam * bump(x/lam) for lam != 0 and 0 on the x-axis:
    equal to lam on the trivial line, vanishing off |x| < alpha |lam|/2,
    same sign as lam, smooth except at the origin where d/dlam jumps to 1.
    order 0 -> value; order 1 -> (value, d/dlam, d/dx).
    """
    s = cone.alpha / 2.0
    lam = np.asarray(lam, dtype=float)
    x = np.asarray(x, dtype=float)
    lam, x = np.broadcast_arrays(lam, x)
    val = np.zeros_like(lam, dtype=float)
    nz = lam != 0.0
    supp = nz & (np.abs(x) < s * np.abs(lam))
    t = np.zeros_like(lam)
    t[supp] = x[supp] / lam[supp]
    w = _bump(t[supp], s, 0)
    val[supp] = lam[supp] * w
    if order == 0:
        return val
    d_lam = np.zeros_like(val)
    d_x = np.zeros_like(val)
    w1 = _bump(t[supp], s, 1)
    d_x[supp] = w1
    d_lam[supp] = w - t[supp] * w1
    origin = (lam == 0.0) & (x == 0.0)
    d_lam[origin] = 1.0
    return val, d_lam, d_x


def omega_mixed_partial(cone: ConeParams, lam, x):
    """d^2/(dx dlam) of x*omega(lam, x): bump-combination for lam != 0 and
    identically 0 on lam = 0.  Discontinuous at the origin (limit 1 along
    the trivial line, 0 along the x-axis)."""
    s = cone.alpha / 2.0
    lam = np.asarray(lam, dtype=float)
    x = np.asarray(x, dtype=float)
    lam, x = np.broadcast_arrays(lam, x)
    out = np.zeros_like(lam, dtype=float)
    nz = lam != 0.0
    supp = nz & (np.abs(x) < s * np.abs(lam))
    t = x[supp] / lam[supp]
    out[supp] = _bump(t, s, 0) - t * _bump(t, s, 1) - t * t * _bump(t, s, 2)
    # lam != 0 outside the bump support: x*omega = 0 there, mixed partial 0
    out[nz & ~supp] = 0.0
    return out


def x_axis_bump(x, order: int = 0, half_width: float = 0.25):
    """Even bump in x alone: 1 at 0, decreasing, 0 for |x| >= half_width."""
    return _bump(np.asarray(x, dtype=float), half_width, order)


# ---------------------------------------------------------------------------
# problem instances
# ---------------------------------------------------------------------------

class ProblemInstance:
    """Shared surface consumed by the verification layer.

    Scalar instances expose the signed field g (zero set = target) plus
    the residual lam*x - r = x*g; vector instances override
    `residual_components`.
    """

    tag: str = "?"
    window: tuple = ()
    params: dict = {}
    extraction = "sign"  # default zero-set extraction mode

    def manifest(self) -> dict:
        return {"tag": self.tag, "window": list(self.window), "params": self.params}


@lru_cache(maxsize=4)
def _cached_tower(stages: int, n_links: int, max_blocks: int) -> tuple[Chain, ...]:
    return tuple(build_tower(stages=stages, n_links=n_links, max_blocks=max_blocks))


def _separating_labels(samples, window, spacing, seed_plus, seed_minus):
    mask = mask_from_points(samples, window, spacing)
    labeling = ComponentLabeling(mask)
    lp = labeling.label_of_seed(seed_plus)
    lm = labeling.label_of_seed(seed_minus)
    if lp == lm:
        raise ComponentMergeFailure(
            f"seeds {seed_plus} and {seed_minus} share component {lp} at spacing {spacing}"
        )
    return labeling, lp, lm


class ExampleA(ProblemInstance):
    """Rotated pinched-tiling target: g = x^2 * sgn_h + omega.

    The target is the stage chain's tiled pinch image rotated a quarter
    turn; it sits strictly inside the double cone, the cutoff vanishes on
    an open neighborhood of it, and the signed Whitney term changes sign
    exactly across it.
    """

    tag = "A"

    def __init__(
        self,
        stage: int = 3,
        K: int = 3,
        cone: ConeParams = ConeParams(),
        window=(-3 * PI, 3 * PI, -3 * PI, 3 * PI),
        r_min: float = 1.0 / 32.0,
        label_n: int = 1024,
        n_links: int = 11,
    ):
        self.window = tuple(window)
        self.cone = cone
        self.stages = list(_cached_tower(stage, n_links, 4))
        self.chain = self.stages[-1]
        K_eff = max(K, tile_range_for_window(window, rotated=True))
        self.oracle: RotatedOracle = rotate_quarter(PTildeOracle(self.chain, K=K_eff))
        self.target_samples = self.oracle.samples(window, target_spacing=min(r_min / 2, 0.02))
        self.sample_resolution = self.oracle.sample_resolution

        ok = cone.contains_many(self.target_samples)
        if not ok.all():
            bad = self.target_samples[~ok][0]
            raise ConeViolation(f"target sample {tuple(bad)} escapes the cone")

        self._target_tree = cKDTree(self.target_samples)
        self.cover: WhitneyCover = build_cover(
            lambda pts: self._target_tree.query(pts)[0],
            window,
            r_min,
            resolution_guard=self.sample_resolution,
        )
        spacing = (window[1] - window[0]) / (label_n - 1)
        seed = 0.75 * window[1]
        self.labeling, self.plus_label, self.minus_label = _separating_labels(
            self.target_samples, window, spacing, (seed, 0.0), (-seed, 0.0)
        )
        self.r_min = r_min
        self.params = {
            "stage": stage,
            "K": K_eff,
            "alpha": cone.alpha,
            "beta": cone.beta,
            "r_min": r_min,
            "links": len(self.chain),
        }

    def _sign(self, pts: np.ndarray) -> np.ndarray:
        lab = self.labeling.labels_at_many(pts[:, 0], pts[:, 1])
        return np.where(lab == self.minus_label, -1.0, 1.0)

    def g_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        h = h_eval(self.cover, pts)
        sgn = self._sign(pts)
        w = omega_eval(self.cone, pts[:, 0], pts[:, 1])
        return pts[:, 1] ** 2 * sgn * h + w

    def residual_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts[:, 1] * self.g_many(pts)

    def nonlinear_many(self, points: np.ndarray) -> np.ndarray:
        """r(lam, x) = x (lam - g)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts[:, 1] * (pts[:, 0] - self.g_many(pts))

    def extraction_grid(self, grid_n: int):
        """xs, ys, signed field g, and the excluded trivial rows."""
        xs = np.linspace(self.window[0], self.window[1], grid_n)
        ys = np.linspace(self.window[2], self.window[3], grid_n)
        H = eval_h_grid(self.cover, xs, ys)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        lab = self.labeling.labels_at_many(X.ravel(), Y.ravel()).reshape(X.shape)
        sgn = np.where(lab == self.minus_label, -1.0, 1.0)
        W = omega_eval(self.cone, X, Y)
        G = Y**2 * sgn * H + W
        spacing = ys[1] - ys[0]
        excluded = np.abs(Y) < spacing
        return xs, ys, G, excluded

    def hot_ratio(self, delta: float, lam_bound: float = 3 * PI, n: int = 256) -> float:
        lams = np.linspace(-lam_bound, lam_bound, n)
        sup = 0.0
        for xv in (delta, -delta):
            pts = np.stack([lams, np.full(n, xv)], axis=1)
            sup = max(sup, float(np.abs(self.nonlinear_many(pts)).max() / delta))
        return sup


class ExampleB(ProblemInstance):
    """Three-piece target (vertical segment plus two shifted half-tilings):
    g = x^2 * sgn_h + lam * bump(x), with the bump supported in |x| < 1/4."""

    tag = "B"

    def __init__(
        self,
        stage: int = 3,
        K: int = 3,
        window=(-3 * PI, 3 * PI, -2.0, 2.0),
        r_min: float = 1.0 / 32.0,
        label_n: int = 1024,
        n_links: int = 11,
    ):
        self.window = tuple(window)
        self.stages = list(_cached_tower(stage, n_links, 4))
        self.chain = self.stages[-1]
        K_eff = max(K, tile_range_for_window(window, rotated=False))
        self.oracle = ExampleBOracle(self.chain, K=K_eff)
        self.pieces = self.oracle.piece_samples(window, target_spacing=min(r_min / 2, 0.02))
        self.target_samples = np.concatenate(
            [self.pieces["L"], self.pieces["C+"], self.pieces["C-"]]
        )
        self.sample_resolution = max(self.oracle.sample_resolution, 1.0 / 64.0)

        self._target_tree = cKDTree(self.target_samples)
        self.cover = build_cover(
            lambda pts: self._target_tree.query(pts)[0],
            window,
            r_min,
            resolution_guard=self.oracle.sample_resolution,
        )
        spacing = (window[1] - window[0]) / (label_n - 1)
        seed = 0.75 * window[1]
        self.labeling, self.plus_label, self.minus_label = _separating_labels(
            self.target_samples, window, spacing, (seed, 0.0), (-seed, 0.0)
        )
        self.r_min = r_min
        self.params = {"stage": stage, "K": K_eff, "r_min": r_min, "links": len(self.chain)}

    def _sign(self, pts: np.ndarray) -> np.ndarray:
        lab = self.labeling.labels_at_many(pts[:, 0], pts[:, 1])
        return np.where(lab == self.minus_label, -1.0, 1.0)

    def g_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        h = h_eval(self.cover, pts)
        sgn = self._sign(pts)
        return pts[:, 1] ** 2 * sgn * h + pts[:, 0] * x_axis_bump(pts[:, 1])

    def residual_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts[:, 1] * self.g_many(pts)

    def nonlinear_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts[:, 1] * (pts[:, 0] - self.g_many(pts))

    def extraction_grid(self, grid_n: int):
        xs = np.linspace(self.window[0], self.window[1], grid_n)
        ny = max(64, int(round(grid_n * (self.window[3] - self.window[2]) / (self.window[1] - self.window[0]))))
        ys = np.linspace(self.window[2], self.window[3], ny)
        H = eval_h_grid(self.cover, xs, ys)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        lab = self.labeling.labels_at_many(X.ravel(), Y.ravel()).reshape(X.shape)
        sgn = np.where(lab == self.minus_label, -1.0, 1.0)
        G = Y**2 * sgn * H + X * x_axis_bump(Y)
        spacing = ys[1] - ys[0]
        excluded = np.abs(Y) < spacing
        return xs, ys, G, excluded

    def hot_ratio(self, delta: float, lam_bound: float = 3 * PI, n: int = 256) -> float:
        lams = np.linspace(-lam_bound, lam_bound, n)
        sup = 0.0
        for xv in (delta, -delta):
            pts = np.stack([lams, np.full(n, xv)], axis=1)
            sup = max(sup, float(np.abs(self.nonlinear_many(pts)).max() / delta))
        return sup


class NoSolutionControl(ProblemInstance):
    """lam v = Lv + R(v) with L(x,y) = (x+y, y), R(x,y) = (0, -x^3):
    the residual forces x((lam-1)^2 + x^2) = 0, so no nontrivial zeros."""

    tag = "KEXX"
    extraction = "threshold"

    def __init__(self, lam_range=(-3.0, 3.0), v_range=(-2.0, 2.0)):
        self.window = (lam_range[0], lam_range[1], v_range[0], v_range[1])
        self.lam_range = lam_range
        self.v_range = v_range
        self.params = {"lam_range": list(lam_range), "v_range": list(v_range)}

    @staticmethod
    def residual_components(lam, x, y):
        lam = np.asarray(lam, dtype=float)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (lam - 1.0) * x - y, (lam - 1.0) * y + x**3

    def residual_max_norm(self, lam, x, y) -> np.ndarray:
        r1, r2 = self.residual_components(lam, x, y)
        return np.maximum(np.abs(r1), np.abs(r2))

    def sweep_empty(self, n: int = 201, tol: float = 1e-9) -> bool:
        """No nontrivial residual zero below tol * (1 + |lam| ||v||) on the
        n^3 product grid."""
        lams = np.linspace(self.lam_range[0], self.lam_range[1], n)
        xs = np.linspace(self.v_range[0], self.v_range[1], n)
        ys = np.linspace(self.v_range[0], self.v_range[1], n)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        nontrivial = (X != 0.0) | (Y != 0.0)
        vnorm = np.hypot(X, Y)
        for lam in lams:
            res = self.residual_max_norm(lam, X, Y)
            scale = 1.0 + abs(lam) * vnorm
            if np.any((res < tol * scale) & nontrivial):
                return False
        return True

    def hot_ratio(self, delta: float, lam_bound: float = 3.0, n: int = 256) -> float:
        ang = 2 * PI * np.arange(n) / n
        x = delta * np.cos(ang)
        return float(np.max(np.abs(x) ** 3) / delta)


def kexx_residual(lam: float, v) -> tuple[float, float]:
    """Residual of the no-solution control at (lam, (x, y))."""
    r1, r2 = NoSolutionControl.residual_components(lam, v[0], v[1])
    return float(r1), float(r2)


def build_example_a(**kw) -> ExampleA:
    return ExampleA(**kw)


def build_example_b(**kw) -> ExampleB:
    return ExampleB(**kw)
