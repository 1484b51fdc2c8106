"""Measurement layer: zero sets, Hausdorff comparison, separation checks,
higher-order-term sweeps, derivative audits, and the chain-stage report.

Zero sets of the Whitney-backed scalar fields are extracted from the sign
structure (the signed field is negative on one complement component and
positive on the other, so it flips exactly across the target) plus exact
floating-point zeros, which appear only in the thin shell where the
weighted bump series underflows.  Fixed-threshold extraction is kept for
the vector control problem; on the Whitney fields the term weights
gamma_j 2^j make |g| span the whole exponent range, so no single
threshold separates "on the set" from "near the set".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .chains import Chain, crookedness_audit, DEFAULT_MAX_BLOCKS
from .masks import FOUR_NEIGHBOR, ComponentLabeling, SeedOnObstacle  # noqa: F401

DELTAS_DEFAULT = (0.2, 0.1, 0.05, 0.025)


class EmptyInput(Exception):
    """Hausdorff distance needs nonempty point sets."""


class AuditFailure(Exception):
    """A refinement stage failed its crookedness audit."""


# ---------------------------------------------------------------------------
# zero sets
# ---------------------------------------------------------------------------

@dataclass
class ZeroSet:
    """Grid points flagged as solution candidates, with 4-neighbor labels."""

    points: np.ndarray           # (M, 2)
    labels: np.ndarray           # (M,)
    n_components: int
    spacing: tuple[float, float]
    tol: float
    method: str

    def __len__(self) -> int:
        return len(self.points)


def extract_zero_set(instance, grid_n: int = 1024, tol: float = 1e-9,
                     method: str | None = None) -> ZeroSet:
    """Candidate solution points of an instance on a grid.

    method 'sign': exact zeros and strict sign flips of the signed field;
    method 'threshold': |residual| < tol * (1 + |lam||x|).  The default is
    the instance's declared mode.  The trivial solutions are excluded per
    instance (rows |x| < spacing for the scalar problems, the sub-floor
    disk for the gradient case).
    """
    if grid_n < 64:
        raise ValueError("grid_n must be at least 64")
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    method = method or getattr(instance, "extraction", "sign")

    if instance.tag == "KEXX":
        return _extract_kexx(instance, grid_n, tol)

    xs, ys, F, excluded = instance.extraction_grid(grid_n)
    sx = xs[1] - xs[0]
    sy = ys[1] - ys[0]
    if method == "sign":
        mask = np.zeros_like(F, dtype=bool)
        if getattr(instance, "extraction_exact_zeros", True):
            mask |= F == 0.0
        flips_x = F[:-1, :] * F[1:, :] < 0
        mask[:-1, :] |= flips_x
        mask[1:, :] |= flips_x
        flips_y = F[:, :-1] * F[:, 1:] < 0
        mask[:, :-1] |= flips_y
        mask[:, 1:] |= flips_y
    elif method == "threshold":
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        scale = 1.0 + np.abs(X * Y)
        mask = np.abs(F) < tol * scale
    else:
        raise ValueError(f"unknown extraction method {method!r}")
    mask &= ~excluded

    lab_grid, n_comp = ndimage.label(mask, structure=FOUR_NEIGHBOR)
    ii, jj = np.nonzero(mask)
    pts = np.stack([xs[ii], ys[jj]], axis=1)
    return ZeroSet(
        points=pts,
        labels=lab_grid[ii, jj],
        n_components=int(n_comp),
        spacing=(float(sx), float(sy)),
        tol=tol,
        method=method,
    )


def _extract_kexx(instance, grid_n: int, tol: float) -> ZeroSet:
    lams = np.linspace(instance.lam_range[0], instance.lam_range[1], grid_n)
    vs = np.linspace(instance.v_range[0], instance.v_range[1], grid_n)
    X, Y = np.meshgrid(vs, vs, indexing="ij")
    nontrivial = (X != 0.0) | (Y != 0.0)
    vnorm = np.hypot(X, Y)
    hits = []
    for lam in lams:
        res = instance.residual_max_norm(lam, X, Y)
        low = (res < tol * (1.0 + abs(lam) * vnorm)) & nontrivial
        if low.any():
            ii, jj = np.nonzero(low)
            hits.append(np.stack([np.full(len(ii), lam), X[ii, jj]], axis=1))
    pts = np.concatenate(hits) if hits else np.zeros((0, 2))
    return ZeroSet(
        points=pts,
        labels=np.zeros(len(pts), dtype=np.int64),
        n_components=0 if not len(pts) else 1,
        spacing=(float(lams[1] - lams[0]), float(vs[1] - vs[0])),
        tol=tol,
        method="threshold",
    )


# ---------------------------------------------------------------------------
# comparison metrics
# ---------------------------------------------------------------------------

def directed_hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """sup over a of the distance to b."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if not len(a) or not len(b):
        raise EmptyInput("hausdorff needs nonempty point sets")
    d, _ = cKDTree(b).query(a)
    return float(d.max())


def hausdorff(a, b) -> float:
    return max(directed_hausdorff(a, b), directed_hausdorff(b, a))


def separation_check(labeling: ComponentLabeling, seed_plus, seed_minus) -> bool:
    """Do the two seeds land in different free components?"""
    return labeling.label_of_seed(seed_plus) != labeling.label_of_seed(seed_minus)


def hot_sweep(instance, lam_bound: float, deltas=DELTAS_DEFAULT) -> list[tuple[float, float]]:
    """sup ||nonlinearity|| / ||x|| over the lam range at each amplitude."""
    if any(d2 >= d1 for d1, d2 in zip(deltas, deltas[1:])):
        raise ValueError("deltas must be strictly decreasing")
    return [(float(d), float(instance.hot_ratio(d, lam_bound))) for d in deltas]


def derivative_audit(field, sample_n: int = 100, step: float = 1e-5) -> float:
    """Max relative error of the declared gradient against central
    differences over the field's own smooth-region samples."""
    pts = np.atleast_2d(field.sample_points(sample_n))
    gx, gy = field.gradient_many(pts[:, 0], pts[:, 1])
    fd_x = (field.value_many(pts[:, 0] + step, pts[:, 1])
            - field.value_many(pts[:, 0] - step, pts[:, 1])) / (2 * step)
    fd_y = (field.value_many(pts[:, 0], pts[:, 1] + step)
            - field.value_many(pts[:, 0], pts[:, 1] - step)) / (2 * step)
    err = np.hypot(fd_x - gx, fd_y - gy)
    mag = np.hypot(gx, gy)
    floor = 1e-12 * max(float(mag.max()), 1e-30)
    rel = err / np.maximum(np.maximum(mag, np.hypot(fd_x, fd_y)), floor)
    return float(rel.max())


# ---------------------------------------------------------------------------
# chain-stage certificates
# ---------------------------------------------------------------------------

@dataclass
class StageMetrics:
    stage: int
    links: int
    max_diameter: float
    chain_axiom: bool
    crooked_in_previous: bool | None


@dataclass
class PathProxyReport:
    """Per-stage shrink and crookedness certificates for a refinement tower.

    This reports the finite evidence (geometric shrink, folded walks at
    block resolution); it does not assert path-nonexistence of any limit
    set, which no finite stage can witness.
    """

    stages: list[StageMetrics]
    shrink_factors: list[float]
    max_blocks: int

    def all_crooked(self) -> bool:
        return all(s.crooked_in_previous for s in self.stages[1:])

    def to_dict(self) -> dict:
        return {
            "max_blocks": self.max_blocks,
            "stages": [vars(s) for s in self.stages],
            "shrink_factors": self.shrink_factors,
        }


def path_proxy_report(stages: list[Chain], max_blocks: int = DEFAULT_MAX_BLOCKS,
                      exhaustive: bool = False) -> PathProxyReport:
    """Audit a refinement tower; raises AuditFailure on a straight stage."""
    if not stages:
        raise ValueError("empty tower")
    rows: list[StageMetrics] = []
    for i, ch in enumerate(stages):
        axiom = ch.exhaustive_pair_check() if exhaustive else True
        crooked = None
        if i > 0:
            crooked = crookedness_audit(ch, stages[i - 1], max_blocks=max_blocks)
            if not crooked:
                raise AuditFailure(f"stage {ch.stage} is not crooked in stage {stages[i-1].stage}")
        rows.append(
            StageMetrics(
                stage=ch.stage,
                links=len(ch),
                max_diameter=ch.max_diameter(),
                chain_axiom=axiom,
                crooked_in_previous=crooked,
            )
        )
    factors = [
        rows[i - 1].max_diameter / rows[i].max_diameter for i in range(1, len(rows))
    ]
    return PathProxyReport(stages=rows, shrink_factors=factors, max_blocks=max_blocks)


# ---------------------------------------------------------------------------
# named checks (shared by the CLI report and the acceptance suite)
# ---------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    params: dict
    value: float
    bound: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "params": self.params,
            "value": self.value,
            "bound": self.bound,
            "passed": bool(self.passed),
        }


def _check(name, params, value, bound, passed) -> Check:
    return Check(name=name, params=params, value=float(value), bound=float(bound),
                 passed=bool(passed))


def residual_exactness_check(instance, tol: float = 1e-12) -> Check:
    """Residual lam x - r = x g at the target samples, relative to
    1 + |lam||x|; structurally zero for the Whitney-backed instances."""
    pts = instance.target_samples
    pts = pts[np.abs(pts[:, 1]) > 0]
    res = np.abs(instance.residual_many(pts))
    scale = 1.0 + np.abs(pts[:, 0] * pts[:, 1])
    worst = float((res / scale).max()) if len(pts) else 0.0
    return _check("residual_exact_on_target", {"samples": len(pts)}, worst, tol, worst <= tol)


def zero_set_hausdorff_checks(instance, zs: ZeroSet) -> list[Check]:
    sx, sy = zs.spacing
    spacing = max(sx, sy)
    r_min = getattr(instance, "r_min", 0.0)
    fwd_bound = 2.0 * (spacing + r_min)
    back_bound = 2.0 * spacing
    fwd = directed_hausdorff(zs.points, instance.target_samples)
    back = directed_hausdorff(instance.target_samples, zs.points)
    return [
        _check("zero_set_to_target", {"grid_spacing": spacing, "r_min": r_min},
               fwd, fwd_bound, fwd <= fwd_bound),
        _check("target_to_zero_set", {"grid_spacing": spacing},
               back, back_bound, back <= back_bound),
    ]


def separation_checks(instance, resolutions=(512, 1024)) -> list[Check]:
    from .masks import mask_from_points

    out = []
    for n in resolutions:
        spacing = (instance.window[1] - instance.window[0]) / (n - 1)
        mask = mask_from_points(instance.target_samples, instance.window, spacing)
        labeling = ComponentLabeling(mask)
        seed = 0.75 * instance.window[1]
        ok = separation_check(labeling, (seed, 0.0), (-seed, 0.0))
        out.append(_check("separation_of_half_planes", {"resolution": n}, float(ok), 1.0, ok))
    return out


def hot_decreasing_check(instance, lam_bound: float, deltas=DELTAS_DEFAULT) -> Check:
    table = hot_sweep(instance, lam_bound, deltas)
    vals = [v for _, v in table]
    ok = all(b < a for a, b in zip(vals, vals[1:]))
    return _check("hot_ratio_strictly_decreasing",
                  {"deltas": list(deltas), "values": vals, "lam_bound": lam_bound},
                  vals[-1], vals[0], ok)
