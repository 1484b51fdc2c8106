"""The gradient-structure counterexample: profile cascade and polar field.

On the strip [-pi, pi] x R a smooth weight psi vanishes flatly exactly on
the boundary of the periodic two-column arrangement and equals 1 in the
two outer strips.  Splitting psi across the arrangement and weighting by
the slice integrals kappa+- produces phi with a row integral that cancels
exactly, so its cumulative integral Phi closes up at both strip edges.
The plane field r(x, y) = exp(-1/rho^2) * Phi(theta, 1/rho) then has its
nontrivial critical circles exactly on the scaled boundary copies: the
angular equation reduces to phi(theta, 1/rho) = 0.

Grid discipline: psi, phi and kappa live on shared midpoint nodes; Phi on
the interleaved edge nodes via cumulative midpoint sums, which makes
Phi(-pi, .) = 0 exact and Phi(pi, .) = kappa+ kappa- - kappa- kappa+ zero
to rounding.  The smooth evaluations used for gradients come from one
bicubic spline of Phi, so the implemented gradient is the exact gradient
of the implemented field; the pointwise product form of phi (exactly zero
on boundary points) backs the critical-point residual checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import InterpolatedUnivariateSpline, RectBivariateSpline

from .continua import OmegaHatArrangement, OmegaSpec
from .whitney import WhitneyCover, build_cover, eval_h_grid, h_eval, log_flat, smooth_step

PI = math.pi

# exp(-1/rho^2) underflows below this radius; the field is exactly zero there
RHO_UNDERFLOW = 0.0366


class SignViolation(Exception):
    """A slice integral lost its sign: some row of the arrangement has
    (near-)zero measure."""


def strip_cutoff(sigma, order: int = 0):
    """Smooth cutoff in sigma: 0 on |sigma| <= 3pi/4, 1 on |sigma| >= 7pi/8."""
    s = np.abs(np.asarray(sigma, dtype=float))
    z = (s - 3 * PI / 4.0) / (PI / 8.0)  # 0..1 across the transition
    t = 0.5 + 0.5 * np.clip(z, 0.0, 1.0)
    if order == 0:
        return 1.0 - smooth_step.value(t)
    raise ValueError("cutoff derivatives are not needed")


@dataclass
class PeriodicProfile:
    """Shared-node grids of the cascade on [-pi, pi] x [0, 2p]."""

    spec: OmegaSpec
    arrangement: OmegaHatArrangement
    cover: WhitneyCover
    sigma_mid: np.ndarray
    tau_mid: np.ndarray
    d_sigma: float
    d_tau: float
    psi: np.ndarray
    psi_plus: np.ndarray
    psi_minus: np.ndarray
    kappa_plus: np.ndarray
    kappa_minus: np.ndarray
    phi: np.ndarray
    sigma_edges: np.ndarray
    Phi: np.ndarray
    flat_scale: float
    _Phi_spline: RectBivariateSpline = field(repr=False, default=None)
    _kp_spline: InterpolatedUnivariateSpline = field(repr=False, default=None)
    _km_spline: InterpolatedUnivariateSpline = field(repr=False, default=None)

    # -- periodic reductions -------------------------------------------------

    def reduce_tau(self, tau) -> np.ndarray:
        return np.asarray(tau, dtype=float) % (2.0 * self.spec.p)

    # -- pointwise (product-form) evaluations ---------------------------------

    def psi_direct(self, sigma, tau) -> np.ndarray:
        """(1 - chi) * flat(h) + chi, evaluated from the cover: exactly zero
        on arrangement-boundary points, ~1 in the outer strips."""
        s = np.atleast_1d(np.asarray(sigma, dtype=float))
        t = self.reduce_tau(np.atleast_1d(tau))
        h = h_eval(self.cover, np.stack([s, t], axis=1))
        chi = strip_cutoff(s)
        return (1.0 - chi) * log_flat(h, self.flat_scale) + chi

    def phi_direct(self, sigma, tau) -> np.ndarray:
        """kappa+ psi-  -  kappa- psi+ in product form: negative inside the
        arrangement, positive outside, exactly zero on boundary points."""
        s = np.atleast_1d(np.asarray(sigma, dtype=float))
        t = np.atleast_1d(np.asarray(tau, dtype=float))
        s_b, t_b = np.broadcast_arrays(s, t)
        psi = self.psi_direct(s_b.ravel(), t_b.ravel()).reshape(s_b.shape)
        inside = self.arrangement.signed_dist(s_b, t_b) < 0
        tred = self.reduce_tau(t_b)
        kp = self._kp_spline(tred)
        km = self._km_spline(tred)
        return np.where(inside, kp * (-psi), -km * psi)

    # -- smooth (spline) evaluations ------------------------------------------

    def Phi_eval(self, sigma, tau, d_sigma: int = 0, d_tau: int = 0) -> np.ndarray:
        s = np.clip(np.asarray(sigma, dtype=float), -PI, PI)
        t = self.reduce_tau(tau)
        return self._Phi_spline.ev(s, t, dx=d_sigma, dy=d_tau)

    def row_integral_residuals(self):
        """|Phi(pi, tau)| per row, with the row's L1 scale."""
        end = np.abs(self.Phi[-1, :])
        scale = np.abs(self.phi).sum(axis=0) * self.d_sigma + 1e-300
        return end, scale


def build_profile_c(
    spec: OmegaSpec | None = None,
    grid_n: int = 512,
    r_min: float = 0.04,
    flat_scale: float = 2000.0,
) -> PeriodicProfile:
    """Construct the cascade on the fundamental domain.

    grid_n counts midpoint nodes per period dimension (>= 256).
    """
    if grid_n < 256:
        raise ValueError("grid_n must be at least 256 per period dimension")
    spec = spec or OmegaSpec()
    arr = OmegaHatArrangement(spec)
    twop = 2.0 * spec.p

    cover = build_cover(
        lambda pts: arr.boundary_dist(pts[:, 0], pts[:, 1]),
        window=(-PI, PI, 0.0, twop),
        r_min=r_min,
        resolution_guard=0.0,
    )

    d_s = 2.0 * PI / grid_n
    d_t = twop / grid_n
    s_mid = -PI + (np.arange(grid_n) + 0.5) * d_s
    t_mid = (np.arange(grid_n) + 0.5) * d_t

    H = eval_h_grid(cover, s_mid, t_mid)
    chi = strip_cutoff(s_mid)[:, None]
    psi = (1.0 - chi) * log_flat(H, flat_scale) + chi

    S, T = np.meshgrid(s_mid, t_mid, indexing="ij")
    inside = arr.signed_dist(S, T) < 0
    psi_minus = np.where(inside, -psi, 0.0)
    psi_plus = np.where(inside, 0.0, psi)

    kappa_plus = psi_plus.sum(axis=0) * d_s
    kappa_minus = psi_minus.sum(axis=0) * d_s
    if (kappa_plus <= 0).any() or (kappa_minus >= 0).any():
        j = int(np.argmax((kappa_plus <= 0) | (kappa_minus >= 0)))
        raise SignViolation(
            f"slice integrals lost their sign at tau={t_mid[j]:.4f}: "
            f"kappa+={kappa_plus[j]:.3e}, kappa-={kappa_minus[j]:.3e}"
        )

    phi = kappa_plus[None, :] * psi_minus - kappa_minus[None, :] * psi_plus
    Phi = np.vstack([np.zeros((1, grid_n)), np.cumsum(phi * d_s, axis=0)])
    s_edges = -PI + np.arange(grid_n + 1) * d_s

    pad = 6
    t_pad = np.concatenate([t_mid[-pad:] - twop, t_mid, t_mid[:pad] + twop])
    Phi_pad = np.concatenate([Phi[:, -pad:], Phi, Phi[:, :pad]], axis=1)
    spline = RectBivariateSpline(s_edges, t_pad, Phi_pad, kx=3, ky=3)
    kp_pad = np.concatenate([kappa_plus[-pad:], kappa_plus, kappa_plus[:pad]])
    km_pad = np.concatenate([kappa_minus[-pad:], kappa_minus, kappa_minus[:pad]])
    kp_s = InterpolatedUnivariateSpline(t_pad, kp_pad, k=3)
    km_s = InterpolatedUnivariateSpline(t_pad, km_pad, k=3)

    return PeriodicProfile(
        spec=spec,
        arrangement=arr,
        cover=cover,
        sigma_mid=s_mid,
        tau_mid=t_mid,
        d_sigma=d_s,
        d_tau=d_t,
        psi=psi,
        psi_plus=psi_plus,
        psi_minus=psi_minus,
        kappa_plus=kappa_plus,
        kappa_minus=kappa_minus,
        phi=phi,
        sigma_edges=s_edges,
        Phi=Phi,
        flat_scale=flat_scale,
        _Phi_spline=spline,
        _kp_spline=kp_s,
        _km_spline=km_s,
    )


# ---------------------------------------------------------------------------
# the plane field
# ---------------------------------------------------------------------------

class GradientCase:
    """r(x, y) = exp(-1/rho^2) Phi(theta, 1/rho) and its exact gradient.

    The smooth path (value / gradient) evaluates the Phi spline, so finite
    differences of the value match the gradient to truncation error; the
    product path (`angular_residual`) evaluates phi pointwise and is
    exactly zero at constructed boundary points.
    """

    tag = "C"
    extraction = "sign"

    def __init__(self, profile: PeriodicProfile, window=(-3.0, 3.0, -3.0, 3.0),
                 rho_floor: float = 0.21):
        self.profile = profile
        self.window = tuple(window)
        self.rho_floor = rho_floor
        self.params = {
            "shape": profile.spec.shape,
            "a": profile.spec.a,
            "p": profile.spec.p,
            "width": profile.spec.width,
            "grid_n": len(profile.sigma_mid),
            "rho_floor": rho_floor,
        }

    # -- polar helpers ---------------------------------------------------------

    @staticmethod
    def _polar(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        rho = np.hypot(x, y)
        theta = np.arctan2(y, x)
        return rho, theta

    @staticmethod
    def _flat(rho):
        out = np.zeros_like(rho)
        ok = rho > RHO_UNDERFLOW
        out[ok] = np.exp(-1.0 / rho[ok] ** 2)
        return out

    # -- field -----------------------------------------------------------------

    def value_many(self, x, y) -> np.ndarray:
        rho, theta = self._polar(x, y)
        out = np.zeros_like(rho)
        ok = rho > RHO_UNDERFLOW
        if ok.any():
            out[ok] = self._flat(rho[ok]) * self.profile.Phi_eval(theta[ok], 1.0 / rho[ok])
        return out

    def value(self, x: float, y: float) -> float:
        return float(self.value_many(np.array([x]), np.array([y]))[0])

    def gradient_many(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        rho, theta = self._polar(x, y)
        gx = np.zeros_like(rho)
        gy = np.zeros_like(rho)
        ok = rho > RHO_UNDERFLOW
        if not ok.any():
            return gx, gy
        r_, th = rho[ok], theta[ok]
        tau = 1.0 / r_
        E = self._flat(r_)
        P = self.profile.Phi_eval(th, tau)
        P_s = self.profile.Phi_eval(th, tau, d_sigma=1)
        P_t = self.profile.Phi_eval(th, tau, d_tau=1)
        dr = E * (2.0 / r_**3 * P - P_t / r_**2)
        dth = E * P_s
        ct, st = np.cos(th), np.sin(th)
        gx[ok] = dr * ct - dth * st / r_
        gy[ok] = dr * st + dth * ct / r_
        return gx, gy

    def gradient(self, x: float, y: float) -> tuple[float, float]:
        gx, gy = self.gradient_many(np.array([x]), np.array([y]))
        return float(gx[0]), float(gy[0])

    def radial_lambda(self, x, y) -> np.ndarray:
        """lambda solving the radial critical-point equation at (x, y)."""
        rho, theta = self._polar(x, y)
        tau = 1.0 / rho
        E = self._flat(rho)
        P = self.profile.Phi_eval(theta, tau)
        P_t = self.profile.Phi_eval(theta, tau, d_tau=1)
        return E * (2.0 / rho**3 * P - P_t / rho**2) / rho

    def angular_residual(self, x, y) -> np.ndarray:
        """d/dtheta of (lam rho^2 / 2 - r) via the product form of phi:
        exactly zero when (theta, 1/rho) is a constructed boundary point."""
        rho, theta = self._polar(x, y)
        return self._flat(rho) * self.profile.phi_direct(theta, 1.0 / rho)

    def gradient_residual(self, x, y, lam=None):
        """|| lam (x,y) - grad r || with lam from the radial equation."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if lam is None:
            lam = self.radial_lambda(x, y)
        gx, gy = self.gradient_many(x, y)
        return np.hypot(lam * x - gx, lam * y - gy)

    # -- extraction and sweeps ---------------------------------------------------

    def extraction_grid(self, grid_n: int):
        """Angular-derivative field on the window grid; trivial disk excluded."""
        xs = np.linspace(self.window[0], self.window[1], grid_n)
        ys = np.linspace(self.window[2], self.window[3], grid_n)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        rho, theta = self._polar(X, Y)
        F = np.zeros_like(rho)
        ok = rho >= self.rho_floor
        F[ok] = self.profile.Phi_eval(theta[ok], 1.0 / rho[ok], d_sigma=1)
        return xs, ys, F, ~ok

    def boundary_points_plane(self, n: int = 100) -> np.ndarray:
        """Constructed boundary points mapped into the window annulus."""
        # copies with tau-levels giving radii inside the window
        pts = self.profile.arrangement.boundary_samples(
            n_per_copy=n, levels=((1, 0), (0, 1))
        )
        tau = pts[:, 1]
        keep = tau > 1.0 / (0.45 * min(abs(self.window[1]), abs(self.window[3])) * 2)
        keep &= tau > 1e-9
        pts = pts[keep][:n]
        rho = 1.0 / pts[:, 1]
        return np.stack([rho * np.cos(pts[:, 0]), rho * np.sin(pts[:, 0])], axis=1)

    def hot_ratio(self, delta: float, lam_bound: float = 3.0, n: int = 256) -> float:
        ang = 2 * PI * np.arange(n) / n
        x = delta * np.cos(ang)
        y = delta * np.sin(ang)
        gx, gy = self.gradient_many(x, y)
        return float(np.hypot(gx, gy).max() / delta)


def build_example_c(
    spec: OmegaSpec | None = None,
    grid_n: int = 512,
    window=(-3.0, 3.0, -3.0, 3.0),
    r_min: float = 0.04,
) -> GradientCase:
    profile = build_profile_c(spec, grid_n=grid_n, r_min=r_min)
    return GradientCase(profile, window=window)
