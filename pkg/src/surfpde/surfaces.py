"""Analytic closest-point functions for the initial surfaces.

Every surface provides the closest point of a query x together with the
outward unit normal and mean curvature there.  Curvature follows the
sum-of-principal-curvatures convention, positive for convex surfaces with
outward normal: 1/R on a circle of radius R, 2/R on a sphere.

``closest_point`` is the checked scalar entry point (it rejects queries at
medial-axis singularities, where the closest point is not unique);
``closest_point_batch`` is the vectorized form used for whole-grid scans,
which resolves singular queries with a deterministic direction instead
(such nodes always lie farther from the surface than any usable tube
radius, so only their distance matters).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from surfpde.errors import ConfigError, MedialAxisError

_MEDIAL_TOL = 1e-8


def _as_batch(x, d):
    x = np.asarray(x, dtype=np.float64)
    if x.shape == (d,):
        return x[None, :], True
    if x.ndim == 2 and x.shape[1] == d:
        return x, False
    raise ValueError(f"expected point(s) of dimension {d}, got shape {x.shape}")


class _SurfaceBase:
    def closest_point(self, x):
        """(point, normal, kappa) of the closest surface point to x.

        Raises MedialAxisError when x is too close to a point where the
        closest point is ambiguous.
        """
        X, _ = _as_batch(x, self.d)
        if self._medial(X)[0]:
            raise MedialAxisError(f"closest point ambiguous at {np.asarray(x)}")
        foot, nrm, kap = self.closest_point_batch(X)
        return foot[0], nrm[0], float(kap[0])

    def distance(self, x) -> float:
        X, _ = _as_batch(x, self.d)
        foot, _, _ = self.closest_point_batch(X)
        return float(np.linalg.norm(X[0] - foot[0]))


@dataclass
class Circle(_SurfaceBase):
    center: np.ndarray
    radius: float
    d = 2

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        if self.radius <= 0:
            raise ConfigError("radius must be positive")

    def _medial(self, X):
        return np.linalg.norm(X - self.center, axis=1) < _MEDIAL_TOL * max(1.0, self.radius)

    def closest_point_batch(self, X):
        w = X - self.center
        rho = np.linalg.norm(w, axis=1)
        sing = rho < _MEDIAL_TOL * max(1.0, self.radius)
        nrm = np.where(sing[:, None], np.array([1.0, 0.0]), w / np.maximum(rho, 1e-300)[:, None])
        foot = self.center + self.radius * nrm
        kap = np.full(len(X), 1.0 / self.radius)
        return foot, nrm, kap

    def sample(self, n):
        th = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
        return self.center + self.radius * np.stack([np.cos(th), np.sin(th)], axis=1)


@dataclass
class Sphere(_SurfaceBase):
    center: np.ndarray
    radius: float
    d = 3

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        if self.radius <= 0:
            raise ConfigError("radius must be positive")

    def _medial(self, X):
        return np.linalg.norm(X - self.center, axis=1) < _MEDIAL_TOL * max(1.0, self.radius)

    def closest_point_batch(self, X):
        w = X - self.center
        rho = np.linalg.norm(w, axis=1)
        sing = rho < _MEDIAL_TOL * max(1.0, self.radius)
        nrm = np.where(sing[:, None], np.array([1.0, 0.0, 0.0]), w / np.maximum(rho, 1e-300)[:, None])
        foot = self.center + self.radius * nrm
        kap = np.full(len(X), 2.0 / self.radius)
        return foot, nrm, kap

    def sample(self, n):
        # Fibonacci lattice: quasi-uniform, good enough for oracles.
        i = np.arange(n, dtype=np.float64) + 0.5
        phi = np.arccos(1.0 - 2.0 * i / n)
        th = np.pi * (1.0 + 5.0**0.5) * i
        return self.center + self.radius * np.stack(
            [np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], axis=1
        )


@dataclass
class Torus(_SurfaceBase):
    """Torus around the z-axis through ``center``: major radius R1, minor r2."""

    center: np.ndarray
    major_radius: float
    minor_radius: float
    d = 3

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        if not (self.major_radius > self.minor_radius > 0):
            raise ConfigError("torus needs major_radius > minor_radius > 0")

    def _medial(self, X):
        w = X - self.center
        rho = np.hypot(w[:, 0], w[:, 1])
        ring = np.stack([w[:, 0] * self.major_radius / np.maximum(rho, 1e-300),
                         w[:, 1] * self.major_radius / np.maximum(rho, 1e-300),
                         np.zeros(len(X))], axis=1)
        tol = _MEDIAL_TOL * max(1.0, self.major_radius)
        return (rho < tol) | (np.linalg.norm(w - ring, axis=1) < tol)

    def closest_point_batch(self, X):
        w = X - self.center
        rho = np.hypot(w[:, 0], w[:, 1])
        on_axis = rho < _MEDIAL_TOL * max(1.0, self.major_radius)
        cr = np.where(on_axis, 1.0, w[:, 0] / np.maximum(rho, 1e-300))
        sr = np.where(on_axis, 0.0, w[:, 1] / np.maximum(rho, 1e-300))
        ring = np.stack([self.major_radius * cr, self.major_radius * sr, w[:, 2] * 0.0], axis=1)
        v = w - ring
        vn = np.linalg.norm(v, axis=1)
        on_ring = vn < _MEDIAL_TOL * max(1.0, self.major_radius)
        # deterministic outward radial direction for singular queries
        fallback = np.stack([cr, sr, np.zeros(len(X))], axis=1)
        nrm = np.where(on_ring[:, None], fallback, v / np.maximum(vn, 1e-300)[:, None])
        foot = self.center + ring + self.minor_radius * nrm
        cos_phi = (nrm[:, 0] * cr + nrm[:, 1] * sr)
        kap = 1.0 / self.minor_radius + cos_phi / (self.major_radius + self.minor_radius * cos_phi)
        return foot, nrm, kap

    def sample(self, n):
        m = max(4, int(np.sqrt(n)))
        th, ph = np.meshgrid(
            np.linspace(0, 2 * np.pi, 2 * m, endpoint=False),
            np.linspace(0, 2 * np.pi, m, endpoint=False),
        )
        th, ph = th.ravel(), ph.ravel()
        r = self.major_radius + self.minor_radius * np.cos(ph)
        return self.center + np.stack(
            [r * np.cos(th), r * np.sin(th), self.minor_radius * np.sin(ph)], axis=1
        )


@dataclass
class TwoCircles(_SurfaceBase):
    """Union of two circles of equal radius; cp is taken from the nearer one.

    Ties go to the first circle.  The member curves may overlap: the
    representation is the union of the two closed curves, which is what
    outward growth with merging needs.
    """

    center1: np.ndarray
    center2: np.ndarray
    radius: float
    d = 2

    def __post_init__(self):
        self.center1 = np.asarray(self.center1, dtype=np.float64)
        self.center2 = np.asarray(self.center2, dtype=np.float64)
        if self.radius <= 0:
            raise ConfigError("radius must be positive")
        if np.allclose(self.center1, self.center2):
            raise ConfigError("circle centers must differ")

    @property
    def _parts(self):
        return Circle(self.center1, self.radius), Circle(self.center2, self.radius)

    def _medial(self, X):
        c1, c2 = self._parts
        return c1._medial(X) | c2._medial(X)

    def closest_point_batch(self, X):
        c1, c2 = self._parts
        f1, n1, k1 = c1.closest_point_batch(X)
        f2, n2, k2 = c2.closest_point_batch(X)
        d1 = np.linalg.norm(X - f1, axis=1)
        d2 = np.linalg.norm(X - f2, axis=1)
        take2 = d2 < d1
        return (
            np.where(take2[:, None], f2, f1),
            np.where(take2[:, None], n2, n1),
            np.where(take2, k2, k1),
        )

    def sample(self, n):
        c1, c2 = self._parts
        return np.vstack([c1.sample(n // 2), c2.sample(n - n // 2)])


@dataclass
class Dumbbell(_SurfaceBase):
    """Surface of revolution x1^4 - a^2 x1^2 + b (x2^2 + x3^2) = c.

    Two bulbs joined by a neck of radius sqrt(c/b) at x1 = 0; shrinks and
    pinches under mean curvature motion.  Closest points are found on the
    profile curve in the (x1, rho) half-plane: a dense scan seeds a Newton
    solve of the constrained stationarity system.
    """

    a: float = 0.8
    b: float = 0.5
    c: float = 0.02
    d = 3
    _profile_n = 2048

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0:
            raise ConfigError("dumbbell parameters must be positive")

    @property
    def neck_radius(self) -> float:
        return float(np.sqrt(self.c / self.b))

    @property
    def half_length(self) -> float:
        a2 = self.a * self.a
        return float(np.sqrt((a2 + np.sqrt(a2 * a2 + 4 * self.c)) / 2.0))

    def _profile(self):
        """Dense (s, rho(s)) sampling of the generating curve (cached)."""
        cached = getattr(self, "_prof_cache", None)
        if cached is None:
            xe = self.half_length
            s = xe * np.sin(np.linspace(-np.pi / 2, np.pi / 2, self._profile_n))
            rho2 = (self.c + self.a**2 * s**2 - s**4) / self.b
            rho = np.sqrt(np.maximum(rho2, 0.0))
            cached = (s, rho)
            self._prof_cache = cached
        return cached

    def _grad_hess(self, P):
        """Gradient and Hessian diagonal data of F at 3D points P."""
        g = np.empty_like(P)
        g[:, 0] = 4.0 * P[:, 0] ** 3 - 2.0 * self.a**2 * P[:, 0]
        g[:, 1] = 2.0 * self.b * P[:, 1]
        g[:, 2] = 2.0 * self.b * P[:, 2]
        h0 = 12.0 * P[:, 0] ** 2 - 2.0 * self.a**2
        return g, h0

    def _medial(self, X):
        X = np.atleast_2d(X)
        rho_x = np.hypot(X[:, 1], X[:, 2])
        on_axis = rho_x < _MEDIAL_TOL
        if not np.any(on_axis):
            return np.zeros(len(X), dtype=bool)
        foot, _, _ = self.closest_point_batch(X)
        foot_rho = np.hypot(foot[:, 1], foot[:, 2])
        return on_axis & (foot_rho > _MEDIAL_TOL)

    def closest_point_batch(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        s_grid, rho_grid = self._profile()
        rho_x = np.hypot(X[:, 1], X[:, 2])
        # nearest profile sample seeds the refinement
        d2 = (X[:, 0:1] - s_grid[None, :]) ** 2 + (rho_x[:, None] - rho_grid[None, :]) ** 2
        j = np.argmin(d2, axis=1)
        s = s_grid[j]
        r = rho_grid[j]
        # Newton on the 2D profile: minimize |q - (s, r)|^2 with
        # f(s, r) = s^4 - a^2 s^2 + b r^2 - c = 0, unknowns (s, r, lam).
        q = np.stack([X[:, 0], rho_x], axis=1)
        z = np.stack([s, r], axis=1)
        lam = np.zeros(len(X))
        for _ in range(60):
            fs = 4 * z[:, 0] ** 3 - 2 * self.a**2 * z[:, 0]
            fr = 2 * self.b * z[:, 1]
            f = z[:, 0] ** 4 - self.a**2 * z[:, 0] ** 2 + self.b * z[:, 1] ** 2 - self.c
            g1 = z[:, 0] - q[:, 0] + lam * fs
            g2 = z[:, 1] - q[:, 1] + lam * fr
            res = np.abs(g1) + np.abs(g2) + np.abs(f)
            if np.max(res) < 1e-13 * max(1.0, self.half_length):
                break
            J = np.zeros((len(X), 3, 3))
            J[:, 0, 0] = 1 + lam * (12 * z[:, 0] ** 2 - 2 * self.a**2)
            J[:, 0, 2] = fs
            J[:, 1, 1] = 1 + lam * 2 * self.b
            J[:, 1, 2] = fr
            J[:, 2, 0] = fs
            J[:, 2, 1] = fr
            rhs = -np.stack([g1, g2, f], axis=1)
            try:
                step = np.linalg.solve(J, rhs)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(
                    J.reshape(-1, 3), rhs.reshape(-1), rcond=None
                )[0].reshape(len(X), 3)
            # clamp to keep the iterate near the profile
            step = np.clip(step, -0.5 * self.half_length, 0.5 * self.half_length)
            z = z + step[:, :2]
            lam = lam + step[:, 2]
        # map the profile point back to 3D around the symmetry axis
        safe = np.maximum(rho_x, 1e-300)
        c_psi = np.where(rho_x < _MEDIAL_TOL, 1.0, X[:, 1] / safe)
        s_psi = np.where(rho_x < _MEDIAL_TOL, 0.0, X[:, 2] / safe)
        foot = np.stack([z[:, 0], z[:, 1] * c_psi, z[:, 1] * s_psi], axis=1)
        g, h0 = self._grad_hess(foot)
        gn = np.linalg.norm(g, axis=1)
        nrm = g / np.maximum(gn, 1e-300)[:, None]
        lap = h0 + 4.0 * self.b
        gHg = h0 * g[:, 0] ** 2 + 2 * self.b * (g[:, 1] ** 2 + g[:, 2] ** 2)
        kap = (lap * gn**2 - gHg) / np.maximum(gn, 1e-300) ** 3
        return foot, nrm, kap

    def sample(self, n):
        s_grid, rho_grid = self._profile()
        m = max(8, int(np.sqrt(n / 2)))
        take = np.linspace(0, len(s_grid) - 1, 2 * m).astype(int)
        psi = np.linspace(0, 2 * np.pi, m, endpoint=False)
        s = np.repeat(s_grid[take], m)
        r = np.repeat(rho_grid[take], m)
        ps = np.tile(psi, 2 * m)
        return np.stack([s, r * np.cos(ps), r * np.sin(ps)], axis=1)
