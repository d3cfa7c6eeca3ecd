"""Surface velocity laws used by the experiments.

All laws are evaluated at footpoints: v(x, n, kappa, u, t) with the
footpoint's outward normal and curvature, and (for solution-coupled
laws) the PDE solution sampled at the footpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from surfpde.errors import ConfigError


@dataclass
class MotionLaw:
    kind: str
    params: dict = field(default_factory=dict)
    fn: object = None   # custom laws: fn(x, n, kappa, u, t) -> (n, d)

    @property
    def needs_solution(self) -> bool:
        return self.kind == "solution_coupled" or bool(self.params.get("needs_solution"))

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def constant_normal(cls, speed):
        return cls("constant_normal", {"speed": float(speed)})

    @classmethod
    def mean_curvature(cls, scale=1.0):
        """v = -scale * kappa * n: convex regions move inward, shrinking."""
        return cls("mean_curvature", {"scale": float(scale)})

    @classmethod
    def vortex2d(cls, t_final=4.0):
        return cls("vortex2d", {"t_final": float(t_final)})

    @classmethod
    def vortex3d(cls, t_final=1.5):
        return cls("vortex3d", {"t_final": float(t_final)})

    @classmethod
    def oscillate_x(cls):
        """v = a'(t)/(2 a(t)) (x1, 0, 0) with a(t) = 1 + sin 2t."""
        return cls("oscillate_x")

    @classmethod
    def solution_coupled(cls, alpha, beta):
        """v = (alpha*kappa + beta*u) n."""
        return cls("solution_coupled", {"alpha": float(alpha), "beta": float(beta)})

    @classmethod
    def custom(cls, fn, needs_solution=False):
        return cls("custom", {"needs_solution": needs_solution}, fn=fn)


def velocity(law: MotionLaw, x, n, kappa, u, t: float) -> np.ndarray:
    """Velocity at one or many surface points; shape follows x."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    N = np.atleast_2d(np.asarray(n, dtype=np.float64))
    kap = np.atleast_1d(np.asarray(kappa, dtype=np.float64))
    if law.needs_solution:
        if u is None:
            raise ConfigError(f"{law.kind} law needs the PDE solution at footpoints")
        U = np.atleast_1d(np.asarray(u, dtype=np.float64))
    else:
        U = np.zeros(len(X)) if u is None else np.atleast_1d(np.asarray(u, dtype=np.float64))

    k = law.kind
    if k == "zero":
        v = np.zeros_like(X)
    elif k == "constant_normal":
        v = law.params["speed"] * N
    elif k == "mean_curvature":
        v = -law.params["scale"] * kap[:, None] * N
    elif k == "vortex2d":
        rew = np.cos(np.pi * t / law.params["t_final"])
        sx = np.sin(np.pi * X[:, 0])
        sy = np.sin(np.pi * X[:, 1])
        v = np.stack(
            [-(sx**2) * np.sin(2 * np.pi * X[:, 1]) * rew,
             sy**2 * np.sin(2 * np.pi * X[:, 0]) * rew], axis=1)
    elif k == "vortex3d":
        rew = np.cos(np.pi * t / law.params["t_final"])
        s2x = np.sin(2 * np.pi * X[:, 0])
        s2y = np.sin(2 * np.pi * X[:, 1])
        s2z = np.sin(2 * np.pi * X[:, 2])
        v = np.stack(
            [2 * np.sin(np.pi * X[:, 0]) ** 2 * s2y * s2z * rew,
             -s2x * np.sin(np.pi * X[:, 1]) ** 2 * s2z * rew,
             -s2x * s2y * np.sin(np.pi * X[:, 2]) ** 2 * rew], axis=1)
    elif k == "oscillate_x":
        a = 1.0 + np.sin(2.0 * t)
        ap = 2.0 * np.cos(2.0 * t)
        v = np.zeros_like(X)
        v[:, 0] = ap / (2.0 * a) * X[:, 0]
    elif k == "solution_coupled":
        speed = law.params["alpha"] * kap + law.params["beta"] * U
        v = speed[:, None] * N
    elif k == "custom":
        v = np.atleast_2d(np.asarray(law.fn(X, N, kap, U, t), dtype=np.float64))
    else:
        raise ConfigError(f"unknown motion law {law.kind!r}")
    return v[0] if single else v
