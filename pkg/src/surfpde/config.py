"""Experiment configuration: dataclass, INI parsing, named model functions.

A preset is one INI file with flat key/value sections.  Initial
conditions, exact solutions and PDE sources are referenced by name so
every shipped experiment is fully described by its text file; custom
functions can be attached programmatically on the dataclass.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from surfpde.errors import ConfigError
from surfpde.motion import MotionLaw
from surfpde.cpm import ModelSpec
from surfpde.surfaces import Circle, Dumbbell, Sphere, Torus, TwoCircles

PRESET_DIR = Path(__file__).parent / "presets"


# ---------------------------------------------------------------------------
# named initial conditions, exact solutions, sources

def _ic_expanding_circle(X):
    # u(theta, 0) = e^{4/5} cos(theta) sin(theta) on the unit circle
    return (np.exp(0.8) * X[:, 0] * X[:, 1])[:, None]


def _exact_expanding_circle(X, t):
    r = 1.0 + 5.0 * t
    th = np.arctan2(X[:, 1], X[:, 0])
    return np.exp(4.0 / (5.0 * r)) * np.cos(th) * np.sin(th) / r


def _ic_xy(X):
    return (X[:, 0] * X[:, 1])[:, None]


def _exact_ellipsoid(X, t):
    return np.exp(-6.0 * t) * X[:, 0] * X[:, 1]


def _src_ellipsoid(X, t, fields):
    """Forcing that makes u = e^{-6t} x1 x2 exact on the oscillating ellipsoid."""
    a = 1.0 + np.sin(2.0 * t)
    ap = 2.0 * np.cos(2.0 * t)
    x1, x2, x3 = X[:, 0], X[:, 1], X[:, 2]
    N = x1**2 + a**2 * (x2**2 + x3**2)
    u = np.exp(-6.0 * t) * x1 * x2
    f = u * (
        -6.0
        + (ap / a) * (1.0 - x1**2 / (2.0 * N))
        + (1.0 + 5.0 * a + 2.0 * a**2) / N
        - ((1.0 + a) / N**2) * (x1**2 + a**3 * (x2**2 + x3**2))
    )
    return f[:, None]


def _ic_torus_flow(X):
    return (1.0 + 20.0 * X[:, 0] * X[:, 1] * X[:, 2])[:, None]


def _ic_growth_two_species(X):
    u = 1.0 + 2.0 * X[:, 0] * X[:, 1] * X[:, 2]
    return np.stack([u, u], axis=1)


def _src_growth_two_species(X, t, fields):
    u, w = fields[:, 0], fields[:, 1]
    f1 = 100.0 * (0.1 - u + u**2 * w)
    f2 = 100.0 * (0.9 - u**2 * w)
    return np.stack([f1, f2], axis=1)


INITIAL_CONDITIONS = {
    "expanding_circle": _ic_expanding_circle,
    "xy": _ic_xy,
    "torus_flow": _ic_torus_flow,
    "growth_two_species": _ic_growth_two_species,
}

EXACT_SOLUTIONS = {
    "expanding_circle": _exact_expanding_circle,
    "oscillating_ellipsoid": _exact_ellipsoid,
}

SOURCES = {
    "oscillating_ellipsoid": _src_ellipsoid,
    "growth_two_species": _src_growth_two_species,
}


# ---------------------------------------------------------------------------
# configuration dataclass

@dataclass
class ExperimentConfig:
    name: str
    mode: str                      # "coupled" | "geometric"
    surface: object
    law: MotionLaw
    dx: float
    lo: np.ndarray
    hi: np.ndarray
    t_final: float
    dt_coeff: float
    dt_power: float
    model: ModelSpec | None = None
    initial: object = None
    exact: object = None
    degree: int = 3
    m: int | None = None
    delta_factor: float | None = None       # delta = factor * dx
    collect_angle_deg: float | None = None  # consistency threshold
    topology_angle_deg: float = 135.0
    consistency: bool = False
    topology: bool = False
    use_fallback: bool = True
    gamma_fixed: float | None = None
    errors_times: tuple = ()
    radius_every: int = 0
    components_every: int = 0
    vmax_every: int = 0
    snapshot_times: tuple = ()
    outdir: str | None = None

    @property
    def d(self) -> int:
        return self.surface.d

    @property
    def dt(self) -> float:
        return self.dt_coeff * self.dx**self.dt_power

    def validate(self):
        if self.mode not in ("coupled", "geometric"):
            raise ConfigError(f"mode must be coupled or geometric, not {self.mode!r}")
        if self.dt_coeff <= 0 or self.t_final <= 0:
            raise ConfigError("dt coefficient and t_final must be positive")
        if self.mode == "coupled":
            if self.model is None or self.initial is None:
                raise ConfigError("coupled mode needs a model and an initial condition")
        for t in self.errors_times:
            if self.exact is None:
                raise ConfigError("errors_times given but no exact solution")
            if t > self.t_final + 1e-12:
                raise ConfigError(f"error time {t} beyond t_final")
        return self

    def with_dx(self, dx: float) -> "ExperimentConfig":
        from dataclasses import replace

        return replace(self, dx=float(dx))


# ---------------------------------------------------------------------------
# INI parsing

def _floats(s):
    return tuple(float(v) for v in str(s).split())


def _build_surface(sec) -> object:
    kind = sec.get("kind")
    if kind == "circle":
        return Circle(_floats(sec["center"]), float(sec["radius"]))
    if kind == "sphere":
        return Sphere(_floats(sec["center"]), float(sec["radius"]))
    if kind == "torus":
        return Torus(_floats(sec.get("center", "0 0 0")),
                     float(sec["major_radius"]), float(sec["minor_radius"]))
    if kind == "two_circles":
        return TwoCircles(_floats(sec["center1"]), _floats(sec["center2"]),
                          float(sec["radius"]))
    if kind == "dumbbell":
        return Dumbbell(a=float(sec.get("a", 0.8)), b=float(sec.get("b", 0.5)),
                        c=float(sec.get("c", 0.02)))
    raise ConfigError(f"unknown surface kind {kind!r}")


def _build_law(sec) -> MotionLaw:
    kind = sec.get("kind")
    if kind == "zero":
        return MotionLaw.zero()
    if kind == "constant_normal":
        return MotionLaw.constant_normal(float(sec["speed"]))
    if kind == "mean_curvature":
        return MotionLaw.mean_curvature(float(sec.get("scale", 1.0)))
    if kind == "vortex2d":
        return MotionLaw.vortex2d(float(sec.get("t_final", 4.0)))
    if kind == "vortex3d":
        return MotionLaw.vortex3d(float(sec.get("t_final", 1.5)))
    if kind == "oscillate_x":
        return MotionLaw.oscillate_x()
    if kind == "solution_coupled":
        return MotionLaw.solution_coupled(float(sec["alpha"]), float(sec["beta"]))
    raise ConfigError(f"unknown motion law {kind!r}")


def load_config(path_or_name, overrides=()) -> ExperimentConfig:
    """Load a preset by name or an INI file by path; apply key overrides.

    Overrides are ``section.key=value`` strings and take precedence over
    file contents.
    """
    path = Path(path_or_name)
    if not path.exists():
        cand = PRESET_DIR / f"{path_or_name}.ini"
        if not cand.exists():
            raise ConfigError(f"no such config file or preset: {path_or_name}")
        path = cand
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config {path}")
    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {ov!r}")
        key, value = ov.split("=", 1)
        section, opt = key.split(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section.strip(), opt.strip(), value.strip())

    try:
        exp = cp["experiment"]
        grid = cp["grid"]
        surface = _build_surface(cp["surface"])
        law = _build_law(cp["motion"])
        mode = exp.get("mode", "coupled")
        model = None
        initial = None
        exact = None
        if cp.has_section("model") and cp["model"].getboolean("enabled", True):
            msec = cp["model"]
            nf = msec.getint("n_fields", 1)
            model = ModelSpec(
                diffusivity=_floats(msec.get("diffusivity", "1.0")),
                n_fields=nf,
                source=SOURCES[msec["source"]] if msec.get("source") else None,
            )
            if msec.get("initial"):
                initial = INITIAL_CONDITIONS[msec["initial"]]
            if msec.get("exact"):
                exact = EXACT_SOLUTIONS[msec["exact"]]
            mode = "coupled"
        gsec = cp["gbpm"] if cp.has_section("gbpm") else {}
        osec = cp["output"] if cp.has_section("output") else {}

        def _get(sec, key, default=None):
            return sec.get(key, default) if hasattr(sec, "get") else default

        cfg = ExperimentConfig(
            name=exp.get("name", path.stem),
            mode=mode,
            surface=surface,
            law=law,
            dx=grid.getfloat("dx"),
            lo=np.array(_floats(grid["lo"])),
            hi=np.array(_floats(grid["hi"])),
            t_final=exp.getfloat("t_final"),
            dt_coeff=exp.getfloat("dt_coeff"),
            dt_power=exp.getfloat("dt_power", 2.0),
            model=model,
            initial=initial,
            exact=exact,
            degree=exp.getint("degree", 3),
            m=int(_get(gsec, "m")) if _get(gsec, "m") else None,
            delta_factor=float(_get(gsec, "delta_factor")) if _get(gsec, "delta_factor") else None,
            collect_angle_deg=float(_get(gsec, "collect_angle_deg")) if _get(gsec, "collect_angle_deg") else None,
            topology_angle_deg=float(_get(gsec, "topology_angle_deg", "135") or "135"),
            consistency=str(_get(gsec, "consistency", "false")).lower() in ("1", "true", "yes"),
            topology=str(_get(gsec, "topology", "false")).lower() in ("1", "true", "yes"),
            use_fallback=str(_get(gsec, "fallback", "true")).lower() in ("1", "true", "yes"),
            gamma_fixed=float(_get(gsec, "gamma")) if _get(gsec, "gamma") else None,
            errors_times=_floats(_get(osec, "errors_times", "") or ""),
            radius_every=int(_get(osec, "radius_every", "0") or "0"),
            components_every=int(_get(osec, "components_every", "0") or "0"),
            vmax_every=int(_get(osec, "vmax_every", "0") or "0"),
            snapshot_times=_floats(_get(osec, "snapshot_times", "") or ""),
            outdir=_get(osec, "dir"),
        )
    except (KeyError, ValueError) as e:
        raise ConfigError(f"bad config {path}: {e!r}") from e
    return cfg.validate()


def list_presets():
    return sorted(p.stem for p in PRESET_DIR.glob("*.ini"))
