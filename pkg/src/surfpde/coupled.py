"""Alternation of closest point evolution and particle tracking.

Each step advances the PDE on the current tube, then moves the surface
and rebuilds the closest point representation over the same tube radius.
The radius is managed adaptively: it starts at the stencil-support
minimum and, when a step finds an interpolation stencil reaching outside
the tube (rare), the whole step is retried once from the saved state on
a tube widened by the distance footpoints can travel in one step
(dt * max normal speed).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace as dc_replace

import numpy as np

from surfpde.cpm import ModelSpec, cpm_step, gamma_cpm
from surfpde.errors import ConfigError, IncompleteTubeError, NumericalFault
from surfpde.gbpm import ResampleParams, move_footpoints, resample, update_tube
from surfpde.grid import GridSpec, Tube, build_tube, check_stencil_margin
from surfpde.interp import interp_batch
from surfpde.motion import MotionLaw

logger = logging.getLogger(__name__)


@dataclass
class CoupledState:
    """Solver state between steps; tubes are immutable so copies are cheap."""

    tube: Tube
    t: float
    gamma: float
    step_count: int = 0
    last_vmax: float = 0.0
    escalated: bool = False
    violations: int = 0
    degree: int = 3

    def __post_init__(self):
        gmin = gamma_cpm(self.tube.spec.d, self.degree, self.tube.spec.dx)
        if self.gamma < gmin - 1e-12 * gmin:
            raise ConfigError(f"gamma {self.gamma} below stencil-support minimum {gmin}")


def initialize_state(spec: GridSpec, surface, model: ModelSpec | None = None,
                     initial=None, degree: int = 3, gamma: float | None = None) -> CoupledState:
    """Build the tube around the seed surface and extend initial values onto it."""
    if gamma is None:
        gamma = gamma_cpm(spec.d, degree, spec.dx)
    nf = model.n_fields if model is not None else 0
    tube = build_tube(spec, surface.closest_point_batch, gamma, n_fields=nf)
    if nf and initial is not None:
        vals = np.asarray(initial(tube.foot), dtype=np.float64)
        if vals.ndim == 1:
            vals = vals[:, None]
        tube = tube.replace(fields=np.ascontiguousarray(vals))
    if nf:
        check_stencil_margin(tube, 2)
    return CoupledState(tube=tube, t=0.0, gamma=float(gamma), degree=degree)


def gamma_policy(state: CoupledState, law: MotionLaw, dt: float) -> float:
    """Tube radius for the next step.

    Defaults to the stencil-support minimum; after a violation the radius
    grows by the per-step footpoint travel bound dt * vmax and does not
    revert for the rest of the run.
    """
    spec = state.tube.spec
    base = gamma_cpm(spec.d, state.degree, spec.dx)
    if not state.escalated:
        return base
    return max(base + dt * state.last_vmax, state.gamma)


def _sample_solution_at_footpoints(tube: Tube, degree: int) -> np.ndarray:
    vals, missing = interp_batch(tube.spec, tube.slot_map, tube.fields, tube.foot, degree)
    if np.any(missing):
        bad = int(np.argmax(missing))
        raise IncompleteTubeError(
            f"solution sample stencil incomplete at node {tuple(tube.idx[bad])}",
            node=tuple(tube.idx[bad]),
        )
    return vals[:, 0]


def _attempt_step(state: CoupledState, model: ModelSpec, law: MotionLaw, dt: float,
                  params: ResampleParams, topology: bool, consistency: bool):
    # PDE evolution on the frozen tube
    tube1 = cpm_step(state.tube, model, law, state.t, dt, degree=state.degree)
    # surface motion: velocity needs the solution at (pre-move) footpoints
    u_fp = None
    if law.needs_solution and tube1.n_fields:
        u_fp = _sample_solution_at_footpoints(tube1, state.degree)
    tube2 = move_footpoints(tube1, law, state.t, dt, u_samples=u_fp)
    vmax = tube2.last_vmax
    tube3 = resample(tube2, params, topology=topology, consistency=consistency)
    tube4 = update_tube(
        tube3, state.gamma, params, topology=topology, consistency=consistency,
        field_init=(tube3.slot_map, tube3.fields), degree=state.degree,
    )
    return dc_replace(
        state, tube=tube4, t=state.t + dt, step_count=state.step_count + 1,
        last_vmax=vmax,
    )


def expand_tube(state: CoupledState, new_gamma: float, params: ResampleParams,
                consistency: bool = False) -> CoupledState:
    """Regrow the current tube out to a larger radius (field values extended)."""
    tube = update_tube(
        state.tube, new_gamma, params, topology=False, consistency=consistency,
        field_init=(state.tube.slot_map, state.tube.fields), degree=state.degree,
    )
    return dc_replace(state, tube=tube, gamma=float(new_gamma), escalated=True,
                      violations=state.violations + 1)


def coupled_step(state: CoupledState, model: ModelSpec, law: MotionLaw, dt: float,
                 params: ResampleParams, topology: bool = False,
                 consistency: bool = False) -> CoupledState:
    """One full step; on a tube violation, widen the tube and retry once."""
    try:
        return _attempt_step(state, model, law, dt, params, topology, consistency)
    except IncompleteTubeError as e:
        spec = state.tube.spec
        base = gamma_cpm(spec.d, state.degree, spec.dx)
        new_gamma = max(base + dt * state.last_vmax, state.gamma + spec.dx)
        logger.warning(
            "tube violation at step %d (t=%.6g, node %s): widening gamma %.6g -> %.6g",
            state.step_count, state.t, e.node, state.gamma, new_gamma,
        )
        widened = expand_tube(state, new_gamma, params, consistency=consistency)
        try:
            return _attempt_step(widened, model, law, dt, params, topology, consistency)
        except IncompleteTubeError as e2:
            raise NumericalFault(
                f"repeated tube violation in step {state.step_count} "
                f"(t={state.t}, node {e2.node})"
            ) from e2


def geometric_step(state: CoupledState, law: MotionLaw, dt: float,
                   params: ResampleParams, topology: bool = False,
                   consistency: bool = False) -> CoupledState:
    """Surface motion only (no PDE): move, resample, regrow/trim the tube."""
    tube2 = move_footpoints(state.tube, law, state.t, dt)
    vmax = tube2.last_vmax
    tube3 = resample(tube2, params, topology=topology, consistency=consistency)
    tube4 = update_tube(tube3, state.gamma, params, topology=topology,
                        consistency=consistency, field_init=None)
    return dc_replace(state, tube=tube4, t=state.t + dt,
                      step_count=state.step_count + 1, last_vmax=vmax)
