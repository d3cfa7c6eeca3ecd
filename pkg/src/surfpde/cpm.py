"""Closest point extension and explicit evolution of the embedding PDE.

The surface PDE

    u_t + V du/dn - V kappa u + div_S(u T) - div_S(D grad_S u) = f

(V, T: normal/tangential velocity parts) is advanced on the tube.  After
a closest point extension the solution is constant along normals, so
du/dn vanishes, surface gradients become standard gradients, and the
embedding update at each node reduces to

    u <- u + dt * ( -V kappa u - div(u T) + D lap(u) + f )

with second-order centered differences for lap and div.  V, kappa, n and
T are taken from the node's footpoint record, which extends them
constant along normals as the equivalence principles require; the sign
of the dilution term -V kappa u follows the curvature convention
kappa > 0 on convex-outward surfaces, so outward motion (V > 0) dilutes.
Extension and the Euler update are separate passes over frozen
snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from surfpde.errors import ConfigError, IncompleteTubeError, NumericalFault
from surfpde.grid import Tube
from surfpde.interp import interp_batch
from surfpde.motion import MotionLaw, velocity


@dataclass
class ModelSpec:
    """PDE coefficients: per-field diffusivity and optional source.

    ``source(x, t, fields)`` returns an (n, n_fields) array evaluated at
    footpoint positions; reaction couplings between fields (e.g. the
    two-species growth model) live inside it.
    """

    diffusivity: object = 1.0
    n_fields: int = 1
    source: object = None

    def __post_init__(self):
        D = np.atleast_1d(np.asarray(self.diffusivity, dtype=np.float64))
        if len(D) == 1:
            D = np.repeat(D, self.n_fields)
        if len(D) != self.n_fields or np.any(D <= 0):
            raise ConfigError("need one positive diffusivity per field")
        self.diffusivity = D


def gamma_cpm(d: int, p: int, dx: float) -> float:
    """Tube radius that keeps interpolation + differencing stencils active.

    Worst case, a needed node is (p+1)/2 cells from the closest point in
    every axis plus one more differencing cell in one axis.
    """
    if d not in (2, 3):
        raise ConfigError("dimension must be 2 or 3")
    if p < 1:
        raise ConfigError("interpolation degree must be >= 1")
    half = (p + 1) / 2.0
    return float(np.sqrt((d - 1) * half**2 + (1.0 + half) ** 2) * dx)


def extend(tube: Tube, field_id=None, degree: int = 3) -> Tube:
    """Replace nodal values with the field interpolated at each footpoint.

    The extended field is constant along surface normals (to interpolation
    accuracy).  A stencil touching an inactive node means tube-radius
    management failed and raises IncompleteTubeError.
    """
    vals, missing = interp_batch(tube.spec, tube.slot_map, tube.fields, tube.foot, degree)
    if np.any(missing):
        bad = int(np.argmax(missing))
        raise IncompleteTubeError(
            f"extension stencil incomplete at node {tuple(tube.idx[bad])} "
            f"(footpoint {tube.foot[bad]})", node=tuple(tube.idx[bad]),
        )
    if field_id is None:
        fields = vals
    else:
        fields = tube.fields.copy()
        fields[:, field_id] = vals[:, field_id]
    out = tube.replace(fields=fields, _nbr=tube._nbr)
    return out


def _stencil_data(tube: Tube):
    nbr = tube.axis_neighbor_slots()
    complete = np.all(nbr >= 0, axis=1)
    return nbr, complete


def laplacian_all(tube: Tube):
    """Centered second differences, all fields: (lap (n, nf), complete (n,))."""
    nbr, complete = _stencil_data(tube)
    dx2 = tube.spec.dx**2
    u = tube.fields
    lap = np.zeros_like(u)
    for ax in range(tube.spec.d):
        up = u[nbr[:, 2 * ax]]
        um = u[nbr[:, 2 * ax + 1]]
        lap += up + um - 2.0 * u
    lap /= dx2
    lap[~complete] = np.nan
    return lap, complete


def laplacian(tube: Tube, field_id: int, idx) -> float:
    """Standard Laplacian of one field at one node."""
    s = tube.slot_of(idx)
    if s < 0:
        raise KeyError(f"node {tuple(np.asarray(idx))} is not active")
    nbr = tube.axis_neighbor_slots()[s]
    if np.any(nbr < 0):
        raise IncompleteTubeError(
            f"difference stencil incomplete at node {tuple(np.asarray(idx))}",
            node=tuple(np.asarray(idx)),
        )
    u = tube.fields[:, field_id]
    acc = 0.0
    for ax in range(tube.spec.d):
        acc += u[nbr[2 * ax]] + u[nbr[2 * ax + 1]] - 2.0 * u[s]
    return float(acc / tube.spec.dx**2)


def rhs_all(tube: Tube, model: ModelSpec, law: MotionLaw, t: float):
    """Embedding right-hand side for all fields at all complete-stencil nodes.

    Returns (rhs (n, nf), complete (n,)).  Motion data is evaluated at
    footpoints; the solution sample a coupled law needs is the nodal
    value itself, which equals the footpoint sample on freshly extended
    fields.
    """
    u_fp = tube.fields[:, 0] if (law.needs_solution and tube.n_fields) else None
    v = velocity(law, tube.foot, tube.nrm, tube.kap, u_fp, t)
    V = np.einsum("nd,nd->n", v, tube.nrm)
    T = v - V[:, None] * tube.nrm
    nbr, complete = _stencil_data(tube)
    lap, _ = laplacian_all(tube)
    rhs = -V[:, None] * tube.kap[:, None] * tube.fields
    rhs += model.diffusivity[None, :] * lap
    # conservative tangential advection: centered differences of u*T
    two_dx = 2.0 * tube.spec.dx
    if np.any(T):
        for ax in range(tube.spec.d):
            prod = tube.fields * T[:, ax][:, None]
            rhs -= (prod[nbr[:, 2 * ax]] - prod[nbr[:, 2 * ax + 1]]) / two_dx
    if model.source is not None:
        rhs += model.source(tube.foot, t, tube.fields)
    rhs[~complete] = np.nan
    return rhs, complete


def embedding_rhs(tube: Tube, idx, model: ModelSpec, law: MotionLaw, t: float) -> np.ndarray:
    """Per-field embedding RHS at one node (complete stencil required)."""
    s = tube.slot_of(idx)
    if s < 0:
        raise KeyError(f"node {tuple(np.asarray(idx))} is not active")
    rhs, complete = rhs_all(tube, model, law, t)
    if not complete[s]:
        raise IncompleteTubeError(
            f"difference stencil incomplete at node {tuple(np.asarray(idx))}",
            node=tuple(np.asarray(idx)),
        )
    out = rhs[s]
    if not np.all(np.isfinite(out)):
        raise NumericalFault(f"non-finite RHS at node {tuple(np.asarray(idx))}")
    return out


def cpm_step(tube: Tube, model: ModelSpec, law: MotionLaw, t: float, dt: float,
             degree: int = 3) -> Tube:
    """One explicit step: closest point extension, then forward Euler.

    All fields advance together from the same time level.  Nodes at the
    very rim of the tube have no complete difference stencil; they keep
    their extended value, which is never read back by interpolation (the
    tube radius is chosen so interpolation only reaches interior nodes)
    and is refreshed by the next extension.
    """
    ext = extend(tube, degree=degree)
    rhs, complete = rhs_all(ext, model, law, t)
    fields = ext.fields.copy()
    fields[complete] += dt * rhs[complete]
    if not np.all(np.isfinite(fields)):
        bad = int(np.argmax(~np.all(np.isfinite(fields), axis=1)))
        raise NumericalFault(
            f"non-finite field after Euler update at node {tuple(ext.idx[bad])} (t={t})"
        )
    return ext.replace(fields=fields, _nbr=ext._nbr)
