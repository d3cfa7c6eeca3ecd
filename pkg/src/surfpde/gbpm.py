"""Modified grid based particle tracking of the moving surface.

Each active grid node owns a footpoint (its closest surface point).  A
time step moves every footpoint with the surface velocity and then
rebuilds a closest point representation:

* collect the m nearest footpoints to the node (minimum pairwise
  separation delta, optional normal-consistency filter);
* least-squares quadratic reconstruction in the frame of the nearest
  footpoint, Newton projection of the node onto it;
* the projection is rejected if the minimizer leaves the collected
  footprint or the curvature reaches 1/dx; instead of deactivating the
  node (the original scheme), an osculating circle/sphere through the
  nearest nondegenerate footpoints supplies the footpoint, so the tube
  stays complete;
* with topology control on, nodes whose collected normals disagree
  beyond the threshold are deactivated, which is what lets interfaces
  merge or split.

Finally the tube is regrown over freshly covered nodes and trimmed to
radius gamma.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from surfpde import _kernels as K
from surfpde.errors import IncompleteTubeError, NumericalFault, StarvationError
from surfpde.grid import GridSpec, Tube, make_tube
from surfpde.interp import interp_batch

logger = logging.getLogger(__name__)

_OFFSETS_CACHE = {}


@dataclass
class Footpoint:
    """A surface sample: position, outward unit normal, mean curvature."""

    position: np.ndarray
    normal: np.ndarray
    kappa: float

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.normal = np.asarray(self.normal, dtype=np.float64)
        self.kappa = float(self.kappa)


@dataclass
class ResampleParams:
    """Numeric knobs of the resampling pipeline.

    cos_collect is only consulted when the consistency filter is enabled
    (vortex-style flows where distinct surface segments approach);
    cos_topology only when topology control is on.
    """

    m: int
    delta: float
    cos_collect: float = 0.0                  # cos(pi/2)
    cos_topology: float = float(np.cos(3 * np.pi / 4))
    kappa_max: float = np.inf
    newton_tol: float = 1e-13
    newton_max_iter: int = 50

    @classmethod
    def defaults(cls, d: int, dx: float, **overrides) -> "ResampleParams":
        base = dict(
            m=6 if d == 2 else 20,
            delta=dx / 4 if d == 2 else dx / 2,
            cos_collect=0.0 if d == 2 else 0.5,
            cos_topology=float(np.cos(3 * np.pi / 4)),
            kappa_max=1.0 / dx,
            newton_tol=1e-10 * dx,
            newton_max_iter=50,
        )
        base.update(overrides)
        p = cls(**base)
        if p.m < d + 1:
            raise ValueError("m must be at least d+1")
        if p.m > K.ACC_MAX:
            raise ValueError(f"m capped at {K.ACC_MAX}")
        if p.delta <= 0:
            raise ValueError("delta must be positive")
        return p


@dataclass
class LocalFit:
    """Quadratic graph eta = Q(xi) in the frame of the nearest footpoint."""

    frame: np.ndarray    # rows: origin, normal, tangent(s)
    coeffs: np.ndarray   # 3 coefficients in 2D, 6 in 3D (unscaled)
    xi_lo: np.ndarray    # in-frame bounding box of the fitted footpoints
    xi_hi: np.ndarray
    d: int


def move_footpoints(tube: Tube, law, t: float, dt: float, u_samples=None) -> Tube:
    """Advance every footpoint one forward Euler step of dx/dt = v.

    Normals and curvatures are left untouched (stale until resampling).
    The realized maximum normal speed is stored on the result as
    ``last_vmax`` for tube-radius management.
    """
    from surfpde.motion import velocity

    u = u_samples if u_samples is not None else np.zeros(tube.n_active)
    v = velocity(law, tube.foot, tube.nrm, tube.kap, u, t)
    if not np.all(np.isfinite(v)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(v), axis=1))[0])
        raise NumericalFault(
            f"non-finite velocity at node {tuple(tube.idx[bad])} (t={t})"
        )
    vn = np.abs(np.einsum("nd,nd->n", v, tube.nrm))
    out = tube.replace(foot=tube.foot + dt * v, _nbr=tube._nbr)
    out.last_vmax = float(vn.max()) if len(vn) else 0.0
    return out


def _kernel_args(tube: Tube):
    return (
        tube.spec.dims, tube.spec.strides, tube.spec.origin, tube.spec.dx,
        tube.slot_map, tube.foot, tube.nrm,
    )


def collect(idx, tube: Tube, params: ResampleParams, consistency: bool = False):
    """The m closest footpoints to grid node ``idx``, nearest first.

    Raises StarvationError when fewer than d+1 admissible footpoints exist
    within the search range.
    """
    dims, strides, origin, dx, slot_map, foot, nrm = _kernel_args(tube)
    ci = np.asarray(idx, dtype=np.int64)
    acc, nacc, _ = K.collect_node(
        ci, dims, strides, origin, dx, slot_map, foot, nrm, tube.gamma,
        params.m, params.delta, params.cos_collect, consistency,
    )
    if nacc < tube.spec.d + 1:
        raise StarvationError(
            f"only {nacc} collectable footpoints near node {tuple(ci)}"
        )
    return [Footpoint(foot[s].copy(), nrm[s].copy(), float(tube.kap[s])) for s in acc[:nacc]]


def local_fit(fps, p) -> LocalFit:
    """Least-squares quadratic through footpoints, framed on the nearest one.

    ``fps`` must already be sorted nearest-first relative to p (collect's
    output order).
    """
    if not fps:
        raise ValueError("no footpoints to fit")
    d = len(fps[0].position)
    need = 3 if d == 2 else 6
    if len(fps) < need:
        raise ValueError(f"underdetermined fit: {len(fps)} footpoints, need {need}")
    foot = np.ascontiguousarray([fp.position for fp in fps], dtype=np.float64)
    nrm = np.ascontiguousarray([fp.normal for fp in fps], dtype=np.float64)
    acc = np.arange(len(fps), dtype=np.int64)
    frame = np.empty((d + 1, d))
    coeffs = np.empty(6)
    xi_lo = np.empty(2)
    xi_hi = np.empty(2)
    xi_ws = np.empty((max(len(fps), 1), 2))
    eta_ws = np.empty(max(len(fps), 1))
    if not K._fit_quadratic(acc, len(fps), foot, nrm, coeffs, frame, xi_lo,
                            xi_hi, xi_ws, eta_ws):
        raise ValueError("degenerate footpoint configuration (rank-deficient fit)")
    ncoef = 3 if d == 2 else 6
    return LocalFit(frame=frame, coeffs=coeffs[:ncoef].copy(),
                    xi_lo=xi_lo[: d - 1].copy(), xi_hi=xi_hi[: d - 1].copy(), d=d)


def project_newton(fit: LocalFit, p, params: ResampleParams):
    """Closest point on the local reconstruction to p.

    Returns (foot, normal, kappa, ok); ok is False when Newton fails to
    converge, the minimizer exits the fitted footprint, or |kappa| is at
    least the curvature cap.
    """
    d = fit.d
    coeffs = np.zeros(6)
    coeffs[: len(fit.coeffs)] = fit.coeffs
    xi_lo = np.zeros(2)
    xi_hi = np.zeros(2)
    xi_lo[: d - 1] = fit.xi_lo
    xi_hi[: d - 1] = fit.xi_hi
    fvec = np.empty(d)
    nvec = np.empty(d)
    kap, ok = K._project_from_fit(
        fit.frame, coeffs, xi_lo, xi_hi, np.asarray(p, dtype=np.float64), d,
        params.kappa_max, params.newton_tol, params.newton_max_iter, fvec, nvec,
    )
    return fvec, nvec, float(kap), bool(ok)


def osculating_circle(q1, q2, q3, p, ref=None, n0=None):
    """Footpoint on the circle through three points.

    Of the two distance-stationary candidates (minimizer and antipode),
    the one nearer ``ref`` (default: the minimizer) is chosen; the normal
    is oriented along ``n0`` when given, else outward from the center.
    Raises ValueError for collinear points.
    """
    q = np.ascontiguousarray([q1, q2, q3], dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    scale = max(1.0, float(np.max(np.abs(q))))
    foot = np.empty(2)
    nrm = np.empty(2)
    ref = p if ref is None else np.asarray(ref, dtype=np.float64)
    n0 = np.zeros(2) if n0 is None else np.asarray(n0, dtype=np.float64)
    kap, ok = K._osc_circle_raw(q, p, ref, n0, scale, foot, nrm)
    if not ok:
        raise ValueError("collinear points: no unique circle")
    if np.all(n0 == 0.0) and kap < 0:
        nrm, kap = -nrm, -kap
    return foot, nrm, float(kap)


def osculating_sphere(q1, q2, q3, q4, p, ref=None, n0=None):
    """Footpoint on the sphere through four points; kappa = ±2/R."""
    q = np.ascontiguousarray([q1, q2, q3, q4], dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    scale = max(1.0, float(np.max(np.abs(q))))
    foot = np.empty(3)
    nrm = np.empty(3)
    ref = p if ref is None else np.asarray(ref, dtype=np.float64)
    n0 = np.zeros(3) if n0 is None else np.asarray(n0, dtype=np.float64)
    kap, ok = K._osc_sphere_raw(q, p, ref, n0, scale, foot, nrm)
    if not ok:
        raise ValueError("coplanar points: no unique sphere")
    if np.all(n0 == 0.0) and kap < 0:
        nrm, kap = -nrm, -kap
    return foot, nrm, float(kap)


def _run_resample(tube: Tube, cand_idx, has_prev, prev_foot, prev_nrm,
                  params: ResampleParams, consistency: bool, topology: bool,
                  use_fallback: bool):
    dims, strides, origin, dx, slot_map, foot, nrm = _kernel_args(tube)
    nq = len(cand_idx)
    out_foot = np.empty((nq, tube.spec.d))
    out_nrm = np.empty((nq, tube.spec.d))
    out_kap = np.empty(nq)
    out_status = np.empty(nq, dtype=np.int64)
    K.resample_batch(
        np.ascontiguousarray(cand_idx, dtype=np.int64), has_prev, prev_foot,
        prev_nrm, dims, strides, origin, dx, slot_map, foot, nrm, tube.gamma,
        params.m, params.delta, params.cos_collect, consistency,
        params.cos_topology, topology, params.kappa_max, params.newton_tol,
        params.newton_max_iter, use_fallback,
        out_foot, out_nrm, out_kap, out_status,
    )
    return out_foot, out_nrm, out_kap, out_status


def resample(tube: Tube, params: ResampleParams, topology: bool = False,
             consistency: bool = False, use_fallback: bool = True) -> Tube:
    """Rebuild every footpoint as the closest point on the local reconstruction.

    With ``use_fallback`` (the default, modified scheme) every surviving
    node keeps a footpoint; rejected reconstructions fall back to the
    osculating circle/sphere.  ``use_fallback=False`` restores the
    original deactivate-on-rejection behaviour for comparison runs.
    """
    has_prev = np.ones(tube.n_active, dtype=np.bool_)
    out_foot, out_nrm, out_kap, status = _run_resample(
        tube, tube.idx, has_prev, tube.foot, tube.nrm, params, consistency,
        topology, use_fallback,
    )
    # orientation continuity with each node's previous normal
    flip = np.einsum("nd,nd->n", out_nrm, tube.nrm) < 0.0
    out_nrm[flip] *= -1.0
    out_kap[flip] *= -1.0
    keep = status <= K.OK_FALLBACK
    stats = {
        "fallback": int(np.sum(status == K.OK_FALLBACK)),
        "dropped_topology": int(np.sum(status == K.DROP_TOPOLOGY)),
        "dropped_starved": int(np.sum(status == K.DROP_STARVED)),
    }
    if stats["dropped_starved"]:
        logger.debug("resample: %d nodes deactivated (starved/degenerate)",
                     stats["dropped_starved"])
    new = make_tube(
        tube.spec, tube.gamma, tube.lin[keep], out_foot[keep], out_nrm[keep],
        out_kap[keep], tube.fields[keep],
    )
    new.resample_stats = stats
    return new


def _shell_candidates(tube: Tube) -> np.ndarray:
    """Inactive in-range nodes adjacent to the active set (sorted linear)."""
    spec = tube.spec
    key = (spec.d,)
    offs = _OFFSETS_CACHE.get(key)
    if offs is None:
        from itertools import product

        offs = np.array(
            [o for o in product((-1, 0, 1), repeat=spec.d) if any(o)], dtype=np.int64
        )
        _OFFSETS_CACHE[key] = offs
    cand = []
    for off in offs:
        nb = tube.idx + off
        ok = np.all((nb >= 0) & (nb < spec.dims), axis=1)
        cand.append(spec.ravel(nb[ok]))
    lin = np.unique(np.concatenate(cand))
    return lin[tube.slot_map[lin] < 0]


def update_tube(tube: Tube, gamma: float, params: ResampleParams,
                topology: bool = False, consistency: bool = False,
                use_fallback: bool = True, field_init=None, degree: int = 3) -> Tube:
    """Regrow the tube over newly covered nodes and trim to radius gamma.

    Activation repeats until no adjacent node lands within gamma, so the
    tube is complete even when a step moves the surface by more than one
    cell.  ``field_init`` is the frozen (slot_map, fields) snapshot used
    to initialize new nodes by closest point extension; new nodes whose
    stencil leaves that snapshot raise IncompleteTubeError, the trigger
    for tube-radius escalation.
    """
    spec = tube.spec
    current = tube.replace(gamma=float(gamma))
    added_stats = {"activated": 0, "fallback": 0}
    for _ in range(64):
        shell = _shell_candidates(current)
        if len(shell) == 0:
            break
        idx = spec.unravel(shell)
        has_prev = np.zeros(len(shell), dtype=np.bool_)
        dummy = np.zeros((len(shell), spec.d))
        f, nm, kp, status = _run_resample(
            current, idx, has_prev, dummy, dummy, params, consistency,
            topology, use_fallback,
        )
        pos = spec.positions(idx)
        dist = np.linalg.norm(pos - f, axis=1)
        keep = (status <= K.OK_FALLBACK) & (dist <= gamma)
        if not np.any(keep):
            break
        shell, f, nm, kp = shell[keep], f[keep], nm[keep], kp[keep]
        added_stats["activated"] += len(shell)
        added_stats["fallback"] += int(np.sum(status[keep] == K.OK_FALLBACK))
        if field_init is not None:
            src_slot_map, src_fields = field_init
            vals, missing = interp_batch(spec, src_slot_map, src_fields, f, degree)
            if np.any(missing):
                bad = spec.unravel(shell[np.argmax(missing)])
                raise IncompleteTubeError(
                    "field initialization stencil incomplete for newly "
                    f"activated node {tuple(bad)}", node=tuple(bad),
                )
        else:
            vals = np.zeros((len(shell), current.n_fields))
        current = make_tube(
            spec, gamma,
            np.concatenate([current.lin, shell]),
            np.vstack([current.foot, f]),
            np.vstack([current.nrm, nm]),
            np.concatenate([current.kap, kp]),
            np.vstack([current.fields, vals]),
        )
    else:
        raise NumericalFault("tube activation failed to settle in 64 sweeps")
    # trim nodes that drifted outside the tube radius
    dist = np.linalg.norm(current.pos - current.foot, axis=1)
    keep = dist <= gamma
    out = make_tube(
        spec, gamma, current.lin[keep], current.foot[keep], current.nrm[keep],
        current.kap[keep], current.fields[keep],
    )
    out.update_stats = added_stats
    return out
