"""Experiment runner and convergence/diagnostic analytics.

Outputs are plain CSV (17 significant digits, fixed column order, so
reruns diff byte-identically) plus point-cloud snapshots:

* errors.csv      dx, t, max_abs_error
* eoc.csv         dx, t, eoc           (finer dx of each refinement pair)
* radius.csv      t, mean, stddev
* components.csv  t, count
* vmax.csv        t, vmax              (max |v.n| over footpoints per step)
* snapshot_*.txt  one deduplicated footpoint per row:
                  position, normal, kappa, field values
"""

from __future__ import annotations

import dataclasses
import logging
import time
from pathlib import Path

import numpy as np

from surfpde.config import ExperimentConfig
from surfpde.coupled import (
    CoupledState,
    coupled_step,
    gamma_policy,
    geometric_step,
    initialize_state,
)
from surfpde.cpm import gamma_cpm
from surfpde.errors import ConfigError
from surfpde.gbpm import ResampleParams
from surfpde.grid import GridSpec, Tube

logger = logging.getLogger(__name__)

_TIME_EPS = 1e-9


@dataclasses.dataclass
class ErrorRecord:
    t: float
    max_abs_error: float
    dx: float


def max_error(tube: Tube, exact, t: float, field: int = 0) -> float:
    """Max-norm difference between nodal values and the surface solution.

    The analytic solution is a surface function; it is evaluated at each
    node's footpoint.
    """
    vals = np.asarray(exact(tube.foot, t), dtype=np.float64)
    return float(np.max(np.abs(vals - tube.fields[:, field])))


def eoc(e_coarse: float, e_fine: float) -> float:
    """Estimated order of convergence under dx halving; NaN if degenerate."""
    if e_coarse <= 0.0 or e_fine <= 0.0:
        return float("nan")
    return float(np.log2(e_coarse / e_fine))


def dedup_footpoints(tube: Tube, tol: float | None = None):
    """Cluster footpoints to tol (default dx/10); first member represents."""
    if tol is None:
        tol = tube.spec.dx / 10.0
    keys = np.round(tube.foot / tol).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return np.sort(first)


def mean_radius(tube: Tube, tol: float | None = None):
    """Mean and population stddev of deduplicated footpoint distances
    from their centroid."""
    if tube.n_active == 0:
        raise ConfigError("empty tube has no radius")
    rep = dedup_footpoints(tube, tol)
    pts = tube.foot[rep]
    centroid = pts.mean(axis=0)
    r = np.linalg.norm(pts - centroid, axis=1)
    return float(r.mean()), float(r.std())


def component_count(tube: Tube, cos_threshold: float | None = None) -> int:
    """Connected components of the grid-adjacency graph of active nodes.

    Edges join grid-adjacent nodes whose footpoint normals agree
    (n . n' > cos_threshold, default cos(3*pi/4)), so two nearby but
    oppositely oriented interface segments stay separate components.
    """
    from itertools import product

    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    if cos_threshold is None:
        cos_threshold = float(np.cos(3 * np.pi / 4))
    n = tube.n_active
    if n == 0:
        return 0
    spec = tube.spec
    rows = []
    cols = []
    offsets = [o for o in product((-1, 0, 1), repeat=spec.d) if any(o)]
    offsets = [o for o in offsets if o > tuple([0] * spec.d)]  # half-space, no dups
    for off in offsets:
        nb = tube.idx + np.array(off, dtype=np.int64)
        ok = np.all((nb >= 0) & (nb < spec.dims), axis=1)
        slot2 = np.full(n, -1, dtype=np.int64)
        slot2[ok] = tube.slot_map[spec.ravel(nb[ok])]
        valid = slot2 >= 0
        a = np.flatnonzero(valid)
        b = slot2[valid]
        dots = np.einsum("nd,nd->n", tube.nrm[a], tube.nrm[b])
        keep = dots > cos_threshold
        rows.append(a[keep])
        cols.append(b[keep])
    rows = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, _ = connected_components(graph, directed=False)
    return int(ncomp)


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def write_csv(path: Path, header: str, rows) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(_fmt(v) if not isinstance(v, int) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_snapshot(path: Path, tube: Tube, t: float) -> None:
    rep = dedup_footpoints(tube)
    cols = [tube.foot[rep], tube.nrm[rep], tube.kap[rep, None]]
    if tube.n_fields:
        cols.append(tube.fields[rep])
    data = np.hstack(cols)
    lines = [f"# t = {_fmt(t)}  columns: position normal kappa fields"]
    for row in data:
        lines.append(" ".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def build_params(config: ExperimentConfig) -> ResampleParams:
    d = config.d
    over = {}
    if config.m is not None:
        over["m"] = config.m
    if config.delta_factor is not None:
        over["delta"] = config.delta_factor * config.dx
    if config.collect_angle_deg is not None:
        over["cos_collect"] = float(np.cos(np.deg2rad(config.collect_angle_deg)))
    over["cos_topology"] = float(np.cos(np.deg2rad(config.topology_angle_deg)))
    return ResampleParams.defaults(d, config.dx, **over)


def _initial_state(config: ExperimentConfig) -> CoupledState:
    spec = GridSpec.from_bounds(config.lo, config.hi, config.dx)
    gamma = config.gamma_fixed
    if gamma is None:
        gamma = gamma_cpm(spec.d, config.degree, config.dx)
    if config.mode == "coupled":
        return initialize_state(spec, config.surface, config.model,
                                config.initial, config.degree, gamma)
    return initialize_state(spec, config.surface, None, None, config.degree, gamma)


def run(config: ExperimentConfig, outdir=None):
    """Execute one experiment; write CSV/snapshot outputs; return a summary."""
    config.validate()
    t_start = time.time()
    out = Path(outdir or config.outdir or Path("out") / config.name)
    out.mkdir(parents=True, exist_ok=True)
    params = build_params(config)
    state = _initial_state(config)
    dt = config.dt

    events = sorted(set(
        [round(t, 15) for t in config.errors_times]
        + [round(t, 15) for t in config.snapshot_times]
        + [config.t_final]
    ))
    err_times = set(round(t, 15) for t in config.errors_times)
    snap_times = set(round(t, 15) for t in config.snapshot_times)

    errors = []
    radius = []
    comps = []
    vmaxs = []
    n_snap = 0

    def _near(t, tset):
        return any(abs(t - te) <= _TIME_EPS * max(1.0, abs(te)) for te in tset)

    def _record(st, force=False):
        nonlocal n_snap
        k = st.step_count
        if config.radius_every and (force or k % config.radius_every == 0):
            m, s = mean_radius(st.tube)
            if not radius or radius[-1][0] != st.t:
                radius.append((st.t, m, s))
        if config.components_every and (force or k % config.components_every == 0):
            c = component_count(st.tube, float(np.cos(np.deg2rad(config.topology_angle_deg))))
            if not comps or comps[-1][0] != st.t:
                comps.append((st.t, c))
        if config.vmax_every and k > 0 and (force or k % config.vmax_every == 0):
            if not vmaxs or vmaxs[-1][0] != st.t:
                vmaxs.append((st.t, st.last_vmax))
        if _near(st.t, snap_times):
            write_snapshot(out / f"snapshot_{n_snap:03d}.txt", st.tube, st.t)
            n_snap += 1
        if _near(st.t, err_times) and config.exact is not None:
            errors.append(ErrorRecord(st.t, max_error(st.tube, config.exact, st.t), config.dx))

    _record(state, force=True)
    next_log = time.time() + 30.0
    while state.t < config.t_final - _TIME_EPS * max(1.0, config.t_final):
        gamma = gamma_policy(state, config.law, dt) if config.gamma_fixed is None else config.gamma_fixed
        if gamma > state.gamma:
            from surfpde.coupled import expand_tube

            state = expand_tube(state, gamma, params, consistency=config.consistency)
        step_dt = dt
        for te in events:
            if state.t + _TIME_EPS < te and te < state.t + dt * (1.0 + 1e-9):
                step_dt = te - state.t
                break
        if config.mode == "coupled":
            state = coupled_step(state, config.model, config.law, step_dt, params,
                                 topology=config.topology,
                                 consistency=config.consistency)
        else:
            state = geometric_step(state, config.law, step_dt, params,
                                   topology=config.topology,
                                   consistency=config.consistency)
        _record(state)
        if time.time() > next_log:
            logger.info("%s: step %d t=%.6g n_active=%d", config.name,
                        state.step_count, state.t, state.tube.n_active)
            next_log = time.time() + 30.0
    _record(state, force=True)

    if errors:
        write_csv(out / "errors.csv", "dx,t,max_abs_error",
                  [(e.dx, e.t, e.max_abs_error) for e in errors])
    if radius:
        write_csv(out / "radius.csv", "t,mean,stddev", radius)
    if comps:
        write_csv(out / "components.csv", "t,count",
                  [(t, int(c)) for t, c in comps])
    if vmaxs:
        write_csv(out / "vmax.csv", "t,vmax", vmaxs)

    summary = {
        "name": config.name,
        "dx": config.dx,
        "steps": state.step_count,
        "t": state.t,
        "n_active": state.tube.n_active,
        "violations": state.violations,
        "errors": [(e.t, e.max_abs_error) for e in errors],
        "radius": radius,
        "components": comps,
        "vmax": vmaxs,
        "state": state,
        "outdir": str(out),
        "wall_time": time.time() - t_start,
    }
    logger.info("%s done: %d steps, %d active nodes, %.1fs", config.name,
                state.step_count, state.tube.n_active, summary["wall_time"])
    return summary


def converge(config: ExperimentConfig, levels: int, outdir=None):
    """Run the experiment at dx, dx/2, ..., and tabulate errors + e.o.c."""
    if not config.errors_times:
        raise ConfigError("convergence study needs errors_times in the config")
    out = Path(outdir or config.outdir or Path("out") / f"{config.name}_converge")
    out.mkdir(parents=True, exist_ok=True)
    table = {}
    summaries = []
    for lev in range(levels):
        cfg = config.with_dx(config.dx / 2**lev)
        s = run(cfg, out / f"dx_{cfg.dx:g}")
        summaries.append(s)
        table[cfg.dx] = dict(s["errors"])
    err_rows = []
    eoc_rows = []
    dxs = sorted(table, reverse=True)
    for dx in dxs:
        for t in sorted(table[dx]):
            err_rows.append((dx, t, table[dx][t]))
    for coarse, fine in zip(dxs, dxs[1:]):
        for t in sorted(table[fine]):
            if t in table[coarse]:
                eoc_rows.append((fine, t, eoc(table[coarse][t], table[fine][t])))
    write_csv(out / "errors.csv", "dx,t,max_abs_error", err_rows)
    write_csv(out / "eoc.csv", "dx,t,eoc", eoc_rows)
    return {"table": table, "eoc": eoc_rows, "summaries": summaries, "outdir": str(out)}
