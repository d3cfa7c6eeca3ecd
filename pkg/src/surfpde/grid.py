"""Uniform Cartesian grid bookkeeping and computational-tube state.

The solver's domain is the *computational tube*: every grid node within
Euclidean distance ``gamma`` of the surface.  Each active node stores its
footpoint (closest surface point with unit normal and mean curvature) and
the nodal field values.  Active nodes live in flat struct-of-arrays
storage ordered by flattened grid index, with a dense node -> slot map for
O(1) membership tests; this keeps iteration order deterministic and the
hot kernels simple.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from surfpde.errors import ConfigError

# Nodes are processed in blocks during full-grid scans to bound memory.
_SCAN_BLOCK = 1 << 18


@dataclass
class GridSpec:
    """Uniform grid: node i sits at ``origin + i*dx`` componentwise."""

    origin: np.ndarray
    dx: float
    dims: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.dims = np.asarray(self.dims, dtype=np.int64)
        self.dx = float(self.dx)
        if self.dx <= 0.0:
            raise ConfigError("grid spacing must be positive")
        if self.origin.ndim != 1 or self.dims.shape != self.origin.shape:
            raise ConfigError("origin and dims must be vectors of equal length")
        if self.d not in (2, 3):
            raise ConfigError(f"dimension must be 2 or 3, got {self.d}")
        if np.any(self.dims < 2):
            raise ConfigError("need at least 2 nodes per axis")

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.dims))

    @property
    def strides(self) -> np.ndarray:
        """Row-major strides so that ``lin = idx @ strides``."""
        s = np.ones(self.d, dtype=np.int64)
        for k in range(self.d - 2, -1, -1):
            s[k] = s[k + 1] * self.dims[k + 1]
        return s

    @classmethod
    def from_bounds(cls, lo, hi, dx) -> "GridSpec":
        """Smallest grid with spacing dx whose span covers [lo, hi]."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if np.any(hi <= lo):
            raise ConfigError("upper bounds must exceed lower bounds")
        dims = np.ceil((hi - lo) / dx - 1e-12).astype(np.int64) + 1
        return cls(origin=lo, dx=dx, dims=dims)

    def in_range(self, idx) -> bool:
        idx = np.asarray(idx)
        return bool(np.all(idx >= 0) and np.all(idx < self.dims))

    def positions(self, idx: np.ndarray) -> np.ndarray:
        """Node positions for an (n, d) integer index array."""
        return self.origin + np.asarray(idx, dtype=np.float64) * self.dx

    def ravel(self, idx: np.ndarray) -> np.ndarray:
        return np.asarray(idx, dtype=np.int64) @ self.strides

    def unravel(self, lin: np.ndarray) -> np.ndarray:
        lin = np.asarray(lin, dtype=np.int64)
        out = np.empty(lin.shape + (self.d,), dtype=np.int64)
        rem = lin
        for k, s in enumerate(self.strides):
            out[..., k] = rem // s
            rem = rem % s
        return out


def node_position(spec: GridSpec, idx) -> np.ndarray:
    """Position of one grid node; raises IndexError when out of range."""
    idx = np.asarray(idx, dtype=np.int64)
    if not spec.in_range(idx):
        raise IndexError(f"node index {tuple(idx)} outside grid dims {tuple(spec.dims)}")
    return spec.origin + idx * spec.dx


def neighbors(idx, spec: GridSpec) -> list[tuple[int, ...]]:
    """In-range indices differing by at most one per axis (excluding idx).

    Offsets are enumerated lexicographically so the order is deterministic.
    """
    idx = np.asarray(idx, dtype=np.int64)
    if not spec.in_range(idx):
        raise IndexError(f"node index {tuple(idx)} outside grid dims {tuple(spec.dims)}")
    out = []
    ranges = [(-1, 0, 1)] * spec.d
    from itertools import product

    for off in product(*ranges):
        if all(o == 0 for o in off):
            continue
        cand = idx + np.array(off, dtype=np.int64)
        if spec.in_range(cand):
            out.append(tuple(int(c) for c in cand))
    return out


@dataclass
class Tube:
    """Active-node state: geometry (footpoints) plus nodal field values.

    Arrays are ordered by ascending flattened grid index.  Treat instances
    as frozen: the stepping routines always build a new Tube (sharing
    unchanged arrays) instead of mutating one in place, so saved states
    stay valid for step retries.
    """

    spec: GridSpec
    gamma: float
    lin: np.ndarray          # (n,)  flattened indices, sorted ascending
    idx: np.ndarray          # (n, d) multi-indices
    foot: np.ndarray         # (n, d) footpoint positions
    nrm: np.ndarray          # (n, d) outward unit normals
    kap: np.ndarray          # (n,)  mean curvatures (sum-of-principal convention)
    fields: np.ndarray       # (n, n_fields)
    slot_map: np.ndarray     # (spec.n_nodes,) int32, node -> slot or -1
    _nbr: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_active(self) -> int:
        return len(self.lin)

    @property
    def n_fields(self) -> int:
        return self.fields.shape[1]

    @property
    def pos(self) -> np.ndarray:
        return self.spec.positions(self.idx)

    def slot_of(self, idx) -> int:
        """Slot of a node, or -1 when inactive."""
        idx = np.asarray(idx, dtype=np.int64)
        if not self.spec.in_range(idx):
            raise IndexError(f"node index {tuple(idx)} outside grid")
        return int(self.slot_map[int(self.spec.ravel(idx))])

    def footpoint(self, idx):
        from surfpde.gbpm import Footpoint

        s = self.slot_of(idx)
        if s < 0:
            raise KeyError(f"node {tuple(np.asarray(idx))} is not active")
        return Footpoint(self.foot[s].copy(), self.nrm[s].copy(), float(self.kap[s]))

    def field_values(self, idx) -> np.ndarray:
        s = self.slot_of(idx)
        if s < 0:
            raise KeyError(f"node {tuple(np.asarray(idx))} is not active")
        return self.fields[s].copy()

    def active_indices(self) -> list[tuple[int, ...]]:
        return [tuple(int(v) for v in row) for row in self.idx]

    def replace(self, **kw) -> "Tube":
        data = dict(
            spec=self.spec, gamma=self.gamma, lin=self.lin, idx=self.idx,
            foot=self.foot, nrm=self.nrm, kap=self.kap, fields=self.fields,
            slot_map=self.slot_map,
        )
        data.update(kw)
        return Tube(**data)

    def axis_neighbor_slots(self) -> np.ndarray:
        """(n, 2d) slots of the +/- axis neighbors, -1 when inactive.

        Column order: (+ax0, -ax0, +ax1, -ax1, ...).  Cached per Tube;
        the cache never outlives a geometry change because stepping
        creates fresh Tube objects.
        """
        if self._nbr is None:
            d = self.spec.d
            n = self.n_active
            nbr = np.full((n, 2 * d), -1, dtype=np.int64)
            strides = self.spec.strides
            for ax in range(d):
                for sgn, col in ((1, 2 * ax), (-1, 2 * ax + 1)):
                    cand = self.idx[:, ax] + sgn
                    ok = (cand >= 0) & (cand < self.spec.dims[ax])
                    lin2 = self.lin + sgn * strides[ax]
                    nbr[ok, col] = self.slot_map[lin2[ok]]
            self._nbr = nbr
        return self._nbr


def _fresh_slot_map(spec: GridSpec, lin: np.ndarray) -> np.ndarray:
    slot_map = np.full(spec.n_nodes, -1, dtype=np.int32)
    slot_map[lin] = np.arange(len(lin), dtype=np.int32)
    return slot_map


def make_tube(spec: GridSpec, gamma: float, lin, foot, nrm, kap, fields) -> Tube:
    """Assemble a Tube from unordered per-node arrays (sorts by index)."""
    lin = np.asarray(lin, dtype=np.int64)
    order = np.argsort(lin, kind="stable")
    lin = lin[order]
    if len(lin) > 1 and np.any(np.diff(lin) == 0):
        raise ValueError("duplicate active nodes")
    return Tube(
        spec=spec,
        gamma=float(gamma),
        lin=lin,
        idx=spec.unravel(lin),
        foot=np.ascontiguousarray(foot[order], dtype=np.float64),
        nrm=np.ascontiguousarray(nrm[order], dtype=np.float64),
        kap=np.ascontiguousarray(kap[order], dtype=np.float64),
        fields=np.ascontiguousarray(fields[order], dtype=np.float64),
        slot_map=_fresh_slot_map(spec, lin),
    )


def build_tube(spec: GridSpec, cp, gamma: float, n_fields: int = 0) -> Tube:
    """Scan the whole grid and activate every node within gamma of the surface.

    ``cp`` maps an (n, d) array of query points to (foot, normal, kappa)
    arrays (see surfaces.closest_point_batch).  The active set is exactly
    { idx : ||x_idx - cp(x_idx)||_2 <= gamma }.
    """
    if gamma <= 0.0:
        raise ConfigError("tube radius must be positive")
    N = spec.n_nodes
    lins = []
    foots = []
    nrms = []
    kaps = []
    for start in range(0, N, _SCAN_BLOCK):
        lin_blk = np.arange(start, min(start + _SCAN_BLOCK, N), dtype=np.int64)
        X = spec.positions(spec.unravel(lin_blk))
        foot, nrm, kap = cp(X)
        dist = np.linalg.norm(X - foot, axis=1)
        keep = dist <= gamma
        if np.any(keep):
            lins.append(lin_blk[keep])
            foots.append(foot[keep])
            nrms.append(nrm[keep])
            kaps.append(kap[keep])
    if not lins:
        raise ConfigError("no grid node within gamma of the surface (surface outside domain?)")
    lin = np.concatenate(lins)
    n = len(lin)
    return make_tube(
        spec, gamma, lin,
        np.concatenate(foots), np.concatenate(nrms), np.concatenate(kaps),
        np.zeros((n, n_fields), dtype=np.float64),
    )


def check_stencil_margin(tube: Tube, margin: int) -> None:
    """Fail loudly when active nodes sit too close to the domain boundary.

    ``margin`` nodes are required on every side so interpolation and
    difference stencils never leave the grid.
    """
    lo = tube.idx.min(axis=0)
    hi = tube.idx.max(axis=0)
    if np.any(lo < margin) or np.any(hi > tube.spec.dims - 1 - margin):
        raise ConfigError(
            "computational tube within %d nodes of the domain boundary; "
            "enlarge the embedding box (active index range %s..%s, dims %s)"
            % (margin, lo.tolist(), hi.tolist(), tube.spec.dims.tolist())
        )
