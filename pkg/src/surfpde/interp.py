"""Tensor-product barycentric Lagrange interpolation on the grid.

Degree-p interpolation uses the (p+1)^d block of nodes around the query's
cell.  For equispaced nodes the barycentric node weights are the exact
integers (-1)^j C(p, j); evaluation weights per axis are w_j / (s - j)
normalized to unit sum.  Two guards keep the formula robust:

* queries landing exactly on a grid line short-circuit that axis to a
  one-hot weight vector (avoids the 0/0 in the barycentric form);
* values are combined as f0 + sum(alpha * (f - f0)) around the block's
  central node value f0, which preserves constant fields to the last bit
  no matter how many times the interpolant is applied.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from surfpde.errors import ConfigError, IncompleteTubeError
from surfpde.grid import GridSpec, Tube

_INTERP_BLOCK = 1 << 16


class StencilMarginError(ConfigError):
    """Query too close to the grid boundary for a full stencil."""


def bary_weights(p: int) -> np.ndarray:
    """Equispaced barycentric node weights, exact in integer form."""
    if p < 1:
        raise ConfigError("interpolation degree must be >= 1")
    return np.array([(-1.0) ** j * comb(p, j) for j in range(p + 1)])


@dataclass
class InterpStencil:
    base: np.ndarray          # (d,) lowest corner of the (p+1)^d block
    p: int
    axis_weights: np.ndarray  # (d, p+1) normalized evaluation weights

    def nodes(self):
        """Multi-indices of the block, lexicographic in the offsets."""
        from itertools import product

        d = len(self.base)
        return [tuple(self.base + np.array(off)) for off in product(range(self.p + 1), repeat=d)]


def _axis_weights(s: np.ndarray, p: int, w: np.ndarray):
    """Per-axis bases and normalized weights for fractional coords s."""
    f = np.floor(s).astype(np.int64)
    base = f - (p - 1) // 2
    t = s[:, None] - (base[:, None] + np.arange(p + 1))
    hit = t == 0.0
    anyhit = hit.any(axis=1)
    with np.errstate(divide="ignore"):
        a = w / t
    if np.any(anyhit):
        a[anyhit] = hit[anyhit].astype(np.float64)
    a /= a.sum(axis=1, keepdims=True)
    return base, a, anyhit


def stencil_for(spec: GridSpec, x, p: int = 3) -> InterpStencil:
    """Stencil block and per-axis weights for a single query point."""
    x = np.asarray(x, dtype=np.float64)
    s = (x - spec.origin) / spec.dx
    bases = np.empty(spec.d, dtype=np.int64)
    axw = np.empty((spec.d, p + 1))
    for k in range(spec.d):
        b, a, _ = _axis_weights(s[k : k + 1], p, bary_weights(p))
        bases[k] = b[0]
        axw[k] = a[0]
    if np.any(bases < 0) or np.any(bases + p > spec.dims - 1):
        raise StencilMarginError(
            f"query {x} lacks the (p+1)/2-node margin (base {bases.tolist()}, dims {spec.dims.tolist()})"
        )
    return InterpStencil(base=bases, p=p, axis_weights=axw)


def _tensor_weights(aws):
    if len(aws) == 2:
        a0, a1 = aws
        return (a0[:, :, None] * a1[:, None, :]).reshape(len(a0), -1)
    a0, a1, a2 = aws
    return (a0[:, :, None, None] * a1[:, None, :, None] * a2[:, None, None, :]).reshape(len(a0), -1)


def _block_offsets(spec: GridSpec, p: int):
    from itertools import product

    strides = spec.strides
    offs = np.array(
        [sum(j * s for j, s in zip(off, strides)) for off in product(range(p + 1), repeat=spec.d)],
        dtype=np.int64,
    )
    # the cell's lower corner node, block offset (p-1)//2 per axis
    jc = (p - 1) // 2
    mult = (p + 1) ** np.arange(spec.d - 1, -1, -1)
    center = int(np.sum(jc * mult))
    return offs, center


def interp_batch(spec: GridSpec, slot_map: np.ndarray, fields: np.ndarray, X: np.ndarray, p: int = 3):
    """Interpolate all fields at query points X.

    Returns (values (n, nf), missing (n,)) where missing marks queries
    whose stencil touched an inactive node; values there are NaN.
    Raises StencilMarginError when a query has no full block inside the
    grid at all.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n, d = X.shape
    nf = fields.shape[1]
    w = bary_weights(p)
    offs, center = _block_offsets(spec, p)
    vals = np.empty((n, nf))
    missing = np.zeros(n, dtype=bool)
    strides = spec.strides
    for lo in range(0, n, _INTERP_BLOCK):
        hi = min(lo + _INTERP_BLOCK, n)
        Xb = X[lo:hi]
        s = (Xb - spec.origin) / spec.dx
        bases = []
        aws = []
        allhit = np.ones(hi - lo, dtype=bool)
        for k in range(d):
            b, a, h = _axis_weights(s[:, k], p, w)
            bases.append(b)
            aws.append(a)
            allhit &= h
        bases = np.stack(bases, axis=1)
        if np.any(bases < 0) or np.any(bases + p > spec.dims - 1):
            bad = np.argmax(np.any((bases < 0) | (bases + p > spec.dims - 1), axis=1))
            raise StencilMarginError(
                f"interpolation point {Xb[bad]} too close to the grid boundary"
            )
        lin_base = bases @ strides
        slots = slot_map[lin_base[:, None] + offs[None, :]]
        miss = np.any(slots < 0, axis=1)
        tw = _tensor_weights(aws)
        fv = fields[slots]                      # (nb, K, nf); garbage where miss
        f0 = fields[slots[:, center]]           # (nb, nf)
        out = f0 + np.einsum("nk,nkf->nf", tw, fv - f0[:, None, :])
        if np.any(allhit):
            # exact node hits: return the nodal value bit-for-bit
            k_hit = np.argmax(tw[allhit] == 1.0, axis=1)
            out[allhit] = fields[slots[allhit, k_hit]]
        out[miss] = np.nan
        vals[lo:hi] = out
        missing[lo:hi] = miss
    return vals, missing


def interpolate(tube: Tube, field_id: int, x, p: int = 3) -> float:
    """Value of one nodal field at point x inside the tube."""
    if not (0 <= field_id < tube.n_fields):
        raise IndexError(f"field {field_id} not in tube with {tube.n_fields} fields")
    vals, missing = interp_batch(tube.spec, tube.slot_map, tube.fields, np.asarray(x)[None, :], p)
    if missing[0]:
        raise IncompleteTubeError(
            f"interpolation stencil at {np.asarray(x)} touches an inactive node", node=np.asarray(x)
        )
    return float(vals[0, field_id])
