"""Compiled per-node kernels for the footpoint resampling pipeline.

Everything here operates on the flat tube arrays (slot map, footpoint
positions/normals) so the whole resampling pass stays allocation-light.
Each node's result depends only on the frozen input snapshot, so the
per-node loop is order-independent (and safe to parallelize).
"""

import numpy as np
from numba import njit

# per-node resampling outcomes
OK_FIT = 0
OK_FALLBACK = 1
DROP_TOPOLOGY = 2
DROP_STARVED = 3

CAND_MAX = 1024
ACC_MAX = 64


@njit(cache=True)
def _greedy_select(px, foot, nrm, cand_slot, cand_d2, ncand, m, delta2,
                   cos_collect, use_cons, acc, acc_d2):
    """Accept candidates in distance order under separation/consistency rules.

    Returns (n_accepted, min normal dot vs the nearest accepted footpoint).
    """
    d = foot.shape[1]
    order = np.argsort(cand_d2[:ncand], kind="mergesort")
    nacc = 0
    min_dot = 1.0
    for oi in range(ncand):
        ci = order[oi]
        s = cand_slot[ci]
        if nacc > 0:
            s0 = acc[0]
            dot = 0.0
            for k in range(d):
                dot += nrm[s0, k] * nrm[s, k]
            if use_cons and dot <= cos_collect:
                continue
            okd = True
            for ai in range(nacc):
                sa = acc[ai]
                dd = 0.0
                for k in range(d):
                    t = foot[sa, k] - foot[s, k]
                    dd += t * t
                if dd < delta2:
                    okd = False
                    break
            if not okd:
                continue
            if dot < min_dot:
                min_dot = dot
        acc[nacc] = s
        acc_d2[nacc] = cand_d2[ci]
        nacc += 1
        if nacc == m:
            break
    return nacc, min_dot


@njit(cache=True)
def _collect(ci, px, dims, strides, slot_map, foot, nrm, dx, gamma, m,
             delta, cos_collect, use_cons, acc, acc_d2, cand_slot, cand_d2,
             msmall):
    """Gather the m closest footpoints to the grid point px.

    Active nodes are scanned in expanding Chebyshev rings around the node
    index ci.  The scan stops once the ring's node distance exceeds the
    m-th smallest candidate footpoint distance by a one-ring lookahead
    (footpoints essentially live on or next to their owner nodes), or
    once the radius passes the 2*gamma search bound.  One greedy pass in
    distance order then applies the separation/consistency rules; in the
    rare case that filtering leaves fewer than m accepted, the scan
    resumes outward.
    """
    d = dims.shape[0]
    ncand = 0
    nm = 0  # filled entries of msmall
    kmax = int(2.0 * gamma / dx) + 2
    if kmax > 14:
        kmax = 14
    delta2 = delta * delta
    nacc = 0
    min_dot = 1.0
    did_select = False
    for k in range(kmax + 1):
        ncand_old = ncand
        if d == 2:
            for di in range(-k, k + 1):
                ii = ci[0] + di
                if ii < 0 or ii >= dims[0]:
                    continue
                adi = di if di >= 0 else -di
                for dj in range(-k, k + 1):
                    adj = dj if dj >= 0 else -dj
                    if adi != k and adj != k:
                        continue
                    jj = ci[1] + dj
                    if jj < 0 or jj >= dims[1]:
                        continue
                    s = slot_map[ii * strides[0] + jj]
                    if s >= 0 and ncand < CAND_MAX:
                        t0 = foot[s, 0] - px[0]
                        t1 = foot[s, 1] - px[1]
                        cand_slot[ncand] = s
                        cand_d2[ncand] = t0 * t0 + t1 * t1
                        ncand += 1
        else:
            for di in range(-k, k + 1):
                ii = ci[0] + di
                if ii < 0 or ii >= dims[0]:
                    continue
                adi = di if di >= 0 else -di
                for dj in range(-k, k + 1):
                    jj = ci[1] + dj
                    if jj < 0 or jj >= dims[1]:
                        continue
                    adj = dj if dj >= 0 else -dj
                    inner2 = adi != k and adj != k
                    base2 = ii * strides[0] + jj * strides[1]
                    for dk in range(-k, k + 1):
                        adk = dk if dk >= 0 else -dk
                        if inner2 and adk != k:
                            continue
                        kk = ci[2] + dk
                        if kk < 0 or kk >= dims[2]:
                            continue
                        s = slot_map[base2 + kk]
                        if s >= 0 and ncand < CAND_MAX:
                            t0 = foot[s, 0] - px[0]
                            t1 = foot[s, 1] - px[1]
                            t2 = foot[s, 2] - px[2]
                            cand_slot[ncand] = s
                            cand_d2[ncand] = t0 * t0 + t1 * t1 + t2 * t2
                            ncand += 1
        # fold new candidates into the m-smallest tracker
        for i in range(ncand_old, ncand):
            d2 = cand_d2[i]
            if nm < m:
                j = nm
                while j > 0 and msmall[j - 1] > d2:
                    msmall[j] = msmall[j - 1]
                    j -= 1
                msmall[j] = d2
                nm += 1
            elif d2 < msmall[m - 1]:
                j = m - 1
                while j > 0 and msmall[j - 1] > d2:
                    msmall[j] = msmall[j - 1]
                    j -= 1
                msmall[j] = d2
        if did_select:
            # post-filter widening: retry the selection after each ring
            nacc, min_dot = _greedy_select(px, foot, nrm, cand_slot, cand_d2,
                                           ncand, m, delta2, cos_collect,
                                           use_cons, acc, acc_d2)
            if nacc == m:
                return nacc, min_dot
        elif nm == m:
            lim = k * dx
            if (lim * lim > msmall[m - 1]) or ncand >= 8 * m:
                nacc, min_dot = _greedy_select(px, foot, nrm, cand_slot, cand_d2,
                                               ncand, m, delta2, cos_collect,
                                               use_cons, acc, acc_d2)
                if nacc == m:
                    return nacc, min_dot
                did_select = True
        if ncand >= CAND_MAX:
            break
    return _greedy_select(px, foot, nrm, cand_slot, cand_d2, ncand, m, delta2,
                          cos_collect, use_cons, acc, acc_d2)


@njit(cache=True)
def _solve_small(A, b, n, tol):
    """Gaussian elimination with partial pivoting; returns False if rank-deficient."""
    for col in range(n):
        piv = col
        best = abs(A[col, col])
        for r in range(col + 1, n):
            if abs(A[r, col]) > best:
                best = abs(A[r, col])
                piv = r
        if best <= tol:
            return False
        if piv != col:
            for c in range(n):
                tmp = A[col, c]
                A[col, c] = A[piv, c]
                A[piv, c] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        for r in range(col + 1, n):
            f = A[r, col] / A[col, col]
            for c in range(col, n):
                A[r, c] -= f * A[col, c]
            b[r] -= f * b[col]
    for col in range(n - 1, -1, -1):
        s = b[col]
        for c in range(col + 1, n):
            s -= A[col, c] * b[c]
        b[col] = s / A[col, col]
    return True


@njit(cache=True)
def _fit_quadratic(acc, nacc, foot, nrm, coeffs, frame, xi_lo, xi_hi, xi, eta):
    """Least-squares quadratic graph in the frame of the nearest footpoint.

    2D: eta = c0 + c1 xi + c2 xi^2; 3D: eta = c0 + c1 x + c2 y + c3 x^2
    + c4 xy + c5 y^2.  Coordinates are scaled by the footprint size before
    forming normal equations, which keeps them well conditioned.
    Fills ``frame`` rows with (origin, normal, tangent(s)), the unscaled
    ``coeffs``, and the in-frame bounding box of the collected points.
    Returns False for a rank-deficient fit.
    """
    d = foot.shape[1]
    s0 = acc[0]
    # frame: origin q0, eta axis n0, tangent axes
    for k in range(d):
        frame[0, k] = foot[s0, k]
        frame[1, k] = nrm[s0, k]
    if d == 2:
        frame[2, 0] = -frame[1, 1]
        frame[2, 1] = frame[1, 0]
        ncoef = 3
    else:
        # tangent 1: most orthogonal coordinate axis, Gram-Schmidt
        jmin = 0
        amin = abs(frame[1, 0])
        for k in range(1, 3):
            a = abs(frame[1, k])
            if a < amin:
                amin = a
                jmin = k
        for k in range(3):
            frame[2, k] = -frame[1, jmin] * frame[1, k]
        frame[2, jmin] += 1.0
        nt = np.sqrt(frame[2, 0] ** 2 + frame[2, 1] ** 2 + frame[2, 2] ** 2)
        for k in range(3):
            frame[2, k] /= nt
        frame[3, 0] = frame[1, 1] * frame[2, 2] - frame[1, 2] * frame[2, 1]
        frame[3, 1] = frame[1, 2] * frame[2, 0] - frame[1, 0] * frame[2, 2]
        frame[3, 2] = frame[1, 0] * frame[2, 1] - frame[1, 1] * frame[2, 0]
        ncoef = 6
    nt_ax = d - 1
    h = 0.0
    for i in range(nacc):
        si = acc[i]
        e = 0.0
        for k in range(d):
            e += (foot[si, k] - frame[0, k]) * frame[1, k]
        eta[i] = e
        for ax in range(nt_ax):
            x = 0.0
            for k in range(d):
                x += (foot[si, k] - frame[0, k]) * frame[2 + ax, k]
            xi[i, ax] = x
            if abs(x) > h:
                h = abs(x)
    if h <= 0.0:
        return False
    for ax in range(nt_ax):
        lo = xi[0, ax]
        hi = xi[0, ax]
        for i in range(1, nacc):
            if xi[i, ax] < lo:
                lo = xi[i, ax]
            if xi[i, ax] > hi:
                hi = xi[i, ax]
        xi_lo[ax] = lo
        xi_hi[ax] = hi
    A = np.zeros((6, 6))
    rhs = np.zeros(6)
    row = np.empty(6)
    for i in range(nacc):
        if d == 2:
            x = xi[i, 0] / h
            row[0] = 1.0
            row[1] = x
            row[2] = x * x
        else:
            x = xi[i, 0] / h
            y = xi[i, 1] / h
            row[0] = 1.0
            row[1] = x
            row[2] = y
            row[3] = x * x
            row[4] = x * y
            row[5] = y * y
        for a in range(ncoef):
            rhs[a] += row[a] * eta[i]
            for bcol in range(ncoef):
                A[a, bcol] += row[a] * row[bcol]
    if not _solve_small(A, rhs, ncoef, 1e-12 * nacc):
        return False
    if d == 2:
        coeffs[0] = rhs[0]
        coeffs[1] = rhs[1] / h
        coeffs[2] = rhs[2] / (h * h)
    else:
        coeffs[0] = rhs[0]
        coeffs[1] = rhs[1] / h
        coeffs[2] = rhs[2] / h
        coeffs[3] = rhs[3] / (h * h)
        coeffs[4] = rhs[4] / (h * h)
        coeffs[5] = rhs[5] / (h * h)
    return True


@njit(cache=True)
def _newton_min_2d(coeffs, pxi, peta, span, tol, maxit):
    """Distance minimizer on eta = Q(xi) from xi = 0, with one restart."""
    for attempt in range(2):
        xi = 0.0 if attempt == 0 else pxi
        ok = False
        for _ in range(maxit):
            Q = coeffs[0] + coeffs[1] * xi + coeffs[2] * xi * xi
            Qp = coeffs[1] + 2.0 * coeffs[2] * xi
            g = (xi - pxi) + (Q - peta) * Qp
            H = 1.0 + Qp * Qp + (Q - peta) * 2.0 * coeffs[2]
            if H == 0.0:
                break
            step = -g / H
            xi += step
            if abs(xi) > 100.0 * span:
                break
            if abs(step) <= tol:
                ok = True
                break
        if ok:
            Q = coeffs[0] + coeffs[1] * xi + coeffs[2] * xi * xi
            Qp = coeffs[1] + 2.0 * coeffs[2] * xi
            H = 1.0 + Qp * Qp + (Q - peta) * 2.0 * coeffs[2]
            if H > 0.0:
                return xi, True
    return 0.0, False


@njit(cache=True)
def _newton_min_3d(coeffs, px1, px2, peta, span, tol, maxit):
    for attempt in range(2):
        x = 0.0 if attempt == 0 else px1
        y = 0.0 if attempt == 0 else px2
        ok = False
        for _ in range(maxit):
            Q = (coeffs[0] + coeffs[1] * x + coeffs[2] * y + coeffs[3] * x * x
                 + coeffs[4] * x * y + coeffs[5] * y * y)
            q1 = coeffs[1] + 2.0 * coeffs[3] * x + coeffs[4] * y
            q2 = coeffs[2] + coeffs[4] * x + 2.0 * coeffs[5] * y
            r = Q - peta
            g1 = (x - px1) + r * q1
            g2 = (y - px2) + r * q2
            H11 = 1.0 + q1 * q1 + r * 2.0 * coeffs[3]
            H12 = q1 * q2 + r * coeffs[4]
            H22 = 1.0 + q2 * q2 + r * 2.0 * coeffs[5]
            det = H11 * H22 - H12 * H12
            if det == 0.0:
                break
            s1 = -(H22 * g1 - H12 * g2) / det
            s2 = -(H11 * g2 - H12 * g1) / det
            x += s1
            y += s2
            if abs(x) > 100.0 * span or abs(y) > 100.0 * span:
                break
            if abs(s1) <= tol and abs(s2) <= tol:
                ok = True
                break
        if ok:
            Q = (coeffs[0] + coeffs[1] * x + coeffs[2] * y + coeffs[3] * x * x
                 + coeffs[4] * x * y + coeffs[5] * y * y)
            q1 = coeffs[1] + 2.0 * coeffs[3] * x + coeffs[4] * y
            q2 = coeffs[2] + coeffs[4] * x + 2.0 * coeffs[5] * y
            r = Q - peta
            H11 = 1.0 + q1 * q1 + r * 2.0 * coeffs[3]
            H12 = q1 * q2 + r * coeffs[4]
            H22 = 1.0 + q2 * q2 + r * 2.0 * coeffs[5]
            if H11 > 0.0 and H11 * H22 - H12 * H12 > 0.0:
                return x, y, True
    return 0.0, 0.0, False


@njit(cache=True)
def _project_from_fit(frame, coeffs, xi_lo, xi_hi, px, d, kappa_max,
                      newton_tol, newton_maxit, out_foot, out_nrm):
    """Newton projection of px onto the fitted graph plus acceptance checks.

    Returns (kappa, ok).  ok is False when Newton fails, the minimizer
    leaves the in-frame bounding box of the fitted footpoints, or the
    curvature magnitude reaches kappa_max.
    """
    peta = 0.0
    for k in range(d):
        peta += (px[k] - frame[0, k]) * frame[1, k]
    if d == 2:
        pxi = 0.0
        for k in range(2):
            pxi += (px[k] - frame[0, k]) * frame[2, k]
        span = max(abs(xi_lo[0]), abs(xi_hi[0])) + abs(pxi) + 1.0
        xi, conv = _newton_min_2d(coeffs, pxi, peta, span, newton_tol, newton_maxit)
        if not conv or not (xi_lo[0] <= xi <= xi_hi[0]):
            return 0.0, False
        Q = coeffs[0] + coeffs[1] * xi + coeffs[2] * xi * xi
        Qp = coeffs[1] + 2.0 * coeffs[2] * xi
        bb = np.sqrt(1.0 + Qp * Qp)
        kap = -2.0 * coeffs[2] / (bb * bb * bb)
        if abs(kap) >= kappa_max:
            return kap, False
        for k in range(2):
            out_foot[k] = frame[0, k] + xi * frame[2, k] + Q * frame[1, k]
            out_nrm[k] = (-Qp * frame[2, k] + frame[1, k]) / bb
        return kap, True
    px1 = 0.0
    px2 = 0.0
    for k in range(3):
        px1 += (px[k] - frame[0, k]) * frame[2, k]
        px2 += (px[k] - frame[0, k]) * frame[3, k]
    span = (max(abs(xi_lo[0]), abs(xi_hi[0]), abs(xi_lo[1]), abs(xi_hi[1]))
            + abs(px1) + abs(px2) + 1.0)
    x, y, conv = _newton_min_3d(coeffs, px1, px2, peta, span, newton_tol, newton_maxit)
    if not conv or not (xi_lo[0] <= x <= xi_hi[0] and xi_lo[1] <= y <= xi_hi[1]):
        return 0.0, False
    Q = (coeffs[0] + coeffs[1] * x + coeffs[2] * y + coeffs[3] * x * x
         + coeffs[4] * x * y + coeffs[5] * y * y)
    q1 = coeffs[1] + 2.0 * coeffs[3] * x + coeffs[4] * y
    q2 = coeffs[2] + coeffs[4] * x + 2.0 * coeffs[5] * y
    b2 = 1.0 + q1 * q1 + q2 * q2
    bb = np.sqrt(b2)
    kap = -((1.0 + q2 * q2) * 2.0 * coeffs[3] - 2.0 * q1 * q2 * coeffs[4]
            + (1.0 + q1 * q1) * 2.0 * coeffs[5]) / (b2 * bb)
    if abs(kap) >= kappa_max:
        return kap, False
    for k in range(3):
        out_foot[k] = (frame[0, k] + x * frame[2, k] + y * frame[3, k]
                       + Q * frame[1, k])
        out_nrm[k] = (-q1 * frame[2, k] - q2 * frame[3, k] + frame[1, k]) / bb
    return kap, True


@njit(cache=True)
def _osc_circle_raw(q, p, ref, n0, dx, out_foot, out_nrm):
    """Circle through three points; footpoint candidate nearest ``ref`` wins.

    Returns (kappa, ok).  Orientation follows n0: the normal keeps a
    non-negative dot with it, and kappa's sign flips along.
    """
    u0 = q[1, 0] - q[0, 0]
    u1 = q[1, 1] - q[0, 1]
    v0 = q[2, 0] - q[0, 0]
    v1 = q[2, 1] - q[0, 1]
    det = 2.0 * (u0 * v1 - u1 * v0)
    if abs(det) <= 4.0 * 1e-12 * dx * dx:
        return 0.0, False
    bu = u0 * u0 + u1 * u1
    bv = v0 * v0 + v1 * v1
    cx = (bu * v1 - bv * u1) / det
    cy = (bv * u0 - bu * v0) / det
    ccx = q[0, 0] + cx
    ccy = q[0, 1] + cy
    R = np.sqrt(cx * cx + cy * cy)
    dx0 = p[0] - ccx
    dy0 = p[1] - ccy
    dn = np.sqrt(dx0 * dx0 + dy0 * dy0)
    if dn < 1e-14 * (1.0 + R):
        return 0.0, False
    ux = dx0 / dn
    uy = dy0 / dn
    best = 0.0
    sgn_pick = 1.0
    for sgn in (1.0, -1.0):
        fx = ccx + sgn * R * ux
        fy = ccy + sgn * R * uy
        dd = (fx - ref[0]) ** 2 + (fy - ref[1]) ** 2
        if sgn > 0.0 or dd < best:
            best = dd
            sgn_pick = sgn
    out_foot[0] = ccx + sgn_pick * R * ux
    out_foot[1] = ccy + sgn_pick * R * uy
    rx = (out_foot[0] - ccx) / R
    ry = (out_foot[1] - ccy) / R
    if rx * n0[0] + ry * n0[1] >= 0.0:
        out_nrm[0] = rx
        out_nrm[1] = ry
        return 1.0 / R, True
    out_nrm[0] = -rx
    out_nrm[1] = -ry
    return -1.0 / R, True


@njit(cache=True)
def _osc_sphere_raw(q, p, ref, n0, dx, out_foot, out_nrm):
    """Sphere through four points; same side rule as the circle; kappa = ±2/R."""
    u = np.empty(3)
    v = np.empty(3)
    w = np.empty(3)
    for k in range(3):
        u[k] = q[1, k] - q[0, k]
        v[k] = q[2, k] - q[0, k]
        w[k] = q[3, k] - q[0, k]
    tr = (u[0] * (v[1] * w[2] - v[2] * w[1])
          - u[1] * (v[0] * w[2] - v[2] * w[0])
          + u[2] * (v[0] * w[1] - v[1] * w[0]))
    if abs(tr) <= 6.0 * 1e-12 * dx * dx * dx:
        return 0.0, False
    A = np.empty((3, 3))
    b = np.empty(3)
    for r, vec in enumerate((u, v, w)):
        nn = 0.0
        for k in range(3):
            A[r, k] = 2.0 * vec[k]
            nn += vec[k] * vec[k]
        b[r] = nn
    if not _solve_small(A, b, 3, 1e-300):
        return 0.0, False
    cc = np.empty(3)
    R2 = 0.0
    for k in range(3):
        cc[k] = q[0, k] + b[k]
        R2 += b[k] * b[k]
    R = np.sqrt(R2)
    dvec = np.empty(3)
    dn = 0.0
    for k in range(3):
        dvec[k] = p[k] - cc[k]
        dn += dvec[k] * dvec[k]
    dn = np.sqrt(dn)
    if dn < 1e-14 * (1.0 + R):
        return 0.0, False
    best = 0.0
    sgn_pick = 1.0
    for sgn in (1.0, -1.0):
        dd = 0.0
        for k in range(3):
            f = cc[k] + sgn * R * dvec[k] / dn
            dd += (f - ref[k]) ** 2
        if sgn > 0.0 or dd < best:
            best = dd
            sgn_pick = sgn
    dot = 0.0
    for k in range(3):
        out_foot[k] = cc[k] + sgn_pick * R * dvec[k] / dn
        out_nrm[k] = (out_foot[k] - cc[k]) / R
        dot += out_nrm[k] * n0[k]
    if dot >= 0.0:
        return 2.0 / R, True
    for k in range(3):
        out_nrm[k] = -out_nrm[k]
    return -2.0 / R, True


@njit(cache=True)
def _fallback_points(acc, nacc, foot, d, dx, pts):
    """Greedy selection of the nearest nondegenerate 3 (2D) / 4 (3D) footpoints."""
    need = 3 if d == 2 else 4
    count = 0
    for i in range(nacc):
        si = acc[i]
        if count == 0:
            for k in range(d):
                pts[0, k] = foot[si, k]
            count = 1
        elif count == 1:
            for k in range(d):
                pts[1, k] = foot[si, k]
            count = 2
        elif count == 2:
            if d == 2:
                ar = ((pts[1, 0] - pts[0, 0]) * (foot[si, 1] - pts[0, 1])
                      - (pts[1, 1] - pts[0, 1]) * (foot[si, 0] - pts[0, 0]))
                if abs(ar) * 0.5 <= 1e-12 * dx * dx:
                    continue
            else:
                ux, uy, uz = pts[1, 0] - pts[0, 0], pts[1, 1] - pts[0, 1], pts[1, 2] - pts[0, 2]
                vx, vy, vz = foot[si, 0] - pts[0, 0], foot[si, 1] - pts[0, 1], foot[si, 2] - pts[0, 2]
                cx = uy * vz - uz * vy
                cy = uz * vx - ux * vz
                cz = ux * vy - uy * vx
                if 0.5 * np.sqrt(cx * cx + cy * cy + cz * cz) <= 1e-12 * dx * dx:
                    continue
            for k in range(d):
                pts[2, k] = foot[si, k]
            count = 3
        else:
            ux, uy, uz = pts[1, 0] - pts[0, 0], pts[1, 1] - pts[0, 1], pts[1, 2] - pts[0, 2]
            vx, vy, vz = pts[2, 0] - pts[0, 0], pts[2, 1] - pts[0, 1], pts[2, 2] - pts[0, 2]
            wx, wy, wz = foot[si, 0] - pts[0, 0], foot[si, 1] - pts[0, 1], foot[si, 2] - pts[0, 2]
            tr = (ux * (vy * wz - vz * wy) - uy * (vx * wz - vz * wx) + uz * (vx * wy - vy * wx))
            if abs(tr) <= 6.0 * 1e-12 * dx * dx * dx:
                continue
            for k in range(3):
                pts[3, k] = foot[si, k]
            count = 4
        if count == need:
            return True
    return False


@njit(cache=True)
def resample_batch(cand_idx, has_prev, prev_foot, prev_nrm, dims, strides,
                   origin, dx, slot_map, foot, nrm, gamma, m, delta,
                   cos_collect, use_cons, cos_topo, use_topo, kappa_max,
                   newton_tol, newton_maxit, use_fallback,
                   out_foot, out_nrm, out_kap, out_status):
    """Resample every node in cand_idx against the frozen footpoint snapshot.

    For each node: collect -> least-squares fit -> Newton projection; on
    rejection, the osculating circle/sphere fallback.  Nodes whose
    collected footpoints are Lagrangian-inconsistent are dropped when the
    topology rule is on.
    """
    nq = cand_idx.shape[0]
    d = dims.shape[0]
    # per-node workspaces, reused across the loop
    px = np.empty(d)
    acc = np.empty(ACC_MAX, dtype=np.int64)
    acc_d2 = np.empty(ACC_MAX, dtype=np.float64)
    cand_slot = np.empty(CAND_MAX, dtype=np.int64)
    cand_d2 = np.empty(CAND_MAX, dtype=np.float64)
    msmall = np.empty(ACC_MAX, dtype=np.float64)
    ref = np.empty(d)
    n0 = np.empty(d)
    frame = np.empty((d + 1, d))
    coeffs = np.empty(6)
    xi_lo = np.empty(2)
    xi_hi = np.empty(2)
    xi_ws = np.empty((ACC_MAX, 2))
    eta_ws = np.empty(ACC_MAX)
    fvec = np.empty(d)
    nvec = np.empty(d)
    pts = np.empty((4, d))
    for q in range(nq):
        ci = cand_idx[q]
        for k in range(d):
            px[k] = origin[k] + ci[k] * dx
        nacc, min_dot = _collect(ci, px, dims, strides, slot_map, foot, nrm,
                                 dx, gamma, m, delta, cos_collect, use_cons,
                                 acc, acc_d2, cand_slot, cand_d2, msmall)
        if use_topo and nacc > 0 and min_dot < cos_topo:
            out_status[q] = DROP_TOPOLOGY
            continue
        if nacc < d + 1:
            out_status[q] = DROP_STARVED
            continue
        s0 = acc[0]
        if has_prev[q]:
            for k in range(d):
                ref[k] = prev_foot[q, k]
        else:
            for k in range(d):
                ref[k] = foot[s0, k]
        for k in range(d):
            n0[k] = nrm[s0, k]
        # main path: quadratic fit + Newton projection
        accepted = False
        if nacc >= (3 if d == 2 else 6):
            if _fit_quadratic(acc, nacc, foot, nrm, coeffs, frame, xi_lo,
                              xi_hi, xi_ws, eta_ws):
                kap, ok = _project_from_fit(frame, coeffs, xi_lo, xi_hi, px, d,
                                            kappa_max, newton_tol, newton_maxit,
                                            fvec, nvec)
                if ok:
                    for k in range(d):
                        out_foot[q, k] = fvec[k]
                        out_nrm[q, k] = nvec[k]
                    out_kap[q] = kap
                    out_status[q] = OK_FIT
                    accepted = True
        if accepted:
            continue
        if not use_fallback:
            out_status[q] = DROP_STARVED
            continue
        if not _fallback_points(acc, nacc, foot, d, dx, pts):
            out_status[q] = DROP_STARVED
            continue
        if d == 2:
            kap, ok = _osc_circle_raw(pts, px, ref, n0, dx, fvec, nvec)
        else:
            kap, ok = _osc_sphere_raw(pts, px, ref, n0, dx, fvec, nvec)
        if not ok:
            out_status[q] = DROP_STARVED
            continue
        for k in range(d):
            out_foot[q, k] = fvec[k]
            out_nrm[q, k] = nvec[k]
        out_kap[q] = kap
        out_status[q] = OK_FALLBACK


@njit(cache=True)
def collect_node(ci, dims, strides, origin, dx, slot_map, foot, nrm, gamma,
                 m, delta, cos_collect, use_cons):
    """Single-node collection; returns (slots, n_accepted, min normal dot)."""
    d = dims.shape[0]
    px = np.empty(d)
    for k in range(d):
        px[k] = origin[k] + ci[k] * dx
    acc = np.empty(ACC_MAX, dtype=np.int64)
    acc_d2 = np.empty(ACC_MAX, dtype=np.float64)
    cand_slot = np.empty(CAND_MAX, dtype=np.int64)
    cand_d2 = np.empty(CAND_MAX, dtype=np.float64)
    msmall = np.empty(ACC_MAX, dtype=np.float64)
    nacc, min_dot = _collect(ci, px, dims, strides, slot_map, foot, nrm, dx,
                             gamma, m, delta, cos_collect, use_cons, acc,
                             acc_d2, cand_slot, cand_d2, msmall)
    return acc, nacc, min_dot
