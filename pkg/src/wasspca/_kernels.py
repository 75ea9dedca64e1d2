"""Hot numeric kernels with selectable backends.

Two implementations of each kernel: a numba ``@njit`` scalar-loop version and a
vectorized pure-numpy version. ``WASSPCA_BACKEND=numpy`` forces the numpy path;
``WASSPCA_BACKEND=numba`` (default) uses the compiled path when numba imports.
Both paths are exercised by the test suite and timed by
``benchmarks/bench_backends.py``.

Kernels:

- ``pd_prox_1d``     inner primal-dual loop of the 1-D direction prox
- ``pd_prox_2d``     inner primal-dual loop of the 2-D velocity-field prox
- ``solve_transport`` transportation simplex for exact OT on point supports
"""

import os

import numpy as np

_REQUESTED = os.environ.get("WASSPCA_BACKEND", "numba").strip().lower()

if _REQUESTED not in ("numba", "numpy"):
    raise RuntimeError(
        "WASSPCA_BACKEND must be 'numba' or 'numpy', got %r" % _REQUESTED)

_HAS_NUMBA = False
if _REQUESTED == "numba":
    try:
        from numba import njit
        _HAS_NUMBA = True
    except ImportError:
        _HAS_NUMBA = False

BACKEND = "numba" if _HAS_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# 1-D primal-dual prox: min (1/2tau)||v - vt||^2 over the box [blo, bhi],
# difference-quotient bounds [slo, shi] on the forward slopes, and optional
# hyperplane constraints cons @ v = 0 handled through an extra dual block.
# ---------------------------------------------------------------------------

def _pd_prox_1d_numpy(vt, blo, bhi, inv_dx, slo, shi, cons, tau, sigma,
                      theta, eta, max_inner, z0, y0):
    n = vt.shape[0]
    k = cons.shape[0]
    v = np.minimum(np.maximum(vt, blo), bhi)
    v_bar = v.copy()
    z = z0.copy()
    y = y0.copy()
    zlo = sigma * slo
    zhi = sigma * shi
    rel = np.inf
    it = 0
    for it in range(1, max_inner + 1):
        kv = np.empty(n)
        kv[:-1] = (v_bar[1:] - v_bar[:-1]) * inv_dx
        kv[-1] = 0.0
        z = z + sigma * kv
        z = z - np.minimum(np.maximum(z, zlo), zhi)
        if k:
            y = y + sigma * (cons @ v_bar)
        kt = np.empty(n)
        kt[0] = -z[0] * inv_dx[0]
        if n > 2:
            kt[1:-1] = z[:-2] * inv_dx[:-1] - z[1:-1] * inv_dx[1:]
        kt[-1] = z[-2] * inv_dx[-1]
        grad = kt + (v - vt) / tau
        if k:
            grad = grad + cons.T @ y
        v_new = np.minimum(np.maximum(v - theta * grad, blo), bhi)
        dv = float(np.linalg.norm(v_new - v))
        rel = dv / max(float(np.linalg.norm(v)), 1e-30)
        v_bar = 2.0 * v_new - v
        v = v_new
        if rel <= eta:
            break
    return v, z, y, it, rel


def _pd_prox_1d_loops(vt, blo, bhi, inv_dx, slo, shi, cons, tau, sigma,
                      theta, eta, max_inner, z0, y0):
    n = vt.shape[0]
    k = cons.shape[0]
    v = np.empty(n)
    for j in range(n):
        v[j] = min(max(vt[j], blo[j]), bhi[j])
    v_bar = v.copy()
    v_new = np.empty(n)
    z = z0.copy()
    y = y0.copy()
    zlo = sigma * slo
    zhi = sigma * shi
    rel = 1e300
    it = 0
    inv_tau = 1.0 / tau
    for it in range(1, max_inner + 1):
        for j in range(n - 1):
            zj = z[j] + sigma * (v_bar[j + 1] - v_bar[j]) * inv_dx[j]
            z[j] = zj - min(max(zj, zlo), zhi)
        for l in range(k):
            acc = 0.0
            for j in range(n):
                acc += cons[l, j] * v_bar[j]
            y[l] += sigma * acc
        dv2 = 0.0
        nv2 = 0.0
        for j in range(n):
            if j == 0:
                kt = -z[0] * inv_dx[0]
            elif j == n - 1:
                kt = z[n - 2] * inv_dx[n - 2]
            else:
                kt = z[j - 1] * inv_dx[j - 1] - z[j] * inv_dx[j]
            g = kt + (v[j] - vt[j]) * inv_tau
            for l in range(k):
                g += cons[l, j] * y[l]
            w = min(max(v[j] - theta * g, blo[j]), bhi[j])
            dv2 += (w - v[j]) * (w - v[j])
            nv2 += v[j] * v[j]
            v_new[j] = w
        rel = np.sqrt(dv2) / max(np.sqrt(nv2), 1e-30)
        for j in range(n):
            v_bar[j] = 2.0 * v_new[j] - v[j]
            v[j] = v_new[j]
        if rel <= eta:
            break
    return v, z, y, it, rel


# ---------------------------------------------------------------------------
# 2-D primal-dual prox: per-coordinate boxes on (vx, vy) plus bounds on the
# discrete divergence. The dual operator is the negative forward gradient.
# ---------------------------------------------------------------------------

def _pd_prox_2d_numpy(vtx, vty, blox, bhix, bloy, bhiy, inv_hx, inv_hy,
                      slo, shi, tau, sigma, theta, eta, max_inner, z0):
    vx = np.minimum(np.maximum(vtx, blox), bhix)
    vy = np.minimum(np.maximum(vty, bloy), bhiy)
    bx = vx.copy()
    by = vy.copy()
    z = z0.copy()
    zlo = sigma * slo
    zhi = sigma * shi
    rel = np.inf
    it = 0
    for it in range(1, max_inner + 1):
        div = np.zeros_like(z)
        div[0, :] += bx[0, :] * inv_hx
        div[1:-1, :] += (bx[1:-1, :] - bx[:-2, :]) * inv_hx
        div[-1, :] += -bx[-2, :] * inv_hx
        div[:, 0] += by[:, 0] * inv_hy
        div[:, 1:-1] += (by[:, 1:-1] - by[:, :-2]) * inv_hy
        div[:, -1] += -by[:, -2] * inv_hy
        z = z + sigma * div
        z = z - np.minimum(np.maximum(z, zlo), zhi)
        gx = np.zeros_like(z)
        gy = np.zeros_like(z)
        gx[:-1, :] = -(z[1:, :] - z[:-1, :]) * inv_hx
        gy[:, :-1] = -(z[:, 1:] - z[:, :-1]) * inv_hy
        nx = np.minimum(np.maximum(vx - theta * (gx + (vx - vtx) / tau),
                                   blox), bhix)
        ny = np.minimum(np.maximum(vy - theta * (gy + (vy - vty) / tau),
                                   bloy), bhiy)
        dv = np.sqrt(np.sum((nx - vx) ** 2) + np.sum((ny - vy) ** 2))
        nv = np.sqrt(np.sum(vx ** 2) + np.sum(vy ** 2))
        rel = float(dv) / max(float(nv), 1e-30)
        bx = 2.0 * nx - vx
        by = 2.0 * ny - vy
        vx = nx
        vy = ny
        if rel <= eta:
            break
    return vx, vy, z, it, rel


def _pd_prox_2d_loops(vtx, vty, blox, bhix, bloy, bhiy, inv_hx, inv_hy,
                      slo, shi, tau, sigma, theta, eta, max_inner, z0):
    m, n = vtx.shape
    vx = np.empty((m, n))
    vy = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            vx[i, j] = min(max(vtx[i, j], blox[i, j]), bhix[i, j])
            vy[i, j] = min(max(vty[i, j], bloy[i, j]), bhiy[i, j])
    bx = vx.copy()
    by = vy.copy()
    nx = np.empty((m, n))
    ny = np.empty((m, n))
    z = z0.copy()
    zlo = sigma * slo
    zhi = sigma * shi
    rel = 1e300
    it = 0
    inv_tau = 1.0 / tau
    for it in range(1, max_inner + 1):
        for i in range(m):
            for j in range(n):
                if i == 0:
                    dx = bx[0, j]
                elif i == m - 1:
                    dx = -bx[m - 2, j]
                else:
                    dx = bx[i, j] - bx[i - 1, j]
                if j == 0:
                    dy = by[i, 0]
                elif j == n - 1:
                    dy = -by[i, n - 2]
                else:
                    dy = by[i, j] - by[i, j - 1]
                zz = z[i, j] + sigma * (dx * inv_hx + dy * inv_hy)
                z[i, j] = zz - min(max(zz, zlo), zhi)
        dv2 = 0.0
        nv2 = 0.0
        for i in range(m):
            for j in range(n):
                gx = 0.0 if i == m - 1 else -(z[i + 1, j] - z[i, j]) * inv_hx
                gy = 0.0 if j == n - 1 else -(z[i, j + 1] - z[i, j]) * inv_hy
                wx = vx[i, j] - theta * (gx + (vx[i, j] - vtx[i, j]) * inv_tau)
                wy = vy[i, j] - theta * (gy + (vy[i, j] - vty[i, j]) * inv_tau)
                wx = min(max(wx, blox[i, j]), bhix[i, j])
                wy = min(max(wy, bloy[i, j]), bhiy[i, j])
                dv2 += (wx - vx[i, j]) ** 2 + (wy - vy[i, j]) ** 2
                nv2 += vx[i, j] ** 2 + vy[i, j] ** 2
                nx[i, j] = wx
                ny[i, j] = wy
        rel = np.sqrt(dv2) / max(np.sqrt(nv2), 1e-30)
        for i in range(m):
            for j in range(n):
                bx[i, j] = 2.0 * nx[i, j] - vx[i, j]
                by[i, j] = 2.0 * ny[i, j] - vy[i, j]
                vx[i, j] = nx[i, j]
                vy[i, j] = ny[i, j]
        if rel <= eta:
            break
    return vx, vy, z, it, rel


# ---------------------------------------------------------------------------
# Transportation simplex. Solves min <C, P> s.t. P 1 = a, P^T 1 = b, P >= 0
# for strictly positive balanced marginals. Basis kept as a spanning tree over
# the bipartite node set; Dantzig entering rule; a deterministic microscopic
# supply perturbation breaks degenerate ties, and flows are recomputed on the
# clean marginals over the final basis before returning.
# Returns (plan, status, pivots); status 0 = optimal, 1 = pivot cap hit.
# ---------------------------------------------------------------------------

def _nw_corner(a, b):
    m = a.shape[0]
    n = b.shape[0]
    arc_i = np.empty(m + n - 1, dtype=np.int64)
    arc_j = np.empty(m + n - 1, dtype=np.int64)
    flow = np.empty(m + n - 1)
    ra = a.copy()
    rb = b.copy()
    i = 0
    j = 0
    for t in range(m + n - 1):
        arc_i[t] = i
        arc_j[t] = j
        f = min(ra[i], rb[j])
        flow[t] = f
        ra[i] -= f
        rb[j] -= f
        if i == m - 1 and j == n - 1:
            break
        if (ra[i] <= rb[j] and i < m - 1) or j == n - 1:
            i += 1
        else:
            j += 1
    return arc_i, arc_j, flow


def _tree_structure(arc_i, arc_j, m, n):
    # CSR adjacency over nodes (sources 0..m-1, sinks m..m+n-1), then a DFS
    # from node 0 assigning parents, depths and dual potentials.
    nn = m + n
    na = arc_i.shape[0]
    deg = np.zeros(nn, dtype=np.int64)
    for t in range(na):
        deg[arc_i[t]] += 1
        deg[m + arc_j[t]] += 1
    off = np.zeros(nn + 1, dtype=np.int64)
    for u in range(nn):
        off[u + 1] = off[u] + deg[u]
    fill = off[:-1].copy()
    inc = np.empty(2 * na, dtype=np.int64)
    for t in range(na):
        u = arc_i[t]
        w = m + arc_j[t]
        inc[fill[u]] = t
        fill[u] += 1
        inc[fill[w]] = t
        fill[w] += 1
    return off, inc


def _potentials_parents(arc_i, arc_j, cost, off, inc, m, n):
    nn = m + n
    pot = np.zeros(nn)
    parent = np.full(nn, -1, dtype=np.int64)
    parent_arc = np.full(nn, -1, dtype=np.int64)
    depth = np.zeros(nn, dtype=np.int64)
    seen = np.zeros(nn, dtype=np.bool_)
    stack = np.empty(nn, dtype=np.int64)
    top = 0
    stack[top] = 0
    top = 1
    seen[0] = True
    while top > 0:
        top -= 1
        u = stack[top]
        for p in range(off[u], off[u + 1]):
            t = inc[p]
            w = m + arc_j[t] if u < m else arc_i[t]
            if not seen[w]:
                seen[w] = True
                parent[w] = u
                parent_arc[w] = t
                depth[w] = depth[u] + 1
                # basic arc (i,j) ties the duals through pot_i + pot_j = c_ij
                pot[w] = cost[arc_i[t], arc_j[t]] - pot[u]
                stack[top] = w
                top += 1
    return pot, parent, parent_arc, depth


def _recompute_flows(arc_i, arc_j, a, b, off, inc, m, n):
    # Leaf elimination over the basis tree with the clean marginals.
    nn = m + n
    na = arc_i.shape[0]
    need = np.empty(nn)
    need[:m] = a
    for j in range(n):
        need[m + j] = b[j]
    deg = np.zeros(nn, dtype=np.int64)
    for t in range(na):
        deg[arc_i[t]] += 1
        deg[m + arc_j[t]] += 1
    done = np.zeros(na, dtype=np.bool_)
    flow = np.zeros(na)
    queue = np.empty(nn, dtype=np.int64)
    qh = 0
    qt = 0
    for u in range(nn):
        if deg[u] == 1:
            queue[qt] = u
            qt += 1
    while qh < qt:
        u = queue[qh]
        qh += 1
        if deg[u] != 1:
            continue
        for p in range(off[u], off[u + 1]):
            t = inc[p]
            if done[t]:
                continue
            w = m + arc_j[t] if u < m else arc_i[t]
            flow[t] = need[u]
            need[w] -= need[u]
            need[u] = 0.0
            done[t] = True
            deg[u] -= 1
            deg[w] -= 1
            if deg[w] == 1:
                queue[qt] = w
                qt += 1
            break
    return flow


def _solve_transport_py(cost, a, b, max_pivots, entering_numpy):
    m = a.shape[0]
    n = b.shape[0]
    scale = max(np.max(a), np.max(b))
    eps = 1e-13 * scale
    ap = a + eps * (np.arange(m) + 1.0)
    bp = b.copy()
    bp[n - 1] += eps * (m * (m + 1.0) / 2.0)
    arc_i, arc_j, flow = _nw_corner(ap, bp)
    tol = 1e-11 * (np.max(np.abs(cost)) + 1.0)
    pivots = 0
    status = 1
    while pivots < max_pivots:
        off, inc = _tree_structure(arc_i, arc_j, m, n)
        pot, parent, parent_arc, depth = _potentials_parents(
            arc_i, arc_j, cost, off, inc, m, n)
        if entering_numpy:
            red = cost - pot[:m, None] - pot[None, m:]
            ei, ej = np.unravel_index(np.argmin(red), red.shape)
            best = red[ei, ej]
        else:
            best = 0.0
            ei = -1
            ej = -1
            for i in range(m):
                pi = pot[i]
                for j in range(n):
                    r = cost[i, j] - pi - pot[m + j]
                    if r < best:
                        best = r
                        ei = i
                        ej = j
        if best >= -tol:
            status = 0
            break
        # Splice the two root paths at their junction to get the cycle.
        u = ei
        w = m + ej
        path_u = np.empty(depth[u] + 1, dtype=np.int64)
        path_w = np.empty(depth[w] + 1, dtype=np.int64)
        lu = 0
        lw = 0
        while depth[u] > depth[w]:
            path_u[lu] = parent_arc[u]
            lu += 1
            u = parent[u]
        while depth[w] > depth[u]:
            path_w[lw] = parent_arc[w]
            lw += 1
            w = parent[w]
        while u != w:
            path_u[lu] = parent_arc[u]
            lu += 1
            u = parent[u]
            path_w[lw] = parent_arc[w]
            lw += 1
            w = parent[w]
        # Arcs alternate -,+,... walking away from each entering endpoint.
        theta = np.inf
        leave = -1
        for s in range(0, lu, 2):
            t = path_u[s]
            if flow[t] < theta:
                theta = flow[t]
                leave = t
        for s in range(0, lw, 2):
            t = path_w[s]
            if flow[t] < theta:
                theta = flow[t]
                leave = t
        for s in range(lu):
            t = path_u[s]
            flow[t] += theta if s % 2 == 1 else -theta
        for s in range(lw):
            t = path_w[s]
            flow[t] += theta if s % 2 == 1 else -theta
        arc_i[leave] = ei
        arc_j[leave] = ej
        flow[leave] = theta
        pivots += 1
    off, inc = _tree_structure(arc_i, arc_j, m, n)
    clean = _recompute_flows(arc_i, arc_j, a, b, off, inc, m, n)
    plan = np.zeros((m, n))
    for t in range(arc_i.shape[0]):
        f = clean[t]
        if f < 0.0:
            f = 0.0
        plan[arc_i[t], arc_j[t]] = f
    return plan, status, pivots


def _solve_transport_numpy(cost, a, b, max_pivots):
    return _solve_transport_py(cost, a, b, max_pivots, True)


if _HAS_NUMBA:
    _nw_corner_jit = njit(cache=True)(_nw_corner)
    _tree_structure_jit = njit(cache=True)(_tree_structure)
    _potentials_parents_jit = njit(cache=True)(_potentials_parents)
    _recompute_flows_jit = njit(cache=True)(_recompute_flows)

    @njit(cache=True)
    def _solve_transport_numba(cost, a, b, max_pivots):
        m = a.shape[0]
        n = b.shape[0]
        scale = max(np.max(a), np.max(b))
        eps = 1e-13 * scale
        ap = a + eps * (np.arange(m) + 1.0)
        bp = b.copy()
        bp[n - 1] += eps * (m * (m + 1.0) / 2.0)
        arc_i, arc_j, flow = _nw_corner_jit(ap, bp)
        tol = 1e-11 * (np.max(np.abs(cost)) + 1.0)
        pivots = 0
        status = 1
        while pivots < max_pivots:
            off, inc = _tree_structure_jit(arc_i, arc_j, m, n)
            pot, parent, parent_arc, depth = _potentials_parents_jit(
                arc_i, arc_j, cost, off, inc, m, n)
            best = 0.0
            ei = -1
            ej = -1
            for i in range(m):
                pi = pot[i]
                for j in range(n):
                    r = cost[i, j] - pi - pot[m + j]
                    if r < best:
                        best = r
                        ei = i
                        ej = j
            if best >= -tol:
                status = 0
                break
            u = ei
            w = m + ej
            path_u = np.empty(depth[u] + 1, dtype=np.int64)
            path_w = np.empty(depth[w] + 1, dtype=np.int64)
            lu = 0
            lw = 0
            while depth[u] > depth[w]:
                path_u[lu] = parent_arc[u]
                lu += 1
                u = parent[u]
            while depth[w] > depth[u]:
                path_w[lw] = parent_arc[w]
                lw += 1
                w = parent[w]
            while u != w:
                path_u[lu] = parent_arc[u]
                lu += 1
                u = parent[u]
                path_w[lw] = parent_arc[w]
                lw += 1
                w = parent[w]
            theta = np.inf
            leave = -1
            for s in range(0, lu, 2):
                t = path_u[s]
                if flow[t] < theta:
                    theta = flow[t]
                    leave = t
            for s in range(0, lw, 2):
                t = path_w[s]
                if flow[t] < theta:
                    theta = flow[t]
                    leave = t
            for s in range(lu):
                t = path_u[s]
                if s % 2 == 1:
                    flow[t] += theta
                else:
                    flow[t] -= theta
            for s in range(lw):
                t = path_w[s]
                if s % 2 == 1:
                    flow[t] += theta
                else:
                    flow[t] -= theta
            arc_i[leave] = ei
            arc_j[leave] = ej
            flow[leave] = theta
            pivots += 1
        off, inc = _tree_structure_jit(arc_i, arc_j, m, n)
        clean = _recompute_flows_jit(arc_i, arc_j, a, b, off, inc, m, n)
        plan = np.zeros((m, n))
        for t in range(arc_i.shape[0]):
            f = clean[t]
            if f < 0.0:
                f = 0.0
            plan[arc_i[t], arc_j[t]] = f
        return plan, status, pivots

    _pd_prox_1d_numba = njit(cache=True)(_pd_prox_1d_loops)
    _pd_prox_2d_numba = njit(cache=True)(_pd_prox_2d_loops)

    pd_prox_1d = _pd_prox_1d_numba
    pd_prox_2d = _pd_prox_2d_numba
    solve_transport = _solve_transport_numba
else:
    pd_prox_1d = _pd_prox_1d_numpy
    pd_prox_2d = _pd_prox_2d_numpy
    solve_transport = _solve_transport_numpy
