"""Numba kernels for the Monte Carlo inner loops.

Everything here works on the flat arrays of an AnnularLattice: the neighbour
table ``nbr`` (n, 4) with -1 for missing neighbours, the degree vector, the
outer-boundary mask, and a zipper sign table (n, 4).  Randomness comes from
numba's internal np.random state, seeded explicitly at the top of every
kernel so runs are reproducible from a single integer.
"""

import numpy as np
from numba import njit

_MAX_WALK = 1 << 62  # effectively unbounded; absorption is a.s. finite


@njit(cache=True)
def _random_neighbor(nbr_row, deg):
    k = np.random.randint(0, deg)
    for d in range(4):
        j = nbr_row[d]
        if j >= 0:
            if k == 0:
                return j
            k -= 1
    return -1  # unreachable


@njit(cache=True)
def walk_path(nbr, deg, absorb, start, seed):
    """Full trajectory of a reflected/absorbed walk, as a vertex index array."""
    np.random.seed(seed)
    cap = 4096
    buf = np.empty(cap, dtype=np.int64)
    buf[0] = start
    m = 1
    cur = start
    while not absorb[cur]:
        cur = _random_neighbor(nbr[cur], deg[cur])
        if m == cap:
            cap *= 2
            new = np.empty(cap, dtype=np.int64)
            new[:m] = buf[:m]
            buf = new
        buf[m] = cur
        m += 1
    return buf[:m]


@njit(cache=True)
def _lerw_into(nbr, deg, stop, start, in_path, stack):
    """Loop-erased walk from start until ``stop`` is hit, erased on the fly.

    ``in_path`` must be zeroed on the vertices it touched before the call;
    entries store 1 + position in ``stack``.  Returns the path length in
    ``stack`` (including the final stopped vertex), or 0 if start is absorbed.
    """
    if stop[start]:
        stack[0] = start
        return 1
    stack[0] = start
    in_path[start] = 1
    m = 1
    cur = start
    while True:
        w = _random_neighbor(nbr[cur], deg[cur])
        if stop[w]:
            stack[m] = w
            m += 1
            # clear markers
            for t in range(m - 1):
                in_path[stack[t]] = 0
            return m
        pos = in_path[w]
        if pos > 0:
            # erase the loop: pop back to w
            for t in range(pos, m):
                in_path[stack[t]] = 0
            m = pos
            cur = w
        else:
            stack[m] = w
            in_path[w] = m + 1
            m += 1
            cur = w


@njit(cache=True)
def lerw(nbr, deg, stop, start, seed):
    np.random.seed(seed)
    n = len(deg)
    in_path = np.zeros(n, dtype=np.int64)
    stack = np.empty(n + 1, dtype=np.int64)
    m = _lerw_into(nbr, deg, stop, start, in_path, stack)
    return stack[:m].copy()


@njit(cache=True)
def wilson_tree(nbr, deg, outer, order, seed):
    """Wilson's algorithm on the wired graph.

    Returns parent[v]: the next vertex toward the root, itself for outer
    (absorbed) vertices, sampled uniformly over spanning trees of the wired
    multigraph.
    """
    np.random.seed(seed)
    n = len(deg)
    parent = np.full(n, -1, dtype=np.int64)
    in_tree = outer.copy()
    in_path = np.zeros(n, dtype=np.int64)
    stack = np.empty(n + 1, dtype=np.int64)
    for i in range(n):
        parent[i] = i if outer[i] else -1
    for k in range(len(order)):
        v = order[k]
        if in_tree[v]:
            continue
        m = _lerw_into(nbr, deg, in_tree, v, in_path, stack)
        for t in range(m - 1):
            parent[stack[t]] = stack[t + 1]
            in_tree[stack[t]] = True
    return parent


@njit(cache=True)
def conditioned_branches(nbr, deg, outer, xs, max_attempts, seed):
    """Rejection-sample branch tuples on the pairwise-disjointness event.

    Wilson's algorithm run with the marked vertices first: branch j is the
    loop-erasure of a walk from xs[j] absorbed on the outer boundary, and the
    attempt is abandoned as soon as a walk steps onto an earlier branch.
    Returns (flat, offsets, attempts); flat/offsets encode the n accepted
    branches (each ending with its outer exit vertex).  offsets[-1] == -1
    signals that max_attempts was exhausted.
    """
    np.random.seed(seed)
    n = len(deg)
    nx = len(xs)
    in_path = np.zeros(n, dtype=np.int64)
    stack = np.empty(n + 1, dtype=np.int64)
    taken = np.zeros(n, dtype=np.int64)  # attempt stamp marking earlier branches
    flat = np.empty(nx * (n + 1), dtype=np.int64)
    offsets = np.zeros(nx + 1, dtype=np.int64)
    attempts = 0
    while attempts < max_attempts:
        attempts += 1
        stamp = attempts
        pos = 0
        offsets[0] = 0
        ok = True
        for j in range(nx):
            start = xs[j]
            if taken[start] == stamp:
                ok = False
                break
            # loop-erased walk from start, rejected on touching a stamped vertex
            if outer[start]:
                stack[0] = start
                m = 1
            else:
                stack[0] = start
                in_path[start] = 1
                m = 1
                cur = start
                while True:
                    w = _random_neighbor(nbr[cur], deg[cur])
                    if outer[w]:
                        stack[m] = w
                        m += 1
                        break
                    if taken[w] == stamp:
                        m = -1
                        break
                    p = in_path[w]
                    if p > 0:
                        for t in range(p, m):
                            in_path[stack[t]] = 0
                        m = p
                        cur = w
                    else:
                        stack[m] = w
                        in_path[w] = m + 1
                        m += 1
                        cur = w
                if m < 0:
                    # clear markers of the failed walk
                    for t in range(n):
                        in_path[t] = 0
                    ok = False
                    break
                for t in range(m - 1):
                    in_path[stack[t]] = 0
            for t in range(m):
                flat[pos] = stack[t]
                taken[stack[t]] = stamp
                pos += 1
            offsets[j + 1] = pos
        if ok:
            return flat[:pos].copy(), offsets, attempts
    offsets[-1] = -1
    return flat[:0], offsets, attempts


@njit(cache=True)
def path_crossing_number(sign_table, nbr, path):
    """Sum of zipper signs along consecutive steps of a vertex-index path."""
    k = 0
    for t in range(len(path) - 1):
        u = path[t]
        v = path[t + 1]
        for d in range(4):
            if nbr[u, d] == v:
                k += sign_table[u, d]
                break
    return k


@njit(cache=True, fastmath=True)
def dbm_block(theta, kappa, b, dt, noise, seeds, record, rec_offset):
    """Euler-Maruyama circular Dyson block with gap-adaptive substeps.

    theta is (paths, n) lifted ccw angles, advanced in place by
    noise.shape[1] grid steps of size dt.  noise holds one pregenerated
    standard normal per (path, step, angle), used for the first substep of
    each grid step; the rare extra substeps (tight gaps) draw from numba's
    internal generator reseeded per path, so runs are reproducible.  When
    ``record`` is nonempty the first path's angles land on the grid rows
    starting at rec_offset + 1.  Returns 0 on success, 1 on gap collapse
    below 1e-9, 2 on an order violation.
    """
    P, n = theta.shape
    steps = noise.shape[1]
    rec = record.shape[0] > 0
    drift = np.empty(n)
    for p in range(P):
        np.random.seed(seeds[p])
        th = theta[p]
        for k in range(steps):
            rem = dt
            first = True
            while rem > 0.0:
                gmin = 1e300
                if n > 1:
                    for i in range(n - 1):
                        g = th[i + 1] - th[i]
                        if g < gmin:
                            gmin = g
                    g = th[0] + 2 * np.pi - th[n - 1]
                    if g < gmin:
                        gmin = g
                    if gmin < 1e-9:
                        return 1
                hmax = 1e300
                if b > 0.0 and n > 1:
                    hmax = gmin * gmin / (8.0 * b)
                if n > 1:
                    hn = gmin * gmin / (64.0 * kappa)
                    if hn < hmax:
                        hmax = hn
                h = rem if rem < hmax else hmax
                if h < 1e-12:
                    h = 1e-12 if rem > 1e-12 else rem
                sig = np.sqrt(kappa * h)
                for i in range(n):
                    drift[i] = 0.0
                for i in range(n):
                    for j in range(i + 1, n):
                        c = 1.0 / np.tan(0.5 * (th[i] - th[j]))
                        drift[i] += c
                        drift[j] -= c
                if first:
                    for i in range(n):
                        th[i] += b * drift[i] * h + sig * noise[p, k, i]
                    first = False
                else:
                    for i in range(n):
                        th[i] += b * drift[i] * h + sig * np.random.normal()
                if n > 1:
                    for i in range(n - 1):
                        if th[i + 1] <= th[i]:
                            return 2
                    if th[n - 1] - th[0] >= 2 * np.pi:
                        return 2
                rem -= h
            if rec and p == 0:
                for i in range(n):
                    record[rec_offset + k + 1, i] = th[i]
    return 0


@njit(cache=True)
def sample_soup_loops(nbr, deg, q, powers, free_index, roots, lengths, sign_table, seed):
    """Sample rooted loops as gauge-free bridges and return their windings.

    q is the free-vertex transition matrix, powers[j] its j-th power; roots
    and lengths give the (root, length) cell of each requested loop, with
    roots as *global* vertex indices and free_index mapping global -> row of
    q.  Returns (windings, flat, offsets) where flat/offsets encode the loop
    vertex sequences (closed: first == last).
    """
    np.random.seed(seed)
    total = 0
    for i in range(len(lengths)):
        total += lengths[i] + 1
    flat = np.empty(total, dtype=np.int64)
    offsets = np.empty(len(roots) + 1, dtype=np.int64)
    offsets[0] = 0
    windings = np.zeros(len(roots), dtype=np.int64)
    pos = 0
    for i in range(len(roots)):
        z = roots[i]
        zf = free_index[z]
        m = lengths[i]
        flat[pos] = z
        pos += 1
        cur = z
        wind = 0
        for s in range(m):
            steps_left = m - s - 1
            # transition weights to each neighbour
            r = np.random.random() * powers[steps_left + 1, free_index[cur], zf]
            acc = 0.0
            nxt = -1
            dch = -1
            for d in range(4):
                w = nbr[cur, d]
                if w < 0:
                    continue
                wf = free_index[w]
                if wf < 0:
                    continue  # absorbed neighbour: zero weight to return
                acc += q[free_index[cur], wf] * powers[steps_left, wf, zf]
                if acc >= r:
                    nxt = w
                    dch = d
                    break
            if nxt < 0:
                # numerical fallback: take the last admissible neighbour
                for d in range(3, -1, -1):
                    w = nbr[cur, d]
                    if w >= 0 and free_index[w] >= 0:
                        nxt = w
                        dch = d
                        break
            wind += sign_table[cur, dch]
            flat[pos] = nxt
            pos += 1
            cur = nxt
        windings[i] = wind
        offsets[i + 1] = pos
    return windings, flat, offsets
