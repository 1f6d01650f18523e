"""Compiled O(n^2) clustering loops over a condensed distance vector.

All working arrays are allocated by the caller so the memory footprint is
visible (and bounded) on the Python side.
"""
import numba as nb
import numpy as np

COMPLETE = 1
WARD = 2


@nb.njit(inline="always")
def _cidx(n, i, j):
    if i > j:
        i, j = j, i
    return n * i - (i * (i + 1)) // 2 + j - i - 1


@nb.njit(nogil=True, cache=True)
def prim_mst(d, n, Z, best, nearest, done):
    """Minimum spanning tree by Prim's algorithm, edges written to Z[:, :3].

    Among equal candidate weights the smallest vertex index wins.
    """
    for i in range(n):
        best[i] = np.inf
        done[i] = False
    cur = 0
    done[0] = True
    for k in range(n - 1):
        nxt = -1
        bmin = np.inf
        for i in range(n):
            if done[i]:
                continue
            dist = d[_cidx(n, cur, i)]
            if dist < best[i]:
                best[i] = dist
                nearest[i] = cur
            if best[i] < bmin or nxt < 0:
                bmin = best[i]
                nxt = i
        Z[k, 0] = nearest[nxt]
        Z[k, 1] = nxt
        Z[k, 2] = bmin
        done[nxt] = True
        cur = nxt


@nb.njit(inline="always")
def _before(mindist, a, b):
    return mindist[a] < mindist[b] or (mindist[a] == mindist[b] and a < b)


@nb.njit(inline="always")
def _sift_up(mindist, heap, where, pos):
    row = heap[pos]
    while pos > 0:
        parent = (pos - 1) // 2
        if not _before(mindist, row, heap[parent]):
            break
        heap[pos] = heap[parent]
        where[heap[pos]] = pos
        pos = parent
    heap[pos] = row
    where[row] = pos


@nb.njit(inline="always")
def _sift_down(mindist, heap, where, pos, count):
    row = heap[pos]
    while True:
        child = 2 * pos + 1
        if child >= count:
            break
        if child + 1 < count and _before(mindist, heap[child + 1], heap[child]):
            child += 1
        if not _before(mindist, heap[child], row):
            break
        heap[pos] = heap[child]
        where[heap[pos]] = pos
        pos = child
    heap[pos] = row
    where[row] = pos


@nb.njit(inline="always")
def _heap_fix(mindist, heap, where, row, count):
    pos = where[row]
    _sift_up(mindist, heap, where, pos)
    _sift_down(mindist, heap, where, where[row], count)


@nb.njit(inline="always")
def _heap_remove(mindist, heap, where, row, count):
    """Drop ``row`` from the heap; returns the new count."""
    pos = where[row]
    where[row] = -1
    count -= 1
    if pos < count:
        heap[pos] = heap[count]
        where[heap[pos]] = pos
        _heap_fix(mindist, heap, where, heap[pos], count)
    return count


@nb.njit(inline="always")
def _lw(method, dxi, dxj, dij, nx, ni, nj):
    """Lance-Williams distance from cluster x to the union of i and j."""
    if method == COMPLETE:
        return max(dxi, dxj)
    return ((nx + ni) * dxi + (nx + nj) * dxj - nx * dij) / (nx + ni + nj)


@nb.njit(inline="always")
def _scan_row(d, n, mindist, nghbr, i):
    """Nearest partner j > i, smallest j on ties; False if none is active.

    Entries of retired clusters hold +inf, so no activity check is needed.
    """
    best = np.inf
    arg = -1
    base = n * i - (i * (i + 1)) // 2 - i - 1
    for j in range(i + 1, n):
        v = d[base + j]
        if v < best:
            best = v
            arg = j
    mindist[i] = best
    nghbr[i] = arg
    return arg >= 0


@nb.njit(nogil=True, cache=True)
def generic_linkage(d, n, method, Z, size, mindist, nghbr, heap, where):
    """Closest-pair agglomeration with Lance-Williams updates; d is overwritten.

    Each row i caches its nearest active partner j > i and a heap orders
    rows by (distance, i), so every step merges the lexicographically
    smallest closest pair. A cached distance is only a lower bound and is
    rechecked when its row reaches the top. The merged cluster keeps the
    lower slot, so a slot is always its cluster's smallest leaf. Every
    entry of the retired slot is set to +inf as the update passes it.
    Rows are written as (slot a, slot b, height) with a < b. Heights are
    clamped to the running maximum, which only matters at floating-point
    round-off.
    """
    for i in range(n):
        size[i] = 1
        where[i] = -1
    count = 0
    for i in range(n - 1):
        _scan_row(d, n, mindist, nghbr, i)
        heap[count] = i
        where[i] = count
        count += 1
    for pos in range(count // 2 - 1, -1, -1):
        _sift_down(mindist, heap, where, pos, count)
    top = 0.0
    for k in range(n - 1):
        while True:
            i = heap[0]
            j = nghbr[i]
            if size[j] > 0 and d[_cidx(n, i, j)] == mindist[i]:
                break
            if _scan_row(d, n, mindist, nghbr, i):
                _sift_down(mindist, heap, where, 0, count)
            else:
                count = _heap_remove(mindist, heap, where, i, count)
        cur = mindist[i]
        top = max(top, cur)
        Z[k, 0] = i
        Z[k, 1] = j
        Z[k, 2] = top
        ni = float(size[i])
        nj = float(size[j])
        size[i] += size[j]
        size[j] = 0
        if where[j] >= 0:
            count = _heap_remove(mindist, heap, where, j, count)
        d[_cidx(n, i, j)] = np.inf
        # m < i: column entries (m, i) and (m, j); offsets advance by n - m - 2
        base = -1
        for m in range(i):
            if size[m] > 0:
                v = _lw(method, d[base + i], d[base + j], cur, float(size[m]), ni, nj)
                d[base + i] = v
                d[base + j] = np.inf
                if v < mindist[m]:
                    mindist[m] = v
                    nghbr[m] = i
                    _sift_up(mindist, heap, where, where[m])
                elif v == mindist[m] and i < nghbr[m]:
                    nghbr[m] = i
            base += n - m - 2
        # i < m < j: row entry (i, m), column entry (m, j)
        row_i = _cidx(n, i, i + 1) - i - 1
        col = _cidx(n, i + 1, j) if i + 1 < j else 0
        for m in range(i + 1, j):
            if size[m] > 0:
                d[row_i + m] = _lw(method, d[row_i + m], d[col], cur, float(size[m]), ni, nj)
                d[col] = np.inf
            col += n - m - 2
        # m > j: row entries (i, m) and (j, m); retired m stays at +inf
        row_j = _cidx(n, j, j + 1) - j - 1 if j + 1 < n else 0
        for m in range(j + 1, n):
            d[row_i + m] = _lw(method, d[row_i + m], d[row_j + m], cur, float(size[m]), ni, nj)
            d[row_j + m] = np.inf
        if where[i] >= 0:
            if _scan_row(d, n, mindist, nghbr, i):
                _heap_fix(mindist, heap, where, i, count)
            else:
                count = _heap_remove(mindist, heap, where, i, count)


@nb.njit(inline="always")
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@nb.njit(nogil=True, cache=True)
def relabel(Z, n, parent, node, size):
    """Turn height-sorted (leaf, leaf, height) rows into node references.

    Union-find roots are kept at the smallest leaf of each set, so the left
    child of every merge is the one holding the smaller leaf index.
    """
    for i in range(n):
        parent[i] = i
        node[i] = i
        size[i] = 1
    for k in range(n - 1):
        a = _find(parent, int(Z[k, 0]))
        b = _find(parent, int(Z[k, 1]))
        if a > b:
            a, b = b, a
        s = size[a] + size[b]
        Z[k, 0] = node[a]
        Z[k, 1] = node[b]
        Z[k, 3] = s
        parent[b] = a
        node[a] = n + k
        size[a] = s
