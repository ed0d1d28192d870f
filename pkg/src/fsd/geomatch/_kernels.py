"""Hot loops for the geo matcher.

Every kernel is written once in the numba-compatible subset of Python.  When
numba is importable and ``FSD_DISABLE_NUMBA`` is unset they are compiled with
``@njit``; otherwise the tree code runs interpreted and the distance loops
are replaced by vectorised numpy.  The choice is made once, at import.

R-tree layout (all int64 unless noted):

``meta``       [root, height, free_top, max_entries, min_entries, size]
``node_int``   per node: [count, is_leaf, parent, child_0 .. child_M]
``node_box``   float64 per node: [min_lon, min_lat, max_lon, max_lat]
``ent_box``    float64 per entry slot, same layout
``ent_leaf``   leaf node holding each entry slot, -1 when unused
``free_nodes`` stack of unused node indices, ``free_top`` entries deep
"""
from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

EARTH_RADIUS_M = 6371008.8
DEG = math.pi / 180.0

ROOT, HEIGHT, FREE_TOP, MAX_E, MIN_E, SIZE = range(6)
COUNT, LEAF, PARENT, CHILD0 = range(4)


def numba_requested() -> bool:
    flag = os.environ.get("FSD_DISABLE_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no", "off")


NUMBA_ENABLED = numba is not None and numba_requested()
BACKEND = "numba" if NUMBA_ENABLED else "python"


def jit(fn):
    if NUMBA_ENABLED:
        return numba.njit(cache=True, nogil=True)(fn)
    return fn


# ---------------------------------------------------------------- distance

@jit
def haversine(lat1, lon1, lat2, lon2):
    s1 = math.sin((lat2 - lat1) * DEG * 0.5)
    s2 = math.sin((lon2 - lon1) * DEG * 0.5)
    a = s1 * s1 + math.cos(lat1 * DEG) * math.cos(lat2 * DEG) * s2 * s2
    if a > 1.0:
        a = 1.0
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


def haversine_np(lat1, lon1, lat2, lon2):
    """Vectorised twin of :func:`haversine`, same operation order."""
    s1 = np.sin((lat2 - lat1) * DEG * 0.5)
    s2 = np.sin((lon2 - lon1) * DEG * 0.5)
    a = s1 * s1 + np.cos(lat1 * DEG) * np.cos(lat2 * DEG) * s2 * s2
    a = np.minimum(a, 1.0)
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(a))


# ---------------------------------------------------------------- R-tree helpers

@jit
def _area(b0, b1, b2, b3):
    return (b2 - b0) * (b3 - b1)


@jit
def _recompute_box(node_int, node_box, ent_box, node):
    n = node_int[node, COUNT]
    if n == 0:
        node_box[node, 0] = 0.0
        node_box[node, 1] = 0.0
        node_box[node, 2] = 0.0
        node_box[node, 3] = 0.0
        return
    src = ent_box if node_int[node, LEAF] == 1 else node_box
    c = node_int[node, CHILD0]
    x0 = src[c, 0]
    y0 = src[c, 1]
    x1 = src[c, 2]
    y1 = src[c, 3]
    for k in range(1, n):
        c = node_int[node, CHILD0 + k]
        if src[c, 0] < x0:
            x0 = src[c, 0]
        if src[c, 1] < y0:
            y0 = src[c, 1]
        if src[c, 2] > x1:
            x1 = src[c, 2]
        if src[c, 3] > y1:
            y1 = src[c, 3]
    node_box[node, 0] = x0
    node_box[node, 1] = y0
    node_box[node, 2] = x1
    node_box[node, 3] = y1


@jit
def _alloc(meta, free_nodes, node_int, leaf):
    meta[FREE_TOP] -= 1
    node = free_nodes[meta[FREE_TOP]]
    node_int[node, COUNT] = 0
    node_int[node, LEAF] = leaf
    node_int[node, PARENT] = -1
    return node


@jit
def _release(meta, free_nodes, node_int, node):
    node_int[node, COUNT] = 0
    node_int[node, PARENT] = -1
    free_nodes[meta[FREE_TOP]] = node
    meta[FREE_TOP] += 1


@jit
def _choose_leaf(meta, node_int, node_box, x0, y0, x1, y1):
    node = meta[ROOT]
    while node_int[node, LEAF] == 0:
        best = -1
        best_enl = 0.0
        best_area = 0.0
        for k in range(node_int[node, COUNT]):
            c = node_int[node, CHILD0 + k]
            a = _area(node_box[c, 0], node_box[c, 1], node_box[c, 2], node_box[c, 3])
            u = _area(min(node_box[c, 0], x0), min(node_box[c, 1], y0),
                      max(node_box[c, 2], x1), max(node_box[c, 3], y1))
            enl = u - a
            if best == -1 or enl < best_enl or (enl == best_enl and a < best_area):
                best = c
                best_enl = enl
                best_area = a
        node = best
    return node


@jit
def _split(meta, free_nodes, node_int, node_box, ent_box, ent_leaf, node):
    """Split an overflowing node at the median of its better axis."""
    n = node_int[node, COUNT]
    leaf = node_int[node, LEAF]
    src = ent_box if leaf == 1 else node_box
    kids = np.empty(n, np.int64)
    for k in range(n):
        kids[k] = node_int[node, CHILD0 + k]
    cx = np.empty(n, np.float64)
    cy = np.empty(n, np.float64)
    for k in range(n):
        c = kids[k]
        cx[k] = src[c, 0] + src[c, 2]
        cy[k] = src[c, 1] + src[c, 3]
    half = n // 2
    best_order = np.argsort(cx, kind="mergesort")
    best_cost = -1.0
    for axis in range(2):
        order = np.argsort(cx if axis == 0 else cy, kind="mergesort")
        # margin (half-perimeter) of both halves
        cost = 0.0
        for part in range(2):
            lo = 0 if part == 0 else half
            hi = half if part == 0 else n
            c = kids[order[lo]]
            x0 = src[c, 0]
            y0 = src[c, 1]
            x1 = src[c, 2]
            y1 = src[c, 3]
            for k in range(lo + 1, hi):
                c = kids[order[k]]
                x0 = min(x0, src[c, 0])
                y0 = min(y0, src[c, 1])
                x1 = max(x1, src[c, 2])
                y1 = max(y1, src[c, 3])
            cost += (x1 - x0) + (y1 - y0)
        if best_cost < 0.0 or cost < best_cost:
            best_cost = cost
            best_order = order
    sib = _alloc(meta, free_nodes, node_int, leaf)
    for k in range(half):
        node_int[node, CHILD0 + k] = kids[best_order[k]]
    node_int[node, COUNT] = half
    for k in range(half, n):
        c = kids[best_order[k]]
        node_int[sib, CHILD0 + k - half] = c
        if leaf == 1:
            ent_leaf[c] = sib
        else:
            node_int[c, PARENT] = sib
    node_int[sib, COUNT] = n - half
    _recompute_box(node_int, node_box, ent_box, node)
    _recompute_box(node_int, node_box, ent_box, sib)
    return sib


@jit
def rt_insert(meta, node_int, node_box, ent_box, ent_leaf, free_nodes, slot):
    """Insert entry ``slot`` (its box already written to ``ent_box``)."""
    max_e = meta[MAX_E]
    leaf = _choose_leaf(meta, node_int, node_box, ent_box[slot, 0], ent_box[slot, 1],
                        ent_box[slot, 2], ent_box[slot, 3])
    node_int[leaf, CHILD0 + node_int[leaf, COUNT]] = slot
    node_int[leaf, COUNT] += 1
    ent_leaf[slot] = leaf
    meta[SIZE] += 1
    node = leaf
    while True:
        if node_int[node, COUNT] > max_e:
            sib = _split(meta, free_nodes, node_int, node_box, ent_box, ent_leaf, node)
            parent = node_int[node, PARENT]
            if parent == -1:
                root = _alloc(meta, free_nodes, node_int, 0)
                node_int[root, CHILD0] = node
                node_int[root, CHILD0 + 1] = sib
                node_int[root, COUNT] = 2
                node_int[node, PARENT] = root
                node_int[sib, PARENT] = root
                _recompute_box(node_int, node_box, ent_box, root)
                meta[ROOT] = root
                meta[HEIGHT] += 1
                return
            node_int[parent, CHILD0 + node_int[parent, COUNT]] = sib
            node_int[parent, COUNT] += 1
            node_int[sib, PARENT] = parent
            node = parent
        else:
            _recompute_box(node_int, node_box, ent_box, node)
            parent = node_int[node, PARENT]
            if parent == -1:
                return
            node = parent


@jit
def _detach(node_int, parent, child):
    n = node_int[parent, COUNT]
    for k in range(n):
        if node_int[parent, CHILD0 + k] == child:
            node_int[parent, CHILD0 + k] = node_int[parent, CHILD0 + n - 1]
            node_int[parent, COUNT] = n - 1
            return


@jit
def rt_delete(meta, node_int, node_box, ent_box, ent_leaf, free_nodes, slot, orphans, stack):
    """Remove ``slot`` and condense the tree.

    Entries of eliminated underfull nodes are written to ``orphans``; the
    caller re-inserts them.  Returns the orphan count.
    """
    min_e = meta[MIN_E]
    leaf = ent_leaf[slot]
    _detach(node_int, leaf, slot)
    ent_leaf[slot] = -1
    meta[SIZE] -= 1
    n_orph = 0
    node = leaf
    while node_int[node, PARENT] != -1:
        parent = node_int[node, PARENT]
        if node_int[node, COUNT] < min_e:
            _detach(node_int, parent, node)
            # gather every entry below the eliminated node
            top = 0
            stack[top] = node
            top += 1
            while top > 0:
                top -= 1
                cur = stack[top]
                for k in range(node_int[cur, COUNT]):
                    c = node_int[cur, CHILD0 + k]
                    if node_int[cur, LEAF] == 1:
                        orphans[n_orph] = c
                        n_orph += 1
                        ent_leaf[c] = -1
                        meta[SIZE] -= 1
                    else:
                        stack[top] = c
                        top += 1
                _release(meta, free_nodes, node_int, cur)
        else:
            _recompute_box(node_int, node_box, ent_box, node)
        node = parent
    _recompute_box(node_int, node_box, ent_box, node)
    root = meta[ROOT]
    while node_int[root, LEAF] == 0 and node_int[root, COUNT] == 1:
        child = node_int[root, CHILD0]
        node_int[child, PARENT] = -1
        _release(meta, free_nodes, node_int, root)
        root = child
        meta[ROOT] = root
        meta[HEIGHT] -= 1
    if node_int[root, LEAF] == 0 and node_int[root, COUNT] == 0:
        node_int[root, LEAF] = 1
        meta[HEIGHT] = 1
    return n_orph


@jit
def rt_search(meta, node_int, node_box, ent_box, boxes, nboxes, out, stack):
    """Entry slots whose box intersects any of the first ``nboxes`` query boxes."""
    n = 0
    root = meta[ROOT]
    if node_int[root, COUNT] == 0:
        return 0
    for b in range(nboxes):
        qx0 = boxes[b, 0]
        qy0 = boxes[b, 1]
        qx1 = boxes[b, 2]
        qy1 = boxes[b, 3]
        top = 0
        stack[top] = root
        top += 1
        while top > 0:
            top -= 1
            node = stack[top]
            leaf = node_int[node, LEAF] == 1
            for k in range(node_int[node, COUNT]):
                c = node_int[node, CHILD0 + k]
                if leaf:
                    if (ent_box[c, 0] <= qx1 and ent_box[c, 2] >= qx0
                            and ent_box[c, 1] <= qy1 and ent_box[c, 3] >= qy0):
                        out[n] = c
                        n += 1
                elif (node_box[c, 0] <= qx1 and node_box[c, 2] >= qx0
                        and node_box[c, 1] <= qy1 and node_box[c, 3] >= qy0):
                    stack[top] = c
                    top += 1
    return n


@jit
def _dist_loop(lat, lon, lats, lons, out):
    for i in range(lats.shape[0]):
        out[i] = haversine(lat, lon, lats[i], lons[i])
    return out


if NUMBA_ENABLED:
    distances = _dist_loop

    @jit
    def rt_query_within(meta, node_int, node_box, ent_box, boxes, nboxes,
                        lat, lon, limit_m, out, out_d, stack):
        """Point entries inside the query boxes and within ``limit_m`` of (lat, lon)."""
        n = rt_search(meta, node_int, node_box, ent_box, boxes, nboxes, out, stack)
        k = 0
        for i in range(n):
            s = out[i]
            d = haversine(lat, lon, ent_box[s, 1], ent_box[s, 0])
            if d <= limit_m:
                out[k] = s
                out_d[k] = d
                k += 1
        return k

    @jit
    def rt_query_containing(meta, node_int, node_box, ent_box, boxes, lat, lon,
                            slot_lat, slot_lon, slot_rad, out, out_r, stack):
        """Circle entries whose circle contains (lat, lon); ``out_r`` gets distance/radius."""
        boxes[0, 0] = lon
        boxes[0, 1] = lat
        boxes[0, 2] = lon
        boxes[0, 3] = lat
        n = rt_search(meta, node_int, node_box, ent_box, boxes, 1, out, stack)
        k = 0
        for i in range(n):
            s = out[i]
            d = haversine(lat, lon, slot_lat[s], slot_lon[s])
            if d <= slot_rad[s]:
                out[k] = s
                out_r[k] = d / slot_rad[s]
                k += 1
        return k

    @jit
    def scan_within(lat, lon, lats, lons, limit_m, out, out_d):
        """Full scan: indices of all points within ``limit_m``."""
        k = 0
        for i in range(lats.shape[0]):
            d = haversine(lat, lon, lats[i], lons[i])
            if d <= limit_m:
                out[k] = i
                out_d[k] = d
                k += 1
        return k

else:
    def distances(lat, lon, lats, lons, out):
        out[:] = haversine_np(lat, lon, lats, lons)
        return out

    def rt_query_within(meta, node_int, node_box, ent_box, boxes, nboxes,
                        lat, lon, limit_m, out, out_d, stack):
        n = rt_search(meta, node_int, node_box, ent_box, boxes, nboxes, out, stack)
        slots = out[:n].copy()
        d = haversine_np(lat, lon, ent_box[slots, 1], ent_box[slots, 0])
        keep = np.nonzero(d <= limit_m)[0]
        k = keep.shape[0]
        out[:k] = slots[keep]
        out_d[:k] = d[keep]
        return k

    def rt_query_containing(meta, node_int, node_box, ent_box, boxes, lat, lon,
                            slot_lat, slot_lon, slot_rad, out, out_r, stack):
        boxes[0] = (lon, lat, lon, lat)
        n = rt_search(meta, node_int, node_box, ent_box, boxes, 1, out, stack)
        slots = out[:n].copy()
        d = haversine_np(lat, lon, slot_lat[slots], slot_lon[slots])
        rad = slot_rad[slots]
        keep = np.nonzero(d <= rad)[0]
        k = keep.shape[0]
        out[:k] = slots[keep]
        out_r[:k] = d[keep] / rad[keep]
        return k

    def scan_within(lat, lon, lats, lons, limit_m, out, out_d):
        d = haversine_np(lat, lon, lats, lons)
        idx = np.nonzero(d <= limit_m)[0]
        k = idx.shape[0]
        out[:k] = idx
        out_d[:k] = d[idx]
        return k
