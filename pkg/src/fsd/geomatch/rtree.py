"""Dynamic R-tree over flat numpy arrays.

The tree structure lives in a handful of preallocated arrays so the
insert/delete/search kernels in :mod:`._kernels` can run compiled.  This
class owns capacity: it grows the arrays before a kernel could run out of
nodes or entry slots, and hands out entry slots to callers.
"""
from __future__ import annotations

import numpy as np

from . import _kernels as K


class RTree:
    def __init__(self, max_entries: int = 16, min_entries: int | None = None,
                 node_capacity: int = 64, entry_capacity: int = 64):
        if max_entries < 4:
            raise ValueError("max_entries must be >= 4")
        min_entries = min_entries or max(2, int(max_entries * 0.4))
        if not 1 <= min_entries <= max_entries // 2:
            raise ValueError("min_entries must be in [1, max_entries // 2]")
        self.max_entries = max_entries
        self.min_entries = min_entries
        width = K.CHILD0 + max_entries + 1
        self.node_int = np.zeros((node_capacity, width), np.int64)
        self.node_int[:, K.PARENT] = -1
        self.node_box = np.zeros((node_capacity, 4), np.float64)
        self.free_nodes = np.arange(node_capacity - 1, -1, -1, dtype=np.int64)
        self.meta = np.array([0, 1, node_capacity, max_entries, min_entries, 0], np.int64)
        root = self.free_nodes[node_capacity - 1]
        self.meta[K.FREE_TOP] -= 1
        self.node_int[root, K.LEAF] = 1
        self.meta[K.ROOT] = root
        self.ent_box = np.zeros((entry_capacity, 4), np.float64)
        self.ent_leaf = np.full(entry_capacity, -1, np.int64)
        self._free_slots: list[int] = list(range(entry_capacity - 1, -1, -1))
        self._boxes = np.zeros((2, 4), np.float64)
        self._alloc_scratch()

    def _alloc_scratch(self):
        self._out = np.empty(self.ent_box.shape[0], np.int64)
        self._out_f = np.empty(self.ent_box.shape[0], np.float64)
        self._stack = np.empty(self.node_int.shape[0] * (self.max_entries + 1), np.int64)

    # -- capacity

    def _grow_nodes(self):
        old = self.node_int.shape[0]
        new = old * 2
        node_int = np.zeros((new, self.node_int.shape[1]), np.int64)
        node_int[:, K.PARENT] = -1
        node_int[:old] = self.node_int
        node_box = np.zeros((new, 4), np.float64)
        node_box[:old] = self.node_box
        top = int(self.meta[K.FREE_TOP])
        free = np.empty(new, np.int64)
        free[:top] = self.free_nodes[:top]
        free[top:top + (new - old)] = np.arange(new - 1, old - 1, -1)
        self.meta[K.FREE_TOP] = top + (new - old)
        self.node_int, self.node_box, self.free_nodes = node_int, node_box, free
        self._alloc_scratch()

    def _grow_entries(self):
        old = self.ent_box.shape[0]
        new = old * 2
        ent_box = np.zeros((new, 4), np.float64)
        ent_box[:old] = self.ent_box
        ent_leaf = np.full(new, -1, np.int64)
        ent_leaf[:old] = self.ent_leaf
        self.ent_box, self.ent_leaf = ent_box, ent_leaf
        self._free_slots.extend(range(new - 1, old - 1, -1))
        self._alloc_scratch()

    def _reserve_nodes(self):
        while self.meta[K.FREE_TOP] < self.meta[K.HEIGHT] + 2:
            self._grow_nodes()

    # -- mutation

    def _insert_slot(self, slot: int):
        self._reserve_nodes()
        K.rt_insert(self.meta, self.node_int, self.node_box, self.ent_box, self.ent_leaf,
                    self.free_nodes, slot)

    def add(self, box) -> int:
        """Insert a ``(min_lon, min_lat, max_lon, max_lat)`` box; return its slot."""
        if not self._free_slots:
            self._grow_entries()
        slot = self._free_slots.pop()
        self.ent_box[slot] = box
        self._insert_slot(slot)
        return slot

    def _unlink(self, slot: int):
        if self.ent_leaf[slot] < 0:
            raise KeyError(f"slot {slot} is not in the tree")
        n = K.rt_delete(self.meta, self.node_int, self.node_box, self.ent_box, self.ent_leaf,
                        self.free_nodes, slot, self._out, self._stack)
        for orphan in self._out[:n].tolist():
            self._insert_slot(orphan)

    def remove(self, slot: int):
        self._unlink(slot)
        self._free_slots.append(slot)

    def move(self, slot: int, box):
        self._unlink(slot)
        self.ent_box[slot] = box
        self._insert_slot(slot)

    # -- queries

    def _load(self, boxes) -> int:
        n = len(boxes)
        for i, b in enumerate(boxes):
            self._boxes[i] = b
        return n

    def search(self, boxes) -> np.ndarray:
        """Slots whose boxes intersect any of up to two query boxes."""
        n = K.rt_search(self.meta, self.node_int, self.node_box, self.ent_box,
                        self._boxes, self._load(boxes), self._out, self._stack)
        return self._out[:n].copy()

    def query_within(self, boxes, lat: float, lon: float, limit_m: float):
        """Point slots in ``boxes`` within ``limit_m`` metres of (lat, lon), with distances."""
        k = K.rt_query_within(self.meta, self.node_int, self.node_box, self.ent_box,
                              self._boxes, self._load(boxes), lat, lon, limit_m,
                              self._out, self._out_f, self._stack)
        return self._out[:k].copy(), self._out_f[:k].copy()

    def query_containing(self, lat: float, lon: float, slot_lat, slot_lon, slot_rad):
        """Circle slots containing (lat, lon), with distance / radius ratios."""
        k = K.rt_query_containing(self.meta, self.node_int, self.node_box, self.ent_box,
                                  self._boxes, lat, lon, slot_lat, slot_lon, slot_rad,
                                  self._out, self._out_f, self._stack)
        return self._out[:k].copy(), self._out_f[:k].copy()

    # -- introspection

    def __len__(self):
        return int(self.meta[K.SIZE])

    @property
    def height(self) -> int:
        return int(self.meta[K.HEIGHT])

    def check(self):
        """Raise ``AssertionError`` if any structural invariant is broken."""
        ni, nb, eb = self.node_int, self.node_box, self.ent_box
        root = int(self.meta[K.ROOT])
        assert ni[root, K.PARENT] == -1
        seen = []
        leaf_depths = set()
        todo = [(root, 1)]
        while todo:
            node, depth = todo.pop()
            n = int(ni[node, K.COUNT])
            assert n <= self.max_entries
            if node != root:
                assert n >= self.min_entries, f"node {node} underfull ({n})"
            kids = ni[node, K.CHILD0:K.CHILD0 + n]
            if ni[node, K.LEAF]:
                leaf_depths.add(depth)
                for s in kids:
                    assert self.ent_leaf[s] == node
                    seen.append(int(s))
                src = eb
            else:
                for c in kids:
                    assert ni[c, K.PARENT] == node
                    todo.append((int(c), depth + 1))
                src = nb
            if n:
                assert np.all(nb[node, :2] <= src[kids, :2].min(axis=0))
                assert np.all(nb[node, 2:] >= src[kids, 2:].max(axis=0))
                assert np.array_equal(nb[node, :2], src[kids, :2].min(axis=0))
                assert np.array_equal(nb[node, 2:], src[kids, 2:].max(axis=0))
        assert len(seen) == len(set(seen)) == len(self)
        assert leaf_depths <= {self.height}
        assert sorted(seen) == sorted(np.nonzero(self.ent_leaf >= 0)[0].tolist())
