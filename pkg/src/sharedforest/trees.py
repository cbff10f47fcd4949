"""Decision trees over the unit hypercube, stored in a flat arena.

A tree encodes a recursive partition of [0, 1]^P.  Branch nodes carry a
rule ``x[axis] <= cutpoint`` (ties route left, fixed project-wide) and
two children; every point routes to exactly one leaf.  Nodes live in
parallel numpy arrays indexed by an arena slot, which doubles as the
stable leaf id: growing a leaf allocates two fresh slots, pruning frees
the two child slots, and the slot of a surviving node never changes.
The arrays make routing a handful of vectorized gathers per tree level,
which is what the sampler spends most of its time doing.

Trees are treated as immutable once published in a posterior snapshot;
mutation happens only inside the single-threaded sampler loop.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidTreeError

__all__ = [
    "Tree",
    "evaluate_forest",
    "tree_to_json_obj",
    "tree_from_json_obj",
]

_LEAF = -1
_FREE = -2

_INITIAL_CAPACITY = 8


class Tree:
    """Binary decision tree over [0, 1]^P with arena storage.

    Attributes
    ----------
    n_axes : int
        Number of predictors P.
    feature : ndarray of int32
        Split axis per slot; -1 marks a leaf, -2 a free slot.
    threshold : ndarray of float64
        Cutpoint per branch slot (NaN elsewhere).
    left, right, parent : ndarray of int32
        Child and parent slots (-1 where absent).
    depth : ndarray of int32
        Depth per slot (root is 0).
    """

    __slots__ = (
        "n_axes",
        "feature",
        "threshold",
        "left",
        "right",
        "parent",
        "depth",
        "_free",
        "_leaves",
        "_leaf_pos",
    )

    def __init__(self, n_axes: int):
        if n_axes < 1:
            raise InvalidTreeError("tree needs at least one predictor axis")
        cap = _INITIAL_CAPACITY
        self.n_axes = int(n_axes)
        self.feature = np.full(cap, _FREE, dtype=np.int32)
        self.threshold = np.full(cap, np.nan)
        self.left = np.full(cap, -1, dtype=np.int32)
        self.right = np.full(cap, -1, dtype=np.int32)
        self.parent = np.full(cap, -1, dtype=np.int32)
        self.depth = np.zeros(cap, dtype=np.int32)
        self._free = list(range(cap - 1, 0, -1))
        self.feature[0] = _LEAF
        self._leaves = None
        self._leaf_pos = None

    # -- construction and copying -------------------------------------

    @classmethod
    def single_leaf(cls, n_axes: int) -> "Tree":
        """A tree whose root is its only leaf (the MCMC initial state)."""
        return cls(n_axes)

    def copy(self) -> "Tree":
        dup = Tree.__new__(Tree)
        dup.n_axes = self.n_axes
        dup.feature = self.feature.copy()
        dup.threshold = self.threshold.copy()
        dup.left = self.left.copy()
        dup.right = self.right.copy()
        dup.parent = self.parent.copy()
        dup.depth = self.depth.copy()
        dup._free = list(self._free)
        dup._leaves = None
        dup._leaf_pos = None
        return dup

    @property
    def capacity(self) -> int:
        return self.feature.shape[0]

    def _grow_arena(self) -> None:
        old = self.capacity
        new = old * 2
        for name in ("feature", "threshold", "left", "right", "parent", "depth"):
            arr = getattr(self, name)
            ext = np.empty(new, dtype=arr.dtype)
            ext[:old] = arr
            setattr(self, name, ext)
        self.feature[old:] = _FREE
        self.threshold[old:] = np.nan
        self.left[old:] = -1
        self.right[old:] = -1
        self.parent[old:] = -1
        self.depth[old:] = 0
        self._free.extend(range(new - 1, old - 1, -1))

    def _alloc(self) -> int:
        if not self._free:
            self._grow_arena()
        return self._free.pop()

    def _invalidate(self) -> None:
        self._leaves = None
        self._leaf_pos = None

    # -- queries --------------------------------------------------------

    def leaves(self) -> np.ndarray:
        """Arena slots of the leaf nodes, ascending."""
        if self._leaves is None:
            self._leaves = np.flatnonzero(self.feature == _LEAF).astype(np.int32)
        return self._leaves

    def branches(self) -> np.ndarray:
        """Arena slots of the branch nodes, ascending."""
        return np.flatnonzero(self.feature >= 0).astype(np.int32)

    def nogs(self) -> np.ndarray:
        """Branches whose two children are both leaves (prunable)."""
        b = self.branches()
        if b.size == 0:
            return b
        both = (self.feature[self.left[b]] == _LEAF) & (
            self.feature[self.right[b]] == _LEAF
        )
        return b[both]

    def n_leaves(self) -> int:
        return int(self.leaves().size)

    def n_branches(self) -> int:
        return int(np.count_nonzero(self.feature >= 0))

    def max_depth(self) -> int:
        return int(self.depth[self.feature != _FREE].max())

    def is_leaf(self, slot: int) -> bool:
        return self.feature[slot] == _LEAF

    def leaf_positions(self) -> np.ndarray:
        """Map arena slot -> compact leaf index in 0..L-1 (-1 for non-leaves)."""
        if self._leaf_pos is None:
            pos = np.full(self.capacity, -1, dtype=np.int32)
            pos[self.leaves()] = np.arange(self.n_leaves(), dtype=np.int32)
            self._leaf_pos = pos
        return self._leaf_pos

    # -- structural edits ------------------------------------------------

    def grow(self, leaf_slot: int, axis: int, cutpoint: float) -> tuple[int, int]:
        """Split ``leaf_slot`` on ``x[axis] <= cutpoint``; return child slots."""
        if self.feature[leaf_slot] != _LEAF:
            raise InvalidTreeError(f"grow target {leaf_slot} is not a leaf")
        lc = self._alloc()
        rc = self._alloc()
        self.feature[leaf_slot] = axis
        self.threshold[leaf_slot] = cutpoint
        self.left[leaf_slot] = lc
        self.right[leaf_slot] = rc
        for c in (lc, rc):
            self.feature[c] = _LEAF
            self.threshold[c] = np.nan
            self.left[c] = -1
            self.right[c] = -1
            self.parent[c] = leaf_slot
            self.depth[c] = self.depth[leaf_slot] + 1
        self._invalidate()
        return lc, rc

    def prune(self, branch_slot: int) -> None:
        """Collapse a nog branch back into a leaf, retiring its children."""
        lc, rc = self.left[branch_slot], self.right[branch_slot]
        if lc < 0 or self.feature[lc] != _LEAF or self.feature[rc] != _LEAF:
            raise InvalidTreeError(f"prune target {branch_slot} is not a nog branch")
        # Free right-then-left so a later grow at this slot reallocates the
        # same (left, right) pair and move-then-reverse restores bit-exactly.
        for c in (int(rc), int(lc)):
            self.feature[c] = _FREE
            self.threshold[c] = np.nan
            self.parent[c] = -1
            self._free.append(c)
        self.feature[branch_slot] = _LEAF
        self.threshold[branch_slot] = np.nan
        self.left[branch_slot] = -1
        self.right[branch_slot] = -1
        self._invalidate()

    def set_rule(self, branch_slot: int, axis: int, cutpoint: float) -> None:
        """Replace the split rule of an existing branch (change move)."""
        if self.feature[branch_slot] < 0:
            raise InvalidTreeError(f"change target {branch_slot} is not a branch")
        self.feature[branch_slot] = axis
        self.threshold[branch_slot] = cutpoint

    def subtree_slots(self, slot: int) -> list[int]:
        """All slots of the subtree rooted at ``slot`` (preorder)."""
        out = []
        stack = [int(slot)]
        while stack:
            s = stack.pop()
            out.append(s)
            if self.feature[s] >= 0:
                stack.append(int(self.right[s]))
                stack.append(int(self.left[s]))
        return out

    # -- geometry ---------------------------------------------------------

    def bounds(self, slot: int) -> tuple[np.ndarray, np.ndarray]:
        """Hyperrectangle (lower, upper) of the cell leading to ``slot``.

        Obtained by intersecting the ancestor half-spaces with [0,1]^P.
        """
        lower = np.zeros(self.n_axes)
        upper = np.ones(self.n_axes)
        child = int(slot)
        par = int(self.parent[child])
        while par >= 0:
            ax = int(self.feature[par])
            cut = float(self.threshold[par])
            if child == int(self.left[par]):
                if cut < upper[ax]:
                    upper[ax] = cut
            else:
                if cut > lower[ax]:
                    lower[ax] = cut
            child = par
            par = int(self.parent[child])
        return lower, upper

    def validate(self) -> None:
        """Raise InvalidTreeError on any structural or geometric violation."""
        seen = set()
        stack = [(0, 0)]
        while stack:
            slot, d = stack.pop()
            if slot in seen:
                raise InvalidTreeError("cycle in tree arena")
            seen.add(slot)
            if self.depth[slot] != d:
                raise InvalidTreeError(f"depth mismatch at slot {slot}")
            f = int(self.feature[slot])
            if f == _FREE:
                raise InvalidTreeError(f"free slot {slot} reachable from root")
            if f >= 0:
                if not 0 <= f < self.n_axes:
                    raise InvalidTreeError(f"axis {f} out of range at slot {slot}")
                lo, up = self.bounds(slot)
                cut = float(self.threshold[slot])
                if not lo[f] < cut < up[f]:
                    raise InvalidTreeError(
                        f"cutpoint {cut} outside ({lo[f]}, {up[f]}) at slot {slot}"
                    )
                lc, rc = int(self.left[slot]), int(self.right[slot])
                if self.parent[lc] != slot or self.parent[rc] != slot:
                    raise InvalidTreeError(f"parent link broken under slot {slot}")
                stack.append((lc, d + 1))
                stack.append((rc, d + 1))
        alive = set(np.flatnonzero(self.feature != _FREE).tolist())
        if alive != seen:
            raise InvalidTreeError("unreachable live slots in arena")

    # -- routing ------------------------------------------------------------

    def traverse(self, X: np.ndarray, rows=None, start: int = 0) -> np.ndarray:
        """Route points to leaves; returns the leaf arena slot per row.

        Parameters
        ----------
        X : ndarray, shape (n, P)
            Points in [0,1]^P.
        rows : ndarray of int, optional
            Subset of rows to route (all rows by default).
        start : int
            Slot to start the descent from (the root by default).
        """
        if rows is None:
            n = X.shape[0]
            cur = np.full(n, start, dtype=np.int32)
            ridx = None
        else:
            cur = np.full(len(rows), start, dtype=np.int32)
            ridx = np.asarray(rows)
        while True:
            feat = self.feature[cur]
            active = feat >= 0
            if not active.any():
                return cur
            act = np.flatnonzero(active)
            nodes = cur[act]
            if ridx is None:
                xvals = X[act, self.feature[nodes]]
            else:
                xvals = X[ridx[act], self.feature[nodes]]
            go_left = xvals <= self.threshold[nodes]
            cur[act] = np.where(go_left, self.left[nodes], self.right[nodes])

    def traverse_one(self, x: np.ndarray) -> int:
        """Scalar routing of a single point; returns the leaf arena slot."""
        slot = 0
        while self.feature[slot] >= 0:
            if x[self.feature[slot]] <= self.threshold[slot]:
                slot = int(self.left[slot])
            else:
                slot = int(self.right[slot])
        return slot


def evaluate_forest(trees, leaf_values, X: np.ndarray) -> np.ndarray:
    """Sum of per-tree leaf values at the leaves containing each row of X.

    Parameters
    ----------
    trees : sequence of Tree
    leaf_values : sequence of ndarray
        ``leaf_values[t]`` maps arena slots of ``trees[t]`` to leaf values.
    X : ndarray, shape (n, P)

    Returns
    -------
    ndarray, shape (n,)
    """
    total = np.zeros(X.shape[0])
    for tree, vals in zip(trees, leaf_values):
        total += vals[tree.traverse(X)]
    return total


def tree_to_json_obj(tree: Tree, leaf_values: dict | None = None) -> dict:
    """JSON-ready form of a tree: a node list in the documented schema.

    Each node is ``{"id", "kind", "axis", "cutpoint", "children"}`` for
    branches and ``{"id", "kind", "values"}`` for leaves, where ``values``
    maps a component name to that leaf's parameter(s).  Axes are 0-based.
    Floats survive a JSON round trip bit-exactly (shortest-repr encoding).
    """
    leaf_values = leaf_values or {}
    nodes = []
    for slot in tree.subtree_slots(0):
        if tree.feature[slot] >= 0:
            nodes.append(
                {
                    "id": int(slot),
                    "kind": "branch",
                    "axis": int(tree.feature[slot]),
                    "cutpoint": float(tree.threshold[slot]),
                    "children": [int(tree.left[slot]), int(tree.right[slot])],
                }
            )
        else:
            vals = {}
            for name, arr in leaf_values.items():
                v = arr[slot] if np.ndim(arr) == 1 else arr[:, slot]
                vals[name] = float(v) if np.ndim(v) == 0 else [float(u) for u in v]
            nodes.append({"id": int(slot), "kind": "leaf", "values": vals})
    return {"n_axes": tree.n_axes, "nodes": nodes}


def tree_from_json_obj(obj: dict) -> tuple[Tree, dict]:
    """Rebuild a tree (and its leaf-value arrays) from the JSON node list."""
    by_id = {node["id"]: node for node in obj["nodes"]}
    tree = Tree(obj["n_axes"])
    cap = max(by_id) + 1
    while tree.capacity < cap:
        tree._grow_arena()
    tree.feature[:] = _FREE
    tree.threshold[:] = np.nan
    tree.left[:] = -1
    tree.right[:] = -1
    tree.parent[:] = -1
    tree.depth[:] = 0

    value_names = []
    for node in by_id.values():
        if node["kind"] == "leaf":
            value_names = list(node["values"].keys())
            break
    values = {name: {} for name in value_names}

    stack = [(0, -1, 0)]
    seen = set()
    while stack:
        nid, par, d = stack.pop()
        node = by_id[nid]
        seen.add(nid)
        tree.parent[nid] = par
        tree.depth[nid] = d
        if node["kind"] == "branch":
            tree.feature[nid] = node["axis"]
            tree.threshold[nid] = node["cutpoint"]
            lc, rc = node["children"]
            tree.left[nid] = lc
            tree.right[nid] = rc
            stack.append((rc, nid, d + 1))
            stack.append((lc, nid, d + 1))
        else:
            tree.feature[nid] = _LEAF
            for name in value_names:
                values[name][nid] = node["values"][name]
    tree._free = [s for s in range(tree.capacity - 1, -1, -1) if s not in seen]
    tree._invalidate()

    out_values = {}
    for name, mapping in values.items():
        sample = next(iter(mapping.values())) if mapping else 0.0
        if isinstance(sample, list):
            arr = np.zeros((len(sample), tree.capacity))
            for slot, v in mapping.items():
                arr[:, slot] = v
        else:
            arr = np.zeros(tree.capacity)
            for slot, v in mapping.items():
                arr[slot] = v
        out_values[name] = arr
    return tree, out_values
