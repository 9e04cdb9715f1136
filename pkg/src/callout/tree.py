"""Metric-tree index and the structural accessors the rankings consume.

The tree stores up to ``capacity`` objects per node. Each internal entry
holds one object, a covering radius for its child's subtree, and the child
itself; that object is also stored inside the child, as the child's
representative. All dataset objects live in exactly one leaf.

Construction is incremental: objects descend to the nearest-entry leaf,
overflowing nodes split along the longest edge of a minimal spanning tree
over their objects, and each half promotes its medoid. When a split (or a
chained fix) removes a node's representative from the node, the parent
entry is substituted with the node's current medoid so the representative
chain stays intact. All tie rules are fixed, so construction is
deterministic for fixed inputs.
"""

from __future__ import annotations

import numpy as np

from .dataset import MetricDataset


class Entry:
    """One node slot: an object, its covering radius, and an optional child.

    ``dist_to_rep`` caches the distance from this entry's object to the
    representative of the node holding the entry (0.0 in the root, which
    has no representative).
    """

    __slots__ = ("object_id", "radius", "child", "dist_to_rep")

    def __init__(self, object_id: int, radius: float = 0.0,
                 child: "TreeNode | None" = None, dist_to_rep: float = 0.0):
        self.object_id = object_id
        self.radius = radius
        self.child = child
        self.dist_to_rep = dist_to_rep

    def __repr__(self):  # pragma: no cover - debugging aid
        kind = "leaf-entry" if self.child is None else f"child={self.child.node_id}"
        return f"Entry({self.object_id}, r={self.radius:.4g}, {kind})"


class TreeNode:
    __slots__ = ("node_id", "is_leaf", "entries", "parent")

    def __init__(self, node_id: int, is_leaf: bool, parent: "TreeNode | None" = None):
        self.node_id = node_id
        self.is_leaf = is_leaf
        self.entries: list[Entry] = []
        self.parent = parent

    def objects(self) -> list[int]:
        return [e.object_id for e in self.entries]

    def __repr__(self):  # pragma: no cover - debugging aid
        kind = "leaf" if self.is_leaf else "node"
        return f"<{kind} {self.node_id}: {self.objects()}>"


class SlimTree:
    """The built index: root, capacity, and an object-to-leaf map."""

    def __init__(self, capacity: int):
        if capacity < 3:
            raise ValueError(f"capacity must be >= 3, got {capacity}")
        self.capacity = capacity
        self._next_id = 0
        self.root = self._new_node(is_leaf=True)
        self.leaf_of: dict[int, TreeNode] = {}
        self.height = 1

    def _new_node(self, is_leaf: bool, parent: TreeNode | None = None) -> TreeNode:
        node = TreeNode(self._next_id, is_leaf, parent)
        self._next_id += 1
        return node

    @property
    def n(self) -> int:
        return len(self.leaf_of)

    def leaves(self) -> list[TreeNode]:
        """All leaf nodes, in a deterministic traversal order."""
        out: list[TreeNode] = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend(reversed([e.child for e in node.entries]))
        return out

    def nodes(self) -> list[TreeNode]:
        out: list[TreeNode] = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            out.append(node)
            if not node.is_leaf:
                stack.extend(reversed([e.child for e in node.entries]))
        return out


def parent_entry(node: TreeNode) -> Entry | None:
    """The entry in ``node``'s parent that points at ``node``."""
    if node.parent is None:
        return None
    for e in node.parent.entries:
        if e.child is node:
            return e
    raise RuntimeError(f"node {node.node_id} missing from its parent")  # pragma: no cover


def node_rep_id(node: TreeNode) -> int | None:
    """The node's representative object id (None for the root)."""
    e = parent_entry(node)
    return None if e is None else e.object_id


def _medoid_pos(ids: list[int], D: np.ndarray) -> int:
    """Position of the medoid: minimal max-distance to the others, ties by id."""
    if len(ids) == 1:
        return 0
    worst = D.max(axis=1)
    return min(range(len(ids)), key=lambda t: (worst[t], ids[t]))


def _mst_edges(ids: list[int], D: np.ndarray) -> list[tuple[float, int, int, int, int]]:
    """Prim MST over the complete graph of ``ids``.

    Growth starts at the smallest object id; frontier ties break by object
    id and an equal-distance attachment keeps its earlier parent, so the
    chosen tree is deterministic even with tied weights. Returns edges as
    (weight, smaller id, larger id, pos_a, pos_b).
    """
    k = len(ids)
    ids_arr = np.asarray(ids)
    start = int(np.argmin(ids_arr))
    in_tree = np.zeros(k, dtype=bool)
    in_tree[start] = True
    best_dist = D[start].copy()
    best_parent = np.full(k, start)
    edges = []
    for _ in range(k - 1):
        cand = np.flatnonzero(~in_tree)
        sub = best_dist[cand]
        m = sub.min()
        ties = cand[sub == m]
        nxt = int(ties[np.argmin(ids_arr[ties])])
        pa = int(best_parent[nxt])
        ia, ib = ids[pa], ids[nxt]
        if ia > ib:
            ia, ib, pa, pb = ib, ia, nxt, pa
        else:
            pb = nxt
        edges.append((float(m), ia, ib, pa, pb))
        in_tree[nxt] = True
        closer = D[nxt] < best_dist
        best_dist = np.where(closer, D[nxt], best_dist)
        best_parent = np.where(closer, nxt, best_parent)
    return edges


def _split_partition(ids: list[int], D: np.ndarray) -> tuple[list[int], list[int]]:
    """Positions of the two components after removing the longest MST edge.

    Ties on edge weight are broken toward the lexicographically largest
    (id, id) endpoint pair, so a set of identical objects splits 1-vs-rest.
    """
    k = len(ids)
    mst = _mst_edges(ids, D)
    cut = max(mst, key=lambda e: (e[0], e[1], e[2]))
    parent = list(range(k))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for edge in mst:
        if edge is cut:
            continue
        parent[find(edge[3])] = find(edge[4])
    root_a = find(cut[3])
    comp_a = [p for p in range(k) if find(p) == root_a]
    comp_b = [p for p in range(k) if find(p) != root_a]
    return comp_a, comp_b


class _SplitPieces:
    __slots__ = ("node_a", "node_b", "rep_a", "rep_b", "radius_a", "radius_b")

    def __init__(self, node_a, node_b, rep_a, rep_b, radius_a, radius_b):
        self.node_a = node_a
        self.node_b = node_b
        self.rep_a = rep_a
        self.rep_b = rep_b
        self.radius_a = radius_a
        self.radius_b = radius_b


def _split_pieces(tree: SlimTree, ds: MetricDataset, node: TreeNode) -> _SplitPieces:
    """Partition an overflowing node into two fresh nodes (not yet installed)."""
    ids = node.objects()
    D = ds.pairwise(ids)
    comp_a, comp_b = _split_partition(ids, D)

    def build(comp: list[int]) -> tuple[TreeNode, int, float]:
        rep_pos = comp[_medoid_pos([ids[p] for p in comp], D[np.ix_(comp, comp)])]
        rep = ids[rep_pos]
        fresh = tree._new_node(is_leaf=node.is_leaf)
        radius = 0.0
        for p in comp:
            e = node.entries[p]
            e.dist_to_rep = float(D[p, rep_pos])
            fresh.entries.append(e)
            if node.is_leaf:
                tree.leaf_of[e.object_id] = fresh
                radius = max(radius, float(D[p, rep_pos]))
            else:
                e.child.parent = fresh
                radius = max(radius, float(D[p, rep_pos]) + e.radius)
        return fresh, rep, radius

    node_a, rep_a, radius_a = build(comp_a)
    node_b, rep_b, radius_b = build(comp_b)
    return _SplitPieces(node_a, node_b, rep_a, rep_b, radius_a, radius_b)


def split_node(node: TreeNode, ds: MetricDataset, tree: SlimTree) -> tuple[TreeNode, TreeNode, tuple[int, int]]:
    """Split an overflowing node; returns the two nodes and their promoted reps.

    Low-level surface; :func:`insert_object` calls the installing variant
    that also wires the pieces into the parent.
    """
    pieces = _split_pieces(tree, ds, node)
    return pieces.node_a, pieces.node_b, (pieces.rep_a, pieces.rep_b)


def _install_split(tree: SlimTree, ds: MetricDataset, node: TreeNode) -> None:
    pieces = _split_pieces(tree, ds, node)
    a, b = pieces.node_a, pieces.node_b
    if node is tree.root:
        new_root = tree._new_node(is_leaf=False)
        a.parent = b.parent = new_root
        new_root.entries = [
            Entry(pieces.rep_a, pieces.radius_a, a, 0.0),
            Entry(pieces.rep_b, pieces.radius_b, b, 0.0),
        ]
        tree.root = new_root
        tree.height += 1
        return

    parent = node.parent
    a.parent = b.parent = parent
    old = parent_entry(node)
    old_obj = old.object_id
    rep_parent = node_rep_id(parent)
    d_a = ds.distance(pieces.rep_a, rep_parent) if rep_parent is not None else 0.0
    d_b = ds.distance(pieces.rep_b, rep_parent) if rep_parent is not None else 0.0
    pos = parent.entries.index(old)
    parent.entries[pos:pos + 1] = [
        Entry(pieces.rep_a, pieces.radius_a, a, d_a),
        Entry(pieces.rep_b, pieces.radius_b, b, d_b),
    ]
    if len(parent.entries) > tree.capacity:
        _install_split(tree, ds, parent)
    elif old_obj not in (pieces.rep_a, pieces.rep_b):
        _ensure_rep(tree, ds, parent)


def _ensure_rep(tree: SlimTree, ds: MetricDataset, node: TreeNode) -> None:
    """Restore the representative chain after node's entry objects changed.

    If the object the parent lists for ``node`` is no longer stored in
    ``node``, substitute the node's current medoid, recompute the parent
    entry's covering radius (triangle-inequality bound) and cached
    distances, and recurse upward in case the swapped-out object was the
    parent's own representative.
    """
    if node.parent is None:
        return
    pe = parent_entry(node)
    ids = node.objects()
    if pe.object_id in ids:
        return
    D = ds.pairwise(ids)
    q_pos = _medoid_pos(ids, D)
    pe.object_id = ids[q_pos]
    radius = 0.0
    for p, e in enumerate(node.entries):
        e.dist_to_rep = float(D[p, q_pos])
        extent = float(D[p, q_pos]) + (0.0 if node.is_leaf else e.radius)
        radius = max(radius, extent)
    pe.radius = radius
    gp_rep = node_rep_id(node.parent)
    pe.dist_to_rep = ds.distance(pe.object_id, gp_rep) if gp_rep is not None else 0.0
    _ensure_rep(tree, ds, node.parent)


def insert_object(tree: SlimTree, ds: MetricDataset, oid: int) -> None:
    """Insert one object: descend to the nearest entry at each level, then
    store in that leaf, splitting on overflow.

    Descent ties: smaller child occupancy, then smaller object id. Covering
    radii along the path are widened as needed.
    """
    if oid in tree.leaf_of:
        raise ValueError(f"object {oid} already in tree")
    node = tree.root
    d_rep = 0.0
    while not node.is_leaf:
        objs = node.objects()
        dvec = ds.distances(oid, objs)
        best = int(np.argmin(dvec))
        ties = np.flatnonzero(dvec == dvec[best])
        if ties.size > 1:
            best = min(
                (int(t) for t in ties),
                key=lambda t: (len(node.entries[t].child.entries), objs[t]),
            )
        e = node.entries[best]
        d = float(dvec[best])
        if d > e.radius:
            e.radius = d
        d_rep = d
        node = e.child
    node.entries.append(Entry(oid, 0.0, None, d_rep if node.parent is not None else 0.0))
    tree.leaf_of[oid] = node
    if len(node.entries) > tree.capacity:
        _install_split(tree, ds, node)


def build_tree(ds: MetricDataset, order, capacity: int = 32) -> SlimTree:
    """Build the index by inserting objects in the *reverse* of ``order``.

    ``order`` is a ranking (a permutation of 0..n-1, most-outlier-like
    first); reversing it inserts the most inlier-like objects first, so
    they get picked as node representatives.
    """
    order = np.asarray(order, dtype=int)
    n = ds.n
    if order.shape != (n,) or not np.array_equal(np.sort(order), np.arange(n)):
        raise ValueError("order must be a permutation of 0..n-1")
    tree = SlimTree(capacity)
    for oid in order[::-1]:
        insert_object(tree, ds, int(oid))
    return tree


# ---------------------------------------------------------------------------
# Accessors used by the rankings. All are pure given (tree, ds).


def root_objects(tree: SlimTree) -> list[int]:
    """Objects stored in the root node, in entry order."""
    return tree.root.objects()


def _argmin_by_id(ids, dvec) -> tuple[int, float]:
    best = int(np.argmin(dvec))
    ties = np.flatnonzero(dvec == dvec[best])
    if ties.size > 1:
        best = min((int(t) for t in ties), key=lambda t: ids[t])
    return ids[best], float(dvec[best])


def closest_root_object(tree: SlimTree, ds: MetricDataset, i: int) -> tuple[int, float]:
    """Nearest *foreign* root object to ``i``.

    Root objects summarize the inlier clusters, and a healthy cluster
    spreads over several nodes, so every inlier has a nearby root object
    that is not its own leaf's representative. The candidate set therefore
    excludes the representative of i's leaf (and i itself, which is the
    same object whenever i reaches the root): without the exclusion, any
    object whose leaf representative reaches the root - every member of a
    microcluster that owns a leaf, in particular - would be pinned to a
    near-zero distance and masked. Falls back to (i, 0.0) when no
    candidate remains (single-object trees).
    """
    if i not in tree.leaf_of:
        raise ValueError(f"object {i} not in tree")
    leaf = tree.leaf_of[i]
    exclude = {i}
    rep = node_rep_id(leaf)
    if rep is not None:
        exclude.add(rep)
    R = [oid for oid in root_objects(tree) if oid not in exclude]
    if not R:
        return i, 0.0
    return _argmin_by_id(R, ds.distances(i, R))


def sibling_representatives(tree: SlimTree, i: int) -> list[int]:
    """Representatives of the sibling leaves of i's leaf (may be empty)."""
    leaf = tree.leaf_of[i]
    if leaf.parent is None:
        return []
    return [e.object_id for e in leaf.parent.entries if e.child is not leaf]


def foreign_representative(tree: SlimTree, ds: MetricDataset, i: int) -> tuple[int, float] | None:
    """Nearest representative among sibling leaves, or None when there are none."""
    if i not in tree.leaf_of:
        raise ValueError(f"object {i} not in tree")
    E = sibling_representatives(tree, i)
    if not E:
        return None
    return _argmin_by_id(E, ds.distances(i, E))


def approx_nearest_neighbor(tree: SlimTree, ds: MetricDataset, i: int) -> tuple[int, float]:
    """Nearest co-leaf object to ``i``.

    A singleton leaf has no co-leaf candidate; fall back to the foreign
    representative, or to (i, 0.0) when that does not exist either.
    """
    if i not in tree.leaf_of:
        raise ValueError(f"object {i} not in tree")
    leaf = tree.leaf_of[i]
    others = [oid for oid in leaf.objects() if oid != i]
    if others:
        return _argmin_by_id(others, ds.distances(i, others))
    fallback = foreign_representative(tree, ds, i)
    return fallback if fallback is not None else (i, 0.0)


def leaf_representative(tree: SlimTree, ds: MetricDataset, leaf: TreeNode) -> int:
    """The leaf's representative object.

    Normally the parent entry's object. A root that is itself a leaf has no
    parent, so its medoid stands in (same rule as split promotion).
    """
    rep = node_rep_id(leaf)
    if rep is not None:
        return rep
    ids = leaf.objects()
    D = ds.pairwise(ids)
    return ids[_medoid_pos(ids, D)]


def normalized_nn_distance(tree: SlimTree, ds: MetricDataset, i: int) -> float:
    """Leaf-local NN distance of ``i``, normalized by the leaf representative's own.

    The +1 in the denominator keeps the value finite for zero-radius leaves.
    """
    leaf = tree.leaf_of[i]
    _, d_i = approx_nearest_neighbor(tree, ds, i)
    rep = leaf_representative(tree, ds, leaf)
    _, d_rep = approx_nearest_neighbor(tree, ds, rep)
    return d_i / (1.0 + d_rep)


def normalized_leaf_radius(tree: SlimTree, ds: MetricDataset, leaf: TreeNode) -> float:
    """Distance from the leaf's representative to its farthest member,
    normalized by the representative's NN distance."""
    if not leaf.is_leaf:
        raise ValueError(f"node {leaf.node_id} is not a leaf")
    rep = leaf_representative(tree, ds, leaf)
    ids = leaf.objects()
    dvec = ds.distances(rep, ids)
    far = int(np.argmax(dvec))
    ties = np.flatnonzero(dvec == dvec[far])
    if ties.size > 1:
        far = min((int(t) for t in ties), key=lambda t: ids[t])
    _, d_rep_nn = approx_nearest_neighbor(tree, ds, rep)
    return float(dvec[far]) / (1.0 + d_rep_nn)


def dump_tree(tree: SlimTree) -> str:
    """Indented one-line-per-node text dump for debugging."""
    lines: list[str] = []

    def visit(node: TreeNode, level: int):
        body = " ".join(f"{e.object_id}:{e.radius:.6g}" for e in node.entries)
        rep = node_rep_id(node)
        rep_s = "-" if rep is None else str(rep)
        lines.append(f"{'  ' * level}{node.node_id} {level} [{body}] rep={rep_s}")
        if not node.is_leaf:
            for e in node.entries:
                visit(e.child, level + 1)

    visit(tree.root, 0)
    return "\n".join(lines)
