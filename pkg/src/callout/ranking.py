"""Outlier scoring and the four type-aware rankings.

Phase 1 builds the index, ranks every object by an overall outlierness
score, and rebuilds the index with that ranking reversed (inliers first),
iterating until the ranking stops changing or an iteration cap is hit.
Phase 2 reads leaf-local neighborhood facts off the final tree and derives
the global, collective, and local rankings from them.

Scores, per object i with closest root object v_i and nearest sibling-leaf
representative f_i:

* overall      s_o(i) = d(i, v_i) * d(i, f_i)      (d(i, v_i)^2 if no f_i)
* global       s_g(i) = s_o(i) * d_nn(i)
* collective   s_c(i) = s_o(i) / (1 + d_nn(i))

where d_nn is the leaf-local nearest-neighbor distance normalized by the
leaf representative's own. The local ranking pulls out the set P of
objects whose d_nn exceeds the knee of the sorted leaf-radius profile and
ranks P by ascending s_g ahead of everything else.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import MetricDataset
from .errors import InternalError
from .tree import SlimTree, TreeNode, build_tree, node_rep_id, root_objects

DEFAULT_ITERATIONS = 10

# Node capacity sized so desk-scale datasets (thousands of points) build a
# two-level tree: the root then holds every leaf representative, giving the
# overall score a summary set that covers all clusters. A slim root of just
# a handful of objects cannot represent ten clusters.
DEFAULT_CAPACITY = 256


def rank_from_scores(scores, descending: bool = True) -> np.ndarray:
    """Permutation of object ids ordered by score; ties by ascending id."""
    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    key = -scores if descending else scores
    return np.argsort(key, kind="stable")


@dataclass
class OverallScores:
    """Per-object overall score and the tree facts it was derived from."""

    s_o: np.ndarray
    v_id: np.ndarray
    v_dist: np.ndarray
    f_id: np.ndarray      # -1 where the leaf has no siblings
    f_dist: np.ndarray    # nan where the leaf has no siblings


@dataclass
class ScoreTable:
    """All per-object scores plus the tree facts behind them."""

    s_o: np.ndarray
    s_g: np.ndarray
    s_c: np.ndarray
    d_nn: np.ndarray
    v_id: np.ndarray
    v_dist: np.ndarray
    f_id: np.ndarray
    f_dist: np.ndarray
    nn_id: np.ndarray
    nn_dist: np.ndarray
    leaf_radii: np.ndarray  # one normalized radius per leaf

    @property
    def n(self) -> int:
        return self.s_o.size


@dataclass
class RadiiProfile:
    """Sorted distinct normalized leaf radii and their knee value."""

    values: np.ndarray
    knee: float


@dataclass
class OutlierRankings:
    """The four output permutations of 0..n-1."""

    overall: np.ndarray
    global_: np.ndarray
    local: np.ndarray
    collective: np.ndarray
    knee_radius: float
    local_set_size: int

    def as_dict(self) -> dict:
        return {
            "overall": [int(v) for v in self.overall],
            "global": [int(v) for v in self.global_],
            "local": [int(v) for v in self.local],
            "collective": [int(v) for v in self.collective],
        }


def _for_each_leaf(leaves, fn, threads: int) -> None:
    # Leaves hold disjoint object sets, so per-leaf workers write disjoint
    # array slots and the result is scheduling-independent.
    if threads <= 1:
        for leaf in leaves:
            fn(leaf)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fn, leaves))


def _argmin_pair(ids: list[int], dvec: np.ndarray) -> tuple[int, float]:
    best = int(np.argmin(dvec))
    ties = np.flatnonzero(dvec == dvec[best])
    if ties.size > 1:
        best = min((int(t) for t in ties), key=lambda t: ids[t])
    return ids[best], float(dvec[best])


def overall_scores(tree: SlimTree, ds: MetricDataset, threads: int = 1) -> OverallScores:
    """s_o for every object, from the root objects and sibling representatives."""
    n = ds.n
    R = root_objects(tree)
    R_set = set(R)
    s_o = np.zeros(n)
    v_id = np.zeros(n, dtype=int)
    v_dist = np.zeros(n)
    f_id = np.full(n, -1, dtype=int)
    f_dist = np.full(n, np.nan)

    def score_leaf(leaf: TreeNode) -> None:
        E = sibling_representatives_of_leaf(tree, leaf)
        # the leaf's own representative is not foreign; see closest_root_object
        rep = node_rep_id(leaf)
        R_foreign = [o for o in R if o != rep] if rep in R_set else R
        for i in leaf.objects():
            if i in R_set and i != rep:
                cand = [o for o in R_foreign if o != i]
            else:
                cand = R_foreign
            if cand:
                vi, vd = _argmin_pair(cand, ds.distances(i, cand))
            else:
                vi, vd = i, 0.0
            v_id[i], v_dist[i] = vi, vd
            if E:
                fi, fd = _argmin_pair(E, ds.distances(i, E))
                f_id[i], f_dist[i] = fi, fd
                s_o[i] = vd * fd
            else:
                s_o[i] = vd * vd

    _for_each_leaf(tree.leaves(), score_leaf, threads)
    return OverallScores(s_o, v_id, v_dist, f_id, f_dist)


def sibling_representatives_of_leaf(tree: SlimTree, leaf: TreeNode) -> list[int]:
    if leaf.parent is None:
        return []
    return [e.object_id for e in leaf.parent.entries if e.child is not leaf]


def compute_score_table(
    tree: SlimTree,
    ds: MetricDataset,
    threads: int = 1,
    overall: OverallScores | None = None,
) -> ScoreTable:
    """Full per-object score table on a built tree (phase 2 sweep).

    Pass ``overall`` to reuse the s_o scores already computed for this tree
    during refinement.
    """
    if overall is None:
        overall = overall_scores(tree, ds, threads=threads)
    n = ds.n
    d_nn = np.zeros(n)
    nn_id = np.zeros(n, dtype=int)
    nn_dist = np.zeros(n)
    leaves = tree.leaves()
    leaf_radii = np.zeros(len(leaves))
    leaf_pos = {id(leaf): k for k, leaf in enumerate(leaves)}

    def sweep_leaf(leaf: TreeNode) -> None:
        ids = leaf.objects()
        k = len(ids)
        if k == 1:
            i = ids[0]
            E = sibling_representatives_of_leaf(tree, leaf)
            if E:
                nn_id[i], nn_dist[i] = _argmin_pair(E, ds.distances(i, E))
            else:
                nn_id[i], nn_dist[i] = i, 0.0
            # rep is the lone object; its own NN dist is the same fallback
            d_nn[i] = nn_dist[i] / (1.0 + nn_dist[i])
            leaf_radii[leaf_pos[id(leaf)]] = 0.0
            return

        D = ds.pairwise(ids)
        rep = node_rep_id(leaf)
        if rep is None:
            worst = D.max(axis=1)
            rep_pos = min(range(k), key=lambda t: (worst[t], ids[t]))
        else:
            rep_pos = ids.index(rep)
        masked = D + np.diag(np.full(k, np.inf))
        for pos, i in enumerate(ids):
            row = masked[pos]
            b = int(np.argmin(row))
            ties = np.flatnonzero(row == row[b])
            if ties.size > 1:
                b = min((int(t) for t in ties), key=lambda t: ids[t])
            nn_id[i], nn_dist[i] = ids[b], float(row[b])
        rep_nn = nn_dist[ids[rep_pos]]
        denom = 1.0 + rep_nn
        far = int(np.argmax(D[rep_pos]))
        ties = np.flatnonzero(D[rep_pos] == D[rep_pos, far])
        if ties.size > 1:
            far = min((int(t) for t in ties), key=lambda t: ids[t])
        leaf_radii[leaf_pos[id(leaf)]] = float(D[rep_pos, far]) / denom
        for i in ids:
            d_nn[i] = nn_dist[i] / denom

    _for_each_leaf(leaves, sweep_leaf, threads)
    s_g = overall.s_o * d_nn
    s_c = overall.s_o / (1.0 + d_nn)
    return ScoreTable(
        s_o=overall.s_o,
        s_g=s_g,
        s_c=s_c,
        d_nn=d_nn,
        v_id=overall.v_id,
        v_dist=overall.v_dist,
        f_id=overall.f_id,
        f_dist=overall.f_dist,
        nn_id=nn_id,
        nn_dist=nn_dist,
        leaf_radii=leaf_radii,
    )


def global_scores(table: ScoreTable) -> np.ndarray:
    """s_g = s_o * d_nn: large for isolated far points, small for microclusters."""
    return table.s_o * table.d_nn


def collective_scores(table: ScoreTable) -> np.ndarray:
    """s_c = s_o / (1 + d_nn): large for far points with near-duplicate neighbors."""
    return table.s_o / (1.0 + table.d_nn)


def kneedle(values) -> float:
    """Knee value of an ascending list: the element where the normalized
    curve bends away from the diagonal.

    Index and value are normalized to [0, 1]; both difference-curve
    orientations (curve under the diagonal for an elbow-shaped rise, curve
    over it for a saturating rise) are evaluated and the one with the
    larger positive maximum wins, elbow orientation on ties. With fewer
    than 3 values, or when neither orientation has a positive maximum
    (constant or linear input), falls back to the largest value.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("kneedle needs a non-empty list")
    if np.any(np.diff(values) < 0):
        raise ValueError("kneedle input must be sorted ascending")
    m = values.size
    if m < 3:
        return float(values[-1])
    span = float(values[-1] - values[0])
    if span <= 0.0:
        return float(values[-1])
    x = np.linspace(0.0, 1.0, m)
    y = (values - values[0]) / span
    under = x - y   # elbow: flat start, sharp rise
    over = y - x    # saturation: sharp rise, flat end
    if under.max() <= 0.0 and over.max() <= 0.0:
        return float(values[-1])
    if under.max() >= over.max():
        return float(values[int(np.argmax(under))])
    return float(values[int(np.argmax(over))])


def knee_radius(tree: SlimTree, ds: MetricDataset, leaf_radii=None) -> RadiiProfile:
    """Distinct normalized leaf radii, sorted ascending, with their knee."""
    if leaf_radii is None:
        from .tree import normalized_leaf_radius

        leaf_radii = [normalized_leaf_radius(tree, ds, leaf) for leaf in tree.leaves()]
    profile = np.unique(np.asarray(leaf_radii, dtype=float))
    return RadiiProfile(values=profile, knee=kneedle(profile))


def local_ranking(s_g, d_nn, knee: float) -> np.ndarray:
    """P = {i : d_nn >= knee} by ascending s_g, then the rest by descending s_g."""
    s_g = np.asarray(s_g, dtype=float)
    d_nn = np.asarray(d_nn, dtype=float)
    in_p = np.flatnonzero(d_nn >= knee)
    out_p = np.flatnonzero(d_nn < knee)
    head = in_p[np.argsort(s_g[in_p], kind="stable")]
    tail = out_p[np.argsort(-s_g[out_p], kind="stable")]
    return np.concatenate([head, tail])


@dataclass
class RefineResult:
    tree: SlimTree
    ranking: np.ndarray
    iterations: int
    overall: OverallScores
    history: list[np.ndarray] | None


def refine(
    ds: MetricDataset,
    b: int = DEFAULT_ITERATIONS,
    capacity: int = DEFAULT_CAPACITY,
    threads: int = 1,
    initial_order=None,
    keep_history: bool = False,
) -> RefineResult:
    """Phase 1: iteratively rebuild the tree from its own overall ranking.

    Starts from the identity order (or ``initial_order``), builds a tree
    from the reversed order, ranks by s_o, and feeds the ranking back in,
    stopping early when the ranking reproduces itself or after ``b``
    rounds. Returns the last tree with its ranking and scores; with
    ``keep_history`` the per-iteration rankings are kept too.
    """
    if b < 1:
        raise ValueError(f"iteration cap must be >= 1, got {b}")
    n = ds.n
    if initial_order is None:
        order = np.arange(n)
    else:
        order = np.asarray(initial_order, dtype=int).copy()
    history: list[np.ndarray] | None = [] if keep_history else None
    tree = None
    ranking = order
    ov = None
    iterations = 0
    for iterations in range(1, b + 1):
        tree = build_tree(ds, order, capacity)
        ov = overall_scores(tree, ds, threads=threads)
        ranking = rank_from_scores(ov.s_o, descending=True)
        if history is not None:
            history.append(ranking)
        if np.array_equal(ranking, order):
            break
        order = ranking
    return RefineResult(tree, ranking, iterations, ov, history)


@dataclass
class CalloutResult:
    rankings: OutlierRankings
    scores: ScoreTable
    tree: SlimTree
    diagnostics: dict
    history: list[np.ndarray] | None = None


def _check_table(table: ScoreTable) -> None:
    for name in ("s_o", "s_g", "s_c", "d_nn"):
        arr = getattr(table, name)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise InternalError(f"score {name} not finite and non-negative")


def c_allout(
    ds: MetricDataset,
    b: int = DEFAULT_ITERATIONS,
    capacity: int = DEFAULT_CAPACITY,
    threads: int = 1,
    keep_history: bool = False,
) -> CalloutResult:
    """Run the whole pipeline and return the four rankings plus diagnostics.

    Deterministic for fixed inputs, including across ``threads`` settings.
    """
    calls_before = ds.distance_calls
    ref = refine(ds, b=b, capacity=capacity, threads=threads, keep_history=keep_history)
    table = compute_score_table(ref.tree, ds, threads=threads, overall=ref.overall)
    _check_table(table)
    profile = knee_radius(ref.tree, ds, leaf_radii=table.leaf_radii)
    r_g = rank_from_scores(table.s_g, descending=True)
    r_c = rank_from_scores(table.s_c, descending=True)
    r_l = local_ranking(table.s_g, table.d_nn, profile.knee)
    rankings = OutlierRankings(
        overall=ref.ranking,
        global_=r_g,
        local=r_l,
        collective=r_c,
        knee_radius=profile.knee,
        local_set_size=int((table.d_nn >= profile.knee).sum()),
    )
    diagnostics = {
        "n": ds.n,
        "iterations_used": ref.iterations,
        "iteration_cap": b,
        "capacity": capacity,
        "tree_height": ref.tree.height,
        "n_leaves": len(ref.tree.leaves()),
        "distance_calls": ds.distance_calls - calls_before,
        "knee_radius": profile.knee,
        "local_set_size": rankings.local_set_size,
    }
    return CalloutResult(rankings, table, ref.tree, diagnostics, history=ref.history)
