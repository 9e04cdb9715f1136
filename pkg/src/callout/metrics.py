"""Ranking-quality metrics and structural verification helpers.

The AUC metrics are rank-based and deterministic: ROC AUC is the
Mann-Whitney statistic (ties worth one half), PR AUC is average precision
over the descending-score order with ties resolved by ascending object id,
the same order used everywhere else in the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import MetricDataset
from .errors import MetricError
from .tree import SlimTree

OUTLIER_TYPES = ("global", "local", "collective")


def _as_bool(positives) -> np.ndarray:
    pos = np.asarray(positives, dtype=bool)
    if pos.ndim != 1:
        raise ValueError("positives must be 1-D")
    return pos


def auc_roc(scores, positives) -> float:
    """Rank-based ROC AUC: P(score_pos > score_neg) + 0.5 P(tie)."""
    scores = np.asarray(scores, dtype=float)
    pos = _as_bool(positives)
    if scores.shape != pos.shape:
        raise ValueError("scores and positives must have the same length")
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError(f"need both classes, got {n_pos} positives / {n_neg} negatives")
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    n = scores.size
    # average ranks within tie groups (1-based)
    boundaries = np.flatnonzero(np.diff(sorted_scores)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [n]])
    group_rank = (starts + ends - 1) / 2.0 + 1.0
    ranks = np.empty(n)
    ranks[order] = np.repeat(group_rank, ends - starts)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_pr(scores, positives) -> float:
    """Average precision over the descending-score, ascending-id order."""
    scores = np.asarray(scores, dtype=float)
    pos = _as_bool(positives)
    if scores.shape != pos.shape:
        raise ValueError("scores and positives must have the same length")
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise MetricError("need at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = pos[order]
    precision_at = np.cumsum(hits) / np.arange(1, scores.size + 1)
    return float(precision_at[hits].mean())


def brute_force_exact_nn(ds: MetricDataset, i: int) -> tuple[int, float]:
    """Exact nearest neighbor by full scan; oracle for the leaf-local one."""
    if ds.n < 2:
        raise ValueError("need at least two objects")
    others = np.concatenate([np.arange(i), np.arange(i + 1, ds.n)])
    dvec = ds.distances(i, others)
    best = int(np.argmin(dvec))
    ties = np.flatnonzero(dvec == dvec[best])
    if ties.size > 1:
        best = int(ties.min())  # others[] is ascending, so first tie = smallest id
    return int(others[best]), float(dvec[best])


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class TreeReport:
    checks: list[CheckResult]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]


def _subtree_objects(node) -> list[int]:
    if node.is_leaf:
        return node.objects()
    out: list[int] = []
    for e in node.entries:
        out.extend(_subtree_objects(e.child))
    return out


def verify_tree(tree: SlimTree, ds: MetricDataset) -> TreeReport:
    """Check the structural invariants of a built tree.

    Checks: every object in exactly one leaf; node sizes within capacity;
    each non-root node's representative stored both in the node and its
    parent; every covering radius actually covers its child's subtree.
    Returns one pass/fail per check with the first counterexample.
    """
    checks: list[CheckResult] = []

    seen: list[int] = []
    for leaf in tree.leaves():
        seen.extend(leaf.objects())
    expected = set(range(ds.n))
    completeness_ok = len(seen) == len(set(seen)) == ds.n and set(seen) == expected
    detail = ""
    if not completeness_ok:
        missing = sorted(expected - set(seen))[:5]
        dupes = sorted({o for o in seen if seen.count(o) > 1})[:5]
        detail = f"missing={missing} duplicated={dupes} total={len(seen)}"
    checks.append(CheckResult("leaf-completeness", completeness_ok, detail))

    cap_ok, cap_detail = True, ""
    for node in tree.nodes():
        if not 1 <= len(node.entries) <= tree.capacity:
            cap_ok, cap_detail = False, f"node {node.node_id} holds {len(node.entries)} entries"
            break
    checks.append(CheckResult("capacity", cap_ok, cap_detail))

    chain_ok, chain_detail = True, ""
    for node in tree.nodes():
        if node.parent is None:
            continue
        rep = next(e.object_id for e in node.parent.entries if e.child is node)
        if rep not in node.objects():
            chain_ok = False
            chain_detail = f"node {node.node_id}: representative {rep} not stored in node"
            break
    checks.append(CheckResult("representative-chain", chain_ok, chain_detail))

    radius_ok, radius_detail = True, ""
    for node in tree.nodes():
        if node.is_leaf:
            continue
        for e in node.entries:
            objs = _subtree_objects(e.child)
            dvec = ds.distances(e.object_id, objs)
            worst = int(np.argmax(dvec))
            if dvec[worst] > e.radius + 1e-9:
                radius_ok = False
                radius_detail = (
                    f"entry {e.object_id} of node {node.node_id}: radius {e.radius} "
                    f"< distance {float(dvec[worst])} to object {objs[worst]}"
                )
                break
        if not radius_ok:
            break
    checks.append(CheckResult("covering-radius", radius_ok, radius_detail))

    return TreeReport(checks)


def evaluate_rankings(rankings, labels) -> dict:
    """Type-aware metric report for the four rankings.

    Each ranking is scored against its own positives: the overall ranking
    against outliers of any type, each type-specific ranking against that
    type only. Rank positions convert to scores as n - position. Pairings
    whose positive class is absent from the labels are reported as null;
    if nothing at all is computable (all-inlier labels) a MetricError is
    raised.
    """
    labels = [str(lab).strip() for lab in labels]
    n = len(labels)
    pairings = {
        "overall": np.array([lab not in ("inlier", "0") for lab in labels]),
        "global": np.array([lab == "global" for lab in labels]),
        "local": np.array([lab == "local" for lab in labels]),
        "collective": np.array([lab == "collective" for lab in labels]),
    }
    perms = {
        "overall": rankings.overall,
        "global": rankings.global_,
        "local": rankings.local,
        "collective": rankings.collective,
    }
    report: dict = {}
    computable = 0
    for name, perm in perms.items():
        perm = np.asarray(perm, dtype=int)
        if perm.size != n:
            raise MetricError(f"ranking {name} has {perm.size} entries for {n} labels")
        pos = pairings[name]
        if not pos.any():
            report[name] = None
            continue
        scores = np.empty(n)
        scores[perm] = n - np.arange(n)
        report[name] = {
            "aucroc": auc_roc(scores, pos),
            "aucpr": auc_pr(scores, pos),
            "n_pos": int(pos.sum()),
            "n_neg": int(n - pos.sum()),
        }
        computable += 1
    if computable == 0:
        raise MetricError("labels contain no outliers of any type; nothing to evaluate")
    return report
