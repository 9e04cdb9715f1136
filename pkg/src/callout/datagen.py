"""Annotated-outlier dataset generators.

Two generators, both emitting per-point type labels
(inlier | global | local | collective):

* :func:`generate_synthetic` draws Gaussian inlier clusters in a box and
  plants outliers of each type around them: local outliers from the
  cluster means with a magnified std, global outliers with a larger one,
  and collective outliers as tiny microclusters grown around randomly
  chosen global draws.

* :func:`generate_realistic` starts from real inlier points, fits a
  Gaussian mixture with diagonal covariances sharing one shape vector
  (per-component volumes), oversamples candidates at 5x std, culls the 68%
  highest-density candidates, and labels the extremes of the surviving
  density range: lowest-density as global, highest as local, plus
  microclusters around randomly chosen globals.

Everything is driven by one explicit seed; identical (config, seed) pairs
produce identical datasets.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import MetricDataset
from .errors import InfeasibleConfigError, InputError

LABELS = ("inlier", "global", "local", "collective")


@dataclass
class AnnotatedDataset:
    """Generated points with per-point type labels and provenance."""

    points: np.ndarray
    labels: list[str]
    provenance: dict

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def counts(self) -> dict[str, int]:
        out = {name: 0 for name in LABELS}
        for lab in self.labels:
            out[lab] = out.get(lab, 0) + 1
        return out

    def to_metric_dataset(self, metric: str = "euclidean") -> MetricDataset:
        return MetricDataset.from_features(self.points, metric=metric, labels=self.labels)


def save_annotated_csv(dataset: AnnotatedDataset, path) -> None:
    """Write points + trailing ``label`` column; byte-deterministic."""
    d = dataset.points.shape[1]
    header = ",".join([f"x{c}" for c in range(d)] + ["label"])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row, lab in zip(dataset.points, dataset.labels):
            fh.write(",".join(repr(float(v)) for v in row) + f",{lab}\n")


# ---------------------------------------------------------------------------
# Pure-synthetic generator


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the Gaussian-clusters generator.

    The outlier total is split one third per type, remainder to global.
    Collective microclusters have a fixed size, so the collective third
    must divide evenly by ``collective_cluster_size``.
    """

    n_clusters: int
    pts_per_cluster_range: tuple[int, int]
    n_outliers_total: int
    inlier_std_range: tuple[float, float]
    dims: int
    local_std_factor: float = 5.0
    global_std_factor: float = 10.0
    collective_cluster_size: int = 10
    collective_std_fraction: float = 0.01
    exclusion_std_factor: float = 3.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_clusters < 1:
            raise ValueError("n_clusters must be >= 1")
        lo, hi = self.pts_per_cluster_range
        if not (1 <= lo <= hi):
            raise ValueError(f"bad pts_per_cluster_range {self.pts_per_cluster_range}")
        slo, shi = self.inlier_std_range
        if not (0 < slo <= shi):
            raise ValueError(f"bad inlier_std_range {self.inlier_std_range}")
        if self.dims < 1:
            raise ValueError("dims must be >= 1")
        if self.n_outliers_total < 0:
            raise ValueError("n_outliers_total must be >= 0")
        if min(self.local_std_factor, self.global_std_factor, self.collective_std_fraction) <= 0:
            raise ValueError("std factors must be positive")
        if self.collective_cluster_size < 1:
            raise ValueError("collective_cluster_size must be >= 1")
        n_coll = self.n_outliers_total // 3
        if n_coll and n_coll % self.collective_cluster_size:
            raise InfeasibleConfigError(
                f"collective count {n_coll} is not divisible by the "
                f"cluster size {self.collective_cluster_size}"
            )


def generate_synthetic(cfg: SyntheticConfig) -> AnnotatedDataset:
    """Gaussian inlier clusters plus typed outliers; deterministic per seed.

    Cluster centers fall uniformly in a box whose side is
    n_clusters x (largest cluster std), which spaces the clusters without
    fully separating them. Local outliers resample each cluster at
    ``local_std_factor`` x std, global outliers at ``global_std_factor`` x
    std, and each collective microcluster grows around one extra global
    draw (relabeled collective) with std
    ``collective_std_fraction`` x (smallest cluster std).
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    k, d = cfg.n_clusters, cfg.dims

    stds = rng.uniform(cfg.inlier_std_range[0], cfg.inlier_std_range[1], k)
    box = k * float(stds.max())
    centers = rng.uniform(0.0, box, (k, d))
    sizes = rng.integers(cfg.pts_per_cluster_range[0], cfg.pts_per_cluster_range[1], k, endpoint=True)

    blocks: list[np.ndarray] = []
    labels: list[str] = []
    for j in range(k):
        blocks.append(centers[j] + rng.standard_normal((int(sizes[j]), d)) * stds[j])
        labels.extend(["inlier"] * int(sizes[j]))

    n_local = cfg.n_outliers_total // 3
    n_coll = cfg.n_outliers_total // 3
    n_global = cfg.n_outliers_total - 2 * (cfg.n_outliers_total // 3)
    n_cc = n_coll // cfg.collective_cluster_size if n_coll else 0

    # extra global draws become the collective centers, keeping label counts exact
    g_draw = n_global + n_cc
    g_pts = _draw_outliers(rng, centers, stds, cfg.global_std_factor,
                           cfg.exclusion_std_factor, g_draw, d)
    l_pts = _draw_outliers(rng, centers, stds, cfg.local_std_factor,
                           cfg.exclusion_std_factor, n_local, d)

    picked = rng.choice(g_draw, size=n_cc, replace=False) if n_cc else np.empty(0, dtype=int)
    picked_set = set(int(p) for p in picked)
    keep_global = [t for t in range(g_draw) if t not in picked_set]

    if keep_global:
        blocks.append(g_pts[keep_global])
        labels.extend(["global"] * len(keep_global))
    if n_local:
        blocks.append(l_pts)
        labels.extend(["local"] * n_local)
    coll_std = cfg.collective_std_fraction * float(stds.min())
    for p in picked:
        center = g_pts[int(p)]
        children = center + rng.standard_normal((cfg.collective_cluster_size - 1, d)) * coll_std
        blocks.append(np.vstack([center[None, :], children]))
        labels.extend(["collective"] * cfg.collective_cluster_size)

    points = np.vstack(blocks) if blocks else np.empty((0, d))
    points, labels = _shuffle_rows(points, labels, rng)
    provenance = {"generator": "synthetic", "config": asdict(cfg), "seed": cfg.seed}
    return AnnotatedDataset(points=points, labels=labels, provenance=provenance)


def _draw_outliers(rng, centers, stds, std_factor, exclusion, count, d) -> np.ndarray:
    """Magnified-std draws around the clusters, rejecting inlier-like ones.

    A draw landing within ``exclusion`` stds of any cluster center would be
    an inlier in disguise and make the emitted label a lie, so draws are
    repeated until clear of every cluster core.
    """
    out = np.empty((count, d))
    attempts = 0
    limit = 1000 * max(count, 1)
    for t in range(count):
        while True:
            attempts += 1
            if attempts > limit:
                raise InfeasibleConfigError(
                    f"could not place {count} outliers outside "
                    f"{exclusion} stds of every cluster; widen the std factors"
                )
            j = int(rng.integers(0, centers.shape[0]))
            p = centers[j] + rng.standard_normal(d) * (stds[j] * std_factor)
            gap = np.sqrt(((centers - p) ** 2).sum(axis=1)) / (stds * exclusion)
            if gap.min() >= 1.0:
                out[t] = p
                break
    return out


def _shuffle_rows(points: np.ndarray, labels: list[str], rng: np.random.Generator):
    """Interleave the generated blocks so file order carries no signal.

    A block layout (all inliers, then all outliers) would make every
    row-order-sensitive consumer look artificially good or bad; detection
    in particular starts from the given order.
    """
    perm = rng.permutation(points.shape[0])
    return points[perm], [labels[int(p)] for p in perm]


# ---------------------------------------------------------------------------
# Mixture-based realistic generator


@dataclass
class GmmModel:
    """Diagonal-covariance Gaussian mixture with shared shape (volumes vary).

    Per-component covariance is volumes[k] * diag(shape), where the shape
    vector has product 1, so volumes carry the per-component scale.
    """

    weights: np.ndarray
    means: np.ndarray
    volumes: np.ndarray
    shape: np.ndarray
    log_likelihoods: list[float] = field(default_factory=list)
    bic: float = math.inf

    @property
    def k(self) -> int:
        return self.weights.size

    @property
    def dims(self) -> int:
        return self.means.shape[1]

    @property
    def covariances(self) -> np.ndarray:
        """(k, dims) per-component diagonal covariance entries."""
        return self.volumes[:, None] * self.shape[None, :]


def _log_density(model: GmmModel, X: np.ndarray) -> np.ndarray:
    """Log mixture density of each row of X."""
    var = model.covariances  # (k, d)
    d = model.dims
    comp = np.empty((X.shape[0], model.k))
    for j in range(model.k):
        diff = X - model.means[j]
        comp[:, j] = (
            math.log(model.weights[j])
            - 0.5 * d * math.log(2.0 * math.pi)
            - 0.5 * float(np.log(var[j]).sum())
            - 0.5 * (diff * diff / var[j]).sum(axis=1)
        )
    m = comp.max(axis=1)
    return m + np.log(np.exp(comp - m[:, None]).sum(axis=1))


def gmm_density(model: GmmModel, x) -> float | np.ndarray:
    """Mixture density at ``x`` (one point, or a batch of rows)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if x.size != model.dims:
            raise ValueError(f"point has {x.size} dims, model has {model.dims}")
        return float(np.exp(_log_density(model, x[None, :])[0]))
    if x.shape[1] != model.dims:
        raise ValueError(f"points have {x.shape[1]} dims, model has {model.dims}")
    return np.exp(_log_density(model, x))


def _farthest_point_seeds(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    first = int(rng.integers(X.shape[0]))
    chosen = [first]
    dmin = ((X - X[first]) ** 2).sum(axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(dmin))
        chosen.append(nxt)
        dmin = np.minimum(dmin, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[chosen].copy()


def _solve_vei(S: np.ndarray, nk: np.ndarray, var_floor: float,
               shape0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Alternate volumes and shape for the shared-shape M-step.

    S[k, d] is the responsibility-weighted squared deviation per component
    and dimension; nk the component weights (counts).
    """
    d = S.shape[1]
    shape = shape0.copy()
    for _ in range(50):
        volumes = (S / shape).sum(axis=1) / (d * nk)
        volumes = np.maximum(volumes, var_floor)
        b = (S / volumes[:, None]).sum(axis=0)
        b = np.maximum(b, 1e-300)
        new_shape = b / np.exp(np.log(b).mean())
        if np.max(np.abs(new_shape - shape)) <= 1e-12 * max(1.0, float(np.max(shape))):
            shape = new_shape
            break
        shape = new_shape
    volumes = (S / shape).sum(axis=1) / (d * nk)
    volumes = np.maximum(volumes, var_floor / float(shape.min()))
    return volumes, shape


def _em_vei(X: np.ndarray, k: int, rng: np.random.Generator,
            max_iter: int = 200, tol: float = 1e-6) -> GmmModel:
    m, d = X.shape
    var_floor = 1e-8 * float(X.var(axis=0).mean())
    means = _farthest_point_seeds(X, k, rng)
    # hard-assign to the nearest seed for the first responsibilities
    d2 = ((X[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    resp = np.zeros((m, k))
    resp[np.arange(m), np.argmin(d2, axis=1)] = 1.0

    weights = np.full(k, 1.0 / k)
    volumes = np.full(k, max(float(X.var(axis=0).mean()), var_floor))
    shape = np.ones(d)
    history: list[float] = []
    model = GmmModel(weights, means, volumes, shape)
    for _ in range(max_iter):
        # M-step
        nk = np.maximum(resp.sum(axis=0), 1e-12)
        weights = nk / m
        means = (resp.T @ X) / nk[:, None]
        S = np.empty((k, d))
        for j in range(k):
            diff = X - means[j]
            S[j] = resp[:, j] @ (diff * diff)
        volumes, shape = _solve_vei(S, nk, var_floor, shape)
        model = GmmModel(weights, means, volumes, shape, history)
        # E-step and log-likelihood under the fresh parameters
        var = model.covariances
        comp = np.empty((m, k))
        for j in range(k):
            diff = X - means[j]
            comp[:, j] = (
                np.log(weights[j])
                - 0.5 * d * math.log(2.0 * math.pi)
                - 0.5 * float(np.log(var[j]).sum())
                - 0.5 * (diff * diff / var[j]).sum(axis=1)
            )
        mx = comp.max(axis=1)
        log_norm = mx + np.log(np.exp(comp - mx[:, None]).sum(axis=1))
        ll = float(log_norm.sum())
        resp = np.exp(comp - log_norm[:, None])
        if history and abs(ll - history[-1]) <= tol * max(1.0, abs(history[-1])):
            history.append(ll)
            break
        history.append(ll)
    n_params = (k - 1) + k * d + k + (d - 1)
    model.bic = -2.0 * history[-1] + n_params * math.log(m)
    return model


def fit_gmm_vei(points, k_max: int = 9, seed: int = 0) -> GmmModel:
    """Fit the shared-shape diagonal mixture, choosing k in 1..k_max by BIC.

    Initialization is farthest-point seeding from ``seed``; EM iterates to
    a relative log-likelihood change below 1e-6 (cap 200 iterations) and
    its per-iteration log-likelihood trace is kept on the returned model.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError(f"points must be 2-D, got shape {X.shape}")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if X.shape[0] < k_max + 1:
        raise ValueError(f"need at least k_max + 1 = {k_max + 1} points, got {X.shape[0]}")
    if float(X.var(axis=0).max()) <= 0.0:
        raise InputError(
            "degenerate data: all points identical; variance floor cannot "
            "stabilize the mixture fit"
        )
    seeds = np.random.SeedSequence(seed).spawn(k_max)
    best: GmmModel | None = None
    for k in range(1, k_max + 1):
        model = _em_vei(X, k, np.random.default_rng(seeds[k - 1]))
        if best is None or model.bic < best.bic:
            best = model
    return best


def generate_realistic(
    inliers,
    counts: tuple[int, int, int],
    k_max: int = 9,
    seed: int = 0,
) -> AnnotatedDataset:
    """Outliers planted around real inlier data via the fitted mixture.

    ``counts`` is (n_global, n_local, n_collective). Candidates are drawn
    per component at five times the fitted std, the 68% highest-density
    candidates are discarded (those are the ones overlapping the inlier
    mass), and the survivors' density extremes become the outliers:
    lowest-density as global, highest as local. Collective microclusters
    (size 10, last one smaller if needed) grow around randomly chosen
    global draws with std 1e-4 x the smallest fitted per-axis std.
    """
    X = np.asarray(inliers, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"inliers must be 2-D, got shape {X.shape}")
    n_global, n_local, n_coll = (int(c) for c in counts)
    if min(n_global, n_local, n_coll) < 0:
        raise ValueError(f"counts must be non-negative, got {counts}")
    provenance: dict = {
        "generator": "realistic",
        "seed": seed,
        "counts": {"global": n_global, "local": n_local, "collective": n_coll},
        "k_max": k_max,
    }
    if n_global + n_local + n_coll == 0:
        return AnnotatedDataset(X.copy(), ["inlier"] * X.shape[0], provenance)

    model = fit_gmm_vei(X, k_max=k_max, seed=seed)
    provenance["k_selected"] = model.k
    rng = np.random.default_rng([seed, 1])
    d = X.shape[1]
    n_cc = -(-n_coll // 10) if n_coll else 0  # microclusters of 10, remainder in the last

    pool = math.ceil(10.0 * max(n_global + n_local + n_cc, 1) / 0.32)
    comps = rng.choice(model.k, size=pool, p=model.weights)
    std5 = 5.0 * np.sqrt(model.covariances)
    cand = model.means[comps] + rng.standard_normal((pool, d)) * std5[comps]
    logdens = _log_density(model, cand)
    order = np.argsort(logdens, kind="stable")
    n_remove = int(round(0.68 * pool))
    survivors = order[: pool - n_remove]
    if survivors.size < n_global + n_cc + n_local:
        raise InfeasibleConfigError(
            f"only {survivors.size} candidates survive the density cull but "
            f"{n_global + n_cc + n_local} are needed; raise the candidate count"
        )
    global_pool = survivors[: n_global + n_cc]
    local_idx = survivors[survivors.size - n_local:] if n_local else np.empty(0, dtype=int)

    picked_pos = rng.choice(global_pool.size, size=n_cc, replace=False) if n_cc else np.empty(0, dtype=int)
    picked_set = set(int(p) for p in picked_pos)
    keep_global = [int(global_pool[t]) for t in range(global_pool.size) if t not in picked_set]

    blocks = [X]
    labels = ["inlier"] * X.shape[0]
    if keep_global:
        blocks.append(cand[keep_global])
        labels.extend(["global"] * len(keep_global))
    if n_local:
        blocks.append(cand[local_idx])
        labels.extend(["local"] * n_local)
    if n_cc:
        min_std = float(np.sqrt(model.covariances.min()))
        coll_std = 1e-4 * min_std
        sizes = [10] * (n_cc - 1) + [n_coll - 10 * (n_cc - 1)]
        for t, p in enumerate(picked_pos):
            center = cand[int(global_pool[int(p)])]
            children = center + rng.standard_normal((sizes[t] - 1, d)) * coll_std
            blocks.append(np.vstack([center[None, :], children]))
            labels.extend(["collective"] * sizes[t])
    points = np.vstack(blocks)
    points, labels = _shuffle_rows(points, labels, rng)
    provenance["candidate_pool"] = pool
    provenance["survivors"] = int(survivors.size)
    return AnnotatedDataset(points=points, labels=labels, provenance=provenance)
