"""Geometric feature fields, k-means co-segmentation, and voxel correspondence.

Two shapes are partitioned into shared part ids by one joint k-means over the
union of their per-voxel geometric features. Query voxels are then matched to
appearance voxels by cosine similarity, optionally restricted to the same
part id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyAppearance,
    EmptyInput,
    KTooLarge,
    ZeroNormRow,
)
from .slat import StructuredLatent

DEFAULT_K = 8

CORRESPONDENCE_METHODS = ("global_nn", "coseg_nn", "global_pool")


@dataclass(eq=False)
class FeatureField:
    """Per-voxel geometric feature rows aligned to a shape's voxel order."""

    shape_id: str
    features: np.ndarray  # (L, D) float64

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return len(self.features)


@dataclass(eq=False)
class ClusterAssignment:
    """Voxel -> cluster labels plus the centroids and inertia that produced them.

    ``inertia_history`` logs the post-assignment inertia of every Lloyd
    iteration; it is non-increasing by construction.
    """

    labels: np.ndarray  # (L,) int
    k: int
    centroids: np.ndarray  # (k, D)
    inertia: float
    inertia_history: list[float] = field(default_factory=list, repr=False)


@dataclass(eq=False)
class CorrespondenceMap:
    """For each query voxel, the index of its matched appearance voxel."""

    target: np.ndarray  # (L_q,) int
    method: str


def _as_matrix(features) -> np.ndarray:
    if isinstance(features, FeatureField):
        return np.asarray(features.features, dtype=np.float64)
    return np.asarray(features, dtype=np.float64)


def _dist2(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # expanded form is O(L*k*D) without the (L, k, D) intermediate
    d2 = (
        (x * x).sum(axis=1)[:, None]
        - 2.0 * x @ centers.T
        + (centers * centers).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    centers[0] = x[rng.integers(n)]
    closest = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=closest / total))
        centers[j] = x[pick]
        closest = np.minimum(closest, ((x - x[pick]) ** 2).sum(axis=1))
    return centers


def kmeans(
    features,
    k: int,
    seed: int,
    max_iters: int = 100,
    tol: float = 1e-7,
) -> ClusterAssignment:
    """Lloyd's k-means with k-means++ seeding.

    Deterministic given (features, k, seed, max_iters, tol). Empty clusters
    are repaired by reseeding the centroid to the point farthest from its
    assigned centroid. Stops when the largest centroid shift drops below tol.
    """
    x = _as_matrix(features)
    n = len(x)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > n:
        raise KTooLarge(k, n)

    rng = np.random.default_rng(seed)
    centers = _kmeans_pp_init(x, k, rng)
    history: list[float] = []
    labels = np.zeros(n, dtype=np.int64)

    for _ in range(max_iters):
        d2 = _dist2(x, centers)
        labels = d2.argmin(axis=1)
        history.append(float(d2[np.arange(n), labels].sum()))

        new_centers = centers.copy()
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j]:
                new_centers[j] = x[labels == j].mean(axis=0)
        empties = np.nonzero(counts == 0)[0]
        if empties.size:
            assigned = d2[np.arange(n), labels].copy()
            for j in empties:
                far = int(assigned.argmax())
                new_centers[j] = x[far]
                assigned[far] = -1.0  # one repair point per empty cluster
        shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if shift < tol:
            break

    d2 = _dist2(x, centers)
    labels = d2.argmin(axis=1)
    inertia = float(d2[np.arange(n), labels].sum())
    history.append(inertia)
    return ClusterAssignment(
        labels=labels,
        k=int(k),
        centroids=centers,
        inertia=inertia,
        inertia_history=history,
    )


def cosegment(
    query_features,
    appearance_features,
    k: int,
    seed: int,
    max_iters: int = 100,
    tol: float = 1e-7,
) -> tuple[ClusterAssignment, ClusterAssignment]:
    """Joint k-means over both shapes' features, split back per shape.

    One clustering over the concatenated feature rows guarantees that cluster
    ids mean the same thing on both shapes, which the correspondence step
    requires. Both returned assignments share k and the joint centroids;
    inertia is the per-shape share.
    """
    qx = _as_matrix(query_features)
    ax = _as_matrix(appearance_features)
    if qx.shape[1] != ax.shape[1]:
        raise DimensionMismatch(qx.shape[1], ax.shape[1])
    joint = kmeans(np.concatenate([qx, ax], axis=0), k, seed, max_iters, tol)
    nq = len(qx)

    def split(xm: np.ndarray, labels: np.ndarray) -> ClusterAssignment:
        d2 = _dist2(xm, joint.centroids)
        inertia = float(d2[np.arange(len(xm)), labels].sum())
        return ClusterAssignment(
            labels=labels,
            k=joint.k,
            centroids=joint.centroids.copy(),
            inertia=inertia,
            inertia_history=list(joint.inertia_history),
        )

    return split(qx, joint.labels[:nq]), split(ax, joint.labels[nq:])


def cosine_similarity_matrix(a, b) -> np.ndarray:
    """Pairwise cosine similarity between the rows of a (L, D) and b (M, D)."""
    am = _as_matrix(a)
    bm = _as_matrix(b)
    if am.shape[1] != bm.shape[1]:
        raise DimensionMismatch(am.shape[1], bm.shape[1])
    an = np.linalg.norm(am, axis=1)
    bn = np.linalg.norm(bm, axis=1)
    for side, norms in (("a", an), ("b", bn)):
        zero = np.nonzero(norms == 0.0)[0]
        if zero.size:
            raise ZeroNormRow(side, int(zero[0]))
    return (am / an[:, None]) @ (bm / bn[:, None]).T


def build_correspondence(
    query_features,
    appearance_features,
    mode: str,
    query_clusters: ClusterAssignment | None = None,
    appearance_clusters: ClusterAssignment | None = None,
) -> CorrespondenceMap:
    """Match every query voxel to an appearance voxel by feature similarity.

    coseg_nn restricts the nearest-neighbor search to appearance voxels of
    the same (shared) cluster id, falling back to a global search when that
    cluster is empty on the appearance side, so the map is always total.
    global_nn searches all appearance voxels. global_pool carries no
    per-voxel matches; its target entries are a zero placeholder and the
    pooled objective in the guidance module ignores them. Nearest-neighbor
    ties break toward the smallest appearance index.
    """
    if mode not in CORRESPONDENCE_METHODS:
        raise ValueError(f"unknown correspondence mode {mode!r}")
    qx = _as_matrix(query_features)
    ax = _as_matrix(appearance_features)
    if len(ax) == 0:
        raise EmptyAppearance()
    if len(qx) == 0:
        raise EmptyInput("query features")

    if mode == "global_pool":
        return CorrespondenceMap(
            target=np.zeros(len(qx), dtype=np.int64), method=mode
        )

    sim = cosine_similarity_matrix(qx, ax)
    target = sim.argmax(axis=1).astype(np.int64)

    if mode == "coseg_nn":
        if query_clusters is None or appearance_clusters is None:
            raise ValueError("coseg_nn requires cluster assignments for both shapes")
        qlab = np.asarray(query_clusters.labels)
        alab = np.asarray(appearance_clusters.labels)
        for c in np.unique(qlab):
            rows = np.nonzero(qlab == c)[0]
            cols = np.nonzero(alab == c)[0]
            if cols.size == 0:
                continue  # keep the global fallback for these rows
            target[rows] = cols[sim[np.ix_(rows, cols)].argmax(axis=1)]

    return CorrespondenceMap(target=target, method=mode)


def synthesize_part_features(
    latent: StructuredLatent,
    parts: list[tuple[tuple[int, int, int], tuple[int, int, int]]],
    noise_std: float,
    seed: int,
    shape_id: str = "synthetic",
) -> FeatureField:
    """Stand-in geometric features: one unit prototype per axis-aligned box.

    Boxes are (low, high) inclusive corners in voxel coordinates. A voxel in
    several boxes takes the first box in the list; voxels in no box take a
    dedicated background prototype. Prototypes are one-hot, so the feature
    dimension is len(parts) + 1. Gaussian noise of the given std is added
    on top.
    """
    pos = latent.positions
    n_parts = len(parts)
    dim = n_parts + 1
    member = np.full(len(pos), n_parts, dtype=np.int64)  # background by default
    for p in range(n_parts - 1, -1, -1):
        lo, hi = parts[p]
        lo = np.asarray(lo)
        hi = np.asarray(hi)
        inside = np.all((pos >= lo) & (pos <= hi), axis=1)
        member[inside] = p  # earliest box wins: later writes overwrite
    features = np.zeros((len(pos), dim), dtype=np.float64)
    features[np.arange(len(pos)), member] = 1.0
    if noise_std > 0.0:
        rng = np.random.default_rng(seed)
        features = features + noise_std * rng.standard_normal(features.shape)
    return FeatureField(shape_id=shape_id, features=features)
