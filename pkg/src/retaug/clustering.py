"""Per-class k-means over image embeddings and conditioning-init manifests.

Lloyd's algorithm with k-means++ seeding, deterministic under an explicit
seed. Empty clusters are repaired by reseeding to the point farthest from its
assigned centroid. Inertia is tracked per iteration and never increases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TooFewPoints
from .prompts import ClassSynset, pseudoword_init, simple_prompt


@dataclass(frozen=True)
class ClusterModel:
    k: int
    centroids: np.ndarray
    assignments: dict
    inertia: float
    inertia_history: tuple[float, ...]
    n_iter: int


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k) matrix; the expanded form is fast, tiny negatives are clipped
    d2 = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + np.sum(centroids**2, axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _exact_inertia(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    diff = points - centroids[labels]
    return float(np.sum(diff * diff))


def _plus_plus_seed(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    chosen = np.zeros(n, dtype=bool)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    chosen[first] = True
    closest = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = float(closest.sum())
        if total > 0.0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            # all remaining points coincide with a centroid; take the first unchosen
            idx = int(np.nonzero(~chosen)[0][0])
        centroids[j] = points[idx]
        chosen[idx] = True
        closest = np.minimum(closest, np.sum((points - centroids[j]) ** 2, axis=1))
    return centroids


def kmeans(
    points,
    k: int,
    seed: int,
    max_iter: int = 300,
    tol: float = 1e-6,
    ids=None,
) -> ClusterModel:
    """Cluster points into k groups; deterministic under seed."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"points must be a 2-D matrix, got shape {points.shape}")
    n = points.shape[0]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if n < k:
        raise TooFewPoints(f"need at least k={k} points, got {n}")
    if ids is None:
        ids = list(range(n))
    elif len(ids) != n:
        raise ValueError(f"got {len(ids)} ids for {n} points")

    rng = np.random.default_rng(seed)
    centroids = _plus_plus_seed(points, k, rng)

    history: list[float] = []
    labels = np.zeros(n, dtype=np.int64)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        d2 = _squared_distances(points, centroids)
        labels = np.argmin(d2, axis=1)

        # reseed empty clusters, one at a time, to the point farthest from its
        # centroid; donors come from clusters that can spare a member
        while True:
            counts = np.bincount(labels, minlength=k)
            empty = np.nonzero(counts == 0)[0]
            if empty.size == 0:
                break
            dist_to_own = np.sum((points - centroids[labels]) ** 2, axis=1)
            donor = int(np.argmax(np.where(counts[labels] >= 2, dist_to_own, -1.0)))
            centroids[empty[0]] = points[donor]
            labels[donor] = empty[0]

        history.append(_exact_inertia(points, centroids, labels))

        new_centroids = np.empty_like(centroids)
        for j in range(k):
            new_centroids[j] = points[labels == j].mean(axis=0)
        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < tol:
            break

    # final assignment against the converged centroids
    labels = np.argmin(_squared_distances(points, centroids), axis=1)
    history.append(_exact_inertia(points, centroids, labels))

    return ClusterModel(
        k=k,
        centroids=centroids,
        assignments={ids[i]: int(labels[i]) for i in range(n)},
        inertia=history[-1],
        inertia_history=tuple(history),
        n_iter=n_iter,
    )


def conditioning_manifest(synset: ClassSynset, clusters: ClusterModel) -> dict:
    """Per-cluster init manifest for downstream conditioning training.

    Each entry carries the cluster members, the whitespace-free init prompt,
    and the pseudo-word descriptor; the text-encoder pass that consumes the
    prompt happens outside this pipeline.
    """
    init = pseudoword_init(synset)
    prompt = simple_prompt(synset, no_ws=True)
    members: dict[int, list] = {j: [] for j in range(clusters.k)}
    for image_id, label in clusters.assignments.items():
        members[label].append(image_id)
    return {
        "wnid": synset.wnid,
        "k": clusters.k,
        "entries": [
            {
                "wnid": synset.wnid,
                "cluster": j,
                "image_ids": sorted(members[j], key=str),
                "init_prompt": prompt.text,
                "pseudoword": {
                    "word": init.word,
                    "multi_token_rule": init.multi_token_rule.value,
                },
            }
            for j in range(clusters.k)
        ],
    }
