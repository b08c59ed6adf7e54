"""
Subgroup discovery from posterior partitions.

Two subjects share a cost-effectiveness cluster in a draw when they share both the
omega cluster and the theta subcluster. Everything here depends on partitions
only, never on label values, so it is immune to label switching.
"""
import numpy as np
import pandas as pd

from edpcea.utils.errors import ValidationError
from edpcea.utils.logger import get_logger

logger = get_logger()


def cluster_labels(assign, level="joint"):
    """Integer code per subject for the requested clustering level."""
    assign = np.asarray(assign, dtype=np.int64).reshape(-1, 2)
    if level == "omega":
        return assign[:, 0]
    if level != "joint":
        raise ValidationError(f"unknown clustering level '{level}'", field="level")
    _, codes = np.unique(assign, axis=0, return_inverse=True)
    return np.asarray(codes).reshape(-1)


def adjacency(assign, level="joint"):
    """n x n 0/1 matrix, 1 where two subjects share a cluster."""
    labels = cluster_labels(assign, level)
    return (labels[:, None] == labels[None, :]).astype(np.int64)


class CoClusterAccumulator:
    """Running mean of adjacency matrices; holds one n x n sum, never the per-draw matrices."""

    def __init__(self, n, level="joint"):
        self.level = level
        self.total = np.zeros((n, n))
        self.count = 0

    def add(self, assign):
        labels = cluster_labels(assign, self.level)
        self.total += labels[:, None] == labels[None, :]
        self.count += 1

    def probability(self):
        if self.count == 0:
            raise ValidationError("no draws accumulated", field="draws")
        return self.total / self.count


def _assignments(draws):
    """Accept a DrawStore, DrawRecords or raw (n, 2) assignment arrays."""
    for item in draws:
        yield item.assignments() if hasattr(item, "assignments") else np.asarray(item)


def coclustering_probability(draws, level="joint"):
    """Posterior co-clustering matrix P, streamed over the draws."""
    accumulator = None
    for assign in _assignments(draws):
        if accumulator is None:
            accumulator = CoClusterAccumulator(len(assign), level)
        accumulator.add(assign)
    if accumulator is None:
        raise ValidationError("need at least one draw", field="draws")
    return accumulator.probability()


def mode_partition(draws, P, level="joint"):
    """
    The stored partition whose adjacency is closest to P in Frobenius norm,
    first draw on ties.

    Returns:
        (assignments (n, 2), draw index)
    """
    best, best_idx, best_dist = None, -1, np.inf
    for idx, assign in enumerate(_assignments(draws)):
        dist = np.linalg.norm(adjacency(assign, level) - P, "fro")
        if dist < best_dist:
            best, best_idx, best_dist = np.array(assign), idx, dist
    if best is None:
        raise ValidationError("need at least one draw", field="draws")
    return best, best_idx


def _cluster_means(values, labels):
    _, inverse = np.unique(labels, return_inverse=True)
    sums = np.bincount(inverse, weights=values)
    counts = np.bincount(inverse)
    return (sums / counts)[inverse]


def dsi_single(psi_i, assign, weights=None):
    """
    Between-cluster share of the variation in Psi_i for one draw.

    Returns:
        (dsi, dsi_weighted_center); dsi is centred at the unweighted mean of Psi_i and lies
        in [0, 1]; the second uses the bootstrap-weighted Psi as centre. NaN when every
        Psi_i is equal.
    """
    psi_i = np.asarray(psi_i, dtype=float)
    if len(psi_i) < 2:
        raise ValidationError(f"need at least 2 subjects, got {len(psi_i)}", field="n")
    if np.ptp(psi_i) == 0:
        return float("nan"), float("nan")
    cluster_mean = _cluster_means(psi_i, cluster_labels(assign))
    grand = psi_i.mean()
    canonical = np.sum((cluster_mean - grand) ** 2) / np.sum((psi_i - grand) ** 2)
    weighted = float("nan")
    if weights is not None:
        center = float(np.asarray(weights) @ psi_i)
        weighted = np.sum((cluster_mean - center) ** 2) / np.sum((psi_i - center) ** 2)
    return float(min(max(canonical, 0.0), 1.0)), float(weighted)


def dsi(psi_rows, assignments, weights_rows=None):
    """
    DSI for every draw.

    Args:
        psi_rows: (M, n) Psi_i per draw.
        assignments: M assignment arrays aligned with psi_rows.
        weights_rows: Optional (M, n) bootstrap weights for the weighted-centre column.

    Returns:
        DataFrame (m, dsi, dsi_weighted_center); missing draws are NaN and counted in attrs['missing'].
    """
    rows = []
    assignments = list(_assignments(assignments))
    if len(assignments) != len(psi_rows):
        raise ValidationError("Psi draws and assignments are not aligned", field="draws")
    for m, (psi_i, assign) in enumerate(zip(psi_rows, assignments)):
        weights = None if weights_rows is None else weights_rows[m]
        value, weighted = dsi_single(psi_i, assign, weights)
        rows.append((m, value, weighted))
    frame = pd.DataFrame(rows, columns=["m", "dsi", "dsi_weighted_center"])
    missing = int(frame["dsi"].isna().sum())
    frame.attrs["missing"] = missing
    if missing:
        logger.warning(f"DSI undefined for {missing} draws with identical Psi_i")
    return frame


def export_graph(P, threshold, mode_assign=None, psi_mean=None):
    """
    Weighted edges (i, j, p) with i < j and P_ij > threshold, plus node attributes.

    Returns:
        (edges DataFrame, nodes DataFrame)
    """
    if not 0.0 <= threshold < 1.0:
        raise ValidationError(f"threshold must lie in [0, 1), got {threshold}", field="threshold")
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    i_idx, j_idx = np.triu_indices(n, k=1)
    keep = P[i_idx, j_idx] > threshold
    edges = pd.DataFrame({"i": i_idx[keep], "j": j_idx[keep], "p": P[i_idx, j_idx][keep]})
    nodes = pd.DataFrame({"i": np.arange(n)})
    if mode_assign is not None:
        nodes["cluster"] = cluster_labels(mode_assign)
    if psi_mean is not None:
        nodes["psi_mean"] = np.asarray(psi_mean, dtype=float)
    return edges, nodes


def lower_triangle_frame(P):
    """Dense lower triangle (diagonal included) as rows (i, j, p)."""
    i_idx, j_idx = np.tril_indices(P.shape[0])
    return pd.DataFrame({"i": i_idx, "j": j_idx, "p": P[i_idx, j_idx]})


def cluster_profiles(dataset, assign):
    """Observed-data summary of each cluster of a partition."""
    assign = np.asarray(assign, dtype=np.int64).reshape(-1, 2)
    frame = pd.DataFrame({
        "j": assign[:, 0],
        "k": assign[:, 1],
        "y": dataset.y,
        "t": dataset.t,
        "delta": dataset.delta,
        "a": dataset.a,
    })
    names = dataset.confounder_names()
    for idx, name in enumerate(names):
        frame[name] = dataset.l[:, idx]
    grouped = frame.groupby(["j", "k"], sort=True)
    profiles = grouped.agg(size=("y", "size"), mean_cost=("y", "mean"), mean_time=("t", "mean"),
                           event_rate=("delta", "mean"), treated_fraction=("a", "mean"))
    if names:
        profiles = profiles.join(grouped[names].mean().add_prefix("mean_"))
    return profiles.reset_index()
