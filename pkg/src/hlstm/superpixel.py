"""Multi-scale SLIC over-segmentation, region adjacency, and pixel/region transfer."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import netpbm


@dataclass
class SuperpixelMap:
    assignment: np.ndarray  # (H, W) region ids in [0, K)
    scale: float

    @property
    def K(self):
        return int(self.assignment.max()) + 1

    @property
    def shape(self):
        return self.assignment.shape

    @property
    def flat(self):
        return self.assignment.reshape(-1)

    def sizes(self):
        return np.bincount(self.flat, minlength=self.K)

    def centroids(self):
        """(K, 2) mean (row, col) of each region."""
        h, w = self.shape
        rows, cols = np.mgrid[0:h, 0:w]
        n = self.sizes()
        r = np.bincount(self.flat, weights=rows.ravel(), minlength=self.K) / n
        c = np.bincount(self.flat, weights=cols.ravel(), minlength=self.K) / n
        return np.stack([r, c], axis=1)


@dataclass
class AdjacencyGraph:
    num_nodes: int
    edges: np.ndarray  # (E, 2) with a < b, sorted lexicographically

    @property
    def ordered_pairs(self):
        if len(self.edges) == 0:
            return np.zeros((0, 2), dtype=np.int64)
        both = np.concatenate([self.edges, self.edges[:, ::-1]])
        order = np.lexsort((both[:, 1], both[:, 0]))
        return both[order]

    def degree(self):
        return np.bincount(self.edges.ravel(), minlength=self.num_nodes)

    def neighbours(self, a):
        e = self.edges
        return np.sort(np.concatenate([e[e[:, 0] == a, 1], e[e[:, 1] == a, 0]]))


def seed_count(shape, scale, scale_means="pixels_per_region"):
    h, w = shape
    if scale_means == "region_count":
        return max(1, min(h * w, int(round(scale))))
    if not 1 <= scale <= h * w:
        raise ValueError(f"scale {scale} outside [1, {h * w}]")
    return math.ceil(h * w / scale)


def seed_grid(shape, k):
    """Rows x cols of a seed lattice whose size is close to ``k`` and follows the aspect ratio."""
    h, w = shape
    ny = min(h, max(1, int(round(math.sqrt(k * h / w)))))
    nx = min(w, max(1, int(round(k / ny))))
    return ny, nx


def oversegment(image, scale, compactness=0.1, iterations=10, scale_means="pixels_per_region"):
    """SLIC-style local k-means over (colour, position), then connectivity enforcement.

    ``image`` is C x H x W.  Colour distance ties go to the nearer seed and
    then to the smaller seed index, so a uniform image splits into the
    seed lattice's cells.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[None]
    c, h, w = image.shape
    if h == 0 or w == 0:
        raise ValueError("cannot segment an empty image")
    k = seed_count((h, w), scale, scale_means)
    ny, nx = seed_grid((h, w), k)
    step = math.sqrt(h * w / (ny * nx))
    spatial_weight = (compactness / step) ** 2
    window = 2.0 * step

    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    cy = (np.arange(ny) + 0.5) * h / ny - 0.5
    cx = (np.arange(nx) + 0.5) * w / nx - 0.5
    centers = np.array([(y, x) for y in cy for x in cx])
    # seed colour: mean over the seed's lattice cell
    cell = (np.minimum((rows * ny / h).astype(int), ny - 1) * nx
            + np.minimum((cols * nx / w).astype(int), nx - 1)).ravel()
    colours = _cluster_means(image.reshape(c, -1), cell, len(centers))

    labels = np.zeros((h, w), dtype=np.int64)
    for _ in range(iterations):
        labels = _assign(image, rows, cols, centers, colours, spatial_weight, window)
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=len(centers))
        live = counts > 0
        centers[live, 0] = np.bincount(flat, rows.ravel(), len(centers))[live] / counts[live]
        centers[live, 1] = np.bincount(flat, cols.ravel(), len(centers))[live] / counts[live]
        colours[live] = _cluster_means(image.reshape(c, -1), flat, len(centers))[live]

    labels = enforce_connectivity(labels)
    return SuperpixelMap(labels, scale)


def _cluster_means(flat_image, labels, k):
    n = np.bincount(labels, minlength=k).astype(np.float64)
    n[n == 0] = 1.0
    return np.stack([np.bincount(labels, ch, k) for ch in flat_image], axis=1) / n[:, None]


def _assign(image, rows, cols, centers, colours, spatial_weight, window):
    h, w = rows.shape
    best = np.full((h, w), np.inf)
    best_ds = np.full((h, w), np.inf)
    labels = np.full((h, w), -1, dtype=np.int64)
    for idx, ((y, x), col) in enumerate(zip(centers, colours)):
        r0, r1 = max(0, int(math.floor(y - window))), min(h, int(math.ceil(y + window)) + 1)
        c0, c1 = max(0, int(math.floor(x - window))), min(w, int(math.ceil(x + window)) + 1)
        patch = image[:, r0:r1, c0:c1]
        dc = ((patch - col[:, None, None]) ** 2).sum(axis=0)
        ds = (rows[r0:r1, c0:c1] - y) ** 2 + (cols[r0:r1, c0:c1] - x) ** 2
        dist = dc + spatial_weight * ds
        b, bds = best[r0:r1, c0:c1], best_ds[r0:r1, c0:c1]
        better = (dist < b) | ((dist == b) & (ds < bds))
        b[better] = dist[better]
        bds[better] = ds[better]
        labels[r0:r1, c0:c1][better] = idx
    missing = labels < 0
    if missing.any():
        # pixels outside every search window fall back to the spatially nearest seed
        pts = np.stack([rows[missing], cols[missing]], axis=1)
        d2 = ((pts[:, None, :] - centers[None]) ** 2).sum(axis=2)
        labels[missing] = np.argmin(d2, axis=1)
    return labels


def _components(labels):
    """Component id per pixel for 4-connected runs of equal label (raster-ordered ids)."""
    h, w = labels.shape
    idx = np.arange(h * w).reshape(h, w)
    right = labels[:, :-1] == labels[:, 1:]
    down = labels[:-1, :] == labels[1:, :]
    src = np.concatenate([idx[:, :-1][right], idx[:-1, :][down]])
    dst = np.concatenate([idx[:, 1:][right], idx[1:, :][down]])
    graph = coo_matrix((np.ones(len(src)), (src, dst)), shape=(h * w, h * w))
    _, comp = connected_components(graph, directed=False)
    # renumber so component ids follow the raster order of their first pixel
    _, first = np.unique(comp, return_index=True)
    remap = np.empty(len(first), dtype=np.int64)
    remap[np.argsort(first, kind="stable")] = np.arange(len(first))
    return remap[comp].reshape(h, w)


def _pixel_pairs(grid):
    return (np.concatenate([grid[:, :-1].ravel(), grid[:-1, :].ravel()]),
            np.concatenate([grid[:, 1:].ravel(), grid[1:, :].ravel()]))


def enforce_connectivity(labels):
    """Absorb every non-largest fragment of a label into its largest adjacent main region.

    Returns labels renumbered 0..K-1 in raster order of first appearance.
    """
    labels = labels.copy()
    while True:
        comp = _components(labels)
        ncomp = comp.max() + 1
        sizes = np.bincount(comp.ravel(), minlength=ncomp)
        comp_label = np.zeros(ncomp, dtype=np.int64)
        comp_label[comp.ravel()] = labels.ravel()
        # main component of each label: largest, ties to the earliest in raster order
        order = np.lexsort((np.arange(ncomp), -sizes, comp_label))
        is_main = np.zeros(ncomp, dtype=bool)
        first_of_label = np.ones(ncomp, dtype=bool)
        first_of_label[1:] = comp_label[order][1:] != comp_label[order][:-1]
        is_main[order[first_of_label]] = True
        if is_main.all():
            break
        a, b = _pixel_pairs(comp)
        cross = a != b
        src = np.concatenate([a[cross], b[cross]])
        dst = np.concatenate([b[cross], a[cross]])
        keep = ~is_main[src] & is_main[dst]
        code = np.unique(src[keep] * ncomp + dst[keep])
        src, dst = code // ncomp, code % ncomp
        # per orphan: the largest adjacent main component, ties to the smaller label
        order = np.lexsort((comp_label[dst], -sizes[dst], src))
        src, dst = src[order], dst[order]
        first = np.ones(len(src), dtype=bool)
        first[1:] = src[1:] != src[:-1]
        new_label = comp_label.copy()
        new_label[src[first]] = comp_label[dst[first]]
        labels = new_label[comp]
    _, first, inverse = np.unique(labels.ravel(), return_index=True, return_inverse=True)
    remap = np.empty(len(first), dtype=np.int64)
    remap[np.argsort(first, kind="stable")] = np.arange(len(first))
    return remap[inverse].reshape(labels.shape)


def adjacency(spmap):
    """Rook adjacency between distinct regions."""
    lab = spmap.assignment
    a, b = _pixel_pairs(lab)
    diff = a != b
    lo = np.minimum(a[diff], b[diff])
    hi = np.maximum(a[diff], b[diff])
    edges = np.unique(np.stack([lo, hi], axis=1), axis=0) if diff.any() \
        else np.zeros((0, 2), dtype=np.int64)
    return AdjacencyGraph(spmap.K, edges.astype(np.int64))


def mean_pool(field, spmap):
    """(K, d) per-region mean of a d x H x W field."""
    d = field.shape[0]
    flat = field.reshape(d, -1)
    n = spmap.sizes().astype(np.float64)
    return np.stack([np.bincount(spmap.flat, ch, spmap.K) for ch in flat], axis=1) / n[:, None]


def assign_back(h_values, m_values, spmap):
    """Broadcast per-region (K, d) hidden and memory values to d x H x W pixel fields."""
    out = []
    for vals in (h_values, m_values):
        vals = np.asarray(vals, dtype=np.float64)
        if vals.shape[0] != spmap.K:
            raise ValueError(f"expected values for {spmap.K} regions, got {vals.shape[0]}")
        out.append(np.moveaxis(vals[spmap.assignment], -1, 0))
    return tuple(out)


def is_partition_connected(spmap):
    lab = spmap.assignment
    K = spmap.K
    if lab.min() < 0 or np.any(np.bincount(lab.ravel(), minlength=K) == 0):
        return False
    comp = _components(lab)
    return comp.max() + 1 == K


def save_map(spmap, path):
    path = Path(path)
    netpbm.write_pgm(path, spmap.assignment, maxval=65535)
    path.with_suffix(".json").write_text(json.dumps({"scale": spmap.scale, "K": spmap.K}))


def load_map(path):
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    lab = netpbm.read_pgm(path).astype(np.int64)
    spmap = SuperpixelMap(lab, meta["scale"])
    if spmap.K != meta["K"]:
        raise ValueError(f"{path}: sidecar K={meta['K']} but map has {spmap.K} regions")
    return spmap
