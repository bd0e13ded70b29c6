"""Cut-and-fold pop-up reconstruction from a surface label map and relation predictions.

Image coordinates are continuous: pixel (row r, col c) covers
[c, c+1) x [r, r+1), so region boundaries fall on integer lattice corners.
World coordinates are right-handed: X right, Y up (elevation), Z toward the
viewer.  The camera sits at (0, height, 0) looking along -Z with its
principal point on the horizon row.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import netpbm
from .dataio import GROUND, SKY
from .mslstm import RelationLabel
from .superpixel import adjacency

FOLD = "ground_vertical_fold"
GROUND_SKY = "ground_sky_cut"
VERTICAL_SKY = "vertical_sky_cut"


class ReconstructionError(ValueError):
    pass


@dataclass
class Boundary:
    kind: str
    polyline: np.ndarray  # (n, 2) points as (x, y) image coordinates
    relation_source: RelationLabel


@dataclass
class Camera:
    focal_length: float
    height: float
    horizon_row: float
    cx: float

    def ray_to_ground(self, x, y):
        """World point where the ray through image point (x, y) meets elevation 0."""
        dy = np.asarray(y, dtype=np.float64) - self.horizon_row
        if np.any(dy <= 0):
            raise ReconstructionError("point at or above the horizon never meets the ground")
        t = self.height / dy
        x = np.asarray(x, dtype=np.float64)
        return np.stack([t * (x - self.cx), np.zeros_like(t), -t * self.focal_length], axis=-1)

    def project(self, points):
        """World points (n, 3) to image (x, y)."""
        p = np.asarray(points, dtype=np.float64)
        z = -p[..., 2]
        return np.stack([self.cx + self.focal_length * p[..., 0] / z,
                         self.horizon_row + self.focal_length * (self.height - p[..., 1]) / z],
                        axis=-1)


@dataclass
class Plane:
    vertices: np.ndarray  # (4, 3) world coordinates, counter-clockwise seen from the camera
    image_points: np.ndarray  # (4, 2) source image (x, y)
    texture_coords: np.ndarray  # (4, 2) in [0, 1]^2, origin bottom-left
    role: str

    def normal(self):
        v = self.vertices
        n = np.cross(v[1] - v[0], v[3] - v[0])
        return n / np.linalg.norm(n)


@dataclass
class PopUpModel:
    camera: Camera
    planes: list = field(default_factory=list)
    boundaries: list = field(default_factory=list)
    image_shape: tuple = (0, 0)


# ----------------------------------------------------------------------------
# boundaries


def _pair_argmax(relations):
    """Unordered pair -> argmax of the probabilities averaged over both orders."""
    acc = defaultdict(lambda: np.zeros(4))
    for (a, b), p in zip(relations.pairs, relations.probs):
        acc[(min(a, b), max(a, b))] += p
    return {k: RelationLabel(int(np.argmax(v))) for k, v in acc.items()}


def _label_edges(labels, spmap, pair_label, want, relation):
    """Unit lattice edges between pixels of classes ``want`` whose regions carry ``relation``.

    Edges inside a single region have no relation evidence and are kept on
    the strength of the labels alone.
    """
    lab, reg = labels, spmap.assignment
    h, w = lab.shape
    edges = []
    # vertical neighbours (r-1, c) / (r, c): edge from (c, r) to (c+1, r)
    for (a_lab, b_lab, a_reg, b_reg, horizontal) in (
            (lab[:-1, :], lab[1:, :], reg[:-1, :], reg[1:, :], True),
            (lab[:, :-1], lab[:, 1:], reg[:, :-1], reg[:, 1:], False)):
        hit = ((a_lab == want[0]) & (b_lab == want[1])) | ((a_lab == want[1]) & (b_lab == want[0]))
        for r, c in zip(*np.nonzero(hit)):
            ra, rb = int(a_reg[r, c]), int(b_reg[r, c])
            if ra != rb and pair_label.get((min(ra, rb), max(ra, rb))) != relation:
                continue
            if horizontal:
                edges.append(((c, r + 1), (c + 1, r + 1)))
            else:
                edges.append(((c + 1, r), (c + 1, r + 1)))
    return edges


def _trace(edges):
    """Split a set of unit lattice edges into polylines (lists of corner points)."""
    adj = defaultdict(set)
    for p, q in edges:
        adj[p].add(q)
        adj[q].add(p)
    used = set()
    lines = []

    def walk(start):
        line, cur = [start], start
        while True:
            nxt = [q for q in sorted(adj[cur]) if frozenset((cur, q)) not in used]
            if not nxt:
                return line
            used.add(frozenset((cur, nxt[0])))
            cur = nxt[0]
            line.append(cur)

    ends = sorted(p for p in adj if len(adj[p]) != 2)
    for p in ends + sorted(adj):
        while any(frozenset((p, q)) not in used for q in adj[p]):
            lines.append(walk(p))
    return lines


def douglas_peucker(points, tol):
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 3:
        return pts
    a, b = pts[0], pts[-1]
    ab = b - a
    norm = np.hypot(*ab)
    rel = pts[1:-1] - a
    if norm == 0:
        dist = np.hypot(rel[:, 0], rel[:, 1])
    else:
        dist = np.abs(ab[0] * rel[:, 1] - ab[1] * rel[:, 0]) / norm
    i = int(np.argmax(dist)) + 1
    if dist[i - 1] <= tol:
        return np.stack([a, b])
    left = douglas_peucker(pts[:i + 1], tol)
    right = douglas_peucker(pts[i:], tol)
    return np.concatenate([left[:-1], right])


def extract_boundaries(labels, relations, spmap, tol=1.5):
    """Fold polylines from supporting ground/vertical pairs, cuts from layering sky pairs."""
    # vertical subclasses (extended class set) all fold like the main vertical class
    labels = np.minimum(np.asarray(labels), 2)
    pair_label = _pair_argmax(relations)
    out = []
    specs = ((FOLD, (GROUND, 2), RelationLabel.supporting),
             (GROUND_SKY, (GROUND, SKY), RelationLabel.layering),
             (VERTICAL_SKY, (2, SKY), RelationLabel.layering))
    for kind, want, rel in specs:
        for line in _trace(_label_edges(labels, spmap, pair_label, want, rel)):
            simple = douglas_peucker(np.array(line, dtype=np.float64), tol)
            if len(simple) >= 2:
                out.append(Boundary(kind, simple, rel))
    return out


def estimate_horizon(boundaries, height=None, margin=1.0):
    folds = [b for b in boundaries if b.kind == FOLD]
    if not folds:
        raise ReconstructionError("horizon undefined: no ground-vertical fold")
    row = min(float(b.polyline[:, 1].min()) for b in folds) - margin
    upper = np.inf if height is None else np.nextafter(float(height), 0)
    return float(np.clip(row, 0.0, upper))


# ----------------------------------------------------------------------------
# geometry


def _tex(points, shape):
    h, w = shape
    p = np.asarray(points, dtype=np.float64)
    return np.stack([p[:, 0] / w, 1.0 - p[:, 1] / h], axis=1)


def _wall_top(labels, x0, x1, y_bottom):
    """Highest image row reached by vertical pixels standing on the segment's columns."""
    h, w = labels.shape
    top = y_bottom
    for c in range(max(0, int(np.floor(x0))), min(w, int(np.ceil(x1)))):
        r = int(np.ceil(y_bottom)) - 1
        while r >= 0 and labels[r, c] >= 2:
            r -= 1
        top = min(top, r + 1)
    return float(top)


def build_model(labels, boundaries, horizon, camera_height=1.6, focal_length=None):
    labels = np.asarray(labels)
    h, w = labels.shape
    cam = Camera(float(focal_length or max(h, w)), float(camera_height), float(horizon), w / 2.0)
    folds = [b for b in boundaries if b.kind == FOLD]
    model = PopUpModel(cam, [], list(boundaries), (h, w))
    if not folds:
        return model
    for b in folds:
        if np.all(b.polyline[:, 1] <= horizon):
            raise ReconstructionError("fold polyline lies entirely above the horizon")
    # ground: image band from the highest fold down to the bottom edge
    y_top = min(float(b.polyline[:, 1].min()) for b in folds)
    if y_top <= horizon:
        raise ReconstructionError("fold reaches the horizon; ground depth unbounded")
    img = np.array([[0.0, y_top], [0.0, h], [float(w), h], [float(w), y_top]])
    model.planes.append(Plane(cam.ray_to_ground(img[:, 0], img[:, 1]), img, _tex(img, (h, w)),
                              "ground"))
    for b in folds:
        pts = b.polyline
        for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
            if x0 > x1:
                x0, y0, x1, y1 = x1, y1, x0, y0
            if x0 == x1 or min(y0, y1) <= horizon:
                continue
            top = _wall_top(labels, x0, x1, min(y0, y1))
            base = cam.ray_to_ground(np.array([x0, x1]), np.array([y0, y1]))
            # the ray through (x, y') meets the vertical line above a ground point at the
            # same ray parameter, so the wall's upper corners share X and Z with the base
            t = cam.height / (np.array([y0, y1]) - cam.horizon_row)
            elev = cam.height - t * (top - cam.horizon_row)
            upper = base.copy()
            upper[:, 1] = elev
            verts = np.array([upper[0], base[0], base[1], upper[1]])
            img = np.array([[x0, top], [x0, y0], [x1, y1], [x1, top]])
            model.planes.append(Plane(verts, img, _tex(img, (h, w)), "vertical"))
    return model


def reconstruct(labels, relations, spmap, camera_height=1.6, tol=1.5, margin=1.0):
    bounds = extract_boundaries(labels, relations, spmap, tol)
    horizon = estimate_horizon(bounds, labels.shape[0], margin)
    return build_model(labels, bounds, horizon, camera_height)


def relations_from_ground_truth(labels, spmap, gt):
    """A one-hot RelationGraphPrediction built from {(a, b): label} ground truth."""
    from .mslstm import RelationGraphPrediction

    pairs = adjacency(spmap).ordered_pairs
    probs = np.zeros((len(pairs), 4))
    for i, (a, b) in enumerate(pairs):
        probs[i, int(gt[(int(a), int(b))])] = 1.0
    return RelationGraphPrediction(spmap.scale, pairs, probs)


# ----------------------------------------------------------------------------
# export


def export_obj(model, image, out_dir, name="model"):
    """Write <name>.obj, <name>.mtl and <name>.ppm; returns the three paths."""
    out_dir = Path(out_dir)
    paths = [out_dir / f"{name}.{ext}" for ext in ("obj", "mtl", "ppm")]
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        netpbm.write_ppm(paths[2], image)
        paths[1].write_text(f"newmtl scene\nKa 1 1 1\nKd 1 1 1\nmap_Kd {name}.ppm\n",
                            newline="\n")
        lines = [f"mtllib {name}.mtl", "usemtl scene"]
        faces = []
        for i, plane in enumerate(model.planes):
            lines += [f"v {x!r} {y!r} {z!r}" for x, y, z in plane.vertices.tolist()]
            lines += [f"vt {u!r} {v!r}" for u, v in plane.texture_coords.tolist()]
            idx = [4 * i + k + 1 for k in range(4)]
            faces.append(f"g {plane.role}{i}")
            faces.append("f " + " ".join(f"{j}/{j}" for j in idx))
        paths[0].write_text("\n".join(lines + faces) + "\n", newline="\n")
    except OSError as exc:
        raise OSError(f"failed writing {exc.filename or out_dir}: {exc.strerror}") from exc
    return paths


def parse_obj(path):
    """Minimal reader for the files export_obj writes: (vertices, texcoords, faces)."""
    verts, tex, faces = [], [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "vt":
            tex.append([float(x) for x in parts[1:3]])
        elif parts[0] == "f":
            faces.append([tuple(int(i) for i in p.split("/")) for p in parts[1:]])
    return np.array(verts), np.array(tex), faces
