"""Synthetic outdoor scenes, relation ground truth, and the on-disk dataset layout."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import netpbm
from .mslstm import RegionGraph, RelationLabel
from .superpixel import load_map, oversegment, save_map

MAIN_CLASSES = ("sky", "ground", "vertical")
EXTENDED_CLASSES = ("sky", "ground", "left", "center", "right", "porous", "solid")
SKY, GROUND = 0, 1


class DatasetError(ValueError):
    pass


@dataclass
class WallSegment:
    col_start: int
    col_end: int
    height_fraction: float
    color: tuple
    label: str = "vertical"


@dataclass
class SceneSpec:
    width: int = 32
    height: int = 32
    horizon_fraction: float = 0.5
    ground_fraction: float = 1 / 3
    walls: list = field(default_factory=list)
    sky_color: tuple = (0.55, 0.75, 0.95)
    ground_color: tuple = (0.45, 0.35, 0.2)
    noise_sigma: float = 0.0
    seed: int = 0

    @property
    def ground_row(self):
        return self.height - int(round(self.ground_fraction * self.height))

    def validate(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("scene needs positive width and height")
        if not 0 < self.horizon_fraction < 1:
            raise ValueError("horizon_fraction must lie in (0, 1)")
        if not 0 < self.ground_fraction < 1 or not 0 < self.ground_row < self.height:
            raise ValueError("ground_fraction leaves no sky/vertical band or no ground")
        for wall in self.walls:
            top = self.ground_row - int(round(wall.height_fraction * self.height))
            if wall.height_fraction <= 0 or top < 0:
                raise ValueError(f"wall height fraction {wall.height_fraction} does not fit")
            if not 0 <= wall.col_start < wall.col_end <= self.width:
                raise ValueError(f"wall columns [{wall.col_start}, {wall.col_end}) out of range")


def thirds_scene(size=32, noise_sigma=0.0, seed=0, wall_color=(0.6, 0.3, 0.25)):
    """Sky over a full-width wall over ground, each roughly a third of the rows."""
    return SceneSpec(size, size, horizon_fraction=0.5, ground_fraction=1 / 3,
                     walls=[WallSegment(0, size, 1 / 3, wall_color)],
                     noise_sigma=noise_sigma, seed=seed)


WALL_PALETTE = ((0.6, 0.3, 0.25), (0.45, 0.45, 0.45), (0.85, 0.82, 0.7), (0.25, 0.25, 0.3),
                (0.35, 0.5, 0.3))


def random_scene_spec(rng, size=32, noise_sigma=0.03):
    """A random outdoor layout: 1-3 walls standing on the ground under a sky."""
    def jitter(base, amount):
        return tuple(float(np.clip(c + rng.uniform(-amount, amount), 0, 1)) for c in base)

    ground_fraction = float(rng.uniform(0.25, 0.45))
    ground_row = size - int(round(ground_fraction * size))
    cuts = np.sort(rng.choice(np.arange(1, size), size=int(rng.integers(1, 4)) * 2 - 1,
                              replace=False))
    bounds = [0, *cuts.tolist(), size]
    walls = []
    for k in range(len(bounds) - 1):
        # alternate walls and gaps; the first span is a wall with probability 1/2
        if (k + int(rng.integers(0, 2))) % 2:
            continue
        max_h = (ground_row - 2) / size
        h = float(rng.uniform(0.2, max(0.21, min(0.55, max_h))))
        walls.append(WallSegment(bounds[k], bounds[k + 1], min(h, max_h),
                                 jitter(WALL_PALETTE[int(rng.integers(len(WALL_PALETTE)))], 0.06)))
    if not walls:
        walls.append(WallSegment(0, size, min(0.3, (ground_row - 2) / size),
                                 jitter(WALL_PALETTE[0], 0.06)))
    return SceneSpec(size, size, horizon_fraction=0.4, ground_fraction=ground_fraction,
                     walls=walls, sky_color=jitter((0.55, 0.75, 0.95), 0.06),
                     ground_color=jitter((0.45, 0.35, 0.2), 0.06), noise_sigma=noise_sigma,
                     seed=int(rng.integers(2 ** 31)))


def render_scene(spec, classes=MAIN_CLASSES):
    """Returns (image 3 x H x W quantised to 8 bits, label map H x W)."""
    spec.validate()
    h, w = spec.height, spec.width
    labels = np.full((h, w), SKY, dtype=np.int64)
    labels[spec.ground_row:] = GROUND
    image = np.empty((3, h, w))
    image[:] = np.asarray(spec.sky_color)[:, None, None]
    image[:, spec.ground_row:] = np.asarray(spec.ground_color)[:, None, None]
    for wall in spec.walls:
        top = spec.ground_row - int(round(wall.height_fraction * h))
        labels[top:spec.ground_row, wall.col_start:wall.col_end] = classes.index(wall.label)
        image[:, top:spec.ground_row, wall.col_start:wall.col_end] = \
            np.asarray(wall.color)[:, None, None]
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        image = image + rng.normal(0.0, spec.noise_sigma, image.shape)
    image = np.clip(np.rint(np.clip(image, 0, 1) * 255.0), 0, 255) / 255.0
    return image, labels


class RelationRule:
    """Ordered region pair -> relation label from surface classes and vertical placement.

    Replace :meth:`label` to plug in another annotation convention.
    """

    def __init__(self, classes=MAIN_CLASSES):
        self.classes = classes

    def is_vertical(self, c):
        return c >= 2

    def label(self, class_a, class_b, a_above_b):
        if class_a == class_b:
            return RelationLabel.affinity
        if SKY in (class_a, class_b):
            return RelationLabel.layering
        if GROUND in (class_a, class_b):
            a_is_vertical = class_b == GROUND
            if self.is_vertical(class_a if a_is_vertical else class_b):
                vertical_above = a_above_b if a_is_vertical else not a_above_b
                if vertical_above:
                    return RelationLabel.supporting
            return RelationLabel.layering
        if self.is_vertical(class_a) and self.is_vertical(class_b):
            return RelationLabel.siding
        return RelationLabel.layering


def region_classes(surface_gt, spmap, num_classes):
    """Majority surface class per region, ties to the smaller class index."""
    counts = np.zeros((spmap.K, num_classes), dtype=np.int64)
    np.add.at(counts, (spmap.flat, surface_gt.reshape(-1)), 1)
    return np.argmax(counts, axis=1)


def derive_relations(surface_gt, spmap, classes=MAIN_CLASSES, rule=None, graph=None):
    """{(a, b): RelationLabel} for every ordered adjacent region pair."""
    rule = rule or RelationRule(classes)
    graph = graph or RegionGraph.build(spmap)
    cls = region_classes(surface_gt, spmap, len(classes))
    rows = spmap.centroids()[:, 0]
    return {(int(a), int(b)): RelationLabel(rule.label(int(cls[a]), int(cls[b]), rows[a] < rows[b]))
            for a, b in graph.pairs}


@dataclass
class TrainingExample:
    image: np.ndarray  # 3 x H x W
    surface_gt: np.ndarray  # H x W
    graphs: list  # RegionGraph per configured scale
    relation_gt: list  # {(a, b): label} per configured scale

    def relation_targets(self):
        out = []
        for rg, gt in zip(self.graphs, self.relation_gt):
            try:
                out.append(np.array([int(gt[(int(a), int(b))]) for a, b in rg.pairs],
                                    dtype=np.int64))
            except KeyError as exc:
                raise ValueError(f"no relation ground truth for pair {exc.args[0]} "
                                 f"at scale {rg.scale}") from None
        return out


def build_example(image, surface_gt, scales, classes=MAIN_CLASSES, compactness=0.1,
                  iterations=10, scale_means="pixels_per_region", spmaps=None):
    graphs, rels = [], []
    for i, scale in enumerate(scales):
        spmap = spmaps[i] if spmaps is not None else \
            oversegment(image, scale, compactness, iterations, scale_means)
        rg = RegionGraph.build(spmap)
        graphs.append(rg)
        rels.append(derive_relations(surface_gt, spmap, classes, graph=rg))
    return TrainingExample(image, surface_gt, graphs, rels)


def generate_synthetic(spec, scales=(16, 64), classes=MAIN_CLASSES, compactness=0.1,
                       scale_means="pixels_per_region"):
    image, labels = render_scene(spec, classes)
    return build_example(image, labels, scales, classes, compactness, scale_means=scale_means)


def synthetic_dataset(count, size=32, seed=0, scales=(16, 64), noise_sigma=0.03,
                      compactness=0.1, scale_means="pixels_per_region"):
    rng = np.random.default_rng(seed)
    specs = [random_scene_spec(rng, size, noise_sigma) for _ in range(count)]
    return [generate_synthetic(s, scales, compactness=compactness, scale_means=scale_means)
            for s in specs]


# ----------------------------------------------------------------------------
# files


def _stem(i):
    return f"scene_{i:04d}"


def write_dataset(examples, out, classes=MAIN_CLASSES, extra_meta=None):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    scales = [rg.scale for rg in examples[0].graphs] if examples else []
    meta = {"count": len(examples), "scales": scales, "classes": list(classes)}
    meta.update(extra_meta or {})
    (out / "dataset.json").write_text(json.dumps(meta, indent=1))
    for i, ex in enumerate(examples):
        stem = _stem(i)
        netpbm.write_ppm(out / f"{stem}.ppm", ex.image)
        netpbm.write_pgm(out / f"{stem}.labels.pgm", ex.surface_gt)
        records = []
        for rg, gt in zip(ex.graphs, ex.relation_gt):
            save_map(rg.spmap, out / f"{stem}.sp{_scale_tag(rg.scale)}.pgm")
            records += [{"scale": rg.scale, "region_a": a, "region_b": b, "label": int(lab)}
                        for (a, b), lab in sorted(gt.items())]
        (out / f"{stem}.relations.json").write_text(json.dumps(records))
    return out


def _scale_tag(scale):
    return f"{scale:g}"


def read_dataset(path):
    path = Path(path)
    meta_file = path / "dataset.json"
    if not meta_file.exists():
        raise FileNotFoundError(f"{meta_file} not found")
    meta = json.loads(meta_file.read_text())
    examples = []
    for i in range(meta["count"]):
        stem = _stem(i)
        image = netpbm.read_ppm(path / f"{stem}.ppm")
        labels = netpbm.read_pgm(path / f"{stem}.labels.pgm")
        records = json.loads((path / f"{stem}.relations.json").read_text())
        graphs, rels = [], []
        for scale in meta["scales"]:
            rg = RegionGraph.build(load_map(path / f"{stem}.sp{_scale_tag(scale)}.pgm"))
            graphs.append(rg)
            rels.append({(r["region_a"], r["region_b"]): RelationLabel(r["label"])
                         for r in records if r["scale"] == scale})
        examples.append(TrainingExample(image, labels, graphs, rels))
    return examples, meta


def spec_to_dict(spec):
    return asdict(spec)
