import numpy as np
import pytest

from hlstm.dataio import SceneSpec, WallSegment, generate_synthetic, render_scene, thirds_scene
from hlstm.mslstm import RelationGraphPrediction
from hlstm.reconstruct3d import (FOLD, VERTICAL_SKY, Boundary, Camera, ReconstructionError,
                                 build_model, douglas_peucker, estimate_horizon, export_obj,
                                 extract_boundaries, parse_obj, reconstruct,
                                 relations_from_ground_truth)
from hlstm.superpixel import SuperpixelMap, adjacency


def thirds(size=32):
    ex = generate_synthetic(thirds_scene(size), scales=(16, 64))
    rg = ex.graphs[0]
    rel = relations_from_ground_truth(ex.surface_gt, rg.spmap, ex.relation_gt[0])
    return ex, rg.spmap, rel


def signed_area(pts):
    x, y = pts[:, 0], -pts[:, 1]  # y up, as the viewer sees the image
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def test_thirds_boundaries():
    ex, sp, rel = thirds()
    b = extract_boundaries(ex.surface_gt, rel, sp)
    folds = [x for x in b if x.kind == FOLD]
    cuts = [x for x in b if x.kind == VERTICAL_SKY]
    assert len(folds) == 1 and len(cuts) == 1 and len(b) == 2
    ground_row = thirds_scene(32).ground_row
    assert np.all(folds[0].polyline[:, 1] == ground_row)
    assert folds[0].polyline[:, 0].min() == 0 and folds[0].polyline[:, 0].max() == 32
    top = int(np.argmax(ex.surface_gt[:, 0] == 2))
    assert np.all(cuts[0].polyline[:, 1] == top)


@pytest.mark.parametrize("cls", [0, 1])
def test_uniform_images_have_no_boundaries(cls):
    sp = SuperpixelMap(np.repeat(np.arange(4), 4).reshape(4, 4), 4)
    pairs = adjacency(sp).ordered_pairs
    rel = RelationGraphPrediction(4, pairs, np.tile(np.eye(4)[3], (len(pairs), 1)))
    assert extract_boundaries(np.full((4, 4), cls), rel, sp) == []


def fold_at(row, width=10):
    return Boundary(FOLD, np.array([[0.0, row], [float(width), row]]), 1)


def test_horizon_rules():
    assert estimate_horizon([fold_at(20)], 32) == 19
    assert estimate_horizon([fold_at(40), fold_at(60)], 100) == 39
    assert estimate_horizon([fold_at(0)], 32) == 0
    with pytest.raises(ReconstructionError, match="horizon undefined"):
        estimate_horizon([], 32)


def test_douglas_peucker():
    pts = np.array([[0, 0], [1, 0.2], [2, -0.3], [3, 0], [4, 5]], dtype=float)
    out = douglas_peucker(pts, 1.5)
    assert out.tolist() == [[0, 0], [3, 0], [4, 5]]


def test_thirds_model_geometry():
    ex, sp, rel = thirds()
    model = reconstruct(ex.surface_gt, rel, sp)
    assert [p.role for p in model.planes] == ["ground", "vertical"]
    ground, wall = model.planes
    assert np.all(ground.vertices[:, 1] == 0.0)
    assert abs(float(ground.normal() @ wall.normal())) <= 1e-9
    # the wall meets the ground along the fold's 3D line
    base = wall.vertices[[1, 2]]
    assert np.all(base[:, 1] == 0.0)
    assert np.allclose(base, ground.vertices[[0, 3]], atol=1e-12)
    # image-space projection of the fold lands on the boundary row
    proj = model.camera.project(base)
    assert np.abs(proj[:, 1] - thirds_scene(32).ground_row).max() <= 1.0
    # every face is counter-clockwise seen from the camera, normals face it
    for plane in model.planes:
        assert signed_area(model.camera.project(plane.vertices)) > 0
        cam = np.array([0.0, model.camera.height, 0.0])
        assert plane.normal() @ (cam - plane.vertices[0]) > 0
        np.testing.assert_allclose(plane.texture_coords[:, 0], plane.image_points[:, 0] / 32)
        np.testing.assert_allclose(plane.texture_coords[:, 1], 1 - plane.image_points[:, 1] / 32)


def test_ground_back_projection_elevation_zero():
    cam = Camera(64.0, 1.6, 20.0, 32.0)
    ys = np.linspace(21, 64, 50)
    pts = cam.ray_to_ground(np.linspace(0, 64, 50), ys)
    assert np.all(pts[:, 1] == 0.0)
    np.testing.assert_allclose(cam.project(pts)[:, 1], ys, atol=1e-9)
    with pytest.raises(ReconstructionError):
        cam.ray_to_ground(np.array([3.0]), np.array([20.0]))


def test_fold_closer_to_horizon_is_farther():
    labels = np.zeros((32, 32), dtype=int)
    depths = []
    for row in (26, 24, 22):
        lab = labels.copy()
        lab[row - 6:row] = 2
        lab[row:] = 1
        model = build_model(lab, [fold_at(row, 32)], horizon=15.0)
        depths.append(-model.planes[1].vertices[1, 2])
    assert depths[0] < depths[1] < depths[2]


def test_fold_above_horizon_is_an_error():
    with pytest.raises(ReconstructionError):
        build_model(np.zeros((32, 32), dtype=int), [fold_at(10, 32)], horizon=12.0)


def test_export_obj(tmp_path):
    ex, sp, rel = thirds()
    model = reconstruct(ex.surface_gt, rel, sp)
    paths = export_obj(model, ex.image, tmp_path, "thirds")
    assert [p.name for p in paths] == ["thirds.obj", "thirds.mtl", "thirds.ppm"]
    text = paths[0].read_text()
    assert "\r" not in text
    lines = text.splitlines()
    assert sum(l.startswith("v ") for l in lines) == 8
    assert sum(l.startswith("vt ") for l in lines) == 8
    assert sum(l.startswith("f ") for l in lines) == 2
    verts, tex, faces = parse_obj(paths[0])
    for face in faces:
        idx = [v for v, _ in face]
        assert len(set(idx)) == len(idx) == 4
        assert all(1 <= v <= len(verts) for v in idx)
        assert all(1 <= t <= len(tex) for _, t in face)
    assert np.all((tex >= 0) & (tex <= 1))
    ground = verts[[v - 1 for v, _ in faces[0]]]
    assert len(set(ground[:, 1].tolist())) == 1 and ground[0, 1] == 0.0
    # full-precision coordinates survive the text round trip
    assert np.array_equal(verts[:4], model.planes[0].vertices)
    assert "map_Kd thirds.ppm" in paths[1].read_text()


def test_export_reports_path_on_failure(tmp_path):
    ex, sp, rel = thirds()
    model = reconstruct(ex.surface_gt, rel, sp)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        export_obj(model, ex.image, blocker / "sub", "m")


def test_extended_vertical_subclasses_fold():
    spec = SceneSpec(32, 32, ground_fraction=1 / 3,
                     walls=[WallSegment(0, 16, 1 / 3, (0.6, 0.3, 0.25), "left"),
                            WallSegment(16, 32, 1 / 3, (0.2, 0.5, 0.3), "right")])
    from hlstm.dataio import EXTENDED_CLASSES, build_example
    image, labels = render_scene(spec, EXTENDED_CLASSES)
    ex = build_example(image, labels, (16,), EXTENDED_CLASSES)
    sp = ex.graphs[0].spmap
    rel = relations_from_ground_truth(labels, sp, ex.relation_gt[0])
    folds = [b for b in extract_boundaries(labels, rel, sp) if b.kind == FOLD]
    assert len(folds) == 1 and np.all(folds[0].polyline[:, 1] == spec.ground_row)
