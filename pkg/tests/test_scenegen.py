import numpy as np
import pytest

from ellipseg.geometry import ellipse_iou, raster_mask
from ellipseg.labelgen import fit_instances, render_instance
from ellipseg.scenegen import (SceneGenerationError, SceneSpec, generate_scene, generate_suite, load_scene,
                               overlap_fraction, read_manifest, suite_specs)


def test_spec_validation_and_round_trip():
    with pytest.raises(ValueError):
        SceneSpec(a_range=(5, 6), b_range=(7, 8))
    with pytest.raises(ValueError):
        SceneSpec(max_overlap=1.0)
    with pytest.raises(ValueError):
        SceneSpec.from_dict({"widht": 10})
    spec = SceneSpec(width=50, n_animals=2, seed=9)
    assert SceneSpec.from_dict(spec.to_dict()) == spec


def test_empty_scene_is_background():
    sc, feats = generate_scene(SceneSpec(n_animals=0, noise_sigma=0))
    assert sc.ellipses == []
    assert feats.shape == (128, 128, 3)
    assert np.all(feats[..., 2] == feats[0, 0, 2])


def test_same_seed_same_output():
    a = generate_scene(SceneSpec(seed=5))
    b = generate_scene(SceneSpec(seed=5))
    assert a[0].ellipses == b[0].ellipses
    assert np.array_equal(a[1], b[1])
    c = generate_scene(SceneSpec(seed=6))
    assert c[0].ellipses != a[0].ellipses


def test_zero_overlap_means_disjoint():
    for seed in range(5):
        sc, _ = generate_scene(SceneSpec(n_animals=5, max_overlap=0.0, seed=seed))
        masks = [raster_mask(e, sc.shape) for e in sc.ellipses]
        assert sum(m.sum() for m in masks) == render_instance(sc).foreground().sum()


def test_overlap_bound_respected():
    sc, _ = generate_scene(SceneSpec(n_animals=6, max_overlap=0.1, seed=2))
    masks = [raster_mask(e, sc.shape) for e in sc.ellipses]
    for i in range(len(masks)):
        for j in range(i):
            assert overlap_fraction(masks[i], masks[j]) <= 0.1


def test_infeasible_spec_names_constraint():
    spec = SceneSpec(width=40, height=40, n_animals=8, a_range=(15, 16), b_range=(8, 9), max_overlap=0.0)
    with pytest.raises(SceneGenerationError, match="max_overlap"):
        generate_scene(spec)


def test_scene_contents():
    sc, feats = generate_scene(SceneSpec(n_animals=4, seed=3))
    assert sorted(e.depth for e in sc.ellipses) == [0, 1, 2, 3]
    assert all(e.head_sign in (-1, 1) for e in sc.ellipses)
    assert feats.min() >= 0 and feats.max() <= 1
    # features are stored losslessly as 8-bit
    assert np.allclose(feats * 255, np.rint(feats * 255))


def test_suite_specs():
    specs = suite_specs(10, seed=1, n_animals=(3, 6), width=64, height=64)
    assert len(specs) == 10
    assert all(3 <= s.n_animals <= 6 and s.width == 64 for s in specs)
    assert len({s.seed for s in specs}) == 10
    assert suite_specs(10, seed=1, width=64, height=64) == specs


def test_generate_suite(tmp_path):
    specs = [SceneSpec(width=64, height=64, n_animals=2, a_range=(8, 10), b_range=(4, 5), seed=s)
             for s in range(3)]
    out = generate_suite(specs, tmp_path / "ds")
    manifest = read_manifest(out)
    assert [s["name"] for s in manifest["scenes"]] == ["scene_0000", "scene_0001", "scene_0002"]
    data = load_scene(out, "scene_0001")
    sc, feats = generate_scene(specs[1])
    assert data["scene"].ellipses == sc.ellipses
    assert np.array_equal(data["features"], feats)
    assert np.array_equal(data["instance"].pixels, render_instance(sc).pixels)


def test_gt_extraction_differs_only_when_occluded():
    seen_occluded = 0
    for seed in range(8):
        sc, _ = generate_scene(SceneSpec(n_animals=6, max_overlap=0.3, seed=seed))
        inst = render_instance(sc)
        fits, _ = fit_instances(inst)
        for k, e in enumerate(sc.ellipses):
            full = raster_mask(e, sc.shape)
            hidden = 1 - (inst.pixels == k + 1).sum() / full.sum()
            iou = ellipse_iou(fits[k + 1], e, sc.shape)
            if hidden == 0:
                assert iou >= 0.98
            elif hidden >= 0.05:
                seen_occluded += 1
                assert iou < 0.95
    assert seen_occluded >= 3
