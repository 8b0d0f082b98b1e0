import math

import numpy as np
import pytest

from ellipseg.geometry import Ellipse, raster_mask, scale
from ellipseg.labelgen import (BODY, CORE, EDGE, HEAD, LabelImage, Scene, blob_search, ellipses_from_categorical,
                               extract_gt_ellipses, fit_region, head_region, render_all, render_binary,
                               render_bodypart, render_categorical, render_instance, resolve_head_side)
from ellipseg.scenegen import SceneSpec, generate_scene

from oracles import ellipse_cap_area


def scene(*ellipses, width=100, height=80):
    return Scene(width, height, list(ellipses))


def test_label_image_validation():
    with pytest.raises(ValueError):
        LabelImage(np.array([[0, 2]]), "binary")
    with pytest.raises(ValueError):
        LabelImage(np.array([[0, 3]]), "categorical3")
    with pytest.raises(ValueError):
        LabelImage(np.zeros(4), "instance")
    with pytest.raises(ValueError):
        LabelImage(np.zeros((2, 2)), "rgb")
    li = LabelImage(np.zeros((2, 2)), "instance")
    with pytest.raises(ValueError):
        li.pixels[0, 0] = 1


def test_scene_validation():
    with pytest.raises(ValueError):
        scene(Ellipse(10, 10, 3, 2, 0, depth=1), Ellipse(30, 10, 3, 2, 0, depth=1))
    with pytest.raises(ValueError):
        scene(Ellipse(120, 10, 3, 2, 0))
    s = scene(Ellipse(10, 10, 3, 2, 0, depth=5), Ellipse(30, 10, 3, 2, 0, depth=2))
    assert [e.depth for e in s.ellipses] == [2, 5]


def test_binary_examples():
    assert render_binary(scene()).pixels.sum() == 0
    r = 12
    n = render_binary(scene(Ellipse(50, 40, r, r, 0))).pixels.sum()
    assert abs(n - math.pi * r * r) <= 2 * math.pi * r
    e1, e2 = Ellipse(20, 20, 10, 5, 0.3), Ellipse(70, 50, 8, 6, 1.0, depth=1)
    both = render_binary(scene(e1, e2)).pixels.sum()
    assert both == raster_mask(e1, (80, 100)).sum() + raster_mask(e2, (80, 100)).sum()


def test_instance_depth_order():
    far = Ellipse(40, 40, 15, 8, 0, depth=0)
    near = Ellipse(50, 40, 15, 8, 0, depth=1)
    inst = render_instance(scene(far, near)).pixels
    overlap = raster_mask(far, (80, 100)) & raster_mask(near, (80, 100))
    assert overlap.any() and np.all(inst[overlap] == 2)


def test_instance_full_occlusion_and_disjoint():
    hidden = Ellipse(40, 40, 5, 3, 0, depth=0)
    cover = Ellipse(40, 40, 20, 10, 0, depth=1)
    assert set(np.unique(render_instance(scene(hidden, cover)).pixels)) == {0, 2}
    e1, e2 = Ellipse(20, 20, 10, 5, 0.3), Ellipse(70, 50, 8, 6, 1.0, depth=1)
    inst = render_instance(scene(e1, e2)).pixels
    assert np.array_equal(inst == 1, raster_mask(e1, (80, 100)))
    assert np.array_equal(inst == 2, raster_mask(e2, (80, 100)))


def test_categorical_core_ratio():
    cat = render_categorical(scene(Ellipse(50, 40, 30, 20, 0.4)), 0.5).pixels
    ratio = (cat == CORE).sum() / (cat > 0).sum()
    assert ratio == pytest.approx(0.25, abs=0.03)


def test_categorical_limit_and_bounds():
    cat = render_categorical(scene(Ellipse(50, 40, 30, 20, 0.4)), 0.999).pixels
    assert (cat == EDGE).sum() <= 0.02 * (cat > 0).sum()
    with pytest.raises(ValueError):
        render_categorical(scene(), 1.0)


def test_categorical_crossing_keeps_cores():
    # bodies cross, cores stay apart
    s = scene(Ellipse(40, 40, 30, 10, 0.6, depth=0), Ellipse(60, 40, 30, 10, 2.54, depth=1))
    cat = render_categorical(s, 0.5)
    assert len(blob_search(cat, CORE)) == 2


def test_bodypart_head_side():
    e = Ellipse(50, 40, 30, 12, 0.0, head_sign=-1)
    bp = render_bodypart(scene(e), 0.3).pixels
    cols = np.nonzero(bp == HEAD)[1]
    assert cols.max() < 50
    assert (bp == BODY).any()
    with pytest.raises(ValueError):
        render_bodypart(scene(Ellipse(50, 40, 30, 12, 0.0)))


def test_bodypart_head_area():
    a, b = 30.0, 15.0
    # rotated so the cut does not run along a pixel column
    e = Ellipse(50, 40, a, b, 0.3, head_sign=1)
    head = head_region(e, (80, 100), 0.3).sum()
    assert head == pytest.approx(ellipse_cap_area(a, b, 1 - 2 * 0.3), rel=0.03)


def test_collapse_consistency():
    sc, _ = generate_scene(SceneSpec(n_animals=5, max_overlap=0.3, seed=4))
    r = render_all(sc)
    b = r["binary"].pixels
    assert np.array_equal(r["categorical"].collapse().pixels, b)
    assert np.array_equal(r["bodypart"].collapse().pixels, b)
    assert np.array_equal(r["instance"].foreground(), b == 1)


def test_region_fit_recovers_ellipse():
    e = Ellipse(60, 50, 18, 8, 1.1)
    rows, cols = np.nonzero(raster_mask(e, (100, 120)))
    f = fit_region(np.column_stack([cols, rows]))
    assert f.a == pytest.approx(18, rel=0.02)
    assert f.b == pytest.approx(8, rel=0.02)
    assert math.hypot(f.cx - 60, f.cy - 50) < 1


def test_extract_gt_round_trip():
    es = [Ellipse(25, 25, 15, 8, 0.2, 1, 0), Ellipse(70, 50, 12, 9, 2.0, -1, 1)]
    s = scene(*es)
    out = extract_gt_ellipses(render_instance(s), s.ellipses)
    assert len(out) == 2
    for got, want in zip(out, es):
        assert got.a == pytest.approx(want.a, rel=0.02)
        assert got.b == pytest.approx(want.b, rel=0.02)
        assert math.hypot(got.cx - want.cx, got.cy - want.cy) <= 1
        assert got.head_sign == want.head_sign and got.depth == want.depth


def test_extract_gt_under_occlusion():
    # a long, nearly straight occluder hides about 40% of the far animal
    far = Ellipse(40, 40, 20, 10, 0, depth=0)
    occluder = Ellipse(75, 40, 60, 75 - (40 + 0.1577 * 20), math.pi / 2, depth=1)
    inst = render_instance(scene(far, occluder))
    visible = inst.pixels == 1
    hidden = 1 - visible.sum() / raster_mask(far, (80, 100)).sum()
    assert hidden == pytest.approx(0.4, abs=0.02)
    e = extract_gt_ellipses(inst, [far, occluder])[0]
    assert e.a < far.a - 1
    m = raster_mask(e, (80, 100))
    assert (m & visible).sum() / (m | visible).sum() >= 0.8


def test_extract_gt_skips_tiny_and_hidden():
    px = np.zeros((20, 20), int)
    px[2:4, 2:4] = 1  # 4 pixels, too few to fit
    px[8:16, 6:18] = 3
    out = extract_gt_ellipses(LabelImage(px, "instance"))
    assert len(out) == 1
    with pytest.raises(ValueError):
        extract_gt_ellipses(LabelImage(px.clip(0, 1), "binary"))


def test_blob_search_examples():
    px = np.zeros((8, 8), int)
    px[1:3, 1:3] = CORE
    px[5:7, 5:7] = CORE
    assert len(blob_search(LabelImage(px, "categorical3"), CORE)) == 2
    diag = np.zeros((4, 4), int)
    diag[0, 0] = diag[1, 1] = 2
    assert len(blob_search(LabelImage(diag, "categorical3"), CORE)) == 2
    assert blob_search(LabelImage(np.zeros((4, 4)), "categorical3"), CORE) == []


def test_categorical_round_trip():
    e = Ellipse(50, 40, 28, 14, 0.7)
    found = ellipses_from_categorical(render_categorical(scene(e), 0.5), 0.5)
    assert len(found) == 1
    assert found[0].a == pytest.approx(28, rel=0.05)
    assert found[0].b == pytest.approx(14, rel=0.05)


def test_categorical_small_blob_and_count():
    px = np.zeros((10, 10), int)
    px[4, 4:7] = CORE
    assert ellipses_from_categorical(LabelImage(px, "categorical3"), 0.5, min_pixels=10) == []
    es = [Ellipse(20 + 40 * (k % 3), 20 + 40 * (k // 3), 14, 8, 0.3 * k, depth=k) for k in range(5)]
    cat = render_categorical(Scene(130, 90, es), 0.5)
    assert len(ellipses_from_categorical(cat, 0.5)) == 5


def test_resolve_head_side():
    e = Ellipse(50, 40, 30, 12, 0.0)
    truth = Ellipse(50, 40, 30, 12, 0.0, head_sign=-1)
    got = resolve_head_side(e, head_region(truth, (80, 100), 0.3))
    assert got.head_sign == -1
    assert resolve_head_side(e, np.zeros((80, 100), bool)).head_sign == 0
    assert resolve_head_side(scale(e, 0.9), head_region(truth.flipped(), (80, 100))).head_sign == 1
