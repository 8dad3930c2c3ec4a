import numpy as np
import pytest

from srdet.detector import DetectorConfig, detect
from srdet.geometry import CoordinateFrame, Point
from srdet.synthdet import (
    GenerationError,
    OracleBackend,
    RecallModel,
    Scene,
    SceneObject,
    SceneParams,
    area_ramp_score,
    generate_scene,
    load_scene,
    oracle_detect,
    render_scene,
    save_scene,
    scene_to_ground_truth,
)


def single_object_scene(box, class_id=3, frame_w=64, frame_h=48):
    obj = SceneObject(
        x1=float(box[0]),
        y1=float(box[1]),
        x2=float(box[2]),
        y2=float(box[3]),
        class_id=class_id,
        color=(200, 60, 60),
    )
    return Scene(
        objects=(obj,),
        frame_w=frame_w,
        frame_h=frame_h,
        background=(20, 20, 20),
        rng_seed=0,
    )


def identity_frame():
    return CoordinateFrame(offset=Point(0.0, 0.0), scale=1.0)


class TestSceneParams:
    def test_frame_minimum(self):
        with pytest.raises(ValueError):
            SceneParams(frame_w=16)

    def test_ranges_validated(self):
        with pytest.raises(ValueError):
            SceneParams(n_objects=(5, 2))
        with pytest.raises(ValueError):
            SceneParams(area_range=(0, 10))
        with pytest.raises(ValueError):
            SceneParams(classes=())


class TestGenerateScene:
    def test_zero_objects(self):
        scene, img = generate_scene(7, SceneParams(n_objects=(0, 0)))
        assert scene.objects == ()
        assert np.all(img.pixels == scene.background)

    def test_deterministic(self):
        params = SceneParams(n_objects=(5, 10))
        scene_a, img_a = generate_scene(123, params)
        scene_b, img_b = generate_scene(123, params)
        assert scene_a == scene_b
        assert img_a == img_b

    def test_different_seeds_differ(self):
        params = SceneParams(n_objects=(5, 10))
        scene_a, _ = generate_scene(1, params)
        scene_b, _ = generate_scene(2, params)
        assert scene_a != scene_b

    def test_rendered_extent_matches_boxes(self):
        params = SceneParams(n_objects=(5, 5), area_range=(16.0, 64.0))
        scene, img = generate_scene(11, params)
        colors = [obj.color for obj in scene.objects]
        assert len(set(colors)) == len(colors), "seed must give unique colors"
        for obj in scene.objects:
            mask = np.all(img.pixels == obj.color, axis=2)
            ys, xs = np.nonzero(mask)
            assert (xs.min(), ys.min()) == (obj.x1, obj.y1)
            assert (xs.max() + 1, ys.max() + 1) == (obj.x2, obj.y2)

    def test_objects_inside_frame_and_disjoint(self):
        params = SceneParams(n_objects=(10, 15), min_gap=1)
        for seed in range(5):
            scene, _ = generate_scene(seed, params)
            for obj in scene.objects:
                assert 0 <= obj.x1 < obj.x2 <= scene.frame_w
                assert 0 <= obj.y1 < obj.y2 <= scene.frame_h
            objs = scene.objects
            for i in range(len(objs)):
                for j in range(i + 1, len(objs)):
                    a, b = objs[i], objs[j]
                    overlap_x = min(a.x2, b.x2) - max(a.x1, b.x1)
                    overlap_y = min(a.y2, b.y2) - max(a.y1, b.y1)
                    assert overlap_x <= 0 or overlap_y <= 0

    def test_impossible_packing_raises(self):
        params = SceneParams(
            n_objects=(6, 6),
            area_range=(900.0, 1000.0),
            frame_w=32,
            frame_h=32,
            max_attempts=50,
        )
        with pytest.raises(GenerationError):
            generate_scene(3, params)

    def test_class_mix(self):
        params = SceneParams(n_objects=(12, 15), classes=(3, 8))
        scene, _ = generate_scene(21, params)
        assert {obj.class_id for obj in scene.objects} <= {3, 8}


class TestAreaRampScore:
    def test_monotone_and_bounded(self):
        fn = area_ramp_score(64.0)
        areas = np.linspace(1, 5000, 200)
        scores = [fn(a) for a in areas]
        assert all(0.3 <= s <= 0.99 for s in scores)
        assert all(b >= a for a, b in zip(scores, scores[1:]))

    def test_detectable_objects_pass_default_min_score(self):
        fn = area_ramp_score(64.0)
        assert fn(64.0) >= 0.3


class TestOracleDetect:
    def test_boundary_area_detected(self):
        scene = single_object_scene((10, 10, 18, 18))  # area 64
        model = RecallModel(min_area=64.0)
        result = oracle_detect(render_scene(scene), identity_frame(), scene, model)
        assert len(result) == 1
        det = result.items[0]
        assert (det.x1, det.y1, det.x2, det.y2) == (10, 10, 18, 18)
        assert det.class_id == 3

    def test_small_object_missed_then_seen_in_window(self):
        # area 32 = min_area/2: invisible at scale 1, apparent 128 at Z=2
        scene = single_object_scene((10, 10, 14, 18), frame_w=48, frame_h=36)
        model = RecallModel(min_area=64.0)
        img = render_scene(scene)
        base = oracle_detect(img, identity_frame(), scene, model)
        assert len(base) == 0
        window_frame = CoordinateFrame(offset=Point(0.0, 0.0), scale=2.0)
        window_img = img  # 48x36 window over scene units [0,24)x[0,18)
        window = oracle_detect(window_img, window_frame, scene, model)
        assert len(window) == 1
        det = window.items[0]
        assert (det.x1, det.y1, det.x2, det.y2) == (20, 20, 28, 36)

    def test_object_outside_window_absent(self):
        scene = single_object_scene((40, 30, 50, 40), frame_w=64, frame_h=48)
        model = RecallModel(min_area=1.0)
        frame = CoordinateFrame(offset=Point(0.0, 0.0), scale=2.0)
        img = render_scene(scene)  # 64x48 window covers scene [0,32)x[0,24)
        assert len(oracle_detect(img, frame, scene, model)) == 0

    def test_partial_visibility_fraction(self):
        # object 8x8 at (28,0): window covers x<32 -> half visible
        scene = single_object_scene((28, 0, 36, 8), frame_w=64, frame_h=48)
        img = render_scene(scene)
        frame = CoordinateFrame(offset=Point(0.0, 0.0), scale=2.0)
        # apparent = 64 * 4 * 0.5 = 128
        assert len(oracle_detect(img, frame, scene, RecallModel(min_area=128.0))) == 1
        assert len(oracle_detect(img, frame, scene, RecallModel(min_area=129.0))) == 0

    def test_completeness_with_min_area_one(self):
        scene, img = generate_scene(31, SceneParams(n_objects=(8, 12)))
        result = oracle_detect(img, identity_frame(), scene, RecallModel(min_area=1.0))
        assert len(result) == len(scene.objects)
        boxes = {(d.x1, d.y1, d.x2, d.y2) for d in result}
        assert boxes == {(o.x1, o.y1, o.x2, o.y2) for o in scene.objects}

    def test_monotone_recall_in_zoom(self):
        scene, img = generate_scene(33, SceneParams(n_objects=(8, 12)))
        model = RecallModel(min_area=80.0)
        # windows covering the same scene region (24x16 units) at Z=2 and Z=3
        from srdet.imagebuf import ImageBuffer

        win2 = ImageBuffer.filled(24 * 2, 16 * 2)
        win3 = ImageBuffer.filled(24 * 3, 16 * 3)
        frame2 = CoordinateFrame(offset=Point(8.0, 8.0), scale=2.0)
        frame3 = CoordinateFrame(offset=Point(8.0, 8.0), scale=3.0)
        seen2 = {
            (d.x1 / 2 + 8, d.y1 / 2 + 8)
            for d in oracle_detect(win2, frame2, scene, model)
        }
        seen3 = {
            (d.x1 / 3 + 8, d.y1 / 3 + 8)
            for d in oracle_detect(win3, frame3, scene, model)
        }
        assert seen2 <= seen3

    def test_deterministic(self):
        scene, img = generate_scene(35, SceneParams())
        model = RecallModel(min_area=32.0, jitter=0.5)
        a = oracle_detect(img, identity_frame(), scene, model)
        b = oracle_detect(img, identity_frame(), scene, model)
        assert a.items == b.items

    def test_jitter_perturbs_within_bounds(self):
        scene = single_object_scene((10, 10, 20, 20))
        img = render_scene(scene)
        model = RecallModel(min_area=1.0, jitter=0.75)
        plain = oracle_detect(img, identity_frame(), scene, RecallModel(min_area=1.0))
        jittered = oracle_detect(img, identity_frame(), scene, model)
        p, j = plain.items[0], jittered.items[0]
        assert (p.x1, p.y1, p.x2, p.y2) != (j.x1, j.y1, j.x2, j.y2)
        for a, b in zip((p.x1, p.y1, p.x2, p.y2), (j.x1, j.y1, j.x2, j.y2)):
            assert abs(a - b) <= 0.75

    def test_jitter_clamped_to_frame(self):
        scene = single_object_scene((0, 0, 10, 10))
        img = render_scene(scene)
        model = RecallModel(min_area=1.0, jitter=3.0)
        det = oracle_detect(img, identity_frame(), scene, model).items[0]
        assert det.x1 >= 0 and det.y1 >= 0

    def test_scores_follow_score_fn(self):
        scene = single_object_scene((0, 0, 16, 16))  # area 256
        img = render_scene(scene)
        model = RecallModel(min_area=64.0)
        det = oracle_detect(img, identity_frame(), scene, model).items[0]
        assert det.score == pytest.approx(0.3 + 0.69 * 256 / 512)


class TestOracleBackend:
    def test_through_detect_with_filtering(self):
        scene, img = generate_scene(41, SceneParams(n_objects=(6, 10)))
        model = RecallModel(min_area=1.0)
        backend = OracleBackend(scene, model)
        result = detect(backend, img, DetectorConfig(min_score=0.3), frame=None)
        assert len(result) == len(scene.objects)
        scores = [d.score for d in result]
        assert scores == sorted(scores, reverse=True)

    def test_max_detections_respected(self):
        scene, img = generate_scene(43, SceneParams(n_objects=(10, 15)))
        backend = OracleBackend(scene, RecallModel(min_area=1.0))
        result = detect(backend, img, DetectorConfig(max_detections=3))
        assert len(result) == 3


class TestSceneSerialization:
    def test_ground_truth_schema(self):
        scene, _ = generate_scene(51, SceneParams(n_objects=(3, 3)))
        gt = scene_to_ground_truth(scene, image_id=9, file_name="00009.png")
        assert gt["images"][0] == {
            "id": 9,
            "width": scene.frame_w,
            "height": scene.frame_h,
            "file_name": "00009.png",
        }
        assert len(gt["annotations"]) == 3
        for ann, obj in zip(gt["annotations"], scene.objects):
            assert ann["image_id"] == 9
            assert ann["category_id"] == obj.class_id
            x, y, w, h = ann["bbox"]
            assert (x, y, x + w, y + h) == (obj.x1, obj.y1, obj.x2, obj.y2)
        ids = [a["id"] for a in gt["annotations"]]
        assert len(set(ids)) == len(ids)

    def test_save_load_round_trip(self, tmp_path):
        scene, _ = generate_scene(53, SceneParams(n_objects=(4, 8)))
        path = tmp_path / "scene.json"
        save_scene(scene, path)
        assert load_scene(path) == scene
