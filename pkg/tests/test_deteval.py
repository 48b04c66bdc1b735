import json

import numpy as np
import pytest

from annodiff.dataset import parse_dataset
from annodiff.deteval import (
    AREA_RANGES,
    IOU_THRESHOLDS,
    RECALL_POINTS,
    Detection,
    DetectionSet,
    EvalParams,
    annotations_as_detections,
    cross_table,
    detections_from_results,
    evaluate,
)
from annodiff.errors import EvalError, ParseError, SchemaError

from conftest import make_ann, make_coco, make_images, rect_ring
from oracles import ap_oracle, match_labels_oracle


def gt_of(anns, n_images=1, size=100, categories=None):
    return parse_dataset(
        make_coco(make_images(n_images, size, size), anns, categories=categories)
    )


def det(det_id, image_id, score, bbox, category_id=1):
    return Detection(
        id=det_id, image_id=image_id, category_id=category_id,
        score=score, bbox=tuple(float(v) for v in bbox),
    )


def crowd_ann(ann_id, image_id, bbox, size=100, category_id=1):
    return make_ann(
        ann_id, image_id, {"counts": [size * size], "size": [size, size]},
        category_id=category_id, iscrowd=1, bbox=bbox, area=float(bbox[2] * bbox[3]),
    )


def box_iou_crowd(d, g, crowd):
    """Reference IoU used by the labeled-match oracle."""
    dx, dy, dw, dh = d
    gx, gy, gw, gh = g
    iw = max(0.0, min(dx + dw, gx + gw) - max(dx, gx))
    ih = max(0.0, min(dy + dh, gy + gh) - max(dy, gy))
    inter = iw * ih
    union = dw * dh if crowd else dw * dh + gw * gh - inter
    return inter / union if union > 0 else 0.0


class TestConstants:
    def test_threshold_grid(self):
        assert len(IOU_THRESHOLDS) == 10
        assert IOU_THRESHOLDS[0] == 0.5
        assert IOU_THRESHOLDS[1] == 0.55  # bit-exact linspace value
        assert IOU_THRESHOLDS[-1] == 0.95

    def test_recall_grid(self):
        assert len(RECALL_POINTS) == 101
        assert RECALL_POINTS[0] == 0.0 and RECALL_POINTS[-1] == 1.0

    def test_area_ranges(self):
        names = [r[0] for r in AREA_RANGES]
        assert names == ["all", "small", "medium", "large"]
        assert AREA_RANGES[1][1:] == (0, 32**2)
        assert AREA_RANGES[2][1:] == (32**2, 96**2)


class TestParams:
    def test_defaults(self):
        p = EvalParams()
        assert p.task == "bbox" and p.max_detections == 100 and p.area_source == "auto"

    @pytest.mark.parametrize(
        "kw",
        [
            {"task": "keypoints"},
            {"iou_thresholds": (0.9, 0.5)},
            {"iou_thresholds": ()},
            {"recall_points": (0.5, 0.5)},
            {"max_detections": 0},
            {"area_ranges": (("small", 0, 10),)},
            {"area_source": "guess"},
        ],
    )
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            EvalParams(**kw)


class TestSelfEval:
    @pytest.mark.parametrize("task", ["bbox", "segm"])
    def test_tiny_fixture_scores_one(self, tiny_a, task):
        r = evaluate(annotations_as_detections(tiny_a), tiny_a, EvalParams(task=task))
        assert r.map == 1.0  # exact, not approximate
        assert r.map_50 == 1.0
        assert all(v in (None, 1.0) for v in (r.map_small, r.map_medium, r.map_large))
        assert all(v == 1.0 for v in r.per_category.values())

    @pytest.mark.parametrize("task", ["bbox", "segm"])
    def test_synthetic_fixture_scores_one(self, synthetic_a, task):
        r = evaluate(
            annotations_as_detections(synthetic_a), synthetic_a, EvalParams(task=task)
        )
        assert r.map == 1.0

    def test_unused_category_is_excluded_not_zero(self):
        cats = [{"id": c, "name": f"c{c}", "supercategory": "x"} for c in (1, 3)]
        gt = gt_of([make_ann(1, 1, rect_ring(0, 0, 10, 10))], categories=cats)
        r = evaluate(annotations_as_detections(gt), gt)
        assert r.map == 1.0
        assert r.per_category == {1: 1.0, 3: None}


class TestKnownValues:
    def test_iou_055_matches_exactly_two_thresholds(self):
        gt = gt_of([make_ann(1, 1, rect_ring(0, 0, 10, 10))])
        dets = DetectionSet((det(1, 1, 0.9, [0, 0, 10, 5.5]),))
        r = evaluate(dets, gt)
        assert r.map == 0.2  # AP 1.0 at 0.50 and 0.55, 0 at the other eight
        assert r.map_50 == 1.0

    def test_fp_ranked_above_tp_halves_ap(self):
        gt = gt_of([make_ann(1, 1, rect_ring(0, 0, 10, 10))])
        dets = DetectionSet(
            (
                det(1, 1, 0.9, [50, 50, 10, 10]),  # miss, ranked first
                det(2, 1, 0.8, [0, 0, 10, 10]),  # hit
            )
        )
        r = evaluate(dets, gt)
        assert r.map == 0.5
        want = ap_oracle([(1, 0.9, 0.0), (2, 0.8, 1.0)], 1, RECALL_POINTS)
        assert r.map == want

    def test_fp_ranked_below_tp_is_free(self):
        # precision is sampled at achieved recall points only, so a trailing
        # false positive cannot lower any sampled value
        gt = gt_of([make_ann(1, 1, rect_ring(0, 0, 10, 10))])
        dets = DetectionSet(
            (
                det(1, 1, 0.9, [0, 0, 10, 10]),
                det(2, 1, 0.8, [50, 50, 10, 10]),
            )
        )
        assert evaluate(dets, gt).map == 1.0

    def test_score_tie_broken_by_ascending_id(self):
        gt = gt_of([make_ann(1, 1, rect_ring(0, 0, 10, 10))])
        dets = DetectionSet(
            (
                det(1, 1, 0.7, [0, 0, 10, 6.2]),  # IoU 0.62, considered first
                det(2, 1, 0.7, [0, 0, 10, 9.6]),  # IoU ~0.96
            )
        )
        r = evaluate(dets, gt)
        # t <= 0.6: det 1 claims the gt, det 2 is the fp -> AP 1.0 (three
        # thresholds); t >= 0.65: det 1 misses, det 2 hits -> AP 0.5 (seven)
        assert r.map == pytest.approx((3 * 1.0 + 7 * 0.5) / 10, abs=1e-12)

    def test_max_detections_truncates_before_matching(self):
        gt = gt_of([make_ann(1, 1, rect_ring(0, 0, 10, 10))])
        dets = DetectionSet(
            (
                det(1, 1, 0.9, [50, 50, 10, 10]),  # kept: highest score
                det(2, 1, 0.8, [0, 0, 10, 10]),  # dropped by max_detections=1
            )
        )
        r = evaluate(dets, gt, EvalParams(max_detections=1))
        assert r.map == 0.0
        assert evaluate(dets, gt).map == 0.5


class TestCrowds:
    def test_crowd_absorbs_stray_detection(self):
        base = [make_ann(1, 1, rect_ring(30, 30, 10, 10))]
        dets = DetectionSet(
            (
                det(1, 1, 0.9, [0, 0, 10, 10]),  # stray, ranked first
                det(2, 1, 0.8, [30, 30, 10, 10]),
            )
        )
        without = evaluate(dets, gt_of(base)).map
        with_crowd = evaluate(dets, gt_of(base + [crowd_ann(2, 1, [0, 0, 10, 10])])).map
        assert without == 0.5
        assert with_crowd == 1.0  # the stray is ignored, not a false positive

    def test_crowd_never_decreases_map(self):
        rng = np.random.default_rng(99)
        for _ in range(15):
            anns, dets = [], []
            for i in range(int(rng.integers(1, 4))):
                x, y = int(rng.integers(0, 60)), int(rng.integers(0, 60))
                w, h = int(rng.integers(5, 20)), int(rng.integers(5, 20))
                anns.append(make_ann(i + 1, 1, rect_ring(x, y, w, h)))
            for j in range(int(rng.integers(1, 5))):
                x, y = int(rng.integers(0, 60)), int(rng.integers(0, 60))
                w, h = int(rng.integers(5, 20)), int(rng.integers(5, 20))
                dets.append(det(j + 1, 1, float((j + 1) * 0.11), [x, y, w, h]))
            ds = DetectionSet(tuple(dets))
            base = evaluate(ds, gt_of(anns)).map
            cx, cy = int(rng.integers(0, 50)), int(rng.integers(0, 50))
            cw, ch = int(rng.integers(10, 40)), int(rng.integers(10, 40))
            grown = evaluate(ds, gt_of(anns + [crowd_ann(50, 1, [cx, cy, cw, ch])])).map
            assert grown >= base - 1e-12

    def test_crowd_only_category_is_undefined(self):
        gt = gt_of([crowd_ann(1, 1, [0, 0, 10, 10])])
        r = evaluate(DetectionSet((det(1, 1, 0.9, [0, 0, 10, 10]),)), gt)
        assert r.map is None
        assert r.per_category == {1: None}


class TestAreaStrata:
    def test_boundary_area_counts_in_both_strata(self):
        # stored area exactly 32*32 sits in 'small' [0, 1024] and in
        # 'medium' [1024, 9216]: inclusive protocol bounds on both sides
        gt = gt_of([make_ann(1, 1, rect_ring(0, 0, 32, 32), area=1024)])
        r = evaluate(annotations_as_detections(gt), gt)
        assert r.map_small == 1.0
        assert r.map_medium == 1.0
        assert r.map_large is None

    def test_out_of_range_gt_is_ignored_per_stratum(self):
        gt = gt_of([make_ann(1, 1, rect_ring(0, 0, 10, 10))])  # area 100: small
        r = evaluate(annotations_as_detections(gt), gt)
        assert r.map_small == 1.0
        assert r.map_medium is None and r.map_large is None

    def test_area_source_bbox_overrides_stored(self):
        ann = make_ann(1, 1, rect_ring(0, 0, 10, 10), area=5000.0)  # lies: medium
        gt = gt_of([ann])
        stored = evaluate(annotations_as_detections(gt), gt, EvalParams(area_source="stored"))
        bboxed = evaluate(annotations_as_detections(gt), gt, EvalParams(area_source="bbox"))
        assert stored.map_medium == 1.0 and stored.map_small is None
        assert bboxed.map_small == 1.0 and bboxed.map_medium is None

    def test_matched_det_outside_stratum_is_ignored_not_fp(self):
        # large gt + its det, plus one small gt + det: the large pair must
        # not pollute the small stratum
        anns = [
            make_ann(1, 1, rect_ring(0, 0, 10, 10)),  # small
            make_ann(2, 1, rect_ring(20, 20, 70, 70)),  # medium (4900)
        ]
        gt = gt_of(anns)
        r = evaluate(annotations_as_detections(gt), gt)
        assert r.map_small == 1.0 and r.map_medium == 1.0


class TestOracleEquivalence:
    def test_random_scenes_match_protocol_transcription(self):
        rng = np.random.default_rng(4242)
        for trial in range(40):
            n_gt = int(rng.integers(1, 5))
            n_dt = int(rng.integers(1, 7))
            gts, crowd_flags = [], []
            for i in range(n_gt):
                x, y = int(rng.integers(0, 70)), int(rng.integers(0, 70))
                w, h = int(rng.integers(4, 26)), int(rng.integers(4, 26))
                is_crowd = bool(rng.random() < 0.25 and i > 0)
                if is_crowd:
                    gts.append(crowd_ann(i + 1, 1, [x, y, w, h]))
                else:
                    gts.append(make_ann(i + 1, 1, rect_ring(x, y, w, h)))
                crowd_flags.append(is_crowd)
            if all(crowd_flags):
                continue
            scores = rng.choice(np.arange(1, 40) / 40.0, size=n_dt, replace=False)
            dets = []
            for j in range(n_dt):
                base = int(rng.integers(0, n_gt))
                bx, by, bw, bh = gts[base]["bbox"]
                dx = float(rng.integers(-4, 5))
                dy = float(rng.integers(-4, 5))
                dets.append(det(j + 1, 1, float(scores[j]), [bx + dx, by + dy, bw, bh]))
            ds = DetectionSet(tuple(dets))
            gt = gt_of(gts)
            got = evaluate(ds, gt)

            det_rows = [(d.id, d.score, 0.0) for d in dets]
            gt_rows = [(c, c, 0.0) for c in crowd_flags]  # 'all': ignore==crowd
            bboxes = {d.id: d.bbox for d in dets}

            def iou_fn(det_id, g):
                return box_iou_crowd(bboxes[det_id], tuple(gts[g]["bbox"]), crowd_flags[g])

            n_positive = sum(1 for c in crowd_flags if not c)
            aps = [
                ap_oracle(
                    match_labels_oracle(det_rows, gt_rows, iou_fn, t),
                    n_positive,
                    RECALL_POINTS,
                )
                for t in IOU_THRESHOLDS
            ]
            want = float(np.mean(aps))
            assert got.map == pytest.approx(want, abs=1e-12), f"trial {trial}"

    def test_two_image_scene_matches_oracle(self):
        # distinct scores across images keep the global ranking unambiguous
        gts = {
            1: [make_ann(1, 1, rect_ring(0, 0, 20, 20))],
            2: [make_ann(2, 2, rect_ring(10, 10, 16, 16))],
        }
        gt = gt_of(gts[1] + gts[2], n_images=2)
        dets = [
            det(1, 1, 0.9, [0, 0, 20, 18]),  # IoU 0.9
            det(2, 1, 0.6, [40, 40, 10, 10]),  # miss in image 1
            det(3, 2, 0.8, [10, 10, 16, 15]),  # IoU 15/16
        ]
        got = evaluate(DetectionSet(tuple(dets)), gt)
        bboxes = {d.id: d.bbox for d in dets}
        all_gts = gts[1] + gts[2]
        by_image = {1: [0], 2: [1]}
        aps = []
        for t in IOU_THRESHOLDS:
            labeled = []
            for img, gt_idx in by_image.items():
                rows = [(d.id, d.score, 0.0) for d in dets if d.image_id == img]
                gt_rows = [(False, False, 0.0) for _ in gt_idx]

                def iou_fn(det_id, g, _img=img, _idx=gt_idx):
                    return box_iou_crowd(
                        bboxes[det_id], tuple(all_gts[_idx[g]]["bbox"]), False
                    )

                labeled.extend(match_labels_oracle(rows, gt_rows, iou_fn, t))
            aps.append(ap_oracle(labeled, 2, RECALL_POINTS))
        assert got.map == pytest.approx(float(np.mean(aps)), abs=1e-12)


class TestCrossTable:
    def test_symmetric_for_shifted_twins(self, tiny_a, tiny_b):
        table = cross_table(tiny_a, tiny_b)
        assert set(table) == {"bbox"}
        fwd, rev = table["bbox"]["a_vs_b"], table["bbox"]["b_vs_a"]
        assert fwd.map is not None
        # note: not expected to be exactly equal in general (crowds and
        # instance counts differ per side); check both directions scored
        assert rev.map is not None

    def test_shifted_singletons_score_identically_both_ways(self):
        a_anns = [make_ann(i + 1, i + 1, rect_ring(10, 10, 20, 20)) for i in range(3)]
        b_anns = [make_ann(i + 1, i + 1, rect_ring(11, 10, 20, 20)) for i in range(3)]
        a = gt_of(a_anns, n_images=3)
        b = gt_of(b_anns, n_images=3)
        table = cross_table(a, b, tasks=("bbox", "segm"))
        assert set(table) == {"bbox", "segm"}
        for task in table:
            assert table[task]["a_vs_b"].map == table[task]["b_vs_a"].map

    def test_self_cross_table_is_perfect(self, synthetic_a):
        table = cross_table(synthetic_a, synthetic_a)
        assert table["bbox"]["a_vs_b"].map == 1.0
        assert table["bbox"]["b_vs_a"].map == 1.0


class TestResultsFormat:
    def test_parse_assigns_positional_ids(self):
        raw = json.dumps(
            [
                {"image_id": 1, "category_id": 1, "score": 0.5, "bbox": [0, 0, 5, 5]},
                {"image_id": 1, "category_id": 1, "score": 0.9, "bbox": [1, 1, 5, 5]},
            ]
        )
        ds = detections_from_results(raw)
        assert [d.id for d in ds.detections] == [1, 2]
        assert ds.detections[0].score == 0.5

    def test_bbox_derived_from_segmentation(self):
        raw = json.dumps(
            [{"image_id": 1, "category_id": 1, "score": 0.7,
              "segmentation": [[2, 3, 12, 3, 12, 9, 2, 9]]}]
        )
        d = detections_from_results(raw).detections[0]
        assert d.bbox == (2.0, 3.0, 10.0, 6.0)

    def test_invalid_json_is_parse_error(self):
        with pytest.raises(ParseError):
            detections_from_results("[{")

    @pytest.mark.parametrize(
        "entry,msg",
        [
            ({"image_id": 1, "category_id": 1, "bbox": [0, 0, 1, 1]}, "score"),
            ({"image_id": 1, "category_id": 1, "score": 1.5, "bbox": [0, 0, 1, 1]}, "outside"),
            ({"image_id": 1, "category_id": 1, "score": 0.5}, "bbox or a segmentation"),
            ({"image_id": "a", "category_id": 1, "score": 0.5, "bbox": [0, 0, 1, 1]}, "image_id"),
        ],
    )
    def test_schema_errors(self, entry, msg):
        with pytest.raises(SchemaError, match=msg):
            detections_from_results(json.dumps([entry]))

    def test_top_level_must_be_array(self):
        with pytest.raises(SchemaError, match="array"):
            detections_from_results("{}")


class TestEvalErrors:
    def test_unknown_category(self):
        gt = gt_of([make_ann(1, 1, rect_ring(0, 0, 5, 5))])
        with pytest.raises(EvalError, match="category 9"):
            evaluate(DetectionSet((det(1, 1, 0.5, [0, 0, 5, 5], category_id=9),)), gt)

    def test_unknown_image(self):
        gt = gt_of([make_ann(1, 1, rect_ring(0, 0, 5, 5))])
        with pytest.raises(EvalError, match="image 7"):
            evaluate(DetectionSet((det(1, 7, 0.5, [0, 0, 5, 5]),)), gt)

    def test_segm_task_needs_segmentation(self):
        gt = gt_of([make_ann(1, 1, rect_ring(0, 0, 5, 5))])
        with pytest.raises(EvalError, match="no segmentation"):
            evaluate(
                DetectionSet((det(1, 1, 0.5, [0, 0, 5, 5]),)), gt, EvalParams(task="segm")
            )


class TestResultJson:
    def test_key_names_and_order(self, tiny_a):
        r = evaluate(annotations_as_detections(tiny_a), tiny_a)
        doc = r.to_json()
        assert list(doc) == [
            "task", "mAP", "mAP@50", "mAP Large", "mAP Medium", "mAP Small",
            "per_category",
        ]
        assert doc["task"] == "bbox"
        assert doc["mAP"] == 1.0
        assert doc["per_category"] == {"1": 1.0, "2": 1.0}

    def test_annotations_as_detections_drops_crowds(self, tiny_a):
        ds = annotations_as_detections(tiny_a)
        assert [d.id for d in ds.detections] == [1, 2, 3, 4]
        assert all(d.score == 1.0 for d in ds.detections)
