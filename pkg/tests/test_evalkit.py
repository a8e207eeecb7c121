"""Test matching, average precision and role mAP."""

import attr
import numpy
import pytest

from hoigraph.datamodel import AnnotationSet, BoundingBox, GroundTruthHOI, HOIDetection
from hoigraph.errors import ContractError
from hoigraph.evalkit import average_precision, evaluate_all, map_role, match_detections

HUMAN = BoundingBox(0, 0, 100, 200)
CUP = BoundingBox(80, 90, 120, 130)
BIKE = BoundingBox(150, 100, 300, 200)


def _det(score, interaction=0, human=HUMAN, obj=CUP, category=1):
    return HOIDetection(human, obj, category, interaction, score)


def _gt(interaction=0, human=HUMAN, obj=CUP, category=1):
    return GroundTruthHOI(human, obj, category, interaction)


def _envelope_ap(flags, num_gt):
    """Area under the interpolated precision curve, point by point."""
    flags = list(flags)
    precision = [sum(flags[: k + 1]) / (k + 1) for k in range(len(flags))]
    return sum(max(precision[k:]) / num_gt for k, hit in enumerate(flags) if hit)


def test_average_precision():
    """Should match hand computed values."""
    assert average_precision([True, True], 2) == pytest.approx(1.0)
    assert average_precision([False, False], 2) == 0.0
    assert average_precision([True, False, True], 2) == pytest.approx(0.8333, abs=1e-4)
    assert average_precision([True], 2) == pytest.approx(0.5)
    assert average_precision([], 3) == 0.0
    assert average_precision([True], 0) == 0.0
    assert average_precision([], 0) is None

    with pytest.raises(ContractError):
        average_precision([], -1)


def test_average_precision_oracle():
    """Should agree with a point by point computation."""
    rng = numpy.random.default_rng(5)
    for _ in range(50):
        flags = (rng.random(int(rng.integers(1, 20))) < 0.5).tolist()
        num_gt = sum(flags) + int(rng.integers(0, 3))
        if num_gt == 0:
            continue
        assert average_precision(flags, num_gt) == pytest.approx(_envelope_ap(flags, num_gt))


def test_match_detections():
    """Should give each ground truth to one detection, best score first."""
    result = match_detections([_det(0.4), _det(0.9)], [_gt()])
    assert result.order == (1, 0)
    assert result.tp == (True, False)
    assert result.matched == (0, None)
    assert result.covered == (True,)

    # the object box misses
    shifted = _det(0.9, obj=BoundingBox(200, 200, 240, 240))
    assert match_detections([shifted], [_gt()]).tp == (False,)
    # other class
    assert match_detections([_det(0.9, interaction=1)], [_gt()]).tp == (False,)


def test_match_object_less_ground_truth():
    """Should only test the human box."""
    gt = GroundTruthHOI(HUMAN, None, None, 0)
    anywhere = _det(0.9, obj=BoundingBox(500, 500, 520, 520))
    assert match_detections([anywhere], [gt]).tp == (True,)


def test_match_ties():
    """Should keep input order for equal scores and pick the first best ground truth."""
    result = match_detections([_det(0.5), _det(0.5)], [_gt(), _gt()])
    assert result.order == (0, 1)
    assert result.matched == (0, 1)

    near = BoundingBox(0, 0, 100, 190)
    result = match_detections([_det(0.5)], [_gt(human=near), _gt()])
    assert result.matched == (1,)


def test_map_role():
    """Should rank detections across images."""
    gts = {"a": [_gt()], "b": [_gt(interaction=1, obj=BIKE, category=2)]}
    dets = {
        "a": [_det(0.8)],
        "b": [_det(0.9), _det(0.7, interaction=1, obj=BIKE, category=2)],
    }
    report = map_role(dets, gts, rare_ids=[1])
    assert report.ap == {0: pytest.approx(0.5), 1: pytest.approx(1.0)}
    assert report.num_gt == {0: 1, 1: 1}
    assert report.full == pytest.approx(0.75)
    assert report.rare == pytest.approx(1.0)
    assert report.non_rare == pytest.approx(0.5)

    doc = report.to_dict()
    assert doc["map"]["full"] == pytest.approx(0.75)
    assert doc["rare_ids"] == [1]


def test_map_role_known_object():
    """Should drop images without the class's object from the class pool."""
    gts = {"a": [_gt()], "b": [_gt(interaction=1, obj=BIKE, category=2)]}
    dets = {"a": [_det(0.8)], "b": [_det(0.9)]}

    assert map_role(dets, gts, "default").ap[0] == pytest.approx(0.5)
    known = map_role(dets, gts, "known", interaction_objects={0: 1, 1: 2})
    assert known.ap[0] == pytest.approx(1.0)

    # derived from the ground truth when no mapping is given
    assert map_role(dets, gts, "known").ap[0] == pytest.approx(1.0)

    reports = evaluate_all(dets, gts, num_classes=3)
    assert set(reports) == {"default", "known"}
    assert reports["default"].ap[2] is None


def test_map_role_is_invariant_to_score_scale():
    """Should only depend on the ranking of the scores."""
    rng = numpy.random.default_rng(3)
    gts, dets = {}, {}
    for k in range(6):
        image_id = f"img{k}"
        gts[image_id] = AnnotationSet(image_id, [_gt(interaction=k % 2)])
        dets[image_id] = [
            _det(float(rng.uniform(0.1, 1.0)), interaction=int(rng.integers(0, 2)))
            for _ in range(3)
        ]
    halved = {
        image_id: [attr.evolve(d, score=d.score / 2) for d in values]
        for image_id, values in dets.items()
    }
    assert map_role(dets, gts).ap == map_role(halved, gts).ap


def test_map_role_errors():
    """Should reject unknown settings and class ids."""
    gts = {"a": [_gt(interaction=4)]}
    with pytest.raises(ContractError):
        map_role({}, gts, num_classes=3)
    with pytest.raises(ContractError):
        map_role({}, {"a": [_gt()]}, rare_ids=[9], num_classes=3)
    with pytest.raises(ContractError):
        map_role({}, {"a": [_gt()]}, setting="unknown")


def test_map_role_oracle():
    """Should agree with a direct ranking over random exact-or-disjoint boxes."""
    rng = numpy.random.default_rng(11)
    elsewhere = BoundingBox(400, 300, 500, 500)
    for _ in range(100):
        num_classes = int(rng.integers(1, 4))
        gts, dets = {}, {}
        for k in range(int(rng.integers(1, 5))):
            image_id = f"img{k}"
            gts[image_id] = [
                _gt(int(rng.integers(0, num_classes)), obj=[CUP, BIKE][rng.integers(0, 2)])
                for _ in range(int(rng.integers(0, 4)))
            ]
            dets[image_id] = [
                _det(
                    float(rng.random()),
                    int(rng.integers(0, num_classes)),
                    human=[HUMAN, elsewhere][int(rng.random() < 0.2)],
                    obj=[CUP, BIKE][rng.integers(0, 2)],
                )
                for _ in range(int(rng.integers(0, 5)))
            ]

        expected = {}
        for c in range(num_classes):
            ranked = sorted(
                ((d, image_id) for image_id, ds in dets.items() for d in ds),
                key=lambda pair: -pair[0].score,
            )
            free = {i: [g for g in gts[i] if g.interaction_id == c] for i in gts}
            num_gt = sum(len(v) for v in free.values())
            flags = []
            for det, image_id in ranked:
                if det.interaction_id != c:
                    continue
                hit = next(
                    (
                        g
                        for g in free[image_id]
                        if g.human_box == det.human_box and g.object_box == det.object_box
                    ),
                    None,
                )
                if hit is not None:
                    free[image_id].remove(hit)
                flags.append(hit is not None)
            if num_gt == 0:
                expected[c] = None if not flags else 0.0
            else:
                expected[c] = pytest.approx(_envelope_ap(flags, num_gt))

        report = map_role(dets, gts, num_classes=num_classes)
        assert report.ap == expected
