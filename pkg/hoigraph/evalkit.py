"""Role mAP: two-condition matching, all-point AP, Default and Known-Object settings."""

from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import attr
import numpy

from hoigraph.datamodel import AnnotationSet, GroundTruthHOI, HOIDetection, iou
from hoigraph.errors import ContractError

SETTINGS = ("default", "known")

GroundTruth = Union[AnnotationSet, Sequence[GroundTruthHOI]]


@attr.s(frozen=True)
class MatchResult:
    """Greedy matching of one image and class.

    `order` lists detection indices by descending score (ties keep input
    order); `tp` and `matched` follow that order.
    """

    order: Tuple[int, ...] = attr.ib(converter=tuple)
    tp: Tuple[bool, ...] = attr.ib(converter=tuple)
    matched: Tuple[Optional[int], ...] = attr.ib(converter=tuple)
    covered: Tuple[bool, ...] = attr.ib(converter=tuple)


def _overlap(det: HOIDetection, gt: GroundTruthHOI, threshold: float) -> Optional[float]:
    """min(iou_h, iou_o) when both pass threshold; object-less ground truth tests the human only."""
    iou_h = iou(det.human_box, gt.human_box)
    if iou_h <= threshold:
        return None
    if gt.object_box is None:
        return iou_h
    iou_o = iou(det.object_box, gt.object_box)
    if iou_o <= threshold:
        return None
    return min(iou_h, iou_o)


def match_detections(
    dets: Sequence[HOIDetection],
    gts: Sequence[GroundTruthHOI],
    iou_threshold: float = 0.5,
) -> MatchResult:
    """A detection is a true positive when it claims a still unmatched GT of its class."""
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    covered = [False] * len(gts)
    tp, matched = [], []

    for i in order:
        det = dets[i]
        best, best_overlap = None, -1.0
        for g, gt in enumerate(gts):
            if covered[g] or gt.interaction_id != det.interaction_id:
                continue
            overlap = _overlap(det, gt, iou_threshold)
            if overlap is not None and overlap > best_overlap:
                best, best_overlap = g, overlap

        if best is not None:
            covered[best] = True
        tp.append(best is not None)
        matched.append(best)

    return MatchResult(order, tp, matched, covered)


def average_precision(flags: Sequence[bool], num_gt: int) -> Optional[float]:
    """All-point interpolated AP of a ranked TP/FP list.

    None when there is neither ground truth nor detection (class excluded
    from means), 0 when only detections exist.
    """
    if num_gt < 0:
        raise ContractError("num_gt must be >= 0")
    if num_gt == 0:
        return None if len(flags) == 0 else 0.0
    if len(flags) == 0:
        return 0.0

    hits = numpy.asarray(flags, dtype=bool)
    tp = numpy.cumsum(hits)
    fp = numpy.cumsum(~hits)
    rec = tp / num_gt
    prec = tp / (tp + fp)

    mrec = numpy.concatenate(([0.0], rec, [1.0]))
    mpre = numpy.concatenate(([0.0], prec, [0.0]))

    # precision envelope
    for i in range(mpre.size - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])

    i = numpy.where(mrec[1:] != mrec[:-1])[0]
    return float(numpy.sum((mrec[i + 1] - mrec[i]) * mpre[i + 1]))


def _mean(values: Iterable[Optional[float]]) -> Optional[float]:
    kept = [v for v in values if v is not None]
    return float(numpy.mean(kept)) if kept else None


@attr.s(frozen=True)
class EvalReport:
    """Per-class AP and Full / Rare / Non-Rare means of one setting."""

    setting: str = attr.ib()
    ap: Dict[int, Optional[float]] = attr.ib()
    num_gt: Dict[int, int] = attr.ib()
    rare_ids: Tuple[int, ...] = attr.ib(converter=lambda v: tuple(sorted(set(v))))

    @property
    def full(self) -> Optional[float]:
        """Mean AP over every scored class."""
        return _mean(self.ap.values())

    @property
    def rare(self) -> Optional[float]:
        """Mean AP over rare classes."""
        return _mean(v for c, v in self.ap.items() if c in self.rare_ids)

    @property
    def non_rare(self) -> Optional[float]:
        """Mean AP over the remaining classes."""
        return _mean(v for c, v in self.ap.items() if c not in self.rare_ids)

    def to_dict(self) -> Dict:
        """JSON report."""
        return {
            "setting": self.setting,
            "map": {"full": self.full, "rare": self.rare, "non_rare": self.non_rare},
            "ap": {str(c): v for c, v in sorted(self.ap.items())},
            "num_gt": {str(c): n for c, n in sorted(self.num_gt.items())},
            "rare_ids": list(self.rare_ids),
        }


def _hois(value: GroundTruth) -> Sequence[GroundTruthHOI]:
    return value.hois if isinstance(value, AnnotationSet) else value


def _class_objects(
    gts: Mapping[str, Sequence[GroundTruthHOI]],
    num_classes: int,
    interaction_objects: Optional[Mapping[int, int]],
) -> Dict[int, Set[int]]:
    """Object categories that define each class in the Known-Object setting."""
    cats: Dict[int, Set[int]] = {c: set() for c in range(num_classes)}
    if interaction_objects is not None:
        for c, cat in interaction_objects.items():
            if 0 <= int(c) < num_classes:
                cats[int(c)].add(int(cat))
        return cats

    for hois in gts.values():
        for gt in hois:
            if gt.object_category is not None:
                cats[gt.interaction_id].add(gt.object_category)
    return cats


def map_role(
    dets_by_image: Mapping[str, Sequence[HOIDetection]],
    gts_by_image: Mapping[str, GroundTruth],
    setting: str = "default",
    rare_ids: Iterable[int] = (),
    num_classes: Optional[int] = None,
    interaction_objects: Optional[Mapping[int, int]] = None,
    iou_threshold: float = 0.5,
) -> EvalReport:
    """Role mAP over a set of images.

    Default scores every image for every class. Known-Object restricts the
    pool of a class to images whose ground truth holds one of the class's
    object categories (image level). A class without object category keeps
    every image.
    """
    if setting not in SETTINGS:
        raise ContractError(f"unknown setting '{setting}', expected one of {SETTINGS}")

    gts = {image_id: list(_hois(value)) for image_id, value in gts_by_image.items()}
    seen = [gt.interaction_id for hois in gts.values() for gt in hois]
    seen += [d.interaction_id for dets in dets_by_image.values() for d in dets]
    if num_classes is None:
        num_classes = max(seen, default=-1) + 1

    rare_ids = set(rare_ids)
    unknown = sorted(
        {c for c in seen if not 0 <= c < num_classes}
        | {c for c in rare_ids if not 0 <= c < num_classes}
    )
    if unknown:
        raise ContractError(f"class ids {unknown} outside {num_classes} classes")

    images = sorted(set(gts) | set(dets_by_image))
    present = {
        image_id: {gt.object_category for gt in gts.get(image_id, [])}
        for image_id in images
    }
    objects = _class_objects(gts, num_classes, interaction_objects)

    ap: Dict[int, Optional[float]] = {}
    num_gt: Dict[int, int] = {}
    for c in range(num_classes):
        pool = images
        if setting == "known" and objects[c]:
            pool = [i for i in images if present[i] & objects[c]]

        ranked: List[Tuple[float, str, int, bool]] = []
        count = 0
        for image_id in pool:
            class_gts = [gt for gt in gts.get(image_id, []) if gt.interaction_id == c]
            class_dets = [
                d for d in dets_by_image.get(image_id, []) if d.interaction_id == c
            ]
            count += len(class_gts)
            result = match_detections(class_dets, class_gts, iou_threshold)
            for i, hit in zip(result.order, result.tp):
                ranked.append((-class_dets[i].score, image_id, i, hit))

        ranked.sort(key=lambda r: r[:3])
        ap[c] = average_precision([r[3] for r in ranked], count)
        num_gt[c] = count

    return EvalReport(setting, ap, num_gt, rare_ids)


def evaluate_all(
    dets_by_image: Mapping[str, Sequence[HOIDetection]],
    gts_by_image: Mapping[str, GroundTruth],
    rare_ids: Iterable[int] = (),
    num_classes: Optional[int] = None,
    interaction_objects: Optional[Mapping[int, int]] = None,
    iou_threshold: float = 0.5,
) -> Dict[str, EvalReport]:
    """Reports of both settings."""
    rare_ids = list(rare_ids)
    return {
        setting: map_role(
            dets_by_image,
            gts_by_image,
            setting,
            rare_ids,
            num_classes,
            interaction_objects,
            iou_threshold,
        )
        for setting in SETTINGS
    }
