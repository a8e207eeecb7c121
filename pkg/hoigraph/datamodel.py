"""Scene graphs, appearance features, annotations, detections and vocabularies.

All types are immutable once built. Every file type is JSON and has a
``load_*`` / ``dump_*`` pair; writes go through :func:`atomic_write`.
"""

import hashlib
import json
import os
import pathlib
import tempfile
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import attr
import numpy
from loguru import logger as log

from hoigraph.errors import (
    ContractError,
    DomainError,
    ParseError,
    ValidationError,
    VocabularyIndexError,
)

SOFT_TOLERANCE = 1e-6
EMBEDDING_DIM = 300


def _to_tuple(value):
    return tuple(value) if value is not None else None


@attr.s(frozen=True)
class BoundingBox:
    """Corner-convention box, in pixels."""

    x_tl: float = attr.ib(converter=float)
    y_tl: float = attr.ib(converter=float)
    x_br: float = attr.ib(converter=float)
    y_br: float = attr.ib(converter=float)

    @property
    def width(self) -> float:
        """Box width."""
        return self.x_br - self.x_tl

    @property
    def height(self) -> float:
        """Box height."""
        return self.y_br - self.y_tl

    @property
    def area(self) -> float:
        """Box area (may be <= 0 for invalid boxes)."""
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        """Box center (x, y)."""
        return (self.x_tl + self.x_br) / 2.0, (self.y_tl + self.y_br) / 2.0

    def is_valid(self) -> bool:
        """Check box invariants."""
        return (
            self.x_br > self.x_tl
            and self.y_br > self.y_tl
            and min(self.x_tl, self.y_tl, self.x_br, self.y_br) >= 0
        )

    def to_list(self) -> List[float]:
        """Return [x1, y1, x2, y2]."""
        return [self.x_tl, self.y_tl, self.x_br, self.y_br]

    @classmethod
    def from_list(cls, values: Any, field: str = "box") -> "BoundingBox":
        """Parse [x1, y1, x2, y2]."""
        if not isinstance(values, (list, tuple)) or len(values) != 4:
            raise ParseError("expected a list of 4 coordinates", field=field)
        try:
            return cls(*values)
        except (TypeError, ValueError) as err:
            raise ParseError("coordinates must be numbers", field=field) from err


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes."""
    for box in (a, b):
        if box.width <= 0 or box.height <= 0:
            raise DomainError(f"degenerate box {box.to_list()}")

    iw = max(0.0, min(a.x_br, b.x_br) - max(a.x_tl, b.x_tl))
    ih = max(0.0, min(a.y_br, b.y_br) - max(a.y_tl, b.y_tl))
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union


@attr.s(frozen=True)
class SGNode:
    """Detected entity of a scene graph."""

    node_id: int = attr.ib(converter=int)
    category_id: int = attr.ib(converter=int)
    box: BoundingBox = attr.ib()
    score: float = attr.ib(converter=float)
    is_human: bool = attr.ib(default=False)


@attr.s(frozen=True)
class SGEdge:
    """Relation triple <subject, predicate, object>.

    ``soft_distribution`` is the full predicate distribution of the relation
    detector. ``None`` means one-hot at ``predicate_id``.
    """

    subject_id: int = attr.ib(converter=int)
    object_id: int = attr.ib(converter=int)
    predicate_id: int = attr.ib(converter=int)
    confidence: float = attr.ib(converter=float)
    soft_distribution: Optional[Tuple[float, ...]] = attr.ib(
        default=None, converter=_to_tuple
    )

    def distribution(self, num_predicates: int) -> numpy.ndarray:
        """Predicate distribution as a dense vector."""
        if self.soft_distribution is None:
            if not 0 <= self.predicate_id < num_predicates:
                raise VocabularyIndexError(f"unknown predicate id {self.predicate_id}")
            soft = numpy.zeros(num_predicates)
            soft[self.predicate_id] = 1.0
            return soft

        if len(self.soft_distribution) != num_predicates:
            raise ContractError(
                f"soft distribution has {len(self.soft_distribution)} entries, "
                f"vocabulary has {num_predicates} predicates"
            )
        return numpy.asarray(self.soft_distribution, dtype="float64")


@attr.s(frozen=True)
class SceneGraph:
    """Objects (nodes) and relations (edges) detected in one image."""

    image_id: str = attr.ib(converter=str)
    image_width: float = attr.ib(converter=float)
    image_height: float = attr.ib(converter=float)
    nodes: Tuple[SGNode, ...] = attr.ib(factory=tuple, converter=tuple)
    edges: Tuple[SGEdge, ...] = attr.ib(factory=tuple, converter=tuple)

    @property
    def node_ids(self) -> List[int]:
        """Node ids, ascending."""
        return sorted(node.node_id for node in self.nodes)

    def node(self, node_id: int) -> SGNode:
        """Get node by id."""
        for node in self.nodes:
            if node.node_id == node_id:
                return node
        raise KeyError(node_id)

    def humans(self) -> List[SGNode]:
        """Human nodes, by ascending id."""
        return sorted((n for n in self.nodes if n.is_human), key=lambda n: n.node_id)

    def filter_edges(self, threshold: float) -> "SceneGraph":
        """Drop relations whose confidence is below threshold."""
        return attr.evolve(
            self, edges=tuple(e for e in self.edges if e.confidence >= threshold)
        )


@attr.s(frozen=True, eq=False)
class FeatureBundle:
    """Per-node appearance vectors and detector scores."""

    image_id: str = attr.ib(converter=str)
    vectors: Mapping[int, numpy.ndarray] = attr.ib(factory=dict)
    scores: Mapping[int, float] = attr.ib(factory=dict)

    @property
    def dim(self) -> int:
        """Appearance dimension d_f (0 when empty)."""
        for vec in self.vectors.values():
            return int(vec.shape[0])
        return 0

    def matrix(self, node_ids: Sequence[int]) -> numpy.ndarray:
        """Stack the vectors of node_ids, in that order."""
        if not node_ids:
            return numpy.zeros((0, self.dim))
        return numpy.stack([self.vectors[i] for i in node_ids]).astype("float64")

    def check_covers(self, sg: SceneGraph):
        """Raise if a node of sg has no vector or score."""
        missing = [n.node_id for n in sg.nodes if n.node_id not in self.vectors]
        missing += [n.node_id for n in sg.nodes if n.node_id not in self.scores]
        if missing:
            raise ContractError(
                f"{sg.image_id}: features missing for nodes {sorted(set(missing))}"
            )


@attr.s(frozen=True)
class GroundTruthHOI:
    """Annotated <human, interaction, object> triple."""

    human_box: BoundingBox = attr.ib()
    object_box: Optional[BoundingBox] = attr.ib()
    object_category: Optional[int] = attr.ib()
    interaction_id: int = attr.ib(converter=int)


@attr.s(frozen=True)
class AnnotationSet:
    """Ground truth of one image."""

    image_id: str = attr.ib(converter=str)
    hois: Tuple[GroundTruthHOI, ...] = attr.ib(factory=tuple, converter=tuple)
    rare_classes: Optional[Tuple[int, ...]] = attr.ib(default=None, converter=_to_tuple)


@attr.s(frozen=True)
class HOIDetection:
    """Scored <human, interaction, object> triple."""

    human_box: BoundingBox = attr.ib()
    object_box: BoundingBox = attr.ib()
    object_category: int = attr.ib(converter=int)
    interaction_id: int = attr.ib(converter=int)
    score: float = attr.ib(converter=float)

    @score.validator
    def _check_score(self, attribute, value):
        if not 0.0 <= value <= 1.0:
            raise ContractError(f"detection score {value} outside [0, 1]")


def fallback_vector(word: str, dim: int = EMBEDDING_DIM) -> numpy.ndarray:
    """Deterministic unit-norm vector for a word missing from the embedding file."""
    digest = hashlib.sha256(word.encode("utf-8")).digest()
    rng = numpy.random.default_rng(int.from_bytes(digest[:8], "little"))
    vec = rng.standard_normal(dim)
    return vec / numpy.linalg.norm(vec)


@attr.s(eq=False)
class Vocabulary:
    """Object, predicate and interaction names plus word embeddings."""

    objects: Tuple[str, ...] = attr.ib(converter=tuple)
    predicates: Tuple[str, ...] = attr.ib(converter=tuple)
    interactions: Tuple[str, ...] = attr.ib(converter=tuple)
    person_index: int = attr.ib(default=0, converter=int)
    embeddings: Dict[str, numpy.ndarray] = attr.ib(factory=dict, repr=False)
    embeddings_path: Optional[str] = attr.ib(default=None)
    embedding_dim: int = attr.ib(default=EMBEDDING_DIM)
    interaction_objects: Optional[Dict[int, int]] = attr.ib(default=None)
    _cache: Dict[str, numpy.ndarray] = attr.ib(factory=dict, init=False, repr=False)

    def __attrs_post_init__(self):
        """Check invariants."""
        if not 0 <= self.person_index < len(self.objects):
            raise ContractError(f"person_index {self.person_index} is not a category")
        for word, vec in self.embeddings.items():
            if vec.shape != (self.embedding_dim,):
                raise ContractError(
                    f"embedding for '{word}' has shape {vec.shape}, "
                    f"expected ({self.embedding_dim},)"
                )

    @property
    def num_objects(self) -> int:
        """Number of object categories."""
        return len(self.objects)

    @property
    def num_predicates(self) -> int:
        """Number of predicates."""
        return len(self.predicates)

    @property
    def num_interactions(self) -> int:
        """Number of interaction classes."""
        return len(self.interactions)

    def word_vector(self, word: str) -> numpy.ndarray:
        """Stored embedding, or the hashed fallback."""
        vec = self.embeddings.get(word)
        if vec is None:
            return fallback_vector(word, self.embedding_dim)
        return vec

    def category_vector(self, category_id: int) -> numpy.ndarray:
        """Embedding of an object category."""
        if not 0 <= category_id < self.num_objects:
            raise VocabularyIndexError(f"unknown category id {category_id}")
        return self.category_matrix()[category_id]

    def category_matrix(self) -> numpy.ndarray:
        """(num_objects, dim) embedding table."""
        if "objects" not in self._cache:
            self._cache["objects"] = numpy.stack(
                [self.word_vector(w) for w in self.objects]
            )
        return self._cache["objects"]

    def predicate_matrix(self) -> numpy.ndarray:
        """(num_predicates, dim) embedding table."""
        if "predicates" not in self._cache:
            self._cache["predicates"] = numpy.stack(
                [self.word_vector(w) for w in self.predicates]
            )
        return self._cache["predicates"]

    def signature(self) -> Dict[str, Any]:
        """Names defining the model's input/output spaces."""
        return {
            "objects": list(self.objects),
            "predicates": list(self.predicates),
            "interactions": list(self.interactions),
            "person_index": self.person_index,
        }

    def to_dict(self) -> Dict[str, Any]:
        """vocabulary.json document."""
        doc = self.signature()
        if self.embeddings_path:
            doc["embeddings_path"] = self.embeddings_path
        if self.interaction_objects is not None:
            doc["interaction_objects"] = {
                str(k): v for k, v in sorted(self.interaction_objects.items())
            }
        return doc


@attr.s(frozen=True)
class Violation:
    """Broken invariant."""

    subject: str = attr.ib()
    rule: str = attr.ib()

    def __str__(self):
        """Human readable."""
        return f"{self.subject}: {self.rule}"


def validate_scene_graph(sg: SceneGraph) -> List[Violation]:
    """List every broken SceneGraph invariant (empty when well-formed)."""
    violations: List[Violation] = []

    seen = set()
    for node in sg.nodes:
        subject = f"node {node.node_id}"
        if node.node_id in seen:
            violations.append(Violation(subject, "duplicate node_id"))
        seen.add(node.node_id)

        box = node.box
        if not box.x_br > box.x_tl:
            violations.append(Violation(subject, "x_br must be greater than x_tl"))
        if not box.y_br > box.y_tl:
            violations.append(Violation(subject, "y_br must be greater than y_tl"))
        if min(box.to_list()) < 0:
            violations.append(Violation(subject, "box coordinates must be >= 0"))
        if not 0.0 <= node.score <= 1.0:
            violations.append(Violation(subject, "score must lie in [0, 1]"))

    for k, edge in enumerate(sg.edges):
        subject = f"edge {k} ({edge.subject_id}->{edge.object_id})"
        if edge.subject_id == edge.object_id:
            violations.append(Violation(subject, "subject and object must differ"))
        for role, node_id in (("subject", edge.subject_id), ("object", edge.object_id)):
            if node_id not in seen:
                violations.append(Violation(subject, f"{role} {node_id} is not a node"))
        if not 0.0 <= edge.confidence <= 1.0:
            violations.append(Violation(subject, "confidence must lie in [0, 1]"))

        soft = edge.soft_distribution
        if soft is None:
            continue
        if any(p < 0 for p in soft):
            violations.append(
                Violation(subject, "soft_distribution has negative entries")
            )
        if abs(sum(soft) - 1.0) > SOFT_TOLERANCE:
            violations.append(
                Violation(subject, f"soft_distribution sums to {sum(soft):.6g}, not 1")
            )
        if not 0 <= edge.predicate_id < len(soft):
            violations.append(
                Violation(subject, "predicate_id outside soft_distribution")
            )
        elif abs(soft[edge.predicate_id] - edge.confidence) > SOFT_TOLERANCE:
            violations.append(
                Violation(subject, "confidence differs from soft_distribution[predicate_id]")
            )

    return violations


# File I/O


def atomic_write(path, data: str):
    """Write text to path through a temporary file and a rename."""
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, doc: Any, indent: Optional[int] = None):
    """Serialize doc to path, atomically."""
    atomic_write(path, json.dumps(doc, indent=indent) + "\n")


def read_json(path) -> Any:
    """Load a JSON document, mapping decode failures to ParseError."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as err:
        raise ParseError(
            f"invalid JSON ({err.msg}, line {err.lineno})", field=str(path)
        ) from err


def _get(doc: Mapping, key: str, where: str, default: Any = ...) -> Any:
    if not isinstance(doc, Mapping):
        raise ParseError("expected an object", field=where)
    if key not in doc:
        if default is ...:
            raise ParseError("missing field", field=f"{where}.{key}")
        return default
    return doc[key]


def _number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError("expected a number", field=where)
    return value


def _list(value: Any, where: str) -> list:
    if not isinstance(value, list):
        raise ParseError("expected a list", field=where)
    return value


def _integer(value: Any, where: str) -> int:
    number = _number(value, where)
    if number != int(number):
        raise ParseError("expected an integer", field=where)
    return int(number)


def _names(doc: Mapping, key: str) -> List[str]:
    names = _list(_get(doc, key, "vocabulary"), f"vocabulary.{key}")
    for k, name in enumerate(names):
        if not isinstance(name, str):
            raise ParseError("expected a string", field=f"vocabulary.{key}[{k}]")
    return names


def parse_scene_graph(doc: Any, person_index: int = 0) -> SceneGraph:
    """Build a SceneGraph from its JSON document (no validation, no filtering)."""
    nodes = []
    for k, item in enumerate(
        _list(_get(doc, "nodes", "scene_graph"), "scene_graph.nodes")
    ):
        where = f"nodes[{k}]"
        category = int(_number(_get(item, "category", where), f"{where}.category"))
        nodes.append(
            SGNode(
                node_id=_number(_get(item, "id", where), f"{where}.id"),
                category_id=category,
                box=BoundingBox.from_list(_get(item, "box", where), field=f"{where}.box"),
                score=_number(_get(item, "score", where), f"{where}.score"),
                is_human=category == person_index,
            )
        )

    edges = []
    for k, item in enumerate(
        _list(_get(doc, "edges", "scene_graph"), "scene_graph.edges")
    ):
        where = f"edges[{k}]"
        soft = _get(item, "soft", where, default=None)
        if soft is not None:
            soft = [
                _number(p, f"{where}.soft[{i}]")
                for i, p in enumerate(_list(soft, f"{where}.soft"))
            ]
        edges.append(
            SGEdge(
                subject_id=_number(_get(item, "subject", where), f"{where}.subject"),
                object_id=_number(_get(item, "object", where), f"{where}.object"),
                predicate_id=_number(_get(item, "predicate", where), f"{where}.predicate"),
                confidence=_number(_get(item, "confidence", where), f"{where}.confidence"),
                soft_distribution=soft,
            )
        )

    return SceneGraph(
        image_id=_get(doc, "image_id", "scene_graph"),
        image_width=_number(_get(doc, "width", "scene_graph"), "scene_graph.width"),
        image_height=_number(_get(doc, "height", "scene_graph"), "scene_graph.height"),
        nodes=nodes,
        edges=edges,
    )


def scene_graph_to_dict(sg: SceneGraph) -> Dict[str, Any]:
    """scene_graph.json document."""
    edges = []
    for edge in sg.edges:
        item = {
            "subject": edge.subject_id,
            "object": edge.object_id,
            "predicate": edge.predicate_id,
            "confidence": edge.confidence,
        }
        if edge.soft_distribution is not None:
            item["soft"] = list(edge.soft_distribution)
        edges.append(item)

    return {
        "image_id": sg.image_id,
        "width": sg.image_width,
        "height": sg.image_height,
        "nodes": [
            {
                "id": node.node_id,
                "category": node.category_id,
                "box": node.box.to_list(),
                "score": node.score,
            }
            for node in sg.nodes
        ],
        "edges": edges,
    }


def load_scene_graph(path, threshold: float = 0.2, person_index: int = 0) -> SceneGraph:
    """Load, validate and threshold a scene graph file."""
    sg = parse_scene_graph(read_json(path), person_index=person_index)

    violations = validate_scene_graph(sg)
    if violations:
        raise ValidationError(f"invalid scene graph {path}", violations)

    filtered = sg.filter_edges(threshold)
    dropped = len(sg.edges) - len(filtered.edges)
    if dropped:
        log.debug(f"{sg.image_id}: dropped {dropped} relations below {threshold}")

    return filtered


def dump_scene_graph(sg: SceneGraph, path):
    """Write scene_graph.json."""
    write_json(path, scene_graph_to_dict(sg), indent=1)


def load_features(path) -> FeatureBundle:
    """Load features.json."""
    doc = read_json(path)
    vectors: Dict[int, numpy.ndarray] = {}
    scores: Dict[int, float] = {}
    dim = None
    for k, item in enumerate(_list(_get(doc, "nodes", "features"), "features.nodes")):
        where = f"nodes[{k}]"
        node_id = int(_number(_get(item, "id", where), f"{where}.id"))
        values = _list(_get(item, "vector", where), f"{where}.vector")
        vec = numpy.asarray(
            [_number(v, f"{where}.vector[{i}]") for i, v in enumerate(values)],
            dtype="float64",
        )
        if dim is not None and vec.shape[0] != dim:
            raise ParseError(
                f"dimension {vec.shape[0]} differs from {dim}", field=f"{where}.vector"
            )
        dim = vec.shape[0]
        vectors[node_id] = vec
        scores[node_id] = float(_number(_get(item, "score", where), f"{where}.score"))

    return FeatureBundle(
        image_id=_get(doc, "image_id", "features"), vectors=vectors, scores=scores
    )


def dump_features(features: FeatureBundle, path):
    """Write features.json."""
    doc = {
        "image_id": features.image_id,
        "dim": features.dim,
        "nodes": [
            {
                "id": node_id,
                "score": features.scores[node_id],
                "vector": features.vectors[node_id].tolist(),
            }
            for node_id in sorted(features.vectors)
        ],
    }
    write_json(path, doc)


def _parse_hoi(item: Mapping, where: str, with_score: bool):
    object_box = _get(item, "object_box", where, default=None)
    object_category = _get(item, "object_category", where, default=None)
    kwargs = {
        "human_box": BoundingBox.from_list(
            _get(item, "human_box", where), field=f"{where}.human_box"
        ),
        "object_box": (
            BoundingBox.from_list(object_box, field=f"{where}.object_box")
            if object_box is not None
            else None
        ),
        "object_category": (
            _integer(object_category, f"{where}.object_category")
            if object_category is not None
            else None
        ),
        "interaction_id": _number(_get(item, "interaction", where), f"{where}.interaction"),
    }
    if not with_score:
        return GroundTruthHOI(**kwargs)

    if kwargs["object_box"] is None or kwargs["object_category"] is None:
        raise ParseError("detections need an object box and category", field=where)
    return HOIDetection(score=_number(_get(item, "score", where), f"{where}.score"), **kwargs)


def _hoi_to_dict(hoi) -> Dict[str, Any]:
    item: Dict[str, Any] = {"human_box": hoi.human_box.to_list()}
    if hoi.object_box is not None:
        item["object_box"] = hoi.object_box.to_list()
    if hoi.object_category is not None:
        item["object_category"] = hoi.object_category
    item["interaction"] = hoi.interaction_id
    if isinstance(hoi, HOIDetection):
        item["score"] = hoi.score
    return item


def _documents(doc: Any) -> List[Any]:
    """A file holds either one image document or a list of them."""
    return doc if isinstance(doc, list) else [doc]


def parse_annotations(doc: Any) -> List[AnnotationSet]:
    """Build AnnotationSets from an annotations.json document."""
    out = []
    for d, image_doc in enumerate(_documents(doc)):
        where = f"annotations[{d}]"
        hois = [
            _parse_hoi(item, f"{where}.hois[{k}]", with_score=False)
            for k, item in enumerate(
                _list(_get(image_doc, "hois", where), f"{where}.hois")
            )
        ]
        out.append(
            AnnotationSet(
                image_id=_get(image_doc, "image_id", where),
                hois=hois,
                rare_classes=_get(image_doc, "rare_classes", where, default=None),
            )
        )
    return out


def load_annotations(path) -> List[AnnotationSet]:
    """Load annotations.json (one image or a list of images)."""
    return parse_annotations(read_json(path))


def annotations_to_dict(annotations: AnnotationSet) -> Dict[str, Any]:
    """annotations.json document for one image."""
    doc: Dict[str, Any] = {
        "image_id": annotations.image_id,
        "hois": [_hoi_to_dict(h) for h in annotations.hois],
    }
    if annotations.rare_classes is not None:
        doc["rare_classes"] = list(annotations.rare_classes)
    return doc


def dump_annotations(annotations: Iterable[AnnotationSet], path):
    """Write annotations.json; a single image is written as one object."""
    docs = [annotations_to_dict(a) for a in annotations]
    write_json(path, docs[0] if len(docs) == 1 else docs, indent=1)


def load_detections(path) -> Dict[str, List[HOIDetection]]:
    """Load detections.json as image_id -> detections."""
    out: Dict[str, List[HOIDetection]] = {}
    for d, image_doc in enumerate(_documents(read_json(path))):
        where = f"detections[{d}]"
        out.setdefault(str(_get(image_doc, "image_id", where)), []).extend(
            _parse_hoi(item, f"{where}.hois[{k}]", with_score=True)
            for k, item in enumerate(
                _list(_get(image_doc, "hois", where), f"{where}.hois")
            )
        )
    return out


def dump_detections(detections: Mapping[str, Sequence[HOIDetection]], path):
    """Write detections.json, images sorted by id."""
    docs = [
        {"image_id": image_id, "hois": [_hoi_to_dict(d) for d in detections[image_id]]}
        for image_id in sorted(detections)
    ]
    write_json(path, docs, indent=1)


def load_embeddings(path, dim: Optional[int] = None) -> Dict[str, numpy.ndarray]:
    """Read a plain-text word vector file: `word v1 ... vD` per line."""
    table: Dict[str, numpy.ndarray] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            tokens = line.rstrip().split(" ")
            if not tokens or not tokens[0]:
                continue
            try:
                vec = numpy.asarray([float(t) for t in tokens[1:]], dtype="float64")
            except ValueError as err:
                raise ParseError("non numeric value", field=f"{path}:{lineno}") from err
            if dim is None:
                dim = vec.shape[0]
            if vec.shape[0] != dim:
                raise ParseError(
                    f"expected {dim} values, got {vec.shape[0]}", field=f"{path}:{lineno}"
                )
            table[tokens[0]] = vec
    return table


def load_vocabulary(path, embedding_dim: int = EMBEDDING_DIM) -> Vocabulary:
    """Load vocabulary.json and its embedding table, if any."""
    doc = read_json(path)
    embeddings_path = _get(doc, "embeddings_path", "vocabulary", default=None)
    embeddings: Dict[str, numpy.ndarray] = {}
    if embeddings_path:
        resolved = pathlib.Path(path).parent / embeddings_path
        if resolved.exists():
            embeddings = load_embeddings(resolved, dim=embedding_dim)
        else:
            log.warning(f"embedding file {resolved} not found, using hashed vectors")

    interaction_objects = _get(doc, "interaction_objects", "vocabulary", default=None)
    if interaction_objects is not None:
        if not isinstance(interaction_objects, Mapping):
            raise ParseError("expected an object", field="vocabulary.interaction_objects")
        try:
            interaction_objects = {int(k): int(v) for k, v in interaction_objects.items()}
        except (TypeError, ValueError) as err:
            raise ParseError(
                "expected integer ids", field="vocabulary.interaction_objects"
            ) from err

    return Vocabulary(
        objects=_names(doc, "objects"),
        predicates=_names(doc, "predicates"),
        interactions=_names(doc, "interactions"),
        person_index=_integer(
            _get(doc, "person_index", "vocabulary"), "vocabulary.person_index"
        ),
        embeddings=embeddings,
        embeddings_path=embeddings_path,
        embedding_dim=embedding_dim,
        interaction_objects=interaction_objects,
    )


def dump_vocabulary(vocab: Vocabulary, path):
    """Write vocabulary.json."""
    write_json(path, vocab.to_dict(), indent=1)
