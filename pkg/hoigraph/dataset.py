"""Dataset directories, human-object pair enumeration and pair labels."""

import pathlib
from typing import List, Optional, Sequence, Tuple

import attr
import numpy
from loguru import logger as log

from hoigraph.datamodel import (
    AnnotationSet,
    FeatureBundle,
    SceneGraph,
    Vocabulary,
    iou,
    load_annotations,
    load_embeddings,
    load_features,
    load_scene_graph,
    load_vocabulary,
    read_json,
)
from hoigraph.errors import ConfigError, ContractError, DataError, ParseError

Pair = Tuple[int, int]


@attr.s(frozen=True, eq=False)
class Sample:
    """Inputs (and optional ground truth) of one image."""

    graph: SceneGraph = attr.ib()
    features: FeatureBundle = attr.ib()
    annotations: Optional[AnnotationSet] = attr.ib(default=None)

    @property
    def image_id(self) -> str:
        """Image id."""
        return self.graph.image_id


@attr.s(frozen=True, eq=False)
class Dataset:
    """Vocabulary plus an ordered list of samples."""

    vocab: Vocabulary = attr.ib()
    samples: Tuple[Sample, ...] = attr.ib(converter=tuple)

    def __len__(self):
        """Number of images."""
        return len(self.samples)

    @property
    def feature_dim(self) -> int:
        """Appearance dimension shared by all samples."""
        for sample in self.samples:
            if sample.features.dim:
                return sample.features.dim
        return 0

    def split(self, test_scenes: int) -> Tuple["Dataset", "Dataset"]:
        """The last `test_scenes` samples form the test split."""
        if test_scenes < 0:
            raise ConfigError("data.test_scenes must be >= 0")
        cut = max(len(self.samples) - test_scenes, 0)
        return (
            Dataset(self.vocab, self.samples[:cut]),
            Dataset(self.vocab, self.samples[cut:]),
        )

    def select(self, split: str, test_scenes: int) -> "Dataset":
        """Pick `train`, `test` or `all`."""
        if split == "all":
            return self
        train, test = self.split(test_scenes)
        if split == "train":
            return train
        if split == "test":
            return test
        raise ConfigError(f"unknown split '{split}'")


def load_dataset(
    path,
    relation_threshold: float = 0.2,
    embeddings_path: Optional[str] = None,
) -> Dataset:
    """Load a dataset directory written by `synth-gen` (or laid out the same way)."""
    root = pathlib.Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"{root} has no manifest.json")

    manifest = read_json(manifest_path)
    vocab = load_vocabulary(root / manifest.get("vocabulary", "vocabulary.json"))
    if embeddings_path:
        vocab = attr.evolve(
            vocab,
            embeddings=load_embeddings(embeddings_path, dim=vocab.embedding_dim),
            embeddings_path=str(embeddings_path),
        )

    samples = []
    for k, entry in enumerate(manifest.get("scenes", [])):
        if "path" not in entry:
            raise ParseError("missing field", field=f"manifest.scenes[{k}].path")
        scene_dir = root / entry["path"]
        graph = load_scene_graph(
            scene_dir / "scene_graph.json",
            threshold=relation_threshold,
            person_index=vocab.person_index,
        )
        features = load_features(scene_dir / "features.json")
        features.check_covers(graph)

        annotations = None
        if (scene_dir / "annotations.json").exists():
            annotations = load_annotations(scene_dir / "annotations.json")[0]

        samples.append(Sample(graph, features, annotations))

    dims = {s.features.dim for s in samples if s.features.dim}
    if len(dims) > 1:
        raise DataError(f"feature dimensions differ across scenes: {sorted(dims)}")

    log.debug(f"loaded {len(samples)} scenes from {root}")
    return Dataset(vocab, samples)


def enumerate_pairs(
    sg: SceneGraph,
    features: FeatureBundle,
    human_threshold: float = 0.6,
    object_threshold: float = 0.3,
) -> List[Pair]:
    """All (human, other node) pairs whose detector scores pass the thresholds.

    A second human may play the object role. Pairs are ordered by human id,
    then object id.
    """
    nodes = sorted(sg.nodes, key=lambda n: n.node_id)
    humans = [
        n.node_id
        for n in nodes
        if n.is_human and features.scores[n.node_id] >= human_threshold
    ]
    objects = [n.node_id for n in nodes if features.scores[n.node_id] >= object_threshold]
    return [(h, o) for h in humans for o in objects if o != h]


def pair_labels(
    sg: SceneGraph,
    annotations: Optional[AnnotationSet],
    pairs: Sequence[Pair],
    num_classes: int,
    iou_threshold: float = 0.5,
) -> numpy.ndarray:
    """Multi-hot targets (len(pairs), num_classes) matched from box-level ground truth.

    A pair takes class c when a ground truth triple of class c overlaps its
    human box and its object box by more than `iou_threshold`. Object-less
    triples only test the human box.
    """
    labels = numpy.zeros((len(pairs), num_classes))
    if annotations is None:
        return labels

    boxes = {n.node_id: n.box for n in sg.nodes}
    for gt in annotations.hois:
        if not 0 <= gt.interaction_id < num_classes:
            raise ContractError(
                f"{annotations.image_id}: interaction {gt.interaction_id} "
                f"outside {num_classes} classes"
            )
        for p, (h, o) in enumerate(pairs):
            if iou(boxes[h], gt.human_box) <= iou_threshold:
                continue
            if gt.object_box is not None and iou(boxes[o], gt.object_box) <= iou_threshold:
                continue
            labels[p, gt.interaction_id] = 1.0

    return labels
