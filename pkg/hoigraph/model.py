"""ParameterStore: every trainable module of one run, and checkpoints."""

import os
import pathlib
import tempfile
from typing import Any, Dict, List, Optional, Tuple

import attr
import numpy
import torch
from loguru import logger as log
from torch import nn

from hoigraph.config import DataConfig, RunConfig
from hoigraph.datamodel import HOIDetection, Vocabulary
from hoigraph.dataset import Sample, enumerate_pairs, pair_labels
from hoigraph.errors import ContractError, DataError
from hoigraph.hoihead import (
    MessageHead,
    VisualHead,
    combine,
    pair_prior,
    predict_message,
    predict_visual,
)
from hoigraph.pairfeat import (
    MaskProjection,
    build_semantic_masks,
    project_masks,
    stack_masks,
)
from hoigraph.relmp import MessagePassing, RefinedFeatures, run_passing
from hoigraph.sgembed import SceneGraphEmbedding, embed_scene_graph

DTYPES = {"float64": torch.float64, "float32": torch.float32}


@attr.s(frozen=True, eq=False)
class ScenePairs:
    """A sample with its enumerated pairs and multi-hot targets."""

    sample: Sample = attr.ib()
    pairs: List[Tuple[int, int]] = attr.ib()
    labels: numpy.ndarray = attr.ib()

    @property
    def image_id(self) -> str:
        """Image id."""
        return self.sample.image_id


@attr.s(frozen=True, eq=False)
class PairScores:
    """Branch outputs of every pair of a scene, rows follow `pairs`."""

    pairs: List[Tuple[int, int]] = attr.ib()
    prior: torch.Tensor = attr.ib()
    p_v: torch.Tensor = attr.ib()
    p_m: torch.Tensor = attr.ib()
    p: torch.Tensor = attr.ib()


class ParameterStore(nn.Module):
    """All weights of a run. Switched-off modules are not created at all.

    embedding  scene graph embedding (ablation.sge)
    passing    message passing (passing.enabled)
    masks      semantic mask projection
    visual     visual branch head
    message    message branch head (any of sge, cov or passing on)
    """

    def __init__(self, config: RunConfig, vocab: Vocabulary):
        """Initialize from the run seed; identical seeds give identical weights."""
        super().__init__()
        self.config = config
        self.vocab = vocab

        model = config.model
        num_classes = vocab.num_interactions
        word_dim = vocab.embedding_dim
        self.use_cov = config.ablation.cov

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.seed or 0)
            self.embedding: Optional[SceneGraphEmbedding] = (
                SceneGraphEmbedding(model.d_s, model.d_h, model.d_g, word_dim, model.cell)
                if config.ablation.sge
                else None
            )
            self.passing: Optional[MessagePassing] = (
                MessagePassing(model.d_f, word_dim, config.passing.relation_aware)
                if config.passing.enabled
                else None
            )
            self.masks = MaskProjection(config.mask.size, model.d_f)
            self.visual = VisualHead(model.d_f, num_classes)
            self.context_dim = model.d_f if self.use_cov else model.d_g
            self.message: Optional[MessageHead] = (
                MessageHead(self.context_dim, model.d_f, num_classes)
                if self.embedding is not None or self.use_cov or self.passing is not None
                else None
            )

        self.to(DTYPES[model.dtype])

    @property
    def dtype(self) -> torch.dtype:
        """Parameter dtype."""
        return self.visual.linear.weight.dtype

    def manifest(self) -> Dict[str, List[int]]:
        """Parameter name -> shape."""
        return {name: list(p.shape) for name, p in self.named_parameters()}

    def prepare(self, sample: Sample, data: Optional[DataConfig] = None) -> ScenePairs:
        """Enumerate the pairs of a sample and derive their targets."""
        data = data or self.config.data
        if sample.features.dim not in (0, self.config.model.d_f):
            raise ContractError(
                f"{sample.image_id}: features have dimension {sample.features.dim}, "
                f"model.d_f is {self.config.model.d_f}"
            )
        pairs = enumerate_pairs(
            sample.graph, sample.features, data.human_threshold, data.object_threshold
        )
        labels = pair_labels(
            sample.graph,
            sample.annotations,
            pairs,
            self.vocab.num_interactions,
            self.config.eval.iou_threshold,
        )
        dropped = len(sample.graph.humans()) * (len(sample.graph.nodes) - 1) - len(pairs)
        if dropped:
            log.debug(f"{sample.image_id}: {dropped} pairs below the score thresholds")
        return ScenePairs(sample, pairs, labels)

    def context(self, sample: Sample, appearance: torch.Tensor) -> torch.Tensor:
        """Slot fed next to the refined pair: graph embedding, pooled appearance or zeros."""
        if self.embedding is not None:
            return embed_scene_graph(sample.graph, self.vocab, self.embedding)
        if self.use_cov:
            return appearance.mean(dim=0)
        return appearance.new_zeros(self.context_dim)

    def forward_scene(self, scene) -> PairScores:
        """Scores of every pair of a scene (a ScenePairs or a bare Sample)."""
        if isinstance(scene, Sample):
            scene = self.prepare(scene)
        sample, pairs = scene.sample, scene.pairs
        sg, features = sample.graph, sample.features
        num_classes = self.vocab.num_interactions

        if not pairs:
            empty = torch.zeros((0, num_classes), dtype=self.dtype)
            prior = torch.zeros(0, dtype=self.dtype)
            return PairScores(pairs, prior, empty, empty, empty)

        appearance = RefinedFeatures.from_bundle(features, sg, self.dtype)
        row = {node_id: k for k, node_id in enumerate(appearance.node_ids)}
        h_rows = [row[h] for h, _ in pairs]
        o_rows = [row[o] for _, o in pairs]

        masks = stack_masks(
            [
                build_semantic_masks(
                    sg.node(h).box,
                    sg.node(o).box,
                    sg.node(h).category_id,
                    sg.node(o).category_id,
                    sg.image_width,
                    sg.image_height,
                    self.vocab,
                    self.config.mask.size,
                )
                for h, o in pairs
            ],
            self.config.mask.size,
        )
        f_s = project_masks(masks, self.masks)
        X = appearance.matrix
        p_v = predict_visual(f_s, X[h_rows], X[o_rows], self.visual)

        if self.message is None:
            p_m = torch.ones_like(p_v)
        else:
            refined = (
                run_passing(sg, appearance, self.vocab, self.passing, self.config.passing)
                if self.passing is not None
                else appearance
            )
            R = refined.matrix
            g = self.context(sample, X)
            p_m = predict_message(g, R[h_rows], R[o_rows], self.message)

        prior = pair_prior(
            torch.as_tensor([features.scores[h] for h, _ in pairs], dtype=self.dtype),
            torch.as_tensor([features.scores[o] for _, o in pairs], dtype=self.dtype),
            self.config.pair_prior.gamma,
        )
        return PairScores(pairs, prior, p_v, p_m, combine(prior, p_v, p_m))

    def predict_scene(self, sample: Sample, min_score: float = 0.0) -> List[HOIDetection]:
        """HOI detections of every pair and class scoring above min_score."""
        with torch.no_grad():
            scores = self.forward_scene(self.prepare(sample))

        sg = sample.graph
        detections = []
        for k, (h, o) in enumerate(scores.pairs):
            human, obj = sg.node(h), sg.node(o)
            for c, value in enumerate(scores.p[k].tolist()):
                if value > min_score:
                    detections.append(
                        HOIDetection(human.box, obj.box, obj.category_id, c, value)
                    )
        return detections


def save_checkpoint(params: ParameterStore, path):
    """Single-file checkpoint: weights, shape manifest, config and vocabulary."""
    path = pathlib.Path(path)
    payload = {
        "state_dict": params.state_dict(),
        "manifest": params.manifest(),
        "config": params.config.to_dict(),
        "vocabulary": params.vocab.signature(),
    }
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        torch.save(payload, tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def read_checkpoint(path) -> Dict[str, Any]:
    """Raw checkpoint payload."""
    try:
        return torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError as err:
        raise DataError(f"checkpoint {path} not found") from err
    except Exception as err:  # corrupted or foreign files
        raise DataError(f"cannot read checkpoint {path}: {err}") from err


def load_checkpoint(
    path, vocab: Vocabulary, payload: Optional[Dict[str, Any]] = None
) -> ParameterStore:
    """Rebuild a ParameterStore; the data vocabulary must match the checkpoint's."""
    payload = payload if payload is not None else read_checkpoint(path)
    if payload["vocabulary"] != vocab.signature():
        raise ContractError(
            f"vocabulary of {path} does not match the data vocabulary "
            f"({payload['vocabulary']} != {vocab.signature()})"
        )

    params = ParameterStore(RunConfig.from_dict(payload["config"]), vocab)
    if params.manifest() != payload["manifest"]:
        raise ContractError(f"parameter shapes of {path} do not match its configuration")
    params.load_state_dict(payload["state_dict"])
    return params
