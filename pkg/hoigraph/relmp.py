"""Relation-aware message passing over scene graph nodes.

Every node receives an inter-class message (from neighbors of the other
class) and an intra-class message (from neighbors of its own class), each
weighted by the projected predicate embedding of the connecting edge, and is
refined additively: f~ = f + intra + inter. Rounds are synchronous.
"""

from typing import Dict, List, Mapping, Tuple, Union

import attr
import torch
from torch import nn

from hoigraph.datamodel import FeatureBundle, SceneGraph, SGEdge, Vocabulary
from hoigraph.errors import ConfigError, ContractError
from hoigraph.sgembed import relation_words

# channel name -> (target is human, source is human)
CHANNELS: Dict[str, Tuple[bool, bool]] = {
    "object_to_human": (True, False),
    "human_to_human": (True, True),
    "human_to_object": (False, True),
    "object_to_object": (False, False),
}


def channel_name(target_is_human: bool, source_is_human: bool) -> str:
    """Name of the channel carrying messages between two node classes."""
    for name, classes in CHANNELS.items():
        if classes == (target_is_human, source_is_human):
            return name
    raise KeyError((target_is_human, source_is_human))  # unreachable


class MessageChannel(nn.Module):
    """Weights of one directed channel.

    source     W^o (or W^h), applied to each neighbor feature
    output     W_{o->h} (or its analogue), applied to the summed messages
    predicate  projection of the 300-d predicate mix to d_f; absent when the
               passing is relation-agnostic (alpha = 1)
    """

    def __init__(self, d_f: int, word_dim: int = 300, relation_aware: bool = True):
        """Init weights."""
        super().__init__()
        self.source = nn.Linear(d_f, d_f, bias=False)
        self.output = nn.Linear(d_f, d_f, bias=False)
        self.predicate = None
        if relation_aware:
            self.predicate = nn.Linear(word_dim, d_f, bias=False)
            # unit-norm word mixes give gate entries of order one, the
            # scale of the all-ones relation-agnostic gate
            nn.init.normal_(self.predicate.weight, std=1.0)

    def gate(self, alphas: torch.Tensor) -> torch.Tensor:
        """Per-edge multiplicative weights, (k, d_f)."""
        if self.predicate is None:
            return alphas.new_ones((alphas.shape[0], self.source.out_features))
        return self.predicate(alphas)


class MessagePassing(nn.Module):
    """The four channels of one passing module, shared across rounds."""

    def __init__(self, d_f: int, word_dim: int = 300, relation_aware: bool = True):
        """Init channels."""
        super().__init__()
        self.d_f = d_f
        self.relation_aware = relation_aware
        self.channels = nn.ModuleDict(
            {name: MessageChannel(d_f, word_dim, relation_aware) for name in CHANNELS}
        )

    @property
    def dtype(self) -> torch.dtype:
        """Parameter dtype."""
        return self.channels["object_to_human"].source.weight.dtype


@attr.s(frozen=True, eq=False)
class RefinedFeatures:
    """Node features after `round` passing rounds, rows in `node_ids` order."""

    node_ids: Tuple[int, ...] = attr.ib(converter=tuple)
    matrix: torch.Tensor = attr.ib()
    round: int = attr.ib(default=0)

    def vector(self, node_id: int) -> torch.Tensor:
        """Feature of one node."""
        return self.matrix[self.node_ids.index(node_id)]

    def to_dict(self) -> Dict[int, torch.Tensor]:
        """node_id -> feature."""
        return {i: self.matrix[k] for k, i in enumerate(self.node_ids)}

    @classmethod
    def from_bundle(
        cls, features: FeatureBundle, sg: SceneGraph, dtype: torch.dtype = torch.float64
    ) -> "RefinedFeatures":
        """Round-0 features of the nodes of sg, ascending id."""
        features.check_covers(sg)
        ids = sg.node_ids
        return cls(ids, torch.as_tensor(features.matrix(ids), dtype=dtype), 0)


NodeFeatures = Union[FeatureBundle, RefinedFeatures, Mapping[int, torch.Tensor]]


def _as_refined(
    features: NodeFeatures, sg: SceneGraph, dtype: torch.dtype
) -> RefinedFeatures:
    if isinstance(features, RefinedFeatures):
        return features
    if isinstance(features, FeatureBundle):
        return RefinedFeatures.from_bundle(features, sg, dtype)

    ids = sg.node_ids
    missing = [i for i in ids if i not in features]
    if missing:
        raise ContractError(f"{sg.image_id}: features missing for nodes {missing}")
    if not ids:
        return RefinedFeatures(ids, torch.zeros((0, 0), dtype=dtype), 0)
    return RefinedFeatures(
        ids, torch.stack([torch.as_tensor(features[i], dtype=dtype) for i in ids]), 0
    )


def neighbors(sg: SceneGraph, node_id: int) -> List[Tuple[int, SGEdge]]:
    """(neighbor id, edge) for every edge touching node_id, in either role."""
    out = []
    for edge in sg.edges:
        if edge.subject_id == node_id:
            out.append((edge.object_id, edge))
        elif edge.object_id == node_id:
            out.append((edge.subject_id, edge))
    return out


def _node_message(
    target_id: int,
    sg: SceneGraph,
    features: NodeFeatures,
    vocab: Vocabulary,
    params: MessagePassing,
    same_class: bool,
) -> torch.Tensor:
    feats = _as_refined(features, sg, params.dtype)
    target = sg.node(target_id)
    source_human = target.is_human if same_class else not target.is_human
    channel = params.channels[channel_name(target.is_human, source_human)]

    terms = []
    for neighbor_id, edge in neighbors(sg, target_id):
        if sg.node(neighbor_id).is_human != source_human:
            continue
        alpha = channel.gate(relation_words([edge], vocab, dtype=params.dtype))[0]
        terms.append(channel.source(feats.vector(neighbor_id)) * alpha)

    if not terms:
        return torch.zeros(params.d_f, dtype=params.dtype)
    return channel.output(torch.stack(terms).sum(dim=0))


def inter_class_messages(
    target_id: int,
    sg: SceneGraph,
    features: NodeFeatures,
    vocab: Vocabulary,
    params: MessagePassing,
) -> torch.Tensor:
    """Message to one node from its neighbors of the other class."""
    return _node_message(target_id, sg, features, vocab, params, same_class=False)


def intra_class_messages(
    target_id: int,
    sg: SceneGraph,
    features: NodeFeatures,
    vocab: Vocabulary,
    params: MessagePassing,
) -> torch.Tensor:
    """Message to one node from its neighbors of the same class."""
    return _node_message(target_id, sg, features, vocab, params, same_class=True)


def refine_round(
    sg: SceneGraph,
    features: NodeFeatures,
    vocab: Vocabulary,
    params: MessagePassing,
) -> RefinedFeatures:
    """One synchronous round: every node reads the round's input features only."""
    feats = _as_refined(features, sg, params.dtype)
    X = feats.matrix
    if not sg.edges:
        return RefinedFeatures(feats.node_ids, X, feats.round + 1)
    if X.shape[1] != params.d_f:
        raise ContractError(
            f"features have dimension {X.shape[1]}, expected {params.d_f}"
        )

    row = {node_id: k for k, node_id in enumerate(feats.node_ids)}
    is_human = {n.node_id: n.is_human for n in sg.nodes}

    # each edge carries a message both ways
    targets = [e.object_id for e in sg.edges] + [e.subject_id for e in sg.edges]
    sources = [e.subject_id for e in sg.edges] + [e.object_id for e in sg.edges]
    alphas = relation_words(sg.edges, vocab, dtype=params.dtype).repeat(2, 1)

    update = torch.zeros_like(X)
    for name, (target_human, source_human) in CHANNELS.items():
        select = [
            k
            for k in range(len(targets))
            if is_human[targets[k]] == target_human
            and is_human[sources[k]] == source_human
        ]
        if not select:
            continue
        channel = params.channels[name]
        src = [row[sources[k]] for k in select]
        dst = torch.as_tensor([row[targets[k]] for k in select], dtype=torch.long)
        terms = channel.source(X[src]) * channel.gate(alphas[select])
        summed = torch.zeros_like(X).index_add(0, dst, terms)
        update = update + channel.output(summed)

    return RefinedFeatures(feats.node_ids, X + update, feats.round + 1)


def run_passing(
    sg: SceneGraph,
    features: NodeFeatures,
    vocab: Vocabulary,
    params: MessagePassing,
    config,
) -> RefinedFeatures:
    """Apply `config.rounds` rounds (an int is accepted as well)."""
    rounds = config if isinstance(config, int) else config.rounds
    if rounds < 1:
        raise ConfigError("passing.rounds must be >= 1")

    feats = _as_refined(features, sg, params.dtype)
    for _ in range(rounds):
        feats = refine_round(sg, feats, vocab, params)
    return feats

