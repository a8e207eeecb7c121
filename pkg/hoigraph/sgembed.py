"""Scene graph embedding.

Layout encoding turns every node into a codeword (projected box geometry plus
the category word vector) and runs a bidirectional recurrent encoder over the
nodes sorted left to right. Relation fusion builds one feature per edge,
correlates nodes with edges through a self-attention vector, fuses both and
pools the result into a single graph embedding.

Shapes: n nodes, m edges, H is (n, d_h), E is (m, d_h), C is (n, m).
"""

import math
from typing import Optional, Sequence

import numpy
import torch
from torch import nn

from hoigraph.datamodel import BoundingBox, SceneGraph, SGEdge, Vocabulary
from hoigraph.errors import ContractError, DomainError

RECURRENT_CELLS = {"gru": nn.GRU, "lstm": nn.LSTM, "rnn": nn.RNN}

# a graph embedding is a (d_g,) tensor; zero when the graph has no edges
GraphEmbedding = torch.Tensor


class SceneGraphEmbedding(nn.Module):
    """Weights of the scene graph embedding.

    spatial    W^s, (d_s, 8)
    context    W^c, (d_h, d_s + word_dim)
    encoder    bidirectional recurrent encoder, d_h / 2 units per direction
    relation   W^r, (d_h, 2 d_h + word_dim)
    attention  W^a, (d_h,)
    graph      W^g, (d_g, d_h)
    """

    def __init__(
        self,
        d_s: int = 128,
        d_h: int = 256,
        d_g: int = 256,
        word_dim: int = 300,
        cell: str = "gru",
    ):
        """Init weights."""
        super().__init__()
        if d_h % 2:
            raise ContractError("d_h must be even")
        self.d_s, self.d_h, self.d_g, self.word_dim = d_s, d_h, d_g, word_dim

        self.spatial = nn.Linear(8, d_s, bias=False)
        self.context = nn.Linear(d_s + word_dim, d_h, bias=False)
        self.encoder = RECURRENT_CELLS[cell](
            d_h, d_h // 2, num_layers=1, batch_first=True, bidirectional=True
        )
        self.relation = nn.Linear(2 * d_h + word_dim, d_h, bias=False)
        self.attention = nn.Parameter(torch.full((d_h,), 1.0 / math.sqrt(d_h)))
        self.graph = nn.Linear(d_h, d_g, bias=False)

    @property
    def dtype(self) -> torch.dtype:
        """Parameter dtype."""
        return self.attention.dtype


def layout_vector(box: BoundingBox, image_w: float, image_h: float) -> numpy.ndarray:
    """[x_tl, y_tl, x_br, y_br, x_c, y_c, w, h], x terms over width, y terms over height."""
    if box.width <= 0 or box.height <= 0:
        raise DomainError(f"degenerate box {box.to_list()}")
    cx, cy = box.center
    return numpy.array(
        [
            box.x_tl / image_w,
            box.y_tl / image_h,
            box.x_br / image_w,
            box.y_br / image_h,
            cx / image_w,
            cy / image_h,
            box.width / image_w,
            box.height / image_h,
        ]
    )


def spatial_encode(
    box: BoundingBox, image_w: float, image_h: float, params: SceneGraphEmbedding
) -> torch.Tensor:
    """Spatial feature p_i = W^s [box geometry]."""
    layout = torch.as_tensor(layout_vector(box, image_w, image_h), dtype=params.dtype)
    return params.spatial(layout)


def semantic_lookup(category_id: int, vocab: Vocabulary) -> numpy.ndarray:
    """Word vector u_i of a category."""
    return vocab.category_vector(category_id)


def context_encode(
    codewords: torch.Tensor,
    boxes: Sequence[BoundingBox],
    params: SceneGraphEmbedding,
    node_ids: Optional[Sequence[int]] = None,
) -> torch.Tensor:
    """Contextual node features h_i, rows aligned with `codewords`.

    The encoder reads the nodes sorted by box center x, ties broken by
    ascending node id.
    """
    n = codewords.shape[0]
    if n == 0:
        return codewords.new_zeros((0, params.d_h))

    node_ids = list(range(n)) if node_ids is None else list(node_ids)
    order = sorted(range(n), key=lambda i: (boxes[i].center[0], node_ids[i]))

    sequence = params.context(codewords[order]).unsqueeze(0)
    encoded, _ = params.encoder(sequence)
    encoded = encoded.squeeze(0)

    inverse = [0] * n
    for position, i in enumerate(order):
        inverse[i] = position
    return encoded[inverse]


def relation_words(
    edges: Sequence[SGEdge], vocab: Vocabulary, dtype: torch.dtype = torch.float64
) -> torch.Tensor:
    """alpha for each edge: soft-label weighted mix of predicate word vectors, (m, word_dim)."""
    if not edges:
        return torch.zeros((0, vocab.embedding_dim), dtype=dtype)
    soft = numpy.stack([e.distribution(vocab.num_predicates) for e in edges])
    return torch.as_tensor(soft @ vocab.predicate_matrix(), dtype=dtype)


def relation_feature(
    h_i: torch.Tensor,
    h_j: torch.Tensor,
    edge: SGEdge,
    vocab: Vocabulary,
    params: SceneGraphEmbedding,
) -> torch.Tensor:
    """e_k = W^r [h_i; alpha_ij; h_j]."""
    alpha = relation_words([edge], vocab, dtype=h_i.dtype)[0]
    return params.relation(torch.cat([h_i, alpha, h_j]))


def correlation(
    H: torch.Tensor, E: torch.Tensor, params: SceneGraphEmbedding
) -> torch.Tensor:
    """C = (H * W^a) E^T, shape (n, m). Empty when n or m is 0."""
    n, m = H.shape[0], E.shape[0]
    if n == 0 or m == 0:
        return H.new_zeros((n, m))
    if H.shape[1] != E.shape[1]:
        raise ContractError(f"H has {H.shape[1]} columns, E has {E.shape[1]}")
    return (H * params.attention) @ E.T


def fuse(C: torch.Tensor, H: torch.Tensor, E: torch.Tensor) -> torch.Tensor:
    """g_ring = (C^T H) * E, shape (m, d_h)."""
    if C.shape != (H.shape[0], E.shape[0]):
        raise ContractError(
            f"correlation shape {tuple(C.shape)} does not match "
            f"({H.shape[0]}, {E.shape[0]})"
        )
    return (C.T @ H) * E


def pool_embed(g_ring: torch.Tensor, params: SceneGraphEmbedding) -> GraphEmbedding:
    """g_tilde = W^g sum_j g_ring_j; zero vector when there are no edges."""
    if g_ring.shape[0] == 0:
        return g_ring.new_zeros(params.d_g)
    return params.graph(g_ring.sum(dim=0))


def embed_scene_graph(
    sg: SceneGraph, vocab: Vocabulary, params: SceneGraphEmbedding
) -> GraphEmbedding:
    """Graph embedding of a validated scene graph."""
    if not sg.edges:
        return torch.zeros(params.d_g, dtype=params.dtype)

    nodes = sorted(sg.nodes, key=lambda n: n.node_id)
    row = {n.node_id: i for i, n in enumerate(nodes)}

    layout = torch.as_tensor(
        numpy.stack(
            [layout_vector(n.box, sg.image_width, sg.image_height) for n in nodes]
        ),
        dtype=params.dtype,
    )
    words = torch.as_tensor(
        numpy.stack([semantic_lookup(n.category_id, vocab) for n in nodes]),
        dtype=params.dtype,
    )
    codewords = torch.cat([params.spatial(layout), words], dim=1)
    H = context_encode(
        codewords, [n.box for n in nodes], params, node_ids=[n.node_id for n in nodes]
    )

    subjects = [row[e.subject_id] for e in sg.edges]
    objects = [row[e.object_id] for e in sg.edges]
    alphas = relation_words(sg.edges, vocab, dtype=params.dtype)
    E = params.relation(torch.cat([H[subjects], alphas, H[objects]], dim=1))

    C = correlation(H, E, params)
    return pool_embed(fuse(C, H, E), params)
