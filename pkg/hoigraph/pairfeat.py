"""Pair spatial feature: two category-filled masks of a human-object pair."""

from typing import Optional, Sequence

import attr
import numpy
import torch
from torch import nn

from hoigraph.datamodel import BoundingBox, Vocabulary
from hoigraph.errors import ContractError, DomainError


@attr.s(frozen=True, eq=False)
class SemanticMaskPair:
    """Human and object channels, each a (size, size) grid."""

    human: numpy.ndarray = attr.ib()
    object: numpy.ndarray = attr.ib()

    @property
    def size(self) -> int:
        """Grid side."""
        return int(self.human.shape[0])

    def flat(self) -> numpy.ndarray:
        """Human channel then object channel, row-major, 2 * size**2 values."""
        return numpy.concatenate([self.human.ravel(), self.object.ravel()])


def category_code(category_id: int, num_categories: int) -> float:
    """Fill value of a category: (c + 1) / (C + 1)."""
    if not 0 <= category_id < num_categories:
        raise ContractError(f"category {category_id} outside {num_categories} categories")
    return (category_id + 1) / (num_categories + 1)


def _frame(h_box: BoundingBox, o_box: BoundingBox):
    """Union box padded to a square around its center: (x0, y0, side)."""
    x1, y1 = min(h_box.x_tl, o_box.x_tl), min(h_box.y_tl, o_box.y_tl)
    x2, y2 = max(h_box.x_br, o_box.x_br), max(h_box.y_br, o_box.y_br)
    width, height = x2 - x1, y2 - y1
    if width <= 0 or height <= 0:
        raise DomainError(f"degenerate union box {[x1, y1, x2, y2]}")

    side = max(width, height)
    return x1 - (side - width) / 2, y1 - (side - height) / 2, side


def _fill(box: BoundingBox, xs: numpy.ndarray, ys: numpy.ndarray, value: float):
    # a cell is inside when its center is, boxes are half-open
    inside_x = (xs >= box.x_tl) & (xs < box.x_br)
    inside_y = (ys >= box.y_tl) & (ys < box.y_br)
    return numpy.outer(inside_y, inside_x) * value


def build_semantic_masks(
    h_box: BoundingBox,
    o_box: BoundingBox,
    h_cat: int,
    o_cat: int,
    image_w: float,
    image_h: float,
    vocab: Vocabulary,
    size: int = 64,
) -> SemanticMaskPair:
    """Rasterize both boxes into the pair's square reference frame."""
    if image_w <= 0 or image_h <= 0:
        raise DomainError(f"image size must be positive, got {image_w}x{image_h}")
    x0, y0, side = _frame(h_box, o_box)

    centers = (numpy.arange(size) + 0.5) * (side / size)
    xs, ys = x0 + centers, y0 + centers

    num = vocab.num_objects
    return SemanticMaskPair(
        human=_fill(h_box, xs, ys, category_code(h_cat, num)),
        object=_fill(o_box, xs, ys, category_code(o_cat, num)),
    )


def stack_masks(
    masks: Sequence[SemanticMaskPair], size: Optional[int] = None
) -> numpy.ndarray:
    """(k, 2 * size**2) matrix of flattened mask pairs."""
    if not masks:
        return numpy.zeros((0, 2 * (size or 64) ** 2))
    return numpy.stack([m.flat() for m in masks])


class MaskProjection(nn.Module):
    """Linear map from the flattened masks to 2 * d_f, with bias."""

    def __init__(self, size: int = 64, d_f: int = 256):
        """Init weights."""
        super().__init__()
        self.size = size
        self.linear = nn.Linear(2 * size * size, 2 * d_f)


def project_masks(masks, params: MaskProjection) -> torch.Tensor:
    """f_s = sigmoid(W [human; object] + b), for one mask pair or a stacked batch."""
    if isinstance(masks, SemanticMaskPair):
        masks = masks.flat()
    x = torch.as_tensor(masks, dtype=params.linear.weight.dtype)
    if x.shape[-1] != params.linear.in_features:
        raise ContractError(
            f"masks have {x.shape[-1]} values, expected {params.linear.in_features}"
        )
    return torch.sigmoid(params.linear(x))
