"""Test semantic masks and their projection."""

import os

import numpy
import pytest
import torch

from hoigraph.datamodel import BoundingBox, load_vocabulary
from hoigraph.errors import ContractError, DomainError
from hoigraph.pairfeat import (
    MaskProjection,
    build_semantic_masks,
    category_code,
    project_masks,
    stack_masks,
)

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture
def vocab():
    """Fixture vocabulary, 4 object categories."""
    return load_vocabulary(os.path.join(FIXTURES, "vocabulary.json"))


def test_category_code():
    """Should map categories into (0, 1)."""
    assert category_code(0, 4) == pytest.approx(0.2)
    assert category_code(3, 4) == pytest.approx(0.8)
    with pytest.raises(ContractError):
        category_code(4, 4)


def test_same_box_fills_everything(vocab):
    """Should fill every cell of both channels."""
    box = BoundingBox(0, 0, 64, 64)
    masks = build_semantic_masks(box, box, 0, 1, 640, 480, vocab, size=64)
    assert masks.size == 64
    numpy.testing.assert_allclose(masks.human, numpy.full((64, 64), 0.2))
    numpy.testing.assert_allclose(masks.object, numpy.full((64, 64), 0.4))


def test_side_by_side_boxes(vocab):
    """Should fill the left half for the human and the right half for the object."""
    masks = build_semantic_masks(
        BoundingBox(0, 0, 32, 64), BoundingBox(32, 0, 64, 64), 0, 1, 640, 480, vocab
    )
    numpy.testing.assert_allclose(masks.human[:, :32], 0.2)
    assert not masks.human[:, 32:].any()
    numpy.testing.assert_allclose(masks.object[:, 32:], 0.4)
    assert not masks.object[:, :32].any()


def test_union_is_padded_to_a_square(vocab):
    """Should center a tall union box horizontally."""
    box = BoundingBox(0, 0, 10, 20)
    masks = build_semantic_masks(box, box, 0, 0, 640, 480, vocab, size=4)
    expected = numpy.array([[0.0, 0.2, 0.2, 0.0]] * 4)
    numpy.testing.assert_allclose(masks.human, expected)


def test_masks_are_translation_invariant(vocab):
    """Should only depend on the relative placement of the boxes."""
    h, o = BoundingBox(10, 20, 60, 120), BoundingBox(50, 80, 90, 110)
    a = build_semantic_masks(h, o, 0, 2, 640, 480, vocab, size=16)
    h, o = BoundingBox(110, 70, 160, 170), BoundingBox(150, 130, 190, 160)
    b = build_semantic_masks(h, o, 0, 2, 640, 480, vocab, size=16)
    numpy.testing.assert_array_equal(a.flat(), b.flat())
    assert a.flat().shape == (2 * 16 * 16,)


def test_mask_errors(vocab):
    """Should reject empty images and unknown categories."""
    box = BoundingBox(0, 0, 10, 10)
    with pytest.raises(DomainError):
        build_semantic_masks(box, box, 0, 1, 0, 480, vocab)
    with pytest.raises(ContractError):
        build_semantic_masks(box, box, 0, 7, 640, 480, vocab)


def test_project_masks(vocab):
    """Should squash the projection into (0, 1)."""
    params = MaskProjection(size=8, d_f=3).double()
    with torch.no_grad():
        params.linear.weight.zero_()
        params.linear.bias.zero_()

    box = BoundingBox(0, 0, 10, 10)
    masks = build_semantic_masks(box, box, 0, 1, 640, 480, vocab, size=8)
    out = project_masks(masks, params)
    assert out.shape == (6,)
    torch.testing.assert_close(out, torch.full((6,), 0.5, dtype=torch.float64))

    batch = project_masks(stack_masks([masks, masks], 8), params)
    assert batch.shape == (2, 6)
    assert stack_masks([], 8).shape == (0, 128)

    with pytest.raises(ContractError):
        project_masks(numpy.zeros(10), params)


def test_masks_are_nearly_scale_invariant(vocab):
    """Should change at most 1% of the cells when both boxes are scaled together."""
    rng = numpy.random.default_rng(6)
    for _ in range(20):
        x, y = rng.uniform(0, 200, size=2)
        h = BoundingBox(x, y, x + rng.uniform(20, 80), y + rng.uniform(40, 160))
        ox, oy = x + rng.uniform(-40, 60), y + rng.uniform(-40, 120)
        o = BoundingBox(ox, oy, ox + rng.uniform(10, 60), oy + rng.uniform(10, 60))
        scale = float(rng.uniform(0.5, 3.0))
        h2 = BoundingBox(*(v * scale for v in h.to_list()))
        o2 = BoundingBox(*(v * scale for v in o.to_list()))

        a = build_semantic_masks(h, o, 0, 1, 640, 480, vocab).flat()
        b = build_semantic_masks(h2, o2, 0, 1, 640 * scale, 480 * scale, vocab).flat()
        assert numpy.mean(a != b) <= 0.01


def test_masks_scale_with_the_category_code(vocab):
    """Should fill the object channel with the category code of the object."""
    h, o = BoundingBox(10, 20, 60, 120), BoundingBox(50, 80, 90, 110)
    base = build_semantic_masks(h, o, 0, 1, 640, 480, vocab, size=16)
    inside = base.object > 0
    assert inside.any()
    for category in range(4):
        masks = build_semantic_masks(h, o, 0, category, 640, 480, vocab, size=16)
        numpy.testing.assert_allclose(masks.object[inside], category_code(category, 4))
        assert not masks.object[~inside].any()
        numpy.testing.assert_allclose(masks.human, base.human)
