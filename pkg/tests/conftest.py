"""Shared fixtures."""

import os

import pytest

from hoigraph.config import resolve_config
from hoigraph.datamodel import (
    load_annotations,
    load_features,
    load_scene_graph,
    load_vocabulary,
)
from hoigraph.dataset import Dataset, Sample

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")

SMALL_MODEL = {
    "model.d_s": "6",
    "model.d_h": "8",
    "model.d_g": "6",
    "model.d_f": "4",
    "mask.size": "8",
}


@pytest.fixture
def fixture_vocab():
    """Vocabulary of the fixture image."""
    return load_vocabulary(os.path.join(FIXTURES, "vocabulary.json"))


@pytest.fixture
def fixture_sample():
    """The fixture image as a dataset sample."""
    [annotations] = load_annotations(os.path.join(FIXTURES, "annotations.json"))
    return Sample(
        load_scene_graph(os.path.join(FIXTURES, "scene_graph.json")),
        load_features(os.path.join(FIXTURES, "features.json")),
        annotations,
    )


@pytest.fixture
def fixture_dataset(fixture_vocab, fixture_sample):
    """One image dataset."""
    return Dataset(fixture_vocab, [fixture_sample])


@pytest.fixture
def make_config():
    """Seeded run configs with tiny layers matching the fixture features."""

    def _make(ablation=(), **overrides):
        values = dict(SMALL_MODEL)
        values.update(overrides)
        return resolve_config(overrides=values, seed=0, ablation=ablation)

    return _make
