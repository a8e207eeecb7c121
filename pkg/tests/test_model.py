"""Test the parameter store, pair scoring and checkpoints."""

import attr
import pytest
import torch

from hoigraph.datamodel import Vocabulary
from hoigraph.errors import ContractError, DataError
from hoigraph.model import (
    ParameterStore,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
)


def _prefixes(params):
    return {name.split(".")[0] for name in params.manifest()}


def test_variants_create_only_their_modules(fixture_vocab, make_config):
    """Should leave switched-off modules out of the manifest."""
    assert _prefixes(ParameterStore(make_config(["baseline"]), fixture_vocab)) == {
        "masks",
        "visual",
    }
    assert _prefixes(ParameterStore(make_config(["sge"]), fixture_vocab)) == {
        "embedding",
        "masks",
        "visual",
        "message",
    }
    full = ParameterStore(make_config(["full"]), fixture_vocab)
    assert _prefixes(full) == {"embedding", "passing", "masks", "visual", "message"}
    assert full.manifest()["message.linear.weight"] == [3, 6 + 2 * 4]

    cov = ParameterStore(make_config(["cov", "rel"]), fixture_vocab)
    assert cov.manifest()["message.linear.weight"] == [3, 3 * 4]

    no_rel = ParameterStore(make_config(["no-rel"]), fixture_vocab)
    assert not [n for n in no_rel.manifest() if "predicate" in n]


def test_same_seed_same_weights(fixture_vocab, make_config):
    """Should initialize from the run seed only."""
    a = ParameterStore(make_config(), fixture_vocab)
    torch.manual_seed(1234)
    b = ParameterStore(make_config(), fixture_vocab)
    for name, weight in a.state_dict().items():
        torch.testing.assert_close(weight, b.state_dict()[name], rtol=0, atol=0)

    c = ParameterStore(attr.evolve(make_config(), seed=1), fixture_vocab)
    assert not torch.equal(a.visual.linear.weight, c.visual.linear.weight)


@pytest.mark.parametrize("variant", ["baseline", "sge", "cov", "rel", "no-rel", "full"])
def test_forward_scene(variant, fixture_sample, fixture_vocab, make_config):
    """Should score every pair and class in [0, 1]."""
    params = ParameterStore(make_config([variant]), fixture_vocab)
    scores = params.forward_scene(fixture_sample)
    assert scores.pairs == [(0, 1), (0, 2), (2, 0), (2, 1)]
    assert scores.p.shape == (4, 3)
    assert bool(((scores.p >= 0) & (scores.p <= 1)).all())
    torch.testing.assert_close(
        scores.prior, torch.tensor([0.72, 0.63, 0.63, 0.56], dtype=torch.float64)
    )
    torch.testing.assert_close(scores.p, scores.prior[:, None] * scores.p_v * scores.p_m)
    if variant == "baseline":
        assert bool((scores.p_m == 1).all())


def test_prepare_checks_feature_size(fixture_sample, fixture_vocab, make_config):
    """Should refuse features of another width than model.d_f."""
    params = ParameterStore(make_config(**{"model.d_f": "6"}), fixture_vocab)
    with pytest.raises(ContractError):
        params.prepare(fixture_sample)


def test_predict_scene(fixture_sample, fixture_vocab, make_config):
    """Should emit one detection per pair and class above min_score."""
    params = ParameterStore(make_config(), fixture_vocab)
    detections = params.predict_scene(fixture_sample)
    assert len(detections) == 12
    assert {d.object_category for d in detections} == {0, 1}
    assert params.predict_scene(fixture_sample, min_score=1.1) == []


def test_checkpoint_round_trip(tmp_path, fixture_sample, fixture_vocab, make_config):
    """Should reload the same model."""
    params = ParameterStore(make_config(), fixture_vocab)
    with torch.no_grad():
        params.visual.linear.bias.add_(0.25)
    save_checkpoint(params, tmp_path / "checkpoint.pt")

    loaded = load_checkpoint(tmp_path / "checkpoint.pt", fixture_vocab)
    assert loaded.config == params.config
    assert loaded.manifest() == params.manifest()
    torch.testing.assert_close(
        loaded.forward_scene(fixture_sample).p, params.forward_scene(fixture_sample).p
    )


def test_checkpoint_errors(tmp_path, fixture_vocab, make_config):
    """Should refuse foreign vocabularies and unreadable files."""
    params = ParameterStore(make_config(), fixture_vocab)
    save_checkpoint(params, tmp_path / "checkpoint.pt")

    other = Vocabulary(
        ["person", "cup", "bicycle", "chair"], ["hold", "ride", "near"], ["hold", "ride"]
    )
    with pytest.raises(ContractError):
        load_checkpoint(tmp_path / "checkpoint.pt", other)

    payload = read_checkpoint(tmp_path / "checkpoint.pt")
    payload["manifest"]["visual.linear.bias"] = [7]
    with pytest.raises(ContractError):
        load_checkpoint(tmp_path / "checkpoint.pt", fixture_vocab, payload=payload)

    (tmp_path / "junk.pt").write_bytes(b"not a checkpoint")
    with pytest.raises(DataError):
        read_checkpoint(tmp_path / "junk.pt")
    with pytest.raises(DataError):
        read_checkpoint(tmp_path / "missing.pt")


def test_predict_scene_without_humans(fixture_sample, fixture_vocab, make_config):
    """Should return no detections."""
    sg = fixture_sample.graph
    objects = [n for n in sg.nodes if not n.is_human]
    sample = attr.evolve(fixture_sample, graph=attr.evolve(sg, nodes=objects, edges=()))
    params = ParameterStore(make_config(), fixture_vocab)
    assert params.predict_scene(sample) == []
