"""Deterministic synthetic scenes whose interactions follow from their relations."""

import hashlib
import json
import pathlib
from typing import Any, Dict, FrozenSet, List, Mapping, Optional, Tuple

import attr
import numpy
from loguru import logger as log

from hoigraph.datamodel import (
    AnnotationSet,
    BoundingBox,
    FeatureBundle,
    GroundTruthHOI,
    SceneGraph,
    SGEdge,
    SGNode,
    Vocabulary,
    dump_annotations,
    dump_features,
    dump_scene_graph,
    dump_vocabulary,
    write_json,
)
from hoigraph.errors import ConfigError, ContractError

DEFAULT_OBJECTS = (
    "person",
    "cup",
    "bicycle",
    "chair",
    "bag",
    "table",
    "dog",
    "ball",
    "phone",
    "book",
)
DEFAULT_PREDICATES = (
    "hold",
    "ride",
    "look_at",
    "sit_on",
    "carry",
    "near",
    "talk_to",
    "next_to",
)
DEFAULT_INTERACTIONS = ("hold", "ride", "look", "sit", "mount", "carry")

# the last predicates of the vocabulary only link two humans
HUMAN_PREDICATES = 2


def _pair(value) -> Tuple[int, int]:
    lo, hi = value
    return int(lo), int(hi)


@attr.s(frozen=True)
class WorldConfig:
    """Synthetic world parameters."""

    seed: int = attr.ib(default=7, converter=int)
    num_scenes: int = attr.ib(default=600, converter=int)
    humans_per_scene: Tuple[int, int] = attr.ib(default=(1, 3), converter=_pair)
    objects_per_scene: Tuple[int, int] = attr.ib(default=(2, 5), converter=_pair)
    canvas: Tuple[int, int] = attr.ib(default=(640, 480), converter=_pair)
    num_objects: int = attr.ib(default=10, converter=int)
    num_predicates: int = attr.ib(default=8, converter=int)
    num_interactions: int = attr.ib(default=6, converter=int)
    feature_dim: int = attr.ib(default=256, converter=int)
    noise: float = attr.ib(default=0.1, converter=float)
    edge_dropout: float = attr.ib(default=0.0, converter=float)
    relation_probability: float = attr.ib(default=0.8, converter=float)
    human_edge_probability: float = attr.ib(default=0.3, converter=float)
    object_edge_probability: float = attr.ib(default=0.1, converter=float)

    def __attrs_post_init__(self):
        """Check invariants."""
        counts = {
            "num_scenes": self.num_scenes,
            "num_interactions": self.num_interactions,
            "feature_dim": self.feature_dim,
            "humans_per_scene": self.humans_per_scene[0],
            "objects_per_scene": self.objects_per_scene[0],
            "canvas": min(self.canvas),
        }
        for name, value in counts.items():
            if value < 1:
                raise ConfigError(f"world.{name} must be >= 1")
        for name in ("humans_per_scene", "objects_per_scene"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ConfigError(f"world.{name} range is empty")
        if self.num_objects < 2:
            raise ConfigError("world.num_objects must be >= 2 (person plus one object)")
        if self.num_predicates < HUMAN_PREDICATES + 1:
            raise ConfigError(f"world.num_predicates must be >= {HUMAN_PREDICATES + 1}")
        if self.noise < 0:
            raise ConfigError("world.noise must be >= 0")
        for name in (
            "edge_dropout",
            "relation_probability",
            "human_edge_probability",
            "object_edge_probability",
        ):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"world.{name} must lie in [0, 1]")

    @property
    def object_predicates(self) -> int:
        """Number of predicates usable on human->object and object->object edges."""
        return self.num_predicates - HUMAN_PREDICATES

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "WorldConfig":
        """Build from a world.json document, rejecting unknown keys."""
        known = {a.name for a in attr.fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown world keys: {', '.join(unknown)}")
        try:
            return cls(**doc)
        except ConfigError:
            raise
        except (TypeError, ValueError) as err:
            raise ConfigError(f"invalid world config: {err}") from err

    def to_dict(self) -> Dict[str, Any]:
        """world.json document."""
        return {k: list(v) if isinstance(v, tuple) else v for k, v in attr.asdict(self).items()}


@attr.s(frozen=True)
class Rule:
    """(predicate, object category or wildcard) -> interaction."""

    predicate_id: int = attr.ib(converter=int)
    object_category: Optional[int] = attr.ib()
    interaction_id: int = attr.ib(converter=int)


@attr.s(frozen=True)
class RuleTable:
    """Disjoint relation-to-interaction rules; no match means no interaction."""

    rules: Tuple[Rule, ...] = attr.ib(converter=tuple)

    def __attrs_post_init__(self):
        """Check that no two rules can fire on the same key."""
        keys = set()
        wildcards = {r.predicate_id for r in self.rules if r.object_category is None}
        for rule in self.rules:
            key = (rule.predicate_id, rule.object_category)
            if key in keys:
                raise ConfigError(f"duplicate rule key {key}")
            if rule.object_category is not None and rule.predicate_id in wildcards:
                raise ConfigError(f"rule {key} overlaps a wildcard rule")
            keys.add(key)

    def lookup(self, predicate_id: int, category_id: int) -> Optional[int]:
        """Interaction produced by a relation, if any."""
        for rule in self.rules:
            if rule.predicate_id == predicate_id and rule.object_category in (
                None,
                category_id,
            ):
                return rule.interaction_id
        return None

    def check(self, num_objects: int, num_predicates: int, num_interactions: int):
        """Raise ConfigError when a rule references an unknown id."""
        for rule in self.rules:
            if not 0 <= rule.predicate_id < num_predicates:
                raise ConfigError(f"rule predicate {rule.predicate_id} not in vocabulary")
            if rule.object_category is not None and not (
                0 <= rule.object_category < num_objects
            ):
                raise ConfigError(
                    f"rule category {rule.object_category} not in vocabulary"
                )
            if not 0 <= rule.interaction_id < num_interactions:
                raise ConfigError(
                    f"rule interaction {rule.interaction_id} not in vocabulary"
                )

    def to_dict(self) -> Dict[str, Any]:
        """rules.json document."""
        return {
            "rules": [
                {
                    "predicate": r.predicate_id,
                    "category": r.object_category,
                    "interaction": r.interaction_id,
                }
                for r in self.rules
            ]
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "RuleTable":
        """Build from a rules.json document."""
        try:
            return cls(
                Rule(r["predicate"], r.get("category"), r["interaction"])
                for r in doc["rules"]
            )
        except (KeyError, TypeError) as err:
            raise ConfigError(f"invalid rules document: {err}") from err


def default_rules() -> RuleTable:
    """Three predicate-only rules and three category-specific ones."""
    return RuleTable(
        [
            Rule(0, None, 0),  # hold -> hold
            Rule(1, None, 1),  # ride -> ride
            Rule(2, None, 2),  # look_at -> look
            Rule(3, 3, 3),  # sit_on chair -> sit
            Rule(3, 2, 4),  # sit_on bicycle -> mount
            Rule(4, 4, 5),  # carry bag -> carry
        ]
    )


def predicate_only_rules(config: WorldConfig) -> RuleTable:
    """Rules keyed on predicates only: labels do not depend on appearance."""
    count = min(config.object_predicates, config.num_interactions)
    return RuleTable([Rule(p, None, p) for p in range(count)])


def _names(defaults: Tuple[str, ...], size: int, prefix: str) -> List[str]:
    if size == len(defaults):
        return list(defaults)
    return [f"{prefix}_{i}" for i in range(size)]


def default_vocabulary(config: WorldConfig) -> Vocabulary:
    """Vocabulary sized after the world config; person is category 0."""
    objects = _names(DEFAULT_OBJECTS, config.num_objects, "object")
    objects[0] = "person"
    return Vocabulary(
        objects=objects,
        predicates=_names(DEFAULT_PREDICATES, config.num_predicates, "predicate"),
        interactions=_names(DEFAULT_INTERACTIONS, config.num_interactions, "interaction"),
        person_index=0,
    )


def rule_label(
    sg: SceneGraph, human_id: int, object_id: int, rules: RuleTable
) -> FrozenSet[int]:
    """Interactions implied by the human->object relations of a pair."""
    if not sg.node(human_id).is_human:
        raise ContractError(f"{sg.image_id}: node {human_id} is not a human")
    category = sg.node(object_id).category_id
    labels = set()
    for edge in sg.edges:
        if edge.subject_id == human_id and edge.object_id == object_id:
            interaction = rules.lookup(edge.predicate_id, category)
            if interaction is not None:
                labels.add(interaction)
    return frozenset(labels)


@attr.s(frozen=True, eq=False)
class SyntheticScene:
    """One generated image."""

    graph: SceneGraph = attr.ib()
    features: FeatureBundle = attr.ib()
    annotations: AnnotationSet = attr.ib()
    pairs: Dict[Tuple[int, int], FrozenSet[int]] = attr.ib()


def _soft_label(
    rng: numpy.random.Generator, predicate_id: int, num_predicates: int
) -> List[float]:
    confidence = rng.uniform(0.5, 1.0)
    rest = rng.dirichlet(numpy.ones(num_predicates - 1)) * (1.0 - confidence)
    soft = numpy.insert(rest, predicate_id, confidence)
    return soft.tolist()


def _box(rng, width, height, canvas, center=None) -> BoundingBox:
    cw, ch = canvas
    if center is None:
        x = rng.uniform(0, cw - width)
        y = rng.uniform(0, ch - height)
    else:
        x = min(max(center[0] - width / 2.0, 0.0), cw - width)
        y = min(max(center[1] - height / 2.0, 0.0), ch - height)
    return BoundingBox(x, y, x + width, y + height)


def generate_scene(
    index: int,
    seed_seq: numpy.random.SeedSequence,
    config: WorldConfig,
    rules: RuleTable,
    prototypes: numpy.ndarray,
) -> SyntheticScene:
    """Generate scene `index` from its own seed sequence."""
    rng = numpy.random.default_rng(seed_seq)
    cw, ch = config.canvas
    n_humans = int(
        rng.integers(config.humans_per_scene[0], config.humans_per_scene[1] + 1)
    )
    n_objects = int(
        rng.integers(config.objects_per_scene[0], config.objects_per_scene[1] + 1)
    )

    nodes: List[SGNode] = []
    vectors: Dict[int, numpy.ndarray] = {}
    scores: Dict[int, float] = {}

    def add_node(category: int, box: BoundingBox, score: float):
        node_id = len(nodes)
        nodes.append(SGNode(node_id, category, box, score, is_human=category == 0))
        noise = rng.standard_normal(config.feature_dim)
        vectors[node_id] = prototypes[category] + config.noise * noise
        scores[node_id] = score
        return node_id

    # each human stands in its own vertical slot of the canvas
    humans = []
    slot = cw / n_humans
    for k in range(n_humans):
        center = (rng.uniform(k + 0.25, k + 0.75) * slot, rng.uniform(0.3, 0.7) * ch)
        box = _box(
            rng,
            rng.uniform(0.08, 0.2) * cw,
            rng.uniform(0.25, 0.5) * ch,
            config.canvas,
            center=center,
        )
        humans.append(add_node(0, box, rng.uniform(0.7, 1.0)))

    relations: List[SGEdge] = []
    objects = []
    for _ in range(n_objects):
        category = int(rng.integers(1, config.num_objects))
        width = rng.uniform(0.04, 0.15) * cw
        height = rng.uniform(0.04, 0.15) * ch
        anchor = None
        if rng.random() < config.relation_probability:
            anchor = humans[int(rng.integers(0, n_humans))]
            hx, hy = nodes[anchor].box.center
            hw, hh = nodes[anchor].box.width, nodes[anchor].box.height
            center = (hx + rng.uniform(-0.6, 0.6) * hw, hy + rng.uniform(-0.4, 0.4) * hh)
            box = _box(rng, width, height, config.canvas, center=center)
        else:
            box = _box(rng, width, height, config.canvas)

        object_id = add_node(category, box, rng.uniform(0.5, 1.0))
        objects.append(object_id)
        if anchor is not None:
            predicate = int(rng.integers(0, config.object_predicates))
            soft = _soft_label(rng, predicate, config.num_predicates)
            relations.append(SGEdge(anchor, object_id, predicate, soft[predicate], soft))

    for a in humans:
        for b in humans:
            if a != b and rng.random() < config.human_edge_probability:
                predicate = config.object_predicates + int(rng.integers(0, HUMAN_PREDICATES))
                soft = _soft_label(rng, predicate, config.num_predicates)
                relations.append(SGEdge(a, b, predicate, soft[predicate], soft))

    for a in objects:
        for b in objects:
            if a != b and rng.random() < config.object_edge_probability:
                predicate = int(rng.integers(0, config.object_predicates))
                soft = _soft_label(rng, predicate, config.num_predicates)
                relations.append(SGEdge(a, b, predicate, soft[predicate], soft))

    image_id = f"synth_{index:05d}"
    full = SceneGraph(image_id, cw, ch, nodes, relations)

    # dropout hides relations from the observed graph, labels keep them
    keep = rng.random(len(relations)) >= config.edge_dropout
    observed = attr.evolve(full, edges=[e for e, k in zip(relations, keep) if k])

    pairs: Dict[Tuple[int, int], FrozenSet[int]] = {}
    hois = []
    for h in humans:
        for o in objects:
            labels = rule_label(full, h, o, rules)
            pairs[(h, o)] = labels
            hois.extend(
                GroundTruthHOI(nodes[h].box, nodes[o].box, nodes[o].category_id, c)
                for c in sorted(labels)
            )

    return SyntheticScene(
        graph=observed,
        features=FeatureBundle(image_id, vectors, scores),
        annotations=AnnotationSet(image_id, hois),
        pairs=pairs,
    )


def generate_world(config: WorldConfig, rules: RuleTable) -> List[SyntheticScene]:
    """Generate `config.num_scenes` scenes, deterministic in `config.seed`."""
    rules.check(config.num_objects, config.num_predicates, config.num_interactions)

    root = numpy.random.SeedSequence(config.seed)
    proto_seq, *scene_seqs = root.spawn(config.num_scenes + 1)
    prototypes = numpy.random.default_rng(proto_seq).standard_normal(
        (config.num_objects, config.feature_dim)
    )

    scenes = [
        generate_scene(i, seq, config, rules, prototypes)
        for i, seq in enumerate(scene_seqs)
    ]
    log.debug(f"generated {len(scenes)} scenes (seed {config.seed})")
    return scenes


def _digest(paths) -> str:
    sha = hashlib.sha256()
    for path in paths:
        sha.update(pathlib.Path(path).read_bytes())
    return sha.hexdigest()


def write_world(
    scenes: List[SyntheticScene],
    vocab: Vocabulary,
    rules: RuleTable,
    config: WorldConfig,
    out_dir,
) -> Dict[str, Any]:
    """Write a dataset directory and return its manifest."""
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    dump_vocabulary(vocab, out / "vocabulary.json")
    write_json(out / "rules.json", rules.to_dict(), indent=1)
    write_json(out / "world.json", config.to_dict(), indent=1)

    entries = []
    for scene in scenes:
        image_id = scene.graph.image_id
        scene_dir = out / "scenes" / image_id
        files = {
            "scene_graph": scene_dir / "scene_graph.json",
            "features": scene_dir / "features.json",
            "annotations": scene_dir / "annotations.json",
        }
        dump_scene_graph(scene.graph, files["scene_graph"])
        dump_features(scene.features, files["features"])
        dump_annotations([scene.annotations], files["annotations"])
        entries.append(
            {
                "image_id": image_id,
                "path": f"scenes/{image_id}",
                "pairs": len(scene.pairs),
                "sha256": _digest(files.values()),
            }
        )

    manifest = {
        "num_scenes": len(entries),
        "seed": config.seed,
        "vocabulary": "vocabulary.json",
        "scenes": entries,
    }
    write_json(out / "manifest.json", manifest, indent=1)
    return manifest


def manifest_hash(manifest: Mapping[str, Any]) -> str:
    """Content hash of a manifest document."""
    return hashlib.sha256(json.dumps(manifest, sort_keys=True).encode()).hexdigest()
