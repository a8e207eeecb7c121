"""hoigraph CLI."""

import json
import os
import pathlib
from typing import Dict, List, Optional

import click
import torch
from loguru import logger as log

from hoigraph import profile as profiler
from hoigraph.config import PRESETS, RunConfig, parse_value, resolve_config
from hoigraph.datamodel import (
    AnnotationSet,
    dump_detections,
    load_annotations,
    load_detections,
    load_vocabulary,
    read_json,
    write_json,
)
from hoigraph.dataset import Sample, load_dataset
from hoigraph.errors import (
    AcceptanceError,
    ConfigError,
    DataError,
    HOIGraphError,
)
from hoigraph.evalkit import map_role
from hoigraph.hoihead import GRAD_OPS, GradFixture, grad_check, write_training_log
from hoigraph.hoihead import train as fit
from hoigraph.model import (
    ParameterStore,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
)
from hoigraph.render import report_table, write_scene_dot
from hoigraph.synthworld import (
    RuleTable,
    WorldConfig,
    default_rules,
    default_vocabulary,
    generate_world,
    manifest_hash,
    predicate_only_rules,
    write_world,
)

# thread cap, first variable set wins
THREADS_ENV = ("SG2HOI_THREADS", "HOIGRAPH_THREADS")

# parameters of the gradient-check fixtures, overridable with --set
GRADCHECK_DEFAULTS = {
    "model.d_s": "6",
    "model.d_h": "8",
    "model.d_g": "6",
    "model.d_f": "8",
    "mask.size": "8",
}


def exit_code(err: Exception) -> int:
    """Process exit code of an error: 2 config, 3 data, 4 acceptance."""
    if isinstance(err, AcceptanceError):
        return 4
    if isinstance(err, ConfigError):
        return 2
    return 3


def options_to_dict(ctx, param, value):
    """
    click callback to validate `--opt KEY1=VAL1 --opt KEY2=VAL2` and collect
    in a dictionary like the one below, which is what the CLI function receives.
    If no value or `None` is received then an empty dictionary is returned.

        {
            'KEY1': 'VAL1',
            'KEY2': 'VAL2'
        }

    Note: `==VAL` breaks this as `str.split('=', 1)` is used.
    """
    out: Dict[str, str] = {}
    for pair in value or ():
        if "=" not in pair:
            raise click.BadParameter(f"Invalid syntax for KEY=VAL arg: {pair}")
        k, v = pair.split("=", 1)
        out[k] = v
    return out


class HOIGraphGroup(click.Group):
    """Command group mapping package errors to exit codes."""

    def invoke(self, ctx):
        """Run the command."""
        try:
            return super().invoke(ctx)
        except (HOIGraphError, OSError) as err:
            log.error(f"{type(err).__name__}: {err}")
            click.echo(f"Error: {err}", err=True)
            ctx.exit(exit_code(err))


# The CLI command group.
@click.group(
    cls=HOIGraphGroup, help="Command line interface for the hoigraph Python package."
)
def cli():
    """Execute the main hoigraph command."""
    for name in THREADS_ENV:
        threads = os.environ.get(name)
        if not threads:
            continue
        try:
            count = int(threads)
        except ValueError as err:
            raise ConfigError(f"{name} must be an integer, got {threads!r}") from err
        if count < 1:
            raise ConfigError(f"{name} must be >= 1, got {count}")
        torch.set_num_threads(count)
        break


def _rule_table(rules: str, world: WorldConfig) -> RuleTable:
    if rules == "default":
        return default_rules()
    if rules == "predicate-only":
        return predicate_only_rules(world)
    return RuleTable.from_dict(read_json(rules))


@cli.command("synth-gen")
@click.option("--out", "-o", type=click.Path(file_okay=False), required=True)
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    help="World parameters (JSON).",
)
@click.option("--seed", type=int, help="World seed (default: 7).")
@click.option("--num-scenes", type=int)
@click.option(
    "--rules",
    type=str,
    default="default",
    help="`default`, `predicate-only` or a rules JSON file.",
)
@click.option(
    "--param",
    "-p",
    "world_params",
    metavar="NAME=VALUE",
    multiple=True,
    callback=options_to_dict,
    help="World parameters.",
)
def synth_gen(out, config_path, seed, num_scenes, rules, world_params):
    """Generate a synthetic dataset directory."""
    doc = read_json(config_path) if config_path else {}
    doc.update({k: parse_value(v) for k, v in world_params.items()})
    if seed is not None:
        doc["seed"] = seed
    if num_scenes is not None:
        doc["num_scenes"] = num_scenes

    world = WorldConfig.from_dict(doc)
    rule_table = _rule_table(rules, world)

    @profiler(stage="synth-gen", quiet=True, add_to_return=True)
    def _generate():
        scenes = generate_world(world, rule_table)
        return write_world(scenes, default_vocabulary(world), rule_table, world, out)

    manifest, stats = _generate()
    log.info(json.dumps(stats))
    click.echo(
        json.dumps(
            {
                "num_scenes": manifest["num_scenes"],
                "seed": manifest["seed"],
                "manifest_hash": manifest_hash(manifest),
            }
        )
    )


@cli.command()
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", "-o", type=click.Path(file_okay=False), required=True)
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False),
    help="Run configuration (TOML or JSON).",
)
@click.option("--seed", type=int)
@click.option("--epochs", type=int)
@click.option(
    "--ablation",
    multiple=True,
    type=click.Choice(sorted(PRESETS)),
    help="Ablation preset; repeat to combine.",
)
@click.option(
    "--set",
    "overrides",
    metavar="SECTION.KEY=VALUE",
    multiple=True,
    callback=options_to_dict,
    help="Configuration overrides.",
)
def train(data, out, config_path, seed, epochs, ablation, overrides):
    """Train a model on the train split of a dataset directory."""
    config = resolve_config(config_path, overrides, seed, ablation, epochs=epochs)
    dataset = load_dataset(
        data, config.data.relation_threshold, config.data.embeddings_path
    )
    train_split, _ = dataset.split(config.data.test_scenes)

    params = ParameterStore(config, dataset.vocab)
    records = fit(train_split, config, params)

    out = pathlib.Path(out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, out / "checkpoint.pt")
    write_training_log(records, out / "train_log.jsonl")
    write_json(out / "config.json", config.to_dict(), indent=1)

    click.echo(
        json.dumps(
            {
                "variant": config.variant,
                "scenes": len(train_split),
                "epochs": len(records),
                "final_loss": records[-1].mean_loss if records else None,
            }
        )
    )


@cli.command()
@click.option("--checkpoint", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", "-o", type=click.Path(dir_okay=False), required=True)
@click.option(
    "--split",
    type=click.Choice(["train", "test", "all"]),
    default="test",
    help="Scenes to predict (default: test).",
)
@click.option("--min-score", type=float, help="Keep scores above this value.")
@click.option(
    "--dot",
    "dot_dir",
    type=click.Path(file_okay=False),
    help="Write one DOT file per scene in this directory.",
)
def predict(checkpoint, data, out, split, min_score, dot_dir):
    """Score every human-object pair of a dataset split."""
    payload = read_checkpoint(checkpoint)
    config = RunConfig.from_dict(payload["config"])
    dataset = load_dataset(
        data, config.data.relation_threshold, config.data.embeddings_path
    )
    params = load_checkpoint(checkpoint, dataset.vocab, payload=payload)
    params.eval()

    threshold = config.eval.min_score if min_score is None else min_score
    samples: List[Sample] = list(dataset.select(split, config.data.test_scenes).samples)
    detections = {
        sample.image_id: params.predict_scene(sample, threshold) for sample in samples
    }

    out = pathlib.Path(out)
    dump_detections(detections, out)
    write_json(out.with_suffix(".config.json"), config.to_dict(), indent=1)

    if dot_dir:
        for sample in samples:
            write_scene_dot(
                pathlib.Path(dot_dir) / f"{sample.image_id}.dot",
                sample.graph,
                dataset.vocab,
                detections[sample.image_id],
            )

    click.echo(
        json.dumps(
            {
                "images": len(detections),
                "detections": sum(len(d) for d in detections.values()),
            }
        )
    )


def _ground_truth(path: pathlib.Path):
    """Annotations of a file or of a dataset directory, and its vocabulary if any."""
    if not path.is_dir():
        return load_annotations(path), None

    manifest = read_json(path / "manifest.json")
    vocab = load_vocabulary(path / manifest.get("vocabulary", "vocabulary.json"))
    annotations = []
    for entry in manifest.get("scenes", []):
        scene_file = path / entry["path"] / "annotations.json"
        if scene_file.exists():
            annotations.extend(load_annotations(scene_file))
    return annotations, vocab


def _rare_ids(path: Optional[str], annotations: List[AnnotationSet]) -> List[int]:
    if path:
        doc = read_json(path)
        if isinstance(doc, dict):
            doc = doc.get("rare", doc.get("rare_classes"))
        if not isinstance(doc, list):
            raise DataError(f"{path}: expected a list of class ids")
        return [int(c) for c in doc]

    rare = set()
    for a in annotations:
        rare |= set(a.rare_classes or ())
    return sorted(rare)


@cli.command("eval")
@click.option("--det", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option(
    "--gt",
    type=click.Path(exists=True),
    required=True,
    help="Annotations JSON file or dataset directory.",
)
@click.option(
    "--setting",
    type=click.Choice(["default", "known", "both"]),
    default="both",
    help="Evaluation setting (default: both).",
)
@click.option("--rare", type=click.Path(exists=True, dir_okay=False), help="Rare class ids.")
@click.option("--iou-threshold", type=float, default=0.5)
@click.option("--out", "-o", type=click.Path(dir_okay=False), help="Report JSON.")
@click.option(
    "--min-map",
    type=float,
    help="Fail with exit code 4 when the Full mAP of the first setting is lower.",
)
def evaluate(det, gt, setting, rare, iou_threshold, out, min_map):
    """Role mAP of a detection file against ground truth."""
    detections = load_detections(det)
    annotations, vocab = _ground_truth(pathlib.Path(gt))

    gts = {a.image_id: a for a in annotations}
    if pathlib.Path(gt).is_dir() and detections:
        # a dataset directory is restricted to the images that were predicted
        gts = {image_id: a for image_id, a in gts.items() if image_id in detections}

    settings = ["default", "known"] if setting == "both" else [setting]
    rare_ids = _rare_ids(rare, annotations)
    reports = [
        map_role(
            detections,
            gts,
            s,
            rare_ids,
            num_classes=vocab.num_interactions if vocab else None,
            interaction_objects=vocab.interaction_objects if vocab else None,
            iou_threshold=iou_threshold,
        )
        for s in settings
    ]

    summary = {r.setting: r.to_dict() for r in reports}
    log.info(json.dumps({r.setting: r.to_dict()["map"] for r in reports}))
    if out:
        write_json(out, {"reports": summary}, indent=1)

    click.echo(report_table(reports, vocab.interactions if vocab else None), nl=False)

    if min_map is not None:
        achieved = reports[0].full
        if achieved is None or achieved < min_map:
            raise AcceptanceError(
                f"{reports[0].setting} mAP {achieved} is below {min_map}"
            )


@cli.command()
@click.option(
    "--op",
    "ops",
    multiple=True,
    type=click.Choice(GRAD_OPS + ("all",)),
    default=("all",),
    help="Operation to check; repeat for several (default: all).",
)
@click.option("--fixtures", type=int, default=10, help="Random scenes per op.")
@click.option("--seed", type=int, default=0)
@click.option("--tolerance", type=float, default=1e-4)
@click.option(
    "--set",
    "overrides",
    metavar="SECTION.KEY=VALUE",
    multiple=True,
    callback=options_to_dict,
    help="Configuration overrides.",
)
def gradcheck(ops, fixtures, seed, tolerance, overrides):
    """Compare analytic gradients with central differences."""
    ops = GRAD_OPS if "all" in ops else tuple(ops)
    config = resolve_config(overrides={**GRADCHECK_DEFAULTS, **overrides}, seed=seed)
    if config.model.dtype != "float64":
        raise ConfigError("gradcheck runs in float64 only")

    world = WorldConfig(
        seed=seed,
        num_scenes=fixtures,
        humans_per_scene=(1, 2),
        objects_per_scene=(1, 2),
        feature_dim=config.model.d_f,
    )
    vocab = default_vocabulary(world)
    scenes = generate_world(world, default_rules())
    params = ParameterStore(config, vocab)

    summary = {}
    for op in ops:
        worst = 0.0
        for k, scene in enumerate(scenes):
            sample = Sample(scene.graph, scene.features, scene.annotations)
            result = grad_check(op, GradFixture(sample, config, seed + k), params)
            worst = max(worst, result.max_error)
        summary[op] = worst

    click.echo(json.dumps(summary))
    failed = [op for op, err in summary.items() if not err <= tolerance]
    if failed:
        raise AcceptanceError(
            f"gradient check failed for {failed} (tolerance {tolerance})"
        )
