"""Text renderings: Graphviz DOT dumps of a scene and the evaluation table."""

import pathlib
from typing import Dict, List, Optional, Sequence, Tuple

import jinja2

from hoigraph.datamodel import HOIDetection, SceneGraph, Vocabulary, atomic_write
from hoigraph.evalkit import EvalReport

template_dir = str(pathlib.Path(__file__).parent.joinpath("templates"))

env = jinja2.Environment(
    loader=jinja2.FileSystemLoader(template_dir),
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
)
env.filters["dot"] = lambda value: str(value).replace("\\", "\\\\").replace('"', '\\"')
env.filters["score"] = lambda value: "-" if value is None else f"{value:.4f}"


def detection_edges(
    sg: SceneGraph, detections: Sequence[HOIDetection]
) -> List[Tuple[int, int, int, float]]:
    """Map detections back to (human id, object id, interaction, score) by box."""
    humans = {n.box: n.node_id for n in sg.humans()}
    others: Dict = {}
    for node in sorted(sg.nodes, key=lambda n: n.node_id):
        others.setdefault((node.box, node.category_id), node.node_id)

    edges = []
    for det in detections:
        h = humans.get(det.human_box)
        o = others.get((det.object_box, det.object_category))
        if h is not None and o is not None:
            edges.append((h, o, det.interaction_id, det.score))
    return edges


def scene_dot(
    sg: SceneGraph,
    vocab: Vocabulary,
    detections: Sequence[HOIDetection] = (),
    top_k: Optional[int] = 10,
) -> str:
    """DOT document with the input scene graph and the predicted HOI graph side by side."""
    def node_label(node):
        return f"{vocab.objects[node.category_id]} #{node.node_id} ({node.score:.2f})"

    nodes = [
        {"id": n.node_id, "label": node_label(n), "human": n.is_human}
        for n in sorted(sg.nodes, key=lambda n: n.node_id)
    ]
    edges = [
        {
            "subject": e.subject_id,
            "object": e.object_id,
            "label": f"{vocab.predicates[e.predicate_id]} ({e.confidence:.2f})",
        }
        for e in sg.edges
    ]

    hoi = sorted(detection_edges(sg, detections), key=lambda e: -e[3])
    if top_k is not None:
        hoi = hoi[:top_k]
    involved = {h for h, _, _, _ in hoi} | {o for _, o, _, _ in hoi}
    hoi_nodes = [n for n in nodes if n["id"] in involved]
    hoi_edges = [
        {
            "human": h,
            "object": o,
            "label": f"{vocab.interactions[c]} ({score:.2f})",
            "width": 1 + 3 * score,
        }
        for h, o, c, score in hoi
    ]

    return env.get_template("scene.dot.j2").render(
        image_id=sg.image_id,
        nodes=nodes,
        edges=edges,
        hoi_nodes=hoi_nodes,
        hoi_edges=hoi_edges,
    )


def write_scene_dot(path, sg: SceneGraph, vocab: Vocabulary, detections=(), top_k=10):
    """Write one scene's DOT dump."""
    atomic_write(path, scene_dot(sg, vocab, detections, top_k))


def report_table(
    reports: Sequence[EvalReport], interactions: Optional[Sequence[str]] = None
) -> str:
    """Settings x Full/Rare/Non-Rare table followed by per-class AP rows."""
    reports = list(reports)
    class_ids = sorted({c for report in reports for c in report.ap})
    rare = set().union(*(report.rare_ids for report in reports)) if reports else set()

    classes = [
        {
            "id": c,
            "name": interactions[c] if interactions and c < len(interactions) else str(c),
            "num_gt": reports[0].num_gt.get(c, 0),
            "ap": [report.ap.get(c) for report in reports],
            "rare": c in rare,
        }
        for c in class_ids
    ]
    return env.get_template("report.txt.j2").render(reports=reports, classes=classes)
