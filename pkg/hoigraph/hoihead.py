"""Interaction heads, loss, learning-rate schedule, training loop and gradient check."""

import json
from typing import Callable, Dict, List, Optional, Sequence, Union

import attr
import numpy
import torch
from loguru import logger as log
from torch import nn

from hoigraph import Timer
from hoigraph.datamodel import atomic_write
from hoigraph.errors import ContractError, DataError, DivergenceError
from hoigraph.relmp import RefinedFeatures, run_passing
from hoigraph.sgembed import embed_scene_graph

EPSILON = 1e-7
GRAD_OPS = ("linear", "embed", "passing", "visual", "message", "pipeline")

Scores = Union[float, Sequence[float], numpy.ndarray, torch.Tensor]


class VisualHead(nn.Module):
    """W_v over the gated appearance pair, (K, 2 d_f) plus bias."""

    def __init__(self, d_f: int, num_classes: int):
        """Init weights."""
        super().__init__()
        self.d_f = d_f
        self.linear = nn.Linear(2 * d_f, num_classes)


class MessageHead(nn.Module):
    """W_m over [context; refined human; refined object], plus bias."""

    def __init__(self, context_dim: int, d_f: int, num_classes: int):
        """Init weights."""
        super().__init__()
        self.context_dim = context_dim
        self.d_f = d_f
        self.linear = nn.Linear(context_dim + 2 * d_f, num_classes)


def predict_visual(
    f_s: torch.Tensor, f_h: torch.Tensor, f_o: torch.Tensor, params: VisualHead
) -> torch.Tensor:
    """p_v = sigmoid(W_v (f_s * [f_h; f_o])); rows are pairs when inputs are 2-d."""
    pair = torch.cat([f_h, f_o], dim=-1)
    if f_s.shape != pair.shape or pair.shape[-1] != 2 * params.d_f:
        raise ContractError(
            f"visual branch expects f_s and [f_h; f_o] of width {2 * params.d_f}, "
            f"got {tuple(f_s.shape)} and {tuple(pair.shape)}"
        )
    return torch.sigmoid(params.linear(f_s * pair))


def predict_message(
    g: torch.Tensor, f_h: torch.Tensor, f_o: torch.Tensor, params: MessageHead
) -> torch.Tensor:
    """p_m = sigmoid(W_m [g; f_h; f_o]); a 1-d g is shared by every pair row."""
    if g.shape[-1] != params.context_dim:
        raise ContractError(
            f"context has width {g.shape[-1]}, expected {params.context_dim}"
        )
    if f_h.dim() == 2 and g.dim() == 1:
        g = g.expand(f_h.shape[0], -1)
    x = torch.cat([g, f_h, f_o], dim=-1)
    if x.shape[-1] != params.linear.in_features:
        raise ContractError(
            f"message branch input has width {x.shape[-1]}, "
            f"expected {params.linear.in_features}"
        )
    return torch.sigmoid(params.linear(x))


def pair_prior(s_h: Scores, s_o: Scores, gamma: float = 1.0):
    """lambda = (s_h * s_o) ** gamma."""
    if isinstance(s_h, torch.Tensor) or isinstance(s_o, torch.Tensor):
        return (torch.as_tensor(s_h) * torch.as_tensor(s_o)) ** gamma
    s_h = numpy.asarray(s_h, dtype="float64")
    return (s_h * numpy.asarray(s_o, dtype="float64")) ** gamma


def combine(lam: Scores, p_v: torch.Tensor, p_m: torch.Tensor) -> torch.Tensor:
    """p = lambda * p_v * p_m, one lambda per pair row."""
    p_v = torch.as_tensor(p_v, dtype=torch.float64) if not torch.is_tensor(p_v) else p_v
    p_m = torch.as_tensor(p_m, dtype=p_v.dtype) if not torch.is_tensor(p_m) else p_m
    lam = torch.as_tensor(lam, dtype=p_v.dtype)
    if bool(((lam < 0) | (lam > 1) | torch.isnan(lam)).any()):
        raise ContractError(f"pair prior must lie in [0, 1], got {lam.tolist()}")
    if lam.dim() == 1 and p_v.dim() == 2:
        lam = lam.unsqueeze(-1)
    return lam * p_v * p_m


def bce_loss(p, y, eps: float = EPSILON) -> torch.Tensor:
    """Mean binary cross-entropy with p clamped to [eps, 1 - eps]."""
    p = torch.as_tensor(p, dtype=torch.float64) if not torch.is_tensor(p) else p
    y = torch.as_tensor(y, dtype=p.dtype)
    if p.shape != y.shape:
        raise ContractError(f"scores {tuple(p.shape)} and labels {tuple(y.shape)} differ")
    p = p.clamp(eps, 1 - eps)
    return -(y * torch.log(p) + (1 - y) * torch.log(1 - p)).mean()


def lr_at(epoch: int, lr: float = 0.01, decay: float = 0.9, every: int = 10) -> float:
    """Step schedule: lr * decay ** (epoch // every)."""
    return lr * decay ** (epoch // every)


@attr.s(frozen=True)
class EpochRecord:
    """One line of the training log."""

    epoch: int = attr.ib()
    lr: float = attr.ib()
    mean_loss: float = attr.ib()
    wall_ms: float = attr.ib(eq=False)

    def to_dict(self) -> Dict:
        """JSON record."""
        return attr.asdict(self)


def write_training_log(records: Sequence[EpochRecord], path):
    """JSON lines, one record per epoch."""
    atomic_write(path, "".join(json.dumps(r.to_dict()) + "\n" for r in records))


def train(dataset, config, params) -> List[EpochRecord]:
    """Minibatch SGD on the fused pair scores, in place on `params`.

    `params` is a `hoigraph.model.ParameterStore`. Pairs of one image always
    share a batch entry; the batch loss is the mean over all its pairs and
    classes.
    """
    if not len(dataset):
        raise DataError("cannot train on an empty dataset")

    scenes = [params.prepare(sample, config.data) for sample in dataset.samples]
    scenes = [scene for scene in scenes if scene.pairs]
    if not scenes:
        raise DataError("dataset has no human-object pairs above the score thresholds")

    settings = config.train
    optimizer = torch.optim.SGD(params.parameters(), lr=settings.lr)
    rng = numpy.random.default_rng(config.seed)

    records: List[EpochRecord] = []
    for epoch in range(settings.epochs):
        lr = lr_at(epoch, settings.lr, settings.decay, settings.decay_every)
        for group in optimizer.param_groups:
            group["lr"] = lr

        order = rng.permutation(len(scenes))
        losses = []
        with Timer() as t:
            for b, start in enumerate(range(0, len(order), settings.batch_size)):
                batch = [scenes[k] for k in order[start : start + settings.batch_size]]

                optimizer.zero_grad()
                scores = torch.cat([params.forward_scene(scene).p for scene in batch])
                labels = torch.cat(
                    [torch.as_tensor(scene.labels, dtype=scores.dtype) for scene in batch]
                )
                loss = bce_loss(scores, labels)
                if not torch.isfinite(loss):
                    raise DivergenceError(
                        f"loss is {loss.item()} at epoch {epoch}, batch {b} "
                        f"(images {[scene.image_id for scene in batch]})"
                    )
                loss.backward()
                optimizer.step()
                losses.append(loss.item())
                log.debug(f"epoch {epoch} batch {b} loss {losses[-1]:.6f}")

        record = EpochRecord(
            epoch, lr, float(numpy.mean(losses)), round(t.elapsed * 1000, 3)
        )
        log.info(json.dumps(record.to_dict()))
        records.append(record)

    return records


@attr.s(frozen=True)
class GradFixture:
    """Inputs of a gradient check: one sample of a dataset and a run config."""

    sample = attr.ib()
    config = attr.ib()
    seed: int = attr.ib(default=0)


@attr.s(frozen=True)
class GradCheckResult:
    """Per-tensor relative errors of one gradient check."""

    op: str = attr.ib()
    errors: Dict[str, float] = attr.ib()

    @property
    def max_error(self) -> float:
        """Worst relative error (inf when a gradient is non-finite)."""
        return max(self.errors.values(), default=0.0)

    def passed(self, tolerance: float = 1e-4) -> bool:
        """All tensors within tolerance."""
        return bool(numpy.isfinite(self.max_error)) and self.max_error <= tolerance

    def to_dict(self) -> Dict:
        """JSON record."""
        return {"op": self.op, "max_error": self.max_error, "errors": self.errors}


def _half_square(x: torch.Tensor) -> torch.Tensor:
    return 0.5 * (x**2).sum()


def _objective(op_name: str, fixture: GradFixture, params) -> Callable[[], torch.Tensor]:
    """Scalar function of the parameters exercising one op."""
    sample, config = fixture.sample, fixture.config
    sg, vocab = sample.graph, params.vocab
    rng = numpy.random.default_rng(fixture.seed)
    dtype = params.dtype

    def missing(name):
        raise ContractError(
            f"op '{op_name}' needs the {name} module, disabled in this run"
        )

    if op_name == "linear":
        x = torch.as_tensor(rng.normal(size=2 * params.visual.d_f), dtype=dtype)
        return lambda: _half_square(params.visual.linear(x))

    if op_name == "embed":
        if params.embedding is None:
            missing("scene graph embedding")
        return lambda: _half_square(embed_scene_graph(sg, vocab, params.embedding))

    if op_name == "passing":
        if params.passing is None:
            missing("message passing")
        feats = RefinedFeatures.from_bundle(sample.features, sg, dtype)
        return lambda: _half_square(
            run_passing(sg, feats, vocab, params.passing, config.passing).matrix
        )

    scene = params.prepare(sample, config.data)
    if not scene.pairs:
        raise DataError(f"{sample.image_id}: fixture has no human-object pairs")

    if op_name == "visual":
        return lambda: _half_square(params.forward_scene(scene).p_v)

    if op_name == "message":
        if params.message is None:
            missing("message head")
        return lambda: _half_square(params.forward_scene(scene).p_m)

    if op_name == "pipeline":
        labels = torch.as_tensor(scene.labels, dtype=dtype)
        return lambda: bce_loss(params.forward_scene(scene).p, labels)

    raise ContractError(f"unknown gradcheck op '{op_name}', expected one of {GRAD_OPS}")


def grad_check(
    op_name: str,
    fixture: GradFixture,
    params,
    step: float = 1e-5,
    entries: Optional[int] = 16,
) -> GradCheckResult:
    """Compare autograd with central differences for every reachable tensor.

    At most `entries` coordinates are probed per tensor (all of them when
    None). The relative error of a tensor is
    ||analytic - numeric|| / (||analytic|| + ||numeric||).
    """
    if params.dtype != torch.float64:
        raise ContractError("gradient checks need float64 parameters")

    objective = _objective(op_name, fixture, params)
    rng = numpy.random.default_rng(fixture.seed)

    params.zero_grad(set_to_none=True)
    objective().backward()

    errors: Dict[str, float] = {}
    for name, tensor in params.named_parameters():
        if tensor.grad is None:
            continue
        analytic = tensor.grad.detach().reshape(-1).clone()
        flat = tensor.data.view(-1)
        size = flat.shape[0]
        probe = (
            numpy.arange(size)
            if entries is None or size <= entries
            else numpy.sort(rng.choice(size, entries, replace=False))
        )

        numeric = []
        with torch.no_grad():
            for k in probe:
                saved = flat[k].item()
                flat[k] = saved + step
                upper = objective().item()
                flat[k] = saved - step
                lower = objective().item()
                flat[k] = saved
                numeric.append((upper - lower) / (2 * step))

        a = analytic[torch.as_tensor(probe, dtype=torch.long)].numpy()
        n = numpy.asarray(numeric)
        if not (numpy.isfinite(a).all() and numpy.isfinite(n).all()):
            errors[name] = float("inf")
            continue
        scale = numpy.linalg.norm(a) + numpy.linalg.norm(n)
        errors[name] = float(numpy.linalg.norm(a - n) / scale) if scale > 0 else 0.0

    params.zero_grad(set_to_none=True)
    result = GradCheckResult(op_name, errors)
    log.info(json.dumps(result.to_dict()))
    return result
