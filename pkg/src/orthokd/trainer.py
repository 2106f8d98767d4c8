"""Training loops, the projector/normaliser ablation sweep and the timing bench.

The student's total loss is ``CE + beta * L_distill``.  Teacher features
are computed once (the teacher is frozen), normalised per batch, and the
distillation gradient is injected at the student's feature tap.  With
``beta == 0`` the distillation branch is not evaluated at all, so the run
is exactly plain cross-entropy training of the student.

Random streams (see :data:`orthokd.nets.STREAMS`) are split by consumer,
which keeps the student's data order and initialisation independent of
whether a projector exists.
"""
from __future__ import annotations

import logging
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import linalg
from .config import TrainConfig
from .distill import DiversityBoundReport, diversity_bound, gram_relative_error, l2_distill_loss
from .errors import ConfigError, NumericError, PreconditionError
from .io import format_float, read_features
from .nets import (
    Dataset,
    Mlp,
    accuracy,
    backward,
    forward,
    gen_synthetic,
    init_mlp,
    predict_features,
    softmax_ce,
    stream,
)
from .normalizer import NormalizerKind, normalize, standardize
from .optim import optimizer_step
from .projector import KINDS, Projector, ProjectorSpec, svd_teacher_target

log = logging.getLogger(__name__)

METRICS_HEADER = "epoch,train_ce,distill_loss,test_acc,gram_err,orth_err,wall_ms"
SWEEP_HEADER = "projector,normalizer,seed," + METRICS_HEADER
SWEEP_NORMALIZERS = ("none", "standardize", "whiten")
NAN = float("nan")


@dataclass(frozen=True)
class MetricsRow:
    epoch: int
    train_ce: float
    distill_loss: float
    test_acc: float
    gram_err: float
    orth_err: float
    wall_ms: float

    def csv(self) -> str:
        return ",".join(
            [str(self.epoch)]
            + [
                format_float(v)
                for v in (
                    self.train_ce, self.distill_loss, self.test_acc,
                    self.gram_err, self.orth_err, self.wall_ms,
                )
            ]
        )


def metrics_csv(rows) -> str:
    return METRICS_HEADER + "\n" + "".join(r.csv() + "\n" for r in rows)


# ---------------------------------------------------------------------------
# data


def load_data(cfg: TrainConfig) -> tuple[Dataset, Dataset]:
    """Synthetic clusters, or pre-extracted features when paths are configured."""
    if not cfg.train_features:
        return gen_synthetic(cfg.task)
    if not cfg.test_features:
        raise ConfigError("train_features is set but test_features is not")
    out = []
    for path in (cfg.train_features, cfg.test_features):
        x, y = read_features(path)
        if y is None:
            raise ConfigError(f"{path}: feature dump has no labels")
        if x.shape[1] != cfg.input_dim:
            raise ConfigError(f"{path}: {x.shape[1]} columns but input_dim = {cfg.input_dim}")
        if y.size and y.max() >= cfg.n_classes:
            raise ConfigError(f"{path}: label {y.max()} >= n_classes = {cfg.n_classes}")
        out.append(Dataset(x, y))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# distillation branch


class _Branch:
    """Teacher targets plus projector for one distillation run."""

    def __init__(self, cfg: TrainConfig, teacher: Mlp, train: Dataset, projector_rng):
        self.spec: ProjectorSpec = cfg.projector_spec
        self.norm: NormalizerKind = cfg.normalizer_kind
        self.teacher_train, _ = predict_features(teacher, train.x)
        self.projector = None
        if self.spec.kind != "svd_target":
            self.projector = Projector.init(self.spec, projector_rng)
        self.track_bound = self.norm.variant == "whiten" and self.projector is not None
        self.bounds: list[DiversityBoundReport | None] = []

    def params(self):
        if self.projector is None:
            return {}
        return {f"proj.{k}": v for k, v in self.projector.params.items()}

    def set_params(self, params):
        if self.projector is not None:
            for k in self.projector.params:
                self.projector.params[k] = params[f"proj.{k}"]

    def loss(self, idx, z_s, with_grad=True):
        z_t = normalize(self.teacher_train[idx], self.norm)
        if self.projector is None:
            target = svd_teacher_target(z_t, self.spec.target_rank)
            loss, g = l2_distill_loss(z_s, target)
            return loss, g, {}
        z_p, cache = self.projector.forward(z_s)
        loss, g = l2_distill_loss(z_p, z_t)
        if self.track_bound and with_grad:
            try:
                self.bounds.append(diversity_bound(z_p, z_t))
            except PreconditionError:
                self.bounds.append(None)
        if not with_grad:
            return loss, None, {}
        pgrads, g_s = self.projector.backward(cache, g)
        return loss, g_s, {f"proj.{k}": v for k, v in pgrads.items()}

    def gram_err(self, z_s):
        if self.projector is None:
            return NAN
        z_p, _ = self.projector.forward(z_s)
        return gram_relative_error(z_s, z_p)

    def orth_err(self):
        if self.projector is None or self.spec.kind in ("mlp",):
            return NAN
        return self.projector.orthogonality_error()


# ---------------------------------------------------------------------------
# the loop


def _batches(n, batch_size, order):
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        if len(idx) >= 2:
            yield idx


def _evaluate(net, data: Dataset, test: Dataset, batch_size, branch, epoch):
    """Metrics at the current parameters, without updating anything."""
    ces, dls, sizes = [], [], []
    order = np.arange(len(data))
    for idx in _batches(len(data), batch_size, order):
        feats, logits, _ = forward(net, data.x[idx])
        ce, _ = softmax_ce(logits, data.y[idx])
        ces.append(ce)
        sizes.append(len(idx))
        if branch is not None:
            dl, _, _ = branch.loss(idx, feats, with_grad=False)
            dls.append(dl)
    feats_t, logits_t = predict_features(net, test.x)
    w = np.asarray(sizes, dtype=np.float64)
    return MetricsRow(
        epoch=epoch,
        train_ce=float(np.dot(ces, w) / w.sum()),
        distill_loss=float(np.dot(dls, w) / w.sum()) if branch is not None else NAN,
        test_acc=accuracy(logits_t, test.y),
        gram_err=branch.gram_err(feats_t) if branch is not None else NAN,
        orth_err=branch.orth_err() if branch is not None else NAN,
        wall_ms=NAN,
    )


def _fit(cfg: TrainConfig, net: Mlp, train: Dataset, test: Dataset, epochs: int,
         shuffle_rng, branch: _Branch | None = None) -> list[MetricsRow]:
    beta = cfg.beta
    rows = [_evaluate(net, train, test, cfg.batch_size, branch, 0)]
    params = {**net.params(), **(branch.params() if branch else {})}
    state: dict = {}
    step = 0
    for epoch in range(1, epochs + 1):
        order = shuffle_rng.permutation(len(train))
        ce_sum = dl_sum = 0.0
        count = 0
        n_steps = 0
        t0 = time.perf_counter()
        for idx in _batches(len(train), cfg.batch_size, order):
            feats, logits, cache = forward(net, train.x[idx])
            ce, g_logits = softmax_ce(logits, train.y[idx])
            g_feats = None
            grads = {}
            if branch is not None:
                try:
                    dl, g_s, pgrads = branch.loss(idx, feats)
                except NumericError as exc:
                    raise NumericError(f"{exc} at step {step}") from exc
                g_feats = beta * g_s
                grads.update({k: beta * v for k, v in pgrads.items()})
                dl_sum += dl * len(idx)
                if not math.isfinite(dl):
                    raise NumericError(f"distillation loss is {dl} at step {step}")
            if not math.isfinite(ce):
                raise NumericError(f"cross-entropy is {ce} at step {step}")
            grads.update(backward(net, cache, g_logits, g_feats))
            params, state = optimizer_step(params, grads, state, cfg)
            net.set_params(params)
            if branch is not None:
                branch.set_params(params)
            ce_sum += ce * len(idx)
            count += len(idx)
            n_steps += 1
            step += 1
        wall = (time.perf_counter() - t0) * 1e3 / max(n_steps, 1)
        if epoch % cfg.eval_every and epoch != epochs:
            continue
        feats_t, logits_t = predict_features(net, test.x)
        rows.append(MetricsRow(
            epoch=epoch,
            train_ce=ce_sum / count,
            distill_loss=dl_sum / count if branch is not None else NAN,
            test_acc=accuracy(logits_t, test.y),
            gram_err=branch.gram_err(feats_t) if branch is not None else NAN,
            orth_err=branch.orth_err() if branch is not None else NAN,
            wall_ms=wall if cfg.record_wall_time else NAN,
        ))
        log.debug("epoch %d: %s", epoch, rows[-1])
    return rows


def train_teacher(cfg: TrainConfig, data=None) -> tuple[Mlp, list[MetricsRow]]:
    """Train the teacher MLP with cross-entropy for ``cfg.teacher_epochs``."""
    train, test = data or load_data(cfg)
    net = init_mlp(cfg.teacher_dims, cfg.activation, stream(cfg.seed, "teacher_init"))
    rows = _fit(cfg, net, train, test, cfg.teacher_epochs, stream(cfg.seed, "teacher_shuffle"))
    return net, rows


def train_plain(cfg: TrainConfig, data=None) -> tuple[Mlp, list[MetricsRow]]:
    """Cross-entropy-only training of the student architecture."""
    train, test = data or load_data(cfg)
    net = init_mlp(cfg.student_dims, cfg.activation, stream(cfg.seed, "student_init"))
    rows = _fit(cfg, net, train, test, cfg.epochs, stream(cfg.seed, "student_shuffle"))
    return net, rows


class DistillResult(NamedTuple):
    student: Mlp
    metrics: list[MetricsRow]
    projector: Projector | None
    bounds: list[DiversityBoundReport | None]


def distill(cfg: TrainConfig, teacher: Mlp, data=None) -> DistillResult:
    """Train a student with ``CE + beta * L_distill`` against a frozen teacher."""
    if teacher.feature_dim != cfg.d_t:
        raise ConfigError(f"teacher feature dim {teacher.feature_dim} != d_t = {cfg.d_t}")
    if teacher.layer_dims[0] != cfg.input_dim:
        raise ConfigError(f"teacher input dim {teacher.layer_dims[0]} != input_dim = {cfg.input_dim}")
    train, test = data or load_data(cfg)
    net = init_mlp(cfg.student_dims, cfg.activation, stream(cfg.seed, "student_init"))
    branch = None
    if cfg.beta > 0:
        branch = _Branch(cfg, teacher, train, stream(cfg.seed, "projector_init"))
    rows = _fit(cfg, net, train, test, cfg.epochs, stream(cfg.seed, "student_shuffle"), branch)
    return DistillResult(
        net, rows, branch.projector if branch else None, branch.bounds if branch else []
    )


def bound_csv_rows(bounds) -> list[str]:
    out = []
    for rep in bounds:
        if rep is None:
            out.append("nan,nan,nan,nan,0,precondition_failed")
        else:
            out.append(rep.csv_row())
    return out


# ---------------------------------------------------------------------------
# sweep


@dataclass(frozen=True)
class SweepRow:
    projector: str
    normalizer: str
    seed: int
    metrics: MetricsRow

    def csv(self) -> str:
        return f"{self.projector},{self.normalizer},{self.seed},{self.metrics.csv()}"


def _sweep_cell(args):
    cfg, teacher, kind, norm, seed = args
    cell = cfg.replace(projector=kind, normalizer=norm, seed=seed)
    result = distill(cell, teacher)
    return [SweepRow(kind, norm, seed, r) for r in result.metrics]


def sweep_workers() -> int:
    try:
        return max(1, int(os.environ.get("VKD_THREADS", "1")))
    except ValueError:
        return 1


def ablation_sweep(base: TrainConfig, projectors=KINDS, normalizers=SWEEP_NORMALIZERS,
                   seeds=None, workers: int | None = None) -> list[SweepRow]:
    """Every (projector, normaliser, seed) cell as one distillation run.

    One teacher is trained per seed and shared across that seed's cells.
    Rows come back in cell order whatever the worker count.
    """
    seeds = tuple(seeds) if seeds is not None else base.seeds
    workers = workers or sweep_workers()
    jobs = []
    for seed in seeds:
        teacher, _ = train_teacher(base.replace(seed=seed))
        for kind in projectors:
            for norm in normalizers:
                jobs.append((base, teacher, kind, norm, seed))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, jobs))
    else:
        results = [_sweep_cell(job) for job in jobs]
    return [row for cell in results for row in cell]


# ---------------------------------------------------------------------------
# timing


@dataclass(frozen=True)
class BenchRow:
    kind: str
    d_s: int
    d_t: int
    batch: int
    median_ms: float
    flops: int
    ratio_to_linear: float = NAN

    HEADER = "kind,d_s,d_t,batch,median_ms,flops,ratio_to_linear"

    def csv(self) -> str:
        return (f"{self.kind},{self.d_s},{self.d_t},{self.batch},"
                f"{self.median_ms:.4f},{self.flops},{self.ratio_to_linear:.4f}")


BENCH_KINDS = ("orthogonal", "cayley", "linear", "mlp", "ensemble", "svd_target")
WARMUP = 3


def bench_projectors(d_s: int, d_t: int, batch: int, iters: int = 10,
                     kinds=BENCH_KINDS, seed: int = 0) -> list[BenchRow]:
    """Median time of one forward+backward through each projector.

    The first :data:`WARMUP` iterations are discarded.  ``flops`` counts the
    dense-kernel work of one iteration and depends only on shapes and seed.
    """
    if iters < WARMUP + 7:
        raise ConfigError(f"iters must be >= {WARMUP + 7}")
    rng = np.random.default_rng(seed)
    z_s = rng.standard_normal((batch, d_s))
    z_t = standardize(rng.standard_normal((batch, d_t)))
    rows = []
    for kind in kinds:
        if kind == "cayley":
            spec = ProjectorSpec("orthogonal", d_s, d_t, method="cayley")
        else:
            spec = ProjectorSpec(kind, d_s, d_t)
        proj = None if kind == "svd_target" else Projector.init(spec, np.random.default_rng(seed))
        times, flops = [], 0
        for it in range(iters):
            with linalg.count_flops() as fc:
                t0 = time.perf_counter()
                if proj is None:
                    target = svd_teacher_target(z_t, min(d_s, batch, d_t))
                    l2_distill_loss(z_s[:, :target.shape[1]], target)
                else:
                    z_p, cache = proj.forward(z_s)
                    _, g = l2_distill_loss(z_p, z_t)
                    proj.backward(cache, g)
                dt = time.perf_counter() - t0
            flops = fc.total
            if it >= WARMUP:
                times.append(dt * 1e3)
        rows.append(BenchRow(kind, d_s, d_t, batch, statistics.median(times), flops))
    lin = next((r.median_ms for r in rows if r.kind == "linear"), None)
    if lin:
        rows = [BenchRow(r.kind, r.d_s, r.d_t, r.batch, r.median_ms, r.flops, r.median_ms / lin)
                for r in rows]
    return rows


# ---------------------------------------------------------------------------
# report-only diagnostic


def perturbation_probe(teacher: Mlp, student: Mlp, projector: Projector, x, delta: float = 0.1,
                       n: int = 16, seed: int = 0) -> dict[str, float]:
    """Variance of the distillation loss under random input noise of size ``delta``.

    Reported for an unnormalised and a standardised teacher target.  No
    threshold is attached to the numbers.
    """
    rng = stream(seed, "probe")
    perturbed = [x + delta * rng.standard_normal(x.shape) for _ in range(n)]
    out = {}
    for variant in ("none", "standardize"):
        kind = NormalizerKind(variant)
        losses = []
        for xp in perturbed:
            z_t = normalize(forward(teacher, xp)[0], kind)
            z_p, _ = projector.forward(forward(student, xp)[0])
            losses.append(l2_distill_loss(z_p, z_t)[0])
        out[variant] = float(np.var(losses))
    return out
