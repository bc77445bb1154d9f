"""Desk-scale self-training loop with the four noise-analysis variants."""
import csv
import dataclasses
import enum
from dataclasses import dataclass, field

import numpy as np

from .compositor import (
    FROM_BANK,
    FROM_SOURCE,
    FROM_TARGET,
    build_composite,
    ecap_dacs_mix,
    empty_canvas,
)
from .core import argmax_decode, confusion_matrix, miou, one_hot
from .memory_bank import BankSet, extract_class_samples, insert
from .model import PixelClassifier, forward, loss_and_grad
from .pseudo_label import ema_update, generate_pseudo_label
from .sampler import draw, gate_probability, mec
from .synthetic import gen_domain_pair

CSV_COLUMNS = ("iteration", "loss", "mec", "gate_probability", "target_accuracy",
               "loss_noise_ratio")


class Variant(enum.Enum):
    BASELINE = "baseline"
    ECAP = "ecap"
    DENOISE = "denoise"
    ORACLE = "oracle"


class TrainingAborted(RuntimeError):
    pass


@dataclass
class TrainState:
    student: PixelClassifier
    teacher: np.ndarray
    velocity: np.ndarray
    banks: BankSet
    rng: np.random.Generator  # data order and DACS masks
    ecap_rng: np.random.Generator  # sampler and composite; never touches ``rng``
    data: object
    iteration: int = 0


@dataclass
class StepRecord:
    iteration: int
    loss: float
    mec: float
    gate_probability: float
    target_accuracy: float
    loss_noise_ratio: float
    # (class, origin) -> [correct, total] pixel counts over target-origin pixels
    split_counts: np.ndarray = None
    mixed: object = None
    canvas: object = None


@dataclass
class NoiseMetrics:
    target_accuracy: float
    target_loss_noise_ratio: float
    miou: float
    per_class_iou: list
    bank_accuracy: list  # per ground-truth class, nan without bank pixels
    image_accuracy: list

    def report(self):
        lines = [
            f"mIoU                     {self.miou:6.2f}",
            f"target accuracy          {self.target_accuracy:6.2f}",
            f"target loss noise ratio  {self.target_loss_noise_ratio:6.2f}",
            "per-class IoU            " + " ".join(f"{v:6.2f}" for v in self.per_class_iou),
            "bank pixel accuracy      " + " ".join(f"{v:6.2f}" for v in self.bank_accuracy),
            "image pixel accuracy     " + " ".join(f"{v:6.2f}" for v in self.image_accuracy),
        ]
        return "\n".join(lines) + "\n"


@dataclass
class ExperimentResult:
    metrics: NoiseMetrics
    series: list = field(default_factory=list)  # StepRecord per iteration
    state: TrainState = None
    samples: list = field(default_factory=list)  # (iteration, MixedSample, CompositeCanvas)

    def series_array(self):
        return np.array([[getattr(r, c) for c in CSV_COLUMNS] for r in self.series])


def init_state(cfg, data=None):
    if data is None:
        data = gen_domain_pair(cfg.scene(), cfg.seed)
    ss = np.random.SeedSequence(cfg.seed)
    init_seq, main_seq, ecap_seq = ss.spawn(3)
    student = PixelClassifier.init(cfg.num_classes, np.random.default_rng(init_seq),
                                   hidden=cfg.hidden, window=cfg.window, scale=cfg.init_scale)
    return TrainState(
        student=student,
        teacher=student.params.copy(),
        velocity=np.zeros_like(student.params),
        banks=BankSet(cfg.num_classes, cfg.enabled_flags()),
        rng=np.random.default_rng(main_seq),
        ecap_rng=np.random.default_rng(ecap_seq),
        data=data,
    )


def _as_variant(v):
    return v if isinstance(v, Variant) else Variant(v)


def train_step(state, cfg, variant):
    """One self-training iteration; mutates and returns ``state``.

    Also returns the StepRecord with this iteration's noise statistics, the
    mixed sample and the composite canvas.
    """
    variant = _as_variant(variant)
    data = state.data
    C = cfg.num_classes
    canvas_size = (cfg.height, cfg.width)
    i_s = int(state.rng.integers(len(data.source_images)))
    i_t = int(state.rng.integers(len(data.target_images)))
    xs, ys_cls = data.source_images[i_s], data.source_labels[i_s]
    xt, yt_cls = data.target_images[i_t], data.target_truth[i_t]
    ys = one_hot(ys_cls, C)

    teacher_model = state.student.with_params(state.teacher)
    teacher = generate_pseudo_label(forward(teacher_model, xt))
    if variant is Variant.ORACLE:
        teacher = dataclasses.replace(teacher, pseudo_label=one_hot(yt_cls, C))

    mec_value = gate = 0.0
    canvas = empty_canvas(canvas_size, C)
    if variant is Variant.ECAP:
        scfg = cfg.sampler()
        mec_value = mec(state.banks, scfg.n_top, scfg.mec_excludes_disabled)
        gate = gate_probability(mec_value, scfg)
        d = draw(state.banks, scfg, state.ecap_rng, gate=gate)
        canvas = build_composite(d, state.ecap_rng, canvas_size, cfg.transform(), C)
        insert(state.banks, extract_class_samples(xt, teacher, i_t, truth=yt_cls), i_t)

    mixed = ecap_dacs_mix(xs, ys, xt, teacher, canvas, state.rng, tau=cfg.tau)
    prov = mixed.provenance
    truth = np.where(prov == FROM_SOURCE, ys_cls,
                     np.where(prov == FROM_BANK, canvas.truth, yt_cls))
    correct = argmax_decode(mixed.label) == truth
    target_origin = prov != FROM_SOURCE
    weight = mixed.weight
    if variant is Variant.DENOISE:
        weight = np.where(target_origin & ~correct, 0.0, weight)
        mixed = dataclasses.replace(mixed, weight=weight)

    loss_s, grad_s, _, _ = loss_and_grad(state.student, xs, ys, np.ones(ys_cls.shape))
    loss_m, grad_m, pix_loss, _ = loss_and_grad(state.student, mixed.image, mixed.label, weight)
    loss = loss_s + loss_m
    if not np.isfinite(loss):
        raise TrainingAborted(
            f"non-finite loss at iteration {state.iteration}: source={loss_s} mixed={loss_m}, "
            f"max |param|={np.max(np.abs(state.student.params))}")

    # losses are pixel sums; dividing by the pixel count keeps lr independent of image size
    n_pix = cfg.height * cfg.width
    state.velocity = cfg.momentum * state.velocity + (grad_s + grad_m) / n_pix
    state.student = state.student.with_params(state.student.params - cfg.lr * state.velocity)
    state.teacher = ema_update(state.teacher, state.student.params, cfg.ema())
    state.iteration += 1

    n_target = np.count_nonzero(target_origin)
    acc = 100.0 * np.count_nonzero(correct & target_origin) / n_target if n_target else 100.0
    t_loss = pix_loss[target_origin]
    bad = float(t_loss[~correct[target_origin]].sum())
    total = bad + float(t_loss[correct[target_origin]].sum())
    noise = 100.0 * bad / total if total > 0 else 0.0

    split = np.zeros((C, 2, 2), dtype=np.int64)  # class, (bank, image), (correct, total)
    for origin, k in ((FROM_BANK, 0), (FROM_TARGET, 1)):
        sel = prov == origin
        t = truth[sel]
        split[:, k, 1] = np.bincount(t, minlength=C)[:C]
        split[:, k, 0] = np.bincount(t[correct[sel]], minlength=C)[:C]

    rec = StepRecord(state.iteration, loss, mec_value, gate, acc, noise, split, mixed, canvas)
    return state, rec


def evaluate(state, images, truth, num_classes, use_teacher=True):
    params = state.teacher if use_teacher else state.student.params
    model = state.student.with_params(params)
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    for x, y in zip(images, truth):
        cm += confusion_matrix(argmax_decode(forward(model, x)), y, num_classes)
    return miou(cm)


def _pct(correct, total):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, 100.0 * correct / np.maximum(total, 1), np.nan)


def run_experiment(cfg, variant=None, seed=None, data=None, keep_samples=0, callback=None):
    """Train for ``cfg.iterations`` steps and summarise the noise statistics.

    ``callback(state, record)`` runs after every step while the record still
    holds its mixed sample and canvas; the last ``keep_samples`` of those are
    returned for export.
    """
    if variant is not None:
        cfg = cfg.update(variant=_as_variant(variant).value)
    if seed is not None:
        cfg = cfg.update(seed=seed)
    variant = Variant(cfg.variant)
    state = init_state(cfg, data)
    series = []
    samples = []
    split = np.zeros((cfg.num_classes, 2, 2), dtype=np.int64)
    for it in range(cfg.iterations):
        state, rec = train_step(state, cfg, variant)
        if callback is not None:
            callback(state, rec)
        if it >= cfg.iterations - keep_samples:
            samples.append((rec.iteration, rec.mixed, rec.canvas))
        if it >= cfg.iterations - cfg.split_window:
            split += rec.split_counts
        rec.split_counts = rec.mixed = rec.canvas = None
        series.append(rec)

    tail = series[-cfg.final_k:]
    iou, mean = evaluate(state, state.data.eval_images, state.data.eval_truth, cfg.num_classes)
    metrics = NoiseMetrics(
        target_accuracy=float(np.mean([r.target_accuracy for r in tail])),
        target_loss_noise_ratio=float(np.mean([r.loss_noise_ratio for r in tail])),
        miou=100.0 * mean,
        per_class_iou=list(100.0 * iou),
        bank_accuracy=list(_pct(split[:, 0, 0], split[:, 0, 1])),
        image_accuracy=list(_pct(split[:, 1, 0], split[:, 1, 1])),
    )
    return ExperimentResult(metrics, series, state, samples)


def write_metrics_csv(series, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for r in series:
            w.writerow([r.iteration] + [repr(float(getattr(r, c))) for c in CSV_COLUMNS[1:]])


def read_metrics_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {rows[0]}")
    return np.array([[float(v) for v in row] for row in rows[1:]])
