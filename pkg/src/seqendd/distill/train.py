"""Training loops for ensemble members and the three kinds of student."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, replace
from typing import Callable, Literal

import numpy as np

from ..errors import ContractError, TrainingDiverged
from ..nnet import model as nm
from ..nnet.optim import AdamState, optimizer_step
from . import losses
from .targets import TeacherCache

log = logging.getLogger(__name__)

Objective = Literal["nll", "kl"]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 8
    batch_size: int = 64
    learning_rate: float = 1e-3
    temperature_start: float = 10.0
    temperature_end: float = 3.0
    anneal_fraction: float = 0.5
    seed: int = 0
    temper_kd: bool = True

    def __post_init__(self):
        if not self.temperature_start >= self.temperature_end >= 1.0:
            raise ContractError("need temperature_start >= temperature_end >= 1")
        if not 0.0 < self.anneal_fraction <= 1.0:
            raise ContractError("anneal_fraction must lie in (0, 1]")
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractError("epochs and batch_size must be positive")

    def to_dict(self):
        return asdict(self)


def anneal_temperature(epoch: int, config: TrainConfig) -> float:
    """Linear from temperature_start at epoch 0 to temperature_end at anneal_fraction * epochs."""
    if epoch < 0:
        raise ContractError("epoch must be nonnegative")
    span = config.anneal_fraction * config.epochs
    frac = min(1.0, epoch / span)
    return config.temperature_start + (config.temperature_end - config.temperature_start) * frac


def make_batches(lengths, batch_size, rng, bucket=50):
    """Shuffled batches of similar-length sentences."""
    order = rng.permutation(len(lengths))
    batches = []
    span = batch_size * bucket
    for start in range(0, len(order), span):
        chunk = order[start : start + span]
        chunk = chunk[np.argsort([lengths[i] for i in chunk], kind="stable")]
        batches += [chunk[i : i + batch_size] for i in range(0, len(chunk), batch_size)]
    return [batches[i] for i in rng.permutation(len(batches))]


class EpochLog:
    """Writes one tab-separated line per epoch: epoch, temperature, mean loss, seconds."""

    def __init__(self, sink=None):
        self.sink = sink
        self.rows: list[tuple[int, float, float, float]] = []

    def add(self, epoch, temperature, loss, seconds):
        self.rows.append((epoch, temperature, loss, seconds))
        line = f"{epoch}\t{temperature:.4f}\t{loss:.6f}\t{seconds:.2f}"
        log.info("epoch %s", line)
        if self.sink is not None:
            self.sink.write(line + "\n")
            self.sink.flush()


def _train(model, corpus, config: TrainConfig, batch_loss: Callable, epoch_log: EpochLog | None, tempered=True):
    if not corpus:
        raise ContractError("empty training corpus")
    epoch_log = epoch_log or EpochLog()
    state = AdamState(lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    lengths = [len(p.reference) for p in corpus]
    last_good = model.copy()
    for epoch in range(config.epochs):
        temperature = anneal_temperature(epoch, config) if tempered else 1.0
        start = time.perf_counter()
        total, count = 0.0, 0
        for idx in make_batches(lengths, config.batch_size, rng):
            src_ids, src_mask = nm.source_batch([corpus[i].source for i in idx])
            tgt_in, tgt_out, tgt_mask = nm.target_batch([corpus[i].reference for i in idx])
            logits = model.teacher_forced_logits(src_ids, src_mask, tgt_in)
            loss = batch_loss(logits, idx, tgt_out, tgt_mask, temperature)
            value = float(loss.value)
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}", last_good=last_good)
            optimizer_step(model, nm.backward(loss, model), state)
            n = int(tgt_mask.sum())
            total += value * n
            count += n
        epoch_log.add(epoch, temperature, total / count, time.perf_counter() - start)
        last_good = model.copy()
    return model


def train_member(corpus, model_config: nm.ModelConfig, config: TrainConfig, seed: int, epoch_log=None) -> nm.SeqModel:
    """Token-level cross-entropy training of one ensemble member."""
    if model_config.head_mode != "softmax":
        raise ContractError("ensemble members use the softmax head")
    model = nm.init_model(replace(model_config, seed=seed))

    def batch_loss(logits, idx, tgt_out, mask, temperature):
        return losses.cross_entropy_op(logits, tgt_out, mask)

    return _train(model, corpus, replace(config, seed=seed), batch_loss, epoch_log, tempered=False)


def train_distilled(ensemble, corpus, model_config: nm.ModelConfig, config: TrainConfig,
                    cache: TeacherCache | None = None, epoch_log=None) -> nm.SeqModel:
    """Token-level KD: match the (tempered) ensemble mean categorical."""
    if model_config.head_mode != "softmax":
        raise ContractError("the distilled student uses the softmax head")
    cache = cache or TeacherCache(ensemble, corpus)
    model = nm.init_model(model_config)

    def batch_loss(logits, idx, tgt_out, mask, temperature):
        target = cache.tempered(idx, temperature).mean(axis=2)
        return losses.kd_loss_op(logits, target, mask)

    return _train(model, corpus, config, batch_loss, epoch_log, tempered=config.temper_kd)


def train_distribution_distilled(ensemble, corpus, model_config: nm.ModelConfig, config: TrainConfig,
                                 objective: Objective = "kl", cache: TeacherCache | None = None,
                                 epoch_log=None) -> nm.SeqModel:
    """Dirichlet student trained by NLL of member categoricals or KL to per-token fits."""
    if model_config.head_mode != "concentration":
        raise ContractError("the distribution-distilled student uses the concentration head")
    if objective not in ("nll", "kl"):
        raise ContractError(f"unknown objective {objective!r}")
    cache = cache or TeacherCache(ensemble, corpus)
    model = nm.init_model(model_config)

    if objective == "nll":
        def batch_loss(logits, idx, tgt_out, mask, temperature):
            targets = np.maximum(cache.tempered(idx, temperature), 1e-10)
            targets /= targets.sum(axis=-1, keepdims=True)
            return losses.dirichlet_nll_op(logits, np.log(targets).mean(axis=2), mask)
    else:
        def batch_loss(logits, idx, tgt_out, mask, temperature):
            return losses.dirichlet_kl_op(logits, cache.fitted(idx, temperature), mask)

    return _train(model, corpus, config, batch_loss, epoch_log)
