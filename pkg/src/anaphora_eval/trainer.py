"""Pairwise ranking training loop: margin hinge loss, Adam updates with
global-norm clipping, early stopping on dev accuracy, and evaluation."""

from __future__ import annotations

import copy
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as model_mod
from .corpus import make_sentence
from .errors import DataError
from .miner import RankingPair
from .model import ModelConfig, Parameter, SideInput, UnscorableInputError, Vocab

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 20
    patience: int = 5
    seed: int = 0
    clip_norm: float = 5.0

    def __post_init__(self) -> None:
        if min(self.lr, self.batch_size, self.max_epochs, self.patience, self.clip_norm) <= 0:
            raise ValueError("all training hyperparameters must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")


def hinge_loss(y_r: float, y_s: float, margin: float) -> float:
    """max(0, margin - y_r + y_s); zero exactly when y_r >= y_s + margin.

    Grouped as margin - (y_r - y_s) so equal scores yield the margin itself,
    not a value one rounding step away."""
    if margin <= 0:
        raise ValueError("margin must be positive")
    return max(0.0, margin - (y_r - y_s))


class Adam:
    """Adaptive-moment optimizer over named Parameter dicts."""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Parameter]) -> None:
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1 ** self.t
        bc2 = 1.0 - cfg.beta2 ** self.t
        for name, p in params.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(p.value)
                self.v[name] = np.zeros_like(p.value)
            g = p.grad
            self.m[name] = cfg.beta1 * self.m[name] + (1 - cfg.beta1) * g
            self.v[name] = cfg.beta2 * self.v[name] + (1 - cfg.beta2) * g * g
            mhat = self.m[name] / bc1
            vhat = self.v[name] / bc2
            p.value -= cfg.lr * mhat / (np.sqrt(vhat) + cfg.adam_eps)


def clip_gradients(params: dict[str, Parameter], max_norm: float) -> float:
    """Scale all grads so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params.values():
        total += float((p.grad * p.grad).sum())
    norm = np.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params.values():
            p.grad *= scale
    return float(norm)


def prepare_side_inputs(pair: RankingPair, config: ModelConfig) -> tuple[SideInput, SideInput]:
    """Tokenize a ranking pair and assemble both sides per the context mode.

    NC drops contexts, RC keeps each side's own, CRC gives the reference
    context to both sides.
    """
    ref_sent = make_sentence("r", 0, pair.ref)
    sys_sent = make_sentence("s", 0, pair.sys)
    if config.context_mode == "NC":
        ref_ctx: list = []
        sys_ctx: list = []
    elif config.context_mode == "RC":
        ref_ctx = [make_sentence("r", i, t) for i, t in enumerate(pair.ref_context)]
        sys_ctx = [make_sentence("s", i, t) for i, t in enumerate(pair.sys_context)]
    else:  # CRC
        ref_ctx = [make_sentence("r", i, t) for i, t in enumerate(pair.ref_context)]
        sys_ctx = [make_sentence("r", i, t) for i, t in enumerate(pair.ref_context)]
    return ((ref_ctx, ref_sent, list(pair.ref_pronouns)),
            (sys_ctx, sys_sent, list(pair.sys_pronouns)))


def _prepare_all(pairs, config: ModelConfig):
    prepared = []
    skipped = 0
    for pair in pairs:
        if not pair.ref_pronouns or not pair.sys_pronouns:
            skipped += 1
            continue
        prepared.append((pair, prepare_side_inputs(pair, config)))
    if skipped:
        logger.warning("skipped %d pairs without pronoun slots", skipped)
    return prepared


def _vocab_tokens(prepared):
    for _, (r_side, s_side) in prepared:
        for ctx, sent, _ in (r_side, s_side):
            for s in ctx:
                for t in s.tokens:
                    yield t.lower
            for t in sent.tokens:
                yield t.lower


@dataclass
class PairStat:
    n: int = 0
    correct: int = 0

    @property
    def accuracy(self) -> float:
        return self.correct / self.n if self.n else 0.0


@dataclass
class EvalReport:
    accuracy: float
    n: int
    tie_count: int
    per_pair: dict = field(default_factory=dict)  # (ref_form, sys_form) -> PairStat


def evaluate_accuracy(params: dict[str, Parameter], vocab: Vocab, config: ModelConfig,
                      pairs, tie_policy: str = "count-as-wrong") -> EvalReport:
    """Fraction of pairs scored y_r > y_s.  Ties count as wrong and are
    reported separately; the per-pair table groups by mismatch form pair."""
    if tie_policy != "count-as-wrong":
        raise ValueError(f"unknown tie policy: {tie_policy!r}")
    prepared = _prepare_all(pairs, config)
    correct = 0
    ties = 0
    per_pair: dict[tuple[str, str], PairStat] = {}
    for pair, (r_side, s_side) in prepared:
        y_r, y_s = model_mod.score_pair(r_side, s_side, config, params, vocab)
        win = y_r > y_s
        if y_r == y_s:
            ties += 1
        if win:
            correct += 1
        for forms in pair.mismatch_forms:
            stat = per_pair.setdefault(tuple(forms), PairStat())
            stat.n += 1
            stat.correct += int(win)
    n = len(prepared)
    return EvalReport(accuracy=correct / n if n else 0.0, n=n, tie_count=ties,
                      per_pair=per_pair)


def train(train_pairs, dev_pairs, tcfg: TrainConfig, d: int, h: int,
          context_mode: str = "NC", encoder: str = "bilstm", M: int = 12,
          margin: float = 0.1, pretrained: dict | None = None,
          min_freq: int = 1, log_path: str | Path | None = None,
          timing: bool = False):
    """Train the ranking model; returns (params, vocab, config, log).

    Epoch shuffling is seeded, early stopping watches dev accuracy with the
    configured patience, and the best-dev parameters are returned.  Log
    records carry (epoch, mean_loss, dev_accuracy, wall_time); wall_time is
    0.0 unless ``timing`` is set, keeping logs byte-identical under a fixed
    seed.
    """
    if not train_pairs or not dev_pairs:
        raise DataError("training and dev splits must be non-empty")
    probe_cfg = ModelConfig(d=d, h=h, v=1, M=M, context_mode=context_mode,
                            encoder=encoder, margin=margin)
    prepared_train = _prepare_all(train_pairs, probe_cfg)
    if not prepared_train:
        raise DataError("no scorable training pairs")
    vocab = model_mod.build_vocab(_vocab_tokens(prepared_train), min_freq=min_freq)
    config = ModelConfig(d=d, h=h, v=len(vocab), M=M, context_mode=context_mode,
                         encoder=encoder, margin=margin)
    rng = np.random.default_rng(tcfg.seed)
    params = model_mod.init_parameters(config, rng, pretrained=pretrained, vocab=vocab)
    optimizer = Adam(tcfg)

    best_params = copy.deepcopy(params)
    best_acc = -1.0
    best_epoch = -1
    log: list[dict] = []
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(tcfg.max_epochs):
            t0 = time.perf_counter()
            order = rng.permutation(len(prepared_train))
            total_loss = 0.0
            for start in range(0, len(order), tcfg.batch_size):
                batch = order[start:start + tcfg.batch_size]
                model_mod.zero_grads(params)
                for idx in batch:
                    pair, (r_side, s_side) = prepared_train[idx]
                    y_r, _, cache_r = model_mod.score_side(r_side, config, params, vocab,
                                                           with_cache=True)
                    y_s, _, cache_s = model_mod.score_side(s_side, config, params, vocab,
                                                           with_cache=True)
                    loss = hinge_loss(y_r, y_s, margin)
                    if not np.isfinite(loss):
                        raise DataError(f"non-finite loss at epoch {epoch} on pair {pair.id!r}: "
                                        f"y_r={y_r!r} y_s={y_s!r}")
                    total_loss += loss
                    if loss > 0.0:
                        model_mod.backward_side(-1.0, cache_r, config, params)
                        model_mod.backward_side(+1.0, cache_s, config, params)
                clip_gradients(params, tcfg.clip_norm)
                optimizer.step(params)
            mean_loss = total_loss / len(prepared_train)
            dev_report = evaluate_accuracy(params, vocab, config, dev_pairs)
            wall = time.perf_counter() - t0
            record = {"epoch": epoch, "mean_loss": mean_loss,
                      "dev_accuracy": dev_report.accuracy,
                      "wall_time": wall if timing else 0.0}
            log.append(record)
            if log_fh:
                log_fh.write(json.dumps(record) + "\n")
                log_fh.flush()
            logger.info("epoch %d: mean loss %.4f, dev accuracy %.4f (%.1fs)",
                        epoch, mean_loss, dev_report.accuracy, wall)
            if dev_report.accuracy > best_acc:
                best_acc = dev_report.accuracy
                best_epoch = epoch
                best_params = copy.deepcopy(params)
            elif epoch - best_epoch >= tcfg.patience:
                logger.info("early stop at epoch %d (best dev %.4f at epoch %d)",
                            epoch, best_acc, best_epoch)
                break
    finally:
        if log_fh:
            log_fh.close()
    return best_params, vocab, config, log
