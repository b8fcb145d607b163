"""Sentence relevance filter.

A lightweight three-part model: each sentence is summarized as the mean of
its token embeddings, a linear mixer combines the sentence vector with its
neighbors inside a +/-window, and a logistic head scores whether the
sentence belongs to the assistant's task scope (task content or emotion
directed at the task). Sentences scoring >= 0.5 are kept.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .nn import SGD, ParamTensor, apply_update, read_tensors, sigmoid, write_tensors
from .text import Sentence, Vocabulary


@dataclass
class ScopedMessage:
    """A message's sentences together with the filter's keep decisions."""

    sentences: list[Sentence]
    keep_mask: list[bool]

    def __post_init__(self) -> None:
        if len(self.sentences) != len(self.keep_mask):
            raise ValueError("keep_mask length must equal sentence count")

    @property
    def kept_sentences(self) -> list[Sentence]:
        return [s for s, keep in zip(self.sentences, self.keep_mask) if keep]

    @property
    def kept_texts(self) -> list[str]:
        return [s.text for s in self.kept_sentences]


class ScopeModel:
    """Embedding table + windowed context mixer + per-sentence logistic head."""

    def __init__(
        self,
        vocab: Vocabulary,
        dim: int = 32,
        window: int = 1,
        seed: int = 0,
        init_scale: float = 0.1,
    ):
        if window < 0:
            raise ValueError("window must be non-negative")
        rng = np.random.default_rng(seed)
        self.vocab = vocab
        self.dim = dim
        self.window = window
        self.embed = ParamTensor("embed", rng.normal(0.0, init_scale, (vocab.size, dim)))
        self.mix = ParamTensor("mix", rng.normal(0.0, init_scale, (2 * window + 1, dim)))
        self.bias = ParamTensor("bias", np.zeros(1, dtype=np.float32))

    def params(self) -> list[ParamTensor]:
        return [self.embed, self.mix, self.bias]

    # -- inference ---------------------------------------------------------

    def sentence_matrix(self, token_ids: Sequence[Sequence[int]]) -> np.ndarray:
        "Stack of mean token embeddings, one row per sentence."
        emb = self.embed.values.astype(np.float64)
        rows = np.zeros((len(token_ids), self.dim), dtype=np.float64)
        for i, ids in enumerate(token_ids):
            if ids:
                rows[i] = emb[list(ids)].mean(axis=0)
        return rows

    def _logits(self, sent_vecs: np.ndarray) -> np.ndarray:
        n = sent_vecs.shape[0]
        mix = self.mix.values.astype(np.float64)
        logits = np.full(n, float(self.bias.values[0]))
        for j, k in enumerate(range(-self.window, self.window + 1)):
            if k == 0:
                logits += sent_vecs @ mix[j]
            elif k > 0:
                logits[: n - k] += sent_vecs[k:] @ mix[j]
            else:
                logits[-k:] += sent_vecs[: n + k] @ mix[j]
        return logits

    def scores(self, token_ids: Sequence[Sequence[int]]) -> np.ndarray:
        "Keep probability per sentence."
        if not token_ids:
            return np.zeros(0, dtype=np.float64)
        return sigmoid(self._logits(self.sentence_matrix(token_ids)))

    def scope(self, sentences: Iterable[Sentence]) -> ScopedMessage:
        """Apply the filter: keep sentences whose score is at least 0.5.

        Deterministic for a fixed model; original sentence order is kept.
        """
        sents = list(sentences)
        if not sents:
            return ScopedMessage([], [])
        scores = self.scores([s.token_ids for s in sents])
        return ScopedMessage(sents, [bool(v >= 0.5) for v in scores])

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        write_tensors(
            path,
            {"embed": self.embed.values, "mix": self.mix.values, "bias": self.bias.values},
        )

    @classmethod
    def load(cls, path, vocab: Vocabulary) -> "ScopeModel":
        tensors = read_tensors(path)
        embed, mix, bias = tensors["embed"], tensors["mix"], tensors["bias"]
        if embed.shape[0] != vocab.size:
            raise ValueError(f"checkpoint vocab size {embed.shape[0]} != vocabulary {vocab.size}")
        model = cls(vocab, dim=embed.shape[1], window=(mix.shape[0] - 1) // 2)
        model.embed.values[...] = embed
        model.mix.values[...] = mix
        model.bias.values[...] = bias
        return model


def keep_labels(message) -> list[int]:
    "Gold keep label per sentence: task content or task-directed emotion."
    return [int(s.task_relevant or s.directed != "none") for s in message.sentences]


def train_scope(
    model: ScopeModel,
    corpus: Sequence,
    epochs: int = 6,
    lr: float = 0.5,
    holdout_frac: float = 0.2,
    seed: int = 0,
) -> dict:
    """Train the filter with per-message SGD on mean binary cross-entropy.

    `corpus` holds messages with per-sentence gold flags. Returns training
    BCE per epoch plus held-out F1/accuracy for the keep class; warns if the
    training loss fails to decrease monotonically over the first 3 epochs.
    """
    if not corpus:
        raise ValueError("cannot train the scope filter on an empty corpus")
    data = []
    for message in corpus:
        ids = [model.vocab.ids(s.text.lower().split()) for s in message.sentences]
        data.append((ids, np.array(keep_labels(message), dtype=np.float64)))
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(data))
    n_hold = int(round(holdout_frac * len(data)))
    hold_idx = order[:n_hold]
    train_idx = order[n_hold:]
    if len(train_idx) == 0:
        raise ValueError("holdout fraction leaves no training data")

    opt = SGD(learning_rate=lr)
    mix_offsets = list(range(-model.window, model.window + 1))
    epoch_bce: list[float] = []
    for _ in range(epochs):
        total, count = 0.0, 0
        for i in rng.permutation(train_idx):
            ids, y = data[i]
            n = len(ids)
            if n == 0:
                continue
            vecs = model.sentence_matrix(ids)
            p = sigmoid(model._logits(vecs))
            total += float(-np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
            count += n
            g = (p - y) / n
            # head and mixer gradients
            mix_grad = np.zeros_like(model.mix.values, dtype=np.float64)
            d_vecs = np.zeros_like(vecs)
            mix = model.mix.values.astype(np.float64)
            for j, k in enumerate(mix_offsets):
                if k == 0:
                    mix_grad[j] = g @ vecs
                    d_vecs += g[:, None] * mix[j]
                elif k > 0:
                    mix_grad[j] = g[: n - k] @ vecs[k:]
                    d_vecs[k:] += g[: n - k, None] * mix[j]
                else:
                    mix_grad[j] = g[-k:] @ vecs[: n + k]
                    d_vecs[: n + k] += g[-k:, None] * mix[j]
            # embeddings: each token in sentence i receives d_vecs[i] / len(sent)
            emb_grad = np.zeros_like(model.embed.values, dtype=np.float64)
            for i_s, sent_ids in enumerate(ids):
                if sent_ids:
                    np.add.at(emb_grad, list(sent_ids), d_vecs[i_s] / len(sent_ids))
            model.embed.grad += emb_grad.astype(np.float32)
            model.mix.grad += mix_grad.astype(np.float32)
            model.bias.grad += np.float32(g.sum())
            apply_update(model.params(), opt)
        epoch_bce.append(total / max(count, 1))
    first = epoch_bce[: min(3, len(epoch_bce))]
    if any(b >= a for a, b in zip(first, first[1:])):
        warnings.warn("scope training BCE did not decrease monotonically over the first epochs")

    metrics = {"train_bce": epoch_bce}
    metrics.update(_holdout_metrics(model, data, hold_idx))
    return metrics


def _holdout_metrics(model: ScopeModel, data, hold_idx) -> dict:
    tp = fp = fn = hits = total = 0
    positives = 0
    for i in hold_idx:
        ids, y = data[i]
        if len(ids) == 0:
            continue
        pred = model.scores(ids) >= 0.5
        gold = y >= 0.5
        tp += int(np.sum(pred & gold))
        fp += int(np.sum(pred & ~gold))
        fn += int(np.sum(~pred & gold))
        hits += int(np.sum(pred == gold))
        positives += int(np.sum(gold))
        total += len(ids)
    f1 = 2.0 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0
    accuracy = hits / total if total else 0.0
    majority = max(positives, total - positives) / total if total else 0.0
    return {"holdout_f1": f1, "holdout_accuracy": accuracy, "holdout_majority": majority}
