"""Synthetic email environment.

Generates user emails from phrase templates (task content plus distractor
sub-conversations), reacts to agent actions with replies that may carry
implicit emotion, and degrades the resulting feedback through the full /
partial / partial-noisy regimes. Emotion phrases come in two disjoint
registers: "directed" phrases reacting to the assistant's action (these set
the message's gold emotion) and "general" phrases about unrelated matters,
which leave the gold label Neutral. Every emotion phrase is spliced in at a
position immediately after one of the splitting punctuation marks of the
pre-injection text, and the builder records each splice so corpora can be
audited.

The environment exposes two emotion channels: "oracle" reads the reply's
gold label (isolating the policy-learning loop), "learned" runs the trained
scope filter and emotion classifier end to end.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .emotion import EmotionLabel, EmotionModel, classify_emotion, reward_of
from .policy import DEFAULT_VALID_COMBOS, MULTICLASS_ACTIONS
from .scope import ScopeModel
from .text import SPLIT_PUNCT, Vocabulary, build_vocab, featurize_texts, segment


class ProtocolError(RuntimeError):
    """Raised when step() is called without a previously served email."""


@dataclass(frozen=True)
class Injection:
    """Audit record of one emotion phrase splice into a base message."""

    phrase: str
    offset: int  # position in the pre-injection text, just after punctuation
    register: str  # "directed" | "general"
    polarity: str  # "pos" | "neg"


@dataclass(frozen=True)
class LabeledSentence:
    text: str
    task_relevant: bool
    directed: str = "none"  # "pos" | "neg" | "none"
    general: str = "none"


@dataclass
class EmailMessage:
    sentences: list[LabeledSentence]
    gold_intent: "int | tuple[int, ...]"
    gold_emotion: EmotionLabel
    base_text: str = ""
    injections: list[Injection] = field(default_factory=list)

    @property
    def text(self) -> str:
        return " ".join(s.text for s in self.sentences)


@dataclass(frozen=True)
class FeedbackRegime:
    """Availability/quality model of the implicit feedback signal."""

    kind: str
    p: float = 1.0
    wrong_frac: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("full", "partial", "partial_noisy"):
            raise ValueError(f"unknown regime kind {self.kind!r}")
        if not 0.0 < self.p <= 1.0:
            raise ValueError("feedback probability must lie in (0, 1]")
        if not 0.0 <= self.wrong_frac < 1.0:
            raise ValueError("wrong fraction must lie in [0, 1)")

    @classmethod
    def full(cls) -> "FeedbackRegime":
        return cls("full")

    @classmethod
    def partial(cls, p: float = 0.15) -> "FeedbackRegime":
        return cls("partial", p=p)

    @classmethod
    def partial_noisy(cls, p: float = 0.15, wrong_frac: float = 1.0 / 3.0) -> "FeedbackRegime":
        return cls("partial_noisy", p=p, wrong_frac=wrong_frac)


@dataclass
class InteractionRecord:
    """One online turn; the unit the learning curve is computed from."""

    step: int
    state: np.ndarray
    action: "int | tuple[int, ...]"
    gold: "int | tuple[int, ...]"
    feedback_present: bool
    observed: EmotionLabel
    reward: float
    correct: bool


@dataclass
class GeneratorConfig:
    """Everything the synthetic generator needs: templates, lexicons, rates."""

    task: str = "multiclass"
    intent_templates: dict = field(default_factory=dict)  # name -> [templates]
    multiclass_intents: tuple[str, ...] = MULTICLASS_ACTIONS
    bit_templates: list = field(default_factory=list)  # one pool per action bit
    valid_combos: tuple[tuple[int, ...], ...] = DEFAULT_VALID_COMBOS
    intent_prior: tuple[float, ...] | None = None
    distractor_templates: list = field(default_factory=list)
    followup_templates: list = field(default_factory=list)
    directed_pos: list = field(default_factory=list)
    directed_neg: list = field(default_factory=list)
    general_pos: list = field(default_factory=list)
    general_neg: list = field(default_factory=list)
    distractor_rate: float = 0.5
    max_distractors: int = 3
    extra_task_rate: float = 0.35
    general_rate: float = 0.3
    corpus_followup_rate: float = 0.5
    corpus_other_rate: float = 0.35
    q_pos: float = 0.8
    q_neg: float = 0.9
    vocab_size: int = 2048
    pretrain_template_frac: float = 0.45
    pretrain_intent_weights: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.task not in ("multiclass", "multilabel"):
            raise ValueError(f"unknown task {self.task!r}")
        for name in (
            "distractor_rate",
            "extra_task_rate",
            "general_rate",
            "corpus_followup_rate",
            "corpus_other_rate",
            "q_pos",
            "q_neg",
            "pretrain_template_frac",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        directed = set(self.directed_pos) | set(self.directed_neg)
        general = set(self.general_pos) | set(self.general_neg)
        if directed & general:
            raise ValueError("directed and general emotion lexicons must be disjoint")
        for pool in self._all_template_pools():
            for template in pool:
                if not template or template[-1] not in SPLIT_PUNCT:
                    raise ValueError(f"template must end with splitting punctuation: {template!r}")

    def _all_template_pools(self) -> list[list[str]]:
        pools = [self.intent_templates[n] for n in self.multiclass_intents if n in self.intent_templates]
        pools += list(self.bit_templates)
        pools += [
            self.distractor_templates,
            self.followup_templates,
            self.directed_pos,
            self.directed_neg,
            self.general_pos,
            self.general_neg,
        ]
        return [p for p in pools if p]

    def all_template_text(self) -> list[str]:
        out: list[str] = []
        for pool in self._all_template_pools():
            out.extend(pool)
        return out


def default_config(task: str = "multiclass", **overrides) -> GeneratorConfig:
    "Generator configuration backed by the phrase templates shipped as data."
    raw = json.loads(resources.files("emorl.data").joinpath("templates.json").read_text("utf-8"))
    if task == "multiclass":
        # skew calibrated so the pretrained baseline lands in the 55-70% band
        overrides.setdefault("pretrain_intent_weights", (0.55, 0.35, 0.10))
    cfg = GeneratorConfig(
        task=task,
        intent_templates=raw["intent_templates"],
        multiclass_intents=tuple(raw["multiclass_intents"]),
        bit_templates=raw["bit_templates"],
        distractor_templates=raw["distractor_templates"],
        followup_templates=raw["followup_templates"],
        directed_pos=raw["directed_pos"],
        directed_neg=raw["directed_neg"],
        general_pos=raw["general_pos"],
        general_neg=raw["general_neg"],
    )
    return replace(cfg, **overrides)


def config_vocab(config: GeneratorConfig) -> Vocabulary:
    "Deterministic vocabulary over every template the generator can emit."
    return build_vocab(config.all_template_text(), config.vocab_size)


# -- message assembly ------------------------------------------------------


def _instantiate(template: str, task_relevant: bool, directed: str = "none", general: str = "none") -> list[LabeledSentence]:
    "Expand a template into its segments, all sharing the template's flags."
    return [
        LabeledSentence(text=s.text, task_relevant=task_relevant, directed=directed, general=general)
        for s in segment(template)
    ]


def _boundary_offsets(sentences: list[LabeledSentence]) -> list[int]:
    "Offset just after each segment's final punctuation in the joined text."
    offsets, pos = [], 0
    for i, s in enumerate(sentences):
        pos += len(s.text)
        offsets.append(pos)
        pos += 1  # the joining space
    return offsets


def _inject_phrases(
    base: list[LabeledSentence],
    picks: list[tuple[int, str, str, str]],
) -> tuple[list[LabeledSentence], list[Injection]]:
    """Splice emotion phrases in after the chosen segment indices.

    Offsets are recorded against the pre-injection text, so audits can check
    them against that text's insertion positions.
    """
    offsets = _boundary_offsets(base)
    injections = [Injection(phrase, offsets[idx], reg, pol) for idx, phrase, reg, pol in picks]
    out = list(base)
    for idx, phrase, reg, pol in sorted(picks, key=lambda p: p[0], reverse=True):
        pieces = _instantiate(
            phrase,
            task_relevant=False,
            directed=pol if reg == "directed" else "none",
            general=pol if reg == "general" else "none",
        )
        out[idx + 1 : idx + 1] = pieces
    return out, injections


def _draw_templates(pool: list, rng: np.random.Generator, k: int) -> list[str]:
    if k <= 0:
        return []
    if k <= len(pool):
        idx = rng.choice(len(pool), size=k, replace=False)
    else:
        idx = rng.choice(len(pool), size=k, replace=True)
    return [pool[int(i)] for i in idx]


def normalize_intent(config: GeneratorConfig, intent) -> "int | tuple[int, ...]":
    if config.task == "multiclass":
        intent = int(intent)
        if not 0 <= intent < len(config.multiclass_intents):
            raise ValueError(f"unknown multiclass intent {intent}")
        return intent
    combo = tuple(int(b) for b in intent)
    if combo not in config.valid_combos:
        raise ValueError(f"unknown intent combination {combo}")
    return combo


def draw_intent(config: GeneratorConfig, rng: np.random.Generator) -> "int | tuple[int, ...]":
    n = len(config.multiclass_intents) if config.task == "multiclass" else len(config.valid_combos)
    prior = config.intent_prior
    if prior is not None and len(prior) != n:
        raise ValueError(f"intent prior needs {n} entries")
    idx = int(rng.choice(n, p=prior))
    return idx if config.task == "multiclass" else config.valid_combos[idx]


def generate_email(config: GeneratorConfig, rng: np.random.Generator, intent) -> EmailMessage:
    """One synthetic user email realizing `intent`, plus distractor chatter.

    Deterministic under a fixed generator state. Sentences realizing a task
    intent are flagged task-relevant; "other" content and distractors are
    not.
    """
    intent = normalize_intent(config, intent)
    groups: list[list[LabeledSentence]] = []
    if config.task == "multiclass":
        name = config.multiclass_intents[intent]
        relevant = name != "other"
        n_task = 1 + int(rng.random() < config.extra_task_rate)
        for template in _draw_templates(config.intent_templates[name], rng, n_task):
            groups.append(_instantiate(template, task_relevant=relevant))
    else:
        for bit, on in enumerate(intent):
            if on:
                template = _draw_templates(config.bit_templates[bit], rng, 1)[0]
                groups.append(_instantiate(template, task_relevant=True))
    n_distract = int(rng.binomial(config.max_distractors, config.distractor_rate))
    for template in _draw_templates(config.distractor_templates, rng, n_distract):
        groups.append(_instantiate(template, task_relevant=False))
    sentences = [s for gi in rng.permutation(len(groups)) for s in groups[int(gi)]]
    msg = EmailMessage(sentences=sentences, gold_intent=intent, gold_emotion=EmotionLabel.NEUTRAL)
    msg.base_text = msg.text
    return msg


def respond(config: GeneratorConfig, rng: np.random.Generator, gold, taken) -> EmailMessage:
    """The user's reply to the agent's action.

    A correct action draws a directed-positive phrase with probability
    q_pos, a wrong one a directed-negative phrase with probability q_neg;
    otherwise the reply stays neutral. Directed phrases land immediately
    after a task sentence; a general-register phrase may land after any
    sentence. The gold emotion label reflects only the directed injection.
    """
    gold = normalize_intent(config, gold)
    groups: list[list[LabeledSentence]] = []
    followup = _draw_templates(config.followup_templates, rng, 1)[0]
    groups.append(_instantiate(followup, task_relevant=True))
    n_distract = int(rng.binomial(config.max_distractors, config.distractor_rate))
    for template in _draw_templates(config.distractor_templates, rng, n_distract):
        groups.append(_instantiate(template, task_relevant=False))
    base = [s for gi in rng.permutation(len(groups)) for s in groups[int(gi)]]

    picks: list[tuple[int, str, str, str]] = []
    correct = taken == gold
    directed_pol = "none"
    if correct and rng.random() < config.q_pos:
        directed_pol = "pos"
    elif not correct and rng.random() < config.q_neg:
        directed_pol = "neg"
    if directed_pol != "none":
        pool = config.directed_pos if directed_pol == "pos" else config.directed_neg
        phrase = pool[int(rng.integers(len(pool)))]
        task_slots = [i for i, s in enumerate(base) if s.task_relevant]
        picks.append((task_slots[int(rng.integers(len(task_slots)))], phrase, "directed", directed_pol))
    if rng.random() < config.general_rate:
        pol = "pos" if rng.random() < 0.5 else "neg"
        pool = config.general_pos if pol == "pos" else config.general_neg
        phrase = pool[int(rng.integers(len(pool)))]
        picks.append((int(rng.integers(len(base))), phrase, "general", pol))

    base_text = " ".join(s.text for s in base)
    sentences, injections = _inject_phrases(base, picks)
    label = {"pos": EmotionLabel.POSITIVE, "neg": EmotionLabel.NEGATIVE, "none": EmotionLabel.NEUTRAL}
    return EmailMessage(
        sentences=sentences,
        gold_intent=gold,
        gold_emotion=label[directed_pol],
        base_text=base_text,
        injections=injections,
    )


def apply_regime(
    regime: FeedbackRegime, rng: np.random.Generator, true_label: EmotionLabel
) -> tuple[bool, EmotionLabel]:
    """Pass the true emotion label through the feedback availability model.

    Full never alters the label. Partial delivers it with probability p,
    unchanged. Partial-noisy additionally corrupts a delivered label with
    probability wrong_frac: Positive and Negative swap, Neutral becomes
    Positive or Negative uniformly. Absent feedback reports Neutral.
    """
    if regime.kind == "full":
        return True, true_label
    if rng.random() >= regime.p:
        return False, EmotionLabel.NEUTRAL
    label = true_label
    if regime.kind == "partial_noisy" and rng.random() < regime.wrong_frac:
        if label is EmotionLabel.POSITIVE:
            label = EmotionLabel.NEGATIVE
        elif label is EmotionLabel.NEGATIVE:
            label = EmotionLabel.POSITIVE
        else:
            label = EmotionLabel.POSITIVE if rng.random() < 0.5 else EmotionLabel.NEGATIVE
    return True, label


# -- offline corpora --------------------------------------------------------


def _task_intents(config: GeneratorConfig) -> list:
    if config.task == "multiclass":
        return [i for i, name in enumerate(config.multiclass_intents) if name != "other"]
    return list(config.valid_combos)


def build_offline_corpus(config: GeneratorConfig, rng: np.random.Generator, n: int) -> list[EmailMessage]:
    """Labeled corpus for scope and emotion training.

    Emails with task content are built first, then emotion phrases are
    injected at punctuation-adjacent positions: directed phrases (adjacent
    to a task sentence) define the Positive/Negative labels; samples whose
    only emotion content is general-register stay Neutral. Classes are
    balanced exactly by round-robin assignment before shuffling.
    """
    if n <= 0:
        raise ValueError("corpus size must be positive")
    classes = np.array(
        [EmotionLabel.POSITIVE, EmotionLabel.NEGATIVE, EmotionLabel.NEUTRAL], dtype=object
    )[np.arange(n) % 3]
    rng.shuffle(classes)
    task_pool = _task_intents(config)
    out: list[EmailMessage] = []
    for cls in classes:
        intent = task_pool[int(rng.integers(len(task_pool)))]
        email = generate_email(config, rng, intent)
        base = list(email.sentences)
        if rng.random() < config.corpus_followup_rate:
            template = _draw_templates(config.followup_templates, rng, 1)[0]
            pos = int(rng.integers(len(base) + 1))
            base[pos:pos] = _instantiate(template, task_relevant=True)
        if config.task == "multiclass" and rng.random() < config.corpus_other_rate:
            template = _draw_templates(config.intent_templates["other"], rng, 1)[0]
            pos = int(rng.integers(len(base) + 1))
            base[pos:pos] = _instantiate(template, task_relevant=False)

        picks: list[tuple[int, str, str, str]] = []
        if cls is not EmotionLabel.NEUTRAL:
            pol = "pos" if cls is EmotionLabel.POSITIVE else "neg"
            pool = config.directed_pos if pol == "pos" else config.directed_neg
            phrase = pool[int(rng.integers(len(pool)))]
            task_slots = [i for i, s in enumerate(base) if s.task_relevant]
            picks.append((task_slots[int(rng.integers(len(task_slots)))], phrase, "directed", pol))
        if rng.random() < config.general_rate:
            pol = "pos" if rng.random() < 0.5 else "neg"
            pool = config.general_pos if pol == "pos" else config.general_neg
            phrase = pool[int(rng.integers(len(pool)))]
            picks.append((int(rng.integers(len(base))), phrase, "general", pol))

        base_text = " ".join(s.text for s in base)
        sentences, injections = _inject_phrases(base, picks)
        out.append(
            EmailMessage(
                sentences=sentences,
                gold_intent=email.gold_intent,
                gold_emotion=cls,
                base_text=base_text,
                injections=injections,
            )
        )
    return out


def draw_pretrain_set(config: GeneratorConfig, rng: np.random.Generator, n: int) -> list[EmailMessage]:
    """Small, skewed supervised sample: intents drawn with the pretrain
    weights and templates restricted to a leading fraction of each pool,
    the desk-scale analog of limited, domain-mismatched labeled data."""
    if n <= 0:
        raise ValueError("pretrain subset size must be positive")

    def restrict(pool: list) -> list:
        return pool[: max(1, round(config.pretrain_template_frac * len(pool)))]

    cfg = replace(
        config,
        intent_templates={k: restrict(v) for k, v in config.intent_templates.items()},
        bit_templates=[restrict(p) for p in config.bit_templates],
        intent_prior=config.pretrain_intent_weights,
    )
    return [generate_email(cfg, rng, draw_intent(cfg, rng)) for _ in range(n)]


# -- corpus serialization ----------------------------------------------------


def corpus_to_jsonl(corpus: list[EmailMessage], path) -> None:
    "One message per line; stable field order; UTF-8."
    with open(path, "w", encoding="utf-8") as f:
        for m in corpus:
            rec = {
                "text": m.text,
                "sentences": [
                    {
                        "text": s.text,
                        "task_relevant": s.task_relevant,
                        "directed": s.directed,
                        "general": s.general,
                    }
                    for s in m.sentences
                ],
                "intent": list(m.gold_intent) if isinstance(m.gold_intent, tuple) else m.gold_intent,
                "emotion": m.gold_emotion.name.lower(),
            }
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def corpus_from_jsonl(path) -> list[EmailMessage]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            sentences = [
                LabeledSentence(
                    text=s["text"],
                    task_relevant=s["task_relevant"],
                    directed=s["directed"],
                    general=s["general"],
                )
                for s in rec["sentences"]
            ]
            intent = tuple(rec["intent"]) if isinstance(rec["intent"], list) else rec["intent"]
            msg = EmailMessage(
                sentences=sentences,
                gold_intent=intent,
                gold_emotion=EmotionLabel[rec["emotion"].upper()],
            )
            msg.base_text = msg.text
            out.append(msg)
    return out


# -- gold scoping helpers -----------------------------------------------------


def gold_scope_texts(message: EmailMessage) -> list[str]:
    "Sentences a perfect scope filter would keep."
    return [s.text for s in message.sentences if s.task_relevant or s.directed != "none"]


def all_texts(message: EmailMessage) -> list[str]:
    return [s.text for s in message.sentences]


# -- the environment ----------------------------------------------------------


class Environment:
    """Serve/step interaction loop around one generator and one regime.

    serve() draws an intent, generates the email, and featurizes the scoped
    message into the policy state; step(action) produces the user reply,
    extracts the (oracle or learned) emotion, applies the feedback regime,
    and returns the interaction record.
    """

    def __init__(
        self,
        config: GeneratorConfig,
        seed=0,
        regime: FeedbackRegime | None = None,
        channel: str = "oracle",
        scope_model: ScopeModel | None = None,
        emotion_model: EmotionModel | None = None,
        vocab: Vocabulary | None = None,
    ):
        if channel not in ("oracle", "learned"):
            raise ValueError(f"unknown emotion channel {channel!r}")
        if channel == "learned":
            if scope_model is None:
                raise ValueError("learned channel requires a scope model (run the train-scope stage first)")
            if emotion_model is None:
                raise ValueError("learned channel requires an emotion model (run the train-emotion stage first)")
        self.config = config
        self.regime = regime if regime is not None else FeedbackRegime.full()
        self.channel = channel
        self.scope_model = scope_model
        self.emotion_model = emotion_model
        self.vocab = vocab if vocab is not None else config_vocab(config)
        self.rng = np.random.default_rng(seed)
        self._pending: tuple[EmailMessage, np.ndarray] | None = None
        self._step = 0

    @property
    def state_dim(self) -> int:
        return self.vocab.size

    def scoped_texts(self, message: EmailMessage) -> list[str]:
        if self.channel == "oracle":
            return gold_scope_texts(message)
        scoped = self.scope_model.scope(segment(message.text, self.vocab))
        return scoped.kept_texts

    def featurize_email(self, message: EmailMessage) -> np.ndarray:
        return featurize_texts(self.scoped_texts(message), self.vocab)

    def serve(self) -> tuple[EmailMessage, np.ndarray]:
        intent = draw_intent(self.config, self.rng)
        email = generate_email(self.config, self.rng, intent)
        state = self.featurize_email(email)
        self._pending = (email, state)
        return email, state

    def step(self, action) -> InteractionRecord:
        if self._pending is None:
            raise ProtocolError("step() called with no served email pending")
        email, state = self._pending
        self._pending = None
        gold = email.gold_intent
        taken = tuple(int(b) for b in action) if self.config.task == "multilabel" else int(action)
        reply = respond(self.config, self.rng, gold, taken)
        if self.channel == "oracle":
            true_label = reply.gold_emotion
        else:
            scoped = self.scope_model.scope(segment(reply.text, self.vocab))
            true_label, _ = classify_emotion(self.emotion_model, scoped)
        present, observed = apply_regime(self.regime, self.rng, true_label)
        record = InteractionRecord(
            step=self._step,
            state=state,
            action=taken,
            gold=gold,
            feedback_present=present,
            observed=observed,
            reward=reward_of(observed),
            correct=taken == gold,
        )
        self._step += 1
        return record
