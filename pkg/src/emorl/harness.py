"""Experiment orchestration: online runs, the task/init/regime grid,
learning-curve files, run manifests, and the INI config format.

Curve files are CSV with the header `step,rolling_success,eval_accuracy`,
appended row by row so an interrupted run leaves a valid prefix. Runs are a
pure function of (config, seed): repeating one reproduces curve files and
checkpoints byte for byte.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .emotion import EmotionModel
from .envsim import (
    Environment,
    FeedbackRegime,
    GeneratorConfig,
    config_vocab,
    default_config,
    draw_intent,
    draw_pretrain_set,
    generate_email,
)
from .policy import MulticlassPolicy, MultilabelPolicy, save_agent
from .scope import ScopeModel
from .text import Vocabulary

CURVE_HEADER = "step,rolling_success,eval_accuracy"

REGIME_NAMES = ("full", "partial", "partial_noisy")


@dataclass
class ExperimentConfig:
    task: str = "multiclass"
    init: str = "scratch"
    regime: FeedbackRegime = field(default_factory=FeedbackRegime.full)
    channel: str = "oracle"
    interactions: int = 20000
    eval_every: int = 500
    window: int = 500
    seeds: tuple[int, ...] = (1, 2, 3)
    lr: float = 0.05
    hidden: tuple[int, ...] = (64,)
    init_scale: float = 0.5
    eval_size: int = 300
    pretrain_size: int = 40
    pretrain_epochs: int = 35
    generator: GeneratorConfig = field(default_factory=default_config)

    def __post_init__(self) -> None:
        if self.task not in ("multiclass", "multilabel"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.init not in ("scratch", "pretrained"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.channel not in ("oracle", "learned"):
            raise ValueError(f"unknown channel {self.channel!r}")
        if self.interactions < 0:
            raise ValueError("interactions must be non-negative")
        if self.eval_every < 1 or self.window < 1:
            raise ValueError("eval_every and window must be at least 1")
        if self.interactions and self.eval_every > self.interactions:
            raise ValueError("eval_every cannot exceed the interaction budget")
        if self.interactions and self.window > self.interactions:
            raise ValueError("window cannot exceed the interaction budget")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        self.generator = replace(self.generator, task=self.task)
        weights = self.generator.pretrain_intent_weights
        if weights is not None:
            n = len(self.generator.multiclass_intents) if self.task == "multiclass" else len(self.generator.valid_combos)
            if len(weights) != n:
                # weights from the other task's action space; fall back to uniform
                self.generator = replace(self.generator, pretrain_intent_weights=None)


@dataclass(frozen=True)
class CurveRow:
    step: int
    rolling_success: float
    eval_accuracy: float


class LearningCurve:
    "Strictly increasing (step, rolling success, argmax accuracy) rows."

    def __init__(self, rows: Sequence[CurveRow] = ()):
        self.rows: list[CurveRow] = []
        for row in rows:
            self.append(row)

    def append(self, row: CurveRow) -> None:
        if self.rows and row.step <= self.rows[-1].step:
            raise ValueError("curve steps must be strictly increasing")
        if not 0.0 <= row.rolling_success <= 1.0 or not 0.0 <= row.eval_accuracy <= 1.0:
            raise ValueError("curve rates must lie in [0, 1]")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def final_success(self) -> float:
        if not self.rows:
            raise ValueError("empty curve has no final value")
        return self.rows[-1].rolling_success

    @property
    def final_eval(self) -> float:
        if not self.rows:
            raise ValueError("empty curve has no final value")
        return self.rows[-1].eval_accuracy

    def first_step_reaching(self, threshold: float) -> int | None:
        "First curve step whose rolling success is at least `threshold`."
        for row in self.rows:
            if row.rolling_success >= threshold:
                return row.step
        return None

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(CURVE_HEADER + "\n")
            for r in self.rows:
                f.write(_format_row(r))

    @classmethod
    def from_csv(cls, path) -> "LearningCurve":
        curve = cls()
        with open(path, encoding="utf-8") as f:
            header = f.readline().strip()
            if header != CURVE_HEADER:
                raise ValueError(f"unexpected curve header {header!r}")
            for line in f:
                if not line.strip():
                    continue
                step, rs, ea = line.strip().split(",")
                curve.append(CurveRow(int(step), float(rs), float(ea)))
        return curve


def _format_row(row: CurveRow) -> str:
    return f"{row.step},{row.rolling_success:.6f},{row.eval_accuracy:.6f}\n"


def build_agent(config: ExperimentConfig, input_dim: int, seed: int):
    if config.task == "multiclass":
        return MulticlassPolicy(
            input_dim,
            n_actions=len(config.generator.multiclass_intents),
            hidden=config.hidden,
            lr=config.lr,
            seed=seed,
            init_scale=config.init_scale,
        )
    return MultilabelPolicy(
        input_dim,
        n_bits=len(config.generator.valid_combos[0]),
        hidden=config.hidden,
        lr=config.lr,
        seed=seed,
        init_scale=config.init_scale,
        valid_combos=config.generator.valid_combos,
    )


def make_eval_set(config: ExperimentConfig, env: Environment, seed: int):
    "Fixed labeled (state, gold intent) pairs from the online distribution."
    rng = np.random.default_rng([seed, 3])
    gen = config.generator
    out = []
    for _ in range(config.eval_size):
        email = generate_email(gen, rng, draw_intent(gen, rng))
        out.append((env.featurize_email(email), email.gold_intent))
    return out


def run_online(
    config: ExperimentConfig,
    seed: int,
    curve_path=None,
    checkpoint_dir=None,
    scope_model: ScopeModel | None = None,
    emotion_model: EmotionModel | None = None,
    vocab: Vocabulary | None = None,
):
    """One online run: serve -> act -> step -> learn for the whole budget.

    Returns (curve, agent, info). A curve row is appended every eval_every
    interactions: the rolling success over the trailing window of sampled
    actions, and the argmax accuracy on a fixed eval set. When `curve_path`
    is given rows are flushed to disk as they are produced.
    """
    gen = config.generator
    vocab = vocab if vocab is not None else config_vocab(gen)
    env = Environment(
        gen,
        seed=[seed, 2],
        regime=config.regime,
        channel=config.channel,
        scope_model=scope_model,
        emotion_model=emotion_model,
        vocab=vocab,
    )
    agent = build_agent(config, vocab.size, seed)
    eval_set = make_eval_set(config, env, seed)

    info: dict = {"seed": seed}
    if config.init == "pretrained":
        subset = draw_pretrain_set(gen, np.random.default_rng([seed, 4]), config.pretrain_size)
        examples = [(env.featurize_email(e), e.gold_intent) for e in subset]
        agent.pretrain(examples, config.pretrain_epochs, rng=np.random.default_rng([seed, 5]))
        info["baseline_accuracy"] = agent.evaluate(eval_set)

    curve = LearningCurve()
    recent: deque = deque(maxlen=config.window)
    correct_flags: list[bool] = []
    sink = open(curve_path, "w", encoding="utf-8", newline="\n") if curve_path else None
    try:
        if sink:
            sink.write(CURVE_HEADER + "\n")
            sink.flush()
        for t in range(1, config.interactions + 1):
            _, state = env.serve()
            action, _ = agent.act(state)
            record = env.step(action)
            agent.learn(record)
            recent.append(record.correct)
            correct_flags.append(record.correct)
            if t % config.eval_every == 0:
                row = CurveRow(t, float(np.mean(recent)), agent.evaluate(eval_set))
                curve.append(row)
                if sink:
                    sink.write(_format_row(row))
                    sink.flush()
    finally:
        if sink:
            sink.close()
    info["correct_flags"] = correct_flags
    if checkpoint_dir is not None:
        save_agent(agent, checkpoint_dir)
    return curve, agent, info


# -- grid ---------------------------------------------------------------------


def regime_label(regime: FeedbackRegime) -> str:
    return regime.kind


def default_regimes() -> tuple[FeedbackRegime, ...]:
    return (
        FeedbackRegime.full(),
        FeedbackRegime.partial(),
        FeedbackRegime.partial_noisy(),
    )


def run_grid(
    base: ExperimentConfig,
    run_dir,
    tasks: tuple[str, ...] = ("multiclass", "multilabel"),
    inits: tuple[str, ...] = ("scratch", "pretrained"),
    regimes: tuple[FeedbackRegime, ...] | None = None,
) -> list[dict]:
    """Run every (task, init, regime) cell at every seed and summarize.

    Curve files land under run_dir/curves/, checkpoints under
    run_dir/checkpoints/; completed cells survive a later cell's failure.
    Returns the report rows (one per cell) that are also written to
    report.csv.
    """
    regimes = regimes if regimes is not None else default_regimes()
    run_dir = Path(run_dir)
    (run_dir / "curves").mkdir(parents=True, exist_ok=True)
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    results: dict[tuple[str, str, str], list[float]] = {}
    evals: dict[tuple[str, str, str], list[float]] = {}
    for task in tasks:
        for init in inits:
            for regime in regimes:
                cfg = replace(base, task=task, init=init, regime=regime)
                key = (task, init, regime_label(regime))
                cell = "_".join(key)
                for seed in cfg.seeds:
                    curve, _, _ = run_online(
                        cfg,
                        seed,
                        curve_path=run_dir / "curves" / f"{cell}_s{seed}.csv",
                        checkpoint_dir=run_dir / "checkpoints" / f"{cell}_s{seed}",
                    )
                    results.setdefault(key, []).append(curve.final_success)
                    evals.setdefault(key, []).append(curve.final_eval)
    rows = summarize_grid(results, evals)
    write_report(run_dir / "report.csv", rows)
    return rows


def summarize_grid(results: dict, evals: dict) -> list[dict]:
    rows = []
    for (task, init, regime), vals in results.items():
        rows.append(
            {
                "task": task,
                "init": init,
                "regime": regime,
                "seeds": len(vals),
                "final_success_mean": float(np.mean(vals)),
                "final_eval_mean": float(np.mean(evals[(task, init, regime)])),
            }
        )
    # ordering check per (task, init) panel: full >= partial >= partial_noisy
    by_panel: dict[tuple[str, str], dict[str, float]] = {}
    for row in rows:
        by_panel.setdefault((row["task"], row["init"]), {})[row["regime"]] = row["final_success_mean"]
    for row in rows:
        panel = by_panel[(row["task"], row["init"])]
        if all(name in panel for name in REGIME_NAMES):
            ok = panel["full"] >= panel["partial"] >= panel["partial_noisy"]
            row["panel_order_ok"] = int(ok)
        else:
            row["panel_order_ok"] = ""
    return rows


REPORT_COLUMNS = ("task", "init", "regime", "seeds", "final_success_mean", "final_eval_mean", "panel_order_ok")


def write_report(path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(REPORT_COLUMNS) + "\n")
        for row in rows:
            cells = []
            for col in REPORT_COLUMNS:
                v = row[col]
                cells.append(f"{v:.6f}" if isinstance(v, float) else str(v))
            f.write(",".join(cells) + "\n")


def read_report(path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip().split(",")
        if tuple(header) != REPORT_COLUMNS:
            raise ValueError(f"unexpected report header {header}")
        for line in f:
            if not line.strip():
                continue
            vals = line.rstrip("\n").split(",")
            rows.append(dict(zip(REPORT_COLUMNS, vals)))
    return rows


def rederive_report(run_dir) -> list[dict]:
    "Recompute the report rows from the curve files alone."
    run_dir = Path(run_dir)
    results: dict[tuple[str, str, str], list[float]] = {}
    evals: dict[tuple[str, str, str], list[float]] = {}
    for path in sorted((run_dir / "curves").glob("*.csv")):
        stem = path.stem
        cell, _, seed_part = stem.rpartition("_s")
        task, init, regime = cell.split("_", 2)
        curve = LearningCurve.from_csv(path)
        key = (task, init, regime)
        results.setdefault(key, []).append(curve.final_success)
        evals.setdefault(key, []).append(curve.final_eval)
    return summarize_grid(results, evals)


def report_rows_equal(a: list[dict], b: list[dict]) -> bool:
    "Compare report rows after normalizing through the CSV text format."

    def norm(rows: list[dict]) -> list[tuple]:
        out = []
        for row in rows:
            cells = []
            for col in REPORT_COLUMNS:
                v = row[col]
                cells.append(f"{v:.6f}" if isinstance(v, float) else str(v))
            out.append(tuple(cells))
        return sorted(out)

    return norm(a) == norm(b)


# -- manifests and config files -------------------------------------------------


def write_manifest(run_dir, config_text: str, seeds: Sequence[int]) -> None:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.ini").write_text(config_text, encoding="utf-8")
    manifest = {
        "config_sha256": hashlib.sha256(config_text.encode("utf-8")).hexdigest(),
        "version": __version__,
        "seeds": list(seeds),
    }
    (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _parse_fraction(raw: str) -> float:
    raw = raw.strip()
    if "/" in raw:
        num, den = raw.split("/", 1)
        return float(num) / float(den)
    return float(raw)


def _parse_tuple(raw: str, cast) -> tuple:
    items = [p.strip() for p in raw.replace("(", "").replace(")", "").split(",") if p.strip()]
    return tuple(cast(p) for p in items)


def parse_regime(section: dict) -> FeedbackRegime:
    kind = section.get("regime", "full").strip()
    if kind == "full":
        return FeedbackRegime.full()
    p = _parse_fraction(section.get("feedback_p", "0.15"))
    if kind == "partial":
        return FeedbackRegime.partial(p)
    if kind == "partial_noisy":
        return FeedbackRegime.partial_noisy(p, _parse_fraction(section.get("wrong_frac", "1/3")))
    raise ValueError(f"unknown regime {kind!r}")


_GENERATOR_FLOATS = (
    "distractor_rate",
    "extra_task_rate",
    "general_rate",
    "corpus_followup_rate",
    "corpus_other_rate",
    "q_pos",
    "q_neg",
    "pretrain_template_frac",
)


def build_generator_config(section: dict, task: str) -> GeneratorConfig:
    overrides: dict = {}
    for name in _GENERATOR_FLOATS:
        if name in section:
            overrides[name] = _parse_fraction(section[name])
    if "max_distractors" in section:
        overrides["max_distractors"] = int(section["max_distractors"])
    if "vocab_size" in section:
        overrides["vocab_size"] = int(section["vocab_size"])
    if "pretrain_intent_weights" in section:
        overrides["pretrain_intent_weights"] = _parse_tuple(section["pretrain_intent_weights"], float)
    if "intent_prior" in section:
        overrides["intent_prior"] = _parse_tuple(section["intent_prior"], float)
    return default_config(task=task, **overrides)


def load_config_file(path) -> dict:
    """Parse the flat `key = value` sections of a run configuration.

    Returns {"experiment": ExperimentConfig, "stages": {section: dict}}.
    Unknown sections are preserved in "stages" for the CLI stage commands.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    sections = {name: dict(parser[name]) for name in parser.sections()}
    online = sections.get("online", {})
    task = online.get("task", "multiclass").strip()
    generator = build_generator_config(sections.get("generator", {}), task)
    kwargs: dict = {"task": task, "generator": generator}
    if "init" in online:
        kwargs["init"] = online["init"].strip()
    if "channel" in online:
        kwargs["channel"] = online["channel"].strip()
    kwargs["regime"] = parse_regime(online)
    for name, cast in (
        ("interactions", int),
        ("eval_every", int),
        ("window", int),
        ("lr", float),
        ("init_scale", float),
        ("eval_size", int),
        ("pretrain_size", int),
        ("pretrain_epochs", int),
    ):
        if name in online:
            kwargs[name] = cast(online[name])
    if "seeds" in online:
        kwargs["seeds"] = _parse_tuple(online["seeds"], int)
    if "hidden" in online:
        kwargs["hidden"] = _parse_tuple(online["hidden"], int)
    experiment = ExperimentConfig(**kwargs)
    return {"experiment": experiment, "stages": sections}


def rolling_success(correct_flags: Sequence[bool], window: int) -> float:
    "Mean of the trailing `window` correctness flags."
    if not correct_flags:
        raise ValueError("no interactions recorded")
    tail = list(correct_flags)[-window:]
    return float(np.mean(tail))
