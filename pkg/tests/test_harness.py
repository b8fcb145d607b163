import json
import os
import time
from dataclasses import replace

import numpy as np
import pytest

from emorl.cli import main
from emorl.envsim import FeedbackRegime
from emorl.harness import (
    CurveRow,
    ExperimentConfig,
    LearningCurve,
    load_config_file,
    read_report,
    rederive_report,
    report_rows_equal,
    rolling_success,
    run_grid,
    run_online,
)

SMALL = dict(interactions=300, eval_every=100, window=100, eval_size=30, seeds=(1,))


TEST_CONFIG = """
[generator]
distractor_rate = 0.5
q_pos = 0.8
q_neg = 0.9

[scope]
epochs = 3
lr = 0.5

[emotion]
epochs = 6
lr = 0.5

[online]
task = multiclass
init = scratch
regime = partial_noisy
feedback_p = 0.15
wrong_frac = 1/3
channel = oracle
interactions = 200
eval_every = 100
window = 100
eval_size = 20
seeds = 1, 2
lr = 0.05
hidden = 64

[data]
n = 120
"""


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "config.ini"
    path.write_text(TEST_CONFIG, encoding="utf-8")
    return path


# -- config objects ------------------------------------------------------------


def test_experiment_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(interactions=-1)
    with pytest.raises(ValueError):
        ExperimentConfig(interactions=100, eval_every=200)
    with pytest.raises(ValueError):
        ExperimentConfig(interactions=100, window=500)
    with pytest.raises(ValueError):
        ExperimentConfig(task="tertiary")
    with pytest.raises(ValueError):
        ExperimentConfig(seeds=())


def test_task_switch_drops_mismatched_pretrain_weights():
    cfg = ExperimentConfig(task="multilabel")
    assert cfg.generator.pretrain_intent_weights is None


def test_config_file_parsing(config_file):
    loaded = load_config_file(config_file)
    cfg = loaded["experiment"]
    assert cfg.task == "multiclass"
    assert cfg.regime == FeedbackRegime.partial_noisy(0.15, 1 / 3)
    assert cfg.seeds == (1, 2)
    assert cfg.hidden == (64,)
    assert cfg.interactions == 200
    assert loaded["stages"]["data"]["n"] == "120"


def test_config_file_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config_file(tmp_path / "nope.ini")


# -- curves ---------------------------------------------------------------------


def test_curve_requires_increasing_steps():
    curve = LearningCurve([CurveRow(100, 0.5, 0.5)])
    with pytest.raises(ValueError):
        curve.append(CurveRow(100, 0.6, 0.6))
    with pytest.raises(ValueError):
        curve.append(CurveRow(150, 1.5, 0.5))


def test_curve_csv_round_trip(tmp_path):
    curve = LearningCurve([CurveRow(100, 0.25, 0.5), CurveRow(200, 0.75, 0.8)])
    path = tmp_path / "curve.csv"
    curve.to_csv(path)
    text = path.read_text(encoding="utf-8")
    assert text.splitlines()[0] == "step,rolling_success,eval_accuracy"
    loaded = LearningCurve.from_csv(path)
    assert [(r.step, r.rolling_success, r.eval_accuracy) for r in loaded.rows] == [
        (100, 0.25, 0.5),
        (200, 0.75, 0.8),
    ]


def test_rolling_success_matches_direct_mean():
    rng = np.random.default_rng(0)
    flags = [bool(b) for b in rng.integers(0, 2, 1000)]
    for w in (1, 10, 500, 1000):
        assert rolling_success(flags, w) == pytest.approx(float(np.mean(flags[-w:])))


# -- run_online -----------------------------------------------------------------


def test_zero_interactions_empty_curve_unchanged_agent():
    cfg = ExperimentConfig(interactions=0, eval_every=1, window=1, seeds=(1,), eval_size=5)
    curve, agent, info = run_online(cfg, seed=1)
    assert len(curve) == 0
    from emorl.harness import build_agent, config_vocab

    fresh = build_agent(cfg, config_vocab(cfg.generator).size, 1)
    assert [p.values.tobytes() for p in agent.net.params()] == [
        p.values.tobytes() for p in fresh.net.params()
    ]


def test_curve_rows_match_rolling_recomputation():
    cfg = ExperimentConfig(**SMALL)
    curve, _, info = run_online(cfg, seed=1)
    flags = info["correct_flags"]
    assert len(curve) == cfg.interactions // cfg.eval_every
    for row in curve.rows:
        expected = rolling_success(flags[: row.step], cfg.window)
        assert row.rolling_success == pytest.approx(expected)


def test_run_online_deterministic_files(tmp_path):
    cfg = ExperimentConfig(**SMALL)
    paths = []
    for name in ("a", "b"):
        curve_path = tmp_path / f"{name}.csv"
        ckpt_dir = tmp_path / name
        run_online(cfg, seed=3, curve_path=curve_path, checkpoint_dir=ckpt_dir)
        paths.append((curve_path, ckpt_dir))
    (c1, d1), (c2, d2) = paths
    assert c1.read_bytes() == c2.read_bytes()
    for f1 in sorted(d1.iterdir()):
        assert f1.read_bytes() == (d2 / f1.name).read_bytes()


def test_run_online_100_interactions_is_fast():
    cfg = ExperimentConfig(interactions=100, eval_every=50, window=50, seeds=(1,), eval_size=20)
    start = time.time()
    run_online(cfg, seed=1)
    assert time.time() - start < 10.0


def test_pretrained_init_reports_baseline():
    cfg = ExperimentConfig(init="pretrained", **SMALL)
    _, _, info = run_online(cfg, seed=1)
    assert 0.0 <= info["baseline_accuracy"] <= 1.0


# -- grid and report --------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_grid(tmp_path_factory):
    run_dir = tmp_path_factory.mktemp("grid")
    base = ExperimentConfig(
        interactions=60,
        eval_every=30,
        window=30,
        eval_size=10,
        seeds=(1,),
        pretrain_size=12,
        pretrain_epochs=2,
    )
    rows = run_grid(base, run_dir)
    return run_dir, base, rows


def test_grid_report_has_twelve_rows(tiny_grid):
    run_dir, _, rows = tiny_grid
    assert len(rows) == 12
    cells = {(r["task"], r["init"], r["regime"]) for r in rows}
    assert len(cells) == 12
    assert all(r["panel_order_ok"] in (0, 1) for r in rows)
    stored = read_report(run_dir / "report.csv")
    assert len(stored) == 12


def test_grid_cell_equals_run_online(tiny_grid, tmp_path):
    run_dir, base, _ = tiny_grid
    cfg = replace(base, task="multiclass", init="scratch", regime=FeedbackRegime.full())
    solo = tmp_path / "solo.csv"
    run_online(cfg, 1, curve_path=solo)
    cell = run_dir / "curves" / "multiclass_scratch_full_s1.csv"
    assert solo.read_bytes() == cell.read_bytes()


def test_report_rederivation_matches_stored(tiny_grid):
    run_dir, _, _ = tiny_grid
    rows = rederive_report(run_dir)
    stored = read_report(run_dir / "report.csv")
    assert report_rows_equal(rows, stored)


def test_curve_files_are_valid_prefixes(tiny_grid):
    run_dir, base, _ = tiny_grid
    for path in (run_dir / "curves").glob("*.csv"):
        curve = LearningCurve.from_csv(path)  # parses -> header + increasing steps
        assert len(curve) == base.interactions // base.eval_every


# -- CLI ---------------------------------------------------------------------------


def test_cli_unknown_flag_exits_2(config_file):
    with pytest.raises(SystemExit) as exc:
        main(["gen-data", "--config", str(config_file), "--bogus"])
    assert exc.value.code == 2


def test_cli_runtime_error_exits_1(tmp_path):
    rc = main(["gen-data", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path / "x.jsonl")])
    assert rc == 1


def test_cli_gen_data_writes_exact_count(config_file, tmp_path, capsys):
    out = tmp_path / "corpus.jsonl"
    rc = main(["gen-data", "--config", str(config_file), "--out", str(out), "--n", "50"])
    assert rc == 0
    assert len(out.read_text(encoding="utf-8").splitlines()) == 50
    assert "50 records" in capsys.readouterr().out


def test_cli_seed_and_env_override(config_file, tmp_path, monkeypatch):
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    c = tmp_path / "c.jsonl"
    main(["gen-data", "--config", str(config_file), "--out", str(a), "--n", "30", "--seed", "9"])
    monkeypatch.setenv("NARLE_SEED", "9")
    main(["gen-data", "--config", str(config_file), "--out", str(b), "--n", "30"])
    monkeypatch.delenv("NARLE_SEED")
    main(["gen-data", "--config", str(config_file), "--out", str(c), "--n", "30"])
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_cli_offline_pipeline_and_run(config_file, tmp_path, capsys):
    corpus = tmp_path / "corpus.jsonl"
    assert main(["gen-data", "--config", str(config_file), "--out", str(corpus), "--n", "150"]) == 0

    scope_dir = tmp_path / "scope"
    assert main(["train-scope", "--config", str(config_file), "--data", str(corpus), "--out", str(scope_dir)]) == 0
    assert (scope_dir / "scope.ckpt").exists()
    assert (scope_dir / "vocab.tsv").exists()

    emo_dir = tmp_path / "emotion"
    rc = main(
        [
            "train-emotion",
            "--config",
            str(config_file),
            "--data",
            str(corpus),
            "--out",
            str(emo_dir),
            "--scope",
            str(scope_dir / "scope.ckpt"),
        ]
    )
    assert rc == 0
    eval_lines = (emo_dir / "emotion_eval.csv").read_text(encoding="utf-8").splitlines()
    assert eval_lines[0] == "split,accuracy,macro_f1"
    assert eval_lines[1].startswith("holdout,")

    agent_dir = tmp_path / "agent"
    assert main(["pretrain-intent", "--config", str(config_file), "--out", str(agent_dir)]) == 0
    assert json.loads((agent_dir / "agent.json").read_text(encoding="utf-8"))["task"] == "multiclass"

    run_dir = tmp_path / "run"
    assert main(["run-online", "--config", str(config_file), "--run-dir", str(run_dir)]) == 0
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["seeds"] == [1, 2]
    assert len(manifest["config_sha256"]) == 64
    curves = sorted((run_dir / "curves").glob("*.csv"))
    assert len(curves) == 2
    assert (run_dir / "report.csv").exists()
    assert (run_dir / "config.ini").read_text(encoding="utf-8") == TEST_CONFIG

    capsys.readouterr()
    assert main(["report", "--run-dir", str(run_dir)]) == 0
    assert "matches the stored report" in capsys.readouterr().out


def test_cli_run_online_interactions_override_is_fast(config_file, tmp_path):
    run_dir = tmp_path / "fast"
    start = time.time()
    rc = main(
        [
            "run-online",
            "--config",
            str(config_file),
            "--run-dir",
            str(run_dir),
            "--interactions",
            "100",
            "--seed",
            "1",
        ]
    )
    assert rc == 0
    assert time.time() - start < 10.0
    curve = next((run_dir / "curves").glob("*.csv"))
    assert curve.read_text(encoding="utf-8").splitlines()[-1].startswith("100,")
