#!/usr/bin/env python3
# How feedback availability and quality shape online learning:
#   full     - every interaction yields implicit feedback
#   partial  - only 15% of interactions do
#   noisy    - of that 15%, one third carries the wrong label
# plus the effect of supervised pretraining (a deliberately skewed, limited
# subset that lands a mid-band baseline the online phase then lifts).
# How to run: python demos/05_feedback_regimes.py  (~60 s)

from emorl.envsim import FeedbackRegime
from emorl.harness import ExperimentConfig, run_online

BUDGET = 10000

print(f"multiclass from scratch, {BUDGET} interactions each, seed 1")
print(f"{'regime':<16s} {'final rolling success':>22s}")
for name, regime in (
    ("full", FeedbackRegime.full()),
    ("partial", FeedbackRegime.partial()),
    ("partial_noisy", FeedbackRegime.partial_noisy()),
):
    config = ExperimentConfig(
        task="multiclass",
        regime=regime,
        interactions=BUDGET,
        eval_every=1000,
        window=500,
        eval_size=100,
    )
    curve, _, _ = run_online(config, seed=1)
    print(f"{name:<16s} {curve.final_success:>22.3f}")

print("\nwith pretraining (skewed 40-example subset):")
config = ExperimentConfig(
    task="multiclass",
    init="pretrained",
    regime=FeedbackRegime.full(),
    interactions=BUDGET,
    eval_every=1000,
    window=500,
    eval_size=100,
)
curve, _, info = run_online(config, seed=1)
print(f"baseline accuracy after pretraining: {info['baseline_accuracy']:.3f}")
print(f"final rolling success after online RL: {curve.final_success:.3f}")
print(f"step reaching 0.80: {curve.first_step_reaching(0.80)}")
