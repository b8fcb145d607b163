from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from emorl.emotion import EmotionLabel
from emorl.envsim import (
    Environment,
    FeedbackRegime,
    ProtocolError,
    apply_regime,
    build_offline_corpus,
    config_vocab,
    corpus_from_jsonl,
    corpus_to_jsonl,
    default_config,
    draw_intent,
    draw_pretrain_set,
    generate_email,
    respond,
)
from emorl.policy import MulticlassPolicy
from emorl.text import insertion_positions, segment


# -- configuration ------------------------------------------------------------


def test_default_config_validates(gen_config):
    assert gen_config.task == "multiclass"
    assert len(gen_config.valid_combos) == 6
    assert len(set(gen_config.valid_combos)) == 6


def test_lexicons_must_be_disjoint(gen_config):
    with pytest.raises(ValueError, match="disjoint"):
        replace(gen_config, general_pos=list(gen_config.general_pos) + [gen_config.directed_pos[0]])


def test_templates_must_end_with_split_punctuation(gen_config):
    with pytest.raises(ValueError, match="punctuation"):
        replace(gen_config, distractor_templates=["no trailing mark"])


def test_rates_validated(gen_config):
    with pytest.raises(ValueError):
        replace(gen_config, q_pos=1.5)
    with pytest.raises(ValueError):
        FeedbackRegime("partial", p=0.0)
    with pytest.raises(ValueError):
        FeedbackRegime("partial_noisy", p=0.15, wrong_frac=1.0)
    with pytest.raises(ValueError):
        FeedbackRegime("sometimes")


def test_config_vocab_deterministic(gen_config):
    assert config_vocab(gen_config).id_to_token == config_vocab(gen_config).id_to_token


# -- email generation ---------------------------------------------------------


def test_generate_email_deterministic(gen_config):
    a = generate_email(gen_config, np.random.default_rng(5), 0)
    b = generate_email(gen_config, np.random.default_rng(5), 0)
    assert a.text == b.text
    assert a.sentences == b.sentences


def test_generate_email_unknown_intent(gen_config):
    with pytest.raises(ValueError, match="unknown"):
        generate_email(gen_config, np.random.default_rng(0), 7)
    ml = default_config(task="multilabel")
    with pytest.raises(ValueError, match="unknown"):
        generate_email(ml, np.random.default_rng(0), (1, 1, 1, 1, 1, 1))


def test_zero_distractor_rate_task_intents_fully_relevant(gen_config):
    cfg = replace(gen_config, distractor_rate=0.0)
    rng = np.random.default_rng(1)
    for intent in (0, 1):
        for _ in range(10):
            email = generate_email(cfg, rng, intent)
            assert all(s.task_relevant for s in email.sentences)
    ml = default_config(task="multilabel", distractor_rate=0.0)
    for combo in ml.valid_combos:
        email = generate_email(ml, rng, combo)
        assert all(s.task_relevant for s in email.sentences)


def test_other_intent_has_no_task_relevant_sentences(gen_config):
    rng = np.random.default_rng(2)
    email = generate_email(gen_config, rng, 2)
    assert not any(s.task_relevant for s in email.sentences)


def test_multilabel_email_realizes_every_set_bit():
    cfg = default_config(task="multilabel", distractor_rate=0.0)
    rng = np.random.default_rng(3)
    combo = (1, 1, 0, 0, 0, 0)
    email = generate_email(cfg, rng, combo)
    text = email.text
    pools = [set(" ".join(p).lower().split()) for p in cfg.bit_templates]
    assert email.gold_intent == combo
    assert len(email.sentences) >= 2


def test_intent_distribution_matches_prior(gen_config):
    rng = np.random.default_rng(4)
    counts = Counter(draw_intent(gen_config, rng) for _ in range(10000))
    for intent in range(3):
        assert abs(counts[intent] / 10000 - 1 / 3) < 0.02
    skewed = replace(gen_config, intent_prior=(0.5, 0.3, 0.2))
    counts = Counter(draw_intent(skewed, rng) for _ in range(10000))
    for intent, p in enumerate((0.5, 0.3, 0.2)):
        assert abs(counts[intent] / 10000 - p) < 0.02


def test_labeled_segments_match_resegmentation(gen_config, vocab):
    rng = np.random.default_rng(6)
    corpus = build_offline_corpus(gen_config, rng, 50)
    for m in corpus:
        assert [s.text for s in segment(m.text, vocab)] == [s.text for s in m.sentences]


# -- replies ------------------------------------------------------------------


def test_forced_positive_reply(gen_config):
    cfg = replace(gen_config, q_pos=1.0, q_neg=1.0)
    rng = np.random.default_rng(7)
    reply = respond(cfg, rng, gold=0, taken=0)
    assert reply.gold_emotion is EmotionLabel.POSITIVE
    assert any(s.directed == "pos" for s in reply.sentences)


def test_forced_negative_reply(gen_config):
    cfg = replace(gen_config, q_pos=1.0, q_neg=1.0)
    rng = np.random.default_rng(8)
    reply = respond(cfg, rng, gold=0, taken=2)
    assert reply.gold_emotion is EmotionLabel.NEGATIVE
    assert any(s.directed == "neg" for s in reply.sentences)


def test_silent_user_always_neutral(gen_config):
    cfg = replace(gen_config, q_pos=0.0, q_neg=0.0)
    rng = np.random.default_rng(9)
    for taken in (0, 1, 2):
        reply = respond(cfg, rng, gold=0, taken=taken)
        assert reply.gold_emotion is EmotionLabel.NEUTRAL
        assert not any(s.directed != "none" for s in reply.sentences)


def test_neutral_iff_no_directed_emotion(gen_config):
    rng = np.random.default_rng(10)
    for _ in range(200):
        reply = respond(gen_config, rng, gold=0, taken=int(rng.integers(3)))
        has_directed = any(s.directed != "none" for s in reply.sentences)
        assert (reply.gold_emotion is EmotionLabel.NEUTRAL) == (not has_directed)


def test_directed_phrase_lands_after_task_sentence(gen_config):
    cfg = replace(gen_config, q_pos=1.0, q_neg=1.0)
    rng = np.random.default_rng(11)
    for _ in range(100):
        reply = respond(cfg, rng, gold=0, taken=int(rng.integers(3)))
        directed = [inj for inj in reply.injections if inj.register == "directed"]
        assert len(directed) == 1
        offset = directed[0].offset
        # the character before the splice point closes a task-relevant segment
        base = reply.base_text
        assert offset in insertion_positions(base)
        prefix_segments = segment(base[:offset])
        tail = prefix_segments[-1].text
        task_texts = {s.text for s in reply.sentences if s.task_relevant}
        assert tail in task_texts


def test_injection_offsets_are_insertion_positions(gen_config):
    rng = np.random.default_rng(12)
    corpus = build_offline_corpus(gen_config, rng, 300)
    for m in corpus:
        positions = set(insertion_positions(m.base_text))
        for inj in m.injections:
            assert inj.offset in positions


# -- feedback regimes ---------------------------------------------------------


def test_full_regime_is_identity(gen_config):
    rng = np.random.default_rng(13)
    for label in EmotionLabel:
        for _ in range(20):
            present, observed = apply_regime(FeedbackRegime.full(), rng, label)
            assert present and observed is label


def test_partial_regime_rate(gen_config):
    rng = np.random.default_rng(14)
    n = 20000
    hits = 0
    for _ in range(n):
        present, observed = apply_regime(FeedbackRegime.partial(), rng, EmotionLabel.POSITIVE)
        if present:
            assert observed is EmotionLabel.POSITIVE  # partial never corrupts
            hits += 1
    assert abs(hits / n - 0.15) < 0.01


def test_absent_feedback_reports_neutral():
    rng = np.random.default_rng(15)
    regime = FeedbackRegime.partial(p=0.01)
    seen_absent = False
    for _ in range(500):
        present, observed = apply_regime(regime, rng, EmotionLabel.NEGATIVE)
        if not present:
            assert observed is EmotionLabel.NEUTRAL
            seen_absent = True
    assert seen_absent


def test_noisy_regime_swaps_polarity(gen_config):
    rng = np.random.default_rng(16)
    regime = FeedbackRegime.partial_noisy(p=1.0, wrong_frac=1 / 3)
    flips = Counter()
    n = 30000
    for _ in range(n):
        _, observed = apply_regime(regime, rng, EmotionLabel.POSITIVE)
        flips[observed] += 1
    assert flips[EmotionLabel.NEUTRAL] == 0  # positive corrupts to negative only
    assert abs(flips[EmotionLabel.NEGATIVE] / n - 1 / 3) < 0.01
    neutral_flips = Counter()
    for _ in range(n):
        _, observed = apply_regime(regime, rng, EmotionLabel.NEUTRAL)
        neutral_flips[observed] += 1
    # corrupted neutrals split evenly between the two polarities
    assert abs(neutral_flips[EmotionLabel.POSITIVE] / n - 1 / 6) < 0.01
    assert abs(neutral_flips[EmotionLabel.NEGATIVE] / n - 1 / 6) < 0.01


# -- offline corpus -----------------------------------------------------------


def test_corpus_requires_positive_size(gen_config):
    with pytest.raises(ValueError):
        build_offline_corpus(gen_config, np.random.default_rng(0), 0)


def test_corpus_classes_balanced(gen_config):
    corpus = build_offline_corpus(gen_config, np.random.default_rng(17), 999)
    counts = Counter(m.gold_emotion for m in corpus)
    for label in EmotionLabel:
        assert counts[label] == 333


def test_corpus_general_only_samples_are_neutral(gen_config):
    corpus = build_offline_corpus(gen_config, np.random.default_rng(18), 600)
    for m in corpus:
        directed = any(s.directed != "none" for s in m.sentences)
        assert (m.gold_emotion is EmotionLabel.NEUTRAL) == (not directed)
        if m.gold_emotion is EmotionLabel.NEUTRAL and any(s.general != "none" for s in m.sentences):
            assert not directed  # general emotion alone never sets a polarity


def test_corpus_determinism_byte_identical(gen_config, tmp_path):
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    corpus_to_jsonl(build_offline_corpus(gen_config, np.random.default_rng(19), 200), a)
    corpus_to_jsonl(build_offline_corpus(gen_config, np.random.default_rng(19), 200), b)
    assert a.read_bytes() == b.read_bytes()


def test_corpus_jsonl_round_trip(gen_config, tmp_path):
    corpus = build_offline_corpus(gen_config, np.random.default_rng(20), 60)
    path = tmp_path / "corpus.jsonl"
    corpus_to_jsonl(corpus, path)
    assert len(path.read_text(encoding="utf-8").splitlines()) == 60
    loaded = corpus_from_jsonl(path)
    assert len(loaded) == 60
    for orig, back in zip(corpus, loaded):
        assert back.sentences == orig.sentences
        assert back.gold_intent == orig.gold_intent
        assert back.gold_emotion == orig.gold_emotion


def test_pretrain_set_skew(gen_config):
    cfg = replace(gen_config, pretrain_intent_weights=(0.7, 0.3, 0.0), pretrain_template_frac=0.3)
    rng = np.random.default_rng(21)
    subset = draw_pretrain_set(cfg, rng, 200)
    intents = Counter(m.gold_intent for m in subset)
    assert intents[2] == 0
    assert intents[0] > intents[1]
    # template restriction: only the leading fraction of each pool appears
    allowed = {t for name in ("modify", "cancel") for t in cfg.intent_templates[name][:3]}
    allowed_segments = {s.text for t in allowed for s in segment(t)}
    for m in subset:
        for s in m.sentences:
            if s.task_relevant:
                assert s.text in allowed_segments


# -- environment protocol ------------------------------------------------------


def test_step_before_serve_is_protocol_error(gen_config):
    env = Environment(gen_config, seed=0)
    with pytest.raises(ProtocolError):
        env.step(0)


def test_step_consumes_pending_email(gen_config):
    env = Environment(gen_config, seed=0)
    env.serve()
    env.step(0)
    with pytest.raises(ProtocolError):
        env.step(0)


def test_learned_channel_requires_models(gen_config):
    with pytest.raises(ValueError, match="train-scope"):
        Environment(gen_config, seed=0, channel="learned")


def test_oracle_full_rewards_track_correctness(gen_config):
    cfg = replace(gen_config, q_pos=1.0, q_neg=1.0)
    env = Environment(cfg, seed=22)
    rng = np.random.default_rng(23)
    for _ in range(300):
        email, state = env.serve()
        action = int(rng.integers(3))
        rec = env.step(action)
        assert rec.correct == (action == email.gold_intent)
        assert rec.reward == (1.0 if rec.correct else -1.0)
        assert rec.feedback_present


def test_record_invariants_under_partial_regime(gen_config):
    env = Environment(gen_config, seed=24, regime=FeedbackRegime.partial())
    rng = np.random.default_rng(25)
    absent = 0
    from emorl.emotion import reward_of

    for _ in range(400):
        env.serve()
        rec = env.step(int(rng.integers(3)))
        assert rec.reward == reward_of(rec.observed)
        if not rec.feedback_present:
            absent += 1
            assert rec.reward == 0.0
    assert absent > 200  # presence is rare at p=0.15


def test_learned_channel_agreement_tracks_emotion_accuracy(
    gen_config, vocab, trained_scope, emotion_training
):
    emotion_model, metrics = emotion_training
    cfg = replace(gen_config, q_pos=1.0, q_neg=1.0)
    env = Environment(
        cfg, seed=26, channel="learned", scope_model=trained_scope, emotion_model=emotion_model, vocab=vocab
    )
    agent = MulticlassPolicy(vocab.size, seed=3)
    agree = 0
    n = 1500
    for _ in range(n):
        _, state = env.serve()
        action, _ = agent.act(state)
        rec = env.step(action)
        agree += int(rec.reward == (1.0 if rec.correct else -1.0))
    assert agree / n >= metrics["accuracy"] - 0.05


def test_multilabel_environment_exact_match():
    cfg = replace(default_config(task="multilabel"), q_pos=1.0, q_neg=1.0)
    env = Environment(cfg, seed=27)
    rng = np.random.default_rng(28)
    for _ in range(100):
        email, _ = env.serve()
        wrong = tuple(1 - b for b in email.gold_intent)
        rec = env.step(wrong)
        assert not rec.correct and rec.reward == -1.0
        email, _ = env.serve()
        rec = env.step(email.gold_intent)
        assert rec.correct and rec.reward == 1.0


def test_environment_seed_determinism(gen_config):
    def trace(seed):
        env = Environment(gen_config, seed=seed, regime=FeedbackRegime.partial_noisy())
        out = []
        for _ in range(50):
            email, state = env.serve()
            rec = env.step(0)
            out.append((email.text, rec.reward, rec.feedback_present, rec.observed))
        return out

    assert trace(99) == trace(99)
    assert trace(99) != trace(100)
