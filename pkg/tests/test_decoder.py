import itertools
import math
import random

import pytest

from dysflow.align import align
from dysflow.corpus import InjectionConfig, generate_corpus, tokenize
from dysflow.decoder import (
    EPSILON,
    DecoderConfig,
    Lattice,
    LatticeChannel,
    decode,
    read_lattices,
    synthesize_lattice,
    synthesize_lattices,
    tune_decoder,
    write_lattices,
)
from dysflow.ngram import BOS, EOS, train
from dysflow.phrases import DEFAULT_COMMANDS


@pytest.fixture(scope="module")
def command_lm():
    return train([list(tokenize(p)) for p in DEFAULT_COMMANDS], order=3, add_k=0.1)


def exhaustive_best(lattice, model, cfg):
    """Enumerate every path through the lattice and maximize the decoder
    objective directly; ties resolved toward the smaller token sequence."""
    best = None
    for choice in itertools.product(*lattice.steps):
        tokens = []
        score = 0.0
        hist = [BOS] * (model.order - 1)
        for tok, acoustic in choice:
            score += acoustic
            if tok == EPSILON:
                continue
            score += cfg.lm_weight * math.log(model.cond_prob(tok, hist))
            score -= cfg.insertion_penalty
            hist = (hist + [model.map_token(tok)])[-(model.order - 1):] if model.order > 1 else []
            tokens.append(tok)
        score += cfg.lm_weight * math.log(model.cond_prob(EOS, hist))
        key = (-score, tuple(tokens))
        if best is None or key < best[0]:
            best = (key, tokens)
    return best[1]


def random_lattice(rng, vocab, max_steps=6, max_cands=4):
    steps = []
    for _ in range(rng.randint(1, max_steps)):
        cands = [(EPSILON, 0.0)]
        for _ in range(rng.randint(0, max_cands - 2)):
            cands.append((rng.choice(vocab), rng.uniform(-2, 7)))
        cands.append((rng.choice(vocab), rng.uniform(-2, 7)))
        rng.shuffle(cands)
        steps.append(tuple(cands))
    return Lattice(steps=tuple(steps))


def utterance_channel(command_lm, **overrides):
    lexicon = tuple(sorted(command_lm.vocab - {BOS, EOS, "<unk>"}))
    params = dict(true_score_mean=6.0, confusion_score_mean=4.0, score_sd=0.5, lexicon=lexicon)
    params.update(overrides)
    return LatticeChannel(**params)


class TestSynthesizeLattice:
    def test_step_count_matches_articulated(self, command_lm):
        cfg = InjectionConfig(part_word_rate=0.4, whole_word_rate=0.2, rng_seed=0)
        (u,) = generate_corpus(1, cfg, DEFAULT_COMMANDS, seed=5)
        lat = synthesize_lattice(u, utterance_channel(command_lm, seed=9))
        assert len(lat.steps) == len(u.articulated)

    def test_every_step_has_epsilon(self, command_lm):
        cfg = InjectionConfig(part_word_rate=0.5, rng_seed=0)
        utts = generate_corpus(5, cfg, DEFAULT_COMMANDS, seed=6)
        for lat in synthesize_lattices(utts, utterance_channel(command_lm), seed=1):
            for step in lat.steps:
                assert any(t == EPSILON for t, _ in step)

    def test_fragment_step_offers_completions(self, command_lm):
        channel = utterance_channel(command_lm, lexicon=("bee", "be", "become", "tea"), seed=4)
        from dysflow.corpus import DysfluencyEvent, DysfluencyKind, Severity, Utterance

        u = Utterance(
            id="u0", participant_id="p0", severity=Severity.MODERATE,
            intended=("become",), articulated=("be-", "become"),
            events=(DysfluencyEvent(DysfluencyKind.PART_WORD_REPETITION, 0, 240, ("be-",)),),
            duration_ms=480,
        )
        lat = synthesize_lattice(u, channel)
        frag_tokens = {t for t, _ in lat.steps[0]}
        assert "be-" in frag_tokens and EPSILON in frag_tokens
        completions = frag_tokens - {"be-", EPSILON}
        assert 1 <= len(completions) <= 2
        assert completions <= {"be", "bee", "become"}

    def test_fluent_greedy_equals_articulated(self, command_lm):
        utts = generate_corpus(10, InjectionConfig(), DEFAULT_COMMANDS, seed=7)
        for lat, u in zip(
            synthesize_lattices(utts, utterance_channel(command_lm), seed=2), utts
        ):
            hyp = decode(lat, command_lm, DecoderConfig(lm_weight=0.0, insertion_penalty=0.0, beam_width=1))
            assert hyp == list(u.articulated)

    def test_deterministic(self, command_lm):
        cfg = InjectionConfig(part_word_rate=0.5, rng_seed=0)
        utts = generate_corpus(4, cfg, DEFAULT_COMMANDS, seed=8)
        chan = utterance_channel(command_lm)
        a = synthesize_lattices(utts, chan, seed=3)
        b = synthesize_lattices(utts, chan, seed=3)
        assert a == b


class TestDecode:
    def test_acoustic_argmax_when_weights_zero(self, command_lm):
        lat = Lattice(steps=(
            (("tea", 2.0), ("sea", 1.0), (EPSILON, 0.0)),
            (("now", -1.0), (EPSILON, 0.0)),
        ))
        hyp = decode(lat, command_lm, DecoderConfig(lm_weight=0.0, insertion_penalty=0.0, beam_width=1))
        assert hyp == ["tea"]  # step 2 argmax is epsilon

    def test_beam_rejects_zero_width(self, command_lm):
        with pytest.raises(ValueError):
            DecoderConfig(beam_width=0)

    def test_matches_exhaustive_oracle(self, command_lm):
        rng = random.Random(303)
        vocab = ["what", "time", "is", "it", "play", "tea", "bee"]
        for trial in range(150):
            lat = random_lattice(rng, vocab)
            cfg = DecoderConfig(
                lm_weight=rng.choice([0.0, 0.5, 1.0, 2.0]),
                insertion_penalty=rng.choice([0.0, 1.0, 3.0]),
                beam_width=4 ** 6,
            )
            assert decode(lat, command_lm, cfg) == exhaustive_best(lat, command_lm, cfg)

    def test_insertion_penalty_crossover_drops_fragments(self, command_lm):
        # fragments score like real words acoustically but the language model
        # treats them as unknowns, so raising the penalty pushes them to skip
        # while known words survive
        channel = utterance_channel(command_lm, seed=11, score_sd=0.1)
        from dysflow.corpus import DysfluencyEvent, DysfluencyKind, Severity, Utterance

        u = Utterance(
            id="u0", participant_id="p0", severity=Severity.MODERATE,
            intended=("play", "my"), articulated=("pl-", "pl-", "play", "my"),
            events=(
                DysfluencyEvent(DysfluencyKind.PART_WORD_REPETITION, 0, 480, ("pl-", "pl-")),
            ),
            duration_ms=960,
        )
        lat = synthesize_lattice(u, channel)
        lax = DecoderConfig(lm_weight=0.5, insertion_penalty=0.0, beam_width=64)
        strict = DecoderConfig(lm_weight=0.5, insertion_penalty=3.0, beam_width=64)
        assert decode(lat, command_lm, lax) == ["pl-", "pl-", "play", "my"]
        assert decode(lat, command_lm, strict) == ["play", "my"]
        assert decode(lat, command_lm, lax) == exhaustive_best(lat, command_lm, lax)
        assert decode(lat, command_lm, strict) == exhaustive_best(lat, command_lm, strict)


class TestTune:
    def _dev(self, command_lm, n=40, seed=21, **rates):
        cfg = InjectionConfig(**rates)
        utts = generate_corpus(n, cfg, DEFAULT_COMMANDS, seed=seed)
        lats = synthesize_lattices(utts, utterance_channel(command_lm), seed=seed)
        return [(lat, list(u.intended)) for lat, u in zip(lats, utts)]

    def test_fluent_dev_prefers_origin(self, command_lm):
        dev = self._dev(command_lm, n=10, seed=23)  # no corruption
        res = tune_decoder(dev, command_lm, lm_weights=[0.0, 1.0], insertion_penalties=[0.0, 1.0], beam_width=8)
        assert res.dev_wer == 0.0
        assert (res.lm_weight, res.insertion_penalty) == (0.0, 0.0)

    def test_grid_table_is_its_own_oracle(self, command_lm):
        dev = self._dev(command_lm, n=25, seed=29, part_word_rate=0.35, whole_word_rate=0.1)
        res = tune_decoder(
            dev, command_lm,
            lm_weights=[0.0, 1.0, 2.0], insertion_penalties=[0.0, 1.0, 2.0], beam_width=8,
        )
        assert res.dev_wer == min(cell["wer"] for cell in res.grid)
        default = next(c for c in res.grid if c["lm_weight"] == 1.0 and c["insertion_penalty"] == 0.0)
        assert res.dev_wer <= default["wer"]

    def test_tuned_beats_origin_on_dysfluent_dev(self, command_lm):
        dev = self._dev(
            command_lm, n=40, seed=31,
            part_word_rate=0.35, whole_word_rate=0.1, interjection_rate=0.08,
        )
        res = tune_decoder(
            dev, command_lm,
            lm_weights=[0.0, 1.0, 2.0, 3.0], insertion_penalties=[0.0, 1.0, 2.0, 3.0],
            beam_width=8,
        )
        origin = next(c for c in res.grid if c["lm_weight"] == 0.0 and c["insertion_penalty"] == 0.0)
        assert res.dev_wer < origin["wer"]
        assert res.lm_weight > 0 or res.insertion_penalty > 0

    def test_insertion_penalty_reduces_insertions_per_lattice(self, command_lm):
        short_phrases = (
            "play my playlist", "set a timer", "call my brother",
            "what time is it", "turn on the lights",
        )
        cfg = InjectionConfig(part_word_rate=0.3, whole_word_rate=0.1)
        utts = generate_corpus(40, cfg, short_phrases, seed=37)
        lats = synthesize_lattices(utts, utterance_channel(command_lm), seed=37)
        small = [(lat, list(u.intended)) for lat, u in zip(lats, utts) if len(lat.steps) <= 6]
        assert len(small) >= 10
        for lam in (0.0, 1.0):
            for lat, intended in small:
                lo = exhaustive_best(lat, command_lm, DecoderConfig(lm_weight=lam, insertion_penalty=0.0, beam_width=1))
                hi = exhaustive_best(lat, command_lm, DecoderConfig(lm_weight=lam, insertion_penalty=4.0, beam_width=1))
                assert align(intended, hi).insertions <= align(intended, lo).insertions

    def test_empty_dev_rejected(self, command_lm):
        with pytest.raises(ValueError):
            tune_decoder([], command_lm)


class TestLatticeIO:
    def test_round_trip(self, command_lm, tmp_path):
        cfg = InjectionConfig(part_word_rate=0.3, rng_seed=0)
        utts = generate_corpus(6, cfg, DEFAULT_COMMANDS, seed=43)
        lats = synthesize_lattices(utts, utterance_channel(command_lm), seed=43)
        path = tmp_path / "lattices.jsonl"
        with open(path, "w", encoding="utf-8") as fh:
            write_lattices(fh, ((u.id, list(u.intended), lat) for u, lat in zip(utts, lats)))
        with open(path, "r", encoding="utf-8") as fh:
            loaded = read_lattices(fh)
        assert [lid for lid, _, _ in loaded] == [u.id for u in utts]
        assert [lat for _, _, lat in loaded] == lats
        assert [ref for _, ref, _ in loaded] == [list(u.intended) for u in utts]

    def test_bad_line_reports_number(self):
        with pytest.raises(ValueError, match="line 1"):
            read_lattices('{"id": "x"}\n')

    def test_step_schema(self, command_lm):
        from dysflow.decoder import lattice_to_dict

        lat = Lattice(steps=((("tea", 1.5), (EPSILON, 0.0)),))
        obj = lattice_to_dict(lat, ["tea"], "u1")
        assert obj["steps"] == [[{"t": "tea", "a": 1.5}, {"t": "", "a": 0.0}]]
