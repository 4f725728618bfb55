"""Toy beam-search decoder over synthetic per-token acoustic lattices.

Each lattice step offers the articulated token, a skip (epsilon)
candidate, and, for part-word fragments, whole-word confusions completed
from the fragment's prefix. The decoder maximizes

    sum over steps of  acoustic(candidate)
                       + lm_weight * log P(token | history)
                       - insertion_penalty * [candidate is not epsilon]

plus the end-of-sentence language-model term, which is the objective that
decoder tuning adjusts.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace
from typing import IO, Iterable, Sequence

from .corpus import Utterance
from .ngram import BOS, EOS, NGramModel
from .seeding import derive_seed

EPSILON = ""


@dataclass(frozen=True)
class Lattice:
    """steps[i] is the candidate list for step i: (token, acoustic_logscore);
    the empty token is the skip candidate."""

    steps: tuple[tuple[tuple[str, float], ...], ...]

    def __post_init__(self):
        steps = tuple(tuple((t, float(a)) for t, a in step) for step in self.steps)
        object.__setattr__(self, "steps", steps)
        for i, step in enumerate(steps):
            if not step:
                raise ValueError(f"step {i} has no candidates")
            if not any(t == EPSILON for t, _ in step):
                raise ValueError(f"step {i} has no epsilon candidate")


@dataclass(frozen=True)
class DecoderConfig:
    lm_weight: float = 1.0
    insertion_penalty: float = 0.0
    beam_width: int = 8

    def __post_init__(self):
        if self.lm_weight < 0 or self.insertion_penalty < 0:
            raise ValueError("lm_weight and insertion_penalty must be >= 0")
        if self.beam_width < 1:
            raise ValueError(f"beam_width must be >= 1, got {self.beam_width}")


@dataclass(frozen=True)
class LatticeChannel:
    """Score model for synthetic lattices. Fragment confusions are prefix
    completions drawn from the lexicon."""

    true_score_mean: float = 6.0
    confusion_score_mean: float = 4.0
    score_sd: float = 0.5
    seed: int = 0
    lexicon: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "lexicon", tuple(self.lexicon))
        if self.score_sd < 0:
            raise ValueError("score_sd must be non-negative")


@dataclass(frozen=True)
class TuneResult:
    lm_weight: float
    insertion_penalty: float
    dev_wer: float
    grid: tuple[dict, ...] = field(compare=False)


def synthesize_lattice(u: Utterance, channel: LatticeChannel) -> Lattice:
    """One step per articulated token, deterministic under the channel seed."""
    if not u.articulated:
        raise ValueError("articulated must be non-empty")
    rng = random.Random(channel.seed)
    steps = []
    for tok in u.articulated:
        cands = [(tok, rng.gauss(channel.true_score_mean, channel.score_sd))]
        if tok.endswith("-") and len(tok) > 1:
            prefix = tok[:-1]
            matches = sorted(w for w in set(channel.lexicon) if w.startswith(prefix))
            if matches:
                k = min(rng.randint(1, 2), len(matches))
                for conf in rng.sample(matches, k):
                    cands.append((conf, rng.gauss(channel.confusion_score_mean, channel.score_sd)))
        cands.append((EPSILON, 0.0))
        steps.append(tuple(cands))
    return Lattice(steps=tuple(steps))


def synthesize_lattices(
    utts: Sequence[Utterance], channel: LatticeChannel, seed: int
) -> list[Lattice]:
    """Per-utterance lattices with seeds derived from the utterance id, so a
    corpus of lattices is reproducible regardless of chunking."""
    return [
        synthesize_lattice(u, replace(channel, seed=derive_seed(seed, "lattice", u.id)))
        for u in utts
    ]


def decode(lattice: Lattice, model: NGramModel, cfg: DecoderConfig) -> list[str]:
    """Beam search; ties broken toward the lexicographically smaller output."""
    history_len = model.order - 1
    init_hist = (BOS,) * history_len
    # hypothesis: (emitted tokens, lm history, score)
    beam: list[tuple[tuple[str, ...], tuple[str, ...], float]] = [((), init_hist, 0.0)]
    for step in lattice.steps:
        expanded = []
        for tokens, hist, score in beam:
            for tok, acoustic in step:
                if tok == EPSILON:
                    expanded.append((tokens, hist, score + acoustic))
                else:
                    lm_term = cfg.lm_weight * _logp(model, tok, hist)
                    new_hist = (hist + (model.map_token(tok),))[-history_len:] if history_len else ()
                    expanded.append(
                        (
                            tokens + (tok,),
                            new_hist,
                            score + acoustic + lm_term - cfg.insertion_penalty,
                        )
                    )
        expanded.sort(key=lambda h: (-h[2], h[0]))
        beam = expanded[: cfg.beam_width]

    def final_score(hyp) -> float:
        tokens, hist, score = hyp
        return score + cfg.lm_weight * _logp(model, EOS, hist)

    best = min(beam, key=lambda h: (-final_score(h), h[0]))
    return list(best[0])


def _logp(model: NGramModel, token: str, hist: tuple[str, ...]) -> float:
    return math.log(model.cond_prob(token, hist))


def default_grid(lo: float = 0.0, hi: float = 4.0, step: float = 0.5) -> list[float]:
    if step <= 0 or hi < lo:
        raise ValueError("need step > 0 and hi >= lo")
    n = round((hi - lo) / step)
    return [round(lo + i * step, 10) for i in range(n + 1)]


def corpus_wer(
    pairs: Sequence[tuple[Lattice, Sequence[str]]],
    model: NGramModel,
    cfg: DecoderConfig,
) -> float:
    from .align import align

    errs = 0
    total = 0
    for lattice, intended in pairs:
        report = align(intended, decode(lattice, model, cfg))
        errs += report.errors
        total += report.ref_len
    return errs / total


def tune_decoder(
    dev: Sequence[tuple[Lattice, Sequence[str]]],
    model: NGramModel,
    lm_weights: Sequence[float] | None = None,
    insertion_penalties: Sequence[float] | None = None,
    beam_width: int = 8,
) -> TuneResult:
    """Grid search minimizing dev corpus WER; ties keep the smaller
    lm_weight, then the smaller insertion_penalty."""
    if not dev:
        raise ValueError("dev set is empty")
    lm_weights = list(lm_weights) if lm_weights is not None else default_grid()
    insertion_penalties = (
        list(insertion_penalties) if insertion_penalties is not None else default_grid()
    )
    grid = []
    best = None
    for lam in lm_weights:
        for beta in insertion_penalties:
            cfg = DecoderConfig(lm_weight=lam, insertion_penalty=beta, beam_width=beam_width)
            wer = corpus_wer(dev, model, cfg)
            grid.append({"lm_weight": lam, "insertion_penalty": beta, "wer": wer})
            if best is None or wer < best[0]:
                best = (wer, lam, beta)
    return TuneResult(
        lm_weight=best[1],
        insertion_penalty=best[2],
        dev_wer=best[0],
        grid=tuple(grid),
    )


# --- JSONL lattice fixtures ----------------------------------------------

def lattice_to_dict(lattice: Lattice, intended: Sequence[str], lattice_id: str) -> dict:
    return {
        "id": lattice_id,
        "intended": " ".join(intended),
        "steps": [[{"t": t, "a": a} for t, a in step] for step in lattice.steps],
    }


def write_lattices(
    dest: IO[str], items: Iterable[tuple[str, Sequence[str], Lattice]]
) -> None:
    for lattice_id, intended, lattice in items:
        dest.write(json.dumps(lattice_to_dict(lattice, intended, lattice_id), sort_keys=True))
        dest.write("\n")


def read_lattices(source: IO[str] | str) -> list[tuple[str, list[str], Lattice]]:
    text = source if isinstance(source, str) else source.read()
    out = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            steps = tuple(
                tuple((c["t"], float(c["a"])) for c in step) for step in obj["steps"]
            )
            out.append((obj["id"], obj["intended"].split(), Lattice(steps=steps)))
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise ValueError(f"lattice line {line_no}: {exc}") from exc
    return out
