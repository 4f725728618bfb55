"""Posthoc transcript refinement: filler removal with the oh-as-zero
exception, then language-model-gated removal of adjacent repeated words
and phrases."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .ngram import NGramModel

DEFAULT_FILLERS = frozenset({"um", "uh", "eh", "ah", "mmm", "erm", "oh"})
DEFAULT_DIGIT_CONTEXT = frozenset(
    {
        "zero", "one", "two", "three", "four", "five", "six", "seven",
        "eight", "nine", "double", "hundred",
    }
)


@dataclass(frozen=True)
class RefineConfig:
    filler_lexicon: frozenset[str] = DEFAULT_FILLERS
    tau: float = 0.02
    max_phrase_len: int = 3
    digit_context: frozenset[str] = DEFAULT_DIGIT_CONTEXT

    def __post_init__(self):
        object.__setattr__(self, "filler_lexicon", frozenset(self.filler_lexicon))
        object.__setattr__(self, "digit_context", frozenset(self.digit_context))
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        if self.max_phrase_len < 1:
            raise ValueError(f"max_phrase_len must be >= 1, got {self.max_phrase_len}")


@dataclass(frozen=True)
class RefineTrace:
    """What was removed: (position in the stage's working sequence at removal
    time, removed tokens, reason in {"filler", "duplicate"})."""

    removed: tuple[tuple[int, tuple[str, ...], str], ...]
    input_len: int
    output_len: int


def _trace(removed, input_len, output_len) -> RefineTrace:
    assert output_len == input_len - sum(len(toks) for _, toks, _ in removed)
    return RefineTrace(tuple(removed), input_len, output_len)


def remove_fillers(tokens: Sequence[str], cfg: RefineConfig) -> tuple[list[str], RefineTrace]:
    """Strip filler-lexicon tokens; keep "oh" when it reads as the digit zero.

    "oh" survives when its previous surviving token or its next
    non-filler neighbor is a digit-context word.
    """
    tokens = list(tokens)
    is_plain_filler = [tok in cfg.filler_lexicon and tok != "oh" for tok in tokens]

    def next_neighbor(i: int) -> str | None:
        for j in range(i + 1, len(tokens)):
            if not is_plain_filler[j]:
                return tokens[j]
        return None

    out: list[str] = []
    removed: list[tuple[int, tuple[str, ...], str]] = []
    for i, tok in enumerate(tokens):
        if is_plain_filler[i]:
            removed.append((i, (tok,), "filler"))
            continue
        if tok == "oh" and tok in cfg.filler_lexicon:
            prev_ok = bool(out) and out[-1] in cfg.digit_context
            nxt = next_neighbor(i)
            if not (prev_ok or (nxt is not None and nxt in cfg.digit_context)):
                removed.append((i, (tok,), "filler"))
                continue
        out.append(tok)
    return out, _trace(removed, len(tokens), len(out))


def remove_repetitions(
    tokens: Sequence[str], model: NGramModel, cfg: RefineConfig
) -> tuple[list[str], RefineTrace]:
    """Drop the second copy of adjacent duplicate words/phrases the language
    model finds unlikely to repeat.

    Longest phrase first, leftmost first; after each removal the scan
    restarts from the front so stacked and newly-adjacent duplicates
    collapse to a fixpoint (this is what makes refinement idempotent).
    """
    work = list(tokens)
    removed: list[tuple[int, tuple[str, ...], str]] = []
    changed = True
    while changed:
        changed = False
        i = 0
        while i < len(work) and not changed:
            max_len = min(cfg.max_phrase_len, (len(work) - i) // 2)
            for length in range(max_len, 0, -1):
                s1 = work[i : i + length]
                s2 = work[i + length : i + 2 * length]
                if s1 != s2:
                    continue
                if model.adjacent_likelihood(work[:i], s1, s2) < cfg.tau:
                    removed.append((i + length, tuple(s2), "duplicate"))
                    del work[i + length : i + 2 * length]
                    changed = True
                    break
            i += 1
    return work, _trace(removed, len(tokens), len(work))


def refine(
    tokens: Sequence[str], model: NGramModel, cfg: RefineConfig
) -> tuple[list[str], RefineTrace]:
    """Fillers first, then duplicate removal; traces concatenated."""
    after_fillers, t1 = remove_fillers(tokens, cfg)
    out, t2 = remove_repetitions(after_fillers, model, cfg)
    return out, _trace(list(t1.removed) + list(t2.removed), len(tokens), len(out))
