"""Simulated end-of-speech detection.

Posterior streams are synthesized from annotated utterances with a linear
silence ramp plus Gaussian noise: during speech the completion posterior
sits at the noise floor, and it climbs toward 1 while silence accumulates
(inside block events and after the utterance ends). A threshold policy
fires at the first frame at or above the threshold; firing before the
true end of speech truncates the utterance.
"""

from __future__ import annotations

import random
from bisect import bisect_left
from dataclasses import dataclass
from typing import Sequence

from .corpus import DysfluencyKind, Utterance


@dataclass(frozen=True)
class PosteriorStream:
    frame_ms: int
    values: tuple[float, ...]
    true_end_ms: int

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if self.frame_ms <= 0:
            raise ValueError("frame_ms must be positive")
        if len(self.values) * self.frame_ms < self.true_end_ms:
            raise ValueError("stream must cover the utterance")
        if any(not 0.0 <= v <= 1.0 for v in self.values):
            raise ValueError("posterior values must lie in [0, 1]")


@dataclass(frozen=True)
class EndpointResult:
    fired_ms: int | None
    truncated: bool
    delay_ms: int


@dataclass(frozen=True)
class EndpointerEval:
    threshold: float
    truncation_rate: float
    p50_delay_ms: int
    p95_delay_ms: int


@dataclass(frozen=True)
class ThresholdTuning:
    threshold: float
    eval: EndpointerEval
    target_met: bool


def synthesize_stream(
    u: Utterance,
    rise_horizon_ms: int = 1500,
    noise_sd: float = 0.0,
    rng_seed: int = 0,
    frame_ms: int = 10,
) -> PosteriorStream:
    """Per-frame completion posterior for one utterance.

    value(t) = clamp01(trailing_silence_ms(t) / rise_horizon_ms + noise);
    silence accumulates inside block events and past the true end. The
    stream extends 1.5 rise horizons past the end so every threshold
    up to 1.0 eventually fires.
    """
    if rise_horizon_ms <= 0:
        raise ValueError("rise_horizon_ms must be positive")
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    blocks = sorted(
        ((e.start_ms, e.end_ms) for e in u.events if e.kind is DysfluencyKind.BLOCK)
    )
    true_end = u.duration_ms
    total_ms = true_end + rise_horizon_ms + rise_horizon_ms // 2
    rng = random.Random(rng_seed)

    values = []
    bi = 0
    for t in range(0, total_ms, frame_ms):
        while bi < len(blocks) and t >= blocks[bi][1]:
            bi += 1
        if t >= true_end:
            silence = t - true_end
        elif bi < len(blocks) and blocks[bi][0] <= t:
            silence = t - blocks[bi][0]
        else:
            silence = 0
        value = silence / rise_horizon_ms
        if noise_sd > 0:
            value += rng.gauss(0.0, noise_sd)
        values.append(min(1.0, max(0.0, value)))
    return PosteriorStream(frame_ms=frame_ms, values=tuple(values), true_end_ms=true_end)


def apply_threshold(
    stream: PosteriorStream, threshold: float, timeout_ms: int
) -> EndpointResult:
    """Fire at the first frame whose value reaches the threshold."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if timeout_ms <= 0:
        raise ValueError("timeout_ms must be positive")
    for j, v in enumerate(stream.values):
        if v >= threshold:
            fired = j * stream.frame_ms
            truncated = fired < stream.true_end_ms
            return EndpointResult(
                fired_ms=fired,
                truncated=truncated,
                delay_ms=fired - stream.true_end_ms if not truncated else 0,
            )
    return EndpointResult(fired_ms=None, truncated=False, delay_ms=timeout_ms)


def _nearest_rank(sorted_vals: Sequence[int], pct: int) -> int:
    """pct-th percentile by nearest rank: the ceil(pct*n/100)-th smallest."""
    n = len(sorted_vals)
    idx = max(0, (n * pct + 99) // 100 - 1)
    return sorted_vals[min(idx, n - 1)]


def evaluate(
    streams: Sequence[PosteriorStream], threshold: float, timeout_ms: int
) -> EndpointerEval:
    """Truncation rate over all streams; nearest-rank delay percentiles
    over the non-truncated ones (never-fired counts as the timeout)."""
    if not streams:
        raise ValueError("no streams to evaluate")
    results = [apply_threshold(s, threshold, timeout_ms) for s in streams]
    return _summarize(results, threshold)


def _summarize(results: Sequence[EndpointResult], threshold: float) -> EndpointerEval:
    truncated = sum(1 for r in results if r.truncated)
    delays = sorted(r.delay_ms for r in results if not r.truncated)
    if delays:
        p50 = _nearest_rank(delays, 50)
        p95 = _nearest_rank(delays, 95)
    else:
        p50 = p95 = 0
    return EndpointerEval(
        threshold=threshold,
        truncation_rate=truncated / len(results),
        p50_delay_ms=p50,
        p95_delay_ms=p95,
    )


def sweep_thresholds(
    streams: Sequence[PosteriorStream],
    thresholds: Sequence[float],
    timeout_ms: int,
) -> list[EndpointerEval]:
    """Evaluate many thresholds using each stream's running-max prefix, so a
    threshold lookup is a binary search instead of a frame scan. Matches
    ``evaluate`` exactly."""
    if not streams:
        raise ValueError("no streams to evaluate")
    prepped = []
    for s in streams:
        cummax = []
        m = 0.0
        for v in s.values:
            if v > m:
                m = v
            cummax.append(m)
        prepped.append((cummax, s.frame_ms, s.true_end_ms))

    evals = []
    for theta in thresholds:
        results = []
        for cummax, frame_ms, true_end in prepped:
            j = bisect_left(cummax, theta)
            if j == len(cummax):
                results.append(EndpointResult(None, False, timeout_ms))
            else:
                fired = j * frame_ms
                truncated = fired < true_end
                results.append(
                    EndpointResult(fired, truncated, fired - true_end if not truncated else 0)
                )
        evals.append(_summarize(results, theta))
    return evals


def default_grid(grid_step: float = 0.005) -> list[float]:
    if not 0.0 < grid_step <= 1.0:
        raise ValueError("grid_step must be in (0, 1]")
    n = round(1.0 / grid_step)
    return [round(i * grid_step, 10) for i in range(1, n + 1)]


def tune_threshold(
    dev_streams: Sequence[PosteriorStream],
    target_rate: float = 0.03,
    grid_step: float = 0.005,
    timeout_ms: int = 5000,
) -> ThresholdTuning:
    """Smallest grid threshold whose dev truncation rate meets the target.

    If no grid point qualifies, returns the best achievable point (the
    smallest threshold attaining the minimum rate) with target_met False.
    """
    if not dev_streams:
        raise ValueError("dev set is empty")
    grid = default_grid(grid_step)
    evals = sweep_thresholds(dev_streams, grid, timeout_ms)
    for ev in evals:
        if ev.truncation_rate <= target_rate:
            return ThresholdTuning(ev.threshold, ev, True)
    best = min(evals, key=lambda ev: (ev.truncation_rate, ev.threshold))
    return ThresholdTuning(best.threshold, best, False)
