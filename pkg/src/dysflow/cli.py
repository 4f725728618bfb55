"""Command-line front end.

Subcommands: generate, train-lm, refine, evaluate, tune-endpointer,
tune-decoder, run-pipeline, report-diff. Exit codes: 0 success, 2 config
error, 3 data error, 4 tuning target unreachable. The DYSFLOW_SEED
environment variable overrides config seeds for smoke tests.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from dataclasses import replace

from . import align as align_mod
from . import decoder as decoder_mod
from . import endpointer as ep_mod
from . import ngram
from . import refine as refine_mod
from .corpus import (
    CorpusError,
    corpus_stats,
    generate_corpus,
    parse_corpus,
    serialize_corpus,
    tokenize,
)
from .pipeline import (
    ConfigError,
    DataError,
    PipelineError,
    load_config,
    render_report_table,
    run_pipeline,
)
from .seeding import derive_seed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TARGET = 4


def _env_seed() -> int | None:
    raw = os.environ.get("DYSFLOW_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"DYSFLOW_SEED must be an integer, got {raw!r}") from exc


def _load_corpus(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_corpus(fh)
    except OSError as exc:
        raise DataError(f"cannot read corpus {path}: {exc}") from exc
    except CorpusError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _load_model(path: str) -> ngram.NGramModel:
    try:
        return ngram.load_from_path(path)
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    except ngram.ModelFormatError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _write_json(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _parse_grid(spec: str) -> list[float]:
    try:
        lo, hi, step = (float(part) for part in spec.split(":"))
    except ValueError as exc:
        raise ConfigError(f"grid must look like lo:hi:step, got {spec!r}") from exc
    return decoder_mod.default_grid(lo, hi, step)


def cmd_generate(args) -> int:
    cfg = load_config(args.config, seed_override=_env_seed() if args.seed is None else args.seed)
    utts = generate_corpus(
        cfg.n_utterances,
        cfg.injection,
        cfg.phrases,
        n_participants=cfg.n_participants,
        severities=cfg.severities,
        seed=cfg.seed,
    )
    Path(args.out).write_text(serialize_corpus(utts), encoding="utf-8")
    if args.lattices:
        lexicon = sorted({tok for u in utts for tok in u.intended})
        channel = replace(cfg.channel, lexicon=tuple(lexicon))
        lattices = decoder_mod.synthesize_lattices(utts, channel, derive_seed(cfg.seed, "cli"))
        with open(args.lattices, "w", encoding="utf-8", newline="\n") as fh:
            decoder_mod.write_lattices(
                fh, ((u.id, list(u.intended), lat) for u, lat in zip(utts, lattices))
            )
    if args.stats:
        st = corpus_stats(utts)
        _write_json(
            {
                "n_utterances": st.n_utterances,
                "median_intended_len": st.median_intended_len,
                "prevalence": {k.value: v for k, v in st.prevalence.items()},
            },
            None,
        )
    return EXIT_OK


def cmd_train_lm(args) -> int:
    utts = _load_corpus(args.corpus)
    field = args.field
    sentences = [list(u.intended if field == "intended" else u.articulated) for u in utts]
    try:
        model = ngram.train(sentences, order=args.order, add_k=args.add_k)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    ngram.save_to_path(model, args.out)
    return EXIT_OK


def cmd_refine(args) -> int:
    model = _load_model(args.lm)
    fillers = refine_mod.DEFAULT_FILLERS
    if args.fillers:
        try:
            words = Path(args.fillers).read_text(encoding="utf-8").split()
        except OSError as exc:
            raise DataError(f"cannot read fillers {args.fillers}: {exc}") from exc
        fillers = frozenset(words)
    try:
        cfg = refine_mod.RefineConfig(
            filler_lexicon=fillers, tau=args.tau, max_phrase_len=args.max_phrase_len
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    try:
        lines = Path(args.input).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read input {args.input}: {exc}") from exc
    out_lines = []
    for line in lines:
        tokens, _ = refine_mod.refine(tokenize(line), model, cfg)
        out_lines.append(" ".join(tokens))
    text = "\n".join(out_lines) + ("\n" if out_lines else "")
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    utts = _load_corpus(args.corpus)
    try:
        hyp_lines = Path(args.hyps).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read hypotheses {args.hyps}: {exc}") from exc
    if len(hyp_lines) != len(utts):
        raise DataError(
            f"{len(utts)} corpus utterances but {len(hyp_lines)} hypothesis lines"
        )
    groups: dict[str, list[align_mod.WerReport]] = {}
    for u, line in zip(utts, hyp_lines):
        report = align_mod.align(list(u.intended), tokenize(line))
        groups.setdefault(u.participant_id, []).append(report)
    agg = align_mod.aggregate(groups, pooled_thresholds=args.pooled_thresholds)
    _write_json(agg.to_dict(), args.out)
    return EXIT_OK


def cmd_tune_endpointer(args) -> int:
    cfg = load_config(args.config) if args.config else None

    def resolve(flag, cfg_value, default):
        if flag is not None:
            return flag
        return cfg_value if cfg is not None else default

    if args.corpus:
        utts = _load_corpus(args.corpus)
    elif cfg is not None:
        utts = generate_corpus(
            cfg.n_utterances, cfg.injection, cfg.phrases,
            n_participants=cfg.n_participants, severities=cfg.severities,
            seed=cfg.seed,
        )
    else:
        raise ConfigError("tune-endpointer needs --corpus or --config")

    env_seed = _env_seed()
    if args.seed is not None:
        seed = args.seed
    elif env_seed is not None:
        seed = env_seed
    else:
        seed = cfg.seed if cfg else 0
    streams = [
        ep_mod.synthesize_stream(
            u,
            rise_horizon_ms=resolve(args.rise_horizon_ms,
                                     cfg.endpointer_rise_horizon_ms if cfg else None, 1500),
            noise_sd=resolve(args.noise_sd, cfg.endpointer_noise_sd if cfg else None, 0.05),
            rng_seed=derive_seed(seed, "stream", u.id),
        )
        for u in utts
    ]
    tuning = ep_mod.tune_threshold(
        streams,
        target_rate=resolve(args.target, cfg.endpointer_target if cfg else None, 0.03),
        grid_step=resolve(args.grid_step, cfg.endpointer_grid_step if cfg else None, 0.005),
        timeout_ms=resolve(args.timeout_ms, cfg.endpointer_timeout_ms if cfg else None, 5000),
    )
    _write_json(
        {
            "threshold": tuning.eval.threshold,
            "truncation_rate": tuning.eval.truncation_rate,
            "p50_delay_ms": tuning.eval.p50_delay_ms,
            "p95_delay_ms": tuning.eval.p95_delay_ms,
            "target_met": tuning.target_met,
        },
        args.out,
    )
    return EXIT_OK if tuning.target_met else EXIT_TARGET


def cmd_tune_decoder(args) -> int:
    grid = _parse_grid(args.grid)
    model = _load_model(args.lm)
    try:
        with open(args.lattices, "r", encoding="utf-8") as fh:
            items = decoder_mod.read_lattices(fh)
    except OSError as exc:
        raise DataError(f"cannot read lattices {args.lattices}: {exc}") from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    result = decoder_mod.tune_decoder(
        [(lat, intended) for _, intended, lat in items],
        model,
        lm_weights=grid,
        insertion_penalties=grid,
        beam_width=args.beam,
    )
    _write_json(
        {
            "lm_weight": result.lm_weight,
            "insertion_penalty": result.insertion_penalty,
            "dev_wer": result.dev_wer,
            "grid": list(result.grid),
        },
        args.out,
    )
    return EXIT_OK


def cmd_run_pipeline(args) -> int:
    cfg = load_config(args.config, seed_override=_env_seed() if args.seed is None else args.seed)
    report = run_pipeline(cfg, args.out_dir)
    sys.stdout.write(render_report_table(report))
    return EXIT_OK


def _flatten(prefix: str, value, out: dict) -> None:
    if isinstance(value, dict):
        for key in sorted(value):
            _flatten(f"{prefix}.{key}" if prefix else str(key), value[key], out)
    elif isinstance(value, list):
        for i, item in enumerate(value):
            _flatten(f"{prefix}[{i}]", item, out)
    else:
        out[prefix] = value


def cmd_report_diff(args) -> int:
    sides = []
    for path in (args.report_a, args.report_b):
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataError(f"cannot read report {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"{path} is not valid JSON: {exc}") from exc
        flat: dict = {}
        _flatten("", raw, flat)
        sides.append(flat)
    a, b = sides
    keys = sorted(set(a) | set(b))
    differences = 0
    for key in keys:
        if key not in a:
            print(f"only in {args.report_b}: {key} = {b[key]!r}")
            differences += 1
        elif key not in b:
            print(f"only in {args.report_a}: {key} = {a[key]!r}")
            differences += 1
        elif a[key] != b[key]:
            print(f"{key}: {a[key]!r} -> {b[key]!r}")
            differences += 1
    print(f"{differences} differing fields")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dysflow",
        description="Synthetic speech-pipeline tuning and dysfluency refinement toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic corpus (and optional lattices)")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lattices", help="also write synthetic lattices to this JSONL file")
    p.add_argument("--stats", action="store_true", help="print corpus prevalence stats")
    p.add_argument("--seed", type=int, help="override config seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train-lm", help="train and save a count language model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--add-k", type=float, default=0.1)
    p.add_argument("--field", choices=("intended", "articulated"), default="intended")
    p.set_defaults(func=cmd_train_lm)

    p = sub.add_parser("refine", help="refine transcripts (fillers + duplicate removal)")
    p.add_argument("--lm", required=True)
    p.add_argument("--input", required=True, help="one transcript per line")
    p.add_argument("--output", help="default: stdout")
    p.add_argument("--tau", type=float, default=0.02)
    p.add_argument("--max-phrase-len", type=int, default=3)
    p.add_argument("--fillers", help="whitespace-separated filler lexicon file")
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("evaluate", help="score hypotheses against corpus intents")
    p.add_argument("--corpus", required=True)
    p.add_argument("--hyps", required=True, help="one hypothesis line per corpus utterance")
    p.add_argument("--out", help="default: stdout")
    p.add_argument("--pooled-thresholds", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tune-endpointer", help="tune the end-of-speech threshold")
    p.add_argument("--corpus", help="utterance JSONL; omit to generate from --config")
    p.add_argument("--config", help="experiment config supplying defaults below")
    p.add_argument("--target", type=float, help="target truncation rate (default 0.03)")
    p.add_argument("--grid-step", type=float, help="threshold grid step (default 0.005)")
    p.add_argument("--timeout-ms", type=int, help="never-fired delay cap (default 5000)")
    p.add_argument("--rise-horizon-ms", type=int, help="silence ramp length (default 1500)")
    p.add_argument("--noise-sd", type=float, help="posterior noise sd (default 0.05)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="default: stdout")
    p.set_defaults(func=cmd_tune_endpointer)

    p = sub.add_parser("tune-decoder", help="grid-search decoder weights on lattices")
    p.add_argument("--lattices", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--grid", default="0:4:0.5", help="lo:hi:step for both weights")
    p.add_argument("--beam", type=int, default=8)
    p.add_argument("--out", help="default: stdout")
    p.set_defaults(func=cmd_tune_decoder)

    p = sub.add_parser("run-pipeline", help="full comparison report for a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, help="override config seed")
    p.set_defaults(func=cmd_run_pipeline)

    p = sub.add_parser("report-diff", help="field-by-field diff of two report JSON files")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.set_defaults(func=cmd_report_diff)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, CorpusError, ngram.ModelFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PipelineError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
