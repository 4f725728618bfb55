import json
from pathlib import Path

import pytest

from dysflow.cli import main
from dysflow.corpus import parse_corpus
from dysflow.ngram import load_from_path
from dysflow.pipeline import load_config, split_utterances

REFERENCE_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "reference.json"


@pytest.fixture()
def small_config(tmp_path):
    cfg = json.loads(REFERENCE_CONFIG.read_text())
    cfg["n_utterances"] = 60
    cfg["n_participants"] = 4
    cfg["decoder_grid"] = {
        "lm_weights": [0.0, 1.0, 2.0],
        "insertion_penalties": [0.0, 1.0, 2.0],
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture()
def corpus_file(tmp_path, small_config):
    out = tmp_path / "corpus.jsonl"
    assert main(["generate", "--config", str(small_config), "--out", str(out)]) == 0
    return out


class TestGenerate:
    def test_writes_parseable_corpus(self, corpus_file):
        utts = parse_corpus(corpus_file.read_text())
        assert len(utts) == 60

    def test_lattice_output(self, tmp_path, small_config):
        out = tmp_path / "c.jsonl"
        lats = tmp_path / "l.jsonl"
        assert main([
            "generate", "--config", str(small_config),
            "--out", str(out), "--lattices", str(lats),
        ]) == 0
        from dysflow.decoder import read_lattices

        items = read_lattices(lats.read_text())
        assert len(items) == 60

    def test_stats_flag_prints_prevalence(self, tmp_path, small_config, capsys):
        out = tmp_path / "c.jsonl"
        assert main(["generate", "--config", str(small_config), "--out", str(out), "--stats"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert "prevalence" in payload

    def test_bad_config_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        out = tmp_path / "c.jsonl"
        assert main(["generate", "--config", str(bad), "--out", str(out)]) == 2

    def test_unknown_config_key_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"seed": 1, "bogus_key": True}))
        out = tmp_path / "c.jsonl"
        assert main(["generate", "--config", str(bad), "--out", str(out)]) == 2

    def test_seed_env_override_changes_output(self, tmp_path, small_config, monkeypatch):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        c = tmp_path / "c.jsonl"
        main(["generate", "--config", str(small_config), "--out", str(a)])
        monkeypatch.setenv("DYSFLOW_SEED", "999")
        main(["generate", "--config", str(small_config), "--out", str(b)])
        monkeypatch.setenv("DYSFLOW_SEED", "2024")  # matches config seed
        main(["generate", "--config", str(small_config), "--out", str(c)])
        assert a.read_text() != b.read_text()
        assert a.read_text() == c.read_text()


class TestTrainAndRefine:
    def test_train_then_refine(self, tmp_path):
        # one fluent utterance per built-in phrase, so the model provably
        # contains the naturally repeated bigram
        from dysflow.corpus import Severity, Utterance, serialize_corpus, tokenize
        from dysflow.phrases import DEFAULT_COMMANDS

        utts = []
        for i, phrase in enumerate(DEFAULT_COMMANDS):
            toks = tuple(tokenize(phrase))
            utts.append(Utterance(
                id=f"u{i}", participant_id="p0", severity=Severity.MILD,
                intended=toks, articulated=toks, events=(),
                duration_ms=240 * len(toks),
            ))
        corpus_path = tmp_path / "fluent.jsonl"
        corpus_path.write_text(serialize_corpus(utts))

        model_path = tmp_path / "model.arpa"
        assert main([
            "train-lm", "--corpus", str(corpus_path), "--out", str(model_path),
            "--order", "3", "--add-k", "0.1",
        ]) == 0
        model = load_from_path(model_path)
        assert model.order == 3

        raw = tmp_path / "in.txt"
        raw.write_text("um what what time is it\nwe had had many discussions about this\n")
        out = tmp_path / "out.txt"
        assert main([
            "refine", "--lm", str(model_path), "--input", str(raw),
            "--output", str(out), "--tau", "0.02",
        ]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "what time is it"
        assert lines[1] == "we had had many discussions about this"

    def test_custom_fillers_file(self, tmp_path):
        from dysflow.corpus import Severity, Utterance, serialize_corpus

        toks = ("tea", "is", "nice")
        utt = Utterance(
            id="u0", participant_id="p0", severity=Severity.MILD,
            intended=toks, articulated=toks, events=(), duration_ms=720,
        )
        corpus_path = tmp_path / "c.jsonl"
        corpus_path.write_text(serialize_corpus([utt]))
        model_path = tmp_path / "m.arpa"
        main(["train-lm", "--corpus", str(corpus_path), "--out", str(model_path)])

        fillers = tmp_path / "fillers.txt"
        fillers.write_text("hmm\nwell\n")
        raw = tmp_path / "in.txt"
        raw.write_text("hmm well tea is um nice\n")
        out = tmp_path / "out.txt"
        assert main([
            "refine", "--lm", str(model_path), "--input", str(raw),
            "--output", str(out), "--fillers", str(fillers),
        ]) == 0
        # only the lexicon from the file is stripped; "um" is not in it
        assert out.read_text().splitlines() == ["tea is um nice"]

    def test_missing_model_exits_3(self, tmp_path):
        raw = tmp_path / "in.txt"
        raw.write_text("hello\n")
        assert main([
            "refine", "--lm", str(tmp_path / "nope.arpa"), "--input", str(raw),
        ]) == 3

    def test_missing_corpus_exits_3(self, tmp_path):
        assert main([
            "train-lm", "--corpus", str(tmp_path / "nope.jsonl"),
            "--out", str(tmp_path / "m.arpa"),
        ]) == 3


class TestEvaluate:
    def test_reports_exact_fields(self, tmp_path, corpus_file, capsys):
        utts = parse_corpus(corpus_file.read_text())
        hyps = tmp_path / "hyps.txt"
        hyps.write_text("\n".join(" ".join(u.intended) for u in utts) + "\n")
        assert main(["evaluate", "--corpus", str(corpus_file), "--hyps", str(hyps)]) == 0
        payload = json.loads(capsys.readouterr().out)
        for key in ("mean_wer", "sd_wer", "median_wer", "iqr_wer",
                    "thr10", "thr15", "ins_share", "sub_share", "del_share"):
            assert key in payload
        assert payload["mean_wer"] == 0.0
        assert payload["thr10"] == 1.0

    def test_line_count_mismatch_exits_3(self, tmp_path, corpus_file):
        hyps = tmp_path / "hyps.txt"
        hyps.write_text("only one line\n")
        assert main(["evaluate", "--corpus", str(corpus_file), "--hyps", str(hyps)]) == 3


class TestTuneEndpointer:
    def test_outputs_table_shaped_json(self, tmp_path, corpus_file, capsys):
        rc = main([
            "tune-endpointer", "--corpus", str(corpus_file),
            "--target", "0.05", "--grid-step", "0.01", "--timeout-ms", "5000",
            "--seed", "3",
        ])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert set(payload) >= {"threshold", "truncation_rate", "p50_delay_ms", "p95_delay_ms"}
        assert payload["truncation_rate"] <= 0.05

    def test_unreachable_target_exits_4(self, tmp_path, corpus_file, capsys):
        rc = main([
            "tune-endpointer", "--corpus", str(corpus_file),
            "--target", "-0.1", "--grid-step", "0.25", "--seed", "3",
        ])
        assert rc == 4

    def test_config_supplies_corpus_and_defaults(self, small_config, capsys):
        rc = main(["tune-endpointer", "--config", str(small_config)])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["target_met"]
        assert payload["truncation_rate"] <= 0.03

    def test_needs_corpus_or_config_exits_2(self):
        assert main(["tune-endpointer", "--target", "0.03"]) == 2


class TestTuneDecoder:
    def test_tunes_from_files(self, tmp_path, small_config, capsys):
        corpus = tmp_path / "c.jsonl"
        lats = tmp_path / "l.jsonl"
        model_path = tmp_path / "m.arpa"
        main(["generate", "--config", str(small_config), "--out", str(corpus), "--lattices", str(lats)])
        main(["train-lm", "--corpus", str(corpus), "--out", str(model_path)])
        rc = main([
            "tune-decoder", "--lattices", str(lats), "--lm", str(model_path),
            "--grid", "0:2:1", "--beam", "4",
        ])
        assert rc == 0
        payload = json.loads(capsys.readouterr().out)
        assert {"lm_weight", "insertion_penalty", "dev_wer", "grid"} <= set(payload)
        assert len(payload["grid"]) == 9

    def test_bad_grid_exits_2(self, tmp_path):
        assert main([
            "tune-decoder", "--lattices", "x", "--lm", "y", "--grid", "nope",
        ]) == 2


class TestRunPipeline:
    def test_full_run_and_diff(self, tmp_path, small_config, capsys):
        out1 = tmp_path / "run1"
        out2 = tmp_path / "run2"
        assert main(["run-pipeline", "--config", str(small_config), "--out-dir", str(out1)]) == 0
        assert main(["run-pipeline", "--config", str(small_config), "--out-dir", str(out2)]) == 0
        r1 = (out1 / "report.json").read_bytes()
        r2 = (out2 / "report.json").read_bytes()
        assert r1 == r2
        assert (out1 / "report.txt").exists()
        assert (out1 / "corpus.jsonl").exists()

        capsys.readouterr()
        rc = main(["report-diff", str(out1 / "report.json"), str(out2 / "report.json")])
        assert rc == 0
        assert "0 differing fields" in capsys.readouterr().out

    def test_diff_reports_changed_fields(self, tmp_path, capsys):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text(json.dumps({"x": 1, "nested": {"y": 2}}))
        b.write_text(json.dumps({"x": 1, "nested": {"y": 3}}))
        main(["report-diff", str(a), str(b)])
        out = capsys.readouterr().out
        assert "nested.y" in out
        assert "1 differing fields" in out


class TestSplitHygiene:
    def test_no_id_in_both_partitions(self, corpus_file):
        cfg = load_config(REFERENCE_CONFIG)
        utts = parse_corpus(corpus_file.read_text())
        dev, hold = split_utterances(utts, cfg.split)
        assert {u.id for u in dev}.isdisjoint({u.id for u in hold})
        assert len(dev) + len(hold) == len(utts)
