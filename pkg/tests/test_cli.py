import csv
import json
import os
import sys

import numpy as np
import pytest

from wadistill import load_wa, parse_pautomac_sequences, random_pfa, save_wa
from wadistill.cli import (
    main,
    open_oracle,
    parse_ranks,
    pautomac_rank_schedule,
    spice_rank_schedule,
)
from wadistill.spectral import read_spectrum_report

HERE = os.path.dirname(os.path.abspath(__file__))
MOCK = f"{sys.executable} {os.path.join(HERE, 'mock_oracle_server.py')}"


@pytest.fixture
def fig_wa_file(tmp_path, fig_wa):
    path = tmp_path / "fig.wa"
    save_wa(fig_wa, path)
    return str(path)


def read_report(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestRankSchedules:
    def test_spice_schedule_has_forty_ranks_at_thousand(self):
        ranks = spice_rank_schedule(1000)
        assert len(ranks) == len(set(ranks)) == 40
        assert max(ranks) <= 1000
        assert ranks[:15] == list(range(1, 16))

    def test_spice_schedule_small_cap(self):
        ranks = spice_rank_schedule(8)
        assert ranks == list(range(1, 9))

    def test_pautomac_schedule(self):
        ranks = pautomac_rank_schedule(2000)
        assert len(ranks) == len(set(ranks)) == 25
        assert max(ranks) <= 2000

    def test_parse_explicit_lists(self):
        assert parse_ranks("1,2,4-6", 100) == [1, 2, 4, 5, 6]
        assert parse_ranks("8,2,2", 100) == [2, 8]
        with pytest.raises(Exception):
            parse_ranks("", 100)
        # out-of-cap values are filtered, emptiness is an error
        with pytest.raises(Exception):
            parse_ranks("50", 10)


class TestPfaGen:
    def test_generates_loadable_stochastic_machine(self, tmp_path):
        out = tmp_path / "machine.wa"
        code = main([
            "pfa", "gen", "--states", "4", "--alphabet-size", "3",
            "--seed", "5", "--wa-out", str(out),
        ])
        assert code == 0
        wa = load_wa(out)
        assert wa.stochastic and wa.rank == 4
        assert abs(wa.next_dist(()).sum() - 1.0) < 1e-9

    def test_matches_library_call(self, tmp_path):
        out = tmp_path / "machine.wa"
        main([
            "pfa", "gen", "--states", "3", "--alphabet-size", "2",
            "--symbol-sparsity", "0.8", "--transition-sparsity", "0.6",
            "--seed", "9", "--wa-out", str(out),
        ])
        direct = random_pfa(3, 2, 0.8, 0.6, seed=9)
        assert np.array_equal(load_wa(out).mats, direct.mats)


class TestDistill:
    def test_recovers_the_worked_example(self, tmp_path, fig_wa_file, fig_wa):
        out = tmp_path / "distilled.wa"
        spectrum = tmp_path / "spectrum.tsv"
        code = main([
            "distill", "--oracle", f"wa:{fig_wa_file}",
            "--p", "16", "--s", "16", "--max-len", "30",
            "--strategy", "oracle", "--seed-basis", "0",
            "--rank", "2", "--wa-out", str(out),
            "--spectrum-out", str(spectrum),
        ])
        assert code == 0
        distilled = load_wa(out)
        assert distilled.weight((0, 1)) == pytest.approx(5 / 96, abs=1e-8)
        report = read_spectrum_report(spectrum)
        assert report.hankel_rank == 2
        manifest = json.loads((tmp_path / "distilled.wa.manifest.json").read_text())
        assert manifest["rank"] == 2
        assert manifest["seed_basis"] == 0
        assert manifest["oracle"]["hash"]
        assert manifest["achieved_p"] >= 16

    def test_rank_beyond_basis_is_invalid_input(self, tmp_path, fig_wa_file):
        code = main([
            "distill", "--oracle", f"wa:{fig_wa_file}",
            "--p", "4", "--s", "4", "--rank", "100",
            "--wa-out", str(tmp_path / "x.wa"),
        ])
        assert code == 2

    def test_unreachable_oracle_exit_code(self, tmp_path):
        code = main([
            "distill", "--oracle", "tcp:127.0.0.1:1",
            "--p", "4", "--s", "4", "--rank", "1",
            "--wa-out", str(tmp_path / "x.wa"),
        ])
        assert code == 4

    def test_missing_wa_document_is_parse_error(self, tmp_path):
        code = main([
            "distill", "--oracle", f"wa:{tmp_path}/absent.wa",
            "--p", "4", "--s", "4", "--rank", "1",
            "--wa-out", str(tmp_path / "x.wa"),
        ])
        assert code == 3

    def test_basis_round_trip_through_files(self, tmp_path, fig_wa_file):
        basis_out = tmp_path / "basis.txt"
        first = tmp_path / "first.wa"
        main([
            "distill", "--oracle", f"wa:{fig_wa_file}",
            "--p", "8", "--s", "8", "--rank", "2", "--seed-basis", "3",
            "--wa-out", str(first), "--basis-out", str(basis_out),
        ])
        second = tmp_path / "second.wa"
        code = main([
            "distill", "--oracle", f"wa:{fig_wa_file}",
            "--basis-in", str(basis_out), "--rank", "2",
            "--wa-out", str(second),
        ])
        assert code == 0
        assert np.array_equal(load_wa(first).mats, load_wa(second).mats)


class TestEval:
    def test_self_consistency(self, tmp_path, fig_wa_file):
        report = tmp_path / "report.csv"
        code = main([
            "eval", "--oracle", f"wa:{fig_wa_file}",
            "--candidate", f"wa:{fig_wa_file}",
            "--n-eval", "50", "--seed-eval", "2", "--ndcg-n", "2",
            "--report", str(report),
        ])
        assert code == 0
        rows = read_report(report)
        values = {(r["metric"], r["eval_set"]): float(r["value"]) for r in rows}
        assert values[("NDCG2", "S_RNN")] == 1.0
        assert values[("WER-D", "S_RNN")] == 0.0
        assert all(r["status"] == "ok" for r in rows)

    def test_test_file_rows_and_debug_dump(self, tmp_path, fig_wa_file):
        test_file = tmp_path / "test.txt"
        test_file.write_text("2 2\n1 0\n2 0 1\n")
        report = tmp_path / "report.csv"
        dump = tmp_path / "dump.tsv"
        code = main([
            "eval", "--oracle", f"wa:{fig_wa_file}",
            "--candidate", f"wa:{fig_wa_file}",
            "--test-file", str(test_file),
            "--n-eval", "5", "--ndcg-n", "2",
            "--report", str(report), "--debug-dump", str(dump),
        ])
        assert code == 0
        rows = read_report(report)
        assert {r["eval_set"] for r in rows} == {"S_Test", "S_RNN"}
        dump_rows = dump.read_text().strip().splitlines()
        assert len(dump_rows) >= 2 + 3  # prefixes of both test sequences
        assert all(len(line.split("\t")) == 6 for line in dump_rows)

    def test_missing_test_file_is_parse_error(self, tmp_path, fig_wa_file):
        code = main([
            "eval", "--oracle", f"wa:{fig_wa_file}",
            "--candidate", f"wa:{fig_wa_file}",
            "--test-file", str(tmp_path / "absent.txt"),
        ])
        assert code == 3

    def test_ngram_candidate(self, tmp_path, fig_wa_file):
        model = tmp_path / "model.ngram"
        main([
            "ngram", "train", "--oracle", f"wa:{fig_wa_file}",
            "--n", "3", "--budget", "2000", "--seed", "1", "--out", str(model),
        ])
        report = tmp_path / "report.csv"
        code = main([
            "eval", "--oracle", f"wa:{fig_wa_file}",
            "--candidate", f"ngram:{model}",
            "--n-eval", "40", "--ndcg-n", "2", "--report", str(report),
        ])
        assert code == 0
        values = {r["metric"]: float(r["value"]) for r in read_report(report)}
        assert values["NDCG2"] > 0.5


class TestSweep:
    def test_rank_saturation_and_delta_rows(self, tmp_path, fig_wa_file):
        report = tmp_path / "sweep.csv"
        code = main([
            "sweep", "--oracle", f"wa:{fig_wa_file}",
            "--basis-sizes", "16:16", "--strategies", "oracle",
            "--ranks", "1,2,4", "--n-eval", "60", "--ndcg-n", "2",
            "--seed-basis", "0", "--seed-eval", "1",
            "--report", str(report),
        ])
        assert code == 0
        rows = read_report(report)
        wer = {
            int(r["rank"]): float(r["value"])
            for r in rows
            if r["metric"] == "WER-D" and r["eval_set"] == "S_RNN"
        }
        assert set(wer) == {1, 2, 4}
        assert abs(wer[2] - wer[4]) <= 1e-8  # saturated at the true rank
        deltas = [r for r in rows if r["metric"].startswith("delta_")]
        assert {d["metric"] for d in deltas} == {"delta_NDCG2", "delta_WER-D"}
        assert all(float(d["value"]) <= 1.0 for d in deltas)
        assert all(r["hankel_rank"] == "2" for r in rows if r["metric"] == "WER-D")
        assert all(
            r["wa_params"] == str(int(r["rank"]) ** 2 * 2 + 2 * int(r["rank"]))
            for r in rows if r["metric"] == "WER-D"
        )

    def test_config_file_supplies_defaults(self, tmp_path, fig_wa_file):
        report = tmp_path / "sweep.csv"
        config = tmp_path / "sweep.json"
        config.write_text(json.dumps({
            "oracle": f"wa:{fig_wa_file}",
            "basis-sizes": "8:8",
            "ranks": "1,2",
            "n-eval": 30,
            "ndcg-n": 2,
            "report": str(report),
        }))
        code = main([
            "sweep", "--config", str(config),
            "--oracle", f"wa:{fig_wa_file}",  # flag wins over config
            "--ranks", "2", "--report", str(report),
        ])
        assert code == 0
        rows = read_report(report)
        plain = [r for r in rows if not r["metric"].startswith("delta_")]
        assert {r["rank"] for r in plain} == {"2"}

    def test_failures_recorded_as_rows(self, tmp_path, fig_wa_file):
        report = tmp_path / "sweep.csv"
        code = main([
            "sweep", "--oracle", f"wa:{fig_wa_file}",
            "--basis-sizes", "4000:4000", "--ranks", "1",
            "--n-eval", "5", "--ndcg-n", "2", "--report", str(report),
        ])
        assert code == 0
        rows = read_report(report)
        assert any(r["status"].startswith("error:") for r in rows)


class TestSpectrumCommand:
    def test_geometric_machine_has_rank_one(self, tmp_path):
        wa_path = tmp_path / "geo.wa"
        from wadistill import Alphabet, WeightedAutomaton
        save_wa(
            WeightedAutomaton(
                Alphabet(["a"]), [1.0], [[[0.5]]], [0.5], stochastic=True
            ),
            wa_path,
        )
        out = tmp_path / "spectrum.tsv"
        code = main([
            "spectrum", "--oracle", f"wa:{wa_path}",
            "--p", "8", "--s", "8", "--max-len", "12", "--out", str(out),
        ])
        assert code == 0
        assert read_spectrum_report(out).hankel_rank == 1

    def test_five_state_machine_bounded(self, tmp_path):
        wa_path = tmp_path / "five.wa"
        save_wa(random_pfa(5, 3, 1.0, 0.8, seed=11), wa_path)
        out = tmp_path / "spectrum.tsv"
        code = main([
            "spectrum", "--oracle", f"wa:{wa_path}",
            "--p", "64", "--s", "64", "--out", str(out),
        ])
        assert code == 0
        assert read_spectrum_report(out).hankel_rank <= 5


class TestSampleCommand:
    def test_writes_parseable_deterministic_file(self, tmp_path, fig_wa_file):
        out_a = tmp_path / "a.txt"
        out_b = tmp_path / "b.txt"
        for out in (out_a, out_b):
            code = main([
                "sample", "--oracle", f"wa:{fig_wa_file}",
                "--n", "20", "--seed", "3", "--out", str(out),
            ])
            assert code == 0
        assert out_a.read_text() == out_b.read_text()
        seqs, size = parse_pautomac_sequences(out_a)
        assert len(seqs) == 20 and size == 2


class TestNgramCommands:
    def test_train_then_eval(self, tmp_path, fig_wa_file):
        model = tmp_path / "model.ngram"
        code = main([
            "ngram", "train", "--oracle", f"wa:{fig_wa_file}",
            "--n", "2", "--budget", "500", "--seed", "0", "--out", str(model),
        ])
        assert code == 0
        report = tmp_path / "report.csv"
        code = main([
            "ngram", "eval", "--oracle", f"wa:{fig_wa_file}",
            "--model", str(model), "--n-eval", "30", "--ndcg-n", "2",
            "--report", str(report),
        ])
        assert code == 0
        rows = read_report(report)
        assert {r["metric"] for r in rows} == {"NDCG2", "WER-D"}


class TestOracleSpecs:
    def test_external_spec_opens_cached_client(self):
        oracle = open_oracle("exec:" + MOCK)
        try:
            assert oracle.alphabet.size == 2
            first = oracle.batch_string_logprob([(0, 1)])[0]
            second = oracle.batch_string_logprob([(0, 1)])[0]
            assert first == second == pytest.approx(-3.1781, abs=1e-12)
        finally:
            oracle.close()

    def test_unknown_scheme_rejected(self):
        from wadistill import InvalidInput
        with pytest.raises(InvalidInput):
            open_oracle("ftp:nope")
