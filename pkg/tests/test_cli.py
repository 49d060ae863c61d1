"""Command line behavior: artifacts, reports, exit codes, idempotence."""

import json
import subprocess
import sys

import pytest

from csilab.cli import main
from csilab.pipeline import load_checkpoint, log_digest

pytestmark = pytest.mark.filterwarnings(
    "ignore::RuntimeWarning")  # the numeric-failure test overflows on purpose

_CFG = """\
phase1_epochs = 2
phase2_epochs = 4
batch_size = 4
embed_dim = 8
sequence_length = 64
patience = 2
negative_ratio = 2
"""


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """A synthetic workspace with one pair bundle, one reaction bundle,
    a small config, and one finished stratified run plus its baseline."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "cfg.toml"
    cfg.write_text(_CFG)

    syn = root / "syn"
    assert main(["synth", "--blocks", "4", "--compounds-per-block", "6",
                 "--sequences-per-block", "6", "--noise", "0.05",
                 "--seed", "5", "--out", str(syn)]) == 0
    rxn = root / "rxn"
    assert main(["synth", "--blocks", "4", "--compounds-per-block", "6",
                 "--sequences-per-block", "6", "--noise", "0.05",
                 "--seed", "5", "--reactions", "--out", str(rxn)]) == 0

    run = root / "run"
    assert main(["run", "--interactions", str(syn / "interactions.tsv"),
                 "--stratification", "compound+sequence", "--seed", "7",
                 "--config", str(cfg), "--out", str(run), "--plots"]) == 0
    base = root / "base"
    assert main(["run", "--interactions", str(syn / "interactions.tsv"),
                 "--stratification", "none", "--seed", "7",
                 "--config", str(cfg), "--out", str(base)]) == 0
    return {"root": root, "cfg": cfg, "syn": syn, "rxn": rxn,
            "tsv": syn / "interactions.tsv", "rx": rxn / "reactions.jsonl",
            "run": run, "base": base}


def _report(out_dir):
    return json.loads((out_dir / "report.json").read_text())


def _manifest(out_dir):
    return json.loads((out_dir / "manifest.json").read_text())


class TestSynthCommand:
    def test_artifacts(self, ws):
        names = {p.name for p in ws["syn"].iterdir()}
        assert names == {"interactions.tsv", "blocks.json", "report.json",
                         "manifest.json"}
        blocks = json.loads((ws["syn"] / "blocks.json").read_text())
        assert set(blocks) == {"compounds", "sequences"}
        assert len(blocks["compounds"]) == 24

    def test_report_counts_match_file(self, ws):
        from csilab.datamodel import load_interactions
        data, _ = load_interactions(ws["tsv"])
        counts = _report(ws["syn"])["counts"]
        assert counts["interactions"] == len(data.positives)
        assert counts["compounds"] == len(data.compounds)
        assert counts["sequences"] == len(data.sequences)

    def test_reaction_bundle_artifacts(self, ws):
        names = {p.name for p in ws["rxn"].iterdir()}
        assert {"reactions.jsonl", "compounds.tsv",
                "sequences.tsv"} <= names
        assert _report(ws["rxn"])["counts"]["reactions"] == 24

    def test_deterministic_rerun(self, ws, tmp_path):
        again = tmp_path / "again"
        assert main(["synth", "--blocks", "4", "--compounds-per-block", "6",
                     "--sequences-per-block", "6", "--noise", "0.05",
                     "--seed", "5", "--out", str(again)]) == 0
        assert (again / "interactions.tsv").read_bytes() == \
            ws["tsv"].read_bytes()

    def test_bad_blocks_is_config_error(self, tmp_path, capsys):
        rc = main(["synth", "--blocks", "1", "--out", str(tmp_path / "x")])
        assert rc == 2
        assert "blocks" in capsys.readouterr().err


class TestIngestCommand:
    def test_worked_example_counts(self, tmp_path):
        tsv = tmp_path / "tiny.tsv"
        tsv.write_text(
            "compound_id\tsmiles\tsequence_id\tfasta\tlabel\n"
            "c1\tCCO\ts1\tMKV\t1\n"
            "c1\t\ts2\tMKW\t1\n"
            "c2\tCC\ts1\t\t1\n")
        out = tmp_path / "out"
        assert main(["ingest", "--interactions", str(tsv),
                     "--out", str(out)]) == 0
        counts = _report(out)["counts"]
        assert counts["interactions"] == 3
        assert counts["compounds"] == 2
        assert counts["sequences"] == 2
        assert counts["compound_sequence_ratio"] == 1.0

    def test_malformed_row_names_its_line(self, tmp_path, capsys):
        tsv = tmp_path / "bad.tsv"
        tsv.write_text(
            "compound_id\tsmiles\tsequence_id\tfasta\tlabel\n"
            "c1\tCCO\ts1\tMKV\t1\n"
            "c2\tCC\ts1\t\tmaybe\n")
        rc = main(["ingest", "--interactions", str(tsv),
                   "--out", str(tmp_path / "out")])
        assert rc == 2
        assert "line 3" in capsys.readouterr().err

    def test_missing_file_is_data_error(self, tmp_path, capsys):
        rc = main(["ingest", "--interactions", str(tmp_path / "nope.tsv"),
                   "--out", str(tmp_path / "out")])
        assert rc == 3
        assert "nope.tsv" in capsys.readouterr().err

    def test_reaction_ingest(self, ws, tmp_path):
        out = tmp_path / "out"
        assert main(["ingest", "--reactions", str(ws["rx"]),
                     "--out", str(out)]) == 0
        counts = _report(out)["counts"]
        assert counts["reactions"] == 24
        assert counts["interactions"] > 0

    def test_manifest_digests_inputs(self, ws, tmp_path):
        import hashlib
        out = tmp_path / "out"
        main(["ingest", "--interactions", str(ws["tsv"]), "--out", str(out)])
        manifest = _manifest(out)
        want = hashlib.sha256(ws["tsv"].read_bytes()).hexdigest()
        assert manifest["inputs"][str(ws["tsv"])] == want
        assert manifest["outputs"] == ["report.json"]
        assert "created" in manifest


class TestStatsCommand:
    def test_pair_keyings(self, ws, tmp_path):
        from csilab.datamodel import load_interactions
        from csilab.stratify import stratify_by_compound
        out = tmp_path / "out"
        assert main(["stats", "--interactions", str(ws["tsv"]),
                     "--out", str(out)]) == 0
        strata = _report(out)["strata"]
        assert set(strata) == {"compound", "sequence"}
        data, _ = load_interactions(ws["tsv"])
        views = stratify_by_compound(data)
        assert strata["compound"]["eligible_keys"] == len(views.eligible_keys())
        assert strata["compound"]["views"] == \
            sum(len(v) for v in views.strata.values())
        assert "member_stats" in strata["compound"]

    def test_reaction_keyings_report_key_counts(self, ws, tmp_path):
        out = tmp_path / "out"
        assert main(["stats", "--reactions", str(ws["rx"]),
                     "--out", str(out)]) == 0
        strata = _report(out)["strata"]
        assert set(strata) == {"compound", "sequence", "reaction", "rclass",
                               "ec"}
        assert strata["reaction"]["keys"] == 24
        assert strata["rclass"]["keys"] == 12
        assert set(strata["reaction"]["views"]) == {"view1", "view2", "view3"}


class TestStratifyCommand:
    def test_compound_keying_matches_library(self, ws, tmp_path):
        from csilab.datamodel import load_interactions
        from csilab.stratify import stratify_by_compound
        out = tmp_path / "out"
        assert main(["stratify", "--interactions", str(ws["tsv"]),
                     "--keying", "compound", "--out", str(out)]) == 0
        report = _report(out)
        data, _ = load_interactions(ws["tsv"])
        views = stratify_by_compound(data)
        assert report["keys"] == len(views.strata)
        assert report["eligible_keys"] == views.eligible_keys()
        key = views.eligible_keys()[0]
        assert report["strata"][key] == \
            [[si, sj] for _, (si, sj) in views.strata[key]]

    def test_reaction_keying_needs_reactions(self, ws, tmp_path, capsys):
        rc = main(["stratify", "--interactions", str(ws["tsv"]),
                   "--keying", "rclass", "--out", str(tmp_path / "out")])
        assert rc == 2
        assert "rclass" in capsys.readouterr().err

    def test_three_view_strata_dump(self, ws, tmp_path):
        out = tmp_path / "out"
        assert main(["stratify", "--reactions", str(ws["rx"]),
                     "--keying", "reaction", "--out", str(out)]) == 0
        report = _report(out)
        stratum = report["strata"][report["eligible_keys"][0]]
        assert set(stratum) == {"view1", "view2", "view3"}
        assert all(len(p) == 2 for p in stratum["view2"])


class TestRunCommand:
    def test_artifacts(self, ws):
        names = {p.name for p in ws["run"].iterdir()}
        assert names == {"checkpoint.bin", "training_log.jsonl", "report.json",
                         "manifest.json", "loss.svg", "ap.svg"}
        for svg in ("loss.svg", "ap.svg"):
            assert (ws["run"] / svg).read_text().startswith("<svg")

    def test_report_structure(self, ws):
        report = _report(ws["run"])
        assert report["stratification"] == "compound+sequence"
        assert report["seed"] == 7
        assert set(report["evaluation"]["test"]) == \
            {"1:1", "5:1", "10:1", "25:1"}
        one = report["evaluation"]["test"]["1:1"]
        assert {"overall", "by_compound", "by_sequence"} <= set(one)
        assert 0.0 <= one["overall"]["average_precision"] <= 1.0
        assert "unseen_test" in report["evaluation"]

    def test_checkpoint_groups_and_log(self, ws):
        ckpt = load_checkpoint(ws["run"] / "checkpoint.bin")
        assert set(ckpt.groups) == {"gcn-1a", "cnn-1a", "gcn-1b", "cnn-1b",
                                    "predictor"}
        lines = (ws["run"] / "training_log.jsonl").read_text().splitlines()
        records = [json.loads(x) for x in lines]
        assert log_digest(records) == ckpt.log_digest

    def test_config_seed_precedence(self, ws):
        # --seed 7 beat the config default of 0
        assert _report(ws["run"])["config"]["seed"] == 7
        assert _manifest(ws["run"])["seed"] == 7

    def test_rerun_is_byte_identical_outside_manifest(self, ws, tmp_path):
        again = tmp_path / "again"
        assert main(["run", "--interactions", str(ws["tsv"]),
                     "--stratification", "compound+sequence", "--seed", "7",
                     "--config", str(ws["cfg"]), "--out", str(again),
                     "--plots"]) == 0
        for name in ("checkpoint.bin", "training_log.jsonl", "report.json",
                     "loss.svg", "ap.svg"):
            assert (again / name).read_bytes() == \
                (ws["run"] / name).read_bytes(), name
        m1, m2 = _manifest(ws["run"]), _manifest(again)
        m1.pop("created")
        m2.pop("created")
        assert m1 == m2

    def test_baseline_is_paired_with_csi(self, ws):
        csi, base = _report(ws["run"]), _report(ws["base"])
        for key in ("train_positives", "val_positives", "test_positives",
                    "unseen_positives"):
            assert csi["counts"][key] == base["counts"][key]
        # identical split and negative draw: both score the same pair sets
        for label in ("1:1", "5:1"):
            a = csi["evaluation"]["test"][label]["overall"]
            b = base["evaluation"]["test"][label]["overall"]
            assert a["items"] == b["items"]
            assert a["positives"] == b["positives"]

    def test_baseline_checkpoint_groups(self, ws):
        ckpt = load_checkpoint(ws["base"] / "checkpoint.bin")
        assert set(ckpt.groups) == {"gcn", "cnn", "predictor"}

    def test_pair_drop_mask(self, ws, tmp_path):
        out = tmp_path / "out"
        assert main(["run", "--interactions", str(ws["tsv"]),
                     "--stratification", "compound+sequence",
                     "--drop", "compound", "--seed", "7",
                     "--config", str(ws["cfg"]), "--out", str(out)]) == 0
        ckpt = load_checkpoint(out / "checkpoint.bin")
        assert set(ckpt.groups) == {"gcn-1b", "cnn-1b", "predictor"}
        assert _report(out)["drop"] == ["compound"]

    def test_reaction_mode_and_view_drop(self, ws, tmp_path):
        out = tmp_path / "out"
        assert main(["run", "--reactions", str(ws["rx"]),
                     "--stratification", "reaction", "--drop", "v1",
                     "--seed", "3", "--config", str(ws["cfg"]),
                     "--out", str(out)]) == 0
        report = _report(out)
        assert report["config"]["keep_views"] == [2, 3]
        ckpt = load_checkpoint(out / "checkpoint.bin")
        assert set(ckpt.groups) == {"cs", "ss", "predictor"}

    def test_dense_bundle_skips_unreachable_ratio(self, ws, tmp_path):
        # 3 blocks leave too few non-interacting pairs for 25:1
        syn = tmp_path / "dense"
        main(["synth", "--blocks", "3", "--compounds-per-block", "6",
              "--sequences-per-block", "6", "--noise", "0.05", "--seed", "5",
              "--out", str(syn)])
        out = tmp_path / "out"
        assert main(["run", "--interactions", str(syn / "interactions.tsv"),
                     "--seed", "7", "--config", str(ws["cfg"]),
                     "--out", str(out)]) == 0
        test_block = _report(out)["evaluation"]["test"]
        assert "overall" in test_block["1:1"]
        assert "skipped" in test_block["25:1"]


class TestEvaluateCommand:
    def test_reproduces_run_report(self, ws, tmp_path):
        out = tmp_path / "out"
        assert main(["evaluate", "--checkpoint",
                     str(ws["run"] / "checkpoint.bin"),
                     "--interactions", str(ws["tsv"]),
                     "--out", str(out)]) == 0
        assert _report(out)["evaluation"] == _report(ws["run"])["evaluation"]

    def test_corrupt_checkpoint_is_data_error(self, ws, tmp_path, capsys):
        blob = bytearray((ws["run"] / "checkpoint.bin").read_bytes())
        blob[-1] ^= 0xFF
        bad = tmp_path / "bad.bin"
        bad.write_bytes(bytes(blob))
        rc = main(["evaluate", "--checkpoint", str(bad),
                   "--interactions", str(ws["tsv"]),
                   "--out", str(tmp_path / "out")])
        assert rc == 3


class TestAblateCommand:
    def test_pair_bundle_variants(self, ws, tmp_path):
        out = tmp_path / "out"
        assert main(["ablate", "--interactions", str(ws["tsv"]), "--seed", "7",
                     "--config", str(ws["cfg"]), "--out", str(out)]) == 0
        table = _report(out)["ablation"]
        assert set(table) == {"compound+sequence", "compound-only",
                              "sequence-only", "baseline"}
        for row in table.values():
            assert 0.0 <= row["1:1"] <= 1.0

    def test_reaction_bundle_variants(self, ws, tmp_path):
        out = tmp_path / "out"
        assert main(["ablate", "--reactions", str(ws["rx"]), "--seed", "3",
                     "--config", str(ws["cfg"]), "--out", str(out)]) == 0
        table = _report(out)["ablation"]
        assert set(table) == {"all-views", "drop-v1", "drop-v2", "drop-v3"}


class TestGridTauCommand:
    def test_sweep(self, ws, tmp_path):
        out = tmp_path / "out"
        assert main(["grid-tau", "--interactions", str(ws["tsv"]),
                     "--taus", "0.05,0.08", "--seed", "7",
                     "--config", str(ws["cfg"]), "--out", str(out)]) == 0
        report = _report(out)
        assert set(report["grid"]) == {"0.05", "0.08"}
        assert report["best_tau"] in (0.05, 0.08)

    def test_bad_tau_list(self, ws, tmp_path, capsys):
        rc = main(["grid-tau", "--interactions", str(ws["tsv"]),
                   "--taus", "0.05,warm", "--out", str(tmp_path / "out")])
        assert rc == 2


class TestExitCodes:
    def test_unknown_config_key(self, ws, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"warmup": 5}))
        rc = main(["run", "--interactions", str(ws["tsv"]),
                   "--config", str(cfg), "--out", str(tmp_path / "out")])
        assert rc == 2
        assert "warmup" in capsys.readouterr().err

    def test_malformed_toml(self, ws, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text("tau = = 0.07\n")
        rc = main(["run", "--interactions", str(ws["tsv"]),
                   "--config", str(cfg), "--out", str(tmp_path / "out")])
        assert rc == 2

    def test_config_extension_must_be_known(self, ws, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text("tau: 0.07\n")
        rc = main(["run", "--interactions", str(ws["tsv"]),
                   "--config", str(cfg), "--out", str(tmp_path / "out")])
        assert rc == 2

    def test_unknown_stratification_exits_2_listing_choices(self, ws,
                                                            tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--interactions", str(ws["tsv"]),
                  "--stratification", "bogus", "--out", str(tmp_path / "out")])
        assert exc.value.code == 2
        assert "compound+sequence" in capsys.readouterr().err

    def test_drop_with_none_is_config_error(self, ws, tmp_path, capsys):
        rc = main(["run", "--interactions", str(ws["tsv"]),
                   "--stratification", "none", "--drop", "compound",
                   "--out", str(tmp_path / "out")])
        assert rc == 2

    def test_view_drop_on_pair_run_is_config_error(self, ws, tmp_path):
        rc = main(["run", "--interactions", str(ws["tsv"]),
                   "--stratification", "compound", "--drop", "v2",
                   "--out", str(tmp_path / "out")])
        assert rc == 2

    def test_insufficient_negative_space_is_data_error(self, ws, tmp_path,
                                                       capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"phase1_epochs": 1, "phase2_epochs": 1,
                                   "batch_size": 4, "embed_dim": 8,
                                   "sequence_length": 64,
                                   "negative_ratio": 50}))
        rc = main(["run", "--interactions", str(ws["tsv"]),
                   "--config", str(cfg), "--out", str(tmp_path / "out")])
        assert rc == 3
        assert "negatives" in capsys.readouterr().err

    def test_numeric_overflow_is_numeric_error(self, ws, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"phase1_epochs": 2, "phase2_epochs": 1,
                                   "batch_size": 4, "embed_dim": 8,
                                   "sequence_length": 64, "negative_ratio": 2,
                                   "learning_rate": 1e300}))
        rc = main(["run", "--interactions", str(ws["tsv"]),
                   "--config", str(cfg), "--out", str(tmp_path / "out")])
        assert rc == 4

    def test_bad_threads(self, ws, tmp_path, capsys):
        rc = main(["stats", "--interactions", str(ws["tsv"]),
                   "--threads", "0", "--out", str(tmp_path / "out")])
        assert rc == 2

    def test_both_inputs_rejected_by_parser(self, ws, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["ingest", "--interactions", str(ws["tsv"]),
                  "--reactions", str(ws["rx"]),
                  "--out", str(tmp_path / "out")])
        assert exc.value.code == 2


class TestModuleEntry:
    def test_python_dash_m(self, ws, tmp_path):
        out = tmp_path / "out"
        proc = subprocess.run(
            [sys.executable, "-m", "csilab", "ingest",
             "--interactions", str(ws["tsv"]), "--out", str(out)],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert (out / "report.json").exists()
