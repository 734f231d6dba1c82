"""Tests for the qsc command-line interface."""

import json
import math

import jsonschema
import pytest
import yaml
from click.testing import CliRunner

from qsc_analysis.cli import main
from qsc_analysis.kpa import KpaCurve


@pytest.fixture
def runner():
    return CliRunner()


def _load(path):
    return json.loads(path.read_text())


def _simulate_args(out, *extra):
    return ["simulate", "--M", "8", "--alpha", "3", "--slots", "1e3", "--seed", "1", "-o", str(out), *extra]


class TestMainGroup:
    def test_version(self, runner):
        result = runner.invoke(main, ["--version"])
        assert result.exit_code == 0
        assert "0.1.0" in result.output

    def test_help(self, runner):
        result = runner.invoke(main, ["--help"])
        assert result.exit_code == 0
        for name in ("constellation", "analyze", "locking", "simulate", "kpa", "validate"):
            assert name in result.output

    def test_threads_must_be_positive(self, runner, tmp_path):
        result = runner.invoke(main, ["--threads", "0", *_simulate_args(tmp_path / "r.json")])
        assert result.exit_code == 2

    def test_bad_thread_environment(self, runner, tmp_path):
        result = runner.invoke(main, _simulate_args(tmp_path / "r.json"), env={"QSC_THREADS": "abc"})
        assert result.exit_code == 2
        assert "QSC_THREADS" in result.output

    def test_thread_environment_is_honoured(self, runner, tmp_path):
        result = runner.invoke(main, _simulate_args(tmp_path / "r.json"), env={"QSC_THREADS": "2"})
        assert result.exit_code == 0, result.output


class TestConstellationCommand:
    def test_y00(self, runner, tmp_path):
        out = tmp_path / "y00.json"
        result = runner.invoke(main, ["constellation", "--M", "2", "--alpha", "1", "-o", str(out)])
        assert result.exit_code == 0, result.output
        assert "Wrote" in result.output
        doc = _load(out)
        assert doc["schema"] == "qsc-constellation/1"
        assert len(doc["points"]) == 4

    def test_qndm(self, runner, tmp_path):
        out = tmp_path / "qndm.json"
        result = runner.invoke(
            main, ["constellation", "--scheme", "qndm", "--M", "4", "--alpha", "4", "-o", str(out)]
        )
        assert result.exit_code == 0, result.output
        doc = _load(out)
        assert len(doc["points"]) == 32
        assert "delta" in doc

    def test_invalid_m(self, runner):
        result = runner.invoke(main, ["constellation", "--M", "0", "--alpha", "1"])
        assert result.exit_code == 2
        assert "Error" in result.output

    def test_missing_output_directory(self, runner, tmp_path):
        out = tmp_path / "missing" / "c.json"
        result = runner.invoke(main, ["constellation", "--M", "2", "--alpha", "1", "-o", str(out)])
        assert result.exit_code == 2
        assert not out.exists()


class TestAnalyzeCommand:
    def test_y00_report(self, runner, tmp_path):
        out = tmp_path / "report.json"
        result = runner.invoke(main, ["analyze", "--M", "16", "--alpha", "4", "-o", str(out)])
        assert result.exit_code == 0, result.output
        assert "unicity" in result.output
        doc = _load(out)
        assert doc["scenario"] == "y00"
        assert doc["unicity"][0]["capped"] is False

    def test_collapsed_qndm_is_capped(self, runner, tmp_path):
        out = tmp_path / "report.json"
        result = runner.invoke(main, ["analyze", "--scheme", "qndm", "--M", "64", "--alpha", "4", "-o", str(out)])
        assert result.exit_code == 0, result.output
        assert "capped at 2^256" in result.output
        assert "Warning" in result.output
        assert all(bound["slots"] is None for bound in _load(out)["unicity"])

    def test_dsr_needs_rp(self, runner):
        result = runner.invoke(main, ["analyze", "--scheme", "dsr", "--M", "16", "--alpha", "4"])
        assert result.exit_code == 2
        assert "r_p" in result.output

    def test_dsr_rp_out_of_range(self, runner):
        result = runner.invoke(main, ["analyze", "--scheme", "dsr", "--M", "16", "--alpha", "4", "--rp", "0.5"])
        assert result.exit_code == 2


class TestLockingCommand:
    def test_report(self, runner, tmp_path):
        out = tmp_path / "locking.json"
        result = runner.invoke(main, ["locking", "--n", "1024", "--epsilon", "0.25", "-o", str(out)])
        assert result.exit_code == 0, result.output
        doc = _load(out)
        assert doc["eta"] == pytest.approx(2 / 1024)
        assert doc["metrics"]["key_requirement"] == pytest.approx(8.0)


class TestSimulateCommand:
    def test_floating_point_error_exits_3(self, runner, tmp_path, monkeypatch):
        def overflow(*args, **kwargs):
            raise FloatingPointError("overflow encountered in exp")

        monkeypatch.setattr("qsc_analysis.cli.run_trial", overflow)
        result = runner.invoke(main, _simulate_args(tmp_path / "run.json"))
        assert result.exit_code == 3
        assert "numerical error" in result.output

    def test_scientific_slot_count(self, runner, tmp_path):
        out = tmp_path / "run.json"
        result = runner.invoke(main, _simulate_args(out))
        assert result.exit_code == 0, result.output
        assert "Bob BER" in result.output
        assert _load(out)["config"]["n_slots"] == 1000

    def test_fractional_slot_count_rejected(self, runner, tmp_path):
        result = runner.invoke(main, ["simulate", "--M", "8", "--alpha", "3", "--slots", "1.5"])
        assert result.exit_code == 2

    def test_thread_count_does_not_change_the_report(self, runner, tmp_path):
        first, second = tmp_path / "a.json", tmp_path / "b.json"
        assert runner.invoke(main, ["--threads", "1", *_simulate_args(first, "--shard-size", "128")]).exit_code == 0
        assert runner.invoke(main, ["--threads", "3", *_simulate_args(second, "--shard-size", "128")]).exit_code == 0
        assert _load(first) == _load(second)

    def test_repeat_is_byte_identical(self, runner, tmp_path):
        first, second = tmp_path / "a.json", tmp_path / "b.json"
        runner.invoke(main, _simulate_args(first))
        runner.invoke(main, _simulate_args(second))
        assert first.read_bytes() == second.read_bytes()

    def test_omitted_seed_is_printed(self, runner, tmp_path):
        out = tmp_path / "run.json"
        result = runner.invoke(main, ["simulate", "--M", "4", "--alpha", "2", "--slots", "200", "-o", str(out)])
        assert result.exit_code == 0, result.output
        assert "Seed:" in result.output
        assert _load(out)["config"]["master_seed"] >= 0

    def test_masking_check_refuses_unmasked_qndm(self, runner, tmp_path):
        out = tmp_path / "run.json"
        result = runner.invoke(
            main,
            ["simulate", "--scheme", "qndm", "--M", "16", "--alpha", "4", "--masking-check", "--seed", "1",
             "-o", str(out)],
        )
        assert result.exit_code == 2
        assert "masking" in result.output
        assert not out.exists()

    def test_masking_check_passes_masked_qndm(self, runner, tmp_path):
        out = tmp_path / "run.json"
        result = runner.invoke(
            main,
            ["simulate", "--scheme", "qndm", "--M", "16", "--alpha", "0.9", "--masking-check", "--slots", "500",
             "--seed", "1", "-o", str(out)],
        )
        assert result.exit_code == 0, result.output
        assert _load(out)["masking"]["condition_met"] is True

    def test_trace_suffix(self, runner, tmp_path):
        result = runner.invoke(main, _simulate_args(tmp_path / "r.json", "--trace", str(tmp_path / "t.txt")))
        assert result.exit_code == 2

    def test_csv_trace(self, runner, tmp_path):
        trace = tmp_path / "trace.csv"
        result = runner.invoke(main, _simulate_args(tmp_path / "r.json", "--trace", str(trace)))
        assert result.exit_code == 0, result.output
        lines = trace.read_text().splitlines()
        assert lines[0].startswith("slot,theta,bit")
        assert len(lines) == 1001

    def test_dsr_strength_without_dsr(self, runner, tmp_path):
        result = runner.invoke(main, _simulate_args(tmp_path / "r.json", "--dsr-strength", "1.0"))
        assert result.exit_code == 2

    def test_result_manifest(self, runner, tmp_path):
        out, manifest = tmp_path / "r.json", tmp_path / "result.json"
        result = runner.invoke(main, _simulate_args(out, "--result-out", str(manifest)))
        assert result.exit_code == 0, result.output
        doc = _load(manifest)
        assert doc["schema"] == "qsc-run-result/1"
        assert doc["status"] == "ok"
        assert doc["params"]["command"] == "simulate"
        assert doc["artifacts"]["report"] == str(out.resolve())
        assert doc["info"]["bob_error_rate"] == _load(out)["bob"]["rate"]


class TestKpaCommand:
    def _noiseless(self, *extra):
        return ["kpa", "--scheme", "y00", "--M", "16", "--alpha", "4", "--key-bits", "12", "--slots", "6",
                "--seed", "3", "--noiseless", *extra]

    def test_csv_curve(self, runner, tmp_path):
        out = tmp_path / "curve.csv"
        result = runner.invoke(main, self._noiseless("-o", str(out)))
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert lines[0] == "n,survivors,equivocation_bits"
        assert lines[1].startswith("0,4095,")
        assert lines[-1].startswith("6,1,")

    def test_csv_to_stdout(self, runner):
        result = runner.invoke(main, self._noiseless())
        assert result.exit_code == 0, result.output
        assert "n,survivors,equivocation_bits" in result.output

    def test_json_curve(self, runner, tmp_path):
        out = tmp_path / "curve.json"
        result = runner.invoke(main, self._noiseless("--format", "json", "-o", str(out)))
        assert result.exit_code == 0, result.output
        doc = _load(out)
        assert doc["unique_at"] == 3
        assert doc["true_key_survived"] is True

    def test_permuted_plaintext_warns(self, runner, tmp_path):
        result = runner.invoke(main, self._noiseless("--permute-plaintext", "--slots", "40", "-o", str(tmp_path / "c.csv")))
        assert result.exit_code == 0, result.output
        assert "true key was eliminated" in result.output

    def test_keyspace_bound(self, runner):
        result = runner.invoke(main, ["kpa", "--M", "16", "--alpha", "4", "--key-bits", "24", "--seed", "1"])
        assert result.exit_code == 2
        assert "exhaustive-search bound" in result.output

    def test_result_manifest(self, runner, tmp_path):
        manifest = tmp_path / "result.json"
        result = runner.invoke(main, self._noiseless("-o", str(tmp_path / "c.csv"), "--result-out", str(manifest)))
        assert result.exit_code == 0, result.output
        doc = _load(manifest)
        assert doc["params"]["command"] == "kpa"
        assert doc["info"]["final_survivors"] == 1

    def test_zero_slots_reports_the_whole_keyspace(self, runner, tmp_path):
        out = tmp_path / "curve.csv"
        result = runner.invoke(main, self._noiseless("--slots", "0", "-o", str(out)))
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert len(lines) == 2
        n, survivors, equivocation = lines[1].split(",")
        assert (n, survivors) == ("0", "4095")
        assert float(equivocation) == pytest.approx(math.log2(4095))

    def test_ciphertext_only_curve(self, runner, tmp_path):
        out = tmp_path / "curve.json"
        result = runner.invoke(main, self._noiseless("--ciphertext-only", "--format", "json", "-o", str(out)))
        assert result.exit_code == 0, result.output
        doc = _load(out)
        assert doc["attack"] == "ciphertext-only"
        assert doc["true_key_survived"] is True

    def test_ciphertext_only_rejects_permutation(self, runner):
        result = runner.invoke(main, self._noiseless("--ciphertext-only", "--permute-plaintext"))
        assert result.exit_code == 2

    def test_write_failure_exits_3(self, runner, tmp_path, monkeypatch):
        def full_disk(self, path):
            raise OSError(28, "No space left on device")

        monkeypatch.setattr(KpaCurve, "write_csv", full_disk)
        result = runner.invoke(main, self._noiseless("-o", str(tmp_path / "c.csv")))
        assert result.exit_code == 3
        assert "No space left on device" in result.output


class TestConfigFile:
    def test_flat_config(self, runner, tmp_path):
        config = tmp_path / "run.yaml"
        config.write_text(yaml.safe_dump({"M": 4, "alpha": 2.0, "slots": 300, "seed": 5}))
        out = tmp_path / "r.json"
        result = runner.invoke(main, ["--config", str(config), "simulate", "-o", str(out)])
        assert result.exit_code == 0, result.output
        doc = _load(out)["config"]
        assert (doc["M"], doc["amplitude"], doc["n_slots"], doc["master_seed"]) == (4, 2.0, 300, 5)

    def test_keyed_config_and_flag_precedence(self, runner, tmp_path):
        config = tmp_path / "sweep.yaml"
        config.write_text(
            yaml.safe_dump(
                {
                    "simulate": {"m": 8, "amplitude": 3.0, "n_slots": 200, "seed": 2},
                    "analyze": {"M": 16, "alpha": 4.0},
                }
            )
        )
        out = tmp_path / "r.json"
        result = runner.invoke(main, ["--config", str(config), "simulate", "--seed", "9", "-o", str(out)])
        assert result.exit_code == 0, result.output
        doc = _load(out)["config"]
        assert (doc["M"], doc["n_slots"], doc["master_seed"]) == (8, 200, 9)

    def test_non_mapping_config(self, runner, tmp_path):
        config = tmp_path / "bad.yaml"
        config.write_text("- 1\n- 2\n")
        result = runner.invoke(main, ["--config", str(config), "locking", "--n", "4"])
        assert result.exit_code == 2


class TestValidateCommand:
    @pytest.fixture
    def documents(self, runner, tmp_path):
        paths = {
            "constellation": tmp_path / "c.json",
            "analyze": tmp_path / "a.json",
            "locking": tmp_path / "l.json",
            "simulate": tmp_path / "s.json",
            "kpa": tmp_path / "k.json",
            "manifest": tmp_path / "m.json",
        }
        commands = [
            ["constellation", "--scheme", "qndm", "--M", "4", "--alpha", "2", "-o", str(paths["constellation"])],
            ["analyze", "--scheme", "qndm", "--M", "16", "--alpha", "0.9", "-o", str(paths["analyze"])],
            ["locking", "--n", "64", "-o", str(paths["locking"])],
            _simulate_args(paths["simulate"], "--result-out", str(paths["manifest"])),
            ["kpa", "--M", "4", "--alpha", "1", "--key-bits", "8", "--slots", "40", "--seed", "2",
             "--format", "json", "-o", str(paths["kpa"])],
        ]
        for args in commands:
            result = runner.invoke(main, args)
            assert result.exit_code == 0, (args, result.output)
        return paths

    def test_generated_documents_are_valid(self, runner, documents):
        for path in documents.values():
            result = runner.invoke(main, ["validate", str(path)])
            assert result.exit_code == 0, (path.name, result.output)
            assert "✓ Valid" in result.output

    def test_tampered_report_fails(self, runner, documents):
        path = documents["simulate"]
        doc = _load(path)
        doc["bob"]["rate"] = 2.0
        path.write_text(json.dumps(doc))
        result = runner.invoke(main, ["validate", str(path)])
        assert result.exit_code == 1
        assert "bob/rate" in result.output

    def test_extra_constellation_key_fails(self, runner, documents):
        path = documents["constellation"]
        doc = _load(path)
        doc["comment"] = "hand edited"
        path.write_text(json.dumps(doc))
        assert runner.invoke(main, ["validate", str(path)]).exit_code == 1

    def test_unknown_schema_tag(self, runner, tmp_path):
        path = tmp_path / "other.json"
        path.write_text(json.dumps({"schema": "something-else/1"}))
        result = runner.invoke(main, ["validate", str(path)])
        assert result.exit_code == 2
        assert "unknown document schema" in result.output

    def test_not_json(self, runner, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert runner.invoke(main, ["validate", str(path)]).exit_code == 2

    def test_missing_file(self, runner, tmp_path):
        result = runner.invoke(main, ["validate", str(tmp_path / "missing.json")])
        assert result.exit_code == 2

    def test_schemas_are_well_formed(self):
        from pathlib import Path

        import qsc_analysis
        from qsc_analysis.cli import SCHEMA_FILES

        folder = Path(qsc_analysis.__file__).parent / "schema"
        for filename in SCHEMA_FILES.values():
            jsonschema.Draft202012Validator.check_schema(json.loads((folder / filename).read_text()))
