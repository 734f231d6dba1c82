"""Guard the ``qsc-run-result/1`` wire contract.

Sweep drivers collect these manifests from many runs without parsing the
reports themselves, so the key set and status vocabulary are pinned here.
"""

import json
import re

import jsonschema
import pytest

from qsc_analysis import result_manifest as rm
from qsc_analysis.cli import SCHEMA_FILES


@pytest.fixture
def run_result_schema():
    from pathlib import Path

    import qsc_analysis

    path = Path(qsc_analysis.__file__).parent / "schema" / SCHEMA_FILES[rm.SCHEMA]
    return json.loads(path.read_text())


def test_schema_constant():
    assert rm.SCHEMA == "qsc-run-result/1"


def test_valid_status_vocabulary():
    assert rm.VALID_STATUS == {"ok", "failed", "skipped"}


def test_build_manifest_shape_and_none_dropping():
    m = rm.build_manifest(
        "qsc",
        "ok",
        params={"command": "simulate", "key": None},
        artifacts={"report": "run.json", "trace": None},
        info={"bob_error_rate": 0.001},
        exit_code=0,
    )
    assert set(m) >= {
        "tool", "tool_version", "schema", "run_id", "status", "exit_code",
        "params", "artifacts", "info",
    }
    assert m["tool"] == "qsc" and m["schema"] == "qsc-run-result/1"
    assert isinstance(m["tool_version"], str)
    assert m["params"] == {"command": "simulate"}
    assert m["artifacts"] == {"report": "run.json"}
    assert "messages" not in m


def test_run_id_is_a_ulid():
    m = rm.build_manifest("qsc", "ok")
    assert re.fullmatch(r"[0-9A-Z]{26}", m["run_id"])
    assert rm.build_manifest("qsc", "ok")["run_id"] != m["run_id"]


def test_explicit_run_id_and_messages():
    m = rm.build_manifest(
        "qsc", "failed", run_id="01J0000000000000000000000A",
        messages=[{"level": "error", "text": "boom"}], exit_code=3,
    )
    assert m["run_id"] == "01J0000000000000000000000A"
    assert m["messages"] == [{"level": "error", "text": "boom"}]


def test_bad_status_rejected():
    with pytest.raises(ValueError, match="status"):
        rm.build_manifest("qsc", "dry-run")


def test_written_manifest_matches_schema(tmp_path, run_result_schema):
    path = tmp_path / "result.json"
    written = rm.write_manifest(path, "qsc", "skipped", info={"reason": "masking"})
    assert json.loads(path.read_text()) == written
    jsonschema.validate(written, run_result_schema)
