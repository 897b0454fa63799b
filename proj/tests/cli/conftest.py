import json
import os
import pathlib
import subprocess

import jsonschema
import pytest

ROOT = pathlib.Path(__file__).resolve().parents[2]
SCHEMAS = ROOT / "schemas"


@pytest.fixture(scope="session")
def trendbal():
    exe = os.environ.get("TRENDBAL_BIN")
    if not exe:
        pytest.skip("TRENDBAL_BIN not set")

    def run(*args, check=True):
        proc = subprocess.run([exe, *map(str, args)], capture_output=True, text=True)
        if check and proc.returncode != 0:
            raise AssertionError(f"exit {proc.returncode}: {proc.stderr}")
        return proc

    return run


def load_valid(path, schema_name):
    doc = json.loads(pathlib.Path(path).read_text())
    schema = json.loads((SCHEMAS / schema_name).read_text())
    jsonschema.validate(doc, schema, format_checker=jsonschema.FormatChecker())
    return doc
