"""Line-oriented ``key = value`` text used for every header and config file.

Each non-blank, non-comment line is ``<key> = <json value>``.  Keys are
bare identifiers (letters, digits, ``_``, ``.``, ``-``); values are JSON so
lists, nulls and strings round-trip without a custom grammar.  Lines
starting with ``#`` are comments.  Key order is preserved on write.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")


def dumps(record: dict) -> str:
    lines = []
    for key, value in record.items():
        if not _KEY.match(key):
            raise ValueError(f"invalid key {key!r}")
        lines.append(f"{key} = {json.dumps(value, sort_keys=True)}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not _KEY.match(key):
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        try:
            out[key] = json.loads(value.strip())
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    return out


def dump(record: dict, path) -> None:
    Path(path).write_text(dumps(record), encoding="utf-8")


def load(path) -> dict:
    return loads(Path(path).read_text(encoding="utf-8"))
