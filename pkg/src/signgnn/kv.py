"""The flat ``key = value`` text grammar shared by configs and manifests."""

from __future__ import annotations

import re
from collections.abc import Mapping

_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")


class KvError(ValueError):
    pass


def parse(text: str, source: str = "<string>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment line, duplicates are errors."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        key, sep, value = s.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not _KEY.match(key):
            raise KvError(f"{source}:{lineno}: expected 'key = value', got {s!r}")
        if key in out:
            raise KvError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read(path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), str(path))


def dumps(items: Mapping[str, object]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in items.items())
