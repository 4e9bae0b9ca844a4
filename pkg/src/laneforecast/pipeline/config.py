"""``key = value`` configuration files and overrides for config dataclasses."""

from __future__ import annotations

import ast
import dataclasses


def parse_value(text: str):
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    if lowered in ("none", "null"):
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def read_config(path) -> dict:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            out[key.strip()] = parse_value(value)
    return out


def apply_overrides(obj, values: dict):
    """Return a copy of dataclass ``obj`` with the matching keys replaced."""
    names = {f.name: f for f in dataclasses.fields(obj)}
    changes = {}
    for key, value in values.items():
        if key not in names:
            continue
        current = getattr(obj, key)
        if isinstance(current, tuple) and isinstance(value, (list, tuple, int)):
            value = tuple(value) if isinstance(value, (list, tuple)) else (value,)
        elif isinstance(current, float) and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        changes[key] = value
    return dataclasses.replace(obj, **changes)
