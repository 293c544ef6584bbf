"""Line-oriented ``key = value`` configuration files.

Keys may be dotted (``model.descn.alpha = 1.0``). ``#`` starts a comment;
blank lines are ignored. Later duplicates override earlier ones.
"""
from __future__ import annotations


class ConfigError(ValueError):
    pass


def parse_config(text: str, source: str = "<string>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def read_config(path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))


def section(cfg: dict[str, str], prefix: str) -> dict[str, str]:
    """Entries under ``prefix.`` with the prefix stripped."""
    p = prefix + "."
    return {k[len(p):]: v for k, v in cfg.items() if k.startswith(p)}
