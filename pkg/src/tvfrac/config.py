"""Flat ``key = value`` config files for :class:`ExperimentConfig`.

Blank lines and ``#`` comments are ignored. Keys are the config field names,
plus ``preset`` which picks the starting values. Box-valued keys use the
same notation the result tables print::

    omega_boxes = [0.04,0.5] + [0.56,0.96]     # union of two 1D boxes
    f_star_box  = [0.25,0.75] x [0.25,0.75]    # one 2D box

``mu_spec`` is ``cos2pit``, ``one`` or a comma-separated sample list.
"""
import re
from dataclasses import fields, replace

from .errors import ConfigError
from .harness import ExperimentConfig
from . import presets

_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
_BOX_SIDE = re.compile(r"^\[\s*([^,\]]+)\s*,\s*([^\]]+)\s*\]$")


def _parse_bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_box(text):
    """``[a,b] x [c,d]`` -> ((a, b), (c, d))."""
    sides = []
    for part in text.split("x"):
        m = _BOX_SIDE.match(part.strip())
        if not m:
            raise ValueError(f"bad box side {part.strip()!r}; expected [lo,hi]")
        sides.append((_parse_number(m.group(1)), _parse_number(m.group(2))))
    return tuple(sides)


def _parse_number(text):
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def parse_boxes(text):
    return tuple(parse_box(b) for b in text.split("+"))


def _parse_mu(text):
    if text in ("cos2pit", "one"):
        return text
    return tuple(float(v) for v in text.split(","))


def _convert(key, text):
    if key == "omega_boxes":
        return parse_boxes(text)
    if key == "f_star_box":
        return parse_box(text)
    if key == "mu_spec":
        return _parse_mu(text)
    kind = _FIELD_TYPES[key]
    if kind in (bool, "bool"):
        return _parse_bool(text)
    if kind in (int, "int"):
        return int(text)
    if kind in (float, "float"):
        return _parse_number(text)
    return text


def parse_text(text, source="<config>"):
    """Return the ordered ``{key: raw string}`` pairs of a config text."""
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{source}:{lineno}: empty key or value")
        if key in pairs:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        pairs[key] = (lineno, value)
    return pairs


def config_from_text(text, source="<config>"):
    pairs = parse_text(text, source)
    base = ExperimentConfig()
    if "preset" in pairs:
        lineno, name = pairs.pop("preset")
        try:
            base = presets.named(name)
        except KeyError:
            raise ConfigError(f"{source}:{lineno}: unknown preset {name!r}; choose from {presets.NAMES}") from None
    updates = {}
    for key, (lineno, value) in pairs.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            updates[key] = _convert(key, value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    try:
        return replace(base, **updates)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_text(text, source=str(path))
