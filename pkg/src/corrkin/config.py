"""Scenario files: ``key = value`` text with optional ``[section]`` blocks.

Keys before the first section describe the plasma.  Sections carry
subcommand knobs.  Every key is validated before any computation; an
unknown key or a malformed value raises :class:`ConfigError` carrying the
offending line number.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from pathlib import Path
from dataclasses import dataclass, field

from .plasma import PlasmaInput

PLASMA_KEYS = ("e2", "mass", "density", "temperature", "hbar", "spin", "kappa_D", "kappa_0")

# knob name -> parser, per section
_FLOAT = float


def _int(v: str) -> int:
    return int(v)


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("on", "true", "yes", "1"):
        return True
    if low in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {v!r}")


def _text(v: str) -> str:
    return v.strip()


def _floats(v: str) -> tuple:
    return tuple(float(x) for x in v.replace(",", " ").split())


def _optional_float(v: str):
    return None if v.strip().lower() in ("none", "inf", "") else float(v)


SECTION_KEYS = {
    "formation": {"t_end": _FLOAT, "n_t": _int, "x": _FLOAT, "x0": _optional_float},
    "levinson": {"t_end": _FLOAT, "dt": _FLOAT, "grid_n": _int, "n_offset": _int,
                 "degenerate": _bool, "initial_corr": _text},
    "qp": {"mu": _FLOAT, "statistics": _text, "coupling": _FLOAT, "beta": _FLOAT,
           "interaction": _text, "n_k": _int, "k_max": _FLOAT, "mean_field": _bool},
    "shifts": {"model": _text, "coupling": _FLOAT, "beta": _FLOAT, "resonance": _FLOAT,
               "width": _FLOAT, "k": _floats, "p": _floats, "q": _floats, "step": _FLOAT},
    "nlcollide": {"model": _text, "coupling": _FLOAT, "beta": _FLOAT, "resonance": _FLOAT,
                  "width": _FLOAT, "amplitude": _FLOAT, "mu": _FLOAT, "statistics": _text,
                  "n_k": _int, "k_max": _FLOAT, "gradient": _FLOAT, "n_p": _int,
                  "z_at_shifted": _bool},
    "thermo": {"mu": _FLOAT, "statistics": _text, "coupling": _FLOAT, "beta": _FLOAT,
               "check": _bool},
    "compare": {"reference": _text, "candidate": _text, "column": _text},
}


class ConfigError(ValueError):
    """Invalid scenario file; ``line`` and ``key`` locate the problem."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


@dataclass
class Scenario:
    name: str
    plasma: dict
    sections: dict = field(default_factory=dict)
    text: str = ""
    source: str | None = None

    @property
    def digest(self) -> str:
        """Hash of the normalized configuration (independent of comments and layout)."""
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def canonical(self) -> str:
        lines = [f"{k}={_repr(v)}" for k, v in sorted(self.plasma.items())]
        for sec in sorted(self.sections):
            for k, v in sorted(self.sections[sec].items()):
                lines.append(f"{sec}.{k}={_repr(v)}")
        return "\n".join(lines)

    def knobs(self, section: str) -> dict:
        return dict(self.sections.get(section, {}))

    def plasma_input(self) -> PlasmaInput:
        missing = [k for k in PLASMA_KEYS if k != "kappa_0" and k not in self.plasma]
        if missing:
            raise ConfigError(f"missing plasma keys: {', '.join(missing)}")
        try:
            return PlasmaInput(**{k: self.plasma.get(k) for k in PLASMA_KEYS})
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _repr(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_repr(x) for x in v)
    return str(v)


def _locate(lines: list[str], section: str | None, key: str) -> int | None:
    current = None
    for number, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
            continue
        if current == section and "=" in stripped and not stripped.startswith(("#", ";")):
            if stripped.split("=", 1)[0].strip() == key:
                return number
    return None


def parse_config(text: str, name: str = "scenario") -> Scenario:
    lines = text.splitlines()
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",), interpolation=None,
                                       default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string("[__plasma__]\n" + text)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        raise ConfigError(f"cannot parse: {exc.message if hasattr(exc, 'message') else exc}",
                          None if lineno is None else lineno - 1) from exc
    plasma = {}
    sections = {}
    for sec in parser.sections():
        label = None if sec == "__plasma__" else sec
        if label is not None and label not in SECTION_KEYS:
            raise ConfigError(f"unknown section [{label}]", _section_line(lines, label), label)
        allowed = PLASMA_KEYS if label is None else SECTION_KEYS[label]
        values = {}
        for key, raw in parser.items(sec):
            line = _locate(lines, label, key)
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r}" + (f" in [{label}]" if label else ""), line, key)
            try:
                if label is None:
                    value = _plasma_value(key, raw)
                else:
                    value = SECTION_KEYS[label][key](raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", line, key) from exc
            values[key] = value
        if label is None:
            plasma = values
        else:
            sections[label] = values
    return Scenario(name=name, plasma=plasma, sections=sections, text=text)


def _section_line(lines, label):
    for number, raw in enumerate(lines, start=1):
        if raw.strip() == f"[{label}]":
            return number
    return None


def _plasma_value(key: str, raw: str):
    if key == "spin":
        return int(raw)
    if key == "kappa_0":
        return _optional_float(raw)
    value = float(raw)
    if not math.isfinite(value):
        raise ValueError("must be finite")
    return value


def load_config(path) -> Scenario:
    with open(path, encoding="utf-8") as handle:
        text = handle.read()
    scenario = parse_config(text, Path(path).stem)
    scenario.source = str(path)
    return scenario
