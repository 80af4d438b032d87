"""Group definition files: a line-based key-value format, one section per group.

::

    # groups.cfg
    [pair]
    kind = mobius
    label = my-pair
    generators = 4 0 0 0.25 ; 2.125 1.875 1.875 2.125

    [wobble]
    kind = perturbed_rotation
    generators = 0.618034 0.05 ; 0.414214 0.02

    [demo]
    builtin = schottky2

A ``mobius`` group lists four reals per generator (row-major 2x2 matrix),
with ``;`` separating generators; matrices are normalized to |det| = 1 on
load and a warning is recorded whenever the input determinant differed.  A
``perturbed_rotation`` group lists (rotation number, amplitude) pairs.
``builtin`` names a packaged example group and excludes explicit
generators.  ``label`` defaults to the section name.

Structural problems (unreadable syntax) raise ParseError with the line
number; semantic problems are returned as a list of Diagnostic records so
that a caller can report all of them at once.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

from .groups import BUILTIN_GROUPS, builtin_group
from .maps import MapError, MobiusTransform, PerturbedRotation
from .words import GroupSystem, WordError

_SECTION_RE = re.compile(r"^\[([A-Za-z0-9_.-]+)\]$")
_KINDS = ("mobius", "perturbed_rotation")
_FIELDS = ("label", "kind", "generators", "builtin")
_DEGENERATE_TOL = 1e-12
_DET_WARN_TOL = 1e-9


class ParseError(ValueError):
    """A structurally unreadable config file."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Diagnostic:
    """One semantic problem in a config file."""

    line: int
    field: str
    reason: str

    def __str__(self) -> str:
        return f"line {self.line}, field {self.field!r}: {self.reason}"


@dataclass(frozen=True)
class GroupConfig:
    """A validated group definition.

    Exactly one of ``builtin`` and ``generators`` is populated; Mobius
    generator rows are stored |det|-normalized, with any rescaling recorded
    in ``warnings``.
    """

    label: str
    kind: str
    generators: tuple[tuple[float, ...], ...]
    builtin: str | None = None
    warnings: tuple[str, ...] = ()


def _strip_comment(raw: str) -> str:
    cut = len(raw)
    for mark in ("#", ";;"):
        pos = raw.find(mark)
        if pos >= 0:
            cut = min(cut, pos)
    return raw[:cut].strip()


def _split_sections(text: str) -> list[tuple[str, int, dict[str, tuple[int, str]]]]:
    """(section name, header line, {key: (line, value)}) per section, in order."""
    sections: list[tuple[str, int, dict[str, tuple[int, str]]]] = []
    current: dict[str, tuple[int, str]] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            current = {}
            sections.append((m.group(1), lineno, current))
            continue
        if "=" not in line:
            raise ParseError(lineno, f"expected 'key = value' or '[section]', got {line!r}")
        if current is None:
            raise ParseError(lineno, "key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip().lower()
        if key in current:
            raise ParseError(lineno, f"duplicate key {key!r} in section")
        current[key] = (lineno, value.strip())
    if not sections:
        raise ParseError(0, "no [section] headers found")
    return sections


def _parse_reals(value: str) -> list[list[float]]:
    chunks = [chunk.strip() for chunk in value.split(";")]
    out: list[list[float]] = []
    for chunk in chunks:
        if not chunk:
            raise ValueError("empty generator entry")
        out.append([float(tok) for tok in chunk.replace(",", " ").split()])
    return out


def _validate_section(name: str, header_line: int,
                      entries: dict[str, tuple[int, str]],
                      ) -> GroupConfig | list[Diagnostic]:
    diagnostics: list[Diagnostic] = []
    for key, (lineno, _value) in entries.items():
        if key not in _FIELDS:
            diagnostics.append(Diagnostic(lineno, key, "unknown field"))

    label = entries.get("label", (header_line, name))[1]
    builtin_entry = entries.get("builtin")
    generators_entry = entries.get("generators")
    kind_entry = entries.get("kind")

    if builtin_entry is not None:
        lineno, builtin_name = builtin_entry
        for other_key, other in (("generators", generators_entry),
                                 ("kind", kind_entry)):
            if other is not None:
                diagnostics.append(Diagnostic(
                    other[0], other_key, "mutually exclusive with 'builtin'"))
        if builtin_name not in BUILTIN_GROUPS:
            diagnostics.append(Diagnostic(
                lineno, "builtin",
                f"unknown builtin {builtin_name!r}; available: "
                + ", ".join(sorted(BUILTIN_GROUPS))))
        if diagnostics:
            return diagnostics
        return GroupConfig(label=label, kind="mobius", generators=(),
                           builtin=builtin_name)

    kind = "mobius"
    if kind_entry is not None:
        lineno, kind = kind_entry
        if kind not in _KINDS:
            diagnostics.append(Diagnostic(
                lineno, "kind", f"must be one of: {', '.join(_KINDS)}"))
            return diagnostics
    if generators_entry is None:
        diagnostics.append(Diagnostic(
            header_line, "generators",
            "required unless 'builtin' is given"))
        return diagnostics

    lineno, raw = generators_entry
    try:
        rows = _parse_reals(raw)
    except ValueError as err:
        diagnostics.append(Diagnostic(lineno, "generators", str(err)))
        return diagnostics

    warnings: list[str] = []
    generators: list[tuple[float, ...]] = []
    if kind == "mobius":
        for i, row in enumerate(rows):
            if len(row) != 4:
                diagnostics.append(Diagnostic(
                    lineno, "generators",
                    f"generator {i}: expected 4 reals, got {len(row)}"))
                continue
            det = row[0] * row[3] - row[1] * row[2]
            if abs(det) < _DEGENERATE_TOL:
                diagnostics.append(Diagnostic(
                    lineno, "generators", f"generator {i}: degenerate matrix"))
                continue
            if abs(abs(det) - 1.0) > _DET_WARN_TOL:
                warnings.append(
                    f"generator {i}: |det| = {abs(det):.6g}, normalized to 1")
            scale = 1.0 / math.sqrt(abs(det))
            generators.append(tuple(entry * scale for entry in row))
    else:
        for i, row in enumerate(rows):
            if len(row) != 2:
                diagnostics.append(Diagnostic(
                    lineno, "generators",
                    f"generator {i}: expected (rotation number, amplitude) "
                    f"pair, got {len(row)} values"))
                continue
            try:
                PerturbedRotation(row[0], row[1])
            except MapError as err:
                diagnostics.append(Diagnostic(
                    lineno, "generators", f"generator {i}: {err}"))
                continue
            generators.append((row[0], row[1]))
    if diagnostics:
        return diagnostics
    return GroupConfig(label=label, kind=kind, generators=tuple(generators),
                       builtin=None, warnings=tuple(warnings))


def parse_config_text(text: str) -> list[GroupConfig] | list[Diagnostic]:
    """All group sections of a config document, or every semantic problem."""
    sections = _split_sections(text)
    configs: list[GroupConfig] = []
    diagnostics: list[Diagnostic] = []
    for name, header_line, entries in sections:
        result = _validate_section(name, header_line, entries)
        if isinstance(result, GroupConfig):
            configs.append(result)
        else:
            diagnostics.extend(result)
    if diagnostics:
        return diagnostics
    return configs


def validate_config(path: str | Path) -> GroupConfig | list[Diagnostic]:
    """First group of the file at path, or the full list of diagnostics."""
    text = Path(path).read_text(encoding="utf-8")
    result = parse_config_text(text)
    if result and isinstance(result[0], Diagnostic):
        return result  # type: ignore[return-value]
    if not result:
        raise ParseError(0, "config defines no groups")
    return result[0]  # type: ignore[return-value]


def build_system(config: GroupConfig) -> GroupSystem:
    """Instantiate the group a config describes."""
    if config.builtin is not None:
        return builtin_group(config.builtin)
    if config.kind == "mobius":
        maps = [MobiusTransform(*row) for row in config.generators]
    else:
        maps = [PerturbedRotation(rho, amp) for rho, amp in config.generators]
    try:
        return GroupSystem(maps, label=config.label)
    except WordError as err:
        raise ParseError(0, f"generators do not form a usable system: {err}") from err
