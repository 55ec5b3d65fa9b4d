"""Experiment configuration: a flat ``section.key = value`` document.

Grammar
-------
* One ``key = value`` per line; blank lines and lines starting with ``#`` are
  ignored, as is anything after `` #`` on a line.
* Keys are dotted lower-case identifiers drawn from :data:`SCHEMA`; unknown
  or repeated keys are errors.
* List values are comma separated.
* ``grid.<key> = v1, v2, ...`` gives the values a parameter sweep expands over
  (alternatives of list-valued keys are separated by ``;``); ``grid.cap``
  bounds the number of grid cells.

Parsing collects every violation before raising :class:`ConfigError`.
Environment variables are never consulted.
"""

from __future__ import annotations

import hashlib
import itertools
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

from .kernel import DEFAULT_EPS
from .model import ModelParams
from .sampler import ProposalLaw, Schedule

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config", "TASKS", "SCHEMA"]

TASKS = ("exact", "sample", "ledger", "tailsum", "profile", "fit")
PROPOSALS = ("unit-step", "geometric-step")


class ConfigError(ValueError):
    """Invalid configuration; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class _Key:
    kind: str  # int, float, str, choice, ints, floats
    default: Any = None
    check: Callable[[Any], bool] | None = None
    rule: str = ""
    choices: tuple = ()


def _pos(v):
    return v > 0


SCHEMA: dict[str, _Key] = {
    "task": _Key("choice", None, choices=TASKS),
    "model.alpha": _Key("float", None, lambda v: v > 1, "alpha > 1"),
    "model.beta": _Key("float", None, _pos, "beta > 0"),
    "model.p": _Key("float", 2.0, lambda v: 1 <= v <= 2, "1 <= p <= 2"),
    "model.amplitude": _Key("float", 1.0, _pos, "amplitude > 0"),
    "model.eps": _Key("float", DEFAULT_EPS, _pos, "eps > 0"),
    "geometry.n": _Key("int", None, lambda v: v >= 1, "n >= 1"),
    "geometry.omega": _Key("int", 0),
    "run.seed": _Key("int", 0, lambda v: 0 <= v < 2**64, "0 <= seed < 2^64"),
    "run.burn_in": _Key("int", 1000, lambda v: v >= 0, "burn_in >= 0"),
    "run.sweeps": _Key("int", 10000, lambda v: v >= 0, "sweeps >= 0"),
    "run.thin": _Key("int", 1, lambda v: v >= 1, "thin >= 1"),
    "run.proposal": _Key("choice", "unit-step", choices=PROPOSALS),
    "run.q": _Key("float", 0.5, lambda v: 0 < v <= 1, "0 < q <= 1"),
    "exact.kmax": _Key("int", None, lambda v: v >= 1, "K >= 1"),
    "exact.budget": _Key("int", 10**7, lambda v: v >= 1, "budget >= 1"),
    "ledger.t": _Key("ints", None),
    "ledger.n": _Key("ints", None, lambda v: all(x >= 1 for x in v), "every n >= 1"),
    "tailsum.n_grid": _Key("ints", None, lambda v: len(v) > 0 and all(x >= 1 for x in v), "every n >= 1"),
    "profile.sizes": _Key(
        "ints", None,
        lambda v: len(v) > 0 and all(x >= 1 for x in v) and all(b > a for a, b in zip(v, v[1:])),
        "sizes >= 1 and strictly increasing",
    ),
    "fit.xs": _Key("floats", None, lambda v: all(x > 0 for x in v), "xs > 0"),
    "fit.ys": _Key("floats", None, lambda v: all(x > 0 for x in v), "ys > 0"),
    "fit.input": _Key("str", None),
    "fit.x_column": _Key("str", "n"),
    "fit.y_column": _Key("str", "variance"),
    "output.dir": _Key("str", "runs"),
    "grid.cap": _Key("int", 64, lambda v: v >= 1, "cap >= 1"),
}

REQUIRED = {
    "exact": ("model.alpha", "model.beta", "geometry.n", "exact.kmax"),
    "sample": ("model.alpha", "model.beta", "geometry.n"),
    "ledger": ("model.alpha", "model.beta", "geometry.n", "exact.kmax", "ledger.t", "ledger.n"),
    "tailsum": ("model.alpha", "tailsum.n_grid"),
    "profile": ("model.alpha", "model.beta", "profile.sizes"),
    "fit": (),
}

_KEY_RE = re.compile(r"^[a-z_][a-z0-9_]*(\.[a-z_][a-z0-9_]*)*$")


def _convert(key: str, entry: _Key, raw: str):
    raw = raw.strip()
    if entry.kind == "int":
        return int(raw)
    if entry.kind == "float":
        return float(raw)
    if entry.kind == "str":
        if not raw:
            raise ValueError("empty value")
        return raw
    if entry.kind == "choice":
        if raw not in entry.choices:
            raise ValueError(f"must be one of {', '.join(entry.choices)}")
        return raw
    parts = [x.strip() for x in raw.split(",") if x.strip()]
    if not parts:
        raise ValueError("empty list")
    conv = int if entry.kind == "ints" else float
    return tuple(conv(x) for x in parts)


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _validate(key: str, entry: _Key, value, errors: list[str]) -> None:
    if entry.check is not None and not entry.check(value):
        errors.append(f"{key} = {_format(value)} violates {entry.rule}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration with defaults filled in.

    ``values`` maps every schema key to its value (``None`` when unset and
    without default); ``grid`` maps swept keys to their value lists.
    """

    values: Mapping[str, Any]
    grid: Mapping[str, tuple] = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def task(self) -> str:
        return self.values["task"]

    def model_params(self) -> ModelParams:
        v = self.values
        return ModelParams.of(v["model.alpha"], v["model.beta"], v["model.p"], v["model.amplitude"])

    def schedule(self) -> Schedule:
        v = self.values
        return Schedule(v["run.burn_in"], v["run.sweeps"], v["run.thin"])

    def proposal(self) -> ProposalLaw:
        return ProposalLaw(self.values["run.proposal"], self.values["run.q"])

    def window(self) -> tuple[int, int]:
        n = self.values["geometry.n"]
        return -n, n

    def emit(self, include_grid: bool = True) -> str:
        """Canonical text form; :func:`parse_config` of it gives back an equal config."""
        lines = [f"task = {self.task}"]
        for key in sorted(self.values):
            if key == "task" or self.values[key] is None:
                continue
            if key.startswith("grid.") and not include_grid:
                continue
            lines.append(f"{key} = {_format(self.values[key])}")
        if include_grid:
            for key in sorted(self.grid):
                sep = "; " if SCHEMA[key].kind in ("ints", "floats") else ", "
                lines.append(f"grid.{key} = {sep.join(_format(v) for v in self.grid[key])}")
        return "\n".join(lines) + "\n"

    def run_id(self) -> str:
        """Content hash of the resolved configuration (seed included)."""
        return hashlib.sha256(self.emit(include_grid=False).encode()).hexdigest()[:16]

    def replace(self, **overrides) -> "ExperimentConfig":
        """Copy with dotted-key overrides (use ``__`` for ``.``), revalidated."""
        values = dict(self.values)
        for k, v in overrides.items():
            values[k.replace("__", ".")] = v
        return _check(values, dict(self.grid))

    def with_values(self, assignment: Mapping[str, Any]) -> "ExperimentConfig":
        values = dict(self.values)
        values.update(assignment)
        return _check(values, {})

    def cells(self) -> list[dict[str, Any]]:
        """Cartesian expansion of the grid, in sorted key order."""
        keys = sorted(self.grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.grid[k] for k in keys))]


def _check(values: dict, grid: dict) -> ExperimentConfig:
    errors: list[str] = []
    for key, entry in SCHEMA.items():
        if values.get(key) is not None and key != "task":
            _validate(key, entry, values[key], errors)
    _check_required(values, errors)
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(values, grid)


def _check_required(values: dict, errors: list[str]) -> None:
    task = values.get("task")
    if task is None:
        errors.append("missing required key 'task'")
        return
    for key in REQUIRED[task]:
        if values.get(key) is None:
            errors.append(f"task '{task}' requires '{key}'")
    if task == "fit":
        has_lists = values.get("fit.xs") is not None and values.get("fit.ys") is not None
        if not has_lists and values.get("fit.input") is None:
            errors.append("task 'fit' requires 'fit.xs' and 'fit.ys' or 'fit.input'")
        if has_lists and len(values["fit.xs"]) != len(values["fit.ys"]):
            errors.append("fit.xs and fit.ys must have the same length")


def parse_config(text: str, task: str | None = None) -> ExperimentConfig:
    """Parse and validate a configuration document.

    ``task`` fills in the task when the document does not name one and must
    agree with it otherwise.
    """
    errors: list[str] = []
    raw: dict[str, tuple[int, str]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split(" #", 1)[0].strip()
        if not body or body.startswith("#"):
            continue
        if "=" not in body:
            errors.append(f"line {lineno}: expected 'key = value'")
            continue
        key, value = (s.strip() for s in body.split("=", 1))
        if not _KEY_RE.match(key):
            errors.append(f"line {lineno}: malformed key {key!r}")
            continue
        if key in raw:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        raw[key] = (lineno, value)

    values: dict[str, Any] = {k: s.default for k, s in SCHEMA.items()}
    grid: dict[str, tuple] = {}
    for key, (lineno, value) in raw.items():
        if key.startswith("grid.") and key != "grid.cap":
            target = key[len("grid."):]
            entry = SCHEMA.get(target)
            if entry is None or target in ("task", "grid.cap"):
                errors.append(f"line {lineno}: unknown grid key {target!r}")
                continue
            try:
                items = [_convert(target, entry, x) for x in _split_grid(value, entry)]
            except ValueError as exc:
                errors.append(f"line {lineno}: {key}: {exc}")
                continue
            for item in items:
                _validate(target, entry, item, errors)
            grid[target] = tuple(items)
            continue
        entry = SCHEMA.get(key)
        if entry is None:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            values[key] = _convert(key, entry, value)
        except ValueError as exc:
            errors.append(f"line {lineno}: {key}: {exc}")
            continue
        if key != "task":
            _validate(key, entry, values[key], errors)

    if task is not None:
        if values["task"] is None:
            values["task"] = task
        elif values["task"] != task:
            errors.append(f"config declares task '{values['task']}' but '{task}' was requested")
    _check_required(values, errors)
    if grid:
        n_cells = 1
        for v in grid.values():
            n_cells *= len(v)
        if n_cells > values["grid.cap"]:
            errors.append(f"grid has {n_cells} cells, above grid.cap = {values['grid.cap']}")
    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(values, grid)


def _split_grid(value: str, entry: _Key) -> list[str]:
    # list-valued keys are swept with ';' between alternatives
    if entry.kind in ("ints", "floats"):
        return [x for x in value.split(";") if x.strip()]
    return [x for x in value.split(",") if x.strip()]


def load_config(path, task: str | None = None) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read(), task)
