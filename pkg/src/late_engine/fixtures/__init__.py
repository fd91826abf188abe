"""Reference populations shipped with the package and used verbatim in tests."""

from __future__ import annotations

import json
from importlib import resources

from ..population import Population, population_from_dict

_NAMES = ("p1", "p2", "p3")


def fixture_names() -> tuple[str, ...]:
    return _NAMES


def load_fixture(name: str) -> Population:
    key = name.lower()
    if key not in _NAMES:
        raise KeyError(f"unknown fixture {name!r}; available: {', '.join(_NAMES)}")
    text = resources.files(__package__).joinpath(f"{key}.json").read_text(encoding="utf-8")
    return population_from_dict(json.loads(text))
