"""Versioned prompt templates stored as text resources with ``{{slot}}`` markers."""

from __future__ import annotations

import hashlib
import re
from functools import lru_cache
from importlib import resources

TEMPLATE_VERSION = "v1"
TEMPLATE_NAMES = ("instruction", "zero_shot", "few_shot", "few_shot_example", "baseline1", "baseline1_examples")

_SLOT = re.compile(r"\{\{(\w+)\}\}")


@lru_cache(maxsize=None)
def load_template(name: str, version: str = TEMPLATE_VERSION) -> str:
    """Template text with the file's single trailing newline removed."""
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"unknown template {name!r}")
    text = resources.files(__package__).joinpath("templates", version, f"{name}.txt").read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


def slots(template: str) -> list[str]:
    return _SLOT.findall(template)


def render(template: str, **values) -> str:
    """Fill every slot; a missing or unused value is an error.

    Substitution is single-pass, so slot-like text inside a value is left alone.
    """
    wanted = set(slots(template))
    missing = wanted - values.keys()
    if missing:
        raise KeyError(f"missing template values: {sorted(missing)}")
    extra = values.keys() - wanted
    if extra:
        raise KeyError(f"unused template values: {sorted(extra)}")
    return _SLOT.sub(lambda m: str(values[m.group(1)]), template)


def template_manifest(version: str = TEMPLATE_VERSION) -> dict:
    return {
        "version": version,
        "sha256": {n: hashlib.sha256(load_template(n, version).encode("utf-8")).hexdigest()
                   for n in TEMPLATE_NAMES},
    }
