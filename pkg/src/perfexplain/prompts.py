"""Prompt templates and text assets.

Templates ship as editable text files under ``assets/prompts/``. Each file has
a ``[system]`` section and a ``[user]`` section; the user section carries
``${name}`` placeholders filled at call time. The performance analysis
guidelines and the optimization-technique taxonomy are plain text assets,
overridable per bundle / per deployment.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from string import Template

_ASSETS = resources.files("perfexplain") / "assets"


def _read_asset(relpath: str) -> str:
    return (_ASSETS / relpath).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def load_prompt(name: str) -> tuple[str, str]:
    """Return (system_prompt, user_template) for a role prompt asset."""
    text = _read_asset(f"prompts/{name}.txt")
    if "[system]" not in text or "[user]" not in text:
        raise ValueError(f"prompt asset {name!r} must contain [system] and [user] sections")
    _, rest = text.split("[system]", 1)
    system, user = rest.split("[user]", 1)
    return system.strip(), user.strip()


def render(name: str, **values: str) -> tuple[str, str]:
    """Render a prompt asset; returns (system_prompt, user_content).

    Placeholders may appear in either section (e.g. guidelines are injected
    into the system prompt); values are inserted verbatim, never re-expanded.
    """
    system, user_template = load_prompt(name)
    return Template(system).substitute(**values), Template(user_template).substitute(**values)


@lru_cache(maxsize=None)
def default_guidelines() -> str:
    return _read_asset("guidelines.md")


@lru_cache(maxsize=None)
def technique_taxonomy() -> tuple[str, ...]:
    lines = _read_asset("taxonomy.txt").splitlines()
    return tuple(ln.strip() for ln in lines if ln.strip() and not ln.startswith("#"))


@lru_cache(maxsize=None)
def bundle_schema() -> dict:
    return json.loads(_read_asset("bundle.schema.json"))
