"""Prompt templates for every agent call, loaded from plain-text assets.

Templates use ``string.Template`` placeholders (``${name}``) so literal
braces in the prompt bodies survive rendering. A config may point at an
alternate assets directory; missing files there fall back to the shipped
defaults.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from string import Template

TEMPLATE_NAMES = (
    "error_analysis",
    "pattern_categorization",
    "strategy_drafting",
    "generation_pattern",
    "generation_error",
    "quality_control",
)


class PromptLibrary:
    def __init__(self, assets_dir: str | Path | None = None):
        self.assets_dir = Path(assets_dir) if assets_dir else None
        self._cache: dict[str, Template] = {}

    def _load(self, name: str) -> Template:
        if name not in TEMPLATE_NAMES:
            raise KeyError(f"unknown prompt template {name!r}")
        if name not in self._cache:
            filename = f"{name}.txt"
            if self.assets_dir is not None and (self.assets_dir / filename).exists():
                text = (self.assets_dir / filename).read_text(encoding="utf-8")
            else:
                text = (resources.files("augloop") / "assets" / filename).read_text(encoding="utf-8")
            self._cache[name] = Template(text)
        return self._cache[name]

    def render(self, name: str, **fields: str) -> str:
        return self._load(name).substitute(**fields)
