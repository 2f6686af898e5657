"""First-match regex codebook: free-form strings into a closed category set.

Rules are tried in ascending priority rank; the first pattern that matches
wins, and inputs matching nothing fall back to a designated category. The
engine is generic; the rule lists themselves are data.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence


@dataclass(frozen=True)
class CodebookRule:
    pattern: str
    category: str
    priority: int

    def __post_init__(self) -> None:
        if not self.category:
            raise ValueError("category must be non-empty")
        re.compile(self.pattern)  # fail fast on bad patterns


class Codebook:
    """A priority-ordered rule list over a closed category set."""

    def __init__(
        self,
        rules: Sequence[CodebookRule],
        fallback_category: str,
        category_set: Sequence[str],
        case_insensitive: bool = True,
    ):
        categories = set(category_set)
        if fallback_category not in categories:
            raise ValueError(f"fallback category {fallback_category!r} not in category set")
        priorities = [rule.priority for rule in rules]
        if len(priorities) != len(set(priorities)):
            raise ValueError("rule priorities must be unique")
        for rule in rules:
            if rule.category not in categories:
                raise ValueError(f"rule category {rule.category!r} not in category set")
        flags = re.IGNORECASE if case_insensitive else 0
        self.rules = sorted(rules, key=lambda rule: rule.priority)
        self.fallback_category = fallback_category
        self.category_set = frozenset(categories)
        self._compiled = [(re.compile(rule.pattern, flags), rule.category) for rule in self.rules]

    @classmethod
    def from_json_file(cls, path: str | Path) -> "Codebook":
        """Load a codebook from its JSON file format.

        Expected shape: ``{"rules": [{"pattern", "category", "priority"}...],
        "fallback_category": ..., "categories": [...]}``.
        """
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        rules = [
            CodebookRule(pattern=r["pattern"], category=r["category"], priority=r["priority"])
            for r in data["rules"]
        ]
        return cls(
            rules=rules,
            fallback_category=data["fallback_category"],
            category_set=data["categories"],
            case_insensitive=data.get("case_insensitive", True),
        )


def map_value(cb: Codebook, raw: str) -> str:
    """Category of the first matching rule, else the fallback category."""
    for pattern, category in cb._compiled:
        if pattern.search(raw):
            return category
    return cb.fallback_category


def gold_accuracy(cb: Codebook, samples: Sequence[tuple[str, str]]) -> float:
    """Exact fraction of samples whose mapped category equals the gold label."""
    if not samples:
        raise ValueError("samples must be non-empty")
    for raw, gold in samples:
        if gold not in cb.category_set:
            raise ValueError(f"gold category {gold!r} not in category set")
    correct = sum(1 for raw, gold in samples if map_value(cb, raw) == gold)
    return correct / len(samples)
