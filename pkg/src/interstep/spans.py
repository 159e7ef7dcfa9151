"""Source positions for parsed artifacts and their diagnostics."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Span:
    """A source range; line/column are 1-based, start/end are byte offsets."""

    line: int
    column: int
    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"span start {self.start} exceeds end {self.end}")

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"
