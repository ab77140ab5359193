"""Structured warnings shared by all stages."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

logger = logging.getLogger("selfcol")


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    message: str
    data: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {"kind": self.kind, "message": self.message, "data": self.data}


def note(sink: list[Diagnostic] | None, kind: str, message: str, **data: Any) -> Diagnostic:
    d = Diagnostic(kind, message, data)
    logger.debug("%s: %s %s", kind, message, data)
    if sink is not None:
        sink.append(d)
    return d
