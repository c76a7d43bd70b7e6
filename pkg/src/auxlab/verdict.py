"""Verdict record shared by every verification oracle."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OracleVerdict:
    """Outcome of one verification with its measured residuals.

    ``passed`` implies every residual was within its stated tolerance.
    ``witness`` optionally carries a point or direction demonstrating a
    failure (e.g. a lower point refuting a local-minimum claim).
    """

    passed: bool
    residuals: dict[str, float] = field(default_factory=dict)
    witness: np.ndarray | None = None
    notes: str = ""

    def to_json_dict(self) -> dict:
        out = {
            "passed": bool(self.passed),
            "residuals": {k: float(v) for k, v in sorted(self.residuals.items())},
            "notes": self.notes,
        }
        if self.witness is not None:
            out["witness"] = [float(v) for v in np.asarray(self.witness).reshape(-1)]
        return out
