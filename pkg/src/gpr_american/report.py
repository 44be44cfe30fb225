"""Result record shared by every pricer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class PriceReport:
    method: str
    price: float
    wall_time: float
    config: dict = field(default_factory=dict)
    per_step: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.price = float(self.price)


def step_summary(step: int, model, **extra) -> dict:
    """Compact per-step record of a fitted surrogate's hyperparameters."""
    out = {"step": int(step)}
    if model is not None:
        ls = model.kernel.length_scales
        out.update(
            signal_std=float(model.kernel.signal_std),
            length_scale_min=float(np.min(ls)),
            length_scale_max=float(np.max(ls)),
            noise_var=float(model.noise_var),
            dim=int(model.dim),
        )
        if "jitter_escalated" in model.info:
            out["warning"] = f"jitter escalated to {model.info['jitter_escalated']:.3g}"
    out.update(extra)
    return out
