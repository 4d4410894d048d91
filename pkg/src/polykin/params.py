from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError


@dataclass(frozen=True)
class Params:
    """Relaxation parameters nu in (-1/2, 1), theta in [0, 1], and delta > 0.

    ``nu`` and ``theta`` tune the Prandtl number and the second viscosity;
    ``delta`` is the number of non-translational degrees of freedom.
    """

    nu: float
    theta: float
    delta: float

    def __post_init__(self):
        if not (-0.5 < self.nu < 1.0):
            raise ParameterError(f"nu must lie in (-1/2, 1), got {self.nu}")
        if not (0.0 <= self.theta <= 1.0):
            raise ParameterError(f"theta must lie in [0, 1], got {self.theta}")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ParameterError(f"delta must be positive, got {self.delta}")

    @property
    def theorem_regime(self) -> bool:
        """True when the remainder is guaranteed non-negative (nu >= 0)."""
        return self.nu >= 0.0

    def to_dict(self) -> dict:
        return {"nu": self.nu, "theta": self.theta, "delta": self.delta}
