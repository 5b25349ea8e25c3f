"""Problem bundles: operator + data + fidelity (+ optional ground truth)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fidelity import QuadraticFidelity
from .measures import DiscreteMeasure, Domain
from .operators import MeasurementOperator

__all__ = ["GroundTruth", "Problem"]


@dataclass(frozen=True)
class GroundTruth:
    measure: DiscreteMeasure
    noise_seed: int | None = None


@dataclass
class Problem:
    operator: MeasurementOperator
    fidelity: QuadraticFidelity
    ground_truth: GroundTruth | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.fidelity.m != self.operator.m:
            raise ValueError(
                f"data vector length {self.fidelity.m} does not match m={self.operator.m}")

    @property
    def domain(self) -> Domain:
        return self.operator.domain

    @property
    def y(self) -> np.ndarray:
        return self.fidelity.y
