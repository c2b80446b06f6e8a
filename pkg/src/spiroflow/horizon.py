"""Future-risk features and multi-horizon onset classification.

The feature vector concatenates the fused COPD risk, the four phase
concavities, the concavity trend and the encoded demographics; a trained
multinomial logistic model maps it to a distribution over six onset
horizons.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .attention import DemographicEncoder, DemographicRecord, STRUCT_FEATURE_NAMES
from .errors import InvalidArgument, NotTrained
from .phases import ConcavityProfile
from .training import LogisticModel


class HorizonLabel(str, Enum):
    WITHIN_1Y = "WITHIN_1Y"
    WITHIN_2Y = "WITHIN_2Y"
    WITHIN_3Y = "WITHIN_3Y"
    WITHIN_4Y = "WITHIN_4Y"
    YEAR_5_PLUS = "YEAR_5_PLUS"
    NON_COPD = "NON_COPD"


HORIZON_ORDER = [
    HorizonLabel.WITHIN_1Y,
    HorizonLabel.WITHIN_2Y,
    HorizonLabel.WITHIN_3Y,
    HorizonLabel.WITHIN_4Y,
    HorizonLabel.YEAR_5_PLUS,
    HorizonLabel.NON_COPD,
]

FUTURE_FEATURE_NAMES = (
    "fused_risk",
    "c_pef_fef25",
    "c_fef25_fef50",
    "c_fef50_fef75",
    "c_fef75_plus",
    "concavity_trend",
) + STRUCT_FEATURE_NAMES


def future_feature_vector(
    fused_risk: float,
    profile: ConcavityProfile,
    demo: DemographicRecord,
    encoder: DemographicEncoder,
) -> np.ndarray:
    """Fixed-order concatenation: risk, four concavities, trend, demographics."""
    head = np.array(
        [
            fused_risk,
            profile.c_pef_fef25,
            profile.c_fef25_fef50,
            profile.c_fef50_fef75,
            profile.c_fef75_plus,
            profile.trend,
        ]
    )
    vec = np.concatenate([head, encoder.transform(demo)])
    if not np.all(np.isfinite(vec)):
        raise InvalidArgument("future feature vector must be finite")
    return vec


def predict_future_risk(vec: np.ndarray, model: LogisticModel) -> dict[HorizonLabel, float]:
    """Distribution over the six onset horizons."""
    if not model.fitted:
        raise NotTrained("horizon model has not been trained")
    probs = model.predict_proba(np.asarray(vec, dtype=float)[None])[0]
    out = {}
    for cls, p in zip(model.classes, probs):
        out[HorizonLabel(str(cls))] = float(p)
    for label in HORIZON_ORDER:
        out.setdefault(label, 0.0)
    return out


def top_horizon(dist: dict[HorizonLabel, float]) -> HorizonLabel:
    return max(HORIZON_ORDER, key=lambda label: dist.get(label, 0.0))
