"""Volume attention, detection head, demographic fusion and overlays.

Attention scores each patch context through linear -> swish -> bilinear ->
linear layers, normalizes with a softmax restricted to valid patches, and
pools the contexts with those weights.  A two-class affine head turns the
pooled context into a detection probability.  Fusion concatenates that
probability with encoded demographics and feeds a trained linear model,
whose weight*value terms double as per-feature contributions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .curves import VolumeFlowCurve
from .encoder import PatchPlan, _sigmoid
from .errors import EmptySequence, InvalidParams, NotTrained, PlanViolation

MASKED_SCORE = -1e300  # stands in for -inf so masked patches claim no mass

SEX_CODES = ("female", "male")
SMOKING_CODES = ("never", "former", "current")


@dataclass
class AttentionParams:
    """Score-stack weights; widths follow the encoder output width 2H."""

    w1: np.ndarray  # (A, 2H)
    b1: np.ndarray  # (A,)
    w_bil: np.ndarray  # (A, A)
    w2: np.ndarray  # (A,)
    b2: np.ndarray  # () scalar

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "attn_w1": self.w1,
            "attn_b1": self.b1,
            "attn_bil": self.w_bil,
            "attn_w2": self.w2,
            "attn_b2": self.b2,
        }

    def validate(self):
        for name, a in self.arrays().items():
            if not np.all(np.isfinite(a)):
                raise InvalidParams(f"non-finite values in {name}")


def init_attention_params(rng: np.random.Generator, context_width: int, attn_width: int | None = None) -> AttentionParams:
    a = attn_width or max(context_width // 2, 1)
    return AttentionParams(
        w1=rng.normal(0.0, 1.0 / math.sqrt(context_width), size=(a, context_width)),
        b1=np.zeros(a),
        w_bil=rng.normal(0.0, 1.0 / math.sqrt(a), size=(a, a)),
        w2=rng.normal(0.0, 1.0 / math.sqrt(a), size=(a,)),
        b2=np.zeros(()),
    )


@dataclass
class HeadParams:
    """Affine map from pooled context to two class logits."""

    w: np.ndarray  # (2, 2H)
    b: np.ndarray  # (2,)

    def arrays(self) -> dict[str, np.ndarray]:
        return {"head_w": self.w, "head_b": self.b}


def init_head_params(rng: np.random.Generator, context_width: int) -> HeadParams:
    return HeadParams(
        w=rng.normal(0.0, 1.0 / math.sqrt(context_width), size=(2, context_width)),
        b=np.zeros(2),
    )


@dataclass(frozen=True)
class AttentionResult:
    """Per-patch weights (sum 1 over valid patches), pooled context, raw scores."""

    weights: np.ndarray
    context: np.ndarray
    score_trace: np.ndarray


@dataclass(frozen=True)
class DemographicRecord:
    """Sex, age, smoking status and the FEV1/FVC ratio."""

    sex: str
    age: float
    smoking: str
    fev1_fvc_ratio: float

    def __post_init__(self):
        if self.sex not in SEX_CODES:
            raise InvalidParams(f"unknown sex code {self.sex!r}")
        if self.smoking not in SMOKING_CODES:
            raise InvalidParams(f"unknown smoking code {self.smoking!r}")
        if not self.age > 0:
            raise InvalidParams("age must be positive")
        if not (0.0 < self.fev1_fvc_ratio <= 1.0):
            raise InvalidParams("FEV1/FVC ratio must be in (0, 1]")


STRUCT_FEATURE_NAMES = (
    "sex=female",
    "sex=male",
    "smoking=never",
    "smoking=former",
    "smoking=current",
    "age_std",
    "fev1_fvc_ratio",
)


@dataclass
class DemographicEncoder:
    """One-hot categoricals plus age standardized by training-set statistics."""

    age_mean: float | None = None
    age_std: float | None = None

    def fit(self, records: list[DemographicRecord]) -> "DemographicEncoder":
        ages = np.array([r.age for r in records], dtype=float)
        self.age_mean = float(ages.mean())
        self.age_std = float(ages.std()) or 1.0
        return self

    def transform(self, record: DemographicRecord) -> np.ndarray:
        if self.age_mean is None:
            raise NotTrained("demographic encoder has not been fitted")
        sex = [1.0 if record.sex == c else 0.0 for c in SEX_CODES]
        smoking = [1.0 if record.smoking == c else 0.0 for c in SMOKING_CODES]
        age = (record.age - self.age_mean) / self.age_std
        return np.array(sex + smoking + [age, record.fev1_fvc_ratio])

    def to_dict(self) -> dict:
        return {"age_mean": self.age_mean, "age_std": self.age_std}

    @classmethod
    def from_dict(cls, d: dict) -> "DemographicEncoder":
        return cls(age_mean=d["age_mean"], age_std=d["age_std"])


@dataclass(frozen=True)
class RiskReport:
    """Detection probability, attention overlay, fused risk and contributions."""

    detection_probability: float
    overlay: dict
    fused_risk: float
    contributions: dict[str, float]


# ---------------------------------------------------------------------------
# forward kernels (batched; single-sample public wrappers below)


def attention_forward_padded(contexts: np.ndarray, mask: np.ndarray, params: AttentionParams):
    """Attention over padded contexts (B, S, 2H) with validity mask (B, S).

    Returns (weights (B, S), pooled (B, 2H), scores (B, S), cache).
    """
    params.validate()
    if not np.any(mask):
        raise EmptySequence("no valid patches")
    x1 = contexts @ params.w1.T + params.b1
    sig = _sigmoid(x1)
    x2 = x1 * sig
    x3 = x2 @ params.w_bil
    scores = x3 @ params.w2 + params.b2
    masked_scores = np.where(mask > 0, scores, MASKED_SCORE)
    shifted = masked_scores - masked_scores.max(axis=1, keepdims=True)
    expd = np.exp(shifted) * (mask > 0)
    weights = expd / expd.sum(axis=1, keepdims=True)
    pooled = np.einsum("bs,bsc->bc", weights, contexts)
    cache = (contexts, x1, sig, x2, x3, weights)
    return weights, pooled, scores, cache


def attention_backward_padded(dpooled: np.ndarray, cache, params: AttentionParams):
    """Backward of attention_forward_padded w.r.t. contexts and parameters."""
    contexts, x1, sig, x2, x3, weights = cache
    dweights = np.einsum("bc,bsc->bs", dpooled, contexts)
    dcontexts = weights[:, :, None] * dpooled[:, None, :]
    # softmax jacobian, rows independent; masked weights are zero so stay zero
    inner = (dweights * weights).sum(axis=1, keepdims=True)
    dscores = weights * (dweights - inner)
    dx3 = dscores[:, :, None] * params.w2[None, None, :]
    dw2 = np.einsum("bs,bsa->a", dscores, x3)
    db2 = np.asarray(dscores.sum())
    dx2 = dx3 @ params.w_bil.T
    dw_bil = np.einsum("bsa,bsk->ak", x2, dx3)
    dx1 = dx2 * (sig + x1 * sig * (1.0 - sig))
    dcontexts += dx1 @ params.w1
    dw1 = np.einsum("bsa,bsc->ac", dx1, contexts)
    db1 = dx1.sum(axis=(0, 1))
    grads = {"attn_w1": dw1, "attn_b1": db1, "attn_bil": dw_bil, "attn_w2": dw2, "attn_b2": db2}
    return dcontexts, grads


def head_forward(pooled: np.ndarray, params: HeadParams):
    """Class probabilities (B, 2) from pooled contexts (B, 2H)."""
    logits = pooled @ params.w.T + params.b
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    probs = expd / expd.sum(axis=1, keepdims=True)
    return probs, logits


def head_backward(dlogits: np.ndarray, pooled: np.ndarray, params: HeadParams):
    dpooled = dlogits @ params.w
    grads = {"head_w": dlogits.T @ pooled, "head_b": dlogits.sum(axis=0)}
    return dpooled, grads


# ---------------------------------------------------------------------------
# public single-sample operations


def volume_attention(contexts: np.ndarray, params: AttentionParams) -> AttentionResult:
    """Attention over one sample's valid patch contexts (T, 2H)."""
    contexts = np.asarray(contexts, dtype=float)
    if contexts.ndim != 2 or contexts.shape[0] == 0:
        raise EmptySequence("need at least one valid patch context")
    mask = np.ones((1, contexts.shape[0]), dtype=np.int64)
    weights, pooled, scores, _ = attention_forward_padded(contexts[None], mask, params)
    return AttentionResult(weights=weights[0], context=pooled[0], score_trace=scores[0])


def detection_head(context: np.ndarray, params: HeadParams) -> float:
    """Probability of the positive (disease) class for one pooled context."""
    context = np.asarray(context, dtype=float)
    if not np.all(np.isfinite(context)):
        raise InvalidParams("non-finite context")
    probs, _ = head_forward(context[None], params)
    return float(probs[0, 1])


def fuse_and_score(p_hat: float, demo: DemographicRecord, fusion_model, encoder: DemographicEncoder):
    """Fused risk plus per-feature weight*value contributions.

    fusion_model is a trained two-class linear model (see training module);
    the fused feature vector is [p_hat] ++ encoded demographics.
    """
    struct = encoder.transform(demo)
    features = np.concatenate([[p_hat], struct])
    probs = fusion_model.predict_proba(features[None])[0]
    risk = float(probs[1])
    gap_w = fusion_model.weights[1] - fusion_model.weights[0]
    names = ("detection_probability",) + STRUCT_FEATURE_NAMES
    contributions = {name: float(w * v) for name, w, v in zip(names, gap_w, features)}
    return risk, contributions


def attention_overlay(
    result: AttentionResult, curve: VolumeFlowCurve, plan: PatchPlan
) -> dict:
    """Map per-patch weights back onto contiguous volume spans of the curve."""
    n_points = len(curve)
    if math.ceil(n_points / plan.k) != result.weights.size:
        raise PlanViolation("plan does not match the number of attention weights")
    volumes = curve.volumes
    patches = []
    for j, weight in enumerate(result.weights):
        patches.append(
            {
                "v_start": float(volumes[j * plan.k]),
                "v_end": float(volumes[min((j + 1) * plan.k, n_points - 1)]),
                "weight": float(weight),
            }
        )
    return {"patches": patches}


def overlay_svg(overlay: dict, curve: VolumeFlowCurve, width: int = 640, height: int = 240) -> str:
    """Standalone SVG: the Volume-Flow polyline with a heat strip underneath."""
    v = curve.volumes
    q = curve.flows
    v_span = max(v[-1] - v[0], 1e-12)
    q_max = max(float(q.max()), 1e-12)
    plot_h = height - 30
    xs = (v - v[0]) / v_span * width
    ys = plot_h - q / q_max * (plot_h - 10)
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    w_max = max((p["weight"] for p in overlay["patches"]), default=1.0) or 1.0
    rects = []
    for p in overlay["patches"]:
        x0 = (p["v_start"] - v[0]) / v_span * width
        x1 = (p["v_end"] - v[0]) / v_span * width
        heat = int(255 * p["weight"] / w_max)
        rects.append(
            f'<rect x="{x0:.2f}" y="{plot_h + 5}" width="{max(x1 - x0, 0.0):.2f}" height="20" '
            f'fill="rgb(255,{255 - heat},0)" fill-opacity="0.9"/>'
        )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
        f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>'
        + "".join(rects)
        + "</svg>"
    )
