"""Key-patch decomposition, conv patch embedding, masking and the Bi-LSTM.

A varied-length flow series is cut into fixed-length patches (the last one
zero-padded), each patch is embedded by a small two-layer 1-D conv stack
with mean pooling, samples are assembled into a fixed-shape masked block,
valid patch rows are packed, and a bidirectional LSTM produces per-patch
context features of width 2H.  Forward passes carry caches so the manual
backward passes used for training stay in one place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptySequence,
    InvalidArgument,
    InvalidParams,
    PlanViolation,
    ShapeError,
)

DEFAULT_PATCH_LEN = 32
DEFAULT_CHANNELS = 16
DEFAULT_HIDDEN = 32
DEFAULT_CONV_KERNEL = 5


@dataclass(frozen=True)
class PatchPlan:
    """Patch geometry of one sequence within a dataset."""

    k: int
    s: int
    n_max: int

    def __post_init__(self):
        if self.k < 1 or self.s < 1 or self.n_max < 1:
            raise InvalidArgument("patch plan fields must be >= 1")
        if self.s > self.n_max:
            raise PlanViolation("patch count exceeds dataset maximum")


def patch_plan(length: int, max_length: int, k: int) -> PatchPlan:
    """Patch counts via ceiling division; partial trailing patches count."""
    if length < 1 or k < 1:
        raise InvalidArgument("length and k must be >= 1")
    if length > max_length:
        raise InvalidArgument("length exceeds max_length")
    return PatchPlan(k=k, s=math.ceil(length / k), n_max=math.ceil(max_length / k))


@dataclass
class ConvEncoderParams:
    """Two-layer 1-D conv stack with tanh nonlinearities and mean pooling."""

    w1: np.ndarray  # (c_mid, 1, kernel)
    b1: np.ndarray  # (c_mid,)
    w2: np.ndarray  # (channels, c_mid, kernel)
    b2: np.ndarray  # (channels,)

    @property
    def channels(self) -> int:
        return self.w2.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"conv_w1": self.w1, "conv_b1": self.b1, "conv_w2": self.w2, "conv_b2": self.b2}


def init_conv_params(
    rng: np.random.Generator,
    channels: int = DEFAULT_CHANNELS,
    kernel: int = DEFAULT_CONV_KERNEL,
) -> ConvEncoderParams:
    c_mid = channels
    scale1 = 1.0 / math.sqrt(kernel)
    scale2 = 1.0 / math.sqrt(kernel * c_mid)
    return ConvEncoderParams(
        w1=rng.normal(0.0, scale1, size=(c_mid, 1, kernel)),
        b1=np.zeros(c_mid),
        w2=rng.normal(0.0, scale2, size=(channels, c_mid, kernel)),
        b2=np.zeros(channels),
    )


@dataclass
class BiLstmParams:
    """Gate weights for both directions; gate order is (i, f, g, o)."""

    w_f: np.ndarray  # (4H, C) forward direction input weights
    u_f: np.ndarray  # (4H, H)
    b_f: np.ndarray  # (4H,)
    w_b: np.ndarray  # (4H, C) backward direction
    u_b: np.ndarray  # (4H, H)
    b_b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.u_f.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "lstm_fw_w": self.w_f,
            "lstm_fw_u": self.u_f,
            "lstm_fw_b": self.b_f,
            "lstm_bw_w": self.w_b,
            "lstm_bw_u": self.u_b,
            "lstm_bw_b": self.b_b,
        }

    def validate(self):
        for name, a in self.arrays().items():
            if not np.all(np.isfinite(a)):
                raise InvalidParams(f"non-finite values in {name}")


def init_bilstm_params(
    rng: np.random.Generator, channels: int = DEFAULT_CHANNELS, hidden: int = DEFAULT_HIDDEN
) -> BiLstmParams:
    def one_direction():
        scale_w = 1.0 / math.sqrt(channels)
        scale_u = 1.0 / math.sqrt(hidden)
        return (
            rng.normal(0.0, scale_w, size=(4 * hidden, channels)),
            rng.normal(0.0, scale_u, size=(4 * hidden, hidden)),
            np.zeros(4 * hidden),
        )

    w_f, u_f, b_f = one_direction()
    w_b, u_b, b_b = one_direction()
    return BiLstmParams(w_f, u_f, b_f, w_b, u_b, b_b)


@dataclass(frozen=True)
class MaskedPatchTensor:
    """Fixed-shape (N, S_max, C) block with prefix-of-ones validity mask."""

    values: np.ndarray
    mask: np.ndarray
    lengths: np.ndarray


@dataclass(frozen=True)
class PackedFeatures:
    """Valid patch rows only, in (sample, patch) order."""

    rows: np.ndarray  # (T, C)
    offsets: np.ndarray  # (N,) start index of each sample's span
    lengths: np.ndarray  # (N,)


# ---------------------------------------------------------------------------
# conv kernels


def _conv1d_same(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Zero-padded same-length 1-D correlation. x: (P, Cin, L), w: (Cout, Cin, K)."""
    p, c_in, length = x.shape
    c_out, _, kernel = w.shape
    half = kernel // 2
    out = np.zeros((p, c_out, length))
    for tap in range(kernel):
        j = tap - half
        lo = max(0, -j)
        hi = min(length, length - j)
        if lo >= hi:
            continue
        # (P, lo:hi, Cout) contribution from input positions shifted by j
        out[:, :, lo:hi] += np.einsum("pcl,oc->pol", x[:, :, lo + j : hi + j], w[:, :, tap])
    return out + b[None, :, None]


def _conv1d_same_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Gradients of _conv1d_same w.r.t. x, w, b."""
    p, c_in, length = x.shape
    c_out, _, kernel = w.shape
    half = kernel // 2
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    for tap in range(kernel):
        j = tap - half
        lo = max(0, -j)
        hi = min(length, length - j)
        if lo >= hi:
            continue
        dw[:, :, tap] += np.einsum("pol,pcl->oc", dy[:, :, lo:hi], x[:, :, lo + j : hi + j])
        dx[:, :, lo + j : hi + j] += np.einsum("pol,oc->pcl", dy[:, :, lo:hi], w[:, :, tap])
    db = dy.sum(axis=(0, 2))
    return dx, dw, db


def conv_embed_forward(patches: np.ndarray, params: ConvEncoderParams):
    """Embed patches (P, 1, k) into features (P, C); returns cache for backward."""
    a1 = _conv1d_same(patches, params.w1, params.b1)
    z1 = np.tanh(a1)
    a2 = _conv1d_same(z1, params.w2, params.b2)
    z2 = np.tanh(a2)
    feats = z2.mean(axis=2)
    cache = (patches, z1, z2)
    return feats, cache


def conv_embed_backward(dfeats: np.ndarray, cache, params: ConvEncoderParams):
    patches, z1, z2 = cache
    length = patches.shape[2]
    dz2 = np.repeat(dfeats[:, :, None] / length, length, axis=2)
    da2 = dz2 * (1.0 - z2 * z2)
    dz1, dw2, db2 = _conv1d_same_backward(da2, z1, params.w2)
    da1 = dz1 * (1.0 - z1 * z1)
    _, dw1, db1 = _conv1d_same_backward(da1, patches, params.w1)
    return {"conv_w1": dw1, "conv_b1": db1, "conv_w2": dw2, "conv_b2": db2}


def patchify(series: np.ndarray, plan: PatchPlan) -> np.ndarray:
    """Cut a 1-D series into (S, 1, k) patches, zero-padding the last one."""
    series = np.asarray(series, dtype=float)
    if series.ndim != 1:
        raise ShapeError("series must be one-dimensional")
    if math.ceil(series.size / plan.k) != plan.s:
        raise ShapeError("series length inconsistent with patch plan")
    padded = np.zeros(plan.s * plan.k)
    padded[: series.size] = series
    return padded.reshape(plan.s, 1, plan.k)


def encode_patches(series: np.ndarray, plan: PatchPlan, params: ConvEncoderParams) -> np.ndarray:
    """Per-patch feature matrix (S, C) for one sequence."""
    feats, _ = conv_embed_forward(patchify(series, plan), params)
    return feats


# ---------------------------------------------------------------------------
# masking and packing


def mask_and_pack(
    features: list[np.ndarray], plans: list[PatchPlan]
) -> tuple[MaskedPatchTensor, PackedFeatures]:
    """Assemble the masked fixed-shape block and the packed valid rows."""
    if len(features) != len(plans):
        raise ShapeError("features and plans must be aligned")
    if not features:
        raise EmptySequence("no samples to pack")
    n_max = plans[0].n_max
    channels = features[0].shape[1]
    n = len(features)
    values = np.zeros((n, n_max, channels))
    mask = np.zeros((n, n_max), dtype=np.int64)
    lengths = np.zeros(n, dtype=np.int64)
    for i, (feat, plan) in enumerate(zip(features, plans)):
        if plan.n_max != n_max:
            raise PlanViolation("plans disagree on the dataset-wide patch maximum")
        if feat.shape != (plan.s, channels):
            raise ShapeError(f"sample {i}: features shape {feat.shape} != ({plan.s}, {channels})")
        if plan.s > n_max:
            raise PlanViolation(f"sample {i}: patch count {plan.s} exceeds maximum {n_max}")
        values[i, : plan.s] = feat
        mask[i, : plan.s] = 1
        lengths[i] = plan.s
    offsets = np.concatenate([[0], np.cumsum(lengths)[:-1]])
    rows = np.concatenate([values[i, : lengths[i]] for i in range(n)], axis=0)
    return (
        MaskedPatchTensor(values=values, mask=mask, lengths=lengths),
        PackedFeatures(rows=rows, offsets=offsets, lengths=lengths),
    )


def unpack(packed: PackedFeatures, n_max: int) -> MaskedPatchTensor:
    """Inverse of packing: rebuild the masked block with zeros at masked slots."""
    n = packed.lengths.size
    channels = packed.rows.shape[1]
    values = np.zeros((n, n_max, channels))
    mask = np.zeros((n, n_max), dtype=np.int64)
    for i in range(n):
        s = int(packed.lengths[i])
        o = int(packed.offsets[i])
        values[i, :s] = packed.rows[o : o + s]
        mask[i, :s] = 1
    return MaskedPatchTensor(values=values, mask=mask, lengths=packed.lengths.copy())


# ---------------------------------------------------------------------------
# LSTM kernels (batched over samples, loop over time)


def _lstm_forward_padded(x: np.ndarray, lengths: np.ndarray, w, u, b):
    """Unidirectional LSTM over padded input (B, S, C); invalid steps stay zero."""
    bsz, steps, _ = x.shape
    hdim = u.shape[1]
    h = np.zeros((bsz, hdim))
    c = np.zeros((bsz, hdim))
    outputs = np.zeros((bsz, steps, hdim))
    caches = []
    for t in range(steps):
        valid = (t < lengths).astype(float)[:, None]
        pre = x[:, t] @ w.T + h @ u.T + b
        i = _sigmoid(pre[:, :hdim])
        f = _sigmoid(pre[:, hdim : 2 * hdim])
        g = np.tanh(pre[:, 2 * hdim : 3 * hdim])
        o = _sigmoid(pre[:, 3 * hdim :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        caches.append((x[:, t], h, c, i, f, g, o, c_new, tc, valid))
        h = valid * h_new
        c = valid * c_new
        outputs[:, t] = h
    return outputs, caches


def _lstm_backward_padded(doutputs: np.ndarray, caches, w, u):
    """Backward pass of _lstm_forward_padded. Returns (dx, dw, du, db)."""
    bsz, steps, hdim = doutputs.shape
    dx = np.zeros((bsz, steps, w.shape[1]))
    dw = np.zeros_like(w)
    du = np.zeros_like(u)
    db = np.zeros(4 * hdim)
    dh_next = np.zeros((bsz, hdim))
    dc_next = np.zeros((bsz, hdim))
    for t in range(steps - 1, -1, -1):
        x_t, h_prev, c_prev, i, f, g, o, c_new, tc, valid = caches[t]
        dh = (doutputs[:, t] + dh_next) * valid
        dc = dc_next * valid + dh * o * (1.0 - tc * tc)
        do = dh * tc
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dpre = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        dw += dpre.T @ x_t
        du += dpre.T @ h_prev
        db += dpre.sum(axis=0)
        dx[:, t] = dpre @ w
        dh_next = dpre @ u
        dc_next = dc * f
    return dx, dw, du, db


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _reverse_padded(x: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Reverse each sample's valid prefix in place along the time axis."""
    out = np.zeros_like(x)
    for i, length in enumerate(lengths):
        s = int(length)
        out[i, :s] = x[i, :s][::-1]
    return out


def bilstm_forward_padded(x: np.ndarray, lengths: np.ndarray, params: BiLstmParams):
    """Bidirectional pass over padded (B, S, C) input; output (B, S, 2H) + cache."""
    params.validate()
    out_f, cache_f = _lstm_forward_padded(x, lengths, params.w_f, params.u_f, params.b_f)
    x_rev = _reverse_padded(x, lengths)
    out_b_rev, cache_b = _lstm_forward_padded(x_rev, lengths, params.w_b, params.u_b, params.b_b)
    out_b = _reverse_padded(out_b_rev, lengths)
    return np.concatenate([out_f, out_b], axis=2), (cache_f, cache_b, lengths)


def bilstm_backward_padded(dout: np.ndarray, cache, params: BiLstmParams):
    """Backward of bilstm_forward_padded. Returns (dx, grads dict)."""
    cache_f, cache_b, lengths = cache
    hdim = params.hidden
    dout_f = dout[:, :, :hdim]
    dout_b = dout[:, :, hdim:]
    dx_f, dw_f, du_f, db_f = _lstm_backward_padded(dout_f, cache_f, params.w_f, params.u_f)
    dout_b_rev = _reverse_padded(dout_b, lengths)
    dx_b_rev, dw_b, du_b, db_b = _lstm_backward_padded(
        dout_b_rev, cache_b, params.w_b, params.u_b
    )
    dx = dx_f + _reverse_padded(dx_b_rev, lengths)
    grads = {
        "lstm_fw_w": dw_f,
        "lstm_fw_u": du_f,
        "lstm_fw_b": db_f,
        "lstm_bw_w": dw_b,
        "lstm_bw_u": du_b,
        "lstm_bw_b": db_b,
    }
    return dx, grads


def bilstm_forward(packed: PackedFeatures, params: BiLstmParams) -> np.ndarray:
    """Per-patch context features (T, 2H); recurrence never crosses samples."""
    block = unpack(packed, int(packed.lengths.max()))
    out, _ = bilstm_forward_padded(block.values, block.lengths, params)
    spans = [out[i, : int(s)] for i, s in enumerate(packed.lengths)]
    return np.concatenate(spans, axis=0)
