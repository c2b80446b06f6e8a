"""End-to-end detection stack: conv patch embedding -> Bi-LSTM -> volume
attention -> two-class head, trained by mini-batch gradient descent with
hand-derived gradients (validated against finite differences in the tests).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .attention import (
    AttentionParams,
    HeadParams,
    attention_backward_padded,
    attention_forward_padded,
    head_backward,
    head_forward,
    init_attention_params,
    init_head_params,
)
from .encoder import (
    BiLstmParams,
    ConvEncoderParams,
    DEFAULT_CHANNELS,
    DEFAULT_CONV_KERNEL,
    DEFAULT_HIDDEN,
    DEFAULT_PATCH_LEN,
    bilstm_backward_padded,
    bilstm_forward_padded,
    conv_embed_backward,
    conv_embed_forward,
    init_bilstm_params,
    init_conv_params,
    patch_plan,
    patchify,
)
from .errors import InvalidArgument, NotTrained
from .training import PROB_CLAMP, TrainConfig

FLOW_SCALE = 10.0  # liters/second; keeps tanh inputs in a sane range


@dataclass
class DetectionConfig:
    patch_len: int = DEFAULT_PATCH_LEN
    channels: int = DEFAULT_CHANNELS
    hidden: int = DEFAULT_HIDDEN
    conv_kernel: int = DEFAULT_CONV_KERNEL
    attn_width: int | None = None
    seed: int = 0


class DetectionModel:
    """Binary COPD detector over varied-length flow series."""

    def __init__(self, config: DetectionConfig, max_length: int):
        self.config = config
        self.max_length = max_length
        rng = np.random.default_rng(config.seed)
        self.conv = init_conv_params(rng, config.channels, config.conv_kernel)
        self.lstm = init_bilstm_params(rng, config.channels, config.hidden)
        self.attn = init_attention_params(rng, 2 * config.hidden, config.attn_width)
        self.head = init_head_params(rng, 2 * config.hidden)
        self.trained = False

    # -- parameter plumbing -------------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for group in (self.conv, self.lstm, self.attn, self.head):
            out.update(group.arrays())
        return out

    def set_params(self, params: dict[str, np.ndarray]):
        own = self.params()
        for name, value in params.items():
            np.copyto(own[name], np.asarray(value, dtype=float).reshape(own[name].shape))

    # -- forward / backward -------------------------------------------------

    def _prepare(self, series_list):
        """Patchify every sample and stack patches into one conv batch."""
        k = self.config.patch_len
        plans = [patch_plan(len(s), max(self.max_length, len(s)), k) for s in series_list]
        patches = np.concatenate(
            [patchify(np.asarray(s, dtype=float) / FLOW_SCALE, p) for s, p in zip(series_list, plans)],
            axis=0,
        )
        lengths = np.array([p.s for p in plans], dtype=np.int64)
        return patches, lengths, plans

    def _forward(self, series_list):
        patches, lengths, plans = self._prepare(series_list)
        feats, conv_cache = conv_embed_forward(patches, self.conv)
        n = lengths.size
        s_max = int(lengths.max())
        block = np.zeros((n, s_max, self.config.channels))
        mask = np.zeros((n, s_max), dtype=np.int64)
        offset = 0
        for i, s in enumerate(lengths):
            block[i, :s] = feats[offset : offset + s]
            mask[i, :s] = 1
            offset += s
        contexts, lstm_cache = bilstm_forward_padded(block, lengths, self.lstm)
        weights, pooled, scores, attn_cache = attention_forward_padded(contexts, mask, self.attn)
        probs, logits = head_forward(pooled, self.head)
        cache = (patches, conv_cache, lengths, lstm_cache, attn_cache, pooled, probs)
        return probs, weights, scores, plans, cache

    def predict_proba(self, series_list) -> np.ndarray:
        """P(disease) per sample."""
        probs, _, _, _, _ = self._forward(series_list)
        return probs[:, 1]

    def explain(self, series):
        """(p_hat, attention weights, raw scores, plan) for a single series."""
        probs, weights, scores, plans, cache = self._forward([series])
        s = plans[0].s
        return float(probs[0, 1]), weights[0, :s].copy(), scores[0, :s].copy(), plans[0]

    def loss_and_grads(self, series_list, labels):
        """Mean cross-entropy and gradients for every parameter."""
        labels = np.asarray(labels, dtype=np.int64)
        probs, _, _, _, cache = self._forward(series_list)
        patches, conv_cache, lengths, lstm_cache, attn_cache, pooled, _ = cache
        n = labels.size
        picked = np.clip(probs[np.arange(n), labels], PROB_CLAMP, None)
        loss = float(-np.log(picked).mean())
        dlogits = probs.copy()
        dlogits[np.arange(n), labels] -= 1.0
        dlogits /= n
        dpooled, head_grads = head_backward(dlogits, pooled, self.head)
        dcontexts, attn_grads = attention_backward_padded(dpooled, attn_cache, self.attn)
        dblock, lstm_grads = bilstm_backward_padded(dcontexts, lstm_cache, self.lstm)
        dfeats = np.concatenate([dblock[i, : int(s)] for i, s in enumerate(lengths)], axis=0)
        conv_grads = conv_embed_backward(dfeats, conv_cache, self.conv)
        grads = {}
        for g in (conv_grads, lstm_grads, attn_grads, head_grads):
            grads.update(g)
        return loss, grads

    # -- training -----------------------------------------------------------

    def train(self, series_list, labels, cfg: TrainConfig):
        """Seeded mini-batch gradient descent; returns the epoch loss trace."""
        labels = np.asarray(labels, dtype=np.int64)
        if len(series_list) != labels.size:
            raise InvalidArgument("series and labels must be aligned")
        n = labels.size
        rng = np.random.default_rng(cfg.seed)
        params = self.params()
        loss, _ = self.loss_and_grads(series_list, labels)
        trace = [loss]
        for _ in range(cfg.epochs):
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                batch = order[start : start + cfg.batch_size]
                batch_series = [series_list[i] for i in batch]
                _, grads = self.loss_and_grads(batch_series, labels[batch])
                for name, p in params.items():
                    p -= cfg.lr * (grads[name] + cfg.l2 * p)
            loss, _ = self.loss_and_grads(series_list, labels)
            trace.append(loss)
        self.trained = True
        return trace

    # -- checkpointing ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "config": {
                "patch_len": self.config.patch_len,
                "channels": self.config.channels,
                "hidden": self.config.hidden,
                "conv_kernel": self.config.conv_kernel,
                "attn_width": self.config.attn_width,
                "seed": self.config.seed,
            },
            "max_length": self.max_length,
            "arrays": {name: value.tolist() for name, value in self.params().items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectionModel":
        model = cls(DetectionConfig(**d["config"]), d["max_length"])
        model.set_params({k: np.array(v, dtype=float) for k, v in d["arrays"].items()})
        model.trained = True
        return model
