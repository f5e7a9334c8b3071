"""Reward bag transformer: causal trunk over interleaved (s, a) tokens, a single-head
bidirectional attention reward head with scalar values, and a linear next-state decoder."""

from __future__ import annotations

import math

import numpy as np

from .. import numcore as nc
from ..numcore import Linear, Parameterized, Tensor
from .config import RBTConfig


def bidirectional_attention(q: Tensor, k: Tensor, v: Tensor, key_mask: np.ndarray | None = None,
                            dropout: float = 0.0, rng=None, training: bool = False) -> Tensor:
    """r_t = sum_l softmax_l(<q_t, k_l> / sqrt(d)) * v_l with no causal mask.

    q, k: [..., M, d]; v: [..., M] scalar values; key_mask: [..., M] bool of valid steps.
    """
    d = q.shape[-1]
    scores = (q @ k.T) * (1.0 / math.sqrt(d))
    mask = None if key_mask is None else key_mask[..., None, :]
    att = nc.softmax(scores, axis=-1, mask=mask)
    att = nc.dropout(att, dropout, rng, training)
    out = att @ v.reshape(*v.shape, 1)
    return out.reshape(*v.shape)


class CausalBlock(Parameterized):
    """Pre-norm transformer block: x + attn(ln(x)), then x + ffn(ln(x)) with GELU."""

    def __init__(self, rng: np.random.Generator, cfg: RBTConfig):
        super().__init__()
        D = cfg.embed_dim
        out_scale = 1.0 / math.sqrt(D * 2 * cfg.n_causal_layers)
        self.n_heads = cfg.n_heads
        self.ln1_g = self.add_param("ln1.gain", np.ones(D))
        self.ln1_b = self.add_param("ln1.bias", np.zeros(D))
        self.qkv = Linear(rng, D, 3 * D)
        self.adopt("qkv", self.qkv)
        self.proj = Linear(rng, D, D, scale=out_scale)
        self.adopt("proj", self.proj)
        self.ln2_g = self.add_param("ln2.gain", np.ones(D))
        self.ln2_b = self.add_param("ln2.bias", np.zeros(D))
        self.fc1 = Linear(rng, D, cfg.ffn_mult * D)
        self.adopt("fc1", self.fc1)
        self.fc2 = Linear(rng, cfg.ffn_mult * D, D, scale=out_scale / math.sqrt(cfg.ffn_mult))
        self.adopt("fc2", self.fc2)
        self.dropout = cfg.dropout

    def attention(self, x: Tensor, rng, training: bool, record: list | None = None) -> Tensor:
        B, L, D = x.shape
        H = self.n_heads
        dh = D // H
        qkv = self.qkv(x).reshape(B, L, 3, H, dh).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = (q @ k.T) * (1.0 / math.sqrt(dh))
        causal = np.tril(np.ones((L, L), dtype=bool))
        att = nc.softmax(scores, axis=-1, mask=causal)
        if record is not None:
            record.append(att.data)
        att = nc.dropout(att, self.dropout, rng, training)
        y = (att @ v).transpose(0, 2, 1, 3).reshape(B, L, D)
        return self.proj(y)

    def __call__(self, x: Tensor, rng=None, training: bool = False, record: list | None = None) -> Tensor:
        x = x + self.attention(nc.layer_norm(x, self.ln1_g, self.ln1_b), rng, training, record)
        h = nc.gelu(self.fc1(nc.layer_norm(x, self.ln2_g, self.ln2_b)))
        h = nc.dropout(h, self.dropout, rng, training)
        return x + self.fc2(h)


class RewardBagTransformer(Parameterized):
    def __init__(self, state_dim: int, action_dim: int, config: RBTConfig | None = None, seed: int = 0):
        super().__init__()
        cfg = self.config = config or RBTConfig()
        self.state_dim, self.action_dim = state_dim, action_dim
        rng = np.random.default_rng(seed)
        D = cfg.embed_dim
        self.state_enc = Linear(rng, state_dim, D)
        self.adopt("state_enc", self.state_enc)
        self.action_enc = Linear(rng, action_dim, D)
        self.adopt("action_enc", self.action_enc)
        self.pos = self.add_param("pos_embed", rng.normal(0.0, 0.02, size=(cfg.positions, D)))
        self.blocks = []
        for i in range(cfg.n_causal_layers):
            blk = CausalBlock(rng, cfg)
            self.adopt(f"block{i}", blk)
            self.blocks.append(blk)
        self.lnf_g = self.add_param("ln_f.gain", np.ones(D))
        self.lnf_b = self.add_param("ln_f.bias", np.zeros(D))
        if cfg.bidirectional:
            self.w_q = Linear(rng, D, cfg.d_key)
            self.adopt("bidir.q", self.w_q)
            self.w_k = Linear(rng, D, cfg.d_key)
            if cfg.tied_qk_init:
                # start with q = k so each step attends mostly to itself and to look-alike steps
                self.w_k.weight.data = self.w_q.weight.data.copy()
            self.adopt("bidir.k", self.w_k)
            self.w_v = Linear(rng, D, 1, scale=0.02)
            self.adopt("bidir.v", self.w_v)
        else:
            self.reward_head = Linear(rng, D, 1, scale=0.02)
            self.adopt("reward_head", self.reward_head)
        if cfg.state_decoder:
            self.state_dec = Linear(rng, D, state_dim, scale=0.02)
            self.adopt("state_dec", self.state_dec)

    # ------------------------------------------------------------------ pieces

    def embed_sequence(self, states, actions, offset: int = 0) -> Tensor:
        """Interleave s_0, a_0, s_1, a_1, ... ; both tokens of step t share positional row offset + t."""
        states = nc.as_tensor(states)
        actions = nc.as_tensor(actions)
        squeeze = states.ndim == 2
        if squeeze:
            states = states.reshape(1, *states.shape)
            actions = actions.reshape(1, *actions.shape)
        if states.shape[:2] != actions.shape[:2]:
            raise ValueError(f"state/action length mismatch: {states.shape} vs {actions.shape}")
        B, M = states.shape[:2]
        if offset < 0 or offset + M > self.config.positions:
            raise ValueError(f"positions {offset}..{offset + M - 1} exceed capacity {self.config.positions}")
        pos = self.pos[offset:offset + M]
        s_tok = self.state_enc(states) + pos
        a_tok = self.action_enc(actions) + pos
        tokens = nc.stack([s_tok, a_tok], axis=2).reshape(B, 2 * M, self.config.embed_dim)
        return tokens[0] if squeeze else tokens

    def causal_forward(self, tokens: Tensor, rng=None, training: bool = False,
                       record: list | None = None) -> Tensor:
        """Run the causal trunk and return the action-aligned outputs x_t: [B, M, D]."""
        squeeze = tokens.ndim == 2
        if squeeze:
            tokens = tokens.reshape(1, *tokens.shape)
        if tokens.shape[1] % 2:
            raise ValueError("token count must be even")
        h = tokens
        for blk in self.blocks:
            h = blk(h, rng, training, record)
        h = nc.layer_norm(h, self.lnf_g, self.lnf_b)
        x = h[:, 1::2, :]
        return x[0] if squeeze else x

    def redistribute(self, x: Tensor, key_mask: np.ndarray | None = None, rng=None,
                     training: bool = False) -> Tensor:
        """Per-step rewards from action-aligned embeddings [..., M, D] -> [..., M]."""
        if not self.config.bidirectional:
            r = self.reward_head(x)
            return r.reshape(*r.shape[:-1])
        q, k = self.w_q(x), self.w_k(x)
        v = self.w_v(x)
        v = v.reshape(*v.shape[:-1])
        return bidirectional_attention(q, k, v, key_mask, self.config.dropout, rng, training)

    def predict_next_state(self, x: Tensor) -> Tensor:
        if not self.config.state_decoder:
            raise RuntimeError("state decoder disabled in this configuration")
        return self.state_dec(x)

    # ------------------------------------------------------------------ whole model

    def forward(self, states, actions, step_mask: np.ndarray | None = None, rng=None,
                training: bool = False, offset: int = 0):
        """Returns (rewards [B, M], next-state predictions [B, M, ds] or None, x [B, M, D])."""
        tokens = self.embed_sequence(states, actions, offset)
        x = self.causal_forward(tokens, rng, training)
        r = self.redistribute(x, step_mask, rng, training)
        s_next = self.predict_next_state(x) if self.config.state_decoder else None
        return r, s_next, x
