from __future__ import annotations

import dataclasses
from dataclasses import dataclass


@dataclass(frozen=True)
class RBTConfig:
    """Architecture and optimizer knobs of the reward bag transformer.

    Defaults follow the reference hyper-parameters except ``embed_dim``
    (64 instead of 256, see :meth:`full_size`); ``beta`` = 1 is our choice.
    """

    n_causal_layers: int = 3
    n_bidir_layers: int = 1
    n_heads: int = 4
    embed_dim: int = 64
    dropout: float = 0.1
    batch_size: int = 64
    lr: float = 1e-4
    weight_decay: float = 1e-4
    warmup_steps: int = 100
    total_steps: int = 10_000
    beta: float = 1.0
    seq_len: int = 100
    relabel_len: int = 500
    key_dim: int | None = None
    max_positions: int | None = None
    ffn_mult: int = 4
    grad_clip: float = 1.0
    bidirectional: bool = True
    state_decoder: bool = True
    window_align: str = "bag"
    tied_qk_init: bool = True
    lr_schedule: str = "constant"

    def __post_init__(self):
        for name in ("n_causal_layers", "n_heads", "embed_dim", "batch_size", "total_steps",
                     "seq_len", "relabel_len", "ffn_mult"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_bidir_layers != 1:
            raise ValueError("the redistribution head is a single bidirectional layer")
        if self.embed_dim % self.n_heads:
            raise ValueError("n_heads must divide embed_dim")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.lr <= 0 or self.weight_decay < 0 or self.warmup_steps < 0:
            raise ValueError("invalid optimizer settings")
        if self.state_decoder and self.beta <= 0:
            raise ValueError("beta must be > 0 when the state decoder is enabled")
        if self.window_align not in ("bag", "random"):
            raise ValueError("window_align must be 'bag' or 'random'")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError("lr_schedule must be 'constant' or 'cosine'")
        if self.key_dim is not None and self.key_dim < 1:
            raise ValueError("key_dim must be positive")

    @property
    def d_key(self) -> int:
        return self.key_dim or self.embed_dim

    @property
    def positions(self) -> int:
        return self.max_positions or max(self.seq_len, self.relabel_len)

    @classmethod
    def full_size(cls, **overrides) -> RBTConfig:
        return cls(**{"embed_dim": 256, **overrides})

    @classmethod
    def desk(cls, **overrides) -> RBTConfig:
        """Small, fast setting for CPU runs: windows and relabel chunks of one 25-step bag."""
        base = dict(n_causal_layers=1, n_heads=2, embed_dim=32, dropout=0.0, batch_size=64,
                    lr=2e-3, seq_len=25, relabel_len=25, total_steps=2000)
        return cls(**{**base, **overrides})

    def replace(self, **changes) -> RBTConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)
