"""A tiny causal transformer LM with low-rank adapters on every linear layer.

The base weights are frozen after (seeded) initialization; only the
adapter factors train. This keeps the reference hook honest about the
parameter-efficient contract while staying CPU-sized.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .data import VOCAB_SIZE


class LoRALinear(nn.Module):
    """Frozen linear plus trainable low-rank update: y = Wx + (alpha/r) * B A x."""

    def __init__(self, in_features: int, out_features: int, rank: int, alpha: int, dropout: float):
        super().__init__()
        self.base = nn.Linear(in_features, out_features)
        self.lora_a = nn.Parameter(torch.empty(rank, in_features))
        self.lora_b = nn.Parameter(torch.zeros(out_features, rank))
        nn.init.kaiming_uniform_(self.lora_a, a=math.sqrt(5))
        self.scaling = alpha / rank
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        update = F.linear(F.linear(self.dropout(x), self.lora_a), self.lora_b)
        return self.base(x) + self.scaling * update


class Block(nn.Module):
    def __init__(self, d_model: int, n_head: int, d_ff: int, rank: int, alpha: int, dropout: float):
        super().__init__()
        self.n_head = n_head
        self.ln1 = nn.LayerNorm(d_model)
        self.qkv = LoRALinear(d_model, 3 * d_model, rank, alpha, dropout)
        self.proj = LoRALinear(d_model, d_model, rank, alpha, dropout)
        self.ln2 = nn.LayerNorm(d_model)
        self.up = LoRALinear(d_model, d_ff, rank, alpha, dropout)
        self.down = LoRALinear(d_ff, d_model, rank, alpha, dropout)

    def forward(self, x: torch.Tensor, attn_mask: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        q, k, v = self.qkv(self.ln1(x)).chunk(3, dim=-1)
        shape = (b, t, self.n_head, d // self.n_head)
        q, k, v = (z.view(shape).transpose(1, 2) for z in (q, k, v))
        attended = F.scaled_dot_product_attention(q, k, v, attn_mask=attn_mask)
        x = x + self.proj(attended.transpose(1, 2).reshape(b, t, d))
        x = x + self.down(F.gelu(self.up(self.ln2(x))))
        return x


class TinyCausalLM(nn.Module):
    def __init__(
        self,
        d_model: int = 128,
        n_head: int = 4,
        n_layer: int = 2,
        d_ff: int = 256,
        max_seq_len: int = 256,
        rank: int = 32,
        alpha: int = 32,
        dropout: float = 0.05,
    ):
        super().__init__()
        self.max_seq_len = max_seq_len
        self.tok = nn.Embedding(VOCAB_SIZE, d_model)
        self.pos = nn.Embedding(max_seq_len, d_model)
        self.blocks = nn.ModuleList(
            Block(d_model, n_head, d_ff, rank, alpha, dropout) for _ in range(n_layer)
        )
        self.ln_out = nn.LayerNorm(d_model)
        self.head = LoRALinear(d_model, VOCAB_SIZE, rank, alpha, dropout)
        # parameter-efficient contract: only the adapter factors train
        for name, param in self.named_parameters():
            param.requires_grad_("lora_" in name)

    @staticmethod
    def attention_mask(pad_mask: torch.Tensor) -> torch.Tensor:
        """Additive (B, 1, T, T) mask combining causality with key padding."""
        t = pad_mask.size(1)
        causal = torch.triu(torch.ones(t, t, dtype=torch.bool, device=pad_mask.device), diagonal=1)
        blocked = causal.unsqueeze(0) | pad_mask.unsqueeze(1)
        mask = torch.zeros(blocked.shape, dtype=torch.float32, device=pad_mask.device)
        return mask.masked_fill(blocked, float("-inf")).unsqueeze(1)

    def forward(self, input_ids: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        b, t = input_ids.shape
        positions = torch.arange(t, device=input_ids.device).unsqueeze(0)
        x = self.tok(input_ids) + self.pos(positions)
        attn_mask = self.attention_mask(pad_mask)
        for block in self.blocks:
            x = block(x, attn_mask)
        return self.head(self.ln_out(x))

    def trainable_parameters(self) -> list[nn.Parameter]:
        return [p for p in self.parameters() if p.requires_grad]

    def parameter_counts(self) -> dict:
        total = sum(p.numel() for p in self.parameters())
        trainable = sum(p.numel() for p in self.trainable_parameters())
        return {"total": total, "trainable": trainable}
