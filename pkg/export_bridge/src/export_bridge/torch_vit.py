"""Minimal pre-norm ViT in PyTorch with timm-style parameter names.

This is the runtime used to dump reference activations: an independent
computation route (torch kernels, conv patchify) against which the NumPy
engine is validated. Parameter names follow the timm convention
(`patch_embed.proj`, `blocks.N.attn.qkv`, `blocks.N.mlp.fc1`, `norm`), so
source checkpoints load directly once separate q/k/v projections are fused.

Conventions shared with the engine: pre-norm residual blocks, per-head
attention scale 1/sqrt(D/H), exact erf GELU, LayerNorm eps 1e-6, taps taken
after each block's second residual (before the final norm), class token
first in the sequence.
"""
import math

import torch
from torch import nn

from vitiq import VitConfig

LN_EPS = 1e-6


class PatchEmbed(nn.Module):
    def __init__(self, patch_size: int, embed_dim: int):
        super().__init__()
        self.proj = nn.Conv2d(3, embed_dim, kernel_size=patch_size, stride=patch_size)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        # (3, H, W) -> (N, D), patch grid flattened row-major
        x = self.proj(img.unsqueeze(0))
        return x.flatten(2).transpose(1, 2).squeeze(0)


class Attention(nn.Module):
    def __init__(self, dim: int, num_heads: int):
        super().__init__()
        self.num_heads = num_heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.last_weights: torch.Tensor | None = None  # (H, T, T), most recent forward

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        t, d = x.shape
        h = self.num_heads
        head_dim = d // h
        qkv = self.qkv(x).reshape(t, 3, h, head_dim).permute(1, 2, 0, 3)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q @ k.transpose(-2, -1)) / math.sqrt(head_dim)
        attn = attn.softmax(dim=-1)
        self.last_weights = attn.detach()
        out = (attn @ v).transpose(0, 1).reshape(t, d)
        return self.proj(out)


class Mlp(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()  # exact erf form
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class Block(nn.Module):
    def __init__(self, dim: int, num_heads: int, mlp_ratio: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim, eps=LN_EPS)
        self.attn = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim, eps=LN_EPS)
        self.mlp = Mlp(dim, int(round(dim * mlp_ratio)))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.norm1(x))
        x = x + self.mlp(self.norm2(x))
        return x


class TorchViT(nn.Module):
    """Returns the pre-final-norm token matrix; pooling is the caller's job."""

    def __init__(self, config: VitConfig):
        super().__init__()
        self.config = config
        d = config.embed_dim
        self.patch_embed = PatchEmbed(config.patch_size, d)
        if config.has_class_token:
            self.cls_token = nn.Parameter(torch.zeros(1, 1, d))
        self.pos_embed = nn.Parameter(torch.zeros(1, config.seq_len, d))
        self.blocks = nn.ModuleList(
            Block(d, config.num_heads, config.mlp_ratio) for _ in range(config.num_blocks))
        self.norm = nn.LayerNorm(d, eps=LN_EPS)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        x = self.patch_embed(img)
        if self.config.has_class_token:
            x = torch.cat([self.cls_token[0], x], dim=0)
        x = x + self.pos_embed[0]
        for block in self.blocks:
            x = block(x)
        return x

    def pooled_feature(self, tokens: torch.Tensor) -> torch.Tensor:
        final = self.norm(tokens)
        if self.config.feature_pooling == "class_token":
            return final[0]
        cls_rows = 1 if self.config.has_class_token else 0
        return final[cls_rows:].mean(dim=0)
