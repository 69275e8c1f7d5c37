"""Encoder-decoder segmentation backbone with dual-normalization sites.

Classic U-Net shape: per level two 3x3 conv + normalization + ReLU
blocks, max-pool downsampling, bilinear upsampling with skip
concatenation, softmax head. Every normalization site is a DualNorm2d,
so a forward pass must name the domain branch it runs under. All
convolution weights are shared between branches.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from dnseg.domains import DomainTag
from dnseg.dualnorm import DEFAULT_ALPHA, DEFAULT_EPS, DualNorm2d, EmbeddingCollector, StyleEmbedding


class ConvBlock(nn.Module):
    """conv3x3 -> DN -> ReLU, twice."""

    def __init__(self, cin: int, cout: int, alpha: float, eps: float):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, kernel_size=3, padding=1, bias=False)
        self.dn1 = DualNorm2d(cout, alpha, eps)
        self.conv2 = nn.Conv2d(cout, cout, kernel_size=3, padding=1, bias=False)
        self.dn2 = DualNorm2d(cout, alpha, eps)

    def forward(self, x: Tensor, d: DomainTag) -> Tensor:
        x = F.relu(self.dn1(self.conv1(x), d))
        return F.relu(self.dn2(self.conv2(x), d))


class SegNet(nn.Module):
    """U-Net whose normalization layers carry one track per domain branch."""

    def __init__(
        self,
        num_classes: int,
        in_channels: int = 1,
        depth: int = 4,
        base_channels: int = 16,
        alpha: float = DEFAULT_ALPHA,
        eps: float = DEFAULT_EPS,
    ):
        super().__init__()
        if num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {num_classes}")
        if depth < 1:
            raise ValueError(f"depth must be >= 1, got {depth}")
        self.num_classes = num_classes
        self.in_channels = in_channels
        self.depth = depth
        self.base_channels = base_channels

        widths = [base_channels * 2**i for i in range(depth + 1)]
        self.encoder = nn.ModuleList()
        cin = in_channels
        for w in widths[:-1]:
            self.encoder.append(ConvBlock(cin, w, alpha, eps))
            cin = w
        self.pool = nn.MaxPool2d(2)
        self.bottleneck = ConvBlock(widths[-2], widths[-1], alpha, eps)
        self.decoder = nn.ModuleList()
        for w in reversed(widths[:-1]):
            # upsampled features concatenated with the skip connection
            self.decoder.append(ConvBlock(w * 2 + w, w, alpha, eps))
        self.head = nn.Conv2d(base_channels, num_classes, kernel_size=1)

    @property
    def dn_sites(self) -> list[DualNorm2d]:
        """All normalization layers, in forward-pass order."""
        sites = []
        for blk in self.encoder:
            sites.extend([blk.dn1, blk.dn2])
        sites.extend([self.bottleneck.dn1, self.bottleneck.dn2])
        for blk in self.decoder:
            sites.extend([blk.dn1, blk.dn2])
        return sites

    def _check_input(self, x: Tensor) -> None:
        if x.dim() != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"expected (N, {self.in_channels}, H, W) input, got {tuple(x.shape)}"
            )
        step = 2**self.depth
        if x.shape[2] % step or x.shape[3] % step:
            raise ValueError(
                f"spatial size {tuple(x.shape[2:])} not divisible by {step}"
            )

    def _run(self, x: Tensor, d: DomainTag) -> Tensor:
        skips = []
        for blk in self.encoder:
            x = blk(x, d)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x, d)
        for blk, skip in zip(self.decoder, reversed(skips)):
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            x = blk(torch.cat([x, skip], dim=1), d)
        return torch.softmax(self.head(x), dim=1)

    def forward(self, x: Tensor, d: DomainTag, collect_embedding: bool = False):
        """Soft per-pixel class probabilities under branch d.

        With collect_embedding=True (evaluation only) additionally
        returns one instance StyleEmbedding per input sample, built from
        the pre-normalization activation statistics at every site.
        """
        self._check_input(x)
        if not collect_embedding:
            return self._run(x, d)
        if self.training:
            raise RuntimeError("instance embeddings are collected in eval mode only")
        collector = EmbeddingCollector()
        sites = self.dn_sites
        for site in sites:
            site.collector = collector
        try:
            probs = self._run(x, d)
        finally:
            for site in sites:
                site.collector = None
        return probs, collector.sample_embeddings()

    def instance_embedding(self, x: Tensor, d: DomainTag) -> list[StyleEmbedding]:
        """Per-sample instance embeddings without keeping the prediction."""
        with torch.no_grad():
            _, embeddings = self.forward(x, d, collect_embedding=True)
        return embeddings
