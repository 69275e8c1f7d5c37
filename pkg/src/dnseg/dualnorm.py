"""Normalization layer with two independent statistic tracks.

Each branch (one per augmented domain) owns its running mean/variance
and its affine parameters; all other network weights are shared. At
training time a batch is normalized by its own statistics and the
tagged branch's running estimates move by an exponential moving
average; at evaluation time the chosen branch's stored estimates are
used directly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch
from torch import Tensor, nn

from dnseg.domains import BRANCHES, DomainTag

DEFAULT_ALPHA = 0.1
DEFAULT_EPS = 1e-5


@dataclass
class StyleEmbedding:
    """Ordered per-layer (channel mean, channel variance) pairs.

    One entry per normalization site, in forward-pass order. Either the
    stored running statistics of a branch, or the spatial instance
    statistics of a single sample.
    """

    layers: list[tuple[Tensor, Tensor]]

    def __post_init__(self):
        for mean, var in self.layers:
            if mean.shape != var.shape:
                raise ValueError("mean/var shape mismatch in embedding layer")

    def __len__(self) -> int:
        return len(self.layers)


class EmbeddingCollector:
    """Accumulates per-sample instance statistics site by site."""

    def __init__(self):
        self.means: list[Tensor] = []
        self.variances: list[Tensor] = []

    def record(self, z: Tensor) -> None:
        # spatial statistics of the pre-normalization activation, per sample
        self.means.append(z.mean(dim=(2, 3)).detach())
        self.variances.append(z.var(dim=(2, 3), correction=0).detach())

    def sample_embeddings(self) -> list[StyleEmbedding]:
        n = self.means[0].shape[0]
        return [
            StyleEmbedding([(m[i], v[i]) for m, v in zip(self.means, self.variances)])
            for i in range(n)
        ]


def _check_branch(d: DomainTag) -> DomainTag:
    d = DomainTag(d)
    if d not in BRANCHES:
        raise ValueError(f"no normalization branch for domain {d!r}")
    return d


class DualNorm2d(nn.Module):
    """Two-track batch normalization over (N, C, H, W) feature maps."""

    def __init__(self, channels: int, alpha: float = DEFAULT_ALPHA, eps: float = DEFAULT_EPS):
        super().__init__()
        if channels < 1:
            raise ValueError(f"channels must be positive, got {channels}")
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
        if eps <= 0.0:
            raise ValueError(f"eps must be positive, got {eps}")
        self.channels = channels
        self.alpha = alpha
        self.eps = eps
        for tag in BRANCHES:
            self.register_parameter(f"weight_{tag.value}", nn.Parameter(torch.ones(channels)))
            self.register_parameter(f"bias_{tag.value}", nn.Parameter(torch.zeros(channels)))
            self.register_buffer(f"running_mean_{tag.value}", torch.zeros(channels))
            self.register_buffer(f"running_var_{tag.value}", torch.ones(channels))
            self.register_buffer(
                f"update_count_{tag.value}", torch.zeros((), dtype=torch.long)
            )
        # set by the surrounding network during evaluation passes
        self.collector: EmbeddingCollector | None = None

    def _branch(self, d: DomainTag):
        d = _check_branch(d)
        s = d.value
        return (
            getattr(self, f"weight_{s}"),
            getattr(self, f"bias_{s}"),
            getattr(self, f"running_mean_{s}"),
            getattr(self, f"running_var_{s}"),
            getattr(self, f"update_count_{s}"),
        )

    def _check_input(self, z: Tensor) -> None:
        if z.dim() != 4:
            raise ValueError(f"expected (N, C, H, W) input, got {tuple(z.shape)}")
        if z.shape[1] != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {z.shape[1]}")

    def update_ema(self, d: DomainTag, batch_mean: Tensor, batch_var: Tensor) -> None:
        """Move branch d's running statistics toward the given batch statistics."""
        weight, bias, mean, var, count = self._branch(d)
        batch_mean = torch.as_tensor(batch_mean, dtype=mean.dtype)
        batch_var = torch.as_tensor(batch_var, dtype=var.dtype)
        if batch_mean.shape != mean.shape or batch_var.shape != var.shape:
            raise ValueError("batch statistic shape mismatch")
        if (batch_var < 0).any():
            raise ValueError("negative batch variance")
        with torch.no_grad():
            mean.copy_((1.0 - self.alpha) * mean + self.alpha * batch_mean)
            var.copy_((1.0 - self.alpha) * var + self.alpha * batch_var)
            count += 1

    def normalize_train(self, z: Tensor, d: DomainTag) -> Tensor:
        """Normalize by the batch's own statistics; EMA-update branch d."""
        self._check_input(z)
        if z.shape[0] < 2:
            raise ValueError("training batches need at least 2 samples")
        weight, bias, _, _, _ = self._branch(d)
        batch_mean = z.mean(dim=(0, 2, 3))
        batch_var = z.var(dim=(0, 2, 3), correction=0)
        self.update_ema(d, batch_mean.detach(), batch_var.detach())
        zhat = (z - batch_mean.view(1, -1, 1, 1)) / torch.sqrt(
            batch_var.view(1, -1, 1, 1) + self.eps
        )
        return weight.view(1, -1, 1, 1) * zhat + bias.view(1, -1, 1, 1)

    def normalize_eval(self, z: Tensor, branch: DomainTag) -> Tensor:
        """Normalize by branch running statistics; pure, no state mutation."""
        self._check_input(z)
        weight, bias, mean, var, count = self._branch(branch)
        if count.item() == 0:
            warnings.warn(
                f"normalization branch {DomainTag(branch).value!r} was never trained",
                RuntimeWarning,
                stacklevel=2,
            )
        zhat = (z - mean.view(1, -1, 1, 1)) / torch.sqrt(var.view(1, -1, 1, 1) + self.eps)
        return weight.view(1, -1, 1, 1) * zhat + bias.view(1, -1, 1, 1)

    def forward(self, z: Tensor, d: DomainTag) -> Tensor:
        if self.training:
            return self.normalize_train(z, d)
        if self.collector is not None:
            self._check_input(z)
            self.collector.record(z)
        return self.normalize_eval(z, d)

    def extra_repr(self) -> str:
        return f"channels={self.channels}, alpha={self.alpha}, eps={self.eps}"


def read_branch_embedding(layers, d: DomainTag) -> StyleEmbedding:
    """Stored running statistics of branch d across normalization sites."""
    d = _check_branch(d)
    pairs = []
    for layer in layers:
        _, _, mean, var, _ = layer._branch(d)
        pairs.append((mean.detach().clone(), var.detach().clone()))
    return StyleEmbedding(pairs)
