"""Test-time choice of normalization branch by style-statistics distance.

A target sample is pushed through the network once per branch; the
instance statistics collected along each path are compared against that
branch's stored running statistics, and the branch with the smaller
aggregate distance makes the prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from dnseg.domains import BRANCHES, DomainTag
from dnseg.dualnorm import StyleEmbedding, read_branch_embedding


@dataclass
class SelectionReport:
    dist_similar: float
    dist_dissimilar: float
    per_layer: list[tuple[int, float, float]]
    chosen: DomainTag


def layer_distance(e_t_l, e_d_l) -> float:
    """Squared Euclidean distance on channel means plus channel variances."""
    mt, vt = (torch.as_tensor(a, dtype=torch.float64) for a in e_t_l)
    md, vd = (torch.as_tensor(a, dtype=torch.float64) for a in e_d_l)
    if mt.shape != md.shape or vt.shape != vd.shape:
        raise ValueError("embedding channel counts differ")
    return float(((mt - md) ** 2).sum() + ((vt - vd) ** 2).sum())


def embedding_distance(e_t: StyleEmbedding, e_d: StyleEmbedding) -> float:
    """Sum of per-site layer distances."""
    if len(e_t) != len(e_d):
        raise ValueError(f"embedding lengths differ: {len(e_t)} vs {len(e_d)}")
    return sum(layer_distance(a, b) for a, b in zip(e_t.layers, e_d.layers))


def compare_embeddings(
    target_similar: StyleEmbedding,
    target_dissimilar: StyleEmbedding,
    stored_similar: StyleEmbedding,
    stored_dissimilar: StyleEmbedding,
) -> SelectionReport:
    """Build the per-layer report; SIMILAR wins exact ties."""
    if len(target_similar) != len(stored_similar) or len(target_dissimilar) != len(
        stored_dissimilar
    ):
        raise ValueError("target/stored embedding lengths differ")
    per_layer = []
    for idx, (ts, ss, td, sd) in enumerate(
        zip(
            target_similar.layers,
            stored_similar.layers,
            target_dissimilar.layers,
            stored_dissimilar.layers,
        )
    ):
        per_layer.append((idx, layer_distance(ts, ss), layer_distance(td, sd)))
    dist_similar = sum(w for _, w, _ in per_layer)
    dist_dissimilar = sum(w for _, _, w in per_layer)
    chosen = DomainTag.SIMILAR if dist_similar <= dist_dissimilar else DomainTag.DISSIMILAR
    return SelectionReport(dist_similar, dist_dissimilar, per_layer, chosen)


def _branch_trained(net, branch: DomainTag) -> bool:
    return any(
        getattr(site, f"update_count_{branch.value}").item() > 0 for site in net.dn_sites
    )


def select_batch(net, x: torch.Tensor) -> tuple[torch.Tensor, list[SelectionReport]]:
    """Branch selection for a batch of images; one report per sample.

    Runs the network once per branch on the whole batch, compares each
    sample's per-path instance embedding with the matching stored
    embedding, and assembles the output from the chosen branches.
    """
    if not any(_branch_trained(net, b) for b in BRANCHES):
        raise ValueError("cannot select a branch: no branch has trained statistics")
    net.eval()
    with torch.no_grad():
        probs = {}
        instance = {}
        for branch in BRANCHES:
            probs[branch], instance[branch] = net(x, branch, collect_embedding=True)
        stored = {branch: read_branch_embedding(net.dn_sites, branch) for branch in BRANCHES}
    reports = []
    out = torch.empty_like(probs[DomainTag.SIMILAR])
    for i in range(x.shape[0]):
        report = compare_embeddings(
            instance[DomainTag.SIMILAR][i],
            instance[DomainTag.DISSIMILAR][i],
            stored[DomainTag.SIMILAR],
            stored[DomainTag.DISSIMILAR],
        )
        reports.append(report)
        out[i] = probs[report.chosen][i]
    return out, reports


def select_branch(sample, net) -> tuple[torch.Tensor, SelectionReport]:
    """Single-sample convenience: prediction under the nearest branch."""
    img = torch.as_tensor(sample.image, dtype=torch.float32).unsqueeze(0).unsqueeze(0)
    probs, reports = select_batch(net, img)
    return probs[0], reports[0]
