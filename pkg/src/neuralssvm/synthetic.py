"""Seeded grid segmentation benchmark.

Each sample is a ``height x width`` grid with 4-neighbourhood edges whose
ground truth is a set of contiguous regions grown from random seeds.
Unary features are deliberately weak for a linear classifier: half the
channels are a noisy class prototype, the other half a stronger prototype
multiplied by a random per-node sign, which only a nonlinear factor can
read.  Edge features carry label agreement twice: in a linear channel and
in an XOR-coded pair ``(u, v)`` with ``sign(u * v)`` equal to agreement,
which linear interaction factors cannot use.  ``rho`` moves signal from
the linear channel to the XOR channel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph_model import Dataset, FactorGraphSample


@dataclass(frozen=True)
class SynthConfig:
    width: int = 8
    height: int = 8
    n_labels: int = 3
    sigma_u: float = 1.0
    rho: float = 0.8
    n_samples: int = 60
    seed: int = 0
    n_regions: int = 5
    linear_scale: float = 1.0
    sign_scale: float = 2.0
    edge_noise: float = 0.5
    xor_flip: float = 0.05

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.n_samples < 1:
            raise ValueError("grid dimensions and sample count must be positive")
        if self.n_labels < 2:
            raise ValueError("need at least two labels")
        if self.sigma_u < 0:
            raise ValueError("sigma_u must be nonnegative")
        if not 0 <= self.rho <= 1:
            raise ValueError("rho must lie in [0, 1]")
        if self.n_regions < 1:
            raise ValueError("need at least one region")
        if not 0 <= self.xor_flip <= 0.5:
            raise ValueError("xor_flip must lie in [0, 0.5]")

    @property
    def d_u(self) -> int:
        return 2 * self.n_labels

    d_i = 4


def grid_edges(width: int, height: int) -> np.ndarray:
    edges = []
    for r in range(height):
        for c in range(width):
            i = r * width + c
            if c + 1 < width:
                edges.append((i, i + 1))
            if r + 1 < height:
                edges.append((i, i + width))
    return np.array(edges, dtype=np.intp).reshape(-1, 2)


def grow_regions(width: int, height: int, n_regions: int, n_labels: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Random flood growth from seed cells; returns one label per cell."""
    n = width * height
    n_regions = min(n_regions, n)
    region = np.full(n, -1)
    seeds = rng.choice(n, size=n_regions, replace=False)
    region[seeds] = np.arange(n_regions)
    # consecutive seeds get different labels so regions stay distinguishable
    first = rng.integers(n_labels)
    region_label = (first + np.cumsum(rng.integers(1, n_labels, size=n_regions))) % n_labels

    def neighbours(i):
        r, c = divmod(i, width)
        if c > 0:
            yield i - 1
        if c + 1 < width:
            yield i + 1
        if r > 0:
            yield i - width
        if r + 1 < height:
            yield i + width

    frontier = sorted({j for s in seeds for j in neighbours(s) if region[j] < 0})
    while frontier:
        i = frontier.pop(rng.integers(len(frontier)))
        if region[i] >= 0:
            continue
        owners = [region[j] for j in neighbours(i) if region[j] >= 0]
        region[i] = owners[rng.integers(len(owners))]
        frontier.extend(j for j in neighbours(i) if region[j] < 0 and j not in frontier)
    return region_label[region].astype(np.intp)


def _make_sample(cfg: SynthConfig, edges: np.ndarray, rng: np.random.Generator):
    L = cfg.n_labels
    y = grow_regions(cfg.width, cfg.height, cfg.n_regions, L, rng)
    n = y.size
    proto = np.eye(L)[y]
    lin = cfg.linear_scale * proto + cfg.sigma_u * rng.standard_normal((n, L))
    sign = rng.choice([-1.0, 1.0], size=(n, 1))
    sym = sign * (cfg.sign_scale * proto + cfg.sigma_u * rng.standard_normal((n, L)))
    node_features = np.hstack([lin, sym])

    agree = np.where(y[edges[:, 0]] == y[edges[:, 1]], 1.0, -1.0)
    m = len(edges)
    lin_channel = (1.0 - cfg.rho) * agree + cfg.edge_noise * rng.standard_normal(m)
    flip = np.where(rng.random(m) < cfg.xor_flip, -1.0, 1.0)
    u = rng.choice([-1.0, 1.0], size=m)
    v = u * agree * flip
    xor = cfg.rho * np.stack([u, v], axis=1) + 0.1 * cfg.edge_noise * rng.standard_normal((m, 2))
    edge_features = np.column_stack([np.ones(m), lin_channel, xor])
    return FactorGraphSample(node_features, edges, edge_features, y)


def generate_synthetic(cfg: SynthConfig) -> Dataset:
    """A dataset that is a pure function of ``cfg`` (seed included)."""
    rng = np.random.default_rng(cfg.seed)
    edges = grid_edges(cfg.width, cfg.height)
    samples = [_make_sample(cfg, edges, rng) for _ in range(cfg.n_samples)]
    return Dataset(cfg.n_labels, cfg.d_u, cfg.d_i, samples,
                   [f"class{c}" for c in range(cfg.n_labels)])


def split(dataset: Dataset, n_train: int):
    """First ``n_train`` samples for training, the rest for testing."""
    return (dataset.subset(range(n_train)),
            dataset.subset(range(n_train, len(dataset))))
