"""Actor history encoding and the 1D-CNN feature pyramid over it."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numcore import LayerNorm, Module, Parameter, Tensor, conv1d, matmul, relu
from .numcore.functional import conv_output_length
from .numcore.nn import kaiming_uniform

OBS_STEPS = 20


class InsufficientHistory(ValueError):
    """Fewer than two usable observed positions."""


def encode_trajectory(observed, steps: int = OBS_STEPS) -> np.ndarray:
    """Turn observed positions (oldest first, last is t=0) into a 3 x T array.

    Rows are dx, dy and the validity mask.  Only the contiguous run of valid
    points ending at t=0 is used; its first step has zero displacement and
    everything older is zero-padded with mask 0.
    """
    pts = np.asarray(
        [(np.nan, np.nan) if p is None else p for p in observed], dtype=np.float64
    ).reshape(-1, 2)
    if len(pts) > steps:
        pts = pts[-steps:]
    valid = ~np.isnan(pts).any(axis=1)
    run = 0
    for ok in valid[::-1]:
        if not ok:
            break
        run += 1
    if run < 2:
        raise InsufficientHistory(f"need 2 contiguous points ending at t=0, got {run}")
    track = pts[-run:]
    out = np.zeros((3, steps))
    disp = np.zeros((run, 2))
    disp[1:] = np.diff(track, axis=0)
    out[:2, steps - run:] = disp.T
    out[2, steps - run:] = 1.0
    return out


@dataclass
class ActorNetConfig:
    channels: int = 128
    groups: int = 3
    blocks_per_group: int = 2
    kernel: int = 3
    group_stride: int = 2
    steps: int = OBS_STEPS


class ConvNorm(Module):
    """Convolution, layer norm over channels, optional ReLU."""

    def __init__(self, n_in, n_out, rng, kernel=3, stride=1, act=True):
        self.weight = Parameter(kaiming_uniform(rng, (n_out, n_in, kernel), n_in * kernel))
        self.norm = LayerNorm(n_out)
        self.stride = stride
        self.padding = (kernel - 1) // 2
        self.act = act

    def forward(self, x: Tensor) -> Tensor:
        y = self.norm(conv1d(x, self.weight, self.stride, self.padding), axis=1)
        return relu(y) if self.act else y


class Res1d(Module):
    def __init__(self, n_in, n_out, rng, kernel=3, stride=1):
        self.conv1 = ConvNorm(n_in, n_out, rng, kernel, stride)
        self.conv2 = ConvNorm(n_out, n_out, rng, kernel, 1, act=False)
        if stride != 1 or n_in != n_out:
            self.down = ConvNorm(n_in, n_out, rng, kernel=1, stride=stride, act=False)
        else:
            self.down = None

    def forward(self, x: Tensor) -> Tensor:
        shortcut = x if self.down is None else self.down(x)
        return relu(self.conv2(self.conv1(x)) + shortcut)


def upsample_matrix(t_in: int, t_out: int) -> np.ndarray:
    """Linear interpolation matrix (t_in x t_out) aligned on the latest step.

    Output column ``j`` samples the coarse axis at
    ``(t_in - 1) - (t_out - 1 - j) * t_in / t_out``, clamped to the range.
    """
    pos = (t_in - 1) - (t_out - 1 - np.arange(t_out)) * (t_in / t_out)
    pos = np.clip(pos, 0.0, t_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, t_in - 1)
    frac = pos - lo
    mat = np.zeros((t_in, t_out))
    cols = np.arange(t_out)
    np.add.at(mat, (lo, cols), 1.0 - frac)
    np.add.at(mat, (hi, cols), frac)
    return mat


class ActorNet(Module):
    """Residual 1D-CNN groups fused top-down by a feature pyramid."""

    def __init__(self, cfg: ActorNetConfig, rng: np.random.Generator):
        self.cfg = cfg
        c = cfg.channels
        self.groups = []
        n_in = 3
        for _ in range(cfg.groups):
            blocks = [Res1d(n_in, c, rng, cfg.kernel, stride=cfg.group_stride)]
            blocks += [Res1d(c, c, rng, cfg.kernel) for _ in range(cfg.blocks_per_group - 1)]
            self.groups.append(blocks)
            n_in = c
        self.laterals = [ConvNorm(c, c, rng, kernel=1, act=False) for _ in range(cfg.groups)]
        self.output = Res1d(c, c, rng, cfg.kernel)
        lengths = [cfg.steps]
        for _ in range(cfg.groups):
            lengths.append(conv_output_length(lengths[-1], cfg.kernel, cfg.group_stride,
                                              (cfg.kernel - 1) // 2))
        self.lengths = lengths[1:]
        self._up = [upsample_matrix(lengths[i + 2], lengths[i + 1])
                    for i in range(cfg.groups - 1)]

    def forward(self, inputs) -> Tensor:
        x = inputs if isinstance(inputs, Tensor) else Tensor(np.asarray(inputs))
        scales = []
        for blocks in self.groups:
            for block in blocks:
                x = block(x)
            scales.append(x)
        out = self.laterals[-1](scales[-1])
        for i in range(len(scales) - 2, -1, -1):
            out = matmul(out, Tensor(self._up[i])) + self.laterals[i](scales[i])
        out = self.output(out)
        return out[:, :, -1]


def actor_features(inputs, net: ActorNet) -> Tensor:
    """Per-actor feature rows (M x C) from stacked M x 3 x T inputs."""
    return net(inputs)
