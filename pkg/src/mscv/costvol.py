"""Construction of matching-cost and correlation cost volumes.

Three traditional half-resolution volumes (census/Hamming on Y, absolute
difference on U and V) are interleaved per disparity into a 288-channel
volume and normalized to zero mean / unit variance.  Two correlation
volumes come from CNN feature maps at 1/2 and 1/4 resolution.

Volume layout is (depth, height, width): depth indexes disparity
candidates (kind="matching-cost" / "correlation") or feature channels
(kind="feature").
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mscv.imagekit import Image

CENSUS_WINDOW = 5
CENSUS_BITS = CENSUS_WINDOW * CENSUS_WINDOW - 1  # center-vs-center bit omitted


@dataclass
class CensusPlane:
    """Per-pixel 24-bit census descriptors for a single-channel plane.

    Bit b is set iff the window neighbor at rank b (row-major over the
    5x5 window, center skipped, MSB first) is strictly darker than the
    center pixel.
    """

    descriptors: np.ndarray  # uint32, (H, W)

    @property
    def height(self) -> int:
        return self.descriptors.shape[0]

    @property
    def width(self) -> int:
        return self.descriptors.shape[1]


@dataclass
class CostVolume:
    """3-D cost/feature grid at a stated resolution scale.

    costs: (depth, H, W); scale: "half" or "quarter"; kind:
    "matching-cost" (lower is better), "correlation" (higher is better)
    or "feature" (no per-depth semantics).
    """

    costs: np.ndarray
    scale: str
    kind: str

    def __post_init__(self):
        if self.costs.ndim != 3:
            raise ValueError("cost volume must be (D, H, W)")
        if self.scale not in ("half", "quarter"):
            raise ValueError(f"unknown scale {self.scale!r}")
        if self.kind not in ("matching-cost", "correlation", "feature"):
            raise ValueError(f"unknown kind {self.kind!r}")

    @property
    def depth(self) -> int:
        return self.costs.shape[0]

    @property
    def height(self) -> int:
        return self.costs.shape[1]

    @property
    def width(self) -> int:
        return self.costs.shape[2]


def census_transform(plane: Image, window: int = CENSUS_WINDOW) -> CensusPlane:
    """Census descriptors: bit set where center is brighter than neighbor.

    Border pixels use clamped (edge-replicated) neighbor indices, so
    every pixel gets a full descriptor.
    """
    if plane.channels != 1:
        raise ValueError("census_transform requires a single-channel image")
    if window % 2 == 0 or window < 1:
        raise ValueError("window must be odd")
    data = plane.data[0]
    h, w = data.shape
    r = window // 2
    padded = np.pad(data, r, mode="edge")
    desc = np.zeros((h, w), dtype=np.uint32)
    bit = window * window - 2  # MSB first in row-major window order
    for di in range(-r, r + 1):
        for dj in range(-r, r + 1):
            if di == 0 and dj == 0:
                continue
            neigh = padded[r + di : r + di + h, r + dj : r + dj + w]
            desc |= (data > neigh).astype(np.uint32) << np.uint32(bit)
            bit -= 1
    return CensusPlane(desc)


def hamming_cost_volume(
    left: CensusPlane, right: CensusPlane, max_d: int = 96
) -> CostVolume:
    """Per-disparity Hamming distance between census descriptors.

    cost(d, y, x) = popcount(left(y, x) ^ right(y, x - d)); columns with
    x - d < 0 get the maximum cost (24).
    """
    if left.descriptors.shape != right.descriptors.shape:
        raise ValueError("census plane dimensions differ")
    if max_d < 1:
        raise ValueError("max_d must be >= 1")
    h, w = left.descriptors.shape
    costs = np.full((max_d, h, w), float(CENSUS_BITS), dtype=np.float64)
    for d in range(max_d):
        if d >= w:
            break
        xor = left.descriptors[:, d:] ^ right.descriptors[:, : w - d]
        costs[d, :, d:] = np.bitwise_count(xor)
    return CostVolume(costs, scale="half", kind="matching-cost")


def ad_cost_volume(left: Image, right: Image, max_d: int = 96) -> CostVolume:
    """Absolute-difference costs for a chroma plane pair in [-0.5, 0.5].

    Out-of-range columns get the maximum cost (1.0).
    """
    if left.data.shape != right.data.shape:
        raise ValueError("image dimensions differ")
    if left.channels != 1:
        raise ValueError("ad_cost_volume takes single-channel planes")
    lp, rp = left.data[0], right.data[0]
    h, w = lp.shape
    costs = np.ones((max_d, h, w), dtype=np.float64)
    for d in range(max_d):
        if d >= w:
            break
        costs[d, :, d:] = np.abs(lp[:, d:] - rp[:, : w - d])
    return CostVolume(costs, scale="half", kind="matching-cost")


def assemble_traditional(
    c1: CostVolume, c2: CostVolume, c3: CostVolume
) -> CostVolume:
    """Interleave three 96-deep volumes per disparity and normalize.

    Channel layout is [C1(d), C2(d), C3(d)] for d = 0..95 (288 channels
    total).  Normalization subtracts the global mean and divides by the
    global standard deviation (epsilon 1e-8 guards zero variance).
    """
    vols = (c1, c2, c3)
    for v in vols:
        if v.depth != 96:
            raise ValueError(f"expected depth 96, got {v.depth}")
        if v.scale != "half":
            raise ValueError("traditional volumes live at half scale")
    h, w = c1.height, c1.width
    stacked = np.empty((288, h, w), dtype=np.float64)
    stacked[0::3] = c1.costs
    stacked[1::3] = c2.costs
    stacked[2::3] = c3.costs
    mean = stacked.mean()
    std = stacked.std()
    normalized = (stacked - mean) / (std + 1e-8)
    return CostVolume(normalized, scale="half", kind="feature")


def correlate_1d(
    f_left: np.ndarray, f_right: np.ndarray, max_d: int, scale: str
) -> CostVolume:
    """Channel-normalized inner product at horizontal offsets 0..max_d-1.

    C(d, y, x) = <f_l(y, x), f_r(y, x - d)> / N with N the channel
    count; out-of-range columns are filled with 0.
    """
    if f_left.shape != f_right.shape:
        raise ValueError("feature tensor shapes differ")
    if f_left.ndim != 3:
        raise ValueError("feature tensors must be (C, H, W)")
    n, h, w = f_left.shape
    costs = np.zeros((max_d, h, w), dtype=np.float64)
    fl = f_left.astype(np.float64)
    fr = f_right.astype(np.float64)
    for d in range(max_d):
        if d >= w:
            break
        costs[d, :, d:] = (fl[:, :, d:] * fr[:, :, : w - d]).sum(axis=0) / n
    return CostVolume(costs, scale=scale, kind="correlation")
