"""Forward pass of the stereo network.

Pipeline: Unet feature extractor -> 1D correlation volumes at 1/2 and
1/4 resolution; traditional 288-channel volume reduced to 32 channels;
a guide encoder turning the traditional volume into features at 1/2,
1/4, 1/8 and 1/16 scale; two cascade hourglass networks fusing
everything; a 1x1 head regressing disparity, bilinearly upsampled to
full resolution.

All parameters live in a WeightStore serialized as the "MSCV1" binary
container.  Only the Unet layers use batch normalization; everything
else is conv + ReLU (the head is linear).
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from mscv.costvol import CostVolume, assemble_traditional, census_transform
from mscv.costvol import ad_cost_volume, correlate_1d, hamming_cost_volume
from mscv.imagekit import DisparityMap, Image, crop, mean_pool_2x, pad_reflect
from mscv.imagekit import rgb_to_yuv
from mscv.tensorops import (
    ConvParams,
    batchnorm_relu,
    bilinear_resize,
    concat_channels,
    conv2d,
    deconv2d_s2,
    relu,
)

MAGIC = b"MSCV1"


class WeightError(ValueError):
    """Raised on a malformed weight container or a mis-shaped parameter."""


@dataclass
class WeightStore:
    """Named parameter arrays, insertion-ordered."""

    entries: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def manifest(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(name, arr.shape) for name, arr in self.entries.items()]

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.entries[name]
        except KeyError:
            raise WeightError(f"missing parameter {name!r}") from None

    def param_count(self) -> int:
        return sum(arr.size for arr in self.entries.values())


# ---------------------------------------------------------------------------
# Architecture table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LayerDef:
    name: str
    out_c: int
    in_c: int
    kh: int
    kw: int
    stride: int = 1
    bn: bool = False
    deconv: bool = False


def _unet_layers() -> list[LayerDef]:
    # Encoder: 3x3 conv then 2x2 stride-2 conv per scale, channels
    # doubling from base 16; decoder: 2x2 deconv, skip concat, 1x1 conv
    # halving the concat, 3x3 conv.  BN+ReLU on every layer.
    return [
        LayerDef("unet.enc0", 16, 3, 3, 3, bn=True),
        LayerDef("unet.down1", 32, 16, 2, 2, stride=2, bn=True),
        LayerDef("unet.enc1", 32, 32, 3, 3, bn=True),
        LayerDef("unet.down2", 64, 32, 2, 2, stride=2, bn=True),
        LayerDef("unet.enc2", 64, 64, 3, 3, bn=True),
        LayerDef("unet.down3", 128, 64, 2, 2, stride=2, bn=True),
        LayerDef("unet.enc3", 128, 128, 3, 3, bn=True),
        LayerDef("unet.up2.deconv", 64, 128, 2, 2, stride=2, bn=True, deconv=True),
        LayerDef("unet.up2.fuse", 64, 128, 1, 1, bn=True),
        LayerDef("unet.up2.harvest", 32, 64, 3, 3, bn=True),
        LayerDef("unet.up1.deconv", 32, 32, 2, 2, stride=2, bn=True, deconv=True),
        LayerDef("unet.up1.fuse", 32, 64, 1, 1, bn=True),
        LayerDef("unet.up1.harvest", 32, 32, 3, 3, bn=True),
    ]


def _trad_layers() -> list[LayerDef]:
    # 1x1 reduction chain 288-144-72-36-32, then left image concat (+3)
    # and three 3x3 harvesting convs back down to 32 channels.
    return [
        LayerDef("trad.red0", 144, 288, 1, 1),
        LayerDef("trad.red1", 72, 144, 1, 1),
        LayerDef("trad.red2", 36, 72, 1, 1),
        LayerDef("trad.red3", 32, 36, 1, 1),
        LayerDef("trad.harvest0", 32, 35, 3, 3),
        LayerDef("trad.harvest1", 32, 32, 3, 3),
        LayerDef("trad.harvest2", 32, 32, 3, 3),
    ]


def _guide_layers() -> list[LayerDef]:
    layers = [LayerDef("guide.s0", 32, 32, 3, 3)]
    for i in (1, 2, 3):
        layers.append(LayerDef(f"guide.d{i}.a", 32, 32, 3, 3, stride=2))
        layers.append(LayerDef(f"guide.d{i}.b", 32, 32, 3, 3))
    return layers


def _hourglass_layers(stage: int) -> list[LayerDef]:
    # Stage 1 runs 1/4 -> 1/16 (2 down levels); stage 2 runs 1/2 -> 1/16
    # (3 down levels).  Decoder mirrors the encoder depth.
    in_c = 48 if stage == 1 else 32
    downs = 2 if stage == 1 else 3
    pre = f"hg{stage}"
    layers = [LayerDef(f"{pre}.entry", 32, in_c, 3, 3)]
    for i in range(downs):
        layers += [
            LayerDef(f"{pre}.down{i}.c1", 32, 32, 3, 3, stride=2),
            LayerDef(f"{pre}.down{i}.c2", 32, 32, 3, 3),
            LayerDef(f"{pre}.down{i}.sc", 32, 32, 1, 1, stride=2),
            LayerDef(f"{pre}.res{i}.c1", 32, 32, 3, 3),
            LayerDef(f"{pre}.res{i}.c2", 32, 32, 3, 3),
        ]
    layers.append(LayerDef(f"{pre}.bottleneck", 32, 64, 1, 1))
    for i in range(downs):
        layers += [
            LayerDef(f"{pre}.up{i}.deconv", 32, 32, 2, 2, stride=2, deconv=True),
            LayerDef(f"{pre}.up{i}.fuse", 32, 64, 1, 1),
            LayerDef(f"{pre}.up{i}.conv", 32, 32, 3, 3),
        ]
    return layers


def architecture() -> list[LayerDef]:
    """Every convolution layer of the network, in forward order."""
    return (
        _unet_layers()
        + _trad_layers()
        + [LayerDef("corr.reduce", 32, 96, 1, 1)]
        + _guide_layers()
        + _hourglass_layers(1)
        + [
            LayerDef("casc.up", 32, 32, 2, 2, stride=2, deconv=True),
            LayerDef("casc.fuse", 32, 96, 1, 1),
        ]
        + _hourglass_layers(2)
        + [LayerDef("head.conv", 1, 32, 1, 1)]
    )


def architecture_manifest() -> list[tuple[str, tuple[int, ...]]]:
    """Expected (parameter name, shape) pairs for the whole network."""
    manifest = []
    for l in architecture():
        manifest.append((f"{l.name}.w", (l.out_c, l.in_c, l.kh, l.kw)))
        manifest.append((f"{l.name}.b", (l.out_c,)))
        if l.bn:
            for p in ("gamma", "beta", "mean", "var"):
                manifest.append((f"{l.name}.bn.{p}", (l.out_c,)))
    return manifest


def validate_store(store: WeightStore) -> None:
    """Check every architecture parameter exists with the right shape."""
    for name, shape in architecture_manifest():
        arr = store[name]
        if arr.shape != shape:
            raise WeightError(
                f"parameter {name!r} has shape {arr.shape}, expected {shape}"
            )


def describe_architecture() -> str:
    """Human-readable table of layer parameters and counts."""
    lines = [f"{'parameter':<28} {'shape':<20} {'count':>9}"]
    total = 0
    for name, shape in architecture_manifest():
        count = int(np.prod(shape))
        total += count
        lines.append(f"{name:<28} {str(shape):<20} {count:>9}")
    lines.append(f"{'total':<28} {'':<20} {total:>9}")
    return "\n".join(lines)


def init_weights(seed: int) -> WeightStore:
    """Deterministic fan-in-scaled uniform initialization.

    BN running statistics start at mean 0 / variance 1; gamma and beta
    get a small random perturbation around 1 and 0.
    """
    rng = np.random.default_rng(seed)
    store = WeightStore()
    for l in architecture():
        fan_in = l.in_c * l.kh * l.kw
        bound = float(np.sqrt(1.0 / fan_in))
        shape = (l.out_c, l.in_c, l.kh, l.kw)
        store.entries[f"{l.name}.w"] = rng.uniform(-bound, bound, shape).astype(
            np.float32
        )
        store.entries[f"{l.name}.b"] = rng.uniform(-bound, bound, l.out_c).astype(
            np.float32
        )
        if l.bn:
            store.entries[f"{l.name}.bn.gamma"] = rng.uniform(
                0.9, 1.1, l.out_c
            ).astype(np.float32)
            store.entries[f"{l.name}.bn.beta"] = rng.uniform(
                -0.1, 0.1, l.out_c
            ).astype(np.float32)
            store.entries[f"{l.name}.bn.mean"] = np.zeros(l.out_c, dtype=np.float32)
            store.entries[f"{l.name}.bn.var"] = np.ones(l.out_c, dtype=np.float32)
    return store


# ---------------------------------------------------------------------------
# MSCV1 weight container
# ---------------------------------------------------------------------------
# magic "MSCV1" | uint32 entry count | per entry:
#   uint16 name length | name (utf-8) | uint8 rank | rank * uint32 dims |
#   little-endian float32 payload


def save_weights(store: WeightStore, path) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(store.entries)))
        for name, arr in store.entries.items():
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_weights(path) -> WeightStore:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise WeightError(f"bad magic {magic!r}")
        (count,) = struct.unpack("<I", f.read(4))
        store = WeightStore()
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<B", f.read(1))
            dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
            size = int(np.prod(dims)) if rank else 1
            payload = f.read(4 * size)
            if len(payload) != 4 * size:
                raise WeightError(f"truncated payload for parameter {name!r}")
            store.entries[name] = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return store


# ---------------------------------------------------------------------------
# Layer application helpers
# ---------------------------------------------------------------------------


def _conv(store, name, x, stride=1, bn=False, act=True, padding="same"):
    p = ConvParams(store[f"{name}.w"], store[f"{name}.b"], stride)
    if p.in_channels != x.shape[0]:
        raise WeightError(
            f"parameter {name!r} expects {p.in_channels} input channels, "
            f"got {x.shape[0]}"
        )
    y = conv2d(x, p, padding)
    if bn:
        return batchnorm_relu(
            y,
            store[f"{name}.bn.mean"],
            store[f"{name}.bn.var"],
            store[f"{name}.bn.gamma"],
            store[f"{name}.bn.beta"],
        )
    return relu(y) if act else y


def _deconv(store, name, x, bn=False, act=True):
    p = ConvParams(store[f"{name}.w"], store[f"{name}.b"], stride=2)
    y = deconv2d_s2(x, p)
    if bn:
        return batchnorm_relu(
            y,
            store[f"{name}.bn.mean"],
            store[f"{name}.bn.var"],
            store[f"{name}.bn.gamma"],
            store[f"{name}.bn.beta"],
        )
    return relu(y) if act else y


# ---------------------------------------------------------------------------
# Network blocks
# ---------------------------------------------------------------------------


def unet_features(image: Image, store: WeightStore) -> tuple[np.ndarray, np.ndarray]:
    """Encoder-decoder features at 1/2 and 1/4 scale, 32 channels each.

    Input dims must be divisible by 16 (pad first).
    """
    h, w = image.height, image.width
    if h % 16 or w % 16:
        raise ValueError(f"dims must divide 16, got {h}x{w}")
    x = image.data.astype(np.float32)
    s_full = _conv(store, "unet.enc0", x, bn=True)
    d1 = _conv(store, "unet.down1", s_full, stride=2, bn=True)
    s_half = _conv(store, "unet.enc1", d1, bn=True)
    d2 = _conv(store, "unet.down2", s_half, stride=2, bn=True)
    s_quarter = _conv(store, "unet.enc2", d2, bn=True)
    d3 = _conv(store, "unet.down3", s_quarter, stride=2, bn=True)
    bottom = _conv(store, "unet.enc3", d3, bn=True)
    u2 = _deconv(store, "unet.up2.deconv", bottom, bn=True)
    u2 = _conv(store, "unet.up2.fuse", concat_channels([u2, s_quarter]), bn=True)
    f_quarter = _conv(store, "unet.up2.harvest", u2, bn=True)
    u1 = _deconv(store, "unet.up1.deconv", f_quarter, bn=True)
    u1 = _conv(store, "unet.up1.fuse", concat_channels([u1, s_half]), bn=True)
    f_half = _conv(store, "unet.up1.harvest", u1, bn=True)
    return f_half, f_quarter


def reduce_traditional(
    vol288: CostVolume, left_half: Image, store: WeightStore, trace=None
) -> CostVolume:
    """Reduce the normalized 288-channel volume to 32 channels.

    Four 1x1 convs (288-144-72-36-32), concat of the half-resolution
    left image, then three 3x3 harvesting convs.
    """
    if vol288.depth != 288 or vol288.scale != "half":
        raise ValueError("expected a 288-channel half-scale volume")
    if (left_half.height, left_half.width) != (vol288.height, vol288.width):
        raise ValueError("left image does not match volume scale")
    x = vol288.costs.astype(np.float32)
    _trace(trace, "traditional_volume_channels", 288)
    for i in range(4):
        x = _conv(store, f"trad.red{i}", x)
        _trace(trace, f"traditional_reduction_{i}_channels", x.shape[0])
    x = concat_channels([x, left_half.data.astype(np.float32)])
    for i in range(3):
        x = _conv(store, f"trad.harvest{i}", x)
    return CostVolume(x, scale="half", kind="feature")


def reduce_correlation(vol96: CostVolume, store: WeightStore) -> CostVolume:
    """1x1 conv collapsing the 96-candidate correlation volume to 32."""
    if vol96.depth != 96:
        raise ValueError(f"expected depth 96, got {vol96.depth}")
    x = _conv(store, "corr.reduce", vol96.costs.astype(np.float32))
    return CostVolume(x, scale=vol96.scale, kind="feature")


@dataclass
class GuideSet:
    """Guide features at 1/2, 1/4, 1/8 and 1/16 of full resolution."""

    half: np.ndarray
    quarter: np.ndarray
    eighth: np.ndarray
    sixteenth: np.ndarray

    def at(self, scale: str) -> np.ndarray:
        return getattr(self, scale)


def guide_encoder(trad32: CostVolume, store: WeightStore) -> GuideSet:
    """Multi-scale guides from the traditional volume.

    One stride-1 block at 1/2, then three down blocks (stride-2 conv +
    stride-1 conv) reaching 1/16.
    """
    if trad32.depth != 32 or trad32.scale != "half":
        raise ValueError("guide encoder takes the 32-channel half-scale volume")
    g_half = _conv(store, "guide.s0", trad32.costs.astype(np.float32))
    g_quarter = _conv(store, "guide.d1.b", _conv(store, "guide.d1.a", g_half, stride=2))
    g_eighth = _conv(store, "guide.d2.b", _conv(store, "guide.d2.a", g_quarter, stride=2))
    g_sixteenth = _conv(
        store, "guide.d3.b", _conv(store, "guide.d3.a", g_eighth, stride=2)
    )
    return GuideSet(g_half, g_quarter, g_eighth, g_sixteenth)


def _residual_down(store, prefix, x):
    # Projection-shortcut block halving spatial dims.
    y = _conv(store, f"{prefix}.c1", x, stride=2)
    y = _conv(store, f"{prefix}.c2", y, act=False)
    sc = _conv(store, f"{prefix}.sc", x, stride=2, act=False)
    return relu(y + sc)


def _residual(store, prefix, x):
    # Identity-shortcut block: zero conv weights leave x (if x >= 0).
    y = _conv(store, f"{prefix}.c1", x)
    y = _conv(store, f"{prefix}.c2", y, act=False)
    return relu(y + x)


def hourglass_forward(
    x: np.ndarray, guides: GuideSet, store: WeightStore, stage: int
) -> np.ndarray:
    """One hourglass: residual encoder to 1/16, guided decoder back up.

    Stage 1 takes the 1/4-scale correlation volume (48 channels) and
    returns 1/4-scale features; stage 2 takes the fused 1/2-scale input
    and returns 1/2-scale features, 32 channels each.
    """
    if stage not in (1, 2):
        raise ValueError("stage must be 1 or 2")
    downs = 2 if stage == 1 else 3
    up_scales = ["eighth", "quarter"] if stage == 1 else ["eighth", "quarter", "half"]
    pre = f"hg{stage}"
    y = _conv(store, f"{pre}.entry", x)
    for i in range(downs):
        y = _residual_down(store, f"{pre}.down{i}", y)
        y = _residual(store, f"{pre}.res{i}", y)
    g16 = guides.sixteenth
    if g16.shape[1:] != y.shape[1:]:
        raise ValueError(
            f"guide scale mismatch at bottleneck: {g16.shape[1:]} vs {y.shape[1:]}"
        )
    y = _conv(store, f"{pre}.bottleneck", concat_channels([y, g16]))
    for i, scale in enumerate(up_scales):
        y = _deconv(store, f"{pre}.up{i}.deconv", y)
        g = guides.at(scale)
        if g.shape[1:] != y.shape[1:]:
            raise ValueError(
                f"guide scale mismatch at {scale}: {g.shape[1:]} vs {y.shape[1:]}"
            )
        y = _conv(store, f"{pre}.up{i}.fuse", concat_channels([y, g]))
        y = _conv(store, f"{pre}.up{i}.conv", y)
    return y


def cascade_forward(
    trad32: CostVolume,
    corr32_half: CostVolume,
    corr48_quarter: CostVolume,
    guides: GuideSet,
    store: WeightStore,
    trace=None,
) -> np.ndarray:
    """Two chained hourglasses with intermediate fusion.

    Stage 1 consumes the 1/4-scale 48-channel correlation volume; its
    upsampled output is fused (concat + 1x1 conv) with both 1/2-scale
    32-channel volumes to feed stage 2.
    """
    h1 = hourglass_forward(corr48_quarter.costs.astype(np.float32), guides, store, 1)
    u = _deconv(store, "casc.up", h1)
    fused = concat_channels(
        [u, corr32_half.costs.astype(np.float32), trad32.costs.astype(np.float32)]
    )
    stage2_in = _conv(store, "casc.fuse", fused)
    refined = hourglass_forward(stage2_in, guides, store, 2)
    _trace(trace, "refined_channels", refined.shape[0])
    _trace(trace, "refined_height", refined.shape[1])
    _trace(trace, "refined_width", refined.shape[2])
    return refined


def disparity_head(
    refined: np.ndarray, original_dims: tuple[int, int], store: WeightStore
) -> DisparityMap:
    """1x1 regression head, bilinear upsample to full res, crop, clamp."""
    if refined.shape[0] != 32:
        raise ValueError("head expects 32-channel input")
    d = _conv(store, "head.conv", refined, act=False)
    full = bilinear_resize(d, 2 * d.shape[1], 2 * d.shape[2])
    cropped = crop(full[0], original_dims)
    values = np.maximum(cropped.astype(np.float64), 0.0)
    return DisparityMap(values, valid=np.ones_like(values, dtype=bool))


def _trace(trace, label, value):
    if trace is not None:
        trace.append((label, int(value)))


def _traditional_volume(left_p: Image, right_p: Image) -> tuple[CostVolume, Image]:
    """Half-scale 288-channel volume and the pooled RGB left image."""
    left_half = mean_pool_2x(left_p)
    right_half = mean_pool_2x(right_p)
    lyuv = rgb_to_yuv(left_half)
    ryuv = rgb_to_yuv(right_half)
    plane = lambda img, c: Image(img.data[c : c + 1])
    c1 = hamming_cost_volume(
        census_transform(plane(lyuv, 0)), census_transform(plane(ryuv, 0)), 96
    )
    c2 = ad_cost_volume(plane(lyuv, 1), plane(ryuv, 1), 96)
    c3 = ad_cost_volume(plane(lyuv, 2), plane(ryuv, 2), 96)
    return assemble_traditional(c1, c2, c3), left_half


def full_forward(
    left: Image,
    right: Image,
    store: WeightStore,
    threads: int = 1,
    trace=None,
) -> DisparityMap:
    """Whole pipeline: stereo RGB pair to full-resolution disparity map.

    Deterministic: output is bit-identical across runs and across
    ``threads`` settings (parallelism only splits independent branches).
    """
    if left.data.shape != right.data.shape:
        raise ValueError("stereo pair dimensions differ")
    if left.channels != 3:
        raise ValueError("full_forward expects RGB input")
    validate_store(store)
    left_p, orig = pad_reflect(left, 16)
    right_p, _ = pad_reflect(right, 16)

    def trad_branch():
        return _traditional_volume(left_p, right_p)

    def unet_branch(img):
        return unet_features(img, store)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=3) as pool:
            fut_trad = pool.submit(trad_branch)
            fut_l = pool.submit(unet_branch, left_p)
            fut_r = pool.submit(unet_branch, right_p)
            vol288, left_half = fut_trad.result()
            fl_half, fl_quarter = fut_l.result()
            fr_half, fr_quarter = fut_r.result()
    else:
        vol288, left_half = trad_branch()
        fl_half, fl_quarter = unet_branch(left_p)
        fr_half, fr_quarter = unet_branch(right_p)

    trad32 = reduce_traditional(vol288, left_half, store, trace=trace)
    corr96 = correlate_1d(fl_half, fr_half, 96, "half")
    corr32 = reduce_correlation(corr96, store)
    corr48 = correlate_1d(fl_quarter, fr_quarter, 48, "quarter")
    guides = guide_encoder(trad32, store)
    refined = cascade_forward(trad32, corr32, corr48, guides, store, trace=trace)
    return disparity_head(refined, orig, store)
