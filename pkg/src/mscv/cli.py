"""Command-line entry point and synthetic stereo-pair generation.

Commands: synth | trad-match | infer | mask | loss | eval | bench |
init-weights | describe.  Flag values override an optional key=value
config file, which overrides built-in defaults.  Set MSCV_LOG for
verbosity (DEBUG/INFO/WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mscv.costvol import (
    CostVolume,
    ad_cost_volume,
    census_transform,
    hamming_cost_volume,
)
from mscv.disparity import (
    DiscontinuityMask,
    LossParams,
    discontinuity_mask,
    loss_eval,
    wta_disparity,
)
from mscv.imagekit import (
    MAX_DISPARITY,
    DisparityMap,
    Image,
    crop,
    mean_pool_2x,
    pad_reflect,
    read_image,
    read_pfm,
    rgb_to_yuv,
    write_image,
    write_pfm,
)
from mscv.metrics import evaluate
from mscv.network import (
    describe_architecture,
    full_forward,
    init_weights,
    load_weights,
    save_weights,
    unet_features,
    validate_store,
)

log = logging.getLogger("mscv")

COMMANDS = (
    "synth",
    "trad-match",
    "infer",
    "mask",
    "loss",
    "eval",
    "bench",
    "init-weights",
    "describe",
)


class ConfigError(ValueError):
    """Raised on an invalid run configuration."""


@dataclass
class RunConfig:
    command: str
    left: str | None = None
    right: str | None = None
    gt: str | None = None
    pred: str | None = None
    weights: str | None = None
    out: str | None = None
    max_disp: int = MAX_DISPARITY
    epsilon: float = 3.0
    tau: float = 1.0
    lam: float = 0.5
    seed: int = 0
    threads: int = 1
    threshold: float = 3.0
    width: int = 512
    height: int = 256
    plan: str = "8"
    stage: str = "full"
    repeat: int = 3
    kitti_rule: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.max_disp <= 0:
            raise ConfigError("max-disp must be > 0")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


def parse_plan(plan: str, width: int) -> list[tuple[int, int, int]]:
    """Parse "x0:x1:d,..." (or a single "d" covering the full width)."""
    plan = plan.strip()
    if ":" not in plan:
        return [(0, width, int(plan))]
    regions = []
    for part in plan.split(","):
        fields = part.split(":")
        if len(fields) != 3:
            raise ConfigError(f"bad plan region {part!r} (want x0:x1:d)")
        regions.append((int(fields[0]), int(fields[1]), int(fields[2])))
    cursor = 0
    for x0, x1, _ in regions:
        if x0 != cursor or x1 <= x0:
            raise ConfigError("plan regions must tile [0, width) in order")
        cursor = x1
    if cursor != width:
        raise ConfigError(f"plan covers [0, {cursor}), image width is {width}")
    return regions


def generate_synthetic_pair(
    seed: int,
    width: int,
    height: int,
    plan: list[tuple[int, int, int]],
    max_disp: int = MAX_DISPARITY,
) -> tuple[Image, Image, DisparityMap]:
    """Random-texture stereo pair with exact piecewise-constant disparity.

    The right image is an iid random field; the left image samples it
    at x - d(x).  Ground truth marks out-of-range and occluded left
    pixels invalid.
    """
    for x0, x1, d in plan:
        if d < 0 or d >= max_disp:
            raise ConfigError(f"region disparity {d} outside [0, {max_disp})")
        if d >= x1 - x0:
            raise ConfigError(f"region disparity {d} >= region extent {x1 - x0}")
    rng = np.random.default_rng(seed)
    right = rng.random((3, height, width))
    d_of_x = np.zeros(width, dtype=np.int64)
    for x0, x1, d in plan:
        d_of_x[x0:x1] = d
    xs = np.arange(width)
    src = xs - d_of_x
    in_range = src >= 0
    left = np.empty_like(right)
    left[:, :, in_range] = right[:, :, src[in_range]]
    # Out-of-range columns get fresh noise so they stay textured.
    left[:, :, ~in_range] = rng.random((3, height, int((~in_range).sum())))
    # A left pixel is occluded when its warped coordinate does not
    # exceed every coordinate to its left.
    y = xs.astype(np.float64) - d_of_x
    running = np.concatenate(([-np.inf], np.maximum.accumulate(y)[:-1]))
    visible = in_range & (y > running)
    values = np.where(visible, d_of_x, 0).astype(np.float64)
    valid = np.broadcast_to(visible & (d_of_x > 0) & (d_of_x < MAX_DISPARITY),
                            (height, width)).copy()
    gt = DisparityMap(np.broadcast_to(values, (height, width)).copy(), valid=valid)
    return Image(left), Image(right), gt


# ---------------------------------------------------------------------------
# Pipeline pieces shared by commands
# ---------------------------------------------------------------------------


def traditional_match(
    left: Image, right: Image, max_disp: int = MAX_DISPARITY
) -> DisparityMap:
    """Census + chroma-AD WTA baseline at half resolution.

    Census alone produces zero-cost collisions wherever two window
    centers are both local extrema, so the chroma AD volumes are summed
    in (census normalized to [0,1]) to disambiguate.  Output values are
    in full-resolution pixel units; nearest-neighbor upsampling back to
    the input dimensions.
    """
    left_p, orig = pad_reflect(left, 2)
    right_p, _ = pad_reflect(right, 2)
    lh = rgb_to_yuv(mean_pool_2x(left_p))
    rh = rgb_to_yuv(mean_pool_2x(right_p))
    chan = lambda img, c: Image(img.data[c : c + 1])
    max_d = max(1, max_disp // 2)
    census = hamming_cost_volume(
        census_transform(chan(lh, 0)), census_transform(chan(rh, 0)), max_d
    )
    ad_u = ad_cost_volume(chan(lh, 1), chan(rh, 1), max_d)
    ad_v = ad_cost_volume(chan(lh, 2), chan(rh, 2), max_d)
    combined = CostVolume(
        census.costs / 24.0 + ad_u.costs + ad_v.costs, "half", "matching-cost"
    )
    half = wta_disparity(combined, "minimize")
    full = np.repeat(np.repeat(half.values, 2, axis=0), 2, axis=1)
    values = crop(full, orig)
    return DisparityMap(values, valid=np.ones_like(values, dtype=bool))


def disparity_to_pgm(dmap: DisparityMap, path, max_disp: int = MAX_DISPARITY) -> None:
    """8-bit visualization: disparity scaled onto [0, 1], invalid = 0."""
    vis = np.clip(dmap.values / max_disp, 0.0, 1.0)
    vis = np.where(dmap.valid, vis, 0.0)
    write_image(Image(vis[None]), path)


def mask_to_pgm(mask: DiscontinuityMask, path) -> None:
    """Write a 0/255 PGM of the discontinuity flags."""
    write_image(Image(mask.flags.astype(np.float64)[None]), path)


# ---------------------------------------------------------------------------
# Command implementations
# ---------------------------------------------------------------------------


def _require(cfg: RunConfig, *fields: str) -> None:
    for f in fields:
        if getattr(cfg, f) is None:
            raise ConfigError(f"command {cfg.command!r} requires --{f}")


def _cmd_synth(cfg: RunConfig) -> None:
    _require(cfg, "out")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    plan = parse_plan(cfg.plan, cfg.width)
    left, right, gt = generate_synthetic_pair(
        cfg.seed, cfg.width, cfg.height, plan, cfg.max_disp
    )
    write_image(left, out / "left.ppm")
    write_image(right, out / "right.ppm")
    write_pfm(gt, out / "gt.pfm")
    print(f"wrote {out}/left.ppm {out}/right.ppm {out}/gt.pfm")


def _cmd_trad_match(cfg: RunConfig) -> None:
    _require(cfg, "left", "right", "out")
    left = read_image(cfg.left)
    right = read_image(cfg.right)
    dmap = traditional_match(left, right, cfg.max_disp)
    write_pfm(dmap, cfg.out)
    vis_path = str(cfg.out) + ".pgm"
    disparity_to_pgm(dmap, vis_path, cfg.max_disp)
    print(f"wrote {cfg.out} and {vis_path}")


def _cmd_infer(cfg: RunConfig) -> None:
    _require(cfg, "left", "right", "weights", "out")
    left = read_image(cfg.left)
    right = read_image(cfg.right)
    store = load_weights(cfg.weights)
    dmap = full_forward(left, right, store, threads=cfg.threads)
    write_pfm(dmap, cfg.out)
    print(f"wrote {cfg.out}")


def _cmd_mask(cfg: RunConfig) -> None:
    _require(cfg, "gt", "out")
    dmap = read_pfm(cfg.gt)
    mask = discontinuity_mask(dmap, cfg.epsilon)
    mask_to_pgm(mask, cfg.out)
    print(f"wrote {cfg.out} ({int(mask.flags.sum())} flagged pixels)")


def _cmd_loss(cfg: RunConfig) -> None:
    _require(cfg, "pred", "gt")
    pred = read_pfm(cfg.pred)
    gt = read_pfm(cfg.gt)
    mask = discontinuity_mask(gt, cfg.epsilon)
    params = LossParams(tau=cfg.tau, lam=cfg.lam, max_disp=cfg.max_disp)
    mean, _ = loss_eval(pred, gt, mask, params)
    print(f"loss={mean:.6f}")


def _cmd_eval(cfg: RunConfig) -> None:
    _require(cfg, "pred", "gt")
    pred = read_pfm(cfg.pred)
    gt = read_pfm(cfg.gt)
    report = evaluate(pred, gt, kitti_rule=cfg.kitti_rule)
    print(report.as_text())
    print(report.as_keyvalues())


def _cmd_init_weights(cfg: RunConfig) -> None:
    _require(cfg, "out")
    store = init_weights(cfg.seed)
    validate_store(store)
    save_weights(store, cfg.out)
    print(f"wrote {cfg.out} ({store.param_count()} parameters)")


def _cmd_describe(cfg: RunConfig) -> None:
    print(describe_architecture())


def _bench_stages(cfg: RunConfig):
    plan = parse_plan(cfg.plan, cfg.width)
    left, right, _ = generate_synthetic_pair(
        cfg.seed, cfg.width, cfg.height, plan, cfg.max_disp
    )
    lh = rgb_to_yuv(mean_pool_2x(pad_reflect(left, 2)[0]))
    rh = rgb_to_yuv(mean_pool_2x(pad_reflect(right, 2)[0]))
    lp, rp = Image(lh.data[0:1]), Image(rh.data[0:1])
    stages = {
        "census": lambda: census_transform(lp),
        "hamming": lambda: hamming_cost_volume(
            census_transform(lp), census_transform(rp), max(1, cfg.max_disp // 2)
        ),
        "trad-match": lambda: traditional_match(left, right, cfg.max_disp),
    }
    if cfg.weights:
        store = load_weights(cfg.weights)
        padded, _ = pad_reflect(left, 16)
        stages["unet"] = lambda: unet_features(padded, store)
        stages["full"] = lambda: full_forward(left, right, store, threads=cfg.threads)
    return stages


def _cmd_bench(cfg: RunConfig) -> None:
    stages = _bench_stages(cfg)
    if cfg.stage not in stages:
        raise ConfigError(
            f"unknown bench stage {cfg.stage!r} (have: {', '.join(sorted(stages))};"
            " unet/full need --weights)"
        )
    fn = stages[cfg.stage]
    times = []
    for _ in range(cfg.repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    print(
        f"bench stage={cfg.stage} repeat={cfg.repeat} "
        f"mean={np.mean(times):.4f}s min={min(times):.4f}s"
    )


_HANDLERS = {
    "synth": _cmd_synth,
    "trad-match": _cmd_trad_match,
    "infer": _cmd_infer,
    "mask": _cmd_mask,
    "loss": _cmd_loss,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "init-weights": _cmd_init_weights,
    "describe": _cmd_describe,
}


def dispatch(cfg: RunConfig) -> int:
    """Run one command; returns the process exit status."""
    log.info("config: %s", cfg)
    print(f"config: {cfg}")
    _HANDLERS[cfg.command](cfg)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

_FIELD_TYPES = {
    "max_disp": int,
    "epsilon": float,
    "tau": float,
    "lam": float,
    "seed": int,
    "threads": int,
    "threshold": float,
    "width": int,
    "height": int,
    "repeat": int,
    "kitti_rule": lambda s: s.lower() in ("1", "true", "yes"),
}


def _load_config_file(path: str) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        values[key] = value.strip()
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mscv", description="Multi-scale cost-volume stereo matching."
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="optional key=value config file")
    parser.add_argument("--left")
    parser.add_argument("--right")
    parser.add_argument("--gt")
    parser.add_argument("--pred")
    parser.add_argument("--weights")
    parser.add_argument("--out")
    parser.add_argument("--max-disp", dest="max_disp", type=int)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--tau", type=float)
    parser.add_argument("--lambda", dest="lam", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int)
    parser.add_argument("--threshold", type=float)
    parser.add_argument("--width", type=int)
    parser.add_argument("--height", type=int)
    parser.add_argument("--plan")
    parser.add_argument("--stage")
    parser.add_argument("--repeat", type=int)
    parser.add_argument("--kitti-rule", dest="kitti_rule", action="store_true",
                        default=None)
    return parser


def config_from_args(argv: list[str]) -> RunConfig:
    """Resolve flags > config file > defaults into a RunConfig."""
    args = build_parser().parse_args(argv)
    resolved = {"command": args.command}
    file_values = _load_config_file(args.config) if args.config else {}
    for field_name in RunConfig.__dataclass_fields__:
        if field_name == "command":
            continue
        flag_value = getattr(args, field_name, None)
        if flag_value is not None:
            resolved[field_name] = flag_value
        elif field_name in file_values:
            caster = _FIELD_TYPES.get(field_name, str)
            resolved[field_name] = caster(file_values[field_name])
    return RunConfig(**resolved)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("MSCV_LOG", "WARNING").upper())
    try:
        cfg = config_from_args(argv if argv is not None else sys.argv[1:])
        return dispatch(cfg)
    except SystemExit as exc:  # argparse --help / bad usage
        return int(exc.code or 0)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
