"""Show how the discontinuity mask flags occlusion boundaries and how it
reweights the training loss there.

Scanning a row left to right, the warped coordinate Y(x) = x - d(x)
normally increases; where it dips below its running maximum the pixels
are occluded in the other view, and the mask flags the pixel pairs that
straddle those dips (unless the far edge jumps by more than epsilon).
The loss then halves the penalty on flagged pixels before the
1/8-power compression.

Run:  python3 demos/02_discontinuity_mask_and_loss.py
"""

import numpy as np

from mscv.disparity import (
    DiscontinuityMask,
    discontinuity_mask,
    loss_eval,
    loss_grad,
)
from mscv.imagekit import DisparityMap


def main():
    # One row: disparity spikes from 4 up to 10 at column 4, so the
    # warped coordinate dips below its running maximum there.
    d = np.array([9.0, 9.0, 9.0, 4.0, 10.0, 10.0, 10.0, 7.0, 7.0])
    y = np.arange(d.size) - d
    row = DisparityMap(d[None], valid=np.ones((1, d.size), dtype=bool))
    mask = discontinuity_mask(row, epsilon=3.0)
    print("disparity:", d.tolist())
    print("Y = x - d:", y.tolist())
    print("mask     :", mask.flags[0].tolist())
    print("the pair straddling the dip is flagged; the pair at the far "
          "edge is dropped because Y jumps by more than epsilon there\n")

    # Loss with and without the mask on a noisy prediction.
    rng = np.random.default_rng(0)
    pred = DisparityMap(d[None] + rng.normal(0, 4, (1, d.size)),
                        valid=np.ones((1, d.size), dtype=bool))
    empty = DiscontinuityMask(np.zeros_like(mask.flags))
    plain, _ = loss_eval(pred, row, empty)
    masked, _ = loss_eval(pred, row, mask)
    print(f"mean loss, no mask : {plain:.6f}")
    print(f"mean loss, masked  : {masked:.6f} (boundary errors discounted)")

    grad = loss_grad(pred, row, mask)
    print("gradient is zero wherever the clamp at tau=1 is active:",
          int((grad[0] == 0).sum()), "of", d.size, "pixels")


if __name__ == "__main__":
    main()
