"""Render one fitted image INR under every augmentation kind as PGM files.

Function-preserving kinds render identically to the original; input-space
kinds show the transformed image; the rest show the damage they do.

    python scripts/render_augmentations.py --signal disk --out-dir renders/
"""

import argparse
from pathlib import Path

import numpy as np

from wsaug.augment import KIND_DEFAULTS, AugmentationDescriptor
from wsaug.fit import IMAGE_FIT, IMAGE_KINDS, fit_inr, synth_signal
from wsaug.harness import render_to_pgm
from wsaug.wscore import NetworkSpec


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--signal", choices=IMAGE_KINDS, default="disk")
    parser.add_argument("--signal-seed", type=int, default=0)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--size", type=int, default=64, help="render resolution")
    parser.add_argument("--out-dir", type=Path, default=Path("renders"))
    args = parser.parse_args()

    spec = NetworkSpec.mlp([2, 32, 32, 1])
    elem, rep = fit_inr(spec, synth_signal(args.signal, seed=args.signal_seed), IMAGE_FIT, seed=args.seed)
    print(f"fit psnr {rep.final_psnr:.2f}")
    args.out_dir.mkdir(parents=True, exist_ok=True)
    grid = (args.size, args.size)
    render_to_pgm(elem, args.out_dir / "original.pgm", grid)
    for kind in KIND_DEFAULTS:
        step = AugmentationDescriptor(kind)
        try:
            step.check_spec(spec)
        except ValueError:
            continue  # e.g. relu_scaling on a sine network
        out = step.sample_and_apply(elem, np.random.default_rng(args.seed))
        render_to_pgm(out, args.out_dir / f"{kind}.pgm", grid)
        print(f"wrote {args.out_dir / (kind + '.pgm')}")


if __name__ == "__main__":
    main()
