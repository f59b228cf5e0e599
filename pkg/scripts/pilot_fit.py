"""Pilot fits used to pick the acceptance thresholds.

Image mode reports PSNR and step counts over (signal, seed) pairs; SDF mode
reports the held-out mse of unit-sphere fits.

    python scripts/pilot_fit.py images --pairs 40
    python scripts/pilot_fit.py sdf --seeds 8 --omega0 10
"""

import argparse
import time

import numpy as np

from wsaug.fit import IMAGE_FIT, IMAGE_KINDS, SDF_FIT, fit_inr, synth_signal
from wsaug.wscore import NetworkSpec, task_loss


def images(args):
    spec = NetworkSpec.mlp([2, 32, 32, 1])
    psnrs, steps = [], []
    for i in range(args.pairs):
        kind = IMAGE_KINDS[i % len(IMAGE_KINDS)]
        _, rep = fit_inr(spec, synth_signal(kind, seed=i), IMAGE_FIT, seed=i, omega0=args.omega0)
        psnrs.append(rep.final_psnr)
        steps.append(rep.steps_used)
        print(f"{kind:16s} seed {i:3d}  psnr {rep.final_psnr:6.2f}  steps {rep.steps_used}", flush=True)
    psnrs = np.array(psnrs)
    print(f"# {np.sum(psnrs >= 40)}/{len(psnrs)} reach 40 dB; median steps {int(np.median(steps))}")


def sdf(args):
    spec = NetworkSpec.mlp([3, 32, 32, 32, 32, 1])
    held = synth_signal("sphere_sdf", radius=1.0, seed=10_000)
    mses = []
    for s in range(args.seeds):
        t0 = time.perf_counter()
        elem, rep = fit_inr(spec, synth_signal("sphere_sdf", radius=1.0, seed=s), SDF_FIT, seed=s,
                            omega0=args.omega0)
        mses.append(task_loss(elem, held))
        print(f"seed {s}  train {rep.final_loss:.2e}  held-out {mses[-1]:.2e}  "
              f"({time.perf_counter() - t0:.1f}s)", flush=True)
    print(f"# held-out mse max {max(mses):.2e}, mean {np.mean(mses):.2e}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="mode", required=True)
    p = sub.add_parser("images")
    p.add_argument("--pairs", type=int, default=40)
    p.add_argument("--omega0", type=float, default=30.0)
    p = sub.add_parser("sdf")
    p.add_argument("--seeds", type=int, default=8)
    p.add_argument("--omega0", type=float, default=10.0)
    args = parser.parse_args()
    images(args) if args.mode == "images" else sdf(args)


if __name__ == "__main__":
    main()
