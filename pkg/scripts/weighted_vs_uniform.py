"""Paired-seed comparison of gated and uniform component weights on the three reconstruction graphs."""

import argparse

import numpy as np

from prodembed import experiments as ex


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--epochs", type=int, default=ex.TABLE1_EPOCHS)
    args = ap.parse_args()
    for task in ex.TABLE1:
        g = np.array([ex.run(task.name, task.signature, True, s, args.epochs).final["d_avg"] for s in range(args.seeds)])
        u = np.array([ex.run(task.name, task.signature, False, s, args.epochs).final["d_avg"] for s in range(args.seeds)])
        gain = 100 * (np.median(u) - np.median(g)) / np.median(u)
        print(f"{task.name:6s} wins {int(np.sum(g < u))}/{args.seeds}  median gated {np.median(g):.4f} "
              f"uniform {np.median(u):.4f}  ({gain:+.1f}%)")


if __name__ == "__main__":
    main()
