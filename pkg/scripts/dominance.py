"""Learned hyperbolic vs spherical weight on tree- and cycle-shaped graphs with an h2,s2 signature."""

import argparse

from prodembed import experiments as ex


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--epochs", type=int, default=ex.TABLE1_EPOCHS)
    args = ap.parse_args()
    for name in ("tree", "cycle"):
        print(name)
        for s in range(args.seeds):
            rep = ex.run(name, "h2,s2", True, s, args.epochs)
            h, sph = ex.dominance(rep.weights, ["h2", "s2"])
            print(f"  seed {s}: s_H {h:.3f} s_S {sph:.3f}  D_avg {rep.final['d_avg']:.4f}")


if __name__ == "__main__":
    main()
