"""Long-running reconstruction of the Power grid graph (4941 nodes); supply the edge list path."""

import argparse

from prodembed import graphs
from prodembed.optim import RsgdConfig
from prodembed.recon import ReconConfig, train_reconstruction


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("edges", help="whitespace separated edge list")
    ap.add_argument("--sig", default="h5,s5")
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--checkpoint", default=None)
    args = ap.parse_args()
    g = graphs.load_edge_list(args.edges)
    cfg = ReconConfig(signature=args.sig, opt=RsgdConfig(epochs=args.epochs, seed=args.seed))
    _, _, rep = train_reconstruction(g, cfg, checkpoint_path=args.checkpoint)
    print(f"n {g.n} sig {args.sig} D_avg {rep.final['d_avg']:.4f} (target <= 0.04) mAP {rep.final['map']:.3f} "
          f"weights {[round(w, 3) for w in rep.weights]} {rep.seconds / 60:.1f} min")


if __name__ == "__main__":
    main()
