"""Sweep the sparsity coefficient on synthetic data; print L0 against loss recovered.

Loss recovered uses a logistic readout fitted once on clean activations and then
frozen, in place of a language model's next-token loss.

    python3 scripts/pareto_sweep.py --lams 0.02 0.2 2.0 --out pareto.csv
"""
import argparse
import csv

from boardsae import metrics as M
from boardsae.sae import TrainConfig, decode, encode, train
from boardsae.synth import fit_readout, make_dictionary, readout_loss_triple, sample_activations


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--lams", type=float, nargs="+", default=[0.02, 0.2, 2.0])
    ap.add_argument("--variants", nargs="+", default=["standard"], choices=["standard", "gated"])
    ap.add_argument("--no-anneal", dest="anneal", action="store_false")
    ap.add_argument("--steps", type=int, default=3000)
    ap.add_argument("--batch", type=int, default=512)
    ap.add_argument("--ef", type=int, default=8)
    ap.add_argument("--m-true", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", help="CSV path")
    args = ap.parse_args()

    dct = make_dictionary(16, args.m_true, 3, seed=args.seed)
    data = sample_activations(dct, 100_000, seed=args.seed + 1)
    held = sample_activations(dct, 20_000, seed=args.seed + 2)
    readout = fit_readout(held)
    rows = []
    for variant in args.variants:
        for lam in args.lams:
            cfg = TrainConfig(token_budget=args.steps * args.batch, batch_size=args.batch, lr=2e-3,
                              warmup_steps=100, expansion_factor=args.ef, lam_init=lam, variant=variant,
                              anneal=args.anneal, anneal_start=int(0.4 * args.steps), log_every=args.steps)
            params = train(cfg, data.x).params
            f = encode(params, held.x)
            lr = M.loss_recovered(*readout_loss_triple(readout, held, decode(params, f)))
            cov = M.coverage(f, held.active).mean
            rows.append({"variant": variant, "lam_init": lam, "l0": M.l0(f), "loss_recovered": lr.value,
                         "coverage": cov})
            print(f"{variant:8s} lam={lam:<6g} L0={rows[-1]['l0']:.2f} "
                  f"loss_recovered={lr.value:.4f} coverage={cov:.3f}", flush=True)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


if __name__ == "__main__":
    main()
