"""Train an SAE on the planted-dictionary testbed and report feature recovery.

    python3 scripts/synthetic_recovery.py --seeds 0 1 2
    python3 scripts/synthetic_recovery.py --no-anneal   # constant-L1 baseline
"""
import argparse
import time

from boardsae.sae import TrainConfig, encode, train
from boardsae.synth import make_dictionary, match_features, sample_activations


def run(args, seed):
    dct = make_dictionary(args.d, args.m_true, args.k, seed=args.dict_seed)
    sample = sample_activations(dct, args.samples, seed=args.dict_seed + 1)
    cfg = TrainConfig(token_budget=args.steps * args.batch, batch_size=args.batch, lr=args.lr,
                      warmup_steps=args.warmup, expansion_factor=args.ef, lam_init=args.lam,
                      anneal_start=int(args.steps * args.start), anneal=args.anneal, seed=seed,
                      squared_recon=args.squared, log_every=args.steps)
    t0 = time.time()
    result = train(cfg, sample.x)
    mean_cos, rate, _ = match_features(result.params.W_dec, dct.vectors)
    l0 = float((encode(result.params, sample.x[:20000]) > 0).sum(axis=1).mean())
    return {"seed": seed, "rate": rate, "mean_cos": mean_cos, "l0": l0, "lam_final": result.anneal.lam,
            "p_final": result.anneal.p, "seconds": time.time() - t0}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--lam", type=float, default=0.32)
    ap.add_argument("--no-anneal", dest="anneal", action="store_false")
    ap.add_argument("--squared", action="store_true")
    ap.add_argument("--steps", type=int, default=10_000)
    ap.add_argument("--batch", type=int, default=1024)
    ap.add_argument("--lr", type=float, default=2e-3)
    ap.add_argument("--warmup", type=int, default=100)
    ap.add_argument("--start", type=float, default=0.2, help="anneal start as a fraction of the run")
    ap.add_argument("--ef", type=int, default=8)
    ap.add_argument("--d", type=int, default=16)
    ap.add_argument("--m-true", type=int, default=64)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--samples", type=int, default=200_000)
    ap.add_argument("--dict-seed", type=int, default=0)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    args = ap.parse_args()
    for seed in args.seeds:
        r = run(args, seed)
        print(" ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in r.items()), flush=True)


if __name__ == "__main__":
    main()
