"""Command-line entry point: ``boardsae <command> ...``.

Exit status is 0 on success, 1 on invalid input and 2 on numeric failure.
``BOARDSAE_THREADS`` caps the BLAS thread pool.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import json
import logging
import os
import random
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import bsp as bsplib
from . import chess_engine as ce
from . import dataset_io as dio
from . import othello_engine as oe
from .config import ConfigError, ExperimentConfig, load_config
from .errors import BoardSaeError, NumericError
from .metrics import (MetricsReport, coverage, l0, loss_recovered, reconstruction_bias,
                      reconstruction_score)
from .runtime import TransformerModel, extract_activations, loss_triple, random_model, tokenize
from .sae import decode, encode, train
from .sae.train import DivergenceError
from .synth import make_dictionary, sample_activations

log = logging.getLogger("boardsae")
THREADS_ENV = "BOARDSAE_THREADS"
SYNTH_GROUP = 16  # synthetic samples per pseudo-game, so splits work on game ids


class UsageError(BoardSaeError, ValueError):
    pass


# ---------------------------------------------------------------- helpers

def provenance(command: str, inputs: dict, config: dict | None = None) -> dict:
    return {
        "command": command,
        "version": __version__,
        "inputs": {k: (dio.file_hash(v) if v and Path(v).is_file() else None) for k, v in inputs.items()},
        "config": config or {},
    }


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def sidecar(path) -> Path:
    return Path(str(path) + ".json")


def chess_line(line: str):
    """Strip an optional leading ';' and parse; returns (model text, game, offset of the movetext)."""
    shift = 1 if line.startswith(";") else 0
    return line, ce.parse_pgn(line[shift:]), shift


def game_positions(game: str, line: str, mode: str = "default"):
    """Tokens, sampled positions and the board at each sampled position."""
    if game == "chess":
        text, pgn, shift = chess_line(line)
        tokens = tokenize(text, "chess")
        pairs = ce.boards_at_periods(pgn)
        if mode == "all":
            raise UsageError("chess activations are sampled at '.' tokens only")
        return tokens, [pos + shift for pos, _ in pairs], [b for _, b in pairs]
    transcript = oe.OthelloTranscript.parse(line)
    boards = oe.replay(transcript)[1:]
    tokens = tokenize(transcript.moves, "othello")
    # pass tokens are skipped by default: there the recorded mover is not the side to move
    keep = [i for i, mv in enumerate(transcript.moves) if mode == "all" or mv != oe.PASS]
    return tokens, keep, [boards[i] for i in keep]


def _load_lines(path) -> list:
    return [ln for ln in dio.read_game_lines(path) if ln.strip()]


def _split_for(ds_game_ids, args_split, cfg: ExperimentConfig) -> dio.SplitManifest:
    if args_split:
        return dio.SplitManifest.load(args_split)
    ids = sorted(set(int(g) for g in ds_game_ids))
    n_train, n_test = cfg.train_games, cfg.test_games
    if n_train + n_test > len(ids):
        n_train = len(ids) // 2
        n_test = len(ids) - n_train
    return dio.split_games(ids, cfg.split_seed, (n_train, n_test))


# ---------------------------------------------------------------- commands

def cmd_gen_games(args) -> int:
    if args.game == "othello":
        rng = random.Random(args.seed)
        lines = [oe.random_game(rng.getrandbits(63)).line() for _ in range(args.count)]
        dio.write_game_lines(args.out, lines)
        write_json(sidecar(args.out), provenance("gen-games", {}, vars_clean(args)))
        print(f"wrote {len(lines)} Othello games to {args.out}")
        return 0
    if not args.input:
        raise UsageError("chess games are ingested: pass --in with a PGN corpus")
    good, bad = [], []
    for lineno, line in enumerate(dio.read_game_lines(args.input), 1):
        if not line.strip():
            continue
        try:
            text, pgn, shift = chess_line(line.strip())
            good.append(";" * shift + pgn.text.strip())
        except (BoardSaeError, ValueError) as exc:
            bad.append((lineno, str(exc)))
    for lineno, msg in bad:
        print(f"{args.input}:{lineno}: {msg}", file=sys.stderr)
    if bad:
        return 1
    if args.count:
        good = good[:args.count]
    dio.write_game_lines(args.out, good)
    write_json(sidecar(args.out), provenance("gen-games", {"in": args.input}, vars_clean(args)))
    print(f"wrote {len(good)} chess games to {args.out}")
    return 0


def cmd_label(args) -> int:
    catalog = bsplib.get_catalog(args.game, args.catalog)
    rows = []
    for gid, line in enumerate(_load_lines(args.input)):
        try:
            _, positions, boards = game_positions(args.game, line)
        except BoardSaeError as exc:
            raise UsageError(f"game {gid}: {exc}") from None
        if len(boards) != len(positions):
            raise UsageError(f"game {gid}: {len(boards)} boards for {len(positions)} positions")
        rows.extend(bsplib.labels_for(catalog, b) for b in boards)
    labels = np.asarray(rows, dtype=np.uint8).reshape(-1, len(catalog))
    dio.write_labels(args.out, dio.LabelFile(args.game, catalog.name, catalog.hash(), labels))
    write_json(sidecar(args.out), provenance("label", {"in": args.input}, vars_clean(args)))
    print(f"wrote {labels.shape[0]} x {labels.shape[1]} labels to {args.out}")
    return 0


def cmd_extract(args) -> int:
    model = TransformerModel.load(args.model)
    if not 0 <= args.layer < model.n_layers:
        raise UsageError(f"layer {args.layer} outside [0, {model.n_layers})")
    game = model.game
    acts, prov = [], []
    for gid, line in enumerate(_load_lines(args.game_file)):
        try:
            tokens, positions, _ = game_positions(game, line, args.positions)
        except BoardSaeError as exc:
            raise UsageError(f"game {gid}: {exc}") from None
        batch = extract_activations(model, tokens, args.layer, positions, game_id=gid)
        acts.append(batch.acts)
        prov.append(batch.provenance)
    ds = dio.ActivationDataset(game, model.source_hash, args.layer,
                               np.concatenate(acts) if acts else np.zeros((0, model.d_model)),
                               np.concatenate(prov) if prov else np.zeros((0, 2)))
    dio.write_dataset(args.out, ds)
    write_json(sidecar(args.out), provenance("extract", {"model": args.model, "game_file": args.game_file},
                                             vars_clean(args)))
    print(f"wrote {len(ds)} activation rows (n={ds.n}) to {args.out}")
    return 0


def _train_one(cfg: ExperimentConfig, data_path, out_dir: Path, cfg_source=None) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt, meta = out_dir / "sae.bin", out_dir / "run.json"
    prov = provenance("train-sae", {"data": data_path, "config": cfg_source}, cfg.to_dict())
    if ckpt.exists() and meta.exists():
        done = json.loads(meta.read_text())
        if done.get("provenance") == prov and done.get("complete"):
            print(f"{out_dir}: already complete, nothing to do")
            return done
    ds = dio.read_dataset(data_path)
    try:
        result = train(cfg.train, ds.acts)
    except DivergenceError as exc:
        write_json(out_dir / "diverged.json", {"step": exc.step, "message": str(exc), "log": exc.log_rows[-20:]})
        raise
    with open(out_dir / "log.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(result.log[0]))
        w.writeheader()
        w.writerows(result.log)
    st = result.anneal
    dio.write_sae_checkpoint(ckpt, result.params, cfg.to_dict(), st.step, st.p, st.lam)
    done = {"provenance": prov, "complete": True, "final": result.final,
            "dead_features": int(result.dead_features.size)}
    write_json(meta, done)
    print(f"{out_dir}: trained {st.step} steps, final p={st.p:.3f} lam={st.lam:.4g} L0={result.final['l0']:.2f}")
    return done


def _overrides(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def cmd_train_sae(args) -> int:
    cfg = load_config(args.config, _overrides(args.set))
    _train_one(cfg, args.data, Path(args.out), args.config)
    return 0


def parse_grid(text: str) -> dict:
    """``"lam_init=0.02,0.2; variant=standard,gated"`` → ordered {key: [values]}."""
    grid = {}
    for part in text.replace("\n", ";").split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"grid entry {part!r} is not key=v1,v2")
        k, vs = part.split("=", 1)
        grid[k.strip()] = [v.strip() for v in vs.split(",") if v.strip()]
    return grid


def cmd_sweep(args) -> int:
    text = Path(args.grid).read_text() if Path(args.grid).is_file() else args.grid
    grid = parse_grid(text)
    base = _overrides(args.set)
    keys = list(grid)
    cells = list(itertools.product(*(grid[k] for k in keys)))
    out = Path(args.out)
    for i, values in enumerate(cells):
        overrides = dict(base, **dict(zip(keys, values)))
        cfg = load_config(args.config, overrides)
        name = "_".join(f"{k}-{v}" for k, v in zip(keys, values)) or "cell"
        _train_one(cfg, args.data, out / f"{i:03d}_{name}", args.config)
    print(f"sweep: {len(cells)} cells under {out}")
    return 0


def evaluate(ckpt: dio.SaeCheckpoint, ds: dio.ActivationDataset, lf: dio.LabelFile,
             split: dio.SplitManifest, cfg: ExperimentConfig, model=None, game_lines=None,
             max_loss_games: int = 200) -> MetricsReport:
    if len(lf) != len(ds):
        raise UsageError(f"{len(lf)} label rows for {len(ds)} activation rows")
    dio.check_disjoint(split.train, split.test)
    params = ckpt.params
    tr, te = ds.select_games(split.train), ds.select_games(split.test)
    if not tr.any() or not te.any():
        raise UsageError("train or test split selects no rows")
    f_tr, f_te = encode(params, ds.acts[tr]), encode(params, ds.acts[te])
    y_tr, y_te = lf.labels[tr], lf.labels[te]
    cov = coverage(f_te, y_te, f_max=np.maximum(f_tr.max(axis=0), 0.0), mode=cfg.coverage_mode)
    rec = reconstruction_score(f_tr, y_tr, f_te, y_te, leak=cfg.reconstruction_leak, n_min=cfg.n_min)
    gamma = reconstruction_bias(ds.acts[te], decode(params, f_te))
    lr_value, lr_flag = None, False
    if model is not None:
        if model.source_hash != ds.model_hash:
            raise UsageError("activation file was not extracted from this model")
        test_ids = sorted(set(split.test))[:max_loss_games]
        games = []
        for gid in test_ids:
            tokens, positions, _ = game_positions(ds.game, game_lines[gid])
            games.append((tokens, positions))
        lt = loss_triple(model, games, ds.layer, lambda a: decode(params, encode(params, a)), cfg.loss_mode)
        res = loss_recovered(lt.h_orig, lt.h_patched, lt.h_zero)
        lr_value, lr_flag = res.value, res.out_of_range
    names = _bsp_names(lf)
    return MetricsReport(
        bsp_names=names, coverage_per_bsp=cov.per_bsp.tolist(), coverage=cov.mean,
        reconstruction=rec.score, l0=l0(f_te), loss_recovered=lr_value,
        loss_recovered_out_of_range=lr_flag, gamma=gamma.value, gamma_unstable=gamma.unstable,
        coverage_thresholds=cov.best_t.tolist(), reconstruction_t=rec.t, skipped_bsps=cov.skipped,
        skipped_positions=rec.skipped,
        split_sizes={"train_games": len(split.train), "test_games": len(split.test),
                     "train_rows": int(tr.sum()), "test_rows": int(te.sum())},
        extra={"sae": {"variant": params.variant, "m": params.m, "n": params.n,
                       "lam_init": ckpt.config.get("lam_init"), "anneal": ckpt.config.get("anneal"),
                       "expansion_factor": ckpt.config.get("expansion_factor"),
                       "final_p": ckpt.p, "final_lam": ckpt.lam}},
    )


def _bsp_names(lf: dio.LabelFile) -> list:
    try:
        cat = bsplib.get_catalog(lf.game, lf.catalog)
        if cat.hash() == lf.catalog_hash:
            return cat.names
    except ValueError:
        pass
    return [f"{lf.catalog}[{i}]" for i in range(lf.labels.shape[1])]


def cmd_eval(args) -> int:
    cfg = load_config(args.config, _overrides(args.set))
    ckpt = dio.read_sae_checkpoint(args.sae)
    ds = dio.read_dataset(args.data)
    lf = dio.read_labels(args.labels)
    split = _split_for(ds.game_ids, args.split, cfg)
    model = lines = None
    if args.model:
        if not args.game_file:
            raise UsageError("--model needs --game-file to replay the test games")
        model = TransformerModel.load(args.model)
        lines = _load_lines(args.game_file)
    report = evaluate(ckpt, ds, lf, split, cfg, model, lines, args.loss_games)
    body = report.to_dict()
    body["provenance"] = provenance("eval", {"sae": args.sae, "data": args.data, "labels": args.labels,
                                             "model": args.model, "game_file": args.game_file,
                                             "split": args.split}, cfg.to_dict())
    write_json(args.out, body)
    if args.csv:
        report.write_csv(args.csv)
    lr = "null" if report.loss_recovered is None else f"{report.loss_recovered:.4f}"
    print(f"coverage={report.coverage:.4f} reconstruction={report.reconstruction:.4f} "
          f"L0={report.l0:.2f} loss_recovered={lr} gamma={report.gamma:.4f}")
    return 0


REPORT_COLUMNS = ["run", "variant", "lam_init", "m", "l0", "loss_recovered", "coverage", "reconstruction", "gamma"]


def cmd_report(args) -> int:
    rows = []
    for path in args.runs:
        d = json.loads(Path(path).read_text())
        sae = d.get("sae", {})
        rows.append({"run": str(path), "variant": sae.get("variant"), "lam_init": sae.get("lam_init"),
                     "m": sae.get("m"), "l0": d.get("l0"), "loss_recovered": d.get("loss_recovered"),
                     "coverage": d.get("coverage"), "reconstruction": d.get("reconstruction"),
                     "gamma": d.get("gamma")})
    with open(args.out_csv, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in r.items()})
    print(f"wrote {len(rows)} rows to {args.out_csv}")
    return 0


def cmd_init_model(args) -> int:
    model = random_model(args.game, args.layers, args.heads, args.dim, args.context, seed=args.seed)
    model.save(args.out)
    write_json(sidecar(args.out), provenance("init-model", {}, vars_clean(args)))
    print(f"wrote random {args.game} model L={args.layers} H={args.heads} n={args.dim} to {args.out}")
    return 0


def synthetic_catalog_hash(m_true: int) -> bytes:
    return hashlib.sha256(f"synthetic\n{m_true}".encode()).digest()


def cmd_gen_synth(args) -> int:
    dct = make_dictionary(args.d, args.m_true, args.k, noise=args.noise, seed=args.seed)
    s = sample_activations(dct, args.count, seed=args.seed + 1)
    idx = np.arange(args.count)
    prov = np.stack([idx // SYNTH_GROUP, idx % SYNTH_GROUP], axis=1)
    digest = hashlib.sha256(dct.vectors.tobytes()).digest()
    dio.write_dataset(args.out, dio.ActivationDataset("synthetic", digest, 0, s.x, prov))
    if args.labels:
        dio.write_labels(args.labels, dio.LabelFile("synthetic", "ground_truth", synthetic_catalog_hash(args.m_true),
                                                    s.active.astype(np.uint8)))
    write_json(sidecar(args.out), provenance("gen-synth", {}, vars_clean(args)))
    print(f"wrote {args.count} synthetic samples (d={args.d}, m_true={args.m_true}, k={args.k}) to {args.out}")
    return 0


# ---------------------------------------------------------------- parser

def vars_clean(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func",)}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="boardsae", description="SAE training and board-game evaluation.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-games", help="generate Othello games or normalise a chess PGN corpus")
    p.add_argument("--game", choices=["chess", "othello"], required=True)
    p.add_argument("--count", type=int, default=0, help="games to generate (Othello) or keep (chess)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--in", dest="input", help="chess corpus, one game per line")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_games)

    p = sub.add_parser("label", help="compute BSP labels at every sampled position")
    p.add_argument("--game", choices=["chess", "othello"], required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--catalog", default="board_state", choices=["board_state", "strategy"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("extract", help="residual-stream activations after a block")
    p.add_argument("--model", required=True)
    p.add_argument("--game-file", required=True)
    p.add_argument("--layer", type=int, default=6, help="0-based block index")
    p.add_argument("--positions", choices=["default", "all"], default="default",
                   help="default: '.' tokens for chess, every token for Othello")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    for name, func in (("train-sae", cmd_train_sae), ("sweep", cmd_sweep)):
        p = sub.add_parser(name, help="train one SAE" if name == "train-sae" else "train a cartesian grid of SAEs")
        p.add_argument("--config", help="key = value file")
        p.add_argument("--data", required=True, help="activation file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        if name == "sweep":
            p.add_argument("--grid", required=True, help="'key=v1,v2; key2=...' or a file holding it")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="metrics report for one SAE")
    p.add_argument("--sae", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", help="split manifest JSON; default is a seeded split of the data's games")
    p.add_argument("--model", help="model weights; enables loss recovered")
    p.add_argument("--game-file", help="games the activations came from (needed with --model)")
    p.add_argument("--loss-games", type=int, default=200, help="test games replayed for loss recovered")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="per-BSP coverage CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="merge eval reports into one CSV")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out-csv", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("init-model", help="write a randomly initialised model")
    p.add_argument("--game", choices=["chess", "othello"], required=True)
    p.add_argument("--layers", type=int, default=8)
    p.add_argument("--heads", type=int, default=8)
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--context", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init_model)

    p = sub.add_parser("gen-synth", help="synthetic superposition activations with ground truth")
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--m-true", type=int, default=64)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--count", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--labels", help="also write ground-truth feature labels")
    p.set_defaults(func=cmd_gen_synth)
    return ap


def _limit_threads():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(int(value))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    limiter = _limit_threads()
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (BoardSaeError, ValueError, KeyError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
