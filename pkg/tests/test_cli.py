import csv
import json

import numpy as np
import pytest

from boardsae import dataset_io as dio
from boardsae import othello_engine as oe
from boardsae.cli import game_positions, main, parse_grid
from boardsae.config import ConfigError, ExperimentConfig, dump_config, load_config, parse_pairs, parse_text
from boardsae.sae import SaeParams
from boardsae.synth import make_dictionary

CHESS = [
    ";1.e4 e5 2.Nf3 Nc6 3.Bb5 a6 4.Ba4 Nf6 5.O-O Be7",
    ";1.d4 d5 2.c4 e6 3.Nc3 Nf6",
    ";1.e4 c5 2.Nf3 d6 3.d4 cxd4 4.Nxd4 Nf6 5.Nc3 a6",
]
TRAIN = ["token_budget=2048", "batch_size=64", "warmup_steps=2", "anneal_start=10", "expansion_factor=2", "lr=1e-3"]


def run(*argv):
    return main([str(a) for a in argv])


def sets(items):
    return [x for kv in items for x in ("--set", kv)]


@pytest.fixture
def othello(tmp_path):
    games = tmp_path / "games.txt"
    assert run("gen-games", "--game", "othello", "--count", 6, "--seed", 1, "--out", games) == 0
    model = tmp_path / "model.bin"
    assert run("init-model", "--game", "othello", "--layers", 2, "--heads", 2, "--dim", 16,
               "--context", 64, "--out", model) == 0
    acts = tmp_path / "acts.bin"
    assert run("extract", "--model", model, "--game-file", games, "--layer", 1, "--out", acts) == 0
    labels = tmp_path / "labels.bin"
    assert run("label", "--game", "othello", "--in", games, "--out", labels) == 0
    return tmp_path, games, model, acts, labels


def test_gen_games_deterministic(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    run("gen-games", "--game", "othello", "--count", 5, "--seed", 3, "--out", a)
    run("gen-games", "--game", "othello", "--count", 5, "--seed", 3, "--out", b)
    assert a.read_text() == b.read_text() and len(a.read_text().splitlines()) == 5
    assert (tmp_path / "a.txt.json").exists()


def test_chess_bad_line_exit_1(tmp_path, capsys):
    src = tmp_path / "in.txt"
    src.write_text(CHESS[0] + "\n;1.e4 e5 2.Ke3\n")
    assert run("gen-games", "--game", "chess", "--in", src, "--out", tmp_path / "out.txt") == 1
    assert "in.txt:2" in capsys.readouterr().err
    assert not (tmp_path / "out.txt").exists()


def test_chess_label_rows_equal_periods(tmp_path):
    src, games, labels = tmp_path / "in.txt", tmp_path / "g.txt", tmp_path / "l.bin"
    src.write_text("\n".join(CHESS) + "\n")
    assert run("gen-games", "--game", "chess", "--in", src, "--out", games) == 0
    assert run("label", "--game", "chess", "--in", games, "--out", labels) == 0
    lf = dio.read_labels(labels)
    assert len(lf) == sum(line.count(".") for line in CHESS)
    # before white's first move nothing is attacked, pinned or castled
    assert run("label", "--game", "chess", "--in", games, "--catalog", "strategy", "--out", labels) == 0
    assert len(dio.read_labels(labels)) == len(lf)


def test_extract_rows_and_layer_bound(othello, capsys):
    tmp, games, model, acts, labels = othello
    ds = dio.read_dataset(acts)
    n_moves = sum(sum(tok != "--" for tok in line.split()) for line in games.read_text().splitlines())
    assert len(ds) == n_moves == len(dio.read_labels(labels))
    assert ds.n == 16 and ds.layer == 1
    assert run("extract", "--model", model, "--game-file", games, "--layer", 2, "--out", tmp / "x.bin") == 1
    assert "layer" in capsys.readouterr().err


def test_sweep_and_resume(othello, capsys):
    tmp, _, _, acts, _ = othello
    out = tmp / "sweep"
    grid = "lam_init=0.01,0.1; variant=standard,gated"
    assert run("sweep", "--data", acts, "--out", out, "--grid", grid, *sets(TRAIN)) == 0
    ckpts = sorted(out.glob("*/sae.bin"))
    assert len(ckpts) == 4
    variants = sorted(dio.read_sae_checkpoint(c).params.variant for c in ckpts)
    assert variants == ["gated", "gated", "standard", "standard"]
    stamp = [c.stat().st_mtime_ns for c in ckpts]
    capsys.readouterr()
    assert run("sweep", "--data", acts, "--out", out, "--grid", grid, *sets(TRAIN)) == 0
    assert capsys.readouterr().out.count("already complete") == 4
    assert [c.stat().st_mtime_ns for c in ckpts] == stamp


def test_eval_report_pipeline(othello):
    tmp, games, model, acts, labels = othello
    assert run("train-sae", "--data", acts, "--out", tmp / "run", *sets(TRAIN)) == 0
    rep_a, rep_b = tmp / "a.json", tmp / "b.json"
    assert run("eval", "--sae", tmp / "run/sae.bin", "--data", acts, "--labels", labels, "--out", rep_a,
               "--csv", tmp / "cov.csv") == 0
    body = json.loads(rep_a.read_text())
    assert body["loss_recovered"] is None
    assert 0 <= body["coverage"] <= 1 and body["l0"] >= 0
    assert run("eval", "--sae", tmp / "run/sae.bin", "--data", acts, "--labels", labels, "--out", rep_b,
               "--model", model, "--game-file", games) == 0
    assert isinstance(json.loads(rep_b.read_text())["loss_recovered"], float)
    assert run("report", "--runs", rep_a, rep_b, "--out-csv", tmp / "r.csv") == 0
    rows = list(csv.DictReader(open(tmp / "r.csv")))
    assert len(rows) == 2 and rows[0]["variant"] == "standard"
    with open(tmp / "cov.csv") as fh:
        assert next(csv.reader(fh)) == ["bsp", "coverage", "t"]


def test_othello_passes_skipped_by_default():
    seed = next(s for s in range(10_000) if oe.PASS in oe.random_game(s).moves)
    game = oe.random_game(seed)
    tokens, positions, boards = game_positions("othello", game.line())
    assert len(positions) == len(boards) == len(game.moves) - game.moves.count(oe.PASS)
    assert all(game.moves[i] != oe.PASS for i in positions)
    _, every, _ = game_positions("othello", game.line(), "all")
    assert every == list(range(len(tokens)))


def test_eval_model_mismatch(othello):
    tmp, games, _, acts, labels = othello
    other = tmp / "other.bin"
    run("init-model", "--game", "othello", "--layers", 2, "--heads", 2, "--dim", 16, "--context", 64,
        "--seed", 9, "--out", other)
    run("train-sae", "--data", acts, "--out", tmp / "run", *sets(TRAIN))
    assert run("eval", "--sae", tmp / "run/sae.bin", "--data", acts, "--labels", labels,
               "--out", tmp / "e.json", "--model", other, "--game-file", games) == 1


def test_oracle_sae_full_coverage(tmp_path):
    data, labels = tmp_path / "s.bin", tmp_path / "l.bin"
    assert run("gen-synth", "--d", 16, "--m-true", 8, "--k", 2, "--count", 4000, "--seed", 2,
               "--out", data, "--labels", labels) == 0
    D = make_dictionary(16, 8, 2, seed=2).vectors.T
    # with m_true ≤ d the pseudo-inverse recovers the coefficients exactly
    params = SaeParams("standard", W_dec=D, b_dec=np.zeros(16), W_enc=np.linalg.pinv(D), b_enc=np.zeros(8))
    dio.write_sae_checkpoint(tmp_path / "o.bin", params, {}, 0, 1.0, 0.0)
    out = tmp_path / "e.json"
    assert run("eval", "--sae", tmp_path / "o.bin", "--data", data, "--labels", labels, "--out", out) == 0
    body = json.loads(out.read_text())
    assert body["coverage"] == 1.0 and body["reconstruction"] == 1.0


def test_unknown_config_key(othello, capsys):
    tmp, _, _, acts, _ = othello
    assert run("train-sae", "--data", acts, "--out", tmp / "r", "--set", "lamda=0.1") == 1
    assert "lamda" in capsys.readouterr().err


# ------------------------------------------------------------- config

def test_config_roundtrip(tmp_path):
    cfg = parse_pairs({"lam_init": "0.5", "game": "othello", "anneal": "false", "layer": "3"})
    assert cfg.train.lam_init == 0.5 and cfg.train.anneal is False and cfg.layer == 3
    path = tmp_path / "c.txt"
    path.write_text(dump_config(cfg))
    assert load_config(path).to_dict() == cfg.to_dict()


def test_config_defaults():
    assert load_config().to_dict() == ExperimentConfig().to_dict()


@pytest.mark.parametrize("pairs", [{"nope": "1"}, {"layer": "1.5"}, {"anneal": "maybe"}, {"p_end": "0"}])
def test_config_rejects(pairs):
    with pytest.raises(ConfigError):
        parse_pairs(pairs)


def test_config_text_errors():
    assert parse_text("a = 1  # note\n\n# c\nb=2") == {"a": "1", "b": "2"}
    with pytest.raises(ConfigError):
        parse_text("a = 1\na = 2")
    with pytest.raises(ConfigError):
        parse_text("justakey")


def test_parse_grid():
    assert parse_grid("lam_init=0.1,0.2;\nvariant=gated") == {"lam_init": ["0.1", "0.2"], "variant": ["gated"]}
    with pytest.raises(ConfigError):
        parse_grid("lam_init")
