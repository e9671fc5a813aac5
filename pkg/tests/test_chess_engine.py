import random

import chess
import pytest
from hypothesis import given, settings, strategies as st

from boardsae import chess_engine as ce
from boardsae.errors import AmbiguityError, LegalityError, ParseError, StateError

KIWIPETE = "r3k2r/p1ppqpb1/bn2pnp1/3PN3/1p2P3/2N2Q1p/PPPBBPPP/R3K2R w KQkq - 0 1"
ENDGAME = "8/2p5/3p4/KP5r/1R3p1k/8/4P1P1/8 w - - 0 1"


def reference_game(seed, plies):
    """Random legal game played by the reference library: (san list, fens)."""
    rng = random.Random(seed)
    board = chess.Board()
    sans, fens = [], [board.fen(en_passant="fen")]
    for _ in range(plies):
        moves = sorted(board.legal_moves, key=lambda m: m.uci())
        if not moves:
            break
        mv = rng.choice(moves)
        sans.append(board.san(mv))
        board.push(mv)
        fens.append(board.fen(en_passant="fen"))
    return sans, fens


def movetext(sans):
    parts = []
    for i, s in enumerate(sans):
        parts.append(f"{i // 2 + 1}.{s}" if i % 2 == 0 else s)
    return " ".join(parts)


def test_perft_initial():
    b = ce.ChessBoard.initial()
    assert [ce.perft(b, d) for d in (1, 2, 3)] == [20, 400, 8902]


@pytest.mark.parametrize("fen,counts", [(KIWIPETE, [48, 2039]), (ENDGAME, [14, 191, 2812])])
def test_perft_matches_reference(fen, counts):
    ours = ce.ChessBoard.from_fen(fen)
    ref = chess.Board(fen)

    def ref_perft(b, d):
        if d == 0:
            return 1
        total = 0
        for mv in b.legal_moves:
            b.push(mv)
            total += ref_perft(b, d - 1)
            b.pop()
        return total

    for depth, expected in enumerate(counts, 1):
        assert ce.perft(ours, depth) == expected == ref_perft(ref, depth)


@settings(max_examples=25)
@given(st.integers(0, 10**6))
def test_random_games_agree_with_reference(seed):
    sans, fens = reference_game(seed, 80)
    board = ce.ChessBoard.initial()
    for s, fen in zip(sans, fens):
        assert board.fen() == fen
        ref = chess.Board(fen)
        assert {m.uci() for m in ce.legal_moves(board)} == {m.uci() for m in ref.legal_moves}
        mv = ce.resolve_san(board, s)
        assert ce.san(board, mv) == s
        board = ce.make_move(board, mv)
    assert board.fen() == fens[len(sans)]


@settings(max_examples=15)
@given(st.integers(0, 10**6))
def test_pgn_period_boards(seed):
    sans, fens = reference_game(seed, 40)
    text = movetext(sans)
    game = ce.parse_pgn(text)
    pairs = ce.boards_at_periods(game)
    assert len(pairs) == (len(sans) + 1) // 2
    for k, (offset, board) in enumerate(pairs):
        assert text[offset] == "."
        assert board.turn == ce.WHITE
        assert board.fen() == fens[2 * k]


def test_pgn_periods_example():
    game = ce.parse_pgn("1.e4 e5 2.Nf3")
    assert game.san_moves == ("e4", "e5", "Nf3")
    assert game.period_positions == (1, 9)


def test_pgn_trailing_result_ignored():
    assert len(ce.parse_pgn("1.e4 e5 1-0")) == 2


def test_parse_error_offset():
    with pytest.raises(ParseError) as err:
        ce.parse_pgn("1.e9")
    assert err.value.offset == 2


def test_illegal_move_index():
    with pytest.raises(LegalityError) as err:
        ce.parse_pgn("1.e4 e5 2.Ke3")
    assert err.value.move_index == 2


def test_bad_move_number():
    with pytest.raises(ParseError):
        ce.parse_pgn("1.e4 e5 3.Nf3")


def test_san_disambiguation():
    # knights on b1 and f3 can both reach d2
    b = ce.ChessBoard.from_fen("4k3/8/8/8/8/5N2/8/1N2K3 w - - 0 1")
    moves = [m for m in ce.legal_moves(b) if m.to_sq == ce.square("d2") and b.piece_at(m.from_sq) == "N"]
    assert sorted(ce.san(b, m) for m in moves) == ["Nbd2", "Nfd2"]
    with pytest.raises(AmbiguityError):
        ce.resolve_san(b, "Nd2")
    # rooks on the same file need a rank
    b = ce.ChessBoard.from_fen("4k3/R7/8/8/8/8/R7/4K3 w - - 0 1")
    moves = [m for m in ce.legal_moves(b) if m.to_sq == ce.square("a5")]
    assert sorted(ce.san(b, m) for m in moves) == ["R2a5", "R7a5"]


def test_checkmate_suffix():
    b = ce.ChessBoard.initial()
    for s in ("f3", "e5", "g4"):
        b = ce.apply_san(b, s)
    mv = ce.resolve_san(b, "Qh4")
    assert ce.san(b, mv) == "Qh4#"
    assert ce.legal_moves(ce.make_move(b, mv)) == []


def test_en_passant_and_promotion():
    b = ce.ChessBoard.from_fen("4k3/1P6/8/3pP3/8/8/8/4K3 w - d6 0 1")
    ucis = {m.uci() for m in ce.legal_moves(b)}
    assert "e5d6" in ucis
    assert {"b7b8q", "b7b8n", "b7b8r", "b7b8b"} <= ucis
    after = ce.apply_san(b, "exd6")
    assert after.piece_at(ce.square("d5")) is None


def test_castling_through_check_illegal():
    b = ce.ChessBoard.from_fen("4k3/8/8/8/8/8/5r2/4K2R w K - 0 1")
    assert "e1g1" not in {m.uci() for m in ce.legal_moves(b)}


def test_state_errors():
    with pytest.raises(StateError):
        ce.ChessBoard.from_fen("8/8/8/8/8/8/8/4K3 w - - 0 1")
    with pytest.raises(StateError):
        ce.ChessBoard.from_fen("4k3/8/8/8/8/8/8/4K3 w K - 0 1")


def test_legal_moves_sorted_and_deterministic():
    b = ce.ChessBoard.from_fen(KIWIPETE)
    first = ce.legal_moves(b)
    assert first == ce.legal_moves(b)
    assert [m.sort_key() for m in first] == sorted(m.sort_key() for m in first)
