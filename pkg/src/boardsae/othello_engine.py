"""Othello rules, transcripts and the relative (mine/yours) board encoding.

Squares use the same naming as chess boards: column letter a-h then row 1-8,
indexed ``row * 8 + column``.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import LegalityError, ParseError

EMPTY, BLACK, WHITE = 0, 1, 2
PASS = "--"
COLUMNS = "abcdefgh"
DIRECTIONS = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]


def square(name: str) -> int:
    if len(name) != 2 or name[0] not in COLUMNS or name[1] not in "12345678":
        raise ParseError(f"bad Othello square {name!r}")
    return (int(name[1]) - 1) * 8 + COLUMNS.index(name[0])


def square_name(sq: int) -> str:
    return COLUMNS[sq % 8] + str(sq // 8 + 1)


def _rays():
    table = []
    for sq in range(64):
        c, r = sq % 8, sq // 8
        rays = []
        for dc, dr in DIRECTIONS:
            ray, nc, nr = [], c + dc, r + dr
            while 0 <= nc < 8 and 0 <= nr < 8:
                ray.append(nr * 8 + nc)
                nc, nr = nc + dc, nr + dr
            if len(ray) >= 2:
                rays.append(tuple(ray))
        table.append(tuple(rays))
    return tuple(table)


RAYS = _rays()


def _setup_grid():
    grid = [EMPTY] * 64
    for name, color in (("d4", WHITE), ("e5", WHITE), ("d5", BLACK), ("e4", BLACK)):
        grid[square(name)] = color
    return tuple(grid)


@dataclass(frozen=True)
class OthelloBoard:
    grid: tuple = _setup_grid()
    turn: int = BLACK

    @classmethod
    def setup(cls) -> "OthelloBoard":
        return cls()

    @property
    def opponent(self) -> int:
        return WHITE if self.turn == BLACK else BLACK

    def discs(self, color: int) -> set:
        return {square_name(i) for i, c in enumerate(self.grid) if c == color}

    def disc_count(self) -> int:
        return sum(1 for c in self.grid if c != EMPTY)

    def swapped(self) -> "OthelloBoard":
        """Same discs, other side to move."""
        return OthelloBoard(self.grid, self.opponent)

    def inverted(self) -> "OthelloBoard":
        """Every disc recolored and the side to move flipped."""
        flip = {EMPTY: EMPTY, BLACK: WHITE, WHITE: BLACK}
        return OthelloBoard(tuple(flip[c] for c in self.grid), self.opponent)

    def __str__(self) -> str:
        sym = {EMPTY: ".", BLACK: "x", WHITE: "o"}
        return "\n".join(" ".join(sym[self.grid[r * 8 + c]] for c in range(8)) for r in range(7, -1, -1))


def flips(board: OthelloBoard, sq: int) -> list:
    """Opponent discs that would be flipped by the mover playing ``sq``."""
    grid = board.grid
    if grid[sq] != EMPTY:
        return []
    me, them = board.turn, board.opponent
    out = []
    for ray in RAYS[sq]:
        run = []
        for s in ray:
            c = grid[s]
            if c == them:
                run.append(s)
                continue
            if c == me and run:
                out.extend(run)
            break
    return out


def legal_moves(board: OthelloBoard) -> set:
    return {square_name(sq) for sq in range(64) if flips(board, sq)}


def legal_move_indices(board: OthelloBoard) -> list:
    return [sq for sq in range(64) if flips(board, sq)]


def apply_move(board: OthelloBoard, sq) -> OthelloBoard:
    """Place a disc, flip every bracketed line and hand the turn to the opponent."""
    idx = square(sq) if isinstance(sq, str) else sq
    flipped = flips(board, idx)
    if not flipped:
        raise LegalityError(f"illegal Othello move {square_name(idx)}")
    grid = list(board.grid)
    grid[idx] = board.turn
    for s in flipped:
        grid[s] = board.turn
    return OthelloBoard(tuple(grid), board.opponent)


def pass_turn(board: OthelloBoard) -> OthelloBoard:
    if legal_move_indices(board):
        raise LegalityError("cannot pass while a legal move exists")
    return board.swapped()


def game_over(board: OthelloBoard) -> bool:
    return not legal_move_indices(board) and not legal_move_indices(board.swapped())


@dataclass(frozen=True)
class OthelloTranscript:
    moves: tuple  # square names, with PASS where the mover had no legal move

    def line(self) -> str:
        return " ".join(self.moves)

    @classmethod
    def parse(cls, line: str) -> "OthelloTranscript":
        toks = line.split()
        for t in toks:
            if t != PASS:
                square(t)
        return cls(tuple(toks))

    def squares(self) -> list:
        return [m for m in self.moves if m != PASS]


def replay(transcript: OthelloTranscript, implicit_passes: bool = False) -> list:
    """Boards after each transcript entry, starting with the setup position.

    With ``implicit_passes`` a forced pass missing from the transcript is
    inserted silently, as in corpora that omit pass tokens; the returned list
    then still has one board per listed entry.
    """
    board = OthelloBoard.setup()
    boards = [board]
    for i, mv in enumerate(transcript.moves):
        try:
            if mv == PASS:
                board = pass_turn(board)
            else:
                if implicit_passes and not legal_move_indices(board):
                    board = pass_turn(board)
                board = apply_move(board, mv)
        except LegalityError as exc:
            raise LegalityError(str(exc), i) from None
        boards.append(board)
    return boards


def random_game(seed: int, max_moves: Optional[int] = None) -> OthelloTranscript:
    """Uniformly random legal play until neither side can move."""
    rng = random.Random(seed)
    board = OthelloBoard.setup()
    moves = []
    while max_moves is None or len(moves) < max_moves:
        legal = legal_move_indices(board)
        if not legal:
            if not legal_move_indices(board.swapped()):
                break
            moves.append(PASS)
            board = board.swapped()
            continue
        sq = legal[rng.randrange(len(legal))]
        moves.append(square_name(sq))
        board = apply_move(board, sq)
    return OthelloTranscript(tuple(moves))


def relative_encoding(board: OthelloBoard) -> np.ndarray:
    """128 bits: 64 'mine' (side to move) squares followed by 64 'yours' squares."""
    grid = np.asarray(board.grid)
    out = np.zeros(128, dtype=np.uint8)
    out[:64] = grid == board.turn
    out[64:] = grid == board.opponent
    return out
