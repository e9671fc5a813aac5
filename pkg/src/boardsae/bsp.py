"""Binary board-state properties (BSPs) for chess and Othello positions.

Catalog layouts:

* chess board state: 12 blocks of 64 squares, ``mine_P .. mine_K`` then
  ``yours_P .. yours_K``; pieces standing on their initial squares are masked.
* chess strategy: 12 global concepts, 64 ``threatened_squares`` bits, 64
  ``legal_moves`` destination bits.
* Othello board state: 64 ``mine`` squares then 64 ``yours`` squares.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import chess_engine as ce
from . import othello_engine as oe

STRATEGY_CONCEPTS = (
    "check", "can_check", "queen", "can_capture_queen", "bishop_pair", "castling_rights",
    "kingside_castling_rights", "queenside_castling_rights", "fork", "pin",
    "legal_en_passant", "ambiguous_moves",
)
PIECE_BLOCKS = tuple(f"mine_{k}" for k in ce.KINDS) + tuple(f"yours_{k}" for k in ce.KINDS)


@dataclass(frozen=True)
class Bsp:
    name: str
    game: str
    concept: str
    index: int  # index within the concept (square, or 0 for global concepts)


@dataclass(frozen=True)
class BspCatalog:
    name: str
    game: str
    entries: tuple

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def names(self) -> list:
        return [e.name for e in self.entries]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def hash(self) -> bytes:
        body = "\n".join([self.game, self.name] + self.names).encode()
        return hashlib.sha256(body).digest()


def _chess_board_catalog() -> BspCatalog:
    entries = tuple(
        Bsp(f"{block}@{ce.square_name(sq)}", "chess", block, sq)
        for block in PIECE_BLOCKS for sq in range(64)
    )
    return BspCatalog("board_state", "chess", entries)


def _chess_strategy_catalog() -> BspCatalog:
    entries = [Bsp(c, "chess", c, 0) for c in STRATEGY_CONCEPTS]
    for concept in ("threatened_squares", "legal_moves"):
        entries += [Bsp(f"{concept}@{ce.square_name(sq)}", "chess", concept, sq) for sq in range(64)]
    return BspCatalog("strategy", "chess", tuple(entries))


def _othello_board_catalog() -> BspCatalog:
    entries = tuple(
        Bsp(f"{block}@{oe.square_name(sq)}", "othello", block, sq)
        for block in ("mine", "yours") for sq in range(64)
    )
    return BspCatalog("board_state", "othello", entries)


CHESS_BOARD_STATE = _chess_board_catalog()
CHESS_STRATEGY = _chess_strategy_catalog()
OTHELLO_BOARD_STATE = _othello_board_catalog()

CATALOGS = {
    ("chess", "board_state"): CHESS_BOARD_STATE,
    ("chess", "strategy"): CHESS_STRATEGY,
    ("othello", "board_state"): OTHELLO_BOARD_STATE,
}


def get_catalog(game: str, name: str) -> BspCatalog:
    try:
        return CATALOGS[(game, name)]
    except KeyError:
        raise ValueError(f"no catalog {name!r} for game {game!r}") from None


_INITIAL_SQUARES = {}
for _sq, _pc in enumerate(ce.ChessBoard.initial().placement):
    if _pc is not None:
        _INITIAL_SQUARES.setdefault(_pc, set()).add(_sq)


# ---------------------------------------------------------------- chess

def chess_board_state_labels(board: ce.ChessBoard) -> np.ndarray:
    """768 bits relative to the side to move, masking pieces on their starting squares."""
    out = np.zeros(len(CHESS_BOARD_STATE), dtype=np.uint8)
    me = board.turn
    for sq, pc in enumerate(board.placement):
        if pc is None or sq in _INITIAL_SQUARES.get(pc, ()):
            continue
        block = ce.KINDS.index(pc.upper()) + (0 if ce.color_of(pc) == me else 6)
        out[block * 64 + sq] = 1
    return out


def attack_map(board: ce.ChessBoard, color: int) -> np.ndarray:
    """Squares attacked by any piece of ``color`` (defended squares included, pins ignored)."""
    out = np.zeros(64, dtype=bool)
    for sq in board.pieces(color):
        out[ce.attacks_from(board, sq)] = True
    return out


def absolute_pins(board: ce.ChessBoard, color: int) -> list:
    """Squares of ``color`` pieces pinned against their own king by an enemy slider."""
    pinned = []
    pl = board.placement
    king = board.king_square(color)
    enemy = 1 - color
    for rays, sliders in ((ce.ROOK_RAYS, "RQ"), (ce.BISHOP_RAYS, "BQ")):
        for ray in rays[king]:
            blocker = None
            for sq in ray:
                pc = pl[sq]
                if pc is None:
                    continue
                if blocker is None:
                    if ce.color_of(pc) != color:
                        break
                    blocker = sq
                    continue
                if ce.color_of(pc) == enemy and pc.upper() in sliders:
                    pinned.append(blocker)
                break
    return sorted(pinned)


def _light_square(sq: int) -> bool:
    return (sq % 8 + sq // 8) % 2 == 1


def chess_strategy_labels(board: ce.ChessBoard) -> np.ndarray:
    out = np.zeros(len(CHESS_STRATEGY), dtype=np.uint8)
    me, them = board.turn, 1 - board.turn
    pl = board.placement
    legal = ce.legal_moves(board)
    concept = dict.fromkeys(STRATEGY_CONCEPTS, False)

    concept["check"] = ce.in_check(board, me)
    for mv in legal:
        if ce.in_check(ce.make_move(board, mv), them):
            concept["can_check"] = True
            break
    concept["queen"] = bool(board.pieces(me, "Q"))
    their_queen = ce.colored("Q", them)
    concept["can_capture_queen"] = any(pl[mv.to_sq] == their_queen for mv in legal)
    bishops = board.pieces(me, "B")
    concept["bishop_pair"] = any(_light_square(s) for s in bishops) and any(not _light_square(s) for s in bishops)
    ks, qs = board.castling[0:2] if me == ce.WHITE else board.castling[2:4]
    concept["kingside_castling_rights"] = ks
    concept["queenside_castling_rights"] = qs
    concept["castling_rights"] = ks or qs

    majors = {ce.colored("Q", them), ce.colored("R", them)}
    for sq in board.pieces(me):
        hits = {t for t in ce.attacks_from(board, sq) if pl[t] in majors}
        if len(hits) >= 2:
            concept["fork"] = True
            break
    concept["pin"] = bool(absolute_pins(board, me) or absolute_pins(board, them))
    concept["legal_en_passant"] = any(mv.en_passant for mv in legal)
    # pawn captures always carry their file in SAN, so only pieces can be ambiguous
    seen = {}
    for mv in legal:
        pc = pl[mv.from_sq]
        if pc.upper() == "P" or mv.castle:
            continue
        seen.setdefault((pc, mv.to_sq), set()).add(mv.from_sq)
    concept["ambiguous_moves"] = any(len(v) >= 2 for v in seen.values())

    for i, name in enumerate(STRATEGY_CONCEPTS):
        out[i] = concept[name]
    base = len(STRATEGY_CONCEPTS)
    out[base:base + 64] = attack_map(board, them)
    for mv in legal:
        out[base + 64 + mv.to_sq] = 1
    return out


# ---------------------------------------------------------------- othello

def othello_board_labels(board: oe.OthelloBoard) -> np.ndarray:
    return oe.relative_encoding(board)


def labels_for(catalog: BspCatalog, board) -> np.ndarray:
    if catalog is CHESS_BOARD_STATE:
        return chess_board_state_labels(board)
    if catalog is CHESS_STRATEGY:
        return chess_strategy_labels(board)
    if catalog is OTHELLO_BOARD_STATE:
        return othello_board_labels(board)
    raise ValueError(f"unknown catalog {catalog.name!r}")
