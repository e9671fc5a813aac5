"""Chess rules on a 64-square mailbox: move generation, SAN, PGN movetext replay.

Squares are indexed ``rank * 8 + file`` with a1 = 0 and h8 = 63. Pieces are
single characters, uppercase for white (``"PNBRQK"``) and lowercase for black.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .errors import AmbiguityError, LegalityError, ParseError, StateError

WHITE, BLACK = 0, 1
FILES = "abcdefgh"
KINDS = "PNBRQK"
PROMOTION_ORDER = "NBRQ"

KNIGHT_STEPS = [(1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2)]
KING_STEPS = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]
ROOK_DIRS = [(1, 0), (-1, 0), (0, 1), (0, -1)]
BISHOP_DIRS = [(1, 1), (1, -1), (-1, 1), (-1, -1)]


def square(name: str) -> int:
    if len(name) != 2 or name[0] not in FILES or name[1] not in "12345678":
        raise ValueError(f"bad square name {name!r}")
    return (int(name[1]) - 1) * 8 + FILES.index(name[0])


def square_name(sq: int) -> str:
    return FILES[sq % 8] + str(sq // 8 + 1)


def _on_board(f: int, r: int) -> bool:
    return 0 <= f < 8 and 0 <= r < 8


def _step_table(steps):
    table = []
    for sq in range(64):
        f, r = sq % 8, sq // 8
        table.append(tuple((r + dr) * 8 + f + df for df, dr in steps if _on_board(f + df, r + dr)))
    return tuple(table)


def _ray_table(dirs):
    table = []
    for sq in range(64):
        f, r = sq % 8, sq // 8
        rays = []
        for df, dr in dirs:
            ray = []
            nf, nr = f + df, r + dr
            while _on_board(nf, nr):
                ray.append(nr * 8 + nf)
                nf, nr = nf + df, nr + dr
            rays.append(tuple(ray))
        table.append(tuple(rays))
    return tuple(table)


KNIGHT_TARGETS = _step_table(KNIGHT_STEPS)
KING_TARGETS = _step_table(KING_STEPS)
ROOK_RAYS = _ray_table(ROOK_DIRS)
BISHOP_RAYS = _ray_table(BISHOP_DIRS)
QUEEN_RAYS = tuple(r + b for r, b in zip(ROOK_RAYS, BISHOP_RAYS))
# squares from which a pawn of the given color attacks the key square
PAWN_ATTACKERS = (
    _step_table([(-1, -1), (1, -1)]),
    _step_table([(-1, 1), (1, 1)]),
)
PAWN_ATTACKS = (
    _step_table([(-1, 1), (1, 1)]),
    _step_table([(-1, -1), (1, -1)]),
)

A1, E1, H1, A8, E8, H8 = 0, 4, 7, 56, 60, 63
# castling-rights order: white kingside, white queenside, black kingside, black queenside
CASTLE_ROOK_SQUARES = (H1, A1, H8, A8)
CASTLE_KING_SQUARES = (E1, E1, E8, E8)


def color_of(piece: str) -> int:
    return WHITE if piece.isupper() else BLACK


def colored(kind: str, color: int) -> str:
    return kind.upper() if color == WHITE else kind.lower()


@dataclass(frozen=True, order=True)
class Move:
    from_sq: int
    to_sq: int
    promotion: Optional[str] = None
    capture: bool = field(default=False, compare=False)
    castle: bool = field(default=False, compare=False)
    en_passant: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.from_sq == self.to_sq:
            raise ValueError("null moves are not allowed")

    def sort_key(self):
        promo = -1 if self.promotion is None else PROMOTION_ORDER.index(self.promotion)
        return (self.from_sq, self.to_sq, promo)

    def uci(self) -> str:
        return square_name(self.from_sq) + square_name(self.to_sq) + (self.promotion or "").lower()


_INITIAL_PLACEMENT = tuple(
    "RNBQKBNR"[sq % 8] if sq < 8 else
    "P" if sq < 16 else
    "p" if 48 <= sq < 56 else
    "rnbqkbnr"[sq % 8] if sq >= 56 else None
    for sq in range(64)
)


@dataclass(frozen=True)
class ChessBoard:
    placement: tuple = _INITIAL_PLACEMENT
    turn: int = WHITE
    castling: tuple = (True, True, True, True)
    ep_square: Optional[int] = None
    halfmove: int = 0
    fullmove: int = 1

    @classmethod
    def initial(cls) -> "ChessBoard":
        return cls()

    @classmethod
    def from_fen(cls, fen: str) -> "ChessBoard":
        fields = fen.split()
        if len(fields) != 6:
            raise ParseError(f"FEN needs 6 fields, got {len(fields)}")
        rows = fields[0].split("/")
        if len(rows) != 8:
            raise ParseError("FEN placement needs 8 ranks")
        placement = [None] * 64
        for i, row in enumerate(rows):
            r, f = 7 - i, 0
            for ch in row:
                if ch.isdigit():
                    f += int(ch)
                elif ch.upper() in KINDS and f < 8:
                    placement[r * 8 + f] = ch
                    f += 1
                else:
                    raise ParseError(f"bad FEN rank {row!r}")
            if f != 8:
                raise ParseError(f"FEN rank {row!r} does not cover 8 files")
        if fields[1] not in ("w", "b"):
            raise ParseError("side to move must be 'w' or 'b'")
        castling = tuple(c in fields[2] for c in "KQkq")
        ep = None if fields[3] == "-" else square(fields[3])
        board = cls(tuple(placement), WHITE if fields[1] == "w" else BLACK, castling, ep,
                    int(fields[4]), int(fields[5]))
        board.validate()
        return board

    def piece_at(self, sq: int) -> Optional[str]:
        return self.placement[sq]

    def king_square(self, color: int) -> int:
        return self.placement.index(colored("K", color))

    def pieces(self, color: int, kind: Optional[str] = None) -> list:
        out = []
        for sq, pc in enumerate(self.placement):
            if pc is not None and color_of(pc) == color and (kind is None or pc.upper() == kind):
                out.append(sq)
        return out

    def validate(self) -> None:
        for color in (WHITE, BLACK):
            if self.placement.count(colored("K", color)) != 1:
                raise StateError("each side needs exactly one king")
        if self.ep_square is not None and self.ep_square // 8 not in (2, 5):
            raise StateError("en-passant target must lie on rank 3 or 6")
        for i, right in enumerate(self.castling):
            if not right:
                continue
            color = WHITE if i < 2 else BLACK
            if (self.placement[CASTLE_KING_SQUARES[i]] != colored("K", color)
                    or self.placement[CASTLE_ROOK_SQUARES[i]] != colored("R", color)):
                raise StateError("castling right without king and rook on their start squares")

    def fen(self) -> str:
        rows = []
        for r in range(7, -1, -1):
            row, empty = "", 0
            for f in range(8):
                pc = self.placement[r * 8 + f]
                if pc is None:
                    empty += 1
                else:
                    row += (str(empty) if empty else "") + pc
                    empty = 0
            rows.append(row + (str(empty) if empty else ""))
        rights = "".join(c for c, ok in zip("KQkq", self.castling) if ok) or "-"
        ep = square_name(self.ep_square) if self.ep_square is not None else "-"
        return f"{'/'.join(rows)} {'wb'[self.turn]} {rights} {ep} {self.halfmove} {self.fullmove}"

    def __str__(self) -> str:
        lines = []
        for r in range(7, -1, -1):
            lines.append(" ".join(self.placement[r * 8 + f] or "." for f in range(8)))
        return "\n".join(lines)


# ---------------------------------------------------------------- attacks

def is_attacked(board: ChessBoard, sq: int, by: int) -> bool:
    pl = board.placement
    for src in PAWN_ATTACKERS[by][sq]:
        if pl[src] == colored("P", by):
            return True
    knight = colored("N", by)
    for src in KNIGHT_TARGETS[sq]:
        if pl[src] == knight:
            return True
    king = colored("K", by)
    for src in KING_TARGETS[sq]:
        if pl[src] == king:
            return True
    rook_like = (colored("R", by), colored("Q", by))
    for ray in ROOK_RAYS[sq]:
        for src in ray:
            pc = pl[src]
            if pc is not None:
                if pc in rook_like:
                    return True
                break
    bishop_like = (colored("B", by), colored("Q", by))
    for ray in BISHOP_RAYS[sq]:
        for src in ray:
            pc = pl[src]
            if pc is not None:
                if pc in bishop_like:
                    return True
                break
    return False


def attacks_from(board: ChessBoard, sq: int) -> list:
    """Squares the piece on ``sq`` attacks (pins ignored, own-occupied squares included)."""
    pc = board.placement[sq]
    if pc is None:
        return []
    kind, color = pc.upper(), color_of(pc)
    if kind == "P":
        return list(PAWN_ATTACKS[color][sq])
    if kind == "N":
        return list(KNIGHT_TARGETS[sq])
    if kind == "K":
        return list(KING_TARGETS[sq])
    rays = {"R": ROOK_RAYS, "B": BISHOP_RAYS, "Q": QUEEN_RAYS}[kind][sq]
    out = []
    for ray in rays:
        for dst in ray:
            out.append(dst)
            if board.placement[dst] is not None:
                break
    return out


def in_check(board: ChessBoard, color: Optional[int] = None) -> bool:
    color = board.turn if color is None else color
    return is_attacked(board, board.king_square(color), 1 - color)


# ---------------------------------------------------------------- moves

def pseudo_legal_moves(board: ChessBoard) -> Iterator[Move]:
    pl = board.placement
    me = board.turn
    them = 1 - me
    for sq, pc in enumerate(pl):
        if pc is None or color_of(pc) != me:
            continue
        kind = pc.upper()
        if kind == "P":
            yield from _pawn_moves(board, sq)
        elif kind in "NK":
            for dst in (KNIGHT_TARGETS if kind == "N" else KING_TARGETS)[sq]:
                tgt = pl[dst]
                if tgt is None or color_of(tgt) == them:
                    yield Move(sq, dst, capture=tgt is not None)
        else:
            rays = {"R": ROOK_RAYS, "B": BISHOP_RAYS, "Q": QUEEN_RAYS}[kind][sq]
            for ray in rays:
                for dst in ray:
                    tgt = pl[dst]
                    if tgt is None:
                        yield Move(sq, dst)
                        continue
                    if color_of(tgt) == them:
                        yield Move(sq, dst, capture=True)
                    break
    yield from _castle_moves(board)


def _pawn_moves(board: ChessBoard, sq: int) -> Iterator[Move]:
    pl = board.placement
    me = board.turn
    fwd = 8 if me == WHITE else -8
    start_rank = 1 if me == WHITE else 6
    last_rank = 7 if me == WHITE else 0
    r = sq // 8

    def emit(dst, **flags):
        if dst // 8 == last_rank:
            for promo in PROMOTION_ORDER:
                yield Move(sq, dst, promotion=promo, **flags)
        else:
            yield Move(sq, dst, **flags)

    one = sq + fwd
    if pl[one] is None:
        yield from emit(one)
        two = one + fwd
        if r == start_rank and pl[two] is None:
            yield Move(sq, two)
    for dst in PAWN_ATTACKS[me][sq]:
        tgt = pl[dst]
        if tgt is not None and color_of(tgt) != me:
            yield from emit(dst, capture=True)
        elif dst == board.ep_square:
            yield Move(sq, dst, capture=True, en_passant=True)


def _castle_moves(board: ChessBoard) -> Iterator[Move]:
    pl = board.placement
    me = board.turn
    them = 1 - me
    base = 0 if me == WHITE else 56
    king_sq = base + 4
    if pl[king_sq] != colored("K", me):
        return
    ks, qs = (0, 1) if me == WHITE else (2, 3)
    if not (board.castling[ks] or board.castling[qs]):
        return
    if is_attacked(board, king_sq, them):
        return
    if (board.castling[ks] and pl[base + 7] == colored("R", me)
            and pl[base + 5] is None and pl[base + 6] is None
            and not is_attacked(board, base + 5, them) and not is_attacked(board, base + 6, them)):
        yield Move(king_sq, base + 6, castle=True)
    if (board.castling[qs] and pl[base] == colored("R", me)
            and pl[base + 1] is None and pl[base + 2] is None and pl[base + 3] is None
            and not is_attacked(board, base + 3, them) and not is_attacked(board, base + 2, them)):
        yield Move(king_sq, base + 2, castle=True)


def make_move(board: ChessBoard, move: Move) -> ChessBoard:
    """Apply a move without checking legality."""
    pl = list(board.placement)
    pc = pl[move.from_sq]
    me = board.turn
    captured = pl[move.to_sq]
    pl[move.from_sq] = None
    if move.en_passant:
        pl[move.to_sq - (8 if me == WHITE else -8)] = None
        captured = colored("P", 1 - me)
    pl[move.to_sq] = colored(move.promotion, me) if move.promotion else pc
    if move.castle:
        base = move.from_sq - 4
        if move.to_sq == base + 6:
            pl[base + 5], pl[base + 7] = pl[base + 7], None
        else:
            pl[base + 3], pl[base] = pl[base], None
    rights = list(board.castling)
    if pc.upper() == "K":
        if me == WHITE:
            rights[0] = rights[1] = False
        else:
            rights[2] = rights[3] = False
    for i, rook_sq in enumerate(CASTLE_ROOK_SQUARES):
        if move.from_sq == rook_sq or move.to_sq == rook_sq:
            rights[i] = False
    ep = None
    if pc.upper() == "P" and abs(move.to_sq - move.from_sq) == 16:
        ep = (move.from_sq + move.to_sq) // 2
    halfmove = 0 if pc.upper() == "P" or captured is not None else board.halfmove + 1
    fullmove = board.fullmove + (1 if me == BLACK else 0)
    return ChessBoard(tuple(pl), 1 - me, tuple(rights), ep, halfmove, fullmove)


def legal_moves(board: ChessBoard) -> list:
    """Legal moves ordered by (from-square, to-square, promotion kind)."""
    board.validate()
    me = board.turn
    out = []
    for mv in pseudo_legal_moves(board):
        nxt = make_move(board, mv)
        if not is_attacked(nxt, nxt.king_square(me), 1 - me):
            out.append(mv)
    out.sort(key=Move.sort_key)
    return out


def perft(board: ChessBoard, depth: int) -> int:
    if depth < 0:
        raise ValueError("depth must be non-negative")
    if depth == 0:
        return 1
    moves = legal_moves(board)
    if depth == 1:
        return len(moves)
    return sum(perft(make_move(board, mv), depth - 1) for mv in moves)


# ---------------------------------------------------------------- SAN

def san(board: ChessBoard, move: Move, legal: Optional[list] = None) -> str:
    """Standard algebraic notation for a legal move, including check suffixes."""
    legal = legal_moves(board) if legal is None else legal
    pc = board.placement[move.from_sq]
    kind = pc.upper()
    if move.castle:
        text = "O-O" if move.to_sq % 8 == 6 else "O-O-O"
    elif kind == "P":
        text = ""
        if move.capture:
            text = FILES[move.from_sq % 8] + "x"
        text += square_name(move.to_sq)
        if move.promotion:
            text += "=" + move.promotion
    else:
        rivals = [m for m in legal if m.to_sq == move.to_sq and m.from_sq != move.from_sq
                  and board.placement[m.from_sq] == pc]
        dis = ""
        if rivals:
            if all(m.from_sq % 8 != move.from_sq % 8 for m in rivals):
                dis = FILES[move.from_sq % 8]
            elif all(m.from_sq // 8 != move.from_sq // 8 for m in rivals):
                dis = str(move.from_sq // 8 + 1)
            else:
                dis = square_name(move.from_sq)
        text = kind + dis + ("x" if move.capture else "") + square_name(move.to_sq)
    nxt = make_move(board, move)
    if in_check(nxt):
        text += "#" if not legal_moves(nxt) else "+"
    return text


_CASTLE_RE = re.compile(r"^(O-O-O|O-O|0-0-0|0-0)[+#]?[!?]*$")
_PIECE_RE = re.compile(r"^([NBRQK])([a-h])?([1-8])?x?([a-h][1-8])[+#]?[!?]*$")
_PAWN_RE = re.compile(r"^([a-h])(?:x([a-h][1-8])|([1-8]))(?:=?([NBRQ]))?[+#]?[!?]*$")


def parse_san(text: str, offset: int = 0) -> dict:
    """Syntactic SAN check. Returns the pieces needed to resolve the move."""
    m = _CASTLE_RE.match(text)
    if m:
        return {"castle": "long" if m.group(1) in ("O-O-O", "0-0-0") else "short"}
    m = _PIECE_RE.match(text)
    if m:
        return {"kind": m.group(1), "file": m.group(2), "rank": m.group(3),
                "to": square(m.group(4)), "promotion": None}
    m = _PAWN_RE.match(text)
    if m:
        file_ = m.group(1)
        dest = m.group(2) or (file_ + m.group(3))
        capture = m.group(2) is not None
        return {"kind": "P", "file": file_ if capture else None, "rank": None,
                "to": square(dest), "promotion": m.group(4), "pawn_push_file": None if capture else file_}
    raise ParseError(f"malformed SAN token {text!r}", offset)


def resolve_san(board: ChessBoard, text: str, legal: Optional[list] = None) -> Move:
    spec = parse_san(text)
    legal = legal_moves(board) if legal is None else legal
    if "castle" in spec:
        target_file = 6 if spec["castle"] == "short" else 2
        found = [m for m in legal if m.castle and m.to_sq % 8 == target_file]
    else:
        kind = spec["kind"]
        found = []
        for m in legal:
            pc = board.placement[m.from_sq]
            if pc.upper() != kind or m.to_sq != spec["to"] or m.castle:
                continue
            if spec["file"] is not None and FILES[m.from_sq % 8] != spec["file"]:
                continue
            if spec["rank"] is not None and str(m.from_sq // 8 + 1) != spec["rank"]:
                continue
            if kind == "P":
                if spec.get("pawn_push_file") is not None and m.capture:
                    continue
                if m.promotion != spec["promotion"]:
                    continue
            found.append(m)
    if not found:
        raise LegalityError(f"illegal move {text!r} in position {board.fen()}")
    if len(found) > 1:
        raise AmbiguityError(f"ambiguous move {text!r}: {[m.uci() for m in found]}")
    return found[0]


def apply_san(board: ChessBoard, text: str) -> ChessBoard:
    return make_move(board, resolve_san(board, text))


# ---------------------------------------------------------------- PGN

RESULTS = {"1-0", "0-1", "1/2-1/2", "*"}
_MOVE_NUMBER_RE = re.compile(r"(\d+)\.")


@dataclass(frozen=True)
class PgnGame:
    text: str
    san_moves: tuple
    period_positions: tuple

    def __len__(self) -> int:
        return len(self.san_moves)


def parse_pgn(text: str, validate: bool = True) -> PgnGame:
    """Parse compact movetext such as ``"1.e4 e5 2.Nf3"``.

    Move numbers must count up from 1 and precede white's moves; a trailing
    result token is ignored. With ``validate`` the moves are replayed.
    """
    moves, periods = [], []
    expected = 1
    tokens = [(m.start(), m.group()) for m in re.finditer(r"\S+", text)]
    for i, (start, tok) in enumerate(tokens):
        if tok in RESULTS and i == len(tokens) - 1:
            break
        pos = 0
        num = _MOVE_NUMBER_RE.match(tok)
        if num:
            if int(num.group(1)) != expected or len(moves) != 2 * (expected - 1):
                raise ParseError(f"unexpected move number {num.group(1)}", start)
            if tok[num.end():num.end() + 1] == ".":
                raise ParseError("black continuation dots are not supported", start + num.end())
            periods.append(start + num.end() - 1)
            expected += 1
            pos = num.end()
            if pos == len(tok):
                continue
        elif len(moves) % 2 == 0:
            raise ParseError(f"white move {tok!r} without move number", start)
        san_text = tok[pos:]
        parse_san(san_text, start + pos)
        moves.append(san_text)
    game = PgnGame(text, tuple(moves), tuple(periods))
    if validate:
        replay(game)
    return game


def replay(game: PgnGame) -> list:
    """Boards after each ply, starting with the initial position."""
    board = ChessBoard.initial()
    boards = [board]
    for i, text in enumerate(game.san_moves):
        try:
            board = apply_san(board, text)
        except AmbiguityError as exc:
            raise AmbiguityError(str(exc), i) from None
        except LegalityError as exc:
            raise LegalityError(str(exc), i) from None
        boards.append(board)
    return boards


def boards_at_periods(game: PgnGame) -> list:
    """``(char offset of '.', board)`` pairs; each board has white to move."""
    boards = replay(game)
    return [(pos, boards[2 * k]) for k, pos in enumerate(game.period_positions)]
