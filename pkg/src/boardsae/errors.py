"""Exception types shared across the package."""


class BoardSaeError(Exception):
    pass


class DimensionError(BoardSaeError, ValueError):
    pass


class NumericError(BoardSaeError, FloatingPointError):
    pass


class ParseError(BoardSaeError, ValueError):
    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (offset {offset})")
        self.offset = offset


class LegalityError(BoardSaeError, ValueError):
    def __init__(self, message, move_index=None):
        super().__init__(message if move_index is None else f"{message} (move {move_index})")
        self.move_index = move_index


class AmbiguityError(LegalityError):
    pass


class StateError(BoardSaeError, ValueError):
    pass


class VocabError(BoardSaeError, ValueError):
    def __init__(self, message, position=None):
        super().__init__(message if position is None else f"{message} (position {position})")
        self.position = position


class ContextError(BoardSaeError, ValueError):
    pass


class FormatError(BoardSaeError, ValueError):
    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} at byte {offset}")
        self.offset = offset


class SizeError(BoardSaeError, ValueError):
    pass


class DegenerateDataError(BoardSaeError, ValueError):
    pass


class SplitOverlapError(BoardSaeError, ValueError):
    pass
