"""Alphabet of sequence symbols.

Symbols are referred to by integer ids 0..size-1 everywhere inside the
library; names only matter for serialization and display.  Next-symbol
distributions carry one extra trailing slot for the end-of-sequence outcome,
addressed through :attr:`Alphabet.end_id`.  The start marker never gets an id:
it only exists implicitly at oracle boundaries.
"""

from __future__ import annotations

from .errors import InvalidInput, InvalidSymbol


class Alphabet:
    """Ordered, immutable set of symbol names."""

    __slots__ = ("symbols", "_index")

    def __init__(self, symbols):
        symbols = tuple(str(s) for s in symbols)
        if not symbols:
            raise InvalidInput("alphabet must contain at least one symbol")
        if len(set(symbols)) != len(symbols):
            raise InvalidInput("alphabet symbols must be unique")
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(symbols)})

    def __setattr__(self, name, value):
        raise AttributeError("Alphabet is immutable")

    @classmethod
    def of_size(cls, n: int) -> "Alphabet":
        """Synthetic alphabet with names "0".."n-1", matching numeric datasets."""
        if n < 1:
            raise InvalidInput("alphabet size must be >= 1")
        return cls(str(i) for i in range(n))

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def end_id(self) -> int:
        """Index of the end-of-sequence outcome in next-symbol distributions."""
        return len(self.symbols)

    def id_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise InvalidSymbol(f"unknown symbol {name!r}") from None

    def check_ids(self, seq) -> None:
        for sym in seq:
            if not 0 <= sym < len(self.symbols):
                raise InvalidSymbol(
                    f"symbol id {sym} outside alphabet of size {len(self.symbols)}"
                )

    def __len__(self) -> int:
        return len(self.symbols)

    def __eq__(self, other) -> bool:
        return isinstance(other, Alphabet) and self.symbols == other.symbols

    def __hash__(self) -> int:
        return hash(self.symbols)

    def __repr__(self) -> str:
        return f"Alphabet({list(self.symbols)!r})"
