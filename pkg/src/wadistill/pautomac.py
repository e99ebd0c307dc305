"""Competition-style sequence files.

First line: ``<count> <alphabet_size>``.  Every following line is one
sequence: its length, then that many symbol ids, space-separated.
"""

from __future__ import annotations

from .errors import ParseError


def parse_pautomac_sequences(path):
    """-> (list of id tuples, alphabet size). Validates counts and id ranges."""
    try:
        fh = open(path, encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read sequence file: {e}") from None
    with fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ParseError("header must be '<count> <alphabet_size>'", line=1)
        try:
            count, alphabet_size = int(header[0]), int(header[1])
        except ValueError:
            raise ParseError("header fields must be integers", line=1) from None
        if count < 0 or alphabet_size < 1:
            raise ParseError("header values out of range", line=1)
        sequences = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            try:
                ids = [int(x) for x in parts]
            except ValueError:
                raise ParseError("sequence line must be integers", line=lineno) from None
            if ids[0] != len(ids) - 1:
                raise ParseError(
                    f"declared length {ids[0]} but found {len(ids) - 1} symbols",
                    line=lineno,
                )
            seq = tuple(ids[1:])
            for sym in seq:
                if not 0 <= sym < alphabet_size:
                    raise ParseError(
                        f"symbol id {sym} outside alphabet of size {alphabet_size}",
                        line=lineno,
                    )
            sequences.append(seq)
    if len(sequences) != count:
        raise ParseError(f"header declared {count} sequences, found {len(sequences)}")
    return sequences, alphabet_size


def write_pautomac_sequences(path, sequences, alphabet_size) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(sequences)} {alphabet_size}\n")
        for seq in sequences:
            fh.write(" ".join([str(len(seq)), *map(str, seq)]) + "\n")
