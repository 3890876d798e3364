"""Grapheme inventory with a distinguished blank symbol.

Text is encoded to integer label ids and back; the blank never appears in
encoded text and is rejected when decoding label sequences.  Graphemes are
Unicode scalar values, NFC-normalized on entry, so composed letters such as
"ç" count as single symbols.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field

BLANK_MARKER = "<blank>"
SPACE_MARKER = "<space>"


class AlphabetError(ValueError):
    pass


@dataclass(frozen=True)
class Alphabet:
    """Ordered grapheme inventory. Blank always sits at index 0."""

    symbols: tuple[str, ...]
    blank_index: int = 0
    space_index: int | None = None
    _index: dict[str, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise AlphabetError("alphabet symbols must be unique")
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.symbols)})

    def __len__(self) -> int:
        return len(self.symbols)

    @property
    def space(self) -> str | None:
        return None if self.space_index is None else self.symbols[self.space_index]

    def encode(self, text: str) -> list[int]:
        """Map text to label ids. Raises on any grapheme outside the inventory."""
        ids = []
        for pos, ch in enumerate(unicodedata.normalize("NFC", text)):
            idx = self._index.get(ch)
            if idx is None or idx == self.blank_index:
                raise AlphabetError(
                    f"grapheme {ch!r} at position {pos} is not encodable"
                )
            ids.append(idx)
        return ids

    def decode(self, ids) -> str:
        """Map label ids back to text. Blank ids are invalid here."""
        out = []
        for i in ids:
            i = int(i)
            if i == self.blank_index:
                raise AlphabetError("blank id cannot be decoded to text")
            if not 0 <= i < len(self.symbols):
                raise AlphabetError(f"label id {i} out of range for |V|={len(self)}")
            out.append(self.symbols[i])
        return "".join(out)


def build_alphabet(symbols, blank_marker: str = BLANK_MARKER) -> Alphabet:
    """Build an :class:`Alphabet` from an ordered symbol list.

    ``symbols`` must contain the blank marker exactly once; the blank is
    assigned index 0 and the remaining symbols keep their relative order.
    A literal space symbol, if present, is recorded as ``space_index``.
    """
    symbols = [unicodedata.normalize("NFC", s) if s != blank_marker else s for s in symbols]
    if not symbols:
        raise AlphabetError("alphabet must be nonempty")
    if symbols.count(blank_marker) != 1:
        raise AlphabetError(f"expected exactly one {blank_marker!r} in symbol list")
    rest = [s for s in symbols if s != blank_marker]
    if len(set(rest)) != len(rest):
        dup = next(s for s in rest if rest.count(s) > 1)
        raise AlphabetError(f"duplicate symbol {dup!r}")
    ordered = [blank_marker] + rest
    space_index = ordered.index(" ") if " " in ordered else None
    return Alphabet(symbols=tuple(ordered), blank_index=0, space_index=space_index)


def load_alphabet(path) -> Alphabet:
    """Read an alphabet file: UTF-8, one symbol per line.

    The line ``<blank>`` denotes the blank, ``<space>`` the space symbol.
    """
    symbols = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if not line:
                continue
            if line == SPACE_MARKER:
                symbols.append(" ")
            else:
                symbols.append(line)
    return build_alphabet(symbols)


def save_alphabet(alphabet: Alphabet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, sym in enumerate(alphabet.symbols):
            if i == alphabet.blank_index:
                fh.write(BLANK_MARKER + "\n")
            elif sym == " ":
                fh.write(SPACE_MARKER + "\n")
            else:
                fh.write(sym + "\n")
