import unicodedata

import pytest
from hypothesis import given, strategies as st

from ctckit.alphabet import (
    AlphabetError,
    build_alphabet,
    load_alphabet,
    save_alphabet,
)
from conftest import TURKISH_LETTERS


def turkish_alphabet():
    return build_alphabet(["<blank>"] + TURKISH_LETTERS + ["'", " "])


def test_turkish_inventory_is_32_symbols():
    a = turkish_alphabet()
    assert len(a) == 32
    assert a.blank_index == 0
    assert a.space_index is not None and a.symbols[a.space_index] == " "


def test_minimal_inventory():
    a = build_alphabet(["<blank>", "a"])
    assert len(a) == 2
    assert a.blank_index == 0
    assert a.space_index is None


def test_duplicate_symbol_rejected():
    with pytest.raises(AlphabetError, match="duplicate"):
        build_alphabet(["<blank>", "a", "a"])


def test_missing_blank_rejected():
    with pytest.raises(AlphabetError, match="<blank>"):
        build_alphabet(["a", "b"])


def test_blank_moved_to_front():
    a = build_alphabet(["a", "<blank>", "b"])
    assert a.symbols == ("<blank>", "a", "b")


def test_encode_simple():
    a = build_alphabet(["<blank>", "a", "b", " "])
    assert a.encode("ab") == [1, 2]
    assert a.encode("") == []
    assert a.encode("a b") == [1, 3, 2]


def test_decode_simple():
    a = build_alphabet(["<blank>", "a", "b", " "])
    assert a.decode([1, 2]) == "ab"
    assert a.decode([]) == ""


def test_decode_rejects_blank_and_out_of_range():
    a = build_alphabet(["<blank>", "a", "b"])
    with pytest.raises(AlphabetError, match="blank"):
        a.decode([0])
    with pytest.raises(AlphabetError, match="out of range"):
        a.decode([7])


def test_encode_reports_offending_grapheme_and_position():
    a = build_alphabet(["<blank>", "a", "b"])
    with pytest.raises(AlphabetError, match=r"'x' at position 1"):
        a.encode("ax")


def test_nfc_normalization_on_encode():
    a = turkish_alphabet()
    decomposed = unicodedata.normalize("NFD", "çağrı")
    assert a.decode(a.encode(decomposed)) == "çağrı"


@given(st.text(alphabet=TURKISH_LETTERS + ["'", " "], max_size=40))
def test_round_trip(text):
    a = turkish_alphabet()
    assert a.decode(a.encode(text)) == text


@given(st.text(alphabet=TURKISH_LETTERS + ["'", " "], max_size=40))
def test_encode_never_emits_blank(text):
    a = turkish_alphabet()
    assert a.blank_index not in a.encode(text)


def test_file_round_trip(tmp_path):
    a = turkish_alphabet()
    path = tmp_path / "alphabet.txt"
    save_alphabet(a, path)
    b = load_alphabet(path)
    assert b.symbols == a.symbols
    assert b.blank_index == a.blank_index
    assert b.space_index == a.space_index
    # the on-disk form spells out the blank and space markers
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "<blank>"
    assert "<space>" in lines
