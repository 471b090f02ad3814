"""Tokenization, dataset loading, vocab construction, and embeddings."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rulefeat import (
    Dataset,
    Instance,
    Vocab,
    build_vocab,
    encode,
    load_dataset,
    load_embeddings,
    tokenize,
)
from rulefeat.corpus import NUM_RESERVED, PAD_INDEX, UNK_INDEX
from rulefeat.errors import EmptyDataset, EmptyLine, FormatError, ParseError


def mk(text, label=0, id=0):
    return Instance(id=id, tokens=tokenize(text), label=label)


class TestTokenize:
    def test_lowercase_whitespace_split(self):
        toks = tokenize("The  Movie\twas GOOD")
        assert [t.text for t in toks] == ["the", "movie", "was", "good"]

    def test_byte_spans_with_multibyte_chars(self):
        """Spans index the UTF-8 encoding, not the character sequence."""
        raw = "Héllo  wörld "
        toks = tokenize(raw)
        assert [t.text for t in toks] == ["héllo", "wörld"]
        assert toks[0].source_span == (0, 6)
        assert toks[1].source_span == (8, 14)

    def test_spans_slice_back_to_the_token(self):
        raw = "One  two\tTHREE"
        data = raw.encode("utf-8")
        for tok in tokenize(raw):
            a, b = tok.source_span
            assert data[a:b].decode("utf-8").lower() == tok.text

    def test_empty_line_raises(self):
        with pytest.raises(EmptyLine):
            tokenize("   \t ")

    @given(st.lists(st.text(alphabet="abcXYZ019_'!?,", min_size=1), min_size=1, max_size=8))
    def test_roundtrip_on_joined_words(self, words):
        toks = tokenize(" ".join(words))
        assert [t.text for t in toks] == [w.lower() for w in words]

    @given(st.text(min_size=1))
    def test_spans_always_decode_to_token_text(self, raw):
        try:
            toks = tokenize(raw)
        except EmptyLine:
            return
        data = raw.encode("utf-8")
        for tok in toks:
            a, b = tok.source_span
            assert data[a:b].decode("utf-8").lower() == tok.text
            assert not any(c.isspace() for c in tok.text)


class TestLoadDataset:
    def test_label_tab_text(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("1\tGreat fun\n\n0\tnot my thing\n", encoding="utf-8")
        ds = load_dataset(p)
        assert ds.size == 2
        assert [i.id for i in ds] == [0, 1]
        assert [i.label for i in ds] == [1, 0]
        assert ds.instances[0].text == "great fun"

    def test_text_tab_label(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("fine film\t1\n", encoding="utf-8")
        ds = load_dataset(p, fmt="text-tab-label")
        assert ds.instances[0].label == 1
        assert ds.instances[0].text == "fine film"

    def test_label_with_surrounding_spaces(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text(" 1 \tokay\n", encoding="utf-8")
        assert load_dataset(p).instances[0].label == 1

    @pytest.mark.parametrize(
        "line",
        ["1 no tab here", "1\ttwo\ttabs", "2\tbad label", "1\t   "],
    )
    def test_malformed_line_reports_position(self, tmp_path, line):
        p = tmp_path / "d.tsv"
        p.write_text("1\tfine\n" + line + "\n", encoding="utf-8")
        with pytest.raises(ParseError) as err:
            load_dataset(p)
        assert err.value.line == 2
        assert "line 2" in str(err.value)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("\n   \n", encoding="utf-8")
        with pytest.raises(EmptyDataset):
            load_dataset(p)

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            load_dataset(tmp_path / "d.tsv", fmt="csv")

    def test_duplicate_ids_rejected_by_dataset(self):
        inst = mk("hello", id=3)
        with pytest.raises(ValueError):
            Dataset(name="x", instances=(inst, inst))


class TestVocab:
    def test_frequency_then_alphabetical_order(self):
        ds = Dataset(name="v", instances=(mk("b a a c b a"),))
        vocab = build_vocab(ds)
        assert vocab.tokens == ("a", "b", "c")
        assert vocab.lookup("a") == NUM_RESERVED
        assert vocab.lookup("b") == NUM_RESERVED + 1

    def test_tie_breaks_alphabetically(self):
        ds = Dataset(name="v", instances=(mk("b b a a"),))
        assert build_vocab(ds).tokens == ("a", "b")

    def test_min_freq_filters(self):
        ds = Dataset(name="v", instances=(mk("a a b"),))
        vocab = build_vocab(ds, min_freq=2)
        assert vocab.tokens == ("a",)
        assert "b" not in vocab

    def test_oov_maps_to_unk(self):
        vocab = Vocab(tokens=("seen",))
        assert vocab.lookup("unseen") == UNK_INDEX
        assert vocab.size == 1 + NUM_RESERVED

    def test_duplicate_tokens_rejected(self):
        with pytest.raises(ValueError):
            Vocab(tokens=("x", "x"))

    def test_accepts_plain_iterable_of_instances(self):
        vocab = build_vocab([mk("p q"), mk("q r", id=1)])
        assert set(vocab.tokens) == {"p", "q", "r"}


class TestEncode:
    def test_pads_to_requested_length(self):
        vocab = Vocab(tokens=("a", "b"))
        enc = encode(mk("a b"), vocab, pad_to=5)
        assert enc.length == 2
        assert enc.indices.tolist() == [2, 3, 0, 0, 0]
        assert enc.indices.dtype == np.int64

    def test_long_instance_not_truncated(self):
        vocab = Vocab(tokens=("a",))
        enc = encode(mk("a a a"), vocab, pad_to=2)
        assert enc.indices.tolist() == [2, 2, 2]
        assert enc.length == 3

    def test_oov_and_label(self):
        vocab = Vocab(tokens=("a",))
        enc = encode(mk("a zzz", label=1), vocab, pad_to=2)
        assert enc.indices.tolist() == [2, UNK_INDEX]
        assert enc.label == 1

    def test_pad_index_is_zero(self):
        assert PAD_INDEX == 0


class TestLoadEmbeddings:
    def write(self, tmp_path, body):
        p = tmp_path / "vecs.txt"
        p.write_text(body, encoding="utf-8")
        return p

    def test_known_rows_and_fallbacks(self, tmp_path):
        p = self.write(tmp_path, "3 2\ngood 0.10 -0.20\nbad 0.30 0.40\ngood 9.9 9.9\n")
        vocab = Vocab(tokens=("good", "ugly"))
        table = load_embeddings(p, vocab, seed=5)
        assert table.dim == 2
        assert table.matrix.shape == (vocab.size, 2)
        np.testing.assert_array_equal(table.matrix[PAD_INDEX], [0.0, 0.0])
        # first occurrence of a duplicated word wins
        np.testing.assert_allclose(table.matrix[vocab.lookup("good")], [0.10, -0.20])
        for row in (UNK_INDEX, vocab.lookup("ugly")):
            assert np.all(np.abs(table.matrix[row]) < 0.25)
            assert np.any(table.matrix[row] != 0.0)

    def test_deterministic_fallback_draws(self, tmp_path):
        p = self.write(tmp_path, "1 2\ngood 0.1 0.2\n")
        vocab = Vocab(tokens=("good", "missing"))
        a = load_embeddings(p, vocab, seed=9).matrix
        b = load_embeddings(p, vocab, seed=9).matrix
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize(
        "body,line",
        [
            ("just-one-field\n", 1),
            ("x 2\n", 1),
            ("1 2\nword 0.1\n", 2),
            ("1 2\nword 0.1 nan\n", 2),
            ("2 2\nword 0.1 0.2\n", 1),
        ],
    )
    def test_format_errors_carry_line(self, tmp_path, body, line):
        p = self.write(tmp_path, body)
        with pytest.raises(FormatError) as err:
            load_embeddings(p, Vocab(tokens=("word",)))
        assert err.value.line == line
