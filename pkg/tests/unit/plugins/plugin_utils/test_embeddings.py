# Copyright (c) 2024, ZPE Systems <zpesystems.com>
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

import numpy as np
import pytest
import sys

if not sys.warnoptions:
    import warnings

    warnings.simplefilter("ignore")

from ansible_collections.zpe.textcnn.plugins.plugin_utils.core_math import make_rng
from ansible_collections.zpe.textcnn.plugins.plugin_utils.embeddings import (
    OOV_RANGE,
    PAD_INDEX,
    EmbeddingGroup,
    Vocabulary,
    build_vocabulary,
    init_oov,
    load_text_vectors,
    load_word2vec_binary,
    random_group,
    write_text_vectors,
    write_word2vec_binary,
)
from ansible_collections.zpe.textcnn.plugins.plugin_utils.errors import (
    FormatError,
    UsageError,
)


@pytest.fixture(scope="function")
def vocab():
    return build_vocabulary([["good", "movie"], ["bad", "movie", "plot"]])


""" Tests for Vocabulary """


def test_build_vocabulary_first_occurrence_order(vocab):
    """Index 0 is padding, words follow in order of first appearance."""
    assert len(vocab) == 5
    assert vocab.tokens() == ["good", "movie", "bad", "plot"]
    assert vocab.index("good") == 1
    assert vocab.index("plot") == 4
    assert vocab.token(3) == "bad"


def test_build_vocabulary_empty():
    with pytest.raises(UsageError):
        build_vocabulary([[], []])


def test_vocabulary_unknown_token(vocab):
    assert "great" not in vocab
    with pytest.raises(UsageError):
        vocab.index("great")


@pytest.mark.parametrize("index", [-1, 5])
def test_vocabulary_index_out_of_range(vocab, index):
    with pytest.raises(UsageError):
        vocab.token(index)


def test_vocabulary_encode(vocab):
    assert vocab.encode(["movie", "bad"]) == [2, 3]


def test_vocabulary_equality(vocab):
    assert vocab == Vocabulary(["good", "movie", "bad", "plot"])
    assert vocab != Vocabulary(["movie", "good", "bad", "plot"])


""" Tests for Vocabulary """


""" Tests for EmbeddingGroup """


def test_embedding_group_zeroes_pad_row(vocab):
    table = np.ones((len(vocab), 3))
    group = EmbeddingGroup("g", vocab, table)
    assert np.array_equal(group.table[PAD_INDEX], np.zeros(3))
    assert group.dim == 3


def test_embedding_group_row_mismatch(vocab):
    with pytest.raises(UsageError):
        EmbeddingGroup("g", vocab, np.ones((2, 3)))


def test_embedding_group_empty_name(vocab):
    with pytest.raises(UsageError):
        EmbeddingGroup("", vocab, np.ones((len(vocab), 3)))


def test_embedding_group_copy_is_independent(vocab):
    group = EmbeddingGroup("g", vocab, np.ones((len(vocab), 2)), trainable=False)
    clone = group.copy()
    clone.table[1, 0] = 7.0
    assert group.table[1, 0] == 1.0
    assert clone.trainable is False


def test_embedding_group_keeps_caller_table(vocab):
    table = np.ones((len(vocab), 2))
    group = EmbeddingGroup("g", vocab, table)
    assert np.array_equal(table, np.ones((len(vocab), 2)))
    assert np.array_equal(group.table[PAD_INDEX], np.zeros(2))


""" Tests for EmbeddingGroup """


""" Tests for init_oov and random_group """


def test_init_oov_range():
    v = init_oov(100, make_rng(0))
    assert v.shape == (100,)
    assert np.all(np.abs(v) <= OOV_RANGE)


def test_init_oov_invalid_dim():
    with pytest.raises(UsageError):
        init_oov(0, make_rng(0))


def test_random_group_deterministic(vocab):
    a = random_group("r", vocab, 4, make_rng(3))
    b = random_group("r", vocab, 4, make_rng(3))
    assert np.array_equal(a.table, b.table)
    assert a.oov_count == len(vocab) - 1


def test_random_group_dtype(vocab):
    group = random_group("r", vocab, 4, make_rng(3), dtype=np.float32)
    assert group.table.dtype == np.float32


""" Tests for init_oov and random_group """


""" Tests for load_word2vec_binary """


def test_load_word2vec_binary(tmp_path, vocab):
    """Known words take file vectors, unknown words get OOV vectors, extra file words are ignored."""
    path = str(tmp_path / "vectors.bin")
    vectors = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]], dtype=np.float32)
    write_word2vec_binary(path, ["good", "movie", "unseen"], vectors)

    group = load_word2vec_binary(path, vocab, make_rng(0), name="w2v")

    assert group.name == "w2v"
    assert group.dim == 3
    assert np.allclose(group.table[vocab.index("good")], [1.0, 2.0, 3.0])
    assert np.allclose(group.table[vocab.index("movie")], [4.0, 5.0, 6.0])
    assert group.oov_count == 2
    assert np.all(np.abs(group.table[vocab.index("plot")]) <= OOV_RANGE)


def test_load_word2vec_binary_without_trailing_newline(tmp_path, vocab):
    path = str(tmp_path / "vectors.bin")
    vectors = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
    write_word2vec_binary(path, ["bad", "plot"], vectors, trailing_newline=False)

    group = load_word2vec_binary(path, vocab, make_rng(0))
    assert np.allclose(group.table[vocab.index("plot")], [3.0, 4.0])


def test_load_word2vec_binary_truncated(tmp_path, vocab):
    path = str(tmp_path / "vectors.bin")
    vectors = np.array([[1.0, 2.0]], dtype=np.float32)
    write_word2vec_binary(path, ["good"], vectors)

    with open(path, "rb") as f:
        content = f.read()
    # header claims two records
    with open(path, "wb") as f:
        f.write(content.replace(b"1 2\n", b"2 2\n", 1))

    with pytest.raises(FormatError) as err:
        load_word2vec_binary(path, vocab, make_rng(0))
    assert "byte offset" in str(err.value)


def test_load_word2vec_binary_short_vector(tmp_path, vocab):
    path = str(tmp_path / "vectors.bin")
    with open(path, "wb") as f:
        f.write(b"1 4\ngood ")
        f.write(np.ones(2, dtype="<f4").tobytes())

    with pytest.raises(FormatError):
        load_word2vec_binary(path, vocab, make_rng(0))


@pytest.mark.parametrize("header", [b"", b"abc\n", b"3\n", b"1 0\n"])
def test_load_word2vec_binary_bad_header(tmp_path, vocab, header):
    path = str(tmp_path / "vectors.bin")
    with open(path, "wb") as f:
        f.write(header)

    with pytest.raises(FormatError):
        load_word2vec_binary(path, vocab, make_rng(0))


""" Tests for load_word2vec_binary """


""" Tests for load_text_vectors """


def test_load_text_vectors(tmp_path, vocab):
    path = str(tmp_path / "vectors.txt")
    write_text_vectors(path, ["movie", "plot"], np.array([[0.5, -0.5], [1.5, 2.5]]))

    group = load_text_vectors(path, vocab, make_rng(0), name="glove", trainable=False)

    assert group.trainable is False
    assert np.allclose(group.table[vocab.index("movie")], [0.5, -0.5])
    assert np.allclose(group.table[vocab.index("plot")], [1.5, 2.5])
    assert group.oov_count == 2


def test_load_text_vectors_with_header(tmp_path, vocab):
    path = str(tmp_path / "vectors.txt")
    write_text_vectors(path, ["good"], np.array([[1.0, 2.0, 3.0]]), header=True)

    group = load_text_vectors(path, vocab, make_rng(0))
    assert group.dim == 3
    assert np.allclose(group.table[vocab.index("good")], [1.0, 2.0, 3.0])


def test_load_text_vectors_inconsistent_dimension(tmp_path, vocab):
    path = tmp_path / "vectors.txt"
    path.write_text("good 1.0 2.0\nbad 1.0\n", encoding="utf-8")

    with pytest.raises(FormatError) as err:
        load_text_vectors(str(path), vocab, make_rng(0))
    assert "line 2" in str(err.value)


def test_load_text_vectors_unparseable(tmp_path, vocab):
    path = tmp_path / "vectors.txt"
    path.write_text("good 1.0 x\n", encoding="utf-8")

    with pytest.raises(FormatError):
        load_text_vectors(str(path), vocab, make_rng(0))


def test_load_text_vectors_unparseable_out_of_vocabulary(tmp_path, vocab):
    """Records of words outside the vocabulary are validated too."""
    path = tmp_path / "vectors.txt"
    path.write_text("good 1.0 2.0\nzebra 1.0 abc\n", encoding="utf-8")

    with pytest.raises(FormatError) as err:
        load_text_vectors(str(path), vocab, make_rng(0))
    assert "line 2" in str(err.value)


def test_load_text_vectors_empty(tmp_path, vocab):
    path = tmp_path / "vectors.txt"
    path.write_text("", encoding="utf-8")

    with pytest.raises(FormatError):
        load_text_vectors(str(path), vocab, make_rng(0))


""" Tests for load_text_vectors """
