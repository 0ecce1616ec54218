from ragforge.tokenizer import (
    DEFAULT_TOKENIZER_ID,
    default_tokenizer,
    detokenize,
    token_count,
)


def test_whitespace_split():
    assert default_tokenizer("the quick brown fox") == ["the", "quick", "brown", "fox"]


def test_punctuation_detached():
    assert default_tokenizer("Hello, world!") == ["Hello", ",", "world", "!"]
    assert default_tokenizer("(note)") == ["(", "note", ")"]


def test_interior_punctuation_kept():
    # hyphens and apostrophes inside a word stay put
    assert default_tokenizer("it's a well-known fact") == \
        ["it's", "a", "well-known", "fact"]


def test_empty_and_whitespace_only():
    assert default_tokenizer("") == []
    assert default_tokenizer("   \n\t  ") == []


def test_unicode_whitespace():
    assert default_tokenizer("a b c") == ["a", "b", "c"]


def test_token_count_matches_tokenizer():
    text = "One, two; three... four!"
    assert token_count(text) == len(default_tokenizer(text))


def test_detokenize_single_space():
    assert detokenize(["a", "b", ","]) == "a b ,"
    assert detokenize([]) == ""


def test_tokenizer_id():
    assert DEFAULT_TOKENIZER_ID == "whitespace.v1"


def test_pure_punctuation_token():
    # boundary punctuation detaches one character at a time
    assert default_tokenizer("...") == [".", ".", "."]
    assert default_tokenizer("-- !") == ["-", "-", "!"]
    assert default_tokenizer("word...") == ["word", ".", ".", "."]
