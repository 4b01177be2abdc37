"""Word/id bookkeeping with reserved boundary tokens.

Every vocabulary contains the reserved tokens ``<s>``, ``</s>`` and
``<unk>`` at ids 0, 1 and 2.  Sentences are framed internally as
``<s> w1 ... wn </s>``; ``<s>`` is input-only while ``</s>`` is a predicted
token, and any out-of-vocabulary word maps to ``<unk>``.
"""

from __future__ import annotations

__all__ = ["RESERVED", "SENTENCE_START", "SENTENCE_END", "UNKNOWN", "Vocabulary", "build_vocabulary"]

SENTENCE_START = "<s>"
SENTENCE_END = "</s>"
UNKNOWN = "<unk>"
RESERVED = (SENTENCE_START, SENTENCE_END, UNKNOWN)


class Vocabulary:
    """Bidirectional word/id map with per-word corpus counts."""

    def __init__(self, words, counts=None):
        self.words = list(RESERVED)
        seen = set(self.words)
        for w in words:
            if w in seen:
                if w in RESERVED:
                    continue
                raise ValueError(f"duplicate word {w!r}")
            self.words.append(w)
            seen.add(w)
        self.ids = {w: i for i, w in enumerate(self.words)}
        self.counts = [0] * len(self.words)
        if counts:
            for w, c in counts.items():
                if c < 0:
                    raise ValueError(f"negative count for {w!r}")
                if w in self.ids:
                    self.counts[self.ids[w]] = c

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self.ids

    @property
    def start_id(self):
        return self.ids[SENTENCE_START]

    @property
    def end_id(self):
        return self.ids[SENTENCE_END]

    @property
    def unk_id(self):
        return self.ids[UNKNOWN]

    def id_of(self, word):
        """Id of `word`, falling back to the unknown token."""
        return self.ids.get(word, self.ids[UNKNOWN])

    def word_of(self, word_id):
        return self.words[word_id]

    def frame(self, tokens):
        """Token ids for ``<s> tokens </s>`` with unknown-word fallback."""
        ids = [self.ids[SENTENCE_START]]
        ids.extend(self.id_of(t) for t in tokens)
        ids.append(self.ids[SENTENCE_END])
        return ids


def build_vocabulary(sentences, max_size=None):
    """Count words over an iterable of token lists and rank by frequency.

    With `max_size` set, the top ``max_size - 3`` words are kept (three slots
    go to the reserved tokens) and everything else falls back to ``<unk>``.
    Ties in frequency break by first occurrence in the corpus.
    """
    counts = {}
    first_seen = {}
    n_tokens = 0
    for tokens in sentences:
        for tok in tokens:
            n_tokens += 1
            counts[tok] = counts.get(tok, 0) + 1
            if tok not in first_seen:
                first_seen[tok] = len(first_seen)
    if n_tokens == 0:
        raise ValueError("empty corpus")
    for tok in RESERVED:
        counts.pop(tok, None)

    ranked = sorted(counts, key=lambda w: (-counts[w], first_seen[w]))
    if max_size is not None:
        if max_size < len(RESERVED) + 1:
            raise ValueError(f"max_size must be at least {len(RESERVED) + 1}")
        ranked = ranked[: max_size - len(RESERVED)]
    return Vocabulary(ranked, counts)


def read_corpus(path):
    """Yield token lists from a one-sentence-per-line UTF-8 file."""
    with open(path, encoding="utf-8") as f:
        for line in f:
            tokens = line.split()
            if tokens:
                yield tokens
