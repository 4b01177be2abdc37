"""Text generation by ancestral sampling from a trained model.

Each position samples a class from the network's class distribution, then a
word from the fixed membership distribution of that class.  Generation
starts from the sentence-start token and stops at the sentence-end token or
after `max_tokens` words.  Output is fully determined by the seed.
"""

from __future__ import annotations

import numpy as np

__all__ = ["sample_text"]


def _sample(rng, cumulative):
    r = rng.random() * cumulative[-1]
    return min(int(np.searchsorted(cumulative, r, side="right")), len(cumulative) - 1)


def sample_text(network, seed, max_tokens, count=1):
    """Generate `count` sentences; returns lists of tokens without framing."""
    if max_tokens < 0 or count < 0:
        raise ValueError("max_tokens and count must be non-negative")
    rng = np.random.default_rng(seed)
    classes = network.classes
    vocab = network.vocab
    member_ids = [np.asarray(ms, dtype=np.int64) for ms in classes.members]
    member_cum = [np.cumsum(classes.membership[ids]) for ids in member_ids]

    sentences = []
    for _ in range(count):
        tokens = []
        state = network.initial_state(1)
        word = vocab.start_id
        while len(tokens) < max_tokens:
            probs, state = network.step(state, np.asarray([word]))
            c = _sample(rng, np.cumsum(probs[0]))
            members = member_ids[c]
            word = int(members[0]) if members.size == 1 else int(members[_sample(rng, member_cum[c])])
            if word == vocab.end_id:
                break
            tokens.append(vocab.word_of(word))
        sentences.append(tokens)
    return sentences
