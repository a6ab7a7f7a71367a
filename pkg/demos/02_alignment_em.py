#!/usr/bin/env python3
"""Word alignment by EM: IBM Model 1, the diagonal prior, symmetrization.

The corpus log-likelihood is non-decreasing within each EM phase; the
trained table then drives a Viterbi decode in both directions, and the two
link sets are merged with grow-diag-final-and.
"""

from anaphora_eval.aligner import (em_train, flip_links, format_pharaoh,
                                   symmetrize, viterbi_align)

corpus = [
    ("la maison".split(), "the house".split()),
    ("la fleur".split(), "the flower".split()),
    ("la maison bleue".split(), "the blue house".split()),
]

model = em_train(corpus, iterations=10, mode="diagonal", warmup=5)
print("p(the | la)      =", round(model.ttable["la"]["the"], 4))
print("p(house | maison) =", round(model.ttable["maison"]["house"], 4))
print("log-likelihood trace:", [round(x, 3) for x in model.ll_history])

pair = ("la maison bleue".split(), "the blue house".split())
forward = viterbi_align(pair, model)

reverse_model = em_train([(t, s) for s, t in corpus], iterations=10,
                         mode="diagonal", warmup=5)
backward = flip_links(viterbi_align((pair[1], pair[0]), reverse_model))

merged = symmetrize(forward, backward, "grow-diag-final-and")
print("forward links: ", format_pharaoh(forward))
print("backward links:", format_pharaoh(backward))
print("symmetrized:   ", format_pharaoh(merged))
