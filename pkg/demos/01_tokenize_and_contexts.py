#!/usr/bin/env python3
"""Tokenization, pronoun lookup, and context windows.

Every token keeps exact character offsets into its source line, so a
sentence can be rebuilt byte-for-byte and pronoun spans can be highlighted
without re-tokenizing.
"""

from anaphora_eval.corpus import (Document, PronounLexicon, context_of,
                                  detokenize, make_sentence, pronoun_indices,
                                  tokenize)

line = "He was creative, generous, funny, loving and talented, and I will miss him dearly."

tokens = tokenize(line)
print("tokens:", [t.surface for t in tokens])
print("round-trip ok:", detokenize(line, tokens) == line)

# contractions split at the rightmost clitic; n't keeps the n
print("contraction:", [t.surface for t in tokenize("I didn't want to say that")])

# the closed-class lexicon drives pronoun slot extraction
lexicon = PronounLexicon.default()
sent = make_sentence("doc0", 0, line)
idx = pronoun_indices(sent, lexicon)
print("pronouns:", [(i, sent.tokens[i].surface) for i in idx])
print("error kind he/it:", lexicon.error_kind("he", "it"))
print("error kind they/it:", lexicon.error_kind("they", "it"))

# context windows never cross document boundaries and hold the k=2
# immediately preceding sentences
doc = Document("doc0", [make_sentence("doc0", i, f"Sentence number {i} .")
                        for i in range(5)])
window = context_of(doc, 4, k=2)
print("context of sentence 4:", window.texts())
print("context of sentence 0:", context_of(doc, 0, k=2).texts())
