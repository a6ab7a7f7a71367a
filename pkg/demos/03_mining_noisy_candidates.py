#!/usr/bin/env python3
"""Mining pronoun mismatches and generating single-substitution noisy
candidates from a reference/system pair.

The gold alignment below links the two mismatched pronouns; each mismatch
yields one noisy candidate differing from the reference in exactly that
token, with sentence-initial capitalization repaired.
"""

from anaphora_eval.corpus import Document, PronounLexicon, make_sentence
from anaphora_eval.miner import find_mismatches, harvest, make_noisy_candidate

REF = "He was creative, generous, funny, loving and talented, and I will miss him dearly."
SYS = "It was creative, generous, funny, affectionate and talented, and we will greatly miss."

lexicon = PronounLexicon.default()
ref = make_sentence("doc0", 0, REF)
sys_ = make_sentence("doc0", 0, SYS)

# links are (system position, reference position)
links = {(0, 0), (13, 13)}
mismatches = find_mismatches(ref, sys_, links, lexicon)
print("mismatches:", [(m.ref_form, m.sys_form) for m in mismatches])

for m in mismatches:
    noisy = make_noisy_candidate(ref, m)
    print(f"noisy ({m.ref_form} -> {m.sys_form}):", noisy.text)

# harvest wraps this into ranking pairs, deduplicated by content
pairs = harvest([Document("doc0", [ref])], [Document("doc0", [sys_])], [links],
                lexicon, mode="ref-vs-noisy", lang_pair="fr-en")
print(f"\n{len(pairs)} ranking pairs harvested")
for p in pairs:
    print(" ", p.id, p.mismatch_forms, "->", p.sys[:40] + "...")
