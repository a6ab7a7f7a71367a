"""Template-based synthetic ranking corpus with oracle-corrupted pronouns.

Each sentence contains an antecedent of known gender and number followed by
a matching pronoun; the corrupted twin swaps that pronoun for one that
violates gender, number, animacy, or syntactic role.  The rule that built
the corruption is the oracle for the correct ranking.
"""

from __future__ import annotations

import numpy as np

from .miner import LABEL_REF_BETTER, RankingPair

MASC, FEM, NEUT, PLUR = "masc", "fem", "neut", "plur"

_ANTECEDENTS = {
    MASC: ["John", "Peter", "Tom", "James", "Mark", "the king", "the boy",
           "her brother", "the old man", "our uncle"],
    FEM: ["Mary", "Alice", "Susan", "Laura", "Emma", "the queen", "the girl",
          "his sister", "the old woman", "our aunt"],
    NEUT: ["the table", "the car", "the house", "the plan", "the book",
           "the machine", "the bridge", "the letter", "the garden", "the clock"],
    PLUR: ["the boys", "the girls", "the dogs", "the children", "the workers",
           "my parents", "the soldiers", "the neighbours", "the students",
           "the birds"],
}

# role -> class -> form
_PRONOUNS = {
    "subj": {MASC: "he", FEM: "she", NEUT: "it", PLUR: "they"},
    "obj": {MASC: "him", FEM: "her", NEUT: "it", PLUR: "them"},
    "poss": {MASC: "his", FEM: "her", NEUT: "its", PLUR: "their"},
    "refl": {MASC: "himself", FEM: "herself", NEUT: "itself", PLUR: "themselves"},
    # every plural antecedent below is animate, so "who" is its relative
    "rel": {MASC: "who", FEM: "who", NEUT: "which", PLUR: "who"},
}

_VERBS_PAST = ["smiled", "won", "waited", "arrived", "left", "stumbled"]
_PLACES = ["the station", "the market", "the office", "the park", "the harbour"]
_OBJECTS = ["the keys", "the tickets", "the money", "the letters", "the tools"]

# Templates yield (tokens, pronoun_token_index).  {A} is the antecedent,
# {P} the pronoun slot; verb agreement follows the antecedent of the
# correct sentence, so a number corruption also breaks agreement, just as
# real system output does.
_TEMPLATES = [
    ("subj", "{A} lost {O} because {P} {was} careless ."),
    ("subj", "{A} said that {P} would come to {L} tomorrow ."),
    ("subj", "everyone admired {A} because {P} had been so brave ."),
    ("subj", "after the meeting ended , {A} {verb} and then {P} went home ."),
    ("subj", "{A} {verb} at {L} , and later {P} {was} glad about it ."),
    ("obj", "the crowd cheered for {A} and praised {P} loudly ."),
    ("obj", "we visited {A} at {L} and thanked {P} for {O} ."),
    ("poss", "when the rain started , {A} picked up {P} share of {O} ."),
    ("poss", "{A} {verb} , and {P} luck did not go unnoticed ."),
    ("refl", "{A} prepared {P} for the long journey ahead ."),
    ("rel", "{A} , {P} {was} near {L} , {verb} twice ."),
]

_KINDS = ("gender", "number", "animacy", "syntactic-role")


def _other_class(cls: str, role: str, kind: str, rng: np.random.Generator) -> tuple[str, str]:
    """Pick a corrupted (role, class) for the given error kind; the surface
    form is guaranteed to differ from the correct one."""
    correct = _PRONOUNS[role][cls]
    if kind == "syntactic-role":
        roles = [r for r in ("subj", "obj", "poss", "refl")
                 if r != role and _PRONOUNS[r][cls] != correct]
        if roles:
            return rng.choice(roles), cls
        kind = "gender"
    if kind == "gender":
        pool = [c for c in (MASC, FEM, NEUT) if c != cls and _PRONOUNS[role][c] != correct]
        if not pool:
            pool = [PLUR]
    elif kind == "number":
        pool = [PLUR] if cls != PLUR else [MASC, FEM, NEUT]
        pool = [c for c in pool if _PRONOUNS[role][c] != correct]
    else:  # animacy: only meaningful for who/which; fall back to a class flip
        pool = [c for c in (MASC, FEM, NEUT, PLUR) if _PRONOUNS[role][c] != correct]
    return role, pool[int(rng.integers(len(pool)))]


def _render(template: str, antecedent: str, pronoun: str, cls: str,
            rng: np.random.Generator) -> tuple[str, int]:
    was = "were" if cls == PLUR else "was"
    text = template.format(A=antecedent, P="\x00", was=was,
                           L=_PLACES[int(rng.integers(len(_PLACES)))],
                           O=_OBJECTS[int(rng.integers(len(_OBJECTS)))],
                           verb=_VERBS_PAST[int(rng.integers(len(_VERBS_PAST)))])
    words = text.split(" ")
    slot = words.index("\x00")
    words[slot] = pronoun
    words[0] = words[0][:1].upper() + words[0][1:]
    return " ".join(words), slot


def generate_corpus(n: int, seed: int = 0, lang_pair: str = "synth-en") -> list[RankingPair]:
    """Generate n ranking pairs (correct sentence vs single-pronoun
    corruption), NC-ready with empty contexts."""
    rng = np.random.default_rng(seed)
    pairs: list[RankingPair] = []
    classes = [MASC, FEM, NEUT, PLUR]
    for i in range(n):
        role, template = _TEMPLATES[int(rng.integers(len(_TEMPLATES)))]
        cls = classes[int(rng.integers(len(classes)))]
        if role == "rel":
            kind = "animacy"
        else:
            kind = _KINDS[int(rng.integers(3))]  # gender/number/syntactic-role
        antecedent = _ANTECEDENTS[cls][int(rng.integers(len(_ANTECEDENTS[cls])))]
        correct = _PRONOUNS[role][cls]
        bad_role, bad_cls = _other_class(cls, role, kind, rng)
        wrong = _PRONOUNS[bad_role][bad_cls]
        ref_text, slot = _render(template, antecedent, correct, cls, rng)
        sys_words = ref_text.split(" ")
        sys_words[slot] = wrong.capitalize() if slot == 0 else wrong
        sys_text = " ".join(sys_words)
        # every space-separated word is exactly one token, so the word slot
        # is also the token index
        pron_idx = [slot]
        pairs.append(RankingPair(
            id=f"synth-{i:06d}", lang_pair=lang_pair,
            ref_context=[], ref=ref_text, sys_context=[], sys=sys_text,
            ref_pronouns=pron_idx, sys_pronouns=list(pron_idx),
            mismatch_forms=[(correct, wrong)], source_text=None,
            label=LABEL_REF_BETTER))
    return pairs


def split_corpus(pairs, train_frac: float = 0.8, dev_frac: float = 0.1,
                 seed: int = 0):
    """Deterministic shuffle-and-split into (train, dev, test)."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pairs))
    shuffled = [pairs[i] for i in order]
    n_train = int(len(pairs) * train_frac)
    n_dev = int(len(pairs) * dev_frac)
    return (shuffled[:n_train], shuffled[n_train:n_train + n_dev],
            shuffled[n_train + n_dev:])
