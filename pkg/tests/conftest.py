import pytest

from anaphora_eval.corpus import PronounLexicon, make_sentence

FIG1_REF = ("He was creative, generous, funny, loving and talented, "
            "and I will miss him dearly.")
FIG1_SYS = ("It was creative, generous, funny, affectionate and talented, "
            "and we will greatly miss.")
FIG1_NOISY_1 = ("It was creative, generous, funny, loving and talented, "
                "and I will miss him dearly.")
FIG1_NOISY_2 = ("He was creative, generous, funny, loving and talented, "
                "and we will miss him dearly.")
# sys->ref token links for the two pronoun mismatches (It<->He, we<->I)
FIG1_GOLD_LINKS = {(0, 0), (13, 13)}


@pytest.fixture(scope="session")
def lexicon():
    return PronounLexicon.default()


@pytest.fixture
def fig1_ref():
    return make_sentence("doc0", 0, FIG1_REF)


@pytest.fixture
def fig1_sys():
    return make_sentence("doc0", 0, FIG1_SYS)
