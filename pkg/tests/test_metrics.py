import itertools
import random

import pytest

from anaphora_eval.errors import DataError
from anaphora_eval.metrics import (NOISY_BETTER, REF_BETTER, TIE,
                                   AgreementReport, JudgmentRecord,
                                   agreement_by_pronoun_pair, agreement_report,
                                   avg_pct_ref, gwet_ac1, normalize_judgments,
                                   pronoun_pair_error_report, read_judgments,
                                   write_judgments)

REF_FIRST = ("reference", "noisy")
NOISY_FIRST = ("noisy", "reference")


def rec(item, annotator, choice, order=REF_FIRST):
    return JudgmentRecord(item_id=item, annotator_id=annotator,
                          displayed_order=order, choice=choice)


class TestNormalizeJudgments:
    def test_choice_a_with_reference_shown_first(self):
        assignments, _ = normalize_judgments([rec("i1", "a1", "A")])
        assert assignments["i1"]["a1"] == REF_BETTER

    def test_choice_b_with_reference_shown_first(self):
        assignments, _ = normalize_judgments([rec("i1", "a1", "B")])
        assert assignments["i1"]["a1"] == NOISY_BETTER

    def test_blinding_inverts_with_order(self):
        assignments, _ = normalize_judgments([rec("i1", "a1", "A", NOISY_FIRST)])
        assert assignments["i1"]["a1"] == NOISY_BETTER

    def test_invalid_vote_excludes_whole_item(self):
        records = [rec("i1", "a1", "A"), rec("i1", "a2", "invalid"),
                   rec("i1", "a3", "B"), rec("i2", "a1", "A")]
        assignments, excluded = normalize_judgments(records)
        assert "i1" not in assignments and "i2" in assignments
        assert excluded == {"neither": 0, "invalid": 1}

    def test_neither_vote_excludes_whole_item(self):
        records = [rec("i1", "a1", "neither"), rec("i2", "a1", "A")]
        _, excluded = normalize_judgments(records)
        assert excluded["neither"] == 1

    def test_resubmission_last_wins(self):
        records = [rec("i1", "a1", "A"), rec("i1", "a1", "B")]
        assignments, _ = normalize_judgments(records)
        assert assignments["i1"]["a1"] == NOISY_BETTER

    def test_missing_displayed_order_rejected(self):
        from anaphora_eval.metrics import record_from_dict
        with pytest.raises(DataError):
            record_from_dict({"item_id": "i", "annotator_id": "a", "choice": "A"})


def two_rater_fixture(n_agree=9, n_disagree=1):
    records = []
    for i in range(n_agree):
        records += [rec(f"i{i}", "a1", "A"), rec(f"i{i}", "a2", "A")]
    for i in range(n_agree, n_agree + n_disagree):
        records += [rec(f"i{i}", "a1", "A"), rec(f"i{i}", "a2", "B")]
    return records


class TestGwetAC1:
    def test_perfect_agreement(self):
        assignments, _ = normalize_judgments(two_rater_fixture(10, 0))
        assert gwet_ac1(assignments, [REF_BETTER, NOISY_BETTER]) == pytest.approx(1.0)

    def test_nine_of_ten_hand_value(self):
        # p_a = 0.9; pi = (0.95, 0.05); p_e = 2*0.95*0.05 = 0.095
        # AC1 = (0.9 - 0.095) / (1 - 0.095)
        assignments, _ = normalize_judgments(two_rater_fixture())
        expected = (0.9 - 0.095) / (1 - 0.095)
        assert gwet_ac1(assignments, [REF_BETTER, NOISY_BETTER]) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.8895, abs=1e-4)

    def test_three_raters_unanimous(self):
        records = []
        for i in range(6):
            for a in ("a1", "a2", "a3"):
                records.append(rec(f"i{i}", a, "A"))
        assignments, _ = normalize_judgments(records)
        assert gwet_ac1(assignments, [REF_BETTER, NOISY_BETTER, TIE]) == pytest.approx(1.0)

    def test_category_relabel_invariance(self):
        rnd = random.Random(8)
        items = {}
        cats = ["c1", "c2", "c3"]
        for i in range(12):
            items[f"i{i}"] = {f"a{r}": rnd.choice(cats) for r in range(3)}
        base = gwet_ac1(items, cats)
        for perm in itertools.permutations(cats):
            mapping = dict(zip(cats, perm))
            relabeled = {item: {r: mapping[c] for r, c in votes.items()}
                         for item, votes in items.items()}
            assert gwet_ac1(relabeled, cats) == pytest.approx(base, abs=1e-12)

    def test_requires_two_raters(self):
        with pytest.raises(ValueError):
            gwet_ac1({"i1": {"a1": REF_BETTER}}, [REF_BETTER, NOISY_BETTER])

    def test_unanimity_iff_one(self):
        rnd = random.Random(10)
        for _ in range(20):
            items = {}
            for i in range(6):
                votes = {f"a{r}": rnd.choice([REF_BETTER, NOISY_BETTER]) for r in range(2)}
                items[f"i{i}"] = votes
            ac1 = gwet_ac1(items, [REF_BETTER, NOISY_BETTER])
            unanimous = all(len(set(v.values())) == 1 for v in items.values())
            assert (ac1 == pytest.approx(1.0)) == unanimous


class TestAvgPctRef:
    def test_all_reference(self):
        assignments, _ = normalize_judgments(two_rater_fixture(10, 0))
        assert avg_pct_ref(assignments) == pytest.approx(1.0)

    def test_mean_over_annotators(self):
        records = []
        # a1 prefers reference 3/5, a2 prefers reference 4/5
        for i in range(5):
            records.append(rec(f"i{i}", "a1", "A" if i < 3 else "B"))
            records.append(rec(f"i{i}", "a2", "A" if i < 4 else "B"))
        assignments, _ = normalize_judgments(records)
        assert avg_pct_ref(assignments) == pytest.approx((0.6 + 0.8) / 2)

    def test_tie_votes_excluded_from_denominator(self):
        records = [rec("i1", "a1", "A"), rec("i2", "a1", "tie"), rec("i3", "a1", "A")]
        assignments, _ = normalize_judgments(records)
        assert avg_pct_ref(assignments) == pytest.approx(1.0)


class TestAgreementReport:
    def test_excl_ties_drops_whole_items(self):
        records = two_rater_fixture(8, 0)
        records += [rec("t1", "a1", "tie"), rec("t1", "a2", "A")]
        report = agreement_report(records)
        # incl-ties sees 9 items, excl-ties only the 8 tie-free ones
        assert report.n_items == 9
        assert report.ac1_excl_ties == pytest.approx(1.0)
        assert report.ac1_incl_ties < 1.0

    def test_round_trip_dict(self):
        report = agreement_report(two_rater_fixture())
        again = AgreementReport.from_dict(report.to_dict())
        assert again == report

    def test_counts(self):
        records = two_rater_fixture(9, 1)
        records += [rec("x1", "a1", "invalid"), rec("x2", "a2", "neither")]
        report = agreement_report(records)
        assert report.n_items == 10
        assert report.n_annotators == 2
        assert report.excluded == {"neither": 1, "invalid": 1}


class TestByPronounPair:
    def test_single_pair_unanimous(self):
        assignments, _ = normalize_judgments(two_rater_fixture(5, 0))
        forms = {f"i{i}": ("he", "it") for i in range(5)}
        table = agreement_by_pronoun_pair(assignments, forms)
        ac1, pct, n = table[("he", "it")]
        assert ac1 == pytest.approx(1.0)
        assert pct == pytest.approx(1.0)
        assert n == 5

    def test_threshold_policy(self):
        assignments, _ = normalize_judgments(two_rater_fixture(5, 0))
        forms = {f"i{i}": ("he", "it") for i in range(5)}
        table = agreement_by_pronoun_pair(assignments, forms)
        ac1, pct, _ = table[("he", "it")]
        assert ac1 >= 0.8 and pct > 0.5  # retainable under the 0.8 threshold

    def test_low_agreement_pair_excluded(self):
        # that/it-style disagreement fixture: half the raters prefer each side
        records = []
        for i in range(6):
            records.append(rec(f"d{i}", "a1", "A"))
            records.append(rec(f"d{i}", "a2", "B" if i % 2 == 0 else "A"))
        assignments, _ = normalize_judgments(records)
        forms = {f"d{i}": ("that", "it") for i in range(6)}
        table = agreement_by_pronoun_pair(assignments, forms)
        ac1, _, _ = table[("that", "it")]
        assert ac1 < 0.8  # below the filter threshold

    def test_totals_match_items(self):
        assignments, _ = normalize_judgments(two_rater_fixture(7, 3))
        forms = {f"i{i}": ("he", "it") if i < 4 else ("she", "it") for i in range(10)}
        table = agreement_by_pronoun_pair(assignments, forms)
        assert sum(n for _, _, n in table.values()) == len(assignments)


class TestErrorReport:
    def test_accuracy_rows(self):
        from anaphora_eval.trainer import EvalReport, PairStat
        report = EvalReport(accuracy=0.75, n=8, tie_count=0,
                            per_pair={("he", "it"): PairStat(n=4, correct=3),
                                      ("they", "it"): PairStat(n=4, correct=4)})
        rows = pronoun_pair_error_report(report, seen_in_training={("he", "it")})
        by_forms = {(r["ref_form"], r["sys_form"]): r for r in rows}
        assert by_forms[("he", "it")]["accuracy"] == pytest.approx(0.75)
        assert by_forms[("he", "it")]["seen_in_training"] is True
        assert by_forms[("they", "it")]["accuracy"] == pytest.approx(1.0)
        assert by_forms[("they", "it")]["seen_in_training"] is False


class TestJudgmentIO:
    def test_round_trip(self, tmp_path):
        records = two_rater_fixture(3, 1)
        p = tmp_path / "judgments.jsonl"
        write_judgments(records, p)
        assert read_judgments(p) == records

    def test_bad_record(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text('{"item_id": "i"}\n', encoding="utf-8")
        with pytest.raises(DataError):
            read_judgments(p)
