"""Pronoun-translation evaluation toolkit.

Mines pronoun mismatches from reference/system parallel text, generates
single-substitution noisy candidates, trains a pairwise neural ranking
measure over pronoun representations, and computes inter-annotator
agreement statistics over human judgments.
"""

__version__ = "0.1.0"
