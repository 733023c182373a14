"""Evaluation machinery: rank-based AUC for the discriminative tasks and
BLEU-n, METEOR, ROUGE-L, CIDEr for generation.

Tokenization rule shared by every generation metric: lowercase, split on
Unicode whitespace, strip leading/trailing punctuation per token. METEOR
runs exact then stem matching (no synonym stage); ROUGE-L uses beta=1.2;
CIDEr is the plain TF-IDF cosine variant scaled by 10. Those choices are
echoed in the report metadata so numbers stay comparable.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .core import IntegrityError, MetricUndefinedError

ROUGE_BETA = 1.2
METEOR_ALPHA = 0.9
METEOR_GAMMA = 0.5
METEOR_BETA = 3.0
CIDER_MAX_N = 4
CIDER_SCALE = 10.0


def _strip_edge_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def tokenize(text: str) -> list[str]:
    """Lowercase, split on Unicode whitespace, strip edge punctuation."""
    out = []
    for raw in text.lower().split():
        token = _strip_edge_punct(raw)
        if token:
            out.append(token)
    return out


@dataclass(frozen=True)
class GenerationEvalItem:
    """A top-1 generation paired with its non-empty reference set."""

    candidate: str
    references: tuple[str, ...]

    def __post_init__(self):
        if not self.references:
            raise IntegrityError("references must be non-empty")


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Probability a random positive outranks a random negative, ties
    counting one half (Mann-Whitney U with average ranks)."""
    if len(scores) != len(labels):
        raise MetricUndefinedError(f"got {len(scores)} scores but {len(labels)} labels")
    positives = sum(1 for y in labels if y == 1)
    negatives = sum(1 for y in labels if y == 0)
    if positives + negatives != len(labels):
        raise MetricUndefinedError("labels must be 0 or 1")
    if positives == 0 or negatives == 0:
        raise MetricUndefinedError("AUC needs at least one positive and one negative label")

    order = sorted(range(len(scores)), key=lambda i: scores[i])
    ranks = [0.0] * len(scores)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        avg_rank = (i + j) / 2.0 + 1.0  # 1-based average rank of the tie group
        for k in range(i, j + 1):
            ranks[order[k]] = avg_rank
        i = j + 1

    rank_sum = sum(r for r, y in zip(ranks, labels) if y == 1)
    u = rank_sum - positives * (positives + 1) / 2.0
    return u / (positives * negatives)


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _closest_ref_len(cand_len: int, ref_lens: Sequence[int]) -> int:
    return min(ref_lens, key=lambda r: (abs(r - cand_len), r))


def _brevity_penalty(cand_len: int, ref_len: int) -> float:
    if cand_len == 0:
        return 0.0
    if cand_len > ref_len:
        return 1.0
    return math.exp(1.0 - ref_len / cand_len)


def bleu_n(item: GenerationEvalItem, n: int) -> float:
    """Sentence BLEU: clipped modified n-gram precision, geometric mean over
    orders 1..n, brevity penalty against the closest reference length."""
    cand = tokenize(item.candidate)
    refs = [tokenize(r) for r in item.references]
    if not cand:
        return 0.0
    log_sum = 0.0
    for k in range(1, n + 1):
        counts = ngram_counts(cand, k)
        total = sum(counts.values())
        if total == 0:
            return 0.0
        max_ref: Counter = Counter()
        for ref in refs:
            for gram, c in ngram_counts(ref, k).items():
                if c > max_ref[gram]:
                    max_ref[gram] = c
        clipped = sum(min(c, max_ref[gram]) for gram, c in counts.items())
        if clipped == 0:
            return 0.0
        log_sum += math.log(clipped / total)
    bp = _brevity_penalty(len(cand), _closest_ref_len(len(cand), [len(r) for r in refs]))
    return bp * math.exp(log_sum / n)


def corpus_bleu_n(items: Sequence[GenerationEvalItem], n: int) -> float:
    """Corpus BLEU: n-gram statistics pooled over all items before the
    geometric mean and brevity penalty."""
    total_clipped = [0] * n
    total_counts = [0] * n
    cand_len_sum = 0
    ref_len_sum = 0
    for item in items:
        cand = tokenize(item.candidate)
        refs = [tokenize(r) for r in item.references]
        cand_len_sum += len(cand)
        if refs:
            ref_len_sum += _closest_ref_len(len(cand), [len(r) for r in refs])
        for k in range(1, n + 1):
            counts = ngram_counts(cand, k)
            max_ref: Counter = Counter()
            for ref in refs:
                for gram, c in ngram_counts(ref, k).items():
                    if c > max_ref[gram]:
                        max_ref[gram] = c
            total_counts[k - 1] += sum(counts.values())
            total_clipped[k - 1] += sum(min(c, max_ref[gram]) for gram, c in counts.items())
    if cand_len_sum == 0:
        return 0.0
    log_sum = 0.0
    for k in range(n):
        if total_counts[k] == 0 or total_clipped[k] == 0:
            return 0.0
        log_sum += math.log(total_clipped[k] / total_counts[k])
    bp = _brevity_penalty(cand_len_sum, ref_len_sum)
    return bp * math.exp(log_sum / n)


def _lcs_len(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(item: GenerationEvalItem, beta: float = ROUGE_BETA) -> float:
    """LCS F-measure, maximized over references."""
    cand = tokenize(item.candidate)
    if not cand:
        return 0.0
    best = 0.0
    for raw_ref in item.references:
        ref = tokenize(raw_ref)
        if not ref:
            continue
        lcs = _lcs_len(cand, ref)
        if lcs == 0:
            continue
        precision = lcs / len(cand)
        recall = lcs / len(ref)
        f = (1 + beta**2) * precision * recall / (recall + beta**2 * precision)
        best = max(best, f)
    return best


# ---------------------------------------------------------------------------
# Porter stemmer (original 1980 algorithm), needed for METEOR's stem stage.

_VOWELS = "aeiou"


def _is_cons(word: str, i: int) -> bool:
    ch = word[i]
    if ch in _VOWELS:
        return False
    if ch == "y":
        return i == 0 or not _is_cons(word, i - 1)
    return True


def _measure(stem: str) -> int:
    # number of VC sequences in [C](VC)^m[V]
    m = 0
    prev_vowel = False
    for i in range(len(stem)):
        if _is_cons(stem, i):
            if prev_vowel:
                m += 1
            prev_vowel = False
        else:
            prev_vowel = True
    return m


def _has_vowel(stem: str) -> bool:
    return any(not _is_cons(stem, i) for i in range(len(stem)))


def _ends_double_cons(word: str) -> bool:
    return (
        len(word) >= 2
        and word[-1] == word[-2]
        and _is_cons(word, len(word) - 1)
    )


def _ends_cvc(word: str) -> bool:
    if len(word) < 3:
        return False
    return (
        _is_cons(word, len(word) - 3)
        and not _is_cons(word, len(word) - 2)
        and _is_cons(word, len(word) - 1)
        and word[-1] not in "wxy"
    )


_STEP2 = [
    ("ational", "ate"), ("tional", "tion"), ("enci", "ence"), ("anci", "ance"),
    ("izer", "ize"), ("abli", "able"), ("alli", "al"), ("entli", "ent"),
    ("eli", "e"), ("ousli", "ous"), ("ization", "ize"), ("ation", "ate"),
    ("ator", "ate"), ("alism", "al"), ("iveness", "ive"), ("fulness", "ful"),
    ("ousness", "ous"), ("aliti", "al"), ("iviti", "ive"), ("biliti", "ble"),
]

_STEP3 = [
    ("icate", "ic"), ("ative", ""), ("alize", "al"), ("iciti", "ic"),
    ("ical", "ic"), ("ful", ""), ("ness", ""),
]

_STEP4 = [
    "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
    "ment", "ent", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
]


def porter_stem(word: str) -> str:
    word = word.lower()
    if len(word) <= 2:
        return word

    # step 1a
    if word.endswith("sses"):
        word = word[:-2]
    elif word.endswith("ies"):
        word = word[:-2]
    elif not word.endswith("ss") and word.endswith("s"):
        word = word[:-1]

    # step 1b
    if word.endswith("eed"):
        stem = word[:-3]
        if _measure(stem) > 0:
            word = word[:-1]
    else:
        stripped = None
        if word.endswith("ed") and _has_vowel(word[:-2]):
            stripped = word[:-2]
        elif word.endswith("ing") and _has_vowel(word[:-3]):
            stripped = word[:-3]
        if stripped is not None:
            word = stripped
            if word.endswith(("at", "bl", "iz")):
                word += "e"
            elif _ends_double_cons(word) and not word.endswith(("l", "s", "z")):
                word = word[:-1]
            elif _measure(word) == 1 and _ends_cvc(word):
                word += "e"

    # step 1c
    if word.endswith("y") and _has_vowel(word[:-1]):
        word = word[:-1] + "i"

    # steps 2 and 3; longest suffix listed first, condition checked after match
    for rules in (_STEP2, _STEP3):
        for suffix, replacement in rules:
            if word.endswith(suffix):
                stem = word[: len(word) - len(suffix)]
                if _measure(stem) > 0:
                    word = stem + replacement
                break

    # step 4
    for suffix in _STEP4:
        if word.endswith(suffix):
            stem = word[: len(word) - len(suffix)]
            if _measure(stem) > 1:
                word = stem
            break
    else:
        if word.endswith("ion") and len(word) > 3 and word[-4] in "st":
            stem = word[:-3]
            if _measure(stem) > 1:
                word = stem

    # step 5a
    if word.endswith("e"):
        stem = word[:-1]
        m = _measure(stem)
        if m > 1 or (m == 1 and not _ends_cvc(stem)):
            word = stem

    # step 5b
    if _measure(word) > 1 and _ends_double_cons(word) and word.endswith("l"):
        word = word[:-1]

    return word


def _align(cand: list[str], ref: list[str]) -> list[tuple[int, int]]:
    """Greedy leftmost one-to-one alignment: exact matches first, then stem
    matches over what remains."""
    matches: list[tuple[int, int]] = []
    used_ref: set[int] = set()
    unmatched: list[int] = []
    for i, token in enumerate(cand):
        for j, ref_token in enumerate(ref):
            if j not in used_ref and ref_token == token:
                matches.append((i, j))
                used_ref.add(j)
                break
        else:
            unmatched.append(i)
    cand_stems = [porter_stem(t) for t in cand]
    ref_stems = [porter_stem(t) for t in ref]
    for i in unmatched:
        for j in range(len(ref)):
            if j not in used_ref and ref_stems[j] == cand_stems[i]:
                matches.append((i, j))
                used_ref.add(j)
                break
    matches.sort()
    return matches


def _chunk_count(matches: list[tuple[int, int]]) -> int:
    chunks = 0
    prev = None
    for i, j in matches:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor(
    item: GenerationEvalItem,
    alpha: float = METEOR_ALPHA,
    gamma: float = METEOR_GAMMA,
    beta: float = METEOR_BETA,
) -> float:
    """Unigram alignment score with fragmentation penalty, maximized over
    references."""
    cand = tokenize(item.candidate)
    if not cand:
        return 0.0
    best = 0.0
    for raw_ref in item.references:
        ref = tokenize(raw_ref)
        if not ref:
            continue
        matches = _align(cand, ref)
        m = len(matches)
        if m == 0:
            continue
        precision = m / len(cand)
        recall = m / len(ref)
        f_mean = precision * recall / (alpha * precision + (1 - alpha) * recall)
        penalty = gamma * (_chunk_count(matches) / m) ** beta
        best = max(best, f_mean * (1.0 - penalty))
    return best


def _cosine(u: Counter, v: Counter) -> float:
    norm_u = math.sqrt(sum(x * x for x in u.values()))
    norm_v = math.sqrt(sum(x * x for x in v.values()))
    if norm_u == 0.0 or norm_v == 0.0:
        return 0.0
    dot = sum(x * v[g] for g, x in u.items())
    return dot / (norm_u * norm_v)


def cider(items: Sequence[GenerationEvalItem], max_n: int = CIDER_MAX_N) -> dict:
    """Plain CIDEr: TF-IDF n-gram cosine averaged over n=1..4 and over
    references, scaled by 10. Document frequencies come from the reference
    sets of the evaluated corpus."""
    if not items:
        raise MetricUndefinedError("cider needs at least one item")
    n_docs = len(items)
    df: list[Counter] = [Counter() for _ in range(max_n)]
    for item in items:
        seen: list[set] = [set() for _ in range(max_n)]
        for ref in item.references:
            tokens = tokenize(ref)
            for k in range(1, max_n + 1):
                seen[k - 1].update(ngram_counts(tokens, k).keys())
        for k in range(max_n):
            for gram in seen[k]:
                df[k][gram] += 1

    def tfidf_vec(tokens: list[str], k: int) -> Counter:
        vec: Counter = Counter()
        for gram, count in ngram_counts(tokens, k).items():
            vec[gram] = count * math.log(n_docs / max(1.0, df[k - 1][gram]))
        return vec

    per_item: list[float] = []
    for item in items:
        cand = tokenize(item.candidate)
        total = 0.0
        for k in range(1, max_n + 1):
            cand_vec = tfidf_vec(cand, k)
            sim = 0.0
            for ref in item.references:
                sim += _cosine(cand_vec, tfidf_vec(tokenize(ref), k))
            total += sim / len(item.references)
        per_item.append(CIDER_SCALE * total / max_n)
    return {"per_item": per_item, "mean": sum(per_item) / len(per_item)}


def evaluate_generations(
    items: Sequence[GenerationEvalItem], bleu_orders: Sequence[int] = (1, 2)
) -> dict:
    """Corpus report with every metric expressed as a percentage."""
    if not items:
        raise MetricUndefinedError("evaluate_generations needs at least one item")
    report: dict = {}
    for n in bleu_orders:
        report[f"bleu_{n}"] = 100.0 * corpus_bleu_n(items, n)
    report["meteor"] = 100.0 * sum(meteor(i) for i in items) / len(items)
    report["rouge_l"] = 100.0 * sum(rouge_l(i) for i in items) / len(items)
    # cider lives in [0, 10]; one more x10 puts it on the same 0-100 scale
    report["cider"] = 10.0 * cider(items)["mean"]
    report["params"] = {
        "tokenizer": "lowercase, split on whitespace, strip edge punctuation",
        "bleu": "corpus-level",
        "rouge_beta": ROUGE_BETA,
        "meteor": {
            "alpha": METEOR_ALPHA,
            "gamma": METEOR_GAMMA,
            "beta": METEOR_BETA,
            "stages": ["exact", "stem"],
            "alignment": "greedy leftmost",
        },
        "cider": "plain, x10, df from evaluated references",
    }
    return report
