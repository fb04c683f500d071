"""文本生成指标：BLEU-1..4（语料级）、ROUGE-L、METEOR（仅精确匹配）、CIDEr-D

所有指标在大小写折叠、空白切分后的 token 上计算。
"""

import math
from collections import Counter
from typing import Dict, List, Sequence, Tuple

from ..common.errors import EmptyCorpus, LengthMismatch

METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5
CIDER_SIGMA = 6.0
CIDER_N = 4


def tokens(text: str) -> List[str]:
    return text.casefold().split()


def ngrams(toks: Sequence[str], n: int) -> Counter:
    return Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))


def _check_corpus(hypotheses: Sequence, references: Sequence) -> None:
    if len(hypotheses) != len(references):
        raise LengthMismatch(f"假设数 {len(hypotheses)} 与参考数 {len(references)} 不一致")
    if not hypotheses:
        raise EmptyCorpus("语料为空")


# ---- BLEU ----

def bleu(hypotheses: Sequence[str], references: Sequence[str], n: int = 4) -> float:
    """语料级 BLEU-n：各阶裁剪计数按语料求和，几何平均后乘以简短惩罚

    任一阶精度为 0 时返回 0。
    """
    if not 1 <= n <= 4:
        raise ValueError(f"BLEU 阶数必须在 1..4: {n}")
    _check_corpus(hypotheses, references)
    matched = [0] * n
    total = [0] * n
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h, r = tokens(hyp), tokens(ref)
        hyp_len += len(h)
        ref_len += len(r)
        for k in range(1, n + 1):
            hc, rc = ngrams(h, k), ngrams(r, k)
            matched[k - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            total[k - 1] += max(len(h) - k + 1, 0)
    if any(m == 0 for m in matched) or any(t == 0 for t in total):
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matched, total)) / n
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_p)


# ---- ROUGE-L ----

def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(hyp: str, ref: str) -> float:
    """基于 LCS 的 F 值（β = 1）"""
    h, r = tokens(hyp), tokens(ref)
    lcs = lcs_length(h, r)
    if lcs == 0:
        return 0.0
    p = lcs / len(h)
    rec = lcs / len(r)
    return 2 * p * rec / (p + rec)


# ---- METEOR ----

def _align_greedy(h: Sequence[str], r: Sequence[str]) -> Tuple[int, int]:
    """贪心对齐：优先延续上一匹配，否则取最左未用位置

    匹配数总是最大，延续数作为精确搜索的初始下界。
    """
    used = set()
    last = -1
    matches = conts = 0
    for tok in h:
        options = [j for j, t in enumerate(r) if t == tok and j not in used]
        if not options:
            last = -1
            continue
        j = last + 1 if last >= 0 and (last + 1) in options else options[0]
        if last >= 0 and j == last + 1:
            conts += 1
        used.add(j)
        matches += 1
        last = j
    return matches, conts


def _continuation_bounds(h: Sequence[str], r: Sequence[str]) -> List[int]:
    """bounds[i]: 从 h[i] 起的 bigram 在参考中的裁剪计数，即 i 之后可获得延续数的上界"""
    ref_bigrams = Counter(zip(r, r[1:]))
    seen: Counter = Counter()
    bounds = [0] * (len(h) + 1)
    value = 0
    for i in range(len(h) - 2, -1, -1):
        g = (h[i], h[i + 1])
        if seen[g] < ref_bigrams[g]:
            value += 1
        seen[g] += 1
        bounds[i] = value
    return bounds


def _align_exact(h: Sequence[str], r: Sequence[str]) -> Tuple[int, int]:
    """精确对齐：先最大化匹配数，再最大化相邻延续数（即最小化 chunk 数）

    最大匹配数由各 token 的计数下确界直接给出；只有假设中多于参考的 token 允许跳过，
    其余必须匹配。在此约束下按假设顺序分支定界搜索延续数，
    状态 (i, last, used) 记录到达时的最好延续数，用于剪除重复状态。

    Returns:
        (matches, continuations)
    """
    h_count, r_count = Counter(h), Counter(r)
    matches = sum(min(c, r_count[t]) for t, c in h_count.items())
    if matches == 0:
        return 0, 0
    positions: Dict[str, List[int]] = {}
    for j, tok in enumerate(r):
        positions.setdefault(tok, []).append(j)
    skips = {t: c - min(c, r_count[t]) for t, c in h_count.items()}
    bounds = _continuation_bounds(h, r)
    best = [_align_greedy(h, r)[1]]
    if best[0] == bounds[0]:
        return matches, best[0]
    seen: Dict[Tuple[int, int, int], int] = {}
    n, n_ref = len(h), len(r)

    def search(i: int, last: int, used: int, conts: int) -> None:
        if i == n:
            best[0] = max(best[0], conts)
            return
        tok = h[i]
        nxt = last + 1
        can_continue = last >= 0 and nxt < n_ref and r[nxt] == tok and not used >> nxt & 1
        if conts + can_continue + bounds[i] <= best[0]:
            return
        key = (i, last, used)
        if seen.get(key, -1) >= conts:
            return
        seen[key] = conts
        if can_continue:
            search(i + 1, nxt, used | (1 << nxt), conts + 1)
        for j in positions.get(tok, ()):
            if (can_continue and j == nxt) or used >> j & 1:
                continue
            search(i + 1, j, used | (1 << j), conts)
        if skips[tok] > 0:
            skips[tok] -= 1
            search(i + 1, -1, used, conts)
            skips[tok] += 1

    search(0, -1, 0, 0)
    return matches, best[0]


def meteor_alignment(h: Sequence[str], r: Sequence[str]) -> Tuple[int, int]:
    """返回 (matches, chunks)"""
    matches, conts = _align_exact(tuple(h), tuple(r))
    return matches, matches - conts


def meteor(hyp: str, ref: str) -> float:
    """F_mean·(1 - γ·(chunks/matches)^β)，F_mean = P·R / (α·P + (1-α)·R)"""
    h, r = tokens(hyp), tokens(ref)
    if not h or not r:
        return 0.0
    matches, chunks = meteor_alignment(h, r)
    if matches == 0:
        return 0.0
    p = matches / len(h)
    rec = matches / len(r)
    f_mean = p * rec / (METEOR_ALPHA * p + (1 - METEOR_ALPHA) * rec)
    penalty = METEOR_GAMMA * (chunks / matches) ** METEOR_BETA
    return f_mean * (1 - penalty)


# ---- CIDEr-D ----

def _cider_vector(counts: List[Counter], df: Counter, log_n_docs: float):
    vec = []
    norms = []
    for n_counts in counts:
        v = {g: tf * (log_n_docs - math.log(max(1.0, df[g]))) for g, tf in n_counts.items()}
        vec.append(v)
        norms.append(math.sqrt(sum(x * x for x in v.values())))
    return vec, norms


def _cider_sim(vh, vr, nh, nr, len_h: int, len_r: int) -> List[float]:
    delta = float(len_h - len_r)
    out = []
    for n in range(CIDER_N):
        if not vh[n] or not vr[n] or nh[n] == 0 or nr[n] == 0:
            out.append(0.0)
            continue
        val = sum(min(x, vr[n].get(g, 0.0)) * vr[n].get(g, 0.0) for g, x in vh[n].items())
        val /= nh[n] * nr[n]
        val *= math.exp(-(delta ** 2) / (2 * CIDER_SIGMA ** 2))
        out.append(val)
    return out


def cider_d_scores(hypotheses: Sequence[str], reference_sets: Sequence[Sequence[str]]) -> List[float]:
    """逐样本 CIDEr-D；文档频率取自提供的参考集合"""
    _check_corpus(hypotheses, reference_sets)
    ref_counts = [[[ngrams(tokens(r), n) for n in range(1, CIDER_N + 1)] for r in refs] for refs in reference_sets]
    df: Counter = Counter()
    for refs in ref_counts:
        seen = set()
        for per_ref in refs:
            for n_counts in per_ref:
                seen.update(n_counts.keys())
        df.update(seen)
    log_n_docs = math.log(float(len(reference_sets)))

    scores = []
    for hyp, refs, refs_raw in zip(hypotheses, ref_counts, reference_sets):
        h = tokens(hyp)
        vh, nh = _cider_vector([ngrams(h, n) for n in range(1, CIDER_N + 1)], df, log_n_docs)
        if not refs:
            scores.append(0.0)
            continue
        total = 0.0
        for per_ref, raw in zip(refs, refs_raw):
            vr, nr = _cider_vector(per_ref, df, log_n_docs)
            sims = _cider_sim(vh, vr, nh, nr, len(h), len(tokens(raw)))
            total += sum(sims) / CIDER_N
        scores.append(10.0 * total / len(refs))
    return scores


def cider_d(hypotheses: Sequence[str], reference_sets: Sequence[Sequence[str]]) -> float:
    """语料平均 CIDEr-D（×10）"""
    scores = cider_d_scores(hypotheses, reference_sets)
    return sum(scores) / len(scores)
