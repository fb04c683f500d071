"""小型自回归报告解码器

输入序列为 [F 前缀; 提示词; <bos>; y_0 .. y_{T-2}]，输出最后 T 行的 logits（第 t 行预测 y_t）。
前缀行只看前缀；文本行看全部前缀以及不晚于自身的文本。Pre-LN 结构，输出层与词嵌入绑定。
"""

import json
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..common.errors import LengthMismatch, ShapeMismatch
from .attention import MultiHeadAttention
from .base import Grads, Module, glorot_uniform, with_prefix
from .functional import layer_norm, layer_norm_backward, log_softmax, relu, relu_backward, softmax

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
SPECIALS = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3

DEFAULT_PROMPT = "Generate a comprehensive radiology report for this chest X-ray:"


class Vocab:
    """词表：特殊符号在前，其余 token 按字母序"""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: List[str] = list(SPECIALS)
        for token in sorted(set(tokens) - set(SPECIALS)):
            self.itos.append(token)
        self.stoi: Dict[str, int] = {t: i for i, t in enumerate(self.itos)}

    @classmethod
    def build(cls, texts: Iterable[str], min_freq: int = 1) -> "Vocab":
        counts = Counter(tok for text in texts for tok in text.casefold().split())
        return cls(tok for tok, c in counts.items() if c >= min_freq)

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def save(self, path: str) -> None:
        """JSON Lines：每行 {"id": .., "token": ..}"""
        file_path = Path(path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        with open(file_path, "w", encoding="utf-8") as f:
            for i, token in enumerate(self.itos):
                f.write(json.dumps({"id": i, "token": token}, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str) -> "Vocab":
        with open(path, "r", encoding="utf-8") as f:
            rows = [json.loads(line) for line in f if line.strip()]
        rows.sort(key=lambda r: r["id"])
        itos = [r["token"] for r in rows]
        if tuple(itos[: len(SPECIALS)]) != SPECIALS:
            raise ValueError(f"词表文件特殊符号不正确: {path}")
        vocab = cls()
        vocab.itos = itos
        vocab.stoi = {t: i for i, t in enumerate(itos)}
        return vocab


def tokenize(text: str, vocab: Vocab) -> List[int]:
    return [vocab.id(tok) for tok in text.casefold().split()]


def detokenize(ids: Sequence[int], vocab: Vocab) -> str:
    return " ".join(vocab.itos[i] for i in ids if vocab.itos[i] not in SPECIALS)


class DecoderBlock(Module):
    """x1 = x + Attn(LN1(x))；x2 = x1 + FFN(LN2(x1))"""

    def __init__(self, d: int, heads: int, rng: np.random.Generator):
        super().__init__()
        self.params = {
            "ln1.g": np.ones(d), "ln1.b": np.zeros(d),
            "ln2.g": np.ones(d), "ln2.b": np.zeros(d),
            "ffn.W1": glorot_uniform(rng, d, 4 * d), "ffn.b1": np.zeros(4 * d),
            "ffn.W2": glorot_uniform(rng, 4 * d, d), "ffn.b2": np.zeros(d),
        }
        self.attn = MultiHeadAttention(d, d, d, heads, rng)
        self.children["attn"] = self.attn

    def forward(self, x: np.ndarray, mask: np.ndarray):
        p = self.params
        a, ln1 = layer_norm(x, p["ln1.g"], p["ln1.b"])
        att, attn_cache = self.attn.forward(a, a, mask)
        x1 = x + att
        b, ln2 = layer_norm(x1, p["ln2.g"], p["ln2.b"])
        pre = b @ p["ffn.W1"] + p["ffn.b1"]
        hid = relu(pre)
        x2 = x1 + hid @ p["ffn.W2"] + p["ffn.b2"]
        return x2, {"ln1": ln1, "attn": attn_cache, "ln2": ln2, "b": b, "pre": pre, "hid": hid}

    def backward(self, dx2: np.ndarray, cache: dict) -> Tuple[np.ndarray, Grads]:
        p = self.params
        grads: Grads = {
            "ffn.W2": cache["hid"].T @ dx2,
            "ffn.b2": dx2.sum(axis=0),
        }
        dpre = relu_backward(dx2 @ p["ffn.W2"].T, cache["pre"])
        grads["ffn.W1"] = cache["b"].T @ dpre
        grads["ffn.b1"] = dpre.sum(axis=0)
        db = dpre @ p["ffn.W1"].T
        dx1_ln, grads["ln2.g"], grads["ln2.b"] = layer_norm_backward(db, p["ln2.g"], cache["ln2"])
        dx1 = dx2 + dx1_ln
        dq, dkv, g = self.attn.backward(dx1, cache["attn"])
        grads.update(with_prefix(g, "attn"))
        dx_ln, grads["ln1.g"], grads["ln1.b"] = layer_norm_backward(dq + dkv, p["ln1.g"], cache["ln1"])
        return dx1 + dx_ln, grads


def prefix_causal_mask(n_prefix: int, n_text: int) -> np.ndarray:
    """前缀行只见前缀；文本行见前缀与因果文本"""
    n = n_prefix + n_text
    mask = np.zeros((n, n), dtype=bool)
    mask[:, :n_prefix] = True
    if n_text:
        mask[n_prefix:, n_prefix:] = np.tril(np.ones((n_text, n_text), dtype=bool))
    return mask


class ReportDecoder(Module):
    """token_embedding (|V|×D)，pos_embedding (n_positions×D)，L 个 block，ln_f"""

    def __init__(self, vocab_size: int, d: int, heads: int, layers: int, n_positions: int,
                 rng: Optional[np.random.Generator] = None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.vocab_size = vocab_size
        self.d = d
        self.n_positions = n_positions
        self.params = {
            "token_embedding": rng.normal(0.0, 0.02, size=(vocab_size, d)),
            "pos_embedding": rng.normal(0.0, 0.02, size=(n_positions, d)),
            "ln_f.g": np.ones(d),
            "ln_f.b": np.zeros(d),
        }
        self.blocks: List[DecoderBlock] = []
        for i in range(layers):
            block = DecoderBlock(d, heads, rng)
            self.blocks.append(block)
            self.children[f"block{i}"] = block

    def _run(self, F: np.ndarray, text_ids: Sequence[int], n_out: int):
        """运行整段序列，返回最后 n_out 个文本行的 logits"""
        F = np.asarray(F, dtype=np.float64)
        if F.ndim != 2 or F.shape[1] != self.d:
            raise ShapeMismatch(f"前缀矩阵形状 {F.shape} 与 D_dec={self.d} 不一致")
        text_ids = np.asarray(text_ids, dtype=np.int64)
        n_text = text_ids.shape[0]
        if n_text > self.n_positions:
            raise ShapeMismatch(f"文本长度 {n_text} 超过位置编码上限 {self.n_positions}")
        if text_ids.size and (text_ids.min() < 0 or text_ids.max() >= self.vocab_size):
            raise ShapeMismatch(f"token id 超出词表大小 {self.vocab_size}")
        p = self.params
        n_prefix = F.shape[0]
        x = np.concatenate([F, p["token_embedding"][text_ids] + p["pos_embedding"][:n_text]], axis=0)
        mask = prefix_causal_mask(n_prefix, n_text)
        caches = []
        for block in self.blocks:
            x, c = block.forward(x, mask)
            caches.append(c)
        h, ln_f = layer_norm(x, p["ln_f.g"], p["ln_f.b"])
        h_out = h[x.shape[0] - n_out:]
        logits = h_out @ p["token_embedding"].T
        cache = {"text_ids": text_ids, "n_prefix": n_prefix, "n_text": n_text, "n_out": n_out,
                 "blocks": caches, "ln_f": ln_f, "h_out": h_out}
        return logits, cache

    def forward(self, F: np.ndarray, prompt_ids: Sequence[int], target_ids: Sequence[int]):
        """教师强制前向

        Returns:
            (T×|V| logits, cache)
        """
        target_ids = list(target_ids)
        T = len(target_ids)
        if T < 1:
            raise ShapeMismatch("target_ids 不能为空")
        text = list(prompt_ids) + [BOS_ID] + target_ids[:-1]
        return self._run(F, text, T)

    def backward(self, dlogits: np.ndarray, cache: dict) -> Tuple[np.ndarray, Grads]:
        """返回 (dF, grads)"""
        p = self.params
        n_prefix, n_text, n_out = cache["n_prefix"], cache["n_text"], cache["n_out"]
        n = n_prefix + n_text
        dE = dlogits.T @ cache["h_out"]
        dh = np.zeros((n, self.d))
        dh[n - n_out:] = dlogits @ p["token_embedding"]
        dx, dg, db = layer_norm_backward(dh, p["ln_f.g"], cache["ln_f"])
        grads: Grads = {"ln_f.g": dg, "ln_f.b": db}
        for i in reversed(range(len(self.blocks))):
            dx, g = self.blocks[i].backward(dx, cache["blocks"][i])
            grads.update(with_prefix(g, f"block{i}"))
        dtext = dx[n_prefix:]
        np.add.at(dE, cache["text_ids"], dtext)
        dpos = np.zeros_like(p["pos_embedding"])
        dpos[:n_text] = dtext
        grads["token_embedding"] = dE
        grads["pos_embedding"] = dpos
        return dx[:n_prefix], grads

    def next_log_probs(self, F: np.ndarray, prompt_ids: Sequence[int], generated: Sequence[int]) -> np.ndarray:
        text = list(prompt_ids) + [BOS_ID] + list(generated)
        logits, _ = self._run(F, text, 1)
        return log_softmax(logits[0])

    def generate(self, F: np.ndarray, prompt_ids: Sequence[int], mode: str = "greedy",
                 max_len: int = 64, beam_k: int = 1) -> List[int]:
        return generate(F, prompt_ids, self, mode, max_len, beam_k)


def generation_loss(logits: np.ndarray, target_ids: Sequence[int], pad_id: int = PAD_ID) -> Tuple[float, np.ndarray]:
    """非 pad 位置的平均负对数似然

    Returns:
        (loss, dlogits)
    """
    target_ids = np.asarray(target_ids, dtype=np.int64)
    if logits.shape[0] != target_ids.shape[0]:
        raise LengthMismatch(f"logits 行数 {logits.shape[0]} 与目标长度 {target_ids.shape[0]} 不一致")
    keep = target_ids != pad_id
    count = int(keep.sum())
    dlogits = np.zeros_like(logits)
    if count == 0:
        return 0.0, dlogits
    rows = np.nonzero(keep)[0]
    logp = log_softmax(logits[rows], axis=-1)
    loss = -float(np.sum(logp[np.arange(rows.size), target_ids[rows]])) / count
    probs = softmax(logits[rows], axis=-1)
    probs[np.arange(rows.size), target_ids[rows]] -= 1.0
    dlogits[rows] = probs / count
    return loss, dlogits


def generate(F: np.ndarray, prompt_ids: Sequence[int], decoder: ReportDecoder, mode: str = "greedy",
             max_len: int = 64, beam_k: int = 1) -> List[int]:
    """生成 token 序列（包含结尾的 <eos>，若生成了的话）

    greedy: 每步取最大值，平局取最小 id。
    beam: 保留总对数概率最高的 beam_k 条前缀，平局按 id 序列字典序。
    """
    if mode not in ("greedy", "beam"):
        raise ValueError(f"未知解码模式: {mode}")
    if beam_k < 1:
        raise ValueError(f"beam_k 必须 >= 1: {beam_k}")
    max_len = min(max_len, decoder.n_positions - len(prompt_ids))
    if max_len <= 0:
        return []
    if mode == "greedy":
        out: List[int] = []
        while len(out) < max_len:
            token = int(np.argmax(decoder.next_log_probs(F, prompt_ids, out)))
            out.append(token)
            if token == EOS_ID:
                break
        return out

    beams: List[Tuple[float, List[int]]] = [(0.0, [])]
    for _ in range(max_len):
        if all(seq and seq[-1] == EOS_ID for _, seq in beams):
            break
        candidates: List[Tuple[float, List[int]]] = []
        for score, seq in beams:
            if seq and seq[-1] == EOS_ID:
                candidates.append((score, seq))
                continue
            logp = decoder.next_log_probs(F, prompt_ids, seq)
            for token in range(logp.shape[0]):
                candidates.append((score + float(logp[token]), seq + [token]))
        candidates.sort(key=lambda c: (-c[0], c[1]))
        beams = candidates[:beam_k]
    beams.sort(key=lambda c: (-c[0], c[1]))
    return beams[0][1]
