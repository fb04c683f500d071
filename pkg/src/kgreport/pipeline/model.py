"""端到端报告生成模型：视觉通路 + 多尺度知识图谱 + 跨模态桥 + 解码器

开关对应消融表的三个轴：
    use_rgcn_variant != "none"  图分支（RG）
    use_multiscale              多尺度融合（MF），关闭时只用最终预算的单尺度子图
    use_dvg                     疾病视觉记忆检索（DVG），关闭时前缀中没有 kv 段
全部关闭即 BASE：前缀只含投影后的 F_v。
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from ..common.config import PipelineConfig
from ..common.errors import CheckpointError, EmptyGraph, EmptyMemory
from ..features.node_encoder import encode_nodes, make_embedder
from ..kg.sampler import MultiScaleGraph, build_multiscale
from ..kg.store import KnowledgeGraph
from ..nn.base import Grads, Module, accumulate, with_prefix
from ..nn.bridge import CrossModalBridge, PrefixMatrix
from ..nn.checkpoint import load_checkpoint, save_checkpoint
from ..nn.decoder import DEFAULT_PROMPT, EOS_ID, ReportDecoder, Vocab, detokenize, generation_loss, tokenize
from ..nn.fusion import ScaleFusion
from ..nn.graph import GraphEncoder, GraphEncoderConfig, GraphStructure
from ..nn.vision import PatchEncoder, QFormer, Retriever, VisionMemory


@dataclass
class GraphInputs:
    """固定的图输入：每个尺度的节点特征与结构"""
    msg: MultiScaleGraph
    features: List[np.ndarray]
    structures: List[Optional[GraphStructure]] = field(default_factory=list)

    @property
    def sizes(self) -> List[int]:
        return [int(v.shape[0]) for v in self.features]


def prepare_graph_inputs(kg: KnowledgeGraph, config: PipelineConfig, encoder: GraphEncoder) -> GraphInputs:
    """按配置裁剪多尺度子图并编码节点"""
    budgets = list(config.scale_budgets) if config.use_multiscale else [config.final_budget]
    msg = build_multiscale(kg, budgets)
    embedder = make_embedder(config.embedder, config.external_embedder_cmd)
    features, structures = [], []
    for sub in msg.subgraphs:
        V = encode_nodes(sub.node_ids, kg.entities, embedder, config.d).values
        features.append(V)
        structures.append(encoder.structure(sub.n_nodes, sub.edge_index, sub.edge_type) if sub.n_nodes else None)
    return GraphInputs(msg=msg, features=features, structures=structures)


class ReportModel(Module):
    """参数名即检查点张量名：vision.* / graph_encoder.* / fusion.* / bridge.* / decoder.*"""

    def __init__(self, config: PipelineConfig, vocab: Vocab, kg: KnowledgeGraph):
        super().__init__()
        self.config = config
        self.vocab = vocab
        self.prompt_ids = tokenize(DEFAULT_PROMPT, vocab)
        rng = np.random.default_rng(config.seed)
        d, heads = config.d, config.heads

        self.patch_encoder = PatchEncoder(config.patch, d, rng)
        self.children["vision.patch"] = self.patch_encoder

        self.qformer: Optional[QFormer] = None
        self.retriever: Optional[Retriever] = None
        self.memory: Optional[VisionMemory] = None
        if config.use_dvg:
            self.memory = VisionMemory.from_graph(kg, config.n_visual)
            if self.memory.n == 0:
                raise EmptyMemory("启用了 DVG，但知识图谱中没有视觉 token（先用 kg build 加入语料激活图）")
            if config.retrieval_query == "qformer":
                self.qformer = QFormer(d, heads, rng=rng)
                self.children["vision.qformer"] = self.qformer
            self.retriever = Retriever(d, kg.d_vision, heads, rng)
            self.children["vision.retrieve"] = self.retriever

        self.graph_encoder: Optional[GraphEncoder] = None
        self.fusion: Optional[ScaleFusion] = None
        self.graph: Optional[GraphInputs] = None
        if config.use_graph:
            self.graph_encoder = GraphEncoder(GraphEncoderConfig(
                variant=config.use_rgcn_variant,
                layers=config.graph_layers,
                d_in=d,
                d_hidden=d,
                d_out=d,
                add_inverse_relations=config.add_inverse_relations,
                final_activation=config.final_activation,
                seed=config.seed,
            ))
            self.children["graph_encoder"] = self.graph_encoder
            self.graph = prepare_graph_inputs(kg, config, self.graph_encoder)
            final_nodes = self.graph.sizes[config.final_scale_index if config.use_multiscale else -1]
            if final_nodes == 0:
                raise EmptyGraph(f"最终尺度没有节点 (budgets={self.graph.msg.budgets})，请增大预算")
            logger.info(f"图分支: variant={config.use_rgcn_variant}, 各尺度节点={self.graph.sizes}, final_nodes={final_nodes}")
            if config.use_multiscale:
                self.fusion = ScaleFusion(len(self.graph.sizes), max(config.scale_budgets), d, heads,
                                          config.residual, rng)
                self.children["fusion"] = self.fusion

        self.bridge = CrossModalBridge(d, config.d_dec, heads, config.tie_projections, rng)
        self.children["bridge"] = self.bridge
        self.decoder = ReportDecoder(len(vocab), config.d_dec, heads, config.decoder_layers,
                                     len(self.prompt_ids) + config.max_len, rng)
        self.children["decoder"] = self.decoder
        self._logged_spans = False

    # ---- 图分支 ----

    def graph_forward(self) -> Tuple[Optional[np.ndarray], Optional[dict]]:
        """返回 (X_final, cache)；图分支关闭时为 (None, None)"""
        if self.graph is None:
            return None, None
        X_list, enc_caches = [], []
        for V, S in zip(self.graph.features, self.graph.structures):
            if S is None:
                X_list.append(np.zeros((0, self.config.d)))
                enc_caches.append(None)
                continue
            h, c = self.graph_encoder.forward(V, S)
            X_list.append(h)
            enc_caches.append(c)
        cache = {"enc": enc_caches}
        if self.fusion is not None:
            fused, fcache = self.fusion.forward(X_list, self.config.final_scale_index)
            cache["fusion"] = fcache
            return fused.final, cache
        return X_list[0], cache

    def graph_backward(self, dX_final: np.ndarray, cache: dict) -> Grads:
        grads: Grads = {}
        if self.fusion is not None:
            dX2 = self.fusion.final_gradient(dX_final, cache["fusion"], self.config.final_scale_index)
            parts, g = self.fusion.backward(dX2, cache["fusion"])
            grads.update(with_prefix(g, "fusion"))
        else:
            parts = [dX_final]
        for dpart, c in zip(parts, cache["enc"]):
            if c is None:
                continue
            _, g = self.graph_encoder.backward(dpart, c)
            accumulate(grads, with_prefix(g, "graph_encoder"))
        return grads

    # ---- 前缀 ----

    def prefix_forward(self, image: np.ndarray, X_final: Optional[np.ndarray]) -> Tuple[PrefixMatrix, dict]:
        F_v, pcache = self.patch_encoder.forward(image)
        streams: Dict[str, Optional[np.ndarray]] = {"v": F_v}
        cache: dict = {"patch": pcache}
        if self.retriever is not None:
            query = F_v
            if self.qformer is not None:
                query, cache["qformer"] = self.qformer.forward(F_v)
            streams["kv"], cache["retrieve"] = self.retriever.forward(query, self.memory)
        if X_final is not None:
            streams["kg2v"], cache["kg2v"] = self.bridge.kg2v(F_v, X_final)
            streams["v2kg"], cache["v2kg"] = self.bridge.v2kg(X_final, F_v)
        prefix, cache["assemble"] = self.bridge.assemble_prefix(streams)
        if not self._logged_spans:
            logger.info(f"前缀矩阵: n_f={prefix.n_f}, spans={prefix.span_sizes()}")
            self._logged_spans = True
        return prefix, cache

    def prefix_backward(self, dF: np.ndarray, cache: dict) -> Tuple[Grads, Optional[np.ndarray]]:
        """返回 (grads, dX_final)"""
        dstreams, g = self.bridge.assemble_backward(dF, cache["assemble"])
        grads = with_prefix(g, "bridge")
        dF_v = dstreams["v"].copy()
        dX_final = None
        if "retrieve" in cache:
            dquery, g = self.retriever.backward(dstreams["kv"], cache["retrieve"])
            accumulate(grads, with_prefix(g, "vision.retrieve"))
            if self.qformer is not None:
                dquery, g = self.qformer.backward(dquery, cache["qformer"])
                accumulate(grads, with_prefix(g, "vision.qformer"))
            dF_v += dquery
        if "kg2v" in cache:
            dq, dkv, g = self.bridge.kg2v_backward(dstreams["kg2v"], cache["kg2v"])
            accumulate(grads, with_prefix(g, "bridge"))
            dF_v += dq
            dX_final = dkv
            dq, dkv, g = self.bridge.v2kg_backward(dstreams["v2kg"], cache["v2kg"])
            accumulate(grads, with_prefix(g, "bridge"))
            dX_final = dX_final + dq
            dF_v += dkv
        accumulate(grads, with_prefix(self.patch_encoder.backward(dF_v, cache["patch"]), "vision.patch"))
        return grads, dX_final

    # ---- 训练与生成 ----

    def target_ids(self, report: str) -> List[int]:
        """报告 token + <eos>，超过 max_len 时截断"""
        ids = tokenize(report, self.vocab) + [EOS_ID]
        if len(ids) > self.config.max_len:
            logger.warning(f"目标长度 {len(ids)} 超过 max_len={self.config.max_len}，已截断")
            ids = ids[: self.config.max_len]
        return ids

    def loss_and_grads(self, batch: Sequence[Tuple[np.ndarray, Sequence[int]]]) -> Tuple[float, Grads]:
        """一个 batch 的平均生成损失与全部参数梯度

        Args:
            batch: [(图像, 目标 token id)]

        Returns:
            (loss, grads)
        """
        X_final, gcache = self.graph_forward()
        scale = 1.0 / len(batch)
        total_loss = 0.0
        grads: Grads = {}
        dX_total = np.zeros_like(X_final) if X_final is not None else None
        for image, target in batch:
            prefix, pcache = self.prefix_forward(image, X_final)
            logits, dcache = self.decoder.forward(prefix.F, self.prompt_ids, target)
            loss, dlogits = generation_loss(logits, target)
            total_loss += loss * scale
            dF, g = self.decoder.backward(dlogits * scale, dcache)
            accumulate(grads, with_prefix(g, "decoder"))
            g, dX = self.prefix_backward(dF, pcache)
            accumulate(grads, g)
            if dX is not None:
                dX_total += dX
        if X_final is not None:
            accumulate(grads, self.graph_backward(dX_total, gcache))
        return total_loss, grads

    def generate_ids(self, image: np.ndarray, X_final: Optional[np.ndarray] = None) -> List[int]:
        if X_final is None and self.graph is not None:
            X_final, _ = self.graph_forward()
        prefix, _ = self.prefix_forward(image, X_final)
        return self.decoder.generate(prefix.F, self.prompt_ids, self.config.decode_mode,
                                     self.config.max_len, self.config.beam_k)

    def generate_report(self, image: np.ndarray, X_final: Optional[np.ndarray] = None) -> str:
        return detokenize(self.generate_ids(image, X_final), self.vocab)


def build_vocab(reports: Sequence[str]) -> Vocab:
    """语料报告 + 提示词"""
    return Vocab.build(list(reports) + [DEFAULT_PROMPT])


def sidecar_paths(checkpoint_path: str) -> Tuple[Path, Path]:
    """(<stem>.vocab.jsonl, <stem>.config.yaml)"""
    p = Path(checkpoint_path)
    return p.with_suffix(".vocab.jsonl"), p.with_suffix(".config.yaml")


def save_model(model: ReportModel, path: str) -> None:
    save_checkpoint(path, model.parameters())
    vocab_path, config_path = sidecar_paths(path)
    model.vocab.save(str(vocab_path))
    model.config.save(str(config_path))
    logger.info(f"模型已保存: {path} (参数量 {model.n_parameters()})")


def load_model(path: str, kg: KnowledgeGraph, config: Optional[PipelineConfig] = None) -> ReportModel:
    """读取检查点与旁路文件并重建模型

    Args:
        path: 检查点路径
        kg: 训练时使用的知识图谱
        config: 覆盖旁路配置（只应修改解码相关字段）

    Returns:
        ReportModel
    """
    vocab_path, config_path = sidecar_paths(path)
    for p in (vocab_path, config_path):
        if not p.exists():
            raise CheckpointError(f"缺少检查点旁路文件: {p}")
    if config is None:
        config = PipelineConfig.from_file(str(config_path))
    model = ReportModel(config, Vocab.load(str(vocab_path)), kg)
    tensors = load_checkpoint(path)
    extra = sorted(set(tensors) - set(model.parameters()))
    if extra:
        raise CheckpointError(f"检查点包含模型中不存在的张量: {extra[:5]}")
    model.load_parameters(tensors)
    logger.info(f"模型已加载: {path}")
    return model
